//! Certified runway-line perception.
//!
//! The crate renders monochrome images of the two runway border lines as seen
//! from an aircraft state, bounds where those lines can appear over whole
//! state sets, filters camera images against those bounds plus a geometric
//! line model, and turns accepted images back into state estimates with a
//! certified error radius.
//!
//! Modules, bottom to top:
//!
//! - [`exact`]: exact signs for the polynomial predicates behind pixel
//!   decisions.
//! - [`interval`]: outward-rounded interval arithmetic.
//! - [`image`]: bit-packed monochrome images.
//! - [`camera`]: the pinhole projection of runway borders and its Jacobian,
//!   inverse, and interval extension.
//! - [`render`]: the reference rasterizer and the structured (layered)
//!   rasterizer that reachability analysis consumes.
//! - [`reach`]: per-pixel reachability masks over state boxes.
//! - [`hough`]: line-parameter ranges, candidate enumeration, and the
//!   geometric acceptance filter.
//! - [`pipeline`]: partitioned filter banks, state estimation, and shielding.

pub mod camera;
pub mod exact;
pub mod hough;
pub mod image;
pub mod interval;
pub mod pipeline;
pub mod reach;
pub mod render;
