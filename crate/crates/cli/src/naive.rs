//! Unconstrained Hough sweep over the whole image: the comparison baseline
//! that scores every line on a global (theta, rho) grid with no per-cell
//! masking or range restriction, so clutter that happens to line up scores
//! as well as the real runway borders.

use certl_core::hough::{line_coverage, HoughLine};
use certl_core::image::BinaryImage;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SweepLine {
    pub line: HoughLine,
    /// Lit pixels on the line's raster.
    pub support: usize,
    /// Total raster pixels inside the frame.
    pub raster_len: usize,
}

impl SweepLine {
    /// Raster pixels the image fails to light; 0 means the line is fully
    /// supported end to end.
    pub fn missing(&self) -> usize {
        self.raster_len - self.support
    }
}

/// Scores every grid line and returns those with at least `min_support` lit
/// pixels, strongest first (ties by angle, then offset).
pub fn sweep(
    observed: &BinaryImage,
    theta_step: f64,
    rho_step: f64,
    min_support: usize,
) -> Vec<SweepLine> {
    let diag = f64::from(observed.width()).hypot(f64::from(observed.height()));
    let mut out = Vec::new();
    let theta_count = (std::f64::consts::PI / theta_step).ceil() as i64;
    let rho_count = (diag / rho_step).ceil() as i64;
    for ti in 0..theta_count {
        let theta = -std::f64::consts::FRAC_PI_2 + (ti as f64 + 0.5) * theta_step;
        for ri in -rho_count..=rho_count {
            let line = HoughLine {
                theta,
                rho: ri as f64 * rho_step,
            };
            let (support, raster_len) = line_coverage(observed, &line);
            if support >= min_support.max(1) {
                out.push(SweepLine {
                    line,
                    support,
                    raster_len,
                });
            }
        }
    }
    out.sort_by(|a, b| {
        b.support
            .cmp(&a.support)
            .then(a.line.theta.total_cmp(&b.line.theta))
            .then(a.line.rho.total_cmp(&b.line.rho))
    });
    out
}
