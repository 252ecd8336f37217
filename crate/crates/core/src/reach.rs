//! Reachable-pixel masks over boxes of projected segments.
//!
//! Given an axis-aligned box of segment endpoint coordinates (the image of a
//! state set under the border projection), [`spatial_mask`] marks every pixel
//! that any segment in the box could light, and provably no others. Two sound
//! upper bounds on the per-pixel score are intersected:
//!
//! - an interval-arithmetic forward pass through the layered renderer, with
//!   the line-side residuals kept in factored form for tightness, and
//! - a two-corner bound driven by interval Jacobian bounds: evaluate the
//!   score at one box corner per bound side and pay an inner-product
//!   correction for every input whose derivative sign is uncertain.
//!
//! The correction term is derived by walking one coordinate at a time from
//! the evaluation corner to an arbitrary box point; each step costs at most
//! its Jacobian bound times the box width, and only the sign-uncertain
//! coordinates contribute. Both bounds hold for the exact real-valued score,
//! so a pixel is excluded only when no segment in the box can light it.

use crate::camera::ImageSegment;
use crate::image::{BinaryImage, PixelRect};
use crate::interval::{Interval, IntervalBox, IntervalMatrix};
use crate::render::{pixel_score, pixel_span, render_segment};

/// Absorbs f64 rounding in the two-corner bound, which is evaluated in plain
/// floating point. Widening an upper bound only over-includes pixels.
const CORNER_BOUND_GUARD: f64 = 1e-6;

/// Segment box: intervals for `(x1, y1, x2, y2)`.
pub type SegmentBox = IntervalBox<4>;

fn corner_residual_box(b: &SegmentBox, u: f64, v: f64) -> Interval {
    let [x1, y1, x2, y2] = b.dims;
    // (u - x1)(y2 - y1) - (v - y1)(x2 - x1), kept factored.
    x1.neg()
        .add_scalar(u)
        .mul(y2.sub(y1))
        .sub(y1.neg().add_scalar(v).mul(x2.sub(x1)))
}

/// Interval values of the 16 per-pixel forms over a segment box. Matches
/// [`crate::render::pixel_forms`] row for row, but evaluates the line-side
/// rows in factored form instead of through the cross-term feature.
pub fn forms_box(b: &SegmentBox, k: u32, l: u32) -> [Interval; 16] {
    let [x1, y1, x2, y2] = b.dims;
    let (kf, lf) = (k as f64, l as f64);
    [
        x1.add_scalar(-(kf - 1.0)),
        x1.add_scalar(-kf),
        y1.add_scalar(-(lf - 1.0)),
        y1.add_scalar(-lf),
        x2.add_scalar(-(kf - 1.0)),
        x2.add_scalar(-kf),
        y2.add_scalar(-(lf - 1.0)),
        y2.add_scalar(-lf),
        corner_residual_box(b, kf - 1.0, lf),
        corner_residual_box(b, kf, lf - 1.0),
        x1.add(y1).add_scalar(-(kf + lf - 1.0)),
        x2.add(y2).add_scalar(-(kf + lf - 1.0)),
        corner_residual_box(b, kf - 1.0, lf - 1.0),
        corner_residual_box(b, kf, lf),
        x1.sub(y1).add_scalar(-(kf - lf)),
        x2.sub(y2).add_scalar(-(kf - lf)),
    ]
}

/// Range of the opposition unit `-|p+q| + |p| + |q|` over independent
/// interval inputs. That expression equals `2 min(|p|, |q|)` when the signs
/// strictly oppose and is exactly zero otherwise, so a sign-case evaluation
/// avoids the catastrophic cancellation the literal formula suffers in
/// interval arithmetic: same-sign boxes get the exact point zero instead of
/// a few ulps of slop, which is what lets masks exclude unlit pixels.
fn opposition_interval(p: Interval, q: Interval) -> Interval {
    // Negation, min, max and doubling are exact in IEEE arithmetic, so no
    // further outward rounding is needed on top of the already-enclosing
    // inputs.
    let pos_neg = if p.hi > 0.0 && q.lo < 0.0 {
        2.0 * p.hi.min(-q.lo)
    } else {
        0.0
    };
    let neg_pos = if p.lo < 0.0 && q.hi > 0.0 {
        2.0 * (-p.lo).min(q.hi)
    } else {
        0.0
    };
    let hi = pos_neg.max(neg_pos);
    let lo = if p.lo > 0.0 && q.hi < 0.0 {
        2.0 * p.lo.min(-q.hi)
    } else if p.hi < 0.0 && q.lo > 0.0 {
        2.0 * (-p.hi).min(q.lo)
    } else {
        0.0
    };
    Interval::new(lo, hi)
}

fn opposition_box(forms: &[Interval; 16]) -> [Interval; 8] {
    std::array::from_fn(|i| opposition_interval(forms[2 * i], forms[2 * i + 1]))
}

fn min_pair_box(opp: &[Interval; 8]) -> [Interval; 4] {
    std::array::from_fn(|i| opp[2 * i].min_with(opp[2 * i + 1]))
}

/// Interval enclosure of the pixel score over a segment box.
pub fn pixel_score_box(b: &SegmentBox, k: u32, l: u32) -> Interval {
    let mins = min_pair_box(&opposition_box(&forms_box(b, k, l)));
    mins.iter()
        .fold(Interval::point(0.0), |acc, m| acc.add(m.max_scalar(0.0)))
}

fn sign_interval(v: Interval) -> Interval {
    if v.lo > 0.0 {
        Interval::point(1.0)
    } else if v.hi < 0.0 {
        Interval::point(-1.0)
    } else {
        Interval::new(-1.0, 1.0)
    }
}

/// Interval bounds on the gradient of the pixel score with respect to the
/// four endpoint coordinates, valid across the whole box. Built by chaining
/// interval Jacobians of the renderer's stages; at kinks the enclosure
/// covers every limiting gradient, which is what the two-corner bound needs.
pub fn score_jacobian_box(b: &SegmentBox, k: u32, l: u32) -> IntervalMatrix<1, 4> {
    let [x1, y1, x2, y2] = b.dims;
    let (kf, lf) = (k as f64, l as f64);
    let forms = forms_box(b, k, l);

    // Stage 1: form gradients. Constant rows except the line-side residuals,
    // whose gradient at corner (u, v) is (v - y2, x2 - u, y1 - v, u - x1).
    let mut j_forms = IntervalMatrix::<16, 4>::zeros();
    let residual_row = |u: f64, v: f64| -> [Interval; 4] {
        [
            y2.neg().add_scalar(v),
            x2.add_scalar(-u),
            y1.add_scalar(-v),
            x1.neg().add_scalar(u),
        ]
    };
    let constant_rows: [(usize, [f64; 4]); 12] = [
        (0, [1.0, 0.0, 0.0, 0.0]),
        (1, [1.0, 0.0, 0.0, 0.0]),
        (2, [0.0, 1.0, 0.0, 0.0]),
        (3, [0.0, 1.0, 0.0, 0.0]),
        (4, [0.0, 0.0, 1.0, 0.0]),
        (5, [0.0, 0.0, 1.0, 0.0]),
        (6, [0.0, 0.0, 0.0, 1.0]),
        (7, [0.0, 0.0, 0.0, 1.0]),
        (10, [1.0, 1.0, 0.0, 0.0]),
        (11, [0.0, 0.0, 1.0, 1.0]),
        (14, [1.0, -1.0, 0.0, 0.0]),
        (15, [0.0, 0.0, 1.0, -1.0]),
    ];
    for (row, w) in constant_rows {
        for c in 0..4 {
            j_forms.set(row, c, Interval::point(w[c]));
        }
    }
    let corners = [(8, kf - 1.0, lf), (9, kf, lf - 1.0), (12, kf - 1.0, lf - 1.0), (13, kf, lf)];
    for (row, u, v) in corners {
        let r = residual_row(u, v);
        for c in 0..4 {
            j_forms.set(row, c, r[c]);
        }
    }

    // Stage 2: opposition layer, d/dp [-|p+q| + |p| + |q|] = sgn(p) - sgn(p+q).
    let mut j_opp = IntervalMatrix::<8, 16>::zeros();
    for i in 0..8 {
        let (p, q) = (forms[2 * i], forms[2 * i + 1]);
        let s = sign_interval(p.add(q));
        j_opp.set(i, 2 * i, sign_interval(p).sub(s));
        j_opp.set(i, 2 * i + 1, sign_interval(q).sub(s));
    }

    // Stage 3: min over pairs; selector weights in [0, 1] unless resolved.
    let opp = opposition_box(&forms);
    let mut j_min = IntervalMatrix::<4, 8>::zeros();
    for i in 0..4 {
        let (a, c) = (opp[2 * i], opp[2 * i + 1]);
        let (wa, wc) = if a.hi < c.lo {
            (Interval::point(1.0), Interval::point(0.0))
        } else if c.hi < a.lo {
            (Interval::point(0.0), Interval::point(1.0))
        } else {
            (Interval::new(0.0, 1.0), Interval::new(0.0, 1.0))
        };
        j_min.set(i, 2 * i, wa);
        j_min.set(i, 2 * i + 1, wc);
    }

    // Stage 4: ReLU derivative and the summing readout.
    let mins = min_pair_box(&opp);
    let mut readout = IntervalMatrix::<1, 4>::zeros();
    for i in 0..4 {
        let d = if mins[i].lo > 0.0 {
            Interval::point(1.0)
        } else if mins[i].hi <= 0.0 {
            Interval::point(0.0)
        } else {
            Interval::new(0.0, 1.0)
        };
        readout.set(0, i, d);
    }

    readout.mul(&j_min).mul(&j_opp).mul(&j_forms)
}

/// Two-corner score bounds over the box, from Jacobian sign information.
///
/// Per input coordinate: if the centred Jacobian entry is nonnegative the
/// lower evaluation corner takes the low end and the correction pays
/// `min(0, J_lo)` times the width; the mirrored rule applies otherwise. The
/// returned interval contains the exact score of every segment in the box.
pub fn mixed_monotonicity_score_bounds(b: &SegmentBox, k: u32, l: u32) -> Interval {
    let j = score_jacobian_box(b, k, l);
    let mut lo_corner = [0.0; 4];
    let mut hi_corner = [0.0; 4];
    let mut correction = 0.0;
    for i in 0..4 {
        let ji = j.get(0, i);
        let width = b.dims[i].width();
        if ji.mid() >= 0.0 {
            lo_corner[i] = b.dims[i].lo;
            hi_corner[i] = b.dims[i].hi;
            correction += -ji.lo.min(0.0) * width;
        } else {
            lo_corner[i] = b.dims[i].hi;
            hi_corner[i] = b.dims[i].lo;
            correction += ji.hi.max(0.0) * width;
        }
    }
    let lo_seg = ImageSegment::from_array(lo_corner);
    let hi_seg = ImageSegment::from_array(hi_corner);
    let lo = pixel_score(&lo_seg, k, l) - correction;
    let hi = pixel_score(&hi_seg, k, l) + correction;
    Interval::new(lo.min(hi), hi.max(lo))
}

/// A reachability mask: which pixels any segment in a box can light.
#[derive(Clone, Debug, PartialEq)]
pub struct SpatialMask {
    pub image: BinaryImage,
    /// Pixel rectangle outside which no segment in the box reaches; the
    /// mask's lit pixels all fall inside it.
    pub window: PixelRect,
}

/// Candidate window for a segment box: cells its coordinate hull can touch.
fn candidate_window(b: &SegmentBox, width: u32, height: u32) -> Option<PixelRect> {
    let xs = Interval::hull(b.dims[0], b.dims[2]);
    let ys = Interval::hull(b.dims[1], b.dims[3]);
    let (k0, k1) = pixel_span(xs.lo, xs.hi, width)?;
    let (l0, l1) = pixel_span(ys.lo, ys.hi, height)?;
    Some(PixelRect::new(k0, l0, k1, l1))
}

/// Sound per-pixel reachability over the box: a pixel is cleared only when
/// the intersected upper bounds prove its score is zero for every segment.
pub fn spatial_mask(b: &SegmentBox, width: u32, height: u32) -> SpatialMask {
    let mut image = BinaryImage::new(width, height);
    let Some(window) = candidate_window(b, width, height) else {
        return SpatialMask { image, window: PixelRect::new(1, 1, 0, 0) };
    };
    for (k, l) in window.iter() {
        let interval_ub = pixel_score_box(b, k, l).hi;
        if interval_ub <= 0.0 {
            continue;
        }
        let corner_ub = mixed_monotonicity_score_bounds(b, k, l).hi + CORNER_BOUND_GUARD;
        if interval_ub.min(corner_ub) > 0.0 {
            image.set(k, l, true);
        }
    }
    SpatialMask { image, window }
}

/// Under-approximating reference: the union of exact renders over a
/// `samples_per_axis`^4 grid of the box (corners included). Every lit pixel
/// here must appear in [`spatial_mask`]'s image.
pub fn spatial_mask_oracle(
    b: &SegmentBox,
    width: u32,
    height: u32,
    samples_per_axis: usize,
) -> BinaryImage {
    let n = samples_per_axis.max(2);
    let coord = |iv: Interval, i: usize| iv.lo + iv.width() * i as f64 / (n - 1) as f64;
    let mut out = BinaryImage::new(width, height);
    for i0 in 0..n {
        for i1 in 0..n {
            for i2 in 0..n {
                for i3 in 0..n {
                    let seg = ImageSegment::new(
                        coord(b.dims[0], i0),
                        coord(b.dims[1], i1),
                        coord(b.dims[2], i2),
                        coord(b.dims[3], i3),
                    );
                    out.or_inplace(&render_segment(&seg, width, height));
                }
            }
        }
    }
    out
}

/// Keep only the pixels the mask allows.
pub fn apply_mask(img: &BinaryImage, mask: &SpatialMask) -> BinaryImage {
    img.and(&mask.image)
}
