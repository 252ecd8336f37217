//! Rasterization of projected border segments.
//!
//! A pixel `(k, l)` covers the open cell `(k-1, k) x (l-1, l)` in continuous
//! image coordinates, and it lights up exactly when the closed segment meets
//! that open cell. Two independent implementations of that rule live here:
//!
//! - [`render_segment_oracle`] sweeps pixel rows, solves the segment's
//!   parameter interval per row with exact rational comparisons, and fills
//!   the lit column span. It is the reference everything else is tested
//!   against.
//! - [`render_segment`] decides each pixel from a fixed bank of affine forms
//!   in the segment endpoints (built by [`pixel_forms`]) combined through
//!   absolute-value, min, and ReLU stages. The same layered structure is
//!   what the reachability analysis bounds over boxes of segments, so the
//!   renderer and the analysis provably talk about the same function.
//!
//! Both paths decide signs exactly; zero-area touches (a segment grazing a
//! cell edge or corner) never light a pixel in either.

use crate::camera::{
    project_line, AircraftState, CameraIntrinsics, GeometryError, ImageSegment, RunwaySide,
    RunwaySpec,
};
use crate::exact::{det2_sign, sign_diff3, sign_prod_diff, Dd};
use crate::image::BinaryImage;

/// Quadratic feature of a segment: the cross term `x1*y2 - y1*x2`. With this
/// appended to the endpoint coordinates, the line-side residual at any fixed
/// point becomes an affine form; see [`pixel_forms`].
pub fn det_feature(seg: &ImageSegment) -> f64 {
    seg.x1 * seg.y2 - seg.y1 * seg.x2
}

/// Feature vector the per-pixel forms act on: endpoints plus cross term.
pub fn features(seg: &ImageSegment) -> [f64; 5] {
    [seg.x1, seg.y1, seg.x2, seg.y2, det_feature(seg)]
}

/// The 16 affine forms deciding one pixel, as weights over [`features`].
///
/// Rows pair up into opposition tests (consecutive rows must have strictly
/// opposite signs), and the eight tests pair up into four conjunctions:
///
/// - rows 0-3: start endpoint strictly inside the cell (x then y),
/// - rows 4-7: end endpoint strictly inside the cell,
/// - rows 8-11: segment properly crosses the cell diagonal from the
///   bottom-left to the top-right corner,
/// - rows 12-15: same for the other diagonal.
///
/// The pixel is lit iff at least one conjunction holds; that is exactly
/// "closed segment meets open cell".
#[derive(Clone, Debug, PartialEq)]
pub struct PixelLinearForms {
    pub k: u32,
    pub l: u32,
    pub weights: [[f64; 5]; 16],
    pub bias: [f64; 16],
}

/// Side-of-line residual of the segment's supporting line at a fixed point
/// `(u, v)`, written as a bias-free affine form over [`features`].
fn line_side_row(u: f64, v: f64) -> [f64; 5] {
    [v, -u, -v, u, -1.0]
}

pub fn pixel_forms(k: u32, l: u32) -> PixelLinearForms {
    let (kf, lf) = (k as f64, l as f64);
    let mut weights = [[0.0; 5]; 16];
    let mut bias = [0.0; 16];
    // Start endpoint between the cell's x edges, then y edges.
    weights[0] = [1.0, 0.0, 0.0, 0.0, 0.0];
    bias[0] = -(kf - 1.0);
    weights[1] = [1.0, 0.0, 0.0, 0.0, 0.0];
    bias[1] = -kf;
    weights[2] = [0.0, 1.0, 0.0, 0.0, 0.0];
    bias[2] = -(lf - 1.0);
    weights[3] = [0.0, 1.0, 0.0, 0.0, 0.0];
    bias[3] = -lf;
    // End endpoint.
    weights[4] = [0.0, 0.0, 1.0, 0.0, 0.0];
    bias[4] = -(kf - 1.0);
    weights[5] = [0.0, 0.0, 1.0, 0.0, 0.0];
    bias[5] = -kf;
    weights[6] = [0.0, 0.0, 0.0, 1.0, 0.0];
    bias[6] = -(lf - 1.0);
    weights[7] = [0.0, 0.0, 0.0, 1.0, 0.0];
    bias[7] = -lf;
    // Diagonal bottom-left (k-1, l) to top-right (k, l-1): its endpoints
    // against the segment's line, then the segment endpoints against the
    // diagonal's line x + y = k + l - 1.
    weights[8] = line_side_row(kf - 1.0, lf);
    weights[9] = line_side_row(kf, lf - 1.0);
    weights[10] = [1.0, 1.0, 0.0, 0.0, 0.0];
    bias[10] = -(kf + lf - 1.0);
    weights[11] = [0.0, 0.0, 1.0, 1.0, 0.0];
    bias[11] = -(kf + lf - 1.0);
    // Diagonal top-left (k-1, l-1) to bottom-right (k, l); the segment
    // endpoints go against the line x - y = k - l.
    weights[12] = line_side_row(kf - 1.0, lf - 1.0);
    weights[13] = line_side_row(kf, lf);
    weights[14] = [1.0, -1.0, 0.0, 0.0, 0.0];
    bias[14] = -(kf - lf);
    weights[15] = [0.0, 0.0, 1.0, -1.0, 0.0];
    bias[15] = -(kf - lf);
    PixelLinearForms { k, l, weights, bias }
}

impl PixelLinearForms {
    pub fn apply(&self, feat: &[f64; 5]) -> [f64; 16] {
        let mut out = [0.0; 16];
        for (i, o) in out.iter_mut().enumerate() {
            let w = &self.weights[i];
            *o = w
                .iter()
                .zip(feat)
                .map(|(wi, fi)| wi * fi)
                .sum::<f64>()
                + self.bias[i];
        }
        out
    }
}

/// Opposition stage: `-|p + q| + |p| + |q|` per consecutive pair. The result
/// is `2 * min(|p|, |q|)` when the pair has strictly opposite signs and 0
/// otherwise, so it is nonnegative and positive exactly on oppositions.
pub fn opposition_layer(forms: &[f64; 16]) -> [f64; 8] {
    let mut out = [0.0; 8];
    for (i, o) in out.iter_mut().enumerate() {
        let (p, q) = (forms[2 * i], forms[2 * i + 1]);
        *o = -(p + q).abs() + p.abs() + q.abs();
    }
    out
}

/// Conjunction stage: min over consecutive opposition pairs.
pub fn min_pair_layer(scores: &[f64; 8]) -> [f64; 4] {
    [
        scores[0].min(scores[1]),
        scores[2].min(scores[3]),
        scores[4].min(scores[5]),
        scores[6].min(scores[7]),
    ]
}

/// Full float forward pass: sum of ReLU over the four conjunction scores.
/// Positive exactly when some conjunction fires (in exact arithmetic); the
/// bit-level renderers decide the same predicate with exact signs.
pub fn pixel_score(seg: &ImageSegment, k: u32, l: u32) -> f64 {
    let feat = features(seg);
    let forms = pixel_forms(k, l).apply(&feat);
    min_pair_layer(&opposition_layer(&forms))
        .iter()
        .map(|m| m.max(0.0))
        .sum()
}

/// Sign of the segment-line residual at integer corner `(u, v)`, exact.
fn corner_side(seg: &ImageSegment, u: f64, v: f64) -> i8 {
    det2_sign(u, seg.x1, seg.y2, seg.y1, v, seg.y1, seg.x2, seg.x1)
}

/// Exact lit/unlit decision for pixel `(k, l)`: evaluates the four
/// conjunctions of [`pixel_forms`] with exact sign arithmetic.
pub fn pixel_lit(seg: &ImageSegment, k: u32, l: u32) -> bool {
    let (kf, lf) = (k as f64, l as f64);
    // Necessary condition: the segment's bounding box meets the open cell.
    if !(seg.x1.max(seg.x2) > kf - 1.0
        && seg.x1.min(seg.x2) < kf
        && seg.y1.max(seg.y2) > lf - 1.0
        && seg.y1.min(seg.y2) < lf)
    {
        return false;
    }
    let inside = |x: f64, y: f64| x > kf - 1.0 && x < kf && y > lf - 1.0 && y < lf;
    if inside(seg.x1, seg.y1) || inside(seg.x2, seg.y2) {
        return true;
    }
    // Proper crossing of the bottom-left/top-right diagonal.
    let s_bl = corner_side(seg, kf - 1.0, lf);
    let s_tr = corner_side(seg, kf, lf - 1.0);
    if s_bl as i32 * s_tr as i32 == -1 {
        let p1 = sign_diff3(seg.x1, -seg.y1, kf + lf - 1.0);
        let p2 = sign_diff3(seg.x2, -seg.y2, kf + lf - 1.0);
        if p1 as i32 * p2 as i32 == -1 {
            return true;
        }
    }
    // Proper crossing of the top-left/bottom-right diagonal.
    let s_tl = corner_side(seg, kf - 1.0, lf - 1.0);
    let s_br = corner_side(seg, kf, lf);
    if s_tl as i32 * s_br as i32 == -1 {
        let p1 = sign_diff3(seg.x1, seg.y1, kf - lf);
        let p2 = sign_diff3(seg.x2, seg.y2, kf - lf);
        if p1 as i32 * p2 as i32 == -1 {
            return true;
        }
    }
    false
}

/// 1-based pixel index range whose open cells the coordinate range
/// `[lo, hi]` can reach, clipped to `1..=limit`. `None` when no cell is
/// reachable. A coordinate exactly on a cell edge reaches only the far cell.
pub(crate) fn pixel_span(lo: f64, hi: f64, limit: u32) -> Option<(u32, u32)> {
    if !(lo.is_finite() && hi.is_finite()) {
        return None;
    }
    if hi <= 0.0 || lo >= limit as f64 {
        return None;
    }
    let first = (lo.floor() + 1.0).max(1.0) as u32;
    let last_f = if hi == hi.floor() { hi } else { hi.floor() + 1.0 };
    let last = last_f.min(limit as f64) as u32;
    (first <= last).then_some((first, last))
}

/// Pixel rows and columns a segment could touch, clipped to the frame.
fn clipped_bbox(seg: &ImageSegment, width: u32, height: u32) -> Option<(u32, u32, u32, u32)> {
    let (k0, k1) = pixel_span(seg.x1.min(seg.x2), seg.x1.max(seg.x2), width)?;
    let (l0, l1) = pixel_span(seg.y1.min(seg.y2), seg.y1.max(seg.y2), height)?;
    Some((k0, k1, l0, l1))
}

/// Renders one segment by exact per-pixel decisions over its bounding box.
pub fn render_segment(seg: &ImageSegment, width: u32, height: u32) -> BinaryImage {
    let mut img = BinaryImage::new(width, height);
    paint_segment(seg, &mut img);
    img
}

pub fn paint_segment(seg: &ImageSegment, img: &mut BinaryImage) {
    let Some((k0, k1, l0, l1)) = clipped_bbox(seg, img.width(), img.height()) else {
        return;
    };
    for l in l0..=l1 {
        for k in k0..=k1 {
            if pixel_lit(seg, k, l) {
                img.set(k, l, true);
            }
        }
    }
}

/// Renders both runway borders for a state; each border is projected and the
/// two rasters are OR-ed. Off-frame parts simply clip; an endpoint at or
/// behind the camera plane is an error.
pub fn render_runway(
    state: &AircraftState,
    runway: &RunwaySpec,
    intr: &CameraIntrinsics,
) -> Result<BinaryImage, GeometryError> {
    let mut img = BinaryImage::new(intr.width_px, intr.height_px);
    for side in RunwaySide::BOTH {
        let seg = project_line(state, runway, side, intr)?;
        paint_segment(&seg, &mut img);
    }
    Ok(img)
}

// ---------------------------------------------------------------------------
// Reference renderer: per-row parameter intervals with rational endpoints.
// ---------------------------------------------------------------------------

/// A bound on the segment parameter t: either an exact constant or a
/// rational `num / den` with `den > 0` and `num` held exactly.
#[derive(Clone, Copy, Debug)]
enum TBound {
    Zero,
    One,
    Frac { num: Dd, den: f64 },
}

#[derive(Clone, Copy, Debug)]
struct TEnd {
    bound: TBound,
    open: bool,
}

fn cmp_bounds(a: &TBound, b: &TBound) -> i8 {
    use TBound::*;
    match (a, b) {
        (Zero, Zero) | (One, One) => 0,
        (Zero, One) => -1,
        (One, Zero) => 1,
        (Zero, Frac { num, .. }) => -num.sign(),
        (Frac { num, .. }, Zero) => num.sign(),
        (One, Frac { num, den }) => {
            sign_prod_diff(Dd::from_f64(*den), Dd::from_f64(1.0), *num, Dd::from_f64(1.0))
        }
        (Frac { num, den }, One) => {
            sign_prod_diff(*num, Dd::from_f64(1.0), Dd::from_f64(*den), Dd::from_f64(1.0))
        }
        (Frac { num: n1, den: d1 }, Frac { num: n2, den: d2 }) => {
            sign_prod_diff(*n1, Dd::from_f64(*d2), *n2, Dd::from_f64(*d1))
        }
    }
}

/// Parameter interval for which the segment's y coordinate lies strictly
/// inside row `l`'s slab, intersected with t in [0, 1]. `None` when empty.
fn row_param_interval(seg: &ImageSegment, l: u32) -> Option<(TEnd, TEnd)> {
    let lf = l as f64;
    let dy = seg.y2 - seg.y1;
    let (mut lo, mut hi);
    if seg.y1 == seg.y2 {
        if seg.y1 > lf - 1.0 && seg.y1 < lf {
            lo = TEnd { bound: TBound::Zero, open: false };
            hi = TEnd { bound: TBound::One, open: false };
        } else {
            return None;
        }
    } else if dy > 0.0 {
        lo = TEnd { bound: TBound::Frac { num: Dd::diff(lf - 1.0, seg.y1), den: dy }, open: true };
        hi = TEnd { bound: TBound::Frac { num: Dd::diff(lf, seg.y1), den: dy }, open: true };
    } else {
        lo = TEnd { bound: TBound::Frac { num: Dd::diff(seg.y1, lf), den: -dy }, open: true };
        hi = TEnd { bound: TBound::Frac { num: Dd::diff(seg.y1, lf - 1.0), den: -dy }, open: true };
    }
    // Cap to t >= 0 (closed).
    match cmp_bounds(&lo.bound, &TBound::Zero) {
        c if c < 0 => lo = TEnd { bound: TBound::Zero, open: false },
        0 => lo.bound = TBound::Zero,
        _ => {}
    }
    // Cap to t <= 1 (closed).
    match cmp_bounds(&hi.bound, &TBound::One) {
        c if c > 0 => hi = TEnd { bound: TBound::One, open: false },
        0 => hi.bound = TBound::One,
        _ => {}
    }
    match cmp_bounds(&lo.bound, &hi.bound) {
        c if c > 0 => None,
        0 if lo.open || hi.open => None,
        _ => Some((lo, hi)),
    }
}

/// x coordinate of the segment at a parameter bound, for exact comparisons:
/// either an exact f64 or the rational `(x1 * den + num * dx) / den`.
enum XAt {
    Exact(f64),
    Rational { num: Dd, den: f64 },
}

fn x_at(seg: &ImageSegment, bound: &TBound) -> XAt {
    match bound {
        TBound::Zero => XAt::Exact(seg.x1),
        TBound::One => XAt::Exact(seg.x2),
        TBound::Frac { num, den } => XAt::Rational { num: *num, den: *den },
    }
}

/// Exact floor of the x value, plus whether it is exactly an integer.
/// The walk from the f64 hint is bounded; coordinates beyond ~1e9 pixels
/// would need a wider budget and are outside this renderer's domain.
fn exact_floor_x(seg: &ImageSegment, x: &XAt) -> (i64, bool) {
    match x {
        XAt::Exact(v) => {
            let f = v.floor();
            (f as i64, *v == f)
        }
        XAt::Rational { num, den } => {
            let dx = seg.x2 - seg.x1;
            // sign(x - m) where x = (x1 * den + num * dx) / den, den > 0.
            let cmp_vs = |m: f64| -> i8 {
                sign_prod_diff(Dd::diff(seg.x1, m), Dd::from_f64(*den), num.neg(), Dd::from_f64(dx))
            };
            let t_apx = num.approx() / den;
            let mut m = (seg.x1 + t_apx * dx).floor();
            for _ in 0..128 {
                let at_m = cmp_vs(m);
                if at_m < 0 {
                    m -= 1.0;
                    continue;
                }
                if cmp_vs(m + 1.0) >= 0 {
                    m += 1.0;
                    continue;
                }
                return (m as i64, at_m == 0);
            }
            panic!("floor refinement did not settle; coordinates out of supported range");
        }
    }
}

/// Reference rasterizer: row-by-row exact parameter intervals.
pub fn render_segment_oracle(seg: &ImageSegment, width: u32, height: u32) -> BinaryImage {
    let mut img = BinaryImage::new(width, height);
    let (y_lo, y_hi) = (seg.y1.min(seg.y2), seg.y1.max(seg.y2));
    if !(seg.x1.is_finite() && seg.x2.is_finite() && y_lo.is_finite() && y_hi.is_finite()) {
        return img;
    }
    if y_hi <= 0.0 || y_lo >= height as f64 {
        return img;
    }
    let l_first = (y_lo.floor() + 1.0).max(1.0) as u32;
    let l_last_f = if y_hi == y_hi.floor() { y_hi } else { y_hi.floor() + 1.0 };
    let l_last = l_last_f.min(height as f64) as u32;
    let dx = seg.x2 - seg.x1;

    for l in l_first..=l_last {
        let Some((t_lo, t_hi)) = row_param_interval(seg, l) else {
            continue;
        };
        if seg.x1 == seg.x2 {
            // One candidate column; an exactly-integer x sits on a cell edge
            // and lights nothing.
            let f = seg.x1.floor();
            if seg.x1 != f {
                let k = f as i64 + 1;
                if k >= 1 && k <= width as i64 {
                    img.set(k as u32, l, true);
                }
            }
            continue;
        }
        // Orient the x range by the sign of dx.
        let (b_min, b_max) = if dx > 0.0 { (t_lo, t_hi) } else { (t_hi, t_lo) };
        let x_min = x_at(seg, &b_min.bound);
        let x_max = x_at(seg, &b_max.bound);
        // Quick frame rejection on safe approximations.
        let slack = 64.0 + (seg.x1.abs() + dx.abs()) * 1e-12;
        let apx = |x: &XAt| -> f64 {
            match x {
                XAt::Exact(v) => *v,
                XAt::Rational { num, den } => seg.x1 + (num.approx() / den) * dx,
            }
        };
        if apx(&x_min) > width as f64 + slack || apx(&x_max) < -slack {
            continue;
        }
        let (floor_min, _) = exact_floor_x(seg, &x_min);
        let (floor_max, max_is_int) = exact_floor_x(seg, &x_max);
        let k_first = (floor_min + 1).max(1);
        let k_last = (floor_max + if max_is_int { 0 } else { 1 }).min(width as i64);
        for k in k_first..=k_last {
            img.set(k as u32, l, true);
        }
    }
    img
}
