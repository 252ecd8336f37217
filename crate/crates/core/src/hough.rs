//! Line parameters in Hough normal form and the geometric acceptance filter.
//!
//! A line is `x cos(theta) + y sin(theta) = rho` with `theta` folded into
//! `(-pi/2, pi/2]`. [`hough_range`] bounds the parameters of every segment in
//! an endpoint box, [`enumerate_candidates`] grids such a range, and
//! [`raster_line`] draws the one-pixel-per-column raster those candidates are
//! scored with.
//!
//! [`geometric_filter`] is the acceptance test run per partition cell: the
//! observed image is clipped to the cell's reachability mask and accepted
//! only if some segment renders to exactly that clip, with its line
//! parameters inside the cell's (slightly inflated) Hough range and its
//! endpoints near the cell's endpoint boxes. The witness segment is found by
//! a run-decomposition of the clip, a max-margin line fit through the run
//! corridor, and an exact re-render check, so acceptance never relies on the
//! fit heuristics being right: a bad fit fails the re-render and the cell is
//! rejected.

use crate::camera::ImageSegment;
use crate::image::{BinaryImage, PixelRect};
use crate::interval::Interval;
use crate::reach::{apply_mask, SegmentBox, SpatialMask};
use crate::render::{pixel_span, render_segment};
use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_2, PI};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum HoughError {
    #[error("segment endpoints coincide, direction undefined")]
    DegenerateSegment,
    #[error("endpoint cell fixes no usable line direction")]
    DegenerateCell,
}

/// Below this direction magnitude a cell is treated as directionless.
const DEGENERATE_DIRECTION: f64 = 1e-9;
/// Below this |sin(theta)| the raster solves per row instead of per column.
const AXIS_EPS: f64 = 1e-9;
/// Witness endpoints may sit this many pixels outside the cell endpoint box.
const ENDPOINT_SLACK: f64 = 2.0;
/// Witness rho may sit this many pixels outside the cell range.
const RHO_SLACK: f64 = 2.0;
/// Minimum corridor half-width for a line fit to count as feasible.
const FIT_MARGIN_MIN: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HoughLine {
    pub theta: f64,
    pub rho: f64,
}

/// Normal-form parameters of the line through a segment.
pub fn line_to_hough(seg: &ImageSegment) -> Result<HoughLine, HoughError> {
    let num = seg.x1 - seg.x2;
    let den = seg.y2 - seg.y1;
    if num == 0.0 && den == 0.0 {
        return Err(HoughError::DegenerateSegment);
    }
    let mut theta = num.atan2(den);
    if theta > FRAC_PI_2 {
        theta -= PI;
    } else if theta <= -FRAC_PI_2 {
        theta += PI;
    }
    let rho = seg.x1 * theta.cos() + seg.y1 * theta.sin();
    Ok(HoughLine { theta, rho })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HoughRange {
    pub theta: Interval,
    pub rho: Interval,
}

impl HoughRange {
    pub fn contains(&self, line: &HoughLine) -> bool {
        self.theta.contains(line.theta) && self.rho.contains(line.rho)
    }

    /// Containment with slack, checking the `(theta + pi, -rho)` alias too so
    /// lines folded across the `+-pi/2` boundary still match.
    pub fn contains_with_slack(&self, line: &HoughLine, d_theta: f64, d_rho: f64) -> bool {
        let t = self.theta.inflate(d_theta);
        let r = self.rho.inflate(d_rho);
        let hit = |theta: f64, rho: f64| t.contains(theta) && r.contains(rho);
        hit(line.theta, line.rho)
            || hit(line.theta + PI, -line.rho)
            || hit(line.theta - PI, -line.rho)
    }

    /// Is the angle within slack of the range, modulo the pi fold?
    pub fn angle_consistent(&self, theta: f64, d_theta: f64) -> bool {
        let t = self.theta.inflate(d_theta);
        t.contains(theta) || t.contains(theta + PI) || t.contains(theta - PI)
    }

    /// Does some line of the family pass within `d_rho` of the point? This
    /// is the fold-free position check: it never compares rho values taken
    /// at different angles.
    pub fn passes_near(&self, x: f64, y: f64, d_rho: f64) -> bool {
        let rho_at_point = Interval::point(x)
            .mul(self.theta.cos())
            .add(Interval::point(y).mul(self.theta.sin()));
        rho_at_point.intersect(self.rho.inflate(d_rho)).is_some()
    }
}

/// Bounds on the folded parameters of every segment in the endpoint box.
///
/// The fold angle is `atan` of the direction ratio; when the denominator's
/// sign is uncertain across the box the angle wraps, so the full fold range
/// is returned and only a box whose centre has no direction at all is an
/// error.
pub fn hough_range(b: &SegmentBox) -> Result<HoughRange, HoughError> {
    let num = b.dims[0].sub(b.dims[2]);
    let den = b.dims[3].sub(b.dims[1]);
    let theta = if den.contains(0.0) {
        if num.contains(0.0)
            && num.mid().abs() < DEGENERATE_DIRECTION
            && den.mid().abs() < DEGENERATE_DIRECTION
        {
            return Err(HoughError::DegenerateCell);
        }
        Interval::new(-FRAC_PI_2, FRAC_PI_2)
    } else {
        num.div(den).atan()
    };
    let rho = b.dims[0].mul(theta.cos()).add(b.dims[1].mul(theta.sin()));
    Ok(HoughRange { theta, rho })
}

#[derive(Clone, Debug, PartialEq)]
pub struct CandidateSet {
    pub lines: Vec<HoughLine>,
    pub theta_step: f64,
    pub rho_step: f64,
}

/// Grid resolution for candidate enumeration: half a pixel in rho, and the
/// angle that tilts a line by one pixel across the longer image side.
pub fn candidate_steps(width: u32, height: u32) -> (f64, f64) {
    ((1.0 / f64::from(width.max(height))).atan(), 0.5)
}

/// Evenly spaced parameter grid over the range, both endpoints included, at
/// spacing no coarser than [`candidate_steps`].
pub fn enumerate_candidates(range: &HoughRange, width: u32, height: u32) -> CandidateSet {
    let (theta_step, rho_step) = candidate_steps(width, height);
    let axis = |iv: Interval, step: f64| -> Vec<f64> {
        let n = (iv.width() / step).ceil() as usize + 1;
        if n <= 1 {
            return vec![iv.mid()];
        }
        (0..n)
            .map(|i| iv.lo + iv.width() * i as f64 / (n - 1) as f64)
            .collect()
    };
    let thetas = axis(range.theta, theta_step);
    let rhos = axis(range.rho, rho_step);
    let mut lines = Vec::with_capacity(thetas.len() * rhos.len());
    for &theta in &thetas {
        for &rho in &rhos {
            lines.push(HoughLine { theta, rho });
        }
    }
    CandidateSet { lines, theta_step, rho_step }
}

/// One-pixel-per-column raster of an infinite line: pixel `(k, l)` is lit
/// when the line's height at abscissa `k` falls strictly inside `(l-1, l)`.
/// Near-horizontal fold angles transpose the sweep. Boundary hits light
/// nothing, so an integer-offset axis-aligned line rasters to an empty image.
pub fn raster_line(line: &HoughLine, width: u32, height: u32) -> BinaryImage {
    let mut img = BinaryImage::new(width, height);
    let (s, c) = line.theta.sin_cos();
    if s.abs() < AXIS_EPS {
        for l in 1..=height {
            let x = (line.rho - f64::from(l) * s) / c;
            let f = x.floor();
            if x > f && f >= 0.0 && f < f64::from(width) {
                img.set(f as u32 + 1, l, true);
            }
        }
    } else {
        for k in 1..=width {
            let y = (line.rho - f64::from(k) * c) / s;
            let f = y.floor();
            if y > f && f >= 0.0 && f < f64::from(height) {
                img.set(k, f as u32 + 1, true);
            }
        }
    }
    img
}

/// Hamming distance between the observed pixels and the line's raster,
/// restricted to a window.
pub fn mismatch(observed: &BinaryImage, line: &HoughLine, window: &PixelRect) -> usize {
    let raster = raster_line(line, observed.width(), observed.height());
    observed.hamming_in(&raster, window)
}

/// Lowest windowed mismatch over a whole candidate set, with the first line
/// achieving it. Sweeps each raster only across the window, so scanning
/// thousands of candidates stays cheap; agrees with [`mismatch`] per line.
pub fn best_mismatch(
    observed: &BinaryImage,
    candidates: &CandidateSet,
    window: &PixelRect,
) -> Option<(usize, HoughLine)> {
    let win = window.intersect(&observed.frame());
    let base = observed.count_lit_in(&win) as isize;
    let mut best: Option<(usize, HoughLine)> = None;
    for line in &candidates.lines {
        // Every raster pixel inside the window flips one disagreement
        // relative to the empty raster: lit observations match (-1), unlit
        // ones clash (+1).
        let mut m = base;
        let (s, c) = line.theta.sin_cos();
        if s.abs() < AXIS_EPS {
            for l in win.l_min..=win.l_max {
                let x = (line.rho - f64::from(l) * s) / c;
                let f = x.floor();
                if x > f && f >= 0.0 && f < f64::from(observed.width()) {
                    let k = f as u32 + 1;
                    if k >= win.k_min && k <= win.k_max {
                        m += if observed.get(k, l) { -1 } else { 1 };
                    }
                }
            }
        } else {
            for k in win.k_min..=win.k_max {
                let y = (line.rho - f64::from(k) * c) / s;
                let f = y.floor();
                if y > f && f >= 0.0 && f < f64::from(observed.height()) {
                    let l = f as u32 + 1;
                    if l >= win.l_min && l <= win.l_max {
                        m += if observed.get(k, l) { -1 } else { 1 };
                    }
                }
            }
        }
        let m = m as usize;
        if best.as_ref().is_none_or(|(b, _)| m < *b) {
            best = Some((m, *line));
        }
    }
    best
}

/// Number of observed pixels the line's raster reproduces.
pub fn support(observed: &BinaryImage, line: &HoughLine) -> usize {
    raster_line(line, observed.width(), observed.height())
        .and(observed)
        .count_lit()
}

/// `(support, raster length)` of the line against the image: how many raster
/// pixels the observation lights, out of how many the frame holds. Walks the
/// same pixels as [`raster_line`] without allocating.
pub fn line_coverage(observed: &BinaryImage, line: &HoughLine) -> (usize, usize) {
    let (s, c) = line.theta.sin_cos();
    let (mut lit, mut len) = (0, 0);
    if s.abs() < AXIS_EPS {
        for l in 1..=observed.height() {
            let x = (line.rho - f64::from(l) * s) / c;
            let f = x.floor();
            if x > f && f >= 0.0 && f < f64::from(observed.width()) {
                len += 1;
                if observed.get(f as u32 + 1, l) {
                    lit += 1;
                }
            }
        }
    } else {
        for k in 1..=observed.width() {
            let y = (line.rho - f64::from(k) * c) / s;
            let f = y.floor();
            if y > f && f >= 0.0 && f < f64::from(observed.height()) {
                len += 1;
                if observed.get(k, f as u32 + 1) {
                    lit += 1;
                }
            }
        }
    }
    (lit, len)
}

/// A segment that re-renders to exactly the masked observation.
#[derive(Clone, Debug, PartialEq)]
pub struct LineWitness {
    pub segment: ImageSegment,
    pub hough: HoughLine,
}

// Run decomposition of a masked image along a dominant axis: for each
// dominant index (column for x-dominant, row otherwise) the lit cross-axis
// indices must form one contiguous run, dominant coverage must have no gaps,
// and neighbouring runs must overlap or abut.
struct Runs {
    dom_first: u32,
    spans: Vec<(u32, u32)>,
}

fn extract_runs(sub: &BinaryImage, x_dominant: bool) -> Option<Runs> {
    let mut per_dom: BTreeMap<u32, (u32, u32, u32)> = BTreeMap::new();
    for (k, l) in sub.iter_lit() {
        let (dom, cross) = if x_dominant { (k, l) } else { (l, k) };
        let e = per_dom.entry(dom).or_insert((cross, cross, 0));
        e.0 = e.0.min(cross);
        e.1 = e.1.max(cross);
        e.2 += 1;
    }
    let dom_first = *per_dom.keys().next()?;
    let dom_last = *per_dom.keys().next_back()?;
    if dom_last - dom_first + 1 != per_dom.len() as u32 {
        return None;
    }
    let mut spans = Vec::with_capacity(per_dom.len());
    for &(lo, hi, n) in per_dom.values() {
        if hi - lo + 1 != n {
            return None;
        }
        if let Some(&(plo, phi)) = spans.last() {
            if lo > phi + 1 || plo > hi + 1 {
                return None;
            }
        }
        spans.push((lo, hi));
    }
    Some(Runs { dom_first, spans })
}

impl Runs {
    fn dom_last(&self) -> u32 {
        self.dom_first + self.spans.len() as u32 - 1
    }
}

// Corridor constraints on the line's cross-axis value t(j) at integer
// dominant positions j: each is t(j) > bound or t(j) < bound, enforced with
// a shared margin by the fit.
struct Corridor {
    lower: Vec<(f64, f64)>,
    upper: Vec<(f64, f64)>,
}

impl Corridor {
    fn inside(&mut self, j: f64, row: u32) {
        self.lower.push((j, f64::from(row) - 1.0));
        self.upper.push((j, f64::from(row)));
    }
}

// Builds the corridor for a run decomposition, treating the first and last
// dominant positions as endpoint columns whose outer knots are only bounded
// on the interior side (the segment may start mid-column there). `ascending`
// fixes which way two-row runs cross.
fn build_corridor(runs: &Runs, ascending: bool) -> Option<Corridor> {
    let mut c = Corridor { lower: Vec::new(), upper: Vec::new() };
    let d0 = f64::from(runs.dom_first);
    let last = runs.spans.len() - 1;
    for (i, &(a, b)) in runs.spans.iter().enumerate() {
        let j = d0 + i as f64;
        let len = b - a + 1;
        if len > 2 {
            return None;
        }
        let (enter, exit) = if ascending { (a, b) } else { (b, a) };
        match (i == 0, i == last, len) {
            (true, true, _) => unreachable!("single-column images bypass the fit"),
            (true, false, 1) => c.inside(j, a),
            (true, false, 2) => {
                c.inside(j, exit);
                // The run's entry row must still be crossed inside the column.
                if ascending {
                    c.upper.push((j - 1.0, f64::from(a)));
                } else {
                    c.lower.push((j - 1.0, f64::from(b) - 1.0));
                }
            }
            (false, true, 1) => c.inside(j - 1.0, a),
            (false, true, 2) => {
                c.inside(j - 1.0, enter);
                if ascending {
                    c.lower.push((j, f64::from(b) - 1.0));
                } else {
                    c.upper.push((j, f64::from(a)));
                }
            }
            (false, false, 1) => {
                c.inside(j - 1.0, a);
                c.inside(j, a);
            }
            (false, false, 2) => {
                c.inside(j - 1.0, enter);
                c.inside(j, exit);
            }
            _ => unreachable!(),
        }
    }
    Some(c)
}

// Max-margin line through the corridor: maximise the smallest slack of
// t(j) = m j + c against its bounds. For fixed slope the best intercept and
// margin are closed-form, and the margin is concave piecewise-linear in the
// slope, so a ternary search finds the optimum.
fn fit_corridor(corridor: &Corridor) -> Option<(f64, f64)> {
    let eval = |m: f64| -> (f64, f64) {
        let max_lo = corridor
            .lower
            .iter()
            .map(|&(j, b)| b - m * j)
            .fold(f64::NEG_INFINITY, f64::max);
        let min_hi = corridor
            .upper
            .iter()
            .map(|&(j, b)| b - m * j)
            .fold(f64::INFINITY, f64::min);
        (0.5 * (min_hi - max_lo), 0.5 * (min_hi + max_lo))
    };
    let (mut lo, mut hi) = (-4.0f64, 4.0f64);
    for _ in 0..200 {
        let m1 = lo + (hi - lo) / 3.0;
        let m2 = hi - (hi - lo) / 3.0;
        if eval(m1).0 < eval(m2).0 {
            lo = m1;
        } else {
            hi = m2;
        }
    }
    let m = 0.5 * (lo + hi);
    let (margin, c) = eval(m);
    (margin > FIT_MARGIN_MIN).then_some((m, c))
}

// Endpoint of the witness at an endpoint column: either the knot just
// outside it (full crossing) or, when the observed run is shorter than the
// line's full crossing, a point strictly inside the observed terminal cell.
fn endpoint_at(
    dom: u32,
    observed: (u32, u32),
    m: f64,
    c: f64,
    low_end: bool,
    ascending: bool,
    cross_limit: u32,
) -> Option<(f64, f64)> {
    let t = |j: f64| m * j + c;
    let (j_out, j_in) = if low_end {
        (f64::from(dom) - 1.0, f64::from(dom))
    } else {
        (f64::from(dom), f64::from(dom) - 1.0)
    };
    let (t_out, t_in) = (t(j_out), t(j_in));
    let full = pixel_span(t_out.min(t_in), t_out.max(t_in), cross_limit)?;
    if full == observed {
        return Some((j_out, t_out));
    }
    if m == 0.0 {
        return None;
    }
    // Trimmed: the segment terminates inside the run's outer-side row.
    let outward = low_end == ascending;
    let row = f64::from(if outward { observed.0 } else { observed.1 });
    let (y_near, y_far) = if outward { (row - 1.0, row) } else { (row, row - 1.0) };
    let (x_near, x_far) = ((y_near - c) / m, (y_far - c) / m);
    let (mut x_lo, mut x_hi) = (x_near.min(x_far), x_near.max(x_far));
    x_lo = x_lo.max(j_out.min(j_in));
    x_hi = x_hi.min(j_out.max(j_in));
    if x_lo >= x_hi {
        return None;
    }
    let x = 0.5 * (x_lo + x_hi);
    Some((x, t(x)))
}

fn to_image_point(dom_cross: (f64, f64), x_dominant: bool) -> (f64, f64) {
    if x_dominant {
        dom_cross
    } else {
        (dom_cross.1, dom_cross.0)
    }
}

// Attempts one (orientation, direction) combination; returns a segment whose
// exact render equals the masked image, or None.
fn try_witness(sub: &BinaryImage, x_dominant: bool, ascending: bool) -> Option<ImageSegment> {
    let runs = extract_runs(sub, x_dominant)?;
    let cross_limit = if x_dominant { sub.height() } else { sub.width() };
    let seg = if runs.spans.len() == 1 {
        // All pixels share one dominant index: a cross-axis segment through
        // the cell centres renders exactly that run.
        let (a, b) = runs.spans[0];
        let d = f64::from(runs.dom_first) - 0.5;
        let (lo, hi) = if a == b {
            (f64::from(a) - 0.75, f64::from(a) - 0.25)
        } else {
            (f64::from(a) - 0.5, f64::from(b) - 0.5)
        };
        let p1 = to_image_point((d, lo), x_dominant);
        let p2 = to_image_point((d, hi), x_dominant);
        ImageSegment::new(p1.0, p1.1, p2.0, p2.1)
    } else {
        let corridor = build_corridor(&runs, ascending)?;
        let (m, c) = fit_corridor(&corridor)?;
        let p_low = endpoint_at(runs.dom_first, runs.spans[0], m, c, true, ascending, cross_limit)?;
        let p_high = endpoint_at(
            runs.dom_last(),
            *runs.spans.last().expect("non-empty runs"),
            m,
            c,
            false,
            ascending,
            cross_limit,
        )?;
        let p1 = to_image_point(p_low, x_dominant);
        let p2 = to_image_point(p_high, x_dominant);
        ImageSegment::new(p1.0, p1.1, p2.0, p2.1)
    };
    (&render_segment(&seg, sub.width(), sub.height()) == sub).then_some(seg)
}

// Does the witness endpoint lie near enough to the cell's box for this
// endpoint? Boxes that poke outside the frame are skipped: there the true
// segment is clipped by the border and the witness ends wherever the clip
// does.
fn endpoint_consistent(p: (f64, f64), ex: Interval, ey: Interval, width: u32, height: u32) -> bool {
    let in_frame = ex.lo >= 0.0
        && ex.hi <= f64::from(width)
        && ey.lo >= 0.0
        && ey.hi <= f64::from(height);
    if !in_frame {
        return true;
    }
    ex.inflate(ENDPOINT_SLACK).contains(p.0) && ey.inflate(ENDPOINT_SLACK).contains(p.1)
}

/// Accepts the observation for a cell only if its mask clip is exactly the
/// render of some segment geometrically consistent with the cell: parameters
/// inside the inflated Hough range and endpoints near the cell's endpoint
/// boxes. Returns that witness on acceptance.
///
/// Endpoints follow the crate's canonical order: the first endpoint sits on
/// the larger row (`y1 >= y2`, ties broken by smaller `x` first), the order
/// the projection itself produces for any camera above the runway plane.
/// Cells must describe segments in that same order. A render is blind to
/// segment direction, so without the convention a cell containing only the
/// REVERSED endpoints of the true border would accept the identical image
/// and masquerade as a second consistent explanation. Families within the
/// fit precision (~2 px of row drop) of horizontal cannot be matched
/// reliably under the convention; runway projections never get near it.
pub fn geometric_filter(
    observed: &BinaryImage,
    mask: &SpatialMask,
    cell: &SegmentBox,
    range: &HoughRange,
) -> Option<LineWitness> {
    let sub = apply_mask(observed, mask);
    if sub.is_empty() {
        return None;
    }
    let seg = [(true, true), (true, false), (false, true), (false, false)]
        .into_iter()
        .find_map(|(x_dom, asc)| try_witness(&sub, x_dom, asc))?;
    let seg = if seg.y1 > seg.y2 || (seg.y1 == seg.y2 && seg.x1 <= seg.x2) {
        seg
    } else {
        ImageSegment::new(seg.x2, seg.y2, seg.x1, seg.y1)
    };
    let hough = line_to_hough(&seg).ok()?;

    // Short witnesses pin the angle loosely, so widen the angular slack by
    // the tilt a one-pixel endpoint shift induces over the witness length.
    let span = (seg.x2 - seg.x1).hypot(seg.y2 - seg.y1).max(1.0);
    let (theta_step, _) = candidate_steps(observed.width(), observed.height());
    let d_theta = theta_step + (2.0 / span).atan();
    if !range.angle_consistent(hough.theta, d_theta) {
        return None;
    }
    // Position check at the witness midpoint, which is angle-ambiguity free.
    let (mx, my) = (0.5 * (seg.x1 + seg.x2), 0.5 * (seg.y1 + seg.y2));
    if !range.passes_near(mx, my, RHO_SLACK) {
        return None;
    }

    let (w, h) = (observed.width(), observed.height());
    let [ex1, ey1, ex2, ey2] = cell.dims;
    let consistent = endpoint_consistent((seg.x1, seg.y1), ex1, ey1, w, h)
        && endpoint_consistent((seg.x2, seg.y2), ex2, ey2, w, h);
    consistent.then_some(LineWitness { segment: seg, hough })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interval::IntervalBox;
    use crate::reach::spatial_mask;
    use approx::assert_relative_eq;
    use rand::rngs::StdRng;
    use rand::{RngExt, SeedableRng};
    use std::f64::consts::FRAC_PI_4;

    #[test]
    fn hough_of_axis_aligned_and_diagonal_lines() {
        let v = line_to_hough(&ImageSegment::new(5.0, 0.0, 5.0, 10.0)).unwrap();
        assert_relative_eq!(v.theta, 0.0);
        assert_relative_eq!(v.rho, 5.0);

        let h = line_to_hough(&ImageSegment::new(0.0, 7.0, 10.0, 7.0)).unwrap();
        assert_relative_eq!(h.theta, FRAC_PI_2);
        assert_relative_eq!(h.rho, 7.0);

        let d = line_to_hough(&ImageSegment::new(1.0, 1.0, 3.0, 3.0)).unwrap();
        assert_relative_eq!(d.theta, -FRAC_PI_4);
        assert_relative_eq!(d.rho, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn hough_is_independent_of_endpoint_order() {
        let mut rng = StdRng::seed_from_u64(50);
        for _ in 0..300 {
            let seg = ImageSegment::new(
                rng.random_range(-20.0..20.0),
                rng.random_range(-20.0..20.0),
                rng.random_range(-20.0..20.0),
                rng.random_range(-20.0..20.0),
            );
            let rev = ImageSegment::new(seg.x2, seg.y2, seg.x1, seg.y1);
            let (a, b) = (line_to_hough(&seg).unwrap(), line_to_hough(&rev).unwrap());
            assert_relative_eq!(a.theta, b.theta, epsilon = 1e-9);
            assert_relative_eq!(a.rho, b.rho, epsilon = 1e-9);
            // Both orderings put the shared point on the line.
            assert_relative_eq!(
                seg.x2 * a.theta.cos() + seg.y2 * a.theta.sin(),
                a.rho,
                epsilon = 1e-9
            );
        }
    }

    #[test]
    fn degenerate_segment_is_rejected() {
        assert_eq!(
            line_to_hough(&ImageSegment::new(3.0, 4.0, 3.0, 4.0)),
            Err(HoughError::DegenerateSegment)
        );
        assert_eq!(
            hough_range(&IntervalBox::point([3.0, 4.0, 3.0, 4.0])),
            Err(HoughError::DegenerateCell)
        );
    }

    #[test]
    fn range_contains_sampled_segment_parameters() {
        let mut rng = StdRng::seed_from_u64(51);
        for _ in 0..300 {
            let c = [
                rng.random_range(-10.0..110.0),
                rng.random_range(-10.0..90.0),
                rng.random_range(-10.0..110.0),
                rng.random_range(-10.0..90.0),
            ];
            let b = IntervalBox::from_center_radius(c, rng.random_range(0.01..2.0));
            let Ok(range) = hough_range(&b) else { continue };
            for _ in 0..20 {
                let seg = ImageSegment::new(
                    rng.random_range(b.dims[0].lo..=b.dims[0].hi),
                    rng.random_range(b.dims[1].lo..=b.dims[1].hi),
                    rng.random_range(b.dims[2].lo..=b.dims[2].hi),
                    rng.random_range(b.dims[3].lo..=b.dims[3].hi),
                );
                let Ok(line) = line_to_hough(&seg) else { continue };
                assert!(
                    range.contains(&line),
                    "{line:?} outside {range:?} for box {b:?}"
                );
            }
        }
    }

    #[test]
    fn candidates_cover_the_range_at_grid_resolution() {
        let mut rng = StdRng::seed_from_u64(52);
        for _ in 0..50 {
            let c = [
                rng.random_range(10.0..100.0),
                rng.random_range(10.0..80.0),
                rng.random_range(10.0..100.0),
                rng.random_range(10.0..80.0),
            ];
            let b = IntervalBox::from_center_radius(c, 1.0);
            let Ok(range) = hough_range(&b) else { continue };
            let set = enumerate_candidates(&range, 160, 120);
            for _ in 0..20 {
                let seg = ImageSegment::new(
                    rng.random_range(b.dims[0].lo..=b.dims[0].hi),
                    rng.random_range(b.dims[1].lo..=b.dims[1].hi),
                    rng.random_range(b.dims[2].lo..=b.dims[2].hi),
                    rng.random_range(b.dims[3].lo..=b.dims[3].hi),
                );
                let Ok(line) = line_to_hough(&seg) else { continue };
                let near = set.lines.iter().any(|cand| {
                    (cand.theta - line.theta).abs() <= 0.5 * set.theta_step + 1e-12
                        && (cand.rho - line.rho).abs() <= 0.5 * set.rho_step + 1e-12
                });
                assert!(near, "no candidate near {line:?}");
            }
        }
    }

    #[test]
    fn raster_of_axis_aligned_lines() {
        // Vertical line x = 5.3 fills column 6; an integer offset hits cell
        // boundaries everywhere and rasters empty.
        let col = raster_line(&HoughLine { theta: 0.0, rho: 5.3 }, 12, 10);
        assert_eq!(col.count_lit(), 10);
        assert!((1..=10).all(|l| col.get(6, l)));
        assert!(raster_line(&HoughLine { theta: 0.0, rho: 5.0 }, 12, 10).is_empty());

        let row = raster_line(&HoughLine { theta: FRAC_PI_2, rho: 2.7 }, 12, 10);
        assert_eq!(row.count_lit(), 12);
        assert!((1..=12).all(|k| row.get(k, 3)));
    }

    #[test]
    fn raster_of_a_diagonal_line() {
        // theta = -pi/4, rho = 0.2: height at column k is k - 0.2*sqrt(2),
        // so each column lights the pixel on the main diagonal.
        let img = raster_line(&HoughLine { theta: -FRAC_PI_4, rho: 0.2 }, 10, 10);
        assert_eq!(img.count_lit(), 10);
        assert!((1..=10).all(|k| img.get(k, k)));
    }

    #[test]
    fn matching_raster_has_zero_mismatch_and_full_support() {
        let line = HoughLine { theta: 0.31, rho: 14.2 };
        let observed = raster_line(&line, 40, 30);
        let window = observed.frame();
        assert_eq!(mismatch(&observed, &line, &window), 0);
        assert_eq!(support(&observed, &line), observed.count_lit() as usize);
        let off = HoughLine { theta: 0.31, rho: 16.2 };
        assert!(mismatch(&observed, &off, &window) > 0);
    }

    #[test]
    fn coverage_agrees_with_the_allocated_raster() {
        let mut rng = StdRng::seed_from_u64(58);
        for _ in 0..200 {
            let mut observed = BinaryImage::new(32, 24);
            for _ in 0..rng.random_range(0..80) {
                observed.set(rng.random_range(1..=32), rng.random_range(1..=24), true);
            }
            let line = HoughLine {
                theta: rng.random_range(-FRAC_PI_2..=FRAC_PI_2),
                rho: rng.random_range(-10.0..40.0),
            };
            let raster = raster_line(&line, 32, 24);
            let (lit, len) = line_coverage(&observed, &line);
            assert_eq!(lit, raster.and(&observed).count_lit());
            assert_eq!(len, raster.count_lit());
            assert_eq!(lit, support(&observed, &line));
        }
    }

    fn filter_setup(center: [f64; 4], radius: f64, w: u32, h: u32) -> (SegmentBox, SpatialMask, HoughRange) {
        let cell = IntervalBox::from_center_radius(center, radius);
        let mask = spatial_mask(&cell, w, h);
        let range = hough_range(&cell).unwrap();
        (cell, mask, range)
    }

    #[test]
    fn batched_mismatch_agrees_with_per_line_mismatch() {
        let mut rng = StdRng::seed_from_u64(57);
        for _ in 0..40 {
            let mut observed = BinaryImage::new(32, 24);
            for _ in 0..rng.random_range(0..60) {
                observed.set(rng.random_range(1..=32), rng.random_range(1..=24), true);
            }
            let lines: Vec<HoughLine> = (0..rng.random_range(1..=30))
                .map(|_| HoughLine {
                    theta: rng.random_range(-FRAC_PI_2 * 0.99..=FRAC_PI_2),
                    rho: rng.random_range(-10.0..40.0),
                })
                .collect();
            let candidates = CandidateSet {
                lines,
                theta_step: 0.01,
                rho_step: 0.5,
            };
            let window = PixelRect::new(
                rng.random_range(1..=8),
                rng.random_range(1..=6),
                rng.random_range(20..=32),
                rng.random_range(15..=24),
            );
            let (got_m, got_line) = best_mismatch(&observed, &candidates, &window).unwrap();
            let brute: Vec<usize> = candidates
                .lines
                .iter()
                .map(|line| mismatch(&observed, line, &window))
                .collect();
            let want_m = *brute.iter().min().unwrap();
            let want_idx = brute.iter().position(|&m| m == want_m).unwrap();
            assert_eq!(got_m, want_m);
            assert_eq!(got_line, candidates.lines[want_idx]);
        }
    }

    #[test]
    fn filter_accepts_a_clean_in_cell_render() {
        let (cell, mask, range) = filter_setup([90.1, 40.2, 20.3, 15.7], 0.8, 160, 120);
        let observed = render_segment(&ImageSegment::new(90.1, 40.2, 20.3, 15.7), 160, 120);
        let witness = geometric_filter(&observed, &mask, &cell, &range).expect("clean render");
        assert_eq!(
            render_segment(&witness.segment, 160, 120),
            apply_mask(&observed, &mask)
        );
        assert!(range.contains_with_slack(&witness.hough, 0.3, RHO_SLACK));
    }

    #[test]
    fn filter_rejects_noise_inside_the_mask() {
        let (cell, mask, range) = filter_setup([90.1, 40.2, 20.3, 15.7], 0.8, 160, 120);
        let mut observed = render_segment(&ImageSegment::new(90.1, 40.2, 20.3, 15.7), 160, 120);
        // Add one masked pixel that is not part of the render.
        let extra = mask
            .image
            .iter_lit()
            .find(|&(k, l)| !observed.get(k, l))
            .expect("mask is wider than one render");
        observed.set(extra.0, extra.1, true);
        assert!(geometric_filter(&observed, &mask, &cell, &range).is_none());
    }

    #[test]
    fn filter_rejects_a_transversal_line_from_elsewhere() {
        let (cell, mask, range) = filter_setup([70.1, 80.2, 60.3, 20.7], 0.8, 160, 120);
        // A line crossing the cell's band at a very different angle: its
        // mask clip is not consistent with the cell geometry.
        let observed = render_segment(&ImageSegment::new(20.0, 50.45, 140.0, 50.45), 160, 120);
        assert!(geometric_filter(&observed, &mask, &cell, &range).is_none());
    }

    #[test]
    fn filter_rejects_an_empty_clip() {
        let (cell, mask, range) = filter_setup([90.1, 40.2, 20.3, 15.7], 0.5, 160, 120);
        let observed = BinaryImage::new(160, 120);
        assert!(geometric_filter(&observed, &mask, &cell, &range).is_none());
    }

    #[test]
    fn filter_accepts_renders_of_random_in_cell_segments() {
        let mut rng = StdRng::seed_from_u64(53);
        let mut accepted = 0;
        for trial in 0..120 {
            let mut c: [f64; 4] = [
                rng.random_range(15.0..145.0) + 0.0173,
                rng.random_range(15.0..105.0) + 0.0091,
                rng.random_range(15.0..145.0) + 0.0237,
                rng.random_range(15.0..105.0) + 0.0149,
            ];
            if c[1] < c[3] {
                c = [c[2], c[3], c[0], c[1]];
            }
            let radius = rng.random_range(0.2..1.2);
            // Every member must keep the canonical row order with daylight
            // beyond the fit precision, or matching is undefined by contract.
            if c[1] - c[3] < 2.0 * radius + 3.0 {
                continue;
            }
            let cell = IntervalBox::from_center_radius(c, radius);
            let mask = spatial_mask(&cell, 160, 120);
            let Ok(range) = hough_range(&cell) else { continue };
            let seg = ImageSegment::new(
                rng.random_range(cell.dims[0].lo..=cell.dims[0].hi),
                rng.random_range(cell.dims[1].lo..=cell.dims[1].hi),
                rng.random_range(cell.dims[2].lo..=cell.dims[2].hi),
                rng.random_range(cell.dims[3].lo..=cell.dims[3].hi),
            );
            let observed = render_segment(&seg, 160, 120);
            let witness = geometric_filter(&observed, &mask, &cell, &range);
            assert!(
                witness.is_some(),
                "trial {trial}: rejected clean render of {seg:?} in cell {cell:?}"
            );
            accepted += 1;
        }
        assert!(accepted > 80, "too few informative trials: {accepted}");
    }

    #[test]
    fn filter_accepts_a_single_column_segment() {
        let (cell, mask, range) = filter_setup([40.58, 45.7, 40.42, 20.3], 0.05, 160, 120);
        let observed = render_segment(&ImageSegment::new(40.58, 45.7, 40.42, 20.3), 160, 120);
        let witness = geometric_filter(&observed, &mask, &cell, &range).expect("vertical segment");
        assert_eq!(
            render_segment(&witness.segment, 160, 120),
            apply_mask(&observed, &mask)
        );
    }

    #[test]
    fn filter_accepts_a_single_pixel_observation() {
        let (cell, mask, range) = filter_setup([40.7, 20.6, 40.3, 20.2], 0.05, 160, 120);
        let observed = render_segment(&ImageSegment::new(40.7, 20.6, 40.3, 20.2), 160, 120);
        assert_eq!(observed.count_lit(), 1);
        assert!(geometric_filter(&observed, &mask, &cell, &range).is_some());
    }
}
