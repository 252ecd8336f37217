//! Pinhole camera geometry for runway border lines.
//!
//! The aircraft state is (pitch, x, y, z): camera pitch in radians and camera
//! position in the runway frame. The runway frame has x to the right, y up,
//! z along the runway; the camera looks down +z, pitched about the x axis.
//! A runway border line runs along the ground from `(x0, 0, z0)` to
//! `(x0 + span_x, 0, z0 + span_z)`.
//!
//! `project_line` maps a state to the image-plane endpoints of one border:
//! four numbers `(x1, y1, x2, y2)` in continuous pixel coordinates. It has a
//! closed form, an analytic Jacobian, a Newton inverse, and an interval
//! extension, which together drive rendering, reachability, and estimation.

use crate::interval::{Interval, IntervalBox, IntervalMatrix};
use nalgebra::{Matrix4, Vector4};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("projected depth {depth:.6} is not positive")]
    DegenerateProjection { depth: f64 },
    #[error("state solve stalled at pixel residual {residual:.3e}")]
    NoConvergence { residual: f64 },
    #[error("projection Jacobian is singular within working precision")]
    SingularJacobian,
    #[error("runway length along z must be positive, got {0}")]
    NonPositiveLength(f64),
}

/// Pinhole intrinsics. Pixels are assumed rectangular; the two image axes may
/// have different metre-to-pixel scales.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CameraIntrinsics {
    pub focal_m: f64,
    pub sensor_w_m: f64,
    pub sensor_h_m: f64,
    pub width_px: u32,
    pub height_px: u32,
}

impl CameraIntrinsics {
    pub fn new(focal_m: f64, sensor_w_m: f64, sensor_h_m: f64, width_px: u32, height_px: u32) -> Self {
        CameraIntrinsics { focal_m, sensor_w_m, sensor_h_m, width_px, height_px }
    }

    /// Square pixels of side `pitch_m`; the sensor size follows from the
    /// pixel count.
    pub fn with_pixel_pitch(focal_m: f64, pitch_m: f64, width_px: u32, height_px: u32) -> Self {
        CameraIntrinsics {
            focal_m,
            sensor_w_m: pitch_m * width_px as f64,
            sensor_h_m: pitch_m * height_px as f64,
            width_px,
            height_px,
        }
    }

    /// Principal point, image centre.
    pub fn u0(&self) -> f64 {
        self.width_px as f64 / 2.0
    }

    pub fn v0(&self) -> f64 {
        self.height_px as f64 / 2.0
    }

    /// Pixels per metre of lateral offset at unit depth: `rho_w * f`.
    pub fn scale_u(&self) -> f64 {
        self.width_px as f64 / self.sensor_w_m * self.focal_m
    }

    pub fn scale_v(&self) -> f64 {
        self.height_px as f64 / self.sensor_h_m * self.focal_m
    }
}

/// Camera pitch (radians, positive pitches the view down toward the runway)
/// and camera position in the runway frame.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AircraftState {
    pub pitch: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl AircraftState {
    pub fn new(pitch: f64, x: f64, y: f64, z: f64) -> Self {
        AircraftState { pitch, x, y, z }
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.pitch, self.x, self.y, self.z]
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        AircraftState { pitch: a[0], x: a[1], y: a[2], z: a[3] }
    }
}

/// The two border lines of the runway. Each runs from `(x0, 0, z0)` to
/// `(x0 + span_x, 0, z0 + span_z)` in the runway frame.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RunwaySpec {
    pub left_x: f64,
    pub left_z: f64,
    pub right_x: f64,
    pub right_z: f64,
    pub span_x: f64,
    pub span_z: f64,
}

impl RunwaySpec {
    pub fn new(
        left_x: f64,
        left_z: f64,
        right_x: f64,
        right_z: f64,
        span_x: f64,
        span_z: f64,
    ) -> Result<Self, GeometryError> {
        if !(span_z > 0.0) {
            return Err(GeometryError::NonPositiveLength(span_z));
        }
        Ok(RunwaySpec { left_x, left_z, right_x, right_z, span_x, span_z })
    }

    /// Ground-plane start point `(x0, z0)` of one border.
    pub fn start(&self, side: RunwaySide) -> (f64, f64) {
        match side {
            RunwaySide::Left => (self.left_x, self.left_z),
            RunwaySide::Right => (self.right_x, self.right_z),
        }
    }

    pub fn end(&self, side: RunwaySide) -> (f64, f64) {
        let (x0, z0) = self.start(side);
        (x0 + self.span_x, z0 + self.span_z)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum RunwaySide {
    Left,
    Right,
}

impl RunwaySide {
    pub const BOTH: [RunwaySide; 2] = [RunwaySide::Left, RunwaySide::Right];
}

/// A projected point before rasterization.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ContinuousPixel {
    pub u: f64,
    pub v: f64,
    pub depth: f64,
}

/// Image of one runway border: continuous pixel coordinates of the projected
/// start `(x1, y1)` and end `(x2, y2)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ImageSegment {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

impl ImageSegment {
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Self {
        ImageSegment { x1, y1, x2, y2 }
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.x1, self.y1, self.x2, self.y2]
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        ImageSegment { x1: a[0], y1: a[1], x2: a[2], y2: a[3] }
    }
}

/// Runway-frame point to camera-frame point: translate by the camera
/// position, then pitch about the x axis.
pub fn runway_to_camera(state: &AircraftState, p: [f64; 3]) -> [f64; 3] {
    let (s, c) = state.pitch.sin_cos();
    let px = p[0] + state.x;
    let py = p[1] * c + p[2] * s + state.y;
    let pz = -p[1] * s + p[2] * c + state.z;
    [px, py, pz]
}

/// Camera-frame point to continuous pixel coordinates. The v axis points
/// down the image, so positive camera-frame height maps above the centre.
pub fn camera_to_image(intr: &CameraIntrinsics, p: [f64; 3]) -> ContinuousPixel {
    ContinuousPixel {
        u: intr.scale_u() * p[0] / p[2] + intr.u0(),
        v: -intr.scale_v() * p[1] / p[2] + intr.v0(),
        depth: p[2],
    }
}

pub fn is_visible(intr: &CameraIntrinsics, p: &ContinuousPixel) -> bool {
    p.depth > 0.0
        && p.u >= 0.0
        && p.u < intr.width_px as f64
        && p.v >= 0.0
        && p.v < intr.height_px as f64
}

/// Pixel containing a visible continuous point, 1-based.
pub fn rasterize_point(intr: &CameraIntrinsics, p: &ContinuousPixel) -> (u32, u32) {
    debug_assert!(is_visible(intr, p));
    (p.u.floor() as u32 + 1, p.v.floor() as u32 + 1)
}

const MIN_DEPTH: f64 = 1e-12;

/// Closed-form projection of one runway border. Ground points have y = 0, so
/// the full rotation collapses to the depths `z0*cos(pitch) + z` and the
/// heights `z0*sin(pitch) + y`.
pub fn project_line(
    state: &AircraftState,
    runway: &RunwaySpec,
    side: RunwaySide,
    intr: &CameraIntrinsics,
) -> Result<ImageSegment, GeometryError> {
    let (sx, sz) = runway.start(side);
    let (ex, ez) = runway.end(side);
    let (sin_t, cos_t) = state.pitch.sin_cos();
    let d1 = sz * cos_t + state.z;
    let d2 = ez * cos_t + state.z;
    if d1 <= MIN_DEPTH || d2 <= MIN_DEPTH {
        return Err(GeometryError::DegenerateProjection { depth: d1.min(d2) });
    }
    let fu = intr.scale_u();
    let fv = intr.scale_v();
    Ok(ImageSegment {
        x1: fu * (sx + state.x) / d1 + intr.u0(),
        y1: -fv * (sz * sin_t + state.y) / d1 + intr.v0(),
        x2: fu * (ex + state.x) / d2 + intr.u0(),
        y2: -fv * (ez * sin_t + state.y) / d2 + intr.v0(),
    })
}

/// Analytic Jacobian of [`project_line`] with respect to
/// `(pitch, x, y, z)`; rows follow the `(x1, y1, x2, y2)` output order.
pub fn line_jacobian(
    state: &AircraftState,
    runway: &RunwaySpec,
    side: RunwaySide,
    intr: &CameraIntrinsics,
) -> Result<Matrix4<f64>, GeometryError> {
    let (sx, sz) = runway.start(side);
    let (ex, ez) = runway.end(side);
    let (sin_t, cos_t) = state.pitch.sin_cos();
    let fu = intr.scale_u();
    let fv = intr.scale_v();
    let mut j = Matrix4::zeros();
    for (row, &(px, pz)) in [(sx, sz), (ex, ez)].iter().enumerate() {
        let d = pz * cos_t + state.z;
        if d <= MIN_DEPTH {
            return Err(GeometryError::DegenerateProjection { depth: d });
        }
        let n = pz * sin_t + state.y;
        let lat = px + state.x;
        let (ru, rv) = (2 * row, 2 * row + 1);
        j[(ru, 0)] = fu * lat * pz * sin_t / (d * d);
        j[(ru, 1)] = fu / d;
        j[(ru, 3)] = -fu * lat / (d * d);
        j[(rv, 0)] = -fv * (pz * cos_t * d + n * pz * sin_t) / (d * d);
        j[(rv, 2)] = -fv / d;
        j[(rv, 3)] = fv * n / (d * d);
    }
    Ok(j)
}

/// Interval bounds on [`line_jacobian`] over a state box: every entry of
/// the Jacobian at every state in the box lies inside the corresponding
/// returned interval. Mirrors the analytic entries with outward-rounded
/// interval arithmetic.
pub fn line_jacobian_box(
    states: &IntervalBox<4>,
    runway: &RunwaySpec,
    side: RunwaySide,
    intr: &CameraIntrinsics,
) -> Result<IntervalMatrix<4, 4>, GeometryError> {
    let [pitch, x, y, z] = states.dims;
    let (sx, sz) = runway.start(side);
    let (ex, ez) = runway.end(side);
    let sin_t = pitch.sin();
    let cos_t = pitch.cos();
    let fu = intr.scale_u();
    let fv = intr.scale_v();
    let mut j = IntervalMatrix::<4, 4>::zeros();
    for (row, &(px, pz)) in [(sx, sz), (ex, ez)].iter().enumerate() {
        let d = cos_t.mul_scalar(pz).add(z);
        if d.lo <= MIN_DEPTH {
            return Err(GeometryError::DegenerateProjection { depth: d.lo });
        }
        let d2 = d.mul(d);
        let n = sin_t.mul_scalar(pz).add(y);
        let lat = x.add_scalar(px);
        let fu_pz = Interval::point(fu).mul_scalar(pz);
        let fv_pz = Interval::point(fv).mul_scalar(pz);
        let (ru, rv) = (2 * row, 2 * row + 1);
        j.set(ru, 0, lat.mul(sin_t).mul(fu_pz).div(d2));
        j.set(ru, 1, Interval::point(fu).div(d));
        j.set(ru, 3, lat.mul_scalar(-fu).div(d2));
        j.set(rv, 0, cos_t.mul(d).add(n.mul(sin_t)).mul(fv_pz).neg().div(d2));
        j.set(rv, 2, Interval::point(-fv).div(d));
        j.set(rv, 3, n.mul_scalar(fv).div(d2));
    }
    Ok(j)
}

/// Newton inversion of [`project_line`]: find the state whose projected
/// border matches `target`, starting from `seed`. Steps are damped by
/// backtracking until the pixel residual drops; convergence is declared at
/// a 1e-9 px residual.
pub fn solve_state_from_segment(
    target: &ImageSegment,
    runway: &RunwaySpec,
    side: RunwaySide,
    intr: &CameraIntrinsics,
    seed: &AircraftState,
) -> Result<AircraftState, GeometryError> {
    const TOL: f64 = 1e-9;
    const MAX_ITER: usize = 100;
    let goal = Vector4::from_column_slice(&target.as_array());

    let residual = |s: &AircraftState| -> Option<Vector4<f64>> {
        project_line(s, runway, side, intr)
            .ok()
            .map(|seg| Vector4::from_column_slice(&seg.as_array()) - goal)
    };

    let mut state = *seed;
    let mut res = residual(&state).ok_or(GeometryError::DegenerateProjection {
        depth: 0.0,
    })?;
    for _ in 0..MAX_ITER {
        let norm = res.amax();
        if norm <= TOL {
            return Ok(state);
        }
        let j = line_jacobian(&state, runway, side, intr)?;
        let step = j
            .lu()
            .solve(&(-res))
            .ok_or(GeometryError::SingularJacobian)?;
        let mut advanced = false;
        let mut damping = 1.0;
        for _ in 0..24 {
            let trial = AircraftState::new(
                state.pitch + damping * step[0],
                state.x + damping * step[1],
                state.y + damping * step[2],
                state.z + damping * step[3],
            );
            if let Some(trial_res) = residual(&trial) {
                if trial_res.amax() < norm {
                    state = trial;
                    res = trial_res;
                    advanced = true;
                    break;
                }
            }
            damping *= 0.5;
        }
        if !advanced {
            return Err(GeometryError::NoConvergence { residual: norm });
        }
    }
    let norm = res.amax();
    if norm <= TOL {
        Ok(state)
    } else {
        Err(GeometryError::NoConvergence { residual: norm })
    }
}

/// Clamped variant of [`solve_state_from_segment`]: every Newton iterate is
/// clamped to `bounds`, so the result is the best in-box approximation of
/// the target's preimage instead of an arbitrary root. The projection map
/// has exact preimages far outside any operating envelope (near-vertical
/// pitch at large range reproduces almost any endpoint set), and those are
/// useless to a caller whose error analysis only covers states near the
/// envelope; this solve can't wander off to them. Returns the best state
/// found together with its pixel residual (infinity norm); a residual at
/// the convergence tolerance means the target is reachable from inside
/// `bounds`. Errors only if the clamped seed itself fails to project.
pub fn nearest_state_in_box(
    target: &ImageSegment,
    runway: &RunwaySpec,
    side: RunwaySide,
    intr: &CameraIntrinsics,
    seed: &AircraftState,
    bounds: &IntervalBox<4>,
) -> Result<(AircraftState, f64), GeometryError> {
    const TOL: f64 = 1e-9;
    const MAX_ITER: usize = 100;
    let clamp = |v: [f64; 4]| -> AircraftState {
        AircraftState::from_array(std::array::from_fn(|i| {
            v[i].clamp(bounds.dims[i].lo, bounds.dims[i].hi)
        }))
    };
    let goal = Vector4::from_column_slice(&target.as_array());
    let residual = |s: &AircraftState| -> Option<Vector4<f64>> {
        project_line(s, runway, side, intr)
            .ok()
            .map(|seg| Vector4::from_column_slice(&seg.as_array()) - goal)
    };

    let mut state = clamp(seed.as_array());
    let mut res = residual(&state).ok_or(GeometryError::DegenerateProjection {
        depth: 0.0,
    })?;
    for _ in 0..MAX_ITER {
        let norm = res.amax();
        if norm <= TOL {
            break;
        }
        let Ok(j) = line_jacobian(&state, runway, side, intr) else {
            break;
        };
        let Some(step) = j.lu().solve(&(-res)) else {
            break;
        };
        let mut advanced = false;
        let mut damping = 1.0;
        for _ in 0..24 {
            let trial = clamp([
                state.pitch + damping * step[0],
                state.x + damping * step[1],
                state.y + damping * step[2],
                state.z + damping * step[3],
            ]);
            if let Some(trial_res) = residual(&trial) {
                if trial_res.amax() < norm {
                    state = trial;
                    res = trial_res;
                    advanced = true;
                    break;
                }
            }
            damping *= 0.5;
        }
        if !advanced {
            break;
        }
    }
    Ok((state, res.amax()))
}

/// Interval extension of [`project_line`] over a state box ordered
/// `(pitch, x, y, z)`. Sound: contains the projection of every state in the
/// box. Fails if any state in the box could put an endpoint at or behind
/// the camera plane.
pub fn project_line_box(
    states: &IntervalBox<4>,
    runway: &RunwaySpec,
    side: RunwaySide,
    intr: &CameraIntrinsics,
) -> Result<IntervalBox<4>, GeometryError> {
    let [pitch, x, y, z] = states.dims;
    let (sx, sz) = runway.start(side);
    let (ex, ez) = runway.end(side);
    let sin_t = pitch.sin();
    let cos_t = pitch.cos();
    let fu = intr.scale_u();
    let fv = intr.scale_v();
    let mut out = [Interval::point(0.0); 4];
    for (row, &(px, pz)) in [(sx, sz), (ex, ez)].iter().enumerate() {
        let d = cos_t.mul_scalar(pz).add(z);
        if d.lo <= MIN_DEPTH {
            return Err(GeometryError::DegenerateProjection { depth: d.lo });
        }
        let n = sin_t.mul_scalar(pz).add(y);
        out[2 * row] = x.add_scalar(px).mul_scalar(fu).div(d).add_scalar(intr.u0());
        out[2 * row + 1] = n.mul_scalar(-fv).div(d).add_scalar(intr.v0());
    }
    Ok(IntervalBox::new(out))
}

/// Lipschitz constant (in infinity norms) of the inverse of
/// [`project_line`] over the image of `states`: the largest max-row-sum of
/// the inverse Jacobian across a `grid_per_axis`^4 sample of the box, with a
/// 10% margin for the finite sampling. Pair with a modestly inflated box
/// when bounds must also cover points slightly outside the image.
pub fn inverse_lipschitz_bound(
    states: &IntervalBox<4>,
    runway: &RunwaySpec,
    side: RunwaySide,
    intr: &CameraIntrinsics,
    grid_per_axis: usize,
) -> Result<f64, GeometryError> {
    const MARGIN: f64 = 1.1;
    let n = grid_per_axis.max(2);
    let coord = |iv: Interval, i: usize| -> f64 {
        iv.lo + iv.width() * i as f64 / (n - 1) as f64
    };
    let mut worst: f64 = 0.0;
    for it in 0..n {
        for ix in 0..n {
            for iy in 0..n {
                for iz in 0..n {
                    let s = AircraftState::new(
                        coord(states.dims[0], it),
                        coord(states.dims[1], ix),
                        coord(states.dims[2], iy),
                        coord(states.dims[3], iz),
                    );
                    let j = line_jacobian(&s, runway, side, intr)?;
                    let inv = j.try_inverse().ok_or(GeometryError::SingularJacobian)?;
                    let row_sum = (0..4)
                        .map(|r| (0..4).map(|c| inv[(r, c)].abs()).sum::<f64>())
                        .fold(0.0, f64::max);
                    if !row_sum.is_finite() {
                        return Err(GeometryError::SingularJacobian);
                    }
                    worst = worst.max(row_sum);
                }
            }
        }
    }
    Ok(worst * MARGIN)
}
