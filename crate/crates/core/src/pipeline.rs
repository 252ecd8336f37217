//! Partition-indexed filtering and the shielded state estimator.
//!
//! Segment space is tiled into infinity-norm cells of radius delta. A filter
//! bank precomputes, per cell and per runway line, the spatial mask, the
//! admissible line-parameter range and its candidate grid, plus a fallback
//! state whose projection sits at the cell centre. At run time every cell
//! screens the observed image; the accepting cell yields the masked image, a
//! baseline endpoint estimator inverts it to a state, and a shield replaces
//! estimates that project outside the selected cell by the fallback. Either
//! way the reported state carries the certified radius `4 * lipschitz *
//! delta`, where `lipschitz` bounds the inverse projection's sensitivity
//! over the operating envelope.

use crate::camera::{
    inverse_lipschitz_bound, project_line, project_line_box, solve_state_from_segment,
    AircraftState, CameraIntrinsics, GeometryError, ImageSegment, RunwaySide, RunwaySpec,
};
use crate::hough::{
    enumerate_candidates, geometric_filter, hough_range, line_coverage, CandidateSet, HoughError,
    HoughRange, LineWitness,
};
use crate::image::BinaryImage;
use crate::interval::{Interval, IntervalBox};
use crate::reach::{apply_mask, spatial_mask, SegmentBox, SpatialMask};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("cell radius must be positive, got {0}")]
    BadRadius(f64),
    #[error("cell {cell_id}: {source}")]
    CellGeometry {
        cell_id: usize,
        source: GeometryError,
    },
    #[error("cell {cell_id}: {source}")]
    CellLineRange {
        cell_id: usize,
        source: HoughError,
    },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("no cell accepts the image")]
    NoCellAccepts { scores: Vec<CellScore> },
    #[error("image is {got_w}x{got_h} but the bank expects {want_w}x{want_h}")]
    DimensionMismatch {
        got_w: u32,
        got_h: u32,
        want_w: u32,
        want_h: u32,
    },
    #[error("filtered image does not determine two distinct endpoints")]
    DegenerateObservation,
    #[error("no envelope state reproduces the fitted endpoints closer than {residual_px:.2} px")]
    EstimateOffEnvelope { residual_px: f64 },
    #[error(
        "cell {cell_id}: fallback projection misses the centre by {offset_px:.2} px (limit {limit_px:.2})"
    )]
    FallbackOffset {
        cell_id: usize,
        offset_px: f64,
        limit_px: f64,
    },
}

/// Axis-aligned tiling of a segment-space region into cells that are
/// infinity-norm balls of radius exactly `delta`. Interior tiles advance by
/// `2 * delta`; the last tile per axis is shifted inward so it ends at the
/// region boundary, which makes neighbours overlap there instead of the
/// final cell shrinking.
#[derive(Clone, Debug, PartialEq)]
pub struct PartitionScheme {
    pub region: SegmentBox,
    pub delta: f64,
    /// Tile counts per axis; cells are ordered row-major, last axis fastest.
    pub bins: [usize; 4],
    pub cells: Vec<SegmentBox>,
}

pub fn partition_region(region: &SegmentBox, delta: f64) -> Result<PartitionScheme, PipelineError> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(PipelineError::BadRadius(delta));
    }
    let mut bins = [0usize; 4];
    let mut centres: [Vec<f64>; 4] = Default::default();
    for axis in 0..4 {
        let iv = region.dims[axis];
        let count = if iv.width() <= 2.0 * delta {
            1
        } else {
            (iv.width() / (2.0 * delta) - 1e-9).ceil() as usize
        };
        bins[axis] = count;
        centres[axis] = (0..count)
            .map(|i| {
                if count == 1 {
                    iv.mid()
                } else if i + 1 == count {
                    iv.hi - delta
                } else {
                    iv.lo + delta + 2.0 * delta * i as f64
                }
            })
            .collect();
    }
    let mut cells = Vec::with_capacity(bins.iter().product());
    for &c0 in &centres[0] {
        for &c1 in &centres[1] {
            for &c2 in &centres[2] {
                for &c3 in &centres[3] {
                    cells.push(SegmentBox::from_center_radius([c0, c1, c2, c3], delta));
                }
            }
        }
    }
    Ok(PartitionScheme {
        region: *region,
        delta,
        bins,
        cells,
    })
}

/// Everything needed to screen one runway line against one cell.
#[derive(Clone, Debug, PartialEq)]
pub struct CellFilter {
    pub mask: SpatialMask,
    pub range: HoughRange,
    pub candidates: CandidateSet,
}

/// Per-cell bank entry. `zeta` is the partition cell for the left border;
/// `right_zeta` encloses every right-border segment whose state projects the
/// left border into the cell, so both lines are screened consistently.
#[derive(Clone, Debug, PartialEq)]
pub struct BankCell {
    pub zeta: SegmentBox,
    pub right_zeta: SegmentBox,
    pub left: CellFilter,
    pub right: CellFilter,
    /// State whose left-border projection sits at the cell centre (best
    /// effort for cells the operating envelope cannot reach).
    pub fallback: AircraftState,
}

/// Build inputs; kept verbatim inside the bank so a rebuild from the stored
/// manifest reproduces it exactly.
#[derive(Clone, Debug, PartialEq)]
pub struct BankConfig {
    pub intrinsics: CameraIntrinsics,
    pub runway: RunwaySpec,
    /// Operating envelope in state space (pitch, x, y, z).
    pub states: IntervalBox<4>,
    /// Cell radius in pixels.
    pub delta: f64,
    /// Region to tile; defaults to the interval hull of the left border's
    /// projections over `states`.
    pub region: Option<SegmentBox>,
    /// Per-axis state subdivisions used to pair right-border enclosures
    /// with left-border cells.
    pub pairing_grid: usize,
    /// Per-axis sample counts for the inverse-sensitivity bound.
    pub lipschitz_grid: usize,
}

impl BankConfig {
    pub fn new(
        intrinsics: CameraIntrinsics,
        runway: RunwaySpec,
        states: IntervalBox<4>,
        delta: f64,
    ) -> Self {
        BankConfig {
            intrinsics,
            runway,
            states,
            delta,
            region: None,
            pairing_grid: 4,
            lipschitz_grid: 5,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FilterBank {
    pub config: BankConfig,
    pub scheme: PartitionScheme,
    pub cells: Vec<BankCell>,
    /// Sampled bound on the inverse projection's sensitivity (worst absolute
    /// row sum of the inverted Jacobian over the envelope, both lines).
    pub lipschitz: f64,
}

impl FilterBank {
    pub fn width(&self) -> u32 {
        self.config.intrinsics.width_px
    }

    pub fn height(&self) -> u32 {
        self.config.intrinsics.height_px
    }

    pub fn error_bound(&self) -> f64 {
        error_bound(self.scheme.delta, self.lipschitz)
    }
}

/// Radius of the ball around the true state that any shielded estimate is
/// certified to stay in: twice the cell diameter, scaled by the inverse
/// sensitivity.
pub fn error_bound(delta: f64, lipschitz: f64) -> f64 {
    4.0 * lipschitz * delta
}

fn subdivide(states: &IntervalBox<4>, per_axis: usize) -> Vec<IntervalBox<4>> {
    let g = per_axis.max(1);
    let gf = g as f64;
    let axis_edges: [Vec<f64>; 4] = std::array::from_fn(|a| {
        let iv = states.dims[a];
        (0..=g)
            .map(|i| {
                if i == g {
                    iv.hi
                } else {
                    iv.lo + iv.width() * i as f64 / gf
                }
            })
            .collect()
    });
    let mut out = Vec::with_capacity(g.pow(4));
    for i0 in 0..g {
        for i1 in 0..g {
            for i2 in 0..g {
                for i3 in 0..g {
                    let idx = [i0, i1, i2, i3];
                    let dims = std::array::from_fn(|a| {
                        Interval::new(axis_edges[a][idx[a]], axis_edges[a][idx[a] + 1])
                    });
                    out.push(IntervalBox { dims });
                }
            }
        }
    }
    out
}

fn cell_filter(
    zeta: &SegmentBox,
    cell_id: usize,
    width: u32,
    height: u32,
) -> Result<CellFilter, PipelineError> {
    let mask = spatial_mask(zeta, width, height);
    let range = hough_range(zeta)
        .map_err(|source| PipelineError::CellLineRange { cell_id, source })?;
    let candidates = enumerate_candidates(&range, width, height);
    Ok(CellFilter {
        mask,
        range,
        candidates,
    })
}

/// Invert the cell centre back to a state: try the envelope centre as the
/// Newton seed, then the nearest projected grid states; a cell outside the
/// reachable set keeps the grid state whose projection comes closest.
fn fallback_state(
    target: &ImageSegment,
    cfg: &BankConfig,
    seeds: &[(AircraftState, ImageSegment)],
) -> AircraftState {
    let centre = AircraftState::from_array(cfg.states.center());
    let mut ranked: Vec<(f64, &AircraftState)> = seeds
        .iter()
        .map(|(state, proj)| {
            let d = proj
                .as_array()
                .iter()
                .zip(target.as_array())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0f64, f64::max);
            (d, state)
        })
        .collect();
    ranked.sort_by(|a, b| a.0.total_cmp(&b.0));
    let attempts = std::iter::once(&centre).chain(ranked.iter().take(8).map(|(_, s)| *s));
    for seed in attempts {
        if let Ok(state) =
            solve_state_from_segment(target, &cfg.runway, RunwaySide::Left, &cfg.intrinsics, seed)
        {
            return state;
        }
    }
    ranked.first().map_or(centre, |(_, s)| **s)
}

pub fn build_filter_bank(cfg: &BankConfig) -> Result<FilterBank, PipelineError> {
    let (width, height) = (cfg.intrinsics.width_px, cfg.intrinsics.height_px);
    let region = match cfg.region {
        Some(r) => r,
        None => project_line_box(&cfg.states, &cfg.runway, RunwaySide::Left, &cfg.intrinsics)?,
    };
    let scheme = partition_region(&region, cfg.delta)?;

    let sub_boxes = subdivide(&cfg.states, cfg.pairing_grid);
    let mut pairs = Vec::with_capacity(sub_boxes.len());
    let mut seeds = Vec::with_capacity(sub_boxes.len());
    for sub in &sub_boxes {
        let zl = project_line_box(sub, &cfg.runway, RunwaySide::Left, &cfg.intrinsics)?;
        let zr = project_line_box(sub, &cfg.runway, RunwaySide::Right, &cfg.intrinsics)?;
        pairs.push((zl, zr));
        let state = AircraftState::from_array(sub.center());
        if let Ok(proj) = project_line(&state, &cfg.runway, RunwaySide::Left, &cfg.intrinsics) {
            seeds.push((state, proj));
        }
    }
    let whole_right =
        project_line_box(&cfg.states, &cfg.runway, RunwaySide::Right, &cfg.intrinsics)?;

    let mut cells = Vec::with_capacity(scheme.cells.len());
    for (cell_id, zeta) in scheme.cells.iter().enumerate() {
        let mut right_zeta: Option<SegmentBox> = None;
        for (zl, zr) in &pairs {
            if zl.intersects_box(zeta) {
                right_zeta = Some(match right_zeta {
                    Some(acc) => SegmentBox::hull(&acc, zr),
                    None => *zr,
                });
            }
        }
        let right_zeta = right_zeta.unwrap_or(whole_right);
        let left = cell_filter(zeta, cell_id, width, height)?;
        let right = cell_filter(&right_zeta, cell_id, width, height)?;
        let fallback = fallback_state(&ImageSegment::from_array(zeta.center()), cfg, &seeds);
        cells.push(BankCell {
            zeta: *zeta,
            right_zeta,
            left,
            right,
            fallback,
        });
    }

    let lip_left = inverse_lipschitz_bound(
        &cfg.states,
        &cfg.runway,
        RunwaySide::Left,
        &cfg.intrinsics,
        cfg.lipschitz_grid,
    )?;
    let lip_right = inverse_lipschitz_bound(
        &cfg.states,
        &cfg.runway,
        RunwaySide::Right,
        &cfg.intrinsics,
        cfg.lipschitz_grid,
    )?;

    Ok(FilterBank {
        config: cfg.clone(),
        scheme,
        cells,
        lipschitz: lip_left.max(lip_right),
    })
}

/// Per-cell screening outcome; kept for every cell so rejections are
/// diagnosable. `mismatch` counts the observed lit pixels the cell leaves
/// unexplained. For an accepting cell the masked observation equals the
/// witness rasters exactly, so this is the count of pixels outside the two
/// matched lines; a cell whose mask clips the true segment explains strictly
/// less than the cell that contains it, which is what the tie-break needs.
/// Computed for accepting cells, and for every cell when nothing accepts.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CellScore {
    pub cell_id: usize,
    pub accepted: bool,
    pub mismatch: Option<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Selection {
    pub cell_id: usize,
    /// Observation restricted to the selected cell's mask pair.
    pub filtered: BinaryImage,
    pub left_witness: LineWitness,
    pub right_witness: LineWitness,
    pub scores: Vec<CellScore>,
}

fn unexplained(observed: &BinaryImage, lit_total: usize, cell: &BankCell) -> usize {
    let union = cell.left.mask.image.or(&cell.right.mask.image);
    lit_total - observed.and(&union).count_lit()
}

/// Screen the observation against every cell and return the accepting one.
/// Ties are broken by the fewest unexplained pixels, then the lower cell id;
/// the full score table rides along for diagnostics.
pub fn nn_f(observed: &BinaryImage, bank: &FilterBank) -> Result<Selection, PipelineError> {
    if observed.width() != bank.width() || observed.height() != bank.height() {
        return Err(PipelineError::DimensionMismatch {
            got_w: observed.width(),
            got_h: observed.height(),
            want_w: bank.width(),
            want_h: bank.height(),
        });
    }
    let lit_total = observed.count_lit();
    let mut scores = Vec::with_capacity(bank.cells.len());
    let mut accepted = Vec::new();
    for (cell_id, cell) in bank.cells.iter().enumerate() {
        let left = geometric_filter(observed, &cell.left.mask, &cell.zeta, &cell.left.range);
        let right =
            geometric_filter(observed, &cell.right.mask, &cell.right_zeta, &cell.right.range);
        let mismatch = match (&left, &right) {
            (Some(_), Some(_)) => Some(unexplained(observed, lit_total, cell)),
            _ => None,
        };
        scores.push(CellScore {
            cell_id,
            accepted: mismatch.is_some(),
            mismatch,
        });
        if let (Some(l), Some(r)) = (left, right) {
            accepted.push((mismatch.unwrap_or(usize::MAX), cell_id, l, r));
        }
    }
    let best = accepted.into_iter().min_by_key(|(m, id, _, _)| (*m, *id));
    match best {
        Some((_, cell_id, left_witness, right_witness)) => {
            let cell = &bank.cells[cell_id];
            let union = cell.left.mask.image.or(&cell.right.mask.image);
            Ok(Selection {
                cell_id,
                filtered: observed.and(&union),
                left_witness,
                right_witness,
                scores,
            })
        }
        None => {
            for (score, cell) in scores.iter_mut().zip(&bank.cells) {
                score.mismatch = Some(unexplained(observed, lit_total, cell));
            }
            Err(PipelineError::NoCellAccepts { scores })
        }
    }
}

/// Endpoint estimate from the extremal lit pixels along the line's dominant
/// direction, oriented to match the reference segment's endpoint order.
fn endpoint_targets(
    sub: &BinaryImage,
    reference: &ImageSegment,
) -> Result<ImageSegment, PipelineError> {
    let x_dominant =
        (reference.x2 - reference.x1).abs() >= (reference.y2 - reference.y1).abs();
    let key = |&(k, l): &(u32, u32)| if x_dominant { (k, l) } else { (l, k) };
    let first = sub.iter_lit().min_by_key(key);
    let last = sub.iter_lit().max_by_key(key);
    let (Some(a), Some(b)) = (first, last) else {
        return Err(PipelineError::DegenerateObservation);
    };
    if a == b {
        return Err(PipelineError::DegenerateObservation);
    }
    let centre = |(k, l): (u32, u32)| (f64::from(k) - 0.5, f64::from(l) - 0.5);
    let (pa, pb) = (centre(a), centre(b));
    let (ra, rb) = if x_dominant {
        (reference.x1, reference.x2)
    } else {
        (reference.y1, reference.y2)
    };
    let (p1, p2) = if ra <= rb { (pa, pb) } else { (pb, pa) };
    Ok(ImageSegment::new(p1.0, p1.1, p2.0, p2.1))
}

/// Invert the filtered observation to a state: per line, take the extremal
/// lit pixels as endpoint estimates and solve for the state projecting onto
/// them, seeded at the cell's fallback; the two per-line states are averaged.
pub fn baseline_estimator(
    filtered: &BinaryImage,
    cell_id: usize,
    bank: &FilterBank,
) -> Result<AircraftState, PipelineError> {
    let cell = &bank.cells[cell_id];
    let mut per_line = [AircraftState::new(0.0, 0.0, 0.0, 0.0); 2];
    for (slot, (side, filter, zeta)) in [
        (RunwaySide::Left, &cell.left, &cell.zeta),
        (RunwaySide::Right, &cell.right, &cell.right_zeta),
    ]
    .into_iter()
    .enumerate()
    {
        let sub = apply_mask(filtered, &filter.mask);
        let target = endpoint_targets(&sub, &ImageSegment::from_array(zeta.center()))?;
        per_line[slot] = solve_state_from_segment(
            &target,
            &bank.config.runway,
            side,
            &bank.config.intrinsics,
            &cell.fallback,
        )?;
    }
    let (a, b) = (per_line[0].as_array(), per_line[1].as_array());
    Ok(AircraftState::from_array(std::array::from_fn(|i| {
        0.5 * (a[i] + b[i])
    })))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EstimateSource {
    EstimatorPassed,
    CenterFallback,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ShieldedEstimate {
    pub state: AircraftState,
    pub cell_id: usize,
    pub certified_radius: f64,
    pub source: EstimateSource,
}

/// Pass the estimate through when its left-border projection lands inside
/// the selected cell (boundary inclusive); otherwise substitute the cell's
/// fallback state. `cell_id` must come from a [`nn_f`] selection.
pub fn shield(estimate: &AircraftState, cell_id: usize, bank: &FilterBank) -> ShieldedEstimate {
    let cell = &bank.cells[cell_id];
    let passes = project_line(
        estimate,
        &bank.config.runway,
        RunwaySide::Left,
        &bank.config.intrinsics,
    )
    .map(|seg| cell.zeta.contains(&seg.as_array()))
    .unwrap_or(false);
    let (state, source) = if passes {
        (*estimate, EstimateSource::EstimatorPassed)
    } else {
        (cell.fallback, EstimateSource::CenterFallback)
    };
    ShieldedEstimate {
        state,
        cell_id,
        certified_radius: bank.error_bound(),
        source,
    }
}

/// Scope check for synthetic scenes with a known noise layer: the error
/// guarantee needs the noise to stay off the true cell's masks and to not
/// reproduce any admissible line raster exactly.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AssumptionReport {
    /// Noise layer has no lit pixel under the true cell's mask pair.
    pub noise_clears_mask: bool,
    /// Noise layer differs from every candidate raster of every cell.
    pub noise_unlike_lines: bool,
}

impl AssumptionReport {
    pub fn in_scope(&self) -> bool {
        self.noise_clears_mask && self.noise_unlike_lines
    }
}

pub fn check_assumptions(
    noise: &BinaryImage,
    true_cell: usize,
    bank: &FilterBank,
) -> AssumptionReport {
    let cell = &bank.cells[true_cell];
    let union = cell.left.mask.image.or(&cell.right.mask.image);
    let noise_clears_mask = noise.and(&union).is_empty();

    // A raster lights at most one pixel per column (or per row), so noise
    // with more lit pixels than the longer image side can't match any.
    // Equality with a raster means the raster is fully lit and accounts for
    // every noise pixel, which line_coverage checks without allocating.
    let max_raster = bank.width().max(bank.height()) as usize;
    let lit = noise.count_lit();
    let mut noise_unlike_lines = true;
    if lit > 0 && lit <= max_raster {
        'scan: for c in &bank.cells {
            for filter in [&c.left, &c.right] {
                for line in &filter.candidates.lines {
                    let (on, len) = line_coverage(noise, line);
                    if on == len && len == lit {
                        noise_unlike_lines = false;
                        break 'scan;
                    }
                }
            }
        }
    }
    AssumptionReport {
        noise_clears_mask,
        noise_unlike_lines,
    }
}

/// Lowest-id cell containing the state's left-border projection.
pub fn containing_cell(
    state: &AircraftState,
    bank: &FilterBank,
) -> Result<Option<usize>, GeometryError> {
    let seg = project_line(
        state,
        &bank.config.runway,
        RunwaySide::Left,
        &bank.config.intrinsics,
    )?;
    let zeta = seg.as_array();
    Ok(bank
        .cells
        .iter()
        .position(|cell| cell.zeta.contains(&zeta)))
}
