//! Temporary diagnostic for criterion-6 error profiles. Delete me.

use certl::scene::{synthesize_scene, NoiseSpec};
use certl_core::camera::{
    project_line, solve_state_from_segment, AircraftState, CameraIntrinsics, ImageSegment,
    RunwaySide, RunwaySpec,
};
use certl_core::image::BinaryImage;
use certl_core::interval::{Interval, IntervalBox};
use certl_core::pipeline::{
    baseline_estimator, build_filter_bank, nn_f, shield, BankConfig, FilterBank,
};
use certl_core::reach::apply_mask;
use certl_core::render::render_segment;
use rand::rngs::StdRng;
use rand::{RngExt, SeedableRng};
use std::sync::OnceLock;

const ENVELOPE_CENTER: [f64; 4] = [0.3, 0.0, 0.1, 1.0];
const ENVELOPE_RADIUS: [f64; 4] = [0.1, 0.094, 0.094, 0.0025];
const REGION_RADIUS_PX: [f64; 4] = [18.0, 18.0, 6.0, 18.0];

fn acceptance_config() -> BankConfig {
    let intr = CameraIntrinsics::with_pixel_pitch(8.0e-3, 60.0e-6, 160, 120);
    let runway = RunwaySpec::new(-0.15, 0.0, 0.15, 0.0, 0.0, 1.6).unwrap();
    let states = IntervalBox {
        dims: std::array::from_fn(|i| {
            Interval::new(
                ENVELOPE_CENTER[i] - ENVELOPE_RADIUS[i],
                ENVELOPE_CENTER[i] + ENVELOPE_RADIUS[i],
            )
        }),
    };
    let centre = project_line(
        &AircraftState::from_array(ENVELOPE_CENTER),
        &runway,
        RunwaySide::Left,
        &intr,
    )
    .unwrap()
    .as_array();
    let mut cfg = BankConfig::new(intr, runway, states, 6.0);
    cfg.region = Some(IntervalBox {
        dims: std::array::from_fn(|i| {
            Interval::new(centre[i] - REGION_RADIUS_PX[i], centre[i] + REGION_RADIUS_PX[i])
        }),
    });
    cfg
}

fn bank() -> &'static FilterBank {
    static BANK: OnceLock<FilterBank> = OnceLock::new();
    BANK.get_or_init(|| build_filter_bank(&acceptance_config()).unwrap())
}

/// Trace the local inverse branch from the envelope centre to `target` by
/// walking zeta in small steps, re-seeding Newton at each previous solution.
fn continuation_solve(target: &ImageSegment, cfg: &BankConfig, steps: usize) -> Option<AircraftState> {
    let centre = AircraftState::from_array(cfg.states.center());
    let start = project_line(&centre, &cfg.runway, RunwaySide::Left, &cfg.intrinsics)
        .unwrap()
        .as_array();
    let goal = target.as_array();
    let mut state = centre;
    for k in 1..=steps {
        let t = k as f64 / steps as f64;
        let mid = ImageSegment::from_array(std::array::from_fn(|i| {
            start[i] + t * (goal[i] - start[i])
        }));
        state =
            solve_state_from_segment(&mid, &cfg.runway, RunwaySide::Left, &cfg.intrinsics, &state)
                .ok()?;
    }
    Some(state)
}

#[test]
fn probe_branches() {
    let bank = bank();
    let cfg = &bank.config;
    println!("lipschitz {} bound {}", bank.lipschitz, bank.error_bound());

    // 1. All 27 fallbacks vs continuation-traced local-branch preimages.
    println!("\n== fallback audit ==");
    for (id, cell) in bank.cells.iter().enumerate() {
        let centre_target = ImageSegment::from_array(cell.zeta.center());
        let traced = continuation_solve(&centre_target, cfg, 16);
        let fb = cell.fallback.as_array();
        match traced {
            Some(t) => {
                let ta = t.as_array();
                let dist: f64 = (0..4).map(|i| (ta[i] - fb[i]).abs()).fold(0.0, f64::max);
                let marker = if dist > 1e-6 { " <== MISMATCH" } else { "" };
                println!(
                    "cell {id:2}: fallback [{:+.4} {:+.4} {:+.4} {:+.4}] traced [{:+.4} {:+.4} {:+.4} {:+.4}]{marker}",
                    fb[0], fb[1], fb[2], fb[3], ta[0], ta[1], ta[2], ta[3]
                );
            }
            None => println!("cell {id:2}: fallback [{:+.4} {:+.4} {:+.4} {:+.4}] traced NONE", fb[0], fb[1], fb[2], fb[3]),
        }
    }

    // 2. Hull of traced local-branch preimages over cell centres AND region
    // corners: how far outside the envelope does the branch wander?
    println!("\n== local branch hull ==");
    let region = cfg.region.as_ref().unwrap();
    let mut lo = [f64::INFINITY; 4];
    let mut hi = [f64::NEG_INFINITY; 4];
    let mut absorb = |s: &AircraftState| {
        let a = s.as_array();
        for i in 0..4 {
            lo[i] = lo[i].min(a[i]);
            hi[i] = hi[i].max(a[i]);
        }
    };
    for corner in 0..16u32 {
        let target = ImageSegment::from_array(std::array::from_fn(|i| {
            if corner >> i & 1 == 0 {
                region.dims[i].lo
            } else {
                region.dims[i].hi
            }
        }));
        match continuation_solve(&target, cfg, 32) {
            Some(s) => absorb(&s),
            None => println!("region corner {corner:02b} unreachable on local branch"),
        }
    }
    for cell in &bank.cells {
        if let Some(s) = continuation_solve(&ImageSegment::from_array(cell.zeta.center()), cfg, 16)
        {
            absorb(&s);
        }
    }
    println!("envelope    pitch [0.2, 0.4]  x [-0.094, 0.094]  y [0.006, 0.194]  z [0.9975, 1.0025]");
    println!(
        "branch hull pitch [{:.4}, {:.4}]  x [{:.4}, {:.4}]  y [{:.4}, {:.4}]  z [{:.4}, {:.4}]",
        lo[0], hi[0], lo[1], hi[1], lo[2], hi[2], lo[3], hi[3]
    );

    // 3. Per-line estimator solutions across the criterion-6 scene set.
    println!("\n== per-line solve spread ==");
    let mut rng = StdRng::seed_from_u64(66);
    let mut kept: Vec<(AircraftState, usize)> = Vec::new();
    while kept.len() < 100 {
        let state = AircraftState::from_array(std::array::from_fn(|i| {
            let iv = cfg.states.dims[i];
            rng.random_range(iv.lo..=iv.hi)
        }));
        let Ok(seg) = project_line(&state, &cfg.runway, RunwaySide::Left, &cfg.intrinsics) else {
            continue;
        };
        let zeta = seg.as_array();
        let Some(cell_id) = bank.cells.iter().position(|c| c.zeta.contains(&zeta)) else {
            continue;
        };
        let cell = &bank.cells[cell_id];
        let ok = (0..4).all(|i| {
            let lo_edge = cell.zeta.dims[i].lo <= region.dims[i].lo + 1e-9;
            let hi_edge = cell.zeta.dims[i].hi >= region.dims[i].hi - 1e-9;
            let lo_m = zeta[i] - cell.zeta.dims[i].lo;
            let hi_m = cell.zeta.dims[i].hi - zeta[i];
            lo_m >= if lo_edge { 2.0 } else { 3.6 } && hi_m >= if hi_edge { 2.0 } else { 3.6 }
        });
        if !ok || zeta[1] - zeta[3] < 4.0 {
            continue;
        }
        let right_seg = project_line(&state, &cfg.runway, RunwaySide::Right, &cfg.intrinsics)
            .unwrap();
        let left = render_segment(&seg, 160, 120);
        let right = render_segment(&right_seg, 160, 120);
        if !left.and(&cell.right.mask.image).is_empty()
            || !right.and(&cell.left.mask.image).is_empty()
        {
            continue;
        }
        kept.push((state, cell_id));
    }
    let mut per_line_lo = [f64::INFINITY; 4];
    let mut per_line_hi = [f64::NEG_INFINITY; 4];
    let mut near_count = 0usize;
    let mut far_count = 0usize;
    let mut worst_near: f64 = 0.0;
    for (i, (truth, cell_id)) in kept.iter().enumerate() {
        let cell = &bank.cells[*cell_id];
        let mut spec = NoiseSpec::parse("salt:0.02", 6600 + i as u64).unwrap();
        spec.keep_out = Some(cell.left.mask.image.or(&cell.right.mask.image));
        let scene =
            synthesize_scene(truth, &cfg.runway, &cfg.intrinsics, &spec, Some(bank)).unwrap();
        let selection = nn_f(&scene.image, bank).unwrap();
        // replicate baseline_estimator internals per line with a TRUTH seed so
        // we see the local-branch solution the estimator should have found
        let scell = &bank.cells[selection.cell_id];
        for (side, filter, zeta_box) in [
            (RunwaySide::Left, &scell.left, &scell.zeta),
            (RunwaySide::Right, &scell.right, &scell.right_zeta),
        ] {
            let sub = apply_mask(&selection.filtered, &filter.mask);
            let reference = ImageSegment::from_array(zeta_box.center());
            let target = endpoint_targets_copy(&sub, &reference);
            if let Some(t) = target {
                if let Ok(s) =
                    solve_state_from_segment(&t, &cfg.runway, side, &cfg.intrinsics, truth)
                {
                    let a = s.as_array();
                    if a[3] < 3.0 {
                        near_count += 1;
                        for k in 0..4 {
                            per_line_lo[k] = per_line_lo[k].min(a[k]);
                            per_line_hi[k] = per_line_hi[k].max(a[k]);
                        }
                        let ta = truth.as_array();
                        let err = (0..4).map(|k| (a[k] - ta[k]).abs()).fold(0.0, f64::max);
                        worst_near = worst_near.max(err);
                    } else {
                        far_count += 1;
                    }
                }
            }
        }
        let est = baseline_estimator(&selection.filtered, selection.cell_id, bank);
        let shielded = match est {
            Ok(e) => shield(&e, selection.cell_id, bank),
            Err(_) => shield(&bank.cells[selection.cell_id].fallback, selection.cell_id, bank),
        };
        let ta = truth.as_array();
        let sa = shielded.state.as_array();
        let err = (0..4).map(|k| (sa[k] - ta[k]).abs()).fold(0.0, f64::max);
        if err > 2.0 {
            println!("scene {i}: shielded err {err:.3} (cell {cell_id})");
        }
    }
    println!("truth-seeded per-line solves: {near_count} near-branch, {far_count} far-branch");
    println!(
        "near-branch per-line hull pitch [{:.4}, {:.4}]  x [{:.4}, {:.4}]  y [{:.4}, {:.4}]  z [{:.4}, {:.4}]",
        per_line_lo[0], per_line_hi[0], per_line_lo[1], per_line_hi[1],
        per_line_lo[2], per_line_hi[2], per_line_lo[3], per_line_hi[3]
    );
    println!("worst near-branch per-line error from truth: {worst_near:.4}");
}

fn endpoint_targets_copy(sub: &BinaryImage, reference: &ImageSegment) -> Option<ImageSegment> {
    let x_dominant = (reference.x2 - reference.x1).abs() >= (reference.y2 - reference.y1).abs();
    let key = |&(k, l): &(u32, u32)| if x_dominant { (k, l) } else { (l, k) };
    let first = sub.iter_lit().min_by_key(key)?;
    let last = sub.iter_lit().max_by_key(key)?;
    if first == last {
        return None;
    }
    let centre = |(k, l): (u32, u32)| (f64::from(k) - 0.5, f64::from(l) - 0.5);
    let (pa, pb) = (centre(first), centre(last));
    let (ra, rb) = if x_dominant {
        (reference.x1, reference.x2)
    } else {
        (reference.y1, reference.y2)
    };
    let (p1, p2) = if ra <= rb { (pa, pb) } else { (pb, pa) };
    Some(ImageSegment::new(p1.0, p1.1, p2.0, p2.1))
}

fn bounded_newton(
    target: &ImageSegment,
    cfg: &BankConfig,
    seed: &AircraftState,
    bounds: &IntervalBox<4>,
) -> Result<(AircraftState, f64), f64> {
    // returns (state, residual) on convergence, Err(best residual) otherwise
    let goal = target.as_array();
    let residual = |s: &AircraftState| -> Option<[f64; 4]> {
        project_line(s, &cfg.runway, RunwaySide::Left, &cfg.intrinsics)
            .ok()
            .map(|seg| std::array::from_fn(|i| seg.as_array()[i] - goal[i]))
    };
    let amax = |v: &[f64; 4]| v.iter().fold(0.0f64, |a, b| a.max(b.abs()));
    let mut state = *seed;
    let Some(mut res) = residual(&state) else { return Err(f64::INFINITY) };
    for _ in 0..200 {
        let norm = amax(&res);
        if norm <= 1e-9 {
            return Ok((state, norm));
        }
        let Some(j) = numeric_jacobian(&state, cfg) else { return Err(norm) };
        let rhs = [-res[0], -res[1], -res[2], -res[3]];
        let Some(step) = gauss_solve(j, rhs) else { return Err(norm) };
        let mut advanced = false;
        let mut damping = 1.0;
        for _ in 0..40 {
            let trial = AircraftState::new(
                state.pitch + damping * step[0],
                state.x + damping * step[1],
                state.y + damping * step[2],
                state.z + damping * step[3],
            );
            let inside = bounds.contains(&trial.as_array());
            if inside {
                if let Some(tr) = residual(&trial) {
                    if amax(&tr) < norm {
                        state = trial;
                        res = tr;
                        advanced = true;
                        break;
                    }
                }
            }
            damping *= 0.5;
        }
        if !advanced {
            return Err(norm);
        }
    }
    Err(amax(&res))
}

fn numeric_jacobian(state: &AircraftState, cfg: &BankConfig) -> Option<[[f64; 4]; 4]> {
    let f = |s: &AircraftState| -> Option<[f64; 4]> {
        project_line(s, &cfg.runway, RunwaySide::Left, &cfg.intrinsics)
            .ok()
            .map(|seg| seg.as_array())
    };
    let base = state.as_array();
    let mut j = [[0.0; 4]; 4];
    for col in 0..4 {
        let h = 1e-7 * (1.0 + base[col].abs());
        let mut plus = base;
        plus[col] += h;
        let mut minus = base;
        minus[col] -= h;
        let (fp, fm) = (
            f(&AircraftState::from_array(plus))?,
            f(&AircraftState::from_array(minus))?,
        );
        for row in 0..4 {
            j[row][col] = (fp[row] - fm[row]) / (2.0 * h);
        }
    }
    Some(j)
}

fn gauss_solve(mut a: [[f64; 4]; 4], mut b: [f64; 4]) -> Option<[f64; 4]> {
    for col in 0..4 {
        let pivot = (col..4).max_by(|&r1, &r2| a[r1][col].abs().total_cmp(&a[r2][col].abs()))?;
        if a[pivot][col].abs() < 1e-14 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..4 {
            let m = a[row][col] / a[col][col];
            for k in col..4 {
                a[row][k] -= m * a[col][k];
            }
            b[row] -= m * b[col];
        }
    }
    let mut x = [0.0; 4];
    for row in (0..4).rev() {
        let mut s = b[row];
        for k in row + 1..4 {
            s -= a[row][k] * x[k];
        }
        x[row] = s / a[row][row];
    }
    Some(x)
}

#[test]
fn probe_trust_box() {
    let bank = bank();
    let cfg = &bank.config;

    // J inverse rows at the envelope centre
    let centre = AircraftState::from_array(cfg.states.center());
    let j = numeric_jacobian(&centre, cfg).unwrap();
    for r in 0..4 {
        // row r of J^-1 = solve J^T y = e_r ... easier: invert by solving 4 systems
        let mut e = [0.0; 4];
        e[r] = 1.0;
        // column r of J^-1
        let col = gauss_solve(j, e).unwrap();
        println!("J^-1 col {r}: [{:+.5} {:+.5} {:+.5} {:+.5}]", col[0], col[1], col[2], col[3]);
    }
    // row sums via full inverse
    let mut inv = [[0.0; 4]; 4];
    for c in 0..4 {
        let mut e = [0.0; 4];
        e[c] = 1.0;
        let col = gauss_solve(j, e).unwrap();
        for r in 0..4 {
            inv[r][c] = col[r];
        }
    }
    for r in 0..4 {
        let sum: f64 = inv[r].iter().map(|v| v.abs()).sum();
        println!("J^-1 row {r} sum {:.5}", sum);
    }

    // candidate trust box
    let bounds = IntervalBox {
        dims: [
            Interval::new(0.02, 0.9),
            Interval::new(-0.6, 0.6),
            Interval::new(-0.3, 0.6),
            Interval::new(0.3, 2.5),
        ],
    };
    println!("\n== bounded solves for all 27 cell centres ==");
    let seeds: Vec<AircraftState> = {
        let mut v = vec![centre];
        for corner in 0..16u32 {
            v.push(AircraftState::from_array(std::array::from_fn(|i| {
                if corner >> i & 1 == 0 { cfg.states.dims[i].lo } else { cfg.states.dims[i].hi }
            })));
        }
        v
    };
    for (id, cell) in bank.cells.iter().enumerate() {
        let target = ImageSegment::from_array(cell.zeta.center());
        let mut best: Option<(AircraftState, f64)> = None;
        let mut converged = None;
        for seed in &seeds {
            match bounded_newton(&target, cfg, seed, &bounds) {
                Ok((s, r)) => {
                    converged = Some((s, r));
                    break;
                }
                Err(r) => {
                    if best.as_ref().map_or(true, |(_, br)| r < *br) {
                        best = Some((*seed, r));
                    }
                }
            }
        }
        match converged {
            Some((s, _)) => {
                let a = s.as_array();
                println!("cell {id:2}: CONVERGED in box at [{:+.4} {:+.4} {:+.4} {:+.4}]", a[0], a[1], a[2], a[3]);
            }
            None => {
                let r = best.map_or(f64::INFINITY, |(_, r)| r);
                println!("cell {id:2}: no in-box root, best residual {r:.3} px");
            }
        }
    }
}
