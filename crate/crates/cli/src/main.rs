//! `certl`: scene synthesis, filter-bank builds, and the certified
//! runway-line pipeline as file-to-file subcommands. Exit codes: 0 success,
//! 2 no partition cell accepts the observation, 3 unreadable or malformed
//! data, 4 configuration or flag error.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use certl::bank_io::{load_bank, save_bank, BankFileError};
use certl::config::{read_bank_config, ConfigError};
use certl::naive;
use certl::pgm::{read_image, write_image, ImageFileError, PixmapFormat};
use certl::report::{state_key_values, read_state, write_state, KeyValues, TextFileError};
use certl::scene::{default_intrinsics, default_runway, synthesize_scene, NoiseSpec, SceneError};
use certl_core::camera::{AircraftState, GeometryError};
use certl_core::hough::{candidate_steps, LineWitness};
use certl_core::pipeline::{
    baseline_estimator, build_filter_bank, check_assumptions, containing_cell, nn_f, shield,
    CellScore, EstimateSource, FilterBank, PipelineError, Selection, ShieldedEstimate,
};
use certl_core::render::render_runway;
use clap::{Parser, Subcommand};
use thiserror::Error;

#[derive(Parser)]
#[command(name = "certl", version, about = "Certified runway-line perception tools")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a runway scene and compose it with seeded noise.
    GenScene {
        /// Aircraft state as four comma-separated numbers: pitch,x,y,z.
        #[arg(long, value_name = "P,X,Y,Z")]
        state: String,
        /// Noise layer: none | salt:D | segments:N:LO-HI | blobs:N:LO-HI |
        /// adversarial-runway-copy, optionally suffixed with :avoid=R.
        #[arg(long, default_value = "none", value_name = "SPEC")]
        noise: String,
        /// Noise generator seed.
        #[arg(long, default_value_t = 0, value_name = "N")]
        seed: u64,
        /// Output image (packed PGM).
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
        /// Also write the ground-truth state here.
        #[arg(long, value_name = "FILE")]
        truth_out: Option<PathBuf>,
        /// Bank config supplying camera and runway geometry; built-in
        /// defaults are used when omitted.
        #[arg(long, value_name = "FILE")]
        config: Option<PathBuf>,
    },
    /// Build a filter bank from a config and save it.
    BuildBank {
        #[arg(long, value_name = "FILE")]
        config: PathBuf,
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
    },
    /// Screen a scene against every bank cell and write the masked image.
    RunFilter {
        #[arg(long, value_name = "FILE")]
        bank: PathBuf,
        #[arg(long = "in", value_name = "FILE")]
        input: PathBuf,
        /// Filtered observation; only written when a cell accepts.
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
        /// Per-cell score table and selection summary.
        #[arg(long, value_name = "FILE")]
        report: PathBuf,
    },
    /// Run the full pipeline and write the shielded state estimate.
    Estimate {
        #[arg(long, value_name = "FILE")]
        bank: PathBuf,
        #[arg(long = "in", value_name = "FILE")]
        input: PathBuf,
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
    },
    /// Score a directory of scenes against their ground-truth states.
    Eval {
        #[arg(long, value_name = "FILE")]
        bank: PathBuf,
        /// Directory of *.pgm scenes.
        #[arg(long, value_name = "DIR")]
        scenes: PathBuf,
        /// Directory holding one <scene-stem>.txt truth per scene.
        #[arg(long, value_name = "DIR")]
        truths: PathBuf,
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
    },
    /// Sweep the full line grid with no per-cell restriction.
    NaiveHough {
        #[arg(long = "in", value_name = "FILE")]
        input: PathBuf,
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
    },
}

#[derive(Debug, Error)]
enum CliError {
    #[error("no partition cell accepts the observation")]
    NoPartitionAccepts,
    #[error(transparent)]
    Image(#[from] ImageFileError),
    #[error(transparent)]
    Bank(#[from] BankFileError),
    #[error(transparent)]
    Text(#[from] TextFileError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("{0}")]
    Flag(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::NoPartitionAccepts => 2,
            CliError::Image(_)
            | CliError::Bank(_)
            | CliError::Text(_)
            | CliError::Geometry(_)
            | CliError::Io(_) => 3,
            CliError::Config(_) | CliError::Scene(_) | CliError::Flag(_) => 4,
            CliError::Pipeline(e) => match e {
                PipelineError::NoCellAccepts { .. } => 2,
                PipelineError::DimensionMismatch { .. } => 3,
                _ => 4,
            },
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            // Help and version requests arrive as Err but are not failures.
            let failed = err.use_stderr();
            let _ = err.print();
            return ExitCode::from(if failed { 4 } else { 0 });
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("certl: {err}");
            ExitCode::from(err.exit_code())
        }
    }
}

fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::GenScene { state, noise, seed, out, truth_out, config } => gen_scene(
            &state,
            &noise,
            seed,
            &out,
            truth_out.as_deref(),
            config.as_deref(),
        ),
        Command::BuildBank { config, out } => build_bank(&config, &out),
        Command::RunFilter { bank, input, out, report } => {
            run_filter(&bank, &input, &out, &report)
        }
        Command::Estimate { bank, input, out } => estimate(&bank, &input, &out),
        Command::Eval { bank, scenes, truths, out } => eval(&bank, &scenes, &truths, &out),
        Command::NaiveHough { input, out } => naive_hough(&input, &out),
    }
}

fn parse_state(raw: &str) -> Result<AircraftState, CliError> {
    let fail = || CliError::Flag(format!("--state must be pitch,x,y,z, got {raw:?}"));
    let parts: Vec<&str> = raw.split(',').collect();
    if parts.len() != 4 {
        return Err(fail());
    }
    let mut values = [0.0_f64; 4];
    for (slot, part) in values.iter_mut().zip(&parts) {
        *slot = part.trim().parse().map_err(|_| fail())?;
        if !slot.is_finite() {
            return Err(fail());
        }
    }
    Ok(AircraftState::from_array(values))
}

fn gen_scene(
    state: &str,
    noise: &str,
    seed: u64,
    out: &Path,
    truth_out: Option<&Path>,
    config: Option<&Path>,
) -> Result<(), CliError> {
    let truth = parse_state(state)?;
    let spec = NoiseSpec::parse(noise, seed)?;
    let (intrinsics, runway) = match config {
        Some(path) => {
            let cfg = read_bank_config(path)?;
            (cfg.intrinsics, cfg.runway)
        }
        None => (default_intrinsics(), default_runway()),
    };
    let record = synthesize_scene(&truth, &runway, &intrinsics, &spec, None)?;
    write_image(out, &record.image, PixmapFormat::Packed)?;
    if let Some(path) = truth_out {
        write_state(path, &record.truth)?;
    }
    Ok(())
}

fn build_bank(config: &Path, out: &Path) -> Result<(), CliError> {
    let cfg = read_bank_config(config)?;
    let started = Instant::now();
    let bank = build_filter_bank(&cfg)?;
    eprintln!(
        "built {} cells in {:.1}s, certified radius {:.6}",
        bank.cells.len(),
        started.elapsed().as_secs_f64(),
        bank.error_bound(),
    );
    save_bank(out, &bank)?;
    Ok(())
}

fn score_rows(kv: &mut KeyValues, scores: &[CellScore]) {
    for score in scores {
        kv.push(&format!("cell.{}.accepted", score.cell_id), score.accepted);
        if let Some(unexplained) = score.mismatch {
            kv.push(&format!("cell.{}.unexplained", score.cell_id), unexplained);
        }
    }
}

fn witness_rows(kv: &mut KeyValues, label: &str, witness: &LineWitness) {
    let [x1, y1, x2, y2] = witness.segment.as_array();
    for (name, value) in [("x1", x1), ("y1", y1), ("x2", x2), ("y2", y2)] {
        kv.push_f64(&format!("{label}.{name}"), value);
    }
    kv.push_f64(&format!("{label}.theta"), witness.hough.theta);
    kv.push_f64(&format!("{label}.rho"), witness.hough.rho);
}

fn run_filter(
    bank_path: &Path,
    input: &Path,
    out: &Path,
    report_path: &Path,
) -> Result<(), CliError> {
    let bank = load_bank(bank_path)?;
    let observed = read_image(input)?;
    match nn_f(&observed, &bank) {
        Ok(selection) => {
            write_image(out, &selection.filtered, PixmapFormat::Packed)?;
            let mut kv = KeyValues::new();
            kv.push("cells", bank.cells.len());
            kv.push("selected", selection.cell_id);
            witness_rows(&mut kv, "left", &selection.left_witness);
            witness_rows(&mut kv, "right", &selection.right_witness);
            score_rows(&mut kv, &selection.scores);
            kv.write(report_path)?;
            Ok(())
        }
        Err(PipelineError::NoCellAccepts { scores }) => {
            let mut kv = KeyValues::new();
            kv.push("cells", scores.len());
            kv.push("selected", "none");
            score_rows(&mut kv, &scores);
            kv.write(report_path)?;
            Err(CliError::NoPartitionAccepts)
        }
        Err(err) => Err(err.into()),
    }
}

/// Estimator failures collapse into the same fallback the shield uses for an
/// out-of-cell estimate, so the caller always gets a state carrying the
/// certified radius and an honest source tag.
fn shielded_estimate(selection: &Selection, bank: &FilterBank) -> ShieldedEstimate {
    match baseline_estimator(&selection.filtered, selection.cell_id, bank) {
        Ok(state) => shield(&state, selection.cell_id, bank),
        Err(_) => ShieldedEstimate {
            state: bank.cells[selection.cell_id].fallback,
            cell_id: selection.cell_id,
            certified_radius: bank.error_bound(),
            source: EstimateSource::CenterFallback,
        },
    }
}

fn source_name(source: EstimateSource) -> &'static str {
    match source {
        EstimateSource::EstimatorPassed => "estimator-passed",
        EstimateSource::CenterFallback => "center-fallback",
    }
}

fn estimate(bank_path: &Path, input: &Path, out: &Path) -> Result<(), CliError> {
    let bank = load_bank(bank_path)?;
    let observed = read_image(input)?;
    let selection = match nn_f(&observed, &bank) {
        Ok(selection) => selection,
        Err(PipelineError::NoCellAccepts { .. }) => return Err(CliError::NoPartitionAccepts),
        Err(err) => return Err(err.into()),
    };
    let shielded = shielded_estimate(&selection, &bank);
    let mut kv = state_key_values(&shielded.state);
    kv.push("cell", shielded.cell_id);
    kv.push_f64("certified_radius", shielded.certified_radius);
    kv.push("source", source_name(shielded.source));
    kv.write(out)?;
    Ok(())
}

struct SceneOutcome {
    stem: String,
    expected: Option<usize>,
    in_scope: bool,
    selected: Option<usize>,
    filtered_exact: Option<bool>,
    error: Option<f64>,
    source: Option<EstimateSource>,
}

fn state_distance(a: &AircraftState, b: &AircraftState) -> f64 {
    let (a, b) = (a.as_array(), b.as_array());
    (0..4).map(|i| (a[i] - b[i]).abs()).fold(0.0, f64::max)
}

fn eval_scene(
    stem: String,
    observed_path: &Path,
    truth_path: &Path,
    bank: &FilterBank,
) -> Result<SceneOutcome, CliError> {
    let observed = read_image(observed_path)?;
    let truth = read_state(truth_path)?;
    let expected = containing_cell(&truth, bank)?;
    let runway_layer = render_runway(&truth, &bank.config.runway, &bank.config.intrinsics)?;
    let noise = observed.and_not(&runway_layer);
    let in_scope = expected
        .is_some_and(|cell| check_assumptions(&noise, cell, bank).in_scope());
    let mut outcome = SceneOutcome {
        stem,
        expected,
        in_scope,
        selected: None,
        filtered_exact: None,
        error: None,
        source: None,
    };
    match nn_f(&observed, bank) {
        Ok(selection) => {
            let shielded = shielded_estimate(&selection, bank);
            outcome.selected = Some(selection.cell_id);
            outcome.filtered_exact = Some(selection.filtered == runway_layer);
            outcome.error = Some(state_distance(&truth, &shielded.state));
            outcome.source = Some(shielded.source);
        }
        Err(PipelineError::NoCellAccepts { .. }) => {}
        Err(err) => return Err(err.into()),
    }
    Ok(outcome)
}

fn eval(bank_path: &Path, scenes: &Path, truths: &Path, out: &Path) -> Result<(), CliError> {
    let bank = load_bank(bank_path)?;
    let mut scene_files = Vec::new();
    for entry in fs::read_dir(scenes)? {
        let path = entry?.path();
        if path.extension().is_some_and(|ext| ext == "pgm") {
            scene_files.push(path);
        }
    }
    scene_files.sort();

    let mut outcomes = Vec::with_capacity(scene_files.len());
    for path in &scene_files {
        let stem = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        let truth_path = truths.join(format!("{stem}.txt"));
        outcomes.push(eval_scene(stem, path, &truth_path, &bank)?);
    }

    let in_scope: Vec<&SceneOutcome> = outcomes.iter().filter(|o| o.in_scope).collect();
    let correct_cell = in_scope
        .iter()
        .filter(|o| o.selected.is_some() && o.selected == o.expected)
        .count();
    let filtered_exact = in_scope
        .iter()
        .filter(|o| o.filtered_exact == Some(true))
        .count();
    let bound = bank.error_bound();
    let within_bound = in_scope
        .iter()
        .filter(|o| o.error.is_some_and(|e| e <= bound))
        .count();
    let max_error = outcomes
        .iter()
        .filter_map(|o| o.error)
        .fold(None, |acc: Option<f64>, e| Some(acc.map_or(e, |a| a.max(e))));

    let mut kv = KeyValues::new();
    kv.push("scenes", outcomes.len());
    kv.push("in_scope", in_scope.len());
    kv.push("correct_cell", correct_cell);
    kv.push("filtered_exact", filtered_exact);
    kv.push("within_bound", within_bound);
    if let Some(max_error) = max_error {
        kv.push_f64("max_error", max_error);
    }
    kv.push_f64("error_bound", bound);
    kv.push_f64("delta", bank.config.delta);
    kv.push_f64("lipschitz", bank.lipschitz);
    for o in &outcomes {
        let cell_name = |cell: Option<usize>| {
            cell.map_or_else(|| "none".to_string(), |c| c.to_string())
        };
        kv.push(&format!("{}.expected", o.stem), cell_name(o.expected));
        kv.push(&format!("{}.in_scope", o.stem), o.in_scope);
        kv.push(&format!("{}.selected", o.stem), cell_name(o.selected));
        if let Some(exact) = o.filtered_exact {
            kv.push(&format!("{}.filtered_exact", o.stem), exact);
        }
        if let Some(error) = o.error {
            kv.push_f64(&format!("{}.error", o.stem), error);
        }
        if let Some(source) = o.source {
            kv.push(&format!("{}.source", o.stem), source_name(source));
        }
    }
    kv.write(out)?;
    Ok(())
}

fn naive_hough(input: &Path, out: &Path) -> Result<(), CliError> {
    let observed = read_image(input)?;
    // No cell narrows the grid here, so sweep a coarser one than the
    // per-cell candidate resolution to keep the full-plane scan quick.
    let (theta_fine, rho_fine) = candidate_steps(observed.width(), observed.height());
    let theta_step = 2.0 * theta_fine;
    let rho_step = 2.0 * rho_fine;
    const MIN_SUPPORT: usize = 8;
    const MAX_REPORTED: usize = 64;
    let hits = naive::sweep(&observed, theta_step, rho_step, MIN_SUPPORT);
    let mut kv = KeyValues::new();
    kv.push("lines", hits.len().min(MAX_REPORTED));
    kv.push("found", hits.len());
    kv.push_f64("theta_step", theta_step);
    kv.push_f64("rho_step", rho_step);
    kv.push("min_support", MIN_SUPPORT);
    for (i, hit) in hits.iter().take(MAX_REPORTED).enumerate() {
        kv.push_f64(&format!("line.{i}.theta"), hit.line.theta);
        kv.push_f64(&format!("line.{i}.rho"), hit.line.rho);
        kv.push(&format!("line.{i}.support"), hit.support);
        kv.push(&format!("line.{i}.raster_len"), hit.raster_len);
    }
    kv.write(out)?;
    Ok(())
}
