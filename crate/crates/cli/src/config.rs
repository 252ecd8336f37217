//! Bank build configuration files: `key = value` text with a canonical key
//! order, so the same config always serializes to the same bytes.
//!
//! Required keys: `width`, `height`, `focal_m`, the sensor size (either
//! `pixel_pitch_m` or `sensor_w_m` + `sensor_h_m`), `runway` (six numbers:
//! left x/z, right x/z, span x/z in meters), `state_lo`/`state_hi` (pitch,
//! x, y, z envelope corners), and `delta` (cell radius in pixels).
//! Optional: `region_lo`/`region_hi` (pixel-space region to tile; derived
//! from the envelope when absent), `pairing_grid`, `lipschitz_grid`.

use crate::report::{KeyValues, TextFileError};
use certl_core::camera::{CameraIntrinsics, RunwaySpec};
use certl_core::interval::{Interval, IntervalBox};
use certl_core::pipeline::BankConfig;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error(transparent)]
    Text(#[from] TextFileError),
    #[error("invalid config {path}: {reason}")]
    Invalid { path: String, reason: String },
}

fn invalid(path: &Path, reason: impl ToString) -> ConfigError {
    ConfigError::Invalid {
        path: path.display().to_string(),
        reason: reason.to_string(),
    }
}

fn box_from(lo: [f64; 4], hi: [f64; 4], what: &str, path: &Path) -> Result<IntervalBox<4>, ConfigError> {
    let mut dims = [Interval::point(0.0); 4];
    for i in 0..4 {
        if !(lo[i].is_finite() && hi[i].is_finite() && lo[i] <= hi[i]) {
            return Err(invalid(
                path,
                format!("{what} axis {i} is not an interval: [{}, {}]", lo[i], hi[i]),
            ));
        }
        dims[i] = Interval::new(lo[i], hi[i]);
    }
    Ok(IntervalBox { dims })
}

pub fn parse_bank_config(kv: &KeyValues, path: &Path) -> Result<BankConfig, ConfigError> {
    let width: u32 = kv
        .require("width", path)?
        .parse()
        .map_err(|_| invalid(path, "width is not an integer"))?;
    let height: u32 = kv
        .require("height", path)?
        .parse()
        .map_err(|_| invalid(path, "height is not an integer"))?;
    if width == 0 || height == 0 {
        return Err(invalid(path, "image dimensions must be positive"));
    }
    let focal = kv.require_f64("focal_m", path)?;
    let intrinsics = if let Some(pitch) = kv.get("pixel_pitch_m") {
        let pitch: f64 = pitch
            .parse()
            .map_err(|_| invalid(path, "pixel_pitch_m is not a number"))?;
        CameraIntrinsics::with_pixel_pitch(focal, pitch, width, height)
    } else {
        CameraIntrinsics::new(
            focal,
            kv.require_f64("sensor_w_m", path)?,
            kv.require_f64("sensor_h_m", path)?,
            width,
            height,
        )
    };
    if !(intrinsics.focal_m > 0.0 && intrinsics.sensor_w_m > 0.0 && intrinsics.sensor_h_m > 0.0) {
        return Err(invalid(path, "camera dimensions must be positive"));
    }
    let r: [f64; 6] = kv.require_floats("runway", path)?;
    let runway = RunwaySpec::new(r[0], r[1], r[2], r[3], r[4], r[5])
        .map_err(|e| invalid(path, e))?;
    let states = box_from(
        kv.require_floats("state_lo", path)?,
        kv.require_floats("state_hi", path)?,
        "state",
        path,
    )?;
    let delta = kv.require_f64("delta", path)?;
    if !(delta.is_finite() && delta > 0.0) {
        return Err(invalid(path, "delta must be positive"));
    }
    let mut cfg = BankConfig::new(intrinsics, runway, states, delta);
    match (kv.get("region_lo"), kv.get("region_hi")) {
        (Some(_), Some(_)) => {
            cfg.region = Some(box_from(
                kv.require_floats("region_lo", path)?,
                kv.require_floats("region_hi", path)?,
                "region",
                path,
            )?);
        }
        (None, None) => {}
        _ => return Err(invalid(path, "region_lo and region_hi must come together")),
    }
    if let Some(raw) = kv.get("pairing_grid") {
        cfg.pairing_grid = raw
            .parse::<usize>()
            .ok()
            .filter(|&g| g >= 1)
            .ok_or_else(|| invalid(path, "pairing_grid must be a positive integer"))?;
    }
    if let Some(raw) = kv.get("lipschitz_grid") {
        cfg.lipschitz_grid = raw
            .parse::<usize>()
            .ok()
            .filter(|&g| g >= 2)
            .ok_or_else(|| invalid(path, "lipschitz_grid must be at least 2"))?;
    }
    Ok(cfg)
}

pub fn read_bank_config(path: &Path) -> Result<BankConfig, ConfigError> {
    let kv = KeyValues::read(path)?;
    parse_bank_config(&kv, path)
}

/// Canonical writer used by fixtures; key order is fixed.
pub fn config_key_values(cfg: &BankConfig) -> KeyValues {
    let floats = |vals: &[f64]| {
        vals.iter()
            .map(|v| format!("{v:?}"))
            .collect::<Vec<_>>()
            .join(" ")
    };
    let mut kv = KeyValues::new();
    kv.push("width", cfg.intrinsics.width_px);
    kv.push("height", cfg.intrinsics.height_px);
    kv.push_f64("focal_m", cfg.intrinsics.focal_m);
    kv.push_f64("sensor_w_m", cfg.intrinsics.sensor_w_m);
    kv.push_f64("sensor_h_m", cfg.intrinsics.sensor_h_m);
    let rw = &cfg.runway;
    kv.push(
        "runway",
        floats(&[rw.left_x, rw.left_z, rw.right_x, rw.right_z, rw.span_x, rw.span_z]),
    );
    kv.push("state_lo", floats(&cfg.states.dims.map(|d| d.lo)));
    kv.push("state_hi", floats(&cfg.states.dims.map(|d| d.hi)));
    kv.push_f64("delta", cfg.delta);
    if let Some(region) = &cfg.region {
        kv.push("region_lo", floats(&region.dims.map(|d| d.lo)));
        kv.push("region_hi", floats(&region.dims.map(|d| d.hi)));
    }
    kv.push("pairing_grid", cfg.pairing_grid);
    kv.push("lipschitz_grid", cfg.lipschitz_grid);
    kv
}

pub fn write_bank_config(path: &Path, cfg: &BankConfig) -> Result<(), ConfigError> {
    config_key_values(cfg).write(path)?;
    Ok(())
}
