//! Synthetic scene generation: a rendered runway composed with a seeded,
//! controllable noise layer by pixel-wise OR, so every pixel stays binary.

use certl_core::camera::{AircraftState, CameraIntrinsics, GeometryError, ImageSegment, RunwaySpec};
use certl_core::image::BinaryImage;
use certl_core::pipeline::{check_assumptions, containing_cell, AssumptionReport, FilterBank};
use certl_core::render::{render_runway, render_segment};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha12Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("bad noise spec {spec:?}: {reason}")]
    BadNoiseSpec { spec: String, reason: String },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Noise layer shape. Everything is deterministic given the seed.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum NoiseMode {
    None,
    /// Independent per-pixel speckle with the given density.
    Salt { density: f64 },
    /// Random straight strokes with lengths drawn from the range.
    Segments { count: u32, min_len: f64, max_len: f64 },
    /// Filled discs with radii drawn from the range.
    Blobs { count: u32, min_radius: u32, max_radius: u32 },
    /// A second runway rendered from a seeded perturbation of the true
    /// state; exists to violate the no-line-like-noise assumption.
    AdversarialRunwayCopy,
}

#[derive(Clone, Debug)]
pub struct NoiseSpec {
    pub mode: NoiseMode,
    pub seed: u64,
    /// Pixels noise may never touch (callers pass a mask, e.g. the true
    /// cell's spatial mask, to make scenes compliant by construction).
    pub keep_out: Option<BinaryImage>,
    /// Self-contained keep-out: clear noise within this Chebyshev radius of
    /// the rendered runway. Spelled `avoid=R` in the spec string.
    pub avoid_radius: Option<u32>,
}

impl NoiseSpec {
    pub fn none(seed: u64) -> NoiseSpec {
        NoiseSpec {
            mode: NoiseMode::None,
            seed,
            keep_out: None,
            avoid_radius: None,
        }
    }

    /// Parses the CLI spelling: `none`, `salt:D`, `segments:N:LO-HI`,
    /// `blobs:N:LO-HI`, `adversarial-runway-copy`, each optionally followed
    /// by `:avoid=R`.
    pub fn parse(spec: &str, seed: u64) -> Result<NoiseSpec, SceneError> {
        let bad = |reason: &str| SceneError::BadNoiseSpec {
            spec: spec.to_string(),
            reason: reason.to_string(),
        };
        let mut parts: Vec<&str> = spec.split(':').collect();
        let avoid_radius = match parts.last().and_then(|p| p.strip_prefix("avoid=")) {
            Some(raw) => {
                parts.pop();
                Some(raw.parse::<u32>().map_err(|_| bad("avoid radius must be an integer"))?)
            }
            None => None,
        };
        let range = |raw: &str| -> Option<(f64, f64)> {
            let (lo, hi) = raw.split_once('-')?;
            let (lo, hi) = (lo.parse().ok()?, hi.parse().ok()?);
            (0.0 <= lo && lo <= hi).then_some((lo, hi))
        };
        let mode = match parts.as_slice() {
            ["none"] => NoiseMode::None,
            ["salt", d] => {
                let density: f64 = d.parse().map_err(|_| bad("salt density must be a number"))?;
                if !(0.0..=1.0).contains(&density) {
                    return Err(bad("salt density must be in [0, 1]"));
                }
                NoiseMode::Salt { density }
            }
            ["segments", n, r] => {
                let count = n.parse().map_err(|_| bad("segment count must be an integer"))?;
                let (min_len, max_len) =
                    range(r).ok_or_else(|| bad("segment length range must be LO-HI"))?;
                NoiseMode::Segments { count, min_len, max_len }
            }
            ["blobs", n, r] => {
                let count = n.parse().map_err(|_| bad("blob count must be an integer"))?;
                let (lo, hi) = range(r).ok_or_else(|| bad("blob radius range must be LO-HI"))?;
                NoiseMode::Blobs {
                    count,
                    min_radius: lo as u32,
                    max_radius: hi as u32,
                }
            }
            ["adversarial-runway-copy"] => NoiseMode::AdversarialRunwayCopy,
            _ => return Err(bad("unknown noise mode")),
        };
        Ok(NoiseSpec {
            mode,
            seed,
            keep_out: None,
            avoid_radius,
        })
    }
}

/// One synthesized frame with its ground truth and layer decomposition.
#[derive(Clone, Debug)]
pub struct SceneRecord {
    /// `runway_layer` OR `noise_layer`.
    pub image: BinaryImage,
    pub truth: AircraftState,
    pub noise_layer: BinaryImage,
    pub runway_layer: BinaryImage,
    /// Theorem-scope flags, available when a bank was supplied and the truth
    /// projects into one of its cells.
    pub assumption_flags: Option<AssumptionReport>,
}

fn dilate_chebyshev(img: &BinaryImage, radius: u32) -> BinaryImage {
    let mut out = BinaryImage::new(img.width(), img.height());
    let r = radius as i64;
    for (k, l) in img.iter_lit() {
        for dl in -r..=r {
            for dk in -r..=r {
                let (kk, ll) = (k as i64 + dk, l as i64 + dl);
                if kk >= 1 && ll >= 1 && kk <= img.width() as i64 && ll <= img.height() as i64 {
                    out.set(kk as u32, ll as u32, true);
                }
            }
        }
    }
    out
}

fn draw_noise(
    spec: &NoiseSpec,
    rng: &mut ChaCha12Rng,
    truth: &AircraftState,
    runway: &RunwaySpec,
    intr: &CameraIntrinsics,
    runway_layer: &BinaryImage,
) -> Result<BinaryImage, SceneError> {
    let (w, h) = (intr.width_px, intr.height_px);
    let mut noise = BinaryImage::new(w, h);
    match spec.mode {
        NoiseMode::None => {}
        NoiseMode::Salt { density } => {
            for l in 1..=h {
                for k in 1..=w {
                    if rng.random_bool(density) {
                        noise.set(k, l, true);
                    }
                }
            }
        }
        NoiseMode::Segments { count, min_len, max_len } => {
            for _ in 0..count {
                let x1 = rng.random_range(0.0..=f64::from(w));
                let y1 = rng.random_range(0.0..=f64::from(h));
                let angle = rng.random_range(0.0..std::f64::consts::TAU);
                let len = rng.random_range(min_len..=max_len);
                let seg = ImageSegment::new(
                    x1,
                    y1,
                    x1 + len * angle.cos(),
                    y1 + len * angle.sin(),
                );
                noise.or_inplace(&render_segment(&seg, w, h));
            }
        }
        NoiseMode::Blobs { count, min_radius, max_radius } => {
            for _ in 0..count {
                let cx = rng.random_range(0.0..=f64::from(w));
                let cy = rng.random_range(0.0..=f64::from(h));
                let radius = f64::from(rng.random_range(min_radius..=max_radius));
                for l in 1..=h {
                    for k in 1..=w {
                        let (px, py) = (f64::from(k) - 0.5, f64::from(l) - 0.5);
                        if (px - cx).hypot(py - cy) <= radius {
                            noise.set(k, l, true);
                        }
                    }
                }
            }
        }
        NoiseMode::AdversarialRunwayCopy => {
            // A second runway rendered from a seeded far-off state. The draw
            // is judged after the avoid band and keep-out are subtracted, so
            // a usable stretch of the decoy is guaranteed to survive the
            // same subtraction downstream; offsets are sized to clear a
            // band a couple dozen pixels wide.
            const SURVIVING_MIN: usize = 24;
            let mut banned = match spec.avoid_radius {
                Some(r) => dilate_chebyshev(runway_layer, r),
                None => BinaryImage::new(w, h),
            };
            if let Some(keep_out) = &spec.keep_out {
                banned.or_inplace(keep_out);
            }
            let magnitude = |rng: &mut ChaCha12Rng, lo: f64, hi: f64| {
                let m = rng.random_range(lo..=hi);
                if rng.random_bool(0.5) {
                    m
                } else {
                    -m
                }
            };
            let mut best = BinaryImage::new(w, h);
            for _ in 0..32 {
                let copy = AircraftState::new(
                    truth.pitch + magnitude(rng, 0.02, 0.06),
                    truth.x + magnitude(rng, 0.1, 0.25),
                    truth.y + magnitude(rng, 0.08, 0.2),
                    truth.z + magnitude(rng, 0.2, 0.5),
                );
                let Ok(img) = render_runway(&copy, runway, intr) else {
                    continue;
                };
                let surviving = img.and_not(&banned);
                if surviving.count_lit() >= SURVIVING_MIN {
                    noise = surviving;
                    break;
                }
                if surviving.count_lit() > best.count_lit() {
                    best = surviving;
                }
            }
            if noise.is_empty() {
                noise = best;
            }
        }
    }
    Ok(noise)
}

/// Renders the runway for `truth`, draws the noise layer, removes keep-out
/// pixels, and composes the frame by OR. With a bank, the record carries the
/// Theorem-scope flags for the truth's cell.
pub fn synthesize_scene(
    truth: &AircraftState,
    runway: &RunwaySpec,
    intr: &CameraIntrinsics,
    spec: &NoiseSpec,
    bank: Option<&FilterBank>,
) -> Result<SceneRecord, SceneError> {
    let runway_layer = render_runway(truth, runway, intr)?;
    let mut rng = ChaCha12Rng::seed_from_u64(spec.seed);
    let mut noise_layer = draw_noise(spec, &mut rng, truth, runway, intr, &runway_layer)?;
    if let Some(radius) = spec.avoid_radius {
        noise_layer = noise_layer.and_not(&dilate_chebyshev(&runway_layer, radius));
    }
    if let Some(keep_out) = &spec.keep_out {
        noise_layer = noise_layer.and_not(keep_out);
    }
    let image = runway_layer.or(&noise_layer);
    let assumption_flags = match bank {
        Some(bank) => containing_cell(truth, bank)?
            .map(|cell| check_assumptions(&noise_layer, cell, bank)),
        None => None,
    };
    Ok(SceneRecord {
        image,
        truth: *truth,
        noise_layer,
        runway_layer,
        assumption_flags,
    })
}

/// Geometry used by the command line when no config is given: a 160x120
/// sensor with 60 um pixels behind an 8 mm lens.
pub fn default_intrinsics() -> CameraIntrinsics {
    CameraIntrinsics::with_pixel_pitch(8.0e-3, 60.0e-6, 160, 120)
}

/// Borders 0.3 m apart running 1.6 m downrange from the origin.
pub fn default_runway() -> RunwaySpec {
    RunwaySpec::new(-0.15, 0.0, 0.15, 0.0, 0.0, 1.6).unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn demo_state() -> AircraftState {
        AircraftState::new(0.3, 0.0, 0.1, 1.0)
    }

    #[test]
    fn no_noise_reproduces_the_runway_layer() {
        let rec = synthesize_scene(
            &demo_state(),
            &default_runway(),
            &default_intrinsics(),
            &NoiseSpec::none(1),
            None,
        )
        .unwrap();
        assert_eq!(rec.image, rec.runway_layer);
        assert!(rec.noise_layer.is_empty());
        assert!(!rec.runway_layer.is_empty());
        assert_eq!(rec.assumption_flags, None);
    }

    #[test]
    fn composition_is_the_or_of_the_layers() {
        for spec in ["salt:0.02", "segments:4:5-25", "blobs:3:1-3", "adversarial-runway-copy"] {
            let noise = NoiseSpec::parse(spec, 7).unwrap();
            let rec = synthesize_scene(
                &demo_state(),
                &default_runway(),
                &default_intrinsics(),
                &noise,
                None,
            )
            .unwrap();
            assert_eq!(rec.image, rec.runway_layer.or(&rec.noise_layer), "{spec}");
            assert!(!rec.noise_layer.is_empty(), "{spec} drew nothing");
        }
    }

    #[test]
    fn generation_is_deterministic_in_the_seed() {
        let noise = NoiseSpec::parse("segments:4:5-25", 11).unwrap();
        let make = || {
            synthesize_scene(
                &demo_state(),
                &default_runway(),
                &default_intrinsics(),
                &noise,
                None,
            )
            .unwrap()
        };
        let (a, b) = (make(), make());
        assert_eq!(a.image, b.image);
        let other = NoiseSpec::parse("segments:4:5-25", 12).unwrap();
        let c = synthesize_scene(
            &demo_state(),
            &default_runway(),
            &default_intrinsics(),
            &other,
            None,
        )
        .unwrap();
        assert_ne!(a.noise_layer, c.noise_layer);
    }

    #[test]
    fn avoid_radius_clears_a_band_around_the_runway() {
        let noise = NoiseSpec::parse("salt:0.05:avoid=3", 5).unwrap();
        assert_eq!(noise.avoid_radius, Some(3));
        let rec = synthesize_scene(
            &demo_state(),
            &default_runway(),
            &default_intrinsics(),
            &noise,
            None,
        )
        .unwrap();
        let band = dilate_chebyshev(&rec.runway_layer, 3);
        assert!(rec.noise_layer.and(&band).is_empty());
        assert!(!rec.noise_layer.is_empty());
    }

    #[test]
    fn keep_out_mask_is_respected() {
        let mut keep_out = BinaryImage::new(160, 120);
        for l in 1..=120 {
            for k in 1..=80 {
                keep_out.set(k, l, true);
            }
        }
        let mut noise = NoiseSpec::parse("salt:0.2", 3).unwrap();
        noise.keep_out = Some(keep_out.clone());
        let rec = synthesize_scene(
            &demo_state(),
            &default_runway(),
            &default_intrinsics(),
            &noise,
            None,
        )
        .unwrap();
        assert!(rec.noise_layer.and(&keep_out).is_empty());
    }

    #[test]
    fn bad_specs_are_rejected() {
        for spec in [
            "salt",
            "salt:2.0",
            "salt:x",
            "segments:3",
            "segments:3:9-2",
            "blobs:1:3",
            "sparkle:0.1",
            "salt:0.1:avoid=big",
        ] {
            assert!(NoiseSpec::parse(spec, 0).is_err(), "{spec} should fail");
        }
    }
}
