//! Container-level guarantees for saved filter banks: byte-stable
//! serialization, structural round trips, and detection of any single
//! corrupted byte.

use std::path::Path;
use std::sync::OnceLock;

use certl::bank_io::{decode_bank, encode_bank, load_bank, save_bank, BankFileError};
use certl_core::camera::{
    project_line, AircraftState, CameraIntrinsics, RunwaySpec, RunwaySide,
};
use certl_core::interval::{Interval, IntervalBox};
use certl_core::pipeline::{build_filter_bank, BankConfig, FilterBank};

fn demo_config() -> BankConfig {
    let intrinsics = CameraIntrinsics::with_pixel_pitch(8.0e-3, 60.0e-6, 160, 120);
    let runway = RunwaySpec::new(-0.1, 0.0, 0.1, 0.0, 0.0, 1.6).unwrap();
    let centre = AircraftState::new(0.3, 0.0, 0.1, 1.0);
    let spread = [0.03, 0.05, 0.05, 0.0025];
    let states = IntervalBox {
        dims: std::array::from_fn(|i| {
            let c = centre.as_array()[i];
            Interval::new(c - spread[i], c + spread[i])
        }),
    };
    let zc = project_line(&centre, &runway, RunwaySide::Left, &intrinsics)
        .unwrap()
        .as_array();
    let radius = [8.0, 8.0, 4.0, 8.0];
    let mut cfg = BankConfig::new(intrinsics, runway, states, 4.0);
    cfg.region = Some(IntervalBox {
        dims: std::array::from_fn(|i| Interval::new(zc[i] - radius[i], zc[i] + radius[i])),
    });
    cfg
}

fn demo_bank() -> &'static FilterBank {
    static BANK: OnceLock<FilterBank> = OnceLock::new();
    BANK.get_or_init(|| build_filter_bank(&demo_config()).unwrap())
}

#[test]
fn saved_banks_load_structurally_equal_and_reencode_byte_identically() {
    let bank = demo_bank();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("demo.crtl");
    save_bank(&path, bank).unwrap();

    let bytes = std::fs::read(&path).unwrap();
    assert_eq!(bytes, encode_bank(bank));

    let loaded = load_bank(&path).unwrap();
    assert_eq!(&loaded, bank);
    assert_eq!(encode_bank(&loaded), bytes);
}

#[test]
fn derived_region_banks_round_trip_too() {
    let mut cfg = demo_config();
    cfg.region = None;
    cfg.states = IntervalBox {
        dims: cfg.states.dims.map(|iv| {
            let c = iv.mid();
            Interval::new(c - 0.01 * iv.width(), c + 0.01 * iv.width())
        }),
    };
    cfg.delta = 8.0;
    let bank = build_filter_bank(&cfg).unwrap();
    let bytes = encode_bank(&bank);
    let loaded = decode_bank(&bytes, Path::new("derived.crtl")).unwrap();
    assert_eq!(loaded, bank);
    assert_eq!(loaded.config.region, None);
    assert_eq!(encode_bank(&loaded), bytes);
}

#[test]
fn unsupported_container_version_is_rejected() {
    let mut bytes = encode_bank(demo_bank());
    bytes[4] = b'2';
    match decode_bank(&bytes, Path::new("v2.crtl")) {
        Err(BankFileError::VersionMismatch { found, .. }) => {
            assert!(found.contains("CRTL2"), "found {found:?}")
        }
        other => panic!("expected VersionMismatch, got {other:?}"),
    }
}

#[test]
fn any_single_corrupted_byte_is_detected() {
    let bytes = encode_bank(demo_bank());
    // One probe per stride keeps this fast while still crossing the magic,
    // framing words, manifest text, and every cell section.
    let stride = (bytes.len() / 257).max(1);
    for pos in (0..bytes.len()).step_by(stride) {
        let mut corrupt = bytes.clone();
        corrupt[pos] ^= 0x10;
        assert!(
            decode_bank(&corrupt, Path::new("corrupt.crtl")).is_err(),
            "flip at byte {pos} went unnoticed"
        );
    }
}

#[test]
fn truncated_banks_are_malformed() {
    let bytes = encode_bank(demo_bank());
    for keep in [3, 9, bytes.len() / 2, bytes.len() - 1] {
        let err = decode_bank(&bytes[..keep], Path::new("cut.crtl")).unwrap_err();
        assert!(
            matches!(
                err,
                BankFileError::Malformed { .. } | BankFileError::VersionMismatch { .. }
            ),
            "{keep} bytes: {err:?}"
        );
    }
}
