//! Single-file filter-bank container.
//!
//! Layout: the magic line `CRTL1\n`, a little-endian `u32` section count,
//! then framed sections (`u32` payload length, `u32` CRC32 of the payload,
//! payload bytes) with nothing after the last one. Section 0 is the manifest
//! as canonical `key = value` text; each following section holds one cell's
//! masks and candidate tables as little-endian records. Identical banks
//! serialize to identical bytes, so a rebuild from the same config can be
//! compared file-to-file.

use crate::pgm::{pack_bits, unpack_bits};
use crate::report::KeyValues;
use certl_core::camera::{AircraftState, CameraIntrinsics, RunwaySpec};
use certl_core::hough::{CandidateSet, HoughLine, HoughRange};
use certl_core::image::PixelRect;
use certl_core::interval::{Interval, IntervalBox};
use certl_core::pipeline::{BankCell, BankConfig, CellFilter, FilterBank, PartitionScheme};
use certl_core::reach::{SegmentBox, SpatialMask};
use std::fs;
use std::path::Path;
use thiserror::Error;

const MAGIC: &[u8; 6] = b"CRTL1\n";

#[derive(Debug, Error)]
pub enum BankFileError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: container version {found} is not supported")]
    VersionMismatch { path: String, found: String },
    #[error("{path}: checksum failure in section {section}")]
    ChecksumFailure { path: String, section: usize },
    #[error("malformed bank file {path} at byte {offset}: {reason}")]
    Malformed {
        path: String,
        offset: usize,
        reason: String,
    },
}

fn malformed(path: &Path, offset: usize, reason: impl ToString) -> BankFileError {
    BankFileError::Malformed {
        path: path.display().to_string(),
        offset,
        reason: reason.to_string(),
    }
}

// --- encoding ---

struct Records {
    bytes: Vec<u8>,
}

impl Records {
    fn new() -> Records {
        Records { bytes: Vec::new() }
    }

    fn u32(&mut self, v: u32) {
        self.bytes.extend_from_slice(&v.to_le_bytes());
    }

    fn f64(&mut self, v: f64) {
        self.bytes.extend_from_slice(&v.to_le_bytes());
    }

    fn box4(&mut self, b: &SegmentBox) {
        for d in &b.dims {
            self.f64(d.lo);
        }
        for d in &b.dims {
            self.f64(d.hi);
        }
    }

    fn filter(&mut self, f: &CellFilter) {
        let w = &f.mask.window;
        self.u32(w.k_min);
        self.u32(w.l_min);
        self.u32(w.k_max);
        self.u32(w.l_max);
        self.bytes.extend_from_slice(&pack_bits(&f.mask.image));
        self.f64(f.range.theta.lo);
        self.f64(f.range.theta.hi);
        self.f64(f.range.rho.lo);
        self.f64(f.range.rho.hi);
        self.f64(f.candidates.theta_step);
        self.f64(f.candidates.rho_step);
        self.u32(f.candidates.lines.len() as u32);
        for line in &f.candidates.lines {
            self.f64(line.theta);
            self.f64(line.rho);
        }
    }
}

fn floats(values: &[f64]) -> String {
    values
        .iter()
        .map(|v| format!("{v:?}"))
        .collect::<Vec<_>>()
        .join(" ")
}

fn manifest_text(bank: &FilterBank) -> String {
    let cfg = &bank.config;
    let intr = &cfg.intrinsics;
    let rw = &cfg.runway;
    let mut kv = KeyValues::new();
    kv.push("width", intr.width_px);
    kv.push("height", intr.height_px);
    kv.push_f64("focal_m", intr.focal_m);
    kv.push_f64("sensor_w_m", intr.sensor_w_m);
    kv.push_f64("sensor_h_m", intr.sensor_h_m);
    kv.push(
        "runway",
        floats(&[rw.left_x, rw.left_z, rw.right_x, rw.right_z, rw.span_x, rw.span_z]),
    );
    kv.push("state_lo", floats(&cfg.states.dims.map(|d| d.lo)));
    kv.push("state_hi", floats(&cfg.states.dims.map(|d| d.hi)));
    kv.push_f64("delta", cfg.delta);
    kv.push(
        "region_source",
        if cfg.region.is_some() { "explicit" } else { "derived" },
    );
    kv.push("region_lo", floats(&bank.scheme.region.dims.map(|d| d.lo)));
    kv.push("region_hi", floats(&bank.scheme.region.dims.map(|d| d.hi)));
    kv.push("pairing_grid", cfg.pairing_grid);
    kv.push("lipschitz_grid", cfg.lipschitz_grid);
    kv.push_f64("lipschitz", bank.lipschitz);
    kv.push(
        "bins",
        bank.scheme
            .bins
            .iter()
            .map(usize::to_string)
            .collect::<Vec<_>>()
            .join(" "),
    );
    kv.push("cell_count", bank.scheme.cells.len());
    for (i, cell) in bank.scheme.cells.iter().enumerate() {
        let mut row = cell.dims.map(|d| d.lo).to_vec();
        row.extend(cell.dims.map(|d| d.hi));
        kv.push(&format!("cell_{i}"), floats(&row));
    }
    kv.encode()
}

pub fn encode_bank(bank: &FilterBank) -> Vec<u8> {
    let mut sections: Vec<Vec<u8>> = vec![manifest_text(bank).into_bytes()];
    for cell in &bank.cells {
        let mut rec = Records::new();
        rec.box4(&cell.right_zeta);
        for v in cell.fallback.as_array() {
            rec.f64(v);
        }
        rec.filter(&cell.left);
        rec.filter(&cell.right);
        sections.push(rec.bytes);
    }
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(sections.len() as u32).to_le_bytes());
    for payload in &sections {
        out.extend_from_slice(&(payload.len() as u32).to_le_bytes());
        out.extend_from_slice(&crc32fast::hash(payload).to_le_bytes());
        out.extend_from_slice(payload);
    }
    out
}

pub fn save_bank(path: &Path, bank: &FilterBank) -> Result<(), BankFileError> {
    crate::report::write_atomic(path, &encode_bank(bank)).map_err(|source| BankFileError::Io {
        path: path.display().to_string(),
        source,
    })
}

// --- decoding ---

struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
    base: usize,
    path: &'a Path,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], BankFileError> {
        match self.data.get(self.pos..self.pos + n) {
            Some(bytes) => {
                self.pos += n;
                Ok(bytes)
            }
            None => Err(malformed(
                self.path,
                self.base + self.data.len(),
                "record truncated",
            )),
        }
    }

    fn u32(&mut self) -> Result<u32, BankFileError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, BankFileError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn interval(&mut self, lo: f64, hi: f64) -> Result<Interval, BankFileError> {
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(malformed(
                self.path,
                self.base + self.pos,
                format!("invalid interval [{lo}, {hi}]"),
            ));
        }
        Ok(Interval::new(lo, hi))
    }

    fn box4(&mut self) -> Result<SegmentBox, BankFileError> {
        let lo = [self.f64()?, self.f64()?, self.f64()?, self.f64()?];
        let hi = [self.f64()?, self.f64()?, self.f64()?, self.f64()?];
        let mut dims = [Interval::point(0.0); 4];
        for i in 0..4 {
            dims[i] = self.interval(lo[i], hi[i])?;
        }
        Ok(IntervalBox { dims })
    }

    fn filter(&mut self, width: u32, height: u32) -> Result<CellFilter, BankFileError> {
        let window = PixelRect::new(self.u32()?, self.u32()?, self.u32()?, self.u32()?);
        let row_bytes = (width as usize).div_ceil(8);
        let mask_at = self.base + self.pos;
        let bits = self.take(row_bytes * height as usize)?;
        let image = unpack_bits(bits, width, height)
            .ok_or_else(|| malformed(self.path, mask_at, "bad mask payload"))?;
        let theta = {
            let (lo, hi) = (self.f64()?, self.f64()?);
            self.interval(lo, hi)?
        };
        let rho = {
            let (lo, hi) = (self.f64()?, self.f64()?);
            self.interval(lo, hi)?
        };
        let theta_step = self.f64()?;
        let rho_step = self.f64()?;
        let count = self.u32()? as usize;
        if count > (self.data.len() - self.pos) / 16 {
            return Err(malformed(
                self.path,
                self.base + self.pos,
                "candidate count exceeds section size",
            ));
        }
        let mut lines = Vec::with_capacity(count);
        for _ in 0..count {
            lines.push(HoughLine {
                theta: self.f64()?,
                rho: self.f64()?,
            });
        }
        Ok(CellFilter {
            mask: SpatialMask { image, window },
            range: HoughRange { theta, rho },
            candidates: CandidateSet {
                lines,
                theta_step,
                rho_step,
            },
        })
    }
}

fn parse_floats<const N: usize>(
    kv: &KeyValues,
    key: &str,
    path: &Path,
) -> Result<[f64; N], BankFileError> {
    let raw = kv.get(key).ok_or_else(|| {
        malformed(path, 0, format!("manifest is missing {key}"))
    })?;
    let parts: Vec<f64> = raw
        .split_whitespace()
        .map(str::parse)
        .collect::<Result<_, _>>()
        .map_err(|_| malformed(path, 0, format!("manifest {key} is not numeric: {raw}")))?;
    parts
        .try_into()
        .map_err(|_| malformed(path, 0, format!("manifest {key} needs {N} numbers")))
}

fn parse_scalar<T: std::str::FromStr>(
    kv: &KeyValues,
    key: &str,
    path: &Path,
) -> Result<T, BankFileError> {
    kv.get(key)
        .ok_or_else(|| malformed(path, 0, format!("manifest is missing {key}")))?
        .parse()
        .map_err(|_| malformed(path, 0, format!("manifest {key} is invalid")))
}

fn box_from(lo: [f64; 4], hi: [f64; 4], path: &Path) -> Result<SegmentBox, BankFileError> {
    let mut dims = [Interval::point(0.0); 4];
    for i in 0..4 {
        if !(lo[i].is_finite() && hi[i].is_finite() && lo[i] <= hi[i]) {
            return Err(malformed(
                path,
                0,
                format!("invalid manifest interval [{}, {}]", lo[i], hi[i]),
            ));
        }
        dims[i] = Interval::new(lo[i], hi[i]);
    }
    Ok(IntervalBox { dims })
}

fn split_sections<'a>(
    data: &'a [u8],
    path: &Path,
) -> Result<Vec<(usize, &'a [u8])>, BankFileError> {
    if data.len() < MAGIC.len() {
        return Err(malformed(path, data.len(), "file shorter than the magic"));
    }
    if &data[..MAGIC.len()] != MAGIC {
        let found = String::from_utf8_lossy(&data[..5.min(data.len())]).into_owned();
        if data.starts_with(b"CRTL") {
            return Err(BankFileError::VersionMismatch {
                path: path.display().to_string(),
                found,
            });
        }
        return Err(malformed(path, 0, format!("bad magic {found:?}")));
    }
    let mut pos = MAGIC.len();
    let read_u32 = |pos: &mut usize| -> Result<u32, BankFileError> {
        let bytes = data
            .get(*pos..*pos + 4)
            .ok_or_else(|| malformed(path, data.len(), "truncated section framing"))?;
        *pos += 4;
        Ok(u32::from_le_bytes(bytes.try_into().unwrap()))
    };
    let count = read_u32(&mut pos)? as usize;
    if count == 0 {
        return Err(malformed(path, MAGIC.len(), "no sections"));
    }
    let mut sections = Vec::with_capacity(count);
    for section in 0..count {
        let len = read_u32(&mut pos)? as usize;
        let crc = read_u32(&mut pos)?;
        let payload = data
            .get(pos..pos + len)
            .ok_or_else(|| malformed(path, data.len(), "truncated section payload"))?;
        if crc32fast::hash(payload) != crc {
            return Err(BankFileError::ChecksumFailure {
                path: path.display().to_string(),
                section,
            });
        }
        sections.push((pos, payload));
        pos += len;
    }
    if pos != data.len() {
        return Err(malformed(path, pos, "trailing bytes after the last section"));
    }
    Ok(sections)
}

pub fn decode_bank(data: &[u8], path: &Path) -> Result<FilterBank, BankFileError> {
    let sections = split_sections(data, path)?;
    let (manifest_at, manifest_bytes) = sections[0];
    let text = std::str::from_utf8(manifest_bytes)
        .map_err(|e| malformed(path, manifest_at + e.valid_up_to(), "manifest is not utf-8"))?;
    let kv = KeyValues::decode(text, path)
        .map_err(|e| malformed(path, manifest_at, e.to_string()))?;

    let width: u32 = parse_scalar(&kv, "width", path)?;
    let height: u32 = parse_scalar(&kv, "height", path)?;
    if width == 0 || height == 0 {
        return Err(malformed(path, manifest_at, "zero image dimension"));
    }
    let intrinsics = CameraIntrinsics::new(
        parse_scalar(&kv, "focal_m", path)?,
        parse_scalar(&kv, "sensor_w_m", path)?,
        parse_scalar(&kv, "sensor_h_m", path)?,
        width,
        height,
    );
    let r: [f64; 6] = parse_floats(&kv, "runway", path)?;
    let runway = RunwaySpec::new(r[0], r[1], r[2], r[3], r[4], r[5])
        .map_err(|e| malformed(path, manifest_at, e.to_string()))?;
    let states = box_from(
        parse_floats(&kv, "state_lo", path)?,
        parse_floats(&kv, "state_hi", path)?,
        path,
    )?;
    let delta: f64 = parse_scalar(&kv, "delta", path)?;
    let region = box_from(
        parse_floats(&kv, "region_lo", path)?,
        parse_floats(&kv, "region_hi", path)?,
        path,
    )?;
    let explicit = match kv.get("region_source") {
        Some("explicit") => true,
        Some("derived") => false,
        _ => return Err(malformed(path, manifest_at, "bad region_source")),
    };
    if !(delta.is_finite() && delta > 0.0) {
        return Err(malformed(path, manifest_at, "delta must be finite and positive"));
    }
    let bins_raw = kv
        .get("bins")
        .ok_or_else(|| malformed(path, 0, "manifest is missing bins"))?;
    let bins_v: Vec<usize> = bins_raw
        .split_whitespace()
        .map(str::parse)
        .collect::<Result<_, _>>()
        .map_err(|_| malformed(path, manifest_at, "bins are not integers"))?;
    let bins: [usize; 4] = bins_v
        .try_into()
        .map_err(|_| malformed(path, manifest_at, "bins needs 4 integers"))?;
    let cell_count: usize = parse_scalar(&kv, "cell_count", path)?;
    if cell_count != sections.len() - 1 || cell_count != bins.iter().product::<usize>() {
        return Err(malformed(path, manifest_at, "cell count disagrees with sections"));
    }
    let mut scheme_cells = Vec::with_capacity(cell_count);
    for i in 0..cell_count {
        let row: [f64; 8] = parse_floats(&kv, &format!("cell_{i}"), path)?;
        scheme_cells.push(box_from(
            [row[0], row[1], row[2], row[3]],
            [row[4], row[5], row[6], row[7]],
            path,
        )?);
    }

    let mut cells = Vec::with_capacity(cell_count);
    for (i, &(at, payload)) in sections[1..].iter().enumerate() {
        let mut cur = Cursor {
            data: payload,
            pos: 0,
            base: at,
            path,
        };
        let right_zeta = cur.box4()?;
        let fallback = AircraftState::new(cur.f64()?, cur.f64()?, cur.f64()?, cur.f64()?);
        let left = cur.filter(width, height)?;
        let right = cur.filter(width, height)?;
        if cur.pos != payload.len() {
            return Err(malformed(path, at + cur.pos, "trailing bytes in cell record"));
        }
        cells.push(BankCell {
            zeta: scheme_cells[i],
            right_zeta,
            left,
            right,
            fallback,
        });
    }

    let mut config = BankConfig::new(intrinsics, runway, states, delta);
    config.region = explicit.then_some(region);
    config.pairing_grid = parse_scalar(&kv, "pairing_grid", path)?;
    config.lipschitz_grid = parse_scalar(&kv, "lipschitz_grid", path)?;
    let lipschitz: f64 = parse_scalar(&kv, "lipschitz", path)?;
    if !(lipschitz.is_finite() && lipschitz >= 0.0) {
        return Err(malformed(path, manifest_at, "lipschitz must be finite and nonnegative"));
    }
    Ok(FilterBank {
        config,
        scheme: PartitionScheme {
            region,
            delta,
            bins,
            cells: scheme_cells,
        },
        cells,
        lipschitz,
    })
}

pub fn load_bank(path: &Path) -> Result<FilterBank, BankFileError> {
    let data = fs::read(path).map_err(|source| BankFileError::Io {
        path: path.display().to_string(),
        source,
    })?;
    decode_bank(&data, path)
}
