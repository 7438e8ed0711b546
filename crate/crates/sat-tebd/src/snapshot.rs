//! Binary snapshots of tensor-network states and run checkpoints.
//!
//! Two container formats share one byte-exact encoding discipline: every
//! integer is a little-endian `u64`/`i64` and every float is the IEEE-754
//! bit pattern of the original `f64`, so a save/load round trip reproduces
//! the state bit for bit.
//!
//! * `SATMPS01` — a bare state: site dimensions, per-site charge tables,
//!   bond spectra with their charge labels, and the site tensors.
//! * `SATCKP01` — a run checkpoint: a config fingerprint, the absolute
//!   step index at which the state was frozen, the samples collected so
//!   far (as JSON, which serializes `f64` losslessly), and an embedded
//!   `SATMPS01` block.
//!
//! Checkpoints are only written at sample boundaries, so resuming from one
//! and re-running the remaining steps reproduces an uninterrupted run
//! exactly; see `evolve::EvolutionConfig::step_offset`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array3;
use num_complex::Complex64 as C64;
use thiserror::Error;

use crate::mps::{MpsError, VidalState};
use crate::observables::TimeSeries;

/// Magic prefix of a bare state snapshot.
pub const STATE_MAGIC: &[u8; 8] = b"SATMPS01";
/// Magic prefix of a run checkpoint.
pub const CHECKPOINT_MAGIC: &[u8; 8] = b"SATCKP01";

/// Refuse to allocate for length fields beyond this (corrupt input guard).
const MAX_LEN: u64 = 1 << 30;

#[derive(Debug, Error)]
pub enum SnapshotError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad magic: expected {expected}, found {found}")]
    BadMagic { expected: String, found: String },
    #[error("corrupt snapshot: {0}")]
    Corrupt(String),
    #[error("series payload: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Mps(#[from] MpsError),
}

// ---------------------------------------------------------------------------
// primitive encoders
// ---------------------------------------------------------------------------

fn put_u64<W: Write>(w: &mut W, v: u64) -> Result<(), SnapshotError> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn put_i64<W: Write>(w: &mut W, v: i64) -> Result<(), SnapshotError> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn put_f64<W: Write>(w: &mut W, v: f64) -> Result<(), SnapshotError> {
    w.write_all(&v.to_bits().to_le_bytes())?;
    Ok(())
}

fn get_u64<R: Read>(r: &mut R) -> Result<u64, SnapshotError> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}

fn get_i64<R: Read>(r: &mut R) -> Result<i64, SnapshotError> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(i64::from_le_bytes(buf))
}

fn get_f64<R: Read>(r: &mut R) -> Result<f64, SnapshotError> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(f64::from_bits(u64::from_le_bytes(buf)))
}

fn get_len<R: Read>(r: &mut R, what: &str) -> Result<usize, SnapshotError> {
    let n = get_u64(r)?;
    if n > MAX_LEN {
        return Err(SnapshotError::Corrupt(format!(
            "{what} length {n} exceeds sanity bound"
        )));
    }
    Ok(n as usize)
}

fn expect_magic<R: Read>(r: &mut R, magic: &[u8; 8]) -> Result<(), SnapshotError> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    if &buf != magic {
        return Err(SnapshotError::BadMagic {
            expected: String::from_utf8_lossy(magic).into_owned(),
            found: String::from_utf8_lossy(&buf).into_owned(),
        });
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// state snapshots
// ---------------------------------------------------------------------------

/// Write a `SATMPS01` block.
pub fn save_state<W: Write>(state: &VidalState, w: &mut W) -> Result<(), SnapshotError> {
    w.write_all(STATE_MAGIC)?;
    let m = state.n_sites();
    put_u64(w, m as u64)?;
    for &d in state.dims() {
        put_u64(w, d as u64)?;
    }
    for site in 0..m {
        for &q in &state.site_charges()[site] {
            put_i64(w, q)?;
        }
    }
    // bond data: rank, spectrum, charge labels, for each of the m+1 bonds
    for bond in 0..=m {
        let lambda = state.lambda(bond);
        let labels = state.bond_charge_labels(bond);
        put_u64(w, lambda.len() as u64)?;
        for &v in lambda {
            put_f64(w, v)?;
        }
        for &q in labels {
            put_i64(w, q)?;
        }
    }
    // site tensors in standard (row-major) order, shapes implied by the
    // bond ranks and site dimensions above
    for site in 0..m {
        let gamma = state.gamma(site);
        for v in gamma.iter() {
            put_f64(w, v.re)?;
            put_f64(w, v.im)?;
        }
    }
    Ok(())
}

/// Read a `SATMPS01` block.
pub fn load_state<R: Read>(r: &mut R) -> Result<VidalState, SnapshotError> {
    expect_magic(r, STATE_MAGIC)?;
    let m = get_len(r, "site count")?;
    if m == 0 {
        return Err(SnapshotError::Corrupt("zero sites".into()));
    }
    let mut dims = Vec::with_capacity(m);
    for _ in 0..m {
        let d = get_len(r, "site dimension")?;
        if d == 0 {
            return Err(SnapshotError::Corrupt("zero-dimensional site".into()));
        }
        dims.push(d);
    }
    let mut site_charges = Vec::with_capacity(m);
    for &d in &dims {
        let mut qs = Vec::with_capacity(d);
        for _ in 0..d {
            qs.push(get_i64(r)?);
        }
        site_charges.push(qs);
    }
    let mut lambdas = Vec::with_capacity(m + 1);
    let mut bond_charges = Vec::with_capacity(m + 1);
    for _ in 0..=m {
        let rank = get_len(r, "bond rank")?;
        if rank == 0 {
            return Err(SnapshotError::Corrupt("zero-rank bond".into()));
        }
        let mut lambda = Vec::with_capacity(rank);
        for _ in 0..rank {
            lambda.push(get_f64(r)?);
        }
        let mut labels = Vec::with_capacity(rank);
        for _ in 0..rank {
            labels.push(get_i64(r)?);
        }
        lambdas.push(lambda);
        bond_charges.push(labels);
    }
    let mut gammas = Vec::with_capacity(m);
    for site in 0..m {
        let shape = (lambdas[site].len(), dims[site], lambdas[site + 1].len());
        let count = shape
            .0
            .checked_mul(shape.1)
            .and_then(|n| n.checked_mul(shape.2))
            .filter(|&n| n as u64 <= MAX_LEN)
            .ok_or_else(|| SnapshotError::Corrupt("tensor too large".into()))?;
        let mut data = Vec::with_capacity(count);
        for _ in 0..count {
            let re = get_f64(r)?;
            let im = get_f64(r)?;
            data.push(C64::new(re, im));
        }
        let gamma = Array3::from_shape_vec(shape, data)
            .map_err(|e| SnapshotError::Corrupt(format!("tensor shape: {e}")))?;
        gammas.push(gamma);
    }
    Ok(VidalState::from_parts(
        dims,
        site_charges,
        gammas,
        lambdas,
        bond_charges,
    )?)
}

/// Write a state snapshot to `path`.
pub fn save_state_path<P: AsRef<Path>>(state: &VidalState, path: P) -> Result<(), SnapshotError> {
    let mut w = BufWriter::new(File::create(path)?);
    save_state(state, &mut w)?;
    w.flush()?;
    Ok(())
}

/// Read a state snapshot from `path`.
pub fn load_state_path<P: AsRef<Path>>(path: P) -> Result<VidalState, SnapshotError> {
    let mut r = BufReader::new(File::open(path)?);
    load_state(&mut r)
}

// ---------------------------------------------------------------------------
// checkpoints
// ---------------------------------------------------------------------------

/// A resumable point in a time-evolution run.
///
/// `step` is the absolute step index of the embedded state; feeding it back
/// as `EvolutionConfig::step_offset` makes the resumed segment's sample
/// times and truncation bookkeeping identical to an uninterrupted run.
#[derive(Debug)]
pub struct Checkpoint {
    /// Fingerprint of the run configuration that produced this checkpoint;
    /// resume refuses to continue under a different configuration.
    pub config_hash: String,
    /// Absolute step index of `state` within the run.
    pub step: u64,
    /// Samples collected up to and including `step`.
    pub series: TimeSeries,
    /// The frozen state.
    pub state: VidalState,
}

impl Checkpoint {
    /// Write a `SATCKP01` block.
    pub fn save<W: Write>(&self, w: &mut W) -> Result<(), SnapshotError> {
        w.write_all(CHECKPOINT_MAGIC)?;
        let hash = self.config_hash.as_bytes();
        put_u64(w, hash.len() as u64)?;
        w.write_all(hash)?;
        put_u64(w, self.step)?;
        // JSON keeps every f64 exact (shortest round-trip formatting) while
        // staying self-describing if the sample schema grows fields
        let series = serde_json::to_vec(&self.series)?;
        put_u64(w, series.len() as u64)?;
        w.write_all(&series)?;
        save_state(&self.state, w)
    }

    /// Read a `SATCKP01` block.
    pub fn load<R: Read>(r: &mut R) -> Result<Self, SnapshotError> {
        expect_magic(r, CHECKPOINT_MAGIC)?;
        let hash_len = get_len(r, "config hash")?;
        let mut hash = vec![0u8; hash_len];
        r.read_exact(&mut hash)?;
        let config_hash = String::from_utf8(hash)
            .map_err(|_| SnapshotError::Corrupt("config hash is not UTF-8".into()))?;
        let step = get_u64(r)?;
        let series_len = get_len(r, "series payload")?;
        let mut series_buf = vec![0u8; series_len];
        r.read_exact(&mut series_buf)?;
        let series: TimeSeries = serde_json::from_slice(&series_buf)?;
        let state = load_state(r)?;
        Ok(Self {
            config_hash,
            step,
            series,
            state,
        })
    }

    /// Write a checkpoint to `path`.
    pub fn save_path<P: AsRef<Path>>(&self, path: P) -> Result<(), SnapshotError> {
        let mut w = BufWriter::new(File::create(path)?);
        self.save(&mut w)?;
        w.flush()?;
        Ok(())
    }

    /// Read a checkpoint from `path`.
    pub fn load_path<P: AsRef<Path>>(path: P) -> Result<Self, SnapshotError> {
        let mut r = BufReader::new(File::open(path)?);
        Self::load(&mut r)
    }
}
