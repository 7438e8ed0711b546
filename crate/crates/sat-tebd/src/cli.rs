//! Reproducible experiment driver behind the command-line front end.
//!
//! A single JSON [`RunConfig`] describes an experiment: couplings, lattice,
//! atom number, bond-dimension list, step sizes, run mode and output
//! location. The command functions consume it and write plot-ready CSV
//! series plus JSON summaries into the output directory:
//!
//! * [`cmd_ground`] — imaginary-time ground state of the source box,
//!   saved as a binary state snapshot plus an energy report;
//! * [`cmd_evolve`] — embeds the box state, optionally kicks it, and runs
//!   real-time transport once per bond dimension (and per kick momentum);
//! * [`cmd_sweep`] — repeats the ground+evolve pipeline over a parameter
//!   grid in parallel and tabulates fitted steady-state currents;
//! * [`cmd_oracle`] — free-fermion reference artifacts in the same CSV
//!   schema, plus the closed-form transmission profile;
//! * [`cmd_resume`] — continues an interrupted evolution from a checkpoint,
//!   reproducing the uninterrupted artifacts bit for bit.
//!
//! Every summary embeds the exact configuration, its SHA-256 digest, and a
//! digest of each data artifact, so any result can be traced back to (and
//! regenerated from) the configuration that produced it.
//!
//! Process exit codes: 0 success, 2 configuration error, 3 non-convergence,
//! 4 truncation-dominated abort, 1 anything else (I/O and internal errors).

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::evolve::{
    self, box_ground_state, embed_in_lattice, EvolutionConfig, EvolveError, GroundStateReport,
    GroundStateSchedule, RunEvent, TimeStep, TrotterPlan,
};
use crate::model::{self, LatticeGeometry, ModelError, ModelParams};
use crate::mps::{MpsError, TruncationPolicy, UpdatePath, VidalState};
use crate::observables::{
    fit_steady_current, write_series_csv, CurrentFit, ObservablesError, TimeSeries,
};
use crate::oracle::{self, OracleError};
use crate::snapshot::{self, Checkpoint, SnapshotError};

/// Schema version accepted by this build.
pub const CONFIG_VERSION: u32 = 1;

/// Environment variable overriding the sweep worker count.
pub const WORKERS_ENV: &str = "SAT_TEBD_WORKERS";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("not converged: {0}")]
    NotConverged(String),
    #[error("truncation-dominated abort; partial artifacts in {}", .0.display())]
    TruncationDominated(PathBuf),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Evolve(EvolveError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Mps(#[from] MpsError),
    #[error(transparent)]
    Oracle(OracleError),
    #[error(transparent)]
    Observables(#[from] ObservablesError),
    #[error(transparent)]
    Snapshot(#[from] SnapshotError),
}

impl From<EvolveError> for CliError {
    fn from(e: EvolveError) -> Self {
        match e {
            EvolveError::InvalidConfig(msg) => CliError::Config(msg),
            other => CliError::Evolve(other),
        }
    }
}

impl From<OracleError> for CliError {
    fn from(e: OracleError) -> Self {
        match e {
            OracleError::InvalidRegime(msg) => CliError::Config(msg),
            other => CliError::Oracle(other),
        }
    }
}

impl CliError {
    /// Process exit code: 2 config, 3 non-convergence, 4 truncation abort,
    /// 1 everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Model(_) => 2,
            CliError::NotConverged(_) => 3,
            CliError::TruncationDominated(_) => 4,
            _ => 1,
        }
    }
}

// ---------------------------------------------------------------------------
// configuration
// ---------------------------------------------------------------------------

/// How the initial state is launched.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum RunMode {
    /// Release the box ground state with no momentum.
    #[default]
    Diffusive,
    /// Boost the cloud by each listed quasimomentum (one run per value).
    Kicked { p_k: Vec<f64> },
}

impl RunMode {
    /// Kick momenta of this mode; `None` marks the unkicked run.
    fn kick_values(&self) -> Vec<Option<f64>> {
        match self {
            RunMode::Diffusive => vec![None],
            RunMode::Kicked { p_k } => p_k.iter().copied().map(Some).collect(),
        }
    }
}

/// Parameter axis of a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepAxis {
    /// Atom-molecule coupling Ω/J.
    Omega,
    /// On-site interaction U_bb/J.
    U,
    /// Initial box filling n = N / M_left (rounded to whole atoms).
    #[serde(rename = "n")]
    Filling,
    /// Kick momentum p_k.
    #[serde(rename = "p_k")]
    Kick,
}

/// One-axis parameter grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub axis: SweepAxis,
    pub grid: Vec<f64>,
}

/// A complete, self-contained experiment description.
///
/// The JSON form round-trips losslessly; [`config_digest`] of the parsed
/// struct therefore identifies the experiment independent of formatting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Schema version; must equal [`CONFIG_VERSION`].
    pub version: u32,
    /// Physical couplings.
    #[serde(default)]
    pub params: ModelParams,
    /// Lattice layout and local cutoffs.
    pub geometry: LatticeGeometry,
    /// Probe atoms prepared in the left box.
    pub n_atoms: usize,
    /// Bond-dimension caps; evolution runs once per entry.
    #[serde(default = "default_chi")]
    pub chi: Vec<usize>,
    /// Trotter step, units 1/J.
    #[serde(default = "default_dt")]
    pub dt: f64,
    /// Total evolution time, units 1/J.
    pub t_total: f64,
    /// Observable sampling interval, units 1/J (snapped to whole steps).
    #[serde(default = "default_sample_dt")]
    pub sample_dt: f64,
    #[serde(default)]
    pub mode: RunMode,
    /// Two-site update organization (charge-conserving or plain dense).
    #[serde(default)]
    pub path: UpdatePath,
    /// Directory receiving every artifact of this run.
    pub output_dir: PathBuf,
    /// Write a resumable checkpoint every this many samples.
    #[serde(default)]
    pub checkpoint_every: Option<usize>,
    /// Imaginary-time schedule for the ground-state stage.
    #[serde(default)]
    pub schedule: GroundStateSchedule,
    /// Relative singular-value floor for truncations.
    #[serde(default = "default_lambda_floor")]
    pub lambda_floor: f64,
    /// Per-step discarded weight beyond which a run aborts.
    #[serde(default = "default_eps_abort")]
    pub eps_abort: f64,
    /// Grid for `sweep`; ignored by the other commands.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSpec>,
}

fn default_chi() -> Vec<usize> {
    vec![40]
}

fn default_dt() -> f64 {
    0.01
}

fn default_sample_dt() -> f64 {
    0.1
}

fn default_lambda_floor() -> f64 {
    1e-12
}

fn default_eps_abort() -> f64 {
    1e-4
}

impl RunConfig {
    /// Defaults for the full-scale transport setup: 30+1+30 hard-core
    /// lattice, δt = 0.01/J, one χ = 40 run to t = 20/J.
    pub fn production(n_atoms: usize, output_dir: impl Into<PathBuf>) -> Self {
        Self {
            version: CONFIG_VERSION,
            params: ModelParams::default(),
            geometry: LatticeGeometry::tonks(30, 30),
            n_atoms,
            chi: default_chi(),
            dt: default_dt(),
            t_total: 20.0,
            sample_dt: default_sample_dt(),
            mode: RunMode::Diffusive,
            path: UpdatePath::default(),
            output_dir: output_dir.into(),
            checkpoint_every: None,
            schedule: GroundStateSchedule::default(),
            lambda_floor: default_lambda_floor(),
            eps_abort: default_eps_abort(),
            sweep: None,
        }
    }

    /// Defaults for a seconds-scale check: 10+1+10 lattice, δt = 0.05/J.
    pub fn smoke(n_atoms: usize, output_dir: impl Into<PathBuf>) -> Self {
        Self {
            geometry: LatticeGeometry::tonks(10, 10),
            dt: 0.05,
            t_total: 4.0,
            ..Self::production(n_atoms, output_dir)
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.version != CONFIG_VERSION {
            return Err(CliError::Config(format!(
                "config version {} not supported (this build reads {CONFIG_VERSION})",
                self.version
            )));
        }
        self.params.validate()?;
        self.geometry.validate()?;
        if self.n_atoms == 0 {
            return Err(CliError::Config("n_atoms must be ≥ 1".into()));
        }
        let capacity = self.geometry.left_sites * (self.geometry.probe_cutoff - 1);
        if self.n_atoms > capacity {
            return Err(CliError::Config(format!(
                "{} atoms exceed the {}-site box capacity {}",
                self.n_atoms, self.geometry.left_sites, capacity
            )));
        }
        if self.chi.is_empty() {
            return Err(CliError::Config("chi list is empty".into()));
        }
        if self.chi.iter().any(|&c| c == 0) {
            return Err(CliError::Config("chi entries must be ≥ 1".into()));
        }
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(CliError::Config(format!("dt must be > 0, got {}", self.dt)));
        }
        if !(self.t_total >= 0.0) || !self.t_total.is_finite() {
            return Err(CliError::Config(format!("t_total must be ≥ 0, got {}", self.t_total)));
        }
        if !(self.sample_dt > 0.0) || !self.sample_dt.is_finite() {
            return Err(CliError::Config(format!(
                "sample_dt must be > 0, got {}",
                self.sample_dt
            )));
        }
        if let RunMode::Kicked { p_k } = &self.mode {
            if p_k.is_empty() {
                return Err(CliError::Config("kicked mode with an empty p_k list".into()));
            }
            if p_k.iter().any(|v| !v.is_finite()) {
                return Err(CliError::Config("p_k values must be finite".into()));
            }
        }
        if self.checkpoint_every == Some(0) {
            return Err(CliError::Config("checkpoint_every must be ≥ 1 sample".into()));
        }
        if !(self.lambda_floor >= 0.0) || !(self.eps_abort > 0.0) {
            return Err(CliError::Config(format!(
                "lambda_floor {} / eps_abort {} out of range",
                self.lambda_floor, self.eps_abort
            )));
        }
        if let Some(sweep) = &self.sweep {
            if sweep.grid.is_empty() {
                return Err(CliError::Config("sweep grid is empty".into()));
            }
            if sweep.grid.iter().any(|v| !v.is_finite()) {
                return Err(CliError::Config("sweep grid values must be finite".into()));
            }
            if sweep.axis == SweepAxis::Filling {
                for &v in &sweep.grid {
                    if !(v > 0.0 && v <= 1.0) {
                        return Err(CliError::Config(format!(
                            "filling sweep values must lie in (0, 1], got {v}"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Parse and validate a JSON config file.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let config: RunConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        config.validate()?;
        Ok(config)
    }

    fn steps(&self) -> usize {
        (self.t_total / self.dt).round() as usize
    }

    fn sample_every(&self) -> usize {
        ((self.sample_dt / self.dt).round() as usize).max(1)
    }

    fn policy(&self, chi: usize) -> TruncationPolicy {
        TruncationPolicy { chi_max: chi, lambda_floor: self.lambda_floor }
    }

    fn evolution_config(&self, chi: usize) -> EvolutionConfig {
        EvolutionConfig {
            dt: self.dt,
            steps: self.steps(),
            sample_every: self.sample_every(),
            chi_max: Some(chi),
            lambda_floor: self.lambda_floor,
            path: self.path,
            eps_abort: self.eps_abort,
            record_profiles: false,
            t_start: 0.0,
            step_offset: 0,
        }
    }
}

/// Hex SHA-256 of a byte string.
pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    format!("{:x}", hasher.finalize())
}

/// Digest of the canonical (serialized) form of a config.
pub fn config_digest(config: &RunConfig) -> Result<String, CliError> {
    Ok(sha256_hex(&serde_json::to_vec(config)?))
}

/// Digest binding a checkpoint to one (config, χ, p_k) artifact.
///
/// Only fields that influence the trajectory enter the key: where artifacts
/// land, how often checkpoints are cut, or an unused sweep section may all
/// change between sessions without invalidating a resume.
fn artifact_digest(config: &RunConfig, chi: usize, p_k: Option<f64>) -> Result<String, CliError> {
    #[derive(Serialize)]
    struct Key<'a> {
        config: &'a RunConfig,
        chi: usize,
        p_k: Option<f64>,
    }
    let mut core = config.clone();
    core.output_dir = PathBuf::new();
    core.checkpoint_every = None;
    core.sweep = None;
    Ok(sha256_hex(&serde_json::to_vec(&Key { config: &core, chi, p_k })?))
}

// ---------------------------------------------------------------------------
// ground
// ---------------------------------------------------------------------------

/// Summary JSON written next to the ground-state snapshot.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroundSummary {
    pub version: u32,
    pub command: String,
    pub config: RunConfig,
    pub config_hash: String,
    pub report: GroundStateReport,
    pub state_file: String,
    pub state_hash: String,
}

/// Outcome of [`cmd_ground`].
#[derive(Debug)]
pub struct GroundArtifacts {
    pub state: VidalState,
    pub report: GroundStateReport,
    pub state_path: PathBuf,
    pub summary_path: PathBuf,
}

fn ground_box_state(
    config: &RunConfig,
) -> Result<(VidalState, GroundStateReport), CliError> {
    // prepare with the largest requested rank; evolution re-truncates per χ
    let chi = *config.chi.iter().max().expect("validated non-empty");
    let (state, report) = box_ground_state(
        &config.params,
        config.geometry.left_sites,
        config.n_atoms,
        config.geometry.probe_cutoff,
        &config.policy(chi),
        config.path,
        &config.schedule,
    )?;
    Ok((state, report))
}

/// Prepares the source-box ground state and writes `ground.mps` +
/// `ground.json`. Fails with the non-convergence exit code when the sweep
/// budget runs out (artifacts are still written for diagnosis).
pub fn cmd_ground(config: &RunConfig) -> Result<GroundArtifacts, CliError> {
    config.validate()?;
    fs::create_dir_all(&config.output_dir)?;
    let (state, report) = ground_box_state(config)?;

    let state_path = config.output_dir.join("ground.mps");
    snapshot::save_state_path(&state, &state_path)?;
    let state_hash = sha256_hex(&fs::read(&state_path)?);

    let summary = GroundSummary {
        version: CONFIG_VERSION,
        command: "ground".into(),
        config: config.clone(),
        config_hash: config_digest(config)?,
        report: report.clone(),
        state_file: "ground.mps".into(),
        state_hash,
    };
    let summary_path = config.output_dir.join("ground.json");
    fs::write(&summary_path, serde_json::to_vec_pretty(&summary)?)?;

    if !report.converged {
        return Err(CliError::NotConverged(format!(
            "ground state still moving after {} sweeps (budget {}); artifacts in {}",
            report.sweeps,
            config.schedule.sweep_budget,
            config.output_dir.display()
        )));
    }
    Ok(GroundArtifacts { state, report, state_path, summary_path })
}

// ---------------------------------------------------------------------------
// evolve
// ---------------------------------------------------------------------------

/// Per-run summary JSON (one per χ × p_k combination).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvolveSummary {
    pub version: u32,
    pub command: String,
    pub config_hash: String,
    /// Binds checkpoints of this artifact to the config.
    pub artifact_hash: String,
    pub parameters: ModelParams,
    pub geometry: LatticeGeometry,
    pub n_atoms: usize,
    pub chi: usize,
    pub dt: f64,
    pub code_path: UpdatePath,
    pub p_k: Option<f64>,
    /// Steady-state current fit, absent when the series is too short.
    pub fit: Option<CurrentFit>,
    pub truncation_dominated: bool,
    pub final_time: Option<f64>,
    pub final_n_right: Option<f64>,
    pub peak_discarded: f64,
    pub series_file: String,
    pub series_hash: String,
}

/// One finished evolution artifact.
#[derive(Debug, Clone)]
pub struct EvolveArtifact {
    pub name: String,
    pub chi: usize,
    pub p_k: Option<f64>,
    pub series: TimeSeries,
    pub fit: Option<CurrentFit>,
    pub csv_path: PathBuf,
    pub summary_path: PathBuf,
}

/// Outcome of [`cmd_evolve`] / [`cmd_resume`].
#[derive(Debug)]
pub struct EvolveOutcome {
    pub artifacts: Vec<EvolveArtifact>,
    /// Any artifact hit the discarded-weight abort (exit code 4).
    pub truncation_dominated: bool,
}

fn artifact_name(config: &RunConfig, chi: usize, kick_index: usize) -> String {
    match &config.mode {
        RunMode::Diffusive => format!("evolve_chi{chi}"),
        RunMode::Kicked { .. } => format!("evolve_chi{chi}_pk{kick_index}"),
    }
}

/// Where an artifact run starts: fresh from the embedded box state, or
/// mid-run from a checkpoint.
enum Start<'a> {
    Fresh(&'a VidalState),
    Resume(Box<Checkpoint>),
}

fn run_artifact(
    config: &RunConfig,
    name: &str,
    chi: usize,
    p_k: Option<f64>,
    start: Start<'_>,
) -> Result<EvolveArtifact, CliError> {
    let digest = artifact_digest(config, chi, p_k)?;
    let steps_total = config.steps();

    let (mut state, mut series, step_offset) = match start {
        Start::Fresh(box_state) => {
            let mut state = embed_in_lattice(box_state, &config.geometry)?;
            if let Some(p) = p_k {
                evolve::apply_kick(&mut state, &config.geometry, p)?;
            }
            (state, TimeSeries::new(), 0usize)
        }
        Start::Resume(ckpt) => {
            if ckpt.config_hash != digest {
                return Err(CliError::Config(
                    "checkpoint does not belong to this artifact".into(),
                ));
            }
            let step = ckpt.step as usize;
            if step > steps_total {
                return Err(CliError::Config(format!(
                    "checkpoint is {step} steps in, beyond the configured {steps_total}"
                )));
            }
            (ckpt.state, ckpt.series, step)
        }
    };

    if steps_total > 0 || step_offset > 0 {
        let plan = TrotterPlan::lattice(&config.params, &config.geometry, TimeStep::Real(config.dt))?;
        let mut run_cfg = config.evolution_config(chi);
        run_cfg.steps = steps_total - step_offset;
        run_cfg.step_offset = step_offset;

        let ckpt_path = config.output_dir.join(format!("{name}.ckpt"));
        let mut acc = series.clone();
        let mut ckpt_err: Option<CliError> = None;
        let mut observer = |event: RunEvent<'_>| {
            if ckpt_err.is_some() {
                return;
            }
            if let Err(e) = acc.push(event.sample.clone()) {
                ckpt_err = Some(e.into());
                return;
            }
            if let Some(every) = config.checkpoint_every {
                if acc.len() % every == 0 {
                    let ckpt = Checkpoint {
                        config_hash: digest.clone(),
                        step: event.step as u64,
                        series: acc.clone(),
                        state: event.state.clone(),
                    };
                    if let Err(e) = ckpt.save_path(&ckpt_path) {
                        ckpt_err = Some(e.into());
                    }
                }
            }
        };
        let tail = evolve::run(
            &mut state,
            &plan,
            &config.geometry,
            &run_cfg,
            Some(&mut observer),
        )?;
        if let Some(e) = ckpt_err {
            return Err(e);
        }
        if series.is_empty() {
            series = tail;
        } else {
            series.append(&tail)?;
        }
    }
    // t_total = 0 leaves the series empty: header-only CSV

    let mut csv = Vec::new();
    write_series_csv(&series, &mut csv)?;
    let csv_path = config.output_dir.join(format!("{name}.csv"));
    fs::write(&csv_path, &csv)?;

    let fit = fit_steady_current(&series, None).ok();
    let summary = EvolveSummary {
        version: CONFIG_VERSION,
        command: "evolve".into(),
        config_hash: config_digest(config)?,
        artifact_hash: digest,
        parameters: config.params,
        geometry: config.geometry,
        n_atoms: config.n_atoms,
        chi,
        dt: config.dt,
        code_path: config.path,
        p_k,
        fit: fit.clone(),
        truncation_dominated: series.truncation_dominated,
        final_time: series.times.last().copied(),
        final_n_right: series.n_right.last().copied(),
        peak_discarded: series.peak_discarded(),
        series_file: format!("{name}.csv"),
        series_hash: sha256_hex(&csv),
    };
    let summary_path = config.output_dir.join(format!("{name}.json"));
    fs::write(&summary_path, serde_json::to_vec_pretty(&summary)?)?;

    Ok(EvolveArtifact {
        name: name.to_string(),
        chi,
        p_k,
        series,
        fit,
        csv_path,
        summary_path,
    })
}

/// Runs the transport experiment once per (χ, kick) combination.
///
/// `snapshot` optionally points at a `ground.mps` box state from a previous
/// [`cmd_ground`]; without it the ground state is prepared in-process.
pub fn cmd_evolve(config: &RunConfig, snapshot: Option<&Path>) -> Result<EvolveOutcome, CliError> {
    config.validate()?;
    fs::create_dir_all(&config.output_dir)?;

    let box_state = match snapshot {
        Some(path) => snapshot::load_state_path(path)?,
        None => {
            let (state, report) = ground_box_state(config)?;
            if !report.converged {
                return Err(CliError::NotConverged(format!(
                    "ground state still moving after {} sweeps",
                    report.sweeps
                )));
            }
            state
        }
    };

    let mut artifacts = Vec::new();
    for &chi in &config.chi {
        for (idx, p_k) in config.mode.kick_values().into_iter().enumerate() {
            let name = artifact_name(config, chi, idx);
            artifacts.push(run_artifact(config, &name, chi, p_k, Start::Fresh(&box_state))?);
        }
    }
    let truncation_dominated = artifacts.iter().any(|a| a.series.truncation_dominated);
    Ok(EvolveOutcome { artifacts, truncation_dominated })
}

/// Continues an interrupted run from `checkpoint`, rewriting the same
/// artifact files an uninterrupted run would have produced.
pub fn cmd_resume(config: &RunConfig, checkpoint: &Path) -> Result<EvolveOutcome, CliError> {
    config.validate()?;
    fs::create_dir_all(&config.output_dir)?;
    let ckpt = Checkpoint::load_path(checkpoint)?;

    // identify which (χ, p_k) artifact the checkpoint belongs to
    let mut found = None;
    'outer: for &chi in &config.chi {
        for (idx, p_k) in config.mode.kick_values().into_iter().enumerate() {
            if artifact_digest(config, chi, p_k)? == ckpt.config_hash {
                found = Some((chi, p_k, artifact_name(config, chi, idx)));
                break 'outer;
            }
        }
    }
    let Some((chi, p_k, name)) = found else {
        return Err(CliError::Config(format!(
            "checkpoint {} was not produced by this configuration",
            checkpoint.display()
        )));
    };

    let artifact = run_artifact(config, &name, chi, p_k, Start::Resume(Box::new(ckpt)))?;
    let truncation_dominated = artifact.series.truncation_dominated;
    Ok(EvolveOutcome { artifacts: vec![artifact], truncation_dominated })
}

// ---------------------------------------------------------------------------
// sweep
// ---------------------------------------------------------------------------

/// One row of the sweep table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: f64,
    pub i_ss: Option<f64>,
    pub residual_rms: Option<f64>,
    pub t_knee: Option<f64>,
    pub i_0: Option<f64>,
    pub poor_fit: bool,
    pub truncation_dominated: bool,
    pub artifact: String,
}

/// Aggregated sweep summary JSON.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepSummary {
    pub version: u32,
    pub command: String,
    pub config: RunConfig,
    pub config_hash: String,
    pub axis: SweepAxis,
    pub rows: Vec<SweepRow>,
    pub table_file: String,
    pub table_hash: String,
}

/// Outcome of [`cmd_sweep`].
#[derive(Debug)]
pub struct SweepOutcome {
    pub rows: Vec<SweepRow>,
    pub table_path: PathBuf,
    pub summary_path: PathBuf,
    pub truncation_dominated: bool,
}

/// Config for one grid point: the axis value substituted in, artifacts
/// renamed, checkpointing off (sweep points are cheap to redo).
fn sweep_point_config(config: &RunConfig, axis: SweepAxis, value: f64) -> RunConfig {
    let mut point = config.clone();
    point.sweep = None;
    point.checkpoint_every = None;
    match axis {
        SweepAxis::Omega => point.params.omega = value,
        SweepAxis::U => point.params.u_bb = value,
        SweepAxis::Filling => {
            let m = config.geometry.left_sites as f64;
            point.n_atoms = ((value * m).round() as usize).max(1);
        }
        SweepAxis::Kick => point.mode = RunMode::Kicked { p_k: vec![value] },
    }
    point
}

fn fmt_opt(v: Option<f64>) -> String {
    match v {
        Some(x) => format!("{x:.11e}"),
        None => String::new(),
    }
}

/// Runs one ground+evolve pipeline per grid point (in parallel) and writes
/// `sweep.csv` (columns `value,i_ss,residual,t_knee,i_0`) plus `sweep.json`.
///
/// Points run with the largest configured χ. The worker count follows
/// rayon's default unless the `SAT_TEBD_WORKERS` environment variable
/// overrides it. Aggregation is by grid index, so the table is identical
/// however the points are scheduled.
pub fn cmd_sweep(config: &RunConfig) -> Result<SweepOutcome, CliError> {
    config.validate()?;
    let Some(spec) = &config.sweep else {
        return Err(CliError::Config("sweep command needs a sweep section".into()));
    };
    fs::create_dir_all(&config.output_dir)?;
    let chi = *config.chi.iter().max().expect("validated non-empty");

    // the box state only depends on (params.u_bb, n_atoms): share it across
    // grid points unless the axis changes one of those
    let shared_box = match spec.axis {
        SweepAxis::Omega | SweepAxis::Kick => {
            let (state, report) = ground_box_state(config)?;
            if !report.converged {
                return Err(CliError::NotConverged(format!(
                    "ground state still moving after {} sweeps",
                    report.sweeps
                )));
            }
            Some(state)
        }
        SweepAxis::U | SweepAxis::Filling => None,
    };

    let run_point = |(idx, &value): (usize, &f64)| -> Result<SweepRow, CliError> {
        let mut point = sweep_point_config(config, spec.axis, value);
        point.chi = vec![chi];
        let name = format!("sweep{idx}_chi{chi}");
        let local_box;
        let box_state = match &shared_box {
            Some(state) => state,
            None => {
                let (state, report) = ground_box_state(&point)?;
                if !report.converged {
                    return Err(CliError::NotConverged(format!(
                        "grid point {value}: ground state still moving after {} sweeps",
                        report.sweeps
                    )));
                }
                local_box = state;
                &local_box
            }
        };
        let p_k = point.mode.kick_values()[0];
        let artifact = run_artifact(&point, &name, chi, p_k, Start::Fresh(box_state))?;
        Ok(SweepRow {
            value,
            i_ss: artifact.fit.as_ref().map(|f| f.i_ss),
            residual_rms: artifact.fit.as_ref().map(|f| f.residual_rms),
            t_knee: artifact.fit.as_ref().and_then(|f| f.t_knee),
            i_0: artifact.fit.as_ref().and_then(|f| f.i_0),
            poor_fit: artifact.fit.as_ref().is_some_and(|f| f.poor_fit),
            truncation_dominated: artifact.series.truncation_dominated,
            artifact: name,
        })
    };

    let indexed: Vec<(usize, &f64)> = spec.grid.iter().enumerate().collect();
    let results: Vec<Result<SweepRow, CliError>> = match sweep_workers()? {
        Some(workers) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(workers)
                .build()
                .map_err(|e| CliError::Config(format!("worker pool: {e}")))?;
            pool.install(|| {
                use rayon::prelude::*;
                indexed.par_iter().copied().map(run_point).collect()
            })
        }
        None => {
            use rayon::prelude::*;
            indexed.par_iter().copied().map(run_point).collect()
        }
    };
    let mut rows = Vec::with_capacity(results.len());
    for r in results {
        rows.push(r?);
    }

    let mut table = String::from("value,i_ss,residual,t_knee,i_0\n");
    for row in &rows {
        table.push_str(&format!(
            "{:.11e},{},{},{},{}\n",
            row.value,
            fmt_opt(row.i_ss),
            fmt_opt(row.residual_rms),
            fmt_opt(row.t_knee),
            fmt_opt(row.i_0),
        ));
    }
    let table_path = config.output_dir.join("sweep.csv");
    fs::write(&table_path, table.as_bytes())?;

    let summary = SweepSummary {
        version: CONFIG_VERSION,
        command: "sweep".into(),
        config: config.clone(),
        config_hash: config_digest(config)?,
        axis: spec.axis,
        rows: rows.clone(),
        table_file: "sweep.csv".into(),
        table_hash: sha256_hex(table.as_bytes()),
    };
    let summary_path = config.output_dir.join("sweep.json");
    fs::write(&summary_path, serde_json::to_vec_pretty(&summary)?)?;

    let truncation_dominated = rows.iter().any(|r| r.truncation_dominated);
    Ok(SweepOutcome { rows, table_path, summary_path, truncation_dominated })
}

fn sweep_workers() -> Result<Option<usize>, CliError> {
    match std::env::var(WORKERS_ENV) {
        Ok(v) => {
            let n: usize = v
                .parse()
                .map_err(|_| CliError::Config(format!("{WORKERS_ENV}={v} is not a number")))?;
            if n == 0 {
                return Err(CliError::Config(format!("{WORKERS_ENV} must be ≥ 1")));
            }
            Ok(Some(n))
        }
        Err(_) => Ok(None),
    }
}

// ---------------------------------------------------------------------------
// oracle
// ---------------------------------------------------------------------------

/// Summary JSON of the oracle artifacts.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OracleSummary {
    pub version: u32,
    pub command: String,
    pub config: RunConfig,
    pub config_hash: String,
    /// Fermion series files keyed by artifact name, with content hashes.
    pub fermion_series: BTreeMap<String, String>,
    /// Why the fermion series were skipped, when they were.
    pub fermion_skipped: Option<String>,
    /// Largest |tr C − N| over all fermion series.
    pub max_trace_drift: Option<f64>,
    pub transmission_file: String,
    pub transmission_hash: String,
}

/// Outcome of [`cmd_oracle`].
#[derive(Debug)]
pub struct OracleOutcome {
    pub fermion_series: Vec<(String, TimeSeries)>,
    pub transmission_path: PathBuf,
    pub summary_path: PathBuf,
}

/// Writes free-fermion reference currents (same CSV schema as `evolve`)
/// and the closed-form transmission profile `oracle_transmission.csv`
/// (columns `k,T`).
///
/// The correlation-matrix evolution is exact only while the probe-impurity
/// and probe-molecule interactions vanish; with `u_qb` or `u_bm` set the
/// fermion series are skipped and the summary records why.
pub fn cmd_oracle(config: &RunConfig) -> Result<OracleOutcome, CliError> {
    config.validate()?;
    fs::create_dir_all(&config.output_dir)?;

    let mut fermion_series = Vec::new();
    let mut hashes = BTreeMap::new();
    let mut max_trace_drift: Option<f64> = None;
    let fermion_skipped = if config.params.u_qb != 0.0 || config.params.u_bm != 0.0 {
        Some("probe-impurity/probe-molecule interactions are not quadratic".to_string())
    } else {
        let samples = (config.t_total / config.sample_dt).floor() as usize;
        let t_grid: Vec<f64> = (0..=samples).map(|i| i as f64 * config.sample_dt).collect();
        for (idx, p_k) in config.mode.kick_values().into_iter().enumerate() {
            let name = match &config.mode {
                RunMode::Diffusive => "oracle_fermion".to_string(),
                RunMode::Kicked { .. } => format!("oracle_fermion_pk{idx}"),
            };
            let series = oracle::fermion_current_series(
                &config.params,
                &config.geometry,
                config.n_atoms,
                p_k.unwrap_or(0.0),
                &t_grid,
            )?;
            let drift = series
                .total_charge
                .iter()
                .map(|&q| (q - config.n_atoms as f64).abs())
                .fold(0.0, f64::max);
            max_trace_drift = Some(max_trace_drift.map_or(drift, |d| d.max(drift)));
            let mut csv = Vec::new();
            write_series_csv(&series, &mut csv)?;
            fs::write(config.output_dir.join(format!("{name}.csv")), &csv)?;
            hashes.insert(name.clone(), sha256_hex(&csv));
            fermion_series.push((name, series));
        }
        None
    };

    // closed-form transmission profile across the band
    let mut table = String::from("k,T\n");
    let points = 99;
    for i in 1..=points {
        let k = std::f64::consts::PI * i as f64 / (points + 1) as f64;
        let t = model::fano_transmission(k, &config.params);
        table.push_str(&format!("{k:.11e},{t:.11e}\n"));
    }
    let transmission_path = config.output_dir.join("oracle_transmission.csv");
    fs::write(&transmission_path, table.as_bytes())?;

    let summary = OracleSummary {
        version: CONFIG_VERSION,
        command: "oracle".into(),
        config: config.clone(),
        config_hash: config_digest(config)?,
        fermion_series: hashes,
        fermion_skipped,
        max_trace_drift,
        transmission_file: "oracle_transmission.csv".into(),
        transmission_hash: sha256_hex(table.as_bytes()),
    };
    let summary_path = config.output_dir.join("oracle.json");
    fs::write(&summary_path, serde_json::to_vec_pretty(&summary)?)?;

    Ok(OracleOutcome { fermion_series, transmission_path, summary_path })
}
