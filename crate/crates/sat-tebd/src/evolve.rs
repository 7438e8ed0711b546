//! Real- and imaginary-time propagation of the lattice state.
//!
//! A [`TrotterPlan`] is a fixed five-layer symmetric second-order splitting
//! of one time step,
//!
//! ```text
//! e^{−iHδt} ≈ e^{−iA δt/2} · e^{−iB δt/2} · e^{−iC δt} · e^{−iB δt/2} · e^{−iA δt/2}
//! ```
//!
//! with `A` the even bonds, `B` the odd bonds and `C` the single-site terms
//! (impurity conversion, on-site interactions). Every gate is exponentiated
//! per particle-number block, so gates conserve charge to machine
//! precision. The same plan with a real decay factor drives imaginary-time
//! ground-state projection ([`box_ground_state`]).

use crate::model::{self, LatticeGeometry, ModelError, ModelParams};
use crate::mps::{MpsError, TruncationPolicy, TwoSiteGate, UpdatePath, VidalState};
use crate::observables::{self, ObservablesError, Sample, TimeSeries};
use ndarray::prelude::*;
use ndarray_linalg::{Eigh, UPLO};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvolveError {
    #[error("invalid evolution configuration: {0}")]
    InvalidConfig(String),
    #[error("operator does not conserve charge: {0}")]
    NotChargeConserving(String),
    #[error("eigendecomposition failed: {0}")]
    Eigen(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Mps(#[from] MpsError),
    #[error(transparent)]
    Observables(#[from] ObservablesError),
}

/// Propagation direction of one Trotter step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", content = "dt", rename_all = "lowercase")]
pub enum TimeStep {
    /// Unitary evolution `e^{−iHδt}`.
    Real(f64),
    /// Ground-state projection `e^{−Hδτ}`.
    Imaginary(f64),
}

impl TimeStep {
    pub fn dt(self) -> f64 {
        match self {
            TimeStep::Real(dt) | TimeStep::Imaginary(dt) => dt,
        }
    }

    pub fn is_imaginary(self) -> bool {
        matches!(self, TimeStep::Imaginary(_))
    }

    /// Exponent prefactor: gate = exp(scale · H · weight).
    fn scale(self) -> C64 {
        match self {
            TimeStep::Real(dt) => C64::new(0.0, -dt),
            TimeStep::Imaginary(dt) => C64::new(-dt, 0.0),
        }
    }
}

/// e^{scale·h} for a real-symmetric charge-conserving block `h`,
/// exponentiated independently within each charge sector.
pub fn charge_block_exponential(
    h: &ArrayView2<f64>,
    charges: &[i64],
    scale: C64,
) -> Result<Array2<C64>, EvolveError> {
    let d = h.nrows();
    if h.ncols() != d || charges.len() != d {
        return Err(EvolveError::InvalidConfig(format!(
            "operator {:?} with {} charge labels",
            h.dim(),
            charges.len()
        )));
    }
    let magnitude = h.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if !model::commutes_with_charge(&h.view(), charges, charges, 1e-12 * magnitude.max(1.0)) {
        return Err(EvolveError::NotChargeConserving(format!(
            "{}x{d} block mixes charge sectors",
            d
        )));
    }
    let mut groups: BTreeMap<i64, Vec<usize>> = BTreeMap::new();
    for (i, &q) in charges.iter().enumerate() {
        groups.entry(q).or_default().push(i);
    }
    let mut out = Array2::zeros((d, d));
    for idx in groups.values() {
        let k = idx.len();
        let mut sub = Array2::zeros((k, k));
        for (a, &ia) in idx.iter().enumerate() {
            for (b, &ib) in idx.iter().enumerate() {
                sub[[a, b]] = h[[ia, ib]];
            }
        }
        let (evals, evecs) = sub
            .eigh(UPLO::Lower)
            .map_err(|e| EvolveError::Eigen(e.to_string()))?;
        let phases: Vec<C64> = evals.iter().map(|&e| (scale * e).exp()).collect();
        for (a, &ia) in idx.iter().enumerate() {
            for (b, &ib) in idx.iter().enumerate() {
                let mut v = C64::new(0.0, 0.0);
                for (kk, ph) in phases.iter().enumerate() {
                    v += evecs[[a, kk]] * *ph * evecs[[b, kk]];
                }
                out[[ia, ib]] = v;
            }
        }
    }
    Ok(out)
}

enum Layer {
    Bonds(Vec<(usize, TwoSiteGate)>),
    Sites(Vec<(usize, Array2<C64>)>),
}

/// Read-only view of one layer of a Trotter step, for replaying the exact
/// gate sequence through an independent (dense) applier.
pub enum LayerRef<'a> {
    /// Disjoint bond gates, keyed by left site index.
    Bonds(&'a [(usize, TwoSiteGate)]),
    /// Single-site gates, keyed by site index.
    Sites(&'a [(usize, Array2<C64>)]),
}

/// One symmetric second-order Trotter step as a gate sequence.
pub struct TrotterPlan {
    dims: Vec<usize>,
    step: TimeStep,
    layers: Vec<Layer>,
}

impl TrotterPlan {
    /// Plan for the full impurity lattice.
    pub fn lattice(
        params: &ModelParams,
        geometry: &LatticeGeometry,
        step: TimeStep,
    ) -> Result<Self, EvolveError> {
        params.validate()?;
        geometry.validate()?;
        let m = geometry.total_sites();
        let bond_blocks: Vec<Array2<f64>> = (0..m - 1)
            .map(|l| model::bond_hamiltonian(params, geometry, l))
            .collect::<Result<_, _>>()?;
        let site_blocks: Vec<Array2<f64>> =
            (0..m).map(|l| model::site_hamiltonian(params, geometry, l)).collect();
        Self::from_blocks(&geometry.all_dims(), &geometry.all_charges(), &bond_blocks, &site_blocks, step)
    }

    /// Plan for a plain box chain (hopping + on-site interaction only),
    /// used for ground-state preparation before embedding.
    pub fn box_chain(
        params: &ModelParams,
        m_sites: usize,
        cutoff: usize,
        step: TimeStep,
    ) -> Result<Self, EvolveError> {
        params.validate()?;
        if m_sites < 2 || cutoff < 2 {
            return Err(EvolveError::InvalidConfig(format!(
                "box needs ≥ 2 sites and cutoff ≥ 2 (got {m_sites}, {cutoff})"
            )));
        }
        let dims = vec![cutoff; m_sites];
        let charges: Vec<Vec<i64>> = vec![(0..cutoff as i64).collect(); m_sites];
        let b = model::annihilator(cutoff);
        let hop = model::hopping_pair_hamiltonian(params.j, &b, &b);
        let site = model::ordinary_site_hamiltonian(params, cutoff);
        let bond_blocks = vec![hop; m_sites - 1];
        let site_blocks = vec![site; m_sites];
        Self::from_blocks(&dims, &charges, &bond_blocks, &site_blocks, step)
    }

    /// Plan from explicit per-bond and per-site Hamiltonian blocks.
    pub fn from_blocks(
        dims: &[usize],
        site_charges: &[Vec<i64>],
        bond_blocks: &[Array2<f64>],
        site_blocks: &[Array2<f64>],
        step: TimeStep,
    ) -> Result<Self, EvolveError> {
        let m = dims.len();
        if !(step.dt() > 0.0) || !step.dt().is_finite() {
            return Err(EvolveError::InvalidConfig(format!("step size must be > 0, got {}", step.dt())));
        }
        if m < 2 || site_charges.len() != m || bond_blocks.len() != m - 1 || site_blocks.len() != m {
            return Err(EvolveError::InvalidConfig(format!(
                "{} sites with {} bond and {} site blocks",
                m,
                bond_blocks.len(),
                site_blocks.len()
            )));
        }
        let half = step.scale() * 0.5;
        let mut half_gate = |l: usize| -> Result<(usize, TwoSiteGate), EvolveError> {
            let qs: Vec<i64> = model::pair_charges(&site_charges[l], &site_charges[l + 1]);
            let u = charge_block_exponential(&bond_blocks[l].view(), &qs, half)?;
            Ok((l, TwoSiteGate::new(u, &site_charges[l], &site_charges[l + 1])?))
        };
        let even: Vec<(usize, TwoSiteGate)> =
            (0..m - 1).step_by(2).map(&mut half_gate).collect::<Result<_, _>>()?;
        let odd: Vec<(usize, TwoSiteGate)> =
            (1..m - 1).step_by(2).map(&mut half_gate).collect::<Result<_, _>>()?;
        let mut sites = Vec::new();
        for (l, block) in site_blocks.iter().enumerate() {
            if block.iter().all(|&v| v == 0.0) {
                continue; // identity gate
            }
            let u = charge_block_exponential(&block.view(), &site_charges[l], step.scale())?;
            sites.push((l, u));
        }
        let layers = vec![
            Layer::Bonds(even.clone()),
            Layer::Bonds(odd.clone()),
            Layer::Sites(sites),
            Layer::Bonds(odd),
            Layer::Bonds(even),
        ];
        Ok(Self { dims: dims.to_vec(), step, layers })
    }

    pub fn step(&self) -> TimeStep {
        self.step
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    /// The gate layers of one step, in application order.
    pub fn layer_refs(&self) -> impl Iterator<Item = LayerRef<'_>> {
        self.layers.iter().map(|layer| match layer {
            Layer::Bonds(gates) => LayerRef::Bonds(gates),
            Layer::Sites(gates) => LayerRef::Sites(gates),
        })
    }

    /// Applies one full step in place; returns the worst per-gate
    /// truncation of the step.
    pub fn apply(
        &self,
        state: &mut VidalState,
        policy: &TruncationPolicy,
        path: UpdatePath,
    ) -> Result<StepReport, EvolveError> {
        if state.dims() != self.dims.as_slice() {
            return Err(EvolveError::InvalidConfig(format!(
                "state dims {:?} do not match plan dims {:?}",
                state.dims(),
                self.dims
            )));
        }
        let mut report = StepReport::default();
        for layer in &self.layers {
            match layer {
                Layer::Bonds(gates) => {
                    for (l, gate) in gates {
                        let r = state.apply_two_site_gate(*l, gate, policy, path)?;
                        report.max_discarded = report.max_discarded.max(r.discarded_weight);
                        report.max_rank = report.max_rank.max(r.new_rank);
                    }
                }
                Layer::Sites(gates) => {
                    for (l, gate) in gates {
                        if self.step.is_imaginary() {
                            state.apply_single_site_gate_renormalized(*l, &gate.view())?;
                        } else {
                            state.apply_single_site_gate(*l, &gate.view())?;
                        }
                    }
                }
            }
        }
        Ok(report)
    }
}

/// Truncation summary of one Trotter step.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StepReport {
    /// Largest discarded weight ε_λ among the step's gates.
    pub max_discarded: f64,
    /// Largest Schmidt rank produced by the step.
    pub max_rank: usize,
}

/// Knobs of a real-time run.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct EvolutionConfig {
    /// Trotter step, units 1/J.
    pub dt: f64,
    /// Total number of steps.
    pub steps: usize,
    /// Steps between samples (≥ 1).
    #[serde(default = "default_sample_every")]
    pub sample_every: usize,
    /// Retained Schmidt rank cap; `None` keeps everything above the floor.
    #[serde(default)]
    pub chi_max: Option<usize>,
    /// Relative singular-value floor.
    #[serde(default = "default_lambda_floor")]
    pub lambda_floor: f64,
    /// Two-site update organization.
    #[serde(default)]
    pub path: UpdatePath,
    /// Per-step ε_λ beyond which the run halts as truncation-dominated.
    #[serde(default = "default_eps_abort")]
    pub eps_abort: f64,
    /// Record per-site occupation profiles with every sample.
    #[serde(default)]
    pub record_profiles: bool,
    /// Time stamp of step 0 of the whole run (not of a resumed segment).
    #[serde(default)]
    pub t_start: f64,
    /// Steps already completed before this segment; nonzero when resuming
    /// from a checkpoint taken at a sample boundary. Sample times are
    /// computed from the absolute step index so a resumed run reproduces
    /// an uninterrupted one bit for bit.
    #[serde(default)]
    pub step_offset: usize,
}

fn default_sample_every() -> usize {
    10
}

fn default_lambda_floor() -> f64 {
    1e-12
}

fn default_eps_abort() -> f64 {
    1e-4
}

impl EvolutionConfig {
    /// Defaults for step `dt`: samples every 0.1/J, unrestricted rank.
    pub fn for_dt(dt: f64) -> Self {
        Self {
            dt,
            steps: 0,
            sample_every: ((0.1 / dt).round() as usize).max(1),
            chi_max: None,
            lambda_floor: default_lambda_floor(),
            path: UpdatePath::Conserving,
            eps_abort: default_eps_abort(),
            record_profiles: false,
            t_start: 0.0,
            step_offset: 0,
        }
    }

    pub fn validate(&self) -> Result<(), EvolveError> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(EvolveError::InvalidConfig(format!("dt must be > 0, got {}", self.dt)));
        }
        if self.sample_every == 0 {
            return Err(EvolveError::InvalidConfig("sample interval must be ≥ 1 step".into()));
        }
        if !(self.lambda_floor >= 0.0) || !(self.eps_abort > 0.0) {
            return Err(EvolveError::InvalidConfig(format!(
                "lambda_floor {} / eps_abort {} out of range",
                self.lambda_floor, self.eps_abort
            )));
        }
        if self.chi_max == Some(0) {
            return Err(EvolveError::InvalidConfig("chi_max must be ≥ 1".into()));
        }
        Ok(())
    }

    pub fn policy(&self) -> TruncationPolicy {
        TruncationPolicy {
            chi_max: self.chi_max.unwrap_or(usize::MAX),
            lambda_floor: self.lambda_floor,
        }
    }
}

fn take_sample(
    state: &VidalState,
    geometry: &LatticeGeometry,
    time: f64,
    max_discarded: f64,
    record_profiles: bool,
) -> Result<Sample, EvolveError> {
    let occ = observables::occupations(state, geometry)?;
    let n_right = observables::n_right(state, geometry)?;
    Ok(Sample {
        time,
        n_right,
        norm: state.norm(),
        total_charge: state.total_charge(),
        max_discarded,
        molecule_occ: occ.molecule,
        impurity_occ: occ.impurity_probe,
        profile: record_profiles.then_some(occ.profile),
    })
}

/// What an observer sees at every sample point.
pub struct RunEvent<'a> {
    pub state: &'a VidalState,
    pub sample: &'a Sample,
    /// Completed steps counted from the start of the whole run.
    pub step: usize,
}

/// Runs a real-time plan, sampling observables on a fixed cadence.
///
/// The state advances in place; the returned series covers this segment
/// only (resumed segments skip the initial sample because the checkpoint's
/// series already holds it). Each sample records the largest per-gate ε_λ
/// since the previous sample. When a single step's ε_λ exceeds
/// `config.eps_abort` the run stops early and the returned series is
/// flagged truncation-dominated.
pub fn run(
    state: &mut VidalState,
    plan: &TrotterPlan,
    geometry: &LatticeGeometry,
    config: &EvolutionConfig,
    mut observer: Option<&mut dyn FnMut(RunEvent<'_>)>,
) -> Result<TimeSeries, EvolveError> {
    config.validate()?;
    match plan.step() {
        TimeStep::Real(dt) if dt == config.dt => {}
        other => {
            return Err(EvolveError::InvalidConfig(format!(
                "plan step {other:?} does not match config dt {} (real time)",
                config.dt
            )));
        }
    }
    let policy = config.policy();
    let mut series = TimeSeries::new();
    if config.step_offset == 0 {
        let first = take_sample(state, geometry, config.t_start, 0.0, config.record_profiles)?;
        if let Some(f) = observer.as_mut() {
            f(RunEvent { state, sample: &first, step: 0 });
        }
        series.push(first)?;
    }
    let mut eps_window = 0.0f64;
    for k in 1..=config.steps {
        let report = plan.apply(state, &policy, config.path)?;
        eps_window = eps_window.max(report.max_discarded);
        let step = config.step_offset + k;
        let aborting = report.max_discarded > config.eps_abort;
        if step % config.sample_every == 0 || k == config.steps || aborting {
            let t = config.t_start + config.dt * step as f64;
            let sample = take_sample(state, geometry, t, eps_window, config.record_profiles)?;
            if let Some(f) = observer.as_mut() {
                f(RunEvent { state, sample: &sample, step });
            }
            series.push(sample)?;
            eps_window = 0.0;
        }
        if aborting {
            series.truncation_dominated = true;
            break;
        }
    }
    Ok(series)
}

/// ⟨H⟩ of a lattice state (canonical contraction).
pub fn lattice_energy(
    state: &VidalState,
    params: &ModelParams,
    geometry: &LatticeGeometry,
) -> Result<f64, EvolveError> {
    let m = geometry.total_sites();
    let mut bond_blocks = Vec::with_capacity(m - 1);
    for l in 0..m - 1 {
        bond_blocks.push(model::bond_hamiltonian(params, geometry, l)?);
    }
    let site_blocks: Vec<Array2<f64>> =
        (0..m).map(|l| model::site_hamiltonian(params, geometry, l)).collect();
    blocks_energy(state, &bond_blocks, &site_blocks)
}

/// ⟨H⟩ of a plain box-chain state.
pub fn box_energy(state: &VidalState, params: &ModelParams) -> Result<f64, EvolveError> {
    let m = state.n_sites();
    let cutoff = state.dims()[0];
    let b = model::annihilator(cutoff);
    let hop = model::hopping_pair_hamiltonian(params.j, &b, &b);
    let site = model::ordinary_site_hamiltonian(params, cutoff);
    let bond_blocks = vec![hop; m - 1];
    let site_blocks = vec![site; m];
    blocks_energy(state, &bond_blocks, &site_blocks)
}

fn blocks_energy(
    state: &VidalState,
    bond_blocks: &[Array2<f64>],
    site_blocks: &[Array2<f64>],
) -> Result<f64, EvolveError> {
    let mut total = 0.0;
    for (l, block) in bond_blocks.iter().enumerate() {
        let op = block.mapv(|x| C64::new(x, 0.0));
        total += state.expect_bond(l, &op.view())?.re;
    }
    for (l, block) in site_blocks.iter().enumerate() {
        if block.iter().all(|&v| v == 0.0) {
            continue;
        }
        let op = block.mapv(|x| C64::new(x, 0.0));
        total += state.expect_site(l, &op.view())?.re;
    }
    Ok(total)
}

/// Imaginary-time schedule for ground-state projection.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct GroundStateSchedule {
    /// Stage step sizes δτ, coarse to fine.
    #[serde(default = "default_stage_dtau")]
    pub stage_dtau: Vec<f64>,
    /// A stage converges when |ΔE| per sweep drops below this.
    #[serde(default = "default_energy_tol")]
    pub energy_tol: f64,
    /// Hard cap on total sweeps across all stages.
    #[serde(default = "default_sweep_budget")]
    pub sweep_budget: usize,
}

fn default_stage_dtau() -> Vec<f64> {
    vec![0.1, 0.03, 0.01]
}

fn default_energy_tol() -> f64 {
    1e-8
}

fn default_sweep_budget() -> usize {
    50_000
}

impl Default for GroundStateSchedule {
    fn default() -> Self {
        Self {
            stage_dtau: default_stage_dtau(),
            energy_tol: default_energy_tol(),
            sweep_budget: default_sweep_budget(),
        }
    }
}

/// Outcome of an imaginary-time projection.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct GroundStateReport {
    /// ⟨H⟩ of the converged (canonicalized) state.
    pub energy: f64,
    /// Sweeps spent across all stages.
    pub sweeps: usize,
    /// False when the sweep budget ran out before the last stage converged.
    pub converged: bool,
    /// Energy after each sweep, grouped by stage.
    pub stage_energies: Vec<Vec<f64>>,
}

/// Distributes `n` atoms over `m` sites as evenly as possible
/// (unit filling → one per site; half filling → alternating, leftmost
/// occupied).
pub fn even_seed(n: usize, m: usize) -> Vec<usize> {
    (0..m)
        .map(|j| {
            let hi = ((j + 1) * n).div_ceil(m);
            let lo = (j * n).div_ceil(m);
            hi - lo
        })
        .collect()
}

/// Prepares the N-atom ground state of an `m_sites` box chain by staged
/// imaginary-time projection from an evenly spread product seed.
pub fn box_ground_state(
    params: &ModelParams,
    m_sites: usize,
    n_atoms: usize,
    cutoff: usize,
    policy: &TruncationPolicy,
    path: UpdatePath,
    schedule: &GroundStateSchedule,
) -> Result<(VidalState, GroundStateReport), EvolveError> {
    params.validate()?;
    if m_sites < 2 || cutoff < 2 {
        return Err(EvolveError::InvalidConfig(format!(
            "box needs ≥ 2 sites and cutoff ≥ 2 (got {m_sites}, {cutoff})"
        )));
    }
    if schedule.stage_dtau.is_empty() {
        return Err(EvolveError::InvalidConfig("schedule has no stages".into()));
    }
    let seed = even_seed(n_atoms, m_sites);
    if seed.iter().any(|&occ| occ >= cutoff) {
        return Err(EvolveError::InvalidConfig(format!(
            "{n_atoms} atoms on {m_sites} sites exceed the local cutoff {cutoff}"
        )));
    }
    let dims = vec![cutoff; m_sites];
    let charges: Vec<Vec<i64>> = vec![(0..cutoff as i64).collect(); m_sites];
    let mut state = VidalState::from_product_state(&dims, &charges, &seed)?;

    let mut sweeps = 0usize;
    let mut converged = true;
    let mut stage_energies = Vec::with_capacity(schedule.stage_dtau.len());
    'stages: for &dtau in &schedule.stage_dtau {
        let plan = TrotterPlan::box_chain(params, m_sites, cutoff, TimeStep::Imaginary(dtau))?;
        let mut energies = Vec::new();
        let mut prev = box_energy(&state, params)?;
        loop {
            if sweeps >= schedule.sweep_budget {
                converged = false;
                stage_energies.push(energies);
                break 'stages;
            }
            plan.apply(&mut state, policy, path)?;
            sweeps += 1;
            let e = box_energy(&state, params)?;
            energies.push(e);
            if (e - prev).abs() < schedule.energy_tol {
                break;
            }
            prev = e;
        }
        stage_energies.push(energies);
    }
    state.canonicalize(policy.lambda_floor)?;
    let energy = box_energy(&state, params)?;
    let report = GroundStateReport { energy, sweeps, converged, stage_energies };
    Ok((state, report))
}

/// Embeds a box ground state into the full lattice: box sites keep their
/// tensors; the impurity (atom state, no boson) and the right lead sites
/// are appended empty.
pub fn embed_in_lattice(
    box_state: &VidalState,
    geometry: &LatticeGeometry,
) -> Result<VidalState, EvolveError> {
    geometry.validate()?;
    let mb = geometry.left_sites;
    let expected = vec![geometry.probe_cutoff; mb];
    if box_state.dims() != expected.as_slice() {
        return Err(EvolveError::InvalidConfig(format!(
            "box state dims {:?} do not fit the {}-site box of cutoff {}",
            box_state.dims(),
            mb,
            geometry.probe_cutoff
        )));
    }
    let m = geometry.total_sites();
    let mut dims = Vec::with_capacity(m);
    let mut charges = Vec::with_capacity(m);
    let mut gammas = Vec::with_capacity(m);
    let mut lambdas = Vec::with_capacity(m + 1);
    let mut bond_q = Vec::with_capacity(m + 1);
    for l in 0..mb {
        dims.push(box_state.dims()[l]);
        charges.push(geometry.site_charges(l));
        gammas.push(box_state.gamma(l).clone());
        lambdas.push(box_state.lambda(l).to_vec());
        bond_q.push(box_state.bond_charge_labels(l).to_vec());
    }
    lambdas.push(box_state.lambda(mb).to_vec());
    bond_q.push(box_state.bond_charge_labels(mb).to_vec());
    let n_label = *box_state
        .bond_charge_labels(mb)
        .first()
        .ok_or_else(|| EvolveError::InvalidConfig("empty boundary bond".into()))?;
    for l in mb..m {
        let s = geometry.site_dim(l);
        dims.push(s);
        charges.push(geometry.site_charges(l));
        let mut g: Array3<C64> = Array3::zeros((1, s, 1));
        g[[0, 0, 0]] = C64::new(1.0, 0.0); // empty site / bare atom
        gammas.push(g);
        lambdas.push(vec![1.0]);
        bond_q.push(vec![n_label]);
    }
    Ok(VidalState::from_parts(dims, charges, gammas, lambdas, bond_q)?)
}

/// Multiplies every atom by the phase e^{i p x} of a momentum kick
/// (x is the physical grid coordinate; the impurity sits at x = 0).
pub fn apply_kick(
    state: &mut VidalState,
    geometry: &LatticeGeometry,
    p: f64,
) -> Result<(), EvolveError> {
    for l in 0..geometry.total_sites() {
        let x = geometry.grid_index(l);
        if x == 0 {
            continue; // no phase at the origin
        }
        let s = geometry.site_dim(l);
        let mut gate: Array2<C64> = Array2::zeros((s, s));
        for n in 0..s {
            gate[[n, n]] = C64::from_polar(1.0, p * x as f64 * n as f64);
        }
        state.apply_single_site_gate(l, &gate.view())?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{self, EdProblem, QuadraticModel};

    fn unitarity_defect(u: &Array2<C64>) -> f64 {
        let d = u.nrows();
        let udu = u.t().mapv(|z| z.conj()).dot(u);
        let mut worst = 0.0f64;
        for ((i, j), v) in udu.indexed_iter() {
            let expect = if i == j { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) };
            worst = worst.max((v - expect).norm());
        }
        let _ = d;
        worst
    }

    #[test]
    fn block_exponential_matches_scalar_case() {
        // single 1x1 charge block: e^{scale·h}
        let h = ndarray::array![[2.0]];
        let u = charge_block_exponential(&h.view(), &[0], C64::new(0.0, -0.5)).unwrap();
        assert!((u[[0, 0]] - C64::from_polar(1.0, -1.0)).norm() < 1e-14);
        // 2x2 hopping block within one charge sector
        let h = ndarray::array![[0.0, -1.0], [-1.0, 0.0]];
        let t = 0.7;
        let u = charge_block_exponential(&h.view(), &[1, 1], C64::new(0.0, -t)).unwrap();
        assert!((u[[0, 0]] - C64::new(t.cos(), 0.0)).norm() < 1e-14);
        assert!((u[[0, 1]] - C64::new(0.0, t.sin())).norm() < 1e-14);
        assert!(unitarity_defect(&u) < 1e-14);
        // cross-charge coupling is rejected
        let bad = ndarray::array![[0.0, 1.0], [1.0, 0.0]];
        assert!(matches!(
            charge_block_exponential(&bad.view(), &[0, 1], C64::new(0.0, -1.0)),
            Err(EvolveError::NotChargeConserving(_))
        ));
    }

    #[test]
    fn lattice_plan_is_unitary_palindrome() {
        let p = ModelParams { omega: 0.8, delta: 0.3, u_qb: 0.4, u_bm: 0.2, ..Default::default() };
        let g = LatticeGeometry::tonks(2, 2);
        let plan = TrotterPlan::lattice(&p, &g, TimeStep::Real(0.05)).unwrap();
        assert_eq!(plan.layers.len(), 5);
        let bond_count = |layer: &Layer| match layer {
            Layer::Bonds(g) => g.len(),
            _ => 0,
        };
        assert_eq!(bond_count(&plan.layers[0]), 2); // bonds 0, 2
        assert_eq!(bond_count(&plan.layers[1]), 2); // bonds 1, 3
        for (a, b) in [(0usize, 4usize), (1, 3)] {
            match (&plan.layers[a], &plan.layers[b]) {
                (Layer::Bonds(x), Layer::Bonds(y)) => {
                    assert_eq!(x.len(), y.len());
                    for ((la, ga), (lb, gb)) in x.iter().zip(y) {
                        assert_eq!(la, lb);
                        assert_eq!(ga.matrix(), gb.matrix());
                        assert!(unitarity_defect(ga.matrix()) < 1e-13);
                    }
                }
                _ => panic!("layer {a}/{b} is not a bond layer"),
            }
        }
        match &plan.layers[2] {
            Layer::Sites(gates) => {
                // only the impurity site has a nonzero single-site term here
                assert_eq!(gates.len(), 1);
                assert_eq!(gates[0].0, g.impurity_site());
                assert!(unitarity_defect(&gates[0].1) < 1e-13);
            }
            _ => panic!("central layer is not the site layer"),
        }
    }

    #[test]
    fn single_particle_matches_quadratic_oracle() {
        let p = ModelParams { omega: 0.9, delta: 0.4, u_qb: 0.3, ..Default::default() };
        let g = LatticeGeometry::tonks(2, 2);
        let plan = TrotterPlan::lattice(&p, &g, TimeStep::Real(0.005)).unwrap();
        let mut state = VidalState::from_product_state(
            &g.all_dims(),
            &g.all_charges(),
            &[1, 0, 0, 0, 0],
        )
        .unwrap();
        let policy = TruncationPolicy::default();
        for _ in 0..400 {
            plan.apply(&mut state, &policy, UpdatePath::Conserving).unwrap();
        }
        let occ = observables::occupations(&state, &g).unwrap();

        let qm = QuadraticModel::new(&p, &g).unwrap();
        let mut c0: Array2<C64> = Array2::zeros((qm.dim(), qm.dim()));
        c0[[0, 0]] = C64::new(1.0, 0.0);
        let ct = qm.evolve_correlations(&oracle::CorrelationState { c: c0, time: 0.0 }, 2.0);
        for l in 0..g.total_sites() {
            assert!(
                (occ.profile[l] - ct.occupation(l)).abs() < 1e-3,
                "site {l}: {} vs {}",
                occ.profile[l],
                ct.occupation(l)
            );
        }
        assert!((occ.molecule - ct.molecule_occupation()).abs() < 1e-3);
        assert!((state.norm() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn trotter_terminal_error_is_second_order() {
        let p = ModelParams { omega: 1.0, u_qb: 0.5, ..Default::default() };
        let g = LatticeGeometry::tonks(2, 1);
        let n = 2i64;
        let ed = EdProblem::for_lattice(&p, &g, n).unwrap();
        let occ = [1usize, 1, 0, 0];
        let psi0 = ed.basis().product_state(&occ).unwrap();
        let psi_exact = ed.basis().embed_dense(&ed.evolve(&psi0.view(), 1.0).view()).unwrap();

        let policy = TruncationPolicy::default();
        let mut errs = Vec::new();
        for &dt in &[0.05f64, 0.025, 0.0125] {
            let steps = (1.0 / dt).round() as usize;
            let plan = TrotterPlan::lattice(&p, &g, TimeStep::Real(dt)).unwrap();
            let mut state =
                VidalState::from_product_state(&g.all_dims(), &g.all_charges(), &occ).unwrap();
            for _ in 0..steps {
                plan.apply(&mut state, &policy, UpdatePath::Conserving).unwrap();
            }
            let psi = state.to_state_vector();
            // phase-aligned terminal-state distance
            let ip: C64 = psi_exact.iter().zip(psi.iter()).map(|(a, b)| a.conj() * b).sum();
            let phase = ip / ip.norm();
            let err: f64 = psi_exact
                .iter()
                .zip(psi.iter())
                .map(|(a, b)| (b - a * phase).norm_sqr())
                .sum::<f64>()
                .sqrt();
            errs.push(err);
        }
        let e1 = (errs[0] / errs[1]).log2();
        let e2 = (errs[1] / errs[2]).log2();
        assert!((1.8..=2.2).contains(&e1), "exponent {e1} from {errs:?}");
        assert!((1.8..=2.2).contains(&e2), "exponent {e2} from {errs:?}");
    }

    #[test]
    fn conservation_and_energy_drift_ratio() {
        let p = ModelParams { omega: 1.0, u_qb: 0.4, u_bm: 0.3, ..Default::default() };
        let g = LatticeGeometry::tonks(2, 1);
        let occ = [1usize, 1, 0, 0];
        let policy = TruncationPolicy::default();
        let mut drifts = Vec::new();
        for &dt in &[0.08, 0.04] {
            let plan = TrotterPlan::lattice(&p, &g, TimeStep::Real(dt)).unwrap();
            let mut state =
                VidalState::from_product_state(&g.all_dims(), &g.all_charges(), &occ).unwrap();
            let e0 = lattice_energy(&state, &p, &g).unwrap();
            let charge0 = state.total_charge();
            let steps = (16.0 / dt).round() as usize;
            let mut drift = 0.0f64;
            for s in 1..=steps {
                plan.apply(&mut state, &policy, UpdatePath::Conserving).unwrap();
                if s % 10 == 0 || s == steps {
                    let e = lattice_energy(&state, &p, &g).unwrap();
                    drift = drift.max((e - e0).abs());
                }
            }
            assert!((state.norm() - 1.0).abs() < 1e-10);
            assert!((state.total_charge() - charge0).abs() < 1e-10);
            assert_eq!(state.max_charge_violation(), 0.0);
            drifts.push(drift);
        }
        let ratio = drifts[0] / drifts[1];
        assert!((3.2..=4.8).contains(&ratio), "drift ratio {ratio} from {drifts:?}");
    }

    #[test]
    fn run_samples_on_cadence_and_flags_abort() {
        let p = ModelParams { omega: 1.0, ..Default::default() };
        let g = LatticeGeometry::tonks(2, 2);
        let plan = TrotterPlan::lattice(&p, &g, TimeStep::Real(0.02)).unwrap();
        let mut state =
            VidalState::from_product_state(&g.all_dims(), &g.all_charges(), &[1, 1, 0, 0, 0])
                .unwrap();
        let mut config = EvolutionConfig::for_dt(0.02);
        config.steps = 50;
        config.sample_every = 5;
        let mut seen = 0usize;
        let mut last_step = 0usize;
        let series = run(
            &mut state,
            &plan,
            &g,
            &config,
            Some(&mut |ev: RunEvent<'_>| {
                assert!((ev.sample.norm - 1.0).abs() < 1e-9);
                seen += 1;
                last_step = ev.step;
            }),
        )
        .unwrap();
        assert_eq!(last_step, 50);
        assert_eq!(series.len(), 11); // t = 0 plus every 5th of 50 steps
        assert_eq!(seen, series.len());
        assert!((series.times[1] - 0.1).abs() < 1e-12);
        assert!(!series.truncation_dominated);
        for w in series.total_charge.windows(2) {
            assert!((w[0] - w[1]).abs() < 1e-10);
        }

        // rank-1 cap plus a tiny abort threshold halts a run that entangles
        let mut state =
            VidalState::from_product_state(&g.all_dims(), &g.all_charges(), &[1, 1, 0, 0, 0])
                .unwrap();
        let mut tight = config.clone();
        tight.chi_max = Some(1);
        tight.eps_abort = 1e-8;
        let series = run(&mut state, &plan, &g, &tight, None).unwrap();
        assert!(series.truncation_dominated);
        assert!(series.len() < 11);
        assert!(series.peak_discarded() > 1e-8);
    }

    #[test]
    fn box_ground_state_matches_exact_diagonalization() {
        // two bosons on two sites, U/J = 4: E₀ = (U − √(U² + 16J²))/2
        let p = ModelParams { u_bb: 4.0, ..Default::default() };
        let policy = TruncationPolicy::default();
        let schedule = GroundStateSchedule::default();
        let (state, report) =
            box_ground_state(&p, 2, 2, 3, &policy, UpdatePath::Conserving, &schedule).unwrap();
        let expect = 0.5 * (4.0 - (32.0f64).sqrt());
        assert!(report.converged, "budget exhausted after {} sweeps", report.sweeps);
        assert!(
            (report.energy - expect).abs() < 1e-6,
            "E = {}, exact {expect}",
            report.energy
        );
        assert!((state.norm() - 1.0).abs() < 1e-10);
        assert!((state.total_charge() - 2.0).abs() < 1e-10);

        // four sites against the dense sector solver
        let (_, report4) =
            box_ground_state(&p, 4, 2, 3, &policy, UpdatePath::Conserving, &schedule).unwrap();
        let ed = EdProblem::for_box(&p, 4, 2, 3).unwrap();
        let (e_ed, _) = ed.ground();
        assert!(
            (report4.energy - e_ed).abs() < 1e-6,
            "E = {}, dense {e_ed}",
            report4.energy
        );
    }

    #[test]
    fn imaginary_time_energy_monotone_after_first_stage() {
        let p = ModelParams { u_bb: 2.0, ..Default::default() };
        let policy = TruncationPolicy::default();
        let schedule = GroundStateSchedule::default();
        let (_, report) =
            box_ground_state(&p, 4, 3, 4, &policy, UpdatePath::Conserving, &schedule).unwrap();
        assert!(report.converged);
        for stage in &report.stage_energies[1..] {
            for w in stage.windows(2) {
                assert!(
                    w[1] <= w[0] + 1e-8,
                    "energy rose {} -> {} inside a late stage",
                    w[0],
                    w[1]
                );
            }
        }
    }

    #[test]
    fn seed_patterns() {
        assert_eq!(even_seed(4, 4), vec![1, 1, 1, 1]);
        assert_eq!(even_seed(2, 4), vec![1, 0, 1, 0]);
        assert_eq!(even_seed(3, 6), vec![1, 0, 1, 0, 1, 0]);
        assert_eq!(even_seed(5, 3), vec![2, 2, 1]);
        assert_eq!(even_seed(0, 3), vec![0, 0, 0]);
        assert_eq!(even_seed(2, 4).iter().sum::<usize>(), 2);
    }

    #[test]
    fn embed_and_kick_round_trip() {
        let p = ModelParams { u_bb: 2.0, ..Default::default() };
        let g = LatticeGeometry { left_sites: 4, right_sites: 3, probe_cutoff: 3, impurity_probe_cutoff: 3 };
        let policy = TruncationPolicy::default();
        let (box_state, _) = box_ground_state(
            &p,
            4,
            2,
            3,
            &policy,
            UpdatePath::Conserving,
            &GroundStateSchedule::default(),
        )
        .unwrap();
        let state = embed_in_lattice(&box_state, &g).unwrap();
        assert_eq!(state.n_sites(), g.total_sites());
        assert!((state.total_charge() - 2.0).abs() < 1e-10);
        assert!(observables::n_right(&state, &g).unwrap().abs() < 1e-12);
        let occ = observables::occupations(&state, &g).unwrap();
        assert!(occ.molecule.abs() < 1e-14 && occ.impurity_probe.abs() < 1e-14);
        // box profile carries over unchanged
        for l in 0..4 {
            let box_occ = box_state
                .expect_site_diag(l, &[0.0, 1.0, 2.0])
                .unwrap();
            assert!((occ.profile[l] - box_occ).abs() < 1e-12);
        }

        // kick, inverse kick: fidelity 1 within 1e-12
        let mut kicked = state.clone();
        apply_kick(&mut kicked, &g, std::f64::consts::FRAC_PI_3).unwrap();
        assert!((kicked.total_charge() - 2.0).abs() < 1e-10);
        apply_kick(&mut kicked, &g, -std::f64::consts::FRAC_PI_3).unwrap();
        let fidelity = kicked.overlap(&state).unwrap().norm();
        assert!((fidelity - 1.0).abs() < 1e-12, "fidelity {fidelity}");
    }

    #[test]
    fn resumed_segment_reproduces_uninterrupted_run() {
        let p = ModelParams { omega: 0.8, u_qb: 0.5, ..Default::default() };
        let g = LatticeGeometry::tonks(2, 2);
        let plan = TrotterPlan::lattice(&p, &g, TimeStep::Real(0.05)).unwrap();
        let occ = [1usize, 1, 0, 0, 0];
        let mut cfg = EvolutionConfig::for_dt(0.05);
        cfg.steps = 24;
        let mut s1 =
            VidalState::from_product_state(&g.all_dims(), &g.all_charges(), &occ).unwrap();
        let full = run(&mut s1, &plan, &g, &cfg, None).unwrap();

        // same run split at a sample boundary after 10 steps
        let mut s2 =
            VidalState::from_product_state(&g.all_dims(), &g.all_charges(), &occ).unwrap();
        let mut head_cfg = cfg.clone();
        head_cfg.steps = 10;
        let mut series = run(&mut s2, &plan, &g, &head_cfg, None).unwrap();
        let mut tail_cfg = cfg.clone();
        tail_cfg.step_offset = 10;
        tail_cfg.steps = 14;
        let tail = run(&mut s2, &plan, &g, &tail_cfg, None).unwrap();
        series.append(&tail).unwrap();

        // bit-for-bit identical samples
        assert_eq!(full.times, series.times);
        assert_eq!(full.n_right, series.n_right);
        assert_eq!(full.norm, series.norm);
        assert_eq!(full.total_charge, series.total_charge);
        assert_eq!(full.max_discarded, series.max_discarded);
        assert_eq!(full.molecule_occ, series.molecule_occ);
        let f1 = s1.overlap(&s2).unwrap().norm();
        assert!((f1 - 1.0).abs() < 1e-14);
    }

    #[test]
    fn config_validation() {
        let mut c = EvolutionConfig::for_dt(0.05);
        c.steps = 10;
        assert!(c.validate().is_ok());
        assert_eq!(c.sample_every, 2); // 0.1/J at δt = 0.05
        c.sample_every = 0;
        assert!(matches!(c.validate(), Err(EvolveError::InvalidConfig(_))));
        let mut c = EvolutionConfig::for_dt(0.0);
        c.steps = 1;
        assert!(c.validate().is_err());
        let mut c = EvolutionConfig::for_dt(0.01);
        c.chi_max = Some(0);
        assert!(c.validate().is_err());
        // serde round-trip with defaults filled in
        let json = r#"{"dt":0.01,"steps":100}"#;
        let parsed: EvolutionConfig = serde_json::from_str(json).unwrap();
        assert_eq!(parsed.sample_every, 10);
        assert_eq!(parsed.path, UpdatePath::Conserving);
        assert!(parsed.chi_max.is_none());
        let back = serde_json::to_string(&parsed).unwrap();
        let reparsed: EvolutionConfig = serde_json::from_str(&back).unwrap();
        assert_eq!(parsed, reparsed);
    }

    #[test]
    fn plan_rejects_mismatched_state() {
        let p = ModelParams::default();
        let g = LatticeGeometry::tonks(2, 1);
        let plan = TrotterPlan::lattice(&p, &g, TimeStep::Real(0.05)).unwrap();
        let other = LatticeGeometry::tonks(3, 1);
        let mut state = VidalState::from_product_state(
            &other.all_dims(),
            &other.all_charges(),
            &[1, 0, 0, 0, 0],
        )
        .unwrap();
        assert!(matches!(
            plan.apply(&mut state, &TruncationPolicy::default(), UpdatePath::Conserving),
            Err(EvolveError::InvalidConfig(_))
        ));
    }
}
