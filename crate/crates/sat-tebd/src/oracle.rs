//! Independent exact references used to validate the tensor-network engine.
//!
//! Three families:
//!
//! 1. **Quadratic (free-fermion) dynamics.** In the hard-core limit the
//!    chain maps to free fermions; with the molecule included as one extra
//!    fermionic mode the whole problem is a single-particle Hamiltonian
//!    `h`, and the correlation matrix `C_ij = ⟨c_i† c_j⟩` evolves as
//!    `C(t) = e^{+iht} C(0) e^{−iht}`. The map to the bosonic model is
//!    exact for densities at Ω = 0 (the string phase of the fermionization
//!    is inert) and requires `u_qb = u_bm = 0`.
//! 2. **Sector exact diagonalization.** Small lattices are diagonalized in
//!    the fixed-particle-number basis, built from the *same* Hamiltonian
//!    blocks the evolution gates use, which makes conventions impossible to
//!    get out of sync. Supports exact `e^{−iHt}` propagation, ground
//!    states, dense gate application, Schmidt spectra and correlations.
//! 3. **Wavepacket scattering.** A Gaussian single-particle packet is run
//!    past the impurity to measure the transmission probability that the
//!    closed-form Fano profile must reproduce.

use crate::model::{self, LatticeGeometry, ModelError, ModelParams};
use crate::observables::{ObservablesError, Sample, TimeSeries};
use ndarray::prelude::*;
use ndarray_linalg::{Eigh, SVDInto, UPLO};
use num_complex::Complex64 as C64;
use std::collections::HashMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("oracle not valid in this regime: {0}")]
    InvalidRegime(String),
    #[error("Hilbert-space dimension {dim} exceeds the oracle budget {max}")]
    DimensionBudget { dim: usize, max: usize },
    #[error("state outside the enumerated particle-number sector")]
    OutsideSector,
    #[error("eigendecomposition failed: {0}")]
    Eigen(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Series(#[from] ObservablesError),
}

// ---------------------------------------------------------------------------
// quadratic (single-particle / free-fermion) model
// ---------------------------------------------------------------------------

/// Single-particle Hamiltonian of the chain plus the molecule mode.
///
/// Index layout: chain sites `0..total_sites` in array order, molecule mode
/// last. Couplings: hopping −J on all bonds, Ω between the impurity site
/// and the molecule, −Δ on the molecule diagonal, and U_qb on the impurity
/// diagonal (exact in the one-particle sector; the many-fermion
/// correlation evolution additionally requires `u_qb = u_bm = 0`).
#[derive(Debug, Clone)]
pub struct QuadraticModel {
    h: Array2<f64>,
    evals: Array1<f64>,
    evecs: Array2<C64>,
    n_sites: usize,
    impurity: usize,
}

impl QuadraticModel {
    pub fn new(params: &ModelParams, geometry: &LatticeGeometry) -> Result<Self, OracleError> {
        params.validate()?;
        geometry.validate()?;
        let m = geometry.total_sites();
        let dim = m + 1;
        let imp = geometry.impurity_site();
        let mut h = Array2::zeros((dim, dim));
        for l in 0..m - 1 {
            h[[l, l + 1]] = -params.j;
            h[[l + 1, l]] = -params.j;
        }
        h[[imp, m]] = params.omega;
        h[[m, imp]] = params.omega;
        h[[m, m]] = -params.delta;
        h[[imp, imp]] = params.u_qb;
        let (evals, evecs_r) = h.eigh(UPLO::Lower).map_err(|e| OracleError::Eigen(e.to_string()))?;
        let evecs = evecs_r.mapv(|x| C64::new(x, 0.0));
        Ok(Self { h, evals, evecs, n_sites: m, impurity: imp })
    }

    pub fn dim(&self) -> usize {
        self.n_sites + 1
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn molecule_index(&self) -> usize {
        self.n_sites
    }

    pub fn impurity_index(&self) -> usize {
        self.impurity
    }

    pub fn hamiltonian(&self) -> &Array2<f64> {
        &self.h
    }

    /// ψ(t) = e^{−iht} ψ for a single-particle amplitude vector.
    pub fn evolve_state(&self, psi: &ArrayView1<C64>, t: f64) -> Array1<C64> {
        let coeff = self.evecs.t().mapv(|z| z.conj()).dot(psi);
        let phased: Array1<C64> = coeff
            .iter()
            .zip(self.evals.iter())
            .map(|(&c, &e)| c * C64::from_polar(1.0, -e * t))
            .collect();
        self.evecs.dot(&phased)
    }

    /// C(t₀ + t) = e^{+iht} C(t₀) e^{−iht}, exact via the eigenbasis.
    ///
    /// This is the Heisenberg evolution of `C_ij = ⟨c_i† c_j⟩` under the
    /// Schrödinger convention `|ψ(t)⟩ = e^{−iHt}|ψ⟩`; for a single particle
    /// it reduces to the outer product ψ(t)* ψ(t)ᵀ.
    pub fn evolve_correlations(&self, state: &CorrelationState, t: f64) -> CorrelationState {
        if t == 0.0 {
            return state.clone();
        }
        let u_dag_c_u = self.evecs.t().mapv(|z| z.conj()).dot(&state.c).dot(&self.evecs);
        let mut w = u_dag_c_u;
        for ((a, b), v) in w.indexed_iter_mut() {
            *v *= C64::from_polar(1.0, (self.evals[a] - self.evals[b]) * t);
        }
        let c = self.evecs.dot(&w).dot(&self.evecs.t().mapv(|z| z.conj()));
        CorrelationState { c, time: state.time + t }
    }
}

/// One-body correlation matrix ⟨c_i† c_j⟩ over chain sites plus the
/// molecule mode, with a time stamp.
#[derive(Debug, Clone)]
pub struct CorrelationState {
    pub c: Array2<C64>,
    pub time: f64,
}

impl CorrelationState {
    pub fn trace(&self) -> f64 {
        (0..self.c.nrows()).map(|i| self.c[[i, i]].re).sum()
    }

    pub fn occupation(&self, index: usize) -> f64 {
        self.c[[index, index]].re
    }

    /// Probe atoms right of the impurity (molecule mode excluded).
    pub fn n_right(&self, geometry: &LatticeGeometry) -> f64 {
        (geometry.impurity_site() + 1..geometry.total_sites())
            .map(|j| self.c[[j, j]].re)
            .sum()
    }

    pub fn molecule_occupation(&self) -> f64 {
        let m = self.c.nrows() - 1;
        self.c[[m, m]].re
    }

    /// Chain-only block (drops the molecule row/column).
    pub fn probe_block(&self) -> Array2<C64> {
        let m = self.c.nrows() - 1;
        self.c.slice(s![..m, ..m]).to_owned()
    }

    pub fn max_hermiticity_violation(&self) -> f64 {
        let mut worst = 0.0f64;
        for ((i, j), v) in self.c.indexed_iter() {
            worst = worst.max((v - self.c[[j, i]].conj()).norm());
        }
        worst
    }
}

/// Ground state of N free fermions in the left box: the N lowest
/// open-chain sine orbitals on the `left_sites` box sites, everything else
/// (impurity, right lead, molecule) empty.
pub fn fermion_box_ground(n: usize, geometry: &LatticeGeometry) -> Result<CorrelationState, OracleError> {
    let m_left = geometry.left_sites;
    if n > m_left {
        return Err(OracleError::InvalidRegime(format!(
            "{n} fermions exceed the {m_left}-site box"
        )));
    }
    let dim = geometry.total_sites() + 1;
    let mut c: Array2<C64> = Array2::zeros((dim, dim));
    let norm = 2.0 / (m_left as f64 + 1.0);
    for q in 1..=n {
        for x in 0..m_left {
            for y in 0..m_left {
                let phix = (norm).sqrt() * (q as f64 * std::f64::consts::PI * (x as f64 + 1.0)
                    / (m_left as f64 + 1.0))
                    .sin();
                let phiy = (norm).sqrt() * (q as f64 * std::f64::consts::PI * (y as f64 + 1.0)
                    / (m_left as f64 + 1.0))
                    .sin();
                c[[x, y]] += C64::new(phix * phiy, 0.0);
            }
        }
    }
    Ok(CorrelationState { c, time: 0.0 })
}

/// Free evolution oracle: `evolve_correlations(state, model, t)`.
pub fn evolve_correlations(
    state: &CorrelationState,
    model: &QuadraticModel,
    t: f64,
) -> Result<CorrelationState, OracleError> {
    if state.c.nrows() != model.dim() {
        return Err(OracleError::DimensionMismatch(format!(
            "correlation matrix {} vs model {}",
            state.c.nrows(),
            model.dim()
        )));
    }
    Ok(model.evolve_correlations(state, t))
}

/// Momentum kick by conjugation with diag(e^{i p_k j}) over the physical
/// grid index j (impurity at 0); the molecule mode takes the impurity's
/// phase (j = 0, i.e. none).
pub fn kick_correlations(
    state: &CorrelationState,
    geometry: &LatticeGeometry,
    p_k: f64,
) -> CorrelationState {
    let m = geometry.total_sites();
    let mut phases: Vec<C64> = (0..m)
        .map(|l| C64::from_polar(1.0, p_k * geometry.grid_index(l) as f64))
        .collect();
    phases.push(C64::new(1.0, 0.0)); // molecule at grid 0
    let mut c = state.c.clone();
    for ((i, j), v) in c.indexed_iter_mut() {
        *v = phases[i].conj() * *v * phases[j];
    }
    CorrelationState { c, time: state.time }
}

/// Free-fermion transport reference: box ground state, optional kick,
/// exact evolution, N_R(t) sampled on `t_grid`.
///
/// Valid only at `u_qb = u_bm = 0` (interactions break the quadratic form);
/// Ω may be nonzero, in which case the molecule is a fermionic mode and the
/// correspondence to the bosonic chain is qualitative rather than exact.
pub fn fermion_current_series(
    params: &ModelParams,
    geometry: &LatticeGeometry,
    n: usize,
    p_k: f64,
    t_grid: &[f64],
) -> Result<TimeSeries, OracleError> {
    if params.u_qb != 0.0 || params.u_bm != 0.0 {
        return Err(OracleError::InvalidRegime(format!(
            "fermion correlations require u_qb = u_bm = 0 (got {}, {})",
            params.u_qb, params.u_bm
        )));
    }
    let model = QuadraticModel::new(params, geometry)?;
    let mut c0 = fermion_box_ground(n, geometry)?;
    if p_k != 0.0 {
        c0 = kick_correlations(&c0, geometry, p_k);
    }
    let imp = geometry.impurity_site();
    let mut series = TimeSeries::new();
    for &t in t_grid {
        let ct = model.evolve_correlations(&c0, t);
        series.push(Sample {
            time: t,
            n_right: ct.n_right(geometry),
            norm: 1.0,
            total_charge: ct.trace(),
            max_discarded: 0.0,
            molecule_occ: ct.molecule_occupation(),
            impurity_occ: ct.occupation(imp),
            profile: None,
        })?;
    }
    Ok(series)
}

// ---------------------------------------------------------------------------
// sector exact diagonalization
// ---------------------------------------------------------------------------

/// Hard budget on the enumerated sector dimension.
pub const ED_DIMENSION_BUDGET: usize = 20_000;

/// Enumerated occupation basis of a fixed total-charge sector.
#[derive(Debug, Clone)]
pub struct SectorBasis {
    dims: Vec<usize>,
    site_charges: Vec<Vec<i64>>,
    states: Vec<Vec<u8>>,
    index: HashMap<Vec<u8>, usize>,
    total_charge: i64,
}

impl SectorBasis {
    /// Enumerates all product configurations with the given total charge.
    pub fn new(
        dims: &[usize],
        site_charges: &[Vec<i64>],
        total_charge: i64,
    ) -> Result<Self, OracleError> {
        if dims.len() != site_charges.len() {
            return Err(OracleError::DimensionMismatch(format!(
                "{} dims vs {} charge tables",
                dims.len(),
                site_charges.len()
            )));
        }
        let nonneg = site_charges.iter().all(|qs| qs.iter().all(|&q| q >= 0));
        if nonneg {
            let dim = sector_dimension(dims, site_charges, total_charge);
            if dim > ED_DIMENSION_BUDGET {
                return Err(OracleError::DimensionBudget { dim, max: ED_DIMENSION_BUDGET });
            }
        }
        // max attainable charge of each suffix, for pruning
        let m = dims.len();
        let mut suffix_max = vec![0i64; m + 1];
        for l in (0..m).rev() {
            let site_max = site_charges[l].iter().copied().max().unwrap_or(0);
            suffix_max[l] = suffix_max[l + 1] + site_max;
        }
        let mut states = Vec::new();
        let mut config = vec![0u8; m];
        enumerate(dims, site_charges, &suffix_max, total_charge, 0, 0, &mut config, &mut states);
        if states.len() > ED_DIMENSION_BUDGET {
            return Err(OracleError::DimensionBudget { dim: states.len(), max: ED_DIMENSION_BUDGET });
        }
        let index = states
            .iter()
            .enumerate()
            .map(|(i, s)| (s.clone(), i))
            .collect();
        Ok(Self {
            dims: dims.to_vec(),
            site_charges: site_charges.to_vec(),
            states,
            index,
            total_charge,
        })
    }

    pub fn for_lattice(geometry: &LatticeGeometry, n: i64) -> Result<Self, OracleError> {
        Self::new(&geometry.all_dims(), &geometry.all_charges(), n)
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    /// Charge carried by each local basis state, per site.
    pub fn site_charges(&self) -> &[Vec<i64>] {
        &self.site_charges
    }

    pub fn total_charge(&self) -> i64 {
        self.total_charge
    }

    pub fn states(&self) -> &[Vec<u8>] {
        &self.states
    }

    pub fn index_of(&self, config: &[u8]) -> Option<usize> {
        self.index.get(config).copied()
    }

    /// Basis vector for a product configuration.
    pub fn product_state(&self, occupations: &[usize]) -> Result<Array1<C64>, OracleError> {
        let config: Vec<u8> = occupations.iter().map(|&o| o as u8).collect();
        let idx = self.index_of(&config).ok_or(OracleError::OutsideSector)?;
        let mut psi = Array1::zeros(self.len());
        psi[idx] = C64::new(1.0, 0.0);
        Ok(psi)
    }

    /// Expands a sector vector into the full row-major product basis
    /// (matching [`crate::mps::VidalState::to_state_vector`]).
    pub fn embed_dense(&self, psi: &ArrayView1<C64>) -> Result<Array1<C64>, OracleError> {
        if psi.len() != self.len() {
            return Err(OracleError::DimensionMismatch(format!(
                "vector {} vs sector {}",
                psi.len(),
                self.len()
            )));
        }
        let full: usize = self.dims.iter().product();
        let mut out = Array1::zeros(full);
        for (s, &a) in self.states.iter().zip(psi.iter()) {
            let mut idx = 0usize;
            for (l, &occ) in s.iter().enumerate() {
                idx = idx * self.dims[l] + occ as usize;
            }
            out[idx] = a;
        }
        Ok(out)
    }

    /// Expectation of a product of diagonal site weights.
    pub fn expect_diag(&self, psi: &ArrayView1<C64>, site: usize, diag: &[f64]) -> f64 {
        self.states
            .iter()
            .zip(psi.iter())
            .map(|(s, a)| diag[s[site] as usize] * a.norm_sqr())
            .sum()
    }

    /// Applies a two-site gate (pair-basis matrix, row-major) at bond `l`.
    pub fn apply_two_site(
        &self,
        psi: &ArrayView1<C64>,
        gate: &ArrayView2<C64>,
        l: usize,
    ) -> Result<Array1<C64>, OracleError> {
        let (s1, s2) = (self.dims[l], self.dims[l + 1]);
        if gate.dim() != (s1 * s2, s1 * s2) {
            return Err(OracleError::DimensionMismatch(format!(
                "gate {:?} vs pair {}",
                gate.dim(),
                s1 * s2
            )));
        }
        let mut out = Array1::zeros(self.len());
        let mut scratch;
        for (s, &a) in self.states.iter().zip(psi.iter()) {
            if a == C64::new(0.0, 0.0) {
                continue;
            }
            let col = s[l] as usize * s2 + s[l + 1] as usize;
            for ip in 0..s1 {
                for jp in 0..s2 {
                    let g = gate[[ip * s2 + jp, col]];
                    if g == C64::new(0.0, 0.0) {
                        continue;
                    }
                    scratch = s.clone();
                    scratch[l] = ip as u8;
                    scratch[l + 1] = jp as u8;
                    if let Some(t) = self.index_of(&scratch) {
                        out[t] += g * a;
                    }
                    // configurations outside the sector have zero amplitude
                    // for charge-conserving gates; silently dropped
                }
            }
        }
        Ok(out)
    }

    /// Applies a single-site gate at `l`.
    pub fn apply_single_site(
        &self,
        psi: &ArrayView1<C64>,
        gate: &ArrayView2<C64>,
        l: usize,
    ) -> Result<Array1<C64>, OracleError> {
        let s1 = self.dims[l];
        if gate.dim() != (s1, s1) {
            return Err(OracleError::DimensionMismatch(format!(
                "gate {:?} vs site dim {}",
                gate.dim(),
                s1
            )));
        }
        let mut out = Array1::zeros(self.len());
        let mut scratch;
        for (s, &a) in self.states.iter().zip(psi.iter()) {
            if a == C64::new(0.0, 0.0) {
                continue;
            }
            let col = s[l] as usize;
            for ip in 0..s1 {
                let g = gate[[ip, col]];
                if g == C64::new(0.0, 0.0) {
                    continue;
                }
                scratch = s.clone();
                scratch[l] = ip as u8;
                if let Some(t) = self.index_of(&scratch) {
                    out[t] += g * a;
                }
            }
        }
        Ok(out)
    }

    /// Schmidt coefficients across the bond left of site `bond`
    /// (descending).
    pub fn schmidt_values(&self, psi: &ArrayView1<C64>, bond: usize) -> Result<Vec<f64>, OracleError> {
        if bond == 0 || bond >= self.dims.len() {
            return Err(OracleError::DimensionMismatch(format!("interior bond expected, got {bond}")));
        }
        let mut left_index: HashMap<&[u8], usize> = HashMap::new();
        let mut right_index: HashMap<&[u8], usize> = HashMap::new();
        for s in &self.states {
            let nl = left_index.len();
            left_index.entry(&s[..bond]).or_insert(nl);
            let nr = right_index.len();
            right_index.entry(&s[bond..]).or_insert(nr);
        }
        let mut mat: Array2<C64> = Array2::zeros((left_index.len(), right_index.len()));
        for (s, &a) in self.states.iter().zip(psi.iter()) {
            let r = left_index[&s[..bond]];
            let c = right_index[&s[bond..]];
            mat[[r, c]] = a;
        }
        let (_, sv, _) = mat
            .svd_into(false, false)
            .map_err(|e| OracleError::Eigen(e.to_string()))?;
        let mut out: Vec<f64> = sv.to_vec();
        out.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
        Ok(out)
    }

    /// One-body correlation ⟨a_i† a_j⟩ for per-site annihilation matrices.
    pub fn correlation_matrix(
        &self,
        psi: &ArrayView1<C64>,
        annihilators: &[Array2<f64>],
    ) -> Result<Array2<C64>, OracleError> {
        let m = self.dims.len();
        if annihilators.len() != m {
            return Err(OracleError::DimensionMismatch(format!(
                "{} annihilators for {m} sites",
                annihilators.len()
            )));
        }
        let mut corr = Array2::zeros((m, m));
        // b_j |ψ⟩ for every j, represented in the N−1 sector by reusing the
        // config map: store as map from config to amplitude
        for i in 0..m {
            for j in i..m {
                let mut acc = C64::new(0.0, 0.0);
                for (s, &a) in self.states.iter().zip(psi.iter()) {
                    if a == C64::new(0.0, 0.0) {
                        continue;
                    }
                    // ⟨ψ| b_i† b_j |s⟩ a_s : apply b_j then b_i†
                    let bj = &annihilators[j];
                    let col_j = s[j] as usize;
                    for row_j in 0..self.dims[j] {
                        let amp_j = bj[[row_j, col_j]];
                        if amp_j == 0.0 {
                            continue;
                        }
                        let bi = &annihilators[i];
                        // b_i† entry: (b_i†)[row_i, col_i] = b_i[col_i, row_i]
                        let col_i = if i == j { row_j } else { s[i] as usize };
                        for row_i in 0..self.dims[i] {
                            let amp_i = bi[[col_i, row_i]];
                            if amp_i == 0.0 {
                                continue;
                            }
                            let mut target = s.clone();
                            target[j] = row_j as u8;
                            target[i] = row_i as u8;
                            if let Some(t) = self.index_of(&target) {
                                acc += psi[t].conj() * amp_i * amp_j * a;
                            }
                        }
                    }
                }
                corr[[i, j]] = acc;
                corr[[j, i]] = acc.conj();
            }
        }
        Ok(corr)
    }
}

/// Number of product configurations with the given total charge, counted
/// without enumeration (valid for non-negative site charges).
pub fn sector_dimension(dims: &[usize], site_charges: &[Vec<i64>], total_charge: i64) -> usize {
    if total_charge < 0 || dims.len() != site_charges.len() {
        return 0;
    }
    let target = total_charge as usize;
    let mut ways = vec![0usize; target + 1];
    ways[0] = 1;
    for (d, qs) in dims.iter().zip(site_charges) {
        let mut next = vec![0usize; target + 1];
        for (acc, &w) in ways.iter().enumerate() {
            if w == 0 {
                continue;
            }
            for i in 0..*d {
                let q = acc as i64 + qs[i];
                if (0..=target as i64).contains(&q) {
                    next[q as usize] = next[q as usize].saturating_add(w);
                }
            }
        }
        ways = next;
    }
    ways[target]
}

#[allow(clippy::too_many_arguments)]
fn enumerate(
    dims: &[usize],
    site_charges: &[Vec<i64>],
    suffix_max: &[i64],
    target: i64,
    site: usize,
    acc: i64,
    config: &mut Vec<u8>,
    out: &mut Vec<Vec<u8>>,
) {
    if site == dims.len() {
        if acc == target {
            out.push(config.clone());
        }
        return;
    }
    for i in 0..dims[site] {
        let q = acc + site_charges[site][i];
        if q > target || q + suffix_max[site + 1] < target {
            continue;
        }
        config[site] = i as u8;
        enumerate(dims, site_charges, suffix_max, target, site + 1, q, config, out);
    }
    config[site] = 0;
}

/// Dense Hamiltonian and exact propagator on a [`SectorBasis`].
#[derive(Debug, Clone)]
pub struct EdProblem {
    basis: SectorBasis,
    h: Array2<f64>,
    evals: Array1<f64>,
    evecs: Array2<f64>,
}

impl EdProblem {
    /// Builds H from explicit per-bond pair blocks and per-site blocks.
    pub fn from_blocks(
        basis: SectorBasis,
        bond_blocks: &[Array2<f64>],
        site_blocks: &[Array2<f64>],
    ) -> Result<Self, OracleError> {
        let m = basis.dims.len();
        if bond_blocks.len() != m - 1 || site_blocks.len() != m {
            return Err(OracleError::DimensionMismatch(format!(
                "{} bond / {} site blocks for {m} sites",
                bond_blocks.len(),
                site_blocks.len()
            )));
        }
        let dim = basis.len();
        let mut h: Array2<f64> = Array2::zeros((dim, dim));
        for l in 0..m - 1 {
            let s2 = basis.dims[l + 1];
            let block = &bond_blocks[l];
            for (s_idx, s) in basis.states.iter().enumerate() {
                let col = s[l] as usize * s2 + s[l + 1] as usize;
                for (row, &v) in block.column(col).iter().enumerate() {
                    if v == 0.0 {
                        continue;
                    }
                    let mut target = s.clone();
                    target[l] = (row / s2) as u8;
                    target[l + 1] = (row % s2) as u8;
                    if let Some(t) = basis.index_of(&target) {
                        h[[t, s_idx]] += v;
                    }
                }
            }
        }
        for l in 0..m {
            let block = &site_blocks[l];
            for (s_idx, s) in basis.states.iter().enumerate() {
                let col = s[l] as usize;
                for (row, &v) in block.column(col).iter().enumerate() {
                    if v == 0.0 {
                        continue;
                    }
                    let mut target = s.clone();
                    target[l] = row as u8;
                    if let Some(t) = basis.index_of(&target) {
                        h[[t, s_idx]] += v;
                    }
                }
            }
        }
        let (evals, evecs) = h.eigh(UPLO::Lower).map_err(|e| OracleError::Eigen(e.to_string()))?;
        Ok(Self { basis, h, evals, evecs })
    }

    /// Impurity lattice in the N-particle sector, built from the model's
    /// own Hamiltonian blocks.
    pub fn for_lattice(
        params: &ModelParams,
        geometry: &LatticeGeometry,
        n: i64,
    ) -> Result<Self, OracleError> {
        params.validate()?;
        geometry.validate()?;
        let basis = SectorBasis::for_lattice(geometry, n)?;
        let m = geometry.total_sites();
        let bond_blocks: Vec<Array2<f64>> = (0..m - 1)
            .map(|l| model::bond_hamiltonian(params, geometry, l))
            .collect::<Result<_, _>>()?;
        let site_blocks: Vec<Array2<f64>> =
            (0..m).map(|l| model::site_hamiltonian(params, geometry, l)).collect();
        Self::from_blocks(basis, &bond_blocks, &site_blocks)
    }

    /// Plain Bose-Hubbard box (no impurity): hopping −J and on-site U_bb
    /// over `m_sites` sites with local dimension `cutoff`.
    pub fn for_box(
        params: &ModelParams,
        m_sites: usize,
        n: i64,
        cutoff: usize,
    ) -> Result<Self, OracleError> {
        params.validate()?;
        if m_sites < 2 || cutoff < 2 {
            return Err(OracleError::InvalidRegime(format!(
                "box needs ≥ 2 sites and cutoff ≥ 2 (got {m_sites}, {cutoff})"
            )));
        }
        let dims = vec![cutoff; m_sites];
        let charges: Vec<Vec<i64>> = vec![(0..cutoff as i64).collect(); m_sites];
        let basis = SectorBasis::new(&dims, &charges, n)?;
        let b = model::annihilator(cutoff);
        let hop = model::hopping_pair_hamiltonian(params.j, &b, &b);
        let site = model::ordinary_site_hamiltonian(params, cutoff);
        let bond_blocks = vec![hop; m_sites - 1];
        let site_blocks = vec![site; m_sites];
        Self::from_blocks(basis, &bond_blocks, &site_blocks)
    }

    pub fn basis(&self) -> &SectorBasis {
        &self.basis
    }

    pub fn hamiltonian(&self) -> &Array2<f64> {
        &self.h
    }

    pub fn max_hermiticity_violation(&self) -> f64 {
        let mut worst = 0.0f64;
        for ((i, j), v) in self.h.indexed_iter() {
            worst = worst.max((v - self.h[[j, i]]).abs());
        }
        worst
    }

    /// Ground energy and state of the sector.
    pub fn ground(&self) -> (f64, Array1<f64>) {
        (self.evals[0], self.evecs.column(0).to_owned())
    }

    /// ψ(t) = e^{−iHt} ψ, exact in the sector.
    pub fn evolve(&self, psi: &ArrayView1<C64>, t: f64) -> Array1<C64> {
        // split re/im so the rotation uses real BLAS products
        let re: Array1<f64> = psi.iter().map(|z| z.re).collect();
        let im: Array1<f64> = psi.iter().map(|z| z.im).collect();
        let cr = self.evecs.t().dot(&re);
        let ci = self.evecs.t().dot(&im);
        let mut rot_r = Array1::zeros(cr.len());
        let mut rot_i = Array1::zeros(cr.len());
        for k in 0..cr.len() {
            let (s, c) = (-self.evals[k] * t).sin_cos();
            // (cr + i ci)(c + i s)
            rot_r[k] = cr[k] * c - ci[k] * s;
            rot_i[k] = cr[k] * s + ci[k] * c;
        }
        let out_r = self.evecs.dot(&rot_r);
        let out_i = self.evecs.dot(&rot_i);
        out_r
            .iter()
            .zip(out_i.iter())
            .map(|(&r, &i)| C64::new(r, i))
            .collect()
    }

    /// ⟨ψ|H|ψ⟩.
    pub fn energy(&self, psi: &ArrayView1<C64>) -> f64 {
        let re: Array1<f64> = psi.iter().map(|z| z.re).collect();
        let im: Array1<f64> = psi.iter().map(|z| z.im).collect();
        let hr = self.h.dot(&re);
        let hi = self.h.dot(&im);
        re.dot(&hr) + im.dot(&hi)
    }
}

/// Probe-occupation diagonal weights for a lattice site.
pub fn probe_diag(geometry: &LatticeGeometry, site: usize) -> Vec<f64> {
    let op = model::number_op(geometry, site);
    (0..op.nrows()).map(|i| op[[i, i]]).collect()
}

/// N_R for a sector-basis state on the impurity lattice.
pub fn ed_n_right(basis: &SectorBasis, psi: &ArrayView1<C64>, geometry: &LatticeGeometry) -> f64 {
    (geometry.impurity_site() + 1..geometry.total_sites())
        .map(|l| basis.expect_diag(psi, l, &probe_diag(geometry, l)))
        .sum()
}

// ---------------------------------------------------------------------------
// wavepacket scattering
// ---------------------------------------------------------------------------

/// Outcome of a single-particle scattering run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WavepacketOutcome {
    /// Probability on sites right of the impurity when the flux settled.
    pub transmission: f64,
    /// Time at which |dT/dt| dropped below the settle threshold.
    pub settle_time: f64,
    /// Set when probability reached the chain edges before settling, or the
    /// flux never settled within the time budget.
    pub flagged: bool,
}

/// Settle threshold on |dT/dt| in units of J.
pub const WAVEPACKET_SETTLE_RATE: f64 = 1e-5;
/// Edge-probability threshold that flags boundary contamination.
pub const WAVEPACKET_EDGE_BUDGET: f64 = 1e-4;

/// Default scattering geometry: 100 + 1 + 100 hard-core sites.
pub fn default_wavepacket_geometry() -> LatticeGeometry {
    LatticeGeometry::tonks(100, 100)
}

/// Gaussian wavepacket width (σ, in sites) used by the acceptance checks.
pub const WAVEPACKET_SIGMA: f64 = 10.0;
/// Launch center on the physical grid.
pub const WAVEPACKET_CENTER: f64 = -60.0;

/// Transmission probability of a Gaussian wavepacket with carrier momentum
/// `k0` and spatial width `sigma`, launched left of the impurity.
///
/// The packet (plus molecule amplitude) evolves under the exact
/// single-particle Hamiltonian; the returned transmission is the weight on
/// sites j > 0 once |dT/dt| < [`WAVEPACKET_SETTLE_RATE`]. The outcome is
/// flagged when probability leaks onto the outer three sites of either edge
/// before settling.
pub fn wavepacket_transmission(
    k0: f64,
    sigma: f64,
    params: &ModelParams,
    geometry: &LatticeGeometry,
) -> Result<WavepacketOutcome, OracleError> {
    if !(k0 > 0.0 && k0 < std::f64::consts::PI) {
        return Err(OracleError::InvalidRegime(format!(
            "carrier momentum must lie in (0, π), got {k0}"
        )));
    }
    let model = QuadraticModel::new(params, geometry)?;
    let m = geometry.total_sites();
    let dim = model.dim();
    let center = WAVEPACKET_CENTER;
    let mut psi: Array1<C64> = Array1::zeros(dim);
    for l in 0..m {
        let x = geometry.grid_index(l) as f64;
        if x > 0.0 {
            continue; // launch strictly on the left side
        }
        let envelope = (-(x - center).powi(2) / (4.0 * sigma * sigma)).exp();
        psi[l] = C64::from_polar(envelope, k0 * x);
    }
    let norm = psi.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    psi.mapv_inplace(|z| z / norm);

    let right_weight = |p: &Array1<C64>| -> f64 {
        (0..m)
            .filter(|&l| geometry.grid_index(l) > 0)
            .map(|l| p[l].norm_sqr())
            .sum()
    };
    let edge_weight = |p: &Array1<C64>| -> f64 {
        let mut w = 0.0;
        for l in 0..3.min(m) {
            w += p[l].norm_sqr() + p[m - 1 - l].norm_sqr();
        }
        w
    };

    // the scattering event is over once the incident packet, moving at the
    // carrier group velocity, has fully cleared the impurity (3σ margin)
    let velocity = 2.0 * params.j * k0.sin();
    let t_arrive = (center.abs() + 3.0 * sigma) / velocity;
    let dt = 0.5 / params.j;
    let t_max = 400.0 / params.j;
    let mut t = 0.0;
    let mut prev = right_weight(&psi);
    let mut transmission = prev;
    while t < t_max {
        psi = model.evolve_state(&psi.view(), dt);
        t += dt;
        transmission = right_weight(&psi);
        let rate = (transmission - prev).abs() / dt;
        prev = transmission;
        if edge_weight(&psi) > WAVEPACKET_EDGE_BUDGET {
            // an edge echo would contaminate the result from here on
            return Ok(WavepacketOutcome { transmission, settle_time: t, flagged: true });
        }
        if t > t_arrive && rate < WAVEPACKET_SETTLE_RATE * params.j {
            return Ok(WavepacketOutcome { transmission, settle_time: t, flagged: false });
        }
    }
    Ok(WavepacketOutcome { transmission, settle_time: t, flagged: true })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn default_params() -> ModelParams {
        ModelParams::default()
    }

    #[test]
    fn quadratic_model_structure() {
        let p = ModelParams { omega: 0.7, delta: 0.3, u_qb: 0.2, ..default_params() };
        let g = LatticeGeometry::tonks(2, 2);
        let qm = QuadraticModel::new(&p, &g).unwrap();
        let h = qm.hamiltonian();
        assert_eq!(h.dim(), (6, 6));
        assert_eq!(h[[0, 1]], -1.0);
        assert_eq!(h[[2, 5]], 0.7); // impurity-molecule coupling
        assert_eq!(h[[5, 5]], -0.3);
        assert_eq!(h[[2, 2]], 0.2);
        assert_eq!(h[[3, 5]], 0.0);
    }

    #[test]
    fn two_site_rabi_oscillation() {
        //  n_2(t) = sin²(Jt) for one particle hopping on two sites
        let g = LatticeGeometry::tonks(1, 0);
        let qm = QuadraticModel::new(&default_params(), &g).unwrap();
        let mut c0: Array2<C64> = Array2::zeros((3, 3));
        c0[[0, 0]] = C64::new(1.0, 0.0);
        let state = CorrelationState { c: c0, time: 0.0 };
        for &t in &[0.3, 0.7, 1.9] {
            let ct = evolve_correlations(&state, &qm, t).unwrap();
            assert!((ct.occupation(1) - t.sin().powi(2)).abs() < 1e-12);
            assert!((ct.trace() - 1.0).abs() < 1e-12);
            assert!(ct.max_hermiticity_violation() < 1e-12);
            assert!((ct.time - t).abs() < 1e-15);
        }
        // t = 0 leaves the state untouched
        let ct = evolve_correlations(&state, &qm, 0.0).unwrap();
        assert_eq!(ct.c, state.c);
    }

    #[test]
    fn box_ground_examples() {
        // filled band: box block is the identity
        let g = LatticeGeometry::tonks(3, 2);
        let c = fermion_box_ground(3, &g).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((c.c[[i, j]].re - expect).abs() < 1e-12);
                assert!(c.c[[i, j]].im.abs() < 1e-15);
            }
        }
        // symmetric orbital on a 2-site box
        let g = LatticeGeometry::tonks(2, 1);
        let c = fermion_box_ground(1, &g).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert!((c.c[[i, j]].re - 0.5).abs() < 1e-12);
            }
        }
        // trace = N
        let g = LatticeGeometry::tonks(10, 5);
        let c = fermion_box_ground(5, &g).unwrap();
        assert!((c.trace() - 5.0).abs() < 1e-12);
        assert!(c.molecule_occupation().abs() < 1e-15);
        // box larger than site count is rejected
        assert!(matches!(fermion_box_ground(11, &g), Err(OracleError::InvalidRegime(_))));
    }

    #[test]
    fn trace_conserved_under_evolution() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = ModelParams { omega: 1.3, delta: -0.4, ..default_params() };
        let g = LatticeGeometry::tonks(4, 3);
        let qm = QuadraticModel::new(&p, &g).unwrap();
        let c0 = fermion_box_ground(3, &g).unwrap();
        for _ in 0..4 {
            let t: f64 = rng.gen_range(0.1..8.0);
            let ct = evolve_correlations(&c0, &qm, t).unwrap();
            assert!((ct.trace() - 3.0).abs() < 1e-12);
            assert!(ct.max_hermiticity_violation() < 1e-12);
        }
    }

    #[test]
    fn kick_preserves_density_and_shifts_phases() {
        let g = LatticeGeometry::tonks(5, 3);
        let c0 = fermion_box_ground(3, &g).unwrap();
        let kicked = kick_correlations(&c0, &g, std::f64::consts::FRAC_PI_2);
        for i in 0..c0.c.nrows() {
            assert!((kicked.c[[i, i]].re - c0.c[[i, i]].re).abs() < 1e-14);
        }
        // off-diagonal picks exactly e^{i p (j-i)}
        let p = std::f64::consts::FRAC_PI_2;
        let (i, j) = (1usize, 3usize);
        let expect = c0.c[[i, j]] * C64::from_polar(1.0, p * (j as f64 - i as f64));
        assert!((kicked.c[[i, j]] - expect).norm() < 1e-14);
        // p = 0 is the identity
        let same = kick_correlations(&c0, &g, 0.0);
        assert_eq!(same.c, c0.c);
    }

    #[test]
    fn filled_band_kick_invariance() {
        // with every Bloch state occupied the kick permutes the band
        let g = LatticeGeometry::tonks(8, 8);
        let p = default_params();
        let grid: Vec<f64> = (1..=10).map(|i| 0.4 * i as f64).collect();
        let base = fermion_current_series(&p, &g, 8, 0.0, &grid).unwrap();
        let kicked = fermion_current_series(&p, &g, 8, std::f64::consts::FRAC_PI_2, &grid).unwrap();
        for (a, b) in base.n_right.iter().zip(&kicked.n_right) {
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
    }

    #[test]
    fn strong_coupling_blocks_transport() {
        let g = LatticeGeometry::tonks(10, 10);
        let p = ModelParams { omega: 1000.0, ..default_params() };
        let grid = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let s = fermion_current_series(&p, &g, 5, 0.0, &grid).unwrap();
        assert!(s.n_right.last().unwrap() < &0.05, "N_R = {:?}", s.n_right);
        // and the free chain transmits freely
        let free = fermion_current_series(&default_params(), &g, 5, 0.0, &grid).unwrap();
        assert!(free.n_right.last().unwrap() > &1.0);
    }

    #[test]
    fn kick_boosts_transport() {
        // dilute gas (n = 1/6): a π/2 kick moves the occupied momenta from
        // the slow band bottom to the band center, tripling Σ|v|
        let g = LatticeGeometry::tonks(18, 18);
        let p = default_params();
        let grid: Vec<f64> = (1..=16).map(|i| 0.5 * i as f64).collect();
        let kicked = fermion_current_series(&p, &g, 3, std::f64::consts::FRAC_PI_2, &grid).unwrap();
        let idle = fermion_current_series(&p, &g, 3, 0.0, &grid).unwrap();
        let (k, i) = (kicked.n_right.last().unwrap(), idle.n_right.last().unwrap());
        assert!(k > &(2.0 * i), "kicked {k} vs idle {i}");
    }

    #[test]
    fn interacting_regime_rejected() {
        let g = LatticeGeometry::tonks(4, 4);
        let p = ModelParams { u_qb: 0.5, ..default_params() };
        assert!(matches!(
            fermion_current_series(&p, &g, 2, 0.0, &[1.0]),
            Err(OracleError::InvalidRegime(_))
        ));
    }

    #[test]
    fn sector_enumeration_counts() {
        // 3 hard-core sites, 1 particle → 3 states
        let dims = vec![2, 2, 2];
        let charges: Vec<Vec<i64>> = vec![vec![0, 1]; 3];
        let basis = SectorBasis::new(&dims, &charges, 1).unwrap();
        assert_eq!(basis.len(), 3);
        // lattice with impurity: charge counts include the molecule
        let g = LatticeGeometry::tonks(1, 1);
        let basis = SectorBasis::for_lattice(&g, 1).unwrap();
        // configs: 100(q), 001(q), (1,q), (0,m) → 4 states
        assert_eq!(basis.len(), 4);
        let empty = SectorBasis::for_lattice(&g, 0).unwrap();
        assert_eq!(empty.len(), 1);
    }

    #[test]
    fn ed_ground_state_two_site_examples() {
        // single particle on two sites: E = −J, symmetric orbital
        let ed = EdProblem::for_box(&default_params(), 2, 1, 2).unwrap();
        let (e0, v0) = ed.ground();
        assert!((e0 + 1.0).abs() < 1e-12);
        assert!((v0[0].abs() - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
        // two bosons, U/J = 4: E = (U − sqrt(U² + 16 J²))/2
        let p = ModelParams { u_bb: 4.0, ..default_params() };
        let ed = EdProblem::for_box(&p, 2, 2, 3).unwrap();
        let (e0, _) = ed.ground();
        let expect = 0.5 * (4.0 - (16.0f64 + 16.0).sqrt());
        assert!((e0 - expect).abs() < 1e-12, "E₀ = {e0}, expected {expect}");
        assert!(ed.max_hermiticity_violation() == 0.0);
    }

    #[test]
    fn ed_matches_quadratic_model_for_single_particle() {
        // one hard-core boson = one fermion = one quadratic particle
        let p = ModelParams { omega: 0.8, delta: 0.2, ..default_params() };
        let g = LatticeGeometry::tonks(2, 2);
        let ed = EdProblem::for_lattice(&p, &g, 1).unwrap();
        let qm = QuadraticModel::new(&p, &g).unwrap();

        // initial particle on the leftmost site
        let mut occ = vec![0usize; g.total_sites()];
        occ[0] = 1;
        let psi0 = ed.basis().product_state(&occ).unwrap();
        let mut c0: Array2<C64> = Array2::zeros((qm.dim(), qm.dim()));
        c0[[0, 0]] = C64::new(1.0, 0.0);
        let corr0 = CorrelationState { c: c0, time: 0.0 };

        for &t in &[0.5, 1.5, 3.0] {
            let psi_t = ed.evolve(&psi0.view(), t);
            let corr_t = qm.evolve_correlations(&corr0, t);
            for l in 0..g.total_sites() {
                let ed_n = ed.basis().expect_diag(&psi_t.view(), l, &probe_diag(&g, l));
                assert!(
                    (ed_n - corr_t.occupation(l)).abs() < 1e-12,
                    "site {l} at t={t}: {ed_n} vs {}",
                    corr_t.occupation(l)
                );
            }
            // molecule occupation: ED diag on the impurity flag
            let cutoff = g.impurity_probe_cutoff;
            let mol_diag: Vec<f64> = (0..2 * cutoff)
                .map(|i| if i >= cutoff { 1.0 } else { 0.0 })
                .collect();
            let ed_mol = ed.basis().expect_diag(&psi_t.view(), g.impurity_site(), &mol_diag);
            assert!((ed_mol - corr_t.molecule_occupation()).abs() < 1e-12);
        }
    }

    #[test]
    fn ed_energy_conserved_and_charge_definite() {
        let p = ModelParams { u_bb: 2.0, omega: 1.0, ..default_params() };
        let g = LatticeGeometry::tonks(2, 1);
        let ed = EdProblem::for_lattice(&p, &g, 2).unwrap();
        let mut occ = vec![0usize; g.total_sites()];
        occ[0] = 1;
        occ[1] = 1; // impurity atom index (1, q)
        let psi0 = ed.basis().product_state(&occ).unwrap();
        let e0 = ed.energy(&psi0.view());
        let psi_t = ed.evolve(&psi0.view(), 2.7);
        assert!((ed.energy(&psi_t.view()) - e0).abs() < 1e-10);
        let n: f64 = psi_t.iter().map(|z| z.norm_sqr()).sum();
        assert!((n - 1.0).abs() < 1e-12);
        assert_eq!(ed.basis().total_charge(), 2);
    }

    #[test]
    fn ed_schmidt_values_of_bell_state() {
        let dims = vec![2, 2];
        let charges: Vec<Vec<i64>> = vec![vec![0, 1]; 2];
        let basis = SectorBasis::new(&dims, &charges, 1).unwrap();
        let a = basis.index_of(&[1, 0]).unwrap();
        let b = basis.index_of(&[0, 1]).unwrap();
        let mut psi: Array1<C64> = Array1::zeros(basis.len());
        psi[a] = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        psi[b] = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        let sv = basis.schmidt_values(&psi.view(), 1).unwrap();
        assert_eq!(sv.len().min(4), 2);
        assert!((sv[0] - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
        assert!((sv[1] - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
    }

    #[test]
    fn sector_gate_application() {
        let dims = vec![2, 2, 2];
        let charges: Vec<Vec<i64>> = vec![vec![0, 1]; 3];
        let basis = SectorBasis::new(&dims, &charges, 1).unwrap();
        let psi = basis.product_state(&[1, 0, 0]).unwrap();
        // swap on bond 0 moves the particle
        let mut swap: Array2<C64> = Array2::zeros((4, 4));
        for i in 0..2 {
            for j in 0..2 {
                swap[[j * 2 + i, i * 2 + j]] = C64::new(1.0, 0.0);
            }
        }
        let out = basis.apply_two_site(&psi.view(), &swap.view(), 0).unwrap();
        let expect = basis.product_state(&[0, 1, 0]).unwrap();
        assert_eq!(out, expect);
        // identity single-site gate is a no-op
        let eye: Array2<C64> = Array2::eye(2);
        let out2 = basis.apply_single_site(&out.view(), &eye.view(), 1).unwrap();
        assert_eq!(out2, out);
    }

    #[test]
    fn ed_correlation_matches_quadratic_single_particle() {
        let g = LatticeGeometry::tonks(2, 1);
        let p = default_params();
        let ed = EdProblem::for_lattice(&p, &g, 1).unwrap();
        let mut occ = vec![0usize; g.total_sites()];
        occ[0] = 1;
        let psi0 = ed.basis().product_state(&occ).unwrap();
        let psi_t = ed.evolve(&psi0.view(), 1.3);

        let qm = QuadraticModel::new(&p, &g).unwrap();
        let mut c0: Array2<C64> = Array2::zeros((qm.dim(), qm.dim()));
        c0[[0, 0]] = C64::new(1.0, 0.0);
        let corr_t = qm.evolve_correlations(&CorrelationState { c: c0, time: 0.0 }, 1.3);

        let ann: Vec<Array2<f64>> = (0..g.total_sites())
            .map(|l| {
                if g.is_impurity(l) {
                    model::impurity_annihilator(g.impurity_probe_cutoff)
                } else {
                    model::annihilator(g.site_dim(l))
                }
            })
            .collect();
        let corr_ed = ed.basis().correlation_matrix(&psi_t.view(), &ann).unwrap();
        for i in 0..g.total_sites() {
            for j in 0..g.total_sites() {
                assert!(
                    (corr_ed[[i, j]] - corr_t.c[[i, j]]).norm() < 1e-12,
                    "({i},{j}): {} vs {}",
                    corr_ed[[i, j]],
                    corr_t.c[[i, j]]
                );
            }
        }
    }

    #[test]
    fn budget_guard_trips() {
        let g = LatticeGeometry::soft_core(8, 8);
        let err = SectorBasis::for_lattice(&g, 8);
        assert!(matches!(err, Err(OracleError::DimensionBudget { .. })));
    }

    #[test]
    fn wavepacket_free_chain_transmits() {
        let g = default_wavepacket_geometry();
        let out = wavepacket_transmission(
            std::f64::consts::FRAC_PI_2,
            WAVEPACKET_SIGMA,
            &default_params(),
            &g,
        )
        .unwrap();
        assert!(!out.flagged, "boundary contamination at t = {}", out.settle_time);
        assert!(out.transmission >= 0.999, "T = {}", out.transmission);
    }

    #[test]
    fn wavepacket_resonant_blocking() {
        let g = default_wavepacket_geometry();
        let p = ModelParams { omega: 4.0, ..default_params() };
        let out =
            wavepacket_transmission(std::f64::consts::FRAC_PI_2, WAVEPACKET_SIGMA, &p, &g).unwrap();
        assert!(out.transmission < 0.01, "T = {}", out.transmission);
    }

    #[test]
    fn wavepacket_interference_transparency() {
        // ε(π/3) = −J = −Δ − Ω²/U_qb at Ω = U_qb = J, Δ = 0
        let g = default_wavepacket_geometry();
        let p = ModelParams { omega: 1.0, u_qb: 1.0, ..default_params() };
        let out = wavepacket_transmission(
            std::f64::consts::FRAC_PI_3,
            WAVEPACKET_SIGMA,
            &p,
            &g,
        )
        .unwrap();
        assert!(!out.flagged);
        assert!(out.transmission > 0.95, "T = {}", out.transmission);
        let fano = model::fano_transmission(std::f64::consts::FRAC_PI_3, &p);
        assert!((out.transmission - fano).abs() < 0.02);
    }
}
