//! Matrix-product state in the Γ–λ (Schmidt canonical) form with
//! particle-number block structure.
//!
//! The state over `M` sites is stored as one Γ tensor per site, indexed
//! `(left bond, physical, right bond)` in row-major order, and one λ vector
//! of Schmidt coefficients per bond. Bonds are numbered `0..=M` with
//! fictitious unit-dimension boundary bonds at `0` and `M`, so
//!
//! ```text
//! ψ(i_0 .. i_{M-1}) = λ[0] Γ[0]^{i_0} λ[1] Γ[1]^{i_1} λ[2] ... Γ[M-1]^{i_{M-1}} λ[M]
//! ```
//!
//! Every Schmidt index carries an integer charge label: the total particle
//! number in the block left of that bond. A nonzero Γ element must connect
//! labels as `right = left + charge(physical)`, which makes two-site updates
//! decompose into independent charge blocks. Both the block-wise
//! (number-conserving) update and the plain dense-SVD update are provided
//! behind the same interface; they differ exactly where the two historical
//! codes differed, in how the singular value decomposition is organized.
//!
//! Truncation keeps the globally largest χ Schmidt values across all charge
//! blocks jointly, ties broken by smaller charge label first and then
//! block-internal column order. λ is renormalized to unit norm after every
//! truncation and the discarded weight ε_λ = Σ_dropped λ² (of the normalized
//! spectrum) is reported per update.

use ndarray::prelude::*;
use ndarray_linalg::{SVDDCInto, SVDInto, JobSvd};
use num_complex::Complex64 as C64;
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MpsError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("site {site}: occupation index {occ} exceeds local dimension {dim}")]
    OccupationOutOfRange { site: usize, occ: usize, dim: usize },
    #[error("gate violates charge conservation: {0}")]
    ChargeViolation(String),
    #[error("singular value decomposition failed: {0}")]
    SvdFailure(String),
    #[error("truncation removed every Schmidt value (state annihilated)")]
    EmptyTruncation,
    #[error("bond index {bond} out of range (state has {bonds} interior bonds)")]
    BondOutOfRange { bond: usize, bonds: usize },
    #[error("inconsistent state: {0}")]
    InvalidState(String),
}

/// Schmidt-rank / coefficient truncation rule shared by all updates.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TruncationPolicy {
    /// Maximum retained Schmidt rank χ.
    pub chi_max: usize,
    /// Relative coefficient floor; singular values below
    /// `lambda_floor · ‖σ‖` are dropped regardless of χ.
    pub lambda_floor: f64,
}

impl Default for TruncationPolicy {
    fn default() -> Self {
        Self { chi_max: usize::MAX, lambda_floor: 1e-12 }
    }
}

impl TruncationPolicy {
    pub fn with_chi(chi_max: usize) -> Self {
        Self { chi_max, ..Default::default() }
    }
}

/// Which singular-value-decomposition organization a two-site update uses.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UpdatePath {
    /// Block-wise decomposition per charge sector; Γ sparsity exact.
    #[default]
    Conserving,
    /// One dense decomposition of the full two-site tensor.
    Plain,
}

impl std::fmt::Display for UpdatePath {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            UpdatePath::Conserving => write!(f, "conserving"),
            UpdatePath::Plain => write!(f, "plain"),
        }
    }
}

/// Per-update truncation report.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GateReport {
    /// Discarded weight ε_λ of this update (normalized spectrum).
    pub discarded_weight: f64,
    /// Retained Schmidt rank of the updated bond.
    pub new_rank: usize,
}

/// Schmidt coefficients with charge labels at one bond.
#[derive(Debug, Clone, PartialEq)]
pub struct SchmidtSpectrum {
    pub bond: usize,
    /// (λ, left-block particle number), descending in λ.
    pub values: Vec<(f64, i64)>,
}

impl SchmidtSpectrum {
    /// Von Neumann entanglement entropy −Σ λ² ln λ².
    pub fn entropy(&self) -> f64 {
        self.values
            .iter()
            .map(|&(l, _)| {
                let p = l * l;
                if p > 0.0 { -p * p.ln() } else { 0.0 }
            })
            .sum()
    }

    pub fn norm_sq(&self) -> f64 {
        self.values.iter().map(|&(l, _)| l * l).sum()
    }
}

/// Two-site gate wrapper, charge-verified at construction.
///
/// The matrix acts on the pair basis `i * S_right + j`; entries connecting
/// pairs of different total charge must vanish. Entries below a small
/// relative threshold are zeroed so that verified gates are exactly
/// block-sparse.
#[derive(Debug, Clone)]
pub struct TwoSiteGate {
    matrix: Array2<C64>,
    dim_left: usize,
    dim_right: usize,
}

const GATE_PROJECT_TOL: f64 = 1e-13;

impl TwoSiteGate {
    pub fn new(
        mut matrix: Array2<C64>,
        left_charges: &[i64],
        right_charges: &[i64],
    ) -> Result<Self, MpsError> {
        let (s1, s2) = (left_charges.len(), right_charges.len());
        let d = s1 * s2;
        if matrix.dim() != (d, d) {
            return Err(MpsError::DimensionMismatch(format!(
                "gate is {:?}, pair space is {d}x{d}",
                matrix.dim()
            )));
        }
        let pair_q: Vec<i64> = left_charges
            .iter()
            .flat_map(|&ql| right_charges.iter().map(move |&qr| ql + qr))
            .collect();
        let scale = matrix.iter().map(|z| z.norm()).fold(0.0, f64::max).max(1.0);
        for ((r, c), v) in matrix.indexed_iter_mut() {
            if pair_q[r] != pair_q[c] {
                if v.norm() > GATE_PROJECT_TOL * scale {
                    return Err(MpsError::ChargeViolation(format!(
                        "entry ({r},{c}) = {v} connects charge {} to {}",
                        pair_q[c], pair_q[r]
                    )));
                }
                *v = C64::new(0.0, 0.0);
            }
        }
        Ok(Self { matrix, dim_left: s1, dim_right: s2 })
    }

    pub fn matrix(&self) -> &Array2<C64> {
        &self.matrix
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.dim_left, self.dim_right)
    }
}

/// The Γ–λ matrix-product state.
#[derive(Debug, Clone)]
pub struct VidalState {
    dims: Vec<usize>,
    site_charges: Vec<Vec<i64>>,
    gammas: Vec<Array3<C64>>,
    lambdas: Vec<Vec<f64>>,
    bond_charges: Vec<Vec<i64>>,
}

impl VidalState {
    /// Product state with the given local basis index on each site.
    pub fn from_product_state(
        dims: &[usize],
        site_charges: &[Vec<i64>],
        occupations: &[usize],
    ) -> Result<Self, MpsError> {
        let m = dims.len();
        if site_charges.len() != m || occupations.len() != m {
            return Err(MpsError::DimensionMismatch(format!(
                "dims/charges/occupations lengths {m}/{}/{}",
                site_charges.len(),
                occupations.len()
            )));
        }
        let mut gammas = Vec::with_capacity(m);
        let mut bond_charges = vec![vec![0i64]];
        let mut running = 0i64;
        for l in 0..m {
            let occ = occupations[l];
            if occ >= dims[l] {
                return Err(MpsError::OccupationOutOfRange { site: l, occ, dim: dims[l] });
            }
            let mut g = Array3::zeros((1, dims[l], 1));
            g[[0, occ, 0]] = C64::new(1.0, 0.0);
            gammas.push(g);
            running += site_charges[l][occ];
            bond_charges.push(vec![running]);
        }
        Ok(Self {
            dims: dims.to_vec(),
            site_charges: site_charges.to_vec(),
            gammas,
            lambdas: vec![vec![1.0]; m + 1],
            bond_charges,
        })
    }

    pub fn n_sites(&self) -> usize {
        self.dims.len()
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn site_charges(&self) -> &[Vec<i64>] {
        &self.site_charges
    }

    /// Schmidt rank of bond `l` (0..=M; boundary bonds have rank 1).
    pub fn bond_dim(&self, bond: usize) -> usize {
        self.lambdas[bond].len()
    }

    pub fn max_bond_dim(&self) -> usize {
        self.lambdas.iter().map(Vec::len).max().unwrap_or(1)
    }

    pub fn lambda(&self, bond: usize) -> &[f64] {
        &self.lambdas[bond]
    }

    pub fn bond_charge_labels(&self, bond: usize) -> &[i64] {
        &self.bond_charges[bond]
    }

    pub fn gamma(&self, site: usize) -> &Array3<C64> {
        &self.gammas[site]
    }

    /// Constructor from raw parts; checks shape consistency only.
    pub fn from_parts(
        dims: Vec<usize>,
        site_charges: Vec<Vec<i64>>,
        gammas: Vec<Array3<C64>>,
        lambdas: Vec<Vec<f64>>,
        bond_charges: Vec<Vec<i64>>,
    ) -> Result<Self, MpsError> {
        let m = dims.len();
        if site_charges.len() != m || gammas.len() != m || lambdas.len() != m + 1 || bond_charges.len() != m + 1 {
            return Err(MpsError::DimensionMismatch("from_parts: length mismatch".into()));
        }
        for l in 0..m {
            let (a, s, b) = gammas[l].dim();
            if s != dims[l] || a != lambdas[l].len() || b != lambdas[l + 1].len() {
                return Err(MpsError::DimensionMismatch(format!(
                    "site {l}: gamma {:?} vs lambda {}x{} and dim {}",
                    gammas[l].dim(),
                    lambdas[l].len(),
                    lambdas[l + 1].len(),
                    dims[l]
                )));
            }
            if bond_charges[l].len() != lambdas[l].len() {
                return Err(MpsError::DimensionMismatch(format!("bond {l}: charge labels vs lambda")));
            }
        }
        Ok(Self { dims, site_charges, gammas, lambdas, bond_charges })
    }

    pub fn into_parts(self) -> (Vec<usize>, Vec<Vec<i64>>, Vec<Array3<C64>>, Vec<Vec<f64>>, Vec<Vec<i64>>) {
        (self.dims, self.site_charges, self.gammas, self.lambdas, self.bond_charges)
    }

    /// Applies a two-site gate at the bond between sites `l` and `l+1`.
    pub fn apply_two_site_gate(
        &mut self,
        l: usize,
        gate: &TwoSiteGate,
        policy: &TruncationPolicy,
        path: UpdatePath,
    ) -> Result<GateReport, MpsError> {
        let m = self.n_sites();
        if l + 1 >= m {
            return Err(MpsError::BondOutOfRange { bond: l, bonds: m - 1 });
        }
        let (s1, s2) = (self.dims[l], self.dims[l + 1]);
        if gate.dims() != (s1, s2) {
            return Err(MpsError::DimensionMismatch(format!(
                "gate dims {:?} vs sites ({s1},{s2})",
                gate.dims()
            )));
        }
        let a = self.bond_dim(l);
        let b = self.bond_dim(l + 1);
        let c = self.bond_dim(l + 2);

        // θ[(α i),(j γ)] = λ_l Γ_l λ_mid Γ_{l+1} λ_r, then the gate on (i,j).
        let mut t1 = self.gammas[l].clone();
        scale_axis0(&mut t1, &self.lambdas[l]);
        scale_axis2(&mut t1, &self.lambdas[l + 1]);
        let mut t2 = self.gammas[l + 1].clone();
        scale_axis2(&mut t2, &self.lambdas[l + 2]);
        let t1 = t1.into_shape_with_order((a * s1, b)).expect("contiguous");
        let t2 = t2.into_shape_with_order((b, s2 * c)).expect("contiguous");
        let theta = t1.dot(&t2); // (a*s1, s2*c)

        // gate application on the physical pair
        let theta4 = theta.into_shape_with_order((a, s1, s2, c)).expect("contiguous");
        let perm = theta4.permuted_axes([1, 2, 0, 3]);
        let perm = perm.as_standard_layout().into_owned();
        let pmat = perm.into_shape_with_order((s1 * s2, a * c)).expect("contiguous");
        let gated = gate.matrix.dot(&pmat);
        let gated4 = gated.into_shape_with_order((s1, s2, a, c)).expect("contiguous");
        let back = gated4.permuted_axes([2, 0, 1, 3]);
        let back = back.as_standard_layout().into_owned();
        let theta = back.into_shape_with_order((a * s1, s2 * c)).expect("contiguous");

        let row_q: Vec<i64> = (0..a * s1)
            .map(|r| self.bond_charges[l][r / s1] + self.site_charges[l][r % s1])
            .collect();
        let col_q: Vec<i64> = (0..s2 * c)
            .map(|cc| self.bond_charges[l + 2][cc % c] - self.site_charges[l + 1][cc / c])
            .collect();

        let out = match path {
            UpdatePath::Conserving => svd_truncate_conserving(&theta, &row_q, &col_q, policy)?,
            UpdatePath::Plain => svd_truncate_plain(theta, &row_q, policy)?,
        };
        let r = out.lambda.len();

        let mut g1 = out
            .u
            .into_shape_with_order((a, s1, r))
            .expect("contiguous");
        inv_scale_axis0(&mut g1, &self.lambdas[l]);
        let mut g2 = out
            .vt
            .into_shape_with_order((r, s2, c))
            .expect("contiguous");
        inv_scale_axis2(&mut g2, &self.lambdas[l + 2]);

        self.gammas[l] = g1;
        self.gammas[l + 1] = g2;
        self.lambdas[l + 1] = out.lambda;
        self.bond_charges[l + 1] = out.charges;
        Ok(GateReport { discarded_weight: out.eps, new_rank: r })
    }

    /// Applies a charge-diagonal single-site gate; χ and λ are untouched.
    pub fn apply_single_site_gate(&mut self, site: usize, gate: &ArrayView2<C64>) -> Result<(), MpsError> {
        self.apply_single_site_inner(site, gate, false)
    }

    /// Single-site gate followed by renormalization of the local tensor;
    /// used for non-unitary (imaginary-time) gates.
    pub fn apply_single_site_gate_renormalized(
        &mut self,
        site: usize,
        gate: &ArrayView2<C64>,
    ) -> Result<(), MpsError> {
        self.apply_single_site_inner(site, gate, true)
    }

    fn apply_single_site_inner(
        &mut self,
        site: usize,
        gate: &ArrayView2<C64>,
        renormalize: bool,
    ) -> Result<(), MpsError> {
        let m = self.n_sites();
        if site >= m {
            return Err(MpsError::DimensionMismatch(format!("site {site} out of range {m}")));
        }
        let s = self.dims[site];
        if gate.dim() != (s, s) {
            return Err(MpsError::DimensionMismatch(format!("gate {:?} vs local dim {s}", gate.dim())));
        }
        let q = &self.site_charges[site];
        let scale = gate.iter().map(|z| z.norm()).fold(0.0, f64::max).max(1.0);
        for ((r, c), v) in gate.indexed_iter() {
            if q[r] != q[c] && v.norm() > GATE_PROJECT_TOL * scale {
                return Err(MpsError::ChargeViolation(format!(
                    "single-site entry ({r},{c}) connects charge {} to {}",
                    q[c], q[r]
                )));
            }
        }
        // zero sub-threshold charge-violating residue so Γ sparsity stays exact
        let mut gm = gate.to_owned();
        for ((r, c), v) in gm.indexed_iter_mut() {
            if q[r] != q[c] {
                *v = C64::new(0.0, 0.0);
            }
        }
        let (a, _, b) = self.gammas[site].dim();
        let g = self.gammas[site].view().permuted_axes([1, 0, 2]);
        let g = g.as_standard_layout().into_owned();
        let gmat = g.into_shape_with_order((s, a * b)).expect("contiguous");
        let updated = gm.dot(&gmat);
        let updated3 = updated.into_shape_with_order((s, a, b)).expect("contiguous");
        let back = updated3.permuted_axes([1, 0, 2]);
        let mut new_gamma = back.as_standard_layout().into_owned();
        if renormalize {
            let mut n2 = 0.0;
            for ((alpha, _, beta), v) in new_gamma.indexed_iter() {
                let w = self.lambdas[site][alpha] * self.lambdas[site + 1][beta];
                n2 += (w * w) * v.norm_sqr();
            }
            if n2 <= 0.0 {
                return Err(MpsError::EmptyTruncation);
            }
            let inv = C64::new(1.0 / n2.sqrt(), 0.0);
            new_gamma.mapv_inplace(|z| z * inv);
        }
        self.gammas[site] = new_gamma;
        Ok(())
    }

    /// ⟨Ψ|O_l|Ψ⟩ through the λ–Γ–λ contraction; exact for the canonical form.
    pub fn expect_site(&self, site: usize, op: &ArrayView2<C64>) -> Result<C64, MpsError> {
        let s = self.dims[site];
        if op.dim() != (s, s) {
            return Err(MpsError::DimensionMismatch(format!("op {:?} vs local dim {s}", op.dim())));
        }
        let mut weighted = self.gammas[site].clone();
        scale_axis0(&mut weighted, &self.lambdas[site]);
        scale_axis2(&mut weighted, &self.lambdas[site + 1]);
        let (a, _, b) = weighted.dim();
        let perm = weighted.permuted_axes([1, 0, 2]);
        let perm = perm.as_standard_layout().into_owned();
        let amat = perm.into_shape_with_order((s, a * b)).expect("contiguous");
        // S[i', i] = Σ_(αβ) conj(A[i']) A[i]
        let smat = amat.mapv(|z| z.conj()).dot(&amat.t());
        let mut total = C64::new(0.0, 0.0);
        for ((ip, i), &o) in op.indexed_iter() {
            if o != C64::new(0.0, 0.0) {
                total += o * smat[[ip, i]];
            }
        }
        Ok(total)
    }

    /// Expectation of a diagonal local observable given by its diagonal.
    pub fn expect_site_diag(&self, site: usize, diag: &[f64]) -> Result<f64, MpsError> {
        let s = self.dims[site];
        if diag.len() != s {
            return Err(MpsError::DimensionMismatch(format!("diag len {} vs {s}", diag.len())));
        }
        let g = &self.gammas[site];
        let la = &self.lambdas[site];
        let lb = &self.lambdas[site + 1];
        let mut total = 0.0;
        for ((alpha, i, beta), v) in g.indexed_iter() {
            let w = la[alpha] * lb[beta];
            total += diag[i] * w * w * v.norm_sqr();
        }
        Ok(total)
    }

    /// Two-site expectation value at bond `l` (canonical contraction).
    pub fn expect_bond(&self, l: usize, op: &ArrayView2<C64>) -> Result<C64, MpsError> {
        let m = self.n_sites();
        if l + 1 >= m {
            return Err(MpsError::BondOutOfRange { bond: l, bonds: m - 1 });
        }
        let (s1, s2) = (self.dims[l], self.dims[l + 1]);
        if op.dim() != (s1 * s2, s1 * s2) {
            return Err(MpsError::DimensionMismatch(format!(
                "op {:?} vs pair dim {}",
                op.dim(),
                s1 * s2
            )));
        }
        let a = self.bond_dim(l);
        let c = self.bond_dim(l + 2);
        let b = self.bond_dim(l + 1);
        let mut t1 = self.gammas[l].clone();
        scale_axis0(&mut t1, &self.lambdas[l]);
        scale_axis2(&mut t1, &self.lambdas[l + 1]);
        let mut t2 = self.gammas[l + 1].clone();
        scale_axis2(&mut t2, &self.lambdas[l + 2]);
        let t1 = t1.into_shape_with_order((a * s1, b)).expect("contiguous");
        let t2 = t2.into_shape_with_order((b, s2 * c)).expect("contiguous");
        let theta = t1.dot(&t2);
        let theta4 = theta.into_shape_with_order((a, s1, s2, c)).expect("contiguous");
        let perm = theta4.permuted_axes([1, 2, 0, 3]);
        let perm = perm.as_standard_layout().into_owned();
        let x = perm.into_shape_with_order((s1 * s2, a * c)).expect("contiguous");
        let ox = op.dot(&x);
        let mut total = C64::new(0.0, 0.0);
        for (xv, ov) in x.iter().zip(ox.iter()) {
            total += xv.conj() * ov;
        }
        Ok(total)
    }

    /// True norm ⟨Ψ|Ψ⟩^{1/2} from a full transfer contraction (does not
    /// assume canonicality).
    pub fn norm(&self) -> f64 {
        let mut env: Array2<C64> = Array2::eye(1);
        for l in 0..self.n_sites() {
            env = self.transfer_through(env, l);
        }
        env[[0, 0]].re.max(0.0).sqrt()
    }

    fn transfer_through(&self, env: Array2<C64>, l: usize) -> Array2<C64> {
        // env' = Σ_i A_i† env A_i with A = diag(λ_l) Γ_l
        let mut a = self.gammas[l].clone();
        scale_axis0(&mut a, &self.lambdas[l]);
        let (_, s, b) = a.dim();
        let mut out = Array2::zeros((b, b));
        for i in 0..s {
            let ai = a.index_axis(Axis(1), i);
            let ea = env.dot(&ai);
            out = out + ai.mapv(|z| z.conj()).t().dot(&ea);
        }
        out
    }

    /// Sum over sites of the local charge expectation (molecule counts as
    /// one probe atom via the charge labels).
    pub fn total_charge(&self) -> f64 {
        (0..self.n_sites())
            .map(|l| {
                let q: Vec<f64> = self.site_charges[l].iter().map(|&x| x as f64).collect();
                self.expect_site_diag(l, &q).expect("dims consistent")
            })
            .sum()
    }

    /// Variance of the total charge. Quadratic cost in system size; meant
    /// for validation on small systems.
    pub fn charge_variance(&self) -> f64 {
        let m = self.n_sites();
        let mean = self.total_charge();
        let mut sq = 0.0;
        for l in 0..m {
            let q2: Vec<f64> = self.site_charges[l].iter().map(|&x| (x * x) as f64).collect();
            sq += self.expect_site_diag(l, &q2).expect("dims consistent");
        }
        for l in 0..m {
            for r in (l + 1)..m {
                sq += 2.0 * self.two_point_diag(l, r);
            }
        }
        (sq - mean * mean).max(0.0)
    }

    fn two_point_diag(&self, l: usize, r: usize) -> f64 {
        let ql: Vec<f64> = self.site_charges[l].iter().map(|&x| x as f64).collect();
        let qr: Vec<f64> = self.site_charges[r].iter().map(|&x| x as f64).collect();
        // E[β,β'] = Σ_{α,i} λ_l[α]² q_i Γ*[α,i,β'] Γ[α,i,β]
        let mut env = self.diag_closed_env(l, &ql);
        for mid in (l + 1)..r {
            env = self.transfer_mid(env, mid);
        }
        // close with q_r, λ_r on the open bond and λ² on the right bond
        let g = &self.gammas[r];
        let la = &self.lambdas[r];
        let lb = &self.lambdas[r + 1];
        let mut total = C64::new(0.0, 0.0);
        for ((alpha, i, beta), v) in g.indexed_iter() {
            if qr[i] == 0.0 {
                continue;
            }
            for alpha2 in 0..la.len() {
                let v2 = g[[alpha2, i, beta]];
                total += env[[alpha, alpha2]]
                    * qr[i]
                    * (la[alpha] * la[alpha2])
                    * v.conj()
                    * v2
                    * (lb[beta] * lb[beta]);
            }
        }
        total.re
    }

    fn diag_closed_env(&self, l: usize, weights: &[f64]) -> Array2<C64> {
        let g = &self.gammas[l];
        let la = &self.lambdas[l];
        let (_, s, b) = g.dim();
        let mut env = Array2::zeros((b, b));
        for i in 0..s {
            if weights[i] == 0.0 {
                continue;
            }
            let gi = g.index_axis(Axis(1), i);
            let mut scaled = gi.to_owned();
            for (alpha, mut row) in scaled.outer_iter_mut().enumerate() {
                let w = la[alpha] * la[alpha];
                row.mapv_inplace(|z| z * w);
            }
            env = env + gi.mapv(|z| z.conj()).t().dot(&scaled).mapv(|z| z * weights[i]);
        }
        env
    }

    fn transfer_mid(&self, env: Array2<C64>, l: usize) -> Array2<C64> {
        // env[bra, ket] on bond l; push through site l with λ_l applied
        let mut a = self.gammas[l].clone();
        scale_axis0(&mut a, &self.lambdas[l]);
        let (_, s, b) = a.dim();
        let mut out = Array2::zeros((b, b));
        for i in 0..s {
            let ai = a.index_axis(Axis(1), i);
            out = out + ai.mapv(|z| z.conj()).t().dot(&env).dot(&ai);
        }
        out
    }

    /// One-body correlation matrix ⟨a_i† a_j⟩ given per-site annihilation
    /// operators (canonical contraction).
    pub fn correlation_matrix(&self, annihilators: &[Array2<f64>]) -> Result<Array2<C64>, MpsError> {
        let m = self.n_sites();
        if annihilators.len() != m {
            return Err(MpsError::DimensionMismatch(format!(
                "{} annihilators for {m} sites",
                annihilators.len()
            )));
        }
        let ops: Vec<Array2<C64>> = annihilators.iter().map(|a| a.mapv(|v| C64::new(v, 0.0))).collect();
        let mut corr = Array2::zeros((m, m));
        for i in 0..m {
            let ni = ops[i].t().mapv(|z| z.conj()).dot(&ops[i]);
            corr[[i, i]] = self.expect_site(i, &ni.view())?;
            // E starts at bond i+1 with a_i† inserted at i
            let mut env = self.inserted_env(i, &ops[i].t().mapv(|z| z.conj()).view())?;
            for j in (i + 1)..m {
                let val = self.close_env(&env, j, &ops[j].view());
                corr[[i, j]] = val;
                corr[[j, i]] = val.conj();
                if j + 1 < m {
                    env = self.transfer_mid_weighted(env, j);
                }
            }
        }
        Ok(corr)
    }

    fn inserted_env(&self, l: usize, op: &ArrayView2<C64>) -> Result<Array2<C64>, MpsError> {
        // E[β',β] = Σ_{α,i',i} λ² Γ*[α,i',β'] op[i',i] Γ[α,i,β]
        let g = &self.gammas[l];
        let la = &self.lambdas[l];
        let (a, s, b) = g.dim();
        let mut env = Array2::zeros((b, b));
        for ip in 0..s {
            for i in 0..s {
                let o = op[[ip, i]];
                if o == C64::new(0.0, 0.0) {
                    continue;
                }
                let gp = g.index_axis(Axis(1), ip);
                let gi = g.index_axis(Axis(1), i);
                let mut scaled = gi.to_owned();
                for alpha in 0..a {
                    let w = la[alpha] * la[alpha];
                    scaled.row_mut(alpha).mapv_inplace(|z| z * w);
                }
                env = env + gp.mapv(|z| z.conj()).t().dot(&scaled).mapv(|z| z * o);
            }
        }
        Ok(env)
    }

    fn transfer_mid_weighted(&self, env: Array2<C64>, l: usize) -> Array2<C64> {
        let mut a = self.gammas[l].clone();
        scale_axis0(&mut a, &self.lambdas[l]);
        let (_, s, b) = a.dim();
        let mut out = Array2::zeros((b, b));
        for i in 0..s {
            let ai = a.index_axis(Axis(1), i);
            out = out + ai.mapv(|z| z.conj()).t().dot(&env).dot(&ai);
        }
        out
    }

    fn close_env(&self, env: &Array2<C64>, l: usize, op: &ArrayView2<C64>) -> C64 {
        let g = &self.gammas[l];
        let la = &self.lambdas[l];
        let lb = &self.lambdas[l + 1];
        let (_, s, _) = g.dim();
        let mut total = C64::new(0.0, 0.0);
        for ip in 0..s {
            for i in 0..s {
                let o = op[[ip, i]];
                if o == C64::new(0.0, 0.0) {
                    continue;
                }
                let gp = g.index_axis(Axis(1), ip); // bra side
                let gi = g.index_axis(Axis(1), i); // ket side
                // Σ_{α'α β} λ_l[α'] env[α',α] λ_l[α] Γ*[α',ip,β] Γ[α,i,β] λ_r[β]²
                for alphap in 0..la.len() {
                    for alpha in 0..la.len() {
                        let e = env[[alphap, alpha]];
                        if e == C64::new(0.0, 0.0) {
                            continue;
                        }
                        let mut acc = C64::new(0.0, 0.0);
                        for beta in 0..lb.len() {
                            acc += gp[[alphap, beta]].conj() * gi[[alpha, beta]] * (lb[beta] * lb[beta]);
                        }
                        total += o * e * la[alphap] * la[alpha] * acc;
                    }
                }
            }
        }
        total
    }

    pub fn schmidt_spectrum(&self, bond: usize) -> Result<SchmidtSpectrum, MpsError> {
        if bond > self.n_sites() {
            return Err(MpsError::BondOutOfRange { bond, bonds: self.n_sites() });
        }
        let values = self.lambdas[bond]
            .iter()
            .zip(self.bond_charges[bond].iter())
            .map(|(&l, &q)| (l, q))
            .collect();
        Ok(SchmidtSpectrum { bond, values })
    }

    /// Verifies the Γ charge-sparsity rule; returns the largest violating
    /// element magnitude.
    pub fn max_charge_violation(&self) -> f64 {
        let mut worst = 0.0f64;
        for l in 0..self.n_sites() {
            let g = &self.gammas[l];
            for ((alpha, i, beta), v) in g.indexed_iter() {
                let expected = self.bond_charges[l][alpha] + self.site_charges[l][i];
                if self.bond_charges[l + 1][beta] != expected {
                    worst = worst.max(v.norm());
                }
            }
        }
        worst
    }

    /// Expands to a dense state vector in the row-major product basis.
    /// Exponential in system size; for validation on small systems.
    pub fn to_state_vector(&self) -> Array1<C64> {
        let m = self.n_sites();
        let mut psi: Array2<C64> = Array2::eye(1); // (prefix, bond)
        for l in 0..m {
            let mut a = self.gammas[l].clone();
            scale_axis0(&mut a, &self.lambdas[l]);
            let (chi_a, s, chi_b) = a.dim();
            let amat = a.into_shape_with_order((chi_a, s * chi_b)).expect("contiguous");
            let next = psi.dot(&amat); // (prefix, s*chi_b)
            let rows = next.nrows();
            psi = next.into_shape_with_order((rows * s, chi_b)).expect("contiguous");
        }
        let n = psi.nrows();
        psi.into_shape_with_order(n).expect("contiguous")
    }

    /// Overlap ⟨other|self⟩.
    pub fn overlap(&self, other: &Self) -> Result<C64, MpsError> {
        if self.dims != other.dims {
            return Err(MpsError::DimensionMismatch("overlap of different lattices".into()));
        }
        let mut env: Array2<C64> = Array2::eye(1); // (bra bond, ket bond)
        for l in 0..self.n_sites() {
            let mut ket = self.gammas[l].clone();
            scale_axis0(&mut ket, &self.lambdas[l]);
            let mut bra = other.gammas[l].clone();
            scale_axis0(&mut bra, &other.lambdas[l]);
            let s = self.dims[l];
            let (_, _, bk) = ket.dim();
            let (_, _, bb) = bra.dim();
            let mut out: Array2<C64> = Array2::zeros((bb, bk));
            for i in 0..s {
                let ki = ket.index_axis(Axis(1), i);
                let bi = bra.index_axis(Axis(1), i);
                out = out + bi.mapv(|z| z.conj()).t().dot(&env).dot(&ki);
            }
            env = out;
        }
        Ok(env[[0, 0]])
    }

    /// Restores the canonical Γ–λ form by a pair of orthogonalization
    /// sweeps, preserving charge labels; returns the state norm before
    /// normalization.
    ///
    /// Singular values below `lambda_floor` are dropped.
    pub fn canonicalize(&mut self, lambda_floor: f64) -> Result<f64, MpsError> {
        let m = self.n_sites();
        let policy = TruncationPolicy { chi_max: usize::MAX, lambda_floor };
        if self.max_charge_violation() > 0.0 {
            return Err(MpsError::InvalidState(
                "canonicalize requires exact charge-label structure".into(),
            ));
        }

        // Left-to-right: build left-orthonormal tensors A[l].
        let mut a_tensors: Vec<Array3<C64>> = Vec::with_capacity(m);
        let mut left_labels: Vec<Vec<i64>> = Vec::with_capacity(m);
        let mut carry: Array2<C64> = Array2::eye(1);
        let mut carry_q: Vec<i64> = vec![0];
        for l in 0..m {
            left_labels.push(carry_q.clone());
            let s = self.dims[l];
            let mut w = self.gammas[l].clone();
            scale_axis0(&mut w, &self.lambdas[l]);
            let (chi_a, _, chi_b) = w.dim();
            let wmat = w.into_shape_with_order((chi_a, s * chi_b)).expect("contiguous");
            let t = carry.dot(&wmat); // (x, s*chi_b)
            let x = t.nrows();
            let t4 = t.into_shape_with_order((x, s, chi_b)).expect("contiguous");
            let tmat = t4.into_shape_with_order((x * s, chi_b)).expect("contiguous");
            let row_q: Vec<i64> = (0..x * s)
                .map(|r| carry_q[r / s] + self.site_charges[l][r % s])
                .collect();
            let col_q = self.bond_charges[l + 1].clone();
            let out = svd_truncate_conserving(&tmat, &row_q, &col_q, &policy)?;
            let r = out.lambda.len();
            a_tensors.push(out.u.into_shape_with_order((x, s, r)).expect("contiguous"));
            // carry = diag(σ) Vt, un-normalized
            let sigma_scale = out.kept_weight.sqrt();
            let mut cm = out.vt;
            for (k, mut row) in cm.outer_iter_mut().enumerate() {
                let w = out.lambda[k] * sigma_scale;
                row.mapv_inplace(|z| z * w);
            }
            carry = cm;
            carry_q = out.charges;
        }
        // carry is now 1x1 = norm * phase
        let norm_phase = carry[[0, 0]];
        let norm = norm_phase.norm();
        if norm <= 0.0 {
            return Err(MpsError::EmptyTruncation);
        }

        // Right-to-left: extract Schmidt values.
        let mut y: Array2<C64> = Array2::from_elem((1, 1), norm_phase / norm);
        let mut y_q: Vec<i64> = carry_q;
        let mut new_lambdas: Vec<Vec<f64>> = vec![Vec::new(); m + 1];
        let mut new_charges: Vec<Vec<i64>> = vec![Vec::new(); m + 1];
        new_lambdas[m] = vec![1.0];
        new_charges[m] = y_q.clone();
        let mut new_gammas: Vec<Array3<C64>> = (0..m).map(|_| Array3::zeros((0, 0, 0))).collect();
        for l in (0..m).rev() {
            let s = self.dims[l];
            let a = &a_tensors[l];
            let (chi_a, _, chi_b) = a.dim();
            let ycols = y.ncols();
            let amat = a.view().into_shape_with_order((chi_a * s, chi_b)).expect("contiguous");
            let t = amat.dot(&y); // (chi_a*s, ycols)
            // regroup rows (chi_a, s) to matrix (chi_a, s*ycols)
            let tmat = t.into_shape_with_order((chi_a, s * ycols)).expect("contiguous");
            let row_q: Vec<i64> = left_labels[l].clone();
            let col_q: Vec<i64> = (0..s * ycols)
                .map(|cc| y_q[cc % ycols] - self.site_charges[l][cc / ycols])
                .collect();
            let out = svd_truncate_conserving(&tmat, &row_q, &col_q, &policy)?;
            let r = out.lambda.len();
            // Γ[l] = Vt reshaped, right λ divided out
            let mut g = out.vt.into_shape_with_order((r, s, ycols)).expect("contiguous");
            inv_scale_axis2(&mut g, &new_lambdas[l + 1]);
            new_gammas[l] = g;
            new_lambdas[l] = out.lambda.clone();
            new_charges[l] = out.charges.clone();
            // carry U diag(λ) leftward (normalized spectrum)
            let mut next = out.u;
            for (k, lam) in out.lambda.iter().enumerate() {
                next.column_mut(k).mapv_inplace(|z| z * *lam);
            }
            y = next;
            y_q = out.charges;
        }
        // boundary: y is 1x1 with unit modulus; absorb the phase
        let phase = y[[0, 0]];
        if (phase.norm() - 1.0).abs() > 1e-6 {
            return Err(MpsError::InvalidState(format!(
                "canonicalization lost weight: boundary factor {phase}"
            )));
        }
        new_gammas[0].mapv_inplace(|z| z * phase);
        new_lambdas[0] = vec![1.0];
        new_charges[0] = vec![0];

        self.gammas = new_gammas;
        self.lambdas = new_lambdas;
        self.bond_charges = new_charges;
        Ok(norm)
    }
}

fn scale_axis0(t: &mut Array3<C64>, weights: &[f64]) {
    for (alpha, mut slab) in t.outer_iter_mut().enumerate() {
        let w = C64::new(weights[alpha], 0.0);
        slab.mapv_inplace(|z| z * w);
    }
}

fn scale_axis2(t: &mut Array3<C64>, weights: &[f64]) {
    for (beta, mut slab) in t.axis_iter_mut(Axis(2)).enumerate() {
        let w = C64::new(weights[beta], 0.0);
        slab.mapv_inplace(|z| z * w);
    }
}

fn inv_scale_axis0(t: &mut Array3<C64>, weights: &[f64]) {
    for (alpha, mut slab) in t.outer_iter_mut().enumerate() {
        let w = C64::new(1.0 / weights[alpha], 0.0);
        slab.mapv_inplace(|z| z * w);
    }
}

fn inv_scale_axis2(t: &mut Array3<C64>, weights: &[f64]) {
    for (beta, mut slab) in t.axis_iter_mut(Axis(2)).enumerate() {
        let w = C64::new(1.0 / weights[beta], 0.0);
        slab.mapv_inplace(|z| z * w);
    }
}

struct TruncatedSvd {
    /// Renormalized Schmidt values, global order.
    lambda: Vec<f64>,
    charges: Vec<i64>,
    /// Discarded weight of the normalized spectrum.
    eps: f64,
    /// Σσ² over kept values (pre-normalization).
    kept_weight: f64,
    /// Left vectors scattered to the full row space, (rows × r).
    u: Array2<C64>,
    /// Right vectors scattered to the full column space, (r × cols).
    vt: Array2<C64>,
}

fn svd_of(mat: Array2<C64>) -> Result<(Array2<C64>, Array1<f64>, Array2<C64>), MpsError> {
    // gesdd with gesvd fallback
    match mat.clone().svddc_into(JobSvd::Some) {
        Ok((Some(u), s, Some(vt))) => Ok((u, s, vt)),
        _ => match mat.svd_into(true, true) {
            Ok((Some(u), s, Some(vt))) => Ok((u, s, vt)),
            Ok(_) => Err(MpsError::SvdFailure("missing factors".into())),
            Err(e) => Err(MpsError::SvdFailure(e.to_string())),
        },
    }
}

fn svd_truncate_conserving(
    theta: &Array2<C64>,
    row_q: &[i64],
    col_q: &[i64],
    policy: &TruncationPolicy,
) -> Result<TruncatedSvd, MpsError> {
    let (nrows, ncols) = theta.dim();
    let mut groups: BTreeMap<i64, (Vec<usize>, Vec<usize>)> = BTreeMap::new();
    for (r, &q) in row_q.iter().enumerate() {
        groups.entry(q).or_default().0.push(r);
    }
    for (c, &q) in col_q.iter().enumerate() {
        groups.entry(q).or_default().1.push(c);
    }

    struct Block {
        charge: i64,
        rows: Vec<usize>,
        cols: Vec<usize>,
        u: Array2<C64>,
        s: Array1<f64>,
        vt: Array2<C64>,
    }
    let mut blocks = Vec::new();
    let mut total_weight = 0.0;
    for (&q, (rows, cols)) in &groups {
        if rows.is_empty() || cols.is_empty() {
            continue;
        }
        let mut sub = Array2::zeros((rows.len(), cols.len()));
        for (ri, &r) in rows.iter().enumerate() {
            for (ci, &c) in cols.iter().enumerate() {
                sub[[ri, ci]] = theta[[r, c]];
            }
        }
        let (u, s, vt) = svd_of(sub)?;
        total_weight += s.iter().map(|&x| x * x).sum::<f64>();
        blocks.push(Block { charge: q, rows: rows.clone(), cols: cols.clone(), u, s, vt });
    }
    if total_weight <= 0.0 {
        return Err(MpsError::EmptyTruncation);
    }

    // candidate list over all blocks, globally ordered
    let mut cands: Vec<(f64, i64, usize, usize)> = Vec::new();
    for (bi, b) in blocks.iter().enumerate() {
        for (k, &s) in b.s.iter().enumerate() {
            cands.push((s, b.charge, bi, k));
        }
    }
    cands.sort_by(|a, b| {
        b.0.partial_cmp(&a.0)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.1.cmp(&b.1))
            .then(a.3.cmp(&b.3))
    });
    let norm_all = total_weight.sqrt();
    let mut kept = Vec::new();
    let mut kept_weight = 0.0;
    for &(s, q, bi, k) in &cands {
        if kept.len() >= policy.chi_max || s < policy.lambda_floor * norm_all || s <= 0.0 {
            break;
        }
        kept.push((s, q, bi, k));
        kept_weight += s * s;
    }
    if kept.is_empty() {
        return Err(MpsError::EmptyTruncation);
    }
    let eps = ((total_weight - kept_weight) / total_weight).max(0.0);
    let renorm = kept_weight.sqrt();

    let r = kept.len();
    let mut u = Array2::zeros((nrows, r));
    let mut vt = Array2::zeros((r, ncols));
    let mut lambda = Vec::with_capacity(r);
    let mut charges = Vec::with_capacity(r);
    for (t, &(s, q, bi, k)) in kept.iter().enumerate() {
        lambda.push(s / renorm);
        charges.push(q);
        let b = &blocks[bi];
        for (ri, &row) in b.rows.iter().enumerate() {
            u[[row, t]] = b.u[[ri, k]];
        }
        for (ci, &col) in b.cols.iter().enumerate() {
            vt[[t, col]] = b.vt[[k, ci]];
        }
    }
    Ok(TruncatedSvd { lambda, charges, eps, kept_weight, u, vt })
}

fn svd_truncate_plain(
    theta: Array2<C64>,
    row_q: &[i64],
    policy: &TruncationPolicy,
) -> Result<TruncatedSvd, MpsError> {
    let (u, s, vt) = svd_of(theta)?;
    let total_weight: f64 = s.iter().map(|&x| x * x).sum();
    if total_weight <= 0.0 {
        return Err(MpsError::EmptyTruncation);
    }
    let norm_all = total_weight.sqrt();
    let mut r = 0;
    let mut kept_weight = 0.0;
    while r < s.len() && r < policy.chi_max && s[r] >= policy.lambda_floor * norm_all && s[r] > 0.0 {
        kept_weight += s[r] * s[r];
        r += 1;
    }
    if r == 0 {
        return Err(MpsError::EmptyTruncation);
    }
    let eps = ((total_weight - kept_weight) / total_weight).max(0.0);
    let renorm = kept_weight.sqrt();
    let lambda: Vec<f64> = s.iter().take(r).map(|&x| x / renorm).collect();
    // label each kept vector by its dominant charge component
    let mut charges = Vec::with_capacity(r);
    for k in 0..r {
        let mut weights: BTreeMap<i64, f64> = BTreeMap::new();
        for (row, &q) in row_q.iter().enumerate() {
            *weights.entry(q).or_insert(0.0) += u[[row, k]].norm_sqr();
        }
        let label = weights
            .iter()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap_or(std::cmp::Ordering::Equal).then(b.0.cmp(a.0)))
            .map(|(&q, _)| q)
            .unwrap_or(0);
        charges.push(label);
    }
    let u = u.slice(s![.., ..r]).to_owned();
    let vt = vt.slice(s![..r, ..]).to_owned();
    Ok(TruncatedSvd { lambda, charges, eps, kept_weight, u, vt })
}
