//! Physical model: couplings, lattice geometry, the local Hilbert-space
//! encoding (including the enlarged impurity site), analytic single-particle
//! formulas and Hamiltonian blocks.
//!
//! The probe atoms hop on a 1D chain with an impurity fixed at grid index 0.
//! On the impurity site a probe atom and the impurity atom can be converted
//! into a molecule, so the local basis there is a pair `(n_b, c)` where `n_b`
//! is the probe occupation and `c` marks whether the impurity atom or the
//! molecule is present. Particle number is conserved when a molecule counts
//! as one probe atom; every Hamiltonian block built here is block-diagonal in
//! that charge.
//!
//! Units: ħ = 1, lattice spacing 1; energies in units of the tunneling `J`
//! and times in 1/J.

use ndarray::prelude::*;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model parameters: {0}")]
    InvalidParams(String),
    #[error("invalid lattice geometry: {0}")]
    InvalidGeometry(String),
    #[error("bond index {bond} out of range (lattice has {bonds} bonds)")]
    BondOutOfRange { bond: usize, bonds: usize },
    #[error("energy {eps} is within {tol} of the dressed-state pole at {pole}")]
    Singularity { eps: f64, pole: f64, tol: f64 },
}

/// Physical couplings of the chain + impurity system.
///
/// `j` is the global energy scale; the default experimental regime has
/// `delta = u_qb = u_bm = 0` so the impurity acts as a resonant mirror.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    /// Nearest-neighbour tunneling energy J (> 0).
    pub j: f64,
    /// On-site boson interaction U_bb.
    #[serde(default)]
    pub u_bb: f64,
    /// Atom-molecule conversion Rabi frequency Ω on the impurity site.
    #[serde(default)]
    pub omega: f64,
    /// Raman detuning Δ of the molecular state.
    #[serde(default)]
    pub delta: f64,
    /// Background probe-impurity interaction U_qb.
    #[serde(default)]
    pub u_qb: f64,
    /// Background probe-molecule interaction U_bm.
    #[serde(default)]
    pub u_bm: f64,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self { j: 1.0, u_bb: 0.0, omega: 0.0, delta: 0.0, u_qb: 0.0, u_bm: 0.0 }
    }
}

impl ModelParams {
    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.j > 0.0) {
            return Err(ModelError::InvalidParams(format!("j must be > 0, got {}", self.j)));
        }
        for (name, v) in [
            ("j", self.j),
            ("u_bb", self.u_bb),
            ("omega", self.omega),
            ("delta", self.delta),
            ("u_qb", self.u_qb),
            ("u_bm", self.u_bm),
        ] {
            if !v.is_finite() {
                return Err(ModelError::InvalidParams(format!("{name} is not finite ({v})")));
            }
        }
        Ok(())
    }
}

/// Chain layout: `left_sites` at grid indices −M_left..−1, the impurity at 0,
/// `right_sites` at 1..M_right.
///
/// `probe_cutoff` is the ordinary-site local dimension S (max occupation + 1);
/// the impurity site dimension is `2 * impurity_probe_cutoff` because each
/// probe occupation is paired with an atom-or-molecule flag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeGeometry {
    pub left_sites: usize,
    pub right_sites: usize,
    pub probe_cutoff: usize,
    pub impurity_probe_cutoff: usize,
}

impl LatticeGeometry {
    /// Hard-core (Tonks) geometry: S = 2 away from the impurity, S_0 = 4.
    pub fn tonks(left_sites: usize, right_sites: usize) -> Self {
        Self { left_sites, right_sites, probe_cutoff: 2, impurity_probe_cutoff: 2 }
    }

    /// Soft-core geometry for finite U/J: S = 6 away from the impurity, S_0 = 12.
    pub fn soft_core(left_sites: usize, right_sites: usize) -> Self {
        Self { left_sites, right_sites, probe_cutoff: 6, impurity_probe_cutoff: 6 }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.probe_cutoff < 2 || self.impurity_probe_cutoff < 1 {
            return Err(ModelError::InvalidGeometry(format!(
                "cutoffs too small: probe {}, impurity {}",
                self.probe_cutoff, self.impurity_probe_cutoff
            )));
        }
        if self.left_sites == 0 {
            return Err(ModelError::InvalidGeometry("need at least one site left of the impurity".into()));
        }
        Ok(())
    }

    pub fn total_sites(&self) -> usize {
        self.left_sites + 1 + self.right_sites
    }

    pub fn bonds(&self) -> usize {
        self.total_sites() - 1
    }

    /// Internal index of the impurity site.
    pub fn impurity_site(&self) -> usize {
        self.left_sites
    }

    /// Grid index as in the physical layout: impurity at 0, left sites negative.
    pub fn grid_index(&self, site: usize) -> i64 {
        site as i64 - self.left_sites as i64
    }

    pub fn is_impurity(&self, site: usize) -> bool {
        site == self.impurity_site()
    }

    /// Local dimension S_l.
    pub fn site_dim(&self, site: usize) -> usize {
        if self.is_impurity(site) { 2 * self.impurity_probe_cutoff } else { self.probe_cutoff }
    }

    /// Conserved charge carried by each local basis state (molecule = +1).
    pub fn site_charges(&self, site: usize) -> Vec<i64> {
        if self.is_impurity(site) {
            impurity_charges(self.impurity_probe_cutoff)
        } else {
            (0..self.probe_cutoff as i64).collect()
        }
    }

    pub fn all_dims(&self) -> Vec<usize> {
        (0..self.total_sites()).map(|l| self.site_dim(l)).collect()
    }

    pub fn all_charges(&self) -> Vec<Vec<i64>> {
        (0..self.total_sites()).map(|l| self.site_charges(l)).collect()
    }
}

/// Composite impurity basis: index `c * cutoff + n_b` with `c = 0` for
/// impurity-atom-present and `c = 1` for molecule-present.
pub fn impurity_basis_index(n_b: usize, molecule: bool, cutoff: usize) -> usize {
    (molecule as usize) * cutoff + n_b
}

fn impurity_charges(cutoff: usize) -> Vec<i64> {
    let mut charges = Vec::with_capacity(2 * cutoff);
    charges.extend(0..cutoff as i64);
    charges.extend((0..cutoff as i64).map(|n| n + 1));
    charges
}

/// Lowest-band dispersion ε(k) = −2J cos k for quasimomentum k ∈ (−π, π].
pub fn dispersion(k: f64, params: &ModelParams) -> f64 {
    -2.0 * params.j * k.cos()
}

/// Energies of the two dressed states on the impurity site,
/// U_qb/2 ± sqrt(U_qb²/4 + Ω²). Returned as (ε_plus, ε_minus).
pub fn dressed_energies(params: &ModelParams) -> (f64, f64) {
    let half = 0.5 * params.u_qb;
    let root = (half * half + params.omega * params.omega).sqrt();
    (half + root, half - root)
}

/// Tolerance for pole detection in [`effective_tunneling`], in units of J.
pub const POLE_TOL: f64 = 1e-9;

/// Effective tunneling amplitude past the resonant impurity for a probe of
/// energy `eps` (U_qb = 0 regime): −J²/(eps + Ω) − J²/(eps − Ω).
pub fn effective_tunneling(eps: f64, params: &ModelParams) -> Result<f64, ModelError> {
    let j2 = params.j * params.j;
    let tol = POLE_TOL * params.j;
    for pole in [-params.omega, params.omega] {
        if (eps - pole).abs() < tol {
            return Err(ModelError::Singularity { eps, pole, tol });
        }
    }
    Ok(-j2 / (eps + params.omega) - j2 / (eps - params.omega))
}

/// Single-particle transmission probability past the impurity for incident
/// quasimomentum k ∈ (0, π).
///
/// The molecule level is eliminated into an energy-dependent scatterer
/// V_eff(ε) = U_qb + Ω²/(ε + Δ) sitting on site 0, giving the Fano profile
/// T = v_k²/(v_k² + V_eff²) with v_k = 2J sin k. For Ω ≠ 0 the scatterer
/// diverges at ε = −Δ and T = 0 exactly; at Ω = 0 the molecule decouples
/// and only the static potential U_qb remains.
pub fn fano_transmission(k: f64, params: &ModelParams) -> f64 {
    let eps = dispersion(k, params);
    let v_k = 2.0 * params.j * k.sin();
    let v_eff = if params.omega == 0.0 {
        params.u_qb
    } else {
        let denom = eps + params.delta;
        if denom == 0.0 {
            return 0.0;
        }
        let v = params.u_qb + params.omega * params.omega / denom;
        if !v.is_finite() {
            return 0.0;
        }
        v
    };
    let v2 = v_k * v_k;
    v2 / (v2 + v_eff * v_eff)
}

/// Annihilation operator on an ordinary site of dimension `dim`:
/// ⟨n−1|b|n⟩ = √n.
pub fn annihilator(dim: usize) -> Array2<f64> {
    let mut b = Array2::zeros((dim, dim));
    for n in 1..dim {
        b[[n - 1, n]] = (n as f64).sqrt();
    }
    b
}

/// Probe annihilation operator on the impurity site: acts on the occupation
/// part of the composite index, leaving the atom/molecule flag unchanged.
pub fn impurity_annihilator(cutoff: usize) -> Array2<f64> {
    let dim = 2 * cutoff;
    let mut b = Array2::zeros((dim, dim));
    for c in [false, true] {
        for n in 1..cutoff {
            let from = impurity_basis_index(n, c, cutoff);
            let to = impurity_basis_index(n - 1, c, cutoff);
            b[[to, from]] = (n as f64).sqrt();
        }
    }
    b
}

/// Probe-number operator for any site of the lattice.
pub fn number_op(geometry: &LatticeGeometry, site: usize) -> Array2<f64> {
    let dim = geometry.site_dim(site);
    let mut n = Array2::zeros((dim, dim));
    if geometry.is_impurity(site) {
        let cutoff = geometry.impurity_probe_cutoff;
        for c in [false, true] {
            for nb in 0..cutoff {
                let i = impurity_basis_index(nb, c, cutoff);
                n[[i, i]] = nb as f64;
            }
        }
    } else {
        for nb in 0..dim {
            n[[nb, nb]] = nb as f64;
        }
    }
    n
}

/// Molecule-number operator m†m on the impurity site.
pub fn molecule_number_op(cutoff: usize) -> Array2<f64> {
    let dim = 2 * cutoff;
    let mut m = Array2::zeros((dim, dim));
    for nb in 0..cutoff {
        let i = impurity_basis_index(nb, true, cutoff);
        m[[i, i]] = 1.0;
    }
    m
}

/// Row-major pair index into the two-site product basis.
pub fn pair_index(i: usize, j: usize, dim_right: usize) -> usize {
    i * dim_right + j
}

fn kron(a: &Array2<f64>, b: &Array2<f64>) -> Array2<f64> {
    let (ra, ca) = a.dim();
    let (rb, cb) = b.dim();
    let mut out = Array2::zeros((ra * rb, ca * cb));
    for ia in 0..ra {
        for ja in 0..ca {
            let v = a[[ia, ja]];
            if v == 0.0 {
                continue;
            }
            for ib in 0..rb {
                for jb in 0..cb {
                    out[[ia * rb + ib, ja * cb + jb]] = v * b[[ib, jb]];
                }
            }
        }
    }
    out
}

/// Hopping pair Hamiltonian −J(b_L† b_R + h.c.) for arbitrary annihilation
/// operators on the two sites, in the row-major pair basis.
pub fn hopping_pair_hamiltonian(j: f64, b_left: &Array2<f64>, b_right: &Array2<f64>) -> Array2<f64> {
    let hop = kron(&b_left.t().to_owned(), b_right);
    -j * (&hop + &hop.t())
}

/// Hopping Hamiltonian −J(b_l† b_{l+1} + h.c.) on the pair space of the bond
/// whose left site is `bond`. Hopping on or off the impurity site acts only
/// on the occupation part of the composite index. Single-site terms are kept
/// out of bond blocks entirely; they live in a separate gate layer.
pub fn bond_hamiltonian(
    params: &ModelParams,
    geometry: &LatticeGeometry,
    bond: usize,
) -> Result<Array2<f64>, ModelError> {
    if bond >= geometry.bonds() {
        return Err(ModelError::BondOutOfRange { bond, bonds: geometry.bonds() });
    }
    let b_left = site_annihilator(geometry, bond);
    let b_right = site_annihilator(geometry, bond + 1);
    Ok(hopping_pair_hamiltonian(params.j, &b_left, &b_right))
}

pub(crate) fn site_annihilator(geometry: &LatticeGeometry, site: usize) -> Array2<f64> {
    if geometry.is_impurity(site) {
        impurity_annihilator(geometry.impurity_probe_cutoff)
    } else {
        annihilator(geometry.site_dim(site))
    }
}

/// Full single-site Hamiltonian of the impurity site:
/// Ω(m†qb₀ + h.c.) − Δ m†m + U_qb n_b (atom block) + U_bm n_b (molecule
/// block) + U_bb n_b(n_b−1)/2.
pub fn impurity_site_hamiltonian(params: &ModelParams, cutoff: usize) -> Array2<f64> {
    let dim = 2 * cutoff;
    let mut h = Array2::zeros((dim, dim));
    for nb in 0..cutoff {
        let atom = impurity_basis_index(nb, false, cutoff);
        let mol = impurity_basis_index(nb, true, cutoff);
        let n = nb as f64;
        h[[atom, atom]] += params.u_qb * n + 0.5 * params.u_bb * n * (n - 1.0);
        h[[mol, mol]] += -params.delta + params.u_bm * n + 0.5 * params.u_bb * n * (n - 1.0);
        // conversion (n_b, atom) <-> (n_b - 1, molecule)
        if nb >= 1 {
            let target = impurity_basis_index(nb - 1, true, cutoff);
            h[[target, atom]] += params.omega * n.sqrt();
            h[[atom, target]] += params.omega * n.sqrt();
        }
    }
    h
}

/// Single-site interaction U_bb n(n−1)/2 on an ordinary site.
pub fn ordinary_site_hamiltonian(params: &ModelParams, dim: usize) -> Array2<f64> {
    let mut h = Array2::zeros((dim, dim));
    for n in 0..dim {
        let x = n as f64;
        h[[n, n]] = 0.5 * params.u_bb * x * (x - 1.0);
    }
    h
}

/// Single-site Hamiltonian for any site of the lattice.
pub fn site_hamiltonian(params: &ModelParams, geometry: &LatticeGeometry, site: usize) -> Array2<f64> {
    if geometry.is_impurity(site) {
        impurity_site_hamiltonian(params, geometry.impurity_probe_cutoff)
    } else {
        ordinary_site_hamiltonian(params, geometry.site_dim(site))
    }
}

/// Checks that `op` only connects basis pairs of equal total charge.
pub fn commutes_with_charge(op: &ArrayView2<f64>, row_charges: &[i64], col_charges: &[i64], tol: f64) -> bool {
    for ((r, c), &v) in op.indexed_iter() {
        if v.abs() > tol && row_charges[r] != col_charges[c] {
            return false;
        }
    }
    true
}

/// Charge labels of the two-site product basis, row-major.
pub fn pair_charges(left: &[i64], right: &[i64]) -> Vec<i64> {
    let mut out = Vec::with_capacity(left.len() * right.len());
    for &ql in left {
        for &qr in right {
            out.push(ql + qr);
        }
    }
    out
}
