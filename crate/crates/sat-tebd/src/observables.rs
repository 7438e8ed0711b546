//! Derived quantities: sampled time series, atom currents, steady-state
//! fits, knee detection, momentum distributions and occupation profiles.
//!
//! Times are dimensionless `tJ` (ħ = 1, lattice spacing 1); currents are
//! atoms per unit `1/J`. The series container mirrors what the evolution
//! observer samples: the atom count right of the impurity N_R, the state
//! norm, the conserved total charge, the largest discarded truncation
//! weight per sampling interval, and the impurity-site occupations.

use crate::model::{impurity_basis_index, LatticeGeometry};
use crate::mps::{MpsError, VidalState};
use ndarray::prelude::*;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ObservablesError {
    #[error("need at least {need} samples, got {got}")]
    TooFewSamples { need: usize, got: usize },
    #[error("fit window [{0}, {1}] contains fewer than two samples")]
    EmptyWindow(f64, f64),
    #[error("correlation matrix is not Hermitian (max asymmetry {0:.3e})")]
    NotHermitian(f64),
    #[error("sample times must increase strictly (got {0} after {1})")]
    NonMonotonicTime(f64, f64),
    #[error("series channels have inconsistent lengths")]
    Inconsistent,
    #[error(transparent)]
    Mps(#[from] MpsError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One observation row produced by the evolution observer.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub time: f64,
    pub n_right: f64,
    pub norm: f64,
    pub total_charge: f64,
    /// Largest per-gate discarded weight ε_λ since the previous sample.
    pub max_discarded: f64,
    pub molecule_occ: f64,
    pub impurity_occ: f64,
    pub profile: Option<Vec<f64>>,
}

/// Column-oriented observable series against time.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    pub times: Vec<f64>,
    pub n_right: Vec<f64>,
    pub norm: Vec<f64>,
    pub total_charge: Vec<f64>,
    pub max_discarded: Vec<f64>,
    pub molecule_occ: Vec<f64>,
    pub impurity_occ: Vec<f64>,
    /// Density profile snapshots, one per sample, when requested.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub profiles: Option<Vec<Vec<f64>>>,
    /// Set when a run was halted by the truncation-weight abort threshold.
    #[serde(default)]
    pub truncation_dominated: bool,
}

impl TimeSeries {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn push(&mut self, sample: Sample) -> Result<(), ObservablesError> {
        if let Some(&last) = self.times.last() {
            if sample.time <= last {
                return Err(ObservablesError::NonMonotonicTime(sample.time, last));
            }
        }
        match (&mut self.profiles, sample.profile) {
            (None, Some(p)) if self.times.is_empty() => self.profiles = Some(vec![p]),
            (None, None) => {}
            (Some(ps), Some(p)) => ps.push(p),
            _ => return Err(ObservablesError::Inconsistent),
        }
        self.times.push(sample.time);
        self.n_right.push(sample.n_right);
        self.norm.push(sample.norm);
        self.total_charge.push(sample.total_charge);
        self.max_discarded.push(sample.max_discarded);
        self.molecule_occ.push(sample.molecule_occ);
        self.impurity_occ.push(sample.impurity_occ);
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ObservablesError> {
        let n = self.times.len();
        let lens = [
            self.n_right.len(),
            self.norm.len(),
            self.total_charge.len(),
            self.max_discarded.len(),
            self.molecule_occ.len(),
            self.impurity_occ.len(),
        ];
        if lens.iter().any(|&l| l != n) {
            return Err(ObservablesError::Inconsistent);
        }
        if let Some(ps) = &self.profiles {
            if ps.len() != n {
                return Err(ObservablesError::Inconsistent);
            }
        }
        for w in self.times.windows(2) {
            if w[1] <= w[0] {
                return Err(ObservablesError::NonMonotonicTime(w[1], w[0]));
            }
        }
        Ok(())
    }

    /// Largest discarded weight over the whole series.
    pub fn peak_discarded(&self) -> f64 {
        self.max_discarded.iter().cloned().fold(0.0, f64::max)
    }

    /// Appends a later segment (used when stitching a resumed run onto its
    /// checkpointed prefix); times must stay strictly increasing.
    pub fn append(&mut self, tail: &TimeSeries) -> Result<(), ObservablesError> {
        tail.validate()?;
        if let (Some(&last), Some(&first)) = (self.times.last(), tail.times.first()) {
            if first <= last {
                return Err(ObservablesError::NonMonotonicTime(first, last));
            }
        }
        match (&mut self.profiles, &tail.profiles) {
            (None, None) => {}
            (None, Some(p)) if self.times.is_empty() => self.profiles = Some(p.clone()),
            (Some(_), None) if tail.times.is_empty() => {}
            (Some(ps), Some(p)) => ps.extend_from_slice(p),
            _ => return Err(ObservablesError::Inconsistent),
        }
        self.times.extend_from_slice(&tail.times);
        self.n_right.extend_from_slice(&tail.n_right);
        self.norm.extend_from_slice(&tail.norm);
        self.total_charge.extend_from_slice(&tail.total_charge);
        self.max_discarded.extend_from_slice(&tail.max_discarded);
        self.molecule_occ.extend_from_slice(&tail.molecule_occ);
        self.impurity_occ.extend_from_slice(&tail.impurity_occ);
        self.truncation_dominated |= tail.truncation_dominated;
        Ok(())
    }
}

/// Steady-state current fit over a time window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurrentFit {
    /// Fitted slope of N_R (atoms per 1/J).
    pub i_ss: f64,
    pub window: (f64, f64),
    pub residual_rms: f64,
    /// Set when residual RMS exceeds 5% of the fitted rise over the window.
    pub poor_fit: bool,
    pub t_knee: Option<f64>,
    /// Post-knee slope, when a knee exists and leaves room to fit.
    pub i_0: Option<f64>,
}

/// Default knee sensitivity: early/late slope ratio above this triggers.
pub const KNEE_SLOPE_RATIO: f64 = 1.5;

/// I(t) = dN_R/dt by centered differences; one-sided at the endpoints.
pub fn current_series(series: &TimeSeries) -> Result<Vec<f64>, ObservablesError> {
    let n = series.len();
    if n < 3 {
        return Err(ObservablesError::TooFewSamples { need: 3, got: n });
    }
    let t = &series.times;
    let y = &series.n_right;
    let mut out = Vec::with_capacity(n);
    out.push((y[1] - y[0]) / (t[1] - t[0]));
    for i in 1..n - 1 {
        out.push((y[i + 1] - y[i - 1]) / (t[i + 1] - t[i - 1]));
    }
    out.push((y[n - 1] - y[n - 2]) / (t[n - 1] - t[n - 2]));
    Ok(out)
}

fn least_squares_slope(ts: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = ts.len() as f64;
    let mt = ts.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (&t, &y) in ts.iter().zip(ys) {
        sxx += (t - mt) * (t - mt);
        sxy += (t - mt) * (y - my);
    }
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    (slope, my - slope * mt)
}

/// Least-squares slope of N_R over a window.
///
/// With `window = None` the default is `[2/J, min(6/J, t_knee − 1/J)]`,
/// starting after the initial transient and ending clear of any detected
/// knee. The fit is flagged `poor_fit` when the residual RMS exceeds 5%
/// of the fitted rise across the window.
pub fn fit_steady_current(
    series: &TimeSeries,
    window: Option<(f64, f64)>,
) -> Result<CurrentFit, ObservablesError> {
    if series.len() < 3 {
        return Err(ObservablesError::TooFewSamples { need: 3, got: series.len() });
    }
    let t_knee = detect_knee(series);
    let window = match window {
        Some(w) => w,
        None => {
            let t0: f64 = 2.0;
            let mut t1: f64 = 6.0;
            if let Some(tk) = t_knee {
                t1 = t1.min(tk - 1.0);
            }
            if let (Some(&first), Some(&last)) = (series.times.first(), series.times.last()) {
                t1 = t1.min(last);
                (t0.max(first), t1)
            } else {
                (t0, t1)
            }
        }
    };
    let (t0, t1) = window;
    let mut ts = Vec::new();
    let mut ys = Vec::new();
    for (&t, &y) in series.times.iter().zip(&series.n_right) {
        if t >= t0 && t <= t1 {
            ts.push(t);
            ys.push(y);
        }
    }
    if ts.len() < 2 {
        return Err(ObservablesError::EmptyWindow(t0, t1));
    }
    let (slope, intercept) = least_squares_slope(&ts, &ys);
    let mut ss = 0.0;
    for (&t, &y) in ts.iter().zip(&ys) {
        let r = y - (intercept + slope * t);
        ss += r * r;
    }
    let residual_rms = (ss / ts.len() as f64).sqrt();
    let rise = (slope * (t1 - t0)).abs();
    let poor_fit = residual_rms > 0.05 * rise && rise > 0.0 || (rise == 0.0 && residual_rms > 1e-12);

    let i_0 = t_knee.and_then(|tk| {
        let mut ts = Vec::new();
        let mut ys = Vec::new();
        for (&t, &y) in series.times.iter().zip(&series.n_right) {
            if t >= tk + 1.0 {
                ts.push(t);
                ys.push(y);
            }
        }
        (ts.len() >= 2).then(|| least_squares_slope(&ts, &ys).0)
    });

    Ok(CurrentFit { i_ss: slope, window, residual_rms, poor_fit, t_knee, i_0 })
}

/// Knee (slope-change) time of N_R, if any, with the default sensitivity.
pub fn detect_knee(series: &TimeSeries) -> Option<f64> {
    detect_knee_with(series, KNEE_SLOPE_RATIO)
}

/// Two-segment continuous piecewise-linear least squares over candidate
/// breakpoints on the sample grid. Returns the breakpoint minimizing total
/// residual when the early/late slope ratio exceeds `ratio_threshold`.
pub fn detect_knee_with(series: &TimeSeries, ratio_threshold: f64) -> Option<f64> {
    let n = series.len();
    if n < 20 {
        return None;
    }
    let t = &series.times;
    let y = &series.n_right;
    let mut best: Option<(f64, f64, f64, f64)> = None; // (residual, tau, s1, s2)
    for k in 3..n - 3 {
        let tau = t[k];
        // model y = c + s1 (t - tau) [t <= tau] + s2 (t - tau) [t > tau]
        let mut ata = [[0.0f64; 3]; 3];
        let mut atb = [0.0f64; 3];
        for i in 0..n {
            let dt = t[i] - tau;
            let row = if t[i] <= tau { [1.0, dt, 0.0] } else { [1.0, 0.0, dt] };
            for a in 0..3 {
                for b in 0..3 {
                    ata[a][b] += row[a] * row[b];
                }
                atb[a] += row[a] * y[i];
            }
        }
        let sol = solve3(&ata, &atb)?;
        let (c, s1, s2) = (sol[0], sol[1], sol[2]);
        let mut ss = 0.0;
        for i in 0..n {
            let dt = t[i] - tau;
            let pred = if t[i] <= tau { c + s1 * dt } else { c + s2 * dt };
            let r = y[i] - pred;
            ss += r * r;
        }
        if best.map_or(true, |(b, _, _, _)| ss < b) {
            best = Some((ss, tau, s1, s2));
        }
    }
    let (_, tau, s1, s2) = best?;
    if s1 <= 0.0 {
        return None;
    }
    let triggered = if s2 <= 0.0 { true } else { s1 / s2 > ratio_threshold };
    triggered.then_some(tau)
}

fn solve3(a: &[[f64; 3]; 3], b: &[f64; 3]) -> Option<[f64; 3]> {
    let det = |m: &[[f64; 3]; 3]| {
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    };
    let d = det(a);
    if d.abs() < 1e-300 {
        return None;
    }
    let mut out = [0.0; 3];
    for col in 0..3 {
        let mut m = *a;
        for row in 0..3 {
            m[row][col] = b[row];
        }
        out[col] = det(&m) / d;
    }
    Some(out)
}

/// Quasimomentum distribution n(k) = (1/M) Σ_ij e^{−ik(i−j)} C_ij on the
/// discrete grid k_m = 2πm/M, m = 0..M−1.
pub fn momentum_distribution(
    corr: &ArrayView2<C64>,
) -> Result<(Vec<f64>, Vec<f64>), ObservablesError> {
    let (m, m2) = corr.dim();
    if m != m2 {
        return Err(ObservablesError::Inconsistent);
    }
    let scale = corr.iter().map(|z| z.norm()).fold(0.0, f64::max).max(1.0);
    let mut asym = 0.0f64;
    for i in 0..m {
        for j in 0..m {
            asym = asym.max((corr[[i, j]] - corr[[j, i]].conj()).norm());
        }
    }
    if asym > 1e-10 * scale {
        return Err(ObservablesError::NotHermitian(asym));
    }
    let mut ks = Vec::with_capacity(m);
    let mut ns = Vec::with_capacity(m);
    for mm in 0..m {
        let k = 2.0 * std::f64::consts::PI * mm as f64 / m as f64;
        // C_ij = ⟨a_i† a_j⟩ pairs ψ_i* with ψ_j, so the plane-wave test
        // vector carries e^{−ikj}; a state boosted by +p then lands at k = p
        let v: Vec<C64> = (0..m).map(|j| C64::from_polar(1.0, -k * j as f64)).collect();
        let mut acc = C64::new(0.0, 0.0);
        for i in 0..m {
            for j in 0..m {
                acc += v[i].conj() * corr[[i, j]] * v[j];
            }
        }
        ks.push(k);
        ns.push(acc.re / m as f64);
    }
    Ok((ks, ns))
}

/// Impurity occupations and probe density profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Occupations {
    /// ⟨m†m⟩ molecule probability.
    pub molecule: f64,
    /// ⟨n_b(0)⟩ probe occupation of the impurity site.
    pub impurity_probe: f64,
    /// Per-site probe occupation (impurity entry excludes the molecule).
    pub profile: Vec<f64>,
}

fn probe_diag(geometry: &LatticeGeometry, site: usize) -> Vec<f64> {
    let dim = geometry.site_dim(site);
    if geometry.is_impurity(site) {
        let cutoff = geometry.impurity_probe_cutoff;
        (0..dim).map(|i| (i % cutoff) as f64).collect()
    } else {
        (0..dim).map(|i| i as f64).collect()
    }
}

pub fn occupations(
    state: &VidalState,
    geometry: &LatticeGeometry,
) -> Result<Occupations, ObservablesError> {
    let m = geometry.total_sites();
    let mut profile = Vec::with_capacity(m);
    for site in 0..m {
        profile.push(state.expect_site_diag(site, &probe_diag(geometry, site))?);
    }
    let cutoff = geometry.impurity_probe_cutoff;
    let mol_diag: Vec<f64> = (0..2 * cutoff)
        .map(|i| if i >= impurity_basis_index(0, true, cutoff) { 1.0 } else { 0.0 })
        .collect();
    let molecule = state.expect_site_diag(geometry.impurity_site(), &mol_diag)?;
    let impurity_probe = profile[geometry.impurity_site()];
    Ok(Occupations { molecule, impurity_probe, profile })
}

/// Probe-atom count right of the impurity.
pub fn n_right(state: &VidalState, geometry: &LatticeGeometry) -> Result<f64, ObservablesError> {
    let mut total = 0.0;
    for site in geometry.impurity_site() + 1..geometry.total_sites() {
        total += state.expect_site_diag(site, &probe_diag(geometry, site))?;
    }
    Ok(total)
}

/// Writes the series in the standard CSV schema
/// `t,N_R,I,norm,charge,eps_lambda,mol_occ,imp_occ` at 12 significant
/// digits. An empty series produces a header-only file.
pub fn write_series_csv<W: std::io::Write>(
    series: &TimeSeries,
    mut w: W,
) -> Result<(), ObservablesError> {
    series.validate()?;
    writeln!(w, "t,N_R,I,norm,charge,eps_lambda,mol_occ,imp_occ")?;
    let n = series.len();
    let current: Vec<f64> = if n >= 3 {
        current_series(series).expect("validated length")
    } else if n == 2 {
        let s = (series.n_right[1] - series.n_right[0]) / (series.times[1] - series.times[0]);
        vec![s; 2]
    } else {
        vec![0.0; n]
    };
    for i in 0..n {
        writeln!(
            w,
            "{:.11e},{:.11e},{:.11e},{:.11e},{:.11e},{:.11e},{:.11e},{:.11e}",
            series.times[i],
            series.n_right[i],
            current[i],
            series.norm[i],
            series.total_charge[i],
            series.max_discarded[i],
            series.molecule_occ[i],
            series.impurity_occ[i],
        )?;
    }
    Ok(())
}
