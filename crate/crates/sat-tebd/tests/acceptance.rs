//! Acceptance gate: one test per engine-level claim, each printing a single
//! `[criterion N] PASS/FAIL` verdict line (visible with `--nocapture`, and
//! always on failure).
//!
//! Criteria 4, 5 and 6 run full-scale 61-site transport — minutes each in
//! release, far longer unoptimized — so they are `#[ignore]`d by default
//! and meant for release builds:
//!
//! ```text
//! cargo test --release --test acceptance -- --ignored --nocapture
//! ```

use ndarray::prelude::*;
use num_complex::Complex64 as C64;

use sat_tebd::evolve::{
    self, box_ground_state, embed_in_lattice, lattice_energy, run, EvolutionConfig,
    GroundStateSchedule, LayerRef, RunEvent, TimeStep, TrotterPlan,
};
use sat_tebd::model::{self, LatticeGeometry, ModelParams};
use sat_tebd::mps::{TruncationPolicy, UpdatePath, VidalState};
use sat_tebd::observables::{fit_steady_current, TimeSeries};
use sat_tebd::oracle::{
    self, default_wavepacket_geometry, ed_n_right, wavepacket_transmission, EdProblem,
    SectorBasis, WAVEPACKET_SIGMA,
};

fn report(criterion: usize, pass: bool, desc: &str, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    println!("[criterion {criterion:>2}] {verdict} — {desc}: {detail}");
    assert!(pass, "[criterion {criterion}] FAIL — {desc}: {detail}");
}

fn tight_schedule() -> GroundStateSchedule {
    GroundStateSchedule { energy_tol: 1e-10, ..GroundStateSchedule::default() }
}

fn conserving_policy(chi: usize) -> TruncationPolicy {
    TruncationPolicy { chi_max: chi, lambda_floor: 1e-12 }
}

/// Ground state of the left box, embedded into the full lattice.
fn prepared_lattice_state(
    params: &ModelParams,
    geometry: &LatticeGeometry,
    n_atoms: usize,
    chi: usize,
    schedule: &GroundStateSchedule,
) -> VidalState {
    let (box_state, rep) = box_ground_state(
        params,
        geometry.left_sites,
        n_atoms,
        geometry.probe_cutoff,
        &conserving_policy(chi),
        UpdatePath::Conserving,
        schedule,
    )
    .expect("ground-state projection");
    assert!(rep.converged, "ground state did not converge: {rep:?}");
    embed_in_lattice(&box_state, geometry).expect("embedding")
}

fn evolve_series(
    state: &mut VidalState,
    params: &ModelParams,
    geometry: &LatticeGeometry,
    dt: f64,
    t_total: f64,
    chi: Option<usize>,
) -> TimeSeries {
    let plan = TrotterPlan::lattice(params, geometry, TimeStep::Real(dt)).expect("plan");
    let mut config = EvolutionConfig::for_dt(dt);
    config.steps = (t_total / dt).round() as usize;
    config.chi_max = chi;
    run(state, &plan, geometry, &config, None).expect("evolution")
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "series lengths differ");
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

// ---------------------------------------------------------------------------
// 1. hard-core bosons carry exactly the free-fermion current (Ω = 0)
// ---------------------------------------------------------------------------

#[test]
fn criterion_01_jordan_wigner_identity() {
    let params = ModelParams::default();
    let geometry = LatticeGeometry::tonks(10, 10);
    let mut state = prepared_lattice_state(&params, &geometry, 5, 40, &tight_schedule());
    let series = evolve_series(&mut state, &params, &geometry, 0.01, 4.0, Some(40));

    let fermions = oracle::fermion_current_series(&params, &geometry, 5, 0.0, &series.times)
        .expect("fermion oracle");
    let dev = max_abs_diff(&series.n_right, &fermions.n_right);
    report(
        1,
        dev < 1e-3,
        "Tonks TEBD vs free-fermion oracle, 10+1+10, N=5, t ≤ 4/J",
        &format!("max |ΔN_R| = {dev:.3e} (< 1e-3)"),
    );
}

// ---------------------------------------------------------------------------
// 2. the tensor network reproduces a dense state-vector evolution
// ---------------------------------------------------------------------------

#[test]
fn criterion_02_small_system_exactness() {
    let params = ModelParams { u_bb: 4.0, omega: 1.0, ..Default::default() };
    let geometry = LatticeGeometry {
        left_sites: 4,
        right_sites: 2,
        probe_cutoff: 3,
        impurity_probe_cutoff: 3,
    };
    let n_atoms = 2;
    let dt = 0.01;
    let steps = 400;

    let mut state = prepared_lattice_state(&params, &geometry, n_atoms, 64, &tight_schedule());
    let basis = SectorBasis::for_lattice(&geometry, n_atoms as i64).expect("sector basis");

    // project the embedded start state onto the sector basis
    let full0 = state.to_state_vector();
    let dims = geometry.all_dims();
    let mut psi = Array1::<C64>::zeros(basis.len());
    for (i, config) in basis.states().iter().enumerate() {
        let mut flat = 0usize;
        for (l, &occ) in config.iter().enumerate() {
            flat = flat * dims[l] + occ as usize;
        }
        psi[i] = full0[flat];
    }
    let captured: f64 = psi.iter().map(|a| a.norm_sqr()).sum();
    assert!((captured - 1.0).abs() < 1e-10, "state leaks out of the sector: {captured}");
    let psi0 = psi.clone();

    // replay the exact same gate sequence through the dense sector applier
    let plan = TrotterPlan::lattice(&params, &geometry, TimeStep::Real(dt)).expect("plan");
    for _ in 0..steps {
        for layer in plan.layer_refs() {
            match layer {
                LayerRef::Bonds(gates) => {
                    for (l, gate) in gates {
                        psi = basis
                            .apply_two_site(&psi.view(), &gate.matrix().view(), *l)
                            .expect("dense bond gate");
                    }
                }
                LayerRef::Sites(gates) => {
                    for (l, gate) in gates {
                        psi = basis
                            .apply_single_site(&psi.view(), &gate.view(), *l)
                            .expect("dense site gate");
                    }
                }
            }
        }
    }

    // unrestricted-χ TEBD over the same 400 steps
    let mut config = EvolutionConfig::for_dt(dt);
    config.steps = steps;
    let series = run(&mut state, &plan, &geometry, &config, None).expect("evolution");

    let dense_full = basis.embed_dense(&psi.view()).expect("embed");
    let tebd_full = state.to_state_vector();
    let vec_dev = dense_full
        .iter()
        .zip(tebd_full.iter())
        .map(|(a, b)| (a - b).norm())
        .fold(0.0, f64::max);
    let nr_dev = (ed_n_right(&basis, &psi.view(), &geometry)
        - series.n_right.last().unwrap())
    .abs();

    // supplementary: distance to the exact propagator is Trotter-limited
    let ed = EdProblem::for_lattice(&params, &geometry, n_atoms as i64).expect("ED");
    let exact = ed.evolve(&psi0.view(), dt * steps as f64);
    let trotter_nr = (ed_n_right(&basis, &exact.view(), &geometry)
        - series.n_right.last().unwrap())
    .abs();

    report(
        2,
        vec_dev < 1e-8 && nr_dev < 1e-8 && trotter_nr < 1e-3,
        "4+1+2 sites, N=2, U=4J, Ω=J: TEBD vs dense evolution to tJ = 4",
        &format!(
            "state-vector dev {vec_dev:.3e}, N_R dev {nr_dev:.3e} (< 1e-8, same gate \
             sequence); vs exact propagator {trotter_nr:.3e} (Trotter-limited, < 1e-3)"
        ),
    );
}

// ---------------------------------------------------------------------------
// 3. Fano transmission extrema and closed-form agreement
// ---------------------------------------------------------------------------

#[test]
fn criterion_03_fano_extrema() {
    let pi = std::f64::consts::PI;
    let geometry = default_wavepacket_geometry();

    let blocking = ModelParams { omega: 4.0, ..Default::default() };
    let t_block = wavepacket_transmission(pi / 2.0, WAVEPACKET_SIGMA, &blocking, &geometry)
        .expect("blocking run");
    assert!(!t_block.flagged, "blocking wavepacket left the window");

    let open = ModelParams { omega: 1.0, u_qb: 1.0, ..Default::default() };
    let t_open = wavepacket_transmission(pi / 3.0, WAVEPACKET_SIGMA, &open, &geometry)
        .expect("transparency run");
    assert!(!t_open.flagged, "transparency wavepacket left the window");

    // closed-form agreement across a grid away from the sharp antiresonance
    let free = ModelParams::default();
    let weak = ModelParams { omega: 1.0, ..Default::default() };
    let grid: [(&ModelParams, f64); 5] = [
        (&blocking, pi / 2.0),
        (&open, pi / 3.0),
        (&open, 2.0 * pi / 3.0),
        (&weak, 2.0 * pi / 3.0),
        (&free, pi / 2.0),
    ];
    let mut worst = 0.0f64;
    for (params, k0) in grid {
        let wp = wavepacket_transmission(k0, WAVEPACKET_SIGMA, params, &geometry)
            .expect("grid run");
        assert!(!wp.flagged, "grid wavepacket left the window at k0 = {k0}");
        let cf = model::fano_transmission(k0, params);
        worst = worst.max((wp.transmission - cf).abs());
    }

    report(
        3,
        t_block.transmission < 0.01 && t_open.transmission > 0.95 && worst <= 0.02,
        "wavepacket oracle: complete reflection at ε = −Δ, transparency at ε = −Δ − Ω²/U_qb",
        &format!(
            "T(Ω=4J, k₀=π/2) = {:.2e} (< 0.01), T(Ω=U_qb=J, k₀=π/3) = {:.4} (> 0.95), \
             max |T − closed form| = {worst:.3} (≤ 0.02)",
            t_block.transmission, t_open.transmission
        ),
    );
}

// ---------------------------------------------------------------------------
// 4. switching the coupling on suppresses the current (slow, full scale)
// ---------------------------------------------------------------------------

#[test]
#[ignore = "full-scale 61-site runs, minutes in release; cargo test --release -- --ignored"]
fn criterion_04_blocking_trend() {
    let geometry = LatticeGeometry::tonks(30, 30);
    let (box_state, rep) = box_ground_state(
        &ModelParams::default(),
        geometry.left_sites,
        15,
        geometry.probe_cutoff,
        &conserving_policy(50),
        UpdatePath::Conserving,
        &GroundStateSchedule::default(),
    )
    .expect("ground state");
    assert!(rep.converged);

    let mut currents = Vec::new();
    for omega in [0.0, 0.5, 1.0, 2.0] {
        let params = ModelParams { omega, ..Default::default() };
        let mut state = embed_in_lattice(&box_state, &geometry).expect("embed");
        let series = evolve_series(&mut state, &params, &geometry, 0.01, 6.0, Some(50));
        assert!(!series.truncation_dominated, "χ = 50 run aborted at Ω = {omega}");
        let fit = fit_steady_current(&series, None).expect("fit");
        currents.push(fit.i_ss);
    }
    let decreasing = currents.windows(2).all(|w| w[1] < w[0]);
    let suppressed = currents[3] < 0.2 * currents[0];
    report(
        4,
        decreasing && suppressed,
        "Tonks n = 1/2, 30+1+30, χ = 50: I_SS decreasing over Ω/J ∈ {0, 0.5, 1, 2}",
        &format!("I_SS = {currents:.6?} J; I(2J)/I(0) = {:.3}", currents[3] / currents[0]),
    );
}

// ---------------------------------------------------------------------------
// 5. the fitted current is converged in bond dimension (slow, full scale)
// ---------------------------------------------------------------------------

#[test]
#[ignore = "full-scale 61-site runs, minutes in release; cargo test --release -- --ignored"]
fn criterion_05_chi_convergence() {
    let geometry = LatticeGeometry::tonks(30, 30);
    let params = ModelParams { omega: 1.0, ..Default::default() };
    let (box_state, rep) = box_ground_state(
        &ModelParams::default(),
        geometry.left_sites,
        15,
        geometry.probe_cutoff,
        &conserving_policy(50),
        UpdatePath::Conserving,
        &GroundStateSchedule::default(),
    )
    .expect("ground state");
    assert!(rep.converged);

    let mut fitted = Vec::new();
    for chi in [20usize, 40] {
        let mut state = embed_in_lattice(&box_state, &geometry).expect("embed");
        let series = evolve_series(&mut state, &params, &geometry, 0.01, 6.0, Some(chi));
        assert!(!series.truncation_dominated, "χ = {chi} run aborted");
        fitted.push(fit_steady_current(&series, None).expect("fit").i_ss);
    }
    let rel = (fitted[0] - fitted[1]).abs() / fitted[1].abs();
    report(
        5,
        rel < 0.02,
        "Tonks n = 1/2, Ω = J: I_SS at χ = 20 vs χ = 40",
        &format!("I_SS = {:.6e} vs {:.6e} J, relative spread {rel:.4} (< 0.02)", fitted[0], fitted[1]),
    );
}

// ---------------------------------------------------------------------------
// 6. unit filling develops a knee with a truncation signature (slow)
// ---------------------------------------------------------------------------

#[test]
#[ignore = "full-scale 61-site run at χ = 100, minutes in release; cargo test --release -- --ignored"]
fn criterion_06_knee_window() {
    let geometry = LatticeGeometry::tonks(30, 30);
    let params = ModelParams { omega: 1.0, ..Default::default() };
    let mut state =
        prepared_lattice_state(&ModelParams::default(), &geometry, 30, 100, &GroundStateSchedule::default());

    let dt = 0.01;
    let plan = TrotterPlan::lattice(&params, &geometry, TimeStep::Real(dt)).expect("plan");
    let mut config = EvolutionConfig::for_dt(dt);
    config.steps = 1400;
    config.chi_max = Some(100);
    config.eps_abort = 1e-2; // observe the growing truncation instead of aborting
    let series = run(&mut state, &plan, &geometry, &config, None).expect("evolution");

    let t_knee = sat_tebd::observables::detect_knee(&series);
    let knee_ok = t_knee.is_some_and(|t| (8.0..=13.0).contains(&t));
    let eps_near_knee = t_knee
        .map(|tk| {
            series
                .times
                .iter()
                .zip(&series.max_discarded)
                .filter(|(&t, _)| (t - tk).abs() <= 2.0)
                .map(|(_, &e)| e)
                .fold(0.0, f64::max)
        })
        .unwrap_or(0.0);
    report(
        6,
        knee_ok && eps_near_knee >= 1e-7,
        "Tonks n = 1, Ω = J, χ = 100: N_R slope knee inside tJ ∈ [8, 13]",
        &format!("t_knee = {t_knee:?}, max ε_λ within 2/J of the knee = {eps_near_knee:.2e} (≥ 1e-7)"),
    );
}

// ---------------------------------------------------------------------------
// 7. a completely filled band cannot be boosted
// ---------------------------------------------------------------------------

#[test]
fn criterion_07_filled_band_kick_invariance() {
    let pi = std::f64::consts::PI;

    // oracle at N = M = 8
    let geometry = LatticeGeometry::tonks(8, 8);
    let t_grid: Vec<f64> = (0..=40).map(|i| i as f64 * 0.1).collect();
    let params = ModelParams::default();
    let idle = oracle::fermion_current_series(&params, &geometry, 8, 0.0, &t_grid).unwrap();
    let kicked = oracle::fermion_current_series(&params, &geometry, 8, pi / 2.0, &t_grid).unwrap();
    let oracle_dev = max_abs_diff(&idle.n_right, &kicked.n_right);

    // TEBD at N = M = 6 (the filled hard-core box is an exact product state)
    let tebd_geometry = LatticeGeometry::tonks(6, 6);
    let mut a = prepared_lattice_state(
        &params,
        &tebd_geometry,
        6,
        40,
        &GroundStateSchedule::default(),
    );
    let mut b = a.clone();
    evolve::apply_kick(&mut b, &tebd_geometry, pi / 2.0).expect("kick");
    let series_a = evolve_series(&mut a, &params, &tebd_geometry, 0.01, 2.0, Some(40));
    let series_b = evolve_series(&mut b, &params, &tebd_geometry, 0.01, 2.0, Some(40));
    let tebd_dev = max_abs_diff(&series_a.n_right, &series_b.n_right);

    report(
        7,
        oracle_dev < 1e-6 && tebd_dev < 1e-3,
        "filled band: N_R(t) identical for p_k = π/2 and p_k = 0",
        &format!("oracle dev {oracle_dev:.2e} (< 1e-6), TEBD dev {tebd_dev:.2e} (< 1e-3)"),
    );
}

// ---------------------------------------------------------------------------
// 8. the kicked fermion current peaks at p_k = π/2
// ---------------------------------------------------------------------------

#[test]
fn criterion_08_fermion_kick_peak() {
    let pi = std::f64::consts::PI;
    let geometry = LatticeGeometry::tonks(30, 30);
    let params = ModelParams::default();
    let t_grid: Vec<f64> = (0..=60).map(|i| i as f64 * 0.1).collect();

    let mut best = (0usize, f64::NEG_INFINITY);
    let mut table = Vec::new();
    for j in 0..=8 {
        let p_k = j as f64 * pi / 8.0;
        let series =
            oracle::fermion_current_series(&params, &geometry, 6, p_k, &t_grid).unwrap();
        let i_ss = fit_steady_current(&series, None).expect("fit").i_ss;
        table.push(format!("I(p={j}π/8) = {i_ss:.4}"));
        if i_ss > best.1 {
            best = (j, i_ss);
        }
    }
    report(
        8,
        best.0 == 4,
        "fermion oracle, N=6, M=30: I_SS(p_k) maximal at p_k = π/2",
        &format!("argmax at {}π/8; {}", best.0, table.join(", ")),
    );
}

// ---------------------------------------------------------------------------
// 9. conservation suite on a 1000-step zero-truncation run
// ---------------------------------------------------------------------------

#[test]
fn criterion_09_conservation_suite() {
    let geometry = LatticeGeometry::tonks(3, 3);
    let params = ModelParams {
        omega: 0.7,
        delta: 0.2,
        u_qb: 0.3,
        u_bm: 0.1,
        ..Default::default()
    };
    let state0 = prepared_lattice_state(&params, &geometry, 3, 64, &GroundStateSchedule::default());
    // kick so real dynamics (not a near-eigenstate) stress the integrator
    let mut seed = state0;
    evolve::apply_kick(&mut seed, &geometry, std::f64::consts::FRAC_PI_2).expect("kick");

    let run_drift = |dt: f64, steps: usize| -> (f64, f64, f64, f64) {
        let mut state = seed.clone();
        let plan = TrotterPlan::lattice(&params, &geometry, TimeStep::Real(dt)).expect("plan");
        let mut config = EvolutionConfig::for_dt(dt);
        config.steps = steps;
        let e0 = lattice_energy(&state, &params, &geometry).expect("energy");
        let mut e_drift = 0.0f64;
        let mut observer = |event: RunEvent<'_>| {
            let e = lattice_energy(event.state, &params, &geometry).expect("energy");
            e_drift = e_drift.max((e - e0).abs());
        };
        let series = run(&mut state, &plan, &geometry, &config, Some(&mut observer)).unwrap();
        let norm_drift =
            series.norm.iter().map(|&n| (n - 1.0).abs()).fold(0.0, f64::max);
        let charge_drift =
            series.total_charge.iter().map(|&q| (q - 3.0).abs()).fold(0.0, f64::max);
        (e_drift, norm_drift, charge_drift, state.max_charge_violation())
    };

    let (e_coarse, norm_coarse, charge_coarse, viol_coarse) = run_drift(0.02, 1000);
    let (e_fine, norm_fine, charge_fine, viol_fine) = run_drift(0.01, 2000);
    let ratio = e_coarse / e_fine;

    let norm_drift = norm_coarse.max(norm_fine);
    let charge_drift = charge_coarse.max(charge_fine);
    let violation = viol_coarse.max(viol_fine);
    report(
        9,
        norm_drift <= 1e-8
            && charge_drift <= 1e-10
            && violation == 0.0
            && (3.2..=4.8).contains(&ratio),
        "1000-step zero-truncation run: norm, charge, and δt² energy scaling",
        &format!(
            "norm drift {norm_drift:.2e} (≤ 1e-8), charge drift {charge_drift:.2e} (≤ 1e-10), \
             block violations {violation:.1e}, energy-drift ratio {ratio:.2} ∈ [3.2, 4.8] \
             (E drift {e_coarse:.2e} @ δt=0.02 vs {e_fine:.2e} @ δt=0.01)"
        ),
    );
}

// ---------------------------------------------------------------------------
// 10. imaginary-time ground energies match dense diagonalization
// ---------------------------------------------------------------------------

#[test]
fn criterion_10_ground_state_oracle() {
    let params = ModelParams { u_bb: 4.0, ..Default::default() };
    let schedule = tight_schedule();

    // M=2, N=2: closed form (U − √(U² + 16 J²)) / 2
    let (_, rep2) = box_ground_state(
        &params,
        2,
        2,
        3,
        &conserving_policy(16),
        UpdatePath::Conserving,
        &schedule,
    )
    .expect("M=2 ground state");
    let exact2 = (4.0 - (16.0f64 + 16.0).sqrt()) / 2.0;
    let dev2 = (rep2.energy - exact2).abs();

    // M=4, N=2 against the dense box oracle
    let (_, rep4) = box_ground_state(
        &params,
        4,
        2,
        3,
        &conserving_policy(16),
        UpdatePath::Conserving,
        &schedule,
    )
    .expect("M=4 ground state");
    let (exact4, _) = EdProblem::for_box(&params, 4, 2, 3).expect("box ED").ground();
    let dev4 = (rep4.energy - exact4).abs();

    report(
        10,
        dev2 < 1e-6 && dev4 < 1e-6,
        "imaginary-time box ground energies vs dense diagonalization (U = 4J)",
        &format!(
            "M=2: {:.9} vs {exact2:.9} (Δ = {dev2:.1e}); M=4: {:.9} vs {exact4:.9} (Δ = {dev4:.1e})",
            rep2.energy, rep4.energy
        ),
    );
}
