//! Dense-sector cross-check on a lattice small enough to diagonalize:
//! evolve the same initial state with TEBD and with the exact propagator,
//! including every impurity interaction, and compare observables.
//!
//! ```text
//! cargo run --release --example exact_crosscheck
//! ```

use sat_tebd::evolve::{
    box_ground_state, embed_in_lattice, run, EvolutionConfig, GroundStateSchedule, TimeStep,
    TrotterPlan,
};
use sat_tebd::model::{LatticeGeometry, ModelParams};
use sat_tebd::mps::{TruncationPolicy, UpdatePath};
use sat_tebd::oracle::{ed_n_right, EdProblem};

fn main() -> anyhow::Result<()> {
    // interacting everywhere: soft-core atoms, on-site impurity repulsion,
    // probe-molecule repulsion, detuned molecule
    let params = ModelParams {
        u_bb: 4.0,
        omega: 1.0,
        delta: 0.5,
        u_qb: 0.8,
        u_bm: 0.3,
        ..Default::default()
    };
    let geometry = LatticeGeometry { left_sites: 3, right_sites: 2, probe_cutoff: 3, impurity_probe_cutoff: 3 };
    let n_atoms = 2usize;
    let (dt, t_total) = (0.01f64, 3.0f64);

    let policy = TruncationPolicy { chi_max: 64, lambda_floor: 1e-14 };
    let schedule = GroundStateSchedule { energy_tol: 1e-12, ..Default::default() };
    let (box_state, _) = box_ground_state(
        &params,
        geometry.left_sites,
        n_atoms,
        geometry.probe_cutoff,
        &policy,
        UpdatePath::Conserving,
        &schedule,
    )?;
    let mut state = embed_in_lattice(&box_state, &geometry)?;

    // dense reference in the fixed-charge sector
    let problem = EdProblem::for_lattice(&params, &geometry, n_atoms as i64)?;
    let basis = problem.basis();
    let full = state.to_state_vector();
    let mut psi = ndarray::Array1::zeros(basis.len());
    for (idx, occ) in basis.states().iter().enumerate() {
        let mut flat = 0usize;
        for (site, &o) in occ.iter().enumerate() {
            flat = flat * geometry.site_dim(site) + o as usize;
        }
        psi[idx] = full[flat];
    }

    println!(
        "{}-site lattice with every interaction on, sector dimension {}",
        geometry.total_sites(),
        basis.len()
    );
    println!();
    println!("  t/J     N_R (TEBD)     N_R (exact)    |diff|");
    let steps = (t_total / dt).round() as usize;
    let plan = TrotterPlan::lattice(&params, &geometry, TimeStep::Real(dt))?;
    let mut config = EvolutionConfig::for_dt(dt);
    config.steps = steps;
    config.chi_max = Some(64);
    let series = run(&mut state, &plan, &geometry, &config, None)?;

    let mut max_dev: f64 = 0.0;
    for (i, &t) in series.times.iter().enumerate() {
        let phi = problem.evolve(&psi.view(), t);
        let exact = ed_n_right(basis, &phi.view(), &geometry);
        let dev = (series.n_right[i] - exact).abs();
        max_dev = max_dev.max(dev);
        if (t * 2.0).fract().abs() < 1e-9 {
            println!("  {t:>4.1}   {:>11.8}    {:>11.8}    {dev:.2e}", series.n_right[i], exact);
        }
    }
    println!();
    println!("max |N_R deviation| = {max_dev:.2e} at dt = {dt} (second-order step)");
    println!("halving dt cuts the deviation by ~4x; the TEBD state itself is untruncated here.");
    Ok(())
}
