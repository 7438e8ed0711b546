//! Hard-core bosons released from a box carry exactly the free-fermion
//! density flow while the impurity coupling is off: evolve both and
//! compare the atom count in the drain lead.
//!
//! ```text
//! cargo run --release --example tonks_vs_fermions
//! ```

use sat_tebd::evolve::{
    box_ground_state, embed_in_lattice, run, EvolutionConfig, GroundStateSchedule, TimeStep,
    TrotterPlan,
};
use sat_tebd::model::{LatticeGeometry, ModelParams};
use sat_tebd::mps::{TruncationPolicy, UpdatePath};
use sat_tebd::oracle::fermion_current_series;

fn main() -> anyhow::Result<()> {
    let params = ModelParams::default(); // switch off: O = 0
    let geometry = LatticeGeometry::tonks(10, 10);
    let n_atoms = 5;
    let (dt, t_total) = (0.02, 4.0);

    let policy = TruncationPolicy { chi_max: 40, lambda_floor: 1e-12 };
    let schedule = GroundStateSchedule { energy_tol: 1e-10, ..Default::default() };
    let (box_state, report) = box_ground_state(
        &params,
        geometry.left_sites,
        n_atoms,
        geometry.probe_cutoff,
        &policy,
        UpdatePath::Conserving,
        &schedule,
    )?;
    println!(
        "prepared N = {n_atoms} hard-core atoms on {} sites (E = {:+.6} J, {} sweeps)",
        geometry.left_sites, report.energy, report.sweeps
    );

    let mut state = embed_in_lattice(&box_state, &geometry)?;
    let plan = TrotterPlan::lattice(&params, &geometry, TimeStep::Real(dt))?;
    let mut config = EvolutionConfig::for_dt(dt);
    config.steps = (t_total / dt).round() as usize;
    config.chi_max = Some(40);
    let series = run(&mut state, &plan, &geometry, &config, None)?;

    let oracle = fermion_current_series(&params, &geometry, n_atoms, 0.0, &series.times)?;

    println!();
    println!("  t/J      N_R (TEBD)   N_R (fermions)   |diff|");
    let mut max_dev: f64 = 0.0;
    for (i, &t) in series.times.iter().enumerate() {
        let dev = (series.n_right[i] - oracle.n_right[i]).abs();
        max_dev = max_dev.max(dev);
        if (t * 2.0).fract().abs() < 1e-9 {
            println!(
                "  {t:>4.1}    {:>10.6}    {:>10.6}     {dev:.2e}",
                series.n_right[i], oracle.n_right[i]
            );
        }
    }
    println!();
    println!("max |N_R deviation| over {} samples: {max_dev:.2e}", series.len());
    println!("peak discarded weight: {:.2e}", series.peak_discarded());
    Ok(())
}
