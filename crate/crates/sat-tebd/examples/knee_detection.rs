//! Truncation diagnostics: a rank-starved run develops a spurious late-time
//! slope change (a "knee") in the drain population. The discarded-weight
//! record localizes it, and the abort threshold turns it into a hard stop.
//!
//! ```text
//! cargo run --release --example knee_detection
//! ```

use sat_tebd::evolve::{
    box_ground_state, embed_in_lattice, run, EvolutionConfig, GroundStateSchedule, TimeStep,
    TrotterPlan,
};
use sat_tebd::model::{LatticeGeometry, ModelParams};
use sat_tebd::mps::{TruncationPolicy, UpdatePath};
use sat_tebd::observables::fit_steady_current;

fn main() -> anyhow::Result<()> {
    let params = ModelParams { omega: 1.0, ..Default::default() };
    let geometry = LatticeGeometry::tonks(10, 10);
    let n_atoms = 10; // unit filling: entanglement grows fast after release
    let (dt, t_total) = (0.02, 10.0);

    let policy = TruncationPolicy { chi_max: 64, lambda_floor: 1e-12 };
    let schedule = GroundStateSchedule { energy_tol: 1e-10, ..Default::default() };
    let (box_state, _) = box_ground_state(
        &params,
        geometry.left_sites,
        n_atoms,
        geometry.probe_cutoff,
        &policy,
        UpdatePath::Conserving,
        &schedule,
    )?;

    println!("unit-filled 10-site box, O = J, t up to {t_total}/J");
    println!();

    for (label, chi, eps_abort) in [
        ("roomy   (chi = 64, default abort)", 64usize, 1e-4),
        ("starved (chi = 8,  abort disabled)", 8, 0.5),
        ("starved (chi = 8,  abort at 2e-5)", 8, 2e-5),
    ] {
        let mut state = embed_in_lattice(&box_state, &geometry)?;
        let plan = TrotterPlan::lattice(&params, &geometry, TimeStep::Real(dt))?;
        let mut config = EvolutionConfig::for_dt(dt);
        config.steps = (t_total / dt).round() as usize;
        config.chi_max = Some(chi);
        config.eps_abort = eps_abort;
        let series = run(&mut state, &plan, &geometry, &config, None)?;

        let t_last = series.times.last().copied().unwrap_or(0.0);
        let fit = fit_steady_current(&series, None).ok();
        let knee = fit.as_ref().and_then(|f| f.t_knee);
        println!("{label}:");
        println!(
            "  ran to t = {t_last:.1}/J, peak eps_lambda = {:.2e}, truncation-dominated: {}",
            series.peak_discarded(),
            series.truncation_dominated,
        );
        match knee {
            Some(tk) => println!("  knee detected at t = {tk:.1}/J — tail slope is not physical"),
            None if series.truncation_dominated => {
                println!("  no knee — the run stopped before the bend could form")
            }
            None => println!("  no knee: the fitted current window is trustworthy"),
        }
        if let Some(f) = &fit {
            println!(
                "  I fit: {:.5} J over t in ({:.1}, {:.1}){}",
                f.i_ss,
                f.window.0,
                f.window.1,
                if f.poor_fit { " (poor fit)" } else { "" },
            );
        }
        println!();
    }

    println!("reading: identical physics, three verdicts. The roomy run is converged and");
    println!("keeps a straight drain-filling slope; the starved run silently bends once the");
    println!("rank cap bites (the knee); the same starved run under a tightened per-step");
    println!("abort stops early and flags itself truncation-dominated. On production");
    println!("lattices the default threshold (1e-4) plays that role.");
    Ok(())
}
