//! Imaginary-time ground-state preparation of the source box, checked
//! against dense diagonalization where the sector fits in memory.
//!
//! ```text
//! cargo run --release --example ground_state
//! ```

use sat_tebd::evolve::{box_ground_state, GroundStateSchedule};
use sat_tebd::model::ModelParams;
use sat_tebd::mps::{TruncationPolicy, UpdatePath};
use sat_tebd::oracle::EdProblem;

fn main() -> anyhow::Result<()> {
    let policy = TruncationPolicy { chi_max: 64, lambda_floor: 1e-12 };
    let schedule = GroundStateSchedule { energy_tol: 1e-10, ..Default::default() };

    println!("hard-core atoms in an M-site box (double occupancy projected out):");
    for (m, n) in [(4usize, 2usize), (8, 4), (10, 5)] {
        let params = ModelParams::default();
        let (state, report) =
            box_ground_state(&params, m, n, 2, &policy, UpdatePath::Conserving, &schedule)?;
        let (e_exact, _) = EdProblem::for_box(&params, m, n as i64, 2)?.ground();
        println!(
            "  M = {m:>2}, N = {n}:  E = {:+.9} J   (exact {:+.9}, |dE| = {:.1e})   {} sweeps, max rank {}",
            report.energy,
            e_exact,
            (report.energy - e_exact).abs(),
            report.sweeps,
            state.max_bond_dim(),
        );
    }

    println!();
    println!("soft-core atoms at U_bb = 4 J (up to three per site):");
    for (m, n) in [(4usize, 2usize), (6, 3)] {
        let params = ModelParams { u_bb: 4.0, ..Default::default() };
        let (state, report) =
            box_ground_state(&params, m, n, 4, &policy, UpdatePath::Conserving, &schedule)?;
        let (e_exact, _) = EdProblem::for_box(&params, m, n as i64, 4)?.ground();
        println!(
            "  M = {m:>2}, N = {n}:  E = {:+.9} J   (exact {:+.9}, |dE| = {:.1e})   {} sweeps, max rank {}",
            report.energy,
            e_exact,
            (report.energy - e_exact).abs(),
            report.sweeps,
            state.max_bond_dim(),
        );
    }

    println!();
    println!("projection schedule for M = 6, N = 3 at U_bb = 4 J:");
    let params = ModelParams { u_bb: 4.0, ..Default::default() };
    let (_, report) =
        box_ground_state(&params, 6, 3, 4, &policy, UpdatePath::Conserving, &schedule)?;
    for (stage, energies) in report.stage_energies.iter().enumerate() {
        if let Some(e) = energies.last() {
            println!(
                "  stage {stage} (dtau = {}):  {:>3} sweeps, in-flight energy {e:+.9} J",
                schedule.stage_dtau[stage],
                energies.len(),
            );
        }
    }
    println!(
        "  after re-canonicalization: E = {:+.9} J, converged: {}",
        report.energy, report.converged
    );
    println!();
    println!("in-flight readings can undershoot the true minimum: coarse non-unitary steps");
    println!("leave the state slightly non-canonical. The final figure is a genuine");
    println!("expectation value and sits above the exact energy, as it must.");
    Ok(())
}
