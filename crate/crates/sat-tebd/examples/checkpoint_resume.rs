//! Bit-identical restart: run a transport simulation to completion, then
//! replay the same run from a mid-flight checkpoint and compare artifacts
//! byte for byte.
//!
//! ```text
//! cargo run --release --example checkpoint_resume
//! ```

use sat_tebd::cli::{cmd_evolve, cmd_resume, RunConfig};
use sha2::{Digest, Sha256};

fn short_hash(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    format!("{:x}", hasher.finalize())[..16].to_string()
}

fn main() -> anyhow::Result<()> {
    let root = tempfile::tempdir()?;

    // one uninterrupted run as the reference
    let mut reference = RunConfig::smoke(4, root.path().join("reference"));
    reference.chi = vec![24];
    cmd_evolve(&reference, None)?;
    let ref_csv = std::fs::read(reference.output_dir.join("evolve_chi24.csv"))?;
    println!(
        "reference run:   {} samples end to end, series sha256 {}",
        ref_csv.split(|&b| b == b'\n').count() - 2,
        short_hash(&ref_csv),
    );

    // the same run with a checkpoint every 10 samples
    let mut checked = reference.clone();
    checked.output_dir = root.path().join("checkpointed");
    checked.checkpoint_every = Some(10);
    cmd_evolve(&checked, None)?;
    let ckpt_path = checked.output_dir.join("evolve_chi24.ckpt");
    println!("checkpointed run: wrote {}", ckpt_path.file_name().unwrap().to_string_lossy());

    // pretend the process died after the checkpoint: resume in a fresh dir
    let mut resumed = reference.clone();
    resumed.output_dir = root.path().join("resumed");
    cmd_resume(&resumed, &ckpt_path)?;
    let res_csv = std::fs::read(resumed.output_dir.join("evolve_chi24.csv"))?;

    println!(
        "resumed run:     series sha256 {} — {}",
        short_hash(&res_csv),
        if res_csv == ref_csv { "bit-identical to the reference" } else { "MISMATCH" },
    );

    // a checkpoint refuses to seed a run with different physics
    let mut foreign = resumed.clone();
    foreign.output_dir = root.path().join("foreign");
    foreign.params.omega = 2.0;
    match cmd_resume(&foreign, &ckpt_path) {
        Err(e) => println!("foreign config:  rejected as expected (exit code {})", e.exit_code()),
        Ok(_) => println!("foreign config:  accepted — this would be a bug"),
    }
    Ok(())
}
