//! Runs every bundled config through the same entry point as the binary.
//!
//! `cargo run --example run_configs -- <out-dir>`
use std::path::Path;

use cadlag_kit::cli::{run, Operation, Overrides, RunConfig};

fn main() -> cadlag_kit::Result<()> {
    let base = Path::new(env!("CARGO_MANIFEST_DIR")).join("examples/configs");
    let out = std::env::args().nth(1).unwrap_or_else(|| std::env::temp_dir().join("cadlag-kit-examples").display().to_string());
    let jobs = [
        ("poisson_regularity.json", Operation::CheckRegularity),
        ("iid_regularity.json", Operation::CheckRegularity),
        ("ctmc_consistency.json", Operation::CheckConsistency),
        ("perturbed_consistency.json", Operation::CheckConsistency),
        ("ctmc_simulate.json", Operation::Simulate),
        ("ctmc_verify.json", Operation::VerifyFdd),
        ("poisson_hitting.json", Operation::Hitting),
        ("reconstruct.json", Operation::Reconstruct),
    ];
    for (file, op) in jobs {
        let config = RunConfig::load(&base.join(file))?;
        let overrides = Overrides { out: Some(Path::new(&out).join(file.trim_end_matches(".json"))), ..Default::default() };
        let outcome = run(op, &config, &base, &overrides)?;
        println!("{file:<28} {:<13} -> {}", format!("{:?}", outcome.verdict), outcome.out_dir.display());
    }
    let bad = RunConfig::load(&base.join("bad_generator.json"))?;
    for d in bad.diagnostics(&base, None) {
        println!("bad_generator.json: {d}");
    }
    Ok(())
}
