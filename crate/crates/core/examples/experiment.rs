//! The three critic settings across 50 seeds; records land in a temp dir.
//!
//!     cargo run --release --example experiment

use tamer_lab::harness::{emit_csv, mean_return, run_experiment, summarize, ExperimentConfig, Variant};
use tamer_lab::oracles::OracleConfig;

fn main() -> tamer_lab::Result<()> {
    let dir = std::env::temp_dir().join("tamer-lab-experiment");
    std::fs::create_dir_all(&dir)?;

    for (name, oracle) in [
        ("optimal", OracleConfig::optimal()),
        ("half", OracleConfig::biased(0.5)),
        ("two-thirds", OracleConfig::biased(2.0 / 3.0)),
    ] {
        let mut cfg = ExperimentConfig::new(oracle);
        cfg.seeds = (0..50).collect();
        let records = run_experiment(&cfg)?;
        let path = dir.join(format!("{name}.csv"));
        emit_csv(&records, &path)?;

        println!("{name} critic -> {}", path.display());
        println!("  episode   baseline        stochastic");
        let rows = summarize(&records)?;
        let (base, stoch): (Vec<_>, Vec<_>) = rows.iter().partition(|r| r.variant == Variant::Baseline);
        for (b, s) in base.iter().zip(&stoch) {
            println!("  {:>7}   {:>6.2} ± {:<5.2}   {:>6.2} ± {:<5.2}", b.episode, b.mean, b.std, s.mean, s.std);
        }
        println!(
            "  overall   {:>6.2}           {:>6.2}\n",
            mean_return(&records, Variant::Baseline).unwrap(),
            mean_return(&records, Variant::Stochastic).unwrap()
        );
    }
    Ok(())
}
