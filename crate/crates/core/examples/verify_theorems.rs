//! Random-distribution checks of the temperature-scaling properties:
//! monotone surprisal, the log2 K limit, the surprisal variance bound and
//! the widening gap between a flat and a sparse distribution.
//!
//! cargo run --release --example verify_theorems -- [trials] [seed]

use tempsurp::analysis::{sparsity_gaps, verify_theorems, GoldChoice, TemperatureGrid, TheoremOptions};
use tempsurp::distrib::LogBase;

fn main() -> tempsurp::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let trials = args.first().and_then(|s| s.parse().ok()).unwrap_or(2000);
    let seed = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(0);

    for (gold, base) in [
        (GoldChoice::Argmax, LogBase::Nats),
        (GoldChoice::AboveUniform, LogBase::Bits),
    ] {
        let mut opts = TheoremOptions::new(seed, trials);
        opts.gold = gold;
        opts.variance_base = base;
        let report = verify_theorems(&opts)?;
        println!("gold {gold:?}, variance bound in {base:?}");
        for c in &report.checks {
            println!("  {:<22} {:>7} checked {:>5} violations", c.name, c.checked, c.violations);
            if let Some(v) = c.examples.first() {
                println!("    e.g. K={} trial {}: {}", v.k, v.trial, v.detail);
            }
        }
    }

    println!("\ns(flat) - s(sparse) on the default grid");
    for (t, gap) in sparsity_gaps(TemperatureGrid::paper().values())? {
        println!("  T {t:>5}  {gap:.4}");
    }
    Ok(())
}
