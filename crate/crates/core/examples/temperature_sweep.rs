//! Sweeps temperature over a synthetic corpus whose reading times were
//! generated from T = 2.5 surprisal, and reports the best-fitting T*.
//!
//! cargo run --release --example temperature_sweep -- [seed]

use tempsurp::analysis::{sweep, Corpus, SweepOptions, TemperatureGrid};
use tempsurp::synth::{generate_corpus, CorpusConfig};

fn main() -> tempsurp::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1);
    let cfg = CorpusConfig {
        seed,
        ..CorpusConfig::default()
    };
    let data = generate_corpus(&cfg)?;
    let corpus = Corpus::new(&data.archive, &data.words, &data.rts)?;
    let opts = SweepOptions {
        calibration_bins: Some(15),
        ..SweepOptions::default()
    };
    let report = sweep(&corpus, &TemperatureGrid::paper(), &opts)?;

    println!("base:   {}", report.base_formula);
    println!("target: {}", report.target_formula);
    println!("{} observations over {} words\n", report.n_obs, report.n_words);
    let top = report.points.iter().map(|p| p.delta_llh_x1000).fold(1e-12, f64::max);
    for p in &report.points {
        let bar = "#".repeat((50.0 * p.delta_llh_x1000.max(0.0) / top) as usize);
        let flag = if p.converged() { ' ' } else { '*' };
        println!("T {:>5}{flag} Δllh x1000 {:>8.2} {bar}", p.t, p.delta_llh_x1000);
    }
    println!("\nT* = {:?} (generated at {})", report.t_star, cfg.true_t);
    if let Some(pct) = report.delta_llh_improvement_pct {
        println!("improvement over T = 1: {pct:.1}%");
    }
    if let Some(l) = report.lrt_t_star {
        println!("LRT at T*: chi2 {:.2}, df {}, p {:.2e}", l.chi2, l.df, l.p_value);
    }
    if let Some(c) = &report.calibration {
        println!(
            "ECE T=1 {:.4}/{:.4}, T* {:.4}/{:.4} (equal/log), HCE_TS {:.4}",
            c.at_unit.ece_equal, c.at_unit.ece_log, c.at_t_star.ece_equal, c.at_t_star.ece_log, c.hce_ts
        );
    }
    Ok(())
}
