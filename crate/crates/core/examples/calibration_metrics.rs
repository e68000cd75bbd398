//! ECE, CECE and HCE on a stream whose gold labels are drawn from the
//! model's own distributions, before and after temperature scaling.
//!
//! cargo run --release --example calibration_metrics -- [n] [k] [t]

use tempsurp::analysis::token_stream;
use tempsurp::calibration::{calibration_report, BinKind};
use tempsurp::distrib::Temperature;
use tempsurp::store::TokenSource;
use tempsurp::synth::calibrated_stream;

fn main() -> tempsurp::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let n = args.first().and_then(|s| s.parse().ok()).unwrap_or(100_000);
    let k = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(10);
    let t_star = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(2.5);

    let stream = calibrated_stream(7, n, k)?;
    let idx: Vec<usize> = (0..stream.token_count()).collect();
    let tokens = || token_stream(&stream, &idx);
    let ts = Temperature::new(t_star)?;

    for kind in [BinKind::EqualSpaced, BinKind::LogSpaced] {
        for t in [1.0, t_star] {
            let r = calibration_report(tokens, Temperature::new(t)?, kind, 15, true, Some(ts))?;
            println!(
                "{kind:?} T={t:<4} ECE {:.4}  CECE {:.4}  HCE_TS {:.4}",
                r.ece,
                r.cece.unwrap_or(f64::NAN),
                r.hce_ts.unwrap_or(f64::NAN)
            );
        }
    }

    let r = calibration_report(tokens, Temperature::new(1.0)?, BinKind::LogSpaced, 15, false, None)?;
    println!("\nreliability at T=1, log bins");
    for b in r.per_bin.iter().filter(|b| b.count > 0) {
        println!(
            "({:.3}, {:.3}]  conf {:.3}  acc {:.3}  n {}",
            b.lower,
            b.upper,
            b.mean_confidence.unwrap_or(f64::NAN),
            b.accuracy.unwrap_or(f64::NAN),
            b.count
        );
    }
    Ok(())
}
