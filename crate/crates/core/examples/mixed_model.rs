//! Fits nested mixed models on simulated reading times, compares them with
//! Δllh and a likelihood-ratio test, and prints the fixed-effect correlations.
//!
//! cargo run --release --example mixed_model

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use tempsurp::lme::{build_design, delta_llh, fit_ml, fixed_corr, lrt, DataTable, LmeSpec};

fn main() -> tempsurp::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let unit = Normal::new(0.0, 1.0).unwrap();
    let (subjects, items) = (8, 60);

    let subj_eff: Vec<f64> = (0..subjects).map(|_| 25.0 * unit.sample(&mut rng)).collect();
    let surprisal: Vec<f64> = (0..items).map(|_| 6.0 + 3.0 * unit.sample(&mut rng)).collect();
    let length: Vec<f64> = (0..items).map(|i| 3.0 + (i % 7) as f64).collect();

    let mut rt = Vec::new();
    let (mut s_col, mut l_col, mut subj) = (Vec::new(), Vec::new(), Vec::new());
    for (s, eff) in subj_eff.iter().enumerate() {
        for i in 0..items {
            rt.push(200.0 + 4.0 * length[i] + 2.0 * surprisal[i] + eff + 15.0 * unit.sample(&mut rng));
            s_col.push(surprisal[i]);
            l_col.push(length[i]);
            subj.push(format!("s{s}"));
        }
    }
    let mut data = DataTable::new();
    data.add_numeric("rt", rt)?;
    data.add_numeric("surprisal", s_col)?;
    data.add_numeric("length", l_col)?;
    data.add_factor("subj_id", subj)?;

    let base = LmeSpec::parse("rt ~ length + (1 | subj_id)")?;
    let target = LmeSpec::parse("rt ~ length + surprisal + (1 | subj_id)")?;
    let fb = fit_ml(&build_design(&data, &base)?)?;
    let ft = fit_ml(&build_design(&data, &target)?)?;

    for (spec, fit) in [(&base, &fb), (&target, &ft)] {
        println!("{spec}");
        println!("  llh {:.3}  sigma2 {:.2}  converged {}", fit.llh, fit.sigma2, fit.converged);
        for (name, b) in fit.col_names.iter().zip(&fit.beta) {
            println!("  {name:<12} {b:>9.4}");
        }
        for re in &fit.random_effects {
            println!("  ({}) variances {:?}", re.group, re.variances);
        }
    }

    println!("Δllh x1000 = {:.3}", 1000.0 * delta_llh(&ft, &fb)?);
    let test = lrt(&ft, &fb, 1)?;
    println!("LRT chi2 = {:.2}, df = {}, p = {:.3e}", test.chi2, test.df, test.p_value);

    let p = ft.beta.len();
    let corr = fixed_corr(&ft)?;
    println!("fixed-effect correlations");
    for i in 0..p {
        let row: Vec<String> = (0..p).map(|j| format!("{:>7.3}", corr[i * p + j])).collect();
        println!("  {:<12}{}", ft.col_names[i], row.join(""));
    }
    Ok(())
}
