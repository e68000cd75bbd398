mod common;

use common::lme_instances::{random_instance, zero_variance_instance};
use common::oracle;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tempsurp::analysis::{Corpus, ModelVariant};
use tempsurp::lme::{build_design, delta_llh, fit_ml, fixed_corr, loglik_per_datapoint, lrt, profile};
use tempsurp::store::{load_tables, LogitArchive};

#[test]
fn profiled_llh_matches_dense_density() {
    for seed in 0..25 {
        let inst = random_instance(seed, 120);
        let dm = inst.design();
        let fit = fit_ml(&dm).unwrap();
        assert!(fit.converged, "seed {seed}");
        let dense = oracle::mvn_loglik(&dm, &fit.beta, &fit.theta, fit.sigma2);
        assert!((fit.llh - dense).abs() < 1e-6, "seed {seed}: {} vs {dense}", fit.llh);
        let per = loglik_per_datapoint(&fit).unwrap();
        assert!((per - dense / dm.n as f64).abs() < 1e-8);
    }
}

#[test]
fn inner_solve_is_generalised_least_squares() {
    for seed in 100..110 {
        let dm = random_instance(seed, 80).design();
        let theta: Vec<f64> = (0..dm.n_theta()).map(|i| 0.3 + 0.4 * i as f64).collect();
        let prof = profile(&dm, &theta).unwrap();
        let (beta, sigma2) = oracle::gls(&dm, &theta);
        for (a, b) in prof.beta.iter().zip(&beta) {
            assert!((a - b).abs() < 1e-8 * (1.0 + b.abs()), "seed {seed}: {a} vs {b}");
        }
        assert!((prof.sigma2 - sigma2).abs() < 1e-8 * sigma2);
    }
}

#[test]
fn zero_variance_data_reduces_to_ols() {
    for seed in 0..10 {
        let dm = zero_variance_instance(seed, 60).design();
        let fit = fit_ml(&dm).unwrap();
        let ols = oracle::ols_loglik(&dm);
        assert!((fit.llh - ols).abs() < 1e-6, "seed {seed}: {} vs {ols}", fit.llh);
    }
}

#[test]
fn optimum_beats_generating_parameters() {
    // llh at the optimum is at least the llh at any other parameter value
    for seed in 200..210 {
        let dm = random_instance(seed, 40).design();
        let fit = fit_ml(&dm).unwrap();
        let theta: Vec<f64> = fit.theta.iter().map(|t| t * 0.7 + 0.1).collect();
        let (beta, s2) = oracle::gls(&dm, &theta);
        let other = oracle::mvn_loglik(&dm, &beta, &theta, s2 * 1.1);
        assert!(fit.llh >= other - 1e-9);
    }
}

#[test]
fn row_permutation_leaves_llh_unchanged() {
    let inst = random_instance(7, 150);
    let dm = inst.design();
    let fit = fit_ml(&dm).unwrap();
    let mut order: Vec<usize> = (0..dm.n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(1));
    let perm = build_design(&inst.table.permuted(&order), &inst.spec).unwrap();
    let fit2 = fit_ml(&perm).unwrap();
    assert!((fit.llh - fit2.llh).abs() < 1e-9, "{} vs {}", fit.llh, fit2.llh);
}

#[test]
fn response_scaling_shifts_llh() {
    let inst = random_instance(11, 100);
    let base = build_design(&inst.table, &inst.spec).unwrap();
    let tgt = build_design(&inst.table, &inst.nested_spec()).unwrap();
    let (fb, ft) = (fit_ml(&base).unwrap(), fit_ml(&tgt).unwrap());
    let c = 3.7;
    let mut scaled = inst.table.clone();
    let y: Vec<f64> = inst.table.numeric("y").unwrap().iter().map(|v| v * c).collect();
    scaled.add_numeric("y", y).unwrap();
    let sb = fit_ml(&build_design(&scaled, &inst.spec).unwrap()).unwrap();
    let st = fit_ml(&build_design(&scaled, &inst.nested_spec()).unwrap()).unwrap();
    let n = base.n as f64;
    assert!((sb.llh - (fb.llh - n * c.ln())).abs() < 1e-6);
    assert!((st.llh - (ft.llh - n * c.ln())).abs() < 1e-6);
    let d0 = delta_llh(&ft, &fb).unwrap();
    let d1 = delta_llh(&st, &sb).unwrap();
    assert!((d0 - d1).abs() < 1e-9, "{d0} vs {d1}");
}

#[test]
fn fixed_effect_correlations_match_dense() {
    for seed in 300..306 {
        let dm = random_instance(seed, 100).design();
        let fit = fit_ml(&dm).unwrap();
        let corr = fixed_corr(&fit).unwrap();
        let want = oracle::gls_corr(&dm, &fit.theta, fit.sigma2);
        for i in 0..dm.p {
            assert!((corr[i * dm.p + i] - 1.0).abs() < 1e-15);
            for j in 0..dm.p {
                assert!((corr[i * dm.p + j] - corr[j * dm.p + i]).abs() < 1e-15);
                assert!((corr[i * dm.p + j] - want[(i, j)]).abs() < 1e-6);
            }
        }
    }
}

#[test]
fn adding_a_column_never_lowers_llh() {
    for seed in 500..530 {
        let inst = random_instance(seed, 150);
        let fb = fit_ml(&inst.design()).unwrap();
        let ft = fit_ml(&build_design(&inst.table, &inst.nested_spec()).unwrap()).unwrap();
        assert!(fb.converged && ft.converged, "seed {seed}");
        assert!(ft.llh >= fb.llh - 1e-6, "seed {seed}: {} < {}", ft.llh, fb.llh);
        assert!(lrt(&ft, &fb, 1).unwrap().chi2 >= 0.0);
    }
}

#[test]
fn golden_sweep_base_fit_matches_dense_oracle() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures");
    let archive = LogitArchive::open(dir.join("toy/archive.scla")).unwrap();
    let tables = load_tables(dir.join("toy/words.ndjson"), dir.join("toy/rts.csv")).unwrap();
    let corpus = Corpus::new(&archive, &tables.words, &tables.rts).unwrap();
    let obs = corpus.observations().unwrap();
    let (base, _) = ModelVariant::Model1.specs(corpus.has_zones());
    let dm = build_design(obs.base_table(), &base).unwrap();
    assert!(dm.n <= 200);
    let fit = fit_ml(&dm).unwrap();
    let dense = oracle::mvn_loglik(&dm, &fit.beta, &fit.theta, fit.sigma2);
    assert!((fit.llh - dense).abs() < 1e-6);

    let golden: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("golden/sweep.json")).unwrap()).unwrap();
    assert_eq!(golden["report"]["base_llh"].as_f64().unwrap(), fit.llh);
}
