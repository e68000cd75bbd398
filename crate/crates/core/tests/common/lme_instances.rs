//! Seeded random mixed-model instances.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use tempsurp::lme::{build_design, DataTable, DesignMatrix, LmeSpec, RandomTerm};

pub struct Instance {
    pub table: DataTable,
    pub spec: LmeSpec,
    pub extra_predictor: String,
}

impl Instance {
    pub fn design(&self) -> DesignMatrix {
        build_design(&self.table, &self.spec).expect("instance design")
    }

    /// The same model with one more fixed-effect column.
    pub fn nested_spec(&self) -> LmeSpec {
        self.spec.clone().main(self.extra_predictor.clone())
    }
}

/// `n <= max_n` rows, one or two random-intercept factors, optionally a
/// correlated random slope on the first factor.
pub fn random_instance(seed: u64, max_n: usize) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let n = rng.random_range(30..=max_n);
    let n_pred = rng.random_range(1..=3);
    let two_factors = rng.random_bool(0.5);
    let with_slope = rng.random_bool(0.35);
    let levels_g = rng.random_range(3..=8);
    let levels_h = rng.random_range(3..=6);

    let mut table = DataTable::new();
    let mut preds: Vec<Vec<f64>> = Vec::new();
    for j in 0..=n_pred {
        let col: Vec<f64> = (0..n).map(|_| normal.sample(&mut rng) * (1.0 + j as f64)).collect();
        preds.push(col);
    }
    let g: Vec<usize> = (0..n).map(|i| i % levels_g).collect();
    let h: Vec<usize> = (0..n).map(|_| rng.random_range(0..levels_h)).collect();
    let sd_g = rng.random_range(0.0..1.5);
    let sd_h = rng.random_range(0.0..1.0);
    let sd_slope = rng.random_range(0.0..0.8);
    let b_g: Vec<f64> = (0..levels_g).map(|_| normal.sample(&mut rng) * sd_g).collect();
    let b_h: Vec<f64> = (0..levels_h).map(|_| normal.sample(&mut rng) * sd_h).collect();
    let s_g: Vec<f64> = (0..levels_g).map(|_| normal.sample(&mut rng) * sd_slope).collect();
    let beta: Vec<f64> = (0..=n_pred).map(|_| normal.sample(&mut rng)).collect();
    let y: Vec<f64> = (0..n)
        .map(|i| {
            let mut v = 2.0 + b_g[g[i]];
            for j in 0..n_pred {
                v += beta[j] * preds[j][i];
            }
            if two_factors {
                v += b_h[h[i]];
            }
            if with_slope {
                v += s_g[g[i]] * preds[0][i];
            }
            v + normal.sample(&mut rng)
        })
        .collect();

    let mut spec = LmeSpec::new("y");
    for (j, col) in preds.iter().enumerate() {
        table.add_numeric(format!("x{j}"), col.clone()).unwrap();
        if j < n_pred {
            spec = spec.main(format!("x{j}"));
        }
    }
    table.add_numeric("y", y).unwrap();
    table
        .add_factor("g", g.iter().map(|v| format!("g{v}")).collect())
        .unwrap();
    table
        .add_factor("h", h.iter().map(|v| format!("h{v}")).collect())
        .unwrap();
    spec = spec.random(if with_slope {
        RandomTerm::slope("g", "x0")
    } else {
        RandomTerm::intercept("g")
    });
    if two_factors {
        spec = spec.random(RandomTerm::intercept("h"));
    }
    Instance {
        table,
        spec,
        extra_predictor: format!("x{n_pred}"),
    }
}

/// An instance whose response has no component along the random-effect
/// indicators, so the ML optimum sits at zero variance.
pub fn zero_variance_instance(seed: u64, n: usize) -> Instance {
    use nalgebra::{DMatrix, DVector};
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let levels = rng.random_range(3..=7);
    let x1: Vec<f64> = (0..n).map(|_| normal.sample(&mut rng)).collect();
    let g: Vec<usize> = (0..n).map(|i| i % levels).collect();
    let e = DVector::from_fn(n, |_, _| normal.sample(&mut rng));
    // project the noise off span[1, x1, group indicators]
    let mut a = DMatrix::zeros(n, 2 + levels);
    for i in 0..n {
        a[(i, 0)] = 1.0;
        a[(i, 1)] = x1[i];
        a[(i, 2 + g[i])] = 1.0;
    }
    let svd = a.clone().svd(true, false);
    let u = svd.u.unwrap();
    let rank = svd.singular_values.iter().filter(|s| **s > 1e-9).count();
    let basis = u.columns(0, rank);
    let proj = basis * (basis.transpose() * &e);
    let resid = e - proj;
    let y: Vec<f64> = (0..n).map(|i| 1.5 + 0.7 * x1[i] + resid[i]).collect();

    let mut table = DataTable::new();
    table.add_numeric("y", y).unwrap();
    table.add_numeric("x1", x1).unwrap();
    table
        .add_numeric("x2", (0..n).map(|_| normal.sample(&mut rng)).collect())
        .unwrap();
    table
        .add_factor("g", g.iter().map(|v| format!("g{v}")).collect())
        .unwrap();
    Instance {
        table,
        spec: LmeSpec::new("y").main("x1").random(RandomTerm::intercept("g")),
        extra_predictor: "x2".into(),
    }
}
