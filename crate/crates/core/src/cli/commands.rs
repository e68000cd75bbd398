use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};

use super::config::RunConfig;
use crate::analysis::{
    entropy_alignment, factor_partition, factor_table, histogram, per_word_report, selective_sweep, sweep,
    verify_theorems, Corpus, Scope, SurprisalKernel, SweepOptions, TheoremOptions,
};
use crate::calibration::{calibration_report, BinKind, CalibrationReport};
use crate::distrib::{surprisal_t, Temperature};
use crate::error::{Error, Result};
use crate::lme::{fit_ml_with, build_design, fixed_corr, FitOptions, LmeFit};
use crate::store::{load_tables, validate_spans, LogitArchive, Tables, TokenSource};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Ok,
    /// A theorem check found a violation.
    Violations,
    NotConverged,
}

impl Status {
    pub fn code(self) -> i32 {
        match self {
            Status::Ok => 0,
            Status::Violations => 1,
            Status::NotConverged => 2,
        }
    }
}

/// Files are only written once every result is in hand.
struct Outputs {
    dir: PathBuf,
    files: Vec<(&'static str, String)>,
}

impl Outputs {
    fn new(dir: PathBuf) -> Self {
        Self { dir, files: Vec::new() }
    }

    fn json(&mut self, name: &'static str, value: &Value) {
        let mut s = serde_json::to_string_pretty(value).expect("json");
        s.push('\n');
        self.files.push((name, s));
    }

    fn csv(&mut self, name: &'static str, config: &RunConfig, body: String) {
        self.files.push((name, format!("# config: {}\n{body}", config.echo())));
    }

    fn write(self) -> Result<()> {
        std::fs::create_dir_all(&self.dir).map_err(|e| Error::io(&self.dir, e))?;
        for (name, text) in self.files {
            let p = self.dir.join(name);
            std::fs::write(&p, text).map_err(|e| Error::io(&p, e))?;
        }
        Ok(())
    }
}

fn config_value(c: &RunConfig) -> Value {
    serde_json::to_value(c).expect("config serialises")
}

fn out_dir(c: &RunConfig) -> Result<PathBuf> {
    c.out.clone().ok_or_else(|| Error::Config("--out is required".into()))
}

struct Loaded {
    archive: LogitArchive,
    tables: Tables,
}

fn load(c: &RunConfig) -> Result<Loaded> {
    let archive = LogitArchive::open(c.require(&c.archive, "archive")?)?;
    let tables = load_tables(c.require(&c.words, "words")?, c.require(&c.rts, "rts")?)?;
    validate_spans(&tables.words, archive.token_count())?;
    Ok(Loaded { archive, tables })
}

fn sweep_options(c: &RunConfig, calibration: bool) -> SweepOptions {
    SweepOptions {
        variant: c.model.into(),
        scope: c.scope.into(),
        workers: c.workers,
        fit: FitOptions::default(),
        calibration_bins: calibration.then_some(c.bins),
    }
}

pub fn cmd_sweep(c: &RunConfig) -> Result<Status> {
    let out = out_dir(c)?;
    let grid = c.grid()?;
    let data = load(c)?;
    let corpus = Corpus::new(&data.archive, &data.tables.words, &data.tables.rts)?;
    let report = sweep(&corpus, &grid, &sweep_options(c, true))?;

    let mut o = Outputs::new(out);
    o.json("sweep.json", &json!({ "config": config_value(c), "report": report }));
    o.csv("sweep.csv", c, report.to_csv());
    o.write()?;
    Ok(if report.all_converged() {
        Status::Ok
    } else {
        Status::NotConverged
    })
}

#[derive(Debug, Serialize)]
struct CalibrationRow {
    subset: &'static str,
    scheme: BinKind,
    report: Option<CalibrationReport>,
}

pub fn cmd_calibrate(c: &RunConfig) -> Result<Status> {
    let out = out_dir(c)?;
    let archive = LogitArchive::open(c.require(&c.archive, "archive")?)?;
    let words = match &c.words {
        Some(_) => {
            let w = crate::store::read_words(c.require(&c.words, "words")?)?;
            validate_spans(&w, archive.token_count())?;
            Some(w)
        }
        None => None,
    };
    let t = Temperature::new(c.t)?;
    let t_star = c.tstar.map(Temperature::new).transpose()?;

    let all: Vec<usize> = (0..archive.token_count()).collect();
    let mut subsets: Vec<(&'static str, Vec<usize>)> = vec![("all", all)];
    if let Some(ws) = &words {
        let pick = |multi: bool| -> Vec<usize> {
            ws.iter().filter(|w| (w.n_tokens() > 1) == multi).flat_map(|w| w.tokens()).collect()
        };
        subsets.push(("single", pick(false)));
        subsets.push(("multi", pick(true)));
    }

    let mut rows = Vec::new();
    for kind in c.schemes() {
        for (name, toks) in &subsets {
            let report = if toks.is_empty() && *name != "all" {
                None
            } else {
                Some(calibration_report(
                    || crate::analysis::token_stream(&archive, toks),
                    t,
                    kind,
                    c.bins,
                    true,
                    t_star,
                )?)
            };
            rows.push(CalibrationRow {
                subset: name,
                scheme: kind,
                report,
            });
        }
    }

    let mut table = String::from("subset,scheme,t,n,ece,cece,hce_ts\n");
    let mut bins = String::from("subset,scheme,bin,lower,upper,mean_confidence,accuracy,count\n");
    let opt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
    for r in &rows {
        let scheme = scheme_name(r.scheme);
        match &r.report {
            Some(rep) => {
                table.push_str(&format!(
                    "{},{scheme},{},{},{},{},{}\n",
                    r.subset,
                    c.t,
                    rep.n_samples,
                    rep.ece,
                    opt(rep.cece),
                    opt(rep.hce_ts)
                ));
                for (m, b) in rep.per_bin.iter().enumerate() {
                    bins.push_str(&format!(
                        "{},{scheme},{m},{},{},{},{},{}\n",
                        r.subset,
                        b.lower,
                        b.upper,
                        opt(b.mean_confidence),
                        opt(b.accuracy),
                        b.count
                    ));
                }
            }
            None => table.push_str(&format!("{},{scheme},{},0,,,\n", r.subset, c.t)),
        }
    }
    let mut o = Outputs::new(out);
    o.json("calibrate.json", &json!({ "config": config_value(c), "results": rows }));
    o.csv("calibrate.csv", c, table);
    o.csv("reliability.csv", c, bins);
    o.write()?;
    Ok(Status::Ok)
}

fn scheme_name(k: BinKind) -> &'static str {
    match k {
        BinKind::EqualSpaced => "equal",
        BinKind::LogSpaced => "log",
    }
}

fn t_star_from(c: &RunConfig, out: &Path) -> Result<f64> {
    if let Some(t) = c.tstar {
        return Ok(t);
    }
    let p = out.join("sweep.json");
    let text = std::fs::read_to_string(&p)
        .map_err(|_| Error::Config("--tstar is required when no sweep.json is in the output directory".into()))?;
    let v: Value = serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
    v["report"]["t_star"]
        .as_f64()
        .ok_or_else(|| Error::Config(format!("{} has no converged T*", p.display())))
}

fn fit_summary(f: &LmeFit) -> Value {
    json!({
        "llh": f.llh,
        "converged": f.converged,
        "n": f.n,
        "sigma2": f.sigma2,
        "coefficients": f.col_names.iter().zip(&f.beta).map(|(n, b)| json!({"name": n, "estimate": b})).collect::<Vec<_>>(),
        "random_effects": f.random_effects,
        "fixed_correlation": fixed_corr(f).ok(),
    })
}

const HIST_BINS: usize = 40;

pub fn cmd_analyze(c: &RunConfig) -> Result<Status> {
    let out = out_dir(c)?;
    let grid = c.grid()?;
    let data = load(c)?;
    let t_star = Temperature::new(t_star_from(c, &out)?)?;
    let corpus = Corpus::new(&data.archive, &data.tables.words, &data.tables.rts)?;
    let obs = corpus.observations()?;
    let (_, target) = crate::analysis::ModelVariant::from(c.model).specs(corpus.has_zones());

    let opts = sweep_options(c, false);
    let words = corpus.word_surprisals(&[Temperature::ONE, t_star], Scope::All)?;
    let fit = |k: usize| -> Result<LmeFit> {
        let table = obs.table_with(&words.column(k))?;
        fit_ml_with(&build_design(&table, &target)?, opts.fit)
    };
    let (fit_unit, fit_star) = (fit(0)?, fit(1)?);

    let partition = factor_partition(&corpus, t_star)?;
    let factors = factor_table(&corpus, &partition, &obs, &fit_unit, &fit_star)?;
    let top = per_word_report(&corpus, &partition, &obs, &fit_unit, &fit_star, None, c.top_n);
    let top_ne = partition
        .subset("NE")
        .map(|ne| per_word_report(&corpus, &partition, &obs, &fit_unit, &fit_star, Some(ne), c.top_n))
        .unwrap_or_default();

    let curves = [Scope::All, Scope::Single, Scope::Multi]
        .iter()
        .map(|&s| selective_sweep(&corpus, &grid, &opts, s))
        .collect::<Result<Vec<_>>>()?;

    let mut status = Status::Ok;
    if !fit_unit.converged || !fit_star.converged || curves.iter().any(|r| !r.all_converged()) {
        status = Status::NotConverged;
    }

    let mut factor_csv = String::from(
        "factor,n_words,ratio,marker,n_obs,p_down_ratio,mse_unit,mse_t_star,delta_mse,normalized_delta_mse\n",
    );
    let opt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
    for r in &factors {
        factor_csv.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            r.factor,
            r.n_words,
            r.ratio,
            r.marker,
            r.n_obs,
            r.p_down_ratio,
            opt(r.mse_unit),
            opt(r.mse_t_star),
            opt(r.delta_mse),
            opt(r.normalized_delta_mse)
        ));
    }
    let word_csv = |rows: &[crate::analysis::WordRow]| {
        let mut s = String::from("text,frequency,p_down,p_up,beneficial,unbeneficial\n");
        for r in rows {
            s.push_str(&format!(
                "{},{},{},{},{},{}\n",
                csv_field(&r.text),
                r.frequency,
                r.p_down,
                r.p_up,
                r.beneficial,
                r.unbeneficial
            ));
        }
        s
    };
    let mut sel = String::from("T,all,single,multi,converged\n");
    for (k, t) in grid.values().iter().enumerate() {
        let p: Vec<_> = curves.iter().map(|r| &r.points[k]).collect();
        sel.push_str(&format!(
            "{},{},{},{},{}\n",
            t.value(),
            p[0].delta_llh_x1000,
            p[1].delta_llh_x1000,
            p[2].delta_llh_x1000,
            p.iter().all(|x| x.converged())
        ));
    }
    let upper = partition
        .surprisal_unit
        .iter()
        .chain(&partition.surprisal_t_star)
        .fold(0.0f64, |a, &b| a.max(b))
        .ceil()
        .max(1.0);
    let mut hist = String::from("tokens,T,lower,upper,count\n");
    for (class, multi) in [("#=1", false), ("#>1", true)] {
        for (t, vals) in [(1.0, &partition.surprisal_unit), (t_star.value(), &partition.surprisal_t_star)] {
            let v: Vec<f64> = corpus
                .words()
                .iter()
                .zip(vals.iter())
                .filter(|(w, _)| (w.n_tokens() > 1) == multi)
                .map(|(_, &s)| s)
                .collect();
            for (lo, hi, n) in histogram(&v, HIST_BINS, upper)? {
                hist.push_str(&format!("{class},{t},{lo},{hi},{n}\n"));
            }
        }
    }

    let mut o = Outputs::new(out);
    o.json(
        "analysis.json",
        &json!({
            "config": config_value(c),
            "t_star": t_star.value(),
            "target_formula": target.to_string(),
            "fit_unit": fit_summary(&fit_unit),
            "fit_t_star": fit_summary(&fit_star),
            "factors": factors,
            "top_words": top,
            "top_named_entities": top_ne,
            "selective": curves.iter().map(|r| json!({
                "scope": r.scope, "t_star": r.t_star, "delta_llh_t_star_x1000": r.delta_llh_t_star_x1000,
                "delta_llh_improvement_pct": r.delta_llh_improvement_pct,
            })).collect::<Vec<_>>(),
        }),
    );
    o.csv("factors.csv", c, factor_csv);
    o.csv("top_words.csv", c, word_csv(&top));
    o.csv("top_named_entities.csv", c, word_csv(&top_ne));
    o.csv("selective.csv", c, sel);
    o.csv("histogram.csv", c, hist);
    o.write()?;
    Ok(status)
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn cmd_check(c: &RunConfig) -> Result<Status> {
    check_with_kernel(c, surprisal_t)
}

/// [`cmd_check`] with a substitute surprisal kernel.
pub fn check_with_kernel(c: &RunConfig, kernel: SurprisalKernel) -> Result<Status> {
    let mut opts = TheoremOptions::new(c.seed, c.trials);
    opts.grid = c.grid()?;
    opts.workers = c.workers;
    opts.kernel = kernel;
    let alignment = match &c.archive {
        Some(_) => {
            let a = LogitArchive::open(c.require(&c.archive, "archive")?)?;
            let t = Temperature::new(c.tstar.unwrap_or(2.5))?;
            Some(entropy_alignment(&a, t)?)
        }
        None => None,
    };
    let report = verify_theorems(&opts)?;
    for ch in &report.checks {
        println!(
            "{:<22} checked {:>7}  skipped {:>6}  violations {}",
            ch.name, ch.checked, ch.skipped, ch.violations
        );
        for v in &ch.examples {
            println!("  K = {} trial {} gold {}: {}", v.k, v.trial, v.gold, v.detail);
        }
    }
    if let Some(a) = &alignment {
        println!(
            "mean |s_T* - H_a| at T* = {}: H_1 {:.4}  H_1/2 {:.4}  H_0 {:.4}",
            a.t_star, a.dist_h1, a.dist_h_half, a.dist_h0
        );
    }
    if let Some(out) = &c.out {
        let mut o = Outputs::new(out.clone());
        o.json(
            "check.json",
            &json!({ "config": config_value(c), "report": report, "entropy_alignment": alignment }),
        );
        o.write()?;
    }
    Ok(if report.passed() {
        Status::Ok
    } else {
        Status::Violations
    })
}
