//! Which words gain from temperature scaling: ΔMSE by named-entity status,
//! part of speech and subword-token count, plus a selective sweep that only
//! scales multi-token words.
//!
//! cargo run --release --example factor_analysis

use tempsurp::analysis::{
    factor_partition, factor_table, fit_table, per_word_report, selective_sweep, Corpus, ModelVariant, Scope,
    SweepOptions, TemperatureGrid,
};
use tempsurp::distrib::Temperature;
use tempsurp::synth::{generate_corpus, CorpusConfig};

fn main() -> tempsurp::Result<()> {
    let cfg = CorpusConfig {
        seed: 4,
        articles: 20,
        multi_token_rate: 0.4,
        ne_rate: 0.15,
        overconfident_ne: true,
        ..CorpusConfig::default()
    };
    let data = generate_corpus(&cfg)?;
    let corpus = Corpus::new(&data.archive, &data.words, &data.rts)?;
    let t_star = Temperature::new(2.5)?;

    let obs = corpus.observations()?;
    let (_, target) = ModelVariant::Model1.specs(corpus.has_zones());
    let temps = [Temperature::new(1.0)?, t_star];
    let table = corpus.word_surprisals(&temps, Scope::All)?;
    let fit_1 = fit_table(&obs, &table.column(0), &target, &Default::default())?;
    let fit_t = fit_table(&obs, &table.column(1), &target, &Default::default())?;

    let part = factor_partition(&corpus, t_star)?;
    println!("{:<16} {:>6} {:>8} {:>8} {:>10}", "factor", "words", "ratio", "p_down", "ΔMSE");
    // crossings such as "NE & p_down" are in the table too
    for r in factor_table(&corpus, &part, &obs, &fit_1, &fit_t)?.into_iter().filter(|r| !r.factor.contains('&')) {
        println!(
            "{:<16} {:>6} {:>8.4}{:<2} {:>6.3} {:>10.2}",
            r.factor,
            r.n_words,
            r.ratio,
            r.marker,
            r.p_down_ratio,
            r.delta_mse.unwrap_or(f64::NAN)
        );
    }

    println!("\nmost frequent named entities");
    for w in per_word_report(&corpus, &part, &obs, &fit_1, &fit_t, part.subset("NE"), 5) {
        println!("  {:<10} n {:>3}  p_down {:>3}  better {:>3}", w.text, w.frequency, w.p_down, w.beneficial);
    }

    let grid = TemperatureGrid::parse("1.0,1.5,2.0,2.5,3.0,4.0")?;
    println!("\nselective scaling (Δllh x1000)");
    for scope in [Scope::All, Scope::Single, Scope::Multi] {
        let r = selective_sweep(&corpus, &grid, &SweepOptions::default(), scope)?;
        let row: Vec<String> = r.points.iter().map(|p| format!("{:>8.2}", p.delta_llh_x1000)).collect();
        println!("  {:<7}{}", format!("{scope:?}"), row.join(""));
    }
    Ok(())
}
