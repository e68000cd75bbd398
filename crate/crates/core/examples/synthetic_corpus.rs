//! Writes a seeded synthetic corpus (archive, word table, reading times).
//!
//! cargo run --example synthetic_corpus -- <dir> [seed] [articles] [words-per-article] [subjects] [vocab]

use tempsurp::store::{Dtype, TokenSource};
use tempsurp::synth::{generate_corpus, CorpusConfig};

fn main() -> tempsurp::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let dir = args.first().map(String::as_str).unwrap_or("synthetic");
    let num = |i: usize, d: u64| args.get(i).and_then(|s| s.parse().ok()).unwrap_or(d);
    let cfg = CorpusConfig {
        seed: num(1, 0),
        articles: num(2, 10) as usize,
        words_per_article: num(3, 20) as usize,
        subjects: num(4, 5) as usize,
        vocab: num(5, 64) as usize,
        zones: true,
        ..CorpusConfig::default()
    };
    let corpus = generate_corpus(&cfg)?;
    let paths = corpus.write_to(dir, Dtype::F32)?;
    println!(
        "{} words, {} tokens, {} reading times, generated at T = {}",
        corpus.words.len(),
        corpus.archive.token_count(),
        corpus.rts.len(),
        cfg.true_t
    );
    println!("archive: {}", paths.archive.display());
    println!("words:   {}", paths.words.display());
    println!("rts:     {}", paths.rts.display());
    Ok(())
}
