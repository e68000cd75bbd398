//! Seeded synthetic corpora with known generating temperature, for tests,
//! examples and fixtures.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::distrib::{softmax_t, surprisal_t, LogitVector, Temperature};
use crate::error::{Error, Result};
use crate::store::{write_rts, write_words, Dtype, InMemoryArchive, PosClass, RtObservation, WordRecord, Zones};

/// Which words' reading times depend on temperature-scaled surprisal.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Signal {
    /// Every word draws its logits freely.
    AllWords,
    /// Single-token words get a uniform distribution over a random support,
    /// so their surprisal is the same at every temperature.
    MultiTokenOnly,
}

#[derive(Debug, Clone)]
pub struct CorpusConfig {
    pub seed: u64,
    pub articles: usize,
    pub words_per_article: usize,
    pub subjects: usize,
    pub vocab: usize,
    /// Probability that a word spans two or three tokens.
    pub multi_token_rate: f64,
    pub ne_rate: f64,
    /// Named entities get a sharply peaked distribution whose mode is the
    /// gold token.
    pub overconfident_ne: bool,
    pub zones: bool,
    pub signal: Signal,
    /// Temperature of the surprisal that drives reading times.
    pub true_t: f64,
    /// Milliseconds per bit.
    pub slope: f64,
    pub noise_sd: f64,
    pub subject_sd: f64,
    pub article_sd: f64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            articles: 10,
            words_per_article: 20,
            subjects: 5,
            vocab: 64,
            multi_token_rate: 0.3,
            ne_rate: 0.1,
            overconfident_ne: false,
            zones: false,
            signal: Signal::AllWords,
            true_t: 2.5,
            slope: 12.0,
            noise_sd: 15.0,
            subject_sd: 30.0,
            article_sd: 10.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub archive: InMemoryArchive,
    pub words: Vec<WordRecord>,
    pub rts: Vec<RtObservation>,
    /// Generating surprisal of each word at `true_t`.
    pub true_surprisal: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct CorpusPaths {
    pub archive: PathBuf,
    pub words: PathBuf,
    pub rts: PathBuf,
}

impl SyntheticCorpus {
    pub fn write_to(&self, dir: impl AsRef<Path>, dtype: Dtype) -> Result<CorpusPaths> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let paths = CorpusPaths {
            archive: dir.join("archive.scla"),
            words: dir.join("words.ndjson"),
            rts: dir.join("rts.csv"),
        };
        self.archive.write(&paths.archive, dtype)?;
        write_words(&paths.words, &self.words)?;
        write_rts(&paths.rts, &self.rts)?;
        Ok(paths)
    }
}

fn sample_categorical<R: Rng + ?Sized>(rng: &mut R, p: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &x) in p.iter().enumerate() {
        acc += x;
        if u < acc {
            return i;
        }
    }
    p.iter().rposition(|&x| x > 0.0).unwrap_or(0)
}

/// Logits with a per-token sharpness; the gold token is drawn from the
/// distribution itself.
fn free_token<R: Rng + ?Sized>(rng: &mut R, k: usize) -> (Vec<f32>, usize) {
    let scale = rng.random_range(0.5..4.0);
    let normal = Normal::new(0.0, scale).unwrap();
    let z: Vec<f32> = (0..k).map(|_| normal.sample(rng) as f32).collect();
    let p = softmax_t(&LogitVector::from_f32(&z).unwrap(), Temperature::ONE);
    let gold = sample_categorical(rng, p.as_slice());
    (z, gold)
}

fn peaked_token<R: Rng + ?Sized>(rng: &mut R, k: usize) -> (Vec<f32>, usize) {
    let normal = Normal::new(0.0, 1.0).unwrap();
    let mut z: Vec<f32> = (0..k).map(|_| normal.sample(rng) as f32).collect();
    let gold = rng.random_range(0..k);
    z[gold] = 6.0 + rng.random_range(0.0..2.0) as f32;
    (z, gold)
}

fn uniform_support_token<R: Rng + ?Sized>(rng: &mut R, k: usize) -> (Vec<f32>, usize) {
    let size = rng.random_range(2..=k);
    let mut idx: Vec<usize> = (0..k).collect();
    for i in 0..size {
        let j = rng.random_range(i..k);
        idx.swap(i, j);
    }
    let mut z = vec![f32::NEG_INFINITY; k];
    for &i in &idx[..size] {
        z[i] = 0.0;
    }
    (z, idx[rng.random_range(0..size)])
}

const POS: [PosClass; 6] = [
    PosClass::NN,
    PosClass::NN,
    PosClass::VERB,
    PosClass::ADJ,
    PosClass::ADV,
    PosClass::CC,
];

pub fn generate_corpus(cfg: &CorpusConfig) -> Result<SyntheticCorpus> {
    if cfg.vocab < 2 || cfg.articles == 0 || cfg.words_per_article == 0 {
        return Err(Error::invalid("synthetic corpus needs vocab >= 2 and at least one word"));
    }
    let t_true = Temperature::new(cfg.true_t)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let std = Normal::new(0.0, 1.0).unwrap();
    let mut archive = InMemoryArchive::new(cfg.vocab)?;
    let mut words = Vec::new();
    let mut true_surprisal = Vec::new();
    let mut token = 0u64;
    for a in 0..cfg.articles {
        for pos in 0..cfg.words_per_article {
            let word_id = words.len() as u32;
            let n_tokens = if rng.random_bool(cfg.multi_token_rate) {
                rng.random_range(2..=3)
            } else {
                1
            };
            let is_ne = rng.random_bool(cfg.ne_rate);
            let mut s = 0.0;
            for _ in 0..n_tokens {
                let (z, gold) = if is_ne && cfg.overconfident_ne {
                    peaked_token(&mut rng, cfg.vocab)
                } else if n_tokens == 1 && cfg.signal == Signal::MultiTokenOnly {
                    uniform_support_token(&mut rng, cfg.vocab)
                } else {
                    free_token(&mut rng, cfg.vocab)
                };
                s += surprisal_t(&LogitVector::from_f32(&z)?, gold, t_true)?.bits;
                archive.push(gold, word_id, &z)?;
            }
            let length = (2 * n_tokens + rng.random_range(0..4)) as u32;
            words.push(WordRecord {
                word_id,
                text: if is_ne {
                    format!("Name{}", rng.random_range(0..8))
                } else {
                    format!("w{}", rng.random_range(0..40))
                },
                article_id: format!("a{a:02}"),
                position: pos as u32,
                token_start: token,
                token_end: token + n_tokens as u64,
                length,
                log_freq: -(length as f64) * 0.8 + std.sample(&mut rng),
                is_ne: Some(is_ne),
                pos_class: Some(if is_ne { PosClass::NN } else { POS[rng.random_range(0..POS.len())] }),
                zones: cfg.zones.then_some(Zones {
                    screen: Some((pos / 10) as i64),
                    line: Some((pos / 5) as i64),
                    segment: Some((pos / 3) as i64),
                }),
            });
            true_surprisal.push(s);
            token += n_tokens as u64;
        }
    }

    let subj: Vec<f64> = (0..cfg.subjects).map(|_| std.sample(&mut rng) * cfg.subject_sd).collect();
    let art: Vec<f64> = (0..cfg.articles).map(|_| std.sample(&mut rng) * cfg.article_sd).collect();
    let mut rts = Vec::new();
    for (i, w) in words.iter().enumerate() {
        let a = i / cfg.words_per_article;
        for (s, u) in subj.iter().enumerate() {
            let rt = 250.0 + cfg.slope * true_surprisal[i] + 6.0 * w.length as f64 - 4.0 * w.log_freq
                + art[a]
                + u
                + std.sample(&mut rng) * cfg.noise_sd;
            rts.push(RtObservation {
                word_id: w.word_id,
                subj_id: format!("s{s}"),
                rt_ms: rt.clamp(100.0, 3000.0),
            });
        }
    }
    Ok(SyntheticCorpus {
        archive,
        words,
        rts,
        true_surprisal,
    })
}

/// A token stream whose gold labels are drawn from the model's own
/// distribution, so it is calibrated by construction.
pub fn calibrated_stream(seed: u64, n: usize, k: usize) -> Result<InMemoryArchive> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut a = InMemoryArchive::new(k)?;
    for i in 0..n {
        let (z, gold) = free_token(&mut rng, k);
        a.push(gold, i as u32, &z)?;
    }
    Ok(a)
}
