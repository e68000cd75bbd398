use std::collections::{BTreeSet, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distrib::{LogitVector, Temperature};
use crate::error::{Error, Result};
use crate::lme::{DataTable, LmeSpec, RandomTerm};
use crate::store::{RtObservation, TokenSource, WordRecord};

/// Which words have their tokens temperature-scaled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scope {
    All,
    Single,
    Multi,
}

impl Scope {
    pub fn includes(self, n_tokens: usize) -> bool {
        match self {
            Scope::All => true,
            Scope::Single => n_tokens == 1,
            Scope::Multi => n_tokens > 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelVariant {
    /// Surprisal terms plus `freq * length` interactions.
    Model1,
    /// No interactions.
    Model2,
    /// No interactions, and a by-subject random slope for surprisal in the
    /// target model.
    Model3,
    /// No baseline predictors; the target adds surprisal alone.
    SurprisalOnly,
}

pub const ZONE_COLUMNS: [&str; 3] = ["screenN", "lineN", "segmentN"];

impl ModelVariant {
    /// `(base, target)` formulas. Zone columns are added to both when
    /// `zones` is set.
    pub fn specs(self, zones: bool) -> (LmeSpec, LmeSpec) {
        let mut base = LmeSpec::new("rt");
        match self {
            ModelVariant::Model1 => {
                base = base.crossed("freq", "length").crossed("freq_prev_1", "length_prev_1");
            }
            ModelVariant::Model2 | ModelVariant::Model3 => {
                for c in ["freq", "length", "freq_prev_1", "length_prev_1"] {
                    base = base.main(c);
                }
            }
            ModelVariant::SurprisalOnly => {}
        }
        if zones {
            for z in ZONE_COLUMNS {
                base = base.main(z);
            }
        }
        let mut target = LmeSpec::new("rt");
        if self == ModelVariant::SurprisalOnly {
            target = target.main("surprisal");
        } else {
            target = target.main("surprisal").main("surprisal_prev_1").main("surprisal_prev_2");
        }
        target.fixed.extend(base.fixed.iter().cloned());
        base = base
            .random(RandomTerm::intercept("article"))
            .random(RandomTerm::intercept("subj_id"));
        target = target.random(RandomTerm::intercept("article"));
        target = target.random(if self == ModelVariant::Model3 {
            RandomTerm::slope("subj_id", "surprisal")
        } else {
            RandomTerm::intercept("subj_id")
        });
        (base, target)
    }
}

/// Per-word surprisal at each temperature, row-major `[word][t]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SurprisalTable {
    pub temps: Vec<Temperature>,
    values: Vec<f64>,
    /// Words whose surprisal hit the floor at some temperature.
    pub saturated_words: usize,
}

impl SurprisalTable {
    pub fn get(&self, word: usize, t: usize) -> f64 {
        self.values[word * self.temps.len() + t]
    }

    pub fn column(&self, t: usize) -> Vec<f64> {
        let nt = self.temps.len();
        self.values.iter().skip(t).step_by(nt).copied().collect()
    }

    pub fn n_words(&self) -> usize {
        self.values.len() / self.temps.len().max(1)
    }
}

/// An archive together with its word and reading-time tables.
pub struct Corpus<'a> {
    source: &'a dyn TokenSource,
    words: Vec<WordRecord>,
    rts: Vec<RtObservation>,
    /// Rank of each word within its article.
    rank: Vec<usize>,
}

impl<'a> Corpus<'a> {
    pub fn new(source: &'a dyn TokenSource, words: &[WordRecord], rts: &[RtObservation]) -> Result<Self> {
        let mut words = words.to_vec();
        words.sort_by(|a, b| (&a.article_id, a.position).cmp(&(&b.article_id, b.position)));
        let n_tok = source.token_count();
        let mut ids = HashMap::new();
        for w in &words {
            if w.token_end <= w.token_start || w.token_end > n_tok as u64 {
                return Err(Error::invalid(format!(
                    "word {} spans tokens [{}, {}) in an archive of {n_tok}",
                    w.word_id, w.token_start, w.token_end
                )));
            }
            for i in w.tokens() {
                if source.word_id(i) != w.word_id {
                    return Err(Error::invalid(format!(
                        "archive token {i} belongs to word {}, word table says {}",
                        source.word_id(i),
                        w.word_id
                    )));
                }
            }
            if ids.insert(w.word_id, ()).is_some() {
                return Err(Error::invalid(format!("duplicate word_id {}", w.word_id)));
            }
        }
        for r in rts {
            if !ids.contains_key(&r.word_id) {
                return Err(Error::invalid(format!("reading time for unknown word {}", r.word_id)));
            }
        }
        let mut rank = Vec::with_capacity(words.len());
        for (i, w) in words.iter().enumerate() {
            let r = if i > 0 && words[i - 1].article_id == w.article_id {
                rank[i - 1] + 1
            } else {
                0
            };
            rank.push(r);
        }
        Ok(Self {
            source,
            words,
            rts: rts.to_vec(),
            rank,
        })
    }

    pub fn source(&self) -> &'a dyn TokenSource {
        self.source
    }

    /// Words sorted by `(article_id, position)`.
    pub fn words(&self) -> &[WordRecord] {
        &self.words
    }

    pub fn rts(&self) -> &[RtObservation] {
        &self.rts
    }

    /// Whether every word carries all three zone fields.
    pub fn has_zones(&self) -> bool {
        !self.words.is_empty()
            && self.words.iter().all(|w| {
                w.zones
                    .is_some_and(|z| z.screen.is_some() && z.line.is_some() && z.segment.is_some())
            })
    }

    /// Word surprisal (sum over the word's tokens) at every temperature.
    /// Words outside `scope` keep their unscaled surprisal.
    pub fn word_surprisals(&self, temps: &[Temperature], scope: Scope) -> Result<SurprisalTable> {
        let nt = temps.len();
        let rows: Vec<(Vec<f64>, bool)> = self
            .words
            .par_iter()
            .map(|w| {
                let scaled = scope.includes(w.n_tokens());
                let mut sums = vec![0.0; nt];
                let mut unit = 0.0;
                let mut saturated = false;
                let mut buf = Vec::with_capacity(self.source.vocab_size());
                for i in w.tokens() {
                    self.source.logits_into(i, &mut buf);
                    let z = LogitVector::new(std::mem::take(&mut buf))?;
                    let gold = self.source.gold(i);
                    if scaled {
                        for (k, &t) in temps.iter().enumerate() {
                            let s = crate::distrib::surprisal_t(&z, gold, t)?;
                            saturated |= s.saturated;
                            sums[k] += s.bits;
                        }
                    } else {
                        let s = crate::distrib::surprisal(&z, gold)?;
                        saturated |= s.saturated;
                        unit += s.bits;
                    }
                    buf = z.into_inner();
                }
                if !scaled {
                    sums.iter_mut().for_each(|v| *v = unit);
                }
                Ok((sums, saturated))
            })
            .collect::<Result<Vec<_>>>()?;
        let saturated_words = rows.iter().filter(|r| r.1).count();
        Ok(SurprisalTable {
            temps: temps.to_vec(),
            values: rows.into_iter().flat_map(|r| r.0).collect(),
            saturated_words,
        })
    }

    /// Regression rows: one per reading time, skipping the first two words
    /// of each article, which lack lagged predictors.
    pub fn observations(&self) -> Result<Observations> {
        let index: HashMap<u32, usize> = self.words.iter().enumerate().map(|(i, w)| (w.word_id, i)).collect();
        let mut rows: Vec<(usize, &RtObservation)> = self
            .rts
            .iter()
            .map(|r| (index[&r.word_id], r))
            .filter(|(w, _)| self.rank[*w] >= 2)
            .collect();
        rows.sort_by(|a, b| (a.0, &a.1.subj_id).cmp(&(b.0, &b.1.subj_id)));
        if rows.is_empty() {
            return Err(Error::invalid("no reading times left after dropping article-initial words"));
        }
        let word_idx: Vec<usize> = rows.iter().map(|r| r.0).collect();
        let col = |f: &dyn Fn(&WordRecord) -> f64, lag: usize| -> Vec<f64> {
            word_idx.iter().map(|&w| f(&self.words[w - lag])).collect()
        };
        let mut base = DataTable::new();
        base.add_numeric("rt", rows.iter().map(|r| r.1.rt_ms).collect())?;
        base.add_numeric("freq", col(&|w| w.log_freq, 0))?;
        base.add_numeric("length", col(&|w| w.length as f64, 0))?;
        base.add_numeric("freq_prev_1", col(&|w| w.log_freq, 1))?;
        base.add_numeric("length_prev_1", col(&|w| w.length as f64, 1))?;
        if self.has_zones() {
            base.add_numeric(ZONE_COLUMNS[0], col(&|w| w.zones.unwrap().screen.unwrap() as f64, 0))?;
            base.add_numeric(ZONE_COLUMNS[1], col(&|w| w.zones.unwrap().line.unwrap() as f64, 0))?;
            base.add_numeric(ZONE_COLUMNS[2], col(&|w| w.zones.unwrap().segment.unwrap() as f64, 0))?;
        }
        base.add_factor("article", word_idx.iter().map(|&w| self.words[w].article_id.clone()).collect())?;
        base.add_factor("subj_id", rows.iter().map(|r| r.1.subj_id.clone()).collect())?;
        Ok(Observations {
            word_ids: word_idx.iter().map(|&w| self.words[w].word_id).collect(),
            word_idx,
            base,
        })
    }
}

/// Regression rows shared by every fit of a sweep.
#[derive(Debug, Clone)]
pub struct Observations {
    /// Index into [`Corpus::words`] for each row.
    pub word_idx: Vec<usize>,
    pub word_ids: Vec<u32>,
    base: DataTable,
}

impl Observations {
    pub fn len(&self) -> usize {
        self.word_idx.len()
    }

    pub fn is_empty(&self) -> bool {
        self.word_idx.is_empty()
    }

    pub fn base_table(&self) -> &DataTable {
        &self.base
    }

    /// The base columns plus `surprisal`, `surprisal_prev_1` and
    /// `surprisal_prev_2` taken from per-word values.
    pub fn table_with(&self, word_surprisal: &[f64]) -> Result<DataTable> {
        let mut t = self.base.clone();
        for (lag, name) in ["surprisal", "surprisal_prev_1", "surprisal_prev_2"].iter().enumerate() {
            t.add_numeric(*name, self.word_idx.iter().map(|&w| word_surprisal[w - lag]).collect())?;
        }
        Ok(t)
    }

    /// Rows whose word is in `ids`.
    pub fn rows_for(&self, ids: &BTreeSet<u32>) -> Vec<usize> {
        (0..self.len()).filter(|&i| ids.contains(&self.word_ids[i])).collect()
    }
}
