use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const WORDS_FORMAT: &str = "tempsurp-words";
pub const WORDS_VERSION: u32 = 1;
pub const RT_HEADER: &str = "# tempsurp-rts v1";
pub const RT_MIN_MS: f64 = 100.0;
pub const RT_MAX_MS: f64 = 3000.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PosClass {
    NN,
    ADJ,
    VERB,
    ADV,
    CC,
    OTHER,
}

impl PosClass {
    pub const ALL: [PosClass; 6] = [
        PosClass::NN,
        PosClass::ADJ,
        PosClass::VERB,
        PosClass::ADV,
        PosClass::CC,
        PosClass::OTHER,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PosClass::NN => "NN",
            PosClass::ADJ => "ADJ",
            PosClass::VERB => "VERB",
            PosClass::ADV => "ADV",
            PosClass::CC => "CC",
            PosClass::OTHER => "OTHER",
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Zones {
    #[serde(rename = "screenN", default, skip_serializing_if = "Option::is_none")]
    pub screen: Option<i64>,
    #[serde(rename = "lineN", default, skip_serializing_if = "Option::is_none")]
    pub line: Option<i64>,
    #[serde(rename = "segmentN", default, skip_serializing_if = "Option::is_none")]
    pub segment: Option<i64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WordRecord {
    pub word_id: u32,
    pub text: String,
    pub article_id: String,
    pub position: u32,
    /// First archive token of the word.
    pub token_start: u64,
    /// One past the last archive token.
    pub token_end: u64,
    pub length: u32,
    pub log_freq: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub is_ne: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pos_class: Option<PosClass>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub zones: Option<Zones>,
}

impl WordRecord {
    pub fn n_tokens(&self) -> usize {
        (self.token_end - self.token_start) as usize
    }

    pub fn tokens(&self) -> std::ops::Range<usize> {
        self.token_start as usize..self.token_end as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RtObservation {
    pub word_id: u32,
    pub subj_id: String,
    pub rt_ms: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct WordsHeader {
    format: String,
    version: u32,
}

fn ingest(path: &Path, line: u64, message: impl Into<String>) -> Error {
    Error::Ingest {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

pub fn write_words(path: impl AsRef<Path>, words: &[WordRecord]) -> Result<()> {
    let path = path.as_ref();
    let io = |e| Error::io(path, e);
    let mut out = BufWriter::new(File::create(path).map_err(io)?);
    let header = WordsHeader {
        format: WORDS_FORMAT.into(),
        version: WORDS_VERSION,
    };
    writeln!(out, "{}", serde_json::to_string(&header).unwrap()).map_err(io)?;
    for w in words {
        writeln!(out, "{}", serde_json::to_string(w).map_err(|e| Error::invalid(e.to_string()))?)
            .map_err(io)?;
    }
    out.flush().map_err(io)
}

/// Reads a word table in file order. Line numbers in errors are 1-based.
pub fn read_words(path: impl AsRef<Path>) -> Result<Vec<WordRecord>> {
    Ok(read_words_numbered(path.as_ref())?.into_iter().map(|(_, w)| w).collect())
}

fn read_words_numbered(path: &Path) -> Result<Vec<(u64, WordRecord)>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = BufReader::new(file).lines();
    let first = lines
        .next()
        .ok_or_else(|| ingest(path, 1, "missing header line"))?
        .map_err(|e| Error::io(path, e))?;
    let header: WordsHeader =
        serde_json::from_str(&first).map_err(|e| ingest(path, 1, format!("bad header: {e}")))?;
    if header.format != WORDS_FORMAT || header.version != WORDS_VERSION {
        return Err(ingest(
            path,
            1,
            format!("expected {WORDS_FORMAT} v{WORDS_VERSION}, found {} v{}", header.format, header.version),
        ));
    }
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        let n = i as u64 + 2;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let w: WordRecord = serde_json::from_str(&line).map_err(|e| ingest(path, n, e.to_string()))?;
        if w.token_end <= w.token_start {
            return Err(ingest(path, n, format!("word {} has an empty token span", w.word_id)));
        }
        if !w.log_freq.is_finite() {
            return Err(ingest(path, n, format!("word {} has non-finite log_freq", w.word_id)));
        }
        out.push((n, w));
    }
    Ok(out)
}

pub fn write_rts(path: impl AsRef<Path>, rts: &[RtObservation]) -> Result<()> {
    let path = path.as_ref();
    let io = |e| Error::io(path, e);
    let mut out = BufWriter::new(File::create(path).map_err(io)?);
    writeln!(out, "{RT_HEADER}").map_err(io)?;
    {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(&mut out);
        w.write_record(["word_id", "subj_id", "rt_ms"]).map_err(|e| Error::invalid(e.to_string()))?;
        for r in rts {
            w.serialize(r).map_err(|e| Error::invalid(e.to_string()))?;
        }
        w.flush().map_err(io)?;
    }
    out.flush().map_err(io)
}

pub fn read_rts(path: impl AsRef<Path>) -> Result<Vec<RtObservation>> {
    Ok(read_rts_numbered(path.as_ref())?.into_iter().map(|(_, r)| r).collect())
}

fn read_rts_numbered(path: &Path) -> Result<Vec<(u64, RtObservation)>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    if text.trim().is_empty() {
        return Ok(Vec::new());
    }
    let (first, rest) = text.split_once('\n').unwrap_or((&text, ""));
    if first.trim_end() != RT_HEADER {
        return Err(ingest(path, 1, format!("expected `{RT_HEADER}`")));
    }
    let mut reader = csv::ReaderBuilder::new().from_reader(rest.as_bytes());
    let cols = reader.headers().map_err(|e| ingest(path, 2, e.to_string()))?.clone();
    if cols.iter().collect::<Vec<_>>() != ["word_id", "subj_id", "rt_ms"] && !cols.is_empty() {
        return Err(ingest(path, 2, "columns must be word_id,subj_id,rt_ms"));
    }
    let mut numbered = Vec::new();
    let mut record = csv::StringRecord::new();
    loop {
        // positions count from the line after the version header
        let more = reader.read_record(&mut record).map_err(|e| {
            ingest(path, e.position().map_or(0, |p| p.line() + 1), e.to_string())
        })?;
        if !more {
            break;
        }
        let line = record.position().map_or(0, |p| p.line() + 1);
        let r: RtObservation = record
            .deserialize(Some(&cols))
            .map_err(|e| ingest(path, line, e.to_string()))?;
        numbered.push((line, r));
    }
    for (line, r) in &numbered {
        if !(r.rt_ms.is_finite() && (RT_MIN_MS..=RT_MAX_MS).contains(&r.rt_ms)) {
            return Err(ingest(
                path,
                *line,
                format!("rt_ms {} outside [{RT_MIN_MS}, {RT_MAX_MS}]", r.rt_ms),
            ));
        }
    }
    Ok(numbered)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tables {
    /// Sorted by `(article_id, position)`.
    pub words: Vec<WordRecord>,
    pub rts: Vec<RtObservation>,
}

impl Tables {
    pub fn index_of(&self) -> HashMap<u32, usize> {
        self.words.iter().enumerate().map(|(i, w)| (w.word_id, i)).collect()
    }
}

/// Loads both tables and checks referential integrity.
pub fn load_tables(words_path: impl AsRef<Path>, rts_path: impl AsRef<Path>) -> Result<Tables> {
    let (wp, rp) = (words_path.as_ref(), rts_path.as_ref());
    let words = read_words_numbered(wp)?;
    let mut ids = HashMap::new();
    let mut places = HashMap::new();
    for (line, w) in &words {
        if let Some(prev) = ids.insert(w.word_id, *line) {
            return Err(ingest(wp, *line, format!("word_id {} already defined on line {prev}", w.word_id)));
        }
        if let Some(prev) = places.insert((w.article_id.clone(), w.position), *line) {
            return Err(ingest(
                wp,
                *line,
                format!("article {} position {} already used on line {prev}", w.article_id, w.position),
            ));
        }
    }
    let mut by_start: Vec<&(u64, WordRecord)> = words.iter().collect();
    by_start.sort_by_key(|(_, w)| w.token_start);
    for pair in by_start.windows(2) {
        let ((_, a), (line, b)) = (pair[0], pair[1]);
        if b.token_start < a.token_end {
            return Err(ingest(
                wp,
                *line,
                format!("token span of word {} overlaps word {}", b.word_id, a.word_id),
            ));
        }
    }

    let rts = read_rts_numbered(rp)?;
    let mut seen = HashSet::new();
    for (line, r) in &rts {
        if !ids.contains_key(&r.word_id) {
            return Err(ingest(rp, *line, format!("unknown word_id {}", r.word_id)));
        }
        if !seen.insert((r.word_id, r.subj_id.as_str())) {
            return Err(ingest(
                rp,
                *line,
                format!("duplicate observation for word {} subject {}", r.word_id, r.subj_id),
            ));
        }
    }

    let mut words: Vec<WordRecord> = words.into_iter().map(|(_, w)| w).collect();
    words.sort_by(|a, b| (&a.article_id, a.position).cmp(&(&b.article_id, b.position)));
    Ok(Tables {
        words,
        rts: rts.into_iter().map(|(_, r)| r).collect(),
    })
}

/// Checks that every span lies inside an archive of `token_count` tokens.
pub fn validate_spans(words: &[WordRecord], token_count: usize) -> Result<()> {
    for w in words {
        if w.token_end > token_count as u64 {
            return Err(Error::invalid(format!(
                "word {} spans tokens [{}, {}) but the archive has {token_count}",
                w.word_id, w.token_start, w.token_end
            )));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn word(id: u32, article: &str, pos: u32, start: u64, end: u64) -> WordRecord {
        WordRecord {
            word_id: id,
            text: format!("w{id}"),
            article_id: article.into(),
            position: pos,
            token_start: start,
            token_end: end,
            length: 2,
            log_freq: -3.0,
            is_ne: None,
            pos_class: None,
            zones: None,
        }
    }

    fn words10() -> Vec<WordRecord> {
        (0..10).map(|i| word(i, if i < 5 { "b" } else { "a" }, i % 5, i as u64, i as u64 + 1)).collect()
    }

    #[test]
    fn ten_words_three_subjects() {
        let dir = tempfile::tempdir().unwrap();
        let (wp, rp) = (dir.path().join("w.ndjson"), dir.path().join("r.csv"));
        write_words(&wp, &words10()).unwrap();
        let rts: Vec<RtObservation> = (0..10)
            .flat_map(|w| {
                (0..3).map(move |s| RtObservation {
                    word_id: w,
                    subj_id: format!("s{s}"),
                    rt_ms: 200.0 + w as f64,
                })
            })
            .collect();
        write_rts(&rp, &rts).unwrap();
        let t = load_tables(&wp, &rp).unwrap();
        assert_eq!(t.rts.len(), 30);
        assert_eq!(t.rts, rts);
        assert_eq!(t.words[0].article_id, "a");
        assert_eq!(t.words[0].position, 0);
        assert_eq!(t.words[9].word_id, 4);
    }

    #[test]
    fn empty_rt_file_is_valid() {
        let dir = tempfile::tempdir().unwrap();
        let (wp, rp) = (dir.path().join("w.ndjson"), dir.path().join("r.csv"));
        write_words(&wp, &words10()).unwrap();
        std::fs::write(&rp, "").unwrap();
        assert!(load_tables(&wp, &rp).unwrap().rts.is_empty());
        write_rts(&rp, &[]).unwrap();
        assert!(load_tables(&wp, &rp).unwrap().rts.is_empty());
    }

    #[test]
    fn reports_offending_lines() {
        let dir = tempfile::tempdir().unwrap();
        let (wp, rp) = (dir.path().join("w.ndjson"), dir.path().join("r.csv"));
        write_words(&wp, &words10()).unwrap();
        std::fs::write(&rp, format!("{RT_HEADER}\nword_id,subj_id,rt_ms\n1,s1,300\n999,s1,300\n")).unwrap();
        match load_tables(&wp, &rp).unwrap_err() {
            Error::Ingest { line, message, .. } => {
                assert_eq!(line, 4);
                assert!(message.contains("999"));
            }
            e => panic!("{e}"),
        }
        std::fs::write(&rp, format!("{RT_HEADER}\nword_id,subj_id,rt_ms\n1,s1,300\n1,s1,310\n")).unwrap();
        assert!(matches!(load_tables(&wp, &rp), Err(Error::Ingest { line: 4, .. })));
        std::fs::write(&rp, format!("{RT_HEADER}\nword_id,subj_id,rt_ms\n1,s1,50\n")).unwrap();
        assert!(matches!(load_tables(&wp, &rp), Err(Error::Ingest { line: 3, .. })));

        let mut ws = words10();
        ws[3].token_end = 5;
        write_words(&wp, &ws).unwrap();
        write_rts(&rp, &[]).unwrap();
        assert!(matches!(load_tables(&wp, &rp), Err(Error::Ingest { line: 6, .. })));
        let mut ws = words10();
        ws[7].word_id = 2;
        write_words(&wp, &ws).unwrap();
        assert!(matches!(load_tables(&wp, &rp), Err(Error::Ingest { line: 9, .. })));
    }

    #[test]
    fn metadata_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let wp = dir.path().join("w.ndjson");
        let mut w = word(3, "x", 0, 0, 2);
        w.is_ne = Some(true);
        w.pos_class = Some(PosClass::ADV);
        w.zones = Some(Zones {
            screen: Some(1),
            line: Some(4),
            segment: None,
        });
        write_words(&wp, std::slice::from_ref(&w)).unwrap();
        let text = std::fs::read_to_string(&wp).unwrap();
        assert!(text.contains("\"lineN\":4"));
        assert_eq!(read_words(&wp).unwrap(), vec![w]);
    }
}
