use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use half::f16;
use memmap2::Mmap;

use crate::distrib::{surprisal_t, LogitVector, Surprisal, Temperature};
use crate::error::{Error, Result};

pub const MAGIC: [u8; 4] = *b"SCLA";
pub const VERSION: u32 = 1;
/// Header bytes before the first token record. The last 8 are reserved and
/// written as zero.
pub const HEADER_LEN: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum Dtype {
    F32 = 0,
    F16 = 1,
}

impl Dtype {
    pub fn width(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F16 => 2,
        }
    }

    fn from_byte(b: u8) -> Option<Self> {
        match b {
            0 => Some(Dtype::F32),
            1 => Some(Dtype::F16),
            _ => None,
        }
    }
}

/// Random access to a stream of `(gold, word_id, logits)` token records.
pub trait TokenSource: Sync {
    fn vocab_size(&self) -> usize;
    fn token_count(&self) -> usize;
    fn gold(&self, i: usize) -> usize;
    fn word_id(&self, i: usize) -> u32;
    /// Decodes the logits of token `i` into `buf`, replacing its contents.
    fn logits_into(&self, i: usize, buf: &mut Vec<f64>);

    fn logit_vector(&self, i: usize) -> Result<LogitVector> {
        let mut buf = Vec::with_capacity(self.vocab_size());
        self.logits_into(i, &mut buf);
        LogitVector::new(buf)
    }

    /// Surprisal of token `i` at each temperature, decoding the logits once.
    fn surprisals(&self, i: usize, temps: &[Temperature], buf: &mut Vec<f64>) -> Result<Vec<Surprisal>> {
        self.logits_into(i, buf);
        let z = LogitVector::new(std::mem::take(buf))?;
        let gold = self.gold(i);
        let out = temps
            .iter()
            .map(|&t| surprisal_t(&z, gold, t))
            .collect::<Result<Vec<_>>>();
        *buf = z.into_inner();
        out
    }
}

/// A read-only memory-mapped archive.
pub struct LogitArchive {
    map: Mmap,
    path: PathBuf,
    dtype: Dtype,
    k: usize,
    count: usize,
}

impl std::fmt::Debug for LogitArchive {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LogitArchive")
            .field("path", &self.path)
            .field("dtype", &self.dtype)
            .field("k", &self.k)
            .field("count", &self.count)
            .finish()
    }
}

fn corrupt(offset: u64, reason: impl Into<String>) -> Error {
    Error::CorruptArchive {
        offset,
        reason: reason.into(),
    }
}

fn le_u32(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(b[at..at + 4].try_into().unwrap())
}

impl LogitArchive {
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        // SAFETY: archives are never modified after creation; the map is
        // read-only and every access is bounds-checked against the header.
        let map = unsafe { Mmap::map(&file) }.map_err(|e| Error::io(path, e))?;
        let (dtype, k, count) = validate(&map)?;
        Ok(Self {
            map,
            path: path.to_path_buf(),
            dtype,
            k,
            count,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn dtype(&self) -> Dtype {
        self.dtype
    }

    fn stride(&self) -> usize {
        8 + self.k * self.dtype.width()
    }

    fn record(&self, i: usize) -> &[u8] {
        assert!(i < self.count, "token {i} out of range for {} tokens", self.count);
        let s = HEADER_LEN + i * self.stride();
        &self.map[s..s + self.stride()]
    }

    /// Raw f32 logits of token `i` (f16 archives are widened).
    pub fn logits_f32(&self, i: usize) -> Vec<f32> {
        let r = &self.record(i)[8..];
        match self.dtype {
            Dtype::F32 => r
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect(),
            Dtype::F16 => r
                .chunks_exact(2)
                .map(|c| f16::from_le_bytes(c.try_into().unwrap()).to_f32())
                .collect(),
        }
    }
}

fn validate(b: &[u8]) -> Result<(Dtype, usize, usize)> {
    if b.len() < HEADER_LEN {
        return Err(corrupt(b.len() as u64, format!("file is {} bytes, header needs {HEADER_LEN}", b.len())));
    }
    if b[0..4] != MAGIC {
        return Err(corrupt(0, "bad magic"));
    }
    let version = le_u32(b, 4);
    if version != VERSION {
        return Err(corrupt(4, format!("unsupported version {version}")));
    }
    let dtype = Dtype::from_byte(b[8]).ok_or_else(|| corrupt(8, format!("unknown dtype {}", b[8])))?;
    let k = le_u32(b, 12) as usize;
    if k < 2 {
        return Err(corrupt(12, format!("vocabulary size {k} < 2")));
    }
    let count = u64::from_le_bytes(b[16..24].try_into().unwrap());
    let stride = 8 + k as u64 * dtype.width() as u64;
    let want = count
        .checked_mul(stride)
        .and_then(|v| v.checked_add(HEADER_LEN as u64))
        .ok_or_else(|| corrupt(16, "token count overflows"))?;
    let have = b.len() as u64;
    if have < want {
        let complete = (have - HEADER_LEN as u64) / stride;
        return Err(corrupt(
            HEADER_LEN as u64 + complete * stride,
            format!("truncated: header promises {count} tokens, file holds {complete} complete records"),
        ));
    }
    if have > want {
        return Err(corrupt(want, format!("{} trailing bytes", have - want)));
    }
    let (count, stride) = (count as usize, stride as usize);
    for i in 0..count {
        let at = HEADER_LEN + i * stride;
        let gold = le_u32(b, at) as usize;
        if gold >= k {
            return Err(corrupt(at as u64, format!("token {i}: gold id {gold} >= K = {k}")));
        }
    }
    Ok((dtype, k, count))
}

impl TokenSource for LogitArchive {
    fn vocab_size(&self) -> usize {
        self.k
    }

    fn token_count(&self) -> usize {
        self.count
    }

    fn gold(&self, i: usize) -> usize {
        le_u32(self.record(i), 0) as usize
    }

    fn word_id(&self, i: usize) -> u32 {
        le_u32(self.record(i), 4)
    }

    fn logits_into(&self, i: usize, buf: &mut Vec<f64>) {
        buf.clear();
        let r = &self.record(i)[8..];
        match self.dtype {
            Dtype::F32 => buf.extend(
                r.chunks_exact(4)
                    .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64),
            ),
            Dtype::F16 => buf.extend(
                r.chunks_exact(2)
                    .map(|c| f16::from_le_bytes(c.try_into().unwrap()).to_f64()),
            ),
        }
    }
}

/// Streams token records to disk. The token count in the header is patched
/// by [`ArchiveWriter::finish`]; an unfinished file fails validation.
pub struct ArchiveWriter {
    out: BufWriter<File>,
    path: PathBuf,
    dtype: Dtype,
    k: usize,
    count: u64,
}

impl ArchiveWriter {
    pub fn create(path: impl AsRef<Path>, k: usize, dtype: Dtype) -> Result<Self> {
        let path = path.as_ref();
        if k < 2 || k > u32::MAX as usize {
            return Err(Error::invalid(format!("vocabulary size {k} out of range")));
        }
        let file = OpenOptions::new()
            .write(true)
            .create(true)
            .truncate(false)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        // lock before truncating so a concurrent writer's file is left alone
        file.try_lock()
            .map_err(|e| Error::invalid(format!("{}: archive is being written elsewhere ({e})", path.display())))?;
        file.set_len(0).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        let mut header = [0u8; HEADER_LEN];
        header[0..4].copy_from_slice(&MAGIC);
        header[4..8].copy_from_slice(&VERSION.to_le_bytes());
        header[8] = dtype as u8;
        header[12..16].copy_from_slice(&(k as u32).to_le_bytes());
        out.write_all(&header).map_err(|e| Error::io(path, e))?;
        Ok(Self {
            out,
            path: path.to_path_buf(),
            dtype,
            k,
            count: 0,
        })
    }

    pub fn push(&mut self, gold: u32, word_id: u32, logits: &[f32]) -> Result<()> {
        if logits.len() != self.k {
            return Err(Error::invalid(format!(
                "token {} has {} logits, archive K = {}",
                self.count,
                logits.len(),
                self.k
            )));
        }
        if gold as usize >= self.k {
            return Err(Error::IndexOutOfRange {
                index: gold as usize,
                len: self.k,
            });
        }
        let io = |e| Error::io(&self.path, e);
        self.out.write_all(&gold.to_le_bytes()).map_err(io)?;
        self.out.write_all(&word_id.to_le_bytes()).map_err(io)?;
        match self.dtype {
            Dtype::F32 => {
                for v in logits {
                    self.out.write_all(&v.to_le_bytes()).map_err(io)?;
                }
            }
            Dtype::F16 => {
                for v in logits {
                    self.out.write_all(&f16::from_f32(*v).to_le_bytes()).map_err(io)?;
                }
            }
        }
        self.count += 1;
        Ok(())
    }

    pub fn finish(mut self) -> Result<u64> {
        let io = |e| Error::io(&self.path, e);
        self.out.flush().map_err(io)?;
        let mut file = self.out.into_inner().map_err(|e| Error::io(&self.path, e.into_error()))?;
        file.seek(SeekFrom::Start(16)).map_err(io)?;
        file.write_all(&self.count.to_le_bytes()).map_err(io)?;
        file.sync_all().map_err(io)?;
        Ok(self.count)
    }
}

/// Token records held in memory, for synthetic corpora and tests.
#[derive(Debug, Clone, PartialEq)]
pub struct InMemoryArchive {
    k: usize,
    golds: Vec<u32>,
    word_ids: Vec<u32>,
    logits: Vec<f32>,
}

impl InMemoryArchive {
    pub fn new(k: usize) -> Result<Self> {
        if k < 2 {
            return Err(Error::invalid(format!("vocabulary size {k} < 2")));
        }
        Ok(Self {
            k,
            golds: Vec::new(),
            word_ids: Vec::new(),
            logits: Vec::new(),
        })
    }

    pub fn push(&mut self, gold: usize, word_id: u32, logits: &[f32]) -> Result<()> {
        if logits.len() != self.k {
            return Err(Error::invalid(format!("expected {} logits, got {}", self.k, logits.len())));
        }
        if gold >= self.k {
            return Err(Error::IndexOutOfRange { index: gold, len: self.k });
        }
        self.golds.push(gold as u32);
        self.word_ids.push(word_id);
        self.logits.extend_from_slice(logits);
        Ok(())
    }

    pub fn write(&self, path: impl AsRef<Path>, dtype: Dtype) -> Result<u64> {
        let mut w = ArchiveWriter::create(path, self.k, dtype)?;
        for i in 0..self.golds.len() {
            w.push(self.golds[i], self.word_ids[i], &self.logits[i * self.k..(i + 1) * self.k])?;
        }
        w.finish()
    }
}

impl TokenSource for InMemoryArchive {
    fn vocab_size(&self) -> usize {
        self.k
    }

    fn token_count(&self) -> usize {
        self.golds.len()
    }

    fn gold(&self, i: usize) -> usize {
        self.golds[i] as usize
    }

    fn word_id(&self, i: usize) -> u32 {
        self.word_ids[i]
    }

    fn logits_into(&self, i: usize, buf: &mut Vec<f64>) {
        buf.clear();
        buf.extend(self.logits[i * self.k..(i + 1) * self.k].iter().map(|&v| v as f64));
    }
}
