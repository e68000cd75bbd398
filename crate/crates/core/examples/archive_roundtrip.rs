//! Writes a small logit archive in both encodings, reopens it through the
//! memory map and reads surprisals back.
//!
//! cargo run --example archive_roundtrip -- [dir]

use tempsurp::distrib::Temperature;
use tempsurp::store::{ArchiveWriter, Dtype, LogitArchive, TokenSource, HEADER_LEN};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::args().nth(1).unwrap_or_else(|| std::env::temp_dir().display().to_string());
    let k = 8;
    for dtype in [Dtype::F32, Dtype::F16] {
        let path = std::path::Path::new(&dir).join(format!("roundtrip-{dtype:?}.scla").to_lowercase());
        let mut w = ArchiveWriter::create(&path, k, dtype)?;
        for i in 0..5u32 {
            let logits: Vec<f32> = (0..k).map(|j| ((i as usize + 1) * j) as f32 * 0.25 - 1.0).collect();
            w.push(i % k as u32, i / 2, &logits)?;
        }
        w.finish()?;

        let a = LogitArchive::open(&path)?;
        let bytes = std::fs::metadata(&path)?;
        println!(
            "{}: {} tokens, K = {}, {} bytes (header {HEADER_LEN})",
            path.display(),
            a.token_count(),
            a.vocab_size(),
            bytes.len()
        );
        let temps = [Temperature::new(1.0)?, Temperature::new(2.0)?];
        let mut buf = Vec::new();
        for i in 0..a.token_count() {
            let s = a.surprisals(i, &temps, &mut buf)?;
            println!(
                "  token {i}: word {} gold {}  s1 {:.4}  s2 {:.4}",
                a.word_id(i),
                a.gold(i),
                s[0].bits,
                s[1].bits
            );
        }
    }
    Ok(())
}
