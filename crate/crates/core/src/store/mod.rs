//! On-disk formats: the logit archive, the word table and the reading-time
//! table. See `docs/FORMATS.md` for the byte-level description.

mod archive;
mod tables;

pub use archive::{
    ArchiveWriter, Dtype, InMemoryArchive, LogitArchive, TokenSource, HEADER_LEN, MAGIC, VERSION,
};
pub use tables::{
    load_tables, read_rts, read_words, validate_spans, write_rts, write_words, PosClass,
    RtObservation, Tables, WordRecord, Zones, RT_HEADER, RT_MAX_MS, RT_MIN_MS, WORDS_FORMAT,
    WORDS_VERSION,
};
