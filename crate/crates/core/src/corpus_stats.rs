//! Inverse-word-frequency statistics over a general corpus, and the sentence
//! specificity weights derived from them.
//!
//! `iwf(w) = ln(1 + |C|) / f_w`, where `|C|` is the number of corpus sentences
//! and `f_w` the number of sentences containing `w`. The specificity of a
//! sentence is the maximum IWF over its words, and a list of text units is
//! weighted by its specificities normalized to sum to one.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::Exec;
use crate::textproc::{segment_sentences, tokenize_words};
use crate::types::{normalize_weights, CoreError};

pub const FORMAT_VERSION: u8 = 1;
const MAGIC_PREFIX: &[u8; 3] = b"IWF";

/// Lines read per batch when building from a stream.
const STREAM_BATCH: usize = 1 << 16;

#[derive(Debug, Error)]
pub enum StatsError {
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("untokenizable sentence: {0:?}")]
    Untokenizable(String),
    #[error("no text units to weight")]
    NoUnits,
    #[error("malformed header")]
    MalformedHeader,
    #[error("version mismatch: file has version {found}, expected {FORMAT_VERSION}")]
    VersionMismatch { found: u8 },
    #[error("truncated table file")]
    Truncated,
    #[error("corrupt table: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Weights(#[from] CoreError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// How corpus lines map to sentences.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorpusMode {
    /// Each non-empty line is one sentence.
    SentencePerLine,
    /// Each non-empty line is a document that gets segmented.
    #[default]
    Documents,
}

/// Sentence count plus per-word sentence frequencies.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IwfTable {
    corpus_sentence_count: u64,
    frequencies: HashMap<String, u64>,
}

impl IwfTable {
    /// Build from raw counts, checking `1 <= f_w <= |C|`.
    pub fn from_counts(
        corpus_sentence_count: u64,
        frequencies: HashMap<String, u64>,
    ) -> Result<Self, StatsError> {
        if corpus_sentence_count == 0 {
            return Err(StatsError::EmptyCorpus);
        }
        if let Some((w, &f)) = frequencies
            .iter()
            .find(|(_, &f)| f == 0 || f > corpus_sentence_count)
        {
            return Err(StatsError::Corrupt(format!(
                "count {f} for {w:?} outside 1..={corpus_sentence_count}"
            )));
        }
        Ok(Self {
            corpus_sentence_count,
            frequencies,
        })
    }

    pub fn corpus_sentence_count(&self) -> u64 {
        self.corpus_sentence_count
    }

    pub fn vocab_size(&self) -> usize {
        self.frequencies.len()
    }

    /// Sentence frequency of `word` (0 if unseen).
    pub fn frequency(&self, word: &str) -> u64 {
        self.frequencies.get(word).copied().unwrap_or(0)
    }

    pub fn frequencies(&self) -> &HashMap<String, u64> {
        &self.frequencies
    }

    /// Inverse word frequency. Unseen words are floored at `f_w = 1`.
    pub fn iwf(&self, word: &str) -> f64 {
        let f = self.frequency(word).max(1);
        ((1 + self.corpus_sentence_count) as f64).ln() / f as f64
    }

    /// Maximum IWF over the words of `sentence`.
    pub fn isf(&self, sentence: &str) -> Result<f64, StatsError> {
        tokenize_words(sentence)
            .iter()
            .map(|w| self.iwf(w.as_str()))
            .reduce(f64::max)
            .ok_or_else(|| StatsError::Untokenizable(sentence.to_string()))
    }

    /// Specificities of `units` normalized to a distribution.
    pub fn nisf_weights<S: AsRef<str>>(&self, units: &[S]) -> Result<Vec<f64>, StatsError> {
        if units.is_empty() {
            return Err(StatsError::NoUnits);
        }
        let isf = units
            .iter()
            .map(|u| self.isf(u.as_ref()))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(normalize_weights(&isf)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), StatsError> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, StatsError> {
        Self::read_from(BufReader::new(File::open(path)?))
    }

    /// Binary encoding: `"IWF1" | u64 |C| | u64 vocab | (varint len, utf8, u64 count)*`,
    /// integers little-endian, words in sorted order.
    pub fn write_to<W: Write>(&self, mut w: W) -> io::Result<()> {
        w.write_all(MAGIC_PREFIX)?;
        w.write_all(&[b'0' + FORMAT_VERSION])?;
        w.write_all(&self.corpus_sentence_count.to_le_bytes())?;
        w.write_all(&(self.frequencies.len() as u64).to_le_bytes())?;
        let mut words: Vec<_> = self.frequencies.iter().collect();
        words.sort_unstable();
        for (word, count) in words {
            write_varint(&mut w, word.len() as u64)?;
            w.write_all(word.as_bytes())?;
            w.write_all(&count.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self, StatsError> {
        let mut magic = [0u8; 4];
        read_exact_or(&mut r, &mut magic, StatsError::MalformedHeader)?;
        if &magic[..3] != MAGIC_PREFIX || !magic[3].is_ascii_digit() {
            return Err(StatsError::MalformedHeader);
        }
        let version = magic[3] - b'0';
        if version != FORMAT_VERSION {
            return Err(StatsError::VersionMismatch { found: version });
        }
        let corpus = read_u64(&mut r, StatsError::MalformedHeader)?;
        let vocab = read_u64(&mut r, StatsError::MalformedHeader)?;

        let mut frequencies = HashMap::with_capacity(vocab.min(1 << 20) as usize);
        for _ in 0..vocab {
            let len = read_varint(&mut r)?;
            if len > 1 << 20 {
                return Err(StatsError::Corrupt(format!("word length {len}")));
            }
            let mut buf = vec![0u8; len as usize];
            read_exact_or(&mut r, &mut buf, StatsError::Truncated)?;
            let word = String::from_utf8(buf)
                .map_err(|_| StatsError::Corrupt("word is not UTF-8".into()))?;
            let count = read_u64(&mut r, StatsError::Truncated)?;
            if frequencies.insert(word, count).is_some() {
                return Err(StatsError::Corrupt("duplicate word".into()));
            }
        }
        let mut trailing = [0u8; 1];
        if r.read(&mut trailing)? != 0 {
            return Err(StatsError::Corrupt("trailing bytes".into()));
        }
        Self::from_counts(corpus, frequencies)
    }

    /// Debug export as `{"corpus_size": n, "counts": {word: f_w}}`.
    pub fn to_json(&self) -> serde_json::Value {
        let export = JsonExport {
            corpus_size: self.corpus_sentence_count,
            counts: self.frequencies.iter().map(|(k, &v)| (k.clone(), v)).collect(),
        };
        serde_json::to_value(export).expect("plain data serializes")
    }

    pub fn from_json(value: serde_json::Value) -> Result<Self, StatsError> {
        let export: JsonExport =
            serde_json::from_value(value).map_err(|e| StatsError::Corrupt(e.to_string()))?;
        Self::from_counts(export.corpus_size, export.counts.into_iter().collect())
    }
}

#[derive(Serialize, Deserialize)]
struct JsonExport {
    corpus_size: u64,
    counts: BTreeMap<String, u64>,
}

fn read_exact_or<R: Read>(r: &mut R, buf: &mut [u8], eof: StatsError) -> Result<(), StatsError> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => eof,
        _ => StatsError::Io(e),
    })
}

fn read_u64<R: Read>(r: &mut R, eof: StatsError) -> Result<u64, StatsError> {
    let mut b = [0u8; 8];
    read_exact_or(r, &mut b, eof)?;
    Ok(u64::from_le_bytes(b))
}

fn write_varint<W: Write>(w: &mut W, mut v: u64) -> io::Result<()> {
    loop {
        let byte = (v & 0x7f) as u8;
        v >>= 7;
        if v == 0 {
            return w.write_all(&[byte]);
        }
        w.write_all(&[byte | 0x80])?;
    }
}

fn read_varint<R: Read>(r: &mut R) -> Result<u64, StatsError> {
    let mut v = 0u64;
    for shift in (0..64).step_by(7) {
        let mut b = [0u8; 1];
        read_exact_or(r, &mut b, StatsError::Truncated)?;
        v |= u64::from(b[0] & 0x7f) << shift;
        if b[0] & 0x80 == 0 {
            return Ok(v);
        }
    }
    Err(StatsError::Corrupt("varint overflow".into()))
}

/// Single-pass accumulator. Builders over disjoint shards merge exactly.
#[derive(Debug, Clone, Default)]
pub struct IwfBuilder {
    sentences: u64,
    counts: HashMap<String, u64>,
}

impl IwfBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Count one sentence; each distinct word is counted once.
    pub fn add_sentence(&mut self, sentence: &str) {
        self.sentences += 1;
        let distinct: HashSet<_> = tokenize_words(sentence).into_iter().collect();
        for w in distinct {
            *self.counts.entry(w.into_string()).or_default() += 1;
        }
    }

    /// Count one corpus line under `mode`; blank lines are skipped.
    pub fn add_line(&mut self, line: &str, mode: CorpusMode) {
        let line = line.trim();
        if line.is_empty() {
            return;
        }
        match mode {
            CorpusMode::SentencePerLine => self.add_sentence(line),
            CorpusMode::Documents => {
                for s in segment_sentences(line).unwrap_or_default() {
                    self.add_sentence(&s.text);
                }
            }
        }
    }

    pub fn merge(&mut self, other: IwfBuilder) {
        self.sentences += other.sentences;
        for (w, c) in other.counts {
            *self.counts.entry(w).or_default() += c;
        }
    }

    pub fn sentences(&self) -> u64 {
        self.sentences
    }

    pub fn finish(self) -> Result<IwfTable, StatsError> {
        if self.sentences == 0 {
            return Err(StatsError::EmptyCorpus);
        }
        Ok(IwfTable {
            corpus_sentence_count: self.sentences,
            frequencies: self.counts,
        })
    }
}

/// Build a table in one pass over `lines`.
pub fn build_iwf_table<I, S>(lines: I, mode: CorpusMode) -> Result<IwfTable, StatsError>
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    let mut b = IwfBuilder::new();
    for line in lines {
        b.add_line(line.as_ref(), mode);
    }
    b.finish()
}

fn build_shards<S: AsRef<str> + Sync>(
    lines: &[S],
    mode: CorpusMode,
    shards: usize,
    exec: Exec,
) -> IwfBuilder {
    let shards = shards.max(1);
    let chunk = lines.len().div_ceil(shards).max(1);
    let chunks: Vec<&[S]> = lines.chunks(chunk).collect();
    let partial = exec.map(&chunks, |_, chunk| {
        let mut b = IwfBuilder::new();
        for l in chunk.iter() {
            b.add_line(l.as_ref(), mode);
        }
        b
    });
    partial.into_iter().fold(IwfBuilder::new(), |mut acc, b| {
        acc.merge(b);
        acc
    })
}

/// Split `lines` into `shards` contiguous shards, count each independently
/// and merge.
pub fn build_iwf_table_sharded<S: AsRef<str> + Sync>(
    lines: &[S],
    mode: CorpusMode,
    shards: usize,
    exec: Exec,
) -> Result<IwfTable, StatsError> {
    build_shards(lines, mode, shards, exec).finish()
}

/// Stream a corpus from `reader`, holding at most one batch of lines plus
/// the vocabulary in memory.
pub fn build_iwf_from_reader<R: BufRead>(
    reader: R,
    mode: CorpusMode,
    exec: Exec,
) -> Result<IwfTable, StatsError> {
    let shards = if exec.is_parallel() {
        std::thread::available_parallelism().map_or(4, |n| n.get())
    } else {
        1
    };
    let mut acc = IwfBuilder::new();
    let mut batch = Vec::with_capacity(STREAM_BATCH);
    let mut lines = reader.lines();
    loop {
        batch.clear();
        for line in lines.by_ref().take(STREAM_BATCH) {
            batch.push(line?);
        }
        if batch.is_empty() {
            break;
        }
        acc.merge(build_shards(&batch, mode, shards, exec));
    }
    acc.finish()
}
