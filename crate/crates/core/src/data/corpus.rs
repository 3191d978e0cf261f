use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::tokenizer::tokenize_bytes;
use crate::error::{ensure, Error, Result};

/// Train/validation/test proportions, in tenths.
const SPLIT_TENTHS: [usize; 3] = [8, 1, 1];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

/// Half-open byte range `[start, end)` of the concatenated corpus.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitRange {
    pub start: usize,
    pub end: usize,
}

impl SplitRange {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start == self.end
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Splits {
    pub train: SplitRange,
    pub val: SplitRange,
    pub test: SplitRange,
}

impl Splits {
    pub fn get(&self, s: Split) -> SplitRange {
        match s {
            Split::Train => self.train,
            Split::Val => self.val,
            Split::Test => self.test,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceEntry {
    pub path: String,
    pub bytes: usize,
    pub sha256: String,
}

/// JSON description of a corpus and its split boundaries.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub sources: Vec<SourceEntry>,
    pub total_tokens: usize,
    pub sha256: String,
    pub documents: usize,
    pub splits: Splits,
}

/// A byte corpus split contiguously 8:1:1.
///
/// Documents are the source files, further cut at blank lines (paragraphs).
/// Split points are the document boundaries nearest to 80% and 90% of the
/// bytes, so no document straddles two splits. Boundaries depend only on the
/// text, never on a seed.
#[derive(Clone, Debug)]
pub struct Corpus {
    sources: Vec<SourceEntry>,
    bytes: Vec<u8>,
    boundaries: Vec<usize>,
    splits: Splits,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Offsets just past each blank-line run, plus 0 and `len`.
fn paragraph_boundaries(bytes: &[u8], base: usize, out: &mut Vec<usize>) {
    out.push(base);
    let mut i = 0;
    while i + 1 < bytes.len() {
        if bytes[i] == b'\n' && bytes[i + 1] == b'\n' {
            let mut j = i + 2;
            while j < bytes.len() && bytes[j] == b'\n' {
                j += 1;
            }
            if j < bytes.len() {
                out.push(base + j);
            }
            i = j;
        } else {
            i += 1;
        }
    }
}

fn nearest(boundaries: &[usize], target: usize) -> usize {
    match boundaries.binary_search(&target) {
        Ok(i) => boundaries[i],
        Err(i) => {
            let hi = boundaries.get(i).copied();
            let lo = i.checked_sub(1).map(|j| boundaries[j]);
            match (lo, hi) {
                (Some(l), Some(h)) => {
                    if target - l <= h - target {
                        l
                    } else {
                        h
                    }
                }
                (Some(l), None) => l,
                (None, Some(h)) => h,
                (None, None) => 0,
            }
        }
    }
}

fn collect_files(path: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    let meta = std::fs::metadata(path)
        .map_err(|e| Error::Data(format!("corpus path {}: {e}", path.display())))?;
    if meta.is_dir() {
        let mut entries = std::fs::read_dir(path)?
            .map(|e| e.map(|e| e.path()))
            .collect::<std::io::Result<Vec<_>>>()?;
        entries.sort();
        for e in entries {
            if e.is_dir() || e.extension().is_some_and(|x| x == "txt") {
                collect_files(&e, out)?;
            }
        }
    } else {
        out.push(path.to_path_buf());
    }
    Ok(())
}

impl Corpus {
    /// Loads UTF-8 text files; directories contribute their `.txt` files in
    /// sorted order.
    pub fn from_paths<P: AsRef<Path>>(paths: &[P]) -> Result<Self> {
        ensure!(!paths.is_empty(), Data, "no corpus paths given");
        let mut files = Vec::new();
        for p in paths {
            collect_files(p.as_ref(), &mut files)?;
        }
        ensure!(
            !files.is_empty(),
            Data,
            "corpus paths contain no text files"
        );
        let mut parts = Vec::with_capacity(files.len());
        for f in &files {
            let bytes = std::fs::read(f)?;
            std::str::from_utf8(&bytes)
                .map_err(|e| Error::Data(format!("{} is not UTF-8: {e}", f.display())))?;
            parts.push((f.display().to_string(), bytes));
        }
        Self::from_sources(parts)
    }

    /// Single in-memory document source.
    pub fn from_text(name: &str, text: &str) -> Result<Self> {
        Self::from_sources(vec![(name.to_string(), text.as_bytes().to_vec())])
    }

    fn from_sources(parts: Vec<(String, Vec<u8>)>) -> Result<Self> {
        let mut bytes = Vec::new();
        let mut boundaries = Vec::new();
        let mut sources = Vec::new();
        for (path, b) in parts {
            paragraph_boundaries(&b, bytes.len(), &mut boundaries);
            sources.push(SourceEntry {
                path,
                bytes: b.len(),
                sha256: sha256_hex(&b),
            });
            bytes.extend_from_slice(&b);
        }
        let total = bytes.len();
        ensure!(
            total >= 10,
            Data,
            "corpus has {total} bytes; at least 10 are needed to split 8:1:1"
        );
        boundaries.push(total);
        boundaries.dedup();
        let tenth = |k: usize| (total * k + 5) / 10;
        let a = nearest(&boundaries, tenth(SPLIT_TENTHS[0]));
        let b = nearest(&boundaries, tenth(SPLIT_TENTHS[0] + SPLIT_TENTHS[1])).max(a);
        let splits = Splits {
            train: SplitRange { start: 0, end: a },
            val: SplitRange { start: a, end: b },
            test: SplitRange {
                start: b,
                end: total,
            },
        };
        Ok(Corpus {
            sources,
            bytes,
            boundaries,
            splits,
        })
    }

    pub fn len(&self) -> usize {
        self.bytes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bytes.is_empty()
    }

    pub fn bytes(&self) -> &[u8] {
        &self.bytes
    }

    pub fn splits(&self) -> Splits {
        self.splits
    }

    /// Document start offsets (and the final end offset).
    pub fn boundaries(&self) -> &[usize] {
        &self.boundaries
    }

    pub fn split_bytes(&self, s: Split) -> &[u8] {
        let r = self.splits.get(s);
        &self.bytes[r.start..r.end]
    }

    pub fn split_tokens(&self, s: Split) -> Vec<usize> {
        tokenize_bytes(self.split_bytes(s))
    }

    pub fn sha256(&self) -> String {
        sha256_hex(&self.bytes)
    }

    pub fn manifest(&self) -> CorpusManifest {
        CorpusManifest {
            sources: self.sources.clone(),
            total_tokens: self.bytes.len(),
            sha256: self.sha256(),
            documents: self.boundaries.len().saturating_sub(1),
            splits: self.splits,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn text() -> String {
        (0..40)
            .map(|i| format!("paragraph {i} has some words.\n\n"))
            .collect()
    }

    #[test]
    fn splits_conserve_tokens_and_sit_on_boundaries() {
        let c = Corpus::from_text("t", &text()).unwrap();
        let s = c.splits();
        assert_eq!(s.train.len() + s.val.len() + s.test.len(), c.len());
        assert_eq!(s.train.end, s.val.start);
        assert_eq!(s.val.end, s.test.start);
        for cut in [s.train.end, s.val.end] {
            assert!(c.boundaries().contains(&cut));
        }
        let frac = s.train.len() as f64 / c.len() as f64;
        assert!((frac - 0.8).abs() < 0.03, "{frac}");
        assert!(c.split_bytes(Split::Val).starts_with(b"paragraph"));
    }

    #[test]
    fn identical_text_identical_splits() {
        let a = Corpus::from_text("a", &text()).unwrap();
        let b = Corpus::from_text("b", &text()).unwrap();
        assert_eq!(a.splits(), b.splits());
        assert_eq!(a.sha256(), b.sha256());
    }

    #[test]
    fn tiny_corpus_is_a_data_error() {
        assert!(matches!(Corpus::from_text("x", "abc"), Err(Error::Data(_))));
    }

    #[test]
    fn missing_path_is_a_data_error() {
        let r = Corpus::from_paths(&["/definitely/not/here.txt"]);
        assert!(matches!(r, Err(Error::Data(_))));
    }
}
