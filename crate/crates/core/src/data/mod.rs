//! Byte-level tokenization, corpus splitting and block batching.

mod batch;
mod corpus;
pub mod synth;
mod tokenizer;

pub use batch::{make_batches, Batch, BatchSpec, Batches};
pub use corpus::{Corpus, CorpusManifest, SourceEntry, Split, SplitRange, Splits};
pub use tokenizer::{detokenize, tokenize_bytes, VOCAB_SIZE};
