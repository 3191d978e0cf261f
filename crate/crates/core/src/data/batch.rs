use std::ops::Range;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::corpus::{Corpus, Split};
use crate::error::{ensure, Result};
use crate::rng::{self, Stream};

/// Shape of the training stream.
///
/// `train_length` must be a whole multiple of `train_window` (the chunk
/// granularity); the vanilla regime is `train_length == train_window`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BatchSpec {
    pub batch_size_tokens: usize,
    pub train_length: usize,
    pub train_window: usize,
}

impl BatchSpec {
    pub fn validate(&self) -> Result<()> {
        ensure!(
            self.train_window >= 1,
            Config,
            "train_window must be positive"
        );
        ensure!(
            self.train_length >= self.train_window,
            Config,
            "train_length {} is shorter than train_window {}",
            self.train_length,
            self.train_window
        );
        ensure!(
            self.train_length % self.train_window == 0,
            Config,
            "train_length {} is not a multiple of train_window {}",
            self.train_length,
            self.train_window
        );
        ensure!(
            self.batch_size_tokens >= self.train_length,
            Config,
            "batch_size_tokens {} holds no full sequence of {}",
            self.batch_size_tokens,
            self.train_length
        );
        Ok(())
    }

    /// Sequences per batch, `⌊batch_size_tokens / train_length⌋`.
    pub fn sequences(&self) -> usize {
        self.batch_size_tokens / self.train_length
    }

    pub fn tokens_per_batch(&self) -> usize {
        self.sequences() * self.train_length
    }
}

/// One step of training data, row-major `[sequences × train_length]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Batch {
    pub inputs: Vec<usize>,
    /// `inputs` shifted left by one token.
    pub targets: Vec<usize>,
    pub sequences: usize,
    pub length: usize,
    /// Epoch of the first block in the batch.
    pub epoch: usize,
    pub blocks: Vec<usize>,
}

/// Endless stream of shuffled, non-overlapping train-split blocks.
///
/// Block `i` holds tokens `[i·T, (i+1)·T]` of the train split (inputs plus
/// one target); the remainder after the last whole block is dropped. Each
/// epoch visits every block once in an order drawn from the shuffle stream of
/// the seed.
#[derive(Clone, Debug)]
pub struct Batches {
    tokens: Vec<u8>,
    spec: BatchSpec,
    seed: u64,
    epoch: usize,
    order: Vec<usize>,
    cursor: usize,
}

pub fn make_batches(corpus: &Corpus, spec: BatchSpec, seed: u64) -> Result<Batches> {
    spec.validate()?;
    let tokens = corpus.split_bytes(Split::Train).to_vec();
    let blocks = tokens.len().saturating_sub(1) / spec.train_length;
    ensure!(
        blocks >= 1,
        Data,
        "train split has {} tokens, fewer than one block of {} (+1 target)",
        tokens.len(),
        spec.train_length
    );
    let mut b = Batches {
        tokens,
        spec,
        seed,
        epoch: 0,
        order: Vec::new(),
        cursor: 0,
    };
    b.order = b.epoch_order(0);
    Ok(b)
}

impl Batches {
    pub fn spec(&self) -> BatchSpec {
        self.spec
    }

    pub fn block_count(&self) -> usize {
        self.tokens.len().saturating_sub(1) / self.spec.train_length
    }

    /// Train-split token range of the inputs of block `i`.
    pub fn block_range(&self, i: usize) -> Range<usize> {
        let t = self.spec.train_length;
        i * t..(i + 1) * t
    }

    /// Tokens dropped at the end of the train split.
    pub fn dropped_tail(&self) -> usize {
        self.tokens.len() - self.block_count() * self.spec.train_length
    }

    /// Block visiting order of `epoch`.
    pub fn epoch_order(&self, epoch: usize) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.block_count()).collect();
        order.shuffle(&mut rng::stream(self.seed, Stream::Shuffle(epoch as u64)));
        order
    }

    fn next_block(&mut self) -> (usize, usize) {
        if self.cursor == self.order.len() {
            self.epoch += 1;
            self.order = self.epoch_order(self.epoch);
            self.cursor = 0;
        }
        self.cursor += 1;
        (self.epoch, self.order[self.cursor - 1])
    }
}

impl Iterator for Batches {
    type Item = Batch;

    fn next(&mut self) -> Option<Batch> {
        let (b, t) = (self.spec.sequences(), self.spec.train_length);
        let mut batch = Batch {
            inputs: Vec::with_capacity(b * t),
            targets: Vec::with_capacity(b * t),
            sequences: b,
            length: t,
            epoch: self.epoch,
            blocks: Vec::with_capacity(b),
        };
        for k in 0..b {
            let (epoch, block) = self.next_block();
            if k == 0 {
                batch.epoch = epoch;
            }
            let r = self.block_range(block);
            batch
                .inputs
                .extend(self.tokens[r.start..r.end].iter().map(|&x| x as usize));
            batch.targets.extend(
                self.tokens[r.start + 1..r.end + 1]
                    .iter()
                    .map(|&x| x as usize),
            );
            batch.blocks.push(block);
        }
        Some(batch)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;

    fn corpus() -> Corpus {
        let text: String = (0..300)
            .map(|i| format!("line {i} of the corpus.\n\n"))
            .collect();
        Corpus::from_text("c", &text).unwrap()
    }

    fn spec() -> BatchSpec {
        BatchSpec {
            batch_size_tokens: 96,
            train_length: 32,
            train_window: 16,
        }
    }

    #[test]
    fn deterministic_and_shifted() {
        let c = corpus();
        let a: Vec<Batch> = make_batches(&c, spec(), 5).unwrap().take(10).collect();
        let b: Vec<Batch> = make_batches(&c, spec(), 5).unwrap().take(10).collect();
        assert_eq!(a, b);
        let other: Vec<Batch> = make_batches(&c, spec(), 6).unwrap().take(10).collect();
        assert_ne!(a, other);
        for batch in &a {
            assert_eq!(batch.inputs.len(), 96);
            for s in 0..batch.sequences {
                let row = &batch.inputs[s * 32..(s + 1) * 32];
                let tgt = &batch.targets[s * 32..(s + 1) * 32];
                assert_eq!(&row[1..], &tgt[..31]);
            }
        }
    }

    #[test]
    fn spec_validation() {
        let bad = |s: BatchSpec| assert!(matches!(s.validate(), Err(Error::Config(_))));
        bad(BatchSpec {
            train_length: 24,
            ..spec()
        });
        bad(BatchSpec {
            train_length: 8,
            ..spec()
        });
        bad(BatchSpec {
            batch_size_tokens: 16,
            ..spec()
        });
        bad(BatchSpec {
            train_window: 0,
            ..spec()
        });
    }

    #[test]
    fn too_small_corpus() {
        let c = Corpus::from_text("c", "tiny corpus text here").unwrap();
        assert!(matches!(make_batches(&c, spec(), 0), Err(Error::Data(_))));
    }
}
