mod common;

use proptest::prelude::*;
use swat_core::data::{detokenize, make_batches, synth, tokenize_bytes, BatchSpec, Corpus, Split};

fn corpus_10k() -> Corpus {
    let text = synth::synthetic_text(10_000, 4);
    Corpus::from_text("ten-k", &text).unwrap()
}

#[test]
fn one_epoch_visits_every_block_once() {
    let corpus = corpus_10k();
    let spec = BatchSpec {
        batch_size_tokens: 96,
        train_length: 32,
        train_window: 16,
    };
    let mut batches = make_batches(&corpus, spec, 7).unwrap();
    let blocks = batches.block_count();
    let train = corpus.split_bytes(Split::Train);
    assert_eq!(blocks, (train.len() - 1) / 32);
    assert_eq!(batches.dropped_tail(), train.len() - blocks * 32);

    let mut seen = vec![0usize; blocks];
    let mut drawn = 0;
    while drawn < blocks {
        let b = batches.next().unwrap();
        for (k, &blk) in b.blocks.iter().enumerate() {
            if drawn < blocks {
                seen[blk] += 1;
                assert_eq!(b.epoch, 0);
            }
            drawn += 1;
            // Inputs and targets are the train bytes of that block, shifted by one.
            let r = batches.block_range(blk);
            let inputs: Vec<usize> = train[r.start..r.end].iter().map(|&x| x as usize).collect();
            let targets: Vec<usize> = train[r.start + 1..r.end + 1]
                .iter()
                .map(|&x| x as usize)
                .collect();
            assert_eq!(&b.inputs[k * 32..(k + 1) * 32], inputs.as_slice());
            assert_eq!(&b.targets[k * 32..(k + 1) * 32], targets.as_slice());
        }
    }
    assert!(seen.iter().all(|&c| c == 1));
}

#[test]
fn blocks_stay_inside_the_train_split() {
    let corpus = corpus_10k();
    let spec = BatchSpec {
        batch_size_tokens: 64,
        train_length: 64,
        train_window: 64,
    };
    let batches = make_batches(&corpus, spec, 0).unwrap();
    let train_end = corpus.splits().train.end;
    for i in 0..batches.block_count() {
        // The last target of a block is still a train byte.
        assert!(batches.block_range(i).end < train_end);
    }
}

#[test]
fn epochs_reshuffle_deterministically() {
    let corpus = corpus_10k();
    let spec = BatchSpec {
        batch_size_tokens: 64,
        train_length: 16,
        train_window: 16,
    };
    let a = make_batches(&corpus, spec, 3).unwrap();
    let b = make_batches(&corpus, spec, 3).unwrap();
    let c = make_batches(&corpus, spec, 4).unwrap();
    assert_eq!(a.epoch_order(0), b.epoch_order(0));
    assert_eq!(a.epoch_order(5), b.epoch_order(5));
    assert_ne!(a.epoch_order(0), a.epoch_order(1));
    assert_ne!(a.epoch_order(0), c.epoch_order(0));
    let first: Vec<_> = a.take(3).collect();
    let again: Vec<_> = b.take(3).collect();
    assert_eq!(first, again);
}

#[test]
fn splits_fall_on_document_boundaries() {
    let corpus = corpus_10k();
    let s = corpus.splits();
    for cut in [s.train.end, s.val.end] {
        assert!(
            corpus.boundaries().contains(&cut),
            "cut {cut} is not a boundary"
        );
    }
}

#[test]
fn synthetic_text_is_seeded() {
    let a = synth::synthetic_text(5000, 9);
    assert_eq!(a, synth::synthetic_text(5000, 9));
    assert_ne!(a, synth::synthetic_text(5000, 10));
    assert!(a.len() >= 5000);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn splits_conserve_and_order_bytes(paras in prop::collection::vec("[a-z ]{1,60}", 3..40)) {
        let text = paras.join("\n\n");
        prop_assume!(text.len() >= 10);
        let c = Corpus::from_text("p", &text).unwrap();
        let again = Corpus::from_text("p", &text).unwrap();
        let s = c.splits();
        prop_assert_eq!(s, again.splits());
        prop_assert_eq!(s.train.start, 0);
        prop_assert_eq!(s.train.end, s.val.start);
        prop_assert_eq!(s.val.end, s.test.start);
        prop_assert_eq!(s.test.end, text.len());
        let total: usize = [Split::Train, Split::Val, Split::Test].iter().map(|&x| c.split_bytes(x).len()).sum();
        prop_assert_eq!(total, text.len());
    }

    #[test]
    fn byte_tokens_round_trip(bytes in prop::collection::vec(any::<u8>(), 0..200)) {
        let ids = tokenize_bytes(&bytes);
        prop_assert!(ids.iter().all(|&t| t < 256));
        prop_assert_eq!(detokenize(&ids).unwrap(), bytes);
    }
}
