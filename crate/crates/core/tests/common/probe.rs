use rand::Rng;
use swat_core::attention::BandMask;
use swat_core::model::{build_model, Model, ModelConfig};
use swat_core::tensor::{Tape, Tensor};

/// Model built from `cfg` with uniform jitter in `[-scale, scale)` on every weight, so
/// that no coupling is accidentally tiny.
pub fn jittered_model(cfg: &ModelConfig, scale: f64) -> Model<f64> {
    let mut m: Model<f64> = build_model(cfg).unwrap();
    let mut r = super::rng(cfg.seed ^ 0x5eed);
    for p in m.params_mut() {
        for x in p.data_mut() {
            *x += scale * (r.random::<f64>() - 0.5) * 2.0;
        }
    }
    m
}

/// Per-position L1 norm of ∂(w·logits_m)/∂x_n, where `x` is the embedded
/// input and `w` a fixed positive weighting over the vocabulary.
pub fn sensitivity(model: &Model<f64>, tokens: &[usize], m: usize, window: usize) -> Vec<f64> {
    let n = tokens.len();
    let cfg = model.config();
    let (d, v) = (cfg.d_model, cfg.vocab_size);
    let table = model.param("tok_embed").unwrap().data();
    let x: Vec<f64> = tokens
        .iter()
        .flat_map(|&t| table[t * d..(t + 1) * d].to_vec())
        .collect();
    let mut tape = Tape::new();
    let params = model.register(&mut tape, false);
    let xv = tape.param(Tensor::new(&[n, d], x).unwrap());
    let mask = BandMask::new(n, window).unwrap();
    let pass = model
        .forward_embedded(&mut tape, &params, xv, 1, &mask)
        .unwrap();
    let mut sel = vec![0.0; n * v];
    for (j, s) in sel[m * v..(m + 1) * v].iter_mut().enumerate() {
        *s = 1.0 + (j % 7) as f64 * 0.1;
    }
    let sel = tape.constant(Tensor::new(&[n, v], sel).unwrap());
    let y = tape.mul(pass.logits, sel).unwrap();
    let loss = tape.sum(y);
    let g = tape.backward(loss).unwrap().get_or_zeros(xv, n * d);
    g.chunks(d)
        .map(|r| r.iter().map(|x| x.abs()).sum())
        .collect()
}
