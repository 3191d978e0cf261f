//! A fixed battery of finite-difference gradient checks: every tape
//! primitive, the fused attention op in each positional mode, and the full
//! model loss.

use rand::Rng;
use serde::Serialize;

use crate::attention::{
    slope_schedule, Activation, AttentionConfig, AttentionGeometry, BandMask, RopeParams, SlopeMode,
};
use crate::error::Result;
use crate::model::{build_model, ModelConfig};
use crate::rng::{normal_vec, stream, Stream};
use crate::tensor::{gradcheck_many, GradcheckOptions, GradcheckReport, Tape, Tensor, Var};

pub const PRIMITIVE_TOL: f64 = 1e-5;
pub const END_TO_END_TOL: f64 = 1e-4;

#[derive(Clone, Debug, Serialize)]
pub struct NamedCheck {
    pub name: String,
    pub seed: u64,
    pub max_rel_err: f64,
    pub max_abs_err: f64,
    pub coords_checked: usize,
    pub tol: f64,
    pub passed: bool,
}

impl NamedCheck {
    fn new(name: impl Into<String>, seed: u64, r: GradcheckReport) -> Self {
        Self {
            name: name.into(),
            seed,
            max_rel_err: r.max_rel_err,
            max_abs_err: r.max_abs_err,
            coords_checked: r.coords_checked,
            tol: r.tol,
            passed: r.passed,
        }
    }
}

fn rand_t(seed: u64, salt: u64, shape: &[usize], std: f64) -> Tensor<f64> {
    let n = shape.iter().product();
    let mut rng = stream(seed, Stream::Sample(salt));
    Tensor::new(shape, normal_vec(&mut rng, n, std)).expect("shape matches data")
}

/// Reduces a tensor-valued output to a scalar with fixed random weights, so
/// every output coordinate contributes a distinct cotangent.
fn project(tape: &mut Tape<f64>, out: Var, seed: u64) -> Result<Var> {
    let shape = tape.value(out).shape().to_vec();
    let w = tape.constant(rand_t(seed, 999, &shape, 1.0));
    let p = tape.mul(out, w)?;
    Ok(tape.sum(p))
}

fn opts(tol: f64) -> GradcheckOptions {
    GradcheckOptions {
        tol,
        ..GradcheckOptions::default()
    }
}

type Prim = fn(&mut Tape<f64>, &[Var]) -> Result<Var>;

/// Gradient checks for every differentiable tape primitive at tolerance
/// [`PRIMITIVE_TOL`], on inputs drawn from `seed`.
pub fn primitive_gradchecks(seed: u64) -> Result<Vec<NamedCheck>> {
    let a = rand_t(seed, 1, &[3, 4], 1.0);
    let b = rand_t(seed, 2, &[4, 5], 1.0);
    let c = rand_t(seed, 3, &[3, 4], 1.0);
    let g = rand_t(seed, 4, &[4], 1.0);
    let table = rand_t(seed, 5, &[6, 4], 1.0);

    let cases: Vec<(&str, Prim, Vec<Tensor<f64>>)> = vec![
        (
            "matmul",
            |t, v| t.matmul(v[0], v[1]),
            vec![a.clone(), b.clone()],
        ),
        ("transpose", |t, v| t.transpose(v[0]), vec![a.clone()]),
        ("add", |t, v| t.add(v[0], v[1]), vec![a.clone(), c.clone()]),
        ("mul", |t, v| t.mul(v[0], v[1]), vec![a.clone(), c.clone()]),
        ("scale", |t, v| Ok(t.scale(v[0], -1.7)), vec![a.clone()]),
        ("sigmoid", |t, v| Ok(t.sigmoid(v[0])), vec![a.clone()]),
        ("silu", |t, v| Ok(t.silu(v[0])), vec![a.clone()]),
        ("gelu", |t, v| Ok(t.gelu(v[0])), vec![a.clone()]),
        ("softmax_rows", |t, v| t.softmax(v[0], 1), vec![a.clone()]),
        ("softmax_cols", |t, v| t.softmax(v[0], 0), vec![a.clone()]),
        (
            "rms_norm",
            |t, v| t.rms_norm(v[0], v[1], 1e-5),
            vec![a.clone(), g],
        ),
        (
            "embedding",
            |t, v| t.embedding(v[0], &[2, 0, 5, 2, 1]),
            vec![table],
        ),
        ("sum", |t, v| Ok(t.sum(v[0])), vec![a.clone()]),
        ("mean", |t, v| Ok(t.mean(v[0])), vec![a.clone()]),
    ];
    let mut out = Vec::new();
    for (name, f, xs) in cases {
        let r = gradcheck_many(
            |tape, vars| {
                let y = f(tape, vars)?;
                project(tape, y, seed)
            },
            &xs,
            opts(PRIMITIVE_TOL),
        )?;
        out.push(NamedCheck::new(name, seed, r));
    }

    let logits = rand_t(seed, 6, &[4, 5], 2.0);
    let r = gradcheck_many(
        |tape, v| tape.cross_entropy(v[0], &[1, 4, 0, 1]),
        std::slice::from_ref(&logits),
        opts(PRIMITIVE_TOL),
    )?;
    out.push(NamedCheck::new("cross_entropy", seed, r));

    out.extend(attention_gradchecks(seed)?);
    Ok(out)
}

/// The fused attention op for both activations and all positional modes,
/// with a window shorter than the sequence so the band edge is exercised.
pub fn attention_gradchecks(seed: u64) -> Result<Vec<NamedCheck>> {
    let geom = AttentionGeometry {
        batch: 2,
        seq_len: 5,
        heads: 2,
        head_dim: 4,
    };
    let rows = geom.batch * geom.seq_len;
    let cols = geom.heads * geom.head_dim;
    let xs = [
        rand_t(seed, 11, &[rows, cols], 1.0),
        rand_t(seed, 12, &[rows, cols], 1.0),
        rand_t(seed, 13, &[rows, cols], 1.0),
    ];
    let balanced: Vec<f64> = slope_schedule(geom.heads, SlopeMode::Balanced)?.slopes;
    let rope = RopeParams::new(geom.head_dim, 10_000.0)?;
    let mut out = Vec::new();
    for act in [Activation::Softmax, Activation::Sigmoid] {
        for (label, use_rope, use_slopes) in [
            ("plain", false, false),
            ("rope", true, false),
            ("alibi", false, true),
            ("alirope", true, true),
        ] {
            let mut cfg = AttentionConfig::<f64>::plain(act, 3);
            if use_rope {
                cfg.rope = Some(rope);
            }
            if use_slopes {
                cfg.slopes = Some(balanced.clone());
            }
            let r = gradcheck_many(
                |tape, v| {
                    let y = tape.attention(v[0], v[1], v[2], geom, &cfg)?;
                    project(tape, y, seed)
                },
                &xs,
                opts(PRIMITIVE_TOL),
            )?;
            let name = format!("attention_{}_{label}", act_name(act));
            out.push(NamedCheck::new(name, seed, r));
        }
    }
    Ok(out)
}

fn act_name(a: Activation) -> &'static str {
    match a {
        Activation::Softmax => "softmax",
        Activation::Sigmoid => "sigmoid",
    }
}

/// Gradient of the mean next-token loss with respect to every parameter of a
/// model built from `cfg` (seeded with `seed`), at tolerance
/// [`END_TO_END_TOL`]. Parameters are first perturbed with N(0, 0.3²) noise
/// so attention patterns are far from uniform. Sequences are `window + 2`
/// tokens long so the band mask is active.
pub fn model_gradcheck(
    cfg: &ModelConfig,
    seed: u64,
    max_coords: Option<usize>,
) -> Result<NamedCheck> {
    let mut cfg = cfg.clone();
    cfg.seed = seed;
    let mut model = build_model::<f64>(&cfg)?;
    for (i, p) in model.params_mut().iter_mut().enumerate() {
        let mut rng = stream(seed, Stream::Sample(1 << 20 | i as u64));
        let noise: Vec<f64> = normal_vec(&mut rng, p.numel(), 0.3);
        for (x, z) in p.data_mut().iter_mut().zip(noise) {
            *x += z;
        }
    }
    let n = cfg.window + 2;
    let batch = 2;
    let mask = BandMask::new(n, cfg.window)?;
    let mut rng = stream(seed, Stream::Sample(1 << 21));
    let stream_tokens: Vec<usize> = (0..batch * (n + 1))
        .map(|_| rng.random_range(0..cfg.vocab_size))
        .collect();
    let mut inputs = Vec::new();
    let mut targets = Vec::new();
    for b in 0..batch {
        let s = &stream_tokens[b * (n + 1)..(b + 1) * (n + 1)];
        inputs.extend_from_slice(&s[..n]);
        targets.extend_from_slice(&s[1..]);
    }
    let xs = model.params().to_vec();
    let r = gradcheck_many(
        |tape, vars| {
            let pass = model.forward_tape(tape, vars, &inputs, batch, &mask)?;
            tape.cross_entropy(pass.logits, &targets)
        },
        &xs,
        GradcheckOptions {
            tol: END_TO_END_TOL,
            max_coords,
            ..GradcheckOptions::default()
        },
    )?;
    Ok(NamedCheck::new("model_loss", seed, r))
}
