//! Independent scalar reference implementations shared by the integration
//! tests. Nothing at this level calls into the library's kernels; `probe`
//! holds helpers that drive the library itself.

#![allow(dead_code)]

pub mod probe;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform draws in `[-scale, scale)`.
pub fn uniform_vec(r: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| r.random_range(-scale..scale)).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Act {
    Softmax,
    Sigmoid,
}

/// Rotates one `d`-vector to position `pos`, pair `(2i, 2i+1)` by angle
/// `pos · theta^(-2i/d)`, using an explicit 2×2 rotation matrix.
pub fn rotate(x: &[f64], pos: usize, theta: f64) -> Vec<f64> {
    let d = x.len();
    let mut y = vec![0.0; d];
    for i in 0..d / 2 {
        let angle = pos as f64 / theta.powf(2.0 * i as f64 / d as f64);
        let m = [[angle.cos(), -angle.sin()], [angle.sin(), angle.cos()]];
        y[2 * i] = m[0][0] * x[2 * i] + m[0][1] * x[2 * i + 1];
        y[2 * i + 1] = m[1][0] * x[2 * i] + m[1][1] * x[2 * i + 1];
    }
    y
}

/// Double-loop windowed attention on head-major `[h × n × d]` buffers.
///
/// Score of query `m` on key `j` (with `m − window < j ≤ m`) is
/// `rot(q_m)·rot(k_j)/√d + slope_h·(m − j)`. Softmax normalizes over the
/// visible keys; sigmoid weights are used as they are.
#[allow(clippy::too_many_arguments)]
pub fn attention(
    q: &[f64],
    k: &[f64],
    v: &[f64],
    h: usize,
    n: usize,
    d: usize,
    window: usize,
    act: Act,
    slopes: Option<&[f64]>,
    theta: Option<f64>,
) -> Vec<f64> {
    let mut out = vec![0.0; h * n * d];
    for head in 0..h {
        let at = |buf: &[f64], i: usize| buf[(head * n + i) * d..(head * n + i + 1) * d].to_vec();
        for m in 0..n {
            let qm = match theta {
                Some(t) => rotate(&at(q, m), m, t),
                None => at(q, m),
            };
            let mut keys = Vec::new();
            let mut scores = Vec::new();
            for j in 0..=m {
                if m - j >= window {
                    continue;
                }
                let kj = match theta {
                    Some(t) => rotate(&at(k, j), j, t),
                    None => at(k, j),
                };
                let mut s = 0.0;
                for c in 0..d {
                    s += qm[c] * kj[c];
                }
                s /= (d as f64).sqrt();
                if let Some(sl) = slopes {
                    s += sl[head] * (m - j) as f64;
                }
                keys.push(j);
                scores.push(s);
            }
            let weights: Vec<f64> = match act {
                Act::Softmax => {
                    let mx = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    let e: Vec<f64> = scores.iter().map(|s| (s - mx).exp()).collect();
                    let z: f64 = e.iter().sum();
                    e.iter().map(|x| x / z).collect()
                }
                Act::Sigmoid => scores.iter().map(|s| 1.0 / (1.0 + (-s).exp())).collect(),
            };
            for (w, &j) in weights.iter().zip(&keys) {
                let vj = at(v, j);
                for c in 0..d {
                    out[(head * n + m) * d + c] += w * vj[c];
                }
            }
        }
    }
    out
}

/// Exact expected maximum of `l` standard normals by trapezoidal
/// integration of `x · l · φ(x) · Φ(x)^(l−1)` on `[-12, 12]`.
pub fn expected_max_normal(l: usize) -> f64 {
    let steps = 200_000;
    let (a, b) = (-12.0f64, 12.0f64);
    let hstep = (b - a) / steps as f64;
    let f = |x: f64| {
        let pdf = (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let cdf = 0.5 * erfc(-x / std::f64::consts::SQRT_2);
        x * l as f64 * pdf * cdf.powi(l as i32 - 1)
    };
    let mut s = 0.5 * (f(a) + f(b));
    for i in 1..steps {
        s += f(a + i as f64 * hstep);
    }
    s * hstep
}

/// Complementary error function (Numerical Recipes `erfcc`, |rel err| < 1.2e-7).
pub fn erfc(x: f64) -> f64 {
    let z = x.abs();
    let t = 1.0 / (1.0 + 0.5 * z);
    let r = t
        * (-z * z - 1.26551223
            + t * (1.00002368
                + t * (0.37409196
                    + t * (0.09678418
                        + t * (-0.18628806
                            + t * (0.27886807
                                + t * (-1.13520398
                                    + t * (1.48851587 + t * (-0.82215223 + t * 0.17087277)))))))))
            .exp();
    if x >= 0.0 {
        r
    } else {
        2.0 - r
    }
}
