use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};
use crate::tensor::Tensor;
use crate::Scalar;

/// Rotary embedding parameters for one attention head.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RopeParams {
    pub head_dim: usize,
    pub theta: f64,
}

impl RopeParams {
    pub fn new(head_dim: usize, theta: f64) -> Result<Self> {
        ensure!(
            head_dim % 2 == 0 && head_dim > 0,
            Dimension,
            "rotary head dimension must be even and positive, got {head_dim}"
        );
        ensure!(
            theta > 1.0,
            Config,
            "rotary base must exceed 1, got {theta}"
        );
        Ok(Self { head_dim, theta })
    }

    /// `(cos, sin)` of the pair angles `pos·Θ^(−2i/d)` for `i < d/2`.
    ///
    /// Angles are formed in f64 so batch and incremental paths rotate
    /// identically.
    pub fn angles<T: Scalar>(&self, pos: usize) -> (Vec<T>, Vec<T>) {
        let half = self.head_dim / 2;
        let mut cos = Vec::with_capacity(half);
        let mut sin = Vec::with_capacity(half);
        for i in 0..half {
            let freq = self.theta.powf(-2.0 * i as f64 / self.head_dim as f64);
            let a = pos as f64 * freq;
            cos.push(T::of(a.cos()));
            sin.push(T::of(a.sin()));
        }
        (cos, sin)
    }
}

/// Precomputed rotations for a contiguous range of positions.
pub(crate) struct RopeTable<T> {
    half: usize,
    start: usize,
    cos: Vec<T>,
    sin: Vec<T>,
}

impl<T: Scalar> RopeTable<T> {
    pub fn new(params: &RopeParams, start: usize, len: usize) -> Self {
        let half = params.head_dim / 2;
        let mut cos = Vec::with_capacity(len * half);
        let mut sin = Vec::with_capacity(len * half);
        for p in start..start + len {
            let (c, s) = params.angles::<T>(p);
            cos.extend(c);
            sin.extend(s);
        }
        Self {
            half,
            start,
            cos,
            sin,
        }
    }

    #[inline]
    pub fn rotate(&self, x: &mut [T], pos: usize) {
        let o = (pos - self.start) * self.half;
        rotate_pairs(
            x,
            &self.cos[o..o + self.half],
            &self.sin[o..o + self.half],
            false,
        );
    }

    /// Applies the transpose rotation (used to pull gradients back).
    #[inline]
    pub fn unrotate(&self, x: &mut [T], pos: usize) {
        let o = (pos - self.start) * self.half;
        rotate_pairs(
            x,
            &self.cos[o..o + self.half],
            &self.sin[o..o + self.half],
            true,
        );
    }
}

#[inline]
pub(crate) fn rotate_pairs<T: Scalar>(x: &mut [T], cos: &[T], sin: &[T], inverse: bool) {
    for i in 0..cos.len() {
        let (a, b) = (x[2 * i], x[2 * i + 1]);
        let (c, s) = (cos[i], if inverse { -sin[i] } else { sin[i] });
        x[2 * i] = a * c - b * s;
        x[2 * i + 1] = a * s + b * c;
    }
}

/// Rotates every trailing `head_dim` vector of `x` to absolute position `pos`.
pub fn rope_rotate<T: Scalar>(x: &Tensor<T>, pos: usize, params: &RopeParams) -> Result<Tensor<T>> {
    let d = x.cols();
    ensure!(
        d == params.head_dim,
        Dimension,
        "trailing dimension {d} does not match rotary head dimension {}",
        params.head_dim
    );
    ensure!(
        d % 2 == 0,
        Dimension,
        "rotary embedding needs an even trailing dimension, got {d}"
    );
    let (cos, sin) = params.angles::<T>(pos);
    let mut out = x.data().to_vec();
    for chunk in out.chunks_mut(d) {
        rotate_pairs(chunk, &cos, &sin, false);
    }
    Tensor::new(x.shape(), out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;

    #[test]
    fn position_zero_is_identity() {
        let p = RopeParams::new(6, 10_000.0).unwrap();
        let x = Tensor::<f64>::from_f64(
            &[2, 6],
            &[1., 2., 3., 4., 5., 6., -1., 0.5, 0., 2., 7., -3.],
        )
        .unwrap();
        assert_eq!(rope_rotate(&x, 0, &p).unwrap(), x);
    }

    #[test]
    fn odd_dimension_rejected() {
        assert!(matches!(
            RopeParams::new(5, 10_000.0),
            Err(Error::Dimension(_))
        ));
        assert!(matches!(RopeParams::new(4, 1.0), Err(Error::Config(_))));
        let p = RopeParams::new(4, 100.0).unwrap();
        let x = Tensor::<f64>::zeros(&[3]);
        assert!(matches!(rope_rotate(&x, 1, &p), Err(Error::Dimension(_))));
    }

    #[test]
    fn table_unrotate_inverts_rotate() {
        let p = RopeParams::new(8, 500.0).unwrap();
        let table = RopeTable::<f64>::new(&p, 3, 10);
        let x: Vec<f64> = (0..8).map(|i| (i as f64).sin()).collect();
        let mut y = x.clone();
        table.rotate(&mut y, 9);
        table.unrotate(&mut y, 9);
        for (a, b) in x.iter().zip(&y) {
            assert!((a - b).abs() < 1e-14);
        }
    }
}
