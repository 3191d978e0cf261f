//! Central finite-difference gradient checking.

use crate::error::{ensure, Error, Result};
use crate::tensor::{Tape, Tensor, Var};

#[derive(Clone, Copy, Debug)]
pub struct GradcheckOptions {
    /// Perturbation size.
    pub eps: f64,
    /// Pass threshold on the maximum relative error.
    pub tol: f64,
    /// Relative errors are measured against `max(|autodiff|, |numeric|, floor)`
    /// so coordinates whose true gradient is ~0 are compared absolutely.
    pub floor: f64,
    /// Check at most this many coordinates per input (evenly strided);
    /// `None` checks all of them.
    pub max_coords: Option<usize>,
}

impl Default for GradcheckOptions {
    fn default() -> Self {
        Self {
            eps: 1e-5,
            tol: 1e-5,
            floor: 1e-3,
            max_coords: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradcheckReport {
    pub max_rel_err: f64,
    pub max_abs_err: f64,
    /// `(input, coordinate)` of the worst relative error.
    pub worst: Option<(usize, usize)>,
    pub coords_checked: usize,
    pub tol: f64,
    pub passed: bool,
}

/// Checks the autodiff gradient of a scalar function of one tensor.
pub fn gradcheck<F>(f: F, x: &Tensor<f64>, opts: GradcheckOptions) -> Result<GradcheckReport>
where
    F: Fn(&mut Tape<f64>, Var) -> Result<Var>,
{
    gradcheck_many(|tape, vars| f(tape, vars[0]), std::slice::from_ref(x), opts)
}

/// Checks the autodiff gradient of a scalar function of several tensors.
pub fn gradcheck_many<F>(
    f: F,
    xs: &[Tensor<f64>],
    opts: GradcheckOptions,
) -> Result<GradcheckReport>
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    ensure!(
        opts.eps > 0.0 && opts.eps.is_finite(),
        Contract,
        "gradcheck eps must be positive, got {}",
        opts.eps
    );
    let eval = |inputs: &[Tensor<f64>]| -> Result<f64> {
        let mut tape = Tape::inference();
        let vars: Vec<Var> = inputs.iter().map(|t| tape.constant(t.clone())).collect();
        let out = f(&mut tape, &vars)?;
        scalar_of(&tape, out)
    };

    let mut tape = Tape::new();
    let vars: Vec<Var> = xs.iter().map(|t| tape.param(t.clone())).collect();
    let out = f(&mut tape, &vars)?;
    scalar_of(&tape, out)?;
    let grads = tape.backward(out)?;
    let analytic: Vec<Vec<f64>> = vars
        .iter()
        .zip(xs)
        .map(|(v, x)| grads.get_or_zeros(*v, x.numel()))
        .collect();

    let mut report = GradcheckReport {
        max_rel_err: 0.0,
        max_abs_err: 0.0,
        worst: None,
        coords_checked: 0,
        tol: opts.tol,
        passed: true,
    };
    let mut work: Vec<Tensor<f64>> = xs.to_vec();
    for (xi, x) in xs.iter().enumerate() {
        let n = x.numel();
        let stride = match opts.max_coords {
            Some(c) if c > 0 && c < n => n.div_ceil(c),
            _ => 1,
        };
        for j in (0..n).step_by(stride) {
            let orig = x.data()[j];
            work[xi].data_mut()[j] = orig + opts.eps;
            let plus = eval(&work)?;
            work[xi].data_mut()[j] = orig - opts.eps;
            let minus = eval(&work)?;
            work[xi].data_mut()[j] = orig;
            let numeric = (plus - minus) / (2.0 * opts.eps);
            let a = analytic[xi][j];
            let abs = (a - numeric).abs();
            let rel = abs / a.abs().max(numeric.abs()).max(opts.floor);
            report.coords_checked += 1;
            report.max_abs_err = report.max_abs_err.max(abs);
            if rel > report.max_rel_err || report.worst.is_none() {
                report.max_rel_err = rel.max(report.max_rel_err);
                report.worst = Some((xi, j));
            }
        }
    }
    report.passed = report.max_rel_err < opts.tol;
    Ok(report)
}

fn scalar_of(tape: &Tape<f64>, v: Var) -> Result<f64> {
    let t = tape.value(v);
    if t.numel() != 1 {
        return Err(Error::Contract(format!(
            "gradcheck needs a scalar-valued function, got shape {:?}",
            t.shape()
        )));
    }
    Ok(t.item())
}
