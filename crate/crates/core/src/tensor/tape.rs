//! Reverse-mode automatic differentiation over whole tensors.
//!
//! Operations append nodes to a [`Tape`] in execution order, which is also a
//! topological order; [`Tape::backward`] consumes the tape and walks it from
//! the last node to the first.

use crate::attention::{
    attention_backward, attention_forward, AttentionConfig, AttentionGeometry, AttentionSaved,
};
use crate::error::{ensure, Error, Result};
use crate::scalar::{gemm, Trans};
use crate::tensor::{ops, Tensor};
use crate::Scalar;

/// Handle to a node on a tape.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

enum Op<T> {
    Leaf,
    MatMul(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    Mul(Var, Var),
    Scale(Var, T),
    Sigmoid(Var),
    Silu(Var),
    Gelu(Var),
    Softmax {
        x: Var,
        axis: usize,
    },
    RmsNorm {
        x: Var,
        gain: Var,
        inv: Vec<T>,
    },
    Embedding {
        table: Var,
        ids: Vec<usize>,
    },
    CrossEntropy {
        logits: Var,
        targets: Vec<usize>,
        probs: Vec<T>,
    },
    Sum(Var),
    Mean(Var),
    Attention {
        q: Var,
        k: Var,
        v: Var,
        geom: AttentionGeometry,
        cfg: Box<AttentionConfig<T>>,
        saved: Option<Box<AttentionSaved<T>>>,
    },
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    needs_grad: bool,
    scope: usize,
}

/// Records tensor operations for one forward/backward pair.
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
    scopes: Vec<String>,
    scope: usize,
    grad_enabled: bool,
    keep_attention: bool,
    first_nonfinite: Option<usize>,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            scopes: vec!["root".to_string()],
            scope: 0,
            grad_enabled: true,
            keep_attention: false,
            first_nonfinite: None,
        }
    }

    /// A tape that evaluates but keeps nothing for a backward pass.
    pub fn inference() -> Self {
        Self {
            grad_enabled: false,
            ..Self::new()
        }
    }

    /// An inference tape that still retains attention weights for
    /// inspection via [`Tape::attention_weights`].
    pub fn probe() -> Self {
        Self {
            grad_enabled: false,
            keep_attention: true,
            ..Self::new()
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Labels subsequently recorded nodes (used in numeric diagnostics).
    pub fn set_scope(&mut self, name: impl Into<String>) {
        let name = name.into();
        self.scope = match self.scopes.iter().position(|s| *s == name) {
            Some(i) => i,
            None => {
                self.scopes.push(name);
                self.scopes.len() - 1
            }
        };
    }

    /// Leaf whose gradient will be reported by [`Tape::backward`].
    pub fn param(&mut self, t: Tensor<T>) -> Var {
        let g = self.grad_enabled;
        self.push(t, Op::Leaf, g)
    }

    /// Leaf without gradient.
    pub fn constant(&mut self, t: Tensor<T>) -> Var {
        self.push(t, Op::Leaf, false)
    }

    /// Leaf that follows the tensor's own `requires_grad` flag.
    pub fn leaf(&mut self, t: Tensor<T>) -> Var {
        let g = self.grad_enabled && t.requires_grad();
        self.push(t, Op::Leaf, g)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn scope_of(&self, v: Var) -> &str {
        &self.scopes[self.nodes[v.0].scope]
    }

    /// First node whose value contains NaN/Inf, with its scope label and a
    /// short statistic.
    pub fn first_nonfinite(&self) -> Option<(Var, String, String)> {
        self.first_nonfinite.map(|i| {
            let data = self.nodes[i].value.data();
            let nan = data.iter().filter(|x| x.is_nan()).count();
            let inf = data.iter().filter(|x| x.is_infinite()).count();
            (
                Var(i),
                self.scopes[self.nodes[i].scope].clone(),
                format!("{nan} NaN and {inf} Inf of {} values", data.len()),
            )
        })
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, needs_grad: bool) -> Var {
        if self.first_nonfinite.is_none() && value.data().iter().any(|x| !x.is_finite()) {
            self.first_nonfinite = Some(self.nodes.len());
        }
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
            scope: self.scope,
        });
        Var(self.nodes.len() - 1)
    }

    fn ng(&self, vars: &[Var]) -> bool {
        self.grad_enabled && vars.iter().any(|v| self.nodes[v.0].needs_grad)
    }

    fn dims2(&self, v: Var, what: &str) -> Result<(usize, usize)> {
        let s = self.value(v).shape();
        ensure!(
            s.len() == 2,
            Dimension,
            "{what} expects a matrix, got {:?}",
            s
        );
        Ok((s[0], s[1]))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.dims2(a, "matmul")?;
        let (k2, n) = self.dims2(b, "matmul")?;
        ensure!(
            k == k2,
            Dimension,
            "matmul inner dimensions {k} and {k2} differ"
        );
        let out = ops::matmul(self.value(a).data(), self.value(b).data(), m, k, n);
        let ng = self.ng(&[a, b]);
        Ok(self.push(Tensor::from_parts(vec![m, n], out), Op::MatMul(a, b), ng))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let (r, c) = self.dims2(a, "transpose")?;
        let out = ops::transpose(self.value(a).data(), r, c);
        let ng = self.ng(&[a]);
        Ok(self.push(Tensor::from_parts(vec![c, r], out), Op::Transpose(a), ng))
    }

    fn same_shape(&self, a: Var, b: Var, what: &str) -> Result<()> {
        ensure!(
            self.value(a).shape() == self.value(b).shape(),
            Dimension,
            "{what}: shapes {:?} and {:?} differ",
            self.value(a).shape(),
            self.value(b).shape()
        );
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "add")?;
        let out = self.value(a).add(self.value(b))?;
        let ng = self.ng(&[a, b]);
        Ok(self.push(out, Op::Add(a, b), ng))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "mul")?;
        let out = self.value(a).mul(self.value(b))?;
        let ng = self.ng(&[a, b]);
        Ok(self.push(out, Op::Mul(a, b), ng))
    }

    pub fn scale(&mut self, a: Var, c: T) -> Var {
        let out = self.value(a).scale(c);
        let ng = self.ng(&[a]);
        self.push(out, Op::Scale(a, c), ng)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.value(a).sigmoid();
        let ng = self.ng(&[a]);
        self.push(out, Op::Sigmoid(a), ng)
    }

    pub fn silu(&mut self, a: Var) -> Var {
        let out = self.value(a).silu();
        let ng = self.ng(&[a]);
        self.push(out, Op::Silu(a), ng)
    }

    pub fn gelu(&mut self, a: Var) -> Var {
        let out = self.value(a).gelu();
        let ng = self.ng(&[a]);
        self.push(out, Op::Gelu(a), ng)
    }

    pub fn softmax(&mut self, x: Var, axis: usize) -> Result<Var> {
        let out = self.value(x).softmax(axis)?;
        let ng = self.ng(&[x]);
        Ok(self.push(out, Op::Softmax { x, axis }, ng))
    }

    pub fn rms_norm(&mut self, x: Var, gain: Var, eps: T) -> Result<Var> {
        let xv = self.value(x);
        let d = xv.cols();
        ensure!(
            self.value(gain).numel() == d,
            Dimension,
            "rms_norm gain of length {} for rows of width {d}",
            self.value(gain).numel()
        );
        let (out, inv) = ops::rms_norm(xv.data(), self.value(gain).data(), d, eps);
        let shape = xv.shape().to_vec();
        let ng = self.ng(&[x, gain]);
        let inv = if ng { inv } else { Vec::new() };
        Ok(self.push(
            Tensor::from_parts(shape, out),
            Op::RmsNorm { x, gain, inv },
            ng,
        ))
    }

    pub fn embedding(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let out = Tensor::embedding(self.value(table), ids)?;
        let ng = self.ng(&[table]);
        Ok(self.push(
            out,
            Op::Embedding {
                table,
                ids: ids.to_vec(),
            },
            ng,
        ))
    }

    /// Mean cross-entropy of `logits [rows × vocab]` against `targets`.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Result<Var> {
        let (rows, vocab) = self.dims2(logits, "cross_entropy")?;
        ensure!(
            rows == targets.len() && rows > 0,
            Dimension,
            "{rows} logit rows but {} targets",
            targets.len()
        );
        ops::check_ids(targets, vocab)?;
        let (loss, probs) = ops::cross_entropy(self.value(logits).data(), targets, vocab);
        let ng = self.ng(&[logits]);
        let probs = if ng { probs } else { Vec::new() };
        Ok(self.push(
            Tensor::scalar(loss),
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
                probs,
            },
            ng,
        ))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).sum();
        let ng = self.ng(&[a]);
        self.push(Tensor::scalar(s), Op::Sum(a), ng)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let v = self.value(a);
        let s = v.sum() / T::from_usize(v.numel().max(1)).unwrap();
        let ng = self.ng(&[a]);
        self.push(Tensor::scalar(s), Op::Mean(a), ng)
    }

    /// Windowed multi-head attention on packed `[batch·N × heads·d_k]`
    /// projections.
    pub fn attention(
        &mut self,
        q: Var,
        k: Var,
        v: Var,
        geom: AttentionGeometry,
        cfg: &AttentionConfig<T>,
    ) -> Result<Var> {
        for x in [q, k, v] {
            let s = self.value(x).shape();
            ensure!(
                s.len() == 2
                    && s[0] == geom.batch * geom.seq_len
                    && s[1] == geom.heads * geom.head_dim,
                Dimension,
                "attention input {:?} does not match geometry {:?}",
                s,
                geom
            );
        }
        cfg.validate(geom.heads, geom.head_dim)?;
        let (out, saved) = attention_forward(
            self.value(q).data(),
            self.value(k).data(),
            self.value(v).data(),
            &geom,
            cfg,
        );
        let shape = self.value(q).shape().to_vec();
        let ng = self.ng(&[q, k, v]);
        let op = Op::Attention {
            q,
            k,
            v,
            geom,
            cfg: Box::new(cfg.clone()),
            saved: (ng || self.keep_attention).then(|| Box::new(saved)),
        };
        Ok(self.push(Tensor::from_parts(shape, out), op, ng))
    }

    /// Activated attention weights of an attention node, `[batch·heads × N ×
    /// span]`; absent on plain inference tapes.
    pub fn attention_weights(&self, node: Var) -> Option<(&[T], usize)> {
        match &self.nodes[node.0].op {
            Op::Attention { saved: Some(s), .. } => Some((&s.w, s.span)),
            _ => None,
        }
    }

    /// Runs the backward pass from the scalar `loss`, consuming the tape.
    pub fn backward(self, loss: Var) -> Result<Gradients<T>> {
        ensure!(self.grad_enabled, Contract, "backward on an inference tape");
        ensure!(
            self.value(loss).numel() == 1,
            Contract,
            "backward needs a scalar loss, got shape {:?}",
            self.value(loss).shape()
        );
        let Tape { mut nodes, .. } = self;
        let is_leaf: Vec<bool> = nodes.iter().map(|n| matches!(n.op, Op::Leaf)).collect();
        let mut grads: Vec<Option<Vec<T>>> = (0..nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![T::one()]);
        for i in (0..=loss.0).rev() {
            if !nodes[i].needs_grad {
                continue;
            }
            if is_leaf[i] {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            let op = std::mem::replace(&mut nodes[i].op, Op::Leaf);
            backprop(&nodes, &op, &nodes[i].value, &g, &mut grads);
            // drop saved intermediates as soon as they are consumed
            drop(op);
        }
        let grads = grads
            .into_iter()
            .zip(nodes.iter().zip(&is_leaf))
            .map(|(g, (n, &leaf))| g.filter(|_| leaf && n.needs_grad))
            .collect();
        Ok(Gradients { grads })
    }
}

fn buf<'a, T: Scalar>(
    grads: &'a mut [Option<Vec<T>>],
    nodes: &[Node<T>],
    v: Var,
) -> Option<&'a mut Vec<T>> {
    if !nodes[v.0].needs_grad {
        return None;
    }
    let len = nodes[v.0].value.numel();
    Some(grads[v.0].get_or_insert_with(|| vec![T::zero(); len]))
}

fn accumulate<T: Scalar>(
    grads: &mut [Option<Vec<T>>],
    nodes: &[Node<T>],
    v: Var,
    f: impl Fn(usize) -> T,
) {
    if let Some(b) = buf(grads, nodes, v) {
        for (i, x) in b.iter_mut().enumerate() {
            *x += f(i);
        }
    }
}

fn backprop<T: Scalar>(
    nodes: &[Node<T>],
    op: &Op<T>,
    out: &Tensor<T>,
    g: &[T],
    grads: &mut [Option<Vec<T>>],
) {
    let val = |v: Var| nodes[v.0].value.data();
    match op {
        Op::Leaf => {}
        Op::MatMul(a, b) => {
            let (m, k) = (nodes[a.0].value.shape()[0], nodes[a.0].value.shape()[1]);
            let n = nodes[b.0].value.shape()[1];
            if let Some(da) = buf(grads, nodes, *a) {
                gemm(Trans::No, Trans::Yes, m, n, k, g, val(*b), T::one(), da);
            }
            if let Some(db) = buf(grads, nodes, *b) {
                gemm(Trans::Yes, Trans::No, k, m, n, val(*a), g, T::one(), db);
            }
        }
        Op::Transpose(a) => {
            let (r, c) = (nodes[a.0].value.shape()[0], nodes[a.0].value.shape()[1]);
            let gt = ops::transpose(g, c, r);
            accumulate(grads, nodes, *a, |i| gt[i]);
        }
        Op::Add(a, b) => {
            accumulate(grads, nodes, *a, |i| g[i]);
            accumulate(grads, nodes, *b, |i| g[i]);
        }
        Op::Mul(a, b) => {
            let (va, vb) = (val(*a).to_vec(), val(*b).to_vec());
            accumulate(grads, nodes, *a, |i| g[i] * vb[i]);
            accumulate(grads, nodes, *b, |i| g[i] * va[i]);
        }
        Op::Scale(a, c) => accumulate(grads, nodes, *a, |i| g[i] * *c),
        Op::Sigmoid(a) => {
            let y = out.data();
            accumulate(grads, nodes, *a, |i| g[i] * y[i] * (T::one() - y[i]));
        }
        Op::Silu(a) => {
            let x = val(*a);
            accumulate(grads, nodes, *a, |i| {
                let s = ops::sigmoid(x[i]);
                g[i] * (s + x[i] * s * (T::one() - s))
            });
        }
        Op::Gelu(a) => {
            let x = val(*a);
            accumulate(grads, nodes, *a, |i| g[i] * ops::gelu_grad(x[i]));
        }
        Op::Softmax { x, axis } => {
            let (outer, len, inner) = out.axis_split(*axis).expect("validated in forward");
            if let Some(dx) = buf(grads, nodes, *x) {
                ops::softmax_backward_strided(out.data(), g, dx, outer, len, inner);
            }
        }
        Op::RmsNorm { x, gain, inv } => {
            let d = out.cols();
            let (xv, gv) = (val(*x).to_vec(), val(*gain).to_vec());
            let mut dgain = nodes[gain.0].needs_grad.then(|| vec![T::zero(); d]);
            if let Some(dx) = buf(grads, nodes, *x) {
                ops::rms_norm_backward(&xv, &gv, inv, g, d, Some(dx), dgain.as_deref_mut());
            } else {
                ops::rms_norm_backward(&xv, &gv, inv, g, d, None, dgain.as_deref_mut());
            }
            if let Some(dg) = dgain {
                accumulate(grads, nodes, *gain, |i| dg[i]);
            }
        }
        Op::Embedding { table, ids } => {
            let d = out.cols();
            if let Some(dt) = buf(grads, nodes, *table) {
                for (r, &id) in ids.iter().enumerate() {
                    for j in 0..d {
                        dt[id * d + j] += g[r * d + j];
                    }
                }
            }
        }
        Op::CrossEntropy {
            logits,
            targets,
            probs,
        } => {
            let vocab = nodes[logits.0].value.cols();
            let scale = g[0] / T::from_usize(targets.len()).unwrap();
            if let Some(dl) = buf(grads, nodes, *logits) {
                for (i, x) in dl.iter_mut().enumerate() {
                    let onehot = if targets[i / vocab] == i % vocab {
                        T::one()
                    } else {
                        T::zero()
                    };
                    *x += (probs[i] - onehot) * scale;
                }
            }
        }
        Op::Sum(a) => accumulate(grads, nodes, *a, |_| g[0]),
        Op::Mean(a) => {
            let n = T::from_usize(nodes[a.0].value.numel().max(1)).unwrap();
            accumulate(grads, nodes, *a, |_| g[0] / n);
        }
        Op::Attention {
            q,
            k,
            v,
            geom,
            cfg,
            saved,
        } => {
            let saved = saved.as_ref().expect("saved when gradients are needed");
            let len = geom.packed_len();
            let mut dq = nodes[q.0].needs_grad.then(|| vec![T::zero(); len]);
            let mut dk = nodes[k.0].needs_grad.then(|| vec![T::zero(); len]);
            let mut dv = nodes[v.0].needs_grad.then(|| vec![T::zero(); len]);
            attention_backward(
                saved,
                geom,
                cfg,
                g,
                dq.as_deref_mut(),
                dk.as_deref_mut(),
                dv.as_deref_mut(),
            );
            for (var, d) in [(q, dq), (k, dk), (v, dv)] {
                if let Some(d) = d {
                    accumulate(grads, nodes, *var, |i| d[i]);
                }
            }
        }
    }
}

/// Gradients of leaf nodes produced by a backward pass.
pub struct Gradients<T> {
    grads: Vec<Option<Vec<T>>>,
}

impl<T: Scalar> Gradients<T> {
    /// Gradient of a leaf, or `None` when the leaf was a constant or did not
    /// influence the loss.
    pub fn get(&self, v: Var) -> Option<&[T]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    /// Gradient of a leaf, zeros when it did not influence the loss.
    pub fn get_or_zeros(&self, v: Var, len: usize) -> Vec<T> {
        self.get(v)
            .map_or_else(|| vec![T::zero(); len], |g| g.to_vec())
    }

    pub fn take(&mut self, v: Var) -> Option<Vec<T>> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }

    /// Stores the gradient of `v` on `t`.
    pub fn write_into(&self, v: Var, t: &mut Tensor<T>) -> Result<()> {
        let g = self
            .get(v)
            .ok_or_else(|| Error::Contract(format!("no gradient recorded for node {}", v.0)))?;
        t.set_grad(g.to_vec())
    }
}
