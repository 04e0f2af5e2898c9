//! Reverse-mode automatic differentiation on a Wengert tape.
//!
//! Every primitive applied through [`Tape`] is appended together with its
//! inputs and forward value, so node order is always topological. Backward
//! passes walk the tape in reverse and accumulate vector-Jacobian products.
//! A tape is single-threaded; separate tapes on separate threads are fine.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;
use crate::tensor::Tensor;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Primitive operations the tape can record.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Op {
    /// Differentiable input.
    Leaf,
    /// Input that is never differentiated (targets, masks).
    Constant,
    MatMul,
    Add,
    Hadamard,
    /// Concatenation of rank-1 inputs.
    Concat,
    Tanh,
    Relu,
    Identity,
    Scale(f64),
    /// `-sum(target * log_softmax(logits))`, inputs `(logits, target)`.
    SoftmaxCrossEntropy,
    /// `0.5 * mean((pred - target)^2)`, inputs `(pred, target)`.
    Mse,
    /// Contiguous range of the flattened input.
    Slice {
        start: usize,
        len: usize,
    },
}

impl Op {
    pub fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Constant => "constant",
            Op::MatMul => "matmul",
            Op::Add => "add",
            Op::Hadamard => "hadamard",
            Op::Concat => "concat",
            Op::Tanh => "tanh",
            Op::Relu => "relu",
            Op::Identity => "identity",
            Op::Scale(_) => "scale",
            Op::SoftmaxCrossEntropy => "softmax_cross_entropy",
            Op::Mse => "mse",
            Op::Slice { .. } => "slice",
        }
    }
}

fn arity_error(op: Op, inputs: &[&Tensor]) -> Error {
    Error::Shape { op: op.name(), shapes: inputs.iter().map(|t| t.shape().to_vec()).collect() }
}

fn log_sum_exp(x: &Tensor) -> f64 {
    let max = x.data().iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let s: f64 = x.data().iter().map(|&v| math::exp(v - max)).sum();
    max + math::ln(s)
}

/// Forward evaluation of a single primitive.
pub fn forward_op(op: Op, inputs: &[&Tensor]) -> Result<Tensor> {
    match (op, inputs) {
        (Op::MatMul, [a, b]) => a.matmul(b),
        (Op::Add, [a, b]) => a.add(b),
        (Op::Hadamard, [a, b]) => a.hadamard(b),
        (Op::Concat, parts) if !parts.is_empty() => Tensor::concat(parts),
        (Op::Tanh, [a]) => Ok(a.map(math::tanh)),
        (Op::Relu, [a]) => Ok(a.map(|v| if v > 0.0 { v } else { 0.0 })),
        (Op::Identity, [a]) => Ok((*a).clone()),
        (Op::Scale(k), [a]) => Ok(a.scale(k)),
        (Op::Slice { start, len }, [a]) => a.slice(start, len),
        (Op::SoftmaxCrossEntropy, [logits, target]) => {
            if logits.rank() != 1 || !logits.same_shape(target) {
                return Err(arity_error(op, inputs));
            }
            let lse = log_sum_exp(logits);
            let v: f64 = logits.data().iter().zip(target.data()).map(|(&x, &t)| -t * (x - lse)).sum();
            Ok(Tensor::scalar(v))
        }
        (Op::Mse, [pred, target]) => {
            if !pred.same_shape(target) || pred.is_empty() {
                return Err(arity_error(op, inputs));
            }
            let n = pred.len() as f64;
            let ss: f64 = pred.data().iter().zip(target.data()).map(|(p, t)| (p - t) * (p - t)).sum();
            Ok(Tensor::scalar(0.5 * ss / n))
        }
        _ => Err(arity_error(op, inputs)),
    }
}

#[derive(Clone, Debug)]
struct Node {
    op: Op,
    inputs: Vec<usize>,
    value: Tensor,
}

#[derive(Clone, Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    output: Option<usize>,
}

/// Gradients produced by a backward pass, keyed by [`Var`].
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    shapes: Vec<Vec<usize>>,
}

impl Gradients {
    /// Gradient for `var`, or `None` when the output does not depend on it.
    pub fn get(&self, var: Var) -> Option<&Tensor> {
        self.grads.get(var.0).and_then(|g| g.as_ref())
    }

    /// Gradient for `var`, with zeros when the output does not depend on it.
    pub fn wrt(&self, var: Var) -> Tensor {
        match self.get(var) {
            Some(g) => g.clone(),
            None => Tensor::zeros(&self.shapes[var.0]),
        }
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn is_finalized(&self) -> bool {
        self.output.is_some()
    }

    fn push(&mut self, op: Op, inputs: Vec<usize>, value: Tensor) -> Result<Var> {
        if self.output.is_some() {
            return Err(Error::invalid("cannot record on a finalized tape"));
        }
        self.nodes.push(Node { op, inputs, value });
        Ok(Var(self.nodes.len() - 1))
    }

    pub fn leaf(&mut self, value: Tensor) -> Result<Var> {
        self.push(Op::Leaf, Vec::new(), value)
    }

    pub fn constant(&mut self, value: Tensor) -> Result<Var> {
        self.push(Op::Constant, Vec::new(), value)
    }

    pub fn value(&self, var: Var) -> &Tensor {
        &self.nodes[var.0].value
    }

    fn check(&self, var: Var) -> Result<usize> {
        if var.0 < self.nodes.len() {
            Ok(var.0)
        } else {
            Err(Error::UnknownVar(var.0))
        }
    }

    /// Records `op` applied to `inputs` and returns the new node.
    pub fn apply(&mut self, op: Op, inputs: &[Var]) -> Result<Var> {
        if matches!(op, Op::Leaf | Op::Constant) {
            return Err(Error::invalid("leaves are created with Tape::leaf / Tape::constant"));
        }
        let idx = inputs.iter().map(|&v| self.check(v)).collect::<Result<Vec<_>>>()?;
        let value = {
            let vals: Vec<&Tensor> = idx.iter().map(|&i| &self.nodes[i].value).collect();
            forward_op(op, &vals)?
        };
        self.push(op, idx, value)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply(Op::MatMul, &[a, b])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply(Op::Add, &[a, b])
    }

    /// `a - b`, recorded as `a + (-1)·b`.
    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let nb = self.scale(b, -1.0)?;
        self.add(a, nb)
    }

    pub fn hadamard(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply(Op::Hadamard, &[a, b])
    }

    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        self.apply(Op::Concat, parts)
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        self.apply(Op::Tanh, &[a])
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        self.apply(Op::Relu, &[a])
    }

    pub fn identity(&mut self, a: Var) -> Result<Var> {
        self.apply(Op::Identity, &[a])
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Result<Var> {
        self.apply(Op::Scale(k), &[a])
    }

    pub fn slice(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        self.apply(Op::Slice { start, len }, &[a])
    }

    pub fn softmax_cross_entropy(&mut self, logits: Var, target: Var) -> Result<Var> {
        self.apply(Op::SoftmaxCrossEntropy, &[logits, target])
    }

    pub fn mse(&mut self, pred: Var, target: Var) -> Result<Var> {
        self.apply(Op::Mse, &[pred, target])
    }

    /// Marks `output` as the tape result; no more nodes may be recorded.
    pub fn finalize(&mut self, output: Var) -> Result<()> {
        let idx = self.check(output)?;
        self.output = Some(idx);
        Ok(())
    }

    pub fn output(&self) -> Option<Var> {
        self.output.map(Var)
    }

    /// Backward pass from the finalized output.
    pub fn backward(&self, seed: &Tensor) -> Result<Gradients> {
        let out = self.output.ok_or(Error::TapeNotFinalized)?;
        self.vjp(Var(out), seed)
    }

    /// Vector-Jacobian product `seed · ∂output/∂node` for every node.
    ///
    /// Works on unfinalized tapes, which lets one forward pass serve
    /// several seeds.
    pub fn vjp(&self, output: Var, seed: &Tensor) -> Result<Gradients> {
        let out = self.check(output)?;
        if !seed.same_shape(&self.nodes[out].value) {
            return Err(Error::Shape {
                op: "backward seed",
                shapes: vec![seed.shape().to_vec(), self.nodes[out].value.shape().to_vec()],
            });
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[out] = Some(seed.clone());
        for i in (0..=out).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            let contributions = self.node_vjp(node, &g)?;
            for (&input, contrib) in node.inputs.iter().zip(contributions) {
                if let Some(c) = contrib {
                    grads[input] = Some(match grads[input].take() {
                        Some(acc) => acc.add(&c)?,
                        None => c,
                    });
                }
            }
            grads[i] = Some(g);
        }
        let shapes = self.nodes.iter().map(|n| n.value.shape().to_vec()).collect();
        Ok(Gradients { grads, shapes })
    }

    fn node_vjp(&self, node: &Node, g: &Tensor) -> Result<Vec<Option<Tensor>>> {
        let input = |k: usize| &self.nodes[node.inputs[k]].value;
        let out = match node.op {
            Op::Leaf | Op::Constant => Vec::new(),
            Op::MatMul => {
                let (a, b) = (input(0), input(1));
                let a2 = as_matrix(a, true)?;
                let b2 = as_matrix(b, false)?;
                let (m, n) = (a2.shape()[0], b2.shape()[1]);
                let g2 = g.reshape(vec![m, n])?;
                let da = g2.matmul(&b2.transpose()?)?.reshape(a.shape().to_vec())?;
                let db = a2.transpose()?.matmul(&g2)?.reshape(b.shape().to_vec())?;
                vec![Some(da), Some(db)]
            }
            Op::Add => vec![Some(g.clone()), Some(g.clone())],
            Op::Hadamard => vec![Some(g.hadamard(input(1))?), Some(g.hadamard(input(0))?)],
            Op::Concat => {
                let mut offset = 0;
                let mut parts = Vec::with_capacity(node.inputs.len());
                for k in 0..node.inputs.len() {
                    let len = input(k).len();
                    parts.push(Some(g.slice(offset, len)?));
                    offset += len;
                }
                parts
            }
            Op::Tanh => {
                let d = node.value.map(|y| 1.0 - y * y);
                vec![Some(g.hadamard(&d)?)]
            }
            Op::Relu => {
                let d = input(0).map(|x| if x > 0.0 { 1.0 } else { 0.0 });
                vec![Some(g.hadamard(&d)?)]
            }
            Op::Identity => vec![Some(g.clone())],
            Op::Scale(k) => vec![Some(g.scale(k))],
            Op::Slice { start, len } => {
                let src = input(0);
                let mut data = vec![0.0; src.len()];
                data[start..start + len].copy_from_slice(g.data());
                vec![Some(Tensor::new(src.shape().to_vec(), data)?)]
            }
            Op::SoftmaxCrossEntropy => {
                let gs = g.item()?;
                let (logits, target) = (input(0), input(1));
                let p = logits.softmax();
                let mass = target.sum();
                let dl = p.zip_map(target, "softmax_cross_entropy", |pi, ti| gs * (pi * mass - ti))?;
                let lse = log_sum_exp(logits);
                let dt = logits.map(|x| gs * (lse - x));
                vec![Some(dl), Some(dt)]
            }
            Op::Mse => {
                let gs = g.item()?;
                let (pred, target) = (input(0), input(1));
                let n = pred.len() as f64;
                let d = pred.sub(target)?;
                vec![Some(d.scale(gs / n)), Some(d.scale(-gs / n))]
            }
        };
        Ok(out)
    }

    /// Recomputes every node from the recorded leaves and constants.
    pub fn replay(&self) -> Result<Vec<Tensor>> {
        let mut values: Vec<Tensor> = Vec::with_capacity(self.nodes.len());
        for node in &self.nodes {
            let v = match node.op {
                Op::Leaf | Op::Constant => node.value.clone(),
                op => {
                    let ins: Vec<&Tensor> = node.inputs.iter().map(|&i| &values[i]).collect();
                    forward_op(op, &ins)?
                }
            };
            values.push(v);
        }
        Ok(values)
    }

    /// True when [`Tape::replay`] reproduces every recorded value bitwise.
    pub fn replay_matches(&self) -> Result<bool> {
        let values = self.replay()?;
        Ok(values.iter().zip(&self.nodes).all(|(v, n)| {
            v.shape() == n.value.shape() && v.data().iter().zip(n.value.data()).all(|(a, b)| a.to_bits() == b.to_bits())
        }))
    }
}

/// Rank-2 view of a matmul operand. Rank-1 left operands are rows,
/// rank-1 right operands are columns.
fn as_matrix(t: &Tensor, lhs: bool) -> Result<Tensor> {
    match t.shape() {
        [k] if lhs => t.reshape(vec![1, *k]),
        [k] => t.reshape(vec![*k, 1]),
        [_, _] => Ok(t.clone()),
        s => Err(Error::Shape { op: "matmul", shapes: vec![s.to_vec()] }),
    }
}

/// Central finite differences `(f(x + h e_i) - f(x - h e_i)) / 2h`.
pub fn finite_difference_gradient<F>(f: F, x: &Tensor, step: f64) -> Result<Tensor>
where
    F: Fn(&Tensor) -> Result<f64>,
{
    if !(step > 0.0) || !step.is_finite() {
        return Err(Error::invalid("finite-difference step must be positive"));
    }
    let mut grad = Vec::with_capacity(x.len());
    let mut probe = x.data().to_vec();
    for i in 0..x.len() {
        let orig = probe[i];
        probe[i] = orig + step;
        let fp = f(&Tensor::new(x.shape().to_vec(), probe.clone())?)?;
        probe[i] = orig - step;
        let fm = f(&Tensor::new(x.shape().to_vec(), probe.clone())?)?;
        probe[i] = orig;
        if !fp.is_finite() || !fm.is_finite() {
            return Err(Error::NonFinite { what: "finite-difference probe" });
        }
        grad.push((fp - fm) / (2.0 * step));
    }
    Tensor::new(x.shape().to_vec(), grad)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_tape(f: impl Fn(&mut Tape, Var) -> Result<Var>, x: f64) -> f64 {
        let mut tape = Tape::new();
        let v = tape.leaf(Tensor::scalar(x)).unwrap();
        let out = f(&mut tape, v).unwrap();
        tape.finalize(out).unwrap();
        tape.backward(&Tensor::scalar(1.0)).unwrap().wrt(v).item().unwrap()
    }

    #[test]
    fn identity_gradient_is_one() {
        assert_eq!(scalar_tape(|t, x| t.identity(x), 0.3), 1.0);
    }

    #[test]
    fn tanh_gradient_at_origin() {
        assert_eq!(scalar_tape(|t, x| t.tanh(x), 0.0), 1.0);
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::vector(vec![0.0])).unwrap();
        let y = tape.tanh(x).unwrap();
        assert_eq!(tape.value(y).data(), &[0.0]);
    }

    #[test]
    fn half_squared_error_gradient() {
        // f(θ) = ½(θu − ŷ)² at θ = 0, u = 1, ŷ = 1 has gradient (θu − ŷ)u = −1.
        let mut tape = Tape::new();
        let theta = tape.leaf(Tensor::vector(vec![0.0])).unwrap();
        let u = tape.constant(Tensor::vector(vec![1.0])).unwrap();
        let target = tape.constant(Tensor::vector(vec![1.0])).unwrap();
        let pred = tape.hadamard(theta, u).unwrap();
        let loss = tape.mse(pred, target).unwrap();
        tape.finalize(loss).unwrap();
        let g = tape.backward(&Tensor::scalar(1.0)).unwrap();
        assert_eq!(g.wrt(theta).data(), &[-1.0]);
    }

    #[test]
    fn softmax_cross_entropy_of_uniform_logits_is_ln2() {
        let mut tape = Tape::new();
        let logits = tape.leaf(Tensor::vector(vec![0.0, 0.0])).unwrap();
        let target = tape.constant(Tensor::one_hot(0, 2).unwrap()).unwrap();
        let loss = tape.softmax_cross_entropy(logits, target).unwrap();
        assert!((tape.value(loss).item().unwrap() - core::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn backward_requires_finalize() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::scalar(1.0)).unwrap();
        tape.tanh(x).unwrap();
        assert_eq!(tape.backward(&Tensor::scalar(1.0)), Err(Error::TapeNotFinalized));
    }

    #[test]
    fn seed_shape_mismatch_is_reported() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::vector(vec![1.0, 2.0])).unwrap();
        let y = tape.tanh(x).unwrap();
        tape.finalize(y).unwrap();
        assert!(matches!(tape.backward(&Tensor::scalar(1.0)), Err(Error::Shape { .. })));
    }

    #[test]
    fn shape_error_names_the_op() {
        let mut tape = Tape::new();
        let a = tape.leaf(Tensor::zeros(&[2, 3])).unwrap();
        let b = tape.leaf(Tensor::zeros(&[2])).unwrap();
        let err = tape.matmul(a, b).unwrap_err();
        assert_eq!(err, Error::Shape { op: "matmul", shapes: vec![vec![2, 3], vec![2]] });
    }

    #[test]
    fn finalized_tape_rejects_recording() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::scalar(1.0)).unwrap();
        tape.finalize(x).unwrap();
        assert!(tape.tanh(x).is_err());
    }

    #[test]
    fn shared_input_gradients_accumulate() {
        // f(x) = x ⊙ x has derivative 2x.
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::vector(vec![3.0, -1.5])).unwrap();
        let y = tape.hadamard(x, x).unwrap();
        let g = tape.vjp(y, &Tensor::vector(vec![1.0, 1.0])).unwrap();
        assert_eq!(g.wrt(x).data(), &[6.0, -3.0]);
    }

    #[test]
    fn finite_difference_of_quadratic() {
        let g = finite_difference_gradient(|x| Ok(x.data()[0] * x.data()[0]), &Tensor::scalar(3.0), 1e-5).unwrap();
        assert!((g.item().unwrap() - 6.0).abs() < 1e-9);
    }

    #[test]
    fn finite_difference_of_constant_is_zero() {
        let x = Tensor::vector(vec![1.0, 2.0, 3.0]);
        let g = finite_difference_gradient(|_| Ok(4.0), &x, 1e-5).unwrap();
        assert_eq!(g.data(), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn finite_difference_rejects_bad_step_and_non_finite() {
        let x = Tensor::scalar(1.0);
        assert!(finite_difference_gradient(|_| Ok(0.0), &x, 0.0).is_err());
        assert!(finite_difference_gradient(|_| Ok(f64::NAN), &x, 1e-5).is_err());
    }
}
