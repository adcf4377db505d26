use std::collections::{HashMap, HashSet};

use super::conv::{conv2d_backward, Conv2dDims};
use super::ops::{matmul_raw, sign0, BinaryOp, Op, ReduceOp, UnaryOp};
use super::{Tensor, TensorId};
use crate::error::{AceError, Result};

/// Leaf gradients produced by one backward pass.
#[derive(Debug, Default, Clone)]
pub struct Gradients {
    by_id: HashMap<TensorId, Vec<f64>>,
}

impl Gradients {
    pub fn get(&self, t: &Tensor) -> Option<&[f64]> {
        self.by_id.get(&t.id()).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.by_id.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_id.is_empty()
    }
}

/// Sums `g` to a single value when the operand was broadcast from a scalar.
fn unbroadcast(g: Vec<f64>, operand_len: usize) -> Vec<f64> {
    if operand_len == 1 && g.len() != 1 {
        vec![g.iter().sum()]
    } else {
        g
    }
}

#[inline]
fn at(values: &[f64], i: usize) -> f64 {
    if values.len() == 1 {
        values[0]
    } else {
        values[i]
    }
}

fn transpose(a: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut t = vec![0.0; a.len()];
    for i in 0..rows {
        for j in 0..cols {
            t[j * rows + i] = a[i * cols + j];
        }
    }
    t
}

/// Gradients with respect to each parent of `out`, in parent order.
fn local_backward(out: &Tensor, op: &Op, parents: &[Tensor], g: &[f64]) -> Vec<Vec<f64>> {
    match op {
        Op::Binary(kind) => {
            let (a, b) = (&parents[0], &parents[1]);
            let (av, bv) = (a.data(), b.data());
            let (ga, gb): (Vec<f64>, Vec<f64>) = match kind {
                BinaryOp::Add => (g.to_vec(), g.to_vec()),
                BinaryOp::Sub => (g.to_vec(), g.iter().map(|v| -v).collect()),
                BinaryOp::Mul => (
                    g.iter().enumerate().map(|(i, gi)| gi * at(&bv, i)).collect(),
                    g.iter().enumerate().map(|(i, gi)| gi * at(&av, i)).collect(),
                ),
            };
            vec![unbroadcast(ga, av.len()), unbroadcast(gb, bv.len())]
        }
        Op::Unary(kind) => {
            let av = parents[0].data();
            let ga = g
                .iter()
                .zip(av.iter())
                .map(|(gi, &x)| match kind {
                    // Subgradient 0 at the kink.
                    UnaryOp::Relu => {
                        if x > 0.0 {
                            *gi
                        } else {
                            0.0
                        }
                    }
                    UnaryOp::Abs => gi * sign0(x),
                    UnaryOp::Square => 2.0 * x * gi,
                    UnaryOp::Neg => -gi,
                })
                .collect();
            vec![ga]
        }
        Op::Matmul => {
            let (a, b) = (&parents[0], &parents[1]);
            let (m, k, n) = (a.shape()[0], a.shape()[1], b.shape()[1]);
            let (av, bv) = (a.data(), b.data());
            let bt = transpose(&bv, k, n);
            let at_ = transpose(&av, m, k);
            vec![matmul_raw(g, &bt, m, n, k), matmul_raw(&at_, g, k, m, n)]
        }
        Op::Conv2d => {
            let (x, w) = (&parents[0], &parents[1]);
            let dims = Conv2dDims::infer(x.shape(), w.shape()).expect("validated in forward");
            let (gx, gw) = conv2d_backward(&x.data(), &w.data(), g, &dims);
            vec![gx, gw]
        }
        Op::Reduce { op, map, count } => {
            let av = parents[0].data();
            let ga = match op {
                ReduceOp::Sum => map.iter().map(|&o| g[o]).collect(),
                ReduceOp::Mean => map.iter().map(|&o| g[o] / *count as f64).collect(),
                ReduceOp::L2Norm => {
                    let norms = out.data();
                    map.iter()
                        .zip(av.iter())
                        .map(|(&o, &x)| if norms[o] > 0.0 { g[o] * x / norms[o] } else { 0.0 })
                        .collect()
                }
            };
            vec![ga]
        }
        Op::Reshape => vec![g.to_vec()],
        Op::Gather(index) => {
            let mut ga = vec![0.0; parents[0].numel()];
            for (gi, &src) in g.iter().zip(index.iter()) {
                ga[src] += gi;
            }
            vec![ga]
        }
        Op::Concat => {
            let mut offset = 0;
            parents
                .iter()
                .map(|p| {
                    let n = p.numel();
                    let part = g[offset..offset + n].to_vec();
                    offset += n;
                    part
                })
                .collect()
        }
        Op::Custom(rule) => {
            let av = parents[0].data();
            vec![rule.backward(&av, &out.data(), g)]
        }
    }
}

impl Tensor {
    /// Reverse-mode sweep from a scalar loss. Leaf gradients accumulate into
    /// the leaves and are also returned for this pass alone.
    pub fn backward(&self) -> Result<Gradients> {
        if self.numel() != 1 {
            return Err(AceError::NonScalarLoss(self.shape().to_vec()));
        }
        let mut result = Gradients::default();
        if !self.requires_grad() {
            return Ok(result);
        }

        // Collect the graph reachable through gradient-carrying nodes.
        let mut nodes: Vec<Tensor> = Vec::new();
        let mut seen: HashSet<TensorId> = HashSet::new();
        let mut stack = vec![self.clone()];
        while let Some(t) = stack.pop() {
            if !seen.insert(t.id()) {
                continue;
            }
            if let Some(node) = t.node() {
                stack.extend(node.parents.iter().filter(|p| p.requires_grad()).cloned());
            }
            nodes.push(t);
        }
        // Creation order is a topological order; walk it backwards.
        nodes.sort_by_key(|t| std::cmp::Reverse(t.id()));

        let mut pending: HashMap<TensorId, Vec<f64>> = HashMap::new();
        pending.insert(self.id(), vec![1.0]);
        for t in &nodes {
            let Some(g) = pending.remove(&t.id()) else {
                continue;
            };
            match t.node() {
                None => {
                    t.accumulate_grad(&g);
                    result.by_id.insert(t.id(), g);
                }
                Some(node) => {
                    let grads = local_backward(t, &node.op, &node.parents, &g);
                    for (parent, pg) in node.parents.iter().zip(grads) {
                        if !parent.requires_grad() {
                            continue;
                        }
                        match pending.get_mut(&parent.id()) {
                            Some(acc) => acc.iter_mut().zip(&pg).for_each(|(a, b)| *a += b),
                            None => {
                                pending.insert(parent.id(), pg);
                            }
                        }
                    }
                }
            }
        }
        Ok(result)
    }
}
