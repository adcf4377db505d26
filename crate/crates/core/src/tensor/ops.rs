use std::rc::Rc;

use super::{numel, Tensor};
use crate::error::{AceError, Result};

/// Tape operation identifiers together with the context their backward rule needs.
pub(crate) enum Op {
    Binary(BinaryOp),
    Unary(UnaryOp),
    Matmul,
    Conv2d,
    Reduce {
        op: ReduceOp,
        map: Rc<Vec<usize>>,
        count: usize,
    },
    Reshape,
    Gather(Rc<Vec<usize>>),
    Concat,
    Custom(Rc<dyn CustomBackward>),
}

impl Op {
    pub(crate) fn name(&self) -> &'static str {
        match self {
            Op::Binary(BinaryOp::Add) => "add",
            Op::Binary(BinaryOp::Sub) => "sub",
            Op::Binary(BinaryOp::Mul) => "mul",
            Op::Unary(UnaryOp::Relu) => "relu",
            Op::Unary(UnaryOp::Abs) => "abs",
            Op::Unary(UnaryOp::Square) => "square",
            Op::Unary(UnaryOp::Neg) => "neg",
            Op::Matmul => "matmul",
            Op::Conv2d => "conv2d",
            Op::Reduce { op: ReduceOp::Sum, .. } => "sum",
            Op::Reduce { op: ReduceOp::Mean, .. } => "mean",
            Op::Reduce { op: ReduceOp::L2Norm, .. } => "l2_norm",
            Op::Reshape => "reshape",
            Op::Gather(_) => "gather",
            Op::Concat => "concat",
            Op::Custom(c) => c.name(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnaryOp {
    Relu,
    Abs,
    Square,
    Neg,
}

/// The elementwise family, unary and binary members together.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ElementwiseOp {
    Add,
    Sub,
    Mul,
    Relu,
    Abs,
    Square,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReduceOp {
    Sum,
    Mean,
    L2Norm,
}

/// Backward rule for a user-defined unary map. The forward values are
/// supplied by the caller; `backward` returns the input gradient.
pub trait CustomBackward {
    fn name(&self) -> &'static str;
    fn backward(&self, input: &[f64], output: &[f64], grad_out: &[f64]) -> Vec<f64>;
}

/// Applies an elementwise op. Binary ops require equal shapes or a
/// single-element operand, which broadcasts.
pub fn elementwise(op: ElementwiseOp, a: &Tensor, b: Option<&Tensor>) -> Result<Tensor> {
    let need_b = |b: Option<&Tensor>| {
        b.cloned().ok_or_else(|| AceError::InvalidArgument(format!("{op:?} needs two operands")))
    };
    match op {
        ElementwiseOp::Add => binary(BinaryOp::Add, a, &need_b(b)?),
        ElementwiseOp::Sub => binary(BinaryOp::Sub, a, &need_b(b)?),
        ElementwiseOp::Mul => binary(BinaryOp::Mul, a, &need_b(b)?),
        ElementwiseOp::Relu => Ok(unary(UnaryOp::Relu, a)),
        ElementwiseOp::Abs => Ok(unary(UnaryOp::Abs, a)),
        ElementwiseOp::Square => Ok(unary(UnaryOp::Square, a)),
    }
}

fn broadcast_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<Vec<usize>> {
    if a.shape() == b.shape() {
        Ok(a.shape().to_vec())
    } else if b.numel() == 1 {
        Ok(a.shape().to_vec())
    } else if a.numel() == 1 {
        Ok(b.shape().to_vec())
    } else {
        Err(AceError::ShapeMismatch {
            op,
            left: a.shape().to_vec(),
            right: b.shape().to_vec(),
        })
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

fn binary(op: BinaryOp, a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let name = Op::Binary(op).name();
    let shape = broadcast_shape(name, a, b)?;
    let n = numel(&shape);
    let out = {
        let (av, bv) = (a.data(), b.data());
        (0..n)
            .map(|i| {
                let (x, y) = (at(&av, i), at(&bv, i));
                match op {
                    BinaryOp::Add => x + y,
                    BinaryOp::Sub => x - y,
                    BinaryOp::Mul => x * y,
                }
            })
            .collect()
    };
    Ok(Tensor::from_op(shape, out, Op::Binary(op), vec![a.clone(), b.clone()]))
}

fn unary(op: UnaryOp, a: &Tensor) -> Tensor {
    let out = a
        .data()
        .iter()
        .map(|&x| match op {
            UnaryOp::Relu => {
                if x > 0.0 {
                    x
                } else {
                    0.0
                }
            }
            UnaryOp::Abs => x.abs(),
            UnaryOp::Square => x * x,
            UnaryOp::Neg => -x,
        })
        .collect();
    Tensor::from_op(a.shape().to_vec(), out, Op::Unary(op), vec![a.clone()])
}

/// `sign` with `sign(0) = 0`, the subgradient used for `|x|`.
pub(crate) fn sign0(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Row-major product of two rank-2 tensors.
pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.rank() != 2 || b.rank() != 2 || a.shape()[1] != b.shape()[0] {
        return Err(AceError::ShapeMismatch {
            op: "matmul",
            left: a.shape().to_vec(),
            right: b.shape().to_vec(),
        });
    }
    let (m, k, n) = (a.shape()[0], a.shape()[1], b.shape()[1]);
    let out = matmul_raw(&a.data(), &b.data(), m, k, n);
    Ok(Tensor::from_op(vec![m, n], out, Op::Matmul, vec![a.clone(), b.clone()]))
}

pub(crate) fn matmul_raw(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = a[i * k + p];
            if aip == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (o, &bv) in row.iter_mut().zip(brow) {
                *o += aip * bv;
            }
        }
    }
    out
}

/// Reduces over `axes` (all axes when `None`). Reduced axes are removed from the shape.
pub fn reduce(op: ReduceOp, a: &Tensor, axes: Option<&[usize]>) -> Result<Tensor> {
    let rank = a.rank();
    let mut reduced = vec![false; rank];
    match axes {
        None => reduced.iter_mut().for_each(|r| *r = true),
        Some(list) => {
            for &axis in list {
                if axis >= rank {
                    return Err(AceError::InvalidAxis { axis, rank });
                }
                reduced[axis] = true;
            }
        }
    }
    let shape = a.shape();
    let out_shape: Vec<usize> = shape
        .iter()
        .zip(&reduced)
        .filter(|(_, r)| !**r)
        .map(|(d, _)| *d)
        .collect();
    let count: usize = shape.iter().zip(&reduced).filter(|(_, r)| **r).map(|(d, _)| *d).product();

    // Map every input flat index to the output flat index it reduces into.
    let total = a.numel();
    let mut map = Vec::with_capacity(total);
    let mut idx = vec![0usize; rank];
    for _ in 0..total {
        let mut o = 0;
        for (ax, &i) in idx.iter().enumerate() {
            if !reduced[ax] {
                o = o * shape[ax] + i;
            }
        }
        map.push(o);
        for ax in (0..rank).rev() {
            idx[ax] += 1;
            if idx[ax] < shape[ax] {
                break;
            }
            idx[ax] = 0;
        }
    }

    let mut out = vec![0.0; numel(&out_shape)];
    {
        let data = a.data();
        match op {
            ReduceOp::Sum | ReduceOp::Mean => {
                for (v, &o) in data.iter().zip(&map) {
                    out[o] += v;
                }
                if op == ReduceOp::Mean && count > 0 {
                    out.iter_mut().for_each(|v| *v /= count as f64);
                }
            }
            ReduceOp::L2Norm => {
                for (v, &o) in data.iter().zip(&map) {
                    out[o] += v * v;
                }
                out.iter_mut().for_each(|v| *v = v.sqrt());
            }
        }
    }
    Ok(Tensor::from_op(
        out_shape,
        out,
        Op::Reduce {
            op,
            map: Rc::new(map),
            count,
        },
        vec![a.clone()],
    ))
}

/// `out[i] = a[index[i]]`, shaped as `shape`. Used for exact index permutations
/// such as rotations, row permutations, and kernel tiling.
pub fn gather(a: &Tensor, index: Rc<Vec<usize>>, shape: &[usize]) -> Result<Tensor> {
    if numel(shape) != index.len() {
        return Err(AceError::InvalidShape {
            shape: shape.to_vec(),
            reason: format!("index map has {} entries", index.len()),
        });
    }
    let n = a.numel();
    if let Some(&bad) = index.iter().find(|&&i| i >= n) {
        return Err(AceError::InvalidArgument(format!(
            "gather index {bad} out of range for {n} elements"
        )));
    }
    let out = {
        let data = a.data();
        index.iter().map(|&i| data[i]).collect()
    };
    Ok(Tensor::from_op(shape.to_vec(), out, Op::Gather(index), vec![a.clone()]))
}

/// Concatenates the flattened values of `parts` into a vector.
pub fn concat(parts: &[Tensor]) -> Tensor {
    let mut out = Vec::new();
    for p in parts {
        out.extend_from_slice(&p.data());
    }
    let n = out.len();
    Tensor::from_op(vec![n], out, Op::Concat, parts.to_vec())
}

impl Tensor {
    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        binary(BinaryOp::Add, self, other)
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        binary(BinaryOp::Sub, self, other)
    }

    pub fn mul(&self, other: &Tensor) -> Result<Tensor> {
        binary(BinaryOp::Mul, self, other)
    }

    pub fn relu(&self) -> Tensor {
        unary(UnaryOp::Relu, self)
    }

    pub fn abs(&self) -> Tensor {
        unary(UnaryOp::Abs, self)
    }

    pub fn square(&self) -> Tensor {
        unary(UnaryOp::Square, self)
    }

    pub fn neg(&self) -> Tensor {
        unary(UnaryOp::Neg, self)
    }

    /// Multiplies by a constant.
    pub fn scale(&self, c: f64) -> Tensor {
        binary(BinaryOp::Mul, self, &Tensor::scalar(c)).expect("scalar broadcast")
    }

    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        matmul(self, other)
    }

    pub fn sum(&self) -> Tensor {
        reduce(ReduceOp::Sum, self, None).expect("full reduction")
    }

    pub fn mean(&self) -> Tensor {
        reduce(ReduceOp::Mean, self, None).expect("full reduction")
    }

    pub fn l2_norm(&self) -> Tensor {
        reduce(ReduceOp::L2Norm, self, None).expect("full reduction")
    }

    pub fn sum_axes(&self, axes: &[usize]) -> Result<Tensor> {
        reduce(ReduceOp::Sum, self, Some(axes))
    }

    pub fn mean_axes(&self, axes: &[usize]) -> Result<Tensor> {
        reduce(ReduceOp::Mean, self, Some(axes))
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor> {
        if numel(shape) != self.numel() {
            return Err(AceError::ShapeMismatch {
                op: "reshape",
                left: self.shape().to_vec(),
                right: shape.to_vec(),
            });
        }
        Ok(Tensor::from_op(shape.to_vec(), self.to_vec(), Op::Reshape, vec![self.clone()]))
    }

    pub fn flatten(&self) -> Tensor {
        self.reshape(&[self.numel()]).expect("same element count")
    }

    pub fn gather(&self, index: Rc<Vec<usize>>, shape: &[usize]) -> Result<Tensor> {
        gather(self, index, shape)
    }

    /// Elementwise map with caller-supplied forward values and backward rule.
    pub fn custom_unary(&self, output: Vec<f64>, rule: Rc<dyn CustomBackward>) -> Result<Tensor> {
        if output.len() != self.numel() {
            return Err(AceError::LengthMismatch {
                op: "custom_unary",
                left: self.numel(),
                right: output.len(),
            });
        }
        Ok(Tensor::from_op(self.shape().to_vec(), output, Op::Custom(rule), vec![self.clone()]))
    }
}
