//! Dense `f64` tensors with a reverse-mode gradient tape.
//!
//! A [`Tensor`] is a reference-counted handle. Operations whose inputs
//! require gradients record a [`TapeNode`] on the result; calling
//! [`Tensor::backward`] on a scalar walks those nodes in reverse creation
//! order and accumulates gradients into the leaves. Leaves keep their
//! gradients across calls until [`Tensor::zero_grad`] is invoked.
//!
//! Tensors are deliberately `!Send`: a tape belongs to one thread of control.

mod autograd;
mod conv;
pub mod gradcheck;
mod ops;

use std::cell::{Ref, RefCell};
use std::fmt;
use std::rc::Rc;
use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{AceError, Result};

pub use autograd::Gradients;
pub use conv::{conv2d, Padding};
pub use ops::{concat, elementwise, gather, matmul, reduce, BinaryOp, CustomBackward, ElementwiseOp, ReduceOp, UnaryOp};

static NEXT_ID: AtomicU64 = AtomicU64::new(0);

fn next_id() -> u64 {
    NEXT_ID.fetch_add(1, Ordering::Relaxed)
}

/// Identity of a tensor node. Ids grow with creation time, which is also a
/// valid topological order of the tape.
pub type TensorId = u64;

#[derive(Clone)]
pub struct Tensor(Rc<Inner>);

struct Inner {
    id: TensorId,
    shape: Vec<usize>,
    data: RefCell<Vec<f64>>,
    grad: RefCell<Option<Vec<f64>>>,
    requires_grad: bool,
    node: Option<TapeNode>,
}

/// Record of the operation that produced a non-leaf tensor.
pub struct TapeNode {
    pub(crate) op: ops::Op,
    pub(crate) parents: Vec<Tensor>,
}

impl TapeNode {
    pub fn op_name(&self) -> &'static str {
        self.op.name()
    }

    pub fn parents(&self) -> &[Tensor] {
        &self.parents
    }
}

pub(crate) fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

impl Tensor {
    fn from_parts(shape: Vec<usize>, data: Vec<f64>, requires_grad: bool, node: Option<TapeNode>) -> Self {
        debug_assert_eq!(numel(&shape), data.len());
        Tensor(Rc::new(Inner {
            id: next_id(),
            shape,
            data: RefCell::new(data),
            grad: RefCell::new(None),
            requires_grad,
            node,
        }))
    }

    /// Creates a constant tensor. Fails when the buffer length does not match the shape.
    pub fn new(data: Vec<f64>, shape: &[usize]) -> Result<Self> {
        if numel(shape) != data.len() {
            return Err(AceError::InvalidShape {
                shape: shape.to_vec(),
                reason: format!("buffer holds {} values", data.len()),
            });
        }
        Ok(Self::from_parts(shape.to_vec(), data, false, None))
    }

    /// Creates a trainable leaf.
    pub fn param(data: Vec<f64>, shape: &[usize]) -> Result<Self> {
        Ok(Self::new(data, shape)?.requires_grad_leaf())
    }

    pub fn scalar(value: f64) -> Self {
        Self::from_parts(Vec::new(), vec![value], false, None)
    }

    pub fn scalar_param(value: f64) -> Self {
        Self::from_parts(Vec::new(), vec![value], true, None)
    }

    pub fn vector(data: Vec<f64>) -> Self {
        let n = data.len();
        Self::from_parts(vec![n], data, false, None)
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::from_parts(shape.to_vec(), vec![0.0; numel(shape)], false, None)
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        Self::from_parts(shape.to_vec(), vec![value; numel(shape)], false, None)
    }

    /// Returns a leaf copy of this tensor's values that requires gradients.
    pub fn requires_grad_leaf(&self) -> Self {
        Self::from_parts(self.shape().to_vec(), self.to_vec(), true, None)
    }

    /// Returns a constant leaf holding a copy of the current values.
    pub fn detach(&self) -> Self {
        Self::from_parts(self.shape().to_vec(), self.to_vec(), false, None)
    }

    /// Copies values and the `requires_grad` flag into a fresh, untaped leaf.
    pub fn deep_copy(&self) -> Self {
        Self::from_parts(self.shape().to_vec(), self.to_vec(), self.0.requires_grad, None)
    }

    pub(crate) fn from_op(shape: Vec<usize>, data: Vec<f64>, op: ops::Op, parents: Vec<Tensor>) -> Self {
        let requires_grad = parents.iter().any(Tensor::requires_grad);
        let node = requires_grad.then(|| TapeNode { op, parents });
        Self::from_parts(shape, data, requires_grad, node)
    }

    pub fn id(&self) -> TensorId {
        self.0.id
    }

    pub fn shape(&self) -> &[usize] {
        &self.0.shape
    }

    pub fn rank(&self) -> usize {
        self.0.shape.len()
    }

    pub fn numel(&self) -> usize {
        numel(&self.0.shape)
    }

    pub fn requires_grad(&self) -> bool {
        self.0.requires_grad
    }

    pub fn is_leaf(&self) -> bool {
        self.0.node.is_none()
    }

    pub fn node(&self) -> Option<&TapeNode> {
        self.0.node.as_ref()
    }

    pub fn data(&self) -> Ref<'_, Vec<f64>> {
        self.0.data.borrow()
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.0.data.borrow().clone()
    }

    /// Value of a single-element tensor.
    pub fn item(&self) -> f64 {
        let data = self.0.data.borrow();
        assert_eq!(data.len(), 1, "item() on tensor of shape {:?}", self.0.shape);
        data[0]
    }

    pub fn grad(&self) -> Option<Vec<f64>> {
        self.0.grad.borrow().clone()
    }

    pub fn zero_grad(&self) {
        *self.0.grad.borrow_mut() = None;
    }

    /// Overwrites the values of a leaf. Taped intermediates that captured the
    /// old values are unaffected in value but stale; callers update leaves only
    /// between forward passes.
    pub fn set_data(&self, values: Vec<f64>) -> Result<()> {
        if values.len() != self.numel() {
            return Err(AceError::LengthMismatch {
                op: "set_data",
                left: self.numel(),
                right: values.len(),
            });
        }
        *self.0.data.borrow_mut() = values;
        Ok(())
    }

    pub fn update_data(&self, f: impl FnOnce(&mut [f64])) {
        f(&mut self.0.data.borrow_mut());
    }

    pub(crate) fn accumulate_grad(&self, g: &[f64]) {
        let mut slot = self.0.grad.borrow_mut();
        match slot.as_mut() {
            Some(acc) => acc.iter_mut().zip(g).for_each(|(a, b)| *a += b),
            None => *slot = Some(g.to_vec()),
        }
    }

    pub fn l2(&self) -> f64 {
        self.0.data.borrow().iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn all_finite(&self) -> bool {
        self.0.data.borrow().iter().all(|v| v.is_finite())
    }
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let data = self.0.data.borrow();
        let preview: Vec<f64> = data.iter().take(8).copied().collect();
        f.debug_struct("Tensor")
            .field("id", &self.0.id)
            .field("shape", &self.0.shape)
            .field("requires_grad", &self.0.requires_grad)
            .field("op", &self.node().map(|n| n.op_name()))
            .field("data", &preview)
            .finish()
    }
}

#[cfg(test)]
mod tests;
