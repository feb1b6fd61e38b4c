//! Tensor storage, graph recording and the backward pass.

use std::cell::{Cell, RefCell};
use std::collections::HashSet;
use std::fmt;
use std::rc::Rc;

/// Element type of a [`Tensor`]: `f32` for training, `f64` for oracles.
pub trait Real:
    num_traits::Float + num_traits::NumAssign + Copy + fmt::Debug + fmt::Display + 'static
{
    /// Dtype code used by the ZTEN on-disk format (0 = f32, 1 = f64).
    const DTYPE_CODE: u8;
    fn from_f64(x: f64) -> Self;
    fn into_f64(self) -> f64;

    /// Raw strided gemm kernel; implementation detail of `matmul` & friends.
    #[doc(hidden)]
    #[allow(clippy::too_many_arguments)]
    unsafe fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    );
}

impl Real for f32 {
    const DTYPE_CODE: u8 = 0;
    #[inline]
    fn from_f64(x: f64) -> Self {
        x as f32
    }
    #[inline]
    fn into_f64(self) -> f64 {
        self as f64
    }
    #[allow(clippy::too_many_arguments)]
    unsafe fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: f32,
        a: *const f32,
        rsa: isize,
        csa: isize,
        b: *const f32,
        rsb: isize,
        csb: isize,
        beta: f32,
        c: *mut f32,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::sgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }
}

impl Real for f64 {
    const DTYPE_CODE: u8 = 1;
    #[inline]
    fn from_f64(x: f64) -> Self {
        x
    }
    #[inline]
    fn into_f64(self) -> f64 {
        self
    }
    #[allow(clippy::too_many_arguments)]
    unsafe fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: f64,
        a: *const f64,
        rsa: isize,
        csa: isize,
        b: *const f64,
        rsb: isize,
        csb: isize,
        beta: f64,
        c: *mut f64,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::dgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }
}

thread_local! {
    static NEXT_ID: Cell<u64> = const { Cell::new(0) };
    static GRAD_ENABLED: Cell<bool> = const { Cell::new(true) };
}

fn next_id() -> u64 {
    NEXT_ID.with(|c| {
        let id = c.get();
        c.set(id + 1);
        id
    })
}

/// Run `f` with graph recording disabled (inference / benchmarking mode).
pub fn no_grad<R>(f: impl FnOnce() -> R) -> R {
    let prev = GRAD_ENABLED.with(|c| c.replace(false));
    let out = f();
    GRAD_ENABLED.with(|c| c.set(prev));
    out
}

fn grad_enabled() -> bool {
    GRAD_ENABLED.with(|c| c.get())
}

pub(crate) type BackFn<T> = Box<dyn Fn(&[T], &[Tensor<T>])>;

pub(crate) struct Node<T: Real> {
    id: u64,
    shape: Vec<usize>,
    data: Rc<Vec<T>>,
    grad: RefCell<Option<Vec<T>>>,
    parents: Vec<Tensor<T>>,
    backward: Option<BackFn<T>>,
    requires_grad: bool,
}

/// Dense row-major n-dimensional array with optional gradient tracking.
///
/// Cloning is cheap (reference-counted); the underlying buffer is immutable
/// after construction. Parameter updates are expressed by building a new
/// tensor rather than mutating in place.
pub struct Tensor<T: Real> {
    pub(crate) node: Rc<Node<T>>,
}

impl<T: Real> Clone for Tensor<T> {
    fn clone(&self) -> Self {
        Tensor { node: Rc::clone(&self.node) }
    }
}

impl<T: Real> fmt::Debug for Tensor<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Tensor(shape={:?}, requires_grad={})", self.shape(), self.requires_grad())
    }
}

impl<T: Real> Tensor<T> {
    // ── construction ────────────────────────────────────────────────

    pub fn from_vec(shape: &[usize], data: Vec<T>) -> Self {
        assert_eq!(
            shape.iter().product::<usize>(),
            data.len(),
            "shape {:?} does not match data length {}",
            shape,
            data.len()
        );
        Tensor {
            node: Rc::new(Node {
                id: next_id(),
                shape: shape.to_vec(),
                data: Rc::new(data),
                grad: RefCell::new(None),
                parents: Vec::new(),
                backward: None,
                requires_grad: false,
            }),
        }
    }

    pub fn from_f64_slice(shape: &[usize], data: &[f64]) -> Self {
        Tensor::from_vec(shape, data.iter().map(|&x| T::from_f64(x)).collect())
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Tensor::from_vec(shape, vec![T::zero(); shape.iter().product()])
    }

    pub fn ones(shape: &[usize]) -> Self {
        Tensor::from_vec(shape, vec![T::one(); shape.iter().product()])
    }

    pub fn full(shape: &[usize], value: T) -> Self {
        Tensor::from_vec(shape, vec![value; shape.iter().product()])
    }

    pub fn scalar(value: T) -> Self {
        Tensor::from_vec(&[1], vec![value])
    }

    pub fn eye(n: usize) -> Self {
        let mut data = vec![T::zero(); n * n];
        for i in 0..n {
            data[i * n + i] = T::one();
        }
        Tensor::from_vec(&[n, n], data)
    }

    /// Mark this leaf as a trainable parameter. Panics on non-leaf tensors.
    pub fn requiring_grad(self) -> Self {
        assert!(self.node.parents.is_empty(), "only leaves can require grad");
        Tensor {
            node: Rc::new(Node {
                id: next_id(),
                shape: self.node.shape.clone(),
                data: Rc::clone(&self.node.data),
                grad: RefCell::new(None),
                parents: Vec::new(),
                backward: None,
                requires_grad: true,
            }),
        }
    }

    /// Internal op constructor: records parents and a backward closure only
    /// when grad mode is on and some parent requires a gradient.
    pub(crate) fn from_op(
        shape: Vec<usize>,
        data: Vec<T>,
        parents: Vec<Tensor<T>>,
        backward: impl Fn(&[T], &[Tensor<T>]) + 'static,
    ) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        let record = grad_enabled() && parents.iter().any(|p| p.requires_grad());
        if record {
            Tensor {
                node: Rc::new(Node {
                    id: next_id(),
                    shape,
                    data: Rc::new(data),
                    grad: RefCell::new(None),
                    parents,
                    backward: Some(Box::new(backward)),
                    requires_grad: true,
                }),
            }
        } else {
            Tensor::from_vec(&shape, data)
        }
    }

    /// Same as [`from_op`] but the output shares `data` with another tensor.
    pub(crate) fn from_op_shared(
        shape: Vec<usize>,
        data: Rc<Vec<T>>,
        parents: Vec<Tensor<T>>,
        backward: impl Fn(&[T], &[Tensor<T>]) + 'static,
    ) -> Self {
        let record = grad_enabled() && parents.iter().any(|p| p.requires_grad());
        Tensor {
            node: Rc::new(Node {
                id: next_id(),
                shape,
                data,
                grad: RefCell::new(None),
                parents: if record { parents } else { Vec::new() },
                backward: if record { Some(Box::new(backward)) } else { None },
                requires_grad: record,
            }),
        }
    }

    // ── accessors ───────────────────────────────────────────────────

    pub fn shape(&self) -> &[usize] {
        &self.node.shape
    }

    pub fn numel(&self) -> usize {
        self.node.shape.iter().product()
    }

    pub fn rank(&self) -> usize {
        self.node.shape.len()
    }

    /// Rows of a 2-D tensor (or length of a 1-D one).
    pub fn dim(&self, axis: usize) -> usize {
        self.node.shape[axis]
    }

    pub fn data(&self) -> &[T] {
        &self.node.data
    }

    pub(crate) fn data_rc(&self) -> Rc<Vec<T>> {
        Rc::clone(&self.node.data)
    }

    pub fn item(&self) -> T {
        assert_eq!(self.numel(), 1, "item() requires a scalar tensor");
        self.node.data[0]
    }

    pub fn to_f64_vec(&self) -> Vec<f64> {
        self.node.data.iter().map(|x| x.into_f64()).collect()
    }

    pub fn requires_grad(&self) -> bool {
        self.node.requires_grad
    }

    pub fn is_finite(&self) -> bool {
        self.node.data.iter().all(|x| x.is_finite())
    }

    /// Accumulated gradient, if backward has reached this tensor.
    pub fn grad(&self) -> Option<Vec<T>> {
        self.node.grad.borrow().clone()
    }

    pub fn zero_grad(&self) {
        *self.node.grad.borrow_mut() = None;
    }

    /// A leaf view of the same buffer, cut off from the graph.
    pub fn detach(&self) -> Self {
        Tensor {
            node: Rc::new(Node {
                id: next_id(),
                shape: self.node.shape.clone(),
                data: Rc::clone(&self.node.data),
                grad: RefCell::new(None),
                parents: Vec::new(),
                backward: None,
                requires_grad: false,
            }),
        }
    }

    /// Force-allocate a zero gradient buffer (test hook).
    #[cfg(test)]
    pub(crate) fn accumulate_grad_for_test(&self) {
        self.accumulate_grad(|_| {});
    }

    pub(crate) fn accumulate_grad(&self, delta: impl Fn(&mut [T])) {
        if !self.node.requires_grad {
            return;
        }
        let mut slot = self.node.grad.borrow_mut();
        let buf = slot.get_or_insert_with(|| vec![T::zero(); self.numel()]);
        delta(buf);
    }

    // ── backward ────────────────────────────────────────────────────

    /// Reverse-mode sweep from a scalar output. Gradients accumulate into
    /// every reachable tensor with `requires_grad`; leaves keep them until
    /// [`zero_grad`](Tensor::zero_grad).
    pub fn backward(&self) {
        assert_eq!(self.numel(), 1, "backward() requires a scalar output");
        if !self.node.requires_grad {
            return;
        }
        let order = self.topo_order();
        *self.node.grad.borrow_mut() = Some(vec![T::one()]);
        for node in order.iter().rev() {
            let Some(back) = &node.node.backward else { continue };
            let guard = node.node.grad.borrow();
            let Some(g) = guard.as_ref() else { continue };
            back(g, &node.node.parents);
        }
        // Intermediate grads are not useful after the sweep; release them so
        // long training runs do not hold dead buffers until graph drop.
        for node in order.iter() {
            if node.node.backward.is_some() {
                *node.node.grad.borrow_mut() = None;
            }
        }
    }

    /// Post-order (parents before children) traversal of the recorded graph.
    fn topo_order(&self) -> Vec<Tensor<T>> {
        let mut order: Vec<Tensor<T>> = Vec::new();
        let mut seen: HashSet<u64> = HashSet::new();
        // Iterative DFS with an explicit "expanded" marker per frame.
        let mut stack: Vec<(Tensor<T>, bool)> = vec![(self.clone(), false)];
        while let Some((t, expanded)) = stack.pop() {
            if expanded {
                order.push(t);
                continue;
            }
            if !seen.insert(t.node.id) {
                continue;
            }
            stack.push((t.clone(), true));
            for p in &t.node.parents {
                if p.node.requires_grad && !seen.contains(&p.node.id) {
                    stack.push((p.clone(), false));
                }
            }
        }
        order
    }
}
