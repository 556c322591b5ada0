//! Dense f64 tensors with reverse-mode differentiation over a dynamically
//! recorded graph.
//!
//! A [`Tensor`] is an immutable value. Operations on tensors that carry a
//! graph node record a new node whose backward closure maps the output
//! gradient to gradients for each input. [`backward`] walks the graph from a
//! scalar loss in reverse topological order and collects gradients for every
//! parameter leaf it reaches.

mod fft;
mod gradcheck;
mod kernels;
mod ops;
mod params;

use std::cell::Cell;
use std::collections::{HashMap, HashSet};
use std::fmt;
use std::rc::Rc;
use std::sync::Arc;

use crate::error::{Error, Result};

pub use fft::{fft, ifft, ifft_real, Complex};
pub use gradcheck::{
    compare_gradients, grad_check, grad_check_with, numeric_gradient, GradCheckOptions,
    GradReport, ParamError,
};
pub use kernels::{matmul, matmul_a_bt, matmul_at_b};
pub use ops::{erf, gelu_scalar, normal_cdf};
pub use params::{Param, ParamId, ParamStore};

type BackwardFn = Box<dyn Fn(&[f64], &[bool]) -> Vec<Option<Vec<f64>>>>;

pub(crate) struct Node {
    id: usize,
    inputs: Vec<Option<Rc<Node>>>,
    backward: Option<BackwardFn>,
    param: Option<ParamId>,
}

thread_local! {
    static NEXT_NODE: Cell<usize> = const { Cell::new(0) };
    static GRAD_ENABLED: Cell<bool> = const { Cell::new(true) };
}

fn next_node_id() -> usize {
    NEXT_NODE.with(|c| {
        let id = c.get();
        c.set(id + 1);
        id
    })
}

pub fn is_grad_enabled() -> bool {
    GRAD_ENABLED.with(|g| g.get())
}

/// Runs `f` with graph recording disabled on this thread.
pub fn no_grad<R>(f: impl FnOnce() -> R) -> R {
    struct Restore(bool);
    impl Drop for Restore {
        fn drop(&mut self) {
            GRAD_ENABLED.with(|g| g.set(self.0));
        }
    }
    let _restore = Restore(GRAD_ENABLED.with(|g| g.replace(false)));
    f()
}

#[derive(Clone)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Arc<Vec<f64>>,
    node: Option<Rc<Node>>,
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.shape)
            .field("tracked", &self.node.is_some())
            .finish()
    }
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if shape.iter().any(|&e| e == 0) || numel != data.len() {
            return Err(Error::dim("Tensor::new", &shape, &[data.len()]));
        }
        Ok(Self {
            shape,
            data: Arc::new(data),
            node: None,
        })
    }

    pub fn from_shared(shape: Vec<usize>, data: Arc<Vec<f64>>) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if shape.iter().any(|&e| e == 0) || numel != data.len() {
            return Err(Error::dim("Tensor::from_shared", &shape, &[data.len()]));
        }
        Ok(Self {
            shape,
            data,
            node: None,
        })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let numel = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: Arc::new(vec![0.0; numel]),
            node: None,
        }
    }

    pub fn scalar(v: f64) -> Self {
        Self {
            shape: vec![1],
            data: Arc::new(vec![v]),
            node: None,
        }
    }

    /// A leaf that participates in differentiation as parameter `id`.
    pub fn param(id: ParamId, shape: Vec<usize>, data: Arc<Vec<f64>>) -> Result<Self> {
        let mut t = Self::from_shared(shape, data)?;
        if is_grad_enabled() {
            t.node = Some(Rc::new(Node {
                id: next_node_id(),
                inputs: Vec::new(),
                backward: None,
                param: Some(id),
            }));
        }
        Ok(t)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn is_tracked(&self) -> bool {
        self.node.is_some()
    }

    /// Value copy without the graph link.
    pub fn detach(&self) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: Arc::clone(&self.data),
            node: None,
        }
    }

    pub fn item(&self) -> f64 {
        self.data[0]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub(crate) fn from_op(
        shape: Vec<usize>,
        data: Vec<f64>,
        inputs: &[&Tensor],
        backward: impl Fn(&[f64], &[bool]) -> Vec<Option<Vec<f64>>> + 'static,
    ) -> Tensor {
        Self::from_op_shared(shape, Arc::new(data), inputs, backward)
    }

    pub(crate) fn from_op_shared(
        shape: Vec<usize>,
        data: Arc<Vec<f64>>,
        inputs: &[&Tensor],
        backward: impl Fn(&[f64], &[bool]) -> Vec<Option<Vec<f64>>> + 'static,
    ) -> Tensor {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        let tracked = is_grad_enabled() && inputs.iter().any(|t| t.node.is_some());
        let node = tracked.then(|| {
            Rc::new(Node {
                id: next_node_id(),
                inputs: inputs.iter().map(|t| t.node.clone()).collect(),
                backward: Some(Box::new(backward)),
                param: None,
            })
        });
        Tensor { shape, data, node }
    }
}

/// Gradients of a scalar loss keyed by parameter.
#[derive(Debug, Clone, Default)]
pub struct Gradients {
    map: HashMap<ParamId, Vec<f64>>,
}

impl Gradients {
    pub fn get(&self, id: ParamId) -> Option<&[f64]> {
        self.map.get(&id).map(|v| v.as_slice())
    }

    /// Gradient for `id`, zeros of length `len` when the parameter was unreachable.
    pub fn get_or_zeros(&self, id: ParamId, len: usize) -> Vec<f64> {
        self.map.get(&id).cloned().unwrap_or_else(|| vec![0.0; len])
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    /// Dense gradients aligned with the store; unreachable parameters get zeros.
    pub fn aligned(&self, store: &ParamStore) -> Vec<Vec<f64>> {
        store
            .iter()
            .map(|(id, p)| self.get_or_zeros(id, p.numel()))
            .collect()
    }
}

/// Reverse-mode pass from a one-element tensor.
pub fn backward(loss: &Tensor) -> Result<Gradients> {
    if loss.numel() != 1 {
        return Err(Error::Contract(format!(
            "backward needs a scalar loss, got shape {:?}",
            loss.shape
        )));
    }
    let Some(root) = loss.node.clone() else {
        return Err(Error::Contract(
            "backward called on a tensor that is not part of a graph".into(),
        ));
    };

    // Iterative post-order DFS gives a topological order (inputs first).
    let mut order: Vec<Rc<Node>> = Vec::new();
    let mut visited: HashSet<usize> = HashSet::new();
    let mut stack: Vec<(Rc<Node>, bool)> = vec![(root.clone(), false)];
    while let Some((node, expanded)) = stack.pop() {
        if expanded {
            order.push(node);
            continue;
        }
        if !visited.insert(node.id) {
            continue;
        }
        stack.push((node.clone(), true));
        for inp in node.inputs.iter().flatten() {
            if !visited.contains(&inp.id) {
                stack.push((inp.clone(), false));
            }
        }
    }

    let mut grads: HashMap<usize, Vec<f64>> = HashMap::new();
    grads.insert(root.id, vec![1.0]);
    let mut out = Gradients::default();

    for node in order.iter().rev() {
        let Some(g) = grads.remove(&node.id) else {
            continue;
        };
        if let Some(pid) = node.param {
            accumulate(out.map.entry(pid).or_default(), &g);
            continue;
        }
        let Some(bw) = &node.backward else { continue };
        let needs: Vec<bool> = node.inputs.iter().map(|i| i.is_some()).collect();
        let input_grads = bw(&g, &needs);
        for (inp, ig) in node.inputs.iter().zip(input_grads) {
            if let (Some(inp), Some(ig)) = (inp, ig) {
                accumulate(grads.entry(inp.id).or_default(), &ig);
            }
        }
    }
    Ok(out)
}

fn accumulate(dst: &mut Vec<f64>, src: &[f64]) {
    if dst.is_empty() {
        dst.extend_from_slice(src);
    } else {
        for (d, s) in dst.iter_mut().zip(src) {
            *d += s;
        }
    }
}
