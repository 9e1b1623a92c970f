//! Tape-based reverse-mode differentiation.
//!
//! A [`Graph`] records every operation applied to its [`Var`]s together with a
//! closure that maps the output gradient onto the gradients of the inputs.
//! [`Graph::backward`] replays the tape in reverse. A graph is single-use:
//! build it for one forward pass, call `backward` once, drop it.

use std::cell::{Ref, RefCell};
use std::collections::HashMap;
use std::rc::Rc;

use crate::params::{ParamId, ParamStore};
use crate::{Float, Tensor};

type BackwardFn<F> = Box<dyn FnOnce(&Tensor<F>, &[bool]) -> Vec<Option<Tensor<F>>>>;

struct Node<F: Float> {
    value: Rc<Tensor<F>>,
    parents: Vec<usize>,
    requires_grad: bool,
    backward: Option<BackwardFn<F>>,
    param: Option<ParamId>,
}

pub struct Graph<F: Float> {
    nodes: RefCell<Vec<Node<F>>>,
    updates: RefCell<Vec<(ParamId, Tensor<F>)>>,
}

/// Handle to a value recorded on a [`Graph`].
#[derive(Clone, Copy)]
pub struct Var<'g, F: Float> {
    pub(crate) graph: &'g Graph<F>,
    pub(crate) id: usize,
}

impl<F: Float> std::fmt::Debug for Var<'_, F> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Var#{}{:?}", self.id, self.shape())
    }
}

/// Gradients produced by [`Graph::backward`].
pub struct Grads<F> {
    params: HashMap<ParamId, Tensor<F>>,
    leaves: HashMap<usize, Tensor<F>>,
}

impl<F: Float> Grads<F> {
    pub fn param(&self, id: ParamId) -> Option<&Tensor<F>> {
        self.params.get(&id)
    }

    pub fn wrt(&self, v: Var<'_, F>) -> Option<&Tensor<F>> {
        self.leaves.get(&v.id)
    }

    pub fn into_params(self) -> HashMap<ParamId, Tensor<F>> {
        self.params
    }
}

impl<F: Float> Default for Graph<F> {
    fn default() -> Self {
        Self::new()
    }
}

impl<F: Float> Graph<F> {
    pub fn new() -> Self {
        Self { nodes: RefCell::new(Vec::new()), updates: RefCell::new(Vec::new()) }
    }

    fn push_node(&self, node: Node<F>) -> Var<'_, F> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(node);
        Var { graph: self, id: nodes.len() - 1 }
    }

    /// A value that never receives a gradient (data, targets).
    pub fn constant(&self, value: Tensor<F>) -> Var<'_, F> {
        self.push_node(Node {
            value: Rc::new(value),
            parents: vec![],
            requires_grad: false,
            backward: None,
            param: None,
        })
    }

    /// A free leaf whose gradient is reported by [`Grads::wrt`].
    pub fn leaf(&self, value: Tensor<F>) -> Var<'_, F> {
        self.push_node(Node {
            value: Rc::new(value),
            parents: vec![],
            requires_grad: true,
            backward: None,
            param: None,
        })
    }

    /// Binds a stored parameter. Buffers are bound as constants.
    pub fn param(&self, store: &ParamStore<F>, id: ParamId) -> Var<'_, F> {
        let trainable = store.is_trainable(id);
        self.push_node(Node {
            value: store.shared(id),
            parents: vec![],
            requires_grad: trainable,
            backward: None,
            param: trainable.then_some(id),
        })
    }

    /// Records the result of an operation.
    pub(crate) fn op<'g>(
        &'g self,
        value: Tensor<F>,
        parents: &[Var<'g, F>],
        backward: impl FnOnce(&Tensor<F>, &[bool]) -> Vec<Option<Tensor<F>>> + 'static,
    ) -> Var<'g, F> {
        let requires_grad = {
            let nodes = self.nodes.borrow();
            parents.iter().any(|p| nodes[p.id].requires_grad)
        };
        self.push_node(Node {
            value: Rc::new(value),
            parents: parents.iter().map(|p| p.id).collect(),
            requires_grad,
            backward: if requires_grad { Some(Box::new(backward)) } else { None },
            param: None,
        })
    }

    pub(crate) fn value_rc(&self, id: usize) -> Rc<Tensor<F>> {
        self.nodes.borrow()[id].value.clone()
    }

    pub(crate) fn requires_grad(&self, id: usize) -> bool {
        self.nodes.borrow()[id].requires_grad
    }

    /// Queues a new value for a buffer (e.g. running statistics). Applied by
    /// [`ParamStore::apply_updates`].
    pub fn queue_update(&self, id: ParamId, value: Tensor<F>) {
        self.updates.borrow_mut().push((id, value));
    }

    pub fn take_updates(&self) -> Vec<(ParamId, Tensor<F>)> {
        std::mem::take(&mut *self.updates.borrow_mut())
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Back-propagates from `root`, seeding its gradient with ones.
    pub fn backward(&self, root: Var<'_, F>) -> Grads<F> {
        let mut nodes = self.nodes.borrow_mut();
        let n = root.id + 1;
        let mut grads: Vec<Option<Tensor<F>>> = (0..n).map(|_| None).collect();
        grads[root.id] = Some(Tensor::ones(nodes[root.id].value.shape()));
        let mut out = Grads { params: HashMap::new(), leaves: HashMap::new() };
        for i in (0..n).rev() {
            let Some(g) = grads[i].take() else { continue };
            if !nodes[i].requires_grad {
                continue;
            }
            if nodes[i].parents.is_empty() {
                match nodes[i].param {
                    Some(pid) => match out.params.get_mut(&pid) {
                        Some(acc) => acc.add_assign(&g),
                        None => {
                            out.params.insert(pid, g);
                        }
                    },
                    None => {
                        out.leaves.insert(i, g);
                    }
                }
                continue;
            }
            let Some(bw) = nodes[i].backward.take() else { continue };
            let parents = nodes[i].parents.clone();
            let needs: Vec<bool> = parents.iter().map(|&p| nodes[p].requires_grad).collect();
            let pgrads = bw(&g, &needs);
            debug_assert_eq!(pgrads.len(), parents.len());
            for ((&p, pg), &need) in parents.iter().zip(pgrads).zip(&needs) {
                let Some(pg) = pg else { continue };
                if !need {
                    continue;
                }
                debug_assert_eq!(pg.shape(), nodes[p].value.shape(), "gradient shape mismatch");
                match &mut grads[p] {
                    Some(acc) => acc.add_assign(&pg),
                    slot @ None => *slot = Some(pg),
                }
            }
            // Release the node's value once its gradient has been consumed.
            nodes[i].value = Rc::new(Tensor::zeros(&[0]));
        }
        out
    }
}

impl<'g, F: Float> Var<'g, F> {
    pub fn graph(&self) -> &'g Graph<F> {
        self.graph
    }

    pub fn value(&self) -> Rc<Tensor<F>> {
        self.graph.value_rc(self.id)
    }

    /// Borrow-free shape query.
    pub fn shape(&self) -> Vec<usize> {
        let nodes: Ref<'_, Vec<Node<F>>> = self.graph.nodes.borrow();
        nodes[self.id].value.shape().to_vec()
    }

    pub fn dim(&self, axis: usize) -> usize {
        self.shape()[axis]
    }

    pub fn requires_grad(&self) -> bool {
        self.graph.requires_grad(self.id)
    }
}
