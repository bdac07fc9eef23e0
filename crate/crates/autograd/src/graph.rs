use std::cell::RefCell;
use std::collections::HashMap;
use std::rc::Rc;

use crate::{ParamId, ParamStore, Real, Tensor};

/// Everything a backward closure needs to produce gradients for its inputs.
pub struct BackwardCtx<'a, F> {
    /// Gradient of the loss with respect to this node's output.
    pub grad: &'a Tensor<F>,
    pub inputs: &'a [Rc<Tensor<F>>],
    pub output: &'a Tensor<F>,
    /// Whether each input wants a gradient; closures may skip the others.
    pub needs: &'a [bool],
}

pub type BackwardFn<F> = Box<dyn Fn(&BackwardCtx<'_, F>) -> Vec<Option<Tensor<F>>>>;

struct Node<F> {
    value: Rc<Tensor<F>>,
    parents: Vec<usize>,
    backward: Option<BackwardFn<F>>,
    requires_grad: bool,
    param: Option<(u64, ParamId)>,
}

/// Append-only tape of tensor operations.
///
/// A graph built with [`Graph::inference`] records values only, never
/// backward closures, and every variable in it reports `requires_grad() ==
/// false`.
pub struct Graph<F> {
    nodes: RefCell<Vec<Node<F>>>,
    params: RefCell<HashMap<(u64, ParamId), usize>>,
    grad_enabled: bool,
}

/// Handle to a node on a [`Graph`].
#[derive(Clone, Copy)]
pub struct Var<'g, F> {
    graph: &'g Graph<F>,
    id: usize,
}

impl<F: Real> Default for Graph<F> {
    fn default() -> Self {
        Self::new()
    }
}

impl<F: Real> Graph<F> {
    pub fn new() -> Self {
        Self {
            nodes: RefCell::new(Vec::new()),
            params: RefCell::new(HashMap::new()),
            grad_enabled: true,
        }
    }

    pub fn inference() -> Self {
        Self {
            grad_enabled: false,
            ..Self::new()
        }
    }

    pub fn grad_enabled(&self) -> bool {
        self.grad_enabled
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, node: Node<F>) -> Var<'_, F> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(node);
        Var {
            graph: self,
            id: nodes.len() - 1,
        }
    }

    fn leaf(&self, value: Tensor<F>, requires_grad: bool) -> Var<'_, F> {
        self.push(Node {
            value: Rc::new(value),
            parents: Vec::new(),
            backward: None,
            requires_grad: requires_grad && self.grad_enabled,
            param: None,
        })
    }

    /// A value that never receives a gradient.
    pub fn constant(&self, value: Tensor<F>) -> Var<'_, F> {
        self.leaf(value, false)
    }

    /// A leaf whose gradient is reported by [`Gradients::wrt`].
    pub fn input(&self, value: Tensor<F>) -> Var<'_, F> {
        self.leaf(value, true)
    }

    /// Binds a parameter. Repeated calls for the same parameter return the
    /// same variable, so its gradient accumulates in one place.
    pub fn param(&self, store: &ParamStore<F>, id: ParamId) -> Var<'_, F> {
        let key = (store.uid(), id);
        if let Some(&node) = self.params.borrow().get(&key) {
            return Var {
                graph: self,
                id: node,
            };
        }
        let var = self.push(Node {
            value: Rc::new(store.get(id).clone()),
            parents: Vec::new(),
            backward: None,
            requires_grad: self.grad_enabled,
            param: Some(key),
        });
        self.params.borrow_mut().insert(key, var.id);
        var
    }

    /// Records an operation with a hand-written backward pass.
    ///
    /// `backward` returns one entry per parent, `None` where no gradient
    /// flows.
    pub fn custom<'g, B>(&'g self, parents: &[Var<'g, F>], value: Tensor<F>, backward: B) -> Var<'g, F>
    where
        B: Fn(&BackwardCtx<'_, F>) -> Vec<Option<Tensor<F>>> + 'static,
    {
        let requires_grad = self.grad_enabled && parents.iter().any(|p| p.requires_grad());
        self.push(Node {
            value: Rc::new(value),
            parents: parents.iter().map(|p| p.id).collect(),
            backward: if requires_grad {
                Some(Box::new(backward))
            } else {
                None
            },
            requires_grad,
            param: None,
        })
    }

    /// Reverse-mode sweep from a single-element `loss`.
    pub fn backward(&self, loss: Var<'_, F>) -> Gradients<F> {
        let nodes = self.nodes.borrow();
        let root = &nodes[loss.id];
        assert_eq!(root.value.numel(), 1, "backward needs a scalar loss");
        let mut grads: Vec<Option<Tensor<F>>> = (0..=loss.id).map(|_| None).collect();
        grads[loss.id] = Some(Tensor::ones(root.value.shape()));

        let mut out = Gradients {
            params: HashMap::new(),
            leaves: HashMap::new(),
        };
        for i in (0..=loss.id).rev() {
            let Some(grad) = grads[i].take() else {
                continue;
            };
            let node = &nodes[i];
            if !node.requires_grad {
                continue;
            }
            let Some(backward) = &node.backward else {
                match node.param {
                    Some(key) => {
                        out.params.insert(key, grad);
                    }
                    None => {
                        out.leaves.insert(i, grad);
                    }
                }
                continue;
            };
            let inputs: Vec<Rc<Tensor<F>>> =
                node.parents.iter().map(|&p| nodes[p].value.clone()).collect();
            let needs: Vec<bool> = node.parents.iter().map(|&p| nodes[p].requires_grad).collect();
            let ctx = BackwardCtx {
                grad: &grad,
                inputs: &inputs,
                output: &node.value,
                needs: &needs,
            };
            let parent_grads = backward(&ctx);
            assert_eq!(parent_grads.len(), node.parents.len());
            for ((&p, g), &need) in node.parents.iter().zip(parent_grads).zip(&needs) {
                let (Some(g), true) = (g, need) else {
                    continue;
                };
                assert_eq!(
                    g.shape(),
                    nodes[p].value.shape(),
                    "gradient shape mismatch flowing into node {p}"
                );
                match &mut grads[p] {
                    Some(acc) => acc.add_assign(&g),
                    slot => *slot = Some(g),
                }
            }
        }
        out
    }
}

impl<'g, F: Real> Var<'g, F> {
    pub fn graph(&self) -> &'g Graph<F> {
        self.graph
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn value(&self) -> Rc<Tensor<F>> {
        self.graph.nodes.borrow()[self.id].value.clone()
    }

    pub fn shape(&self) -> Vec<usize> {
        self.graph.nodes.borrow()[self.id].value.shape().to_vec()
    }

    pub fn dim(&self, axis: usize) -> usize {
        self.graph.nodes.borrow()[self.id].value.shape()[axis]
    }

    pub fn item(&self) -> F {
        self.value().item()
    }

    pub fn requires_grad(&self) -> bool {
        self.graph.nodes.borrow()[self.id].requires_grad
    }
}

/// Result of [`Graph::backward`].
pub struct Gradients<F> {
    params: HashMap<(u64, ParamId), Tensor<F>>,
    leaves: HashMap<usize, Tensor<F>>,
}

impl<F: Real> Gradients<F> {
    pub fn param(&self, store: &ParamStore<F>, id: ParamId) -> Option<&Tensor<F>> {
        self.params.get(&(store.uid(), id))
    }

    /// Gradients for every parameter of `store`, in store order.
    pub fn for_store(&self, store: &ParamStore<F>) -> Vec<Option<Tensor<F>>> {
        store
            .ids()
            .map(|id| self.param(store, id).cloned())
            .collect()
    }

    /// Gradient of an [`input`](Graph::input) leaf.
    pub fn wrt(&self, var: Var<'_, F>) -> Option<&Tensor<F>> {
        self.leaves.get(&var.id)
    }
}
