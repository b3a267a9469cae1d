//! Reverse-mode tape.
//!
//! Every operation appends a node holding its forward value and, when any
//! input requires a gradient, a closure mapping the output gradient to input
//! gradients. [`Graph::backward`] walks the tape in reverse.

use std::cell::RefCell;
use std::rc::Rc;

use crate::{Scalar, Tensor};

/// Handle to a node on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Maps an output gradient to one optional gradient per parent.
pub type BackwardFn<T> = Box<dyn Fn(&Tensor<T>) -> Vec<Option<Tensor<T>>>>;

struct Node<T> {
    value: Rc<Tensor<T>>,
    parents: Vec<usize>,
    backward: Option<BackwardFn<T>>,
    requires_grad: bool,
}

pub struct Graph<T> {
    nodes: RefCell<Vec<Node<T>>>,
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Self { nodes: RefCell::new(Vec::new()) }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, node: Node<T>) -> Var {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(node);
        Var(nodes.len() - 1)
    }

    /// A leaf that never receives a gradient.
    pub fn constant(&self, value: Tensor<T>) -> Var {
        self.push(Node { value: Rc::new(value), parents: Vec::new(), backward: None, requires_grad: false })
    }

    /// A leaf whose gradient is collected by [`Graph::backward`].
    pub fn variable(&self, value: Tensor<T>) -> Var {
        self.push(Node { value: Rc::new(value), parents: Vec::new(), backward: None, requires_grad: true })
    }

    pub fn value(&self, v: Var) -> Rc<Tensor<T>> {
        Rc::clone(&self.nodes.borrow()[v.0].value)
    }

    pub fn shape(&self, v: Var) -> Vec<usize> {
        self.nodes.borrow()[v.0].value.shape().to_vec()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes.borrow()[v.0].requires_grad
    }

    /// Records an operation with a caller-supplied backward rule.
    ///
    /// `backward` is only stored (and later invoked) when at least one parent
    /// requires a gradient; it must return one entry per parent, in order.
    pub fn custom<F>(&self, parents: &[Var], value: Tensor<T>, backward: F) -> Var
    where
        F: Fn(&Tensor<T>) -> Vec<Option<Tensor<T>>> + 'static,
    {
        let requires_grad = parents.iter().any(|&p| self.requires_grad(p));
        let backward: Option<BackwardFn<T>> = if requires_grad { Some(Box::new(backward)) } else { None };
        self.push(Node {
            value: Rc::new(value),
            parents: parents.iter().map(|p| p.0).collect(),
            backward,
            requires_grad,
        })
    }

    /// Back-propagates from a one-element `root` seeded with 1.
    pub fn backward(&self, root: Var) -> Gradients<T> {
        let shape = self.shape(root);
        assert_eq!(shape.iter().product::<usize>(), 1, "backward root must have one element, got {shape:?}");
        self.backward_with(root, Tensor::ones(shape))
    }

    /// Back-propagates an explicit output gradient from `root`.
    pub fn backward_with(&self, root: Var, seed: Tensor<T>) -> Gradients<T> {
        let nodes = self.nodes.borrow();
        assert_eq!(nodes[root.0].value.shape(), seed.shape(), "seed shape mismatch");
        let mut grads: Vec<Option<Tensor<T>>> = (0..nodes.len()).map(|_| None).collect();
        if !nodes[root.0].requires_grad {
            return Gradients { grads };
        }
        grads[root.0] = Some(seed);
        for id in (0..=root.0).rev() {
            let node = &nodes[id];
            let Some(backward) = node.backward.as_ref() else { continue };
            let Some(grad_out) = grads[id].take() else { continue };
            let parent_grads = backward(&grad_out);
            debug_assert_eq!(parent_grads.len(), node.parents.len());
            for (&pid, g) in node.parents.iter().zip(parent_grads) {
                let Some(g) = g else { continue };
                if !nodes[pid].requires_grad {
                    continue;
                }
                debug_assert_eq!(g.shape(), nodes[pid].value.shape(), "gradient shape mismatch at node {pid}");
                match grads[pid].as_mut() {
                    Some(acc) => acc.add_assign(&g),
                    None => grads[pid] = Some(g),
                }
            }
        }
        Gradients { grads }
    }
}

/// Leaf gradients produced by [`Graph::backward`].
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor<T>> {
        self.grads.get_mut(v.0).and_then(|g| g.take())
    }
}
