//! Reverse-mode tape.
//!
//! Operations append nodes to a [`Graph`]; [`Graph::backward`] walks the tape
//! in reverse creation order (which is a topological order, since parents are
//! always created before children) and accumulates gradients into every node
//! that transitively depends on a trainable leaf. Each op carries a boxed
//! closure that maps the output gradient to per-parent contribution buffers.
//!
//! The contract enforced by the test-suite is numerical, not structural: every
//! op's analytic gradient must match central finite differences.

use crate::error::{Error, Result};
use crate::nn::tensor::{numel, Tensor};
use crate::scalar::Scalar;

/// Handle to a node on the tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(pub(crate) usize);

/// Read-only view of a parent node passed to backward closures.
pub(crate) struct TensorView<'a, S: Scalar> {
    pub data: &'a [S],
    pub shape: &'a [usize],
}

/// Everything a backward closure may look at.
pub(crate) struct BackCtx<'a, S: Scalar> {
    pub parents: Vec<TensorView<'a, S>>,
    pub value: &'a [S],
    pub shape: &'a [usize],
    pub grad: &'a [S],
    /// Which parents actually need a gradient; closures may skip the rest.
    pub needs: &'a [bool],
}

pub(crate) type BackwardFn<S> = Box<dyn Fn(&BackCtx<'_, S>) -> Vec<Option<Vec<S>>> + Send + Sync>;

struct Node<S: Scalar> {
    shape: Vec<usize>,
    value: Vec<S>,
    grad: Option<Vec<S>>,
    parents: Vec<usize>,
    backward: Option<BackwardFn<S>>,
    requires_grad: bool,
}

/// Append-only computation tape. One graph per forward/backward episode.
pub struct Graph<S: Scalar> {
    nodes: Vec<Node<S>>,
}

impl<S: Scalar> Default for Graph<S> {
    fn default() -> Self {
        Self::new()
    }
}

impl<S: Scalar> Graph<S> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Insert a leaf holding `tensor`. Trainable parameters use
    /// `requires_grad = true`; plain data uses `false`.
    pub fn leaf(&mut self, tensor: Tensor<S>, requires_grad: bool) -> Var {
        let shape = tensor.shape().to_vec();
        let value = tensor.into_data();
        self.nodes.push(Node {
            shape,
            value,
            grad: None,
            parents: Vec::new(),
            backward: None,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Leaf that never receives gradients.
    pub fn constant(&mut self, tensor: Tensor<S>) -> Var {
        self.leaf(tensor, false)
    }

    pub(crate) fn push(
        &mut self,
        shape: Vec<usize>,
        value: Vec<S>,
        parents: Vec<usize>,
        backward: BackwardFn<S>,
    ) -> Var {
        debug_assert_eq!(numel(&shape), value.len());
        debug_assert!(
            value.iter().all(|v| v.is_finite()),
            "non-finite value produced by a forward op"
        );
        let requires_grad = parents.iter().any(|&p| self.nodes[p].requires_grad);
        self.nodes.push(Node {
            shape,
            value,
            grad: None,
            parents,
            backward: if requires_grad { Some(backward) } else { None },
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    pub fn value(&self, v: Var) -> &[S] {
        &self.nodes[v.0].value
    }

    pub fn numel(&self, v: Var) -> usize {
        self.nodes[v.0].value.len()
    }

    /// Scalar value of a 1-element node.
    pub fn scalar_value(&self, v: Var) -> S {
        debug_assert_eq!(self.numel(v), 1);
        self.nodes[v.0].value[0]
    }

    pub fn tensor(&self, v: Var) -> Tensor<S> {
        Tensor::from_flat(self.shape(v), self.value(v).to_vec()).expect("node invariant")
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Accumulated gradient of a node, if any was propagated to it.
    pub fn grad(&self, v: Var) -> Option<&[S]> {
        self.nodes[v.0].grad.as_deref()
    }

    pub fn grad_tensor(&self, v: Var) -> Option<Tensor<S>> {
        self.nodes[v.0]
            .grad
            .as_ref()
            .map(|g| Tensor::from_flat(&self.nodes[v.0].shape, g.clone()).expect("node invariant"))
    }

    fn accumulate(&mut self, target: usize, contribution: Vec<S>) {
        let node = &mut self.nodes[target];
        debug_assert_eq!(contribution.len(), node.value.len());
        match &mut node.grad {
            Some(buf) => {
                for (b, c) in buf.iter_mut().zip(contribution) {
                    *b += c;
                }
            }
            None => node.grad = Some(contribution),
        }
    }

    /// Reverse-mode sweep from a scalar loss node.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.numel(loss) != 1 {
            return Err(Error::Shape(format!(
                "backward starts from a scalar, got shape {:?}",
                self.shape(loss)
            )));
        }
        if !self.nodes[loss.0].requires_grad {
            return Ok(());
        }
        self.accumulate(loss.0, vec![S::one()]);
        for i in (0..=loss.0).rev() {
            if self.nodes[i].grad.is_none() || self.nodes[i].backward.is_none() {
                continue;
            }
            let parents = self.nodes[i].parents.clone();
            let needs: Vec<bool> = parents
                .iter()
                .map(|&p| self.nodes[p].requires_grad)
                .collect();
            if !needs.iter().any(|&n| n) {
                continue;
            }
            let contributions = {
                let node = &self.nodes[i];
                let views: Vec<TensorView<'_, S>> = parents
                    .iter()
                    .map(|&p| TensorView {
                        data: &self.nodes[p].value,
                        shape: &self.nodes[p].shape,
                    })
                    .collect();
                let ctx = BackCtx {
                    parents: views,
                    value: &node.value,
                    shape: &node.shape,
                    grad: node.grad.as_deref().expect("checked above"),
                    needs: &needs,
                };
                (node.backward.as_ref().expect("checked above"))(&ctx)
            };
            debug_assert_eq!(contributions.len(), parents.len());
            for ((&p, contribution), &need) in
                parents.iter().zip(contributions).zip(needs.iter())
            {
                if let Some(c) = contribution {
                    if need {
                        self.accumulate(p, c);
                    }
                }
            }
        }
        Ok(())
    }
}
