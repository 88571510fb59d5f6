//! The tape: eager forward evaluation plus a recorded graph for backward.

use super::paramvec::ParameterVector;
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Handle to a value stored on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ValueId(pub(crate) usize);

/// A primitive differentiable operation.
///
/// `forward` may produce several outputs (e.g. a projection yields both 2D
/// points and depths). `backward` receives the recorded inputs and outputs
/// together with the output adjoints and must return one gradient tensor per
/// input, shaped like that input. Constants needed by an op (templates,
/// targets, hyperparameters) live in the op struct itself, so every tape
/// input is a differentiable tensor.
pub trait Op: Send + Sync {
    fn name(&self) -> &'static str;

    fn forward(&self, inputs: &[&Tensor]) -> Result<Vec<Tensor>>;

    fn backward(
        &self,
        inputs: &[&Tensor],
        outputs: &[&Tensor],
        grad_outputs: &[&Tensor],
    ) -> Result<Vec<Tensor>>;

    /// Ops that cannot propagate gradients (argmax-style) return false and
    /// cause an `UnsupportedOp` error when a backward pass reaches them.
    fn differentiable(&self) -> bool {
        true
    }
}

struct Node {
    op: Box<dyn Op>,
    inputs: Vec<ValueId>,
    outputs: Vec<ValueId>,
}

/// Records a computation for reverse-mode differentiation.
///
/// One tape serves one evaluation; tapes are cheap to build and are not
/// shared across threads. Independent tapes may run in parallel.
#[derive(Default)]
pub struct Tape {
    values: Vec<Tensor>,
    grads: Vec<Option<Tensor>>,
    nodes: Vec<Node>,
    // producer[v] = node index that wrote value v (leaves have none).
    producer: Vec<Option<usize>>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a leaf tensor (parameter or constant input).
    pub fn input(&mut self, t: Tensor) -> ValueId {
        let id = ValueId(self.values.len());
        self.values.push(t);
        self.grads.push(None);
        self.producer.push(None);
        id
    }

    pub fn value(&self, id: ValueId) -> &Tensor {
        &self.values[id.0]
    }

    /// Gradient of the last `backward` target with respect to `id`.
    /// Zero tensor if the value does not influence the target.
    pub fn grad(&self, id: ValueId) -> Tensor {
        match &self.grads[id.0] {
            Some(g) => g.clone(),
            None => Tensor::zeros(self.values[id.0].shape().to_vec()),
        }
    }

    /// Applies `op` to `inputs`, recording the node. Returns the output ids.
    pub fn apply(&mut self, op: impl Op + 'static, inputs: &[ValueId]) -> Result<Vec<ValueId>> {
        let in_refs: Vec<&Tensor> = inputs.iter().map(|id| &self.values[id.0]).collect();
        let outs = op.forward(&in_refs)?;
        let node_idx = self.nodes.len();
        let mut out_ids = Vec::with_capacity(outs.len());
        for t in outs {
            let id = ValueId(self.values.len());
            self.values.push(t);
            self.grads.push(None);
            self.producer.push(Some(node_idx));
            out_ids.push(id);
        }
        self.nodes.push(Node {
            op: Box::new(op),
            inputs: inputs.to_vec(),
            outputs: out_ids.clone(),
        });
        Ok(out_ids)
    }

    /// Convenience for single-output ops.
    pub fn apply1(&mut self, op: impl Op + 'static, inputs: &[ValueId]) -> Result<ValueId> {
        let outs = self.apply(op, inputs)?;
        debug_assert_eq!(outs.len(), 1);
        Ok(outs[0])
    }

    /// Reverse sweep from the scalar value `target`, filling gradients for
    /// every value that influences it.
    pub fn backward(&mut self, target: ValueId) -> Result<()> {
        if self.values[target.0].len() != 1 {
            return Err(Error::InvalidInput(
                "backward target must be a scalar".into(),
            ));
        }
        // Mark the nodes that target depends on.
        let mut node_needed = vec![false; self.nodes.len()];
        let mut value_needed = vec![false; self.values.len()];
        value_needed[target.0] = true;
        let mut stack = vec![target.0];
        while let Some(v) = stack.pop() {
            if let Some(n) = self.producer[v] {
                if !node_needed[n] {
                    node_needed[n] = true;
                    for inp in &self.nodes[n].inputs {
                        if !value_needed[inp.0] {
                            value_needed[inp.0] = true;
                            stack.push(inp.0);
                        }
                    }
                }
            }
        }
        for (n, node) in self.nodes.iter().enumerate() {
            if node_needed[n] && !node.op.differentiable() {
                return Err(Error::UnsupportedOp(node.op.name()));
            }
        }

        for (i, g) in self.grads.iter_mut().enumerate() {
            *g = if value_needed[i] {
                Some(Tensor::zeros(self.values[i].shape().to_vec()))
            } else {
                None
            };
        }
        if let Some(g) = &mut self.grads[target.0] {
            g.data_mut()[0] = 1.0;
        }

        for n in (0..self.nodes.len()).rev() {
            if !node_needed[n] {
                continue;
            }
            let node = &self.nodes[n];
            let in_refs: Vec<&Tensor> = node.inputs.iter().map(|id| &self.values[id.0]).collect();
            let out_refs: Vec<&Tensor> = node.outputs.iter().map(|id| &self.values[id.0]).collect();
            // Outputs that were never reached get zero adjoints.
            let zero_holders: Vec<Tensor> = node
                .outputs
                .iter()
                .map(|id| match &self.grads[id.0] {
                    Some(_) => Tensor::zeros(vec![]),
                    None => Tensor::zeros(self.values[id.0].shape().to_vec()),
                })
                .collect();
            let grad_out_refs: Vec<&Tensor> = node
                .outputs
                .iter()
                .zip(&zero_holders)
                .map(|(id, z)| self.grads[id.0].as_ref().unwrap_or(z))
                .collect();
            let in_grads = node.op.backward(&in_refs, &out_refs, &grad_out_refs)?;
            debug_assert_eq!(in_grads.len(), node.inputs.len());
            for (id, g) in node.inputs.iter().zip(in_grads) {
                debug_assert_eq!(g.shape(), self.values[id.0].shape(), "{}", node.op.name());
                match &mut self.grads[id.0] {
                    Some(acc) => {
                        for (a, b) in acc.data_mut().iter_mut().zip(g.data()) {
                            *a += b;
                        }
                    }
                    None => self.grads[id.0] = Some(g),
                }
            }
        }
        Ok(())
    }
}

/// A computation from named parameter slices to a scalar tape value.
pub type BuildFn<'a> = dyn Fn(&mut Tape, &[ValueId]) -> Result<ValueId> + Sync + 'a;

/// Exact reverse-mode gradient of `f` at `x`.
///
/// Each slice of `x` becomes one leaf tensor (with the slice's shape); the
/// returned vector mirrors `x`'s layout and holds `df/dx`.
pub fn gradient(f: &BuildFn, x: &ParameterVector) -> Result<ParameterVector> {
    let mut tape = Tape::new();
    let leaves: Vec<ValueId> = x
        .slices()
        .iter()
        .map(|s| tape.input(Tensor::new(s.shape.clone(), x.slice_data(s).to_vec())))
        .collect();
    let out = f(&mut tape, &leaves)?;
    tape.backward(out)?;
    let mut g = x.clone_zeroed();
    for (s, id) in x.slices().iter().zip(&leaves) {
        g.slice_data_mut_by_range(s.range.clone())
            .copy_from_slice(tape.grad(*id).data());
    }
    Ok(g)
}

/// Evaluates `f` at `x` without gradients, returning the scalar value.
pub fn evaluate(f: &BuildFn, x: &ParameterVector) -> Result<f64> {
    let mut tape = Tape::new();
    let leaves: Vec<ValueId> = x
        .slices()
        .iter()
        .map(|s| tape.input(Tensor::new(s.shape.clone(), x.slice_data(s).to_vec())))
        .collect();
    let out = f(&mut tape, &leaves)?;
    Ok(tape.value(out).item())
}
