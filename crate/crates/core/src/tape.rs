//! Define-by-run reverse-mode autodiff.
//!
//! A [`Tape`] is rebuilt for every training step: leaves are copied in,
//! operations append nodes in topological order, and [`Tape::backward`]
//! replays them once in reverse. Gradients stay inside the tape until the
//! caller pulls them out (e.g. [`Tape::accumulate_param_grads`]), which is
//! what gives parameters their `grad +=` semantics across a batch.

use crate::error::{Error, Result};
use crate::kernels;
use crate::tensor::Tensor;

pub type ValId = usize;

#[derive(Debug)]
struct Val {
    data: Vec<f64>,
    shape: Vec<usize>,
    needs_grad: bool,
}

#[derive(Debug)]
enum Node {
    Conv2d { input: ValId, kernels: ValId, bias: ValId, out: ValId, stride: usize },
    Relu { input: ValId, out: ValId },
    Sigmoid { input: ValId, out: ValId },
    ConcatChannels { a: ValId, b: ValId, out: ValId },
    Bce { pred: ValId, target: ValId, out: ValId },
    Add { a: ValId, b: ValId, out: ValId },
    Mul { a: ValId, b: ValId, out: ValId },
    Scale { input: ValId, factor: f64, out: ValId },
    Sum { input: ValId, out: ValId },
}

#[derive(Debug, Default)]
pub struct Tape {
    vals: Vec<Val>,
    nodes: Vec<Node>,
    grads: Vec<Option<Vec<f64>>>,
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    fn push_val(&mut self, data: Vec<f64>, shape: Vec<usize>, needs_grad: bool) -> ValId {
        let id = self.vals.len();
        self.vals.push(Val { data, shape, needs_grad });
        self.grads.push(None);
        id
    }

    /// Register a tensor as a leaf. Data is copied; gradients flow back to it
    /// only if `tensor.requires_grad`.
    pub fn leaf(&mut self, tensor: &Tensor) -> ValId {
        self.push_val(tensor.data().to_vec(), tensor.shape().to_vec(), tensor.requires_grad)
    }

    /// Leaf that never receives gradients (targets, fed-back ground truth).
    pub fn constant(&mut self, data: &[f64], shape: &[usize]) -> ValId {
        self.push_val(data.to_vec(), shape.to_vec(), false)
    }

    /// Copy of an existing value with the gradient path cut.
    pub fn detach(&mut self, id: ValId) -> ValId {
        let data = self.vals[id].data.clone();
        let shape = self.vals[id].shape.clone();
        self.push_val(data, shape, false)
    }

    pub fn data(&self, id: ValId) -> &[f64] {
        &self.vals[id].data
    }

    pub fn shape(&self, id: ValId) -> &[usize] {
        &self.vals[id].shape
    }

    pub fn value(&self, id: ValId) -> Tensor {
        Tensor::from_vec(self.vals[id].shape.clone(), self.vals[id].data.clone())
            .expect("tape values are well-formed")
    }

    fn needs(&self, ids: &[ValId]) -> bool {
        ids.iter().any(|&id| self.vals[id].needs_grad)
    }

    pub fn conv2d(
        &mut self,
        input: ValId,
        kernels: ValId,
        bias: ValId,
        stride: usize,
    ) -> Result<ValId> {
        let ishape = self.shape(input).to_vec();
        let kshape = self.shape(kernels).to_vec();
        let bshape = self.shape(bias).to_vec();
        if ishape.len() != 3 || kshape.len() != 4 || bshape.len() != 1 {
            return Err(Error::dim(
                "conv2d",
                format!("expected input rank 3 / kernels rank 4 / bias rank 1, got {ishape:?} / {kshape:?} / {bshape:?}"),
            ));
        }
        let (c_in, h, w) = (ishape[0], ishape[1], ishape[2]);
        let (c_out, kc_in, kh, kw) = (kshape[0], kshape[1], kshape[2], kshape[3]);
        if kc_in != c_in {
            return Err(Error::dim(
                "conv2d",
                format!("kernel input-channel axis is {kc_in}, input channel axis is {c_in}"),
            ));
        }
        if bshape[0] != c_out {
            return Err(Error::dim(
                "conv2d",
                format!("bias axis is {}, kernel output-channel axis is {c_out}", bshape[0]),
            ));
        }
        if kh % 2 == 0 || kw % 2 == 0 {
            return Err(Error::Contract(format!(
                "same-padding requires odd kernel dims, got {kh}x{kw}"
            )));
        }
        if stride == 0 {
            return Err(Error::Contract("stride must be >= 1".into()));
        }
        let out_data = kernels::conv2d_forward(
            &self.vals[input].data,
            (c_in, h, w),
            &self.vals[kernels].data,
            (c_out, kh, kw),
            &self.vals[bias].data,
            stride,
        );
        let (oh, ow) = kernels::conv2d_out_dims(h, w, stride);
        let needs = self.needs(&[input, kernels, bias]);
        let out = self.push_val(out_data, vec![c_out, oh, ow], needs);
        if needs {
            self.nodes.push(Node::Conv2d { input, kernels, bias, out, stride });
        }
        Ok(out)
    }

    pub fn relu(&mut self, input: ValId) -> ValId {
        let data = kernels::relu(&self.vals[input].data);
        let shape = self.vals[input].shape.clone();
        let needs = self.vals[input].needs_grad;
        let out = self.push_val(data, shape, needs);
        if needs {
            self.nodes.push(Node::Relu { input, out });
        }
        out
    }

    pub fn sigmoid(&mut self, input: ValId) -> ValId {
        let data = kernels::sigmoid(&self.vals[input].data);
        let shape = self.vals[input].shape.clone();
        let needs = self.vals[input].needs_grad;
        let out = self.push_val(data, shape, needs);
        if needs {
            self.nodes.push(Node::Sigmoid { input, out });
        }
        out
    }

    /// Channels of `a` followed by channels of `b`; spatial dims must agree.
    pub fn concat_channels(&mut self, a: ValId, b: ValId) -> Result<ValId> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if sa.len() != 3 || sb.len() != 3 {
            return Err(Error::dim("concat_channels", format!("expected rank 3, got {sa:?} / {sb:?}")));
        }
        if sa[1..] != sb[1..] {
            return Err(Error::dim(
                "concat_channels",
                format!("spatial axes differ: {}x{} vs {}x{}", sa[1], sa[2], sb[1], sb[2]),
            ));
        }
        let mut data = self.vals[a].data.clone();
        data.extend_from_slice(&self.vals[b].data);
        let shape = vec![sa[0] + sb[0], sa[1], sa[2]];
        let needs = self.needs(&[a, b]);
        let out = self.push_val(data, shape, needs);
        if needs {
            self.nodes.push(Node::ConcatChannels { a, b, out });
        }
        Ok(out)
    }

    /// Mean binary cross entropy against a same-shaped target; scalar output.
    pub fn bce(&mut self, pred: ValId, target: ValId) -> Result<ValId> {
        if self.shape(pred) != self.shape(target) {
            return Err(Error::dim(
                "bce_loss",
                format!("prediction {:?} vs target {:?}", self.shape(pred), self.shape(target)),
            ));
        }
        let loss = kernels::bce(&self.vals[pred].data, &self.vals[target].data);
        let needs = self.needs(&[pred, target]);
        let out = self.push_val(vec![loss], vec![1], needs);
        if needs {
            self.nodes.push(Node::Bce { pred, target, out });
        }
        Ok(out)
    }

    pub fn add(&mut self, a: ValId, b: ValId) -> Result<ValId> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::dim(
                "add",
                format!("{:?} vs {:?}", self.shape(a), self.shape(b)),
            ));
        }
        let data: Vec<f64> =
            self.vals[a].data.iter().zip(&self.vals[b].data).map(|(x, y)| x + y).collect();
        let shape = self.vals[a].shape.clone();
        let needs = self.needs(&[a, b]);
        let out = self.push_val(data, shape, needs);
        if needs {
            self.nodes.push(Node::Add { a, b, out });
        }
        Ok(out)
    }

    pub fn mul(&mut self, a: ValId, b: ValId) -> Result<ValId> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::dim(
                "mul",
                format!("{:?} vs {:?}", self.shape(a), self.shape(b)),
            ));
        }
        let data: Vec<f64> =
            self.vals[a].data.iter().zip(&self.vals[b].data).map(|(x, y)| x * y).collect();
        let shape = self.vals[a].shape.clone();
        let needs = self.needs(&[a, b]);
        let out = self.push_val(data, shape, needs);
        if needs {
            self.nodes.push(Node::Mul { a, b, out });
        }
        Ok(out)
    }

    pub fn scale(&mut self, input: ValId, factor: f64) -> ValId {
        let data: Vec<f64> = self.vals[input].data.iter().map(|x| x * factor).collect();
        let shape = self.vals[input].shape.clone();
        let needs = self.vals[input].needs_grad;
        let out = self.push_val(data, shape, needs);
        if needs {
            self.nodes.push(Node::Scale { input, factor, out });
        }
        out
    }

    pub fn sum(&mut self, input: ValId) -> ValId {
        let total: f64 = self.vals[input].data.iter().sum();
        let needs = self.vals[input].needs_grad;
        let out = self.push_val(vec![total], vec![1], needs);
        if needs {
            self.nodes.push(Node::Sum { input, out });
        }
        out
    }

    fn accumulate(&mut self, id: ValId, delta: &[f64]) {
        match &mut self.grads[id] {
            Some(g) => {
                for (gi, di) in g.iter_mut().zip(delta) {
                    *gi += di;
                }
            }
            None => self.grads[id] = Some(delta.to_vec()),
        }
    }

    /// Reverse pass from a scalar loss. Replays nodes once, newest first;
    /// repeated calls recompute from scratch rather than accumulating.
    pub fn backward(&mut self, loss: ValId) -> Result<()> {
        if self.vals[loss].data.len() != 1 {
            return Err(Error::Contract(format!(
                "backward requires a scalar loss, got shape {:?}",
                self.vals[loss].shape
            )));
        }
        for g in self.grads.iter_mut() {
            *g = None;
        }
        self.grads[loss] = Some(vec![1.0]);

        for i in (0..self.nodes.len()).rev() {
            let out = match &self.nodes[i] {
                Node::Conv2d { out, .. }
                | Node::Relu { out, .. }
                | Node::Sigmoid { out, .. }
                | Node::ConcatChannels { out, .. }
                | Node::Bce { out, .. }
                | Node::Add { out, .. }
                | Node::Mul { out, .. }
                | Node::Scale { out, .. }
                | Node::Sum { out, .. } => *out,
            };
            let Some(d_out) = self.grads[out].take() else {
                continue;
            };
            match self.nodes[i] {
                Node::Conv2d { input, kernels, bias, stride, .. } => {
                    let ishape = &self.vals[input].shape;
                    let kshape = &self.vals[kernels].shape;
                    let (d_in, d_k, d_b) = kernels::conv2d_backward(
                        &d_out,
                        &self.vals[input].data,
                        (ishape[0], ishape[1], ishape[2]),
                        &self.vals[kernels].data,
                        (kshape[0], kshape[2], kshape[3]),
                        stride,
                        self.vals[input].needs_grad,
                    );
                    if self.vals[input].needs_grad {
                        self.accumulate(input, &d_in);
                    }
                    if self.vals[kernels].needs_grad {
                        self.accumulate(kernels, &d_k);
                    }
                    if self.vals[bias].needs_grad {
                        self.accumulate(bias, &d_b);
                    }
                }
                Node::Relu { input, .. } => {
                    let d_in = kernels::relu_backward(&d_out, &self.vals[input].data);
                    self.accumulate(input, &d_in);
                }
                Node::Sigmoid { input, out } => {
                    let d_in = kernels::sigmoid_backward(&d_out, &self.vals[out].data);
                    self.accumulate(input, &d_in);
                }
                Node::ConcatChannels { a, b, .. } => {
                    let na = self.vals[a].data.len();
                    if self.vals[a].needs_grad {
                        self.accumulate(a, &d_out[..na]);
                    }
                    if self.vals[b].needs_grad {
                        let tail = d_out[na..].to_vec();
                        self.accumulate(b, &tail);
                    }
                }
                Node::Bce { pred, target, .. } => {
                    if self.vals[pred].needs_grad {
                        let d_pred = kernels::bce_backward(
                            d_out[0],
                            &self.vals[pred].data,
                            &self.vals[target].data,
                        );
                        self.accumulate(pred, &d_pred);
                    }
                }
                Node::Add { a, b, .. } => {
                    if self.vals[a].needs_grad {
                        self.accumulate(a, &d_out);
                    }
                    if self.vals[b].needs_grad {
                        self.accumulate(b, &d_out);
                    }
                }
                Node::Mul { a, b, .. } => {
                    if self.vals[a].needs_grad {
                        let d_a: Vec<f64> =
                            d_out.iter().zip(&self.vals[b].data).map(|(g, y)| g * y).collect();
                        self.accumulate(a, &d_a);
                    }
                    if self.vals[b].needs_grad {
                        let d_b: Vec<f64> =
                            d_out.iter().zip(&self.vals[a].data).map(|(g, x)| g * x).collect();
                        self.accumulate(b, &d_b);
                    }
                }
                Node::Scale { input, factor, .. } => {
                    let d_in: Vec<f64> = d_out.iter().map(|g| g * factor).collect();
                    self.accumulate(input, &d_in);
                }
                Node::Sum { input, .. } => {
                    let d_in = vec![d_out[0]; self.vals[input].data.len()];
                    self.accumulate(input, &d_in);
                }
            }
        }
        Ok(())
    }

    pub fn grad(&self, id: ValId) -> Option<&[f64]> {
        self.grads[id].as_deref()
    }

    /// Pull a leaf's gradient into its owning tensor, `+=` style. Leaves the
    /// tensor's grad at zeros when no gradient flowed to the leaf.
    pub fn accumulate_param_grads(&self, pairs: &mut [(ValId, &mut Tensor)]) {
        for (id, tensor) in pairs.iter_mut() {
            if let Some(g) = self.grads[*id].as_deref() {
                tensor.accumulate_grad(g);
            } else if tensor.grad.is_none() {
                tensor.grad = Some(vec![0.0; tensor.numel()]);
            }
        }
    }
}
