use rand::Rng;

use crate::error::{NnError, Result};
use crate::layer::{Activation, LayerSpec};
use crate::loss;
use crate::ops::{self, ConvGeom, PoolGeom};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
enum Stage {
    Dense { inputs: usize, units: usize, param: usize },
    Conv { geom: ConvGeom, param: usize },
    Pool(PoolGeom),
    Flatten,
    Act(Activation),
}

/// Sequential network with a fixed per-sample input shape.
///
/// Every layer operates on batches; the leading axis of all batched tensors
/// is the sample index. Parameter tensors are stored flat in layer order,
/// weight before bias.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    input_shape: Vec<usize>,
    specs: Vec<LayerSpec>,
    stages: Vec<Stage>,
    shapes: Vec<Vec<usize>>,
    params: Vec<Tensor>,
}

struct Plan {
    stages: Vec<Stage>,
    shapes: Vec<Vec<usize>>,
    param_shapes: Vec<Vec<usize>>,
    fan_in: Vec<usize>,
}

fn plan(input_shape: &[usize], specs: &[LayerSpec]) -> Result<Plan> {
    let mut shape = input_shape.to_vec();
    let mut out = Plan {
        stages: Vec::with_capacity(specs.len()),
        shapes: vec![shape.clone()],
        param_shapes: Vec::new(),
        fan_in: Vec::new(),
    };
    if shape.is_empty() || shape.contains(&0) {
        return Err(NnError::InvalidLayer {
            index: 0,
            reason: format!("input shape {shape:?} must be nonempty with positive extents"),
        });
    }
    for (index, spec) in specs.iter().enumerate() {
        let invalid = |reason: String| NnError::InvalidLayer { index, reason };
        let stage = match *spec {
            LayerSpec::Dense { units } => {
                let [inputs] = shape[..] else {
                    return Err(invalid(format!("dense needs a rank-1 input, got {shape:?}")));
                };
                if units == 0 {
                    return Err(invalid("dense layer with zero units".into()));
                }
                let param = out.param_shapes.len();
                out.param_shapes.push(vec![units, inputs]);
                out.param_shapes.push(vec![units]);
                out.fan_in.extend([inputs, inputs]);
                shape = vec![units];
                Stage::Dense { inputs, units, param }
            }
            LayerSpec::Conv2d { filters, kernel, stride } => {
                let [c, h, w] = shape[..] else {
                    return Err(invalid(format!("conv2d needs a [channels, height, width] input, got {shape:?}")));
                };
                if filters == 0 {
                    return Err(invalid("conv2d with zero filters".into()));
                }
                let geom = ConvGeom::new(c, h, w, filters, kernel, stride)
                    .ok_or_else(|| invalid(format!("kernel {kernel} / stride {stride} invalid for input {shape:?}")))?;
                let param = out.param_shapes.len();
                out.param_shapes.push(vec![filters, c, kernel, kernel]);
                out.param_shapes.push(vec![filters]);
                out.fan_in.extend([geom.patch(), geom.patch()]);
                shape = vec![filters, geom.out_h, geom.out_w];
                Stage::Conv { geom, param }
            }
            LayerSpec::MaxPool2d { size, stride } => {
                let [c, h, w] = shape[..] else {
                    return Err(invalid(format!("maxpool2d needs a [channels, height, width] input, got {shape:?}")));
                };
                let geom = PoolGeom::new(c, h, w, size, stride)
                    .ok_or_else(|| invalid(format!("pool size {size} / stride {stride} invalid for input {shape:?}")))?;
                shape = vec![c, geom.out_h, geom.out_w];
                Stage::Pool(geom)
            }
            LayerSpec::Flatten => {
                shape = vec![shape.iter().product()];
                Stage::Flatten
            }
            LayerSpec::Activation(a) => Stage::Act(a),
        };
        out.stages.push(stage);
        out.shapes.push(shape.clone());
    }
    Ok(out)
}

impl Network {
    /// Builds a network with uniform fan-in scaled weights
    /// (`U(-√(6/fan_in), √(6/fan_in))`) and zero biases.
    pub fn new<R: Rng + ?Sized>(input_shape: &[usize], specs: &[LayerSpec], rng: &mut R) -> Result<Self> {
        let plan = plan(input_shape, specs)?;
        let params = plan
            .param_shapes
            .iter()
            .zip(&plan.fan_in)
            .enumerate()
            .map(|(i, (shape, &fan_in))| {
                let n = shape.iter().product();
                let data = if i % 2 == 1 {
                    vec![0.0; n]
                } else {
                    let limit = (6.0 / fan_in as f32).sqrt();
                    (0..n).map(|_| rng.random_range(-limit..=limit)).collect()
                };
                Tensor::new(shape.clone(), data)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            input_shape: input_shape.to_vec(),
            specs: specs.to_vec(),
            stages: plan.stages,
            shapes: plan.shapes,
            params,
        })
    }

    /// Rebuilds a network from explicit parameters, validating their shapes.
    pub fn from_parts(input_shape: &[usize], specs: &[LayerSpec], params: Vec<Tensor>) -> Result<Self> {
        let plan = plan(input_shape, specs)?;
        if plan.param_shapes.len() != params.len() {
            return Err(NnError::InvalidLayer {
                index: specs.len(),
                reason: format!("expected {} parameter tensors, got {}", plan.param_shapes.len(), params.len()),
            });
        }
        for (expected, p) in plan.param_shapes.iter().zip(&params) {
            if expected.as_slice() != p.shape() {
                return Err(NnError::ShapeMismatch {
                    expected: expected.clone(),
                    actual: p.shape().to_vec(),
                });
            }
        }
        Ok(Self {
            input_shape: input_shape.to_vec(),
            specs: specs.to_vec(),
            stages: plan.stages,
            shapes: plan.shapes,
            params,
        })
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn output_shape(&self) -> &[usize] {
        self.shapes.last().expect("shapes always holds the input shape")
    }

    pub fn specs(&self) -> &[LayerSpec] {
        &self.specs
    }

    pub fn params(&self) -> &[Tensor] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor] {
        &mut self.params
    }

    pub fn parameter_count(&self) -> usize {
        self.params.iter().map(Tensor::len).sum()
    }

    fn sample_len(&self, layer: usize) -> usize {
        self.shapes[layer].iter().product()
    }

    fn check_batch(&self, x: &Tensor) -> Result<usize> {
        let shape = x.shape();
        if shape.len() != self.input_shape.len() + 1 || shape[1..] != self.input_shape[..] {
            let mut expected = vec![shape.first().copied().unwrap_or(1)];
            expected.extend_from_slice(&self.input_shape);
            return Err(NnError::ShapeMismatch {
                expected,
                actual: shape.to_vec(),
            });
        }
        Ok(shape[0])
    }

    /// Single-sample inference; `x` must have exactly the declared input shape.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        if x.shape() != self.input_shape.as_slice() {
            return Err(NnError::ShapeMismatch {
                expected: self.input_shape.clone(),
                actual: x.shape().to_vec(),
            });
        }
        let mut shape = vec![1];
        shape.extend_from_slice(&self.input_shape);
        let out = self.forward_batch(&x.clone().reshape(shape)?)?;
        out.reshape(self.output_shape().to_vec())
    }

    /// Batched inference over `[batch, ..input_shape]`.
    pub fn forward_batch(&self, x: &Tensor) -> Result<Tensor> {
        let trace = self.trace(x)?;
        Ok(trace.into_output())
    }

    /// Forward pass retaining every intermediate needed by [`Network::backward`].
    pub fn trace(&self, x: &Tensor) -> Result<Trace> {
        let batch = self.check_batch(x)?;
        let mut acts: Vec<Vec<f32>> = Vec::with_capacity(self.stages.len() + 1);
        let mut aux = Vec::with_capacity(self.stages.len());
        acts.push(x.data().to_vec());
        for (i, stage) in self.stages.iter().enumerate() {
            let input = acts.last().expect("input pushed above");
            let mut y = vec![0.0f32; batch * self.sample_len(i + 1)];
            let extra = match stage {
                Stage::Dense { inputs, units, param } => {
                    let (w, b) = (&self.params[*param], &self.params[*param + 1]);
                    ops::dense_forward(input, w.data(), b.data(), batch, *inputs, *units, &mut y);
                    Aux::None
                }
                Stage::Conv { geom, param } => {
                    let (w, b) = (&self.params[*param], &self.params[*param + 1]);
                    let mut cols = vec![0.0; geom.patch() * geom.positions()];
                    ops::conv_forward(input, w.data(), b.data(), geom, batch, &mut cols, &mut y);
                    Aux::None
                }
                Stage::Pool(geom) => {
                    let mut arg = vec![0u32; y.len()];
                    ops::maxpool_forward(input, geom, batch, &mut y, &mut arg);
                    Aux::Argmax(arg)
                }
                Stage::Flatten => {
                    y.copy_from_slice(input);
                    Aux::None
                }
                Stage::Act(a) => {
                    a.apply_slice(input, &mut y);
                    Aux::None
                }
            };
            acts.push(y);
            aux.push(extra);
        }
        let mut out_shape = vec![batch];
        out_shape.extend_from_slice(self.output_shape());
        Ok(Trace {
            batch,
            out_shape,
            acts,
            aux,
        })
    }

    /// Reverse pass. Accumulates parameter gradients into `grads` and returns
    /// the gradient with respect to the batch input when `want_input_grad`.
    pub fn backward(
        &self,
        trace: &Trace,
        grad_output: &Tensor,
        grads: &mut Gradients,
        want_input_grad: bool,
    ) -> Result<Option<Tensor>> {
        if grad_output.shape() != trace.out_shape.as_slice() {
            return Err(NnError::ShapeMismatch {
                expected: trace.out_shape.clone(),
                actual: grad_output.shape().to_vec(),
            });
        }
        if grads.tensors.len() != self.params.len() {
            return Err(NnError::ShapeMismatch {
                expected: vec![self.params.len()],
                actual: vec![grads.tensors.len()],
            });
        }
        let batch = trace.batch;
        let mut dy = grad_output.data().to_vec();
        for (i, stage) in self.stages.iter().enumerate().rev() {
            let need_dx = i > 0 || want_input_grad;
            let input = &trace.acts[i];
            let mut dx = if need_dx { vec![0.0f32; input.len()] } else { Vec::new() };
            match stage {
                Stage::Dense { inputs, units, param } => {
                    let (dw, db) = grads.pair_mut(*param);
                    ops::dense_backward(
                        input,
                        self.params[*param].data(),
                        &dy,
                        batch,
                        *inputs,
                        *units,
                        dw,
                        db,
                        need_dx.then_some(&mut dx[..]),
                    );
                }
                Stage::Conv { geom, param } => {
                    let (dw, db) = grads.pair_mut(*param);
                    ops::conv_backward(
                        input,
                        self.params[*param].data(),
                        &dy,
                        geom,
                        batch,
                        dw,
                        db,
                        need_dx.then_some(&mut dx[..]),
                    );
                }
                Stage::Pool(geom) => {
                    if need_dx {
                        let Aux::Argmax(arg) = &trace.aux[i] else {
                            unreachable!("pool stage always records its argmax")
                        };
                        ops::maxpool_backward(&dy, arg, geom, batch, &mut dx);
                    }
                }
                Stage::Flatten => {
                    if need_dx {
                        dx.copy_from_slice(&dy);
                    }
                }
                Stage::Act(a) => {
                    if need_dx {
                        a.backprop_slice(&trace.acts[i + 1], &dy, &mut dx);
                    }
                }
            }
            dy = dx;
        }
        if !want_input_grad {
            return Ok(None);
        }
        let mut shape = vec![batch];
        shape.extend_from_slice(&self.input_shape);
        Tensor::new(shape, dy).map(Some)
    }

    /// Mean-squared-error loss of a batch and its parameter gradients.
    pub fn loss_gradients(&self, input: &Tensor, target: &Tensor) -> Result<(f32, Gradients)> {
        let trace = self.trace(input)?;
        let output = trace.output();
        let value = loss::mse_loss(target, &output)?;
        let grad = loss::mse_grad(target, &output)?;
        let mut grads = Gradients::zeros_for(self);
        self.backward(&trace, &grad, &mut grads, false)?;
        Ok((value, grads))
    }
}

#[derive(Debug)]
enum Aux {
    None,
    Argmax(Vec<u32>),
}

/// Intermediate activations of one batched forward pass.
#[derive(Debug)]
pub struct Trace {
    batch: usize,
    out_shape: Vec<usize>,
    acts: Vec<Vec<f32>>,
    aux: Vec<Aux>,
}

impl Trace {
    pub fn batch(&self) -> usize {
        self.batch
    }

    pub fn output(&self) -> Tensor {
        let data = self.acts.last().expect("trace holds at least the input").clone();
        Tensor::new(self.out_shape.clone(), data).expect("output length matches its shape")
    }

    pub fn into_output(mut self) -> Tensor {
        let data = self.acts.pop().expect("trace holds at least the input");
        Tensor::new(self.out_shape, data).expect("output length matches its shape")
    }
}

/// One gradient tensor per network parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    tensors: Vec<Tensor>,
}

impl Gradients {
    pub fn zeros_for(net: &Network) -> Self {
        Self {
            tensors: net.params.iter().map(|p| Tensor::zeros(p.shape())).collect(),
        }
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn scale(&mut self, factor: f32) {
        for t in &mut self.tensors {
            for v in t.data_mut() {
                *v *= factor;
            }
        }
    }

    pub fn add(&mut self, other: &Gradients) {
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            for (x, y) in a.data_mut().iter_mut().zip(b.data()) {
                *x += y;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().all(Tensor::is_finite)
    }

    fn pair_mut(&mut self, index: usize) -> (&mut [f32], &mut [f32]) {
        let (w, rest) = self.tensors[index..].split_at_mut(1);
        (w[0].data_mut(), rest[0].data_mut())
    }
}
