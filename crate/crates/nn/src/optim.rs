use crate::error::{NnError, Result};
use crate::network::{Gradients, Network};
use crate::tensor::Tensor;

/// First-order update rule applied to a parameter list.
pub trait Optimizer {
    fn learning_rate(&self) -> f32;

    fn step(&mut self, params: &mut [Tensor], grads: &Gradients);
}

/// Plain stochastic gradient descent: `p ← p − lr · g`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sgd {
    learning_rate: f32,
}

impl Sgd {
    pub fn new(learning_rate: f32) -> Result<Self> {
        validate_lr(learning_rate)?;
        Ok(Self { learning_rate })
    }
}

impl Optimizer for Sgd {
    fn learning_rate(&self) -> f32 {
        self.learning_rate
    }

    fn step(&mut self, params: &mut [Tensor], grads: &Gradients) {
        if self.learning_rate == 0.0 {
            return;
        }
        for (p, g) in params.iter_mut().zip(grads.tensors()) {
            for (w, d) in p.data_mut().iter_mut().zip(g.data()) {
                *w -= self.learning_rate * d;
            }
        }
    }
}

/// Adam with bias correction. State is lazily shaped on the first step.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    learning_rate: f32,
    beta1: f32,
    beta2: f32,
    eps: f32,
    t: i32,
    m: Vec<Vec<f32>>,
    v: Vec<Vec<f32>>,
}

impl Adam {
    pub fn new(learning_rate: f32) -> Result<Self> {
        Self::with_betas(learning_rate, 0.9, 0.999, 1e-8)
    }

    pub fn with_betas(learning_rate: f32, beta1: f32, beta2: f32, eps: f32) -> Result<Self> {
        validate_lr(learning_rate)?;
        Ok(Self {
            learning_rate,
            beta1,
            beta2,
            eps,
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        })
    }

    pub fn set_learning_rate(&mut self, learning_rate: f32) -> Result<()> {
        validate_lr(learning_rate)?;
        self.learning_rate = learning_rate;
        Ok(())
    }
}

impl Optimizer for Adam {
    fn learning_rate(&self) -> f32 {
        self.learning_rate
    }

    fn step(&mut self, params: &mut [Tensor], grads: &Gradients) {
        if self.learning_rate == 0.0 {
            return;
        }
        if self.m.len() != params.len() {
            self.m = params.iter().map(|p| vec![0.0; p.len()]).collect();
            self.v = self.m.clone();
            self.t = 0;
        }
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        let step = self.learning_rate * c2.sqrt() / c1;
        for (((p, g), m), v) in params
            .iter_mut()
            .zip(grads.tensors())
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            for (((w, &d), m), v) in p.data_mut().iter_mut().zip(g.data()).zip(m.iter_mut()).zip(v.iter_mut()) {
                *m = self.beta1 * *m + (1.0 - self.beta1) * d;
                *v = self.beta2 * *v + (1.0 - self.beta2) * d * d;
                *w -= step * *m / (v.sqrt() + self.eps);
            }
        }
    }
}

fn validate_lr(lr: f32) -> Result<()> {
    if lr.is_finite() && lr >= 0.0 {
        Ok(())
    } else {
        Err(NnError::InvalidLearningRate(lr))
    }
}

/// One optimizer step on the mean squared error of `batch`; returns the
/// batch loss measured before the update.
pub fn train_step<O: Optimizer + ?Sized>(net: &mut Network, batch: &[(Tensor, Tensor)], optimizer: &mut O) -> Result<f32> {
    if batch.is_empty() {
        return Err(NnError::EmptyBatch);
    }
    let inputs: Vec<Tensor> = batch.iter().map(|(x, _)| x.clone()).collect();
    let targets: Vec<Tensor> = batch.iter().map(|(_, y)| y.clone()).collect();
    let x = Tensor::stack(&inputs)?;
    let y = Tensor::stack(&targets)?;
    let (loss, grads) = net.loss_gradients(&x, &y)?;
    optimizer.step(net.params_mut(), &grads);
    Ok(loss)
}
