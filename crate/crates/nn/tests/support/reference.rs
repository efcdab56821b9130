//! Double-precision reference forward pass written with direct loops, used
//! as a finite-difference oracle for the engine's analytic gradients.

#![allow(dead_code)]

use heterodet_nn::{Activation, LayerSpec, Network, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Discrete choices made during a forward pass (relu signs, pool winners).
/// A finite-difference probe is only meaningful when it leaves these intact.
pub type Pattern = Vec<u32>;

pub fn forward_f64(
    input_shape: &[usize],
    specs: &[LayerSpec],
    params: &[Vec<f64>],
    x: &[f64],
    pattern: &mut Pattern,
) -> Vec<f64> {
    let mut shape = input_shape.to_vec();
    let mut cur = x.to_vec();
    let mut p = 0;
    for spec in specs {
        match *spec {
            LayerSpec::Dense { units } => {
                let inputs = shape[0];
                let (w, b) = (&params[p], &params[p + 1]);
                p += 2;
                cur = (0..units)
                    .map(|o| b[o] + (0..inputs).map(|i| w[o * inputs + i] * cur[i]).sum::<f64>())
                    .collect();
                shape = vec![units];
            }
            LayerSpec::Conv2d { filters, kernel, stride } => {
                let (c, h, wd) = (shape[0], shape[1], shape[2]);
                let pad = kernel / 2;
                let oh = (h + 2 * pad - kernel) / stride + 1;
                let ow = (wd + 2 * pad - kernel) / stride + 1;
                let (w, b) = (&params[p], &params[p + 1]);
                p += 2;
                let mut out = vec![0.0; filters * oh * ow];
                for f in 0..filters {
                    for r in 0..oh {
                        for s in 0..ow {
                            let mut acc = b[f];
                            for ch in 0..c {
                                for ki in 0..kernel {
                                    for kj in 0..kernel {
                                        let ii = (r * stride + ki) as isize - pad as isize;
                                        let jj = (s * stride + kj) as isize - pad as isize;
                                        if ii < 0 || jj < 0 || ii >= h as isize || jj >= wd as isize {
                                            continue;
                                        }
                                        acc += w[((f * c + ch) * kernel + ki) * kernel + kj]
                                            * cur[(ch * h + ii as usize) * wd + jj as usize];
                                    }
                                }
                            }
                            out[(f * oh + r) * ow + s] = acc;
                        }
                    }
                }
                cur = out;
                shape = vec![filters, oh, ow];
            }
            LayerSpec::MaxPool2d { size, stride } => {
                let (c, h, wd) = (shape[0], shape[1], shape[2]);
                let oh = (h - size) / stride + 1;
                let ow = (wd - size) / stride + 1;
                let mut out = vec![0.0; c * oh * ow];
                for ch in 0..c {
                    for r in 0..oh {
                        for s in 0..ow {
                            let mut best = f64::NEG_INFINITY;
                            let mut arg = 0;
                            for i in 0..size {
                                for j in 0..size {
                                    let v = cur[(ch * h + r * stride + i) * wd + s * stride + j];
                                    if v > best {
                                        best = v;
                                        arg = i * size + j;
                                    }
                                }
                            }
                            out[(ch * oh + r) * ow + s] = best;
                            pattern.push(arg as u32);
                        }
                    }
                }
                cur = out;
                shape = vec![c, oh, ow];
            }
            LayerSpec::Flatten => shape = vec![cur.len()],
            LayerSpec::Activation(a) => {
                for v in &mut cur {
                    *v = match a {
                        Activation::Relu => {
                            pattern.push(u32::from(*v > 0.0));
                            v.max(0.0)
                        }
                        Activation::Tanh => v.tanh(),
                        Activation::Linear => *v,
                    };
                }
            }
        }
    }
    cur
}

pub fn mse_f64(y: &[f64], t: &[f64]) -> f64 {
    y.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / y.len() as f64
}

/// Batch loss (mean over every element of every sample) in f64.
pub fn batch_loss(net: &Network, params: &[Vec<f64>], xs: &[Vec<f64>], ts: &[Vec<f64>], pattern: &mut Pattern) -> f64 {
    let mut total = 0.0;
    let mut n = 0usize;
    for (x, t) in xs.iter().zip(ts) {
        let y = forward_f64(net.input_shape(), net.specs(), params, x, pattern);
        total += mse_f64(&y, t) * y.len() as f64;
        n += y.len();
    }
    total / n as f64
}

pub struct GradCheck {
    pub max_rel_error: f64,
    pub checked: usize,
    pub kinds: Vec<&'static str>,
}

/// Relative error floored so that near-zero gradients are judged on an
/// absolute scale.
pub fn rel_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-3)
}

/// Compares `loss_gradients` with central differences (step `h`) over every
/// parameter. Returns `None` when a probe crosses a relu or max-pool kink,
/// where the loss is not differentiable.
pub fn check_network(net: &Network, xs: &[Vec<f32>], ts: &[Vec<f32>], h: f64) -> Option<GradCheck> {
    let x = Tensor::stack(&xs.iter().map(|v| Tensor::new(net.input_shape().to_vec(), v.clone()).unwrap()).collect::<Vec<_>>()).unwrap();
    let t = Tensor::stack(&ts.iter().map(|v| Tensor::new(net.output_shape().to_vec(), v.clone()).unwrap()).collect::<Vec<_>>()).unwrap();
    let (_, grads) = net.loss_gradients(&x, &t).unwrap();

    let x64: Vec<Vec<f64>> = xs.iter().map(|v| v.iter().map(|&a| a as f64).collect()).collect();
    let t64: Vec<Vec<f64>> = ts.iter().map(|v| v.iter().map(|&a| a as f64).collect()).collect();
    let mut params: Vec<Vec<f64>> = net.params().iter().map(|p| p.data().iter().map(|&a| a as f64).collect()).collect();

    let mut base_pattern = Vec::new();
    batch_loss(net, &params, &x64, &t64, &mut base_pattern);

    let mut max_rel: f64 = 0.0;
    let mut checked = 0;
    for ti in 0..params.len() {
        for i in 0..params[ti].len() {
            let orig = params[ti][i];
            let mut pat_plus = Vec::new();
            let mut pat_minus = Vec::new();
            params[ti][i] = orig + h;
            let lp = batch_loss(net, &params, &x64, &t64, &mut pat_plus);
            params[ti][i] = orig - h;
            let lm = batch_loss(net, &params, &x64, &t64, &mut pat_minus);
            params[ti][i] = orig;
            if pat_plus != base_pattern || pat_minus != base_pattern {
                return None;
            }
            let numeric = (lp - lm) / (2.0 * h);
            let analytic = grads.tensors()[ti].data()[i] as f64;
            max_rel = max_rel.max(rel_error(analytic, numeric));
            checked += 1;
        }
    }
    Some(GradCheck {
        max_rel_error: max_rel,
        checked,
        kinds: net.specs().iter().map(LayerSpec::kind).collect(),
    })
}

/// A random network of at most `max_params` parameters that contains every
/// layer kind: conv2d → activation → maxpool2d → flatten → dense →
/// activation → dense.
pub fn random_config(seed: u64, max_params: usize) -> (Network, Vec<Vec<f32>>, Vec<Vec<f32>>) {
    let acts = [Activation::Relu, Activation::Tanh, Activation::Linear];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let c = rng.random_range(1..=2);
        let h = rng.random_range(4..=9);
        let w = rng.random_range(4..=9);
        let filters = rng.random_range(1..=4);
        let kernel = [1, 3][rng.random_range(0..2)];
        let stride = rng.random_range(1..=2);
        let pool_stride = rng.random_range(1..=2);
        let units = rng.random_range(2..=8);
        let outputs = rng.random_range(1..=3);
        let specs = [
            LayerSpec::Conv2d { filters, kernel, stride },
            LayerSpec::Activation(acts[(seed as usize) % 3]),
            LayerSpec::MaxPool2d { size: 2, stride: pool_stride },
            LayerSpec::Flatten,
            LayerSpec::dense(units),
            LayerSpec::Activation(acts[(seed as usize / 3 + 1) % 3]),
            LayerSpec::dense(outputs),
        ];
        let Ok(net) = Network::new(&[c, h, w], &specs, &mut rng) else {
            continue;
        };
        if net.parameter_count() > max_params {
            continue;
        }
        let batch = 2;
        let xs = (0..batch)
            .map(|_| (0..c * h * w).map(|_| rng.random_range(-1.0f32..1.0)).collect())
            .collect();
        let ts = (0..batch)
            .map(|_| (0..outputs).map(|_| rng.random_range(-1.0f32..1.0)).collect())
            .collect();
        return (net, xs, ts);
    }
}

/// Runs the oracle over `configs` distinct seeded configurations, skipping
/// draws whose probes straddle a kink. Returns (worst error, configs checked,
/// draws skipped, parameters checked).
pub fn sweep(configs: usize, max_params: usize, h: f64) -> (f64, usize, usize, usize) {
    let mut worst: f64 = 0.0;
    let mut done = 0;
    let mut skipped = 0;
    let mut params = 0;
    let mut seed = 0;
    while done < configs {
        let (net, xs, ts) = random_config(seed, max_params);
        seed += 1;
        match check_network(&net, &xs, &ts, h) {
            Some(r) => {
                worst = worst.max(r.max_rel_error);
                params += r.checked;
                done += 1;
            }
            None => skipped += 1,
        }
    }
    (worst, done, skipped, params)
}
