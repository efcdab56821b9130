use std::fmt;
use std::str::FromStr;

use crate::error::NnError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Activation {
    Relu,
    Tanh,
    Linear,
}

impl Activation {
    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
            Activation::Linear => "linear",
        }
    }

    /// `y = f(x)` elementwise, with the variant chosen once per slice.
    pub(crate) fn apply_slice(self, x: &[f32], y: &mut [f32]) {
        match self {
            Activation::Relu => y.iter_mut().zip(x).for_each(|(o, v)| *o = v.max(0.0)),
            Activation::Tanh => y.iter_mut().zip(x).for_each(|(o, v)| *o = v.tanh()),
            Activation::Linear => y.copy_from_slice(x),
        }
    }

    /// `dx = dy · f'(y)` elementwise, from the activation output `y`.
    pub(crate) fn backprop_slice(self, y: &[f32], dy: &[f32], dx: &mut [f32]) {
        match self {
            Activation::Relu => {
                for ((g, d), o) in dx.iter_mut().zip(dy).zip(y) {
                    *g = if *o > 0.0 { *d } else { 0.0 };
                }
            }
            Activation::Tanh => {
                for ((g, d), o) in dx.iter_mut().zip(dy).zip(y) {
                    *g = d * (1.0 - o * o);
                }
            }
            Activation::Linear => dx.copy_from_slice(dy),
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Activation {
    type Err = NnError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            "linear" => Ok(Activation::Linear),
            other => Err(NnError::UnknownActivation(other.to_string())),
        }
    }
}

/// One stage of a sequential network. Input extents are inferred from the
/// previous stage, so only output-side parameters are recorded here.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerSpec {
    /// Fully connected layer over a rank-1 input.
    Dense { units: usize },
    /// 2-D convolution over `[channels, height, width]` with "same"-style
    /// zero padding of `kernel / 2`.
    Conv2d {
        filters: usize,
        kernel: usize,
        stride: usize,
    },
    MaxPool2d { size: usize, stride: usize },
    Flatten,
    Activation(Activation),
}

impl LayerSpec {
    pub fn dense(units: usize) -> Self {
        LayerSpec::Dense { units }
    }

    pub fn conv2d(filters: usize, kernel: usize) -> Self {
        LayerSpec::Conv2d {
            filters,
            kernel,
            stride: 1,
        }
    }

    pub fn maxpool(size: usize) -> Self {
        LayerSpec::MaxPool2d { size, stride: size }
    }

    pub fn relu() -> Self {
        LayerSpec::Activation(Activation::Relu)
    }

    pub fn tanh() -> Self {
        LayerSpec::Activation(Activation::Tanh)
    }

    pub fn linear() -> Self {
        LayerSpec::Activation(Activation::Linear)
    }

    pub fn kind(&self) -> &'static str {
        match self {
            LayerSpec::Dense { .. } => "dense",
            LayerSpec::Conv2d { .. } => "conv2d",
            LayerSpec::MaxPool2d { .. } => "maxpool2d",
            LayerSpec::Flatten => "flatten",
            LayerSpec::Activation(_) => "activation",
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn activation_names_roundtrip() {
        for a in [Activation::Relu, Activation::Tanh, Activation::Linear] {
            assert_eq!(a.name().parse::<Activation>().unwrap(), a);
        }
        assert!("sigmoid".parse::<Activation>().is_err());
    }
}
