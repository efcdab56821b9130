//! A small CPU neural-network engine.
//!
//! Sequential networks of dense, 2-D convolution, max-pooling, flatten and
//! activation layers, trained with reverse-mode gradients of a mean squared
//! error loss. Scalars are `f32`; matrix products run on `matrixmultiply`.
//!
//! ```
//! use heterodet_nn::{LayerSpec, Network, Sgd, Tensor, train_step};
//! use rand::SeedableRng;
//!
//! let mut rng = rand::rngs::StdRng::seed_from_u64(0);
//! let mut net = Network::new(&[2], &[LayerSpec::dense(4), LayerSpec::tanh(), LayerSpec::dense(1)], &mut rng)?;
//! let batch = vec![(Tensor::from_vec(vec![0.5, -0.5]), Tensor::from_vec(vec![1.0]))];
//! let loss = train_step(&mut net, &batch, &mut Sgd::new(0.1)?)?;
//! assert!(loss.is_finite());
//! # Ok::<(), heterodet_nn::NnError>(())
//! ```

pub mod checkpoint;
pub mod error;
pub mod layer;
pub mod loss;
pub mod network;
mod ops;
pub mod optim;
pub mod tensor;

pub use checkpoint::{Checkpoint, Metadata, FORMAT_VERSION};
pub use error::{NnError, Result};
pub use layer::{Activation, LayerSpec};
pub use loss::{mse, mse_grad, mse_loss};
pub use network::{Gradients, Network, Trace};
pub use optim::{train_step, Adam, Optimizer, Sgd};
pub use tensor::Tensor;
