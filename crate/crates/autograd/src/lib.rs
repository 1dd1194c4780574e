//! Small reverse-mode automatic differentiation over dense `f64` matrices.
//!
//! The op set is deliberately narrow: exactly what a diffusion transformer
//! needs (affine maps, RMS normalisation, multi-head attention, row
//! gather/concat, GELU, and a mean-squared-error head). Each op records the
//! intermediates its backward pass needs on a [`Tape`]; [`Tape::backward`]
//! walks the tape in reverse and returns a [`Gradients`] table.
//!
//! ```
//! use autograd::{Tape, Tensor};
//!
//! let mut tape = Tape::new();
//! let w = tape.param(Tensor::from_vec(2, 1, vec![0.5, -1.0]).unwrap());
//! let x = tape.constant(Tensor::from_vec(1, 2, vec![2.0, 3.0]).unwrap());
//! let y = tape.matmul(x, w).unwrap();
//! let loss = tape.mse(y, &Tensor::scalar(0.0)).unwrap();
//! let grads = tape.backward(loss).unwrap();
//! // d/dw (x.w)^2 = 2 (x.w) x
//! assert_eq!(grads.get(w).unwrap().data(), &[-8.0, -12.0]);
//! ```

mod optim;
mod tape;
mod tensor;

pub use optim::{clip_global_norm, Adam, AdamConfig, AdamMoments};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("backward called on a non-scalar output ({0}x{1})")]
    NonScalarOutput(usize, usize),
}

pub type Result<T> = std::result::Result<T, Error>;
