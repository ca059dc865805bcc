//! Two-layer perceptron turning a flattened image into the feature vector
//! consumed by the cells: `x̂ = W2·tanh(W1·pixels + b1) + b2`.

use serde::{Deserialize, Serialize};

use crate::cells::uniform_matrix;
use crate::error::{Error, Result};
use crate::linalg::{Matrix, Vector};
use crate::rng::Rng;
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderDims {
    pub input: usize,
    pub hidden: usize,
    pub output: usize,
}

impl Default for EncoderDims {
    fn default() -> Self {
        EncoderDims {
            input: 32 * 32,
            hidden: 128,
            output: 64,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EncoderParameters<T> {
    /// `E1 × P`
    pub w1: Matrix<T>,
    pub b1: Vector<T>,
    /// `D × E1`
    pub w2: Matrix<T>,
    pub b2: Vector<T>,
}

pub type EncoderGradients<T> = EncoderParameters<T>;

/// Hidden activations kept from the forward pass.
#[derive(Clone, Debug, PartialEq)]
pub struct EncoderCache<T> {
    pub hidden: Vector<T>,
}

impl<T: Scalar> EncoderParameters<T> {
    pub fn zeros(dims: EncoderDims) -> Self {
        EncoderParameters {
            w1: Matrix::zeros(dims.hidden, dims.input),
            b1: Vector::zeros(dims.hidden),
            w2: Matrix::zeros(dims.output, dims.hidden),
            b2: Vector::zeros(dims.output),
        }
    }

    pub fn init(dims: EncoderDims, rng: &mut Rng) -> Self {
        EncoderParameters {
            w1: uniform_matrix(dims.hidden, dims.input, dims.input, rng),
            b1: Vector::zeros(dims.hidden),
            w2: uniform_matrix(dims.output, dims.hidden, dims.hidden, rng),
            b2: Vector::zeros(dims.output),
        }
    }

    pub fn dims(&self) -> EncoderDims {
        EncoderDims {
            input: self.w1.cols(),
            hidden: self.w1.rows(),
            output: self.w2.rows(),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.dims())
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dims();
        if self.b1.len() != d.hidden || self.w2.cols() != d.hidden || self.b2.len() != d.output {
            return Err(Error::shape(
                "EncoderParameters",
                format!("w1 {} b1 {}", self.w1.shape(), self.b1.len()),
                format!("w2 {} b2 {}", self.w2.shape(), self.b2.len()),
            ));
        }
        Ok(())
    }

    pub fn blocks(&self) -> Vec<(&'static str, &[T])> {
        vec![
            ("encoder.w1", self.w1.as_slice()),
            ("encoder.b1", self.b1.as_slice()),
            ("encoder.w2", self.w2.as_slice()),
            ("encoder.b2", self.b2.as_slice()),
        ]
    }

    pub fn blocks_mut(&mut self) -> Vec<(&'static str, &mut [T])> {
        vec![
            ("encoder.w1", self.w1.as_mut_slice()),
            ("encoder.b1", self.b1.as_mut_slice()),
            ("encoder.w2", self.w2.as_mut_slice()),
            ("encoder.b2", self.b2.as_mut_slice()),
        ]
    }
}

pub fn encode<T: Scalar>(params: &EncoderParameters<T>, pixels: &[T]) -> Result<Vector<T>> {
    encode_with_cache(params, pixels).map(|(features, _)| features)
}

pub fn encode_with_cache<T: Scalar>(
    params: &EncoderParameters<T>,
    pixels: &[T],
) -> Result<(Vector<T>, EncoderCache<T>)> {
    let dims = params.dims();
    if pixels.len() != dims.input {
        return Err(Error::shape(
            "encode",
            format!("{} input pixels", dims.input),
            format!("image with {} pixels", pixels.len()),
        ));
    }
    if pixels.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("encoder input".into()));
    }
    let mut hidden = params.b1.clone();
    params.w1.matvec_acc(pixels, hidden.as_mut_slice());
    let hidden = hidden.map(|v| v.tanh());
    let mut features = params.b2.clone();
    params.w2.matvec_acc(hidden.as_slice(), features.as_mut_slice());
    Ok((features, EncoderCache { hidden }))
}

/// Adds the gradients for one image into `grads`.
pub fn encode_backward<T: Scalar>(
    params: &EncoderParameters<T>,
    cache: &EncoderCache<T>,
    pixels: &[T],
    d_features: &Vector<T>,
    grads: &mut EncoderGradients<T>,
) -> Result<()> {
    let dims = params.dims();
    if cache.hidden.len() != dims.hidden || pixels.len() != dims.input {
        return Err(Error::Incompatible(format!(
            "encoder cache of width {} for {} pixels vs encoder {}x{}",
            cache.hidden.len(),
            pixels.len(),
            dims.hidden,
            dims.input
        )));
    }
    if d_features.len() != dims.output {
        return Err(Error::shape("encode_backward", dims.output, d_features.len()));
    }
    if grads.dims() != dims {
        return Err(Error::Incompatible("encoder gradient shape".into()));
    }
    let df = d_features.as_slice();
    grads.w2.add_outer(df, cache.hidden.as_slice());
    for (b, &d) in grads.b2.as_mut_slice().iter_mut().zip(df) {
        *b += d;
    }
    let mut d_hidden = vec![T::zero(); dims.hidden];
    params.w2.matvec_t_acc(df, &mut d_hidden);
    for (d, &u) in d_hidden.iter_mut().zip(cache.hidden.iter()) {
        *d *= T::one() - u * u;
    }
    grads.w1.add_outer(&d_hidden, pixels);
    for (b, &d) in grads.b1.as_mut_slice().iter_mut().zip(&d_hidden) {
        *b += d;
    }
    Ok(())
}
