use std::fmt;

use num_traits::Float;

use crate::error::{Error, Result};

/// Element type of the engine: `f32` for training, `f64` for gradient
/// verification. Both modes share every code path.
pub trait Real: Float + Send + Sync + fmt::Debug + fmt::Display + 'static {
    fn from_f64(x: f64) -> Self;
    fn to_f64_(self) -> f64;
}

impl Real for f32 {
    #[inline]
    fn from_f64(x: f64) -> Self {
        x as f32
    }
    #[inline]
    fn to_f64_(self) -> f64 {
        self as f64
    }
}

impl Real for f64 {
    #[inline]
    fn from_f64(x: f64) -> Self {
        x
    }
    #[inline]
    fn to_f64_(self) -> f64 {
        self
    }
}

/// Shorthand for converting an `f64` literal into the element type.
#[inline]
pub fn fl<F: Real>(x: f64) -> F {
    F::from_f64(x)
}

/// Dense row-major numeric array.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<F> {
    shape: Vec<usize>,
    data: Vec<F>,
}

impl<F: Real> Tensor<F> {
    pub fn new(shape: Vec<usize>, data: Vec<F>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::ShapeMismatch {
                op: "Tensor::new",
                detail: format!("shape {:?} implies {} elements, data has {}", shape, n, data.len()),
            });
        }
        if shape.iter().any(|&d| d == 0) {
            return Err(Error::ShapeMismatch {
                op: "Tensor::new",
                detail: format!("zero dimension in shape {shape:?}"),
            });
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n: usize = shape.iter().product();
        Tensor { shape, data: vec![F::zero(); n] }
    }

    pub fn full(shape: Vec<usize>, value: F) -> Self {
        let n: usize = shape.iter().product();
        Tensor { shape, data: vec![value; n] }
    }

    pub fn scalar(value: F) -> Self {
        Tensor { shape: vec![1], data: vec![value] }
    }

    pub fn from_f64s(shape: Vec<usize>, data: &[f64]) -> Result<Self> {
        Tensor::new(shape, data.iter().map(|&x| fl(x)).collect())
    }

    /// Reinterpret the buffer under a new shape of the same total length.
    pub fn set_shape(&mut self, shape: Vec<usize>) {
        assert_eq!(
            shape.iter().product::<usize>(),
            self.data.len(),
            "set_shape length mismatch"
        );
        self.shape = shape;
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[F] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [F] {
        &mut self.data
    }

    /// Value of a single-element tensor.
    pub fn item(&self) -> F {
        debug_assert_eq!(self.data.len(), 1, "item() on non-scalar tensor");
        self.data[0]
    }

    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1
    }

    /// Rows of a 2-D tensor.
    pub fn rows(&self) -> usize {
        self.shape[0]
    }

    /// Columns of a 2-D tensor.
    pub fn cols(&self) -> usize {
        self.shape[self.shape.len() - 1]
    }

    pub fn row(&self, i: usize) -> &[F] {
        let c = self.cols();
        &self.data[i * c..(i + 1) * c]
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Element-type conversion, used to move data between the 32-bit
    /// training mode and the 64-bit verification mode.
    pub fn cast<G: Real>(&self) -> Tensor<G> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| G::from_f64(x.to_f64_())).collect(),
        }
    }
}

/// Deterministic sum: fixed eight-lane accumulation, identical result on
/// every run regardless of build flags.
pub fn lane_sum<F: Real>(xs: &[F]) -> F {
    const LANES: usize = 8;
    let mut acc = [F::zero(); LANES];
    let chunks = xs.chunks_exact(LANES);
    let rem = chunks.remainder();
    for chunk in chunks {
        for (a, &x) in acc.iter_mut().zip(chunk) {
            *a = *a + x;
        }
    }
    let mut total = F::zero();
    for a in acc {
        total = total + a;
    }
    for &x in rem {
        total = total + x;
    }
    total
}
