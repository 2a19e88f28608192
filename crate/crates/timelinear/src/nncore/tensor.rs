//! Dense row-major `f64` tensors with optional gradient buffers.

use rand::Rng;

use crate::{Error, Result};

/// A dense tensor. Activations usually carry no gradient buffer; parameter
/// tensors allocate one so backward passes can accumulate into it.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
    grad: Option<Vec<f64>>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        let numel = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; numel],
            grad: None,
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if data.len() != numel {
            return Err(Error::Shape {
                context: "Tensor::from_vec",
                expected: format!("{numel} values for shape {shape:?}"),
                got: format!("{}", data.len()),
            });
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
            grad: None,
        })
    }

    /// i.i.d. uniform values in `(-bound, bound)`, drawn in row-major order.
    pub fn uniform<R: Rng>(shape: &[usize], bound: f64, rng: &mut R) -> Self {
        let numel: usize = shape.iter().product();
        let data = (0..numel).map(|_| rng.gen_range(-bound..bound)).collect();
        Tensor {
            shape: shape.to_vec(),
            data,
            grad: None,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    /// Rows of a rank-2 tensor (a rank-1 tensor counts as a single row).
    pub fn rows(&self) -> usize {
        match self.rank() {
            1 => 1,
            2 => self.shape[0],
            r => panic!("rows() on rank-{r} tensor"),
        }
    }

    /// Trailing (feature) dimension.
    pub fn cols(&self) -> usize {
        *self.shape.last().expect("tensor has a shape")
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Element access for tests and small-scale inspection.
    pub fn at(&self, idx: &[usize]) -> f64 {
        assert_eq!(idx.len(), self.rank(), "index rank mismatch");
        let mut flat = 0usize;
        for (i, (&ix, &dim)) in idx.iter().zip(&self.shape).enumerate() {
            assert!(ix < dim, "index {ix} out of bounds for dim {i} ({dim})");
            flat = flat * dim + ix;
        }
        self.data[flat]
    }

    /// Allocate (zeroed) the gradient buffer if absent.
    pub fn enable_grad(&mut self) -> &mut Self {
        if self.grad.is_none() {
            self.grad = Some(vec![0.0; self.data.len()]);
        }
        self
    }

    pub fn has_grad(&self) -> bool {
        self.grad.is_some()
    }

    pub fn grad(&self) -> &[f64] {
        self.grad
            .as_deref()
            .expect("gradient buffer not enabled on this tensor")
    }

    pub fn grad_mut(&mut self) -> &mut [f64] {
        self.grad
            .as_deref_mut()
            .expect("gradient buffer not enabled on this tensor")
    }

    /// Borrow values and gradient together (for optimizer updates).
    pub fn data_and_grad_mut(&mut self) -> (&mut [f64], &[f64]) {
        let grad = self
            .grad
            .as_deref()
            .expect("gradient buffer not enabled on this tensor");
        (&mut self.data, grad)
    }

    pub fn zero_grad(&mut self) {
        if let Some(g) = &mut self.grad {
            g.iter_mut().for_each(|v| *v = 0.0);
        }
    }

    /// Accumulate `delta` into the gradient buffer.
    pub fn add_to_grad(&mut self, delta: &[f64]) {
        let g = self.grad_mut();
        assert_eq!(g.len(), delta.len(), "gradient length mismatch");
        for (gi, di) in g.iter_mut().zip(delta) {
            *gi += di;
        }
    }

    /// Transpose a rank-2 tensor (or a rank-1 row into a column-like row).
    pub fn transposed2(&self) -> Tensor {
        assert_eq!(self.rank(), 2, "transposed2 requires rank 2");
        let (r, c) = (self.shape[0], self.shape[1]);
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = self.data[i * c + j];
            }
        }
        Tensor {
            shape: vec![c, r],
            data: out,
            grad: None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn construction_and_indexing() {
        let t = Tensor::from_vec(&[2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        assert_eq!(t.rank(), 2);
        assert_eq!((t.rows(), t.cols()), (2, 3));
        assert_eq!(t.at(&[0, 0]), 1.0);
        assert_eq!(t.at(&[1, 2]), 6.0);
        assert!(Tensor::from_vec(&[2, 3], vec![0.0; 5]).is_err());
    }

    #[test]
    fn transpose_round_trips() {
        let t = Tensor::from_vec(&[2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let tt = t.transposed2();
        assert_eq!(tt.shape(), &[3, 2]);
        assert_eq!(tt.at(&[2, 1]), 6.0);
        assert_eq!(tt.transposed2().data(), t.data());
    }

    #[test]
    fn grad_accumulation() {
        let mut t = Tensor::zeros(&[2, 2]);
        t.enable_grad();
        t.add_to_grad(&[1.0, 2.0, 3.0, 4.0]);
        t.add_to_grad(&[1.0, 1.0, 1.0, 1.0]);
        assert_eq!(t.grad(), &[2.0, 3.0, 4.0, 5.0]);
        t.zero_grad();
        assert_eq!(t.grad(), &[0.0; 4]);
    }

    #[test]
    fn uniform_init_is_seed_deterministic_and_bounded() {
        let mut r1 = ChaCha8Rng::seed_from_u64(7);
        let mut r2 = ChaCha8Rng::seed_from_u64(7);
        let a = Tensor::uniform(&[4, 5], 0.3, &mut r1);
        let b = Tensor::uniform(&[4, 5], 0.3, &mut r2);
        assert_eq!(a.data(), b.data());
        assert!(a.data().iter().all(|v| v.abs() < 0.3));
    }
}
