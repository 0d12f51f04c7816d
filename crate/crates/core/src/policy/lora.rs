use super::PolicyError;
use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub const DEFAULT_RANK: usize = 16;
pub const DEFAULT_ALPHA: f64 = 32.0;

/// Low-rank update `(α/r)·A·B` of a frozen `d_in × d_out` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct LoraAdapter {
    /// `d_in × r`, drawn from a standard normal.
    pub a: Array2<f64>,
    /// `r × d_out`, zero at initialisation.
    pub b: Array2<f64>,
    pub rank: usize,
    pub alpha: f64,
}

impl LoraAdapter {
    pub fn new(d_in: usize, d_out: usize, rank: usize, alpha: f64, seed: u64) -> Result<Self, PolicyError> {
        let max = d_in.min(d_out);
        if rank == 0 || rank > max {
            return Err(PolicyError::Rank { rank, max });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = Array2::from_shape_simple_fn((d_in, rank), || StandardNormal.sample(&mut rng));
        Ok(Self { a, b: Array2::zeros((rank, d_out)), rank, alpha })
    }

    pub fn scale(&self) -> f64 {
        self.alpha / self.rank as f64
    }

    pub fn delta(&self) -> Array2<f64> {
        self.a.dot(&self.b) * self.scale()
    }

    /// Gradients of A and B from the gradient of the effective matrix.
    pub fn chain(&self, g: &Array2<f64>) -> (Array2<f64>, Array2<f64>) {
        let s = self.scale();
        (g.dot(&self.b.t()) * s, self.a.t().dot(g) * s)
    }
}
