//! Seeded excitation, scheduling and perturbation generators.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::linalg::Vector;
use crate::lpv::{SchedulingBox, SignalLaw};

/// Independent random streams derived from one user seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Input = 1,
    Schedule = 2,
    Noise = 3,
    Initial = 4,
    ClosedLoopSchedule = 5,
    ClosedLoopNoise = 6,
}

pub fn rng_for(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

/// Stream for repetition `trial` of a batch, disjoint from [`rng_for`].
pub fn rng_for_trial(seed: u64, stream: Stream, trial: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((trial as u64 + 1) << 8) | stream as u64);
    rng
}

/// i.i.d. entries, entry `i` uniform on `[lower_i, upper_i]`.
#[derive(Debug, Clone)]
pub struct UniformLaw {
    rng: ChaCha8Rng,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl UniformLaw {
    pub fn new(rng: ChaCha8Rng, lower: Vec<f64>, upper: Vec<f64>) -> Self {
        Self { rng, lower, upper }
    }

    /// Entries uniform on `[-amplitude, amplitude]`.
    pub fn symmetric(rng: ChaCha8Rng, dim: usize, amplitude: f64) -> Self {
        Self::new(rng, vec![-amplitude; dim], vec![amplitude; dim])
    }

    /// Uniform over a scheduling box.
    pub fn in_box(rng: ChaCha8Rng, bx: &SchedulingBox) -> Self {
        Self::new(rng, bx.lower.clone(), bx.upper.clone())
    }
}

impl SignalLaw for UniformLaw {
    fn sample(&mut self, _k: usize) -> Vector {
        let rng = &mut self.rng;
        Vector::from_iterator(
            self.lower.len(),
            self.lower.iter().zip(&self.upper).map(|(&a, &b)| if a == b { a } else { rng.random_range(a..=b) }),
        )
    }
}

/// Isotropic direction with norm uniform on `[0, delta]`.
#[derive(Debug, Clone)]
pub struct BallNoise {
    rng: ChaCha8Rng,
    dim: usize,
    delta: f64,
}

impl BallNoise {
    pub fn new(rng: ChaCha8Rng, dim: usize, delta: f64) -> Self {
        Self { rng, dim, delta }
    }
}

impl SignalLaw for BallNoise {
    fn sample(&mut self, _k: usize) -> Vector {
        if self.delta == 0.0 || self.dim == 0 {
            return Vector::zeros(self.dim);
        }
        let mut d = Vector::from_iterator(self.dim, (0..self.dim).map(|_| self.rng.sample::<f64, _>(StandardNormal)));
        let nrm = d.norm();
        if nrm == 0.0 {
            return Vector::zeros(self.dim);
        }
        d /= nrm;
        let r: f64 = self.rng.random_range(0.0..=self.delta);
        d * r
    }
}

#[derive(Debug, Clone)]
pub struct ZeroLaw(pub usize);

impl SignalLaw for ZeroLaw {
    fn sample(&mut self, _k: usize) -> Vector {
        Vector::zeros(self.0)
    }
}

/// Replays stored samples; indices past the end repeat the last sample.
#[derive(Debug, Clone)]
pub struct SequenceLaw(pub Vec<Vector>);

impl SignalLaw for SequenceLaw {
    fn sample(&mut self, k: usize) -> Vector {
        let i = k.min(self.0.len().saturating_sub(1));
        self.0[i].clone()
    }
}
