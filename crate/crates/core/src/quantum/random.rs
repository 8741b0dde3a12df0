//! Seeded random streams and the random ensembles built on them.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};

use super::layout::Layout;
use super::state::{DensityOperator, HermitianOperator, StateVector};
use crate::error::{arg, Result};

/// Deterministic random stream keyed by `(seed, stream id)`.
///
/// Two streams built from the same pair produce identical draws. Concurrent
/// tasks must each own a distinct pair.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream: u64,
    rng: ChaCha20Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self { seed, stream, rng }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// Fresh stream with the same seed and a stream id derived from `(self.stream, id)`.
    pub fn substream(&self, id: u64) -> RngStream {
        RngStream::new(self.seed, mix_stream(self.stream, id))
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Combine a parent stream id with a child index.
pub fn mix_stream(parent: u64, child: u64) -> u64 {
    splitmix64(parent ^ splitmix64(child.wrapping_add(1)))
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.rng.fill_bytes(dest)
    }

    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> std::result::Result<(), rand::Error> {
        self.rng.try_fill_bytes(dest)
    }
}

/// Complex normal with `E|z|² = 1`.
pub fn standard_complex_normal(rng: &mut RngStream) -> Complex64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

pub(crate) fn gaussian_vector(dim: usize, rng: &mut RngStream) -> DVector<Complex64> {
    DVector::from_fn(dim, |_, _| standard_complex_normal(rng))
}

/// Haar-distributed unit vector on a single factor named `x`.
pub fn haar_random_state(dim: usize, rng: &mut RngStream) -> Result<StateVector> {
    if dim == 0 {
        return arg("Haar state needs dimension >= 1");
    }
    StateVector::normalized(gaussian_vector(dim, rng), Layout::single("x", dim)?)
}

/// GUE matrix: real diagonal with variance `scale²`, off-diagonal real and
/// imaginary parts each with variance `scale²/2`.
pub fn gue_sample(dim: usize, scale: f64, rng: &mut RngStream) -> Result<HermitianOperator> {
    if dim == 0 {
        return arg("GUE sample needs dimension >= 1");
    }
    if !(scale > 0.0 && scale.is_finite()) {
        return arg(format!("GUE scale must be positive (got {scale})"));
    }
    let mut m = DMatrix::<Complex64>::zeros(dim, dim);
    let off = scale * std::f64::consts::FRAC_1_SQRT_2;
    for i in 0..dim {
        let d: f64 = StandardNormal.sample(rng);
        m[(i, i)] = Complex64::new(scale * d, 0.0);
        for j in (i + 1)..dim {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            let z = Complex64::new(off * re, off * im);
            m[(i, j)] = z;
            m[(j, i)] = z.conj();
        }
    }
    Ok(HermitianOperator::from_parts(m))
}

/// Full-rank random state `GG†/Tr(GG†)` from a square Ginibre matrix.
pub fn random_density(layout: Layout, rng: &mut RngStream) -> DensityOperator {
    let n = layout.total_dim();
    let g = DMatrix::from_fn(n, n, |_, _| standard_complex_normal(rng));
    let m = &g * g.adjoint();
    let tr = m.trace().re;
    DensityOperator::from_parts(m.unscale(tr), layout)
}

/// Haar-random unitary via QR of a Ginibre matrix with the phase correction on `R`'s diagonal.
pub fn random_unitary(dim: usize, rng: &mut RngStream) -> DMatrix<Complex64> {
    let g = DMatrix::from_fn(dim, dim, |_, _| standard_complex_normal(rng));
    let qr = g.qr();
    let (mut q, r) = qr.unpack();
    for j in 0..dim {
        let d = r[(j, j)];
        let phase = if d.norm() > 0.0 { d / d.norm() } else { Complex64::new(1.0, 0.0) };
        for z in q.column_mut(j).iter_mut() {
            *z *= phase;
        }
    }
    q
}
