//! Deterministic seeded randomness.
//!
//! Everything seeded in this crate goes through [`SeededRng`], a splitmix64
//! counter generator with Box-Muller for normals. The generator is fixed on
//! purpose: trajectories, model inits and synthetic datasets must reproduce
//! bit-for-bit from a seed, so the stream cannot be allowed to drift with a
//! third-party crate's internals.

/// splitmix64 state. One `u64` of state, full 64-bit output per step.
#[derive(Debug, Clone)]
pub struct SeededRng {
    state: u64,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        SeededRng { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform draw in the open interval (0, 1), 53 significant bits.
    pub fn next_f64(&mut self) -> f64 {
        ((self.next_u64() >> 11) as f64 + 0.5) / (1u64 << 53) as f64
    }

    /// Standard normal draw. Consumes two uniforms per call and keeps only
    /// the cosine branch of the Box-Muller pair, so single draws and vector
    /// fills see the same stream.
    pub fn next_normal(&mut self) -> f64 {
        let u1 = self.next_f64();
        let u2 = self.next_f64();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    pub fn normal_vec(&mut self, dim: usize) -> Vec<f64> {
        (0..dim).map(|_| self.next_normal()).collect()
    }

    /// Normal draw rescaled to unit Euclidean norm. Redraws on the
    /// astronomically unlikely near-zero vector.
    pub fn unit_vec(&mut self, dim: usize) -> Vec<f64> {
        loop {
            let mut v = self.normal_vec(dim);
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 1e-12 {
                for x in &mut v {
                    *x /= norm;
                }
                return v;
            }
        }
    }
}
