//! Seeded noise injection. The generator is a fixed 64-bit linear
//! congruential recurrence so that any implementation reproduces the exact
//! noise stream from the seed alone.

/// state' = state * 6364136223846793005 + 1442695040888963407 (mod 2^64).
#[derive(Debug, Clone)]
pub struct Lcg {
    state: u64,
}

impl Lcg {
    pub fn new(seed: u64) -> Self {
        Lcg { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self
            .state
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        self.state
    }

    /// Uniform on [0, 1), 53 mantissa bits.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    /// Uniform on [-1, 1).
    pub fn symmetric(&mut self) -> f64 {
        2.0 * self.uniform() - 1.0
    }
}

/// Relative sup-norm noise: Y^delta = Y + level * ||Y||_inf * xi with xi
/// i.i.d. uniform on [-1, 1). Returns the noisy values and the noise bound
/// delta = level * ||Y||_inf.
pub fn apply_noise(y: &[f64], level: f64, rng: &mut Lcg) -> (Vec<f64>, f64) {
    let sup = y.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let delta = level * sup;
    let noisy = y.iter().map(|v| v + delta * rng.symmetric()).collect();
    (noisy, delta)
}
