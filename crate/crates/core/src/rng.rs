//! Deterministic random number streams for the simulation benchmarks.
//! Replications get independent ChaCha streams from (master seed, index), so
//! any replication can be reproduced in isolation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Stream for one replication. Streams with the same master seed and
/// different indices never overlap.
pub fn replication_stream(master_seed: u64, stream: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(stream);
    rng
}

/// Exponential draw by inversion: -ln(1 - U)/rate with U uniform on [0, 1).
pub fn sample_exp(rng: &mut impl Rng, rate: f64) -> f64 {
    debug_assert!(rate > 0.0);
    let u: f64 = rng.random();
    -(-u).ln_1p() / rate
}

/// Standard normal draw by the basic trigonometric transform. Two uniforms
/// are consumed per draw and the partner variate is discarded, keeping the
/// draw count per sample fixed.
pub fn sample_std_normal(rng: &mut impl Rng) -> f64 {
    let u1: f64 = rng.random();
    let u2: f64 = rng.random();
    // 1 - u1 lies in (0, 1], so the logarithm is finite.
    (-2.0 * (1.0 - u1).ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}
