//! Seeded random streams and the handful of distributions the samplers need.
//!
//! Gamma variates with small shape are drawn in log space so Dirichlet and
//! Beta draws built on them stay well defined when every shape is tiny.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Open01};

pub type StreamRng = ChaCha8Rng;

/// An independent stream derived from a master seed.
pub fn stream(seed: u64, stream_id: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream_id);
    rng
}

/// `n` independent streams numbered from `offset`.
pub fn streams(seed: u64, offset: u64, n: usize) -> Vec<StreamRng> {
    (0..n as u64).map(|i| stream(seed, offset + i)).collect()
}

/// Log of a `Gamma(shape, 1)` draw.
pub fn log_gamma_draw<R: Rng + ?Sized>(rng: &mut R, shape: f64) -> f64 {
    debug_assert!(shape > 0.0 && shape.is_finite());
    if shape >= 1.0 {
        let g = Gamma::new(shape, 1.0).expect("valid gamma shape");
        g.sample(rng).max(f64::MIN_POSITIVE).ln()
    } else {
        // G(a) = G(a + 1) * U^(1/a)
        let g = Gamma::new(shape + 1.0, 1.0).expect("valid gamma shape");
        let u: f64 = rng.sample(Open01);
        g.sample(rng).max(f64::MIN_POSITIVE).ln() + u.ln() / shape
    }
}

/// `Gamma(shape, rate)` draw clamped to the positive finite range.
pub fn gamma_draw<R: Rng + ?Sized>(rng: &mut R, shape: f64, rate: f64) -> f64 {
    let log_x = log_gamma_draw(rng, shape) - rate.ln();
    log_x.exp().clamp(f64::MIN_POSITIVE, f64::MAX)
}

pub fn beta_draw<R: Rng + ?Sized>(rng: &mut R, a: f64, b: f64) -> f64 {
    let x = log_gamma_draw(rng, a);
    let y = log_gamma_draw(rng, b);
    // x / (x + y) computed as a logistic of the log ratio
    1.0 / (1.0 + (y - x).exp())
}

/// Dirichlet draw; the output lies on the simplex even when all `alpha` are tiny.
pub fn dirichlet_draw<R: Rng + ?Sized>(rng: &mut R, alpha: &[f64]) -> Vec<f64> {
    let logs: Vec<f64> = alpha.iter().map(|&a| log_gamma_draw(rng, a)).collect();
    let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = out.iter().sum();
    out.iter_mut().for_each(|v| *v /= total);
    out
}

/// Index drawn with the given (normalized) probabilities.
pub fn categorical_draw<R: Rng + ?Sized>(rng: &mut R, probs: &[f64]) -> usize {
    categorical_inverse(probs, rng.random())
}

/// Inverse-CDF categorical index for a uniform `u` in `[0, 1)`.
pub fn categorical_inverse(probs: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (j, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return j;
        }
    }
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(probs.len() - 1)
}
