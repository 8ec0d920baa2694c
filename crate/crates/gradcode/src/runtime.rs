//! Shifted-exponential computation-time model.
//!
//! A worker's speed for one iteration is a single exponential draw `x` with
//! rate `mu`; its s-th partial gradient finishes at `s * (alpha + x)`. The
//! marginal law of the s-th completion is then
//! `P[T_s <= t] = 1 - exp(-mu (t/s - alpha))` for `t >= s * alpha`, and a
//! slow worker is slow for all of its computations, which is the straggler
//! behaviour the simulation is after.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};

use crate::error::{Error, Result};
use crate::model::WorkerTimeline;

fn check_params(mu: f64, alpha: f64, load: usize) -> Result<()> {
    if !(mu > 0.0) || !mu.is_finite() {
        return Err(Error::InvalidConfig(format!("mu must be positive, got {mu}")));
    }
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(Error::InvalidConfig(format!(
            "alpha must be positive, got {alpha}"
        )));
    }
    if load == 0 {
        return Err(Error::InvalidConfig("load must be at least 1".into()));
    }
    Ok(())
}

/// Samples one worker's completion timeline for a single iteration.
pub fn sample_timeline<R: Rng + ?Sized>(
    mu: f64,
    alpha: f64,
    load: usize,
    rng: &mut R,
) -> Result<WorkerTimeline> {
    check_params(mu, alpha, load)?;
    let exp = Exp::new(mu).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let x = exp.sample(rng);
    Ok(WorkerTimeline::from_draw(alpha, load, x))
}

/// Samples independent timelines for all workers of one iteration.
pub fn sample_iteration<R: Rng + ?Sized>(
    mu: f64,
    alpha: f64,
    load: usize,
    workers: usize,
    rng: &mut R,
) -> Result<Vec<WorkerTimeline>> {
    (0..workers)
        .map(|_| sample_timeline(mu, alpha, load, rng))
        .collect()
}

/// Closed-form CDF of the s-th completion time.
pub fn completion_cdf(t: f64, s: usize, mu: f64, alpha: f64) -> f64 {
    let s = s as f64;
    if t < s * alpha {
        0.0
    } else {
        1.0 - (-mu * (t / s - alpha)).exp()
    }
}

/// Inverse of [`completion_cdf`] on `0 <= p < 1`.
pub fn completion_quantile(p: f64, s: usize, mu: f64, alpha: f64) -> f64 {
    s as f64 * (alpha - (1.0 - p).ln() / mu)
}

/// RNG stream for one Monte Carlo trial, derived deterministically from the
/// master seed so trials can run in any order or in parallel.
pub fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut z = seed ^ trial.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^= z >> 31;
    ChaCha8Rng::seed_from_u64(z)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MU: f64 = 10.0;
    const ALPHA: f64 = 0.01;

    #[test]
    fn zero_draw_sits_on_the_support_boundary() {
        let t = WorkerTimeline::from_draw(ALPHA, 10, 0.0);
        for s in 1..=10 {
            assert!((t.completion_of(s) - s as f64 * ALPHA).abs() < 1e-15);
            assert_eq!(completion_cdf(t.completion_of(s) * (1.0 - 1e-9), s, MU, ALPHA), 0.0);
        }
    }

    #[test]
    fn quantile_inverts_cdf() {
        // median of the first completion: alpha + ln(2)/mu
        let median = completion_quantile(0.5, 1, MU, ALPHA);
        assert!((median - 0.07931471805599453).abs() < 1e-12);
        for &p in &[0.01, 0.25, 0.5, 0.9, 0.999] {
            for s in [1, 5, 10] {
                let t = completion_quantile(p, s, MU, ALPHA);
                assert!((completion_cdf(t, s, MU, ALPHA) - p).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn empirical_median_matches_closed_form() {
        let mut rng = trial_rng(42, 0);
        let n = 100_000;
        let mut first: Vec<f64> = (0..n)
            .map(|_| sample_timeline(MU, ALPHA, 1, &mut rng).unwrap().completion_of(1))
            .collect();
        first.sort_by(|a, b| a.total_cmp(b));
        let median = first[n / 2];
        assert!((median - 0.0793).abs() < 0.002, "median {median}");
    }

    #[test]
    fn empirical_cdf_of_fifth_completion() {
        let mut rng = trial_rng(4242, 0);
        let n = 1_000_000usize;
        let hits = (0..n)
            .filter(|_| {
                sample_timeline(MU, ALPHA, 5, &mut rng).unwrap().completion_of(5) <= 0.2
            })
            .count();
        let expected = completion_cdf(0.2, 5, MU, ALPHA);
        assert!((expected - 0.2591817793182821).abs() < 1e-12);
        assert!((hits as f64 / n as f64 - expected).abs() < 0.005);
    }

    #[test]
    fn single_worker_iteration() {
        let mut rng = trial_rng(1, 0);
        let ts = sample_iteration(MU, ALPHA, 3, 1, &mut rng).unwrap();
        assert_eq!(ts.len(), 1);
        assert_eq!(ts[0].load(), 3);
    }

    #[test]
    fn same_seed_reproduces_timelines() {
        let a = sample_iteration(MU, ALPHA, 10, 40, &mut trial_rng(7, 3)).unwrap();
        let b = sample_iteration(MU, ALPHA, 10, 40, &mut trial_rng(7, 3)).unwrap();
        assert_eq!(a, b);
        let c = sample_iteration(MU, ALPHA, 10, 40, &mut trial_rng(7, 4)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn tenth_completion_mean() {
        let mut rng = trial_rng(9, 0);
        let n = 100_000;
        let mean: f64 = (0..n)
            .map(|_| sample_timeline(MU, ALPHA, 10, &mut rng).unwrap().completion_of(10))
            .sum::<f64>()
            / n as f64;
        // E[T_10] = 10 (alpha + 1/mu) = 1.1
        assert!((mean - 1.1).abs() < 0.011, "mean {mean}");
    }

    #[test]
    fn timelines_increase_and_scale() {
        let mut rng = trial_rng(3, 0);
        for _ in 0..100 {
            let t = sample_timeline(MU, ALPHA, 8, &mut rng).unwrap();
            let per_step = t.completion_of(1);
            for s in 1..=8 {
                assert!(t.completion_of(s) >= s as f64 * ALPHA);
                if s > 1 {
                    assert!(t.completion_of(s) > t.completion_of(s - 1));
                }
                assert!((t.completion_of(s) / s as f64 - per_step).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn kolmogorov_smirnov_against_closed_form() {
        for s in [1usize, 5, 10] {
            let mut rng = trial_rng(1234, s as u64);
            let n = 100_000usize;
            let mut samples: Vec<f64> = (0..n)
                .map(|_| sample_timeline(MU, ALPHA, s, &mut rng).unwrap().completion_of(s))
                .collect();
            samples.sort_by(|a, b| a.total_cmp(b));
            let mut d: f64 = 0.0;
            for (i, &x) in samples.iter().enumerate() {
                let f = completion_cdf(x, s, MU, ALPHA);
                d = d.max((f - i as f64 / n as f64).abs());
                d = d.max((f - (i + 1) as f64 / n as f64).abs());
            }
            assert!(d < 0.01, "KS distance {d} at s={s}");
        }
    }

    #[test]
    fn invalid_parameters_are_rejected() {
        let mut rng = trial_rng(0, 0);
        assert!(sample_timeline(0.0, ALPHA, 1, &mut rng).is_err());
        assert!(sample_timeline(MU, -1.0, 1, &mut rng).is_err());
        assert!(sample_timeline(MU, ALPHA, 0, &mut rng).is_err());
    }
}
