//! Probability kernels used by the likelihood and the sampler.
//!
//! Densities are evaluated in log space. Segment durations reach a few
//! hundred and a segmentation carries well over a hundred segments, so the
//! plain-scale products underflow.

use rand::Rng;
use rand_distr::{Distribution, Gamma, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::{gamma_lr, ln_gamma};

use crate::error::{domain, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Rate of a zero-truncated Poisson duration distribution.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct ZtpParam(f64);

impl ZtpParam {
    pub fn new(phi: f64) -> Result<Self> {
        if phi.is_finite() && phi > 0.0 {
            Ok(Self(phi))
        } else {
            Err(domain(format!("zero-truncated Poisson rate must be finite and > 0, got {phi}")))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }

    /// `ln(1 - e^{-phi})`, accurate for small rates.
    pub fn log_normalizer(self) -> f64 {
        (-(-self.0).exp_m1()).ln()
    }

    /// Mean `phi / (1 - e^{-phi})`.
    pub fn mean(self) -> f64 {
        self.0 / -(-self.0).exp_m1()
    }
}

impl TryFrom<f64> for ZtpParam {
    type Error = crate::HsmmError;

    fn try_from(v: f64) -> Result<Self> {
        Self::new(v)
    }
}

impl From<ZtpParam> for f64 {
    fn from(p: ZtpParam) -> f64 {
        p.0
    }
}

/// `ln(k!)`.
pub fn ln_factorial(k: u64) -> f64 {
    ln_gamma(k as f64 + 1.0)
}

/// Log pmf of the zero-truncated Poisson at `k >= 1`.
pub fn ztp_logpmf(k: u64, phi: ZtpParam) -> Result<f64> {
    if k == 0 {
        return Err(domain("zero-truncated Poisson has no mass at 0"));
    }
    let p = phi.get();
    Ok(k as f64 * p.ln() - p - ln_factorial(k) - phi.log_normalizer())
}

/// Log of `P(tau >= k)` under the zero-truncated Poisson, for `k >= 1`.
///
/// Used for the optional right-censored final segment.
pub fn ztp_log_survival(k: u64, phi: ZtpParam) -> Result<f64> {
    if k == 0 {
        return Err(domain("survival is defined for k >= 1"));
    }
    if k == 1 {
        return Ok(0.0);
    }
    // P(Pois >= k) = P(Gamma(k, 1) <= phi)
    let upper = gamma_lr(k as f64, phi.get());
    Ok(upper.ln() - phi.log_normalizer())
}

/// Mass the zero-truncated Poisson places strictly above `d`.
pub fn ztp_tail_mass(d: u64, phi: ZtpParam) -> f64 {
    if d == 0 {
        return 1.0;
    }
    let tail = gamma_lr(d as f64 + 1.0, phi.get());
    (tail / -(-phi.get()).exp_m1()).clamp(0.0, 1.0)
}

/// Smallest `d` with `P(tau <= d) >= q`.
pub fn ztp_quantile(q: f64, phi: ZtpParam) -> Result<u64> {
    if !(0.0..1.0).contains(&q) {
        return Err(domain(format!("quantile level must lie in [0, 1), got {q}")));
    }
    // Start near the mean and walk; the normal approximation gives the bracket.
    let p = phi.get();
    let mut lo = 1u64;
    let mut hi = (p + 10.0 * p.sqrt() + 20.0).ceil() as u64;
    while 1.0 - ztp_tail_mass(hi, phi) < q {
        hi *= 2;
    }
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        if 1.0 - ztp_tail_mass(mid, phi) >= q {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    Ok(lo)
}

/// Draws from the zero-truncated Poisson.
///
/// Rates of at least one use rejection from an untruncated Poisson; smaller
/// rates, where a zero is likely, invert the CDF by sequential accumulation.
pub fn ztp_sample<R: Rng + ?Sized>(phi: ZtpParam, rng: &mut R) -> u64 {
    let p = phi.get();
    if p >= 1.0 {
        let pois = Poisson::new(p).expect("rate validated by ZtpParam");
        loop {
            let k: f64 = pois.sample(rng);
            if k >= 1.0 {
                return k as u64;
            }
        }
    }
    let u: f64 = rng.random();
    let mut k = 1u64;
    let mut pmf = p * (-p).exp() / -(-p).exp_m1();
    let mut cdf = pmf;
    while u > cdf && pmf > 0.0 {
        k += 1;
        pmf *= p / k as f64;
        cdf += pmf;
    }
    k
}

/// Draws a probability vector from `Dirichlet(alpha)`.
pub fn dirichlet_sample<R: Rng + ?Sized>(alpha: &[f64], rng: &mut R) -> Result<Vec<f64>> {
    if alpha.is_empty() {
        return Err(domain("Dirichlet needs at least one concentration"));
    }
    if let Some(a) = alpha.iter().find(|a| !(a.is_finite() && **a > 0.0)) {
        return Err(domain(format!("Dirichlet concentrations must be > 0, got {a}")));
    }
    if alpha.len() == 1 {
        return Ok(vec![1.0]);
    }
    let mut draws: Vec<f64> = alpha
        .iter()
        .map(|&a| Gamma::new(a, 1.0).expect("validated").sample(rng))
        .collect();
    let total: f64 = draws.iter().sum();
    if total > 0.0 && total.is_finite() {
        draws.iter_mut().for_each(|g| *g /= total);
    } else {
        // every gamma draw underflowed; put the mass on the largest concentration
        let best = alpha
            .iter()
            .enumerate()
            .fold(0, |b, (i, a)| if *a > alpha[b] { i } else { b });
        draws.iter_mut().enumerate().for_each(|(i, g)| *g = f64::from(u8::from(i == best)));
    }
    Ok(draws)
}

/// Log density of `N(mean, var)` at `x`.
#[inline]
pub fn normal_logpdf(x: f64, mean: f64, var: f64) -> f64 {
    let d = x - mean;
    -0.5 * (LN_2PI + var.ln() + d * d / var)
}

pub fn normal_sample<R: Rng + ?Sized>(mean: f64, var: f64, rng: &mut R) -> f64 {
    let z: f64 = StandardNormal.sample(rng);
    mean + var.sqrt() * z
}

/// Draws from the inverse-gamma with the given shape and scale.
pub fn inv_gamma_sample<R: Rng + ?Sized>(shape: f64, scale: f64, rng: &mut R) -> Result<f64> {
    if !(shape > 0.0 && scale > 0.0) {
        return Err(domain(format!("inverse-gamma needs shape, scale > 0, got ({shape}, {scale})")));
    }
    let g: f64 = Gamma::new(shape, 1.0 / scale)
        .map_err(|e| domain(e.to_string()))?
        .sample(rng);
    Ok(1.0 / g)
}

/// Numerically stable `ln(sum(exp(xs)))`; `-inf` for an empty or all `-inf` slice.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{block_rng, Block};
    use approx::assert_abs_diff_eq;

    fn phi(p: f64) -> ZtpParam {
        ZtpParam::new(p).unwrap()
    }

    #[test]
    fn rejects_bad_rates_and_zero_counts() {
        assert!(ZtpParam::new(0.0).is_err());
        assert!(ZtpParam::new(-1.0).is_err());
        assert!(ZtpParam::new(f64::NAN).is_err());
        assert!(ztp_logpmf(0, phi(3.0)).is_err());
    }

    #[test]
    fn logpmf_matches_high_precision_values() {
        // 40-digit evaluations of k ln(phi) - phi - ln k! - ln(1 - e^-phi)
        let cases = [
            (1, 1.0, -0.541_324_854_612_918_1),
            (1, 0.01, -0.005_004_166_663_194_450),
            (3, 0.001, -15.607_770_068_858_995),
            (30, 30.0, -2.622_314_898_965_409_5),
            (120, 30.0, -79.668_702_181_819_44),
            (7, 5.5, -2.087_829_570_285_601_7),
            (200, 120.0, -25.733_638_635_996_275),
        ];
        for (k, p, want) in cases {
            assert_abs_diff_eq!(ztp_logpmf(k, phi(p)).unwrap(), want, epsilon = 1e-11);
        }
    }

    #[test]
    fn pmf_normalizes() {
        let total: f64 = (1..=200).map(|k| ztp_logpmf(k, phi(5.0)).unwrap().exp()).sum();
        assert_abs_diff_eq!(total, 1.0, epsilon = 1e-12);
        for p in [0.1f64, 1.0, 5.0, 30.0, 120.0] {
            let kmax = (p + 40.0 * p.sqrt() + 50.0) as u64;
            let total: f64 = (1..=kmax).map(|k| ztp_logpmf(k, phi(p)).unwrap().exp()).sum();
            assert_abs_diff_eq!(total, 1.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn survival_matches_high_precision_values() {
        let cases = [
            (1, 3.0, 0.0),
            (5, 3.0, -1.637_754_229_678_173_9),
            (40, 30.0, -3.073_628_138_351_352),
            (2, 0.5, -1.472_929_261_793_182_8),
        ];
        for (k, p, want) in cases {
            assert_abs_diff_eq!(ztp_log_survival(k, phi(p)).unwrap(), want, epsilon = 1e-10);
        }
    }

    #[test]
    fn tail_mass_and_quantile_agree_with_pmf_sums() {
        let p = phi(12.0);
        let below: f64 = (1..=20).map(|k| ztp_logpmf(k, p).unwrap().exp()).sum();
        assert_abs_diff_eq!(ztp_tail_mass(20, p), 1.0 - below, epsilon = 1e-12);
        let q = ztp_quantile(0.9999, p).unwrap();
        assert!(ztp_tail_mass(q, p) <= 1e-4);
        assert!(ztp_tail_mass(q - 1, p) > 1e-4);
    }

    #[test]
    fn small_rate_draws_are_mostly_one() {
        let mut rng = block_rng(11, Block::Init);
        let ones = (0..100_000).filter(|_| ztp_sample(phi(0.01), &mut rng) == 1).count();
        assert!(ones >= 99_000, "{ones}");
    }

    #[test]
    fn large_rate_sample_mean() {
        let mut rng = block_rng(12, Block::Init);
        let n = 100_000;
        let draws: Vec<u64> = (0..n).map(|_| ztp_sample(phi(30.0), &mut rng)).collect();
        assert!(draws.iter().all(|&k| k >= 1));
        let mean = draws.iter().sum::<u64>() as f64 / n as f64;
        assert!((mean - phi(30.0).mean()).abs() < 0.2, "{mean}");
    }

    #[test]
    fn empirical_pmf_within_three_standard_errors() {
        let mut rng = block_rng(13, Block::Init);
        let n = 100_000usize;
        for p in [0.5, 5.0, 50.0] {
            let mut counts = std::collections::BTreeMap::<u64, usize>::new();
            for _ in 0..n {
                *counts.entry(ztp_sample(phi(p), &mut rng)).or_default() += 1;
            }
            for k in 1..=(p as u64 * 3 + 5) {
                let prob = ztp_logpmf(k, phi(p)).unwrap().exp();
                let se = (prob * (1.0 - prob) / n as f64).sqrt();
                let freq = *counts.get(&k).unwrap_or(&0) as f64 / n as f64;
                // bins with negligible mass have a degenerate standard error
                let tol = (3.0 * se).max(3.0 / n as f64);
                assert!((freq - prob).abs() <= tol, "phi={p} k={k} freq={freq} prob={prob}");
            }
        }
    }

    #[test]
    fn dirichlet_edge_cases() {
        let mut rng = block_rng(14, Block::Rho);
        assert_eq!(dirichlet_sample(&[1.0], &mut rng).unwrap(), vec![1.0]);
        assert!(dirichlet_sample(&[1.0, 0.0], &mut rng).is_err());
        assert!(dirichlet_sample(&[], &mut rng).is_err());
        let v = dirichlet_sample(&[1.0, 1.0, 1.0], &mut rng).unwrap();
        assert_abs_diff_eq!(v.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        assert!(v.iter().all(|x| *x >= 0.0));
        let skewed = dirichlet_sample(&[1_000_000.0, 1.0], &mut rng).unwrap();
        assert!(skewed[0] > 0.99);
    }

    #[test]
    fn symmetric_dirichlet_is_exchangeable() {
        let mut rng = block_rng(15, Block::Rho);
        let n = 20_000;
        let k = 4;
        let mut sums = vec![0.0; k];
        for _ in 0..n {
            let v = dirichlet_sample(&vec![2.0; k], &mut rng).unwrap();
            sums.iter_mut().zip(&v).for_each(|(s, x)| *s += x);
        }
        // Var of a coordinate of Dir(2,2,2,2): a(A-a)/(A^2(A+1)) = 2*6/(64*9)
        let se = (12.0 / 576.0 / n as f64).sqrt();
        for s in sums {
            assert!((s / n as f64 - 0.25).abs() < 3.0 * se);
        }
    }

    #[test]
    fn inverse_gamma_mean() {
        let mut rng = block_rng(16, Block::Sigma2);
        let n = 50_000;
        let mean = (0..n).map(|_| inv_gamma_sample(5.0, 8.0, &mut rng).unwrap()).sum::<f64>() / n as f64;
        // mean scale/(shape-1) = 2, sd = 2/sqrt(3)
        assert!((mean - 2.0).abs() < 3.0 * (4.0 / 3.0f64).sqrt() / (n as f64).sqrt());
        assert!(inv_gamma_sample(0.0, 1.0, &mut rng).is_err());
    }

    #[test]
    fn log_sum_exp_handles_neg_infinity() {
        assert_eq!(log_sum_exp(&[f64::NEG_INFINITY, f64::NEG_INFINITY]), f64::NEG_INFINITY);
        assert_abs_diff_eq!(log_sum_exp(&[0.0, 0.0]), 2f64.ln(), epsilon = 1e-15);
    }
}
