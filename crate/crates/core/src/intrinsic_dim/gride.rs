//! Generalised-ratio likelihood and its maximum-likelihood estimate.
//!
//! For the ratio `mu = r_{2k} / r_k` of a point's 2k-th to k-th neighbour
//! distance under locally uniform density of dimension `d`:
//!
//! ```text
//! f(mu) = d (mu^d - 1)^(k-1) / (B(k, k) mu^(d(2k-1) + 1)),   mu > 1
//! ```
//!
//! Everything is evaluated on `x = ln mu`, using `expm1` so that both
//! `mu -> 1` and large `d x` stay accurate.

use crate::error::{Error, Result};

const MODULE: &str = "intrinsic-dim";
pub const D_MIN: f64 = 1e-3;
const TOL: f64 = 1e-8;
const MAX_ITER: usize = 500;

pub fn ln_beta(a: f64, b: f64) -> f64 {
    libm::lgamma(a) + libm::lgamma(b) - libm::lgamma(a + b)
}

/// log f(mu; k, d).
pub fn gride_log_density(mu: f64, k: usize, d: f64) -> Result<f64> {
    if !(mu > 1.0) {
        return Err(Error::invalid(MODULE, format!("ratio {mu} must exceed 1")));
    }
    if !(d > 0.0) || k == 0 {
        return Err(Error::invalid(MODULE, "need d > 0 and k >= 1"));
    }
    let x = mu.ln();
    let kf = k as f64;
    // ln(mu^d - 1) = d x + ln(1 - e^{-d x})
    let log_term = if k > 1 {
        (kf - 1.0) * (d * x + (-(-d * x).exp_m1()).ln())
    } else {
        0.0
    };
    Ok(d.ln() + log_term - ln_beta(kf, kf) - (d * (2.0 * kf - 1.0) + 1.0) * x)
}

/// Ratios mu_{i,2k,k} at one scale.
#[derive(Debug, Clone, PartialEq)]
pub struct RatioSample {
    k: usize,
    ratios: Vec<f64>,
}

impl RatioSample {
    pub fn new(k: usize, ratios: Vec<f64>) -> Result<Self> {
        if k == 0 {
            return Err(Error::invalid(MODULE, "scale k must be >= 1"));
        }
        if ratios.is_empty() {
            return Err(Error::invalid(MODULE, "empty ratio sample"));
        }
        if let Some(bad) = ratios.iter().find(|&&m| !(m > 1.0 && m.is_finite())) {
            return Err(Error::invalid(
                MODULE,
                format!("ratio {bad} is not > 1 (unremoved duplicate?)"),
            ));
        }
        Ok(Self { k, ratios })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn ratios(&self) -> &[f64] {
        &self.ratios
    }

    pub fn len(&self) -> usize {
        self.ratios.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ratios.is_empty()
    }

    /// Summed log-likelihood at dimension `d`.
    pub fn log_likelihood(&self, d: f64) -> f64 {
        Likelihood::new(self).value(d)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GrideFit {
    pub id: f64,
    pub stderr: f64,
    /// True when the optimum sits on the upper end of the search interval.
    pub at_bound: bool,
}

struct Likelihood {
    logs: Vec<f64>,
    sum_log: f64,
    n: f64,
    k: f64,
    ln_b: f64,
}

impl Likelihood {
    fn new(s: &RatioSample) -> Self {
        let logs: Vec<f64> = s.ratios.iter().map(|m| m.ln()).collect();
        let k = s.k as f64;
        Self {
            sum_log: logs.iter().sum(),
            n: logs.len() as f64,
            k,
            ln_b: ln_beta(k, k),
            logs,
        }
    }

    fn value(&self, d: f64) -> f64 {
        let mut acc = self.n * d.ln() - self.k * d * self.sum_log - self.sum_log - self.n * self.ln_b;
        if self.k > 1.0 {
            acc += (self.k - 1.0) * self.logs.iter().map(|&x| (-(-d * x).exp_m1()).ln()).sum::<f64>();
        }
        acc
    }

    fn first(&self, d: f64) -> f64 {
        let mut g = self.n / d - self.k * self.sum_log;
        if self.k > 1.0 {
            g += (self.k - 1.0) * self.logs.iter().map(|&x| x / (d * x).exp_m1()).sum::<f64>();
        }
        g
    }

    fn second(&self, d: f64) -> f64 {
        let mut h = -self.n / (d * d);
        if self.k > 1.0 {
            // x^2 e^{dx} / (e^{dx} - 1)^2 written without overflow
            h -= (self.k - 1.0)
                * self
                    .logs
                    .iter()
                    .map(|&x| x * x / ((d * x).exp_m1() * -(-d * x).exp_m1()))
                    .sum::<f64>();
        }
        h
    }
}

/// Maximises the summed log-likelihood over d in `[1e-3, d_max]`.
///
/// The log-likelihood is strictly concave in d, so the score is monotone and
/// a bracketed Newton iteration (bisection fallback) finds the unique root.
pub fn gride_mle(sample: &RatioSample, d_max: f64) -> Result<GrideFit> {
    if !(d_max > D_MIN) {
        return Err(Error::invalid(MODULE, "upper bound on d must exceed 1e-3"));
    }
    let like = Likelihood::new(sample);
    if like.logs.iter().all(|&x| x <= 1e-12) {
        return Err(Error::degenerate(MODULE, "all ratios equal 1"));
    }
    let fit = |d: f64, at_bound| GrideFit {
        id: d,
        stderr: 1.0 / (-like.second(d)).sqrt(),
        at_bound,
    };
    let (mut lo, mut hi) = (D_MIN, d_max);
    if like.first(lo) <= 0.0 {
        return Ok(fit(lo, false));
    }
    if like.first(hi) >= 0.0 {
        return Ok(fit(hi, true));
    }
    // moment start: E[ln mu] = (psi(2k) - psi(k)) / d, exact at k = 1
    let harmonic: f64 = (sample.k..2 * sample.k).map(|j| 1.0 / j as f64).sum();
    let mut d = harmonic * like.n / like.sum_log;
    if !(d > lo && d < hi) {
        d = 0.5 * (lo + hi);
    }
    for _ in 0..MAX_ITER {
        let g = like.first(d);
        if g > 0.0 {
            lo = d;
        } else if g < 0.0 {
            hi = d;
        } else {
            return Ok(fit(d, false));
        }
        let h = like.second(d);
        let mut next = d - g / h;
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        let step = (next - d).abs();
        d = next;
        if step <= TOL * d.max(1.0) || hi - lo <= TOL * d.max(1.0) {
            return Ok(fit(d, false));
        }
    }
    Err(Error::NotConverged {
        module: MODULE,
        msg: format!("GRIDE MLE at k={} did not converge in {MAX_ITER} iterations", sample.k),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Beta, Distribution};

    /// Adaptive Simpson on [a, b].
    fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
        fn rec(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
            let m = 0.5 * (a + b);
            let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
            let (flm, frm) = (f(lm), f(rm));
            let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
            let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
            let diff = left + right - whole;
            if depth == 0 || diff.abs() <= 15.0 * tol {
                left + right + diff / 15.0
            } else {
                rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1) + rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
            }
        }
        // coarse panels first so narrow peaks are not missed
        let panels = 400;
        let h = (b - a) / panels as f64;
        (0..panels)
            .map(|i| {
                let (lo, hi) = (a + h * i as f64, a + h * (i + 1) as f64);
                let m = 0.5 * (lo + hi);
                let (fa, fm, fb) = (f(lo), f(m), f(hi));
                rec(f, lo, hi, fa, fm, fb, h / 6.0 * (fa + 4.0 * fm + fb), tol / panels as f64, 50)
            })
            .sum()
    }

    #[test]
    fn k1_is_standard_pareto() {
        let v = gride_log_density(2.0, 1, 1.0).unwrap();
        assert!((v - 0.25f64.ln()).abs() < 1e-15);
        assert!(gride_log_density(1.0, 1, 1.0).is_err());
        assert!(gride_log_density(0.5, 3, 1.0).is_err());
    }

    #[test]
    fn closed_form_k4_d5() {
        // B(4,4) = 3!3!/7! = 1/140
        let mu: f64 = 1.1;
        let direct = 5.0 * (mu.powi(5) - 1.0).powi(3) * 140.0 / mu.powi(36);
        let v = gride_log_density(mu, 4, 5.0).unwrap().exp();
        assert!((v - direct).abs() / direct < 1e-12, "{v} vs {direct}");
    }

    #[test]
    fn density_integrates_to_one() {
        // substitute mu = e^x: integrand f(e^x) e^x over x in (0, inf)
        let (k, d) = (2usize, 3.0);
        let f = |x: f64| {
            if x <= 0.0 {
                return 0.0;
            }
            (gride_log_density(x.exp(), k, d).unwrap() + x).exp()
        };
        let total = simpson(&f, 0.0, 40.0, 1e-12);
        assert!((total - 1.0).abs() < 1e-8, "{total}");
    }

    #[test]
    fn k1_closed_form_mle() {
        let e = std::f64::consts::E;
        let s = RatioSample::new(1, vec![e; 50]).unwrap();
        let fit = gride_mle(&s, 100.0).unwrap();
        assert!((fit.id - 1.0).abs() < 1e-12);
        // stderr = d / sqrt(N) at k = 1
        assert!((fit.stderr - 1.0 / 50f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn recovers_dimension_from_exact_samples() {
        // if mu ~ f(.; k, d) then 1 - mu^{-d} ~ Beta(k, k)
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let beta = Beta::new(4.0, 4.0).unwrap();
        let ratios: Vec<f64> = (0..10_000)
            .map(|_| {
                let t: f64 = beta.sample(&mut rng);
                (1.0 - t).powf(-1.0 / 5.0)
            })
            .collect();
        let fit = gride_mle(&RatioSample::new(4, ratios).unwrap(), 100.0).unwrap();
        assert!((4.75..=5.25).contains(&fit.id), "{}", fit.id);
    }

    #[test]
    fn degenerate_and_bounds() {
        assert!(RatioSample::new(1, vec![]).is_err());
        assert!(RatioSample::new(1, vec![1.0, 2.0]).is_err());
        let s = RatioSample::new(2, vec![1.0 + 1e-13; 10]).unwrap();
        assert!(matches!(gride_mle(&s, 10.0), Err(Error::Degenerate { .. })));
        // ratios so close to 1 that the optimum exceeds the bound
        let s = RatioSample::new(1, vec![1.0001; 10]).unwrap();
        let fit = gride_mle(&s, 50.0).unwrap();
        assert!(fit.at_bound);
        assert_eq!(fit.id, 50.0);
    }
}
