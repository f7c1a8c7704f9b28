//! Empirical CDFs, the one-sample Kolmogorov–Smirnov test, medians and the
//! relative estimation error.

use crate::{Error, Result, C64};

/// Step function `F_n(x) = #{samples ≤ x}/n`.
#[derive(Clone, Debug, PartialEq)]
pub struct Ecdf {
    sorted: Vec<f64>,
}

impl Ecdf {
    pub fn new(samples: &[f64]) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::param("ECDF of an empty sample"));
        }
        if let Some(bad) = samples.iter().find(|v| v.is_nan()) {
            return Err(Error::param(format!("ECDF sample contains {bad}")));
        }
        let mut sorted = samples.to_vec();
        sorted.sort_by(f64::total_cmp);
        Ok(Self { sorted })
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    pub fn sorted(&self) -> &[f64] {
        &self.sorted
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.sorted.partition_point(|v| *v <= x) as f64 / self.sorted.len() as f64
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KsResult {
    pub n: usize,
    pub statistic: f64,
    pub p_value: f64,
}

/// Kolmogorov survival function `Q(λ) = 2Σ_{k≥1} (−1)^{k−1} e^{−2k²λ²}`.
///
/// Small `λ` uses the Jacobi-transformed series, which converges fast there.
/// The result is floored at the smallest positive normal float.
pub fn kolmogorov_q(lambda: f64) -> f64 {
    if !(lambda > 0.0) {
        return 1.0;
    }
    let q = if lambda < 1.0 {
        let c = std::f64::consts::PI * std::f64::consts::PI / (8.0 * lambda * lambda);
        let mut sum = 0.0;
        for k in 1..=100 {
            let j = (2 * k - 1) as f64;
            let term = (-j * j * c).exp();
            sum += term;
            if term < 1e-16 {
                break;
            }
        }
        1.0 - (2.0 * std::f64::consts::PI).sqrt() / lambda * sum
    } else {
        let mut sum = 0.0;
        for k in 1..=100 {
            let kf = k as f64;
            let term = (-2.0 * kf * kf * lambda * lambda).exp();
            sum += if k % 2 == 1 { term } else { -term };
            if term < 1e-12 {
                break;
            }
        }
        2.0 * sum
    };
    q.clamp(f64::MIN_POSITIVE, 1.0)
}

/// One-sample KS test of `samples` against the continuous CDF `cdf`, with
/// the asymptotic p-value `Q(√n·D_n)`.
pub fn ks_test(samples: &[f64], cdf: impl Fn(f64) -> f64) -> Result<KsResult> {
    let ecdf = Ecdf::new(samples)?;
    Ok(ks_test_sorted(ecdf.sorted(), cdf))
}

pub(crate) fn ks_test_sorted(sorted: &[f64], cdf: impl Fn(f64) -> f64) -> KsResult {
    let n = sorted.len();
    let nf = n as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in sorted.iter().enumerate() {
        let f = cdf(x);
        d = d.max((i + 1) as f64 / nf - f).max(f - i as f64 / nf);
    }
    KsResult { n, statistic: d, p_value: kolmogorov_q(nf.sqrt() * d) }
}

pub fn standard_normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// CDF of the unit-rate exponential.
pub fn exp1_cdf(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        -(-x).exp_m1()
    }
}

/// Real and imaginary streams of `√2·w/σ_w`, each unit-variance when
/// `w ~ CN(0, σ_w²)`.
pub fn normalize_w(w: &[C64], sigma_w: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    if !(sigma_w > 0.0) {
        return Err(Error::param(format!("sigma_w must be positive, got {sigma_w}")));
    }
    let s = std::f64::consts::SQRT_2 / sigma_w;
    Ok(w.iter().map(|z| (z.re * s, z.im * s)).unzip())
}

/// `|σ̂ − σ|/σ`.
pub fn ree(sigma_hat: f64, sigma_true: f64) -> Result<f64> {
    if !(sigma_true > 0.0) {
        return Err(Error::param(format!("reference sigma must be positive, got {sigma_true}")));
    }
    Ok((sigma_hat - sigma_true).abs() / sigma_true)
}

/// Root-mean-square modulus.
pub fn ground_truth_sigma_w(w: &[C64]) -> Result<f64> {
    if w.is_empty() {
        return Err(Error::param("ground truth sigma of an empty vector"));
    }
    Ok((w.iter().map(|z| z.norm_sqr()).sum::<f64>() / w.len() as f64).sqrt())
}

/// Lower median, the `⌈n/2⌉`-th order statistic; `NaN` for an empty slice.
pub fn lower_median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    let k = (v.len() - 1) / 2;
    let (_, m, _) = v.select_nth_unstable_by(k, f64::total_cmp);
    *m
}
