//! Debiased LASSO estimators, variance estimators and element-wise tests.

use std::fmt;
use std::str::FromStr;

use crate::empirics::lower_median;
use crate::lasso::{active_density, solve_lasso, LassoOptions, LassoSolution};
use crate::model::SensingMatrix;
use crate::spectral::{self, SpectralDensity};
use crate::{Error, Result, C64};

const FIXED_POINT_TOL: f64 = 1e-12;
const FIXED_POINT_MAX_ITER: usize = 1000;
const FIXED_POINT_DAMPING: f64 = 0.5;

/// Rule for the debiasing coefficient `Λ`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Variant {
    /// Complex row-orthogonal, `(γ − ρ_CA)/(1 − ρ_CA)`.
    Crom,
    /// Complex Gaussian, `γ − ρ_CA`.
    Cg,
    /// Real row-orthogonal, `(γ − ρ_a)/(1 − ρ_a)`.
    Rom,
    /// Real Gaussian, `γ − ρ_a`.
    G,
    /// From a spectral density via [`spectral::lambda_from_density`].
    Generic,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Crom => "CROM",
            Variant::Cg => "CG",
            Variant::Rom => "ROM",
            Variant::G => "G",
            Variant::Generic => "generic",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Closed-form `Λ` for the four tabulated rules.
pub fn coefficient(variant: Variant, gamma: f64, rho: f64) -> Result<f64> {
    if !(gamma > 0.0 && gamma <= 1.0) || !(0.0..1.0).contains(&rho) {
        return Err(Error::param(format!("need 0 < gamma <= 1 and 0 <= rho < 1, got gamma={gamma}, rho={rho}")));
    }
    if rho >= gamma {
        return Err(Error::IllPosed(format!(
            "active density {rho} is not below the compression rate {gamma}; coefficient would be nonpositive"
        )));
    }
    match variant {
        Variant::Crom | Variant::Rom => Ok((gamma - rho) / (1.0 - rho)),
        Variant::Cg | Variant::G => Ok(gamma - rho),
        Variant::Generic => Err(Error::param("the generic coefficient needs a spectral density")),
    }
}

/// `(1/2N)·Σ_{x̂_i ≠ 0} (2 − λ/(Λ|x̂_i| + λ))`.
pub fn rho_ca_sum(x_hat: &[C64], lambda: f64, lambda_coeff: f64) -> f64 {
    let n = x_hat.len() as f64;
    x_hat
        .iter()
        .filter(|x| **x != C64::new(0.0, 0.0))
        .map(|x| 2.0 - lambda / (lambda_coeff * x.norm() + lambda))
        .sum::<f64>()
        / (2.0 * n)
}

fn fixed_point(x_hat: &[C64], lambda: f64, gamma: f64, coeff: impl Fn(f64) -> Result<f64>) -> Result<(f64, f64)> {
    if x_hat.is_empty() {
        return Err(Error::dim("empty estimate"));
    }
    if !(lambda > 0.0) {
        return Err(Error::param(format!("lambda must be positive, got {lambda}")));
    }
    // Each active term lies in (1, 2), so ρ_CA ∈ (ρ_a/2, ρ_a]. A complex
    // LASSO may well have ρ_a ≥ γ; only ρ_CA < γ is required.
    let rho_a = active_density(x_hat);
    if rho_a / 2.0 >= gamma {
        return Err(Error::IllPosed(format!("active density {rho_a} leaves no rho_CA below gamma {gamma}")));
    }
    let mut rho = if rho_a < gamma { rho_a } else { 0.5 * (0.5 * rho_a + gamma) };
    for _ in 0..FIXED_POINT_MAX_ITER {
        let big_lambda = coeff(rho)?;
        let target = rho_ca_sum(x_hat, lambda, big_lambda);
        let mut next = (1.0 - FIXED_POINT_DAMPING) * rho + FIXED_POINT_DAMPING * target;
        if next >= gamma {
            // The map decreases in ρ, so the root lies below γ; step halfway there.
            next = 0.5 * (rho + gamma);
        }
        let delta = (next - rho).abs();
        rho = next;
        if delta <= FIXED_POINT_TOL {
            return Ok((rho, coeff(rho)?));
        }
    }
    Err(Error::IllPosed(format!("rho_CA fixed point did not settle in {FIXED_POINT_MAX_ITER} iterations")))
}

/// Jointly solves the `ρ_CA` equation and `Λ = Λ_rule(γ, ρ_CA)` by damped
/// iteration from `ρ_a`. `rule` must be [`Variant::Crom`] or [`Variant::Cg`].
pub fn rho_ca_fixed_point(x_hat: &[C64], lambda: f64, gamma: f64, rule: Variant) -> Result<(f64, f64)> {
    if !matches!(rule, Variant::Crom | Variant::Cg) {
        return Err(Error::param(format!("rho_CA is defined for the CROM and CG rules, not {rule}")));
    }
    fixed_point(x_hat, lambda, gamma, |rho| coefficient(rule, gamma, rho))
}

/// As [`rho_ca_fixed_point`], with `Λ` taken from a spectral density.
pub fn rho_ca_fixed_point_density(
    x_hat: &[C64],
    lambda: f64,
    gamma: f64,
    density: &SpectralDensity,
) -> Result<(f64, f64)> {
    fixed_point(x_hat, lambda, gamma, |rho| {
        if rho == 0.0 {
            // The ρ → 0 limit of the spectral rule is the mean eigenvalue.
            density.integrate(|s| s)
        } else {
            spectral::lambda_from_density(rho, density)
        }
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct DebiasedEstimate {
    pub x_d: Vec<C64>,
    pub lambda_coeff: f64,
    pub variant: Variant,
    pub rho_used: f64,
    pub sigma_w2: Option<f64>,
}

/// `x̂ + (1/Λ)·Aᴴ(y − A·x̂)`.
pub fn debias(y: &[C64], a: &SensingMatrix, x_hat: &[C64], lambda_coeff: f64) -> Result<Vec<C64>> {
    if !(lambda_coeff > 0.0 && lambda_coeff.is_finite()) {
        return Err(Error::param(format!("debiasing coefficient must be positive, got {lambda_coeff}")));
    }
    if y.len() != a.rows() || x_hat.len() != a.cols() {
        return Err(Error::dim(format!(
            "y has {} and x_hat {} entries for a {}x{} matrix",
            y.len(),
            x_hat.len(),
            a.rows(),
            a.cols()
        )));
    }
    let ax = a.apply_vec(x_hat);
    let r: Vec<C64> = y.iter().zip(&ax).map(|(y, ax)| y - ax).collect();
    Ok(debias_from_residual(a, x_hat, &r, lambda_coeff))
}

pub(crate) fn debias_from_residual(a: &SensingMatrix, x_hat: &[C64], residual: &[C64], lambda_coeff: f64) -> Vec<C64> {
    let g = a.adjoint_vec(residual);
    let inv = 1.0 / lambda_coeff;
    x_hat.iter().zip(&g).map(|(x, g)| x + g * inv).collect()
}

/// `‖y − A·x̂‖²/M`.
pub fn rss(y: &[C64], a: &SensingMatrix, x_hat: &[C64]) -> Result<f64> {
    if y.len() != a.rows() || x_hat.len() != a.cols() {
        return Err(Error::dim("rss: dimensions do not conform"));
    }
    let ax = a.apply_vec(x_hat);
    Ok(y.iter().zip(&ax).map(|(y, ax)| (y - ax).norm_sqr()).sum::<f64>() / y.len() as f64)
}

/// `χ = ρ(1 − ρ)/(γ − ρ)`.
pub fn chi(gamma: f64, rho: f64) -> f64 {
    rho * (1.0 - rho) / (gamma - rho)
}

/// `σ_w² = 2χ̂/Λ²` given `G′`, `G″` at `−χ`.
pub fn sigma_w2_from_parts(gamma: f64, chi: f64, g1: f64, g2: f64, rss: f64, sigma2: f64, lambda_coeff: f64) -> Result<f64> {
    let den = 2.0 * g1 - 2.0 * g2 * chi;
    if !(den > 0.0) {
        return Err(Error::numeric(format!(
            "variance denominator 2G' - 2G''chi = {den:e} is not positive (chi={chi}, G'={g1}, G''={g2})"
        )));
    }
    let chi_hat = (gamma * g2 * rss + (g1 * g1 - g2 * gamma) * sigma2) / den;
    Ok(2.0 * chi_hat / (lambda_coeff * lambda_coeff))
}

fn check_variance_inputs(gamma: f64, rho: f64, rss: f64, sigma2: f64) -> Result<()> {
    if !(rho >= 0.0 && rho < gamma && gamma <= 1.0) {
        return Err(Error::param(format!("need 0 <= rho < gamma <= 1, got rho={rho}, gamma={gamma}")));
    }
    if !(rss >= 0.0) || !(sigma2 >= 0.0) {
        return Err(Error::param(format!("rss and sigma2 must be nonnegative, got {rss} and {sigma2}")));
    }
    Ok(())
}

/// CROD variance estimate for a row-orthogonal design.
pub fn sigma_w2_crod(gamma: f64, rho_ca: f64, rss: f64, sigma2: f64) -> Result<f64> {
    sigma_w2_row_orthogonal(gamma, rho_ca, rss, sigma2, coefficient(Variant::Crom, gamma, rho_ca)?)
}

/// The same estimate with `ρ` and `Λ` supplied (the ROD rule uses `ρ_a` and `Λ_ROM`).
pub fn sigma_w2_row_orthogonal(gamma: f64, rho: f64, rss: f64, sigma2: f64, lambda_coeff: f64) -> Result<f64> {
    check_variance_inputs(gamma, rho, rss, sigma2)?;
    let c = chi(gamma, rho);
    let (g1, g2) = if c > 0.0 {
        (spectral::row_orthogonal_g_prime(c, gamma), spectral::row_orthogonal_g_double_prime(c, gamma))
    } else {
        (gamma, gamma * (1.0 - gamma))
    };
    sigma_w2_from_parts(gamma, c, g1, g2, rss, sigma2, lambda_coeff)
}

/// The same estimate with `G′`, `G″` from an arbitrary spectral density.
pub fn sigma_w2_density(
    density: &SpectralDensity,
    gamma: f64,
    rho: f64,
    rss: f64,
    sigma2: f64,
    lambda_coeff: f64,
) -> Result<f64> {
    check_variance_inputs(gamma, rho, rss, sigma2)?;
    let c = chi(gamma, rho);
    // At χ = 0 the cumulant expansion inside g_prime gives the exact limit.
    let at = if c > 0.0 { c } else { f64::MIN_POSITIVE };
    let g1 = spectral::g_prime(at, density)?;
    let g2 = spectral::g_double_prime(at, density)?;
    sigma_w2_from_parts(gamma, c, g1, g2, rss, sigma2, lambda_coeff)
}

/// CAMP rule: `median(|x_d|)/√(ln 2)`.
pub fn sigma_w_camp(x_d: &[C64]) -> f64 {
    let mods: Vec<f64> = x_d.iter().map(|z| z.norm()).collect();
    lower_median(&mods) / std::f64::consts::LN_2.sqrt()
}

/// Complex SDL rule: `√γ/(√(ln 2)(γ − ρ))·median(|r|)`.
pub fn sigma_w_sdl_complex(residual: &[C64], gamma: f64, rho_ca: f64) -> Result<f64> {
    if !(gamma > rho_ca) {
        return Err(Error::param(format!("gamma {gamma} must exceed rho {rho_ca}")));
    }
    let mods: Vec<f64> = residual.iter().map(|z| z.norm()).collect();
    Ok(gamma.sqrt() / (std::f64::consts::LN_2.sqrt() * (gamma - rho_ca)) * lower_median(&mods))
}

/// `κ_d = −σ_w² ln P_fa`.
pub fn threshold(sigma_w2: f64, p_fa: f64) -> Result<f64> {
    if !(p_fa > 0.0 && p_fa < 1.0) {
        return Err(Error::param(format!("target false-alarm rate must lie in (0, 1), got {p_fa}")));
    }
    if !(sigma_w2 > 0.0) {
        return Err(Error::param(format!("sigma_w2 must be positive, got {sigma_w2}")));
    }
    Ok(-sigma_w2 * p_fa.ln())
}

/// `|x_d_i|² > κ_d`.
pub fn detect(x_d: &[C64], kappa_d: f64) -> Vec<bool> {
    x_d.iter().map(|z| z.norm_sqr() > kappa_d).collect()
}

/// `|x_i| > κ`.
pub fn detect_amplitude(x: &[C64], kappa: f64) -> Vec<bool> {
    x.iter().map(|z| z.norm() > kappa).collect()
}

/// `(P̂_fa, P̂_d)`: decision rates over the complement of `support` and over
/// `support`. `None` marks an empty set.
pub fn evaluate(decisions: &[bool], support: &[usize]) -> (Option<f64>, Option<f64>) {
    let n = decisions.len();
    let mut in_support = vec![false; n];
    for &i in support {
        if i < n {
            in_support[i] = true;
        }
    }
    let (mut fa, mut nulls, mut hits, mut targets) = (0usize, 0usize, 0usize, 0usize);
    for (d, s) in decisions.iter().zip(&in_support) {
        if *s {
            targets += 1;
            hits += *d as usize;
        } else {
            nulls += 1;
            fa += *d as usize;
        }
    }
    let rate = |k: usize, m: usize| (m > 0).then(|| k as f64 / m as f64);
    (rate(fa, nulls), rate(hits, targets))
}

#[derive(Clone, Debug, PartialEq)]
pub struct DetectionReport {
    pub kappa_d: f64,
    pub decisions: Vec<bool>,
    pub p_fa_hat: Option<f64>,
    pub p_d_hat: Option<f64>,
    pub target_p_fa: f64,
}

impl DetectionReport {
    pub fn new(x_d: &[C64], kappa_d: f64, support: Option<&[usize]>, target_p_fa: f64) -> Self {
        let decisions = detect(x_d, kappa_d);
        let (p_fa_hat, p_d_hat) = match support {
            Some(s) => evaluate(&decisions, s),
            None => (None, None),
        };
        Self { kappa_d, decisions, p_fa_hat, p_d_hat, target_p_fa }
    }
}

/// The four compared detectors.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Detector {
    Crod,
    Camp,
    Sdl,
    Rod,
}

impl Detector {
    pub const ALL: [Detector; 4] = [Detector::Crod, Detector::Camp, Detector::Sdl, Detector::Rod];

    pub fn name(self) -> &'static str {
        match self {
            Detector::Crod => "CROD",
            Detector::Camp => "CAMP",
            Detector::Sdl => "SDL",
            Detector::Rod => "ROD",
        }
    }
}

impl fmt::Display for Detector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Detector {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "CROD" => Ok(Detector::Crod),
            "CAMP" => Ok(Detector::Camp),
            "SDL" | "SDL-TEST" => Ok(Detector::Sdl),
            "ROD" => Ok(Detector::Rod),
            _ => Err(Error::Config(format!("unknown detector '{s}' (expected CROD, CAMP, SDL or ROD)"))),
        }
    }
}

/// What a detector needs to know about the design.
#[derive(Clone, Debug)]
pub enum Design {
    RowOrthogonal { gamma: f64 },
    Gaussian { gamma: f64, density: SpectralDensity },
}

impl Design {
    pub fn row_orthogonal(gamma: f64) -> Self {
        Design::RowOrthogonal { gamma }
    }

    pub fn gaussian(gamma: f64) -> Result<Self> {
        Ok(Design::Gaussian { gamma, density: spectral::marchenko_pastur_density(gamma)? })
    }

    pub fn gamma(&self) -> f64 {
        match self {
            Design::RowOrthogonal { gamma } | Design::Gaussian { gamma, .. } => *gamma,
        }
    }
}

/// Debiased estimate, its variance estimate and decisions for one detector.
pub fn run_detector(
    detector: Detector,
    design: &Design,
    a: &SensingMatrix,
    solution: &LassoSolution,
    sigma2: f64,
    p_fa: f64,
    support: Option<&[usize]>,
) -> Result<(DebiasedEstimate, DetectionReport)> {
    let gamma = design.gamma();
    let x_hat = &solution.x_hat;
    let lambda = solution.lambda;
    let r = &solution.residual;
    let rss = r.iter().map(|z| z.norm_sqr()).sum::<f64>() / r.len() as f64;
    let (variant, rho, big_lambda, sigma_w2) = match detector {
        Detector::Crod => match design {
            Design::RowOrthogonal { .. } => {
                let (rho, l) = rho_ca_fixed_point(x_hat, lambda, gamma, Variant::Crom)?;
                (Variant::Crom, rho, l, sigma_w2_crod(gamma, rho, rss, sigma2)?)
            }
            Design::Gaussian { density, .. } => {
                let (rho, l) = rho_ca_fixed_point(x_hat, lambda, gamma, Variant::Cg)?;
                (Variant::Cg, rho, l, sigma_w2_density(density, gamma, rho, rss, sigma2, l)?)
            }
        },
        Detector::Camp => {
            let (rho, l) = rho_ca_fixed_point(x_hat, lambda, gamma, Variant::Cg)?;
            let x_d = debias_from_residual(a, x_hat, r, l);
            let s = sigma_w_camp(&x_d);
            return finish(x_d, Variant::Cg, rho, l, s * s, p_fa, support);
        }
        Detector::Sdl => {
            let rho = solution.rho_a;
            let l = coefficient(Variant::G, gamma, rho)?;
            let s = sigma_w_sdl_complex(r, gamma, rho)?;
            (Variant::G, rho, l, s * s)
        }
        Detector::Rod => {
            let rho = solution.rho_a;
            let l = coefficient(Variant::Rom, gamma, rho)?;
            (Variant::Rom, rho, l, sigma_w2_row_orthogonal(gamma, rho, rss, sigma2, l)?)
        }
    };
    let x_d = debias_from_residual(a, x_hat, r, big_lambda);
    finish(x_d, variant, rho, big_lambda, sigma_w2, p_fa, support)
}

fn finish(
    x_d: Vec<C64>,
    variant: Variant,
    rho: f64,
    lambda_coeff: f64,
    sigma_w2: f64,
    p_fa: f64,
    support: Option<&[usize]>,
) -> Result<(DebiasedEstimate, DetectionReport)> {
    if !(sigma_w2 > 0.0 && sigma_w2.is_finite()) {
        return Err(Error::IllPosed(format!("variance estimate {sigma_w2} admits no threshold")));
    }
    let kappa = threshold(sigma_w2, p_fa)?;
    let report = DetectionReport::new(&x_d, kappa, support, p_fa);
    Ok((DebiasedEstimate { x_d, lambda_coeff, variant, rho_used: rho, sigma_w2: Some(sigma_w2) }, report))
}

/// Every intermediate of one CROD run.
#[derive(Clone, Debug)]
pub struct CrodOutput {
    pub solution: LassoSolution,
    pub rho_ca: f64,
    pub rss: f64,
    pub estimate: DebiasedEstimate,
    pub report: DetectionReport,
}

/// Full CROD pipeline on a row-orthogonal design. When `x0 = 0` gives an
/// all-zero estimate the variance estimate can vanish; the threshold is then
/// zero and nothing is detected.
pub fn crod(
    y: &[C64],
    a: &SensingMatrix,
    lambda: f64,
    p_fa: f64,
    sigma2: f64,
    opts: &LassoOptions,
) -> Result<CrodOutput> {
    if !(p_fa > 0.0 && p_fa < 1.0) {
        return Err(Error::param(format!("target false-alarm rate must lie in (0, 1), got {p_fa}")));
    }
    let gamma = a.rows() as f64 / a.cols() as f64;
    let solution = solve_lasso(y, a, lambda, opts)?;
    let (rho_ca, big_lambda) = rho_ca_fixed_point(&solution.x_hat, lambda, gamma, Variant::Crom)?;
    let x_d = debias_from_residual(a, &solution.x_hat, &solution.residual, big_lambda);
    let rss = solution.residual.iter().map(|z| z.norm_sqr()).sum::<f64>() / a.rows() as f64;
    let sigma_w2 = sigma_w2_crod(gamma, rho_ca, rss, sigma2)?;
    let kappa_d = if sigma_w2 > 0.0 { threshold(sigma_w2, p_fa)? } else { 0.0 };
    let report = DetectionReport::new(&x_d, kappa_d, None, p_fa);
    let estimate =
        DebiasedEstimate { x_d, lambda_coeff: big_lambda, variant: Variant::Crom, rho_used: rho_ca, sigma_w2: Some(sigma_w2) };
    Ok(CrodOutput { solution, rho_ca, rss, estimate, report })
}
