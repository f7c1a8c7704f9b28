//! Asymptotic eigenvalue laws `ρ_J(s)` of the Gram matrix `J = AᴴA` and the
//! Stieltjes-type fixed points built on them.
//!
//! For a law with Stieltjes sum `S(t) = ∫ρ(s)/(t − s) ds`, the inverse
//! `t(−χ)` solves `S(t) = −χ` on the negative axis, and
//!
//! * `G′(−χ) = t(−χ) + 1/χ`,
//! * `G″(−χ) = t′(−χ) + 1/χ²` with `t′ = −[∫ρ(s)/(t − s)² ds]⁻¹`.
//!
//! Both are evaluated in cancellation-free forms. Closed forms for the
//! row-orthogonal law are provided separately in [`row_orthogonal_g_prime`]
//! and [`row_orthogonal_g_double_prime`].

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use crate::quad;
use crate::{Error, Result};

const MASS_TOL: f64 = 1e-8;
const QUAD_TOL: f64 = 1e-13;
/// Below this χ, `G′` and `G″` come from the free-cumulant expansion.
pub const SMALL_CHI: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Atom {
    pub location: f64,
    pub mass: f64,
}

/// Continuous part of a law, supported on `[lo, hi]` and vanishing like a
/// square root at both edges (or with an integrable `s^{-1/2}` blow-up at
/// `lo = 0`). Integrals use `s = c + r·cos θ`, which removes both edges.
#[derive(Clone)]
pub struct ContinuousPart {
    pub lo: f64,
    pub hi: f64,
    density: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
}

impl ContinuousPart {
    pub fn new(lo: f64, hi: f64, density: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Self { lo, hi, density: Arc::new(density) }
    }

    pub fn density(&self, s: f64) -> f64 {
        if s < self.lo || s > self.hi {
            0.0
        } else {
            (self.density)(s)
        }
    }

    fn integrate(&self, g: &dyn Fn(f64) -> f64) -> Result<f64> {
        let c = 0.5 * (self.hi + self.lo);
        let r = 0.5 * (self.hi - self.lo);
        quad::integrate(
            |theta| {
                let s = c + r * theta.cos();
                (self.density)(s) * g(s) * r * theta.sin()
            },
            0.0,
            PI,
            QUAD_TOL,
        )
    }
}

impl fmt::Debug for ContinuousPart {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ContinuousPart").field("lo", &self.lo).field("hi", &self.hi).finish_non_exhaustive()
    }
}

/// Atoms plus an optional continuous part, with unit total mass on `[0, ∞)`.
#[derive(Clone, Debug)]
pub struct SpectralDensity {
    atoms: Vec<Atom>,
    continuous: Option<ContinuousPart>,
}

impl SpectralDensity {
    pub fn new(atoms: Vec<Atom>, continuous: Option<ContinuousPart>) -> Result<Self> {
        for a in &atoms {
            if !(a.location >= 0.0) || !(a.mass > 0.0 && a.mass <= 1.0) {
                return Err(Error::param(format!("invalid atom {a:?}")));
            }
        }
        if let Some(c) = &continuous {
            if !(c.lo >= 0.0 && c.hi > c.lo) {
                return Err(Error::param(format!("invalid support [{}, {}]", c.lo, c.hi)));
            }
        }
        let d = Self { atoms, continuous };
        let mass = d.total_mass()?;
        if (mass - 1.0).abs() > MASS_TOL {
            return Err(Error::param(format!("spectral density has total mass {mass}")));
        }
        Ok(d)
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn continuous(&self) -> Option<&ContinuousPart> {
        self.continuous.as_ref()
    }

    pub fn total_mass(&self) -> Result<f64> {
        self.integrate(|_| 1.0)
    }

    /// `∫ g dρ` over atoms and continuous part.
    pub fn integrate(&self, g: impl Fn(f64) -> f64) -> Result<f64> {
        let atoms: f64 = self.atoms.iter().map(|a| a.mass * g(a.location)).sum();
        let cont = match &self.continuous {
            Some(c) => c.integrate(&g)?,
            None => 0.0,
        };
        Ok(atoms + cont)
    }

    fn mass_at_zero(&self) -> f64 {
        self.atoms.iter().filter(|a| a.location == 0.0).map(|a| a.mass).sum()
    }

    fn check_pole(&self, t: f64) -> Result<()> {
        let on_atom = self.atoms.iter().any(|a| a.location == t);
        let in_cont = self.continuous.as_ref().is_some_and(|c| t >= c.lo && t <= c.hi);
        if on_atom || in_cont || !t.is_finite() {
            return Err(Error::numeric(format!("Stieltjes sum has a pole at t = {t}")));
        }
        Ok(())
    }

    /// First three free cumulants `(κ1, κ2, κ3)`.
    fn free_cumulants(&self) -> Result<(f64, f64, f64)> {
        let m1 = self.integrate(|s| s)?;
        let m2 = self.integrate(|s| s * s)?;
        let m3 = self.integrate(|s| s * s * s)?;
        Ok((m1, m2 - m1 * m1, m3 - 3.0 * m1 * m2 + 2.0 * m1 * m1 * m1))
    }
}

fn check_gamma(gamma: f64) -> Result<()> {
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::param(format!("compression rate must lie in (0, 1], got {gamma}")));
    }
    Ok(())
}

/// `(1 − γ)δ(s) + γδ(s − 1)`.
pub fn row_orthogonal_density(gamma: f64) -> Result<SpectralDensity> {
    check_gamma(gamma)?;
    let mut atoms = Vec::new();
    if gamma < 1.0 {
        atoms.push(Atom { location: 0.0, mass: 1.0 - gamma });
    }
    atoms.push(Atom { location: 1.0, mass: gamma });
    SpectralDensity::new(atoms, None)
}

/// Marchenko–Pastur law of `AᴴA` for i.i.d. `CN(0, 1/N)` entries:
/// `(1 − γ)δ(s) + √((λ₊ − s)(s − λ₋))/(2πs)` on `[λ₋, λ₊]`, `λ± = (1 ± √γ)²`.
pub fn marchenko_pastur_density(gamma: f64) -> Result<SpectralDensity> {
    check_gamma(gamma)?;
    let lo = (1.0 - gamma.sqrt()).powi(2);
    let hi = (1.0 + gamma.sqrt()).powi(2);
    let cont = ContinuousPart::new(lo, hi, move |s| {
        let v = (hi - s) * (s - lo);
        if v <= 0.0 || s <= 0.0 {
            0.0
        } else {
            v.sqrt() / (2.0 * PI * s)
        }
    });
    let atoms = if gamma < 1.0 { vec![Atom { location: 0.0, mass: 1.0 - gamma }] } else { Vec::new() };
    SpectralDensity::new(atoms, Some(cont))
}

/// `S(t) = ∫ρ(s)/(t − s) ds`.
pub fn stieltjes_sum(t: f64, density: &SpectralDensity) -> Result<f64> {
    density.check_pole(t)?;
    density.integrate(|s| 1.0 / (t - s))
}

/// Bisection on a monotone function of `t < 0`, bracketed by expanding
/// geometrically from `t = −1e−12` towards `−∞`. `f` must be negative near
/// zero and positive far out.
fn negative_root(f: impl Fn(f64) -> Result<f64>, what: &str) -> Result<f64> {
    let mut hi = -1e-12;
    let f_hi = f(hi)?;
    if f_hi >= 0.0 {
        if f_hi == 0.0 {
            return Ok(hi);
        }
        return Err(Error::numeric(format!("{what}: no sign change below t = {hi} (f = {f_hi:e})")));
    }
    let mut lo = -1.0;
    let mut f_lo = f(lo)?;
    let mut expansions = 0;
    while f_lo <= 0.0 {
        if f_lo == 0.0 {
            return Ok(lo);
        }
        hi = lo;
        lo *= 2.0;
        expansions += 1;
        if expansions > 1100 {
            return Err(Error::numeric(format!("{what}: bracket expansion diverged (f(lo) = {f_lo:e})")));
        }
        f_lo = f(lo)?;
    }
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let fm = f(mid)?;
        if fm == 0.0 {
            return Ok(mid);
        }
        if fm > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// The unique `t < 0` with `S(t) = −χ`.
pub fn solve_t(chi: f64, density: &SpectralDensity) -> Result<f64> {
    if !(chi > 0.0) {
        return Err(Error::param(format!("chi must be positive, got {chi}")));
    }
    // S is decreasing on t < 0, so S(t) + χ runs from χ > 0 at −∞ down.
    // The bisection orientation wants f < 0 near zero.
    negative_root(|t| Ok(stieltjes_sum(t, density)? + chi), "solve_t")
        .map_err(|e| Error::numeric(format!("{e} [chi = {chi}]")))
}

fn g_parts(chi: f64, density: &SpectralDensity) -> Result<(f64, f64, f64)> {
    let t = solve_t(chi, density)?;
    let s_t = -chi;
    // 1 + tχ = ∫ρ s/(s − t); all terms nonnegative for t < 0.
    let one_plus_t_chi = density.integrate(|s| s / (s - t))?;
    let w = density.integrate(|s| 1.0 / ((t - s) * (t - s)))?;
    let var = density.integrate(|s| {
        let u = 1.0 / (t - s) - s_t;
        u * u
    })?;
    Ok((one_plus_t_chi / chi, var / (chi * chi * w), t))
}

/// `G′(−χ; J) = t(−χ) + 1/χ`.
pub fn g_prime(chi: f64, density: &SpectralDensity) -> Result<f64> {
    if chi > 0.0 && chi < SMALL_CHI {
        let (k1, k2, k3) = density.free_cumulants()?;
        return Ok(k1 - k2 * chi + k3 * chi * chi);
    }
    g_parts(chi, density).map(|(g1, _, _)| g1)
}

/// `G″(−χ; J) = t′(−χ) + 1/χ²`.
pub fn g_double_prime(chi: f64, density: &SpectralDensity) -> Result<f64> {
    if chi > 0.0 && chi < SMALL_CHI {
        let (_, k2, k3) = density.free_cumulants()?;
        return Ok(k2 - 2.0 * k3 * chi);
    }
    g_parts(chi, density).map(|(_, g2, _)| g2)
}

/// Debiasing coefficient `Λ = t·ρ_CA/(ρ_CA − 1)` where `t < 0` solves
/// `∫ρ(s)/(t − s) ds = (1 − ρ_CA)/t`.
pub fn lambda_from_density(rho_ca: f64, density: &SpectralDensity) -> Result<f64> {
    let zero_mass = density.mass_at_zero();
    if !(rho_ca > 0.0 && rho_ca < 1.0 - zero_mass) {
        return Err(Error::param(format!(
            "active density {rho_ca} outside (0, {})",
            1.0 - zero_mass
        )));
    }
    // t·S(t) − (1 − ρ) = ρ − ∫ρ(s) s/(s − t) ds, increasing as t → −∞.
    let t = negative_root(|t| Ok(rho_ca - density.integrate(|s| s / (s - t))?), "lambda_from_density")?;
    Ok(t * rho_ca / (rho_ca - 1.0))
}

/// Closed-form `G′(−χ)` for the row-orthogonal law,
/// `(1 + χ − √((1 + χ)² − 4γχ))/(2χ)`, written as `2γ/(1 + χ + √D)`.
pub fn row_orthogonal_g_prime(chi: f64, gamma: f64) -> f64 {
    let d = (1.0 + chi).powi(2) - 4.0 * gamma * chi;
    2.0 * gamma / (1.0 + chi + d.sqrt())
}

/// Closed-form `G″(−χ)` for the row-orthogonal law,
/// `(2γχ − χ − 1 + √D)/(2χ²√D)`, rearranged to avoid cancellation.
pub fn row_orthogonal_g_double_prime(chi: f64, gamma: f64) -> f64 {
    let d = (1.0 + chi).powi(2) - 4.0 * gamma * chi;
    let sd = d.sqrt();
    let u = 1.0 + chi - 2.0 * gamma * chi;
    // √D − u = 4γ(1 − γ)χ²/(√D + u).
    if u >= 0.0 {
        2.0 * gamma * (1.0 - gamma) / (sd * (sd + u))
    } else {
        (sd - u) / (2.0 * chi * chi * sd)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    // Textbook forms, used as oracles for the rearranged ones.
    fn g1_raw(chi: f64, gamma: f64) -> f64 {
        (1.0 + chi - ((chi + 1.0).powi(2) - 4.0 * gamma * chi).sqrt()) / (2.0 * chi)
    }
    fn g2_raw(chi: f64, gamma: f64) -> f64 {
        let sd = ((chi + 1.0).powi(2) - 4.0 * gamma * chi).sqrt();
        (2.0 * gamma * chi - chi - 1.0 + sd) / (2.0 * chi * chi * sd)
    }

    #[test]
    fn row_orthogonal_atoms() {
        let d = row_orthogonal_density(1.0).unwrap();
        assert_eq!(d.atoms(), &[Atom { location: 1.0, mass: 1.0 }]);
        let d = row_orthogonal_density(0.5).unwrap();
        assert_eq!(d.atoms(), &[Atom { location: 0.0, mass: 0.5 }, Atom { location: 1.0, mass: 0.5 }]);
        let d = row_orthogonal_density(0.75).unwrap();
        assert!((d.total_mass().unwrap() - 1.0).abs() < 1e-15);
        assert!(row_orthogonal_density(0.0).is_err());
        assert!(row_orthogonal_density(1.2).is_err());
    }

    #[test]
    fn marchenko_pastur_support_and_mass() {
        let d = marchenko_pastur_density(1.0).unwrap();
        assert!(d.atoms().is_empty());
        let c = d.continuous().unwrap();
        assert_eq!((c.lo, c.hi), (0.0, 4.0));

        let d = marchenko_pastur_density(0.25).unwrap();
        let c = d.continuous().unwrap();
        assert!((c.lo - 0.25).abs() < 1e-15 && (c.hi - 2.25).abs() < 1e-15);

        // Continuous mass against an independent fine midpoint rule in s.
        let d = marchenko_pastur_density(0.5).unwrap();
        let c = d.continuous().unwrap();
        let n = 2_000_000;
        let h = (c.hi - c.lo) / n as f64;
        let mid: f64 = (0..n).map(|i| c.density(c.lo + (i as f64 + 0.5) * h)).sum::<f64>() * h;
        assert!((mid - 0.5).abs() < 1e-6, "{mid}");
        let quad = d.integrate(|_| 1.0).unwrap() - 0.5;
        assert!((quad - 0.5).abs() < 1e-12);
        for g in [0.1, 0.3, 0.9, 1.0] {
            assert!((marchenko_pastur_density(g).unwrap().total_mass().unwrap() - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn mass_normalisation_enforced() {
        let bad = SpectralDensity::new(vec![Atom { location: 0.0, mass: 0.5 }], None);
        assert!(bad.is_err());
        let neg = SpectralDensity::new(vec![Atom { location: -1.0, mass: 1.0 }], None);
        assert!(neg.is_err());
    }

    #[test]
    fn stieltjes_examples() {
        let d = row_orthogonal_density(0.5).unwrap();
        assert!((stieltjes_sum(-4.0, &d).unwrap() + 0.225).abs() < 1e-15);
        let one = SpectralDensity::new(vec![Atom { location: 1.0, mass: 1.0 }], None).unwrap();
        assert!((stieltjes_sum(2.0, &one).unwrap() - 1.0).abs() < 1e-15);
        assert!(stieltjes_sum(-1e12, &d).unwrap().abs() < 1e-11);
        assert!(stieltjes_sum(1.0, &d).is_err());
        let mp = marchenko_pastur_density(0.5).unwrap();
        assert!(stieltjes_sum(1.0, &mp).is_err());
    }

    #[test]
    fn solve_t_examples() {
        let d = row_orthogonal_density(0.5).unwrap();
        assert!((solve_t(0.225, &d).unwrap() + 4.0).abs() < 1e-12);
        let zero = SpectralDensity::new(vec![Atom { location: 0.0, mass: 1.0 }], None).unwrap();
        assert!((solve_t(1.0, &zero).unwrap() + 1.0).abs() < 1e-12);

        // Brute-force sign-change scan for Marchenko–Pastur.
        let mp = marchenko_pastur_density(0.5).unwrap();
        let t = solve_t(0.225, &mp).unwrap();
        let f = |t: f64| stieltjes_sum(t, &mp).unwrap() + 0.225;
        let (a, b, steps) = (-20.0_f64, -1e-3_f64, 20_000);
        let h = (b - a) / steps as f64;
        let mut bracket = None;
        for i in 0..steps {
            let (x0, x1) = (a + i as f64 * h, a + (i + 1) as f64 * h);
            if f(x0) > 0.0 && f(x1) <= 0.0 {
                bracket = Some((x0, x1));
                break;
            }
        }
        let (mut lo, mut hi) = bracket.expect("scan found no sign change");
        // Refine the scan cell by a finer scan.
        for _ in 0..3 {
            let h = (hi - lo) / 1000.0;
            let mut i = 0;
            while f(lo + (i + 1) as f64 * h) > 0.0 {
                i += 1;
            }
            lo += i as f64 * h;
            hi = lo + h;
        }
        assert!((t - 0.5 * (lo + hi)).abs() < 1e-8, "{t} vs [{lo}, {hi}]");

        assert!(solve_t(-1.0, &d).is_err());
        // γ = 1 row-orthogonal: S(0⁻) = −1, so χ ≥ 1 has no negative root.
        let one = row_orthogonal_density(1.0).unwrap();
        assert!(matches!(solve_t(2.0, &one), Err(Error::Numeric(_))));
    }

    #[test]
    fn g_prime_examples() {
        let d = row_orthogonal_density(0.5).unwrap();
        assert!((g_prime(0.225, &d).unwrap() - 4.0 / 9.0).abs() < 1e-12);
        assert!((row_orthogonal_g_prime(0.225, 0.5) - 4.0 / 9.0).abs() < 1e-15);
        for gamma in [0.2, 0.5, 0.9] {
            let d = row_orthogonal_density(gamma).unwrap();
            let limit = g1_raw(1e-8, gamma);
            assert!((g_prime(1e-9, &d).unwrap() - gamma).abs() < 1e-8);
            assert!((limit - gamma).abs() < 1e-7);
        }
        let zero = SpectralDensity::new(vec![Atom { location: 0.0, mass: 1.0 }], None).unwrap();
        assert!(g_prime(1.0, &zero).unwrap().abs() < 1e-12);
    }

    #[test]
    fn g_double_prime_examples() {
        let d = row_orthogonal_density(0.5).unwrap();
        let v = g_double_prime(0.225, &d).unwrap();
        assert!((v - 0.240_89).abs() < 5e-6, "{v}");
        assert!((v - g2_raw(0.225, 0.5)).abs() < 1e-12);
        let fd = -(g_prime(0.225 + 1e-5, &d).unwrap() - g_prime(0.225 - 1e-5, &d).unwrap()) / 2e-5;
        assert!((fd - v).abs() / v < 1e-6);

        for gamma in [0.2, 0.5, 0.9] {
            let d = row_orthogonal_density(gamma).unwrap();
            let h = 1e-4;
            let fd = -(g1_raw(2.0 * h, gamma) - g1_raw(h, gamma)) / h;
            let lim = gamma * (1.0 - gamma);
            assert!((g_double_prime(1e-9, &d).unwrap() - lim).abs() < 1e-8);
            assert!((fd - lim).abs() < 1e-3 * lim.max(1e-3));
        }
        let zero = SpectralDensity::new(vec![Atom { location: 0.0, mass: 1.0 }], None).unwrap();
        assert!(g_double_prime(1.0, &zero).unwrap().abs() < 1e-12);
    }

    #[test]
    fn closed_forms_match_textbook_expressions() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        for _ in 0..200 {
            let gamma: f64 = rng.random_range(0.01..0.99);
            let chi = 10f64.powf(rng.random_range(-3.0..1.0));
            assert!((row_orthogonal_g_prime(chi, gamma) - g1_raw(chi, gamma)).abs() < 1e-11);
            let g2 = row_orthogonal_g_double_prime(chi, gamma);
            assert!((g2 - g2_raw(chi, gamma)).abs() < 1e-9 * g2.abs().max(1.0));
        }
    }

    #[test]
    fn lambda_examples() {
        let d = row_orthogonal_density(0.5).unwrap();
        assert!((lambda_from_density(0.1, &d).unwrap() - 4.0 / 9.0).abs() < 1e-12);
        let mp = marchenko_pastur_density(0.5).unwrap();
        assert!((lambda_from_density(0.1, &mp).unwrap() - 0.4).abs() < 1e-4);
        for gamma in [0.3, 0.7] {
            let d = row_orthogonal_density(gamma).unwrap();
            assert!((lambda_from_density(1e-8, &d).unwrap() - gamma).abs() < 1e-7);
        }
        assert!(lambda_from_density(0.6, &d).is_err());
        assert!(lambda_from_density(0.0, &d).is_err());
    }
}
