//! Complex LASSO: `min_x ½‖y − Ax‖₂² + λ Σ|x_i|` with the complex modulus
//! as penalty, solved by FISTA with function-value restarts.

use crate::model::SensingMatrix;
use crate::{Error, Result, C64};

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

/// Complex soft threshold `ST_{λ,Q}(h) = (h/|h|)·(|h| − λ)/Q·Θ(|h| − λ)`.
///
/// This is the unique minimiser of `(Q/2)|x|² − Re(h̄x) + λ|x|`.
#[inline]
pub fn complex_soft_threshold(h: C64, lambda: f64, q: f64) -> C64 {
    let mag = h.norm();
    if mag <= lambda {
        ZERO
    } else {
        h * ((mag - lambda) / (q * mag))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Step {
    /// `1/L` with `L = λ_max(AᴴA)`.
    Auto,
    Value(f64),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LassoOptions {
    pub step: Step,
    pub max_iter: usize,
    /// Relative iterate change `‖x_k − x_{k−1}‖/‖x_k‖` required for exit.
    pub tol_rel: f64,
    /// Optimality-condition residual required for exit.
    pub tol_kkt: f64,
    /// FISTA momentum. When off, iterations are plain ISTA.
    pub accelerate: bool,
}

impl Default for LassoOptions {
    fn default() -> Self {
        Self {
            step: Step::Auto,
            max_iter: 100_000,
            tol_rel: 1e-10,
            tol_kkt: 1e-8,
            accelerate: true,
        }
    }
}

#[derive(Clone, Debug)]
pub struct LassoSolution {
    pub x_hat: Vec<C64>,
    pub lambda: f64,
    /// `y − A·x_hat`.
    pub residual: Vec<C64>,
    pub iterations: usize,
    pub objective: f64,
    pub kkt_violation: f64,
    /// Fraction of exactly nonzero entries of `x_hat`.
    pub rho_a: f64,
    /// Objective after every iteration, starting from `x = 0`.
    pub objective_trace: Vec<f64>,
    pub restarts: usize,
}

/// Fraction of structurally nonzero entries.
pub fn active_density(x_hat: &[C64]) -> f64 {
    if x_hat.is_empty() {
        return 0.0;
    }
    x_hat.iter().filter(|z| **z != ZERO).count() as f64 / x_hat.len() as f64
}

fn l1(x: &[C64]) -> f64 {
    x.iter().map(|z| z.norm()).sum()
}

fn norm_sqr(x: &[C64]) -> f64 {
    x.iter().map(|z| z.norm_sqr()).sum()
}

/// `½‖y − Ax‖² + λ‖x‖₁`.
pub fn objective(y: &[C64], a: &SensingMatrix, x: &[C64], lambda: f64) -> f64 {
    let ax = a.apply_vec(x);
    objective_from_image(y, &ax, x, lambda)
}

fn objective_from_image(y: &[C64], ax: &[C64], x: &[C64], lambda: f64) -> f64 {
    let rss: f64 = y.iter().zip(ax).map(|(y, a)| (y - a).norm_sqr()).sum();
    0.5 * rss + lambda * l1(x)
}

/// Largest violation of the optimality conditions given the correlations
/// `g = Aᴴ(y − Ax)`: `|g_i − λ x_i/|x_i||` on the active set and
/// `max(|g_i| − λ, 0)` elsewhere.
pub fn kkt_from_correlation(x: &[C64], g: &[C64], lambda: f64) -> f64 {
    x.iter()
        .zip(g)
        .map(|(&xi, &gi)| {
            if xi != ZERO {
                (gi - xi * (lambda / xi.norm())).norm()
            } else {
                (gi.norm() - lambda).max(0.0)
            }
        })
        .fold(0.0, f64::max)
}

pub fn kkt_residual(y: &[C64], a: &SensingMatrix, x_hat: &[C64], lambda: f64) -> f64 {
    let r: Vec<C64> = y.iter().zip(a.apply_vec(x_hat)).map(|(y, ax)| y - ax).collect();
    kkt_from_correlation(x_hat, &a.adjoint_vec(&r), lambda)
}

/// Solves the complex LASSO from `x = 0`.
///
/// Exits once the relative iterate change is at most `tol_rel` and the KKT
/// residual is at most `tol_kkt`. Zeros in the result are exact outputs of
/// the proximal map. The recorded objective is non-increasing: whenever a
/// momentum step would increase it, momentum is reset and a plain proximal
/// gradient step from the previous iterate is taken instead.
pub fn solve_lasso(y: &[C64], a: &SensingMatrix, lambda: f64, opts: &LassoOptions) -> Result<LassoSolution> {
    if !(lambda > 0.0) {
        return Err(Error::param(format!("lambda must be positive, got {lambda}")));
    }
    if y.len() != a.rows() {
        return Err(Error::dim(format!("y has length {}, A has {} rows", y.len(), a.rows())));
    }
    let step = match opts.step {
        Step::Auto => {
            let l = a.lipschitz();
            if !(l > 0.0) {
                return Err(Error::param("measurement matrix is zero"));
            }
            1.0 / l
        }
        Step::Value(s) if s > 0.0 => s,
        Step::Value(s) => return Err(Error::param(format!("step must be positive, got {s}"))),
    };
    let (m, n) = (a.rows(), a.cols());
    let thresh = step * lambda;

    let mut x = vec![ZERO; n];
    let mut ax = vec![ZERO; m];
    let mut z = x.clone();
    let mut az = ax.clone();
    let mut x_new = vec![ZERO; n];
    let mut ax_new = vec![ZERO; m];
    let mut res = vec![ZERO; m];
    let mut grad = vec![ZERO; n];
    let mut t = 1.0_f64;

    let mut f_prev = objective_from_image(y, &ax, &x, lambda);
    let mut trace = vec![f_prev];
    let mut restarts = 0;
    let mut last_kkt = f64::INFINITY;

    // x_out = prox((base − step·AᴴA·base) + step·Aᴴy), given A·base. Keeping
    // Aᴴy apart makes the step exact when AᴴA = I and step = 1.
    let aty_step: Vec<C64> = a.adjoint_vec(y).into_iter().map(|v| v * step).collect();
    let prox_step = |base: &[C64], a_base: &[C64], grad: &mut [C64], out: &mut [C64]| {
        a.adjoint(a_base, grad);
        out.iter_mut()
            .zip(base.iter().zip(grad.iter()).zip(&aty_step))
            .for_each(|(o, ((b, g), c))| *o = complex_soft_threshold((b - g * step) + c, thresh, 1.0));
    };

    for k in 1..=opts.max_iter {
        prox_step(&z, &az, &mut grad, &mut x_new);
        a.apply(&x_new, &mut ax_new);
        let mut f_new = objective_from_image(y, &ax_new, &x_new, lambda);

        if opts.accelerate && f_new > f_prev {
            restarts += 1;
            t = 1.0;
            prox_step(&x, &ax, &mut grad, &mut x_new);
            a.apply(&x_new, &mut ax_new);
            f_new = objective_from_image(y, &ax_new, &x_new, lambda);
        }

        let delta: f64 = x_new.iter().zip(&x).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
        let scale = norm_sqr(&x_new).sqrt();
        let rel = if scale > 0.0 { delta / scale } else { delta };

        if opts.accelerate {
            let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
            let beta = (t - 1.0) / t_next;
            for i in 0..n {
                z[i] = x_new[i] + (x_new[i] - x[i]) * beta;
            }
            for i in 0..m {
                az[i] = ax_new[i] + (ax_new[i] - ax[i]) * beta;
            }
            t = t_next;
        } else {
            z.copy_from_slice(&x_new);
            az.copy_from_slice(&ax_new);
        }
        std::mem::swap(&mut x, &mut x_new);
        std::mem::swap(&mut ax, &mut ax_new);
        f_prev = f_new;
        trace.push(f_new);

        if rel <= opts.tol_rel {
            res.iter_mut().zip(y.iter().zip(&ax)).for_each(|(r, (yi, a))| *r = yi - a);
            a.adjoint(&res, &mut grad);
            last_kkt = kkt_from_correlation(&x, &grad, lambda);
            if last_kkt <= opts.tol_kkt {
                return Ok(finish(x, ax, y, lambda, k, f_prev, last_kkt, trace, restarts));
            }
        }
    }

    let residual: Vec<C64> = y.iter().zip(&ax).map(|(yi, a)| yi - a).collect();
    if !last_kkt.is_finite() {
        last_kkt = kkt_from_correlation(&x, &a.adjoint_vec(&residual), lambda);
    }
    let best = finish(x, ax, y, lambda, opts.max_iter, f_prev, last_kkt, trace, restarts);
    Err(Error::NotConverged {
        iterations: opts.max_iter,
        kkt_violation: best.kkt_violation,
        best: Box::new(best),
    })
}

#[allow(clippy::too_many_arguments)]
fn finish(
    x: Vec<C64>,
    ax: Vec<C64>,
    y: &[C64],
    lambda: f64,
    iterations: usize,
    objective: f64,
    kkt_violation: f64,
    objective_trace: Vec<f64>,
    restarts: usize,
) -> LassoSolution {
    let residual = y.iter().zip(&ax).map(|(yi, a)| yi - a).collect();
    LassoSolution {
        rho_a: active_density(&x),
        x_hat: x,
        lambda,
        residual,
        iterations,
        objective,
        kkt_violation,
        objective_trace,
        restarts,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{EnsembleKind, InstanceParams, ProblemInstance};
    use crate::rng::{complex_normal, rng_from_seed};
    use nalgebra::DMatrix;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn soft_threshold_examples() {
        assert_eq!(complex_soft_threshold(c(0.0, 0.0), 1.0, 1.0), c(0.0, 0.0));
        assert!((complex_soft_threshold(c(2.0, 0.0), 1.0, 1.0) - c(1.0, 0.0)).norm() < 1e-15);
        assert!((complex_soft_threshold(c(0.0, 2.0), 1.0, 2.0) - c(0.0, 0.5)).norm() < 1e-15);
        assert_eq!(complex_soft_threshold(c(0.6, 0.8), 1.0, 1.0), c(0.0, 0.0));
    }

    /// Brute-force minimiser of (Q/2)|x|² − Re(h̄x) + λ|x| on a polar grid
    /// over a disc that contains every candidate.
    fn grid_argmin(h: C64, lambda: f64, q: f64) -> C64 {
        let f = |x: C64| 0.5 * q * x.norm_sqr() - (h.conj() * x).re + lambda * x.norm();
        let radius = h.norm() / q + 0.1;
        let (nr, nt) = (400, 360);
        let mut best = (f(c(0.0, 0.0)), c(0.0, 0.0));
        for i in 1..=nr {
            let r = radius * i as f64 / nr as f64;
            for j in 0..nt {
                let th = 2.0 * std::f64::consts::PI * j as f64 / nt as f64;
                let x = C64::from_polar(r, th);
                let v = f(x);
                if v < best.0 {
                    best = (v, x);
                }
            }
        }
        best.1
    }

    #[test]
    fn soft_threshold_is_grid_minimiser() {
        let mut rng = rng_from_seed(12);
        use rand::Rng;
        for _ in 0..1000 {
            let h = complex_normal(&mut rng, 4.0);
            let lambda: f64 = rng.random_range(0.0..2.0);
            let q: f64 = rng.random_range(0.2..3.0);
            let st = complex_soft_threshold(h, lambda, q);
            let g = grid_argmin(h, lambda, q);
            let radius = h.norm() / q + 0.1;
            // Grid spacing bounds the brute-force error.
            let tol = radius / 400.0 + radius * 2.0 * std::f64::consts::PI / 360.0;
            assert!((st - g).norm() <= tol, "h={h} λ={lambda} Q={q}: {st} vs {g}");
        }
    }

    fn identity(n: usize) -> SensingMatrix {
        SensingMatrix::from_dense(DMatrix::identity(n, n))
    }

    #[test]
    fn zero_observation_gives_zero() {
        let a = SensingMatrix::generate(EnsembleKind::ComplexGaussian, 10, 20, 1).unwrap();
        let sol = solve_lasso(&[c(0.0, 0.0); 10], &a, 0.3, &LassoOptions::default()).unwrap();
        assert!(sol.x_hat.iter().all(|z| *z == c(0.0, 0.0)));
        assert_eq!(sol.objective, 0.0);
        assert_eq!(sol.rho_a, 0.0);
    }

    #[test]
    fn identity_design_is_separable() {
        let mut rng = rng_from_seed(3);
        let y: Vec<C64> = (0..200).map(|_| complex_normal(&mut rng, 1.0)).collect();
        for lam in [0.05, 0.5, 1.5] {
            let sol = solve_lasso(&y, &identity(200), lam, &LassoOptions::default()).unwrap();
            for (x, &yi) in sol.x_hat.iter().zip(&y) {
                assert_eq!(*x, complex_soft_threshold(yi, lam, 1.0));
            }
        }
    }

    #[test]
    fn kkt_detects_violated_inactive_condition() {
        let y = vec![c(2.0, 0.0), c(0.1, 0.0)];
        let v = kkt_residual(&y, &identity(2), &[c(0.0, 0.0); 2], 0.5);
        assert!((v - 1.5).abs() < 1e-15);
    }

    #[test]
    fn active_density_examples() {
        assert_eq!(active_density(&[c(0.0, 0.0); 4]), 0.0);
        assert_eq!(active_density(&[c(1.0, 0.0); 5]), 1.0);
        assert_eq!(active_density(&[c(0.0, 0.0), c(0.0, 1e-300)]), 0.5);
    }

    #[test]
    fn rejects_bad_inputs() {
        let a = identity(3);
        let y = vec![c(1.0, 0.0); 3];
        assert!(matches!(solve_lasso(&y, &a, 0.0, &LassoOptions::default()), Err(Error::Parameter(_))));
        assert!(matches!(solve_lasso(&y[..2], &a, 0.1, &LassoOptions::default()), Err(Error::Dimension(_))));
    }

    #[test]
    fn reports_non_convergence_with_best_iterate() {
        let p = InstanceParams {
            kind: EnsembleKind::ComplexGaussian,
            m: 40,
            n: 80,
            rho2: 0.1,
            sigma_x2: 1.0,
            sigma2: 0.01,
        };
        let inst = ProblemInstance::generate(&p, 5).unwrap();
        let opts = LassoOptions { max_iter: 3, ..Default::default() };
        match solve_lasso(&inst.y, &inst.a, 0.1, &opts) {
            Err(Error::NotConverged { iterations, kkt_violation, best }) => {
                assert_eq!(iterations, 3);
                assert_eq!(best.x_hat.len(), 80);
                assert!((kkt_violation - kkt_residual(&inst.y, &inst.a, &best.x_hat, 0.1)).abs() < 1e-12);
            }
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }

    fn instance(kind: EnsembleKind, m: usize, n: usize, seed: u64) -> ProblemInstance {
        let p = InstanceParams { kind, m, n, rho2: 0.1, sigma_x2: 1.0, sigma2: 0.02 };
        ProblemInstance::generate(&p, seed).unwrap()
    }

    #[test]
    fn converged_solution_certifies_itself() {
        for (seed, kind) in [EnsembleKind::PartialFourier, EnsembleKind::HaarRowOrthogonal, EnsembleKind::ComplexGaussian]
            .into_iter()
            .enumerate()
        {
            let inst = instance(kind, 96, 128, seed as u64);
            let sol = solve_lasso(&inst.y, &inst.a, 0.1, &LassoOptions::default()).unwrap();
            let kkt = kkt_residual(&inst.y, &inst.a, &sol.x_hat, 0.1);
            assert!(kkt <= 1e-8, "{kind}: {kkt}");
            assert!((kkt - sol.kkt_violation).abs() < 1e-12);
            assert!(sol.rho_a > 0.0 && sol.rho_a < 1.0);

            // Proximal fixed point.
            let g = inst.a.adjoint_vec(&sol.residual);
            let step = 1.0 / inst.a.lipschitz();
            for (x, gi) in sol.x_hat.iter().zip(&g) {
                let p = complex_soft_threshold(x + gi * step, step * 0.1, 1.0);
                assert!((p - x).norm() <= 1e-8);
            }
        }
    }

    #[test]
    fn objective_trace_is_monotone() {
        for accelerate in [true, false] {
            let inst = instance(EnsembleKind::ComplexGaussian, 64, 128, 21);
            let opts = LassoOptions { accelerate, max_iter: 200_000, ..Default::default() };
            let sol = solve_lasso(&inst.y, &inst.a, 0.1, &opts).unwrap();
            for w in sol.objective_trace.windows(2) {
                assert!(w[1] <= w[0] * (1.0 + 1e-14) + 1e-300, "{accelerate}: {} -> {}", w[0], w[1]);
            }
        }
    }

    #[test]
    fn phase_equivariance() {
        let inst = instance(EnsembleKind::PartialFourier, 48, 64, 2);
        let base = solve_lasso(&inst.y, &inst.a, 0.1, &LassoOptions::default()).unwrap();
        let phase = C64::from_polar(1.0, 0.7);
        let rotated: Vec<C64> = inst.y.iter().map(|v| v * phase).collect();
        let rot = solve_lasso(&rotated, &inst.a, 0.1, &LassoOptions::default()).unwrap();
        for (u, v) in rot.x_hat.iter().zip(&base.x_hat) {
            assert!((u - v * phase).norm() < 1e-7);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn soft_threshold_magnitude_and_phase(re in -5.0..5.0f64, im in -5.0..5.0f64, lambda in 0.0..3.0f64, q in 0.1..4.0f64) {
            let h = c(re, im);
            let st = complex_soft_threshold(h, lambda, q);
            if h.norm() <= lambda {
                prop_assert_eq!(st, c(0.0, 0.0));
            } else {
                prop_assert!((st.norm() - (h.norm() - lambda) / q).abs() < 1e-12);
                prop_assert!((st.arg() - h.arg()).abs() < 1e-9);
            }
        }
    }
}
