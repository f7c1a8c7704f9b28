//! The experiment suites. Each trial is a pure function of its seed; trials
//! run on a rayon pool and are collected in trial order, so results do not
//! depend on the worker count.

use std::sync::Arc;

use rayon::prelude::*;

use super::config::{ExperimentConfig, KsMode, Normalize, Suite, SweepPoint};
use crate::detect::{
    debias, rho_ca_fixed_point, run_detector, sigma_w2_crod, sigma_w2_density, sigma_w_camp,
    sigma_w_sdl_complex, Design, Detector, Variant,
};
use crate::empirics::{
    exp1_cdf, ground_truth_sigma_w, ks_test, normalize_w, ree, standard_normal_cdf, Ecdf, KsResult,
};
use crate::lasso::{kkt_residual, solve_lasso, LassoOptions, LassoSolution, Step};
use crate::model::{InstanceParams, ProblemInstance, SensingMatrix};
use crate::rng::{derive_seed, stream_seed, Stream};
use crate::{Error, Result, C64};

/// Tolerance on the exact debiasing identities.
pub const IDENTITY_TOL: f64 = 1e-6;
/// Upper bound on detection batches per sweep point.
const MAX_BATCHES: usize = 10_000;
/// Gaussianity curves are sampled on `[-ECDF_RANGE, ECDF_RANGE]`.
const ECDF_RANGE: f64 = 4.0;

fn pool(cfg: &ExperimentConfig) -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(w) = cfg.workers {
        b = b.num_threads(w);
    }
    b.build().map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))
}

fn lasso_options(cfg: &ExperimentConfig) -> LassoOptions {
    LassoOptions { step: Step::Auto, max_iter: cfg.max_iter, tol_rel: cfg.tol_rel, tol_kkt: cfg.tol_kkt, accelerate: true }
}

fn params(cfg: &ExperimentConfig, pt: &SweepPoint) -> InstanceParams {
    InstanceParams { kind: cfg.ensemble, m: pt.m, n: cfg.n, rho2: pt.rho2, sigma_x2: cfg.sigma_x2, sigma2: pt.sigma2 }
}

/// Seed of trial `trial` at sweep point `point`.
pub fn trial_seed(master: u64, point: usize, trial: usize) -> u64 {
    derive_seed(master, &[point as u64, trial as u64])
}

/// Instance factory for one sweep point, honouring `fix_matrix`.
struct Instances {
    params: InstanceParams,
    master: u64,
    point: usize,
    fixed: Option<Arc<SensingMatrix>>,
}

impl Instances {
    fn new(cfg: &ExperimentConfig, pt: &SweepPoint) -> Result<Self> {
        let params = params(cfg, pt);
        let fixed = if cfg.fix_matrix {
            let seed = stream_seed(derive_seed(cfg.seed, &[pt.index as u64, u64::MAX]), Stream::Matrix);
            Some(Arc::new(SensingMatrix::generate(cfg.ensemble, pt.m, cfg.n, seed)?))
        } else {
            None
        };
        Ok(Self { params, master: cfg.seed, point: pt.index, fixed })
    }

    fn get(&self, trial: usize) -> Result<ProblemInstance> {
        let seed = trial_seed(self.master, self.point, trial);
        match &self.fixed {
            Some(a) => ProblemInstance::with_matrix(a.clone(), &self.params, seed),
            None => ProblemInstance::generate(&self.params, seed),
        }
    }
}

fn solve(inst: &ProblemInstance, cfg: &ExperimentConfig) -> Result<LassoSolution> {
    let mut sol = solve_lasso(&inst.y, &inst.a, cfg.lambda, &lasso_options(cfg))?;
    sol.objective_trace = Vec::new();
    Ok(sol)
}

fn single_point(cfg: &ExperimentConfig) -> Result<SweepPoint> {
    let pts = cfg.sweep_points()?;
    if pts.len() != 1 {
        return Err(Error::Config(format!("the {} suite takes a single parameter point", cfg.suite)));
    }
    Ok(pts[0])
}

fn support_mask(n: usize, support: &[usize]) -> Vec<bool> {
    let mut m = vec![false; n];
    support.iter().for_each(|&i| m[i] = true);
    m
}

fn error_vector(x_d: &[C64], x0: &[C64]) -> Vec<C64> {
    x_d.iter().zip(x0).map(|(a, b)| a - b).collect()
}

// ---------------------------------------------------------------- gaussianity

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Part {
    Null,
    Support,
}

impl Part {
    pub fn name(self) -> &'static str {
        match self {
            Part::Null => "null",
            Part::Support => "support",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Component {
    Re,
    Im,
    /// `|w_i|²/σ̂_w²` against the unit exponential.
    SqModulus,
}

impl Component {
    pub fn name(self) -> &'static str {
        match self {
            Component::Re => "re",
            Component::Im => "im",
            Component::SqModulus => "sq_modulus",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct KsRow {
    pub variant: Variant,
    pub part: Part,
    pub component: Component,
    /// `None` for pooled tests.
    pub trial: Option<usize>,
    pub result: KsResult,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CurveRow {
    pub x: f64,
    pub variant: Variant,
    pub part: Part,
    pub component: Component,
    /// `Φ(x) − F_n(x)`.
    pub phi_minus_ecdf: f64,
}

#[derive(Clone, Debug)]
pub struct GaussianityReport {
    pub point: SweepPoint,
    pub trials: usize,
    pub ks: Vec<KsRow>,
    pub curves: Vec<CurveRow>,
}

impl GaussianityReport {
    pub fn ks_row(&self, variant: Variant, part: Part, component: Component) -> Option<&KsRow> {
        self.ks.iter().find(|r| r.variant == variant && r.part == part && r.component == component && r.trial.is_none())
    }
}

/// Streams of one variant in one trial: `[null re, null im, support re,
/// support im]` and the null squared moduli.
struct Streams {
    parts: [Vec<f64>; 4],
    sq_null: Vec<f64>,
}

fn gaussianity_trial(cfg: &ExperimentConfig, inst: &ProblemInstance) -> Result<[Streams; 2]> {
    let sol = solve(inst, cfg)?;
    let gamma = inst.gamma;
    let mask = support_mask(inst.n(), &inst.support);
    let rss = sol.residual.iter().map(|z| z.norm_sqr()).sum::<f64>() / inst.m() as f64;
    let make = |rule: Variant| -> Result<Streams> {
        let (rho, lam) = rho_ca_fixed_point(&sol.x_hat, cfg.lambda, gamma, rule)?;
        let x_d = debias(&inst.y, &inst.a, &sol.x_hat, lam)?;
        let w = error_vector(&x_d, &inst.x0);
        let est = match rule {
            Variant::Crom => sigma_w2_crod(gamma, rho, rss, inst.sigma2)?.sqrt(),
            _ => sigma_w_camp(&x_d),
        };
        let scale = match cfg.normalize {
            Normalize::GroundTruth => ground_truth_sigma_w(&w)?,
            Normalize::Estimated => est,
        };
        let (re, im) = normalize_w(&w, scale)?;
        let mut parts: [Vec<f64>; 4] = Default::default();
        let mut sq_null = Vec::new();
        for i in 0..w.len() {
            let base = if mask[i] { 2 } else { 0 };
            parts[base].push(re[i]);
            parts[base + 1].push(im[i]);
            if !mask[i] {
                sq_null.push(w[i].norm_sqr() / (est * est));
            }
        }
        Ok(Streams { parts, sq_null })
    };
    Ok([make(Variant::Crom)?, make(Variant::Cg)?])
}

const PARTS: [(Part, Component); 4] = [
    (Part::Null, Component::Re),
    (Part::Null, Component::Im),
    (Part::Support, Component::Re),
    (Part::Support, Component::Im),
];

pub fn run_gaussianity(cfg: &ExperimentConfig) -> Result<GaussianityReport> {
    cfg.validate()?;
    if cfg.suite != Suite::Gaussianity {
        return Err(Error::Config(format!("config is for the {} suite", cfg.suite)));
    }
    let pt = single_point(cfg)?;
    let instances = Instances::new(cfg, &pt)?;
    let per_trial: Vec<[Streams; 2]> = pool(cfg)?.install(|| {
        (0..cfg.trials)
            .into_par_iter()
            .map(|t| gaussianity_trial(cfg, &instances.get(t)?))
            .collect::<Result<_>>()
    })?;

    let mut ks = Vec::new();
    let mut curves = Vec::new();
    let grid: Vec<f64> = (0..cfg.ecdf_points)
        .map(|j| -ECDF_RANGE + 2.0 * ECDF_RANGE * j as f64 / (cfg.ecdf_points - 1) as f64)
        .collect();
    for (v, variant) in [Variant::Crom, Variant::Cg].into_iter().enumerate() {
        for (k, (part, component)) in PARTS.into_iter().enumerate() {
            let pooled: Vec<f64> = per_trial.iter().flat_map(|s| s[v].parts[k].iter().copied()).collect();
            if pooled.is_empty() {
                continue;
            }
            let ecdf = Ecdf::new(&pooled)?;
            curves.extend(grid.iter().map(|&x| CurveRow {
                x,
                variant,
                part,
                component,
                phi_minus_ecdf: standard_normal_cdf(x) - ecdf.eval(x),
            }));
            match cfg.ks_mode {
                KsMode::Pooled => ks.push(KsRow {
                    variant,
                    part,
                    component,
                    trial: None,
                    result: ks_test(&pooled, standard_normal_cdf)?,
                }),
                KsMode::PerTrial => {
                    for (t, s) in per_trial.iter().enumerate() {
                        if !s[v].parts[k].is_empty() {
                            let result = ks_test(&s[v].parts[k], standard_normal_cdf)?;
                            ks.push(KsRow { variant, part, component, trial: Some(t), result });
                        }
                    }
                }
            }
        }
        let sq: Vec<f64> = per_trial.iter().flat_map(|s| s[v].sq_null.iter().copied()).collect();
        if !sq.is_empty() {
            let result = ks_test(&sq, exp1_cdf)?;
            ks.push(KsRow { variant, part: Part::Null, component: Component::SqModulus, trial: None, result });
        }
    }
    Ok(GaussianityReport { point: pt, trials: cfg.trials, ks, curves })
}

// ------------------------------------------------------------- variance error

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Estimator {
    Crod,
    Camp,
    SdlComplex,
}

impl Estimator {
    pub const ALL: [Estimator; 3] = [Estimator::Crod, Estimator::Camp, Estimator::SdlComplex];

    pub fn name(self) -> &'static str {
        match self {
            Estimator::Crod => "CROD",
            Estimator::Camp => "CAMP",
            Estimator::SdlComplex => "SDL-complex",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReeRow {
    pub point: SweepPoint,
    pub estimator: Estimator,
    /// Trials that produced an estimate.
    pub trials: usize,
    /// Trials where the estimator was undefined (nonpositive coefficient).
    pub failed: usize,
    pub mean_ree: f64,
    pub sd_ree: f64,
}

#[derive(Clone, Debug)]
pub struct VarianceErrorReport {
    pub axis: super::config::SweepAxis,
    pub rows: Vec<ReeRow>,
}

impl VarianceErrorReport {
    pub fn row(&self, point: usize, estimator: Estimator) -> Option<&ReeRow> {
        self.rows.iter().find(|r| r.point.index == point && r.estimator == estimator)
    }
}

fn ill_posed_to_none(r: Result<f64>) -> Result<Option<f64>> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(Error::IllPosed(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

fn variance_trial(cfg: &ExperimentConfig, design: &Design, inst: &ProblemInstance) -> Result<[Option<f64>; 3]> {
    let sol = solve(inst, cfg)?;
    let gamma = inst.gamma;
    let rss = sol.residual.iter().map(|z| z.norm_sqr()).sum::<f64>() / inst.m() as f64;
    let cg = || -> Result<(f64, Vec<C64>, f64)> {
        let (rho, lam) = rho_ca_fixed_point(&sol.x_hat, cfg.lambda, gamma, Variant::Cg)?;
        let x_d = debias(&inst.y, &inst.a, &sol.x_hat, lam)?;
        let gt = ground_truth_sigma_w(&error_vector(&x_d, &inst.x0))?;
        Ok((rho, x_d, gt))
    };
    let crod = ill_posed_to_none((|| match design {
        Design::RowOrthogonal { .. } => {
            let (rho, lam) = rho_ca_fixed_point(&sol.x_hat, cfg.lambda, gamma, Variant::Crom)?;
            let x_d = debias(&inst.y, &inst.a, &sol.x_hat, lam)?;
            let gt = ground_truth_sigma_w(&error_vector(&x_d, &inst.x0))?;
            ree(sigma_w2_crod(gamma, rho, rss, inst.sigma2)?.sqrt(), gt)
        }
        Design::Gaussian { density, .. } => {
            let (rho, _, gt) = cg()?;
            let lam = gamma - rho;
            ree(sigma_w2_density(density, gamma, rho, rss, inst.sigma2, lam)?.sqrt(), gt)
        }
    })())?;
    let (camp, sdl) = match cg() {
        Ok((rho, x_d, gt)) => (
            Some(ree(sigma_w_camp(&x_d), gt)?),
            ill_posed_to_none(sigma_w_sdl_complex(&sol.residual, gamma, rho).and_then(|s| ree(s, gt)))?,
        ),
        Err(Error::IllPosed(_)) => (None, None),
        Err(e) => return Err(e),
    };
    Ok([crod, camp, sdl])
}

fn design_for(cfg: &ExperimentConfig, gamma: f64) -> Result<Design> {
    if cfg.ensemble.is_row_orthogonal() {
        Ok(Design::row_orthogonal(gamma))
    } else {
        Design::gaussian(gamma)
    }
}

pub fn run_variance_error(cfg: &ExperimentConfig) -> Result<VarianceErrorReport> {
    cfg.validate()?;
    let axis = cfg.sweep_axis()?;
    let pool = pool(cfg)?;
    let mut rows = Vec::new();
    for pt in cfg.sweep_points()? {
        let instances = Instances::new(cfg, &pt)?;
        let design = design_for(cfg, pt.gamma)?;
        let results: Vec<[Option<f64>; 3]> = pool.install(|| {
            (0..cfg.trials)
                .into_par_iter()
                .map(|t| variance_trial(cfg, &design, &instances.get(t)?))
                .collect::<Result<_>>()
        })?;
        for (k, estimator) in Estimator::ALL.into_iter().enumerate() {
            let vals: Vec<f64> = results.iter().filter_map(|r| r[k]).collect();
            let n = vals.len();
            let mean = if n > 0 { vals.iter().sum::<f64>() / n as f64 } else { f64::NAN };
            let sd = if n > 1 {
                (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
            } else {
                f64::NAN
            };
            rows.push(ReeRow { point: pt, estimator, trials: n, failed: results.len() - n, mean_ree: mean, sd_ree: sd });
        }
    }
    Ok(VarianceErrorReport { axis, rows })
}

// ------------------------------------------------------------------ detection

#[derive(Clone, Debug, PartialEq)]
pub struct DetectionRow {
    pub point: SweepPoint,
    pub detector: Detector,
    /// Trials run at this point.
    pub trials: usize,
    /// Trials on which the detector was undefined.
    pub ill_posed: usize,
    pub null_cells: usize,
    pub support_cells: usize,
    pub false_alarms: usize,
    pub detections: usize,
    pub p_fa_hat: Option<f64>,
    pub p_d_hat: Option<f64>,
    pub target_p_fa: f64,
}

#[derive(Clone, Debug)]
pub struct DetectionRunReport {
    pub axis: super::config::SweepAxis,
    pub rows: Vec<DetectionRow>,
}

impl DetectionRunReport {
    pub fn row(&self, point: usize, detector: Detector) -> Option<&DetectionRow> {
        self.rows.iter().find(|r| r.point.index == point && r.detector == detector)
    }
}

/// Per detector: `None` if undefined, else (false alarms, nulls, hits, targets).
type Counts = Option<(usize, usize, usize, usize)>;

fn detection_trial(cfg: &ExperimentConfig, design: &Design, inst: &ProblemInstance) -> Result<(usize, Vec<Counts>)> {
    let sol = solve(inst, cfg)?;
    let mask = support_mask(inst.n(), &inst.support);
    let nulls = inst.n() - inst.support.len();
    let counts = cfg
        .detectors
        .iter()
        .map(|&d| match run_detector(d, design, &inst.a, &sol, inst.sigma2, cfg.p_fa, None) {
            Ok((_, rep)) => {
                let (mut fa, mut hit) = (0, 0);
                for (dec, s) in rep.decisions.iter().zip(&mask) {
                    if *dec {
                        if *s {
                            hit += 1;
                        } else {
                            fa += 1;
                        }
                    }
                }
                Ok(Some((fa, nulls, hit, inst.support.len())))
            }
            Err(Error::IllPosed(_)) => Ok(None),
            Err(e) => Err(e),
        })
        .collect::<Result<_>>()?;
    Ok((nulls, counts))
}

/// Runs batches of `trials` per sweep point until at least `min_null_cells`
/// true-zero entries have been tested.
pub fn run_detection(cfg: &ExperimentConfig) -> Result<DetectionRunReport> {
    cfg.validate()?;
    let axis = cfg.sweep_axis()?;
    let pool = pool(cfg)?;
    let mut rows = Vec::new();
    for pt in cfg.sweep_points()? {
        let instances = Instances::new(cfg, &pt)?;
        let design = design_for(cfg, pt.gamma)?;
        let k = cfg.detectors.len();
        let mut acc = vec![(0usize, 0usize, 0usize, 0usize, 0usize); k];
        let (mut run, mut nulls_seen) = (0usize, 0usize);
        for _ in 0..MAX_BATCHES {
            let batch: Vec<(usize, Vec<Counts>)> = pool.install(|| {
                (run..run + cfg.trials)
                    .into_par_iter()
                    .map(|t| detection_trial(cfg, &design, &instances.get(t)?))
                    .collect::<Result<_>>()
            })?;
            run += cfg.trials;
            for (nulls, counts) in batch {
                nulls_seen += nulls;
                for (a, c) in acc.iter_mut().zip(counts) {
                    match c {
                        Some((fa, nu, hit, tg)) => {
                            a.0 += fa;
                            a.1 += nu;
                            a.2 += hit;
                            a.3 += tg;
                        }
                        None => a.4 += 1,
                    }
                }
            }
            if nulls_seen >= cfg.min_null_cells {
                break;
            }
        }
        for (d, a) in cfg.detectors.iter().zip(acc) {
            let rate = |num: usize, den: usize| (den > 0).then(|| num as f64 / den as f64);
            rows.push(DetectionRow {
                point: pt,
                detector: *d,
                trials: run,
                ill_posed: a.4,
                null_cells: a.1,
                support_cells: a.3,
                false_alarms: a.0,
                detections: a.2,
                p_fa_hat: rate(a.0, a.1),
                p_d_hat: rate(a.2, a.3),
                target_p_fa: cfg.p_fa,
            });
        }
    }
    Ok(DetectionRunReport { axis, rows })
}

// ------------------------------------------------------------------ dominance

#[derive(Clone, Debug, PartialEq)]
pub struct DominanceRow {
    pub trial: usize,
    pub seed: u64,
    pub kkt: f64,
    pub kkt_ok: bool,
    pub lambda_crom: f64,
    pub lambda_cg: f64,
    /// Active entries with `||x_d| − |x̂| − λ/Λ| > tol`, over both coefficients.
    pub shift_violations: usize,
    /// Inactive entries with `|x_d| > λ/Λ + tol`.
    pub inactive_violations: usize,
    /// Entry-threshold pairs breaking the ordering of the two tests.
    pub dominance_violations: usize,
    /// Entries with `|w_CG − w_CROM|` above the coefficient-gap bound.
    pub bound_violations: usize,
    pub max_shift_error: f64,
}

impl DominanceRow {
    pub fn violations(&self) -> usize {
        (!self.kkt_ok) as usize
            + self.shift_violations
            + self.inactive_violations
            + self.dominance_violations
            + self.bound_violations
    }
}

#[derive(Clone, Debug)]
pub struct DominanceReport {
    pub rows: Vec<DominanceRow>,
    pub kappa_points: usize,
}

impl DominanceReport {
    pub fn total_violations(&self) -> usize {
        self.rows.iter().map(DominanceRow::violations).sum()
    }
}

/// Amplitude thresholds `κ_j = j·κ_max/(P − 1)` with `κ_max` just above the
/// largest LASSO modulus, so the grid spans both extremes.
pub fn kappa_grid(x_hat: &[C64], points: usize) -> Vec<f64> {
    let top = x_hat.iter().map(|z| z.norm()).fold(0.0, f64::max).max(1e-3) * 1.1;
    if points == 1 {
        return vec![0.0];
    }
    (0..points).map(|j| top * j as f64 / (points - 1) as f64).collect()
}

fn dominance_trial(cfg: &ExperimentConfig, inst: &ProblemInstance, trial: usize, seed: u64) -> Result<DominanceRow> {
    let sol = solve(inst, cfg)?;
    let lambda = cfg.lambda;
    let kkt = kkt_residual(&inst.y, &inst.a, &sol.x_hat, lambda);
    let mask = support_mask(inst.n(), &inst.support);
    let (_, l_crom) = rho_ca_fixed_point(&sol.x_hat, lambda, inst.gamma, Variant::Crom)?;
    let (_, l_cg) = rho_ca_fixed_point(&sol.x_hat, lambda, inst.gamma, Variant::Cg)?;
    let kappas = kappa_grid(&sol.x_hat, cfg.kappa_points);
    let mut row = DominanceRow {
        trial,
        seed,
        kkt,
        kkt_ok: kkt <= cfg.tol_kkt,
        lambda_crom: l_crom,
        lambda_cg: l_cg,
        shift_violations: 0,
        inactive_violations: 0,
        dominance_violations: 0,
        bound_violations: 0,
        max_shift_error: 0.0,
    };
    let mut debiased = Vec::new();
    for lam in [l_crom, l_cg] {
        let x_d = debias(&inst.y, &inst.a, &sol.x_hat, lam)?;
        let shift = lambda / lam;
        for (xd, xh) in x_d.iter().zip(&sol.x_hat) {
            if xh.norm() > 0.0 {
                let err = (xd.norm() - xh.norm() - shift).abs();
                row.max_shift_error = row.max_shift_error.max(err);
                row.shift_violations += (err > IDENTITY_TOL) as usize;
            } else {
                row.inactive_violations += (xd.norm() > shift + IDENTITY_TOL) as usize;
            }
        }
        for &kappa in &kappas {
            for i in 0..x_d.len() {
                let phi1 = x_d[i].norm() > kappa + shift;
                let phi2 = sol.x_hat[i].norm() > kappa;
                let bad = if mask[i] { !phi1 && phi2 } else { phi1 && !phi2 };
                row.dominance_violations += bad as usize;
            }
        }
        debiased.push(x_d);
    }
    // w_CG − w_CROM = (1/Λ_CG − 1/Λ_CROM)·Aᴴr, and |Aᴴr| ≤ λ up to the KKT residual.
    let bound = (lambda + kkt) * (1.0 / l_cg - 1.0 / l_crom).abs() + 1e-12;
    row.bound_violations = debiased[0].iter().zip(&debiased[1]).filter(|(a, b)| (*a - *b).norm() > bound).count();
    Ok(row)
}

pub fn run_dominance(cfg: &ExperimentConfig) -> Result<DominanceReport> {
    cfg.validate()?;
    let pt = single_point(cfg)?;
    let instances = Instances::new(cfg, &pt)?;
    let rows = pool(cfg)?.install(|| {
        (0..cfg.trials)
            .into_par_iter()
            .map(|t| dominance_trial(cfg, &instances.get(t)?, t, trial_seed(cfg.seed, pt.index, t)))
            .collect::<Result<_>>()
    })?;
    Ok(DominanceReport { rows, kappa_points: cfg.kappa_points })
}
