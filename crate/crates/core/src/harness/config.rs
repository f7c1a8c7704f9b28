//! `key = value` experiment configuration.
//!
//! One key per line; `#` starts a comment; lists are comma separated.
//! Required keys are `ensemble`, `n` and exactly one of `m` / `gamma`.
//! Everything else has a per-suite default.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::detect::Detector;
use crate::model::EnsembleKind;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Suite {
    Gaussianity,
    VarianceError,
    Detection,
    Dominance,
}

impl Suite {
    pub const ALL: [Suite; 4] = [Suite::Gaussianity, Suite::VarianceError, Suite::Detection, Suite::Dominance];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Gaussianity => "gaussianity",
            Suite::VarianceError => "variance-error",
            Suite::Detection => "detection",
            Suite::Dominance => "dominance",
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL
            .into_iter()
            .find(|k| k.name() == s.trim())
            .ok_or_else(|| Error::Config(format!("unknown suite '{s}'")))
    }
}

/// Scale used to standardise `w` before the Gaussianity tests.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Normalize {
    /// Root-mean-square of the realised `w`.
    GroundTruth,
    /// The detector's own variance estimate.
    Estimated,
}

/// Whether KS tests pool all trials or run per trial.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KsMode {
    Pooled,
    PerTrial,
}

/// The swept parameter of a run; at most one may take several values.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepAxis {
    None,
    Rho2,
    SnrDb,
    Gamma,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::None => "none",
            SweepAxis::Rho2 => "rho2",
            SweepAxis::SnrDb => "snr_db",
            SweepAxis::Gamma => "gamma",
        }
    }
}

/// One point of a sweep, fully resolved.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SweepPoint {
    pub index: usize,
    pub value: f64,
    pub m: usize,
    pub gamma: f64,
    pub rho2: f64,
    pub sigma2: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub suite: Suite,
    pub ensemble: EnsembleKind,
    pub n: usize,
    /// Either a single `m` or the `gamma` list.
    pub m: Option<usize>,
    pub gamma: Vec<f64>,
    pub rho2: Vec<f64>,
    pub snr_db: Vec<f64>,
    /// Overrides `snr_db` when set.
    pub sigma2: Option<f64>,
    pub sigma_x2: f64,
    pub lambda: f64,
    pub p_fa: f64,
    pub trials: usize,
    pub seed: u64,
    pub output: Option<PathBuf>,
    pub workers: Option<usize>,
    pub detectors: Vec<Detector>,
    pub fix_matrix: bool,
    pub min_null_cells: usize,
    pub normalize: Normalize,
    pub ks_mode: KsMode,
    pub kappa_points: usize,
    pub ecdf_points: usize,
    pub max_iter: usize,
    pub tol_rel: f64,
    pub tol_kkt: f64,
}

const KEYS: &[&str] = &[
    "suite",
    "ensemble",
    "n",
    "m",
    "gamma",
    "rho2",
    "snr_db",
    "sigma2",
    "sigma_x2",
    "lambda",
    "p_fa",
    "trials",
    "seed",
    "output",
    "workers",
    "detectors",
    "fix_matrix",
    "min_null_cells",
    "normalize",
    "ks_mode",
    "kappa_points",
    "ecdf_points",
    "max_iter",
    "tol_rel",
    "tol_kkt",
];

impl ExperimentConfig {
    /// Defaults for `suite` around the given design.
    pub fn defaults(suite: Suite, ensemble: EnsembleKind, n: usize, gammas: Vec<f64>) -> Self {
        let (rho2, snr_db, sigma2, trials) = match suite {
            Suite::Gaussianity => (0.1, 5.0, None, 1000),
            Suite::VarianceError => (0.1, 13.0, Some(0.05), 1000),
            Suite::Detection => (0.1, 13.0, None, 1000),
            Suite::Dominance => (0.1, 13.0, None, 100),
        };
        Self {
            suite,
            ensemble,
            n,
            m: None,
            gamma: gammas,
            rho2: vec![rho2],
            snr_db: vec![snr_db],
            sigma2,
            sigma_x2: 1.0,
            lambda: 0.1,
            p_fa: 0.01,
            trials,
            seed: 1,
            output: None,
            workers: None,
            detectors: Detector::ALL.to_vec(),
            fix_matrix: false,
            min_null_cells: 100_000,
            normalize: Normalize::GroundTruth,
            ks_mode: KsMode::Pooled,
            kappa_points: 20,
            ecdf_points: 161,
            max_iter: 100_000,
            tol_rel: 1e-10,
            tol_kkt: 1e-8,
        }
    }

    /// The swept axis, or an error if more than one list has several values.
    pub fn sweep_axis(&self) -> Result<SweepAxis> {
        let multi: Vec<SweepAxis> = [
            (self.rho2.len(), SweepAxis::Rho2),
            (if self.sigma2.is_some() { 1 } else { self.snr_db.len() }, SweepAxis::SnrDb),
            (self.gamma.len(), SweepAxis::Gamma),
        ]
        .into_iter()
        .filter(|(len, _)| *len > 1)
        .map(|(_, a)| a)
        .collect();
        match multi.as_slice() {
            [] => Ok(SweepAxis::None),
            [one] => Ok(*one),
            _ => Err(Error::Config("only one of rho2, snr_db, gamma may list several values".into())),
        }
    }

    /// Resolved parameters at every sweep point, in sweep order.
    pub fn sweep_points(&self) -> Result<Vec<SweepPoint>> {
        let axis = self.sweep_axis()?;
        let count = match axis {
            SweepAxis::None => 1,
            SweepAxis::Rho2 => self.rho2.len(),
            SweepAxis::SnrDb => self.snr_db.len(),
            SweepAxis::Gamma => self.gamma.len(),
        };
        (0..count)
            .map(|k| {
                let pick = |v: &[f64]| if v.len() > 1 { v[k] } else { v[0] };
                let (m, gamma) = match self.m {
                    Some(m) => (m, m as f64 / self.n as f64),
                    None => {
                        let g = pick(&self.gamma);
                        let m = (g * self.n as f64).round() as usize;
                        if m == 0 || m > self.n {
                            return Err(Error::Config(format!("gamma={g} gives m={m} for n={}", self.n)));
                        }
                        (m, m as f64 / self.n as f64)
                    }
                };
                let rho2 = pick(&self.rho2);
                let snr = pick(&self.snr_db);
                let sigma2 = match self.sigma2 {
                    Some(s) => s,
                    None => crate::model::snr_to_noise_variance(snr, gamma, self.sigma_x2)?,
                };
                let value = match axis {
                    SweepAxis::None => f64::NAN,
                    SweepAxis::Rho2 => rho2,
                    SweepAxis::SnrDb => snr,
                    SweepAxis::Gamma => gamma,
                };
                Ok(SweepPoint { index: k, value, m, gamma, rho2, sigma2 })
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.n == 0 {
            return bad("n must be positive".into());
        }
        if let Some(m) = self.m {
            if m == 0 || m > self.n {
                return bad(format!("m={m} must lie in 1..=n ({})", self.n));
            }
        } else if self.gamma.is_empty() {
            return bad("one of m or gamma is required".into());
        }
        for &g in &self.gamma {
            if !(g > 0.0 && g <= 1.0) {
                return bad(format!("gamma={g} must lie in (0, 1]"));
            }
        }
        if self.rho2.is_empty() || self.snr_db.is_empty() {
            return bad("rho2 and snr_db lists must not be empty".into());
        }
        for &r in &self.rho2 {
            if !(0.0..=1.0).contains(&r) {
                return bad(format!("rho2={r} must lie in [0, 1]"));
            }
        }
        if let Some(s) = self.sigma2 {
            if !(s >= 0.0 && s.is_finite()) {
                return bad(format!("sigma2={s} must be nonnegative"));
            }
        }
        if self.snr_db.iter().any(|s| !s.is_finite()) {
            return bad("snr_db values must be finite".into());
        }
        if !(self.sigma_x2 > 0.0) {
            return bad(format!("sigma_x2={} must be positive", self.sigma_x2));
        }
        if !(self.lambda > 0.0) {
            return bad(format!("lambda={} must be positive", self.lambda));
        }
        if !(self.p_fa > 0.0 && self.p_fa < 1.0) {
            return bad(format!("p_fa={} must lie in (0, 1)", self.p_fa));
        }
        if self.trials == 0 {
            return bad("trials must be at least 1".into());
        }
        if self.workers == Some(0) {
            return bad("workers must be at least 1".into());
        }
        if self.detectors.is_empty() {
            return bad("detectors must not be empty".into());
        }
        if self.kappa_points == 0 || self.ecdf_points < 2 || self.max_iter == 0 {
            return bad("kappa_points, ecdf_points and max_iter must be positive (ecdf_points >= 2)".into());
        }
        if !(self.tol_rel > 0.0) || !(self.tol_kkt > 0.0) {
            return bad("solver tolerances must be positive".into());
        }
        if self.suite == Suite::Gaussianity && !self.ensemble.is_row_orthogonal() {
            return bad(format!("the gaussianity suite needs a row-orthogonal ensemble, got {}", self.ensemble));
        }
        self.sweep_axis()?;
        Ok(())
    }

    /// `key=value` lines describing the resolved configuration.
    pub fn echo(&self) -> Vec<String> {
        let list = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        let mut out = vec![
            format!("suite={}", self.suite),
            format!("ensemble={}", self.ensemble),
            format!("n={}", self.n),
        ];
        match self.m {
            Some(m) => out.push(format!("m={m}")),
            None => out.push(format!("gamma={}", list(&self.gamma))),
        }
        out.push(format!("rho2={}", list(&self.rho2)));
        match self.sigma2 {
            Some(s) => out.push(format!("sigma2={s}")),
            None => out.push(format!("snr_db={}", list(&self.snr_db))),
        }
        out.extend([
            format!("sigma_x2={}", self.sigma_x2),
            format!("lambda={}", self.lambda),
            format!("p_fa={}", self.p_fa),
            format!("trials={}", self.trials),
            format!("seed={}", self.seed),
            format!(
                "detectors={}",
                self.detectors.iter().map(|d| d.name()).collect::<Vec<_>>().join(",")
            ),
            format!("fix_matrix={}", self.fix_matrix),
            format!("min_null_cells={}", self.min_null_cells),
            format!(
                "normalize={}",
                match self.normalize {
                    Normalize::GroundTruth => "ground-truth",
                    Normalize::Estimated => "estimated",
                }
            ),
            format!(
                "ks_mode={}",
                match self.ks_mode {
                    KsMode::Pooled => "pooled",
                    KsMode::PerTrial => "per-trial",
                }
            ),
            format!("kappa_points={}", self.kappa_points),
            format!("ecdf_points={}", self.ecdf_points),
            format!("max_iter={}", self.max_iter),
            format!("tol_rel={}", self.tol_rel),
            format!("tol_kkt={}", self.tol_kkt),
        ]);
        out
    }
}

fn parse_num<T: FromStr>(key: &str, raw: &str) -> Result<T> {
    raw.trim().parse().map_err(|_| Error::Config(format!("key '{key}': cannot parse '{raw}' as a number")))
}

fn parse_list(key: &str, raw: &str) -> Result<Vec<f64>> {
    raw.split(',').map(|v| parse_num::<f64>(key, v)).collect()
}

fn parse_bool(key: &str, raw: &str) -> Result<bool> {
    match raw.trim() {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        other => Err(Error::Config(format!("key '{key}': expected true or false, got '{other}'"))),
    }
}

/// Parses configuration text. `suite` comes from the caller (the CLI verb);
/// a `suite` key in the file must agree with it.
pub fn parse_config_str(text: &str, suite: Option<Suite>) -> Result<ExperimentConfig> {
    let mut kv: BTreeMap<String, String> = BTreeMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected key=value, got '{line}'", lineno + 1)))?;
        let (k, v) = (k.trim(), v.trim());
        if !KEYS.contains(&k) {
            return Err(Error::Config(format!("line {}: unknown key '{k}'", lineno + 1)));
        }
        if kv.insert(k.to_string(), v.to_string()).is_some() {
            return Err(Error::Config(format!("line {}: key '{k}' given twice", lineno + 1)));
        }
    }

    let mut missing = Vec::new();
    for k in ["ensemble", "n"] {
        if !kv.contains_key(k) {
            missing.push(k);
        }
    }
    match (kv.contains_key("m"), kv.contains_key("gamma")) {
        (false, false) => missing.push("m|gamma"),
        (true, true) => return Err(Error::Config("give exactly one of 'm' and 'gamma'".into())),
        _ => {}
    }
    let file_suite = kv.get("suite").map(|s| s.parse::<Suite>()).transpose()?;
    let suite = match (suite, file_suite) {
        (Some(a), Some(b)) if a != b => {
            return Err(Error::Config(format!("config is for suite '{b}' but '{a}' was requested")))
        }
        (Some(a), _) | (None, Some(a)) => Some(a),
        (None, None) => {
            missing.push("suite");
            None
        }
    };
    if !missing.is_empty() {
        return Err(Error::Config(format!("missing required keys: {}", missing.join(", "))));
    }
    let suite = suite.expect("checked above");

    let ensemble: EnsembleKind =
        kv["ensemble"].parse().map_err(|e: Error| Error::Config(format!("key 'ensemble': {e}")))?;
    let n: usize = parse_num("n", &kv["n"])?;
    let gammas = kv.get("gamma").map(|g| parse_list("gamma", g)).transpose()?.unwrap_or_default();
    let mut c = ExperimentConfig::defaults(suite, ensemble, n, gammas);

    for (k, v) in &kv {
        match k.as_str() {
            "suite" | "ensemble" | "n" | "gamma" => {}
            "m" => c.m = Some(parse_num(k, v)?),
            "rho2" => c.rho2 = parse_list(k, v)?,
            "snr_db" => {
                c.snr_db = parse_list(k, v)?;
                if !kv.contains_key("sigma2") {
                    c.sigma2 = None;
                }
            }
            "sigma2" => c.sigma2 = Some(parse_num(k, v)?),
            "sigma_x2" => c.sigma_x2 = parse_num(k, v)?,
            "lambda" => c.lambda = parse_num(k, v)?,
            "p_fa" => c.p_fa = parse_num(k, v)?,
            "trials" => c.trials = parse_num(k, v)?,
            "seed" => c.seed = parse_num(k, v)?,
            "output" => c.output = Some(PathBuf::from(v)),
            "workers" => c.workers = Some(parse_num(k, v)?),
            "detectors" => {
                c.detectors = v
                    .split(',')
                    .map(|d| d.parse::<Detector>().map_err(|e| Error::Config(format!("key 'detectors': {e}"))))
                    .collect::<Result<_>>()?
            }
            "fix_matrix" => c.fix_matrix = parse_bool(k, v)?,
            "min_null_cells" => c.min_null_cells = parse_num(k, v)?,
            "normalize" => {
                c.normalize = match v.as_str() {
                    "ground-truth" => Normalize::GroundTruth,
                    "estimated" => Normalize::Estimated,
                    _ => return Err(Error::Config(format!("key 'normalize': expected ground-truth or estimated, got '{v}'"))),
                }
            }
            "ks_mode" => {
                c.ks_mode = match v.as_str() {
                    "pooled" => KsMode::Pooled,
                    "per-trial" => KsMode::PerTrial,
                    _ => return Err(Error::Config(format!("key 'ks_mode': expected pooled or per-trial, got '{v}'"))),
                }
            }
            "kappa_points" => c.kappa_points = parse_num(k, v)?,
            "ecdf_points" => c.ecdf_points = parse_num(k, v)?,
            "max_iter" => c.max_iter = parse_num(k, v)?,
            "tol_rel" => c.tol_rel = parse_num(k, v)?,
            "tol_kkt" => c.tol_kkt = parse_num(k, v)?,
            _ => unreachable!("key list checked above"),
        }
    }
    c.validate()?;
    Ok(c)
}

pub fn parse_config(path: &Path, suite: Option<Suite>) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
    parse_config_str(&text, suite)
}
