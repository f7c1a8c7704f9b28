//! Monte Carlo experiment suites, their configuration and CSV output.

pub mod config;
pub mod output;
pub mod suites;

use std::path::{Path, PathBuf};

pub use config::{parse_config, parse_config_str, ExperimentConfig, KsMode, Normalize, Suite, SweepAxis, SweepPoint};
pub use output::{read_csv, write_csv, Table};
pub use suites::{
    run_detection, run_dominance, run_gaussianity, run_variance_error, DetectionRunReport, DominanceReport,
    GaussianityReport, VarianceErrorReport,
};

use output::{fmt_f64, fmt_opt};

use crate::Result;

#[derive(Clone, Debug)]
pub enum SuiteOutput {
    Gaussianity(GaussianityReport),
    VarianceError(VarianceErrorReport),
    Detection(DetectionRunReport),
    Dominance(DominanceReport),
}

pub fn run(cfg: &ExperimentConfig) -> Result<SuiteOutput> {
    Ok(match cfg.suite {
        Suite::Gaussianity => SuiteOutput::Gaussianity(run_gaussianity(cfg)?),
        Suite::VarianceError => SuiteOutput::VarianceError(run_variance_error(cfg)?),
        Suite::Detection => SuiteOutput::Detection(run_detection(cfg)?),
        Suite::Dominance => SuiteOutput::Dominance(run_dominance(cfg)?),
    })
}

fn sweep_cells(axis: SweepAxis, p: &SweepPoint) -> [String; 2] {
    [axis.name().to_string(), fmt_f64(p.value)]
}

impl SuiteOutput {
    /// Tables to write, keyed by file-name suffix (empty for the main file).
    pub fn tables(&self) -> Vec<(&'static str, Table)> {
        match self {
            SuiteOutput::Gaussianity(r) => {
                let mut ks = Table::new(&["variant", "part", "component", "trial", "n", "statistic", "p_value"]);
                for row in &r.ks {
                    ks.push(vec![
                        row.variant.name().into(),
                        row.part.name().into(),
                        row.component.name().into(),
                        row.trial.map(|t| t.to_string()).unwrap_or_else(|| "pooled".into()),
                        row.result.n.to_string(),
                        fmt_f64(row.result.statistic),
                        fmt_f64(row.result.p_value),
                    ]);
                }
                let mut curves = Table::new(&["x", "variant", "part", "component", "phi_minus_ecdf"]);
                for c in &r.curves {
                    curves.push(vec![
                        fmt_f64(c.x),
                        c.variant.name().into(),
                        c.part.name().into(),
                        c.component.name().into(),
                        fmt_f64(c.phi_minus_ecdf),
                    ]);
                }
                vec![("", ks), ("_ecdf", curves)]
            }
            SuiteOutput::VarianceError(r) => {
                let mut t = Table::new(&["sweep", "value", "estimator", "trials", "failed", "mean_ree", "sd_ree"]);
                for row in &r.rows {
                    let [a, b] = sweep_cells(r.axis, &row.point);
                    t.push(vec![
                        a,
                        b,
                        row.estimator.name().into(),
                        row.trials.to_string(),
                        row.failed.to_string(),
                        fmt_f64(row.mean_ree),
                        fmt_f64(row.sd_ree),
                    ]);
                }
                vec![("", t)]
            }
            SuiteOutput::Detection(r) => {
                let mut t = Table::new(&[
                    "sweep",
                    "value",
                    "detector",
                    "trials",
                    "ill_posed",
                    "null_cells",
                    "support_cells",
                    "p_fa_hat",
                    "p_d_hat",
                    "target_p_fa",
                ]);
                for row in &r.rows {
                    let [a, b] = sweep_cells(r.axis, &row.point);
                    t.push(vec![
                        a,
                        b,
                        row.detector.name().into(),
                        row.trials.to_string(),
                        row.ill_posed.to_string(),
                        row.null_cells.to_string(),
                        row.support_cells.to_string(),
                        fmt_opt(row.p_fa_hat),
                        fmt_opt(row.p_d_hat),
                        fmt_f64(row.target_p_fa),
                    ]);
                }
                vec![("", t)]
            }
            SuiteOutput::Dominance(r) => {
                let mut t = Table::new(&[
                    "trial",
                    "seed",
                    "kkt",
                    "kkt_ok",
                    "lambda_crom",
                    "lambda_cg",
                    "shift_violations",
                    "inactive_violations",
                    "dominance_violations",
                    "bound_violations",
                    "max_shift_error",
                ]);
                for row in &r.rows {
                    t.push(vec![
                        row.trial.to_string(),
                        row.seed.to_string(),
                        fmt_f64(row.kkt),
                        row.kkt_ok.to_string(),
                        fmt_f64(row.lambda_crom),
                        fmt_f64(row.lambda_cg),
                        row.shift_violations.to_string(),
                        row.inactive_violations.to_string(),
                        row.dominance_violations.to_string(),
                        row.bound_violations.to_string(),
                        fmt_f64(row.max_shift_error),
                    ]);
                }
                vec![("", t)]
            }
        }
    }
}

/// `base` with `suffix` inserted before the extension.
fn with_suffix(base: &Path, suffix: &str) -> PathBuf {
    if suffix.is_empty() {
        return base.to_path_buf();
    }
    let stem = base.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let ext = base.extension().map(|e| format!(".{}", e.to_string_lossy())).unwrap_or_default();
    base.with_file_name(format!("{stem}{suffix}{ext}"))
}

/// Writes every table of `out` next to `path`; returns the files written.
pub fn write_outputs(cfg: &ExperimentConfig, out: &SuiteOutput, path: &Path) -> Result<Vec<PathBuf>> {
    let mut comments = vec![format!("crod {} seed={} trials={}", cfg.suite, cfg.seed, cfg.trials)];
    comments.extend(cfg.echo());
    let mut written = Vec::new();
    for (suffix, table) in out.tables() {
        let p = with_suffix(path, suffix);
        write_csv(&p, &comments, &table)?;
        written.push(p);
    }
    Ok(written)
}

/// `output` from the config, else `<suite>.csv`.
pub fn default_output(cfg: &ExperimentConfig) -> PathBuf {
    cfg.output.clone().unwrap_or_else(|| PathBuf::from(format!("{}.csv", cfg.suite)))
}
