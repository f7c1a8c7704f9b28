//! Problem generation: measurement ensembles, sparse complex signals and
//! noisy observations `y = A·x0 + ξ`.

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;
use rustfft::{Fft, FftPlanner};

use crate::rng::{self, complex_normal, rng_from_seed, Stream};
use crate::{Error, Result, C64};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum EnsembleKind {
    /// `M` distinct rows of the unitary DFT matrix.
    PartialFourier,
    /// `M` rows of a Haar-distributed `N×N` unitary.
    HaarRowOrthogonal,
    /// i.i.d. `CN(0, 1/N)` entries.
    ComplexGaussian,
}

impl EnsembleKind {
    pub fn is_row_orthogonal(self) -> bool {
        !matches!(self, EnsembleKind::ComplexGaussian)
    }

    pub fn name(self) -> &'static str {
        match self {
            EnsembleKind::PartialFourier => "partial-fourier",
            EnsembleKind::HaarRowOrthogonal => "haar-row-orthogonal",
            EnsembleKind::ComplexGaussian => "complex-gaussian",
        }
    }
}

impl fmt::Display for EnsembleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EnsembleKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "partial-fourier" => Ok(EnsembleKind::PartialFourier),
            "haar-row-orthogonal" => Ok(EnsembleKind::HaarRowOrthogonal),
            "complex-gaussian" => Ok(EnsembleKind::ComplexGaussian),
            other => Err(Error::param(format!(
                "unknown ensemble `{other}` (expected partial-fourier, haar-row-orthogonal or complex-gaussian)"
            ))),
        }
    }
}

/// Row-subsampled unitary DFT, applied through FFTs.
///
/// Row `k` of the operator is row `rows[k]` of `F`, `F_{mn} = exp(-2πi·mn/N)/√N`.
#[derive(Clone)]
pub struct PartialFourier {
    n: usize,
    rows: Vec<usize>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl PartialFourier {
    pub fn new(n: usize, rows: Vec<usize>) -> Result<Self> {
        if rows.is_empty() || rows.len() > n {
            return Err(Error::dim(format!("{} rows requested from a {n}-point DFT", rows.len())));
        }
        if rows.iter().any(|&r| r >= n) {
            return Err(Error::dim("DFT row index out of range"));
        }
        let mut planner = FftPlanner::new();
        Ok(Self {
            n,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
            rows,
        })
    }

    pub fn rows(&self) -> &[usize] {
        &self.rows
    }
}

impl fmt::Debug for PartialFourier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PartialFourier")
            .field("n", &self.n)
            .field("rows", &self.rows)
            .finish()
    }
}

/// A measurement operator `A ∈ C^{M×N}`.
#[derive(Clone, Debug)]
pub enum SensingMatrix {
    Dense {
        matrix: DMatrix<C64>,
        /// Largest eigenvalue of `AᴴA`.
        lipschitz: f64,
    },
    PartialFourier(PartialFourier),
}

impl SensingMatrix {
    /// Draws an operator from `kind`. Partial Fourier operators stay in FFT
    /// form; the other ensembles are stored densely.
    pub fn generate(kind: EnsembleKind, m: usize, n: usize, seed: u64) -> Result<Self> {
        check_shape(m, n)?;
        let mut rng = rng_from_seed(seed);
        match kind {
            EnsembleKind::PartialFourier => {
                let mut all: Vec<usize> = (0..n).collect();
                all.shuffle(&mut rng);
                all.truncate(m);
                Ok(SensingMatrix::PartialFourier(PartialFourier::new(n, all)?))
            }
            EnsembleKind::HaarRowOrthogonal => {
                // Orthonormalise the columns of an N×M Gaussian matrix, fix the
                // phases of R's diagonal, and use the conjugate transpose.
                let g = DMatrix::from_fn(n, m, |_, _| complex_normal(&mut rng, 1.0));
                let qr = g.qr();
                let r = qr.r();
                let mut q = qr.q();
                for j in 0..m {
                    let d = r[(j, j)];
                    let phase = if d.norm() > 0.0 { d / d.norm() } else { C64::new(1.0, 0.0) };
                    for i in 0..n {
                        q[(i, j)] *= phase;
                    }
                }
                Ok(SensingMatrix::Dense { matrix: q.adjoint(), lipschitz: 1.0 })
            }
            EnsembleKind::ComplexGaussian => {
                let var = 1.0 / n as f64;
                let matrix = DMatrix::from_fn(m, n, |_, _| complex_normal(&mut rng, var));
                Ok(SensingMatrix::from_dense(matrix))
            }
        }
    }

    /// Wraps an arbitrary dense matrix, computing `λ_max(AᴴA)` exactly from
    /// the Hermitian eigenproblem of the smaller Gram matrix.
    pub fn from_dense(matrix: DMatrix<C64>) -> Self {
        let gram = if matrix.nrows() <= matrix.ncols() {
            &matrix * matrix.adjoint()
        } else {
            matrix.adjoint() * &matrix
        };
        let lipschitz = gram
            .symmetric_eigenvalues()
            .iter()
            .cloned()
            .fold(0.0_f64, f64::max);
        SensingMatrix::Dense { matrix, lipschitz }
    }

    pub fn rows(&self) -> usize {
        match self {
            SensingMatrix::Dense { matrix, .. } => matrix.nrows(),
            SensingMatrix::PartialFourier(pf) => pf.rows.len(),
        }
    }

    pub fn cols(&self) -> usize {
        match self {
            SensingMatrix::Dense { matrix, .. } => matrix.ncols(),
            SensingMatrix::PartialFourier(pf) => pf.n,
        }
    }

    pub fn lipschitz(&self) -> f64 {
        match self {
            SensingMatrix::Dense { lipschitz, .. } => *lipschitz,
            SensingMatrix::PartialFourier(_) => 1.0,
        }
    }

    /// `out = A·x`.
    pub fn apply(&self, x: &[C64], out: &mut [C64]) {
        assert_eq!(x.len(), self.cols());
        assert_eq!(out.len(), self.rows());
        match self {
            SensingMatrix::Dense { matrix, .. } => {
                let m = matrix.nrows();
                out.iter_mut().for_each(|o| *o = C64::new(0.0, 0.0));
                for (col, &xj) in matrix.as_slice().chunks_exact(m).zip(x) {
                    if xj.re == 0.0 && xj.im == 0.0 {
                        continue;
                    }
                    for (o, &a) in out.iter_mut().zip(col) {
                        *o += a * xj;
                    }
                }
            }
            SensingMatrix::PartialFourier(pf) => {
                let mut buf = x.to_vec();
                pf.forward.process(&mut buf);
                let scale = 1.0 / (pf.n as f64).sqrt();
                for (o, &r) in out.iter_mut().zip(&pf.rows) {
                    *o = buf[r] * scale;
                }
            }
        }
    }

    /// `out = Aᴴ·r`.
    pub fn adjoint(&self, r: &[C64], out: &mut [C64]) {
        assert_eq!(r.len(), self.rows());
        assert_eq!(out.len(), self.cols());
        match self {
            SensingMatrix::Dense { matrix, .. } => {
                let m = matrix.nrows();
                for (o, col) in out.iter_mut().zip(matrix.as_slice().chunks_exact(m)) {
                    *o = col.iter().zip(r).map(|(a, &ri)| a.conj() * ri).sum();
                }
            }
            SensingMatrix::PartialFourier(pf) => {
                out.iter_mut().for_each(|o| *o = C64::new(0.0, 0.0));
                for (&ri, &row) in r.iter().zip(&pf.rows) {
                    out[row] = ri;
                }
                pf.inverse.process(out);
                let scale = 1.0 / (pf.n as f64).sqrt();
                out.iter_mut().for_each(|o| *o *= scale);
            }
        }
    }

    pub fn apply_vec(&self, x: &[C64]) -> Vec<C64> {
        let mut out = vec![C64::new(0.0, 0.0); self.rows()];
        self.apply(x, &mut out);
        out
    }

    pub fn adjoint_vec(&self, r: &[C64]) -> Vec<C64> {
        let mut out = vec![C64::new(0.0, 0.0); self.cols()];
        self.adjoint(r, &mut out);
        out
    }

    pub fn to_dense(&self) -> DMatrix<C64> {
        match self {
            SensingMatrix::Dense { matrix, .. } => matrix.clone(),
            SensingMatrix::PartialFourier(pf) => {
                let n = pf.n as f64;
                DMatrix::from_fn(pf.rows.len(), pf.n, |i, j| {
                    let k = ((pf.rows[i] * j) % pf.n) as f64;
                    C64::from_polar(1.0 / n.sqrt(), -2.0 * std::f64::consts::PI * k / n)
                })
            }
        }
    }
}

fn check_shape(m: usize, n: usize) -> Result<()> {
    if m == 0 || m > n {
        return Err(Error::dim(format!("need 1 <= M <= N, got M={m}, N={n}")));
    }
    Ok(())
}

/// Dense `M×N` measurement matrix drawn from `kind`.
pub fn make_matrix(kind: EnsembleKind, m: usize, n: usize, seed: u64) -> Result<DMatrix<C64>> {
    Ok(SensingMatrix::generate(kind, m, n, seed)?.to_dense())
}

/// Bernoulli-Gaussian signal: each entry is zero with probability `1 - rho2`
/// and `CN(0, sigma_x2)` otherwise. Returns the signal and its support.
pub fn draw_signal(n: usize, rho2: f64, sigma_x2: f64, seed: u64) -> Result<(Vec<C64>, Vec<usize>)> {
    if !(0.0..=1.0).contains(&rho2) {
        return Err(Error::param(format!("signal density must lie in [0, 1], got {rho2}")));
    }
    if !(sigma_x2 > 0.0) {
        return Err(Error::param(format!("signal variance must be positive, got {sigma_x2}")));
    }
    let mut rng = rng_from_seed(seed);
    let mut x = vec![C64::new(0.0, 0.0); n];
    let mut support = Vec::new();
    for (i, xi) in x.iter_mut().enumerate() {
        let u: f64 = rng.random();
        if u < rho2 {
            *xi = complex_normal(&mut rng, sigma_x2);
            support.push(i);
        }
    }
    Ok((x, support))
}

/// Matched-filter SNR convention `SNR = γ σ_x² / σ²`, solved for `σ²`.
pub fn snr_to_noise_variance(snr_db: f64, gamma: f64, sigma_x2: f64) -> Result<f64> {
    if !(gamma > 0.0) || !(sigma_x2 > 0.0) {
        return Err(Error::param("gamma and sigma_x2 must be positive"));
    }
    Ok(gamma * sigma_x2 / 10f64.powf(snr_db / 10.0))
}

/// Returns `(y, ξ)` with `ξ ~ CN(0, σ² I)` and `y = A·x0 + ξ`.
pub fn observe(a: &SensingMatrix, x0: &[C64], sigma2: f64, seed: u64) -> Result<(Vec<C64>, Vec<C64>)> {
    if x0.len() != a.cols() {
        return Err(Error::dim(format!("x0 has length {}, A has {} columns", x0.len(), a.cols())));
    }
    if !(sigma2 >= 0.0) {
        return Err(Error::param(format!("noise variance must be nonnegative, got {sigma2}")));
    }
    let mut rng = rng_from_seed(seed);
    let xi: Vec<C64> = (0..a.rows()).map(|_| complex_normal(&mut rng, sigma2)).collect();
    let mut y = a.apply_vec(x0);
    y.iter_mut().zip(&xi).for_each(|(yi, &e)| *yi += e);
    Ok((y, xi))
}

/// One realisation of the compressed-sensing model.
#[derive(Clone, Debug)]
pub struct ProblemInstance {
    pub a: Arc<SensingMatrix>,
    pub kind: EnsembleKind,
    pub x0: Vec<C64>,
    pub support: Vec<usize>,
    pub xi: Vec<C64>,
    pub y: Vec<C64>,
    pub gamma: f64,
    pub rho2: f64,
    pub sigma_x2: f64,
    pub sigma2: f64,
}

/// Parameters from which instances are generated.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InstanceParams {
    pub kind: EnsembleKind,
    pub m: usize,
    pub n: usize,
    pub rho2: f64,
    pub sigma_x2: f64,
    pub sigma2: f64,
}

impl ProblemInstance {
    /// Draws matrix, signal and noise from independent streams of `trial_seed`.
    pub fn generate(p: &InstanceParams, trial_seed: u64) -> Result<Self> {
        let a = SensingMatrix::generate(p.kind, p.m, p.n, rng::stream_seed(trial_seed, Stream::Matrix))?;
        Self::with_matrix(Arc::new(a), p, trial_seed)
    }

    /// Draws signal and noise for a given (possibly shared) matrix.
    pub fn with_matrix(a: Arc<SensingMatrix>, p: &InstanceParams, trial_seed: u64) -> Result<Self> {
        if a.rows() != p.m || a.cols() != p.n {
            return Err(Error::dim("matrix shape does not match instance parameters"));
        }
        let (x0, support) = draw_signal(p.n, p.rho2, p.sigma_x2, rng::stream_seed(trial_seed, Stream::Signal))?;
        let (y, xi) = observe(&a, &x0, p.sigma2, rng::stream_seed(trial_seed, Stream::Noise))?;
        Ok(Self {
            a,
            kind: p.kind,
            x0,
            support,
            xi,
            y,
            gamma: p.m as f64 / p.n as f64,
            rho2: p.rho2,
            sigma_x2: p.sigma_x2,
            sigma2: p.sigma2,
        })
    }

    pub fn n(&self) -> usize {
        self.x0.len()
    }

    pub fn m(&self) -> usize {
        self.y.len()
    }

    /// Complement of the support, in increasing order.
    pub fn null_set(&self) -> Vec<usize> {
        let mut on = vec![false; self.n()];
        self.support.iter().for_each(|&i| on[i] = true);
        (0..self.n()).filter(|&i| !on[i]).collect()
    }

    /// Writes `x0.csv`, `xi.csv`, `y.csv` (columns `index,re,im`) and `a.csv`
    /// (row-major linear index) into `dir`.
    pub fn dump(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        write_vector_csv(&dir.join("x0.csv"), &self.x0)?;
        write_vector_csv(&dir.join("xi.csv"), &self.xi)?;
        write_vector_csv(&dir.join("y.csv"), &self.y)?;
        let dense = self.a.to_dense();
        let row_major: Vec<C64> = (0..dense.nrows())
            .flat_map(|i| (0..dense.ncols()).map(move |j| (i, j)))
            .map(|(i, j)| dense[(i, j)])
            .collect();
        write_vector_csv(&dir.join("a.csv"), &row_major)
    }
}

pub fn write_vector_csv(path: &Path, v: &[C64]) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "index,re,im")?;
    for (i, z) in v.iter().enumerate() {
        writeln!(f, "{i},{},{}", z.re, z.im)?;
    }
    f.flush()?;
    Ok(())
}
