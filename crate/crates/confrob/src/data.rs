//! Synthetic data generation, the ridge predictor, CSV ingestion, and
//! deterministic splitting.
//!
//! The synthetic task draws covariates `X ~ N(0, I_4)` and outcomes
//! `Y = mu(X) + eps(X)` with means
//! `mu_1 = 0.75 x_1 + 0.35 sin x_2 - 0.20 x_3` and
//! `mu_2 = -0.45 x_1 + 0.55 x_2^2 + 0.30 x_4`. The noise is a zero-mean
//! Gaussian with covariate-dependent scale `0.80 + 0.45 sigmoid(x_1)` applied
//! to a fixed anisotropic root-covariance (top-left block
//! `[[1.0, 0.0], [0.6, 0.8]]`, identity beyond), and 6% of rows swap the
//! Gaussian draw for a Student-t(3) draw scaled by 2. Outputs beyond the
//! second reuse the second mean with covariate indices rotated once per
//! extra output.

use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, StudentT};
use thiserror::Error;

use crate::vecops;

/// Number of synthetic covariates.
pub const SYNTHETIC_FEATURES: usize = 4;
/// Heavy-tail contamination probability.
pub const CONTAMINATION_RATE: f64 = 0.06;
/// Scale applied to the Student-t(3) contamination draw.
pub const CONTAMINATION_SCALE: f64 = 2.0;
/// Fixed anisotropic root-covariance of the 2-d noise block.
pub const NOISE_ROOT_COV: [[f64; 2]; 2] = [[1.0, 0.0], [0.6, 0.8]];

#[derive(Debug, Error)]
pub enum DataError {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("row {row}: {message}")]
    ParseRow { row: usize, message: String },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("split request exceeds {n} available rows")]
    Oversubscribed { n: usize },
    #[error("invalid request: {0}")]
    BadSpec(String),
    #[error("normal equations are singular")]
    Singular,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Provenance {
    Synthetic { seed: u64 },
    Energy,
}

/// Feature/outcome pairs.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub x: Vec<Vec<f64>>,
    pub y: Vec<Vec<f64>>,
    pub provenance: Provenance,
    /// Per-row heavy-tail flags (synthetic data only).
    pub contaminated: Option<Vec<bool>>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.x.first().map_or(0, Vec::len)
    }

    pub fn outcome_dim(&self) -> usize {
        self.y.first().map_or(0, Vec::len)
    }

    /// Rows at the given indices as (x, y) pairs.
    pub fn select(&self, idx: &[usize]) -> Vec<(Vec<f64>, Vec<f64>)> {
        idx.iter()
            .map(|&i| (self.x[i].clone(), self.y[i].clone()))
            .collect()
    }
}

fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

/// Mean function of the synthetic model for the first `d` outputs.
pub fn synthetic_mean(x: &[f64], d: usize) -> Vec<f64> {
    let mut mu = Vec::with_capacity(d);
    if d >= 1 {
        mu.push(0.75 * x[0] + 0.35 * x[1].sin() - 0.20 * x[2]);
    }
    for j in 1..d {
        // Second-output form with covariate indices rotated by j - 1.
        let shift = j - 1;
        let i0 = shift % SYNTHETIC_FEATURES;
        let i1 = (1 + shift) % SYNTHETIC_FEATURES;
        let i3 = (3 + shift) % SYNTHETIC_FEATURES;
        mu.push(-0.45 * x[i0] + 0.55 * x[i1] * x[i1] + 0.30 * x[i3]);
    }
    mu
}

/// Apply the fixed root-covariance (2-d block plus identity) to a noise draw.
fn apply_root_cov(g: &[f64]) -> Vec<f64> {
    let d = g.len();
    let mut out = g.to_vec();
    if d >= 2 {
        out[0] = NOISE_ROOT_COV[0][0] * g[0] + NOISE_ROOT_COV[0][1] * g[1];
        out[1] = NOISE_ROOT_COV[1][0] * g[0] + NOISE_ROOT_COV[1][1] * g[1];
    }
    out
}

/// Heteroscedastic nonlinear synthetic generator; deterministic per seed.
pub fn gen_synthetic(n: usize, d: usize, seed: u64) -> Result<Dataset, DataError> {
    if n == 0 {
        return Err(DataError::BadSpec("n must be at least 1".into()));
    }
    if d == 0 {
        return Err(DataError::BadSpec(
            "outcome dimension must be at least 1".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let student = StudentT::new(3.0).expect("valid dof");
    let mut xs = Vec::with_capacity(n);
    let mut ys = Vec::with_capacity(n);
    let mut flags = Vec::with_capacity(n);
    for _ in 0..n {
        let x: Vec<f64> = (0..SYNTHETIC_FEATURES)
            .map(|_| rng.sample::<f64, _>(StandardNormal))
            .collect();
        let contaminated = rng.random::<f64>() < CONTAMINATION_RATE;
        let g: Vec<f64> = (0..d)
            .map(|_| {
                if contaminated {
                    CONTAMINATION_SCALE * student.sample(&mut rng)
                } else {
                    rng.sample::<f64, _>(StandardNormal)
                }
            })
            .collect();
        let scale = 0.80 + 0.45 * sigmoid(x[0]);
        let shaped = apply_root_cov(&g);
        let mu = synthetic_mean(&x, d);
        let y: Vec<f64> = mu
            .iter()
            .zip(&shaped)
            .map(|(m, e)| m + scale * e)
            .collect();
        xs.push(x);
        ys.push(y);
        flags.push(contaminated);
    }
    Ok(Dataset {
        x: xs,
        y: ys,
        provenance: Provenance::Synthetic { seed },
        contaminated: Some(flags),
    })
}

/// Ridge regression on the fixed nonlinear feature map
/// `phi(x) = [1, x, x_1^2, x_2^2, sin x_1, sin x_2]`.
#[derive(Debug, Clone)]
pub struct RidgePredictor {
    /// One weight vector per output, over the feature map.
    pub weights: Vec<Vec<f64>>,
    pub lambda: f64,
    feature_dim: usize,
}

/// The feature map underlying the ridge predictor (requires p >= 2).
pub fn feature_map(x: &[f64]) -> Vec<f64> {
    let mut phi = Vec::with_capacity(x.len() + 5);
    phi.push(1.0);
    phi.extend_from_slice(x);
    phi.push(x[0] * x[0]);
    phi.push(x[1] * x[1]);
    phi.push(x[0].sin());
    phi.push(x[1].sin());
    phi
}

impl RidgePredictor {
    pub fn predict(&self, x: &[f64]) -> Vec<f64> {
        let phi = feature_map(x);
        debug_assert_eq!(phi.len(), self.feature_dim);
        self.weights.iter().map(|w| vecops::dot(w, &phi)).collect()
    }

    pub fn residual(&self, x: &[f64], y: &[f64]) -> Vec<f64> {
        vecops::sub(y, &self.predict(x))
    }

    /// Residuals for every pair in the slice.
    pub fn residuals(&self, pairs: &[(Vec<f64>, Vec<f64>)]) -> Vec<Vec<f64>> {
        pairs.iter().map(|(x, y)| self.residual(x, y)).collect()
    }
}

/// Closed-form normal-equations fit, the intercept regularized like every
/// other coefficient.
pub fn ridge_fit(
    pairs: &[(Vec<f64>, Vec<f64>)],
    lambda: f64,
) -> Result<RidgePredictor, DataError> {
    if pairs.is_empty() {
        return Err(DataError::EmptyDataset);
    }
    let p = pairs[0].0.len();
    if p < 2 {
        return Err(DataError::BadSpec(
            "the feature map needs at least 2 covariates".into(),
        ));
    }
    let m = 1 + p + 4;
    if pairs.len() < m {
        return Err(DataError::BadSpec(format!(
            "need at least {m} rows (feature dimension), got {}",
            pairs.len()
        )));
    }
    let d = pairs[0].1.len();
    let phis: Vec<Vec<f64>> = pairs.iter().map(|(x, _)| feature_map(x)).collect();

    // Gram matrix Phi^T Phi + lambda I.
    let mut gram = vec![0.0; m * m];
    for phi in &phis {
        for i in 0..m {
            for j in 0..m {
                gram[i * m + j] += phi[i] * phi[j];
            }
        }
    }
    for i in 0..m {
        gram[i * m + i] += lambda;
    }

    let mut weights = Vec::with_capacity(d);
    for out in 0..d {
        let mut rhs = vec![0.0; m];
        for (phi, (_, y)) in phis.iter().zip(pairs) {
            for i in 0..m {
                rhs[i] += phi[i] * y[out];
            }
        }
        let w = vecops::solve_spd(&gram, &rhs, m)
            .or_else(|| vecops::solve_dense(&gram, &rhs, m))
            .ok_or(DataError::Singular)?;
        weights.push(w);
    }
    Ok(RidgePredictor {
        weights,
        lambda,
        feature_dim: m,
    })
}

/// Load the energy-efficiency CSV: 8 building-design features followed by 2
/// load targets per row, optional single header row auto-detected by a
/// non-numeric first field.
pub fn load_energy(path: &Path) -> Result<Dataset, DataError> {
    let text = std::fs::read_to_string(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_energy_csv(&text)
}

pub fn parse_energy_csv(text: &str) -> Result<Dataset, DataError> {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut first_content_line = true;
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if first_content_line {
            first_content_line = false;
            if fields[0].parse::<f64>().is_err() {
                continue; // header row
            }
        }
        if fields.len() != 10 {
            return Err(DataError::ParseRow {
                row: lineno + 1,
                message: format!("expected 10 fields, found {}", fields.len()),
            });
        }
        let mut values = Vec::with_capacity(10);
        for f in &fields {
            let v: f64 = f.parse().map_err(|_| DataError::ParseRow {
                row: lineno + 1,
                message: format!("non-numeric field '{f}'"),
            })?;
            if !v.is_finite() {
                return Err(DataError::ParseRow {
                    row: lineno + 1,
                    message: format!("non-finite field '{f}'"),
                });
            }
            values.push(v);
        }
        xs.push(values[..8].to_vec());
        ys.push(values[8..].to_vec());
    }
    if xs.is_empty() {
        return Err(DataError::EmptyDataset);
    }
    Ok(Dataset {
        x: xs,
        y: ys,
        provenance: Provenance::Energy,
        contaminated: None,
    })
}

/// Export a dataset in the same schema the energy loader reads
/// (x1..xp, y1..yd with a header row).
pub fn write_csv(ds: &Dataset, path: &Path) -> Result<(), DataError> {
    let mut out = String::new();
    let p = ds.feature_dim();
    let d = ds.outcome_dim();
    let header: Vec<String> = (1..=p)
        .map(|i| format!("x{i}"))
        .chain((1..=d).map(|i| format!("y{i}")))
        .collect();
    out.push_str(&header.join(","));
    out.push('\n');
    for (x, y) in ds.x.iter().zip(&ds.y) {
        let row: Vec<String> = x.iter().chain(y.iter()).map(|v| format!("{v}")).collect();
        let _ = writeln!(out, "{}", row.join(","));
    }
    std::fs::write(path, out).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Disjoint index sets for the four-way split.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Splits {
    pub train: Vec<usize>,
    pub learn: Vec<usize>,
    pub calibrate: Vec<usize>,
    pub test: Vec<usize>,
}

/// Split request: absolute sizes or fractions (per-part floor, leftovers
/// unassigned).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SplitSpec {
    Sizes(usize, usize, usize, usize),
    Fractions(f64, f64, f64, f64),
}

/// Uniform shuffle by seed, then contiguous assignment.
pub fn make_splits(n: usize, spec: SplitSpec, seed: u64) -> Result<Splits, DataError> {
    let (a, b, c, d) = match spec {
        SplitSpec::Sizes(a, b, c, d) => (a, b, c, d),
        SplitSpec::Fractions(fa, fb, fc, fd) => {
            for f in [fa, fb, fc, fd] {
                if !(0.0..=1.0).contains(&f) {
                    return Err(DataError::BadSpec(format!("fraction {f} outside [0, 1]")));
                }
            }
            if fa + fb + fc + fd > 1.0 + 1e-9 {
                return Err(DataError::BadSpec("fractions sum above 1".into()));
            }
            (
                (fa * n as f64).floor() as usize,
                (fb * n as f64).floor() as usize,
                (fc * n as f64).floor() as usize,
                (fd * n as f64).floor() as usize,
            )
        }
    };
    let total = a + b + c + d;
    if total > n {
        return Err(DataError::Oversubscribed { n });
    }
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    use rand::seq::SliceRandom;
    idx.shuffle(&mut rng);
    let train = idx[..a].to_vec();
    let learn = idx[a..a + b].to_vec();
    let calibrate = idx[a + b..a + b + c].to_vec();
    let test = idx[a + b + c..total].to_vec();
    Ok(Splits {
        train,
        learn,
        calibrate,
        test,
    })
}

/// Per-feature affine standardization fitted on a subset of rows.
#[derive(Debug, Clone)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn fit(rows: &[Vec<f64>], idx: &[usize]) -> Result<Self, DataError> {
        if idx.is_empty() {
            return Err(DataError::EmptyDataset);
        }
        let p = rows[idx[0]].len();
        let mut mean = vec![0.0; p];
        for &i in idx {
            for j in 0..p {
                mean[j] += rows[i][j];
            }
        }
        for m in mean.iter_mut() {
            *m /= idx.len() as f64;
        }
        let mut var = vec![0.0; p];
        for &i in idx {
            for j in 0..p {
                let dev = rows[i][j] - mean[j];
                var[j] += dev * dev;
            }
        }
        let std: Vec<f64> = var
            .iter()
            .map(|v| {
                let s = (v / idx.len() as f64).sqrt();
                if s < 1e-12 {
                    1.0
                } else {
                    s
                }
            })
            .collect();
        Ok(Self { mean, std })
    }

    pub fn transform(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }

    pub fn inverse(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(v, (m, s))| v * s + m)
            .collect()
    }

    /// Standardize every feature row of a dataset.
    pub fn transform_dataset(&self, ds: &Dataset) -> Dataset {
        Dataset {
            x: ds.x.iter().map(|row| self.transform(row)).collect(),
            y: ds.y.clone(),
            provenance: ds.provenance.clone(),
            contaminated: ds.contaminated.clone(),
        }
    }
}
