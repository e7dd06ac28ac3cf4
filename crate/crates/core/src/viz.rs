//! Exact t-SNE of probe embeddings, category centroids and outlier
//! clipping for plotting.

use std::collections::BTreeMap;
use std::io::Write;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::categorize::probe_vectors;
use crate::compass::DiachronicModel;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TsneInit {
    #[default]
    Gaussian,
    Pca,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TsneConfig {
    pub perplexity: f64,
    pub iterations: usize,
    pub learning_rate: f64,
    pub early_exaggeration: f64,
    pub exaggeration_iterations: usize,
    pub momentum: f64,
    /// Momentum once exaggeration ends.
    pub final_momentum: f64,
    pub init: TsneInit,
    pub seed: u64,
}

impl Default for TsneConfig {
    fn default() -> Self {
        TsneConfig {
            perplexity: 19.0,
            iterations: 1000,
            learning_rate: 200.0,
            early_exaggeration: 12.0,
            exaggeration_iterations: 250,
            momentum: 0.5,
            final_momentum: 0.8,
            init: TsneInit::Gaussian,
            seed: 0,
        }
    }
}

impl TsneConfig {
    pub fn validate(&self, n: usize) -> Result<()> {
        if n < 4 {
            return Err(Error::Config(format!("t-SNE needs at least 4 points, got {n}")));
        }
        if !(self.perplexity > 1.0 && self.perplexity < (n - 1) as f64) {
            return Err(Error::Config(format!(
                "perplexity {} is infeasible for {n} points (need 1 < perplexity < {})",
                self.perplexity,
                n - 1
            )));
        }
        if self.iterations == 0 {
            return Err(Error::Config("t-SNE needs at least one iteration".into()));
        }
        if !(self.learning_rate > 0.0 && self.early_exaggeration >= 1.0) {
            return Err(Error::Config(
                "learning rate must be positive and exaggeration at least 1".into(),
            ));
        }
        Ok(())
    }
}

const PERPLEXITY_TOL: f64 = 1e-6;
const MAX_BISECTIONS: usize = 200;
const MIN_GAIN: f64 = 0.01;
const INIT_SCALE: f64 = 1e-4;

fn squared_distances(x: &[&[f64]]) -> Vec<f64> {
    let n = x.len();
    let mut d = vec![0.0; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let v: f64 = x[i].iter().zip(x[j]).map(|(a, b)| (a - b) * (a - b)).sum();
            d[i * n + j] = v;
            d[j * n + i] = v;
        }
    }
    d
}

/// Row of conditional probabilities for precision `beta`, plus its entropy
/// in nats.
fn conditional_row(dist: &[f64], i: usize, beta: f64, out: &mut [f64]) -> f64 {
    let min = dist
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != i)
        .map(|(_, &d)| d)
        .fold(f64::INFINITY, f64::min);
    let mut sum = 0.0;
    for (j, (&d, p)) in dist.iter().zip(out.iter_mut()).enumerate() {
        *p = if j == i { 0.0 } else { (-(d - min) * beta).exp() };
        sum += *p;
    }
    let mut entropy = 0.0;
    for p in out.iter_mut() {
        *p /= sum;
        if *p > 0.0 {
            entropy -= *p * p.ln();
        }
    }
    entropy
}

/// Conditional affinities `p_{j|i}` (row-major) with each row's perplexity
/// matched to `perplexity` by bisection on the Gaussian precision.
pub fn conditional_affinities(x: &[&[f64]], perplexity: f64) -> Result<Vec<f64>> {
    let n = x.len();
    let dist = squared_distances(x);
    let target = perplexity.ln();
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let d = &dist[i * n..(i + 1) * n];
            let mut row = vec![0.0; n];
            let (mut lo, mut hi) = (0.0, f64::INFINITY);
            let mut beta = 1.0;
            for _ in 0..MAX_BISECTIONS {
                let h = conditional_row(d, i, beta, &mut row);
                if (h.exp() - perplexity).abs() < PERPLEXITY_TOL {
                    break;
                }
                // Entropy falls as precision grows.
                if h > target {
                    lo = beta;
                    beta = if hi.is_finite() { (beta + hi) / 2.0 } else { beta * 2.0 };
                } else {
                    hi = beta;
                    beta = (beta + lo) / 2.0;
                }
            }
            row
        })
        .collect();
    let p = rows.concat();
    if p.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite affinity".into()));
    }
    Ok(p)
}

/// Perplexity `exp(H)` of each row of a conditional affinity matrix.
pub fn row_perplexities(conditional: &[f64], n: usize) -> Vec<f64> {
    conditional
        .chunks(n)
        .map(|row| {
            let h: f64 = row.iter().filter(|&&p| p > 0.0).map(|&p| -p * p.ln()).sum();
            h.exp()
        })
        .collect()
}

/// Symmetrized joint affinities `(p_{j|i} + p_{i|j}) / 2n`; sums to 1.
pub fn joint_affinities(x: &[&[f64]], perplexity: f64) -> Result<Vec<f64>> {
    let n = x.len();
    let c = conditional_affinities(x, perplexity)?;
    let mut p = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            p[i * n + j] = (c[i * n + j] + c[j * n + i]) / (2.0 * n as f64);
        }
    }
    Ok(p)
}

/// Unnormalized Student-t kernel and its sum over `i != j`.
fn student_kernel(y: &[[f64; 2]]) -> (Vec<f64>, f64) {
    let n = y.len();
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            (0..n)
                .map(|j| {
                    if i == j {
                        0.0
                    } else {
                        let dx = y[i][0] - y[j][0];
                        let dy = y[i][1] - y[j][1];
                        1.0 / (1.0 + dx * dx + dy * dy)
                    }
                })
                .collect()
        })
        .collect();
    let z = rows.iter().map(|r| r.iter().sum::<f64>()).sum();
    (rows.concat(), z)
}

/// `KL(P || Q)` for joint affinities `p` and embedding `y`.
pub fn kl_divergence(p: &[f64], y: &[[f64; 2]]) -> f64 {
    let (num, z) = student_kernel(y);
    p.iter()
        .zip(&num)
        .filter(|(&pij, _)| pij > 0.0)
        .map(|(&pij, &w)| pij * (pij / (w / z).max(f64::MIN_POSITIVE)).ln())
        .sum()
}

/// Gradient of `KL(P || Q)` with respect to `y`, with `p` scaled by
/// `exaggeration`.
pub fn kl_gradient(p: &[f64], y: &[[f64; 2]], exaggeration: f64) -> Vec<[f64; 2]> {
    let n = y.len();
    let (num, z) = student_kernel(y);
    (0..n)
        .into_par_iter()
        .map(|i| {
            let mut g = [0.0; 2];
            for j in 0..n {
                let w = num[i * n + j];
                let m = 4.0 * (exaggeration * p[i * n + j] - w / z) * w;
                g[0] += m * (y[i][0] - y[j][0]);
                g[1] += m * (y[i][1] - y[j][1]);
            }
            g
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TsneResult {
    pub coords: Vec<[f64; 2]>,
    pub kl_divergence: f64,
    /// KL after each iteration, measured against the unexaggerated P.
    pub kl_history: Vec<f64>,
}

fn initial_coords(x: &[&[f64]], config: &TsneConfig) -> Result<Vec<[f64; 2]>> {
    let n = x.len();
    match config.init {
        TsneInit::Gaussian => {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            let normal = Normal::new(0.0, INIT_SCALE).expect("valid scale");
            Ok((0..n)
                .map(|_| [normal.sample(&mut rng), normal.sample(&mut rng)])
                .collect())
        }
        TsneInit::Pca => {
            let d = x[0].len();
            let data = DMatrix::from_fn(n, d, |i, j| x[i][j]);
            let mean = data.row_mean();
            let centered = DMatrix::from_fn(n, d, |i, j| data[(i, j)] - mean[j]);
            let cov = centered.transpose() * &centered / n as f64;
            let eig = SymmetricEigen::new(cov);
            let mut order: Vec<usize> = (0..d).collect();
            order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
            let mut coords = vec![[0.0; 2]; n];
            for (axis, &k) in order.iter().take(2).enumerate() {
                let v = eig.eigenvectors.column(k);
                // Fix the sign so the result does not depend on the solver.
                let sign = if v.iter().find(|c| c.abs() > 1e-12).is_some_and(|&c| c < 0.0) {
                    -1.0
                } else {
                    1.0
                };
                for (i, c) in coords.iter_mut().enumerate() {
                    c[axis] = sign * centered.row(i).dot(&v.transpose());
                }
            }
            let sd = (coords.iter().map(|c| c[0] * c[0]).sum::<f64>() / n as f64).sqrt();
            if sd == 0.0 {
                return Err(Error::Degenerate("PCA initialization of identical points".into()));
            }
            for c in &mut coords {
                c[0] *= INIT_SCALE / sd;
                c[1] *= INIT_SCALE / sd;
            }
            Ok(coords)
        }
    }
}

pub fn tsne(x: &[&[f64]], config: &TsneConfig) -> Result<TsneResult> {
    let n = x.len();
    config.validate(n)?;
    let d = x[0].len();
    if x.iter().any(|v| v.len() != d) {
        return Err(Error::Degenerate("input vectors differ in dimension".into()));
    }
    if x.iter().any(|v| v.iter().any(|c| !c.is_finite())) {
        return Err(Error::Numeric("non-finite input vector".into()));
    }
    let p = joint_affinities(x, config.perplexity)?;
    let mut y = initial_coords(x, config)?;
    let mut update = vec![[0.0; 2]; n];
    let mut gains = vec![[1.0f64; 2]; n];
    let mut history = Vec::with_capacity(config.iterations);

    for iter in 0..config.iterations {
        let exaggerating = iter < config.exaggeration_iterations;
        let (ex, momentum) = if exaggerating {
            (config.early_exaggeration, config.momentum)
        } else {
            (1.0, config.final_momentum)
        };
        let grad = kl_gradient(&p, &y, ex);
        for i in 0..n {
            for a in 0..2 {
                let g = grad[i][a];
                gains[i][a] = if (g > 0.0) != (update[i][a] > 0.0) {
                    gains[i][a] + 0.2
                } else {
                    (gains[i][a] * 0.8).max(MIN_GAIN)
                };
                update[i][a] = momentum * update[i][a] - config.learning_rate * gains[i][a] * g;
                y[i][a] += update[i][a];
            }
        }
        let mean = y.iter().fold([0.0; 2], |m, c| [m[0] + c[0], m[1] + c[1]]);
        for c in &mut y {
            c[0] -= mean[0] / n as f64;
            c[1] -= mean[1] / n as f64;
        }
        history.push(kl_divergence(&p, &y));
    }
    if y.iter().any(|c| !c[0].is_finite() || !c[1].is_finite()) {
        return Err(Error::Numeric("t-SNE diverged".into()));
    }
    Ok(TsneResult {
        kl_divergence: *history.last().expect("at least one iteration"),
        coords: y,
        kl_history: history,
    })
}

/// Indices kept after dropping points whose value lies more than `k`
/// population standard deviations from the mean.
pub fn chebyshev_clip(values: &[f64], k: f64) -> Vec<usize> {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let sd = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    (0..values.len())
        .filter(|&i| (values[i] - mean).abs() <= k * sd)
        .collect()
}

pub const DEFAULT_CLIP_K: f64 = 8.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Projection {
    pub month: u32,
    pub words: Vec<String>,
    pub categories: Vec<String>,
    pub coords: Vec<[f64; 2]>,
    /// Means of member coordinates, computed before clipping.
    pub centroids: BTreeMap<String, [f64; 2]>,
    /// Flag per word: excluded from export by the outlier rule.
    pub clipped: Vec<bool>,
    pub kl_divergence: f64,
}

pub fn centroids(labels: &[String], coords: &[[f64; 2]]) -> BTreeMap<String, [f64; 2]> {
    let mut acc: BTreeMap<String, ([f64; 2], usize)> = BTreeMap::new();
    for (label, c) in labels.iter().zip(coords) {
        let e = acc.entry(label.clone()).or_insert(([0.0; 2], 0));
        e.0[0] += c[0];
        e.0[1] += c[1];
        e.1 += 1;
    }
    acc.into_iter()
        .map(|(k, (s, m))| (k, [s[0] / m as f64, s[1] / m as f64]))
        .collect()
}

pub fn project(
    model: &DiachronicModel,
    month: u32,
    categories: &BTreeMap<String, String>,
    config: &TsneConfig,
    clip_k: f64,
) -> Result<Projection> {
    let (vectors, labels) = probe_vectors(model, month, categories)?;
    let result = tsne(&vectors, config)?;
    let labels: Vec<String> = labels.into_iter().map(str::to_string).collect();
    let xs: Vec<f64> = result.coords.iter().map(|c| c[0]).collect();
    let mut clipped = vec![true; xs.len()];
    for i in chebyshev_clip(&xs, clip_k) {
        clipped[i] = false;
    }
    Ok(Projection {
        month,
        words: categories.keys().cloned().collect(),
        centroids: centroids(&labels, &result.coords),
        categories: labels,
        coords: result.coords,
        clipped,
        kl_divergence: result.kl_divergence,
    })
}

pub const PROJECTION_HEADER: &str = "word,category,x,y,clipped";
pub const CENTROID_HEADER: &str = "category,x,y";

pub fn write_projection_csv<W: Write>(out: &mut W, p: &Projection) -> std::io::Result<()> {
    writeln!(out, "{PROJECTION_HEADER}")?;
    for i in 0..p.words.len() {
        writeln!(
            out,
            "{},{},{:?},{:?},{}",
            p.words[i], p.categories[i], p.coords[i][0], p.coords[i][1], p.clipped[i]
        )?;
    }
    Ok(())
}

pub fn write_centroid_csv<W: Write>(out: &mut W, p: &Projection) -> std::io::Result<()> {
    writeln!(out, "{CENTROID_HEADER}")?;
    for (label, c) in &p.centroids {
        writeln!(out, "{label},{:?},{:?}", c[0], c[1])?;
    }
    Ok(())
}
