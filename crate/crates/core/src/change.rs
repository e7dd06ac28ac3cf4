//! Semantic change between consecutive slices and its regression on
//! word frequency.
//!
//! The change of word `w` from month `t` to the next trained month is
//! `1 - cos(w_t, w_{t+1})`. Changes below [`MIN_DELTA`] are left without a
//! normalized value; the rest get the z-score of `ln(delta)`.
//!
//! [`fit_mixed_model`] fits
//! `y = b0 + b_f * ln f + b_t * t + z_w + e` with a per-word random intercept
//! `z_w ~ N(0, s_z^2)` and residual `e ~ N(0, s_e^2)` by maximum likelihood.
//! For a fixed variance ratio `g = s_z^2 / s_e^2` the fixed effects and
//! `s_e^2` have closed forms (generalized least squares), so the likelihood
//! is profiled down to a one-dimensional search over `g`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::compass::DiachronicModel;
use crate::error::{Error, Result};
use crate::trainer::cosine;
use crate::warning::Warning;

/// Changes below this are too small for a stable logarithm.
pub const MIN_DELTA: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChangeRecord {
    pub word: String,
    /// The earlier month of the pair.
    pub month: u32,
    pub delta: f64,
    pub log_norm_delta: Option<f64>,
    pub freq_child: f64,
    pub freq_adult: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ChangeSeries {
    pub records: Vec<ChangeRecord>,
}

impl ChangeSeries {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn retained(&self) -> impl Iterator<Item = &ChangeRecord> {
        self.records.iter().filter(|r| r.log_norm_delta.is_some())
    }
}

/// Relative frequency of each word per month.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SliceFrequencies {
    months: BTreeMap<u32, (BTreeMap<String, u64>, u64)>,
}

impl SliceFrequencies {
    /// Counts of the model's vocabulary words in its training slices.
    pub fn from_model(model: &DiachronicModel) -> Self {
        let vocab = model.vocabulary();
        let months = model
            .slice_counts
            .iter()
            .map(|(&month, counts)| {
                let words = counts.iter().map(|(&id, &n)| (vocab.word(id).to_string(), n)).collect();
                (month, (words, model.slice_token_total(month)))
            })
            .collect();
        SliceFrequencies { months }
    }

    pub fn from_counts<I, S>(month: u32, counts: I, total: u64) -> Self
    where
        I: IntoIterator<Item = (S, u64)>,
        S: Into<String>,
    {
        let mut f = SliceFrequencies::default();
        f.insert(month, counts, total);
        f
    }

    pub fn insert<I, S>(&mut self, month: u32, counts: I, total: u64)
    where
        I: IntoIterator<Item = (S, u64)>,
        S: Into<String>,
    {
        let counts = counts.into_iter().map(|(w, n)| (w.into(), n)).collect();
        self.months.insert(month, (counts, total));
    }

    /// Count over total, 0 for unseen words or months.
    pub fn relative(&self, word: &str, month: u32) -> f64 {
        match self.months.get(&month) {
            Some((counts, total)) if *total > 0 => counts.get(word).copied().unwrap_or(0) as f64 / *total as f64,
            _ => 0.0,
        }
    }
}

/// Change of every word in `words` between consecutive trained months.
///
/// Records whose cosine is undefined (a zero vector) are dropped with a
/// warning.
pub fn semantic_change(
    model: &DiachronicModel,
    words: &BTreeSet<String>,
    child: &SliceFrequencies,
    adult: &SliceFrequencies,
) -> Result<(ChangeSeries, Vec<Warning>)> {
    let months = model.trained_months();
    if months.len() < 2 {
        return Err(Error::Degenerate(format!(
            "semantic change needs at least 2 trained slices, model has {}",
            months.len()
        )));
    }
    for w in words {
        if model.vocabulary().id(w).is_none() {
            return Err(model.vocabulary().unknown_word(w));
        }
    }
    let per_word: Vec<(Vec<ChangeRecord>, Vec<Warning>)> = words
        .par_iter()
        .map(|word| {
            let mut records = Vec::new();
            let mut warnings = Vec::new();
            for pair in months.windows(2) {
                let (t, next) = (pair[0], pair[1]);
                let a = model.vector(word, t).expect("word checked");
                let b = model.vector(word, next).expect("word checked");
                match cosine(a, b) {
                    Some(cos) => records.push(ChangeRecord {
                        word: word.clone(),
                        month: t,
                        delta: 1.0 - cos,
                        log_norm_delta: None,
                        freq_child: child.relative(word, t),
                        freq_adult: adult.relative(word, t),
                    }),
                    None => warnings.push(Warning::UndefinedChange {
                        word: word.clone(),
                        month: t,
                    }),
                }
            }
            (records, warnings)
        })
        .collect();
    let mut series = ChangeSeries::default();
    let mut warnings = Vec::new();
    for (r, w) in per_word {
        series.records.extend(r);
        warnings.extend(w);
    }
    Ok((series, warnings))
}

/// Per-record mean change over seeds; records missing from any seed are
/// dropped.
pub fn average_series(runs: Vec<ChangeSeries>) -> ChangeSeries {
    let n = runs.len();
    let mut acc: BTreeMap<(String, u32), (ChangeRecord, f64, usize)> = BTreeMap::new();
    for series in runs {
        for r in series.records {
            let e = acc
                .entry((r.word.clone(), r.month))
                .or_insert_with(|| (r.clone(), 0.0, 0));
            e.1 += r.delta;
            e.2 += 1;
        }
    }
    ChangeSeries {
        records: acc
            .into_values()
            .filter(|(_, _, k)| *k == n)
            .map(|(mut r, sum, k)| {
                r.delta = sum / k as f64;
                r
            })
            .collect(),
    }
}

/// Sets `log_norm_delta` on records with `delta >= MIN_DELTA`.
pub fn normalize_changes(mut series: ChangeSeries) -> Result<ChangeSeries> {
    let logs: Vec<f64> = series
        .records
        .iter()
        .filter(|r| r.delta >= MIN_DELTA)
        .map(|r| r.delta.ln())
        .collect();
    if logs.len() < 2 {
        return Err(Error::Degenerate(format!(
            "{} records have change >= {MIN_DELTA}; need at least 2",
            logs.len()
        )));
    }
    let n = logs.len() as f64;
    let mean = logs.iter().sum::<f64>() / n;
    let sd = (logs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
    if sd == 0.0 {
        return Err(Error::Degenerate("all retained changes are equal".into()));
    }
    for r in &mut series.records {
        r.log_norm_delta = (r.delta >= MIN_DELTA).then(|| (r.delta.ln() - mean) / sd);
    }
    Ok(series)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrequencySource {
    Child,
    Adult,
}

impl FrequencySource {
    pub fn as_str(self) -> &'static str {
        match self {
            FrequencySource::Child => "child",
            FrequencySource::Adult => "adult",
        }
    }
}

impl fmt::Display for FrequencySource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FrequencySource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "child" => Ok(FrequencySource::Child),
            "adult" => Ok(FrequencySource::Adult),
            other => Err(Error::Config(format!("unknown frequency source {other:?}"))),
        }
    }
}

/// Observations for the random-intercept model.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Panel {
    pub y: Vec<f64>,
    pub log_freq: Vec<f64>,
    pub time: Vec<f64>,
    /// Group (word) index of each observation.
    pub group: Vec<usize>,
}

impl Panel {
    /// Retained records of `series`; records with zero frequency in the
    /// chosen source are skipped and counted.
    pub fn from_series(series: &ChangeSeries, source: FrequencySource) -> (Panel, usize) {
        let mut panel = Panel::default();
        let mut ids: BTreeMap<&str, usize> = BTreeMap::new();
        let mut dropped = 0;
        for r in series.retained() {
            let f = match source {
                FrequencySource::Child => r.freq_child,
                FrequencySource::Adult => r.freq_adult,
            };
            if !(f > 0.0) {
                dropped += 1;
                continue;
            }
            let next = ids.len();
            let g = *ids.entry(r.word.as_str()).or_insert(next);
            panel.y.push(r.log_norm_delta.expect("retained"));
            panel.log_freq.push(f.ln());
            panel.time.push(r.month as f64);
            panel.group.push(g);
        }
        (panel, dropped)
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixedEffect {
    pub estimate: f64,
    pub std_error: f64,
    pub z: f64,
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixedModelFit {
    pub intercept: FixedEffect,
    pub beta_f: FixedEffect,
    pub beta_t: FixedEffect,
    pub sigma_z: f64,
    pub sigma_e: f64,
    /// Mean squared conditional residual `y - X b - z_w` (BLUP intercepts).
    pub residual_variance: f64,
    pub log_likelihood: f64,
    pub observations: usize,
    pub groups: usize,
    pub dropped_zero_frequency: usize,
    pub frequency_source: Option<FrequencySource>,
}

/// Largest variance-ratio transform searched; `rho = g / (1 + g)`.
const RHO_MAX: f64 = 1.0 - 1e-9;
const SEARCH_TOL: f64 = 1e-10;

pub fn fit_mixed_model(series: &ChangeSeries, source: FrequencySource) -> Result<MixedModelFit> {
    let (panel, dropped) = Panel::from_series(series, source);
    let mut fit = fit_panel(&panel)?;
    fit.dropped_zero_frequency = dropped;
    fit.frequency_source = Some(source);
    Ok(fit)
}

/// Same design with the random intercept removed (ordinary least squares).
pub fn fit_ols(series: &ChangeSeries, source: FrequencySource) -> Result<MixedModelFit> {
    let (panel, dropped) = Panel::from_series(series, source);
    let mut fit = fit_panel_at(&panel, 0.0)?;
    fit.dropped_zero_frequency = dropped;
    fit.frequency_source = Some(source);
    Ok(fit)
}

pub fn fit_panel(panel: &Panel) -> Result<MixedModelFit> {
    let design = Design::new(panel)?;
    let profile = |rho: f64| design.profile(rho / (1.0 - rho)).map(|p| p.log_likelihood);

    // Golden-section search on rho in [0, RHO_MAX], then compare with the
    // boundary at zero variance, where the maximum often sits.
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (0.0, RHO_MAX);
    let mut x1 = b - inv_phi * (b - a);
    let mut x2 = a + inv_phi * (b - a);
    let mut f1 = profile(x1)?;
    let mut f2 = profile(x2)?;
    while b - a > SEARCH_TOL {
        if f1 < f2 {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + inv_phi * (b - a);
            f2 = profile(x2)?;
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - inv_phi * (b - a);
            f1 = profile(x1)?;
        }
    }
    let rho = (a + b) / 2.0;
    let interior = profile(rho)?;
    let gamma = if profile(0.0)? >= interior {
        0.0
    } else {
        rho / (1.0 - rho)
    };
    design.fit(gamma)
}

/// Fit at a fixed variance ratio `gamma = s_z^2 / s_e^2`.
pub fn fit_panel_at(panel: &Panel, gamma: f64) -> Result<MixedModelFit> {
    if !(gamma >= 0.0 && gamma.is_finite()) {
        return Err(Error::Domain(format!("variance ratio must be >= 0, got {gamma}")));
    }
    Design::new(panel)?.fit(gamma)
}

struct Design<'a> {
    panel: &'a Panel,
    /// Observation indices per group.
    groups: Vec<Vec<usize>>,
}

struct Profile {
    beta: DVector<f64>,
    /// Inverse of `X' W X`.
    xtwx_inv: DMatrix<f64>,
    sigma_e2: f64,
    log_likelihood: f64,
}

const P: usize = 3;

impl<'a> Design<'a> {
    fn new(panel: &'a Panel) -> Result<Self> {
        let n = panel.len();
        if panel.log_freq.len() != n || panel.time.len() != n || panel.group.len() != n {
            return Err(Error::Degenerate("panel columns differ in length".into()));
        }
        if panel
            .y
            .iter()
            .chain(&panel.log_freq)
            .chain(&panel.time)
            .any(|v| !v.is_finite())
        {
            return Err(Error::Numeric("panel contains non-finite values".into()));
        }
        let n_groups = panel.group.iter().max().map_or(0, |&g| g + 1);
        let mut groups = vec![Vec::new(); n_groups];
        for (i, &g) in panel.group.iter().enumerate() {
            groups[g].push(i);
        }
        groups.retain(|g| !g.is_empty());
        if groups.len() < 2 {
            return Err(Error::Degenerate(format!(
                "mixed model needs at least 2 words, got {}",
                groups.len()
            )));
        }
        let distinct_times: BTreeSet<u64> = panel.time.iter().map(|t| t.to_bits()).collect();
        if distinct_times.len() < 2 {
            return Err(Error::Degenerate("mixed model needs at least 2 time points".into()));
        }
        for (name, col) in [("log frequency", &panel.log_freq), ("time", &panel.time)] {
            let mean = col.iter().sum::<f64>() / n as f64;
            let spread = col.iter().map(|v| (v - mean).abs()).fold(0.0, f64::max);
            if spread <= 1e-12 * mean.abs().max(1.0) {
                return Err(Error::RankDeficient(format!("{name} column is constant")));
            }
        }
        Ok(Design { panel, groups })
    }

    fn row(&self, i: usize) -> [f64; P] {
        [1.0, self.panel.log_freq[i], self.panel.time[i]]
    }

    fn profile(&self, gamma: f64) -> Result<Profile> {
        let p = self.panel;
        let n = p.len() as f64;
        let mut xtwx = DMatrix::<f64>::zeros(P, P);
        let mut xtwy = DVector::<f64>::zeros(P);
        let mut log_det = 0.0;
        for g in &self.groups {
            let c = gamma / (1.0 + gamma * g.len() as f64);
            log_det += (1.0 + gamma * g.len() as f64).ln();
            let mut sx = [0.0; P];
            let mut sy = 0.0;
            for &i in g {
                let x = self.row(i);
                for a in 0..P {
                    sx[a] += x[a];
                    xtwy[a] += x[a] * p.y[i];
                    for b in 0..P {
                        xtwx[(a, b)] += x[a] * x[b];
                    }
                }
                sy += p.y[i];
            }
            for a in 0..P {
                xtwy[a] -= c * sx[a] * sy;
                for b in 0..P {
                    xtwx[(a, b)] -= c * sx[a] * sx[b];
                }
            }
        }
        let chol = xtwx
            .cholesky()
            .ok_or_else(|| Error::RankDeficient("fixed-effect design is singular".into()))?;
        let beta = chol.solve(&xtwy);
        let mut rss = 0.0;
        for g in &self.groups {
            let c = gamma / (1.0 + gamma * g.len() as f64);
            let mut sr = 0.0;
            for &i in g {
                let x = self.row(i);
                let r = p.y[i] - (0..P).map(|a| x[a] * beta[a]).sum::<f64>();
                rss += r * r;
                sr += r;
            }
            rss -= c * sr * sr;
        }
        let sigma_e2 = rss / n;
        if !(sigma_e2 > 0.0) {
            return Err(Error::Numeric("residual variance is zero".into()));
        }
        let log_likelihood = -0.5 * n * ((2.0 * std::f64::consts::PI).ln() + sigma_e2.ln() + 1.0) - 0.5 * log_det;
        Ok(Profile {
            beta,
            xtwx_inv: chol.inverse(),
            sigma_e2,
            log_likelihood,
        })
    }

    fn fit(&self, gamma: f64) -> Result<MixedModelFit> {
        let prof = self.profile(gamma)?;
        let normal = Normal::standard();
        let effect = |k: usize| {
            let estimate = prof.beta[k];
            let std_error = (prof.sigma_e2 * prof.xtwx_inv[(k, k)]).sqrt();
            let z = estimate / std_error;
            FixedEffect {
                estimate,
                std_error,
                z,
                p_value: 2.0 * normal.sf(z.abs()),
            }
        };
        // Conditional residuals after subtracting each word's predicted
        // intercept.
        let p = self.panel;
        let mut sq = 0.0;
        for g in &self.groups {
            let c = gamma / (1.0 + gamma * g.len() as f64);
            let resid: Vec<f64> = g
                .iter()
                .map(|&i| {
                    let x = self.row(i);
                    p.y[i] - (0..P).map(|a| x[a] * prof.beta[a]).sum::<f64>()
                })
                .collect();
            let z = c * resid.iter().sum::<f64>();
            sq += resid.iter().map(|r| (r - z).powi(2)).sum::<f64>();
        }
        Ok(MixedModelFit {
            intercept: effect(0),
            beta_f: effect(1),
            beta_t: effect(2),
            sigma_z: (gamma * prof.sigma_e2).sqrt(),
            sigma_e: prof.sigma_e2.sqrt(),
            residual_variance: sq / p.len() as f64,
            log_likelihood: prof.log_likelihood,
            observations: p.len(),
            groups: self.groups.len(),
            dropped_zero_frequency: 0,
            frequency_source: None,
        })
    }
}

pub const CHANGE_HEADER: &str = "word,month,delta,log_norm_delta,freq_child,freq_adult";

pub fn write_change_csv<W: Write>(out: &mut W, series: &ChangeSeries) -> std::io::Result<()> {
    writeln!(out, "{CHANGE_HEADER}")?;
    for r in &series.records {
        let norm = r.log_norm_delta.map_or_else(String::new, |v| format!("{v:?}"));
        writeln!(
            out,
            "{},{},{:?},{},{:?},{:?}",
            r.word, r.month, r.delta, norm, r.freq_child, r.freq_adult
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal as Gauss};

    fn record(word: &str, month: u32, delta: f64) -> ChangeRecord {
        ChangeRecord {
            word: word.into(),
            month,
            delta,
            log_norm_delta: None,
            freq_child: 0.01,
            freq_adult: 0.02,
        }
    }

    #[test]
    fn normalization_filters_and_standardizes() {
        let all_small = ChangeSeries {
            records: vec![record("a", 1, 0.04), record("b", 1, 0.04)],
        };
        assert!(matches!(normalize_changes(all_small), Err(Error::Degenerate(_))));

        let two = ChangeSeries {
            records: vec![record("a", 1, 0.1), record("b", 1, 0.4), record("c", 1, 0.01)],
        };
        let out = normalize_changes(two).unwrap();
        let z: Vec<_> = out.records.iter().map(|r| r.log_norm_delta).collect();
        assert!((z[0].unwrap() + 1.0).abs() < 1e-12);
        assert!((z[1].unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(z[2], None);
    }

    #[test]
    fn normalized_values_have_unit_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let u = rand_distr::Uniform::new(0.0, 1.5);
        let records = (0..200)
            .map(|i| record(&format!("w{i}"), 1, u.sample(&mut rng)))
            .collect();
        let out = normalize_changes(ChangeSeries { records }).unwrap();
        let z: Vec<f64> = out.retained().map(|r| r.log_norm_delta.unwrap()).collect();
        let n = z.len() as f64;
        let mean = z.iter().sum::<f64>() / n;
        let var = z.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        assert!(mean.abs() < 1e-10);
        assert!((var.sqrt() - 1.0).abs() < 1e-10);
    }

    fn simulate(seed: u64, words: usize, months: u32, sigma_z: f64) -> Panel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let std = Gauss::new(0.0, 1.0).unwrap();
        let mut p = Panel::default();
        for w in 0..words {
            let z = sigma_z * std.sample(&mut rng);
            let base = std.sample(&mut rng);
            for t in 1..=months {
                let lf = base + 0.5 * std.sample(&mut rng);
                p.y.push(-0.3 * lf - 0.1 * t as f64 + z + std.sample(&mut rng));
                p.log_freq.push(lf);
                p.time.push(t as f64);
                p.group.push(w);
            }
        }
        p
    }

    /// Normal-equation OLS with an intercept, independent of the GLS code.
    fn ols(p: &Panel) -> [f64; 3] {
        let x = DMatrix::from_fn(p.len(), 3, |i, j| [1.0, p.log_freq[i], p.time[i]][j]);
        let y = DVector::from_vec(p.y.clone());
        let b = (x.transpose() * &x).try_inverse().unwrap() * x.transpose() * y;
        [b[0], b[1], b[2]]
    }

    #[test]
    fn zero_ratio_is_ols() {
        let p = simulate(1, 30, 6, 0.5);
        let fit = fit_panel_at(&p, 0.0).unwrap();
        let b = ols(&p);
        assert!((fit.intercept.estimate - b[0]).abs() < 1e-8);
        assert!((fit.beta_f.estimate - b[1]).abs() < 1e-8);
        assert!((fit.beta_t.estimate - b[2]).abs() < 1e-8);
        assert_eq!(fit.sigma_z, 0.0);
    }

    #[test]
    fn ml_beats_ols_and_recovers_variances() {
        let p = simulate(2, 200, 18, 0.5);
        let ml = fit_panel(&p).unwrap();
        let ols = fit_panel_at(&p, 0.0).unwrap();
        assert!(ml.log_likelihood >= ols.log_likelihood);
        assert!((ml.beta_f.estimate + 0.3).abs() < 0.1);
        assert!((ml.beta_t.estimate + 0.1).abs() < 0.02);
        assert!((ml.sigma_z - 0.5).abs() < 0.15, "{}", ml.sigma_z);
        assert!((ml.sigma_e - 1.0).abs() < 0.05, "{}", ml.sigma_e);
    }

    #[test]
    fn no_group_effect_lands_on_boundary_or_near_it() {
        let p = simulate(4, 50, 10, 0.0);
        let ml = fit_panel(&p).unwrap();
        assert!(ml.sigma_z < 0.25);
    }

    #[test]
    fn frequency_rescaling_leaves_slope() {
        let p = simulate(5, 40, 8, 0.5);
        let mut q = p.clone();
        for v in &mut q.log_freq {
            *v += 3f64.ln();
        }
        let (a, b) = (fit_panel(&p).unwrap(), fit_panel(&q).unwrap());
        assert!((a.beta_f.estimate - b.beta_f.estimate).abs() < 1e-8);
    }

    #[test]
    fn constant_frequency_is_rank_deficient() {
        let mut p = simulate(6, 10, 5, 0.5);
        p.log_freq.iter_mut().for_each(|v| *v = -4.0);
        assert!(matches!(fit_panel(&p), Err(Error::RankDeficient(_))));
        let mut one_word = simulate(6, 1, 5, 0.5);
        one_word.group.iter_mut().for_each(|g| *g = 0);
        assert!(matches!(fit_panel(&one_word), Err(Error::Degenerate(_))));
    }

    #[test]
    fn zero_frequencies_are_dropped() {
        let mut s = ChangeSeries {
            records: vec![
                record("a", 1, 0.1),
                record("a", 2, 0.3),
                record("b", 1, 0.2),
                record("b", 2, 0.6),
            ],
        };
        s.records[0].freq_adult = 0.0;
        let s = normalize_changes(s).unwrap();
        let (panel, dropped) = Panel::from_series(&s, FrequencySource::Adult);
        assert_eq!((panel.len(), dropped), (3, 1));
        let (panel, dropped) = Panel::from_series(&s, FrequencySource::Child);
        assert_eq!((panel.len(), dropped), (4, 0));
    }
}
