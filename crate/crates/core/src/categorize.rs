//! Lexical categorization by cosine threshold.
//!
//! Every unordered pair of probe words is classified as same-category when
//! their cosine similarity is at least `r`. Balanced accuracy is the mean
//! of the true-positive rate over same-category pairs and the true-negative
//! rate over different-category pairs. The best threshold is searched on
//! the grid `0.001, 0.002, …, 0.999`; the smallest maximizer wins.

use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::compass::DiachronicModel;
use crate::corpus::SpeakerFilter;
use crate::error::{Error, Result};
use crate::probes::Family;
use crate::trainer::cosine;

/// Number of grid points; threshold `k` is `k / GRID_DENOMINATOR`.
pub const GRID_STEPS: u32 = 999;
pub const GRID_DENOMINATOR: f64 = 1000.0;

pub fn grid_threshold(k: u32) -> f64 {
    k as f64 / GRID_DENOMINATOR
}

/// Pairwise cosines split by whether the two words share a category.
#[derive(Debug, Clone, PartialEq)]
pub struct PairSimilarities {
    /// Sorted ascending.
    pub same: Vec<f64>,
    /// Sorted ascending.
    pub different: Vec<f64>,
}

impl PairSimilarities {
    pub fn new<L: PartialEq>(vectors: &[&[f64]], labels: &[L]) -> Result<Self> {
        if vectors.len() != labels.len() {
            return Err(Error::Degenerate(format!(
                "{} vectors but {} labels",
                vectors.len(),
                labels.len()
            )));
        }
        if vectors.len() < 2 {
            return Err(Error::Degenerate("need at least two words".into()));
        }
        let mut same = Vec::new();
        let mut different = Vec::new();
        for i in 0..vectors.len() {
            for j in i + 1..vectors.len() {
                let cos = cosine(vectors[i], vectors[j])
                    .ok_or_else(|| Error::Degenerate(format!("zero vector in pair ({i}, {j})")))?;
                if labels[i] == labels[j] {
                    same.push(cos);
                } else {
                    different.push(cos);
                }
            }
        }
        if same.is_empty() {
            return Err(Error::Degenerate("no same-category pairs".into()));
        }
        if different.is_empty() {
            return Err(Error::Degenerate(
                "no different-category pairs (need at least two categories)".into(),
            ));
        }
        same.sort_by(f64::total_cmp);
        different.sort_by(f64::total_cmp);
        Ok(PairSimilarities { same, different })
    }

    pub fn rates(&self, r: f64) -> Rates {
        let below_same = self.same.partition_point(|&c| c < r);
        let below_diff = self.different.partition_point(|&c| c < r);
        let tpr = (self.same.len() - below_same) as f64 / self.same.len() as f64;
        let tnr = below_diff as f64 / self.different.len() as f64;
        Rates {
            tpr,
            tnr,
            balanced_accuracy: (tpr + tnr) / 2.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rates {
    pub tpr: f64,
    pub tnr: f64,
    pub balanced_accuracy: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BestThreshold {
    pub balanced_accuracy: f64,
    pub threshold: f64,
    pub tpr: f64,
    pub tnr: f64,
}

pub fn balanced_accuracy_at_threshold<L: PartialEq>(vectors: &[&[f64]], labels: &[L], r: f64) -> Result<f64> {
    Ok(PairSimilarities::new(vectors, labels)?.rates(r).balanced_accuracy)
}

/// Grid search for the threshold maximizing balanced accuracy.
pub fn best_balanced_accuracy<L: PartialEq>(vectors: &[&[f64]], labels: &[L]) -> Result<BestThreshold> {
    Ok(best_on_grid(&PairSimilarities::new(vectors, labels)?))
}

pub fn best_on_grid(pairs: &PairSimilarities) -> BestThreshold {
    let mut best: Option<BestThreshold> = None;
    for k in 1..=GRID_STEPS {
        let r = grid_threshold(k);
        let rates = pairs.rates(r);
        if best.map_or(true, |b| rates.balanced_accuracy > b.balanced_accuracy) {
            best = Some(BestThreshold {
                balanced_accuracy: rates.balanced_accuracy,
                threshold: r,
                tpr: rates.tpr,
                tnr: rates.tnr,
            });
        }
    }
    best.expect("grid is nonempty")
}

/// Probe vectors of one family at one month, in word order.
pub fn probe_vectors<'m>(
    model: &'m DiachronicModel,
    month: u32,
    categories: &'m BTreeMap<String, String>,
) -> Result<(Vec<&'m [f64]>, Vec<&'m str>)> {
    let mut vectors = Vec::with_capacity(categories.len());
    let mut labels = Vec::with_capacity(categories.len());
    for (word, label) in categories {
        let v = model.vector(word, month).ok_or_else(|| {
            if model.slice(month).is_none() {
                Error::Model(format!("model has no slice for month {month}"))
            } else {
                model.vocabulary().unknown_word(word)
            }
        })?;
        vectors.push(v);
        labels.push(label.as_str());
    }
    Ok((vectors, labels))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BAPoint {
    pub month: u32,
    pub balanced_accuracy: f64,
    pub threshold: f64,
}

/// Month-wise best balanced accuracy of one model (or a seed average).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BATrajectory {
    pub points: Vec<BAPoint>,
    pub family: Family,
    pub speaker: SpeakerFilter,
    pub mode: String,
    /// `None` for seed averages.
    pub seed: Option<u64>,
}

impl BATrajectory {
    pub fn months(&self) -> Vec<u32> {
        self.points.iter().map(|p| p.month).collect()
    }

    pub fn final_point(&self) -> Option<&BAPoint> {
        self.points.last()
    }
}

pub fn trajectory(
    model: &DiachronicModel,
    family: Family,
    categories: &BTreeMap<String, String>,
) -> Result<BATrajectory> {
    let months = model.trained_months();
    let points = months
        .par_iter()
        .map(|&month| {
            let (vectors, labels) = probe_vectors(model, month, categories)?;
            let best = best_balanced_accuracy(&vectors, &labels)?;
            Ok(BAPoint {
                month,
                balanced_accuracy: best.balanced_accuracy,
                threshold: best.threshold,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BATrajectory {
        points,
        family,
        speaker: model.speaker(),
        mode: model.mode().map_or("untrained", |m| m.as_str()).to_string(),
        seed: Some(model.seed()),
    })
}

/// Per-month mean of several runs' balanced accuracy and threshold.
pub fn average_trajectories(runs: &[BATrajectory]) -> Result<BATrajectory> {
    let first = runs
        .first()
        .ok_or_else(|| Error::Degenerate("no trajectories to average".into()))?;
    if runs.iter().any(|t| t.months() != first.months()) {
        return Err(Error::Degenerate("trajectories cover different months".into()));
    }
    let n = runs.len() as f64;
    let points = (0..first.points.len())
        .map(|i| BAPoint {
            month: first.points[i].month,
            balanced_accuracy: runs.iter().map(|t| t.points[i].balanced_accuracy).sum::<f64>() / n,
            threshold: runs.iter().map(|t| t.points[i].threshold).sum::<f64>() / n,
        })
        .collect();
    Ok(BATrajectory {
        points,
        family: first.family,
        speaker: first.speaker,
        mode: first.mode.clone(),
        seed: None,
    })
}

/// `BA = alpha + beta * ln(t)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryFit {
    pub alpha: f64,
    pub beta: f64,
    pub r_squared: f64,
}

impl TrajectoryFit {
    pub fn predict(&self, month: f64) -> f64 {
        self.alpha + self.beta * month.ln()
    }
}

pub fn fit_log_curve(traj: &BATrajectory) -> Result<TrajectoryFit> {
    let points: Vec<(f64, f64)> = traj
        .points
        .iter()
        .map(|p| (p.month as f64, p.balanced_accuracy))
        .collect();
    fit_log_points(&points)
}

/// Least squares of `y` on `ln(t)`.
pub fn fit_log_points(points: &[(f64, f64)]) -> Result<TrajectoryFit> {
    if points.len() < 2 {
        return Err(Error::Degenerate(format!(
            "log fit needs at least 2 points, got {}",
            points.len()
        )));
    }
    if points.iter().any(|&(t, _)| !(t > 0.0)) {
        return Err(Error::Domain("log fit needs positive months".into()));
    }
    let n = points.len() as f64;
    let mean_x = points.iter().map(|&(t, _)| t.ln()).sum::<f64>() / n;
    let mean_y = points.iter().map(|&(_, y)| y).sum::<f64>() / n;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for &(t, y) in points {
        let dx = t.ln() - mean_x;
        let dy = y - mean_y;
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    if sxx == 0.0 {
        return Err(Error::Degenerate("all points share one month".into()));
    }
    let beta = sxy / sxx;
    let alpha = mean_y - beta * mean_x;
    let rss: f64 = points
        .iter()
        .map(|&(t, y)| {
            let e = y - (alpha + beta * t.ln());
            e * e
        })
        .sum();
    let r_squared = if syy == 0.0 {
        1.0
    } else {
        (1.0 - rss / syy).clamp(0.0, 1.0)
    };
    Ok(TrajectoryFit { alpha, beta, r_squared })
}

pub const TRAJECTORY_HEADER: &str = "month,ba,threshold,family,speaker,mode,seed";

pub fn write_trajectory_csv<W: Write>(out: &mut W, trajectories: &[BATrajectory]) -> std::io::Result<()> {
    writeln!(out, "{TRAJECTORY_HEADER}")?;
    for t in trajectories {
        let seed = t.seed.map_or_else(|| "mean".to_string(), |s| s.to_string());
        for p in &t.points {
            writeln!(
                out,
                "{},{:?},{:?},{},{},{},{}",
                p.month, p.balanced_accuracy, p.threshold, t.family, t.speaker, t.mode, seed
            )?;
        }
    }
    Ok(())
}

/// Reads trajectories back from the CSV written by [`write_trajectory_csv`].
pub fn read_trajectory_csv(path: &std::path::Path) -> Result<Vec<BATrajectory>> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    if headers.iter().collect::<Vec<_>>().join(",") != TRAJECTORY_HEADER {
        return Err(Error::parse(path, 1, format!("expected header {TRAJECTORY_HEADER}")));
    }
    let mut grouped: BTreeMap<(String, String, String, String), BATrajectory> = BTreeMap::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let bad = |what: &str| Error::parse(path, line, format!("bad {what}"));
        let month: u32 = rec[0].parse().map_err(|_| bad("month"))?;
        let ba: f64 = rec[1].parse().map_err(|_| bad("ba"))?;
        let threshold: f64 = rec[2].parse().map_err(|_| bad("threshold"))?;
        let family: Family = rec[3].parse().map_err(|_| bad("family"))?;
        let speaker = rec[4].parse().map_err(|_| bad("speaker"))?;
        let seed = match &rec[6] {
            "mean" => None,
            s => Some(s.parse().map_err(|_| bad("seed"))?),
        };
        let key = (
            rec[3].to_string(),
            rec[4].to_string(),
            rec[5].to_string(),
            rec[6].to_string(),
        );
        let traj = grouped.entry(key).or_insert_with(|| BATrajectory {
            points: Vec::new(),
            family,
            speaker,
            mode: rec[5].to_string(),
            seed,
        });
        if traj.points.last().is_some_and(|p| p.month >= month) {
            return Err(Error::parse(path, line, "months must be strictly increasing"));
        }
        traj.points.push(BAPoint {
            month,
            balanced_accuracy: ba,
            threshold,
        });
    }
    Ok(grouped.into_values().collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn separated() -> (Vec<Vec<f64>>, Vec<&'static str>) {
        // Same-category pairs have cosine 1, cross-category pairs cosine 0.
        let v = vec![
            vec![1.0, 0.0],
            vec![2.0, 0.0],
            vec![0.5, 0.0],
            vec![0.0, 1.0],
            vec![0.0, 3.0],
        ];
        (v, vec!["a", "a", "a", "b", "b"])
    }

    fn refs(v: &[Vec<f64>]) -> Vec<&[f64]> {
        v.iter().map(Vec::as_slice).collect()
    }

    #[test]
    fn perfect_separation() {
        let (v, l) = separated();
        assert_eq!(balanced_accuracy_at_threshold(&refs(&v), &l, 0.5).unwrap(), 1.0);
        let best = best_balanced_accuracy(&refs(&v), &l).unwrap();
        assert_eq!(best.balanced_accuracy, 1.0);
        assert_eq!(best.threshold, 0.001);
    }

    #[test]
    fn threshold_below_all_cosines() {
        let (v, l) = separated();
        let pairs = PairSimilarities::new(&refs(&v), &l).unwrap();
        let r = pairs.same[0].min(pairs.different[0]);
        let rates = pairs.rates(r);
        assert_eq!((rates.tpr, rates.tnr, rates.balanced_accuracy), (1.0, 0.0, 0.5));
    }

    #[test]
    fn identical_categories_are_indistinguishable() {
        let v = vec![vec![1.0, 2.0]; 4];
        let l = ["x", "x", "y", "y"];
        for k in [1, 250, 999] {
            assert_eq!(
                balanced_accuracy_at_threshold(&refs(&v), &l, grid_threshold(k)).unwrap(),
                0.5
            );
        }
        let best = best_balanced_accuracy(&refs(&v), &l).unwrap();
        assert_eq!((best.balanced_accuracy, best.threshold), (0.5, 0.001));
    }

    #[test]
    fn degenerate_inputs() {
        let v = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        assert!(matches!(
            best_balanced_accuracy(&refs(&v), &["a", "b"]),
            Err(Error::Degenerate(_))
        ));
        assert!(matches!(
            best_balanced_accuracy(&refs(&v), &["a", "a"]),
            Err(Error::Degenerate(_))
        ));
        assert!(matches!(
            best_balanced_accuracy(&refs(&v[..1]), &["a"]),
            Err(Error::Degenerate(_))
        ));
        let z = vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![1.0, 1.0]];
        assert!(best_balanced_accuracy(&refs(&z), &["a", "a", "b"]).is_err());
    }

    #[test]
    fn log_fit_exact_and_constant() {
        let pts: Vec<(f64, f64)> = (18..=36).map(|t| (t as f64, 0.3 + 0.08 * (t as f64).ln())).collect();
        let fit = fit_log_points(&pts).unwrap();
        assert!((fit.alpha - 0.3).abs() < 1e-10);
        assert!((fit.beta - 0.08).abs() < 1e-10);
        assert!((fit.r_squared - 1.0).abs() < 1e-10);

        let flat: Vec<(f64, f64)> = (18..=22).map(|t| (t as f64, 0.6)).collect();
        let fit = fit_log_points(&flat).unwrap();
        assert_eq!(fit.beta, 0.0);
        assert_eq!(fit.r_squared, 1.0);

        assert!(fit_log_points(&[(18.0, 0.5)]).is_err());
        assert!(fit_log_points(&[(18.0, 0.5), (18.0, 0.6)]).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let t = BATrajectory {
            points: vec![
                BAPoint {
                    month: 18,
                    balanced_accuracy: 0.55,
                    threshold: 0.25,
                },
                BAPoint {
                    month: 19,
                    balanced_accuracy: 0.6,
                    threshold: 0.3,
                },
            ],
            family: Family::Semantic,
            speaker: SpeakerFilter::ChildSpeech,
            mode: "incremental".into(),
            seed: None,
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        let mut buf = Vec::new();
        write_trajectory_csv(&mut buf, std::slice::from_ref(&t)).unwrap();
        std::fs::write(&path, &buf).unwrap();
        assert_eq!(read_trajectory_csv(&path).unwrap(), vec![t]);
        assert!(String::from_utf8(buf).unwrap().starts_with(TRAJECTORY_HEADER));
    }
}
