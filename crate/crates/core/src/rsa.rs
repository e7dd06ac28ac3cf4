//! Representational similarity analysis and nearest-neighbor queries.
//!
//! Each model's geometry at a month is summarized by a dissimilarity matrix
//! over the probe words, `1 - spearman(v_i, v_j)`. Two models are compared by
//! the Spearman correlation of the strict upper triangles of their matrices,
//! with a permutation p-value obtained by shuffling the word labels of one
//! matrix.

use std::collections::BTreeSet;
use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::compass::{derive_seed, DiachronicModel};
use crate::error::{Error, Result};
use crate::probes::Family;
use crate::trainer::cosine;

/// Fractional ranks (1-based, ties get the mean of their positions).
pub fn fractional_ranks(x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && x[order[j]] == x[order[i]] {
            j += 1;
        }
        // Positions i..j (0-based) share rank mean(i+1..=j).
        let rank = (i + j + 1) as f64 / 2.0;
        for &k in &order[i..j] {
            ranks[k] = rank;
        }
        i = j;
    }
    ranks
}

fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Degenerate(format!(
            "spearman inputs differ in length ({} vs {})",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 2 {
        return Err(Error::Degenerate("spearman needs at least 2 observations".into()));
    }
    if x.iter().chain(y).any(|v| v.is_nan()) {
        return Err(Error::Numeric("NaN in spearman input".into()));
    }
    pearson(&fractional_ranks(x), &fractional_ranks(y))
        .ok_or_else(|| Error::UndefinedCorrelation("constant input vector".into()))
}

/// Representational dissimilarity matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rdm {
    words: Vec<String>,
    /// Row-major `n x n`.
    values: Vec<f64>,
}

impl Rdm {
    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.words.len() + j]
    }

    /// Elementwise mean of RDMs over the same words.
    pub fn mean(rdms: &[Rdm]) -> Result<Rdm> {
        let first = rdms
            .first()
            .ok_or_else(|| Error::Degenerate("no RDMs to average".into()))?;
        if rdms.iter().any(|r| r.words != first.words) {
            return Err(Error::Degenerate("RDMs are over different word lists".into()));
        }
        let n = rdms.len() as f64;
        let values = (0..first.values.len())
            .map(|k| rdms.iter().map(|r| r.values[k]).sum::<f64>() / n)
            .collect();
        Ok(Rdm {
            words: first.words.clone(),
            values,
        })
    }

    /// Entries above the diagonal, row by row.
    pub fn upper_triangle(&self) -> Vec<f64> {
        let n = self.words.len();
        let mut out = Vec::with_capacity(n * (n - 1) / 2);
        for i in 0..n {
            out.extend_from_slice(&self.values[i * n + i + 1..(i + 1) * n]);
        }
        out
    }
}

pub fn build_rdm(words: &[String], vectors: &[&[f64]]) -> Result<Rdm> {
    let n = words.len();
    if n != vectors.len() {
        return Err(Error::Degenerate(format!("{n} words but {} vectors", vectors.len())));
    }
    if n < 3 {
        return Err(Error::Degenerate(format!("RDM needs at least 3 words, got {n}")));
    }
    let ranks: Vec<Vec<f64>> = vectors.par_iter().map(|v| fractional_ranks(v)).collect();
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            (0..n)
                .map(|j| {
                    if i == j {
                        return Ok(0.0);
                    }
                    let rho = pearson(&ranks[i], &ranks[j]).ok_or_else(|| {
                        Error::UndefinedCorrelation(format!(
                            "pair ({}, {}): constant vector",
                            words[i.min(j)],
                            words[i.max(j)]
                        ))
                    })?;
                    Ok(1.0 - rho)
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    Ok(Rdm {
        words: words.to_vec(),
        values: rows.concat(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct RsaConfig {
    pub permutations: usize,
    pub seed: u64,
}

impl Default for RsaConfig {
    fn default() -> Self {
        RsaConfig {
            permutations: 10_000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RsaResult {
    pub rho: f64,
    /// One-sided: share of label permutations correlating at least as well.
    pub p_value: f64,
}

/// Second-order correlation of two RDMs over the same words.
pub fn compare_rdms(a: &Rdm, b: &Rdm, config: &RsaConfig) -> Result<RsaResult> {
    if a.words != b.words {
        return Err(Error::Degenerate("RDMs are over different word lists".into()));
    }
    let n = a.len();
    let ra = fractional_ranks(&a.upper_triangle());
    let rb = fractional_ranks(&b.upper_triangle());
    let rho = pearson(&ra, &rb).ok_or_else(|| Error::UndefinedCorrelation("constant RDM".into()))?;
    if config.permutations == 0 {
        return Ok(RsaResult { rho, p_value: 1.0 });
    }

    // Relabeling rows and columns of `a` permutes its upper-triangle values
    // without changing their multiset, so the ranks can be looked up from a
    // symmetric rank matrix instead of being recomputed.
    let mut rank_matrix = vec![0.0; n * n];
    let mut k = 0;
    for i in 0..n {
        for j in i + 1..n {
            rank_matrix[i * n + j] = ra[k];
            rank_matrix[j * n + i] = ra[k];
            k += 1;
        }
    }
    let mean = (ra.len() as f64 + 1.0) / 2.0;
    let centered_b: Vec<f64> = rb.iter().map(|r| r - mean).collect();
    let sxx: f64 = ra.iter().map(|r| (r - mean).powi(2)).sum();
    let syy: f64 = centered_b.iter().map(|r| r * r).sum();
    let denom = (sxx * syy).sqrt();

    let hits: usize = (0..config.permutations)
        .into_par_iter()
        .map(|draw| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(draw as u64);
            let mut perm: Vec<usize> = (0..n).collect();
            perm.shuffle(&mut rng);
            let mut sxy = 0.0;
            let mut k = 0;
            for i in 0..n {
                let row = &rank_matrix[perm[i] * n..(perm[i] + 1) * n];
                for j in i + 1..n {
                    sxy += (row[perm[j]] - mean) * centered_b[k];
                    k += 1;
                }
            }
            usize::from(sxy / denom >= rho - 1e-12)
        })
        .sum();
    Ok(RsaResult {
        rho,
        p_value: (1 + hits) as f64 / (config.permutations + 1) as f64,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RsaPoint {
    pub month: u32,
    pub rho: f64,
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RsaTrajectory {
    pub family: Family,
    pub points: Vec<RsaPoint>,
}

fn model_rdm(model: &DiachronicModel, words: &[String], month: u32) -> Result<Rdm> {
    let slice = model
        .slice(month)
        .ok_or_else(|| Error::Model(format!("model has no slice for month {month}")))?;
    let vectors = words
        .iter()
        .map(|w| {
            model
                .vocabulary()
                .id(w)
                .map(|id| slice.row(id as usize))
                .ok_or_else(|| model.vocabulary().unknown_word(w))
        })
        .collect::<Result<Vec<_>>>()?;
    build_rdm(words, &vectors)
}

/// RSA between two models at every month both have trained.
pub fn rsa_compare(
    child: &DiachronicModel,
    adult: &DiachronicModel,
    family: Family,
    words: &BTreeSet<String>,
    config: &RsaConfig,
) -> Result<RsaTrajectory> {
    rsa_compare_averaged(&[child], &[adult], family, words, config)
}

/// RSA between two groups of models (e.g. several seeds per speaker); each
/// group's RDM is the elementwise mean over its models.
pub fn rsa_compare_averaged(
    children: &[&DiachronicModel],
    adults: &[&DiachronicModel],
    family: Family,
    words: &BTreeSet<String>,
    config: &RsaConfig,
) -> Result<RsaTrajectory> {
    if children.is_empty() || adults.is_empty() {
        return Err(Error::Model("RSA needs at least one model per side".into()));
    }
    let words: Vec<String> = words.iter().cloned().collect();
    let common: BTreeSet<u32> = children
        .iter()
        .chain(adults)
        .map(|m| m.trained_months().into_iter().collect::<BTreeSet<u32>>())
        .reduce(|a, b| a.intersection(&b).copied().collect())
        .unwrap_or_default();
    if common.is_empty() {
        return Err(Error::Model("the models share no trained month".into()));
    }
    let mut points = Vec::with_capacity(common.len());
    for month in common {
        let group_rdm = |models: &[&DiachronicModel]| {
            let rdms = models
                .iter()
                .map(|m| model_rdm(m, &words, month))
                .collect::<Result<Vec<_>>>()?;
            Rdm::mean(&rdms)
        };
        let a = group_rdm(children)?;
        let b = group_rdm(adults)?;
        let month_config = RsaConfig {
            seed: derive_seed(config.seed, month as u64),
            ..*config
        };
        let r = compare_rdms(&a, &b, &month_config)?;
        points.push(RsaPoint {
            month,
            rho: r.rho,
            p_value: r.p_value,
        });
    }
    Ok(RsaTrajectory { family, points })
}

pub const RSA_HEADER: &str = "month,family,rho,p_value";

pub fn write_rsa_csv<W: Write>(out: &mut W, trajectories: &[RsaTrajectory]) -> std::io::Result<()> {
    writeln!(out, "{RSA_HEADER}")?;
    for t in trajectories {
        for p in &t.points {
            writeln!(out, "{},{},{:?},{:?}", p.month, t.family, p.rho, p.p_value)?;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Neighbor {
    pub word: String,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeighborReport {
    pub word: String,
    pub month: u32,
    pub neighbors: Vec<Neighbor>,
}

/// The `k` candidates closest to `word` by cosine distance, excluding
/// `word` itself. Candidates with a zero vector are skipped.
pub fn nearest_neighbors(
    model: &DiachronicModel,
    word: &str,
    month: u32,
    k: usize,
    candidates: &BTreeSet<String>,
) -> Result<NeighborReport> {
    let query = match model.vector(word, month) {
        Some(v) => v,
        None if model.slice(month).is_none() => {
            return Err(Error::Model(format!("model has no slice for month {month}")))
        }
        None => return Err(model.vocabulary().unknown_word(word)),
    };
    if k >= candidates.len() {
        return Err(Error::Config(format!(
            "k = {k} must be smaller than the analysis vocabulary ({} words)",
            candidates.len()
        )));
    }
    if cosine(query, query).is_none() {
        return Err(Error::ZeroVector {
            word: word.to_string(),
            month,
        });
    }
    let mut scored = Vec::with_capacity(candidates.len());
    for c in candidates {
        if c == word {
            continue;
        }
        let v = model
            .vector(c, month)
            .ok_or_else(|| model.vocabulary().unknown_word(c))?;
        if let Some(cos) = cosine(query, v) {
            scored.push(Neighbor {
                word: c.clone(),
                distance: 1.0 - cos,
            });
        }
    }
    // Candidates iterate in lexicographic order and the sort is stable.
    scored.sort_by(|a, b| a.distance.total_cmp(&b.distance));
    scored.truncate(k);
    Ok(NeighborReport {
        word: word.to_string(),
        month,
        neighbors: scored,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn spearman_fixtures() {
        let x = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(spearman(&x, &x).unwrap(), 1.0);
        assert_eq!(spearman(&x, &[50.0, 4.0, 3.0, 2.0, -1.0]).unwrap(), -1.0);
        let rho = spearman(&x, &[5.0, 6.0, 7.0, 8.0, 7.0]).unwrap();
        // Ranks [1, 2, 3.5, 5, 3.5]: sxy = 8, sxx = 10, syy = 9.5.
        assert!((rho - 8.0 / 95f64.sqrt()).abs() < 1e-15);
        assert!((rho - 0.8207826816681233).abs() < 1e-12);
        assert!(matches!(spearman(&x, &[1.0; 5]), Err(Error::UndefinedCorrelation(_))));
        assert!(spearman(&x[..1], &x[..1]).is_err());
        assert!(spearman(&x, &x[..4]).is_err());
    }

    #[test]
    fn ranks_average_ties() {
        assert_eq!(
            fractional_ranks(&[3.0, 1.0, 3.0, 2.0, 3.0]),
            vec![4.0, 1.0, 4.0, 2.0, 4.0]
        );
    }

    #[test]
    fn spearman_ignores_monotone_transforms() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let x: Vec<f64> = (0..15).map(|_| StandardNormal.sample(&mut rng)).collect();
            let y: Vec<f64> = (0..15).map(|_| StandardNormal.sample(&mut rng)).collect();
            let fx: Vec<f64> = x.iter().map(|v: &f64| v.exp() * 3.0 + 1.0).collect();
            assert_eq!(spearman(&x, &y).unwrap(), spearman(&fx, &y).unwrap());
        }
    }

    fn random_vectors(seed: u64, n: usize, d: usize) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| (0..d).map(|_| StandardNormal.sample(&mut rng)).collect())
            .collect()
    }

    fn words(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("w{i:03}")).collect()
    }

    #[test]
    fn rdm_matches_pairwise_oracle() {
        let v = random_vectors(1, 4, 10);
        let refs: Vec<&[f64]> = v.iter().map(Vec::as_slice).collect();
        let rdm = build_rdm(&words(4), &refs).unwrap();
        for i in 0..4 {
            assert_eq!(rdm.get(i, i), 0.0);
            for j in 0..4 {
                if i != j {
                    let expect = 1.0 - spearman(&v[i], &v[j]).unwrap();
                    assert!((rdm.get(i, j) - expect).abs() < 1e-12);
                    assert_eq!(rdm.get(i, j), rdm.get(j, i));
                }
            }
        }
        assert_eq!(rdm.upper_triangle().len(), 6);
    }

    #[test]
    fn rdm_surfaces_constant_vectors() {
        let v = [
            vec![1.0; 5],
            vec![1.0, 2.0, 3.0, 4.0, 5.0],
            vec![2.0, 1.0, 3.0, 5.0, 4.0],
        ];
        let refs: Vec<&[f64]> = v.iter().map(Vec::as_slice).collect();
        let err = build_rdm(&words(3), &refs).unwrap_err();
        assert!(err.to_string().contains("w000"), "{err}");
        assert!(build_rdm(&words(2), &refs[..2]).is_err());
    }

    #[test]
    fn self_comparison_is_exactly_one() {
        let v = random_vectors(2, 12, 8);
        let refs: Vec<&[f64]> = v.iter().map(Vec::as_slice).collect();
        let rdm = build_rdm(&words(12), &refs).unwrap();
        let r = compare_rdms(
            &rdm,
            &rdm,
            &RsaConfig {
                permutations: 200,
                seed: 1,
            },
        )
        .unwrap();
        assert_eq!(r.rho, 1.0);
        assert!(r.p_value < 0.05);
    }

    #[test]
    fn permutation_shortcut_matches_direct_recomputation() {
        let a = random_vectors(3, 8, 6);
        let b = random_vectors(4, 8, 6);
        let ra: Vec<&[f64]> = a.iter().map(Vec::as_slice).collect();
        let rb: Vec<&[f64]> = b.iter().map(Vec::as_slice).collect();
        let (da, db) = (build_rdm(&words(8), &ra).unwrap(), build_rdm(&words(8), &rb).unwrap());
        let cfg = RsaConfig {
            permutations: 300,
            seed: 11,
        };
        let fast = compare_rdms(&da, &db, &cfg).unwrap();

        let rho = spearman(&da.upper_triangle(), &db.upper_triangle()).unwrap();
        let mut hits = 0;
        for draw in 0..cfg.permutations {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(draw as u64);
            let mut perm: Vec<usize> = (0..8).collect();
            perm.shuffle(&mut rng);
            let mut flat = Vec::new();
            for i in 0..8 {
                for j in i + 1..8 {
                    flat.push(da.get(perm[i], perm[j]));
                }
            }
            if spearman(&flat, &db.upper_triangle()).unwrap() >= rho - 1e-12 {
                hits += 1;
            }
        }
        assert!((fast.rho - rho).abs() < 1e-12);
        assert_eq!(fast.p_value, (1 + hits) as f64 / (cfg.permutations + 1) as f64);
    }
}
