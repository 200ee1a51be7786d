//! Dissimilarity measures, dataset sensitivity, neighboring datasets and
//! per-step local sensitivity of clipped batch gradients.

use std::cmp::Ordering;

#[cfg(feature = "parallel")]
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::TabularDataset;
use crate::error::{check_dims, domain, Error, Result};
use crate::learner::l2_norm;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DissimilarityMeasure {
    Euclidean,
    Manhattan,
    Hamming,
    CosineDistance,
    /// `1 - SSIM`, computed globally over the whole vector with data range 1.
    NegativeSsim,
}

impl std::str::FromStr for DissimilarityMeasure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "euclidean" => Ok(Self::Euclidean),
            "manhattan" => Ok(Self::Manhattan),
            "hamming" => Ok(Self::Hamming),
            "cosine" | "cosine_distance" => Ok(Self::CosineDistance),
            "ssim" | "negative_ssim" => Ok(Self::NegativeSsim),
            other => Err(Error::Config(format!("unknown dissimilarity measure '{other}'"))),
        }
    }
}

/// Whether neighbors differ by removing or by replacing one record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NeighborMode {
    Unbounded,
    Bounded,
}

impl std::str::FromStr for NeighborMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "unbounded" => Ok(Self::Unbounded),
            "bounded" => Ok(Self::Bounded),
            other => Err(Error::Config(format!("unknown neighbor mode '{other}'"))),
        }
    }
}

/// Global SSIM of two vectors with stabilizers `(0.01 L)^2` and `(0.03 L)^2`.
pub fn ssim_global(x: &[f64], y: &[f64], data_range: f64) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut vx, mut vy, mut cov) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        vx += (a - mx) * (a - mx);
        vy += (b - my) * (b - my);
        cov += (a - mx) * (b - my);
    }
    vx /= n;
    vy /= n;
    cov /= n;
    let c1 = (0.01 * data_range).powi(2);
    let c2 = (0.03 * data_range).powi(2);
    ((2.0 * mx * my + c1) * (2.0 * cov + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2))
}

pub fn dissimilarity(x1: &[f64], x2: &[f64], m: DissimilarityMeasure) -> Result<f64> {
    check_dims(x1.len(), x2.len())?;
    let pairs = x1.iter().zip(x2);
    Ok(match m {
        DissimilarityMeasure::Euclidean => pairs.map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt(),
        DissimilarityMeasure::Manhattan => pairs.map(|(a, b)| (a - b).abs()).sum(),
        DissimilarityMeasure::Hamming => pairs.filter(|(a, b)| a != b).count() as f64,
        DissimilarityMeasure::CosineDistance => {
            let (na, nb) = (l2_norm(x1), l2_norm(x2));
            if na == 0.0 || nb == 0.0 {
                return Err(domain("cosine distance is undefined for the zero vector"));
            }
            let dot: f64 = pairs.map(|(a, b)| a * b).sum();
            (1.0 - dot / (na * nb)).max(0.0)
        }
        DissimilarityMeasure::NegativeSsim => {
            if x1.is_empty() {
                return Err(Error::Empty("feature vector"));
            }
            if x1 == x2 {
                0.0
            } else {
                1.0 - ssim_global(x1, x2, 1.0)
            }
        }
    })
}

/// A record of `D` scored by its summed dissimilarity to all other records.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RemovalCandidate {
    pub index: usize,
    pub score: f64,
}

/// A `(record of D, record of U \ D)` pair and its dissimilarity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReplacementCandidate {
    pub index_d: usize,
    pub index_pool: usize,
    pub score: f64,
}

fn row_score(records: &[Vec<f64>], i: usize, m: DissimilarityMeasure) -> Result<f64> {
    let mut total = 0.0;
    for (j, other) in records.iter().enumerate() {
        if j != i {
            total += dissimilarity(&records[i], other, m)?;
        }
    }
    Ok(total)
}

/// Every record of `records` ranked by summed dissimilarity, largest first,
/// ties by smallest index.
pub fn rank_removal_candidates(records: &[Vec<f64>], m: DissimilarityMeasure) -> Result<Vec<RemovalCandidate>> {
    if records.len() < 2 {
        return Err(Error::Config("removal needs at least two records".into()));
    }
    #[cfg(feature = "parallel")]
    let scores: Result<Vec<f64>> = (0..records.len())
        .into_par_iter()
        .map(|i| row_score(records, i, m))
        .collect();
    #[cfg(not(feature = "parallel"))]
    let scores: Result<Vec<f64>> = (0..records.len()).map(|i| row_score(records, i, m)).collect();
    let mut ranked: Vec<RemovalCandidate> = scores?
        .into_iter()
        .enumerate()
        .map(|(index, score)| RemovalCandidate { index, score })
        .collect();
    ranked.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.index.cmp(&b.index)));
    Ok(ranked)
}

/// Index maximizing the summed dissimilarity to the rest of `records`.
pub fn select_removal_candidate(records: &[Vec<f64>], m: DissimilarityMeasure) -> Result<usize> {
    Ok(rank_removal_candidates(records, m)?[0].index)
}

/// All pairs ranked by dissimilarity, largest first, ties by
/// `(index_d, index_pool)`.
pub fn rank_replacement_pairs(
    d: &[Vec<f64>],
    pool: &[Vec<f64>],
    m: DissimilarityMeasure,
) -> Result<Vec<ReplacementCandidate>> {
    if d.is_empty() || pool.is_empty() {
        return Err(Error::Empty("replacement candidates"));
    }
    let mut pairs = Vec::with_capacity(d.len() * pool.len());
    for (i, x) in d.iter().enumerate() {
        for (j, xp) in pool.iter().enumerate() {
            pairs.push(ReplacementCandidate {
                index_d: i,
                index_pool: j,
                score: dissimilarity(x, xp, m)?,
            });
        }
    }
    pairs.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then(a.index_d.cmp(&b.index_d))
            .then(a.index_pool.cmp(&b.index_pool))
    });
    Ok(pairs)
}

/// Most dissimilar `(x in D, x' in U \ D)` pair.
pub fn select_replacement_pair(
    d: &[Vec<f64>],
    pool: &[Vec<f64>],
    m: DissimilarityMeasure,
) -> Result<(usize, usize)> {
    if d.is_empty() || pool.is_empty() {
        return Err(Error::Empty("replacement candidates"));
    }
    let mut best = (0, 0, f64::NEG_INFINITY);
    for (i, x) in d.iter().enumerate() {
        for (j, xp) in pool.iter().enumerate() {
            let s = dissimilarity(x, xp, m)?;
            if s.total_cmp(&best.2) == Ordering::Greater {
                best = (i, j, s);
            }
        }
    }
    Ok((best.0, best.1))
}

/// Which record to remove, or which to replace by which pool record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selection {
    Remove { index: usize },
    Replace { index: usize, replacement: usize },
}

impl Selection {
    pub fn removed_index(&self) -> usize {
        match *self {
            Selection::Remove { index } | Selection::Replace { index, .. } => index,
        }
    }
}

/// Most dissimilar neighbor selection for `mode`.
pub fn select_neighbor(
    d: &TabularDataset,
    pool: Option<&TabularDataset>,
    mode: NeighborMode,
    m: DissimilarityMeasure,
) -> Result<Selection> {
    match mode {
        NeighborMode::Unbounded => Ok(Selection::Remove {
            index: select_removal_candidate(&d.features, m)?,
        }),
        NeighborMode::Bounded => {
            let pool = pool.ok_or(Error::Empty("replacement pool"))?;
            let (index, replacement) = select_replacement_pair(&d.features, &pool.features, m)?;
            Ok(Selection::Replace { index, replacement })
        }
    }
}

/// Builds `D'` from `D`. Unbounded removes the selected record; bounded
/// replaces it in place by the selected pool record.
pub fn neighboring_dataset(
    d: &TabularDataset,
    mode: NeighborMode,
    selection: Selection,
    pool: Option<&TabularDataset>,
) -> Result<TabularDataset> {
    match (mode, selection) {
        (NeighborMode::Unbounded, Selection::Remove { index }) => {
            if index >= d.len() {
                return Err(Error::Config(format!("removal index {index} out of range")));
            }
            let keep: Vec<usize> = (0..d.len()).filter(|&i| i != index).collect();
            Ok(d.select(&keep))
        }
        (NeighborMode::Bounded, Selection::Replace { index, replacement }) => {
            let pool = pool.ok_or(Error::Empty("replacement pool"))?;
            if index >= d.len() || replacement >= pool.len() {
                return Err(Error::Config("replacement selection out of range".into()));
            }
            check_dims(d.n_features(), pool.n_features())?;
            let mut out = d.clone();
            out.features[index] = pool.features[replacement].clone();
            out.labels[index] = pool.labels[replacement].clone();
            Ok(out)
        }
        _ => Err(Error::Config(format!(
            "selection {selection:?} does not match neighbor mode {mode:?}"
        ))),
    }
}

/// Local sensitivity of the clipped batch gradient at one step.
///
/// Bounded: `n ||g(D') - g(D)||`; unbounded: `||(n-1) g(D') - n g(D)||`,
/// with `n = |D|` and `g` the averaged clipped gradients.
pub fn local_sensitivity_step(g_d: &[f64], g_d_prime: &[f64], n: usize, mode: NeighborMode) -> Result<f64> {
    check_dims(g_d.len(), g_d_prime.len())?;
    let n = n as f64;
    let scale_prime = match mode {
        NeighborMode::Bounded => n,
        NeighborMode::Unbounded => n - 1.0,
    };
    Ok(g_d
        .iter()
        .zip(g_d_prime)
        .map(|(a, b)| {
            let v = scale_prime * b - n * a;
            v * v
        })
        .sum::<f64>()
        .sqrt())
}

/// Approximation from the clipped gradients of the selected records:
/// `||g(x)||` (unbounded) or `||g(x) - g(x')||` (bounded).
pub fn approx_local_sensitivity(
    clipped_grad_xhat: &[f64],
    clipped_grad_xhat_prime: Option<&[f64]>,
    mode: NeighborMode,
) -> Result<f64> {
    match mode {
        NeighborMode::Unbounded => Ok(l2_norm(clipped_grad_xhat)),
        NeighborMode::Bounded => {
            let other = clipped_grad_xhat_prime
                .ok_or_else(|| Error::Config("bounded approximation needs the replacement gradient".into()))?;
            check_dims(clipped_grad_xhat.len(), other.len())?;
            Ok(clipped_grad_xhat
                .iter()
                .zip(other)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt())
        }
    }
}
