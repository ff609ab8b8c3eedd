//! Merged selective test for cluster pairs separated by intervening
//! clusters.
//!
//! When other clusters sit between the tested pair on the variable's axis,
//! conditioning on the whole clustering surviving a perturbation becomes so
//! restrictive that the direct test loses most of its power. The merged
//! test instead walks the chain of clusters between the two endpoints in
//! mean order, runs the direct test on each adjacent pair, and combines the
//! per-pair p-values with a harmonic-mean rule that is valid under
//! arbitrary dependence.

use serde::Serialize;

use crate::clustering::{Clusterer, Partition};
use crate::dataset::DataMatrix;
use crate::seeding::derive_seed;
use crate::selective::{
    contrast_vector, selective_p_value, test_statistic, variance_all, Method, PValueResult,
    SelectiveError, VarianceRule,
};

/// The clusters whose means on one variable lie between (inclusively) the
/// means of two endpoint clusters.
#[derive(Debug, Clone, Serialize)]
pub struct BetweenSet {
    /// Cluster ids in ascending mean order; the first and last are the
    /// endpoints (ties against an endpoint place the low endpoint first and
    /// the high endpoint last).
    pub ordered_clusters: Vec<usize>,
    /// Union of the member rows of all clusters on the path, ascending.
    pub rows: Vec<usize>,
    pub g: usize,
    pub k: usize,
    pub l: usize,
}

impl BetweenSet {
    /// Consecutive cluster pairs along the path.
    pub fn adjacent_pairs(&self) -> Vec<(usize, usize)> {
        self.ordered_clusters
            .windows(2)
            .map(|w| (w[0], w[1]))
            .collect()
    }
}

/// Clusters of `part` whose mean of column `g` falls in the closed interval
/// spanned by the means of clusters `k` and `l`.
pub fn between_set(
    m: &DataMatrix,
    g: usize,
    part: &Partition,
    k: usize,
    l: usize,
) -> Result<BetweenSet, SelectiveError> {
    if g >= m.p() {
        return Err(SelectiveError::ColumnOutOfRange { g, p: m.p() });
    }
    if part.n() != m.n() {
        return Err(SelectiveError::RowCountMismatch {
            expected: part.n(),
            found: m.n(),
        });
    }
    // Validates ids and k != l.
    contrast_vector(part, k, l)?;
    let col = m.column(g);
    let mean_of = |id: usize| {
        let rows = part.members_of(id);
        rows.iter().map(|&r| col[r]).sum::<f64>() / rows.len() as f64
    };
    let (mk, ml) = (mean_of(k), mean_of(l));
    let (lo_end, hi_end) = if mk < ml || (mk == ml && k < l) {
        (k, l)
    } else {
        (l, k)
    };
    let (lo, hi) = (mk.min(ml), mk.max(ml));
    // Sort key breaks mean ties so the endpoints bracket the path.
    let tier = |id: usize| {
        if id == lo_end {
            0
        } else if id == hi_end {
            2
        } else {
            1
        }
    };
    let mut ordered: Vec<(f64, u8, usize)> = (1..=part.k)
        .filter_map(|id| {
            let mean = mean_of(id);
            (id == k || id == l || (lo <= mean && mean <= hi)).then_some((mean, tier(id), id))
        })
        .collect();
    ordered.sort_by(|a, b| {
        a.0.partial_cmp(&b.0)
            .expect("cluster means are finite")
            .then(a.1.cmp(&b.1))
            .then(a.2.cmp(&b.2))
    });
    let ordered_clusters: Vec<usize> = ordered.iter().map(|&(_, _, id)| id).collect();
    let mut rows: Vec<usize> = ordered_clusters
        .iter()
        .flat_map(|&id| part.members_of(id).iter().copied())
        .collect();
    rows.sort_unstable();
    Ok(BetweenSet {
        ordered_clusters,
        rows,
        g,
        k,
        l,
    })
}

/// Pooled variance of column `g` over all rows on the path, around the
/// path's grand mean, with an n - 1 denominator. Generalizes the pair
/// variance: with no intervening clusters the two agree exactly.
pub fn variance_path(col: &[f64], between: &BetweenSet) -> f64 {
    let n = between.rows.len() as f64;
    let mean = between.rows.iter().map(|&r| col[r]).sum::<f64>() / n;
    between
        .rows
        .iter()
        .map(|&r| (col[r] - mean).powi(2))
        .sum::<f64>()
        / (n - 1.0)
}

/// Harmonic-mean combination of dependent p-values: with t of them,
/// e * ln(t) * t / sum(1/p_i), clipped to 1. A single p-value passes
/// through unchanged.
pub fn harmonic_merge(ps: &[f64]) -> Result<f64, SelectiveError> {
    if ps.is_empty() {
        return Err(SelectiveError::NoPValues);
    }
    if let Some(&bad) = ps.iter().find(|&&p| !(p > 0.0 && p <= 1.0)) {
        return Err(SelectiveError::InvalidPValue { value: bad });
    }
    if ps.len() == 1 {
        return Ok(ps[0]);
    }
    let t = ps.len() as f64;
    let harmonic = t / ps.iter().map(|p| 1.0 / p).sum::<f64>();
    Ok((std::f64::consts::E * t.ln() * harmonic).min(1.0))
}

/// Merged selective p-value for the separation of clusters `k` and `l` on
/// column `g`: direct tests on each adjacent pair along the between-set
/// path, sharing one variance estimate, combined by [`harmonic_merge`].
///
/// With no intervening clusters this reduces exactly to the direct test of
/// the pair (in ascending mean orientation) with the same seed.
#[allow(clippy::too_many_arguments)]
pub fn merged_selective_p_value<C: Clusterer>(
    m: &DataMatrix,
    g: usize,
    part: &Partition,
    k: usize,
    l: usize,
    clusterer: &C,
    rule: VarianceRule,
    n_samples: usize,
    seed: u64,
) -> Result<PValueResult, SelectiveError> {
    let between = between_set(m, g, part, k, l)?;
    let col = m.column(g);
    let sigma_sq = match rule {
        VarianceRule::PairPooled => variance_path(col, &between),
        VarianceRule::AllObservations => variance_all(col),
        VarianceRule::Fixed(v) => v,
    };
    if !(sigma_sq.is_finite() && sigma_sq > 0.0) {
        return Err(SelectiveError::DegenerateVariance { value: sigma_sq });
    }
    let pairs = between.adjacent_pairs();
    let mut pair_p_values = Vec::with_capacity(pairs.len());
    let mut n_preserved = 0;
    let mut warnings: Vec<String> = Vec::new();
    for (j, &(a, b)) in pairs.iter().enumerate() {
        let pair_seed = if pairs.len() == 1 {
            seed
        } else {
            derive_seed(seed, 1 + j as u64)
        };
        let r = selective_p_value(
            m,
            g,
            part,
            a,
            b,
            clusterer,
            VarianceRule::Fixed(sigma_sq),
            n_samples,
            pair_seed,
        )?;
        n_preserved += r.n_preserved;
        if let Some(w) = r.warning {
            warnings.push(format!("pair {a}-{b}: {w}"));
        }
        pair_p_values.push(r.p);
    }
    let p = harmonic_merge(&pair_p_values)?;
    let statistic = test_statistic(col, &contrast_vector(part, k, l)?);
    Ok(PValueResult {
        p,
        statistic,
        method: Method::Merged,
        n_samples: n_samples * pairs.len(),
        n_preserved,
        sigma_sq: Some(sigma_sq),
        warning: if warnings.is_empty() {
            None
        } else {
            Some(warnings.join("; "))
        },
        pair_p_values,
    })
}
