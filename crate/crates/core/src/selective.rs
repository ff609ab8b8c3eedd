//! Selective test for whether one variable separates two estimated clusters.
//!
//! Testing a difference in cluster means with a standard two-sample test is
//! invalid when the clusters were estimated from the same data: the
//! clustering already looked at the variable, so even pure noise yields
//! small p-values. The test here conditions on the clustering outcome. It
//! replaces the variable's component along the cluster-mean contrast with a
//! Gaussian draw, re-runs the clusterer on the perturbed data, and keeps
//! only draws under which the two clusters survive intact. The p-value is
//! the conditional probability of a mean difference at least as large as
//! observed, estimated by importance sampling so that preserved draws are
//! common even when the observed difference is far in the tail.

use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

use crate::clustering::{Clusterer, ClusteringError, Partition};
use crate::dataset::DataMatrix;
use crate::seeding::indexed_rng;

#[derive(Debug, Error)]
pub enum SelectiveError {
    #[error("cluster id {id} is outside 1..={k}")]
    ClusterOutOfRange { id: usize, k: usize },
    #[error("the two cluster ids must differ")]
    SameCluster,
    #[error("column index {g} is outside 0..{p}")]
    ColumnOutOfRange { g: usize, p: usize },
    #[error("variance estimate is not positive and finite: {value}")]
    DegenerateVariance { value: f64 },
    #[error("need at least 1 Monte Carlo sample")]
    ZeroSamples,
    #[error("partition is over {expected} rows, data has {found}")]
    RowCountMismatch { expected: usize, found: usize },
    #[error("t-test needs at least 2 observations in each cluster, got {n} in total")]
    TooFewForTTest { n: usize },
    #[error("cannot combine an empty list of p-values")]
    NoPValues,
    #[error("p-value {value} is outside (0, 1]")]
    InvalidPValue { value: f64 },
    #[error(transparent)]
    Clustering(#[from] ClusteringError),
}

/// The four tests the toolkit can run on a cluster pair and variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Direct,
    Merged,
    Dip,
    TTest,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Direct, Method::Merged, Method::Dip, Method::TTest];

    pub fn tag(self) -> &'static str {
        match self {
            Method::Direct => "direct",
            Method::Merged => "merged",
            Method::Dip => "dip",
            Method::TTest => "ttest",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "direct" => Ok(Method::Direct),
            "merged" => Ok(Method::Merged),
            "dip" => Ok(Method::Dip),
            "ttest" => Ok(Method::TTest),
            other => Err(format!(
                "unknown method {other:?}, expected direct, merged, dip or ttest"
            )),
        }
    }
}

/// Outcome of one test on one cluster pair and variable.
#[derive(Debug, Clone, Serialize)]
pub struct PValueResult {
    pub p: f64,
    /// The test's own statistic: a mean difference for the selective tests,
    /// a t-statistic for the t-test, a dip statistic for the dip test.
    pub statistic: f64,
    pub method: Method,
    pub n_samples: usize,
    pub n_preserved: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma_sq: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
    /// For the merged test, the per-adjacent-pair p-values that were
    /// combined; empty otherwise.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub pair_p_values: Vec<f64>,
}

/// The contrast whose inner product with a column is the difference of
/// cluster means: 1/|C_k| on cluster k, -1/|C_l| on cluster l, 0 elsewhere.
#[derive(Debug, Clone)]
pub struct ContrastVector {
    pub eta: Vec<f64>,
    pub k: usize,
    pub l: usize,
    pub norm_sq: f64,
}

pub fn contrast_vector(
    part: &Partition,
    k: usize,
    l: usize,
) -> Result<ContrastVector, SelectiveError> {
    for id in [k, l] {
        if id == 0 || id > part.k {
            return Err(SelectiveError::ClusterOutOfRange { id, k: part.k });
        }
    }
    if k == l {
        return Err(SelectiveError::SameCluster);
    }
    let mut eta = vec![0.0; part.n()];
    let nk = part.members_of(k).len() as f64;
    let nl = part.members_of(l).len() as f64;
    for &row in part.members_of(k) {
        eta[row] = 1.0 / nk;
    }
    for &row in part.members_of(l) {
        eta[row] = -1.0 / nl;
    }
    Ok(ContrastVector {
        eta,
        k,
        l,
        norm_sq: 1.0 / nk + 1.0 / nl,
    })
}

/// Difference of cluster means of `col`, as the inner product with `eta`.
pub fn test_statistic(col: &[f64], eta: &ContrastVector) -> f64 {
    col.iter().zip(&eta.eta).map(|(x, e)| x * e).sum()
}

/// Replaces the component of `col` along `eta` so its statistic becomes
/// `omega`; at `omega` equal to the observed statistic the column is
/// unchanged up to rounding.
pub fn perturb_column(col: &[f64], eta: &ContrastVector, omega: f64) -> Vec<f64> {
    let observed = test_statistic(col, eta);
    let mut out = col.to_vec();
    for (x, e) in out.iter_mut().zip(&eta.eta) {
        *x += e * (omega - observed) / eta.norm_sq;
    }
    out
}

/// Pooled variance of `col` over the union of clusters `k` and `l`, around
/// the union's grand mean, with an n - 1 denominator.
pub fn variance_pair(col: &[f64], part: &Partition, k: usize, l: usize) -> f64 {
    let rows = part
        .members_of(k)
        .iter()
        .chain(part.members_of(l))
        .copied();
    variance_of(rows.map(|r| col[r]))
}

/// Sample variance of the whole column, with an n - 1 denominator.
pub fn variance_all(col: &[f64]) -> f64 {
    variance_of(col.iter().copied())
}

fn variance_of(values: impl Iterator<Item = f64>) -> f64 {
    let values: Vec<f64> = values.collect();
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
}

/// How the null variance of the tested variable is estimated.
#[derive(Debug, Clone, Copy)]
pub enum VarianceRule {
    /// Pooled over the two clusters around their grand mean. Includes the
    /// between-cluster spread, so it is conservative when the clusters are
    /// truly separated and close to exact under the null.
    PairPooled,
    /// Sample variance of the full column. More conservative still: spread
    /// from clusters outside the tested pair also inflates it.
    AllObservations,
    /// A caller-supplied value, for known-variance checks and for sharing
    /// one estimate across the merged test's pairs.
    Fixed(f64),
}

/// Monte Carlo selective p-value for the separation of clusters `k` and `l`
/// of `part` on column `g`, conditioning on `clusterer` preserving both.
///
/// Perturbation draws come from a Gaussian centered at the observed
/// statistic and are importance-reweighted toward the null; the estimate
/// adds one pseudo-draw at the observed statistic, so p is at least
/// 1/(n_samples + 1) and at most 1. Identical arguments give bit-identical
/// results regardless of thread count.
#[allow(clippy::too_many_arguments)]
pub fn selective_p_value<C: Clusterer>(
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
    if g >= m.p() {
        return Err(SelectiveError::ColumnOutOfRange { g, p: m.p() });
    }
    if part.n() != m.n() {
        return Err(SelectiveError::RowCountMismatch {
            expected: part.n(),
            found: m.n(),
        });
    }
    if n_samples == 0 {
        return Err(SelectiveError::ZeroSamples);
    }
    let eta = contrast_vector(part, k, l)?;
    let col = m.column(g);
    let observed = test_statistic(col, &eta);
    let sigma_sq = match rule {
        VarianceRule::PairPooled => variance_pair(col, part, k, l),
        VarianceRule::AllObservations => variance_all(col),
        VarianceRule::Fixed(v) => v,
    };
    if !(sigma_sq.is_finite() && sigma_sq > 0.0) {
        return Err(SelectiveError::DegenerateVariance { value: sigma_sq });
    }
    // The statistic's null scale: sd of eta' x under x_g ~ N(mu, sigma^2 I)
    // with equal cluster means.
    let scale = (sigma_sq * eta.norm_sq).sqrt();
    let proposal = Normal::new(observed, scale).expect("scale is positive and finite");

    // Only entries in the two clusters move under perturbation; the scratch
    // matrix is cloned once per thread and patched per draw.
    let base: Vec<f64> = {
        let mut b = col.to_vec();
        for (x, e) in b.iter_mut().zip(&eta.eta) {
            *x -= e * observed / eta.norm_sq;
        }
        b
    };
    let coef_k = eta.eta[part.members_of(k)[0]] / eta.norm_sq;
    let coef_l = eta.eta[part.members_of(l)[0]] / eta.norm_sq;

    let samples: Result<Vec<(f64, bool, bool)>, SelectiveError> = (0..n_samples)
        .into_par_iter()
        .map_init(
            || m.clone(),
            |scratch, i| {
                let mut rng = indexed_rng(seed, i as u64);
                let omega = proposal.sample(&mut rng);
                // Density ratio null-over-proposal, in log space.
                let log_weight = (observed * observed - 2.0 * observed * omega)
                    / (2.0 * scale * scale);
                let target = scratch.column_mut(g);
                for &row in part.members_of(k) {
                    target[row] = base[row] + coef_k * omega;
                }
                for &row in part.members_of(l) {
                    target[row] = base[row] + coef_l * omega;
                }
                let preserved = clusterer.preserves(scratch, part, k, l)?;
                Ok((log_weight, preserved, omega.abs() >= observed.abs()))
            },
        )
        .collect();
    let samples = samples?;

    let preserved_weights: Vec<f64> = samples
        .iter()
        .filter(|(_, preserved, _)| *preserved)
        .map(|(w, _, _)| *w)
        .collect();
    let exceeding_weights: Vec<f64> = samples
        .iter()
        .filter(|(_, preserved, exceeds)| *preserved && *exceeds)
        .map(|(w, _, _)| *w)
        .collect();
    let n_preserved = preserved_weights.len();

    let (p, warning) = if n_preserved == 0 {
        (
            1.0,
            Some(format!(
                "no preserved samples out of {n_samples}; p-value set to 1"
            )),
        )
    } else {
        let ratio = (log_sum_exp(&exceeding_weights) - log_sum_exp(&preserved_weights)).exp();
        (
            (n_samples as f64 * ratio + 1.0) / (n_samples as f64 + 1.0),
            None,
        )
    };
    Ok(PValueResult {
        p,
        statistic: observed,
        method: Method::Direct,
        n_samples,
        n_preserved,
        sigma_sq: Some(sigma_sq),
        warning,
        pair_p_values: Vec::new(),
    })
}

/// log(sum(exp(v))) without overflow; empty input gives -inf.
pub(crate) fn log_sum_exp(v: &[f64]) -> f64 {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    max + v.iter().map(|&x| (x - max).exp()).sum::<f64>().ln()
}

/// Welch two-sample t-test of the same mean difference, ignoring that the
/// clusters were estimated. Kept as the invalid baseline.
pub fn t_test_p_value(
    col: &[f64],
    part: &Partition,
    k: usize,
    l: usize,
) -> Result<PValueResult, SelectiveError> {
    for id in [k, l] {
        if id == 0 || id > part.k {
            return Err(SelectiveError::ClusterOutOfRange { id, k: part.k });
        }
    }
    if k == l {
        return Err(SelectiveError::SameCluster);
    }
    let xs: Vec<f64> = part.members_of(k).iter().map(|&r| col[r]).collect();
    let ys: Vec<f64> = part.members_of(l).iter().map(|&r| col[r]).collect();
    let (nk, nl) = (xs.len(), ys.len());
    if nk < 2 || nl < 2 {
        return Err(SelectiveError::TooFewForTTest { n: nk + nl });
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (mk, ml) = (mean(&xs), mean(&ys));
    let var = |v: &[f64], m: f64| {
        v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64
    };
    let (ak, al) = (var(&xs, mk) / nk as f64, var(&ys, ml) / nl as f64);
    let se2 = ak + al;
    if !(se2.is_finite() && se2 > 0.0) {
        return Err(SelectiveError::DegenerateVariance { value: se2 });
    }
    let t = (mk - ml) / se2.sqrt();
    let df = se2.powi(2) / (ak.powi(2) / (nk - 1) as f64 + al.powi(2) / (nl - 1) as f64);
    let dist = StudentsT::new(0.0, 1.0, df).expect("df is at least 1");
    let p = 2.0 * dist.cdf(-t.abs());
    Ok(PValueResult {
        p,
        statistic: t,
        method: Method::TTest,
        n_samples: 0,
        n_preserved: 0,
        sigma_sq: None,
        warning: None,
        pair_p_values: Vec::new(),
    })
}
