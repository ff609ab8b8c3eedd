//! Hartigan dip test of multimodality, used as a clustering-free check on
//! whether one variable is bimodal across two clusters.
//!
//! The dip statistic of a sample is the smallest sup-norm distance between
//! its empirical CDF and any unimodal CDF. Unimodal means convex up to the
//! mode and concave after it, with an atom allowed at the mode. The p-value
//! compares the observed dip against dips of Uniform(0,1) samples of the
//! same size, the least favorable unimodal null.
//!
//! The statistic is computed exactly. A mode strictly inside a gap between
//! data points is never better than an atom at the gap's right endpoint
//! (the gap portion of the fit can be replaced by a chord without raising
//! the deviation), so only m + 2 mode placements need checking: before all
//! points, an atom at each of the m distinct points, after all points. Per
//! placement the smallest feasible distance is half the largest deviation
//! of the ECDF from a convex hull fit on each side of the mode. Moving the
//! mode rightward tightens the convex side and loosens the concave side
//! monotonically, so the best placement is found by binary search rather
//! than a full scan.

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::clustering::Partition;
use crate::dataset::DataMatrix;
use crate::merging::between_set;
use crate::seeding::indexed_rng;
use crate::selective::SelectiveError;

#[derive(Debug, Error)]
pub enum DipError {
    #[error("dip test needs at least 2 values, got {n}")]
    TooFewValues { n: usize },
    #[error("need at least 1 null replicate")]
    ZeroReplicates,
    #[error("values contain NaN or infinity")]
    NonFinite,
    #[error(transparent)]
    Selective(#[from] SelectiveError),
}

/// Dip statistic with the modal interval it was achieved on. The interval
/// endpoints are sample values; a point interval means the best unimodal
/// fit puts an atom there.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct DipStat {
    pub dip: f64,
    pub modal_interval: (f64, f64),
}

/// Dip test outcome on one set of values.
#[derive(Debug, Clone, Serialize)]
pub struct DipResult {
    pub dip: f64,
    pub modal_interval: (f64, f64),
    pub n: usize,
    pub n_replicates: usize,
    pub p: f64,
}

/// Distinct sorted values with the ECDF's value just after each point
/// (`upper`) and just before it (`lower`).
struct Ecdf {
    u: Vec<f64>,
    upper: Vec<f64>,
    lower: Vec<f64>,
}

impl Ecdf {
    fn from_sorted(x: &[f64]) -> Ecdf {
        let n = x.len() as f64;
        let mut u = Vec::new();
        let mut upper = Vec::new();
        let mut lower = Vec::new();
        let mut seen = 0usize;
        let mut i = 0;
        while i < x.len() {
            let v = x[i];
            let mut j = i;
            while j < x.len() && x[j] == v {
                j += 1;
            }
            lower.push(seen as f64 / n);
            seen = j;
            upper.push(seen as f64 / n);
            u.push(v);
            i = j;
        }
        Ecdf { u, upper, lower }
    }

    /// The ECDF of the negated sample: x -> -x reversed, y -> 1 - y. Maps
    /// the concave side of a fit onto the convex machinery.
    fn reflected(&self) -> Ecdf {
        let m = self.u.len();
        Ecdf {
            u: (0..m).map(|j| -self.u[m - 1 - j]).collect(),
            upper: (0..m).map(|j| 1.0 - self.lower[m - 1 - j]).collect(),
            lower: (0..m).map(|j| 1.0 - self.upper[m - 1 - j]).collect(),
        }
    }
}

/// Largest deviation forcing the distance on a convex-side fit over the
/// first `t` ECDF points.
///
/// A convex function fitting within distance d must stay below the points
/// (u_i, lower_i + d) and above (u_i, upper_i - d); that is possible
/// exactly when 2d reaches the largest gap between `upper` and the lower
/// convex hull of the `lower` points. With `atom` set, the last point is
/// the mode itself and only its pre-jump value constrains this side, so
/// its target is `lower` instead of `upper`.
fn convex_side_dev(e: &Ecdf, t: usize, atom: bool, hull: &mut Vec<usize>) -> f64 {
    if t == 0 {
        return 0.0;
    }
    let (u, upper, lower) = (&e.u, &e.upper, &e.lower);
    hull.clear();
    for i in 0..t {
        while hull.len() >= 2 {
            let (a, b) = (hull[hull.len() - 2], hull[hull.len() - 1]);
            let cross = (u[b] - u[a]) * (lower[i] - lower[a])
                - (lower[b] - lower[a]) * (u[i] - u[a]);
            if cross <= 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(i);
    }
    let mut dev = 0.0f64;
    let mut s = 0;
    for i in 0..t {
        if s + 1 < hull.len() && i >= hull[s + 1] {
            s += 1;
        }
        let g = if s + 1 < hull.len() {
            let (a, b) = (hull[s], hull[s + 1]);
            lower[a] + (lower[b] - lower[a]) * (u[i] - u[a]) / (u[b] - u[a])
        } else {
            lower[hull[s]]
        };
        let target = if atom && i == t - 1 { lower[i] } else { upper[i] };
        if target - g > dev {
            dev = target - g;
        }
    }
    dev
}

/// Reusable buffers for repeated dip evaluations.
#[derive(Default)]
struct DipScratch {
    sample: Vec<f64>,
    hull: Vec<usize>,
}

/// Dip of an already sorted sample.
///
/// Mode placements are indexed 0..=m+1 over m distinct values: 0 puts the
/// mode before all points, j in 1..=m an atom at point j, m+1 after all
/// points. The convex-side deviation is nondecreasing and the concave-side
/// deviation nonincreasing along this sequence, so the minimax placement
/// sits where they cross.
fn dip_of_sorted(x: &[f64], hull: &mut Vec<usize>) -> DipStat {
    let e = Ecdf::from_sorted(x);
    let m = e.u.len();
    if m == 1 {
        return DipStat {
            dip: 0.0,
            modal_interval: (e.u[0], e.u[0]),
        };
    }
    let r = e.reflected();
    let conv = |idx: usize, hull: &mut Vec<usize>| -> f64 {
        match idx {
            0 => 0.0,
            j if j <= m => convex_side_dev(&e, j, true, hull),
            _ => convex_side_dev(&e, m, false, hull),
        }
    };
    let conc = |idx: usize, hull: &mut Vec<usize>| -> f64 {
        match idx {
            0 => convex_side_dev(&r, m, false, hull),
            j if j <= m => convex_side_dev(&r, m + 1 - j, true, hull),
            _ => 0.0,
        }
    };
    // First placement where the convex side dominates; the minimum of the
    // max curve is there or one step earlier.
    let (mut lo, mut hi) = (0usize, m + 1);
    while lo < hi {
        let mid = (lo + hi) / 2;
        if conv(mid, hull) >= conc(mid, hull) {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    let mut best = (f64::INFINITY, 0usize);
    for idx in [lo.saturating_sub(1), lo] {
        let v = conv(idx, hull).max(conc(idx, hull));
        if v < best.0 {
            best = (v, idx);
        }
    }
    let (value, idx) = best;
    let at = idx.clamp(1, m) - 1;
    DipStat {
        dip: value / 2.0,
        modal_interval: (e.u[at], e.u[at]),
    }
}

/// Dip statistic of a sample. A sample with a single distinct value has
/// dip 0; any sample with at least two has dip of at least 1/(2n).
pub fn dip_statistic(values: &[f64]) -> Result<DipStat, DipError> {
    if values.len() < 2 {
        return Err(DipError::TooFewValues { n: values.len() });
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(DipError::NonFinite);
    }
    let mut x = values.to_vec();
    x.sort_unstable_by(f64::total_cmp);
    Ok(dip_of_sorted(&x, &mut Vec::new()))
}

/// Monte Carlo p-value of an observed dip against Uniform(0,1) samples of
/// size `n`: (1 + #{null dip >= observed}) / (n_replicates + 1).
pub fn dip_p_value(
    dip_obs: f64,
    n: usize,
    n_replicates: usize,
    seed: u64,
) -> Result<f64, DipError> {
    if n < 2 {
        return Err(DipError::TooFewValues { n });
    }
    if n_replicates == 0 {
        return Err(DipError::ZeroReplicates);
    }
    if !dip_obs.is_finite() {
        return Err(DipError::NonFinite);
    }
    let exceed: usize = (0..n_replicates)
        .into_par_iter()
        .map_init(DipScratch::default, |scratch, i| {
            let mut rng = indexed_rng(seed, i as u64);
            scratch.sample.clear();
            scratch.sample.extend((0..n).map(|_| rng.gen::<f64>()));
            scratch.sample.sort_unstable_by(f64::total_cmp);
            let d = dip_of_sorted(&scratch.sample, &mut scratch.hull).dip;
            usize::from(d >= dip_obs)
        })
        .sum();
    Ok((1 + exceed) as f64 / (n_replicates + 1) as f64)
}

/// Dip test of `values`: statistic plus its Uniform(0,1) calibrated
/// p-value.
pub fn dip_test(values: &[f64], n_replicates: usize, seed: u64) -> Result<DipResult, DipError> {
    let stat = dip_statistic(values)?;
    let p = dip_p_value(stat.dip, values.len(), n_replicates, seed)?;
    Ok(DipResult {
        dip: stat.dip,
        modal_interval: stat.modal_interval,
        n: values.len(),
        n_replicates,
        p,
    })
}

/// Dip test of column `g` restricted to the rows of the clusters lying
/// between clusters `k` and `l` in mean order (inclusive).
///
/// If the variable separates the pair, those rows hold two well-separated
/// groups and the dip is large; clusters outside the span are excluded so
/// their modes cannot mask the gap under test.
pub fn dip_test_between(
    m: &DataMatrix,
    g: usize,
    part: &Partition,
    k: usize,
    l: usize,
    n_replicates: usize,
    seed: u64,
) -> Result<DipResult, DipError> {
    let between = between_set(m, g, part, k, l)?;
    let col = m.column(g);
    let values: Vec<f64> = between.rows.iter().map(|&r| col[r]).collect();
    dip_test(&values, n_replicates, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};

    fn dip(values: &[f64]) -> f64 {
        dip_statistic(values).unwrap().dip
    }

    #[test]
    fn two_distinct_points() {
        assert_abs_diff_eq!(dip(&[0.0, 1.0]), 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(dip(&[-7.0, 3.0]), 0.25, epsilon = 1e-15);
    }

    #[test]
    fn two_one_split() {
        // {0, 0, 1}: an atom at 0 fits everything but the last sixth.
        assert_abs_diff_eq!(dip(&[0.0, 0.0, 1.0]), 1.0 / 6.0, epsilon = 1e-15);
        assert_abs_diff_eq!(dip(&[1.0, 0.0, 0.0]), 1.0 / 6.0, epsilon = 1e-15);
    }

    #[test]
    fn wide_pairs_and_tight_clumps() {
        // {0, 1, 10, 11}: best fit puts the mode atom at 1 with value
        // 0.275 and equal chord slopes on both flanks, leaving 0.45.
        assert_abs_diff_eq!(dip(&[0.0, 1.0, 10.0, 11.0]), 0.225, epsilon = 1e-15);
        // Two tight triples: the cross-gap chord from (0, 0) to (5, 1/2)
        // passes 0.002 above zero at x = 0.02, leaving a 0.498 deviation.
        let tri = [0.0, 0.01, 0.02, 5.0, 5.01, 5.02];
        assert_abs_diff_eq!(dip(&tri), 0.249, epsilon = 1e-12);
    }

    #[test]
    fn evenly_spaced_grid_attains_lower_bound() {
        for n in [2usize, 3, 5, 10, 57] {
            let grid: Vec<f64> = (0..n).map(|i| i as f64).collect();
            assert_abs_diff_eq!(dip(&grid), 1.0 / (2.0 * n as f64), epsilon = 1e-12);
        }
    }

    #[test]
    fn balanced_two_atoms_attain_upper_bound() {
        for half in [1usize, 4, 25] {
            let mut v = vec![0.0; half];
            v.extend(vec![1.0; half]);
            assert_abs_diff_eq!(dip(&v), 0.25, epsilon = 1e-15);
        }
    }

    #[test]
    fn constant_sample_has_zero_dip() {
        let stat = dip_statistic(&[3.0, 3.0, 3.0]).unwrap();
        assert_eq!(stat.dip, 0.0);
        assert_eq!(stat.modal_interval, (3.0, 3.0));
    }

    #[test]
    fn affine_changes_leave_dip_unchanged() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(205);
        for _ in 0..50 {
            let v: Vec<f64> = (0..40).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let d = dip(&v);
            let scaled: Vec<f64> = v.iter().map(|x| 2.5 * x - 7.0).collect();
            let flipped: Vec<f64> = v.iter().map(|x| -x).collect();
            // Rescaling can flip hull pop decisions on near-collinear
            // points, so the match is tight but not bitwise.
            assert_abs_diff_eq!(dip(&scaled), d, epsilon = 1e-12);
            assert_abs_diff_eq!(dip(&flipped), d, epsilon = 1e-12);
        }
    }

    #[test]
    fn dip_bounds_hold() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
        for _ in 0..200 {
            let n = rng.gen_range(2..60);
            let v: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
            let d = dip(&v);
            assert!(d >= 1.0 / (2.0 * n as f64) - 1e-12, "n {n} dip {d}");
            assert!(d <= 0.25 + 1e-12, "n {n} dip {d}");
        }
    }

    #[test]
    fn binary_search_matches_full_scan() {
        // Evaluates every mode placement and checks the searched minimum.
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(31);
        for _ in 0..300 {
            let n = rng.gen_range(2..40);
            // Coarse values produce many ties.
            let v: Vec<f64> = (0..n)
                .map(|_| (rng.gen_range(-8i32..8) as f64) / 2.0)
                .collect();
            let mut x = v.clone();
            x.sort_unstable_by(f64::total_cmp);
            let e = Ecdf::from_sorted(&x);
            let r = e.reflected();
            let m = e.u.len();
            let mut hull = Vec::new();
            let mut full = f64::INFINITY;
            for idx in 0..=m + 1 {
                let cv = match idx {
                    0 => 0.0,
                    j if j <= m => convex_side_dev(&e, j, true, &mut hull),
                    _ => convex_side_dev(&e, m, false, &mut hull),
                };
                let cc = match idx {
                    0 => convex_side_dev(&r, m, false, &mut hull),
                    j if j <= m => convex_side_dev(&r, m + 1 - j, true, &mut hull),
                    _ => 0.0,
                };
                full = full.min(cv.max(cc));
            }
            let searched = dip(&v);
            assert_abs_diff_eq!(searched, full / 2.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn p_value_extremes() {
        // A zero observed dip is matched by every null replicate.
        assert_eq!(dip_p_value(0.0, 20, 99, 7).unwrap(), 1.0);
        // No null replicate can exceed the theoretical maximum of 1/4.
        assert_eq!(dip_p_value(0.26, 20, 99, 7).unwrap(), 0.01);
    }

    #[test]
    fn p_value_decreases_in_observed_dip() {
        let p_small = dip_p_value(0.03, 50, 400, 3).unwrap();
        let p_large = dip_p_value(0.09, 50, 400, 3).unwrap();
        assert!(p_large <= p_small, "{p_large} vs {p_small}");
    }

    #[test]
    fn p_value_is_deterministic() {
        let a = dip_p_value(0.06, 80, 300, 11).unwrap();
        let b = dip_p_value(0.06, 80, 300, 11).unwrap();
        assert_eq!(a, b);
        let c = dip_p_value(0.06, 80, 300, 12).unwrap();
        assert!((a - c).abs() < 0.05);
    }

    #[test]
    fn separates_unimodal_from_bimodal() {
        // A tight grid is as unimodal as a sample can be.
        let grid: Vec<f64> = (0..100).map(|i| i as f64 / 100.0).collect();
        let uni = dip_test(&grid, 500, 21).unwrap();
        assert_eq!(uni.p, 1.0);
        // Two tight far-apart clumps.
        let mut bi: Vec<f64> = (0..50).map(|i| i as f64 * 1e-3).collect();
        bi.extend((0..50).map(|i| 10.0 + i as f64 * 1e-3));
        let two = dip_test(&bi, 500, 21).unwrap();
        assert_eq!(two.p, 1.0 / 501.0);
        assert!(two.dip > 0.2);
        // The modal interval brackets one of the clumps' span ends.
        assert!(two.modal_interval.0 <= 10.0);
    }

    #[test]
    fn between_restriction_drops_outside_clusters() {
        use crate::clustering::Partition;
        // Clusters at 0, 5, 100; testing 1 vs 2 must ignore the far cloud.
        let col = vec![0.0, 0.1, 5.0, 5.1, 100.0, 100.1];
        let m = DataMatrix::from_columns(vec!["x1".into()], vec![col]).unwrap();
        let part = Partition::from_labels(vec![1, 1, 2, 2, 3, 3], 3).unwrap();
        let r = dip_test_between(&m, 0, &part, 1, 2, 200, 5).unwrap();
        assert_eq!(r.n, 4);
        let full = dip_statistic(m.column(0)).unwrap();
        assert!(r.dip != full.dip);
    }

    #[test]
    fn input_validation() {
        assert!(matches!(
            dip_statistic(&[1.0]),
            Err(DipError::TooFewValues { n: 1 })
        ));
        assert!(matches!(
            dip_statistic(&[1.0, f64::NAN]),
            Err(DipError::NonFinite)
        ));
        assert!(matches!(
            dip_p_value(0.1, 30, 0, 0),
            Err(DipError::ZeroReplicates)
        ));
    }
}
