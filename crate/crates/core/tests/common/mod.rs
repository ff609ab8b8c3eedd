//! Slow reference implementations used to cross-check the fast paths.
//! Everything here favors directness over speed: hulls come from chord
//! enumeration, the dip from bisection on the deviation bound, and Ward
//! costs from centroids recomputed off the raw coordinates every step.

// Not every test target uses every oracle.
#![allow(dead_code)]

/// ECDF steps: distinct values with the heights just after and just
/// before each jump.
fn ecdf(values: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let mut x = values.to_vec();
    x.sort_unstable_by(f64::total_cmp);
    let n = x.len() as f64;
    let (mut u, mut upper, mut lower) = (Vec::new(), Vec::new(), Vec::new());
    let mut i = 0;
    while i < x.len() {
        let mut j = i;
        while j < x.len() && x[j] == x[i] {
            j += 1;
        }
        u.push(x[i]);
        lower.push(i as f64 / n);
        upper.push(j as f64 / n);
        i = j;
    }
    (u, upper, lower)
}

/// Whether a nondecreasing convex chain exists with
/// `a[i] - d <= g_i <= b[i] + d` at positions `u`.
///
/// Such a chain exists iff the lower hull of the (u, b) points comes
/// within 2d below every a[i]: the hull plus d is then a feasible chain,
/// and conversely any convex chain sits under the chords bounding it by
/// b + d. The hull is built by scanning every chord and keeping those
/// lying below all b points.
fn convex_chain_fits(u: &[f64], a: &[f64], b: &[f64], d: f64) -> bool {
    let n = u.len();
    if n == 1 {
        return a[0] - b[0] <= 2.0 * d + 1e-12;
    }
    // A point strictly above the hull is not on it, so values come only
    // from chords; every position sits under its flanking vertices' chord.
    let mut hull = vec![f64::NEG_INFINITY; n];
    for lo in 0..n {
        for hi in lo + 1..n {
            let slope = (b[hi] - b[lo]) / (u[hi] - u[lo]);
            let below_all = (0..n).all(|j| b[lo] + slope * (u[j] - u[lo]) <= b[j] + 1e-12);
            if !below_all {
                continue;
            }
            for q in lo..=hi {
                let v = b[lo] + slope * (u[q] - u[lo]);
                if v > hull[q] {
                    hull[q] = v;
                }
            }
        }
    }
    (0..n).all(|q| a[q] - hull[q] <= 2.0 * d + 1e-12)
}

/// Concave counterpart, solved by the reflection x -> -x, G -> 1 - G.
fn concave_chain_fits(u: &[f64], a: &[f64], b: &[f64], d: f64) -> bool {
    let pos: Vec<f64> = u.iter().rev().map(|v| -v).collect();
    let ra: Vec<f64> = b.iter().rev().map(|v| 1.0 - v).collect();
    let rb: Vec<f64> = a.iter().rev().map(|v| 1.0 - v).collect();
    convex_chain_fits(&pos, &ra, &rb, d)
}

/// Reference dip: bisection on the smallest band half-width d admitting a
/// unimodal CDF within d of the ECDF everywhere. Checks the mode before
/// all points, an atom at each point, and the mode after all points; a
/// mode strictly inside a gap never beats an atom at the gap's endpoint.
pub fn dip_oracle(values: &[f64]) -> f64 {
    let (u, upper, lower) = ecdf(values);
    let m = u.len();
    if m < 2 {
        return 0.0;
    }
    let fits = |d: f64| -> bool {
        if concave_chain_fits(&u, &upper, &lower, d) || convex_chain_fits(&u, &upper, &lower, d) {
            return true;
        }
        for j in 0..m {
            // Left of the mode the band tracks the pre-jump heights; the
            // atom itself is pinned near its own jump on both sides.
            let ca: Vec<f64> = (0..=j)
                .map(|i| if i == j { lower[i] } else { upper[i] })
                .collect();
            let cb: Vec<f64> = (0..=j).map(|i| lower[i]).collect();
            let ka: Vec<f64> = (j..m).map(|i| upper[i]).collect();
            let kb: Vec<f64> = (j..m)
                .map(|i| if i == j { upper[i] } else { lower[i] })
                .collect();
            if convex_chain_fits(&u[..=j], &ca, &cb, d) && concave_chain_fits(&u[j..], &ka, &kb, d)
            {
                return true;
            }
        }
        false
    };
    let (mut lo, mut hi) = (0.0f64, 0.26f64);
    assert!(fits(hi), "dip above the 1/4 bound");
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if fits(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// Ward.D2 cost of merging member sets `a` and `b`, from their centroids.
fn ward_cost(cols: &[Vec<f64>], a: &[usize], b: &[usize]) -> f64 {
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let mut dist = 0.0;
    for col in cols {
        let ca = a.iter().map(|&i| col[i]).sum::<f64>() / na;
        let cb = b.iter().map(|&i| col[i]).sum::<f64>() / nb;
        dist += (ca - cb) * (ca - cb);
    }
    2.0 * na * nb / (na + nb) * dist
}

/// Reference Ward.D2 agglomeration over column-major data. Every step
/// rescans all active pairs with freshly computed centroid costs; ties
/// break on (cost, smaller node id, larger node id). Returns
/// (left, right, height) per merge with leaves 0..n and the step-s merge
/// creating node n + s.
pub fn ward_oracle(cols: &[Vec<f64>]) -> Vec<(usize, usize, f64)> {
    let n = cols[0].len();
    let mut clusters: Vec<(usize, Vec<usize>)> = (0..n).map(|i| (i, vec![i])).collect();
    let mut merges = Vec::new();
    for step in 0..n.saturating_sub(1) {
        let mut best: Option<(f64, usize, usize, usize, usize)> = None;
        for a in 0..clusters.len() {
            for b in a + 1..clusters.len() {
                let d2 = ward_cost(cols, &clusters[a].1, &clusters[b].1);
                let lo = clusters[a].0.min(clusters[b].0);
                let hi = clusters[a].0.max(clusters[b].0);
                let better = match best {
                    None => true,
                    Some((bd, bl, bh, _, _)) => (d2, lo, hi) < (bd, bl, bh),
                };
                if better {
                    best = Some((d2, lo, hi, a, b));
                }
            }
        }
        let (d2, lo, hi, a, b) = best.expect("at least one active pair");
        merges.push((lo, hi, d2.sqrt()));
        let mut joined = clusters[a].1.clone();
        joined.extend_from_slice(&clusters[b].1);
        clusters.swap_remove(b.max(a));
        clusters.swap_remove(b.min(a));
        clusters.push((n + step, joined));
    }
    merges
}
