//! Simulation engine for calibration and power studies: data generators,
//! a seeded replication loop running the tests on freshly clustered draws,
//! and uniformity diagnostics over the resulting p-values.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, Exp1, StandardNormal, StudentT};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::str::FromStr;
use thiserror::Error;

use crate::clustering::{Clusterer, Partition, WardClusterer};
use crate::dataset::DataMatrix;
use crate::dip::dip_test_between;
use crate::merging::merged_selective_p_value;
use crate::seeding::{derive_seed, indexed_rng};
use crate::selective::{selective_p_value, t_test_p_value, Method, VarianceRule};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid config: {reason}")]
    InvalidConfig { reason: String },
    #[error("p-value list is empty")]
    EmptyPValues,
    #[error("p-value {value} outside [0, 1]")]
    InvalidPValue { value: f64 },
}

/// Simulation scenario family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    NullGaussian,
    ThreeClusters,
    Contamination,
    Intervening,
    RobustnessDistribution,
}

impl Scenario {
    pub fn tag(self) -> &'static str {
        match self {
            Scenario::NullGaussian => "null_gaussian",
            Scenario::ThreeClusters => "three_clusters",
            Scenario::Contamination => "contamination",
            Scenario::Intervening => "intervening",
            Scenario::RobustnessDistribution => "robustness_distribution",
        }
    }
}

impl FromStr for Scenario {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "null_gaussian" => Ok(Scenario::NullGaussian),
            "three_clusters" => Ok(Scenario::ThreeClusters),
            "contamination" => Ok(Scenario::Contamination),
            "intervening" => Ok(Scenario::Intervening),
            "robustness_distribution" => Ok(Scenario::RobustnessDistribution),
            other => Err(format!("unknown scenario: {other}")),
        }
    }
}

/// Univariate unimodal generators for the robustness scenario. The set is
/// a stand-in: the study this layout follows fixes seven such shapes
/// without listing them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnimodalKind {
    Gaussian,
    StudentT5,
    Uniform,
    Exponential,
    Laplace,
    Logistic,
    Beta22,
}

impl UnimodalKind {
    pub const ALL: [UnimodalKind; 7] = [
        UnimodalKind::Gaussian,
        UnimodalKind::StudentT5,
        UnimodalKind::Uniform,
        UnimodalKind::Exponential,
        UnimodalKind::Laplace,
        UnimodalKind::Logistic,
        UnimodalKind::Beta22,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            UnimodalKind::Gaussian => "gaussian",
            UnimodalKind::StudentT5 => "student_t5",
            UnimodalKind::Uniform => "uniform",
            UnimodalKind::Exponential => "exponential",
            UnimodalKind::Laplace => "laplace",
            UnimodalKind::Logistic => "logistic",
            UnimodalKind::Beta22 => "beta22",
        }
    }

    fn sample(self, rng: &mut ChaCha8Rng) -> f64 {
        match self {
            UnimodalKind::Gaussian => rng.sample(StandardNormal),
            UnimodalKind::StudentT5 => {
                StudentT::new(5.0).expect("positive dof").sample(rng)
            }
            UnimodalKind::Uniform => rng.gen::<f64>(),
            UnimodalKind::Exponential => rng.sample(Exp1),
            UnimodalKind::Laplace => {
                let u: f64 = rng.gen::<f64>() - 0.5;
                -u.signum() * (1.0 - 2.0 * u.abs()).ln()
            }
            UnimodalKind::Logistic => {
                let u: f64 = rng.gen();
                (u / (1.0 - u)).ln()
            }
            UnimodalKind::Beta22 => Beta::new(2.0, 2.0).expect("valid shape").sample(rng),
        }
    }
}

impl FromStr for UnimodalKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        UnimodalKind::ALL
            .iter()
            .copied()
            .find(|k| k.tag() == s)
            .ok_or_else(|| format!("unknown distribution: {s}"))
    }
}

/// Full description of one simulation run. For `three_clusters`, `n` is
/// rows per cluster; everywhere else it is total rows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub scenario: Scenario,
    pub n: usize,
    pub p: usize,
    pub delta: f64,
    pub k: usize,
    pub n_reps: usize,
    pub alpha: f64,
    pub mc_samples: usize,
    pub dip_reps: usize,
    pub seed: u64,
    pub distribution: UnimodalKind,
}

impl ScenarioConfig {
    /// Desk-scale defaults per scenario.
    pub fn defaults(scenario: Scenario) -> Self {
        let base = ScenarioConfig {
            scenario,
            n: 200,
            p: 2,
            delta: 0.0,
            k: 3,
            n_reps: 500,
            alpha: 0.05,
            mc_samples: 1000,
            dip_reps: 500,
            seed: 42,
            distribution: UnimodalKind::Gaussian,
        };
        match scenario {
            Scenario::NullGaussian => base,
            Scenario::ThreeClusters => ScenarioConfig { n: 50, ..base },
            Scenario::Contamination => ScenarioConfig {
                p: 1,
                k: 2,
                delta: 4.0,
                ..base
            },
            Scenario::Intervening => ScenarioConfig { delta: 10.0, ..base },
            Scenario::RobustnessDistribution => ScenarioConfig { p: 1, k: 2, ..base },
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let fail = |reason: String| Err(HarnessError::InvalidConfig { reason });
        if self.n < 2 {
            return fail(format!("n = {} too small", self.n));
        }
        if self.p == 0 {
            return fail("p = 0".into());
        }
        if self.k < 2 {
            return fail("need at least two clusters".into());
        }
        if self.n_reps == 0 {
            return fail("n_reps = 0".into());
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return fail(format!("alpha = {} outside (0, 1)", self.alpha));
        }
        if self.delta < 0.0 {
            return fail(format!("delta = {} negative", self.delta));
        }
        if self.mc_samples == 0 || self.dip_reps == 0 {
            return fail("mc_samples and dip_reps must be positive".into());
        }
        Ok(())
    }
}

fn gaussian_column(n: usize, mean: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n)
        .map(|_| mean + rng.sample::<f64, _>(StandardNormal))
        .collect()
}

fn matrix(cols: Vec<Vec<f64>>) -> DataMatrix {
    let names = (1..=cols.len()).map(|g| format!("x{g}")).collect();
    DataMatrix::from_columns(names, cols).expect("generated columns are consistent")
}

/// n x p of i.i.d. standard Gaussians.
pub fn gen_null_gaussian(n: usize, p: usize, rng: &mut ChaCha8Rng) -> DataMatrix {
    matrix((0..p).map(|_| gaussian_column(n, 0.0, rng)).collect())
}

/// Three well-separated bivariate Gaussian clusters with means (-5, 0),
/// (5, 0), (0, 10). The returned labels are for evaluating estimated
/// partitions only; the replication loop never sees them.
pub fn gen_three_clusters(n_per_cluster: usize, rng: &mut ChaCha8Rng) -> (DataMatrix, Vec<usize>) {
    let means = [(-5.0, 0.0), (5.0, 0.0), (0.0, 10.0)];
    let mut x1 = Vec::with_capacity(3 * n_per_cluster);
    let mut x2 = Vec::with_capacity(3 * n_per_cluster);
    let mut labels = Vec::with_capacity(3 * n_per_cluster);
    for (c, &(m1, m2)) in means.iter().enumerate() {
        x1.extend(gaussian_column(n_per_cluster, m1, rng));
        x2.extend(gaussian_column(n_per_cluster, m2, rng));
        labels.extend(std::iter::repeat(c + 1).take(n_per_cluster));
    }
    (matrix(vec![x1, x2]), labels)
}

/// Univariate half-half mixture of N(0,1) and N(delta,1), component drawn
/// per row.
pub fn gen_contamination(n: usize, delta: f64, rng: &mut ChaCha8Rng) -> DataMatrix {
    let col = (0..n)
        .map(|_| {
            let shift = if rng.gen::<bool>() { delta } else { 0.0 };
            shift + rng.sample::<f64, _>(StandardNormal)
        })
        .collect();
    matrix(vec![col])
}

/// Two groups separated by delta on x1 with a third group halfway between
/// them; x2 is uninformative noise. Group sizes are as equal as n allows.
pub fn gen_intervening(n: usize, delta: f64, rng: &mut ChaCha8Rng) -> DataMatrix {
    let third = n / 3;
    let sizes = [n - 2 * third, third, third];
    let means = [0.0, delta / 2.0, delta];
    let mut x1 = Vec::with_capacity(n);
    for (&size, &mean) in sizes.iter().zip(&means) {
        x1.extend(gaussian_column(size, mean, rng));
    }
    let x2 = gaussian_column(n, 0.0, rng);
    matrix(vec![x1, x2])
}

/// Univariate sample from one unimodal shape.
pub fn gen_unimodal(n: usize, kind: UnimodalKind, rng: &mut ChaCha8Rng) -> DataMatrix {
    matrix(vec![(0..n).map(|_| kind.sample(rng)).collect()])
}

/// Kolmogorov-Smirnov sup-distance between the empirical CDF of `pvals`
/// and Uniform(0,1).
pub fn ks_to_uniform(pvals: &[f64]) -> Result<f64, HarnessError> {
    if pvals.is_empty() {
        return Err(HarnessError::EmptyPValues);
    }
    if let Some(&bad) = pvals.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(HarnessError::InvalidPValue { value: bad });
    }
    let mut sorted = pvals.to_vec();
    sorted.sort_unstable_by(f64::total_cmp);
    let m = sorted.len() as f64;
    let mut d = 0.0f64;
    for (i, &u) in sorted.iter().enumerate() {
        let hi = (i + 1) as f64 / m - u;
        let lo = u - i as f64 / m;
        d = d.max(hi).max(lo);
    }
    Ok(d)
}

/// Which cluster pair and variable a scenario tests. Mean ranks refer to
/// the estimated clusters ordered by mean of the tested variable, so the
/// comparison is stable across replications even though cluster ids are
/// not.
#[derive(Debug, Clone, Copy)]
enum ComparisonSpec {
    Pair { k: usize, l: usize, var: usize },
    MeanRank { lo: usize, hi: usize, var: usize },
}

impl ComparisonSpec {
    fn label(&self) -> String {
        match *self {
            ComparisonSpec::Pair { k, l, var } => format!("{k}v{l}:x{}", var + 1),
            ComparisonSpec::MeanRank { lo, hi, var } => format!("r{lo}vr{hi}:x{}", var + 1),
        }
    }

    fn resolve(&self, m: &DataMatrix, part: &Partition) -> (usize, usize, usize) {
        match *self {
            ComparisonSpec::Pair { k, l, var } => (k, l, var),
            ComparisonSpec::MeanRank { lo, hi, var } => {
                let col = m.column(var);
                let mut ranked: Vec<(f64, usize)> = (1..=part.k)
                    .map(|id| {
                        let rows = part.members_of(id);
                        let mean = rows.iter().map(|&r| col[r]).sum::<f64>() / rows.len() as f64;
                        (mean, id)
                    })
                    .collect();
                ranked.sort_by(|a, b| a.partial_cmp(b).expect("finite means"));
                (ranked[lo].1, ranked[hi].1, var)
            }
        }
    }
}

fn scenario_comparisons(cfg: &ScenarioConfig) -> Vec<ComparisonSpec> {
    match cfg.scenario {
        Scenario::NullGaussian => vec![ComparisonSpec::Pair { k: 1, l: 2, var: 0 }],
        Scenario::ThreeClusters => {
            let mut out = Vec::new();
            for (k, l) in [(1, 2), (1, 3), (2, 3)] {
                for var in 0..2 {
                    out.push(ComparisonSpec::Pair { k, l, var });
                }
            }
            out
        }
        Scenario::Contamination | Scenario::RobustnessDistribution => {
            vec![ComparisonSpec::MeanRank {
                lo: 0,
                hi: cfg.k - 1,
                var: 0,
            }]
        }
        Scenario::Intervening => {
            let mut out = vec![ComparisonSpec::MeanRank {
                lo: 0,
                hi: cfg.k - 1,
                var: 0,
            }];
            if cfg.k > 2 {
                out.push(ComparisonSpec::MeanRank { lo: 0, hi: 1, var: 0 });
            }
            out
        }
    }
}

fn generate(cfg: &ScenarioConfig, rng: &mut ChaCha8Rng) -> DataMatrix {
    match cfg.scenario {
        Scenario::NullGaussian => gen_null_gaussian(cfg.n, cfg.p, rng),
        // True labels stop here; downstream code sees only the matrix.
        Scenario::ThreeClusters => gen_three_clusters(cfg.n, rng).0,
        Scenario::Contamination => gen_contamination(cfg.n, cfg.delta, rng),
        Scenario::Intervening => gen_intervening(cfg.n, cfg.delta, rng),
        Scenario::RobustnessDistribution => gen_unimodal(cfg.n, cfg.distribution, rng),
    }
}

/// One successful p-value, in long format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepRecord {
    pub rep: usize,
    pub method: Method,
    pub comparison: String,
    pub p: f64,
}

/// Aggregates for one method and comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub method: Method,
    pub comparison: String,
    pub n: usize,
    pub rejection_rate: f64,
    pub ks_to_uniform: f64,
}

/// Full outcome of a scenario run. Byte-identical for identical configs:
/// no timestamps or runtimes in here (the CLI records those in a manifest
/// next to the report).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub config: ScenarioConfig,
    pub comparisons: Vec<String>,
    pub rows: Vec<RepRecord>,
    pub summary: Vec<SummaryRow>,
    pub failures: Vec<String>,
}

impl SimulationReport {
    pub fn p_values(&self, method: Method, comparison: &str) -> Vec<f64> {
        self.rows
            .iter()
            .filter(|r| r.method == method && r.comparison == comparison)
            .map(|r| r.p)
            .collect()
    }

    pub fn summary_for(&self, method: Method, comparison: &str) -> Option<&SummaryRow> {
        self.summary
            .iter()
            .find(|s| s.method == method && s.comparison == comparison)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization cannot fail")
    }

    /// One row per replication, method, and comparison.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("rep\tmethod\tcomparison\tp\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\n",
                r.rep,
                r.method.tag(),
                r.comparison,
                r.p
            ));
        }
        out
    }
}

/// Runs a scenario: per replication, draw data, cluster with Ward at K,
/// run each requested method on the scenario's comparisons. Failures are
/// recorded and skipped, never fatal. Replications run in parallel and
/// aggregate by index, so reports are seed-deterministic.
pub fn run_scenario(
    cfg: &ScenarioConfig,
    methods: &[Method],
) -> Result<SimulationReport, HarnessError> {
    cfg.validate()?;
    let methods: Vec<Method> = Method::ALL
        .iter()
        .copied()
        .filter(|m| methods.contains(m))
        .collect();
    if methods.is_empty() {
        return Err(HarnessError::InvalidConfig {
            reason: "no methods requested".into(),
        });
    }
    let specs = scenario_comparisons(cfg);
    let labels: Vec<String> = specs.iter().map(ComparisonSpec::label).collect();

    type CellOut = (Method, usize, Result<f64, String>);
    let per_rep: Vec<Vec<CellOut>> = (0..cfg.n_reps)
        .into_par_iter()
        .map(|rep| {
            let rep_master = derive_seed(cfg.seed, rep as u64);
            let mut rng = indexed_rng(rep_master, 0);
            let data = generate(cfg, &mut rng);
            let clusterer = WardClusterer { k: cfg.k };
            let part = match clusterer.partition(&data) {
                Ok(p) => p,
                Err(e) => {
                    let msg = e.to_string();
                    return methods
                        .iter()
                        .flat_map(|&m| {
                            let msg = msg.clone();
                            (0..specs.len()).map(move |ci| (m, ci, Err(msg.clone())))
                        })
                        .collect();
                }
            };
            let mut cells = Vec::with_capacity(methods.len() * specs.len());
            for (ci, spec) in specs.iter().enumerate() {
                let (k, l, var) = spec.resolve(&data, &part);
                for &method in &methods {
                    // Seed tags depend on the comparison but not on K, so
                    // K-insensitive methods match across cut depths.
                    let outcome = match method {
                        Method::Direct => selective_p_value(
                            &data,
                            var,
                            &part,
                            k,
                            l,
                            &clusterer,
                            VarianceRule::PairPooled,
                            cfg.mc_samples,
                            derive_seed(rep_master, 1000 + ci as u64),
                        )
                        .map(|r| r.p)
                        .map_err(|e| e.to_string()),
                        Method::Merged => merged_selective_p_value(
                            &data,
                            var,
                            &part,
                            k,
                            l,
                            &clusterer,
                            VarianceRule::PairPooled,
                            cfg.mc_samples,
                            derive_seed(rep_master, 2000 + ci as u64),
                        )
                        .map(|r| r.p)
                        .map_err(|e| e.to_string()),
                        Method::Dip => dip_test_between(
                            &data,
                            var,
                            &part,
                            k,
                            l,
                            cfg.dip_reps,
                            derive_seed(rep_master, 3000 + ci as u64),
                        )
                        .map(|r| r.p)
                        .map_err(|e| e.to_string()),
                        Method::TTest => t_test_p_value(data.column(var), &part, k, l)
                            .map(|r| r.p)
                            .map_err(|e| e.to_string()),
                    };
                    cells.push((method, ci, outcome));
                }
            }
            cells
        })
        .collect();

    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for (rep, cells) in per_rep.into_iter().enumerate() {
        for (method, ci, outcome) in cells {
            match outcome {
                Ok(p) => rows.push(RepRecord {
                    rep,
                    method,
                    comparison: labels[ci].clone(),
                    p,
                }),
                Err(e) => failures.push(format!("rep {rep} {} {}: {e}", method.tag(), labels[ci])),
            }
        }
    }
    let mut summary = Vec::new();
    for &method in &methods {
        for label in &labels {
            let ps: Vec<f64> = rows
                .iter()
                .filter(|r| r.method == method && &r.comparison == label)
                .map(|r| r.p)
                .collect();
            if ps.is_empty() {
                continue;
            }
            let rejected = ps.iter().filter(|&&p| p <= cfg.alpha).count();
            summary.push(SummaryRow {
                method,
                comparison: label.clone(),
                n: ps.len(),
                rejection_rate: rejected as f64 / ps.len() as f64,
                ks_to_uniform: ks_to_uniform(&ps)?,
            });
        }
    }
    Ok(SimulationReport {
        config: *cfg,
        comparisons: labels,
        rows,
        summary,
        failures,
    })
}
