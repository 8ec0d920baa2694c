//! Shared domain types: scheme configuration, cluster partitions, binary
//! support matrices, per-worker computation timelines and result aggregates.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Code construction family for one simulated scheme.
///
/// `ThresholdBaseline` is an opaque external baseline: the user supplies the
/// recovery threshold directly and no code is constructed for it, which is
/// how schemes whose internals are out of scope (e.g. Lagrange-coded
/// computation) enter a comparison.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SchemeKind {
    Gc,
    FractionalRepetition,
    UcMmc,
    GcMmcCorrelated,
    GcMmcUncorrelated,
    Hybrid,
    ThresholdBaseline,
}

impl SchemeKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            SchemeKind::Gc => "gc",
            SchemeKind::FractionalRepetition => "fractional-repetition",
            SchemeKind::UcMmc => "uc-mmc",
            SchemeKind::GcMmcCorrelated => "gc-mmc-correlated",
            SchemeKind::GcMmcUncorrelated => "gc-mmc-uncorrelated",
            SchemeKind::Hybrid => "hybrid",
            SchemeKind::ThresholdBaseline => "threshold-baseline",
        }
    }
}

/// Full description of one scheme to simulate.
///
/// `workers` is the number of workers K; the dataset is always split into K
/// mini-batches (one per worker). `load` is the computation load r: the
/// number of mini-batches assigned to each worker. `clusters` partitions
/// workers and batches into equal groups that are coded independently.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SchemeConfig {
    pub scheme: SchemeKind,
    pub workers: usize,
    pub load: usize,
    pub clusters: usize,
    /// Order m of each coded message (correlated designs only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub order: Option<usize>,
    /// Orders [m0, m1, ..] of a real worker and its virtual workers,
    /// nonincreasing with m0 = load (uncorrelated designs only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub order_vector: Option<Vec<usize>>,
    /// Messages required for recovery (threshold baselines only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline_threshold: Option<usize>,
    /// Rate of the shifted exponential computation-time model.
    pub mu: f64,
    /// Minimum time of a single partial-gradient computation.
    pub alpha: f64,
    /// Monte Carlo trial count.
    pub iterations: usize,
    pub seed: u64,
}

impl SchemeConfig {
    /// Batches per cluster (equals workers per cluster).
    pub fn cluster_cols(&self) -> usize {
        self.workers / self.clusters
    }

    /// Collects every violated invariant; an empty report means the config
    /// can be carried through assignment, coding and simulation.
    pub fn validate(&self) -> ValidationReport {
        let mut v = Vec::new();
        if self.workers == 0 {
            v.push("workers must be positive".to_string());
        }
        if self.clusters == 0 {
            v.push("clusters must be positive".to_string());
        } else if self.workers > 0 && self.workers % self.clusters != 0 {
            v.push(format!(
                "workers mod clusters != 0 ({} mod {})",
                self.workers, self.clusters
            ));
        }
        if self.load == 0 {
            v.push("load must be at least 1".to_string());
        } else if self.clusters > 0
            && self.workers % self.clusters == 0
            && self.load > self.cluster_cols()
        {
            v.push(format!(
                "load {} exceeds batches per cluster {}",
                self.load,
                self.cluster_cols()
            ));
        }
        if !(self.mu > 0.0) {
            v.push(format!("mu must be positive, got {}", self.mu));
        }
        if !(self.alpha > 0.0) {
            v.push(format!("alpha must be positive, got {}", self.alpha));
        }
        if self.iterations == 0 {
            v.push("iterations must be at least 1".to_string());
        }

        match self.scheme {
            SchemeKind::Gc => {}
            SchemeKind::FractionalRepetition => {
                if self.load > 0 && self.workers % self.load != 0 {
                    v.push(format!(
                        "fractional repetition needs workers mod load = 0 ({} mod {})",
                        self.workers, self.load
                    ));
                } else if self.load > 0 && self.clusters != self.workers / self.load {
                    v.push(format!(
                        "fractional repetition needs clusters = workers/load = {}, got {}",
                        self.workers / self.load,
                        self.clusters
                    ));
                }
            }
            SchemeKind::UcMmc => {}
            SchemeKind::GcMmcCorrelated => match self.order {
                None => v.push("correlated design needs an order".to_string()),
                Some(m) => {
                    if m == 0 || m > self.load {
                        v.push(format!("order {} out of range [1, {}]", m, self.load));
                    }
                }
            },
            SchemeKind::GcMmcUncorrelated => {
                self.validate_order_vector(&mut v);
            }
            SchemeKind::Hybrid => {
                // The escape hatch sends a cluster average, so every worker
                // must hold its whole cluster.
                if self.clusters > 0
                    && self.workers % self.clusters == 0
                    && self.load != self.cluster_cols()
                {
                    v.push(format!(
                        "hybrid needs load = batches per cluster ({} != {})",
                        self.load,
                        self.cluster_cols()
                    ));
                }
                if self.order_vector.is_some() {
                    self.validate_order_vector(&mut v);
                } else if let Some(m) = self.order {
                    if m == 0 || m > self.load {
                        v.push(format!("order {} out of range [1, {}]", m, self.load));
                    }
                } else {
                    v.push("hybrid needs an order or an order_vector".to_string());
                }
            }
            SchemeKind::ThresholdBaseline => match self.baseline_threshold {
                None => v.push("threshold baseline needs baseline_threshold".to_string()),
                Some(t) => {
                    if t == 0 || t > self.workers {
                        v.push(format!(
                            "baseline_threshold {} out of range [1, {}]",
                            t, self.workers
                        ));
                    }
                }
            },
        }
        ValidationReport { violations: v }
    }

    fn validate_order_vector(&self, v: &mut Vec<String>) {
        match &self.order_vector {
            None => v.push("uncorrelated design needs an order_vector".to_string()),
            Some(ov) => {
                if ov.is_empty() {
                    v.push("order_vector must be nonempty".to_string());
                    return;
                }
                if ov[0] != self.load {
                    v.push(format!(
                        "order_vector must start at the load ({} != {})",
                        ov[0], self.load
                    ));
                }
                if ov.windows(2).any(|w| w[0] < w[1]) {
                    v.push(format!("order_vector must be nonincreasing: {:?}", ov));
                }
                if ov.iter().any(|&m| m == 0 || m > self.load) {
                    v.push(format!(
                        "order_vector entries must lie in [1, {}]: {:?}",
                        self.load, ov
                    ));
                }
            }
        }
    }

    /// Validates and converts into an error on the first violation.
    pub fn validated(self) -> Result<Self> {
        let report = self.validate();
        if report.is_valid() {
            Ok(self)
        } else {
            Err(Error::InvalidConfig(report.violations.join("; ")))
        }
    }
}

/// Result of config validation; empty means valid.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub violations: Vec<String>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Disjoint equal-size grouping of workers and mini-batches.
///
/// Block `p` holds workers `p*K/P .. (p+1)*K/P` and the batch block with the
/// same indices, so cluster-local index `i` maps to global `p*K/P + i`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClusterPartition {
    cluster_workers: Vec<Vec<usize>>,
    cluster_batches: Vec<Vec<usize>>,
}

impl ClusterPartition {
    pub(crate) fn new(cluster_workers: Vec<Vec<usize>>, cluster_batches: Vec<Vec<usize>>) -> Self {
        Self {
            cluster_workers,
            cluster_batches,
        }
    }

    pub fn clusters(&self) -> usize {
        self.cluster_workers.len()
    }

    pub fn workers_of(&self, cluster: usize) -> &[usize] {
        &self.cluster_workers[cluster]
    }

    pub fn batches_of(&self, cluster: usize) -> &[usize] {
        &self.cluster_batches[cluster]
    }
}

/// Binary assignment matrix. Row `i` flags the mini-batch indices that may
/// appear in coded message `i`; `row_owners[i]` lists the real workers able
/// to compute and send that message.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SupportMatrix {
    rows: usize,
    cols: usize,
    data: Vec<bool>,
    row_owners: Vec<Vec<usize>>,
}

impl SupportMatrix {
    /// Builds from per-row support index sets. Fails on an all-zero row or
    /// column: such a code could never cover every partial gradient.
    pub fn from_supports(cols: usize, supports: &[Vec<usize>], owners: Vec<Vec<usize>>) -> Result<Self> {
        assert_eq!(supports.len(), owners.len());
        let rows = supports.len();
        let mut data = vec![false; rows * cols];
        for (i, support) in supports.iter().enumerate() {
            if support.is_empty() {
                return Err(Error::AllZeroRow(i));
            }
            for &k in support {
                if k >= cols {
                    return Err(Error::BatchOutOfRange {
                        batch: k,
                        batches: cols,
                    });
                }
                data[i * cols + k] = true;
            }
        }
        let m = Self {
            rows,
            cols,
            data,
            row_owners: owners,
        };
        for k in 0..cols {
            if m.column_weight(k) == 0 {
                return Err(Error::AllZeroColumn(k));
            }
        }
        Ok(m)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> bool {
        self.data[row * self.cols + col]
    }

    /// Batch indices of row `row`, ascending.
    pub fn row_support(&self, row: usize) -> Vec<usize> {
        (0..self.cols).filter(|&k| self.get(row, k)).collect()
    }

    pub fn row_weight(&self, row: usize) -> usize {
        (0..self.cols).filter(|&k| self.get(row, k)).count()
    }

    pub fn column_weight(&self, col: usize) -> usize {
        (0..self.rows).filter(|&i| self.get(i, col)).count()
    }

    pub fn column_zero_count(&self, col: usize) -> usize {
        self.rows - self.column_weight(col)
    }

    pub fn owners(&self, row: usize) -> &[usize] {
        &self.row_owners[row]
    }

    /// Dense 0/1 copy, row-major. Handy for tests and bindings.
    pub fn to_dense(&self) -> Vec<Vec<u8>> {
        (0..self.rows)
            .map(|i| (0..self.cols).map(|k| self.get(i, k) as u8).collect())
            .collect()
    }
}

/// Completion times of one worker's local computations within an iteration:
/// `completion_of(s)` is when its s-th partial gradient is done.
#[derive(Clone, Debug, PartialEq)]
pub struct WorkerTimeline {
    times: Vec<f64>,
}

impl WorkerTimeline {
    /// Builds the timeline from one shifted-exponential draw `x`:
    /// the s-th computation finishes at `s * (alpha + x)`.
    pub fn from_draw(alpha: f64, load: usize, x: f64) -> Self {
        let times = (1..=load).map(|s| s as f64 * (alpha + x)).collect();
        Self { times }
    }

    pub fn load(&self) -> usize {
        self.times.len()
    }

    /// Completion time of the s-th computation, 1-based.
    #[inline]
    pub fn completion_of(&self, s: usize) -> f64 {
        self.times[s - 1]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.times
    }
}

/// What one simulated iteration did inside a single cluster.
#[derive(Clone, Debug, PartialEq)]
pub struct ClusterOutcome {
    /// When this cluster's portion of the gradient became recoverable
    /// (infinite if it never did).
    pub completion_time: f64,
    /// Distinct coded rows the collector had gathered at that instant.
    pub rows_used: Vec<usize>,
    /// Worker whose cluster-average message finished the cluster, if any.
    pub completed_by_average: Option<usize>,
}

/// Outcome of one simulated iteration across all clusters.
#[derive(Clone, Debug, PartialEq)]
pub struct IterationOutcome {
    /// Time of the decoding-enabling message, maximised over clusters;
    /// infinite when some cluster never became decodable.
    pub completion_time: f64,
    /// Every message whose ready time is at most `completion_time`,
    /// duplicates included.
    pub comm_load: usize,
    /// Same count with duplicate rows collapsed (cluster averages count once
    /// per cluster).
    pub distinct_comm_load: usize,
    pub clusters: Vec<ClusterOutcome>,
    pub decodable: bool,
}

impl IterationOutcome {
    pub fn rows_used_total(&self) -> usize {
        self.clusters.iter().map(|c| c.rows_used.len()).sum()
    }
}

/// Per-trial record kept so callers can write raw results or re-aggregate.
#[derive(Clone, Debug, PartialEq)]
pub struct TrialRecord {
    pub trial: u64,
    pub completion_time: f64,
    pub comm_load: usize,
    pub distinct_comm_load: usize,
    pub decodable: bool,
}

/// Sample means and standard errors over the decodable trials of one scheme.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub config: SchemeConfig,
    pub trials: usize,
    pub undecodable_trials: usize,
    pub mean_completion_time: f64,
    pub stderr_completion_time: f64,
    pub mean_comm_load: f64,
    pub stderr_comm_load: f64,
}

impl MetricsSummary {
    /// Aggregates trial records. `distinct_load` selects whether duplicate
    /// rows count toward the communication load.
    pub fn from_trials(config: SchemeConfig, records: &[TrialRecord], distinct_load: bool) -> Self {
        let decodable: Vec<&TrialRecord> = records.iter().filter(|r| r.decodable).collect();
        let undecodable_trials = records.len() - decodable.len();
        let times: Vec<f64> = decodable.iter().map(|r| r.completion_time).collect();
        let loads: Vec<f64> = decodable
            .iter()
            .map(|r| {
                if distinct_load {
                    r.distinct_comm_load as f64
                } else {
                    r.comm_load as f64
                }
            })
            .collect();
        let (mean_completion_time, stderr_completion_time) = mean_stderr(&times);
        let (mean_comm_load, stderr_comm_load) = mean_stderr(&loads);
        Self {
            config,
            trials: records.len(),
            undecodable_trials,
            mean_completion_time,
            stderr_completion_time,
            mean_comm_load,
            stderr_comm_load,
        }
    }
}

fn mean_stderr(samples: &[f64]) -> (f64, f64) {
    if samples.is_empty() {
        return (f64::INFINITY, f64::INFINITY);
    }
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    if samples.len() < 2 {
        return (mean, 0.0);
    }
    let var = samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base_config() -> SchemeConfig {
        SchemeConfig {
            scheme: SchemeKind::GcMmcCorrelated,
            workers: 40,
            load: 10,
            clusters: 4,
            order: Some(6),
            order_vector: None,
            baseline_threshold: None,
            mu: 10.0,
            alpha: 0.01,
            iterations: 100,
            seed: 1,
        }
    }

    #[test]
    fn reference_correlated_config_is_valid() {
        assert!(base_config().validate().is_valid());
    }

    #[test]
    fn order_equal_to_load_reduces_to_plain_gc() {
        let cfg = SchemeConfig {
            workers: 6,
            load: 3,
            clusters: 1,
            order: Some(3),
            ..base_config()
        };
        assert!(cfg.validate().is_valid());
    }

    #[test]
    fn cluster_count_must_divide_workers() {
        let cfg = SchemeConfig {
            clusters: 3,
            ..base_config()
        };
        let report = cfg.validate();
        assert!(!report.is_valid());
        assert!(report.violations[0].contains("mod"));
    }

    #[test]
    fn order_vector_must_be_nonincreasing_and_start_at_load() {
        let mut cfg = SchemeConfig {
            scheme: SchemeKind::GcMmcUncorrelated,
            order: None,
            order_vector: Some(vec![10, 8, 6]),
            ..base_config()
        };
        assert!(cfg.validate().is_valid());
        cfg.order_vector = Some(vec![6, 8, 10]);
        assert!(!cfg.validate().is_valid());
        cfg.order_vector = Some(vec![8, 6]);
        assert!(!cfg.validate().is_valid());
    }

    #[test]
    fn hybrid_requires_whole_cluster_load() {
        let cfg = SchemeConfig {
            scheme: SchemeKind::Hybrid,
            workers: 5,
            load: 5,
            clusters: 1,
            order: None,
            order_vector: Some(vec![5, 3]),
            ..base_config()
        };
        assert!(cfg.validate().is_valid());
        let bad = SchemeConfig {
            load: 4,
            order_vector: Some(vec![4, 3]),
            ..cfg
        };
        assert!(!bad.validate().is_valid());
    }

    #[test]
    fn fractional_repetition_pins_cluster_count() {
        let cfg = SchemeConfig {
            scheme: SchemeKind::FractionalRepetition,
            workers: 40,
            load: 10,
            clusters: 4,
            order: None,
            ..base_config()
        };
        assert!(cfg.validate().is_valid());
        let bad = SchemeConfig {
            clusters: 2,
            ..cfg
        };
        assert!(!bad.validate().is_valid());
    }

    #[test]
    fn timeline_scales_linearly_in_computation_count() {
        let t = WorkerTimeline::from_draw(0.01, 5, 0.0);
        for s in 1..=5 {
            assert_eq!(t.completion_of(s), s as f64 * 0.01);
        }
    }

    #[test]
    fn support_matrix_rejects_uncovered_batches() {
        let err = SupportMatrix::from_supports(3, &[vec![0], vec![1]], vec![vec![0], vec![1]]);
        assert!(matches!(err, Err(Error::AllZeroColumn(2))));
    }
}
