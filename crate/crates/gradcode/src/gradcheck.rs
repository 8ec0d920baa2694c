//! End-to-end validation on a least-squares problem: pushes real partial
//! gradients through encode/decode and checks exact agreement with the
//! centralized full gradient, per straggler pattern and over whole descent
//! trajectories. The coding layer never looks at the loss — messages are
//! linear combinations of arbitrary vectors — and the tests here exercise
//! that too.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::assignment::MessageKind;
use crate::error::{Error, Result};
use crate::model::SchemeKind;
use crate::runtime::trial_rng;
use crate::simulator::SchemeInstance;
use crate::coding::{decode_interpolating, DecodeOutcome};

/// Least-squares instance with equal-size contiguous mini-batches.
#[derive(Clone, Debug)]
pub struct RegressionProblem {
    features: DMatrix<f64>,
    labels: DVector<f64>,
    batch_count: usize,
    initial_params: DVector<f64>,
}

impl RegressionProblem {
    pub fn new(
        features: DMatrix<f64>,
        labels: DVector<f64>,
        batch_count: usize,
        initial_params: DVector<f64>,
    ) -> Result<Self> {
        let n = features.nrows();
        if n == 0 || batch_count == 0 || n % batch_count != 0 {
            return Err(Error::Divisibility {
                what: "samples",
                count: n,
                parts: batch_count,
            });
        }
        if labels.len() != n || initial_params.len() != features.ncols() {
            return Err(Error::InvalidConfig("mismatched problem dimensions".into()));
        }
        Ok(Self {
            features,
            labels,
            batch_count,
            initial_params,
        })
    }

    /// Random well-scaled instance: gaussian features, labels from a hidden
    /// parameter vector plus noise, zero start.
    pub fn random(samples_per_batch: usize, dim: usize, batch_count: usize, seed: u64) -> Self {
        let n = samples_per_batch * batch_count;
        let mut rng = trial_rng(seed, 0xB00C);
        let normal = StandardNormal;
        let features = DMatrix::from_fn(n, dim, |_, _| normal.sample(&mut rng));
        let hidden = DVector::from_fn(dim, |_, _| normal.sample(&mut rng));
        let labels = &features * &hidden
            + DVector::from_fn(n, |_, _| 0.1 * <StandardNormal as Distribution<f64>>::sample(&normal, &mut rng));
        Self {
            features,
            labels,
            batch_count,
            initial_params: DVector::zeros(dim),
        }
    }

    pub fn batch_count(&self) -> usize {
        self.batch_count
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn samples(&self) -> usize {
        self.features.nrows()
    }

    pub fn features(&self) -> &DMatrix<f64> {
        &self.features
    }

    pub fn labels(&self) -> &DVector<f64> {
        &self.labels
    }

    pub fn initial_params(&self) -> &DVector<f64> {
        &self.initial_params
    }

    pub fn batch_range(&self, batch: usize) -> Result<std::ops::Range<usize>> {
        if batch >= self.batch_count {
            return Err(Error::BatchOutOfRange {
                batch,
                batches: self.batch_count,
            });
        }
        let size = self.samples() / self.batch_count;
        Ok(batch * size..(batch + 1) * size)
    }

    /// Mean squared-error loss over the whole dataset.
    pub fn loss(&self, params: &DVector<f64>) -> f64 {
        let r = &self.features * params - &self.labels;
        r.norm_squared() / self.samples() as f64
    }

    /// Largest eigenvalue of the loss Hessian `(2/n) X'X`; a safe constant
    /// step size is anything below `2 / lipschitz()`.
    pub fn lipschitz(&self) -> f64 {
        let n = self.samples() as f64;
        let gram = self.features.transpose() * &self.features * (2.0 / n);
        gram.symmetric_eigenvalues().max()
    }
}

/// Gradient of the squared-error loss `(x'p - y)^2` averaged over one batch.
pub fn partial_gradient(
    problem: &RegressionProblem,
    batch: usize,
    params: &DVector<f64>,
) -> Result<DVector<f64>> {
    let range = problem.batch_range(batch)?;
    let size = range.len();
    let mut grad = DVector::zeros(problem.dim());
    for i in range {
        let x = problem.features.row(i).transpose();
        let residual = x.dot(params) - problem.labels[i];
        grad.axpy(2.0 * residual, &x, 1.0);
    }
    Ok(grad / size as f64)
}

/// Average of all partial gradients — what the master must reconstruct.
pub fn full_gradient(problem: &RegressionProblem, params: &DVector<f64>) -> Result<DVector<f64>> {
    let mut sum = DVector::zeros(problem.dim());
    for k in 0..problem.batch_count {
        sum += partial_gradient(problem, k, params)?;
    }
    Ok(sum / problem.batch_count as f64)
}

/// Messages a straggler pattern makes available, per cluster: the distinct
/// coded rows plus any worker that finished enough to send a cluster
/// average. `pattern[w]` is the number of local computations worker `w`
/// completed.
fn available_messages(
    inst: &SchemeInstance,
    pattern: &[usize],
) -> Result<Vec<(Vec<usize>, Option<usize>)>> {
    let cfg = inst.config();
    if pattern.len() != cfg.workers {
        return Err(Error::InvalidConfig(format!(
            "pattern covers {} workers, expected {}",
            pattern.len(),
            cfg.workers
        )));
    }
    if let Some((w, &c)) = pattern.iter().enumerate().find(|&(_, &c)| c > cfg.load) {
        return Err(Error::InvalidConfig(format!(
            "worker {w} cannot complete {c} of {} computations",
            cfg.load
        )));
    }
    let code = inst.cluster_code();
    let mut out = Vec::with_capacity(cfg.clusters);
    for cluster in 0..cfg.clusters {
        let mut seen = vec![false; code.support.rows()];
        let mut rows = Vec::new();
        let mut average = None;
        for (local, &worker) in inst.partition().workers_of(cluster).iter().enumerate() {
            for msg in code.schedule.messages_of(local) {
                if msg.computations > pattern[worker] {
                    continue;
                }
                match msg.kind {
                    MessageKind::Row(r) => {
                        if !seen[r] {
                            seen[r] = true;
                            rows.push(r);
                        }
                    }
                    MessageKind::ClusterAverage => {
                        average.get_or_insert(worker);
                    }
                }
            }
        }
        rows.sort_unstable();
        out.push((rows, average));
    }
    Ok(out)
}

/// Whether every cluster can decode under the pattern.
pub fn pattern_admissible(inst: &SchemeInstance, pattern: &[usize]) -> Result<bool> {
    let threshold = inst.cluster_code().threshold;
    Ok(available_messages(inst, pattern)?
        .iter()
        .all(|(rows, avg)| avg.is_some() || rows.len() >= threshold))
}

/// Draws per-worker completion counts uniformly until the pattern is
/// admissible; falls back to everyone-finished, which always is.
pub fn random_admissible_pattern<R: Rng + ?Sized>(
    inst: &SchemeInstance,
    rng: &mut R,
) -> Result<Vec<usize>> {
    let cfg = inst.config();
    for _ in 0..200 {
        let pattern: Vec<usize> = (0..cfg.workers)
            .map(|_| rng.random_range(0..=cfg.load))
            .collect();
        if pattern_admissible(inst, &pattern)? {
            return Ok(pattern);
        }
    }
    Ok(vec![cfg.load; cfg.workers])
}

/// Decodes the all-batch average of arbitrary vectors (one per mini-batch)
/// from the messages a straggler pattern leaves available. This is the
/// loss-agnostic core of the round trip.
pub fn combine_available(
    inst: &SchemeInstance,
    vectors: &[DVector<f64>],
    pattern: &[usize],
) -> Result<DVector<f64>> {
    let cfg = inst.config();
    if !inst.has_certifiable_code() {
        return Err(Error::Unsupported(
            "threshold baselines carry no decodable code".into(),
        ));
    }
    if vectors.len() != cfg.workers {
        return Err(Error::InvalidConfig(format!(
            "need one vector per batch: got {}, expected {}",
            vectors.len(),
            cfg.workers
        )));
    }
    let code = inst.cluster_code();
    let dim = vectors[0].len();
    let mut total = DVector::zeros(dim);

    for (cluster, (rows, average)) in available_messages(inst, pattern)?.iter().enumerate() {
        let batches = inst.partition().batches_of(cluster);
        let parts: Vec<DVector<f64>> = batches.iter().map(|&b| vectors[b].clone()).collect();

        let cluster_value = if average.is_some() {
            let mut avg = DVector::zeros(dim);
            for part in &parts {
                avg += part;
            }
            avg / parts.len() as f64
        } else {
            match decode_interpolating(rows, &code.encoding)? {
                DecodeOutcome::Infeasible { .. } => {
                    return Err(Error::InfeasiblePattern { cluster });
                }
                DecodeOutcome::Decoded(sol) => {
                    let mut acc = DVector::zeros(dim);
                    for (&row, &coeff) in sol.rows.iter().zip(&sol.coefficients) {
                        let message = code.encoding.encode_message(row, &parts);
                        acc.axpy(coeff, &message, 1.0);
                    }
                    acc
                }
            }
        };
        // cluster codes target the cluster average with weight 1/cols, so
        // clusters recombine with equal weight 1/P
        total.axpy(1.0 / cfg.clusters as f64, &cluster_value, 1.0);
    }
    Ok(total)
}

/// One encode/decode round trip against the centralized full gradient.
#[derive(Clone, Debug)]
pub struct RoundTripReport {
    pub decoded: DVector<f64>,
    pub reference: DVector<f64>,
    pub max_abs_error: f64,
    /// Max-norm error relative to the gradient scale.
    pub max_rel_error: f64,
}

pub fn coded_round_trip(
    problem: &RegressionProblem,
    params: &DVector<f64>,
    inst: &SchemeInstance,
    pattern: &[usize],
) -> Result<RoundTripReport> {
    let cfg = inst.config();
    if problem.batch_count != cfg.workers {
        return Err(Error::InvalidConfig(format!(
            "problem has {} batches, scheme expects {}",
            problem.batch_count, cfg.workers
        )));
    }
    let grads: Vec<DVector<f64>> = (0..problem.batch_count)
        .map(|k| partial_gradient(problem, k, params))
        .collect::<Result<_>>()?;
    let mut reference = DVector::zeros(problem.dim());
    for g in &grads {
        reference += g;
    }
    reference /= problem.batch_count as f64;

    let decoded = combine_available(inst, &grads, pattern)?;
    let max_abs_error = (&decoded - &reference).amax();
    let scale = reference.amax().max(1e-12);
    Ok(RoundTripReport {
        max_rel_error: max_abs_error / scale,
        decoded,
        reference,
        max_abs_error,
    })
}

/// Runs `steps` of coded synchronous gradient descent with a fresh random
/// admissible straggler pattern per step. Returns the parameter trajectory,
/// starting point included; flags a decode bug if the loss rises for more
/// than ten consecutive steps.
pub fn run_dgd(
    problem: &RegressionProblem,
    inst: &SchemeInstance,
    steps: usize,
    learning_rate: f64,
    seed: u64,
) -> Result<Vec<DVector<f64>>> {
    const MAX_STREAK: usize = 10;
    let mut params = problem.initial_params.clone();
    let mut trajectory = Vec::with_capacity(steps + 1);
    trajectory.push(params.clone());
    let mut prev_loss = problem.loss(&params);
    let mut streak = 0;

    for step in 0..steps {
        let mut rng = trial_rng(seed, step as u64);
        let pattern = random_admissible_pattern(inst, &mut rng)?;
        let grads: Vec<DVector<f64>> = (0..problem.batch_count)
            .map(|k| partial_gradient(problem, k, &params))
            .collect::<Result<_>>()?;
        let decoded = combine_available(inst, &grads, &pattern)?;
        params.axpy(-learning_rate, &decoded, 1.0);
        trajectory.push(params.clone());

        let loss = problem.loss(&params);
        if loss > prev_loss {
            streak += 1;
            if streak > MAX_STREAK {
                return Err(Error::Divergence {
                    step,
                    streak: MAX_STREAK,
                });
            }
        } else {
            streak = 0;
        }
        prev_loss = loss;
    }
    Ok(trajectory)
}

/// Sweeps random admissible patterns through round trips; used by the
/// verification command.
pub fn round_trip_sweep(
    inst: &SchemeInstance,
    sweeps: usize,
    seed: u64,
) -> Result<(f64, Vec<usize>)> {
    let cfg = inst.config();
    let problem = RegressionProblem::random(4, 6, cfg.workers, seed);
    let mut rng = trial_rng(seed, 0x51EE9);
    let mut worst = 0.0f64;
    let mut worst_pattern = Vec::new();
    let params = DVector::from_element(problem.dim(), 0.5);
    for _ in 0..sweeps {
        let pattern = random_admissible_pattern(inst, &mut rng)?;
        let report = coded_round_trip(&problem, &params, inst, &pattern)?;
        if report.max_rel_error > worst {
            worst = report.max_rel_error;
            worst_pattern = pattern;
        }
    }
    Ok((worst, worst_pattern))
}

impl SchemeInstance {
    /// Whether gradients can be round-tripped through this scheme at all.
    pub fn supports_round_trip(&self) -> bool {
        self.config().scheme != SchemeKind::ThresholdBaseline
    }
}
