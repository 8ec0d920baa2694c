//! Scheme construction and Monte Carlo replay.
//!
//! One trial samples every worker's timeline, turns the per-worker message
//! schedule into a stream of (ready time, message) events, and feeds each
//! cluster's collector until it can decode — by gathering `threshold`
//! distinct rows, or by receiving a cluster-average message in the hybrid
//! scheme. Communication is instantaneous and lossless, so completion time
//! is purely computation-driven.

use rayon::prelude::*;

use crate::assignment::{
    build_cyclic_assignment, build_message_schedule, expand_virtual, partition_clusters,
    shrink_correlated, DesignParams, MessageKind, MessageSchedule,
};
use crate::coding::{build_encoding_matrix, decode_threshold, verify_code, EncodingMatrix};
use crate::error::{Error, Result};
use crate::model::{
    ClusterOutcome, ClusterPartition, IterationOutcome, MetricsSummary, SchemeConfig, SchemeKind,
    SupportMatrix, TrialRecord, WorkerTimeline,
};
use crate::runtime;

/// Code shared by every cluster of a scheme (clusters are structurally
/// identical up to batch relabeling).
#[derive(Clone, Debug)]
pub struct ClusterCode {
    pub support: SupportMatrix,
    pub encoding: EncodingMatrix,
    pub schedule: MessageSchedule,
    pub threshold: usize,
}

/// A fully constructed scheme, ready to simulate or round-trip gradients.
#[derive(Clone, Debug)]
pub struct SchemeInstance {
    config: SchemeConfig,
    partition: ClusterPartition,
    code: ClusterCode,
    hybrid: bool,
    /// Set for threshold baselines, whose threshold is user-supplied rather
    /// than derived (and certifiable) from the support matrix.
    external_threshold: bool,
}

impl SchemeInstance {
    pub fn config(&self) -> &SchemeConfig {
        &self.config
    }

    pub fn partition(&self) -> &ClusterPartition {
        &self.partition
    }

    pub fn cluster_code(&self) -> &ClusterCode {
        &self.code
    }

    pub fn is_hybrid(&self) -> bool {
        self.hybrid
    }

    /// Whether the decode threshold comes from the code itself and can be
    /// certified by [`verify_code`].
    pub fn has_certifiable_code(&self) -> bool {
        !self.external_threshold
    }

    /// Messages a single worker may send per iteration.
    pub fn messages_per_worker(&self) -> usize {
        (0..self.code.schedule.workers())
            .map(|w| self.code.schedule.messages_of(w).len())
            .max()
            .unwrap_or(0)
    }

    #[cfg(test)]
    pub(crate) fn cluster_code_mut(&mut self) -> &mut ClusterCode {
        &mut self.code
    }
}

/// Runs the threshold certificate for the instance's per-cluster code.
pub fn verify_scheme_code(inst: &SchemeInstance) -> Result<crate::coding::CertificateReport> {
    if !inst.has_certifiable_code() {
        return Err(Error::Unsupported(
            "threshold baselines have no certifiable code".into(),
        ));
    }
    verify_code(&inst.code.encoding, inst.code.threshold)
}

/// Builds the per-cluster support matrix, encoding matrix, schedule and
/// threshold for a validated configuration.
pub fn build_scheme(cfg: &SchemeConfig) -> Result<SchemeInstance> {
    let cfg = cfg.clone().validated()?;
    let cols = cfg.cluster_cols();
    let partition = partition_clusters(cfg.workers, cfg.clusters, cfg.workers)?;
    let base = build_cyclic_assignment(cols, cfg.load)?;

    let mut hybrid = false;
    let mut external_threshold = false;
    let (support, mut schedule) = match cfg.scheme {
        SchemeKind::Gc | SchemeKind::FractionalRepetition => {
            let schedule = build_message_schedule(
                &base,
                &DesignParams::Correlated {
                    load: cfg.load,
                    order: cfg.load,
                },
            )?;
            (base, schedule)
        }
        SchemeKind::UcMmc => correlated_parts(&base, cfg.load, 1)?,
        SchemeKind::GcMmcCorrelated => correlated_parts(&base, cfg.load, cfg.order.unwrap())?,
        SchemeKind::GcMmcUncorrelated => {
            uncorrelated_parts(&base, cfg.order_vector.as_ref().unwrap())?
        }
        SchemeKind::Hybrid => {
            hybrid = true;
            match &cfg.order_vector {
                Some(ov) => uncorrelated_parts(&base, ov)?,
                None => correlated_parts(&base, cfg.load, cfg.order.unwrap())?,
            }
        }
        SchemeKind::ThresholdBaseline => {
            external_threshold = true;
            let schedule = build_message_schedule(
                &base,
                &DesignParams::Correlated {
                    load: cfg.load,
                    order: cfg.load,
                },
            )?;
            (base, schedule)
        }
    };
    if hybrid {
        schedule = schedule.with_average_escape(cfg.load);
    }

    let encoding = build_encoding_matrix(&support)?;
    let threshold = if external_threshold {
        cfg.baseline_threshold.unwrap()
    } else {
        decode_threshold(&support)?
    };

    Ok(SchemeInstance {
        config: cfg,
        partition,
        code: ClusterCode {
            support,
            encoding,
            schedule,
            threshold,
        },
        hybrid,
        external_threshold,
    })
}

fn correlated_parts(
    base: &SupportMatrix,
    load: usize,
    order: usize,
) -> Result<(SupportMatrix, MessageSchedule)> {
    let support = shrink_correlated(base, order)?;
    let schedule = build_message_schedule(&support, &DesignParams::Correlated { load, order })?;
    Ok((support, schedule))
}

fn uncorrelated_parts(
    base: &SupportMatrix,
    order_vector: &[usize],
) -> Result<(SupportMatrix, MessageSchedule)> {
    let support = expand_virtual(base, order_vector)?;
    let schedule = build_message_schedule(
        &support,
        &DesignParams::Uncorrelated {
            order_vector: order_vector.to_vec(),
        },
    )?;
    Ok((support, schedule))
}

#[derive(Clone, Copy)]
struct Event {
    ready: f64,
    worker: usize,
    cluster: usize,
    /// Row index, or one past the last row for a cluster average.
    row_key: usize,
    average: bool,
}

/// Replays one iteration on the given timelines.
///
/// Events are processed in (ready time, worker, row) order. A cluster
/// completes when it holds `threshold` distinct rows or receives an average
/// message; the iteration completes when every cluster has. All messages
/// ready by the completion instant count toward the communication load —
/// the master cannot un-receive them — while later ones are never sent.
pub fn run_iteration(
    inst: &SchemeInstance,
    timelines: &[WorkerTimeline],
) -> Result<IterationOutcome> {
    let cfg = &inst.config;
    if timelines.len() != cfg.workers {
        return Err(Error::InvalidConfig(format!(
            "expected {} timelines, got {}",
            cfg.workers,
            timelines.len()
        )));
    }
    let n_rows = inst.code.support.rows();
    let clusters = cfg.clusters;

    let mut events = Vec::new();
    for cluster in 0..clusters {
        let members = inst.partition.workers_of(cluster);
        for (local, &worker) in members.iter().enumerate() {
            for msg in inst.code.schedule.messages_of(local) {
                if timelines[worker].load() < msg.computations {
                    return Err(Error::InvalidConfig(format!(
                        "timeline of worker {worker} covers {} computations, need {}",
                        timelines[worker].load(),
                        msg.computations
                    )));
                }
                let (row_key, average) = match msg.kind {
                    MessageKind::Row(r) => (r, false),
                    MessageKind::ClusterAverage => (n_rows, true),
                };
                events.push(Event {
                    ready: timelines[worker].completion_of(msg.computations),
                    worker,
                    cluster,
                    row_key,
                    average,
                });
            }
        }
    }
    events.sort_unstable_by(|a, b| {
        a.ready
            .total_cmp(&b.ready)
            .then(a.worker.cmp(&b.worker))
            .then(a.row_key.cmp(&b.row_key))
    });

    struct ClusterState {
        seen: Vec<bool>,
        rows_used: Vec<usize>,
        done: Option<f64>,
        average_from: Option<usize>,
    }
    let mut states: Vec<ClusterState> = (0..clusters)
        .map(|_| ClusterState {
            seen: vec![false; n_rows],
            rows_used: Vec::new(),
            done: None,
            average_from: None,
        })
        .collect();

    let mut pending = clusters;
    for ev in &events {
        let st = &mut states[ev.cluster];
        if st.done.is_some() {
            continue;
        }
        if ev.average {
            st.done = Some(ev.ready);
            st.average_from = Some(ev.worker);
            pending -= 1;
        } else if !st.seen[ev.row_key] {
            st.seen[ev.row_key] = true;
            st.rows_used.push(ev.row_key);
            if st.rows_used.len() >= inst.code.threshold {
                st.done = Some(ev.ready);
                pending -= 1;
            }
        }
        if pending == 0 {
            break;
        }
    }

    let decodable = pending == 0;
    let completion_time = if decodable {
        states
            .iter()
            .map(|s| s.done.unwrap())
            .fold(f64::NEG_INFINITY, f64::max)
    } else {
        f64::INFINITY
    };

    let mut comm_load = 0;
    let mut distinct = vec![vec![false; n_rows + 1]; clusters];
    let mut distinct_comm_load = 0;
    for ev in &events {
        if ev.ready <= completion_time {
            comm_load += 1;
            if !distinct[ev.cluster][ev.row_key] {
                distinct[ev.cluster][ev.row_key] = true;
                distinct_comm_load += 1;
            }
        }
    }

    Ok(IterationOutcome {
        completion_time,
        comm_load,
        distinct_comm_load,
        clusters: states
            .into_iter()
            .map(|s| ClusterOutcome {
                completion_time: s.done.unwrap_or(f64::INFINITY),
                rows_used: s.rows_used,
                completed_by_average: s.average_from,
            })
            .collect(),
        decodable,
    })
}

/// Runs all configured trials in parallel; trial `t` owns the RNG stream
/// derived from `(seed, t)`, so results are independent of thread count.
pub fn run_trials(inst: &SchemeInstance) -> Result<Vec<TrialRecord>> {
    let cfg = &inst.config;
    (0..cfg.iterations as u64)
        .into_par_iter()
        .map(|trial| {
            let mut rng = runtime::trial_rng(cfg.seed, trial);
            let timelines =
                runtime::sample_iteration(cfg.mu, cfg.alpha, cfg.load, cfg.workers, &mut rng)?;
            let outcome = run_iteration(inst, &timelines)?;
            Ok(TrialRecord {
                trial,
                completion_time: outcome.completion_time,
                comm_load: outcome.comm_load,
                distinct_comm_load: outcome.distinct_comm_load,
                decodable: outcome.decodable,
            })
        })
        .collect()
}

/// Certifies the instance's code, then aggregates its Monte Carlo trials.
pub fn run_experiment(cfg: &SchemeConfig) -> Result<MetricsSummary> {
    run_experiment_with(cfg, false)
}

/// As [`run_experiment`], counting only distinct rows toward the
/// communication load when `distinct_load` is set.
pub fn run_experiment_with(cfg: &SchemeConfig, distinct_load: bool) -> Result<MetricsSummary> {
    let inst = build_scheme(cfg)?;
    certify(&inst)?;
    let records = run_trials(&inst)?;
    Ok(MetricsSummary::from_trials(
        inst.config.clone(),
        &records,
        distinct_load,
    ))
}

/// Checks the threshold certificate once, so the hot loop may replace the
/// decode solve with a distinct-row count.
pub fn certify(inst: &SchemeInstance) -> Result<()> {
    if !inst.has_certifiable_code() {
        return Ok(());
    }
    let report = verify_code(&inst.code.encoding, inst.code.threshold)?;
    if report.passed() {
        Ok(())
    } else {
        Err(Error::Numerical(format!(
            "code failed its threshold certificate on {} of {} subsets (worst residual {:.3e})",
            report.failing_subsets.len(),
            report.subsets_checked,
            report.worst_residual
        )))
    }
}

/// Runs several schemes that share everything but the code design, yielding
/// one summary row per scheme.
pub fn compare_schemes(configs: &[SchemeConfig]) -> Result<Vec<MetricsSummary>> {
    compare_schemes_with(configs, false)
}

pub fn compare_schemes_with(
    configs: &[SchemeConfig],
    distinct_load: bool,
) -> Result<Vec<MetricsSummary>> {
    check_shared_params(configs)?;
    configs
        .iter()
        .map(|cfg| run_experiment_with(cfg, distinct_load))
        .collect()
}

/// Comparable schemes must agree on everything except the code design.
pub fn check_shared_params(configs: &[SchemeConfig]) -> Result<()> {
    let first = configs.first().ok_or(Error::NoSchemes)?;
    for cfg in &configs[1..] {
        let mismatch = |field: &str| {
            Err(Error::MismatchedSharedParams(format!(
                "{field} differs between {} and {}",
                first.scheme.as_str(),
                cfg.scheme.as_str()
            )))
        };
        if cfg.workers != first.workers {
            return mismatch("workers");
        }
        if cfg.load != first.load {
            return mismatch("load");
        }
        if cfg.mu != first.mu {
            return mismatch("mu");
        }
        if cfg.alpha != first.alpha {
            return mismatch("alpha");
        }
        if cfg.iterations != first.iterations {
            return mismatch("iterations");
        }
        if cfg.seed != first.seed {
            return mismatch("seed");
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(scheme: SchemeKind) -> SchemeConfig {
        SchemeConfig {
            scheme,
            workers: 40,
            load: 10,
            clusters: 4,
            order: None,
            order_vector: None,
            baseline_threshold: None,
            mu: 10.0,
            alpha: 0.01,
            iterations: 100,
            seed: 11,
        }
    }

    fn timelines_from_draws(alpha: f64, load: usize, draws: &[f64]) -> Vec<WorkerTimeline> {
        draws
            .iter()
            .map(|&x| WorkerTimeline::from_draw(alpha, load, x))
            .collect()
    }

    #[test]
    fn correlated_reference_build() {
        let cfg = SchemeConfig {
            order: Some(6),
            ..config(SchemeKind::GcMmcCorrelated)
        };
        let inst = build_scheme(&cfg).unwrap();
        let code = inst.cluster_code();
        assert_eq!(code.support.rows(), 10);
        assert_eq!(code.support.cols(), 10);
        assert!((0..10).all(|i| code.support.row_weight(i) == 6));
        assert_eq!(inst.messages_per_worker(), 5);
        assert_eq!(code.threshold, 5);
    }

    #[test]
    fn plain_gc_build() {
        let cfg = SchemeConfig {
            workers: 6,
            load: 3,
            clusters: 1,
            ..config(SchemeKind::Gc)
        };
        let inst = build_scheme(&cfg).unwrap();
        assert_eq!(inst.cluster_code().threshold, 4);
        assert_eq!(inst.messages_per_worker(), 1);
    }

    #[test]
    fn uncorrelated_reference_build() {
        let cfg = SchemeConfig {
            order_vector: Some(vec![10, 8, 6]),
            ..config(SchemeKind::GcMmcUncorrelated)
        };
        let inst = build_scheme(&cfg).unwrap();
        assert_eq!(inst.cluster_code().support.rows(), 30);
        assert_eq!(inst.cluster_code().threshold, 7);
        assert_eq!(inst.messages_per_worker(), 3);
    }

    #[test]
    fn fractional_repetition_is_all_ones_per_cluster() {
        let cfg = config(SchemeKind::FractionalRepetition);
        let inst = build_scheme(&cfg).unwrap();
        let code = inst.cluster_code();
        assert_eq!(code.support.rows(), 10);
        assert_eq!(code.threshold, 1);
        assert!((0..10).all(|i| code.support.row_weight(i) == 10));
    }

    #[test]
    fn uc_mmc_sends_every_gradient_individually() {
        let cfg = SchemeConfig {
            clusters: 1,
            ..config(SchemeKind::UcMmc)
        };
        let inst = build_scheme(&cfg).unwrap();
        let code = inst.cluster_code();
        assert!((0..code.support.rows()).all(|i| code.support.row_weight(i) == 1));
        assert_eq!(code.threshold, 40);
        assert_eq!(inst.messages_per_worker(), 10);
    }

    #[test]
    fn hybrid_swaps_final_messages_for_averages() {
        let cfg = SchemeConfig {
            workers: 5,
            load: 5,
            clusters: 1,
            order_vector: Some(vec![5, 3]),
            ..config(SchemeKind::Hybrid)
        };
        let inst = build_scheme(&cfg).unwrap();
        assert!(inst.is_hybrid());
        for w in 0..5 {
            let msgs = inst.cluster_code().schedule.messages_of(w);
            assert_eq!(msgs.len(), 2);
            assert!(matches!(msgs[0].kind, MessageKind::Row(_)));
            assert_eq!(msgs[0].computations, 3);
            assert_eq!(msgs[1].kind, MessageKind::ClusterAverage);
            assert_eq!(msgs[1].computations, 5);
        }
    }

    #[test]
    fn scheme_config_mismatch_is_rejected() {
        let cfg = SchemeConfig {
            order: None,
            ..config(SchemeKind::GcMmcCorrelated)
        };
        assert!(build_scheme(&cfg).is_err());
    }

    #[test]
    fn gc_completion_is_an_order_statistic() {
        let cfg = SchemeConfig {
            workers: 6,
            load: 3,
            clusters: 1,
            ..config(SchemeKind::Gc)
        };
        let inst = build_scheme(&cfg).unwrap();
        let draws = [0.6, 0.1, 0.4, 0.3, 0.5, 0.2];
        let timelines = timelines_from_draws(0.01, 3, &draws);
        let out = run_iteration(&inst, &timelines).unwrap();
        assert!(out.decodable);
        // 4th smallest of 3*(0.01 + x): x-sorted 0.1,0.2,0.3,0.4 -> 3*0.41
        assert!((out.completion_time - 3.0 * 0.41).abs() < 1e-12);
        assert_eq!(out.comm_load, 4);
        assert_eq!(out.rows_used_total(), 4);
    }

    #[test]
    fn three_fast_workers_complete_a_correlated_iteration() {
        // With order 2 on six workers, three workers finishing everything
        // deliver five distinct rows.
        let cfg = SchemeConfig {
            workers: 6,
            load: 3,
            clusters: 1,
            order: Some(2),
            ..config(SchemeKind::GcMmcCorrelated)
        };
        let inst = build_scheme(&cfg).unwrap();
        let slow = 1000.0;
        let draws = [0.01, 0.02, slow, 0.03, slow, slow];
        let timelines = timelines_from_draws(0.01, 3, &draws);
        let out = run_iteration(&inst, &timelines).unwrap();
        assert!(out.decodable);
        // workers 0,1,3 send rows {0,1},{1,2},{3,4} -> distinct {0,1,2,3,4}
        assert!(out.completion_time < 1.0, "stragglers were not needed");
        assert!((out.completion_time - 3.0 * 0.04).abs() < 1e-12);
        let mut rows = out.clusters[0].rows_used.clone();
        rows.sort_unstable();
        assert_eq!(rows, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn virtual_workers_beat_plain_gc_with_a_persistent_straggler() {
        // Three fast workers send two messages each, two mid-speed workers
        // one message each; the last worker never contributes.
        let fast = 0.01;
        let mid = 0.05;
        let slow = 1e6;
        let draws = [fast, fast, fast, mid, mid, slow];

        let uncorr = SchemeConfig {
            workers: 6,
            load: 3,
            clusters: 1,
            order_vector: Some(vec![3, 2]),
            ..config(SchemeKind::GcMmcUncorrelated)
        };
        let inst = build_scheme(&uncorr).unwrap();
        let timelines = timelines_from_draws(0.01, 3, &draws);
        let out = run_iteration(&inst, &timelines).unwrap();
        assert!(out.decodable);
        // 8th distinct row arrives with the mid workers' order-2 messages.
        assert!((out.completion_time - 2.0 * (0.01 + mid)).abs() < 1e-12);
        assert_eq!(out.comm_load, 8);

        let gc = SchemeConfig {
            workers: 6,
            load: 3,
            clusters: 1,
            ..config(SchemeKind::Gc)
        };
        let gc_inst = build_scheme(&gc).unwrap();
        let gc_out = run_iteration(&gc_inst, &timelines).unwrap();
        // Plain GC must wait for a fourth full worker.
        assert!((gc_out.completion_time - 3.0 * (0.01 + mid)).abs() < 1e-12);
        assert!(out.completion_time < gc_out.completion_time);
    }

    #[test]
    fn single_worker_single_task_mean() {
        let cfg = SchemeConfig {
            workers: 1,
            load: 1,
            clusters: 1,
            iterations: 100_000,
            ..config(SchemeKind::Gc)
        };
        let summary = run_experiment(&cfg).unwrap();
        // E[alpha + X] = 0.01 + 1/10
        assert!((summary.mean_completion_time - 0.11).abs() < 0.0015);
        assert_eq!(summary.undecodable_trials, 0);
    }

    #[test]
    fn gc_mean_matches_order_statistics_oracle() {
        let cfg = SchemeConfig {
            clusters: 1,
            iterations: 20_000,
            ..config(SchemeKind::Gc)
        };
        let summary = run_experiment(&cfg).unwrap();
        // 31st order statistic of 40 draws of 10(alpha + Exp(mu)):
        // 10*(0.01 + (H_40 - H_9)/10)
        let oracle = 1.5495747849681223;
        assert!(
            (summary.mean_completion_time - oracle).abs() < 0.02 * oracle,
            "mean {} vs {}",
            summary.mean_completion_time,
            oracle
        );
    }

    #[test]
    fn gc_comm_load_is_pinned_per_trial() {
        let cfg = SchemeConfig {
            clusters: 1,
            iterations: 500,
            ..config(SchemeKind::Gc)
        };
        let inst = build_scheme(&cfg).unwrap();
        for rec in run_trials(&inst).unwrap() {
            assert!(rec.comm_load >= 31 && rec.comm_load <= 40, "{}", rec.comm_load);
            assert!(rec.distinct_comm_load == rec.comm_load);
        }
    }

    #[test]
    fn identical_seed_gives_identical_summary() {
        let cfg = SchemeConfig {
            order: Some(6),
            iterations: 2_000,
            ..config(SchemeKind::GcMmcCorrelated)
        };
        let a = run_experiment(&cfg).unwrap();
        let b = run_experiment(&cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn clustering_never_hurts_plain_gc() {
        // On a shared draw, if unclustered GC decodes by t then each cluster
        // has at most load-1 stragglers, so clustered GC decodes by t too.
        let unclustered = SchemeConfig {
            workers: 12,
            load: 3,
            clusters: 1,
            iterations: 1,
            ..config(SchemeKind::Gc)
        };
        let clustered = SchemeConfig {
            clusters: 2,
            ..unclustered.clone()
        };
        let a = build_scheme(&unclustered).unwrap();
        let b = build_scheme(&clustered).unwrap();
        for trial in 0..300 {
            let mut rng = runtime::trial_rng(99, trial);
            let t = runtime::sample_iteration(10.0, 0.01, 3, 12, &mut rng).unwrap();
            let oa = run_iteration(&a, &t).unwrap();
            let ob = run_iteration(&b, &t).unwrap();
            assert!(ob.completion_time <= oa.completion_time + 1e-12);
        }
    }

    #[test]
    fn lower_orders_never_finish_later() {
        let base = SchemeConfig {
            workers: 8,
            load: 4,
            clusters: 1,
            iterations: 1,
            ..config(SchemeKind::GcMmcCorrelated)
        };
        let insts: Vec<SchemeInstance> = (1..=4)
            .map(|m| {
                build_scheme(&SchemeConfig {
                    order: Some(m),
                    ..base.clone()
                })
                .unwrap()
            })
            .collect();
        for trial in 0..200 {
            let mut rng = runtime::trial_rng(5, trial);
            let t = runtime::sample_iteration(10.0, 0.01, 4, 8, &mut rng).unwrap();
            let times: Vec<f64> = insts
                .iter()
                .map(|i| run_iteration(i, &t).unwrap().completion_time)
                .collect();
            for w in times.windows(2) {
                assert!(w[0] <= w[1] + 1e-12, "{times:?}");
            }
        }
    }

    #[test]
    fn hybrid_never_loses_to_either_parent() {
        let shared = SchemeConfig {
            workers: 5,
            load: 5,
            clusters: 1,
            iterations: 1,
            ..config(SchemeKind::Gc)
        };
        let hybrid = build_scheme(&SchemeConfig {
            scheme: SchemeKind::Hybrid,
            order_vector: Some(vec![5, 3]),
            ..shared.clone()
        })
        .unwrap();
        let mmc = build_scheme(&SchemeConfig {
            scheme: SchemeKind::GcMmcUncorrelated,
            order_vector: Some(vec![5, 3]),
            ..shared.clone()
        })
        .unwrap();
        let fr = build_scheme(&SchemeConfig {
            scheme: SchemeKind::FractionalRepetition,
            ..shared.clone()
        })
        .unwrap();
        for trial in 0..500 {
            let mut rng = runtime::trial_rng(31, trial);
            let t = runtime::sample_iteration(10.0, 0.01, 5, 5, &mut rng).unwrap();
            let th = run_iteration(&hybrid, &t).unwrap().completion_time;
            let tm = run_iteration(&mmc, &t).unwrap().completion_time;
            let tf = run_iteration(&fr, &t).unwrap().completion_time;
            assert!(th <= tm.min(tf) + 1e-12, "hybrid {th} vs mmc {tm}, fr {tf}");
        }
    }

    #[test]
    fn baseline_uses_the_supplied_threshold() {
        let cfg = SchemeConfig {
            clusters: 1,
            baseline_threshold: Some(25),
            iterations: 200,
            ..config(SchemeKind::ThresholdBaseline)
        };
        let inst = build_scheme(&cfg).unwrap();
        assert!(!inst.has_certifiable_code());
        assert_eq!(inst.cluster_code().threshold, 25);
        for rec in run_trials(&inst).unwrap() {
            assert_eq!(rec.comm_load, 25);
        }
    }

    #[test]
    fn unreachable_baseline_threshold_is_reported() {
        // Threshold 3 against clusters holding only 2 rows each: the
        // iteration must be flagged, not silently dropped.
        let cfg = SchemeConfig {
            workers: 4,
            load: 2,
            clusters: 2,
            baseline_threshold: Some(3),
            iterations: 50,
            ..config(SchemeKind::ThresholdBaseline)
        };
        let inst = build_scheme(&cfg).unwrap();
        let mut rng = runtime::trial_rng(0, 0);
        let t = runtime::sample_iteration(10.0, 0.01, 2, 4, &mut rng).unwrap();
        let out = run_iteration(&inst, &t).unwrap();
        assert!(!out.decodable);
        assert!(out.completion_time.is_infinite());
        let summary = run_experiment(&cfg).unwrap();
        assert_eq!(summary.undecodable_trials, 50);
    }

    #[test]
    fn comparison_requires_shared_parameters() {
        let a = SchemeConfig {
            clusters: 1,
            iterations: 10,
            ..config(SchemeKind::Gc)
        };
        let b = SchemeConfig {
            seed: 999,
            ..a.clone()
        };
        assert!(matches!(
            compare_schemes(&[a.clone(), b]),
            Err(Error::MismatchedSharedParams(_))
        ));
        assert!(matches!(compare_schemes(&[]), Err(Error::NoSchemes)));
        let table = compare_schemes(&[a.clone()]).unwrap();
        assert_eq!(table.len(), 1);
        assert_eq!(table[0], run_experiment(&a).unwrap());
    }

    #[test]
    fn distinct_load_collapses_correlated_duplicates() {
        let cfg = SchemeConfig {
            workers: 6,
            load: 3,
            clusters: 1,
            order: Some(2),
            iterations: 400,
            ..config(SchemeKind::GcMmcCorrelated)
        };
        let plain = run_experiment_with(&cfg, false).unwrap();
        let distinct = run_experiment_with(&cfg, true).unwrap();
        assert!(distinct.mean_comm_load <= plain.mean_comm_load);
        assert_eq!(plain.mean_completion_time, distinct.mean_completion_time);
    }
}
