//! Assignment construction: cluster partitions, cyclic assignment matrices,
//! the shrunken support of the correlated design, the virtual-worker mask of
//! the uncorrelated design, and the per-worker message schedules they induce.
//!
//! Within a cluster of `cols` batches, worker `w` computes its assigned
//! batches in cyclic ascending order starting at its own index:
//! `w, w+1, ..., w+load-1 (mod cols)`. Every construction here derives from
//! that order.

use crate::error::{Error, Result};
use crate::model::{ClusterPartition, SupportMatrix};

/// Splits `workers` workers and `batch_count` batches into `clusters`
/// contiguous equal blocks.
pub fn partition_clusters(
    workers: usize,
    clusters: usize,
    batch_count: usize,
) -> Result<ClusterPartition> {
    if clusters == 0 || workers % clusters != 0 {
        return Err(Error::Divisibility {
            what: "workers",
            count: workers,
            parts: clusters,
        });
    }
    if batch_count % clusters != 0 {
        return Err(Error::Divisibility {
            what: "batches",
            count: batch_count,
            parts: clusters,
        });
    }
    let wsize = workers / clusters;
    let bsize = batch_count / clusters;
    let cluster_workers = (0..clusters)
        .map(|p| (p * wsize..(p + 1) * wsize).collect())
        .collect();
    let cluster_batches = (0..clusters)
        .map(|p| (p * bsize..(p + 1) * bsize).collect())
        .collect();
    Ok(ClusterPartition::new(cluster_workers, cluster_batches))
}

/// Square cyclic assignment of width `load`: row `i` supports batches
/// `i, i+1, ..., i+load-1 (mod cols)`, so every column carries exactly
/// `load` ones. Row `i` is owned by worker `i`.
pub fn build_cyclic_assignment(cols: usize, load: usize) -> Result<SupportMatrix> {
    if load == 0 || load > cols {
        return Err(Error::LoadOutOfRange { load, cols });
    }
    let supports: Vec<Vec<usize>> = (0..cols)
        .map(|i| (0..load).map(|j| (i + j) % cols).collect())
        .collect();
    let owners = (0..cols).map(|i| vec![i]).collect();
    SupportMatrix::from_supports(cols, &supports, owners)
}

/// Correlated design: keeps only the first `order` ones of each row, in the
/// owning worker's computation order. Every worker whose assignment still
/// covers a shrunken row becomes an eligible sender of that row.
///
/// For a cyclic input of width `load` this yields the cyclic matrix of width
/// `order`, with `load - order + 1` eligible senders per row.
pub fn shrink_correlated(matrix: &SupportMatrix, order: usize) -> Result<SupportMatrix> {
    let load = matrix.row_weight(0);
    for i in 0..matrix.rows() {
        let w = matrix.row_weight(i);
        if w != load {
            return Err(Error::NonuniformRowWeight {
                row: i,
                got: w,
                expected: load,
            });
        }
    }
    if order == 0 || order > load {
        return Err(Error::OrderOutOfRange { order, load });
    }

    let cols = matrix.cols();
    let full_supports: Vec<Vec<usize>> = (0..matrix.rows())
        .map(|i| computation_order(matrix, i))
        .collect();
    let supports: Vec<Vec<usize>> = full_supports
        .iter()
        .map(|order_list| order_list[..order].to_vec())
        .collect();

    // A worker may send any shrunken row contained in its own assignment.
    let owners: Vec<Vec<usize>> = supports
        .iter()
        .map(|s| {
            (0..matrix.rows())
                .filter(|&w| s.iter().all(|&k| matrix.get(w, k)))
                .collect()
        })
        .collect();
    SupportMatrix::from_supports(cols, &supports, owners)
}

/// Uncorrelated design: attaches one virtual worker per extra order-vector
/// entry. Real worker `i` owns rows `i*(l+1) .. i*(l+1)+l`, the j-th of
/// which supports the first `order_vector[j]` batches of `i`'s computation
/// order. Each row has exactly one eligible sender.
pub fn expand_virtual(matrix: &SupportMatrix, order_vector: &[usize]) -> Result<SupportMatrix> {
    let load = matrix.row_weight(0);
    if order_vector.is_empty() || order_vector[0] != load {
        return Err(Error::DesignMismatch(format!(
            "order_vector must start at the row weight {}: {:?}",
            load, order_vector
        )));
    }
    if order_vector.iter().any(|&m| m == 0 || m > load) {
        return Err(Error::OrderOutOfRange {
            order: *order_vector.iter().max().unwrap(),
            load,
        });
    }

    let cols = matrix.cols();
    let mut supports = Vec::with_capacity(matrix.rows() * order_vector.len());
    let mut owners = Vec::with_capacity(supports.capacity());
    for i in 0..matrix.rows() {
        let order_list = computation_order(matrix, i);
        for &m in order_vector {
            supports.push(order_list[..m].to_vec());
            owners.push(vec![i]);
        }
    }
    SupportMatrix::from_supports(cols, &supports, owners)
}

/// Row support sorted by the owning worker's cyclic computation order
/// (ascending batch index starting at the worker's own index).
fn computation_order(matrix: &SupportMatrix, worker: usize) -> Vec<usize> {
    let cols = matrix.cols();
    let mut support = matrix.row_support(worker);
    support.sort_by_key(|&k| (k + cols - worker % cols) % cols);
    support
}

/// Which coded message this schedule entry emits.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MessageKind {
    /// A row of the support matrix.
    Row(usize),
    /// The plain average of the cluster's partial gradients (hybrid escape
    /// hatch: decodes the cluster on its own).
    ClusterAverage,
}

/// One sendable message: ready once the worker has finished `computations`
/// local partial gradients.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ScheduledMessage {
    pub kind: MessageKind,
    pub computations: usize,
}

/// Ordered send list per (cluster-local) worker.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MessageSchedule {
    per_worker: Vec<Vec<ScheduledMessage>>,
}

impl MessageSchedule {
    pub fn workers(&self) -> usize {
        self.per_worker.len()
    }

    pub fn messages_of(&self, worker: usize) -> &[ScheduledMessage] {
        &self.per_worker[worker]
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, &ScheduledMessage)> {
        self.per_worker
            .iter()
            .enumerate()
            .flat_map(|(w, list)| list.iter().map(move |m| (w, m)))
    }

    /// Replaces every entry needing `load` computations with a cluster
    /// average. Used by the hybrid scheme.
    pub(crate) fn with_average_escape(mut self, load: usize) -> Self {
        for list in &mut self.per_worker {
            for msg in list.iter_mut() {
                if msg.computations == load {
                    msg.kind = MessageKind::ClusterAverage;
                }
            }
        }
        self
    }
}

/// Code design a schedule is derived from.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum DesignParams {
    Correlated { load: usize, order: usize },
    Uncorrelated { order_vector: Vec<usize> },
}

/// Derives when each worker can send which row.
///
/// Correlated: worker `w`'s s-th message (s = 1..=load-order+1) is row
/// `(w + s - 1) mod cols` and needs `order + s - 1` local computations —
/// the sliding window over its most recently finished gradients.
///
/// Uncorrelated: worker `w` sends its own rows ordered by ascending order;
/// the order-m row needs exactly m computations.
pub fn build_message_schedule(
    support: &SupportMatrix,
    design: &DesignParams,
) -> Result<MessageSchedule> {
    match design {
        DesignParams::Correlated { load, order } => {
            let cols = support.cols();
            if support.rows() != cols {
                return Err(Error::DesignMismatch(format!(
                    "correlated design expects one row per worker, got {} rows for {} columns",
                    support.rows(),
                    cols
                )));
            }
            if *order == 0 || order > load || *load > cols {
                return Err(Error::DesignMismatch(format!(
                    "invalid correlated parameters: load {load}, order {order}, columns {cols}"
                )));
            }
            if (0..support.rows()).any(|i| support.row_weight(i) != *order) {
                return Err(Error::DesignMismatch(format!(
                    "support rows are not all of width {order}"
                )));
            }
            let messages_per_worker = load - order + 1;
            let per_worker = (0..cols)
                .map(|w| {
                    (1..=messages_per_worker)
                        .map(|s| ScheduledMessage {
                            kind: MessageKind::Row((w + s - 1) % cols),
                            computations: order + s - 1,
                        })
                        .collect()
                })
                .collect();
            Ok(MessageSchedule { per_worker })
        }
        DesignParams::Uncorrelated { order_vector } => {
            let families = order_vector.len();
            if families == 0 || support.rows() % families != 0 {
                return Err(Error::DesignMismatch(format!(
                    "{} rows do not split into families of {}",
                    support.rows(),
                    families
                )));
            }
            let workers = support.rows() / families;
            for w in 0..workers {
                for (j, &m) in order_vector.iter().enumerate() {
                    let row = w * families + j;
                    if support.row_weight(row) != m || support.owners(row) != [w] {
                        return Err(Error::DesignMismatch(format!(
                            "row {row} does not match order {m} owned by worker {w}"
                        )));
                    }
                }
            }
            let per_worker = (0..workers)
                .map(|w| {
                    let mut list: Vec<ScheduledMessage> = order_vector
                        .iter()
                        .enumerate()
                        .map(|(j, &m)| ScheduledMessage {
                            kind: MessageKind::Row(w * families + j),
                            computations: m,
                        })
                        .collect();
                    list.sort_by_key(|m| m.computations);
                    list
                })
                .collect();
            Ok(MessageSchedule { per_worker })
        }
    }
}
