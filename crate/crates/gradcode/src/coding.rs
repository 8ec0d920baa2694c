//! Real-valued code construction and decoding.
//!
//! Each mini-batch gradient is embedded into a polynomial that vanishes at
//! the evaluation points of every row not allowed to carry it, and equals
//! `1/cols` at a common target point. A row's coded message is then the sum
//! of all embedded polynomials evaluated at the row's own point, and the
//! master recovers the batch average by interpolating the degree-`h` sum
//! polynomial from any `h + 1` received rows, where `h` is the zero count of
//! the sparsest support column.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::SupportMatrix;

/// Relative decodability tolerance: `1e-8` scaled by the received
/// submatrix's largest entry magnitude, which separates rank deficiency
/// from roundoff across the code sizes in scope.
pub fn decode_tolerance(submatrix_amax: f64) -> f64 {
    1e-8 * submatrix_amax.max(1.0)
}

/// Subsets drawn when a code is too large to certify exhaustively.
const VERIFY_SAMPLES: usize = 10_000;
const VERIFY_SEED: u64 = 0x5eed_c0de;

/// Minimum number of received rows that guarantees recovery: one more than
/// the zero count of the sparsest column.
pub fn decode_threshold(support: &SupportMatrix) -> Result<usize> {
    let mut h = 0;
    for k in 0..support.cols() {
        let z = support.column_zero_count(k);
        if z == support.rows() {
            return Err(Error::AllZeroColumn(k));
        }
        h = h.max(z);
    }
    Ok(h + 1)
}

/// Deterministic evaluation points for `n` rows plus the decoding target.
///
/// The points are the half-integer grid `±(j + 1/2) · 2/n` (odd `n` gets one
/// extra point at `1.0`), handed out center-outward with alternating signs.
/// Cyclic designs zero out contiguous row ranges, so this keeps every zero
/// set spread across both sides of the target point `0`, which is what keeps
/// the interpolation weights small.
pub fn choose_evaluation_points(n: usize) -> (Vec<f64>, f64) {
    let step = 2.0 / n as f64;
    let mut points = Vec::with_capacity(n);
    for j in 0..n / 2 {
        let x = (j as f64 + 0.5) * step;
        points.push(x);
        points.push(-x);
    }
    if n % 2 == 1 {
        points.push(1.0);
    }
    (points, 0.0)
}

/// Real combination-coefficient matrix built from a support matrix.
#[derive(Clone, Debug)]
pub struct EncodingMatrix {
    support: SupportMatrix,
    matrix: DMatrix<f64>,
    eval_points: Vec<f64>,
    target_point: f64,
    degree: usize,
    condition: f64,
}

impl EncodingMatrix {
    pub fn rows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn cols(&self) -> usize {
        self.matrix.ncols()
    }

    #[inline]
    pub fn coefficient(&self, row: usize, col: usize) -> f64 {
        self.matrix[(row, col)]
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn support(&self) -> &SupportMatrix {
        &self.support
    }

    pub fn eval_points(&self) -> &[f64] {
        &self.eval_points
    }

    pub fn target_point(&self) -> f64 {
        self.target_point
    }

    /// Degree `h` of the sum polynomial (zeros in the sparsest column).
    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn threshold(&self) -> usize {
        self.degree + 1
    }

    /// Condition number of the full Vandermonde system on the evaluation
    /// grid; a diagnostic, not used for decoding.
    pub fn condition(&self) -> f64 {
        self.condition
    }

    /// Coded message of one row: the support-weighted combination of the
    /// cluster's per-batch vectors.
    pub fn encode_message(&self, row: usize, parts: &[DVector<f64>]) -> DVector<f64> {
        assert_eq!(parts.len(), self.cols());
        let dim = parts[0].len();
        let mut out = DVector::zeros(dim);
        for (k, part) in parts.iter().enumerate() {
            let b = self.matrix[(row, k)];
            if b != 0.0 {
                out.axpy(b, part, 1.0);
            }
        }
        out
    }

    #[cfg(test)]
    pub(crate) fn perturb(&mut self, row: usize, col: usize, delta: f64) {
        self.matrix[(row, col)] += delta;
    }
}

/// Builds the coefficient matrix for a support matrix.
///
/// Column `k`'s polynomial is `f_k(x) = (1/cols) * prod_{j in Z_k} (x - a_j)
/// / (g - a_j)` with `Z_k` the rows whose support excludes batch `k`; entry
/// `(i, k)` is `f_k(a_i)`. Zeros of the support map to exact zeros of the
/// matrix, and every `f_k(g) = 1/cols` by construction.
pub fn build_encoding_matrix(support: &SupportMatrix) -> Result<EncodingMatrix> {
    let n = support.rows();
    let c = support.cols();
    let degree = decode_threshold(support)? - 1;
    let (points, target) = choose_evaluation_points(n);

    let mut matrix = DMatrix::zeros(n, c);
    for k in 0..c {
        let zero_rows: Vec<usize> = (0..n).filter(|&i| !support.get(i, k)).collect();
        let mut denom = 1.0;
        for &j in &zero_rows {
            denom *= target - points[j];
        }
        if denom == 0.0 || !denom.is_finite() {
            return Err(Error::Numerical(format!(
                "degenerate root product for column {k}"
            )));
        }
        let scale = 1.0 / (c as f64 * denom);
        for i in 0..n {
            if support.get(i, k) {
                let mut num = 1.0;
                for &j in &zero_rows {
                    num *= points[i] - points[j];
                }
                matrix[(i, k)] = num * scale;
            }
        }
    }

    let condition = vandermonde_condition(&points);
    log::debug!(
        "encoding matrix {}x{}: degree {}, grid condition {:.3e}",
        n,
        c,
        degree,
        condition
    );

    Ok(EncodingMatrix {
        support: support.clone(),
        matrix,
        eval_points: points,
        target_point: target,
        degree,
        condition,
    })
}

fn vandermonde_condition(points: &[f64]) -> f64 {
    let n = points.len();
    let v = DMatrix::from_fn(n, n, |i, p| points[i].powi(p as i32));
    let sv = v.singular_values();
    let smax = sv.max();
    let smin = sv.min();
    if smin > 0.0 {
        smax / smin
    } else {
        f64::INFINITY
    }
}

/// Combination coefficients recovering the batch average from a row subset.
#[derive(Clone, Debug, PartialEq)]
pub struct DecodeSolution {
    /// Row indices actually used (sorted, deduplicated).
    pub rows: Vec<usize>,
    /// One coefficient per entry of `rows`.
    pub coefficients: Vec<f64>,
    /// Max-norm of the defect against the all-`1/cols` target row.
    pub residual: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub enum DecodeOutcome {
    Decoded(DecodeSolution),
    Infeasible { residual: f64 },
}

impl DecodeOutcome {
    pub fn is_decoded(&self) -> bool {
        matches!(self, DecodeOutcome::Decoded(_))
    }

    pub fn solution(&self) -> Option<&DecodeSolution> {
        match self {
            DecodeOutcome::Decoded(s) => Some(s),
            DecodeOutcome::Infeasible { .. } => None,
        }
    }
}

fn clean_rows(rows: &[usize], n: usize) -> Result<Vec<usize>> {
    if rows.is_empty() {
        return Err(Error::InvalidConfig("decode needs at least one row".into()));
    }
    let mut rows = rows.to_vec();
    rows.sort_unstable();
    rows.dedup();
    if let Some(&r) = rows.iter().find(|&&r| r >= n) {
        return Err(Error::InvalidConfig(format!(
            "row {r} out of range for a {n}-row code"
        )));
    }
    Ok(rows)
}

/// Least-squares decoder: solves `a' B_S = (1/cols) 1'` and accepts the
/// solution iff the residual stays within [`decode_tolerance`]. Duplicate
/// rows are collapsed first.
pub fn decode(rows: &[usize], enc: &EncodingMatrix) -> Result<DecodeOutcome> {
    let rows = clean_rows(rows, enc.rows())?;
    let c = enc.cols();
    let bt = DMatrix::from_fn(c, rows.len(), |k, i| enc.matrix[(rows[i], k)]);
    let target = DVector::from_element(c, 1.0 / c as f64);

    let svd = bt
        .clone()
        .try_svd(true, true, f64::EPSILON, 0)
        .ok_or_else(|| Error::Numerical("SVD did not converge".into()))?;
    let cutoff = svd.singular_values.max() * 1e-12;
    let coeffs = svd
        .solve(&target, cutoff)
        .map_err(|e| Error::Numerical(e.to_string()))?;
    let residual = (&bt * &coeffs - &target).amax();

    if residual <= decode_tolerance(bt.amax()) {
        Ok(DecodeOutcome::Decoded(DecodeSolution {
            rows,
            coefficients: coeffs.iter().copied().collect(),
            residual,
        }))
    } else {
        Ok(DecodeOutcome::Infeasible { residual })
    }
}

/// Interpolation decoder: the coefficients are the Lagrange basis weights of
/// the rows' evaluation points at the target point. Exact whenever at least
/// `threshold` distinct rows are given; below that the interpolant misses
/// the sum polynomial and the residual check reports `Infeasible`.
pub fn decode_interpolating(rows: &[usize], enc: &EncodingMatrix) -> Result<DecodeOutcome> {
    let rows = clean_rows(rows, enc.rows())?;
    let xs: Vec<f64> = rows.iter().map(|&r| enc.eval_points[r]).collect();
    let g = enc.target_point;

    let mut coeffs = Vec::with_capacity(xs.len());
    for i in 0..xs.len() {
        let mut w = 1.0;
        for j in 0..xs.len() {
            if j != i {
                w *= (g - xs[j]) / (xs[i] - xs[j]);
            }
        }
        coeffs.push(w);
    }

    let c = enc.cols();
    let mut amax = 0.0f64;
    let mut residual = 0.0f64;
    for k in 0..c {
        let mut acc = 0.0;
        for (i, &r) in rows.iter().enumerate() {
            let b = enc.matrix[(r, k)];
            acc += coeffs[i] * b;
            amax = amax.max(b.abs());
        }
        residual = residual.max((acc - 1.0 / c as f64).abs());
    }

    if residual <= decode_tolerance(amax) {
        Ok(DecodeOutcome::Decoded(DecodeSolution {
            rows,
            coefficients: coeffs,
            residual,
        }))
    } else {
        Ok(DecodeOutcome::Infeasible { residual })
    }
}

/// Result of sweeping threshold-size subsets through the decoder.
#[derive(Clone, Debug, PartialEq)]
pub struct CertificateReport {
    pub threshold: usize,
    pub subsets_checked: usize,
    pub exhaustive: bool,
    pub worst_residual: f64,
    /// First few failing subsets, if any.
    pub failing_subsets: Vec<Vec<usize>>,
}

impl CertificateReport {
    pub fn passed(&self) -> bool {
        self.failing_subsets.is_empty()
    }
}

/// Certifies that every subset of `threshold` rows decodes: exhaustively for
/// codes up to 16 rows (or whenever there are at most 10^4 subsets), and on
/// a seeded random sample of 10^4 subsets otherwise.
pub fn verify_code(enc: &EncodingMatrix, threshold: usize) -> Result<CertificateReport> {
    let expected = decode_threshold(enc.support())?;
    if threshold != expected {
        return Err(Error::InvalidConfig(format!(
            "threshold {threshold} does not match the support matrix ({expected})"
        )));
    }
    let n = enc.rows();
    let total = binomial(n, threshold);
    let exhaustive = n <= 16 || total <= VERIFY_SAMPLES as u128;

    let mut report = CertificateReport {
        threshold,
        subsets_checked: 0,
        exhaustive,
        worst_residual: 0.0,
        failing_subsets: Vec::new(),
    };

    let mut check = |subset: &[usize], report: &mut CertificateReport| -> Result<()> {
        report.subsets_checked += 1;
        match decode_interpolating(subset, enc)? {
            DecodeOutcome::Decoded(sol) => {
                report.worst_residual = report.worst_residual.max(sol.residual);
            }
            DecodeOutcome::Infeasible { residual } => {
                report.worst_residual = report.worst_residual.max(residual);
                if report.failing_subsets.len() < 16 {
                    report.failing_subsets.push(subset.to_vec());
                }
            }
        }
        Ok(())
    };

    if exhaustive {
        let mut err = None;
        for_each_combination(n, threshold, |subset| {
            if err.is_none() {
                if let Err(e) = check(subset, &mut report) {
                    err = Some(e);
                }
            }
        });
        if let Some(e) = err {
            return Err(e);
        }
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(VERIFY_SEED);
        for _ in 0..VERIFY_SAMPLES {
            let mut subset = rand::seq::index::sample(&mut rng, n, threshold).into_vec();
            subset.sort_unstable();
            check(&subset, &mut report)?;
        }
    }
    Ok(report)
}

fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.saturating_mul((n - i) as u128) / (i + 1) as u128;
    }
    acc
}

fn for_each_combination(n: usize, k: usize, mut f: impl FnMut(&[usize])) {
    if k > n {
        return;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        f(&idx);
        // advance lexicographically
        let mut i = k;
        loop {
            if i == 0 {
                return;
            }
            i -= 1;
            if idx[i] != i + n - k {
                break;
            }
            if i == 0 {
                return;
            }
        }
        idx[i] += 1;
        for j in i + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}
