//! Top-K gradient compression.
//!
//! `top_k` keeps the `k` coordinates of a dense vector with the largest
//! absolute values (ties broken toward the lower index) and is the only
//! lossy step in the pipeline. `ec_compress` wraps it with the standard
//! error-compensation memory: the residual left behind by one round is
//! added back to the gradient of the next.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SparsifyError {
    #[error("k = {k} exceeds vector dimension {dim}")]
    KTooLarge { k: usize, dim: usize },
    #[error("input contains NaN at index {index}")]
    NanInput { index: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },
    #[error("invalid sparse entries: {0}")]
    InvalidEntries(String),
}

/// A gradient reduced to a subset of its coordinates.
///
/// Entries are `(index, value)` pairs with strictly increasing indices in
/// `[0, dim)`. Values are the original coordinates, untouched; a selected
/// value may legitimately be zero when `k` exceeds the number of nonzeros.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseGradient {
    dim: usize,
    entries: Vec<(usize, f64)>,
}

impl SparseGradient {
    /// Builds a sparse gradient from raw entries, validating the invariants.
    pub fn new(dim: usize, entries: Vec<(usize, f64)>) -> Result<Self, SparsifyError> {
        if entries.len() > dim {
            return Err(SparsifyError::InvalidEntries(format!(
                "{} entries exceed dimension {dim}",
                entries.len()
            )));
        }
        let mut prev: Option<usize> = None;
        for &(idx, value) in &entries {
            if idx >= dim {
                return Err(SparsifyError::InvalidEntries(format!(
                    "index {idx} out of range for dimension {dim}"
                )));
            }
            if let Some(p) = prev {
                if idx <= p {
                    return Err(SparsifyError::InvalidEntries(format!(
                        "indices not strictly increasing at {idx}"
                    )));
                }
            }
            if value.is_nan() {
                return Err(SparsifyError::NanInput { index: idx });
            }
            prev = Some(idx);
        }
        Ok(Self { dim, entries })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[(usize, f64)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Ranks coordinate `a` before `b` when it has strictly larger magnitude,
/// or equal magnitude and a lower index. Total order for NaN-free input.
#[inline]
fn selection_order(v: &[f64], a: usize, b: usize) -> std::cmp::Ordering {
    let (ma, mb) = (v[a].abs(), v[b].abs());
    // NaN is screened out before selection, so partial_cmp cannot fail.
    match mb.partial_cmp(&ma).expect("NaN survived screening") {
        std::cmp::Ordering::Equal => a.cmp(&b),
        other => other,
    }
}

fn scan_nan(v: &[f64]) -> Result<(), SparsifyError> {
    if let Some(index) = v.iter().position(|x| x.is_nan()) {
        return Err(SparsifyError::NanInput { index });
    }
    Ok(())
}

/// Keeps the `k` coordinates of `v` with the largest absolute values.
///
/// Ties on magnitude keep the lower index, so the selection is fully
/// deterministic. Partial selection runs in O(d) expected time plus an
/// O(k log k) sort of the survivors.
pub fn top_k(v: &[f64], k: usize) -> Result<SparseGradient, SparsifyError> {
    let dim = v.len();
    if k > dim {
        return Err(SparsifyError::KTooLarge { k, dim });
    }
    scan_nan(v)?;
    if k == 0 {
        return Ok(SparseGradient {
            dim,
            entries: Vec::new(),
        });
    }
    let mut order: Vec<usize> = (0..dim).collect();
    if k < dim {
        order.select_nth_unstable_by(k - 1, |&a, &b| selection_order(v, a, b));
        order.truncate(k);
    }
    order.sort_unstable();
    let entries = order.into_iter().map(|i| (i, v[i])).collect();
    Ok(SparseGradient { dim, entries })
}

/// Expands a sparse gradient back to a dense vector, zeros elsewhere.
pub fn densify(s: &SparseGradient) -> Vec<f64> {
    let mut out = vec![0.0; s.dim];
    for &(idx, value) in &s.entries {
        out[idx] = value;
    }
    out
}

/// Squared norm of what Top-K discards: the energy of the unselected
/// coordinates. Always at most `(1 - k/d) * ||v||^2`.
pub fn compression_error_sq(v: &[f64], k: usize) -> Result<f64, SparsifyError> {
    let kept = top_k(v, k)?;
    let mut selected = vec![false; v.len()];
    for &(idx, _) in kept.entries() {
        selected[idx] = true;
    }
    Ok(v.iter()
        .zip(&selected)
        .filter(|(_, &s)| !s)
        .map(|(x, _)| x * x)
        .sum())
}

/// Per-worker residual accumulator for error compensation.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorMemory {
    residual: Vec<f64>,
}

impl ErrorMemory {
    pub fn zeros(dim: usize) -> Self {
        Self {
            residual: vec![0.0; dim],
        }
    }

    pub fn from_residual(residual: Vec<f64>) -> Self {
        Self { residual }
    }

    pub fn residual(&self) -> &[f64] {
        &self.residual
    }

    pub fn dim(&self) -> usize {
        self.residual.len()
    }
}

/// Error-compensated Top-K: compresses `v + residual` and returns the new
/// residual holding everything the selection left behind.
///
/// Mass is conserved exactly: `densify(out) + new_residual == v + residual`
/// coordinate-wise, up to the single addition forming the compensated input.
pub fn ec_compress(
    v: &[f64],
    mem: &ErrorMemory,
    k: usize,
) -> Result<(SparseGradient, ErrorMemory), SparsifyError> {
    if mem.dim() != v.len() {
        return Err(SparsifyError::DimMismatch {
            expected: v.len(),
            got: mem.dim(),
        });
    }
    let mut compensated: Vec<f64> = v
        .iter()
        .zip(mem.residual())
        .map(|(g, r)| g + r)
        .collect();
    let out = top_k(&compensated, k)?;
    for &(idx, _) in out.entries() {
        compensated[idx] = 0.0;
    }
    Ok((out, ErrorMemory::from_residual(compensated)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn entries(s: &SparseGradient) -> Vec<(usize, f64)> {
        s.entries().to_vec()
    }

    #[test]
    fn top_k_unique_max() {
        let s = top_k(&[3.0, -1.0, 2.0], 1).unwrap();
        assert_eq!(entries(&s), vec![(0, 3.0)]);
    }

    #[test]
    fn top_k_full_is_identity() {
        let v = [3.0, -1.0, 2.0];
        let s = top_k(&v, 3).unwrap();
        assert_eq!(entries(&s), vec![(0, 3.0), (1, -1.0), (2, 2.0)]);
        assert_eq!(densify(&s), v.to_vec());
    }

    #[test]
    fn top_k_tie_keeps_lower_index() {
        let s = top_k(&[1.0, -4.0, 2.0, -2.0], 2).unwrap();
        assert_eq!(entries(&s), vec![(1, -4.0), (2, 2.0)]);
    }

    #[test]
    fn top_k_zero_k_is_empty() {
        let s = top_k(&[1.0, 2.0], 0).unwrap();
        assert!(s.is_empty());
        assert_eq!(s.dim(), 2);
    }

    #[test]
    fn top_k_rejects_k_beyond_dim() {
        assert_eq!(
            top_k(&[1.0], 2),
            Err(SparsifyError::KTooLarge { k: 2, dim: 1 })
        );
    }

    #[test]
    fn top_k_rejects_nan() {
        assert_eq!(
            top_k(&[1.0, f64::NAN], 1),
            Err(SparsifyError::NanInput { index: 1 })
        );
    }

    #[test]
    fn densify_examples() {
        let s = SparseGradient::new(3, vec![(1, 5.0)]).unwrap();
        assert_eq!(densify(&s), vec![0.0, 5.0, 0.0]);
        let empty = SparseGradient::new(2, vec![]).unwrap();
        assert_eq!(densify(&empty), vec![0.0, 0.0]);
        let v = [0.5, -0.5];
        assert_eq!(densify(&top_k(&v, 2).unwrap()), v.to_vec());
    }

    #[test]
    fn sparse_gradient_validation() {
        assert!(SparseGradient::new(3, vec![(0, 1.0), (2, 2.0)]).is_ok());
        assert!(SparseGradient::new(3, vec![(2, 1.0), (0, 2.0)]).is_err());
        assert!(SparseGradient::new(3, vec![(0, 1.0), (0, 2.0)]).is_err());
        assert!(SparseGradient::new(2, vec![(2, 1.0)]).is_err());
        assert!(SparseGradient::new(1, vec![(0, 1.0), (0, 1.0)]).is_err());
    }

    #[test]
    fn compression_error_examples() {
        assert_eq!(compression_error_sq(&[3.0, -1.0, 2.0], 3).unwrap(), 0.0);
        assert_eq!(compression_error_sq(&[3.0, 0.0, 0.0], 1).unwrap(), 0.0);
        // [1, 1] with k = 1 leaves exactly one unit of energy, meeting the
        // (1 - k/d)||v||^2 bound with equality.
        let err = compression_error_sq(&[1.0, 1.0], 1).unwrap();
        assert_eq!(err, 1.0);
        assert_eq!((1.0 - 0.5) * 2.0, err);
    }

    #[test]
    fn ec_compress_examples() {
        let (out, mem) = ec_compress(&[1.0, 0.0], &ErrorMemory::zeros(2), 1).unwrap();
        assert_eq!(entries(&out), vec![(0, 1.0)]);
        assert_eq!(mem.residual(), &[0.0, 0.0]);

        let (out, mem) =
            ec_compress(&[1.0, 0.0], &ErrorMemory::from_residual(vec![0.0, 1.0]), 1).unwrap();
        assert_eq!(entries(&out), vec![(0, 1.0)]);
        assert_eq!(mem.residual(), &[0.0, 1.0]);

        let (out, mem) =
            ec_compress(&[0.0, 0.0], &ErrorMemory::from_residual(vec![2.0, 0.0]), 1).unwrap();
        assert_eq!(entries(&out), vec![(0, 2.0)]);
        assert_eq!(mem.residual(), &[0.0, 0.0]);
    }

    #[test]
    fn ec_compress_rejects_dim_mismatch() {
        let r = ec_compress(&[1.0, 2.0], &ErrorMemory::zeros(3), 1);
        assert_eq!(
            r.unwrap_err(),
            SparsifyError::DimMismatch {
                expected: 2,
                got: 3
            }
        );
    }

    proptest! {
        #[test]
        fn lemma1_bound_holds(v in prop::collection::vec(-1e3f64..1e3, 1..64), k_frac in 0.0f64..=1.0) {
            let d = v.len();
            let k = ((d as f64) * k_frac).floor() as usize;
            let err = compression_error_sq(&v, k).unwrap();
            let norm_sq: f64 = v.iter().map(|x| x * x).sum();
            let bound = (1.0 - k as f64 / d as f64) * norm_sq;
            prop_assert!(err <= bound * (1.0 + 1e-12) + 1e-300);
        }

        #[test]
        fn error_monotone_in_k(v in prop::collection::vec(-1e3f64..1e3, 1..48)) {
            let mut prev = f64::INFINITY;
            for k in 0..=v.len() {
                let err = compression_error_sq(&v, k).unwrap();
                prop_assert!(err <= prev * (1.0 + 1e-12) + 1e-300);
                prev = err;
            }
        }

        #[test]
        fn ec_conserves_mass(
            v in prop::collection::vec(-1e3f64..1e3, 1..48),
            r in prop::collection::vec(-1e3f64..1e3, 1..48),
            k_frac in 0.0f64..=1.0,
        ) {
            let d = v.len().min(r.len());
            let v = &v[..d];
            let r = &r[..d];
            let k = ((d as f64) * k_frac).floor() as usize;
            let mem = ErrorMemory::from_residual(r.to_vec());
            let (out, new_mem) = ec_compress(v, &mem, k).unwrap();
            let dense = densify(&out);
            for i in 0..d {
                // densify(out) + residual must reproduce v + r bit-for-bit.
                let expect = v[i] + r[i];
                prop_assert_eq!(dense[i] + new_mem.residual()[i], expect);
            }
        }

        #[test]
        fn densify_topk_full_roundtrip(v in prop::collection::vec(-1e6f64..1e6, 0..64)) {
            let s = top_k(&v, v.len()).unwrap();
            prop_assert_eq!(densify(&s), v);
        }
    }
}
