//! Determinantal point process kernel: L_ij = q_i * s_ij * q_j over a
//! quality vector q and a similarity matrix S. Provides subset
//! log-determinants, exact subset probabilities for small n, and greedy MAP
//! selection via incremental Cholesky updates.

use nalgebra::{DMatrix, DVector};

/// Quality entries are clamped up to this floor so L stays nonsingular on
/// the diagonal even when a relevance score is 0.
pub const QUALITY_FLOOR: f64 = 1e-6;

/// Symmetry / diagonal tolerance on the similarity matrix.
const SYMMETRY_TOL: f64 = 1e-9;

/// Relative PSD tolerance: eigenvalues of L down to -1e-8 * max(1, ||L||)
/// are repaired by clipping; anything below is rejected.
const PSD_TOL: f64 = 1e-8;

/// A pivot d^2 at or below this fraction of the item's own L_ii counts as
/// singular: the marginal gain is -inf and the item can never be selected.
/// Subset log-dets use the same convention so the two agree.
const SINGULARITY_FLOOR: f64 = 1e-12;

/// Exact subset probabilities enumerate the 2^n normalization, so n is
/// capped; this is test-oracle machinery, not a production path.
pub const MAX_EXACT_N: usize = 20;

#[derive(Debug, thiserror::Error)]
pub enum DppError {
    #[error("quality vector has {q} entries but similarity is {rows}x{cols}")]
    DimensionMismatch { q: usize, rows: usize, cols: usize },
    #[error("non-finite entry in quality or similarity input")]
    NonFinite,
    #[error("similarity not symmetric at ({i},{j}): |difference| = {difference:e}")]
    Asymmetric { i: usize, j: usize, difference: f64 },
    #[error("similarity diagonal entry {i} is {value}, expected 1")]
    BadDiagonal { i: usize, value: f64 },
    #[error("similarity entry ({i},{j}) = {value} outside [-1, 1]")]
    OutOfRange { i: usize, j: usize, value: f64 },
    #[error("kernel not positive semi-definite: min eigenvalue {min_eigenvalue:e} below tolerance {tolerance:e}")]
    NotPositiveSemidefinite { min_eigenvalue: f64, tolerance: f64 },
    #[error("index {index} out of range for kernel of size {n}")]
    IndexOutOfRange { index: usize, n: usize },
    #[error("index {index} appears twice in subset")]
    DuplicateIndex { index: usize },
    #[error("exact probabilities limited to n <= {MAX_EXACT_N}, kernel has {n} items")]
    UnsupportedSize { n: usize },
}

/// Validated L-ensemble. `l` is exactly symmetric and PSD up to tolerance;
/// after an eigenvalue-clipping repair it may differ from the elementwise
/// assembly by at most that tolerance.
#[derive(Debug, Clone)]
pub struct DppKernel {
    q: Vec<f64>,
    similarity: DMatrix<f64>,
    l: DMatrix<f64>,
    repaired: bool,
}

impl DppKernel {
    /// Assembles and validates the kernel. Quality entries are clamped to
    /// [`QUALITY_FLOOR`]; the similarity matrix must be symmetric within
    /// 1e-9 with unit diagonal and entries in [-1, 1] (same tolerance).
    /// Marginally non-PSD inputs are repaired by clipping negative
    /// eigenvalues at zero; anything worse is an error.
    pub fn build(q: Vec<f64>, similarity: DMatrix<f64>) -> Result<Self, DppError> {
        let n = q.len();
        if similarity.nrows() != n || similarity.ncols() != n {
            return Err(DppError::DimensionMismatch {
                q: n,
                rows: similarity.nrows(),
                cols: similarity.ncols(),
            });
        }
        if q.iter().any(|v| !v.is_finite()) || similarity.iter().any(|v| !v.is_finite()) {
            return Err(DppError::NonFinite);
        }
        let q: Vec<f64> = q.into_iter().map(|v| v.max(QUALITY_FLOOR)).collect();

        let mut s = similarity;
        for i in 0..n {
            let d = s[(i, i)];
            if (d - 1.0).abs() > SYMMETRY_TOL {
                return Err(DppError::BadDiagonal { i, value: d });
            }
            s[(i, i)] = 1.0;
            for j in (i + 1)..n {
                let difference = (s[(i, j)] - s[(j, i)]).abs();
                if difference > SYMMETRY_TOL {
                    return Err(DppError::Asymmetric { i, j, difference });
                }
                let v = 0.5 * (s[(i, j)] + s[(j, i)]);
                if v.abs() > 1.0 + SYMMETRY_TOL {
                    return Err(DppError::OutOfRange { i, j, value: v });
                }
                let v = v.clamp(-1.0, 1.0);
                s[(i, j)] = v;
                s[(j, i)] = v;
            }
        }

        // Assemble for i <= j and mirror so L is exactly symmetric.
        let mut l = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let v = q[i] * s[(i, j)] * q[j];
                l[(i, j)] = v;
                l[(j, i)] = v;
            }
        }

        let mut repaired = false;
        if n > 0 {
            let eigen = nalgebra::SymmetricEigen::new(l.clone());
            let min_eigenvalue = eigen.eigenvalues.min();
            let scale = eigen.eigenvalues.amax();
            let tolerance = PSD_TOL * scale.max(1.0);
            if min_eigenvalue < -tolerance {
                return Err(DppError::NotPositiveSemidefinite { min_eigenvalue, tolerance });
            }
            if min_eigenvalue < 0.0 {
                let clipped = eigen.eigenvalues.map(|v| v.max(0.0));
                let rebuilt = &eigen.eigenvectors
                    * DMatrix::from_diagonal(&clipped)
                    * eigen.eigenvectors.transpose();
                l = 0.5 * (&rebuilt + rebuilt.transpose());
                repaired = true;
            }
        }

        Ok(Self { q, similarity: s, l, repaired })
    }

    pub fn n(&self) -> usize {
        self.q.len()
    }

    pub fn quality(&self) -> &[f64] {
        &self.q
    }

    pub fn similarity(&self) -> &DMatrix<f64> {
        &self.similarity
    }

    pub fn l(&self) -> &DMatrix<f64> {
        &self.l
    }

    /// True when negative eigenvalues were clipped during construction.
    pub fn was_repaired(&self) -> bool {
        self.repaired
    }

    fn check_subset(&self, subset: &[usize]) -> Result<(), DppError> {
        let mut seen = vec![false; self.n()];
        for &i in subset {
            if i >= self.n() {
                return Err(DppError::IndexOutOfRange { index: i, n: self.n() });
            }
            if seen[i] {
                return Err(DppError::DuplicateIndex { index: i });
            }
            seen[i] = true;
        }
        Ok(())
    }

    /// Log-determinant of the principal submatrix L_subset. The empty
    /// subset gives 0 (det of the empty matrix is 1); a singular submatrix
    /// gives -inf under the [`SINGULARITY_FLOOR`] pivot convention.
    pub fn subset_log_det(&self, subset: &[usize]) -> Result<f64, DppError> {
        self.check_subset(subset)?;
        Ok(log_det_floored(&self.l, subset))
    }

    /// det(L_subset) / det(L + I); exact 2^n normalization, so n is capped
    /// at [`MAX_EXACT_N`].
    pub fn exact_subset_prob(&self, subset: &[usize]) -> Result<f64, DppError> {
        let n = self.n();
        if n > MAX_EXACT_N {
            return Err(DppError::UnsupportedSize { n });
        }
        self.check_subset(subset)?;
        let normalization = (&self.l + DMatrix::identity(n, n)).determinant();
        let m = subset.len();
        let sub = DMatrix::from_fn(m, m, |a, b| self.l[(subset[a], subset[b])]);
        Ok(sub.determinant().max(0.0) / normalization)
    }
}

/// Cholesky log-det with the shared relative pivot floor.
fn log_det_floored(l: &DMatrix<f64>, subset: &[usize]) -> f64 {
    let m = subset.len();
    let mut rows: Vec<Vec<f64>> = vec![vec![0.0; m]; m];
    let mut log_det = 0.0;
    for a in 0..m {
        let ia = subset[a];
        let mut d2 = l[(ia, ia)];
        for x in &rows[a][..a] {
            d2 -= x * x;
        }
        if d2 <= SINGULARITY_FLOOR * l[(ia, ia)] {
            return f64::NEG_INFINITY;
        }
        let d = d2.sqrt();
        rows[a][a] = d;
        log_det += d2.ln();
        for b in (a + 1)..m {
            let ib = subset[b];
            let mut v = l[(ib, ia)];
            for (x, y) in rows[b][..a].iter().zip(&rows[a][..a]) {
                v -= x * y;
            }
            rows[b][a] = v / d;
        }
    }
    log_det
}

/// Greedy MAP result: selected indices in pick order and the log-det
/// marginal gain realized at each pick.
#[derive(Debug, Clone, PartialEq)]
pub struct GreedySelection {
    pub indices: Vec<usize>,
    pub gains: Vec<f64>,
}

impl GreedySelection {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// Iteratively adds the item with the largest log-det marginal gain, ties
/// broken by lowest index. Stops at `max_items`, when every remaining gain
/// is -inf, or (with the flag) when the best gain is <= 0.
///
/// Candidates are compared on the Cholesky pivot d^2 rather than ln(d^2);
/// the ordering is identical and survives exact power-of-two quality
/// scaling without collapse.
pub fn greedy_map(
    kernel: &DppKernel,
    max_items: usize,
    stop_on_nonpositive_gain: bool,
) -> GreedySelection {
    let l = kernel.l();
    let n = kernel.n();
    let mut d2: Vec<f64> = (0..n).map(|i| l[(i, i)]).collect();
    let mut coeffs: Vec<Vec<f64>> = vec![Vec::new(); n];
    let mut alive = vec![true; n];
    let mut indices = Vec::new();
    let mut gains = Vec::new();

    while indices.len() < max_items {
        let mut best: Option<usize> = None;
        for i in 0..n {
            if !alive[i] {
                continue;
            }
            if d2[i] <= SINGULARITY_FLOOR * l[(i, i)] {
                alive[i] = false;
                continue;
            }
            match best {
                Some(b) if d2[i] <= d2[b] => {}
                _ => best = Some(i),
            }
        }
        let Some(j) = best else { break };
        if stop_on_nonpositive_gain && d2[j] <= 1.0 {
            break;
        }
        alive[j] = false;
        gains.push(d2[j].ln());
        indices.push(j);
        let dj = d2[j].sqrt();
        for i in 0..n {
            if !alive[i] {
                continue;
            }
            let dot: f64 = coeffs[j].iter().zip(&coeffs[i]).map(|(a, b)| a * b).sum();
            let e = (l[(j, i)] - dot) / dj;
            coeffs[i].push(e);
            d2[i] -= e * e;
        }
    }
    GreedySelection { indices, gains }
}

/// Unit-quality similarity row helper for building Gram matrices from
/// embeddings: S must get an exactly-1 diagonal regardless of fp dot noise.
pub fn gram_from_vectors(vectors: &[DVector<f64>]) -> DMatrix<f64> {
    let n = vectors.len();
    DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            1.0
        } else {
            let ni = vectors[i].norm();
            let nj = vectors[j].norm();
            if ni == 0.0 || nj == 0.0 {
                0.0
            } else {
                (vectors[i].dot(&vectors[j]) / (ni * nj)).clamp(-1.0, 1.0)
            }
        }
    })
}
