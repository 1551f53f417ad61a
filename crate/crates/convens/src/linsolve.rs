//! Sparse storage and direct factorization with multi-right-hand-side reuse.
//!
//! Every timestep assembles one velocity system and one temperature system;
//! each is factorized once and solved against all J ensemble right-hand
//! sides. The factorization backend is faer's sparse LU with partial
//! pivoting and a fill-reducing column ordering.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Once;

use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMat, Triplet};

use crate::error::{Error, Result};

/// Compressed-row matrix. Column indices are strictly increasing within each
/// row and duplicates are merged at construction.
#[derive(Clone, Debug)]
pub struct SparseMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Result<SparseMatrix> {
        let mut trips: Vec<(usize, usize, f64)> = Vec::with_capacity(triplets.len());
        for &(r, c, v) in triplets {
            if r >= nrows || c >= ncols {
                return Err(Error::DimensionMismatch { expected: nrows * ncols, got: r.max(c) });
            }
            trips.push((r, c, v));
        }
        trips.sort_unstable_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = vec![0usize; nrows + 1];
        let mut col_idx = Vec::with_capacity(trips.len());
        let mut values = Vec::with_capacity(trips.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in trips {
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_idx.push(c);
                values.push(v);
                row_ptr[r + 1] = col_idx.len();
                last = Some((r, c));
            }
        }
        // make row_ptr cumulative (rows with no entries inherit previous)
        for r in 0..nrows {
            if row_ptr[r + 1] < row_ptr[r] {
                row_ptr[r + 1] = row_ptr[r];
            }
        }
        Ok(SparseMatrix { nrows, ncols, row_ptr, col_idx, values })
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let lo = self.row_ptr[i];
        let hi = self.row_ptr[i + 1];
        (&self.col_idx[lo..hi], &self.values[lo..hi])
    }

    /// Entry lookup by binary search; zero when absent.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        match cols.binary_search(&j) {
            Ok(k) => vals[k],
            Err(_) => 0.0,
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.ncols, "matvec dimension mismatch");
        let mut y = vec![0.0; self.nrows];
        self.matvec_into(x, &mut y);
        y
    }

    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        for i in 0..self.nrows {
            let (cols, vals) = self.row(i);
            let mut acc = 0.0;
            for (&c, &v) in cols.iter().zip(vals) {
                acc += v * x[c];
            }
            y[i] = acc;
        }
    }

    /// y += alpha * A x
    pub fn matvec_add(&self, alpha: f64, x: &[f64], y: &mut [f64]) {
        for i in 0..self.nrows {
            let (cols, vals) = self.row(i);
            let mut acc = 0.0;
            for (&c, &v) in cols.iter().zip(vals) {
                acc += v * x[c];
            }
            y[i] += alpha * acc;
        }
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.nrows).flat_map(move |i| {
            let (cols, vals) = self.row(i);
            cols.iter().zip(vals).map(move |(&c, &v)| (i, c, v))
        })
    }

    /// Linear combination of same-shape matrices.
    pub fn linear_combination(terms: &[(f64, &SparseMatrix)]) -> Result<SparseMatrix> {
        let (nrows, ncols) = match terms.first() {
            Some((_, m)) => (m.nrows, m.ncols),
            None => return Err(Error::InvalidConfig("empty linear combination".into())),
        };
        let mut trips = Vec::new();
        for &(alpha, m) in terms {
            if m.nrows != nrows || m.ncols != ncols {
                return Err(Error::DimensionMismatch { expected: nrows, got: m.nrows });
            }
            trips.extend(m.triplets().map(|(r, c, v)| (r, c, alpha * v)));
        }
        SparseMatrix::from_triplets(nrows, ncols, &trips)
    }

    pub fn transpose(&self) -> SparseMatrix {
        let trips: Vec<(usize, usize, f64)> = self.triplets().map(|(r, c, v)| (c, r, v)).collect();
        SparseMatrix::from_triplets(self.ncols, self.nrows, &trips).expect("transpose triplets valid")
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |a, &v| a.max(v.abs()))
    }
}

static FACTORIZATIONS: AtomicU64 = AtomicU64::new(0);
static INIT_PAR: Once = Once::new();

/// Total factorizations performed by this process. Instrumentation for the
/// one-factorization-per-subproblem-per-step contract.
pub fn factorization_count() -> u64 {
    FACTORIZATIONS.load(Ordering::Relaxed)
}

/// Reusable LU factorization of one sparse matrix.
pub struct SparseFactorization {
    lu: faer::sparse::linalg::solvers::Lu<usize, f64>,
    n: usize,
    /// Global factorization sequence number at creation; the stepper uses it
    /// to assert factorization reuse across ensemble members.
    pub stamp: u64,
}

impl std::fmt::Debug for SparseFactorization {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SparseFactorization")
            .field("n", &self.n)
            .field("stamp", &self.stamp)
            .finish_non_exhaustive()
    }
}

/// LU-factorize a square sparse matrix.
pub fn factorize(a: &SparseMatrix) -> Result<SparseFactorization> {
    if a.nrows != a.ncols {
        return Err(Error::DimensionMismatch { expected: a.nrows, got: a.ncols });
    }
    INIT_PAR.call_once(|| {
        // deterministic, contention-free solves; problem sizes are desk scale
        faer::set_global_parallelism(faer::Par::Seq);
    });
    let trips: Vec<Triplet<usize, usize, f64>> =
        a.triplets().map(|(r, c, v)| Triplet::new(r, c, v)).collect();
    let mat = SparseColMat::<usize, f64>::try_new_from_triplets(a.nrows, a.ncols, &trips)
        .map_err(|e| Error::Assembly(format!("sparse structure rejected: {e:?}")))?;
    // faer signals an exactly-zero numeric pivot by panicking; map both that
    // and the structural-singularity error onto the same failure mode.
    let lu = match std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| mat.sp_lu())) {
        Ok(Ok(lu)) => lu,
        Ok(Err(e)) => {
            let pivot = match e {
                faer::sparse::linalg::LuError::SymbolicSingular { index } => Some(index),
                faer::sparse::linalg::LuError::Generic(_) => None,
            };
            return Err(Error::Singular { pivot });
        }
        Err(_) => return Err(Error::Singular { pivot: None }),
    };
    let stamp = FACTORIZATIONS.fetch_add(1, Ordering::Relaxed) + 1;
    Ok(SparseFactorization { lu, n: a.nrows, stamp })
}

impl SparseFactorization {
    pub fn dim(&self) -> usize {
        self.n
    }

    /// Solve A x = b against the stored factorization.
    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        if rhs.len() != self.n {
            return Err(Error::DimensionMismatch { expected: self.n, got: rhs.len() });
        }
        let b = faer::Mat::<f64>::from_fn(self.n, 1, |i, _| rhs[i]);
        let x = self.lu.solve(&b);
        Ok((0..self.n).map(|i| x[(i, 0)]).collect())
    }

    /// Solve against many right-hand sides, reusing the factorization. Each
    /// result is identical to a one-at-a-time solve.
    pub fn solve_many(&self, rhs_list: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        rhs_list.iter().map(|b| self.solve(b)).collect()
    }
}

// concurrent solves against one factorization are part of the contract
const _: fn() = || {
    fn assert_send_sync<T: Send + Sync>() {}
    assert_send_sync::<SparseMatrix>();
    assert_send_sync::<SparseFactorization>();
};

/// Relative residual ‖Ax − b‖₂ / ‖b‖₂, or ‖Ax‖₂ when b = 0.
pub fn residual_check(a: &SparseMatrix, x: &[f64], b: &[f64]) -> Result<f64> {
    if x.len() != a.ncols || b.len() != a.nrows {
        return Err(Error::DimensionMismatch { expected: a.ncols, got: x.len() });
    }
    let ax = a.matvec(x);
    let r2: f64 = ax.iter().zip(b).map(|(&p, &q)| (p - q) * (p - q)).sum();
    let b2: f64 = b.iter().map(|&q| q * q).sum();
    if b2 == 0.0 {
        Ok(r2.sqrt())
    } else {
        Ok((r2 / b2).sqrt())
    }
}

pub fn norm2(x: &[f64]) -> f64 {
    x.iter().map(|&v| v * v).sum::<f64>().sqrt()
}
