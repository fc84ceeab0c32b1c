//! Sparse matrices and symmetric eigensolvers shared by the graph and
//! spectral modules.
//!
//! The eigensolver has two routes: a dense direct decomposition for small
//! matrices and a restarted Lanczos iteration with full reorthogonalization
//! and deflation for large sparse ones. Both return eigenpairs sorted by
//! descending eigenvalue with sign-canonicalized eigenvectors.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EigenError {
    #[error(
        "eigensolver did not converge: {unconverged} of {requested} pairs above tolerance {tol:e}; worst residual norms {residuals:?}"
    )]
    NotConverged {
        requested: usize,
        unconverged: usize,
        tol: f64,
        residuals: Vec<f64>,
    },
    #[error("requested {requested} eigenpairs from a {n}x{n} matrix")]
    TooManyPairs { requested: usize, n: usize },
}

/// Row-major sparse matrix; each row holds `(column, value)` pairs sorted
/// by column index.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    nrows: usize,
    ncols: usize,
    rows: Vec<Vec<(usize, f64)>>,
}

impl SparseMatrix {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self {
            nrows,
            ncols,
            rows: vec![Vec::new(); nrows],
        }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    pub fn row(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        match self.rows[i].binary_search_by_key(&j, |&(c, _)| c) {
            Ok(pos) => self.rows[i][pos].1,
            Err(_) => 0.0,
        }
    }

    /// Adds `v` to entry `(i, j)`, inserting it if absent.
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        assert!(i < self.nrows && j < self.ncols, "entry out of bounds");
        match self.rows[i].binary_search_by_key(&j, |&(c, _)| c) {
            Ok(pos) => self.rows[i][pos].1 += v,
            Err(pos) => self.rows[i].insert(pos, (j, v)),
        }
    }

    /// Sets entry `(i, j)` to `v`, inserting it if absent.
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        assert!(i < self.nrows && j < self.ncols, "entry out of bounds");
        match self.rows[i].binary_search_by_key(&j, |&(c, _)| c) {
            Ok(pos) => self.rows[i][pos].1 = v,
            Err(pos) => self.rows[i].insert(pos, (j, v)),
        }
    }

    /// Iterates over stored entries as `(row, col, value)`.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.rows
            .iter()
            .enumerate()
            .flat_map(|(i, row)| row.iter().map(move |&(j, v)| (i, j, v)))
    }

    /// Dot product of rows `i` and `k` via sorted-merge.
    pub fn row_dot(&self, i: usize, k: usize) -> f64 {
        let (a, b) = (&self.rows[i], &self.rows[k]);
        let (mut pa, mut pb, mut acc) = (0, 0, 0.0);
        while pa < a.len() && pb < b.len() {
            match a[pa].0.cmp(&b[pb].0) {
                std::cmp::Ordering::Less => pa += 1,
                std::cmp::Ordering::Greater => pb += 1,
                std::cmp::Ordering::Equal => {
                    acc += a[pa].1 * b[pb].1;
                    pa += 1;
                    pb += 1;
                }
            }
        }
        acc
    }

    pub fn row_sums(&self) -> DVector<f64> {
        DVector::from_iterator(
            self.nrows,
            self.rows.iter().map(|r| r.iter().map(|&(_, v)| v).sum()),
        )
    }

    pub fn matvec(&self, v: &DVector<f64>) -> DVector<f64> {
        assert_eq!(v.len(), self.ncols, "dimension mismatch");
        DVector::from_iterator(
            self.nrows,
            self.rows
                .iter()
                .map(|row| row.iter().map(|&(j, w)| w * v[j]).sum()),
        )
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.nrows, self.ncols);
        for (i, j, v) in self.iter() {
            out[(i, j)] = v;
        }
        out
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        self.nrows == self.ncols
            && self
                .iter()
                .all(|(i, j, v)| (self.get(j, i) - v).abs() <= tol)
    }
}

/// Square symmetric operator usable by the iterative eigensolver.
pub trait LinearOperator {
    fn dim(&self) -> usize;
    fn apply(&self, v: &DVector<f64>) -> DVector<f64>;
}

impl LinearOperator for SparseMatrix {
    fn dim(&self) -> usize {
        debug_assert_eq!(self.nrows, self.ncols);
        self.nrows
    }

    fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        self.matvec(v)
    }
}

/// Eigenpairs sorted by descending eigenvalue; column `i` of `vectors`
/// pairs with `values[i]`.
#[derive(Debug, Clone)]
pub struct EigenPairs {
    pub values: Vec<f64>,
    pub vectors: DMatrix<f64>,
}

/// Flips a vector's sign so its largest-magnitude entry is positive.
fn canonicalize_sign(v: &mut DVector<f64>) {
    let mut best = 0usize;
    for i in 1..v.len() {
        if v[i].abs() > v[best].abs() {
            best = i;
        }
    }
    if v[best] < 0.0 {
        v.neg_mut();
    }
}

/// Top-`m` eigenpairs of a dense symmetric matrix, descending.
///
/// Eigenvalues are re-derived from their vectors via Rayleigh quotients:
/// the upstream solver can return crossed (value, vector) pairs on
/// near-degenerate spectra, and the quotient restores the true pairing.
pub fn dense_symmetric_top(a: &DMatrix<f64>, m: usize) -> Result<EigenPairs, EigenError> {
    let n = a.nrows();
    if m > n {
        return Err(EigenError::TooManyPairs { requested: m, n });
    }
    let eig = a.clone().symmetric_eigen();
    let mut pairs: Vec<(f64, f64, DVector<f64>)> = (0..n)
        .map(|i| {
            let v: DVector<f64> = eig.eigenvectors.column(i).into();
            let av = a * &v;
            let lambda = v.dot(&av);
            let residual = (av - lambda * &v).norm();
            (lambda, residual, v)
        })
        .collect();
    pairs.sort_by(|x, y| y.0.partial_cmp(&x.0).unwrap());
    pairs.truncate(m);

    let bad: Vec<f64> = pairs
        .iter()
        .filter(|(l, r, _)| *r > 1e-7 * l.abs().max(1.0))
        .map(|(_, r, _)| *r)
        .collect();
    if !bad.is_empty() {
        return Err(EigenError::NotConverged {
            requested: m,
            unconverged: bad.len(),
            tol: 1e-7,
            residuals: bad,
        });
    }

    let values: Vec<f64> = pairs.iter().map(|(l, _, _)| *l).collect();
    let mut vectors = DMatrix::zeros(n, m);
    for (col, (_, _, v)) in pairs.iter_mut().enumerate() {
        canonicalize_sign(v);
        vectors.set_column(col, v);
    }
    Ok(EigenPairs { values, vectors })
}

fn orthogonalize_against(v: &mut DVector<f64>, basis: &[DVector<f64>]) {
    // two passes of classical Gram-Schmidt keep loss of orthogonality in check
    for _ in 0..2 {
        for q in basis {
            let proj = q.dot(v);
            v.axpy(-proj, q, 1.0);
        }
    }
}

fn random_unit(rng: &mut ChaCha20Rng, n: usize) -> DVector<f64> {
    let v = DVector::from_iterator(n, (0..n).map(|_| rng.gen::<f64>() - 0.5));
    let norm = v.norm();
    v / norm
}

/// Top-`m` eigenpairs of a symmetric operator via restarted Lanczos with
/// full reorthogonalization. Converged eigenvectors are deflated on
/// restart, so repeated eigenvalues are recovered one copy per restart.
pub fn lanczos_symmetric_top(
    op: &dyn LinearOperator,
    m: usize,
    tol: f64,
) -> Result<EigenPairs, EigenError> {
    let n = op.dim();
    if m > n {
        return Err(EigenError::TooManyPairs { requested: m, n });
    }
    if m == 0 {
        return Ok(EigenPairs {
            values: Vec::new(),
            vectors: DMatrix::zeros(n, 0),
        });
    }

    let mut rng = ChaCha20Rng::seed_from_u64(0x51ac_3a7e);
    let mut conv_vals: Vec<f64> = Vec::new();
    let mut conv_vecs: Vec<DVector<f64>> = Vec::new();
    let mut last_residuals: Vec<f64> = Vec::new();
    let max_restarts = 40;

    for restart in 0..max_restarts {
        if conv_vals.len() >= m {
            break;
        }
        let remaining = n - conv_vecs.len();
        if remaining == 0 {
            break;
        }
        // grow the Krylov space if early restarts fail to converge
        let base = (2 * m + 20).max(40);
        let krylov = remaining.min(base * (restart / 4 + 1).min(4));

        // starting vector orthogonal to everything already converged
        let mut v0 = random_unit(&mut rng, n);
        orthogonalize_against(&mut v0, &conv_vecs);
        let norm = v0.norm();
        if norm < 1e-12 {
            continue;
        }
        v0 /= norm;

        let mut basis: Vec<DVector<f64>> = vec![v0];
        let mut alpha: Vec<f64> = Vec::new();
        let mut beta: Vec<f64> = Vec::new();

        for j in 0..krylov {
            let mut w = op.apply(&basis[j]);
            let a_j = basis[j].dot(&w);
            alpha.push(a_j);
            w.axpy(-a_j, &basis[j], 1.0);
            if j > 0 {
                let b = beta[j - 1];
                w.axpy(-b, &basis[j - 1], 1.0);
            }
            orthogonalize_against(&mut w, &basis);
            orthogonalize_against(&mut w, &conv_vecs);
            let b_j = w.norm();
            if j + 1 == krylov {
                break;
            }
            if b_j < 1e-12 {
                // invariant subspace exhausted
                break;
            }
            beta.push(b_j);
            basis.push(w / b_j);
        }

        let k = alpha.len();
        let tri = DMatrix::from_fn(k, k, |i, j| {
            if i == j {
                alpha[i]
            } else if i == j + 1 {
                beta[j]
            } else if j == i + 1 {
                beta[i]
            } else {
                0.0
            }
        });
        let small = tri.symmetric_eigen();
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by(|&x, &y| {
            small.eigenvalues[y]
                .partial_cmp(&small.eigenvalues[x])
                .unwrap()
        });

        // Accept only the leading run of converged Ritz pairs. Lanczos
        // converges both spectrum ends first; taking anything past the
        // first unconverged pair would let bottom eigenvalues masquerade
        // as top ones.
        last_residuals.clear();
        for &idx in &order {
            if conv_vals.len() >= m {
                break;
            }
            let theta = small.eigenvalues[idx];
            let s = small.eigenvectors.column(idx);
            let mut y = DVector::zeros(n);
            for (j, q) in basis.iter().enumerate() {
                y.axpy(s[j], q, 1.0);
            }
            let norm = y.norm();
            if norm < 1e-12 {
                continue;
            }
            y /= norm;
            let residual = (op.apply(&y) - theta * &y).norm();
            if residual <= tol * theta.abs().max(1.0) {
                orthogonalize_against(&mut y, &conv_vecs);
                let norm = y.norm();
                if norm < 1e-8 {
                    continue; // duplicate of an already-converged vector
                }
                y /= norm;
                canonicalize_sign(&mut y);
                conv_vals.push(theta);
                conv_vecs.push(y);
            } else {
                last_residuals.push(residual);
                break;
            }
        }
    }

    if conv_vals.len() < m {
        last_residuals.truncate(8);
        return Err(EigenError::NotConverged {
            requested: m,
            unconverged: m - conv_vals.len(),
            tol,
            residuals: last_residuals,
        });
    }

    let mut order: Vec<usize> = (0..conv_vals.len()).collect();
    order.sort_by(|&x, &y| conv_vals[y].partial_cmp(&conv_vals[x]).unwrap());
    order.truncate(m);
    let values: Vec<f64> = order.iter().map(|&i| conv_vals[i]).collect();
    let mut vectors = DMatrix::zeros(n, m);
    for (col, &i) in order.iter().enumerate() {
        vectors.set_column(col, &conv_vecs[i]);
    }
    Ok(EigenPairs { values, vectors })
}
