//! Dense complex matrix primitives.
//!
//! Everything positivity-related (PSD tests, projection onto the PSD cone,
//! rank-revealing factorization) goes through one Hermitian eigensolver so
//! that all decisions share the same accuracy. Unitary completion of partial
//! isometries uses an orthogonal Procrustes solve.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use thiserror::Error;

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

/// Default relative tolerance for PSD decisions.
pub const DEFAULT_TOL: f64 = 1e-9;

const EIGEN_EPS: f64 = 1e-15;
const EIGEN_MAX_ITERS: usize = 10_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumericsError {
    #[error("matrix has non-finite entries")]
    NonFinite,
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("Hermitian eigensolver failed to converge on a {dim}x{dim} matrix")]
    EigenFailure { dim: usize },
    #[error("matrix is not PSD: min eigenvalue {min_eigenvalue:e} below -{threshold:e}")]
    NotPsd { min_eigenvalue: f64, threshold: f64 },
    #[error("not an isometry: Gram mismatch {mismatch:e} exceeds {tol:e}")]
    NotAnIsometry { mismatch: f64, tol: f64 },
}

pub type Result<T> = std::result::Result<T, NumericsError>;

/// A square complex matrix equal to its conjugate transpose.
///
/// The constructor symmetrizes its input, so `get(i, j) == get(j, i).conj()`
/// holds bit-for-bit.
#[derive(Clone, Debug, PartialEq)]
pub struct HermitianMatrix {
    data: CMatrix,
}

/// Eigenpairs sorted by ascending eigenvalue; column `k` of `vectors`
/// belongs to `values[k]`.
#[derive(Clone, Debug)]
pub struct Eigen {
    pub values: Vec<f64>,
    pub vectors: CMatrix,
}

impl HermitianMatrix {
    pub fn new(m: CMatrix) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(NumericsError::NotSquare {
                rows: m.nrows(),
                cols: m.ncols(),
            });
        }
        if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(NumericsError::NonFinite);
        }
        let n = m.nrows();
        let mut data = m;
        for i in 0..n {
            data[(i, i)] = Complex64::new(data[(i, i)].re, 0.0);
            for j in (i + 1)..n {
                let avg = (data[(i, j)] + data[(j, i)].conj()) * 0.5;
                data[(i, j)] = avg;
                data[(j, i)] = avg.conj();
            }
        }
        Ok(Self { data })
    }

    pub fn from_fn(n: usize, f: impl FnMut(usize, usize) -> Complex64) -> Result<Self> {
        Self::new(CMatrix::from_fn(n, n, f))
    }

    pub fn from_real_rows(rows: &[&[f64]]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(NumericsError::DimensionMismatch("ragged rows".into()));
        }
        Self::from_fn(n, |i, j| Complex64::new(rows[i][j], 0.0))
    }

    pub fn identity(n: usize) -> Self {
        Self {
            data: CMatrix::identity(n, n),
        }
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            data: CMatrix::zeros(n, n),
        }
    }

    /// Outer product `v v*`.
    pub fn outer(v: &CVector) -> Self {
        Self {
            data: v * v.adjoint(),
        }
    }

    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.data[(i, j)]
    }

    pub fn as_matrix(&self) -> &CMatrix {
        &self.data
    }

    pub fn into_matrix(self) -> CMatrix {
        self.data
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            data: &self.data * Complex64::new(s, 0.0),
        }
    }

    pub fn add(&self, other: &HermitianMatrix) -> Result<Self> {
        self.check_same_dim(other)?;
        Ok(Self {
            data: &self.data + &other.data,
        })
    }

    pub fn sub(&self, other: &HermitianMatrix) -> Result<Self> {
        self.check_same_dim(other)?;
        Ok(Self {
            data: &self.data - &other.data,
        })
    }

    /// Entrywise (Schur) product. Hermitian times Hermitian stays Hermitian.
    pub fn hadamard(&self, other: &HermitianMatrix) -> Result<Self> {
        self.check_same_dim(other)?;
        Ok(Self {
            data: self.data.component_mul(&other.data),
        })
    }

    /// `D H D*` for a diagonal `D` with the given entries.
    pub fn conjugate_by_diagonal(&self, diag: &[Complex64]) -> Result<Self> {
        if diag.len() != self.dim() {
            return Err(NumericsError::DimensionMismatch(format!(
                "diagonal of length {} for a {}x{} matrix",
                diag.len(),
                self.dim(),
                self.dim()
            )));
        }
        Self::from_fn(self.dim(), |i, j| {
            diag[i] * self.data[(i, j)] * diag[j].conj()
        })
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim()).map(|i| self.data[(i, i)].re).sum()
    }

    pub fn eigen(&self) -> Result<Eigen> {
        let n = self.dim();
        if n == 0 {
            return Ok(Eigen {
                values: vec![],
                vectors: CMatrix::zeros(0, 0),
            });
        }
        let eig = self
            .data
            .clone()
            .try_symmetric_eigen(EIGEN_EPS, EIGEN_MAX_ITERS)
            .ok_or(NumericsError::EigenFailure { dim: n })?;
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
        let vectors = CMatrix::from_fn(n, n, |i, k| eig.eigenvectors[(i, order[k])]);
        Ok(Eigen { values, vectors })
    }

    pub fn eigenvalues(&self) -> Result<Vec<f64>> {
        Ok(self.eigen()?.values)
    }

    pub fn min_eigenvalue(&self) -> Result<f64> {
        Ok(self.eigenvalues()?.first().copied().unwrap_or(0.0))
    }

    /// Spectral norm, i.e. the largest eigenvalue modulus.
    pub fn spectral_norm(&self) -> Result<f64> {
        let vals = self.eigenvalues()?;
        Ok(vals.iter().fold(0.0_f64, |acc, v| acc.max(v.abs())))
    }

    fn check_same_dim(&self, other: &HermitianMatrix) -> Result<()> {
        if self.dim() != other.dim() {
            return Err(NumericsError::DimensionMismatch(format!(
                "{}x{} vs {}x{}",
                self.dim(),
                self.dim(),
                other.dim(),
                other.dim()
            )));
        }
        Ok(())
    }
}

/// Threshold below which a negative eigenvalue still counts as PSD.
pub fn psd_threshold(spectral_norm: f64, tol: f64) -> f64 {
    tol * spectral_norm.max(1.0)
}

/// Returns true iff `λ_min(h) >= -tol * max(1, ‖h‖)`.
pub fn is_psd(h: &HermitianMatrix, tol: f64) -> Result<bool> {
    let vals = h.eigenvalues()?;
    Ok(psd_from_values(&vals, tol))
}

fn psd_from_values(vals: &[f64], tol: f64) -> bool {
    let norm = vals.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
    vals.first()
        .is_none_or(|&min| min >= -psd_threshold(norm, tol))
}

/// Nearest PSD matrix in Frobenius norm: negative eigenvalues clipped to zero.
pub fn psd_project(h: &HermitianMatrix) -> Result<HermitianMatrix> {
    let Eigen { values, vectors } = h.eigen()?;
    let n = h.dim();
    let mut out = CMatrix::zeros(n, n);
    for (k, &lambda) in values.iter().enumerate() {
        if lambda <= 0.0 {
            continue;
        }
        let v = vectors.column(k);
        out += (v * v.adjoint()) * Complex64::new(lambda, 0.0);
    }
    HermitianMatrix::new(out)
}

/// Factor a PSD matrix as `G = H H*` keeping only eigenvalues above
/// `tol * λ_max`.
///
/// Columns are ordered by decreasing eigenvalue, and each column is rotated
/// so its first non-negligible entry is real and positive.
pub fn factor_psd(g: &HermitianMatrix, tol: f64) -> Result<CMatrix> {
    let Eigen { values, vectors } = g.eigen()?;
    if !psd_from_values(&values, tol) {
        let norm = values.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
        return Err(NumericsError::NotPsd {
            min_eigenvalue: values[0],
            threshold: psd_threshold(norm, tol),
        });
    }
    let n = g.dim();
    let lambda_max = values.last().copied().unwrap_or(0.0);
    let keep: Vec<usize> = (0..n)
        .rev()
        .filter(|&k| lambda_max > 0.0 && values[k] > tol * lambda_max)
        .collect();
    let mut h = CMatrix::zeros(n, keep.len());
    for (c, &k) in keep.iter().enumerate() {
        let mut col = vectors.column(k).into_owned();
        let scale = col.iter().fold(0.0_f64, |acc, z| acc.max(z.norm()));
        if let Some(lead) = col.iter().find(|z| z.norm() > 1e-8 * scale).copied() {
            let phase = lead.conj() / lead.norm();
            col *= phase;
        }
        h.set_column(c, &(col * Complex64::new(values[k].sqrt(), 0.0)));
    }
    Ok(h)
}

/// Number of eigenvalues above `tol * λ_max`.
pub fn numerical_rank(g: &HermitianMatrix, tol: f64) -> Result<usize> {
    let vals = g.eigenvalues()?;
    let lambda_max = vals.iter().fold(0.0_f64, |acc, v| acc.max(*v));
    if lambda_max <= 0.0 {
        return Ok(0);
    }
    Ok(vals.iter().filter(|&&v| v > tol * lambda_max).count())
}

/// Pairs `d_i ↦ r_i` that should extend to an isometry.
#[derive(Clone, Debug)]
pub struct IsometryData {
    pub domain_vectors: Vec<CVector>,
    pub range_vectors: Vec<CVector>,
    pub domain_dim: usize,
    pub range_dim: usize,
}

impl IsometryData {
    pub fn new(
        domain_vectors: Vec<CVector>,
        range_vectors: Vec<CVector>,
        domain_dim: usize,
        range_dim: usize,
    ) -> Result<Self> {
        if domain_vectors.len() != range_vectors.len() {
            return Err(NumericsError::DimensionMismatch(format!(
                "{} domain vectors vs {} range vectors",
                domain_vectors.len(),
                range_vectors.len()
            )));
        }
        if domain_vectors.iter().any(|v| v.len() != domain_dim)
            || range_vectors.iter().any(|v| v.len() != range_dim)
        {
            return Err(NumericsError::DimensionMismatch(
                "vector length differs from its ambient dimension".into(),
            ));
        }
        Ok(Self {
            domain_vectors,
            range_vectors,
            domain_dim,
            range_dim,
        })
    }

    /// Largest entrywise difference between the two Gram matrices, and the
    /// largest Gram entry (for scaling).
    pub fn gram_mismatch(&self) -> (f64, f64) {
        let n = self.domain_vectors.len();
        let mut worst = 0.0_f64;
        let mut scale = 0.0_f64;
        for i in 0..n {
            for j in 0..n {
                let gd = self.domain_vectors[j].dotc(&self.domain_vectors[i]);
                let gr = self.range_vectors[j].dotc(&self.range_vectors[i]);
                worst = worst.max((gd - gr).norm());
                scale = scale.max(gd.norm()).max(gr.norm());
            }
        }
        (worst, scale)
    }
}

/// Extend the partial isometry `d_i ↦ r_i` to a unitary matrix.
///
/// When the ambient dimensions differ the smaller space is padded with zero
/// coordinates, so the result is `P x P` with `P = max(domain_dim, range_dim)`.
/// The Gram matrices must agree within `tol * max(1, largest Gram entry)`.
pub fn complete_to_unitary(v: &IsometryData, tol: f64) -> Result<CMatrix> {
    let p = v.domain_dim.max(v.range_dim);
    let (mismatch, scale) = v.gram_mismatch();
    let allowed = tol * scale.max(1.0);
    if mismatch > allowed {
        return Err(NumericsError::NotAnIsometry {
            mismatch,
            tol: allowed,
        });
    }
    if v.domain_vectors.is_empty() {
        return Ok(CMatrix::identity(p, p));
    }
    let pad = |vecs: &[CVector]| {
        CMatrix::from_fn(p, vecs.len(), |i, k| {
            vecs[k].get(i).copied().unwrap_or(Complex64::new(0.0, 0.0))
        })
    };
    let d = pad(&v.domain_vectors);
    let r = pad(&v.range_vectors);
    // Pivoted Gram-Schmidt on D; the same recurrence applied to R pairs an
    // orthonormal basis of span D with one of span R.
    let k = d.ncols();
    let mut dres: Vec<CVector> = (0..k).map(|j| d.column(j).into_owned()).collect();
    let mut rres: Vec<CVector> = (0..k).map(|j| r.column(j).into_owned()).collect();
    let scale = dres.iter().fold(0.0_f64, |a, v| a.max(v.norm()));
    let mut used = vec![false; k];
    let mut es: Vec<CVector> = Vec::new();
    let mut fs: Vec<CVector> = Vec::new();
    while es.len() < p {
        let Some(i) = (0..k)
            .filter(|&j| !used[j])
            .max_by(|&a, &b| dres[a].norm().total_cmp(&dres[b].norm()))
        else {
            break;
        };
        let nrm = dres[i].norm();
        if !(nrm > 1e-13 * scale) {
            break;
        }
        used[i] = true;
        let e = &dres[i] / Complex64::new(nrm, 0.0);
        let f = &rres[i] / Complex64::new(nrm, 0.0);
        for j in 0..k {
            if used[j] {
                continue;
            }
            // Twice, to keep the residuals orthogonal in floating point.
            for _ in 0..2 {
                let coeff = e.dotc(&dres[j]);
                dres[j] -= &e * coeff;
                rres[j] -= &f * coeff;
            }
        }
        es.push(e);
        fs.push(f);
    }
    let e = orthonormalize(&CMatrix::from_fn(p, es.len(), |i, j| es[j][i]))?;
    let f = orthonormalize(&CMatrix::from_fn(p, fs.len(), |i, j| fs[j][i]))?;
    let ec = complement(&e)?;
    let fc = complement(&f)?;
    Ok(&f * e.adjoint() + fc * ec.adjoint())
}

/// `X (X*X)^{-1/2}`: the nearest matrix with orthonormal columns.
fn orthonormalize(x: &CMatrix) -> Result<CMatrix> {
    if x.ncols() == 0 {
        return Ok(x.clone());
    }
    let eig = HermitianMatrix::new(x.adjoint() * x)?.eigen()?;
    let k = x.ncols();
    let inv_sqrt = CMatrix::from_fn(k, k, |i, j| {
        (0..k)
            .map(|l| {
                eig.vectors[(i, l)] * eig.vectors[(j, l)].conj() / eig.values[l].max(1e-300).sqrt()
            })
            .sum::<Complex64>()
    });
    Ok(x * inv_sqrt)
}

/// Orthonormal basis of the orthogonal complement of the columns of `x`,
/// which must be orthonormal.
fn complement(x: &CMatrix) -> Result<CMatrix> {
    let p = x.nrows();
    let proj = CMatrix::identity(p, p) - x * x.adjoint();
    let eig = HermitianMatrix::new(proj)?.eigen()?;
    let cols: Vec<usize> = (0..p).filter(|&i| eig.values[i] > 0.5).collect();
    if cols.len() + x.ncols() != p {
        return Err(NumericsError::EigenFailure { dim: p });
    }
    let basis = CMatrix::from_fn(p, cols.len(), |i, k| eig.vectors[(i, cols[k])]);
    orthonormalize(&basis)
}

/// `max(‖U*U − I‖_F, ‖UU* − I‖_F)`.
pub fn unitarity_defect(u: &CMatrix) -> f64 {
    let n = u.nrows();
    let id = CMatrix::identity(n, n);
    let a = (u.adjoint() * u - &id).norm();
    let b = (u * u.adjoint() - &id).norm();
    a.max(b)
}

/// Largest singular value.
pub fn operator_norm(m: &CMatrix) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    let gram = HermitianMatrix::new(m.adjoint() * m).expect("Gram of finite matrix");
    gram.eigenvalues()
        .map(|v| v.last().copied().unwrap_or(0.0).max(0.0).sqrt())
        .unwrap_or(f64::NAN)
}

pub(crate) fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Basic least-squares solution of `a x ≈ b` by Gram-Schmidt with column
/// pivoting; columns dependent on the chosen ones (relative residual below
/// `1e-13`) get coefficient zero.
pub fn lstsq_basic(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let (m, n) = a.shape();
    let mut res: Vec<DVector<f64>> = (0..n).map(|j| a.column(j).into_owned()).collect();
    let scale = res.iter().fold(0.0_f64, |acc, v| acc.max(v.norm()));
    let mut used = vec![false; n];
    let mut pivots = Vec::new();
    let mut qs: Vec<DVector<f64>> = Vec::new();
    while qs.len() < m {
        let Some(i) = (0..n)
            .filter(|&j| !used[j])
            .max_by(|&x, &y| res[x].norm().total_cmp(&res[y].norm()))
        else {
            break;
        };
        let nrm = res[i].norm();
        if !(nrm > 1e-13 * scale) {
            break;
        }
        used[i] = true;
        let q = &res[i] / nrm;
        for j in 0..n {
            if !used[j] {
                for _ in 0..2 {
                    let coeff = q.dot(&res[j]);
                    res[j] -= &q * coeff;
                }
            }
        }
        pivots.push(i);
        qs.push(q);
    }
    let k = pivots.len();
    // Triangular factor in the pivoted basis: r[(s, t)] = q_s · a_{pivot t}.
    let r = DMatrix::from_fn(k, k, |s, t| {
        if s <= t {
            qs[s].dot(&a.column(pivots[t]))
        } else {
            0.0
        }
    });
    let rhs = DVector::from_fn(k, |s, _| qs[s].dot(b));
    let mut x = DVector::zeros(n);
    if let Some(sol) = r.solve_upper_triangular(&rhs) {
        for (t, &j) in pivots.iter().enumerate() {
            x[j] = sol[t];
        }
    }
    x
}

/// Nonnegative least squares `min ‖E c − b‖` over `c ≥ 0` (Lawson-Hanson
/// active set).
pub fn nnls(e: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let k = e.ncols();
    let mut x = DVector::<f64>::zeros(k);
    let mut passive = vec![false; k];
    let scale = e.norm() * b.norm().max(1.0);
    let tol = 1e-13 * scale.max(1e-300);
    for _outer in 0..(3 * k + 10) {
        let w = e.transpose() * (b - e * &x);
        let pick = (0..k)
            .filter(|&i| !passive[i] && w[i] > tol)
            .max_by(|&a, &c| w[a].total_cmp(&w[c]));
        let Some(t) = pick else { break };
        passive[t] = true;
        for _inner in 0..(3 * k + 10) {
            let idx: Vec<usize> = (0..k).filter(|&i| passive[i]).collect();
            let sub = DMatrix::from_fn(e.nrows(), idx.len(), |r, c| e[(r, idx[c])]);
            let sol = lstsq_basic(&sub, b);
            if sol.iter().all(|&v| v > 0.0) {
                x.fill(0.0);
                for (c, &i) in idx.iter().enumerate() {
                    x[i] = sol[c];
                }
                break;
            }
            let mut alpha = f64::INFINITY;
            for (c, &i) in idx.iter().enumerate() {
                if sol[c] <= 0.0 {
                    alpha = alpha.min(x[i] / (x[i] - sol[c]));
                }
            }
            for (c, &i) in idx.iter().enumerate() {
                x[i] += alpha * (sol[c] - x[i]);
                if x[i] <= 1e-15 * scale {
                    x[i] = 0.0;
                    passive[i] = false;
                }
            }
            if !passive[t] {
                break;
            }
        }
    }
    x
}
