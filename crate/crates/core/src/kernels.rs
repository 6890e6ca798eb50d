//! Pick matrices and admissible kernels on finite node sets.

use num_complex::Complex64;
use thiserror::Error;

use crate::numerics::{c, psd_threshold, CMatrix, HermitianMatrix, NumericsError};
use crate::testfns::{eval_matrix_unchecked, EvalMatrix, NodeSet, TestFamily, TestFnError};

#[derive(Debug, Error)]
pub enum KernelError {
    #[error("node sets differ")]
    NodeMismatch,
    #[error("expected {expected} values, got {got}")]
    Length { expected: usize, got: usize },
    #[error("|value| = {modulus} at node {node} is outside the closed unit disk")]
    NotContractive { node: usize, modulus: f64 },
    #[error("|psi| = {modulus} at node {node} is not below 1")]
    Domain { node: usize, modulus: f64 },
    #[error("kernel is not positive: minimum eigenvalue {0:e}")]
    NotPositive(f64),
    #[error("malformed Gram CSV: {0}")]
    Csv(String),
    #[error(transparent)]
    TestFn(#[from] TestFnError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

pub type Result<T> = std::result::Result<T, KernelError>;

/// A positive kernel restricted to a node set.
#[derive(Clone, Debug)]
pub struct KernelGram {
    nodes: NodeSet,
    matrix: HermitianMatrix,
}

impl KernelGram {
    /// Checks positivity at the relative tolerance `tol`.
    pub fn new(nodes: NodeSet, matrix: HermitianMatrix, tol: f64) -> Result<Self> {
        if matrix.dim() != nodes.len() {
            return Err(KernelError::Length {
                expected: nodes.len(),
                got: matrix.dim(),
            });
        }
        let eig = matrix.eigenvalues()?;
        let min = eig.first().copied().unwrap_or(0.0);
        let max = eig.last().copied().unwrap_or(0.0).abs().max(min.abs());
        if min < -psd_threshold(max, tol) {
            return Err(KernelError::NotPositive(min));
        }
        Ok(Self { nodes, matrix })
    }

    pub fn nodes(&self) -> &NodeSet {
        &self.nodes
    }

    pub fn matrix(&self) -> &HermitianMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> HermitianMatrix {
        self.matrix
    }
}

/// Target values on a node set.
#[derive(Clone, Debug)]
pub struct DataValues {
    nodes: NodeSet,
    values: Vec<Complex64>,
}

impl DataValues {
    /// Requires `|ξ(x)| ≤ 1`.
    pub fn new(nodes: NodeSet, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != nodes.len() {
            return Err(KernelError::Length {
                expected: nodes.len(),
                got: values.len(),
            });
        }
        for (node, v) in values.iter().enumerate() {
            let modulus = v.norm();
            if !(modulus <= 1.0) {
                return Err(KernelError::NotContractive { node, modulus });
            }
        }
        Ok(Self { nodes, values })
    }

    pub fn nodes(&self) -> &NodeSet {
        &self.nodes
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn max_modulus(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.norm()))
    }
}

/// `(1 − v(x)·conj(v(y))) K(x,y)` for raw values.
pub fn pick_from_values(values: &[Complex64], k: &HermitianMatrix) -> HermitianMatrix {
    let n = values.len();
    assert_eq!(n, k.dim(), "value count must match kernel size");
    HermitianMatrix::from_fn(n, |x, y| {
        (c(1.0, 0.0) - values[x] * values[y].conj()) * k.get(x, y)
    })
    .expect("finite entries")
}

/// The matrix `1 − v(x)·conj(v(y))`.
pub fn defect_matrix(values: &[Complex64]) -> HermitianMatrix {
    let n = values.len();
    HermitianMatrix::from_fn(n, |x, y| c(1.0, 0.0) - values[x] * values[y].conj())
        .expect("finite entries")
}

pub fn pick_matrix(xi: &DataValues, k: &KernelGram) -> Result<HermitianMatrix> {
    if xi.nodes() != k.nodes() {
        return Err(KernelError::NodeMismatch);
    }
    Ok(pick_from_values(xi.values(), k.matrix()))
}

/// Smallest eigenvalue of each member's Pick matrix against `K`.
#[derive(Clone, Debug)]
pub struct AdmissibilityReport {
    pub admissible: bool,
    pub member_min_eigenvalues: Vec<f64>,
    /// Index of the most negative member.
    pub worst_member: Option<usize>,
}

pub fn admissibility_report(
    k: &KernelGram,
    fam: &TestFamily,
    tol: f64,
) -> Result<AdmissibilityReport> {
    let evals = eval_matrix_unchecked(fam, k.nodes())?;
    admissibility_from_values(k.matrix(), &evals, tol)
}

pub fn admissibility_from_values(
    k: &HermitianMatrix,
    evals: &EvalMatrix,
    tol: f64,
) -> Result<AdmissibilityReport> {
    if evals.nodes() != k.dim() {
        return Err(KernelError::Length {
            expected: k.dim(),
            got: evals.nodes(),
        });
    }
    let mut mins = Vec::with_capacity(evals.members());
    let mut admissible = true;
    let mut worst: Option<(usize, f64)> = None;
    for j in 0..evals.members() {
        let pj = pick_from_values(&evals.member_row(j), k);
        let eig = pj.eigenvalues()?;
        let min = eig[0];
        let scale = eig.last().unwrap().abs().max(min.abs());
        if min < -psd_threshold(scale, tol) {
            admissible = false;
        }
        if worst.is_none_or(|(_, w)| min < w) {
            worst = Some((j, min));
        }
        mins.push(min);
    }
    Ok(AdmissibilityReport {
        admissible,
        member_min_eigenvalues: mins,
        worst_member: worst.map(|(j, _)| j),
    })
}

pub fn is_admissible(k: &KernelGram, fam: &TestFamily, tol: f64) -> Result<bool> {
    Ok(admissibility_report(k, fam, tol)?.admissible)
}

/// `S(x,y) = 1/(1 − ψ(x)·conj(ψ(y)))`.
pub fn canonical_kernel(nodes: &NodeSet, psi: &[Complex64]) -> Result<KernelGram> {
    let m = canonical_matrix(psi)?;
    if psi.len() != nodes.len() {
        return Err(KernelError::Length {
            expected: nodes.len(),
            got: psi.len(),
        });
    }
    KernelGram::new(nodes.clone(), m, crate::numerics::DEFAULT_TOL)
}

pub fn canonical_matrix(psi: &[Complex64]) -> Result<HermitianMatrix> {
    for (node, v) in psi.iter().enumerate() {
        let modulus = v.norm();
        if !(modulus < 1.0) {
            return Err(KernelError::Domain { node, modulus });
        }
    }
    Ok(HermitianMatrix::from_fn(psi.len(), |x, y| {
        c(1.0, 0.0) / (c(1.0, 0.0) - psi[x] * psi[y].conj())
    })?)
}

/// The identity kernel.
pub fn toeplitz_kernel(nodes: &NodeSet) -> KernelGram {
    KernelGram {
        nodes: nodes.clone(),
        matrix: HermitianMatrix::identity(nodes.len()),
    }
}

/// Szegő kernel of the disk, `1/(1 − z·conj(w))`.
pub fn szego_gram(nodes: &NodeSet) -> Result<KernelGram> {
    let zs = scalar_coords(nodes)?;
    canonical_kernel(nodes, &zs)
}

fn scalar_coords(nodes: &NodeSet) -> Result<Vec<Complex64>> {
    nodes
        .points()
        .iter()
        .map(|p| {
            p.as_scalar()
                .ok_or_else(|| KernelError::TestFn(TestFnError::OutsideDomain(p.clone())))
        })
        .collect()
}

/// Lower bound for the multiplier norm of `ξ`: the smallest `C` with
/// `(C² − ξ(x)conj(ξ(y))) K(x,y)` positive for every sampled kernel.
/// Returns infinity if some kernel vanishes on a direction where
/// `ξ(x)conj(ξ(y))K(x,y)` does not.
pub fn norm_lower_bound(xi: &[Complex64], kernels: &[HermitianMatrix], tol: f64) -> Result<f64> {
    let mut best = 0.0_f64;
    for k in kernels {
        let n = k.dim();
        if n != xi.len() {
            return Err(KernelError::Length {
                expected: n,
                got: xi.len(),
            });
        }
        let eig = k.eigen()?;
        let lmax = eig.values.last().copied().unwrap_or(0.0);
        let cutoff = psd_threshold(lmax, tol);
        let g = HermitianMatrix::from_fn(n, |x, y| xi[x] * xi[y].conj() * k.get(x, y))?;
        let keep: Vec<usize> = (0..n).filter(|&i| eig.values[i] > cutoff).collect();
        let null: Vec<usize> = (0..n).filter(|&i| eig.values[i] <= cutoff).collect();
        let gm = g.as_matrix();
        // Null directions of K that G does not annihilate make every C fail.
        for &i in &null {
            let v = eig.vectors.column(i);
            let val = (v.adjoint() * gm * v)[(0, 0)].re;
            if val > psd_threshold(gm.norm(), tol) {
                return Ok(f64::INFINITY);
            }
        }
        if keep.is_empty() {
            continue;
        }
        let w = CMatrix::from_fn(n, keep.len(), |r, s| {
            eig.vectors[(r, keep[s])] / eig.values[keep[s]].sqrt()
        });
        let b = HermitianMatrix::new(w.adjoint() * gm * &w)?;
        let top = b.eigenvalues()?.last().copied().unwrap_or(0.0);
        best = best.max(top.max(0.0).sqrt());
    }
    Ok(best)
}

const CSV_HEADER: &str = "# agler-gram v1";

/// Row-major CSV, one matrix row per line as `re,im` pairs.
pub fn gram_to_csv(k: &HermitianMatrix) -> String {
    let mut out = format!("{CSV_HEADER} n={}\n", k.dim());
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(Vec::new());
    for x in 0..k.dim() {
        let row: Vec<String> = (0..k.dim())
            .flat_map(|y| {
                let v = k.get(x, y);
                [format!("{:e}", v.re), format!("{:e}", v.im)]
            })
            .collect();
        w.write_record(&row).expect("in-memory write");
    }
    out.push_str(&String::from_utf8(w.into_inner().expect("flush")).expect("utf8"));
    out
}

pub fn gram_from_csv(text: &str) -> Result<HermitianMatrix> {
    let first = text.lines().next().unwrap_or("");
    if !first.starts_with(CSV_HEADER) {
        return Err(KernelError::Csv(format!("missing header '{CSV_HEADER}'")));
    }
    let mut rd = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut rows: Vec<Vec<Complex64>> = Vec::new();
    for (line, rec) in rd.records().enumerate() {
        let rec = rec.map_err(|e| KernelError::Csv(e.to_string()))?;
        if rec.len() % 2 != 0 {
            return Err(KernelError::Csv(format!(
                "row {line}: odd number of fields"
            )));
        }
        let nums: std::result::Result<Vec<f64>, _> = rec.iter().map(str::parse::<f64>).collect();
        let nums = nums.map_err(|e| KernelError::Csv(format!("row {line}: {e}")))?;
        rows.push(nums.chunks(2).map(|p| c(p[0], p[1])).collect());
    }
    let n = rows.len();
    if rows.iter().any(|r| r.len() != n) {
        return Err(KernelError::Csv("matrix is not square".into()));
    }
    let m = CMatrix::from_fn(n, n, |x, y| rows[x][y]);
    let asym = (&m - m.adjoint()).norm();
    if asym > 1e-10 * (1.0 + m.norm()) {
        return Err(KernelError::Csv(format!(
            "matrix is not Hermitian (defect {asym:e})"
        )));
    }
    Ok(HermitianMatrix::new(m)?)
}
