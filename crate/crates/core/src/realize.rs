//! Unitary colligations from decompositions, and their transfer functions.
//!
//! A colligation is a unitary `U = [A B; C D]` on `ℰ ⊕ ℂ` together with a
//! splitting of `ℰ` into blocks, one per family member. With `Z(x)` the
//! diagonal operator that multiplies block `b` by `ψ_{j(b)}(x)`, the transfer
//! function is `W(x) = D + C Z(x) (I − A Z(x))⁻¹ B`.

use std::fmt::Write as _;

use num_complex::Complex64;
use rand::Rng;
use thiserror::Error;

use crate::agler::AglerDecomposition;
use crate::numerics::{
    c, complete_to_unitary, factor_psd, operator_norm, unitarity_defect, CMatrix, CVector,
    IsometryData, NumericsError,
};
use crate::testfns::{EvalMatrix, FamilySpec, Point, TestFamily, TestFnError};

#[derive(Debug, Error)]
pub enum RealizeError {
    #[error("decomposition inconsistent: Gram mismatch {mismatch:e} exceeds {allowed:e}")]
    Inconsistent { mismatch: f64, allowed: f64 },
    #[error("member {member} has |psi| = {modulus} >= 1 at the evaluation point")]
    Domain { member: usize, modulus: f64 },
    #[error("resolvent is ill-conditioned (condition number {0:e})")]
    IllConditioned(f64),
    #[error("operator for member {member} has norm {norm}, which is not {bound}")]
    NotContraction {
        member: usize,
        norm: f64,
        bound: &'static str,
    },
    #[error("no operator supplied for member {0}")]
    MissingOperator(usize),
    #[error("invalid partition: {0}")]
    Partition(String),
    #[error("colligation format error at line {line}: {reason}")]
    Format { line: usize, reason: String },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error(transparent)]
    TestFn(#[from] TestFnError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

pub type Result<T> = std::result::Result<T, RealizeError>;

/// Resolvents with a larger condition number are refused.
pub const MAX_CONDITION: f64 = 1e12;

/// Coordinates of `ℰ` on which `Z(x)` acts as `ψ_member(x)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Block {
    pub member: usize,
    pub label: String,
    pub rank: usize,
}

#[derive(Clone, Debug)]
pub struct Colligation {
    /// `(E+1)×(E+1)`; the last coordinate is the scalar input/output.
    u: CMatrix,
    blocks: Vec<Block>,
    family: Option<FamilySpec>,
}

impl Colligation {
    pub fn new(u: CMatrix, blocks: Vec<Block>) -> Result<Self> {
        let e: usize = blocks.iter().map(|b| b.rank).sum();
        if u.nrows() != e + 1 || u.ncols() != e + 1 {
            return Err(RealizeError::Dimension(format!(
                "U is {}x{} but blocks span {} state coordinates",
                u.nrows(),
                u.ncols(),
                e
            )));
        }
        Ok(Self {
            u,
            blocks,
            family: None,
        })
    }

    /// Random colligation: Haar-like unitary from the QR factorization of a
    /// complex Gaussian matrix.
    pub fn random(blocks: Vec<Block>, rng: &mut impl Rng) -> Result<Self> {
        let e: usize = blocks.iter().map(|b| b.rank).sum();
        Self::new(random_unitary(e + 1, rng), blocks)
    }

    pub fn with_family(mut self, spec: FamilySpec) -> Self {
        self.family = Some(spec);
        self
    }

    pub fn family(&self) -> Option<&FamilySpec> {
        self.family.as_ref()
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn unitary(&self) -> &CMatrix {
        &self.u
    }

    pub fn state_dim(&self) -> usize {
        self.u.nrows() - 1
    }

    pub fn a(&self) -> CMatrix {
        let e = self.state_dim();
        self.u.view((0, 0), (e, e)).into_owned()
    }

    pub fn b(&self) -> CVector {
        let e = self.state_dim();
        self.u.view((0, e), (e, 1)).column(0).into_owned()
    }

    pub fn c_row(&self) -> CMatrix {
        let e = self.state_dim();
        self.u.view((e, 0), (1, e)).into_owned()
    }

    pub fn d(&self) -> Complex64 {
        let e = self.state_dim();
        self.u[(e, e)]
    }

    pub fn unitarity_defect(&self) -> f64 {
        unitarity_defect(&self.u)
    }

    /// Largest member index used by a block.
    pub fn max_member(&self) -> Option<usize> {
        self.blocks.iter().map(|b| b.member).max()
    }

    /// Diagonal of `Z(x)` given every member's value at `x`.
    fn z_diagonal(&self, values: &[Complex64]) -> Result<Vec<Complex64>> {
        let mut z = Vec::with_capacity(self.state_dim());
        for b in &self.blocks {
            let v = *values.get(b.member).ok_or_else(|| {
                RealizeError::Dimension(format!("no value for member {}", b.member))
            })?;
            let modulus = v.norm();
            if !(modulus < 1.0) {
                return Err(RealizeError::Domain {
                    member: b.member,
                    modulus,
                });
            }
            z.extend(std::iter::repeat_n(v, b.rank));
        }
        Ok(z)
    }

    /// `W(x)` from the values `ψ_j(x)` of all family members (indexed by
    /// member).
    pub fn transfer_values(&self, values: &[Complex64]) -> Result<Complex64> {
        let z = self.z_diagonal(values)?;
        let e = z.len();
        if e == 0 {
            return Ok(self.d());
        }
        let a = self.a();
        // A Z scales column k of A by z_k.
        let az = CMatrix::from_fn(e, e, |i, k| a[(i, k)] * z[k]);
        let m = CMatrix::identity(e, e) - az;
        let state = solve_monitored(&m, &CMatrix::from_column_slice(e, 1, self.b().as_slice()))?;
        let c_row = self.c_row();
        let mut w = self.d();
        for k in 0..e {
            w += c_row[(0, k)] * z[k] * state[(k, 0)];
        }
        Ok(w)
    }

    /// `W(x)` for a family and a domain point.
    pub fn transfer_eval(&self, fam: &TestFamily, x: &Point) -> Result<Complex64> {
        let top = self.max_member().map_or(0, |m| m + 1);
        if top > fam.len() {
            return Err(RealizeError::Dimension(format!(
                "colligation uses member {} but the family has {}",
                top - 1,
                fam.len()
            )));
        }
        let mut values = vec![c(0.0, 0.0); top];
        for b in &self.blocks {
            values[b.member] = fam.eval(b.member, x)?;
        }
        self.transfer_values(&values)
    }

    /// `(I − A Z(x))⁻¹ B`.
    pub fn input_state(&self, values: &[Complex64]) -> Result<CVector> {
        let z = self.z_diagonal(values)?;
        let e = z.len();
        let a = self.a();
        let m = CMatrix::from_fn(e, e, |i, k| {
            let id = if i == k { 1.0 } else { 0.0 };
            c(id, 0.0) - a[(i, k)] * z[k]
        });
        let s = solve_monitored(&m, &CMatrix::from_column_slice(e, 1, self.b().as_slice()))?;
        Ok(s.column(0).into_owned())
    }

    /// `C (I − Z(x) A)⁻¹` as a column vector (its transpose).
    pub fn output_costate(&self, values: &[Complex64]) -> Result<CVector> {
        let z = self.z_diagonal(values)?;
        let e = z.len();
        let a = self.a();
        // (I − Z A)ᵀ y = Cᵀ
        let mt = CMatrix::from_fn(e, e, |i, k| {
            let id = if i == k { 1.0 } else { 0.0 };
            c(id, 0.0) - z[k] * a[(k, i)]
        });
        let s = solve_monitored(&mt, &self.c_row().transpose())?;
        Ok(s.column(0).into_owned())
    }

    /// `|W(x) − ξ(x)|` at each node, with member values given as
    /// rows of `psi` (members × nodes).
    pub fn node_residuals(&self, psi: &CMatrix, xi: &[Complex64]) -> Result<Vec<f64>> {
        if psi.ncols() != xi.len() {
            return Err(RealizeError::Dimension("one target value per node".into()));
        }
        (0..xi.len())
            .map(|x| {
                let values: Vec<Complex64> = psi.column(x).iter().copied().collect();
                Ok((self.transfer_values(&values)? - xi[x]).norm())
            })
            .collect()
    }
}

/// Solve `m X = rhs`, refusing matrices with condition number above
/// [`MAX_CONDITION`].
fn solve_monitored(m: &CMatrix, rhs: &CMatrix) -> Result<CMatrix> {
    let lu = m.clone().lu();
    let cond = match lu.try_inverse() {
        Some(inv) => operator_norm(m) * operator_norm(&inv),
        None => f64::INFINITY,
    };
    if !(cond <= MAX_CONDITION) {
        return Err(RealizeError::IllConditioned(cond));
    }
    lu.solve(rhs).ok_or(RealizeError::IllConditioned(cond))
}

pub fn random_unitary(n: usize, rng: &mut impl Rng) -> CMatrix {
    let g = CMatrix::from_fn(n, n, |_, _| {
        let (u1, u2): (f64, f64) = (rng.gen::<f64>().max(1e-300), rng.gen());
        let r = (-2.0 * u1.ln()).sqrt();
        Complex64::from_polar(r, std::f64::consts::TAU * u2)
    });
    let qr = g.qr();
    let (q, r) = (qr.q(), qr.r());
    // Fix the phases so the distribution does not depend on QR conventions.
    let phases = CMatrix::from_fn(n, n, |i, k| {
        if i == k && r[(k, k)].norm() > 0.0 {
            r[(k, k)] / r[(k, k)].norm()
        } else {
            c(0.0, 0.0)
        }
    });
    q * phases
}

#[derive(Clone, Debug)]
pub struct RealizeOptions {
    /// Eigenvalues below `factor_tol · λ_max` are dropped when factoring
    /// each block.
    pub factor_tol: f64,
    /// Allowed entrywise mismatch of the two Gram matrices. `None` means
    /// ten times the default feasibility tolerance of the target.
    pub gram_tol: Option<f64>,
}

impl Default for RealizeOptions {
    fn default() -> Self {
        Self {
            factor_tol: 1e-12,
            gram_tol: None,
        }
    }
}

/// Lurking isometry: factor `Γ_j = H_j H_j*`, map
/// `[ψ_j(x) H_j(x,·)ᵀ …; 1] ↦ [H_j(x,·)ᵀ …; ξ(x)]` for every node and
/// complete to a unitary.
pub fn build_colligation(
    dec: &AglerDecomposition,
    xi: &[Complex64],
    opts: &RealizeOptions,
) -> Result<Colligation> {
    let n = dec.nodes();
    if xi.len() != n {
        return Err(RealizeError::Dimension(format!(
            "{} targets for {n} nodes",
            xi.len()
        )));
    }
    let mut blocks = Vec::new();
    let mut factors = Vec::new();
    for (j, g) in dec.gammas.iter().enumerate() {
        let h = factor_psd(g, opts.factor_tol)?;
        if h.ncols() == 0 {
            continue;
        }
        blocks.push(Block {
            member: j,
            label: dec.labels[j].clone(),
            rank: h.ncols(),
        });
        factors.push((j, h));
    }
    let e: usize = blocks.iter().map(|b| b.rank).sum();
    let mut domain = Vec::with_capacity(n);
    let mut range = Vec::with_capacity(n);
    for x in 0..n {
        let mut d = CVector::zeros(e + 1);
        let mut r = CVector::zeros(e + 1);
        let mut off = 0;
        for (j, h) in &factors {
            let psi = dec.psi[(*j, x)];
            for k in 0..h.ncols() {
                d[off + k] = psi * h[(x, k)];
                r[off + k] = h[(x, k)];
            }
            off += h.ncols();
        }
        d[e] = c(1.0, 0.0);
        r[e] = xi[x];
        domain.push(d);
        range.push(r);
    }
    let data = IsometryData::new(domain, range, e + 1, e + 1)?;
    let (mismatch, _) = data.gram_mismatch();
    let target_norm = crate::agler::target_matrix(xi).frobenius_norm();
    let allowed = opts.gram_tol.unwrap_or(10.0 * 1e-8 * (1.0 + target_norm));
    if mismatch > allowed {
        return Err(RealizeError::Inconsistent { mismatch, allowed });
    }
    let u = complete_to_unitary(&data, f64::INFINITY)?;
    Colligation::new(u, blocks)
}

/// Operators `T_j`, one per family member, on a common space.
#[derive(Clone, Debug)]
pub struct Representation {
    ops: Vec<CMatrix>,
    dim: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RepMode {
    /// Every `‖T_j‖ < 1`.
    Strict,
    /// Every `‖T_j‖ ≤ 1`; the value at `r·T`, `r = 1 − 1e-6`, is also
    /// reported.
    NonStrict,
}

/// Radius used to regularize boundary representations.
pub const REGULARIZATION_RADIUS: f64 = 1.0 - 1e-6;

impl Representation {
    pub fn new(ops: Vec<CMatrix>) -> Result<Self> {
        let dim = ops.first().map_or(0, |t| t.nrows());
        if ops.iter().any(|t| t.nrows() != dim || t.ncols() != dim) {
            return Err(RealizeError::Dimension(
                "operators must share one square size".into(),
            ));
        }
        Ok(Self { ops, dim })
    }

    /// Scalars `ψ_j(x)` as `1×1` operators.
    pub fn point(values: &[Complex64]) -> Self {
        Self {
            ops: values
                .iter()
                .map(|&v| CMatrix::from_element(1, 1, v))
                .collect(),
            dim: 1,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn ops(&self) -> &[CMatrix] {
        &self.ops
    }

    pub fn check(&self, members: impl IntoIterator<Item = usize>, mode: RepMode) -> Result<()> {
        for j in members {
            let t = self.ops.get(j).ok_or(RealizeError::MissingOperator(j))?;
            let norm = operator_norm(t);
            match mode {
                RepMode::Strict if !(norm < 1.0) => {
                    return Err(RealizeError::NotContraction {
                        member: j,
                        norm,
                        bound: "below 1",
                    })
                }
                RepMode::NonStrict if !(norm <= 1.0 + 1e-12) => {
                    return Err(RealizeError::NotContraction {
                        member: j,
                        norm,
                        bound: "at most 1",
                    })
                }
                _ => {}
            }
        }
        Ok(())
    }
}

/// Value of the transfer function at a representation.
#[derive(Clone, Debug)]
pub struct RepValue {
    /// `None` in non-strict mode when the unregularized resolvent is
    /// singular or ill-conditioned.
    pub value: Option<CMatrix>,
    /// Value at `r·π`, non-strict mode only.
    pub regularized: Option<CMatrix>,
}

impl RepValue {
    /// The unregularized value when available, else the regularized one.
    pub fn best(&self) -> &CMatrix {
        self.value
            .as_ref()
            .or(self.regularized.as_ref())
            .expect("at least one value is always computed")
    }
}

/// `D⊗I + (C⊗I) π(Z) (I − (A⊗I) π(Z))⁻¹ (B⊗I)` with
/// `π(Z) = Σ_b P_b ⊗ T_{member(b)}`.
pub fn transfer_eval_rep(
    col: &Colligation,
    rep: &Representation,
    mode: RepMode,
) -> Result<RepValue> {
    rep.check(col.blocks.iter().map(|b| b.member), mode)?;
    match mode {
        RepMode::Strict => Ok(RepValue {
            value: Some(rep_value(col, rep, 1.0)?),
            regularized: None,
        }),
        RepMode::NonStrict => {
            let value = match rep_value(col, rep, 1.0) {
                Ok(v) => Some(v),
                Err(RealizeError::IllConditioned(_)) => None,
                Err(e) => return Err(e),
            };
            Ok(RepValue {
                value,
                regularized: Some(rep_value(col, rep, REGULARIZATION_RADIUS)?),
            })
        }
    }
}

fn rep_value(col: &Colligation, rep: &Representation, radius: f64) -> Result<CMatrix> {
    let h = rep.dim();
    let e = col.state_dim();
    let d = CMatrix::identity(h, h) * col.d();
    if e == 0 {
        return Ok(d);
    }
    let size = e * h;
    // π(Z): block diagonal, one h×h block per state coordinate.
    let mut pz = CMatrix::zeros(size, size);
    let mut coord = 0;
    for b in &col.blocks {
        let t = &rep.ops[b.member] * c(radius, 0.0);
        for _ in 0..b.rank {
            pz.view_mut((coord * h, coord * h), (h, h)).copy_from(&t);
            coord += 1;
        }
    }
    let a = col.a();
    let ai = kron_identity(&a, h);
    let bi = kron_identity(&CMatrix::from_column_slice(e, 1, col.b().as_slice()), h);
    let ci = kron_identity(&col.c_row(), h);
    let m = CMatrix::identity(size, size) - &ai * &pz;
    let state = solve_monitored(&m, &bi)?;
    Ok(d + ci * pz * state)
}

fn kron_identity(m: &CMatrix, h: usize) -> CMatrix {
    let (r, cc) = m.shape();
    let mut out = CMatrix::zeros(r * h, cc * h);
    for i in 0..r {
        for k in 0..cc {
            let v = m[(i, k)];
            if v == c(0.0, 0.0) {
                continue;
            }
            for s in 0..h {
                out[(i * h + s, k * h + s)] = v;
            }
        }
    }
    out
}

/// Grouping of family members into cells, each represented by one sample
/// member.
#[derive(Clone, Debug)]
pub struct Partition {
    pub cells: Vec<Vec<usize>>,
    pub samples: Vec<usize>,
}

impl Partition {
    /// Cells of `m / cells` consecutive members; the sample is each cell's
    /// first member.
    pub fn contiguous(m: usize, cells: usize) -> Result<Self> {
        if cells == 0 || !m.is_multiple_of(cells) {
            return Err(RealizeError::Partition(format!(
                "{cells} cells do not divide {m} members"
            )));
        }
        let w = m / cells;
        Ok(Self {
            cells: (0..cells).map(|k| (k * w..(k + 1) * w).collect()).collect(),
            samples: (0..cells).map(|k| k * w).collect(),
        })
    }

    pub fn singletons(m: usize) -> Self {
        Self {
            cells: (0..m).map(|j| vec![j]).collect(),
            samples: (0..m).collect(),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.cells.len() != self.samples.len() {
            return Err(RealizeError::Partition("one sample per cell".into()));
        }
        let mut seen = std::collections::HashSet::new();
        for (cell, s) in self.cells.iter().zip(&self.samples) {
            if cell.is_empty() {
                return Err(RealizeError::Partition("empty cell".into()));
            }
            if !cell.contains(s) {
                return Err(RealizeError::Partition(format!(
                    "sample {s} is outside its cell"
                )));
            }
            for j in cell {
                if !seen.insert(*j) {
                    return Err(RealizeError::Partition(format!(
                        "member {j} is in two cells"
                    )));
                }
            }
        }
        Ok(())
    }

    fn cell_of(&self, member: usize) -> Option<usize> {
        self.cells.iter().position(|cell| cell.contains(&member))
    }

    /// `sup_{x, j} |ψ_j(x) − ψ_{sample(cell(j))}(x)|` over the probe nodes.
    pub fn diameter(&self, evals: &EvalMatrix) -> f64 {
        let mut eps = 0.0_f64;
        for (cell, &s) in self.cells.iter().zip(&self.samples) {
            for &j in cell {
                for x in 0..evals.nodes() {
                    eps = eps.max((evals.get(j, x) - evals.get(s, x)).norm());
                }
            }
        }
        eps
    }
}

/// Merge the blocks within each cell and evaluate them at the cell's
/// sample member. State coordinates are reordered so that each merged block
/// is contiguous.
pub fn coarsen_representation(col: &Colligation, partition: &Partition) -> Result<Colligation> {
    partition.validate()?;
    let e = col.state_dim();
    let mut offsets = Vec::with_capacity(col.blocks.len());
    let mut off = 0;
    for b in &col.blocks {
        offsets.push(off);
        off += b.rank;
    }
    let mut order: Vec<usize> = Vec::with_capacity(e + 1);
    let mut blocks = Vec::new();
    for (k, &sample) in partition.samples.iter().enumerate() {
        let mut rank = 0;
        for (bi, b) in col.blocks.iter().enumerate() {
            match partition.cell_of(b.member) {
                Some(cell) if cell == k => {
                    order.extend(offsets[bi]..offsets[bi] + b.rank);
                    rank += b.rank;
                }
                None => {
                    return Err(RealizeError::Partition(format!(
                        "member {} is in no cell",
                        b.member
                    )))
                }
                _ => {}
            }
        }
        if rank > 0 {
            blocks.push(Block {
                member: sample,
                label: format!("cell{k}@{sample}"),
                rank,
            });
        }
    }
    order.push(e);
    let u = CMatrix::from_fn(e + 1, e + 1, |i, k| col.u[(order[i], order[k])]);
    let mut out = Colligation::new(u, blocks)?;
    out.family = col.family.clone();
    Ok(out)
}

/// Drift of the transfer function under coarsening at probe nodes.
#[derive(Clone, Debug)]
pub struct CoarseningReport {
    /// Cell diameter over the probes.
    pub epsilon: f64,
    /// `|W_α(x) − W(x)|` per probe.
    pub drift: Vec<f64>,
    /// `‖C(I − Z_α A)⁻¹‖ · ‖Z_α(x) − Z(x)‖ · ‖(I − A Z)⁻¹ B‖` per probe,
    /// from `W_α − W = C(I − Z_α A)⁻¹ (Z_α − Z) (I − A Z)⁻¹ B`.
    pub bound: Vec<f64>,
    /// `‖Z_α(x) − Z(x)‖ / ((1 − ‖Z(x)‖)(1 − ‖Z_α(x)‖))` per probe, using only
    /// that `U` is a contraction.
    pub a_priori_bound: Vec<f64>,
    /// `‖Z_α(x) − Z(x)‖` per probe; at most `epsilon`.
    pub z_error: Vec<f64>,
}

impl CoarseningReport {
    pub fn max_drift(&self) -> f64 {
        self.drift.iter().copied().fold(0.0, f64::max)
    }

    pub fn within_bound(&self) -> bool {
        self.drift
            .iter()
            .zip(&self.bound)
            .all(|(d, b)| *d <= *b * (1.0 + 1e-9) + 1e-14)
    }
}

/// Compare `col` with its coarsening at the probe nodes. `evals` holds every
/// family member at every probe.
pub fn coarsening_report(
    col: &Colligation,
    partition: &Partition,
    evals: &EvalMatrix,
) -> Result<CoarseningReport> {
    let coarse = coarsen_representation(col, partition)?;
    let mut drift = Vec::new();
    let mut bound = Vec::new();
    let mut a_priori = Vec::new();
    let mut z_error = Vec::new();
    for x in 0..evals.nodes() {
        let values: Vec<Complex64> = (0..evals.members()).map(|j| evals.get(j, x)).collect();
        let w = col.transfer_values(&values)?;
        let wa = coarse.transfer_values(&values)?;
        let mut dz = 0.0_f64;
        let mut z = 0.0_f64;
        let mut za = 0.0_f64;
        for b in &col.blocks {
            let cell = partition.cell_of(b.member).expect("validated");
            let s = partition.samples[cell];
            dz = dz.max((values[b.member] - values[s]).norm());
            z = z.max(values[b.member].norm());
            za = za.max(values[s].norm());
        }
        let state = col.input_state(&values)?;
        let costate = coarse.output_costate(&values)?;
        drift.push((w - wa).norm());
        bound.push(costate.norm() * dz * state.norm());
        a_priori.push(dz / ((1.0 - z) * (1.0 - za)));
        z_error.push(dz);
    }
    Ok(CoarseningReport {
        epsilon: partition.diameter(evals),
        drift,
        bound,
        a_priori_bound: a_priori,
        z_error,
    })
}

const FORMAT_HEADER: &str = "# agler-colligation v1";

impl Colligation {
    /// Text export: header, optional family spec as JSON, blocks, then `U`
    /// row by row as `re im` pairs with 16 significant digits.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "{FORMAT_HEADER}").unwrap();
        match &self.family {
            Some(spec) => writeln!(
                out,
                "family {}",
                serde_json::to_string(spec).expect("serializable")
            )
            .unwrap(),
            None => writeln!(out, "family none").unwrap(),
        }
        writeln!(out, "state_dim {}", self.state_dim()).unwrap();
        writeln!(out, "blocks {}", self.blocks.len()).unwrap();
        for b in &self.blocks {
            writeln!(out, "block {} {} {}", b.member, b.rank, b.label).unwrap();
        }
        writeln!(out, "unitary").unwrap();
        for i in 0..self.u.nrows() {
            let row: Vec<String> = (0..self.u.ncols())
                .map(|k| format!("{:.15e} {:.15e}", self.u[(i, k)].re, self.u[(i, k)].im))
                .collect();
            writeln!(out, "{}", row.join(" ")).unwrap();
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
        let mut next = |what: &str| {
            lines.next().ok_or_else(|| RealizeError::Format {
                line: 0,
                reason: format!("unexpected end of input, expected {what}"),
            })
        };
        let bad = |line: usize, reason: String| RealizeError::Format { line, reason };

        let (ln, header) = next("header")?;
        if header != FORMAT_HEADER {
            return Err(bad(ln, format!("expected '{FORMAT_HEADER}'")));
        }
        let (ln, fam) = next("family line")?;
        let fam = fam
            .strip_prefix("family ")
            .ok_or_else(|| bad(ln, "expected 'family ...'".into()))?;
        let family = if fam == "none" {
            None
        } else {
            Some(serde_json::from_str::<FamilySpec>(fam).map_err(|e| bad(ln, e.to_string()))?)
        };
        let mut keyed = |key: &str| -> Result<usize> {
            let (ln, l) = next(key)?;
            l.strip_prefix(key)
                .and_then(|v| v.trim().parse().ok())
                .ok_or_else(|| bad(ln, format!("expected '{key} <count>'")))
        };
        let e = keyed("state_dim")?;
        let nblocks = keyed("blocks")?;
        let mut blocks = Vec::with_capacity(nblocks);
        for _ in 0..nblocks {
            let (ln, l) = next("block line")?;
            let mut parts = l.splitn(4, ' ');
            let (Some("block"), Some(m), Some(r)) = (parts.next(), parts.next(), parts.next())
            else {
                return Err(bad(ln, "expected 'block <member> <rank> <label>'".into()));
            };
            blocks.push(Block {
                member: m
                    .parse()
                    .map_err(|_| bad(ln, format!("bad member '{m}'")))?,
                rank: r.parse().map_err(|_| bad(ln, format!("bad rank '{r}'")))?,
                label: parts.next().unwrap_or("").to_string(),
            });
        }
        let (ln, l) = next("'unitary'")?;
        if l != "unitary" {
            return Err(bad(ln, "expected 'unitary'".into()));
        }
        let mut u = CMatrix::zeros(e + 1, e + 1);
        for i in 0..=e {
            let (ln, l) = next("matrix row")?;
            let nums: std::result::Result<Vec<f64>, _> =
                l.split_whitespace().map(str::parse::<f64>).collect();
            let nums = nums.map_err(|err| bad(ln, err.to_string()))?;
            if nums.len() != 2 * (e + 1) {
                return Err(bad(
                    ln,
                    format!("expected {} numbers, found {}", 2 * (e + 1), nums.len()),
                ));
            }
            for k in 0..=e {
                u[(i, k)] = c(nums[2 * k], nums[2 * k + 1]);
            }
        }
        let mut col = Colligation::new(u, blocks)?;
        col.family = family;
        Ok(col)
    }
}
