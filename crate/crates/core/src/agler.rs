//! Cone membership for Pick data: find positive blocks `Γ_j` with
//! `Σ_j Γ_j ∘ A_j = M`, where `A_j(x,y) = 1 − ψ_j(x)·conj(ψ_j(y))`, or an
//! admissible kernel `K` whose Pick matrix `M ∘ K` is not positive.
//!
//! Closed-form answers are tried first: a single block `M ⊘ A_j`, the
//! canonical kernel `1 ⊘ A_j` of one member, and entries where every `A_j`
//! vanishes. Otherwise one of three primal engines runs:
//!
//! * column generation (default) projects `M` onto the cone. Each step adds
//!   the rank-one atom `(g g*) ∘ A_j` along the most negative eigenvector of
//!   `A_jᵀ ∘ R` and refits nonnegative weights. The residual `R` transposed
//!   is the candidate separating kernel.
//! * alternating projections between the PSD blocks and the affine set
//!   `{Σ Γ_j ∘ A_j = M}`, with Dykstra's correction on the cone step;
//! * the same projections accelerated with momentum and adaptive restart.
//!
//! The affine projection decouples entry by entry. Near a solution a
//! Gauss-Newton step on factors `Γ_j = H_j H_j*` drives the residual to
//! round-off. Candidate kernels are made exactly admissible by adding a
//! multiple of the identity before they are checked.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kernels::{defect_matrix, KernelError};
use crate::numerics::{
    c, psd_project, psd_threshold, CMatrix, CVector, HermitianMatrix, NumericsError,
};
use crate::testfns::{eval_matrix_unchecked, EvalMatrix, NodeSet, TestFamily, TestFnError};

#[derive(Debug, Error)]
pub enum AglerError {
    #[error("the family has no members")]
    EmptyFamily,
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("|xi| = {modulus} at node {node} is too close to the unit circle")]
    TargetOnBoundary { node: usize, modulus: f64 },
    #[error(transparent)]
    TestFn(#[from] TestFnError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

pub type Result<T> = std::result::Result<T, AglerError>;

/// Targets with modulus at or above `1 − BOUNDARY_GUARD` are rejected.
pub const BOUNDARY_GUARD: f64 = 1e-12;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    /// Residual bound for a decomposition; `None` means `1e-8·(1 + ‖M‖_F)`.
    pub feas_tol: Option<f64>,
    /// Required negativity of `λ_min(M ∘ K)` for a certificate.
    pub cert_margin: f64,
    pub max_iters: usize,
    /// Relative tolerance for PSD decisions.
    pub psd_tol: f64,
    /// Iterations between convergence and certificate checks.
    pub check_every: usize,
    pub polish: bool,
    /// Projected-subgradient steps spent on the dual after the primal budget
    /// runs out.
    pub dual_refine_iters: usize,
    pub engine: Engine,
    /// Try the closed-form single-member and canonical-kernel answers first.
    pub shortcuts: bool,
}

/// Primal iteration scheme.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Engine {
    /// Alternating projections with Dykstra's correction on the cone step.
    Dykstra,
    /// Accelerated projected gradient on the squared distance to the affine
    /// set, with adaptive restart.
    Accelerated,
    /// Project the target onto the cone by adding the most negative
    /// eigenvector atom `(g g*) ∘ A_j` per step and re-solving a
    /// nonnegative least-squares fit. The residual is also the candidate
    /// separating kernel.
    ColumnGeneration,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            feas_tol: None,
            cert_margin: 1e-6,
            max_iters: 50_000,
            psd_tol: 1e-9,
            check_every: 20,
            polish: true,
            dual_refine_iters: 2_000,
            engine: Engine::ColumnGeneration,
            shortcuts: true,
        }
    }
}

impl SolverOptions {
    pub fn feas_tol_for(&self, m: &HermitianMatrix) -> f64 {
        self.feas_tol
            .unwrap_or_else(|| 1e-8 * (1.0 + m.frobenius_norm()))
    }
}

/// `Σ_j Γ_j ∘ A_j = M` with every `Γ_j` positive.
#[derive(Clone, Debug)]
pub struct AglerDecomposition {
    /// Member values on the nodes: rows are members, columns nodes.
    pub psi: CMatrix,
    pub labels: Vec<String>,
    pub gammas: Vec<HermitianMatrix>,
    /// `trace Γ_j`: the masses of the discrete measure on the family.
    pub weights: Vec<f64>,
}

impl AglerDecomposition {
    pub fn new(psi: CMatrix, labels: Vec<String>, gammas: Vec<HermitianMatrix>) -> Result<Self> {
        if psi.nrows() != gammas.len() || labels.len() != gammas.len() {
            return Err(AglerError::Dimension(
                "one block and label per member".into(),
            ));
        }
        if gammas.iter().any(|g| g.dim() != psi.ncols()) {
            return Err(AglerError::Dimension(
                "block size must equal node count".into(),
            ));
        }
        let weights = gammas.iter().map(HermitianMatrix::trace).collect();
        Ok(Self {
            psi,
            labels,
            gammas,
            weights,
        })
    }

    pub fn nodes(&self) -> usize {
        self.psi.ncols()
    }

    pub fn members(&self) -> usize {
        self.gammas.len()
    }

    pub fn member_values(&self, j: usize) -> Vec<Complex64> {
        self.psi.row(j).iter().copied().collect()
    }

    /// `Σ_j Γ_j ∘ A_j`.
    pub fn combine(&self) -> HermitianMatrix {
        let amats: Vec<CMatrix> = (0..self.members())
            .map(|j| defect_matrix(&self.member_values(j)).into_matrix())
            .collect();
        let gs: Vec<CMatrix> = self.gammas.iter().map(|g| g.as_matrix().clone()).collect();
        HermitianMatrix::new(combine(&amats, &gs)).expect("finite blocks")
    }

    /// `max_x Σ_j Γ_j(x,x)`.
    pub fn diagonal_mass(&self) -> f64 {
        diagonal_mass(self.gammas.iter().map(HermitianMatrix::as_matrix))
    }

    pub fn total_mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Members with a nonzero block.
    pub fn support(&self, rel_tol: f64) -> Vec<usize> {
        let top = self.weights.iter().fold(0.0_f64, |a, &w| a.max(w));
        (0..self.members())
            .filter(|&j| top > 0.0 && self.weights[j] > rel_tol * top)
            .collect()
    }
}

/// An admissible kernel separating the target from the cone.
#[derive(Clone, Debug)]
pub struct DualCertificate {
    pub k: HermitianMatrix,
    pub member_min_eigenvalues: Vec<f64>,
    pub target_min_eigenvalue: f64,
}

/// How a verdict was reached.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Route {
    ZeroTarget,
    SingleMember(usize),
    CanonicalKernel(usize),
    Structural,
    Iterative,
    DualRefinement,
    Exhausted,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Diagnostics {
    pub route: Route,
    pub iterations: usize,
    pub feas_tol: f64,
    /// Smallest residual `‖Σ Γ_j ∘ A_j − M‖_F` over positive iterates.
    pub best_residual: f64,
    /// Largest `−λ_min(M ∘ K)` over admissible candidate kernels.
    pub best_dual_margin: Option<f64>,
    /// `max_x Σ_j Γ_j(x,x)` of the last primal iterate.
    pub diagonal_mass: f64,
    /// `Σ_j trace Γ_j` of the last primal iterate.
    pub total_mass: f64,
    /// `‖M‖ / ε` with `ε = min_x (1 − max_j |ψ_j(x)|²)`; infinite when ε ≤ 0.
    pub mass_bound: f64,
    /// Set when the diagonal mass exceeded ten times `mass_bound`.
    pub mass_exceeded: bool,
}

#[derive(Clone, Debug)]
pub enum Verdict {
    Feasible(AglerDecomposition),
    Infeasible(DualCertificate),
    Undecided,
}

impl Verdict {
    pub fn name(&self) -> &'static str {
        match self {
            Verdict::Feasible(_) => "feasible",
            Verdict::Infeasible(_) => "infeasible",
            Verdict::Undecided => "undecided",
        }
    }

    pub fn is_feasible(&self) -> bool {
        matches!(self, Verdict::Feasible(_))
    }

    pub fn is_infeasible(&self) -> bool {
        matches!(self, Verdict::Infeasible(_))
    }
}

#[derive(Clone, Debug)]
pub struct SolveOutcome {
    pub verdict: Verdict,
    pub diagnostics: Diagnostics,
}

/// `1 − ξ(x)·conj(ξ(y))`.
pub fn target_matrix(xi: &[Complex64]) -> HermitianMatrix {
    defect_matrix(xi)
}

/// Decide whether `M` lies in the cone generated by the family on `nodes`.
///
/// Member values are not required to be strictly inside the disk here, so
/// families that break the test-function axiom can still be studied.
pub fn cone_membership(
    m: &HermitianMatrix,
    fam: &TestFamily,
    nodes: &NodeSet,
    opts: &SolverOptions,
) -> Result<SolveOutcome> {
    let evals = eval_matrix_unchecked(fam, nodes)?;
    cone_membership_values(m, &evals, fam.labels(), opts)
}

/// Interpolation problem `φ|_F = ξ`: cone membership of `1 − ξ ξ*`.
pub fn solve_interpolation(
    xi: &[Complex64],
    fam: &TestFamily,
    nodes: &NodeSet,
    opts: &SolverOptions,
) -> Result<SolveOutcome> {
    check_target(xi)?;
    if xi.len() != nodes.len() {
        return Err(AglerError::Dimension(format!(
            "{} target values for {} nodes",
            xi.len(),
            nodes.len()
        )));
    }
    cone_membership(&target_matrix(xi), fam, nodes, opts)
}

pub fn check_target(xi: &[Complex64]) -> Result<()> {
    for (node, v) in xi.iter().enumerate() {
        let modulus = v.norm();
        if !(modulus < 1.0 - BOUNDARY_GUARD) {
            return Err(AglerError::TargetOnBoundary { node, modulus });
        }
    }
    Ok(())
}

pub fn cone_membership_values(
    m: &HermitianMatrix,
    evals: &EvalMatrix,
    labels: &[String],
    opts: &SolverOptions,
) -> Result<SolveOutcome> {
    if evals.members() == 0 {
        return Err(AglerError::EmptyFamily);
    }
    if m.dim() != evals.nodes() {
        return Err(AglerError::Dimension(format!(
            "target is {}x{} but there are {} nodes",
            m.dim(),
            m.dim(),
            evals.nodes()
        )));
    }
    if labels.len() != evals.members() {
        return Err(AglerError::Dimension("one label per member".into()));
    }
    Solver::new(m, evals, labels, opts)?.run()
}

/// Least-squares nearest point of the cone to `M`.
#[derive(Clone, Debug)]
pub struct ConeProjection {
    pub gammas: Vec<HermitianMatrix>,
    /// `‖Σ Γ_j ∘ A_j − M‖_F`.
    pub residual: f64,
    /// `max_j −λ_min(A_j ∘ Rᵀ)` for the residual `R`; zero at the exact
    /// nearest point.
    pub stationarity: f64,
    pub iterations: usize,
}

impl ConeProjection {
    pub fn total_mass(&self) -> f64 {
        self.gammas.iter().map(HermitianMatrix::trace).sum()
    }

    /// `Σ_j j·trace Γ_j / Σ_j trace Γ_j` with members counted from 1.
    pub fn mean_member_index(&self) -> f64 {
        let total = self.total_mass();
        if total <= 0.0 {
            return 0.0;
        }
        self.gammas
            .iter()
            .enumerate()
            .map(|(j, g)| (j + 1) as f64 * g.trace())
            .sum::<f64>()
            / total
    }
}

/// Nearest point of the cone to `M` in Frobenius norm, found by column
/// generation. Runs until stationary or `opts.max_iters` steps.
pub fn project_onto_cone(
    m: &HermitianMatrix,
    evals: &EvalMatrix,
    opts: &SolverOptions,
) -> Result<ConeProjection> {
    if evals.members() == 0 {
        return Err(AglerError::EmptyFamily);
    }
    if m.dim() != evals.nodes() {
        return Err(AglerError::Dimension(
            "target size differs from node count".into(),
        ));
    }
    let labels = vec![String::new(); evals.members()];
    let mut solver = Solver::new(m, evals, &labels, opts)?;
    let ColumnsEnd::Stopped(gammas, iterations, stationarity) = solver.generate_columns(false)?
    else {
        unreachable!("projection mode never certifies");
    };
    let residual = (combine(&solver.amats, &gammas) - m.as_matrix()).norm();
    Ok(ConeProjection {
        gammas: gammas
            .into_iter()
            .map(HermitianMatrix::new)
            .collect::<std::result::Result<Vec<_>, _>>()?,
        residual,
        stationarity,
        iterations,
    })
}

fn combine(amats: &[CMatrix], gammas: &[CMatrix]) -> CMatrix {
    let n = amats[0].nrows();
    let mut out = CMatrix::zeros(n, n);
    for (a, g) in amats.iter().zip(gammas) {
        out += a.component_mul(g);
    }
    out
}

fn diagonal_mass<'a>(gammas: impl Iterator<Item = &'a CMatrix>) -> f64 {
    let mut diag: Vec<f64> = Vec::new();
    for g in gammas {
        if diag.is_empty() {
            diag = vec![0.0; g.nrows()];
        }
        for (x, d) in diag.iter_mut().enumerate() {
            *d += g[(x, x)].re;
        }
    }
    diag.into_iter().fold(0.0, f64::max)
}

enum ColumnsEnd {
    Feasible(Vec<CMatrix>, usize),
    Infeasible(DualCertificate, Vec<CMatrix>, usize),
    /// Budget exhausted or stationary; carries the remaining admissibility
    /// defect of the residual kernel.
    Stopped(Vec<CMatrix>, usize, f64),
}

struct Solver<'a> {
    m: &'a HermitianMatrix,
    evals: &'a EvalMatrix,
    labels: &'a [String],
    opts: &'a SolverOptions,
    amats: Vec<CMatrix>,
    /// `Σ_j |A_j(x,y)|²`.
    a2: DMatrix<f64>,
    /// `min_x A_j(x,x)` per member.
    eps: Vec<f64>,
    feas_tol: f64,
    mass_bound: f64,
    best_residual: f64,
    best_dual: Option<(f64, HermitianMatrix)>,
}

impl<'a> Solver<'a> {
    fn new(
        m: &'a HermitianMatrix,
        evals: &'a EvalMatrix,
        labels: &'a [String],
        opts: &'a SolverOptions,
    ) -> Result<Self> {
        let n = evals.nodes();
        let amats: Vec<CMatrix> = (0..evals.members())
            .map(|j| defect_matrix(&evals.member_row(j)).into_matrix())
            .collect();
        let a2 = DMatrix::from_fn(n, n, |x, y| {
            amats.iter().map(|a| a[(x, y)].norm_sqr()).sum()
        });
        let eps: Vec<f64> = amats
            .iter()
            .map(|a| (0..n).map(|x| a[(x, x)].re).fold(f64::INFINITY, f64::min))
            .collect();
        let node_eps = (0..n)
            .map(|x| {
                let top = (0..evals.members())
                    .map(|j| evals.get(j, x).norm_sqr())
                    .fold(0.0, f64::max);
                1.0 - top
            })
            .fold(f64::INFINITY, f64::min);
        let mass_bound = if node_eps > 0.0 {
            m.spectral_norm()? / node_eps
        } else {
            f64::INFINITY
        };
        Ok(Self {
            m,
            evals,
            labels,
            opts,
            amats,
            a2,
            eps,
            feas_tol: opts.feas_tol_for(m),
            mass_bound,
            best_residual: f64::INFINITY,
            best_dual: None,
        })
    }

    fn n(&self) -> usize {
        self.m.dim()
    }

    fn members(&self) -> usize {
        self.amats.len()
    }

    fn diagnostics(&self, route: Route, iterations: usize, gammas: &[CMatrix]) -> Diagnostics {
        let diagonal_mass = if gammas.is_empty() {
            0.0
        } else {
            diagonal_mass(gammas.iter())
        };
        let total_mass = gammas
            .iter()
            .map(|g| (0..g.nrows()).map(|x| g[(x, x)].re).sum::<f64>())
            .sum();
        Diagnostics {
            route,
            iterations,
            feas_tol: self.feas_tol,
            best_residual: self.best_residual,
            best_dual_margin: self.best_dual.as_ref().map(|(v, _)| *v),
            diagonal_mass,
            total_mass,
            mass_bound: self.mass_bound,
            mass_exceeded: diagonal_mass > 10.0 * self.mass_bound,
        }
    }

    fn feasible(
        &mut self,
        route: Route,
        iterations: usize,
        gammas: Vec<CMatrix>,
    ) -> Result<SolveOutcome> {
        let residual = (combine(&self.amats, &gammas) - self.m.as_matrix()).norm();
        self.best_residual = self.best_residual.min(residual);
        let diagnostics = self.diagnostics(route, iterations, &gammas);
        let blocks = gammas
            .into_iter()
            .map(HermitianMatrix::new)
            .collect::<std::result::Result<Vec<_>, _>>()?;
        let dec = AglerDecomposition::new(self.evals.values.clone(), self.labels.to_vec(), blocks)?;
        Ok(SolveOutcome {
            verdict: Verdict::Feasible(dec),
            diagnostics,
        })
    }

    fn infeasible(
        &mut self,
        route: Route,
        iterations: usize,
        cert: DualCertificate,
        gammas: &[CMatrix],
    ) -> SolveOutcome {
        let margin = -cert.target_min_eigenvalue;
        if self.best_dual.as_ref().is_none_or(|(v, _)| margin > *v) {
            self.best_dual = Some((margin, cert.k.clone()));
        }
        SolveOutcome {
            diagnostics: self.diagnostics(route, iterations, gammas),
            verdict: Verdict::Infeasible(cert),
        }
    }

    fn run(mut self) -> Result<SolveOutcome> {
        let n = self.n();
        let mm = self.members();
        let zero = || vec![CMatrix::zeros(n, n); mm];

        if self.m.frobenius_norm() == 0.0 {
            return self.feasible(Route::ZeroTarget, 0, zero());
        }
        if let Some(cert) = self.structural_certificate()? {
            return Ok(self.infeasible(Route::Structural, 0, cert, &[]));
        }
        if self.opts.shortcuts {
            if let Some((j, gammas)) = self.single_member()? {
                return self.feasible(Route::SingleMember(j), 0, gammas);
            }
            if let Some((j, cert)) = self.canonical_certificate()? {
                return Ok(self.infeasible(Route::CanonicalKernel(j), 0, cert, &[]));
            }
        }
        self.iterate()
    }

    /// Entries where every `A_j` vanishes but `M` does not.
    fn structural_certificate(&self) -> Result<Option<DualCertificate>> {
        let n = self.n();
        let scale = 1.0 + self.m.frobenius_norm();
        for x in 0..n {
            for y in x..n {
                if self.a2[(x, y)] > 1e-28 * scale * scale {
                    continue;
                }
                let v = self.m.get(x, y);
                if v.norm() <= self.opts.cert_margin {
                    continue;
                }
                let mut k = CMatrix::zeros(n, n);
                if x == y {
                    k[(x, x)] = c(-v.re.signum(), 0.0);
                } else {
                    // M ∘ K is then [[0, |v|], [|v|, 0]] on {x, y}.
                    let phase = v.conj() / v.norm();
                    k[(x, y)] = phase;
                    k[(y, x)] = phase.conj();
                }
                let cert = self.certificate_from(HermitianMatrix::new(k)?)?;
                if self.accepts(&cert) {
                    return Ok(Some(cert));
                }
            }
        }
        Ok(None)
    }

    /// `Γ_j = M ⊘ A_j` for a single member, when that is positive.
    fn single_member(&self) -> Result<Option<(usize, Vec<CMatrix>)>> {
        let n = self.n();
        let mm = self.members();
        let mnorm = self.m.as_matrix().norm();
        let blocks = |j: usize, g: CMatrix| {
            let mut gs = vec![CMatrix::zeros(n, n); mm];
            gs[j] = g;
            gs
        };
        for (j, a) in self.amats.iter().enumerate() {
            if (a - self.m.as_matrix()).norm() <= 1e-14 * (1.0 + mnorm) {
                return Ok(Some((
                    j,
                    blocks(j, CMatrix::from_element(n, n, c(1.0, 0.0))),
                )));
            }
        }
        for (j, a) in self.amats.iter().enumerate() {
            let mut ok = true;
            let g = CMatrix::from_fn(n, n, |x, y| {
                let (av, mv) = (a[(x, y)], self.m.get(x, y));
                if av.norm() > 1e-14 {
                    mv / av
                } else {
                    if mv.norm() > 0.0 {
                        ok = false;
                    }
                    c(0.0, 0.0)
                }
            });
            if !ok || g.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
                continue;
            }
            let h = HermitianMatrix::new(g)?;
            let vals = h.eigenvalues()?;
            let norm = vals.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
            if vals[0] < -psd_threshold(norm, 1e-12) {
                continue;
            }
            let g = psd_project(&h)?.into_matrix();
            let gammas = blocks(j, g);
            let residual = (combine(&self.amats, &gammas) - self.m.as_matrix()).norm();
            if residual <= self.feas_tol {
                return Ok(Some((j, gammas)));
            }
        }
        Ok(None)
    }

    /// The canonical kernel `1/A_j` of one member as a certificate.
    fn canonical_certificate(&self) -> Result<Option<(usize, DualCertificate)>> {
        let n = self.n();
        for (j, a) in self.amats.iter().enumerate() {
            if self.eps[j] <= 0.0 {
                continue;
            }
            let s = CMatrix::from_fn(n, n, |x, y| c(1.0, 0.0) / a[(x, y)]);
            if s.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
                continue;
            }
            let s = HermitianMatrix::new(s)?;
            let pick = self.m.hadamard(&s)?;
            if pick.min_eigenvalue()? >= -self.opts.cert_margin {
                continue;
            }
            let cert = self.certificate_from(s)?;
            if self.accepts(&cert) {
                return Ok(Some((j, cert)));
            }
        }
        Ok(None)
    }

    fn certificate_from(&self, k: HermitianMatrix) -> Result<DualCertificate> {
        let member_min_eigenvalues = self
            .amats
            .iter()
            .map(|a| Ok(hadamard_h(a, &k)?.min_eigenvalue()?))
            .collect::<Result<Vec<f64>>>()?;
        let target_min_eigenvalue = self.m.hadamard(&k)?.min_eigenvalue()?;
        Ok(DualCertificate {
            k,
            member_min_eigenvalues,
            target_min_eigenvalue,
        })
    }

    fn accepts(&self, cert: &DualCertificate) -> bool {
        certificate_holds(cert, &self.amats, self.m, self.opts).unwrap_or(false)
    }

    /// Shift `K` by a multiple of the identity until every `A_j ∘ K` is
    /// positive, then normalize to unit spectral norm.
    fn repair(&self, k: &HermitianMatrix) -> Result<Option<HermitianMatrix>> {
        let mut shift = 0.0_f64;
        for (j, a) in self.amats.iter().enumerate() {
            let lam = hadamard_h(a, k)?.min_eigenvalue()?;
            if lam < 0.0 {
                if self.eps[j] <= 0.0 {
                    return Ok(None);
                }
                shift = shift.max(-lam / self.eps[j]);
            }
        }
        // A little extra so round-off in the shifted blocks stays positive.
        let shift = shift * (1.0 + 1e-9);
        let n = self.n();
        let shifted =
            HermitianMatrix::new(k.as_matrix() + CMatrix::identity(n, n) * c(shift, 0.0))?;
        let norm = shifted.spectral_norm()?;
        if !(norm > 0.0) {
            return Ok(None);
        }
        Ok(Some(shifted.scale(1.0 / norm)))
    }

    /// Candidate kernel from the displacement between a positive iterate and
    /// its affine projection.
    fn gap_candidate(&mut self, lhs: &CMatrix) -> Result<Option<DualCertificate>> {
        let n = self.n();
        let diff = lhs - self.m.as_matrix();
        let w = CMatrix::from_fn(n, n, |x, y| {
            let d = self.a2[(x, y)];
            if d > 0.0 {
                diff[(x, y)] / d
            } else {
                c(0.0, 0.0)
            }
        });
        if w.norm() == 0.0 {
            return Ok(None);
        }
        let k = HermitianMatrix::new(w.transpose())?;
        self.try_candidate(&k)
    }

    fn try_candidate(&mut self, k: &HermitianMatrix) -> Result<Option<DualCertificate>> {
        let Some(k) = self.repair(k)? else {
            return Ok(None);
        };
        let cert = self.certificate_from(k)?;
        if cert
            .member_min_eigenvalues
            .iter()
            .zip(&self.amats)
            .all(|(&l, a)| l >= -psd_threshold(a.norm(), self.opts.psd_tol))
        {
            let margin = -cert.target_min_eigenvalue;
            if self.best_dual.as_ref().is_none_or(|(v, _)| margin > *v) {
                self.best_dual = Some((margin, cert.k.clone()));
            }
        }
        Ok(self.accepts(&cert).then_some(cert))
    }

    fn affine_project(&self, y: &[CMatrix]) -> Vec<CMatrix> {
        let n = self.n();
        let lhs = combine(&self.amats, y);
        let mut x: Vec<CMatrix> = y.to_vec();
        for r in 0..n {
            for s in 0..n {
                let d = self.a2[(r, s)];
                if d == 0.0 {
                    continue;
                }
                let corr = (self.m.get(r, s) - lhs[(r, s)]) / d;
                for (xj, a) in x.iter_mut().zip(&self.amats) {
                    xj[(r, s)] += a[(r, s)].conj() * corr;
                }
            }
        }
        x
    }

    fn iterate(mut self) -> Result<SolveOutcome> {
        if self.opts.engine == Engine::ColumnGeneration {
            return self.column_generation();
        }
        let n = self.n();
        let mm = self.members();
        let check_every = self.opts.check_every.max(1);
        let mut x = vec![CMatrix::zeros(n, n); mm];
        let mut p = vec![CMatrix::zeros(n, n); mm];
        let mut y = vec![CMatrix::zeros(n, n); mm];
        let mut momentum = 1.0_f64;
        let polish_trigger = 1e-2 * (1.0 + self.m.frobenius_norm());
        let mut last_polish: Option<(usize, f64)> = None;
        let mut iterations = 0;

        while iterations < self.opts.max_iters {
            iterations += 1;
            match self.opts.engine {
                Engine::Dykstra => {
                    for j in 0..mm {
                        let t = &x[j] + &p[j];
                        let yj = psd_project(&HermitianMatrix::new(t.clone())?)?.into_matrix();
                        p[j] = t - &yj;
                        y[j] = yj;
                    }
                    x = self.affine_project(&y);
                }
                Engine::Accelerated | Engine::ColumnGeneration => {
                    // Here x is the extrapolated point and p the previous
                    // cone iterate.
                    let g = self.affine_project(&x);
                    for j in 0..mm {
                        p[j] = std::mem::replace(
                            &mut y[j],
                            psd_project(&HermitianMatrix::new(g[j].clone())?)?.into_matrix(),
                        );
                    }
                    let uphill: f64 = (0..mm)
                        .map(|j| (&x[j] - &y[j]).dot(&(&y[j] - &p[j])).re)
                        .sum();
                    if uphill > 0.0 {
                        momentum = 1.0;
                    }
                    let next = 0.5 * (1.0 + (1.0 + 4.0 * momentum * momentum).sqrt());
                    let beta = (momentum - 1.0) / next;
                    momentum = next;
                    for j in 0..mm {
                        x[j] = &y[j] + (&y[j] - &p[j]) * c(beta, 0.0);
                    }
                }
            }

            if iterations % check_every != 0 && iterations != self.opts.max_iters {
                continue;
            }
            let lhs = combine(&self.amats, &y);
            let residual = (&lhs - self.m.as_matrix()).norm();
            self.best_residual = self.best_residual.min(residual);
            if residual <= self.feas_tol {
                let gammas = if self.opts.polish {
                    self.polish(&y, 30).map_or(y.clone(), |(g, _)| g)
                } else {
                    y.clone()
                };
                return self.feasible(Route::Iterative, iterations, gammas);
            }
            let due = last_polish.is_none_or(|(at, res)| {
                iterations >= at + 50 * check_every || residual < 0.1 * res
            });
            if self.opts.polish && residual <= polish_trigger && due {
                last_polish = Some((iterations, residual));
                if let Some((g, res)) = self.polish(&y, 30) {
                    if res <= self.feas_tol {
                        return self.feasible(Route::Iterative, iterations, g);
                    }
                }
            }
            if let Some(cert) = self.gap_candidate(&lhs)? {
                return Ok(self.infeasible(Route::Iterative, iterations, cert, &y));
            }
        }

        if self.opts.dual_refine_iters > 0 {
            let start = self.best_dual.as_ref().map(|(_, k)| k.clone());
            let start = match start {
                Some(k) => k,
                None => {
                    let lhs = combine(&self.amats, &y);
                    HermitianMatrix::new((&lhs - self.m.as_matrix()).transpose())?
                }
            };
            if let Some(cert) = self.refine_dual(start)? {
                return Ok(self.infeasible(Route::DualRefinement, iterations, cert, &y));
            }
        }
        Ok(SolveOutcome {
            diagnostics: self.diagnostics(Route::Exhausted, iterations, &y),
            verdict: Verdict::Undecided,
        })
    }

    fn column_generation(mut self) -> Result<SolveOutcome> {
        Ok(match self.generate_columns(true)? {
            ColumnsEnd::Feasible(gammas, it) => self.feasible(Route::Iterative, it, gammas)?,
            ColumnsEnd::Infeasible(cert, gammas, it) => {
                self.infeasible(Route::Iterative, it, cert, &gammas)
            }
            ColumnsEnd::Stopped(gammas, it, _) => SolveOutcome {
                diagnostics: self.diagnostics(Route::Exhausted, it, &gammas),
                verdict: Verdict::Undecided,
            },
        })
    }

    /// Column generation for the nearest point of the cone to `M`. With
    /// `certify`, stops early on a decomposition or a certificate.
    fn generate_columns(&mut self, certify: bool) -> Result<ColumnsEnd> {
        let n = self.n();
        let mm = self.members();
        let target = herm_to_frob(self.m.as_matrix());
        let mut atoms: Vec<(usize, CVector, DVector<f64>)> = Vec::new();
        let mut gammas = vec![CMatrix::zeros(n, n); mm];
        let polish_trigger = 1e-2 * (1.0 + self.m.frobenius_norm());
        let mut last_polish: Option<(usize, f64)> = None;
        let mut iterations = 0;
        let per_step = mm.min(n).max(1);
        let mut checkpoint: Option<f64> = None;

        loop {
            let lhs = combine(&self.amats, &gammas);
            let r = &lhs - self.m.as_matrix();
            let residual = r.norm();
            self.best_residual = self.best_residual.min(residual);
            if certify && residual <= self.feas_tol {
                let gammas = if self.opts.polish {
                    self.polish(&gammas, 30).map_or(gammas, |(g, _)| g)
                } else {
                    gammas
                };
                return Ok(ColumnsEnd::Feasible(gammas, iterations));
            }
            let due =
                last_polish.is_none_or(|(at, res)| iterations >= at + 200 || residual < 0.1 * res);
            if self.opts.polish && residual <= polish_trigger && due {
                last_polish = Some((iterations, residual));
                if let Some((g, res)) = self.polish(&gammas, 30) {
                    if certify && res <= self.feas_tol {
                        return Ok(ColumnsEnd::Feasible(g, iterations));
                    }
                    if !certify && res < 1e-12 * (1.0 + self.m.frobenius_norm()) {
                        return Ok(ColumnsEnd::Stopped(g, iterations, 0.0));
                    }
                }
            }

            // Oracle: λ_min(A_jᵀ ∘ R) is also λ_min(A_j ∘ Rᵀ), the
            // admissibility defect of the candidate kernel Rᵀ.
            let mut candidates: Vec<(f64, usize, CVector)> = Vec::new();
            let mut shift = 0.0_f64;
            let mut repairable = true;
            for (j, a) in self.amats.iter().enumerate() {
                let b = HermitianMatrix::new(a.transpose().component_mul(&r))?;
                let eig = b.eigen()?;
                let lam = eig.values[0];
                if lam < 0.0 {
                    if self.eps[j] > 0.0 {
                        shift = shift.max(-lam / self.eps[j]);
                    } else {
                        repairable = false;
                    }
                    candidates.push((lam, j, eig.vectors.column(0).into_owned()));
                }
            }
            let worst = candidates.iter().map(|c| c.0).fold(0.0, f64::min);
            let stationary = residual == 0.0 || -worst <= 1e-10 * residual;
            if iterations % 100 == 0 {
                if let Some(prev) = checkpoint {
                    if residual > prev * (1.0 - 1e-12) {
                        return Ok(ColumnsEnd::Stopped(gammas, iterations, -worst));
                    }
                }
                checkpoint = Some(residual);
            }
            if certify && repairable && residual > 0.0 {
                let k = HermitianMatrix::new(
                    r.transpose() + CMatrix::identity(n, n) * c(shift * (1.0 + 1e-9), 0.0),
                )?;
                let norm = k.spectral_norm()?;
                if norm > 0.0 {
                    let lam = self.m.hadamard(&k)?.min_eigenvalue()? / norm;
                    if lam < -self.opts.cert_margin {
                        let cert = self.certificate_from(k.scale(1.0 / norm))?;
                        if self.accepts(&cert) {
                            return Ok(ColumnsEnd::Infeasible(cert, gammas, iterations));
                        }
                    }
                    if self.best_dual.as_ref().is_none_or(|(v, _)| -lam > *v) {
                        self.best_dual = Some((-lam, k.scale(1.0 / norm)));
                    }
                }
            }
            if stationary || iterations >= self.opts.max_iters {
                return Ok(ColumnsEnd::Stopped(gammas, iterations, -worst));
            }
            iterations += 1;

            candidates.sort_by(|a, b| a.0.total_cmp(&b.0));
            for (_, j, g) in candidates.into_iter().take(per_step) {
                let x = (&g * g.adjoint()).component_mul(&self.amats[j]);
                atoms.push((j, g, herm_to_frob(&x)));
            }
            let e = DMatrix::from_fn(target.len(), atoms.len(), |row, col| atoms[col].2[row]);
            let coef = crate::numerics::nnls(&e, &target);
            let mut kept = Vec::with_capacity(atoms.len());
            for (atom, w) in atoms.into_iter().zip(coef.iter()) {
                if *w > 0.0 {
                    kept.push((atom, *w));
                }
            }
            gammas = vec![CMatrix::zeros(n, n); mm];
            for ((j, g, _), w) in &kept {
                gammas[*j] += (g * g.adjoint()) * c(*w, 0.0);
            }
            atoms = kept.into_iter().map(|(a, _)| a).collect();
        }
    }

    /// Projected subgradient descent on `λ_min(M ∘ K)` over admissible `K`.
    fn refine_dual(&mut self, start: HermitianMatrix) -> Result<Option<DualCertificate>> {
        let n = self.n();
        let mut k = start;
        let norm = k.spectral_norm()?;
        if !(norm > 0.0) {
            return Ok(None);
        }
        k = k.scale(1.0 / norm);
        let mconj = self.m.as_matrix().map(|z| z.conj());
        for it in 0..self.opts.dual_refine_iters {
            let pick = self.m.hadamard(&k)?;
            let eig = pick.eigen()?;
            let v = eig.vectors.column(0).into_owned();
            let grad = mconj.component_mul(&(&v * v.adjoint()));
            let step = 0.5 / ((it + 1) as f64).sqrt();
            let mut next = k.as_matrix() - grad * c(step, 0.0);
            for a in &self.amats {
                let h = HermitianMatrix::new(a.component_mul(&next))?;
                let eig = h.eigen()?;
                if eig.values[0] >= 0.0 {
                    continue;
                }
                let clipped = psd_project(&h)?.into_matrix();
                next = CMatrix::from_fn(n, n, |x, y| {
                    let av = a[(x, y)];
                    if av.norm() > 1e-12 {
                        clipped[(x, y)] / av
                    } else {
                        next[(x, y)]
                    }
                });
            }
            let next = HermitianMatrix::new(next)?;
            let norm = next.spectral_norm()?;
            if !(norm > 0.0) {
                return Ok(None);
            }
            k = next.scale(1.0 / norm);
            if it % 10 == 9 || it + 1 == self.opts.dual_refine_iters {
                if let Some(cert) = self.try_candidate(&k)? {
                    return Ok(Some(cert));
                }
            }
        }
        Ok(None)
    }

    /// Levenberg-Marquardt on factors `Γ_j = H_j H_j*` of the active blocks.
    /// Returns the polished blocks and their residual if it improved.
    fn polish(&self, gammas: &[CMatrix], max_steps: usize) -> Option<(Vec<CMatrix>, f64)> {
        let n = self.n();
        let top = gammas.iter().map(|g| g.norm()).fold(0.0, f64::max);
        if top == 0.0 {
            return None;
        }
        let mut factors: Vec<(usize, CMatrix)> = Vec::new();
        for (j, g) in gammas.iter().enumerate() {
            if g.norm() <= 1e-13 * top {
                continue;
            }
            let h = HermitianMatrix::new(g.clone()).ok()?;
            let eig = h.eigen().ok()?;
            let keep: Vec<usize> = (0..n).filter(|&k| eig.values[k] > 1e-13 * top).collect();
            if keep.is_empty() {
                continue;
            }
            let f = CMatrix::from_fn(n, keep.len(), |r, s| {
                eig.vectors[(r, keep[s])] * eig.values[keep[s]].sqrt()
            });
            factors.push((j, f));
        }
        let rows = n * n;
        let unknowns: usize = factors.iter().map(|(_, f)| 2 * f.len()).sum();
        if unknowns == 0 || rows * unknowns > 40_000_000 {
            return None;
        }

        let blocks_of = |factors: &[(usize, CMatrix)]| {
            let mut gs = vec![CMatrix::zeros(n, n); gammas.len()];
            for (j, f) in factors {
                gs[*j] = f * f.adjoint();
            }
            gs
        };
        let residual_vec = |gs: &[CMatrix]| -> DVector<f64> {
            let r = combine(&self.amats, gs) - self.m.as_matrix();
            herm_to_real(&r)
        };

        let start = blocks_of(&factors);
        let mut r = residual_vec(&start);
        let start_norm = r.norm();
        let mut rnorm = start_norm;
        let mut lambda = 1e-3;
        for _ in 0..max_steps {
            if rnorm <= 1e-15 * (1.0 + self.m.frobenius_norm()) {
                break;
            }
            // Normal matrix J Jᵀ accumulated one member at a time.
            let mut jjt = DMatrix::<f64>::zeros(rows, rows);
            let mut jacs = Vec::with_capacity(factors.len());
            for (j, f) in &factors {
                let jac = self.factor_jacobian(&self.amats[*j], f);
                jjt += &jac * jac.transpose();
                jacs.push(jac);
            }
            let mut accepted = false;
            for _ in 0..8 {
                let mu = lambda * rnorm;
                let mut sys = jjt.clone();
                for i in 0..rows {
                    sys[(i, i)] += mu;
                }
                let Some(chol) = sys.cholesky() else {
                    lambda *= 10.0;
                    continue;
                };
                let z = chol.solve(&r);
                let trial: Vec<(usize, CMatrix)> = factors
                    .iter()
                    .zip(&jacs)
                    .map(|((j, f), jac)| {
                        let delta = jac.transpose() * &z;
                        let (nr, nc) = (f.nrows(), f.ncols());
                        let step = CMatrix::from_fn(nr, nc, |p, k| {
                            let idx = 2 * (k * nr + p);
                            c(delta[idx], delta[idx + 1])
                        });
                        (*j, f - step)
                    })
                    .collect();
                let tr = residual_vec(&blocks_of(&trial));
                let tn = tr.norm();
                if tn < rnorm {
                    factors = trial;
                    r = tr;
                    rnorm = tn;
                    lambda = (lambda / 10.0).max(1e-12);
                    accepted = true;
                    break;
                }
                lambda *= 10.0;
            }
            if !accepted {
                break;
            }
        }
        if rnorm < start_norm {
            Some((blocks_of(&factors), rnorm))
        } else {
            None
        }
    }

    /// Jacobian of `herm_to_real(A ∘ (H H*))` with respect to the real and
    /// imaginary parts of `H`, column-major in `H`.
    fn factor_jacobian(&self, a: &CMatrix, h: &CMatrix) -> DMatrix<f64> {
        let n = self.n();
        let (nr, nc) = (h.nrows(), h.ncols());
        let mut jac = DMatrix::<f64>::zeros(n * n, 2 * nr * nc);
        let i = c(0.0, 1.0);
        for k in 0..nc {
            for p in 0..nr {
                let col = 2 * (k * nr + p);
                for (which, alpha, beta) in [(0, c(1.0, 0.0), c(1.0, 0.0)), (1, i, -i)] {
                    // Only row p and column p of the product change.
                    let mut put = |x: usize, y: usize, v: Complex64| {
                        let (row_re, row_im) = real_index(n, x, y);
                        jac[(row_re, col + which)] += v.re;
                        if let Some(ri) = row_im {
                            jac[(ri, col + which)] += v.im;
                        }
                    };
                    for y in p..n {
                        let mut v = a[(p, y)] * alpha * h[(y, k)].conj();
                        if y == p {
                            v += a[(p, p)] * beta * h[(p, k)];
                        }
                        put(p, y, v);
                    }
                    for x in 0..p {
                        put(x, p, a[(x, p)] * beta * h[(x, k)]);
                    }
                }
            }
        }
        jac
    }
}

/// Real coordinates of a Hermitian matrix: the diagonal, then real and
/// imaginary parts of the strict upper triangle.
fn herm_to_real(r: &CMatrix) -> DVector<f64> {
    let n = r.nrows();
    let mut v = DVector::zeros(n * n);
    for x in 0..n {
        for y in x..n {
            let (re, im) = real_index(n, x, y);
            v[re] = r[(x, y)].re;
            if let Some(im) = im {
                v[im] = r[(x, y)].im;
            }
        }
    }
    v
}

/// Real coordinates in which the Euclidean norm is the Frobenius norm.
fn herm_to_frob(r: &CMatrix) -> DVector<f64> {
    let n = r.nrows();
    let mut v = herm_to_real(r);
    for k in n..v.len() {
        v[k] *= std::f64::consts::SQRT_2;
    }
    v
}

fn real_index(n: usize, x: usize, y: usize) -> (usize, Option<usize>) {
    if x == y {
        return (x, None);
    }
    // Position of (x, y), x < y, in row-major order of the strict upper triangle.
    let k = x * (2 * n - x - 1) / 2 + (y - x - 1);
    (n + 2 * k, Some(n + 2 * k + 1))
}

fn hadamard_h(a: &CMatrix, k: &HermitianMatrix) -> Result<HermitianMatrix> {
    Ok(HermitianMatrix::new(a.component_mul(k.as_matrix()))?)
}

fn certificate_holds(
    cert: &DualCertificate,
    amats: &[CMatrix],
    m: &HermitianMatrix,
    opts: &SolverOptions,
) -> Result<bool> {
    for a in amats {
        let h = hadamard_h(a, &cert.k)?;
        let vals = h.eigenvalues()?;
        let norm = vals.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
        if vals[0] < -psd_threshold(norm, opts.psd_tol) {
            return Ok(false);
        }
    }
    Ok(m.hadamard(&cert.k)?.min_eigenvalue()? < -opts.cert_margin)
}

/// Independent recheck of a decomposition.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DecompositionReport {
    pub residual: f64,
    pub member_min_eigenvalues: Vec<f64>,
    /// Members whose block fails the PSD test.
    pub psd_violations: Vec<usize>,
    pub feas_tol: f64,
    pub valid: bool,
}

/// Recheck `Σ Γ_j ∘ A_j = 1 − ξξ*` and positivity of every block.
pub fn validate_decomposition(
    dec: &AglerDecomposition,
    xi: &[Complex64],
    feas_tol: f64,
) -> Result<DecompositionReport> {
    validate_decomposition_against(dec, &target_matrix(xi), feas_tol)
}

pub fn validate_decomposition_against(
    dec: &AglerDecomposition,
    m: &HermitianMatrix,
    feas_tol: f64,
) -> Result<DecompositionReport> {
    if m.dim() != dec.nodes() {
        return Err(AglerError::Dimension(
            "target size differs from node count".into(),
        ));
    }
    let residual = (dec.combine().as_matrix() - m.as_matrix()).norm();
    let mut mins = Vec::with_capacity(dec.members());
    let mut violations = Vec::new();
    for (j, g) in dec.gammas.iter().enumerate() {
        let vals = g.eigenvalues()?;
        let norm = vals.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
        let min = vals.first().copied().unwrap_or(0.0);
        if min < -psd_threshold(norm, crate::numerics::DEFAULT_TOL) {
            violations.push(j);
        }
        mins.push(min);
    }
    Ok(DecompositionReport {
        valid: residual <= feas_tol && violations.is_empty(),
        residual,
        member_min_eigenvalues: mins,
        psd_violations: violations,
        feas_tol,
    })
}

/// Independent recheck of a certificate.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CertificateReport {
    pub member_min_eigenvalues: Vec<f64>,
    pub target_min_eigenvalue: f64,
    pub kernel_min_eigenvalue: f64,
    pub admissible: bool,
    pub valid: bool,
}

pub fn certificate_report(
    cert: &DualCertificate,
    psi: &EvalMatrix,
    m: &HermitianMatrix,
    opts: &SolverOptions,
) -> Result<CertificateReport> {
    if cert.k.dim() != psi.nodes() || m.dim() != psi.nodes() {
        return Err(AglerError::Dimension(
            "certificate size differs from node count".into(),
        ));
    }
    let mut mins = Vec::with_capacity(psi.members());
    let mut admissible = true;
    for j in 0..psi.members() {
        let a = defect_matrix(&psi.member_row(j)).into_matrix();
        let vals = hadamard_h(&a, &cert.k)?.eigenvalues()?;
        let norm = vals.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
        if vals[0] < -psd_threshold(norm, opts.psd_tol) {
            admissible = false;
        }
        mins.push(vals[0]);
    }
    let target_min_eigenvalue = m.hadamard(&cert.k)?.min_eigenvalue()?;
    Ok(CertificateReport {
        valid: admissible && target_min_eigenvalue < -opts.cert_margin,
        member_min_eigenvalues: mins,
        target_min_eigenvalue,
        kernel_min_eigenvalue: cert.k.min_eigenvalue()?,
        admissible,
    })
}

/// Recheck both certificate conditions with fresh eigendecompositions.
pub fn validate_certificate(
    cert: &DualCertificate,
    psi: &EvalMatrix,
    xi: &[Complex64],
    opts: &SolverOptions,
) -> Result<bool> {
    Ok(certificate_report(cert, psi, &target_matrix(xi), opts)?.valid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{canonical_matrix, pick_from_values};
    use crate::testfns::{builtin_family, eval_matrix, example2_points, Point};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use serde_json::json;

    fn disk_nodes(zs: &[Complex64]) -> NodeSet {
        NodeSet::scalars(zs).unwrap()
    }

    fn random_disk(rng: &mut ChaCha8Rng, r: f64) -> Complex64 {
        Complex64::from_polar(
            r * rng.gen::<f64>().sqrt(),
            rng.gen::<f64>() * std::f64::consts::TAU,
        )
    }

    fn bidisk_nodes(rng: &mut ChaCha8Rng, k: usize) -> NodeSet {
        NodeSet::new(
            (0..k)
                .map(|_| Point(vec![random_disk(rng, 0.9), random_disk(rng, 0.9)]))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn real_index_covers_every_row_once() {
        for n in 1..6 {
            let mut seen = vec![false; n * n];
            for x in 0..n {
                for y in x..n {
                    let (a, b) = real_index(n, x, y);
                    assert!(!seen[a]);
                    seen[a] = true;
                    if let Some(b) = b {
                        assert!(!seen[b]);
                        seen[b] = true;
                    }
                }
            }
            assert!(seen.into_iter().all(|s| s));
        }
    }

    #[test]
    fn factor_jacobian_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let fam = builtin_family("disk", &json!({})).unwrap();
        let nodes = disk_nodes(&[
            random_disk(&mut rng, 0.9),
            random_disk(&mut rng, 0.9),
            random_disk(&mut rng, 0.9),
        ]);
        let evals = eval_matrix(&fam, &nodes).unwrap();
        let m = HermitianMatrix::identity(3);
        let opts = SolverOptions::default();
        let labels = vec!["z".to_string()];
        let solver = Solver::new(&m, &evals, &labels, &opts).unwrap();
        let a = &solver.amats[0];
        let h = CMatrix::from_fn(3, 2, |_, _| {
            c(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)
        });
        let f = |h: &CMatrix| herm_to_real(&a.component_mul(&(h * h.adjoint())));
        let jac = solver.factor_jacobian(a, &h);
        let step = 1e-6;
        for k in 0..2 {
            for p in 0..3 {
                for (which, dir) in [(0, c(1.0, 0.0)), (1, c(0.0, 1.0))] {
                    let mut hp = h.clone();
                    hp[(p, k)] += dir * step;
                    let mut hm = h.clone();
                    hm[(p, k)] -= dir * step;
                    let fd = (f(&hp) - f(&hm)) / (2.0 * step);
                    let col = jac.column(2 * (k * 3 + p) + which);
                    assert!((fd - col).norm() < 1e-7, "p={p} k={k} which={which}");
                }
            }
        }
    }

    #[test]
    fn positive_targets_are_feasible() {
        let fam = builtin_family("example1", &json!({"n_max": 5})).unwrap();
        let nodes = disk_nodes(&[c(0.1, 0.2), c(-0.4, 0.0), c(0.5, -0.5)]);
        let m = HermitianMatrix::from_real_rows(&[
            &[2.0, 0.5, 0.1],
            &[0.5, 1.0, 0.2],
            &[0.1, 0.2, 3.0],
        ])
        .unwrap();
        let out = cone_membership(&m, &fam, &nodes, &SolverOptions::default()).unwrap();
        let Verdict::Feasible(dec) = &out.verdict else {
            panic!("{:?}", out.diagnostics)
        };
        let rep = validate_decomposition_against(dec, &m, out.diagnostics.feas_tol).unwrap();
        assert!(rep.valid);
        assert!(matches!(out.diagnostics.route, Route::SingleMember(_)));
    }

    #[test]
    fn member_defect_gives_one_term() {
        let fam = builtin_family("example1", &json!({"n_max": 4})).unwrap();
        let nodes = disk_nodes(&[c(0.1, 0.2), c(-0.4, 0.0), c(0.5, -0.5)]);
        let evals = eval_matrix(&fam, &nodes).unwrap();
        let xi = evals.member_row(2);
        let out = solve_interpolation(&xi, &fam, &nodes, &SolverOptions::default()).unwrap();
        let Verdict::Feasible(dec) = &out.verdict else {
            panic!()
        };
        assert_eq!(out.diagnostics.route, Route::SingleMember(2));
        for (j, g) in dec.gammas.iter().enumerate() {
            let expect = if j == 2 { 1.0 } else { 0.0 };
            for v in g.as_matrix().iter() {
                assert!((v - c(expect, 0.0)).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn example2_indefinite_target_is_infeasible() {
        let fam = builtin_family("example2", &json!({})).unwrap();
        let nodes = NodeSet::new(example2_points()).unwrap();
        let m = HermitianMatrix::from_real_rows(&[&[1.0, 1.0], &[1.0, -1.0]]).unwrap();
        let opts = SolverOptions::default();
        let out = cone_membership(&m, &fam, &nodes, &opts).unwrap();
        let Verdict::Infeasible(cert) = &out.verdict else {
            panic!()
        };
        assert_eq!(out.diagnostics.route, Route::Structural);
        let evals = eval_matrix_unchecked(&fam, &nodes).unwrap();
        assert!(certificate_report(cert, &evals, &m, &opts).unwrap().valid);
    }

    #[test]
    fn bidisk_hand_decomposition_validates() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let nodes = bidisk_nodes(&mut rng, 4);
        let fam = builtin_family("polydisk", &json!({"d": 2})).unwrap();
        let evals = eval_matrix(&fam, &nodes).unwrap();
        let pts = nodes.points();
        let xi: Vec<Complex64> = pts.iter().map(|p| p.0[0] * p.0[1]).collect();
        let g1 = HermitianMatrix::from_fn(4, |_, _| c(1.0, 0.0)).unwrap();
        let g2 = HermitianMatrix::from_fn(4, |x, y| pts[x].0[0] * pts[y].0[0].conj()).unwrap();
        let dec =
            AglerDecomposition::new(evals.values.clone(), fam.labels().to_vec(), vec![g1, g2])
                .unwrap();
        let rep = validate_decomposition(&dec, &xi, 1e-12).unwrap();
        assert!(rep.valid && rep.residual <= 1e-12, "{rep:?}");

        let out = solve_interpolation(&xi, &fam, &nodes, &SolverOptions::default()).unwrap();
        let Verdict::Feasible(found) = &out.verdict else {
            panic!("{:?}", out.diagnostics)
        };
        assert!(
            validate_decomposition(found, &xi, out.diagnostics.feas_tol)
                .unwrap()
                .valid
        );
    }

    #[test]
    fn perturbed_block_is_flagged() {
        let fam = builtin_family("disk", &json!({})).unwrap();
        let nodes = disk_nodes(&[c(0.1, 0.0), c(0.5, 0.3)]);
        let evals = eval_matrix(&fam, &nodes).unwrap();
        let xi = evals.member_row(0);
        let g = HermitianMatrix::from_fn(2, |_, _| c(1.0, 0.0)).unwrap();
        let eig = g.eigen().unwrap();
        let v = eig.vectors.column(0).into_owned();
        let bad = HermitianMatrix::new(g.as_matrix() - (&v * v.adjoint()) * c(1e-3, 0.0)).unwrap();
        let dec =
            AglerDecomposition::new(evals.values.clone(), vec!["z".into()], vec![bad]).unwrap();
        let rep = validate_decomposition(&dec, &xi, 1.0).unwrap();
        assert_eq!(rep.psd_violations, vec![0]);
        assert!(!rep.valid);
    }

    #[test]
    fn schwarz_pick_violation_gets_szego_certificate() {
        let fam = builtin_family("disk", &json!({})).unwrap();
        let zs = [c(0.0, 0.0), c(0.5, 0.0)];
        let nodes = disk_nodes(&zs);
        let xi = [c(0.0, 0.0), c(0.9, 0.0)];
        let opts = SolverOptions::default();
        let out = solve_interpolation(&xi, &fam, &nodes, &opts).unwrap();
        let Verdict::Infeasible(cert) = &out.verdict else {
            panic!()
        };
        let szego = canonical_matrix(&zs).unwrap();
        assert!((cert.k.as_matrix() - szego.as_matrix()).norm() < 1e-14);
        let evals = eval_matrix(&fam, &nodes).unwrap();
        assert!(validate_certificate(cert, &evals, &xi, &opts).unwrap());
    }

    #[test]
    fn trivial_kernels_do_not_certify() {
        let fam = builtin_family("disk", &json!({})).unwrap();
        let nodes = disk_nodes(&[c(0.0, 0.0), c(0.5, 0.0)]);
        let evals = eval_matrix(&fam, &nodes).unwrap();
        let xi = [c(0.0, 0.0), c(0.9, 0.0)];
        let opts = SolverOptions::default();
        let zero = DualCertificate {
            k: HermitianMatrix::zeros(2),
            member_min_eigenvalues: vec![],
            target_min_eigenvalue: 0.0,
        };
        assert!(!validate_certificate(&zero, &evals, &xi, &opts).unwrap());
        let toeplitz = DualCertificate {
            k: HermitianMatrix::identity(2),
            ..zero
        };
        assert!(!validate_certificate(&toeplitz, &evals, &xi, &opts).unwrap());
    }

    #[test]
    fn rejects_bad_input() {
        let fam = builtin_family("disk", &json!({})).unwrap();
        let nodes = disk_nodes(&[c(0.0, 0.0)]);
        assert!(matches!(
            solve_interpolation(&[c(1.0, 0.0)], &fam, &nodes, &SolverOptions::default()),
            Err(AglerError::TargetOnBoundary { .. })
        ));
        let empty = fam.filter(|_| false);
        assert!(matches!(
            solve_interpolation(&[c(0.1, 0.0)], &empty, &nodes, &SolverOptions::default()),
            Err(AglerError::EmptyFamily)
        ));
    }

    #[test]
    fn agrees_with_classical_pick_on_the_disk() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let fam = builtin_family("disk", &json!({})).unwrap();
        let opts = SolverOptions::default();
        for trial in 0..200 {
            let k = 2 + trial % 2;
            let zs: Vec<Complex64> = (0..k).map(|_| random_disk(&mut rng, 0.95)).collect();
            let xi: Vec<Complex64> = (0..k).map(|_| random_disk(&mut rng, 0.95)).collect();
            let nodes = disk_nodes(&zs);
            let lam = pick_from_values(&xi, &canonical_matrix(&zs).unwrap())
                .min_eigenvalue()
                .unwrap();
            let out = solve_interpolation(&xi, &fam, &nodes, &opts).unwrap();
            if lam.abs() < 1e-6 {
                continue;
            }
            assert_eq!(
                out.verdict.is_feasible(),
                lam > 0.0,
                "trial {trial}: λ = {lam}"
            );
            assert_eq!(
                out.verdict.is_infeasible(),
                lam < 0.0,
                "trial {trial}: λ = {lam}"
            );
        }
    }

    #[test]
    fn iterative_path_finds_interior_bidisk_solution() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let fam = builtin_family("polydisk", &json!({"d": 2})).unwrap();
        for _ in 0..10 {
            let nodes = bidisk_nodes(&mut rng, 4);
            let xi: Vec<Complex64> = nodes
                .points()
                .iter()
                .map(|p| 0.8 * p.0[0] * p.0[1])
                .collect();
            let out = solve_interpolation(&xi, &fam, &nodes, &SolverOptions::default()).unwrap();
            let Verdict::Feasible(dec) = &out.verdict else {
                panic!("{:?}", out.diagnostics)
            };
            let rep = validate_decomposition(dec, &xi, out.diagnostics.feas_tol).unwrap();
            assert!(rep.valid, "{rep:?}");
        }
    }

    #[test]
    fn iterative_path_certifies_bidisk_violations() {
        // ξ = 0 at one node and large elsewhere violates the Pick condition of
        // each coordinate simultaneously.
        let fam = builtin_family("polydisk", &json!({"d": 2})).unwrap();
        let nodes = NodeSet::new(vec![
            Point(vec![c(0.0, 0.0), c(0.0, 0.0)]),
            Point(vec![c(0.2, 0.0), c(0.1, 0.1)]),
        ])
        .unwrap();
        let xi = [c(0.0, 0.0), c(0.9, 0.0)];
        let opts = SolverOptions::default();
        let out = solve_interpolation(&xi, &fam, &nodes, &opts).unwrap();
        let Verdict::Infeasible(cert) = &out.verdict else {
            panic!("{:?}", out.diagnostics)
        };
        let evals = eval_matrix(&fam, &nodes).unwrap();
        assert!(validate_certificate(cert, &evals, &xi, &opts).unwrap());
    }

    #[test]
    fn diagonal_scaling_preserves_verdict() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let fam = builtin_family("polydisk", &json!({"d": 2})).unwrap();
        let opts = SolverOptions::default();
        for _ in 0..10 {
            let nodes = bidisk_nodes(&mut rng, 3);
            let xi: Vec<Complex64> = nodes
                .points()
                .iter()
                .map(|p| 0.9 * p.0[0] * p.0[1])
                .collect();
            let m = target_matrix(&xi);
            let d: Vec<Complex64> = (0..3)
                .map(|_| Complex64::from_polar(0.5 + rng.gen::<f64>(), rng.gen::<f64>() * 6.0))
                .collect();
            let scaled = m.conjugate_by_diagonal(&d).unwrap();
            let a = cone_membership(&m, &fam, &nodes, &opts).unwrap();
            let b = cone_membership(&scaled, &fam, &nodes, &opts).unwrap();
            assert!(a.verdict.is_feasible() && b.verdict.is_feasible());
        }
    }

    #[test]
    fn every_engine_agrees_on_clear_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let fam = builtin_family("polydisk", &json!({"d": 2})).unwrap();
        let nodes = bidisk_nodes(&mut rng, 4);
        let evals = eval_matrix(&fam, &nodes).unwrap();
        let inside: Vec<Complex64> = nodes
            .points()
            .iter()
            .map(|p| 0.7 * p.0[0] * p.0[1])
            .collect();
        let bad = NodeSet::new(vec![
            Point(vec![c(0.0, 0.0), c(0.0, 0.0)]),
            Point(vec![c(0.2, 0.0), c(0.1, 0.1)]),
        ])
        .unwrap();
        let bad_xi = [c(0.0, 0.0), c(0.9, 0.0)];
        for engine in [
            Engine::Dykstra,
            Engine::Accelerated,
            Engine::ColumnGeneration,
        ] {
            let opts = SolverOptions {
                engine,
                shortcuts: false,
                ..SolverOptions::default()
            };
            let out = solve_interpolation(&inside, &fam, &nodes, &opts).unwrap();
            let Verdict::Feasible(dec) = &out.verdict else {
                panic!("{engine:?}: {:?}", out.diagnostics)
            };
            assert!(
                validate_decomposition(dec, &inside, out.diagnostics.feas_tol)
                    .unwrap()
                    .valid
            );
            let out = solve_interpolation(&bad_xi, &fam, &bad, &opts).unwrap();
            let Verdict::Infeasible(cert) = &out.verdict else {
                panic!("{engine:?}: {:?}", out.diagnostics)
            };
            let bad_evals = eval_matrix(&fam, &bad).unwrap();
            assert!(validate_certificate(cert, &bad_evals, &bad_xi, &opts).unwrap());
        }
        let _ = evals;
    }

    #[test]
    fn projection_of_a_cone_member_is_itself() {
        let fam = builtin_family("example1", &json!({"n_max": 3})).unwrap();
        let nodes = disk_nodes(&[c(0.1, 0.2), c(-0.4, 0.0)]);
        let evals = eval_matrix(&fam, &nodes).unwrap();
        let m = target_matrix(&evals.member_row(2));
        let p = project_onto_cone(&m, &evals, &SolverOptions::default()).unwrap();
        assert!(p.residual < 1e-9, "{}", p.residual);
        let outside = target_matrix(&[c(0.1, 0.2), c(-0.4, 0.0)]);
        let p = project_onto_cone(&outside, &evals, &SolverOptions::default()).unwrap();
        assert!(p.residual > 1e-3);
        assert!((p.mean_member_index() - 3.0).abs() < 1e-6);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]
        #[test]
        fn verdicts_are_never_contradictory(seed in 0u64..10_000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let fam = builtin_family("polydisk", &json!({"d": 2})).unwrap();
            let nodes = bidisk_nodes(&mut rng, 3);
            let xi: Vec<Complex64> = (0..3).map(|_| random_disk(&mut rng, 0.9)).collect();
            let mut opts = SolverOptions::default();
            opts.max_iters = 3_000;
            opts.dual_refine_iters = 200;
            let out = solve_interpolation(&xi, &fam, &nodes, &opts).unwrap();
            let evals = eval_matrix(&fam, &nodes).unwrap();
            match &out.verdict {
                Verdict::Feasible(dec) => {
                    prop_assert!(validate_decomposition(dec, &xi, out.diagnostics.feas_tol).unwrap().valid);
                    // Every admissible kernel must then give a positive Pick matrix.
                    for j in 0..2 {
                        let s = canonical_matrix(&evals.member_row(j)).unwrap();
                        let k = DualCertificate { k: s, member_min_eigenvalues: vec![], target_min_eigenvalue: 0.0 };
                        prop_assert!(!validate_certificate(&k, &evals, &xi, &opts).unwrap());
                    }
                }
                Verdict::Infeasible(cert) => {
                    prop_assert!(validate_certificate(cert, &evals, &xi, &opts).unwrap());
                }
                Verdict::Undecided => {}
            }
        }
    }
}
