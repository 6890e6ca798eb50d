//! Named, assertable experiments: the counterexample families, annulus
//! minimality and coarsening of annulus colligations.
//!
//! Every demo returns a [`DemoReport`] whose checks are evaluated when the
//! report is built. Demos are deterministic; the only randomness is seeded.

use std::fmt::Write as _;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::agler::{
    cone_membership, project_onto_cone, solve_interpolation, target_matrix, validate_decomposition,
    AglerError, SolveOutcome, SolverOptions, Verdict,
};
use crate::annulus::{hardy_gram, AnnulusError, AnnulusParams};
use crate::kernels::{defect_matrix, pick_from_values};
use crate::numerics::{c, CMatrix, HermitianMatrix, NumericsError};
use crate::realize::{coarsening_report, Block, Colligation, Partition, RealizeError};
use crate::testfns::{
    eval_matrix, eval_matrix_unchecked, example2_points, FamilySpec, NodeSet, Point, TestFnError,
};

#[derive(Debug, Error)]
pub enum LabError {
    #[error("invalid demo parameters: {0}")]
    Params(String),
    #[error(transparent)]
    Agler(#[from] AglerError),
    #[error(transparent)]
    TestFn(#[from] TestFnError),
    #[error(transparent)]
    Annulus(#[from] AnnulusError),
    #[error(transparent)]
    Realize(#[from] RealizeError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Kernel(#[from] crate::kernels::KernelError),
}

pub type Result<T> = std::result::Result<T, LabError>;

#[derive(Clone, Debug, Serialize)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    fn new(name: &str, columns: &[&str]) -> Self {
        Self {
            name: name.into(),
            columns: columns.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let k = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[k]).collect())
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.columns).expect("in-memory write");
        for row in &self.rows {
            w.write_record(row.iter().map(|v| format!("{v:e}")))
                .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("ascii output")
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct DemoReport {
    pub name: String,
    pub parameters: Vec<(String, String)>,
    pub verdicts: Vec<(String, String)>,
    pub tables: Vec<Table>,
    pub checks: Vec<Check>,
}

impl DemoReport {
    fn new(name: &str) -> Self {
        Self {
            name: name.into(),
            parameters: Vec::new(),
            verdicts: Vec::new(),
            tables: Vec::new(),
            checks: Vec::new(),
        }
    }

    fn param(&mut self, key: &str, value: impl std::fmt::Display) {
        self.parameters.push((key.into(), value.to_string()));
    }

    fn verdict(&mut self, run: String, outcome: &SolveOutcome) {
        self.verdicts.push((
            run,
            format!(
                "{} (route {:?}, residual {:.3e})",
                outcome.verdict.name(),
                outcome.diagnostics.route,
                outcome.diagnostics.best_residual
            ),
        ));
    }

    fn check(&mut self, name: &str, passed: bool, detail: String) {
        self.checks.push(Check {
            name: name.into(),
            passed,
            detail,
        });
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check_named(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "demo: {}", self.name).unwrap();
        writeln!(out, "parameters:").unwrap();
        for (k, v) in &self.parameters {
            writeln!(out, "  {k} = {v}").unwrap();
        }
        writeln!(out, "verdicts:").unwrap();
        for (k, v) in &self.verdicts {
            writeln!(out, "  {k}: {v}").unwrap();
        }
        for t in &self.tables {
            writeln!(out, "table {}:", t.name).unwrap();
            writeln!(out, "  {}", t.columns.join("  ")).unwrap();
            for row in &t.rows {
                let cells: Vec<String> = row.iter().map(|v| format!("{v:.6e}")).collect();
                writeln!(out, "  {}", cells.join("  ")).unwrap();
            }
        }
        writeln!(out, "checks:").unwrap();
        for ch in &self.checks {
            let mark = if ch.passed { "pass" } else { "FAIL" };
            writeln!(out, "  [{mark}] {}: {}", ch.name, ch.detail).unwrap();
        }
        writeln!(
            out,
            "result: {}",
            if self.passed() { "PASS" } else { "FAIL" }
        )
        .unwrap();
        out
    }
}

fn list<T: std::fmt::Display>(v: &[T]) -> String {
    let items: Vec<String> = v.iter().map(T::to_string).collect();
    format!("[{}]", items.join(", "))
}

fn sci_list(v: &[f64]) -> String {
    let items: Vec<String> = v.iter().map(|x| format!("{x:.3e}")).collect();
    format!("[{}]", items.join(", "))
}

/// `−λ_min(M∘K)` of a certificate, else the best margin seen by the solver.
fn dual_margin(outcome: &SolveOutcome) -> f64 {
    match &outcome.verdict {
        Verdict::Infeasible(cert) => -cert.target_min_eigenvalue,
        _ => outcome.diagnostics.best_dual_margin.unwrap_or(0.0),
    }
}

fn verdict_code(v: &Verdict) -> f64 {
    match v {
        Verdict::Feasible(_) => 0.0,
        Verdict::Infeasible(_) => 1.0,
        Verdict::Undecided => 2.0,
    }
}

/// Disk nodes shared by the single-variable demos.
pub fn example1_nodes() -> Vec<Complex64> {
    vec![c(0.3, 0.0), c(-0.2, 0.4), c(0.1, -0.5)]
}

/// `ξ(z) = z` against `ψ_n = √(1−1/n)·z`, `n ≤ n_max`.
///
/// The mass diagnostic is the trace-weighted mean member index of the
/// nearest point of the cone to `1 − ξξ*`: it measures how far out along the
/// family the best approximate decomposition must place its mass.
pub fn demo_example1(n_max_list: &[usize], opts: &SolverOptions) -> Result<DemoReport> {
    if n_max_list.is_empty() || n_max_list.iter().any(|&n| n < 2) {
        return Err(LabError::Params("every n_max must be at least 2".into()));
    }
    let mut rep = DemoReport::new("example1");
    rep.param("n_max", list(n_max_list));
    let zs = example1_nodes();
    rep.param("nodes", list(&zs));
    let nodes = NodeSet::scalars(&zs)?;
    let xi = zs.clone();
    let m = target_matrix(&xi);
    let mut table = Table::new(
        "mass",
        &[
            "n_max",
            "verdict",
            "mean_member_index",
            "total_mass",
            "projection_residual",
        ],
    );
    let mut all_blocked = true;
    for &n in n_max_list {
        let fam = FamilySpec::Example1 { n_max: n }.build()?;
        let out = solve_interpolation(&xi, &fam, &nodes, opts)?;
        all_blocked &= !out.verdict.is_feasible();
        rep.verdict(format!("xi = z, n_max = {n}"), &out);
        let proj = project_onto_cone(&m, &eval_matrix(&fam, &nodes)?, opts)?;
        table.rows.push(vec![
            n as f64,
            verdict_code(&out.verdict),
            proj.mean_member_index(),
            proj.total_mass(),
            proj.residual,
        ]);

        let member = fam.members().len() - 1;
        let target: Vec<Complex64> = zs
            .iter()
            .map(|z| fam.eval(member, &Point::scalar(*z)))
            .collect::<std::result::Result<_, _>>()?;
        let top = solve_interpolation(&target, &fam, &nodes, opts)?;
        rep.check(
            &format!("top member target feasible at n_max={n}"),
            top.verdict.is_feasible(),
            top.verdict.name().into(),
        );
    }
    let index = table.column("mean_member_index").expect("column exists");
    let total = table.column("total_mass").expect("column exists");
    let increasing = index.windows(2).all(|w| w[1] > w[0]);
    rep.check(
        "mass diagnostic strictly increasing",
        increasing,
        format!("mean member index {}", sci_list(&index)),
    );
    let first = n_max_list[0] as f64;
    let linear = n_max_list
        .iter()
        .zip(&total)
        .all(|(&n, &t)| t / total[0] >= n as f64 / first);
    rep.check(
        "no decomposition at any cutoff (or mass grows linearly)",
        all_blocked || linear,
        format!(
            "verdicts never feasible: {all_blocked}; total mass {}",
            sci_list(&total)
        ),
    );
    rep.tables.push(table);

    let n = *n_max_list.last().expect("non-empty");
    let fam = FamilySpec::Example1Compactified { n_max: n }.build()?;
    let out = solve_interpolation(&xi, &fam, &nodes, opts)?;
    rep.verdict(format!("xi = z, compactified n_max = {n}"), &out);
    match &out.verdict {
        Verdict::Feasible(dec) => {
            let valid = validate_decomposition(dec, &xi, 1e-10)?;
            rep.check(
                "compactified family feasible with residual <= 1e-10",
                valid.valid,
                format!("residual {:.3e}", valid.residual),
            );
            let last = dec.gammas.len() - 1;
            let ones = dec.gammas[last]
                .as_matrix()
                .iter()
                .all(|v| (v - c(1.0, 0.0)).norm() <= 1e-10);
            let others: f64 = dec.weights[..last].iter().sum();
            rep.check(
                "limit member carries the all-ones block",
                ones && others <= 1e-10,
                format!("mass on finite members {others:.3e}"),
            );
        }
        v => rep.check(
            "compactified family feasible with residual <= 1e-10",
            false,
            v.name().into(),
        ),
    }
    Ok(rep)
}

/// The two-point space with `ψ(x₁) = 0`, `ψ(x₂) = 1`.
pub fn demo_example2(seed: u64, opts: &SolverOptions) -> Result<DemoReport> {
    let mut rep = DemoReport::new("example2");
    rep.param("seed", seed);
    let fam = FamilySpec::Example2.build()?;
    let nodes = NodeSet::new(example2_points())?;
    let psi = eval_matrix_unchecked(&fam, &nodes)?.member_row(0);
    let a = defect_matrix(&psi);
    let tilde: Vec<Complex64> = psi.iter().map(|p| c(1.0, 0.0) - p).collect();
    let m_exact = target_matrix(&tilde);

    // Every cone member Γ∘A has (x₂,x₂) entry Γ(x₂,x₂)·A(x₂,x₂) = 0.
    let a22 = a.get(1, 1);
    let m22 = m_exact.get(1, 1);
    rep.check(
        "structural witness",
        a22 == c(0.0, 0.0) && m22 == c(1.0, 0.0),
        format!("A(x2,x2) = {a22}, M(x2,x2) = {m22}"),
    );

    let scale = 1.0 - 1e-9;
    rep.param("target scale", scale);
    let scaled: Vec<Complex64> = tilde.iter().map(|v| v * scale).collect();
    let out = solve_interpolation(&scaled, &fam, &nodes, opts)?;
    rep.verdict("xi = (1 - psi) scaled".into(), &out);
    rep.check(
        "scaled target infeasible",
        out.verdict.is_infeasible(),
        format!("route {:?}", out.diagnostics.route),
    );

    let own = cone_membership(&a, &fam, &nodes, opts)?;
    rep.verdict("M = 1 - psi psi*".into(), &own);
    rep.check(
        "target psi feasible",
        own.verdict.is_feasible(),
        own.verdict.name().into(),
    );

    // Random PSD probes, with the off-diagonal damped by a cycling factor
    // so that admissible kernels actually occur.
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let damping = [1.0, 1e-3, 1e-6, 0.0];
    let mut admissible = 0;
    let mut worst = 0.0_f64;
    let mut table = Table::new("probes", &["damping", "offdiag", "admissible"]);
    for k in 0..100 {
        let g = CMatrix::from_fn(2, 2, |_, _| {
            c(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)
        });
        let mut kmat = &g * g.adjoint();
        let d = damping[k % damping.len()];
        kmat[(0, 1)] *= d;
        kmat[(1, 0)] *= d;
        let kh = HermitianMatrix::new(kmat)?;
        let norm = kh.spectral_norm()?;
        let ak = a.hadamard(&kh)?;
        let ok = ak.min_eigenvalue()? >= -opts.psd_tol * norm.max(1.0);
        let off = kh.get(0, 1).norm();
        if ok {
            admissible += 1;
            worst = worst.max(off / norm.max(1.0));
        }
        table.rows.push(vec![d, off, if ok { 1.0 } else { 0.0 }]);
    }
    let tol = opts.psd_tol.sqrt();
    rep.check(
        "admissible kernels vanish off the diagonal",
        admissible > 0 && worst <= tol,
        format!("{admissible} admissible probes, max |K(x1,x2)|/|K| = {worst:.3e} (tol {tol:.1e})"),
    );
    rep.tables.push(table);
    Ok(rep)
}

/// `z(n) = √(½(1 − 1/(n+1)))`.
pub fn polydisk_node(n: usize) -> f64 {
    (0.5 * (1.0 - 1.0 / (n as f64 + 1.0))).sqrt()
}

/// Nodes `{z, 0}` truncated to `cutoff` coordinates, with the limit value
/// `√½` in the extra final coordinate.
pub fn infinite_polydisk_nodes(cutoff: usize) -> Result<NodeSet> {
    let mut z: Vec<Complex64> = (1..=cutoff).map(|n| c(polydisk_node(n), 0.0)).collect();
    z.push(c(0.5f64.sqrt(), 0.0));
    let zero = vec![c(0.0, 0.0); cutoff + 1];
    Ok(NodeSet::new(vec![Point(z), Point(zero)])?)
}

pub fn demo_infinite_polydisk(cutoffs: &[usize], opts: &SolverOptions) -> Result<DemoReport> {
    if cutoffs.is_empty() || cutoffs.iter().any(|&n| n < 2) {
        return Err(LabError::Params("every cutoff must be at least 2".into()));
    }
    let mut rep = DemoReport::new("infinite-polydisk");
    rep.param("cutoffs", list(cutoffs));
    let xi = vec![c(0.5f64.sqrt(), 0.0), c(0.0, 0.0)];
    rep.param("target", list(&xi));
    let mut table = Table::new(
        "contradiction",
        &[
            "cutoff",
            "verdict",
            "dual_margin",
            "mass_upper_bound",
            "contradiction_gap",
        ],
    );
    for &n in cutoffs {
        let nodes = infinite_polydisk_nodes(n)?;
        let fam = FamilySpec::InfinitePolydisk {
            cutoff: n,
            limit_member: false,
        }
        .build()?;
        let out = solve_interpolation(&xi, &fam, &nodes, opts)?;
        rep.verdict(format!("cutoff {n}"), &out);
        // A decomposition would need Σ Γ_n(z,z) ≥ 1 for [[s, 1], [1, 1]] ⪰ 0,
        // while 1 − |ξ(z)|² = Σ Γ_n(z,z)(1 − z(n)²) caps s below 1.
        let zmax = (1..=n).map(polydisk_node).fold(0.0, f64::max);
        let upper = (1.0 - xi[0].norm_sqr()) / (1.0 - zmax * zmax);
        table.rows.push(vec![
            n as f64,
            verdict_code(&out.verdict),
            dual_margin(&out),
            upper,
            1.0 - upper,
        ]);
        rep.check(
            &format!("cutoff {n}: no decomposition"),
            !out.verdict.is_feasible() || out.diagnostics.mass_exceeded,
            format!("{}, margin {:.3e}", out.verdict.name(), dual_margin(&out)),
        );
        rep.check(
            &format!("cutoff {n}: 2x2 contradiction"),
            upper < 1.0,
            format!("sum of diagonal masses at z is at most {upper:.6} < 1"),
        );

        let with_limit = FamilySpec::InfinitePolydisk {
            cutoff: n,
            limit_member: true,
        }
        .build()?;
        let out = solve_interpolation(&xi, &with_limit, &nodes, opts)?;
        rep.verdict(format!("cutoff {n} with limit member"), &out);
        let detail;
        let ok = match &out.verdict {
            Verdict::Feasible(dec) => {
                let v = validate_decomposition(dec, &xi, 1e-10)?;
                detail = format!("residual {:.3e}", v.residual);
                v.valid
            }
            v => {
                detail = v.name().into();
                false
            }
        };
        rep.check(&format!("cutoff {n}: limit member feasible"), ok, detail);

        let e1: Vec<Complex64> = nodes.points().iter().map(|p| p.0[0]).collect();
        let out = solve_interpolation(&e1, &fam, &nodes, opts)?;
        rep.check(
            &format!("cutoff {n}: target e_1 feasible"),
            out.verdict.is_feasible(),
            out.verdict.name().into(),
        );
    }
    rep.tables.push(table);
    Ok(rep)
}

#[derive(Clone, Debug)]
pub struct AnnulusDemoParams {
    pub q: f64,
    pub b: Complex64,
    /// Grid index of `t₀`.
    pub t0: usize,
    pub m: usize,
    /// Hole radii in grid steps; members at circular distance below the
    /// radius from `t₀` are removed.
    pub holes: Vec<usize>,
    pub nodes: Vec<Complex64>,
}

impl Default for AnnulusDemoParams {
    fn default() -> Self {
        Self {
            q: 0.3,
            b: c(0.5, 0.0),
            t0: 0,
            m: 64,
            holes: vec![0, 1, 2, 4, 8],
            nodes: vec![c(0.6, 0.1), c(-0.5, 0.4), c(0.1, -0.7)],
        }
    }
}

fn grid_distance(j: usize, k: usize, m: usize) -> usize {
    let d = j.abs_diff(k);
    d.min(m - d)
}

/// Rank of the Pick matrix of `ϑ_{t₀}` against the Hardy kernel: number of
/// eigenvalues above `1e-8` times the largest.
pub fn pick_rank(values: &[Complex64], gram: &HermitianMatrix) -> Result<(usize, Vec<f64>)> {
    let eig = pick_from_values(values, gram).eigenvalues()?;
    let top = eig.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    Ok((eig.iter().filter(|&&v| v > 1e-8 * top).count(), eig))
}

pub fn demo_annulus_minimality(p: &AnnulusDemoParams, opts: &SolverOptions) -> Result<DemoReport> {
    if p.t0 >= p.m {
        return Err(LabError::Params(format!(
            "t0 index {} is not on the {}-point grid",
            p.t0, p.m
        )));
    }
    let mut rep = DemoReport::new("annulus-minimality");
    rep.param("q", p.q);
    rep.param("b", p.b);
    rep.param("t0 index", p.t0);
    rep.param("grid", p.m);
    rep.param("holes", list(&p.holes));
    rep.param("nodes", list(&p.nodes));
    let params = AnnulusParams::new(p.q, p.b)?;
    let fam = FamilySpec::AnnulusTheta {
        q: p.q,
        b: p.b,
        m: p.m,
        truncation: None,
    }
    .build()?;
    let nodes = NodeSet::scalars(&p.nodes)?;
    let evals = eval_matrix(&fam, &nodes)?;
    let xi = evals.member_row(p.t0);

    let (rank, eig) = pick_rank(&xi, &hardy_gram(&p.nodes, &params)?)?;
    rep.check(
        "Hardy Pick matrix has rank two",
        rank == 2,
        format!("eigenvalues {}", sci_list(&eig)),
    );

    let full = solve_interpolation(&xi, &fam, &nodes, opts)?;
    rep.verdict("full grid".into(), &full);
    rep.check(
        "full grid feasible",
        full.verdict.is_feasible(),
        full.verdict.name().into(),
    );

    let mut table = Table::new("margin", &["hole", "members", "verdict", "dual_margin"]);
    for &h in &p.holes {
        let sub = fam.filter(|j| grid_distance(j, p.t0, p.m) >= h);
        let out = solve_interpolation(&xi, &sub, &nodes, opts)?;
        rep.verdict(format!("hole {h}"), &out);
        table.rows.push(vec![
            h as f64,
            sub.len() as f64,
            verdict_code(&out.verdict),
            dual_margin(&out),
        ]);
        if h == 0 {
            rep.check(
                "hole 0 feasible",
                out.verdict.is_feasible(),
                out.verdict.name().into(),
            );
        } else {
            rep.check(
                &format!("hole {h}: not feasible"),
                !out.verdict.is_feasible(),
                format!("{}, margin {:.3e}", out.verdict.name(), dual_margin(&out)),
            );
        }
    }
    rep.tables.push(table);
    Ok(rep)
}

#[derive(Clone, Debug)]
pub struct CoarseningDemoParams {
    pub q: f64,
    pub b: Complex64,
    pub m: usize,
    pub cells: Vec<usize>,
    pub probes: Vec<Complex64>,
    pub seed: u64,
}

impl Default for CoarseningDemoParams {
    fn default() -> Self {
        Self {
            q: 0.3,
            b: c(0.5, 0.0),
            m: 64,
            cells: vec![8, 16, 32],
            probes: (0..6)
                .map(|k| {
                    Complex64::from_polar(
                        0.3f64.sqrt(),
                        0.3 + k as f64 * std::f64::consts::PI / 3.0,
                    )
                })
                .collect(),
            seed: 0,
        }
    }
}

/// A random colligation with one rank-one block per grid member, coarsened
/// onto contiguous arcs of the grid.
pub fn demo_coarsening(p: &CoarseningDemoParams) -> Result<DemoReport> {
    let mut rep = DemoReport::new("coarsening");
    rep.param("q", p.q);
    rep.param("b", p.b);
    rep.param("grid", p.m);
    rep.param("cells", list(&p.cells));
    rep.param("seed", p.seed);
    let spec = FamilySpec::AnnulusTheta {
        q: p.q,
        b: p.b,
        m: p.m,
        truncation: None,
    };
    let fam = spec.build()?;
    let blocks = (0..p.m)
        .map(|j| Block {
            member: j,
            label: fam.labels()[j].clone(),
            rank: 1,
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let col = Colligation::random(blocks, &mut rng)?.with_family(spec);
    let evals = eval_matrix(&fam, &NodeSet::scalars(&p.probes)?)?;
    let mut table = Table::new(
        "drift",
        &[
            "cells",
            "epsilon",
            "max_drift",
            "max_bound",
            "max_a_priori_bound",
        ],
    );
    for &k in &p.cells {
        let r = coarsening_report(&col, &Partition::contiguous(p.m, k)?, &evals)?;
        let max_bound = r.bound.iter().copied().fold(0.0, f64::max);
        let a_priori = r.a_priori_bound.iter().copied().fold(0.0, f64::max);
        rep.check(
            &format!("{k} cells: drift within bound"),
            r.within_bound(),
            format!(
                "max drift {:.3e}, max bound {:.3e}",
                r.max_drift(),
                max_bound
            ),
        );
        table.rows.push(vec![
            k as f64,
            r.epsilon,
            r.max_drift(),
            max_bound,
            a_priori,
        ]);
    }
    let drift = table.column("max_drift").expect("column exists");
    rep.check(
        "drift decreases under refinement",
        drift.windows(2).all(|w| w[1] < w[0]),
        sci_list(&drift),
    );
    rep.tables.push(table);
    Ok(rep)
}

pub const DEMO_NAMES: [&str; 5] = [
    "example1",
    "example2",
    "infinite-polydisk",
    "annulus-minimality",
    "coarsening",
];

/// Run a demo with its default parameters.
pub fn run_demo(name: &str, seed: u64, opts: &SolverOptions) -> Result<DemoReport> {
    match name {
        "example1" => demo_example1(&[4, 16, 64], opts),
        "example2" => demo_example2(seed, opts),
        "infinite-polydisk" => demo_infinite_polydisk(&[8, 32, 128], opts),
        "annulus-minimality" => demo_annulus_minimality(&AnnulusDemoParams::default(), opts),
        "coarsening" => demo_coarsening(&CoarseningDemoParams {
            seed,
            ..Default::default()
        }),
        other => Err(LabError::Params(format!(
            "unknown demo '{other}' (known: {})",
            DEMO_NAMES.join(", ")
        ))),
    }
}
