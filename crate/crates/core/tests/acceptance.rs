//! Acceptance suite. Prints one pass/fail line per criterion and exits
//! non-zero when any criterion fails.

use std::time::Instant;

use agler::agler::{
    certificate_report, solve_interpolation, target_matrix, validate_decomposition,
    AglerDecomposition, DualCertificate, SolverOptions, Verdict,
};
use agler::annulus::{hardy_gram, make_vartheta, t_grid, AnnulusParams};
use agler::kernels::{canonical_matrix, szego_gram};
use agler::lab::{
    demo_coarsening, demo_example1, demo_example2, demo_infinite_polydisk, pick_rank,
    CoarseningDemoParams,
};
use agler::numerics::{operator_norm, CMatrix, CVector, HermitianMatrix};
use agler::realize::{
    build_colligation, random_unitary, transfer_eval_rep, Block, Colligation, RealizeOptions,
    RepMode, Representation,
};
use agler::testfns::{eval_matrix, FamilySpec, NodeSet, Point, TestFamily};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const PICK_BAND: f64 = 1e-6;
const UNITARITY_TOL: f64 = 1e-10;
const NODE_TOL: f64 = 1e-7;
const CONTRACTION_TOL: f64 = 1e-9;
const VON_NEUMANN_TOL: f64 = 1e-8;
const BOUNDARY_TOL: f64 = 1e-6;
const VALUE_AT_ONE_TOL: f64 = 1e-10;
const ZERO_TOL: f64 = 1e-8;
const COMPACTIFIED_TOL: f64 = 1e-10;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn disk_point(rng: &mut ChaCha8Rng, r: f64) -> Complex64 {
    Complex64::from_polar(
        r * rng.gen::<f64>().sqrt(),
        rng.gen::<f64>() * std::f64::consts::TAU,
    )
}

fn sci(v: &[f64]) -> String {
    let cells: Vec<String> = v.iter().map(|x| format!("{x:.3e}")).collect();
    format!("[{}]", cells.join(", "))
}

struct Outcome {
    name: &'static str,
    passed: bool,
    detail: String,
}

/// A solved instance kept for the realization and duality criteria.
struct Instance {
    family: TestFamily,
    nodes: NodeSet,
    xi: Vec<Complex64>,
    dims: usize,
}

/// Random disk data: half are values of a scaled Möbius map (always
/// interpolable), half are arbitrary points of the disk.
fn disk_instances(rng: &mut ChaCha8Rng, count: usize) -> Vec<Instance> {
    let family = FamilySpec::Disk.build().unwrap();
    (0..count)
        .map(|i| {
            let n = 2 + rng.gen_range(0..2);
            let zs: Vec<Complex64> = (0..n).map(|_| disk_point(rng, 0.95)).collect();
            let xi: Vec<Complex64> = if i % 2 == 0 {
                let a = disk_point(rng, 0.9);
                let r = 0.5 + 0.5 * rng.gen::<f64>();
                let rot = Complex64::from_polar(1.0, rng.gen::<f64>() * std::f64::consts::TAU);
                zs.iter()
                    .map(|z| rot * r * (z - a) / (c(1.0, 0.0) - a.conj() * z))
                    .collect()
            } else {
                (0..n).map(|_| disk_point(rng, 0.95)).collect()
            };
            Instance {
                family: family.clone(),
                nodes: NodeSet::scalars(&zs).unwrap(),
                xi,
                dims: 1,
            }
        })
        .collect()
}

/// `r·W` of a random two-variable colligation at random bidisk nodes.
fn bidisk_instances(rng: &mut ChaCha8Rng, count: usize) -> Vec<Instance> {
    let family = FamilySpec::Polydisk { d: 2 }.build().unwrap();
    (0..count)
        .map(|_| {
            let blocks = vec![
                Block {
                    member: 0,
                    label: "z1".into(),
                    rank: 1 + rng.gen_range(0..2),
                },
                Block {
                    member: 1,
                    label: "z2".into(),
                    rank: 1 + rng.gen_range(0..2),
                },
            ];
            let col = Colligation::random(blocks, rng).unwrap();
            let n = 3 + rng.gen_range(0..2);
            let pts: Vec<Point> = (0..n)
                .map(|_| Point(vec![disk_point(rng, 0.9), disk_point(rng, 0.9)]))
                .collect();
            let r = 0.5 + 0.45 * rng.gen::<f64>();
            let xi = pts
                .iter()
                .map(|p| col.transfer_eval(&family, p).unwrap() * r)
                .collect();
            Instance {
                family: family.clone(),
                nodes: NodeSet::new(pts).unwrap(),
                xi,
                dims: 2,
            }
        })
        .collect()
}

fn szego_pick_min(inst: &Instance) -> f64 {
    let k = szego_gram(&inst.nodes).unwrap();
    agler::kernels::pick_from_values(&inst.xi, k.matrix())
        .min_eigenvalue()
        .unwrap()
}

fn classical_pick_oracle(instances: &[Instance], opts: &SolverOptions) -> Outcome {
    let mut disagreements = 0;
    let mut in_band = 0;
    let mut feasible = 0;
    for inst in instances {
        let lam = szego_pick_min(inst);
        let v = solve_interpolation(&inst.xi, &inst.family, &inst.nodes, opts)
            .unwrap()
            .verdict;
        feasible += v.is_feasible() as usize;
        if lam.abs() < PICK_BAND {
            in_band += 1;
            continue;
        }
        let agrees = if lam > 0.0 {
            v.is_feasible()
        } else {
            v.is_infeasible()
        };
        disagreements += (!agrees) as usize;
    }
    Outcome {
        name: "classical Pick oracle",
        passed: disagreements == 0,
        detail: format!(
            "{} disk instances, {feasible} feasible, {disagreements} disagreements, {in_band} within |lambda_min| < {PICK_BAND:e}",
            instances.len()
        ),
    }
}

fn sample_point(rng: &mut ChaCha8Rng, dims: usize) -> Point {
    Point((0..dims).map(|_| disk_point(rng, 0.999)).collect())
}

fn end_to_end_realization(
    disk: &[Instance],
    bidisk: &[Instance],
    opts: &SolverOptions,
    rng: &mut ChaCha8Rng,
) -> Outcome {
    let mut realized = 0;
    let mut not_feasible = 0;
    let mut worst_unitarity = 0.0_f64;
    let mut worst_node = 0.0_f64;
    let mut worst_modulus = 0.0_f64;
    let mut failures = 0;
    for (k, inst) in disk.iter().chain(bidisk).enumerate() {
        let out = solve_interpolation(&inst.xi, &inst.family, &inst.nodes, opts).unwrap();
        let Verdict::Feasible(dec) = out.verdict else {
            if k >= disk.len() {
                not_feasible += 1;
            }
            continue;
        };
        let col = match build_colligation(&dec, &inst.xi, &RealizeOptions::default()) {
            Ok(col) => col,
            Err(_) => {
                failures += 1;
                continue;
            }
        };
        realized += 1;
        worst_unitarity = worst_unitarity.max(col.unitarity_defect());
        let nodes = col.node_residuals(&dec.psi, &inst.xi).unwrap();
        worst_node = worst_node.max(nodes.into_iter().fold(0.0, f64::max));
        for _ in 0..1000 {
            let p = sample_point(rng, inst.dims);
            worst_modulus = worst_modulus.max(col.transfer_eval(&inst.family, &p).unwrap().norm());
        }
    }
    Outcome {
        name: "end-to-end realization",
        passed: failures == 0
            && not_feasible == 0
            && worst_unitarity <= UNITARITY_TOL
            && worst_node <= NODE_TOL
            && worst_modulus <= 1.0 + CONTRACTION_TOL,
        detail: format!(
            "{realized} colligations ({failures} build failures, {not_feasible} bidisk instances not feasible); \
             max unitarity defect {worst_unitarity:.2e}, max node error {worst_node:.2e}, max |W| {worst_modulus:.12} on 1000 samples each"
        ),
    }
}

fn validates_decomposition(
    dec: &AglerDecomposition,
    xi: &[Complex64],
    opts: &SolverOptions,
) -> bool {
    let tol = opts.feas_tol_for(&target_matrix(xi));
    validate_decomposition(dec, xi, tol).unwrap().valid
}

fn validates_certificate(k: &HermitianMatrix, inst: &Instance, opts: &SolverOptions) -> bool {
    let evals = eval_matrix(&inst.family, &inst.nodes).unwrap();
    let cert = DualCertificate {
        k: k.clone(),
        member_min_eigenvalues: Vec::new(),
        target_min_eigenvalue: f64::NAN,
    };
    certificate_report(&cert, &evals, &target_matrix(&inst.xi), opts)
        .unwrap()
        .valid
}

/// Every decomposition and certificate the solver can produce for an
/// instance (with and without shortcuts), plus each member's canonical
/// kernel, is checked independently.
fn duality_soundness(instances: &[&Instance], opts: &SolverOptions) -> Outcome {
    let no_shortcuts = SolverOptions {
        shortcuts: false,
        ..opts.clone()
    };
    let mut both = 0;
    let mut neither = 0;
    for inst in instances {
        let mut decs = Vec::new();
        let mut certs = Vec::new();
        for o in [opts, &no_shortcuts] {
            match solve_interpolation(&inst.xi, &inst.family, &inst.nodes, o)
                .unwrap()
                .verdict
            {
                Verdict::Feasible(d) => decs.push(d),
                Verdict::Infeasible(cert) => certs.push(cert.k),
                Verdict::Undecided => {}
            }
        }
        let evals = eval_matrix(&inst.family, &inst.nodes).unwrap();
        for j in 0..evals.members() {
            certs.push(canonical_matrix(&evals.member_row(j)).unwrap());
        }
        let dec_ok = decs
            .iter()
            .any(|d| validates_decomposition(d, &inst.xi, opts));
        let cert_ok = certs.iter().any(|k| validates_certificate(k, inst, opts));
        both += (dec_ok && cert_ok) as usize;
        neither += (!dec_ok && !cert_ok) as usize;
    }
    Outcome {
        name: "duality soundness",
        passed: both == 0,
        detail: format!(
            "{} instances, {both} with both a valid decomposition and a valid certificate, {neither} with neither",
            instances.len()
        ),
    }
}

fn commuting_pair(rng: &mut ChaCha8Rng, kind: usize) -> (CMatrix, CMatrix) {
    let h = 2 + rng.gen_range(0..4);
    let diag = |rng: &mut ChaCha8Rng| {
        CMatrix::from_diagonal(&CVector::from_fn(h, |_, _| disk_point(rng, 0.99)))
    };
    match kind % 4 {
        0 => {
            let q = random_unitary(h, rng);
            (&q * diag(rng) * q.adjoint(), &q * diag(rng) * q.adjoint())
        }
        1 => {
            let a = CMatrix::from_fn(h, h, |_, _| disk_point(rng, 1.0));
            let t = &a * c(0.98 * rng.gen::<f64>() / operator_norm(&a), 0.0);
            // (z + z²)/2 maps the disk into itself.
            let t2 = (&t + &t * &t) * c(0.5, 0.0);
            (t, t2)
        }
        2 => {
            let mut j = CMatrix::zeros(h, h);
            for i in 0..h - 1 {
                j[(i, i + 1)] = c(1.0, 0.0);
            }
            let r = 0.999 * rng.gen::<f64>();
            (&j * c(r, 0.0), &j * &j * c(0.999, 0.0))
        }
        _ => {
            let s = CMatrix::from_fn(h, h, |_, _| disk_point(rng, 1.0)) + CMatrix::identity(h, h);
            let s_inv = s.clone().try_inverse().expect("invertible");
            let t1 = &s * diag(rng) * &s_inv;
            let t2 = &s * diag(rng) * &s_inv;
            let n1 = operator_norm(&t1);
            let n2 = operator_norm(&t2);
            (
                t1 * c(0.99 / n1.max(1.0), 0.0),
                t2 * c(0.99 / n2.max(1.0), 0.0),
            )
        }
    }
}

fn von_neumann(rng: &mut ChaCha8Rng) -> Outcome {
    let family = FamilySpec::Polydisk { d: 2 }.build().unwrap();
    let pts: Vec<Point> = (0..4)
        .map(|_| Point(vec![disk_point(rng, 0.9), disk_point(rng, 0.9)]))
        .collect();
    let nodes = NodeSet::new(pts.clone()).unwrap();
    let evals = eval_matrix(&family, &nodes).unwrap();
    let xi: Vec<Complex64> = pts.iter().map(|p| p.0[0] * p.0[1]).collect();
    // 1 − z₁z₂ w̄₁w̄₂ = (1 − z₁w̄₁) + z₁w̄₁(1 − z₂w̄₂)
    let g1 = HermitianMatrix::from_fn(4, |_, _| c(1.0, 0.0)).unwrap();
    let g2 = HermitianMatrix::from_fn(4, |x, y| pts[x].0[0] * pts[y].0[0].conj()).unwrap();
    let dec = AglerDecomposition::new(evals.values.clone(), family.labels().to_vec(), vec![g1, g2])
        .unwrap();
    let col = build_colligation(&dec, &xi, &RealizeOptions::default()).unwrap();
    let mut worst = 0.0_f64;
    let mut worst_product = 0.0_f64;
    for k in 0..100 {
        let (t1, t2) = commuting_pair(rng, k);
        assert!((&t1 * &t2 - &t2 * &t1).norm() < 1e-10 * (1.0 + t1.norm() * t2.norm()));
        let rep = Representation::new(vec![t1.clone(), t2.clone()]).unwrap();
        let w = transfer_eval_rep(&col, &rep, RepMode::Strict).unwrap();
        worst = worst.max(operator_norm(w.best()));
        worst_product = worst_product.max((w.best() - &t1 * &t2).norm());
    }
    Outcome {
        name: "von Neumann inequality",
        passed: worst <= 1.0 + VON_NEUMANN_TOL,
        detail: format!(
            "100 commuting strict-contraction pairs, max ||W(T1,T2)|| = {worst:.12}, max ||W(T1,T2) - T1 T2|| = {worst_product:.2e}"
        ),
    }
}

fn annulus_family_checks() -> Outcome {
    let params = AnnulusParams::new(0.3, c(0.5, 0.0)).unwrap();
    let nodes = [c(0.6, 0.1), c(-0.5, 0.4), c(0.1, -0.7)];
    let hardy = hardy_gram(&nodes, &params).unwrap();
    let mut worst_boundary = 0.0_f64;
    let mut worst_one = 0.0_f64;
    let mut worst_zero = 0.0_f64;
    let mut bad_winding = 0;
    let mut bad_rank = 0;
    for t in t_grid(64) {
        let f = make_vartheta(&params, t).unwrap();
        let rep = f.verify(512).unwrap();
        worst_boundary = worst_boundary.max(rep.max_boundary_deviation);
        worst_one = worst_one.max(rep.value_at_one_error);
        worst_zero = worst_zero.max(rep.zero_error);
        bad_winding += (rep.winding != 2) as usize;
        let values: Vec<Complex64> = nodes.iter().map(|&z| f.eval(z).unwrap()).collect();
        bad_rank += (pick_rank(&values, &hardy).unwrap().0 != 2) as usize;
    }
    Outcome {
        name: "annulus family",
        passed: worst_boundary <= BOUNDARY_TOL
            && worst_one <= VALUE_AT_ONE_TOL
            && worst_zero <= ZERO_TOL
            && bad_winding == 0
            && bad_rank == 0,
        detail: format!(
            "64 grid values: max boundary deviation {worst_boundary:.2e}, max |f(1) - 1| {worst_one:.2e}, \
             max zero error {worst_zero:.2e}, {bad_winding} winding failures, {bad_rank} Pick matrices without rank two"
        ),
    }
}

fn counterexamples(opts: &SolverOptions) -> Outcome {
    let ex2 = demo_example2(0, opts).unwrap();
    let witness = ex2
        .check_named("structural witness")
        .is_some_and(|c| c.passed);
    let poly = demo_infinite_polydisk(&[8, 32, 128], opts).unwrap();
    let ex1 = demo_example1(&[4, 16, 64], opts).unwrap();
    let increasing = ex1
        .check_named("mass diagnostic strictly increasing")
        .is_some_and(|c| c.passed);
    let compact = ex1
        .check_named("compactified family feasible with residual <= 1e-10")
        .is_some_and(|c| c.passed);
    let failed: Vec<String> = [&ex2, &poly, &ex1]
        .iter()
        .flat_map(|r| {
            r.checks
                .iter()
                .filter(|c| !c.passed)
                .map(|c| format!("{}: {}", r.name, c.name))
        })
        .collect();
    let margins = poly
        .table("contradiction")
        .and_then(|t| t.column("dual_margin"))
        .unwrap_or_default();
    let index = ex1
        .table("mass")
        .and_then(|t| t.column("mean_member_index"))
        .unwrap_or_default();
    Outcome {
        name: "counterexample suite",
        passed: witness && increasing && compact && failed.is_empty(),
        detail: format!(
            "two-point witness {witness}; polydisk margins {}; mass diagnostic {index:?}; \
             compactified residual <= {COMPACTIFIED_TOL:e}: {compact}; failed checks {failed:?}",
            sci(&margins)
        ),
    }
}

fn coarsening() -> Outcome {
    let rep = demo_coarsening(&CoarseningDemoParams::default()).unwrap();
    let t = rep.table("drift").unwrap();
    let drift = t.column("max_drift").unwrap();
    let bound = t.column("max_bound").unwrap();
    let eps = t.column("epsilon").unwrap();
    Outcome {
        name: "coarsening convergence",
        passed: rep.passed(),
        detail: format!(
            "cells 8/16/32: epsilon {}, max drift {}, max bound {}",
            sci(&eps),
            sci(&drift),
            sci(&bound)
        ),
    }
}

fn main() {
    let opts = SolverOptions::default();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let disk = disk_instances(&mut rng, 1000);
    let bidisk = bidisk_instances(&mut rng, 100);
    let mut outcomes = Vec::new();
    let mut timed = |f: &mut dyn FnMut() -> Outcome| {
        let start = Instant::now();
        let o = f();
        let mark = if o.passed { "PASS" } else { "FAIL" };
        println!(
            "[{mark}] {} ({:.1}s): {}",
            o.name,
            start.elapsed().as_secs_f64(),
            o.detail
        );
        outcomes.push(o.passed);
    };
    timed(&mut || classical_pick_oracle(&disk, &opts));
    let mut r = ChaCha8Rng::seed_from_u64(1);
    timed(&mut || end_to_end_realization(&disk, &bidisk, &opts, &mut r));
    let all: Vec<&Instance> = disk.iter().chain(&bidisk).collect();
    timed(&mut || duality_soundness(&all, &opts));
    let mut r = ChaCha8Rng::seed_from_u64(2);
    timed(&mut || von_neumann(&mut r));
    timed(&mut annulus_family_checks);
    timed(&mut || counterexamples(&opts));
    timed(&mut coarsening);
    let failed = outcomes.iter().filter(|p| !**p).count();
    println!(
        "acceptance: {} of {} criteria passed",
        outcomes.len() - failed,
        outcomes.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
