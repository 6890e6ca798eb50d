use std::path::{Path, PathBuf};
use std::process::ExitCode;

use agler::agler::{
    certificate_report, solve_interpolation, target_matrix, validate_decomposition,
    AglerDecomposition, DualCertificate, SolveOutcome, Verdict,
};
use agler::annulus::{make_vartheta, t_grid, AnnulusParams};
use agler::kernels::{admissibility_from_values, gram_from_csv, gram_to_csv, pick_from_values};
use agler::lab::{run_demo, DEMO_NAMES};
use agler::realize::{
    build_colligation, transfer_eval_rep, Colligation, RealizeOptions, RepMode, Representation,
};
use agler::testfns::eval_matrix_unchecked;
use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use num_complex::Complex64;

mod formats;
mod problem;

use formats::{
    decomposition_from_text, decomposition_to_text, matrix_csv, representation_ops, write_atomic,
    RepresentationFile,
};
use problem::{load_problem, Overrides, Problem};

/// Agler-Pick interpolation: decide, certify and realize.
#[derive(Parser)]
#[command(name = "agler", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    flags: Flags,
}

#[derive(Args, Clone, Debug)]
struct Flags {
    /// Feasibility tolerance for decompositions.
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// Iteration budget of the primal solver.
    #[arg(long, global = true)]
    max_iters: Option<usize>,
    /// Grid size for annulus families.
    #[arg(long, global = true)]
    grid: Option<usize>,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Directory for output files.
    #[arg(long, global = true, default_value = "agler-out")]
    out: PathBuf,
    /// Require strict contractions when evaluating at a representation.
    #[arg(long, global = true)]
    strict: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Decide interpolability; writes a decomposition or a certificate.
    Solve { problem: PathBuf },
    /// Solve, then build a unitary colligation realizing the interpolant.
    Realize {
        problem: PathBuf,
        /// JSON file of operators `{"operators": [...]}` to evaluate the
        /// transfer function at.
        #[arg(long)]
        rep: Option<PathBuf>,
    },
    /// Re-validate an artifact written by `solve` or `realize`.
    #[command(group(
        clap::ArgGroup::new("artifact")
            .required(true)
            .args(["decomposition", "certificate", "colligation"])
    ))]
    Verify {
        problem: PathBuf,
        #[arg(long)]
        decomposition: Option<PathBuf>,
        #[arg(long)]
        certificate: Option<PathBuf>,
        #[arg(long)]
        colligation: Option<PathBuf>,
    },
    /// Check a kernel Gram matrix for admissibility at the problem's nodes.
    KernelCheck {
        problem: PathBuf,
        #[arg(long)]
        kernel: PathBuf,
    },
    /// Tabulate the annulus inner functions on both boundary circles and
    /// locate their zeros.
    AnnulusTheta {
        #[arg(long)]
        q: f64,
        /// Base point as `re` or `re,im`.
        #[arg(long)]
        b: String,
        #[arg(long, default_value_t = 512)]
        samples: usize,
    },
    /// Run a named experiment.
    Demo {
        #[arg(value_parser = clap::builder::PossibleValuesParser::new(DEMO_NAMES))]
        name: String,
    },
}

/// Exit status of a completed command.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Status {
    Pass = 0,
    Fail = 1,
    Undecided = 2,
}

const INPUT_ERROR: u8 = 3;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(INPUT_ERROR);
        }
    };
    match run(cli) {
        Ok(status) => ExitCode::from(status as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(INPUT_ERROR)
        }
    }
}

fn run(cli: Cli) -> Result<Status> {
    let f = cli.flags;
    let overrides = Overrides {
        tol: f.tol,
        max_iters: f.max_iters,
        grid: f.grid,
    };
    match cli.command {
        Command::Solve { problem } => solve(&load_problem(&problem, &overrides)?, &f.out),
        Command::Realize { problem, rep } => realize(
            &load_problem(&problem, &overrides)?,
            rep.as_deref(),
            f.strict,
            &f.out,
        ),
        Command::Verify {
            problem,
            decomposition,
            certificate,
            colligation,
        } => {
            let p = load_problem(&problem, &overrides)?;
            if let Some(path) = decomposition {
                verify_decomposition(&p, &path)
            } else if let Some(path) = certificate {
                verify_certificate(&p, &path)
            } else {
                verify_colligation(&p, &colligation.expect("clap requires one artifact"))
            }
        }
        Command::KernelCheck { problem, kernel } => {
            kernel_check(&load_problem(&problem, &overrides)?, &kernel)
        }
        Command::AnnulusTheta { q, b, samples } => {
            annulus_theta(q, parse_complex(&b)?, f.grid.unwrap_or(64), samples, &f.out)
        }
        Command::Demo { name } => demo(&name, f.seed, f.max_iters, &f.out),
    }
}

fn parse_complex(s: &str) -> Result<Complex64> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    let num = |t: &str| {
        t.parse::<f64>()
            .with_context(|| format!("'{t}' is not a number"))
    };
    match parts.as_slice() {
        [re] => Ok(Complex64::new(num(re)?, 0.0)),
        [re, im] => Ok(Complex64::new(num(re)?, num(im)?)),
        _ => bail!("expected 're' or 're,im', found '{s}'"),
    }
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn run_solver(p: &Problem) -> Result<SolveOutcome> {
    let xi = p.target()?;
    let out = solve_interpolation(xi, &p.family, &p.nodes, &p.options)?;
    let d = &out.diagnostics;
    println!("verdict: {}", out.verdict.name());
    println!("route: {:?}", d.route);
    println!("iterations: {}", d.iterations);
    println!(
        "residual: {:.3e} (tolerance {:.3e})",
        d.best_residual, d.feas_tol
    );
    if let Some(m) = d.best_dual_margin {
        println!("dual margin: {m:.3e}");
    }
    println!(
        "mass: total {:.4e}, diagonal {:.4e}, bound {:.4e}{}",
        d.total_mass,
        d.diagonal_mass,
        d.mass_bound,
        if d.mass_exceeded { " (exceeded)" } else { "" }
    );
    Ok(out)
}

/// Write the verdict's artifact and diagnostics; returns the exit status.
fn write_outcome(out: &SolveOutcome, dir: &Path) -> Result<Status> {
    let diag = serde_json::to_string_pretty(&out.diagnostics)?;
    write_atomic(dir, "diagnostics.json", &diag)?;
    match &out.verdict {
        Verdict::Feasible(dec) => {
            let path = write_atomic(dir, "decomposition.txt", &decomposition_to_text(dec))?;
            println!("wrote {}", path.display());
            Ok(Status::Pass)
        }
        Verdict::Infeasible(cert) => {
            let path = write_atomic(dir, "certificate.csv", &gram_to_csv(&cert.k))?;
            println!("wrote {}", path.display());
            Ok(Status::Fail)
        }
        Verdict::Undecided => Ok(Status::Undecided),
    }
}

fn solve(p: &Problem, dir: &Path) -> Result<Status> {
    let out = run_solver(p)?;
    write_outcome(&out, dir)
}

fn realize(p: &Problem, rep: Option<&Path>, strict: bool, dir: &Path) -> Result<Status> {
    let out = run_solver(p)?;
    let status = write_outcome(&out, dir)?;
    let Verdict::Feasible(dec) = &out.verdict else {
        return Ok(status);
    };
    let xi = p.target()?;
    let mut col = build_colligation(dec, xi, &RealizeOptions::default())?;
    if let Some(spec) = p.family.spec() {
        col = col.with_family(spec.clone());
    }
    let path = write_atomic(dir, "colligation.txt", &col.to_text())?;
    println!("wrote {}", path.display());
    println!("state dimension: {}", col.state_dim());
    println!("unitarity defect: {:.3e}", col.unitarity_defect());
    let residuals = col.node_residuals(&dec.psi, xi)?;
    let mut table = String::from("node,re_w,im_w,residual\n");
    for (x, r) in residuals.iter().enumerate() {
        let values: Vec<Complex64> = dec.psi.column(x).iter().copied().collect();
        let w = col.transfer_values(&values)?;
        table.push_str(&format!("{x},{:e},{:e},{:e}\n", w.re, w.im, r));
    }
    write_atomic(dir, "node-residuals.csv", &table)?;
    let worst = residuals.iter().copied().fold(0.0, f64::max);
    println!("max node residual: {worst:.3e}");
    if let Some(rep) = rep {
        let file: RepresentationFile =
            serde_json::from_str(&read(rep)?).with_context(|| format!("in {}", rep.display()))?;
        let reps = Representation::new(representation_ops(file)?)?;
        let mode = if strict {
            RepMode::Strict
        } else {
            RepMode::NonStrict
        };
        let value = transfer_eval_rep(&col, &reps, mode)?;
        if let Some(v) = &value.value {
            write_atomic(dir, "rep-value.csv", &matrix_csv(v))?;
            println!("norm of W(T): {:.6e}", agler::numerics::operator_norm(v));
        }
        if let Some(v) = &value.regularized {
            write_atomic(dir, "rep-value-regularized.csv", &matrix_csv(v))?;
            println!("norm of W(rT): {:.6e}", agler::numerics::operator_norm(v));
        }
    }
    let ok = col.unitarity_defect() <= 1e-10 && worst <= 1e-7;
    Ok(if ok { Status::Pass } else { Status::Fail })
}

fn verify_decomposition(p: &Problem, path: &Path) -> Result<Status> {
    let xi = p.target()?;
    let (labels, gammas) =
        decomposition_from_text(&read(path)?).with_context(|| format!("in {}", path.display()))?;
    let evals = eval_matrix_unchecked(&p.family, &p.nodes)?;
    if gammas.len() != evals.members() {
        bail!(
            "{} blocks for {} family members",
            gammas.len(),
            evals.members()
        );
    }
    let dec = AglerDecomposition::new(evals.values.clone(), labels, gammas)?;
    let tol = p.options.feas_tol_for(&target_matrix(xi));
    let report = validate_decomposition(&dec, xi, tol)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    println!(
        "decomposition {}",
        if report.valid { "valid" } else { "INVALID" }
    );
    Ok(if report.valid {
        Status::Pass
    } else {
        Status::Fail
    })
}

fn verify_certificate(p: &Problem, path: &Path) -> Result<Status> {
    let xi = p.target()?;
    let k = gram_from_csv(&read(path)?).with_context(|| format!("in {}", path.display()))?;
    let evals = eval_matrix_unchecked(&p.family, &p.nodes)?;
    let cert = DualCertificate {
        k,
        member_min_eigenvalues: Vec::new(),
        target_min_eigenvalue: f64::NAN,
    };
    let report = certificate_report(&cert, &evals, &target_matrix(xi), &p.options)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    println!(
        "certificate {}",
        if report.valid { "valid" } else { "INVALID" }
    );
    Ok(if report.valid {
        Status::Pass
    } else {
        Status::Fail
    })
}

fn verify_colligation(p: &Problem, path: &Path) -> Result<Status> {
    let xi = p.target()?;
    let col =
        Colligation::from_text(&read(path)?).with_context(|| format!("in {}", path.display()))?;
    let evals = eval_matrix_unchecked(&p.family, &p.nodes)?;
    let residuals = col.node_residuals(&evals.values, xi)?;
    let worst = residuals.iter().copied().fold(0.0, f64::max);
    let defect = col.unitarity_defect();
    println!("unitarity defect: {defect:.3e}");
    println!("max node residual: {worst:.3e}");
    let ok = defect <= 1e-10 && worst <= 1e-7;
    println!("colligation {}", if ok { "valid" } else { "INVALID" });
    Ok(if ok { Status::Pass } else { Status::Fail })
}

fn kernel_check(p: &Problem, path: &Path) -> Result<Status> {
    let k = gram_from_csv(&read(path)?).with_context(|| format!("in {}", path.display()))?;
    let evals = eval_matrix_unchecked(&p.family, &p.nodes)?;
    let report = admissibility_from_values(&k, &evals, p.options.psd_tol)?;
    let kmin = k.min_eigenvalue()?;
    println!("kernel min eigenvalue: {kmin:.6e}");
    for (j, m) in report.member_min_eigenvalues.iter().enumerate() {
        println!(
            "member {j} ({}): min eigenvalue {m:.6e}",
            p.family.labels()[j]
        );
    }
    println!("admissible: {}", report.admissible);
    if let Some(xi) = &p.target {
        let pick = pick_from_values(xi, &k).min_eigenvalue()?;
        println!("target Pick matrix min eigenvalue: {pick:.6e}");
        if report.admissible && pick < -p.options.cert_margin {
            println!("kernel certifies that the target is not interpolable");
        }
    }
    Ok(if report.admissible {
        Status::Pass
    } else {
        Status::Fail
    })
}

fn annulus_theta(q: f64, b: Complex64, m: usize, samples: usize, dir: &Path) -> Result<Status> {
    let params = AnnulusParams::new(q, b)?;
    let mut boundary = String::from("t_index,circle,angle,re,im,modulus\n");
    let mut zeros = String::from(
        "t_index,t_re,t_im,zero1_re,zero1_im,zero2_re,zero2_im,zero_error,winding,value_at_one_error,max_boundary_deviation\n",
    );
    let mut ok = true;
    for (k, t) in t_grid(m).into_iter().enumerate() {
        let f = make_vartheta(&params, t)?;
        for s in 0..samples {
            let angle = std::f64::consts::TAU * s as f64 / samples as f64;
            for (name, r) in [("outer", 1.0), ("inner", q)] {
                let v = f.eval(Complex64::from_polar(r, angle))?;
                boundary.push_str(&format!(
                    "{k},{name},{angle:e},{:e},{:e},{:e}\n",
                    v.re,
                    v.im,
                    v.norm()
                ));
            }
        }
        let rep = f.verify(samples)?;
        let z = f.zeros();
        zeros.push_str(&format!(
            "{k},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{},{:e},{:e}\n",
            t.re,
            t.im,
            z[0].re,
            z[0].im,
            z[1].re,
            z[1].im,
            rep.zero_error,
            rep.winding,
            rep.value_at_one_error,
            rep.max_boundary_deviation
        ));
        ok &= rep.winding == 2
            && rep.zero_error <= 1e-8
            && rep.value_at_one_error <= 1e-10
            && rep.max_boundary_deviation <= 1e-6;
    }
    write_atomic(dir, "theta-boundary.csv", &boundary)?;
    write_atomic(dir, "theta-zeros.csv", &zeros)?;
    println!(
        "{m} inner functions checked: {}",
        if ok { "all pass" } else { "FAILURES" }
    );
    Ok(if ok { Status::Pass } else { Status::Fail })
}

fn demo(name: &str, seed: u64, max_iters: Option<usize>, dir: &Path) -> Result<Status> {
    let mut opts = agler::agler::SolverOptions::default();
    if let Some(n) = max_iters {
        opts.max_iters = n;
    }
    let rep = run_demo(name, seed, &opts)?;
    let text = rep.to_text();
    print!("{text}");
    write_atomic(dir, &format!("{name}.txt"), &text)?;
    for t in &rep.tables {
        write_atomic(dir, &format!("{name}-{}.csv", t.name), &t.to_csv())?;
    }
    Ok(if rep.passed() {
        Status::Pass
    } else {
        Status::Fail
    })
}
