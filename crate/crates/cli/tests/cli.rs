use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn problem(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("problems")
        .join(name)
}

fn agler(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_agler"))
        .arg("--out")
        .arg(out)
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn feasible_problem_round_trips_through_verify() {
    let dir = tempfile::tempdir().unwrap();
    let p = problem("bidisk.json");
    let p = p.to_str().unwrap();
    let o = agler(dir.path(), &["solve", p]);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    let dec = dir.path().join("decomposition.txt");
    assert!(dec.exists());
    assert!(dir.path().join("diagnostics.json").exists());
    let o = agler(
        dir.path(),
        &["verify", p, "--decomposition", dec.to_str().unwrap()],
    );
    assert_eq!(code(&o), 0, "{}", stdout(&o));
}

#[test]
fn infeasible_problem_writes_a_valid_certificate() {
    let dir = tempfile::tempdir().unwrap();
    let p = problem("schwarz-pick.json");
    let p = p.to_str().unwrap();
    let o = agler(dir.path(), &["solve", p]);
    assert_eq!(code(&o), 1, "{}", stdout(&o));
    let cert = dir.path().join("certificate.csv");
    let o = agler(
        dir.path(),
        &["verify", p, "--certificate", cert.to_str().unwrap()],
    );
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    let o = agler(
        dir.path(),
        &["kernel-check", p, "--kernel", cert.to_str().unwrap()],
    );
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    assert!(stdout(&o).contains("not interpolable"));
}

#[test]
fn realize_writes_a_colligation_that_verifies() {
    let dir = tempfile::tempdir().unwrap();
    let p = problem("bidisk.json");
    let p = p.to_str().unwrap();
    let rep = dir.path().join("rep.json");
    std::fs::write(
        &rep,
        r#"{"operators": [[[[0.5, 0], [0, 0]], [[0, 0], [-0.3, 0.1]]],
                          [[[0.2, 0], [0, 0]], [[0, 0], [0.4, 0]]]]}"#,
    )
    .unwrap();
    let o = agler(dir.path(), &["realize", p, "--rep", rep.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    let col = dir.path().join("colligation.txt");
    assert!(dir.path().join("node-residuals.csv").exists());
    assert!(dir.path().join("rep-value.csv").exists());
    let o = agler(
        dir.path(),
        &["verify", p, "--colligation", col.to_str().unwrap()],
    );
    assert_eq!(code(&o), 0, "{}", stdout(&o));
}

#[test]
fn demo_writes_report_and_tables() {
    let dir = tempfile::tempdir().unwrap();
    let o = agler(dir.path(), &["demo", "example2"]);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    assert!(dir.path().join("example2.txt").exists());
}

#[test]
fn annulus_theta_tables() {
    let dir = tempfile::tempdir().unwrap();
    let o = agler(
        dir.path(),
        &[
            "--grid",
            "4",
            "annulus-theta",
            "--q",
            "0.3",
            "--b",
            "0.5",
            "--samples",
            "64",
        ],
    );
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    let zeros = std::fs::read_to_string(dir.path().join("theta-zeros.csv")).unwrap();
    assert_eq!(zeros.lines().count(), 5);
}

#[test]
fn malformed_input_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(
        &bad,
        r#"{"family": {"name": "disk"}, "nodes": [[1.5, 0]], "target": [[0, 0]]}"#,
    )
    .unwrap();
    let o = agler(dir.path(), &["solve", bad.to_str().unwrap()]);
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("nodes"));
    let o = agler(dir.path(), &["solve", "/nonexistent/problem.json"]);
    assert_eq!(code(&o), 3);
    let o = agler(dir.path(), &["demo", "no-such-demo"]);
    assert_eq!(code(&o), 3);
}

#[test]
fn tampered_decomposition_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let p = problem("bidisk.json");
    let p = p.to_str().unwrap();
    assert_eq!(code(&agler(dir.path(), &["solve", p])), 0);
    let dec = dir.path().join("decomposition.txt");
    let text = std::fs::read_to_string(&dec).unwrap();
    let mut lines: Vec<String> = text.lines().map(str::to_string).collect();
    // First diagonal entry of the first block.
    let row = &mut lines[4];
    let mut cells: Vec<f64> = row.split_whitespace().map(|c| c.parse().unwrap()).collect();
    cells[0] += 0.5;
    *row = cells
        .iter()
        .map(|c| format!("{c:.15e}"))
        .collect::<Vec<_>>()
        .join(" ");
    std::fs::write(&dec, lines.join("\n")).unwrap();
    let o = agler(
        dir.path(),
        &["verify", p, "--decomposition", dec.to_str().unwrap()],
    );
    assert_eq!(code(&o), 1, "{}", stdout(&o));
}
