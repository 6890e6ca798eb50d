//! Artifact files: decompositions as text, representations as JSON, and
//! atomic writes.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use agler::agler::AglerDecomposition;
use agler::numerics::{CMatrix, HermitianMatrix};
use anyhow::{bail, Context, Result};
use num_complex::Complex64;
use serde::Deserialize;

pub const DECOMPOSITION_HEADER: &str = "# agler-decomposition v1";

/// Write `contents` to `dir/name` through a temporary file in the same
/// directory, so readers never see a partial file.
pub fn write_atomic(dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(name);
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents.as_bytes())?;
    tmp.flush()?;
    tmp.persist(&path)
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}

fn write_row(out: &mut String, values: impl Iterator<Item = Complex64>) {
    let cells: Vec<String> = values
        .map(|v| format!("{:.15e} {:.15e}", v.re, v.im))
        .collect();
    writeln!(out, "{}", cells.join(" ")).unwrap();
}

/// Header, node and member counts, then for each member a `block` line and
/// one row of `re im` pairs per node.
pub fn decomposition_to_text(dec: &AglerDecomposition) -> String {
    let mut out = String::new();
    writeln!(out, "{DECOMPOSITION_HEADER}").unwrap();
    writeln!(out, "nodes {}", dec.nodes()).unwrap();
    writeln!(out, "members {}", dec.members()).unwrap();
    for (j, g) in dec.gammas.iter().enumerate() {
        writeln!(out, "block {j} {}", dec.labels[j]).unwrap();
        let m = g.as_matrix();
        for x in 0..m.nrows() {
            write_row(&mut out, m.row(x).iter().copied());
        }
    }
    out
}

/// Blocks in member order; labels as written.
pub fn decomposition_from_text(text: &str) -> Result<(Vec<String>, Vec<HermitianMatrix>)> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
    let mut next = || lines.next().context("unexpected end of decomposition file");
    let (_, h) = next()?;
    if h != DECOMPOSITION_HEADER {
        bail!("line 1: expected '{DECOMPOSITION_HEADER}'");
    }
    let mut count = |key: &str| -> Result<usize> {
        let (ln, l) = next()?;
        l.strip_prefix(key)
            .and_then(|v| v.trim().parse().ok())
            .with_context(|| format!("line {ln}: expected '{key} <count>'"))
    };
    let n = count("nodes")?;
    let members = count("members")?;
    let mut labels = Vec::with_capacity(members);
    let mut gammas = Vec::with_capacity(members);
    for j in 0..members {
        let (ln, l) = next()?;
        let rest = l
            .strip_prefix("block ")
            .with_context(|| format!("line {ln}: expected 'block <member> <label>'"))?;
        let (idx, label) = rest.split_once(' ').unwrap_or((rest, ""));
        if idx.parse::<usize>().ok() != Some(j) {
            bail!("line {ln}: expected block {j}");
        }
        labels.push(label.to_string());
        let mut m = CMatrix::zeros(n, n);
        for x in 0..n {
            let (ln, l) = next()?;
            let nums = l
                .split_whitespace()
                .map(str::parse::<f64>)
                .collect::<std::result::Result<Vec<_>, _>>()
                .with_context(|| format!("line {ln}: bad number"))?;
            if nums.len() != 2 * n {
                bail!(
                    "line {ln}: expected {} numbers, found {}",
                    2 * n,
                    nums.len()
                );
            }
            for y in 0..n {
                m[(x, y)] = Complex64::new(nums[2 * y], nums[2 * y + 1]);
            }
        }
        gammas.push(HermitianMatrix::new(m).with_context(|| format!("block {j}"))?);
    }
    Ok((labels, gammas))
}

/// `{"operators": [T_0, T_1, ...]}` with each `T_j` a list of rows of
/// `[re, im]` entries.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RepresentationFile {
    pub operators: Vec<Vec<Vec<Complex64>>>,
}

pub fn representation_ops(file: RepresentationFile) -> Result<Vec<CMatrix>> {
    file.operators
        .into_iter()
        .enumerate()
        .map(|(j, rows)| {
            let n = rows.len();
            if rows.iter().any(|r| r.len() != n) {
                bail!("operators[{j}] is not square");
            }
            Ok(CMatrix::from_fn(n, n, |i, k| rows[i][k]))
        })
        .collect()
}

pub fn matrix_csv(m: &CMatrix) -> String {
    let mut out = String::from("row,col,re,im\n");
    for i in 0..m.nrows() {
        for k in 0..m.ncols() {
            writeln!(out, "{i},{k},{:e},{:e}", m[(i, k)].re, m[(i, k)].im).unwrap();
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decomposition_round_trip() {
        let psi =
            CMatrix::from_row_slice(1, 2, &[Complex64::new(0.1, 0.0), Complex64::new(0.2, 0.3)]);
        let g = HermitianMatrix::from_fn(2, |x, y| {
            Complex64::new(1.0 + x as f64, (x as f64) - (y as f64))
        })
        .unwrap();
        let dec = AglerDecomposition::new(psi, vec!["z one".into()], vec![g.clone()]).unwrap();
        let (labels, gammas) = decomposition_from_text(&decomposition_to_text(&dec)).unwrap();
        assert_eq!(labels, vec!["z one".to_string()]);
        assert!((gammas[0].as_matrix() - g.as_matrix()).norm() < 1e-15);
        assert!(decomposition_from_text("# agler-decomposition v0\n").is_err());
    }

    #[test]
    fn atomic_write_replaces() {
        let dir = tempfile::tempdir().unwrap();
        write_atomic(dir.path(), "a.txt", "one").unwrap();
        let p = write_atomic(dir.path(), "a.txt", "two").unwrap();
        assert_eq!(std::fs::read_to_string(p).unwrap(), "two");
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
