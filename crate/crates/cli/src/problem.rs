//! Problem files: JSON with complex numbers written as `[re, im]`.

use std::path::Path;

use agler::agler::{Engine, SolverOptions};
use agler::testfns::{FamilySpec, NodeSet, Point, TestFamily};
use anyhow::{bail, Context, Result};
use num_complex::Complex64;
use serde::Deserialize;

pub const PROBLEM_FORMAT: &str = "agler-problem v1";

/// A node is either a bare complex number or a list of coordinates.
#[derive(Clone, Debug, Deserialize)]
#[serde(untagged)]
pub enum NodeInput {
    Scalar(Complex64),
    Point(Vec<Complex64>),
}

impl NodeInput {
    fn into_point(self) -> Point {
        match self {
            NodeInput::Scalar(z) => Point::scalar(z),
            NodeInput::Point(zs) => Point(zs),
        }
    }
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemOptions {
    pub tol: Option<f64>,
    pub cert_margin: Option<f64>,
    pub max_iters: Option<usize>,
    pub grid: Option<usize>,
    pub engine: Option<Engine>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    #[serde(default)]
    pub format: Option<String>,
    pub family: FamilySpec,
    pub nodes: Vec<NodeInput>,
    #[serde(default)]
    pub target: Option<Vec<Complex64>>,
    #[serde(default)]
    pub options: ProblemOptions,
}

/// Command-line overrides of the file's options.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub tol: Option<f64>,
    pub max_iters: Option<usize>,
    pub grid: Option<usize>,
}

/// A parsed and checked problem.
#[derive(Debug)]
pub struct Problem {
    pub family: TestFamily,
    pub nodes: NodeSet,
    pub target: Option<Vec<Complex64>>,
    pub options: SolverOptions,
}

impl Problem {
    pub fn target(&self) -> Result<&[Complex64]> {
        match &self.target {
            Some(t) => Ok(t),
            None => bail!("problem file has no 'target' field, which this command needs"),
        }
    }
}

pub fn parse_problem(text: &str, overrides: &Overrides) -> Result<Problem> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let file: ProblemFile = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        anyhow::anyhow!(
            "field '{path}': {inner} (line {}, column {})",
            inner.line(),
            inner.column()
        )
    })?;
    if let Some(f) = &file.format {
        if f != PROBLEM_FORMAT {
            bail!("field 'format': expected \"{PROBLEM_FORMAT}\", found \"{f}\"");
        }
    }
    let mut spec = file.family;
    if let (Some(grid), FamilySpec::AnnulusTheta { m, .. }) =
        (overrides.grid.or(file.options.grid), &mut spec)
    {
        *m = grid;
    }
    let family = spec.build().context("field 'family'")?;
    let nodes = NodeSet::new(file.nodes.into_iter().map(NodeInput::into_point).collect())
        .context("field 'nodes'")?;
    family.check_nodes(&nodes).context("field 'nodes'")?;
    if let Some(t) = &file.target {
        if t.len() != nodes.len() {
            bail!(
                "field 'target': {} values for {} nodes",
                t.len(),
                nodes.len()
            );
        }
        if let Some((i, v)) = t.iter().enumerate().find(|(_, v)| !(v.norm() <= 1.0)) {
            bail!("field 'target[{i}]': |{v}| exceeds 1");
        }
    }
    let mut options = SolverOptions::default();
    let o = &file.options;
    options.feas_tol = overrides.tol.or(o.tol);
    if let Some(m) = o.cert_margin {
        options.cert_margin = m;
    }
    if let Some(n) = overrides.max_iters.or(o.max_iters) {
        options.max_iters = n;
    }
    if let Some(e) = o.engine {
        options.engine = e;
    }
    Ok(Problem {
        family,
        nodes,
        target: file.target,
        options,
    })
}

pub fn load_problem(path: &Path, overrides: &Overrides) -> Result<Problem> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_problem(&text, overrides).with_context(|| format!("in {}", path.display()))
}
