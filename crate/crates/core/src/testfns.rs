//! Discretized families of test functions.
//!
//! A [`TestFamily`] is a finite list of members `ψ_j` on a domain. Infinite
//! families are represented by a grid or an index cutoff; limit points that a
//! compactification would add are included as explicit extra members.

use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annulus::{make_vartheta, t_grid, AnnulusError, AnnulusParams, InnerFunction};
use crate::numerics::{c, CMatrix};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TestFnError {
    #[error("axiom (i) violated: |ψ_{member}({point})| = {modulus} is not below 1")]
    NotStrictlyContractive {
        member: usize,
        point: Point,
        modulus: f64,
    },
    #[error("point {0} is outside the family's domain")]
    OutsideDomain(Point),
    #[error("nodes {0} and {1} coincide")]
    DuplicateNode(usize, usize),
    #[error("node set is empty")]
    EmptyNodeSet,
    #[error("unknown family '{0}'")]
    UnknownFamily(String),
    #[error("invalid parameters for family '{name}': {reason}")]
    InvalidParams { name: String, reason: String },
    #[error("invalid input: {0}")]
    Input(String),
    #[error(transparent)]
    Annulus(#[from] AnnulusError),
}

pub type Result<T> = std::result::Result<T, TestFnError>;

/// A domain point: one complex coordinate for planar domains, several for
/// polydisks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Point(pub Vec<Complex64>);

impl Point {
    pub fn scalar(z: Complex64) -> Self {
        Point(vec![z])
    }

    pub fn coords(&self) -> &[Complex64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    /// The single coordinate of a planar point.
    pub fn as_scalar(&self) -> Option<Complex64> {
        (self.0.len() == 1).then(|| self.0[0])
    }

    /// Replace negative zeros so that equality is exact comparison.
    fn canonical(&self) -> Vec<(u64, u64)> {
        let fix = |x: f64| if x == 0.0 { 0.0_f64 } else { x };
        self.0
            .iter()
            .map(|z| (fix(z.re).to_bits(), fix(z.im).to_bits()))
            .collect()
    }
}

impl fmt::Display for Point {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, z) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{z}")?;
        }
        write!(f, ")")
    }
}

/// Finite ordered set of distinct domain points.
#[derive(Clone, Debug, PartialEq)]
pub struct NodeSet {
    points: Vec<Point>,
}

impl NodeSet {
    pub fn new(points: Vec<Point>) -> Result<Self> {
        if points.is_empty() {
            return Err(TestFnError::EmptyNodeSet);
        }
        let keys: Vec<_> = points.iter().map(Point::canonical).collect();
        for i in 0..keys.len() {
            for j in (i + 1)..keys.len() {
                if keys[i] == keys[j] {
                    return Err(TestFnError::DuplicateNode(i, j));
                }
            }
        }
        Ok(Self { points })
    }

    pub fn scalars(zs: &[Complex64]) -> Result<Self> {
        Self::new(zs.iter().map(|&z| Point::scalar(z)).collect())
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Domain {
    Disk,
    Polydisk {
        dim: usize,
    },
    Annulus {
        q: f64,
        b: Complex64,
    },
    /// A finite set of points; evaluation is by exact lookup.
    Finite {
        points: Vec<Point>,
    },
    /// Sequences truncated to `cutoff` coordinates, followed by one extra
    /// coordinate holding the sequence's limit.
    InfinitePolydisk {
        cutoff: usize,
    },
}

impl Domain {
    pub fn contains(&self, p: &Point) -> bool {
        let inside_disk = |z: &Complex64| z.norm() < 1.0;
        match self {
            Domain::Disk => p.dim() == 1 && inside_disk(&p.0[0]),
            Domain::Polydisk { dim } => p.dim() == *dim && p.0.iter().all(inside_disk),
            Domain::Annulus { q, .. } => p.dim() == 1 && p.0[0].norm() > *q && p.0[0].norm() < 1.0,
            Domain::Finite { points } => {
                let key = p.canonical();
                points.iter().any(|x| x.canonical() == key)
            }
            Domain::InfinitePolydisk { cutoff } => {
                p.dim() == cutoff + 1 && p.0.iter().all(inside_disk)
            }
        }
    }
}

/// One test function.
#[derive(Clone, Debug, PartialEq)]
pub enum Member {
    /// `x ↦ scale · x[index]`.
    Coordinate {
        index: usize,
        scale: f64,
    },
    Constant(Complex64),
    Inner(Box<InnerFunction>),
    /// Values at finitely many points.
    Tabulated {
        points: Vec<Point>,
        values: Vec<Complex64>,
    },
}

impl Member {
    pub fn eval(&self, p: &Point) -> Result<Complex64> {
        match self {
            Member::Coordinate { index, scale } => {
                p.0.get(*index)
                    .map(|z| z * *scale)
                    .ok_or_else(|| TestFnError::OutsideDomain(p.clone()))
            }
            Member::Constant(v) => Ok(*v),
            Member::Inner(f) => {
                let z = p
                    .as_scalar()
                    .ok_or_else(|| TestFnError::OutsideDomain(p.clone()))?;
                Ok(f.eval(z)?)
            }
            Member::Tabulated { points, values } => {
                let key = p.canonical();
                points
                    .iter()
                    .position(|x| x.canonical() == key)
                    .map(|i| values[i])
                    .ok_or_else(|| TestFnError::OutsideDomain(p.clone()))
            }
        }
    }
}

/// Named constructor parameters for the built-in families, plus tabulated
/// user data. Serialized with a `name` tag, e.g.
/// `{"name": "polydisk", "d": 2}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case")]
pub enum FamilySpec {
    /// The coordinate function `z` on the disk.
    Disk,
    /// Coordinate functions on the `d`-polydisk.
    Polydisk { d: usize },
    /// `ψ_n(z) = sqrt(1 − 1/n) z` for `n = 1..=n_max`.
    Example1 { n_max: usize },
    /// [`FamilySpec::Example1`] plus the limit member `ψ_∞(z) = z`.
    Example1Compactified { n_max: usize },
    /// Two points `x₁ = 1`, `x₂ = 2` with `ψ(x₁) = 0`, `ψ(x₂) = 1`.
    Example2,
    /// `ϑ_t` for `t` on a uniform grid of `m` points of the circle.
    AnnulusTheta {
        q: f64,
        b: Complex64,
        m: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        truncation: Option<usize>,
    },
    /// Coordinates `e_n`, `n = 1..=cutoff`, optionally with the limit
    /// evaluation as an extra member.
    InfinitePolydisk {
        cutoff: usize,
        #[serde(default)]
        limit_member: bool,
    },
    Tabulated {
        labels: Vec<String>,
        points: Vec<Point>,
        /// `values[j][i] = ψ_j(points[i])`.
        values: Vec<Vec<Complex64>>,
    },
}

impl FamilySpec {
    pub fn name(&self) -> &'static str {
        match self {
            FamilySpec::Disk => "disk",
            FamilySpec::Polydisk { .. } => "polydisk",
            FamilySpec::Example1 { .. } => "example1",
            FamilySpec::Example1Compactified { .. } => "example1-compactified",
            FamilySpec::Example2 => "example2",
            FamilySpec::AnnulusTheta { .. } => "annulus-theta",
            FamilySpec::InfinitePolydisk { .. } => "infinite-polydisk",
            FamilySpec::Tabulated { .. } => "tabulated",
        }
    }

    pub fn build(&self) -> Result<TestFamily> {
        let invalid = |reason: &str| TestFnError::InvalidParams {
            name: self.name().to_string(),
            reason: reason.to_string(),
        };
        let mut labels = Vec::new();
        let mut members = Vec::new();
        let mut limit = Vec::new();
        let domain;
        match self {
            FamilySpec::Disk => {
                domain = Domain::Disk;
                labels.push("z".into());
                members.push(Member::Coordinate {
                    index: 0,
                    scale: 1.0,
                });
                limit.push(false);
            }
            FamilySpec::Polydisk { d } => {
                if *d == 0 {
                    return Err(invalid("d must be positive"));
                }
                domain = Domain::Polydisk { dim: *d };
                for k in 0..*d {
                    labels.push(format!("z{}", k + 1));
                    members.push(Member::Coordinate {
                        index: k,
                        scale: 1.0,
                    });
                    limit.push(false);
                }
            }
            FamilySpec::Example1 { n_max } | FamilySpec::Example1Compactified { n_max } => {
                if *n_max == 0 {
                    return Err(invalid("n_max must be positive"));
                }
                domain = Domain::Disk;
                for n in 1..=*n_max {
                    labels.push(format!("psi_{n}"));
                    members.push(Member::Coordinate {
                        index: 0,
                        scale: (1.0 - 1.0 / n as f64).sqrt(),
                    });
                    limit.push(false);
                }
                if matches!(self, FamilySpec::Example1Compactified { .. }) {
                    labels.push("psi_inf".into());
                    members.push(Member::Coordinate {
                        index: 0,
                        scale: 1.0,
                    });
                    limit.push(true);
                }
            }
            FamilySpec::Example2 => {
                let pts = example2_points();
                domain = Domain::Finite {
                    points: pts.clone(),
                };
                labels.push("psi".into());
                members.push(Member::Tabulated {
                    points: pts,
                    values: vec![c(0.0, 0.0), c(1.0, 0.0)],
                });
                limit.push(false);
            }
            FamilySpec::AnnulusTheta {
                q,
                b,
                m,
                truncation,
            } => {
                if *m == 0 {
                    return Err(invalid("grid size m must be positive"));
                }
                let params = match truncation {
                    Some(n) => AnnulusParams::with_truncation(*q, *b, *n)?,
                    None => AnnulusParams::new(*q, *b)?,
                };
                domain = Domain::Annulus { q: *q, b: *b };
                for (k, t) in t_grid(*m).into_iter().enumerate() {
                    labels.push(format!("theta_{k}/{m}"));
                    members.push(Member::Inner(Box::new(make_vartheta(&params, t)?)));
                    limit.push(false);
                }
            }
            FamilySpec::InfinitePolydisk {
                cutoff,
                limit_member,
            } => {
                if *cutoff == 0 {
                    return Err(invalid("cutoff must be positive"));
                }
                domain = Domain::InfinitePolydisk { cutoff: *cutoff };
                for n in 1..=*cutoff {
                    labels.push(format!("e_{n}"));
                    members.push(Member::Coordinate {
                        index: n - 1,
                        scale: 1.0,
                    });
                    limit.push(false);
                }
                if *limit_member {
                    labels.push("e_limit".into());
                    members.push(Member::Coordinate {
                        index: *cutoff,
                        scale: 1.0,
                    });
                    limit.push(true);
                }
            }
            FamilySpec::Tabulated {
                labels: ls,
                points,
                values,
            } => {
                if ls.len() != values.len() {
                    return Err(invalid("one label per member is required"));
                }
                if values.iter().any(|row| row.len() != points.len()) {
                    return Err(invalid("each member needs one value per point"));
                }
                NodeSet::new(points.clone()).map_err(|e| invalid(&e.to_string()))?;
                domain = Domain::Finite {
                    points: points.clone(),
                };
                for (label, row) in ls.iter().zip(values) {
                    labels.push(label.clone());
                    members.push(Member::Tabulated {
                        points: points.clone(),
                        values: row.clone(),
                    });
                    limit.push(false);
                }
            }
        }
        Ok(TestFamily {
            spec: Some(self.clone()),
            labels,
            members,
            limit_member: limit,
            domain,
        })
    }
}

/// The two points of the Example 2 space.
pub fn example2_points() -> Vec<Point> {
    vec![Point::scalar(c(1.0, 0.0)), Point::scalar(c(2.0, 0.0))]
}

/// Look up a built-in family by name with JSON parameters.
pub fn builtin_family(name: &str, params: &serde_json::Value) -> Result<TestFamily> {
    let mut obj = match params {
        serde_json::Value::Object(map) => map.clone(),
        serde_json::Value::Null => serde_json::Map::new(),
        _ => {
            return Err(TestFnError::Input(
                "family params must be a JSON object".into(),
            ))
        }
    };
    obj.insert("name".into(), serde_json::Value::String(name.to_string()));
    let spec: FamilySpec = serde_json::from_value(serde_json::Value::Object(obj)).map_err(|e| {
        if e.to_string().contains("unknown variant") {
            TestFnError::UnknownFamily(name.to_string())
        } else {
            TestFnError::InvalidParams {
                name: name.to_string(),
                reason: e.to_string(),
            }
        }
    })?;
    spec.build()
}

#[derive(Clone, Debug, PartialEq)]
pub struct TestFamily {
    spec: Option<FamilySpec>,
    labels: Vec<String>,
    members: Vec<Member>,
    limit_member: Vec<bool>,
    domain: Domain,
}

impl TestFamily {
    /// Family from explicit members, e.g. a subset of a built-in family.
    pub fn from_members(domain: Domain, labels: Vec<String>, members: Vec<Member>) -> Result<Self> {
        if labels.len() != members.len() {
            return Err(TestFnError::Input(
                "one label per member is required".into(),
            ));
        }
        let limit_member = vec![false; members.len()];
        Ok(Self {
            spec: None,
            labels,
            members,
            limit_member,
            domain,
        })
    }

    /// Keep only the members whose index satisfies `keep`.
    pub fn filter(&self, mut keep: impl FnMut(usize) -> bool) -> Self {
        let idx: Vec<usize> = (0..self.len()).filter(|&j| keep(j)).collect();
        Self {
            spec: None,
            labels: idx.iter().map(|&j| self.labels[j].clone()).collect(),
            members: idx.iter().map(|&j| self.members[j].clone()).collect(),
            limit_member: idx.iter().map(|&j| self.limit_member[j]).collect(),
            domain: self.domain.clone(),
        }
    }

    pub fn spec(&self) -> Option<&FamilySpec> {
        self.spec.as_ref()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn members(&self) -> &[Member] {
        &self.members
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Whether member `j` was added as a limit point of the family.
    pub fn is_limit_member(&self, j: usize) -> bool {
        self.limit_member[j]
    }

    pub fn eval(&self, j: usize, p: &Point) -> Result<Complex64> {
        self.members[j].eval(p)
    }

    pub fn check_nodes(&self, nodes: &NodeSet) -> Result<()> {
        match nodes.points().iter().find(|p| !self.domain.contains(p)) {
            Some(p) => Err(TestFnError::OutsideDomain(p.clone())),
            None => Ok(()),
        }
    }
}

/// Values `ψ_j(x)`: rows are members, columns are nodes.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalMatrix {
    pub values: CMatrix,
    /// `1 − max |ψ_j(x)|`.
    pub margin: f64,
}

impl EvalMatrix {
    /// Wrap raw values without checking axiom (i).
    pub fn from_values(values: CMatrix) -> Self {
        let max = values.iter().fold(0.0_f64, |acc, z| acc.max(z.norm()));
        Self {
            values,
            margin: 1.0 - max,
        }
    }

    pub fn members(&self) -> usize {
        self.values.nrows()
    }

    pub fn nodes(&self) -> usize {
        self.values.ncols()
    }

    pub fn get(&self, member: usize, node: usize) -> Complex64 {
        self.values[(member, node)]
    }

    pub fn member_row(&self, member: usize) -> Vec<Complex64> {
        self.values.row(member).iter().copied().collect()
    }

    /// Sub-matrix with the given members.
    pub fn select_members(&self, members: &[usize]) -> Self {
        let n = self.nodes();
        Self::from_values(CMatrix::from_fn(members.len(), n, |i, x| {
            self.values[(members[i], x)]
        }))
    }
}

/// Evaluate every member at every node and check `|ψ_j(x)| < 1`.
pub fn eval_matrix(fam: &TestFamily, nodes: &NodeSet) -> Result<EvalMatrix> {
    let m = eval_matrix_unchecked(fam, nodes)?;
    for j in 0..m.members() {
        for x in 0..m.nodes() {
            let modulus = m.get(j, x).norm();
            if !(modulus < 1.0) {
                return Err(TestFnError::NotStrictlyContractive {
                    member: j,
                    point: nodes.points()[x].clone(),
                    modulus,
                });
            }
        }
    }
    Ok(m)
}

/// Like [`eval_matrix`] but without the axiom (i) check. Used to study
/// families that deliberately violate it.
pub fn eval_matrix_unchecked(fam: &TestFamily, nodes: &NodeSet) -> Result<EvalMatrix> {
    fam.check_nodes(nodes)?;
    let mut values = CMatrix::zeros(fam.len(), nodes.len());
    for (j, member) in fam.members().iter().enumerate() {
        for (x, p) in nodes.points().iter().enumerate() {
            values[(j, x)] = member.eval(p)?;
        }
    }
    Ok(EvalMatrix::from_values(values))
}

/// Result of [`check_generates`].
#[derive(Clone, Debug)]
pub struct GenerationReport {
    pub generates: bool,
    /// Rank of the span of `1` and all monomials of degree `1..=cap`.
    pub unital_rank: usize,
    /// Rank of the span of monomials of degree `1..=cap` only.
    pub non_unital_rank: usize,
    /// Rows are restrictions of independent monomials (the first row is the
    /// constant 1); their span is the unital algebra restricted to the nodes.
    pub monomials: CMatrix,
    /// Member-index words of the rows of `monomials` (empty word = 1).
    pub words: Vec<Vec<usize>>,
}

/// Does the unital algebra generated by the family, restricted to the nodes,
/// contain every function on the nodes?
pub fn check_generates(
    fam: &TestFamily,
    nodes: &NodeSet,
    degree_cap: Option<usize>,
    tol: f64,
) -> Result<GenerationReport> {
    let evals = eval_matrix_unchecked(fam, nodes)?;
    generation_from_values(&evals, degree_cap.unwrap_or(nodes.len()), tol)
}

pub fn generation_from_values(
    evals: &EvalMatrix,
    degree_cap: usize,
    tol: f64,
) -> Result<GenerationReport> {
    if degree_cap < 1 {
        return Err(TestFnError::Input("degree cap must be at least 1".into()));
    }
    let n = evals.nodes();
    let one: Vec<Complex64> = vec![c(1.0, 0.0); n];

    // Degree-k monomials span the products ψ_j · (degree k−1 monomials), so
    // it suffices to multiply a spanning subset of the previous degree.
    let mut unital = Basis::new(n, tol);
    let mut non_unital = Basis::new(n, tol);
    let mut rows = vec![one.clone()];
    let mut words = vec![vec![]];
    unital.insert(&one);
    let mut frontier: Vec<(Vec<usize>, Vec<Complex64>)> = vec![(vec![], one)];
    for _degree in 1..=degree_cap {
        let mut level = Basis::new(n, tol);
        let mut next = Vec::new();
        for (word, v) in &frontier {
            for j in 0..evals.members() {
                let prod: Vec<Complex64> = (0..n).map(|x| v[x] * evals.get(j, x)).collect();
                if level.insert(&prod) {
                    let mut w = word.clone();
                    w.push(j);
                    non_unital.insert(&prod);
                    if unital.insert(&prod) {
                        rows.push(prod.clone());
                        words.push(w.clone());
                    }
                    next.push((w, prod));
                }
            }
        }
        if next.is_empty() {
            break;
        }
        frontier = next;
    }
    let monomials = CMatrix::from_fn(rows.len(), n, |i, x| rows[i][x]);
    Ok(GenerationReport {
        generates: unital.rank() == n,
        unital_rank: unital.rank(),
        non_unital_rank: non_unital.rank(),
        monomials,
        words,
    })
}

/// Incrementally built orthonormal basis (modified Gram-Schmidt with one
/// reorthogonalization pass).
struct Basis {
    dim: usize,
    tol: f64,
    vectors: Vec<Vec<Complex64>>,
}

impl Basis {
    fn new(dim: usize, tol: f64) -> Self {
        Self {
            dim,
            tol,
            vectors: Vec::new(),
        }
    }

    fn rank(&self) -> usize {
        self.vectors.len()
    }

    fn insert(&mut self, v: &[Complex64]) -> bool {
        if self.vectors.len() == self.dim {
            return false;
        }
        let norm0 = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if norm0 == 0.0 {
            return false;
        }
        let mut r: Vec<Complex64> = v.iter().map(|z| z / norm0).collect();
        for _ in 0..2 {
            for b in &self.vectors {
                let proj: Complex64 = b.iter().zip(&r).map(|(bi, ri)| bi.conj() * ri).sum();
                for (ri, bi) in r.iter_mut().zip(b) {
                    *ri -= proj * bi;
                }
            }
        }
        let norm = r.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if norm <= self.tol.max(1e-12) {
            return false;
        }
        self.vectors.push(r.iter().map(|z| z / norm).collect());
        true
    }
}
