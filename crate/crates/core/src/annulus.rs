//! Inner functions of the annulus `{q < |z| < 1}` with two zeros.
//!
//! The building block is the truncated product
//! `P(w) = ∏_{n=0}^{N} (1 − q^{2n} w)(1 − q^{2n+2}/w)`, which satisfies
//! `P(1/w) = P(q²w) = −P(w)/w`. From it, `B_a(z) = P(z/a) / P(z ā)` has a
//! single zero in the closed annulus (at `a`), modulus `1/|a|` on the outer
//! circle and modulus `1` on the inner one. Two such factors, a power of `z`
//! and a scalar give `ϑ_t`, unimodular on both circles with zeros at `b` and
//! `qt/b` and `ϑ_t(1) = 1`.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numerics::{c, HermitianMatrix, NumericsError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnnulusError {
    #[error("invalid annulus parameters: {0}")]
    InvalidParams(String),
    #[error("point {0} is outside the domain of the function")]
    Domain(Complex64),
    #[error("calibration of the inner function failed: {0}")]
    Calibration(String),
    #[error("winding number is inconclusive: {0}")]
    Inconclusive(String),
    #[error("Hardy kernel series diverges at z·conj(w) = {0}")]
    Divergent(Complex64),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

pub type Result<T> = std::result::Result<T, AnnulusError>;

/// Annulus `{q < |z| < 1}` with base point `b` and product truncation order.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnnulusParams {
    pub q: f64,
    pub b: Complex64,
    pub truncation: usize,
}

/// Smallest `N` with `q^{2N} < 1e-14`.
pub fn default_truncation(q: f64) -> usize {
    let mut n = 0;
    while q.powi(2 * n as i32) >= 1e-14 {
        n += 1;
    }
    n
}

impl AnnulusParams {
    pub fn new(q: f64, b: Complex64) -> Result<Self> {
        if !(q > 0.0 && q < 1.0) {
            return Err(AnnulusError::InvalidParams(format!(
                "q = {q} not in (0, 1)"
            )));
        }
        Self::with_truncation(q, b, default_truncation(q))
    }

    pub fn with_truncation(q: f64, b: Complex64, truncation: usize) -> Result<Self> {
        if !(q > 0.0 && q < 1.0) {
            return Err(AnnulusError::InvalidParams(format!(
                "q = {q} not in (0, 1)"
            )));
        }
        let r = b.norm();
        if !(r > q && r < 1.0) {
            return Err(AnnulusError::InvalidParams(format!(
                "base point modulus {r} not in ({q}, 1)"
            )));
        }
        if (r - q.sqrt()).abs() < 1e-12 {
            return Err(AnnulusError::InvalidParams(
                "base point lies on |z| = sqrt(q); the two zeros would coincide".into(),
            ));
        }
        if truncation == 0 {
            return Err(AnnulusError::InvalidParams(
                "truncation must be positive".into(),
            ));
        }
        Ok(Self { q, b, truncation })
    }

    pub fn contains(&self, z: Complex64) -> bool {
        let r = z.norm();
        r > self.q && r < 1.0
    }

    /// Harmonic measure of the outer circle seen from `b`.
    pub fn outer_weight(&self) -> f64 {
        (self.b.norm() / self.q).ln() / (1.0 / self.q).ln()
    }
}

/// `∏_{n=0}^{N} (1 − q^{2n} w)(1 − q^{2n+2}/w)`.
pub fn theta_product(w: Complex64, q: f64, truncation: usize) -> Result<Complex64> {
    if w == c(0.0, 0.0) || !w.re.is_finite() || !w.im.is_finite() {
        return Err(AnnulusError::Domain(w));
    }
    let q2 = q * q;
    let mut qn = 1.0; // q^{2n}
    let mut acc = c(1.0, 0.0);
    for _ in 0..=truncation {
        acc *= (c(1.0, 0.0) - w * qn) * ((w - qn * q2) / w);
        qn *= q2;
    }
    Ok(acc)
}

/// Relative bound on `|P_∞(w) − P_N(w)| / |P_N(w)|`:
/// `exp(Σ_{n>N} (q^{2n}|w| + q^{2n+2}/|w|)) − 1`.
pub fn theta_tail_bound(w_abs: f64, q: f64, truncation: usize) -> f64 {
    let q2 = q * q;
    let first = q2.powi(truncation as i32 + 1);
    let geometric = first / (1.0 - q2);
    ((w_abs + q2 / w_abs) * geometric).exp_m1()
}

/// Single-zero factor `B_a(z) = P(z/a) / P(z ā)`.
pub fn annulus_factor(a: Complex64, z: Complex64, q: f64, truncation: usize) -> Result<Complex64> {
    let num = theta_product(z / a, q, truncation)?;
    let den = theta_product(z * a.conj(), q, truncation)?;
    if den.norm() < 1e-300 {
        return Err(AnnulusError::Domain(z));
    }
    Ok(num / den)
}

/// `ϑ_t(z) = c · z^power · B_b(z) · B_{qt/b}(z)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InnerFunction {
    pub params: AnnulusParams,
    pub t: Complex64,
    pub second_zero: Complex64,
    pub scale: Complex64,
    pub power: i32,
}

impl InnerFunction {
    pub fn eval(&self, z: Complex64) -> Result<Complex64> {
        let p = &self.params;
        if z == c(0.0, 0.0) {
            return Err(AnnulusError::Domain(z));
        }
        let f1 = annulus_factor(p.b, z, p.q, p.truncation)?;
        let f2 = annulus_factor(self.second_zero, z, p.q, p.truncation)?;
        Ok(self.scale * z.powi(self.power) * f1 * f2)
    }

    pub fn zeros(&self) -> [Complex64; 2] {
        [self.params.b, self.second_zero]
    }

    /// Check every defining property numerically.
    pub fn verify(&self, samples: usize) -> Result<VarthetaReport> {
        let q = self.params.q;
        let f = |z: Complex64| self.eval(z).unwrap_or(c(f64::NAN, f64::NAN));
        let mut max_dev = 0.0_f64;
        for k in 0..samples {
            let e = Complex64::from_polar(1.0, 2.0 * PI * k as f64 / samples as f64);
            for r in [1.0, q] {
                max_dev = max_dev.max((f(e * r).norm() - 1.0).abs());
            }
        }
        let value_at_one_error = (f(c(1.0, 0.0)) - c(1.0, 0.0)).norm();
        let winding = count_zeros(f, &Contour::annulus(q, 1.0), samples)?;
        let located = locate_zeros(f, q, 1.0)?;
        let expected = self.zeros();
        let zero_error = match_zeros(&located, &expected);
        Ok(VarthetaReport {
            max_boundary_deviation: max_dev,
            value_at_one_error,
            winding,
            located_zeros: located,
            zero_error,
        })
    }
}

/// Outcome of [`InnerFunction::verify`].
#[derive(Clone, Debug)]
pub struct VarthetaReport {
    pub max_boundary_deviation: f64,
    pub value_at_one_error: f64,
    pub winding: i64,
    pub located_zeros: Vec<Complex64>,
    /// Largest distance between a located zero and its expected position;
    /// infinite when the counts differ.
    pub zero_error: f64,
}

fn match_zeros(found: &[Complex64], expected: &[Complex64]) -> f64 {
    if found.len() != expected.len() {
        return f64::INFINITY;
    }
    let mut used = vec![false; found.len()];
    let mut worst = 0.0_f64;
    for e in expected {
        let best = found
            .iter()
            .enumerate()
            .filter(|(i, _)| !used[*i])
            .min_by(|a, b| (a.1 - e).norm().total_cmp(&(b.1 - e).norm()));
        let Some((i, z)) = best else {
            return f64::INFINITY;
        };
        used[i] = true;
        worst = worst.max((z - e).norm());
    }
    worst
}

/// Build `ϑ_t`: zeros at `b` and `qt/b`, unimodular on both boundary circles,
/// `ϑ_t(1) = 1`.
pub fn make_vartheta(params: &AnnulusParams, t: Complex64) -> Result<InnerFunction> {
    if (t.norm() - 1.0).abs() > 1e-12 {
        return Err(AnnulusError::InvalidParams(format!(
            "|t| = {} is not 1",
            t.norm()
        )));
    }
    let (q, n) = (params.q, params.truncation);
    let b = params.b;
    let second_zero = t * q / b;
    let prod = |z: Complex64| -> Result<Complex64> {
        Ok(annulus_factor(b, z, q, n)? * annulus_factor(second_zero, z, q, n)?)
    };
    // Both factors have constant modulus on each circle; one sample per
    // circle fixes the calibration, the rest of the circle is checked below.
    let outer = prod(c(1.0, 0.0))?;
    let inner = prod(c(q, 0.0))?.norm();
    let exponent = (outer.norm() / inner).ln() / q.ln();
    let power = exponent.round();
    let scale = outer.inv();
    let residual = [
        (exponent - power).abs(),
        (scale.norm() * outer.norm() - 1.0).abs(),
        (scale.norm() * q.powf(power) * inner - 1.0).abs(),
    ]
    .into_iter()
    .fold(0.0_f64, f64::max);
    let f = InnerFunction {
        params: *params,
        t,
        second_zero,
        scale,
        power: power as i32,
    };
    let mut worst = residual;
    for k in 0..16 {
        let e = Complex64::from_polar(1.0, 2.0 * PI * (k as f64 + 0.5) / 16.0);
        for r in [1.0, q] {
            worst = worst.max((f.eval(e * r)?.norm() - 1.0).abs());
        }
    }
    if worst > 1e-6 {
        return Err(AnnulusError::Calibration(format!(
            "residual {worst:e} (exponent {exponent}, outer {}, inner {inner})",
            outer.norm()
        )));
    }
    Ok(f)
}

/// `t_k = exp(2πi k/m)` for `k = 0..m`. Grids nest: entry `2k` of the
/// `2m` grid equals entry `k` of the `m` grid bit for bit.
pub fn t_grid(m: usize) -> Vec<Complex64> {
    (0..m)
        .map(|k| Complex64::from_polar(1.0, 2.0 * PI * (k as f64 / m as f64)))
        .collect()
}

/// A closed contour made of one or more sampled loops.
#[derive(Clone, Debug)]
pub enum Contour {
    Circle {
        center: Complex64,
        radius: f64,
        counterclockwise: bool,
    },
    /// Outer circle counterclockwise, inner circle clockwise.
    Annulus { inner: f64, outer: f64 },
    /// Boundary of `{r0 < |z| < r1, θ0 < arg z < θ1}`, positively oriented.
    Sector {
        r0: f64,
        r1: f64,
        th0: f64,
        th1: f64,
    },
}

impl Contour {
    pub fn circle(center: Complex64, radius: f64) -> Self {
        Contour::Circle {
            center,
            radius,
            counterclockwise: true,
        }
    }

    pub fn annulus(inner: f64, outer: f64) -> Self {
        Contour::Annulus { inner, outer }
    }

    /// Closed polylines, each traversed in order and closed back to its
    /// first point.
    fn loops(&self, samples: usize) -> Vec<Vec<Complex64>> {
        let ring = |center: Complex64, r: f64, ccw: bool| -> Vec<Complex64> {
            (0..samples)
                .map(|k| {
                    let s = if ccw { 1.0 } else { -1.0 };
                    center + Complex64::from_polar(r, s * 2.0 * PI * k as f64 / samples as f64)
                })
                .collect()
        };
        match *self {
            Contour::Circle {
                center,
                radius,
                counterclockwise,
            } => vec![ring(center, radius, counterclockwise)],
            Contour::Annulus { inner, outer } => {
                vec![
                    ring(c(0.0, 0.0), outer, true),
                    ring(c(0.0, 0.0), inner, false),
                ]
            }
            Contour::Sector { r0, r1, th0, th1 } => {
                let s = samples.max(4);
                let mut pts = Vec::with_capacity(4 * s);
                for k in 0..s {
                    let u = k as f64 / s as f64;
                    pts.push(Complex64::from_polar(r0 + (r1 - r0) * u, th0));
                }
                for k in 0..s {
                    let u = k as f64 / s as f64;
                    pts.push(Complex64::from_polar(r1, th0 + (th1 - th0) * u));
                }
                for k in 0..s {
                    let u = k as f64 / s as f64;
                    pts.push(Complex64::from_polar(r1 - (r1 - r0) * u, th1));
                }
                for k in 0..s {
                    let u = k as f64 / s as f64;
                    pts.push(Complex64::from_polar(r0, th1 - (th1 - th0) * u));
                }
                vec![pts]
            }
        }
    }
}

/// Argument-principle zero count (zeros minus poles) of `f` inside
/// `contour`, from sampled argument increments.
pub fn count_zeros(
    f: impl Fn(Complex64) -> Complex64,
    contour: &Contour,
    samples: usize,
) -> Result<i64> {
    let mut total = 0.0;
    for lp in contour.loops(samples) {
        let values: Vec<Complex64> = lp.iter().map(|&z| f(z)).collect();
        let min = values
            .iter()
            .fold(f64::INFINITY, |acc, v| acc.min(v.norm()));
        if !(min > 1e-6) {
            return Err(AnnulusError::Inconclusive(format!(
                "min |f| on contour is {min:e}"
            )));
        }
        for k in 0..values.len() {
            let next = values[(k + 1) % values.len()];
            total += (next / values[k]).arg();
        }
    }
    let turns = total / (2.0 * PI);
    let rounded = turns.round();
    if (turns - rounded).abs() >= 0.25 {
        return Err(AnnulusError::Inconclusive(format!(
            "winding {turns} is not near an integer"
        )));
    }
    Ok(rounded as i64)
}

/// Find the zeros of `f` in `{inner < |z| < outer}`: winding-number
/// subdivision of annular sectors, then Newton polish with a central
/// difference derivative.
pub fn locate_zeros(
    f: impl Fn(Complex64) -> Complex64,
    inner: f64,
    outer: f64,
) -> Result<Vec<Complex64>> {
    // Offsets keep sector edges away from "nice" points such as the real
    // axis, where zeros tend to sit.
    const ANGLE_OFFSET: f64 = 0.123_456_789;
    const SPLIT: f64 = 0.481_966;
    const EDGE_SAMPLES: usize = 64;
    const CELL_SIZE: f64 = 1e-3;

    let mut found = Vec::new();
    let sectors = 8;
    let mut stack: Vec<(f64, f64, f64, f64, usize)> = (0..sectors)
        .map(|k| {
            let th0 = ANGLE_OFFSET + 2.0 * PI * k as f64 / sectors as f64;
            let th1 = ANGLE_OFFSET + 2.0 * PI * (k + 1) as f64 / sectors as f64;
            (inner, outer, th0, th1, 0)
        })
        .collect();
    while let Some((r0, r1, th0, th1, depth)) = stack.pop() {
        let contour = Contour::Sector { r0, r1, th0, th1 };
        let winding = match count_zeros(&f, &contour, EDGE_SAMPLES) {
            Ok(w) => w,
            Err(AnnulusError::Inconclusive(msg)) if depth > 0 => {
                return Err(AnnulusError::Inconclusive(format!(
                    "zero on a subdivision edge near r∈[{r0},{r1}], θ∈[{th0},{th1}]: {msg}"
                )));
            }
            Err(e) => return Err(e),
        };
        if winding <= 0 {
            continue;
        }
        let size = (r1 - r0).max(r1 * (th1 - th0));
        if size < CELL_SIZE || depth > 40 {
            let start = Complex64::from_polar(0.5 * (r0 + r1), 0.5 * (th0 + th1));
            let z = newton_polish(&f, start);
            for _ in 0..winding {
                found.push(z);
            }
            continue;
        }
        let rm = r0 + SPLIT * (r1 - r0);
        let tm = th0 + SPLIT * (th1 - th0);
        for (a0, a1) in [(r0, rm), (rm, r1)] {
            for (b0, b1) in [(th0, tm), (tm, th1)] {
                stack.push((a0, a1, b0, b1, depth + 1));
            }
        }
    }
    Ok(found)
}

fn newton_polish(f: &impl Fn(Complex64) -> Complex64, mut z: Complex64) -> Complex64 {
    let h = 1e-6;
    for _ in 0..50 {
        let fz = f(z);
        let d = (f(z + h) - f(z - h)) / (2.0 * h);
        if d.norm() == 0.0 {
            break;
        }
        let step = fz / d;
        z -= step;
        if step.norm() < 1e-15 {
            break;
        }
    }
    z
}

/// Base-point-normalized Hardy kernel of the annulus.
///
/// `s(z,w) = Σ_{|n|≤M} (z w̄)^n / (m₀ + m₁ q^{2n})` with `m₀` the harmonic
/// measure of the outer circle seen from `b`, and
/// `k(z,w) = s(z,w) s(b,b) / (s(z,b) s(b,w))`, so `k(z,b) = k(b,w) = 1`.
pub fn hardy_kernel(
    z: Complex64,
    w: Complex64,
    params: &AnnulusParams,
    cutoff: Option<usize>,
) -> Result<Complex64> {
    let b = params.b;
    let s = |u: Complex64, v: Complex64| raw_hardy(u, v, params, cutoff);
    Ok(s(z, w)? * s(b, b)? / (s(z, b)? * s(b, w)?))
}

fn raw_hardy(
    z: Complex64,
    w: Complex64,
    params: &AnnulusParams,
    cutoff: Option<usize>,
) -> Result<Complex64> {
    let q = params.q;
    let x = z * w.conj();
    let r = x.norm();
    let q2 = q * q;
    if !(r > q2 && r < 1.0) {
        return Err(AnnulusError::Divergent(x));
    }
    let m0 = params.outer_weight();
    let m1 = 1.0 - m0;
    let cutoff = match cutoff {
        Some(m) => m,
        None => {
            let rho = r.max(q2 / r);
            let min_w = m0.min(m1);
            let m = ((1e-12 * min_w).ln() / rho.ln()).ceil();
            if !(m < 1e7) {
                return Err(AnnulusError::Divergent(x));
            }
            m.max(1.0) as usize
        }
    };
    let mut acc = c(1.0, 0.0) / (m0 + m1);
    let xinv = x.inv();
    let (mut pos, mut neg) = (c(1.0, 0.0), c(1.0, 0.0));
    let (mut qp, mut qn) = (1.0, 1.0); // q^{2n}, q^{-2n}
    for _ in 1..=cutoff {
        pos *= x;
        neg *= xinv;
        qp *= q2;
        qn /= q2;
        acc += pos / (m0 + m1 * qp);
        acc += neg / (m0 + m1 * qn);
    }
    Ok(acc)
}

/// Gram matrix of [`hardy_kernel`] on a list of points.
pub fn hardy_gram(points: &[Complex64], params: &AnnulusParams) -> Result<HermitianMatrix> {
    let n = points.len();
    let mut entries = vec![c(0.0, 0.0); n * n];
    for i in 0..n {
        for j in 0..n {
            entries[i * n + j] = hardy_kernel(points[i], points[j], params, None)?;
        }
    }
    Ok(HermitianMatrix::from_fn(n, |i, j| entries[i * n + j])?)
}
