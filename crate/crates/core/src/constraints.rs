//! Constraint maps `ξ : (R^d)^n → R^m`, their Jacobians, the Gram matrix
//! `G = ∇ξᵀ∇ξ`, the co-area correction `U_n = −log|det G| / (2β_n)` and the
//! orthogonal projector onto the tangent space of `{ξ = 0}`.

use crate::linalg::Cholesky;
use crate::model::{norm_sq, Configuration};
use thiserror::Error;

/// Largest number of simultaneous scalar constraints supported.
pub const MAX_CONSTRAINTS: usize = 4;

/// Relative pivot threshold for declaring a Gram matrix singular.
pub const GRAM_PIVOT_TOL: f64 = 1e-12;

/// Floor on `|det G|` below which the correction energy is undefined.
pub const GRAM_DET_FLOOR: f64 = 1e-300;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConstraintError {
    #[error("at most {MAX_CONSTRAINTS} constraints are supported, got {0}")]
    TooMany(usize),
    #[error("a constraint set needs at least one component; use ConstraintSet::unconstrained")]
    Empty,
    #[error("affine direction has length {got}, expected dimension {dim}")]
    AffineDimension { got: usize, dim: usize },
    #[error("affine direction must be nonzero and finite")]
    AffineDirection,
    #[error("cosine constraint is only defined in d = 2, got d = {0}")]
    CosineDimension(usize),
    #[error("log-abs constraint undefined: particle {0} is at the origin")]
    LogAbsOrigin(usize),
    #[error("configuration dimension {got} does not match constraint dimension {expected}")]
    DimensionMismatch { got: usize, expected: usize },
    #[error("Gram matrix is degenerate")]
    DegenerateGram,
}

/// One-body function `φ` for a linear statistic `ξ = (1/n) Σ φ(x_i)`.
#[derive(Debug, Clone, PartialEq)]
pub enum LinearPhi {
    /// `x·v − c` with `|v| = 1`.
    Affine { v: Vec<f64>, c: f64 },
    /// `c − (cos(k x₁) + cos(k x₂)) / 2`, d = 2 only.
    Cosine { c: f64, k: f64 },
    /// `log|x| − c`.
    LogAbs { c: f64 },
}

/// Even function `φ` of the difference for a quadratic statistic
/// `ξ = (1/n²) Σ_{i,j} φ(x_i − x_j)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PairPhi {
    /// `c − |u|`
    RadialGap { c: f64 },
    /// `c − |u₁|`
    AxisGap { c: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub enum ConstraintSpec {
    LinearStat(LinearPhi),
    QuadStat(PairPhi),
}

impl ConstraintSpec {
    pub fn affine(v: Vec<f64>, c: f64) -> Self {
        ConstraintSpec::LinearStat(LinearPhi::Affine { v, c })
    }

    fn validate(&mut self, dim: usize) -> Result<(), ConstraintError> {
        match self {
            ConstraintSpec::LinearStat(LinearPhi::Affine { v, .. }) => {
                if v.len() != dim {
                    return Err(ConstraintError::AffineDimension { got: v.len(), dim });
                }
                let norm = norm_sq(v).sqrt();
                if !(norm > 0.0 && norm.is_finite()) {
                    return Err(ConstraintError::AffineDirection);
                }
                // Normalized so that the shift oracle applies.
                if norm != 1.0 {
                    v.iter_mut().for_each(|c| *c /= norm);
                }
            }
            ConstraintSpec::LinearStat(LinearPhi::Cosine { .. }) if dim != 2 => {
                return Err(ConstraintError::CosineDimension(dim));
            }
            _ => {}
        }
        Ok(())
    }
}

impl LinearPhi {
    fn value(&self, x: &[f64]) -> f64 {
        match self {
            LinearPhi::Affine { v, c } => dot(x, v) - c,
            LinearPhi::Cosine { c, k } => c - 0.5 * ((k * x[0]).cos() + (k * x[1]).cos()),
            LinearPhi::LogAbs { c } => 0.5 * norm_sq(x).ln() - c,
        }
    }

    fn grad_into(&self, x: &[f64], scale: f64, out: &mut [f64]) {
        match self {
            LinearPhi::Affine { v, .. } => {
                for (o, vi) in out.iter_mut().zip(v) {
                    *o = scale * vi;
                }
            }
            LinearPhi::Cosine { k, .. } => {
                out[0] = scale * 0.5 * k * (k * x[0]).sin();
                out[1] = scale * 0.5 * k * (k * x[1]).sin();
            }
            LinearPhi::LogAbs { .. } => {
                let r2 = norm_sq(x);
                for (o, xi) in out.iter_mut().zip(x) {
                    *o = scale * xi / r2;
                }
            }
        }
    }

    /// `Δφ` at `x` in dimension `d`.
    pub fn laplacian(&self, x: &[f64]) -> f64 {
        match self {
            LinearPhi::Affine { .. } => 0.0,
            LinearPhi::Cosine { k, .. } => 0.5 * k * k * ((k * x[0]).cos() + (k * x[1]).cos()),
            LinearPhi::LogAbs { .. } => {
                let d = x.len() as f64;
                (d - 2.0) / norm_sq(x)
            }
        }
    }
}

impl PairPhi {
    fn at_zero(&self) -> f64 {
        match *self {
            PairPhi::RadialGap { c } | PairPhi::AxisGap { c } => c,
        }
    }

    /// `φ(xi − xj)`
    fn value(&self, xi: &[f64], xj: &[f64]) -> f64 {
        match *self {
            PairPhi::RadialGap { c } => c - crate::model::dist_sq(xi, xj).sqrt(),
            PairPhi::AxisGap { c } => c - (xi[0] - xj[0]).abs(),
        }
    }

    /// Adds `scale · ∇φ(xi − xj)` to `gi` and subtracts it from `gj`. Zero
    /// subgradient where `φ` has a kink.
    fn accumulate_grad(&self, xi: &[f64], xj: &[f64], scale: f64, gi: &mut [f64], gj: &mut [f64]) {
        match *self {
            PairPhi::RadialGap { .. } => {
                let r = crate::model::dist_sq(xi, xj).sqrt();
                if r == 0.0 {
                    return;
                }
                let f = -scale / r;
                for k in 0..xi.len() {
                    let u = xi[k] - xj[k];
                    gi[k] += f * u;
                    gj[k] -= f * u;
                }
            }
            PairPhi::AxisGap { .. } => {
                let u = xi[0] - xj[0];
                let s = if u > 0.0 {
                    1.0
                } else if u < 0.0 {
                    -1.0
                } else {
                    0.0
                };
                gi[0] -= scale * s;
                gj[0] += scale * s;
            }
        }
    }
}

/// The collection `ξ = (ξ_1, …, ξ_m)`. An empty set is the unconstrained
/// case: the projector is the identity and the Gram determinant is 1.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintSet {
    dim: usize,
    components: Vec<ConstraintSpec>,
}

impl ConstraintSet {
    pub fn new(dim: usize, mut components: Vec<ConstraintSpec>) -> Result<Self, ConstraintError> {
        if components.is_empty() {
            return Err(ConstraintError::Empty);
        }
        if components.len() > MAX_CONSTRAINTS {
            return Err(ConstraintError::TooMany(components.len()));
        }
        for c in &mut components {
            c.validate(dim)?;
        }
        Ok(Self { dim, components })
    }

    pub fn single(dim: usize, component: ConstraintSpec) -> Result<Self, ConstraintError> {
        Self::new(dim, vec![component])
    }

    pub fn unconstrained(dim: usize) -> Self {
        Self { dim, components: Vec::new() }
    }

    pub fn m(&self) -> usize {
        self.components.len()
    }

    pub fn is_unconstrained(&self) -> bool {
        self.components.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn components(&self) -> &[ConstraintSpec] {
        &self.components
    }

    fn check_dim(&self, x: &Configuration) -> Result<(), ConstraintError> {
        if x.dim() != self.dim {
            return Err(ConstraintError::DimensionMismatch { got: x.dim(), expected: self.dim });
        }
        Ok(())
    }

    /// `(ξ_1(x), …, ξ_m(x))`.
    pub fn evaluate(&self, x: &Configuration) -> Result<Vec<f64>, ConstraintError> {
        self.check_dim(x)?;
        self.evaluate_flat(x.as_slice())
    }

    pub(crate) fn evaluate_flat(&self, x: &[f64]) -> Result<Vec<f64>, ConstraintError> {
        self.components.iter().map(|c| self.evaluate_one(c, x)).collect()
    }

    fn evaluate_one(&self, spec: &ConstraintSpec, x: &[f64]) -> Result<f64, ConstraintError> {
        let d = self.dim;
        let n = x.len() / d;
        let nf = n as f64;
        match spec {
            ConstraintSpec::LinearStat(LinearPhi::Affine { v, c }) => {
                Ok(dot(&barycenter_flat(x, d), v) - c)
            }
            ConstraintSpec::LinearStat(phi) => {
                if let LinearPhi::LogAbs { .. } = phi {
                    check_origin(x, d)?;
                }
                Ok(x.chunks_exact(d).map(|p| phi.value(p)).sum::<f64>() / nf)
            }
            ConstraintSpec::QuadStat(phi) => {
                let mut off = 0.0;
                for i in 0..n {
                    let xi = &x[i * d..(i + 1) * d];
                    for j in (i + 1)..n {
                        off += phi.value(xi, &x[j * d..(j + 1) * d]);
                    }
                }
                Ok((nf * phi.at_zero() + 2.0 * off) / (nf * nf))
            }
        }
    }

    /// `∇ξ`, one column of length `d·n` per constraint.
    pub fn jacobian(&self, x: &Configuration) -> Result<Jacobian, ConstraintError> {
        self.check_dim(x)?;
        self.jacobian_flat(x.as_slice())
    }

    pub(crate) fn jacobian_flat(&self, x: &[f64]) -> Result<Jacobian, ConstraintError> {
        let columns = self
            .components
            .iter()
            .map(|c| self.gradient_one(c, x))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Jacobian { rows: x.len(), columns })
    }

    fn gradient_one(&self, spec: &ConstraintSpec, x: &[f64]) -> Result<Vec<f64>, ConstraintError> {
        let d = self.dim;
        let n = x.len() / d;
        let nf = n as f64;
        let mut out = vec![0.0; x.len()];
        match spec {
            ConstraintSpec::LinearStat(phi) => {
                if let LinearPhi::LogAbs { .. } = phi {
                    check_origin(x, d)?;
                }
                for (p, o) in x.chunks_exact(d).zip(out.chunks_exact_mut(d)) {
                    phi.grad_into(p, 1.0 / nf, o);
                }
            }
            ConstraintSpec::QuadStat(phi) => {
                let scale = 2.0 / (nf * nf);
                for i in 0..n {
                    for j in (i + 1)..n {
                        let (head, tail) = out.split_at_mut(j * d);
                        phi.accumulate_grad(
                            &x[i * d..(i + 1) * d],
                            &x[j * d..(j + 1) * d],
                            scale,
                            &mut head[i * d..(i + 1) * d],
                            &mut tail[..d],
                        );
                    }
                }
            }
        }
        Ok(out)
    }

    pub fn gram(&self, x: &Configuration) -> Result<GramMatrix, ConstraintError> {
        Ok(self.jacobian(x)?.gram())
    }

    /// `U_n(x) = −log|det G(x)| / (2β_n)`; zero when unconstrained.
    pub fn correction_energy(&self, x: &Configuration, beta: f64) -> Result<f64, ConstraintError> {
        if self.is_unconstrained() {
            return Ok(0.0);
        }
        Ok(-0.5 * self.gram(x)?.log_det()? / beta)
    }

    /// `Π y = y − ∇ξ G⁻¹ ∇ξᵀ y`.
    pub fn project_momentum(&self, y: &[f64], x: &Configuration) -> Result<Vec<f64>, ConstraintError> {
        if self.is_unconstrained() {
            return Ok(y.to_vec());
        }
        self.jacobian(x)?.project(y)
    }
}

fn check_origin(x: &[f64], d: usize) -> Result<(), ConstraintError> {
    match x.chunks_exact(d).position(|p| norm_sq(p) == 0.0) {
        Some(i) => Err(ConstraintError::LogAbsOrigin(i)),
        None => Ok(()),
    }
}

/// Columns `∇ξ_1, …, ∇ξ_m` of the `(d·n) × m` Jacobian.
#[derive(Debug, Clone, PartialEq)]
pub struct Jacobian {
    rows: usize,
    columns: Vec<Vec<f64>>,
}

impl Jacobian {
    pub fn m(&self) -> usize {
        self.columns.len()
    }

    pub fn column(&self, k: usize) -> &[f64] {
        &self.columns[k]
    }

    pub fn columns(&self) -> &[Vec<f64>] {
        &self.columns
    }

    /// `∇ξᵀ y`
    pub fn transpose_mul(&self, y: &[f64]) -> Vec<f64> {
        self.columns.iter().map(|c| dot(c, y)).collect()
    }

    /// `∇ξ a`
    pub fn mul(&self, a: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.rows];
        self.mul_add(a, 1.0, &mut out);
        out
    }

    /// `out += scale · ∇ξ a`
    pub fn mul_add(&self, a: &[f64], scale: f64, out: &mut [f64]) {
        for (col, &ak) in self.columns.iter().zip(a) {
            let s = scale * ak;
            for (o, c) in out.iter_mut().zip(col) {
                *o += s * c;
            }
        }
    }

    /// `selfᵀ other`, row-major `m × m`.
    pub fn cross(&self, other: &Jacobian) -> Vec<f64> {
        let m = self.m();
        let mut out = vec![0.0; m * m];
        for (i, a) in self.columns.iter().enumerate() {
            for (j, b) in other.columns.iter().enumerate() {
                out[i * m + j] = dot(a, b);
            }
        }
        out
    }

    pub fn gram(&self) -> GramMatrix {
        GramMatrix { dim: self.m(), entries: self.cross(self) }
    }

    /// Frobenius norm.
    pub fn norm(&self) -> f64 {
        self.columns.iter().map(|c| norm_sq(c)).sum::<f64>().sqrt()
    }

    /// Tangent projection of `y` at the point this Jacobian was taken.
    pub fn project(&self, y: &[f64]) -> Result<Vec<f64>, ConstraintError> {
        let mut out = y.to_vec();
        self.project_in_place(&mut out)?;
        Ok(out)
    }

    pub fn project_in_place(&self, y: &mut [f64]) -> Result<(), ConstraintError> {
        if self.columns.is_empty() {
            return Ok(());
        }
        let chol = self.gram().factor()?;
        let a = chol.solve(&self.transpose_mul(y));
        self.mul_add(&a, -1.0, y);
        Ok(())
    }
}

/// Symmetric `m × m` Gram matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix {
    dim: usize,
    entries: Vec<f64>,
}

impl GramMatrix {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.dim + j]
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    fn factor(&self) -> Result<Cholesky, ConstraintError> {
        Cholesky::new(&self.entries, self.dim, GRAM_PIVOT_TOL).ok_or(ConstraintError::DegenerateGram)
    }

    pub fn is_degenerate(&self) -> bool {
        self.log_det().is_err()
    }

    /// `log det G` through the Cholesky factor.
    pub fn log_det(&self) -> Result<f64, ConstraintError> {
        let ld = self.factor()?.log_det();
        if ld < GRAM_DET_FLOOR.ln() {
            return Err(ConstraintError::DegenerateGram);
        }
        Ok(ld)
    }

    /// Determinant by cofactor-free elimination; returns 0 for singular
    /// matrices rather than failing.
    pub fn det(&self) -> f64 {
        match self.factor() {
            Ok(c) => c.log_det().exp(),
            Err(_) => {
                let n = self.dim;
                let mut a = self.entries.clone();
                let mut det = 1.0;
                for col in 0..n {
                    let piv = (col..n)
                        .max_by(|&p, &q| a[p * n + col].abs().total_cmp(&a[q * n + col].abs()))
                        .unwrap_or(col);
                    if a[piv * n + col] == 0.0 {
                        return 0.0;
                    }
                    if piv != col {
                        for k in 0..n {
                            a.swap(col * n + k, piv * n + k);
                        }
                        det = -det;
                    }
                    let p = a[col * n + col];
                    det *= p;
                    for r in (col + 1)..n {
                        let f = a[r * n + col] / p;
                        for k in col..n {
                            a[r * n + k] -= f * a[col * n + k];
                        }
                    }
                }
                det
            }
        }
    }
}

/// Arithmetic mean of the points of a flat configuration. Sums first,
/// then divides.
pub(crate) fn barycenter_flat(x: &[f64], d: usize) -> Vec<f64> {
    let n = x.len() / d;
    let mut s = vec![0.0; d];
    for p in x.chunks_exact(d) {
        for (acc, v) in s.iter_mut().zip(p) {
            *acc += v;
        }
    }
    let nf = n as f64;
    s.iter_mut().for_each(|v| *v /= nf);
    s
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| p * q).sum()
}
