//! The gas itself: pair interaction, confinement, energy and force.
//!
//! Energies are normalized so that they depend on the configuration only
//! through its empirical measure:
//!
//! ```text
//! H(x) = (1/n) Σ_i V(x_i) + (1/n²) Σ_{i≠j} g(x_i − x_j)
//! ```

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("dimension must be at least 1, got {0}")]
    Dimension(usize),
    #[error("need at least 2 particles, got {0}")]
    ParticleCount(usize),
    #[error("inverse temperature must be positive and finite, got {0}")]
    Beta(f64),
    #[error("coulomb interaction requires d >= 2, got d = {0}")]
    CoulombDimension(usize),
    #[error("log1d interaction requires d = 1, got d = {0}")]
    Log1dDimension(usize),
    #[error("radial power confinement requires a > 0 and q > 1, got a = {a}, q = {q}")]
    RadialPower { a: f64, q: f64 },
    #[error("interaction kernel evaluated at non-positive distance {0}")]
    KernelDomain(f64),
    #[error("configuration length {len} is not a multiple of dimension {dim}")]
    ConfigurationShape { len: usize, dim: usize },
    #[error("configuration has {got} particles, model expects {expected}")]
    ParticleMismatch { got: usize, expected: usize },
    #[error("configuration has non-finite coordinate at index {0}")]
    NonFinite(usize),
    #[error("particles {0} and {1} coincide")]
    Coincident(usize, usize),
}

/// Confining potential `V`, always radial.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ConfinementSpec {
    /// `|x|²`
    Quadratic,
    /// `|x|⁴ / 4`
    Quartic,
    /// `(2/3) |x|^{3/2}`
    Weak,
    /// `a |x|^q`
    RadialPower { a: f64, q: f64 },
}

impl ConfinementSpec {
    pub fn validate(&self) -> Result<(), ModelError> {
        if let ConfinementSpec::RadialPower { a, q } = *self {
            if !(a > 0.0 && q > 1.0 && a.is_finite() && q.is_finite()) {
                return Err(ModelError::RadialPower { a, q });
            }
        }
        Ok(())
    }

    /// Value as a function of the radius `r = |x|`.
    pub fn radial_value(&self, r: f64) -> f64 {
        match *self {
            ConfinementSpec::Quadratic => r * r,
            ConfinementSpec::Quartic => {
                let r2 = r * r;
                0.25 * r2 * r2
            }
            ConfinementSpec::Weak => (2.0 / 3.0) * r * r.sqrt(),
            ConfinementSpec::RadialPower { a, q } => a * r.powf(q),
        }
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        let r2 = norm_sq(x);
        match *self {
            ConfinementSpec::Quadratic => r2,
            ConfinementSpec::Quartic => 0.25 * r2 * r2,
            _ => self.radial_value(r2.sqrt()),
        }
    }

    /// `∇V(x)` written into `out`. At the origin the non-smooth variants
    /// use the zero subgradient.
    pub fn grad_into(&self, x: &[f64], out: &mut [f64]) {
        let r2 = norm_sq(x);
        let scale = match *self {
            ConfinementSpec::Quadratic => 2.0,
            ConfinementSpec::Quartic => r2,
            ConfinementSpec::Weak => {
                if r2 == 0.0 {
                    0.0
                } else {
                    r2.sqrt().sqrt().recip()
                }
            }
            ConfinementSpec::RadialPower { a, q } => {
                if r2 == 0.0 {
                    0.0
                } else {
                    a * q * r2.powf(0.5 * q - 1.0)
                }
            }
        };
        for (o, xi) in out.iter_mut().zip(x) {
            *o = scale * xi;
        }
    }

    pub fn grad(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; x.len()];
        self.grad_into(x, &mut out);
        out
    }

    /// `ΔV` at radius `r` in dimension `d`. Infinite where the Laplacian
    /// blows up (the weak potential at the origin).
    pub fn laplacian(&self, r: f64, d: usize) -> f64 {
        let d = d as f64;
        match *self {
            ConfinementSpec::Quadratic => 2.0 * d,
            ConfinementSpec::Quartic => (d + 2.0) * r * r,
            ConfinementSpec::Weak => {
                if r == 0.0 {
                    f64::INFINITY
                } else {
                    (d - 0.5) / r.sqrt()
                }
            }
            ConfinementSpec::RadialPower { a, q } => {
                let coeff = a * q * (q + d - 2.0);
                if q < 2.0 && r == 0.0 {
                    f64::INFINITY
                } else {
                    coeff * r.powf(q - 2.0)
                }
            }
        }
    }
}

/// Pair interaction `g`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InteractionSpec {
    /// Fundamental solution of `−Δg = c_d δ₀`: `log(1/r)` in d = 2,
    /// `1/((d−2) r^{d−2})` for d ≥ 3.
    Coulomb,
    /// `−log r` on the line.
    Log1D,
}

/// `g` at distance `r`.
pub fn interaction_kernel(r: f64, spec: InteractionSpec, d: usize) -> Result<f64, ModelError> {
    if !(r > 0.0) {
        return Err(ModelError::KernelDomain(r));
    }
    Ok(match spec {
        InteractionSpec::Log1D => -r.ln(),
        InteractionSpec::Coulomb if d == 2 => -r.ln(),
        InteractionSpec::Coulomb => {
            let k = (d - 2) as f64;
            1.0 / (k * r.powi(d as i32 - 2))
        }
    })
}

/// A configuration of `n` points in `R^d`, stored flat
/// (`[x_1, …, x_n]`, each block of length `d`).
#[derive(Debug, Clone, PartialEq)]
pub struct Configuration {
    dim: usize,
    coords: Vec<f64>,
}

impl Configuration {
    pub fn new(dim: usize, coords: Vec<f64>) -> Result<Self, ModelError> {
        if dim == 0 {
            return Err(ModelError::Dimension(dim));
        }
        if !coords.len().is_multiple_of(dim) {
            return Err(ModelError::ConfigurationShape { len: coords.len(), dim });
        }
        if let Some(i) = coords.iter().position(|c| !c.is_finite()) {
            return Err(ModelError::NonFinite(i));
        }
        Ok(Self { dim, coords })
    }

    pub fn from_points(points: &[Vec<f64>]) -> Result<Self, ModelError> {
        let dim = points.first().map_or(0, Vec::len);
        let coords: Vec<f64> = points.iter().flatten().copied().collect();
        Self::new(dim, coords)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> std::slice::ChunksExact<'_, f64> {
        self.coords.chunks_exact(self.dim)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.coords
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.coords
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.coords
    }
}

/// Gas parameters. Construct through [`GasModel::new`], which enforces
/// the dimension/interaction compatibility rules.
#[derive(Debug, Clone, PartialEq)]
pub struct GasModel {
    dim: usize,
    n: usize,
    beta: f64,
    confinement: ConfinementSpec,
    interaction: InteractionSpec,
}

impl GasModel {
    pub fn new(
        dim: usize,
        n: usize,
        beta: f64,
        confinement: ConfinementSpec,
        interaction: InteractionSpec,
    ) -> Result<Self, ModelError> {
        if dim == 0 {
            return Err(ModelError::Dimension(dim));
        }
        if n < 2 {
            return Err(ModelError::ParticleCount(n));
        }
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(ModelError::Beta(beta));
        }
        match interaction {
            InteractionSpec::Coulomb if dim < 2 => return Err(ModelError::CoulombDimension(dim)),
            InteractionSpec::Log1D if dim != 1 => return Err(ModelError::Log1dDimension(dim)),
            _ => {}
        }
        confinement.validate()?;
        Ok(Self { dim, n, beta, confinement, interaction })
    }

    /// Same as [`GasModel::new`] with `β_n = n²`.
    pub fn with_n_squared_beta(
        dim: usize,
        n: usize,
        confinement: ConfinementSpec,
        interaction: InteractionSpec,
    ) -> Result<Self, ModelError> {
        Self::new(dim, n, (n * n) as f64, confinement, interaction)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn confinement(&self) -> ConfinementSpec {
        self.confinement
    }

    pub fn interaction(&self) -> InteractionSpec {
        self.interaction
    }

    /// Length of the flat position/momentum vectors, `d·n`.
    pub fn phase_dim(&self) -> usize {
        self.dim * self.n
    }

    pub fn check(&self, config: &Configuration) -> Result<(), ModelError> {
        if config.dim() != self.dim {
            return Err(ModelError::ConfigurationShape { len: config.as_slice().len(), dim: self.dim });
        }
        if config.len() != self.n {
            return Err(ModelError::ParticleMismatch { got: config.len(), expected: self.n });
        }
        Ok(())
    }

    /// `H_n(x)`. Returns `+∞` when two particles coincide exactly.
    pub fn hamiltonian(&self, config: &Configuration) -> f64 {
        self.hamiltonian_flat(config.as_slice())
    }

    pub(crate) fn hamiltonian_flat(&self, x: &[f64]) -> f64 {
        let d = self.dim;
        let n = self.n;
        let nf = n as f64;
        let confinement: f64 = x.chunks_exact(d).map(|p| self.confinement.value(p)).sum();

        let mut pair = 0.0;
        for i in 0..n {
            let xi = &x[i * d..(i + 1) * d];
            for j in (i + 1)..n {
                let xj = &x[j * d..(j + 1) * d];
                let r2 = dist_sq(xi, xj);
                if r2 == 0.0 {
                    return f64::INFINITY;
                }
                pair += self.kernel_from_sq(r2);
            }
        }
        confinement / nf + 2.0 * pair / (nf * nf)
    }

    /// Interaction part `(1/n²) Σ_{i≠j} g(x_i − x_j)` alone.
    pub fn interaction_energy(&self, config: &Configuration) -> f64 {
        let nf = self.n as f64;
        let v: f64 = config.points().map(|p| self.confinement.value(p)).sum();
        self.hamiltonian(config) - v / nf
    }

    #[inline]
    fn kernel_from_sq(&self, r2: f64) -> f64 {
        match self.interaction {
            InteractionSpec::Log1D => -0.5 * r2.ln(),
            InteractionSpec::Coulomb => match self.dim {
                2 => -0.5 * r2.ln(),
                3 => r2.sqrt().recip(),
                d => {
                    let k = (d - 2) as f64;
                    1.0 / (k * r2.powf(0.5 * k))
                }
            },
        }
    }

    /// `g'(r)/r`, so that `∇_x g(x) = x · g'(r)/r`.
    #[inline]
    fn kernel_radial_factor(&self, r2: f64) -> f64 {
        match self.interaction {
            InteractionSpec::Log1D => -1.0 / r2,
            InteractionSpec::Coulomb => match self.dim {
                2 => -1.0 / r2,
                3 => -1.0 / (r2 * r2.sqrt()),
                d => -1.0 / r2.powf(0.5 * d as f64),
            },
        }
    }

    /// Exact gradient of [`GasModel::hamiltonian`], flat of length `d·n`.
    pub fn hamiltonian_grad(&self, config: &Configuration) -> Result<Vec<f64>, ModelError> {
        let mut out = vec![0.0; self.phase_dim()];
        self.hamiltonian_grad_into(config.as_slice(), &mut out)?;
        Ok(out)
    }

    /// Pairwise loop over `i < j` with symmetric accumulation; the
    /// summation order is fixed so results are bit-reproducible.
    pub(crate) fn hamiltonian_grad_into(&self, x: &[f64], out: &mut [f64]) -> Result<(), ModelError> {
        let d = self.dim;
        let n = self.n;
        let nf = n as f64;
        let conf_scale = 1.0 / nf;
        let pair_scale = 2.0 / (nf * nf);

        for (p, o) in x.chunks_exact(d).zip(out.chunks_exact_mut(d)) {
            self.confinement.grad_into(p, o);
            for v in o.iter_mut() {
                *v *= conf_scale;
            }
        }

        let mut diff = [0.0f64; 8];
        let mut diff_vec;
        let diff: &mut [f64] = if d <= 8 {
            &mut diff[..d]
        } else {
            diff_vec = vec![0.0; d];
            &mut diff_vec
        };
        for i in 0..n {
            for j in (i + 1)..n {
                let mut r2 = 0.0;
                for k in 0..d {
                    let u = x[i * d + k] - x[j * d + k];
                    diff[k] = u;
                    r2 += u * u;
                }
                if r2 == 0.0 {
                    return Err(ModelError::Coincident(i, j));
                }
                let f = pair_scale * self.kernel_radial_factor(r2);
                for k in 0..d {
                    let c = f * diff[k];
                    out[i * d + k] += c;
                    out[j * d + k] -= c;
                }
            }
        }
        Ok(())
    }
}

#[inline]
pub(crate) fn norm_sq(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

#[inline]
pub(crate) fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum()
}
