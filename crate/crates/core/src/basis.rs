//! Discrete function spaces on the unit interval with homogeneous Dirichlet
//! boundary conditions.
//!
//! Two families are provided:
//!
//! * **Spectral**: the span of the first `N` Dirichlet eigenfunctions
//!   `e_k(x) = sqrt(2) sin(k pi x)` of the negative Laplacian, with
//!   eigenvalues `lambda_k = (k pi)^2`.  Coefficient vectors are expansion
//!   coefficients in this orthonormal basis, so the discrete L2 norm is the
//!   Euclidean norm.
//! * **Finite elements**: continuous piecewise-linear hat functions on a
//!   uniform mesh of `cells` cells; coefficients are interior nodal values.
//!
//! Nonlinear (Nemytskii) terms are evaluated pseudo-spectrally: synthesise the
//! field on a composite-midpoint quadrature grid, apply the pointwise map,
//! and project back.  The composite midpoint rule on `P` uniform points
//! integrates products `e_k e_l` exactly (in exact arithmetic) whenever
//! `k + l < 2P`, which keeps discrete projections orthogonal.

use std::sync::Arc;

use crate::error::{Error, Result};

/// Dirichlet eigenvalue `lambda_k = (k pi)^2` on the unit interval.
pub fn eigenvalue(k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::invalid("eigenpair index k must be >= 1"));
    }
    let kpi = k as f64 * std::f64::consts::PI;
    Ok(kpi * kpi)
}

/// Eigenpair `(lambda_k, e_k)` of the Dirichlet Laplacian: the eigenvalue and
/// an evaluator for the L2-normalised eigenfunction `sqrt(2) sin(k pi x)`.
pub fn eigenpair(k: usize) -> Result<(f64, impl Fn(f64) -> f64)> {
    let lambda = eigenvalue(k)?;
    let kpi = k as f64 * std::f64::consts::PI;
    Ok((lambda, move |x: f64| {
        std::f64::consts::SQRT_2 * (kpi * x).sin()
    }))
}

/// Identifies the discrete space a [`Field`] lives in.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BasisTag {
    /// Span of the first `modes` Dirichlet eigenfunctions.
    Spectral { modes: usize },
    /// Piecewise-linear finite elements on `cells` uniform cells.
    Fem { cells: usize },
}

impl BasisTag {
    /// Number of degrees of freedom (spectral modes or interior nodes).
    pub fn dim(&self) -> usize {
        match *self {
            BasisTag::Spectral { modes } => modes,
            BasisTag::Fem { cells } => cells - 1,
        }
    }
}

/// A function in one of the discrete spaces, stored as its coefficient
/// vector: eigenfunction coefficients (spectral) or interior nodal values
/// (finite elements).
#[derive(Clone, Debug, PartialEq)]
pub struct Field {
    tag: BasisTag,
    coeffs: Vec<f64>,
}

impl Field {
    /// Wraps a coefficient vector, checking dimension and finiteness.
    pub fn new(tag: BasisTag, coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.len() != tag.dim() {
            return Err(Error::invalid(format!(
                "coefficient count {} does not match basis dimension {}",
                coeffs.len(),
                tag.dim()
            )));
        }
        if !coeffs.iter().all(|c| c.is_finite()) {
            return Err(Error::numeric("field coefficients must be finite"));
        }
        Ok(Field { tag, coeffs })
    }

    pub fn zeros(tag: BasisTag) -> Self {
        Field {
            tag,
            coeffs: vec![0.0; tag.dim()],
        }
    }

    pub fn tag(&self) -> BasisTag {
        self.tag
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<f64> {
        self.coeffs
    }

    #[cfg(test)]
    pub(crate) fn coeffs_mut(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    /// Coefficient-wise sum; both fields must share a basis.
    pub fn add(&self, other: &Field) -> Result<Field> {
        if self.tag != other.tag {
            return Err(Error::invalid("cannot add fields from different bases"));
        }
        let coeffs = self
            .coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| a + b)
            .collect();
        Ok(Field {
            tag: self.tag,
            coeffs,
        })
    }

    /// In-place `self += scale * other` (same basis required).
    pub fn axpy(&mut self, scale: f64, other: &Field) -> Result<()> {
        if self.tag != other.tag {
            return Err(Error::invalid("cannot combine fields from different bases"));
        }
        for (a, b) in self.coeffs.iter_mut().zip(&other.coeffs) {
            *a += scale * b;
        }
        Ok(())
    }

    pub fn scale(&mut self, s: f64) {
        for c in &mut self.coeffs {
            *c *= s;
        }
    }
}

/// Sobolev norm of a spectral field: `sqrt(sum_k lambda_k^theta c_k^2)`.
///
/// `theta = 0` is the L2 norm, `theta = 1` the H^1_0 seminorm, `theta = 2`
/// the norm induced by the Dirichlet Laplacian.  Finite-element fields must
/// be transferred to a spectral basis first.
pub fn sobolev_norm(field: &Field, theta: f64) -> Result<f64> {
    match field.tag {
        BasisTag::Spectral { .. } => {
            let mut acc = 0.0;
            for (i, c) in field.coeffs.iter().enumerate() {
                let lambda = eigenvalue(i + 1).expect("index >= 1");
                acc += lambda.powf(theta) * c * c;
            }
            Ok(acc.sqrt())
        }
        BasisTag::Fem { .. } => Err(Error::invalid(
            "sobolev_norm expects a spectral field; transfer finite-element fields first",
        )),
    }
}

// ---------------------------------------------------------------------------
// Tridiagonal algebra
// ---------------------------------------------------------------------------

/// Symmetric tridiagonal matrix (uniform-mesh mass and stiffness matrices,
/// and the finite-element Newton Jacobians built from them).
#[derive(Clone, Debug)]
pub struct Tridiagonal {
    diag: Vec<f64>,
    off: Vec<f64>,
}

impl Tridiagonal {
    pub fn new(diag: Vec<f64>, off: Vec<f64>) -> Result<Self> {
        if diag.is_empty() || off.len() + 1 != diag.len() {
            return Err(Error::invalid(
                "tridiagonal matrix needs n diagonal and n-1 off-diagonal entries",
            ));
        }
        Ok(Tridiagonal { diag, off })
    }

    /// Mass matrix of piecewise-linear elements on `cells` uniform cells:
    /// diagonal `2h/3`, off-diagonal `h/6` (interior nodes only).
    pub fn mass(cells: usize) -> Result<Self> {
        let (n, h) = interior_dims(cells)?;
        Ok(Tridiagonal {
            diag: vec![2.0 * h / 3.0; n],
            off: vec![h / 6.0; n.saturating_sub(1)],
        })
    }

    /// Stiffness matrix of piecewise-linear elements on `cells` uniform
    /// cells: diagonal `2/h`, off-diagonal `-1/h`.
    pub fn stiffness(cells: usize) -> Result<Self> {
        let (n, h) = interior_dims(cells)?;
        Ok(Tridiagonal {
            diag: vec![2.0 / h; n],
            off: vec![-1.0 / h; n.saturating_sub(1)],
        })
    }

    pub fn n(&self) -> usize {
        self.diag.len()
    }

    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    pub fn off(&self) -> &[f64] {
        &self.off
    }

    /// Matrix-vector product.
    pub fn matvec(&self, v: &[f64]) -> Vec<f64> {
        let n = self.n();
        assert_eq!(v.len(), n, "dimension mismatch in tridiagonal matvec");
        let mut out = vec![0.0; n];
        for i in 0..n {
            let mut s = self.diag[i] * v[i];
            if i > 0 {
                s += self.off[i - 1] * v[i - 1];
            }
            if i + 1 < n {
                s += self.off[i] * v[i + 1];
            }
            out[i] = s;
        }
        out
    }

    /// Linear combination `a*self + b*other` (same dimension).
    pub fn combine(&self, a: f64, other: &Tridiagonal, b: f64) -> Result<Tridiagonal> {
        if self.n() != other.n() {
            return Err(Error::invalid("tridiagonal dimension mismatch"));
        }
        Ok(Tridiagonal {
            diag: self
                .diag
                .iter()
                .zip(&other.diag)
                .map(|(x, y)| a * x + b * y)
                .collect(),
            off: self
                .off
                .iter()
                .zip(&other.off)
                .map(|(x, y)| a * x + b * y)
                .collect(),
        })
    }

    /// LDL^T factorisation; fails with a numeric error when the matrix is
    /// not positive definite.
    pub fn factor(&self) -> Result<TridiagonalFactor> {
        let n = self.n();
        let mut d = vec![0.0; n];
        let mut l = vec![0.0; n.saturating_sub(1)];
        d[0] = self.diag[0];
        for i in 0..n - 1 {
            if d[i] <= 0.0 || !d[i].is_finite() {
                return Err(Error::numeric(format!(
                    "tridiagonal matrix is not positive definite (pivot {} at row {})",
                    d[i], i
                )));
            }
            l[i] = self.off[i] / d[i];
            d[i + 1] = self.diag[i + 1] - l[i] * self.off[i];
        }
        if d[n - 1] <= 0.0 || !d[n - 1].is_finite() {
            return Err(Error::numeric(format!(
                "tridiagonal matrix is not positive definite (pivot {} at row {})",
                d[n - 1],
                n - 1
            )));
        }
        Ok(TridiagonalFactor { d, l })
    }
}

fn interior_dims(cells: usize) -> Result<(usize, f64)> {
    if cells < 2 {
        return Err(Error::invalid(
            "a finite-element mesh needs at least 2 cells (one interior node)",
        ));
    }
    Ok((cells - 1, 1.0 / cells as f64))
}

/// LDL^T factor of a symmetric positive-definite tridiagonal matrix.
#[derive(Clone, Debug)]
pub struct TridiagonalFactor {
    d: Vec<f64>,
    l: Vec<f64>,
}

impl TridiagonalFactor {
    /// Solves `A x = rhs` using the stored factorisation.
    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let n = self.d.len();
        assert_eq!(rhs.len(), n, "dimension mismatch in tridiagonal solve");
        let mut x = rhs.to_vec();
        self.solve_in_place(&mut x);
        x
    }

    pub fn solve_in_place(&self, x: &mut [f64]) {
        let n = self.d.len();
        for i in 1..n {
            x[i] -= self.l[i - 1] * x[i - 1];
        }
        for i in 0..n {
            x[i] /= self.d[i];
        }
        for i in (0..n - 1).rev() {
            x[i] -= self.l[i] * x[i + 1];
        }
    }
}

// ---------------------------------------------------------------------------
// Spectral basis
// ---------------------------------------------------------------------------

/// Spectral Galerkin space with precomputed quadrature tables.
///
/// The quadrature is the composite midpoint rule on `n_quad` uniform points.
/// For a drift of polynomial growth exponent `q` the canonical choice is
/// `n_quad = max(4 q modes, 1024)`, which integrates the nonlinear products
/// appearing in residuals and Jacobians exactly up to rounding.
#[derive(Debug)]
pub struct SpectralBasis {
    modes: usize,
    points: Vec<f64>,
    weight: f64,
    eigs: Vec<f64>,
    /// `e_k(x_p)`, row-major in `p` (`n_quad x modes`): synthesis table.
    synth: Vec<f64>,
    /// `e_k(x_p)`, row-major in `k` (`modes x n_quad`): analysis table.
    analysis: Vec<f64>,
    /// `cos(m pi x_p)` for `m = 0..=2*modes`, row-major in `m`: used to
    /// assemble Galerkin Jacobians of pointwise multipliers.
    cosine: Vec<f64>,
}

impl SpectralBasis {
    /// Basis with an explicit quadrature size.
    pub fn with_quadrature(modes: usize, n_quad: usize) -> Result<Arc<Self>> {
        if modes == 0 {
            return Err(Error::invalid("a spectral basis needs at least one mode"));
        }
        if n_quad < 2 * modes {
            return Err(Error::invalid(format!(
                "quadrature with {n_quad} points cannot resolve {modes} modes \
                 (need at least {})",
                2 * modes
            )));
        }
        let p = n_quad;
        let points: Vec<f64> = (0..p).map(|i| (i as f64 + 0.5) / p as f64).collect();
        let eigs: Vec<f64> = (1..=modes)
            .map(|k| eigenvalue(k).expect("k >= 1"))
            .collect();
        let mut synth = vec![0.0; p * modes];
        let mut analysis = vec![0.0; modes * p];
        for (ip, &x) in points.iter().enumerate() {
            for k in 1..=modes {
                let v = std::f64::consts::SQRT_2 * (k as f64 * std::f64::consts::PI * x).sin();
                synth[ip * modes + (k - 1)] = v;
                analysis[(k - 1) * p + ip] = v;
            }
        }
        let mut cosine = vec![0.0; (2 * modes + 1) * p];
        for m in 0..=2 * modes {
            for (ip, &x) in points.iter().enumerate() {
                cosine[m * p + ip] = (m as f64 * std::f64::consts::PI * x).cos();
            }
        }
        Ok(Arc::new(SpectralBasis {
            modes,
            points,
            weight: 1.0 / p as f64,
            eigs,
            synth,
            analysis,
            cosine,
        }))
    }

    /// Basis sized for a drift with growth exponent `q`:
    /// `n_quad = max(4 q modes, 1024)`.
    pub fn for_growth(modes: usize, growth_exponent: u32) -> Result<Arc<Self>> {
        let n_quad = (4 * growth_exponent as usize * modes).max(1024);
        Self::with_quadrature(modes, n_quad)
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn n_quad(&self) -> usize {
        self.points.len()
    }

    pub fn quad_points(&self) -> &[f64] {
        &self.points
    }

    pub fn quad_weight(&self) -> f64 {
        self.weight
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigs
    }

    /// Synthesises the field on the quadrature grid (`values[p] = u(x_p)`).
    pub fn synthesise(&self, coeffs: &[f64], values: &mut [f64]) {
        let n = self.modes;
        assert_eq!(coeffs.len(), n);
        assert_eq!(values.len(), self.points.len());
        for (ip, out) in values.iter_mut().enumerate() {
            let row = &self.synth[ip * n..(ip + 1) * n];
            let mut s = 0.0;
            for (e, c) in row.iter().zip(coeffs) {
                s += e * c;
            }
            *out = s;
        }
    }

    /// L2 projection of grid values onto the basis
    /// (`coeffs[k] = w * sum_p values[p] e_k(x_p)`).
    pub fn analyse(&self, values: &[f64], coeffs: &mut [f64]) {
        let p = self.points.len();
        assert_eq!(values.len(), p);
        assert_eq!(coeffs.len(), self.modes);
        for (k, out) in coeffs.iter_mut().enumerate() {
            let row = &self.analysis[k * p..(k + 1) * p];
            let mut s = 0.0;
            for (e, v) in row.iter().zip(values) {
                s += e * v;
            }
            *out = self.weight * s;
        }
    }

    /// Cosine moments `a_m = w * sum_p values[p] cos(m pi x_p)` for
    /// `m = 0..=2*modes`.  Because `e_k e_l = cos((k-l)pi x) - cos((k+l)pi x)`,
    /// the Galerkin matrix of the pointwise multiplier `values` is
    /// `B[k][l] = a_{|k-l|} - a_{k+l}`; this assembles it in `O(modes^2)`
    /// after a single grid pass.
    pub fn cosine_moments(&self, values: &[f64], moments: &mut [f64]) {
        let p = self.points.len();
        assert_eq!(values.len(), p);
        assert_eq!(moments.len(), 2 * self.modes + 1);
        for (m, out) in moments.iter_mut().enumerate() {
            let row = &self.cosine[m * p..(m + 1) * p];
            let mut s = 0.0;
            for (c, v) in row.iter().zip(values) {
                s += c * v;
            }
            *out = self.weight * s;
        }
    }
}

// ---------------------------------------------------------------------------
// Finite-element mesh
// ---------------------------------------------------------------------------

/// Uniform piecewise-linear finite-element mesh with assembled mass and
/// stiffness matrices and an 8-point-per-cell quadrature on midpoint nodes.
///
/// The quadrature nodes are the 8 uniform midpoints of each cell; the weights
/// are the interpolatory (Newton-Cotes-type) weights on those nodes, which
/// are all positive and integrate polynomials of degree <= 7 exactly.  Hat
/// products (degree 2) and cubic Nemytskii loads (degree 4) are therefore
/// integrated exactly, so discrete projections are exact projections.
#[derive(Debug)]
pub struct FemMesh {
    cells: usize,
    h: f64,
    points: Vec<f64>,
    weights: Vec<f64>,
    mass: Tridiagonal,
    stiffness: Tridiagonal,
    mass_factor: TridiagonalFactor,
}

pub const FEM_QUAD_PER_CELL: usize = 8;

/// Interpolatory weights on the `n` uniform midpoint nodes of `[0, 1]`,
/// computed from the Vandermonde moment system (exact for degree < n).
fn midpoint_interpolatory_weights(n: usize) -> Vec<f64> {
    let nodes: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
    // Dense Vandermonde system sum_i w_i t_i^m = 1/(m+1), m = 0..n-1,
    // solved by Gaussian elimination with partial pivoting.
    let mut a = vec![0.0; n * n];
    let mut b = vec![0.0; n];
    for m in 0..n {
        for (i, t) in nodes.iter().enumerate() {
            a[m * n + i] = t.powi(m as i32);
        }
        b[m] = 1.0 / (m as f64 + 1.0);
    }
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&r, &s| {
                a[r * n + col]
                    .abs()
                    .total_cmp(&a[s * n + col].abs())
            })
            .expect("non-empty pivot range");
        if pivot != col {
            for j in 0..n {
                a.swap(col * n + j, pivot * n + j);
            }
            b.swap(col, pivot);
        }
        let p = a[col * n + col];
        for row in col + 1..n {
            let f = a[row * n + col] / p;
            if f == 0.0 {
                continue;
            }
            for j in col..n {
                a[row * n + j] -= f * a[col * n + j];
            }
            b[row] -= f * b[col];
        }
    }
    let mut w = vec![0.0; n];
    for row in (0..n).rev() {
        let mut s = b[row];
        for j in row + 1..n {
            s -= a[row * n + j] * w[j];
        }
        w[row] = s / a[row * n + row];
    }
    w
}

impl FemMesh {
    pub fn new(cells: usize) -> Result<Arc<Self>> {
        let (_, h) = interior_dims(cells)?;
        let p = FEM_QUAD_PER_CELL * cells;
        let points: Vec<f64> = (0..p).map(|i| (i as f64 + 0.5) / p as f64).collect();
        let wref = midpoint_interpolatory_weights(FEM_QUAD_PER_CELL);
        let weights: Vec<f64> = (0..p).map(|i| wref[i % FEM_QUAD_PER_CELL] * h).collect();
        let mass = Tridiagonal::mass(cells)?;
        let stiffness = Tridiagonal::stiffness(cells)?;
        let mass_factor = mass.factor()?;
        Ok(Arc::new(FemMesh {
            cells,
            h,
            points,
            weights,
            mass,
            stiffness,
            mass_factor,
        }))
    }

    pub fn cells(&self) -> usize {
        self.cells
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn n_nodes(&self) -> usize {
        self.cells - 1
    }

    pub fn quad_points(&self) -> &[f64] {
        &self.points
    }

    pub fn quad_weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn mass(&self) -> &Tridiagonal {
        &self.mass
    }

    pub fn stiffness(&self) -> &Tridiagonal {
        &self.stiffness
    }

    pub fn mass_factor(&self) -> &TridiagonalFactor {
        &self.mass_factor
    }

    /// Piecewise-linear synthesis on the quadrature grid.
    pub fn synthesise(&self, nodal: &[f64], values: &mut [f64]) {
        let n = self.n_nodes();
        assert_eq!(nodal.len(), n);
        assert_eq!(values.len(), self.points.len());
        let q = FEM_QUAD_PER_CELL;
        for cell in 0..self.cells {
            let left = if cell == 0 { 0.0 } else { nodal[cell - 1] };
            let right = if cell + 1 > n { 0.0 } else { nodal[cell] };
            for j in 0..q {
                let xi = (j as f64 + 0.5) / q as f64;
                values[cell * q + j] = left * (1.0 - xi) + right * xi;
            }
        }
    }

    /// Load vector `load[i] = sum_p w_p values[p] phi_i(x_p)`.
    pub fn load_vector(&self, values: &[f64], load: &mut [f64]) {
        let n = self.n_nodes();
        assert_eq!(values.len(), self.points.len());
        assert_eq!(load.len(), n);
        load.iter_mut().for_each(|v| *v = 0.0);
        let q = FEM_QUAD_PER_CELL;
        for cell in 0..self.cells {
            for j in 0..q {
                let xi = (j as f64 + 0.5) / q as f64;
                let idx = cell * q + j;
                let v = self.weights[idx] * values[idx];
                if cell >= 1 {
                    load[cell - 1] += v * (1.0 - xi);
                }
                if cell < n {
                    load[cell] += v * xi;
                }
            }
        }
    }

    /// Galerkin matrix of a pointwise multiplier: tridiagonal
    /// `B[i][j] = sum_p w_p values[p] phi_i(x_p) phi_j(x_p)`.
    pub fn multiplier_matrix(&self, values: &[f64]) -> Tridiagonal {
        let n = self.n_nodes();
        assert_eq!(values.len(), self.points.len());
        let mut diag = vec![0.0; n];
        let mut off = vec![0.0; n.saturating_sub(1)];
        let q = FEM_QUAD_PER_CELL;
        for cell in 0..self.cells {
            for j in 0..q {
                let xi = (j as f64 + 0.5) / q as f64;
                let idx = cell * q + j;
                let v = self.weights[idx] * values[idx];
                let (wl, wr) = (1.0 - xi, xi);
                if cell >= 1 {
                    diag[cell - 1] += v * wl * wl;
                }
                if cell < n {
                    diag[cell] += v * wr * wr;
                }
                if cell >= 1 && cell < n {
                    off[cell - 1] += v * wl * wr;
                }
            }
        }
        Tridiagonal { diag, off }
    }
}

// ---------------------------------------------------------------------------
// Space handle
// ---------------------------------------------------------------------------

/// A handle over either discrete space, exposing the operations the schemes
/// and studies need without caring which family is underneath.
#[derive(Clone, Debug)]
pub enum Space {
    Spectral(Arc<SpectralBasis>),
    Fem(Arc<FemMesh>),
}

impl Space {
    pub fn tag(&self) -> BasisTag {
        match self {
            Space::Spectral(b) => BasisTag::Spectral { modes: b.modes() },
            Space::Fem(m) => BasisTag::Fem { cells: m.cells() },
        }
    }

    pub fn dim(&self) -> usize {
        self.tag().dim()
    }

    pub fn quad_points(&self) -> &[f64] {
        match self {
            Space::Spectral(b) => b.quad_points(),
            Space::Fem(m) => m.quad_points(),
        }
    }

    /// Quadrature of grid values: `sum_p w_p values[p]`.
    pub fn integrate_values(&self, values: &[f64]) -> f64 {
        match self {
            Space::Spectral(b) => {
                b.quad_weight() * values.iter().sum::<f64>()
            }
            Space::Fem(m) => m
                .quad_weights()
                .iter()
                .zip(values)
                .map(|(w, v)| w * v)
                .sum(),
        }
    }

    fn check_tag(&self, field: &Field) -> Result<()> {
        if field.tag() != self.tag() {
            return Err(Error::invalid(format!(
                "field tagged {:?} used with space {:?}",
                field.tag(),
                self.tag()
            )));
        }
        Ok(())
    }

    /// L2 projection of a function given by an evaluator.
    pub fn project(&self, f: impl Fn(f64) -> f64) -> Result<Field> {
        let values: Vec<f64> = self.quad_points().iter().map(|&x| f(x)).collect();
        self.project_values(&values)
    }

    /// L2 projection of values sampled on this space's quadrature grid.
    pub fn project_values(&self, values: &[f64]) -> Result<Field> {
        if values.len() != self.quad_points().len() {
            return Err(Error::invalid(
                "value count does not match the quadrature grid",
            ));
        }
        let mut coeffs = vec![0.0; self.dim()];
        match self {
            Space::Spectral(b) => b.analyse(values, &mut coeffs),
            Space::Fem(m) => {
                m.load_vector(values, &mut coeffs);
                m.mass_factor().solve_in_place(&mut coeffs);
            }
        }
        Field::new(self.tag(), coeffs)
    }

    /// Synthesises a field on this space's quadrature grid.
    pub fn values_on_quad(&self, field: &Field) -> Result<Vec<f64>> {
        self.check_tag(field)?;
        let mut values = vec![0.0; self.quad_points().len()];
        match self {
            Space::Spectral(b) => b.synthesise(field.coeffs(), &mut values),
            Space::Fem(m) => m.synthesise(field.coeffs(), &mut values),
        }
        Ok(values)
    }

    /// Evaluates a field at a point of `[0, 1]`.  Boundary values are exactly
    /// zero by construction; points outside the closed interval are rejected.
    pub fn evaluate(&self, field: &Field, x: f64) -> Result<f64> {
        self.check_tag(field)?;
        if !(0.0..=1.0).contains(&x) {
            return Err(Error::invalid(format!(
                "evaluation point {x} lies outside the domain [0, 1]"
            )));
        }
        if x == 0.0 || x == 1.0 {
            return Ok(0.0);
        }
        match self {
            Space::Spectral(_) => {
                let mut s = 0.0;
                for (i, c) in field.coeffs().iter().enumerate() {
                    let kpi = (i + 1) as f64 * std::f64::consts::PI;
                    s += c * std::f64::consts::SQRT_2 * (kpi * x).sin();
                }
                Ok(s)
            }
            Space::Fem(m) => {
                let n = m.n_nodes();
                let cell = ((x * m.cells() as f64) as usize).min(m.cells() - 1);
                let xi = x / m.h() - cell as f64;
                let c = field.coeffs();
                let left = if cell == 0 { 0.0 } else { c[cell - 1] };
                let right = if cell + 1 > n { 0.0 } else { c[cell] };
                Ok(left * (1.0 - xi) + right * xi)
            }
        }
    }

    /// Discrete L2 norm: Euclidean norm of spectral coefficients, or
    /// `sqrt(c^T M c)` for finite elements.
    pub fn l2_norm(&self, field: &Field) -> Result<f64> {
        self.check_tag(field)?;
        match self {
            Space::Spectral(_) => {
                Ok(field.coeffs().iter().map(|c| c * c).sum::<f64>().sqrt())
            }
            Space::Fem(m) => {
                let mv = m.mass().matvec(field.coeffs());
                let s: f64 = mv.iter().zip(field.coeffs()).map(|(a, b)| a * b).sum();
                Ok(s.max(0.0).sqrt())
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Transfers between spaces
// ---------------------------------------------------------------------------

/// Exact L2 pairing between sine modes and hat functions:
/// `<e_k, phi_j> = s_k sin(k pi j h)` with
/// `s_k = sqrt(2) * 4 sin^2(k pi h / 2) / (k^2 pi^2 h)`.
///
/// This gives closed-form transfers between spectral and finite-element
/// spaces without quadrature error.
#[derive(Debug)]
pub struct SineTransfer {
    modes: usize,
    nodes: usize,
    scale: Vec<f64>,
    /// `sin(k pi j h)`, row-major in `k` (`modes x nodes`).
    table: Vec<f64>,
}

impl SineTransfer {
    pub fn new(modes: usize, cells: usize) -> Result<Self> {
        if modes == 0 {
            return Err(Error::invalid("transfer needs at least one mode"));
        }
        let (nodes, h) = interior_dims(cells)?;
        let mut scale = vec![0.0; modes];
        let mut table = vec![0.0; modes * nodes];
        for k in 1..=modes {
            let kpih = k as f64 * std::f64::consts::PI * h;
            let half = (0.5 * kpih).sin();
            scale[k - 1] = std::f64::consts::SQRT_2 * 4.0 * half * half
                / ((k as f64 * std::f64::consts::PI).powi(2) * h);
            for j in 1..=nodes {
                table[(k - 1) * nodes + (j - 1)] = (kpih * j as f64).sin();
            }
        }
        Ok(SineTransfer {
            modes,
            nodes,
            scale,
            table,
        })
    }

    /// Exact sine coefficients of the piecewise-linear function with the
    /// given nodal values (the L2 projection onto the spectral space).
    pub fn nodal_to_modal(&self, nodal: &[f64], modal: &mut [f64]) {
        assert_eq!(nodal.len(), self.nodes);
        assert_eq!(modal.len(), self.modes);
        for k in 0..self.modes {
            let row = &self.table[k * self.nodes..(k + 1) * self.nodes];
            let mut s = 0.0;
            for (t, c) in row.iter().zip(nodal) {
                s += t * c;
            }
            modal[k] = self.scale[k] * s;
        }
    }

    /// Exact finite-element load vector `<u, phi_j>` of a spectral function.
    pub fn modal_to_load(&self, modal: &[f64], load: &mut [f64]) {
        assert_eq!(modal.len(), self.modes);
        assert_eq!(load.len(), self.nodes);
        load.iter_mut().for_each(|v| *v = 0.0);
        for k in 0..self.modes {
            let w = self.scale[k] * modal[k];
            if w == 0.0 {
                continue;
            }
            let row = &self.table[k * self.nodes..(k + 1) * self.nodes];
            for (l, t) in load.iter_mut().zip(row) {
                *l += w * t;
            }
        }
    }
}

/// Moves a field between discrete spaces.
///
/// * spectral to spectral: zero-pad or truncate coefficients;
/// * finite elements to spectral: exact L2 projection via [`SineTransfer`];
/// * spectral to finite elements: exact load vector plus mass solve;
/// * mesh to mesh: resample on the target quadrature grid and project.
///
/// Same-space transfers return the field unchanged, so transfer is
/// idempotent.
pub fn transfer(field: &Field, from: &Space, to: &Space) -> Result<Field> {
    if field.tag() != from.tag() {
        return Err(Error::invalid("field does not belong to the source space"));
    }
    match (from, to) {
        (Space::Spectral(_), Space::Spectral(bt)) => {
            let mut coeffs = vec![0.0; bt.modes()];
            let n = field.coeffs().len().min(bt.modes());
            coeffs[..n].copy_from_slice(&field.coeffs()[..n]);
            Field::new(to.tag(), coeffs)
        }
        (Space::Fem(m), Space::Spectral(bt)) => {
            let tr = SineTransfer::new(bt.modes(), m.cells())?;
            let mut modal = vec![0.0; bt.modes()];
            tr.nodal_to_modal(field.coeffs(), &mut modal);
            Field::new(to.tag(), modal)
        }
        (Space::Spectral(bs), Space::Fem(m)) => {
            let tr = SineTransfer::new(bs.modes(), m.cells())?;
            let mut load = vec![0.0; m.n_nodes()];
            tr.modal_to_load(field.coeffs(), &mut load);
            m.mass_factor().solve_in_place(&mut load);
            Field::new(to.tag(), load)
        }
        (Space::Fem(ms), Space::Fem(mt)) => {
            if ms.cells() == mt.cells() {
                return Field::new(to.tag(), field.coeffs().to_vec());
            }
            let values: Vec<f64> = mt
                .quad_points()
                .iter()
                .map(|&x| from.evaluate(field, x))
                .collect::<Result<_>>()?;
            to.project_values(&values)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    /// Composite Simpson quadrature, used as an independent cross-check for
    /// projection coefficients (independent of the midpoint tables above).
    fn simpson(f: impl Fn(f64) -> f64, n: usize) -> f64 {
        assert!(n % 2 == 0);
        let h = 1.0 / n as f64;
        let mut s = f(0.0) + f(1.0);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * f(i as f64 * h);
        }
        s * h / 3.0
    }

    fn spectral(modes: usize) -> Space {
        Space::Spectral(SpectralBasis::for_growth(modes, 4).unwrap())
    }

    fn fem(cells: usize) -> Space {
        Space::Fem(FemMesh::new(cells).unwrap())
    }

    #[test]
    fn eigenpair_values() {
        let (l1, e1) = eigenpair(1).unwrap();
        assert_relative_eq!(l1, std::f64::consts::PI.powi(2), max_relative = 1e-15);
        assert_relative_eq!(e1(0.5), std::f64::consts::SQRT_2, max_relative = 1e-14);
        let (l2, e2) = eigenpair(2).unwrap();
        assert_relative_eq!(l2, 4.0 * std::f64::consts::PI.powi(2), max_relative = 1e-15);
        assert!(e2(0.5).abs() < 1e-14);
        assert!(eigenvalue(0).is_err());
    }

    #[test]
    fn eigenfunctions_are_normalised() {
        for k in [1usize, 3, 7] {
            let (_, ek) = eigenpair(k).unwrap();
            let norm_sq = simpson(|x| ek(x) * ek(x), 4000);
            assert_relative_eq!(norm_sq, 1.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn mass_matrix_entries() {
        let m = Tridiagonal::mass(4).unwrap();
        assert_eq!(m.n(), 3);
        for d in m.diag() {
            assert_relative_eq!(*d, 1.0 / 6.0, max_relative = 1e-15);
        }
        for o in m.off() {
            assert_relative_eq!(*o, 1.0 / 24.0, max_relative = 1e-15);
        }
        let m2 = Tridiagonal::mass(2).unwrap();
        assert_eq!(m2.n(), 1);
        assert_relative_eq!(m2.diag()[0], 1.0 / 3.0, max_relative = 1e-15);
        assert!(Tridiagonal::mass(1).is_err());
    }

    #[test]
    fn stiffness_matrix_entries_and_row_sums() {
        let k = Tridiagonal::stiffness(4).unwrap();
        for d in k.diag() {
            assert_relative_eq!(*d, 8.0, max_relative = 1e-15);
        }
        for o in k.off() {
            assert_relative_eq!(*o, -4.0, max_relative = 1e-15);
        }
        // Row sums: 1/h at boundary-adjacent rows, 0 in the interior.
        let k = Tridiagonal::stiffness(16).unwrap();
        let ones = vec![1.0; k.n()];
        let sums = k.matvec(&ones);
        assert_relative_eq!(sums[0], 16.0, max_relative = 1e-12);
        assert_relative_eq!(sums[k.n() - 1], 16.0, max_relative = 1e-12);
        for s in &sums[1..k.n() - 1] {
            assert!(s.abs() < 1e-10, "interior row sum {s} not zero");
        }
    }

    #[test]
    fn mass_and_stiffness_factor_for_all_mesh_sizes() {
        for cells in 2..=1024 {
            Tridiagonal::mass(cells)
                .unwrap()
                .factor()
                .unwrap_or_else(|e| panic!("mass factor failed at {cells} cells: {e}"));
            Tridiagonal::stiffness(cells)
                .unwrap()
                .factor()
                .unwrap_or_else(|e| panic!("stiffness factor failed at {cells} cells: {e}"));
        }
    }

    #[test]
    fn stiffness_eigenvalue_consistency() {
        // Smallest generalised eigenvalue of K c = mu M c approaches pi^2
        // at rate h^2; inverse power iteration is the independent oracle.
        let mut hs = Vec::new();
        let mut errs = Vec::new();
        for cells in [8usize, 16, 32, 64, 128] {
            let m = Tridiagonal::mass(cells).unwrap();
            let k = Tridiagonal::stiffness(cells).unwrap();
            let kf = k.factor().unwrap();
            let n = m.n();
            let mut z: Vec<f64> = (0..n)
                .map(|i| ((i + 1) as f64 * std::f64::consts::PI / cells as f64).sin())
                .collect();
            for _ in 0..60 {
                let mz = m.matvec(&z);
                z = kf.solve(&mz);
                let norm = z.iter().map(|v| v * v).sum::<f64>().sqrt();
                z.iter_mut().for_each(|v| *v /= norm);
            }
            let num: f64 = k.matvec(&z).iter().zip(&z).map(|(a, b)| a * b).sum();
            let den: f64 = m.matvec(&z).iter().zip(&z).map(|(a, b)| a * b).sum();
            let mu = num / den;
            let pi2 = std::f64::consts::PI.powi(2);
            assert!((mu - pi2).abs() / pi2 <= (1.0 / cells as f64).powi(2));
            hs.push(1.0 / cells as f64);
            errs.push((mu - pi2).abs());
        }
        // log-log slope of the eigenvalue error is 2 +- 0.2.
        let slope = fit_slope(&hs, &errs);
        assert!((slope - 2.0).abs() < 0.2, "eigenvalue rate {slope}");
    }

    fn fit_slope(xs: &[f64], ys: &[f64]) -> f64 {
        let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
        let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
        let n = lx.len() as f64;
        let mx = lx.iter().sum::<f64>() / n;
        let my = ly.iter().sum::<f64>() / n;
        let cov: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
        let var: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
        cov / var
    }

    #[test]
    fn projection_of_parabola_matches_analytic_coefficients() {
        // u = x(1-x) has sine coefficients 4*sqrt(2)/(k pi)^3 for odd k and 0
        // for even k; cross-checked against Simpson quadrature.
        let sp = spectral(4);
        let field = sp.project(|x| x * (1.0 - x)).unwrap();
        for k in 1..=4usize {
            let analytic = if k % 2 == 1 {
                4.0 * std::f64::consts::SQRT_2 / (k as f64 * std::f64::consts::PI).powi(3)
            } else {
                0.0
            };
            let (_, ek) = eigenpair(k).unwrap();
            let oracle = simpson(|x| x * (1.0 - x) * ek(x), 2000);
            assert_relative_eq!(analytic, oracle, epsilon = 1e-10);
            assert_relative_eq!(field.coeffs()[k - 1], analytic, epsilon = 1e-9);
        }
    }

    #[test]
    fn projection_of_basis_function_is_exact() {
        let sp = spectral(8);
        let (_, e1) = eigenpair(1).unwrap();
        let f = sp.project(e1).unwrap();
        assert_relative_eq!(f.coeffs()[0], 1.0, epsilon = 1e-12);
        for c in &f.coeffs()[1..] {
            assert!(c.abs() < 1e-12);
        }
        let z = sp.project(|_| 0.0).unwrap();
        assert!(z.coeffs().iter().all(|c| *c == 0.0));
    }

    #[test]
    fn projection_is_idempotent() {
        for space in [spectral(12), fem(16)] {
            let mut field = Field::zeros(space.tag());
            for (i, c) in field.coeffs_mut().iter_mut().enumerate() {
                *c = ((i + 1) as f64 * 0.37).sin();
            }
            let values = space.values_on_quad(&field).unwrap();
            let again = space.project_values(&values).unwrap();
            for (a, b) in field.coeffs().iter().zip(again.coeffs()) {
                assert!((a - b).abs() < 1e-10, "idempotence violated: {a} vs {b}");
            }
        }
    }

    #[test]
    fn projection_is_an_l2_contraction() {
        // Random smooth functions u = sum b_j e_j with exact L2 norm |b|_2.
        let mut state = 0x9e3779b97f4a7c15u64;
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        for space in [spectral(8), fem(32)] {
            for _ in 0..100 {
                let b: Vec<f64> = (0..20).map(|_| next()).collect();
                let norm = b.iter().map(|v| v * v).sum::<f64>().sqrt();
                let u = |x: f64| -> f64 {
                    b.iter()
                        .enumerate()
                        .map(|(j, bj)| {
                            bj * std::f64::consts::SQRT_2
                                * ((j + 1) as f64 * std::f64::consts::PI * x).sin()
                        })
                        .sum()
                };
                let proj = space.project(u).unwrap();
                let pnorm = space.l2_norm(&proj).unwrap();
                assert!(
                    pnorm <= norm + 1e-8,
                    "projection expanded the norm: {pnorm} > {norm}"
                );
            }
        }
    }

    #[test]
    fn evaluate_spectral_points() {
        let sp = spectral(4);
        let f = Field::new(sp.tag(), vec![1.0, 0.0, 0.0, 0.0]).unwrap();
        assert_relative_eq!(
            sp.evaluate(&f, 0.5).unwrap(),
            std::f64::consts::SQRT_2,
            epsilon = 1e-14
        );
        assert_eq!(sp.evaluate(&f, 0.0).unwrap(), 0.0);
        assert_eq!(sp.evaluate(&f, 1.0).unwrap(), 0.0);
        assert!(sp.evaluate(&f, -0.1).is_err());
        assert!(sp.evaluate(&f, 1.1).is_err());
    }

    #[test]
    fn evaluate_fem_interpolates_nodes() {
        let fe = fem(4);
        let f = Field::new(fe.tag(), vec![1.0, 2.0, 1.0]).unwrap();
        assert_relative_eq!(fe.evaluate(&f, 0.375).unwrap(), 1.5, epsilon = 1e-14);
        assert_relative_eq!(fe.evaluate(&f, 0.25).unwrap(), 1.0, epsilon = 1e-14);
        assert_eq!(fe.evaluate(&f, 0.0).unwrap(), 0.0);
        assert_eq!(fe.evaluate(&f, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn sobolev_norm_values() {
        let tag = BasisTag::Spectral { modes: 2 };
        let pi = std::f64::consts::PI;
        let f = Field::new(tag, vec![1.0, 0.0]).unwrap();
        assert_relative_eq!(sobolev_norm(&f, 2.0).unwrap(), pi * pi, max_relative = 1e-14);
        assert_relative_eq!(sobolev_norm(&f, 0.0).unwrap(), 1.0, max_relative = 1e-14);
        let g = Field::new(tag, vec![1.0, 1.0]).unwrap();
        assert_relative_eq!(
            sobolev_norm(&g, 1.0).unwrap(),
            pi * 5.0f64.sqrt(),
            max_relative = 1e-14
        );
        let fem_field = Field::zeros(BasisTag::Fem { cells: 4 });
        assert!(sobolev_norm(&fem_field, 1.0).is_err());
    }

    #[test]
    fn transfer_pads_and_truncates_spectral() {
        let small = spectral(2);
        let big = spectral(4);
        let f = Field::new(small.tag(), vec![1.0, -0.5]).unwrap();
        let up = transfer(&f, &small, &big).unwrap();
        assert_eq!(up.coeffs(), &[1.0, -0.5, 0.0, 0.0]);
        let down = transfer(&up, &big, &small).unwrap();
        assert_eq!(down.coeffs(), f.coeffs());
    }

    #[test]
    fn sine_transfer_matches_quadrature() {
        // The closed-form pairing <e_k, phi_j> agrees with Simpson quadrature.
        let cells = 8;
        let h = 1.0 / cells as f64;
        let tr = SineTransfer::new(5, cells).unwrap();
        for k in 1..=5usize {
            for j in 1..=cells - 1 {
                let (_, ek) = eigenpair(k).unwrap();
                let phi = |x: f64| {
                    let d = 1.0 - (x - j as f64 * h).abs() / h;
                    d.max(0.0)
                };
                let oracle = simpson(|x| ek(x) * phi(x), 4000);
                let closed = tr.scale[k - 1] * tr.table[(k - 1) * (cells - 1) + (j - 1)];
                assert_relative_eq!(closed, oracle, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn transfer_round_trip_spectral_fem_spectral() {
        let sp = spectral(32);
        let fe = fem(256);
        let field = sp.project(|x| x * (1.0 - x)).unwrap();
        let there = transfer(&field, &sp, &fe).unwrap();
        let back = transfer(&there, &fe, &sp).unwrap();
        let num: f64 = field
            .coeffs()
            .iter()
            .zip(back.coeffs())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        let den: f64 = field.coeffs().iter().map(|c| c * c).sum::<f64>().sqrt();
        assert!(
            num / den < 1e-3,
            "round-trip relative error {} too large",
            num / den
        );
    }

    #[test]
    fn field_constructors_validate() {
        let tag = BasisTag::Spectral { modes: 3 };
        assert!(Field::new(tag, vec![0.0; 2]).is_err());
        assert!(Field::new(tag, vec![f64::NAN, 0.0, 0.0]).is_err());
        let a = Field::new(tag, vec![1.0, 2.0, 3.0]).unwrap();
        let b = Field::zeros(BasisTag::Fem { cells: 4 });
        assert!(a.add(&b).is_err());
    }

    #[test]
    fn quadrature_orthonormality_is_exact() {
        let b = SpectralBasis::for_growth(16, 4).unwrap();
        let p = b.n_quad();
        for k in 1..=16usize {
            for l in k..=16usize {
                let mut s = 0.0;
                for ip in 0..p {
                    s += b.synth[ip * 16 + (k - 1)] * b.synth[ip * 16 + (l - 1)];
                }
                s *= b.quad_weight();
                let expect = if k == l { 1.0 } else { 0.0 };
                assert!(
                    (s - expect).abs() < 1e-12,
                    "quadrature inner product ({k},{l}) = {s}"
                );
            }
        }
    }

    #[test]
    fn multiplier_matrix_matches_mass_for_unit_weight() {
        let m = FemMesh::new(8).unwrap();
        let ones = vec![1.0; m.quad_points().len()];
        let b = m.multiplier_matrix(&ones);
        let mass = m.mass();
        for (a, c) in b.diag().iter().zip(mass.diag()) {
            assert_relative_eq!(a, c, max_relative = 1e-12);
        }
        for (a, c) in b.off().iter().zip(mass.off()) {
            assert_relative_eq!(a, c, max_relative = 1e-12);
        }
    }
}
