//! Drift-implicit Euler and Milstein time steppers.
//!
//! Both schemes treat the Laplacian and the drift implicitly and the noise
//! explicitly: one step solves
//!
//! ```text
//! w + tau Lambda_h w - tau P F(w) = u^m + P G(u^m) dW_m (+ Milstein term)
//! ```
//!
//! for the new state `w`, where `Lambda_h` is the discrete Laplacian of the
//! chosen space.  The Milstein variant augments the right-hand side with the
//! commutative second-order correction; for additive noise that term vanishes
//! identically and the two schemes coincide bit for bit.
//!
//! The implicit system is strongly monotone when `tau L_f < 1/4` (with
//! `L_f = sup f'`), so it has a unique solution, reached here by a damped
//! Newton iteration started from the right-hand side.  Spectral Jacobians are
//! assembled from cosine moments and solved densely up to a size cutoff and
//! by preconditioned conjugate gradients above it; finite-element Jacobians
//! are tridiagonal and solved by a symmetric factorization.

use crate::basis::{BasisTag, Field, Space};
use crate::coefficients::{apply_diffusion, milstein_correction, DriftSpec, ModelSpec};
use crate::error::{Error, Result};
use crate::noise::{NoiseSynth, NoiseTree, QWienerSpec};

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SchemeKind {
    Euler,
    Milstein,
}

impl SchemeKind {
    pub fn name(&self) -> &'static str {
        match self {
            SchemeKind::Euler => "euler",
            SchemeKind::Milstein => "milstein",
        }
    }
}

/// Newton solver settings.  The residual tolerance is absolute in the L2
/// norm and sits far below the strong errors being measured.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NewtonParams {
    pub tol: f64,
    pub max_iter: u32,
    /// Step damping in (0, 1]; 1 is the full Newton step.
    pub damping: f64,
    /// Spectral systems at most this large are solved by dense Cholesky;
    /// larger ones fall back to preconditioned conjugate gradients.
    pub(crate) dense_cutoff: usize,
}

impl Default for NewtonParams {
    fn default() -> Self {
        NewtonParams { tol: 1e-12, max_iter: 50, damping: 1.0, dense_cutoff: 256 }
    }
}

impl NewtonParams {
    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn with_max_iter(mut self, max_iter: u32) -> Self {
        self.max_iter = max_iter;
        self
    }

    pub fn with_damping(mut self, damping: f64) -> Self {
        self.damping = damping;
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) || !self.tol.is_finite() {
            return Err(Error::config("newton tolerance must be positive and finite"));
        }
        if self.max_iter == 0 {
            return Err(Error::config("newton max_iter must be at least 1"));
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::config("newton damping must lie in (0, 1]"));
        }
        Ok(())
    }
}

/// Discretization parameters of one scheme run.
#[derive(Clone, Debug, PartialEq)]
pub struct SchemeConfig {
    pub scheme: SchemeKind,
    pub basis: BasisTag,
    pub tau: f64,
    pub steps: usize,
    pub newton: NewtonParams,
}

impl SchemeConfig {
    pub fn t_final(&self) -> f64 {
        self.tau * self.steps as f64
    }

    pub fn validate(&self, drift: &DriftSpec) -> Result<()> {
        validate_step_size(self.tau, drift.one_sided_constant())?;
        if self.steps == 0 {
            // zero steps is legal (the trajectory is the projected datum)
        }
        self.newton.validate()
    }
}

/// Enforces the well-posedness restriction on the step size: `tau` must lie
/// in (0, 1), and when the one-sided constant `L_f` is positive additionally
/// `tau < 1/(4 L_f)` so the implicit step map stays strongly monotone.
pub fn validate_step_size(tau: f64, l_f: f64) -> Result<()> {
    if !(tau > 0.0 && tau < 1.0) || !tau.is_finite() {
        return Err(Error::config(format!(
            "step size tau = {tau} must lie strictly inside (0, 1)"
        )));
    }
    if l_f > 0.0 && tau >= 0.25 / l_f {
        return Err(Error::config(format!(
            "step size tau = {tau} violates the well-posedness restriction \
             tau < 1/(4 L_f) = {} for one-sided constant L_f = {l_f}",
            0.25 / l_f
        )));
    }
    Ok(())
}

/// The Brownian data a run consumes: one level of a sampled tree, with an
/// optional restriction to the leading `active` noise modes (used by
/// truncation studies; `None` means all modes).
#[derive(Clone, Copy, Debug)]
pub struct NoiseView<'a> {
    pub tree: &'a NoiseTree,
    pub spec: &'a QWienerSpec,
    pub level: usize,
    pub active: Option<usize>,
}

// ---------------------------------------------------------------------------
// Trajectory
// ---------------------------------------------------------------------------

/// States `u^0..u^M` of one run plus per-step solver diagnostics.
#[derive(Clone, Debug)]
pub struct Trajectory {
    states: Vec<Field>,
    newton_iterations: Vec<u32>,
    final_residuals: Vec<f64>,
}

impl Trajectory {
    /// All states, `states()[m]` being the approximation at `t_m = m tau`.
    pub fn states(&self) -> &[Field] {
        &self.states
    }

    pub fn state(&self, m: usize) -> &Field {
        &self.states[m]
    }

    pub fn steps(&self) -> usize {
        self.states.len() - 1
    }

    pub fn newton_iterations(&self) -> &[u32] {
        &self.newton_iterations
    }

    pub fn final_residuals(&self) -> &[f64] {
        &self.final_residuals
    }
}

// ---------------------------------------------------------------------------
// Steps
// ---------------------------------------------------------------------------

/// One drift-implicit Euler step: assembles the right-hand side
/// `state + P G(state) dW` and solves the implicit system.  Returns the new
/// state with the Newton iteration count and final residual.
pub fn euler_step(
    state: &Field,
    dw_values: &[f64],
    model: &ModelSpec,
    cfg: &SchemeConfig,
    space: &Space,
) -> Result<(Field, u32, f64)> {
    let noise_term = apply_diffusion(&model.diffusion, state, dw_values, space)?;
    let rhs = state.add(&noise_term)?;
    newton_solve(&rhs, &model.drift, cfg.tau, space, &cfg.newton)
}

/// One Milstein step: the Euler right-hand side augmented with the
/// commutative correction `1/2 g'(u)g(u) [dW^2 - tau q]`.  For additive
/// noise the correction vanishes identically, so this delegates to
/// [`euler_step`] and the outputs are bit-identical.
pub fn milstein_step(
    state: &Field,
    dw_values: &[f64],
    q_values: &[f64],
    model: &ModelSpec,
    cfg: &SchemeConfig,
    space: &Space,
) -> Result<(Field, u32, f64)> {
    if model.diffusion.is_additive() {
        return euler_step(state, dw_values, model, cfg, space);
    }
    let noise_term = apply_diffusion(&model.diffusion, state, dw_values, space)?;
    let correction =
        milstein_correction(&model.diffusion, state, dw_values, q_values, cfg.tau, space)?;
    let mut rhs = state.add(&noise_term)?;
    rhs.axpy(1.0, &correction)?;
    newton_solve(&rhs, &model.drift, cfg.tau, space, &cfg.newton)
}

/// Runs `cfg.steps` steps of the selected scheme on one level of a noise
/// tree.  Deterministic given `(model, cfg, tree)`.
pub fn run(
    model: &ModelSpec,
    cfg: &SchemeConfig,
    space: &Space,
    noise: &NoiseView,
) -> Result<Trajectory> {
    cfg.validate(&model.drift)?;
    if space.tag() != cfg.basis {
        return Err(Error::invalid(format!(
            "config basis {:?} does not match the provided space {:?}",
            cfg.basis,
            space.tag()
        )));
    }
    if noise.tree.modes() != noise.spec.modes() {
        return Err(Error::invalid(format!(
            "noise tree carries {} modes but the spectrum has {}",
            noise.tree.modes(),
            noise.spec.modes()
        )));
    }
    let level = noise.tree.level(noise.level)?;
    if level.m_steps() != cfg.steps && cfg.steps != 0 {
        return Err(Error::invalid(format!(
            "config asks for {} steps but tree level {} has {}",
            cfg.steps,
            noise.level,
            level.m_steps()
        )));
    }
    if cfg.steps != 0 && (level.tau() - cfg.tau).abs() > 1e-12 * cfg.tau {
        return Err(Error::invalid(format!(
            "config step size {} does not match tree level step size {}",
            cfg.tau,
            level.tau()
        )));
    }
    let active = noise.active.unwrap_or(noise.spec.modes());
    let synth = NoiseSynth::with_active(noise.spec, space.quad_points(), active)?;

    let u0 = model.init.project(space)?;
    if !h1_seminorm(space, &u0)?.is_finite() {
        return Err(Error::invalid("initial datum has no finite H1 energy"));
    }

    let mut states = Vec::with_capacity(cfg.steps + 1);
    let mut newton_iterations = Vec::with_capacity(cfg.steps);
    let mut final_residuals = Vec::with_capacity(cfg.steps);
    states.push(u0);
    let mut dw = vec![0.0; space.quad_points().len()];
    for m in 0..cfg.steps {
        synth.increment_values(level.step(m, noise.tree.modes()), &mut dw);
        let prev = states.last().expect("nonempty");
        let (next, iters, residual) = match cfg.scheme {
            SchemeKind::Euler => euler_step(prev, &dw, model, cfg, space)?,
            SchemeKind::Milstein => {
                milstein_step(prev, &dw, synth.q_values(), model, cfg, space)?
            }
        };
        states.push(next);
        newton_iterations.push(iters);
        final_residuals.push(residual);
    }
    Ok(Trajectory { states, newton_iterations, final_residuals })
}

/// Discrete H1 seminorm: `sqrt(sum lambda_k c_k^2)` (spectral) or
/// `sqrt(c' K c)` (finite elements).
fn h1_seminorm(space: &Space, field: &Field) -> Result<f64> {
    match space {
        Space::Spectral(b) => {
            let mut acc = 0.0;
            for (c, l) in field.coeffs().iter().zip(b.eigenvalues()) {
                acc += l * c * c;
            }
            Ok(acc.sqrt())
        }
        Space::Fem(m) => {
            let kc = m.stiffness().matvec(field.coeffs());
            let acc: f64 = kc.iter().zip(field.coeffs()).map(|(a, b)| a * b).sum();
            Ok(acc.max(0.0).sqrt())
        }
    }
}

// ---------------------------------------------------------------------------
// Newton solver
// ---------------------------------------------------------------------------

/// Solves the implicit step system `w + tau Lambda w - tau P F(w) = rhs` by
/// damped Newton with the right-hand side as the initial guess.  Returns the
/// solution, the number of Newton updates, and the final L2 residual norm.
pub fn newton_solve(
    rhs: &Field,
    drift: &DriftSpec,
    tau: f64,
    space: &Space,
    params: &NewtonParams,
) -> Result<(Field, u32, f64)> {
    params.validate()?;
    validate_step_size(tau, drift.one_sided_constant())?;
    if rhs.tag() != space.tag() {
        return Err(Error::invalid("right-hand side does not live in the given space"));
    }
    match space {
        Space::Spectral(_) => newton_spectral(rhs, drift, tau, space, params),
        Space::Fem(_) => newton_fem(rhs, drift, tau, space, params),
    }
}

fn newton_spectral(
    rhs: &Field,
    drift: &DriftSpec,
    tau: f64,
    space: &Space,
    params: &NewtonParams,
) -> Result<(Field, u32, f64)> {
    let basis = match space {
        Space::Spectral(b) => b,
        Space::Fem(_) => unreachable!("dispatched on spectral"),
    };
    let n = basis.modes();
    let resolvent_diag: Vec<f64> =
        basis.eigenvalues().iter().map(|l| 1.0 + tau * l).collect();

    let mut w = rhs.coeffs().to_vec();
    let mut residual = vec![0.0; n];
    let mut values = vec![0.0; basis.n_quad()];
    let mut proj = vec![0.0; n];
    let mut moments = vec![0.0; 2 * n + 1];

    let mut iterations = 0u32;
    loop {
        // residual r = (I + tau Lambda) w - tau P F(w) - rhs
        let res_norm = if drift.is_zero() {
            for k in 0..n {
                residual[k] = resolvent_diag[k] * w[k] - rhs.coeffs()[k];
            }
            l2(&residual)
        } else {
            basis.synthesise(&w, &mut values);
            let mut fvals = values.clone();
            let mut worst = 0.0f64;
            for (f, x) in fvals.iter_mut().zip(&values) {
                *f = drift.f(*x);
                if !f.is_finite() {
                    worst = worst.max(x.abs());
                }
            }
            if worst > 0.0 {
                return Err(Error::numeric(format!(
                    "drift evaluation overflowed at state magnitude {worst:.3e} \
                     during the implicit solve"
                )));
            }
            basis.analyse(&fvals, &mut proj);
            for k in 0..n {
                residual[k] = resolvent_diag[k] * w[k] - tau * proj[k] - rhs.coeffs()[k];
            }
            l2(&residual)
        };
        if !res_norm.is_finite() {
            return Err(Error::Numeric("implicit solve produced a non-finite residual".into()));
        }
        if res_norm <= params.tol {
            return Ok((Field::new(rhs.tag(), w)?, iterations, res_norm));
        }
        if iterations >= params.max_iter {
            return Err(Error::SolverDiverged {
                iterations,
                residual: res_norm,
                tolerance: params.tol,
            });
        }

        // Newton direction: [(I + tau Lambda) - tau B] delta = -r with
        // B[k][l] = <f'(w) e_l, e_k> assembled from cosine moments.
        let delta = if drift.is_zero() {
            residual
                .iter()
                .zip(&resolvent_diag)
                .map(|(r, d)| -r / d)
                .collect::<Vec<f64>>()
        } else {
            basis.synthesise(&w, &mut values);
            let mut dfvals = values.clone();
            for (d, x) in dfvals.iter_mut().zip(&values) {
                *d = drift.df(*x);
            }
            basis.cosine_moments(&dfvals, &mut moments);
            let neg_r: Vec<f64> = residual.iter().map(|r| -r).collect();
            if n <= params.dense_cutoff {
                dense_jacobian_solve(&resolvent_diag, tau, &moments, &neg_r)?
            } else {
                pcg_jacobian_solve(&resolvent_diag, tau, &moments, &neg_r)?
            }
        };
        for (wk, d) in w.iter_mut().zip(&delta) {
            *wk += params.damping * d;
        }
        iterations += 1;
    }
}

fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Assembles the dense spectral Jacobian from cosine moments and solves by
/// Cholesky.  The matrix is symmetric positive definite whenever the step
/// restriction holds (`f' <= L_f` pointwise and `tau L_f < 1/4`).
fn dense_jacobian_solve(
    resolvent_diag: &[f64],
    tau: f64,
    moments: &[f64],
    b: &[f64],
) -> Result<Vec<f64>> {
    let n = resolvent_diag.len();
    let mut j = vec![0.0; n * n];
    for row in 0..n {
        for col in 0..=row {
            let mut v = -tau * (moments[row - col] - moments[row + col + 2]);
            if row == col {
                v += resolvent_diag[row];
            }
            j[row * n + col] = v;
        }
    }
    // in-place lower Cholesky
    for col in 0..n {
        let mut d = j[col * n + col];
        for p in 0..col {
            d -= j[col * n + p] * j[col * n + p];
        }
        if !(d > 0.0) {
            return Err(Error::numeric(format!(
                "implicit-step Jacobian lost positive definiteness at row {col} \
                 (pivot {d:.3e}); the step-size restriction is violated numerically"
            )));
        }
        let d = d.sqrt();
        j[col * n + col] = d;
        for row in col + 1..n {
            let mut v = j[row * n + col];
            for p in 0..col {
                v -= j[row * n + p] * j[col * n + p];
            }
            j[row * n + col] = v / d;
        }
    }
    // forward then backward substitution
    let mut x = b.to_vec();
    for row in 0..n {
        let mut v = x[row];
        for p in 0..row {
            v -= j[row * n + p] * x[p];
        }
        x[row] = v / j[row * n + row];
    }
    for row in (0..n).rev() {
        let mut v = x[row];
        for p in row + 1..n {
            v -= j[p * n + row] * x[p];
        }
        x[row] = v / j[row * n + row];
    }
    Ok(x)
}

/// Matrix-free preconditioned conjugate gradients for the spectral Jacobian,
/// using `(I + tau Lambda)^{-1}` as the preconditioner and evaluating
/// `B v` directly from the cosine moments in O(n^2).
fn pcg_jacobian_solve(
    resolvent_diag: &[f64],
    tau: f64,
    moments: &[f64],
    b: &[f64],
) -> Result<Vec<f64>> {
    let n = resolvent_diag.len();
    let apply = |v: &[f64], out: &mut [f64]| {
        for row in 0..n {
            let mut acc = 0.0;
            for col in 0..n {
                acc += (moments[row.abs_diff(col)] - moments[row + col + 2]) * v[col];
            }
            out[row] = resolvent_diag[row] * v[row] - tau * acc;
        }
    };
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let b_norm = l2(b).max(f64::MIN_POSITIVE);
    let tol = 1e-13 * b_norm;
    let mut z: Vec<f64> = r.iter().zip(resolvent_diag).map(|(r, d)| r / d).collect();
    let mut p = z.clone();
    let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
    let mut ap = vec![0.0; n];
    for _ in 0..10 * n {
        if l2(&r) <= tol {
            return Ok(x);
        }
        apply(&p, &mut ap);
        let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
        if !(pap > 0.0) {
            return Err(Error::numeric(
                "implicit-step Jacobian lost positive definiteness in the \
                 conjugate-gradient solve; the step-size restriction is violated",
            ));
        }
        let alpha = rz / pap;
        for k in 0..n {
            x[k] += alpha * p[k];
            r[k] -= alpha * ap[k];
        }
        for k in 0..n {
            z[k] = r[k] / resolvent_diag[k];
        }
        let rz_next: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let beta = rz_next / rz;
        rz = rz_next;
        for k in 0..n {
            p[k] = z[k] + beta * p[k];
        }
    }
    Err(Error::numeric(
        "conjugate-gradient solve for the implicit step did not converge",
    ))
}

fn newton_fem(
    rhs: &Field,
    drift: &DriftSpec,
    tau: f64,
    space: &Space,
    params: &NewtonParams,
) -> Result<(Field, u32, f64)> {
    let mesh = match space {
        Space::Fem(m) => m,
        Space::Spectral(_) => unreachable!("dispatched on fem"),
    };
    let n = mesh.n_nodes();
    let system = mesh.mass().combine(1.0, mesh.stiffness(), tau)?; // M + tau K
    let m_rhs = mesh.mass().matvec(rhs.coeffs());

    let mut w = rhs.coeffs().to_vec();
    let mut values = vec![0.0; mesh.quad_points().len()];
    let mut load = vec![0.0; n];

    let mut iterations = 0u32;
    loop {
        // load-space residual rho = (M + tau K) w - tau load(F(w)) - M rhs
        let mut rho = system.matvec(&w);
        if !drift.is_zero() {
            mesh.synthesise(&w, &mut values);
            let mut fvals = values.clone();
            let mut worst = 0.0f64;
            for (f, x) in fvals.iter_mut().zip(&values) {
                *f = drift.f(*x);
                if !f.is_finite() {
                    worst = worst.max(x.abs());
                }
            }
            if worst > 0.0 {
                return Err(Error::numeric(format!(
                    "drift evaluation overflowed at state magnitude {worst:.3e} \
                     during the implicit solve"
                )));
            }
            mesh.load_vector(&fvals, &mut load);
            for k in 0..n {
                rho[k] -= tau * load[k];
            }
        }
        for k in 0..n {
            rho[k] -= m_rhs[k];
        }
        // L2 norm of the represented residual field M^{-1} rho
        let z = mesh.mass_factor().solve(&rho);
        let res_sq: f64 = rho.iter().zip(&z).map(|(a, b)| a * b).sum();
        let res_norm = res_sq.max(0.0).sqrt();
        if !res_norm.is_finite() {
            return Err(Error::Numeric("implicit solve produced a non-finite residual".into()));
        }
        if res_norm <= params.tol {
            return Ok((Field::new(rhs.tag(), w)?, iterations, res_norm));
        }
        if iterations >= params.max_iter {
            return Err(Error::SolverDiverged {
                iterations,
                residual: res_norm,
                tolerance: params.tol,
            });
        }

        // Jacobian M + tau K - tau * multiplier(f'(w)), tridiagonal SPD.
        let jacobian = if drift.is_zero() {
            system.clone()
        } else {
            mesh.synthesise(&w, &mut values);
            let mut dfvals = values.clone();
            for (d, x) in dfvals.iter_mut().zip(&values) {
                *d = drift.df(*x);
            }
            system.combine(1.0, &mesh.multiplier_matrix(&dfvals), -tau)?
        };
        let factor = jacobian.factor().map_err(|e| {
            Error::numeric(format!(
                "implicit-step Jacobian factorization failed ({e}); the step-size \
                 restriction is violated numerically"
            ))
        })?;
        let mut delta = rho;
        factor.solve_in_place(&mut delta);
        for (wk, d) in w.iter_mut().zip(&delta) {
            *wk -= params.damping * d;
        }
        iterations += 1;
    }
}
