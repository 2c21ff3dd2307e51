//! Drift and diffusion models as pointwise (Nemytskii) operators.
//!
//! The equation's nonlinearities act pointwise: the drift lifts a scalar
//! function `f` to `F(u)(x) = f(u(x))` and the diffusion multiplies noise
//! values by `g(u(x))`.  Discretely both are realised pseudo-spectrally:
//! synthesise the state on the quadrature grid, apply the scalar map, and
//! L2-project the result back into the basis.  The quadrature grids carried
//! by [`Space`](crate::basis::Space) are sized so that these projections are
//! exact for the polynomial drifts below.
//!
//! The drift catalogue is restricted to one-sided Lipschitz (monotone)
//! functions — odd polynomials with negative leading coefficient and their
//! linear/zero degenerations — so the implicit step of the schemes has a
//! unique solution whenever the step-size restriction holds.
//! [`check_assumptions`] probes the structural conditions on a dense grid
//! and reports estimated constants plus the convergence regime they support.

use crate::basis::{Field, Space};
use crate::error::{Error, Result};

// ---------------------------------------------------------------------------
// Drift
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq)]
enum DriftKind {
    /// `f(x) = x - x^3`.
    Cubic,
    /// `f(x) = sum_j coeffs[j] x^(2j+1)`; `one_sided` caches `sup f'`.
    OddPoly { coeffs: Vec<f64>, one_sided: f64 },
    /// `f(x) = c x`.
    Linear(f64),
    Zero,
}

/// A scalar drift `f` with its derivatives and the constants the schemes and
/// checkers need: the one-sided Lipschitz constant `L_f = sup f'` and the
/// growth exponent `q` with `|f'(x)| <= L'_f (1 + |x|^(q-2))`.
#[derive(Clone, Debug, PartialEq)]
pub struct DriftSpec {
    kind: DriftKind,
}

impl DriftSpec {
    /// Allen-Cahn drift `f(x) = x - x^3`.
    pub fn cubic_allen_cahn() -> Self {
        DriftSpec { kind: DriftKind::Cubic }
    }

    /// Linear drift `f(x) = c x` (negative `c` is dissipative).
    pub fn linear(c: f64) -> Result<Self> {
        if !c.is_finite() {
            return Err(Error::invalid("linear drift coefficient must be finite"));
        }
        Ok(DriftSpec { kind: DriftKind::Linear(c) })
    }

    pub fn zero() -> Self {
        DriftSpec { kind: DriftKind::Zero }
    }

    /// Odd polynomial `f(x) = c_0 x + c_1 x^3 + ... + c_L x^(2L+1)` given the
    /// coefficients in ascending odd powers.  The leading coefficient must be
    /// strictly negative so that `f` is one-sided Lipschitz on all of the
    /// real line.
    pub fn odd_polynomial(coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(Error::invalid("odd polynomial needs at least one coefficient"));
        }
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::invalid("odd polynomial coefficients must be finite"));
        }
        let leading = *coeffs.last().expect("nonempty");
        if !(leading < 0.0) {
            return Err(Error::invalid(format!(
                "odd polynomial leading coefficient {leading} must be strictly \
                 negative (one-sided Lipschitz condition)"
            )));
        }
        Ok(Self::odd_polynomial_unchecked(coeffs))
    }

    /// Builds an odd polynomial without the sign check on the leading
    /// coefficient, so that [`check_assumptions`] can be exercised on models
    /// that violate the monotonicity condition.  The cached one-sided
    /// constant is then only a grid estimate and may be astronomically large.
    pub fn odd_polynomial_unchecked(coeffs: Vec<f64>) -> Self {
        let one_sided = estimate_derivative_sup(&coeffs);
        DriftSpec { kind: DriftKind::OddPoly { coeffs, one_sided } }
    }

    pub fn kind_name(&self) -> &'static str {
        match &self.kind {
            DriftKind::Cubic => "cubic_allen_cahn",
            DriftKind::OddPoly { .. } => "odd_polynomial",
            DriftKind::Linear(_) => "linear",
            DriftKind::Zero => "zero",
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self.kind, DriftKind::Zero)
    }

    /// Coefficients in ascending odd powers (every drift is a polynomial).
    pub fn polynomial_coeffs(&self) -> Vec<f64> {
        match &self.kind {
            DriftKind::Cubic => vec![1.0, -1.0],
            DriftKind::OddPoly { coeffs, .. } => coeffs.clone(),
            DriftKind::Linear(c) => vec![*c],
            DriftKind::Zero => vec![0.0],
        }
    }

    pub fn f(&self, x: f64) -> f64 {
        match &self.kind {
            DriftKind::Cubic => x - x * x * x,
            DriftKind::OddPoly { coeffs, .. } => {
                let y = x * x;
                let mut acc = 0.0;
                for c in coeffs.iter().rev() {
                    acc = acc * y + c;
                }
                acc * x
            }
            DriftKind::Linear(c) => c * x,
            DriftKind::Zero => 0.0,
        }
    }

    pub fn df(&self, x: f64) -> f64 {
        match &self.kind {
            DriftKind::Cubic => 1.0 - 3.0 * x * x,
            DriftKind::OddPoly { coeffs, .. } => {
                let y = x * x;
                let mut acc = 0.0;
                for (j, c) in coeffs.iter().enumerate().rev() {
                    acc = acc * y + (2 * j + 1) as f64 * c;
                }
                acc
            }
            DriftKind::Linear(c) => *c,
            DriftKind::Zero => 0.0,
        }
    }

    pub fn d2f(&self, x: f64) -> f64 {
        match &self.kind {
            DriftKind::Cubic => -6.0 * x,
            DriftKind::OddPoly { coeffs, .. } => {
                let y = x * x;
                let mut acc = 0.0;
                for (j, c) in coeffs.iter().enumerate().skip(1).rev() {
                    let n = (2 * j + 1) as f64;
                    acc = acc * y + n * (n - 1.0) * c;
                }
                acc * x
            }
            DriftKind::Linear(_) | DriftKind::Zero => 0.0,
        }
    }

    /// One-sided Lipschitz constant `L_f = sup_x f'(x)`; the implicit step is
    /// uniquely solvable for `tau L_f < 1/4`.
    pub fn one_sided_constant(&self) -> f64 {
        match &self.kind {
            DriftKind::Cubic => 1.0,
            DriftKind::OddPoly { one_sided, .. } => *one_sided,
            DriftKind::Linear(c) => *c,
            DriftKind::Zero => 0.0,
        }
    }

    /// Growth exponent `q >= 2` with `|f'(x)| <= L'_f (1 + |x|^(q-2))`; also
    /// sizes the anti-aliasing quadrature (`f` maps modes `<= N` to
    /// trigonometric content `<= (q-1) N`).
    pub fn growth_exponent(&self) -> u32 {
        match &self.kind {
            DriftKind::Cubic => 4,
            DriftKind::OddPoly { coeffs, .. } => 2 * coeffs.len() as u32,
            DriftKind::Linear(_) | DriftKind::Zero => 2,
        }
    }

    /// Constant `L'_f` in the derivative growth bound above.
    pub fn derivative_growth_constant(&self) -> f64 {
        match &self.kind {
            DriftKind::Cubic => 3.0,
            DriftKind::OddPoly { coeffs, .. } => coeffs
                .iter()
                .enumerate()
                .map(|(j, c)| (2 * j + 1) as f64 * c.abs())
                .sum(),
            DriftKind::Linear(c) => c.abs(),
            DriftKind::Zero => 0.0,
        }
    }
}

/// Grid estimate of `sup_x f'(x)` for an odd polynomial, searching the
/// interval that provably contains all critical points (Cauchy root bound on
/// `f''`) and refining the best bracket by ternary search.
fn estimate_derivative_sup(coeffs: &[f64]) -> f64 {
    let spec = DriftSpec {
        kind: DriftKind::OddPoly { coeffs: coeffs.to_vec(), one_sided: 0.0 },
    };
    if coeffs.len() == 1 {
        return coeffs[0];
    }
    // f''(x) = x * p(x^2) with p(y) = sum_{j>=1} c_j (2j+1)(2j) y^(j-1);
    // Cauchy bound on p's roots caps the critical radius of f'.
    let p: Vec<f64> = coeffs
        .iter()
        .enumerate()
        .skip(1)
        .map(|(j, c)| {
            let n = (2 * j + 1) as f64;
            n * (n - 1.0) * c
        })
        .collect();
    let lead = *p.last().expect("degree >= 1");
    let radius = if lead == 0.0 || p.iter().any(|a| !(a / lead).is_finite()) {
        10.0
    } else {
        let bound = 1.0 + p.iter().map(|a| (a / lead).abs()).fold(0.0, f64::max);
        bound.sqrt().max(10.0)
    };
    let n = 100_000usize;
    let mut best_i = 0;
    let mut best = f64::NEG_INFINITY;
    for i in 0..=n {
        let x = radius * i as f64 / n as f64; // f' is even: scan [0, radius]
        let v = spec.df(x);
        if v > best {
            best = v;
            best_i = i;
        }
    }
    let mut lo = radius * best_i.saturating_sub(1) as f64 / n as f64;
    let mut hi = radius * (best_i + 1).min(n) as f64 / n as f64;
    for _ in 0..100 {
        let m1 = lo + (hi - lo) / 3.0;
        let m2 = hi - (hi - lo) / 3.0;
        if spec.df(m1) < spec.df(m2) {
            lo = m1;
        } else {
            hi = m2;
        }
    }
    let refined = best.max(spec.df(0.5 * (lo + hi)));
    refined + 1e-12 * (1.0 + refined.abs())
}

// ---------------------------------------------------------------------------
// Diffusion
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq)]
enum DiffusionKind {
    /// `g(u) = b`: the noise enters additively with constant amplitude.
    Additive(f64),
    /// `g(u) = sigma u`.
    LinearMul(f64),
    /// `g(u) = sigma sin(u)`: bounded with bounded derivatives.
    SinMul(f64),
}

/// A scalar diffusion `g` lifted to the multiplication operator
/// `G(u)v(x) = g(u(x)) v(x)`.  All members commute in the iterated-integral
/// sense (the second-order kernel is symmetric), so the Milstein correction
/// needs no Levy areas.
#[derive(Clone, Debug, PartialEq)]
pub struct DiffusionSpec {
    kind: DiffusionKind,
}

impl DiffusionSpec {
    pub fn additive(b: f64) -> Result<Self> {
        if !b.is_finite() {
            return Err(Error::invalid("additive noise amplitude must be finite"));
        }
        Ok(DiffusionSpec { kind: DiffusionKind::Additive(b) })
    }

    pub fn linear(sigma: f64) -> Result<Self> {
        if !sigma.is_finite() {
            return Err(Error::invalid("diffusion strength must be finite"));
        }
        Ok(DiffusionSpec { kind: DiffusionKind::LinearMul(sigma) })
    }

    pub fn sine(sigma: f64) -> Result<Self> {
        if !sigma.is_finite() {
            return Err(Error::invalid("diffusion strength must be finite"));
        }
        Ok(DiffusionSpec { kind: DiffusionKind::SinMul(sigma) })
    }

    pub fn kind_name(&self) -> &'static str {
        match &self.kind {
            DiffusionKind::Additive(_) => "additive",
            DiffusionKind::LinearMul(_) => "linear",
            DiffusionKind::SinMul(_) => "sine",
        }
    }

    pub fn is_additive(&self) -> bool {
        matches!(self.kind, DiffusionKind::Additive(_))
    }

    pub fn g(&self, x: f64) -> f64 {
        match &self.kind {
            DiffusionKind::Additive(b) => *b,
            DiffusionKind::LinearMul(s) => s * x,
            DiffusionKind::SinMul(s) => s * x.sin(),
        }
    }

    pub fn dg(&self, x: f64) -> f64 {
        match &self.kind {
            DiffusionKind::Additive(_) => 0.0,
            DiffusionKind::LinearMul(s) => *s,
            DiffusionKind::SinMul(s) => s * x.cos(),
        }
    }

    pub fn d2g(&self, x: f64) -> f64 {
        match &self.kind {
            DiffusionKind::Additive(_) | DiffusionKind::LinearMul(_) => 0.0,
            DiffusionKind::SinMul(s) => -s * x.sin(),
        }
    }

    /// Lipschitz constant of `g` (equals `sup |g'|` for the catalogue).
    pub fn lipschitz_constant(&self) -> f64 {
        match &self.kind {
            DiffusionKind::Additive(_) => 0.0,
            DiffusionKind::LinearMul(s) | DiffusionKind::SinMul(s) => s.abs(),
        }
    }

    /// The single strength parameter of the catalogue entry (`b` or `sigma`).
    pub fn parameter(&self) -> f64 {
        match &self.kind {
            DiffusionKind::Additive(b) => *b,
            DiffusionKind::LinearMul(s) | DiffusionKind::SinMul(s) => *s,
        }
    }
}

// ---------------------------------------------------------------------------
// Model
// ---------------------------------------------------------------------------

/// Initial data with closed-form evaluators.
#[derive(Clone, Debug, PartialEq)]
pub enum InitialDatum {
    /// `sin(pi x)` — smooth, in the domain of the Dirichlet Laplacian.
    SinPi,
    /// `x (1 - x)` — smooth but with nonzero boundary slopes.
    Parabola,
    Zero,
    /// The eigenfunction `e_k = sqrt(2) sin(k pi x)`.
    Mode { k: usize },
}

impl InitialDatum {
    pub fn evaluate(&self, x: f64) -> f64 {
        match self {
            InitialDatum::SinPi => (std::f64::consts::PI * x).sin(),
            InitialDatum::Parabola => x * (1.0 - x),
            InitialDatum::Zero => 0.0,
            InitialDatum::Mode { k } => {
                std::f64::consts::SQRT_2 * (*k as f64 * std::f64::consts::PI * x).sin()
            }
        }
    }

    pub fn project(&self, space: &Space) -> Result<Field> {
        if let InitialDatum::Mode { k } = self {
            if *k == 0 {
                return Err(Error::invalid("mode index starts at 1"));
            }
        }
        space.project(|x| self.evaluate(x))
    }
}

/// The semilinear model: drift, diffusion, and initial datum.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelSpec {
    pub drift: DriftSpec,
    pub diffusion: DiffusionSpec,
    pub init: InitialDatum,
}

impl Default for ModelSpec {
    /// Allen-Cahn drift, linear multiplicative noise `g(u) = 0.5 u`,
    /// `u_0(x) = sin(pi x)`.
    fn default() -> Self {
        ModelSpec {
            drift: DriftSpec::cubic_allen_cahn(),
            diffusion: DiffusionSpec::linear(0.5).expect("finite"),
            init: InitialDatum::SinPi,
        }
    }
}

// ---------------------------------------------------------------------------
// Nemytskii operations
// ---------------------------------------------------------------------------

fn check_pointwise_finite(values: &[f64], inputs: &[f64], what: &str) -> Result<()> {
    if let Some(p) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::numeric(format!(
            "{what} evaluation overflowed at state magnitude {:.3e}",
            inputs[p].abs()
        )));
    }
    Ok(())
}

/// Galerkin drift `P F(u)`: synthesise `u` on the quadrature grid, apply `f`
/// pointwise, project back.
pub fn apply_drift(spec: &DriftSpec, u: &Field, space: &Space) -> Result<Field> {
    if spec.is_zero() {
        return Ok(Field::zeros(u.tag()));
    }
    let mut values = space.values_on_quad(u)?;
    let inputs = values.clone();
    for v in &mut values {
        *v = spec.f(*v);
    }
    check_pointwise_finite(&values, &inputs, "drift")?;
    space.project_values(&values)
}

/// Galerkin noise term `P G(u) dW`: multiplies the pointwise increment values
/// by `g(u(x))` and projects.  `dw_values` live on the quadrature grid of
/// `space`; the additive kind ignores `u`.
pub fn apply_diffusion(
    spec: &DiffusionSpec,
    u: &Field,
    dw_values: &[f64],
    space: &Space,
) -> Result<Field> {
    let grid = space.quad_points();
    if dw_values.len() != grid.len() {
        return Err(Error::invalid(format!(
            "increment values have length {} but the quadrature grid has {}",
            dw_values.len(),
            grid.len()
        )));
    }
    let values: Vec<f64> = if spec.is_additive() {
        let b = spec.g(0.0);
        dw_values.iter().map(|w| b * w).collect()
    } else {
        let state = space.values_on_quad(u)?;
        state
            .iter()
            .zip(dw_values)
            .map(|(s, w)| spec.g(*s) * w)
            .collect()
    };
    check_pointwise_finite(&values, dw_values, "diffusion")?;
    space.project_values(&values)
}

/// Second-order Milstein term for commutative Nemytskii noise: the projection
/// of `x -> 1/2 g'(u(x)) g(u(x)) [dW(x)^2 - tau q(x)]`, where `(dW, q)` come
/// from [`milstein_bracket`](crate::noise::milstein_bracket).  Identically
/// zero for additive noise (`g' = 0`), in which case no arithmetic is done so
/// Milstein and Euler right-hand sides stay bit-identical.
pub fn milstein_correction(
    spec: &DiffusionSpec,
    u: &Field,
    dw_values: &[f64],
    q_values: &[f64],
    tau: f64,
    space: &Space,
) -> Result<Field> {
    if spec.is_additive() {
        return Ok(Field::zeros(u.tag()));
    }
    let grid = space.quad_points();
    if dw_values.len() != grid.len() || q_values.len() != grid.len() {
        return Err(Error::invalid(
            "bracket values do not match the quadrature grid",
        ));
    }
    let state = space.values_on_quad(u)?;
    let values: Vec<f64> = state
        .iter()
        .zip(dw_values.iter().zip(q_values))
        .map(|(s, (w, q))| 0.5 * spec.dg(*s) * spec.g(*s) * (w * w - tau * q))
        .collect();
    check_pointwise_finite(&values, &state, "Milstein correction")?;
    space.project_values(&values)
}

// ---------------------------------------------------------------------------
// Assumption checking
// ---------------------------------------------------------------------------

/// Outcome of one structural check.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CheckStatus {
    Passed,
    Failed,
    /// Function-space conditions that cannot be verified pointwise are
    /// recorded as declared properties of the built-in catalogue.
    Asserted,
}

#[derive(Clone, Debug)]
pub struct AssumptionCheck {
    pub name: &'static str,
    pub status: CheckStatus,
    pub detail: String,
    /// For failures of the one-sided condition: a pair `(x, y)` whose chord
    /// slope exceeds every bounded constant on the probed range.
    pub witness: Option<(f64, f64)>,
}

/// Which convergence regime the model supports: `gamma = 1` (full first-order
/// Milstein rate) needs the smooth catalogue; structural violations demote.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Regime {
    GammaOne,
    GammaBelowOne,
    Unsupported,
}

#[derive(Clone, Debug)]
pub struct AssumptionReport {
    pub checks: Vec<AssumptionCheck>,
    /// Grid estimate of the one-sided Lipschitz constant `sup f'`.
    pub l_f_estimate: f64,
    pub regime: Regime,
}

impl AssumptionReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.status != CheckStatus::Failed)
    }
}

impl std::fmt::Display for AssumptionReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for check in &self.checks {
            let tag = match check.status {
                CheckStatus::Passed => "PASS",
                CheckStatus::Failed => "FAIL",
                CheckStatus::Asserted => "DECL",
            };
            writeln!(f, "[{tag}] {}: {}", check.name, check.detail)?;
            if let Some((x, y)) = check.witness {
                writeln!(f, "       witness pair x = {x:.6}, y = {y:.6}")?;
            }
        }
        writeln!(f, "estimated one-sided constant: {:.6}", self.l_f_estimate)?;
        let regime = match self.regime {
            Regime::GammaOne => "full smooth regime (second-order spatial rate, first-order Milstein rate)",
            Regime::GammaBelowOne => "reduced-regularity regime (rates degrade gracefully)",
            Regime::Unsupported => "outside the monotone class - no convergence guarantee",
        };
        write!(f, "supported regime: {regime}")
    }
}

const CHECK_RADIUS: f64 = 10.0;
const CHECK_POINTS: usize = 100_000;

/// Grid-based verification of the structural conditions on `f` and `g`:
/// one-sided Lipschitz bound with estimated constant, derivative growth,
/// boundedness of `g'` and `g''`, boundary compatibility `g(0) = 0`, and
/// Lipschitz continuity of `g' g`.  Violations become report entries (with a
/// witness pair where applicable), never errors; `sink` is invoked once per
/// completed check so callers can stream the report.
pub fn check_assumptions(
    drift: &DriftSpec,
    diffusion: &DiffusionSpec,
    mut sink: impl FnMut(&AssumptionCheck),
) -> AssumptionReport {
    let mut checks: Vec<AssumptionCheck> = Vec::new();
    let mut push = |c: AssumptionCheck, sink: &mut dyn FnMut(&AssumptionCheck)| {
        sink(&c);
        checks.push(c);
    };

    let grid: Vec<f64> = (0..=CHECK_POINTS)
        .map(|i| -CHECK_RADIUS + 2.0 * CHECK_RADIUS * i as f64 / CHECK_POINTS as f64)
        .collect();

    // --- one-sided Lipschitz: sup f' bounded, estimated on the grid.
    let mut sup_full = f64::NEG_INFINITY;
    let mut arg_full = 0.0;
    let mut sup_half = f64::NEG_INFINITY;
    for &x in &grid {
        let v = drift.df(x);
        if v > sup_full {
            sup_full = v;
            arg_full = x;
        }
        if x.abs() <= 0.5 * CHECK_RADIUS && v > sup_half {
            sup_half = v;
        }
    }
    let l_f_estimate = sup_full;
    // Unbounded iff the maximum sits at the edge of the probe range and the
    // derivative keeps growing outward.
    let growing_outward = arg_full.abs() > 0.98 * CHECK_RADIUS
        && sup_full > sup_half + 1e-6 * (1.0 + sup_half.abs());
    if growing_outward {
        let x = arg_full;
        let y = arg_full - arg_full.signum() * 2.0 * CHECK_RADIUS / CHECK_POINTS as f64;
        push(
            AssumptionCheck {
                name: "drift one-sided Lipschitz",
                status: CheckStatus::Failed,
                detail: format!(
                    "sup f' grows toward the probe boundary (f'({x:.3}) = {sup_full:.3e}); \
                     no bounded one-sided constant on [-{CHECK_RADIUS}, {CHECK_RADIUS}]"
                ),
                witness: Some((x, y)),
            },
            &mut sink,
        );
    } else {
        let declared = drift.one_sided_constant();
        let ok = sup_full <= declared + 1e-9;
        push(
            AssumptionCheck {
                name: "drift one-sided Lipschitz",
                status: if ok { CheckStatus::Passed } else { CheckStatus::Failed },
                detail: format!("estimated sup f' = {sup_full:.6}, declared L_f = {declared:.6}"),
                witness: if ok { None } else { Some((arg_full, arg_full + 1e-4)) },
            },
            &mut sink,
        );
    }

    // --- derivative growth |f'(x)| <= L'_f (1 + |x|^(q-2)).
    let lp = drift.derivative_growth_constant();
    let q = drift.growth_exponent();
    let mut worst_ratio = 0.0f64;
    for &x in &grid {
        let bound = lp * (1.0 + x.abs().powi(q as i32 - 2));
        let ratio = if bound == 0.0 {
            if drift.df(x) == 0.0 { 0.0 } else { f64::INFINITY }
        } else {
            drift.df(x).abs() / bound
        };
        worst_ratio = worst_ratio.max(ratio);
    }
    push(
        AssumptionCheck {
            name: "drift derivative growth",
            status: if worst_ratio <= 1.0 + 1e-9 {
                CheckStatus::Passed
            } else {
                CheckStatus::Failed
            },
            detail: format!(
                "|f'| / [L'_f (1+|x|^(q-2))] <= {worst_ratio:.3} with L'_f = {lp:.3}, q = {q}"
            ),
            witness: None,
        },
        &mut sink,
    );

    // --- second-derivative growth (polynomial drifts always comply; report
    // the measured constant).
    let qt = q.saturating_sub(3);
    let mut l2 = 0.0f64;
    for &x in &grid {
        l2 = l2.max(drift.d2f(x).abs() / (1.0 + x.abs().powi(qt as i32)));
    }
    push(
        AssumptionCheck {
            name: "drift second-derivative growth",
            status: CheckStatus::Passed,
            detail: format!("|f''(x)| <= {l2:.3} (1 + |x|^{qt}) on the probe grid"),
            witness: None,
        },
        &mut sink,
    );

    // --- diffusion checks.
    let mut sup_dg = 0.0f64;
    let mut sup_d2g = 0.0f64;
    let mut lip_dgg = 0.0f64;
    let mut prev: Option<(f64, f64)> = None;
    for &x in &grid {
        sup_dg = sup_dg.max(diffusion.dg(x).abs());
        sup_d2g = sup_d2g.max(diffusion.d2g(x).abs());
        let dgg = diffusion.dg(x) * diffusion.g(x);
        if let Some((px, pv)) = prev {
            lip_dgg = lip_dgg.max(((dgg - pv) / (x - px)).abs());
        }
        prev = Some((x, dgg));
    }
    push(
        AssumptionCheck {
            name: "diffusion Lipschitz bound",
            status: if sup_dg.is_finite() { CheckStatus::Passed } else { CheckStatus::Failed },
            detail: format!("sup |g'| = {sup_dg:.6} on the probe grid"),
            witness: None,
        },
        &mut sink,
    );
    push(
        AssumptionCheck {
            name: "diffusion second derivative bounded",
            status: if sup_d2g.is_finite() { CheckStatus::Passed } else { CheckStatus::Failed },
            detail: format!("sup |g''| = {sup_d2g:.6} on the probe grid"),
            witness: None,
        },
        &mut sink,
    );
    if diffusion.is_additive() {
        push(
            AssumptionCheck {
                name: "diffusion boundary compatibility",
                status: CheckStatus::Passed,
                detail: "not applicable: additive amplitude, no state dependence".to_string(),
                witness: None,
            },
            &mut sink,
        );
    } else {
        let g0 = diffusion.g(0.0);
        push(
            AssumptionCheck {
                name: "diffusion boundary compatibility",
                status: if g0.abs() <= 1e-12 { CheckStatus::Passed } else { CheckStatus::Failed },
                detail: format!("g(0) = {g0:.3e} (must vanish to respect the boundary condition)"),
                witness: None,
            },
            &mut sink,
        );
    }
    push(
        AssumptionCheck {
            name: "diffusion g'g Lipschitz",
            status: CheckStatus::Passed,
            detail: format!("grid Lipschitz constant of g'g = {lip_dgg:.6}"),
            witness: None,
        },
        &mut sink,
    );

    // --- commutativity: structural for diagonal pointwise noise.
    push(
        AssumptionCheck {
            name: "commutative second-order structure",
            status: if diffusion.is_additive() { CheckStatus::Passed } else { CheckStatus::Asserted },
            detail: if diffusion.is_additive() {
                "trivially satisfied: g' = 0, the second-order term vanishes".to_string()
            } else {
                "pointwise multiplication noise with diagonal covariance has a \
                 symmetric second-order kernel"
                    .to_string()
            },
            witness: None,
        },
        &mut sink,
    );

    // --- higher diffusion regularity: a function-space condition.
    push(
        AssumptionCheck {
            name: "diffusion spatial-regularity mapping",
            status: CheckStatus::Asserted,
            detail: "asserted by the model builder: a function-space condition not \
                     checkable pointwise; holds for the built-in catalogue"
                .to_string(),
            witness: None,
        },
        &mut sink,
    );

    let drift_ok = checks
        .iter()
        .filter(|c| c.name.starts_with("drift"))
        .all(|c| c.status != CheckStatus::Failed);
    let diffusion_smooth = checks
        .iter()
        .filter(|c| c.name.starts_with("diffusion"))
        .all(|c| c.status != CheckStatus::Failed);
    let regime = if !drift_ok {
        Regime::Unsupported
    } else if diffusion_smooth {
        Regime::GammaOne
    } else {
        Regime::GammaBelowOne
    };

    AssumptionReport { checks, l_f_estimate, regime }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::{BasisTag, FemMesh, SpectralBasis};
    use crate::noise::{milstein_bracket, sample_tree, NoiseSynth, QWienerSpec};

    fn spectral(modes: usize) -> Space {
        Space::Spectral(SpectralBasis::for_growth(modes, 4).unwrap())
    }

    fn fem(cells: usize) -> Space {
        Space::Fem(FemMesh::new(cells).unwrap())
    }

    fn simpson(f: impl Fn(f64) -> f64, n: usize) -> f64 {
        let h = 1.0 / n as f64;
        let mut acc = f(0.0) + f(1.0);
        for i in 1..n {
            let w = if i % 2 == 0 { 2.0 } else { 4.0 };
            acc += w * f(i as f64 * h);
        }
        acc * h / 3.0
    }

    #[test]
    fn drift_catalogue_evaluates_and_stores_constants() {
        let cubic = DriftSpec::cubic_allen_cahn();
        assert_eq!(cubic.f(2.0), -6.0);
        assert_eq!(cubic.df(0.0), 1.0);
        assert_eq!(cubic.d2f(1.0), -6.0);
        assert_eq!(cubic.one_sided_constant(), 1.0);
        assert_eq!(cubic.growth_exponent(), 4);

        let lin = DriftSpec::linear(-2.0).unwrap();
        assert_eq!(lin.f(3.0), -6.0);
        assert_eq!(lin.one_sided_constant(), -2.0);
        assert_eq!(lin.growth_exponent(), 2);

        // x - x^3 expressed as an odd polynomial matches the cubic built-in.
        let poly = DriftSpec::odd_polynomial(vec![1.0, -1.0]).unwrap();
        for &x in &[-2.0, -0.3, 0.0, 0.7, 1.9] {
            assert!((poly.f(x) - cubic.f(x)).abs() < 1e-14);
            assert!((poly.df(x) - cubic.df(x)).abs() < 1e-14);
            assert!((poly.d2f(x) - cubic.d2f(x)).abs() < 1e-13);
        }
        // grid estimate of sup f' = 1 at x = 0
        assert!((poly.one_sided_constant() - 1.0).abs() < 1e-9);
        assert_eq!(poly.growth_exponent(), 4);

        assert!(DriftSpec::odd_polynomial(vec![]).is_err());
        assert!(DriftSpec::odd_polynomial(vec![1.0, 1.0]).is_err());
        assert!(DriftSpec::odd_polynomial(vec![1.0, 0.0]).is_err());
        assert!(DriftSpec::linear(f64::NAN).is_err());
    }

    #[test]
    fn drift_constants_bound_the_chord_quotients() {
        // (f(x)-f(y))(x-y) <= L_f (x-y)^2 and |f'| <= L'_f(1+|x|^(q-2))
        // on a dense grid, for every built-in.
        let specs = [
            DriftSpec::cubic_allen_cahn(),
            DriftSpec::linear(-2.0).unwrap(),
            DriftSpec::linear(0.5).unwrap(),
            DriftSpec::zero(),
            DriftSpec::odd_polynomial(vec![2.0, 0.5, -0.25]).unwrap(),
        ];
        for spec in &specs {
            let l = spec.one_sided_constant();
            let lp = spec.derivative_growth_constant();
            let q = spec.growth_exponent() as i32;
            let mut state = 0x2545f4914f6cdd1du64;
            let mut rand = || {
                state ^= state << 13;
                state ^= state >> 7;
                state ^= state << 17;
                (state >> 11) as f64 / (1u64 << 53) as f64
            };
            for _ in 0..2000 {
                let x = 20.0 * rand() - 10.0;
                let y = 20.0 * rand() - 10.0;
                if x != y {
                    let chord = (spec.f(x) - spec.f(y)) / (x - y);
                    assert!(
                        chord <= l + 1e-9 * (1.0 + l.abs()),
                        "{}: chord {chord} exceeds L_f {l}",
                        spec.kind_name()
                    );
                }
                assert!(spec.df(x).abs() <= lp * (1.0 + x.abs().powi(q - 2)) + 1e-12);
            }
        }
    }

    #[test]
    fn apply_drift_spectral_matches_closed_form_and_quadrature() {
        // f(e_1) = e_1 - e_1^3 with e_1^3 = (3/2) e_1 - (1/2) e_3.
        let sp = spectral(8);
        let mut coeffs = vec![0.0; 8];
        coeffs[0] = 1.0;
        let e1 = Field::new(BasisTag::Spectral { modes: 8 }, coeffs).unwrap();
        let out = apply_drift(&DriftSpec::cubic_allen_cahn(), &e1, &sp).unwrap();
        assert!((out.coeffs()[0] - (-0.5)).abs() < 1e-12);
        assert!((out.coeffs()[2] - 0.5).abs() < 1e-12);
        for k in [1, 3, 4, 5, 6, 7] {
            assert!(out.coeffs()[k].abs() < 1e-12);
        }
        // independent quadrature oracle for the mode-3 coefficient
        let pi = std::f64::consts::PI;
        let oracle = simpson(
            |x| {
                let e1v = std::f64::consts::SQRT_2 * (pi * x).sin();
                (e1v - e1v.powi(3)) * std::f64::consts::SQRT_2 * (3.0 * pi * x).sin()
            },
            4000,
        );
        assert!((out.coeffs()[2] - oracle).abs() < 1e-8);
    }

    #[test]
    fn apply_drift_fem_constant_state() {
        // nodal state identically 2 -> pointwise value -6 away from the
        // boundary ramps; the interior nodal coefficients sit within the
        // exponential decay range of the mass-matrix inverse.
        let sp = fem(16);
        let u = Field::new(BasisTag::Fem { cells: 16 }, vec![2.0; 15]).unwrap();
        let out = apply_drift(&DriftSpec::cubic_allen_cahn(), &u, &sp).unwrap();
        assert!((out.coeffs()[7] - (-6.0)).abs() < 1e-3, "mid node {}", out.coeffs()[7]);

        let zero = apply_drift(&DriftSpec::zero(), &u, &sp).unwrap();
        assert!(zero.coeffs().iter().all(|c| *c == 0.0));
    }

    #[test]
    fn apply_drift_overflow_reports_magnitude() {
        let sp = spectral(4);
        let u = Field::new(BasisTag::Spectral { modes: 4 }, vec![1e120, 0.0, 0.0, 0.0]).unwrap();
        let err = apply_drift(&DriftSpec::cubic_allen_cahn(), &u, &sp).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("overflow"), "unexpected message {msg}");
    }

    #[test]
    fn apply_diffusion_additive_returns_scaled_increment_projection() {
        let sp = spectral(8);
        let qw = QWienerSpec::with_decay(8, 4.0).unwrap();
        let tree = sample_tree(&qw, 0.25, 1, 1, 5, 0).unwrap();
        let synth = NoiseSynth::new(&qw, sp.quad_points()).unwrap();
        let mut dw = vec![0.0; sp.quad_points().len()];
        synth.increment_values(tree.level(0).unwrap().step(0, 8), &mut dw);

        let u = Field::zeros(BasisTag::Spectral { modes: 8 });
        let out = apply_diffusion(&DiffusionSpec::additive(1.0).unwrap(), &u, &dw, &sp).unwrap();
        let direct = sp.project_values(&dw).unwrap();
        for (a, b) in out.coeffs().iter().zip(direct.coeffs()) {
            assert_eq!(a, b, "b = 1 must reproduce the increment projection");
        }

        // g(u) = sigma u with u = 0 annihilates the noise.
        let zero = apply_diffusion(&DiffusionSpec::linear(0.5).unwrap(), &u, &dw, &sp).unwrap();
        assert!(zero.coeffs().iter().all(|c| *c == 0.0));

        // shape mismatch is rejected
        assert!(apply_diffusion(&DiffusionSpec::linear(0.5).unwrap(), &u, &dw[1..], &sp).is_err());
    }

    #[test]
    fn apply_diffusion_satisfies_ito_isometry() {
        // E ||P G(u) dW||^2 = tau sum_k q_k ||P(g(u) e_k)||^2 within 3%.
        let sp = spectral(8);
        let qw = QWienerSpec::with_decay(8, 4.0).unwrap();
        let g = DiffusionSpec::linear(0.5).unwrap();
        let u = sp.project(|x| (std::f64::consts::PI * x).sin()).unwrap();
        let tau = 0.25;

        let state = sp.values_on_quad(&u).unwrap();
        let mut expected = 0.0;
        for (k, &qk) in qw.eigenvalues().iter().enumerate() {
            let values: Vec<f64> = sp
                .quad_points()
                .iter()
                .zip(&state)
                .map(|(&x, s)| {
                    g.g(*s)
                        * std::f64::consts::SQRT_2
                        * ((k + 1) as f64 * std::f64::consts::PI * x).sin()
                })
                .collect();
            let proj = sp.project_values(&values).unwrap();
            expected += qk * proj.coeffs().iter().map(|c| c * c).sum::<f64>();
        }
        expected *= tau;

        let n = 10_000usize;
        let mut acc = 0.0;
        let mut dw = vec![0.0; sp.quad_points().len()];
        let synth = NoiseSynth::new(&qw, sp.quad_points()).unwrap();
        for sample in 0..n {
            let tree = sample_tree(&qw, tau, 1, 1, 31, sample as u64).unwrap();
            synth.increment_values(tree.level(0).unwrap().step(0, 8), &mut dw);
            let out = apply_diffusion(&g, &u, &dw, &sp).unwrap();
            acc += out.coeffs().iter().map(|c| c * c).sum::<f64>();
        }
        let measured = acc / n as f64;
        assert!(
            (measured / expected - 1.0).abs() < 0.03,
            "isometry: measured {measured}, expected {expected}"
        );
    }

    #[test]
    fn milstein_correction_matches_hand_expansion_for_single_mode() {
        // g(u) = sigma u, u = e_1, K = 1: the integrand is
        // sigma^2 q_1 (db^2 - tau) sqrt(2) sin^3(pi x), and
        // sqrt(2) sin^3 = (3/4) e_1 - (1/4) e_3.
        let sp = spectral(8);
        let qw = QWienerSpec::from_eigenvalues(vec![0.7]).unwrap();
        let tau = 1.0 / 8.0;
        let tree = sample_tree(&qw, tau, 1, 1, 9, 2).unwrap();
        let (dw, qv) = milstein_bracket(&tree, &qw, 0, 0, sp.quad_points()).unwrap();
        let mut coeffs = vec![0.0; 8];
        coeffs[0] = 1.0;
        let u = Field::new(BasisTag::Spectral { modes: 8 }, coeffs).unwrap();
        let sigma = 0.5;
        let out =
            milstein_correction(&DiffusionSpec::linear(sigma).unwrap(), &u, &dw, &qv, tau, &sp)
                .unwrap();
        let db = tree.level(0).unwrap().step(0, 1)[0];
        let amp = sigma * sigma * 0.7 * (db * db - tau);
        assert!((out.coeffs()[0] - 0.75 * amp).abs() < 1e-12);
        assert!((out.coeffs()[2] - (-0.25 * amp)).abs() < 1e-12);
        for k in [1, 3, 4, 5, 6, 7] {
            assert!(out.coeffs()[k].abs() < 1e-13);
        }
    }

    #[test]
    fn milstein_correction_fem_pointwise_value() {
        // constant interior state c: integrand = 1/2 sigma^2 c (dW^2 - tau q).
        let sp = fem(64);
        let qw = QWienerSpec::from_eigenvalues(vec![1.0]).unwrap();
        let tau = 1.0 / 8.0;
        let tree = sample_tree(&qw, tau, 1, 1, 3, 0).unwrap();
        let (dw, qv) = milstein_bracket(&tree, &qw, 0, 0, sp.quad_points()).unwrap();
        let c = 1.5;
        let u = Field::new(BasisTag::Fem { cells: 64 }, vec![c; 63]).unwrap();
        let sigma = 0.5;
        let out =
            milstein_correction(&DiffusionSpec::linear(sigma).unwrap(), &u, &dw, &qv, tau, &sp)
                .unwrap();
        let db = tree.level(0).unwrap().step(0, 1)[0];
        let x = 0.5;
        let s2 = 2.0 * (std::f64::consts::PI * x).sin().powi(2);
        let expect = 0.5 * sigma * sigma * c * (db * db - tau) * s2;
        let got = sp.evaluate(&out, x).unwrap();
        assert!((got - expect).abs() < 1e-3, "got {got}, expected {expect}");
    }

    #[test]
    fn milstein_correction_zero_mean_and_additive_zero() {
        let sp = spectral(8);
        let qw = QWienerSpec::with_decay(4, 4.0).unwrap();
        let tau = 1.0 / 16.0;
        let u = sp.project(|x| (std::f64::consts::PI * x).sin()).unwrap();
        let g = DiffusionSpec::linear(0.5).unwrap();

        let n = 10_000usize;
        let mut mean = vec![0.0; 8];
        let mut meansq = vec![0.0; 8];
        for sample in 0..n {
            let tree = sample_tree(&qw, tau, 1, 1, 77, sample as u64).unwrap();
            let (dw, qv) = milstein_bracket(&tree, &qw, 0, 0, sp.quad_points()).unwrap();
            let out = milstein_correction(&g, &u, &dw, &qv, tau, &sp).unwrap();
            for (k, c) in out.coeffs().iter().enumerate() {
                mean[k] += c;
                meansq[k] += c * c;
            }
        }
        for k in 0..8 {
            let m = mean[k] / n as f64;
            let var = (meansq[k] / n as f64 - m * m).max(0.0);
            let se = (var / n as f64).sqrt();
            assert!(m.abs() <= 3.0 * se + 1e-15, "mode {k}: mean {m}, se {se}");
        }

        // additive noise produces the exact zero field
        let add = DiffusionSpec::additive(1.0).unwrap();
        let tree = sample_tree(&qw, tau, 1, 1, 77, 0).unwrap();
        let (dw, qv) = milstein_bracket(&tree, &qw, 0, 0, sp.quad_points()).unwrap();
        let out = milstein_correction(&add, &u, &dw, &qv, tau, &sp).unwrap();
        assert!(out.coeffs().iter().all(|c| *c == 0.0));
    }

    #[test]
    fn milstein_correction_is_quadratic_in_the_noise() {
        // doubling every increment (exact in floating point) scales the
        // dW^2 part by exactly 4 at fixed compensator.
        let sp = spectral(8);
        let qw = QWienerSpec::with_decay(4, 4.0).unwrap();
        let tau = 1.0 / 16.0;
        let u = sp.project(|x| (std::f64::consts::PI * x).sin()).unwrap();
        let g = DiffusionSpec::sine(0.5).unwrap();
        let tree = sample_tree(&qw, tau, 1, 1, 13, 0).unwrap();
        let (dw, qv) = milstein_bracket(&tree, &qw, 0, 0, sp.quad_points()).unwrap();
        let dw2: Vec<f64> = dw.iter().map(|w| 2.0 * w).collect();
        let zero_dw = vec![0.0; dw.len()];

        let base = milstein_correction(&g, &u, &dw, &qv, tau, &sp).unwrap();
        let scaled = milstein_correction(&g, &u, &dw2, &qv, tau, &sp).unwrap();
        let comp = milstein_correction(&g, &u, &zero_dw, &qv, tau, &sp).unwrap();
        for k in 0..8 {
            let lhs = scaled.coeffs()[k] - comp.coeffs()[k];
            let rhs = 4.0 * (base.coeffs()[k] - comp.coeffs()[k]);
            assert!(
                (lhs - rhs).abs() <= 1e-13 * (1.0 + rhs.abs()),
                "mode {k}: {lhs} vs {rhs}"
            );
        }
    }

    #[test]
    fn monotonicity_transfers_to_the_discrete_pairing() {
        // <F(u)-F(v), u-v> <= L_f ||u-v||^2 for random spectral pairs.
        let sp = spectral(16);
        let drift = DriftSpec::cubic_allen_cahn();
        let l = drift.one_sided_constant();
        let mut state = 0x9e3779b97f4a7c15u64;
        let mut rand = || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        for _ in 0..100 {
            let a: Vec<f64> = (0..16).map(|k| rand() / (k + 1) as f64).collect();
            let b: Vec<f64> = (0..16).map(|k| rand() / (k + 1) as f64).collect();
            let u = Field::new(BasisTag::Spectral { modes: 16 }, a).unwrap();
            let v = Field::new(BasisTag::Spectral { modes: 16 }, b).unwrap();
            let fu = apply_drift(&drift, &u, &sp).unwrap();
            let fv = apply_drift(&drift, &v, &sp).unwrap();
            let mut pairing = 0.0;
            let mut dist2 = 0.0;
            for k in 0..16 {
                let d = u.coeffs()[k] - v.coeffs()[k];
                pairing += (fu.coeffs()[k] - fv.coeffs()[k]) * d;
                dist2 += d * d;
            }
            assert!(
                pairing <= l * dist2 + 1e-10,
                "pairing {pairing} vs bound {}",
                l * dist2
            );
        }
    }

    #[test]
    fn constant_shift_commutes_only_for_linear_drift() {
        let sp = fem(32);
        let tag = BasisTag::Fem { cells: 32 };
        let mut nodal = vec![0.0; 31];
        for (i, v) in nodal.iter_mut().enumerate() {
            *v = (std::f64::consts::PI * (i + 1) as f64 / 32.0).sin();
        }
        let u = Field::new(tag, nodal.clone()).unwrap();
        let shift = 0.7;
        let shifted = Field::new(tag, nodal.iter().map(|v| v + shift).collect()).unwrap();

        let lin = DriftSpec::linear(-2.0).unwrap();
        let lhs = apply_drift(&lin, &shifted, &sp).unwrap();
        let mut rhs = apply_drift(&lin, &u, &sp).unwrap();
        let ones = Field::new(tag, vec![shift; 31]).unwrap();
        let ones_mapped = apply_drift(&lin, &ones, &sp).unwrap();
        rhs.axpy(1.0, &ones_mapped).unwrap();
        for k in 0..31 {
            assert!((lhs.coeffs()[k] - rhs.coeffs()[k]).abs() < 1e-10);
        }

        let cubic = DriftSpec::cubic_allen_cahn();
        let lhs = apply_drift(&cubic, &shifted, &sp).unwrap();
        let mut rhs = apply_drift(&cubic, &u, &sp).unwrap();
        let ones_mapped = apply_drift(&cubic, &ones, &sp).unwrap();
        rhs.axpy(1.0, &ones_mapped).unwrap();
        let diff: f64 = (0..31)
            .map(|k| (lhs.coeffs()[k] - rhs.coeffs()[k]).abs())
            .fold(0.0, f64::max);
        assert!(diff > 1e-2, "cubic drift must not commute with shifts ({diff})");
    }

    #[test]
    fn check_assumptions_classifies_the_catalogue() {
        // Allen-Cahn + sine diffusion: everything passes, gamma = 1.
        let report = check_assumptions(
            &DriftSpec::cubic_allen_cahn(),
            &DiffusionSpec::sine(0.5).unwrap(),
            |_| {},
        );
        assert!(report.all_passed());
        assert!(report.l_f_estimate >= 0.999 && report.l_f_estimate <= 1.001);
        assert_eq!(report.regime, Regime::GammaOne);
        let dg = report
            .checks
            .iter()
            .find(|c| c.name == "diffusion Lipschitz bound")
            .unwrap();
        assert!(dg.detail.contains("0.5"));

        // linear(-2): estimated constant is -2.
        let report = check_assumptions(
            &DriftSpec::linear(-2.0).unwrap(),
            &DiffusionSpec::additive(1.0).unwrap(),
            |_| {},
        );
        assert!(report.all_passed());
        assert!((report.l_f_estimate + 2.0).abs() < 1e-9);
        let comm = report
            .checks
            .iter()
            .find(|c| c.name == "commutative second-order structure")
            .unwrap();
        assert_eq!(comm.status, CheckStatus::Passed);
        assert!(comm.detail.contains("trivially"));

        // positive leading coefficient: monotonicity fails with a witness.
        let mut streamed = 0usize;
        let report = check_assumptions(
            &DriftSpec::odd_polynomial_unchecked(vec![1.0, 1.0]),
            &DiffusionSpec::linear(0.5).unwrap(),
            |_| streamed += 1,
        );
        assert!(!report.all_passed());
        assert_eq!(report.regime, Regime::Unsupported);
        assert_eq!(streamed, report.checks.len());
        let mono = report
            .checks
            .iter()
            .find(|c| c.name == "drift one-sided Lipschitz")
            .unwrap();
        assert_eq!(mono.status, CheckStatus::Failed);
        let (x, y) = mono.witness.expect("witness pair");
        let chord = (DriftSpec::odd_polynomial_unchecked(vec![1.0, 1.0]).f(x)
            - DriftSpec::odd_polynomial_unchecked(vec![1.0, 1.0]).f(y))
            / (x - y);
        assert!(chord > 100.0, "witness chord slope {chord} should be huge");

        // display formatting carries pass/fail tags
        let text = format!("{report}");
        assert!(text.contains("[FAIL] drift one-sided Lipschitz"));
        assert!(text.contains("witness pair"));
    }

    #[test]
    fn initial_data_project_into_both_bases() {
        let sp = spectral(8);
        let u = InitialDatum::SinPi.project(&sp).unwrap();
        assert!((u.coeffs()[0] - 1.0 / std::f64::consts::SQRT_2).abs() < 1e-12);
        assert!(u.coeffs()[1..].iter().all(|c| c.abs() < 1e-12));

        let m = InitialDatum::Mode { k: 3 }.project(&sp).unwrap();
        assert!((m.coeffs()[2] - 1.0).abs() < 1e-12);

        let z = InitialDatum::Zero.project(&fem(8)).unwrap();
        assert!(z.coeffs().iter().all(|c| *c == 0.0));

        assert!(InitialDatum::Mode { k: 0 }.project(&sp).is_err());

        let model = ModelSpec::default();
        assert_eq!(model.drift.kind_name(), "cubic_allen_cahn");
        assert_eq!(model.diffusion.kind_name(), "linear");
        assert!((model.diffusion.lipschitz_constant() - 0.5).abs() < 1e-15);
    }
}
