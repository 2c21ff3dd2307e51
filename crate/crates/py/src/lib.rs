//! Python bindings: a thin, read-only window into the solver library for
//! interactive inspection and plotting.  Heavy orchestration (full studies,
//! report files) stays in the command-line tool; these functions cover the
//! pieces useful from a notebook — eigenpairs, projections, norms, single
//! trajectories, rate fits, model checks, and raw noise increments.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use monospde::basis::{eigenpair, eigenvalue, BasisTag, Field, Space, SpectralBasis};
use monospde::coefficients::{
    check_assumptions, DiffusionSpec, DriftSpec, InitialDatum, ModelSpec,
};
use monospde::experiments::fit_rate;
use monospde::noise::{sample_tree, QWienerSpec};
use monospde::schemes::{run, NewtonParams, NoiseView, SchemeConfig, SchemeKind};
use monospde::Error as LibError;

fn to_py(e: LibError) -> PyErr {
    match e {
        LibError::Config(_) | LibError::InvalidArgument(_) => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn drift_from(name: &str, c: f64, coeffs: Option<Vec<f64>>, checked: bool) -> PyResult<DriftSpec> {
    match name {
        "allen-cahn" => Ok(DriftSpec::cubic_allen_cahn()),
        "linear" => DriftSpec::linear(c).map_err(to_py),
        "zero" => Ok(DriftSpec::zero()),
        "odd-polynomial" => {
            let coeffs = coeffs.ok_or_else(|| {
                PyValueError::new_err("odd-polynomial drift needs the coeffs argument")
            })?;
            if checked {
                DriftSpec::odd_polynomial(coeffs).map_err(to_py)
            } else {
                Ok(DriftSpec::odd_polynomial_unchecked(coeffs))
            }
        }
        other => Err(PyValueError::new_err(format!(
            "unknown drift `{other}` (expected allen-cahn | linear | zero | odd-polynomial)"
        ))),
    }
}

fn diffusion_from(name: &str, sigma: f64, b: f64) -> PyResult<DiffusionSpec> {
    match name {
        "linear" => DiffusionSpec::linear(sigma).map_err(to_py),
        "additive" => DiffusionSpec::additive(b).map_err(to_py),
        "sine" => DiffusionSpec::sine(sigma).map_err(to_py),
        other => Err(PyValueError::new_err(format!(
            "unknown diffusion `{other}` (expected linear | additive | sine)"
        ))),
    }
}

fn init_from(name: &str) -> PyResult<InitialDatum> {
    match name {
        "sin-pi" => Ok(InitialDatum::SinPi),
        "parabola" => Ok(InitialDatum::Parabola),
        "zero" => Ok(InitialDatum::Zero),
        other => match other.strip_prefix("mode:").and_then(|k| k.parse::<usize>().ok()) {
            Some(k) => Ok(InitialDatum::Mode { k }),
            None => Err(PyValueError::new_err(format!(
                "unknown initial datum `{other}` (expected sin-pi | parabola | zero | mode:<k>)"
            ))),
        },
    }
}

fn scheme_from(name: &str) -> PyResult<SchemeKind> {
    match name {
        "euler" => Ok(SchemeKind::Euler),
        "milstein" => Ok(SchemeKind::Milstein),
        other => Err(PyValueError::new_err(format!(
            "unknown scheme `{other}` (expected euler | milstein)"
        ))),
    }
}

/// Dirichlet eigenvalue `lambda_k = (k pi)^2` of `-d^2/dx^2` on `(0, 1)`.
#[pyfunction]
fn laplace_eigenvalue(k: usize) -> PyResult<f64> {
    eigenvalue(k).map_err(to_py)
}

/// Values of the L2-normalised eigenfunction `sqrt(2) sin(k pi x)` at `xs`.
#[pyfunction]
fn laplace_eigenfunction(k: usize, xs: Vec<f64>) -> PyResult<Vec<f64>> {
    let (_, e_k) = eigenpair(k).map_err(to_py)?;
    Ok(xs.into_iter().map(e_k).collect())
}

/// Spectral coefficients of the named initial datum on `modes` modes.
#[pyfunction]
fn project_initial(init: &str, modes: usize) -> PyResult<Vec<f64>> {
    let datum = init_from(init)?;
    let basis = SpectralBasis::for_growth(modes, 1).map_err(to_py)?;
    let space = Space::Spectral(basis);
    let field = space.project(|x| datum.evaluate(x)).map_err(to_py)?;
    Ok(field.coeffs().to_vec())
}

/// Sobolev norm `sqrt(sum_k lambda_k^theta c_k^2)` of spectral coefficients;
/// `theta = 0` is the L2 norm, `theta = 1` the H^1_0 seminorm.
#[pyfunction]
fn sobolev_norm(coeffs: Vec<f64>, theta: f64) -> PyResult<f64> {
    let field = Field::new(BasisTag::Spectral { modes: coeffs.len() }, coeffs).map_err(to_py)?;
    monospde::basis::sobolev_norm(&field, theta).map_err(to_py)
}

/// Ordinary least squares of log error against log resolution; returns
/// `(slope, intercept, r2)` for points `[(resolution, error), ...]`.
#[pyfunction]
fn fit_convergence_rate(points: Vec<(f64, f64)>) -> PyResult<(f64, f64, f64)> {
    let fit = fit_rate(&points).map_err(to_py)?;
    Ok((fit.slope, fit.intercept, fit.r2))
}

/// Structural checks on the drift/diffusion pair, as a printable report.
/// Unsound models (for example a polynomial drift with positive leading
/// coefficient) are examined rather than rejected.
#[pyfunction]
#[pyo3(signature = (drift="allen-cahn", drift_c=1.0, coeffs=None, diffusion="linear", sigma=0.5, b=1.0))]
fn check_model(
    drift: &str,
    drift_c: f64,
    coeffs: Option<Vec<f64>>,
    diffusion: &str,
    sigma: f64,
    b: f64,
) -> PyResult<String> {
    let f = drift_from(drift, drift_c, coeffs, false)?;
    let g = diffusion_from(diffusion, sigma, b)?;
    let report = check_assumptions(&f, &g, |_| {});
    Ok(report.to_string())
}

/// Brownian mode increments of one sample path: a `steps x modes` list of
/// lists, `result[m][k]` being the increment of mode `k+1` over step `m`.
/// Identical `(seed, sample)` pairs reproduce identical increments.
#[pyfunction]
#[pyo3(signature = (modes=64, beta=4.0, t_final=0.5, steps=32, seed=0, sample=0))]
fn noise_increments(
    modes: usize,
    beta: f64,
    t_final: f64,
    steps: usize,
    seed: u64,
    sample: u64,
) -> PyResult<Vec<Vec<f64>>> {
    let spec = QWienerSpec::with_decay(modes, beta).map_err(to_py)?;
    let tree = sample_tree(&spec, t_final, steps, 1, seed, sample).map_err(to_py)?;
    let level = tree.level(0).map_err(to_py)?;
    Ok((0..steps).map(|m| level.step(m, modes).to_vec()).collect())
}

/// Runs one trajectory of the drift-implicit Euler or Milstein scheme on a
/// spectral space and returns a dict with `times`, `l2_norms`, the final
/// coefficient vector, and the worst Newton iteration count.
#[pyfunction]
#[pyo3(signature = (
    scheme="euler", drift="allen-cahn", drift_c=1.0, coeffs=None,
    diffusion="linear", sigma=0.5, b=1.0, init="sin-pi",
    modes=64, noise_modes=64, beta=4.0, tau=0.015625, steps=32,
    seed=0, sample=0,
))]
#[allow(clippy::too_many_arguments)]
fn run_trajectory(
    py: Python<'_>,
    scheme: &str,
    drift: &str,
    drift_c: f64,
    coeffs: Option<Vec<f64>>,
    diffusion: &str,
    sigma: f64,
    b: f64,
    init: &str,
    modes: usize,
    noise_modes: usize,
    beta: f64,
    tau: f64,
    steps: usize,
    seed: u64,
    sample: u64,
) -> PyResult<PyObject> {
    let model = ModelSpec {
        drift: drift_from(drift, drift_c, coeffs, true)?,
        diffusion: diffusion_from(diffusion, sigma, b)?,
        init: init_from(init)?,
    };
    let basis =
        SpectralBasis::for_growth(modes, model.drift.growth_exponent()).map_err(to_py)?;
    let space = Space::Spectral(basis);
    let qspec = QWienerSpec::with_decay(noise_modes, beta).map_err(to_py)?;
    let t_final = tau * steps as f64;
    let tree = sample_tree(&qspec, t_final, steps, 1, seed, sample).map_err(to_py)?;
    let noise = NoiseView { tree: &tree, spec: &qspec, level: 0, active: None };
    let cfg = SchemeConfig {
        scheme: scheme_from(scheme)?,
        basis: space.tag(),
        tau,
        steps,
        newton: NewtonParams::default(),
    };
    let traj = run(&model, &cfg, &space, &noise).map_err(to_py)?;

    let times: Vec<f64> = (0..=steps).map(|m| m as f64 * tau).collect();
    let l2_norms: Vec<f64> = traj
        .states()
        .iter()
        .map(|s| space.l2_norm(s).map_err(to_py))
        .collect::<PyResult<_>>()?;
    let final_coeffs = traj.states().last().expect("at least u^0").coeffs().to_vec();
    let newton_max = traj.newton_iterations().iter().copied().max().unwrap_or(0);

    let out = PyDict::new(py);
    out.set_item("times", times)?;
    out.set_item("l2_norms", l2_norms)?;
    out.set_item("final_coeffs", final_coeffs)?;
    out.set_item("newton_max", newton_max)?;
    Ok(out.into())
}

#[pymodule]
fn monospde_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(laplace_eigenvalue, m)?)?;
    m.add_function(wrap_pyfunction!(laplace_eigenfunction, m)?)?;
    m.add_function(wrap_pyfunction!(project_initial, m)?)?;
    m.add_function(wrap_pyfunction!(sobolev_norm, m)?)?;
    m.add_function(wrap_pyfunction!(fit_convergence_rate, m)?)?;
    m.add_function(wrap_pyfunction!(check_model, m)?)?;
    m.add_function(wrap_pyfunction!(noise_increments, m)?)?;
    m.add_function(wrap_pyfunction!(run_trajectory, m)?)?;
    Ok(())
}
