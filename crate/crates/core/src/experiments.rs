//! Coupled-path Monte Carlo strong-error studies and convergence fits.
//!
//! A study runs a reference trajectory and a family of coarser tested
//! trajectories on the *same* Brownian paths (coarse increments are exact
//! sums of fine ones), so the measured differences are discretization error
//! rather than statistical noise.  Per sample and tested resolution the
//! driver records `sup_m ||u_tested^m - u_ref at t_m||_{L2}` over the tested
//! time grid, averages the squares across samples, and fits
//! `log error ~ slope * log resolution` by ordinary least squares.
//!
//! Axes: temporal (step sizes against a 4x-or-finer reference), spatial
//! (spectral mode counts or finite-element meshes against a fine spectral
//! reference), and noise truncation (leading-mode cutoffs against a wider
//! cutoff, all else fixed).  The reference scheme is Milstein at the finest
//! level for temporal and spatial studies — the highest-order scheme
//! available — while truncation studies reuse the tested scheme so that the
//! cutoff is the only varying quantity.
//!
//! Samples are independent work units; accumulation across samples is a
//! fixed-order compensated (Kahan) summation, so results are byte-identical
//! regardless of thread count.

use crate::basis::{Field, FemMesh, SineTransfer, Space, SpectralBasis};
use crate::coefficients::{InitialDatum, ModelSpec};
use crate::error::{Error, Result};
use crate::noise::{sample_tree, QWienerSpec};
use crate::schemes::{run, NewtonParams, NoiseView, SchemeConfig, SchemeKind};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

// ---------------------------------------------------------------------------
// Plans
// ---------------------------------------------------------------------------

/// What is being refined, with the tested resolutions and the reference.
#[derive(Clone, Debug, PartialEq)]
pub enum StudyAxis {
    /// Step-size refinement at a fixed spectral space of `modes` modes.
    /// `taus` are strictly decreasing; `ref_tau` is dyadically finer than
    /// every tested step by a factor of at least 4.
    Temporal { taus: Vec<f64>, ref_tau: f64, modes: usize },
    /// Spectral mode-count refinement at a fixed step size against a
    /// reference with `ref_modes >= 4 * max(dims)`.
    SpatialSpectral { dims: Vec<usize>, ref_modes: usize, tau: f64 },
    /// Finite-element mesh refinement at a fixed step size against a
    /// spectral reference with `ref_modes >= 4 * max(cells)`.
    SpatialFem { cells: Vec<usize>, ref_modes: usize, tau: f64 },
    /// Noise-truncation refinement: run the same discretization with the
    /// driving noise restricted to the leading `cutoffs[i]` modes, against a
    /// run restricted to `ref_cutoff` (which may equal a tested cutoff).
    Truncation { cutoffs: Vec<usize>, ref_cutoff: usize, tau: f64, modes: usize },
}

impl StudyAxis {
    pub fn name(&self) -> &'static str {
        match self {
            StudyAxis::Temporal { .. } => "temporal",
            StudyAxis::SpatialSpectral { .. } => "spatial-spectral",
            StudyAxis::SpatialFem { .. } => "spatial-fem",
            StudyAxis::Truncation { .. } => "noise-truncation",
        }
    }
}

/// Full description of one Monte Carlo convergence study.
#[derive(Clone, Debug)]
pub struct StudyPlan {
    pub model: ModelSpec,
    /// Tested scheme for single-scheme studies (and the reference scheme of
    /// truncation studies).
    pub scheme: SchemeKind,
    pub axis: StudyAxis,
    /// Number of modes in the driving Q-Wiener spectrum.
    pub noise_modes: usize,
    /// Spectral decay exponent of the noise eigenvalues (must exceed 3).
    pub noise_beta: f64,
    pub t_final: f64,
    pub samples: usize,
    pub master_seed: u64,
    pub newton: NewtonParams,
    /// Worker threads for the sample loop; 0 keeps the current global pool.
    pub threads: usize,
}

impl StudyPlan {
    /// Validates the plan invariants: monotone resolutions, dyadic step
    /// hierarchy, and a reference at least 4x finer than every tested
    /// resolution (temporal steps or spatial modes; truncation references
    /// may coincide with a tested cutoff).
    pub fn validate(&self) -> Result<()> {
        if self.samples == 0 {
            return Err(Error::config("a study needs at least one sample"));
        }
        if !(self.t_final > 0.0) || !self.t_final.is_finite() {
            return Err(Error::config("t_final must be positive and finite"));
        }
        if self.noise_modes == 0 {
            return Err(Error::config("the noise spectrum needs at least one mode"));
        }
        match &self.axis {
            StudyAxis::Temporal { taus, ref_tau, modes } => {
                if *modes == 0 {
                    return Err(Error::config("temporal studies need modes >= 1"));
                }
                if taus.len() < 3 {
                    return Err(Error::config(
                        "temporal studies need at least 3 tested step sizes for the fit",
                    ));
                }
                if !taus.windows(2).all(|w| w[0] > w[1]) {
                    return Err(Error::config(
                        "tested step sizes must be strictly decreasing",
                    ));
                }
                let ref_steps = dyadic_steps(self.t_final, *ref_tau)?;
                let coarsest = dyadic_steps(self.t_final, taus[0])?;
                for &tau in taus {
                    let steps = dyadic_steps(self.t_final, tau)?;
                    if steps % coarsest != 0 || !(steps / coarsest).is_power_of_two() {
                        return Err(Error::config(format!(
                            "tested step size {tau} is not a dyadic refinement of the \
                             coarsest tested step"
                        )));
                    }
                    if ref_steps % steps != 0
                        || !(ref_steps / steps).is_power_of_two()
                        || ref_steps / steps < 4
                    {
                        return Err(Error::config(format!(
                            "reference step size {ref_tau} must refine every tested step \
                             dyadically by at least a factor of 4 (violated by {tau})"
                        )));
                    }
                }
            }
            StudyAxis::SpatialSpectral { dims, ref_modes, tau } => {
                validate_spatial(dims, *ref_modes, *tau, self.t_final, "mode counts")?;
            }
            StudyAxis::SpatialFem { cells, ref_modes, tau } => {
                validate_spatial(cells, *ref_modes, *tau, self.t_final, "cell counts")?;
            }
            StudyAxis::Truncation { cutoffs, ref_cutoff, tau, modes } => {
                if *modes == 0 {
                    return Err(Error::config("truncation studies need modes >= 1"));
                }
                if cutoffs.len() < 3 {
                    return Err(Error::config(
                        "truncation studies need at least 3 tested cutoffs for the fit",
                    ));
                }
                if !cutoffs.windows(2).all(|w| w[0] < w[1]) {
                    return Err(Error::config("cutoffs must be strictly increasing"));
                }
                if cutoffs[0] == 0 {
                    return Err(Error::config("cutoffs must be at least 1"));
                }
                let max = *cutoffs.last().expect("nonempty");
                if *ref_cutoff < max || *ref_cutoff > self.noise_modes {
                    return Err(Error::config(format!(
                        "reference cutoff {ref_cutoff} must lie between the largest \
                         tested cutoff {max} and the spectrum size {}",
                        self.noise_modes
                    )));
                }
                dyadic_steps(self.t_final, *tau)?;
            }
        }
        Ok(())
    }

    /// Canonical flat text rendering of the plan plus the tested scheme;
    /// hashed into the report provenance.
    fn canonical_description(&self, scheme: SchemeKind) -> String {
        let mut s = String::new();
        s.push_str(&format!("axis={}\n", self.axis.name()));
        match &self.axis {
            StudyAxis::Temporal { taus, ref_tau, modes } => {
                s.push_str(&format!(
                    "taus={taus:?}\nref_tau={ref_tau:?}\nmodes={modes}\n"
                ));
            }
            StudyAxis::SpatialSpectral { dims, ref_modes, tau } => {
                s.push_str(&format!(
                    "dims={dims:?}\nref_modes={ref_modes}\ntau={tau:?}\n"
                ));
            }
            StudyAxis::SpatialFem { cells, ref_modes, tau } => {
                s.push_str(&format!(
                    "cells={cells:?}\nref_modes={ref_modes}\ntau={tau:?}\n"
                ));
            }
            StudyAxis::Truncation { cutoffs, ref_cutoff, tau, modes } => {
                s.push_str(&format!(
                    "cutoffs={cutoffs:?}\nref_cutoff={ref_cutoff}\ntau={tau:?}\nmodes={modes}\n"
                ));
            }
        }
        s.push_str(&format!("scheme={}\n", scheme.name()));
        s.push_str(&format!(
            "drift={};{:?}\n",
            self.model.drift.kind_name(),
            self.model.drift.polynomial_coeffs()
        ));
        s.push_str(&format!(
            "diffusion={};{:?}\n",
            self.model.diffusion.kind_name(),
            self.model.diffusion.parameter()
        ));
        s.push_str(&format!("init={}\n", init_name(&self.model.init)));
        s.push_str(&format!(
            "noise_modes={}\nnoise_beta={:?}\nt_final={:?}\nsamples={}\nmaster_seed={}\n",
            self.noise_modes, self.noise_beta, self.t_final, self.samples, self.master_seed
        ));
        s.push_str(&format!(
            "newton_tol={:?}\nnewton_max_iter={}\nnewton_damping={:?}\n",
            self.newton.tol, self.newton.max_iter, self.newton.damping
        ));
        s
    }
}

fn init_name(init: &InitialDatum) -> String {
    match init {
        InitialDatum::SinPi => "sin_pi".into(),
        InitialDatum::Parabola => "parabola".into(),
        InitialDatum::Zero => "zero".into(),
        InitialDatum::Mode { k } => format!("mode_{k}"),
    }
}

fn validate_spatial(
    dims: &[usize],
    ref_modes: usize,
    tau: f64,
    t_final: f64,
    what: &str,
) -> Result<()> {
    if dims.len() < 3 {
        return Err(Error::config(format!(
            "spatial studies need at least 3 tested {what} for the fit"
        )));
    }
    if !dims.windows(2).all(|w| w[0] < w[1]) || dims[0] == 0 {
        return Err(Error::config(format!(
            "tested {what} must be positive and strictly increasing"
        )));
    }
    let max = *dims.last().expect("nonempty");
    if ref_modes < 4 * max {
        return Err(Error::config(format!(
            "reference mode count {ref_modes} must be at least 4x the finest \
             tested resolution ({max})"
        )));
    }
    dyadic_steps(t_final, tau)?;
    Ok(())
}

/// Number of steps of size `tau` covering `t_final`; errors unless the count
/// is a whole number.
fn dyadic_steps(t_final: f64, tau: f64) -> Result<usize> {
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(Error::config(format!("step size {tau} must be positive")));
    }
    let steps = t_final / tau;
    let rounded = steps.round();
    if rounded < 1.0 || (steps - rounded).abs() > 1e-6 * steps.max(1.0) {
        return Err(Error::config(format!(
            "step size {tau} does not divide the horizon {t_final} into whole steps"
        )));
    }
    Ok(rounded as usize)
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct FitSummary {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Provenance {
    pub master_seed: u64,
    pub samples: usize,
    pub failed_samples: Vec<u64>,
    pub config_digest: String,
    pub created_unix: u64,
    pub version: String,
}

/// One scheme's study result: per-resolution RMS strong errors with standard
/// errors, the log-log fit, the per-sample raw errors behind them, and
/// provenance for reproduction.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ErrorReport {
    pub axis: String,
    pub scheme: String,
    /// Resolution parameter per tested point: tau (temporal), 1/modes or
    /// 1/cells (spatial), 1/cutoff (truncation).  Error is fitted as
    /// resolution^slope, so slopes are positive.
    pub resolutions: Vec<f64>,
    pub errors: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub fit: FitSummary,
    /// `raw_errors[i][j]`: sup-in-time error of surviving sample `j` at
    /// tested resolution `i` (samples in id order, failures omitted).
    pub raw_errors: Vec<Vec<f64>>,
    pub provenance: Provenance,
}

/// Serialization views: everything except provenance — the deterministic
/// portion that reproducibility guarantees cover.
#[derive(Serialize)]
struct NumericsView<'a> {
    axis: &'a str,
    scheme: &'a str,
    resolutions: &'a [f64],
    errors: &'a [f64],
    std_errors: &'a [f64],
    fit: &'a FitSummary,
    raw_errors: &'a [Vec<f64>],
}

impl ErrorReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text)
            .map_err(|e| Error::invalid(format!("malformed report JSON: {e}")))
    }

    /// The reproducible numeric content (everything except provenance),
    /// serialized canonically; byte-equal across identically seeded runs.
    pub fn numerics_json(&self) -> String {
        serde_json::to_string(&NumericsView {
            axis: &self.axis,
            scheme: &self.scheme,
            resolutions: &self.resolutions,
            errors: &self.errors,
            std_errors: &self.std_errors,
            fit: &self.fit,
            raw_errors: &self.raw_errors,
        })
        .expect("numerics serialize")
    }

    /// One CSV row per tested resolution.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("resolution,rms_error,std_error\n");
        for i in 0..self.resolutions.len() {
            s.push_str(&format!(
                "{},{},{}\n",
                self.resolutions[i], self.errors[i], self.std_errors[i]
            ));
        }
        s
    }
}

// ---------------------------------------------------------------------------
// Rate fitting
// ---------------------------------------------------------------------------

/// Ordinary least squares of `log error` on `log resolution`.  Errors decay
/// like `resolution^slope`, so slopes are positive (0.5, 1, 2, ...).
pub fn fit_rate(points: &[(f64, f64)]) -> Result<FitSummary> {
    if points.len() < 3 {
        return Err(Error::invalid(format!(
            "rate fit needs at least 3 points, got {}",
            points.len()
        )));
    }
    for &(r, e) in points {
        if !(r > 0.0) || !(e > 0.0) || !r.is_finite() || !e.is_finite() {
            return Err(Error::invalid(format!(
                "rate fit needs positive finite data, got ({r}, {e})"
            )));
        }
    }
    let n = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    if sxx <= 0.0 {
        return Err(Error::invalid("rate fit needs at least two distinct resolutions"));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_tot: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    let ss_res: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| {
            let p = intercept + slope * x;
            (y - p) * (y - p)
        })
        .sum();
    // all-equal errors fit the constant model exactly
    let r2 = if ss_tot <= 1e-30 { 1.0 } else { 1.0 - ss_res / ss_tot };
    Ok(FitSummary { slope, intercept, r2 })
}

// ---------------------------------------------------------------------------
// Study drivers
// ---------------------------------------------------------------------------

/// Runs the study for the plan's single tested scheme.
pub fn strong_error_study(plan: &StudyPlan) -> Result<ErrorReport> {
    if matches!(plan.axis, StudyAxis::Truncation { .. }) {
        return Err(Error::config(
            "noise-truncation plans belong to truncation_study",
        ));
    }
    let mut reports = drive(plan, &[plan.scheme])?;
    Ok(reports.pop().expect("one scheme in, one report out"))
}

/// Runs several tested schemes against one shared reference per sample.
/// Each scheme's report is numerically identical to what a solo
/// [`strong_error_study`] of that scheme would produce, at the cost of a
/// single reference sweep.
pub fn study_multi(plan: &StudyPlan, schemes: &[SchemeKind]) -> Result<Vec<ErrorReport>> {
    if matches!(plan.axis, StudyAxis::Truncation { .. }) {
        return Err(Error::config(
            "noise-truncation plans belong to truncation_study",
        ));
    }
    if schemes.is_empty() {
        return Err(Error::config("study_multi needs at least one scheme"));
    }
    drive(plan, schemes)
}

/// Runs a noise-truncation study: both the tested runs and the reference use
/// the plan's scheme and discretization, differing only in how many leading
/// noise modes drive them.  A tested cutoff equal to the reference cutoff
/// yields exactly zero error; the rate fit covers the nonzero entries.
pub fn truncation_study(plan: &StudyPlan) -> Result<ErrorReport> {
    if !matches!(plan.axis, StudyAxis::Truncation { .. }) {
        return Err(Error::config("truncation_study needs a noise-truncation axis"));
    }
    let mut reports = drive(plan, &[plan.scheme])?;
    Ok(reports.pop().expect("one scheme in, one report out"))
}

/// One tested resolution, fully prepared.
struct TestedLevel {
    resolution: f64,
    space: Space,
    tau: f64,
    steps: usize,
    /// Ratio of reference steps per tested step.
    stride: usize,
    /// Noise-mode restriction (truncation axis only).
    active: Option<usize>,
    /// Nodal-to-modal map into the reference basis (FEM tested runs only).
    transfer: Option<SineTransfer>,
}

struct Runtime {
    qspec: QWienerSpec,
    ref_space: Space,
    ref_scheme: SchemeKind,
    ref_tau: f64,
    ref_steps: usize,
    ref_active: Option<usize>,
    n_levels: usize,
    tested: Vec<TestedLevel>,
}

/// Builds a spectral space whose midpoint quadrature is exact for every
/// product the schemes integrate: drift polynomials of a state with `modes`
/// modes (frequency <= growth * modes) and diffusion/correction products
/// with the noise (frequency <= 2 * (modes + noise_modes)), against any test
/// function.  The midpoint rule with P panels is exact below frequency 2P.
fn spectral_space(modes: usize, growth: u32, noise_modes: usize) -> Result<Space> {
    let freq = (growth as usize * modes).max(2 * (modes + noise_modes));
    let p = (freq / 2 + 1).max(2 * modes).next_power_of_two().max(1024);
    Ok(Space::Spectral(SpectralBasis::with_quadrature(modes, p)?))
}

fn build_runtime(plan: &StudyPlan) -> Result<Runtime> {
    plan.validate()?;
    let qspec = QWienerSpec::with_decay(plan.noise_modes, plan.noise_beta)?;
    let growth = plan.model.drift.growth_exponent();
    match &plan.axis {
        StudyAxis::Temporal { taus, ref_tau, modes } => {
            let space = spectral_space(*modes, growth, plan.noise_modes)?;
            let ref_steps = dyadic_steps(plan.t_final, *ref_tau)?;
            let coarsest = dyadic_steps(plan.t_final, taus[0])?;
            let n_levels = (ref_steps / coarsest).trailing_zeros() as usize + 1;
            let tested = taus
                .iter()
                .map(|&tau| {
                    let steps = dyadic_steps(plan.t_final, tau)?;
                    Ok(TestedLevel {
                        resolution: tau,
                        space: space.clone(),
                        tau,
                        steps,
                        stride: ref_steps / steps,
                        active: None,
                        transfer: None,
                    })
                })
                .collect::<Result<_>>()?;
            Ok(Runtime {
                qspec,
                ref_space: space,
                ref_scheme: SchemeKind::Milstein,
                ref_tau: *ref_tau,
                ref_steps,
                ref_active: None,
                n_levels,
                tested,
            })
        }
        StudyAxis::SpatialSpectral { dims, ref_modes, tau } => {
            let ref_space = spectral_space(*ref_modes, growth, plan.noise_modes)?;
            let steps = dyadic_steps(plan.t_final, *tau)?;
            let tested = dims
                .iter()
                .map(|&n| {
                    Ok(TestedLevel {
                        resolution: 1.0 / n as f64,
                        space: spectral_space(n, growth, plan.noise_modes)?,
                        tau: *tau,
                        steps,
                        stride: 1,
                        active: None,
                        transfer: None,
                    })
                })
                .collect::<Result<_>>()?;
            Ok(Runtime {
                qspec,
                ref_space,
                ref_scheme: SchemeKind::Milstein,
                ref_tau: *tau,
                ref_steps: steps,
                ref_active: None,
                n_levels: 1,
                tested,
            })
        }
        StudyAxis::SpatialFem { cells, ref_modes, tau } => {
            let ref_space = spectral_space(*ref_modes, growth, plan.noise_modes)?;
            let steps = dyadic_steps(plan.t_final, *tau)?;
            let tested = cells
                .iter()
                .map(|&c| {
                    Ok(TestedLevel {
                        resolution: 1.0 / c as f64,
                        space: Space::Fem(FemMesh::new(c)?),
                        tau: *tau,
                        steps,
                        stride: 1,
                        active: None,
                        transfer: Some(SineTransfer::new(*ref_modes, c)?),
                    })
                })
                .collect::<Result<_>>()?;
            Ok(Runtime {
                qspec,
                ref_space,
                ref_scheme: SchemeKind::Milstein,
                ref_tau: *tau,
                ref_steps: steps,
                ref_active: None,
                n_levels: 1,
                tested,
            })
        }
        StudyAxis::Truncation { cutoffs, ref_cutoff, tau, modes } => {
            let space = spectral_space(*modes, growth, plan.noise_modes)?;
            let steps = dyadic_steps(plan.t_final, *tau)?;
            let tested = cutoffs
                .iter()
                .map(|&k| {
                    Ok(TestedLevel {
                        resolution: 1.0 / k as f64,
                        space: space.clone(),
                        tau: *tau,
                        steps,
                        stride: 1,
                        active: Some(k),
                        transfer: None,
                    })
                })
                .collect::<Result<_>>()?;
            Ok(Runtime {
                qspec,
                ref_space: space,
                ref_scheme: plan.scheme,
                ref_tau: *tau,
                ref_steps: steps,
                ref_active: Some(*ref_cutoff),
                n_levels: 1,
                tested,
            })
        }
    }
}

/// Squared L2 distance between a tested state and a reference state, taken
/// in the reference (spectral) basis.
fn sup_distance_sq(level: &TestedLevel, tested: &Field, reference: &Field) -> f64 {
    let ref_coeffs = reference.coeffs();
    match &level.transfer {
        Some(tr) => {
            let mut modal = vec![0.0; ref_coeffs.len()];
            tr.nodal_to_modal(tested.coeffs(), &mut modal);
            modal
                .iter()
                .zip(ref_coeffs)
                .map(|(a, b)| (a - b) * (a - b))
                .sum()
        }
        None => {
            let t = tested.coeffs();
            let mut acc = 0.0;
            for k in 0..ref_coeffs.len() {
                let a = if k < t.len() { t[k] } else { 0.0 };
                let d = a - ref_coeffs[k];
                acc += d * d;
            }
            acc
        }
    }
}

/// Per-sample work: one tree, one reference trajectory, all tested
/// trajectories for all schemes.  Returns `sup_sq[scheme][resolution]`.
fn run_sample(
    plan: &StudyPlan,
    rt: &Runtime,
    schemes: &[SchemeKind],
    sample_id: u64,
) -> std::result::Result<Vec<Vec<f64>>, String> {
    let fail = |stage: &str, e: Error| format!("{stage}: {e}");
    let tree = sample_tree(
        &rt.qspec,
        plan.t_final,
        rt.ref_steps,
        rt.n_levels,
        plan.master_seed,
        sample_id,
    )
    .map_err(|e| fail("noise sampling", e))?;
    let ref_cfg = SchemeConfig {
        scheme: rt.ref_scheme,
        basis: rt.ref_space.tag(),
        tau: rt.ref_tau,
        steps: rt.ref_steps,
        newton: plan.newton,
    };
    let ref_noise = NoiseView {
        tree: &tree,
        spec: &rt.qspec,
        level: rt.n_levels - 1,
        active: rt.ref_active,
    };
    let reference = run(&plan.model, &ref_cfg, &rt.ref_space, &ref_noise)
        .map_err(|e| fail("reference trajectory", e))?;

    let mut out = vec![vec![0.0; rt.tested.len()]; schemes.len()];
    for (res_idx, level) in rt.tested.iter().enumerate() {
        let level_idx = tree
            .level_with_steps(level.steps)
            .map_err(|e| fail("level lookup", e))?;
        for (s_idx, &scheme) in schemes.iter().enumerate() {
            let cfg = SchemeConfig {
                scheme,
                basis: level.space.tag(),
                tau: level.tau,
                steps: level.steps,
                newton: plan.newton,
            };
            let noise = NoiseView {
                tree: &tree,
                spec: &rt.qspec,
                level: level_idx,
                active: level.active,
            };
            let traj = run(&plan.model, &cfg, &level.space, &noise)
                .map_err(|e| fail(&format!("{} trajectory", scheme.name()), e))?;
            let mut sup = 0.0f64;
            for m in 0..=level.steps {
                let d = sup_distance_sq(level, traj.state(m), reference.state(m * level.stride));
                if !d.is_finite() {
                    return Err(format!(
                        "{} trajectory: non-finite error at step {m}",
                        scheme.name()
                    ));
                }
                sup = sup.max(d);
            }
            out[s_idx][res_idx] = sup;
        }
    }
    Ok(out)
}

/// Fixed-order compensated accumulator.
struct Kahan {
    sum: f64,
    carry: f64,
}

impl Kahan {
    fn new() -> Self {
        Kahan { sum: 0.0, carry: 0.0 }
    }

    fn add(&mut self, x: f64) {
        let y = x - self.carry;
        let t = self.sum + y;
        self.carry = (t - self.sum) - y;
        self.sum = t;
    }
}

fn drive(plan: &StudyPlan, schemes: &[SchemeKind]) -> Result<Vec<ErrorReport>> {
    let rt = build_runtime(plan)?;

    let work = |sid: u64| run_sample(plan, &rt, schemes, sid);
    let outcomes: Vec<std::result::Result<Vec<Vec<f64>>, String>> = if plan.threads > 0 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(plan.threads)
            .build()
            .map_err(|e| Error::Study(format!("thread pool: {e}")))?;
        pool.install(|| (0..plan.samples as u64).into_par_iter().map(work).collect())
    } else {
        (0..plan.samples as u64).into_par_iter().map(work).collect()
    };

    let mut failed = Vec::new();
    for (sid, outcome) in outcomes.iter().enumerate() {
        if let Err(msg) = outcome {
            eprintln!("sample {sid} failed: {msg}");
            failed.push(sid as u64);
        }
    }
    if failed.len() * 100 > plan.samples {
        return Err(Error::Study(format!(
            "{} of {} samples failed (more than 1%), first failure: {}",
            failed.len(),
            plan.samples,
            outcomes
                .iter()
                .find_map(|o| o.as_ref().err().map(|s| s.as_str()))
                .unwrap_or("unknown")
        )));
    }
    let survivors = plan.samples - failed.len();
    if survivors == 0 {
        return Err(Error::Study("every sample failed".into()));
    }

    let created_unix = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);

    let mut reports = Vec::with_capacity(schemes.len());
    for (s_idx, &scheme) in schemes.iter().enumerate() {
        let n_res = rt.tested.len();
        let mut raw_errors: Vec<Vec<f64>> = vec![Vec::with_capacity(survivors); n_res];
        let mut errors = Vec::with_capacity(n_res);
        let mut std_errors = Vec::with_capacity(n_res);
        for res_idx in 0..n_res {
            // fixed-order mean of the squared sups over surviving samples
            let mut mean_acc = Kahan::new();
            for outcome in &outcomes {
                if let Ok(sup_sq) = outcome {
                    mean_acc.add(sup_sq[s_idx][res_idx]);
                }
            }
            let n = survivors as f64;
            let mean = mean_acc.sum / n;
            let mut var_acc = Kahan::new();
            for outcome in &outcomes {
                if let Ok(sup_sq) = outcome {
                    let d = sup_sq[s_idx][res_idx] - mean;
                    var_acc.add(d * d);
                }
            }
            let rms = mean.max(0.0).sqrt();
            let se = if survivors >= 2 && rms > 0.0 {
                let var = var_acc.sum / (n - 1.0);
                (var / n).sqrt() / (2.0 * rms)
            } else {
                0.0
            };
            if !rms.is_finite() || !se.is_finite() {
                return Err(Error::Study(format!(
                    "non-finite statistics at resolution index {res_idx}"
                )));
            }
            for outcome in &outcomes {
                if let Ok(sup_sq) = outcome {
                    raw_errors[res_idx].push(sup_sq[s_idx][res_idx].max(0.0).sqrt());
                }
            }
            errors.push(rms);
            std_errors.push(se);
        }

        // drop exactly-zero points (tested == reference) before fitting
        let fit_points: Vec<(f64, f64)> = rt
            .tested
            .iter()
            .zip(&errors)
            .filter(|(_, e)| **e > 0.0)
            .map(|(l, e)| (l.resolution, *e))
            .collect();
        let fit = fit_rate(&fit_points).map_err(|e| {
            Error::Study(format!("rate fit failed for scheme {}: {e}", scheme.name()))
        })?;

        let digest = fnv1a64(plan.canonical_description(scheme).as_bytes());
        reports.push(ErrorReport {
            axis: plan.axis.name().to_string(),
            scheme: scheme.name().to_string(),
            resolutions: rt.tested.iter().map(|l| l.resolution).collect(),
            errors,
            std_errors,
            fit,
            raw_errors,
            provenance: Provenance {
                master_seed: plan.master_seed,
                samples: plan.samples,
                failed_samples: failed.clone(),
                config_digest: format!("fnv1a64:{digest:016x}"),
                created_unix,
                version: env!("CARGO_PKG_VERSION").to_string(),
            },
        });
    }
    Ok(reports)
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash = 0xcbf29ce484222325u64;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}
