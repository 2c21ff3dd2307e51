//! Flat `key = value` configuration: grammar, defaults, echo, and the
//! conversions into library plans.
//!
//! The full documented key set (every key is optional; the default
//! configuration is the temporal Euler study of the default model):
//!
//! ```text
//! model.drift.kind        allen-cahn | linear | zero | odd-polynomial   (allen-cahn)
//! model.drift.c           f64, linear drift coefficient                 (1)
//! model.drift.coeffs      comma list c1,c3,c5,... for odd-polynomial    (empty)
//! model.diffusion.kind    linear | additive | sine                      (linear)
//! model.diffusion.sigma   f64, slope for linear / sine                  (0.5)
//! model.diffusion.b       f64, amplitude for additive                   (1)
//! model.u0                sin-pi | parabola | zero | mode:<k>           (sin-pi)
//! noise.modes             usize >= 1                                    (64)
//! noise.beta              f64 > 3, Q-eigenvalue decay k^-beta           (4)
//! noise.levels            usize >= 1, dyadic levels for dump-noise      (1)
//! noise.sample            u64 sample index for dump-noise               (0)
//! scheme.kind             euler | milstein                              (euler)
//! scheme.basis            spectral | fem                                (spectral)
//! scheme.modes            usize, spectral dimension                     (64)
//! scheme.cells            usize, finite-element cells                   (64)
//! scheme.tau              f64 step size (single runs, fixed-tau axes)   (0.015625)
//! scheme.t-final          f64 > 0 horizon                               (0.5)
//! scheme.newton.tol       f64 > 0                                       (1e-12)
//! scheme.newton.max-iter  u32 >= 1                                      (50)
//! scheme.newton.damping   f64 in (0, 1]                                 (1)
//! study.axis              temporal | spatial-spectral | spatial-fem | noise-truncation (temporal)
//! study.resolutions       comma list: step sizes (temporal) or integer
//!                         dims / cells / cutoffs (other axes)           (2^-4 .. 2^-8)
//! study.reference         reference step size / modes / cutoff          (2^-11)
//! study.samples           usize >= 1                                    (200)
//! study.seed              u64 master seed                               (271828)
//! study.threads           usize, 0 = machine parallelism                (0)
//! out.dir                 output directory                              (study-out)
//! out.csv                 true | false, write report.csv                (true)
//! out.raw                 true | false, write raw_errors.csv            (true)
//! ```
//!
//! Lines are `key = value` (spaces optional); `#` starts a comment; blank
//! lines are ignored.  Unknown keys are errors.

use std::fmt::Write as _;
use std::path::PathBuf;

use monospde::coefficients::{DiffusionSpec, DriftSpec, InitialDatum, ModelSpec};
use monospde::experiments::{StudyAxis, StudyPlan};
use monospde::noise::QWienerSpec;
use monospde::schemes::{validate_step_size, NewtonParams, SchemeKind};

use crate::Failure;

#[derive(Clone, Debug, PartialEq)]
pub enum DriftKind {
    AllenCahn,
    Linear,
    Zero,
    OddPolynomial,
}

#[derive(Clone, Debug, PartialEq)]
pub enum DiffusionKind {
    Linear,
    Additive,
    Sine,
}

#[derive(Clone, Debug, PartialEq)]
pub enum BasisKind {
    Spectral,
    Fem,
}

#[derive(Clone, Debug, PartialEq)]
pub enum AxisKind {
    Temporal,
    SpatialSpectral,
    SpatialFem,
    NoiseTruncation,
}

impl AxisKind {
    pub fn name(&self) -> &'static str {
        match self {
            AxisKind::Temporal => "temporal",
            AxisKind::SpatialSpectral => "spatial-spectral",
            AxisKind::SpatialFem => "spatial-fem",
            AxisKind::NoiseTruncation => "noise-truncation",
        }
    }
}

/// Fully resolved configuration: raw typed values for every documented key.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub drift_kind: DriftKind,
    pub drift_c: f64,
    pub drift_coeffs: Vec<f64>,
    pub diffusion_kind: DiffusionKind,
    pub diffusion_sigma: f64,
    pub diffusion_b: f64,
    pub u0: InitialDatum,
    pub noise_modes: usize,
    pub noise_beta: f64,
    pub noise_levels: usize,
    pub noise_sample: u64,
    pub scheme: SchemeKind,
    pub basis: BasisKind,
    pub modes: usize,
    pub cells: usize,
    pub tau: f64,
    pub t_final: f64,
    pub newton_tol: f64,
    pub newton_max_iter: u32,
    pub newton_damping: f64,
    pub axis: AxisKind,
    pub resolutions: Vec<f64>,
    pub reference: f64,
    pub samples: usize,
    pub seed: u64,
    pub threads: usize,
    pub out_dir: PathBuf,
    pub write_csv: bool,
    pub write_raw: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            drift_kind: DriftKind::AllenCahn,
            drift_c: 1.0,
            drift_coeffs: Vec::new(),
            diffusion_kind: DiffusionKind::Linear,
            diffusion_sigma: 0.5,
            diffusion_b: 1.0,
            u0: InitialDatum::SinPi,
            noise_modes: 64,
            noise_beta: 4.0,
            noise_levels: 1,
            noise_sample: 0,
            scheme: SchemeKind::Euler,
            basis: BasisKind::Spectral,
            modes: 64,
            cells: 64,
            tau: 0.015625,
            t_final: 0.5,
            newton_tol: 1e-12,
            newton_max_iter: 50,
            newton_damping: 1.0,
            axis: AxisKind::Temporal,
            resolutions: vec![0.0625, 0.03125, 0.015625, 0.0078125, 0.00390625],
            reference: 2f64.powi(-11),
            samples: 200,
            seed: 271_828,
            threads: 0,
            out_dir: PathBuf::from("study-out"),
            write_csv: true,
            write_raw: true,
        }
    }
}

fn config_err(key: &str, what: impl std::fmt::Display) -> Failure {
    Failure::Config(format!("config key `{key}`: {what}"))
}

fn parse_scalar<T: std::str::FromStr>(key: &str, value: &str, ty: &str) -> Result<T, Failure> {
    value
        .parse::<T>()
        .map_err(|_| config_err(key, format_args!("expected {ty}, got `{value}`")))
}

fn parse_list(key: &str, value: &str) -> Result<Vec<f64>, Failure> {
    if value.is_empty() {
        return Ok(Vec::new());
    }
    value
        .split(',')
        .map(|item| {
            let item = item.trim();
            item.parse::<f64>()
                .map_err(|_| config_err(key, format_args!("expected a comma-separated list of numbers, got `{item}`")))
        })
        .collect()
}

impl RunConfig {
    /// Applies one `key = value` assignment.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), Failure> {
        let v = value.trim();
        match key {
            "model.drift.kind" => {
                self.drift_kind = match v {
                    "allen-cahn" => DriftKind::AllenCahn,
                    "linear" => DriftKind::Linear,
                    "zero" => DriftKind::Zero,
                    "odd-polynomial" => DriftKind::OddPolynomial,
                    _ => {
                        return Err(config_err(
                            key,
                            format_args!("expected allen-cahn | linear | zero | odd-polynomial, got `{v}`"),
                        ))
                    }
                }
            }
            "model.drift.c" => self.drift_c = parse_scalar(key, v, "a number")?,
            "model.drift.coeffs" => self.drift_coeffs = parse_list(key, v)?,
            "model.diffusion.kind" => {
                self.diffusion_kind = match v {
                    "linear" => DiffusionKind::Linear,
                    "additive" => DiffusionKind::Additive,
                    "sine" => DiffusionKind::Sine,
                    _ => {
                        return Err(config_err(
                            key,
                            format_args!("expected linear | additive | sine, got `{v}`"),
                        ))
                    }
                }
            }
            "model.diffusion.sigma" => self.diffusion_sigma = parse_scalar(key, v, "a number")?,
            "model.diffusion.b" => self.diffusion_b = parse_scalar(key, v, "a number")?,
            "model.u0" => {
                self.u0 = match v {
                    "sin-pi" => InitialDatum::SinPi,
                    "parabola" => InitialDatum::Parabola,
                    "zero" => InitialDatum::Zero,
                    _ => match v.strip_prefix("mode:") {
                        Some(k) => InitialDatum::Mode { k: parse_scalar(key, k, "a positive mode index")? },
                        None => {
                            return Err(config_err(
                                key,
                                format_args!("expected sin-pi | parabola | zero | mode:<k>, got `{v}`"),
                            ))
                        }
                    },
                }
            }
            "noise.modes" => self.noise_modes = parse_scalar(key, v, "a positive integer")?,
            "noise.beta" => self.noise_beta = parse_scalar(key, v, "a number")?,
            "noise.levels" => self.noise_levels = parse_scalar(key, v, "a positive integer")?,
            "noise.sample" => self.noise_sample = parse_scalar(key, v, "an unsigned integer")?,
            "scheme.kind" => {
                self.scheme = match v {
                    "euler" => SchemeKind::Euler,
                    "milstein" => SchemeKind::Milstein,
                    _ => return Err(config_err(key, format_args!("expected euler | milstein, got `{v}`"))),
                }
            }
            "scheme.basis" => {
                self.basis = match v {
                    "spectral" => BasisKind::Spectral,
                    "fem" => BasisKind::Fem,
                    _ => return Err(config_err(key, format_args!("expected spectral | fem, got `{v}`"))),
                }
            }
            "scheme.modes" => self.modes = parse_scalar(key, v, "a positive integer")?,
            "scheme.cells" => self.cells = parse_scalar(key, v, "a positive integer")?,
            "scheme.tau" => self.tau = parse_scalar(key, v, "a number")?,
            "scheme.t-final" => self.t_final = parse_scalar(key, v, "a number")?,
            "scheme.newton.tol" => self.newton_tol = parse_scalar(key, v, "a number")?,
            "scheme.newton.max-iter" => self.newton_max_iter = parse_scalar(key, v, "a positive integer")?,
            "scheme.newton.damping" => self.newton_damping = parse_scalar(key, v, "a number")?,
            "study.axis" => {
                self.axis = match v {
                    "temporal" => AxisKind::Temporal,
                    "spatial-spectral" => AxisKind::SpatialSpectral,
                    "spatial-fem" => AxisKind::SpatialFem,
                    "noise-truncation" => AxisKind::NoiseTruncation,
                    _ => {
                        return Err(config_err(
                            key,
                            format_args!(
                                "expected temporal | spatial-spectral | spatial-fem | noise-truncation, got `{v}`"
                            ),
                        ))
                    }
                }
            }
            "study.resolutions" => self.resolutions = parse_list(key, v)?,
            "study.reference" => self.reference = parse_scalar(key, v, "a number")?,
            "study.samples" => self.samples = parse_scalar(key, v, "a positive integer")?,
            "study.seed" => self.seed = parse_scalar(key, v, "an unsigned integer")?,
            "study.threads" => self.threads = parse_scalar(key, v, "an unsigned integer")?,
            "out.dir" => self.out_dir = PathBuf::from(v),
            "out.csv" => self.write_csv = parse_scalar(key, v, "true or false")?,
            "out.raw" => self.write_raw = parse_scalar(key, v, "true or false")?,
            _ => return Err(Failure::Config(format!("unknown config key `{key}`"))),
        }
        Ok(())
    }

    /// Parses a config document (the file format and the echo format).
    pub fn apply_text(&mut self, text: &str) -> Result<(), Failure> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Failure::Config(format!("line {}: expected `key = value`, got `{raw}`", lineno + 1))
            })?;
            self.set(key.trim(), value)?;
        }
        Ok(())
    }

    /// Applies one `--set KEY=VALUE` override.
    pub fn apply_override(&mut self, pair: &str) -> Result<(), Failure> {
        let (key, value) = pair
            .split_once('=')
            .ok_or_else(|| Failure::Config(format!("--set expects KEY=VALUE, got `{pair}`")))?;
        self.set(key.trim(), value)
    }

    /// Semantic validation beyond per-key typing; every diagnostic names the
    /// offending key and the violated constraint.
    pub fn validate(&self) -> Result<(), Failure> {
        self.build_drift()?;
        self.build_diffusion()?;
        if let InitialDatum::Mode { k } = self.u0 {
            if k == 0 {
                return Err(config_err("model.u0", "mode index starts at 1"));
            }
        }
        QWienerSpec::with_decay(self.noise_modes, self.noise_beta)
            .map_err(|e| config_err("noise.modes / noise.beta", e))?;
        if self.noise_levels == 0 {
            return Err(config_err("noise.levels", "must be at least 1"));
        }
        if self.modes == 0 {
            return Err(config_err("scheme.modes", "must be at least 1"));
        }
        if self.cells < 2 {
            return Err(config_err("scheme.cells", "a mesh needs at least 2 cells"));
        }
        let drift = self.build_drift()?;
        validate_step_size(self.tau, drift.one_sided_constant())
            .map_err(|e| config_err("scheme.tau", e))?;
        if !(self.t_final > 0.0) || !self.t_final.is_finite() {
            return Err(config_err("scheme.t-final", "must be positive and finite"));
        }
        if !(self.newton_tol > 0.0) || !self.newton_tol.is_finite() {
            return Err(config_err("scheme.newton.tol", "must be positive and finite"));
        }
        if self.newton_max_iter == 0 {
            return Err(config_err("scheme.newton.max-iter", "must be at least 1"));
        }
        if !(self.newton_damping > 0.0 && self.newton_damping <= 1.0) {
            return Err(config_err("scheme.newton.damping", "must lie in (0, 1]"));
        }
        if self.samples == 0 {
            return Err(config_err("study.samples", "must be at least 1"));
        }
        if self.axis == AxisKind::Temporal {
            for &tau in &self.resolutions {
                validate_step_size(tau, drift.one_sided_constant())
                    .map_err(|e| config_err("study.resolutions", e))?;
            }
        }
        Ok(())
    }

    fn build_drift(&self) -> Result<DriftSpec, Failure> {
        match self.drift_kind {
            DriftKind::AllenCahn => Ok(DriftSpec::cubic_allen_cahn()),
            DriftKind::Linear => {
                DriftSpec::linear(self.drift_c).map_err(|e| config_err("model.drift.c", e))
            }
            DriftKind::Zero => Ok(DriftSpec::zero()),
            DriftKind::OddPolynomial => DriftSpec::odd_polynomial(self.drift_coeffs.clone())
                .map_err(|e| config_err("model.drift.coeffs", e)),
        }
    }

    fn build_diffusion(&self) -> Result<DiffusionSpec, Failure> {
        match self.diffusion_kind {
            DiffusionKind::Linear => DiffusionSpec::linear(self.diffusion_sigma)
                .map_err(|e| config_err("model.diffusion.sigma", e)),
            DiffusionKind::Additive => {
                DiffusionSpec::additive(self.diffusion_b).map_err(|e| config_err("model.diffusion.b", e))
            }
            DiffusionKind::Sine => DiffusionSpec::sine(self.diffusion_sigma)
                .map_err(|e| config_err("model.diffusion.sigma", e)),
        }
    }

    pub fn build_model(&self) -> Result<ModelSpec, Failure> {
        Ok(ModelSpec {
            drift: self.build_drift()?,
            diffusion: self.build_diffusion()?,
            init: self.u0.clone(),
        })
    }

    /// Like [`build_model`](Self::build_model) but without the monotonicity
    /// gate on polynomial drifts, so the assumption checker can examine (and
    /// fail) structurally unsound models instead of refusing to build them.
    pub fn build_model_for_check(&self) -> Result<ModelSpec, Failure> {
        let drift = match self.drift_kind {
            DriftKind::OddPolynomial => {
                if self.drift_coeffs.is_empty() {
                    return Err(config_err(
                        "model.drift.coeffs",
                        "odd polynomial needs at least one coefficient",
                    ));
                }
                if self.drift_coeffs.iter().any(|c| !c.is_finite()) {
                    return Err(config_err(
                        "model.drift.coeffs",
                        "odd polynomial coefficients must be finite",
                    ));
                }
                DriftSpec::odd_polynomial_unchecked(self.drift_coeffs.clone())
            }
            _ => self.build_drift()?,
        };
        Ok(ModelSpec {
            drift,
            diffusion: self.build_diffusion()?,
            init: self.u0.clone(),
        })
    }

    pub fn newton(&self) -> NewtonParams {
        NewtonParams::default()
            .with_tol(self.newton_tol)
            .with_max_iter(self.newton_max_iter)
            .with_damping(self.newton_damping)
    }

    fn integer_resolutions(&self, what: &str) -> Result<Vec<usize>, Failure> {
        self.resolutions
            .iter()
            .map(|&v| {
                if v >= 1.0 && v.fract() == 0.0 && v <= usize::MAX as f64 {
                    Ok(v as usize)
                } else {
                    Err(config_err(
                        "study.resolutions",
                        format_args!("{what} must be positive integers, got {v}"),
                    ))
                }
            })
            .collect()
    }

    fn integer_reference(&self, what: &str) -> Result<usize, Failure> {
        let v = self.reference;
        if v >= 1.0 && v.fract() == 0.0 && v <= usize::MAX as f64 {
            Ok(v as usize)
        } else {
            Err(config_err(
                "study.reference",
                format_args!("the reference {what} must be a positive integer, got {v}"),
            ))
        }
    }

    /// Converts the config into a study plan for `run` / `truncation-study`.
    pub fn build_plan(&self) -> Result<StudyPlan, Failure> {
        self.validate()?;
        let axis = match self.axis {
            AxisKind::Temporal => StudyAxis::Temporal {
                taus: self.resolutions.clone(),
                ref_tau: self.reference,
                modes: self.modes,
            },
            AxisKind::SpatialSpectral => StudyAxis::SpatialSpectral {
                dims: self.integer_resolutions("spectral dimensions")?,
                ref_modes: self.integer_reference("mode count")?,
                tau: self.tau,
            },
            AxisKind::SpatialFem => StudyAxis::SpatialFem {
                cells: self.integer_resolutions("cell counts")?,
                ref_modes: self.integer_reference("mode count")?,
                tau: self.tau,
            },
            AxisKind::NoiseTruncation => StudyAxis::Truncation {
                cutoffs: self.integer_resolutions("noise cutoffs")?,
                ref_cutoff: self.integer_reference("cutoff")?,
                tau: self.tau,
                modes: self.modes,
            },
        };
        let plan = StudyPlan {
            model: self.build_model()?,
            scheme: self.scheme,
            axis,
            noise_modes: self.noise_modes,
            noise_beta: self.noise_beta,
            t_final: self.t_final,
            samples: self.samples,
            master_seed: self.seed,
            newton: self.newton(),
            threads: self.threads,
        };
        plan.validate().map_err(|e| Failure::Config(e.to_string()))?;
        Ok(plan)
    }

    /// The theory-expected order for the configured axis and scheme, used in
    /// the human-readable summary (reported, never enforced).
    pub fn expected_order(&self) -> (f64, &'static str) {
        match self.axis {
            AxisKind::Temporal => match self.scheme {
                SchemeKind::Euler => (0.5, "temporal order tau^(1/2)"),
                SchemeKind::Milstein => (1.0, "temporal order tau^1 (smooth regime)"),
            },
            AxisKind::SpatialSpectral | AxisKind::SpatialFem => {
                (2.0, "spatial order h^2 (smooth regime)")
            }
            AxisKind::NoiseTruncation => (
                (self.noise_beta - 3.0) / 2.0,
                "noise-tail order K^-(beta-3)/2",
            ),
        }
    }

    /// Renders every key with its effective value; parsing this text yields
    /// an identical config.
    pub fn echo(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# effective configuration (all keys explicit)");
        let drift_kind = match self.drift_kind {
            DriftKind::AllenCahn => "allen-cahn",
            DriftKind::Linear => "linear",
            DriftKind::Zero => "zero",
            DriftKind::OddPolynomial => "odd-polynomial",
        };
        let _ = writeln!(s, "model.drift.kind = {drift_kind}");
        let _ = writeln!(s, "model.drift.c = {}", self.drift_c);
        let coeffs: Vec<String> = self.drift_coeffs.iter().map(|c| c.to_string()).collect();
        let _ = writeln!(s, "model.drift.coeffs = {}", coeffs.join(","));
        let diffusion_kind = match self.diffusion_kind {
            DiffusionKind::Linear => "linear",
            DiffusionKind::Additive => "additive",
            DiffusionKind::Sine => "sine",
        };
        let _ = writeln!(s, "model.diffusion.kind = {diffusion_kind}");
        let _ = writeln!(s, "model.diffusion.sigma = {}", self.diffusion_sigma);
        let _ = writeln!(s, "model.diffusion.b = {}", self.diffusion_b);
        let u0 = match &self.u0 {
            InitialDatum::SinPi => "sin-pi".to_string(),
            InitialDatum::Parabola => "parabola".to_string(),
            InitialDatum::Zero => "zero".to_string(),
            InitialDatum::Mode { k } => format!("mode:{k}"),
        };
        let _ = writeln!(s, "model.u0 = {u0}");
        let _ = writeln!(s, "noise.modes = {}", self.noise_modes);
        let _ = writeln!(s, "noise.beta = {}", self.noise_beta);
        let _ = writeln!(s, "noise.levels = {}", self.noise_levels);
        let _ = writeln!(s, "noise.sample = {}", self.noise_sample);
        let _ = writeln!(s, "scheme.kind = {}", self.scheme.name());
        let basis = match self.basis {
            BasisKind::Spectral => "spectral",
            BasisKind::Fem => "fem",
        };
        let _ = writeln!(s, "scheme.basis = {basis}");
        let _ = writeln!(s, "scheme.modes = {}", self.modes);
        let _ = writeln!(s, "scheme.cells = {}", self.cells);
        let _ = writeln!(s, "scheme.tau = {}", self.tau);
        let _ = writeln!(s, "scheme.t-final = {}", self.t_final);
        let _ = writeln!(s, "scheme.newton.tol = {}", self.newton_tol);
        let _ = writeln!(s, "scheme.newton.max-iter = {}", self.newton_max_iter);
        let _ = writeln!(s, "scheme.newton.damping = {}", self.newton_damping);
        let _ = writeln!(s, "study.axis = {}", self.axis.name());
        let res: Vec<String> = self.resolutions.iter().map(|r| r.to_string()).collect();
        let _ = writeln!(s, "study.resolutions = {}", res.join(","));
        let _ = writeln!(s, "study.reference = {}", self.reference);
        let _ = writeln!(s, "study.samples = {}", self.samples);
        let _ = writeln!(s, "study.seed = {}", self.seed);
        let _ = writeln!(s, "study.threads = {}", self.threads);
        let _ = writeln!(s, "out.dir = {}", self.out_dir.display());
        let _ = writeln!(s, "out.csv = {}", self.write_csv);
        let _ = writeln!(s, "out.raw = {}", self.write_raw);
        s
    }
}
