//! Q-Wiener increments on nested time grids.
//!
//! The driving noise is `W(t) = sum_k sqrt(q_k) e_k beta_k(t)` with the
//! Dirichlet eigenfunctions `e_k` as spatial modes, eigenvalues `q_k` of the
//! covariance operator (default `q_k = k^-beta`), and independent scalar
//! Brownian motions `beta_k`.
//!
//! Coupled-path Monte Carlo needs the *same* Brownian paths at several step
//! sizes.  A [`NoiseTree`] stores increments on a stack of dyadically nested
//! grids: the finest level is drawn i.i.d., and each coarser level is the
//! exact pairwise sum of its two children, so every level discretises one
//! common path.
//!
//! # Random stream
//!
//! Increments come from a counter-based, splittable stream: the 256-bit
//! counter `(seed, sample, step, mode, lane)` is absorbed word-by-word into a
//! chained SplitMix64 finalizer, and each finest-level increment uses two
//! lanes of the resulting uniform stream through the Box-Muller map.  The
//! integer part of the stream is platform-independent; draws are reproducible
//! given `(master_seed, sample_id)` and never depend on evaluation order.

use std::io::{Read, Write};

use crate::basis::{BasisTag, Field, Space};
use crate::error::{Error, Result};

// ---------------------------------------------------------------------------
// Counter-based random stream
// ---------------------------------------------------------------------------

/// SplitMix64 finalizer: a bijective avalanche mix on 64-bit words.
#[inline]
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Hash of the stream counter `(seed, sample, step, mode, lane)`.
#[inline]
fn counter_hash(seed: u64, sample: u64, step: u64, mode: u64, lane: u64) -> u64 {
    let mut h = mix(seed ^ 0x243f_6a88_85a3_08d3);
    h = mix(h ^ sample);
    h = mix(h ^ step);
    h = mix(h ^ mode);
    h = mix(h ^ lane);
    h
}

/// Maps 64 random bits to the open unit interval (never 0 or 1).
#[inline]
fn to_open_unit(bits: u64) -> f64 {
    ((bits >> 11) as f64 + 0.5) * (1.0 / 9_007_199_254_740_992.0)
}

/// Standard normal draw for one counter, via Box-Muller over two lanes.
#[inline]
pub fn standard_normal(seed: u64, sample: u64, step: u64, mode: u64) -> f64 {
    let u1 = to_open_unit(counter_hash(seed, sample, step, mode, 0));
    let u2 = to_open_unit(counter_hash(seed, sample, step, mode, 1));
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

// ---------------------------------------------------------------------------
// Covariance spectrum
// ---------------------------------------------------------------------------

/// Spectrum of the covariance operator: the number of retained modes and the
/// eigenvalue of each (nonincreasing, nonnegative).
#[derive(Clone, Debug, PartialEq)]
pub struct QWienerSpec {
    q_eigs: Vec<f64>,
}

impl QWienerSpec {
    /// Polynomially decaying spectrum `q_k = k^-beta`.
    ///
    /// The trace-class condition for the multiplier calculus used by the
    /// Milstein correction (`sum_k q_k |e_k|_{W^{1,inf}}^2 < inf` with
    /// `|e_k'|_inf ~ k`) needs `beta > 3`, which is enforced here.
    pub fn with_decay(modes: usize, beta: f64) -> Result<Self> {
        if modes == 0 {
            return Err(Error::invalid("the noise needs at least one mode"));
        }
        if !(beta > 3.0) {
            return Err(Error::invalid(format!(
                "covariance decay exponent beta = {beta} must exceed 3 \
                 (trace-class condition for first-derivative multipliers)"
            )));
        }
        let q_eigs = (1..=modes).map(|k| (k as f64).powf(-beta)).collect();
        Ok(QWienerSpec { q_eigs })
    }

    /// Explicit spectrum; must be nonempty, nonnegative, and nonincreasing.
    pub fn from_eigenvalues(q_eigs: Vec<f64>) -> Result<Self> {
        if q_eigs.is_empty() {
            return Err(Error::invalid("the noise needs at least one mode"));
        }
        for pair in q_eigs.windows(2) {
            if pair[1] > pair[0] {
                return Err(Error::invalid(
                    "covariance eigenvalues must be nonincreasing",
                ));
            }
        }
        if q_eigs.iter().any(|q| *q < 0.0 || !q.is_finite()) {
            return Err(Error::invalid(
                "covariance eigenvalues must be finite and nonnegative",
            ));
        }
        Ok(QWienerSpec { q_eigs })
    }

    pub fn modes(&self) -> usize {
        self.q_eigs.len()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.q_eigs
    }

    /// Trace `sum_k q_k` (the spatial variance density integral of `W(1)`).
    pub fn trace(&self) -> f64 {
        self.q_eigs.iter().sum()
    }
}

// ---------------------------------------------------------------------------
// Noise tree
// ---------------------------------------------------------------------------

/// One time grid of a [`NoiseTree`].
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseLevel {
    m_steps: usize,
    tau: f64,
    /// Scalar Brownian increments, step-major: `inc[m * modes + k]` is
    /// `beta_{k+1}(t_{m+1}) - beta_{k+1}(t_m)`.
    inc: Vec<f64>,
}

impl NoiseLevel {
    pub fn m_steps(&self) -> usize {
        self.m_steps
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    /// Increments of all modes over step `m`.
    pub fn step(&self, m: usize, modes: usize) -> &[f64] {
        &self.inc[m * modes..(m + 1) * modes]
    }
}

/// Brownian mode increments for one sample path on a stack of dyadically
/// nested time grids covering `[0, t_final]`.  Level 0 is the coarsest grid;
/// each subsequent level doubles the step count and the last one carries the
/// i.i.d. draws, so coarser increments are exact sums of finer ones.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseTree {
    master_seed: u64,
    sample_id: u64,
    modes: usize,
    t_final: f64,
    levels: Vec<NoiseLevel>,
}

impl NoiseTree {
    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn sample_id(&self) -> u64 {
        self.sample_id
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn t_final(&self) -> f64 {
        self.t_final
    }

    pub fn n_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn level(&self, idx: usize) -> Result<&NoiseLevel> {
        self.levels
            .get(idx)
            .ok_or_else(|| Error::invalid(format!("noise tree has no level {idx}")))
    }

    /// The level with exactly `m_steps` steps, if present.
    pub fn level_with_steps(&self, m_steps: usize) -> Result<usize> {
        self.levels
            .iter()
            .position(|l| l.m_steps == m_steps)
            .ok_or_else(|| {
                Error::invalid(format!("noise tree has no level with {m_steps} steps"))
            })
    }
}

/// Draws a noise tree: `finest_steps` i.i.d. increments per mode at the
/// finest level and `n_levels` dyadically coarsened grids on top.
///
/// `finest_steps` must be divisible by `2^(n_levels - 1)` so that every
/// coarsening halves the step count exactly.
pub fn sample_tree(
    spec: &QWienerSpec,
    t_final: f64,
    finest_steps: usize,
    n_levels: usize,
    master_seed: u64,
    sample_id: u64,
) -> Result<NoiseTree> {
    if !(t_final > 0.0) || !t_final.is_finite() {
        return Err(Error::invalid("t_final must be positive and finite"));
    }
    if finest_steps == 0 || n_levels == 0 {
        return Err(Error::invalid(
            "a noise tree needs at least one step and one level",
        ));
    }
    let factor = 1usize
        .checked_shl(n_levels as u32 - 1)
        .ok_or_else(|| Error::invalid("too many levels"))?;
    if finest_steps % factor != 0 {
        return Err(Error::invalid(format!(
            "finest step count {finest_steps} is not divisible by 2^{} — \
             levels must refine dyadically",
            n_levels - 1
        )));
    }
    let modes = spec.modes();
    let tau_finest = t_final / finest_steps as f64;
    let sqrt_tau = tau_finest.sqrt();
    let mut inc = vec![0.0; finest_steps * modes];
    for m in 0..finest_steps {
        for k in 0..modes {
            inc[m * modes + k] =
                sqrt_tau * standard_normal(master_seed, sample_id, m as u64, k as u64);
        }
    }
    let mut levels = Vec::with_capacity(n_levels);
    levels.push(NoiseLevel {
        m_steps: finest_steps,
        tau: tau_finest,
        inc,
    });
    for _ in 1..n_levels {
        let fine = levels.last().expect("at least one level");
        let m_steps = fine.m_steps / 2;
        let mut coarse = vec![0.0; m_steps * modes];
        for m in 0..m_steps {
            let a = fine.step(2 * m, modes);
            let b = fine.step(2 * m + 1, modes);
            for k in 0..modes {
                coarse[m * modes + k] = a[k] + b[k];
            }
        }
        levels.push(NoiseLevel {
            m_steps,
            tau: 2.0 * fine.tau,
            inc: coarse,
        });
    }
    levels.reverse(); // store coarsest first
    Ok(NoiseTree {
        master_seed,
        sample_id,
        modes,
        t_final,
        levels,
    })
}

// ---------------------------------------------------------------------------
// Increment synthesis
// ---------------------------------------------------------------------------

/// Pointwise synthesis tables for `Delta W` and the Milstein compensator on a
/// fixed grid: `table[p * K + k] = sqrt(q_k) e_k(x_p)` and
/// `q(x_p) = sum_k q_k e_k(x_p)^2`.
#[derive(Debug)]
pub struct NoiseSynth {
    modes: usize,
    active: usize,
    table: Vec<f64>,
    q_values: Vec<f64>,
}

impl NoiseSynth {
    /// Builds tables on an arbitrary evaluation grid.  `active` restricts the
    /// synthesis to the first `active` modes (used by truncation studies);
    /// the compensator is restricted consistently.
    pub fn with_active(spec: &QWienerSpec, grid: &[f64], active: usize) -> Result<Self> {
        if active == 0 || active > spec.modes() {
            return Err(Error::invalid(format!(
                "active mode count {active} outside 1..={}",
                spec.modes()
            )));
        }
        let modes = spec.modes();
        let mut table = vec![0.0; grid.len() * modes];
        let mut q_values = vec![0.0; grid.len()];
        for (p, &x) in grid.iter().enumerate() {
            let mut q = 0.0;
            for (k, &qk) in spec.eigenvalues().iter().enumerate() {
                let e = std::f64::consts::SQRT_2
                    * ((k + 1) as f64 * std::f64::consts::PI * x).sin();
                let v = qk.sqrt() * e;
                table[p * modes + k] = v;
                if k < active {
                    q += qk * e * e;
                }
            }
            q_values[p] = q;
        }
        Ok(NoiseSynth {
            modes,
            active,
            table,
            q_values,
        })
    }

    pub fn new(spec: &QWienerSpec, grid: &[f64]) -> Result<Self> {
        Self::with_active(spec, grid, spec.modes())
    }

    /// Pointwise compensator `q(x_p) = sum_{k <= active} q_k e_k(x_p)^2`,
    /// the spatial density of `E[(Delta W(x))^2] / tau`.
    pub fn q_values(&self) -> &[f64] {
        &self.q_values
    }

    /// Synthesises `Delta W(x_p)` from one step's scalar increments.
    pub fn increment_values(&self, step_inc: &[f64], out: &mut [f64]) {
        assert_eq!(step_inc.len(), self.modes);
        assert_eq!(out.len(), self.q_values.len());
        let ka = self.active;
        for (p, o) in out.iter_mut().enumerate() {
            let row = &self.table[p * self.modes..p * self.modes + ka];
            let mut s = 0.0;
            for (t, b) in row.iter().zip(&step_inc[..ka]) {
                s += t * b;
            }
            *o = s;
        }
    }
}

/// Projects the truncated increment `Delta_m W = sum_k sqrt(q_k) e_k
/// Delta beta_k` of one tree step onto a discrete space.
///
/// For a spectral space the projection is exact mode-by-mode (modes beyond
/// the space dimension are dropped); for finite elements the increment is
/// synthesised on the quadrature grid and L2-projected.
pub fn increment_field(
    tree: &NoiseTree,
    spec: &QWienerSpec,
    level: usize,
    m: usize,
    space: &Space,
) -> Result<Field> {
    check_spec(tree, spec)?;
    let lvl = tree.level(level)?;
    if m >= lvl.m_steps() {
        return Err(Error::invalid(format!(
            "step {m} out of range for level with {} steps",
            lvl.m_steps()
        )));
    }
    let inc = lvl.step(m, tree.modes());
    match space {
        Space::Spectral(b) => {
            let mut coeffs = vec![0.0; b.modes()];
            let n = b.modes().min(spec.modes());
            for k in 0..n {
                coeffs[k] = spec.eigenvalues()[k].sqrt() * inc[k];
            }
            Field::new(BasisTag::Spectral { modes: b.modes() }, coeffs)
        }
        Space::Fem(_) => {
            let synth = NoiseSynth::new(spec, space.quad_points())?;
            let mut values = vec![0.0; space.quad_points().len()];
            synth.increment_values(inc, &mut values);
            space.project_values(&values)
        }
    }
}

/// Pointwise data for the commutative Milstein correction of one step: the
/// synthesised increment `Delta W(x_p)` and the compensator `q(x_p)`.
///
/// Under pointwise (Nemytskii) diffusion the symmetrised iterated integrals
/// satisfy `I_kl + I_lk = Delta beta_k Delta beta_l - delta_kl tau` exactly,
/// which collapses the second-order term to
/// `1/2 g'(u) g(u) [ (Delta W(x))^2 - tau q(x) ]`; no Levy areas are needed.
pub fn milstein_bracket(
    tree: &NoiseTree,
    spec: &QWienerSpec,
    level: usize,
    m: usize,
    grid: &[f64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    check_spec(tree, spec)?;
    let lvl = tree.level(level)?;
    if m >= lvl.m_steps() {
        return Err(Error::invalid(format!(
            "step {m} out of range for level with {} steps",
            lvl.m_steps()
        )));
    }
    let synth = NoiseSynth::new(spec, grid)?;
    let mut dw = vec![0.0; grid.len()];
    synth.increment_values(lvl.step(m, tree.modes()), &mut dw);
    Ok((dw, synth.q_values().to_vec()))
}

fn check_spec(tree: &NoiseTree, spec: &QWienerSpec) -> Result<()> {
    if tree.modes() != spec.modes() {
        return Err(Error::invalid(format!(
            "noise tree has {} modes but the spectrum has {}",
            tree.modes(),
            spec.modes()
        )));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Binary serialisation
// ---------------------------------------------------------------------------

const MAGIC: &[u8; 8] = b"QWTREE01";

/// Writes the tree in the documented little-endian layout:
///
/// ```text
/// magic   8 bytes  "QWTREE01"
/// header  u64 master_seed, u64 sample_id, u64 modes, u64 n_levels,
///         u64 finest_steps, f64 t_final   (little endian)
/// body    levels from coarsest to finest; each level is its increments as
///         f64 little endian, step-major: (m, k) -> inc[m * modes + k]
/// ```
pub fn dump_tree(tree: &NoiseTree, w: &mut impl Write) -> Result<()> {
    w.write_all(MAGIC)?;
    let finest = tree.levels.last().expect("tree has levels");
    for v in [
        tree.master_seed,
        tree.sample_id,
        tree.modes as u64,
        tree.levels.len() as u64,
        finest.m_steps as u64,
    ] {
        w.write_all(&v.to_le_bytes())?;
    }
    w.write_all(&tree.t_final.to_le_bytes())?;
    for level in &tree.levels {
        for v in &level.inc {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

/// Reads a tree written by [`dump_tree`], validating magic, header
/// consistency, and stream length.
pub fn restore_tree(r: &mut impl Read) -> Result<NoiseTree> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::invalid(
            "not a noise-tree dump (bad magic); expected QWTREE01",
        ));
    }
    let mut u = [0u8; 8];
    let mut next_u64 = |r: &mut dyn Read| -> Result<u64> {
        r.read_exact(&mut u)?;
        Ok(u64::from_le_bytes(u))
    };
    let master_seed = next_u64(r)?;
    let sample_id = next_u64(r)?;
    let modes = next_u64(r)? as usize;
    let n_levels = next_u64(r)? as usize;
    let finest_steps = next_u64(r)? as usize;
    let mut f = [0u8; 8];
    r.read_exact(&mut f)?;
    let t_final = f64::from_le_bytes(f);
    if modes == 0 || n_levels == 0 || finest_steps == 0 || !(t_final > 0.0) {
        return Err(Error::invalid("noise-tree dump header is inconsistent"));
    }
    let coarsest = finest_steps
        .checked_shr(n_levels as u32 - 1)
        .filter(|c| c << (n_levels - 1) == finest_steps && *c > 0)
        .ok_or_else(|| Error::invalid("noise-tree dump header is inconsistent"))?;
    let mut levels = Vec::with_capacity(n_levels);
    let mut m_steps = coarsest;
    for _ in 0..n_levels {
        let mut inc = vec![0.0; m_steps * modes];
        let mut buf = [0u8; 8];
        for v in &mut inc {
            r.read_exact(&mut buf)?;
            *v = f64::from_le_bytes(buf);
        }
        levels.push(NoiseLevel {
            m_steps,
            tau: t_final / m_steps as f64,
            inc,
        });
        m_steps *= 2;
    }
    Ok(NoiseTree {
        master_seed,
        sample_id,
        modes,
        t_final,
        levels,
    })
}
