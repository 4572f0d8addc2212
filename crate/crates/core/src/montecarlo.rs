//! Monte Carlo oracle: colored Gaussian noise trajectories synthesized from a
//! spectrum, exact piecewise propagation, and ensemble-averaged fidelity.

use std::f64::consts::PI;

use nalgebra::Vector3;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fidelity::CONVENTION_NOTE;
use crate::noise::{AxisSpectrum, NoiseSpectrum};
use crate::quad::{pairwise_sum, GlRule};
use crate::sequence::ControlSequence;
use crate::su2::Su2;

pub const DEFAULT_COMPONENTS: usize = 512;
pub const MIN_COMPONENTS: usize = 16;

fn default_realizations() -> usize {
    100
}

fn default_components() -> usize {
    DEFAULT_COMPONENTS
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleConfig {
    #[serde(default = "default_realizations")]
    pub realizations: usize,
    /// Time step; chosen from the noise and control time scales when absent.
    #[serde(default)]
    pub dt: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    /// Number of Fourier components per axis.
    #[serde(default = "default_components")]
    pub components: usize,
    /// Repeat the first realization at `dt/2` and reject the step if the
    /// trace fidelity moves by more than `1e-6`.
    #[serde(default)]
    pub richardson: bool,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        EnsembleConfig {
            realizations: default_realizations(),
            dt: None,
            seed: 0,
            components: DEFAULT_COMPONENTS,
            richardson: false,
        }
    }
}

/// Largest step allowed by the control: `π / (10 max Ω)`.
fn control_step_limit(seq: &ControlSequence) -> f64 {
    let rate = seq.max_rate();
    if rate > 0.0 {
        PI / (10.0 * rate)
    } else {
        f64::INFINITY
    }
}

impl EnsembleConfig {
    /// Validates the configuration and resolves the step for a given run.
    pub fn resolve_dt(&self, seq: &ControlSequence, noise: &NoiseSpectrum) -> Result<f64> {
        if self.realizations < 2 {
            return Err(Error::Ensemble(format!(
                "need at least 2 realizations, got {}",
                self.realizations
            )));
        }
        if self.components < MIN_COMPONENTS {
            return Err(Error::Ensemble(format!(
                "{} frequency components undersample the spectrum (minimum {MIN_COMPONENTS})",
                self.components
            )));
        }
        let tc = noise.correlation_time();
        let limit = control_step_limit(seq).min(tc);
        let tau = seq.total_time();
        match self.dt {
            Some(dt) => {
                if !(dt.is_finite() && dt > 0.0) {
                    return Err(Error::Ensemble(format!("time step must be positive, got {dt}")));
                }
                if dt > limit {
                    return Err(Error::Ensemble(format!(
                        "time step {dt} exceeds min(τ_c, π/(10 Ω_max)) = {limit}"
                    )));
                }
                Ok(dt)
            }
            None => {
                let dt = (tc / 50.0).min(control_step_limit(seq)).min(tau / 16.0);
                Ok(if dt.is_finite() && dt > 0.0 { dt } else { 1.0 })
            }
        }
    }
}

/// Random Fourier coefficients of one noise realization.
#[derive(Debug, Clone, PartialEq)]
pub struct Realization {
    omega: [Vec<f64>; 3],
    /// `√(S(ω_k)Δω/π)·(a_k − i b_k)` so that `β(t) = Σ Re(c_k e^{iω_k t})`.
    coeff: [Vec<Complex64>; 3],
}

fn draw_axis<R: Rng>(spec: &AxisSpectrum, components: usize, rng: &mut R) -> (Vec<f64>, Vec<Complex64>) {
    let top = spec.cutoff();
    let dw = top / components as f64;
    let mut omega = Vec::with_capacity(components);
    let mut coeff = Vec::with_capacity(components);
    for k in 1..=components {
        let w = k as f64 * dw;
        let a: f64 = rng.sample(StandardNormal);
        let b: f64 = rng.sample(StandardNormal);
        let amp = (spec.psd(w) * dw / PI).sqrt();
        omega.push(w);
        coeff.push(Complex64::new(a, -b) * amp);
    }
    (omega, coeff)
}

impl Realization {
    /// Draws the coefficients of realization `index` from stream `index` of `seed`.
    pub fn draw(noise: &NoiseSpectrum, components: usize, seed: u64, index: u64) -> Result<Self> {
        if components < MIN_COMPONENTS {
            return Err(Error::Ensemble(format!(
                "{components} frequency components undersample the spectrum (minimum {MIN_COMPONENTS})"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(index);
        let mut omega: [Vec<f64>; 3] = Default::default();
        let mut coeff: [Vec<Complex64>; 3] = Default::default();
        for (i, spec) in noise.active() {
            let (w, c) = draw_axis(spec, components, &mut rng);
            omega[i] = w;
            coeff[i] = c;
        }
        Ok(Realization { omega, coeff })
    }

    pub fn value_at(&self, axis: usize, t: f64) -> f64 {
        self.omega[axis]
            .iter()
            .zip(&self.coeff[axis])
            .map(|(w, c)| (c * Complex64::from_polar(1.0, w * t)).re)
            .sum()
    }

    /// Samples on `t_k = k·dt`, with the last sample moved to `τ`.
    pub fn sample(&self, tau: f64, dt: f64) -> Trajectory {
        let steps = (tau / dt).ceil().max(1.0) as usize;
        let samples = [0, 1, 2].map(|i| {
            if self.omega[i].is_empty() {
                return vec![0.0; steps + 1];
            }
            let rot: Vec<Complex64> = self.omega[i]
                .iter()
                .map(|w| Complex64::from_polar(1.0, w * dt))
                .collect();
            let mut state = self.coeff[i].clone();
            let mut out = Vec::with_capacity(steps + 1);
            for _ in 0..steps {
                out.push(state.iter().map(|z| z.re).sum());
                for (z, r) in state.iter_mut().zip(&rot) {
                    *z *= r;
                }
            }
            out.push(self.value_at(i, tau));
            out
        });
        Trajectory { dt, tau, samples }
    }
}

/// Noise samples on a uniform grid over `[0, τ]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub dt: f64,
    pub tau: f64,
    pub samples: [Vec<f64>; 3],
}

impl Trajectory {
    pub fn constant(beta: Vector3<f64>, tau: f64, dt: f64) -> Self {
        let n = (tau / dt).ceil().max(1.0) as usize + 1;
        Trajectory {
            dt,
            tau,
            samples: [0, 1, 2].map(|i| vec![beta[i]; n]),
        }
    }

    pub fn len(&self) -> usize {
        self.samples[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn time(&self, k: usize) -> f64 {
        if k + 1 == self.len() {
            self.tau
        } else {
            k as f64 * self.dt
        }
    }

    /// Trapezoidal average of `β` over step `k`.
    pub fn step_average(&self, k: usize) -> Vector3<f64> {
        Vector3::from_fn(|i, _| 0.5 * (self.samples[i][k] + self.samples[i][k + 1]))
    }
}

/// Synthesizes one trajectory for the spectrum.
pub fn synthesize_trajectory(
    noise: &NoiseSpectrum,
    tau: f64,
    dt: f64,
    components: usize,
    seed: u64,
    index: u64,
) -> Result<Trajectory> {
    Ok(Realization::draw(noise, components, seed, index)?.sample(tau, dt))
}

/// Calls `f(a, b, step, segment)` for every piece of the merged step/segment partition.
fn for_each_piece(seq: &ControlSequence, traj: &Trajectory, mut f: impl FnMut(f64, f64, usize, usize)) {
    let bounds = seq.boundaries();
    let nseg = seq.segments().len();
    let steps = traj.len() - 1;
    let (mut k, mut l) = (0usize, 0usize);
    let mut t = 0.0;
    while k < steps {
        let step_end = traj.time(k + 1);
        let seg_end = if l < nseg { bounds[l + 1] } else { f64::INFINITY };
        let end = step_end.min(seg_end);
        if end > t {
            f(t, end, k, l.min(nseg.saturating_sub(1)));
        }
        t = end;
        if step_end <= seg_end {
            k += 1;
        }
        if seg_end <= step_end {
            l += 1;
        }
    }
}

/// Error propagator `Ũ(τ) = U_c†(τ)U(τ)` under `H_c(t) + β(t)·σ`.
pub fn evolve(seq: &ControlSequence, traj: &Trajectory) -> Su2 {
    let mut u = Su2::identity();
    let segs = seq.segments();
    for_each_piece(seq, traj, |a, b, k, l| {
        let hc = if segs.is_empty() {
            Vector3::zeros()
        } else {
            segs[l].hamiltonian()
        };
        let h = hc + traj.step_average(k);
        u = Su2::from_error_vector(h * (b - a)) * u;
    });
    seq.target().dagger() * u
}

/// Numerical first and second Magnus terms along the trajectory.
pub fn magnus_estimates(seq: &ControlSequence, traj: &Trajectory) -> (Vector3<f64>, Vector3<f64>) {
    let rule = GlRule::new(6);
    let mut a1 = Vector3::zeros();
    let mut a2 = Vector3::zeros();
    let h = |t: f64, beta: &Vector3<f64>| seq.control_matrix_unchecked(t).transpose() * beta;
    for_each_piece(seq, traj, |a, b, k, _| {
        let beta = traj.step_average(k);
        let mut piece = Vector3::zeros();
        let mut nested = Vector3::zeros();
        for (t, w) in rule.mapped(a, b) {
            let ht = h(t, &beta);
            piece += ht * w;
            let mut inner = Vector3::zeros();
            for (s, ws) in rule.mapped(a, t) {
                inner += h(s, &beta) * ws;
            }
            nested += ht.cross(&inner) * w;
        }
        a2 += piece.cross(&a1) + nested;
        a1 += piece;
    });
    (a1, a2)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleResult {
    pub f_av: f64,
    pub stderr: f64,
    pub n_realizations: usize,
    pub seed: u64,
    pub dt: f64,
    pub convention_note: String,
    #[serde(skip)]
    pub per_realization: Vec<f64>,
}

impl EnsembleResult {
    pub fn infidelity(&self) -> f64 {
        1.0 - self.f_av
    }
}

/// Mean and standard error of `|Tr Ũ|²/4` over independent realizations.
pub fn ensemble_fidelity(seq: &ControlSequence, noise: &NoiseSpectrum, cfg: &EnsembleConfig) -> Result<EnsembleResult> {
    let dt = cfg.resolve_dt(seq, noise)?;
    let tau = seq.total_time();
    if cfg.richardson && !noise.is_zero() {
        let r = Realization::draw(noise, cfg.components, cfg.seed, 0)?;
        let f1 = evolve(seq, &r.sample(tau, dt)).trace_fidelity();
        let f2 = evolve(seq, &r.sample(tau, 0.5 * dt)).trace_fidelity();
        if (f1 - f2).abs() > 1e-6 {
            return Err(Error::StepSize(format!(
                "trace fidelity changes by {:e} when dt = {dt} is halved",
                (f1 - f2).abs()
            )));
        }
    }
    let per: Vec<f64> = (0..cfg.realizations as u64)
        .into_par_iter()
        .map(|i| {
            Realization::draw(noise, cfg.components, cfg.seed, i)
                .map(|r| evolve(seq, &r.sample(tau, dt)).trace_fidelity())
        })
        .collect::<Result<_>>()?;
    let n = per.len() as f64;
    let mean = pairwise_sum(&per) / n;
    let dev: Vec<f64> = per.iter().map(|f| (f - mean).powi(2)).collect();
    let var = pairwise_sum(&dev) / (n - 1.0);
    Ok(EnsembleResult {
        f_av: mean,
        stderr: (var / n).sqrt(),
        n_realizations: per.len(),
        seed: cfg.seed,
        dt,
        convention_note: CONVENTION_NOTE.to_string(),
        per_realization: per,
    })
}
