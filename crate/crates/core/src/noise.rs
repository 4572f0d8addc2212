//! Stationary classical noise spectra on independent axes.
//!
//! Spectra are two-sided and even, with `C(t) = (1/2π)∫S(ω)e^{iωt}dω`, so the
//! variance is `C(0) = (1/π)∫₀^∞ S dω`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad::{breakpoints, Adaptive};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::X, Axis::Y, Axis::Z];

    pub fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
            Axis::Z => 2,
        }
    }
}

/// Unvalidated spectrum parameters as they appear in configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum SpectrumShape {
    /// `√(2π)·δβ²/(4σ)·exp(−ω²/2σ²)`.
    Gaussian { amplitude: f64, bandwidth: f64 },
    /// `A·|ω|^p` for `low ≤ |ω| ≤ cutoff`, zero elsewhere.
    PowerLaw {
        amplitude: f64,
        exponent: f64,
        #[serde(default)]
        low: f64,
        cutoff: f64,
    },
    /// Samples interpolated linearly in `log ω`; zero above the last point.
    Tabulated { omega: Vec<f64>, psd: Vec<f64> },
}

/// A validated single-axis spectrum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SpectrumShape", into = "SpectrumShape")]
pub struct AxisSpectrum {
    shape: SpectrumShape,
    variance: f64,
}

impl TryFrom<SpectrumShape> for AxisSpectrum {
    type Error = Error;
    fn try_from(shape: SpectrumShape) -> Result<Self> {
        AxisSpectrum::new(shape)
    }
}

impl From<AxisSpectrum> for SpectrumShape {
    fn from(s: AxisSpectrum) -> Self {
        s.shape
    }
}

fn positive(name: &str, x: f64) -> Result<()> {
    if x.is_finite() && x > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidSpectrum(format!(
            "{name} must be positive and finite, got {x}"
        )))
    }
}

impl AxisSpectrum {
    pub fn new(shape: SpectrumShape) -> Result<Self> {
        let variance = match &shape {
            SpectrumShape::Gaussian { amplitude, bandwidth } => {
                positive("amplitude", *amplitude)?;
                positive("bandwidth", *bandwidth)?;
                amplitude * amplitude / 4.0
            }
            SpectrumShape::PowerLaw {
                amplitude,
                exponent,
                low,
                cutoff,
            } => {
                positive("amplitude", *amplitude)?;
                positive("cutoff", *cutoff)?;
                if !exponent.is_finite() || !(low.is_finite() && *low >= 0.0 && low < cutoff) {
                    return Err(Error::InvalidSpectrum(format!(
                        "power law needs finite exponent and 0 ≤ low < cutoff, got p = {exponent}, [{low}, {cutoff}]"
                    )));
                }
                if *low == 0.0 && *exponent <= -1.0 {
                    return Err(Error::DivergentSpectrum(format!(
                        "∫ω^{exponent} diverges at ω = 0; set a positive low-frequency bound"
                    )));
                }
                let q = exponent + 1.0;
                let integral = if q.abs() < 1e-12 {
                    (cutoff / low).ln()
                } else {
                    (cutoff.powf(q) - if *low > 0.0 { low.powf(q) } else { 0.0 }) / q
                };
                amplitude * integral / PI
            }
            SpectrumShape::Tabulated { omega, psd } => {
                if omega.len() != psd.len() || omega.len() < 2 {
                    return Err(Error::InvalidSpectrum(
                        "tabulated spectrum needs at least two (ω, S) pairs of equal length".into(),
                    ));
                }
                if omega[0] < 0.0
                    || omega
                        .windows(2)
                        .any(|w| w[1].partial_cmp(&w[0]) != Some(std::cmp::Ordering::Greater))
                    || !omega.iter().all(|w| w.is_finite())
                {
                    return Err(Error::InvalidSpectrum(
                        "tabulated ω must be finite, non-negative and increasing".into(),
                    ));
                }
                if psd.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
                    return Err(Error::InvalidSpectrum(
                        "tabulated S must be finite and non-negative".into(),
                    ));
                }
                table_integral(omega, psd) / PI
            }
        };
        Ok(AxisSpectrum { shape, variance })
    }

    pub fn gaussian(amplitude: f64, bandwidth: f64) -> Result<Self> {
        Self::new(SpectrumShape::Gaussian { amplitude, bandwidth })
    }

    /// Gaussian spectrum given in the `β σ_z / 2` convention; the amplitude is halved.
    pub fn gaussian_half_convention(amplitude: f64, bandwidth: f64) -> Result<Self> {
        Self::gaussian(0.5 * amplitude, bandwidth)
    }

    pub fn power_law(amplitude: f64, exponent: f64, low: f64, cutoff: f64) -> Result<Self> {
        Self::new(SpectrumShape::PowerLaw {
            amplitude,
            exponent,
            low,
            cutoff,
        })
    }

    pub fn tabulated(omega: Vec<f64>, psd: Vec<f64>) -> Result<Self> {
        Self::new(SpectrumShape::Tabulated { omega, psd })
    }

    /// Parses whitespace- or comma-separated `ω S` lines; `#` starts a comment.
    pub fn parse_table(text: &str) -> Result<Self> {
        let mut omega = Vec::new();
        let mut psd = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let cols: Vec<&str> = line
                .split(|c: char| c == ',' || c.is_whitespace())
                .filter(|s| !s.is_empty())
                .collect();
            let parse = |s: &str| {
                s.parse::<f64>()
                    .map_err(|e| Error::Parse(format!("line {}: {e}", n + 1)))
            };
            if cols.len() != 2 {
                return Err(Error::Parse(format!("line {}: expected two columns", n + 1)));
            }
            omega.push(parse(cols[0])?);
            psd.push(parse(cols[1])?);
        }
        Self::tabulated(omega, psd)
    }

    pub fn shape(&self) -> &SpectrumShape {
        &self.shape
    }

    /// `S(ω)`, even in `ω`.
    pub fn psd(&self, omega: f64) -> f64 {
        let w = omega.abs();
        match &self.shape {
            SpectrumShape::Gaussian { amplitude, bandwidth } => {
                (2.0 * PI).sqrt() * amplitude * amplitude / (4.0 * bandwidth)
                    * (-w * w / (2.0 * bandwidth * bandwidth)).exp()
            }
            SpectrumShape::PowerLaw {
                amplitude,
                exponent,
                low,
                cutoff,
            } => {
                if w < *low || w > *cutoff || (w == 0.0 && *exponent < 0.0) {
                    0.0
                } else {
                    amplitude * w.powf(*exponent)
                }
            }
            SpectrumShape::Tabulated { omega, psd } => table_eval(omega, psd, w),
        }
    }

    /// Frequency above which the spectrum is treated as negligible.
    pub fn cutoff(&self) -> f64 {
        match &self.shape {
            SpectrumShape::Gaussian { bandwidth, .. } => 6.0 * bandwidth,
            SpectrumShape::PowerLaw { cutoff, .. } => *cutoff,
            SpectrumShape::Tabulated { omega, .. } => *omega.last().unwrap(),
        }
    }

    /// `1/σ` for Gaussian spectra, `1/ω_c` otherwise.
    pub fn correlation_time(&self) -> f64 {
        match &self.shape {
            SpectrumShape::Gaussian { bandwidth, .. } => 1.0 / bandwidth,
            _ => 1.0 / self.cutoff(),
        }
    }

    /// `⟨β²⟩ = C(0)`.
    pub fn variance(&self) -> f64 {
        self.variance
    }

    /// Frequencies where the spectrum has kinks or edges.
    pub fn knees(&self) -> Vec<f64> {
        match &self.shape {
            SpectrumShape::Gaussian { bandwidth, .. } => vec![*bandwidth, 3.0 * bandwidth],
            SpectrumShape::PowerLaw { low, cutoff, .. } => vec![*low, *cutoff],
            SpectrumShape::Tabulated { omega, .. } => omega.clone(),
        }
    }

    /// `C(t) = (1/π)∫₀^∞ S(ω)cos(ωt)dω`.
    pub fn autocorrelation(&self, t: f64) -> Result<f64> {
        let t = t.abs();
        if t == 0.0 {
            return Ok(self.variance);
        }
        match &self.shape {
            SpectrumShape::Gaussian { amplitude, bandwidth } => {
                Ok(amplitude * amplitude / 4.0 * (-0.5 * (t * bandwidth).powi(2)).exp())
            }
            SpectrumShape::PowerLaw {
                amplitude,
                exponent,
                low,
                cutoff,
            } => {
                let quad = Adaptive::new(1e-10, 1e-14 * self.variance);
                let q = exponent + 1.0;
                if *low == 0.0 {
                    // u = ω^{p+1} removes the integrable endpoint singularity
                    let inv = 1.0 / q;
                    let (u0, u1) = (0.0, cutoff.powf(q));
                    let cycles = (cutoff * t / PI).ceil().min(2000.0) as usize;
                    let pts = breakpoints(u0, u1, (1..cycles).map(|k| (k as f64 * PI / t).powf(q)));
                    let r = quad.integrate(|u| (u.powf(inv) * t).cos(), &pts)?;
                    Ok(amplitude * r.value / (PI * q))
                } else {
                    let cycles = (cutoff * t / PI).ceil().min(2000.0) as usize;
                    let pts = breakpoints(*low, *cutoff, (1..cycles).map(|k| k as f64 * PI / t));
                    let r = quad.integrate(|w| w.powf(*exponent) * (w * t).cos(), &pts)?;
                    Ok(amplitude * r.value / PI)
                }
            }
            SpectrumShape::Tabulated { omega, psd } => {
                let top = *omega.last().unwrap();
                let cycles = (top * t / PI).ceil().min(2000.0) as usize;
                let pts = breakpoints(
                    0.0,
                    top,
                    omega.iter().copied().chain((1..cycles).map(|k| k as f64 * PI / t)),
                );
                let quad = Adaptive::new(1e-10, 1e-14 * self.variance.max(f64::MIN_POSITIVE));
                let r = quad.integrate(|w| table_eval(omega, psd, w) * (w * t).cos(), &pts)?;
                Ok(r.value / PI)
            }
        }
    }
}

fn table_eval(omega: &[f64], psd: &[f64], w: f64) -> f64 {
    let last = omega.len() - 1;
    if w > omega[last] {
        return 0.0;
    }
    if w <= omega[0] {
        return psd[0];
    }
    let k = omega.partition_point(|&x| x <= w).min(last) - 1;
    let (a, b) = (omega[k], omega[k + 1]);
    let s = if a == 0.0 {
        (w - a) / (b - a)
    } else {
        (w / a).ln() / (b / a).ln()
    };
    psd[k] + (psd[k + 1] - psd[k]) * s
}

/// `∫₀^{ω_last} S dω` for the log-linear interpolant, including the constant
/// segment below the first point.
fn table_integral(omega: &[f64], psd: &[f64]) -> f64 {
    let mut total = psd[0] * omega[0];
    for k in 0..omega.len() - 1 {
        let (a, b, sa, sb) = (omega[k], omega[k + 1], psd[k], psd[k + 1]);
        total += if a == 0.0 {
            0.5 * (sa + sb) * b
        } else {
            let l = (b / a).ln();
            sa * (b - a) + (sb - sa) * (b * l - b + a) / l
        };
    }
    total
}

/// Independent per-axis spectra; a missing axis is noiseless.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct NoiseSpectrum {
    pub axes: [Option<AxisSpectrum>; 3],
}

impl NoiseSpectrum {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn single(axis: Axis, spectrum: AxisSpectrum) -> Self {
        Self::none().with(axis, spectrum)
    }

    pub fn isotropic(spectrum: AxisSpectrum) -> Self {
        NoiseSpectrum {
            axes: [Some(spectrum.clone()), Some(spectrum.clone()), Some(spectrum)],
        }
    }

    pub fn with(mut self, axis: Axis, spectrum: AxisSpectrum) -> Self {
        self.axes[axis.index()] = Some(spectrum);
        self
    }

    pub fn axis(&self, i: usize) -> Option<&AxisSpectrum> {
        self.axes[i].as_ref()
    }

    pub fn active(&self) -> impl Iterator<Item = (usize, &AxisSpectrum)> {
        self.axes
            .iter()
            .enumerate()
            .filter_map(|(i, a)| a.as_ref().map(|a| (i, a)))
    }

    pub fn is_zero(&self) -> bool {
        self.axes.iter().all(Option::is_none)
    }

    pub fn psd(&self, i: usize, omega: f64) -> f64 {
        self.axis(i).map_or(0.0, |a| a.psd(omega))
    }

    pub fn autocorrelation(&self, i: usize, t: f64) -> Result<f64> {
        self.axis(i).map_or(Ok(0.0), |a| a.autocorrelation(t))
    }

    /// `Σ_i ⟨β_i²⟩`.
    pub fn total_variance(&self) -> f64 {
        self.active().map(|(_, a)| a.variance()).fold(0.0, |acc, v| acc + v)
    }

    pub fn max_cutoff(&self) -> f64 {
        self.active().map(|(_, a)| a.cutoff()).fold(0.0, f64::max)
    }

    /// Shortest correlation time across active axes; infinite when noiseless.
    pub fn correlation_time(&self) -> f64 {
        self.active()
            .map(|(_, a)| a.correlation_time())
            .fold(f64::INFINITY, f64::min)
    }
}

/// `ξ = τ·√(Σ_i ⟨β_i²⟩)`.
pub fn smallness_xi(spec: &NoiseSpectrum, tau: f64) -> f64 {
    tau * spec.total_variance().sqrt()
}

pub const DEFAULT_CONFIDENCE: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceCheck {
    pub converges: bool,
    pub xi: f64,
    pub bound: f64,
}

/// Magnus convergence when `ξ < π / C_m` (strict).
pub fn magnus_convergence_check(spec: &NoiseSpectrum, tau: f64, confidence: f64) -> ConvergenceCheck {
    let xi = smallness_xi(spec, tau);
    let bound = PI / confidence;
    ConvergenceCheck {
        converges: xi < bound,
        xi,
        bound,
    }
}
