//! Piecewise-constant control sequences and their control matrices.
//!
//! During a segment of rate `Ω` about unit axis `n̂` the toggling-frame
//! rotation is `R^P(t) = n̂n̂ᵀ + (I − n̂n̂ᵀ) cos Ωt + [n̂]ₓ sin Ωt`, which covers
//! planar rotations, z-rotations and free evolution (`Ω = 0`) alike. The
//! frequency-domain matrix is assembled from exact exponential integrals, so
//! the apparent poles at `ω = ±Ω` never appear.

use nalgebra::{Matrix3, Vector3};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jet::{removable_quotient, Jet};
use crate::quad::Neumaier;
use crate::su2::{RotationMatrix, Su2};

pub type ComplexMatrix = Matrix3<Complex64>;

const I: Complex64 = Complex64::new(0.0, 1.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SegmentKind {
    PlanarRotation,
    FreeEvolution,
    ZRotation,
}

/// Raw segment description as it appears in sequence files.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmentSpec {
    pub kind: SegmentKind,
    pub duration: f64,
    #[serde(default)]
    pub rate: f64,
    #[serde(default)]
    pub axis_phase: f64,
}

/// One constant-control period.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SegmentSpec", into = "SegmentSpec")]
pub struct ControlSegment {
    kind: SegmentKind,
    duration: f64,
    rate: f64,
    axis_phase: f64,
}

impl TryFrom<SegmentSpec> for ControlSegment {
    type Error = Error;
    fn try_from(s: SegmentSpec) -> Result<Self> {
        ControlSegment::new(s.kind, s.duration, s.rate, s.axis_phase)
    }
}

impl From<ControlSegment> for SegmentSpec {
    fn from(s: ControlSegment) -> Self {
        SegmentSpec {
            kind: s.kind,
            duration: s.duration,
            rate: s.rate,
            axis_phase: s.axis_phase,
        }
    }
}

impl ControlSegment {
    pub fn new(kind: SegmentKind, duration: f64, rate: f64, axis_phase: f64) -> Result<Self> {
        if !(duration.is_finite() && duration > 0.0) {
            return Err(Error::InvalidSegment(format!(
                "duration must be positive, got {duration}"
            )));
        }
        if !(rate.is_finite() && rate >= 0.0) {
            return Err(Error::InvalidSegment(format!("rate must be non-negative, got {rate}")));
        }
        if !axis_phase.is_finite() {
            return Err(Error::InvalidSegment("axis phase must be finite".into()));
        }
        let (rate, axis_phase) = match kind {
            SegmentKind::FreeEvolution => {
                if rate != 0.0 {
                    return Err(Error::InvalidSegment("free evolution must have zero rate".into()));
                }
                (0.0, 0.0)
            }
            SegmentKind::ZRotation => (rate, 0.0),
            SegmentKind::PlanarRotation => (rate, axis_phase),
        };
        Ok(ControlSegment {
            kind,
            duration,
            rate,
            axis_phase,
        })
    }

    pub fn planar(duration: f64, rate: f64, axis_phase: f64) -> Result<Self> {
        Self::new(SegmentKind::PlanarRotation, duration, rate, axis_phase)
    }

    pub fn free(duration: f64) -> Result<Self> {
        Self::new(SegmentKind::FreeEvolution, duration, 0.0, 0.0)
    }

    pub fn z_rotation(duration: f64, rate: f64) -> Result<Self> {
        Self::new(SegmentKind::ZRotation, duration, rate, 0.0)
    }

    /// A rotation by `angle` about `x̂` (phase 0) lasting `duration`.
    pub fn x_rotation(duration: f64, angle: f64) -> Result<Self> {
        Self::planar(duration, angle / duration, 0.0)
    }

    pub fn kind(&self) -> SegmentKind {
        self.kind
    }

    pub fn duration(&self) -> f64 {
        self.duration
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn axis_phase(&self) -> f64 {
        self.axis_phase
    }

    pub fn angle(&self) -> f64 {
        self.rate * self.duration
    }

    pub fn axis(&self) -> Vector3<f64> {
        match self.kind {
            SegmentKind::PlanarRotation => {
                let (s, c) = self.axis_phase.sin_cos();
                Vector3::new(c, s, 0.0)
            }
            _ => Vector3::z(),
        }
    }

    /// Control Hamiltonian as the vector `h` in `H_c = h·σ`.
    pub fn hamiltonian(&self) -> Vector3<f64> {
        self.axis() * (0.5 * self.rate)
    }

    /// Propagator after time `t` into the segment.
    pub fn propagator_at(&self, t: f64) -> Su2 {
        let (s, c) = (0.5 * self.rate * t).sin_cos();
        Su2::from_components(c, self.axis() * s)
    }

    pub fn propagator(&self) -> Su2 {
        self.propagator_at(self.duration)
    }

    fn kinematics(&self) -> (Matrix3<f64>, Matrix3<f64>, Matrix3<f64>) {
        let n = self.axis();
        let a = n * n.transpose();
        let b = Matrix3::identity() - a;
        let c = n.cross_matrix();
        (a, b, c)
    }

    /// Toggling-frame rotation `R^P(t)` relative to the segment start.
    pub fn rotation_at(&self, t: f64) -> RotationMatrix {
        if self.rate == 0.0 {
            return Matrix3::identity();
        }
        let (a, b, c) = self.kinematics();
        let (s, co) = (self.rate * t).sin_cos();
        a + b * co + c * s
    }

    /// `∫₀^Δ e^{iωt} R^P(t) dt`, i.e. the spectral matrix divided by `−iω`.
    pub fn reduced_spectral_matrix(&self, omega: f64) -> ComplexMatrix {
        let d = self.duration;
        if self.rate == 0.0 {
            return Matrix3::<f64>::identity().map(|x| exp_integral(omega, d) * x);
        }
        let (a, b, c) = self.kinematics();
        let ep = exp_integral(omega + self.rate, d);
        let em = exp_integral(omega - self.rate, d);
        let i0 = exp_integral(omega, d);
        let ic = 0.5 * (ep + em);
        let is = (ep - em) / (2.0 * I);
        Matrix3::from_fn(|r, k| a[(r, k)] * i0 + b[(r, k)] * ic + c[(r, k)] * is)
    }

    /// `R^P(ω) = −iω ∫₀^Δ e^{iωt} R^P(t) dt`.
    pub fn spectral_matrix(&self, omega: f64) -> ComplexMatrix {
        self.reduced_spectral_matrix(omega) * (-I * omega)
    }

    /// Splits the segment at `t` (relative to its start) into two of the same control.
    pub fn split(&self, t: f64) -> Result<(Self, Self)> {
        let first = Self::new(self.kind, t, self.rate, self.axis_phase)?;
        let second = Self::new(self.kind, self.duration - t, self.rate, self.axis_phase)?;
        Ok((first, second))
    }
}

/// `∫₀^Δ e^{ikt} dt = Δ e^{ikΔ/2} sinc(kΔ/2)`, well conditioned for every `k`.
pub fn exp_integral(k: f64, duration: f64) -> Complex64 {
    let x = 0.5 * k * duration;
    Complex64::from_polar(duration * sinc(x), x)
}

pub fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        let x2 = x * x;
        1.0 - x2 / 6.0 * (1.0 - x2 / 20.0)
    } else {
        x.sin() / x
    }
}

/// z-row of a segment's spectral matrix from the closed form in terms of
/// `f = e^{iωΔ} cos θ − 1` and `g = e^{iωΔ} sin θ`, with the pole at `ω = ±Ω`
/// removed by series expansion.
pub fn segment_z_row_closed_form(seg: &ControlSegment, omega: f64) -> [Complex64; 3] {
    let (d, rate) = (seg.duration(), seg.rate());
    let theta = seg.angle();
    let (sp, cp) = seg.axis_phase().sin_cos();
    // ½ Tr(σ_φ σ_z σ_j): j = x → i sin φ, j = y → −i cos φ, j = z → 0
    let planar = seg.kind() == SegmentKind::PlanarRotation;
    let tr = if planar {
        [I * sp, -I * cp, Complex64::new(0.0, 0.0)]
    } else {
        [Complex64::new(0.0, 0.0); 3]
    };
    let rate = if planar { rate } else { 0.0 };
    let theta = if planar { theta } else { 0.0 };
    let (st, ct) = theta.sin_cos();
    let row = |j: usize| {
        let tj = tr[j];
        let num = move |w: Jet| {
            let e = w.cis(d);
            let f = e.scale(Complex64::new(ct, 0.0)) - Jet::real(1.0);
            let g = e.scale(Complex64::new(st, 0.0));
            let mut inner = (f.scale(Complex64::new(rate, 0.0)) - (w * g).scale(I)).scale(tj);
            if j == 2 {
                inner = inner + g.scale(I * rate) - w * f;
            }
            w * inner
        };
        if rate == 0.0 {
            if j == 2 {
                // ω (−ω f) / ω² with f = e^{iωΔ} − 1
                return Complex64::new(1.0, 0.0) - Complex64::from_polar(1.0, omega * d);
            }
            return Complex64::new(0.0, 0.0);
        }
        removable_quotient(num, rate, omega)
    };
    [row(0), row(1), row(2)]
}

/// Anything that yields a frequency-domain control matrix.
pub trait SpectralControlMatrix: Sync {
    fn total_time(&self) -> f64;

    /// `R(ω)`.
    fn matrix(&self, omega: f64) -> ComplexMatrix;

    /// Number of control periods, used to place quadrature knees.
    fn knee_count(&self) -> usize {
        1
    }

    /// Rates `Ω` at which the matrix has resonant peaks.
    fn poles(&self) -> Vec<f64> {
        Vec::new()
    }

    /// `F_i(ω) / ω² = |R_i(ω)|² / ω²`, held at its low-frequency limit below `ωτ = 1e-4`.
    fn filter_over_omega_sq(&self, omega: f64, axis: usize) -> f64 {
        let tau = self.total_time();
        let w = if (omega * tau).abs() < 1e-4 { 1e-4 / tau } else { omega };
        let r = self.matrix(w);
        (0..3).map(|j| r[(axis, j)].norm_sqr()).sum::<f64>() / (w * w)
    }
}

/// An ordered list of segments with cached cumulative operators.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlSequence {
    segments: Vec<ControlSegment>,
    boundaries: Vec<f64>,
    cumulative: Vec<Su2>,
    lambdas: Vec<RotationMatrix>,
}

impl Default for ControlSequence {
    fn default() -> Self {
        Self::new(Vec::new())
    }
}

impl ControlSequence {
    pub fn new(segments: Vec<ControlSegment>) -> Self {
        let mut boundaries = Vec::with_capacity(segments.len() + 1);
        let mut cumulative = Vec::with_capacity(segments.len() + 1);
        let mut t = Neumaier::default();
        let mut q = Su2::identity();
        boundaries.push(0.0);
        cumulative.push(q);
        for s in &segments {
            t.add(s.duration());
            boundaries.push(t.sum());
            q = s.propagator() * q;
            cumulative.push(q);
        }
        let lambdas = cumulative.iter().map(Su2::so3).collect();
        ControlSequence {
            segments,
            boundaries,
            cumulative,
            lambdas,
        }
    }

    pub fn segments(&self) -> &[ControlSegment] {
        &self.segments
    }

    /// `t_0 = 0 < t_1 < … < t_n = τ`.
    pub fn boundaries(&self) -> &[f64] {
        &self.boundaries
    }

    pub fn total_time(&self) -> f64 {
        *self.boundaries.last().unwrap()
    }

    /// `Q_0 = I, Q_1, …, Q_n`.
    pub fn cumulative_operators(&self) -> &[Su2] {
        &self.cumulative
    }

    /// Net noise-free operation.
    pub fn target(&self) -> Su2 {
        *self.cumulative.last().unwrap()
    }

    /// `Λ^{(l)} = so3(Q_l)`.
    pub fn lambda(&self, l: usize) -> &RotationMatrix {
        &self.lambdas[l]
    }

    pub fn max_rate(&self) -> f64 {
        self.segments.iter().map(|s| s.rate()).fold(0.0, f64::max)
    }

    /// Index of the segment active at `t` (the earlier one on a boundary).
    pub fn segment_index(&self, t: f64) -> usize {
        let n = self.segments.len();
        let idx = self.boundaries.partition_point(|&b| b < t);
        idx.clamp(1, n.max(1)) - 1
    }

    /// `R(t)` in the control frame.
    pub fn control_matrix_time(&self, t: f64) -> Result<RotationMatrix> {
        let tau = self.total_time();
        if !(0.0..=tau).contains(&t) {
            return Err(Error::Domain { t, total: tau });
        }
        Ok(self.control_matrix_unchecked(t))
    }

    pub(crate) fn control_matrix_unchecked(&self, t: f64) -> RotationMatrix {
        if self.segments.is_empty() {
            return Matrix3::identity();
        }
        let l = self.segment_index(t);
        let local = (t - self.boundaries[l]).clamp(0.0, self.segments[l].duration());
        self.segments[l].rotation_at(local) * self.lambdas[l]
    }

    /// `∫₀^τ e^{iωt} R(t) dt`, summed with compensation.
    pub fn reduced_spectral_matrix(&self, omega: f64) -> ComplexMatrix {
        let mut acc = [[Neumaier::default(); 2]; 9];
        for (l, seg) in self.segments.iter().enumerate() {
            let phase = Complex64::from_polar(1.0, omega * self.boundaries[l]);
            let m = seg.reduced_spectral_matrix(omega) * self.lambdas[l].map(|x| Complex64::new(x, 0.0));
            for (k, z) in m.iter().enumerate() {
                let z = phase * z;
                acc[k][0].add(z.re);
                acc[k][1].add(z.im);
            }
        }
        Matrix3::from_iterator(acc.iter().map(|a| Complex64::new(a[0].sum(), a[1].sum())))
    }

    /// `R(ω) = Σ_l e^{iωt_{l−1}} R^{P_l}(ω) Λ^{(l−1)}`.
    pub fn spectral_matrix(&self, omega: f64) -> ComplexMatrix {
        self.reduced_spectral_matrix(omega) * (-I * omega)
    }
}

impl SpectralControlMatrix for ControlSequence {
    fn total_time(&self) -> f64 {
        ControlSequence::total_time(self)
    }

    fn matrix(&self, omega: f64) -> ComplexMatrix {
        self.spectral_matrix(omega)
    }

    fn knee_count(&self) -> usize {
        self.segments.len().max(1)
    }

    fn poles(&self) -> Vec<f64> {
        let mut p: Vec<f64> = self.segments.iter().map(|s| s.rate()).filter(|r| *r > 0.0).collect();
        p.sort_by(f64::total_cmp);
        p.dedup();
        p
    }

    fn filter_over_omega_sq(&self, omega: f64, axis: usize) -> f64 {
        let k = self.reduced_spectral_matrix(omega);
        (0..3).map(|j| k[(axis, j)].norm_sqr()).sum()
    }
}

pub fn cumulative_operators(seq: &ControlSequence) -> Vec<Su2> {
    seq.cumulative_operators().to_vec()
}

pub fn lambda_matrix(q_prev: &Su2) -> RotationMatrix {
    q_prev.so3()
}

pub fn control_matrix_time(seq: &ControlSequence, t: f64) -> Result<RotationMatrix> {
    seq.control_matrix_time(t)
}

pub fn segment_spectral_matrix(seg: &ControlSegment, omega: f64) -> ComplexMatrix {
    seg.spectral_matrix(omega)
}

pub fn sequence_spectral_matrix(seq: &ControlSequence, omega: f64) -> ComplexMatrix {
    seq.spectral_matrix(omega)
}
