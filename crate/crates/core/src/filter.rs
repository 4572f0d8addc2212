//! First-order filter functions, dynamical-decoupling sequences with finite
//! pulses, the primitive and dynamically corrected NOT pulses, and
//! suppression-order estimation.

use std::f64::consts::PI;

use nalgebra::Matrix3;
use num_complex::{Complex, Complex64};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dd::{Dd, Real};
use crate::error::{Error, Result};
use crate::jet::{removable_quotient, Jet, POLE_WINDOW};
use crate::sequence::{ComplexMatrix, ControlSegment, ControlSequence, SpectralControlMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Precision {
    #[default]
    Double,
    Extended,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PulseKind {
    BangBang,
    PrimitivePi,
    DcgNot,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LocationRule {
    Cp,
    Udd,
    Custom,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    ClosedForm,
    Assembled,
    BangBang,
}

fn cis<T: Real>(x: T) -> Complex<T> {
    let (s, c) = x.sin_cos();
    Complex::new(c, s)
}

fn re<T: Real>(x: T) -> Complex<T> {
    Complex::new(x, T::zero())
}

fn to_c64<T: Real>(z: Complex<T>) -> Complex64 {
    Complex64::new(z.re.to_f64(), z.im.to_f64())
}

fn from_c64<T: Real>(z: Complex64) -> Complex<T> {
    Complex::new(T::from_f64(z.re), T::from_f64(z.im))
}

pub fn locations_in<T: Real>(rule: LocationRule, n: usize) -> Vec<T> {
    let nn = T::from_f64(n as f64);
    match rule {
        LocationRule::Cp => (1..=n)
            .map(|l| (T::from_f64(l as f64) - T::from_f64(0.5)) / nn)
            .collect(),
        LocationRule::Udd => {
            let denom = T::from_f64(2.0) * nn + T::from_f64(2.0);
            (1..=n)
                .map(|l| {
                    let (s, _) = (T::pi() * T::from_f64(l as f64) / denom).sin_cos();
                    s * s
                })
                .collect()
        }
        LocationRule::Custom => Vec::new(),
    }
}

/// `δ_l = (l − ½)/n`.
pub fn cp_locations(n: usize) -> Vec<f64> {
    locations_in(LocationRule::Cp, n)
}

/// `δ_l = sin²(πl / (2n + 2))`.
/// Evaluated in double-double and rounded once.
pub fn udd_locations(n: usize) -> Vec<f64> {
    udd_locations_extended(n).into_iter().map(Real::to_f64).collect()
}

/// UDD locations rounded from double-double evaluation.
pub fn udd_locations_extended(n: usize) -> Vec<Dd> {
    locations_in(LocationRule::Udd, n)
}

/// A dynamical-decoupling sequence of identical x-axis π pulses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DdSpec {
    pub rule: LocationRule,
    pub locations: Vec<f64>,
    pub total_time: f64,
    pub pulse: PulseKind,
    /// Full pulse duration; four primitive durations for the corrected gate.
    pub pulse_width: f64,
}

impl DdSpec {
    pub fn new(
        rule: LocationRule,
        locations: Vec<f64>,
        total_time: f64,
        pulse: PulseKind,
        pulse_width: f64,
    ) -> Result<Self> {
        let pulse_width = if pulse == PulseKind::BangBang { 0.0 } else { pulse_width };
        let spec = DdSpec {
            rule,
            locations,
            total_time,
            pulse,
            pulse_width,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn cp(n: usize, total_time: f64, pulse: PulseKind, pulse_width: f64) -> Result<Self> {
        Self::new(LocationRule::Cp, cp_locations(n), total_time, pulse, pulse_width)
    }

    pub fn udd(n: usize, total_time: f64, pulse: PulseKind, pulse_width: f64) -> Result<Self> {
        Self::new(LocationRule::Udd, udd_locations(n), total_time, pulse, pulse_width)
    }

    pub fn custom(locations: Vec<f64>, total_time: f64, pulse: PulseKind, pulse_width: f64) -> Result<Self> {
        Self::new(LocationRule::Custom, locations, total_time, pulse, pulse_width)
    }

    pub fn validate(&self) -> Result<()> {
        let (tau, tp) = (self.total_time, self.pulse_width);
        if !(tau.is_finite() && tau > 0.0) {
            return Err(Error::InvalidSpec(format!("total time must be positive, got {tau}")));
        }
        if !(tp.is_finite() && tp >= 0.0) {
            return Err(Error::InvalidSpec(format!(
                "pulse width must be non-negative, got {tp}"
            )));
        }
        if self.pulse != PulseKind::BangBang && tp == 0.0 {
            return Err(Error::InvalidSpec("finite pulses need a positive width".into()));
        }
        let slack = 1e-12 * tau;
        for (l, &d) in self.locations.iter().enumerate() {
            if !(d > 0.0 && d < 1.0) {
                return Err(Error::InvalidSpec(format!("location {} = {d} outside (0, 1)", l + 1)));
            }
            if tp > 0.0 && (d * tau - 0.5 * tp <= 0.0 || d * tau + 0.5 * tp >= tau) {
                return Err(Error::InvalidSpec(format!("pulse {} extends past the sequence", l + 1)));
            }
        }
        for (l, w) in self.locations.windows(2).enumerate() {
            if w[1] <= w[0] {
                return Err(Error::InvalidSpec(format!("locations not increasing at {}", l + 2)));
            }
            if (w[1] - w[0]) * tau < tp - slack {
                return Err(Error::InvalidSpec(format!("pulses {} and {} overlap", l + 1, l + 2)));
            }
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.locations.len()
    }

    /// Duration of a single primitive π rotation within the pulse.
    pub fn tau_pi(&self) -> f64 {
        match self.pulse {
            PulseKind::DcgNot => self.pulse_width / 4.0,
            _ => self.pulse_width,
        }
    }

    /// Locations in the requested scalar type; rule-based ones are regenerated
    /// rather than widened so extended evaluation keeps its extra digits.
    pub fn locations_in<T: Real>(&self) -> Vec<T> {
        match self.rule {
            LocationRule::Custom => self.locations.iter().map(|&d| T::from_f64(d)).collect(),
            rule => locations_in(rule, self.n()),
        }
    }

    /// Segments of the same physical sequence for the generic assembler.
    pub fn to_sequence(&self) -> Result<ControlSequence> {
        if self.pulse == PulseKind::BangBang && self.n() > 0 {
            return Err(Error::InvalidSpec("bang-bang pulses have no segment form".into()));
        }
        let (tau, tp) = (self.total_time, self.pulse_width);
        let pulse = pulse_segments(self.pulse, self.tau_pi())?;
        let mut segs = Vec::new();
        let mut cursor = 0.0;
        let push_free = |segs: &mut Vec<ControlSegment>, len: f64| -> Result<()> {
            if len > 1e-14 * tau {
                segs.push(ControlSegment::free(len)?);
            }
            Ok(())
        };
        for &d in &self.locations {
            let start = d * tau - 0.5 * tp;
            push_free(&mut segs, start - cursor)?;
            segs.extend_from_slice(&pulse);
            cursor = start + tp;
        }
        push_free(&mut segs, tau - cursor)?;
        Ok(ControlSequence::new(segs))
    }
}

/// The segments of one pulse.
pub fn pulse_segments(kind: PulseKind, tau_pi: f64) -> Result<Vec<ControlSegment>> {
    Ok(match kind {
        PulseKind::BangBang => Vec::new(),
        PulseKind::PrimitivePi => vec![ControlSegment::x_rotation(tau_pi, PI)?],
        PulseKind::DcgNot => vec![
            ControlSegment::x_rotation(tau_pi, PI)?,
            ControlSegment::x_rotation(2.0 * tau_pi, PI)?,
            ControlSegment::x_rotation(tau_pi, PI)?,
        ],
    })
}

/// `(R_zz, R_zy)` of a pulse as a function of `ω`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PulseVector<T> {
    pub zz: Complex<T>,
    pub zy: Complex<T>,
}

fn primitive_num_zz(tp: f64) -> impl Fn(Jet) -> Jet {
    move |w: Jet| w * w * (w.cis(tp) + Jet::real(1.0))
}

fn primitive_num_zy(tp: f64) -> impl Fn(Jet) -> Jet {
    let om = PI / tp;
    move |w: Jet| (w * (w.cis(tp) + Jet::real(1.0))).scale(Complex64::new(0.0, om))
}

/// Primitive π_X pulse of duration `τ_π`:
/// `R_zz = ω²(e^{iωτ_π} + 1)/(ω² − Ω²)`, `R_zy = iωΩ(e^{iωτ_π} + 1)/(ω² − Ω²)`.
pub fn primitive_pi_cv(tau_pi: f64, omega: f64) -> (Complex64, Complex64) {
    let om = PI / tau_pi;
    (
        removable_quotient(primitive_num_zz(tau_pi), om, omega),
        removable_quotient(primitive_num_zy(tau_pi), om, omega),
    )
}

fn dcg_parts(tau_pi: f64) -> (impl Fn(Jet) -> Jet, impl Fn(Jet) -> Jet) {
    let p1 = move |w: Jet| w.cis(4.0 * tau_pi) + w.cis(3.0 * tau_pi) + w.cis(tau_pi) + Jet::real(1.0);
    let p2 = move |w: Jet| w.cis(3.0 * tau_pi) + w.cis(tau_pi);
    (p1, p2)
}

/// Three-segment corrected NOT gate (rates `Ω, Ω/2, Ω`, total `4τ_π`).
pub fn dcg_not_cv(tau_pi: f64, omega: f64) -> (Complex64, Complex64) {
    let om = PI / tau_pi;
    let (p1, p2) = dcg_parts(tau_pi);
    let a = removable_quotient(|w| w * w * p1(w), om, omega);
    let b = removable_quotient(|w| w * w * p2(w), 0.5 * om, omega);
    let (p1, p2) = dcg_parts(tau_pi);
    let c = removable_quotient(|w| (w * p1(w)).scale(Complex64::new(0.0, om)), om, omega);
    let d = removable_quotient(|w| (w * p2(w)).scale(Complex64::new(0.0, 0.5 * om)), 0.5 * om, omega);
    (a - b, c - d)
}

fn near_pole(omega: f64, pole: f64) -> bool {
    (omega * omega - pole * pole).abs() < POLE_WINDOW * pole * pole
}

/// Pulse vector evaluated in scalar type `T`, falling back to double near poles.
pub fn pulse_vector<T: Real>(kind: PulseKind, tau_pi: f64, omega: T) -> PulseVector<T> {
    let zero = Complex::new(T::zero(), T::zero());
    let w64 = omega.to_f64();
    let om64 = PI / tau_pi;
    match kind {
        PulseKind::BangBang => PulseVector { zz: zero, zy: zero },
        PulseKind::PrimitivePi => {
            if near_pole(w64, om64) {
                let (zz, zy) = primitive_pi_cv(tau_pi, w64);
                return PulseVector {
                    zz: from_c64(zz),
                    zy: from_c64(zy),
                };
            }
            let tp = T::from_f64(tau_pi);
            let om = T::pi() / tp;
            let e = cis(omega * tp) + re(T::one());
            let d = omega * omega - om * om;
            PulseVector {
                zz: e * re(omega * omega / d),
                zy: e * Complex::new(T::zero(), omega * om / d),
            }
        }
        PulseKind::DcgNot => {
            if near_pole(w64, om64) || near_pole(w64, 0.5 * om64) {
                let (zz, zy) = dcg_not_cv(tau_pi, w64);
                return PulseVector {
                    zz: from_c64(zz),
                    zy: from_c64(zy),
                };
            }
            let tp = T::from_f64(tau_pi);
            let om = T::pi() / tp;
            let half = om / T::from_f64(2.0);
            let p1 = cis(T::from_f64(4.0) * omega * tp)
                + cis(T::from_f64(3.0) * omega * tp)
                + cis(omega * tp)
                + re(T::one());
            let p2 = cis(T::from_f64(3.0) * omega * tp) + cis(omega * tp);
            let d1 = re(omega * omega - om * om);
            let d2 = re(omega * omega - half * half);
            let zz = re(omega * omega) * (p1 / d1 - p2 / d2);
            let zy = Complex::new(T::zero(), omega * om) * (p1 / d1 - p2 / (re(T::from_f64(2.0)) * d2));
            PulseVector { zz, zy }
        }
    }
}

/// `Σ_l (−1)^l e^{iωδ_lτ}` with compensated accumulation.
fn alternating_sum<T: Real>(locs: &[T], tau: T, omega: T) -> Complex<T> {
    let (mut s, mut c) = (Complex::new(T::zero(), T::zero()), Complex::new(T::zero(), T::zero()));
    for (l, &d) in locs.iter().enumerate() {
        let term = cis(omega * d * tau);
        let term = if l % 2 == 0 { -term } else { term };
        // Neumaier on each component
        let t = s + term;
        let corr = |a: T, b: T, t: T| if a.abs() >= b.abs() { (a - t) + b } else { (b - t) + a };
        c = c + Complex::new(corr(s.re, term.re, t.re), corr(s.im, term.im, t.im));
        s = t;
    }
    s + c
}

/// `(R_zx, R_zy, R_zz)` of a DD sequence of x-axis π pulses:
/// `R_zz = 1 − (−1)ⁿe^{iωτ} + [2cos(ωτ_p/2) − e^{−iωτ_p/2}R^P_zz] S`,
/// `R_zy = −e^{−iωτ_p/2} R^P_zy S`, `S = Σ(−1)^l e^{iωδ_lτ}`.
pub fn dd_row_in<T: Real>(locs: &[T], tau: T, tp: T, omega: T, pulse: PulseVector<T>) -> [Complex<T>; 3] {
    let s = alternating_sum(locs, tau, omega);
    let half = omega * tp / T::from_f64(2.0);
    let (_, ch) = half.sin_cos();
    let em = cis(-half);
    let sign = if locs.len().is_multiple_of(2) {
        T::one()
    } else {
        -T::one()
    };
    let zz = re(T::one()) - cis(omega * tau) * re(sign) + (re(T::from_f64(2.0) * ch) - em * pulse.zz) * s;
    let zy = -(em * pulse.zy * s);
    [Complex::new(T::zero(), T::zero()), zy, zz]
}

/// DD sequence control vector for an arbitrary per-pulse vector.
pub fn dd_control_vector<F>(spec: &DdSpec, pulse_cv: F, omega: f64) -> [Complex64; 3]
where
    F: Fn(f64) -> (Complex64, Complex64),
{
    let (zz, zy) = pulse_cv(omega);
    dd_row_in(
        &spec.locations,
        spec.total_time,
        spec.pulse_width,
        omega,
        PulseVector { zz, zy },
    )
}

/// DD control vector for the spec's own pulse kind at the requested precision.
pub fn dd_control_vector_at(spec: &DdSpec, omega: f64, precision: Precision) -> [Complex64; 3] {
    match precision {
        Precision::Double => {
            let pv = pulse_vector::<f64>(spec.pulse, spec.tau_pi(), omega);
            dd_row_in(&spec.locations, spec.total_time, spec.pulse_width, omega, pv)
        }
        Precision::Extended => {
            let w = Dd::new(omega);
            let pv = pulse_vector::<Dd>(spec.pulse, spec.tau_pi(), w);
            let locs = spec.locations_in::<Dd>();
            let row = dd_row_in(&locs, Dd::new(spec.total_time), Dd::new(spec.pulse_width), w, pv);
            row.map(to_c64)
        }
    }
}

/// Bang-bang `R_zz = 1 − e^{iωτ} + 2Σ(−1)^l e^{iωδ_lτ}`; odd `n` goes through the
/// general form, which carries `(−1)ⁿ` on the final free period.
pub fn bang_bang_control_vector(locations: &[f64], tau: f64, omega: f64) -> Complex64 {
    if locations.len() % 2 == 1 {
        log::warn!(
            "bang-bang closed form holds for even n; n = {} evaluated through the general form",
            locations.len()
        );
    }
    let pv = PulseVector {
        zz: Complex64::new(0.0, 0.0),
        zy: Complex64::new(0.0, 0.0),
    };
    dd_row_in(locations, tau, 0.0, omega, pv)[2]
}

/// Full matrix for x-axis pulse trains, built from the z-row:
/// `R_x = (1 − e^{iωτ}, 0, 0)`, `R_y = (0, R_zz, −R_zy)`.
fn x_train_matrix(zy: Complex64, zz: Complex64, tau: f64, omega: f64) -> ComplexMatrix {
    let z = Complex64::new(0.0, 0.0);
    let fx = Complex64::new(1.0, 0.0) - Complex64::from_polar(1.0, omega * tau);
    Matrix3::new(fx, z, z, z, zz, -zy, z, zy, zz)
}

/// Closed-form spectral matrix of a DD sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct DdFilter {
    pub spec: DdSpec,
    pub precision: Precision,
}

impl DdFilter {
    pub fn new(spec: DdSpec, precision: Precision) -> Self {
        DdFilter { spec, precision }
    }

    pub fn provenance(&self) -> Provenance {
        if self.spec.pulse == PulseKind::BangBang {
            Provenance::BangBang
        } else {
            Provenance::ClosedForm
        }
    }
}

impl SpectralControlMatrix for DdFilter {
    fn total_time(&self) -> f64 {
        self.spec.total_time
    }

    fn matrix(&self, omega: f64) -> ComplexMatrix {
        let row = dd_control_vector_at(&self.spec, omega, self.precision);
        x_train_matrix(row[1], row[2], self.spec.total_time, omega)
    }

    fn knee_count(&self) -> usize {
        self.spec.n() + 1
    }

    fn poles(&self) -> Vec<f64> {
        pulse_poles(self.spec.pulse, self.spec.tau_pi())
    }
}

/// Closed-form spectral matrix of a single pulse.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PulseFilter {
    pub kind: PulseKind,
    pub tau_pi: f64,
    pub precision: Precision,
}

impl PulseFilter {
    pub fn new(kind: PulseKind, tau_pi: f64, precision: Precision) -> Result<Self> {
        if kind == PulseKind::BangBang || !(tau_pi.is_finite() && tau_pi > 0.0) {
            return Err(Error::InvalidSpec(
                "pulse needs a finite kind and positive duration".into(),
            ));
        }
        Ok(PulseFilter {
            kind,
            tau_pi,
            precision,
        })
    }

    pub fn duration(&self) -> f64 {
        match self.kind {
            PulseKind::DcgNot => 4.0 * self.tau_pi,
            _ => self.tau_pi,
        }
    }

    pub fn to_sequence(&self) -> Result<ControlSequence> {
        Ok(ControlSequence::new(pulse_segments(self.kind, self.tau_pi)?))
    }
}

impl SpectralControlMatrix for PulseFilter {
    fn total_time(&self) -> f64 {
        self.duration()
    }

    fn matrix(&self, omega: f64) -> ComplexMatrix {
        let (zz, zy) = match self.precision {
            Precision::Double => {
                let p = pulse_vector::<f64>(self.kind, self.tau_pi, omega);
                (p.zz, p.zy)
            }
            Precision::Extended => {
                let p = pulse_vector::<Dd>(self.kind, self.tau_pi, Dd::new(omega));
                (to_c64(p.zz), to_c64(p.zy))
            }
        };
        x_train_matrix(zy, zz, self.duration(), omega)
    }

    fn knee_count(&self) -> usize {
        match self.kind {
            PulseKind::DcgNot => 3,
            _ => 1,
        }
    }

    fn poles(&self) -> Vec<f64> {
        pulse_poles(self.kind, self.tau_pi)
    }
}

fn pulse_poles(kind: PulseKind, tau_pi: f64) -> Vec<f64> {
    match kind {
        PulseKind::BangBang => Vec::new(),
        PulseKind::PrimitivePi => vec![PI / tau_pi],
        PulseKind::DcgNot => vec![0.5 * PI / tau_pi, PI / tau_pi],
    }
}

/// `F_i(ω) = Σ_j |R_ij(ω)|²`.
pub fn first_order_filter(r: &ComplexMatrix, axis: usize) -> f64 {
    (0..3).map(|j| r[(axis, j)].norm_sqr()).sum()
}

/// `n` log-spaced points per decade of `ω·unit` over `[lo, hi]`, returned as `ω`.
pub fn log_grid(lo: f64, hi: f64, per_decade: usize, unit: f64) -> Vec<f64> {
    if !(lo > 0.0 && hi >= lo && per_decade > 0) {
        return Vec::new();
    }
    let decades = (hi / lo).log10();
    let steps = (decades * per_decade as f64).round() as usize;
    (0..=steps)
        .map(|k| {
            let x = if steps == 0 {
                lo
            } else {
                lo * 10f64.powf(decades * k as f64 / steps as f64)
            };
            x / unit
        })
        .collect()
}

/// Sampled first-order filter functions on all three noise axes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterFunction {
    pub omega: Vec<f64>,
    pub values: [Vec<f64>; 3],
    pub total_time: f64,
    /// Time used to make frequencies dimensionless (`ω · time_unit`).
    pub time_unit: f64,
    pub provenance: Provenance,
}

impl FilterFunction {
    pub fn sample<S: SpectralControlMatrix + ?Sized>(
        src: &S,
        omega: &[f64],
        time_unit: f64,
        provenance: Provenance,
    ) -> Self {
        let rows: Vec<[f64; 3]> = omega
            .par_iter()
            .map(|&w| {
                let m = src.matrix(w);
                [0, 1, 2].map(|i| first_order_filter(&m, i))
            })
            .collect();
        let values = [0, 1, 2].map(|i| rows.iter().map(|r| r[i]).collect());
        FilterFunction {
            omega: omega.to_vec(),
            values,
            total_time: src.total_time(),
            time_unit,
            provenance,
        }
    }

    pub fn axis(&self, i: usize) -> &[f64] {
        &self.values[i]
    }

    pub fn dimensionless(&self) -> Vec<f64> {
        self.omega.iter().map(|w| w * self.time_unit).collect()
    }
}

/// Least-squares fit of `log F` against `log ω`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SuppressionFit {
    pub slope: f64,
    pub alpha: f64,
    pub rolloff_db_per_octave: f64,
    pub window: (f64, f64),
    pub points: usize,
}

/// Fits `F ∝ (ω·unit)^{2(α+1)}` over the samples whose dimensionless frequency lies
/// in `window`.
pub fn suppression_order(ff: &FilterFunction, axis: usize, window: (f64, f64)) -> Result<SuppressionFit> {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let tol = 1e-9;
    for (w, f) in ff.omega.iter().zip(ff.axis(axis)) {
        let x = w * ff.time_unit;
        if x < window.0 * (1.0 - tol) || x > window.1 * (1.0 + tol) {
            continue;
        }
        if !(f.is_finite() && *f > 0.0) {
            return Err(Error::Fit(format!("filter vanishes or is non-finite at ω·t = {x:e}")));
        }
        xs.push(x.ln());
        ys.push(f.ln());
    }
    if xs.len() < 3 {
        return Err(Error::Fit(format!("only {} samples inside the window", xs.len())));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let slope = sxy / sxx;
    let alpha = slope / 2.0 - 1.0;
    Ok(SuppressionFit {
        slope,
        alpha,
        rolloff_db_per_octave: 6.0 * (alpha + 1.0),
        window,
        points: xs.len(),
    })
}
