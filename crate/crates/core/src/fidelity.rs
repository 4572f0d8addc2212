//! Operational fidelity from spectral overlaps, a time-domain oracle for the
//! leading term, and fourth-order Magnus corrections for Gaussian noise.

use std::cell::RefCell;
use std::f64::consts::PI;

use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::noise::{magnus_convergence_check, AxisSpectrum, ConvergenceCheck, NoiseSpectrum, SpectrumShape};
use crate::noise::{smallness_xi, DEFAULT_CONFIDENCE};
use crate::quad::{breakpoints, pairwise_sum, Adaptive, GlRule};
use crate::sequence::{ControlSequence, SpectralControlMatrix};

pub const CONVENTION_NOTE: &str = "noise Hamiltonian H0 = beta(t).sigma; spectra quoted for H = beta sigma_z/2 \
     enter with amplitude halved (S_lib = S/4)";

/// Above this `ξ²` the truncated expansion is flagged as unreliable.
pub const VALIDITY_THRESHOLD: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    #[default]
    Frequency,
    TimeDomain,
}

/// Leading-order error `⟨a₁²⟩` split by noise axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct FirstOrder {
    pub per_axis: [f64; 3],
    pub total: f64,
}

impl FirstOrder {
    fn from_axes(per_axis: [f64; 3]) -> Self {
        FirstOrder {
            per_axis,
            total: per_axis.iter().sum(),
        }
    }
}

fn overlap_upper(spectrum: &AxisSpectrum, tau: f64) -> f64 {
    match spectrum.shape() {
        SpectrumShape::Gaussian { .. } => spectrum.cutoff().max(50.0 / tau),
        _ => spectrum.cutoff(),
    }
}

/// `(1/π)∫₀^{ω_max} S(ω) F_i(ω)/ω² dω` for one noise axis.
pub fn axis_overlap<S>(src: &S, spectrum: &AxisSpectrum, axis: usize) -> Result<f64>
where
    S: SpectralControlMatrix + ?Sized,
{
    let tau = src.total_time();
    let upper = overlap_upper(spectrum, tau);
    let lobes = ((upper * tau / PI).ceil() as usize).min(4000);
    let interior = (1..=lobes)
        .map(|k| k as f64 * PI / tau)
        .chain(src.poles())
        .chain(spectrum.knees());
    let pts = breakpoints(0.0, upper, interior);
    let quad = Adaptive::new(1e-10, 1e-300);
    let f = |w: f64| spectrum.psd(w) * src.filter_over_omega_sq(w, axis);
    let Some(p) = origin_singularity(spectrum) else {
        return Ok(quad.integrate(f, &pts)?.value / PI);
    };
    // ω = u^{1/(p+1)} on the first panel absorbs the ω^p divergence
    let q = p + 1.0;
    let head = quad.integrate(
        |u| {
            let w = u.powf(1.0 / q);
            f(w) * w.powf(-p) / q
        },
        &[0.0, pts[1].powf(q)],
    )?;
    let tail = quad.integrate(f, &pts[1..])?;
    Ok((head.value + tail.value) / PI)
}

fn origin_singularity(spectrum: &AxisSpectrum) -> Option<f64> {
    match spectrum.shape() {
        SpectrumShape::PowerLaw { exponent, low, .. } if *low == 0.0 && *exponent < 0.0 => Some(*exponent),
        _ => None,
    }
}

/// Dephasing overlap `χ = (1/π)∫ S_z F_z / ω²`.
pub fn chi_overlap<S>(src: &S, spectrum: &AxisSpectrum) -> Result<f64>
where
    S: SpectralControlMatrix + ?Sized,
{
    axis_overlap(src, spectrum, 2)
}

/// `½(1 + e^{−χ})`.
pub fn fidelity_first_order(chi: f64) -> f64 {
    0.5 * (1.0 + (-chi).exp())
}

/// `⟨a₁²⟩ = (1/π)Σ_i ∫ S_i F_i / ω²` over independent axes.
pub fn universal_first_order<S>(src: &S, noise: &NoiseSpectrum) -> Result<FirstOrder>
where
    S: SpectralControlMatrix + ?Sized,
{
    let mut per_axis = [0.0; 3];
    for (i, spec) in noise.active() {
        per_axis[i] = axis_overlap(src, spec, i)?;
    }
    Ok(FirstOrder::from_axes(per_axis))
}

/// Splits each panel until `rate · length ≤ π` and `length ≤ max_len`.
fn refine_panels(pts: &[f64], rate: f64, max_len: f64) -> Vec<f64> {
    let limit = if rate > 0.0 { (PI / rate).min(max_len) } else { max_len };
    let mut out = vec![pts[0]];
    for w in pts.windows(2) {
        let len = w[1] - w[0];
        let m = (len / limit).ceil().max(1.0) as usize;
        for k in 1..m {
            out.push(w[0] + len * k as f64 / m as f64);
        }
        out.push(w[1]);
    }
    out
}

/// Segment boundaries refined so that each panel turns by at most π under its
/// own segment's rate and is no longer than `max_len`.
fn segment_panels(seq: &ControlSequence, max_len: f64) -> Vec<f64> {
    let b = seq.boundaries();
    let mut out = vec![b[0]];
    for (seg, w) in seq.segments().iter().zip(b.windows(2)) {
        let rate = seg.rate().abs();
        out.extend(refine_panels(w, rate, max_len).into_iter().skip(1));
    }
    out
}

/// `g(s) = ∫_s^τ r_i(t)·r_i(t − s) dt`.
fn lag_overlap(seq: &ControlSequence, axis: usize, s: f64, rule: &GlRule) -> f64 {
    let tau = seq.total_time();
    if s >= tau {
        return 0.0;
    }
    let b = seq.boundaries();
    let pts = breakpoints(s, tau, b.iter().copied().chain(b.iter().map(|x| x + s)));
    let panels = refine_panels(&pts, seq.max_rate(), f64::INFINITY);
    let mut acc = 0.0;
    for w in panels.windows(2) {
        acc += rule.integrate(w[0], w[1], |t| {
            let a = seq.control_matrix_unchecked(t);
            let c = seq.control_matrix_unchecked(t - s);
            a.row(axis).dot(&c.row(axis))
        });
    }
    acc
}

/// `⟨a₁²⟩_i = 2∫₀^τ C_i(s) g_i(s) ds`, the time-domain oracle for the overlap integral.
pub fn a1_time_domain(seq: &ControlSequence, noise: &NoiseSpectrum) -> Result<FirstOrder> {
    let tau = seq.total_time();
    let rule = GlRule::new(16);
    let b = seq.boundaries();
    let mut lags: Vec<f64> = Vec::new();
    for (i, x) in b.iter().enumerate() {
        for y in &b[..i] {
            lags.push(x - y);
        }
    }
    let mut per_axis = [0.0; 3];
    for (i, spec) in noise.active() {
        let tc = spec.correlation_time();
        let scales = (1..=24).map(|k| 0.5 * k as f64 * tc);
        let pts = breakpoints(0.0, tau, lags.iter().copied().chain(scales));
        let failure = RefCell::new(None);
        let q = Adaptive::new(1e-10, 1e-300).integrate(
            |s| match spec.autocorrelation(s) {
                Ok(c) => c * lag_overlap(seq, i, s, &rule),
                Err(e) => {
                    failure.borrow_mut().get_or_insert(e);
                    f64::NAN
                }
            },
            &pts,
        );
        if let Some(e) = failure.into_inner() {
            return Err(e);
        }
        per_axis[i] = 2.0 * q?.value;
    }
    Ok(FirstOrder::from_axes(per_axis))
}

/// Correlation function prepared for dense evaluation.
#[derive(Debug, Clone)]
enum Kernel {
    Gaussian { var: f64, k: f64 },
    Table { h: f64, v: Vec<f64> },
}

impl Kernel {
    fn new(spec: &AxisSpectrum, tau: f64) -> Result<Self> {
        if let SpectrumShape::Gaussian { amplitude, bandwidth } = spec.shape() {
            return Ok(Kernel::Gaussian {
                var: amplitude * amplitude / 4.0,
                k: 0.5 * bandwidth * bandwidth,
            });
        }
        let n = 4096;
        let h = tau / n as f64;
        let v = (0..=n + 2)
            .into_par_iter()
            .map(|k| spec.autocorrelation(k as f64 * h))
            .collect::<Result<Vec<_>>>()?;
        Ok(Kernel::Table { h, v })
    }

    fn eval(&self, s: f64) -> f64 {
        match self {
            Kernel::Gaussian { var, k } => var * (-k * s * s).exp(),
            Kernel::Table { h, v } => {
                let x = s.abs() / h;
                let i = (x.floor() as usize).min(v.len() - 3);
                let f = x - i as f64;
                let at = |j: isize| v[j.unsigned_abs()];
                let i = i as isize;
                let (p0, p1, p2, p3) = (at(i - 1), at(i), at(i + 1), at(i + 2));
                // cubic Lagrange through i−1 … i+2
                p1 + 0.5 * f * (p2 - p0 + f * (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3 + f * (3.0 * (p1 - p2) + p3 - p0)))
            }
        }
    }
}

/// Resolution of the product Gauss–Legendre grids for the fourth-order terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HigherOrderGrid {
    /// Nodes per time dimension.
    pub nodes: usize,
    /// Coarser grid used to detect under-resolution; `None` skips the check.
    pub check_nodes: Option<usize>,
}

impl Default for HigherOrderGrid {
    fn default() -> Self {
        HigherOrderGrid {
            nodes: 48,
            check_nodes: Some(32),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HigherOrder {
    pub a2_sq: f64,
    pub a1_a3: f64,
    pub a1_fourth: f64,
    pub bound_a2_sq: f64,
    pub bound_a1_a3: f64,
    pub bound_a1_fourth: f64,
    /// `⟨a₂²⟩ + 2⟨a₁·a₃⟩ − ⟨|a₁|⁴⟩/3`, subtracted from `1 − ⟨a₁²⟩`.
    pub correction: f64,
}

impl HigherOrder {
    fn new(a2_sq: f64, a1_a3: f64, a1_fourth: f64, xi: f64) -> Self {
        let x4 = xi.powi(4);
        HigherOrder {
            a2_sq,
            a1_a3,
            a1_fourth,
            bound_a2_sq: 0.75 * x4,
            bound_a1_a3: x4 / 3.0,
            bound_a1_fourth: 3.0 * x4,
            correction: a2_sq + 2.0 * a1_a3 - a1_fourth / 3.0,
        }
    }

    pub fn within_bounds(&self) -> bool {
        // the fourth-moment bound is attained by static single-axis noise
        let slack = 1.0 + 1e-6;
        self.a2_sq.abs() <= self.bound_a2_sq * slack
            && self.a1_a3.abs() <= self.bound_a1_a3 * slack
            && self.a1_fourth.abs() <= self.bound_a1_fourth * slack
    }
}

struct Node {
    t: f64,
    w: f64,
    rows: [Vector3<f64>; 3],
}

/// Composite Gauss–Legendre panels aligned to segment boundaries.
struct TimeGrid<'a> {
    seq: &'a ControlSequence,
    panels: Vec<f64>,
    counts: Vec<usize>,
    rules: Vec<GlRule>,
}

impl<'a> TimeGrid<'a> {
    fn new(seq: &'a ControlSequence, nodes: usize) -> Self {
        let tau = seq.total_time();
        let panels = segment_panels(seq, f64::INFINITY);
        let floor = (nodes / 12).max(2);
        let counts: Vec<usize> = panels
            .windows(2)
            .map(|w| ((nodes as f64 * (w[1] - w[0]) / tau).ceil() as usize).max(floor))
            .collect();
        let top = counts.iter().copied().max().unwrap_or(2);
        let rules = (0..=top).map(|m| GlRule::new(m.max(1))).collect();
        TimeGrid {
            seq,
            panels,
            counts,
            rules,
        }
    }

    fn node(&self, t: f64, w: f64) -> Node {
        let r = self.seq.control_matrix_unchecked(t);
        Node {
            t,
            w,
            rows: [0, 1, 2].map(|i| r.row(i).transpose()),
        }
    }

    fn panel_count(&self) -> usize {
        self.counts.len()
    }

    fn full(&self, p: usize) -> impl Iterator<Item = Node> + '_ {
        self.rules[self.counts[p]]
            .mapped(self.panels[p], self.panels[p + 1])
            .map(|(t, w)| self.node(t, w))
    }

    /// Nodes on `[start of panel p, upper]`, fewer for a shorter stretch.
    fn partial(&self, p: usize, upper: f64) -> Vec<Node> {
        let (a, b) = (self.panels[p], self.panels[p + 1]);
        let m = ((self.counts[p] as f64 * (upper - a) / (b - a)).ceil() as usize).max(2);
        self.rules[m].mapped(a, upper).map(|(t, w)| self.node(t, w)).collect()
    }

    /// Nodes of the composite rule on `[0, upper]`.
    #[cfg(test)]
    fn nodes(&self, upper: f64) -> Vec<Node> {
        let mut out = Vec::new();
        for (k, w) in self.panels.windows(2).enumerate() {
            if w[0] >= upper {
                break;
            }
            let (a, b) = (w[0], w[1].min(upper));
            let m = if b < w[1] {
                ((self.counts[k] as f64 * (b - a) / (w[1] - w[0])).ceil() as usize).max(2)
            } else {
                self.counts[k]
            };
            out.extend(self.rules[m].mapped(a, b).map(|(t, wt)| self.node(t, wt)));
        }
        out
    }
}

struct Correlator {
    kernels: [Option<Kernel>; 3],
}

impl Correlator {
    /// `M(a, b)_xy = ⟨h_x(t_a) h_y(t_b)⟩ = Σ_i C_i(t_a − t_b) r_i(t_a)_x r_i(t_b)_y`.
    fn m(&self, a: &Node, b: &Node) -> Matrix3<f64> {
        let mut out = Matrix3::zeros();
        for (i, k) in self.kernels.iter().enumerate() {
            if let Some(k) = k {
                out += a.rows[i] * b.rows[i].transpose() * k.eval(a.t - b.t);
            }
        }
        out
    }
}

fn frob(a: &Matrix3<f64>, b: &Matrix3<f64>) -> f64 {
    a.component_mul(b).sum()
}

fn axial(m: &Matrix3<f64>) -> Vector3<f64> {
    Vector3::new(m[(1, 2)] - m[(2, 1)], m[(2, 0)] - m[(0, 2)], m[(0, 1)] - m[(1, 0)])
}

fn trace_product(a: &Matrix3<f64>, b: &Matrix3<f64>) -> f64 {
    frob(a, &b.transpose())
}

fn sum_matrices(parts: &[Matrix3<f64>]) -> Matrix3<f64> {
    Matrix3::from_fn(|r, c| pairwise_sum(&parts.iter().map(|m| m[(r, c)]).collect::<Vec<_>>()))
}

// Every term reduces to a double sum. The connected part of ⟨a₂²⟩ is
// ½∬[tr M₁₃ tr K₁₃ − tr(M₁₃K₁₃)] with K(x, y) = ∬ sgn(x − s) sgn(y − u) M(s, u),
// a combination of the corner integrals P(x, y) = ∫₀ˣ∫₀ʸ M. In ⟨a₁·a₃⟩ one
// time is always paired with the free t₀, so it integrates out through the
// cumulative CN(t) = ∫₀ᵗ N.
fn higher_order_at(seq: &ControlSequence, corr: &Correlator, nodes: usize, xi: f64) -> HigherOrder {
    let grid = TimeGrid::new(seq, nodes);
    let tau = seq.total_time();
    let np = grid.panel_count();
    let mut outer = Vec::new();
    let mut panel_of = Vec::new();
    let mut start = vec![0];
    for p in 0..np {
        outer.extend(grid.full(p));
        panel_of.resize(outer.len(), p);
        start.push(outer.len());
    }
    let n = outer.len();
    // the stretch of [0, t_k] inside t_k's own panel
    let partial: Vec<Vec<Node>> = (0..n)
        .into_par_iter()
        .map(|k| grid.partial(panel_of[k], outer[k].t))
        .collect();

    // N(t) = ∫dt₀ M(t₀, t), resolved on a finer fixed grid
    let tc = corr_time(corr, tau);
    let fine_panels = segment_panels(seq, (0.5 * tc).min(tau / 16.0));
    let rule = GlRule::new(8);
    let fine: Vec<Node> = fine_panels
        .windows(2)
        .flat_map(|w| {
            rule.mapped(w[0], w[1])
                .map(|(t, wt)| grid.node(t, wt))
                .collect::<Vec<_>>()
        })
        .collect();
    let n_of = |b: &Node| -> Matrix3<f64> {
        let mut acc = Matrix3::zeros();
        for a in &fine {
            acc += corr.m(a, b) * a.w;
        }
        acc
    };
    let mut cn_start = vec![Matrix3::zeros(); np + 1];
    let n_full: Vec<Matrix3<f64>> = outer.par_iter().map(|b| n_of(b) * b.w).collect();
    for p in 0..np {
        cn_start[p + 1] = cn_start[p] + sum_matrices(&n_full[start[p]..start[p + 1]]);
    }
    let cn = |p: usize, t: f64| -> Matrix3<f64> {
        let parts: Vec<Matrix3<f64>> = grid.partial(p, t).iter().map(|u| n_of(u) * u.w).collect();
        cn_start[p] + sum_matrices(&parts)
    };
    let cn_outer: Vec<Matrix3<f64>> = (0..n)
        .into_par_iter()
        .map(|k| {
            let parts: Vec<Matrix3<f64>> = partial[k].iter().map(|u| n_of(u) * u.w).collect();
            cn_start[panel_of[k]] + sum_matrices(&parts)
        })
        .collect();
    let cn_total = cn_start[np];

    // ordered pairs t_a > t_b: the mean ⟨a₂⟩ and all of ⟨a₁·a₃⟩
    let ordered: Vec<(Vector3<f64>, f64)> = (0..n)
        .into_par_iter()
        .map(|k| {
            let a = &outer[k];
            let p = panel_of[k];
            let above = cn_total - cn_outer[k];
            let mut v = Vector3::zeros();
            let mut acc = 0.0;
            let mut visit = |b: &Node, cn_b: Matrix3<f64>| {
                let m = corr.m(a, b);
                let mt = m.transpose();
                let w = a.w * b.w;
                let mid = cn_outer[k] - cn_b;
                // the remaining time between, above or below the pair
                let between = 2.0 * mid.trace() * m.trace() - frob(&mid, &mt) - frob(&mid, &m);
                let later = 2.0 * frob(&above, &m) - frob(&above, &mt) - above.trace() * m.trace();
                let earlier = 2.0 * frob(&cn_b, &mt) - cn_b.trace() * m.trace() - frob(&cn_b, &m);
                v += axial(&m) * w;
                acc += w * (between + later + earlier);
            };
            for l in 0..start[p] {
                visit(&outer[l], cn_outer[l]);
            }
            for b in &partial[k] {
                visit(b, cn(p, b.t));
            }
            (v, acc)
        })
        .collect();
    let v = Vector3::from_fn(|i, _| pairwise_sum(&ordered.iter().map(|(v, _)| v[i]).collect::<Vec<_>>()));
    let a1_a3 = 2.0 / 3.0 * pairwise_sum(&ordered.iter().map(|(_, s)| *s).collect::<Vec<_>>());

    // P(x, y) from whole-panel blocks, partial strips and partial corners
    let blocks: Vec<Vec<Matrix3<f64>>> = (0..np)
        .into_par_iter()
        .map(|p| {
            let mut row = vec![Matrix3::zeros(); np];
            for a in &outer[start[p]..start[p + 1]] {
                for (l, b) in outer.iter().enumerate() {
                    row[panel_of[l]] += corr.m(a, b) * (a.w * b.w);
                }
            }
            row
        })
        .collect();
    let mut corner = vec![vec![Matrix3::zeros(); np + 1]; np + 1];
    for p in 0..np {
        for q in 0..np {
            corner[p + 1][q + 1] = corner[p][q + 1] + corner[p + 1][q] - corner[p][q] + blocks[p][q];
        }
    }
    let strips: Vec<Vec<Matrix3<f64>>> = (0..n)
        .into_par_iter()
        .map(|k| {
            let mut row = vec![Matrix3::zeros(); np + 1];
            for u in &partial[k] {
                for (l, b) in outer.iter().enumerate() {
                    row[panel_of[l] + 1] += corr.m(u, b) * (u.w * b.w);
                }
            }
            for q in 0..np {
                row[q + 1] = row[q + 1] + row[q];
            }
            row
        })
        .collect();
    let to_end: Vec<Matrix3<f64>> = (0..n).map(|k| corner[panel_of[k]][np] + strips[k][np]).collect();
    let whole = corner[np][np];
    let connected: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|k| {
            let (a, p) = (&outer[k], panel_of[k]);
            let mut acc = 0.0;
            for (l, b) in outer.iter().enumerate() {
                let q = panel_of[l];
                let mut p_kl = corner[p][q] + strips[k][q] + strips[l][p].transpose();
                for u in &partial[k] {
                    for s in &partial[l] {
                        p_kl += corr.m(u, s) * (u.w * s.w);
                    }
                }
                let kk = 4.0 * p_kl - 2.0 * to_end[k] - 2.0 * to_end[l].transpose() + whole;
                let m = corr.m(a, b);
                acc += a.w * b.w * (m.trace() * kk.trace() - trace_product(&m, &kk));
            }
            acc
        })
        .collect();
    let a2_sq = v.norm_squared() + 0.5 * pairwise_sum(&connected);

    // ⟨|a₁|⁴⟩ = (tr G)² + 2‖G‖², G = ∫∫M
    let g = cn_total;
    let a1_fourth = g.trace().powi(2) + 2.0 * g.norm_squared();

    HigherOrder::new(a2_sq, a1_a3, a1_fourth, xi)
}

fn corr_time(corr: &Correlator, tau: f64) -> f64 {
    let mut tc = tau;
    for k in corr.kernels.iter().flatten() {
        if let Kernel::Gaussian { k, .. } = k {
            tc = tc.min((0.5 / k).sqrt());
        }
    }
    tc
}

/// `⟨a₂²⟩`, `⟨a₁·a₃⟩` and `⟨|a₁|⁴⟩` for independent zero-mean Gaussian axes.
pub fn higher_order_terms(seq: &ControlSequence, noise: &NoiseSpectrum, grid: HigherOrderGrid) -> Result<HigherOrder> {
    let tau = seq.total_time();
    let xi = smallness_xi(noise, tau);
    if noise.is_zero() || tau == 0.0 {
        return Ok(HigherOrder::new(0.0, 0.0, 0.0, xi));
    }
    if grid.nodes < 2 {
        return Err(Error::Refinement(format!("grid of {} nodes is too coarse", grid.nodes)));
    }
    let mut kernels = [None, None, None];
    for (i, spec) in noise.active() {
        kernels[i] = Some(Kernel::new(spec, tau)?);
    }
    let corr = Correlator { kernels };
    let fine = higher_order_at(seq, &corr, grid.nodes, xi);
    if let Some(check) = grid.check_nodes {
        let coarse = higher_order_at(seq, &corr, check, xi);
        let floor = 1e-3 * xi.powi(4);
        for (name, f, c) in [
            ("<a2^2>", fine.a2_sq, coarse.a2_sq),
            ("<a1.a3>", fine.a1_a3, coarse.a1_a3),
            ("<|a1|^4>", fine.a1_fourth, coarse.a1_fourth),
        ] {
            let d = (f - c).abs();
            if d > 0.2 * f.abs() && d > floor {
                return Err(Error::Refinement(format!(
                    "{name} changes from {c:e} to {f:e} between {check} and {} nodes",
                    grid.nodes
                )));
            }
        }
    }
    Ok(fine)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FidelityOptions {
    pub method: Method,
    pub higher_order: Option<HigherOrderGrid>,
    pub confidence: f64,
}

impl Default for FidelityOptions {
    fn default() -> Self {
        FidelityOptions {
            method: Method::Frequency,
            higher_order: None,
            confidence: DEFAULT_CONFIDENCE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FidelityReport {
    /// Total leading-order overlap; the dephasing `χ` when only `S_z` is present.
    pub chi: f64,
    /// `½(1 + e^{−χ})`.
    pub f_av: f64,
    pub first_order: FirstOrder,
    /// `⟨a₁²⟩`, the leading term of `1 − F_av`.
    pub infidelity_first_order: f64,
    pub xi_sq: f64,
    pub valid: bool,
    pub convergence: ConvergenceCheck,
    pub higher_order: Option<HigherOrder>,
    /// `1 − ⟨a₁²⟩ − correction` when the fourth-order terms were computed.
    pub f_series: Option<f64>,
    pub method: Method,
    pub convention: String,
}

/// Full report for a control sequence; `spectral` supplies the frequency-domain
/// matrix (closed form or assembled) and `seq` the time-domain description.
pub fn evaluate(
    spectral: &dyn SpectralControlMatrix,
    seq: Option<&ControlSequence>,
    noise: &NoiseSpectrum,
    opts: &FidelityOptions,
) -> Result<FidelityReport> {
    let tau = spectral.total_time();
    let resolved =
        || seq.ok_or_else(|| Error::InvalidSpec("time-domain evaluation needs a piecewise-constant sequence".into()));
    let first = match opts.method {
        Method::Frequency => universal_first_order(spectral, noise)?,
        Method::TimeDomain => a1_time_domain(resolved()?, noise)?,
    };
    let xi = smallness_xi(noise, tau);
    let higher = opts
        .higher_order
        .map(|g| higher_order_terms(resolved()?, noise, g))
        .transpose()?;
    Ok(FidelityReport {
        chi: first.total,
        f_av: fidelity_first_order(first.total),
        first_order: first,
        infidelity_first_order: first.total,
        xi_sq: xi * xi,
        valid: xi * xi < VALIDITY_THRESHOLD,
        convergence: magnus_convergence_check(noise, tau, opts.confidence),
        f_series: higher.map(|h| 1.0 - first.total - h.correction),
        higher_order: higher,
        method: opts.method,
        convention: CONVENTION_NOTE.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filter::{Precision, PulseFilter, PulseKind};
    use crate::noise::Axis;
    use crate::sequence::ControlSegment;

    fn gauss(amp: f64, sigma: f64) -> AxisSpectrum {
        AxisSpectrum::gaussian(amp, sigma).unwrap()
    }

    // direct quadruple and triple sums over nested rules
    fn brute_higher_order(seq: &ControlSequence, corr: &Correlator, nodes: usize, xi: f64) -> HigherOrder {
        let grid = TimeGrid::new(seq, nodes);
        let tau = seq.total_time();
        let outer = grid.nodes(tau);

        // ⟨a₂²⟩ over ordered pairs t₁ > t₂
        let pairs: Vec<(Node, Node)> = outer
            .iter()
            .flat_map(|a| {
                grid.nodes(a.t)
                    .into_iter()
                    .map(|b| {
                        (
                            Node {
                                t: a.t,
                                w: a.w,
                                rows: a.rows,
                            },
                            b,
                        )
                    })
                    .collect::<Vec<_>>()
            })
            .collect();
        let v_parts: Vec<Vector3<f64>> = pairs.iter().map(|(a, b)| axial(&corr.m(a, b)) * (a.w * b.w)).collect();
        let v = Vector3::from_fn(|k, _| pairwise_sum(&v_parts.iter().map(|x| x[k]).collect::<Vec<_>>()));
        let chunks: Vec<f64> = pairs
            .par_chunks(8)
            .map(|chunk| {
                let mut acc = 0.0;
                for (n1, n2) in chunk {
                    let wp = n1.w * n2.w;
                    for (n3, n4) in &pairs {
                        let m13 = corr.m(n1, n3);
                        let m24 = corr.m(n2, n4);
                        let m14 = corr.m(n1, n4);
                        let m23 = corr.m(n2, n3);
                        let f = m13.trace() * m24.trace() - (m13 * m24).trace() + (m14 * m23).trace()
                            - m14.trace() * m23.trace();
                        acc += wp * n3.w * n4.w * f;
                    }
                }
                acc
            })
            .collect();
        let a2_sq = v.norm_squared() + pairwise_sum(&chunks);

        // N(t) = ∫dt₀ M(t₀, t), resolved on a finer fixed grid
        let tc = corr_time(corr, tau);
        let fine_panels = segment_panels(seq, (0.5 * tc).min(tau / 16.0));
        let rule = GlRule::new(8);
        let fine: Vec<Node> = fine_panels
            .windows(2)
            .flat_map(|w| {
                rule.mapped(w[0], w[1])
                    .map(|(t, wt)| grid.node(t, wt))
                    .collect::<Vec<_>>()
            })
            .collect();
        let n_of = |b: &Node| -> Matrix3<f64> {
            let mut acc = Matrix3::zeros();
            for a in &fine {
                acc += corr.m(a, b) * a.w;
            }
            acc
        };

        let n_at = |b: &Node| n_of(b);

        // ⟨a₁·a₃⟩ over the simplex t₁ > t₂ > t₃ with t₀ integrated out
        let simplex: Vec<f64> = outer
            .par_iter()
            .map(|n1| {
                let n1n = n_at(n1);
                let mut acc = 0.0;
                for n2 in grid.nodes(n1.t) {
                    let n2n = n_at(&n2);
                    let m12 = corr.m(n1, &n2);
                    for n3 in grid.nodes(n2.t) {
                        let n3n = n_at(&n3);
                        let m13 = corr.m(n1, &n3);
                        let m23 = corr.m(&n2, &n3);
                        let e0213 = n2n.trace() * m13.trace() + frob(&n1n, &m23) + frob(&n3n, &m12.transpose());
                        let e0312 =
                            n3n.trace() * m12.trace() + frob(&n1n, &m23.transpose()) + frob(&n2n, &m13.transpose());
                        let e0123 = n1n.trace() * m23.trace() + frob(&n2n, &m13) + frob(&n3n, &m12);
                        acc += n1.w * n2.w * n3.w * (2.0 * e0213 - e0312 - e0123);
                    }
                }
                acc
            })
            .collect();
        let a1_a3 = 2.0 / 3.0 * pairwise_sum(&simplex);

        // ⟨|a₁|⁴⟩ = (tr G)² + 2‖G‖², G = ∫∫M
        let g_parts: Vec<Matrix3<f64>> = outer.iter().map(|n| n_at(n) * n.w).collect();
        let g = Matrix3::from_fn(|r, c| pairwise_sum(&g_parts.iter().map(|m| m[(r, c)]).collect::<Vec<_>>()));
        let a1_fourth = g.trace().powi(2) + 2.0 * g.norm_squared();

        HigherOrder::new(a2_sq, a1_a3, a1_fourth, xi)
    }

    #[test]
    fn reduced_sums_match_direct_quadrature() {
        let seqs = [
            ControlSequence::new(vec![
                ControlSegment::planar(0.3, 2.0, 0.4).unwrap(),
                ControlSegment::free(0.5).unwrap(),
                ControlSegment::planar(0.4, 3.0, 1.9).unwrap(),
            ]),
            ControlSequence::new(vec![ControlSegment::planar(1.0, PI, 0.0).unwrap()]),
        ];
        let noises = [
            NoiseSpectrum::single(Axis::Z, gauss(0.6, 2.0)),
            NoiseSpectrum {
                axes: [Some(gauss(0.3, 0.7)), Some(gauss(0.5, 4.0)), Some(gauss(0.4, 1.5))],
            },
        ];
        for seq in &seqs {
            for noise in &noises {
                let tau = seq.total_time();
                let mut kernels = [None, None, None];
                for (i, spec) in noise.active() {
                    kernels[i] = Some(Kernel::new(spec, tau).unwrap());
                }
                let corr = Correlator { kernels };
                let xi = smallness_xi(noise, tau);
                let fast = higher_order_at(seq, &corr, 24, xi);
                let slow = brute_higher_order(seq, &corr, 24, xi);
                // ⟨a₁·a₃⟩ evaluates the inner integrals on different rules
                for (f, s, tol) in [
                    (fast.a2_sq, slow.a2_sq, 1e-10),
                    (fast.a1_a3, slow.a1_a3, 2e-6),
                    (fast.a1_fourth, slow.a1_fourth, 1e-12),
                ] {
                    assert!((f - s).abs() <= tol * s.abs(), "{f:e} vs {s:e}");
                }
            }
        }
    }

    #[test]
    fn first_order_fidelity_values() {
        assert_eq!(fidelity_first_order(0.0), 1.0);
        assert!((fidelity_first_order(1.0) - 0.5 * (1.0 + (-1.0f64).exp())).abs() < 1e-16);
        assert!((fidelity_first_order(1e3) - 0.5).abs() < 1e-16);
    }

    #[test]
    fn free_evolution_quasi_static_limit() {
        // τ ≪ τ_c: χ → ⟨β²⟩τ²
        let seq = ControlSequence::new(vec![ControlSegment::free(0.01).unwrap()]);
        let s = gauss(0.5, 1.0);
        let chi = chi_overlap(&seq, &s).unwrap();
        let want = 0.0625 * 1e-4;
        assert!((chi / want - 1.0).abs() < 1e-5);
    }

    #[test]
    fn zero_noise() {
        let seq = ControlSequence::new(vec![ControlSegment::x_rotation(1.0, PI).unwrap()]);
        let r = evaluate(
            &seq,
            Some(&seq),
            &NoiseSpectrum::none(),
            &FidelityOptions {
                higher_order: Some(HigherOrderGrid::default()),
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(r.chi, 0.0);
        assert_eq!(r.f_av, 1.0);
        assert_eq!(r.f_series, Some(1.0));
        assert!(r.valid);
    }

    #[test]
    fn isotropic_free_evolution_triples() {
        let seq = ControlSequence::new(vec![ControlSegment::free(2.0).unwrap()]);
        let s = gauss(0.3, 0.7);
        let one = universal_first_order(&seq, &NoiseSpectrum::single(Axis::Z, s.clone())).unwrap();
        let all = universal_first_order(&seq, &NoiseSpectrum::isotropic(s)).unwrap();
        assert!((all.total / one.total - 3.0).abs() < 1e-12);
        assert_eq!(one.total, chi_overlap(&seq, &gauss(0.3, 0.7)).unwrap());
    }

    #[test]
    fn x_noise_commutes_with_x_pulse() {
        let p = PulseFilter::new(PulseKind::PrimitivePi, 0.8, Precision::Double).unwrap();
        for w in [0.3, 2.0, 9.0] {
            let f = crate::filter::first_order_filter(&p.matrix(w), 0);
            assert!((f - 4.0 * (w * 0.4f64).sin().powi(2)).abs() < 1e-13);
        }
    }

    #[test]
    fn time_and_frequency_agree() {
        let seq = ControlSequence::new(vec![
            ControlSegment::free(0.4).unwrap(),
            ControlSegment::x_rotation(0.3, PI).unwrap(),
            ControlSegment::planar(0.5, 2.0, 0.7).unwrap(),
        ]);
        let noise = NoiseSpectrum::single(Axis::Z, gauss(0.4, 1.3)).with(Axis::X, gauss(0.2, 3.0));
        let f = universal_first_order(&seq, &noise).unwrap();
        let t = a1_time_domain(&seq, &noise).unwrap();
        for i in [0, 2] {
            assert!((f.per_axis[i] / t.per_axis[i] - 1.0).abs() < 1e-7, "axis {i}");
        }
    }

    #[test]
    fn free_evolution_has_no_second_order_term() {
        let seq = ControlSequence::new(vec![ControlSegment::free(1.0).unwrap()]);
        let noise = NoiseSpectrum::single(Axis::Z, gauss(0.2, 0.5));
        let h = higher_order_terms(&seq, &noise, HigherOrderGrid::default()).unwrap();
        assert!(h.a2_sq.abs() < 1e-18);
        assert!(h.within_bounds());
        // commuting case: ⟨a₁⁴⟩ = 3⟨a₁²⟩², ⟨a₁·a₃⟩ = 0
        let a1 = a1_time_domain(&seq, &noise).unwrap().total;
        assert!((h.a1_fourth / (3.0 * a1 * a1) - 1.0).abs() < 1e-8);
        assert!(h.a1_a3.abs() < 1e-18);
    }
}
