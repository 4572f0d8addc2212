//! Quadrature and summation helpers.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::num::NonZeroUsize;

use gauss_quad::legendre::GaussLegendre;

use crate::error::{Error, Result};

#[allow(clippy::excessive_precision)]
const XGK: [f64; 11] = [
    0.995_657_163_025_808_080_735_527_280_689_003,
    0.973_906_528_517_171_720_077_964_012_084_452,
    0.930_157_491_355_708_226_001_207_180_059_508,
    0.865_063_366_688_984_510_732_096_688_423_493,
    0.780_817_726_586_416_897_063_717_578_345_042,
    0.679_409_568_299_024_406_234_327_365_114_874,
    0.562_757_134_668_604_683_339_000_099_272_694,
    0.433_395_394_129_247_190_799_265_943_165_784,
    0.294_392_862_701_460_198_131_126_603_103_866,
    0.148_874_338_981_631_210_884_826_001_129_720,
    0.0,
];
#[allow(clippy::excessive_precision)]
const WGK: [f64; 11] = [
    0.011_694_638_867_371_874_278_064_396_062_192,
    0.032_558_162_307_964_727_478_818_972_459_390,
    0.054_755_896_574_351_996_031_381_300_244_580,
    0.075_039_674_810_919_952_767_043_140_916_190,
    0.093_125_454_583_697_605_535_065_465_083_366,
    0.109_387_158_802_297_641_899_210_590_325_805,
    0.123_491_976_262_065_851_077_282_490_426_020,
    0.134_709_217_311_473_325_928_054_001_771_707,
    0.142_775_938_577_060_080_797_094_273_138_717,
    0.147_739_104_901_338_491_374_841_515_972_068,
    0.149_445_554_002_916_905_664_936_468_389_821,
];
// 10-point Gauss weights for XGK[1], XGK[3], ..., XGK[9]
#[allow(clippy::excessive_precision)]
const WG: [f64; 5] = [
    0.066_671_344_308_688_137_593_568_809_893_332,
    0.149_451_349_150_580_593_145_776_339_657_697,
    0.219_086_362_515_982_043_995_534_934_228_163,
    0.269_266_719_309_996_355_091_226_921_569_469,
    0.295_524_224_714_752_870_173_892_994_651_338,
];

/// 21-point Kronrod estimate with the usual QUADPACK error heuristic.
fn gk21<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let mut fv = [0.0; 21];
    fv[20] = f(c);
    let mut k = WGK[10] * fv[20];
    let mut g = 0.0;
    let mut kabs = WGK[10] * fv[20].abs();
    for j in 0..10 {
        let x = h * XGK[j];
        let (f1, f2) = (f(c - x), f(c + x));
        fv[2 * j] = f1;
        fv[2 * j + 1] = f2;
        k += WGK[j] * (f1 + f2);
        kabs += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            g += WG[j / 2] * (f1 + f2);
        }
    }
    let mean = 0.5 * k;
    let mut asc = WGK[10] * (fv[20] - mean).abs();
    for j in 0..10 {
        asc += WGK[j] * ((fv[2 * j] - mean).abs() + (fv[2 * j + 1] - mean).abs());
    }
    let (asc, kabs) = (asc * h.abs(), kabs * h.abs());
    let mut err = ((k - g) * h).abs();
    if asc != 0.0 && err != 0.0 {
        err = asc * (200.0 * err / asc).powf(1.5).min(1.0);
    }
    if kabs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        err = err.max(50.0 * f64::EPSILON * kabs);
    }
    (k * h, err)
}

/// Result of an adaptive integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadResult {
    pub value: f64,
    pub error: f64,
    pub intervals: usize,
}

struct Piece {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Piece {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Piece {}
impl PartialOrd for Piece {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Piece {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

/// Globally adaptive Gauss–Kronrod integration with user breakpoints.
#[derive(Debug, Clone, Copy)]
pub struct Adaptive {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_intervals: usize,
}

impl Default for Adaptive {
    fn default() -> Self {
        Adaptive {
            rel_tol: 1e-10,
            abs_tol: 0.0,
            max_intervals: 20_000,
        }
    }
}

impl Adaptive {
    pub fn new(rel_tol: f64, abs_tol: f64) -> Self {
        Adaptive {
            rel_tol,
            abs_tol,
            ..Default::default()
        }
    }

    /// Integrates `f` over `[points[0], points[last]]`, starting from the panels
    /// delimited by the sorted breakpoints.
    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F, points: &[f64]) -> Result<QuadResult> {
        let mut heap = BinaryHeap::new();
        let mut done = Vec::new();
        for w in points.windows(2) {
            let (a, b) = (w[0], w[1]);
            if b <= a {
                continue;
            }
            let (value, error) = gk21(&f, a, b);
            heap.push(Piece { a, b, value, error });
        }
        let span = points.last().copied().unwrap_or(0.0) - points.first().copied().unwrap_or(0.0);
        let mut run_value: f64 = heap.iter().map(|p: &Piece| p.value).sum();
        let mut run_error: f64 = heap.iter().map(|p: &Piece| p.error).sum();
        loop {
            if !run_value.is_finite() || !run_error.is_finite() {
                return Err(Error::Quadrature("non-finite integrand".into()));
            }
            let intervals = heap.len() + done.len();
            if run_error <= 2.0 * self.abs_tol.max(self.rel_tol * run_value.abs()) || heap.is_empty() {
                let value = sum_pieces(heap.iter().chain(done.iter()), |p| p.value);
                let error = sum_pieces(heap.iter().chain(done.iter()), |p| p.error);
                (run_value, run_error) = (value, error);
                if error <= self.abs_tol.max(self.rel_tol * value.abs()) || heap.is_empty() {
                    return Ok(QuadResult {
                        value,
                        error,
                        intervals,
                    });
                }
            }
            if intervals >= self.max_intervals {
                return Err(Error::Quadrature(format!(
                    "{} intervals exhausted; estimate {run_value:e} ± {run_error:e}",
                    self.max_intervals
                )));
            }
            let worst = heap.pop().expect("non-empty heap");
            if worst.b - worst.a <= 1e-13 * span.abs().max(f64::MIN_POSITIVE) {
                done.push(worst);
                let stuck: f64 = done.iter().map(|p| p.error).sum();
                if stuck > self.abs_tol.max(self.rel_tol * run_value.abs()) {
                    return Err(Error::Quadrature(format!(
                        "unresolvable feature near {:e}; estimate {run_value:e} ± {run_error:e}",
                        done.last().unwrap().a
                    )));
                }
                continue;
            }
            let m = 0.5 * (worst.a + worst.b);
            let (v1, e1) = gk21(&f, worst.a, m);
            let (v2, e2) = gk21(&f, m, worst.b);
            run_value += v1 + v2 - worst.value;
            run_error += e1 + e2 - worst.error;
            heap.push(Piece {
                a: worst.a,
                b: m,
                value: v1,
                error: e1,
            });
            heap.push(Piece {
                a: m,
                b: worst.b,
                value: v2,
                error: e2,
            });
        }
    }
}

fn sum_pieces<'a, I, G>(it: I, g: G) -> f64
where
    I: Iterator<Item = &'a Piece>,
    G: Fn(&Piece) -> f64,
{
    let mut s = Neumaier::default();
    for p in it {
        s.add(g(p));
    }
    s.sum()
}

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct Neumaier {
    sum: f64,
    comp: f64,
}

impl Neumaier {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn sum(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Pairwise (cascade) sum in index order, independent of any thread partitioning.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    match xs.len() {
        0 => 0.0,
        1 => xs[0],
        n if n <= 8 => xs.iter().sum(),
        n => {
            let (l, r) = xs.split_at(n / 2);
            pairwise_sum(l) + pairwise_sum(r)
        }
    }
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct GlRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GlRule {
    pub fn new(n: usize) -> Self {
        let rule = GaussLegendre::new(NonZeroUsize::new(n.max(1)).unwrap());
        let (nodes, weights) = rule.iter().map(|(x, w)| (*x, *w)).unzip();
        GlRule { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Nodes and weights mapped onto `[a, b]`.
    pub fn mapped(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let c = 0.5 * (a + b);
        let h = 0.5 * (b - a);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(move |(x, w)| (c + h * x, h * w))
    }

    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        self.mapped(a, b).map(|(x, w)| w * f(x)).sum()
    }
}

/// Composite Gauss–Legendre over consecutive panels.
pub fn composite_nodes(panels: &[f64], rule: &GlRule) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(panels.len().saturating_sub(1) * rule.len());
    for w in panels.windows(2) {
        if w[1] > w[0] {
            out.extend(rule.mapped(w[0], w[1]));
        }
    }
    out
}

/// Sorted, de-duplicated breakpoints clipped to `[a, b]` (endpoints included).
pub fn breakpoints(a: f64, b: f64, interior: impl IntoIterator<Item = f64>) -> Vec<f64> {
    let tol = 1e-12 * (b - a).abs().max(f64::MIN_POSITIVE);
    let mut pts: Vec<f64> = interior
        .into_iter()
        .filter(|x| x.is_finite() && *x > a + tol && *x < b - tol)
        .collect();
    pts.push(a);
    pts.push(b);
    pts.sort_by(f64::total_cmp);
    pts.dedup_by(|x, y| (*x - *y).abs() <= tol);
    pts
}
