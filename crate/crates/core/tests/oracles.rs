//! Independent reference computations checked against the library.

use std::f64::consts::PI;

use nalgebra::Vector3;
use num_complex::Complex64;
use qfilter_core::fidelity::{a1_time_domain, higher_order_terms, universal_first_order, HigherOrderGrid};
use qfilter_core::filter::{bang_bang_control_vector, DdFilter, DdSpec, Precision, PulseFilter, PulseKind};
use qfilter_core::montecarlo::{evolve, Realization, Trajectory};
use qfilter_core::noise::{Axis, AxisSpectrum, NoiseSpectrum};
use qfilter_core::quad::GlRule;
use qfilter_core::sequence::{ControlSegment, ControlSequence, SpectralControlMatrix};
use qfilter_core::su2::Su2;

/// `−iω ∫ e^{iωt} R(t) dt` by brute-force Gauss-Legendre over fine panels.
fn brute_spectral(seq: &ControlSequence, omega: f64, panels: usize) -> [[Complex64; 3]; 3] {
    let rule = GlRule::new(12);
    let tau = seq.total_time();
    let mut out = [[Complex64::new(0.0, 0.0); 3]; 3];
    let mut edges: Vec<f64> = seq.boundaries().to_vec();
    edges.dedup();
    for pair in edges.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        let m = ((panels as f64 * (b - a) / tau).ceil() as usize).max(4);
        let h = (b - a) / m as f64;
        for p in 0..m {
            let (lo, hi) = (a + p as f64 * h, a + (p + 1) as f64 * h);
            for (t, w) in rule.mapped(lo, hi) {
                let r = seq.control_matrix_time(t).unwrap();
                let e = Complex64::from_polar(w, omega * t) * Complex64::new(0.0, -omega);
                for i in 0..3 {
                    for j in 0..3 {
                        out[i][j] += e * r[(i, j)];
                    }
                }
            }
        }
    }
    out
}

fn row_of<S: SpectralControlMatrix + ?Sized>(src: &S, omega: f64, row: usize) -> [Complex64; 3] {
    let m = src.matrix(omega);
    [m[(row, 0)], m[(row, 1)], m[(row, 2)]]
}

#[test]
fn pulse_closed_forms_match_brute_force_integration() {
    for kind in [PulseKind::PrimitivePi, PulseKind::DcgNot] {
        let f = PulseFilter::new(kind, 0.7, Precision::Double).unwrap();
        let seq = f.to_sequence().unwrap();
        for w in [0.05, 1.3, PI / 0.7, 2.0 * PI / 0.7, 9.0, 37.0] {
            let brute = brute_spectral(&seq, w, 400);
            let closed = row_of(&f, w, 2);
            for j in 0..3 {
                assert!(
                    (closed[j] - brute[2][j]).norm() < 1e-10,
                    "{kind:?} ω={w} j={j}: {} vs {}",
                    closed[j],
                    brute[2][j]
                );
            }
        }
    }
}

#[test]
fn primitive_pi_row_at_twice_the_rate() {
    let tp = 1.0;
    let f = PulseFilter::new(PulseKind::PrimitivePi, tp, Precision::Double).unwrap();
    let r = row_of(&f, 2.0 * PI / tp, 2);
    assert!((r[2].norm() - 8.0 / 3.0).abs() < 1e-12);
    assert!((r[1].norm() - 4.0 / 3.0).abs() < 1e-12);
    assert!(r[0].norm() < 1e-12);
}

#[test]
fn finite_pulse_dd_matches_brute_force_integration() {
    for kind in [PulseKind::PrimitivePi, PulseKind::DcgNot] {
        let spec = DdSpec::udd(4, 1.0, kind, 0.04).unwrap();
        let seq = spec.to_sequence().unwrap();
        let f = DdFilter::new(spec, Precision::Double);
        for w in [0.3, 7.0, 25.0, 160.0] {
            let brute = brute_spectral(&seq, w, 4000);
            let closed = row_of(&f, w, 2);
            for j in 0..3 {
                assert!(
                    (closed[j] - brute[2][j]).norm() < 1e-9,
                    "{kind:?} ω={w}: {} vs {}",
                    closed[j],
                    brute[2][j]
                );
            }
        }
    }
}

#[test]
fn bang_bang_matches_switching_function_transform() {
    let locs = [0.1, 0.35, 0.5, 0.8];
    let rule = GlRule::new(16);
    for w in [0.2, 3.0, 19.0, 55.0] {
        let mut acc = Complex64::new(0.0, 0.0);
        let mut edges = vec![0.0];
        edges.extend_from_slice(&locs);
        edges.push(1.0);
        for (k, pair) in edges.windows(2).enumerate() {
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            for p in 0..50 {
                let h = (pair[1] - pair[0]) / 50.0;
                for (t, wt) in rule.mapped(pair[0] + p as f64 * h, pair[0] + (p + 1) as f64 * h) {
                    acc += Complex64::from_polar(sign * wt, w * t);
                }
            }
        }
        let brute = (acc * w).norm_sqr();
        let closed = bang_bang_control_vector(&locs, 1.0, w).norm_sqr();
        assert!(
            (brute - closed).abs() < 1e-10 * brute.max(1.0),
            "ω={w}: {brute} vs {closed}"
        );
    }
}

fn exact_static_fidelity(seq: &ControlSequence, beta: Vector3<f64>) -> f64 {
    let mut u = Su2::identity();
    for s in seq.segments() {
        let h = s.hamiltonian() + beta;
        let m = h.norm();
        let step = if m == 0.0 {
            Su2::identity()
        } else {
            Su2::from_axis_angle(2.0 * m * s.duration(), h / m).unwrap()
        };
        u = step * u;
    }
    (seq.target().dagger() * u).trace_fidelity()
}

#[test]
fn higher_order_series_matches_quasi_static_average() {
    let seq = ControlSequence::new(vec![
        ControlSegment::x_rotation(1.0, PI).unwrap(),
        ControlSegment::free(0.5).unwrap(),
        ControlSegment::planar(0.7, 2.0, 1.1).unwrap(),
    ]);
    let amp: f64 = 0.1;
    let var = amp * amp / 4.0;
    let sd = var.sqrt();
    let noise = NoiseSpectrum::single(Axis::Z, AxisSpectrum::gaussian(amp, 1e-5).unwrap());

    // Simpson average over the static field distribution
    let n = 4001;
    let (lo, hi) = (-9.0 * sd, 9.0 * sd);
    let h = (hi - lo) / (n - 1) as f64;
    let mut f = 0.0;
    for k in 0..n {
        let b = lo + k as f64 * h;
        let w = if k == 0 || k == n - 1 {
            1.0
        } else if k % 2 == 1 {
            4.0
        } else {
            2.0
        };
        let p = (-b * b / (2.0 * var)).exp() / (2.0 * PI * var).sqrt();
        f += w * p * exact_static_fidelity(&seq, Vector3::new(0.0, 0.0, b));
    }
    f *= h / 3.0;

    let a1 = a1_time_domain(&seq, &noise).unwrap().total;
    let ho = higher_order_terms(&seq, &noise, HigherOrderGrid::default()).unwrap();
    let resid = 1.0 - f - a1;
    assert!(
        (resid - ho.correction).abs() <= 0.01 * ho.correction.abs(),
        "residual {resid:e} vs series {:e}",
        ho.correction
    );
}

#[test]
fn short_correlation_limit_uses_full_gaussian_integral() {
    let (db, tp) = (0.5, 1.0);
    let tc = 1e-2 * tp;
    let noise = NoiseSpectrum::single(Axis::Z, AxisSpectrum::gaussian(db, 1.0 / tc).unwrap());
    let seq = ControlSequence::new(vec![ControlSegment::x_rotation(tp, PI).unwrap()]);
    let a1 = a1_time_domain(&seq, &noise).unwrap().total;
    let limit = (2.0 * PI).sqrt() * db * db / 4.0 * tc * tp;
    assert!((a1 / limit - 1.0).abs() < 0.01, "{a1} vs {limit}");
}

#[test]
fn synthesized_noise_reproduces_variance_and_correlation() {
    let spec = AxisSpectrum::gaussian(0.8, 2.0).unwrap();
    let noise = NoiseSpectrum::single(Axis::Z, spec.clone());
    let tc = spec.correlation_time();
    let n = 10_000;
    let (mut v0, mut c) = (0.0, 0.0);
    for i in 0..n {
        let r = Realization::draw(&noise, 512, 77, i).unwrap();
        let (b0, b1) = (r.value_at(2, 0.0), r.value_at(2, tc));
        v0 += b0 * b0;
        c += b0 * b1;
    }
    let (v0, c) = (v0 / n as f64, c / n as f64);
    let var = spec.variance();
    let ctc = spec.autocorrelation(tc).unwrap();
    assert!((v0 / var - 1.0).abs() < 0.03, "variance {v0} vs {var}");
    assert!((c / ctc - 1.0).abs() < 0.05, "C(τc) {c} vs {ctc}");
}

#[test]
fn tabulated_gaussian_matches_analytic() {
    let sigma = 1.5;
    let analytic = AxisSpectrum::gaussian(0.6, sigma).unwrap();
    let omega: Vec<f64> = (0..=3000).map(|k| 12.0 * sigma * k as f64 / 3000.0).collect();
    let psd: Vec<f64> = omega.iter().map(|&w| analytic.psd(w)).collect();
    let table = AxisSpectrum::tabulated(omega, psd).unwrap();
    assert!((table.variance() / analytic.variance() - 1.0).abs() < 1e-5);
    for t in [0.0, 0.3, 1.0 / sigma, 2.0] {
        let (a, b) = (analytic.autocorrelation(t).unwrap(), table.autocorrelation(t).unwrap());
        assert!((a - b).abs() < 1e-4 * analytic.variance(), "t={t}: {a} vs {b}");
    }
}

#[test]
fn power_law_first_order_agrees_across_domains() {
    let seq = ControlSequence::new(vec![
        ControlSegment::x_rotation(0.4, PI).unwrap(),
        ControlSegment::free(0.6).unwrap(),
    ]);
    let noise = NoiseSpectrum::single(Axis::Z, AxisSpectrum::power_law(0.2, -0.5, 0.0, 40.0).unwrap());
    let f = universal_first_order(&seq, &noise).unwrap().total;
    let t = a1_time_domain(&seq, &noise).unwrap().total;
    assert!((f / t - 1.0).abs() < 1e-5, "{f} vs {t}");
}

#[test]
fn static_trajectory_evolution_is_exact() {
    let seq = ControlSequence::new(vec![
        ControlSegment::x_rotation(0.5, PI).unwrap(),
        ControlSegment::planar(0.3, 4.0, 0.2).unwrap(),
    ]);
    let beta = Vector3::new(0.3, -0.1, 0.4);
    let tau = seq.total_time();
    let traj = Trajectory::constant(beta, tau, tau / 37.0);
    let f = evolve(&seq, &traj).trace_fidelity();
    assert!((f - exact_static_fidelity(&seq, beta)).abs() < 1e-13);
}
