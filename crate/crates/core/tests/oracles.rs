//! Analytic quantities checked against independently coded numerical oracles.

use ddcrb_core::rsma::{
    complex_gaussian, draw_channel_estimate, lmmse_filters, matched_filter, sinr_common, sinr_private, CMatrix,
    CVector, Precoders, RowFilter, RsmaScenario, RsmaSetup, SinrInputs,
};
use ddcrb_core::validation::{fd_d_nu, fd_d_tau, numeric_fim, run_mc, run_mc_serial, McConfig, FD_NU_STEP_REL, FD_TAU_STEP_REL};
use ddcrb_core::*;
use nalgebra::Matrix2;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Instance {
    grid: OtfsGrid,
    x: TfSymbols,
    p: EchoParams,
}

fn instances(count: usize, seed: u64) -> Vec<Instance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sizes = [4usize, 8, 16];
    (0..count)
        .map(|_| {
            let m = sizes[rng.random_range(0..3)];
            let n = sizes[rng.random_range(0..3)];
            let grid = OtfsGrid::new(m, n, 15e3, 1.0 / 15e3).unwrap();
            let x = TfSymbols::from_fn(&grid, |_, _| complex_gaussian(&mut rng, 1.0));
            let tau = rng.random_range(10e-6..1e-3);
            let nu = rng.random_range(-5e3..5e3);
            let gain = GainModel::new(complex_gaussian(&mut rng, 1.0), rng.random_range(10e-6..1e-3)).unwrap();
            let beta = complex_gaussian(&mut rng, 1.0);
            let p = EchoParams::new(tau, nu, beta, gain, rng.random_range(0.1..10.0)).unwrap();
            Instance { grid, x, p }
        })
        .collect()
}

fn rel(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}

fn rel_l2(a: &DdVector, b: &DdVector) -> f64 {
    a.sub(b).norm_sqr().sqrt() / b.norm_sqr().sqrt()
}

#[test]
fn analytic_derivatives_match_finite_differences() {
    for inst in instances(20, 11) {
        let b = derivative_bundle(&inst.x, &inst.p, &inst.grid).unwrap();
        let fd_nu = fd_d_nu(&inst.x, &inst.p, &inst.grid, FD_NU_STEP_REL).unwrap();
        let fd_tau = fd_d_tau(&inst.x, &inst.p, &inst.grid, FD_TAU_STEP_REL).unwrap();
        assert!(rel_l2(&fd_nu, &b.d_nu) <= 1e-6);
        assert!(rel_l2(&fd_tau, &b.d_tau) <= 1e-6);
    }
}

#[test]
fn assembled_fim_matches_generic_gaussian_fim() {
    for inst in instances(20, 12) {
        let (x, p, g) = (&inst.x, &inst.p, &inst.grid);
        let fim = fim_assemble(&fim_sums(x, p, g).unwrap(), p, g).unwrap();
        let b = derivative_bundle(x, p, g).unwrap();
        let oracle = numeric_fim(&b.d_tau, &b.d_nu, p.sigma_echo_sq).unwrap();
        assert!(rel(fim.i_tau_tau, oracle.i_tau_tau) <= 1e-12);
        assert!(rel(fim.i_nu_nu, oracle.i_nu_nu) <= 1e-12);
        assert!(rel(fim.i_tau_nu, oracle.i_tau_nu) <= 1e-12);

        let fd = numeric_fim(
            &fd_d_tau(x, p, g, FD_TAU_STEP_REL).unwrap(),
            &fd_d_nu(x, p, g, FD_NU_STEP_REL).unwrap(),
            p.sigma_echo_sq,
        )
        .unwrap();
        assert!(rel(fim.i_tau_tau, fd.i_tau_tau) <= 1e-5);
        assert!(rel(fim.i_nu_nu, fd.i_nu_nu) <= 1e-5);
        assert!(rel(fim.i_tau_nu, fd.i_tau_nu) <= 1e-5);
    }
}

#[test]
fn explicit_crb_matches_matrix_inverse() {
    for inst in instances(20, 13) {
        let r = crb_pipeline(&inst.x, &inst.p, &inst.grid).unwrap();
        let m = Matrix2::new(r.fim.i_tau_tau, r.fim.i_tau_nu, r.fim.i_tau_nu, r.fim.i_nu_nu);
        let inv = m.try_inverse().unwrap();
        assert!(rel(r.crb_tau, inv[(0, 0)]) <= 1e-12);
        assert!(rel(r.crb_nu, inv[(1, 1)]) <= 1e-12);
    }
}

#[test]
fn beta_scaling_scales_fim_by_modulus_squared() {
    let c = Complex64::new(1.3, -0.7);
    for inst in instances(5, 14) {
        let a = crb_pipeline(&inst.x, &inst.p, &inst.grid).unwrap();
        let q = EchoParams {
            beta_t: inst.p.beta_t * c,
            ..inst.p
        };
        let b = crb_pipeline(&inst.x, &q, &inst.grid).unwrap();
        let k = c.norm_sqr();
        assert!(rel(b.fim.i_tau_tau, k * a.fim.i_tau_tau) <= 1e-12);
        assert!(rel(b.fim.i_nu_nu, k * a.fim.i_nu_nu) <= 1e-12);
        assert!(rel(b.fim.i_tau_nu, k * a.fim.i_tau_nu) <= 1e-12);
        assert!(rel(b.crb_tau, a.crb_tau / k) <= 1e-12);
        assert!(rel(b.crb_nu, a.crb_nu / k) <= 1e-12);
    }
}

#[test]
fn uniform_pilot_regression_value() {
    let grid = OtfsGrid::new(8, 8, 15e3, 1.0 / 15e3).unwrap();
    let gain = GainModel::new(Complex64::new(1.0, 0.0), 50e-6).unwrap();
    let p = EchoParams::new(50e-6, 1000.0, Complex64::new(1.0, 0.0), gain, 1.0).unwrap();
    let r = crb_pipeline(&TfSymbols::uniform_unit(&grid), &p, &grid).unwrap();
    assert!(r.crb_tau.is_finite() && r.crb_tau > 0.0);
    assert!(r.crb_nu.is_finite() && r.crb_nu > 0.0);
    // Golden values from the first verified run; an independent numpy
    // brute-force FD FIM gave 9.6596600e-14 s^2 and 4.9405370e3 Hz^2.
    assert!(rel(r.crb_tau, GOLDEN_CRB_TAU) <= 1e-9, "crb_tau = {:e}", r.crb_tau);
    assert!(rel(r.crb_nu, GOLDEN_CRB_NU) <= 1e-9, "crb_nu = {:e}", r.crb_nu);
}

const GOLDEN_CRB_TAU: f64 = 9.65965886204819e-14;
const GOLDEN_CRB_NU: f64 = 4.940536885342497e3;

// --- RSMA -----------------------------------------------------------------

fn dot(w: &[Complex64], v: &[Complex64]) -> Complex64 {
    w.iter().zip(v).map(|(a, b)| a * b).sum()
}

fn mat_vec(h: &CMatrix, p: &CVector) -> Vec<Complex64> {
    (0..h.nrows())
        .map(|r| (0..h.ncols()).map(|c| h[(r, c)] * p[c]).sum())
        .collect()
}

fn to_vec(w: &RowFilter) -> Vec<Complex64> {
    w.iter().copied().collect()
}

/// Straight re-coding of the common and private SINR ratios with plain loops.
#[allow(clippy::too_many_arguments)]
fn scalar_sinrs(w_c: &[Complex64], w_p: &[Complex64], h: &CMatrix, pre: &Precoders, k: usize, theta: f64, sn: f64, se: f64) -> (f64, f64) {
    let mut p_tot = 0.0;
    for v in pre.common().iter().chain(pre.private().iter().flat_map(|p| p.iter())) {
        p_tot += v.re * v.re + v.im * v.im;
    }
    let hc = mat_vec(h, pre.common());
    let hp: Vec<Vec<Complex64>> = pre.private().iter().map(|p| mat_vec(h, p)).collect();
    let norm = |w: &[Complex64]| w.iter().map(|v| v.re * v.re + v.im * v.im).sum::<f64>();

    let num_c = dot(w_c, &hc).norm_sqr();
    let mut den_c = norm(w_c) * (sn + se * p_tot);
    for g in &hp {
        den_c += dot(w_c, g).norm_sqr();
    }

    let num_p = dot(w_p, &hp[k]).norm_sqr();
    let mut den_p = theta * dot(w_p, &hc).norm_sqr() + norm(w_p) * (sn + se * p_tot);
    for (j, g) in hp.iter().enumerate() {
        if j != k {
            den_p += dot(w_p, g).norm_sqr();
        }
    }
    (num_c / den_c, num_p / den_p)
}

#[test]
fn sinr_formulas_match_scalar_recoding() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for case in 0..20 {
        let users = [1usize, 2, 4][case % 3];
        let (m, n) = if case % 2 == 0 { (4, 4) } else { (8, 8) };
        let setup = RsmaSetup {
            users,
            theta: (0..users).map(|_| rng.random_range(0.0..=1.0)).collect(),
            sigma_e_sq: rng.random_range(0.0..0.05),
            sigma_n_sq: rng.random_range(0.01..1.0),
            seed: rng.random(),
            ..RsmaSetup::default()
        };
        let s = RsmaScenario::generate(m, n, &setup).unwrap();
        for k in 0..users {
            let ch = &s.channels[k];
            let inp = s.filters(k).unwrap();
            let (sn, se) = (ch.sigma_n_sq, ch.sigma_e_sq);
            let c = sinr_common(&inp, &ch.h_est, &s.precoders, sn, se).unwrap();
            let p = sinr_private(&inp, &ch.h_est, &s.precoders, k, sn, se).unwrap();
            let (oc, op) = scalar_sinrs(&to_vec(&inp.w_common), &to_vec(&inp.w_private), &ch.h_est, &s.precoders, k, inp.theta, sn, se);
            assert!(rel(c, oc) <= 1e-12, "case {case} user {k}: {c} vs {oc}");
            assert!(rel(p, op) <= 1e-12, "case {case} user {k}: {p} vs {op}");
        }
    }
}

#[test]
fn no_private_streams_reduces_common_denominator() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let n_dd = 8;
    let h = CMatrix::from_fn(n_dd, n_dd, |_, _| complex_gaussian(&mut rng, 1.0));
    let pre = Precoders::random(n_dd, 0, 1.0, 1.0, &mut rng).unwrap();
    let w = matched_filter(&h, pre.common());
    let inp = SinrInputs {
        w_common: w.clone(),
        w_private: w.clone(),
        theta: 0.0,
    };
    let got = sinr_common(&inp, &h, &pre, 0.3, 0.0).unwrap();
    let hp = mat_vec(&h, pre.common());
    let want = dot(&to_vec(&w), &hp).norm_sqr() / (0.3 * w.norm_squared());
    assert!(rel(got, want) <= 1e-12);
}

#[test]
fn lmmse_beats_matched_and_random_filters() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for case in 0..10 {
        let setup = RsmaSetup {
            users: 1 + case % 3,
            theta: vec![0.2; 1 + case % 3],
            seed: rng.random(),
            ..RsmaSetup::default()
        };
        let s = RsmaScenario::generate(4, 4, &setup).unwrap();
        let ch = &s.channels[0];
        let (sn, se) = (ch.sigma_n_sq, ch.sigma_e_sq);
        let lmmse = s.filters(0).unwrap();
        let value = |w: RowFilter| {
            let inp = SinrInputs {
                w_common: w.clone(),
                w_private: w,
                theta: 0.2,
            };
            sinr_common(&inp, &ch.h_est, &s.precoders, sn, se).unwrap()
        };
        let best = value(lmmse.w_common.clone());
        let matched = value(matched_filter(&ch.h_est, s.precoders.common()));
        let random = value(RowFilter::from_fn(16, |_, _| complex_gaussian(&mut rng, 1.0)));
        assert!(best >= matched * (1.0 - 1e-12), "case {case}");
        assert!(best >= random * (1.0 - 1e-12), "case {case}");
    }
}

#[test]
fn perfect_csi_and_sic_give_classical_mmse_sinr() {
    let setup = RsmaSetup {
        users: 3,
        sigma_e_sq: 0.0,
        theta: vec![0.0; 3],
        seed: 77,
        ..RsmaSetup::default()
    };
    let s = RsmaScenario::generate(4, 4, &setup).unwrap();
    for k in 0..3 {
        let ch = &s.channels[k];
        let sn = ch.sigma_n_sq;
        let inp = s.filters(k).unwrap();
        let gc = &ch.h_est * s.precoders.common();
        let gp: Vec<CVector> = s.precoders.private().iter().map(|p| &ch.h_est * p).collect();
        let n = gc.len();
        // g^H (interference covariance)^-1 g via LU, independent of the
        // Cholesky path used for filter design.
        let quad = |target: &CVector, others: &[&CVector]| {
            let mut cov = CMatrix::identity(n, n) * Complex64::new(sn, 0.0);
            for g in others {
                cov += *g * g.adjoint();
            }
            let sol = cov.lu().solve(target).unwrap();
            (target.adjoint() * sol)[0].re
        };
        let all_private: Vec<&CVector> = gp.iter().collect();
        let others: Vec<&CVector> = gp.iter().enumerate().filter(|(j, _)| *j != k).map(|(_, g)| g).collect();
        let want_c = quad(&gc, &all_private);
        let want_p = quad(&gp[k], &others);
        let got_c = sinr_common(&inp, &ch.h_est, &s.precoders, sn, 0.0).unwrap();
        let got_p = sinr_private(&inp, &ch.h_est, &s.precoders, k, sn, 0.0).unwrap();
        assert!(rel(got_c, want_c) <= 1e-10, "{got_c} vs {want_c}");
        assert!(rel(got_p, want_p) <= 1e-10, "{got_p} vs {want_p}");
    }
}

#[test]
fn icsi_degrades_both_sinrs_with_fixed_filters() {
    let s = RsmaScenario::generate(4, 4, &RsmaSetup { seed: 9, ..RsmaSetup::default() }).unwrap();
    let ch = &s.channels[1];
    let inp = s.filters(1).unwrap();
    let mut prev = (f64::INFINITY, f64::INFINITY);
    for se in [0.0, 0.001, 0.01, 0.1, 1.0] {
        let c = sinr_common(&inp, &ch.h_est, &s.precoders, ch.sigma_n_sq, se).unwrap();
        let p = sinr_private(&inp, &ch.h_est, &s.precoders, 1, ch.sigma_n_sq, se).unwrap();
        assert!(c < prev.0 && p < prev.1);
        prev = (c, p);
    }
}

#[test]
fn estimation_error_statistics() {
    let sigma_e_sq = 0.37;
    let h = CMatrix::zeros(250, 400);
    let e = draw_channel_estimate(&h, sigma_e_sq, 2024).unwrap();
    let n = e.len() as f64;
    let mean_re = e.iter().map(|v| v.re).sum::<f64>() / n;
    let mean_im = e.iter().map(|v| v.im).sum::<f64>() / n;
    let var = e.iter().map(|v| v.norm_sqr()).sum::<f64>() / n - mean_re * mean_re - mean_im * mean_im;
    assert!((var - sigma_e_sq).abs() <= 0.05 * sigma_e_sq, "variance {var}");
    let component_sd = (sigma_e_sq / 2.0).sqrt();
    assert!(mean_re.abs() <= 4.0 * component_sd / n.sqrt());
    assert!(mean_im.abs() <= 4.0 * component_sd / n.sqrt());
}

#[test]
fn lmmse_surfaces_bad_inputs() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let pre = Precoders::random(4, 1, 1.0, 0.5, &mut rng).unwrap();
    let h = CMatrix::identity(4, 4);
    assert!(lmmse_filters(&h, &pre, 0.0, 0.0).is_err());
    assert!(lmmse_filters(&CMatrix::identity(4, 3), &pre, 0.1, 0.0).is_err());
}

// --- Monte Carlo ------------------------------------------------------------

fn mc_fixture() -> (OtfsGrid, EchoParams, TfSymbols) {
    let grid = OtfsGrid::new(8, 8, 15e3, 1.0 / 15e3).unwrap();
    let gain = GainModel::new(Complex64::new(1.0, 0.0), 50e-6).unwrap();
    let p = EchoParams::new(50e-6, 1000.0, Complex64::new(1.0, 0.0), gain, 1.0).unwrap();
    (grid, p, TfSymbols::uniform_unit(&grid))
}

#[test]
fn mc_is_deterministic_and_schedule_independent() {
    let (grid, p, x) = mc_fixture();
    let cfg = McConfig {
        trials: 64,
        snr_db: 20.0,
        seed: 5,
        ..McConfig::around_target(&p, &grid, 81)
    };
    let a = run_mc(&p, &x, &cfg, &grid).unwrap();
    let b = run_mc(&p, &x, &cfg, &grid).unwrap();
    assert_eq!(a, b);
    let s = run_mc_serial(&p, &x, &cfg, &grid).unwrap();
    assert!(rel(a.mse_tau, s.mse_tau) <= 1e-9);
    assert!(rel(a.mse_nu, s.mse_nu) <= 1e-9);
    assert_eq!(a.trials_used, 64);
}

#[test]
fn mc_high_snr_is_efficient() {
    let (grid, p, x) = mc_fixture();
    let cfg = McConfig {
        trials: 200,
        snr_db: 60.0,
        seed: 1,
        ..McConfig::around_target(&p, &grid, 161)
    };
    let r = run_mc(&p, &x, &cfg, &grid).unwrap();
    assert!((0.5..=3.0).contains(&r.ratio_tau), "ratio_tau {}", r.ratio_tau);
    assert!((0.5..=3.0).contains(&r.ratio_nu), "ratio_nu {}", r.ratio_nu);
}
