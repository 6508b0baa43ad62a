//! Fisher information for joint delay/Doppler estimation and the resulting
//! Cramér-Rao bounds.
//!
//! The six intermediate scalars are collected in [`FimSums`]; the cross terms
//! are inner products of the analytic derivative vectors from [`crate::echo`].

use std::f64::consts::TAU;

use crate::echo::{bundle_from_sums, kernel_sums, EchoParams};
use crate::error::{Error, FimEntry, Result};
use crate::otfs::{OtfsGrid, TfSymbols};

/// Relative singularity threshold on the determinant.
pub const SINGULAR_REL_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FimSums {
    /// `sum_{l,k} | sum_{n,i} n X[n,i] e^{j phi} |^2`
    pub s_n: f64,
    /// `sum_{l,k} | sum_{n,i} i X[n,i] e^{j phi} |^2`
    pub s_i: f64,
    /// `Re(d_phase_tau^H d_nu)`
    pub c_tau_nu: f64,
    /// `Re(mu^H d_phase_tau)`
    pub c_mu_tau: f64,
    /// `Re(mu^H d_nu)`
    pub c_mu_nu: f64,
    /// `||mu||^2`
    pub p_mu: f64,
}

/// Symmetric 2x2 information matrix over `(tau_T, nu_T)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Fim {
    pub i_tau_tau: f64,
    pub i_nu_nu: f64,
    pub i_tau_nu: f64,
}

impl Fim {
    /// Row-major `[[I_tautau, I_taunu], [I_taunu, I_nunu]]`.
    pub fn matrix(&self) -> [[f64; 2]; 2] {
        [
            [self.i_tau_tau, self.i_tau_nu],
            [self.i_tau_nu, self.i_nu_nu],
        ]
    }

    pub fn det(&self) -> f64 {
        self.i_tau_tau * self.i_nu_nu - self.i_tau_nu * self.i_tau_nu
    }

    pub fn trace(&self) -> f64 {
        self.i_tau_tau + self.i_nu_nu
    }

    /// Smaller eigenvalue of the symmetric matrix.
    pub fn min_eigenvalue(&self) -> f64 {
        let half_trace = 0.5 * self.trace();
        let half_diff = 0.5 * (self.i_tau_tau - self.i_nu_nu);
        half_trace - half_diff.hypot(self.i_tau_nu)
    }

    /// PSD up to `-tol * trace` on the smaller eigenvalue.
    pub fn is_psd(&self, tol: f64) -> bool {
        self.min_eigenvalue() >= -tol * self.trace().abs()
    }

    /// First diagonal entry that is negative, if any. Such values are
    /// reported, never clipped.
    pub fn negative_diagonal(&self) -> Option<FimEntry> {
        if self.i_tau_tau < 0.0 {
            Some(FimEntry::TauTau)
        } else if self.i_nu_nu < 0.0 {
            Some(FimEntry::NuNu)
        } else {
            None
        }
    }

    pub fn scaled(&self, c: f64) -> Fim {
        Fim {
            i_tau_tau: self.i_tau_tau * c,
            i_nu_nu: self.i_nu_nu * c,
            i_tau_nu: self.i_tau_nu * c,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrbResult {
    /// Bound on delay variance, s^2.
    pub crb_tau: f64,
    /// Bound on Doppler variance, Hz^2.
    pub crb_nu: f64,
    pub det_fim: f64,
    pub fim: Fim,
}

/// Intermediate sums for the FIM at the parameters in `p`.
pub fn fim_sums(x: &TfSymbols, p: &EchoParams, grid: &OtfsGrid) -> Result<FimSums> {
    let sums = kernel_sums(x, p, grid)?;
    let bundle = bundle_from_sums(&sums, p, grid);
    let s_n = sums.n_weighted.iter().map(|v| v.norm_sqr()).sum();
    let s_i = sums.i_weighted.iter().map(|v| v.norm_sqr()).sum();
    Ok(FimSums {
        s_n,
        s_i,
        c_tau_nu: bundle.d_phase_tau.inner(&bundle.d_nu).re,
        c_mu_tau: bundle.mu.inner(&bundle.d_phase_tau).re,
        c_mu_nu: bundle.mu.inner(&bundle.d_nu).re,
        p_mu: bundle.mu.norm_sqr(),
    })
}

/// Expanded FIM entries:
///
/// ```text
/// I_nunu   = 2 (2 pi T)^2 |a|^2 |b|^2 S_n / (MN s2)
/// I_tautau = 8 P_mu / (s2 tau^2) + 2 (2 pi df)^2 |a|^2 |b|^2 S_i / (MN s2) - 8 C_mutau / (s2 tau)
/// I_taunu  = 2 C_taunu / s2 - 4 C_munu / (s2 tau)
/// ```
///
/// Every entry is formed noise-free and divided by `s2` last, so the result
/// scales exactly with the noise variance.
pub fn fim_assemble(s: &FimSums, p: &EchoParams, grid: &OtfsGrid) -> Result<Fim> {
    p.validate()?;
    let amp = p.amplitude_sqr()?;
    let mn = grid.n_dd() as f64;
    let tau = p.tau_t;
    let sigma_sq = p.sigma_echo_sq;

    let w_t = TAU * grid.symbol_duration();
    let w_f = TAU * grid.delta_f();

    let nu_nu = 2.0 * w_t * w_t * amp * s.s_n / mn;
    let tau_tau = 8.0 * s.p_mu / (tau * tau) + 2.0 * w_f * w_f * amp * s.s_i / mn
        - 8.0 * s.c_mu_tau / tau;
    let tau_nu = 2.0 * s.c_tau_nu - 4.0 * s.c_mu_nu / tau;

    Ok(Fim {
        i_tau_tau: tau_tau / sigma_sq,
        i_nu_nu: nu_nu / sigma_sq,
        i_tau_nu: tau_nu / sigma_sq,
    })
}

/// Closed-form 2x2 inversion: `CRB(tau) = I_nunu / det`, `CRB(nu) = I_tautau / det`.
pub fn crb_from_fim(f: &Fim) -> Result<CrbResult> {
    let det = f.det();
    let threshold = SINGULAR_REL_TOL * (f.i_tau_tau * f.i_nu_nu).max(1.0);
    // Negated so a NaN determinant is also rejected.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    if !(det > threshold) {
        let scale = f.i_tau_tau.abs() + f.i_nu_nu.abs();
        let tiny = |v: f64| v.abs() <= SINGULAR_REL_TOL * scale;
        let zero_diagonal = if tiny(f.i_nu_nu) {
            Some(FimEntry::NuNu)
        } else if tiny(f.i_tau_tau) {
            Some(FimEntry::TauTau)
        } else {
            None
        };
        return Err(Error::SingularFim {
            det,
            threshold,
            zero_diagonal,
        });
    }
    Ok(CrbResult {
        crb_tau: f.i_nu_nu / det,
        crb_nu: f.i_tau_tau / det,
        det_fim: det,
        fim: *f,
    })
}

/// `fim_sums -> fim_assemble -> crb_from_fim`.
pub fn crb_pipeline(x: &TfSymbols, p: &EchoParams, grid: &OtfsGrid) -> Result<CrbResult> {
    let sums = fim_sums(x, p, grid)?;
    let fim = fim_assemble(&sums, p, grid)?;
    crb_from_fim(&fim)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::echo::{derivative_bundle, GainModel};
    use num_complex::Complex64;

    fn grid() -> OtfsGrid {
        OtfsGrid::new(4, 4, 15e3, 1.0 / 15e3).unwrap()
    }

    fn params() -> EchoParams {
        let gain = GainModel::new(Complex64::new(1.0, 0.0), 50e-6).unwrap();
        EchoParams::new(40e-6, 900.0, Complex64::new(0.7, 0.2), gain, 1.0).unwrap()
    }

    fn symbols(g: &OtfsGrid) -> TfSymbols {
        TfSymbols::from_fn(g, |n, i| Complex64::new(((n * 7 + i * 3) % 5) as f64 - 2.0, (n + 2 * i) as f64 * 0.3 - 1.0))
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs())
    }

    #[test]
    fn single_pilot_sums_vanish_and_fim_is_singular() {
        let g = grid();
        let x = TfSymbols::single_pilot(&g, 0, 0).unwrap();
        let s = fim_sums(&x, &params(), &g).unwrap();
        assert_eq!(s.s_n, 0.0);
        assert_eq!(s.s_i, 0.0);
        let f = fim_assemble(&s, &params(), &g).unwrap();
        assert_eq!(f.i_nu_nu, 0.0);
        match crb_from_fim(&f) {
            Err(Error::SingularFim { zero_diagonal, .. }) => {
                assert_eq!(zero_diagonal, Some(FimEntry::NuNu))
            }
            other => panic!("expected SingularFim, got {other:?}"),
        }
    }

    #[test]
    fn zero_symbols_are_singular() {
        let g = grid();
        assert!(matches!(
            crb_pipeline(&TfSymbols::zeros(&g), &params(), &g),
            Err(Error::SingularFim { .. })
        ));
    }

    #[test]
    fn cross_terms_match_bundle_inner_products() {
        let g = grid();
        let x = symbols(&g);
        let s = fim_sums(&x, &params(), &g).unwrap();
        let b = derivative_bundle(&x, &params(), &g).unwrap();
        let c_mu_nu: f64 = b
            .mu
            .as_slice()
            .iter()
            .zip(b.d_nu.as_slice())
            .map(|(m, d)| m.re * d.re + m.im * d.im)
            .sum();
        assert!((s.c_mu_nu - c_mu_nu).abs() <= 1e-12 * b.mu.norm_sqr().sqrt() * b.d_nu.norm_sqr().sqrt());
        let amp = params().amplitude_sqr().unwrap();
        assert!(rel(s.p_mu, amp * x.norm_sqr()) < 1e-12);
    }

    #[test]
    fn doubling_noise_halves_fim_exactly() {
        let g = grid();
        let x = symbols(&g);
        let p = params();
        let mut q = p;
        q.sigma_echo_sq *= 2.0;
        let s = fim_sums(&x, &p, &g).unwrap();
        let a = fim_assemble(&s, &p, &g).unwrap();
        let b = fim_assemble(&s, &q, &g).unwrap();
        assert_eq!(b, a.scaled(0.5));
        let ca = crb_from_fim(&a).unwrap();
        let cb = crb_from_fim(&b).unwrap();
        assert_eq!(cb.crb_tau, 2.0 * ca.crb_tau);
        assert_eq!(cb.crb_nu, 2.0 * ca.crb_nu);
    }

    #[test]
    fn crb_homogeneity() {
        let f = Fim {
            i_tau_tau: 3.0,
            i_nu_nu: 2.0,
            i_tau_nu: -1.1,
        };
        let a = crb_from_fim(&f).unwrap();
        let b = crb_from_fim(&f.scaled(7.0)).unwrap();
        assert!(rel(b.crb_tau * 7.0, a.crb_tau) < 1e-15);
        assert!(rel(b.crb_nu * 7.0, a.crb_nu) < 1e-15);
        assert!(rel(a.crb_tau * a.det_fim, f.i_nu_nu) < 1e-12);
        assert!(rel(a.crb_nu * a.det_fim, f.i_tau_tau) < 1e-12);
    }

    #[test]
    fn rank_one_fim_is_singular_without_zero_diagonal() {
        let f = Fim {
            i_tau_tau: 4.0,
            i_nu_nu: 9.0,
            i_tau_nu: 6.0,
        };
        assert!(matches!(
            crb_from_fim(&f),
            Err(Error::SingularFim {
                zero_diagonal: None,
                ..
            })
        ));
    }

    #[test]
    fn eigenvalue_and_psd() {
        let f = Fim {
            i_tau_tau: 2.0,
            i_nu_nu: 2.0,
            i_tau_nu: 1.0,
        };
        assert!((f.min_eigenvalue() - 1.0).abs() < 1e-15);
        assert!(f.is_psd(1e-10));
        let bad = Fim {
            i_tau_tau: -1.0,
            i_nu_nu: 2.0,
            i_tau_nu: 0.0,
        };
        assert!(!bad.is_psd(1e-10));
        assert_eq!(bad.negative_diagonal(), Some(FimEntry::TauTau));
    }
}
