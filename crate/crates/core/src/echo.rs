//! Monostatic echo mean signal with delay-dependent gain, and its analytic
//! derivatives with respect to target Doppler and delay.

use std::f64::consts::TAU;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::otfs::{forward_kernel_sum, DdVector, OtfsGrid, TfSymbols};

/// Inverse-square amplitude law `alpha(tau) = alpha_ref * (tau_ref / tau)^2`,
/// so that `d alpha / d tau = -2 alpha(tau) / tau`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GainModel {
    pub alpha_ref: Complex64,
    pub tau_ref: f64,
}

impl GainModel {
    pub fn new(alpha_ref: Complex64, tau_ref: f64) -> Result<Self> {
        if !(tau_ref.is_finite() && tau_ref > 0.0) {
            return Err(Error::domain("echo.tau_ref", "must be finite and > 0"));
        }
        if !(alpha_ref.re.is_finite() && alpha_ref.im.is_finite()) {
            return Err(Error::domain("echo.alpha_ref", "must be finite"));
        }
        Ok(GainModel { alpha_ref, tau_ref })
    }

    pub fn alpha(&self, tau: f64) -> Result<Complex64> {
        if !(tau.is_finite() && tau > 0.0) {
            return Err(Error::domain("echo.tau_t", "delay must be finite and > 0"));
        }
        let ratio = self.tau_ref / tau;
        Ok(self.alpha_ref * (ratio * ratio))
    }
}

/// Target and noise parameters of the single-target echo.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EchoParams {
    pub tau_t: f64,
    pub nu_t: f64,
    pub beta_t: Complex64,
    pub gain: GainModel,
    pub sigma_echo_sq: f64,
}

impl EchoParams {
    pub fn new(
        tau_t: f64,
        nu_t: f64,
        beta_t: Complex64,
        gain: GainModel,
        sigma_echo_sq: f64,
    ) -> Result<Self> {
        let p = EchoParams {
            tau_t,
            nu_t,
            beta_t,
            gain,
            sigma_echo_sq,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau_t.is_finite() && self.tau_t > 0.0) {
            return Err(Error::domain("echo.tau_t", "must be finite and > 0"));
        }
        if !self.nu_t.is_finite() {
            return Err(Error::domain("echo.nu_t", "must be finite"));
        }
        if !(self.beta_t.re.is_finite() && self.beta_t.im.is_finite()) {
            return Err(Error::domain("echo.beta", "must be finite"));
        }
        if !(self.sigma_echo_sq.is_finite() && self.sigma_echo_sq > 0.0) {
            return Err(Error::domain("echo.sigma_echo_sq", "must be finite and > 0"));
        }
        GainModel::new(self.gain.alpha_ref, self.gain.tau_ref)?;
        Ok(())
    }

    pub fn alpha(&self) -> Result<Complex64> {
        self.gain.alpha(self.tau_t)
    }

    /// Same parameters at a different `(tau, nu)`.
    pub fn at(&self, tau_t: f64, nu_t: f64) -> EchoParams {
        EchoParams {
            tau_t,
            nu_t,
            ..*self
        }
    }

    /// `|alpha(tau_t)|^2 |beta_t|^2`.
    pub fn amplitude_sqr(&self) -> Result<f64> {
        Ok(self.alpha()?.norm_sqr() * self.beta_t.norm_sqr())
    }
}

/// Mean signal and its derivative vectors, all in the delay-Doppler layout.
#[derive(Debug, Clone, PartialEq)]
pub struct DerivativeBundle {
    pub mu: DdVector,
    pub d_nu: DdVector,
    pub d_gain: DdVector,
    pub d_phase_tau: DdVector,
    pub d_tau: DdVector,
}

/// `X[n,i] e^{j2pi(n nu T - i tau delta_f)}`, the target-shifted symbols.
pub(crate) fn shifted_symbols(x: &TfSymbols, tau: f64, nu: f64, grid: &OtfsGrid) -> Vec<Complex64> {
    let nu_t = nu * grid.symbol_duration();
    let tau_f = tau * grid.delta_f();
    let mut out = Vec::with_capacity(grid.n_dd());
    for n in 0..grid.n() {
        for i in 0..grid.m() {
            let ph = TAU * (n as f64 * nu_t - i as f64 * tau_f);
            out.push(x.get(n, i) * Complex64::from_polar(1.0, ph));
        }
    }
    out
}

/// `n * z[n,i]` (which = Doppler) or `i * z[n,i]` (delay).
fn index_weighted(z: &[Complex64], grid: &OtfsGrid, axis: Axis) -> Vec<Complex64> {
    let m = grid.m();
    z.iter()
        .enumerate()
        .map(|(idx, v)| {
            let w = match axis {
                Axis::Doppler => idx / m,
                Axis::Delay => idx % m,
            };
            v * w as f64
        })
        .collect()
}

#[derive(Clone, Copy)]
enum Axis {
    Doppler,
    Delay,
}

/// Unnormalized inner sums over `(n, i)` for every cell; shared by the mean
/// signal, the derivatives and the FIM sums.
pub(crate) struct KernelSums {
    pub plain: Vec<Complex64>,
    pub n_weighted: Vec<Complex64>,
    pub i_weighted: Vec<Complex64>,
    /// `alpha(tau) beta / sqrt(MN)`.
    pub coeff: Complex64,
}

pub(crate) fn kernel_sums(x: &TfSymbols, p: &EchoParams, grid: &OtfsGrid) -> Result<KernelSums> {
    p.validate()?;
    x.check_shape(grid)?;
    let z = shifted_symbols(x, p.tau_t, p.nu_t, grid);
    let coeff = p.alpha()? * p.beta_t / (grid.n_dd() as f64).sqrt();
    Ok(KernelSums {
        plain: forward_kernel_sum(&z, grid),
        n_weighted: forward_kernel_sum(&index_weighted(&z, grid, Axis::Doppler), grid),
        i_weighted: forward_kernel_sum(&index_weighted(&z, grid, Axis::Delay), grid),
        coeff,
    })
}

fn scaled(v: &[Complex64], c: Complex64) -> DdVector {
    DdVector::from_vec(v.iter().map(|x| x * c).collect())
}

/// Mean received delay-Doppler signal
/// `mu[l,k] = alpha(tau) beta / sqrt(MN) sum_{n,i} X[n,i] e^{j phi}`.
pub fn mean_dd_signal(x: &TfSymbols, p: &EchoParams, grid: &OtfsGrid) -> Result<DdVector> {
    p.validate()?;
    x.check_shape(grid)?;
    let z = shifted_symbols(x, p.tau_t, p.nu_t, grid);
    let coeff = p.alpha()? * p.beta_t / (grid.n_dd() as f64).sqrt();
    Ok(scaled(&forward_kernel_sum(&z, grid), coeff))
}

/// Analytic `d mu / d nu_T`.
pub fn d_nu(x: &TfSymbols, p: &EchoParams, grid: &OtfsGrid) -> Result<DdVector> {
    p.validate()?;
    x.check_shape(grid)?;
    let z = shifted_symbols(x, p.tau_t, p.nu_t, grid);
    let coeff = p.alpha()? * p.beta_t / (grid.n_dd() as f64).sqrt();
    let raw = forward_kernel_sum(&index_weighted(&z, grid, Axis::Doppler), grid);
    Ok(scaled(&raw, doppler_factor(grid) * coeff))
}

/// Analytic `d mu / d tau_T`, split into the gain and phase contributions.
pub fn d_tau(x: &TfSymbols, p: &EchoParams, grid: &OtfsGrid) -> Result<DerivativeBundle> {
    derivative_bundle(x, p, grid)
}

/// `mu`, `d_nu` and the full delay derivative from a single pass.
pub fn derivative_bundle(x: &TfSymbols, p: &EchoParams, grid: &OtfsGrid) -> Result<DerivativeBundle> {
    let sums = kernel_sums(x, p, grid)?;
    Ok(bundle_from_sums(&sums, p, grid))
}

pub(crate) fn bundle_from_sums(sums: &KernelSums, p: &EchoParams, grid: &OtfsGrid) -> DerivativeBundle {
    let mu = scaled(&sums.plain, sums.coeff);
    let d_nu = scaled(&sums.n_weighted, doppler_factor(grid) * sums.coeff);
    let d_phase_tau = scaled(&sums.i_weighted, delay_factor(grid) * sums.coeff);
    let d_gain = mu.scaled(Complex64::new(-2.0 / p.tau_t, 0.0));
    let d_tau = d_gain.add(&d_phase_tau);
    DerivativeBundle {
        mu,
        d_nu,
        d_gain,
        d_phase_tau,
        d_tau,
    }
}

/// `j 2 pi T`
fn doppler_factor(grid: &OtfsGrid) -> Complex64 {
    Complex64::new(0.0, TAU * grid.symbol_duration())
}

/// `-j 2 pi delta_f`
fn delay_factor(grid: &OtfsGrid) -> Complex64 {
    Complex64::new(0.0, -TAU * grid.delta_f())
}
