//! Independent numerical oracles and a Monte-Carlo maximum-likelihood
//! experiment comparing empirical estimator MSE with the analytic CRBs.

use std::f64::consts::TAU;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::echo::{mean_dd_signal, EchoParams, GainModel};
use crate::error::{Error, Result};
use crate::fim::{crb_pipeline, Fim};
use crate::otfs::{isfft, DdVector, OtfsGrid, TfSymbols};
use crate::rsma::complex_gaussian;

/// Default central-difference Doppler step, as a fraction of `1/T`.
pub const FD_NU_STEP_REL: f64 = 1e-5;
/// Default central-difference delay step, as a fraction of `tau_T`.
pub const FD_TAU_STEP_REL: f64 = 1e-6;

/// Central difference `(f(x + h) - f(x - h)) / 2h` of a vector-valued map.
pub fn fd_derivative<F>(f: F, at: f64, step: f64) -> Result<DdVector>
where
    F: Fn(f64) -> Result<DdVector>,
{
    if !(step.is_finite() && step > 0.0) {
        return Err(Error::domain("step", "must be finite and > 0"));
    }
    let plus = f(at + step)?;
    let minus = f(at - step)?;
    if plus.len() != minus.len() {
        return Err(Error::Dimension {
            what: "finite-difference samples",
            expected: plus.len(),
            got: minus.len(),
        });
    }
    let inv = 1.0 / (2.0 * step);
    Ok(DdVector::from_vec(
        plus.as_slice()
            .iter()
            .zip(minus.as_slice())
            .map(|(a, b)| (a - b) * inv)
            .collect(),
    ))
}

/// Finite-difference `d mu / d nu_T` with step `rel_step / T`.
pub fn fd_d_nu(x: &TfSymbols, p: &EchoParams, grid: &OtfsGrid, rel_step: f64) -> Result<DdVector> {
    let step = rel_step / grid.symbol_duration();
    fd_derivative(|nu| mean_dd_signal(x, &p.at(p.tau_t, nu), grid), p.nu_t, step)
}

/// Finite-difference `d mu / d tau_T` with step `rel_step * tau_T`; the gain
/// is re-evaluated at each shifted delay.
pub fn fd_d_tau(x: &TfSymbols, p: &EchoParams, grid: &OtfsGrid, rel_step: f64) -> Result<DdVector> {
    let step = rel_step * p.tau_t;
    fd_derivative(|tau| mean_dd_signal(x, &p.at(tau, p.nu_t), grid), p.tau_t, step)
}

/// Generic complex-Gaussian FIM `[I]_ij = (2/s2) Re(d_i^H d_j)`.
pub fn numeric_fim(j_tau: &DdVector, j_nu: &DdVector, sigma_sq: f64) -> Result<Fim> {
    if j_tau.len() != j_nu.len() {
        return Err(Error::Dimension {
            what: "Jacobian columns",
            expected: j_tau.len(),
            got: j_nu.len(),
        });
    }
    if !(sigma_sq.is_finite() && sigma_sq > 0.0) {
        return Err(Error::domain("sigma_sq", "must be finite and > 0"));
    }
    Ok(Fim {
        i_tau_tau: 2.0 * j_tau.norm_sqr() / sigma_sq,
        i_nu_nu: 2.0 * j_nu.norm_sqr() / sigma_sq,
        i_tau_nu: 2.0 * j_tau.inner(j_nu).re / sigma_sq,
    })
}

/// Inclusive search axis `min..=max` with `count` nodes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchAxis {
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl SearchAxis {
    pub fn new(min: f64, max: f64, count: usize) -> Self {
        SearchAxis { min, max, count }
    }

    /// Symmetric axis `center +- half_width`.
    pub fn centered(center: f64, half_width: f64, count: usize) -> Self {
        SearchAxis {
            min: center - half_width,
            max: center + half_width,
            count,
        }
    }

    pub fn step(&self) -> f64 {
        if self.count > 1 {
            (self.max - self.min) / (self.count - 1) as f64
        } else {
            0.0
        }
    }

    pub fn node(&self, idx: usize) -> f64 {
        if idx + 1 == self.count && self.count > 1 {
            self.max
        } else {
            self.min + idx as f64 * self.step()
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.count).map(|i| self.node(i)).collect()
    }

    fn validate(&self, field: &'static str, refine: bool) -> Result<()> {
        if !(self.min.is_finite() && self.max.is_finite() && self.min <= self.max) {
            return Err(Error::domain(field, "range must be finite with min <= max"));
        }
        if self.count == 0 {
            return Err(Error::domain(field, "count must be >= 1"));
        }
        if refine && self.count < 3 {
            return Err(Error::domain(field, "count must be >= 3 when refinement is on"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McConfig {
    pub trials: usize,
    /// `10 log10(P_mu / (MN sigma_echo^2))`.
    pub snr_db: f64,
    pub grid_tau: SearchAxis,
    pub grid_nu: SearchAxis,
    pub seed: u64,
    pub refine: bool,
}

impl McConfig {
    /// Search window of one resolution cell centered on the true target,
    /// `count` nodes per axis.
    pub fn around_target(p: &EchoParams, grid: &OtfsGrid, count: usize) -> Self {
        McConfig {
            trials: 500,
            snr_db: 30.0,
            grid_tau: SearchAxis::centered(p.tau_t, 0.5 * grid.delay_resolution(), count),
            grid_nu: SearchAxis::centered(p.nu_t, 0.5 * grid.doppler_resolution(), count),
            seed: 0,
            refine: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::domain("mc.trials", "must be >= 1"));
        }
        if !self.snr_db.is_finite() {
            return Err(Error::domain("mc.snr_db", "must be finite"));
        }
        self.grid_tau.validate("mc.tau", self.refine)?;
        self.grid_nu.validate("mc.nu", self.refine)?;
        if self.grid_tau.min <= 0.0 {
            return Err(Error::domain("mc.tau", "search delays must be > 0"));
        }
        Ok(())
    }

    /// Both search ranges must contain the true target.
    pub fn check_contains(&self, p: &EchoParams) -> Result<()> {
        if !(self.grid_tau.min <= p.tau_t && p.tau_t <= self.grid_tau.max) {
            return Err(Error::domain("mc.tau", "search range must contain echo.tau_t"));
        }
        if !(self.grid_nu.min <= p.nu_t && p.nu_t <= self.grid_nu.max) {
            return Err(Error::domain("mc.nu", "search range must contain echo.nu_t"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MlEstimate {
    pub tau_hat: f64,
    pub nu_hat: f64,
    /// Grid minimum fell on the edge of the search range.
    pub on_boundary: bool,
}

/// Sweeps of the alternating per-axis refinement before giving up.
const REFINE_MAX_SWEEPS: usize = 200;

/// Grid-search ML estimate `argmin ||y - mu(tau, nu)||^2` with known gain
/// law and reflectivity.
///
/// The objective is evaluated in the time-frequency domain:
/// `||mu||^2 - 2 Re(y^H mu)` with `y^H mu = alpha beta sum conj(Y[n,i]) X[n,i]
/// e^{j2pi(n nu T - i tau df)}` and `Y = isfft(y)`; the dropped `||y||^2` is
/// constant. Ties go to the lowest flat index (`tau` outer, `nu` inner).
///
/// With `refine` on, the grid minimum is polished by alternating 3-point
/// parabolic steps along each axis (stencil = grid step) until the updates
/// stall. Axes whose minimum sits on the range edge are not refined.
pub fn ml_estimate(
    y: &DdVector,
    x: &TfSymbols,
    gain: &GainModel,
    beta: Complex64,
    cfg: &McConfig,
    grid: &OtfsGrid,
) -> Result<MlEstimate> {
    cfg.validate()?;
    x.check_shape(grid)?;
    let objective = MlObjective::new(y, x, gain, beta, grid)?;

    let tau_nodes = cfg.grid_tau.nodes();
    let nu_nodes = cfg.grid_nu.nodes();
    let nu_phasors: Vec<Vec<Complex64>> = nu_nodes.iter().map(|&nu| objective.doppler_phasors(nu)).collect();

    let mut best = (0usize, 0usize);
    let mut best_val = f64::INFINITY;
    for (it, &tau) in tau_nodes.iter().enumerate() {
        let (power, amp, per_symbol) = objective.delay_stage(tau)?;
        for (iv, ph) in nu_phasors.iter().enumerate() {
            let v = MlObjective::combine(power, amp, &per_symbol, ph);
            if v < best_val {
                best_val = v;
                best = (it, iv);
            }
        }
    }
    let (it, iv) = best;
    let tau_edge = cfg.grid_tau.count > 1 && (it == 0 || it + 1 == cfg.grid_tau.count);
    let nu_edge = cfg.grid_nu.count > 1 && (iv == 0 || iv + 1 == cfg.grid_nu.count);

    let mut tau_hat = tau_nodes[it];
    let mut nu_hat = nu_nodes[iv];
    if cfg.refine {
        let (h_tau, h_nu) = (cfg.grid_tau.step(), cfg.grid_nu.step());
        for _ in 0..REFINE_MAX_SWEEPS {
            let mut moved = 0.0f64;
            if !tau_edge {
                let a = objective.eval(tau_hat - h_tau, nu_hat)?;
                let b = objective.eval(tau_hat, nu_hat)?;
                let c = objective.eval(tau_hat + h_tau, nu_hat)?;
                let off = parabolic_offset(a, b, c);
                tau_hat = (tau_hat + off * h_tau).clamp(cfg.grid_tau.min, cfg.grid_tau.max);
                moved = moved.max(off.abs());
            }
            if !nu_edge {
                let a = objective.eval(tau_hat, nu_hat - h_nu)?;
                let b = objective.eval(tau_hat, nu_hat)?;
                let c = objective.eval(tau_hat, nu_hat + h_nu)?;
                let off = parabolic_offset(a, b, c);
                nu_hat = (nu_hat + off * h_nu).clamp(cfg.grid_nu.min, cfg.grid_nu.max);
                moved = moved.max(off.abs());
            }
            if moved < 1e-9 {
                break;
            }
        }
    }
    Ok(MlEstimate {
        tau_hat,
        nu_hat,
        on_boundary: tau_edge || nu_edge,
    })
}

/// `||mu(tau, nu)||^2 - 2 Re(y^H mu(tau, nu))` for a fixed observation.
struct MlObjective<'a> {
    weights: Vec<Complex64>,
    x_power: f64,
    gain: &'a GainModel,
    beta: Complex64,
    grid: &'a OtfsGrid,
}

impl<'a> MlObjective<'a> {
    fn new(y: &DdVector, x: &TfSymbols, gain: &'a GainModel, beta: Complex64, grid: &'a OtfsGrid) -> Result<Self> {
        let y_tf = isfft(y, grid)?;
        let weights = y_tf
            .as_slice()
            .iter()
            .zip(x.as_slice())
            .map(|(yv, xv)| yv.conj() * xv)
            .collect();
        Ok(MlObjective {
            weights,
            x_power: x.norm_sqr(),
            gain,
            beta,
            grid,
        })
    }

    /// `e^{+j2pi n nu T}` for every symbol `n`.
    fn doppler_phasors(&self, nu: f64) -> Vec<Complex64> {
        let t = self.grid.symbol_duration();
        (0..self.grid.n())
            .map(|n| Complex64::from_polar(1.0, TAU * n as f64 * nu * t))
            .collect()
    }

    /// Signal power, complex amplitude and the per-symbol delay-compensated
    /// sums `sum_i W[n,i] e^{-j2pi i tau df}`.
    fn delay_stage(&self, tau: f64) -> Result<(f64, Complex64, Vec<Complex64>)> {
        let amp = self.gain.alpha(tau)? * self.beta;
        let m = self.grid.m();
        let df = self.grid.delta_f();
        let phasors: Vec<Complex64> = (0..m)
            .map(|i| Complex64::from_polar(1.0, -TAU * i as f64 * tau * df))
            .collect();
        let per_symbol = self
            .weights
            .chunks_exact(m)
            .map(|row| row.iter().zip(&phasors).map(|(w, p)| w * p).sum())
            .collect();
        Ok((amp.norm_sqr() * self.x_power, amp, per_symbol))
    }

    fn combine(power: f64, amp: Complex64, per_symbol: &[Complex64], doppler: &[Complex64]) -> f64 {
        let cross: Complex64 = doppler.iter().zip(per_symbol).map(|(a, b)| a * b).sum();
        power - 2.0 * (amp * cross).re
    }

    fn eval(&self, tau: f64, nu: f64) -> Result<f64> {
        let (power, amp, per_symbol) = self.delay_stage(tau)?;
        Ok(Self::combine(power, amp, &per_symbol, &self.doppler_phasors(nu)))
    }
}

/// Vertex of the parabola through `(-1, a), (0, b), (1, c)`, in node units.
fn parabolic_offset(a: f64, b: f64, c: f64) -> f64 {
    let curvature = a - 2.0 * b + c;
    if curvature > 0.0 {
        (0.5 * (a - c) / curvature).clamp(-1.0, 1.0)
    } else {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct McReport {
    pub mse_tau: f64,
    pub mse_nu: f64,
    pub crb_tau: f64,
    pub crb_nu: f64,
    pub ratio_tau: f64,
    pub ratio_nu: f64,
    pub bias_tau: f64,
    pub bias_nu: f64,
    pub trials_used: usize,
    pub boundary_hits: usize,
    /// Noise variance implied by the configured SNR.
    pub sigma_echo_sq: f64,
    pub sq_err_tau: Vec<f64>,
    pub sq_err_nu: Vec<f64>,
}

/// `sigma_echo^2 = P_mu / (MN 10^{snr/10})`.
pub fn noise_for_snr(p: &EchoParams, x: &TfSymbols, grid: &OtfsGrid, snr_db: f64) -> Result<f64> {
    let p_mu = p.amplitude_sqr()? * x.norm_sqr();
    Ok(p_mu / (grid.n_dd() as f64 * 10f64.powf(snr_db / 10.0)))
}

/// Monte-Carlo ML experiment. The noise variance is set from `cfg.snr_db`
/// (the `sigma_echo_sq` in `p` is ignored); trial `t` draws its noise from
/// seed `cfg.seed + t`.
pub fn run_mc(p: &EchoParams, x: &TfSymbols, cfg: &McConfig, grid: &OtfsGrid) -> Result<McReport> {
    run_mc_impl(p, x, cfg, grid, true)
}

/// Single-threaded [`run_mc`].
pub fn run_mc_serial(p: &EchoParams, x: &TfSymbols, cfg: &McConfig, grid: &OtfsGrid) -> Result<McReport> {
    run_mc_impl(p, x, cfg, grid, false)
}

fn run_mc_impl(p: &EchoParams, x: &TfSymbols, cfg: &McConfig, grid: &OtfsGrid, parallel: bool) -> Result<McReport> {
    cfg.validate()?;
    p.validate()?;
    cfg.check_contains(p)?;
    let sigma_sq = noise_for_snr(p, x, grid, cfg.snr_db)?;
    let mut truth = *p;
    truth.sigma_echo_sq = sigma_sq;
    if !(sigma_sq > 0.0 && sigma_sq.is_finite()) {
        return Err(Error::domain("mc.snr_db", "implied noise variance must be finite and > 0"));
    }
    let crb = crb_pipeline(x, &truth, grid)?;
    let mu = mean_dd_signal(x, &truth, grid)?;

    let trial = |t: usize| -> Result<(f64, f64, bool)> {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(t as u64));
        let y = DdVector::from_vec(
            mu.as_slice()
                .iter()
                .map(|m| m + complex_gaussian(&mut rng, sigma_sq))
                .collect(),
        );
        let est = ml_estimate(&y, x, &truth.gain, truth.beta_t, cfg, grid)?;
        Ok((est.tau_hat - truth.tau_t, est.nu_hat - truth.nu_t, est.on_boundary))
    };

    let outcomes: Vec<(f64, f64, bool)> = if parallel {
        (0..cfg.trials).into_par_iter().map(trial).collect::<Result<_>>()?
    } else {
        (0..cfg.trials).map(trial).collect::<Result<_>>()?
    };

    let n = outcomes.len() as f64;
    let sq_err_tau: Vec<f64> = outcomes.iter().map(|o| o.0 * o.0).collect();
    let sq_err_nu: Vec<f64> = outcomes.iter().map(|o| o.1 * o.1).collect();
    let mse_tau = sq_err_tau.iter().sum::<f64>() / n;
    let mse_nu = sq_err_nu.iter().sum::<f64>() / n;
    Ok(McReport {
        mse_tau,
        mse_nu,
        crb_tau: crb.crb_tau,
        crb_nu: crb.crb_nu,
        ratio_tau: mse_tau / crb.crb_tau,
        ratio_nu: mse_nu / crb.crb_nu,
        bias_tau: outcomes.iter().map(|o| o.0).sum::<f64>() / n,
        bias_nu: outcomes.iter().map(|o| o.1).sum::<f64>() / n,
        trials_used: outcomes.len(),
        boundary_hits: outcomes.iter().filter(|o| o.2).count(),
        sigma_echo_sq: sigma_sq,
        sq_err_tau,
        sq_err_nu,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::echo::derivative_bundle;

    fn grid() -> OtfsGrid {
        OtfsGrid::new(8, 8, 15e3, 1.0 / 15e3).unwrap()
    }

    fn params() -> EchoParams {
        let gain = GainModel::new(Complex64::new(1.0, 0.0), 50e-6).unwrap();
        EchoParams::new(50e-6, 1000.0, Complex64::new(1.0, 0.0), gain, 1.0).unwrap()
    }

    #[test]
    fn fd_of_constant_is_zero() {
        let v = DdVector::from_vec(vec![Complex64::new(1.0, 2.0); 4]);
        let d = fd_derivative(|_| Ok(v.clone()), 3.0, 0.1).unwrap();
        assert!(d.as_slice().iter().all(|c| c.norm() == 0.0));
        assert!(fd_derivative(|_| Ok(v.clone()), 3.0, 0.0).is_err());
    }

    #[test]
    fn fd_of_linear_is_exact() {
        let v: Vec<Complex64> = vec![Complex64::new(1.0, -2.0), Complex64::new(0.5, 0.25)];
        for step in [0.5, 0.25, 1.0] {
            let d = fd_derivative(
                |t| Ok(DdVector::from_vec(v.iter().map(|c| c * t).collect())),
                2.0,
                step,
            )
            .unwrap();
            assert_eq!(d.as_slice(), v.as_slice());
        }
    }

    #[test]
    fn fd_tau_matches_analytic_at_fifty_microseconds() {
        let g = grid();
        let p = params();
        let x = TfSymbols::from_fn(&g, |n, i| Complex64::new(1.0 + 0.1 * n as f64, -0.2 * i as f64));
        let fd = fd_d_tau(&x, &p, &g, FD_TAU_STEP_REL).unwrap();
        let an = derivative_bundle(&x, &p, &g).unwrap().d_tau;
        let err = fd.sub(&an).norm_sqr().sqrt() / an.norm_sqr().sqrt();
        assert!(err <= 1e-6, "relative error {err}");
    }

    #[test]
    fn numeric_fim_special_cases() {
        let a = DdVector::from_vec(vec![Complex64::new(1.0, 2.0), Complex64::new(-0.5, 0.3)]);
        let f = numeric_fim(&a, &a, 2.0).unwrap();
        assert!(f.det().abs() <= 1e-12 * f.i_tau_tau * f.i_nu_nu);
        let b = DdVector::from_vec(vec![Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)]);
        let c = DdVector::from_vec(vec![Complex64::new(0.0, 0.0), Complex64::new(0.0, 3.0)]);
        assert_eq!(numeric_fim(&b, &c, 1.0).unwrap().i_tau_nu, 0.0);
        assert!(numeric_fim(&b, &DdVector::zeros(3), 1.0).is_err());
    }

    #[test]
    fn noiseless_on_grid_recovers_truth() {
        let g = grid();
        let p = params();
        let x = TfSymbols::uniform_unit(&g);
        let cfg = McConfig::around_target(&p, &g, 21);
        let y = mean_dd_signal(&x, &p, &g).unwrap();
        let est = ml_estimate(&y, &x, &p.gain, p.beta_t, &McConfig { refine: false, ..cfg }, &g).unwrap();
        assert!((est.tau_hat - p.tau_t).abs() <= 1e-18);
        assert!((est.nu_hat - p.nu_t).abs() <= 1e-9);
        assert!(!est.on_boundary);
    }

    #[test]
    fn noiseless_off_grid_refines_within_half_step() {
        let g = grid();
        let p = params();
        let x = TfSymbols::uniform_unit(&g);
        let mut cfg = McConfig::around_target(&p, &g, 21);
        // shift the grid by a third of a step so the truth is off-node
        let (ht, hv) = (cfg.grid_tau.step() / 3.0, cfg.grid_nu.step() / 3.0);
        cfg.grid_tau = SearchAxis::new(cfg.grid_tau.min + ht, cfg.grid_tau.max + ht, 21);
        cfg.grid_nu = SearchAxis::new(cfg.grid_nu.min - hv, cfg.grid_nu.max - hv, 21);
        let y = mean_dd_signal(&x, &p, &g).unwrap();
        let est = ml_estimate(&y, &x, &p.gain, p.beta_t, &cfg, &g).unwrap();
        assert!((est.tau_hat - p.tau_t).abs() < 0.5 * cfg.grid_tau.step());
        assert!((est.nu_hat - p.nu_t).abs() < 0.5 * cfg.grid_nu.step());
    }

    #[test]
    fn zero_observation_ties_to_first_doppler_node() {
        // With y = 0 the objective is ||mu(tau)||^2 alone: flat in nu, so the
        // first Doppler node wins; it decreases with tau through the gain law.
        let g = grid();
        let p = params();
        let x = TfSymbols::uniform_unit(&g);
        let cfg = McConfig::around_target(&p, &g, 11);
        let est = ml_estimate(&DdVector::zeros(g.n_dd()), &x, &p.gain, p.beta_t, &cfg, &g).unwrap();
        assert_eq!(est.nu_hat, cfg.grid_nu.min);
        assert_eq!(est.tau_hat, cfg.grid_tau.max);
        assert!(est.on_boundary);
    }

    #[test]
    fn config_validation() {
        let p = params();
        let g = grid();
        let mut cfg = McConfig::around_target(&p, &g, 11);
        cfg.trials = 0;
        assert!(cfg.validate().is_err());
        let mut cfg = McConfig::around_target(&p, &g, 2);
        assert!(cfg.validate().is_err());
        cfg.refine = false;
        assert!(cfg.validate().is_ok());
        let mut cfg = McConfig::around_target(&p, &g, 11);
        cfg.grid_nu = SearchAxis::new(5000.0, 6000.0, 11);
        let x = TfSymbols::uniform_unit(&g);
        assert!(run_mc(&p, &x, &cfg, &g).is_err());
    }

    #[test]
    fn single_trial_report() {
        let g = grid();
        let p = params();
        let x = TfSymbols::uniform_unit(&g);
        let cfg = McConfig {
            trials: 1,
            ..McConfig::around_target(&p, &g, 41)
        };
        let r = run_mc(&p, &x, &cfg, &g).unwrap();
        assert_eq!(r.trials_used, 1);
        assert_eq!(r.sq_err_tau.len(), 1);
        assert_eq!(r.sq_err_nu.len(), 1);
        assert_eq!(r.mse_tau, r.sq_err_tau[0]);
    }

    #[test]
    fn search_axis_nodes_hit_endpoints() {
        let a = SearchAxis::new(0.0, 1.0, 11);
        let nodes = a.nodes();
        assert_eq!(nodes[0], 0.0);
        assert_eq!(nodes[10], 1.0);
        assert_eq!(SearchAxis::new(2.0, 2.0, 1).nodes(), vec![2.0]);
    }
}
