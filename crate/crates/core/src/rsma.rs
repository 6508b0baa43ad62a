//! RSMA downlink over the delay-Doppler grid: channel estimation error,
//! LMMSE receive filters designed on the estimated channel, and the refined
//! common/private SINR under imperfect CSI and imperfect SIC.
//!
//! Receive filters are row vectors acting on the left of `H_hat * p`.
//! Stream symbols are unit power.

use nalgebra::{DMatrix, DVector, RowDVector};
use num_complex::Complex64;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;
pub type RowFilter = RowDVector<Complex64>;

/// Common and per-user private precoders with their total power.
#[derive(Debug, Clone, PartialEq)]
pub struct Precoders {
    p_common: CVector,
    p_private: Vec<CVector>,
    p_tot: f64,
}

impl Precoders {
    pub fn new(p_common: CVector, p_private: Vec<CVector>) -> Result<Self> {
        let n_dd = p_common.len();
        for p in &p_private {
            if p.len() != n_dd {
                return Err(Error::Dimension {
                    what: "private precoder",
                    expected: n_dd,
                    got: p.len(),
                });
            }
        }
        let p_tot = p_common.norm_squared() + p_private.iter().map(|p| p.norm_squared()).sum::<f64>();
        if !(p_tot.is_finite() && p_tot > 0.0) {
            return Err(Error::domain("precoders", "total power must be finite and > 0"));
        }
        Ok(Precoders {
            p_common,
            p_private,
            p_tot,
        })
    }

    /// Isotropic random directions; the common stream gets
    /// `common_fraction * p_total`, the rest is split evenly across users.
    pub fn random<R: Rng + ?Sized>(
        n_dd: usize,
        users: usize,
        p_total: f64,
        common_fraction: f64,
        rng: &mut R,
    ) -> Result<Self> {
        if !(p_total.is_finite() && p_total > 0.0) {
            return Err(Error::domain("rsma.p_total", "must be finite and > 0"));
        }
        if !(0.0..=1.0).contains(&common_fraction) {
            return Err(Error::domain("rsma.common_fraction", "must lie in [0, 1]"));
        }
        let common_power = if users == 0 {
            p_total
        } else {
            p_total * common_fraction
        };
        let private_power = if users == 0 {
            0.0
        } else {
            p_total * (1.0 - common_fraction) / users as f64
        };
        let p_common = random_direction(n_dd, rng) * Complex64::new(common_power.sqrt(), 0.0);
        let p_private = (0..users)
            .map(|_| random_direction(n_dd, rng) * Complex64::new(private_power.sqrt(), 0.0))
            .collect();
        Self::new(p_common, p_private)
    }

    pub fn common(&self) -> &CVector {
        &self.p_common
    }

    pub fn private(&self) -> &[CVector] {
        &self.p_private
    }

    pub fn users(&self) -> usize {
        self.p_private.len()
    }

    pub fn n_dd(&self) -> usize {
        self.p_common.len()
    }

    /// `||p_c||^2 + sum_k ||p_k||^2`
    pub fn p_tot(&self) -> f64 {
        self.p_tot
    }
}

fn random_direction<R: Rng + ?Sized>(n: usize, rng: &mut R) -> CVector {
    let v = CVector::from_fn(n, |_, _| complex_gaussian(rng, 1.0));
    let norm = v.norm();
    v / Complex64::new(norm, 0.0)
}

/// Circular complex Gaussian sample with total variance `var`.
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, var: f64) -> Complex64 {
    let normal = Normal::new(0.0, (0.5 * var).sqrt()).expect("finite non-negative std dev");
    Complex64::new(normal.sample(rng), normal.sample(rng))
}

/// One user's true and estimated channel with the noise/error variances.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSet {
    pub h_true: CMatrix,
    pub h_est: CMatrix,
    pub sigma_e_sq: f64,
    pub sigma_n_sq: f64,
}

/// Receive filters and ISIC factor for one user.
#[derive(Debug, Clone, PartialEq)]
pub struct SinrInputs {
    pub w_common: RowFilter,
    pub w_private: RowFilter,
    pub theta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LmmseFilters {
    pub common: RowFilter,
    pub private: Vec<RowFilter>,
}

/// `H_hat = H + E`, `E` i.i.d. circular complex Gaussian of variance
/// `sigma_e_sq` (each real part `sigma_e_sq / 2`). Deterministic in `seed`.
pub fn draw_channel_estimate(h_true: &CMatrix, sigma_e_sq: f64, seed: u64) -> Result<CMatrix> {
    if !(sigma_e_sq.is_finite() && sigma_e_sq >= 0.0) {
        return Err(Error::domain("rsma.sigma_e_sq", "must be finite and >= 0"));
    }
    if sigma_e_sq == 0.0 {
        return Ok(h_true.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut h_est = h_true.clone();
    // Column-major fill order.
    for v in h_est.iter_mut() {
        *v += complex_gaussian(&mut rng, sigma_e_sq);
    }
    Ok(h_est)
}

/// Sparse delay-Doppler channel term: cyclic shift by `delay_shift` delay
/// bins and `doppler_shift` Doppler bins, scaled by `gain`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DdPath {
    pub delay_shift: usize,
    pub doppler_shift: usize,
    pub gain: Complex64,
}

/// Effective DD channel `sum_p gain_p * Shift(doppler_p, delay_p)` on an
/// `M x N` lattice (cells ordered `l * M + k`).
pub fn dd_path_channel(m: usize, n: usize, paths: &[DdPath]) -> CMatrix {
    let n_dd = m * n;
    let mut h = CMatrix::zeros(n_dd, n_dd);
    for path in paths {
        for l in 0..n {
            for k in 0..m {
                let from = l * m + k;
                let to = ((l + path.doppler_shift) % n) * m + (k + path.delay_shift) % m;
                h[(to, from)] += path.gain;
            }
        }
    }
    h
}

/// `path_count` paths with uniform integer shifts and `CN(0, 1/P)` gains.
pub fn random_dd_channel<R: Rng + ?Sized>(m: usize, n: usize, path_count: usize, rng: &mut R) -> CMatrix {
    let delay = Uniform::new(0, m).expect("m >= 1");
    let doppler = Uniform::new(0, n).expect("n >= 1");
    let var = 1.0 / path_count.max(1) as f64;
    let paths: Vec<DdPath> = (0..path_count)
        .map(|_| DdPath {
            delay_shift: delay.sample(rng),
            doppler_shift: doppler.sample(rng),
            gain: complex_gaussian(rng, var),
        })
        .collect();
    dd_path_channel(m, n, &paths)
}

fn check_noise(sigma_n_sq: f64, sigma_e_sq: f64) -> Result<()> {
    if !(sigma_n_sq.is_finite() && sigma_n_sq > 0.0) {
        return Err(Error::domain("rsma.sigma_n_sq", "must be finite and > 0"));
    }
    if !(sigma_e_sq.is_finite() && sigma_e_sq >= 0.0) {
        return Err(Error::domain("rsma.sigma_e_sq", "must be finite and >= 0"));
    }
    Ok(())
}

fn check_channel(h_est: &CMatrix, pre: &Precoders) -> Result<()> {
    if h_est.ncols() != pre.n_dd() {
        return Err(Error::Dimension {
            what: "channel columns",
            expected: pre.n_dd(),
            got: h_est.ncols(),
        });
    }
    Ok(())
}

/// Effective noise floor `sigma_n^2 + sigma_e^2 P_tot`.
pub fn effective_noise(sigma_n_sq: f64, sigma_e_sq: f64, pre: &Precoders) -> f64 {
    sigma_n_sq + sigma_e_sq * pre.p_tot()
}

/// MMSE receive filters on the estimated channel:
/// `w_c = p_c^H H^H (H R_x H^H + s I)^-1` with `R_x` over all streams and
/// `w_k = p_k^H H^H (H R_p H^H + s I)^-1` with `R_p` over private streams only.
/// `s` is the effective noise floor.
pub fn lmmse_filters(h_est: &CMatrix, pre: &Precoders, sigma_n_sq: f64, sigma_e_sq: f64) -> Result<LmmseFilters> {
    check_noise(sigma_n_sq, sigma_e_sq)?;
    check_channel(h_est, pre)?;
    let floor = effective_noise(sigma_n_sq, sigma_e_sq, pre);
    let rows = h_est.nrows();

    let g_common = h_est * pre.common();
    let g_private: Vec<CVector> = pre.private().iter().map(|p| h_est * p).collect();

    let covariance = |streams: &mut dyn Iterator<Item = &CVector>| {
        let mut c = CMatrix::identity(rows, rows) * Complex64::new(floor, 0.0);
        for g in streams {
            c += g * g.adjoint();
        }
        c
    };

    let full = covariance(&mut std::iter::once(&g_common).chain(g_private.iter()));
    let full = full
        .cholesky()
        .ok_or_else(|| Error::Numeric("common-stream covariance is not positive definite".into()))?;
    let common = full.solve(&g_common).adjoint();

    let private = if g_private.is_empty() {
        Vec::new()
    } else {
        let cov = covariance(&mut g_private.iter())
            .cholesky()
            .ok_or_else(|| Error::Numeric("private-stream covariance is not positive definite".into()))?;
        g_private.iter().map(|g| cov.solve(g).adjoint()).collect()
    };

    let finite = |w: &RowFilter| w.iter().all(|v| v.re.is_finite() && v.im.is_finite());
    if !finite(&common) || !private.iter().all(finite) {
        return Err(Error::Numeric("LMMSE filter has non-finite entries".into()));
    }
    Ok(LmmseFilters { common, private })
}

/// Matched filter `(H p)^H`.
pub fn matched_filter(h: &CMatrix, p: &CVector) -> RowFilter {
    (h * p).adjoint()
}

/// `|w H p|^2`
pub fn stream_power(w: &RowFilter, h: &CMatrix, p: &CVector) -> f64 {
    let hp = h * p;
    w.iter().zip(hp.iter()).map(|(a, b)| a * b).sum::<Complex64>().norm_sqr()
}

/// Common-stream SINR `|w_c H p_c|^2 / D_c`,
/// `D_c = sum_j |w_c H p_j|^2 + ||w_c||^2 (sigma_n^2 + sigma_e^2 P_tot)`.
pub fn sinr_common(inp: &SinrInputs, h_est: &CMatrix, pre: &Precoders, sigma_n_sq: f64, sigma_e_sq: f64) -> Result<f64> {
    sinr_common_with_signal(inp, h_est, h_est, pre, sigma_n_sq, sigma_e_sq)
}

/// Private-stream SINR `|w_k H p_k|^2 / D_p`,
/// `D_p = sum_{j != k} |w_k H p_j|^2 + Theta |w_k H p_c|^2 + ||w_k||^2 (sigma_n^2 + sigma_e^2 P_tot)`.
pub fn sinr_private(
    inp: &SinrInputs,
    h_est: &CMatrix,
    pre: &Precoders,
    k: usize,
    sigma_n_sq: f64,
    sigma_e_sq: f64,
) -> Result<f64> {
    sinr_private_with_signal(inp, h_est, h_est, pre, k, sigma_n_sq, sigma_e_sq)
}

/// Diagnostic variant of [`sinr_common`]: desired power through `h_signal`
/// (e.g. the true channel), interference and noise through `h_est`.
pub fn sinr_common_with_signal(
    inp: &SinrInputs,
    h_signal: &CMatrix,
    h_est: &CMatrix,
    pre: &Precoders,
    sigma_n_sq: f64,
    sigma_e_sq: f64,
) -> Result<f64> {
    check_noise(sigma_n_sq, sigma_e_sq)?;
    check_channel(h_est, pre)?;
    check_channel(h_signal, pre)?;
    let w = &inp.w_common;
    let signal = stream_power(w, h_signal, pre.common());
    let interference: f64 = pre.private().iter().map(|p| stream_power(w, h_est, p)).sum();
    let noise = w.norm_squared() * effective_noise(sigma_n_sq, sigma_e_sq, pre);
    Ok(signal / (interference + noise))
}

/// Diagnostic variant of [`sinr_private`], see [`sinr_common_with_signal`].
pub fn sinr_private_with_signal(
    inp: &SinrInputs,
    h_signal: &CMatrix,
    h_est: &CMatrix,
    pre: &Precoders,
    k: usize,
    sigma_n_sq: f64,
    sigma_e_sq: f64,
) -> Result<f64> {
    check_noise(sigma_n_sq, sigma_e_sq)?;
    check_channel(h_est, pre)?;
    check_channel(h_signal, pre)?;
    if !(0.0..=1.0).contains(&inp.theta) {
        return Err(Error::domain("rsma.theta", "ISIC factor must lie in [0, 1]"));
    }
    if k >= pre.users() {
        return Err(Error::domain(
            "user",
            format!("index {k} out of range for {} users", pre.users()),
        ));
    }
    let w = &inp.w_private;
    let signal = stream_power(w, h_signal, &pre.private()[k]);
    let interference: f64 = pre
        .private()
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != k)
        .map(|(_, p)| stream_power(w, h_est, p))
        .sum();
    let residual_common = inp.theta * stream_power(w, h_est, pre.common());
    let noise = w.norm_squared() * effective_noise(sigma_n_sq, sigma_e_sq, pre);
    Ok(signal / (interference + residual_common + noise))
}

/// Parameters for a seeded random RSMA experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct RsmaSetup {
    pub users: usize,
    pub sigma_n_sq: f64,
    pub sigma_e_sq: f64,
    /// One ISIC factor per user.
    pub theta: Vec<f64>,
    pub seed: u64,
    pub paths: usize,
    pub p_total: f64,
    pub common_fraction: f64,
}

impl Default for RsmaSetup {
    fn default() -> Self {
        RsmaSetup {
            users: 2,
            sigma_n_sq: 0.1,
            sigma_e_sq: 0.01,
            theta: vec![0.1; 2],
            seed: 1,
            paths: 4,
            p_total: 1.0,
            common_fraction: 0.5,
        }
    }
}

impl RsmaSetup {
    pub fn validate(&self) -> Result<()> {
        check_noise(self.sigma_n_sq, self.sigma_e_sq)?;
        if self.users == 0 {
            return Err(Error::domain("rsma.users", "must be >= 1"));
        }
        if self.theta.len() != self.users {
            return Err(Error::domain(
                "rsma.theta",
                format!("expected 1 or {} values, got {}", self.users, self.theta.len()),
            ));
        }
        if let Some(t) = self.theta.iter().find(|t| !(0.0..=1.0).contains(*t)) {
            return Err(Error::domain("rsma.theta", format!("{t} outside [0, 1]")));
        }
        if self.paths == 0 {
            return Err(Error::domain("rsma.paths", "must be >= 1"));
        }
        if !(self.p_total.is_finite() && self.p_total > 0.0) {
            return Err(Error::domain("rsma.p_total", "must be finite and > 0"));
        }
        if !(0.0..=1.0).contains(&self.common_fraction) {
            return Err(Error::domain("rsma.common_fraction", "must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// Per-user channels, shared precoders and ISIC factors.
#[derive(Debug, Clone, PartialEq)]
pub struct RsmaScenario {
    pub precoders: Precoders,
    pub channels: Vec<ChannelSet>,
    pub theta: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UserSinr {
    pub user: usize,
    pub theta: f64,
    pub sinr_common: f64,
    pub sinr_private: f64,
    /// Desired power through the true channel (diagnostic).
    pub sinr_common_true_h: f64,
    pub sinr_private_true_h: f64,
}

impl RsmaScenario {
    /// Draws precoders, per-user path channels and their estimates from
    /// `setup.seed` on an `m x n` delay-Doppler lattice.
    pub fn generate(m: usize, n: usize, setup: &RsmaSetup) -> Result<Self> {
        setup.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(setup.seed);
        let precoders = Precoders::random(m * n, setup.users, setup.p_total, setup.common_fraction, &mut rng)?;
        let mut channels = Vec::with_capacity(setup.users);
        for _ in 0..setup.users {
            let h_true = random_dd_channel(m, n, setup.paths, &mut rng);
            let h_est = draw_channel_estimate(&h_true, setup.sigma_e_sq, rng.next_u64())?;
            channels.push(ChannelSet {
                h_true,
                h_est,
                sigma_e_sq: setup.sigma_e_sq,
                sigma_n_sq: setup.sigma_n_sq,
            });
        }
        Ok(RsmaScenario {
            precoders,
            channels,
            theta: setup.theta.clone(),
        })
    }

    /// LMMSE filters for user `k`, designed on its estimated channel.
    pub fn filters(&self, k: usize) -> Result<SinrInputs> {
        let ch = &self.channels[k];
        let f = lmmse_filters(&ch.h_est, &self.precoders, ch.sigma_n_sq, ch.sigma_e_sq)?;
        Ok(SinrInputs {
            w_common: f.common,
            w_private: f.private[k].clone(),
            theta: self.theta[k],
        })
    }

    pub fn evaluate_user(&self, k: usize) -> Result<UserSinr> {
        let inp = self.filters(k)?;
        let ch = &self.channels[k];
        let pre = &self.precoders;
        let (sn, se) = (ch.sigma_n_sq, ch.sigma_e_sq);
        Ok(UserSinr {
            user: k,
            theta: inp.theta,
            sinr_common: sinr_common(&inp, &ch.h_est, pre, sn, se)?,
            sinr_private: sinr_private(&inp, &ch.h_est, pre, k, sn, se)?,
            sinr_common_true_h: sinr_common_with_signal(&inp, &ch.h_true, &ch.h_est, pre, sn, se)?,
            sinr_private_true_h: sinr_private_with_signal(&inp, &ch.h_true, &ch.h_est, pre, k, sn, se)?,
        })
    }

    pub fn evaluate(&self) -> Result<Vec<UserSinr>> {
        (0..self.channels.len()).map(|k| self.evaluate_user(k)).collect()
    }
}
