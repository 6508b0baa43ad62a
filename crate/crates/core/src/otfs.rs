//! OTFS lattice definitions and the symplectic finite Fourier transform pair.
//!
//! Time-frequency symbols are indexed `[n, i]` with `n` the OTFS symbol
//! (Doppler side, `0..N`) and `i` the subcarrier (delay side, `0..M`).
//! Delay-Doppler vectors are flattened row-major as `l * M + k` with Doppler
//! index `l in 0..N` outer and delay index `k in 0..M` inner.
//!
//! The transforms are evaluated as direct double sums. Twiddles are read from
//! per-axis tables (`e^{-j2pi r/N}`, `e^{+j2pi r/M}`), so the summation is the
//! textbook kernel without an FFT shortcut.

use std::f64::consts::TAU;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Delay-Doppler lattice: `M` delay bins (subcarriers), `N` Doppler bins
/// (symbols), subcarrier spacing and symbol duration.
///
/// `T * delta_f = 1` is not enforced.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OtfsGrid {
    m_delay_bins: usize,
    n_doppler_bins: usize,
    delta_f: f64,
    symbol_duration: f64,
}

impl OtfsGrid {
    pub fn new(
        m_delay_bins: usize,
        n_doppler_bins: usize,
        delta_f: f64,
        symbol_duration: f64,
    ) -> Result<Self> {
        if m_delay_bins == 0 {
            return Err(Error::domain("grid.m", "must be >= 1"));
        }
        if n_doppler_bins == 0 {
            return Err(Error::domain("grid.n", "must be >= 1"));
        }
        if !(delta_f.is_finite() && delta_f > 0.0) {
            return Err(Error::domain("grid.delta_f", "must be finite and > 0"));
        }
        if !(symbol_duration.is_finite() && symbol_duration > 0.0) {
            return Err(Error::domain(
                "grid.symbol_duration",
                "must be finite and > 0",
            ));
        }
        Ok(OtfsGrid {
            m_delay_bins,
            n_doppler_bins,
            delta_f,
            symbol_duration,
        })
    }

    /// `M`, number of subcarriers / delay bins.
    pub fn m(&self) -> usize {
        self.m_delay_bins
    }

    /// `N`, number of symbols / Doppler bins.
    pub fn n(&self) -> usize {
        self.n_doppler_bins
    }

    pub fn delta_f(&self) -> f64 {
        self.delta_f
    }

    pub fn symbol_duration(&self) -> f64 {
        self.symbol_duration
    }

    /// `N_dd = M * N`.
    pub fn n_dd(&self) -> usize {
        self.m_delay_bins * self.n_doppler_bins
    }

    /// Flat delay-Doppler cell id for Doppler index `l` and delay index `k`.
    pub fn cell(&self, l: usize, k: usize) -> usize {
        debug_assert!(l < self.n_doppler_bins && k < self.m_delay_bins);
        l * self.m_delay_bins + k
    }

    /// Inverse of [`OtfsGrid::cell`].
    pub fn cell_coords(&self, cell: usize) -> (usize, usize) {
        (cell / self.m_delay_bins, cell % self.m_delay_bins)
    }

    /// Width of one delay resolution cell, `1 / (M delta_f)`.
    pub fn delay_resolution(&self) -> f64 {
        1.0 / (self.m_delay_bins as f64 * self.delta_f)
    }

    /// Width of one Doppler resolution cell, `1 / (N T)`.
    pub fn doppler_resolution(&self) -> f64 {
        1.0 / (self.n_doppler_bins as f64 * self.symbol_duration)
    }
}

/// Time-frequency symbol matrix `X[n, i]`, shape `N x M`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct TfSymbols {
    rows: usize,
    cols: usize,
    values: Vec<Complex64>,
}

impl TfSymbols {
    pub fn zeros(grid: &OtfsGrid) -> Self {
        TfSymbols {
            rows: grid.n(),
            cols: grid.m(),
            values: vec![Complex64::new(0.0, 0.0); grid.n_dd()],
        }
    }

    /// One unit symbol at `[n, i]`, zero elsewhere.
    pub fn single_pilot(grid: &OtfsGrid, n: usize, i: usize) -> Result<Self> {
        if n >= grid.n() {
            return Err(Error::domain("pilot.n", format!("must be < N = {}", grid.n())));
        }
        if i >= grid.m() {
            return Err(Error::domain("pilot.i", format!("must be < M = {}", grid.m())));
        }
        let mut x = Self::zeros(grid);
        x.values[n * grid.m() + i] = Complex64::new(1.0, 0.0);
        Ok(x)
    }

    /// Every symbol equal to `1 + 0j`.
    pub fn uniform_unit(grid: &OtfsGrid) -> Self {
        TfSymbols {
            rows: grid.n(),
            cols: grid.m(),
            values: vec![Complex64::new(1.0, 0.0); grid.n_dd()],
        }
    }

    /// Row-major values (`n * M + i`).
    pub fn from_values(grid: &OtfsGrid, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != grid.n_dd() {
            return Err(Error::Dimension {
                what: "TF symbols",
                expected: grid.n_dd(),
                got: values.len(),
            });
        }
        Ok(TfSymbols {
            rows: grid.n(),
            cols: grid.m(),
            values,
        })
    }

    pub fn from_fn(grid: &OtfsGrid, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut values = Vec::with_capacity(grid.n_dd());
        for n in 0..grid.n() {
            for i in 0..grid.m() {
                values.push(f(n, i));
            }
        }
        TfSymbols {
            rows: grid.n(),
            cols: grid.m(),
            values,
        }
    }

    /// Number of rows, `N`.
    pub fn rows(&self) -> usize {
        self.rows
    }

    /// Number of columns, `M`.
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, n: usize, i: usize) -> Complex64 {
        self.values[n * self.cols + i]
    }

    pub fn set(&mut self, n: usize, i: usize, value: Complex64) {
        self.values[n * self.cols + i] = value;
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.values
    }

    pub fn norm_sqr(&self) -> f64 {
        self.values.iter().map(|v| v.norm_sqr()).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub(crate) fn check_shape(&self, grid: &OtfsGrid) -> Result<()> {
        if self.rows != grid.n() {
            return Err(Error::Dimension {
                what: "TF symbol rows (N)",
                expected: grid.n(),
                got: self.rows,
            });
        }
        if self.cols != grid.m() {
            return Err(Error::Dimension {
                what: "TF symbol columns (M)",
                expected: grid.m(),
                got: self.cols,
            });
        }
        Ok(())
    }
}

/// Delay-Doppler vector, flat index `l * M + k`.
#[derive(Debug, Clone, PartialEq)]
pub struct DdVector {
    values: Vec<Complex64>,
}

impl DdVector {
    pub fn zeros(len: usize) -> Self {
        DdVector {
            values: vec![Complex64::new(0.0, 0.0); len],
        }
    }

    pub fn from_vec(values: Vec<Complex64>) -> Self {
        DdVector { values }
    }

    /// Unit impulse at flat cell `cell`.
    pub fn impulse(grid: &OtfsGrid, cell: usize) -> Self {
        let mut v = Self::zeros(grid.n_dd());
        v.values[cell] = Complex64::new(1.0, 0.0);
        v
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.values
    }

    pub fn into_vec(self) -> Vec<Complex64> {
        self.values
    }

    pub fn get(&self, grid: &OtfsGrid, l: usize, k: usize) -> Complex64 {
        self.values[grid.cell(l, k)]
    }

    pub fn norm_sqr(&self) -> f64 {
        self.values.iter().map(|v| v.norm_sqr()).sum()
    }

    /// Hermitian inner product `self^H other`.
    pub fn inner(&self, other: &DdVector) -> Complex64 {
        debug_assert_eq!(self.len(), other.len());
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    pub fn scaled(&self, c: Complex64) -> DdVector {
        DdVector {
            values: self.values.iter().map(|v| v * c).collect(),
        }
    }

    pub fn add(&self, other: &DdVector) -> DdVector {
        debug_assert_eq!(self.len(), other.len());
        DdVector {
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a + b)
                .collect(),
        }
    }

    pub fn sub(&self, other: &DdVector) -> DdVector {
        debug_assert_eq!(self.len(), other.len());
        DdVector {
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a - b)
                .collect(),
        }
    }
}

/// Phase of one term of the echo kernel,
/// `2 pi [ n (nu T - l/N) - i (tau delta_f - k/M) ]`.
pub fn phase(n: usize, i: usize, l: usize, k: usize, nu: f64, tau: f64, grid: &OtfsGrid) -> f64 {
    let doppler = n as f64 * (nu * grid.symbol_duration() - l as f64 / grid.n() as f64);
    let delay = i as f64 * (tau * grid.delta_f() - k as f64 / grid.m() as f64);
    TAU * (doppler - delay)
}

struct Twiddles {
    doppler: Vec<Complex64>,
    delay: Vec<Complex64>,
}

impl Twiddles {
    /// `sign = -1` for the forward transform, `+1` for the inverse.
    fn new(grid: &OtfsGrid, sign: f64) -> Self {
        let n = grid.n();
        let m = grid.m();
        let doppler = (0..n)
            .map(|r| Complex64::from_polar(1.0, sign * TAU * r as f64 / n as f64))
            .collect();
        let delay = (0..m)
            .map(|r| Complex64::from_polar(1.0, -sign * TAU * r as f64 / m as f64))
            .collect();
        Twiddles { doppler, delay }
    }
}

/// Unnormalized forward kernel sum
/// `sum_{n,i} w[n,i] e^{-j2pi(nl/N - ik/M)}` for every cell `(l, k)`.
///
/// Outer loop over `n`, inner over `i`, accumulated in that order.
pub(crate) fn forward_kernel_sum(weights: &[Complex64], grid: &OtfsGrid) -> Vec<Complex64> {
    let (n_sym, m_sub) = (grid.n(), grid.m());
    let tw = Twiddles::new(grid, -1.0);
    (0..grid.n_dd())
        .into_par_iter()
        .map(|cell| {
            let (l, k) = grid.cell_coords(cell);
            let mut acc = Complex64::new(0.0, 0.0);
            for n in 0..n_sym {
                let dop = tw.doppler[(n * l) % n_sym];
                let row = &weights[n * m_sub..(n + 1) * m_sub];
                let mut inner = Complex64::new(0.0, 0.0);
                for (i, w) in row.iter().enumerate() {
                    inner += w * tw.delay[(i * k) % m_sub];
                }
                acc += dop * inner;
            }
            acc
        })
        .collect()
}

/// SFFT: `(1/sqrt(MN)) sum_{n,i} x[n,i] e^{-j2pi(nl/N - ik/M)}`.
pub fn sfft(x: &TfSymbols, grid: &OtfsGrid) -> Result<DdVector> {
    x.check_shape(grid)?;
    let scale = 1.0 / (grid.n_dd() as f64).sqrt();
    let mut values = forward_kernel_sum(x.as_slice(), grid);
    values.iter_mut().for_each(|v| *v *= scale);
    Ok(DdVector { values })
}

/// Inverse SFFT: `(1/sqrt(MN)) sum_{l,k} y[l,k] e^{+j2pi(nl/N - ik/M)}`.
pub fn isfft(y: &DdVector, grid: &OtfsGrid) -> Result<TfSymbols> {
    if y.len() != grid.n_dd() {
        return Err(Error::Dimension {
            what: "DD vector",
            expected: grid.n_dd(),
            got: y.len(),
        });
    }
    let (n_sym, m_sub) = (grid.n(), grid.m());
    let tw = Twiddles::new(grid, 1.0);
    let scale = 1.0 / (grid.n_dd() as f64).sqrt();
    let values = (0..grid.n_dd())
        .into_par_iter()
        .map(|tf| {
            let (n, i) = (tf / m_sub, tf % m_sub);
            let mut acc = Complex64::new(0.0, 0.0);
            for l in 0..n_sym {
                let dop = tw.doppler[(n * l) % n_sym];
                let mut inner = Complex64::new(0.0, 0.0);
                for k in 0..m_sub {
                    inner += y.values[l * m_sub + k] * tw.delay[(i * k) % m_sub];
                }
                acc += dop * inner;
            }
            acc * scale
        })
        .collect();
    TfSymbols::from_values(grid, values)
}
