//! Delay-Doppler Cramér-Rao bounds for OTFS sensing with a delay-dependent
//! echo gain, and refined RSMA SINR under imperfect CSI and imperfect SIC.

pub mod echo;
pub mod error;
pub mod fim;
pub mod otfs;
pub mod rsma;
pub mod validation;

pub use echo::{d_nu, d_tau, derivative_bundle, mean_dd_signal, DerivativeBundle, EchoParams, GainModel};
pub use error::{Error, FimEntry, Result};
pub use fim::{crb_from_fim, crb_pipeline, fim_assemble, fim_sums, CrbResult, Fim, FimSums};
pub use otfs::{isfft, phase, sfft, DdVector, OtfsGrid, TfSymbols};
