//! Regularisation-filter design and benchmark system design.

mod fir;
mod iir;
mod system;

pub use fir::{
    build_regularisation_filter_matrix, design_fir_windowed, regularisation_gram, BandKind, BandSpec,
    FirDesign,
};
pub use iir::design_cheby1;
pub use system::{filter_signal, frequency_response, impulse_response, is_stable, SystemComponent, SystemSpec};
