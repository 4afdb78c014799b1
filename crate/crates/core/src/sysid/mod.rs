//! Data-driven estimation: rational fitting of the nominal interconnection, Laguerre-basis
//! estimation of the sensitivity, and zeroth-order residue estimation.

pub mod fit;
pub mod laguerre;
pub mod zo;

pub use fit::{
    coefficient_error, fit_rational, fit_rational_auto, frequency_grid, identify_matrix,
    fit_rational_levi, measure_response_direct, measure_response_sine, FreqSample, IdentifyOptions, MatrixFit,
    MeasureMode, SineOptions,
};
pub use laguerre::{
    h2_distance, laguerre_coeffs_projection, laguerre_coeffs_zeroth, reduce_order, LaguerreBasis,
};
pub use zo::{sphere_sample, zo_gradient, zo_residue_estimate, ZoConfig};
