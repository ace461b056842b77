//! Receiver signal processing.

mod filter;
mod lsfit;
mod phase;
mod pipeline;
mod spectral;

pub use filter::{butterworth_sections, lowpass_butterworth, magnitude_response, Biquad};
pub use lsfit::{ls_fit_order, ls_fit_pulse, resample_pulse, CubicFit, NormalSolver, PolyFit, MAX_ORDER};
pub use phase::{
    apply_slow_phase, compensate_fast_phase, reduce_angle, rotate, search_slow_phase, slow_phase_correlation,
    PhaseEstimate,
};
pub use pipeline::{disclosed_subset, run_pipeline, DspConfig, PilotInterp, PipelineOutput, PipelineReport};
pub use spectral::{downconvert, estimate_freq_offset, estimate_tone, Baseband, MIN_FFT_LEN};
