//! Impaired transmission model: symbols, framing, analog waveform, channel,
//! heterodyne detection and jittered sampling.

mod frame;
mod sampling;
mod symbols;
mod waveform;

pub use frame::{FrameSchedule, Slot, SlotKind, GUARD_SLOTS};
pub use sampling::{sample_with_jitter, sample_with_model, JitterModel, SampledTrace};
pub use symbols::{apply_dac_quantization, apply_modulator_leakage, gen_gmcs_symbols, SymbolBlock};
pub use waveform::{
    heterodyne_detect, propagate_channel, synthesize_waveform, AnalogTrace, SlowPhaseModel, WaveformConfig,
};

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::model::SystemParams;

/// Simulator knobs that are not physical system parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    pub oversample: u32,
    pub rolloff: f64,
    pub span_slots: usize,
    /// Quantum symbols per simulated block.
    pub block_pulses: usize,
    pub slow_step_rad: f64,
    pub slow_frame_slots: usize,
    pub slow_bound_rad: f64,
    pub enable_dac: bool,
    pub enable_leakage: bool,
    pub enable_rin: bool,
    pub enable_fast_phase: bool,
    pub enable_slow_phase: bool,
    pub enable_jitter: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            oversample: 8,
            rolloff: 0.5,
            span_slots: 8,
            block_pulses: 1_000_000,
            slow_step_rad: 1e-3,
            slow_frame_slots: 10_000,
            slow_bound_rad: std::f64::consts::PI,
            enable_dac: true,
            enable_leakage: true,
            enable_rin: true,
            enable_fast_phase: true,
            enable_slow_phase: true,
            enable_jitter: true,
        }
    }
}

impl SimConfig {
    /// Every impairment switched off.
    pub fn clean() -> Self {
        SimConfig {
            enable_dac: false,
            enable_leakage: false,
            enable_rin: false,
            enable_fast_phase: false,
            enable_slow_phase: false,
            enable_jitter: false,
            ..Default::default()
        }
    }

    pub fn waveform(&self) -> WaveformConfig {
        WaveformConfig { oversample: self.oversample, rolloff: self.rolloff, span_slots: self.span_slots }
    }
}

/// Received pilot amplitude giving the configured per-slot pilot SNR.
pub fn pilot_amplitude(p: &SystemParams) -> f64 {
    let snr = 10f64.powf(p.pilot_snr_db / 10.0);
    (snr * p.vacuum_plus_electronic() / (p.eta * p.transmittance())).sqrt()
}

/// Injected phase trajectories, kept for oracle comparisons.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseLedger {
    pub fast: Vec<f64>,
    pub slow: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Simulation {
    /// Alice's ideal symbols (the reference for estimation).
    pub alice: SymbolBlock,
    pub frame: FrameSchedule,
    pub trace: SampledTrace,
    pub ledger: PhaseLedger,
}

/// Stream ids keep each impairment's randomness independent of the others.
mod stream {
    pub const DAC: u64 = 1;
    pub const LEAKAGE: u64 = 2;
    pub const CHANNEL: u64 = 3;
    pub const DETECTOR: u64 = 4;
    pub const JITTER: u64 = 5;
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

/// Run the full transmitter-channel-receiver chain for one block.
pub fn simulate(params: &SystemParams, cfg: &SimConfig, seed: u64) -> Result<Simulation> {
    let mut p = params.clone();
    if !cfg.enable_rin {
        p.rin_sig = 0.0;
        p.rin_lo = 0.0;
    }
    if !cfg.enable_fast_phase {
        p.linewidth_alice = 0.0;
        p.linewidth_bob = 0.0;
    }
    if !cfg.enable_jitter {
        p.jitter_ppm = 0.0;
    }

    let alice = gen_gmcs_symbols(cfg.block_pulses, p.v_a, seed)?;
    let frame = FrameSchedule::build(alice.len(), p.pilot_ratio, pilot_amplitude(&p));
    let mut tx = alice.clone();
    if cfg.enable_dac {
        tx = apply_dac_quantization(&tx, p.dac_rel_error, &mut rng_for(seed, stream::DAC))?;
    }
    if cfg.enable_leakage {
        tx = apply_modulator_leakage(&frame, &tx, p.extinction_db, &mut rng_for(seed, stream::LEAKAGE))?;
    }
    let analog = synthesize_waveform(&frame, &tx, &p, &cfg.waveform())?;

    let mut ch_rng = rng_for(seed, stream::CHANNEL);
    let slow = if cfg.enable_slow_phase {
        let initial = 2.0 * std::f64::consts::PI * rand::Rng::gen::<f64>(&mut ch_rng);
        SlowPhaseModel::RandomWalk {
            initial,
            step_std: cfg.slow_step_rad,
            frame_slots: cfg.slow_frame_slots,
            bound: cfg.slow_bound_rad,
        }
    } else {
        SlowPhaseModel::Frozen(0.0)
    };
    let received = propagate_channel(&analog, &p, &slow, &mut ch_rng);
    drop(analog);
    let mut detected = heterodyne_detect(&received, &p, &mut rng_for(seed, stream::DETECTOR));
    drop(received);
    if !cfg.enable_fast_phase {
        // Keep a fixed LO phase offset but no diffusion.
        debug_assert!(detected.fast_phase.windows(2).all(|w| w[0] == w[1]));
    }
    let trace = sample_with_jitter(&detected, &p, &mut rng_for(seed, stream::JITTER))?;
    let ledger = PhaseLedger {
        fast: std::mem::take(&mut detected.fast_phase),
        slow: std::mem::take(&mut detected.slow_phase),
    };
    Ok(Simulation { alice, frame, trace, ledger })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::validate_params;

    #[test]
    fn identical_seeds_identical_traces() {
        let p = validate_params(SystemParams::preset_80km()).unwrap();
        let cfg = SimConfig { block_pulses: 2000, ..Default::default() };
        let a = simulate(&p, &cfg, 77).unwrap();
        let b = simulate(&p, &cfg, 77).unwrap();
        assert_eq!(a.trace, b.trace);
        let c = simulate(&p, &cfg, 78).unwrap();
        assert_ne!(a.trace.samples, c.trace.samples);
    }

    #[test]
    fn pilot_snr_definition() {
        let p = validate_params(SystemParams::preset_80km()).unwrap();
        let a = pilot_amplitude(&p);
        let rx = a * a * p.eta * p.transmittance();
        assert!((10.0 * (rx / (1.0 + p.v_el)).log10() - 20.0).abs() < 1e-9);
    }
}
