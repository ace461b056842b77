use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use super::frame::{FrameSchedule, SlotKind};
use super::symbols::SymbolBlock;
use crate::error::{Error, Result};
use crate::model::SystemParams;
use crate::pulse::PulseShape;

/// Longest trace we agree to synthesize, in slots.
const MAX_SLOTS: usize = 1 << 32;

/// Optical field or photocurrent on a fine uniform grid.
///
/// The waveform is held as one complex amplitude per slot, shaped by `pulse`
/// and riding on a carrier at `carrier_hz` (fields are expressed in the frame
/// of Bob's LO frequency, so Alice's carrier sits at the beat frequency).
/// Fine-grid samples are rendered on demand in bounded chunks.
#[derive(Debug, Clone)]
pub struct AnalogTrace {
    pub t0: f64,
    pub dt: f64,
    pub n_samples: usize,
    pub carrier_hz: f64,
    pub pulse: PulseShape,
    pub slots: Vec<Complex64>,
    pub frame: Arc<FrameSchedule>,
    /// Cleared when electronic noise is not dominated by shot noise.
    pub shot_noise_limited: bool,
    /// Fast phase applied at detection, one value per slot (rad).
    pub fast_phase: Vec<f64>,
    /// Slow channel phase applied to quantum slots, one value per slot (rad).
    pub slow_phase: Vec<f64>,
}

impl AnalogTrace {
    pub fn slot_period(&self) -> f64 {
        self.pulse.period
    }

    /// Time of fine-grid sample `j`.
    pub fn time(&self, j: usize) -> f64 {
        self.t0 + j as f64 * self.dt
    }

    /// Complex envelope at an arbitrary instant, summed directly over nearby slots.
    pub fn envelope_at(&self, t: f64) -> Complex64 {
        let ts = self.slot_period();
        let centre = t / ts - 0.5;
        let span = self.pulse.span_slots as f64;
        let lo = (centre - span).ceil().max(0.0) as usize;
        let hi = ((centre + span).floor() as isize).min(self.slots.len() as isize - 1);
        let mut acc = Complex64::new(0.0, 0.0);
        if hi < 0 {
            return acc;
        }
        for s in lo..=hi as usize {
            acc += self.slots[s] * self.pulse.value(t - (s as f64 + 0.5) * ts);
        }
        acc
    }

    /// Complex envelope on fine-grid samples `start..start+len`.
    pub fn render_envelope(&self, start: usize, len: usize) -> Vec<Complex64> {
        let ts = self.slot_period();
        let ratio = ts / self.dt;
        let per_slot = ratio.round() as usize;
        let offset = -self.t0 / self.dt;
        let aligned = (ratio - per_slot as f64).abs() < 1e-9 && (offset - offset.round()).abs() < 1e-9;
        if !aligned {
            return (start..start + len).map(|j| self.envelope_at(self.time(j))).collect();
        }
        // Polyphase table: tap k of phase q is the pulse seen from slot (b - k).
        let span = self.pulse.span_slots as isize;
        let taps = (2 * span + 1) as usize;
        let mut table = vec![0.0; per_slot * taps];
        for q in 0..per_slot {
            for k in -span..=span {
                let rel = k as f64 * ts + q as f64 * self.dt - 0.5 * ts;
                table[q * taps + (k + span) as usize] = self.pulse.value(rel);
            }
        }
        let off = offset.round() as isize;
        let n_slots = self.slots.len() as isize;
        let mut out = Vec::with_capacity(len);
        for j in start..start + len {
            let g = j as isize - off;
            let b = g.div_euclid(per_slot as isize);
            let q = g.rem_euclid(per_slot as isize) as usize;
            let row = &table[q * taps..(q + 1) * taps];
            let mut acc = Complex64::new(0.0, 0.0);
            let s_lo = (b - span).max(0);
            let s_hi = (b + span).min(n_slots - 1);
            for s in s_lo..=s_hi {
                acc += self.slots[s as usize] * row[(b - s + span) as usize];
            }
            out.push(acc);
        }
        out
    }

    /// Real passband samples Re{envelope · e^(i2π f_c t)} on the fine grid.
    pub fn render(&self, start: usize, len: usize) -> Vec<f64> {
        let env = self.render_envelope(start, len);
        env.iter()
            .enumerate()
            .map(|(i, e)| {
                let t = self.time(start + i);
                let (s, c) = (2.0 * PI * self.carrier_hz * t).sin_cos();
                e.re * c - e.im * s
            })
            .collect()
    }
}

/// Grid layout for the fine analog trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WaveformConfig {
    pub oversample: u32,
    pub rolloff: f64,
    pub span_slots: usize,
}

impl Default for WaveformConfig {
    fn default() -> Self {
        WaveformConfig { oversample: 8, rolloff: 0.5, span_slots: 8 }
    }
}

/// Place quantum symbols and pilot tones into their slots.
pub fn synthesize_waveform(
    frame: &FrameSchedule,
    block: &SymbolBlock,
    params: &SystemParams,
    cfg: &WaveformConfig,
) -> Result<AnalogTrace> {
    let n = frame.len();
    if n > MAX_SLOTS {
        return Err(Error::InvalidInput(format!("duration overflow: {n} slots")));
    }
    if cfg.oversample == 0 {
        return Err(Error::InvalidInput("oversample factor must be positive".into()));
    }
    let ts = 1.0 / params.f_rep;
    let dt = 1.0 / (params.f_samp * cfg.oversample as f64);
    let pulse = PulseShape::new(ts, cfg.rolloff, cfg.span_slots);
    let margin = pulse.half_width();
    let t0 = -(margin / dt).ceil() * dt;
    let duration = n as f64 * ts + margin - t0;
    let n_samples = (duration / dt).ceil() as usize + 1;
    let pilot = Complex64::new(frame.pilot_amplitude, 0.0);
    let slots = frame
        .slots
        .iter()
        .map(|s| match s.kind {
            SlotKind::Pilot => pilot,
            SlotKind::Quantum => Complex64::new(block.x_a[s.index], block.p_a[s.index]),
        })
        .collect();
    Ok(AnalogTrace {
        t0,
        dt,
        n_samples,
        carrier_hz: params.delta_f_ab,
        pulse,
        slots,
        frame: Arc::new(frame.clone()),
        shot_noise_limited: true,
        fast_phase: vec![0.0; n],
        slow_phase: vec![0.0; n],
    })
}

/// Phase difference between the signal and pilot paths through the fibre.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SlowPhaseModel {
    Frozen(f64),
    /// Random walk updated every `frame_slots` slots with Gaussian steps of
    /// standard deviation `step_std`, reflected to stay within `bound` of the start.
    RandomWalk { initial: f64, step_std: f64, frame_slots: usize, bound: f64 },
}

impl SlowPhaseModel {
    pub fn realize<R: Rng>(&self, n_slots: usize, rng: &mut R) -> Vec<f64> {
        match *self {
            SlowPhaseModel::Frozen(phi) => vec![phi; n_slots],
            SlowPhaseModel::RandomWalk { initial, step_std, frame_slots, bound } => {
                let frame_slots = frame_slots.max(1);
                let n_knots = n_slots / frame_slots + 2;
                let mut knots = Vec::with_capacity(n_knots);
                let mut dev = 0.0f64;
                for _ in 0..n_knots {
                    knots.push(initial + dev);
                    let z: f64 = rng.sample(StandardNormal);
                    dev += step_std * z;
                    if bound > 0.0 {
                        while dev.abs() > bound {
                            dev = dev.signum() * 2.0 * bound - dev;
                        }
                    }
                }
                (0..n_slots)
                    .map(|s| {
                        let k = s / frame_slots;
                        let f = (s % frame_slots) as f64 / frame_slots as f64;
                        knots[k] * (1.0 - f) + knots[k + 1] * f
                    })
                    .collect()
            }
        }
    }
}

fn rin_sigma(rin: f64, band: f64) -> f64 {
    (rin * band).sqrt()
}

/// Fibre loss, slow differential phase on quantum slots and signal-laser RIN.
///
/// The per-slot amplitude fluctuation is scaled so that its contribution to the
/// excess noise reproduces the closed-form RIN term.
pub fn propagate_channel<R: Rng>(
    trace: &AnalogTrace,
    params: &SystemParams,
    slow: &SlowPhaseModel,
    rng: &mut R,
) -> AnalogTrace {
    let t = params.transmittance();
    let gain = t.sqrt();
    let phases = slow.realize(trace.slots.len(), rng);
    let rin_var = t * rin_sigma(params.rin_sig, params.b_sig);
    let rin = Normal::new(0.0, rin_var.sqrt()).expect("finite sigma");
    let mut out = trace.clone();
    for (s, amp) in out.slots.iter_mut().enumerate() {
        let mut a = *amp * gain;
        if rin_var > 0.0 {
            a *= 1.0 + rin.sample(rng);
        }
        if trace.frame.slots[s].kind == SlotKind::Quantum {
            a *= Complex64::from_polar(1.0, phases[s]);
        }
        *amp = a;
    }
    for (acc, ph) in out.slow_phase.iter_mut().zip(&phases) {
        *acc += ph;
    }
    out
}

/// Beat against Bob's LO: efficiency η, LO intensity noise, laser phase
/// diffusion from both linewidths, and shot plus electronic noise projected
/// onto each pulse mode.
pub fn heterodyne_detect<R: Rng>(trace: &AnalogTrace, params: &SystemParams, rng: &mut R) -> AnalogTrace {
    let ts = trace.slot_period();
    let gain = params.eta.sqrt();
    let diffusion = 2.0 * PI * (params.linewidth_alice + params.linewidth_bob) * ts;
    let lo_var = params.transmittance() * 0.25 * params.rin_lo * params.b_lo;
    let lo = Normal::new(0.0, lo_var.sqrt()).expect("finite sigma");
    let noise = Normal::new(0.0, params.vacuum_plus_electronic().sqrt()).expect("finite sigma");
    let step = Normal::new(0.0, diffusion.sqrt()).expect("finite sigma");

    let mut out = trace.clone();
    let mut phi = 2.0 * PI * rng.gen::<f64>();
    for (s, amp) in out.slots.iter_mut().enumerate() {
        let mut a = *amp * gain;
        if lo_var > 0.0 {
            a *= 1.0 + lo.sample(rng);
        }
        a *= Complex64::from_polar(1.0, phi);
        out.fast_phase[s] += phi;
        *amp = a + Complex64::new(noise.sample(rng), noise.sample(rng));
        if diffusion > 0.0 {
            phi += step.sample(rng);
        }
    }
    out.shot_noise_limited = params.v_el < 1.0;
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::validate_params;
    use crate::simulator::gen_gmcs_symbols;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small_setup(n: usize, amp: f64) -> (FrameSchedule, SymbolBlock, SystemParams) {
        let p = validate_params(SystemParams::preset_80km()).unwrap();
        let b = gen_gmcs_symbols(n, p.v_a, 1).unwrap();
        (FrameSchedule::build(n, 1, amp), b, p)
    }

    #[test]
    fn pilot_slot_is_a_cosine_at_the_carrier() {
        let (f, mut b, p) = small_setup(4, 2.0);
        b.x_a.iter_mut().for_each(|v| *v = 0.0);
        b.p_a.iter_mut().for_each(|v| *v = 0.0);
        let tr = synthesize_waveform(&f, &b, &p, &WaveformConfig::default()).unwrap();
        let ts = tr.slot_period();
        // Centre of the first guard pilot.
        let j0 = ((0.5 * ts - tr.t0) / tr.dt).round() as usize;
        let env = tr.render_envelope(j0, 1)[0];
        assert!((env.im).abs() < 1e-12);
        let real = tr.render(j0, 1)[0];
        let t = tr.time(j0);
        assert!((real - env.re * (2.0 * PI * p.delta_f_ab * t).cos()).abs() < 1e-12);
    }

    #[test]
    fn rendered_envelope_matches_direct_sum() {
        let (f, b, p) = small_setup(20, 5.0);
        let tr = synthesize_waveform(&f, &b, &p, &WaveformConfig::default()).unwrap();
        let fast = tr.render_envelope(300, 2000);
        for (i, v) in fast.iter().enumerate().step_by(37) {
            let d = tr.envelope_at(tr.time(300 + i));
            assert!((v - d).norm() < 1e-12, "{i}: {v} vs {d}");
        }
    }

    #[test]
    fn zero_block_and_pilot_gives_zero_trace() {
        let (f, mut b, p) = small_setup(8, 0.0);
        b.x_a.iter_mut().for_each(|v| *v = 0.0);
        b.p_a.iter_mut().for_each(|v| *v = 0.0);
        let tr = synthesize_waveform(&f, &b, &p, &WaveformConfig::default()).unwrap();
        assert!(tr.render(0, tr.n_samples).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn spectrum_peaks_at_carrier() {
        let (f, b, p) = small_setup(400, 10.0);
        let tr = synthesize_waveform(&f, &b, &p, &WaveformConfig::default()).unwrap();
        let n = 1 << 14;
        let x = tr.render(0, n);
        let mut planner = rustfft::FftPlanner::new();
        let fft = planner.plan_fft_forward(n);
        let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        fft.process(&mut buf);
        let (k, _) = buf[1..n / 2].iter().enumerate().fold((0, 0.0), |best, (i, c)| {
            if c.norm() > best.1 {
                (i + 1, c.norm())
            } else {
                best
            }
        });
        let res = 1.0 / (n as f64 * tr.dt);
        assert!((k as f64 * res - p.delta_f_ab).abs() <= res, "{}", k as f64 * res);
    }

    #[test]
    fn channel_scales_power_by_transmittance() {
        let (f, b, p) = small_setup(50, 3.0);
        let p = SystemParams { rin_sig: 0.0, ..p };
        let tr = synthesize_waveform(&f, &b, &p, &WaveformConfig::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let out = propagate_channel(&tr, &p, &SlowPhaseModel::Frozen(0.0), &mut rng);
        for (a, b) in tr.slots.iter().zip(&out.slots) {
            assert!((b.norm_sqr() - 0.025119 * a.norm_sqr()).abs() < 1e-6 * a.norm_sqr().max(1e-12));
        }
    }

    #[test]
    fn lossless_channel_is_identity_without_rin() {
        let (f, b, p) = small_setup(50, 3.0);
        let p = validate_params(SystemParams { fiber_length_km: 0.0, rin_sig: 0.0, ..p }).unwrap();
        let tr = synthesize_waveform(&f, &b, &p, &WaveformConfig::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let out = propagate_channel(&tr, &p, &SlowPhaseModel::Frozen(0.0), &mut rng);
        assert_eq!(out.slots, tr.slots);
    }

    #[test]
    fn frozen_slow_phase_rotates_quantum_slots() {
        let (f, b, p) = small_setup(50, 3.0);
        let p = validate_params(SystemParams { fiber_length_km: 0.0, rin_sig: 0.0, ..p }).unwrap();
        let tr = synthesize_waveform(&f, &b, &p, &WaveformConfig::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let out = propagate_channel(&tr, &p, &SlowPhaseModel::Frozen(0.7), &mut rng);
        for (s, slot) in f.slots.iter().enumerate() {
            let want = match slot.kind {
                SlotKind::Quantum => tr.slots[s] * Complex64::from_polar(1.0, 0.7),
                SlotKind::Pilot => tr.slots[s],
            };
            assert!((out.slots[s] - want).norm() < 1e-12);
        }
    }

    #[test]
    fn random_walk_stays_bounded() {
        let m = SlowPhaseModel::RandomWalk { initial: 1.0, step_std: 0.5, frame_slots: 10, bound: 0.3 };
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let v = m.realize(10_000, &mut rng);
        assert!(v.iter().all(|x| (x - 1.0).abs() <= 0.3 + 1e-12));
    }

    #[test]
    fn vacuum_input_gives_shot_plus_electronic_noise() {
        let (f, mut b, p) = small_setup(200_000, 0.0);
        b.x_a.iter_mut().for_each(|v| *v = 0.0);
        b.p_a.iter_mut().for_each(|v| *v = 0.0);
        let tr = synthesize_waveform(&f, &b, &p, &WaveformConfig::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let det = heterodyne_detect(&tr, &p, &mut rng);
        let n = det.slots.len() as f64;
        let var = det.slots.iter().map(|c| c.re * c.re).sum::<f64>() / n;
        let want = 1.0 + p.v_el;
        assert!((var - want).abs() < 3.0 * want * (2.0 / n).sqrt(), "{var}");
        assert!(det.shot_noise_limited);
    }

    #[test]
    fn zero_linewidth_gives_constant_fast_phase() {
        let (f, b, p) = small_setup(100, 3.0);
        let p = SystemParams { linewidth_alice: 0.0, linewidth_bob: 0.0, delta_f_ab: 0.0, ..p };
        let tr = synthesize_waveform(&f, &b, &p, &WaveformConfig::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let det = heterodyne_detect(&tr, &p, &mut rng);
        assert!(det.fast_phase.windows(2).all(|w| w[0] == w[1]));
    }
}
