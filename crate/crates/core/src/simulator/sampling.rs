use std::f64::consts::PI;
use std::io::{Read, Write};

use num_complex::Complex64;
use rand::Rng;

use super::waveform::AnalogTrace;
use crate::error::{Error, Result};
use crate::model::SystemParams;
use crate::pulse::PulseShape;

const MAGIC: &[u8; 4] = b"CVQT";
const VERSION: u32 = 1;
const CHUNK: usize = 1 << 16;

/// Receiver clock drift: fractional frequency error piecewise linear between
/// knots, starting from zero (clocks agree at the start of the block).
#[derive(Debug, Clone, PartialEq)]
pub struct JitterModel {
    pub knot_spacing: f64,
    /// Fractional frequency error at each knot (dimensionless, not ppm).
    pub knots: Vec<f64>,
    cumulative: Vec<f64>,
}

impl JitterModel {
    pub fn none() -> Self {
        Self::from_knots(1e-3, vec![0.0, 0.0])
    }

    pub fn from_knots(knot_spacing: f64, knots: Vec<f64>) -> Self {
        let mut cumulative = vec![0.0];
        for w in knots.windows(2) {
            let last = *cumulative.last().unwrap();
            cumulative.push(last + 0.5 * (w[0] + w[1]) * knot_spacing);
        }
        JitterModel { knot_spacing, knots, cumulative }
    }

    /// New slope every `knot_spacing` seconds; |ν| never exceeds `ppm`·10⁻⁶.
    pub fn draw<R: Rng>(ppm: f64, duration: f64, knot_spacing: f64, rng: &mut R) -> Self {
        let n = (duration / knot_spacing).ceil() as usize + 2;
        let bound = ppm * 1e-6;
        let mut knots = vec![0.0];
        for _ in 1..n {
            knots.push(if bound > 0.0 { rng.gen_range(-bound..=bound) } else { 0.0 });
        }
        Self::from_knots(knot_spacing, knots)
    }

    pub fn is_zero(&self) -> bool {
        self.knots.iter().all(|&k| k == 0.0)
    }

    /// Accumulated timing offset at nominal time `t` (s).
    pub fn offset(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        let u = t / self.knot_spacing;
        let i = (u.floor() as usize).min(self.knots.len() - 2);
        let f = t - i as f64 * self.knot_spacing;
        let (a, b) = (self.knots[i], self.knots[i + 1]);
        let slope = (b - a) / self.knot_spacing;
        self.cumulative[i] + a * f + 0.5 * slope * f * f
    }

    pub fn max_fraction(&self) -> f64 {
        self.knots.iter().fold(0.0f64, |m, k| m.max(k.abs()))
    }
}

/// ADC output with the realised sampling instants.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledTrace {
    pub samples: Vec<f64>,
    pub actual_times: Vec<f64>,
    pub f_samp: f64,
    pub jitter: JitterModel,
    /// Multiply samples by this to obtain shot-noise units.
    pub snu_scale: f64,
    /// Transmit pulse template (shared knowledge of both parties).
    pub pulse: PulseShape,
}

impl SampledTrace {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn nominal_time(&self, k: usize) -> f64 {
        k as f64 / self.f_samp
    }

    /// 32-byte header then little-endian f64 samples.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let mut hdr = [0u8; 32];
        hdr[..4].copy_from_slice(MAGIC);
        hdr[4..8].copy_from_slice(&VERSION.to_le_bytes());
        hdr[8..16].copy_from_slice(&self.f_samp.to_le_bytes());
        hdr[16..24].copy_from_slice(&(self.samples.len() as u64).to_le_bytes());
        w.write_all(&hdr)?;
        let mut buf = Vec::with_capacity(8 * CHUNK);
        for chunk in self.samples.chunks(CHUNK) {
            buf.clear();
            for v in chunk {
                buf.extend_from_slice(&v.to_le_bytes());
            }
            w.write_all(&buf)?;
        }
        Ok(())
    }

    /// Read a trace file. Sampling instants are not stored, so they are
    /// restored as nominal; the pulse template must be supplied.
    pub fn read_from<R: Read>(mut r: R, pulse: PulseShape) -> Result<Self> {
        let mut hdr = [0u8; 32];
        r.read_exact(&mut hdr)?;
        if &hdr[..4] != MAGIC {
            return Err(Error::TraceFormat("bad magic".into()));
        }
        let version = u32::from_le_bytes(hdr[4..8].try_into().unwrap());
        if version != VERSION {
            return Err(Error::TraceFormat(format!("unsupported version {version}")));
        }
        let f_samp = f64::from_le_bytes(hdr[8..16].try_into().unwrap());
        let count = u64::from_le_bytes(hdr[16..24].try_into().unwrap()) as usize;
        let mut bytes = vec![0u8; count * 8];
        r.read_exact(&mut bytes)?;
        let samples = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        let actual_times = (0..count).map(|k| k as f64 / f_samp).collect();
        Ok(SampledTrace { samples, actual_times, f_samp, jitter: JitterModel::none(), snu_scale: 1.0, pulse })
    }
}

/// Four-point Lagrange weights for nodes -1, 0, 1, 2 at fraction `f`.
fn cubic_weights(f: f64) -> [f64; 4] {
    [
        -f * (f - 1.0) * (f - 2.0) / 6.0,
        (f + 1.0) * (f - 1.0) * (f - 2.0) / 2.0,
        -(f + 1.0) * f * (f - 2.0) / 2.0,
        (f + 1.0) * f * (f - 1.0) / 6.0,
    ]
}

/// Sample the photocurrent at the ADC rate under a drifting receiver clock.
pub fn sample_with_jitter<R: Rng>(trace: &AnalogTrace, params: &SystemParams, rng: &mut R) -> Result<SampledTrace> {
    let duration = trace.slots.len() as f64 * trace.slot_period();
    let jitter = JitterModel::draw(params.jitter_ppm, duration, 1e-3, rng);
    sample_with_model(trace, params.f_samp, jitter)
}

/// Sampling with an explicit drift trajectory.
pub fn sample_with_model(trace: &AnalogTrace, f_samp: f64, jitter: JitterModel) -> Result<SampledTrace> {
    if f_samp * trace.dt > 1.0 + 1e-12 {
        return Err(Error::InvalidInput("f_samp exceeds the fine-grid rate".into()));
    }
    let duration = trace.slots.len() as f64 * trace.slot_period();
    let count = (duration * f_samp).round() as usize;
    let zero_jitter = jitter.is_zero();
    let actual_times: Vec<f64> = (0..count)
        .map(|k| {
            let t = k as f64 / f_samp;
            t + jitter.offset(t)
        })
        .collect();

    let step = 1.0 / (f_samp * trace.dt);
    let int_step = step.round();
    let origin = -trace.t0 / trace.dt;
    let exact_grid = zero_jitter && (step - int_step).abs() < 1e-9 && (origin - origin.round()).abs() < 1e-9;

    let position = |k: usize| -> f64 {
        if exact_grid {
            origin.round() + k as f64 * int_step
        } else {
            (actual_times[k] - trace.t0) / trace.dt
        }
    };

    let mut samples = Vec::with_capacity(count);
    let mut k0 = 0;
    while k0 < count {
        let k1 = (k0 + CHUNK).min(count);
        let lo = (position(k0).floor() as isize - 1).max(0) as usize;
        let hi = ((position(k1 - 1).floor() as isize + 3).max(0) as usize).min(trace.n_samples);
        let env = if hi > lo { trace.render_envelope(lo, hi - lo) } else { Vec::new() };
        let at = |j: isize| -> Complex64 {
            if j < lo as isize || j >= hi as isize {
                Complex64::new(0.0, 0.0)
            } else {
                env[(j - lo as isize) as usize]
            }
        };
        for k in k0..k1 {
            let u = position(k);
            let base = u.floor();
            let f = u - base;
            let b = base as isize;
            let e = if f == 0.0 {
                at(b)
            } else {
                let w = cubic_weights(f);
                at(b - 1) * w[0] + at(b) * w[1] + at(b + 1) * w[2] + at(b + 2) * w[3]
            };
            let t = if exact_grid { trace.time(b.max(0) as usize) } else { actual_times[k] };
            let (s, c) = (2.0 * PI * trace.carrier_hz * t).sin_cos();
            samples.push(e.re * c - e.im * s);
        }
        k0 = k1;
    }
    Ok(SampledTrace { samples, actual_times, f_samp, jitter, snu_scale: 1.0, pulse: trace.pulse })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::validate_params;
    use crate::simulator::{gen_gmcs_symbols, synthesize_waveform, FrameSchedule, WaveformConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn trace(n: usize) -> (AnalogTrace, SystemParams) {
        let p = validate_params(SystemParams::preset_80km()).unwrap();
        let b = gen_gmcs_symbols(n, p.v_a, 1).unwrap();
        let f = FrameSchedule::build(n, 1, 4.0);
        (synthesize_waveform(&f, &b, &p, &WaveformConfig::default()).unwrap(), p)
    }

    #[test]
    fn no_jitter_is_exact_decimation() {
        let (tr, p) = trace(100);
        let s = sample_with_model(&tr, p.f_samp, JitterModel::none()).unwrap();
        let fine = tr.render(0, tr.n_samples);
        let origin = (-tr.t0 / tr.dt).round() as usize;
        for (k, v) in s.samples.iter().enumerate() {
            assert_eq!(*v, fine[origin + 8 * k], "sample {k}");
        }
    }

    #[test]
    fn ten_samples_per_pulse() {
        let (tr, p) = trace(100);
        let s = sample_with_model(&tr, p.f_samp, JitterModel::none()).unwrap();
        assert_eq!(s.len(), 10 * tr.slots.len());
    }

    #[test]
    fn drift_bound_over_one_second() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let j = JitterModel::draw(2.0, 1.0, 1e-3, &mut rng);
            assert!(j.offset(1.0).abs() <= 2e-6);
            assert!(j.max_fraction() <= 2e-6);
        }
        let full = JitterModel::from_knots(1e-3, std::iter::once(0.0).chain(vec![2e-6; 1001]).collect());
        let tau = full.offset(1.0);
        assert!(tau <= 2e-6 && tau > 1.99e-6, "{tau}");
    }

    #[test]
    fn jittered_times_increase_and_stay_bounded() {
        let (tr, p) = trace(2000);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let s = sample_with_jitter(&tr, &p, &mut rng).unwrap();
        assert!(s.actual_times.windows(2).all(|w| w[1] > w[0]));
        for (k, t) in s.actual_times.iter().enumerate() {
            let nominal = k as f64 / p.f_samp;
            assert!((t - nominal).abs() <= 2e-6 * nominal + 1e-18);
        }
    }

    #[test]
    fn interpolation_tracks_analytic_signal() {
        let (tr, p) = trace(200);
        let j = JitterModel::from_knots(1e-6, vec![0.0, 2e-3, -1e-3, 1e-3, 0.0]);
        let s = sample_with_model(&tr, p.f_samp, j).unwrap();
        let mut worst = 0.0f64;
        let peak = s.samples.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for k in (0..s.len()).step_by(7) {
            let t = s.actual_times[k];
            let e = tr.envelope_at(t);
            let (sn, c) = (2.0 * PI * tr.carrier_hz * t).sin_cos();
            worst = worst.max((s.samples[k] - (e.re * c - e.im * sn)).abs());
        }
        assert!(worst < 1e-5 * peak, "{worst} of {peak}");
    }

    #[test]
    fn file_roundtrip() {
        let (tr, p) = trace(20);
        let s = sample_with_model(&tr, p.f_samp, JitterModel::none()).unwrap();
        let mut buf = Vec::new();
        s.write_to(&mut buf).unwrap();
        assert_eq!(&buf[..4], b"CVQT");
        assert_eq!(buf.len(), 32 + 8 * s.len());
        let back = SampledTrace::read_from(&buf[..], s.pulse).unwrap();
        assert_eq!(back.samples, s.samples);
        assert_eq!(back.f_samp, s.f_samp);
        assert!(SampledTrace::read_from(&b"XXXX"[..], s.pulse).is_err());
    }
}
