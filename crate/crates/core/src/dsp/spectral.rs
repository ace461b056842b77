use std::f64::consts::PI;

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::simulator::SampledTrace;

pub const MIN_FFT_LEN: usize = 1 << 16;

/// Complex baseband samples at the ADC rate.
#[derive(Debug, Clone, PartialEq)]
pub struct Baseband {
    pub x: Vec<f64>,
    pub p: Vec<f64>,
    pub f_samp: f64,
}

impl Baseband {
    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }
}

/// Dominant beat frequency of a real trace from a Hann-windowed periodogram,
/// refined by a parabola through the log-power of the peak and its neighbours.
///
/// `gate_db` is the minimum peak-to-median power ratio accepted as a carrier.
pub fn estimate_freq_offset(trace: &SampledTrace, gate_db: f64, max_len: usize) -> Result<f64> {
    estimate_tone(&trace.samples, trace.f_samp, gate_db, max_len)
}

pub fn estimate_tone(samples: &[f64], f_samp: f64, gate_db: f64, max_len: usize) -> Result<f64> {
    if samples.len() < MIN_FFT_LEN {
        return Err(Error::InvalidInput(format!(
            "need at least {MIN_FFT_LEN} samples for offset estimation, got {}",
            samples.len()
        )));
    }
    let mut n = MIN_FFT_LEN;
    while n * 2 <= samples.len().min(max_len.max(MIN_FFT_LEN)) {
        n *= 2;
    }
    let mut buf: Vec<Complex64> = samples[..n]
        .iter()
        .enumerate()
        .map(|(k, &v)| {
            let w = 0.5 - 0.5 * (2.0 * PI * k as f64 / n as f64).cos();
            Complex64::new(v * w, 0.0)
        })
        .collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let power: Vec<f64> = buf[..n / 2].iter().map(|c| c.norm_sqr()).collect();

    let mut peak = 1;
    for k in 2..n / 2 - 1 {
        if power[k] > power[peak] {
            peak = k;
        }
    }
    let mut sorted = power[1..n / 2].to_vec();
    let mid = sorted.len() / 2;
    let (_, median, _) = sorted.select_nth_unstable_by(mid, |a, b| a.total_cmp(b));
    let ratio_db = 10.0 * (power[peak] / median.max(f64::MIN_POSITIVE)).log10();
    if !(ratio_db >= gate_db) {
        return Err(Error::NoCarrier { ratio_db });
    }
    let ln = |v: f64| v.max(f64::MIN_POSITIVE).ln();
    let (a, b, c) = (ln(power[peak - 1]), ln(power[peak]), ln(power[peak + 1]));
    let den = a - 2.0 * b + c;
    let delta = if den.abs() > 0.0 { 0.5 * (a - c) / den } else { 0.0 };
    Ok((peak as f64 + delta.clamp(-0.5, 0.5)) * f_samp / n as f64)
}

/// Mix the real trace down by `delta_f` using nominal sample times.
///
/// The product is doubled so that a carrier of unit envelope comes out with
/// unit magnitude once the image at −2·delta_f is filtered away.
pub fn downconvert(trace: &SampledTrace, delta_f: f64) -> Result<Baseband> {
    if !(delta_f.abs() < trace.f_samp / 2.0) {
        return Err(Error::InvalidInput(format!("offset {delta_f} Hz beyond Nyquist")));
    }
    let w = -2.0 * PI * delta_f / trace.f_samp;
    let step = Complex64::from_polar(1.0, w);
    let n = trace.len();
    let mut x = Vec::with_capacity(n);
    let mut p = Vec::with_capacity(n);
    let mut rot = Complex64::new(1.0, 0.0);
    for (k, &s) in trace.samples.iter().enumerate() {
        if k % 1024 == 0 {
            rot = Complex64::from_polar(1.0, w * k as f64);
        }
        let v = rot * (2.0 * s * trace.snu_scale);
        x.push(v.re);
        p.push(v.im);
        rot *= step;
    }
    Ok(Baseband { x, p, f_samp: trace.f_samp })
}
