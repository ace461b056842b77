use std::f64::consts::PI;

use num_complex::Complex64;

use super::spectral::Baseband;
use crate::error::{Error, Result};

/// Direct-form II transposed second-order section, a0 = 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 2],
}

impl Biquad {
    fn run(&self, data: &mut [f64]) {
        let [b0, b1, b2] = self.b;
        let [a1, a2] = self.a;
        let Some(&v) = data.first() else { return };
        // Start from the steady state for a constant input equal to the first sample.
        let mut s2 = (b2 - a2) * v;
        let mut s1 = (b1 - a1) * v + s2;
        for x in data.iter_mut() {
            let y = b0 * *x + s1;
            s1 = b1 * *x - a1 * y + s2;
            s2 = b2 * *x - a2 * y;
            *x = y;
        }
    }
}

/// Digital Butterworth low-pass via the bilinear transform with prewarping.
/// Odd orders get a first-order section encoded as a biquad with b2 = a2 = 0.
pub fn butterworth_sections(cutoff: f64, f_samp: f64, order: usize) -> Result<Vec<Biquad>> {
    if !(cutoff > 0.0 && cutoff < f_samp / 2.0) {
        return Err(Error::InvalidInput(format!("cutoff {cutoff} Hz outside (0, f_samp/2)")));
    }
    if !(2..=10).contains(&order) {
        return Err(Error::InvalidInput(format!("filter order {order} outside 2..=10")));
    }
    let fs2 = 2.0 * f_samp;
    let wc = fs2 * (PI * cutoff / f_samp).tan();
    let bilinear = |s: Complex64| (fs2 + s) / (fs2 - s);
    let mut sections = Vec::new();
    for k in 0..order / 2 {
        let theta = PI * (2 * k + order + 1) as f64 / (2 * order) as f64;
        let z = bilinear(Complex64::from_polar(wc, theta));
        if z.norm() >= 1.0 {
            return Err(Error::UnstableFilter);
        }
        let a1 = -2.0 * z.re;
        let a2 = z.norm_sqr();
        let g = (1.0 + a1 + a2) / 4.0;
        sections.push(Biquad { b: [g, 2.0 * g, g], a: [a1, a2] });
    }
    if order % 2 == 1 {
        let z = bilinear(Complex64::new(-wc, 0.0)).re;
        if z.abs() >= 1.0 {
            return Err(Error::UnstableFilter);
        }
        let g = (1.0 - z) / 2.0;
        sections.push(Biquad { b: [g, g, 0.0], a: [-z, 0.0] });
    }
    Ok(sections)
}

pub(crate) fn filtfilt(sections: &[Biquad], data: &mut Vec<f64>, pad: usize) {
    let n = data.len();
    if n == 0 {
        return;
    }
    let pad = pad.min(n - 1);
    // Odd extension about each end.
    let (first, last) = (data[0], data[n - 1]);
    let mut ext = Vec::with_capacity(n + 2 * pad);
    ext.extend((1..=pad).rev().map(|i| 2.0 * first - data[i]));
    ext.extend_from_slice(data);
    ext.extend((1..=pad).map(|i| 2.0 * last - data[n - 1 - i]));
    for s in sections {
        s.run(&mut ext);
    }
    ext.reverse();
    for s in sections {
        s.run(&mut ext);
    }
    ext.reverse();
    data.clear();
    data.extend_from_slice(&ext[pad..pad + n]);
}

/// Edge extension long enough for the filter transient to decay.
pub(crate) fn filter_pad(bandwidth: f64, f_samp: f64, order: usize) -> usize {
    ((20.0 * f_samp / bandwidth) as usize).max(3 * (order + 1))
}

/// Zero-phase forward-backward Butterworth filtering of both quadratures.
pub fn lowpass_butterworth(mut bb: Baseband, bandwidth: f64, order: usize) -> Result<Baseband> {
    let sections = butterworth_sections(bandwidth, bb.f_samp, order)?;
    let pad = filter_pad(bandwidth, bb.f_samp, order);
    filtfilt(&sections, &mut bb.x, pad);
    filtfilt(&sections, &mut bb.p, pad);
    Ok(bb)
}

/// Single-pass magnitude response at frequency `f`.
pub fn magnitude_response(sections: &[Biquad], f: f64, f_samp: f64) -> f64 {
    let z1 = Complex64::from_polar(1.0, -2.0 * PI * f / f_samp);
    let z2 = z1 * z1;
    sections
        .iter()
        .map(|s| ((s.b[0] + s.b[1] * z1 + s.b[2] * z2) / (1.0 + s.a[0] * z1 + s.a[1] * z2)).norm())
        .product()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cutoff_is_half_power() {
        for order in 2..=10 {
            let s = butterworth_sections(100e6, 1e9, order).unwrap();
            let m = magnitude_response(&s, 100e6, 1e9);
            assert!((m - 0.5f64.sqrt()).abs() < 1e-9, "order {order}: {m}");
            assert!((magnitude_response(&s, 0.0, 1e9) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn response_matches_prewarped_prototype() {
        let fs = 1e9;
        let fc = 37e6;
        let s = butterworth_sections(fc, fs, 5).unwrap();
        for f in [1e6, 20e6, 60e6, 200e6, 450e6] {
            let r = (PI * f / fs).tan() / (PI * fc / fs).tan();
            let want = 1.0 / (1.0 + r.powi(10)).sqrt();
            assert!((magnitude_response(&s, f, fs) - want).abs() < 1e-9 * want.max(1e-6));
        }
    }

    #[test]
    fn dc_passes_unchanged() {
        let bb = Baseband { x: vec![2.5; 5000], p: vec![-1.0; 5000], f_samp: 1e9 };
        let out = lowpass_butterworth(bb, 100e6, 4).unwrap();
        assert!(out.x.iter().all(|v| (v - 2.5).abs() < 1e-9));
        assert!(out.p.iter().all(|v| (v + 1.0).abs() < 1e-9));
    }

    #[test]
    fn tone_five_times_cutoff_is_suppressed() {
        let fs = 1e9;
        let fc = 10e6;
        let n = 20_000;
        let x: Vec<f64> = (0..n).map(|k| (2.0 * PI * 5.0 * fc * k as f64 / fs).cos()).collect();
        let bb = Baseband { x, p: vec![0.0; n], f_samp: fs };
        let out = lowpass_butterworth(bb, fc, 4).unwrap();
        let peak = out.x[n / 4..3 * n / 4].iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let r = (PI * 5.0 * fc / fs).tan() / (PI * fc / fs).tan();
        let two_pass = 1.0 / (1.0 + r.powi(8));
        assert!(20.0 * two_pass.log10() <= -80.0);
        assert!(20.0 * peak.log10() <= -80.0, "{peak}");
    }

    #[test]
    fn bad_arguments() {
        assert!(butterworth_sections(600e6, 1e9, 4).is_err());
        assert!(butterworth_sections(100e6, 1e9, 1).is_err());
        assert!(butterworth_sections(100e6, 1e9, 11).is_err());
    }
}
