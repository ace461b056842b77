//! Raised-cosine pulse template shared by the transmitter model and the
//! receiver calibration.

use std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PulseShape {
    /// Slot period in seconds.
    pub period: f64,
    /// Roll-off factor in [0, 1].
    pub rolloff: f64,
    /// Truncation half-width in slots.
    pub span_slots: usize,
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

impl PulseShape {
    pub fn new(period: f64, rolloff: f64, span_slots: usize) -> Self {
        PulseShape { period, rolloff, span_slots }
    }

    /// Template value at time `t` relative to the pulse centre. Unit peak.
    pub fn value(&self, t: f64) -> f64 {
        let u = t / self.period;
        if u.abs() > self.span_slots as f64 {
            return 0.0;
        }
        let a = self.rolloff;
        if a == 0.0 {
            return sinc(u);
        }
        let den = 1.0 - (2.0 * a * u).powi(2);
        if den.abs() < 1e-10 {
            PI / 4.0 * sinc(1.0 / (2.0 * a))
        } else {
            sinc(u) * (PI * a * u).cos() / den
        }
    }

    /// Support half-width in seconds.
    pub fn half_width(&self) -> f64 {
        self.span_slots as f64 * self.period
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nyquist_zero_crossings() {
        let p = PulseShape::new(1e-8, 0.5, 8);
        assert_eq!(p.value(0.0), 1.0);
        for k in 1..8 {
            assert!(p.value(k as f64 * 1e-8).abs() < 1e-12);
            assert!(p.value(-(k as f64) * 1e-8).abs() < 1e-12);
        }
        assert_eq!(p.value(9e-8), 0.0);
    }

    #[test]
    fn singular_point_is_continuous() {
        let p = PulseShape::new(1.0, 0.5, 8);
        let at = p.value(1.0);
        let near = p.value(1.0 + 1e-7);
        assert!((at - near).abs() < 1e-6);
    }
}
