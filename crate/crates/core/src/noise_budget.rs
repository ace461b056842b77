//! Closed-form excess-noise terms and their sum.

use std::f64::consts::PI;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::model::{SnuValue, SystemParams};

/// Sampling-error model: transmittance and modulation variance seen at the
/// reference and mistimed instants plus their correlation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JitterScenario {
    pub t_r: f64,
    pub t_m: f64,
    pub v_a: f64,
    pub v_a_prime: f64,
    pub rho: f64,
    pub eta: f64,
}

impl JitterScenario {
    pub fn new(t_r: f64, t_m: f64, v_a: f64, v_a_prime: f64, rho: f64, eta: f64) -> Result<Self> {
        let ok = (0.0..=1.0).contains(&t_r)
            && (0.0..=1.0).contains(&t_m)
            && rho.abs() <= 1.0
            && v_a > 0.0
            && v_a_prime > 0.0
            && eta > 0.0
            && eta <= 1.0;
        if !ok {
            return Err(Error::InvalidInput(format!(
                "jitter scenario out of range: T_r={t_r}, T_m={t_m}, V_A={v_a}, V_A'={v_a_prime}, rho={rho}, eta={eta}"
            )));
        }
        Ok(JitterScenario { t_r, t_m, v_a, v_a_prime, rho, eta })
    }

    /// Perfect sampling: no mistiming at all.
    pub fn ideal(t: f64, v_a: f64, eta: f64) -> Self {
        JitterScenario { t_r: t, t_m: t, v_a, v_a_prime: v_a, rho: 1.0, eta }
    }

    /// Stationary Gaussian-pulse model: the sampled process has autocorrelation
    /// V_A·exp(-Δt²/(2δ²)) for a pulse of temporal width δ.
    pub fn gaussian_pulse(t_r: f64, t_m: f64, v_a: f64, eta: f64, delta_t: f64, width: f64) -> Result<Self> {
        if !(width > 0.0) {
            return Err(Error::InvalidInput(format!("pulse width must be positive ({width})")));
        }
        let rho = (-delta_t * delta_t / (2.0 * width * width)).exp();
        Self::new(t_r, t_m, v_a, v_a, rho, eta)
    }
}

/// Per-term breakdown, all in SNU.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct NoiseBudget {
    pub eps_rin: SnuValue,
    pub eps_dac: SnuValue,
    pub eps_mod: SnuValue,
    pub eps_fast: SnuValue,
    pub eps_slow_residual: SnuValue,
    pub eps_sam_error: SnuValue,
    pub eps_mode_mismatch: SnuValue,
    pub eps_total: SnuValue,
}

impl NoiseBudget {
    /// Terms in reporting order, excluding the total.
    pub fn terms(&self) -> [(&'static str, SnuValue); 7] {
        [
            ("eps_rin", self.eps_rin),
            ("eps_dac", self.eps_dac),
            ("eps_mod", self.eps_mod),
            ("eps_fast", self.eps_fast),
            ("eps_slow_residual", self.eps_slow_residual),
            ("eps_sam_error", self.eps_sam_error),
            ("eps_mode_mismatch", self.eps_mode_mismatch),
        ]
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("term,snu\n");
        for (name, v) in self.terms() {
            let _ = writeln!(s, "{name},{:e}", v.0);
        }
        let _ = writeln!(s, "eps_total,{:e}", self.eps_total.0);
        s
    }

    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{:<20} {:>14}", "term", "SNU");
        let _ = writeln!(s, "{:-<20} {:->14}", "", "");
        for (name, v) in self.terms() {
            let _ = writeln!(s, "{name:<20} {:>14.4e}", v.0);
        }
        let _ = writeln!(s, "{:-<20} {:->14}", "", "");
        let _ = writeln!(s, "{:<20} {:>14.4e}", "eps_total", self.eps_total.0);
        s
    }
}

/// Laser intensity noise on signal and LO.
pub fn rin_noise(p: &SystemParams) -> Result<SnuValue> {
    if p.rin_sig < 0.0 || p.rin_lo < 0.0 || p.b_sig < 0.0 || p.b_lo < 0.0 {
        return Err(Error::InvalidInput("RIN and bandwidth parameters must be non-negative".into()));
    }
    let tva = p.transmittance() * p.v_a;
    Ok(SnuValue(tva * (p.rin_sig * p.b_sig).sqrt() + 0.25 * p.rin_lo * p.b_lo * tva))
}

/// DAC quantization noise for relative voltage error `r`.
pub fn dac_noise(v_a: f64, r: f64) -> SnuValue {
    let k = PI * r + PI * PI / 2.0 * r * r;
    SnuValue(v_a * k * k)
}

/// Pilot leakage through a modulator with finite extinction ratio.
pub fn mod_noise(a_s_sq: f64, extinction_db: f64) -> SnuValue {
    SnuValue(a_s_sq * 10f64.powf(-extinction_db / 10.0))
}

pub fn fast_phase_noise(v_a: f64, linewidth_sum: f64, r_rep: f64) -> Result<SnuValue> {
    if !(r_rep > 0.0) {
        return Err(Error::InvalidInput(format!("repetition rate must be positive ({r_rep})")));
    }
    Ok(SnuValue(2.0 * PI * v_a * linewidth_sum / r_rep))
}

pub fn residual_phase_noise(eta: f64, t: f64, v_a: f64, v_error: f64) -> Result<SnuValue> {
    if !(v_error >= 0.0) {
        return Err(Error::InvalidInput(format!("v_error must be non-negative ({v_error})")));
    }
    Ok(SnuValue(2.0 * eta * t * v_a * (1.0 - (-v_error / 2.0).exp())))
}

/// Var(U_r − U_m) for the given mistiming scenario.
pub fn sampling_error_noise(s: &JitterScenario) -> SnuValue {
    let v = s.eta * s.t_r * s.v_a + s.eta * s.t_m * s.v_a_prime
        - 2.0 * s.rho * s.eta * (s.t_r * s.t_m * s.v_a * s.v_a_prime).sqrt();
    // Round-off can push the perfectly correlated case a hair below zero.
    SnuValue(v.max(0.0))
}

pub fn mode_mismatch_noise(eta_m: f64) -> Result<SnuValue> {
    if !(eta_m > 0.0 && eta_m <= 1.0) {
        return Err(Error::InvalidInput(format!("eta_m must lie in (0, 1] ({eta_m})")));
    }
    Ok(SnuValue((1.0 - eta_m) / eta_m))
}

/// Evaluate every term for the given parameters and sampling scenario.
///
/// The repetition rate entering the fast-phase term is the quantum-symbol rate.
pub fn total_budget(p: &SystemParams, scenario: &JitterScenario) -> Result<NoiseBudget> {
    let t = p.transmittance();
    let mut b = NoiseBudget {
        eps_rin: rin_noise(p)?,
        eps_dac: dac_noise(p.v_a, p.dac_rel_error),
        eps_mod: mod_noise(p.v_a, p.extinction_db),
        eps_fast: fast_phase_noise(p.v_a, p.linewidth_alice + p.linewidth_bob, p.f_sym)?,
        eps_slow_residual: residual_phase_noise(p.eta, t, p.v_a, p.v_error)?,
        eps_sam_error: sampling_error_noise(scenario),
        eps_mode_mismatch: mode_mismatch_noise(p.eta_m)?,
        eps_total: SnuValue(0.0),
    };
    b.eps_total = b.terms().iter().map(|(_, v)| *v).sum();
    Ok(b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::validate_params;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    #[test]
    fn rin_zero_when_no_rin() {
        let p = SystemParams { rin_sig: 0.0, rin_lo: 0.0, ..Default::default() };
        assert_eq!(rin_noise(&p).unwrap().0, 0.0);
    }

    #[test]
    fn rin_preset_values() {
        let p80 = validate_params(SystemParams::preset_80km()).unwrap();
        let p120 = validate_params(SystemParams::preset_120km()).unwrap();
        assert!(rel(rin_noise(&p80).unwrap().0, 1.79e-7) < 0.03);
        assert!(rel(rin_noise(&p120).unwrap().0, 0.66e-7) < 0.03);
    }

    #[test]
    fn dac_values() {
        assert_eq!(dac_noise(4.01, 0.0).0, 0.0);
        assert!(rel(dac_noise(4.01, 3.0e-4).0, 3.56e-6) < 0.03);
        assert!(rel(dac_noise(9.41, 3.0e-4).0, 8.37e-6) < 0.03);
    }

    #[test]
    fn modulator_values() {
        assert_eq!(mod_noise(4.01, f64::INFINITY).0, 0.0);
        assert!(rel(mod_noise(4.01, 44.7).0, 1.36e-4) < 0.03);
        assert_eq!(mod_noise(4.01, 0.0).0, 4.01);
    }

    #[test]
    fn fast_phase_values() {
        assert!(rel(fast_phase_noise(4.01, 200.0, 50e6).unwrap().0, 1.0e-4) < 0.03);
        assert!(rel(fast_phase_noise(9.41, 200.0, 50e6).unwrap().0, 2.4e-4) < 0.03);
        assert_eq!(fast_phase_noise(4.01, 0.0, 50e6).unwrap().0, 0.0);
        assert!(fast_phase_noise(4.01, 1.0, 0.0).is_err());
    }

    #[test]
    fn residual_phase_values() {
        assert_eq!(residual_phase_noise(0.481, 0.025119, 4.01, 0.0).unwrap().0, 0.0);
        let direct = 2.0 * 0.481 * 0.025119 * 4.01 * (1.0 - (-0.0025f64).exp());
        let v = residual_phase_noise(0.481, 0.025119, 4.01, 0.005).unwrap().0;
        assert!(rel(v, direct) < 1e-12);
        assert!(rel(v, 0.24e-3) < 0.03);
        assert!(rel(residual_phase_noise(0.481, 0.0039811, 9.41, 0.35).unwrap().0, 5.86e-3) < 0.03);
    }

    #[test]
    fn sampling_error_limits() {
        let s = JitterScenario::ideal(0.02, 4.0, 0.5);
        assert_eq!(sampling_error_noise(&s).0, 0.0);
        let u = JitterScenario::new(0.3, 0.3, 4.0, 4.0, 0.0, 0.5).unwrap();
        assert!(rel(sampling_error_noise(&u).0, 2.0 * 0.5 * 0.3 * 4.0) < 1e-12);
        let g = JitterScenario::gaussian_pulse(0.3, 0.3, 4.0, 0.5, 0.0, 1e-9).unwrap();
        assert_eq!(g.rho, 1.0);
    }

    #[test]
    fn mode_mismatch_values() {
        assert_eq!(mode_mismatch_noise(1.0).unwrap().0, 0.0);
        assert_eq!(mode_mismatch_noise(0.5).unwrap().0, 1.0);
        assert!(rel(mode_mismatch_noise(0.99).unwrap().0, 0.0101) < 0.01);
        assert!(mode_mismatch_noise(0.0).is_err());
    }

    #[test]
    fn total_is_sum_of_terms() {
        let p = validate_params(SystemParams::preset_80km()).unwrap();
        let b = total_budget(&p, &JitterScenario::ideal(p.transmittance(), p.v_a, p.eta)).unwrap();
        let resum = b.eps_rin.0
            + b.eps_dac.0
            + b.eps_mod.0
            + b.eps_fast.0
            + b.eps_slow_residual.0
            + b.eps_sam_error.0
            + b.eps_mode_mismatch.0;
        assert!(rel(b.eps_total.0, resum) < 1e-14);
        // Same order as the post-fit excess noise: a few tenths of a mSNU.
        assert!(b.eps_total.0 > 1e-4 && b.eps_total.0 < 1e-3, "{}", b.eps_total.0);
    }

    #[test]
    fn all_zero_budget() {
        let p = SystemParams {
            rin_sig: 0.0,
            rin_lo: 0.0,
            dac_rel_error: 0.0,
            extinction_db: f64::INFINITY,
            linewidth_alice: 0.0,
            linewidth_bob: 0.0,
            v_error: 0.0,
            eta_m: 1.0,
            ..Default::default()
        };
        let b = total_budget(&p, &JitterScenario::ideal(0.1, p.v_a, p.eta)).unwrap();
        assert_eq!(b.eps_total.0, 0.0);
        for (_, v) in b.terms() {
            assert_eq!(v.0, 0.0);
        }
    }

    #[test]
    fn table_and_csv_list_every_term() {
        let b = total_budget(&SystemParams::default(), &JitterScenario::ideal(0.02, 4.0, 0.5)).unwrap();
        let csv = b.to_csv();
        let table = b.to_table();
        for (name, _) in b.terms() {
            assert!(csv.contains(name) && table.contains(name));
        }
        assert_eq!(csv.lines().count(), 9);
    }
}
