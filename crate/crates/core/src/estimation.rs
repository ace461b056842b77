//! Channel parameter estimation from the disclosed subset and the
//! finite-size worst-case bounds.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::model::{QuadraturePairs, Stage, SystemParams};
use crate::simulator::SymbolBlock;

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelEstimate {
    pub t_hat: f64,
    pub eps_hat: f64,
    pub v_error: f64,
    pub m: usize,
    pub t_min: f64,
    pub eps_max: f64,
    pub warnings: Vec<String>,
}

/// Transmittance and excess noise from the linear model y = √(ηT)·x + z,
/// pooling both quadratures. Pulses marked invalid are skipped.
pub fn estimate_channel(alice: &SymbolBlock, bob: &QuadraturePairs, p: &SystemParams) -> Result<ChannelEstimate> {
    if alice.len() != bob.len() {
        return Err(Error::InvalidInput(format!(
            "alice/bob length mismatch: {} vs {}",
            alice.len(),
            bob.len()
        )));
    }
    if bob.stage != Stage::SlowCompensated {
        return Err(Error::InvalidInput(format!("bob data at stage {:?}, expected SlowCompensated", bob.stage)));
    }
    let idx: Vec<usize> = (0..bob.len()).filter(|&i| bob.valid[i]).collect();
    let m = idx.len();
    if m < 2 {
        return Err(Error::InvalidInput(format!("need at least 2 usable pulses, got {m}")));
    }

    let k = 2.0 * m as f64;
    let (mut mx, mut my) = (0.0, 0.0);
    for &i in &idx {
        mx += alice.x_a[i] + alice.p_a[i];
        my += bob.x[i] + bob.p[i];
    }
    mx /= k;
    my /= k;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for &i in &idx {
        for (x, y) in [(alice.x_a[i], bob.x[i]), (alice.p_a[i], bob.p[i])] {
            let (dx, dy) = (x - mx, y - my);
            sxx += dx * dx;
            sxy += dx * dy;
            syy += dy * dy;
        }
    }
    if !(sxx > 0.0) {
        return Err(Error::InvalidInput("non-positive <x^2>".into()));
    }
    let slope = sxy / sxx;
    let t_hat = slope * slope / p.eta;
    let sigma2 = ((syy - 2.0 * slope * sxy + slope * slope * sxx) / k).max(0.0);

    let mut warnings = Vec::new();
    let mut eps_hat = (sigma2 - 1.0 - p.v_el) / (p.eta * t_hat);
    if !(eps_hat >= 0.0) {
        let msg = format!("nonphysical excess noise estimate {eps_hat:e} clamped to 0");
        log::warn!("{msg}");
        warnings.push(msg);
        eps_hat = 0.0;
    }
    let v_error = residual_phase_variance(bob, alice).unwrap_or(f64::NAN);
    let (t_min, eps_max) = worst_case_bounds(t_hat, eps_hat, m, p)?;
    if t_min == 0.0 {
        warnings.push("worst-case transmittance bound collapsed to 0".into());
    }
    Ok(ChannelEstimate { t_hat, eps_hat, v_error, m, t_min, eps_max, warnings })
}

fn wrap(a: f64) -> f64 {
    let mut w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w -= 2.0 * PI;
    }
    w
}

/// Variance of the wrapped phase difference between recovered and reference
/// symbols. The differences are centred on their circular mean first, so a
/// constant offset anywhere on the circle has zero variance.
pub fn residual_phase_variance(recovered: &QuadraturePairs, alice: &SymbolBlock) -> Result<f64> {
    if recovered.len() != alice.len() {
        return Err(Error::InvalidInput("recovered and reference lengths differ".into()));
    }
    let total = recovered.len();
    let mut diffs = Vec::with_capacity(total);
    for i in 0..total {
        let (x, p) = (recovered.x[i], recovered.p[i]);
        let (xa, pa) = (alice.x_a[i], alice.p_a[i]);
        if !recovered.valid[i] || (x == 0.0 && p == 0.0) || (xa == 0.0 && pa == 0.0) {
            continue;
        }
        diffs.push(wrap(p.atan2(x) - pa.atan2(xa)));
    }
    let excluded = total - diffs.len();
    if diffs.is_empty() || 2 * excluded > total {
        return Err(Error::TooManyExcluded { excluded, total });
    }
    let (s, c) = diffs.iter().fold((0.0, 0.0), |(s, c), d| (s + d.sin(), c + d.cos()));
    let centre = s.atan2(c);
    let n = diffs.len() as f64;
    let centred: Vec<f64> = diffs.iter().map(|d| wrap(d - centre)).collect();
    let mean = centred.iter().sum::<f64>() / n;
    Ok(centred.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / n)
}

/// Worst-case (T_min, ε_max) at confidence coefficient `p.zeta`.
pub fn worst_case_bounds(t_hat: f64, eps_hat: f64, m: usize, p: &SystemParams) -> Result<(f64, f64)> {
    if m < 2 {
        return Err(Error::InvalidInput(format!("m must be at least 2 ({m})")));
    }
    let m = m as f64;
    let et = p.eta * t_hat;
    let sigma2 = et * eps_hat + 1.0 + p.v_el;
    let dt = p.zeta * (sigma2 / (m * p.v_a)).sqrt();
    let root = et.sqrt() - dt;
    let t_min = if root < 0.0 {
        log::warn!("sqrt(eta*T) - dT < 0; worst-case transmittance set to 0");
        0.0
    } else {
        root * root / p.eta
    };
    let d_sigma = p.zeta * sigma2 * 2f64.sqrt() / m.sqrt();
    Ok((t_min, eps_hat + d_sigma / et))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Units;
    use crate::simulator::gen_gmcs_symbols;
    use rand::SeedableRng;
    use rand_distr::{Distribution, Normal};

    fn bob_from(alice: &SymbolBlock, gain: f64, noise: f64, seed: u64) -> QuadraturePairs {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let n = Normal::new(0.0, noise.max(1e-300)).unwrap();
        let mut draw = |v: f64| if noise > 0.0 { gain * v + n.sample(&mut rng) } else { gain * v };
        let x = alice.x_a.iter().map(|&v| draw(v)).collect();
        let p = alice.p_a.iter().map(|&v| draw(v)).collect();
        QuadraturePairs::new(x, p, Stage::SlowCompensated, Units::Snu).unwrap()
    }

    #[test]
    fn planted_linear_model() {
        let p = SystemParams::preset_80km();
        let t = p.transmittance();
        let alice = gen_gmcs_symbols(1_000_000, p.v_a, 3).unwrap();
        let bob = bob_from(&alice, (p.eta * t).sqrt(), 1.0, 4);
        let est = estimate_channel(&alice, &bob, &p).unwrap();
        assert!((est.t_hat - t).abs() / t < 0.01, "{}", est.t_hat);
        assert!(est.t_min <= est.t_hat && est.eps_max >= est.eps_hat);
    }

    #[test]
    fn noiseless_input_clamps_excess_noise() {
        let p = SystemParams::preset_80km();
        let alice = gen_gmcs_symbols(10_000, p.v_a, 5).unwrap();
        let bob = bob_from(&alice, (p.eta * p.transmittance()).sqrt(), 0.0, 0);
        let est = estimate_channel(&alice, &bob, &p).unwrap();
        assert_eq!(est.eps_hat, 0.0);
        assert!(!est.warnings.is_empty());
    }

    #[test]
    fn scaling_bob_scales_t_hat_quadratically() {
        let p = SystemParams::preset_80km();
        let alice = gen_gmcs_symbols(20_000, p.v_a, 6).unwrap();
        let bob = bob_from(&alice, 0.3, 1.0, 7);
        let mut scaled = bob.clone();
        scaled.x.iter_mut().chain(scaled.p.iter_mut()).for_each(|v| *v *= 3.0);
        let a = estimate_channel(&alice, &bob, &p).unwrap();
        let b = estimate_channel(&alice, &scaled, &p).unwrap();
        assert!((b.t_hat / a.t_hat - 9.0).abs() < 1e-9);
    }

    #[test]
    fn wrong_stage_rejected() {
        let alice = gen_gmcs_symbols(10, 1.0, 1).unwrap();
        let mut bob = bob_from(&alice, 1.0, 0.1, 1);
        bob.stage = Stage::FastCompensated;
        assert!(estimate_channel(&alice, &bob, &SystemParams::default()).is_err());
    }

    fn rotated(alice: &SymbolBlock, phases: &[f64]) -> QuadraturePairs {
        let (x, p): (Vec<f64>, Vec<f64>) = (0..alice.len())
            .map(|i| {
                let (s, c) = phases[i].sin_cos();
                (alice.x_a[i] * c - alice.p_a[i] * s, alice.x_a[i] * s + alice.p_a[i] * c)
            })
            .unzip();
        QuadraturePairs::new(x, p, Stage::SlowCompensated, Units::Snu).unwrap()
    }

    #[test]
    fn constant_rotation_has_zero_variance() {
        let alice = gen_gmcs_symbols(1000, 4.0, 9).unwrap();
        for c in [0.0, 1.0, PI, -PI + 1e-3, 3.0 * PI / 2.0] {
            let v = residual_phase_variance(&rotated(&alice, &vec![c; 1000]), &alice).unwrap();
            assert!(v < 1e-20, "offset {c}: {v}");
        }
    }

    #[test]
    fn planted_phase_noise_recovered() {
        let alice = gen_gmcs_symbols(200_000, 4.0, 10).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for var in [0.005, 0.35] {
            let n = Normal::new(0.0, f64::sqrt(var)).unwrap();
            let ph: Vec<f64> = (0..alice.len()).map(|_| n.sample(&mut rng)).collect();
            let v = residual_phase_variance(&rotated(&alice, &ph), &alice).unwrap();
            // Variance of the sample variance of a Gaussian: 2σ⁴/n.
            let sd = var * (2.0 / alice.len() as f64).sqrt();
            assert!((v - var).abs() < 3.0 * sd, "planted {var}, got {v}");
        }
    }

    #[test]
    fn mostly_zero_pulses_rejected() {
        let alice = gen_gmcs_symbols(10, 4.0, 12).unwrap();
        let mut rec = rotated(&alice, &[0.0; 10]);
        for i in 0..6 {
            rec.x[i] = 0.0;
            rec.p[i] = 0.0;
        }
        assert!(matches!(residual_phase_variance(&rec, &alice), Err(Error::TooManyExcluded { .. })));
    }

    #[test]
    fn bounds_limits() {
        let p = SystemParams::preset_80km();
        let (t, e) = worst_case_bounds(0.025, 0.001, usize::MAX, &p).unwrap();
        assert!((t - 0.025).abs() < 1e-8 && (e - 0.001).abs() < 1e-6);
        let p0 = SystemParams { zeta: 0.0, ..p.clone() };
        assert_eq!(worst_case_bounds(0.025, 0.001, 100, &p0).unwrap(), (0.025, 0.001));
        assert!(worst_case_bounds(0.025, 0.001, 1, &p).is_err());
        assert_eq!(worst_case_bounds(0.025, 0.001, 2, &p).unwrap().0, 0.0);
    }

    #[test]
    fn bounds_match_direct_formula_at_80km() {
        let p = SystemParams::preset_80km();
        let (t, e, m) = (p.transmittance(), 0.38e-3, 500_000_000usize);
        let (t_min, eps_max) = worst_case_bounds(t, e, m, &p).unwrap();
        let s2 = 0.481 * t * e + 1.0 + 0.0372;
        let dt = 6.5 * (s2 / (5e8 * 4.01)).sqrt();
        let want_t = ((0.481 * t).sqrt() - dt).powi(2) / 0.481;
        let want_e = e + 6.5 * s2 * 2f64.sqrt() / 5e8f64.sqrt() / (0.481 * t);
        assert!((t_min - want_t).abs() / want_t < 1e-12);
        assert!((eps_max - want_e).abs() / want_e < 1e-12);
    }

    proptest::proptest! {
        #[test]
        fn bounds_monotone_in_m(m in 2usize..1_000_000_000, f in 1.01f64..100.0, eps in 0.0f64..0.05) {
            let p = SystemParams::preset_80km();
            let m2 = ((m as f64) * f) as usize;
            let (t1, e1) = worst_case_bounds(0.02, eps, m, &p).unwrap();
            let (t2, e2) = worst_case_bounds(0.02, eps, m2, &p).unwrap();
            proptest::prop_assert!(t2 >= t1 && e2 <= e1);
        }

        #[test]
        fn phase_variance_ignores_2pi_shifts(seed in 0u64..1000, mask in proptest::collection::vec(-3i32..3, 64)) {
            let alice = gen_gmcs_symbols(64, 4.0, seed).unwrap();
            let base: Vec<f64> = (0..64).map(|i| 0.1 * ((i * 7 % 13) as f64 - 6.0)).collect();
            let shifted: Vec<f64> = base.iter().zip(&mask).map(|(b, k)| b + 2.0 * PI * *k as f64).collect();
            let a = residual_phase_variance(&rotated(&alice, &base), &alice).unwrap();
            let b = residual_phase_variance(&rotated(&alice, &shifted), &alice).unwrap();
            proptest::prop_assert!((a - b).abs() < 1e-9);
        }
    }
}
