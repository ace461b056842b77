use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::frame::{FrameSchedule, SlotKind};
use crate::error::{Error, Result};

/// Alice's Gaussian-modulated symbols.
///
/// `x_a` and `p_a` each carry variance `v_a`, so the symbol energy
/// E[x² + p²] is 2·V_A and the received variance per quadrature is ηT·V_A + 1 + v_el.
#[derive(Debug, Clone, PartialEq)]
pub struct SymbolBlock {
    pub amplitudes: Vec<f64>,
    pub phases: Vec<f64>,
    pub x_a: Vec<f64>,
    pub p_a: Vec<f64>,
    pub v_a: f64,
    pub seed: u64,
}

impl SymbolBlock {
    pub fn len(&self) -> usize {
        self.x_a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x_a.is_empty()
    }

    fn from_cartesian(x_a: Vec<f64>, p_a: Vec<f64>, v_a: f64, seed: u64) -> Self {
        let amplitudes = x_a.iter().zip(&p_a).map(|(x, p)| x.hypot(*p)).collect();
        let phases = x_a.iter().zip(&p_a).map(|(x, p)| p.atan2(*x).rem_euclid(2.0 * PI)).collect();
        SymbolBlock { amplitudes, phases, x_a, p_a, v_a, seed }
    }

    /// Restrict to the given indices (e.g. the disclosed subset).
    pub fn select(&self, idx: &[usize]) -> SymbolBlock {
        SymbolBlock {
            amplitudes: idx.iter().map(|&i| self.amplitudes[i]).collect(),
            phases: idx.iter().map(|&i| self.phases[i]).collect(),
            x_a: idx.iter().map(|&i| self.x_a[i]).collect(),
            p_a: idx.iter().map(|&i| self.p_a[i]).collect(),
            v_a: self.v_a,
            seed: self.seed,
        }
    }
}

/// Draw `n` symbols with Rayleigh amplitude and uniform phase.
pub fn gen_gmcs_symbols(n: usize, v_a: f64, seed: u64) -> Result<SymbolBlock> {
    if n == 0 {
        return Err(Error::InvalidInput("symbol count must be positive".into()));
    }
    if !(v_a >= 0.0) {
        return Err(Error::InvalidInput(format!("V_A must be non-negative ({v_a})")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sigma = v_a.sqrt();
    let mut amplitudes = Vec::with_capacity(n);
    let mut phases = Vec::with_capacity(n);
    let mut x_a = Vec::with_capacity(n);
    let mut p_a = Vec::with_capacity(n);
    for _ in 0..n {
        let u: f64 = 1.0 - rng.gen::<f64>();
        let a = sigma * (-2.0 * u.ln()).sqrt();
        let phi = 2.0 * PI * rng.gen::<f64>();
        let (s, c) = phi.sin_cos();
        amplitudes.push(a);
        phases.push(phi);
        x_a.push(a * c);
        p_a.push(a * s);
    }
    Ok(SymbolBlock { amplitudes, phases, x_a, p_a, v_a, seed })
}

/// Multiplicative voltage error of a finite-resolution DAC on each quadrature.
pub fn apply_dac_quantization<R: Rng>(block: &SymbolBlock, dac_rel_error: f64, rng: &mut R) -> Result<SymbolBlock> {
    if !(dac_rel_error >= 0.0) {
        return Err(Error::InvalidInput(format!("dac_rel_error must be non-negative ({dac_rel_error})")));
    }
    if dac_rel_error == 0.0 {
        return Ok(block.clone());
    }
    let k = PI * dac_rel_error + PI * PI / 2.0 * dac_rel_error * dac_rel_error;
    let n = Normal::new(0.0, k).expect("finite sigma");
    let x = block.x_a.iter().map(|v| v * (1.0 + n.sample(rng))).collect();
    let p = block.p_a.iter().map(|v| v * (1.0 + n.sample(rng))).collect();
    Ok(SymbolBlock::from_cartesian(x, p, block.v_a, block.seed))
}

/// Leakage of neighbouring pilot energy through a modulator with finite extinction.
pub fn apply_modulator_leakage<R: Rng>(
    frame: &FrameSchedule,
    block: &SymbolBlock,
    extinction_db: f64,
    rng: &mut R,
) -> Result<SymbolBlock> {
    if !(extinction_db > 0.0) {
        return Err(Error::InvalidInput(format!("extinction_db must be positive ({extinction_db})")));
    }
    if extinction_db.is_infinite() {
        return Ok(block.clone());
    }
    debug_assert_eq!(frame.quantum_count(), block.len());
    let var = block.v_a * 10f64.powf(-extinction_db / 10.0);
    let n = Normal::new(0.0, var.sqrt()).expect("finite sigma");
    let mut x = block.x_a.clone();
    let mut p = block.p_a.clone();
    for (s, slot) in frame.slots.iter().enumerate() {
        if slot.kind != SlotKind::Quantum || !frame.has_pilot_neighbour(s) {
            continue;
        }
        x[slot.index] += n.sample(rng);
        p[slot.index] += n.sample(rng);
    }
    Ok(SymbolBlock::from_cartesian(x, p, block.v_a, block.seed))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn var(v: &[f64]) -> f64 {
        let m = v.iter().sum::<f64>() / v.len() as f64;
        v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64
    }

    #[test]
    fn modulation_variance_per_quadrature() {
        let b = gen_gmcs_symbols(1_000_000, 4.01, 42).unwrap();
        let energy = b.x_a.iter().zip(&b.p_a).map(|(x, p)| x * x + p * p).sum::<f64>() / b.len() as f64;
        assert!((energy / 2.0 - 4.01).abs() / 4.01 < 0.01, "{energy}");
        assert!(b.amplitudes.iter().all(|&a| a >= 0.0));
        assert!(b.phases.iter().all(|&p| (0.0..2.0 * PI).contains(&p)));
    }

    #[test]
    fn tiny_modulation_collapses_to_origin() {
        let b = gen_gmcs_symbols(1000, 1e-24, 1).unwrap();
        assert!(b.amplitudes.iter().all(|&a| a < 1e-10));
    }

    #[test]
    fn deterministic_and_rejects_empty() {
        assert_eq!(gen_gmcs_symbols(100, 2.0, 7).unwrap(), gen_gmcs_symbols(100, 2.0, 7).unwrap());
        assert!(gen_gmcs_symbols(0, 2.0, 7).is_err());
    }

    fn induced(a: &SymbolBlock, b: &SymbolBlock) -> f64 {
        let d: Vec<f64> = a.x_a.iter().zip(&b.x_a).map(|(u, v)| v - u).collect();
        var(&d)
    }

    #[test]
    fn dac_noise_matches_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for (va, want) in [(4.01, 3.56e-6), (9.41, 8.37e-6)] {
            let b = gen_gmcs_symbols(1_000_000, va, 3).unwrap();
            assert_eq!(apply_dac_quantization(&b, 0.0, &mut rng).unwrap(), b);
            let q = apply_dac_quantization(&b, 3.0e-4, &mut rng).unwrap();
            let got = induced(&b, &q);
            assert!((got - want).abs() / want < 0.03, "{got}");
        }
    }

    #[test]
    fn leakage_matches_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let b = gen_gmcs_symbols(500_000, 4.01, 5).unwrap();
        let f = FrameSchedule::build(b.len(), 1, 10.0);
        assert_eq!(apply_modulator_leakage(&f, &b, f64::INFINITY, &mut rng).unwrap(), b);
        let l = apply_modulator_leakage(&f, &b, 44.7, &mut rng).unwrap();
        let got = induced(&b, &l);
        assert!((got - 1.36e-4).abs() / 1.36e-4 < 0.03, "{got}");
        let full = apply_modulator_leakage(&f, &b, 1e-12, &mut rng).unwrap();
        assert!((induced(&b, &full) - 4.01).abs() / 4.01 < 0.02);
    }
}
