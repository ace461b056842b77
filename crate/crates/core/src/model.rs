//! Shared domain types: the validated parameter set, shot-noise-unit values
//! and per-pulse quadrature sequences tagged with their pipeline stage.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Full physical and protocol parameter set.
///
/// Serialized key names are the field names used in config files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SystemParams {
    pub fiber_length_km: f64,
    pub attenuation_db_per_km: f64,
    #[serde(rename = "V_A")]
    pub v_a: f64,
    pub eta: f64,
    pub v_el: f64,
    pub beta: f64,
    #[serde(rename = "FER")]
    pub fer: f64,
    pub f_sym: f64,
    pub f_rep: f64,
    pub f_samp: f64,
    pub pilot_ratio: u32,
    #[serde(rename = "block_N")]
    pub block_n: u64,
    pub key_n: u64,
    pub delta_f_ab: f64,
    pub linewidth_alice: f64,
    pub linewidth_bob: f64,
    pub rin_sig: f64,
    pub rin_lo: f64,
    pub b_sig: f64,
    pub b_lo: f64,
    pub dac_rel_error: f64,
    pub extinction_db: f64,
    pub jitter_ppm: f64,
    /// Failure probability of parameter estimation (enters the finite-size penalty).
    pub zeta_pe: f64,
    /// Failure probability of privacy amplification.
    pub zeta_pa: f64,
    /// Confidence coefficient used by the worst-case estimation bounds.
    pub zeta: f64,
    /// Scalar mode-matching coefficient.
    pub eta_m: f64,
    /// Residual phase variance assumed by the analytic budget (rad²).
    pub v_error: f64,
    /// Excess noise fed to analytic key-rate evaluation (SNU).
    pub excess_noise: f64,
    /// Received pilot-to-noise ratio per pilot slot (dB).
    pub pilot_snr_db: f64,
    pub rng_seed: u64,
}

const RIN_135_DBC: f64 = 3.162_277_660_168_379_4e-14;

impl Default for SystemParams {
    fn default() -> Self {
        Self::preset_80km()
    }
}

impl SystemParams {
    /// The 80 km operating point.
    pub fn preset_80km() -> Self {
        SystemParams {
            fiber_length_km: 80.0,
            attenuation_db_per_km: 0.2,
            v_a: 4.01,
            eta: 0.481,
            v_el: 0.0372,
            beta: 0.95,
            fer: 0.1,
            f_sym: 50e6,
            f_rep: 100e6,
            f_samp: 1e9,
            pilot_ratio: 1,
            block_n: 1_000_000_000,
            key_n: 500_000_000,
            delta_f_ab: 300e6,
            linewidth_alice: 100.0,
            linewidth_bob: 100.0,
            rin_sig: RIN_135_DBC,
            rin_lo: RIN_135_DBC,
            b_sig: 100.0,
            b_lo: 100.0,
            dac_rel_error: 3.0e-4,
            extinction_db: 44.7,
            jitter_ppm: 2.0,
            zeta_pe: 1e-10,
            zeta_pa: 1e-10,
            zeta: 6.5,
            eta_m: 1.0,
            v_error: 0.005,
            excess_noise: 0.38e-3,
            pilot_snr_db: 20.0,
            rng_seed: 0x5eed_0080,
        }
    }

    /// The 120 km operating point.
    pub fn preset_120km() -> Self {
        SystemParams {
            fiber_length_km: 120.0,
            v_a: 9.41,
            v_el: 0.0374,
            block_n: 100_000_000_000,
            key_n: 50_000_000_000,
            v_error: 0.35,
            excess_noise: 0.006,
            rng_seed: 0x5eed_0120,
            ..Self::preset_80km()
        }
    }

    /// Channel transmittance 10^(-αL/10).
    pub fn transmittance(&self) -> f64 {
        transmittance_for(self.attenuation_db_per_km, self.fiber_length_km)
    }

    /// Number of symbols disclosed for parameter estimation.
    pub fn disclosed_n(&self) -> u64 {
        self.block_n - self.key_n
    }

    /// Copy with a different fiber length.
    pub fn with_length(&self, km: f64) -> Self {
        let mut p = self.clone();
        p.fiber_length_km = km;
        p
    }

    /// Total received noise per quadrature without excess noise.
    pub fn vacuum_plus_electronic(&self) -> f64 {
        1.0 + self.v_el
    }
}

pub fn transmittance_for(att_db_per_km: f64, km: f64) -> f64 {
    10f64.powf(-att_db_per_km * km / 10.0)
}

/// Check every invariant, reporting all violations at once.
pub fn validate_params(raw: SystemParams) -> Result<SystemParams> {
    let mut errs = Vec::new();
    let p = &raw;
    if !(p.eta > 0.0 && p.eta <= 1.0) {
        errs.push(format!("eta out of range ({})", p.eta));
    }
    if !(p.fer >= 0.0 && p.fer < 1.0) {
        errs.push(format!("FER out of range ({})", p.fer));
    }
    if !(p.beta > 0.0 && p.beta <= 1.0) {
        errs.push(format!("beta out of range ({})", p.beta));
    }
    if p.key_n >= p.block_n {
        errs.push(format!("key_n ({}) must be below block_N ({})", p.key_n, p.block_n));
    }
    if !(p.v_a > 0.0) {
        errs.push(format!("V_A must be positive ({})", p.v_a));
    }
    if !(p.f_samp >= 2.0 * p.f_rep) {
        errs.push(format!("f_samp ({}) must be at least 2*f_rep ({})", p.f_samp, p.f_rep));
    }
    if !(p.jitter_ppm >= 0.0) {
        errs.push(format!("jitter_ppm must be non-negative ({})", p.jitter_ppm));
    }
    if !(p.f_sym > 0.0) || ((p.f_rep / p.f_sym) - (1.0 + p.pilot_ratio as f64)).abs() > 1e-9 {
        errs.push(format!(
            "f_rep/f_sym ({}) must equal 1 + pilot_ratio ({})",
            p.f_rep / p.f_sym,
            1 + p.pilot_ratio
        ));
    }
    if p.pilot_ratio == 0 {
        errs.push("pilot_ratio must be at least 1".into());
    }
    if !(p.fiber_length_km >= 0.0) || !(p.attenuation_db_per_km >= 0.0) {
        errs.push("fiber length and attenuation must be non-negative".into());
    }
    if !(p.v_el >= 0.0) {
        errs.push(format!("v_el must be non-negative ({})", p.v_el));
    }
    if !(p.eta_m > 0.0 && p.eta_m <= 1.0) {
        errs.push(format!("eta_m out of range ({})", p.eta_m));
    }
    for (name, v) in [("zeta_pe", p.zeta_pe), ("zeta_pa", p.zeta_pa)] {
        if !(v > 0.0 && v < 1.0) {
            errs.push(format!("{name} must lie in (0, 1) ({v})"));
        }
    }
    if !(p.zeta >= 0.0) {
        errs.push(format!("zeta must be non-negative ({})", p.zeta));
    }
    for (name, v) in [
        ("rin_sig", p.rin_sig),
        ("rin_lo", p.rin_lo),
        ("b_sig", p.b_sig),
        ("b_lo", p.b_lo),
        ("dac_rel_error", p.dac_rel_error),
        ("linewidth_alice", p.linewidth_alice),
        ("linewidth_bob", p.linewidth_bob),
        ("v_error", p.v_error),
        ("excess_noise", p.excess_noise),
    ] {
        if !(v >= 0.0) {
            errs.push(format!("{name} must be non-negative ({v})"));
        }
    }
    if !(p.extinction_db > 0.0) {
        errs.push(format!("extinction_db must be positive ({})", p.extinction_db));
    }
    if !errs.is_empty() {
        return Err(Error::InvalidParams(errs));
    }
    Ok(raw)
}

/// A noise power or variance in shot-noise units.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default, Serialize, Deserialize)]
pub struct SnuValue(pub f64);

impl SnuValue {
    pub fn value(self) -> f64 {
        self.0
    }
}

impl std::ops::Add for SnuValue {
    type Output = SnuValue;
    fn add(self, rhs: SnuValue) -> SnuValue {
        SnuValue(self.0 + rhs.0)
    }
}

impl std::iter::Sum for SnuValue {
    fn sum<I: Iterator<Item = SnuValue>>(iter: I) -> SnuValue {
        SnuValue(iter.map(|v| v.0).sum())
    }
}

/// Position of a quadrature sequence in the receiver pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Stage {
    Raw,
    Downconverted,
    Filtered,
    LsFitted,
    FastCompensated,
    SlowCompensated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Units {
    Snu,
    RawPhotocurrent,
}

/// Per-pulse quadrature values at a given pipeline stage.
///
/// `valid` marks pulses that survived gating; downstream statistics skip the rest.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraturePairs {
    pub x: Vec<f64>,
    pub p: Vec<f64>,
    pub stage: Stage,
    pub units: Units,
    pub valid: Vec<bool>,
}

impl QuadraturePairs {
    pub fn new(x: Vec<f64>, p: Vec<f64>, stage: Stage, units: Units) -> Result<Self> {
        if x.len() != p.len() {
            return Err(Error::InvalidInput(format!(
                "quadrature length mismatch: {} vs {}",
                x.len(),
                p.len()
            )));
        }
        let valid = vec![true; x.len()];
        Ok(QuadraturePairs { x, p, stage, units, valid })
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }

    /// Move to a later stage. Going backwards is an error.
    pub fn advance(mut self, to: Stage) -> Result<Self> {
        if to <= self.stage {
            return Err(Error::StageOrder { from: self.stage, to });
        }
        self.stage = to;
        Ok(self)
    }

    /// Keep only the listed pulse indices, preserving order.
    pub fn select(&self, idx: &[usize]) -> QuadraturePairs {
        QuadraturePairs {
            x: idx.iter().map(|&i| self.x[i]).collect(),
            p: idx.iter().map(|&i| self.p[i]).collect(),
            stage: self.stage,
            units: self.units,
            valid: idx.iter().map(|&i| self.valid[i]).collect(),
        }
    }
}
