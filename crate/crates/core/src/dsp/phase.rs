use std::f64::consts::TAU;

use crate::error::{Error, Result};
use crate::model::{QuadraturePairs, Stage};
use crate::simulator::SymbolBlock;

const GOLDEN_TOL: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseEstimate {
    /// Per-pulse fast drift angle, rad in [0, 2π).
    pub theta_fast: Vec<f64>,
    /// Block slow drift angle, rad in [0, 2π).
    pub theta_slow: f64,
    pub correlation: f64,
}

pub fn reduce_angle(a: f64) -> f64 {
    // rem_euclid can round up to exactly 2π for tiny negative inputs.
    let r = a.rem_euclid(TAU);
    if r >= TAU {
        0.0
    } else {
        r
    }
}

/// Rotate (x, p) by θ: x' = x cosθ − p sinθ, p' = x sinθ + p cosθ.
#[inline]
pub fn rotate(x: f64, p: f64, theta: f64) -> (f64, f64) {
    let (s, c) = theta.sin_cos();
    (x * c - p * s, x * s + p * c)
}

/// Undo the fast drift using the pilot paired with each pulse.
///
/// θ_fast = −atan2(P_pilot, X_pilot). Pulses whose pilot magnitude is below
/// `gate` are left unrotated and marked invalid.
pub fn compensate_fast_phase(
    sig: &QuadraturePairs,
    pilot: &QuadraturePairs,
    gate: f64,
) -> Result<(QuadraturePairs, Vec<f64>)> {
    if sig.len() != pilot.len() {
        return Err(Error::InvalidInput(format!(
            "{} pulses but {} pilot estimates",
            sig.len(),
            pilot.len()
        )));
    }
    let mut out = sig.clone();
    let mut theta = Vec::with_capacity(sig.len());
    for i in 0..sig.len() {
        let (xp, pp) = (pilot.x[i], pilot.p[i]);
        if !(xp.hypot(pp) >= gate) || !pilot.valid[i] {
            out.valid[i] = false;
            theta.push(0.0);
            continue;
        }
        let th = -pp.atan2(xp);
        let (x, p) = rotate(sig.x[i], sig.p[i], th);
        out.x[i] = x;
        out.p[i] = p;
        theta.push(reduce_angle(th));
    }
    Ok((out.advance(Stage::FastCompensated)?, theta))
}

/// Sum of z·conj(a) over valid pulses, with the two energies for normalisation.
fn cross_sum(sig: &QuadraturePairs, alice: &SymbolBlock) -> (f64, f64, f64, f64) {
    let (mut re, mut im, mut ez, mut ea) = (0.0, 0.0, 0.0, 0.0);
    for i in 0..sig.len() {
        if !sig.valid[i] {
            continue;
        }
        let (x, p) = (sig.x[i], sig.p[i]);
        let (xa, pa) = (alice.x_a[i], alice.p_a[i]);
        re += x * xa + p * pa;
        im += p * xa - x * pa;
        ez += x * x + p * p;
        ea += xa * xa + pa * pa;
    }
    (re, im, ez, ea)
}

/// Normalised correlation between the reference and the signal rotated by θ.
pub fn slow_phase_correlation(sig: &QuadraturePairs, alice: &SymbolBlock, theta: f64) -> f64 {
    let (re, im, ez, ea) = cross_sum(sig, alice);
    let norm = (ez * ea).sqrt();
    if norm == 0.0 {
        return 0.0;
    }
    let (s, c) = theta.sin_cos();
    (re * c - im * s) / norm
}

/// Rotate every pulse by the same angle and mark the block slow-compensated.
pub fn apply_slow_phase(sig: &QuadraturePairs, theta: f64) -> Result<QuadraturePairs> {
    let mut out = sig.clone();
    let (s, c) = theta.sin_cos();
    for (x, p) in out.x.iter_mut().zip(out.p.iter_mut()) {
        let (a, b) = (*x, *p);
        *x = a * c - b * s;
        *p = a * s + b * c;
    }
    out.advance(Stage::SlowCompensated)
}

/// Scan `grid` evenly spaced angles, refine the best one by golden-section
/// search over its neighbouring cells, then rotate the signal by the result.
pub fn search_slow_phase(
    sig: &QuadraturePairs,
    alice: &SymbolBlock,
    grid: usize,
    threshold: f64,
) -> Result<(PhaseEstimate, QuadraturePairs)> {
    if sig.len() != alice.len() {
        return Err(Error::InvalidInput(format!(
            "signal has {} pulses, reference {}",
            sig.len(),
            alice.len()
        )));
    }
    if grid < 3 {
        return Err(Error::InvalidInput("phase grid needs at least 3 points".into()));
    }
    let (re, im, ez, ea) = cross_sum(sig, alice);
    let norm = (ez * ea).sqrt();
    let corr = |theta: f64| {
        if norm == 0.0 {
            0.0
        } else {
            let (s, c) = theta.sin_cos();
            (re * c - im * s) / norm
        }
    };
    let step = TAU / grid as f64;
    let mut best = 0;
    let mut best_val = f64::NEG_INFINITY;
    for g in 0..grid {
        let v = corr(g as f64 * step);
        if v > best_val {
            best_val = v;
            best = g;
        }
    }
    let theta = golden_max(&corr, best as f64 * step - step, best as f64 * step + step);
    let correlation = corr(theta).clamp(-1.0, 1.0);
    if !(correlation >= threshold) {
        return Err(Error::PhaseLockFailed { correlation, threshold });
    }
    let theta_slow = reduce_angle(theta);
    let rotated = apply_slow_phase(sig, theta_slow)?;
    Ok((PhaseEstimate { theta_fast: Vec::new(), theta_slow, correlation }, rotated))
}

fn golden_max(f: &impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > GOLDEN_TOL {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}
