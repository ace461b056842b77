//! Mutual information, Holevo bound, finite-size penalty and secret key rate
//! for Gaussian-modulated coherent states with heterodyne detection and
//! reverse reconciliation.

use crate::error::{Error, Result};
use crate::estimation::ChannelEstimate;
use crate::model::SystemParams;

const DISC_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KeyRateReport {
    pub i_ab: f64,
    pub chi_be: f64,
    pub delta_n: f64,
    /// Secret key rate in bit/s, clamped at zero.
    pub k_rate: f64,
    /// Unclamped key rate; negative when no key can be extracted.
    pub k_raw: f64,
    pub chi_line: f64,
    pub chi_het: f64,
    pub chi_tot: f64,
    pub lambdas: [f64; 5],
    pub plob: f64,
    pub t_used: f64,
    pub eps_used: f64,
}

pub fn channel_noises(t: f64, eps: f64, eta: f64, v_el: f64) -> Result<(f64, f64, f64)> {
    if !(t > 0.0 && t <= 1.0) {
        return Err(Error::InvalidInput(format!("transmittance must lie in (0, 1] ({t})")));
    }
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(Error::InvalidInput(format!("eta must lie in (0, 1] ({eta})")));
    }
    let chi_line = 1.0 / t - 1.0 + eps;
    let chi_het = (1.0 + (1.0 - eta) + 2.0 * v_el) / eta;
    Ok((chi_line, chi_het, chi_line + chi_het / t))
}

pub fn mutual_information(v: f64, chi_tot: f64) -> f64 {
    ((v + chi_tot) / (1.0 + chi_tot)).log2()
}

fn pair_from(a: f64, b: f64) -> Result<(f64, f64)> {
    let mut disc = a * a - 4.0 * b;
    if disc < 0.0 {
        if disc < -DISC_TOL {
            return Err(Error::NonphysicalCovariance(disc));
        }
        disc = 0.0;
    }
    let r = disc.sqrt();
    Ok(((0.5 * (a + r)).sqrt(), (0.5 * (a - r)).max(0.0).sqrt()))
}

pub fn symplectic_eigenvalues(v: f64, t: f64, chi_line: f64, chi_het: f64, chi_tot: f64) -> Result<[f64; 5]> {
    let a = v * v * (1.0 - 2.0 * t) + 2.0 * t + t * t * (v + chi_line).powi(2);
    let b = t * t * (v * chi_line + 1.0).powi(2);
    let sb = b.sqrt();
    let norm = t * t * (v + chi_tot).powi(2);
    let c = (a * chi_het * chi_het
        + b
        + 1.0
        + 2.0 * chi_het * (v * sb + t * (v + chi_line))
        + 2.0 * t * (v * v - 1.0))
        / norm;
    let d = ((v + sb * chi_het) / (t * (v + chi_tot))).powi(2);
    let (l1, l2) = pair_from(a, b)?;
    let (l3, l4) = pair_from(c, d)?;
    Ok([l1, l2, l3, l4, 1.0])
}

/// Von Neumann entropy of a thermal mode with mean photon number `x`.
pub fn g_entropy(x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    (x + 1.0) * (x + 1.0).log2() - x * x.log2()
}

pub fn holevo_bound(lambdas: &[f64; 5]) -> f64 {
    let g = |l: f64| g_entropy((l.max(1.0) - 1.0) / 2.0);
    g(lambdas[0]) + g(lambdas[1]) - g(lambdas[2]) - g(lambdas[3]) - g(lambdas[4])
}

pub fn finite_size_penalty(n: f64, zeta: f64, zeta_pa: f64) -> Result<f64> {
    if !(n >= 1.0) {
        return Err(Error::InvalidInput(format!("n must be at least 1 ({n})")));
    }
    Ok(7.0 * ((2.0 / zeta).log2() / n).sqrt() + 2.0 / n * (1.0 / zeta_pa).log2())
}

pub fn plob_bound(t: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&t) {
        return Err(Error::InvalidInput(format!("PLOB bound needs 0 <= T < 1 ({t})")));
    }
    Ok(-(1.0 - t).log2())
}

/// Holevo-bound ingredients at a given (T, ε).
#[derive(Debug, Clone, Copy)]
pub struct AsymptoticTerms {
    pub i_ab: f64,
    pub chi_be: f64,
    pub chi_line: f64,
    pub chi_het: f64,
    pub chi_tot: f64,
    pub lambdas: [f64; 5],
}

pub fn asymptotic_terms(p: &SystemParams, t: f64, eps: f64) -> Result<AsymptoticTerms> {
    let v = p.v_a + 1.0;
    let (chi_line, chi_het, chi_tot) = channel_noises(t, eps, p.eta, p.v_el)?;
    let lambdas = symplectic_eigenvalues(v, t, chi_line, chi_het, chi_tot)?;
    Ok(AsymptoticTerms {
        i_ab: mutual_information(v, chi_tot),
        chi_be: holevo_bound(&lambdas),
        chi_line,
        chi_het,
        chi_tot,
        lambdas,
    })
}

/// Finite-size key rate evaluated at an explicit (T, ε) pair.
pub fn key_rate_at(p: &SystemParams, t: f64, eps: f64) -> Result<KeyRateReport> {
    let a = asymptotic_terms(p, t, eps)?;
    let n = p.key_n as f64;
    let delta_n = finite_size_penalty(n, p.zeta_pe, p.zeta_pa)?;
    let k_raw = p.f_sym * (n / p.block_n as f64) * (1.0 - p.fer) * (p.beta * a.i_ab - a.chi_be - delta_n);
    let plob = if t < 1.0 { plob_bound(t)? } else { f64::INFINITY };
    Ok(KeyRateReport {
        i_ab: a.i_ab,
        chi_be: a.chi_be,
        delta_n,
        k_rate: k_raw.max(0.0),
        k_raw,
        chi_line: a.chi_line,
        chi_het: a.chi_het,
        chi_tot: a.chi_tot,
        lambdas: a.lambdas,
        plob,
        t_used: t,
        eps_used: eps,
    })
}

/// Asymptotic rate: all symbols used for the key and no finite-size penalty.
pub fn asymptotic_key_rate(p: &SystemParams, t: f64, eps: f64) -> Result<f64> {
    let a = asymptotic_terms(p, t, eps)?;
    Ok(p.f_sym * (1.0 - p.fer) * (p.beta * a.i_ab - a.chi_be))
}

/// Headline key rate using the worst-case bounds of the estimate.
pub fn secret_key_rate(p: &SystemParams, est: &ChannelEstimate) -> Result<KeyRateReport> {
    if est.t_min <= 0.0 {
        let mut r = key_rate_at(p, est.t_hat.max(f64::MIN_POSITIVE), est.eps_max)?;
        r.k_raw = f64::NEG_INFINITY;
        r.k_rate = 0.0;
        r.t_used = 0.0;
        return Ok(r);
    }
    key_rate_at(p, est.t_min, est.eps_max)
}

/// Key rate at the point estimates of the channel.
pub fn point_key_rate(p: &SystemParams, est: &ChannelEstimate) -> Result<KeyRateReport> {
    key_rate_at(p, est.t_hat, est.eps_hat)
}
