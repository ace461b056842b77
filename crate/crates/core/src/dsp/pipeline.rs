//! Receiver chain: offset estimate, down-conversion, low-pass filter,
//! per-pulse extraction (least-squares fit or nearest sample), interference
//! cancellation, fast and slow phase compensation, then channel estimation.

use num_complex::Complex64;
use rand::seq::index::sample;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::filter::{butterworth_sections, filter_pad, filtfilt, lowpass_butterworth};
use super::lsfit::NormalSolver;
use super::phase::{apply_slow_phase, compensate_fast_phase, search_slow_phase, PhaseEstimate};
use super::spectral::{downconvert, estimate_freq_offset, Baseband};
use crate::error::{Error, Result};
use crate::estimation::{estimate_channel, ChannelEstimate};
use crate::model::{QuadraturePairs, Stage, SystemParams, Units};
use crate::pulse::PulseShape;
use crate::simulator::{FrameSchedule, SampledTrace, SlotKind, SymbolBlock};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PilotInterp {
    /// Average of the pilots on either side of the pulse.
    Linear,
    /// Preceding pilot only.
    Hold,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DspConfig {
    pub ls_enabled: bool,
    pub fit_order: usize,
    pub fit_window: usize,
    pub lpf_bandwidth: f64,
    pub lpf_order: usize,
    pub pilot_interp: PilotInterp,
    /// Pilots averaged on each side of a pulse (1 uses only the adjacent ones).
    pub pilot_window: usize,
    /// Pilots weaker than this fraction of the median pilot flag their pulse.
    pub pilot_gate: f64,
    pub phase_grid: usize,
    /// Lock threshold in standard deviations of the no-signal correlation.
    pub lock_sigmas: f64,
    pub carrier_gate_db: f64,
    pub fft_len: usize,
    /// Neighbouring slots on each side included in interference cancellation.
    pub isi_taps: usize,
    /// Cancellation passes; 0 only divides out the main-tap gain.
    pub isi_iterations: usize,
    /// Fractional-offset grid resolution of the response table.
    pub response_grid: usize,
}

impl Default for DspConfig {
    fn default() -> Self {
        DspConfig {
            ls_enabled: true,
            fit_order: 3,
            fit_window: 10,
            lpf_bandwidth: 100e6,
            lpf_order: 4,
            pilot_interp: PilotInterp::Linear,
            pilot_window: 1,
            pilot_gate: 0.3,
            phase_grid: 256,
            lock_sigmas: 5.0,
            carrier_gate_db: 20.0,
            fft_len: 1 << 18,
            isi_taps: 10,
            isi_iterations: 3,
            response_grid: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PipelineReport {
    pub ls_enabled: bool,
    pub offset_hz: f64,
    pub theta_slow: f64,
    pub correlation: f64,
    pub v_error: f64,
    pub flagged_count: usize,
    pub m: usize,
    pub t_hat: f64,
    pub eps_hat: f64,
    pub t_min: f64,
    pub eps_max: f64,
}

impl PipelineReport {
    pub const CSV_HEADER: &'static str =
        "block_id,ls_enabled,offset_hz,theta_slow,correlation,v_error,flagged,m,t_hat,eps_hat,t_min,eps_max";

    pub fn csv_row(&self, block_id: u64) -> String {
        format!(
            "{block_id},{},{:.3},{:.9},{:.9},{:.9e},{},{},{:.9e},{:.9e},{:.9e},{:.9e}",
            self.ls_enabled,
            self.offset_hz,
            self.theta_slow,
            self.correlation,
            self.v_error,
            self.flagged_count,
            self.m,
            self.t_hat,
            self.eps_hat,
            self.t_min,
            self.eps_max
        )
    }
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    /// All quantum pulses after slow-phase compensation, in SNU at Bob.
    pub pairs: QuadraturePairs,
    /// Sorted indices of the pulses disclosed for parameter estimation.
    pub disclosed: Vec<usize>,
    pub phase: PhaseEstimate,
    pub estimate: ChannelEstimate,
    pub report: PipelineReport,
}

/// How one slot value is read off the filtered baseband.
#[derive(Debug, Clone, Copy)]
enum Extractor {
    /// Polynomial fit over `window` samples, evaluated at the slot centre.
    Fit { order: usize, window: usize },
    /// The sample nearest the slot centre.
    Nearest,
}

impl Extractor {
    fn from_config(dsp: &DspConfig) -> Result<Self> {
        if !dsp.ls_enabled {
            return Ok(Extractor::Nearest);
        }
        if dsp.fit_window < 5 || dsp.fit_window <= dsp.fit_order {
            return Err(Error::InvalidInput(format!(
                "fit window {} too short for order {}",
                dsp.fit_window, dsp.fit_order
            )));
        }
        Ok(Extractor::Fit { order: dsp.fit_order, window: dsp.fit_window })
    }

    /// First sample of the window relative to the anchor sample.
    fn first(&self) -> isize {
        match *self {
            Extractor::Fit { window, .. } => 1 - (window / 2) as isize,
            Extractor::Nearest => 0,
        }
    }

    /// Value at the slot centre, given samples `x`/`p` and the time of each
    /// sample relative to the centre in sample periods.
    fn eval(&self, u: &[f64], x: &[f64], p: &[f64], frac: f64) -> Result<(f64, f64)> {
        match *self {
            Extractor::Fit { order, .. } => {
                let solver = NormalSolver::new(u, order)?;
                Ok((solver.solve(x)[0], solver.solve(p)[0]))
            }
            Extractor::Nearest => {
                let k = usize::from(frac >= 0.5);
                Ok((x[k], p[k]))
            }
        }
    }

    fn span(&self) -> usize {
        match *self {
            Extractor::Fit { window, .. } => window,
            Extractor::Nearest => 2,
        }
    }
}

/// Response of the filter plus extractor to a unit pulse in slot s−k, read
/// at slot s, tabulated against the fractional sample offset of the centre.
#[derive(Debug, Clone)]
struct ResponseTable {
    grid: usize,
    taps: usize,
    h: Vec<f64>,
}

impl ResponseTable {
    fn build(pulse: &PulseShape, f_samp: f64, dsp: &DspConfig, ex: Extractor) -> Result<Self> {
        let grid = dsp.response_grid.max(1);
        let taps = dsp.isi_taps;
        let width = 2 * taps + 1;
        let sections = butterworth_sections(dsp.lpf_bandwidth, f_samp, dsp.lpf_order)?;
        let pad = filter_pad(dsp.lpf_bandwidth, f_samp, dsp.lpf_order);
        let ts_samples = pulse.period * f_samp;
        let reach = ((pulse.span_slots + taps + 1) as f64 * ts_samples).ceil() as isize + pad as isize;
        let first = ex.first();
        let span = ex.span();
        let mut h = vec![0.0; (grid + 1) * width];
        let mut u = vec![0.0; span];
        for g in 0..=grid {
            let frac = g as f64 / grid as f64;
            for (j, uj) in u.iter_mut().enumerate() {
                *uj = (first + j as isize) as f64 - frac;
            }
            for k in -(taps as isize)..=taps as isize {
                let mut seq: Vec<f64> = (-reach..=reach)
                    .map(|n| pulse.value((n as f64 - frac) / f_samp + k as f64 * pulse.period))
                    .collect();
                filtfilt(&sections, &mut seq, pad);
                let at = (reach + first) as usize;
                let win = &seq[at..at + span];
                let zeros = vec![0.0; span];
                let (v, _) = ex.eval(&u, win, &zeros, frac)?;
                h[g * width + (k + taps as isize) as usize] = v;
            }
        }
        Ok(ResponseTable { grid, taps, h })
    }

    /// Interpolated taps at fractional offset `frac` in [0, 1], written into `out`.
    fn taps_at(&self, frac: f64, out: &mut [f64]) {
        let width = 2 * self.taps + 1;
        let pos = frac.clamp(0.0, 1.0) * self.grid as f64;
        let g = (pos.floor() as usize).min(self.grid - usize::from(self.grid > 0));
        let w = pos - g as f64;
        let (a, b) = (&self.h[g * width..(g + 1) * width], &self.h[(g + 1).min(self.grid) * width..]);
        for k in 0..width {
            out[k] = a[k] * (1.0 - w) + b[k] * w;
        }
    }
}

/// Sample anchor and fractional offset for each slot centre.
fn locate_slots(trace: &SampledTrace, n_slots: usize, slot_period: f64, use_actual: bool) -> Vec<(usize, f64)> {
    let n = trace.len();
    let fs = trace.f_samp;
    let mut out = Vec::with_capacity(n_slots);
    let mut i = 0usize;
    for s in 0..n_slots {
        let c = (s as f64 + 0.5) * slot_period;
        if use_actual {
            let t = &trace.actual_times;
            while i + 1 < n && t[i + 1] <= c {
                i += 1;
            }
            while i > 0 && t[i] > c {
                i -= 1;
            }
            let frac = if i + 1 < n { ((c - t[i]) / (t[i + 1] - t[i])).clamp(0.0, 1.0) } else { 0.0 };
            out.push((i, frac));
        } else {
            let pos = c * fs;
            let base = pos.floor();
            out.push((base as usize, pos - base));
        }
    }
    out
}

fn extract_slots(
    bb: &Baseband,
    trace: &SampledTrace,
    anchors: &[(usize, f64)],
    ex: Extractor,
    use_actual: bool,
) -> Result<Vec<Complex64>> {
    let n = bb.len() as isize;
    let first = ex.first();
    let span = ex.span();
    let fs = bb.f_samp;
    let slot_period = trace.pulse.period;
    let mut u = vec![0.0; span];
    let mut out = Vec::with_capacity(anchors.len());
    for (s, &(i, frac)) in anchors.iter().enumerate() {
        let c = (s as f64 + 0.5) * slot_period;
        let lo = (i as isize + first).clamp(0, (n - span as isize).max(0)) as usize;
        for (j, uj) in u.iter_mut().enumerate() {
            let k = lo + j;
            *uj = if use_actual {
                (trace.actual_times[k] - c) * fs
            } else {
                k as f64 - c * fs
            };
        }
        let (x, p) = ex.eval(&u, &bb.x[lo..lo + span], &bb.p[lo..lo + span], frac)?;
        out.push(Complex64::new(x, p));
    }
    Ok(out)
}

/// Jacobi iterations of z_s = Σ_k h_k(frac_s)·a_{s−k} for the slot amplitudes a.
fn cancel_interference(z: &[Complex64], anchors: &[(usize, f64)], table: &ResponseTable, iterations: usize) -> Vec<Complex64> {
    let taps = table.taps as isize;
    let width = 2 * table.taps + 1;
    let n = z.len() as isize;
    let mut h = vec![0.0; width];
    let mut est: Vec<Complex64> = z
        .iter()
        .zip(anchors)
        .map(|(v, &(_, f))| {
            table.taps_at(f, &mut h);
            v / h[table.taps]
        })
        .collect();
    let mut next = vec![Complex64::new(0.0, 0.0); z.len()];
    for _ in 0..iterations {
        for s in 0..n {
            table.taps_at(anchors[s as usize].1, &mut h);
            let mut acc = z[s as usize];
            for k in -taps..=taps {
                let j = s - k;
                if k == 0 || j < 0 || j >= n {
                    continue;
                }
                acc -= est[j as usize] * h[(k + taps) as usize];
            }
            next[s as usize] = acc / h[table.taps];
        }
        std::mem::swap(&mut est, &mut next);
    }
    est
}

/// Recover Alice's quadratures from a sampled trace.
pub fn run_pipeline(
    trace: &SampledTrace,
    alice: &SymbolBlock,
    params: &SystemParams,
    dsp: &DspConfig,
) -> Result<PipelineOutput> {
    let n_q = alice.len();
    if n_q < 2 {
        return Err(Error::InvalidInput("need at least two quantum pulses".into()));
    }
    let frame = FrameSchedule::build(n_q, params.pilot_ratio, 0.0);
    let ex = Extractor::from_config(dsp)?;

    let offset_hz = estimate_freq_offset(trace, dsp.carrier_gate_db, dsp.fft_len)?;
    log::debug!("carrier offset {offset_hz:.1} Hz");
    let bb = downconvert(trace, offset_hz)?;
    let bb = lowpass_butterworth(bb, dsp.lpf_bandwidth, dsp.lpf_order)?;

    let use_actual = dsp.ls_enabled;
    let anchors = locate_slots(trace, frame.len(), trace.pulse.period, use_actual);
    let raw = extract_slots(&bb, trace, &anchors, ex, use_actual)?;
    drop(bb);
    let table = ResponseTable::build(&trace.pulse, trace.f_samp, dsp, ex)?;
    let slots = cancel_interference(&raw, &anchors, &table, dsp.isi_iterations);
    drop(raw);

    // Split quantum pulses and their pilot references.
    let pilot_slots: Vec<usize> = (0..frame.len()).filter(|&s| frame.slots[s].kind == SlotKind::Pilot).collect();
    let mut prefix = Vec::with_capacity(pilot_slots.len() + 1);
    prefix.push(Complex64::new(0.0, 0.0));
    for &s in &pilot_slots {
        let last = *prefix.last().unwrap();
        prefix.push(last + slots[s]);
    }
    let w = dsp.pilot_window.max(1);
    let mut qx = Vec::with_capacity(n_q);
    let mut qp = Vec::with_capacity(n_q);
    let mut px = Vec::with_capacity(n_q);
    let mut pp = Vec::with_capacity(n_q);
    let mut next_pilot = 0usize;
    for q in 0..n_q {
        let s = frame.quantum_slot(q);
        qx.push(slots[s].re);
        qp.push(slots[s].im);
        while next_pilot < pilot_slots.len() && pilot_slots[next_pilot] < s {
            next_pilot += 1;
        }
        // Pilots [lo, hi) in pilot order; the guard band guarantees one on each side.
        let lo = next_pilot.saturating_sub(w);
        let hi = match dsp.pilot_interp {
            PilotInterp::Linear => (next_pilot + w).min(pilot_slots.len()),
            PilotInterp::Hold => next_pilot,
        };
        let pilot = (prefix[hi] - prefix[lo]) / (hi - lo) as f64;
        px.push(pilot.re);
        pp.push(pilot.im);
    }
    let mut mags: Vec<f64> = frame
        .slots
        .iter()
        .zip(&slots)
        .filter(|(sl, _)| sl.kind == SlotKind::Pilot)
        .map(|(_, v)| v.norm())
        .collect();
    let mid = mags.len() / 2;
    let (_, median, _) = mags.select_nth_unstable_by(mid, |a, b| a.total_cmp(b));
    let gate = dsp.pilot_gate * *median;
    drop(slots);

    let fitted_stage = if dsp.ls_enabled { Stage::LsFitted } else { Stage::Filtered };
    let sig = QuadraturePairs::new(qx, qp, Stage::Raw, Units::Snu)?.advance(fitted_stage)?;
    let pil = QuadraturePairs::new(px, pp, Stage::Raw, Units::Snu)?.advance(fitted_stage)?;
    let (fast, theta_fast) = compensate_fast_phase(&sig, &pil, gate)?;
    drop(pil);
    let flagged_count = fast.len() - fast.valid_count();
    if flagged_count > 0 {
        log::warn!("{flagged_count} pulses flagged by the pilot gate");
    }

    let disclosed = disclosed_subset(n_q, params, alice.seed);
    let m = disclosed.len();
    let threshold = dsp.lock_sigmas / (2.0 * m as f64).sqrt();
    let alice_sub = alice.select(&disclosed);
    let (slow_est, _) = search_slow_phase(&fast.select(&disclosed), &alice_sub, dsp.phase_grid, threshold)?;
    let pairs = apply_slow_phase(&fast, slow_est.theta_slow)?;
    let estimate = estimate_channel(&alice_sub, &pairs.select(&disclosed), params)?;

    let report = PipelineReport {
        ls_enabled: dsp.ls_enabled,
        offset_hz,
        theta_slow: slow_est.theta_slow,
        correlation: slow_est.correlation,
        v_error: estimate.v_error,
        flagged_count,
        m: estimate.m,
        t_hat: estimate.t_hat,
        eps_hat: estimate.eps_hat,
        t_min: estimate.t_min,
        eps_max: estimate.eps_max,
    };
    let phase = PhaseEstimate { theta_fast, ..slow_est };
    Ok(PipelineOutput { pairs, disclosed, phase, estimate, report })
}

/// Pulses disclosed for estimation, in the block's n/N proportion.
pub fn disclosed_subset(n: usize, params: &SystemParams, block_seed: u64) -> Vec<usize> {
    let frac = params.disclosed_n() as f64 / params.block_n as f64;
    let m = ((n as f64 * frac).round() as usize).clamp(2.min(n), n);
    if m == n {
        return (0..n).collect();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.rng_seed ^ block_seed);
    let mut idx = sample(&mut rng, n, m).into_vec();
    idx.sort_unstable();
    idx
}
