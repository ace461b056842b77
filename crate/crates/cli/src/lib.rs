//! Scenario runner: loads a config, drives the simulator, receiver chain,
//! estimation, key-rate and post-processing stages, and writes CSV reports.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Deserialize;

use cvqkd_core::config::{load_config, ConfigFile};
use cvqkd_core::dsp::{run_pipeline, DspConfig, PipelineReport};
use cvqkd_core::estimation::worst_case_bounds;
use cvqkd_core::keyrate::{asymptotic_key_rate, key_rate_at, point_key_rate, secret_key_rate};
use cvqkd_core::noise_budget::{total_budget, JitterScenario, NoiseBudget};
use cvqkd_core::postproc::{pa_output_length, simulate_reconciliation, toeplitz_hash, BitBlock, BitOrigin};
use cvqkd_core::simulator::{simulate, SimConfig};
use cvqkd_core::SystemParams;

/// Environment variable naming the directory that receives all artifacts.
pub const OUT_DIR_ENV: &str = "CVQKD_OUT_DIR";
const DEFAULT_OUT_DIR: &str = "cvqkd-out";
/// Symbols per simulated reconciliation frame.
const FRAME_SYMBOLS: usize = 1 << 14;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{stage} failed: {source}")]
    Runtime {
        stage: &'static str,
        #[source]
        source: cvqkd_core::Error,
    },
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    /// Process exit status: 1 for configuration problems, 2 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            _ => 2,
        }
    }
}

fn stage(stage: &'static str) -> impl FnOnce(cvqkd_core::Error) -> CliError {
    move |source| CliError::Runtime { stage, source }
}

fn config_err(e: cvqkd_core::Error) -> CliError {
    match e {
        cvqkd_core::Error::Config(msg) => CliError::Config(msg),
        other => CliError::Config(other.to_string()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputKind {
    Budget,
    Pipeline,
    KeyrateSweep,
    JitterStudy,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRange {
    pub from_km: f64,
    pub to_km: f64,
    pub step_km: f64,
}

impl SweepRange {
    pub fn distances(&self) -> Result<Vec<f64>, CliError> {
        if !(self.step_km > 0.0) || !(self.to_km >= self.from_km) || !(self.from_km >= 0.0) {
            return Err(CliError::Config(format!(
                "sweep needs 0 <= from <= to and step > 0 (from {}, to {}, step {})",
                self.from_km, self.to_km, self.step_km
            )));
        }
        let n = ((self.to_km - self.from_km) / self.step_km + 1e-9).floor() as usize;
        Ok((0..=n).map(|i| self.from_km + i as f64 * self.step_km).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JitterStudyConfig {
    pub ppm: f64,
    pub seeds: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub params: SystemParams,
    pub sim: SimConfig,
    pub dsp: DspConfig,
    pub n_blocks: usize,
    pub ls_enabled: bool,
    pub outputs: Vec<OutputKind>,
    pub sweep: SweepRange,
    pub jitter: JitterStudyConfig,
    /// Worker threads; 0 picks the rayon default.
    pub threads: usize,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioTable {
    #[serde(default)]
    outputs: Vec<OutputKind>,
    #[serde(default = "one")]
    n_blocks: usize,
    ls_enabled: Option<bool>,
    #[serde(default)]
    sweep_from_km: f64,
    #[serde(default = "default_sweep_to")]
    sweep_to_km: f64,
    #[serde(default = "default_sweep_step")]
    sweep_step_km: f64,
    jitter_ppm: Option<f64>,
    #[serde(default = "default_jitter_seeds")]
    jitter_seeds: usize,
    #[serde(default)]
    threads: usize,
}

fn one() -> usize {
    1
}
fn default_sweep_to() -> f64 {
    150.0
}
fn default_sweep_step() -> f64 {
    5.0
}
fn default_jitter_seeds() -> usize {
    20
}

impl Scenario {
    /// Build a scenario from a parsed config. An empty `outputs` list is allowed
    /// here; [`run_scenario`] rejects it.
    pub fn from_config(cfg: ConfigFile) -> Result<Self, CliError> {
        let table: ScenarioTable = toml::Value::Table(cfg.scenario)
            .try_into()
            .map_err(|e| CliError::Config(format!("[scenario]: {e}")))?;
        if table.n_blocks == 0 {
            return Err(CliError::Config("n_blocks must be at least 1".into()));
        }
        if table.jitter_seeds == 0 {
            return Err(CliError::Config("jitter_seeds must be at least 1".into()));
        }
        let ls_enabled = table.ls_enabled.unwrap_or(cfg.dsp.ls_enabled);
        Ok(Scenario {
            jitter: JitterStudyConfig { ppm: table.jitter_ppm.unwrap_or(cfg.params.jitter_ppm), seeds: table.jitter_seeds },
            params: cfg.params,
            sim: cfg.sim,
            dsp: DspConfig { ls_enabled, ..cfg.dsp },
            n_blocks: table.n_blocks,
            ls_enabled,
            outputs: table.outputs,
            sweep: SweepRange { from_km: table.sweep_from_km, to_km: table.sweep_to_km, step_km: table.sweep_step_km },
            threads: table.threads,
        })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        Self::from_config(load_config(path).map_err(config_err)?)
    }
}

pub fn out_dir() -> PathBuf {
    std::env::var_os(OUT_DIR_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
}

fn write_file(dir: &Path, name: &str, contents: &[u8]) -> Result<PathBuf, CliError> {
    fs::create_dir_all(dir).map_err(|source| CliError::Io { path: dir.to_path_buf(), source })?;
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|source| CliError::Io { path: path.clone(), source })?;
    Ok(path)
}

/// Seed of block `b`, derived from the scenario seed.
pub fn block_seed(base: u64, b: u64) -> u64 {
    base ^ (b.wrapping_add(1)).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

fn with_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
        Ok(pool) => pool.install(f),
        Err(e) => {
            log::warn!("falling back to the global thread pool: {e}");
            f()
        }
    }
}

pub fn budget(params: &SystemParams) -> Result<NoiseBudget, CliError> {
    let scenario = JitterScenario::ideal(params.transmittance(), params.v_a, params.eta);
    total_budget(params, &scenario).map_err(stage("noise budget"))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub distance_km: f64,
    pub t: f64,
    /// Finite-size rate at the worst-case bounds (bit/s).
    pub k_bps: f64,
    /// Finite-size rate at the point values (bit/s).
    pub k_point_bps: f64,
    pub k_asymptotic_bps: f64,
    /// PLOB capacity per channel use.
    pub plob_bits_per_use: f64,
    pub eps_used: f64,
}

impl SweepRow {
    pub const CSV_HEADER: &'static str =
        "distance_km,T,K_bps,K_point_bps,K_asymptotic_bps,plob_bits_per_use,plob_bps,eps_used";

    pub fn plob_bps(&self, f_sym: f64) -> f64 {
        self.plob_bits_per_use * f_sym
    }
}

/// Key rate against distance with the configured excess noise held fixed.
pub fn sweep_distance(params: &SystemParams, range: &SweepRange) -> Result<Vec<SweepRow>, CliError> {
    let m = params.disclosed_n() as usize;
    range
        .distances()?
        .into_iter()
        .map(|km| {
            let p = params.with_length(km);
            let t = p.transmittance();
            let eps = p.excess_noise;
            let (t_min, eps_max) = worst_case_bounds(t, eps, m, &p).map_err(stage("worst-case bounds"))?;
            let k_bps = if t_min > 0.0 {
                key_rate_at(&p, t_min, eps_max).map_err(stage("key rate"))?.k_rate
            } else {
                0.0
            };
            let point = key_rate_at(&p, t, eps).map_err(stage("key rate"))?;
            let k_asymptotic_bps = asymptotic_key_rate(&p, t, eps).map_err(stage("key rate"))?.max(0.0);
            Ok(SweepRow {
                distance_km: km,
                t,
                k_bps,
                k_point_bps: point.k_rate,
                k_asymptotic_bps,
                plob_bits_per_use: point.plob,
                eps_used: eps,
            })
        })
        .collect()
}

pub fn sweep_csv(rows: &[SweepRow], f_sym: f64) -> String {
    let mut s = String::from(SweepRow::CSV_HEADER);
    s.push('\n');
    for r in rows {
        let _ = writeln!(
            s,
            "{:.3},{:.9e},{:.9e},{:.9e},{:.9e},{:.9e},{:.9e},{:.9e}",
            r.distance_km,
            r.t,
            r.k_bps,
            r.k_point_bps,
            r.k_asymptotic_bps,
            r.plob_bits_per_use,
            r.plob_bps(f_sym),
            r.eps_used
        );
    }
    s
}

#[derive(Debug, Clone, PartialEq)]
pub struct JitterRow {
    pub seed: u64,
    pub ppm: f64,
    pub t_true: f64,
    pub t_hat_ls_on: f64,
    pub t_hat_ls_off: f64,
    /// Largest accumulated clock offset over the block (s).
    pub max_offset_s: f64,
}

impl JitterRow {
    pub const CSV_HEADER: &'static str = "seed,jitter_ppm,T_true,t_hat_ls_on,err_ls_on,t_hat_ls_off,err_ls_off,max_offset_ns";

    pub fn err_ls_on(&self) -> f64 {
        (self.t_hat_ls_on - self.t_true).abs() / self.t_true
    }

    pub fn err_ls_off(&self) -> f64 {
        (self.t_hat_ls_off - self.t_true).abs() / self.t_true
    }
}

/// Transmittance estimation error with and without the least-squares stage,
/// one simulated block per seed. Every symbol of the block is disclosed.
pub fn jitter_study(scenario: &Scenario, ppm: f64, seeds: usize) -> Result<Vec<JitterRow>, CliError> {
    let mut params = scenario.params.clone();
    params.jitter_ppm = ppm;
    params.key_n = 0;
    let sim_cfg = SimConfig { enable_jitter: ppm > 0.0, ..scenario.sim.clone() };
    let t_true = params.transmittance();
    let run = |i: usize| -> Result<JitterRow, CliError> {
        let seed = block_seed(params.rng_seed, i as u64);
        log::info!("jitter study seed {seed}");
        let sim = simulate(&params, &sim_cfg, seed).map_err(stage("simulation"))?;
        let mut t_hat = [0.0; 2];
        for (slot, ls) in [true, false].into_iter().enumerate() {
            let dsp = DspConfig { ls_enabled: ls, ..scenario.dsp.clone() };
            let out = run_pipeline(&sim.trace, &sim.alice, &params, &dsp).map_err(stage("receiver pipeline"))?;
            t_hat[slot] = out.estimate.t_hat;
        }
        let max_offset_s = sim
            .trace
            .actual_times
            .iter()
            .step_by(1000)
            .enumerate()
            .fold(0.0f64, |m, (k, &t)| m.max((t - sim.trace.nominal_time(k * 1000)).abs()));
        Ok(JitterRow { seed, ppm, t_true, t_hat_ls_on: t_hat[0], t_hat_ls_off: t_hat[1], max_offset_s })
    };
    with_pool(scenario.threads, || (0..seeds).into_par_iter().map(run).collect())
}

pub fn jitter_csv(rows: &[JitterRow]) -> String {
    let mut s = String::from(JitterRow::CSV_HEADER);
    s.push('\n');
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{:.9e},{:.9e},{:.6e},{:.9e},{:.6e},{:.4}",
            r.seed,
            r.ppm,
            r.t_true,
            r.t_hat_ls_on,
            r.err_ls_on(),
            r.t_hat_ls_off,
            r.err_ls_off(),
            r.max_offset_s * 1e9
        );
    }
    s
}

#[derive(Debug, Clone)]
pub struct BlockResult {
    pub block_id: u64,
    pub seed: u64,
    pub report: PipelineReport,
    pub k_bps: f64,
    pub k_point_bps: f64,
    pub frames: usize,
    pub frames_kept: usize,
    pub key: BitBlock,
}

/// Simulate, recover, estimate, rate and distil one block.
pub fn run_block(scenario: &Scenario, block_id: u64) -> Result<BlockResult, CliError> {
    let p = &scenario.params;
    let seed = block_seed(p.rng_seed, block_id);
    log::info!("block {block_id} seed {seed}");
    let sim = simulate(p, &scenario.sim, seed).map_err(stage("simulation"))?;
    let out = run_pipeline(&sim.trace, &sim.alice, p, &scenario.dsp).map_err(stage("receiver pipeline"))?;
    drop(sim);
    let worst = secret_key_rate(p, &out.estimate).map_err(stage("key rate"))?;
    let point = point_key_rate(p, &out.estimate).map_err(stage("key rate"))?;

    // Key symbols are those not disclosed for estimation.
    let mut disclosed = out.disclosed.iter().peekable();
    let key_idx: Vec<usize> = (0..out.pairs.len())
        .filter(|i| {
            if disclosed.peek() == Some(&i) {
                disclosed.next();
                false
            } else {
                true
            }
        })
        .collect();
    let frames = key_idx.len() / FRAME_SYMBOLS;
    let (kept, _) = simulate_reconciliation(frames, p.beta, p.fer, seed).map_err(stage("reconciliation"))?;
    let kept_symbols = kept.len() * FRAME_SYMBOLS;
    let bits_per_symbol = if worst.k_raw > 0.0 { p.beta * worst.i_ab - worst.chi_be - worst.delta_n } else { 0.0 };
    let out_len = pa_output_length(kept_symbols as u64, bits_per_symbol) as usize;

    let mut raw_bits = Vec::with_capacity(2 * kept_symbols);
    for &f in &kept {
        for &i in &key_idx[f * FRAME_SYMBOLS..(f + 1) * FRAME_SYMBOLS] {
            raw_bits.push(out.pairs.x[i] >= 0.0);
            raw_bits.push(out.pairs.p[i] >= 0.0);
        }
    }
    let key = if out_len > 0 && !raw_bits.is_empty() {
        let input = BitBlock::from_bools(&raw_bits, BitOrigin::Corrected, block_id);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let hash_seed = BitBlock::random(input.len + out_len - 1, &mut rng, BitOrigin::Corrected, block_id);
        toeplitz_hash(&input, &hash_seed, out_len).map_err(stage("privacy amplification"))?
    } else {
        log::warn!("block {block_id}: worst-case key rate is zero, no key distilled");
        BitBlock::zeros(0, BitOrigin::Amplified, block_id)
    };
    Ok(BlockResult {
        block_id,
        seed,
        report: out.report,
        k_bps: worst.k_rate,
        k_point_bps: point.k_rate,
        frames,
        frames_kept: kept.len(),
        key,
    })
}

/// Execute every requested output and return the files written, in order.
pub fn run_scenario(scenario: &Scenario, dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    if scenario.outputs.is_empty() {
        return Err(CliError::Config("scenario requests no outputs".into()));
    }
    let p = &scenario.params;
    let mut written = Vec::new();
    for kind in &scenario.outputs {
        match kind {
            OutputKind::Budget => {
                let b = budget(p)?;
                written.push(write_file(dir, "budget.csv", b.to_csv().as_bytes())?);
                written.push(write_file(dir, "budget.txt", b.to_table().as_bytes())?);
            }
            OutputKind::KeyrateSweep => {
                let rows = sweep_distance(p, &scenario.sweep)?;
                written.push(write_file(dir, "keyrate_sweep.csv", sweep_csv(&rows, p.f_sym).as_bytes())?);
            }
            OutputKind::JitterStudy => {
                let rows = jitter_study(scenario, scenario.jitter.ppm, scenario.jitter.seeds)?;
                written.push(write_file(dir, "jitter_study.csv", jitter_csv(&rows).as_bytes())?);
            }
            OutputKind::Pipeline => {
                let blocks: Vec<BlockResult> = with_pool(scenario.threads, || {
                    (0..scenario.n_blocks as u64)
                        .into_par_iter()
                        .map(|b| run_block(scenario, b))
                        .collect::<Result<Vec<_>, _>>()
                })?;
                let mut pipe = format!("seed,{}\n", PipelineReport::CSV_HEADER);
                let mut rates = String::from("block_id,seed,K_bps,K_point_bps\n");
                let mut post = String::from("block_id,seed,frames,frames_kept,key_bits\n");
                for b in &blocks {
                    let _ = writeln!(pipe, "{},{}", b.seed, b.report.csv_row(b.block_id));
                    let _ = writeln!(rates, "{},{},{:.9e},{:.9e}", b.block_id, b.seed, b.k_bps, b.k_point_bps);
                    let _ = writeln!(post, "{},{},{},{},{}", b.block_id, b.seed, b.frames, b.frames_kept, b.key.len);
                    let mut bytes = Vec::new();
                    b.key.write_to(&mut bytes).map_err(stage("key serialisation"))?;
                    written.push(write_file(dir, &format!("key_block{}.bin", b.block_id), &bytes)?);
                }
                written.push(write_file(dir, "pipeline.csv", pipe.as_bytes())?);
                written.push(write_file(dir, "keyrate.csv", rates.as_bytes())?);
                written.push(write_file(dir, "postproc.csv", post.as_bytes())?);
            }
        }
    }
    Ok(written)
}
