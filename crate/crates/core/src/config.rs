//! TOML configuration files.
//!
//! Top-level keys are [`SystemParams`] fields. Optional tables `[sim]` and
//! `[dsp]` hold simulator and receiver settings; `[scenario]` is kept as a raw
//! table for the caller to interpret. Unknown keys anywhere are errors.

use std::path::Path;

use crate::dsp::DspConfig;
use crate::error::{Error, Result};
use crate::model::{validate_params, SystemParams};
use crate::simulator::SimConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigFile {
    pub params: SystemParams,
    pub sim: SimConfig,
    pub dsp: DspConfig,
    pub scenario: toml::Table,
}

fn take_table(root: &mut toml::Table, name: &str) -> Result<toml::Table> {
    match root.remove(name) {
        None => Ok(toml::Table::new()),
        Some(toml::Value::Table(t)) => Ok(t),
        Some(other) => Err(Error::Config(format!("`{name}` must be a table, found {}", other.type_str()))),
    }
}

fn from_table<T: serde::de::DeserializeOwned>(t: toml::Table, what: &str) -> Result<T> {
    toml::Value::Table(t)
        .try_into()
        .map_err(|e| Error::Config(format!("{what}: {e}")))
}

/// Parse configuration text. Missing parameters take the 80 km preset values,
/// except `key_n`, which defaults to half of `block_N`.
pub fn parse_config(text: &str) -> Result<ConfigFile> {
    let mut root: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
    let sim = from_table(take_table(&mut root, "sim")?, "[sim]")?;
    let dsp = from_table(take_table(&mut root, "dsp")?, "[dsp]")?;
    let scenario = take_table(&mut root, "scenario")?;
    let has_key_n = root.contains_key("key_n");
    let mut raw: SystemParams = from_table(root, "parameters")?;
    if !has_key_n {
        raw.key_n = raw.block_n / 2;
    }
    let params = validate_params(raw)?;
    Ok(ConfigFile { params, sim, dsp, scenario })
}

pub fn load_config(path: &Path) -> Result<ConfigFile> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    parse_config(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_80km_preset() {
        let c = parse_config("").unwrap();
        assert_eq!(c.params, validate_params(SystemParams::preset_80km()).unwrap());
        assert_eq!(c.sim, SimConfig::default());
        assert!(c.scenario.is_empty());
    }

    #[test]
    fn key_n_defaults_to_half_block() {
        let c = parse_config("block_N = 1000").unwrap();
        assert_eq!(c.params.key_n, 500);
        let c = parse_config("block_N = 1000\nkey_n = 100").unwrap();
        assert_eq!(c.params.key_n, 100);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(matches!(parse_config("etaa = 0.5"), Err(Error::Config(_))));
        assert!(matches!(parse_config("[sim]\nbogus = 1"), Err(Error::Config(_))));
        assert!(matches!(parse_config("[dsp]\nfit_order = \"x\""), Err(Error::Config(_))));
        assert!(matches!(parse_config("sim = 3"), Err(Error::Config(_))));
    }

    #[test]
    fn invalid_values_reported() {
        assert!(matches!(parse_config("eta = 1.5"), Err(Error::InvalidParams(_))));
    }

    #[test]
    fn tables_and_renamed_keys() {
        let text = "V_A = 9.41\nFER = 0.2\n[sim]\nblock_pulses = 123\n[dsp]\nls_enabled = false\npilot_interp = \"hold\"\n[scenario]\noutputs = [\"budget\"]\n";
        let c = parse_config(text).unwrap();
        assert_eq!(c.params.v_a, 9.41);
        assert_eq!(c.params.fer, 0.2);
        assert_eq!(c.sim.block_pulses, 123);
        assert!(!c.dsp.ls_enabled);
        assert_eq!(c.dsp.pilot_interp, crate::dsp::PilotInterp::Hold);
        assert!(c.scenario.contains_key("outputs"));
    }
}
