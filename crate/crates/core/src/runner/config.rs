//! TOML scenario files with `[scenario]`, `[system]`, `[numerics]` and
//! `[output]` sections. Keys absent from the file fall back to the preset
//! named in `[scenario]`, if any.

use std::path::Path;

use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use super::{preset, InitialState, Scenario, StateName};
use crate::error::{Error, Result};
use crate::jcdyn::{ModelParams, NumericsConfig};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_state: Option<InitialState>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default)]
    pub columns: Vec<String>,
}

/// Raw file contents; `system` and `numerics` stay untyped until merged.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(default)]
    pub scenario: ScenarioSection,
    #[serde(default)]
    pub system: Table,
    #[serde(default)]
    pub numerics: Table,
    #[serde(default)]
    pub output: OutputSection,
}

fn cfg_err(e: impl std::fmt::Display) -> Error {
    Error::Config(e.to_string())
}

fn overlay<T: Serialize + for<'de> Deserialize<'de>>(
    base: &T,
    over: &Table,
    section: &str,
) -> Result<T> {
    let mut t = match Value::try_from(base).map_err(cfg_err)? {
        Value::Table(t) => t,
        _ => unreachable!("structs serialise to tables"),
    };
    for (k, v) in over {
        if !t.contains_key(k) && !(section == "system" && k == "beta_a") {
            return Err(Error::Config(format!("unknown key {k:?} in [{section}]")));
        }
        t.insert(k.clone(), v.clone());
    }
    Value::Table(t)
        .try_into()
        .map_err(|e| Error::Config(format!("[{section}]: {e}")))
}

use super::output::CSV_COLUMNS as KNOWN_COLUMNS;

pub fn parse_config(text: &str) -> Result<Scenario> {
    let file: ConfigFile = toml::from_str(text).map_err(cfg_err)?;
    let base = match &file.scenario.preset {
        Some(p) => preset(p)?,
        None => {
            for key in ["omega_a", "omega_b", "g", "beta_b"] {
                if !file.system.contains_key(key) {
                    return Err(Error::Config(format!(
                        "[system] needs {key:?} when no preset is given"
                    )));
                }
            }
            Scenario {
                name: "custom".into(),
                params: ModelParams {
                    omega_a: 1.0,
                    omega_b: 1.0,
                    g: 0.0,
                    beta_a: None,
                    beta_b: 1.0,
                },
                cfg: NumericsConfig::default(),
                initial_state: InitialState::Named(StateName::Thermal),
                outputs: Vec::new(),
            }
        }
    };
    let params: ModelParams = overlay(&base.params, &file.system, "system")?;
    let cfg: NumericsConfig = overlay(&base.cfg, &file.numerics, "numerics")?;
    for c in &file.output.columns {
        if !KNOWN_COLUMNS.contains(&c.as_str()) {
            return Err(Error::Config(format!("unknown output column {c:?}")));
        }
    }
    let s = Scenario {
        name: file.scenario.name.unwrap_or(base.name),
        params,
        cfg,
        initial_state: file.scenario.initial_state.unwrap_or(base.initial_state),
        outputs: if file.output.columns.is_empty() {
            base.outputs
        } else {
            file.output.columns
        },
    };
    s.validate().map_err(|e| Error::Config(e.to_string()))?;
    Ok(s)
}

pub fn load_config(path: &Path) -> Result<Scenario> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    parse_config(&text)
}

/// Self-contained config text that [`parse_config`] maps back to `s`.
pub fn scenario_to_toml(s: &Scenario) -> Result<String> {
    let table = |v: Value| match v {
        Value::Table(t) => t,
        _ => Table::new(),
    };
    let file = ConfigFile {
        scenario: ScenarioSection {
            preset: None,
            name: Some(s.name.clone()),
            initial_state: Some(s.initial_state),
        },
        system: table(Value::try_from(s.params).map_err(cfg_err)?),
        numerics: table(Value::try_from(s.cfg).map_err(cfg_err)?),
        output: OutputSection {
            columns: s.outputs.clone(),
        },
    };
    toml::to_string(&file).map_err(cfg_err)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jcdyn::FockCutoff;

    #[test]
    fn preset_with_overrides() {
        let s = parse_config(
            r#"
[scenario]
preset = "fig1"
initial_state = { x = 0.2, y = 0.0, z = -0.5 }
[numerics]
n_steps = 50
fock_cutoff = 40
"#,
        )
        .unwrap();
        assert_eq!(s.name, "fig1");
        assert_eq!(s.params.g, 0.03);
        assert_eq!(s.cfg.n_steps, 50);
        assert_eq!(s.cfg.fock_cutoff, FockCutoff::Fixed(40));
        assert_eq!(
            s.initial_state,
            InitialState::Bloch {
                x: 0.2,
                y: 0.0,
                z: -0.5
            }
        );
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(
            parse_config("[system]\ng = 0.1\n"),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            parse_config("[scenario]\npreset = \"fig1\"\n[numerics]\nbogus = 1\n"),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            parse_config("[scenario]\npreset = \"fig1\"\n[system]\ng = -1.0\n"),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            parse_config("[scenario]\npreset = \"fig1\"\n[output]\ncolumns = [\"nope\"]\n"),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn round_trip() {
        for mut s in super::super::presets() {
            s.outputs = vec!["sigma_fp".into()];
            let text = scenario_to_toml(&s).unwrap();
            assert_eq!(parse_config(&text).unwrap(), s, "{text}");
        }
    }
}
