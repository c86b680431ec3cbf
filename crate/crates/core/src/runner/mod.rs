//! Scenarios, presets and the run entry points behind the CLI.

mod config;
mod output;
mod verify;

pub use config::{load_config, parse_config, scenario_to_toml, ConfigFile};
pub use output::{csv_string, format_float, manifest, write_outputs, CSV_HEADER};
pub use verify::{
    master_equation_deviation, random_qubit_states, run_verify, verify_scenario, MeDeviation,
    VerifyOptions, VerifyReport,
};

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::eprod::{EntropySample, TraceEngine};
use crate::error::{Error, Result};
use crate::jcdyn::{ExactReducedMap, ModelParams, NumericsConfig};
use crate::memdiv::{
    blp_contractive, cp_divisible, initial_state_grid, intervals, p_divisible_with,
    sigma_fp_min_with_map, sigma_map_grid,
};
use crate::qstate::{density_from_bloch, thermal_state, BlochVector, DensityMatrix};
use crate::rates::{thermal_fixed_point, RateModel, RateSet};

/// Initial qubit state of a scenario.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InitialState {
    Named(StateName),
    Bloch { x: f64, y: f64, z: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StateName {
    /// Gibbs state at `beta_a`.
    Thermal,
    /// Minimisation over the whole Bloch ball, no single trajectory.
    Grid,
}

impl InitialState {
    pub fn density(&self, params: &ModelParams) -> Result<DensityMatrix> {
        match *self {
            InitialState::Named(StateName::Thermal) => {
                let b = params
                    .beta_a
                    .ok_or_else(|| Error::Config("thermal initial state needs beta_a".into()))?;
                thermal_state(&[params.omega_a, 0.0], b)
            }
            InitialState::Named(StateName::Grid) => Err(Error::Config(
                "initial_state = \"grid\" has no single trajectory; give a Bloch vector or thermal"
                    .into(),
            )),
            InitialState::Bloch { x, y, z } => density_from_bloch(&BlochVector::new(x, y, z)?),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub params: ModelParams,
    pub cfg: NumericsConfig,
    pub initial_state: InitialState,
    /// Series listed in the JSON manifest; empty means the default set.
    #[serde(default)]
    pub outputs: Vec<String>,
}

pub const PRESET_NAMES: [&str; 3] = ["fig1", "fig2", "fig4"];

/// `β_A` used for single-trajectory checks on presets that leave it unset.
pub const PROBE_BETA_A: f64 = 1.1;

pub fn preset(name: &str) -> Result<Scenario> {
    let (omega_b, g, beta_a, beta_b, gt_max, state) = match name {
        "fig1" => (0.6, 0.03, Some(1.1), 0.3, 20.0, StateName::Thermal),
        "fig2" => (0.6, 0.3, Some(1.1), 0.3, 20.0, StateName::Thermal),
        "fig4" => (0.99, 0.3, None, 3.0, 16.0, StateName::Grid),
        _ => {
            return Err(Error::Config(format!(
                "unknown preset {name:?}; available: {}",
                PRESET_NAMES.join(", ")
            )))
        }
    };
    let params = ModelParams::new(1.0, omega_b, g, beta_a, beta_b)?;
    let cfg = NumericsConfig {
        t_max: gt_max / g,
        ..NumericsConfig::default()
    };
    Ok(Scenario {
        name: name.into(),
        params,
        cfg,
        initial_state: InitialState::Named(state),
        outputs: Vec::new(),
    })
}

pub fn presets() -> Vec<Scenario> {
    PRESET_NAMES
        .iter()
        .map(|n| preset(n).expect("shipped preset"))
        .collect()
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        self.cfg.validate()
    }

    /// Copy with a single-trajectory initial state, using [`PROBE_BETA_A`]
    /// when the scenario has none.
    pub fn with_probe_state(&self) -> Scenario {
        let mut s = self.clone();
        if s.params.beta_a.is_none() {
            s.params.beta_a = Some(PROBE_BETA_A);
        }
        if s.initial_state == InitialState::Named(StateName::Grid) {
            s.initial_state = InitialState::Named(StateName::Thermal);
        }
        s
    }
}

/// One output row. Entropy fields are `None` in divisibility runs; the
/// divisibility flags are `None` at masked times.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub t: f64,
    pub gt: f64,
    pub entropy: Option<EntropySample>,
    pub rates: RateSet,
    pub cp_div: Option<bool>,
    pub p_div: Option<bool>,
    pub blp: Option<bool>,
    pub sigma_min: f64,
    pub sigma_map: f64,
    pub masked: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub scenario: String,
    pub passed: bool,
    pub measured: f64,
    pub tolerance: f64,
    /// Location and values of the worst offender.
    pub detail: String,
}

impl Check {
    pub fn new(
        name: &str,
        scenario: &str,
        passed: bool,
        measured: f64,
        tolerance: f64,
        detail: String,
    ) -> Self {
        Self {
            name: name.into(),
            scenario: scenario.into(),
            passed,
            measured,
            tolerance,
            detail,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunKind {
    Trace,
    Divisibility,
    Verify,
}

/// Maximal run of grid times with a constant verdict.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub gt_start: f64,
    pub gt_end: f64,
    pub p_div: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub kind: RunKind,
    pub scenario: Scenario,
    pub rows: Vec<Row>,
    pub intervals: Vec<Interval>,
    pub checks: Vec<Check>,
    pub wall_time: f64,
}

impl RunReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

fn flags(rs: &RateSet, cfg: &NumericsConfig) -> (Option<bool>, Option<bool>, Option<bool>) {
    let band = cfg.sign_band;
    (
        cp_divisible(rs, band).ok(),
        p_divisible_with(rs, band, cfg.gamma_convention).ok(),
        blp_contractive(rs, band).ok(),
    )
}

fn map_value(rs: &RateSet, params: &ModelParams, cfg: &NumericsConfig) -> f64 {
    sigma_map_grid(rs, &thermal_fixed_point(params), cfg)
        .map(|g| g.value())
        .unwrap_or(f64::NAN)
}

/// Entropy-production time series for one initial state.
pub fn run_trace(scenario: &Scenario) -> Result<RunReport> {
    let start = Instant::now();
    scenario.validate()?;
    let rho0 = scenario.initial_state.density(&scenario.params)?;
    let engine = TraceEngine::new(&rho0, &scenario.params, &scenario.cfg)?;
    let cfg = scenario.cfg;
    let rows = cfg
        .time_grid()
        .par_iter()
        .map(|&t| {
            let tr = engine.row(t)?;
            let (cp_div, p_div, blp) = flags(&tr.rates, &cfg);
            Ok(Row {
                t,
                gt: tr.sample.gt,
                entropy: Some(tr.sample),
                rates: tr.rates,
                cp_div,
                p_div,
                blp,
                sigma_min: f64::NAN,
                sigma_map: map_value(&tr.rates, &scenario.params, &cfg),
                masked: tr.sample.masked,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RunReport {
        kind: RunKind::Trace,
        scenario: scenario.clone(),
        intervals: p_div_intervals(&rows),
        rows,
        checks: Vec::new(),
        wall_time: start.elapsed().as_secs_f64(),
    })
}

/// Divisibility flags, `σ^fp_min` and `σ_map` on the time grid.
pub fn run_divisibility(scenario: &Scenario) -> Result<RunReport> {
    let start = Instant::now();
    scenario.validate()?;
    let params = scenario.params;
    let cfg = scenario.cfg;
    let cutoff = cfg.cutoff(&params);
    let model = RateModel::new(&params, cutoff);
    let grid = initial_state_grid(cfg.state_grid);
    let fp = thermal_fixed_point(&params);
    let rows: Vec<Row> = cfg
        .time_grid()
        .par_iter()
        .map(|&t| {
            let rs = model.rate_set(t);
            let map = ExactReducedMap::new(&params, cutoff, t);
            let smin = sigma_fp_min_with_map(&map, &fp, &grid, cfg.state_grid);
            let (cp_div, p_div, blp) = flags(&rs, &cfg);
            Row {
                t,
                gt: t * params.g,
                entropy: None,
                rates: rs,
                cp_div,
                p_div,
                blp,
                sigma_min: smin.value,
                sigma_map: map_value(&rs, &params, &cfg),
                masked: rs.singular,
            }
        })
        .collect();
    Ok(RunReport {
        kind: RunKind::Divisibility,
        scenario: scenario.clone(),
        intervals: p_div_intervals(&rows),
        rows,
        checks: Vec::new(),
        wall_time: start.elapsed().as_secs_f64(),
    })
}

pub fn p_div_intervals(rows: &[Row]) -> Vec<Interval> {
    let gts: Vec<f64> = rows.iter().map(|r| r.gt).collect();
    let v: Vec<Option<bool>> = rows.iter().map(|r| r.p_div).collect();
    intervals(&gts, &v)
        .into_iter()
        .map(|(a, b, p)| Interval {
            gt_start: a,
            gt_end: b,
            p_div: p,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_have_expected_parameters() {
        let f1 = preset("fig1").unwrap();
        assert_eq!(f1.params.omega_b, 0.6);
        assert_eq!(f1.params.omega_a - f1.params.omega_b, 0.4);
        assert_eq!(f1.params.g, 0.03);
        assert_eq!(f1.params.beta_a, Some(1.1));
        assert_eq!(f1.params.beta_b, 0.3);
        assert_eq!(preset("fig2").unwrap().params.g, 0.3);
        let f4 = preset("fig4").unwrap();
        assert_eq!(
            (f4.params.omega_b, f4.params.g, f4.params.beta_b),
            (0.99, 0.3, 3.0)
        );
        assert!(f4.params.beta_a.is_none());
        assert!(matches!(preset("fig9"), Err(Error::Config(_))));
    }

    #[test]
    fn grid_state_rejected_for_trace() {
        let s = preset("fig4").unwrap();
        assert!(matches!(run_trace(&s), Err(Error::Config(_))));
        let p = s.with_probe_state();
        assert_eq!(p.params.beta_a, Some(PROBE_BETA_A));
    }

    #[test]
    fn decoupled_trace_is_zero() {
        let mut s = preset("fig1").unwrap();
        s.params.g = 0.0;
        s.cfg.t_max = 5.0;
        s.cfg.n_steps = 10;
        let rep = run_trace(&s).unwrap();
        for r in &rep.rows {
            let e = r.entropy.unwrap();
            for v in [
                e.sigma_es,
                e.sigma_co,
                e.sigma_fp,
                e.di_ab,
                r.rates.gamma1,
                r.rates.gamma2,
                r.rates.gamma3,
            ] {
                assert!(v.abs() < 1e-9, "{r:?}");
            }
        }
    }

    #[test]
    fn cp_synthetic_rates_give_one_interval() {
        let rows: Vec<Row> = (0..5)
            .map(|k| {
                let rs = RateSet::from_rates(k as f64, 1.0, 0.3, 0.2, 0.1);
                let (cp_div, p_div, blp) = flags(&rs, &NumericsConfig::default());
                Row {
                    t: k as f64,
                    gt: k as f64,
                    entropy: None,
                    rates: rs,
                    cp_div,
                    p_div,
                    blp,
                    sigma_min: 0.0,
                    sigma_map: 0.0,
                    masked: false,
                }
            })
            .collect();
        assert_eq!(
            p_div_intervals(&rows),
            vec![Interval {
                gt_start: 0.0,
                gt_end: 4.0,
                p_div: true
            }]
        );
    }
}
