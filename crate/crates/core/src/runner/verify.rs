//! Invariant and theorem suite run by `epmem verify`.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{run_divisibility, run_trace, Check, Row, Scenario};
use crate::error::{Error, Result};
use crate::jcdyn::{
    conserved_quantities, joint_observables, ExactReducedMap, NumericsConfig, ProductEvolution,
};
use crate::memdiv::{
    blp_contractive, cp_divisible, p_divisible, random_rate_sets, sigma_map_grid,
    sigma_map_sign_analytic, theorem1_check_with, MapSign, TheoremReport,
};
use crate::qstate::{density_from_bloch, trace_distance, BlochVector, DensityMatrix};
use crate::rates::{fixed_point, integrate_master_equation_batch, thermal_fixed_point, RateSet};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VerifyOptions {
    pub fuzz_samples: usize,
    pub seed: u64,
    /// Random initial states for the master-equation comparison.
    pub me_states: usize,
    /// `gt` range of the master-equation comparison.
    pub me_gt_max: f64,
    /// Times at which the dense joint state is formed.
    pub conservation_samples: usize,
    /// Feeds the divisibility classifier rates with `γ₂ → −γ₂`.
    pub flip_gamma2: bool,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            fuzz_samples: 10_000,
            seed: 20_240_917,
            me_states: 20,
            me_gt_max: 20.0,
            conservation_samples: 12,
            flip_gamma2: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub target: String,
    pub checks: Vec<Check>,
    pub wall_time: f64,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn scoreboard(&self) -> String {
        let mut s = String::new();
        for c in &self.checks {
            s.push_str(&format!(
                "{} {:<32} {:<6} measured={:.3e} tol={:.1e}{}\n",
                if c.passed { "PASS" } else { "FAIL" },
                c.name,
                c.scenario,
                c.measured,
                c.tolerance,
                if c.detail.is_empty() {
                    String::new()
                } else {
                    format!("  {}", c.detail)
                }
            ));
        }
        let n_fail = self.checks.iter().filter(|c| !c.passed).count();
        s.push_str(&format!(
            "{} checks, {} failed, {:.1} s\n",
            self.checks.len(),
            n_fail,
            self.wall_time
        ));
        s
    }
}

fn failed(name: &str, scen: &str, e: &Error) -> Check {
    Check::new(name, scen, false, f64::NAN, f64::NAN, e.to_string())
}

/// Worst value of `f` over `items`, as `(value, index)`.
fn worst<T>(items: &[T], f: impl Fn(&T) -> Option<f64>) -> (f64, usize) {
    items
        .iter()
        .enumerate()
        .filter_map(|(i, x)| f(x).map(|v| (v, i)))
        .fold((f64::NEG_INFINITY, 0), |a, b| if b.0 > a.0 { b } else { a })
}

fn mutate(rs: &RateSet, flip: bool) -> RateSet {
    if flip {
        RateSet {
            gamma2: -rs.gamma2,
            ..*rs
        }
    } else {
        *rs
    }
}

fn theorem_check(name: &str, scen: &str, rates: &[RateSet], band: f64, flip: bool) -> Check {
    let rep: TheoremReport =
        theorem1_check_with(rates, band, |rs| p_divisible(&mutate(rs, flip), band));
    let detail = match rep.mismatches.first() {
        Some(m) => format!(
            "{} mismatches; first at t={} (γ1={:e}, γ2={:e}, γ3={:e}) p_div={} σ_map sign={:?}",
            rep.mismatches.len(),
            m.rates.t,
            m.rates.gamma1,
            m.rates.gamma2,
            m.rates.gamma3,
            m.p_div,
            m.sign
        ),
        None => format!(
            "{} checked, {} in zero band, {} masked",
            rep.checked, rep.zero_band, rep.masked
        ),
    };
    Check::new(
        name,
        scen,
        rep.passed(),
        rep.mismatches.len() as f64,
        0.0,
        detail,
    )
}

fn divisibility_checks(s: &Scenario, rows: &[Row], opts: &VerifyOptions) -> Vec<Check> {
    let name = s.name.as_str();
    let band = s.cfg.sign_band;
    let live: Vec<&Row> = rows.iter().filter(|r| !r.masked).collect();
    let mut out = Vec::new();

    let exact = thermal_fixed_point(&s.params).p1_fp;
    let (dev, i) = worst(&live, |r| {
        fixed_point(&r.rates)
            .ok()
            .map(|fp| (fp.p1_fp - exact).abs())
    });
    out.push(Check::new(
        "fixed_point_constancy",
        name,
        dev <= 1e-8,
        dev,
        1e-8,
        live.get(i)
            .map_or(String::new(), |r| format!("worst at gt={}", r.gt)),
    ));

    let rates: Vec<RateSet> = rows.iter().map(|r| r.rates).collect();
    out.push(theorem_check(
        "theorem1",
        name,
        &rates,
        band,
        opts.flip_gamma2,
    ));

    let bad_nest = live.iter().find(|r| {
        (r.cp_div == Some(true) && r.p_div != Some(true))
            || (r.p_div == Some(true) && r.blp != Some(true))
    });
    out.push(Check::new(
        "nesting_cp_p_blp",
        name,
        bad_nest.is_none(),
        bad_nest.map_or(0.0, |r| r.gt),
        0.0,
        bad_nest.map_or(String::new(), |r| format!("violated at gt={}", r.gt)),
    ));

    let n_states = crate::memdiv::initial_state_grid(s.cfg.state_grid).len();
    let pdiv: Vec<&Row> = live
        .iter()
        .copied()
        .filter(|r| r.p_div == Some(true))
        .collect();
    let (neg, i) = worst(&pdiv, |r| Some(-r.sigma_min));
    let min_val = if pdiv.is_empty() { f64::INFINITY } else { -neg };
    out.push(Check::new(
        "p_div_implies_sigma_min_nonneg",
        name,
        min_val >= -1e-8 && n_states >= 500,
        min_val,
        -1e-8,
        match pdiv.get(i) {
            Some(r) if !pdiv.is_empty() => format!(
                "{} P-div times, {n_states} states, worst at gt={}",
                pdiv.len(),
                r.gt
            ),
            _ => format!("no P-div times, {n_states} states"),
        },
    ));

    let (gap, i) = worst(&live, |r| Some(r.sigma_map - r.sigma_min));
    out.push(Check::new(
        "sigma_map_lower_bound",
        name,
        gap <= 1e-8,
        gap,
        1e-8,
        live.get(i)
            .map_or(String::new(), |r| format!("worst at gt={}", r.gt)),
    ));
    out
}

/// Checks on the single trajectory of `s` (which must have a definite state).
fn trajectory_checks(s: &Scenario, opts: &VerifyOptions) -> Result<Vec<Check>> {
    let name = s.name.as_str();
    let mut out = Vec::new();
    let rho0 = s.initial_state.density(&s.params)?;
    let evo = ProductEvolution::new(&rho0, &s.params, &s.cfg)?;
    let times = s.cfg.time_grid();

    let tops: Vec<f64> = times
        .par_iter()
        .map(|&t| evo.top_level_population(t))
        .collect();
    let (leak, i) = worst(&tops, |&v| Some(v));
    let limit = 10.0 * s.cfg.tail_tol;
    out.push(Check::new(
        "cutoff_convergence",
        name,
        leak <= limit,
        leak,
        limit,
        format!(
            "cutoff {}, top-level population {leak:.3e} at t={}",
            evo.cutoff(),
            times[i]
        ),
    ));
    if leak > limit {
        return Ok(out);
    }

    let trace = run_trace(s)?;
    let samples: Vec<_> = trace
        .rows
        .iter()
        .filter_map(|r| r.entropy)
        .filter(|e| !e.masked)
        .collect();
    let scale = samples.iter().map(|e| e.sigma_fp.abs()).fold(0.0, f64::max);
    let (d, i) = worst(&samples, |e| Some((e.sigma_es - e.sigma_fp).abs()));
    let tol = 1e-6 * scale;
    out.push(Check::new(
        "sigma_es_equals_sigma_fp",
        name,
        d <= tol,
        d,
        tol,
        samples
            .get(i)
            .map_or(String::new(), |e| format!("worst at gt={}", e.gt)),
    ));

    let snaps = times
        .par_iter()
        .map(|&t| evo.snapshot(t).map(|sn| sn.obs))
        .collect::<Result<Vec<_>>>()?;
    let (neg_i, i) = worst(&snaps, |o| Some(-o.i_ab));
    out.push(Check::new(
        "mutual_information_nonneg",
        name,
        -neg_i >= -1e-10,
        -neg_i,
        -1e-10,
        format!("min at t={}", times[i]),
    ));
    let o0 = &snaps[0];
    let (neg_int, i) = worst(&snaps, |o| {
        Some(-((o.s_a - o0.s_a) + s.params.beta_b * (o.e_b - o0.e_b)))
    });
    out.push(Check::new(
        "integrated_sigma_es_nonneg",
        name,
        -neg_int >= -1e-6,
        -neg_int,
        -1e-6,
        format!("min at t={}", times[i]),
    ));

    let k = s.cfg.n_steps / opts.conservation_samples.clamp(1, s.cfg.n_steps);
    let sample_times: Vec<f64> = times.iter().copied().step_by(k.max(1)).collect();
    let dense = sample_times
        .par_iter()
        .map(|&t| {
            let js = evo.joint_state(t)?;
            let obs = joint_observables(&js)?;
            let (e, n) = conserved_quantities(&js);
            Ok((obs.s_ab, e, n))
        })
        .collect::<Result<Vec<_>>>()?;
    let (s0, e0, n0) = dense[0];
    let drift = |f: fn(&(f64, f64, f64)) -> f64, v0: f64| {
        dense.iter().map(|x| (f(x) - v0).abs()).fold(0.0, f64::max)
    };
    for (label, d) in [
        ("joint_entropy_constant", drift(|x| x.0, s0)),
        ("total_energy_constant", drift(|x| x.1, e0)),
        ("excitation_number_constant", drift(|x| x.2, n0)),
    ] {
        out.push(Check::new(
            label,
            name,
            d <= 1e-9,
            d,
            1e-9,
            format!("{} dense samples", dense.len()),
        ));
    }
    Ok(out)
}

/// Uniform random points of the Bloch ball.
pub fn random_qubit_states(n: usize, seed: u64) -> Vec<DensityMatrix> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let r: f64 = rng.gen::<f64>().cbrt();
            let cz: f64 = rng.gen_range(-1.0..=1.0);
            let phi: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
            let sz = (1.0 - cz * cz).sqrt();
            let b = BlochVector::new(r * sz * phi.cos(), r * sz * phi.sin(), r * cz)
                .expect("inside the ball");
            density_from_bloch(&b).expect("valid Bloch vector")
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeDeviation {
    pub max_trace_distance: f64,
    pub t_worst: f64,
    /// Grid points where the population was re-seated analytically.
    pub bridged: usize,
    pub grid_points: usize,
}

/// Sup over the grid and the states of the trace distance between the
/// master-equation solution and the exact reduced state.
pub fn master_equation_deviation(
    s: &Scenario,
    n_states: usize,
    gt_max: f64,
    seed: u64,
) -> Result<MeDeviation> {
    let cfg = NumericsConfig {
        t_max: gt_max / s.params.g,
        ..s.cfg
    };
    let times = cfg.time_grid();
    let states = random_qubit_states(n_states, seed);
    let sols = integrate_master_equation_batch(&states, &s.params, &cfg, &times)?;
    let n_bridged = sols
        .first()
        .map_or(0, |s| s.bridged.iter().filter(|&&b| b).count());
    let cutoff = cfg.cutoff(&s.params);
    let per_time = times
        .par_iter()
        .enumerate()
        .map(|(k, &t)| {
            let map = ExactReducedMap::new(&s.params, cutoff, t);
            let mut m = 0.0f64;
            for (rho0, sol) in states.iter().zip(&sols) {
                let exact = DensityMatrix::new_unchecked(map.apply(rho0.matrix()).0)?;
                m = m.max(trace_distance(&exact, &sol.states[k])?);
            }
            Ok((m, t))
        })
        .collect::<Result<Vec<_>>>()?;
    let (d, t) = per_time
        .into_iter()
        .fold((0.0, 0.0), |a, b| if b.0 > a.0 { b } else { a });
    Ok(MeDeviation {
        max_trace_distance: d,
        t_worst: t,
        bridged: n_bridged,
        grid_points: times.len(),
    })
}

/// The per-scenario suite. Scenarios without a single initial state use
/// the probe state for trajectory checks.
pub fn verify_scenario(s: &Scenario, opts: &VerifyOptions) -> Vec<Check> {
    let name = s.name.as_str();
    let mut out = Vec::new();
    let probe = s.with_probe_state();
    match trajectory_checks(&probe, opts) {
        Ok(c) => {
            let stop = c
                .iter()
                .any(|c| c.name == "cutoff_convergence" && !c.passed);
            out.extend(c);
            if stop {
                return out;
            }
        }
        Err(e) => {
            out.push(failed("trajectory", name, &e));
            return out;
        }
    }
    match run_divisibility(s) {
        Ok(rep) => out.extend(divisibility_checks(s, &rep.rows, opts)),
        Err(e) => out.push(failed("divisibility", name, &e)),
    }
    match master_equation_deviation(s, opts.me_states, opts.me_gt_max, opts.seed) {
        Ok(m) => out.push(Check::new(
            "master_equation_vs_exact",
            name,
            m.max_trace_distance <= 1e-6,
            m.max_trace_distance,
            1e-6,
            format!(
                "{} states, worst at gt={}, {} of {} grid points bridged",
                opts.me_states,
                m.t_worst * s.params.g,
                m.bridged,
                m.grid_points
            ),
        )),
        Err(e) => out.push(failed("master_equation_vs_exact", name, &e)),
    }
    out
}

/// Scenario-independent checks on random rate sets with fixed `z∞`.
pub fn fuzz_checks(opts: &VerifyOptions) -> Vec<Check> {
    let band = NumericsConfig::default().sign_band;
    let sets = random_rate_sets(opts.fuzz_samples, opts.seed);
    let mut out = vec![theorem_check(
        "theorem1",
        "fuzz",
        &sets,
        band,
        opts.flip_gamma2,
    )];

    let bad = sets.iter().find(|rs| {
        let cp = cp_divisible(rs, band).unwrap_or(false);
        let p = p_divisible(rs, band).unwrap_or(false);
        let b = blp_contractive(rs, band).unwrap_or(false);
        (cp && !p) || (p && !b)
    });
    out.push(Check::new(
        "nesting_cp_p_blp",
        "fuzz",
        bad.is_none(),
        bad.map_or(0.0, |_| 1.0),
        0.0,
        bad.map_or(String::new(), |rs| format!("violated at {rs:?}")),
    ));

    let cfg = NumericsConfig::default();
    let disagreements: Vec<&RateSet> = sets
        .par_iter()
        .filter(|rs| rs.gamma_minus().abs() <= rs.gamma_plus())
        .filter(|rs| {
            let Ok(fp) = fixed_point(rs) else {
                return false;
            };
            let (Ok(g), Ok(a)) = (
                sigma_map_grid(rs, &fp, &cfg),
                sigma_map_sign_analytic(rs, band),
            ) else {
                return false;
            };
            let gs = g.sign(band);
            a != MapSign::ZeroBand && gs != MapSign::ZeroBand && a != gs
        })
        .collect();
    out.push(Check::new(
        "sigma_map_grid_vs_analytic",
        "fuzz",
        disagreements.is_empty(),
        disagreements.len() as f64,
        0.0,
        disagreements
            .first()
            .map_or(String::new(), |rs| format!("first at {rs:?}")),
    ));
    out
}

/// Runs the suite on `scenarios`, plus the random-rate checks when
/// `with_fuzz` is set.
pub fn run_verify(
    target: &str,
    scenarios: &[Scenario],
    with_fuzz: bool,
    opts: &VerifyOptions,
) -> VerifyReport {
    let start = Instant::now();
    let mut checks: Vec<Check> = scenarios
        .iter()
        .flat_map(|s| verify_scenario(s, opts))
        .collect();
    if with_fuzz {
        checks.extend(fuzz_checks(opts));
    }
    VerifyReport {
        target: target.into(),
        checks,
        wall_time: start.elapsed().as_secs_f64(),
    }
}
