//! Entropy-production rates along a single trajectory.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jcdyn::{fd_derivative, stencil_times, ModelParams, NumericsConfig, ProductEvolution};
use crate::qstate::{entropy_flux, entropy_of_eigenvalues, thermal_state, CMatrix, DensityMatrix};
use crate::rates::{
    fixed_point, generator_apply, thermal_fixed_point, FixedPoint, RateModel, RateSet,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntropySample {
    pub t: f64,
    pub gt: f64,
    pub sigma_es: f64,
    pub sigma_el: f64,
    pub sigma_co: f64,
    pub sigma_fp: f64,
    pub di_ab: f64,
    pub sdot_a: f64,
    pub sdot_b: f64,
    pub edot_b: f64,
    pub edot_int: f64,
    pub pdot_a: f64,
    pub beta_b_eff: f64,
    pub masked: bool,
}

/// `σ^Es = Ṡ_A + β_B Ė_B`.
pub fn sigma_es(sdot_a: f64, edot_b: f64, beta_b: f64) -> f64 {
    sdot_a + beta_b * edot_b
}

/// `σ^El = Ṡ_A + (β_B/β_B(t)) Ṡ_B`.
pub fn sigma_el(sdot_a: f64, sdot_b: f64, beta_b: f64, beta_b_eff: f64) -> f64 {
    sdot_a + beta_b / beta_b_eff * sdot_b
}

/// `-Tr{ρ̇ [ln ρ − ln w(Ω_A(t)σ₊σ₋, β_B)]}`.
pub fn sigma_co(
    rho_a: &CMatrix,
    rhodot_a: &CMatrix,
    rs: &RateSet,
    params: &ModelParams,
) -> Result<f64> {
    if rs.singular {
        return Err(Error::SingularRates { t: rs.t });
    }
    let w = thermal_state(&[rs.omega_shift, 0.0], params.beta_b)?;
    Ok(entropy_flux(rho_a, rhodot_a, Some(w.matrix())))
}

/// `-Tr{ρ̇ [ln ρ − ln ρ^fp]}`.
pub fn sigma_fp(rho_a: &CMatrix, rhodot_a: &CMatrix, fp: &FixedPoint) -> f64 {
    entropy_flux(rho_a, rhodot_a, Some(fp.to_density().matrix()))
}

/// `L(r)/r`, continuous at `r = 0`.
fn l_over_r(r: f64) -> f64 {
    if r < 1e-8 {
        1.0 + r * r / 3.0
    } else {
        r.atanh() / r
    }
}

/// Bloch form `-ṙ L(r) + ż L(z∞)`, given `r ṙ` (regular at the centre).
///
/// On the surface the first term is `±∞` unless `ṙ` vanishes.
pub fn sigma_fp_bloch(r: f64, r_rdot: f64, zdot: f64, z_fp: f64) -> f64 {
    let tail = zdot * z_fp.atanh();
    if r >= 1.0 - 1e-15 {
        if r_rdot.abs() <= 1e-13 {
            return tail;
        }
        return if r_rdot > 0.0 {
            f64::NEG_INFINITY
        } else {
            f64::INFINITY
        };
    }
    -r_rdot * l_over_r(r) + tail
}

/// `σ^fp` of a qubit state from `(p₁, c)` and their derivatives.
pub fn sigma_fp_qubit(
    p1: f64,
    c: crate::qstate::C64,
    dp1: f64,
    dc: crate::qstate::C64,
    z_fp: f64,
) -> f64 {
    let z = 2.0 * p1 - 1.0;
    let dz = 2.0 * dp1;
    let r = (z * z + 4.0 * c.norm_sqr()).sqrt().min(1.0);
    let r_rdot = z * dz + 4.0 * (c.conj() * dc).re;
    sigma_fp_bloch(r, r_rdot, dz, z_fp)
}

/// Entropy of the truncated oscillator Gibbs state.
pub fn thermal_entropy(beta: f64, omega_b: f64, cutoff: usize) -> f64 {
    let x = beta * omega_b;
    let w: Vec<f64> = (0..cutoff).map(|n| (-x * n as f64).exp()).collect();
    let z: f64 = w.iter().sum();
    w.iter()
        .map(|wi| wi / z)
        .filter(|&p| p > 0.0)
        .map(|p| -p * p.ln())
        .sum()
}

pub const BETA_BRACKET: (f64, f64) = (1e-6, 1e3);

/// Inverse temperature of the truncated Gibbs state with entropy `s`.
pub fn effective_bath_beta_from_entropy(s: f64, omega_b: f64, cutoff: usize) -> Result<f64> {
    let (lo, hi) = (BETA_BRACKET.0 / omega_b, BETA_BRACKET.1 / omega_b);
    let (s_lo, s_hi) = (
        thermal_entropy(lo, omega_b, cutoff),
        thermal_entropy(hi, omega_b, cutoff),
    );
    if !(s < s_lo && s > s_hi) {
        return Err(Error::UnresolvableTemperature { entropy: s, lo, hi });
    }
    // bisection in ln β; entropy decreases monotonically with β
    let (mut a, mut b) = (lo.ln(), hi.ln());
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        let sm = thermal_entropy(m.exp(), omega_b, cutoff);
        if (sm - s).abs() < 1e-13 || b - a < 1e-15 {
            return Ok(m.exp());
        }
        if sm > s {
            a = m;
        } else {
            b = m;
        }
    }
    Ok((0.5 * (a + b)).exp())
}

pub fn effective_bath_beta(rho_b: &DensityMatrix, omega_b: f64, cutoff: usize) -> Result<f64> {
    if rho_b.dim() != cutoff {
        return Err(Error::DimensionMismatch(format!(
            "bath state of dimension {} with cutoff {cutoff}",
            rho_b.dim()
        )));
    }
    let s = entropy_of_eigenvalues(&rho_b.eigenvalues()?, crate::qstate::EIG_CLAMP)?;
    effective_bath_beta_from_entropy(s, omega_b, cutoff)
}

/// Single-trajectory evaluator sharing setup across time points.
#[derive(Debug, Clone)]
pub struct TraceEngine {
    params: ModelParams,
    cfg: NumericsConfig,
    evo: ProductEvolution,
    model: RateModel,
}

/// One grid row with the rate data it was computed from.
#[derive(Debug, Clone, Copy)]
pub struct TraceRow {
    pub sample: EntropySample,
    pub rates: RateSet,
    /// `p₁` of the exact reduced state.
    pub p1: f64,
    /// Exact `Ė_B` from the commutator, for cross-checks.
    pub edot_b_exact: f64,
}

impl TraceEngine {
    pub fn new(rho_a0: &DensityMatrix, params: &ModelParams, cfg: &NumericsConfig) -> Result<Self> {
        cfg.validate()?;
        let evo = ProductEvolution::new(rho_a0, params, cfg)?;
        let model = RateModel::new(params, evo.cutoff());
        Ok(Self {
            params: *params,
            cfg: *cfg,
            evo,
            model,
        })
    }

    pub fn cutoff(&self) -> usize {
        self.evo.cutoff()
    }

    pub fn row(&self, t: f64) -> Result<TraceRow> {
        let h = self.cfg.fd_step;
        let (times, k) = stencil_times(t, h);
        let snaps = times
            .iter()
            .map(|&s| self.evo.snapshot(s))
            .collect::<Result<Vec<_>>>()?;
        let fd = |f: &dyn Fn(&crate::jcdyn::ReducedSnapshot) -> f64| {
            let v: Vec<f64> = snaps.iter().map(f).collect();
            fd_derivative(&v, k, h)
        };
        let sdot_b = fd(&|s| s.obs.s_b)?;
        let edot_b = fd(&|s| s.obs.e_b)?;
        let edot_int = fd(&|s| s.obs.e_int)?;
        let di_ab = fd(&|s| s.obs.i_ab)?;
        let now = &snaps[k];
        let beta_b = self.params.beta_b;
        let beta_b_eff =
            effective_bath_beta_from_entropy(now.obs.s_b, self.params.omega_b, self.cutoff())
                .unwrap_or(f64::NAN);

        let rs = self.model.rate_set(t);
        let nan = f64::NAN;
        let mut sample = EntropySample {
            t,
            gt: t * self.params.g,
            sigma_es: nan,
            sigma_el: nan,
            sigma_co: nan,
            sigma_fp: nan,
            di_ab,
            sdot_a: nan,
            sdot_b,
            edot_b,
            edot_int,
            pdot_a: nan,
            beta_b_eff,
            masked: rs.singular,
        };
        if !rs.singular {
            let rho = &now.rho_a;
            let rhodot = generator_apply(&rs, rho)?;
            let fp = fixed_point(&rs).unwrap_or_else(|_| thermal_fixed_point(&self.params));
            let sdot_a = entropy_flux(rho, &rhodot, None);
            sample.sdot_a = sdot_a;
            sample.pdot_a = rhodot[(0, 0)].re;
            sample.sigma_es = sigma_es(sdot_a, edot_b, beta_b);
            sample.sigma_el = if beta_b_eff.is_nan() {
                nan
            } else {
                sigma_el(sdot_a, sdot_b, beta_b, beta_b_eff)
            };
            sample.sigma_co = sigma_co(rho, &rhodot, &rs, &self.params)?;
            sample.sigma_fp = sigma_fp(rho, &rhodot, &fp);
        }
        Ok(TraceRow {
            sample,
            rates: rs,
            p1: now.obs.p1,
            edot_b_exact: now.edot_b,
        })
    }
}

pub fn entropy_production_row(
    t: f64,
    rho_a0: &DensityMatrix,
    params: &ModelParams,
    cfg: &NumericsConfig,
) -> Result<EntropySample> {
    Ok(TraceEngine::new(rho_a0, params, cfg)?.row(t)?.sample)
}
