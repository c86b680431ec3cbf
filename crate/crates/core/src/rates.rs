//! Closed-form master-equation coefficients and the adaptive integrator.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jcdyn::{bath_weights, rabi_frequency, GammaConvention, ModelParams, NumericsConfig};
use crate::qstate::{CMatrix, DensityMatrix, C64};

/// `|α + β − 1|` below this marks the rates singular.
pub const DENOM_TOL: f64 = 1e-10;
/// `|γ|` below this marks the rates singular.
pub const GAMMA_TOL: f64 = 1e-12;

/// `Ω_n = √(Δ² + 4g²n)`.
pub fn omega_n(n: usize, params: &ModelParams) -> f64 {
    rabi_frequency(params, n)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoefficientSet {
    pub t: f64,
    pub alpha: f64,
    pub beta_fn: f64,
    pub gamma_c: C64,
    pub dalpha: f64,
    pub dbeta_fn: f64,
    pub dgamma_c: C64,
}

impl CoefficientSet {
    /// Excited population at `t` from the initial one.
    pub fn population(&self, p1_0: f64) -> f64 {
        (self.alpha + self.beta_fn - 1.0) * p1_0 + 1.0 - self.alpha
    }
}

/// Weights and frequencies shared by every time point of a run.
#[derive(Debug, Clone)]
pub struct RateModel {
    params: ModelParams,
    weights: Vec<f64>,
    omegas: Vec<f64>,
}

impl RateModel {
    pub fn new(params: &ModelParams, cutoff: usize) -> Self {
        Self {
            params: *params,
            weights: bath_weights(params, cutoff),
            omegas: (0..=cutoff).map(|m| rabi_frequency(params, m)).collect(),
        }
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn cutoff(&self) -> usize {
        self.weights.len()
    }

    pub fn coefficients(&self, t: f64) -> CoefficientSet {
        let delta = self.params.delta();
        let wb = self.params.omega_b;
        // per level m: (bracket, d bracket, A, A')
        let terms: Vec<(f64, f64, C64, C64)> = self
            .omegas
            .iter()
            .map(|&om| {
                if om == 0.0 {
                    return (1.0, 0.0, C64::new(1.0, 0.0), C64::new(0.0, -0.5 * delta));
                }
                let (s, c) = (0.5 * om * t).sin_cos();
                let r = delta / om;
                (
                    c * c + r * r * s * s,
                    (delta * delta - om * om) / om * s * c,
                    C64::new(c, -r * s),
                    C64::new(-0.5 * om * s, -0.5 * delta * c),
                )
            })
            .collect();
        let (mut alpha, mut beta, mut dalpha, mut dbeta) = (0.0, 0.0, 0.0, 0.0);
        let mut g = C64::new(0.0, 0.0);
        let mut dg = C64::new(0.0, 0.0);
        for (n, &p) in self.weights.iter().enumerate() {
            let (b0, db0, a0, da0) = terms[n];
            let (b1, db1, a1, da1) = terms[n + 1];
            alpha += p * b0;
            dalpha += p * db0;
            beta += p * b1;
            dbeta += p * db1;
            g += a0 * a1 * p;
            dg += (da0 * a1 + a0 * da1) * p;
        }
        let rot = C64::from_polar(1.0, -wb * t);
        let gamma_c = rot * g;
        let dgamma_c = rot * (dg + g * C64::new(0.0, -wb));
        CoefficientSet {
            t,
            alpha,
            beta_fn: beta,
            gamma_c,
            dalpha,
            dbeta_fn: dbeta,
            dgamma_c,
        }
    }

    pub fn rate_set(&self, t: f64) -> RateSet {
        RateSet::from_coefficients(&self.coefficients(t))
    }
}

pub fn coefficients(t: f64, params: &ModelParams, cutoff: usize) -> CoefficientSet {
    RateModel::new(params, cutoff).coefficients(t)
}

pub fn rate_set(t: f64, params: &ModelParams, cutoff: usize) -> RateSet {
    RateModel::new(params, cutoff).rate_set(t)
}

/// Instantaneous generator data. Rates are `NaN` when `singular`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateSet {
    pub t: f64,
    pub omega_shift: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    pub gamma3: f64,
    pub singular: bool,
}

impl RateSet {
    pub fn from_coefficients(c: &CoefficientSet) -> Self {
        let den = c.alpha + c.beta_fn - 1.0;
        let singular = den.abs() < DENOM_TOL || c.gamma_c.norm() < GAMMA_TOL;
        if singular {
            return Self {
                t: c.t,
                omega_shift: f64::NAN,
                gamma1: f64::NAN,
                gamma2: f64::NAN,
                gamma3: f64::NAN,
                singular,
            };
        }
        let g1 = (c.alpha * c.dbeta_fn - c.dalpha * c.beta_fn - c.dbeta_fn) / den;
        let g2 = (c.dalpha * c.beta_fn - c.alpha * c.dbeta_fn - c.dalpha) / den;
        let ratio = c.dgamma_c / c.gamma_c;
        Self {
            t: c.t,
            omega_shift: -ratio.im,
            gamma1: g1,
            gamma2: g2,
            gamma3: -0.5 * (g1 + g2 + 2.0 * ratio.re),
            singular,
        }
    }

    /// Synthetic rate set.
    pub fn from_rates(t: f64, omega_shift: f64, gamma1: f64, gamma2: f64, gamma3: f64) -> Self {
        Self {
            t,
            omega_shift,
            gamma1,
            gamma2,
            gamma3,
            singular: false,
        }
    }

    pub fn gamma_plus(&self) -> f64 {
        self.gamma1 + self.gamma2
    }

    pub fn gamma_minus(&self) -> f64 {
        self.gamma1 - self.gamma2
    }

    /// `Γ = γ₃ + γ₊/2`, the coherence decay rate.
    pub fn big_gamma(&self) -> f64 {
        self.gamma3 + 0.5 * self.gamma_plus()
    }

    pub fn big_gamma_with(&self, conv: GammaConvention) -> f64 {
        match conv {
            GammaConvention::GammaPlus => self.big_gamma(),
            GammaConvention::GammaTwo => self.gamma3 + 0.5 * self.gamma2,
        }
    }

    /// `γ₋/γ₊`, or `None` when `γ₊` vanishes.
    pub fn z_inf(&self) -> Option<f64> {
        let gp = self.gamma_plus();
        (!self.singular && gp.abs() > GAMMA_TOL).then(|| self.gamma_minus() / gp)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixedPoint {
    pub p1_fp: f64,
}

impl FixedPoint {
    pub fn z_inf(&self) -> f64 {
        2.0 * self.p1_fp - 1.0
    }

    pub fn to_density(&self) -> DensityMatrix {
        DensityMatrix::from_diagonal(&[self.p1_fp, 1.0 - self.p1_fp]).expect("p1_fp in [0,1]")
    }
}

/// `p₁^fp = γ₁/γ₊`.
pub fn fixed_point(rs: &RateSet) -> Result<FixedPoint> {
    let gp = rs.gamma_plus();
    if rs.singular || !(gp.abs() > GAMMA_TOL) {
        return Err(Error::SingularRates { t: rs.t });
    }
    let p = rs.gamma1 / gp;
    if !(-1e-9..=1.0 + 1e-9).contains(&p) {
        return Err(Error::InvalidState(format!(
            "fixed-point population {p} outside [0,1]"
        )));
    }
    Ok(FixedPoint {
        p1_fp: p.clamp(0.0, 1.0),
    })
}

/// `1/(1 + e^{ω_Bβ_B})`, the thermal-bath fixed point.
pub fn thermal_fixed_point(params: &ModelParams) -> FixedPoint {
    FixedPoint {
        p1_fp: 1.0 / (1.0 + params.bath_x().exp()),
    }
}

/// `(ṗ₁, ċ)` for a qubit with excited population `p1` and coherence `c`.
pub fn bloch_rhs(rs: &RateSet, p1: f64, c: C64) -> (f64, C64) {
    (
        rs.gamma1 - rs.gamma_plus() * p1,
        C64::new(-rs.big_gamma(), -rs.omega_shift) * c,
    )
}

/// `ℒ_t ρ`.
pub fn generator_apply(rs: &RateSet, rho: &CMatrix) -> Result<CMatrix> {
    if rs.singular {
        return Err(Error::SingularRates { t: rs.t });
    }
    if rho.nrows() != 2 || rho.ncols() != 2 {
        return Err(Error::DimensionMismatch(
            "generator acts on qubit states".into(),
        ));
    }
    let z = C64::new(0.0, 0.0);
    let re = |x: f64| C64::new(x, 0.0);
    let sp = CMatrix::from_row_slice(2, 2, &[z, re(1.0), z, z]);
    let sm = sp.adjoint();
    let pe = &sp * &sm;
    let pg = &sm * &sp;
    let sz = CMatrix::from_row_slice(2, 2, &[re(1.0), z, z, re(-1.0)]);
    let i = C64::new(0.0, 1.0);
    let h = &pe * re(rs.omega_shift);
    let anti = |p: &CMatrix| p * rho + rho * p;
    let out = -(&h * rho - rho * &h) * i
        + (&sp * rho * &sm - anti(&pg) * re(0.5)) * re(rs.gamma1)
        + (&sm * rho * &sp - anti(&pe) * re(0.5)) * re(rs.gamma2)
        + (&sz * rho * &sz - rho) * re(0.5 * rs.gamma3);
    Ok(out)
}

const RTOL: f64 = 1e-10;
const ATOL: f64 = 1e-12;
const MAX_STEPS_PER_INTERVAL: usize = 200_000;
/// Near-singular threshold below which a failed interval is bridged.
const BRIDGE_TOL: f64 = 1e-6;

/// Solution of the master equation on a grid.
#[derive(Debug, Clone)]
pub struct MasterEquationSolution {
    pub times: Vec<f64>,
    pub states: Vec<DensityMatrix>,
    /// Grid points re-initialised from the analytic solution.
    pub bridged: Vec<bool>,
    pub steps: usize,
}

pub fn integrate_master_equation(
    rho_a0: &DensityMatrix,
    params: &ModelParams,
    cfg: &NumericsConfig,
    t_grid: &[f64],
) -> Result<MasterEquationSolution> {
    let mut v = integrate_master_equation_batch(std::slice::from_ref(rho_a0), params, cfg, t_grid)?;
    Ok(v.remove(0))
}

// Dormand–Prince 5(4) tableau.
const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

enum IntervalFailure {
    Singular,
    Underflow(f64, f64),
}

/// State layout: `[p₁, Re c, Im c]` per initial state.
fn rhs(model: &RateModel, t: f64, y: &[f64], out: &mut [f64]) -> std::result::Result<(), f64> {
    let c = model.coefficients(t);
    let rs = RateSet::from_coefficients(&c);
    let den = (c.alpha + c.beta_fn - 1.0).abs().min(c.gamma_c.norm());
    if rs.singular {
        return Err(den);
    }
    for (yi, oi) in y.chunks_exact(3).zip(out.chunks_exact_mut(3)) {
        let (dp, dc) = bloch_rhs(&rs, yi[0], C64::new(yi[1], yi[2]));
        oi[0] = dp;
        oi[1] = dc.re;
        oi[2] = dc.im;
    }
    Ok(())
}

/// Integrates every initial state with shared rate evaluations.
pub fn integrate_master_equation_batch(
    rho0s: &[DensityMatrix],
    params: &ModelParams,
    cfg: &NumericsConfig,
    t_grid: &[f64],
) -> Result<Vec<MasterEquationSolution>> {
    params.validate()?;
    if t_grid.is_empty() || t_grid[0] != 0.0 || t_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter(
            "time grid must start at 0 and increase".into(),
        ));
    }
    for r in rho0s {
        if r.dim() != 2 {
            return Err(Error::DimensionMismatch(
                "initial state must be a qubit".into(),
            ));
        }
    }
    let model = RateModel::new(params, cfg.cutoff(params));
    let dim = 3 * rho0s.len();
    let y0: Vec<f64> = rho0s
        .iter()
        .flat_map(|r| {
            let c = r.coherence();
            [r.p1(), c.re, c.im]
        })
        .collect();
    let analytic = |t: f64| -> Vec<f64> {
        let co = model.coefficients(t);
        y0.chunks_exact(3)
            .flat_map(|yi| {
                let c = co.gamma_c * C64::new(yi[1], yi[2]);
                [co.population(yi[0]), c.re, c.im]
            })
            .collect()
    };

    let mut y = y0.clone();
    let mut out = vec![y.clone()];
    let mut bridged = vec![false];
    let mut h = 1e-2;
    let mut steps = 0usize;
    let mut k: Vec<Vec<f64>> = vec![vec![0.0; dim]; 7];
    let mut tmp = vec![0.0; dim];
    let mut fsal_valid = false;

    for w in t_grid.windows(2) {
        let (t0, t1) = (w[0], w[1]);
        let mut t = t0;
        let mut min_den = f64::INFINITY;
        let mut failure = None;
        let mut n_steps = 0usize;
        let d_of = |t: f64| {
            let co = model.coefficients(t);
            co.alpha + co.beta_fn - 1.0
        };
        let mut d_prev = d_of(t0);
        // a pole of γ₁, γ₂ between accepted steps slips past the error
        // estimate; such intervals get the analytic population
        let mut crossed = false;
        while t < t1 {
            if n_steps > MAX_STEPS_PER_INTERVAL {
                failure = Some(IntervalFailure::Underflow(t, h));
                break;
            }
            let last = t + h >= t1;
            let hh = if last { t1 - t } else { h };
            if !fsal_valid {
                if let Err(d) = rhs(&model, t, &y, &mut k[0]) {
                    min_den = min_den.min(d);
                    failure = Some(IntervalFailure::Singular);
                    break;
                }
            }
            let mut stage_fail = None;
            for s in 1..7 {
                for i in 0..dim {
                    let mut acc = y[i];
                    for j in 0..s {
                        acc += hh * A[s][j] * k[j][i];
                    }
                    tmp[i] = acc;
                }
                let (head, tail) = k.split_at_mut(s);
                let _ = head;
                if let Err(d) = rhs(&model, t + C[s] * hh, &tmp, &mut tail[0]) {
                    stage_fail = Some(d);
                    break;
                }
            }
            if let Some(d) = stage_fail {
                min_den = min_den.min(d);
                failure = Some(IntervalFailure::Singular);
                break;
            }
            // tmp holds the 5th-order solution (stage 7 argument)
            let mut err = 0.0;
            for i in 0..dim {
                let mut e = 0.0;
                for s in 0..7 {
                    e += E[s] * k[s][i];
                }
                let sc = ATOL + RTOL * y[i].abs().max(tmp[i].abs());
                err += (hh * e / sc).powi(2);
            }
            let err = (err / dim as f64).sqrt();
            n_steps += 1;
            steps += 1;
            if err <= 1.0 {
                t = if last { t1 } else { t + hh };
                y.copy_from_slice(&tmp);
                let d_now = d_of(t);
                crossed |= d_now * d_prev < 0.0;
                d_prev = d_now;
                let (k0, rest) = k.split_at_mut(1);
                k0[0].copy_from_slice(&rest[5]);
                fsal_valid = true;
                let fac = if err == 0.0 {
                    5.0
                } else {
                    (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
                };
                if !last || fac < 1.0 {
                    h = hh * fac;
                }
            } else {
                fsal_valid = true;
                h = hh * (0.9 * err.powf(-0.2)).clamp(0.2, 1.0);
                if h < 1e-14 * t.abs().max(1.0) {
                    let co = model.coefficients(t);
                    min_den =
                        min_den.min((co.alpha + co.beta_fn - 1.0).abs().min(co.gamma_c.norm()));
                    failure = Some(IntervalFailure::Underflow(t, h));
                    break;
                }
            }
        }
        match failure {
            None if crossed => {
                let a = analytic(t1);
                for i in (0..dim).step_by(3) {
                    y[i] = a[i];
                }
                fsal_valid = false;
                bridged.push(true);
            }
            None => bridged.push(false),
            Some(f) => {
                if let IntervalFailure::Underflow(t, h) = f {
                    if min_den > BRIDGE_TOL {
                        return Err(Error::StepSizeUnderflow { t, h });
                    }
                }
                y = analytic(t1);
                fsal_valid = false;
                h = 1e-3;
                bridged.push(true);
            }
        }
        out.push(y.clone());
    }

    let mut sols = Vec::with_capacity(rho0s.len());
    for s in 0..rho0s.len() {
        let states = out
            .iter()
            .map(|yv| {
                let (p, c) = (yv[3 * s], C64::new(yv[3 * s + 1], yv[3 * s + 2]));
                let m = CMatrix::from_row_slice(
                    2,
                    2,
                    &[C64::new(p, 0.0), c, c.conj(), C64::new(1.0 - p, 0.0)],
                );
                DensityMatrix::new_unchecked(m)
            })
            .collect::<Result<Vec<_>>>()?;
        sols.push(MasterEquationSolution {
            times: t_grid.to_vec(),
            states,
            bridged: bridged.clone(),
            steps,
        });
    }
    Ok(sols)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jcdyn::{ExactReducedMap, FockCutoff};
    use approx::assert_abs_diff_eq;

    fn fig1() -> ModelParams {
        ModelParams::new(1.0, 0.6, 0.03, Some(1.1), 0.3).unwrap()
    }

    fn fig4() -> ModelParams {
        ModelParams::new(1.0, 0.99, 0.3, None, 3.0).unwrap()
    }

    #[test]
    fn omega_n_examples() {
        assert_abs_diff_eq!(omega_n(0, &fig1()), 0.4, epsilon = 1e-15);
        let res = ModelParams::new(1.0, 1.0, 0.5, None, 1.0).unwrap();
        assert_abs_diff_eq!(omega_n(1, &res), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(omega_n(1, &fig1()), 0.1636f64.sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(omega_n(1, &fig1()), 0.404475, epsilon = 1e-6);
    }

    #[test]
    fn coefficients_at_zero_and_decoupled() {
        let c = coefficients(0.0, &fig1(), 178);
        assert_abs_diff_eq!(c.alpha, 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(c.beta_fn, 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(c.gamma_c.re, 1.0, epsilon = 1e-14);
        assert_eq!((c.dalpha, c.dbeta_fn), (0.0, 0.0));
        let free = ModelParams { g: 0.0, ..fig1() };
        let c = coefficients(13.0, &free, 50);
        assert_abs_diff_eq!(c.alpha, 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(c.beta_fn, 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(c.gamma_c.norm(), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let p = fig1();
        let m = RateModel::new(&p, 178);
        let (t, h) = (1.0 / p.g, 1e-3);
        let c = m.coefficients(t);
        let f = |s: f64| m.coefficients(s);
        let fd = |g: &dyn Fn(&CoefficientSet) -> f64| {
            (g(&f(t - 2.0 * h)) - 8.0 * g(&f(t - h)) + 8.0 * g(&f(t + h)) - g(&f(t + 2.0 * h)))
                / (12.0 * h)
        };
        assert_abs_diff_eq!(fd(&|c| c.alpha), c.dalpha, epsilon = 1e-8);
        assert_abs_diff_eq!(fd(&|c| c.beta_fn), c.dbeta_fn, epsilon = 1e-8);
        assert_abs_diff_eq!(fd(&|c| c.gamma_c.re), c.dgamma_c.re, epsilon = 1e-8);
        assert_abs_diff_eq!(fd(&|c| c.gamma_c.im), c.dgamma_c.im, epsilon = 1e-8);
    }

    #[test]
    fn thermal_identity_between_derivatives() {
        for p in [fig1(), fig4()] {
            let m = RateModel::new(&p, NumericsConfig::default().cutoff(&p));
            for k in 0..50 {
                let c = m.coefficients(0.37 * k as f64);
                assert_abs_diff_eq!(c.dalpha, (-p.bath_x()).exp() * c.dbeta_fn, epsilon = 1e-10);
                assert!(c.alpha > 0.0 && c.alpha <= 1.0 + 1e-14);
                assert!(c.beta_fn > 0.0 && c.beta_fn <= 1.0 + 1e-14);
            }
        }
    }

    #[test]
    fn rates_at_zero() {
        let rs = rate_set(0.0, &fig1(), 178);
        assert!(!rs.singular);
        assert_eq!((rs.gamma1, rs.gamma2), (0.0, 0.0));
        assert_abs_diff_eq!(rs.gamma3, 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(rs.omega_shift, 1.0, epsilon = 1e-14);
    }

    #[test]
    fn thermal_ratio_and_fixed_point() {
        let p = fig1();
        let m = RateModel::new(&p, 178);
        for k in 1..200 {
            let rs = m.rate_set(0.5 * k as f64);
            assert!(!rs.singular);
            if rs.gamma_plus().abs() > 1e-6 {
                assert_abs_diff_eq!((rs.gamma1 / rs.gamma2).ln(), -0.18, epsilon = 1e-8);
                let fp = fixed_point(&rs).unwrap();
                assert_abs_diff_eq!(fp.p1_fp, 1.0 / (1.0 + 0.18f64.exp()), epsilon = 1e-8);
            }
        }
        assert_abs_diff_eq!(thermal_fixed_point(&p).p1_fp, 0.455121, epsilon = 1e-6);
        assert_abs_diff_eq!(
            thermal_fixed_point(&fig4()).p1_fp,
            1.0 / (1.0 + 2.97f64.exp()),
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(thermal_fixed_point(&fig4()).p1_fp, 0.048800, epsilon = 1e-6);
        let frozen = ModelParams { beta_b: 1e4, ..p };
        assert!(thermal_fixed_point(&frozen).p1_fp < 1e-300);
    }

    #[test]
    fn big_gamma_is_log_derivative_of_gamma() {
        let p = fig4();
        let m = RateModel::new(&p, 19);
        let h = 1e-4;
        for k in 1..40 {
            let t = 0.41 * k as f64;
            let rs = m.rate_set(t);
            if rs.singular {
                continue;
            }
            let l = |s: f64| m.coefficients(s).gamma_c.norm().ln();
            let fd =
                (l(t - 2.0 * h) - 8.0 * l(t - h) + 8.0 * l(t + h) - l(t + 2.0 * h)) / (12.0 * h);
            assert_abs_diff_eq!(rs.big_gamma(), -fd, epsilon = 1e-8);
        }
    }

    #[test]
    fn closed_form_map_matches_joint_evolution() {
        for p in [fig1(), fig4()] {
            let n = NumericsConfig::default().cutoff(&p);
            let m = RateModel::new(&p, n);
            for &t in &[0.7, 5.0 / p.g, 13.3] {
                let map = ExactReducedMap::new(&p, n, t);
                let c = m.coefficients(t);
                let rho0 = CMatrix::from_row_slice(
                    2,
                    2,
                    &[
                        C64::new(0.3, 0.0),
                        C64::new(0.2, 0.1),
                        C64::new(0.2, -0.1),
                        C64::new(0.7, 0.0),
                    ],
                );
                let (r, _) = map.apply(&rho0);
                assert_abs_diff_eq!(r[(0, 0)].re, c.population(0.3), epsilon = 1e-13);
                let coh = c.gamma_c * C64::new(0.2, 0.1);
                assert_abs_diff_eq!(r[(0, 1)].re, coh.re, epsilon = 1e-13);
                assert_abs_diff_eq!(r[(0, 1)].im, coh.im, epsilon = 1e-13);
            }
        }
    }

    #[test]
    fn generator_examples() {
        let decay = RateSet::from_rates(0.0, 1.0, 0.0, 1.0, 0.0);
        let up = DensityMatrix::from_diagonal(&[1.0, 0.0]).unwrap();
        let l = generator_apply(&decay, up.matrix()).unwrap();
        assert_abs_diff_eq!(l[(0, 0)].re, -1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(l[(1, 1)].re, 1.0, epsilon = 1e-15);

        let rs = RateSet::from_rates(0.0, 0.8, 0.3, 0.5, 0.1);
        let fp = fixed_point(&rs).unwrap();
        let l = generator_apply(&rs, fp.to_density().matrix()).unwrap();
        assert!(l.camax() < 1e-15);

        let rho = DensityMatrix::qubit(0.35, C64::new(0.1, 0.2)).unwrap();
        let l = generator_apply(&rs, rho.matrix()).unwrap();
        let (dp, dc) = bloch_rhs(&rs, 0.35, C64::new(0.1, 0.2));
        assert_abs_diff_eq!(l[(0, 0)].re, dp, epsilon = 1e-15);
        assert_abs_diff_eq!((l[(0, 1)] - dc).norm(), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(l.trace().norm(), 0.0, epsilon = 1e-15);
        // ż = γ₋ − γ₊ z
        let z = 2.0 * 0.35 - 1.0;
        assert_abs_diff_eq!(
            2.0 * dp,
            rs.gamma_minus() - rs.gamma_plus() * z,
            epsilon = 1e-15
        );
        assert!(generator_apply(
            &RateSet {
                singular: true,
                ..rs
            },
            rho.matrix()
        )
        .is_err());
    }

    #[test]
    fn integrator_decoupled_and_analytic() {
        let free = ModelParams { g: 0.0, ..fig1() };
        let cfg = NumericsConfig {
            fock_cutoff: FockCutoff::Fixed(40),
            ..Default::default()
        };
        let rho = DensityMatrix::qubit(0.3, C64::new(0.2, 0.1)).unwrap();
        let grid: Vec<f64> = (0..=20).map(|k| k as f64).collect();
        let sol = integrate_master_equation(&rho, &free, &cfg, &grid).unwrap();
        for s in &sol.states {
            assert_abs_diff_eq!(s.p1(), 0.3, epsilon = 1e-12);
            assert_abs_diff_eq!(
                s.coherence().norm(),
                C64::new(0.2, 0.1).norm(),
                epsilon = 1e-9
            );
        }

        let p = fig1();
        let cfg = NumericsConfig::default();
        let m = RateModel::new(&p, cfg.cutoff(&p));
        let grid: Vec<f64> = (0..=40).map(|k| k as f64 * 2.5).collect();
        let sol = integrate_master_equation(&rho, &p, &cfg, &grid).unwrap();
        for (t, s) in grid.iter().zip(&sol.states) {
            assert_abs_diff_eq!(s.p1(), m.coefficients(*t).population(0.3), epsilon = 1e-8);
        }
    }
}
