//! Divisibility criteria, minimal and map entropy production, theorem checks.
//!
//! Bloch-ball points are parametrised by the radius `r` and `X = z/r`, so
//! that `ℓ = r√(1−X²)`. With `Γ = γ₃ + γ₊/2` and the fixed point at height
//! `z∞`, the fixed-point entropy production of the generator reads
//!
//! `σ̃(r, X) = [Γ r(1−X²) − X(γ₋ − γ₊ rX)] L(r) + (γ₋ − γ₊ rX) L(z∞)`,
//!
//! with `L = artanh`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::eprod::sigma_fp_qubit;
use crate::error::{Error, Result};
use crate::jcdyn::{ExactReducedMap, GammaConvention, ModelParams, NumericsConfig};
use crate::qstate::{CMatrix, C64};
use crate::rates::{thermal_fixed_point, FixedPoint, RateSet};

fn check(rs: &RateSet) -> Result<()> {
    if rs.singular {
        Err(Error::SingularRates { t: rs.t })
    } else {
        Ok(())
    }
}

/// All three rates non-negative.
pub fn cp_divisible(rs: &RateSet, band: f64) -> Result<bool> {
    check(rs)?;
    Ok(rs.gamma1 >= -band && rs.gamma2 >= -band && rs.gamma3 >= -band)
}

pub fn p_divisible(rs: &RateSet, band: f64) -> Result<bool> {
    p_divisible_with(rs, band, GammaConvention::GammaPlus)
}

/// `|γ₋| ≤ γ₊` and (`2Γ > γ₊` or `γ₋² ≤ 4Γ(γ₊ − Γ)`).
pub fn p_divisible_with(rs: &RateSet, band: f64, conv: GammaConvention) -> Result<bool> {
    check(rs)?;
    let (gp, gm, big) = (rs.gamma_plus(), rs.gamma_minus(), rs.big_gamma_with(conv));
    Ok(
        gm.abs() <= gp + band
            && (2.0 * big > gp - band || gm * gm <= 4.0 * big * (gp - big) + band),
    )
}

/// `γ₊ ≥ 0` and `Γ ≥ 0`.
pub fn blp_contractive(rs: &RateSet, band: f64) -> Result<bool> {
    check(rs)?;
    Ok(rs.gamma_plus() >= -band && rs.big_gamma() >= -band)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MapSign {
    Negative,
    ZeroBand,
    /// `σ_map ≥ 0`. The fixed point always gives zero, so `σ_map` is never
    /// strictly positive.
    NonNegative,
}

fn l(x: f64) -> f64 {
    x.atanh()
}

/// `σ̃(r, X)` for rates `rs` and fixed-point height `z_fp`.
pub fn sigma_tilde(rs: &RateSet, z_fp: f64, r: f64, x: f64) -> f64 {
    let (gp, gm, big) = (rs.gamma_plus(), rs.gamma_minus(), rs.big_gamma());
    let zdot = gm - gp * r * x;
    let lr = if r >= 1.0 { f64::INFINITY } else { l(r) };
    (big * r * (1.0 - x * x) - x * zdot) * lr + zdot * l(z_fp)
}

/// Coefficient of `L(r)` in `σ̃` at `r = 1`.
pub fn rim_coefficient(rs: &RateSet, x: f64) -> f64 {
    let (gp, gm, big) = (rs.gamma_plus(), rs.gamma_minus(), rs.big_gamma());
    big * (1.0 - x * x) - gm * x + gp * x * x
}

/// Radii used by the map-entropy grids: uniform up to 0.99, then
/// logarithmic towards the rim down to `1 − 1e-6`.
pub fn radial_grid(n_lin: usize, n_log: usize) -> Vec<f64> {
    let mut r: Vec<f64> = (0..n_lin).map(|k| 0.99 * k as f64 / n_lin as f64).collect();
    for k in 0..=n_log {
        r.push(1.0 - 10f64.powf(-2.0 - 4.0 * k as f64 / n_log as f64));
    }
    r
}

pub const RIM_DELTA: f64 = 1e-6;

/// Per-radius quadratic analysis of `σ̃` in `X`, after mirroring so that
/// `z∞ ≥ 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapSigmaAnalysis {
    pub r_grid: Vec<f64>,
    /// Extremum `X₀(r)` of the quadratic, `None` when it is linear.
    pub x0: Vec<Option<f64>>,
    /// `σ̃(r, −1)` and `σ̃(r, 1)`.
    pub g_at_bounds: Vec<(f64, f64)>,
    /// Minimum over `X ∈ [−1, 1]` at each radius.
    pub min_over_x: Vec<f64>,
    pub min_location: (f64, f64),
    pub min_value: f64,
    /// `Γ − γ₊²z∞²/(4(γ₊ − Γ))`, when `γ₊ > Γ`.
    pub boundary_asymptote: Option<f64>,
    /// `X₀` in the limit `r → 1`.
    pub x_rim: Option<f64>,
    pub z_inf: f64,
}

pub fn map_sigma_analysis(rs: &RateSet, r_grid: &[f64]) -> Result<MapSigmaAnalysis> {
    check(rs)?;
    let gp = rs.gamma_plus();
    let big = rs.big_gamma();
    let z = rs.z_inf().ok_or(Error::SingularRates { t: rs.t })?.abs();
    if z >= 1.0 {
        return Err(Error::InvalidParameter(format!(
            "|z∞| = {z} is not inside the Bloch ball"
        )));
    }
    let lz = l(z);
    let mut x0 = Vec::with_capacity(r_grid.len());
    let mut bounds = Vec::with_capacity(r_grid.len());
    let mut mins = Vec::with_capacity(r_grid.len());
    let mut best = (f64::INFINITY, (0.0, 0.0));
    for &r in r_grid {
        let rl = r * l(r);
        // g(X) = a X² + b X + c
        let a = (gp - big) * rl;
        let b = -gp * (r * lz + z * l(r));
        let c = big * rl + gp * z * lz;
        let g = |x: f64| (a * x + b) * x + c;
        let vertex = (a != 0.0).then(|| -b / (2.0 * a));
        let (gm1, gp1) = (g(-1.0), g(1.0));
        let mut m = (gm1, -1.0);
        if gp1 < m.0 {
            m = (gp1, 1.0);
        }
        if let Some(v) = vertex {
            if (-1.0..=1.0).contains(&v) && g(v) < m.0 {
                m = (g(v), v);
            }
        }
        x0.push(vertex);
        bounds.push((gm1, gp1));
        mins.push(m.0);
        if m.0 < best.0 {
            best = (m.0, (r, m.1));
        }
    }
    let (asym, x_rim) = if gp > big {
        (
            Some(big - gp * gp * z * z / (4.0 * (gp - big))),
            Some(gp * z / (2.0 * (gp - big))),
        )
    } else {
        (None, None)
    };
    Ok(MapSigmaAnalysis {
        r_grid: r_grid.to_vec(),
        x0,
        g_at_bounds: bounds,
        min_over_x: mins,
        min_location: best.1,
        min_value: best.0,
        boundary_asymptote: asym,
        x_rim,
        z_inf: z,
    })
}

/// Sign of `σ_map` without grid truncation at the rim.
pub fn sigma_map_sign_analytic(rs: &RateSet, band: f64) -> Result<MapSign> {
    check(rs)?;
    let (gp, gm, big) = (rs.gamma_plus(), rs.gamma_minus(), rs.big_gamma());
    if gp < -band || big < -band || gm.abs() > gp + band {
        return Ok(MapSign::Negative);
    }
    if gp <= band {
        return Ok(if big > band {
            MapSign::NonNegative
        } else {
            MapSign::ZeroBand
        });
    }
    let z = (gm / gp).abs();
    if z > 1.0 - 1e-12 {
        return Ok(MapSign::ZeroBand);
    }
    if gp - big <= 0.0 {
        return Ok(MapSign::NonNegative);
    }
    let x_rim = gp * z / (2.0 * (gp - big));
    if x_rim < 1.0 {
        // same sign as the asymptote coefficient, free of the 1/(γ₊ − Γ) factor
        let d = 4.0 * big * (gp - big) - gm * gm;
        if d < -band {
            return Ok(MapSign::Negative);
        }
        if d.abs() <= band {
            return Ok(MapSign::ZeroBand);
        }
    }
    let an = map_sigma_analysis(rs, &radial_grid(200, 200))?;
    if an.min_value < -band {
        return Ok(MapSign::Negative);
    }
    Ok(MapSign::NonNegative)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SigmaMapGrid {
    /// Minimum of `σ̃` over the truncated ball, fixed point included.
    pub finite_min: f64,
    pub argmin: (f64, f64),
    /// Minimum over `X` of the `L(r)` coefficient at the rim.
    pub rim_min: f64,
    pub rim_divergent: bool,
}

impl SigmaMapGrid {
    /// `σ_map`, `−∞` when the rim drives it.
    pub fn value(&self) -> f64 {
        if self.rim_divergent {
            f64::NEG_INFINITY
        } else {
            self.finite_min
        }
    }

    pub fn sign(&self, band: f64) -> MapSign {
        if self.rim_divergent || self.finite_min < -band {
            MapSign::Negative
        } else if self.rim_min.abs() <= band {
            MapSign::ZeroBand
        } else {
            MapSign::NonNegative
        }
    }
}

const X_GRID: usize = 200;

/// Brute-force minimum of `σ̃` over an `(r, X)` grid, `r ≤ 1 − 1e-6`, with
/// one local refinement; the rim decides divergence from the grid minimum
/// of its `L(r)` coefficient.
pub fn sigma_map_grid(rs: &RateSet, fp: &FixedPoint, cfg: &NumericsConfig) -> Result<SigmaMapGrid> {
    check(rs)?;
    let band = cfg.sign_band;
    let z_fp = fp.z_inf();
    let rs_grid = radial_grid(100, 100);
    let xs: Vec<f64> = (0..=X_GRID)
        .map(|k| -1.0 + 2.0 * k as f64 / X_GRID as f64)
        .collect();
    // the fixed point itself: σ̃ = 0
    let mut best = (0.0, (z_fp.abs(), if z_fp < 0.0 { -1.0 } else { 1.0 }));
    let mut best_idx = None;
    for (i, &r) in rs_grid.iter().enumerate() {
        for (j, &x) in xs.iter().enumerate() {
            let v = sigma_tilde(rs, z_fp, r, x);
            if v < best.0 {
                best = (v, (r, x));
                best_idx = Some((i, j));
            }
        }
    }
    if let Some((i, j)) = best_idx {
        let r_lo = rs_grid[i.saturating_sub(1)];
        let r_hi = rs_grid.get(i + 1).copied().unwrap_or(1.0 - RIM_DELTA);
        let x_lo = xs[j.saturating_sub(1)];
        let x_hi = xs.get(j + 1).copied().unwrap_or(1.0);
        for a in 0..=20 {
            let r = r_lo + (r_hi - r_lo) * a as f64 / 20.0;
            for b in 0..=20 {
                let x = x_lo + (x_hi - x_lo) * b as f64 / 20.0;
                let v = sigma_tilde(rs, z_fp, r, x);
                if v < best.0 {
                    best = (v, (r, x));
                }
            }
        }
    }
    let fine: Vec<f64> = (0..=10 * X_GRID)
        .map(|k| -1.0 + k as f64 / (5 * X_GRID) as f64)
        .collect();
    let rim_min = fine
        .iter()
        .map(|&x| rim_coefficient(rs, x))
        .fold(f64::INFINITY, f64::min);
    Ok(SigmaMapGrid {
        finite_min: best.0,
        argmin: best.1,
        rim_min,
        rim_divergent: rim_min < -band,
    })
}

/// `(ℓ₀, z₀)` initial states: a lattice in the half-disc plus the rim.
pub fn initial_state_grid(n: usize) -> Vec<(f64, f64)> {
    let mut pts = Vec::new();
    for i in 0..=n {
        let ell = i as f64 / n as f64;
        for j in 0..=2 * n {
            let z = -1.0 + j as f64 / n as f64;
            if ell * ell + z * z <= 1.0 - 1e-12 {
                pts.push((ell, z));
            }
        }
    }
    for k in 0..=4 * n {
        let th = std::f64::consts::PI * k as f64 / (4 * n) as f64;
        pts.push((th.sin().max(0.0), th.cos()));
    }
    pts
}

fn qubit_from_bloch(ell: f64, z: f64) -> CMatrix {
    CMatrix::from_row_slice(
        2,
        2,
        &[
            C64::new(0.5 * (1.0 + z), 0.0),
            C64::new(0.5 * ell, 0.0),
            C64::new(0.5 * ell, 0.0),
            C64::new(0.5 * (1.0 - z), 0.0),
        ],
    )
}

/// `σ^fp(t)` of the initial state `(ℓ₀, z₀)` under the exact map.
pub fn sigma_fp_initial(map: &ExactReducedMap, z_fp: f64, ell0: f64, z0: f64) -> f64 {
    let (r, d) = map.apply(&qubit_from_bloch(ell0, z0));
    sigma_fp_qubit(r[(0, 0)].re, r[(0, 1)], d[(0, 0)].re, d[(0, 1)], z_fp)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SigmaMin {
    pub value: f64,
    pub argmin: (f64, f64),
    pub n_states: usize,
}

pub fn sigma_fp_min_with_map(
    map: &ExactReducedMap,
    fp: &FixedPoint,
    grid: &[(f64, f64)],
    n: usize,
) -> SigmaMin {
    let z_fp = fp.z_inf();
    let mut best = (f64::INFINITY, (0.0, 0.0));
    for &(ell, z) in grid {
        let v = sigma_fp_initial(map, z_fp, ell, z);
        if v < best.0 || best.0.is_nan() {
            best = (v, (ell, z));
        }
    }
    let mut count = grid.len();
    let (eb, zb) = best.1;
    let step = 1.0 / (4 * n) as f64;
    let rim = eb * eb + zb * zb > 1.0 - 1e-9;
    for a in -4i32..=4 {
        for b in -4i32..=4 {
            let (ell, z) = if rim {
                if b != 0 {
                    continue;
                }
                let th = zb.clamp(-1.0, 1.0).acos() + a as f64 * step;
                let th = th.clamp(0.0, std::f64::consts::PI);
                (th.sin().max(0.0), th.cos())
            } else {
                (eb + a as f64 * step, zb + b as f64 * step)
            };
            if ell < 0.0 || ell * ell + z * z > 1.0 {
                continue;
            }
            count += 1;
            let v = sigma_fp_initial(map, z_fp, ell, z);
            if v < best.0 {
                best = (v, (ell, z));
            }
        }
    }
    SigmaMin {
        value: best.0,
        argmin: best.1,
        n_states: count,
    }
}

/// Minimum of `σ^fp(t)` over initial qubit states, each evolved exactly
/// through the joint dynamics.
pub fn sigma_fp_min(t: f64, params: &ModelParams, cfg: &NumericsConfig) -> Result<SigmaMin> {
    params.validate()?;
    let n = cfg.cutoff(params);
    let map = ExactReducedMap::new(params, n, t);
    let grid = initial_state_grid(cfg.state_grid);
    Ok(sigma_fp_min_with_map(
        &map,
        &thermal_fixed_point(params),
        &grid,
        cfg.state_grid,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DivisibilityVerdict {
    pub t: f64,
    pub gt: f64,
    pub cp_div: bool,
    pub p_div: bool,
    pub blp: bool,
    pub sigma_min: f64,
    pub sigma_map: f64,
    pub sigma_map_sign: MapSign,
    pub masked: bool,
}

/// Classifies one time point. `sigma_min` is taken as given (it does not
/// depend on the rates).
pub fn divisibility_verdict(
    rs: &RateSet,
    params: &ModelParams,
    cfg: &NumericsConfig,
    sigma_min: f64,
) -> DivisibilityVerdict {
    let gt = rs.t * params.g;
    if rs.singular {
        return DivisibilityVerdict {
            t: rs.t,
            gt,
            cp_div: false,
            p_div: false,
            blp: false,
            sigma_min,
            sigma_map: f64::NAN,
            sigma_map_sign: MapSign::ZeroBand,
            masked: true,
        };
    }
    let band = cfg.sign_band;
    let fp = thermal_fixed_point(params);
    let grid = sigma_map_grid(rs, &fp, cfg).expect("rates checked");
    DivisibilityVerdict {
        t: rs.t,
        gt,
        cp_div: cp_divisible(rs, band).expect("rates checked"),
        p_div: p_divisible_with(rs, band, cfg.gamma_convention).expect("rates checked"),
        blp: blp_contractive(rs, band).expect("rates checked"),
        sigma_min,
        sigma_map: grid.value(),
        sigma_map_sign: sigma_map_sign_analytic(rs, band).unwrap_or(MapSign::ZeroBand),
        masked: false,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mismatch {
    pub rates: RateSet,
    pub p_div: bool,
    pub sign: MapSign,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TheoremReport {
    pub checked: usize,
    pub zero_band: usize,
    pub masked: usize,
    pub mismatches: Vec<Mismatch>,
}

impl TheoremReport {
    pub fn passed(&self) -> bool {
        self.mismatches.is_empty()
    }
}

/// `p_div ⇔ σ_map ≥ 0` at every unmasked rate set outside the zero band.
pub fn theorem1_check(rates: &[RateSet], band: f64) -> TheoremReport {
    theorem1_check_with(rates, band, |rs| p_divisible(rs, band))
}

/// As [`theorem1_check`] with a substitute divisibility classifier.
pub fn theorem1_check_with(
    rates: &[RateSet],
    band: f64,
    classify: impl Fn(&RateSet) -> Result<bool> + Sync,
) -> TheoremReport {
    let results: Vec<Option<(bool, MapSign)>> = rates
        .par_iter()
        .map(|rs| {
            if rs.singular {
                return None;
            }
            let p = classify(rs).ok()?;
            let s = sigma_map_sign_analytic(rs, band).ok()?;
            Some((p, s))
        })
        .collect();
    let mut rep = TheoremReport::default();
    for (rs, r) in rates.iter().zip(results) {
        match r {
            None => rep.masked += 1,
            Some((_, MapSign::ZeroBand)) => rep.zero_band += 1,
            Some((p, s)) => {
                rep.checked += 1;
                if p != (s == MapSign::NonNegative) {
                    rep.mismatches.push(Mismatch {
                        rates: *rs,
                        p_div: p,
                        sign: s,
                    });
                }
            }
        }
    }
    rep
}

/// Random rate sets with a fixed `z∞ ∈ [0, 1)`: `γ₊, γ₃ ∈ [−1, 1]`,
/// `γ₁,₂ = γ₊(1 ± z∞)/2`.
pub fn random_rate_sets(n: usize, seed: u64) -> Vec<RateSet> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|k| {
            let z: f64 = rng.gen_range(0.0..1.0);
            let gp: f64 = rng.gen_range(-1.0..=1.0);
            let g3: f64 = rng.gen_range(-1.0..=1.0);
            let om: f64 = rng.gen_range(0.0..2.0);
            RateSet::from_rates(k as f64, om, 0.5 * gp * (1.0 + z), 0.5 * gp * (1.0 - z), g3)
        })
        .collect()
}

/// Maximal runs of consecutive unmasked grid points with the same value.
pub fn intervals<T: PartialEq + Copy>(times: &[f64], values: &[Option<T>]) -> Vec<(f64, f64, T)> {
    let mut out = Vec::new();
    let mut cur: Option<(f64, f64, T)> = None;
    for (&t, v) in times.iter().zip(values) {
        match (v, &mut cur) {
            (Some(v), Some(c)) if c.2 == *v => c.1 = t,
            (Some(v), _) => {
                if let Some(c) = cur.take() {
                    out.push(c);
                }
                cur = Some((t, t, *v));
            }
            (None, _) => {
                if let Some(c) = cur.take() {
                    out.push(c);
                }
            }
        }
    }
    out.extend(cur);
    out
}
