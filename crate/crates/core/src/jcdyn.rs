//! Exact Jaynes–Cummings evolution of the joint qubit⊗mode state.
//!
//! The propagator is the analytic interaction-picture `U(t)` with its 2×2
//! blocks on `(|1,n⟩, |0,n+1⟩)`. Joint states are stored in the Schrödinger
//! picture, `e^{-iH₀t} U(t)`, so that reduced coherences rotate with the same
//! phase as the master-equation coefficient `γ(t)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qstate::{
    entropy_of_eigenvalues, hermitian_eigenvalues, thermal_populations, CMatrix, DensityMatrix, C64,
};

/// Physical constants, in units `ω_A = ħ = k_B = 1` when `omega_a = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub omega_a: f64,
    pub omega_b: f64,
    pub g: f64,
    /// Initial qubit inverse temperature; absent for presets that only
    /// minimise over initial states.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta_a: Option<f64>,
    pub beta_b: f64,
}

impl ModelParams {
    pub fn new(
        omega_a: f64,
        omega_b: f64,
        g: f64,
        beta_a: Option<f64>,
        beta_b: f64,
    ) -> Result<Self> {
        let p = Self {
            omega_a,
            omega_b,
            g,
            beta_a,
            beta_b,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let pos = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidParameter(format!(
                    "{name} must be positive and finite, got {v}"
                )))
            }
        };
        pos("omega_a", self.omega_a)?;
        pos("omega_b", self.omega_b)?;
        pos("beta_b", self.beta_b)?;
        if let Some(b) = self.beta_a {
            pos("beta_a", b)?;
        }
        if !(self.g >= 0.0 && self.g.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "g must be >= 0, got {}",
                self.g
            )));
        }
        Ok(())
    }

    pub fn delta(&self) -> f64 {
        self.omega_a - self.omega_b
    }

    /// `ω_B β_B`.
    pub fn bath_x(&self) -> f64 {
        self.omega_b * self.beta_b
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "CutoffRepr", into = "CutoffRepr")]
pub enum FockCutoff {
    Auto,
    Fixed(usize),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum CutoffRepr {
    Int(usize),
    Str(String),
}

impl TryFrom<CutoffRepr> for FockCutoff {
    type Error = String;
    fn try_from(r: CutoffRepr) -> std::result::Result<Self, String> {
        match r {
            CutoffRepr::Int(n) => Ok(FockCutoff::Fixed(n)),
            CutoffRepr::Str(s) if s == "auto" => Ok(FockCutoff::Auto),
            CutoffRepr::Str(s) => Err(format!(
                "fock_cutoff must be an integer or \"auto\", got {s:?}"
            )),
        }
    }
}

impl From<FockCutoff> for CutoffRepr {
    fn from(c: FockCutoff) -> Self {
        match c {
            FockCutoff::Auto => CutoffRepr::Str("auto".into()),
            FockCutoff::Fixed(n) => CutoffRepr::Int(n),
        }
    }
}

/// Which decay combination enters the divisibility criterion as `Γ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GammaConvention {
    /// `Γ = γ₃ + (γ₁ + γ₂)/2`
    #[default]
    GammaPlus,
    /// `Γ = γ₃ + γ₂/2`
    GammaTwo,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NumericsConfig {
    pub fock_cutoff: FockCutoff,
    pub tail_tol: f64,
    pub t_max: f64,
    pub n_steps: usize,
    pub eig_clamp: f64,
    pub sign_band: f64,
    pub state_grid: usize,
    pub gamma_convention: GammaConvention,
    /// Step of the local finite-difference stencils.
    pub fd_step: f64,
}

impl Default for NumericsConfig {
    fn default() -> Self {
        Self {
            fock_cutoff: FockCutoff::Auto,
            tail_tol: 1e-14,
            t_max: 20.0,
            n_steps: 2000,
            eig_clamp: 1e-15,
            sign_band: 1e-9,
            state_grid: 24,
            gamma_convention: GammaConvention::GammaPlus,
            fd_step: 1e-2,
        }
    }
}

impl NumericsConfig {
    pub fn validate(&self) -> Result<()> {
        if let FockCutoff::Fixed(n) = self.fock_cutoff {
            if n < 2 {
                return Err(Error::InvalidParameter(format!(
                    "fock_cutoff must be >= 2, got {n}"
                )));
            }
        }
        if !(self.tail_tol > 0.0 && self.tail_tol <= 1e-6) {
            return Err(Error::InvalidParameter(format!(
                "tail_tol must lie in (0, 1e-6], got {}",
                self.tail_tol
            )));
        }
        if !(self.t_max >= 0.0 && self.t_max.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "t_max must be >= 0, got {}",
                self.t_max
            )));
        }
        if self.n_steps == 0 {
            return Err(Error::InvalidParameter("n_steps must be >= 1".into()));
        }
        if !(self.eig_clamp > 0.0) || !(self.sign_band >= 0.0) || !(self.fd_step > 0.0) {
            return Err(Error::InvalidParameter(
                "eig_clamp and fd_step must be positive, sign_band non-negative".into(),
            ));
        }
        if self.state_grid < 2 {
            return Err(Error::InvalidParameter("state_grid must be >= 2".into()));
        }
        Ok(())
    }

    pub fn cutoff(&self, params: &ModelParams) -> usize {
        match self.fock_cutoff {
            FockCutoff::Auto => auto_cutoff(params, self.tail_tol),
            FockCutoff::Fixed(n) => n,
        }
    }

    /// Uniform grid `t_k = k t_max / n_steps`, `k = 0..=n_steps`.
    pub fn time_grid(&self) -> Vec<f64> {
        (0..=self.n_steps)
            .map(|k| self.t_max * k as f64 / self.n_steps as f64)
            .collect()
    }
}

const CUTOFF_MARGIN: usize = 8;

/// Smallest `N` with `e^{-Nx}(1 − e^{-x}) < tail_tol`, `x = ω_Bβ_B`, at least
/// 2, plus a margin of 8 levels.
pub fn auto_cutoff(params: &ModelParams, tail_tol: f64) -> usize {
    let x = params.bath_x();
    let lead = -(-x).exp_m1();
    let mut n = ((lead.ln() - tail_tol.ln()) / x).ceil().max(0.0) as usize;
    while n > 0 && (-(x * (n - 1) as f64)).exp() * lead < tail_tol {
        n -= 1;
    }
    while (-(x * n as f64)).exp() * lead >= tail_tol {
        n += 1;
    }
    n.max(2) + CUTOFF_MARGIN
}

/// Normalised Boltzmann weights of the truncated mode.
pub fn bath_weights(params: &ModelParams, cutoff: usize) -> Vec<f64> {
    let e: Vec<f64> = (0..cutoff).map(|n| n as f64 * params.omega_b).collect();
    thermal_populations(&e, params.beta_b).expect("validated params")
}

/// `Ω_m = √(Δ² + 4g²m)`.
pub fn rabi_frequency(params: &ModelParams, m: usize) -> f64 {
    let d = params.delta();
    (d * d + 4.0 * params.g * params.g * m as f64).sqrt()
}

/// `(c(m), d(m))` of the interaction-picture propagator.
fn cd(params: &ModelParams, m: usize, t: f64) -> (C64, C64) {
    let d = params.delta();
    let om = rabi_frequency(params, m);
    let (s, c) = (0.5 * om * t).sin_cos();
    let s_over = if om == 0.0 { 0.5 * t } else { s / om };
    let ph = C64::from_polar(1.0, 0.5 * d * t);
    (
        ph * C64::new(c, -d * s_over),
        ph * C64::new(0.0, -2.0 * params.g * s_over),
    )
}

/// Image of a basis ket: at most two non-zero amplitudes.
#[derive(Debug, Clone, Copy)]
pub(crate) struct SparseKet {
    pub idx: [usize; 2],
    pub amp: [C64; 2],
    pub len: usize,
}

impl SparseKet {
    fn one(i: usize, a: C64) -> Self {
        Self {
            idx: [i, 0],
            amp: [a, C64::new(0.0, 0.0)],
            len: 1,
        }
    }
    fn two(i: usize, a: C64, j: usize, b: C64) -> Self {
        Self {
            idx: [i, j],
            amp: [a, b],
            len: 2,
        }
    }
    pub fn entries(&self) -> impl Iterator<Item = (usize, C64)> + '_ {
        (0..self.len).map(move |k| (self.idx[k], self.amp[k]))
    }
}

/// Analytic JC propagator at a fixed time, stored by blocks.
#[derive(Debug, Clone)]
pub struct Propagator {
    params: ModelParams,
    cutoff: usize,
    t: f64,
    /// `(c(n+1), d(n+1)√(n+1))` for the block `(|1,n⟩, |0,n+1⟩)`, `n < N−1`.
    blocks: Vec<(C64, C64)>,
}

impl Propagator {
    pub fn new(params: &ModelParams, cutoff: usize, t: f64) -> Self {
        let blocks = (0..cutoff.saturating_sub(1))
            .map(|n| {
                let (c, d) = cd(params, n + 1, t);
                (c, d * ((n + 1) as f64).sqrt())
            })
            .collect();
        Self {
            params: *params,
            cutoff,
            t,
            blocks,
        }
    }

    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    /// Interaction-picture image `U|q,n⟩`.
    pub(crate) fn apply_basis(&self, q: usize, n: usize) -> SparseKet {
        let nn = self.cutoff;
        if q == 0 {
            if n + 1 >= nn {
                return SparseKet::one(n, C64::new(1.0, 0.0));
            }
            let (c, dsq) = self.blocks[n];
            SparseKet::two(n, c, nn + n + 1, -dsq.conj())
        } else {
            if n == 0 {
                return SparseKet::one(nn, C64::new(1.0, 0.0));
            }
            let (c, dsq) = self.blocks[n - 1];
            SparseKet::two(n - 1, dsq, nn + n, c.conj())
        }
    }

    /// Schrödinger-picture image `e^{-iH₀t} U|q,n⟩`.
    pub(crate) fn apply_basis_lab(&self, q: usize, n: usize) -> SparseKet {
        let mut k = self.apply_basis(q, n);
        for s in 0..k.len {
            let e = free_energy(&self.params, self.cutoff, k.idx[s]);
            k.amp[s] *= C64::from_polar(1.0, -e * self.t);
        }
        k
    }

    /// Dense interaction-picture matrix.
    pub fn to_dense(&self) -> CMatrix {
        let d = 2 * self.cutoff;
        let mut u = CMatrix::zeros(d, d);
        for q in 0..2 {
            for n in 0..self.cutoff {
                for (i, a) in self.apply_basis(q, n).entries() {
                    u[(i, q * self.cutoff + n)] = a;
                }
            }
        }
        u
    }
}

/// Dense interaction-picture propagator `U(t)` of dimension `2N`.
pub fn jc_propagator(params: &ModelParams, cutoff: usize, t: f64) -> CMatrix {
    Propagator::new(params, cutoff, t).to_dense()
}

/// Free energy `⟨q,n|H₀|q,n⟩` of joint basis index `i`.
fn free_energy(params: &ModelParams, cutoff: usize, i: usize) -> f64 {
    let (q, n) = (i / cutoff, i % cutoff);
    let qa = if q == 0 { params.omega_a } else { 0.0 };
    qa + n as f64 * params.omega_b
}

/// Partner of basis index `i` under `V = g(σ₊a + σ₋a†)`, with the coupling.
fn coupling_partner(params: &ModelParams, cutoff: usize, i: usize) -> Option<(usize, f64)> {
    let (q, n) = (i / cutoff, i % cutoff);
    if q == 0 {
        (n + 1 < cutoff).then(|| (cutoff + n + 1, params.g * ((n + 1) as f64).sqrt()))
    } else {
        (n >= 1).then(|| (n - 1, params.g * (n as f64).sqrt()))
    }
}

/// Joint state as a list of non-zero entries `(i, j, ρ_ij)`.
///
/// For a product initial state with diagonal bath the evolved joint state
/// has `O(N)` non-zero entries, so every reduced quantity is linear in `N`.
#[derive(Debug, Clone)]
pub(crate) struct SparseJoint {
    pub cutoff: usize,
    pub entries: Vec<(usize, usize, C64)>,
}

impl SparseJoint {
    /// `U (ρ_A ⊗ Σ w_n |n⟩⟨n|) U†` in the Schrödinger picture.
    pub fn evolve(prop: &Propagator, rho_a0: &CMatrix, weights: &[f64]) -> Self {
        let nn = prop.cutoff;
        let mut entries = Vec::with_capacity(16 * nn);
        for (n, &w) in weights.iter().enumerate() {
            let kets = [prop.apply_basis_lab(0, n), prop.apply_basis_lab(1, n)];
            for q in 0..2 {
                for p in 0..2 {
                    let a = rho_a0[(q, p)] * w;
                    if a == C64::new(0.0, 0.0) {
                        continue;
                    }
                    for (i, x) in kets[q].entries() {
                        for (j, y) in kets[p].entries() {
                            entries.push((i, j, a * x * y.conj()));
                        }
                    }
                }
            }
        }
        Self {
            cutoff: nn,
            entries,
        }
    }

    pub fn to_dense(&self) -> CMatrix {
        let d = 2 * self.cutoff;
        let mut m = CMatrix::zeros(d, d);
        for &(i, j, v) in &self.entries {
            m[(i, j)] += v;
        }
        m
    }

    pub fn reduced_a(&self) -> CMatrix {
        let nn = self.cutoff;
        let mut m = CMatrix::zeros(2, 2);
        for &(i, j, v) in &self.entries {
            if i % nn == j % nn {
                m[(i / nn, j / nn)] += v;
            }
        }
        m
    }

    pub fn reduced_b(&self) -> CMatrix {
        let nn = self.cutoff;
        let mut m = CMatrix::zeros(nn, nn);
        for &(i, j, v) in &self.entries {
            if i / nn == j / nn {
                m[(i % nn, j % nn)] += v;
            }
        }
        m
    }

    /// `Tr[ρ O]` for an operator given by a closure over basis indices that
    /// is non-zero only on `V`'s partner pairs (`O_ji = f(j, i)`).
    fn coupling_expectation(
        &self,
        params: &ModelParams,
        f: impl Fn(usize, usize, f64) -> f64,
    ) -> f64 {
        let mut acc = C64::new(0.0, 0.0);
        for &(i, j, v) in &self.entries {
            if let Some((k, gk)) = coupling_partner(params, self.cutoff, j) {
                if k == i {
                    acc += v * f(j, i, gk);
                }
            }
        }
        acc.re
    }

    /// `Tr[ρ V]`.
    pub fn interaction_energy(&self, params: &ModelParams) -> f64 {
        self.coupling_expectation(params, |_, _, gk| gk)
    }

    /// `Ė_B = -i Tr[ρ [H_B, V]]`, exact.
    pub fn bath_energy_rate(&self, params: &ModelParams) -> f64 {
        let nn = self.cutoff;
        let mut acc = C64::new(0.0, 0.0);
        for &(i, j, v) in &self.entries {
            if let Some((k, gk)) = coupling_partner(params, nn, j) {
                if k == i {
                    // [H_B, V]_{ji} = (E_B(j) − E_B(i)) V_{ji}
                    let w = params.omega_b * ((j % nn) as f64 - (i % nn) as f64) * gk;
                    acc += v * w;
                }
            }
        }
        (C64::new(0.0, -1.0) * acc).re
    }

    /// `ρ̇_A = -i[H_A, ρ_A] - i Tr_B[V, ρ_AB]`, exact.
    pub fn reduced_a_rate(&self, params: &ModelParams) -> CMatrix {
        let nn = self.cutoff;
        let mut comm = CMatrix::zeros(2, 2);
        for &(i, j, v) in &self.entries {
            // (Vρ)_{k j} += V_{k i} ρ_{ij}
            if let Some((k, gk)) = coupling_partner(params, nn, i) {
                if k % nn == j % nn {
                    comm[(k / nn, j / nn)] += v * gk;
                }
            }
            // (ρV)_{i k} += ρ_{ij} V_{j k}
            if let Some((k, gk)) = coupling_partner(params, nn, j) {
                if i % nn == k % nn {
                    comm[(i / nn, k / nn)] -= v * gk;
                }
            }
        }
        let rho = self.reduced_a();
        let mut out = comm * C64::new(0.0, -1.0);
        // [σ₊σ₋, ρ] only has off-diagonal entries.
        out[(0, 1)] += C64::new(0.0, -params.omega_a) * rho[(0, 1)];
        out[(1, 0)] += C64::new(0.0, params.omega_a) * rho[(1, 0)];
        out
    }

    pub fn top_level_population(&self) -> f64 {
        let nn = self.cutoff;
        self.entries
            .iter()
            .filter(|&&(i, j, _)| i == j && i % nn == nn - 1)
            .map(|&(_, _, v)| v.re)
            .sum()
    }
}

/// Joint state `ρ_AB(t)` (Schrödinger picture, qubit ⊗ Fock ordering).
#[derive(Debug, Clone)]
pub struct JointState {
    pub params: ModelParams,
    pub cutoff: usize,
    pub rho_ab: DensityMatrix,
    pub time: f64,
}

fn check_leakage(top: f64, cutoff: usize, tail_tol: f64) -> Result<()> {
    let limit = 10.0 * tail_tol;
    if top > limit {
        return Err(Error::CutoffInsufficient {
            cutoff,
            leakage: top,
            limit,
        });
    }
    Ok(())
}

fn check_qubit(rho_a0: &DensityMatrix) -> Result<()> {
    if rho_a0.dim() != 2 {
        return Err(Error::DimensionMismatch(format!(
            "initial qubit state has dimension {}",
            rho_a0.dim()
        )));
    }
    Ok(())
}

/// `ρ_AB(t) = U(t)(ρ_A(0) ⊗ w(H_B, β_B))U(t)†`.
pub fn evolve_joint(
    rho_a0: &DensityMatrix,
    params: &ModelParams,
    cfg: &NumericsConfig,
    t: f64,
) -> Result<JointState> {
    check_qubit(rho_a0)?;
    params.validate()?;
    let cutoff = cfg.cutoff(params);
    let w = bath_weights(params, cutoff);
    let prop = Propagator::new(params, cutoff, t);
    let sparse = SparseJoint::evolve(&prop, rho_a0.matrix(), &w);
    check_leakage(sparse.top_level_population(), cutoff, cfg.tail_tol)?;
    Ok(JointState {
        params: *params,
        cutoff,
        rho_ab: DensityMatrix::new_unchecked(sparse.to_dense())?,
        time: t,
    })
}

/// `U ρ_AB(0) U†` for an arbitrary joint initial state, by dense products.
pub fn evolve_joint_dense(state: &JointState, t: f64) -> Result<JointState> {
    let nn = state.cutoff;
    let u = Propagator::new(&state.params, nn, t).to_dense();
    let phase = CMatrix::from_fn(2 * nn, 2 * nn, |i, j| {
        if i == j {
            C64::from_polar(1.0, -free_energy(&state.params, nn, i) * t)
        } else {
            C64::new(0.0, 0.0)
        }
    });
    let us = phase * u;
    let m = &us * state.rho_ab.matrix() * us.adjoint();
    Ok(JointState {
        params: state.params,
        cutoff: nn,
        rho_ab: DensityMatrix::new_unchecked(m)?,
        time: state.time + t,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointObservables {
    pub t: f64,
    pub s_a: f64,
    pub s_b: f64,
    pub s_ab: f64,
    pub i_ab: f64,
    pub e_b: f64,
    pub e_int: f64,
    pub p1: f64,
}

/// Number operator and Hamiltonians as dense `2N` matrices.
pub struct JointOperators {
    pub h_a: CMatrix,
    pub h_b: CMatrix,
    pub v: CMatrix,
    pub excitations: CMatrix,
}

impl JointOperators {
    pub fn new(params: &ModelParams, cutoff: usize) -> Self {
        let nn = cutoff;
        let id_b = CMatrix::identity(nn, nn);
        let id_a = CMatrix::identity(2, 2);
        let mut num = CMatrix::zeros(nn, nn);
        let mut a = CMatrix::zeros(nn, nn);
        for n in 0..nn {
            num[(n, n)] = C64::new(n as f64, 0.0);
            if n + 1 < nn {
                a[(n, n + 1)] = C64::new(((n + 1) as f64).sqrt(), 0.0);
            }
        }
        let mut sp = CMatrix::zeros(2, 2);
        sp[(0, 1)] = C64::new(1.0, 0.0);
        let sm = sp.adjoint();
        let pe = &sp * &sm;
        let h_a = pe.kronecker(&id_b) * C64::new(params.omega_a, 0.0);
        let h_b = id_a.kronecker(&num) * C64::new(params.omega_b, 0.0);
        let v = (sp.kronecker(&a) + sm.kronecker(&a.adjoint())) * C64::new(params.g, 0.0);
        let excitations = pe.kronecker(&id_b) + id_a.kronecker(&num);
        Self {
            h_a,
            h_b,
            v,
            excitations,
        }
    }
}

/// All joint observables by dense linear algebra on `ρ_AB`.
pub fn joint_observables(state: &JointState) -> Result<JointObservables> {
    let nn = state.cutoff;
    let rho_a = crate::qstate::partial_trace_bath(&state.rho_ab, nn)?;
    let rho_b = crate::qstate::partial_trace_system(&state.rho_ab, nn)?;
    let clamp = crate::qstate::EIG_CLAMP;
    let s_a = entropy_of_eigenvalues(&rho_a.eigenvalues()?, clamp)?;
    let s_b = entropy_of_eigenvalues(&rho_b.eigenvalues()?, clamp)?;
    let s_ab = entropy_of_eigenvalues(&state.rho_ab.eigenvalues()?, clamp)?;
    let ops = JointOperators::new(&state.params, nn);
    Ok(JointObservables {
        t: state.time,
        s_a,
        s_b,
        s_ab,
        i_ab: s_a + s_b - s_ab,
        e_b: state.rho_ab.expectation(&ops.h_b).re,
        e_int: state.rho_ab.expectation(&ops.v).re,
        p1: rho_a.p1(),
    })
}

/// Conserved quantities `(Tr[ρH_AB], Tr[ρ(σ₊σ₋ + a†a)])`.
pub fn conserved_quantities(state: &JointState) -> (f64, f64) {
    let ops = JointOperators::new(&state.params, state.cutoff);
    let h = &ops.h_a + &ops.h_b + &ops.v;
    (
        state.rho_ab.expectation(&h).re,
        state.rho_ab.expectation(&ops.excitations).re,
    )
}

/// Product-state evolution that never forms the dense `2N × 2N` matrix.
///
/// `S_AB` is not recomputed: the evolution is unitary, so it stays at its
/// initial value `S_A(0) + S_B(0)`; the dense route checks this separately.
#[derive(Debug, Clone)]
pub struct ProductEvolution {
    params: ModelParams,
    cutoff: usize,
    weights: Vec<f64>,
    rho_a0: CMatrix,
    s_ab0: f64,
    tail_tol: f64,
    clamp: f64,
}

/// Reduced quantities at one time from [`ProductEvolution`].
#[derive(Debug, Clone)]
pub struct ReducedSnapshot {
    pub t: f64,
    pub rho_a: CMatrix,
    pub rho_b: CMatrix,
    pub obs: JointObservables,
    /// Exact `ρ̇_A` from the commutator with `V`.
    pub rhodot_a: CMatrix,
    /// Exact `Ė_B`.
    pub edot_b: f64,
}

impl ProductEvolution {
    pub fn new(rho_a0: &DensityMatrix, params: &ModelParams, cfg: &NumericsConfig) -> Result<Self> {
        check_qubit(rho_a0)?;
        params.validate()?;
        let cutoff = cfg.cutoff(params);
        let weights = bath_weights(params, cutoff);
        let s_ab0 = entropy_of_eigenvalues(&rho_a0.eigenvalues()?, cfg.eig_clamp)?
            + entropy_of_eigenvalues(&weights, cfg.eig_clamp)?;
        Ok(Self {
            params: *params,
            cutoff,
            weights,
            rho_a0: rho_a0.matrix().clone(),
            s_ab0,
            tail_tol: cfg.tail_tol,
            clamp: cfg.eig_clamp,
        })
    }

    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    /// Population of the top Fock level at `t`, without the leakage check.
    pub fn top_level_population(&self, t: f64) -> f64 {
        let prop = Propagator::new(&self.params, self.cutoff, t);
        SparseJoint::evolve(&prop, &self.rho_a0, &self.weights).top_level_population()
    }

    pub(crate) fn sparse_at(&self, t: f64) -> Result<SparseJoint> {
        let prop = Propagator::new(&self.params, self.cutoff, t);
        let s = SparseJoint::evolve(&prop, &self.rho_a0, &self.weights);
        check_leakage(s.top_level_population(), self.cutoff, self.tail_tol)?;
        Ok(s)
    }

    pub fn snapshot(&self, t: f64) -> Result<ReducedSnapshot> {
        let s = self.sparse_at(t)?;
        let rho_a = s.reduced_a();
        let rho_b = s.reduced_b();
        let s_a = entropy_of_eigenvalues(&hermitian_eigenvalues(&rho_a)?, self.clamp)?;
        let s_b = entropy_of_eigenvalues(&hermitian_eigenvalues(&rho_b)?, self.clamp)?;
        let e_b = self.params.omega_b
            * (0..self.cutoff)
                .map(|n| n as f64 * rho_b[(n, n)].re)
                .sum::<f64>();
        let obs = JointObservables {
            t,
            s_a,
            s_b,
            s_ab: self.s_ab0,
            i_ab: s_a + s_b - self.s_ab0,
            e_b,
            e_int: s.interaction_energy(&self.params),
            p1: rho_a[(0, 0)].re,
        };
        Ok(ReducedSnapshot {
            t,
            rhodot_a: s.reduced_a_rate(&self.params),
            edot_b: s.bath_energy_rate(&self.params),
            rho_a,
            rho_b,
            obs,
        })
    }

    pub fn joint_state(&self, t: f64) -> Result<JointState> {
        let s = self.sparse_at(t)?;
        Ok(JointState {
            params: self.params,
            cutoff: self.cutoff,
            rho_ab: DensityMatrix::new_unchecked(s.to_dense())?,
            time: t,
        })
    }
}

/// Time derivatives of [`JointObservables`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObservableRates {
    pub t: f64,
    pub sdot_a: f64,
    pub sdot_b: f64,
    pub di_ab: f64,
    pub edot_b: f64,
    pub edot_int: f64,
    pub pdot_a: f64,
}

/// Fourth-order derivative of `f` at sample `k` of a uniform grid.
pub fn fd_derivative(f: &[f64], k: usize, h: f64) -> Result<f64> {
    let n = f.len();
    if n < 5 {
        return Err(Error::TooFewPoints { need: 5, got: n });
    }
    let d = if k >= 2 && k + 2 < n {
        f[k - 2] - 8.0 * f[k - 1] + 8.0 * f[k + 1] - f[k + 2]
    } else if k == 0 {
        -25.0 * f[0] + 48.0 * f[1] - 36.0 * f[2] + 16.0 * f[3] - 3.0 * f[4]
    } else if k == 1 {
        -3.0 * f[0] - 10.0 * f[1] + 18.0 * f[2] - 6.0 * f[3] + f[4]
    } else if k == n - 2 {
        3.0 * f[n - 1] + 10.0 * f[n - 2] - 18.0 * f[n - 3] + 6.0 * f[n - 4] - f[n - 5]
    } else {
        25.0 * f[n - 1] - 48.0 * f[n - 2] + 36.0 * f[n - 3] - 16.0 * f[n - 4] + 3.0 * f[n - 5]
    };
    Ok(d / (12.0 * h))
}

/// Finite-difference rates along a uniformly sampled series.
pub fn time_derivative_observables(series: &[JointObservables]) -> Result<Vec<ObservableRates>> {
    let n = series.len();
    if n < 5 {
        return Err(Error::TooFewPoints { need: 5, got: n });
    }
    let h = series[1].t - series[0].t;
    let col = |f: fn(&JointObservables) -> f64| series.iter().map(f).collect::<Vec<_>>();
    let s_a = col(|o| o.s_a);
    let s_b = col(|o| o.s_b);
    let i_ab = col(|o| o.i_ab);
    let e_b = col(|o| o.e_b);
    let e_int = col(|o| o.e_int);
    let p1 = col(|o| o.p1);
    (0..n)
        .map(|k| {
            Ok(ObservableRates {
                t: series[k].t,
                sdot_a: fd_derivative(&s_a, k, h)?,
                sdot_b: fd_derivative(&s_b, k, h)?,
                di_ab: fd_derivative(&i_ab, k, h)?,
                edot_b: fd_derivative(&e_b, k, h)?,
                edot_int: fd_derivative(&e_int, k, h)?,
                pdot_a: fd_derivative(&p1, k, h)?,
            })
        })
        .collect()
}

/// Five-point stencil times around `t`: centred, or forward near `t = 0`.
pub fn stencil_times(t: f64, h: f64) -> ([f64; 5], usize) {
    if t >= 2.0 * h {
        ([t - 2.0 * h, t - h, t, t + h, t + 2.0 * h], 2)
    } else {
        ([t, t + h, t + 2.0 * h, t + 3.0 * h, t + 4.0 * h], 0)
    }
}

/// Reduced dynamical map `Λ_t` and its derivative, from the joint evolution.
///
/// Images of `|q⟩⟨p| ⊗ w(H_B, β_B)` are stored for all four `(q, p)`; any
/// initial qubit state maps linearly.
#[derive(Debug, Clone)]
pub struct ExactReducedMap {
    pub t: f64,
    images: [[CMatrix; 2]; 2],
    rates: [[CMatrix; 2]; 2],
}

impl ExactReducedMap {
    pub fn new(params: &ModelParams, cutoff: usize, t: f64) -> Self {
        let w = bath_weights(params, cutoff);
        let prop = Propagator::new(params, cutoff, t);
        let mk = |q: usize, p: usize| {
            let mut e = CMatrix::zeros(2, 2);
            e[(q, p)] = C64::new(1.0, 0.0);
            let s = SparseJoint::evolve(&prop, &e, &w);
            (s.reduced_a(), s.reduced_a_rate(params))
        };
        let (i00, r00) = mk(0, 0);
        let (i01, r01) = mk(0, 1);
        let (i10, r10) = mk(1, 0);
        let (i11, r11) = mk(1, 1);
        Self {
            t,
            images: [[i00, i01], [i10, i11]],
            rates: [[r00, r01], [r10, r11]],
        }
    }

    /// `(ρ_A(t), ρ̇_A(t))` for initial state `rho0`.
    pub fn apply(&self, rho0: &CMatrix) -> (CMatrix, CMatrix) {
        let mut r = CMatrix::zeros(2, 2);
        let mut d = CMatrix::zeros(2, 2);
        for q in 0..2 {
            for p in 0..2 {
                let c = rho0[(q, p)];
                r += &self.images[q][p] * c;
                d += &self.rates[q][p] * c;
            }
        }
        (r, d)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn fig1() -> ModelParams {
        ModelParams::new(1.0, 0.6, 0.03, Some(1.1), 0.3).unwrap()
    }

    #[test]
    fn auto_cutoff_examples() {
        // e^{-0.18 N}(1 - e^{-0.18}) < 1e-14 first holds at N = 170
        assert_eq!(auto_cutoff(&fig1(), 1e-14), 170 + CUTOFF_MARGIN);
        let cold = ModelParams::new(1.0, 0.99, 0.3, None, 3.0).unwrap();
        assert_eq!(auto_cutoff(&cold, 1e-14), 11 + CUTOFF_MARGIN);
        let frozen = ModelParams::new(1.0, 1.0, 0.3, None, 1e4).unwrap();
        assert_eq!(auto_cutoff(&frozen, 1e-14), 2 + CUTOFF_MARGIN);
    }

    #[test]
    fn propagator_identity_at_zero_and_unitary() {
        let p = fig1();
        let u0 = jc_propagator(&p, 12, 0.0);
        assert_eq!(u0, CMatrix::identity(24, 24));
        let u = jc_propagator(&p, 12, 37.3);
        let err = (u.adjoint() * &u - CMatrix::identity(24, 24)).camax();
        assert!(err < 1e-13, "{err}");
    }

    #[test]
    fn propagator_decoupled_keeps_populations() {
        let p = ModelParams::new(1.0, 0.6, 0.0, Some(1.0), 0.3).unwrap();
        let u = jc_propagator(&p, 6, 5.0);
        for i in 0..12 {
            for j in 0..12 {
                if i != j {
                    assert_eq!(u[(i, j)].norm(), 0.0);
                } else {
                    assert_abs_diff_eq!(u[(i, i)].norm(), 1.0, epsilon = 1e-15);
                }
            }
        }
    }

    #[test]
    fn resonant_rabi_flop() {
        let g = 0.25;
        let p = ModelParams::new(1.0, 1.0, g, Some(1.0), 1.0).unwrap();
        let t = std::f64::consts::FRAC_PI_2 / g;
        let u = jc_propagator(&p, 4, t);
        // |1,0⟩ is index 0, |0,1⟩ is index N + 1
        assert_abs_diff_eq!(u[(5, 0)].norm_sqr(), 1.0, epsilon = 1e-14);
        let (_, d) = cd(&p, 1, 0.7);
        assert_abs_diff_eq!(d.norm_sqr(), (g * 0.7).sin().powi(2), epsilon = 1e-14);
    }

    #[test]
    fn propagator_matches_matrix_exponential() {
        // U_I(t) = e^{iH₀t} e^{-iHt} on the truncated space
        let p = ModelParams::new(1.0, 0.7, 0.2, Some(1.0), 1.0).unwrap();
        let nn = 5;
        let ops = JointOperators::new(&p, nn);
        let h = &ops.h_a + &ops.h_b + &ops.v;
        let t = 3.7;
        let (vals, vecs) = crate::qstate::hermitian_eigen(&h);
        let ph = CMatrix::from_fn(2 * nn, 2 * nn, |i, j| {
            if i == j {
                C64::from_polar(1.0, -vals[i] * t)
            } else {
                C64::new(0.0, 0.0)
            }
        });
        let e_h = &vecs * ph * vecs.adjoint();
        let h0 = &ops.h_a + &ops.h_b;
        let e_h0 = CMatrix::from_fn(2 * nn, 2 * nn, |i, j| {
            if i == j {
                C64::from_polar(1.0, h0[(i, i)].re * t)
            } else {
                C64::new(0.0, 0.0)
            }
        });
        let expected = e_h0 * e_h;
        let u = jc_propagator(&p, nn, t);
        assert!((u - expected).camax() < 1e-12);
    }

    #[test]
    fn evolve_joint_initial_and_decoupled() {
        let p = fig1();
        let cfg = NumericsConfig {
            fock_cutoff: FockCutoff::Fixed(60),
            tail_tol: 1e-6,
            ..Default::default()
        };
        let rho = DensityMatrix::qubit(0.3, C64::new(0.2, 0.1)).unwrap();
        let j0 = evolve_joint(&rho, &p, &cfg, 0.0).unwrap();
        let o = joint_observables(&j0).unwrap();
        assert_abs_diff_eq!(o.i_ab, 0.0, epsilon = 1e-12);
        let g0 = ModelParams { g: 0.0, ..p };
        let j = evolve_joint(&rho, &g0, &cfg, 12.0).unwrap();
        assert_abs_diff_eq!(joint_observables(&j).unwrap().i_ab, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn cold_bath_energy() {
        let p = ModelParams::new(1.0, 0.99, 0.3, Some(1.0), 3.0).unwrap();
        let cfg = NumericsConfig::default();
        let rho = DensityMatrix::from_diagonal(&[0.3, 0.7]).unwrap();
        let o = joint_observables(&evolve_joint(&rho, &p, &cfg, 0.0).unwrap()).unwrap();
        let nbar = 1.0 / (2.97f64.exp() - 1.0);
        assert_abs_diff_eq!(nbar, 0.0540777, epsilon = 1e-7);
        assert_abs_diff_eq!(o.e_b, 0.99 * nbar, epsilon = 1e-12);
        assert_abs_diff_eq!(o.e_int, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn leakage_detected() {
        let p = fig1();
        let cfg = NumericsConfig {
            fock_cutoff: FockCutoff::Fixed(4),
            ..Default::default()
        };
        let rho = DensityMatrix::from_diagonal(&[0.3, 0.7]).unwrap();
        assert!(matches!(
            evolve_joint(&rho, &p, &cfg, 1.0),
            Err(Error::CutoffInsufficient { cutoff: 4, .. })
        ));
    }

    #[test]
    fn sparse_snapshot_matches_dense_observables() {
        let p = ModelParams::new(1.0, 0.6, 0.3, Some(1.1), 0.3).unwrap();
        let cfg = NumericsConfig::default();
        let rho = DensityMatrix::qubit(0.4, C64::new(0.1, -0.3)).unwrap();
        let ev = ProductEvolution::new(&rho, &p, &cfg).unwrap();
        let t = 2.3;
        let snap = ev.snapshot(t).unwrap();
        let dense = joint_observables(&ev.joint_state(t).unwrap()).unwrap();
        assert_abs_diff_eq!(snap.obs.s_a, dense.s_a, epsilon = 1e-11);
        assert_abs_diff_eq!(snap.obs.s_b, dense.s_b, epsilon = 1e-10);
        assert_abs_diff_eq!(snap.obs.e_b, dense.e_b, epsilon = 1e-11);
        assert_abs_diff_eq!(snap.obs.e_int, dense.e_int, epsilon = 1e-12);
        assert_abs_diff_eq!(dense.s_ab, snap.obs.s_ab, epsilon = 1e-9);
    }

    #[test]
    fn exact_rates_match_finite_differences() {
        let p = ModelParams::new(1.0, 0.6, 0.3, Some(1.1), 0.3).unwrap();
        let cfg = NumericsConfig::default();
        let rho = DensityMatrix::qubit(0.4, C64::new(0.1, -0.3)).unwrap();
        let ev = ProductEvolution::new(&rho, &p, &cfg).unwrap();
        let (t, h) = (1.7, 1e-3);
        let series: Vec<_> = stencil_times(t, h)
            .0
            .iter()
            .map(|&s| ev.snapshot(s).unwrap())
            .collect();
        let mid = &series[2];
        let fd = |f: &dyn Fn(&ReducedSnapshot) -> f64| {
            let v: Vec<f64> = series.iter().map(f).collect();
            fd_derivative(&v, 2, h).unwrap()
        };
        assert_abs_diff_eq!(fd(&|s| s.obs.e_b), mid.edot_b, epsilon = 1e-9);
        assert_abs_diff_eq!(
            fd(&|s| s.rho_a[(0, 0)].re),
            mid.rhodot_a[(0, 0)].re,
            epsilon = 1e-9
        );
        assert_abs_diff_eq!(
            fd(&|s| s.rho_a[(0, 1)].re),
            mid.rhodot_a[(0, 1)].re,
            epsilon = 1e-9
        );
        assert_abs_diff_eq!(
            fd(&|s| s.rho_a[(0, 1)].im),
            mid.rhodot_a[(0, 1)].im,
            epsilon = 1e-9
        );
    }

    #[test]
    fn fd_examples() {
        let h = 1e-3;
        let ts: Vec<f64> = (0..11).map(|k| 0.5 + (k as f64 - 5.0) * h).collect();
        let f: Vec<f64> = ts.iter().map(|t| t.sin()).collect();
        assert_abs_diff_eq!(
            fd_derivative(&f, 5, h).unwrap(),
            0.5f64.cos(),
            epsilon = 1e-10
        );
        assert_abs_diff_eq!(
            fd_derivative(&f, 0, h).unwrap(),
            ts[0].cos(),
            epsilon = 1e-9
        );
        assert_abs_diff_eq!(
            fd_derivative(&f, 10, h).unwrap(),
            ts[10].cos(),
            epsilon = 1e-9
        );
        assert_abs_diff_eq!(
            fd_derivative(&[2.0; 5], 0, h).unwrap(),
            0.0,
            epsilon = 1e-12
        );
        assert!(matches!(
            fd_derivative(&[1.0; 4], 0, h),
            Err(Error::TooFewPoints { .. })
        ));
    }

    #[test]
    fn reduced_map_matches_snapshot() {
        let p = ModelParams::new(1.0, 0.99, 0.3, None, 3.0).unwrap();
        let cfg = NumericsConfig::default();
        let rho = DensityMatrix::qubit(0.8, C64::new(0.3, 0.2)).unwrap();
        let t = 4.4;
        let map = ExactReducedMap::new(&p, cfg.cutoff(&p), t);
        let (r, d) = map.apply(rho.matrix());
        let snap = ProductEvolution::new(&rho, &p, &cfg)
            .unwrap()
            .snapshot(t)
            .unwrap();
        assert!((r - snap.rho_a).camax() < 1e-14);
        assert!((d - snap.rhodot_a).camax() < 1e-14);
    }
}
