//! Dense complex linear algebra and quantum-state utilities.
//!
//! Qubit matrices use the ordering `(|1⟩, |0⟩)`: index 0 is the excited
//! state, so `σ_z = diag(1, -1)` and `σ₊ = |1⟩⟨0|` has its single entry at
//! `(0, 1)`. Joint qubit⊗mode states are indexed `q * N + n` with `q` the
//! qubit index in that ordering and `n` the Fock number.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;

/// Eigenvalues below this are treated as zero inside logarithms.
pub const EIG_CLAMP: f64 = 1e-15;
/// Eigenvalues below this are a genuine positivity violation.
pub const NEGATIVE_EIG_TOL: f64 = -1e-10;
pub const HERMITIAN_TOL: f64 = 1e-12;
pub const TRACE_TOL: f64 = 1e-12;

/// Hermitian, unit-trace, positive semidefinite matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    m: CMatrix,
}

impl DensityMatrix {
    /// Validating constructor.
    pub fn new(m: CMatrix) -> Result<Self> {
        let rho = Self::new_unchecked(m)?;
        rho.validate()?;
        Ok(rho)
    }

    /// Only checks that the matrix is square and non-empty.
    pub fn new_unchecked(m: CMatrix) -> Result<Self> {
        if m.nrows() != m.ncols() || m.nrows() == 0 {
            return Err(Error::DimensionMismatch(format!(
                "density matrix must be square and non-empty, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        Ok(Self { m })
    }

    pub fn from_diagonal(probs: &[f64]) -> Result<Self> {
        let n = probs.len();
        let m = CMatrix::from_fn(n, n, |i, j| {
            if i == j {
                C64::new(probs[i], 0.0)
            } else {
                C64::new(0.0, 0.0)
            }
        });
        Self::new(m)
    }

    /// Qubit state `[[p1, c], [c*, 1 - p1]]` in the `(|1⟩, |0⟩)` ordering.
    pub fn qubit(p1: f64, coherence: C64) -> Result<Self> {
        let m = CMatrix::from_row_slice(
            2,
            2,
            &[
                C64::new(p1, 0.0),
                coherence,
                coherence.conj(),
                C64::new(1.0 - p1, 0.0),
            ],
        );
        Self::new(m)
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.m
    }

    pub fn into_matrix(self) -> CMatrix {
        self.m
    }

    pub fn trace(&self) -> C64 {
        self.m.trace()
    }

    pub fn hermiticity_error(&self) -> f64 {
        hermiticity_error(&self.m)
    }

    pub fn validate(&self) -> Result<()> {
        let herm = self.hermiticity_error();
        if herm > HERMITIAN_TOL {
            return Err(Error::InvalidState(format!(
                "not Hermitian (max |M - M†| = {herm:e})"
            )));
        }
        let tr = self.trace();
        if (tr - C64::new(1.0, 0.0)).norm() > TRACE_TOL {
            return Err(Error::InvalidState(format!("trace {tr} != 1")));
        }
        let min = hermitian_eigenvalues(&self.m)?
            .into_iter()
            .fold(f64::INFINITY, f64::min);
        if min < NEGATIVE_EIG_TOL {
            return Err(Error::InvalidState(format!("negative eigenvalue {min:e}")));
        }
        Ok(())
    }

    pub fn eigenvalues(&self) -> Result<Vec<f64>> {
        hermitian_eigenvalues(&self.m)
    }

    /// Kronecker product `self ⊗ other`.
    pub fn tensor(&self, other: &DensityMatrix) -> DensityMatrix {
        DensityMatrix {
            m: self.m.kronecker(&other.m),
        }
    }

    /// `Tr[ρ O]`.
    pub fn expectation(&self, op: &CMatrix) -> C64 {
        let n = self.dim();
        let mut acc = C64::new(0.0, 0.0);
        for i in 0..n {
            for j in 0..n {
                acc += self.m[(i, j)] * op[(j, i)];
            }
        }
        acc
    }

    /// Excited-state population `⟨1|ρ|1⟩` of a qubit state.
    pub fn p1(&self) -> f64 {
        self.m[(0, 0)].re
    }

    /// `⟨1|ρ|0⟩` of a qubit state.
    pub fn coherence(&self) -> C64 {
        self.m[(0, 1)]
    }
}

pub fn hermiticity_error(m: &CMatrix) -> f64 {
    let n = m.nrows();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in i..n {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

/// Eigenvalues of a Hermitian matrix, ascending.
///
/// Diagonal and tridiagonal inputs (the reduced bath state of a
/// phase-covariant run is always one of the two) take an `O(n²)` path.
pub fn hermitian_eigenvalues(m: &CMatrix) -> Result<Vec<f64>> {
    let n = m.nrows();
    let mut band = 0usize;
    'scan: for j in 0..n {
        for i in 0..n {
            let off = i.abs_diff(j);
            if off > band && m[(i, j)] != C64::new(0.0, 0.0) {
                band = off;
                if band > 1 {
                    break 'scan;
                }
            }
        }
    }
    let mut vals = match band {
        0 => (0..n).map(|i| m[(i, i)].re).collect(),
        1 => {
            let mut d: Vec<f64> = (0..n).map(|i| m[(i, i)].re).collect();
            let e: Vec<f64> = (0..n - 1).map(|i| m[(i + 1, i)].norm()).collect();
            tridiagonal_eigenvalues(&mut d, &e)?;
            d
        }
        _ => m
            .symmetric_eigenvalues()
            .iter()
            .copied()
            .collect::<Vec<_>>(),
    };
    vals.sort_by(f64::total_cmp);
    Ok(vals)
}

/// Implicit QL iteration on a real symmetric tridiagonal matrix.
///
/// `diag` is overwritten with the eigenvalues; `off[i]` couples `i` and
/// `i + 1`.
pub fn tridiagonal_eigenvalues(diag: &mut [f64], off: &[f64]) -> Result<()> {
    let n = diag.len();
    if n < 2 {
        return Ok(());
    }
    let mut e = vec![0.0; n];
    e[..n - 1].copy_from_slice(&off[..n - 1]);
    let d = diag;
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m < n - 1 {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 100 {
                return Err(Error::NoConvergence);
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (1.0, 1.0, 0.0);
            let mut i = m;
            let mut deflated = false;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    deflated = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
            }
            if deflated {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    Ok(())
}

/// Full Hermitian eigendecomposition; eigenvectors are the columns.
pub fn hermitian_eigen(m: &CMatrix) -> (Vec<f64>, CMatrix) {
    let eig = SymmetricEigen::new(m.clone());
    (eig.eigenvalues.iter().copied().collect(), eig.eigenvectors)
}

/// `-Σ λ ln λ`, with `λ < clamp` contributing zero and `λ < -1e-10` an error.
pub fn entropy_of_eigenvalues(vals: &[f64], clamp: f64) -> Result<f64> {
    let mut s = 0.0;
    for &l in vals {
        if l < NEGATIVE_EIG_TOL {
            return Err(Error::InvalidState(format!("negative eigenvalue {l:e}")));
        }
        if l >= clamp {
            s -= l * l.ln();
        }
    }
    Ok(s)
}

pub fn von_neumann_entropy(rho: &DensityMatrix) -> Result<f64> {
    von_neumann_entropy_with_clamp(rho, EIG_CLAMP)
}

pub fn von_neumann_entropy_with_clamp(rho: &DensityMatrix, clamp: f64) -> Result<f64> {
    let herm = rho.hermiticity_error();
    if herm > HERMITIAN_TOL {
        return Err(Error::InvalidState(format!("not Hermitian ({herm:e})")));
    }
    let tr = rho.trace();
    if (tr - C64::new(1.0, 0.0)).norm() > TRACE_TOL {
        return Err(Error::InvalidState(format!("trace {tr} != 1")));
    }
    entropy_of_eigenvalues(&rho.eigenvalues()?, clamp)
}

/// Sum over the eigenbasis of `rho` of `w_k ln λ_k`, where
/// `w_k = ⟨v_k|X|v_k⟩`. Returns ±∞ when a clamped eigenvalue carries weight.
fn log_contraction(rho: &CMatrix, x: &CMatrix, clamp: f64, weight_tol: f64) -> f64 {
    let (vals, vecs) = hermitian_eigen(rho);
    let mut acc = 0.0;
    let mut divergence = 0.0;
    for (k, &lam) in vals.iter().enumerate() {
        let v = vecs.column(k);
        let w = (v.adjoint() * x * v)[(0, 0)].re;
        if lam < clamp {
            if w.abs() > weight_tol {
                // w * ln(0⁺)
                divergence += -w.signum();
            }
        } else {
            acc += w * lam.ln();
        }
    }
    if divergence > 0.0 {
        f64::INFINITY
    } else if divergence < 0.0 {
        f64::NEG_INFINITY
    } else {
        acc
    }
}

/// `D(σ‖ρ) = Tr[σ(ln σ − ln ρ)]`; `+∞` when `supp σ ⊄ supp ρ`.
pub fn relative_entropy(sigma: &DensityMatrix, rho: &DensityMatrix) -> Result<f64> {
    if sigma.dim() != rho.dim() {
        return Err(Error::DimensionMismatch(format!(
            "relative entropy of {}-dim and {}-dim states",
            sigma.dim(),
            rho.dim()
        )));
    }
    let neg_s = -von_neumann_entropy(sigma)?;
    let cross = log_contraction(rho.matrix(), sigma.matrix(), EIG_CLAMP, 1e-12);
    if cross == f64::NEG_INFINITY {
        return Ok(f64::INFINITY);
    }
    Ok((neg_s - cross).max(0.0))
}

/// `-Tr[ρ̇ (ln ρ − ln ref)]`, or `-Tr[ρ̇ ln ρ]` without a reference.
///
/// A pure `ρ` gives `+∞` when `ρ̇` populates its kernel, `-∞` when `ρ̇`
/// would drive it out of the positive cone, and a finite value when the
/// kernel weight of `ρ̇` vanishes.
pub fn entropy_flux(rho: &CMatrix, rhodot: &CMatrix, reference: Option<&CMatrix>) -> f64 {
    let scale = rhodot
        .iter()
        .fold(0.0f64, |a, z| a.max(z.norm()))
        .max(1e-300);
    let tol = 1e-12 * scale;
    let own = log_contraction(rho, rhodot, EIG_CLAMP, tol);
    let refl = match reference {
        Some(r) => log_contraction(r, rhodot, EIG_CLAMP, tol),
        None => 0.0,
    };
    -(own - refl)
}

fn check_bipartite(rho_ab: &DensityMatrix, bath_dim: usize) -> Result<usize> {
    let d = rho_ab.dim();
    if bath_dim == 0 || !d.is_multiple_of(bath_dim) {
        return Err(Error::DimensionMismatch(format!(
            "joint dimension {d} is not a multiple of bath dimension {bath_dim}"
        )));
    }
    Ok(d / bath_dim)
}

/// Trace out the bath: `(q, n) × (q', n) → (q, q')`.
pub fn partial_trace_bath(rho_ab: &DensityMatrix, bath_dim: usize) -> Result<DensityMatrix> {
    let sys = check_bipartite(rho_ab, bath_dim)?;
    let m = rho_ab.matrix();
    let out = CMatrix::from_fn(sys, sys, |q, p| {
        (0..bath_dim)
            .map(|n| m[(q * bath_dim + n, p * bath_dim + n)])
            .sum()
    });
    DensityMatrix::new_unchecked(out)
}

/// Trace out the system: `(q, n) × (q, m) → (n, m)`.
pub fn partial_trace_system(rho_ab: &DensityMatrix, bath_dim: usize) -> Result<DensityMatrix> {
    let sys = check_bipartite(rho_ab, bath_dim)?;
    let m = rho_ab.matrix();
    let out = CMatrix::from_fn(bath_dim, bath_dim, |n, k| {
        (0..sys)
            .map(|q| m[(q * bath_dim + n, q * bath_dim + k)])
            .sum()
    });
    DensityMatrix::new_unchecked(out)
}

/// `½ ‖a − b‖₁`.
pub fn trace_distance(a: &DensityMatrix, b: &DensityMatrix) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch("trace distance".into()));
    }
    let diff = a.matrix() - b.matrix();
    Ok(0.5
        * hermitian_eigenvalues(&diff)?
            .iter()
            .map(|l| l.abs())
            .sum::<f64>())
}

/// Gibbs populations `e^{-βE}/Z`, evaluated relative to the lowest energy.
pub fn thermal_populations(energies: &[f64], beta: f64) -> Result<Vec<f64>> {
    if !(beta > 0.0) || !beta.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "inverse temperature must be positive and finite, got {beta}"
        )));
    }
    if energies.is_empty() || energies.iter().any(|e| !e.is_finite()) {
        return Err(Error::InvalidParameter("energies must be finite".into()));
    }
    let e0 = energies.iter().copied().fold(f64::INFINITY, f64::min);
    let w: Vec<f64> = energies.iter().map(|e| (-beta * (e - e0)).exp()).collect();
    let z: f64 = w.iter().sum();
    Ok(w.into_iter().map(|x| x / z).collect())
}

pub fn thermal_state(energies: &[f64], beta: f64) -> Result<DensityMatrix> {
    DensityMatrix::from_diagonal(&thermal_populations(energies, beta)?)
}

/// Bloch coordinates `(Tr ρσ_x, Tr ρσ_y, Tr ρσ_z)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlochVector {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl BlochVector {
    pub fn new(x: f64, y: f64, z: f64) -> Result<Self> {
        let b = Self { x, y, z };
        if !(b.r() <= 1.0 + 1e-12) {
            return Err(Error::InvalidState(format!(
                "Bloch radius {} exceeds 1",
                b.r()
            )));
        }
        Ok(b)
    }

    /// Transverse radius `√(x² + y²)`.
    pub fn ell(&self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn r(&self) -> f64 {
        (self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }
}

pub fn bloch_from_density(rho: &DensityMatrix) -> Result<BlochVector> {
    if rho.dim() != 2 {
        return Err(Error::DimensionMismatch(format!(
            "Bloch vector needs a qubit state, got dim {}",
            rho.dim()
        )));
    }
    let m = rho.matrix();
    let c = m[(0, 1)];
    BlochVector::new(2.0 * c.re, -2.0 * c.im, (m[(0, 0)] - m[(1, 1)]).re)
}

pub fn density_from_bloch(b: &BlochVector) -> Result<DensityMatrix> {
    let b = BlochVector::new(b.x, b.y, b.z)?;
    let m = CMatrix::from_row_slice(
        2,
        2,
        &[
            C64::new(0.5 * (1.0 + b.z), 0.0),
            C64::new(0.5 * b.x, -0.5 * b.y),
            C64::new(0.5 * b.x, 0.5 * b.y),
            C64::new(0.5 * (1.0 - b.z), 0.0),
        ],
    );
    DensityMatrix::new_unchecked(m)
}

/// `arctanh`, the Bloch-radius entropy kernel `½ ln((1+x)/(1−x))`.
pub fn atanh_l(x: f64) -> f64 {
    x.atanh()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn entropy_examples() {
        let mixed = DensityMatrix::from_diagonal(&[0.5, 0.5]).unwrap();
        assert_abs_diff_eq!(
            von_neumann_entropy(&mixed).unwrap(),
            2f64.ln(),
            epsilon = 1e-15
        );
        let pure = DensityMatrix::from_diagonal(&[1.0, 0.0]).unwrap();
        assert_eq!(von_neumann_entropy(&pure).unwrap(), 0.0);
        let r = DensityMatrix::from_diagonal(&[0.25, 0.75]).unwrap();
        assert_abs_diff_eq!(
            von_neumann_entropy(&r).unwrap(),
            0.562335144618808,
            epsilon = 1e-12
        );
    }

    #[test]
    fn entropy_rejects_bad_input() {
        let m =
            CMatrix::from_row_slice(2, 2, &[c(0.5, 0.0), c(0.1, 0.0), c(0.2, 0.0), c(0.5, 0.0)]);
        let rho = DensityMatrix::new_unchecked(m).unwrap();
        assert!(matches!(
            von_neumann_entropy(&rho),
            Err(Error::InvalidState(_))
        ));
        let rho = DensityMatrix::new_unchecked(CMatrix::identity(2, 2)).unwrap();
        assert!(von_neumann_entropy(&rho).is_err());
        assert!(DensityMatrix::from_diagonal(&[1.2, -0.2]).is_err());
    }

    #[test]
    fn relative_entropy_examples() {
        let pure = DensityMatrix::from_diagonal(&[1.0, 0.0]).unwrap();
        let mixed = DensityMatrix::from_diagonal(&[0.5, 0.5]).unwrap();
        assert_abs_diff_eq!(
            relative_entropy(&mixed, &mixed).unwrap(),
            0.0,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            relative_entropy(&pure, &mixed).unwrap(),
            2f64.ln(),
            epsilon = 1e-14
        );
        assert_eq!(relative_entropy(&mixed, &pure).unwrap(), f64::INFINITY);
        let three = DensityMatrix::from_diagonal(&[0.2, 0.3, 0.5]).unwrap();
        assert!(matches!(
            relative_entropy(&mixed, &three),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn partial_traces_of_products() {
        let a = DensityMatrix::qubit(0.3, c(0.1, -0.2)).unwrap();
        let b = thermal_state(&[0.0, 0.6, 1.2, 1.8], 0.3).unwrap();
        let ab = a.tensor(&b);
        let ra = partial_trace_bath(&ab, 4).unwrap();
        let rb = partial_trace_system(&ab, 4).unwrap();
        assert!((ra.matrix() - a.matrix()).camax() < 1e-15);
        assert!((rb.matrix() - b.matrix()).camax() < 1e-15);
        assert!(partial_trace_bath(&ab, 3).is_err());
    }

    #[test]
    fn partial_trace_of_bell_state() {
        // (|1,0⟩ + |0,1⟩)/√2 with a two-level bath.
        let mut m = CMatrix::zeros(4, 4);
        for &i in &[0usize, 3] {
            for &j in &[0usize, 3] {
                m[(i, j)] = c(0.5, 0.0);
            }
        }
        let rho = DensityMatrix::new(m).unwrap();
        let ra = partial_trace_bath(&rho, 2).unwrap();
        assert!((ra.matrix() - CMatrix::identity(2, 2) * c(0.5, 0.0)).camax() < 1e-15);
    }

    #[test]
    fn bloch_examples() {
        let up = DensityMatrix::from_diagonal(&[1.0, 0.0]).unwrap();
        let b = bloch_from_density(&up).unwrap();
        assert_eq!((b.x, b.y, b.z), (0.0, 0.0, 1.0));
        let mixed = DensityMatrix::from_diagonal(&[0.5, 0.5]).unwrap();
        assert_eq!(bloch_from_density(&mixed).unwrap().r(), 0.0);
        let b = BlochVector::new(0.3, 0.4, 0.5).unwrap();
        assert_abs_diff_eq!(b.r(), 0.5f64.sqrt(), epsilon = 1e-15);
        assert!(BlochVector::new(0.8, 0.8, 0.0).is_err());
    }

    #[test]
    fn bloch_matches_pauli_expectations() {
        let b = BlochVector::new(0.3, -0.4, 0.5).unwrap();
        let rho = density_from_bloch(&b).unwrap();
        let sx =
            CMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)]);
        let sy =
            CMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(0.0, -1.0), c(0.0, 1.0), c(0.0, 0.0)]);
        let sz =
            CMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(-1.0, 0.0)]);
        assert_abs_diff_eq!(rho.expectation(&sx).re, 0.3, epsilon = 1e-15);
        assert_abs_diff_eq!(rho.expectation(&sy).re, -0.4, epsilon = 1e-15);
        assert_abs_diff_eq!(rho.expectation(&sz).re, 0.5, epsilon = 1e-15);
    }

    #[test]
    fn thermal_examples() {
        let p = thermal_populations(&[1.0, 0.0], 1.1).unwrap();
        assert_abs_diff_eq!(p[0], 1.0 / (1.0 + 1.1f64.exp()), epsilon = 1e-15);
        assert_abs_diff_eq!(p[0], 0.249739894404882, epsilon = 1e-12);
        let cold = thermal_populations(&[1.0, 0.0], 1e3).unwrap();
        assert!(cold[0] < 1e-10 && (cold[1] - 1.0).abs() < 1e-10);
        assert!(thermal_populations(&[0.0, 1.0], 0.0).is_err());
        assert!(thermal_populations(&[0.0, f64::NAN], 1.0).is_err());
        // huge energies must not overflow
        let p = thermal_populations(&[1e6, 1e6 + 1.0], 1e3).unwrap();
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn truncated_oscillator_occupation_converges() {
        let x: f64 = 0.18;
        let exact = 1.0 / (x.exp() - 1.0);
        assert_abs_diff_eq!(exact, 5.070547, epsilon = 1e-6);
        let mut prev_err = f64::INFINITY;
        for &n in &[20usize, 60, 120, 240] {
            let e: Vec<f64> = (0..n).map(|k| k as f64).collect();
            let p = thermal_populations(&e, x).unwrap();
            let nbar: f64 = p.iter().enumerate().map(|(k, pk)| k as f64 * pk).sum();
            let err = (nbar - exact).abs();
            assert!(err < prev_err);
            prev_err = err;
        }
        assert!(prev_err < 1e-10);
    }

    #[test]
    fn tridiagonal_solver_matches_dense() {
        let n = 9;
        let mut m = CMatrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = c(0.1 * i as f64 + 0.05 * (i as f64).sin(), 0.0);
            if i + 1 < n {
                let z = c(0.03 * (i as f64 + 1.0), 0.02 * i as f64);
                m[(i, i + 1)] = z;
                m[(i + 1, i)] = z.conj();
            }
        }
        let fast = hermitian_eigenvalues(&m).unwrap();
        let mut dense: Vec<f64> = m.symmetric_eigenvalues().iter().copied().collect();
        dense.sort_by(f64::total_cmp);
        for (a, b) in fast.iter().zip(&dense) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-13);
        }
    }

    #[test]
    fn entropy_flux_pure_state_sentinels() {
        let rho = DensityMatrix::from_diagonal(&[1.0, 0.0]).unwrap();
        // populating the kernel: +∞
        let leak =
            CMatrix::from_row_slice(2, 2, &[c(-0.1, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.1, 0.0)]);
        assert_eq!(entropy_flux(rho.matrix(), &leak, None), f64::INFINITY);
        // pure rotation keeps the kernel weight at zero
        let rot =
            CMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(0.0, 0.1), c(0.0, -0.1), c(0.0, 0.0)]);
        assert_eq!(entropy_flux(rho.matrix(), &rot, None), 0.0);
    }

    #[test]
    fn trace_distance_of_poles() {
        let a = DensityMatrix::from_diagonal(&[1.0, 0.0]).unwrap();
        let b = DensityMatrix::from_diagonal(&[0.0, 1.0]).unwrap();
        assert_abs_diff_eq!(trace_distance(&a, &b).unwrap(), 1.0, epsilon = 1e-15);
    }
}
