//! Exact complex 2x2 / 4x4 operator algebra: states, Pauli operators,
//! rank-one POVM construction, validation and extremality testing.

use nalgebra::{DMatrix, Matrix2, Matrix4, Vector2};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type C64 = Complex64;
pub type Mat2 = Matrix2<C64>;
pub type Mat4 = Matrix4<C64>;
pub type Ket2 = Vector2<C64>;

/// Tolerance on the second eigenvalue when checking rank-one structure.
pub const RANK_ONE_TOL: f64 = 1e-12;
/// Entrywise tolerance on the completeness relation of a POVM.
pub const COMPLETENESS_TOL: f64 = 1e-10;
/// Singular-value threshold for linear independence of POVM elements.
pub const EXTREMALITY_SVD_TOL: f64 = 1e-9;
/// Tolerance on hermiticity, unit trace and projector checks.
pub const ALGEBRA_TOL: f64 = 1e-12;
/// Eigenvalues are allowed to dip this far below zero before a state or
/// operator is rejected as not positive semidefinite.
pub const PSD_EIG_TOL: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum QubitError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn identity2() -> Mat2 {
    Mat2::identity()
}

pub fn sigma_1() -> Mat2 {
    Mat2::new(c(0.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0))
}

pub fn sigma_2() -> Mat2 {
    Mat2::new(c(0.0, 0.0), c(0.0, -1.0), c(0.0, 1.0), c(0.0, 0.0))
}

pub fn sigma_3() -> Mat2 {
    Mat2::new(c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(-1.0, 0.0))
}

/// The three Pauli matrices indexed 1..=3.
pub fn pauli(j: usize) -> Mat2 {
    match j {
        1 => sigma_1(),
        2 => sigma_2(),
        3 => sigma_3(),
        _ => panic!("pauli index must be 1, 2 or 3"),
    }
}

/// Observable n . sigma for a real 3-vector n.
pub fn bloch_observable(n: [f64; 3]) -> Mat2 {
    sigma_1() * c(n[0], 0.0) + sigma_2() * c(n[1], 0.0) + sigma_3() * c(n[2], 0.0)
}

pub fn kron22(a: &Mat2, b: &Mat2) -> Mat4 {
    let mut out = Mat4::zeros();
    for i in 0..2 {
        for j in 0..2 {
            for k in 0..2 {
                for l in 0..2 {
                    out[(2 * i + k, 2 * j + l)] = a[(i, j)] * b[(k, l)];
                }
            }
        }
    }
    out
}

/// Largest entry modulus of a complex matrix.
pub fn max_modulus<R: nalgebra::Dim, C: nalgebra::Dim, S>(
    m: &nalgebra::Matrix<C64, R, C, S>,
) -> f64
where
    S: nalgebra::storage::Storage<C64, R, C>,
{
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn is_hermitian2(m: &Mat2, tol: f64) -> bool {
    max_modulus(&(m - m.adjoint())) <= tol
}

pub fn is_hermitian4(m: &Mat4, tol: f64) -> bool {
    max_modulus(&(m - m.adjoint())) <= tol
}

/// Eigenvalues of a hermitian 2x2 matrix, ascending (closed form).
pub fn hermitian_eigenvalues2(m: &Mat2) -> [f64; 2] {
    let a = m[(0, 0)].re;
    let d = m[(1, 1)].re;
    let b = m[(0, 1)];
    let tr = a + d;
    let disc = ((a - d) * (a - d) + 4.0 * b.norm_sqr()).sqrt();
    [(tr - disc) / 2.0, (tr + disc) / 2.0]
}

/// Eigenvalues of a hermitian 4x4 matrix, ascending.
pub fn hermitian_eigenvalues4(m: &Mat4) -> Vec<f64> {
    let sym = m.symmetric_eigen();
    let mut ev: Vec<f64> = sym.eigenvalues.iter().copied().collect();
    ev.sort_by(|x, y| x.partial_cmp(y).unwrap());
    ev
}

pub fn is_psd2(m: &Mat2, tol: f64) -> bool {
    is_hermitian2(m, ALGEBRA_TOL.max(tol)) && hermitian_eigenvalues2(m)[0] >= -tol
}

/// P is a projector when P^2 = P and P = P^dagger.
pub fn is_projector2(m: &Mat2, tol: f64) -> bool {
    is_hermitian2(m, tol) && max_modulus(&(m * m - m)) <= tol
}

pub fn trace2(m: &Mat2) -> C64 {
    m[(0, 0)] + m[(1, 1)]
}

pub fn trace4(m: &Mat4) -> C64 {
    (0..4).map(|i| m[(i, i)]).sum()
}

/// Expectation value Tr[op rho] of a hermitian two-qubit operator.
pub fn expect4(op: &Mat4, rho: &Mat4) -> f64 {
    trace4(&(op * rho)).re
}

/// Two-qubit density matrix with validity checks.
#[derive(Debug, Clone)]
pub struct TwoQubitState {
    rho: Mat4,
    pure: bool,
}

impl TwoQubitState {
    /// Wraps a density matrix after checking hermiticity, unit trace and
    /// positivity.
    pub fn new(rho: Mat4, pure: bool) -> Result<Self, QubitError> {
        if !is_hermitian4(&rho, 1e-11) {
            return Err(QubitError::InvalidInput("state is not hermitian".into()));
        }
        if (trace4(&rho).re - 1.0).abs() > ALGEBRA_TOL || trace4(&rho).im.abs() > ALGEBRA_TOL {
            return Err(QubitError::InvalidInput("state trace is not 1".into()));
        }
        if hermitian_eigenvalues4(&rho)[0] < -PSD_EIG_TOL {
            return Err(QubitError::InvalidInput(
                "state has a negative eigenvalue".into(),
            ));
        }
        Ok(Self { rho, pure })
    }

    pub fn from_ket(psi: &Matrix4<C64>) -> Result<Self, QubitError> {
        // column 0 holds the ket
        let v = psi.column(0);
        let mut rho = Mat4::zeros();
        for i in 0..4 {
            for j in 0..4 {
                rho[(i, j)] = v[i] * v[j].conj();
            }
        }
        Self::new(rho, true)
    }

    pub fn density(&self) -> &Mat4 {
        &self.rho
    }

    pub fn is_pure(&self) -> bool {
        self.pure
    }

    /// Reduced state on Bob's side (partial trace over Alice).
    pub fn bob_marginal(&self) -> Mat2 {
        let mut out = Mat2::zeros();
        for k in 0..2 {
            for l in 0..2 {
                out[(k, l)] = self.rho[(k, l)] + self.rho[(2 + k, 2 + l)];
            }
        }
        out
    }
}

/// Pure Schmidt state cos(theta/2)|00> + sin(theta/2)|11> as a density matrix.
///
/// The boundary angles 0 and pi are excluded: there the state is a product
/// state and the boundary construction is undefined.
pub fn phi_theta(theta: f64) -> Result<TwoQubitState, QubitError> {
    if !(theta > 0.0 && theta < std::f64::consts::PI) {
        return Err(QubitError::Domain(format!(
            "theta = {theta} must lie strictly inside (0, pi)"
        )));
    }
    let a = (theta / 2.0).cos();
    let b = (theta / 2.0).sin();
    let mut rho = Mat4::zeros();
    rho[(0, 0)] = c(a * a, 0.0);
    rho[(0, 3)] = c(a * b, 0.0);
    rho[(3, 0)] = c(a * b, 0.0);
    rho[(3, 3)] = c(b * b, 0.0);
    TwoQubitState::new(rho, true)
}

/// Ket of |phi_theta> in the computational basis (|00>, |01>, |10>, |11>).
pub fn phi_theta_ket(theta: f64) -> Result<[C64; 4], QubitError> {
    if !(theta > 0.0 && theta < std::f64::consts::PI) {
        return Err(QubitError::Domain(format!(
            "theta = {theta} must lie strictly inside (0, pi)"
        )));
    }
    Ok([
        c((theta / 2.0).cos(), 0.0),
        c(0.0, 0.0),
        c(0.0, 0.0),
        c((theta / 2.0).sin(), 0.0),
    ])
}

/// One weighted rank-one POVM element k |beta><beta| in Bloch form.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct RankOnePOVMElement {
    /// Weight k in (0, 2].
    #[serde(rename = "k")]
    pub weight: f64,
    /// Bloch polar angle of |beta| in [0, pi].
    #[serde(rename = "theta_b")]
    pub polar: f64,
    /// Bloch azimuthal angle in [0, 2 pi).
    #[serde(rename = "phi_b")]
    pub azimuth: f64,
}

impl RankOnePOVMElement {
    pub fn new(weight: f64, polar: f64, azimuth: f64) -> Self {
        Self {
            weight,
            polar,
            azimuth,
        }
    }

    /// |beta> = cos(theta_b/2)|0> + e^{i phi_b} sin(theta_b/2)|1>.
    pub fn ket(&self) -> Ket2 {
        let half = self.polar / 2.0;
        Ket2::new(
            c(half.cos(), 0.0),
            C64::from_polar(half.sin(), self.azimuth),
        )
    }

    /// Bloch direction of |beta>.
    pub fn bloch_vector(&self) -> [f64; 3] {
        [
            self.polar.sin() * self.azimuth.cos(),
            self.polar.sin() * self.azimuth.sin(),
            self.polar.cos(),
        ]
    }

    /// Reconstructed operator F = k |beta><beta|.
    pub fn matrix(&self) -> Mat2 {
        let v = self.ket();
        let mut out = Mat2::zeros();
        for i in 0..2 {
            for j in 0..2 {
                out[(i, j)] = v[i] * v[j].conj() * c(self.weight, 0.0);
            }
        }
        out
    }

    /// Recovers Bloch parameters from a PSD rank-one matrix.
    pub fn from_matrix(f: &Mat2) -> Result<Self, QubitError> {
        if !is_hermitian2(f, 1e-11) {
            return Err(QubitError::InvalidInput("element is not hermitian".into()));
        }
        let k = trace2(f).re;
        if k <= 0.0 {
            return Err(QubitError::InvalidInput(
                "element has non-positive weight".into(),
            ));
        }
        let ev = hermitian_eigenvalues2(f);
        if ev[0].abs() > 1e-10 * k.max(1.0) {
            return Err(QubitError::InvalidInput(format!(
                "element is not rank one (second eigenvalue {})",
                ev[0]
            )));
        }
        let n = [
            trace2(&(f * sigma_1())).re / k,
            trace2(&(f * sigma_2())).re / k,
            trace2(&(f * sigma_3())).re / k,
        ];
        let polar = n[2].clamp(-1.0, 1.0).acos();
        let mut azimuth = n[1].atan2(n[0]);
        if azimuth < 0.0 {
            azimuth += 2.0 * std::f64::consts::PI;
        }
        if n[0].abs() < 1e-15 && n[1].abs() < 1e-15 {
            azimuth = 0.0;
        }
        Ok(Self::new(k, polar, azimuth))
    }
}

/// Ordered list of weighted rank-one elements summing to the identity.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RankOnePOVM {
    pub elements: Vec<RankOnePOVMElement>,
}

/// Outcome of `RankOnePOVM::validate`. Carries residuals rather than failing,
/// so callers can report exactly what broke.
#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    /// Max entrywise |sum_b F_b - I|.
    pub completeness_residual: f64,
    /// Second eigenvalue of each reconstructed element.
    pub rank_one_residuals: Vec<f64>,
    /// Per-element positivity of the weight.
    pub positive_weights: Vec<bool>,
    pub element_count: usize,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.element_count >= 2
            && self.completeness_residual <= COMPLETENESS_TOL
            && self.rank_one_residuals.iter().all(|r| r.abs() <= 1e-10)
            && self.positive_weights.iter().all(|&p| p)
    }
}

/// Result of the linear-independence extremality test.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Extremality {
    pub extremal: bool,
    /// Rank of the d x 4 Pauli-coefficient matrix of the elements.
    pub rank: usize,
}

impl RankOnePOVM {
    pub fn new(elements: Vec<RankOnePOVMElement>) -> Self {
        Self { elements }
    }

    pub fn d(&self) -> usize {
        self.elements.len()
    }

    pub fn matrices(&self) -> Vec<Mat2> {
        self.elements.iter().map(|e| e.matrix()).collect()
    }

    pub fn validate(&self) -> ValidationReport {
        let mut sum = Mat2::zeros();
        let mut rank_one_residuals = Vec::with_capacity(self.d());
        let mut positive_weights = Vec::with_capacity(self.d());
        for e in &self.elements {
            let f = e.matrix();
            sum += f;
            rank_one_residuals.push(hermitian_eigenvalues2(&f)[0]);
            positive_weights.push(e.weight > 0.0);
        }
        let completeness_residual = max_modulus(&(sum - identity2()));
        ValidationReport {
            completeness_residual,
            rank_one_residuals,
            positive_weights,
            element_count: self.d(),
        }
    }

    /// A rank-one POVM is extremal iff its elements are linearly independent
    /// in the 4-dimensional real space of hermitian 2x2 operators.
    pub fn extremality(&self) -> Result<Extremality, QubitError> {
        if !self.validate().is_valid() {
            return Err(QubitError::InvalidInput(
                "extremality test requires a valid POVM".into(),
            ));
        }
        let d = self.d();
        // rows: (tr F, tr F sigma_1, tr F sigma_2, tr F sigma_3) / 2
        let mut coeffs = DMatrix::<f64>::zeros(d, 4);
        for (b, e) in self.elements.iter().enumerate() {
            let f = e.matrix();
            coeffs[(b, 0)] = trace2(&f).re / 2.0;
            coeffs[(b, 1)] = trace2(&(f * sigma_1())).re / 2.0;
            coeffs[(b, 2)] = trace2(&(f * sigma_2())).re / 2.0;
            coeffs[(b, 3)] = trace2(&(f * sigma_3())).re / 2.0;
        }
        let svd = coeffs.svd(false, false);
        let rank = svd
            .singular_values
            .iter()
            .filter(|&&s| s > EXTREMALITY_SVD_TOL)
            .count();
        Ok(Extremality {
            extremal: rank == d,
            rank,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("POVM serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Self, QubitError> {
        serde_json::from_str(text)
            .map_err(|e| QubitError::InvalidInput(format!("POVM JSON parse error: {e}")))
    }
}

/// Samples a random rank-one POVM with `d` outcomes: d Gaussian kets
/// |v_b> are whitened by G^{-1/2} with G = sum |v_b><v_b|, which enforces
/// completeness exactly while keeping every element rank one.
pub fn random_rank_one_povm<R: rand::Rng>(d: usize, rng: &mut R) -> RankOnePOVM {
    loop {
        let kets: Vec<Ket2> = (0..d)
            .map(|_| {
                Ket2::new(
                    c(gaussian(rng), gaussian(rng)),
                    c(gaussian(rng), gaussian(rng)),
                )
            })
            .collect();
        let mut g = Mat2::zeros();
        for v in &kets {
            for i in 0..2 {
                for j in 0..2 {
                    g[(i, j)] += v[i] * v[j].conj();
                }
            }
        }
        let ev = hermitian_eigenvalues2(&g);
        if ev[0] < 1e-6 {
            continue; // nearly singular Gram matrix, resample
        }
        let g_inv_sqrt = hermitian_inv_sqrt2(&g);
        let elements: Vec<RankOnePOVMElement> = kets
            .iter()
            .map(|v| {
                let w = g_inv_sqrt * v;
                let mut f = Mat2::zeros();
                for i in 0..2 {
                    for j in 0..2 {
                        f[(i, j)] = w[i] * w[j].conj();
                    }
                }
                RankOnePOVMElement::from_matrix(&f).expect("whitened element is rank one")
            })
            .collect();
        let povm = RankOnePOVM::new(elements);
        if povm.validate().is_valid() {
            return povm;
        }
    }
}

/// Standard normal sample via Box-Muller.
fn gaussian<R: rand::Rng + ?Sized>(rng: &mut R) -> f64 {
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Inverse square root of a positive definite hermitian 2x2 matrix.
fn hermitian_inv_sqrt2(g: &Mat2) -> Mat2 {
    let sym = g.symmetric_eigen();
    let mut out = Mat2::zeros();
    for k in 0..2 {
        let lam = sym.eigenvalues[k].max(1e-300);
        let v = sym.eigenvectors.column(k);
        let s = c(1.0 / lam.sqrt(), 0.0);
        for i in 0..2 {
            for j in 0..2 {
                out[(i, j)] += v[i] * v[j].conj() * s;
            }
        }
    }
    out
}
