//! Boundary coefficients n_b and the Bell operator built from them.
//!
//! For a state angle theta and any rank-one POVM, each outcome b gets a unit
//! vector n_b such that the operator sum_b (n_b . A) (x) Pi_b has quantum
//! value at most 1, and the exact qubit realization saturates the bound.

use crate::qubit::{
    bloch_observable, expect4, kron22, pauli, phi_theta, Ket2, Mat2, QubitError, RankOnePOVM,
    RankOnePOVMElement, C64,
};
use crate::scenario::CorrelationTable;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TsirelsonError {
    #[error("singular configuration: {0}")]
    SingularConfiguration(String),
    #[error("incomplete correlation data: {0}")]
    IncompleteData(String),
    #[error(transparent)]
    Qubit(#[from] QubitError),
}

/// Which sign Alice's second Pauli carries. The device-independent scenario
/// cannot distinguish the two, so the choice is exposed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Sigma2Branch {
    #[default]
    Plus,
    Minus,
}

/// Unit vectors n_b per POVM outcome, together with the state angle they
/// were derived for.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundaryCoefficients {
    pub theta: f64,
    #[serde(rename = "n")]
    pub vectors: Vec<[f64; 3]>,
}

impl BoundaryCoefficients {
    pub fn d(&self) -> usize {
        self.vectors.len()
    }

    /// | |n_b| - 1 | per outcome.
    pub fn norm_residuals(&self) -> Vec<f64> {
        self.vectors
            .iter()
            .map(|n| ((n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt() - 1.0).abs())
            .collect()
    }

    /// True when every n_2b vanishes, i.e. the boundary functional only
    /// involves Alice's sigma_1 and sigma_3 inputs.
    pub fn is_equatorial(&self, tol: f64) -> bool {
        self.vectors.iter().all(|n| n[1].abs() <= tol)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("coefficient serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Self, TsirelsonError> {
        serde_json::from_str(text).map_err(|e| {
            TsirelsonError::IncompleteData(format!("coefficient JSON parse error: {e}"))
        })
    }
}

/// Derives the boundary coefficients with the default +sigma_2 convention.
pub fn derive_coefficients(
    theta: f64,
    povm: &RankOnePOVM,
) -> Result<BoundaryCoefficients, TsirelsonError> {
    derive_coefficients_with_branch(theta, povm, Sigma2Branch::Plus)
}

pub fn derive_coefficients_with_branch(
    theta: f64,
    povm: &RankOnePOVM,
    branch: Sigma2Branch,
) -> Result<BoundaryCoefficients, TsirelsonError> {
    if !(theta > 0.0 && theta < std::f64::consts::PI) {
        return Err(QubitError::Domain(format!("theta = {theta} outside (0, pi)")).into());
    }
    if !povm.validate().is_valid() {
        return Err(QubitError::InvalidInput("POVM failed validation".into()).into());
    }
    let sign = match branch {
        Sigma2Branch::Plus => 1.0,
        Sigma2Branch::Minus => -1.0,
    };
    let (st, ct) = theta.sin_cos();
    let mut vectors = Vec::with_capacity(povm.d());
    for e in &povm.elements {
        let (sb, cb) = e.polar.sin_cos();
        let denom = 1.0 + ct * cb;
        if denom.abs() < 1e-14 {
            return Err(TsirelsonError::SingularConfiguration(format!(
                "1 + cos(theta) cos(theta_b) = {denom} for element with polar {}",
                e.polar
            )));
        }
        let n1 = st * sb * e.azimuth.cos() / denom;
        let n2 = -sign * st * sb * e.azimuth.sin() / denom;
        let n3 = (ct + cb) / denom;
        vectors.push([n1, n2, n3]);
    }
    Ok(BoundaryCoefficients { theta, vectors })
}

/// Evaluates <S> = sum_b sum_j n_jb <A_j (x) Pi_b> on an observed table.
///
/// Tables carry only the x in {1, 3} inputs, so every n_2b must vanish;
/// otherwise the value is not observable and the call errors.
pub fn bell_value(
    coeffs: &BoundaryCoefficients,
    corr: &CorrelationTable,
) -> Result<f64, TsirelsonError> {
    if corr.povm_outcomes() != coeffs.d() {
        return Err(TsirelsonError::IncompleteData(format!(
            "coefficient count {} does not match table outcome count {}",
            coeffs.d(),
            corr.povm_outcomes()
        )));
    }
    if !coeffs.is_equatorial(1e-12) {
        return Err(TsirelsonError::IncompleteData(
            "n_2b != 0 requires a sigma_2 input that the table does not contain".into(),
        ));
    }
    let mut total = 0.0;
    for (b, n) in coeffs.vectors.iter().enumerate() {
        for (slot, x) in [(0usize, 1u8), (1, 3)] {
            let coeff = n[if slot == 0 { 0 } else { 2 }];
            if coeff != 0.0 {
                total += coeff
                    * corr
                        .alice_povm_correlator(x, b)
                        .map_err(|e| TsirelsonError::IncompleteData(e.to_string()))?;
            }
        }
    }
    Ok(total)
}

/// Projector (I - n . sigma)/2 onto the Bloch direction -n.
pub fn lambda_projector(n: [f64; 3]) -> Mat2 {
    (Mat2::identity() - bloch_observable(n)) * C64::new(0.5, 0.0)
}

/// Unnormalized Alice state left behind when element b fires on |phi_theta>.
pub fn collapsed_alice_ket(theta: f64, element: &RankOnePOVMElement) -> Ket2 {
    let half_b = element.polar / 2.0;
    Ket2::new(
        C64::new(half_b.cos() * (theta / 2.0).cos(), 0.0),
        C64::from_polar(half_b.sin() * (theta / 2.0).sin(), -element.azimuth),
    )
}

/// |<S> - 1| evaluated on the exact qubit realization A_j = sigma_j,
/// Pi_b = F_b, state |phi_theta>. All three Pauli inputs participate.
pub fn ideal_saturation_residual(theta: f64, povm: &RankOnePOVM) -> Result<f64, TsirelsonError> {
    let coeffs = derive_coefficients(theta, povm)?;
    let rho = phi_theta(theta)?;
    let mut s = 0.0;
    for (n, e) in coeffs.vectors.iter().zip(&povm.elements) {
        let f = e.matrix();
        for j in 1..=3 {
            if n[j - 1] != 0.0 {
                s += n[j - 1] * expect4(&kron22(&pauli(j), &f), rho.density());
            }
        }
    }
    Ok((s - 1.0).abs())
}

/// Rows (1, n_1b, n_2b, n_3b) of the map from projectors to (I, M_j), with
/// its rank. The POVM outcomes are recoverable from {I, M_j} iff rank = d.
#[derive(Debug, Clone, Serialize)]
pub struct MOperatorMatrix {
    pub rows: Vec<[f64; 4]>,
    pub rank: usize,
    pub invertible: bool,
}

pub fn m_operator_matrix(coeffs: &BoundaryCoefficients) -> MOperatorMatrix {
    let d = coeffs.d();
    let rows: Vec<[f64; 4]> = coeffs
        .vectors
        .iter()
        .map(|n| [1.0, n[0], n[1], n[2]])
        .collect();
    let mut m = DMatrix::<f64>::zeros(d, 4);
    for (i, row) in rows.iter().enumerate() {
        for j in 0..4 {
            m[(i, j)] = row[j];
        }
    }
    let svd = m.svd(false, false);
    let rank = svd.singular_values.iter().filter(|&&s| s > 1e-9).count();
    MOperatorMatrix {
        rows,
        rank,
        invertible: rank == d,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qubit::random_rank_one_povm;
    use crate::scenario::{
        protocol_correlations, square_povm, triangular_povm, NoiseModel,
    };
    use rand::{Rng, SeedableRng};
    use std::f64::consts::PI;

    #[test]
    fn triangular_coefficients_at_pi_half() {
        let coeffs = derive_coefficients(PI / 2.0, &triangular_povm()).unwrap();
        let n0 = coeffs.vectors[0];
        assert!((n0[0]).abs() < 1e-15 && (n0[1]).abs() < 1e-15);
        assert!((n0[2] - 1.0).abs() < 1e-15);
        let n1 = coeffs.vectors[1];
        assert!((n1[0] - 3f64.sqrt() / 2.0).abs() < 1e-15);
        assert!(n1[1].abs() < 1e-15);
        assert!((n1[2] + 0.5).abs() < 1e-15);
    }

    #[test]
    fn equatorial_element_maps_to_minus_sigma2() {
        let povm = RankOnePOVM::new(vec![
            RankOnePOVMElement::new(1.0, PI / 2.0, PI / 2.0),
            RankOnePOVMElement::new(1.0, PI / 2.0, 3.0 * PI / 2.0),
        ]);
        let coeffs = derive_coefficients(PI / 2.0, &povm).unwrap();
        let n = coeffs.vectors[0];
        assert!(n[0].abs() < 1e-15);
        assert!((n[1] + 1.0).abs() < 1e-15);
        assert!(n[2].abs() < 1e-15);
        // flipping the branch flips n_2
        let flipped =
            derive_coefficients_with_branch(PI / 2.0, &povm, Sigma2Branch::Minus).unwrap();
        assert!((flipped.vectors[0][1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn coefficients_are_unit_vectors() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for d in [2usize, 3, 4, 5] {
            for _ in 0..20 {
                let povm = random_rank_one_povm(d, &mut rng);
                let theta = rng.gen_range(0.1..PI - 0.1);
                let coeffs = derive_coefficients(theta, &povm).unwrap();
                for r in coeffs.norm_residuals() {
                    assert!(r < 1e-12, "norm residual {r}");
                }
            }
        }
    }

    #[test]
    fn ideal_realization_saturates() {
        assert!(ideal_saturation_residual(PI / 2.0, &triangular_povm()).unwrap() < 1e-12);
        assert!(ideal_saturation_residual(PI / 3.0, &square_povm()).unwrap() < 1e-12);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        let povm = random_rank_one_povm(4, &mut rng);
        assert!(ideal_saturation_residual(PI / 4.0, &povm).unwrap() < 1e-12);
    }

    #[test]
    fn degenerate_polar_angles_stay_finite() {
        // theta_b in {0, pi} keeps the formulas finite for theta in (0, pi)
        let povm = RankOnePOVM::new(vec![
            RankOnePOVMElement::new(1.0, 0.0, 0.0),
            RankOnePOVMElement::new(1.0, PI, 0.0),
        ]);
        for theta in [0.05, PI / 3.0, PI - 0.05] {
            let coeffs = derive_coefficients(theta, &povm).unwrap();
            for r in coeffs.norm_residuals() {
                assert!(r < 1e-12);
            }
            assert!(ideal_saturation_residual(theta, &povm).unwrap() < 1e-12);
        }
    }

    #[test]
    fn bell_value_on_ideal_and_noisy_tables() {
        let povm = triangular_povm();
        let coeffs = derive_coefficients(PI / 2.0, &povm).unwrap();
        let ideal = protocol_correlations(PI / 2.0, PI / 2.0, NoiseModel::ideal(), &povm).unwrap();
        let s = bell_value(&coeffs, &ideal).unwrap();
        assert!((s - 1.0).abs() < 1e-12, "ideal <S> = {s}");

        let noisy = protocol_correlations(
            PI / 2.0,
            PI / 2.0,
            NoiseModel::new(0.05, 0.0).unwrap(),
            &povm,
        )
        .unwrap();
        let s = bell_value(&coeffs, &noisy).unwrap();
        assert!((s - 0.95).abs() < 1e-12, "noisy <S> = {s}");
    }

    #[test]
    fn bell_value_on_uniformly_random_outcomes() {
        // uniform product table: every correlator with Alice vanishes, and the
        // marginal term sum_b n_3b <Pi_b> evaluates to 0 for the triangular
        // POVM at theta = pi/2 (oracle: direct evaluation on the table).
        let povm = triangular_povm();
        let coeffs = derive_coefficients(PI / 2.0, &povm).unwrap();
        let uniform = CorrelationTable::uniform(3);
        let s = bell_value(&coeffs, &uniform).unwrap();
        let mut oracle = 0.0;
        for (b, n) in coeffs.vectors.iter().enumerate() {
            let mut corr = 0.0;
            for a in 0..2 {
                let sign = if a == 0 { 1.0 } else { -1.0 };
                corr += sign * uniform.prob(3, 2, a, b).unwrap();
            }
            oracle += n[2] * corr; // n_1 terms cancel identically on uniforms
        }
        assert!((s - oracle).abs() < 1e-15);
        assert!(s.abs() < 1e-15, "uniform table gives <S> = {s}");
    }

    #[test]
    fn bell_value_requires_equatorial_coefficients() {
        let povm = RankOnePOVM::new(vec![
            RankOnePOVMElement::new(1.0, PI / 2.0, PI / 2.0),
            RankOnePOVMElement::new(1.0, PI / 2.0, 3.0 * PI / 2.0),
        ]);
        let coeffs = derive_coefficients(PI / 2.0, &povm).unwrap();
        let table = CorrelationTable::uniform(2);
        assert!(matches!(
            bell_value(&coeffs, &table),
            Err(TsirelsonError::IncompleteData(_))
        ));
    }

    #[test]
    fn m_operator_matrix_cases() {
        let tri = derive_coefficients(PI / 2.0, &triangular_povm()).unwrap();
        let m = m_operator_matrix(&tri);
        assert_eq!(m.rank, 3);
        assert!(m.invertible);
        let r = 3f64.sqrt() / 2.0;
        assert!((m.rows[1][1] - r).abs() < 1e-15);
        assert!((m.rows[1][3] + 0.5).abs() < 1e-15);
        assert!((m.rows[2][1] + r).abs() < 1e-15);

        let sq = derive_coefficients(PI / 3.0, &square_povm()).unwrap();
        let m = m_operator_matrix(&sq);
        assert_eq!(m.rank, 3);
        assert!(!m.invertible);
        for row in &m.rows {
            assert!(row[2].abs() < 1e-15, "sigma_2 column must vanish");
        }

        let proj = RankOnePOVM::new(vec![
            RankOnePOVMElement::new(1.0, 0.0, 0.0),
            RankOnePOVMElement::new(1.0, PI, 0.0),
        ]);
        let m = m_operator_matrix(&derive_coefficients(1.1, &proj).unwrap());
        assert_eq!(m.rank, 2);
        assert!(m.invertible);
    }

    #[test]
    fn orthogonality_and_factorization_certificates() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for d in [2usize, 3, 4] {
            let povm = random_rank_one_povm(d, &mut rng);
            let theta = rng.gen_range(0.2..PI - 0.2);
            let coeffs = derive_coefficients(theta, &povm).unwrap();
            let psi = crate::qubit::phi_theta_ket(theta).unwrap();
            for (n, e) in coeffs.vectors.iter().zip(&povm.elements) {
                let lambda = lambda_projector(*n);
                let alpha = collapsed_alice_ket(theta, e);
                // Lambda_b annihilates the collapsed Alice state
                let residual = (lambda * alpha).norm();
                assert!(residual < 1e-12, "orthogonality residual {residual}");
                // (Lambda_b (x) F_b)|phi_theta> = 0 at the exact level
                let op = kron22(&lambda, &e.matrix());
                let mut image = [C64::new(0.0, 0.0); 4];
                for i in 0..4 {
                    for j in 0..4 {
                        image[i] += op[(i, j)] * psi[j];
                    }
                }
                let norm: f64 = image.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
                assert!(norm < 1e-12, "factorization residual {norm}");
            }
        }
    }

    #[test]
    fn extremal_marginal_identity() {
        // <M_j> = <A_j> on the ideal realization
        let povm = triangular_povm();
        for theta in [PI / 3.0, PI / 2.0, 2.0 * PI / 3.0] {
            let coeffs = derive_coefficients(theta, &povm).unwrap();
            let rho = phi_theta(theta).unwrap();
            for j in 1..=3usize {
                let mut mj = 0.0;
                for (n, e) in coeffs.vectors.iter().zip(&povm.elements) {
                    mj += n[j - 1]
                        * expect4(&kron22(&Mat2::identity(), &e.matrix()), rho.density());
                }
                let aj = expect4(&kron22(&pauli(j), &Mat2::identity()), rho.density());
                assert!((mj - aj).abs() < 1e-12, "j = {j}: {mj} vs {aj}");
            }
        }
    }

    #[test]
    fn coefficients_json_round_trip() {
        let coeffs = derive_coefficients(1.1, &triangular_povm()).unwrap();
        let text = coeffs.to_json();
        let back = BoundaryCoefficients::from_json(&text).unwrap();
        assert_eq!(coeffs.vectors.len(), back.vectors.len());
        for (a, b) in coeffs.vectors.iter().zip(&back.vectors) {
            for k in 0..3 {
                assert!((a[k] - b[k]).abs() < 1e-15);
            }
        }
    }
}
