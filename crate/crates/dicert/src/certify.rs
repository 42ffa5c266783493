//! Certification front end: guessing probability and min-entropy from the
//! moment relaxation, the quadrature-based conditional von Neumann entropy
//! lower bound, and the closed-form oracles for the example POVMs.

use crate::ncpoly::{canonicalize, NcPolynomial, OpSymbol, Party, Reduced, Word};
use crate::npa::{
    assemble_bff_sdp, assemble_guessing_sdp, interior_assignment, assignment_to_vars,
    AssembledSdp, AssemblyOptions, ConstraintMode, ConstraintSet, Embedding, NpaError,
    ALICE_X1, ALICE_X3, BOB_POVM,
};
use crate::qubit::{
    hermitian_eigenvalues2, kron22, pauli, phi_theta, QubitError, RankOnePOVM, C64,
};
use crate::scenario::{povm_outcome_probabilities, NoiseModel, ScenarioError};
use crate::sdp::{solve, Solution, SolveStatus, SolverConfig, SolverError};
use crate::tsirelson::derive_coefficients;
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CertifyError {
    #[error("not applicable: {0}")]
    NotApplicable(String),
    #[error("solver failed: {0}")]
    SolverFailed(String),
    #[error(transparent)]
    Npa(#[from] NpaError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Qubit(#[from] QubitError),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Tsirelson(#[from] crate::tsirelson::TsirelsonError),
}

/// Nodes and weights of an m-point Gauss-Radau rule on [0, 1] with the
/// right endpoint fixed at t_m = 1, plus the entropy-bound constant.
#[derive(Debug, Clone, Serialize)]
pub struct QuadratureSpec {
    pub m: usize,
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    /// c_m = sum_{i<m} w_i / (t_i ln 2).
    pub c_m: f64,
}

impl QuadratureSpec {
    /// Per-node prefactor w_i / (t_i ln 2).
    pub fn kappa(&self, i: usize) -> f64 {
        self.weights[i] / (self.nodes[i] * std::f64::consts::LN_2)
    }
}

/// Gauss-Radau nodes/weights via the Jacobi-matrix method: the Legendre
/// three-term recurrence with the last diagonal entry shifted so that the
/// mapped endpoint lands exactly on 1.
pub fn gauss_radau(m: usize) -> Result<QuadratureSpec, CertifyError> {
    if m < 2 {
        return Err(CertifyError::NotApplicable(
            "Gauss-Radau needs at least two nodes".into(),
        ));
    }
    // Legendre on [-1, 1]: alpha_k = 0, beta_k = k / sqrt(4k^2 - 1)
    let beta = |k: usize| -> f64 {
        let kf = k as f64;
        kf / (4.0 * kf * kf - 1.0).sqrt()
    };
    // delta = (J_{m-1} - a I)^{-1} (beta_{m-1}^2 e_{m-1}), a = +1
    let a = 1.0;
    let n1 = m - 1;
    let mut jm = DMatrix::<f64>::zeros(n1, n1);
    for k in 1..n1 {
        jm[(k - 1, k)] = beta(k);
        jm[(k, k - 1)] = beta(k);
    }
    for k in 0..n1 {
        jm[(k, k)] -= a;
    }
    let mut rhs = DVector::<f64>::zeros(n1);
    rhs[n1 - 1] = beta(n1) * beta(n1);
    let delta = jm
        .lu()
        .solve(&rhs)
        .ok_or_else(|| CertifyError::SolverFailed("Radau shift system is singular".into()))?;
    let alpha_last = a + delta[n1 - 1];

    let mut j = DMatrix::<f64>::zeros(m, m);
    for k in 1..m {
        j[(k - 1, k)] = beta(k);
        j[(k, k - 1)] = beta(k);
    }
    j[(m - 1, m - 1)] = alpha_last;

    let eig = j.symmetric_eigen();
    let mut pairs: Vec<(f64, f64)> = (0..m)
        .map(|k| {
            let x = eig.eigenvalues[k];
            let w = 2.0 * eig.eigenvectors[(0, k)].powi(2);
            (x, w)
        })
        .collect();
    pairs.sort_by(|u, v| u.0.partial_cmp(&v.0).unwrap());
    // map [-1, 1] -> [0, 1]
    let nodes: Vec<f64> = pairs.iter().map(|(x, _)| (x + 1.0) / 2.0).collect();
    let weights: Vec<f64> = pairs.iter().map(|(_, w)| w / 2.0).collect();
    let c_m: f64 = (0..m - 1)
        .map(|i| weights[i] / (nodes[i] * std::f64::consts::LN_2))
        .sum();
    Ok(QuadratureSpec {
        m,
        nodes,
        weights,
        c_m,
    })
}

/// Extra basis monomials appended to the level-2 hierarchy.
#[derive(Debug, Clone, Default)]
pub enum ExtrasPolicy {
    /// Degree-3/4 products that reproduce the paper's certified values at
    /// level 2 (guessing) and the completeness expansion products (entropy).
    #[default]
    Default,
    /// Bare hierarchy level, no extras.
    None,
    Custom(Vec<Word>),
}

/// Knobs of the certification pipeline.
#[derive(Debug, Clone)]
pub struct CertifyOptions {
    pub level: usize,
    pub extras: ExtrasPolicy,
    pub embedding: Embedding,
    /// Interior blend of the constraint targets: each right-hand side is
    /// moved by this fraction toward a strictly interior tracial model, and
    /// the reported bound is corrected so it remains conservative for the
    /// unblended problem.
    pub epsilon: f64,
    pub solver: SolverConfig,
    /// Eve outcome count; defaults to the POVM outcome count.
    pub d_e: Option<usize>,
    /// Entropy program basis restriction (see
    /// `AssemblyOptions::projective_level_only`).
    pub bff_projective_level_only: bool,
    /// Exact qubit realization behind the constraint set, when one exists
    /// (ideal certifications). Provides machine-precision candidates for
    /// the facial reduction of boundary-pinned instances.
    pub exact_reference: Option<(f64, RankOnePOVM)>,
    pub seed: u64,
}

impl Default for CertifyOptions {
    fn default() -> Self {
        Self {
            level: 2,
            extras: ExtrasPolicy::Default,
            embedding: Embedding::Real,
            epsilon: 0.0,
            solver: SolverConfig::default(),
            d_e: None,
            bff_projective_level_only: false,
            exact_reference: None,
            seed: 7,
        }
    }
}

fn word_of(symbols: &[OpSymbol]) -> Option<Word> {
    match canonicalize(symbols) {
        Reduced::Word(w) => Some(w),
        Reduced::Zero => None,
    }
}

/// Degree-3/4 monomials that tighten the level-2 guessing relaxation to the
/// boundary-saturation values: one-party words of degree <= 2 times one
/// POVM projector times at most one Eve projector.
pub fn default_guessing_extras(d: usize, d_e: usize) -> Vec<Word> {
    let mut out = Vec::new();
    let prefix_words: Vec<Vec<OpSymbol>> = vec![
        vec![OpSymbol::projector(Party::Alice, ALICE_X1, 0)],
        vec![OpSymbol::projector(Party::Alice, ALICE_X3, 0)],
        vec![OpSymbol::projector(Party::Bob, crate::npa::BOB_B0, 0)],
        vec![OpSymbol::projector(Party::Bob, crate::npa::BOB_B1, 0)],
        vec![
            OpSymbol::projector(Party::Alice, ALICE_X1, 0),
            OpSymbol::projector(Party::Alice, ALICE_X3, 0),
        ],
        vec![
            OpSymbol::projector(Party::Alice, ALICE_X3, 0),
            OpSymbol::projector(Party::Alice, ALICE_X1, 0),
        ],
    ];
    for pw in &prefix_words {
        for b in 0..(d - 1) as u8 {
            let mut base = pw.clone();
            base.push(OpSymbol::projector(Party::Bob, BOB_POVM, b));
            if pw.len() >= 2 {
                if let Some(w) = word_of(&base) {
                    out.push(w);
                }
            }
            for e in 0..(d_e - 1) as u8 {
                let mut syms = base.clone();
                syms.push(OpSymbol::projector(Party::Eve, 0, e));
                if let Some(w) = word_of(&syms) {
                    out.push(w);
                }
            }
        }
    }
    out
}

/// One solved subproblem with its conservative bound.
#[derive(Debug, Clone, Serialize)]
pub struct SolveDiagnostics {
    pub label: String,
    pub status: SolveStatus,
    pub primal_value: f64,
    pub dual_value: f64,
    /// Outer bound corrected for the interior blend; for maximization an
    /// upper bound on the true optimum, for minimization a lower bound.
    pub conservative_value: f64,
    pub gap: f64,
    pub iterations: usize,
    pub epsilon: f64,
}

fn solve_once(
    assembled: &AssembledSdp,
    problem: &crate::sdp::SdpProblem,
    eps: f64,
    label: &str,
    opts: &CertifyOptions,
) -> Result<(Solution, SolveDiagnostics), CertifyError> {
    let mut problem = problem.clone();
    let mut m0 = 0.0;
    if eps > 0.0 {
        let interior = interior_assignment(&assembled.moment_matrix, opts.seed);
        let y_int = assignment_to_vars(&assembled.moment_matrix, &assembled.layout, &interior);
        for (expr, rhs) in problem.equalities.iter_mut() {
            *rhs = (1.0 - eps) * *rhs + eps * expr.eval(&y_int);
        }
        m0 = problem.objective.eval(&y_int);
    }
    let sol = solve(&problem, &opts.solver)?;
    if sol.status == SolveStatus::Infeasible {
        return Err(CertifyError::SolverFailed(format!(
            "{label}: constraints are infeasible for the relaxation"
        )));
    }
    let conservative_value = (sol.dual_value - eps * m0) / (1.0 - eps);
    let diag = SolveDiagnostics {
        label: label.to_string(),
        status: sol.status,
        primal_value: sol.primal_value,
        dual_value: sol.dual_value,
        conservative_value,
        gap: sol.gap,
        iterations: sol.iterations,
        epsilon: eps,
    };
    Ok((sol, diag))
}

fn quality_score(sol: &Solution) -> f64 {
    if !sol.primal_value.is_finite() || !sol.dual_value.is_finite() {
        return f64::INFINITY;
    }
    let gap_rel = sol.gap / (1.0 + sol.primal_value.abs() + sol.dual_value.abs());
    gap_rel.max(sol.dual_residual).max(sol.primal_residual)
}

fn solution_quality_ok(sol: &Solution) -> bool {
    sol.status == SolveStatus::Optimal || quality_score(sol) <= 1e-7
}

/// Face candidates built from the structure of the certification problem:
/// the degree-one null space of the exact reference realization (the
/// tilted-CHSH rigidity directions), the boundary squares Lambda_b Pi_b of
/// the saturated Bell operator, and basis words whose squared moment is
/// pinned to zero. Each is only a candidate; certification happens against
/// the pinned equalities.
fn analytic_face_candidates(
    assembled: &AssembledSdp,
    cs: &ConstraintSet,
    y_exact: &[f64],
) -> Vec<DVector<f64>> {
    use crate::ncpoly::SymbolKind;
    let mm = &assembled.moment_matrix;
    if assembled.layout.embedding != Embedding::Real {
        return Vec::new();
    }
    let n = mm.dim();
    let entry_value = |i: usize, j: usize| -> f64 {
        match mm.entry(i, j) {
            crate::npa::Entry::Zero => 0.0,
            crate::npa::Entry::Var { class, .. } => y_exact[class],
        }
    };
    let mut candidates: Vec<DVector<f64>> = Vec::new();

    // family A: degree <= 1 projective words (identity, Alice, Bob)
    let idx1: Vec<usize> = (0..n)
        .filter(|&i| {
            let w = &mm.basis[i];
            w.len() <= 1
                && w.symbols().iter().all(|s| {
                    s.kind == SymbolKind::Projector && s.party != Party::Eve
                })
        })
        .collect();
    let k1 = idx1.len();
    if k1 >= 2 {
        let mut sub = DMatrix::<f64>::zeros(k1, k1);
        for (a, &i) in idx1.iter().enumerate() {
            for (b, &j) in idx1.iter().enumerate() {
                sub[(a, b)] = entry_value(i, j);
            }
        }
        let eig = sub.symmetric_eigen();
        let emax = eig
            .eigenvalues
            .iter()
            .fold(0.0f64, |m, &v| m.max(v.abs()))
            .max(1e-12);
        for l in 0..k1 {
            if eig.eigenvalues[l].abs() <= 1e-10 * emax {
                let mut c = DVector::<f64>::zeros(n);
                for (a, &i) in idx1.iter().enumerate() {
                    c[i] = eig.eigenvectors[(a, l)];
                }
                candidates.push(c);
            }
        }
    }

    // family B: boundary squares Lambda_b Pi_b of the saturated operator
    let scenario = crate::npa::ProtocolScenario::new(cs.d());
    let word_index: std::collections::HashMap<&Word, usize> = mm
        .basis
        .iter()
        .enumerate()
        .map(|(i, w)| (w, i))
        .collect();
    for (b, nvec) in cs.coefficients.vectors.iter().enumerate() {
        let a1 = scenario.observable(Party::Alice, ALICE_X1);
        let a3 = scenario.observable(Party::Alice, ALICE_X3);
        let mut lambda = NcPolynomial::one();
        lambda = lambda.sub(&a1.scale(C64::new(nvec[0], 0.0)));
        lambda = lambda.sub(&a3.scale(C64::new(nvec[2], 0.0)));
        lambda = lambda.scale(C64::new(0.5, 0.0));
        let q = lambda.mul(&scenario.projector(Party::Bob, BOB_POVM, b));
        let mut c = DVector::<f64>::zeros(n);
        let mut representable = true;
        for (w, coef) in q.terms() {
            match word_index.get(w) {
                Some(&i) => c[i] = coef.re,
                None => {
                    representable = false;
                    break;
                }
            }
        }
        if representable && c.amax() > 0.0 {
            candidates.push(c.normalize());
        }
    }

    // family C: projective words whose squared moment vanishes at the
    // reference (pinned-zero probabilities)
    for i in 0..n {
        if candidates.len() >= 18 {
            break;
        }
        let w = &mm.basis[i];
        let projective = w
            .symbols()
            .iter()
            .all(|sym| sym.kind == SymbolKind::Projector && sym.party != Party::Eve);
        if !w.is_identity()
            && w.len() <= 2
            && projective
            && entry_value(i, i).abs() <= 1e-12
        {
            let mut c = DVector::<f64>::zeros(n);
            c[i] = 1.0;
            candidates.push(c);
        }
    }
    candidates
}

/// Directions of the moment block certified null on every feasible point.
///
/// Near-null eigenvectors of the solved block span a candidate subspace; a
/// weight matrix H over that subspace certifies the subspace directions it
/// weights positively when (a) the combined functional y -> Tr(M(y) C H C^T)
/// is an exact affine combination of the pinned equalities forcing it to
/// zero, and (b) H is positive semidefinite: positivity of M then forces
/// M C H C^T = 0. The saturated boundary identities of the certification
/// scenarios (each a sum of squares pinned by one equality) are exactly of
/// this form.
fn certified_null_directions(
    problem: &crate::sdp::SdpProblem,
    candidates: &[DVector<f64>],
    trace: bool,
) -> Vec<DVector<f64>> {
    let block = &problem.blocks[0];
    let n = block.dim;
    let nv = problem.num_vars;
    let m_eq = problem.equalities.len();
    if m_eq > 4000 || candidates.is_empty() {
        return Vec::new();
    }
    let k = candidates.len();
    let _ = n;

    // sparse equality rows and their Gram, via per-variable buckets
    let mut rows: Vec<Vec<(usize, f64)>> = Vec::with_capacity(m_eq);
    let mut b_vec = DVector::<f64>::zeros(m_eq);
    for (row, (expr, rhs)) in problem.equalities.iter().enumerate() {
        let mut e = expr.clone();
        e.compress();
        rows.push(e.terms);
        b_vec[row] = rhs - expr.constant;
    }
    let mut buckets: Vec<Vec<(usize, f64)>> = vec![Vec::new(); nv];
    for (ri, row) in rows.iter().enumerate() {
        for &(v, c) in row {
            buckets[v].push((ri, c));
        }
    }
    let mut gram = DMatrix::<f64>::zeros(m_eq, m_eq);
    for bucket in &buckets {
        for &(r1, c1) in bucket {
            for &(r2, c2) in bucket {
                if r2 <= r1 {
                    gram[(r1, r2)] += c1 * c2;
                }
            }
        }
    }
    for i in 0..m_eq {
        for j in 0..i {
            gram[(j, i)] = gram[(i, j)];
        }
        gram[(i, i)] += 1e-12;
    }
    let Some(gram_chol) = gram.cholesky() else {
        return Vec::new();
    };
    let a_mul = |f: &DVector<f64>| -> DVector<f64> {
        let mut out = DVector::<f64>::zeros(m_eq);
        for (ri, row) in rows.iter().enumerate() {
            out[ri] = row.iter().map(|&(v, c)| c * f[v]).sum();
        }
        out
    };
    let at_mul = |lambda: &DVector<f64>| -> DVector<f64> {
        let mut out = DVector::<f64>::zeros(nv);
        for (ri, row) in rows.iter().enumerate() {
            let l = lambda[ri];
            if l != 0.0 {
                for &(v, c) in row {
                    out[v] += c * l;
                }
            }
        }
        out
    };
    let span_forces_zero = |f: &DVector<f64>| -> bool {
        let lambda = gram_chol.solve(&a_mul(f));
        let resid = (f - at_mul(&lambda)).amax();
        let forced_value: f64 = lambda.dot(&b_vec);
        resid <= 1e-8 * f.amax().max(1.0) && forced_value.abs() <= 1e-8
    };

    // functional of the symmetric pair basis S_ij over the candidates
    let cross_functional = |i: usize, j: usize| -> DVector<f64> {
        let ci = &candidates[i];
        let cj = &candidates[j];
        let scale = if i == j { 1.0 } else { 2.0 };
        let mut f = DVector::<f64>::zeros(nv);
        for (var, entries) in &block.entries {
            let mut acc = 0.0;
            for &(a1, b1, v) in entries {
                if a1 == b1 {
                    acc += v * ci[a1] * cj[b1];
                } else {
                    acc += v * (ci[a1] * cj[b1] + ci[b1] * cj[a1]);
                }
            }
            f[*var] += scale * acc;
        }
        f
    };

    // residual of each pair functional against the pin span, with the
    // forced value stacked as one extra coordinate
    let pairs: Vec<(usize, usize)> = (0..k)
        .flat_map(|i| (i..k).map(move |j| (i, j)))
        .collect();
    let p = pairs.len();
    let mut resid_vecs: Vec<DVector<f64>> = Vec::with_capacity(p);
    let mut forced_vals: Vec<f64> = Vec::with_capacity(p);
    for &(i, j) in &pairs {
        let f = cross_functional(i, j);
        let lambda = gram_chol.solve(&a_mul(&f));
        resid_vecs.push(&f - at_mul(&lambda));
        forced_vals.push(lambda.dot(&b_vec));
    }
    let mut gram_res = DMatrix::<f64>::zeros(p, p);
    for i in 0..p {
        for j in i..p {
            let v = resid_vecs[i].dot(&resid_vecs[j]) + forced_vals[i] * forced_vals[j];
            gram_res[(i, j)] = v;
            gram_res[(j, i)] = v;
        }
    }
    let res_eig = gram_res.symmetric_eigen();
    let res_max = res_eig
        .eigenvalues
        .iter()
        .fold(0.0f64, |m, &v| m.max(v.abs()))
        .max(1e-300);

    // exact null combinations of the residual map become the weight basis
    let mut null_weights: Vec<DMatrix<f64>> = Vec::new();
    for l in 0..p {
        if res_eig.eigenvalues[l].abs() <= 1e-13 * res_max {
            let mut h = DMatrix::<f64>::zeros(k, k);
            for (q, &(i, j)) in pairs.iter().enumerate() {
                let w = res_eig.eigenvectors[(q, l)];
                h[(i, j)] += w;
                if i != j {
                    h[(j, i)] += w;
                }
            }
            null_weights.push(h);
        }
    }
    if null_weights.is_empty() {
        if trace {
            eprintln!("  no exact null weight combinations among {p} pairs");
        }
        return Vec::new();
    }
    let q = null_weights.len();

    // find the most positive definite element of the weight span:
    // max t s.t. sum omega_l N_l >= t I, Tr = k
    let mut objective = crate::sdp::LinearExpr::new();
    objective.push(q, 1.0);
    let mut tr_expr = crate::sdp::LinearExpr::new();
    for (l, nw) in null_weights.iter().enumerate() {
        tr_expr.push(l, nw.trace());
    }
    let mut entries: Vec<(usize, Vec<(usize, usize, f64)>)> = Vec::new();
    for (l, nw) in null_weights.iter().enumerate() {
        let mut ent = Vec::new();
        for i in 0..k {
            for j in i..k {
                if nw[(i, j)].abs() > 1e-14 {
                    ent.push((i, j, nw[(i, j)]));
                }
            }
        }
        entries.push((l, ent));
    }
    entries.push((q, (0..k).map(|i| (i, i, -1.0)).collect()));
    let aux = crate::sdp::SdpProblem {
        num_vars: q + 1,
        sense: crate::sdp::Sense::Maximize,
        objective,
        equalities: vec![(tr_expr, k as f64)],
        blocks: vec![crate::sdp::PsdBlock::full(k, entries)],
    };
    let Ok(aux_sol) = crate::sdp::solve(&aux, &crate::sdp::SolverConfig::default()) else {
        return Vec::new();
    };
    if !aux_sol.primal_value.is_finite() || aux_sol.primal_value < -1e-7 {
        if trace {
            eprintln!(
                "  weight span of dim {q} has no usable positive element (t = {:.2e})",
                aux_sol.primal_value
            );
        }
        return Vec::new();
    }
    let mut h = DMatrix::<f64>::zeros(k, k);
    for (l, nw) in null_weights.iter().enumerate() {
        h += nw * aux_sol.y[l];
    }

    // strict final verification on the exact-span element
    let h_eig = h.clone().symmetric_eigen();
    let h_max = h_eig
        .eigenvalues
        .iter()
        .fold(0.0f64, |m, &v| m.max(v))
        .max(1e-300);
    if h_eig.eigenvalues.iter().any(|&lam| lam < -1e-9 * h_max) {
        if trace {
            eprintln!("  weight matrix not PSD after solve");
        }
        return Vec::new();
    }
    // F(H) = sum over pairs H_ij * f_pair
    let mut f_total = DVector::<f64>::zeros(nv);
    for &(i, j) in &pairs {
        let weight = h[(i, j)];
        if weight.abs() > 1e-14 {
            f_total += cross_functional(i, j) * weight;
        }
    }
    if !span_forces_zero(&f_total) {
        if trace {
            eprintln!("  certified weight failed the strict span gate");
        }
        return Vec::new();
    }
    let mut certified = Vec::new();
    for l in 0..k {
        if h_eig.eigenvalues[l] > 1e-6 * h_max {
            let mut c = DVector::<f64>::zeros(n);
            for i in 0..k {
                c += &candidates[i] * h_eig.eigenvectors[(i, l)];
            }
            certified.push(c.normalize());
        }
    }
    if trace {
        eprintln!(
            "  certified null subspace of rank {} (t = {:.2e})",
            certified.len(),
            aux_sol.primal_value
        );
    }
    certified
}

/// Facially reduced copy of the problem: the PSD requirement moves to the
/// orthogonal complement of the certified null directions (composed with
/// any existing reduction), and the rows of M(y) c = 0 join the
/// equalities. Valid whenever the directions are truly null on every
/// feasible point, which `certified_null_directions` guarantees.
fn project_problem(
    problem: &crate::sdp::SdpProblem,
    dirs: &[DVector<f64>],
) -> crate::sdp::SdpProblem {
    let mut problem = problem.clone();
    let block = &mut problem.blocks[0];
    let n = block.dim;
    let mut removed: Vec<DVector<f64>> = dirs.to_vec();
    if let Some(p) = &block.projector {
        let pp = p * p.transpose();
        for e in 0..n {
            let mut v = DVector::<f64>::zeros(n);
            v[e] = 1.0;
            let res = &v - &pp * &v;
            if res.norm() > 1e-8 {
                removed.push(res);
            }
        }
    }
    let k = removed.len();
    let mut c_mat = DMatrix::<f64>::zeros(n, k);
    for (j, c) in removed.iter().enumerate() {
        c_mat.set_column(j, c);
    }
    let svd = c_mat.svd(true, false);
    let u = svd.u.expect("u requested");
    let rank = svd
        .singular_values
        .iter()
        .filter(|&&s| s > 1e-8)
        .count();
    let mut basis = DMatrix::<f64>::zeros(n, n);
    basis
        .view_mut((0, 0), (n, rank))
        .copy_from(&u.view((0, 0), (n, rank)));
    let mut col = rank;
    for e in 0..n {
        if col >= n {
            break;
        }
        let mut v = DVector::<f64>::zeros(n);
        v[e] = 1.0;
        for _ in 0..2 {
            for j in 0..col {
                let proj = basis.column(j).dot(&v);
                v -= basis.column(j) * proj;
            }
        }
        let norm = v.norm();
        if norm > 1e-8 {
            basis.set_column(col, &(v / norm));
            col += 1;
        }
    }
    let p = basis.view((0, rank), (n, col - rank)).clone_owned();
    block.projector = Some(p);

    // null equalities: row i of M(y) c = 0
    for c in dirs {
        let mut rows: Vec<crate::sdp::LinearExpr> =
            (0..n).map(|_| crate::sdp::LinearExpr::new()).collect();
        for (var, entries) in &problem.blocks[0].entries {
            for &(i, j, v) in entries {
                if c[j] != 0.0 {
                    rows[i].push(*var, v * c[j]);
                }
                if i != j && c[i] != 0.0 {
                    rows[j].push(*var, v * c[i]);
                }
            }
        }
        for mut row in rows {
            row.compress();
            if !row.terms.is_empty() {
                problem.equalities.push((row, 0.0));
            }
        }
    }
    problem
}

/// Solves an assembled relaxation, applying rounds of certified facial
/// reduction when the solve stalls on a boundary-pinned instance.
fn solve_blended(
    assembled: &AssembledSdp,
    label: &str,
    face_candidates: &[DVector<f64>],
    opts: &CertifyOptions,
) -> Result<(Solution, SolveDiagnostics), CertifyError> {
    let trace = std::env::var("DICERT_CERT_TRACE").is_ok();
    let mut best = solve_once(assembled, &assembled.problem, opts.epsilon, label, opts)?;
    if trace {
        eprintln!(
            "{label}: pass 0 status {:?} gap {:.2e} dres {:.2e} primal {:.8} dual {:.8}",
            best.0.status, best.0.gap, best.0.dual_residual, best.0.primal_value, best.0.dual_value
        );
    }
    let mut problem = assembled.problem.clone();
    for round in 1..=3 {
        if solution_quality_ok(&best.0) {
            break;
        }
        // keep candidates that are still alive on the current face
        let alive: Vec<DVector<f64>> = face_candidates
            .iter()
            .filter(|c| match &problem.blocks[0].projector {
                Some(p) => (p.transpose() * *c).norm() > 0.5,
                None => true,
            })
            .cloned()
            .collect();
        let t_cert = std::time::Instant::now();
        let dirs = certified_null_directions(&problem, &alive, trace);
        if trace {
            eprintln!("  certification took {:?} ({} alive candidates)", t_cert.elapsed(), alive.len());
        }
        if dirs.is_empty() {
            break;
        }
        let t_proj = std::time::Instant::now();
        problem = project_problem(&problem, &dirs);
        let label_r = format!("{label} [face round {round}: -{}]", dirs.len());
        let t_solve = std::time::Instant::now();
        let attempt = solve_once(assembled, &problem, opts.epsilon, &label_r, opts)?;
        if trace {
            eprintln!("  project {:?} solve {:?}", t_solve - t_proj, t_solve.elapsed());
        }
        if trace {
            eprintln!(
                "{label_r}: status {:?} gap {:.2e} dres {:.2e} primal {:.8} dual {:.8}",
                attempt.0.status,
                attempt.0.gap,
                attempt.0.dual_residual,
                attempt.0.primal_value,
                attempt.0.dual_value
            );
        }
        let better_quality = quality_score(&attempt.0) < quality_score(&best.0);
        let trustworthy = attempt.0.dual_residual <= 1e-6
            && attempt.0.primal_residual <= 1e-7
            && attempt.0.gap.is_finite();
        let tighter_bound = match assembled.problem.sense {
            crate::sdp::Sense::Maximize => {
                attempt.1.conservative_value < best.1.conservative_value
            }
            crate::sdp::Sense::Minimize => {
                attempt.1.conservative_value > best.1.conservative_value
            }
        };
        if better_quality || (trustworthy && tighter_bound) {
            best = attempt;
        }
    }
    Ok(best)
}

/// Outcome of a certification run.
#[derive(Debug, Clone, Serialize)]
pub struct CertificateResult {
    /// Conservative (outer) bound on the guessing probability.
    pub p_g: f64,
    /// Inner estimate of the guessing probability (variable side).
    pub p_g_estimate: f64,
    /// H_min = -log2 p_g in bits.
    pub h_min: f64,
    /// Lower bound on the conditional von Neumann entropy, when computed.
    pub h_vn: Option<f64>,
    pub mode: ConstraintMode,
    pub level: usize,
    pub quad_m: Option<usize>,
    pub d: usize,
    pub constraint_values: ConstraintValues,
    pub diagnostics: Vec<SolveDiagnostics>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConstraintValues {
    pub s_chsh: Option<f64>,
    pub a3: Option<f64>,
    pub s: Option<f64>,
}

impl CertificateResult {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("certificate serialization cannot fail")
    }
}

fn guessing_assembly_options(cs: &ConstraintSet, opts: &CertifyOptions) -> AssemblyOptions {
    let d_e = opts.d_e.unwrap_or(cs.d());
    let extras = match &opts.extras {
        ExtrasPolicy::Default => default_guessing_extras(cs.d(), d_e),
        ExtrasPolicy::None => Vec::new(),
        ExtrasPolicy::Custom(words) => words.clone(),
    };
    AssemblyOptions {
        level: opts.level,
        embedding: opts.embedding,
        extras,
        projective_level_only: false,
    }
}

/// Certifies the guessing probability and min-entropy from the constraint
/// set. The reported p_g is the conservative dual bound.
pub fn min_entropy(cs: &ConstraintSet, opts: &CertifyOptions) -> Result<CertificateResult, CertifyError> {
    let d = cs.d();
    let d_e = opts.d_e.unwrap_or(d);
    let assembled = assemble_guessing_sdp(cs, d_e, &guessing_assembly_options(cs, opts))?;
    let candidates = match &opts.exact_reference {
        Some((theta, povm)) => {
            let (rep, state) = crate::npa::exact_protocol_model(
                *theta,
                povm,
                &crate::npa::EveModel::TrivialProjective { d_e },
            )?;
            let assignment =
                crate::npa::exact_moment_assignment(&assembled.moment_matrix, &rep, &state);
            let y_exact = assignment_to_vars(
                &assembled.moment_matrix,
                &assembled.layout,
                &assignment,
            );
            analytic_face_candidates(&assembled, cs, &y_exact)
        }
        None => Vec::new(),
    };
    let (sol, diag) = solve_blended(&assembled, "guessing", &candidates, opts)?;
    let p_g = diag.conservative_value.clamp(1.0 / d as f64, 1.0);
    let p_g_estimate = sol.primal_value.clamp(1.0 / d as f64, 1.0);
    Ok(CertificateResult {
        p_g,
        p_g_estimate,
        h_min: -p_g.log2(),
        h_vn: None,
        mode: cs.mode,
        level: opts.level,
        quad_m: None,
        d,
        constraint_values: ConstraintValues {
            s_chsh: cs.s_chsh,
            a3: cs.a3,
            s: cs.s,
        },
        diagnostics: vec![diag],
    })
}

/// Lower-bounds the conditional von Neumann entropy H(B|E) through the
/// m-point Gauss-Radau program: c_m + sum_{i<m} kappa_i inf_i, each node
/// infimum certified from the outside. The result is clipped to
/// [0, log2 d].
pub fn von_neumann_lb(
    cs: &ConstraintSet,
    m: usize,
    opts: &CertifyOptions,
) -> Result<CertificateResult, CertifyError> {
    let d = cs.d();
    let quad = gauss_radau(m)?;
    let extras = match &opts.extras {
        ExtrasPolicy::Default => crate::npa::default_bff_extras(d),
        ExtrasPolicy::None => Vec::new(),
        ExtrasPolicy::Custom(words) => words.clone(),
    };
    let assembly = AssemblyOptions {
        level: opts.level,
        embedding: opts.embedding,
        extras,
        projective_level_only: opts.bff_projective_level_only,
    };
    let results: Vec<Result<(f64, SolveDiagnostics), CertifyError>> = (0..m - 1)
        .into_par_iter()
        .map(|i| {
            let t = quad.nodes[i];
            let assembled = assemble_bff_sdp(cs, t, &assembly)?;
            let candidates = match &opts.exact_reference {
                Some((theta, povm)) => {
                    // per-node optimal scalar Eve operators keep the exact
                    // reference on the node's optimal face
                    let probs = povm_outcome_probabilities(
                        *theta,
                        povm,
                        NoiseModel::ideal(),
                    )?;
                    let zs: Vec<C64> = probs
                        .iter()
                        .map(|&pb| C64::new(-pb / ((1.0 - t) * pb + t), 0.0))
                        .collect();
                    let (rep, state) = crate::npa::exact_protocol_model(
                        *theta,
                        povm,
                        &crate::npa::EveModel::Scalars(zs),
                    )?;
                    let assignment = crate::npa::exact_moment_assignment(
                        &assembled.moment_matrix,
                        &rep,
                        &state,
                    );
                    let y_exact = assignment_to_vars(
                        &assembled.moment_matrix,
                        &assembled.layout,
                        &assignment,
                    );
                    analytic_face_candidates(&assembled, cs, &y_exact)
                }
                None => Vec::new(),
            };
            let (_, diag) = solve_blended(
                &assembled,
                &format!("bff node {i} (t = {t:.6})"),
                &candidates,
                opts,
            )?;
            Ok((diag.conservative_value, diag))
        })
        .collect();
    let mut total = quad.c_m;
    let mut diagnostics = Vec::with_capacity(m - 1);
    for (i, r) in results.into_iter().enumerate() {
        let (value, diag) = r?;
        total += quad.kappa(i) * value;
        diagnostics.push(diag);
    }
    let h_vn = total.clamp(0.0, (d as f64).log2());
    Ok(CertificateResult {
        p_g: f64::NAN,
        p_g_estimate: f64::NAN,
        h_min: f64::NAN,
        h_vn: Some(h_vn),
        mode: cs.mode,
        level: opts.level,
        quad_m: Some(m),
        d,
        constraint_values: ConstraintValues {
            s_chsh: cs.s_chsh,
            a3: cs.a3,
            s: cs.s,
        },
        diagnostics,
    })
}

/// Certifies both the min-entropy and the von Neumann bound on one
/// constraint set.
pub fn certify_both(
    cs: &ConstraintSet,
    m: usize,
    opts: &CertifyOptions,
) -> Result<CertificateResult, CertifyError> {
    let mut result = min_entropy(cs, opts)?;
    let vn = von_neumann_lb(cs, m, opts)?;
    result.h_vn = vn.h_vn;
    result.quad_m = Some(m);
    result.diagnostics.extend(vn.diagnostics);
    Ok(result)
}

/// Guessing probability of the ideal realization of an extremal POVM:
/// max_b <F_b> on |phi_theta>. For extremal POVMs the boundary saturation
/// forces Eve's correlations to factorize, so this closed form is the
/// device-independent value.
pub fn pg_extremal_ideal(theta: f64, povm: &RankOnePOVM) -> Result<f64, CertifyError> {
    let ext = povm.extremality()?;
    if !ext.extremal {
        return Err(CertifyError::NotApplicable(
            "the closed-form guessing probability requires an extremal POVM".into(),
        ));
    }
    let probs = povm_outcome_probabilities(theta, povm, NoiseModel::ideal())?;
    Ok(probs.into_iter().fold(0.0, f64::max))
}

/// Shannon entropy (bits) of the POVM outcome distribution on the possibly
/// noisy reduced state.
pub fn shannon_outcomes(
    theta: f64,
    povm: &RankOnePOVM,
    noise: NoiseModel,
) -> Result<f64, CertifyError> {
    let probs = povm_outcome_probabilities(theta, povm, noise)?;
    Ok(probs
        .into_iter()
        .filter(|&p| p > 0.0)
        .map(|p| -p * p.log2())
        .sum())
}

/// Closed form p_g <= 1/2 + |cos theta| / 2 for the square POVM when only
/// the boundary is constrained.
pub fn square_pg_boundary(theta: f64) -> f64 {
    0.5 + theta.cos().abs() / 2.0
}

/// Closed form p_g = 1/2 + |cos theta| / 4 for the square POVM when the
/// full correlations are constrained.
pub fn square_pg_full(theta: f64) -> f64 {
    0.5 + theta.cos().abs() / 4.0
}

/// Exact evaluation of an explicit eavesdropping strategy.
#[derive(Debug, Clone, Serialize)]
pub struct EveStrategyReport {
    pub guessing_probability: f64,
    /// Set when the two candidate bets tie (theta = pi/2); the reported
    /// value is unaffected.
    pub tie_break: bool,
    /// |<S> - 1| of the strategy's realization.
    pub boundary_residual: f64,
    /// Max deviation from the ideal square-POVM correlation table; only for
    /// the full-correlation strategy.
    pub table_residual: Option<f64>,
}

/// Eve's boundary-saturating strategy for the square POVM: Bob's device
/// implements only the z-basis half of the decomposition and Eve bets on
/// the likelier outcome.
pub fn verify_eve_strategy_boundary(theta: f64) -> Result<EveStrategyReport, CertifyError> {
    let rho = phi_theta(theta)?;
    let p2 = (theta / 2.0).cos().powi(2);
    let p3 = (theta / 2.0).sin().powi(2);
    let tie_break = (p2 - p3).abs() < 1e-15;
    // Eve bets deterministically; on a tie the bet is outcome 2
    let p_g = p2.max(p3);

    // boundary value of this realization: Pi_2 - Pi_3 = sigma_3, the square
    // coefficients give <S> = n_32 <A_3 Pi_2> + n_33 <A_3 Pi_3>
    let coeffs = derive_coefficients(theta, &crate::scenario::square_povm())?;
    let proj0 = (pauli(3) + crate::qubit::identity2()) * C64::new(0.5, 0.0);
    let proj1 = (crate::qubit::identity2() - pauli(3)) * C64::new(0.5, 0.0);
    let mut s = 0.0;
    for (b, proj) in [(2usize, proj0), (3usize, proj1)] {
        let n = coeffs.vectors[b];
        for j in 1..=3usize {
            if n[j - 1] != 0.0 {
                s += n[j - 1] * crate::qubit::expect4(&kron22(&pauli(j), &proj), rho.density());
            }
        }
    }
    Ok(EveStrategyReport {
        guessing_probability: p_g,
        tie_break,
        boundary_residual: (s - 1.0).abs(),
        table_residual: None,
    })
}

fn krond(a: &DMatrix<C64>, b: &DMatrix<C64>) -> DMatrix<C64> {
    a.kronecker(b)
}

/// Eve's full-correlation strategy for the square POVM: Bob holds B (x) B',
/// the state is |phi_theta>_{AB} (x) |phi+>_{B'E}, the four projectors sort
/// outcomes by the B' bit, and Eve measures her half of |phi+>.
pub fn verify_eve_strategy_full(theta: f64) -> Result<EveStrategyReport, CertifyError> {
    if !(theta > 0.0 && theta < std::f64::consts::PI) {
        return Err(CertifyError::NotApplicable(format!(
            "theta = {theta} outside (0, pi)"
        )));
    }
    let dm = |m: crate::qubit::Mat2| -> DMatrix<C64> {
        DMatrix::from_fn(2, 2, |i, j| m[(i, j)])
    };
    let id2 = DMatrix::<C64>::identity(2, 2);
    let half = C64::new(0.5, 0.0);
    let ket0 = dm(crate::qubit::Mat2::new(
        C64::new(1.0, 0.0),
        C64::new(0.0, 0.0),
        C64::new(0.0, 0.0),
        C64::new(0.0, 0.0),
    ));
    let ket1 = dm(crate::qubit::Mat2::new(
        C64::new(0.0, 0.0),
        C64::new(0.0, 0.0),
        C64::new(0.0, 0.0),
        C64::new(1.0, 0.0),
    ));
    let plus = {
        let mut m = DMatrix::<C64>::from_element(2, 2, half);
        m[(0, 1)] = half;
        m[(1, 0)] = half;
        m
    };
    let minus = {
        let mut m = DMatrix::<C64>::from_element(2, 2, -half);
        m[(0, 0)] = half;
        m[(1, 1)] = half;
        m
    };

    // ordering A (x) B (x) B' (x) E, dimension 16
    let chi = if theta.cos() > 0.0 { 1.0 } else { 0.0 };
    let tie_break = theta.cos().abs() < 1e-15;
    let bob_projs: Vec<DMatrix<C64>> = vec![
        krond(&plus, &ket0),
        krond(&minus, &ket0),
        krond(&ket0, &ket1),
        krond(&ket1, &ket1),
    ];
    let eve_ops: Vec<DMatrix<C64>> = vec![
        ket0.clone(),
        DMatrix::<C64>::zeros(2, 2),
        ket1.clone() * C64::new(chi, 0.0),
        ket1.clone() * C64::new(1.0 - chi, 0.0),
    ];

    // |psi> = |phi_theta>_{AB} (x) |phi+>_{B'E}
    let phi = crate::qubit::phi_theta_ket(theta)?;
    let mut state = DVector::<C64>::zeros(16);
    let inv_sqrt2 = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    for (ab, amp_ab) in [(0usize, phi[0]), (3, phi[3])] {
        let (a_bit, b_bit) = (ab / 2, ab % 2);
        for be in [0usize, 3] {
            let (bp_bit, e_bit) = (be / 2, be % 2);
            let idx = ((a_bit * 2 + b_bit) * 2 + bp_bit) * 2 + e_bit;
            state[idx] = amp_ab * inv_sqrt2;
        }
    }

    let expect = |op: &DMatrix<C64>| -> f64 {
        let image = op * &state;
        state.dotc(&image).re
    };

    let mut p_g = 0.0;
    for b in 0..4 {
        let op = krond(&krond(&id2, &bob_projs[b]), &eve_ops[b]);
        p_g += expect(&op);
    }

    // the strategy must reproduce the entire ideal table
    let ideal = crate::scenario::protocol_correlations(
        theta,
        theta,
        NoiseModel::ideal(),
        &crate::scenario::square_povm(),
    )?;
    let mu = theta.sin().atan();
    let sxd = dm(pauli(1));
    let szd = dm(pauli(3));
    let alice_proj = |x: usize, a: usize| -> DMatrix<C64> {
        let obs = if x == 0 { sxd.clone() } else { szd.clone() };
        let sign = if a == 0 { 1.0 } else { -1.0 };
        (&id2 + obs * C64::new(sign, 0.0)) * half
    };
    let bob_tilted = |y: usize, b: usize| -> DMatrix<C64> {
        let sign_y = if y == 0 { 1.0 } else { -1.0 };
        let obs = szd.clone() * C64::new(mu.cos(), 0.0) + sxd.clone() * C64::new(sign_y * mu.sin(), 0.0);
        let sign = if b == 0 { 1.0 } else { -1.0 };
        (&id2 + obs * C64::new(sign, 0.0)) * half
    };
    let mut table_residual: f64 = 0.0;
    for (xi, x) in [(0usize, 1u8), (1, 3)] {
        for a in 0..2usize {
            let pa = alice_proj(xi, a);
            for y in 0..2usize {
                for b in 0..2usize {
                    let op = krond(&krond(&pa, &krond(&bob_tilted(y, b), &id2)), &id2);
                    let model = expect(&op);
                    let target = ideal.prob(x, y as u8, a, b)?;
                    table_residual = table_residual.max((model - target).abs());
                }
            }
            for b in 0..4usize {
                let op = krond(&krond(&pa, &bob_projs[b]), &id2);
                let model = expect(&op);
                let target = ideal.prob(x, 2, a, b)?;
                table_residual = table_residual.max((model - target).abs());
            }
        }
    }

    // boundary value of the strategy
    let coeffs = derive_coefficients(theta, &crate::scenario::square_povm())?;
    let mut s = 0.0;
    for (b, n) in coeffs.vectors.iter().enumerate() {
        for (j, &nj) in n.iter().enumerate() {
            if nj != 0.0 {
                let pauli_a = dm(pauli(j + 1));
                let op = krond(&krond(&pauli_a, &bob_projs[b]), &id2);
                s += nj * expect(&op);
            }
        }
    }

    Ok(EveStrategyReport {
        guessing_probability: p_g,
        tie_break,
        boundary_residual: (s - 1.0).abs(),
        table_residual: Some(table_residual),
    })
}

/// Smallest eigenvalue of a POVM element reconstruction, exposed for
/// report assembly.
pub fn element_rank_residual(povm: &RankOnePOVM, b: usize) -> f64 {
    hermitian_eigenvalues2(&povm.elements[b].matrix())[0]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{square_povm, triangular_povm};
    use std::f64::consts::PI;

    #[test]
    fn radau_two_point_rule() {
        let q = gauss_radau(2).unwrap();
        assert!((q.nodes[0] - 1.0 / 3.0).abs() < 1e-14, "{:?}", q.nodes);
        assert!((q.nodes[1] - 1.0).abs() < 1e-14);
        assert!((q.weights[0] - 0.75).abs() < 1e-14);
        assert!((q.weights[1] - 0.25).abs() < 1e-14);
    }

    #[test]
    fn radau_weights_sum_to_one() {
        for m in [2usize, 3, 5, 8, 12] {
            let q = gauss_radau(m).unwrap();
            let total: f64 = q.weights.iter().sum();
            assert!((total - 1.0).abs() < 1e-12, "m = {m}: {total}");
            assert!((q.nodes[m - 1] - 1.0).abs() < 1e-12, "endpoint fixed at 1");
        }
    }

    #[test]
    fn radau_moment_matching() {
        // exact for polynomials of degree <= 2m - 2: integral of x^k is
        // 1 / (k + 1)
        for m in [2usize, 3, 5, 8] {
            let q = gauss_radau(m).unwrap();
            for k in 0..=(2 * m - 2) {
                let approx: f64 = q
                    .nodes
                    .iter()
                    .zip(&q.weights)
                    .map(|(t, w)| w * t.powi(k as i32))
                    .sum();
                let exact = 1.0 / (k as f64 + 1.0);
                assert!(
                    (approx - exact).abs() < 1e-12,
                    "m = {m}, k = {k}: {approx} vs {exact}"
                );
            }
        }
    }

    #[test]
    fn bff_constant_converges_to_log2_3_at_ideal_point() {
        // with uniform outcome probabilities 1/3 the analytical node values
        // are f(t) = -sum_b p^2 / (t + (1-t) p); the quadrature bound must
        // increase with m toward log2(3)
        let p = 1.0 / 3.0;
        let node_value = |t: f64| -3.0 * p * p / (t + (1.0 - t) * p);
        let mut last = 0.0;
        for m in [2usize, 4, 8, 16] {
            let q = gauss_radau(m).unwrap();
            let mut bound = q.c_m;
            for i in 0..m - 1 {
                bound += q.kappa(i) * node_value(q.nodes[i]);
            }
            assert!(bound > last, "m = {m}: {bound} <= {last}");
            assert!(bound < 3f64.log2() + 1e-12);
            last = bound;
        }
        assert!(last > 1.575, "m = 16 bound {last} too far from log2 3");
    }

    #[test]
    fn closed_forms() {
        assert!((square_pg_boundary(PI / 2.0) - 0.5).abs() < 1e-15);
        assert!((square_pg_full(PI / 2.0) - 0.5).abs() < 1e-15);
        assert!((square_pg_boundary(PI / 3.0) - 0.75).abs() < 1e-15);
        assert!((square_pg_full(PI / 3.0) - 0.625).abs() < 1e-15);
        assert!((square_pg_boundary(2.0 * PI / 3.0) - 0.75).abs() < 1e-15);
        assert!((square_pg_full(2.0 * PI / 3.0) - 0.625).abs() < 1e-15);
    }

    #[test]
    fn extremal_guessing_closed_form() {
        let tri = triangular_povm();
        assert!((pg_extremal_ideal(PI / 2.0, &tri).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        // theta = pi/3: rho_B = diag(3/4, 1/4); direct trace oracle
        let probs =
            povm_outcome_probabilities(PI / 3.0, &tri, NoiseModel::ideal()).unwrap();
        let oracle = probs.iter().fold(0.0f64, |a, &b| a.max(b));
        assert!((pg_extremal_ideal(PI / 3.0, &tri).unwrap() - oracle).abs() < 1e-15);
        assert!(matches!(
            pg_extremal_ideal(PI / 3.0, &square_povm()),
            Err(CertifyError::NotApplicable(_))
        ));
    }

    #[test]
    fn shannon_outcomes_cases() {
        let tri = triangular_povm();
        let h = shannon_outcomes(PI / 2.0, &tri, NoiseModel::ideal()).unwrap();
        assert!((h - 3f64.log2()).abs() < 1e-12);
        // full depolarization keeps the triangular marginals uniform
        let h = shannon_outcomes(PI / 2.0, &tri, NoiseModel::new(1.0, 0.0).unwrap()).unwrap();
        assert!((h - 3f64.log2()).abs() < 1e-12);
        let proj = crate::qubit::RankOnePOVM::new(vec![
            crate::qubit::RankOnePOVMElement::new(1.0, 0.0, 0.0),
            crate::qubit::RankOnePOVMElement::new(1.0, PI, 0.0),
        ]);
        let h = shannon_outcomes(PI / 2.0, &proj, NoiseModel::ideal()).unwrap();
        assert!((h - 1.0).abs() < 1e-12);
    }

    #[test]
    fn eve_boundary_strategy_exact() {
        for theta in [PI / 3.0, 2.0 * PI / 3.0, 1.0, 2.0] {
            let report = verify_eve_strategy_boundary(theta).unwrap();
            assert!(
                (report.guessing_probability - square_pg_boundary(theta)).abs() < 1e-15,
                "theta = {theta}"
            );
            assert!(report.boundary_residual < 1e-12, "theta = {theta}");
            assert!(!report.tie_break);
        }
        let report = verify_eve_strategy_boundary(PI / 2.0).unwrap();
        assert!(report.tie_break);
        assert!((report.guessing_probability - 0.5).abs() < 1e-15);
    }

    #[test]
    fn eve_full_strategy_exact() {
        for theta in [PI / 3.0, 2.0 * PI / 3.0, 1.1] {
            let report = verify_eve_strategy_full(theta).unwrap();
            assert!(
                (report.guessing_probability - square_pg_full(theta)).abs() < 1e-14,
                "theta = {theta}: {report:?}"
            );
            assert!(report.boundary_residual < 1e-12);
            assert!(report.table_residual.unwrap() < 1e-12, "theta = {theta}");
        }
    }
}
