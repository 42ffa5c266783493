//! Dense primal-dual interior-point solver for small semidefinite programs.
//!
//! Problems arrive in moment form: real variables y, linear equality
//! constraints, and one or more linear matrix inequalities
//! sum_k y_k E_k >= 0. Equalities are eliminated by Gaussian pivoting, the
//! reduced problem is solved by an infeasible-start path-following method
//! with HKM scaling and a Mehrotra predictor-corrector, and the solution
//! reports both the variable-side objective and the matrix-side (dual)
//! bound so callers can pick the conservative side.

use nalgebra::DMatrix;
use serde::Serialize;
use std::collections::HashMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("malformed problem: {0}")]
    Malformed(String),
    #[error("problem text parse error: {0}")]
    Parse(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Sense {
    Maximize,
    Minimize,
}

/// Sparse linear expression over problem variables.
#[derive(Debug, Clone, Default)]
pub struct LinearExpr {
    pub constant: f64,
    pub terms: Vec<(usize, f64)>,
}

impl LinearExpr {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, var: usize, coef: f64) {
        if coef != 0.0 {
            self.terms.push((var, coef));
        }
    }

    /// Merges duplicate variable indices.
    pub fn compress(&mut self) {
        let mut map: HashMap<usize, f64> = HashMap::new();
        for (v, c) in self.terms.drain(..) {
            *map.entry(v).or_insert(0.0) += c;
        }
        let mut terms: Vec<(usize, f64)> = map.into_iter().filter(|(_, c)| *c != 0.0).collect();
        terms.sort_by_key(|(v, _)| *v);
        self.terms = terms;
    }

    pub fn eval(&self, y: &[f64]) -> f64 {
        self.constant + self.terms.iter().map(|(v, c)| c * y[*v]).sum::<f64>()
    }
}

/// One PSD block of the LMI sum_k y_k E_k >= 0. Entries are given for
/// i <= j once; the mirrored entry is implied.
#[derive(Debug, Clone)]
pub struct PsdBlock {
    pub dim: usize,
    /// var -> list of (i, j, coefficient) with i <= j.
    pub entries: Vec<(usize, Vec<(usize, usize, f64)>)>,
    /// Facial-reduction map: when set (dim x r, orthonormal columns), the
    /// PSD requirement applies to P^T M P instead of M itself. Valid when
    /// the complement directions are certified null on the feasible set.
    pub projector: Option<DMatrix<f64>>,
}

impl PsdBlock {
    pub fn full(dim: usize, entries: Vec<(usize, Vec<(usize, usize, f64)>)>) -> Self {
        Self {
            dim,
            entries,
            projector: None,
        }
    }

    /// Dimension of the matrix the cone constraint is applied to.
    pub fn reduced_dim(&self) -> usize {
        self.projector.as_ref().map_or(self.dim, |p| p.ncols())
    }
}

#[derive(Debug, Clone)]
pub struct SdpProblem {
    pub num_vars: usize,
    pub sense: Sense,
    pub objective: LinearExpr,
    /// Equality constraints expr = rhs.
    pub equalities: Vec<(LinearExpr, f64)>,
    pub blocks: Vec<PsdBlock>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    IterationLimit,
    NumericalFailure,
}

#[derive(Debug, Clone, Serialize)]
pub struct SolverConfig {
    pub feasibility_tol: f64,
    pub gap_tol: f64,
    pub max_iterations: usize,
    /// Fraction of the maximal step taken each iteration, in (0, 1).
    pub step_damping: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            feasibility_tol: 1e-8,
            gap_tol: 1e-8,
            max_iterations: 200,
            step_damping: 0.98,
        }
    }
}

/// Solver outcome. For maximization the matrix-side `dual_value` can only
/// overestimate the true optimum (outer bound); for minimization it can only
/// underestimate. `primal_value` is the objective at the returned `y`, which
/// satisfies the equalities exactly and the PSD constraints up to
/// `primal_residual`.
#[derive(Debug, Clone, Serialize)]
pub struct Solution {
    pub status: SolveStatus,
    pub primal_value: f64,
    pub dual_value: f64,
    pub gap: f64,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    /// Minimum eigenvalue of each PSD block at the returned point.
    pub block_min_eigs: Vec<f64>,
    #[serde(skip)]
    pub y: Vec<f64>,
}

impl Solution {
    pub fn summary_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("solution serialization cannot fail")
    }
}

/// Reduced pure-LMI problem: max c . z + c0 subject to
/// G_0 + sum_j z_j G_j >= 0 across blocks.
struct Reduced {
    num_free: usize,
    c: Vec<f64>,
    c0: f64,
    /// per block: dim, constant part entries, per-free-var entries
    /// (fully expanded with mirrored off-diagonal entries).
    blocks: Vec<ReducedBlock>,
    /// y_full = base + basis . z
    base: Vec<f64>,
    /// per full variable, sparse row of the free-to-full map.
    expand: Vec<Vec<(usize, f64)>>,
}

struct ReducedBlock {
    dim: usize,
    g0: Vec<(usize, usize, f64)>,
    gvar: Vec<Vec<(usize, usize, f64)>>,
    proj: Option<DMatrix<f64>>,
}

impl ReducedBlock {
    fn reduced_dim(&self) -> usize {
        self.proj.as_ref().map_or(self.dim, |p| p.ncols())
    }

    /// Ambient matrix G_0 + sum y_k G_k.
    fn ambient(&self, y: &[f64]) -> DMatrix<f64> {
        let mut a = dense_from_entries(self.dim, &self.g0);
        for (k, g) in self.gvar.iter().enumerate() {
            if y[k] != 0.0 {
                for &(i, j, v) in g {
                    a[(i, j)] += y[k] * v;
                }
            }
        }
        a
    }

    /// P^T A P, or A itself for unprojected blocks.
    fn compress(&self, a: &DMatrix<f64>) -> DMatrix<f64> {
        match &self.proj {
            Some(p) => p.transpose() * a * p,
            None => a.clone(),
        }
    }

    /// P R P^T, mapping reduced-space matrices back to the ambient space
    /// where the sparse coefficient data lives.
    fn lift(&self, r: &DMatrix<f64>) -> DMatrix<f64> {
        match &self.proj {
            Some(p) => p * r * p.transpose(),
            None => r.clone(),
        }
    }
}

fn expand_sym(entries: &[(usize, usize, f64)]) -> Vec<(usize, usize, f64)> {
    let mut out = Vec::with_capacity(entries.len() * 2);
    for &(i, j, v) in entries {
        out.push((i, j, v));
        if i != j {
            out.push((j, i, v));
        }
    }
    out
}

/// Gaussian elimination of the equality constraints. Returns the reduced
/// LMI problem or None when the equalities are inconsistent. With
/// `prefer_sparse` the pivot choice trades numerical growth for less
/// fill-in of the LMI coefficients; `eliminate` retries without it when
/// the result fails verification.
fn eliminate_with(
    problem: &SdpProblem,
    prefer_sparse: bool,
) -> Result<Option<Reduced>, SolverError> {
    let m = problem.num_vars;
    // block-entry counts steer pivoting toward low-fill variables
    let mut entry_count = vec![0usize; m];
    for block in &problem.blocks {
        for (v, entries) in &block.entries {
            if *v < m {
                entry_count[*v] += entries.len();
            }
        }
    }
    // rows as dense-on-demand hash maps
    let mut rows: Vec<(HashMap<usize, f64>, f64)> = Vec::new();
    let mut row_scale: Vec<f64> = Vec::new();
    for (expr, rhs) in &problem.equalities {
        let mut map: HashMap<usize, f64> = HashMap::new();
        for &(v, c) in &expr.terms {
            if v >= m {
                return Err(SolverError::Malformed(format!(
                    "equality references variable {v} out of range"
                )));
            }
            *map.entry(v).or_insert(0.0) += c;
        }
        row_scale.push(map.values().fold(1.0f64, |a, &c| a.max(c.abs())));
        rows.push((map, rhs - expr.constant));
    }

    // pivot elimination
    let mut pivots: Vec<(usize, std::collections::BTreeMap<usize, f64>, f64)> = Vec::new(); // (var, expr over free, const)
    let mut is_pivot = vec![false; m];
    for r in 0..rows.len() {
        // deterministic pivot: among well-scaled coefficients prefer the
        // variable with the fewest block entries (limits LMI fill-in),
        // breaking ties by index
        let (pivot_var, pivot_coef) = {
            let (map, _) = &rows[r];
            let cmax = map.values().fold(0.0f64, |a, &c| a.max(c.abs()));
            if cmax <= 1e-8 * row_scale[r].max(1.0) {
                // row eliminated down to accumulated rounding noise; a
                // genuine conflict leaves a residue above that scale
                let rhs = rows[r].1;
                if rhs.abs() > 1e-6 * row_scale[r].max(1.0) {
                    if std::env::var("DICERT_SDP_TRACE").is_ok() {
                        eprintln!(
                            "eliminate({prefer_sparse}): row {r} residue {rhs:.3e} scale {:.3e} cmax {cmax:.3e}",
                            row_scale[r]
                        );
                    }
                    return Ok(None); // inconsistent: 0 = rhs
                }
                continue; // redundant row
            }
            let mut best: Option<(usize, f64)> = None;
            for (&v, &c) in map.iter() {
                let candidate_better = if prefer_sparse {
                    c.abs() >= 0.25 * cmax
                        && best.map_or(true, |(bv, _)| {
                            (entry_count[v], v) < (entry_count[bv], bv)
                        })
                } else {
                    best.map_or(true, |(bv, bc)| {
                        c.abs() > bc.abs() || (c.abs() == bc.abs() && v < bv)
                    }) && c.abs() > 1e-12
                };
                if candidate_better {
                    best = Some((v, c));
                }
            }
            match best {
                Some(b) => b,
                None => continue,
            }
        };
        // normalize: y_pivot = rhs/coef - sum_{v != pivot} (c_v/coef) y_v
        let (map, rhs) = rows[r].clone();
        let mut expr: std::collections::BTreeMap<usize, f64> = std::collections::BTreeMap::new();
        for (&v, &c) in map.iter() {
            if v != pivot_var && c.abs() > 0.0 {
                expr.insert(v, -c / pivot_coef);
            }
        }
        let cst = rhs / pivot_coef;
        // substitute into remaining rows
        for (ri, row) in rows.iter_mut().enumerate().skip(r + 1) {
            if let Some(c) = row.0.remove(&pivot_var) {
                for (&v, &e) in expr.iter() {
                    let t = c * e;
                    *row.0.entry(v).or_insert(0.0) += t;
                    row_scale[ri] = row_scale[ri].max(t.abs());
                }
                row.1 -= c * cst;
            }
        }
        // substitute into earlier pivots
        for (_, pexpr, pcst) in pivots.iter_mut() {
            if let Some(c) = pexpr.remove(&pivot_var) {
                for (&v, &e) in expr.iter() {
                    *pexpr.entry(v).or_insert(0.0) += c * e;
                }
                *pcst += c * cst;
            }
        }
        is_pivot[pivot_var] = true;
        pivots.push((pivot_var, expr, cst));
    }

    // free variables keep their order
    let free_vars: Vec<usize> = (0..m).filter(|&v| !is_pivot[v]).collect();
    let free_index: HashMap<usize, usize> = free_vars
        .iter()
        .enumerate()
        .map(|(i, &v)| (v, i))
        .collect();

    // full -> (base, sparse free combination)
    let mut base = vec![0.0; m];
    let mut expand: Vec<Vec<(usize, f64)>> = vec![Vec::new(); m];
    for &v in &free_vars {
        expand[v].push((free_index[&v], 1.0));
    }
    for (v, expr, cst) in &pivots {
        base[*v] = *cst;
        for (&fv, &c) in expr.iter() {
            if c.abs() > 0.0 {
                let fi = *free_index.get(&fv).expect("pivot expressions reference free vars");
                expand[*v].push((fi, c));
            }
        }
    }

    // reduced objective
    let mut c_red = vec![0.0; free_vars.len()];
    let mut c0 = problem.objective.constant;
    for &(v, c) in &problem.objective.terms {
        c0 += c * base[v];
        for &(fi, w) in &expand[v] {
            c_red[fi] += c * w;
        }
    }

    // reduced blocks
    let mut blocks = Vec::with_capacity(problem.blocks.len());
    for block in &problem.blocks {
        let mut g0: HashMap<(usize, usize), f64> = HashMap::new();
        let mut gvar: Vec<HashMap<(usize, usize), f64>> = vec![HashMap::new(); free_vars.len()];
        for (v, entries) in &block.entries {
            if *v >= m {
                return Err(SolverError::Malformed(format!(
                    "block references variable {v} out of range"
                )));
            }
            for &(i, j, val) in entries {
                if i >= block.dim || j >= block.dim {
                    return Err(SolverError::Malformed(format!(
                        "entry ({i},{j}) outside block of dim {}",
                        block.dim
                    )));
                }
                let key = if i <= j { (i, j) } else { (j, i) };
                if base[*v] != 0.0 {
                    *g0.entry(key).or_insert(0.0) += base[*v] * val;
                }
                for &(fi, w) in &expand[*v] {
                    *gvar[fi].entry(key).or_insert(0.0) += w * val;
                }
            }
        }
        let collect = |map: HashMap<(usize, usize), f64>| -> Vec<(usize, usize, f64)> {
            let mut v: Vec<(usize, usize, f64)> = map
                .into_iter()
                .filter(|(_, val)| val.abs() > 0.0)
                .map(|((i, j), val)| (i, j, val))
                .collect();
            v.sort_by_key(|&(i, j, _)| (i, j));
            v
        };
        blocks.push(ReducedBlock {
            dim: block.dim,
            g0: expand_sym(&collect(g0)),
            gvar: gvar
                .into_iter()
                .map(|g| expand_sym(&collect(g)))
                .collect(),
            proj: block.projector.clone(),
        });
    }

    Ok(Some(Reduced {
        num_free: free_vars.len(),
        c: c_red,
        c0,
        blocks,
        base,
        expand,
    }))
}

/// Eliminates equalities, preferring low-fill pivots, and falls back to
/// classical largest-coefficient pivoting when the sparse ordering loses
/// too much accuracy.
fn eliminate(problem: &SdpProblem) -> Result<Option<Reduced>, SolverError> {
    let check = |red: &Reduced| -> bool {
        // the base point must satisfy the original equalities
        for (expr, rhs) in &problem.equalities {
            let mut v = expr.constant;
            let mut scale: f64 = 1.0;
            for &(var, c) in &expr.terms {
                v += c * red.base[var];
                scale = scale.max(c.abs() * red.base[var].abs());
            }
            if (v - rhs).abs() > 1e-7 * scale.max(1.0) {
                return false;
            }
        }
        true
    };
    if let Some(red) = eliminate_with(problem, true)? {
        if check(&red) {
            return Ok(Some(red));
        }
    } else {
        return Ok(None);
    }
    eliminate_with(problem, false)
}

fn dense_from_entries(dim: usize, entries: &[(usize, usize, f64)]) -> DMatrix<f64> {
    let mut m = DMatrix::<f64>::zeros(dim, dim);
    for &(i, j, v) in entries {
        m[(i, j)] += v;
    }
    m
}

fn sparse_inner(entries: &[(usize, usize, f64)], m: &DMatrix<f64>) -> f64 {
    entries.iter().map(|&(i, j, v)| v * m[(i, j)]).sum()
}

fn sym_eigen_min(m: &DMatrix<f64>) -> f64 {
    let sym = DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| 0.5 * (m[(i, j)] + m[(j, i)]));
    sym.symmetric_eigen()
        .eigenvalues
        .iter()
        .fold(f64::INFINITY, |a, &b| a.min(b))
}

/// Largest step alpha with M + alpha D >= 0, via the minimum eigenvalue of
/// L^{-1} D L^{-T}.
fn max_step(m: &DMatrix<f64>, d: &DMatrix<f64>) -> Option<f64> {
    let chol = robust_cholesky(m)?;
    // w = L^{-1} D
    let mut w = d.clone();
    chol.l_dirty().solve_lower_triangular_mut(&mut w);
    // a = w L^{-T}: a^T = L^{-1} w^T
    let mut wt = w.transpose();
    chol.l_dirty().solve_lower_triangular_mut(&mut wt);
    let a = wt.transpose();
    let lam = sym_eigen_min(&a);
    if lam >= 0.0 {
        Some(f64::INFINITY)
    } else {
        Some(-1.0 / lam)
    }
}

struct BlockState {
    dim: usize,
    x: DMatrix<f64>,
    z: DMatrix<f64>,
}

/// Solves the reduced LMI problem by HKM path following. Projected blocks
/// keep X and Z in the reduced space; the sparse coefficient data stays in
/// the ambient space and meets them through congruence by the projector.
fn solve_reduced(red: &Reduced, config: &SolverConfig) -> Solution {
    let m = red.num_free;
    let n_total: usize = red.blocks.iter().map(|b| b.reduced_dim()).sum();

    // variables with no presence in any block cannot be determined; a nonzero
    // objective on one means the problem is unbounded.
    let mut active = vec![false; m];
    for b in &red.blocks {
        for (k, g) in b.gvar.iter().enumerate() {
            if !g.is_empty() {
                active[k] = true;
            }
        }
    }
    for k in 0..m {
        if !active[k] && red.c[k].abs() > 1e-12 {
            return failed_solution(SolveStatus::NumericalFailure, m, red);
        }
    }

    // initial scale
    let mut scale: f64 = 1.0;
    for b in &red.blocks {
        let g0_norm: f64 = b.g0.iter().map(|&(_, _, v)| v * v).sum::<f64>().sqrt();
        scale = scale.max(g0_norm);
        for g in &b.gvar {
            let n: f64 = g.iter().map(|&(_, _, v)| v * v).sum::<f64>().sqrt();
            scale = scale.max(n);
        }
    }
    let cmax = red.c.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    let tau = 2.0 * scale.max(cmax).max(1.0);

    let mut y = vec![0.0; m];
    let mut blocks: Vec<BlockState> = red
        .blocks
        .iter()
        .map(|b| {
            let r = b.reduced_dim();
            BlockState {
                dim: r,
                x: DMatrix::identity(r, r) * tau,
                z: DMatrix::identity(r, r) * tau,
            }
        })
        .collect();

    let mut status = SolveStatus::IterationLimit;
    let mut iterations = 0;
    // best iterate seen, scored by the worst of its three metrics
    let mut best_score = f64::INFINITY;
    let mut best_snapshot: Option<(Vec<f64>, Vec<DMatrix<f64>>, (f64, f64, f64))> = None;
    let mut mu_history: Vec<f64> = Vec::new();

    for iter in 0..config.max_iterations {
        iterations = iter + 1;

        // S(y) per block (reduced space) and residuals
        let mut r_p: Vec<DMatrix<f64>> = Vec::with_capacity(blocks.len());
        let mut p_res: f64 = 0.0;
        for (bi, b) in red.blocks.iter().enumerate() {
            let s = b.compress(&b.ambient(&y));
            let r = &s - &blocks[bi].x;
            p_res = p_res.max(r.amax());
            r_p.push(r);
        }

        // ambient mirrors of the dual blocks for sparse inner products
        let z_lift: Vec<DMatrix<f64>> = red
            .blocks
            .iter()
            .zip(&blocks)
            .map(|(b, s)| b.lift(&s.z))
            .collect();

        // dual residuals r_d,k = -c_k - <G_k, Z>
        let mut r_d = vec![0.0; m];
        let mut d_res: f64 = 0.0;
        for (k, rd) in r_d.iter_mut().enumerate() {
            let mut inner = 0.0;
            for (bi, b) in red.blocks.iter().enumerate() {
                inner += sparse_inner(&b.gvar[k], &z_lift[bi]);
            }
            *rd = -red.c[k] - inner;
            d_res = d_res.max(rd.abs());
        }

        // objective values and complementarity
        let pobj: f64 = red.c.iter().zip(&y).map(|(c, v)| c * v).sum::<f64>() + red.c0;
        let dobj: f64 = red
            .blocks
            .iter()
            .zip(&z_lift)
            .map(|(b, z)| sparse_inner(&b.g0, z))
            .sum::<f64>()
            + red.c0;
        let mu: f64 = blocks
            .iter()
            .map(|b| (&b.x * &b.z).trace())
            .sum::<f64>()
            / n_total as f64;
        let gap_rel = (pobj - dobj).abs() / (1.0 + pobj.abs() + dobj.abs());
        let p_rel = p_res / (1.0 + tau);
        let d_rel = d_res / (1.0 + cmax);
        if std::env::var("DICERT_SDP_TRACE").is_ok() {
            eprintln!(
                "iter {iter:3}  mu {mu:10.3e}  gap {gap_rel:10.3e}  p {p_rel:9.2e}  d {d_rel:9.2e}  pobj {pobj:+.9e}  dobj {dobj:+.9e}"
            );
        }
        let score = gap_rel.max(p_rel).max(d_rel);
        if score < best_score {
            best_score = score;
            best_snapshot = Some((
                y.clone(),
                blocks.iter().map(|b| b.z.clone()).collect(),
                (gap_rel, p_rel, d_rel),
            ));
        }

        if gap_rel <= config.gap_tol
            && mu / (1.0 + pobj.abs() + dobj.abs()) <= config.gap_tol * 10.0
            && p_rel <= config.feasibility_tol
            && d_rel <= config.feasibility_tol
        {
            status = SolveStatus::Optimal;
            break;
        }
        // divergence heuristic: dual objective running away while dual
        // feasibility holds indicates primal infeasibility
        if dobj < -1e9 * (1.0 + red.c0.abs()) && d_rel < 1e-5 {
            status = SolveStatus::Infeasible;
            break;
        }
        // stagnation: complementarity no longer decreasing means double
        // precision is exhausted
        mu_history.push(mu);
        if mu_history.len() >= 10 {
            let old = mu_history[mu_history.len() - 10];
            if mu > 0.5 * old {
                status = SolveStatus::NumericalFailure;
                break;
            }
        }

        // Nesterov-Todd scaling per block: W = Lx E^{-1/2} Lx^T with
        // E = Lx^T Z Lx satisfies W Z W = X; the scaled Newton system has a
        // symmetric positive definite Schur complement built from W^{-1}
        // alone, which keeps its conditioning under control on degenerate
        // instances.
        let mut winv: Vec<DMatrix<f64>> = Vec::with_capacity(blocks.len());
        let mut w_half: Vec<DMatrix<f64>> = Vec::with_capacity(blocks.len());
        let mut w_half_inv: Vec<DMatrix<f64>> = Vec::with_capacity(blocks.len());
        let mut zinv: Vec<DMatrix<f64>> = Vec::with_capacity(blocks.len());
        let mut nt_fail = false;
        for b in &blocks {
            let Some(chol_x) = b.x.clone().cholesky() else {
                nt_fail = true;
                break;
            };
            let Some(chol_z) = b.z.clone().cholesky() else {
                nt_fail = true;
                break;
            };
            let lx = chol_x.l();
            let e = lx.transpose() * &b.z * &lx;
            let eig = e.symmetric_eigen();
            let mut ok = true;
            for &lam in eig.eigenvalues.iter() {
                if !(lam > 0.0) || !lam.is_finite() {
                    ok = false;
                }
            }
            if !ok {
                nt_fail = true;
                break;
            }
            // E^{-1/2} = Q D^{-1/2} Q^T
            let q = &eig.eigenvectors;
            let mut e_inv_sqrt = DMatrix::<f64>::zeros(b.dim, b.dim);
            for k in 0..b.dim {
                let s = 1.0 / eig.eigenvalues[k].sqrt();
                let col = q.column(k);
                for i in 0..b.dim {
                    for j in 0..b.dim {
                        e_inv_sqrt[(i, j)] += s * col[i] * col[j];
                    }
                }
            }
            let w = &lx * &e_inv_sqrt * lx.transpose();
            let w = DMatrix::from_fn(b.dim, b.dim, |i, j| 0.5 * (w[(i, j)] + w[(j, i)]));
            let weig = w.symmetric_eigen();
            let mut wh = DMatrix::<f64>::zeros(b.dim, b.dim);
            let mut whi = DMatrix::<f64>::zeros(b.dim, b.dim);
            let mut wi = DMatrix::<f64>::zeros(b.dim, b.dim);
            let mut w_ok = true;
            for k in 0..b.dim {
                let lam = weig.eigenvalues[k];
                if !(lam > 0.0) || !lam.is_finite() {
                    w_ok = false;
                    break;
                }
                let col = weig.eigenvectors.column(k);
                let (sh, shi, si) = (lam.sqrt(), 1.0 / lam.sqrt(), 1.0 / lam);
                for i in 0..b.dim {
                    for j in 0..b.dim {
                        let outer = col[i] * col[j];
                        wh[(i, j)] += sh * outer;
                        whi[(i, j)] += shi * outer;
                        wi[(i, j)] += si * outer;
                    }
                }
            }
            if !w_ok {
                nt_fail = true;
                break;
            }
            winv.push(wi);
            w_half.push(wh);
            w_half_inv.push(whi);
            zinv.push(chol_z.inverse());
        }
        if nt_fail {
            status = SolveStatus::NumericalFailure;
            break;
        }

        // ambient mirrors for the sparse Schur products
        let winv_lift: Vec<DMatrix<f64>> = red
            .blocks
            .iter()
            .zip(&winv)
            .map(|(b, w)| b.lift(w))
            .collect();

        // Schur complement B_kj = sum_blocks Tr(G_k W^{-1} G_j W^{-1})
        let mut schur = DMatrix::<f64>::zeros(m, m);
        for (bi, b) in red.blocks.iter().enumerate() {
            let wm = &winv_lift[bi];
            for k in 0..m {
                let gk = &b.gvar[k];
                if gk.is_empty() {
                    continue;
                }
                for j in 0..=k {
                    let gj = &b.gvar[j];
                    if gj.is_empty() {
                        continue;
                    }
                    let mut acc = 0.0;
                    for &(a1, b1, v1) in gk {
                        for &(c1, d1, v2) in gj {
                            acc += v1 * v2 * wm[(b1, c1)] * wm[(d1, a1)];
                        }
                    }
                    schur[(k, j)] += acc;
                    if j != k {
                        schur[(j, k)] += acc;
                    }
                }
            }
        }
        // inactive vars: pin with identity rows
        for k in 0..m {
            if !active[k] {
                schur[(k, k)] = 1.0;
            }
        }

        let schur_chol = match robust_cholesky(&schur) {
            Some(c) => c,
            None => {
                status = SolveStatus::NumericalFailure;
                break;
            }
        };

        // NT Newton solve for a centering target sigma mu:
        //   sum_k dy_k G_k - dX = -R_p
        //   <G_k, dZ> = r_d,k
        //   dX + W dZ W = sigma mu Z^{-1} - X - correction
        let newton = |sigma_mu: f64,
                      correction: Option<&[DMatrix<f64>]>|
         -> (Vec<f64>, Vec<DMatrix<f64>>, Vec<DMatrix<f64>>) {
            let mut rnt: Vec<DMatrix<f64>> = Vec::with_capacity(blocks.len());
            for (bi, b) in blocks.iter().enumerate() {
                let mut r = &zinv[bi] * sigma_mu - &b.x;
                if let Some(corr) = correction {
                    r -= &corr[bi];
                }
                rnt.push(r);
            }
            let mut t: Vec<DMatrix<f64>> = Vec::with_capacity(blocks.len());
            for (bi, _) in blocks.iter().enumerate() {
                let inner = &rnt[bi] - &r_p[bi];
                t.push(red.blocks[bi].lift(&(&winv[bi] * inner * &winv[bi])));
            }
            let mut rhs = DMatrix::<f64>::zeros(m, 1);
            for k in 0..m {
                let mut v = 0.0;
                for (bi, b) in red.blocks.iter().enumerate() {
                    v += sparse_inner(&b.gvar[k], &t[bi]);
                }
                rhs[(k, 0)] = v - r_d[k];
            }
            let mut dy_mat = schur_chol.solve(&rhs);
            // a few rounds of iterative refinement on the Schur system
            for _ in 0..3 {
                let resid = &rhs - &schur * &dy_mat;
                dy_mat += schur_chol.solve(&resid);
            }
            let dy: Vec<f64> = (0..m).map(|k| dy_mat[(k, 0)]).collect();

            let mut dx: Vec<DMatrix<f64>> = Vec::with_capacity(blocks.len());
            let mut dz: Vec<DMatrix<f64>> = Vec::with_capacity(blocks.len());
            for (bi, b) in red.blocks.iter().enumerate() {
                let mut step_ambient = DMatrix::<f64>::zeros(b.dim, b.dim);
                for (k, g) in b.gvar.iter().enumerate() {
                    if dy[k] != 0.0 {
                        for &(i, j, v) in g {
                            step_ambient[(i, j)] += dy[k] * v;
                        }
                    }
                }
                let dxb = b.compress(&step_ambient) + &r_p[bi];
                let dz_raw = &winv[bi] * (&rnt[bi] - &dxb) * &winv[bi];
                let rdim = blocks[bi].dim;
                let dzb = DMatrix::from_fn(rdim, rdim, |i, j| {
                    0.5 * (dz_raw[(i, j)] + dz_raw[(j, i)])
                });
                dx.push(dxb);
                dz.push(dzb);
            }
            (dy, dx, dz)
        };

        // affine probe sets the centering weight
        let (_dy_aff, dx_aff, dz_aff) = newton(0.0, None);
        let step_p_aff = step_length(&blocks, &dx_aff, true);
        let step_d_aff = step_length(&blocks, &dz_aff, false);
        let (Some(ap), Some(ad)) = (step_p_aff, step_d_aff) else {
            status = SolveStatus::NumericalFailure;
            break;
        };
        let ap = ap.min(1.0);
        let ad = ad.min(1.0);
        let mut mu_aff = 0.0;
        for (bi, b) in blocks.iter().enumerate() {
            let xa = &b.x + &dx_aff[bi] * ap;
            let za = &b.z + &dz_aff[bi] * ad;
            mu_aff += (&xa * &za).trace();
        }
        mu_aff /= n_total as f64;
        let sigma = (mu_aff / mu).powi(3).clamp(1e-10, 1.0);

        // Mehrotra second-order term in the scaled space, skipped when the
        // affine direction exits the cone almost immediately
        let correction: Option<Vec<DMatrix<f64>>> = (ap.min(ad) >= 0.05).then(|| {
            blocks
                .iter()
                .enumerate()
                .map(|(bi, b)| {
                    let dxa = &w_half_inv[bi] * &dx_aff[bi] * &w_half_inv[bi];
                    let dza = &w_half[bi] * &dz_aff[bi] * &w_half[bi];
                    let v = &w_half[bi] * &b.z * &w_half[bi];
                    let msym = (&dxa * &dza + &dza * &dxa) * 0.5;
                    // V^{-1} msym, symmetrized
                    let y = v
                        .clone()
                        .cholesky()
                        .map(|c| c.solve(&msym))
                        .unwrap_or_else(|| DMatrix::zeros(b.dim, b.dim));
                    let corr_scaled =
                        DMatrix::from_fn(b.dim, b.dim, |i, j| 0.5 * (y[(i, j)] + y[(j, i)]));
                    &w_half[bi] * corr_scaled * &w_half[bi]
                })
                .collect()
        });
        let (dy, dx, dz) = newton(sigma * mu, correction.as_deref());

        let step_p = step_length(&blocks, &dx, true);
        let step_d = step_length(&blocks, &dz, false);
        let (Some(sp), Some(sd)) = (step_p, step_d) else {
            status = SolveStatus::NumericalFailure;
            break;
        };
        // conservative steps far from the solution, aggressive close to it
        let damping = if gap_rel > 1e-4 {
            config.step_damping.min(0.9)
        } else {
            config.step_damping
        };
        let alpha_p = (damping * sp).min(1.0);
        let alpha_d = (damping * sd).min(1.0);
        if alpha_p < 1e-12 && alpha_d < 1e-12 {
            status = SolveStatus::NumericalFailure;
            break;
        }

        for k in 0..m {
            y[k] += alpha_p * dy[k];
        }
        for (bi, b) in blocks.iter_mut().enumerate() {
            b.x += &dx[bi] * alpha_p;
            b.z += &dz[bi] * alpha_d;
        }
    }

    let (y_best, z_best, metrics) = match best_snapshot {
        Some(snap) => snap,
        None => (
            y,
            blocks.iter().map(|b| b.z.clone()).collect(),
            (f64::NAN, f64::NAN, f64::NAN),
        ),
    };
    // a stalled run still counts as optimal when the best iterate meets the
    // requested tolerances
    if status != SolveStatus::Optimal
        && status != SolveStatus::Infeasible
        && metrics.0 <= config.gap_tol
        && metrics.1 <= config.feasibility_tol
        && metrics.2 <= config.feasibility_tol
    {
        status = SolveStatus::Optimal;
    }
    finish_solution(red, &y_best, &z_best, status, iterations, metrics)
}

fn robust_cholesky(m: &DMatrix<f64>) -> Option<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
    let n = m.nrows();
    let mean_diag = (0..n).map(|i| m[(i, i)].abs()).sum::<f64>() / n.max(1) as f64;
    for attempt in 0..4 {
        let ridge = if attempt == 0 {
            0.0
        } else {
            mean_diag * 1e-14 * 10f64.powi(attempt * 2)
        };
        let mut reg = m.clone();
        for i in 0..n {
            reg[(i, i)] += ridge;
        }
        if let Some(c) = reg.cholesky() {
            return Some(c);
        }
    }
    None
}

fn step_length(blocks: &[BlockState], dirs: &[DMatrix<f64>], primal: bool) -> Option<f64> {
    let mut alpha = f64::INFINITY;
    for (bi, b) in blocks.iter().enumerate() {
        let base = if primal { &b.x } else { &b.z };
        let a = max_step(base, &dirs[bi])?;
        alpha = alpha.min(a);
    }
    Some(alpha)
}

fn failed_solution(status: SolveStatus, _m: usize, red: &Reduced) -> Solution {
    Solution {
        status,
        primal_value: f64::NAN,
        dual_value: f64::NAN,
        gap: f64::NAN,
        iterations: 0,
        primal_residual: f64::NAN,
        dual_residual: f64::NAN,
        block_min_eigs: Vec::new(),
        y: vec![0.0; red.base.len()],
    }
}

fn finish_solution(
    red: &Reduced,
    z_free: &[f64],
    dual_blocks: &[DMatrix<f64>],
    status: SolveStatus,
    iterations: usize,
    metrics: (f64, f64, f64),
) -> Solution {
    // expand back to the full variable space
    let mut y_full = red.base.clone();
    for (v, combo) in red.expand.iter().enumerate() {
        for &(fi, w) in combo {
            y_full[v] += w * z_free[fi];
        }
    }
    let pobj = red
        .c
        .iter()
        .zip(z_free)
        .map(|(c, v)| c * v)
        .sum::<f64>()
        + red.c0;
    let dobj = red
        .blocks
        .iter()
        .zip(dual_blocks)
        .map(|(b, z)| sparse_inner(&b.g0, &b.lift(z)))
        .sum::<f64>()
        + red.c0;
    let mut block_min_eigs = Vec::with_capacity(red.blocks.len());
    for b in red.blocks.iter() {
        block_min_eigs.push(sym_eigen_min(&b.compress(&b.ambient(z_free))));
    }
    Solution {
        status,
        primal_value: pobj,
        dual_value: dobj,
        gap: (pobj - dobj).abs(),
        iterations,
        primal_residual: metrics.1,
        dual_residual: metrics.2,
        block_min_eigs,
        y: y_full,
    }
}

/// Solves a moment-form SDP.
pub fn solve(problem: &SdpProblem, config: &SolverConfig) -> Result<Solution, SolverError> {
    if problem.blocks.is_empty() {
        return Err(SolverError::Malformed("problem has no PSD block".into()));
    }
    for &(v, c) in &problem.objective.terms {
        if v >= problem.num_vars || !c.is_finite() {
            return Err(SolverError::Malformed(format!(
                "objective term ({v}, {c}) invalid"
            )));
        }
    }
    for (expr, rhs) in &problem.equalities {
        if !rhs.is_finite() || expr.terms.iter().any(|(_, c)| !c.is_finite()) {
            return Err(SolverError::Malformed("non-finite equality".into()));
        }
    }

    // canonical sense: maximize
    let flip = problem.sense == Sense::Minimize;
    let mut canon = problem.clone();
    if flip {
        canon.objective.constant = -canon.objective.constant;
        for t in canon.objective.terms.iter_mut() {
            t.1 = -t.1;
        }
    }

    let reduced = match eliminate(&canon)? {
        Some(r) => r,
        None => {
            return Ok(Solution {
                status: SolveStatus::Infeasible,
                primal_value: f64::NAN,
                dual_value: f64::NAN,
                gap: f64::NAN,
                iterations: 0,
                primal_residual: f64::NAN,
                dual_residual: f64::NAN,
                block_min_eigs: Vec::new(),
                y: vec![0.0; problem.num_vars],
            })
        }
    };

    let mut sol = solve_reduced(&reduced, config);
    if flip {
        sol.primal_value = -sol.primal_value;
        sol.dual_value = -sol.dual_value;
    }
    Ok(sol)
}

/// Plain-text problem format shared with the relaxation builder:
///
/// ```text
/// # dicert-sdp 1
/// sense max|min
/// vars <m>
/// objconst <v>
/// obj <var> <coef>
/// eq <rhs> <var>:<coef> ...
/// block <dim>
/// ent <block> <var> <i> <j> <coef>
/// ```
pub fn write_problem_text(problem: &SdpProblem) -> String {
    let mut out = String::from("# dicert-sdp 1\n");
    out.push_str(match problem.sense {
        Sense::Maximize => "sense max\n",
        Sense::Minimize => "sense min\n",
    });
    out.push_str(&format!("vars {}\n", problem.num_vars));
    if problem.objective.constant != 0.0 {
        out.push_str(&format!("objconst {:.17e}\n", problem.objective.constant));
    }
    for &(v, c) in &problem.objective.terms {
        out.push_str(&format!("obj {v} {c:.17e}\n"));
    }
    for (expr, rhs) in &problem.equalities {
        out.push_str(&format!("eq {:.17e}", rhs - expr.constant));
        for &(v, c) in &expr.terms {
            out.push_str(&format!(" {v}:{c:.17e}"));
        }
        out.push('\n');
    }
    for block in &problem.blocks {
        out.push_str(&format!("block {}\n", block.dim));
    }
    for (bi, block) in problem.blocks.iter().enumerate() {
        for (v, entries) in &block.entries {
            for &(i, j, val) in entries {
                out.push_str(&format!("ent {bi} {v} {i} {j} {val:.17e}\n"));
            }
        }
        if let Some(p) = &block.projector {
            out.push_str(&format!("projdim {bi} {}\n", p.ncols()));
            for i in 0..p.nrows() {
                for j in 0..p.ncols() {
                    if p[(i, j)] != 0.0 {
                        out.push_str(&format!("proj {bi} {i} {j} {:.17e}\n", p[(i, j)]));
                    }
                }
            }
        }
    }
    out
}

pub fn parse_problem_text(text: &str) -> Result<SdpProblem, SolverError> {
    let mut sense = Sense::Maximize;
    let mut num_vars = 0usize;
    let mut objective = LinearExpr::new();
    let mut equalities: Vec<(LinearExpr, f64)> = Vec::new();
    let mut dims: Vec<usize> = Vec::new();
    let mut entries: Vec<HashMap<usize, Vec<(usize, usize, f64)>>> = Vec::new();
    let mut projdims: Vec<Option<usize>> = Vec::new();
    let mut projs: Vec<Vec<(usize, usize, f64)>> = Vec::new();

    let bad = |msg: &str, line: &str| SolverError::Parse(format!("{msg}: {line}"));

    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split_whitespace();
        match parts.next().unwrap() {
            "sense" => {
                sense = match parts.next() {
                    Some("max") => Sense::Maximize,
                    Some("min") => Sense::Minimize,
                    _ => return Err(bad("bad sense", line)),
                };
            }
            "vars" => {
                num_vars = parts
                    .next()
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| bad("bad vars", line))?;
            }
            "objconst" => {
                objective.constant = parts
                    .next()
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| bad("bad objconst", line))?;
            }
            "obj" => {
                let v: usize = parts
                    .next()
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| bad("bad obj var", line))?;
                let c: f64 = parts
                    .next()
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| bad("bad obj coef", line))?;
                objective.push(v, c);
            }
            "eq" => {
                let rhs: f64 = parts
                    .next()
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| bad("bad eq rhs", line))?;
                let mut expr = LinearExpr::new();
                for term in parts {
                    let (v, c) = term
                        .split_once(':')
                        .ok_or_else(|| bad("bad eq term", line))?;
                    let v: usize = v.parse().map_err(|_| bad("bad eq var", line))?;
                    let c: f64 = c.parse().map_err(|_| bad("bad eq coef", line))?;
                    expr.push(v, c);
                }
                equalities.push((expr, rhs));
            }
            "block" => {
                let dim: usize = parts
                    .next()
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| bad("bad block dim", line))?;
                dims.push(dim);
                entries.push(HashMap::new());
                projdims.push(None);
                projs.push(Vec::new());
            }
            "projdim" => {
                let bi: usize = parts
                    .next()
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| bad("bad projdim block", line))?;
                let r: usize = parts
                    .next()
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| bad("bad projdim r", line))?;
                if bi >= projdims.len() {
                    return Err(bad("projdim references unknown block", line));
                }
                projdims[bi] = Some(r);
            }
            "proj" => {
                let bi: usize = parts
                    .next()
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| bad("bad proj block", line))?;
                let i: usize = parts
                    .next()
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| bad("bad proj i", line))?;
                let j: usize = parts
                    .next()
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| bad("bad proj j", line))?;
                let val: f64 = parts
                    .next()
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| bad("bad proj val", line))?;
                if bi >= projs.len() {
                    return Err(bad("proj references unknown block", line));
                }
                projs[bi].push((i, j, val));
            }
            "ent" => {
                let bi: usize = parts
                    .next()
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| bad("bad ent block", line))?;
                let v: usize = parts
                    .next()
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| bad("bad ent var", line))?;
                let i: usize = parts
                    .next()
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| bad("bad ent i", line))?;
                let j: usize = parts
                    .next()
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| bad("bad ent j", line))?;
                let val: f64 = parts
                    .next()
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| bad("bad ent val", line))?;
                if bi >= entries.len() {
                    return Err(bad("entry references unknown block", line));
                }
                entries[bi].entry(v).or_default().push((i, j, val));
            }
            other => return Err(SolverError::Parse(format!("unknown directive {other}"))),
        }
    }

    let blocks = dims
        .into_iter()
        .zip(entries)
        .zip(projdims.into_iter().zip(projs))
        .map(|((dim, map), (projdim, proj_entries))| {
            let mut list: Vec<(usize, Vec<(usize, usize, f64)>)> = map.into_iter().collect();
            list.sort_by_key(|(v, _)| *v);
            let mut block = PsdBlock::full(dim, list);
            if let Some(r) = projdim {
                let mut p = DMatrix::<f64>::zeros(dim, r);
                for (i, j, v) in proj_entries {
                    p[(i, j)] = v;
                }
                block.projector = Some(p);
            }
            block
        })
        .collect();

    Ok(SdpProblem {
        num_vars,
        sense,
        objective,
        equalities,
        blocks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn eig_problem() -> SdpProblem {
        // max x11 - x22 s.t. x11 + x22 = 1, X >= 0 (2x2 symmetric)
        // vars: (x11, x12, x22)
        let mut objective = LinearExpr::new();
        objective.push(0, 1.0);
        objective.push(2, -1.0);
        let mut trace = LinearExpr::new();
        trace.push(0, 1.0);
        trace.push(2, 1.0);
        SdpProblem {
            num_vars: 3,
            sense: Sense::Maximize,
            objective,
            equalities: vec![(trace, 1.0)],
            blocks: vec![PsdBlock::full(
                2,
                vec![
                    (0, vec![(0, 0, 1.0)]),
                    (1, vec![(0, 1, 1.0)]),
                    (2, vec![(1, 1, 1.0)]),
                ],
            )],
        }
    }

    #[test]
    fn eigenvalue_problem() {
        let sol = solve(&eig_problem(), &SolverConfig::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal, "{sol:?}");
        assert!((sol.primal_value - 1.0).abs() < 1e-7, "{}", sol.primal_value);
        assert!((sol.dual_value - 1.0).abs() < 1e-6);
        assert!(sol.gap < 1e-6);
    }

    #[test]
    fn minimize_flips_bounds() {
        let mut p = eig_problem();
        p.sense = Sense::Minimize;
        let sol = solve(&p, &SolverConfig::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert!((sol.primal_value + 1.0).abs() < 1e-7);
        // for minimization the matrix-side bound is below the optimum
        assert!(sol.dual_value <= sol.primal_value + 1e-9);
    }

    #[test]
    fn infeasible_equalities_detected() {
        let mut p = eig_problem();
        let mut dup = LinearExpr::new();
        dup.push(0, 1.0);
        dup.push(2, 1.0);
        p.equalities.push((dup, 2.0)); // conflicts with trace = 1
        let sol = solve(&p, &SolverConfig::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Infeasible);
    }

    #[test]
    fn psd_infeasible_detected() {
        // x11 = -1 with X = [x11] >= 0 is infeasible
        let mut pin = LinearExpr::new();
        pin.push(0, 1.0);
        let p = SdpProblem {
            num_vars: 1,
            sense: Sense::Maximize,
            objective: LinearExpr::new(),
            equalities: vec![(pin, -1.0)],
            blocks: vec![PsdBlock::full(1, vec![(0, vec![(0, 0, 1.0)])])],
        };
        let sol = solve(&p, &SolverConfig::default()).unwrap();
        // the whole LMI is pinned; the solver sees a constant negative block
        assert_ne!(sol.status, SolveStatus::Optimal);
    }

    /// Builds a random problem with a planted primal-dual optimal pair and
    /// returns it with the known optimal value.
    fn planted_problem<R: Rng>(rng: &mut R, n: usize, m: usize) -> (SdpProblem, f64) {
        // random orthogonal basis via Gram-Schmidt on a random matrix
        let mut q = DMatrix::<f64>::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        for j in 0..n {
            for k in 0..j {
                let proj = q.column(j).dot(&q.column(k));
                let col_k = q.column(k).clone_owned();
                let mut col_j = q.column_mut(j);
                col_j -= col_k * proj;
            }
            let norm = q.column(j).norm();
            q.column_mut(j).scale_mut(1.0 / norm);
        }
        let r = n / 2; // rank of the planted slack
        // S* PSD rank n-r on columns r.., Z* PSD rank r on columns ..r
        let mut s_star = DMatrix::<f64>::zeros(n, n);
        for k in r..n {
            let lam = rng.gen_range(0.5..2.0);
            let col = q.column(k);
            s_star += DMatrix::from_fn(n, n, |i, j| lam * col[i] * col[j]);
        }
        let mut z_star = DMatrix::<f64>::zeros(n, n);
        for k in 0..r {
            let lam = rng.gen_range(0.5..2.0);
            let col = q.column(k);
            z_star += DMatrix::from_fn(n, n, |i, j| lam * col[i] * col[j]);
        }
        // random symmetric G_k, random y*, G_0 = S* - sum y*_k G_k
        let mut gs: Vec<DMatrix<f64>> = Vec::with_capacity(m);
        for _ in 0..m {
            let a = DMatrix::<f64>::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
            gs.push((&a + a.transpose()) * 0.5);
        }
        let y_star: Vec<f64> = (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut g0 = s_star.clone();
        for (k, g) in gs.iter().enumerate() {
            g0 -= g * y_star[k];
        }
        // objective c_k = -<G_k, Z*> makes (y*, Z*) a KKT pair
        let c: Vec<f64> = gs.iter().map(|g| -(g * &z_star).trace()).collect();
        let opt: f64 = c.iter().zip(&y_star).map(|(a, b)| a * b).sum();

        // encode: var 0 is pinned to 1 and carries G_0
        let mut objective = LinearExpr::new();
        for (k, &ck) in c.iter().enumerate() {
            objective.push(k + 1, ck);
        }
        let mut pin = LinearExpr::new();
        pin.push(0, 1.0);
        let mut entries: Vec<(usize, Vec<(usize, usize, f64)>)> = Vec::new();
        let to_entries = |g: &DMatrix<f64>| {
            let mut list = Vec::new();
            for i in 0..n {
                for j in i..n {
                    if g[(i, j)].abs() > 0.0 {
                        list.push((i, j, g[(i, j)]));
                    }
                }
            }
            list
        };
        entries.push((0, to_entries(&g0)));
        for (k, g) in gs.iter().enumerate() {
            entries.push((k + 1, to_entries(g)));
        }
        (
            SdpProblem {
                num_vars: m + 1,
                sense: Sense::Maximize,
                objective,
                equalities: vec![(pin, 1.0)],
                blocks: vec![PsdBlock::full(n, entries)],
            },
            opt,
        )
    }

    #[test]
    fn planted_solutions_recovered() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(123);
        let config = SolverConfig::default();
        for trial in 0..10 {
            let n = rng.gen_range(3..8);
            let m = rng.gen_range(2..6);
            let (p, opt) = planted_problem(&mut rng, n, m);
            let sol = solve(&p, &config).unwrap();
            assert!(
                (sol.primal_value - opt).abs() < 1e-6,
                "trial {trial}: got {} want {opt} ({sol:?})",
                sol.primal_value
            );
            assert!(sol.gap < 1e-7, "trial {trial}: gap {}", sol.gap);
            assert!(sol.dual_residual < 1e-6, "trial {trial}: {sol:?}");
        }
    }

    #[test]
    fn deterministic_given_same_input() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let (p, _) = planted_problem(&mut rng, 5, 3);
        let a = solve(&p, &SolverConfig::default()).unwrap();
        let b = solve(&p, &SolverConfig::default()).unwrap();
        assert_eq!(a.iterations, b.iterations);
        assert_eq!(a.primal_value.to_bits(), b.primal_value.to_bits());
        assert_eq!(a.dual_value.to_bits(), b.dual_value.to_bits());
    }

    #[test]
    fn weak_duality_on_planted_problems() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(77);
        for _ in 0..5 {
            let (p, _) = planted_problem(&mut rng, 6, 4);
            let sol = solve(&p, &SolverConfig::default()).unwrap();
            assert!(sol.primal_value <= sol.dual_value + 1e-7);
            for &e in &sol.block_min_eigs {
                // zero eigenvalues of the planted boundary solution carry
                // rounding at the problem scale
                assert!(e >= -1e-8, "block eigenvalue {e}");
            }
        }
    }

    #[test]
    fn problem_text_round_trip() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let (p, opt) = planted_problem(&mut rng, 4, 3);
        let text = write_problem_text(&p);
        let back = parse_problem_text(&text).unwrap();
        assert_eq!(back.num_vars, p.num_vars);
        let sol = solve(&back, &SolverConfig::default()).unwrap();
        assert!((sol.primal_value - opt).abs() < 1e-6);
    }
}
