use dicert::ncpoly::{canonicalize, OpSymbol, Party, Reduced};
use dicert::npa::{
    assemble_guessing_sdp, exact_moment_assignment, exact_protocol_model, assignment_to_vars,
    AssemblyOptions, ConstraintMode, ConstraintSet, EveModel,
};
use dicert::certify::default_guessing_extras;
use dicert::scenario::{protocol_correlations, triangular_povm, NoiseModel};
use dicert::tsirelson::derive_coefficients;
use nalgebra::{DMatrix, DVector};
use std::f64::consts::PI;

fn main() {
    let tri = triangular_povm();
    let coeffs = derive_coefficients(PI / 2.0, &tri).unwrap();
    let table = protocol_correlations(PI / 2.0, PI / 2.0, NoiseModel::ideal(), &tri).unwrap();
    let cs = ConstraintSet::from_table(coeffs, &table, ConstraintMode::BoundaryOnly).unwrap();
    let mut opts = AssemblyOptions::default();
    opts.extras = default_guessing_extras(3, 3);
    let asm = assemble_guessing_sdp(&cs, 3, &opts).unwrap();
    let mm = &asm.moment_matrix;
    let n = mm.dim();
    println!("basis {n}, classes {}, vars {}", mm.num_classes(), asm.layout.num_vars);

    // exact model moment matrix
    let (rep, state) = exact_protocol_model(PI / 2.0, &tri, &EveModel::TrivialProjective { d_e: 3 }).unwrap();
    let assign = exact_moment_assignment(mm, &rep, &state);
    let y = assignment_to_vars(mm, &asm.layout, &assign);
    let block = &asm.problem.blocks[0];
    let mut mat = DMatrix::<f64>::zeros(n, n);
    for (var, entries) in &block.entries {
        for &(i, j, v) in entries {
            mat[(i, j)] += v * y[*var];
            if i != j { mat[(j, i)] += v * y[*var]; }
        }
    }
    // analytic q1 = A1 - (B0-B1)/sqrt2 as basis coefficients
    let word = |sym: OpSymbol| match canonicalize(&[sym]) {
        Reduced::Word(w) => w,
        Reduced::Zero => unreachable!(),
    };
    let idx = |sym: OpSymbol| mm.basis.iter().position(|w| *w == word(sym)).unwrap();
    let a1 = idx(OpSymbol::projector(Party::Alice, 0, 0));
    let a3 = idx(OpSymbol::projector(Party::Alice, 1, 0));
    let b0 = idx(OpSymbol::projector(Party::Bob, 0, 0));
    let b1 = idx(OpSymbol::projector(Party::Bob, 1, 0));
    let s2 = 2f64.sqrt();
    let mut q1 = DVector::<f64>::zeros(n);
    q1[0] = -1.0; q1[a1] = 2.0; q1[b0] = -s2; q1[b1] = s2;
    let mut q2 = DVector::<f64>::zeros(n);
    q2[0] = -1.0 + s2; q2[a3] = 2.0; q2[b0] = -s2; q2[b1] = -s2;
    // hmm: q2 = A3 - (B0+B1)/sqrt2 = 2P3 - 1 - (2Q0-1+2Q1-1)/sqrt2
    q2[0] = -1.0 + 2.0 / s2;
    println!("|M q1| = {:.3e}, |M q2| = {:.3e}", (&mat * &q1).amax(), (&mat * &q2).amax());
    // S-square nulls: Lambda_b Pi_b
    // Lambda_b = (1 - n1 A1 - n3 A3)/2; q_b = Lambda_b * Pi_b over basis words
    // Pi_b for b<2 are single words; words A*Pi also in basis
    let povm_proj = |b: u8| idx(OpSymbol::projector(Party::Bob, 2, b));
    let pair = |p: OpSymbol, q: OpSymbol| {
        let w = match canonicalize(&[p, q]) { Reduced::Word(w) => w, _ => unreachable!() };
        mm.basis.iter().position(|x| *x == w).unwrap()
    };
    for b in 0..2u8 {
        let nvec = cs.coefficients.vectors[b as usize];
        let mut qb = DVector::<f64>::zeros(n);
        // (1 - n1(2P1-1) - n3(2P3-1))/2 * Pi_b
        let c0 = (1.0 + nvec[0] + nvec[2]) / 2.0;
        qb[povm_proj(b)] = c0;
        qb[pair(OpSymbol::projector(Party::Alice, 0, 0), OpSymbol::projector(Party::Bob, 2, b))] = -nvec[0];
        qb[pair(OpSymbol::projector(Party::Alice, 1, 0), OpSymbol::projector(Party::Bob, 2, b))] = -nvec[2];
        println!("|M q_S{b}| = {:.3e}", (&mat * &qb).amax());
    }

    // pipeline-style candidates: exact null space, restricted diagonalization
    let eig = mat.clone().symmetric_eigen();
    let maxe = eig.eigenvalues.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    let nulls: Vec<usize> = (0..n).filter(|&l| eig.eigenvalues[l].abs() <= 1e-9 * maxe).collect();
    println!("exact null dim {} of {n} (max eig {maxe:.2e})", nulls.len());

    // solve pass-0 to get the iterate
    let sol = dicert::sdp::solve(&asm.problem, &dicert::sdp::SolverConfig::default()).unwrap();
    let mut msolved = DMatrix::<f64>::zeros(n, n);
    for (var, entries) in &block.entries {
        for &(i, j, v) in entries {
            msolved[(i, j)] += v * sol.y[*var];
            if i != j { msolved[(j, i)] += v * sol.y[*var]; }
        }
    }
    let kn = nulls.len();
    let mut nb = DMatrix::<f64>::zeros(n, kn);
    for (c, &l) in nulls.iter().enumerate() { nb.set_column(c, &eig.eigenvectors.column(l)); }
    let restricted = nb.transpose() * &msolved * &nb;
    let reig = restricted.symmetric_eigen();
    let mut revals: Vec<f64> = reig.eigenvalues.iter().cloned().collect();
    revals.sort_by(|a, b| a.partial_cmp(b).unwrap());
    println!("restricted solved-eigs: {:?}", &revals[..revals.len().min(14)]);
}
// second entry point merged into main via env flag
