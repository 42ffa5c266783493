//! Moment-matrix relaxations of the guessing-probability and conditional
//! entropy programs.
//!
//! A monomial basis of operator words is turned into a moment matrix whose
//! entry (u, v) is the expectation of canonicalize(u^dagger v); repeated
//! canonical words share one variable, hermiticity ties a word to its
//! adjoint, and the positive semidefiniteness of the matrix is the only
//! nonlinear constraint. Experimental data enters as linear equalities on
//! the moment variables.

use crate::ncpoly::{
    canonicalize, monomial_basis, NcPolynomial, OpSymbol, Party, Reduced, Representation, Word,
};
use crate::qubit::{RankOnePOVM, C64};
use crate::scenario::CorrelationTable;
use crate::sdp::{LinearExpr, PsdBlock, SdpProblem, Sense};
use crate::tsirelson::BoundaryCoefficients;
use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use std::collections::HashMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NpaError {
    #[error("monomial outside the moment matrix at this level: {0} (raise the level or add extras)")]
    LevelTooLow(String),
    #[error("incomplete data: {0}")]
    IncompleteData(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

/// How complex moment variables are realized over the reals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub enum Embedding {
    /// One real variable per conjugation class; imaginary parts pinned to
    /// zero. Exact for problems whose objective and constraints have real
    /// coefficients: conjugating any feasible model gives another feasible
    /// model with the same value, so some optimum has real moments.
    #[default]
    Real,
    /// Doubled real symmetric embedding [[Re, -Im], [Im, Re]] with explicit
    /// imaginary-part variables.
    Doubled,
}

/// One moment-matrix entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Entry {
    Zero,
    /// Variable for the conjugation class, with orientation: `conj` set
    /// means the entry equals the conjugate of the class representative.
    Var { class: usize, conj: bool },
}

/// Moment matrix over a monomial basis: hermitian by construction, with
/// entries identified whenever canonical words coincide.
#[derive(Debug, Clone)]
pub struct MomentMatrix {
    pub basis: Vec<Word>,
    /// Representative word per variable class (the smaller of w, w^dagger).
    pub classes: Vec<Word>,
    class_of: HashMap<Word, (usize, bool)>,
    self_adjoint: Vec<bool>,
    /// Row-major n x n entries.
    entries: Vec<Entry>,
}

impl MomentMatrix {
    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn entry(&self, i: usize, j: usize) -> Entry {
        self.entries[i * self.dim() + j]
    }

    pub fn is_self_adjoint_class(&self, class: usize) -> bool {
        self.self_adjoint[class]
    }

    /// Looks up the variable class of a canonical word.
    pub fn class_of(&self, w: &Word) -> Option<(usize, bool)> {
        self.class_of.get(w).copied()
    }

    /// The class holding the identity word (normalization target).
    pub fn identity_class(&self) -> usize {
        self.class_of[&Word::identity()].0
    }
}

/// Builds the moment matrix for a canonical basis. The substitution rules
/// (projector algebra, cross-party commutation) live in the canonicalizer.
pub fn build_moment_matrix(basis: &[Word]) -> MomentMatrix {
    let n = basis.len();
    let mut classes: Vec<Word> = Vec::new();
    let mut self_adjoint: Vec<bool> = Vec::new();
    let mut class_of: HashMap<Word, (usize, bool)> = HashMap::new();
    let mut entries = vec![Entry::Zero; n * n];

    let intern = |w: Word, class_of: &mut HashMap<Word, (usize, bool)>,
                      classes: &mut Vec<Word>,
                      self_adjoint: &mut Vec<bool>|
     -> (usize, bool) {
        if let Some(&hit) = class_of.get(&w) {
            return hit;
        }
        let adj = w.adjoint();
        let selfadj = adj == w;
        let rep = if adj < w { adj.clone() } else { w.clone() };
        let id = classes.len();
        classes.push(rep.clone());
        self_adjoint.push(selfadj);
        if selfadj {
            class_of.insert(rep, (id, false));
        } else {
            let other = if rep == w { adj } else { w };
            class_of.insert(rep, (id, false));
            class_of.insert(other, (id, true));
        }
        (id, true)
    };
    // make the identity the first class
    intern(
        Word::identity(),
        &mut class_of,
        &mut classes,
        &mut self_adjoint,
    );

    for i in 0..n {
        let ui_adj = basis[i].adjoint();
        for j in i..n {
            let mut syms = Vec::with_capacity(ui_adj.len() + basis[j].len());
            syms.extend_from_slice(ui_adj.symbols());
            syms.extend_from_slice(basis[j].symbols());
            let entry = match canonicalize(&syms) {
                Reduced::Zero => Entry::Zero,
                Reduced::Word(w) => {
                    intern(w.clone(), &mut class_of, &mut classes, &mut self_adjoint);
                    let (class, conj) = class_of[&w];
                    Entry::Var { class, conj }
                }
            };
            entries[i * n + j] = entry;
            if i != j {
                // hermitian mirror
                entries[j * n + i] = match entry {
                    Entry::Zero => Entry::Zero,
                    Entry::Var { class, conj } => Entry::Var { class, conj: !conj },
                };
            }
        }
    }

    MomentMatrix {
        basis: basis.to_vec(),
        classes,
        class_of,
        self_adjoint,
        entries,
    }
}

/// Mapping from moment classes to real SDP variables.
#[derive(Debug, Clone)]
pub struct VarLayout {
    pub embedding: Embedding,
    pub num_vars: usize,
    /// class -> imaginary-part variable (only in the doubled embedding, and
    /// only for classes that are not self-adjoint).
    imag: Vec<Option<usize>>,
}

impl VarLayout {
    pub fn new(mm: &MomentMatrix, embedding: Embedding) -> Self {
        let k = mm.num_classes();
        let mut imag = vec![None; k];
        let mut next = k;
        if embedding == Embedding::Doubled {
            for c in 0..k {
                if !mm.is_self_adjoint_class(c) {
                    imag[c] = Some(next);
                    next += 1;
                }
            }
        }
        Self {
            embedding,
            num_vars: next,
            imag,
        }
    }

    pub fn re_var(&self, class: usize) -> usize {
        class
    }

    pub fn im_var(&self, class: usize) -> Option<usize> {
        self.imag[class]
    }
}

/// The PSD block realizing the moment matrix over real variables.
pub fn moment_psd_block(mm: &MomentMatrix, layout: &VarLayout) -> PsdBlock {
    let n = mm.dim();
    let mut per_var: HashMap<usize, Vec<(usize, usize, f64)>> = HashMap::new();
    match layout.embedding {
        Embedding::Real => {
            for i in 0..n {
                for j in i..n {
                    if let Entry::Var { class, .. } = mm.entry(i, j) {
                        per_var
                            .entry(layout.re_var(class))
                            .or_default()
                            .push((i, j, 1.0));
                    }
                }
            }
            let mut entries: Vec<(usize, Vec<(usize, usize, f64)>)> =
                per_var.into_iter().collect();
            entries.sort_by_key(|(v, _)| *v);
            PsdBlock::full(n, entries)
        }
        Embedding::Doubled => {
            for i in 0..n {
                for j in i..n {
                    if let Entry::Var { class, conj } = mm.entry(i, j) {
                        let re = layout.re_var(class);
                        let e = per_var.entry(re).or_default();
                        e.push((i, j, 1.0));
                        e.push((n + i, n + j, 1.0));
                        if let Some(im) = layout.im_var(class) {
                            let s = if conj { -1.0 } else { 1.0 };
                            // M[i,j] = re + i s im: X[i, n+j] = -s im,
                            // X[j, n+i] = +s im (stored upper-triangular)
                            let e = per_var.entry(im).or_default();
                            e.push((i, n + j, -s));
                            e.push((j, n + i, s));
                        }
                    }
                }
            }
            let mut entries: Vec<(usize, Vec<(usize, usize, f64)>)> =
                per_var.into_iter().collect();
            entries.sort_by_key(|(v, _)| *v);
            PsdBlock::full(2 * n, entries)
        }
    }
}

/// Real-part linear functional of a polynomial over the moment variables.
/// Hermitian polynomials give exact expectation functionals.
pub fn expectation_functional(
    poly: &NcPolynomial,
    mm: &MomentMatrix,
    layout: &VarLayout,
) -> Result<LinearExpr, NpaError> {
    let mut expr = LinearExpr::new();
    for (w, c) in poly.terms() {
        let (class, conj) = mm
            .class_of(w)
            .ok_or_else(|| NpaError::LevelTooLow(format!("{w:?}")))?;
        // <w> = re_class + i s im_class with s = -1 when conjugated
        expr.push(layout.re_var(class), c.re);
        if let Some(im) = layout.im_var(class) {
            let s = if conj { -1.0 } else { 1.0 };
            expr.push(im, -c.im * s);
        }
    }
    expr.compress();
    Ok(expr)
}

/// Measurement scenario of the certification protocol: two dichotomic
/// inputs for Alice, two dichotomic inputs plus the d-outcome POVM for Bob.
#[derive(Debug, Clone)]
pub struct ProtocolScenario {
    pub d: usize,
}

pub const ALICE_X1: u8 = 0;
pub const ALICE_X3: u8 = 1;
pub const BOB_B0: u8 = 0;
pub const BOB_B1: u8 = 1;
pub const BOB_POVM: u8 = 2;

impl ProtocolScenario {
    pub fn new(d: usize) -> Self {
        assert!(d >= 2);
        Self { d }
    }

    /// Projector symbols for the commuting-parties part of the hierarchy:
    /// one independent projector per dichotomic input, d - 1 for the POVM.
    pub fn projector_symbols(&self) -> Vec<OpSymbol> {
        let mut syms = vec![
            OpSymbol::projector(Party::Alice, ALICE_X1, 0),
            OpSymbol::projector(Party::Alice, ALICE_X3, 0),
            OpSymbol::projector(Party::Bob, BOB_B0, 0),
            OpSymbol::projector(Party::Bob, BOB_B1, 0),
        ];
        for b in 0..(self.d - 1) as u8 {
            syms.push(OpSymbol::projector(Party::Bob, BOB_POVM, b));
        }
        syms
    }

    fn outcomes(party: Party, input: u8, d: usize) -> usize {
        match (party, input) {
            (Party::Bob, BOB_POVM) => d,
            _ => 2,
        }
    }

    /// Projector polynomial; the last outcome is eliminated through
    /// completeness.
    pub fn projector(&self, party: Party, input: u8, outcome: usize) -> NcPolynomial {
        let n = Self::outcomes(party, input, self.d);
        assert!(outcome < n, "outcome out of range");
        if outcome + 1 < n {
            NcPolynomial::from_symbol(OpSymbol::projector(party, input, outcome as u8))
        } else {
            let mut p = NcPolynomial::one();
            for o in 0..(n - 1) as u8 {
                p = p.sub(&NcPolynomial::from_symbol(OpSymbol::projector(
                    party, input, o,
                )));
            }
            p
        }
    }

    /// Dichotomic observable 2 P_0 - 1.
    pub fn observable(&self, party: Party, input: u8) -> NcPolynomial {
        self.projector(party, input, 0)
            .scale(C64::new(2.0, 0.0))
            .sub(&NcPolynomial::one())
    }

    /// CHSH combination <A_3 B_0> + <A_3 B_1> + <A_1 B_0> - <A_1 B_1>.
    pub fn chsh(&self) -> NcPolynomial {
        let a1 = self.observable(Party::Alice, ALICE_X1);
        let a3 = self.observable(Party::Alice, ALICE_X3);
        let b0 = self.observable(Party::Bob, BOB_B0);
        let b1 = self.observable(Party::Bob, BOB_B1);
        a3.mul(&b0)
            .add(&a3.mul(&b1))
            .add(&a1.mul(&b0))
            .sub(&a1.mul(&b1))
    }

    /// The boundary operator sum_b (n_1b A_1 + n_3b A_3) Pi_b. Requires
    /// every n_2b to vanish: the scenario carries no sigma_2 input.
    pub fn bell_operator(&self, coeffs: &BoundaryCoefficients) -> Result<NcPolynomial, NpaError> {
        if coeffs.d() != self.d {
            return Err(NpaError::InvalidInput(format!(
                "coefficient count {} does not match scenario outcomes {}",
                coeffs.d(),
                self.d
            )));
        }
        if !coeffs.is_equatorial(1e-12) {
            return Err(NpaError::IncompleteData(
                "boundary operator has sigma_2 components; add a sigma_2 input or flip \
                 the branch"
                    .into(),
            ));
        }
        let a1 = self.observable(Party::Alice, ALICE_X1);
        let a3 = self.observable(Party::Alice, ALICE_X3);
        let mut s = NcPolynomial::zero();
        for (b, n) in coeffs.vectors.iter().enumerate() {
            let pb = self.projector(Party::Bob, BOB_POVM, b);
            if n[0] != 0.0 {
                s = s.add(&a1.mul(&pb).scale(C64::new(n[0], 0.0)));
            }
            if n[2] != 0.0 {
                s = s.add(&a3.mul(&pb).scale(C64::new(n[2], 0.0)));
            }
        }
        Ok(s)
    }
}

/// Which experimental quantities are pinned in the relaxation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ConstraintMode {
    /// Tilted-CHSH self-test (CHSH combination and <A_3>) plus the boundary
    /// value <S>: the POVM statistics enter only through the boundary.
    BoundaryOnly,
    /// Boundary mode plus Bob's POVM outcome marginals.
    Standard,
    /// Self-test values plus the entire joint table, including the
    /// Alice x POVM block and the projective blocks.
    FullCorrelations,
}

impl ConstraintMode {
    pub fn label(&self) -> &'static str {
        match self {
            ConstraintMode::BoundaryOnly => "boundary-only",
            ConstraintMode::Standard => "boundary+chsh+marginal",
            ConstraintMode::FullCorrelations => "full-correlations",
        }
    }
}

/// Expectation targets pinned in the SDP.
#[derive(Debug, Clone)]
pub struct ConstraintSet {
    pub coefficients: BoundaryCoefficients,
    pub mode: ConstraintMode,
    pub s_chsh: Option<f64>,
    pub a3: Option<f64>,
    pub s: Option<f64>,
    /// p(b | y = 2) per outcome.
    pub bob_marginals: Option<Vec<f64>>,
    /// p(a, b | x, y = 2), indexed [x][a][b] flattened with x in {0: x=1,
    /// 1: x=3}.
    pub alice_povm_joint: Option<Vec<f64>>,
    /// p(a, b | x, y) for the projective blocks y in {0, 1}, indexed
    /// [x][y][a][b] flattened.
    pub projective_joint: Option<Vec<f64>>,
}

impl ConstraintSet {
    pub fn d(&self) -> usize {
        self.coefficients.d()
    }

    pub fn boundary(
        coefficients: BoundaryCoefficients,
        s_chsh: f64,
        a3: f64,
        s: f64,
    ) -> Self {
        Self {
            coefficients,
            mode: ConstraintMode::BoundaryOnly,
            s_chsh: Some(s_chsh),
            a3: Some(a3),
            s: Some(s),
            bob_marginals: None,
            alice_povm_joint: None,
            projective_joint: None,
        }
    }

    pub fn standard(
        coefficients: BoundaryCoefficients,
        s_chsh: f64,
        a3: f64,
        s: f64,
        bob_marginals: Vec<f64>,
    ) -> Self {
        let mut cs = Self::boundary(coefficients, s_chsh, a3, s);
        cs.mode = ConstraintMode::Standard;
        cs.bob_marginals = Some(bob_marginals);
        cs
    }

    /// Extracts the targets of the requested mode from a correlation table.
    pub fn from_table(
        coefficients: BoundaryCoefficients,
        table: &CorrelationTable,
        mode: ConstraintMode,
    ) -> Result<Self, NpaError> {
        let d = table.povm_outcomes();
        if coefficients.d() != d {
            return Err(NpaError::InvalidInput(
                "coefficient count does not match table".into(),
            ));
        }
        let to_npa = |e: crate::scenario::ScenarioError| NpaError::IncompleteData(e.to_string());
        let s_chsh = crate::scenario::chsh_value(table).map_err(to_npa)?;
        let a3 = table.alice_marginal(3).map_err(to_npa)?;
        let s = crate::tsirelson::bell_value(&coefficients, table)
            .map_err(|e| NpaError::IncompleteData(e.to_string()))?;
        let mut cs = Self::boundary(coefficients, s_chsh, a3, s);
        cs.mode = mode;
        if mode == ConstraintMode::BoundaryOnly {
            return Ok(cs);
        }
        let mut marginals = Vec::with_capacity(d);
        for b in 0..d {
            marginals.push(table.povm_marginal(b).map_err(to_npa)?);
        }
        cs.bob_marginals = Some(marginals);
        if mode == ConstraintMode::Standard {
            return Ok(cs);
        }
        let mut joint = Vec::with_capacity(4 * d);
        for x in [1u8, 3] {
            for a in 0..2 {
                for b in 0..d {
                    joint.push(table.prob(x, 2, a, b).map_err(to_npa)?);
                }
            }
        }
        cs.alice_povm_joint = Some(joint);
        let mut proj = Vec::with_capacity(16);
        for x in [1u8, 3] {
            for y in [0u8, 1] {
                for a in 0..2 {
                    for b in 0..2 {
                        proj.push(table.prob(x, y, a, b).map_err(to_npa)?);
                    }
                }
            }
        }
        cs.projective_joint = Some(proj);
        Ok(cs)
    }
}

/// Options shared by the program assemblers.
#[derive(Debug, Clone)]
pub struct AssemblyOptions {
    pub level: usize,
    pub embedding: Embedding,
    /// Extra monomials appended to the basis.
    pub extras: Vec<Word>,
    /// Entropy program only: apply the hierarchy level to the projective
    /// symbols and bring Eve's operators in through degree-one words plus
    /// the extras. Trades a smaller moment matrix for a bound that is only
    /// as tight as the chosen extras.
    pub projective_level_only: bool,
}

impl Default for AssemblyOptions {
    fn default() -> Self {
        Self {
            level: 2,
            embedding: Embedding::Real,
            extras: Vec::new(),
            projective_level_only: false,
        }
    }
}

impl AssemblyOptions {
    pub fn level(level: usize) -> Self {
        Self {
            level,
            ..Self::default()
        }
    }
}

/// An assembled relaxation: the SDP plus the moment bookkeeping needed to
/// interpret its variables.
pub struct AssembledSdp {
    pub problem: SdpProblem,
    pub moment_matrix: MomentMatrix,
    pub layout: VarLayout,
}

fn experimental_equalities(
    scenario: &ProtocolScenario,
    cs: &ConstraintSet,
    mm: &MomentMatrix,
    layout: &VarLayout,
) -> Result<Vec<(LinearExpr, f64)>, NpaError> {
    let mut eqs: Vec<(LinearExpr, f64)> = Vec::new();
    // normalization <1> = 1
    let mut norm = LinearExpr::new();
    norm.push(layout.re_var(mm.identity_class()), 1.0);
    eqs.push((norm, 1.0));

    if let Some(v) = cs.s_chsh {
        eqs.push((expectation_functional(&scenario.chsh(), mm, layout)?, v));
    }
    if let Some(v) = cs.a3 {
        let a3 = scenario.observable(Party::Alice, ALICE_X3);
        eqs.push((expectation_functional(&a3, mm, layout)?, v));
    }
    if let Some(v) = cs.s {
        let s_op = scenario.bell_operator(&cs.coefficients)?;
        eqs.push((expectation_functional(&s_op, mm, layout)?, v));
    }
    if let Some(marginals) = &cs.bob_marginals {
        if marginals.len() != scenario.d {
            return Err(NpaError::InvalidInput("marginal count mismatch".into()));
        }
        for (b, &v) in marginals.iter().enumerate() {
            let pb = scenario.projector(Party::Bob, BOB_POVM, b);
            eqs.push((expectation_functional(&pb, mm, layout)?, v));
        }
    }
    if let Some(joint) = &cs.alice_povm_joint {
        let d = scenario.d;
        if joint.len() != 4 * d {
            return Err(NpaError::InvalidInput("joint table size mismatch".into()));
        }
        let mut idx = 0;
        for xi in [ALICE_X1, ALICE_X3] {
            for a in 0..2usize {
                for b in 0..d {
                    let pa = scenario.projector(Party::Alice, xi, a);
                    let pb = scenario.projector(Party::Bob, BOB_POVM, b);
                    let joint_poly = pa.mul(&pb);
                    eqs.push((expectation_functional(&joint_poly, mm, layout)?, joint[idx]));
                    idx += 1;
                }
            }
        }
    }
    if let Some(proj) = &cs.projective_joint {
        if proj.len() != 16 {
            return Err(NpaError::InvalidInput(
                "projective joint table size mismatch".into(),
            ));
        }
        let mut idx = 0;
        for xi in [ALICE_X1, ALICE_X3] {
            for y in [BOB_B0, BOB_B1] {
                for a in 0..2usize {
                    for b in 0..2usize {
                        let pa = scenario.projector(Party::Alice, xi, a);
                        let qb = scenario.projector(Party::Bob, y, b);
                        eqs.push((
                            expectation_functional(&pa.mul(&qb), mm, layout)?,
                            proj[idx],
                        ));
                        idx += 1;
                    }
                }
            }
        }
    }
    Ok(eqs)
}

/// Assembles the guessing-probability program: maximize
/// sum_b <Pi_b E_b> over quantum-commuting strategies matching the
/// experimental constraints, with a `d_e`-outcome projective Eve.
pub fn assemble_guessing_sdp(
    cs: &ConstraintSet,
    d_e: usize,
    opts: &AssemblyOptions,
) -> Result<AssembledSdp, NpaError> {
    if d_e < 2 {
        return Err(NpaError::InvalidInput("Eve needs at least two outcomes".into()));
    }
    let scenario = ProtocolScenario::new(cs.d());
    let mut symbols = scenario.projector_symbols();
    for e in 0..(d_e - 1) as u8 {
        symbols.push(OpSymbol::projector(Party::Eve, 0, e));
    }
    let basis = monomial_basis(&symbols, opts.level, &opts.extras);
    let mm = build_moment_matrix(&basis);
    let layout = VarLayout::new(&mm, opts.embedding);

    let eve_proj = |e: usize| -> NcPolynomial {
        if e + 1 < d_e {
            NcPolynomial::from_symbol(OpSymbol::projector(Party::Eve, 0, e as u8))
        } else {
            let mut p = NcPolynomial::one();
            for o in 0..(d_e - 1) as u8 {
                p = p.sub(&NcPolynomial::from_symbol(OpSymbol::projector(
                    Party::Eve,
                    0,
                    o,
                )));
            }
            p
        }
    };

    let mut objective_poly = NcPolynomial::zero();
    for b in 0..cs.d().min(d_e) {
        let pb = scenario.projector(Party::Bob, BOB_POVM, b);
        objective_poly = objective_poly.add(&pb.mul(&eve_proj(b)));
    }
    let objective = expectation_functional(&objective_poly, &mm, &layout)?;
    let equalities = experimental_equalities(&scenario, cs, &mm, &layout)?;
    let block = moment_psd_block(&mm, &layout);

    Ok(AssembledSdp {
        problem: SdpProblem {
            num_vars: layout.num_vars,
            sense: Sense::Maximize,
            objective,
            equalities,
            blocks: vec![block],
        },
        moment_matrix: mm,
        layout,
    })
}

/// Default extra monomials for the entropy program: products of one POVM
/// projector with one Eve operator, covering the completeness expansion of
/// every Pi_b Z_b.
pub fn default_bff_extras(d: usize) -> Vec<Word> {
    let mut extras = Vec::new();
    for o in 0..(d - 1) as u8 {
        for b in 0..d as u8 {
            for adj in [false, true] {
                let mut z = OpSymbol::eve_z(b);
                if adj {
                    z = z.adjoint();
                }
                if let Reduced::Word(w) =
                    canonicalize(&[OpSymbol::projector(Party::Bob, BOB_POVM, o), z])
                {
                    extras.push(w);
                }
            }
        }
    }
    extras
}

/// Assembles one quadrature-node program of the conditional-entropy bound:
/// minimize sum_b <Pi_b (Z_b + Z_b^dagger + (1-t) Z_b^dagger Z_b)
/// + t Z_b Z_b^dagger> under the same experimental constraints.
pub fn assemble_bff_sdp(
    cs: &ConstraintSet,
    t: f64,
    opts: &AssemblyOptions,
) -> Result<AssembledSdp, NpaError> {
    if !(t > 0.0 && t <= 1.0) {
        return Err(NpaError::InvalidInput(format!(
            "quadrature node t = {t} outside (0, 1]"
        )));
    }
    let scenario = ProtocolScenario::new(cs.d());
    let basis = if opts.projective_level_only {
        let symbols = scenario.projector_symbols();
        let mut extras: Vec<Word> = Vec::new();
        for b in 0..cs.d() as u8 {
            for adj in [false, true] {
                let mut z = OpSymbol::eve_z(b);
                if adj {
                    z = z.adjoint();
                }
                if let Reduced::Word(w) = canonicalize(&[z]) {
                    extras.push(w);
                }
            }
        }
        extras.extend(opts.extras.iter().cloned());
        monomial_basis(&symbols, opts.level, &extras)
    } else {
        let mut symbols = scenario.projector_symbols();
        for b in 0..cs.d() as u8 {
            symbols.push(OpSymbol::eve_z(b));
            symbols.push(OpSymbol::eve_z(b).adjoint());
        }
        monomial_basis(&symbols, opts.level, &opts.extras)
    };
    let mm = build_moment_matrix(&basis);
    let layout = VarLayout::new(&mm, opts.embedding);

    let mut objective_poly = NcPolynomial::zero();
    for b in 0..cs.d() {
        let pb = scenario.projector(Party::Bob, BOB_POVM, b);
        let z = NcPolynomial::from_symbol(OpSymbol::eve_z(b as u8));
        let zdag = NcPolynomial::from_symbol(OpSymbol::eve_z(b as u8).adjoint());
        let mut inner = z.add(&zdag);
        inner = inner.add(&zdag.mul(&z).scale(C64::new(1.0 - t, 0.0)));
        objective_poly = objective_poly.add(&pb.mul(&inner));
        objective_poly = objective_poly.add(&z.mul(&zdag).scale(C64::new(t, 0.0)));
    }
    let objective = expectation_functional(&objective_poly, &mm, &layout)?;
    let equalities = experimental_equalities(&scenario, cs, &mm, &layout)?;
    let block = moment_psd_block(&mm, &layout);

    Ok(AssembledSdp {
        problem: SdpProblem {
            num_vars: layout.num_vars,
            sense: Sense::Minimize,
            objective,
            equalities,
            blocks: vec![block],
        },
        moment_matrix: mm,
        layout,
    })
}

/// How Eve's operators are realized in the exact reference model.
pub enum EveModel {
    /// One-dimensional Eve: E_0 = 1, other outcomes 0.
    TrivialProjective { d_e: usize },
    /// Scalar Z_b operators on a one-dimensional Eve space.
    Scalars(Vec<C64>),
}

/// Exact quantum realization of the protocol on C^2 (x) C^d (x) C^1: the
/// rank-one POVM is lifted to a projective measurement by its Naimark
/// isometry V = sum_b sqrt(k_b)|e_b><beta_b|, Bob's projective inputs are
/// conjugated by V (with the dilation complement attached to outcome 1),
/// and the state is (1 (x) V)|phi_theta>.
pub fn exact_protocol_model(
    theta: f64,
    povm: &RankOnePOVM,
    eve: &EveModel,
) -> Result<(Representation, DVector<C64>), NpaError> {
    let d = povm.d();
    let mu = theta.sin().atan();
    let mut rep = Representation::new([2, d, 1]);

    // Alice projectors for sigma_1 (input 0) and sigma_3 (input 1)
    let half = |m: DMatrix<C64>| m * C64::new(0.5, 0.0);
    let eye2 = DMatrix::<C64>::identity(2, 2);
    let sx = DMatrix::from_row_slice(2, 2, &[
        C64::new(0.0, 0.0),
        C64::new(1.0, 0.0),
        C64::new(1.0, 0.0),
        C64::new(0.0, 0.0),
    ]);
    let sz = DMatrix::from_row_slice(2, 2, &[
        C64::new(1.0, 0.0),
        C64::new(0.0, 0.0),
        C64::new(0.0, 0.0),
        C64::new(-1.0, 0.0),
    ]);
    rep.insert(
        OpSymbol::projector(Party::Alice, ALICE_X1, 0),
        half(&eye2 + &sx),
    );
    rep.insert(
        OpSymbol::projector(Party::Alice, ALICE_X1, 1),
        half(&eye2 - &sx),
    );
    rep.insert(
        OpSymbol::projector(Party::Alice, ALICE_X3, 0),
        half(&eye2 + &sz),
    );
    rep.insert(
        OpSymbol::projector(Party::Alice, ALICE_X3, 1),
        half(&eye2 - &sz),
    );

    // Naimark isometry V: C^2 -> C^d
    let mut v = DMatrix::<C64>::zeros(d, 2);
    for (b, e) in povm.elements.iter().enumerate() {
        let beta = e.ket();
        let w = C64::new(e.weight.sqrt(), 0.0);
        v[(b, 0)] = w * beta[0].conj();
        v[(b, 1)] = w * beta[1].conj();
    }
    let vvdag = &v * v.adjoint();
    let eyed = DMatrix::<C64>::identity(d, d);

    // Bob's tilted projective inputs, dilated
    for (input, sign) in [(BOB_B0, 1.0), (BOB_B1, -1.0)] {
        let obs = &sz * C64::new(mu.cos(), 0.0) + &sx * C64::new(sign * mu.sin(), 0.0);
        let p0 = half(&eye2 + &obs);
        let p1 = half(&eye2 - &obs);
        let p0_lift = &v * p0 * v.adjoint();
        let p1_lift = &v * p1 * v.adjoint() + (&eyed - &vvdag);
        rep.insert(OpSymbol::projector(Party::Bob, input, 0), p0_lift);
        rep.insert(OpSymbol::projector(Party::Bob, input, 1), p1_lift);
    }
    // POVM outcomes become basis projectors on C^d
    for b in 0..d {
        let mut pb = DMatrix::<C64>::zeros(d, d);
        pb[(b, b)] = C64::new(1.0, 0.0);
        rep.insert(OpSymbol::projector(Party::Bob, BOB_POVM, b as u8), pb);
    }

    match eve {
        EveModel::TrivialProjective { d_e } => {
            for e in 0..*d_e {
                let val = if e == 0 { 1.0 } else { 0.0 };
                rep.insert(
                    OpSymbol::projector(Party::Eve, 0, e as u8),
                    DMatrix::from_element(1, 1, C64::new(val, 0.0)),
                );
            }
        }
        EveModel::Scalars(zs) => {
            for (b, z) in zs.iter().enumerate() {
                rep.insert(
                    OpSymbol::eve_z(b as u8),
                    DMatrix::from_element(1, 1, *z),
                );
            }
        }
    }

    // state (1 (x) V)|phi_theta>
    let ket = crate::qubit::phi_theta_ket(theta)
        .map_err(|e| NpaError::InvalidInput(e.to_string()))?;
    let mut state = DVector::<C64>::zeros(2 * d);
    for a in 0..2 {
        for bb in 0..d {
            // |phi> = sum_a c_a |a>|a>, so component (a, b) = c_a V[b, a]
            let c_a = if a == 0 { ket[0] } else { ket[3] };
            state[a * d + bb] = c_a * v[(bb, a)];
        }
    }
    Ok((rep, state))
}

/// Moment assignment of an explicit model: one complex value per class.
pub fn exact_moment_assignment(
    mm: &MomentMatrix,
    rep: &Representation,
    state: &DVector<C64>,
) -> Vec<C64> {
    mm.classes
        .iter()
        .map(|w| rep.word_expectation(w.symbols(), state))
        .collect()
}

/// Strictly interior moment assignment: tracial expectations averaged over
/// random finite-dimensional models of the symbol algebra. Used to pull
/// degenerate (boundary-pinned) constraint sets slightly into the interior
/// of the moment cone, where the interior-point solver is well conditioned.
pub fn interior_assignment(mm: &MomentMatrix, seed: u64) -> Vec<C64> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);

    // harvest the measurement structure from the basis words
    let mut outcomes: std::collections::BTreeMap<(Party, u8), u8> = std::collections::BTreeMap::new();
    let mut z_outcomes: u8 = 0;
    for w in &mm.classes {
        for s in w.symbols() {
            match s.kind {
                crate::ncpoly::SymbolKind::Projector => {
                    let e = outcomes.entry((s.party, s.input)).or_insert(0);
                    *e = (*e).max(s.outcome + 1);
                }
                crate::ncpoly::SymbolKind::NonHermitian => {
                    z_outcomes = z_outcomes.max(s.outcome + 1);
                }
            }
        }
    }
    // completeness eliminates one outcome; allocate one extra rank
    let dim_for = |party: Party| -> usize {
        let max_out = outcomes
            .iter()
            .filter(|((p, _), _)| *p == party)
            .map(|(_, &o)| o as usize + 1)
            .max()
            .unwrap_or(1);
        max_out.max(2) + 1
    };
    let dims = [dim_for(Party::Alice), dim_for(Party::Bob), {
        let d = dim_for(Party::Eve);
        d.max(z_outcomes as usize + 1).max(2)
    }];
    let total: usize = dims.iter().product();

    let models = 4;
    let mut acc = vec![C64::new(0.0, 0.0); mm.num_classes()];
    for _ in 0..models {
        let mut rep = Representation::new(dims);
        for ((party, input), &n_out) in &outcomes {
            let dim = dims[match party {
                Party::Alice => 0,
                Party::Bob => 1,
                Party::Eve => 2,
            }];
            // random projective measurement with n_out + 1 effective
            // outcomes (the omitted completeness outcome gets the rest)
            let mut h = DMatrix::<C64>::zeros(dim, dim);
            for i in 0..dim {
                for j in 0..=i {
                    let z = C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                    h[(i, j)] = z;
                    h[(j, i)] = z.conj();
                }
                h[(i, i)] = C64::new(rng.gen_range(-1.0..1.0), 0.0);
            }
            let eig = h.symmetric_eigen();
            for o in 0..n_out {
                // one eigenvector per explicit outcome
                let v = eig.eigenvectors.column(o as usize);
                let mut p = DMatrix::<C64>::zeros(dim, dim);
                for i in 0..dim {
                    for j in 0..dim {
                        p[(i, j)] = v[i] * v[j].conj();
                    }
                }
                rep.insert(OpSymbol::projector(*party, *input, o), p);
            }
        }
        for b in 0..z_outcomes {
            let dim = dims[2];
            let mut z = DMatrix::<C64>::zeros(dim, dim);
            for i in 0..dim {
                for j in 0..dim {
                    z[(i, j)] = C64::new(rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5));
                }
            }
            rep.insert(OpSymbol::eve_z(b), z);
        }
        // tracial state: tr(W) / dim
        for (c, w) in mm.classes.iter().enumerate() {
            let m = rep.word_matrix(w.symbols());
            let mut tr = C64::new(0.0, 0.0);
            for i in 0..total {
                tr += m[(i, i)];
            }
            acc[c] += tr / C64::new(total as f64, 0.0);
        }
    }
    for v in acc.iter_mut() {
        *v /= C64::new(models as f64, 0.0);
    }
    acc
}

/// Real SDP variable vector of a moment assignment under a layout.
pub fn assignment_to_vars(
    mm: &MomentMatrix,
    layout: &VarLayout,
    assignment: &[C64],
) -> Vec<f64> {
    let mut y = vec![0.0; layout.num_vars];
    for (c, v) in assignment.iter().enumerate() {
        y[layout.re_var(c)] = v.re;
        if let Some(im) = layout.im_var(c) {
            y[im] = v.im;
        }
    }
    let _ = mm;
    y
}

/// Feasibility of a variable vector for an assembled SDP.
#[derive(Debug, Clone, Serialize)]
pub struct FeasibilityReport {
    pub max_equality_residual: f64,
    pub min_block_eigenvalue: f64,
}

pub fn check_feasibility(assembled: &AssembledSdp, y: &[f64]) -> FeasibilityReport {
    let mut max_eq: f64 = 0.0;
    for (expr, rhs) in &assembled.problem.equalities {
        max_eq = max_eq.max((expr.eval(y) - rhs).abs());
    }
    let mut min_eig = f64::INFINITY;
    for block in &assembled.problem.blocks {
        let mut m = DMatrix::<f64>::zeros(block.dim, block.dim);
        for (v, entries) in &block.entries {
            for &(i, j, coef) in entries {
                m[(i, j)] += coef * y[*v];
                if i != j {
                    m[(j, i)] += coef * y[*v];
                }
            }
        }
        let eig = m
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .fold(f64::INFINITY, |a, &b| a.min(b));
        min_eig = min_eig.min(eig);
    }
    FeasibilityReport {
        max_equality_residual: max_eq,
        min_block_eigenvalue: min_eig,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{
        protocol_correlations, quantum_max, tilt_alpha, triangular_povm, NoiseModel,
    };
    use crate::sdp::{solve, SolveStatus, SolverConfig};
    use crate::tsirelson::derive_coefficients;
    use std::f64::consts::PI;

    fn a_word(syms: &[OpSymbol]) -> Word {
        canonicalize(syms).word().unwrap()
    }

    #[test]
    fn smallest_moment_matrix() {
        let a10 = OpSymbol::projector(Party::Alice, 0, 0);
        let basis = vec![Word::identity(), a_word(&[a10])];
        let mm = build_moment_matrix(&basis);
        assert_eq!(mm.dim(), 2);
        // off-diagonal and the projector diagonal share one variable
        let off = mm.entry(0, 1);
        let diag = mm.entry(1, 1);
        assert_eq!(off, diag);
        match off {
            Entry::Var { class, conj } => {
                assert!(!conj);
                assert_eq!(mm.classes[class], a_word(&[a10]));
            }
            Entry::Zero => panic!("expected a variable"),
        }
    }

    #[test]
    fn orthogonal_entry_is_pinned_zero() {
        let b0 = OpSymbol::projector(Party::Bob, 2, 0);
        let b1 = OpSymbol::projector(Party::Bob, 2, 1);
        let basis = vec![Word::identity(), a_word(&[b0]), a_word(&[b1])];
        let mm = build_moment_matrix(&basis);
        assert_eq!(mm.entry(1, 2), Entry::Zero);
    }

    #[test]
    fn functional_errors_below_level() {
        let scenario = ProtocolScenario::new(3);
        let symbols = scenario.projector_symbols();
        let basis = monomial_basis(&symbols, 1, &[]);
        let mm = build_moment_matrix(&basis);
        let layout = VarLayout::new(&mm, Embedding::Real);
        // an irreducible length-3 word (alternating Alice inputs) cannot
        // appear among level-1 entries, whose words have length <= 2
        let w = a_word(&[
            OpSymbol::projector(Party::Alice, ALICE_X1, 0),
            OpSymbol::projector(Party::Alice, ALICE_X3, 0),
            OpSymbol::projector(Party::Alice, ALICE_X1, 0),
        ]);
        assert_eq!(w.len(), 3);
        let poly = NcPolynomial::from_word(w);
        assert!(matches!(
            expectation_functional(&poly, &mm, &layout),
            Err(NpaError::LevelTooLow(_))
        ));
    }

    #[test]
    fn identity_functional_is_constant_one_variable() {
        let scenario = ProtocolScenario::new(3);
        let basis = monomial_basis(&scenario.projector_symbols(), 1, &[]);
        let mm = build_moment_matrix(&basis);
        let layout = VarLayout::new(&mm, Embedding::Real);
        let one = expectation_functional(&NcPolynomial::one(), &mm, &layout).unwrap();
        assert_eq!(one.terms.len(), 1);
        assert_eq!(one.terms[0], (mm.identity_class(), 1.0));
    }

    /// Ideal moment vector of the exact model evaluates the tilted CHSH
    /// functional to its quantum maximum.
    #[test]
    fn functional_matches_exact_model() {
        let theta = PI / 3.0;
        let povm = triangular_povm();
        let scenario = ProtocolScenario::new(3);
        let mut symbols = scenario.projector_symbols();
        symbols.push(OpSymbol::projector(Party::Eve, 0, 0));
        symbols.push(OpSymbol::projector(Party::Eve, 0, 1));
        let basis = monomial_basis(&symbols, 2, &[]);
        let mm = build_moment_matrix(&basis);
        let layout = VarLayout::new(&mm, Embedding::Real);

        let (rep, state) =
            exact_protocol_model(theta, &povm, &EveModel::TrivialProjective { d_e: 3 }).unwrap();
        let assignment = exact_moment_assignment(&mm, &rep, &state);
        let y = assignment_to_vars(&mm, &layout, &assignment);

        let alpha = tilt_alpha(theta);
        let tilted = scenario
            .chsh()
            .add(&scenario.observable(Party::Alice, ALICE_X3).scale(C64::new(alpha, 0.0)));
        let f = expectation_functional(&tilted, &mm, &layout).unwrap();
        let value = f.eval(&y);
        assert!(
            (value - quantum_max(alpha)).abs() < 1e-10,
            "tilted CHSH {value} vs {}",
            quantum_max(alpha)
        );
    }

    #[test]
    fn exact_model_is_feasible_for_guessing_relaxation() {
        let theta = PI / 2.0;
        let povm = triangular_povm();
        let coeffs = derive_coefficients(theta, &povm).unwrap();
        let table = protocol_correlations(theta, theta, NoiseModel::ideal(), &povm).unwrap();
        for mode in [
            ConstraintMode::BoundaryOnly,
            ConstraintMode::Standard,
            ConstraintMode::FullCorrelations,
        ] {
            let cs = ConstraintSet::from_table(coeffs.clone(), &table, mode);
            let cs = match cs {
                Ok(c) => c,
                Err(e) => panic!("constraint build failed: {e}"),
            };
            let assembled =
                assemble_guessing_sdp(&cs, 3, &AssemblyOptions::default()).unwrap();
            let (rep, state) =
                exact_protocol_model(theta, &povm, &EveModel::TrivialProjective { d_e: 3 })
                    .unwrap();
            let assignment = exact_moment_assignment(&assembled.moment_matrix, &rep, &state);
            let y = assignment_to_vars(&assembled.moment_matrix, &assembled.layout, &assignment);
            let report = check_feasibility(&assembled, &y);
            assert!(
                report.max_equality_residual < 1e-10,
                "{mode:?}: equality residual {}",
                report.max_equality_residual
            );
            assert!(
                report.min_block_eigenvalue > -1e-10,
                "{mode:?}: min eigenvalue {}",
                report.min_block_eigenvalue
            );
        }
    }

    #[test]
    fn real_and_doubled_embeddings_agree() {
        // noisy constraints keep the feasible set strictly solvable
        let theta = PI / 2.0;
        let povm = triangular_povm();
        let coeffs = derive_coefficients(theta, &povm).unwrap();
        let table = protocol_correlations(
            theta,
            theta,
            NoiseModel::new(0.05, 0.0).unwrap(),
            &povm,
        )
        .unwrap();
        let cs =
            ConstraintSet::from_table(coeffs, &table, ConstraintMode::BoundaryOnly).unwrap();
        let config = SolverConfig::default();
        let mut opts = AssemblyOptions::level(1);
        let real = assemble_guessing_sdp(&cs, 3, &opts).unwrap();
        let sol_real = solve(&real.problem, &config).unwrap();
        opts.embedding = Embedding::Doubled;
        let doubled = assemble_guessing_sdp(&cs, 3, &opts).unwrap();
        let sol_doubled = solve(&doubled.problem, &config).unwrap();
        assert_eq!(sol_real.status, SolveStatus::Optimal, "{sol_real:?}");
        assert!(
            sol_doubled.gap < 1e-6 && sol_doubled.dual_residual < 1e-6,
            "{sol_doubled:?}"
        );
        assert!(
            (sol_real.primal_value - sol_doubled.primal_value).abs() < 1e-5,
            "real {} vs doubled {}",
            sol_real.primal_value,
            sol_doubled.primal_value
        );
    }

    #[test]
    fn problem_sizes_are_logged() {
        let coeffs = derive_coefficients(PI / 2.0, &triangular_povm()).unwrap();
        let table = protocol_correlations(PI / 2.0, PI / 2.0, NoiseModel::ideal(), &triangular_povm())
            .unwrap();
        let cs = ConstraintSet::from_table(coeffs, &table, ConstraintMode::BoundaryOnly).unwrap();
        let g = assemble_guessing_sdp(&cs, 3, &AssemblyOptions::default()).unwrap();
        println!(
            "guessing: basis {}, classes {}, vars {}",
            g.moment_matrix.dim(),
            g.moment_matrix.num_classes(),
            g.layout.num_vars
        );
        assert_eq!(g.moment_matrix.dim(), 41);
        let b = assemble_bff_sdp(&cs, 0.5, &AssemblyOptions::default()).unwrap();
        println!(
            "bff: basis {}, classes {}, vars {}",
            b.moment_matrix.dim(),
            b.moment_matrix.num_classes(),
            b.layout.num_vars
        );
        assert_eq!(b.moment_matrix.dim(), 105);
    }

    #[test]
    fn bff_rejects_bad_nodes() {
        let coeffs = derive_coefficients(PI / 2.0, &triangular_povm()).unwrap();
        let cs = ConstraintSet::boundary(coeffs, 2.0 * 2f64.sqrt(), 0.0, 1.0);
        assert!(assemble_bff_sdp(&cs, 0.0, &AssemblyOptions::default()).is_err());
        assert!(assemble_bff_sdp(&cs, 1.1, &AssemblyOptions::default()).is_err());
    }
}
