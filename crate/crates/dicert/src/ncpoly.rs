//! Noncommutative word algebra over party-local operator symbols.
//!
//! Words are canonicalized under the relations of a quantum-commuting
//! strategy: operators of different parties commute, projectors are
//! idempotent, and distinct outcomes of the same measurement are orthogonal.
//! Eve's entropy-program operators are non-hermitian and satisfy no
//! substitution rules; their adjoints are tracked explicitly.

use crate::qubit::C64;
use nalgebra::{DMatrix, DVector};
use std::collections::{BTreeMap, HashMap, HashSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Party {
    Alice,
    Bob,
    Eve,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SymbolKind {
    Projector,
    NonHermitian,
}

/// One operator symbol: a projector of some measurement input/outcome, or a
/// non-hermitian operator (with its adjoint flag).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct OpSymbol {
    pub party: Party,
    pub input: u8,
    pub outcome: u8,
    pub kind: SymbolKind,
    /// Meaningful only for `NonHermitian`; projectors are self-adjoint.
    pub adjoint: bool,
}

impl OpSymbol {
    pub fn projector(party: Party, input: u8, outcome: u8) -> Self {
        Self {
            party,
            input,
            outcome,
            kind: SymbolKind::Projector,
            adjoint: false,
        }
    }

    /// Eve's non-hermitian operator Z_e (input slot 0).
    pub fn eve_z(outcome: u8) -> Self {
        Self {
            party: Party::Eve,
            input: 0,
            outcome,
            kind: SymbolKind::NonHermitian,
            adjoint: false,
        }
    }

    pub fn adjoint(mut self) -> Self {
        if self.kind == SymbolKind::NonHermitian {
            self.adjoint = !self.adjoint;
        }
        self
    }
}

/// Canonical word over operator symbols. The empty word is the identity.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Word(Vec<OpSymbol>);

/// Result of reduction: either a canonical word or the zero operator.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Reduced {
    Word(Word),
    Zero,
}

impl Reduced {
    pub fn word(self) -> Option<Word> {
        match self {
            Reduced::Word(w) => Some(w),
            Reduced::Zero => None,
        }
    }
}

impl Word {
    pub fn identity() -> Self {
        Word(Vec::new())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_identity(&self) -> bool {
        self.0.is_empty()
    }

    pub fn symbols(&self) -> &[OpSymbol] {
        &self.0
    }

    /// Canonicalizes an arbitrary symbol sequence.
    pub fn from_symbols(symbols: &[OpSymbol]) -> Reduced {
        canonicalize(symbols)
    }

    /// Word product u . v, canonicalized.
    pub fn concat(&self, other: &Word) -> Reduced {
        let mut syms = Vec::with_capacity(self.len() + other.len());
        syms.extend_from_slice(&self.0);
        syms.extend_from_slice(&other.0);
        canonicalize(&syms)
    }

    /// Adjoint: reversed word with non-hermitian flags toggled. The adjoint
    /// of a canonical nonzero word is never zero.
    pub fn adjoint(&self) -> Word {
        let syms: Vec<OpSymbol> = self.0.iter().rev().map(|s| s.adjoint()).collect();
        match canonicalize(&syms) {
            Reduced::Word(w) => w,
            Reduced::Zero => unreachable!("adjoint of a canonical word cannot vanish"),
        }
    }

    pub fn is_self_adjoint(&self) -> bool {
        *self == self.adjoint()
    }
}

/// Sorts by party (stably, preserving intra-party order) and applies the
/// projector relations until a fixed point: squares collapse, orthogonal
/// same-input outcomes annihilate the word.
pub fn canonicalize(symbols: &[OpSymbol]) -> Reduced {
    let mut v: Vec<OpSymbol> = symbols.to_vec();
    v.sort_by_key(|s| s.party);
    let mut out: Vec<OpSymbol> = Vec::with_capacity(v.len());
    for s in v {
        if let Some(last) = out.last() {
            if last.party == s.party
                && last.kind == SymbolKind::Projector
                && s.kind == SymbolKind::Projector
                && last.input == s.input
            {
                if last.outcome == s.outcome {
                    continue; // idempotent
                }
                return Reduced::Zero; // orthogonal outcomes
            }
        }
        out.push(s);
    }
    Reduced::Word(Word(out))
}

/// Identity plus all canonical words of length <= `level` over `symbols`,
/// in stable enumeration order, followed by deduplicated `extras`.
pub fn monomial_basis(symbols: &[OpSymbol], level: usize, extras: &[Word]) -> Vec<Word> {
    assert!(level >= 1, "moment hierarchies start at level 1");
    let mut seen: HashSet<Word> = HashSet::new();
    let mut basis: Vec<Word> = Vec::new();
    let identity = Word::identity();
    seen.insert(identity.clone());
    basis.push(identity);

    let mut frontier: Vec<Word> = vec![Word::identity()];
    for _ in 0..level {
        let mut next: Vec<Word> = Vec::new();
        for w in &frontier {
            for s in symbols {
                let mut syms = w.0.clone();
                syms.push(*s);
                if let Reduced::Word(cw) = canonicalize(&syms) {
                    if cw.len() == w.len() + 1 && seen.insert(cw.clone()) {
                        basis.push(cw.clone());
                        next.push(cw);
                    }
                }
            }
        }
        frontier = next;
    }
    for e in extras {
        if seen.insert(e.clone()) {
            basis.push(e.clone());
        }
    }
    basis
}

/// Finitely supported complex combination of canonical words.
#[derive(Debug, Clone, PartialEq)]
pub struct NcPolynomial {
    terms: BTreeMap<Word, C64>,
}

impl NcPolynomial {
    pub fn zero() -> Self {
        Self {
            terms: BTreeMap::new(),
        }
    }

    pub fn one() -> Self {
        Self::from_word(Word::identity())
    }

    pub fn constant(c: f64) -> Self {
        let mut p = Self::zero();
        p.add_term(Word::identity(), C64::new(c, 0.0));
        p
    }

    pub fn from_word(w: Word) -> Self {
        let mut p = Self::zero();
        p.add_term(w, C64::new(1.0, 0.0));
        p
    }

    pub fn from_symbol(s: OpSymbol) -> Self {
        match canonicalize(&[s]) {
            Reduced::Word(w) => Self::from_word(w),
            Reduced::Zero => Self::zero(),
        }
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Word, &C64)> {
        self.terms.iter()
    }

    pub fn add_term(&mut self, w: Word, c: C64) {
        let entry = self.terms.entry(w.clone()).or_insert(C64::new(0.0, 0.0));
        *entry += c;
        if entry.norm() == 0.0 {
            self.terms.remove(&w);
        }
    }

    pub fn scale(&self, c: C64) -> Self {
        let mut out = Self::zero();
        for (w, v) in &self.terms {
            out.add_term(w.clone(), v * c);
        }
        out
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut out = self.clone();
        for (w, c) in &other.terms {
            out.add_term(w.clone(), *c);
        }
        out
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.scale(C64::new(-1.0, 0.0)))
    }

    pub fn mul(&self, other: &Self) -> Self {
        let mut out = Self::zero();
        for (u, cu) in &self.terms {
            for (v, cv) in &other.terms {
                if let Reduced::Word(w) = u.concat(v) {
                    out.add_term(w, cu * cv);
                }
            }
        }
        out
    }

    pub fn adjoint(&self) -> Self {
        let mut out = Self::zero();
        for (w, c) in &self.terms {
            out.add_term(w.adjoint(), c.conj());
        }
        out
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        let diff = self.sub(&self.adjoint());
        diff.terms.values().all(|c| c.norm() <= tol)
    }
}

/// Explicit finite-dimensional representation: concrete matrices per symbol
/// on a tensor product H_A (x) H_B (x) H_E. The oracle side of the moment
/// machinery: words evaluate to matrices, polynomials to expectation values.
#[derive(Debug, Clone)]
pub struct Representation {
    pub dims: [usize; 3],
    ops: HashMap<OpSymbol, DMatrix<C64>>,
}

fn party_index(party: Party) -> usize {
    match party {
        Party::Alice => 0,
        Party::Bob => 1,
        Party::Eve => 2,
    }
}

impl Representation {
    pub fn new(dims: [usize; 3]) -> Self {
        Self {
            dims,
            ops: HashMap::new(),
        }
    }

    pub fn total_dim(&self) -> usize {
        self.dims.iter().product()
    }

    /// Registers the local matrix of a symbol (on that party's factor).
    pub fn insert(&mut self, symbol: OpSymbol, local: DMatrix<C64>) {
        let d = self.dims[party_index(symbol.party)];
        assert_eq!(local.nrows(), d, "local operator dimension mismatch");
        assert_eq!(local.ncols(), d);
        self.ops.insert(symbol, local);
    }

    fn local(&self, symbol: &OpSymbol) -> DMatrix<C64> {
        if let Some(m) = self.ops.get(symbol) {
            return m.clone();
        }
        // fall back to the adjoint of the registered base operator
        let base = symbol.adjoint();
        if let Some(m) = self.ops.get(&base) {
            return m.adjoint();
        }
        panic!("no representation registered for symbol {symbol:?}");
    }

    /// Embeds a local operator at the party slot by Kronecker products with
    /// identities.
    fn embed(&self, symbol: &OpSymbol) -> DMatrix<C64> {
        let local = self.local(symbol);
        let slot = party_index(symbol.party);
        let mut out = DMatrix::<C64>::identity(1, 1);
        for (k, &d) in self.dims.iter().enumerate() {
            let factor = if k == slot {
                local.clone()
            } else {
                DMatrix::<C64>::identity(d, d)
            };
            out = out.kronecker(&factor);
        }
        out
    }

    /// Product of the embedded symbols in the raw word order.
    pub fn word_matrix(&self, symbols: &[OpSymbol]) -> DMatrix<C64> {
        let n = self.total_dim();
        let mut out = DMatrix::<C64>::identity(n, n);
        for s in symbols {
            out *= self.embed(s);
        }
        out
    }

    /// <psi| W |psi> for a word.
    pub fn word_expectation(&self, symbols: &[OpSymbol], state: &DVector<C64>) -> C64 {
        let m = self.word_matrix(symbols);
        let image = &m * state;
        state.dotc(&image)
    }

    /// <psi| P |psi> for a polynomial.
    pub fn poly_expectation(&self, poly: &NcPolynomial, state: &DVector<C64>) -> C64 {
        let mut total = C64::new(0.0, 0.0);
        for (w, c) in poly.terms() {
            total += c * self.word_expectation(w.symbols(), state);
        }
        total
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn a(input: u8, outcome: u8) -> OpSymbol {
        OpSymbol::projector(Party::Alice, input, outcome)
    }

    fn b(input: u8, outcome: u8) -> OpSymbol {
        OpSymbol::projector(Party::Bob, input, outcome)
    }

    #[test]
    fn commute_then_collapse() {
        // A B A -> A B by cross-party commutation then idempotence
        let r = canonicalize(&[a(1, 0), b(2, 1), a(1, 0)]);
        let w = r.word().unwrap();
        assert_eq!(w.symbols(), &[a(1, 0), b(2, 1)]);
    }

    #[test]
    fn orthogonal_outcomes_vanish() {
        assert_eq!(canonicalize(&[b(2, 0), b(2, 1)]), Reduced::Zero);
    }

    #[test]
    fn eve_z_commutes_past_parties() {
        let z = OpSymbol::eve_z(0);
        let r = canonicalize(&[z, a(3, 1)]);
        let w = r.word().unwrap();
        assert_eq!(w.symbols(), &[a(3, 1), z]);
    }

    #[test]
    fn z_products_have_no_relations() {
        let z0 = OpSymbol::eve_z(0);
        let w = canonicalize(&[z0, z0]).word().unwrap();
        assert_eq!(w.len(), 2);
        let w = canonicalize(&[z0, z0.adjoint()]).word().unwrap();
        assert_eq!(w.len(), 2);
    }

    #[test]
    fn adjoint_examples() {
        let z0 = OpSymbol::eve_z(0);
        // (A Z)^dagger = Z^dagger A = A Z^dagger after commutation
        let w = canonicalize(&[a(1, 0), z0]).word().unwrap();
        let adj = w.adjoint();
        assert_eq!(adj.symbols(), &[a(1, 0), z0.adjoint()]);

        // projector words reverse in place (party-sorted again)
        let w = canonicalize(&[a(1, 0), a(3, 0)]).word().unwrap();
        assert_eq!(w.adjoint().symbols(), &[a(3, 0), a(1, 0)]);

        // (Z0 Z1)^dagger = Z1^dagger Z0^dagger
        let z1 = OpSymbol::eve_z(1);
        let w = canonicalize(&[z0, z1]).word().unwrap();
        assert_eq!(w.adjoint().symbols(), &[z1.adjoint(), z0.adjoint()]);
    }

    #[test]
    fn alice_level_one_basis() {
        let basis = monomial_basis(&[a(1, 0), a(3, 0)], 1, &[]);
        assert_eq!(basis.len(), 3);
        assert!(basis[0].is_identity());
    }

    #[test]
    fn duplicate_extras_are_dropped() {
        let syms = [a(1, 0), a(3, 0)];
        let w = canonicalize(&[a(1, 0)]).word().unwrap();
        let basis = monomial_basis(&syms, 2, &[w.clone(), w]);
        let unique: HashSet<&Word> = basis.iter().collect();
        assert_eq!(basis.len(), unique.len());
    }

    #[test]
    fn guessing_scenario_level_two_basis_is_stable() {
        // 2 Alice + 4 Bob + 2 Eve independent projectors
        let mut syms = vec![a(1, 0), a(3, 0)];
        syms.extend([b(0, 0), b(1, 0), b(2, 0), b(2, 1)]);
        syms.extend([
            OpSymbol::projector(Party::Eve, 0, 0),
            OpSymbol::projector(Party::Eve, 0, 1),
        ]);
        let basis = monomial_basis(&syms, 2, &[]);
        // oracle: exhaustive enumeration with dedup through a set
        let mut expected: HashSet<Word> = HashSet::new();
        expected.insert(Word::identity());
        for s in &syms {
            if let Some(w) = canonicalize(&[*s]).word() {
                expected.insert(w);
            }
        }
        for s in &syms {
            for t in &syms {
                if let Some(w) = canonicalize(&[*s, *t]).word() {
                    expected.insert(w);
                }
            }
        }
        assert_eq!(basis.len(), expected.len(), "basis size mismatch");
        let got: HashSet<Word> = basis.iter().cloned().collect();
        assert_eq!(got, expected);
        assert_eq!(basis.len(), 41);
    }

    fn random_symbol<R: Rng>(rng: &mut R) -> OpSymbol {
        let party = match rng.gen_range(0..3) {
            0 => Party::Alice,
            1 => Party::Bob,
            _ => Party::Eve,
        };
        if party == Party::Eve && rng.gen_bool(0.5) {
            let mut z = OpSymbol::eve_z(rng.gen_range(0..2));
            if rng.gen_bool(0.5) {
                z = z.adjoint();
            }
            z
        } else {
            OpSymbol::projector(party, rng.gen_range(0..2), rng.gen_range(0..2))
        }
    }

    #[test]
    fn canonicalize_is_idempotent_on_random_words() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        for _ in 0..10_000 {
            let len = rng.gen_range(0..=6);
            let syms: Vec<OpSymbol> = (0..len).map(|_| random_symbol(&mut rng)).collect();
            match canonicalize(&syms) {
                Reduced::Zero => {}
                Reduced::Word(w) => {
                    assert_eq!(canonicalize(w.symbols()), Reduced::Word(w.clone()));
                }
            }
        }
    }

    #[test]
    fn adjoint_is_involutive_on_random_words() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        for _ in 0..10_000 {
            let len = rng.gen_range(0..=6);
            let syms: Vec<OpSymbol> = (0..len).map(|_| random_symbol(&mut rng)).collect();
            if let Some(w) = canonicalize(&syms).word() {
                assert_eq!(w.adjoint().adjoint(), w);
            }
        }
    }

    /// Random qubit projector pair (P, I - P) on a local space.
    fn random_projector_pair<R: Rng>(rng: &mut R, dim: usize) -> (DMatrix<C64>, DMatrix<C64>) {
        // random hermitian, take spectral projector of the top half
        let mut h = DMatrix::<C64>::zeros(dim, dim);
        for i in 0..dim {
            for j in 0..=i {
                let z = C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                h[(i, j)] = z;
                h[(j, i)] = z.conj();
            }
            h[(i, i)] = C64::new(rng.gen_range(-1.0..1.0), 0.0);
        }
        let eig = h.clone().symmetric_eigen();
        let mut p = DMatrix::<C64>::zeros(dim, dim);
        for k in 0..dim / 2 {
            let v = eig.eigenvectors.column(k);
            for i in 0..dim {
                for j in 0..dim {
                    p[(i, j)] += v[i] * v[j].conj();
                }
            }
        }
        let q = DMatrix::<C64>::identity(dim, dim) - &p;
        (p, q)
    }

    fn random_representation<R: Rng>(rng: &mut R) -> Representation {
        let mut rep = Representation::new([2, 2, 2]);
        for (party, inputs) in [(Party::Alice, 2u8), (Party::Bob, 2), (Party::Eve, 1)] {
            for input in 0..inputs {
                let dim = 2;
                let (p, q) = random_projector_pair(rng, dim);
                rep.insert(OpSymbol::projector(party, input, 0), p);
                rep.insert(OpSymbol::projector(party, input, 1), q);
            }
        }
        // one non-hermitian Eve operator
        let mut z = DMatrix::<C64>::zeros(2, 2);
        for i in 0..2 {
            for j in 0..2 {
                z[(i, j)] = C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            }
        }
        rep.insert(OpSymbol::eve_z(0), z);
        rep
    }

    fn random_state<R: Rng>(rng: &mut R, dim: usize) -> DVector<C64> {
        let mut v = DVector::<C64>::zeros(dim);
        for i in 0..dim {
            v[i] = C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        }
        let n = v.norm();
        v / C64::new(n, 0.0)
    }

    #[test]
    fn canonicalization_respects_models() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let rep = random_representation(&mut rng);
        let state = random_state(&mut rng, rep.total_dim());
        for _ in 0..200 {
            let len = rng.gen_range(0..=4);
            let syms: Vec<OpSymbol> = (0..len)
                .map(|_| {
                    // restrict to symbols with registered representations
                    loop {
                        let s = random_symbol(&mut rng);
                        let ok = match (s.party, s.kind) {
                            (Party::Eve, SymbolKind::NonHermitian) => s.outcome == 0,
                            (Party::Eve, SymbolKind::Projector) => s.input == 0,
                            _ => true,
                        };
                        if ok {
                            return s;
                        }
                    }
                })
                .collect();
            let raw = rep.word_expectation(&syms, &state);
            let reduced = match canonicalize(&syms) {
                Reduced::Zero => C64::new(0.0, 0.0),
                Reduced::Word(w) => rep.word_expectation(w.symbols(), &state),
            };
            assert!(
                (raw - reduced).norm() < 1e-12,
                "raw {raw} vs canonical {reduced} for {syms:?}"
            );
        }
    }

    #[test]
    fn completeness_substitution_matches_direct_reduction() {
        // replace the omitted last outcome by (1 - sum of the others) and
        // compare expectations against the direct 2-outcome reduction
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let rep = random_representation(&mut rng);
        let state = random_state(&mut rng, rep.total_dim());
        // last outcome of Bob input 1 as polynomial 1 - Q_{1,0}
        let q10 = NcPolynomial::from_symbol(b(1, 0));
        let q11_poly = NcPolynomial::one().sub(&q10);
        for _ in 0..100 {
            let len = rng.gen_range(1..=3);
            let syms: Vec<OpSymbol> = (0..len)
                .map(|_| {
                    let party = if rng.gen_bool(0.5) {
                        Party::Alice
                    } else {
                        Party::Bob
                    };
                    OpSymbol::projector(party, rng.gen_range(0..2), rng.gen_range(0..2))
                })
                .collect();
            // route A: direct reduction with the explicit symbol
            let direct = match canonicalize(&syms) {
                Reduced::Zero => C64::new(0.0, 0.0),
                Reduced::Word(w) => rep.word_expectation(w.symbols(), &state),
            };
            // route B: expand every occurrence of b(1,1) via completeness
            let mut poly = NcPolynomial::one();
            for s in &syms {
                let factor = if *s == b(1, 1) {
                    q11_poly.clone()
                } else {
                    NcPolynomial::from_symbol(*s)
                };
                poly = poly.mul(&factor);
            }
            let expanded = rep.poly_expectation(&poly, &state);
            assert!(
                (direct - expanded).norm() < 1e-12,
                "direct {direct} vs expanded {expanded}"
            );
        }
    }

    proptest! {
        #[test]
        fn proptest_canonical_idempotence(seed in 0u64..5000) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let len = rng.gen_range(0..=6);
            let syms: Vec<OpSymbol> = (0..len).map(|_| random_symbol(&mut rng)).collect();
            if let Some(w) = canonicalize(&syms).word() {
                prop_assert_eq!(canonicalize(w.symbols()), Reduced::Word(w.clone()));
                prop_assert_eq!(w.adjoint().adjoint(), w);
            }
        }
    }
}
