//! Correlation generation for the certification protocol: the noise model,
//! Born-rule tables for the two projective inputs plus the POVM input,
//! tilted-CHSH evaluation, the state-angle fit, and the example POVMs.

use crate::qubit::{
    expect4, kron22, phi_theta, sigma_1, sigma_3, Mat2, QubitError, RankOnePOVM,
    RankOnePOVMElement, TwoQubitState, C64,
};
use serde::Serialize;
use std::collections::BTreeMap;
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("incomplete data: {0}")]
    IncompleteData(String),
    #[error("no feasible state angle: {0}")]
    FitError(String),
    #[error("degenerate decomposition: {0}")]
    DegenerateDecomposition(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Qubit(#[from] QubitError),
}

/// Depolarization fraction p plus decoherence fraction c, with p + c <= 1.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct NoiseModel {
    pub p: f64,
    pub c: f64,
}

impl NoiseModel {
    pub fn new(p: f64, c: f64) -> Result<Self, ScenarioError> {
        if !(0.0..=1.0).contains(&p) || !(0.0..=1.0).contains(&c) || p + c > 1.0 {
            return Err(ScenarioError::Domain(format!(
                "noise fractions p = {p}, c = {c} must be nonnegative with p + c <= 1"
            )));
        }
        Ok(Self { p, c })
    }

    pub fn ideal() -> Self {
        Self { p: 0.0, c: 0.0 }
    }
}

/// rho = (1-p-c)|phi><phi| + p I/4 + c [cos^2(t/2)|00><00| + sin^2(t/2)|11><11|].
pub fn noisy_state(theta: f64, noise: NoiseModel) -> Result<TwoQubitState, ScenarioError> {
    let pure = phi_theta(theta)?;
    let w = 1.0 - noise.p - noise.c;
    let mut rho = pure.density() * C64::new(w, 0.0);
    for i in 0..4 {
        rho[(i, i)] += C64::new(noise.p / 4.0, 0.0);
    }
    rho[(0, 0)] += C64::new(noise.c * (theta / 2.0).cos().powi(2), 0.0);
    rho[(3, 3)] += C64::new(noise.c * (theta / 2.0).sin().powi(2), 0.0);
    Ok(TwoQubitState::new(rho, noise.p == 0.0 && noise.c == 0.0)?)
}

/// (V_Z, V_X) = (Tr[s3 (x) s3 rho], Tr[s1 (x) s1 rho]).
pub fn visibilities(state: &TwoQubitState) -> (f64, f64) {
    let vz = expect4(&kron22(&sigma_3(), &sigma_3()), state.density());
    let vx = expect4(&kron22(&sigma_1(), &sigma_1()), state.density());
    (vz, vx)
}

/// Joint distribution p(a, b | x, y) for Alice inputs x in {1, 3} and Bob
/// inputs y in {0, 1, 2}; y = 2 is the POVM with d outcomes.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationTable {
    d: usize,
    /// (x, y) -> row-major [a][b] probabilities.
    blocks: BTreeMap<(u8, u8), Vec<f64>>,
}

pub const ALICE_INPUTS: [u8; 2] = [1, 3];
pub const BOB_INPUTS: [u8; 3] = [0, 1, 2];

impl CorrelationTable {
    pub fn new(d: usize) -> Self {
        let mut blocks = BTreeMap::new();
        for x in ALICE_INPUTS {
            for y in BOB_INPUTS {
                let nb = if y == 2 { d } else { 2 };
                blocks.insert((x, y), vec![0.0; 2 * nb]);
            }
        }
        Self { d, blocks }
    }

    /// Table of independent uniform outcomes on every input pair.
    pub fn uniform(d: usize) -> Self {
        let mut t = Self::new(d);
        for ((_, y), block) in t.blocks.iter_mut() {
            let nb = if *y == 2 { d } else { 2 };
            for v in block.iter_mut() {
                *v = 1.0 / (2.0 * nb as f64);
            }
        }
        t
    }

    pub fn povm_outcomes(&self) -> usize {
        self.d
    }

    fn outcomes_for(&self, y: u8) -> usize {
        if y == 2 {
            self.d
        } else {
            2
        }
    }

    pub fn set_prob(&mut self, x: u8, y: u8, a: usize, b: usize, p: f64) {
        let nb = self.outcomes_for(y);
        let block = self
            .blocks
            .get_mut(&(x, y))
            .expect("inputs restricted to x in {1,3}, y in {0,1,2}");
        block[a * nb + b] = p;
    }

    pub fn prob(&self, x: u8, y: u8, a: usize, b: usize) -> Result<f64, ScenarioError> {
        let nb = self.outcomes_for(y);
        let block = self.blocks.get(&(x, y)).ok_or_else(|| {
            ScenarioError::IncompleteData(format!("no block for inputs x = {x}, y = {y}"))
        })?;
        block
            .get(a * nb + b)
            .copied()
            .ok_or_else(|| ScenarioError::IncompleteData(format!("outcome ({a},{b}) out of range")))
    }

    /// <A_x B_y> for the dichotomic settings y in {0, 1}.
    pub fn correlator(&self, x: u8, y: u8) -> Result<f64, ScenarioError> {
        let mut v = 0.0;
        for a in 0..2 {
            for b in 0..2 {
                let sign = if (a + b) % 2 == 0 { 1.0 } else { -1.0 };
                v += sign * self.prob(x, y, a, b)?;
            }
        }
        Ok(v)
    }

    /// <A_x> from the (x, y = 0) block.
    pub fn alice_marginal(&self, x: u8) -> Result<f64, ScenarioError> {
        let mut v = 0.0;
        for a in 0..2 {
            for b in 0..2 {
                let sign = if a == 0 { 1.0 } else { -1.0 };
                v += sign * self.prob(x, 0, a, b)?;
            }
        }
        Ok(v)
    }

    /// <A_x (x) Pi_b> = sum_a (-1)^a p(a, b | x, y = 2).
    pub fn alice_povm_correlator(&self, x: u8, b: usize) -> Result<f64, ScenarioError> {
        let mut v = 0.0;
        for a in 0..2 {
            let sign = if a == 0 { 1.0 } else { -1.0 };
            v += sign * self.prob(x, 2, a, b)?;
        }
        Ok(v)
    }

    /// p(b | y = 2), computed from the x = 1 block.
    pub fn povm_marginal(&self, b: usize) -> Result<f64, ScenarioError> {
        Ok(self.prob(1, 2, 0, b)? + self.prob(1, 2, 1, b)?)
    }

    /// Max deviation of any conditional distribution from unit total mass.
    pub fn normalization_residual(&self) -> f64 {
        self.blocks
            .values()
            .map(|block| (block.iter().sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// Max deviation between marginals of one party across the other party's
    /// settings.
    pub fn no_signaling_residual(&self) -> f64 {
        let mut worst: f64 = 0.0;
        // Alice's marginal must not depend on y
        for x in ALICE_INPUTS {
            for a in 0..2 {
                let mut values = Vec::new();
                for y in BOB_INPUTS {
                    let nb = self.outcomes_for(y);
                    let mut m = 0.0;
                    for b in 0..nb {
                        m += self.prob(x, y, a, b).unwrap_or(0.0);
                    }
                    values.push(m);
                }
                for w in values.windows(2) {
                    worst = worst.max((w[0] - w[1]).abs());
                }
            }
        }
        // Bob's marginal must not depend on x
        for y in BOB_INPUTS {
            let nb = self.outcomes_for(y);
            for b in 0..nb {
                let mut values = Vec::new();
                for x in ALICE_INPUTS {
                    let mut m = 0.0;
                    for a in 0..2 {
                        m += self.prob(x, y, a, b).unwrap_or(0.0);
                    }
                    values.push(m);
                }
                worst = worst.max((values[0] - values[1]).abs());
            }
        }
        worst
    }

    /// CSV with columns x,y,a,b,p. Lines starting with '#' are preserved for
    /// callers that prepend a manifest.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("x,y,a,b,p\n");
        for ((x, y), block) in &self.blocks {
            let nb = self.outcomes_for(*y);
            for a in 0..2 {
                for b in 0..nb {
                    out.push_str(&format!("{x},{y},{a},{b},{:.17e}\n", block[a * nb + b]));
                }
            }
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self, ScenarioError> {
        let mut rows = Vec::new();
        let mut d = 0usize;
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with('x') {
                continue;
            }
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 5 {
                return Err(ScenarioError::Parse(format!(
                    "expected 5 columns, got {}: {line}",
                    cols.len()
                )));
            }
            let x: u8 = cols[0]
                .parse()
                .map_err(|e| ScenarioError::Parse(format!("bad x: {e}")))?;
            let y: u8 = cols[1]
                .parse()
                .map_err(|e| ScenarioError::Parse(format!("bad y: {e}")))?;
            let a: usize = cols[2]
                .parse()
                .map_err(|e| ScenarioError::Parse(format!("bad a: {e}")))?;
            let b: usize = cols[3]
                .parse()
                .map_err(|e| ScenarioError::Parse(format!("bad b: {e}")))?;
            let p: f64 = cols[4]
                .parse()
                .map_err(|e| ScenarioError::Parse(format!("bad p: {e}")))?;
            if y == 2 {
                d = d.max(b + 1);
            }
            rows.push((x, y, a, b, p));
        }
        if d < 2 {
            return Err(ScenarioError::Parse(
                "table carries no y = 2 block with at least two outcomes".into(),
            ));
        }
        let mut table = Self::new(d);
        for (x, y, a, b, p) in rows {
            table.set_prob(x, y, a, b, p);
        }
        Ok(table)
    }
}

/// mu = arctan(sin theta), the tilt of Bob's projective settings.
pub fn measurement_tilt(theta: f64) -> f64 {
    theta.sin().atan()
}

/// alpha = 2 cos(theta) / sqrt(1 + sin^2(theta)).
pub fn tilt_alpha(theta: f64) -> f64 {
    2.0 * theta.cos() / (1.0 + theta.sin().powi(2)).sqrt()
}

/// Quantum maximum sqrt(8 + 2 alpha^2) of the tilted CHSH functional.
pub fn quantum_max(alpha: f64) -> f64 {
    (8.0 + 2.0 * alpha * alpha).sqrt()
}

fn projector_pair(obs: &Mat2) -> [Mat2; 2] {
    let id = Mat2::identity();
    [
        (id + obs) * C64::new(0.5, 0.0),
        (id - obs) * C64::new(0.5, 0.0),
    ]
}

/// Born-rule table for the protocol: Alice measures sigma_1 and sigma_3,
/// Bob measures B_0/B_1 = cos(mu) s3 +/- sin(mu) s1 with mu set by
/// `theta_meas`, and the POVM on input y = 2. The state is
/// `noisy_state(theta_state, noise)`.
pub fn protocol_correlations(
    theta_state: f64,
    theta_meas: f64,
    noise: NoiseModel,
    povm: &RankOnePOVM,
) -> Result<CorrelationTable, ScenarioError> {
    let rho = noisy_state(theta_state, noise)?;
    let mu = measurement_tilt(theta_meas);
    let alice = [projector_pair(&sigma_1()), projector_pair(&sigma_3())];
    let b0 = sigma_3() * C64::new(mu.cos(), 0.0) + sigma_1() * C64::new(mu.sin(), 0.0);
    let b1 = sigma_3() * C64::new(mu.cos(), 0.0) - sigma_1() * C64::new(mu.sin(), 0.0);
    let bob_proj = [projector_pair(&b0), projector_pair(&b1)];
    let fs = povm.matrices();

    let mut table = CorrelationTable::new(povm.d());
    for (xi, x) in ALICE_INPUTS.iter().enumerate() {
        for a in 0..2 {
            let pa = &alice[xi][a];
            for y in 0..2u8 {
                for b in 0..2 {
                    let op = kron22(pa, &bob_proj[y as usize][b]);
                    table.set_prob(*x, y, a, b, expect4(&op, rho.density()));
                }
            }
            for (b, f) in fs.iter().enumerate() {
                let op = kron22(pa, f);
                table.set_prob(*x, 2, a, b, expect4(&op, rho.density()));
            }
        }
    }
    Ok(table)
}

/// Plain CHSH combination <A_3 B_0> + <A_3 B_1> + <A_1 B_0> - <A_1 B_1>.
pub fn chsh_value(corr: &CorrelationTable) -> Result<f64, ScenarioError> {
    Ok(corr.correlator(3, 0)? + corr.correlator(3, 1)? + corr.correlator(1, 0)?
        - corr.correlator(1, 1)?)
}

/// <I_alpha> = alpha <A_3> + CHSH combination.
pub fn tilted_chsh(corr: &CorrelationTable, alpha: f64) -> Result<f64, ScenarioError> {
    Ok(alpha * corr.alice_marginal(3)? + chsh_value(corr)?)
}

/// Distance to the quantum bound for candidate angle `theta`, given the
/// angle-independent data (CHSH combination and <A_3>).
fn fit_gap(theta: f64, s_chsh: f64, a3: f64) -> f64 {
    let alpha = tilt_alpha(theta);
    quantum_max(alpha) - (s_chsh + alpha * a3)
}

fn golden_minimize(mut lo: f64, mut hi: f64, f: impl Fn(f64) -> f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while hi - lo > 1e-9 {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = f(x2);
        }
    }
    (lo + hi) / 2.0
}

/// Fits the state angle from the measured CHSH combination and <A_3>:
/// the angle minimizing |I_alpha(theta) - sqrt(8 + 2 alpha(theta)^2)| subject
/// to the quantum bound, where I_alpha(theta) = s_chsh + alpha(theta) a3.
pub fn fit_theta_from_chsh(s_chsh: f64, a3: f64) -> Result<f64, ScenarioError> {
    let eps = 1e-7;
    // Minimize |gap| on each monotone branch, split at pi/2.
    let left = golden_minimize(eps, PI / 2.0, |t| fit_gap(t, s_chsh, a3).abs());
    let right = golden_minimize(PI / 2.0, PI - eps, |t| fit_gap(t, s_chsh, a3).abs());
    let mut candidates: Vec<f64> = vec![left, right];
    // keep only angles where the quantum bound holds
    candidates.retain(|&t| fit_gap(t, s_chsh, a3) >= -1e-9);
    if candidates.is_empty() {
        return Err(ScenarioError::FitError(format!(
            "tilted CHSH value exceeds the quantum bound for every theta \
             (s_chsh = {s_chsh}, a3 = {a3})"
        )));
    }
    // best |gap|; break near-ties by matching the sign of <A_3> to cos(theta)
    candidates.sort_by(|&u, &v| {
        fit_gap(u, s_chsh, a3)
            .abs()
            .partial_cmp(&fit_gap(v, s_chsh, a3).abs())
            .unwrap()
    });
    let best = candidates[0];
    if candidates.len() == 2 {
        let diff =
            (fit_gap(candidates[0], s_chsh, a3).abs() - fit_gap(candidates[1], s_chsh, a3).abs())
                .abs();
        if diff < 1e-9 && a3 != 0.0 {
            for &t in &candidates {
                if (t.cos() >= 0.0) == (a3 >= 0.0) {
                    return Ok(t);
                }
            }
        }
    }
    Ok(best)
}

/// Fit from a tilted-CHSH value measured at evaluation angle `theta_eval`
/// (the angle whose alpha was used to form `i_alpha`).
pub fn fit_theta(i_alpha: f64, a3: f64, theta_eval: f64) -> Result<f64, ScenarioError> {
    let s_chsh = i_alpha - tilt_alpha(theta_eval) * a3;
    fit_theta_from_chsh(s_chsh, a3)
}

/// Triangular 3-outcome POVM: weights 2/3, Bloch directions at polar angles
/// {0, 2pi/3, 2pi/3} with azimuths {0, 0, pi}.
pub fn triangular_povm() -> RankOnePOVM {
    RankOnePOVM::new(vec![
        RankOnePOVMElement::new(2.0 / 3.0, 0.0, 0.0),
        RankOnePOVMElement::new(2.0 / 3.0, 2.0 * PI / 3.0, 0.0),
        RankOnePOVMElement::new(2.0 / 3.0, 2.0 * PI / 3.0, PI),
    ])
}

/// Square 4-outcome POVM: half-weighted projectors onto +x, -x, +z, -z.
pub fn square_povm() -> RankOnePOVM {
    RankOnePOVM::new(vec![
        RankOnePOVMElement::new(0.5, PI / 2.0, 0.0),
        RankOnePOVMElement::new(0.5, PI / 2.0, PI),
        RankOnePOVMElement::new(0.5, 0.0, 0.0),
        RankOnePOVMElement::new(0.5, PI, 0.0),
    ])
}

/// Sequential 4-outcome POVM F_{b1,b2} with Bloch directions
/// ((-1)^{b2} sin 2beta, 0, (-1)^{b1} cos 2beta) and weight 1/2, indexed
/// b = 2 b1 + b2.
pub fn sequential_povm(beta: f64) -> Result<RankOnePOVM, ScenarioError> {
    if !(beta > 0.0 && beta < PI / 4.0) {
        return Err(ScenarioError::DegenerateDecomposition(format!(
            "beta = {beta} must lie strictly inside (0, pi/4); at the endpoints \
             the four elements lose their 4-outcome rank-one structure"
        )));
    }
    let mut elements = Vec::with_capacity(4);
    for b1 in 0..2 {
        for b2 in 0..2 {
            let sx = if b2 == 0 { 1.0 } else { -1.0 };
            let sz = if b1 == 0 { 1.0 } else { -1.0 };
            let dir = [sx * (2.0 * beta).sin(), 0.0, sz * (2.0 * beta).cos()];
            let polar = dir[2].clamp(-1.0, 1.0).acos();
            let azimuth = if dir[0] >= 0.0 { 0.0 } else { PI };
            elements.push(RankOnePOVMElement::new(0.5, polar, azimuth));
        }
    }
    Ok(RankOnePOVM::new(elements))
}

/// One extremal half of a convex decomposition: which original outcomes it
/// occupies and the rescaled POVM living on them.
#[derive(Debug, Clone)]
pub struct DecompositionHalf {
    pub outcomes: Vec<usize>,
    pub povm: RankOnePOVM,
}

#[derive(Debug, Clone)]
pub struct PovmDecomposition {
    pub original: RankOnePOVM,
    pub halves: [DecompositionHalf; 2],
}

impl PovmDecomposition {
    /// Max entrywise deviation of (half_0 + half_1)/2 from the original,
    /// with halves embedded as zero outside their outcome slots.
    pub fn average_residual(&self) -> f64 {
        let d = self.original.d();
        let mut worst: f64 = 0.0;
        for b in 0..d {
            let mut avg = Mat2::zeros();
            for half in &self.halves {
                if let Some(pos) = half.outcomes.iter().position(|&o| o == b) {
                    avg += half.povm.elements[pos].matrix() * C64::new(0.5, 0.0);
                }
            }
            worst = worst.max(crate::qubit::max_modulus(&(avg - self.original.elements[b].matrix())));
        }
        worst
    }
}

fn two_outcome_half(original: &RankOnePOVM, outcomes: [usize; 2]) -> DecompositionHalf {
    let povm = RankOnePOVM::new(
        outcomes
            .iter()
            .map(|&b| {
                let e = original.elements[b];
                RankOnePOVMElement::new(2.0 * e.weight, e.polar, e.azimuth)
            })
            .collect(),
    );
    DecompositionHalf {
        outcomes: outcomes.to_vec(),
        povm,
    }
}

/// The unique decomposition of the square POVM into two projective pairs:
/// outcomes {0, 1} (the +/-x pair) and {2, 3} (the +/-z pair).
pub fn square_povm_decomposition() -> PovmDecomposition {
    let original = square_povm();
    let halves = [
        two_outcome_half(&original, [0, 1]),
        two_outcome_half(&original, [2, 3]),
    ];
    PovmDecomposition { original, halves }
}

/// Decomposition of the sequential POVM into its antipodal projective pairs
/// {F_00, F_11} and {F_01, F_10}.
pub fn sequential_povm_decomposition(beta: f64) -> Result<PovmDecomposition, ScenarioError> {
    let original = sequential_povm(beta)?;
    let halves = [
        two_outcome_half(&original, [0, 3]),
        two_outcome_half(&original, [1, 2]),
    ];
    Ok(PovmDecomposition { original, halves })
}

/// One experimental record in the Table-I layout.
#[derive(Debug, Clone, Serialize)]
pub struct ExperimentRecord {
    pub theta: f64,
    pub i_alpha: f64,
    pub s: f64,
    pub a3: Option<f64>,
    pub h_min: Option<f64>,
    pub h: Option<f64>,
}

impl ExperimentRecord {
    /// CHSH combination recovered from the tilted value at the record angle.
    pub fn s_chsh(&self, a3: f64) -> f64 {
        self.i_alpha - tilt_alpha(self.theta) * a3
    }
}

/// Parses CSV with columns theta,i_alpha,s and optional a3,h_min,h.
pub fn records_from_csv(text: &str) -> Result<Vec<ExperimentRecord>, ScenarioError> {
    let mut records = Vec::new();
    let mut header: Option<Vec<String>> = None;
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split(',').map(|s| s.trim()).collect();
        if header.is_none() {
            header = Some(cols.iter().map(|s| s.to_lowercase()).collect());
            continue;
        }
        let names = header.as_ref().unwrap();
        let get = |name: &str| -> Option<f64> {
            names
                .iter()
                .position(|n| n == name)
                .and_then(|i| cols.get(i))
                .and_then(|v| if v.is_empty() { None } else { v.parse().ok() })
        };
        let theta = get("theta").ok_or_else(|| {
            ScenarioError::Parse(format!("row missing required theta column: {line}"))
        })?;
        let i_alpha = get("i_alpha").ok_or_else(|| {
            ScenarioError::Parse(format!("row missing required i_alpha column: {line}"))
        })?;
        let s = get("s")
            .ok_or_else(|| ScenarioError::Parse(format!("row missing required s column: {line}")))?;
        records.push(ExperimentRecord {
            theta,
            i_alpha,
            s,
            a3: get("a3"),
            h_min: get("h_min"),
            h: get("h"),
        });
    }
    Ok(records)
}

pub fn records_to_csv(records: &[ExperimentRecord]) -> String {
    let mut out = String::from("theta,i_alpha,s,a3,h_min,h\n");
    let fmt = |v: Option<f64>| v.map(|x| format!("{x:.12}")).unwrap_or_default();
    for r in records {
        out.push_str(&format!(
            "{:.12},{:.12},{:.12},{},{},{}\n",
            r.theta,
            r.i_alpha,
            r.s,
            fmt(r.a3),
            fmt(r.h_min),
            fmt(r.h)
        ));
    }
    out
}

/// Probabilities of the POVM outcomes on the reduced (possibly noisy) state.
pub fn povm_outcome_probabilities(
    theta: f64,
    povm: &RankOnePOVM,
    noise: NoiseModel,
) -> Result<Vec<f64>, ScenarioError> {
    let rho = noisy_state(theta, noise)?;
    let rb = rho.bob_marginal();
    Ok(povm
        .matrices()
        .iter()
        .map(|f| (f * rb).trace().re)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::SQRT_2;

    #[test]
    fn noisy_state_limits() {
        let pure = noisy_state(PI / 2.0, NoiseModel::ideal()).unwrap();
        assert!(pure.is_pure());
        assert!((pure.density()[(0, 3)].re - 0.5).abs() < 1e-15);

        let mixed = noisy_state(PI / 2.0, NoiseModel::new(1.0, 0.0).unwrap()).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let expected = if i == j { 0.25 } else { 0.0 };
                assert!((mixed.density()[(i, j)].re - expected).abs() < 1e-15);
                assert!(mixed.density()[(i, j)].im.abs() < 1e-15);
            }
        }
        assert!(NoiseModel::new(0.6, 0.5).is_err());
    }

    #[test]
    fn visibility_closed_forms() {
        let (vz, vx) = visibilities(&noisy_state(PI / 2.0, NoiseModel::new(0.1, 0.0).unwrap()).unwrap());
        assert!((vz - 0.9).abs() < 1e-15);
        assert!((vx - 0.9).abs() < 1e-15);

        let (vz, vx) = visibilities(&noisy_state(PI / 3.0, NoiseModel::new(0.0, 0.2).unwrap()).unwrap());
        assert!((vz - 1.0).abs() < 1e-15);
        assert!((vx - 0.8 * (PI / 3.0).sin()).abs() < 1e-15);

        let (_, vx) = visibilities(&noisy_state(1.234, NoiseModel::ideal()).unwrap());
        assert!((vx - 1.234f64.sin()).abs() < 1e-15);

        // the paper's reported average noise point
        let (vz, _) = visibilities(
            &noisy_state(PI / 2.0, NoiseModel::new(0.007, 0.01).unwrap()).unwrap(),
        );
        assert!((vz - 0.993).abs() < 1e-15);
    }

    #[test]
    fn ideal_povm_outcomes_are_uniform_thirds() {
        let table =
            protocol_correlations(PI / 2.0, PI / 2.0, NoiseModel::ideal(), &triangular_povm())
                .unwrap();
        for b in 0..3 {
            assert!((table.povm_marginal(b).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn chsh_at_bell_state() {
        let table =
            protocol_correlations(PI / 2.0, PI / 2.0, NoiseModel::ideal(), &triangular_povm())
                .unwrap();
        let i0 = tilted_chsh(&table, 0.0).unwrap();
        assert!((i0 - 2.0 * SQRT_2).abs() < 1e-12, "I_0 = {i0}");

        let noisy = protocol_correlations(
            PI / 2.0,
            PI / 2.0,
            NoiseModel::new(0.05, 0.0).unwrap(),
            &triangular_povm(),
        )
        .unwrap();
        let i0 = tilted_chsh(&noisy, 0.0).unwrap();
        assert!((i0 - 2.0 * SQRT_2 * 0.95).abs() < 1e-12);
    }

    #[test]
    fn tilted_chsh_saturates_at_matching_alpha() {
        let theta = PI / 3.0;
        let table =
            protocol_correlations(theta, theta, NoiseModel::ideal(), &triangular_povm()).unwrap();
        let alpha = tilt_alpha(theta);
        let value = tilted_chsh(&table, alpha).unwrap();
        assert!((value - quantum_max(alpha)).abs() < 1e-10);
    }

    #[test]
    fn quantum_max_endpoints() {
        assert!((quantum_max(0.0) - 2.0 * SQRT_2).abs() < 1e-15);
        assert!((quantum_max(2.0) - 4.0).abs() < 1e-15);
    }

    #[test]
    fn generated_tables_are_normalized_and_nonsignaling() {
        for (theta, p, c) in [(PI / 2.0, 0.0, 0.0), (1.1, 0.1, 0.05), (2.0, 0.3, 0.2)] {
            let table = protocol_correlations(
                theta,
                theta,
                NoiseModel::new(p, c).unwrap(),
                &triangular_povm(),
            )
            .unwrap();
            assert!(table.normalization_residual() < 1e-10);
            assert!(table.no_signaling_residual() < 1e-10);
        }
    }

    #[test]
    fn fit_theta_round_trip() {
        for theta0 in [1.2, 1.9, 0.4, PI / 2.0] {
            let table =
                protocol_correlations(theta0, theta0, NoiseModel::ideal(), &triangular_povm())
                    .unwrap();
            let s_chsh = chsh_value(&table).unwrap();
            let a3 = table.alice_marginal(3).unwrap();
            let fit = fit_theta_from_chsh(s_chsh, a3).unwrap();
            assert!(
                (fit - theta0).abs() < 1e-6,
                "theta0 = {theta0}, fit = {fit}"
            );
        }
    }

    #[test]
    fn fit_theta_picks_branch_by_marginal_sign() {
        let theta0 = 1.9; // cos < 0
        let table = protocol_correlations(theta0, theta0, NoiseModel::ideal(), &triangular_povm())
            .unwrap();
        let i_alpha = tilted_chsh(&table, tilt_alpha(theta0)).unwrap();
        let a3 = table.alice_marginal(3).unwrap();
        let fit = fit_theta(i_alpha, a3, theta0).unwrap();
        assert!((fit - theta0).abs() < 1e-6, "fit = {fit}");
        assert!((fit - (PI - theta0)).abs() > 0.1);
    }

    #[test]
    fn fit_theta_reproduces_table_row() {
        // Table-row style input: a3 substituted by cos(theta_row)
        let theta_row = 1.629f64;
        let fit = fit_theta(2.825, theta_row.cos(), theta_row).unwrap();
        assert!((fit - theta_row).abs() < 1e-3, "fit = {fit}");
    }

    #[test]
    fn fit_theta_rejects_superquantum_rows() {
        assert!(matches!(
            fit_theta_from_chsh(4.5, 0.0),
            Err(ScenarioError::FitError(_))
        ));
    }

    #[test]
    fn square_povm_shape() {
        let p = square_povm();
        assert_eq!(p.d(), 4);
        for e in &p.elements {
            assert!((e.weight - 0.5).abs() < 1e-15);
        }
        // directions +x, -x, +z, -z
        let dirs: Vec<[f64; 3]> = p.elements.iter().map(|e| e.bloch_vector()).collect();
        assert!((dirs[0][0] - 1.0).abs() < 1e-15);
        assert!((dirs[1][0] + 1.0).abs() < 1e-12);
        assert!((dirs[2][2] - 1.0).abs() < 1e-15);
        assert!((dirs[3][2] + 1.0).abs() < 1e-15);
    }

    #[test]
    fn sequential_povm_structure() {
        let povm = sequential_povm(PI / 8.0).unwrap();
        assert!(povm.validate().is_valid());
        for e in &povm.elements {
            let f = e.matrix();
            assert!((crate::qubit::trace2(&f).re - 0.5).abs() < 1e-15);
            let ev = crate::qubit::hermitian_eigenvalues2(&f);
            assert!(ev[0].abs() < 1e-15, "rank-one violated: {ev:?}");
        }
        assert!(sequential_povm(0.0).is_err());
        assert!(sequential_povm(PI / 4.0).is_err());
    }

    #[test]
    fn decompositions_average_back() {
        let sq = square_povm_decomposition();
        assert!(sq.average_residual() < 1e-15);
        for half in &sq.halves {
            assert!(half.povm.validate().is_valid());
            assert!(half.povm.extremality().unwrap().extremal);
        }
        let seq = sequential_povm_decomposition(PI / 6.0).unwrap();
        assert!(seq.average_residual() < 1e-15);
        for half in &seq.halves {
            assert!(half.povm.validate().is_valid());
            assert!(half.povm.extremality().unwrap().extremal);
        }
    }

    #[test]
    fn correlation_csv_round_trip() {
        let table =
            protocol_correlations(1.3, 1.3, NoiseModel::new(0.02, 0.01).unwrap(), &square_povm())
                .unwrap();
        let text = table.to_csv();
        let back = CorrelationTable::from_csv(&text).unwrap();
        assert_eq!(table.povm_outcomes(), back.povm_outcomes());
        for x in ALICE_INPUTS {
            for y in BOB_INPUTS {
                let nb = if y == 2 { 4 } else { 2 };
                for a in 0..2 {
                    for b in 0..nb {
                        let p0 = table.prob(x, y, a, b).unwrap();
                        let p1 = back.prob(x, y, a, b).unwrap();
                        assert!((p0 - p1).abs() < 1e-15);
                    }
                }
            }
        }
    }

    #[test]
    fn record_csv_round_trip() {
        let records = vec![
            ExperimentRecord {
                theta: 1.629,
                i_alpha: 2.825,
                s: 0.953,
                a3: None,
                h_min: Some(0.96),
                h: Some(1.01),
            },
            ExperimentRecord {
                theta: 0.807,
                i_alpha: 3.208,
                s: 0.939,
                a3: Some(0.69),
                h_min: None,
                h: None,
            },
        ];
        let text = records_to_csv(&records);
        let back = records_from_csv(&text).unwrap();
        assert_eq!(back.len(), 2);
        assert!((back[0].theta - 1.629).abs() < 1e-12);
        assert!(back[0].a3.is_none());
        assert!((back[1].a3.unwrap() - 0.69).abs() < 1e-12);
        assert!((back[0].h.unwrap() - 1.01).abs() < 1e-12);
    }
}
