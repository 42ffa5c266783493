use dicert::certify::{min_entropy, von_neumann_lb, CertifyOptions, ExtrasPolicy};
use dicert::ncpoly::{canonicalize, OpSymbol, Party, Reduced, Word};
use dicert::npa::{ConstraintMode, ConstraintSet};
use dicert::scenario::{protocol_correlations, triangular_povm, NoiseModel};
use dicert::tsirelson::derive_coefficients;
use std::f64::consts::PI;
use std::time::Instant;

fn w(syms: &[OpSymbol]) -> Option<Word> {
    match canonicalize(syms) {
        Reduced::Word(word) => Some(word),
        Reduced::Zero => None,
    }
}

// degree-3/4 extras for the entropy program: one- and two-letter projective
// prefixes times one Eve operator
fn bff_extras(d: usize, pairs: bool) -> Vec<Word> {
    let mut out = Vec::new();
    let mut prefixes: Vec<Vec<OpSymbol>> = vec![
        vec![OpSymbol::projector(Party::Alice, 0, 0)],
        vec![OpSymbol::projector(Party::Alice, 1, 0)],
        vec![OpSymbol::projector(Party::Bob, 0, 0)],
        vec![OpSymbol::projector(Party::Bob, 1, 0)],
    ];
    for b in 0..(d - 1) as u8 {
        prefixes.push(vec![OpSymbol::projector(Party::Bob, 2, b)]);
    }
    if pairs {
        prefixes.push(vec![
            OpSymbol::projector(Party::Alice, 0, 0),
            OpSymbol::projector(Party::Alice, 1, 0),
        ]);
        prefixes.push(vec![
            OpSymbol::projector(Party::Alice, 1, 0),
            OpSymbol::projector(Party::Alice, 0, 0),
        ]);
        for b in 0..(d - 1) as u8 {
            for x in 0..2u8 {
                prefixes.push(vec![
                    OpSymbol::projector(Party::Alice, x, 0),
                    OpSymbol::projector(Party::Bob, 2, b),
                ]);
            }
        }
    }
    for p in &prefixes {
        for zb in 0..d as u8 {
            for adj in [false, true] {
                let mut z = OpSymbol::eve_z(zb);
                if adj {
                    z = z.adjoint();
                }
                let mut syms = p.clone();
                syms.push(z);
                if let Some(word) = w(&syms) {
                    out.push(word);
                }
            }
        }
    }
    out
}

fn main() {
    let tri = triangular_povm();
    let coeffs = derive_coefficients(PI / 2.0, &tri).unwrap();
    let table = protocol_correlations(PI / 2.0, PI / 2.0, NoiseModel::ideal(), &tri).unwrap();

    // 1. triangular full-mode labels
    let cs_full = ConstraintSet::from_table(coeffs.clone(), &table, ConstraintMode::FullCorrelations).unwrap();
    let opts = CertifyOptions::default();
    let r = min_entropy(&cs_full, &opts).unwrap();
    println!("tri full: cons {:.7} est {:.7} | {} {:?} gap {:.1e}", r.p_g, r.p_g_estimate, r.diagnostics[0].label, r.diagnostics[0].status, r.diagnostics[0].gap);

    // 2. BFF node experiments
    let cs = ConstraintSet::from_table(coeffs, &table, ConstraintMode::BoundaryOnly).unwrap();
    for (name, restricted, extras) in [
        ("restricted singles      ", true, ExtrasPolicy::Custom(bff_extras(3, false))),
        ("restricted singles+pairs", true, ExtrasPolicy::Custom(bff_extras(3, true))),
        ("full lvl2 +pairs        ", false, ExtrasPolicy::Custom(bff_extras(3, true))),
    ] {
        let mut o = CertifyOptions::default();
        o.extras = extras;
        o.bff_projective_level_only = restricted;
        let t0 = Instant::now();
        match von_neumann_lb(&cs, 2, &o) {
            Ok(r) => {
                let d = &r.diagnostics[0];
                println!(
                    "bff {name}: H {:.5} (analytic 1.29840) | {} {:?} it {} gap {:.1e} cons {:.5} est {:.5} | {:?}",
                    r.h_vn.unwrap(), d.label, d.status, d.iterations, d.gap, d.conservative_value, d.primal_value, t0.elapsed()
                );
            }
            Err(e) => println!("bff {name}: ERROR {e}"),
        }
    }
}
