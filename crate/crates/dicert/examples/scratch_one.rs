use dicert::certify::{min_entropy, CertifyOptions};
use dicert::npa::{ConstraintMode, ConstraintSet};
use dicert::scenario::{protocol_correlations, square_povm, NoiseModel};
use dicert::tsirelson::derive_coefficients;
use std::f64::consts::PI;

fn main() {
    let sq = square_povm();
    let coeffs = derive_coefficients(PI / 2.0, &sq).unwrap();
    let table = protocol_correlations(PI / 2.0, PI / 2.0, NoiseModel::ideal(), &sq).unwrap();
    let cs = ConstraintSet::from_table(coeffs, &table, ConstraintMode::BoundaryOnly).unwrap();
    let mut opts = CertifyOptions::default();
    opts.exact_reference = Some((PI / 2.0, sq.clone()));
    match min_entropy(&cs, &opts) {
        Ok(r) => println!("sq pi/2: cons {:.8} est {:.8} [{}]", r.p_g, r.p_g_estimate, r.diagnostics[0].label),
        Err(e) => println!("ERROR {e}"),
    }
}
