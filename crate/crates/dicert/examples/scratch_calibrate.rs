use dicert::certify::{min_entropy, von_neumann_lb, CertifyOptions};
use dicert::npa::{ConstraintMode, ConstraintSet};
use dicert::scenario::{protocol_correlations, square_povm, triangular_povm, NoiseModel};
use dicert::tsirelson::derive_coefficients;
use std::f64::consts::PI;
use std::time::Instant;

fn cert(label: &str, theta: f64, povm: &dicert::qubit::RankOnePOVM, mode: ConstraintMode, opts: &CertifyOptions) {
    let coeffs = derive_coefficients(theta, povm).unwrap();
    let table = protocol_correlations(theta, theta, NoiseModel::ideal(), povm).unwrap();
    let cs = ConstraintSet::from_table(coeffs, &table, mode).unwrap();
    let mut opts = opts.clone();
    opts.exact_reference = Some((theta, povm.clone()));
    let t0 = Instant::now();
    match min_entropy(&cs, &opts) {
        Ok(r) => {
            let d = &r.diagnostics[0];
            println!(
                "{label}: pg_cons {:.7} pg_est {:.7} hmin {:.5} | {:?} it {} gap {:.1e} | {:?}",
                r.p_g, r.p_g_estimate, r.h_min, d.status, d.iterations, d.gap, t0.elapsed()
            );
        }
        Err(e) => println!("{label}: ERROR {e}"),
    }
}

fn main() {
    let opts = CertifyOptions::default();
    let tri = triangular_povm();
    let sq = square_povm();
    cert("tri ideal boundary (1/3)   ", PI / 2.0, &tri, ConstraintMode::BoundaryOnly, &opts);
    cert("tri ideal full     (1/3)   ", PI / 2.0, &tri, ConstraintMode::FullCorrelations, &opts);
    cert("sq pi/3 boundary   (0.75)  ", PI / 3.0, &sq, ConstraintMode::BoundaryOnly, &opts);
    cert("sq pi/3 full       (0.625) ", PI / 3.0, &sq, ConstraintMode::FullCorrelations, &opts);
    cert("sq pi/2 boundary   (0.5)   ", PI / 2.0, &sq, ConstraintMode::BoundaryOnly, &opts);
    cert("sq 2pi/3 boundary  (0.75)  ", 2.0 * PI / 3.0, &sq, ConstraintMode::BoundaryOnly, &opts);

    // BFF single-node timing at level 2 (quad m=2 -> one node)
    let coeffs = derive_coefficients(PI / 2.0, &tri).unwrap();
    let table = protocol_correlations(PI / 2.0, PI / 2.0, NoiseModel::ideal(), &tri).unwrap();
    let cs = ConstraintSet::from_table(coeffs, &table, ConstraintMode::BoundaryOnly).unwrap();
    let mut opts2 = opts.clone();
    opts2.exact_reference = Some((PI / 2.0, tri.clone()));
    let t0 = Instant::now();
    match von_neumann_lb(&cs, 2, &opts2) {
        Ok(r) => println!(
            "bff m=2 ideal tri: H_vn {:.5} (analytic cap {:.5}) | node status {:?} it {} gap {:.2e} | {:?}",
            r.h_vn.unwrap(), 1.2984, r.diagnostics[0].status, r.diagnostics[0].iterations, r.diagnostics[0].gap, t0.elapsed()
        ),
        Err(e) => println!("bff m=2: ERROR {e}"),
    }
}
