use std::sync::Arc;

use sseplab::dynamics::direct_exclusion;
use sseplab::graphical::{window_halfwidth, EventLog};
use sseplab::harness::ExperimentSpec;
use sseplab::lattice::{Density, LatticeWindow, SeedSpec};
use sseplab::observables::{current, tagged_path};
use sseplab::stats::ensemble::{replicate_start, run_ensemble, Observable};
use sseplab::stats::scaling::{modulus_diagnostic, tagged_current_gap, variance_scaling};
use sseplab::stats::Bootstrap;

fn ensemble(lambda: f64, n: u64) -> sseplab::stats::EnsembleSummary {
    let mut spec = ExperimentSpec::new(0.5, lambda, 99);
    spec.replicates = n;
    spec.retain_paths = true;
    run_ensemble(&spec).unwrap()
}

#[test]
fn modulus_shrinks_with_delta() {
    let e = ensemble(256.0, 1000);
    let paths = e.j_paths().unwrap();
    let deltas = [1.0, 0.25, 1.0 / 16.0, 1.0 / 64.0, 1.0 / 256.0];
    let table = modulus_diagnostic(&paths, 256, &deltas, &[2.0, 1.0]);
    let at = |eps: f64| -> Vec<f64> {
        table
            .iter()
            .filter(|r| r.epsilon == eps)
            .map(|r| r.probability)
            .collect()
    };
    let (wide, narrow) = (at(2.0), at(1.0));
    assert!(wide.windows(2).all(|w| w[0] >= w[1]), "{wide:?}");
    assert!(wide[0] < 0.01, "{wide:?}");
    assert!(narrow[..4].windows(2).all(|w| w[0] > w[1]), "{narrow:?}");
    assert!(narrow[4] < 0.01, "{narrow:?}");
    // whole interval: the range of the path
    let ranges = paths
        .iter()
        .filter(|p| {
            let hi = *p[..=256].iter().max().unwrap();
            let lo = *p[..=256].iter().min().unwrap();
            (hi - lo) as f64 * 0.25 >= 1.0
        })
        .count();
    assert_eq!(narrow[0], ranges as f64 / paths.len() as f64);
}

#[test]
fn crossing_count_scaling() {
    let e = ensemble(256.0, 1000);
    let fit = variance_scaling(&e, Observable::K, &Bootstrap::default()).unwrap();
    assert!((0.42..=0.58).contains(&fit.slope), "{fit:?}");
}

#[test]
fn gap_two_ways() {
    let lambda = 64.0;
    let rho = Density::new(0.5).unwrap();
    let w = window_halfwidth(lambda, 1e-9);
    let window = LatticeWindow::new(w);
    let master = SeedSpec::new(5);
    let scale = lambda.powf(-0.25);
    let mut x_paths = Vec::new();
    let mut j_paths = Vec::new();
    for r in 0..20 {
        let (config, seed, _) = replicate_start(window, rho, &master, r).unwrap();
        let log = Arc::new(EventLog::generate(window, lambda, &seed));
        let traj = direct_exclusion(&config, &log).unwrap();
        let cur = current(&traj);
        let tag = tagged_path(&traj).unwrap();
        let mut xs = Vec::new();
        let mut js = Vec::new();
        for i in 0..=64 {
            let t = i as f64;
            let j = cur.value(t);
            let via_label = tag.label_position(j, t).unwrap();
            let a = scale * (tag.position(t) as f64 - j as f64 / 0.5).abs();
            let b = scale * (via_label as f64 - j as f64 / 0.5).abs();
            assert_eq!(a.to_bits(), b.to_bits());
            xs.push(tag.position(t) as i64);
            js.push(j);
        }
        x_paths.push(xs);
        j_paths.push(js);
    }
    let xr: Vec<&[i64]> = x_paths.iter().map(|p| p.as_slice()).collect();
    let jr: Vec<&[i64]> = j_paths.iter().map(|p| p.as_slice()).collect();
    let report = tagged_current_gap(&xr, &jr, lambda, 0.5).unwrap();
    assert_eq!(report.gaps.len(), 20);
    assert!(report.median <= report.q90);
}

#[test]
fn fused_and_modular_paths_agree() {
    let e = ensemble(32.0, 10);
    let rho = Density::new(0.5).unwrap();
    let window = LatticeWindow::new(e.half_width);
    let master = SeedSpec::new(99);
    for rec in &e.records {
        let (config, seed, _) = replicate_start(window, rho, &master, rec.replicate).unwrap();
        let log = Arc::new(EventLog::generate(window, 32.0, &seed));
        let traj = direct_exclusion(&config, &log).unwrap();
        let cur = current(&traj);
        let tag = tagged_path(&traj).unwrap();
        let paths = rec.paths.as_ref().unwrap();
        for i in 0..=32usize {
            assert_eq!(paths.j[i], cur.value(i as f64));
            assert_eq!(paths.x[i], tag.position(i as f64) as i64);
        }
    }
}
