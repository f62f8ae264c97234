#![allow(dead_code)]

use batchedit::generator::GeneratorParams;
use batchedit::linalg::{norm, sub};
use batchedit::solver::{solve_edit, EditTarget, SolverConfig};
use batchedit::{features, init_generator, sample_latents, EditPair, LatentCode};

/// Central-difference gradient of a scalar function.
pub fn fd_gradient(f: impl Fn(&[f64]) -> f64, x: &[f64], step: f64) -> Vec<f64> {
    (0..x.len())
        .map(|i| {
            let mut up = x.to_vec();
            let mut dn = x.to_vec();
            up[i] += step;
            dn[i] -= step;
            (f(&up) - f(&dn)) / (2.0 * step)
        })
        .collect()
}

pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    norm(&sub(a, b)) / norm(b).max(1e-12)
}

/// Minimize a unimodal function on [lo, hi] by golden-section search.
pub fn golden_section(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = hi - inv_phi * (hi - lo);
    let mut d = lo + inv_phi * (hi - lo);
    while (hi - lo).abs() > tol {
        if f(c) < f(d) {
            hi = d;
        } else {
            lo = c;
        }
        c = hi - inv_phi * (hi - lo);
        d = lo + inv_phi * (hi - lo);
    }
    0.5 * (lo + hi)
}

/// Grid scan over [lo, hi] to bracket the minimum, then golden-section refine.
pub fn grid_then_golden(f: impl Fn(f64) -> f64, lo: f64, hi: f64, cells: usize) -> f64 {
    let h = (hi - lo) / cells as f64;
    let best = (0..=cells)
        .map(|i| lo + h * i as f64)
        .min_by(|a, b| f(*a).partial_cmp(&f(*b)).unwrap())
        .unwrap();
    golden_section(&f, best - h, best + h, 1e-12)
}

/// Attribute edited by the upright-pose scenario.
pub const POSE: usize = 0;
pub const MOUTH: usize = 3;

pub struct Scenario {
    pub params: GeneratorParams,
    pub pair: EditPair,
    pub tests: Vec<LatentCode>,
    pub held_out: Vec<LatentCode>,
}

/// Default generator for `seed`, an example whose pose attribute is far
/// from upright, and a solver edit that makes it upright (pose → 0) with
/// every other attribute anchored.
pub fn upright_scenario(seed: u64, n_tests: usize, n_held_out: usize) -> Scenario {
    let params = init_generator(seed, 32, 64, 5).unwrap();
    let w0 = sample_latents(1000 + seed, 64, 32)
        .into_iter()
        .find(|w| features(&params, w).unwrap().0[POSE].abs() >= 0.5)
        .expect("a tilted example among 64 draws");
    let target = EditTarget::anchored(5, &[(POSE, 0.0)]).unwrap();
    let out = solve_edit(&params, &w0, &target, &SolverConfig::default()).unwrap();
    Scenario {
        params,
        pair: out.pair,
        tests: sample_latents(2000 + seed, n_tests, 32),
        held_out: sample_latents(3000 + seed, n_held_out, 32),
    }
}
