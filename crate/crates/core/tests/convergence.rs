//! Strong-convergence sanity check of the simulator: on a fixed Wiener path
//! (coarse increments obtained by summing fine ones), refining the grid must
//! shrink the gap between successive resolutions.
//!
//! The scenario emulates smoothly varying coefficients with a regime
//! staircase at the finest grid resolution, so every grid point of every
//! resolution lands exactly on a regime boundary and the only error source is
//! the within-step coefficient variation.

use cthedge_core::market::{simulate_with_increments, wiener_increments, DiffusionSpec, Regime, SimGrid};

const FINE_DT: f64 = 1e-3;

fn smooth_staircase_spec() -> DiffusionSpec {
    let two_pi = std::f64::consts::TAU;
    let regimes: Vec<Regime> = (0..1000)
        .map(|r| {
            let t = r as f64 * FINE_DT;
            Regime {
                start: t,
                drift: vec![0.8 * (two_pi * t).sin(), -0.5 * (two_pi * t + 1.0).cos()],
                diffusion: vec![
                    vec![0.5 + 0.25 * (two_pi * t).sin(), 0.0],
                    vec![0.1 * (two_pi * t).cos(), 0.6 + 0.2 * (two_pi * t + 0.5).sin()],
                ],
            }
        })
        .collect();
    DiffusionSpec::new(regimes).unwrap()
}

/// Sums blocks of `factor` fine increment rows into coarse rows.
fn coarsen(fine: &[Vec<f64>], factor: usize) -> Vec<Vec<f64>> {
    fine.chunks(factor)
        .map(|chunk| {
            let mut acc = vec![0.0; chunk[0].len()];
            for row in chunk {
                for (a, v) in acc.iter_mut().zip(row) {
                    *a += v;
                }
            }
            acc
        })
        .collect()
}

fn terminal_gap(spec: &DiffusionSpec, fine_dw: &[Vec<f64>], dt_a: f64, dt_b: f64) -> f64 {
    let grid_a = SimGrid::new(1.0, dt_a).unwrap();
    let grid_b = SimGrid::new(1.0, dt_b).unwrap();
    let factor_a = (dt_a / FINE_DT).round() as usize;
    let factor_b = (dt_b / FINE_DT).round() as usize;
    let xa = simulate_with_increments(spec, &grid_a, &coarsen(fine_dw, factor_a)).unwrap();
    let xb = simulate_with_increments(spec, &grid_b, &coarsen(fine_dw, factor_b)).unwrap();
    let ra = xa.row(grid_a.steps());
    let rb = xb.row(grid_b.steps());
    ra.iter()
        .zip(rb)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max)
}

#[test]
fn refining_the_grid_shrinks_the_coupled_gap() {
    let spec = smooth_staircase_spec();
    let fine_steps = (1.0 / FINE_DT).round() as usize;
    let mut ratios = Vec::new();
    for seed in 0..20u64 {
        let fine_dw = wiener_increments(seed, fine_steps, 2, FINE_DT).unwrap();
        let gap_coarse = terminal_gap(&spec, &fine_dw, 4e-3, 2e-3);
        let gap_fine = terminal_gap(&spec, &fine_dw, 2e-3, 1e-3);
        assert!(gap_fine > 0.0, "refinement gap unexpectedly zero");
        ratios.push(gap_coarse / gap_fine);
    }
    ratios.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = ratios[ratios.len() / 2];
    assert!(
        median >= 1.2,
        "median refinement ratio {median} below 1.2 ({ratios:?})"
    );
}

#[test]
fn drift_only_simulation_is_exact_at_any_resolution() {
    // piecewise-constant drift with boundaries on every grid: no
    // discretization error at all
    let spec = DiffusionSpec::new(vec![
        Regime {
            start: 0.0,
            drift: vec![0.4],
            diffusion: vec![vec![0.0]],
        },
        Regime {
            start: 0.5,
            drift: vec![-0.2],
            diffusion: vec![vec![0.0]],
        },
    ])
    .unwrap();
    for dt in [0.01, 0.005, 0.0025] {
        let grid = SimGrid::new(1.0, dt).unwrap();
        let dw = vec![vec![0.0]; grid.steps()];
        let paths = simulate_with_increments(&spec, &grid, &dw).unwrap();
        let x = paths.row(grid.steps())[0];
        assert!(
            (x - 0.1).abs() <= 1e-12,
            "drift-only terminal value {x} at dt {dt}"
        );
    }
}
