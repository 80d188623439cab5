//! Frozen-oracle checks of the aggregation fold.
//!
//! The expected values were produced by an independent scripted computation
//! (scipy root finding over the average-potential equation plus a hand-rolled
//! fold); the test also re-derives them at runtime with a minimal
//! re-implementation that shares no code with the engine.

use approx::{assert_abs_diff_eq, assert_relative_eq};
use cthedge_core::engine::{init_state, step, AggregatorPolicy};

const INCREMENTS: [[f64; 3]; 10] = [
    [-0.026480, 0.036892, 0.017877],
    [-0.060616, -0.064340, -0.073706],
    [0.008636, -0.043280, -0.037532],
    [-0.040339, 0.047188, 0.044469],
    [0.037882, -0.123269, -0.018631],
    [0.071856, -0.034371, -0.015908],
    [0.034256, 0.014921, 0.026187],
    [-0.016939, 0.094833, -0.007775],
    [0.013915, -0.058718, 0.041447],
    [0.000362, 0.132834, 0.007533],
];

// Final state frozen from the scripted computation.
const FINAL_GAIN: f64 = -0.13814537181809766;
const FINAL_REGRETS: [f64; 3] = [
    0.16067837181809766,
    0.1408353718180977,
    0.12210637181809766,
];
const FINAL_SCALE: f64 = 0.010334893124486608;
const FINAL_WEIGHTS: [f64; 3] = [
    0.475161262662424,
    0.31180809957206057,
    0.2130306377655154,
];

/// Minimal independent fold: plain loops and a from-scratch bisection, no
/// engine or potential-module code.
mod independent {
    use std::f64::consts::E;

    fn avg_potential(r: &[f64], c: f64) -> f64 {
        r.iter()
            .map(|&x| if x > 0.0 { (x * x / (2.0 * c)).exp() } else { 1.0 })
            .sum::<f64>()
            / r.len() as f64
    }

    fn solve_scale(r: &[f64]) -> Option<f64> {
        let rmax = r.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if rmax <= 0.0 {
            return None;
        }
        let n = r.len() as f64;
        let mut lo = rmax * rmax / (2.0 * (1.0 + n.ln()));
        let mut hi = rmax * rmax / 2.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if avg_potential(r, mid) > E {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Some(0.5 * (lo + hi))
    }

    pub struct Fold {
        pub regrets: Vec<f64>,
        pub gain: f64,
        pub scale: Option<f64>,
        pub weights: Vec<f64>,
    }

    pub fn run(increments: &[[f64; 3]]) -> Fold {
        let n = 3;
        let mut weights = vec![1.0 / n as f64; n];
        let mut regrets = vec![0.0; n];
        let mut gain = 0.0;
        let mut scale = None;
        for dx in increments {
            let dg: f64 = weights.iter().zip(dx).map(|(p, d)| p * d).sum();
            for (r, d) in regrets.iter_mut().zip(dx) {
                *r += d - dg;
            }
            gain += dg;
            scale = solve_scale(&regrets);
            weights = match scale {
                Some(c) => {
                    let raw: Vec<f64> = regrets
                        .iter()
                        .map(|&x| if x > 0.0 { x / c * (x * x / (2.0 * c)).exp() } else { 0.0 })
                        .collect();
                    let sum: f64 = raw.iter().sum();
                    raw.iter().map(|v| v / sum).collect()
                }
                None => vec![1.0 / n as f64; n],
            };
        }
        Fold {
            regrets,
            gain,
            scale,
            weights,
        }
    }
}

#[test]
fn ten_step_fold_matches_frozen_oracle() {
    let mut state = init_state(3).unwrap();
    for dx in &INCREMENTS {
        state = step(&state, dx, &AggregatorPolicy::NormalHedge, 0.1).unwrap();
    }
    assert_abs_diff_eq!(state.gain, FINAL_GAIN, epsilon = 1e-8);
    for (got, want) in state.regrets.values().iter().zip(&FINAL_REGRETS) {
        assert_abs_diff_eq!(got, want, epsilon = 1e-8);
    }
    assert_relative_eq!(
        state.scale.unwrap().value(),
        FINAL_SCALE,
        max_relative = 1e-7
    );
    for (got, want) in state.weights.values().iter().zip(&FINAL_WEIGHTS) {
        assert_abs_diff_eq!(got, want, epsilon = 1e-7);
    }
}

#[test]
fn ten_step_fold_matches_runtime_reimplementation() {
    let mut state = init_state(3).unwrap();
    for dx in &INCREMENTS {
        state = step(&state, dx, &AggregatorPolicy::NormalHedge, 0.1).unwrap();
    }
    let oracle = independent::run(&INCREMENTS);
    assert_abs_diff_eq!(state.gain, oracle.gain, epsilon = 1e-10);
    for (got, want) in state.regrets.values().iter().zip(&oracle.regrets) {
        assert_abs_diff_eq!(got, want, epsilon = 1e-10);
    }
    assert_relative_eq!(
        state.scale.unwrap().value(),
        oracle.scale.unwrap(),
        max_relative = 1e-9
    );
    for (got, want) in state.weights.values().iter().zip(&oracle.weights) {
        assert_abs_diff_eq!(got, want, epsilon = 1e-9);
    }
}
