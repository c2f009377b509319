//! Fiber Lyapunov exponents for three reference systems.
//!
//! 1. Two irrational rotations: exponent exactly zero (isometries).
//! 2. Two north-south maps sharing the fixed point 0 with derivatives 0.5
//!    and 0.8 there: the stationary measure is the delta at 0, so the
//!    exponent has the closed form (ln 0.5 + ln 0.8) / 2.
//! 3. The flattened north-south map plus a golden rotation: the flat spot
//!    drags the exponent negative, and the annealed bound
//!    `sum_i p_i int ln |Df_i| dm` confirms it.

use ifs_sync::analysis::{lyapunov_top, lyapunov_upper_bound};
use ifs_sync::cocycle::SystemSpec;
use ifs_sync::driving::ProbabilityVector;
use ifs_sync::geometry::DiffeoSpec;
use ifs_sync::measures::stationary_mc;
use ifs_sync::rng::SplitMix64;
use std::f64::consts::TAU;

fn half_half(maps: Vec<DiffeoSpec>) -> SystemSpec {
    SystemSpec::finite(maps, ProbabilityVector::new(vec![0.5, 0.5]).unwrap()).unwrap()
}

fn main() {
    let mut rng = SplitMix64::new(7);

    let rotations = half_half(vec![
        DiffeoSpec::rotation(0.6180339887),
        DiffeoSpec::rotation(0.4142135624),
    ]);
    let est = lyapunov_top(&rotations, 100_000, 1000, 10, &mut rng).unwrap();
    println!(
        "rotations:      lambda_1 = {:+.6e} +- {:.1e}   (exact: 0)",
        est.exponents[0], est.std_errors[0]
    );

    let common_fixed = half_half(vec![
        DiffeoSpec::north_south(-0.5 / TAU).unwrap(),
        DiffeoSpec::north_south(-0.2 / TAU).unwrap(),
    ]);
    let est = lyapunov_top(&common_fixed, 500_000, 1000, 10, &mut rng).unwrap();
    let closed_form = 0.5 * (0.5f64.ln() + 0.8f64.ln());
    println!(
        "common fixed pt: lambda_1 = {:+.6} +- {:.1e}   (closed form {closed_form:+.6})",
        est.exponents[0], est.std_errors[0]
    );

    let flattened = half_half(vec![
        DiffeoSpec::flat_ns(-0.12, 0.05, 0.01).unwrap(),
        DiffeoSpec::rotation(0.6180339887),
    ]);
    let est = lyapunov_top(&flattened, 500_000, 1000, 20, &mut rng).unwrap();
    let m = stationary_mc(&flattened, 1000, 100_000, &mut rng).unwrap();
    let bound = lyapunov_upper_bound(&flattened, &m).unwrap();
    println!(
        "flattened + rot: lambda_1 = {:+.6} +- {:.1e}   (annealed bound {bound:+.6})",
        est.exponents[0], est.std_errors[0]
    );
    println!(
        "                 negative at 3 SE: {}",
        est.exponents[0] + 3.0 * est.std_errors[0] < 0.0
    );
}
