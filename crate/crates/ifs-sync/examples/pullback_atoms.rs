//! Pull-back disintegrations: push the stationary measure along ever longer
//! past words and watch it collapse onto finitely many atoms.
//!
//! The flattened system contracts on average, so the pull-back limit is a
//! single random atom. The equivariant system commutes with the half turn
//! `x -> x + 1/2`, which forces a two-atom limit with equal weights and
//! separation exactly 1/2.

use ifs_sync::analysis::pullback_atoms;
use ifs_sync::cocycle::SystemSpec;
use ifs_sync::driving::ProbabilityVector;
use ifs_sync::geometry::{distance, DiffeoSpec};
use ifs_sync::measures::stationary_mc;
use ifs_sync::rng::SplitMix64;

fn half_half(maps: Vec<DiffeoSpec>) -> SystemSpec {
    SystemSpec::finite(maps, ProbabilityVector::new(vec![0.5, 0.5]).unwrap()).unwrap()
}

fn main() {
    let mut rng = SplitMix64::new(55);

    let flattened = half_half(vec![
        DiffeoSpec::flat_ns(-0.12, 0.05, 0.01).unwrap(),
        DiffeoSpec::rotation(0.6180339887),
    ]);
    let long = stationary_mc(&flattened, 1000, 20_000, &mut rng).unwrap();
    let ensemble = long.thin(200);
    println!("flattened + rotation (negative exponent):");
    for depth in [10, 50, 200, 500] {
        let rep = pullback_atoms(&flattened, &ensemble, depth, 1e-4, &mut rng).unwrap();
        println!(
            "  depth {depth:4}: K = {:3}, max diameter {:.3e}{}",
            rep.atom_count,
            rep.max_intra_diameter,
            if rep.non_atomic { " (not collapsed yet)" } else { "" }
        );
    }

    let equivariant = half_half(vec![
        DiffeoSpec::equivariant_ns(-0.06).unwrap(),
        DiffeoSpec::rotation(0.6180339887),
    ]);
    let long = stationary_mc(&equivariant, 1000, 40_000, &mut rng).unwrap();
    let ensemble = long.thin(400);
    let rep = pullback_atoms(&equivariant, &ensemble, 500, 1e-4, &mut rng).unwrap();
    println!("\nhalf-turn equivariant system at depth 500:");
    println!("  K = {} atoms, weights {:?}", rep.atom_count, rep.weights);
    if rep.atom_count == 2 {
        let sep = distance(rep.centers[0], rep.centers[1]).unwrap();
        println!("  atom separation {sep:.9} (the half turn forces exactly 1/2)");
    }

    let rotations = half_half(vec![
        DiffeoSpec::rotation(0.6180339887),
        DiffeoSpec::rotation(0.4142135624),
    ]);
    let ensemble = stationary_mc(&rotations, 100, 5000, &mut rng)
        .unwrap()
        .thin(200);
    let rep = pullback_atoms(&rotations, &ensemble, 500, 1e-4, &mut rng).unwrap();
    println!(
        "\nrotations only: non_atomic = {} (isometries never collapse the cloud)",
        rep.non_atomic
    );
}
