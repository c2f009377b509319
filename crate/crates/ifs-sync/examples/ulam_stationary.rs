//! Stationary measures two ways: the Ulam discretization of the transfer
//! operator (Cesaro-averaged power iteration) against plain Monte Carlo
//! orbit sampling.

use ifs_sync::cocycle::SystemSpec;
use ifs_sync::driving::ProbabilityVector;
use ifs_sync::geometry::DiffeoSpec;
use ifs_sync::measures::{
    bin_empirical, stationary_mc, stationary_power, support_coverage, tv_histogram, ulam_matrix,
    PartitionSpec, UlamHistogram,
};
use ifs_sync::rng::SplitMix64;

fn main() {
    let mut rng = SplitMix64::new(31);

    // a cyclic permutation matrix: Rotation(1/64) on 64 arcs
    let n = 64;
    let shift = SystemSpec::finite(
        vec![DiffeoSpec::rotation(1.0 / n as f64)],
        ProbabilityVector::new(vec![1.0]).unwrap(),
    )
    .unwrap();
    let part = PartitionSpec::circle(n).unwrap();
    let matrix = ulam_matrix(&shift, part, 100, &mut rng).unwrap();
    let exact = (0..n).all(|c| (0..n).all(|d| {
        matrix.entry(c, d) == if d == (c + 1) % n { 1.0 } else { 0.0 }
    }));
    println!("Rotation(1/64) Ulam matrix is the exact cyclic permutation: {exact}");
    let fixed = stationary_power(&matrix, 1e-9, 100_000).unwrap();
    let to_uniform = tv_histogram(&fixed, &UlamHistogram::uniform(part)).unwrap();
    println!("Cesaro fixed point distance to uniform: {to_uniform:.3e}");

    // flattened north-south + golden rotation at 256 cells
    let sys = SystemSpec::finite(
        vec![
            DiffeoSpec::flat_ns(-0.12, 0.05, 0.01).unwrap(),
            DiffeoSpec::rotation(0.6180339887),
        ],
        ProbabilityVector::new(vec![0.5, 0.5]).unwrap(),
    )
    .unwrap();
    let part = PartitionSpec::circle(256).unwrap();
    let matrix = ulam_matrix(&sys, part, 400, &mut rng).unwrap();
    let from_power = stationary_power(&matrix, 1e-6, 200_000).unwrap();
    let from_mc = stationary_mc(&sys, 1000, 1_000_000, &mut rng).unwrap();
    let binned = bin_empirical(&from_mc, part).unwrap();
    println!(
        "\nflattened + rotation, 256 cells:\n  TV(Ulam fixed point, MC histogram) = {:.4}",
        tv_histogram(&from_power, &binned).unwrap()
    );
    println!(
        "  support coverage above 1% of uniform: power {:.3}, mc {:.3}",
        support_coverage(&from_power, 0.01).unwrap(),
        support_coverage(&binned, 0.01).unwrap()
    );

    // a histogram sketch of the stationary density (quartile marks)
    let max = from_power.mass.iter().cloned().fold(0.0f64, f64::max);
    let mut sketch = String::new();
    for chunk in from_power.mass.chunks(4) {
        let level = chunk.iter().sum::<f64>() / chunk.len() as f64 / max;
        sketch.push(match (level * 4.0) as usize {
            0 => '.',
            1 => ':',
            2 => '+',
            3 => '*',
            _ => '#',
        });
    }
    println!("  density sketch over the circle (peak = attractor at 0):\n  {sketch}");
}
