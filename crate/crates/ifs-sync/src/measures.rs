//! Measure representations and the transfer operator `P m = sum_i p_i f_i m`:
//! Monte Carlo stationary measures, Ulam discretization, Cesaro fixed points,
//! and measure distances.
//!
//! Point clouds carry equal weights throughout; histograms live on circle
//! arc partitions or equal-area sphere grids (equal-z latitude bands times
//! longitude sectors).

use crate::cocycle::{CocycleError, SystemSpec};
use crate::geometry::{
    uniform_point, wrap_unit, DiffeoSpec, GeometryError, Manifold, Point,
};
use crate::rng::SplitMix64;
use rayon::prelude::*;
use std::f64::consts::TAU;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MeasureError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Cocycle(#[from] CocycleError),
    #[error("partition resolution {0} below 2")]
    ResolutionTooSmall(usize),
    #[error("partitions do not match")]
    PartitionMismatch,
    #[error("empirical measure must be nonempty")]
    EmptyMeasure,
    #[error("operation requires a finite IFS")]
    NeedsFiniteIfs,
    #[error("operation requires the circle")]
    NeedsCircle,
    #[error("power iteration hit max_iter = {max_iter} with residual {residual}")]
    MaxIterExceeded { max_iter: usize, residual: f64 },
    #[error("floor fraction {0} outside [0, 1)")]
    BadFloor(f64),
}

/// Partition of the manifold into cells of equal volume: `N` arcs on the
/// circle, `bands x sectors` equal-area cells on the sphere (bands are
/// equal slices in `z`).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PartitionSpec {
    Circle { cells: usize },
    Sphere { bands: usize, sectors: usize },
}

impl PartitionSpec {
    pub fn circle(cells: usize) -> Result<Self, MeasureError> {
        if cells < 2 {
            return Err(MeasureError::ResolutionTooSmall(cells));
        }
        Ok(PartitionSpec::Circle { cells })
    }

    pub fn sphere(bands: usize, sectors: usize) -> Result<Self, MeasureError> {
        if bands < 2 || sectors < 2 {
            return Err(MeasureError::ResolutionTooSmall(bands.min(sectors)));
        }
        Ok(PartitionSpec::Sphere { bands, sectors })
    }

    pub fn manifold(&self) -> Manifold {
        match self {
            PartitionSpec::Circle { .. } => Manifold::Circle,
            PartitionSpec::Sphere { .. } => Manifold::Sphere,
        }
    }

    pub fn cells(&self) -> usize {
        match self {
            PartitionSpec::Circle { cells } => *cells,
            PartitionSpec::Sphere { bands, sectors } => bands * sectors,
        }
    }

    /// Index of the cell containing the point.
    pub fn cell_of(&self, p: Point) -> Result<usize, MeasureError> {
        match (self, p) {
            (PartitionSpec::Circle { cells }, Point::Circle(c)) => {
                Ok(((c.angle() * *cells as f64) as usize).min(cells - 1))
            }
            (PartitionSpec::Sphere { bands, sectors }, Point::Sphere(s)) => {
                let v = s.coords();
                let band = (((1.0 - v[2]) / 2.0 * *bands as f64) as usize).min(bands - 1);
                let phi = wrap_unit(v[1].atan2(v[0]) / TAU);
                let sector = ((phi * *sectors as f64) as usize).min(sectors - 1);
                Ok(band * sectors + sector)
            }
            _ => Err(MeasureError::Geometry(GeometryError::ManifoldMismatch {
                expected: self.manifold(),
                got: p.manifold(),
            })),
        }
    }

    /// Uniform point inside the given cell.
    pub fn sample_in_cell(&self, cell: usize, rng: &mut SplitMix64) -> Point {
        match self {
            PartitionSpec::Circle { cells } => {
                let n = *cells as f64;
                Point::circle((cell as f64 + rng.next_f64()) / n)
            }
            PartitionSpec::Sphere { bands, sectors } => {
                let band = cell / sectors;
                let sector = cell % sectors;
                let z_hi = 1.0 - 2.0 * band as f64 / *bands as f64;
                let z_lo = 1.0 - 2.0 * (band + 1) as f64 / *bands as f64;
                let z = rng.uniform(z_lo, z_hi);
                let phi = TAU * (sector as f64 + rng.next_f64()) / *sectors as f64;
                let r = (1.0 - z * z).max(0.0).sqrt();
                Point::sphere([r * phi.cos(), r * phi.sin(), z]).expect("unit vector")
            }
        }
    }
}

/// Nonnegative mass per partition cell, summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct UlamHistogram {
    pub part: PartitionSpec,
    pub mass: Vec<f64>,
}

impl UlamHistogram {
    pub fn uniform(part: PartitionSpec) -> Self {
        let n = part.cells();
        UlamHistogram {
            part,
            mass: vec![1.0 / n as f64; n],
        }
    }
}

/// Equal-weight point cloud.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalMeasure {
    points: Vec<Point>,
}

impl EmpiricalMeasure {
    pub fn new(points: Vec<Point>) -> Result<Self, MeasureError> {
        if points.is_empty() {
            return Err(MeasureError::EmptyMeasure);
        }
        if let Some(bad) = points.iter().find(|p| p.manifold() != points[0].manifold()) {
            return Err(MeasureError::Geometry(GeometryError::ManifoldMismatch {
                expected: points[0].manifold(),
                got: bad.manifold(),
            }));
        }
        Ok(EmpiricalMeasure { points })
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    #[allow(clippy::len_without_is_empty)] // nonempty by construction
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn manifold(&self) -> Manifold {
        self.points[0].manifold()
    }

    /// Evenly thinned sub-cloud of (up to) `count` points; decorrelates
    /// consecutive orbit samples.
    pub fn thin(&self, count: usize) -> EmpiricalMeasure {
        let n = self.points.len();
        let count = count.clamp(1, n);
        let points = (0..count).map(|i| self.points[i * n / count]).collect();
        EmpiricalMeasure { points }
    }
}

/// Row-stochastic Ulam matrix over a partition.
#[derive(Debug, Clone)]
pub struct UlamMatrix {
    pub part: PartitionSpec,
    data: Vec<f64>,
}

impl UlamMatrix {
    pub fn cells(&self) -> usize {
        self.part.cells()
    }

    pub fn row(&self, c: usize) -> &[f64] {
        let n = self.cells();
        &self.data[c * n..(c + 1) * n]
    }

    pub fn entry(&self, c: usize, d: usize) -> f64 {
        self.data[c * self.cells() + d]
    }

    /// Left action `v -> v M` (push a mass vector one step forward).
    pub fn push_vector(&self, v: &[f64]) -> Vec<f64> {
        let n = self.cells();
        let mut out = vec![0.0; n];
        for (c, &mass) in v.iter().enumerate() {
            if mass == 0.0 {
                continue;
            }
            let row = self.row(c);
            for (o, r) in out.iter_mut().zip(row) {
                *o += mass * r;
            }
        }
        out
    }
}

/// Monte Carlo Ulam discretization of the transfer operator:
/// `M[c][c'] = sum_i p_i (fraction of cell-c samples that f_i maps to c')`.
///
/// Rows are computed in parallel with per-cell substreams keyed by
/// `(seed, cell)`, so the result is independent of the worker count.
pub fn ulam_matrix(
    sys: &SystemSpec,
    part: PartitionSpec,
    samples_per_cell: usize,
    rng: &mut SplitMix64,
) -> Result<UlamMatrix, MeasureError> {
    let SystemSpec::FiniteIfs { maps, probs } = sys else {
        return Err(MeasureError::NeedsFiniteIfs);
    };
    if part.manifold() != sys.manifold() {
        return Err(MeasureError::Geometry(GeometryError::ManifoldMismatch {
            expected: sys.manifold(),
            got: part.manifold(),
        }));
    }
    let n = part.cells();
    let seed = rng.next_u64();
    let rows: Result<Vec<Vec<f64>>, MeasureError> = (0..n)
        .into_par_iter()
        .map(|cell| {
            let mut local = SplitMix64::substream(seed, cell as u64);
            // integer hit counts per map keep rows exact when a map sends a
            // cell onto a single cell (permutation matrices come out exact)
            let mut hits = vec![0u64; n * maps.len()];
            for _ in 0..samples_per_cell {
                let x = part.sample_in_cell(cell, &mut local);
                for (i, map) in maps.iter().enumerate() {
                    let image = map.eval(x)?;
                    hits[i * n + part.cell_of(image)?] += 1;
                }
            }
            let mut row = vec![0.0; n];
            for (i, _) in maps.iter().enumerate() {
                let p = probs.prob(i);
                for (r, &h) in row.iter_mut().zip(&hits[i * n..(i + 1) * n]) {
                    if h > 0 {
                        *r += p * (h as f64 / samples_per_cell as f64);
                    }
                }
            }
            Ok(row)
        })
        .collect();
    let mut data = Vec::with_capacity(n * n);
    for row in rows? {
        data.extend_from_slice(&row);
    }
    Ok(UlamMatrix { part, data })
}

/// One Markov step of the whole cloud: every point is moved by a map drawn
/// from the system's distribution.
pub fn transfer_push(
    sys: &SystemSpec,
    m: &EmpiricalMeasure,
    rng: &mut SplitMix64,
) -> Result<EmpiricalMeasure, MeasureError> {
    let points: Result<Vec<Point>, MeasureError> = m
        .points()
        .iter()
        .map(|&x| Ok(sys.sample_step(rng)?.eval(x)?))
        .collect();
    EmpiricalMeasure::new(points?)
}

/// Cesaro-averaged power iteration from the uniform vector. Stops when the
/// running average `a_N` satisfies `|a_N M - a_N|_1 <= tol`; that residual
/// telescopes to `|v_N - v_0|_1 / N`, so periodic (permutation-like)
/// matrices converge too.
pub fn stationary_power(
    matrix: &UlamMatrix,
    tol: f64,
    max_iter: usize,
) -> Result<UlamHistogram, MeasureError> {
    let n = matrix.cells();
    let v0 = vec![1.0 / n as f64; n];
    let mut v = v0.clone();
    let mut sum = vec![0.0; n];
    let mut residual = f64::INFINITY;
    for k in 1..=max_iter {
        for (s, x) in sum.iter_mut().zip(&v) {
            *s += x;
        }
        v = matrix.push_vector(&v);
        residual = v
            .iter()
            .zip(&v0)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
            / k as f64;
        if residual <= tol {
            let total: f64 = sum.iter().sum();
            let mass = sum.iter().map(|s| s / total).collect();
            return Ok(UlamHistogram {
                part: matrix.part,
                mass,
            });
        }
    }
    Err(MeasureError::MaxIterExceeded { max_iter, residual })
}

/// How an orbit is started; `stationary_mc` uses `Uniform`.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialDistribution {
    Uniform,
    Delta(Point),
    /// Uniform on an arc around `center` (circle) or a geodesic cap of
    /// radius `halfwidth` (sphere).
    Arc { center: Point, halfwidth: f64 },
}

impl InitialDistribution {
    pub fn draw(&self, manifold: Manifold, rng: &mut SplitMix64) -> Result<Point, MeasureError> {
        match self {
            InitialDistribution::Uniform => Ok(uniform_point(manifold, rng)),
            InitialDistribution::Delta(p) => {
                if p.manifold() != manifold {
                    return Err(MeasureError::Geometry(GeometryError::ManifoldMismatch {
                        expected: manifold,
                        got: p.manifold(),
                    }));
                }
                Ok(*p)
            }
            InitialDistribution::Arc { center, halfwidth } => match center {
                Point::Circle(c) => Ok(Point::circle(
                    c.angle() + rng.uniform(-halfwidth, *halfwidth),
                )),
                Point::Sphere(c) => {
                    // uniform on the cap, sampled in the north-pole frame and
                    // rotated onto the center
                    let z = rng.uniform(halfwidth.cos(), 1.0);
                    let phi = rng.uniform(0.0, TAU);
                    let r = (1.0 - z * z).max(0.0).sqrt();
                    let local = Point::sphere([r * phi.cos(), r * phi.sin(), z])?;
                    let t = c.coords();
                    let tilt = (t[0] * t[0] + t[1] * t[1]).sqrt().atan2(t[2]);
                    if tilt < 1e-12 {
                        return Ok(local);
                    }
                    let rot = DiffeoSpec::sphere_rotation([-t[1], t[0], 0.0], tilt)
                        .unwrap_or(DiffeoSpec::sphere_rotation([1.0, 0.0, 0.0], tilt).unwrap());
                    Ok(rot.eval(local)?)
                }
            },
        }
    }
}

/// Ergodic sampling of the stationary measure: one long random orbit from a
/// uniform start, discarding `n_burn` points and keeping `n_keep`.
pub fn stationary_mc(
    sys: &SystemSpec,
    n_burn: usize,
    n_keep: usize,
    rng: &mut SplitMix64,
) -> Result<EmpiricalMeasure, MeasureError> {
    stationary_mc_from(sys, &InitialDistribution::Uniform, n_burn, n_keep, rng)
}

/// `stationary_mc` with the first point drawn from the given distribution.
pub fn stationary_mc_from(
    sys: &SystemSpec,
    init: &InitialDistribution,
    n_burn: usize,
    n_keep: usize,
    rng: &mut SplitMix64,
) -> Result<EmpiricalMeasure, MeasureError> {
    if n_keep == 0 {
        return Err(MeasureError::EmptyMeasure);
    }
    let mut x = init.draw(sys.manifold(), rng)?;
    for _ in 0..n_burn {
        x = sys.sample_step(rng)?.eval(x)?;
    }
    let mut points = Vec::with_capacity(n_keep);
    points.push(x);
    for _ in 1..n_keep {
        x = sys.sample_step(rng)?.eval(x)?;
        points.push(x);
    }
    EmpiricalMeasure::new(points)
}

/// Bin an empirical measure onto a partition.
pub fn bin_empirical(
    m: &EmpiricalMeasure,
    part: PartitionSpec,
) -> Result<UlamHistogram, MeasureError> {
    let mut mass = vec![0.0; part.cells()];
    let w = 1.0 / m.len() as f64;
    for &p in m.points() {
        mass[part.cell_of(p)?] += w;
    }
    Ok(UlamHistogram { part, mass })
}

/// Wasserstein-1 distance on the circle between two equal-weight clouds:
/// the integral of `|F_a - F_b - t*|` with `t*` the Lebesgue-weighted median
/// of the CDF difference (the optimal rotation of the transport).
pub fn wasserstein1_circle(
    a: &EmpiricalMeasure,
    b: &EmpiricalMeasure,
) -> Result<f64, MeasureError> {
    if a.manifold() != Manifold::Circle || b.manifold() != Manifold::Circle {
        return Err(MeasureError::NeedsCircle);
    }
    // the CDF difference G is piecewise constant with jumps at the samples
    let mut events: Vec<(f64, f64)> = Vec::with_capacity(a.len() + b.len());
    let wa = 1.0 / a.len() as f64;
    let wb = 1.0 / b.len() as f64;
    for p in a.points() {
        events.push((p.as_circle()?.angle(), wa));
    }
    for p in b.points() {
        events.push((p.as_circle()?.angle(), -wb));
    }
    events.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap());

    let mut segments: Vec<(f64, f64)> = Vec::with_capacity(events.len());
    let mut g = 0.0;
    for (i, &(pos, jump)) in events.iter().enumerate() {
        g += jump;
        let next = if i + 1 < events.len() {
            events[i + 1].0
        } else {
            events[0].0 + 1.0
        };
        let len = next - pos;
        if len > 0.0 {
            segments.push((g, len));
        }
    }
    // Lebesgue-weighted median of G over the segment lengths
    segments.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap());
    let mut acc = 0.0;
    let mut median = segments.last().map(|s| s.0).unwrap_or(0.0);
    for &(value, len) in &segments {
        acc += len;
        if acc >= 0.5 {
            median = value;
            break;
        }
    }
    Ok(segments
        .iter()
        .map(|&(value, len)| len * (value - median).abs())
        .sum())
}

/// Total variation distance between histograms on the same partition.
pub fn tv_histogram(a: &UlamHistogram, b: &UlamHistogram) -> Result<f64, MeasureError> {
    if a.part != b.part {
        return Err(MeasureError::PartitionMismatch);
    }
    Ok(0.5
        * a.mass
            .iter()
            .zip(&b.mass)
            .map(|(x, y)| (x - y).abs())
            .sum::<f64>())
}

/// Fraction of cells whose mass exceeds `floor` times the uniform mass.
pub fn support_coverage(h: &UlamHistogram, floor: f64) -> Result<f64, MeasureError> {
    if !(0.0..1.0).contains(&floor) {
        return Err(MeasureError::BadFloor(floor));
    }
    let n = h.mass.len();
    let threshold = floor / n as f64;
    Ok(h.mass.iter().filter(|&&m| m > threshold).count() as f64 / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::driving::ProbabilityVector;
    use crate::geometry::distance;

    fn rng() -> SplitMix64 {
        SplitMix64::new(0xace)
    }

    fn single(map: DiffeoSpec) -> SystemSpec {
        SystemSpec::finite(vec![map], ProbabilityVector::new(vec![1.0]).unwrap()).unwrap()
    }

    fn two_rotations() -> SystemSpec {
        SystemSpec::finite(
            vec![
                DiffeoSpec::rotation(0.6180339887),
                DiffeoSpec::rotation(0.4142135624),
            ],
            ProbabilityVector::new(vec![0.5, 0.5]).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn circle_partition_lookup() {
        let part = PartitionSpec::circle(4).unwrap();
        assert_eq!(part.cell_of(Point::circle(0.3)).unwrap(), 1);
        assert_eq!(part.cell_of(Point::circle(0.0)).unwrap(), 0);
        assert_eq!(part.cell_of(Point::circle(0.999999)).unwrap(), 3);
        assert!(PartitionSpec::circle(1).is_err());
    }

    #[test]
    fn sphere_partition_covers_once() {
        let part = PartitionSpec::sphere(4, 8).unwrap();
        assert_eq!(part.cells(), 32);
        let mut r = rng();
        let mut counts = vec![0u64; 32];
        for _ in 0..100_000 {
            let p = uniform_point(Manifold::Sphere, &mut r);
            counts[part.cell_of(p).unwrap()] += 1;
        }
        // every point lands in exactly one cell, and equal-area bands give
        // roughly equal counts
        assert_eq!(counts.iter().sum::<u64>(), 100_000);
        for &c in &counts {
            assert!(c > 2000, "cell badly undersampled: {c}");
        }
    }

    #[test]
    fn cell_sampling_round_trips() {
        let mut r = rng();
        for part in [
            PartitionSpec::circle(17).unwrap(),
            PartitionSpec::sphere(5, 9).unwrap(),
        ] {
            for cell in 0..part.cells() {
                for _ in 0..20 {
                    let p = part.sample_in_cell(cell, &mut r);
                    assert_eq!(part.cell_of(p).unwrap(), cell);
                }
            }
        }
    }

    #[test]
    fn ulam_identity_ifs_gives_identity_matrix() {
        let sys = single(DiffeoSpec::rotation(0.0));
        let part = PartitionSpec::circle(16).unwrap();
        let m = ulam_matrix(&sys, part, 50, &mut rng()).unwrap();
        for c in 0..16 {
            for d in 0..16 {
                let expected = if c == d { 1.0 } else { 0.0 };
                assert_eq!(m.entry(c, d), expected);
            }
        }
    }

    #[test]
    fn ulam_rotation_is_exact_cyclic_permutation() {
        let n = 64;
        let sys = single(DiffeoSpec::rotation(1.0 / n as f64));
        let part = PartitionSpec::circle(n).unwrap();
        let m = ulam_matrix(&sys, part, 100, &mut rng()).unwrap();
        for c in 0..n {
            for d in 0..n {
                let expected = if d == (c + 1) % n { 1.0 } else { 0.0 };
                assert_eq!(m.entry(c, d), expected, "entry ({c},{d})");
            }
        }
    }

    #[test]
    fn ulam_rows_are_stochastic() {
        let sys = SystemSpec::finite(
            vec![
                DiffeoSpec::north_south(-0.12).unwrap(),
                DiffeoSpec::rotation(0.6180339887),
            ],
            ProbabilityVector::new(vec![0.3, 0.7]).unwrap(),
        )
        .unwrap();
        let part = PartitionSpec::circle(64).unwrap();
        let m = ulam_matrix(&sys, part, 200, &mut rng()).unwrap();
        for c in 0..64 {
            let sum: f64 = m.row(c).iter().sum();
            assert!((sum - 1.0).abs() <= 1e-12, "row {c} sums to {sum}");
        }
    }

    #[test]
    fn ulam_matrix_is_thread_count_independent() {
        let sys = two_rotations();
        let part = PartitionSpec::circle(32).unwrap();
        let a = ulam_matrix(&sys, part, 100, &mut SplitMix64::new(7)).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool
            .install(|| ulam_matrix(&sys, part, 100, &mut SplitMix64::new(7)))
            .unwrap();
        for c in 0..32 {
            assert_eq!(a.row(c), b.row(c));
        }
    }

    #[test]
    fn stationary_power_identity_returns_uniform() {
        let sys = single(DiffeoSpec::rotation(0.0));
        let part = PartitionSpec::circle(8).unwrap();
        let m = ulam_matrix(&sys, part, 20, &mut rng()).unwrap();
        let h = stationary_power(&m, 1e-10, 100).unwrap();
        for &mass in &h.mass {
            assert!((mass - 0.125).abs() <= 1e-14);
        }
    }

    #[test]
    fn stationary_power_cyclic_permutation_hits_uniform() {
        let n = 8;
        let sys = single(DiffeoSpec::rotation(1.0 / n as f64));
        let part = PartitionSpec::circle(n).unwrap();
        let m = ulam_matrix(&sys, part, 20, &mut rng()).unwrap();
        let tol = 1e-9;
        let h = stationary_power(&m, tol, 10_000).unwrap();
        for &mass in &h.mass {
            assert!((mass - 1.0 / n as f64).abs() <= tol);
        }
        // stopping rule: residual of the output under the matrix
        let pushed = m.push_vector(&h.mass);
        let residual: f64 = pushed
            .iter()
            .zip(&h.mass)
            .map(|(a, b)| (a - b).abs())
            .sum();
        assert!(residual <= 10.0 * tol);
    }

    #[test]
    fn stationary_power_reports_max_iter() {
        // the north-south fixed point is far from the uniform start, so two
        // iterations cannot reach a 1e-15 residual
        let sys = single(DiffeoSpec::north_south(-0.12).unwrap());
        let part = PartitionSpec::circle(32).unwrap();
        let m = ulam_matrix(&sys, part, 50, &mut rng()).unwrap();
        assert!(matches!(
            stationary_power(&m, 1e-15, 2),
            Err(MeasureError::MaxIterExceeded { .. })
        ));
    }

    #[test]
    fn transfer_push_identity_and_counts() {
        let sys = single(DiffeoSpec::rotation(0.0));
        let cloud = EmpiricalMeasure::new(
            (0..100).map(|i| Point::circle(i as f64 / 100.0)).collect(),
        )
        .unwrap();
        let pushed = transfer_push(&sys, &cloud, &mut rng()).unwrap();
        assert_eq!(pushed.points(), cloud.points());
    }

    #[test]
    fn transfer_push_contracts_to_fixed_point() {
        let sys = single(DiffeoSpec::north_south(-0.12).unwrap());
        let mut cloud = EmpiricalMeasure::new(
            (0..100)
                .map(|i| Point::circle(0.51 + 0.98 * i as f64 / 100.0))
                .collect(),
        )
        .unwrap();
        let mut r = rng();
        for _ in 0..500 {
            cloud = transfer_push(&sys, &cloud, &mut r).unwrap();
        }
        for &p in cloud.points() {
            assert!(distance(p, Point::circle(0.0)).unwrap() <= 1e-8);
        }
    }

    #[test]
    fn rotations_keep_uniform_cloud_uniform() {
        let sys = two_rotations();
        let n = 100_000;
        let mut r = rng();
        let mut cloud = EmpiricalMeasure::new(
            (0..n)
                .map(|_| uniform_point(Manifold::Circle, &mut r))
                .collect(),
        )
        .unwrap();
        for _ in 0..10 {
            cloud = transfer_push(&sys, &cloud, &mut r).unwrap();
        }
        let bins = 64;
        let h = bin_empirical(&cloud, PartitionSpec::circle(bins).unwrap()).unwrap();
        let p = 1.0 / bins as f64;
        let sigma = (p * (1.0 - p) / n as f64).sqrt();
        for &mass in &h.mass {
            assert!((mass - p).abs() <= 4.0 * sigma, "mass {mass} vs {p}");
        }
    }

    #[test]
    fn mc_equidistributes_for_irrational_rotation() {
        let sys = single(DiffeoSpec::rotation(0.6180339887));
        let m = stationary_mc(&sys, 1000, 1_000_000, &mut rng()).unwrap();
        let h = bin_empirical(&m, PartitionSpec::circle(256).unwrap()).unwrap();
        let tv = tv_histogram(&h, &UlamHistogram::uniform(h.part)).unwrap();
        assert!(tv <= 0.02, "TV = {tv}");
    }

    #[test]
    fn mc_single_point_and_agreement_with_power() {
        let sys = two_rotations();
        let single_point = stationary_mc(&sys, 10, 1, &mut rng()).unwrap();
        assert_eq!(single_point.len(), 1);

        // stationary_mc and stationary_power agree for the two-rotation
        // system: TV <= 0.05 at 256 bins, 400 samples per cell, 1e6 kept
        let part = PartitionSpec::circle(256).unwrap();
        let matrix = ulam_matrix(&sys, part, 400, &mut rng()).unwrap();
        let from_power = stationary_power(&matrix, 1e-4, 200_000).unwrap();
        let from_mc = stationary_mc(&sys, 1000, 1_000_000, &mut rng()).unwrap();
        let binned = bin_empirical(&from_mc, part).unwrap();
        let tv = tv_histogram(&from_power, &binned).unwrap();
        assert!(tv <= 0.05, "TV = {tv}");
    }

    #[test]
    fn wasserstein_point_masses() {
        let a = EmpiricalMeasure::new(vec![Point::circle(0.0)]).unwrap();
        let b = EmpiricalMeasure::new(vec![Point::circle(0.5)]).unwrap();
        assert!((wasserstein1_circle(&a, &b).unwrap() - 0.5).abs() <= 1e-15);

        let a = EmpiricalMeasure::new(vec![Point::circle(0.1)]).unwrap();
        let b = EmpiricalMeasure::new(vec![Point::circle(0.9)]).unwrap();
        assert!((wasserstein1_circle(&a, &b).unwrap() - 0.2).abs() <= 1e-15);

        assert_eq!(wasserstein1_circle(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn wasserstein_translation_invariance() {
        // W1 between a cloud and its rotation by t is at most t
        let mut r = rng();
        let points: Vec<Point> = (0..500)
            .map(|_| uniform_point(Manifold::Circle, &mut r))
            .collect();
        let a = EmpiricalMeasure::new(points.clone()).unwrap();
        for t in [0.05, 0.2, 0.45] {
            let shifted: Vec<Point> = points
                .iter()
                .map(|p| Point::circle(p.as_circle().unwrap().angle() + t))
                .collect();
            let b = EmpiricalMeasure::new(shifted).unwrap();
            let w = wasserstein1_circle(&a, &b).unwrap();
            assert!(w <= t + 1e-12, "W1 = {w} for shift {t}");
        }
    }

    #[test]
    fn tv_requires_matching_partitions() {
        let a = UlamHistogram::uniform(PartitionSpec::circle(8).unwrap());
        let b = UlamHistogram::uniform(PartitionSpec::circle(16).unwrap());
        assert!(tv_histogram(&a, &b).is_err());
        assert_eq!(tv_histogram(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn support_coverage_cases() {
        let part = PartitionSpec::circle(256).unwrap();
        let uniform = UlamHistogram::uniform(part);
        assert_eq!(support_coverage(&uniform, 0.5).unwrap(), 1.0);

        let mut mass = vec![0.0; 256];
        mass[17] = 1.0;
        let delta = UlamHistogram { part, mass };
        assert!((support_coverage(&delta, 0.5).unwrap() - 1.0 / 256.0).abs() <= 1e-15);
        assert!(support_coverage(&delta, 1.0).is_err());
    }

    #[test]
    fn histogram_masses_sum_to_one() {
        let mut r = rng();
        let sys = two_rotations();
        let m = stationary_mc(&sys, 100, 10_000, &mut r).unwrap();
        let h = bin_empirical(&m, PartitionSpec::circle(64).unwrap()).unwrap();
        let total: f64 = h.mass.iter().sum();
        assert!((total - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn initial_distributions_land_where_asked() {
        let mut r = rng();
        let delta = InitialDistribution::Delta(Point::circle(0.3));
        assert_eq!(
            delta.draw(Manifold::Circle, &mut r).unwrap(),
            Point::circle(0.3)
        );
        let arc = InitialDistribution::Arc {
            center: Point::circle(0.5),
            halfwidth: 0.05,
        };
        for _ in 0..100 {
            let p = arc.draw(Manifold::Circle, &mut r).unwrap();
            assert!(distance(p, Point::circle(0.5)).unwrap() <= 0.05 + 1e-12);
        }
        let cap = InitialDistribution::Arc {
            center: Point::sphere([1.0, 1.0, -0.5]).unwrap(),
            halfwidth: 0.3,
        };
        let center = Point::sphere([1.0, 1.0, -0.5]).unwrap();
        for _ in 0..100 {
            let p = cap.draw(Manifold::Sphere, &mut r).unwrap();
            assert!(distance(p, center).unwrap() <= 0.3 + 1e-9);
        }
    }
}
