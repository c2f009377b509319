//! The experiments: fiber Lyapunov exponents, pull-back atoms,
//! synchronization statistics, minimality reachability, covering and
//! isolation checks, and uniqueness probes.

use crate::cocycle::{
    pullback_compose, CocycleAccumulator, CocycleError, DrivingWord, SystemSpec,
};
use crate::driving::strip_index;
use crate::geometry::{
    distance, uniform_point, wrap_unit, DiffeoSpec, GeometryError, Manifold, NoiseSpec, Point,
    TangentFrame,
};
use crate::measures::{
    stationary_mc_from, wasserstein1_circle, bin_empirical, tv_histogram, EmpiricalMeasure,
    InitialDistribution, MeasureError, PartitionSpec,
};
use crate::rng::SplitMix64;
use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Cocycle(#[from] CocycleError),
    #[error(transparent)]
    Measure(#[from] MeasureError),
    #[error("need n >= blocks >= 2, got n = {n}, blocks = {blocks}")]
    BadBlocks { n: usize, blocks: usize },
    #[error("cluster radius must be positive, got {0}")]
    BadClusterRadius(f64),
    #[error("pull-back ensemble needs at least 20 points, got {0}")]
    EnsembleTooSmall(usize),
    #[error("synchronization experiment needs pairs >= 1 and steps >= 2")]
    BadSyncParams,
    #[error("reachability needs a finite IFS on the circle")]
    NeedsCircleIfs,
    #[error("resolution {cells} or budget {budget} out of range")]
    BadReachability { cells: usize, budget: usize },
    #[error("arc degenerate: [{lo}, {hi}]")]
    DegenerateArc { lo: f64, hi: f64 },
    #[error("uniqueness probe needs at least 2 initial distributions")]
    TooFewInits,
}

// --- Lyapunov exponents ------------------------------------------------------

/// Fiber Lyapunov exponents per unit step (natural log), sorted descending,
/// with block-bootstrap standard errors.
#[derive(Debug, Clone, PartialEq)]
pub struct LyapunovEstimate {
    pub exponents: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub steps: usize,
    pub burn_in: usize,
}

fn lyapunov_impl(
    sys: &SystemSpec,
    n: usize,
    burn: usize,
    blocks: usize,
    top_only: bool,
    rng: &mut SplitMix64,
) -> Result<LyapunovEstimate, AnalysisError> {
    if !(2..=n).contains(&blocks) {
        return Err(AnalysisError::BadBlocks { n, blocks });
    }
    let mut x = uniform_point(sys.manifold(), rng);
    for _ in 0..burn {
        x = sys.sample_step(rng)?.eval(x)?;
    }
    let dim = if top_only { 1 } else { sys.manifold().dim() };
    let block_len = n / blocks;
    let mut totals = vec![0.0; dim];
    let mut block_sums = vec![vec![0.0; dim]; blocks];
    let mut acc = CocycleAccumulator::new(x);
    for step in 0..n {
        let map = sys.sample_step(rng)?;
        let logs = acc.step(&map)?;
        let block = (step / block_len).min(blocks - 1);
        for i in 0..dim {
            totals[i] += logs[i];
            block_sums[block][i] += logs[i];
        }
    }
    let mut exponents = vec![0.0; dim];
    let mut std_errors = vec![0.0; dim];
    for i in 0..dim {
        exponents[i] = totals[i] / n as f64;
        // per-step block means; the last block absorbs the remainder
        let means: Vec<f64> = (0..blocks)
            .map(|b| {
                let len = if b == blocks - 1 {
                    n - block_len * (blocks - 1)
                } else {
                    block_len
                };
                block_sums[b][i] / len as f64
            })
            .collect();
        let mean = means.iter().sum::<f64>() / blocks as f64;
        let var = means.iter().map(|m| (m - mean) * (m - mean)).sum::<f64>()
            / (blocks as f64 - 1.0);
        std_errors[i] = (var / blocks as f64).sqrt();
    }
    // sort exponent/error pairs descending
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| exponents[b].partial_cmp(&exponents[a]).unwrap());
    Ok(LyapunovEstimate {
        exponents: order.iter().map(|&i| exponents[i]).collect(),
        std_errors: order.iter().map(|&i| std_errors[i]).collect(),
        steps: n,
        burn_in: burn,
    })
}

/// Birkhoff estimate of the top fiber Lyapunov exponent along one random
/// orbit after burn-in.
pub fn lyapunov_top(
    sys: &SystemSpec,
    n: usize,
    burn: usize,
    blocks: usize,
    rng: &mut SplitMix64,
) -> Result<LyapunovEstimate, AnalysisError> {
    lyapunov_impl(sys, n, burn, blocks, true, rng)
}

/// Full exponent spectrum from the QR cocycle (two exponents on the sphere).
pub fn lyapunov_spectrum(
    sys: &SystemSpec,
    n: usize,
    burn: usize,
    blocks: usize,
    rng: &mut SplitMix64,
) -> Result<LyapunovEstimate, AnalysisError> {
    lyapunov_impl(sys, n, burn, blocks, false, rng)
}

/// The annealed bound `sum_i p_i int ln |Df_i| dm` evaluated on an
/// empirical measure; the top exponent never exceeds it.
pub fn lyapunov_upper_bound(
    sys: &SystemSpec,
    m: &EmpiricalMeasure,
) -> Result<f64, AnalysisError> {
    let SystemSpec::FiniteIfs { maps, probs } = sys else {
        return Err(AnalysisError::Measure(MeasureError::NeedsFiniteIfs));
    };
    let mut bound = 0.0;
    for (i, map) in maps.iter().enumerate() {
        let mut mean = 0.0;
        for &x in m.points() {
            let frame = TangentFrame::canonical(x);
            let (_, matrix) = map.tangent(&frame)?;
            mean += matrix.op_norm().ln();
        }
        bound += probs.prob(i) * mean / m.len() as f64;
    }
    Ok(bound)
}

// --- pull-back atoms ----------------------------------------------------------

/// Outcome of one pull-back run: cluster count `K`, centers, weights, and
/// the cluster geometry. `non_atomic` is set when the largest cluster
/// diameter exceeds ten cluster radii (no collapse observed).
#[derive(Debug, Clone)]
pub struct PullbackReport {
    pub depth: usize,
    pub atom_count: usize,
    pub centers: Vec<Point>,
    pub weights: Vec<f64>,
    pub max_intra_diameter: f64,
    pub min_inter_distance: Option<f64>,
    pub non_atomic: bool,
    /// Digit string of the drawn past word (finite systems only).
    pub word_digits: Option<String>,
}

/// Single-linkage clustering at a fixed threshold. Quadratic union-find;
/// ensembles stay small.
fn single_linkage(points: &[Point], threshold: f64) -> Vec<usize> {
    let n = points.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    for i in 0..n {
        for j in (i + 1)..n {
            if distance(points[i], points[j]).unwrap_or(f64::INFINITY) <= threshold {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[a] = b;
                }
            }
        }
    }
    let mut label = vec![usize::MAX; n];
    let mut next = 0;
    let mut out = vec![0; n];
    for (i, slot) in out.iter_mut().enumerate() {
        let root = find(&mut parent, i);
        if label[root] == usize::MAX {
            label[root] = next;
            next += 1;
        }
        *slot = label[root];
    }
    out
}

/// Cluster mean re-projected to the manifold: circular mean on the circle,
/// normalized vector mean on the sphere.
fn cluster_center(points: &[Point]) -> Point {
    match points[0] {
        Point::Circle(_) => {
            let (mut s, mut c) = (0.0, 0.0);
            for p in points {
                let a = p.as_circle().unwrap().angle() * std::f64::consts::TAU;
                s += a.sin();
                c += a.cos();
            }
            Point::circle(wrap_unit(s.atan2(c) / std::f64::consts::TAU))
        }
        Point::Sphere(_) => {
            let mut v = [0.0; 3];
            for p in points {
                let w = p.as_sphere().unwrap().coords();
                v = [v[0] + w[0], v[1] + w[1], v[2] + w[2]];
            }
            Point::sphere(v).unwrap_or(points[0])
        }
    }
}

/// Draw a past word of length `n`, pull the ensemble back, and cluster the
/// image with single linkage at `cluster_radius`.
pub fn pullback_atoms(
    sys: &SystemSpec,
    m: &EmpiricalMeasure,
    n: usize,
    cluster_radius: f64,
    rng: &mut SplitMix64,
) -> Result<PullbackReport, AnalysisError> {
    if cluster_radius <= 0.0 {
        return Err(AnalysisError::BadClusterRadius(cluster_radius));
    }
    if m.len() < 20 {
        return Err(AnalysisError::EnsembleTooSmall(m.len()));
    }
    let word = sys.draw_word(n, rng)?;
    pullback_atoms_with_word(sys, m, &word, cluster_radius)
}

/// `pullback_atoms` along a caller-supplied past word.
pub fn pullback_atoms_with_word(
    sys: &SystemSpec,
    m: &EmpiricalMeasure,
    word: &DrivingWord,
    cluster_radius: f64,
) -> Result<PullbackReport, AnalysisError> {
    if cluster_radius <= 0.0 {
        return Err(AnalysisError::BadClusterRadius(cluster_radius));
    }
    let pushed = pullback_compose(sys, word, m.points())?;
    let labels = single_linkage(&pushed, cluster_radius);
    let k = labels.iter().copied().max().unwrap_or(0) + 1;

    let mut clusters: Vec<Vec<Point>> = vec![Vec::new(); k];
    for (p, &l) in pushed.iter().zip(&labels) {
        clusters[l].push(*p);
    }
    let centers: Vec<Point> = clusters.iter().map(|c| cluster_center(c)).collect();
    let weights: Vec<f64> = clusters
        .iter()
        .map(|c| c.len() as f64 / pushed.len() as f64)
        .collect();

    let mut max_intra: f64 = 0.0;
    for cluster in &clusters {
        for i in 0..cluster.len() {
            for j in (i + 1)..cluster.len() {
                max_intra = max_intra.max(distance(cluster[i], cluster[j])?);
            }
        }
    }
    let mut min_inter: Option<f64> = None;
    for a in 0..k {
        for b in (a + 1)..k {
            for &p in &clusters[a] {
                for &q in &clusters[b] {
                    let d = distance(p, q)?;
                    min_inter = Some(min_inter.map_or(d, |m: f64| m.min(d)));
                }
            }
        }
    }
    let word_digits = match word {
        DrivingWord::Symbols(w) => Some(w.digits()),
        _ => None,
    };
    // no collapse observed: a fat cluster, or (isometry case) the cloud
    // stayed spread out as a crowd of near-singletons
    let non_atomic = max_intra > 10.0 * cluster_radius || 2 * k > pushed.len();
    Ok(PullbackReport {
        depth: word.len(),
        atom_count: k,
        centers,
        weights,
        max_intra_diameter: max_intra,
        min_inter_distance: min_inter,
        non_atomic,
        word_digits,
    })
}

// --- synchronization ----------------------------------------------------------

/// Statistics over orbit pairs driven by shared words.
#[derive(Debug, Clone, PartialEq)]
pub struct SyncReport {
    pub pairs: usize,
    pub synced_fraction: f64,
    /// Median over synced pairs of the first step with distance below `tol`.
    pub median_first_sync: Option<f64>,
    /// Median per-pair least-squares slope of `log d` on the pre-floor
    /// segment `10 tol < d < d_0 / 10`. A diagnostic to compare against
    /// the top Lyapunov exponent, not a theorem.
    pub decay_rate: Option<f64>,
}

fn ls_slope(points: &[(f64, f64)]) -> Option<f64> {
    if points.len() < 2 {
        return None;
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    Some(sxy / sxx)
}

fn median(sorted: &mut [f64]) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len();
    Some(if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    })
}

/// Per-pair distance traces (step 0 holds the initial distance).
pub type SyncTraces = Vec<Vec<f64>>;

/// Run `pairs` independent uniform pairs under shared driving words of
/// length `n_steps`; a pair counts as synced when its final distance is
/// below `tol`. Pairs run in parallel on substreams keyed by
/// `(seed, pair index)`.
pub fn sync_experiment(
    sys: &SystemSpec,
    pairs: usize,
    n_steps: usize,
    tol: f64,
    rng: &mut SplitMix64,
) -> Result<(SyncReport, SyncTraces), AnalysisError> {
    if pairs == 0 || n_steps < 2 || tol <= 0.0 {
        return Err(AnalysisError::BadSyncParams);
    }
    let seed = rng.next_u64();
    let runs: Result<Vec<Vec<f64>>, AnalysisError> = (0..pairs)
        .into_par_iter()
        .map(|pair| {
            let mut local = SplitMix64::substream(seed, pair as u64);
            let mut x = uniform_point(sys.manifold(), &mut local);
            let mut y = uniform_point(sys.manifold(), &mut local);
            let mut trace = Vec::with_capacity(n_steps + 1);
            trace.push(distance(x, y)?);
            for _ in 0..n_steps {
                let map = sys.sample_step(&mut local)?;
                x = map.eval(x)?;
                y = map.eval(y)?;
                trace.push(distance(x, y)?);
            }
            Ok(trace)
        })
        .collect();
    let traces = runs?;

    let mut synced = 0usize;
    let mut first_steps: Vec<f64> = Vec::new();
    let mut rates: Vec<f64> = Vec::new();
    for trace in &traces {
        let d0 = trace[0];
        if *trace.last().unwrap() < tol {
            synced += 1;
            if let Some(step) = trace.iter().position(|&d| d < tol) {
                first_steps.push(step as f64);
            }
        }
        let window: Vec<(f64, f64)> = trace
            .iter()
            .enumerate()
            .filter(|&(_, &d)| d > 10.0 * tol && d < d0 / 10.0)
            .map(|(j, &d)| (j as f64, d.ln()))
            .collect();
        if let Some(slope) = ls_slope(&window) {
            rates.push(slope);
        }
    }
    let report = SyncReport {
        pairs,
        synced_fraction: synced as f64 / pairs as f64,
        median_first_sync: median(&mut first_steps),
        decay_rate: median(&mut rates),
    };
    Ok((report, traces))
}

// --- minimality ----------------------------------------------------------------

/// Coverage of the circle by the reachable set of the IFS semigroup,
/// deduplicated at a fixed cell resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct MinimalityReport {
    pub cell_width: f64,
    pub budget: usize,
    pub covered_fraction: f64,
    pub steps_to_full_cover: Option<usize>,
}

/// Breadth-first expansion of the reachable set under all maps, one
/// representative point per cell, up to `budget` rounds. Every covered cell
/// is witnessed by an actual orbit branch from `x0`.
pub fn reachability_cover(
    sys: &SystemSpec,
    x0: Point,
    cells: usize,
    budget: usize,
) -> Result<MinimalityReport, AnalysisError> {
    let SystemSpec::FiniteIfs { maps, .. } = sys else {
        return Err(AnalysisError::NeedsCircleIfs);
    };
    if sys.manifold() != Manifold::Circle || x0.manifold() != Manifold::Circle {
        return Err(AnalysisError::NeedsCircleIfs);
    }
    if cells < 2 || budget == 0 {
        return Err(AnalysisError::BadReachability { cells, budget });
    }
    let cell_of = |p: Point| -> usize {
        ((p.as_circle().unwrap().angle() * cells as f64) as usize).min(cells - 1)
    };
    // The frontier holds one orbit point per cell and is re-deduplicated
    // every round, so it stays bounded by the cell count while orbits keep
    // advancing through already-covered territory (a single rotation must
    // walk its whole orbit, not stall at the first revisit).
    let mut covered = vec![false; cells];
    covered[cell_of(x0)] = true;
    let mut frontier = vec![x0];
    let mut count = 1usize;
    let mut full_at = if count == cells { Some(0) } else { None };
    for round in 1..=budget {
        if full_at.is_some() {
            break;
        }
        let mut slots: Vec<Option<Point>> = vec![None; cells];
        for &x in &frontier {
            for map in maps {
                let y = map.eval(x)?;
                let c = cell_of(y);
                if !covered[c] {
                    covered[c] = true;
                    count += 1;
                }
                if slots[c].is_none() {
                    slots[c] = Some(y);
                }
            }
        }
        frontier = slots.into_iter().flatten().collect();
        if count == cells {
            full_at = Some(round);
        }
    }
    Ok(MinimalityReport {
        cell_width: 1.0 / cells as f64,
        budget,
        covered_fraction: count as f64 / cells as f64,
        steps_to_full_cover: full_at,
    })
}

// --- covering and isolation -----------------------------------------------------

/// Closed arc `[lo, hi]` on the universal cover with `0 < hi - lo < 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CircleArc {
    pub lo: f64,
    pub hi: f64,
}

impl CircleArc {
    pub fn new(lo: f64, hi: f64) -> Result<Self, AnalysisError> {
        if !(hi > lo && hi - lo < 1.0) {
            return Err(AnalysisError::DegenerateArc { lo, hi });
        }
        Ok(CircleArc { lo, hi })
    }

    pub fn length(&self) -> f64 {
        self.hi - self.lo
    }
}

/// Sub-intervals of `[lo, hi]` covered by the arc `[w0, w1]` modulo 1.
fn covered_segments(b: &CircleArc, w0: f64, w1: f64, out: &mut Vec<(f64, f64)>) {
    let k_min = (b.lo - w1).ceil() as i64 - 1;
    let k_max = (b.hi - w0).floor() as i64 + 1;
    for k in k_min..=k_max {
        let lo = (w0 + k as f64).max(b.lo);
        let hi = (w1 + k as f64).min(b.hi);
        if hi >= lo {
            out.push((lo, hi));
        }
    }
}

/// Paper-style covering test `B subset f(B) union (f o g)(B)`, decided from
/// endpoint images of the monotone lifts with a 1e-10 guard band.
pub fn covering_check(
    f: &DiffeoSpec,
    g: &DiffeoSpec,
    b: &CircleArc,
) -> Result<bool, AnalysisError> {
    if f.manifold() != Manifold::Circle || g.manifold() != Manifold::Circle {
        return Err(AnalysisError::NeedsCircleIfs);
    }
    const GUARD: f64 = 1e-10;
    let mut segments = Vec::new();
    covered_segments(b, f.lift(b.lo), f.lift(b.hi), &mut segments);
    covered_segments(b, f.lift(g.lift(b.lo)), f.lift(g.lift(b.hi)), &mut segments);
    segments.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap());
    let mut reach = b.lo;
    for (lo, hi) in segments {
        if lo > reach + GUARD {
            return Ok(false);
        }
        reach = reach.max(hi);
        if reach >= b.hi - GUARD {
            return Ok(true);
        }
    }
    Ok(reach >= b.hi - GUARD)
}

/// Isolating-neighborhood test: `closure(f_a(U))` inside the interior of
/// `U` with a 1e-9 margin, for all of `n_samples` drawn parameters.
pub fn isolating_check(
    base: &DiffeoSpec,
    noise: &NoiseSpec,
    u: &CircleArc,
    n_samples: usize,
    rng: &mut SplitMix64,
) -> Result<bool, AnalysisError> {
    if base.manifold() != Manifold::Circle {
        return Err(AnalysisError::NeedsCircleIfs);
    }
    const MARGIN: f64 = 1e-9;
    for _ in 0..n_samples {
        let map = crate::geometry::sample_random_map(base, noise, rng)?;
        let img_lo = map.lift(u.lo);
        let img_hi = map.lift(u.hi);
        // containment holds for at most one integer shift
        let k_lo = u.lo + MARGIN - img_lo;
        let k_hi = u.hi - MARGIN - img_hi;
        let k = k_lo.ceil();
        if k > k_hi || k_hi.is_nan() {
            return Ok(false);
        }
    }
    Ok(true)
}

// --- uniqueness probe --------------------------------------------------------------

/// Run `stationary_mc` from each initial distribution and return the
/// maximum pairwise distance: Wasserstein-1 on the circle, total variation
/// over a 16x32 equal-area histogram on the sphere.
pub fn uniqueness_probe(
    sys: &SystemSpec,
    inits: &[InitialDistribution],
    n_burn: usize,
    n_keep: usize,
    rng: &mut SplitMix64,
) -> Result<f64, AnalysisError> {
    if inits.len() < 2 {
        return Err(AnalysisError::TooFewInits);
    }
    let measures: Vec<EmpiricalMeasure> = inits
        .iter()
        .map(|init| stationary_mc_from(sys, init, n_burn, n_keep, rng))
        .collect::<Result<_, _>>()?;
    let mut worst: f64 = 0.0;
    for i in 0..measures.len() {
        for j in (i + 1)..measures.len() {
            let d = match sys.manifold() {
                Manifold::Circle => wasserstein1_circle(&measures[i], &measures[j])?,
                Manifold::Sphere => {
                    let part = PartitionSpec::sphere(16, 32)?;
                    tv_histogram(
                        &bin_empirical(&measures[i], part)?,
                        &bin_empirical(&measures[j], part)?,
                    )?
                }
            };
            worst = worst.max(d);
        }
    }
    Ok(worst)
}

/// Convenience: strip sampling shares the driver used by `sample_word`.
pub fn draw_symbol(p: &crate::driving::ProbabilityVector, rng: &mut SplitMix64) -> usize {
    strip_index(rng.next_f64(), p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::driving::ProbabilityVector;
    use crate::measures::stationary_mc;

    fn rng() -> SplitMix64 {
        SplitMix64::new(0xbeef)
    }

    fn finite(maps: Vec<DiffeoSpec>, p: Vec<f64>) -> SystemSpec {
        SystemSpec::finite(maps, ProbabilityVector::new(p).unwrap()).unwrap()
    }

    fn two_rotations() -> SystemSpec {
        finite(
            vec![
                DiffeoSpec::rotation(0.6180339887),
                DiffeoSpec::rotation(0.4142135624),
            ],
            vec![0.5, 0.5],
        )
    }

    fn flat_ns_system() -> SystemSpec {
        finite(
            vec![
                DiffeoSpec::flat_ns(-0.12, 0.05, 0.01).unwrap(),
                DiffeoSpec::rotation(0.6180339887),
            ],
            vec![0.5, 0.5],
        )
    }

    fn equivariant_system() -> SystemSpec {
        finite(
            vec![
                DiffeoSpec::equivariant_ns(-0.06).unwrap(),
                DiffeoSpec::rotation(0.6180339887),
            ],
            vec![0.5, 0.5],
        )
    }

    #[test]
    fn lyapunov_of_rotations_is_zero() {
        let est = lyapunov_top(&two_rotations(), 10_000, 100, 10, &mut rng()).unwrap();
        assert!(est.exponents[0].abs() <= 1e-10);
        assert!(est.std_errors[0] <= 1e-10);
    }

    #[test]
    fn lyapunov_closed_form_common_fixed_point() {
        // derivatives 0.5 and 0.8 at the common fixed point 0
        use std::f64::consts::TAU;
        let sys = finite(
            vec![
                DiffeoSpec::north_south(-0.5 / TAU).unwrap(),
                DiffeoSpec::north_south(-0.2 / TAU).unwrap(),
            ],
            vec![0.5, 0.5],
        );
        let est = lyapunov_top(&sys, 200_000, 1000, 10, &mut rng()).unwrap();
        let expected = 0.5 * 0.5f64.ln() + 0.5 * 0.8f64.ln();
        assert!(
            (est.exponents[0] - expected).abs() <= 3.0 * est.std_errors[0].max(1e-4),
            "estimate {} vs {expected}",
            est.exponents[0]
        );
    }

    #[test]
    fn lyapunov_flat_ns_is_negative() {
        let est = lyapunov_top(&flat_ns_system(), 200_000, 1000, 20, &mut rng()).unwrap();
        assert!(
            est.exponents[0] + 3.0 * est.std_errors[0] < 0.0,
            "lambda_1 = {} +- {}",
            est.exponents[0],
            est.std_errors[0]
        );
    }

    #[test]
    fn spectrum_of_sphere_rotations_is_flat() {
        let sys = finite(
            vec![
                DiffeoSpec::sphere_rotation([0.0, 0.0, 1.0], 0.9).unwrap(),
                DiffeoSpec::sphere_rotation([1.0, 1.0, 0.0], 2.0).unwrap(),
            ],
            vec![0.5, 0.5],
        );
        let est = lyapunov_spectrum(&sys, 20_000, 100, 10, &mut rng()).unwrap();
        assert_eq!(est.exponents.len(), 2);
        assert!(est.exponents[0].abs() <= 1e-10);
        assert!(est.exponents[1].abs() <= 1e-10);
    }

    #[test]
    fn sphere_scale_spectrum_matches_conformal_factor() {
        // both exponents approach ln(lambda) at the attracting pole
        let sys = finite(vec![DiffeoSpec::sphere_scale(0.8).unwrap()], vec![1.0]);
        let est = lyapunov_spectrum(&sys, 50_000, 2000, 10, &mut rng()).unwrap();
        let target = 0.8f64.ln();
        for ex in &est.exponents {
            assert!((ex - target).abs() <= 1e-3, "exponent {ex} vs {target}");
        }
        // sorted descending
        assert!(est.exponents[0] >= est.exponents[1]);
    }

    #[test]
    fn circle_spectrum_equals_top() {
        let sys = flat_ns_system();
        let top = lyapunov_top(&sys, 20_000, 100, 10, &mut SplitMix64::new(5)).unwrap();
        let full = lyapunov_spectrum(&sys, 20_000, 100, 10, &mut SplitMix64::new(5)).unwrap();
        assert_eq!(top.exponents, full.exponents);
    }

    #[test]
    fn upper_bound_cases() {
        // rotations: exactly zero
        let m = stationary_mc(&two_rotations(), 100, 1000, &mut rng()).unwrap();
        assert_eq!(lyapunov_upper_bound(&two_rotations(), &m).unwrap(), 0.0);

        // common fixed point with m = delta_0: p0 ln k0 + p1 ln k1 exactly
        use std::f64::consts::TAU;
        let sys = finite(
            vec![
                DiffeoSpec::north_south(-0.5 / TAU).unwrap(),
                DiffeoSpec::north_south(-0.2 / TAU).unwrap(),
            ],
            vec![0.5, 0.5],
        );
        let delta = EmpiricalMeasure::new(vec![Point::circle(0.0); 30]).unwrap();
        let bound = lyapunov_upper_bound(&sys, &delta).unwrap();
        let expected = 0.5 * 0.5f64.ln() + 0.5 * 0.8f64.ln();
        assert!((bound - expected).abs() <= 1e-12);
    }

    #[test]
    fn exponent_respects_upper_bound() {
        let sys = flat_ns_system();
        let mut r = rng();
        let m = stationary_mc(&sys, 1000, 50_000, &mut r).unwrap();
        let bound = lyapunov_upper_bound(&sys, &m).unwrap();
        let est = lyapunov_top(&sys, 100_000, 1000, 10, &mut r).unwrap();
        assert!(
            est.exponents[0] <= bound + 3.0 * est.std_errors[0],
            "lambda_1 = {} > bound {}",
            est.exponents[0],
            bound
        );
    }

    #[test]
    fn pullback_single_contraction_gives_one_atom() {
        let sys = finite(vec![DiffeoSpec::north_south(-0.12).unwrap()], vec![1.0]);
        let ensemble = EmpiricalMeasure::new(
            (0..100)
                .map(|i| Point::circle(0.51 + 0.98 * i as f64 / 100.0))
                .filter(|p| distance(*p, Point::circle(0.5)).unwrap() > 0.01)
                .collect(),
        )
        .unwrap();
        let word = DrivingWord::Symbols(
            crate::driving::SymbolWord::new(vec![0; 200], 1).unwrap(),
        );
        let report = pullback_atoms_with_word(&sys, &ensemble, &word, 1e-4).unwrap();
        assert_eq!(report.atom_count, 1);
        assert!(distance(report.centers[0], Point::circle(0.0)).unwrap() <= 1e-6);
        assert!(!report.non_atomic);
        assert!((report.weights.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn pullback_rotations_do_not_collapse() {
        let sys = two_rotations();
        let ensemble = EmpiricalMeasure::new(
            (0..50).map(|i| Point::circle(i as f64 / 50.0)).collect(),
        )
        .unwrap();
        let report = pullback_atoms(&sys, &ensemble, 100, 1e-4, &mut rng()).unwrap();
        assert!(report.non_atomic, "isometries must not collapse the cloud");
        // isometries keep the evenly spaced cloud spread out
        assert!(report.atom_count > 25);
    }

    #[test]
    fn pullback_equivariant_gives_two_atoms() {
        // the half-turn equivariance forces a two-atom disintegration with
        // equal weights and separation exactly 1/2
        let sys = equivariant_system();
        let mut r = SplitMix64::new(7);
        let long = stationary_mc(&sys, 1000, 20_000, &mut r).unwrap();
        let ensemble = long.thin(400);
        let report = pullback_atoms(&sys, &ensemble, 500, 1e-4, &mut r).unwrap();
        assert_eq!(report.atom_count, 2, "expected a two-atom disintegration");
        assert!((report.weights[0] - 0.5).abs() <= 0.05);
        assert!((report.weights[1] - 0.5).abs() <= 0.05);
        let sep = distance(report.centers[0], report.centers[1]).unwrap();
        assert!((sep - 0.5).abs() <= 1e-3, "separation {sep}");
        assert!(!report.non_atomic);
    }

    #[test]
    fn pullback_diameter_shrinks_with_depth() {
        // median over 10 word draws of the max diameter at depth 500 is
        // below the median at depth 50 for a contracting-on-average system
        let sys = flat_ns_system();
        let mut r = rng();
        let long = stationary_mc(&sys, 1000, 20_000, &mut r).unwrap();
        let ensemble = long.thin(100);
        let mut shallow = Vec::new();
        let mut deep = Vec::new();
        for _ in 0..10 {
            shallow.push(
                pullback_atoms(&sys, &ensemble, 50, 1e-4, &mut r)
                    .unwrap()
                    .max_intra_diameter,
            );
            deep.push(
                pullback_atoms(&sys, &ensemble, 500, 1e-4, &mut r)
                    .unwrap()
                    .max_intra_diameter,
            );
        }
        let med = |v: &mut Vec<f64>| median(v).unwrap();
        assert!(med(&mut deep) < med(&mut shallow));
    }

    #[test]
    fn sync_identical_points_stay_identical() {
        // a pair (x, x) keeps distance exactly zero under shared words
        let sys = flat_ns_system();
        let mut r = rng();
        let x = uniform_point(Manifold::Circle, &mut r);
        let mut a = x;
        let mut b = x;
        for _ in 0..100 {
            let map = sys.sample_step(&mut r).unwrap();
            a = map.eval(a).unwrap();
            b = map.eval(b).unwrap();
            assert_eq!(distance(a, b).unwrap(), 0.0);
        }
    }

    #[test]
    fn sync_rotations_never_sync() {
        let (report, traces) =
            sync_experiment(&two_rotations(), 50, 200, 1e-6, &mut rng()).unwrap();
        assert_eq!(report.synced_fraction, 0.0);
        // isometries: distance constant along each trace
        for trace in &traces {
            for d in trace {
                assert!((d - trace[0]).abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn sync_flat_ns_synchronizes() {
        let (report, _) =
            sync_experiment(&flat_ns_system(), 200, 2000, 1e-6, &mut rng()).unwrap();
        assert!(
            report.synced_fraction >= 0.99,
            "synced {}",
            report.synced_fraction
        );
        assert!(report.median_first_sync.is_some());
        // the fitted rate is a diagnostic; for this system it comes out
        // around -0.15, well short of lambda_1 = -0.54 (pairs linger between
        // flat-region hits, which flattens per-pair slopes)
        let rate = report.decay_rate.expect("decay rate");
        assert!(rate < 0.0, "decay rate {rate} should be negative");
    }

    #[test]
    fn sync_is_thread_count_independent() {
        let sys = flat_ns_system();
        let (a, ta) = sync_experiment(&sys, 64, 300, 1e-6, &mut SplitMix64::new(10)).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let (b, tb) = pool
            .install(|| sync_experiment(&sys, 64, 300, 1e-6, &mut SplitMix64::new(10)))
            .unwrap();
        assert_eq!(a, b);
        assert_eq!(ta, tb);
    }

    #[test]
    fn reachability_single_rotation_covers() {
        let sys = finite(vec![DiffeoSpec::rotation(0.6180339887)], vec![1.0]);
        let report = reachability_cover(&sys, Point::circle(0.0), 128, 2000).unwrap();
        assert_eq!(report.covered_fraction, 1.0);
        assert!(report.steps_to_full_cover.unwrap() <= 2000);
    }

    #[test]
    fn reachability_north_south_stalls() {
        let sys = finite(vec![DiffeoSpec::north_south(-0.12).unwrap()], vec![1.0]);
        let report = reachability_cover(&sys, Point::circle(0.3), 128, 2000).unwrap();
        assert!(report.covered_fraction < 0.2, "{}", report.covered_fraction);
        assert!(report.steps_to_full_cover.is_none());
    }

    #[test]
    fn reachability_identity_stays_put() {
        let sys = finite(vec![DiffeoSpec::rotation(0.0)], vec![1.0]);
        let report = reachability_cover(&sys, Point::circle(0.7), 64, 100).unwrap();
        assert!((report.covered_fraction - 1.0 / 64.0).abs() <= 1e-12);
    }

    #[test]
    fn reachability_fraction_monotone_in_budget() {
        let sys = flat_ns_system();
        let mut last = 0.0;
        for budget in [1, 3, 10, 30, 100] {
            let report =
                reachability_cover(&sys, Point::circle(0.1), 256, budget).unwrap();
            assert!(report.covered_fraction >= last);
            last = report.covered_fraction;
        }
    }

    #[test]
    fn covering_check_identity_and_disjoint() {
        let id = DiffeoSpec::rotation(0.0);
        let b = CircleArc::new(0.0, 0.1).unwrap();
        assert!(covering_check(&id, &DiffeoSpec::rotation(0.3), &b).unwrap());

        let half = DiffeoSpec::rotation(0.5);
        assert!(!covering_check(&half, &id, &b).unwrap());
    }

    #[test]
    fn covering_check_paper_recipe() {
        // f = NorthSouth(-0.14), g = f^{-1} then rotate by 0.02,
        // B = [-0.2, 0.2]: computed outcome is false -- f(B) hugs the
        // attractor and f o g only shifts B sideways, leaving the left edge
        // of B uncovered.
        let f = DiffeoSpec::north_south(-0.14).unwrap();
        let g = DiffeoSpec::composition(vec![
            f.inverse().unwrap(),
            DiffeoSpec::rotation(0.02),
        ])
        .unwrap();
        let b = CircleArc::new(-0.2, 0.2).unwrap();
        assert!(!covering_check(&f, &g, &b).unwrap());
    }

    #[test]
    fn covering_check_two_offset_contractions() {
        // f contracts toward a fixed point right of 0, f o g toward its
        // mirror image; a box between the fixed points is jointly covered
        use crate::geometry::NoiseOffset;
        let ns = DiffeoSpec::north_south(-0.05).unwrap();
        let f = DiffeoSpec::translated(ns.clone(), NoiseOffset::Circle(0.02)).unwrap();
        let target = DiffeoSpec::translated(ns, NoiseOffset::Circle(-0.02)).unwrap();
        // g = f^{-1} o target, so f o g = target
        let g = DiffeoSpec::composition(vec![target, f.inverse().unwrap()]).unwrap();
        let b = CircleArc::new(-0.06, 0.06).unwrap();
        assert!(covering_check(&f, &g, &b).unwrap());
        // a wider box escapes both images
        let wide = CircleArc::new(-0.2, 0.2).unwrap();
        assert!(!covering_check(&f, &g, &wide).unwrap());
    }

    #[test]
    fn arcs_must_be_nondegenerate() {
        assert!(CircleArc::new(0.3, 0.3).is_err());
        assert!(CircleArc::new(0.0, 1.0).is_err());
        assert!(CircleArc::new(-0.2, 0.2).is_ok());
    }

    #[test]
    fn isolating_check_cases() {
        use crate::geometry::NoiseDist;
        let mut r = rng();
        // pure contraction keeps U = [-0.3, 0.3] inside itself
        let ns = DiffeoSpec::north_south(-0.12).unwrap();
        let none = NoiseSpec::new(NoiseDist::Uniform, 0.0).unwrap();
        let u = CircleArc::new(-0.3, 0.3).unwrap();
        assert!(isolating_check(&ns, &none, &u, 10, &mut r).unwrap());

        // a rotation moves U off itself
        let rot = DiffeoSpec::rotation(0.4);
        let wide = NoiseSpec::new(NoiseDist::Uniform, 0.2).unwrap();
        assert!(!isolating_check(&rot, &wide, &u, 100, &mut r).unwrap());

        // nearly full circle cannot be isolating for a map pushing mass
        // through the gap
        let big = CircleArc::new(0.0, 0.999).unwrap();
        assert!(!isolating_check(&ns, &none, &big, 10, &mut r).unwrap());

        // small noise keeps the contraction isolating
        let small = NoiseSpec::new(NoiseDist::Uniform, 0.01).unwrap();
        assert!(isolating_check(&ns, &small, &u, 1000, &mut r).unwrap());
    }

    #[test]
    fn uniqueness_probe_detects_non_uniqueness() {
        // identity IFS: every measure is stationary; deltas at 0 and 1/2
        // stay 1/2 apart in W1
        let sys = finite(vec![DiffeoSpec::rotation(0.0)], vec![1.0]);
        let inits = vec![
            InitialDistribution::Delta(Point::circle(0.0)),
            InitialDistribution::Delta(Point::circle(0.5)),
        ];
        let w = uniqueness_probe(&sys, &inits, 10, 100, &mut rng()).unwrap();
        assert!((w - 0.5).abs() <= 1e-12);
    }

    #[test]
    fn uniqueness_probe_irrational_rotation() {
        let sys = finite(vec![DiffeoSpec::rotation(0.6180339887)], vec![1.0]);
        let inits = vec![
            InitialDistribution::Uniform,
            InitialDistribution::Delta(Point::circle(0.0)),
            InitialDistribution::Arc {
                center: Point::circle(0.25),
                halfwidth: 0.05,
            },
        ];
        let w = uniqueness_probe(&sys, &inits, 1000, 1_000_000, &mut rng()).unwrap();
        assert!(w <= 0.02, "max pairwise W1 = {w}");
    }

    #[test]
    fn uniqueness_probe_needs_two_inits() {
        let sys = two_rotations();
        let inits = vec![InitialDistribution::Uniform];
        assert!(matches!(
            uniqueness_probe(&sys, &inits, 10, 10, &mut rng()),
            Err(AnalysisError::TooFewInits)
        ));
    }

    #[test]
    fn deterministic_reports_for_fixed_seed() {
        let sys = flat_ns_system();
        let a = lyapunov_top(&sys, 10_000, 100, 5, &mut SplitMix64::new(99)).unwrap();
        let b = lyapunov_top(&sys, 10_000, 100, 5, &mut SplitMix64::new(99)).unwrap();
        assert_eq!(a, b);
    }
}
