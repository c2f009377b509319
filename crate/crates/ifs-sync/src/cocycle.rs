//! The skew-product engine: fiber iteration along driving words, reversed
//! (pull-back) composition, and the derivative cocycle with QR
//! re-orthonormalization.
//!
//! A word `w` of length `n` drives the composition `f_{w(n-1)} o ... o
//! f_{w(0)}`: the first entry acts first. Pull-backs reuse the same fold
//! with the word read as the past block `(omega(-n), ..., omega(-1))`.

use crate::driving::{sample_word, DrivingError, ProbabilityVector, SymbolWord};
use crate::geometry::{
    sample_random_map, DiffeoSpec, GeometryError, Manifold, NoiseOffset, NoiseSpec, Point,
    TangentFrame, TangentMatrix,
};
use crate::rng::SplitMix64;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CocycleError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Driving(#[from] DrivingError),
    #[error("driving word kind does not match the system")]
    WordKindMismatch,
    #[error("derivative matrix numerically singular (|R_{index}{index}| = {value})")]
    SingularDerivative { index: usize, value: f64 },
    #[error("finite IFS invalid: {0}")]
    BadSystem(String),
}

/// A finite IFS (maps plus probabilities) or a random family with
/// absolutely continuous parameter noise.
#[derive(Debug, Clone, PartialEq)]
pub enum SystemSpec {
    FiniteIfs {
        maps: Vec<DiffeoSpec>,
        probs: ProbabilityVector,
    },
    RandomFamily {
        base: DiffeoSpec,
        noise: NoiseSpec,
    },
}

impl SystemSpec {
    pub fn finite(maps: Vec<DiffeoSpec>, probs: ProbabilityVector) -> Result<Self, CocycleError> {
        if maps.is_empty() {
            return Err(CocycleError::BadSystem("no maps".into()));
        }
        if maps.iter().any(|m| m.manifold() != maps[0].manifold()) {
            return Err(CocycleError::BadSystem(
                "maps on different manifolds".into(),
            ));
        }
        if maps.len() != probs.k() {
            return Err(CocycleError::BadSystem(format!(
                "{} maps but {} probabilities",
                maps.len(),
                probs.k()
            )));
        }
        Ok(SystemSpec::FiniteIfs { maps, probs })
    }

    pub fn random(base: DiffeoSpec, noise: NoiseSpec) -> Self {
        SystemSpec::RandomFamily { base, noise }
    }

    pub fn manifold(&self) -> Manifold {
        match self {
            SystemSpec::FiniteIfs { maps, .. } => maps[0].manifold(),
            SystemSpec::RandomFamily { base, .. } => base.manifold(),
        }
    }

    /// Draw an i.i.d. driving word of length `n`: symbols for a finite IFS,
    /// noise parameters for a random family.
    pub fn draw_word(&self, n: usize, rng: &mut SplitMix64) -> Result<DrivingWord, CocycleError> {
        match self {
            SystemSpec::FiniteIfs { probs, .. } => {
                Ok(DrivingWord::Symbols(sample_word(probs, n, rng)))
            }
            SystemSpec::RandomFamily { base, noise } => match base.manifold() {
                Manifold::Circle => Ok(DrivingWord::CircleParams(
                    (0..n).map(|_| noise.draw_circle(rng)).collect(),
                )),
                Manifold::Sphere => Ok(DrivingWord::SphereParams(
                    (0..n).map(|_| noise.draw_sphere(rng)).collect(),
                )),
            },
        }
    }

    /// The map applied at step `j` of the word.
    pub fn step_map(&self, w: &DrivingWord, j: usize) -> Result<DiffeoSpec, CocycleError> {
        match (self, w) {
            (SystemSpec::FiniteIfs { maps, .. }, DrivingWord::Symbols(word)) => {
                let s = word.symbols()[j];
                maps.get(s)
                    .cloned()
                    .ok_or(CocycleError::Driving(DrivingError::SymbolOutOfRange {
                        symbol: s,
                        k: maps.len(),
                    }))
            }
            (SystemSpec::RandomFamily { base, .. }, DrivingWord::CircleParams(a)) => Ok(
                DiffeoSpec::translated(base.clone(), NoiseOffset::Circle(a[j]))?,
            ),
            (SystemSpec::RandomFamily { base, .. }, DrivingWord::SphereParams(a)) => Ok(
                DiffeoSpec::translated(base.clone(), NoiseOffset::Sphere(a[j]))?,
            ),
            _ => Err(CocycleError::WordKindMismatch),
        }
    }

    /// One random one-step map (symbol or parameter drawn from the system's
    /// own distribution).
    pub fn sample_step(&self, rng: &mut SplitMix64) -> Result<DiffeoSpec, CocycleError> {
        match self {
            SystemSpec::FiniteIfs { maps, probs } => {
                let i = crate::driving::strip_index(rng.next_f64(), probs);
                Ok(maps[i].clone())
            }
            SystemSpec::RandomFamily { base, noise } => {
                Ok(sample_random_map(base, noise, rng)?)
            }
        }
    }
}

/// Driving data for one run: a symbol word for finite systems, a parameter
/// list for random families. One engine serves both settings.
#[derive(Debug, Clone, PartialEq)]
pub enum DrivingWord {
    Symbols(SymbolWord),
    CircleParams(Vec<f64>),
    SphereParams(Vec<[f64; 3]>),
}

impl DrivingWord {
    pub fn len(&self) -> usize {
        match self {
            DrivingWord::Symbols(w) => w.len(),
            DrivingWord::CircleParams(a) => a.len(),
            DrivingWord::SphereParams(a) => a.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// `f_{w(n-1)} o ... o f_{w(0)} (x)`; the empty word returns `x`.
pub fn iterate_word(sys: &SystemSpec, w: &DrivingWord, x: Point) -> Result<Point, CocycleError> {
    let mut p = x;
    for j in 0..w.len() {
        p = sys.step_map(w, j)?.eval(p)?;
    }
    Ok(p)
}

/// All intermediate states of `iterate_word`, `n + 1` points including `x`.
pub fn trajectory(
    sys: &SystemSpec,
    w: &DrivingWord,
    x: Point,
) -> Result<Vec<Point>, CocycleError> {
    let mut points = Vec::with_capacity(w.len() + 1);
    points.push(x);
    let mut p = x;
    for j in 0..w.len() {
        p = sys.step_map(w, j)?.eval(p)?;
        points.push(p);
    }
    Ok(points)
}

/// Push an ensemble along the past block `w = (omega(-n), ..., omega(-1))`:
/// every point is mapped by `f_{omega(-1)} o ... o f_{omega(-n)}`, i.e. the
/// same fold as `iterate_word` applied pointwise.
pub fn pullback_compose(
    sys: &SystemSpec,
    w: &DrivingWord,
    ensemble: &[Point],
) -> Result<Vec<Point>, CocycleError> {
    ensemble
        .iter()
        .map(|&x| iterate_word(sys, w, x))
        .collect()
}

/// Running state of the derivative cocycle: current point and orthonormal
/// frame plus the accumulated `log |R_ii|` per direction.
#[derive(Debug, Clone)]
pub struct CocycleAccumulator {
    point: Point,
    frame: TangentFrame,
    log_sums: [f64; 2],
    dim: usize,
    steps: usize,
}

impl CocycleAccumulator {
    pub fn new(x: Point) -> Self {
        CocycleAccumulator::with_frame(x, TangentFrame::canonical(x))
    }

    pub fn with_frame(x: Point, frame: TangentFrame) -> Self {
        CocycleAccumulator {
            point: x,
            frame,
            log_sums: [0.0; 2],
            dim: x.manifold().dim(),
            steps: 0,
        }
    }

    pub fn point(&self) -> Point {
        self.point
    }

    pub fn frame(&self) -> &TangentFrame {
        &self.frame
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Accumulated `sum_j log R_ii(j)` per direction.
    pub fn log_sums(&self) -> &[f64] {
        &self.log_sums[..self.dim]
    }

    /// Advance one step: push the frame, QR-factorize with the positive
    /// diagonal convention, accumulate the log diagonal. Returns this step's
    /// log diagonal entries.
    pub fn step(&mut self, map: &DiffeoSpec) -> Result<[f64; 2], CocycleError> {
        let (out_frame, matrix) = map.tangent(&self.frame)?;
        let (q, rdiag) = qr_positive(&matrix)?;
        let mut logs = [0.0; 2];
        for i in 0..self.dim {
            logs[i] = rdiag[i].ln();
            self.log_sums[i] += logs[i];
        }
        self.point = out_frame.base();
        self.frame = rotate_frame(&out_frame, &q);
        self.steps += 1;
        Ok(logs)
    }
}

/// QR with positive diagonal: Gram-Schmidt on columns, so `R_ii > 0` by
/// construction and the per-step logs are deterministic.
fn qr_positive(m: &TangentMatrix) -> Result<(TangentMatrix, [f64; 2]), CocycleError> {
    const FLOOR: f64 = 1e-300;
    match m {
        TangentMatrix::Dim1(a) => {
            let r = a.abs();
            if r < FLOOR {
                return Err(CocycleError::SingularDerivative { index: 0, value: r });
            }
            Ok((TangentMatrix::Dim1(a.signum()), [r, 0.0]))
        }
        TangentMatrix::Dim2(a) => {
            let col0 = [a[0][0], a[1][0]];
            let r00 = (col0[0] * col0[0] + col0[1] * col0[1]).sqrt();
            if r00 < FLOOR {
                return Err(CocycleError::SingularDerivative {
                    index: 0,
                    value: r00,
                });
            }
            let q0 = [col0[0] / r00, col0[1] / r00];
            let col1 = [a[0][1], a[1][1]];
            let r01 = q0[0] * col1[0] + q0[1] * col1[1];
            let v = [col1[0] - r01 * q0[0], col1[1] - r01 * q0[1]];
            let r11 = (v[0] * v[0] + v[1] * v[1]).sqrt();
            if r11 < FLOOR {
                return Err(CocycleError::SingularDerivative {
                    index: 1,
                    value: r11,
                });
            }
            let q1 = [v[0] / r11, v[1] / r11];
            Ok((
                TangentMatrix::Dim2([[q0[0], q1[0]], [q0[1], q1[1]]]),
                [r00, r11],
            ))
        }
    }
}

/// Express the orthogonal factor `Q` in the canonical frame at the image:
/// the new basis vectors are the `Q`-combinations of the canonical ones.
fn rotate_frame(canonical: &TangentFrame, q: &TangentMatrix) -> TangentFrame {
    match (canonical, q) {
        (TangentFrame::Circle { base, sign }, TangentMatrix::Dim1(s)) => TangentFrame::Circle {
            base: *base,
            sign: sign * s,
        },
        (TangentFrame::Sphere { base, basis }, TangentMatrix::Dim2(q)) => {
            let mut out = [[0.0; 3]; 2];
            for (i, column) in out.iter_mut().enumerate() {
                for (axis, entry) in column.iter_mut().enumerate() {
                    *entry = q[0][i] * basis[0][axis] + q[1][i] * basis[1][axis];
                }
            }
            TangentFrame::Sphere {
                base: *base,
                basis: out,
            }
        }
        _ => unreachable!("frame/matrix dimension mismatch"),
    }
}

/// Run the derivative cocycle along a whole word from the given frame.
pub fn qr_cocycle(
    sys: &SystemSpec,
    w: &DrivingWord,
    x: Point,
    frame: TangentFrame,
) -> Result<CocycleAccumulator, CocycleError> {
    let mut acc = CocycleAccumulator::with_frame(x, frame);
    for j in 0..w.len() {
        let map = sys.step_map(w, j)?;
        acc.step(&map)?;
    }
    Ok(acc)
}
