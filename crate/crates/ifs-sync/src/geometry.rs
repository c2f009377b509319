//! Points on the circle and the 2-sphere, the built-in diffeomorphism
//! catalog with closed-form tangent maps, distances, and tangent frames.
//!
//! Circle maps are represented through their lifts `L: R -> R` with
//! `L(x + 1) = L(x) + 1` and strictly positive derivative; sphere maps act on
//! unit vectors in `R^3`. Every operation returns points in canonical form
//! (angles reduced mod 1, vectors renormalized).

use crate::rng::SplitMix64;
use std::f64::consts::{PI, TAU};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("manifold mismatch: expected {expected:?}, got {got:?}")]
    ManifoldMismatch { expected: Manifold, got: Manifold },
    #[error("{family} parameter {field} = {value} outside {range}")]
    ParameterOutOfRange {
        family: &'static str,
        field: &'static str,
        value: f64,
        range: String,
    },
    #[error("composition must be nonempty and stay on one manifold")]
    BadComposition,
    #[error("map has no inverse in the catalog")]
    NotInvertible,
    #[error("bisection failed to invert the lift (residual {residual})")]
    BisectionFailed { residual: f64 },
    #[error("finite-difference step h = {0} outside (0, 1e-4]")]
    BadStep(f64),
    #[error("noise half-width delta = {delta} out of range for {manifold:?}")]
    NoiseOutOfRange { delta: f64, manifold: Manifold },
    #[error("zero vector cannot be normalized")]
    ZeroVector,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Manifold {
    Circle,
    Sphere,
}

impl Manifold {
    pub fn dim(self) -> usize {
        match self {
            Manifold::Circle => 1,
            Manifold::Sphere => 2,
        }
    }
}

/// Reduce to `[0, 1)`. Guards the edge where `x - floor(x)` rounds up to 1.
pub fn wrap_unit(x: f64) -> f64 {
    let mut r = x - x.floor();
    if r >= 1.0 {
        r -= 1.0;
    }
    r
}

/// Signed circle displacement in `[-1/2, 1/2)`.
pub fn wrap_signed(x: f64) -> f64 {
    let mut r = wrap_unit(x);
    if r >= 0.5 {
        r -= 1.0;
    }
    r
}

// --- small 3-vector helpers -------------------------------------------------

pub(crate) type V3 = [f64; 3];

pub(crate) fn dot3(a: V3, b: V3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub(crate) fn cross3(a: V3, b: V3) -> V3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub(crate) fn norm3(a: V3) -> f64 {
    dot3(a, a).sqrt()
}

pub(crate) fn scale3(a: V3, s: f64) -> V3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

pub(crate) fn add3(a: V3, b: V3) -> V3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

pub(crate) fn sub3(a: V3, b: V3) -> V3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn normalize3(a: V3) -> Result<V3, GeometryError> {
    let n = norm3(a);
    if n < 1e-300 {
        return Err(GeometryError::ZeroVector);
    }
    Ok(scale3(a, 1.0 / n))
}

// --- points ------------------------------------------------------------------

/// Point on the circle, stored as an angle in revolutions in `[0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CirclePoint {
    x: f64,
}

impl CirclePoint {
    pub fn new(x: f64) -> Self {
        CirclePoint { x: wrap_unit(x) }
    }

    pub fn angle(self) -> f64 {
        self.x
    }
}

/// Point on the 2-sphere, stored as a unit vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpherePoint {
    v: V3,
}

impl SpherePoint {
    pub fn new(v: V3) -> Result<Self, GeometryError> {
        Ok(SpherePoint { v: normalize3(v)? })
    }

    pub fn coords(self) -> V3 {
        self.v
    }

    pub fn north() -> Self {
        SpherePoint { v: [0.0, 0.0, 1.0] }
    }

    pub fn south() -> Self {
        SpherePoint {
            v: [0.0, 0.0, -1.0],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Point {
    Circle(CirclePoint),
    Sphere(SpherePoint),
}

impl Point {
    pub fn circle(x: f64) -> Self {
        Point::Circle(CirclePoint::new(x))
    }

    pub fn sphere(v: V3) -> Result<Self, GeometryError> {
        Ok(Point::Sphere(SpherePoint::new(v)?))
    }

    pub fn manifold(self) -> Manifold {
        match self {
            Point::Circle(_) => Manifold::Circle,
            Point::Sphere(_) => Manifold::Sphere,
        }
    }

    pub fn as_circle(self) -> Result<CirclePoint, GeometryError> {
        match self {
            Point::Circle(p) => Ok(p),
            Point::Sphere(_) => Err(GeometryError::ManifoldMismatch {
                expected: Manifold::Circle,
                got: Manifold::Sphere,
            }),
        }
    }

    pub fn as_sphere(self) -> Result<SpherePoint, GeometryError> {
        match self {
            Point::Sphere(p) => Ok(p),
            Point::Circle(_) => Err(GeometryError::ManifoldMismatch {
                expected: Manifold::Sphere,
                got: Manifold::Circle,
            }),
        }
    }
}

/// Riemannian distance: arc length on the circle (in revolutions, so at most
/// 1/2), great-circle angle on the sphere (at most pi).
pub fn distance(a: Point, b: Point) -> Result<f64, GeometryError> {
    match (a, b) {
        (Point::Circle(p), Point::Circle(q)) => {
            let d = (p.x - q.x).abs();
            Ok(d.min(1.0 - d))
        }
        (Point::Sphere(p), Point::Sphere(q)) => {
            // great-circle angle; the atan2 form stays accurate near 0 and
            // pi where acos(dot) loses half the working precision
            Ok(norm3(cross3(p.v, q.v)).atan2(dot3(p.v, q.v)))
        }
        (a, b) => Err(GeometryError::ManifoldMismatch {
            expected: a.manifold(),
            got: b.manifold(),
        }),
    }
}

/// Uniform point on the manifold w.r.t. the Riemannian volume.
pub fn uniform_point(manifold: Manifold, rng: &mut SplitMix64) -> Point {
    match manifold {
        Manifold::Circle => Point::circle(rng.next_f64()),
        Manifold::Sphere => {
            let z = rng.uniform(-1.0, 1.0);
            let phi = rng.uniform(0.0, TAU);
            let r = (1.0 - z * z).max(0.0).sqrt();
            Point::Sphere(SpherePoint {
                v: [r * phi.cos(), r * phi.sin(), z],
            })
        }
    }
}

// --- tangent frames ----------------------------------------------------------

/// Orthonormal basis of the tangent space at a point: a sign on the circle,
/// two orthonormal vectors perpendicular to the base point on the sphere.
#[derive(Debug, Clone)]
pub enum TangentFrame {
    Circle { base: CirclePoint, sign: f64 },
    Sphere { base: SpherePoint, basis: [V3; 2] },
}

impl TangentFrame {
    /// Deterministic canonical frame. On the sphere: Gram-Schmidt from
    /// `(e3 x v, v x (e3 x v))`, falling back to `e1` when `v` is within
    /// 1e-8 of a pole.
    pub fn canonical(p: Point) -> Self {
        match p {
            Point::Circle(c) => TangentFrame::Circle { base: c, sign: 1.0 },
            Point::Sphere(s) => {
                let v = s.v;
                let pivot = if v[2].abs() > 1.0 - 1e-8 {
                    [1.0, 0.0, 0.0]
                } else {
                    [0.0, 0.0, 1.0]
                };
                let u1 = normalize3(cross3(pivot, v)).expect("pivot not collinear");
                let u2 = normalize3(cross3(v, u1)).expect("orthogonal pair");
                TangentFrame::Sphere {
                    base: s,
                    basis: [u1, u2],
                }
            }
        }
    }

    pub fn base(&self) -> Point {
        match self {
            TangentFrame::Circle { base, .. } => Point::Circle(*base),
            TangentFrame::Sphere { base, .. } => Point::Sphere(*base),
        }
    }

    pub fn manifold(&self) -> Manifold {
        match self {
            TangentFrame::Circle { .. } => Manifold::Circle,
            TangentFrame::Sphere { .. } => Manifold::Sphere,
        }
    }
}

/// Derivative matrix between orthonormal frames; 1x1 on the circle, 2x2
/// (row-major) on the sphere.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TangentMatrix {
    Dim1(f64),
    Dim2([[f64; 2]; 2]),
}

impl TangentMatrix {
    pub fn dim(&self) -> usize {
        match self {
            TangentMatrix::Dim1(_) => 1,
            TangentMatrix::Dim2(_) => 2,
        }
    }

    /// `self * rhs` (apply `rhs` first).
    pub fn compose(&self, rhs: &TangentMatrix) -> TangentMatrix {
        match (self, rhs) {
            (TangentMatrix::Dim1(a), TangentMatrix::Dim1(b)) => TangentMatrix::Dim1(a * b),
            (TangentMatrix::Dim2(a), TangentMatrix::Dim2(b)) => {
                let mut m = [[0.0; 2]; 2];
                for (r, row) in m.iter_mut().enumerate() {
                    for (c, entry) in row.iter_mut().enumerate() {
                        *entry = a[r][0] * b[0][c] + a[r][1] * b[1][c];
                    }
                }
                TangentMatrix::Dim2(m)
            }
            _ => unreachable!("tangent matrices of mixed dimension"),
        }
    }

    /// Spectral (operator) norm.
    pub fn op_norm(&self) -> f64 {
        match self {
            TangentMatrix::Dim1(a) => a.abs(),
            TangentMatrix::Dim2(m) => {
                let (a, b, c, d) = (m[0][0], m[0][1], m[1][0], m[1][1]);
                let e = 0.5 * (a * a + b * b + c * c + d * d);
                let det = a * d - b * c;
                (e + (e * e - det * det).max(0.0).sqrt()).sqrt()
            }
        }
    }

    pub fn entry(&self, r: usize, c: usize) -> f64 {
        match self {
            TangentMatrix::Dim1(a) => {
                debug_assert!(r == 0 && c == 0);
                *a
            }
            TangentMatrix::Dim2(m) => m[r][c],
        }
    }
}

// --- noise -------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseDist {
    Uniform,
    Triangular,
}

/// Absolutely continuous parameter noise: an additive rotation angle drawn
/// from `[-delta, delta]` on the circle, an axis-angle vector drawn from the
/// ball of radius `delta` on the sphere.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    pub dist: NoiseDist,
    pub delta: f64,
}

impl NoiseSpec {
    pub fn new(dist: NoiseDist, delta: f64) -> Result<Self, GeometryError> {
        if !delta.is_finite() || delta < 0.0 {
            return Err(GeometryError::ParameterOutOfRange {
                family: "noise",
                field: "delta",
                value: delta,
                range: "[0, inf)".into(),
            });
        }
        Ok(NoiseSpec { dist, delta })
    }

    fn check_for(&self, manifold: Manifold) -> Result<(), GeometryError> {
        let limit = match manifold {
            Manifold::Circle => 0.5,
            Manifold::Sphere => PI,
        };
        if self.delta >= limit {
            return Err(GeometryError::NoiseOutOfRange {
                delta: self.delta,
                manifold,
            });
        }
        Ok(())
    }

    /// Draw a circle offset from the density on `[-delta, delta]`.
    pub fn draw_circle(&self, rng: &mut SplitMix64) -> f64 {
        match self.dist {
            NoiseDist::Uniform => rng.uniform(-self.delta, self.delta),
            NoiseDist::Triangular => self.delta * (rng.next_f64() + rng.next_f64() - 1.0),
        }
    }

    /// Draw an axis-angle vector from the ball of radius `delta`. The
    /// triangular variant has radial density proportional to `1 - |a|/delta`.
    pub fn draw_sphere(&self, rng: &mut SplitMix64) -> V3 {
        if self.delta == 0.0 {
            return [0.0, 0.0, 0.0];
        }
        loop {
            let u = rng.next_f64();
            let r = self.delta * u.cbrt();
            let accept = match self.dist {
                NoiseDist::Uniform => true,
                NoiseDist::Triangular => rng.next_f64() < 1.0 - r / self.delta,
            };
            if accept {
                let dir = match uniform_point(Manifold::Sphere, rng) {
                    Point::Sphere(s) => s.v,
                    Point::Circle(_) => unreachable!(),
                };
                return scale3(dir, r);
            }
        }
    }
}

/// Parameter attached to a `Translated` map: the drawn noise offset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseOffset {
    Circle(f64),
    Sphere(V3),
}

// --- the diffeomorphism catalog ------------------------------------------------

const FLAT_NS_GRID: usize = 4096;

/// A parameterized diffeomorphism from the built-in catalog.
///
/// Circle families act through monotone lifts; `Composition` applies its
/// entries left to right; `Translated` post-composes its base with the
/// rotation encoded in the offset (the noise carrier).
#[derive(Debug, Clone, PartialEq)]
pub enum DiffeoSpec {
    /// `x -> x + alpha mod 1`.
    Rotation { alpha: f64 },
    /// `x -> x + c sin(2 pi x)`, attracting fixed point 0, repelling 1/2.
    NorthSouthCircle { c: f64 },
    /// North-south map flattened on the arc `B(0, r0)` so the derivative
    /// there equals `kappa0`; unchanged outside `B(0, 2 r0)`.
    FlatNs { c: f64, r0: f64, kappa0: f64 },
    /// `x -> x + c sin(4 pi x)`; commutes with the half turn, two attractors.
    EquivariantNs { c: f64 },
    /// Rotation by `theta` about the (normalized) axis.
    SphereRotation { axis: V3, theta: f64 },
    /// Stereographic scaling `z -> lambda z` from the north pole. For
    /// `lambda` in (0,1): attracting south pole, repelling north pole.
    /// `inverse` yields the same family with `1/lambda` (poles exchanged).
    SphereScale { lambda: f64 },
    /// Composition, applied left to right.
    Composition(Vec<DiffeoSpec>),
    /// Base followed by the rotation encoded in the offset.
    Translated {
        base: Box<DiffeoSpec>,
        offset: NoiseOffset,
    },
    /// Inverse of a monotone circle map, evaluated by bisection on the lift.
    InverseOf(Box<DiffeoSpec>),
}

impl DiffeoSpec {
    pub fn rotation(alpha: f64) -> Self {
        DiffeoSpec::Rotation { alpha }
    }

    pub fn north_south(c: f64) -> Result<Self, GeometryError> {
        let lim = 1.0 / TAU;
        if !(c > -lim && c < 0.0) {
            return Err(GeometryError::ParameterOutOfRange {
                family: "north_south",
                field: "c",
                value: c,
                range: format!("(-{lim}, 0)"),
            });
        }
        Ok(DiffeoSpec::NorthSouthCircle { c })
    }

    pub fn flat_ns(c: f64, r0: f64, kappa0: f64) -> Result<Self, GeometryError> {
        let lim = 1.0 / TAU;
        if !(c > -lim && c < 0.0) {
            return Err(GeometryError::ParameterOutOfRange {
                family: "flat_ns",
                field: "c",
                value: c,
                range: format!("(-{lim}, 0)"),
            });
        }
        if !(r0 > 0.0 && r0 < 0.25) {
            return Err(GeometryError::ParameterOutOfRange {
                family: "flat_ns",
                field: "r0",
                value: r0,
                range: "(0, 0.25)".into(),
            });
        }
        if !(kappa0 > 0.0 && kappa0 < 1.0) {
            return Err(GeometryError::ParameterOutOfRange {
                family: "flat_ns",
                field: "kappa0",
                value: kappa0,
                range: "(0, 1)".into(),
            });
        }
        let spec = DiffeoSpec::FlatNs { c, r0, kappa0 };
        // The blend absorbs the lift deficit; reject parameter combinations
        // where that pushes the derivative through zero.
        for i in 0..=FLAT_NS_GRID {
            let s = r0 + (i as f64 / FLAT_NS_GRID as f64) * r0;
            if spec.lift_deriv(s) <= 0.0 {
                return Err(GeometryError::ParameterOutOfRange {
                    family: "flat_ns",
                    field: "kappa0",
                    value: kappa0,
                    range: "blend derivative must stay positive".into(),
                });
            }
        }
        Ok(spec)
    }

    pub fn equivariant_ns(c: f64) -> Result<Self, GeometryError> {
        let lim = 1.0 / (2.0 * TAU);
        if !(c > -lim && c < 0.0) {
            return Err(GeometryError::ParameterOutOfRange {
                family: "equivariant_ns",
                field: "c",
                value: c,
                range: format!("(-{lim}, 0)"),
            });
        }
        Ok(DiffeoSpec::EquivariantNs { c })
    }

    pub fn sphere_rotation(axis: V3, theta: f64) -> Result<Self, GeometryError> {
        Ok(DiffeoSpec::SphereRotation {
            axis: normalize3(axis)?,
            theta,
        })
    }

    pub fn sphere_scale(lambda: f64) -> Result<Self, GeometryError> {
        if !(lambda > 0.0 && lambda < 1.0) {
            return Err(GeometryError::ParameterOutOfRange {
                family: "sphere_scale",
                field: "lambda",
                value: lambda,
                range: "(0, 1)".into(),
            });
        }
        Ok(DiffeoSpec::SphereScale { lambda })
    }

    pub fn composition(maps: Vec<DiffeoSpec>) -> Result<Self, GeometryError> {
        if maps.is_empty() || maps.iter().any(|m| m.manifold() != maps[0].manifold()) {
            return Err(GeometryError::BadComposition);
        }
        Ok(DiffeoSpec::Composition(maps))
    }

    pub fn translated(base: DiffeoSpec, offset: NoiseOffset) -> Result<Self, GeometryError> {
        let ok = matches!(
            (base.manifold(), &offset),
            (Manifold::Circle, NoiseOffset::Circle(_)) | (Manifold::Sphere, NoiseOffset::Sphere(_))
        );
        if !ok {
            return Err(GeometryError::ManifoldMismatch {
                expected: base.manifold(),
                got: match offset {
                    NoiseOffset::Circle(_) => Manifold::Circle,
                    NoiseOffset::Sphere(_) => Manifold::Sphere,
                },
            });
        }
        Ok(DiffeoSpec::Translated {
            base: Box::new(base),
            offset,
        })
    }

    pub fn manifold(&self) -> Manifold {
        match self {
            DiffeoSpec::Rotation { .. }
            | DiffeoSpec::NorthSouthCircle { .. }
            | DiffeoSpec::FlatNs { .. }
            | DiffeoSpec::EquivariantNs { .. } => Manifold::Circle,
            DiffeoSpec::SphereRotation { .. } | DiffeoSpec::SphereScale { .. } => Manifold::Sphere,
            DiffeoSpec::Composition(maps) => maps[0].manifold(),
            DiffeoSpec::Translated { base, .. } => base.manifold(),
            DiffeoSpec::InverseOf(base) => base.manifold(),
        }
    }

    // --- circle lift ---------------------------------------------------------

    /// Monotone lift on the universal cover; `lift(x + 1) = lift(x) + 1`.
    pub fn lift(&self, x: f64) -> f64 {
        match self {
            DiffeoSpec::Rotation { alpha } => x + alpha,
            DiffeoSpec::NorthSouthCircle { c } => x + c * (TAU * x).sin(),
            DiffeoSpec::EquivariantNs { c } => x + c * (2.0 * TAU * x).sin(),
            DiffeoSpec::FlatNs { c, r0, kappa0 } => flat_ns_lift(*c, *r0, *kappa0, x),
            DiffeoSpec::Composition(maps) => maps.iter().fold(x, |v, m| m.lift(v)),
            DiffeoSpec::Translated { base, offset } => match offset {
                NoiseOffset::Circle(a) => base.lift(x) + a,
                NoiseOffset::Sphere(_) => unreachable!("circle lift of sphere map"),
            },
            DiffeoSpec::InverseOf(base) => invert_lift(base, x),
            _ => unreachable!("circle lift of sphere map"),
        }
    }

    /// Derivative of the lift (positive for every catalog family).
    pub fn lift_deriv(&self, x: f64) -> f64 {
        match self {
            DiffeoSpec::Rotation { .. } => 1.0,
            DiffeoSpec::NorthSouthCircle { c } => 1.0 + TAU * c * (TAU * x).cos(),
            DiffeoSpec::EquivariantNs { c } => 1.0 + 2.0 * TAU * c * (2.0 * TAU * x).cos(),
            DiffeoSpec::FlatNs { c, r0, kappa0 } => flat_ns_lift_deriv(*c, *r0, *kappa0, x),
            DiffeoSpec::Composition(maps) => {
                let mut v = x;
                let mut d = 1.0;
                for m in maps {
                    d *= m.lift_deriv(v);
                    v = m.lift(v);
                }
                d
            }
            DiffeoSpec::Translated { base, .. } => base.lift_deriv(x),
            DiffeoSpec::InverseOf(base) => {
                let y = invert_lift(base, x);
                1.0 / base.lift_deriv(y)
            }
            _ => unreachable!("circle lift of sphere map"),
        }
    }

    // --- sphere action ---------------------------------------------------------

    fn sphere_eval(&self, v: V3) -> V3 {
        match self {
            DiffeoSpec::SphereRotation { axis, theta } => rodrigues(*axis, *theta, v),
            DiffeoSpec::SphereScale { lambda } => scale_eval(*lambda, v),
            DiffeoSpec::Composition(maps) => maps.iter().fold(v, |p, m| m.sphere_eval(p)),
            DiffeoSpec::Translated { base, offset } => match offset {
                NoiseOffset::Sphere(a) => axis_angle_rotate(*a, base.sphere_eval(v)),
                NoiseOffset::Circle(_) => unreachable!("sphere eval of circle map"),
            },
            DiffeoSpec::InverseOf(_) => unreachable!("sphere inverses are closed-form"),
            _ => unreachable!("sphere eval of circle map"),
        }
    }

    /// Push a tangent vector `u` at `v` forward; returns `(image, Df_v u)`.
    fn sphere_push(&self, v: V3, u: V3) -> (V3, V3) {
        match self {
            DiffeoSpec::SphereRotation { axis, theta } => (
                rodrigues(*axis, *theta, v),
                rodrigues(*axis, *theta, u),
            ),
            DiffeoSpec::SphereScale { lambda } => scale_push(*lambda, v, u),
            DiffeoSpec::Composition(maps) => {
                maps.iter().fold((v, u), |(p, w), m| m.sphere_push(p, w))
            }
            DiffeoSpec::Translated { base, offset } => match offset {
                NoiseOffset::Sphere(a) => {
                    let (p, w) = base.sphere_push(v, u);
                    (axis_angle_rotate(*a, p), axis_angle_rotate(*a, w))
                }
                NoiseOffset::Circle(_) => unreachable!("sphere push of circle map"),
            },
            DiffeoSpec::InverseOf(_) => unreachable!("sphere inverses are closed-form"),
            _ => unreachable!("sphere push of circle map"),
        }
    }

    // --- operations ------------------------------------------------------------

    /// Evaluate the map; the image is reduced to canonical form.
    pub fn eval(&self, x: Point) -> Result<Point, GeometryError> {
        if x.manifold() != self.manifold() {
            return Err(GeometryError::ManifoldMismatch {
                expected: self.manifold(),
                got: x.manifold(),
            });
        }
        match x {
            Point::Circle(p) => Ok(Point::circle(wrap_unit(self.lift(p.x)))),
            Point::Sphere(p) => Point::sphere(self.sphere_eval(p.v)),
        }
    }

    /// Derivative matrix from the given frame to the returned canonical frame
    /// at the image point.
    pub fn tangent(
        &self,
        frame: &TangentFrame,
    ) -> Result<(TangentFrame, TangentMatrix), GeometryError> {
        if frame.manifold() != self.manifold() {
            return Err(GeometryError::ManifoldMismatch {
                expected: self.manifold(),
                got: frame.manifold(),
            });
        }
        match frame {
            TangentFrame::Circle { base, sign } => {
                let image = self.eval(Point::Circle(*base))?;
                let a = sign * self.lift_deriv(base.x);
                Ok((TangentFrame::canonical(image), TangentMatrix::Dim1(a)))
            }
            TangentFrame::Sphere { base, basis } => {
                let image = self.eval(Point::Sphere(*base))?;
                let out = TangentFrame::canonical(image);
                let iv = image.as_sphere()?.v;
                let cb = match &out {
                    TangentFrame::Sphere { basis, .. } => *basis,
                    TangentFrame::Circle { .. } => unreachable!(),
                };
                let mut m = [[0.0; 2]; 2];
                for (i, u) in basis.iter().enumerate() {
                    let (_, mut w) = self.sphere_push(base.v, *u);
                    // project out the normal residue from float noise
                    w = sub3(w, scale3(iv, dot3(w, iv)));
                    m[0][i] = dot3(cb[0], w);
                    m[1][i] = dot3(cb[1], w);
                }
                Ok((out, TangentMatrix::Dim2(m)))
            }
        }
    }

    /// Central-difference check of `tangent` in the same frame convention.
    pub fn tangent_fd(
        &self,
        frame: &TangentFrame,
        h: f64,
    ) -> Result<TangentMatrix, GeometryError> {
        if !(h > 0.0 && h <= 1e-4) {
            return Err(GeometryError::BadStep(h));
        }
        if frame.manifold() != self.manifold() {
            return Err(GeometryError::ManifoldMismatch {
                expected: self.manifold(),
                got: frame.manifold(),
            });
        }
        match frame {
            TangentFrame::Circle { base, sign } => {
                let fp = self.eval(Point::circle(base.x + h * sign))?.as_circle()?;
                let fm = self.eval(Point::circle(base.x - h * sign))?.as_circle()?;
                let delta = wrap_signed(fp.x - fm.x);
                Ok(TangentMatrix::Dim1(delta / (2.0 * h)))
            }
            TangentFrame::Sphere { base, basis } => {
                let image = self.eval(Point::Sphere(*base))?.as_sphere()?;
                let cb = match TangentFrame::canonical(Point::Sphere(image)) {
                    TangentFrame::Sphere { basis, .. } => basis,
                    TangentFrame::Circle { .. } => unreachable!(),
                };
                let mut m = [[0.0; 2]; 2];
                for (i, u) in basis.iter().enumerate() {
                    let step = |t: f64| -> Result<V3, GeometryError> {
                        let p = add3(scale3(base.v, t.cos()), scale3(*u, t.sin()));
                        Ok(self.eval(Point::sphere(p)?)?.as_sphere()?.v)
                    };
                    let fp = step(h)?;
                    let fm = step(-h)?;
                    let w = scale3(sub3(fp, fm), 1.0 / (2.0 * h));
                    m[0][i] = dot3(cb[0], w);
                    m[1][i] = dot3(cb[1], w);
                }
                Ok(TangentMatrix::Dim2(m))
            }
        }
    }

    /// Inverse map. Closed-form where the family allows it; monotone circle
    /// families fall back to bisection on the lift.
    pub fn inverse(&self) -> Result<DiffeoSpec, GeometryError> {
        match self {
            DiffeoSpec::Rotation { alpha } => Ok(DiffeoSpec::Rotation { alpha: -alpha }),
            DiffeoSpec::SphereRotation { axis, theta } => Ok(DiffeoSpec::SphereRotation {
                axis: *axis,
                theta: -theta,
            }),
            DiffeoSpec::SphereScale { lambda } => Ok(DiffeoSpec::SphereScale {
                lambda: 1.0 / lambda,
            }),
            DiffeoSpec::NorthSouthCircle { .. }
            | DiffeoSpec::FlatNs { .. }
            | DiffeoSpec::EquivariantNs { .. } => {
                Ok(DiffeoSpec::InverseOf(Box::new(self.clone())))
            }
            DiffeoSpec::Composition(maps) => {
                let inv: Result<Vec<_>, _> = maps.iter().rev().map(|m| m.inverse()).collect();
                Ok(DiffeoSpec::Composition(inv?))
            }
            DiffeoSpec::Translated { base, offset } => {
                let undo = match offset {
                    NoiseOffset::Circle(a) => DiffeoSpec::Rotation { alpha: -a },
                    NoiseOffset::Sphere(a) => DiffeoSpec::SphereRotation {
                        axis: normalize3(*a).unwrap_or([0.0, 0.0, 1.0]),
                        theta: -norm3(*a),
                    },
                };
                Ok(DiffeoSpec::Composition(vec![undo, base.inverse()?]))
            }
            DiffeoSpec::InverseOf(base) => Ok((**base).clone()),
        }
    }
}

/// `Translated(base, a)` with `a` drawn from the noise density; the carrier
/// of absolutely continuous transition kernels.
pub fn sample_random_map(
    base: &DiffeoSpec,
    noise: &NoiseSpec,
    rng: &mut SplitMix64,
) -> Result<DiffeoSpec, GeometryError> {
    noise.check_for(base.manifold())?;
    if noise.delta == 0.0 {
        return Ok(base.clone());
    }
    let offset = match base.manifold() {
        Manifold::Circle => NoiseOffset::Circle(noise.draw_circle(rng)),
        Manifold::Sphere => NoiseOffset::Sphere(noise.draw_sphere(rng)),
    };
    DiffeoSpec::translated(base.clone(), offset)
}

// --- circle lift internals -----------------------------------------------------

/// Invert a monotone lift by bisection; exact to the last bit of the bracket.
fn invert_lift(map: &DiffeoSpec, y: f64) -> f64 {
    let b = map.lift(0.0);
    let k = (y - b).floor();
    let mut lo = k;
    let mut hi = k + 1.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if map.lift(mid) < y {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Hermite + bump derivative profile on the blend annulus `[r0, 2 r0]`,
/// parameterized by `u = (s - r0)/r0`. The bump amplitude `A` absorbs the
/// lift deficit so the map is unchanged outside `B(0, 2 r0)`.
fn flat_ns_blend(c: f64, r0: f64, kappa0: f64) -> ([f64; 4], f64) {
    let g1 = 1.0 + TAU * c * (TAU * 2.0 * r0).cos();
    let m1 = r0 * (-TAU * TAU * c * (TAU * 2.0 * r0).sin());
    let d = g1 - kappa0;
    let a0 = kappa0;
    let a2 = 3.0 * d - m1;
    let a3 = m1 - 2.0 * d;
    let hermite_integral = a0 + a2 / 3.0 + a3 / 4.0;
    let ns_at_2r0 = 2.0 * r0 + c * (TAU * 2.0 * r0).sin();
    let amp = 30.0 * ((ns_at_2r0 - kappa0 * r0) / r0 - hermite_integral);
    ([a0, 0.0, a2, a3], amp)
}

fn flat_ns_half(c: f64, r0: f64, kappa0: f64, s: f64) -> f64 {
    debug_assert!((0.0..=0.5 + 1e-12).contains(&s));
    if s >= 2.0 * r0 {
        return s + c * (TAU * s).sin();
    }
    if s <= r0 {
        return kappa0 * s;
    }
    let (a, amp) = flat_ns_blend(c, r0, kappa0);
    let u = (s - r0) / r0;
    let hermite = a[0] * u + a[2] * u.powi(3) / 3.0 + a[3] * u.powi(4) / 4.0;
    let bump = u.powi(3) / 3.0 - u.powi(4) / 2.0 + u.powi(5) / 5.0;
    kappa0 * r0 + r0 * (hermite + amp * bump)
}

fn flat_ns_half_deriv(c: f64, r0: f64, kappa0: f64, s: f64) -> f64 {
    if s >= 2.0 * r0 {
        return 1.0 + TAU * c * (TAU * s).cos();
    }
    if s <= r0 {
        return kappa0;
    }
    let (a, amp) = flat_ns_blend(c, r0, kappa0);
    let u = (s - r0) / r0;
    let w = u * (1.0 - u);
    a[0] + a[2] * u * u + a[3] * u.powi(3) + amp * w * w
}

/// Lift of the flattened north-south map: odd around the fixed point 0 and
/// equal to the plain north-south lift outside `B(0, 2 r0)`.
fn flat_ns_lift(c: f64, r0: f64, kappa0: f64, x: f64) -> f64 {
    let n = x.floor();
    let s = x - n;
    if s < 0.5 {
        n + flat_ns_half(c, r0, kappa0, s)
    } else {
        (n + 1.0) - flat_ns_half(c, r0, kappa0, 1.0 - s)
    }
}

fn flat_ns_lift_deriv(c: f64, r0: f64, kappa0: f64, x: f64) -> f64 {
    let s = x - x.floor();
    let s = if s < 0.5 { s } else { 1.0 - s };
    flat_ns_half_deriv(c, r0, kappa0, s)
}

// --- sphere map internals --------------------------------------------------------

fn rodrigues(axis: V3, theta: f64, v: V3) -> V3 {
    let (s, c) = theta.sin_cos();
    let kv = cross3(axis, v);
    let kkv = dot3(axis, v);
    add3(
        add3(scale3(v, c), scale3(kv, s)),
        scale3(axis, kkv * (1.0 - c)),
    )
}

fn axis_angle_rotate(a: V3, v: V3) -> V3 {
    let angle = norm3(a);
    if angle < 1e-300 {
        return v;
    }
    rodrigues(scale3(a, 1.0 / angle), angle, v)
}

fn stereo_north(v: V3) -> [f64; 2] {
    let t = 1.0 / (1.0 - v[2]);
    [v[0] * t, v[1] * t]
}

fn stereo_north_inv(w: [f64; 2]) -> V3 {
    let s = 1.0 + w[0] * w[0] + w[1] * w[1];
    [2.0 * w[0] / s, 2.0 * w[1] / s, (s - 2.0) / s]
}

fn stereo_south(v: V3) -> [f64; 2] {
    let t = 1.0 / (1.0 + v[2]);
    [v[0] * t, v[1] * t]
}

fn stereo_south_inv(w: [f64; 2]) -> V3 {
    let s = 1.0 + w[0] * w[0] + w[1] * w[1];
    [2.0 * w[0] / s, 2.0 * w[1] / s, (2.0 - s) / s]
}

/// The scaling acts as `w -> lambda w` in the north-pole chart and as
/// `w -> w / lambda` in the south-pole chart; pick the chart whose pole is
/// far from the argument.
fn scale_eval(lambda: f64, v: V3) -> V3 {
    if v[2] <= 0.0 {
        let w = stereo_north(v);
        stereo_north_inv([lambda * w[0], lambda * w[1]])
    } else {
        let w = stereo_south(v);
        stereo_south_inv([w[0] / lambda, w[1] / lambda])
    }
}

fn scale_push(lambda: f64, v: V3, u: V3) -> (V3, V3) {
    if v[2] <= 0.0 {
        let t = 1.0 / (1.0 - v[2]);
        let w = stereo_north(v);
        // J of the north projection applied to u
        let tw = [
            (u[0] + w[0] * u[2]) * t,
            (u[1] + w[1] * u[2]) * t,
        ];
        let sw = [lambda * w[0], lambda * w[1]];
        let img = stereo_north_inv(sw);
        let du = jac_inv_apply(sw, [lambda * tw[0], lambda * tw[1]], 1.0);
        (img, du)
    } else {
        let t = 1.0 / (1.0 + v[2]);
        let w = stereo_south(v);
        let tw = [
            (u[0] - w[0] * u[2]) * t,
            (u[1] - w[1] * u[2]) * t,
        ];
        let inv = 1.0 / lambda;
        let sw = [inv * w[0], inv * w[1]];
        let img = stereo_south_inv(sw);
        let du = jac_inv_apply(sw, [inv * tw[0], inv * tw[1]], -1.0);
        (img, du)
    }
}

/// Jacobian of the inverse stereographic projection at `w`, applied to a
/// plane vector; `pole_sign` is +1 for the north chart, -1 for the south.
fn jac_inv_apply(w: [f64; 2], t: [f64; 2], pole_sign: f64) -> V3 {
    let s = 1.0 + w[0] * w[0] + w[1] * w[1];
    let s2 = s * s;
    [
        (2.0 / s - 4.0 * w[0] * w[0] / s2) * t[0] + (-4.0 * w[0] * w[1] / s2) * t[1],
        (-4.0 * w[0] * w[1] / s2) * t[0] + (2.0 / s - 4.0 * w[1] * w[1] / s2) * t[1],
        pole_sign * (4.0 * w[0] / s2 * t[0] + 4.0 * w[1] / s2 * t[1]),
    ]
}
