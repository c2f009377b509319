//! Experiment configuration: a strict JSON schema with full validation.
//!
//! Unknown fields are rejected, every parameter is range-checked before any
//! computation starts, and errors carry the JSON path of the offending
//! field. Omitted optional parameters are filled with defaults and the
//! filled paths are reported so the run manifest can echo them.

use crate::cocycle::SystemSpec;
use crate::driving::ProbabilityVector;
use crate::geometry::{DiffeoSpec, Manifold, NoiseDist, NoiseOffset, NoiseSpec, Point};
use crate::measures::InitialDistribution;
use serde_json::{json, Map, Value};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
#[error("{path}: {message}")]
pub struct ConfigError {
    pub path: String,
    pub message: String,
}

fn err<T>(path: &str, message: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError {
        path: path.to_string(),
        message: message.into(),
    })
}

/// Fully validated experiment description.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub system: SystemSpec,
    pub experiment: ExperimentKind,
    pub seed: u64,
    pub output: String,
}

impl ExperimentConfig {
    pub fn manifold(&self) -> Manifold {
        self.system.manifold()
    }
}

/// Experiment kind with its (validated) parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum ExperimentKind {
    Lyapunov {
        n: usize,
        burn: usize,
        blocks: usize,
    },
    Spectrum {
        n: usize,
        burn: usize,
        blocks: usize,
    },
    Stationary {
        resolution: usize,
        samples_per_cell: usize,
        tol: f64,
        max_iter: usize,
        n: usize,
        burn: usize,
    },
    Pullback {
        depth: usize,
        cluster_radius: f64,
        ensemble: usize,
        n: usize,
        burn: usize,
    },
    Sync {
        pairs: usize,
        n: usize,
        tol: f64,
    },
    Minimality {
        resolution: usize,
        depth: usize,
        x0: f64,
    },
    BakerVerify {
        words: usize,
        word_len: usize,
    },
    Isolate {
        arc: (f64, f64),
        n: usize,
    },
    Unique {
        n: usize,
        burn: usize,
        inits: Vec<InitialDistribution>,
    },
}

impl ExperimentKind {
    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::Lyapunov { .. } => "lyapunov",
            ExperimentKind::Spectrum { .. } => "spectrum",
            ExperimentKind::Stationary { .. } => "stationary",
            ExperimentKind::Pullback { .. } => "pullback",
            ExperimentKind::Sync { .. } => "sync",
            ExperimentKind::Minimality { .. } => "minimality",
            ExperimentKind::BakerVerify { .. } => "baker-verify",
            ExperimentKind::Isolate { .. } => "isolate",
            ExperimentKind::Unique { .. } => "unique",
        }
    }
}

/// Parse result: the validated config plus the paths that were filled with
/// defaults (echoed in the run manifest).
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedConfig {
    pub config: ExperimentConfig,
    pub defaults_applied: Vec<String>,
}

// --- low-level helpers -----------------------------------------------------------

fn as_object<'a>(v: &'a Value, path: &str) -> Result<&'a Map<String, Value>, ConfigError> {
    v.as_object()
        .ok_or(ConfigError {
            path: path.to_string(),
            message: "expected an object".into(),
        })
}

fn check_keys(
    m: &Map<String, Value>,
    allowed: &[&str],
    path: &str,
) -> Result<(), ConfigError> {
    for key in m.keys() {
        if !allowed.contains(&key.as_str()) {
            return err(
                &format!("{path}.{key}"),
                format!("unknown field (allowed: {})", allowed.join(", ")),
            );
        }
    }
    Ok(())
}

fn required<'a>(
    m: &'a Map<String, Value>,
    key: &str,
    path: &str,
) -> Result<&'a Value, ConfigError> {
    m.get(key).ok_or(ConfigError {
        path: format!("{path}.{key}"),
        message: "missing required field".into(),
    })
}

fn as_f64(v: &Value, path: &str) -> Result<f64, ConfigError> {
    match v.as_f64() {
        Some(x) if x.is_finite() => Ok(x),
        _ => err(path, "expected a finite number"),
    }
}

fn as_usize(v: &Value, path: &str) -> Result<usize, ConfigError> {
    v.as_u64()
        .map(|x| x as usize)
        .ok_or(ConfigError {
            path: path.to_string(),
            message: "expected a nonnegative integer".into(),
        })
}

fn as_str<'a>(v: &'a Value, path: &str) -> Result<&'a str, ConfigError> {
    v.as_str().ok_or(ConfigError {
        path: path.to_string(),
        message: "expected a string".into(),
    })
}

fn as_array<'a>(v: &'a Value, path: &str) -> Result<&'a Vec<Value>, ConfigError> {
    v.as_array().ok_or(ConfigError {
        path: path.to_string(),
        message: "expected an array".into(),
    })
}

fn as_vec3(v: &Value, path: &str) -> Result<[f64; 3], ConfigError> {
    let arr = as_array(v, path)?;
    if arr.len() != 3 {
        return err(path, format!("expected 3 components, got {}", arr.len()));
    }
    Ok([
        as_f64(&arr[0], &format!("{path}[0]"))?,
        as_f64(&arr[1], &format!("{path}[1]"))?,
        as_f64(&arr[2], &format!("{path}[2]"))?,
    ])
}

struct Defaults<'a> {
    m: &'a Map<String, Value>,
    path: &'a str,
    applied: Vec<String>,
}

impl<'a> Defaults<'a> {
    fn new(m: &'a Map<String, Value>, path: &'a str) -> Self {
        Defaults {
            m,
            path,
            applied: Vec::new(),
        }
    }

    fn usize_or(&mut self, key: &str, default: usize) -> Result<usize, ConfigError> {
        match self.m.get(key) {
            Some(v) => as_usize(v, &format!("{}.{key}", self.path)),
            None => {
                self.applied.push(format!("{}.{key}", self.path));
                Ok(default)
            }
        }
    }

    fn f64_or(&mut self, key: &str, default: f64) -> Result<f64, ConfigError> {
        match self.m.get(key) {
            Some(v) => as_f64(v, &format!("{}.{key}", self.path)),
            None => {
                self.applied.push(format!("{}.{key}", self.path));
                Ok(default)
            }
        }
    }
}

// --- map specs ----------------------------------------------------------------------

fn parse_map(v: &Value, manifold: Manifold, path: &str) -> Result<DiffeoSpec, ConfigError> {
    let m = as_object(v, path)?;
    let kind = as_str(required(m, "type", path)?, &format!("{path}.type"))?;
    let geom = |e: crate::geometry::GeometryError, field: &str| ConfigError {
        path: format!("{path}.{field}"),
        message: e.to_string(),
    };
    let need = |want: Manifold| -> Result<(), ConfigError> {
        if manifold != want {
            return err(
                &format!("{path}.type"),
                format!("map family '{kind}' lives on the {want:?}, system is on the {manifold:?}"),
            );
        }
        Ok(())
    };
    match kind {
        "rotation" => {
            check_keys(m, &["type", "alpha"], path)?;
            need(Manifold::Circle)?;
            let alpha = as_f64(required(m, "alpha", path)?, &format!("{path}.alpha"))?;
            Ok(DiffeoSpec::rotation(alpha))
        }
        "north_south" => {
            check_keys(m, &["type", "c"], path)?;
            need(Manifold::Circle)?;
            let c = as_f64(required(m, "c", path)?, &format!("{path}.c"))?;
            DiffeoSpec::north_south(c).map_err(|e| geom(e, "c"))
        }
        "flat_ns" => {
            check_keys(m, &["type", "c", "r0", "kappa0"], path)?;
            need(Manifold::Circle)?;
            let c = as_f64(required(m, "c", path)?, &format!("{path}.c"))?;
            let r0 = as_f64(required(m, "r0", path)?, &format!("{path}.r0"))?;
            let kappa0 = as_f64(required(m, "kappa0", path)?, &format!("{path}.kappa0"))?;
            DiffeoSpec::flat_ns(c, r0, kappa0).map_err(|e| geom(e, "c"))
        }
        "equivariant_ns" => {
            check_keys(m, &["type", "c"], path)?;
            need(Manifold::Circle)?;
            let c = as_f64(required(m, "c", path)?, &format!("{path}.c"))?;
            DiffeoSpec::equivariant_ns(c).map_err(|e| geom(e, "c"))
        }
        "sphere_rotation" => {
            check_keys(m, &["type", "axis", "theta"], path)?;
            need(Manifold::Sphere)?;
            let axis = as_vec3(required(m, "axis", path)?, &format!("{path}.axis"))?;
            let theta = as_f64(required(m, "theta", path)?, &format!("{path}.theta"))?;
            DiffeoSpec::sphere_rotation(axis, theta).map_err(|e| geom(e, "axis"))
        }
        "sphere_scale" => {
            check_keys(m, &["type", "lambda"], path)?;
            need(Manifold::Sphere)?;
            let lambda = as_f64(required(m, "lambda", path)?, &format!("{path}.lambda"))?;
            DiffeoSpec::sphere_scale(lambda).map_err(|e| geom(e, "lambda"))
        }
        "composition" => {
            check_keys(m, &["type", "maps"], path)?;
            let arr = as_array(required(m, "maps", path)?, &format!("{path}.maps"))?;
            if arr.is_empty() {
                return err(&format!("{path}.maps"), "composition must be nonempty");
            }
            let maps: Result<Vec<_>, _> = arr
                .iter()
                .enumerate()
                .map(|(i, mv)| parse_map(mv, manifold, &format!("{path}.maps[{i}]")))
                .collect();
            DiffeoSpec::composition(maps?).map_err(|e| geom(e, "maps"))
        }
        "translated" => {
            check_keys(m, &["type", "base", "a"], path)?;
            let base = parse_map(required(m, "base", path)?, manifold, &format!("{path}.base"))?;
            let a = required(m, "a", path)?;
            let offset = match manifold {
                Manifold::Circle => NoiseOffset::Circle(as_f64(a, &format!("{path}.a"))?),
                Manifold::Sphere => NoiseOffset::Sphere(as_vec3(a, &format!("{path}.a"))?),
            };
            DiffeoSpec::translated(base, offset).map_err(|e| geom(e, "a"))
        }
        "inverse_of" => {
            check_keys(m, &["type", "base"], path)?;
            need(Manifold::Circle)?;
            let base = parse_map(required(m, "base", path)?, manifold, &format!("{path}.base"))?;
            base.inverse().map_err(|e| geom(e, "base"))
        }
        other => err(
            &format!("{path}.type"),
            format!("unknown map family '{other}'"),
        ),
    }
}

fn map_to_value(map: &DiffeoSpec) -> Value {
    match map {
        DiffeoSpec::Rotation { alpha } => json!({"type": "rotation", "alpha": alpha}),
        DiffeoSpec::NorthSouthCircle { c } => json!({"type": "north_south", "c": c}),
        DiffeoSpec::FlatNs { c, r0, kappa0 } => {
            json!({"type": "flat_ns", "c": c, "r0": r0, "kappa0": kappa0})
        }
        DiffeoSpec::EquivariantNs { c } => json!({"type": "equivariant_ns", "c": c}),
        DiffeoSpec::SphereRotation { axis, theta } => {
            json!({"type": "sphere_rotation", "axis": axis, "theta": theta})
        }
        DiffeoSpec::SphereScale { lambda } => json!({"type": "sphere_scale", "lambda": lambda}),
        DiffeoSpec::Composition(maps) => {
            json!({"type": "composition", "maps": maps.iter().map(map_to_value).collect::<Vec<_>>()})
        }
        DiffeoSpec::Translated { base, offset } => {
            let a = match offset {
                NoiseOffset::Circle(a) => json!(a),
                NoiseOffset::Sphere(a) => json!(a),
            };
            json!({"type": "translated", "base": map_to_value(base), "a": a})
        }
        DiffeoSpec::InverseOf(base) => json!({"type": "inverse_of", "base": map_to_value(base)}),
    }
}

// --- system -------------------------------------------------------------------------

fn parse_system(v: &Value, path: &str) -> Result<SystemSpec, ConfigError> {
    let m = as_object(v, path)?;
    check_keys(m, &["manifold", "maps", "probs", "base", "noise"], path)?;
    let manifold = match as_str(required(m, "manifold", path)?, &format!("{path}.manifold"))? {
        "circle" => Manifold::Circle,
        "sphere" => Manifold::Sphere,
        other => {
            return err(
                &format!("{path}.manifold"),
                format!("unknown manifold '{other}' (expected 'circle' or 'sphere')"),
            )
        }
    };
    let finite = m.contains_key("maps") || m.contains_key("probs");
    let random = m.contains_key("base") || m.contains_key("noise");
    if finite == random {
        return err(
            path,
            "give either maps+probs (finite IFS) or base+noise (random family)",
        );
    }
    if finite {
        let maps_v = as_array(required(m, "maps", path)?, &format!("{path}.maps"))?;
        let maps: Result<Vec<_>, _> = maps_v
            .iter()
            .enumerate()
            .map(|(i, mv)| parse_map(mv, manifold, &format!("{path}.maps[{i}]")))
            .collect();
        let probs_v = as_array(required(m, "probs", path)?, &format!("{path}.probs"))?;
        let probs: Result<Vec<f64>, _> = probs_v
            .iter()
            .enumerate()
            .map(|(i, pv)| as_f64(pv, &format!("{path}.probs[{i}]")))
            .collect();
        let probs = ProbabilityVector::new(probs?).map_err(|e| ConfigError {
            path: format!("{path}.probs"),
            message: e.to_string(),
        })?;
        SystemSpec::finite(maps?, probs).map_err(|e| ConfigError {
            path: path.to_string(),
            message: e.to_string(),
        })
    } else {
        let base = parse_map(required(m, "base", path)?, manifold, &format!("{path}.base"))?;
        let noise_v = required(m, "noise", path)?;
        let nm = as_object(noise_v, &format!("{path}.noise"))?;
        check_keys(nm, &["dist", "delta"], &format!("{path}.noise"))?;
        let dist = match as_str(
            required(nm, "dist", &format!("{path}.noise"))?,
            &format!("{path}.noise.dist"),
        )? {
            "uniform" => NoiseDist::Uniform,
            "triangular" => NoiseDist::Triangular,
            other => {
                return err(
                    &format!("{path}.noise.dist"),
                    format!("unknown distribution '{other}'"),
                )
            }
        };
        let delta = as_f64(
            required(nm, "delta", &format!("{path}.noise"))?,
            &format!("{path}.noise.delta"),
        )?;
        let noise = NoiseSpec::new(dist, delta).map_err(|e| ConfigError {
            path: format!("{path}.noise.delta"),
            message: e.to_string(),
        })?;
        let limit = match manifold {
            Manifold::Circle => 0.5,
            Manifold::Sphere => std::f64::consts::PI,
        };
        if delta >= limit {
            return err(
                &format!("{path}.noise.delta"),
                format!("delta = {delta} out of range for the {manifold:?} (must be < {limit})"),
            );
        }
        Ok(SystemSpec::random(base, noise))
    }
}

fn system_to_value(sys: &SystemSpec) -> Value {
    match sys {
        SystemSpec::FiniteIfs { maps, probs } => json!({
            "manifold": manifold_name(sys.manifold()),
            "maps": maps.iter().map(map_to_value).collect::<Vec<_>>(),
            "probs": probs.probs(),
        }),
        SystemSpec::RandomFamily { base, noise } => json!({
            "manifold": manifold_name(sys.manifold()),
            "base": map_to_value(base),
            "noise": {
                "dist": match noise.dist { NoiseDist::Uniform => "uniform", NoiseDist::Triangular => "triangular" },
                "delta": noise.delta,
            },
        }),
    }
}

fn manifold_name(m: Manifold) -> &'static str {
    match m {
        Manifold::Circle => "circle",
        Manifold::Sphere => "sphere",
    }
}

// --- initial distributions -------------------------------------------------------------

fn parse_init(
    v: &Value,
    manifold: Manifold,
    path: &str,
) -> Result<InitialDistribution, ConfigError> {
    let m = as_object(v, path)?;
    let kind = as_str(required(m, "init", path)?, &format!("{path}.init"))?;
    let point_at = |v: &Value, p: &str| -> Result<Point, ConfigError> {
        match manifold {
            Manifold::Circle => Ok(Point::circle(as_f64(v, p)?)),
            Manifold::Sphere => Point::sphere(as_vec3(v, p)?).map_err(|e| ConfigError {
                path: p.to_string(),
                message: e.to_string(),
            }),
        }
    };
    match kind {
        "uniform" => {
            check_keys(m, &["init"], path)?;
            Ok(InitialDistribution::Uniform)
        }
        "delta" => {
            check_keys(m, &["init", "at"], path)?;
            let at = point_at(required(m, "at", path)?, &format!("{path}.at"))?;
            Ok(InitialDistribution::Delta(at))
        }
        "arc" => {
            check_keys(m, &["init", "center", "halfwidth"], path)?;
            let center = point_at(required(m, "center", path)?, &format!("{path}.center"))?;
            let halfwidth = as_f64(
                required(m, "halfwidth", path)?,
                &format!("{path}.halfwidth"),
            )?;
            if halfwidth <= 0.0 {
                return err(&format!("{path}.halfwidth"), "halfwidth must be positive");
            }
            Ok(InitialDistribution::Arc { center, halfwidth })
        }
        other => err(
            &format!("{path}.init"),
            format!("unknown initial distribution '{other}'"),
        ),
    }
}

fn init_to_value(init: &InitialDistribution) -> Value {
    let point_value = |p: &Point| match p {
        Point::Circle(c) => json!(c.angle()),
        Point::Sphere(s) => json!(s.coords()),
    };
    match init {
        InitialDistribution::Uniform => json!({"init": "uniform"}),
        InitialDistribution::Delta(p) => json!({"init": "delta", "at": point_value(p)}),
        InitialDistribution::Arc { center, halfwidth } => {
            json!({"init": "arc", "center": point_value(center), "halfwidth": halfwidth})
        }
    }
}

fn default_inits(manifold: Manifold) -> Vec<InitialDistribution> {
    match manifold {
        Manifold::Circle => vec![
            InitialDistribution::Uniform,
            InitialDistribution::Delta(Point::circle(0.0)),
            InitialDistribution::Arc {
                center: Point::circle(0.25),
                halfwidth: 0.05,
            },
        ],
        Manifold::Sphere => vec![
            InitialDistribution::Uniform,
            InitialDistribution::Delta(Point::sphere([0.0, 0.0, 1.0]).unwrap()),
            InitialDistribution::Arc {
                center: Point::sphere([0.0, 0.0, 1.0]).unwrap(),
                halfwidth: 0.3,
            },
        ],
    }
}

// --- experiments ---------------------------------------------------------------------------

fn parse_experiment(
    v: &Value,
    sys: &SystemSpec,
    path: &str,
    defaults_applied: &mut Vec<String>,
) -> Result<ExperimentKind, ConfigError> {
    let m = as_object(v, path)?;
    let kind = as_str(required(m, "kind", path)?, &format!("{path}.kind"))?;
    let manifold = sys.manifold();
    let finite = matches!(sys, SystemSpec::FiniteIfs { .. });
    let mut d = Defaults::new(m, path);
    let out = match kind {
        "lyapunov" | "spectrum" => {
            check_keys(m, &["kind", "n", "burn", "blocks"], path)?;
            let n = d.usize_or("n", 100_000)?;
            let burn = d.usize_or("burn", 1000)?;
            let blocks = d.usize_or("blocks", 10)?;
            if !(2..=n).contains(&blocks) {
                return err(path, format!("need n >= blocks >= 2, got n = {n}, blocks = {blocks}"));
            }
            if kind == "lyapunov" {
                ExperimentKind::Lyapunov { n, burn, blocks }
            } else {
                ExperimentKind::Spectrum { n, burn, blocks }
            }
        }
        "stationary" => {
            check_keys(
                m,
                &["kind", "resolution", "samples_per_cell", "tol", "max_iter", "n", "burn"],
                path,
            )?;
            let resolution = d.usize_or("resolution", 256)?;
            let samples_per_cell = d.usize_or("samples_per_cell", 400)?;
            let tol = d.f64_or("tol", 1e-6)?;
            let max_iter = d.usize_or("max_iter", 1_000_000)?;
            let n = d.usize_or("n", 1_000_000)?;
            let burn = d.usize_or("burn", 1000)?;
            if resolution < 2 {
                return err(&format!("{path}.resolution"), "resolution must be >= 2");
            }
            if samples_per_cell < 1 {
                return err(&format!("{path}.samples_per_cell"), "need at least 1 sample");
            }
            if tol <= 0.0 {
                return err(&format!("{path}.tol"), "tol must be positive");
            }
            if n < 1 {
                return err(&format!("{path}.n"), "need at least 1 kept sample");
            }
            ExperimentKind::Stationary {
                resolution,
                samples_per_cell,
                tol,
                max_iter,
                n,
                burn,
            }
        }
        "pullback" => {
            check_keys(
                m,
                &["kind", "depth", "cluster_radius", "ensemble", "n", "burn"],
                path,
            )?;
            let depth = d.usize_or("depth", 500)?;
            let default_radius = match manifold {
                Manifold::Circle => 1e-4,
                Manifold::Sphere => 1e-3,
            };
            let cluster_radius = d.f64_or("cluster_radius", default_radius)?;
            let ensemble = d.usize_or("ensemble", 200)?;
            let n = d.usize_or("n", 20_000)?;
            let burn = d.usize_or("burn", 1000)?;
            if cluster_radius <= 0.0 {
                return err(&format!("{path}.cluster_radius"), "must be positive");
            }
            if ensemble < 20 {
                return err(&format!("{path}.ensemble"), "need at least 20 points");
            }
            if n < ensemble {
                return err(&format!("{path}.n"), "kept samples must cover the ensemble");
            }
            if depth < 1 {
                return err(&format!("{path}.depth"), "depth must be >= 1");
            }
            ExperimentKind::Pullback {
                depth,
                cluster_radius,
                ensemble,
                n,
                burn,
            }
        }
        "sync" => {
            check_keys(m, &["kind", "pairs", "n", "tol"], path)?;
            let pairs = d.usize_or("pairs", 500)?;
            let n = d.usize_or("n", 2000)?;
            let tol = d.f64_or("tol", 1e-6)?;
            if pairs < 1 || n < 2 || tol <= 0.0 {
                return err(path, "need pairs >= 1, n >= 2, tol > 0");
            }
            ExperimentKind::Sync { pairs, n, tol }
        }
        "minimality" => {
            check_keys(m, &["kind", "resolution", "depth", "x0"], path)?;
            if manifold != Manifold::Circle || !finite {
                return err(path, "minimality needs a finite IFS on the circle");
            }
            let resolution = d.usize_or("resolution", 512)?;
            let depth = d.usize_or("depth", 5000)?;
            let x0 = d.f64_or("x0", 0.1)?;
            if resolution < 2 || depth < 1 {
                return err(path, "need resolution >= 2 and depth >= 1");
            }
            ExperimentKind::Minimality {
                resolution,
                depth,
                x0,
            }
        }
        "baker-verify" => {
            check_keys(m, &["kind", "words", "word_len"], path)?;
            if !finite {
                return err(path, "baker-verify needs a finite IFS (its probability vector)");
            }
            let words = d.usize_or("words", 1000)?;
            let word_len = d.usize_or("word_len", 40)?;
            if words < 1 || word_len < 2 {
                return err(path, "need words >= 1 and word_len >= 2");
            }
            ExperimentKind::BakerVerify { words, word_len }
        }
        "isolate" => {
            check_keys(m, &["kind", "arc", "n"], path)?;
            if manifold != Manifold::Circle || finite {
                return err(path, "isolate needs a random family on the circle");
            }
            let arc_v = as_array(required(m, "arc", path)?, &format!("{path}.arc"))?;
            if arc_v.len() != 2 {
                return err(&format!("{path}.arc"), "expected [lo, hi]");
            }
            let lo = as_f64(&arc_v[0], &format!("{path}.arc[0]"))?;
            let hi = as_f64(&arc_v[1], &format!("{path}.arc[1]"))?;
            if !(hi > lo && hi - lo < 1.0) {
                return err(&format!("{path}.arc"), "need lo < hi and hi - lo < 1");
            }
            let n = d.usize_or("n", 1000)?;
            if n < 1 {
                return err(&format!("{path}.n"), "need at least 1 sample");
            }
            ExperimentKind::Isolate { arc: (lo, hi), n }
        }
        "unique" => {
            check_keys(m, &["kind", "n", "burn", "inits"], path)?;
            let n = d.usize_or("n", 1_000_000)?;
            let burn = d.usize_or("burn", 1000)?;
            let inits = match m.get("inits") {
                Some(v) => {
                    let arr = as_array(v, &format!("{path}.inits"))?;
                    arr.iter()
                        .enumerate()
                        .map(|(i, iv)| parse_init(iv, manifold, &format!("{path}.inits[{i}]")))
                        .collect::<Result<Vec<_>, _>>()?
                }
                None => {
                    d.applied.push(format!("{path}.inits"));
                    default_inits(manifold)
                }
            };
            if inits.len() < 2 {
                return err(&format!("{path}.inits"), "need at least 2 initial distributions");
            }
            if n < 1 {
                return err(&format!("{path}.n"), "need at least 1 kept sample");
            }
            ExperimentKind::Unique { n, burn, inits }
        }
        other => {
            return err(
                &format!("{path}.kind"),
                format!("unknown experiment kind '{other}'"),
            )
        }
    };
    defaults_applied.extend(d.applied);
    Ok(out)
}

fn experiment_to_value(exp: &ExperimentKind) -> Value {
    match exp {
        ExperimentKind::Lyapunov { n, burn, blocks } | ExperimentKind::Spectrum { n, burn, blocks } => {
            json!({"kind": exp.name(), "n": n, "burn": burn, "blocks": blocks})
        }
        ExperimentKind::Stationary {
            resolution,
            samples_per_cell,
            tol,
            max_iter,
            n,
            burn,
        } => json!({
            "kind": "stationary", "resolution": resolution,
            "samples_per_cell": samples_per_cell, "tol": tol,
            "max_iter": max_iter, "n": n, "burn": burn,
        }),
        ExperimentKind::Pullback {
            depth,
            cluster_radius,
            ensemble,
            n,
            burn,
        } => json!({
            "kind": "pullback", "depth": depth, "cluster_radius": cluster_radius,
            "ensemble": ensemble, "n": n, "burn": burn,
        }),
        ExperimentKind::Sync { pairs, n, tol } =>

            json!({"kind": "sync", "pairs": pairs, "n": n, "tol": tol}),
        ExperimentKind::Minimality {
            resolution,
            depth,
            x0,
        } => json!({"kind": "minimality", "resolution": resolution, "depth": depth, "x0": x0}),
        ExperimentKind::BakerVerify { words, word_len } => {
            json!({"kind": "baker-verify", "words": words, "word_len": word_len})
        }
        ExperimentKind::Isolate { arc, n } => {
            json!({"kind": "isolate", "arc": [arc.0, arc.1], "n": n})
        }
        ExperimentKind::Unique { n, burn, inits } => json!({
            "kind": "unique", "n": n, "burn": burn,
            "inits": inits.iter().map(init_to_value).collect::<Vec<_>>(),
        }),
    }
}

// --- public API -------------------------------------------------------------------------------

/// Parse and validate a configuration document.
pub fn parse_config(text: &str) -> Result<ParsedConfig, ConfigError> {
    let v: Value = serde_json::from_str(text).map_err(|e| ConfigError {
        path: "$".into(),
        message: format!("invalid JSON: {e}"),
    })?;
    let m = as_object(&v, "$")?;
    check_keys(m, &["system", "experiment", "seed", "output"], "$")?;
    let system = parse_system(required(m, "system", "$")?, "system")?;
    let mut defaults_applied = Vec::new();
    let experiment = parse_experiment(
        required(m, "experiment", "$")?,
        &system,
        "experiment",
        &mut defaults_applied,
    )?;
    let seed = required(m, "seed", "$")?
        .as_u64()
        .ok_or(ConfigError {
            path: "$.seed".into(),
            message: "expected a 64-bit unsigned integer".into(),
        })?;
    let output = as_str(required(m, "output", "$")?, "$.output")?.to_string();
    if output.is_empty() {
        return err("$.output", "output prefix must be nonempty");
    }
    Ok(ParsedConfig {
        config: ExperimentConfig {
            system,
            experiment,
            seed,
            output,
        },
        defaults_applied,
    })
}

/// Canonical JSON rendering of a config (defaults materialized, keys sorted).
pub fn config_to_value(cfg: &ExperimentConfig) -> Value {
    json!({
        "system": system_to_value(&cfg.system),
        "experiment": experiment_to_value(&cfg.experiment),
        "seed": cfg.seed,
        "output": cfg.output,
    })
}

/// The JSON schema of the configuration document, as printed by
/// `ifs-sync schema`.
pub fn config_schema() -> Value {
    let num = json!({"type": "number"});
    let count = json!({"type": "integer", "minimum": 0});
    let vec3 = json!({"type": "array", "items": {"type": "number"}, "minItems": 3, "maxItems": 3});
    json!({
        "$schema": "http://json-schema.org/draft-07/schema#",
        "title": "ifs-sync experiment configuration",
        "type": "object",
        "required": ["system", "experiment", "seed", "output"],
        "additionalProperties": false,
        "properties": {
            "system": {
                "type": "object",
                "additionalProperties": false,
                "required": ["manifold"],
                "description": "Either maps+probs (finite IFS) or base+noise (random family).",
                "properties": {
                    "manifold": {"enum": ["circle", "sphere"]},
                    "maps": {"type": "array", "items": {"$ref": "#/definitions/map"}, "minItems": 1},
                    "probs": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}, "minItems": 1},
                    "base": {"$ref": "#/definitions/map"},
                    "noise": {
                        "type": "object",
                        "additionalProperties": false,
                        "required": ["dist", "delta"],
                        "properties": {
                            "dist": {"enum": ["uniform", "triangular"]},
                            "delta": {"type": "number", "minimum": 0},
                        },
                    },
                },
            },
            "experiment": {
                "type": "object",
                "required": ["kind"],
                "properties": {
                    "kind": {"enum": ["lyapunov", "spectrum", "stationary", "pullback", "sync",
                                       "minimality", "baker-verify", "isolate", "unique"]},
                    "n": count, "burn": count, "blocks": count,
                    "resolution": count, "samples_per_cell": count, "max_iter": count,
                    "depth": count, "ensemble": count, "pairs": count,
                    "words": count, "word_len": count,
                    "tol": num, "cluster_radius": num, "x0": num,
                    "arc": {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2},
                    "inits": {"type": "array", "items": {"$ref": "#/definitions/init"}, "minItems": 2},
                },
                "additionalProperties": false,
            },
            "seed": {"type": "integer", "minimum": 0},
            "output": {"type": "string", "minLength": 1},
        },
        "definitions": {
            "map": {
                "type": "object",
                "required": ["type"],
                "oneOf": [
                    {"properties": {"type": {"const": "rotation"}, "alpha": num},
                     "required": ["type", "alpha"], "additionalProperties": false},
                    {"properties": {"type": {"const": "north_south"}, "c": num},
                     "required": ["type", "c"], "additionalProperties": false},
                    {"properties": {"type": {"const": "flat_ns"}, "c": num, "r0": num, "kappa0": num},
                     "required": ["type", "c", "r0", "kappa0"], "additionalProperties": false},
                    {"properties": {"type": {"const": "equivariant_ns"}, "c": num},
                     "required": ["type", "c"], "additionalProperties": false},
                    {"properties": {"type": {"const": "sphere_rotation"}, "axis": vec3, "theta": num},
                     "required": ["type", "axis", "theta"], "additionalProperties": false},
                    {"properties": {"type": {"const": "sphere_scale"}, "lambda": num},
                     "required": ["type", "lambda"], "additionalProperties": false},
                    {"properties": {"type": {"const": "composition"},
                                     "maps": {"type": "array", "items": {"$ref": "#/definitions/map"}, "minItems": 1}},
                     "required": ["type", "maps"], "additionalProperties": false},
                    {"properties": {"type": {"const": "translated"}, "base": {"$ref": "#/definitions/map"},
                                     "a": {"oneOf": [num, vec3]}},
                     "required": ["type", "base", "a"], "additionalProperties": false},
                    {"properties": {"type": {"const": "inverse_of"}, "base": {"$ref": "#/definitions/map"}},
                     "required": ["type", "base"], "additionalProperties": false},
                ],
            },
            "init": {
                "type": "object",
                "required": ["init"],
                "oneOf": [
                    {"properties": {"init": {"const": "uniform"}},
                     "required": ["init"], "additionalProperties": false},
                    {"properties": {"init": {"const": "delta"}, "at": {"oneOf": [num, vec3]}},
                     "required": ["init", "at"], "additionalProperties": false},
                    {"properties": {"init": {"const": "arc"}, "center": {"oneOf": [num, vec3]},
                                     "halfwidth": {"type": "number", "exclusiveMinimum": 0}},
                     "required": ["init", "center", "halfwidth"], "additionalProperties": false},
                ],
            },
        },
    })
}
