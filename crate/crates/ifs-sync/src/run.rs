//! Experiment orchestration: dispatch a validated config to the analysis
//! operations, then emit a byte-deterministic report and a run manifest.
//!
//! `report.json` depends only on `(config, seed)` (sorted keys, shortest
//! round-trip float formatting, newline-terminated); the manifest carries
//! the config echo, applied defaults, wall-clock duration, and the emitted
//! file list.

use crate::analysis::{
    isolating_check, lyapunov_spectrum, lyapunov_top, lyapunov_upper_bound, pullback_atoms,
    reachability_cover, sync_experiment, uniqueness_probe, AnalysisError, CircleArc,
};
use crate::cocycle::SystemSpec;
use crate::config::{config_to_value, ExperimentConfig, ExperimentKind, ParsedConfig};
use crate::driving::{baker_forward_y, encode_plus, sample_word};
use crate::geometry::{Manifold, Point};
use crate::measures::{
    bin_empirical, stationary_mc, stationary_power, support_coverage, tv_histogram, ulam_matrix,
    EmpiricalMeasure, PartitionSpec, UlamHistogram, UlamMatrix,
};
use crate::rng::SplitMix64;
use serde_json::{json, Value};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RunError {
    #[error("[{stage}] {source}")]
    Computation {
        stage: &'static str,
        #[source]
        source: AnalysisError,
    },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

fn stage(stage: &'static str) -> impl Fn(AnalysisError) -> RunError {
    move |source| RunError::Computation { stage, source }
}

/// What a finished (or failed) run wrote to disk.
#[derive(Debug, Clone)]
pub struct RunManifest {
    pub config: Value,
    pub defaults_applied: Vec<String>,
    pub toolkit_version: String,
    pub duration_seconds: f64,
    pub emitted_files: Vec<String>,
    pub status: Result<(), (String, String)>,
}

impl RunManifest {
    fn to_value(&self) -> Value {
        let mut v = json!({
            "config": self.config,
            "defaults_applied": self.defaults_applied,
            "toolkit_version": self.toolkit_version,
            "duration_seconds": self.duration_seconds,
            "emitted_files": self.emitted_files,
            "status": if self.status.is_ok() { "ok" } else { "error" },
        });
        if let Err((stage, message)) = &self.status {
            v["error"] = json!({"stage": stage, "message": message});
        }
        v
    }
}

/// Canonical JSON bytes: sorted keys (serde_json maps are ordered), shortest
/// round-trip floats, pretty-printed, newline-terminated.
pub fn canonical_json(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable value");
    s.push('\n');
    s
}

fn write_file(path: &Path, contents: &str) -> Result<(), RunError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| RunError::Io {
                path: parent.display().to_string(),
                source: e,
            })?;
        }
    }
    std::fs::write(path, contents).map_err(|e| RunError::Io {
        path: path.display().to_string(),
        source: e,
    })
}

struct Emitter {
    prefix: String,
    files: Vec<String>,
}

impl Emitter {
    fn path(&self, suffix: &str) -> PathBuf {
        PathBuf::from(format!("{}.{suffix}", self.prefix))
    }

    fn emit(&mut self, suffix: &str, contents: &str) -> Result<(), RunError> {
        let path = self.path(suffix);
        write_file(&path, contents)?;
        self.files.push(path.display().to_string());
        Ok(())
    }
}

fn point_value(p: &Point) -> Value {
    match p {
        Point::Circle(c) => json!(c.angle()),
        Point::Sphere(s) => json!(s.coords()),
    }
}

fn histogram_csv(h: &UlamHistogram) -> String {
    let mut out = String::from("cell_index,mass\n");
    for (i, m) in h.mass.iter().enumerate() {
        let _ = writeln!(out, "{i},{m}");
    }
    out
}

fn matrix_csv(m: &UlamMatrix) -> String {
    let mut out = String::new();
    for c in 0..m.cells() {
        let row: Vec<String> = m.row(c).iter().map(|x| x.to_string()).collect();
        let _ = writeln!(out, "{}", row.join(","));
    }
    out
}

fn partition_for(manifold: Manifold, resolution: usize) -> Result<PartitionSpec, AnalysisError> {
    Ok(match manifold {
        Manifold::Circle => PartitionSpec::circle(resolution)?,
        // sphere grids use `resolution` latitude bands and twice as many
        // longitude sectors
        Manifold::Sphere => PartitionSpec::sphere(resolution, 2 * resolution)?,
    })
}

/// Execute a validated experiment. Writes `<prefix>.report.json`, any
/// kind-specific CSVs, and `<prefix>.manifest.json`; deterministic given
/// `(config, seed)`.
pub fn run_experiment(parsed: &ParsedConfig) -> Result<RunManifest, RunError> {
    let start = Instant::now();
    let cfg = &parsed.config;
    let mut emitter = Emitter {
        prefix: cfg.output.clone(),
        files: Vec::new(),
    };
    let outcome = dispatch(cfg, &mut emitter);
    let status = match &outcome {
        Ok(report) => {
            emitter.emit("report.json", &canonical_json(report))?;
            Ok(())
        }
        Err(RunError::Computation { stage, source }) => {
            Err((stage.to_string(), source.to_string()))
        }
        Err(RunError::Io { path, source }) => Err(("io".to_string(), format!("{path}: {source}"))),
    };
    let manifest = RunManifest {
        config: config_to_value(cfg),
        defaults_applied: parsed.defaults_applied.clone(),
        toolkit_version: env!("CARGO_PKG_VERSION").to_string(),
        duration_seconds: start.elapsed().as_secs_f64(),
        emitted_files: emitter.files.clone(),
        status,
    };
    let manifest_path = emitter.path("manifest.json");
    write_file(&manifest_path, &canonical_json(&manifest.to_value()))?;
    match outcome {
        Ok(_) => Ok(manifest),
        Err(e) => Err(e),
    }
}

fn dispatch(cfg: &ExperimentConfig, emitter: &mut Emitter) -> Result<Value, RunError> {
    let sys = &cfg.system;
    let seed = cfg.seed;
    match &cfg.experiment {
        ExperimentKind::Lyapunov { n, burn, blocks } => {
            let mut rng = SplitMix64::substream(seed, 0);
            let est = lyapunov_top(sys, *n, *burn, *blocks, &mut rng).map_err(stage("lyapunov"))?;
            Ok(json!({
                "kind": "lyapunov",
                "exponents": est.exponents,
                "std_errors": est.std_errors,
                "steps": est.steps,
                "burn": est.burn_in,
                "blocks": blocks,
            }))
        }
        ExperimentKind::Spectrum { n, burn, blocks } => {
            let mut rng = SplitMix64::substream(seed, 0);
            let est =
                lyapunov_spectrum(sys, *n, *burn, *blocks, &mut rng).map_err(stage("spectrum"))?;
            Ok(json!({
                "kind": "spectrum",
                "exponents": est.exponents,
                "std_errors": est.std_errors,
                "steps": est.steps,
                "burn": est.burn_in,
                "blocks": blocks,
            }))
        }
        ExperimentKind::Stationary {
            resolution,
            samples_per_cell,
            tol,
            max_iter,
            n,
            burn,
        } => {
            let part = partition_for(cfg.manifold(), *resolution).map_err(stage("partition"))?;
            let mut rng = SplitMix64::substream(seed, 1);
            let mc = stationary_mc(sys, *burn, *n, &mut rng)
                .map_err(|e| stage("stationary_mc")(e.into()))?;
            let mc_hist =
                bin_empirical(&mc, part).map_err(|e| stage("stationary_mc")(e.into()))?;
            emitter.emit("mc_histogram.csv", &histogram_csv(&mc_hist))?;
            let coverage = support_coverage(&mc_hist, 0.01)
                .map_err(|e| stage("stationary_mc")(e.into()))?;

            let mut report = json!({
                "kind": "stationary",
                "resolution": resolution,
                "cells": part.cells(),
                "mc_kept": n,
                "mc_support_coverage": coverage,
            });
            if matches!(sys, SystemSpec::FiniteIfs { .. }) {
                let mut rng = SplitMix64::substream(seed, 2);
                let matrix = ulam_matrix(sys, part, *samples_per_cell, &mut rng)
                    .map_err(|e| stage("ulam_matrix")(e.into()))?;
                emitter.emit("ulam.csv", &matrix_csv(&matrix))?;
                let fixed = stationary_power(&matrix, *tol, *max_iter)
                    .map_err(|e| stage("stationary_power")(e.into()))?;
                emitter.emit("histogram.csv", &histogram_csv(&fixed))?;
                let tv = tv_histogram(&fixed, &mc_hist)
                    .map_err(|e| stage("stationary_power")(e.into()))?;
                report["samples_per_cell"] = json!(samples_per_cell);
                report["tol"] = json!(tol);
                report["tv_mc_vs_power"] = json!(tv);
                report["power_support_coverage"] = json!(
                    support_coverage(&fixed, 0.01)
                        .map_err(|e| stage("stationary_power")(e.into()))?
                );
            }
            Ok(report)
        }
        ExperimentKind::Pullback {
            depth,
            cluster_radius,
            ensemble,
            n,
            burn,
        } => {
            let mut rng = SplitMix64::substream(seed, 3);
            let long = stationary_mc(sys, *burn, *n, &mut rng)
                .map_err(|e| stage("pullback_ensemble")(e.into()))?;
            let cloud = long.thin(*ensemble);
            let report = pullback_atoms(sys, &cloud, *depth, *cluster_radius, &mut rng)
                .map_err(stage("pullback_atoms"))?;
            let mut csv = String::from("atom_index,weight,center\n");
            for (i, (c, w)) in report.centers.iter().zip(&report.weights).enumerate() {
                match c {
                    Point::Circle(p) => {
                        let _ = writeln!(csv, "{i},{w},{}", p.angle());
                    }
                    Point::Sphere(p) => {
                        let v = p.coords();
                        let _ = writeln!(csv, "{i},{w},{} {} {}", v[0], v[1], v[2]);
                    }
                }
            }
            emitter.emit("atoms.csv", &csv)?;
            Ok(json!({
                "kind": "pullback",
                "depth": report.depth,
                "cluster_radius": cluster_radius,
                "ensemble": cloud.len(),
                "atom_count": report.atom_count,
                "centers": report.centers.iter().map(point_value).collect::<Vec<_>>(),
                "weights": report.weights,
                "max_intra_diameter": report.max_intra_diameter,
                "min_inter_distance": report.min_inter_distance,
                "non_atomic": report.non_atomic,
                "word": report.word_digits,
            }))
        }
        ExperimentKind::Sync { pairs, n, tol } => {
            let mut rng = SplitMix64::substream(seed, 4);
            let (report, traces) =
                sync_experiment(sys, *pairs, *n, *tol, &mut rng).map_err(stage("sync"))?;
            let mut csv = String::from("pair_id,step,distance\n");
            for (pair, trace) in traces.iter().enumerate() {
                for (step, d) in trace.iter().enumerate() {
                    let _ = writeln!(csv, "{pair},{step},{d}");
                }
            }
            emitter.emit("traces.csv", &csv)?;
            Ok(json!({
                "kind": "sync",
                "pairs": report.pairs,
                "steps": n,
                "tol": tol,
                "synced_fraction": report.synced_fraction,
                "median_first_sync_step": report.median_first_sync,
                "decay_rate": report.decay_rate,
            }))
        }
        ExperimentKind::Minimality {
            resolution,
            depth,
            x0,
        } => {
            let report = reachability_cover(sys, Point::circle(*x0), *resolution, *depth)
                .map_err(stage("minimality"))?;
            Ok(json!({
                "kind": "minimality",
                "resolution": resolution,
                "cell_width": report.cell_width,
                "depth": report.budget,
                "x0": x0,
                "covered_fraction": report.covered_fraction,
                "steps_to_full_cover": report.steps_to_full_cover,
            }))
        }
        ExperimentKind::BakerVerify { words, word_len } => {
            let SystemSpec::FiniteIfs { probs, .. } = sys else {
                return Err(RunError::Computation {
                    stage: "baker-verify",
                    source: AnalysisError::NeedsCircleIfs,
                });
            };
            let mut rng = SplitMix64::substream(seed, 5);
            let mut max_residual: f64 = 0.0;
            let mut max_tail: f64 = 0.0;
            for _ in 0..*words {
                let w = sample_word(probs, *word_len, &mut rng);
                let (y, tail) = encode_plus(&w, probs).expect("nonempty word");
                let (y_shift, _) = encode_plus(&w.shifted(), probs).expect("nonempty word");
                max_residual = max_residual.max((baker_forward_y(y, probs) - y_shift).abs());
                max_tail = max_tail.max(tail);
            }
            Ok(json!({
                "kind": "baker-verify",
                "words": words,
                "word_len": word_len,
                "max_residual": max_residual,
                "max_tail_bound": max_tail,
                "pass": max_residual <= 1e-9,
            }))
        }
        ExperimentKind::Isolate { arc, n } => {
            let SystemSpec::RandomFamily { base, noise } = sys else {
                return Err(RunError::Computation {
                    stage: "isolate",
                    source: AnalysisError::NeedsCircleIfs,
                });
            };
            let u = CircleArc::new(arc.0, arc.1).map_err(stage("isolate"))?;
            let mut rng = SplitMix64::substream(seed, 6);
            let isolating =
                isolating_check(base, noise, &u, *n, &mut rng).map_err(stage("isolate"))?;
            Ok(json!({
                "kind": "isolate",
                "arc": [arc.0, arc.1],
                "n": n,
                "isolating": isolating,
            }))
        }
        ExperimentKind::Unique { n, burn, inits } => {
            let mut rng = SplitMix64::substream(seed, 7);
            let worst =
                uniqueness_probe(sys, inits, *burn, *n, &mut rng).map_err(stage("unique"))?;
            Ok(json!({
                "kind": "unique",
                "n": n,
                "burn": burn,
                "inits": inits.len(),
                "max_pairwise_distance": worst,
                "metric": match cfg.manifold() {
                    Manifold::Circle => "wasserstein1_circle",
                    Manifold::Sphere => "tv_histogram_16x32",
                },
            }))
        }
    }
}

/// Print a pass/fail style one-liner for a finished run.
pub fn summarize(report_path: &str) -> String {
    format!("report written to {report_path}")
}

/// Diagnostic convenience used by the examples: the annealed upper bound on
/// the top exponent for a finite IFS, sampled from its own MC stationary
/// measure.
pub fn annealed_bound(
    sys: &SystemSpec,
    samples: usize,
    seed: u64,
) -> Result<f64, AnalysisError> {
    let mut rng = SplitMix64::substream(seed, 8);
    let m: EmpiricalMeasure = stationary_mc(sys, 1000, samples, &mut rng)?;
    lyapunov_upper_bound(sys, &m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_config;

    fn run_to_temp(kind_fields: &str, seed: u64) -> (ParsedConfig, Value, String) {
        let dir = std::env::temp_dir().join(format!(
            "ifs_sync_run_test_{seed}_{}",
            std::process::id()
        ));
        let prefix = dir.join("run").display().to_string();
        let text = format!(
            r#"{{
              "system": {{"manifold": "circle",
                          "maps": [{{"type": "rotation", "alpha": 0.6180339887}},
                                   {{"type": "rotation", "alpha": 0.4142135624}}],
                          "probs": [0.5, 0.5]}},
              "experiment": {{{kind_fields}}},
              "seed": {seed},
              "output": "{prefix}"
            }}"#,
            prefix = prefix.replace('\\', "/")
        );
        let parsed = parse_config(&text).unwrap();
        run_experiment(&parsed).unwrap();
        let report_text = std::fs::read_to_string(format!("{prefix}.report.json")).unwrap();
        let report: Value = serde_json::from_str(&report_text).unwrap();
        (parsed, report, report_text)
    }

    #[test]
    fn lyapunov_run_produces_zero_exponent() {
        let (_, report, text) =
            run_to_temp(r#""kind": "lyapunov", "n": 20000, "burn": 100, "blocks": 5"#, 11);
        assert_eq!(report["kind"], "lyapunov");
        let exp = report["exponents"][0].as_f64().unwrap();
        assert!(exp.abs() <= 1e-10);
        assert!(text.ends_with('\n'));
    }

    #[test]
    fn identical_seeds_give_byte_identical_reports() {
        let (_, _, a) = run_to_temp(r#""kind": "sync", "pairs": 16, "n": 50, "tol": 1e-6"#, 5);
        let (_, _, b) = run_to_temp(r#""kind": "sync", "pairs": 16, "n": 50, "tol": 1e-6"#, 5);
        assert_eq!(a, b);
    }

    #[test]
    fn manifest_records_files_and_defaults() {
        let dir = std::env::temp_dir().join(format!("ifs_sync_manifest_{}", std::process::id()));
        let prefix = dir.join("m").display().to_string();
        let text = format!(
            r#"{{
              "system": {{"manifold": "circle",
                          "maps": [{{"type": "rotation", "alpha": 0.5}}],
                          "probs": [1.0]}},
              "experiment": {{"kind": "baker-verify"}},
              "seed": 9,
              "output": "{prefix}"
            }}"#,
            prefix = prefix.replace('\\', "/")
        );
        let parsed = parse_config(&text).unwrap();
        let manifest = run_experiment(&parsed).unwrap();
        assert!(manifest.status.is_ok());
        assert!(manifest
            .defaults_applied
            .contains(&"experiment.words".to_string()));
        for f in &manifest.emitted_files {
            assert!(std::path::Path::new(f).exists(), "missing {f}");
        }
        let m_text = std::fs::read_to_string(format!("{prefix}.manifest.json")).unwrap();
        let m: Value = serde_json::from_str(&m_text).unwrap();
        assert_eq!(m["status"], "ok");
        assert_eq!(m["config"]["seed"], 9);
    }

    #[test]
    fn reports_reparse_to_identical_floats() {
        let (_, report, text) =
            run_to_temp(r#""kind": "stationary", "resolution": 32, "samples_per_cell": 50,
                           "tol": 1e-4, "max_iter": 100000, "n": 10000, "burn": 100"#, 3);
        let reparsed: Value = serde_json::from_str(&text).unwrap();
        assert_eq!(report, reparsed);
    }

    #[test]
    fn baker_verify_passes_on_the_acceptance_vector() {
        let dir = std::env::temp_dir().join(format!("ifs_sync_baker_{}", std::process::id()));
        let prefix = dir.join("b").display().to_string();
        let text = format!(
            r#"{{
              "system": {{"manifold": "circle",
                          "maps": [{{"type": "rotation", "alpha": 0.1}},
                                   {{"type": "rotation", "alpha": 0.2}}],
                          "probs": [0.7, 0.3]}},
              "experiment": {{"kind": "baker-verify", "words": 1000, "word_len": 40}},
              "seed": 1,
              "output": "{prefix}"
            }}"#,
            prefix = prefix.replace('\\', "/")
        );
        let parsed = parse_config(&text).unwrap();
        run_experiment(&parsed).unwrap();
        let report: Value =
            serde_json::from_str(&std::fs::read_to_string(format!("{prefix}.report.json")).unwrap())
                .unwrap();
        assert_eq!(report["pass"], true);
        assert!(report["max_residual"].as_f64().unwrap() <= 1e-9);
    }
}
