//! Files: flat `key = value` flow configs, trace CSVs, snapshot directories
//! and run metadata.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::curve::{Backend, ClosedCurve};
use crate::error::{Error, Result};
use crate::flow::{FlowConfig, FlowOutcome, FlowTrace, InitialCurve, Snapshot, TraceSample};

pub const BACKEND_ENV: &str = "HYPERFLOW_BACKEND";

fn parse_value<T: std::str::FromStr>(key: &str, raw: &str) -> Result<T> {
    raw.parse()
        .map_err(|_| Error::Config(format!("cannot parse `{raw}` for key `{key}`")))
}

fn parse_initial(raw: &str) -> Result<InitialCurve> {
    let (kind, args) = raw.split_once(':').unwrap_or((raw, ""));
    let nums = || -> Result<Vec<f64>> {
        args.split(',')
            .filter(|s| !s.trim().is_empty())
            .map(|s| parse_value("initial", s.trim()))
            .collect()
    };
    let bad = || Error::Config(format!("bad initial curve `{raw}`"));
    Ok(match kind.trim() {
        "perturbed_circle" => match nums()?.as_slice() {
            [] => InitialCurve::PerturbedCircle { amplitude: 0.05 },
            [a] => InitialCurve::PerturbedCircle { amplitude: *a },
            _ => return Err(bad()),
        },
        "ellipse" => match nums()?.as_slice() {
            [a, b] => InitialCurve::Ellipse { a: *a, b: *b },
            _ => return Err(bad()),
        },
        "circle" => match nums()?.as_slice() {
            [r] => InitialCurve::Circle { radius: *r },
            _ => return Err(bad()),
        },
        "random" if args.is_empty() => InitialCurve::Random,
        "file" if !args.is_empty() => InitialCurve::File {
            path: args.trim().to_string(),
        },
        _ => return Err(bad()),
    })
}

fn format_initial(init: &InitialCurve) -> String {
    match init {
        InitialCurve::PerturbedCircle { amplitude } => format!("perturbed_circle:{amplitude}"),
        InitialCurve::Ellipse { a, b } => format!("ellipse:{a},{b}"),
        InitialCurve::Circle { radius } => format!("circle:{radius}"),
        InitialCurve::Random => "random".into(),
        InitialCurve::File { path } => format!("file:{path}"),
    }
}

/// Parses a flat config; `#` starts a comment. Unknown or repeated keys are
/// errors. Missing keys keep their defaults.
pub fn parse_config(text: &str) -> Result<FlowConfig> {
    let mut cfg = FlowConfig::default();
    let mut seen = BTreeMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::Config(format!("line {}: expected `key = value`", lineno + 1))
        })?;
        let (key, value) = (key.trim(), value.trim());
        if seen.insert(key.to_string(), lineno).is_some() {
            return Err(Error::Config(format!("key `{key}` given twice")));
        }
        match key {
            "m" => cfg.m = parse_value(key, value)?,
            "n_vertices" => cfg.n_vertices = parse_value(key, value)?,
            "dt_init" => {
                cfg.dt_init = match value {
                    "auto" => None,
                    v => Some(parse_value(key, v)?),
                }
            }
            "dt_min" => cfg.dt_min = parse_value(key, value)?,
            "dt_max" => cfg.dt_max = parse_value(key, value)?,
            "tol_grad" => cfg.tol_grad = parse_value(key, value)?,
            "t_max" => cfg.t_max = parse_value(key, value)?,
            "sample_every" => cfg.sample_every = parse_value(key, value)?,
            "snapshot_every" => {
                cfg.snapshot_every = match value {
                    "none" | "0" => None,
                    v => Some(parse_value(key, v)?),
                }
            }
            "backend" => cfg.backend = value.parse().map_err(Error::Config)?,
            "seed" => cfg.seed = parse_value(key, value)?,
            "initial" => cfg.initial = parse_initial(value)?,
            "max_retries" => cfg.max_retries = parse_value(key, value)?,
            "energy_slack" => cfg.energy_slack = parse_value(key, value)?,
            other => return Err(Error::Config(format!("unknown key `{other}`"))),
        }
    }
    Ok(cfg)
}

/// Inverse of [`parse_config`].
pub fn format_config(cfg: &FlowConfig) -> String {
    let mut s = String::new();
    let mut kv = |k: &str, v: String| writeln!(s, "{k} = {v}").unwrap();
    kv("m", cfg.m.to_string());
    kv("n_vertices", cfg.n_vertices.to_string());
    kv("dt_init", cfg.dt_init.map_or("auto".into(), |v| format!("{v:e}")));
    kv("dt_min", format!("{:e}", cfg.dt_min));
    kv("dt_max", format!("{:e}", cfg.dt_max));
    kv("tol_grad", format!("{:e}", cfg.tol_grad));
    kv("t_max", cfg.t_max.to_string());
    kv("sample_every", cfg.sample_every.to_string());
    kv("snapshot_every", cfg.snapshot_every.map_or("none".into(), |v| v.to_string()));
    kv("backend", cfg.backend.to_string());
    kv("seed", cfg.seed.to_string());
    kv("initial", format_initial(&cfg.initial));
    kv("max_retries", cfg.max_retries.to_string());
    kv("energy_slack", format!("{:e}", cfg.energy_slack));
    s
}

/// Reads a config file and applies the backend override from the
/// environment, then validates.
pub fn load_config(path: impl AsRef<Path>) -> Result<FlowConfig> {
    let text = fs::read_to_string(path.as_ref())
        .map_err(|e| Error::Config(format!("{}: {e}", path.as_ref().display())))?;
    let mut cfg = parse_config(&text)?;
    apply_backend_override(&mut cfg, std::env::var(BACKEND_ENV).ok().as_deref())?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn apply_backend_override(cfg: &mut FlowConfig, value: Option<&str>) -> Result<()> {
    if let Some(v) = value {
        cfg.backend = v
            .parse::<Backend>()
            .map_err(|e| Error::Config(format!("{BACKEND_ENV}: {e}")))?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TraceRow {
    t: f64,
    energy: f64,
    grad_norm: f64,
    dt: f64,
    length: f64,
    bbox_diam: f64,
    max_k0: f64,
    max_k1: f64,
    max_k2: f64,
    step: usize,
    dissipation: f64,
    bbox_xmin: f64,
    bbox_ymin: f64,
    bbox_xmax: f64,
    bbox_ymax: f64,
}

impl From<&TraceSample> for TraceRow {
    fn from(s: &TraceSample) -> Self {
        let k = |j: usize| s.max_k.get(j).copied().unwrap_or(f64::NAN);
        TraceRow {
            t: s.t,
            energy: s.energy,
            grad_norm: s.grad_norm,
            dt: s.dt,
            length: s.length,
            bbox_diam: s.bbox_diam,
            max_k0: k(0),
            max_k1: k(1),
            max_k2: k(2),
            step: s.step,
            dissipation: s.dissipation,
            bbox_xmin: s.bbox[0],
            bbox_ymin: s.bbox[1],
            bbox_xmax: s.bbox[2],
            bbox_ymax: s.bbox[3],
        }
    }
}

impl From<TraceRow> for TraceSample {
    fn from(r: TraceRow) -> Self {
        TraceSample {
            step: r.step,
            t: r.t,
            energy: r.energy,
            grad_norm: r.grad_norm,
            dt: r.dt,
            length: r.length,
            bbox: [r.bbox_xmin, r.bbox_ymin, r.bbox_xmax, r.bbox_ymax],
            bbox_diam: r.bbox_diam,
            max_k: vec![r.max_k0, r.max_k1, r.max_k2],
            dissipation: r.dissipation,
        }
    }
}

pub fn write_trace<W: std::io::Write>(trace: &FlowTrace, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for s in &trace.samples {
        w.serialize(TraceRow::from(s))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trace<R: std::io::Read>(input: R) -> Result<FlowTrace> {
    let mut r = csv::Reader::from_reader(input);
    let samples = r
        .deserialize::<TraceRow>()
        .map(|row| row.map(TraceSample::from).map_err(Error::from))
        .collect::<Result<Vec<_>>>()?;
    Ok(FlowTrace { samples })
}

pub fn write_trace_file(trace: &FlowTrace, path: impl AsRef<Path>) -> Result<()> {
    write_trace(trace, fs::File::create(path)?)
}

pub fn read_trace_file(path: impl AsRef<Path>) -> Result<FlowTrace> {
    read_trace(fs::File::open(path)?)
}

pub const TRACE_FILE: &str = "trace.csv";
pub const SNAPSHOT_INDEX: &str = "snapshots.csv";
pub const FINAL_CURVE: &str = "final_curve.json";
pub const RUN_META: &str = "run_meta.json";

pub fn snapshot_path(dir: impl AsRef<Path>, index: usize) -> PathBuf {
    dir.as_ref().join(format!("snap_{index}.json"))
}

#[derive(Debug, Serialize, Deserialize)]
struct SnapshotRow {
    index: usize,
    step: usize,
    t: f64,
}

/// Writes `snap_<index>.json` files and an index CSV with their times.
pub fn write_snapshots(dir: impl AsRef<Path>, snaps: &[Snapshot]) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let mut w = csv::Writer::from_path(dir.join(SNAPSHOT_INDEX))?;
    for s in snaps {
        s.curve.write(snapshot_path(dir, s.index))?;
        w.serialize(SnapshotRow {
            index: s.index,
            step: s.step,
            t: s.t,
        })?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_snapshots(dir: impl AsRef<Path>) -> Result<Vec<Snapshot>> {
    let dir = dir.as_ref();
    let mut r = csv::Reader::from_path(dir.join(SNAPSHOT_INDEX))?;
    r.deserialize::<SnapshotRow>()
        .map(|row| {
            let row = row?;
            Ok(Snapshot {
                index: row.index,
                step: row.step,
                t: row.t,
                curve: ClosedCurve::read(snapshot_path(dir, row.index))?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub config: FlowConfig,
    pub config_text: String,
    pub backend: Backend,
    pub version: String,
    pub wall_time_s: f64,
    pub converged: bool,
    pub accepted_steps: usize,
    pub total_retries: usize,
    pub t_final: f64,
    pub initial_energy: f64,
    pub final_energy: f64,
    pub final_grad_norm: f64,
    pub dissipation: f64,
    pub energy_identity_defect: f64,
}

impl RunMeta {
    pub fn new(cfg: &FlowConfig, out: &FlowOutcome, wall_time_s: f64) -> Self {
        let s = &out.final_state;
        RunMeta {
            config: cfg.clone(),
            config_text: format_config(cfg),
            backend: cfg.backend,
            version: env!("CARGO_PKG_VERSION").to_string(),
            wall_time_s,
            converged: out.converged,
            accepted_steps: out.accepted_steps(),
            total_retries: out.total_retries,
            t_final: s.t,
            initial_energy: out.initial_energy,
            final_energy: s.energy,
            final_grad_norm: s.grad_norm,
            dissipation: s.dissipation,
            energy_identity_defect: out.energy_identity_defect(),
        }
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }
}

/// Writes trace, snapshots, final curve and metadata of a run into `dir`.
pub fn write_run(dir: impl AsRef<Path>, cfg: &FlowConfig, out: &FlowOutcome, wall: f64) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    write_trace_file(&out.trace, dir.join(TRACE_FILE))?;
    if !out.snapshots.is_empty() {
        write_snapshots(dir, &out.snapshots)?;
    }
    out.final_state.curve.write(dir.join(FINAL_CURVE))?;
    RunMeta::new(cfg, out, wall).write(dir.join(RUN_META))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::run;
    use crate::suite;

    #[test]
    fn config_round_trip_and_errors() {
        let text = "# elastic\nm = 2\nn_vertices = 48\ndt_init = 1e-6\nbackend = fd4\ninitial = ellipse:2,1\nsnapshot_every = 25\nseed = 9\n";
        let cfg = parse_config(text).unwrap();
        assert_eq!(cfg.m, 2);
        assert_eq!(cfg.n_vertices, 48);
        assert_eq!(cfg.dt_init, Some(1e-6));
        assert_eq!(cfg.backend, Backend::Fd4);
        assert_eq!(cfg.initial, InitialCurve::Ellipse { a: 2.0, b: 1.0 });
        assert_eq!(parse_config(&format_config(&cfg)).unwrap(), cfg);
        assert_eq!(parse_config(&format_config(&FlowConfig::default())).unwrap(), FlowConfig::default());

        for bad in ["mm = 1", "m = x", "m = 1\nm = 2", "initial = blob", "backend = fft", "no_equals"] {
            assert!(matches!(parse_config(bad), Err(Error::Config(_))), "{bad}");
        }
        let mut cfg = FlowConfig::default();
        apply_backend_override(&mut cfg, Some("fd4")).unwrap();
        assert_eq!(cfg.backend, Backend::Fd4);
        assert!(apply_backend_override(&mut cfg, Some("gpu")).is_err());
    }

    #[test]
    fn run_files_round_trip() {
        let cfg = FlowConfig {
            n_vertices: 32,
            t_max: 0.05,
            snapshot_every: Some(20),
            ..Default::default()
        };
        let c = cfg.initial.build(32, 0, cfg.backend).unwrap();
        let out = run(&c, &cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_run(dir.path(), &cfg, &out, 0.5).unwrap();

        let trace = read_trace_file(dir.path().join(TRACE_FILE)).unwrap();
        assert_eq!(trace, out.trace);
        let snaps = read_snapshots(dir.path()).unwrap();
        assert_eq!(snaps.len(), out.snapshots.len());
        for (a, b) in snaps.iter().zip(&out.snapshots) {
            assert_eq!(a.curve.vertices(), b.curve.vertices());
            assert_eq!(a.t, b.t);
        }
        let meta = RunMeta::read(dir.path().join(RUN_META)).unwrap();
        assert_eq!(meta, RunMeta::new(&cfg, &out, 0.5));
        let fin = ClosedCurve::read(dir.path().join(FINAL_CURVE)).unwrap();
        assert_eq!(fin.vertices(), out.final_state.curve.vertices());
    }

    #[test]
    fn trace_header_lists_required_columns_first() {
        let trace = FlowTrace {
            samples: vec![crate::flow::TraceSample::of(
                &crate::flow::FlowState::new(suite::circle(32, 1.0), 1, 1e-3).unwrap(),
            )
            .unwrap()],
        };
        let mut buf = Vec::new();
        write_trace(&trace, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("t,energy,grad_norm,dt,length,bbox_diam,max_k0,max_k1,max_k2,"));
    }
}
