use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use rayon::prelude::*;
use serde_json::{json, Value};

use hyperflow::energy::critical_radius;
use hyperflow::flow::{self, FlowConfig};
use hyperflow::gradient::{discrete_gradient, euler_lagrange, relative_l2_error, DEFAULT_RELATIVE_STEP};
use hyperflow::io::{self, BACKEND_ENV};
use hyperflow::{curve, jet, loja, spectral, suite, Backend, ClosedCurve, Error};

#[derive(Parser)]
#[command(name = "hyperflow", version, about = "Gradient flows of higher-order curve energies")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the flow from a config file and write a run directory.
    Simulate {
        /// Flat key = value config; defaults apply when omitted.
        config: Option<PathBuf>,
        #[arg(short, long, default_value = "out")]
        out: PathBuf,
        /// Exit with code 4 if the run stops before reaching tol_grad.
        #[arg(long)]
        strict: bool,
    },
    /// Print the integrand and Euler-Lagrange operator for order m.
    Derive {
        #[arg(short, default_value_t = 1)]
        m: usize,
        #[arg(long)]
        json: bool,
    },
    /// Compare the symbolic gradient with finite differences of the energy.
    Verify {
        #[arg(short, default_value_t = 1)]
        m: usize,
        /// Curve JSON; a seeded random curve is used otherwise.
        #[arg(long)]
        curve: Option<PathBuf>,
        #[arg(short, long, default_value_t = 256)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        backend: Option<Backend>,
    },
    /// Flow to a critical curve and polish it by Newton iteration.
    Critical {
        #[arg(short, default_value_t = 1)]
        m: usize,
        #[arg(short, long)]
        n: Option<usize>,
        /// Initial curve, e.g. `ellipse:2,1` or `perturbed_circle:0.05`.
        #[arg(long)]
        initial: Option<String>,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
        /// Base config; command-line options take precedence.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Write the polished curve here.
        #[arg(short, long)]
        out: Option<PathBuf>,
        /// Exit with code 4 if the polished gradient stays above tol.
        #[arg(long)]
        strict: bool,
    },
    /// Spectrum of the second variation at a critical curve.
    Spectrum {
        #[arg(short, default_value_t = 1)]
        m: usize,
        /// Curve JSON; the critical circle is used otherwise.
        #[arg(long)]
        curve: Option<PathBuf>,
        #[arg(short, long, default_value_t = 64)]
        n: usize,
        /// Mode for the leading-symbol ratio; defaults to N/4.
        #[arg(short, long)]
        q: Option<usize>,
        #[arg(long)]
        backend: Option<Backend>,
    },
    /// Łojasiewicz and convergence diagnostics for a finished run directory.
    Loja {
        dir: PathBuf,
        /// Limit energy; estimated from the trace when omitted.
        #[arg(long)]
        f_inf: Option<f64>,
        /// Report path; defaults to `<dir>/loja_report.json`.
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Run several configs in parallel, one output directory each.
    Sweep {
        #[arg(required = true)]
        configs: Vec<PathBuf>,
        #[arg(short, long, default_value = "out")]
        out: PathBuf,
        #[arg(long)]
        strict: bool,
    },
}

/// A failure with its exit code.
struct Failure {
    code: u8,
    kind: &'static str,
    message: String,
    detail: Value,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let (code, kind) = match &e {
            Error::Config(_) => (2, "config"),
            Error::StepFailure { .. } => (3, "step_failure"),
            Error::Io(_) => (1, "io"),
            Error::Json(_) | Error::Csv(_) => (1, "format"),
            Error::InvalidArgument(_) => (2, "invalid_argument"),
            _ => (1, "numerical"),
        };
        let detail = match &e {
            Error::StepFailure { retries, t, dt } => json!({"retries": retries, "t": t, "dt": dt}),
            _ => Value::Null,
        };
        Failure {
            code,
            kind,
            message: e.to_string(),
            detail,
        }
    }
}

impl Failure {
    fn not_converged(message: String, detail: Value) -> Self {
        Failure {
            code: 4,
            kind: "not_converged",
            message,
            detail,
        }
    }

    fn to_json(&self) -> Value {
        json!({"error": self.kind, "exit_code": self.code, "message": self.message, "detail": self.detail})
    }
}

type CmdResult = Result<Value, Failure>;

fn check_m(m: usize) -> Result<(), Failure> {
    if m == 0 {
        return Err(Error::Config("m must satisfy m >= 1".into()).into());
    }
    Ok(())
}

fn env_backend(flag: Option<Backend>) -> Result<Backend, Failure> {
    if let Some(b) = flag {
        return Ok(b);
    }
    let mut cfg = FlowConfig::default();
    io::apply_backend_override(&mut cfg, std::env::var(BACKEND_ENV).ok().as_deref())?;
    Ok(cfg.backend)
}

fn load_or_default(config: Option<&Path>) -> Result<FlowConfig, Error> {
    match config {
        Some(p) => io::load_config(p),
        None => {
            let mut cfg = FlowConfig::default();
            io::apply_backend_override(&mut cfg, std::env::var(BACKEND_ENV).ok().as_deref())?;
            cfg.validate()?;
            Ok(cfg)
        }
    }
}

fn read_curve(path: &Path, backend: Backend) -> Result<ClosedCurve, Error> {
    let mut c = ClosedCurve::read(path)?;
    c.set_backend(backend);
    Ok(c)
}

fn simulate(cfg: &FlowConfig, out: &Path, strict: bool) -> CmdResult {
    let initial = cfg.initial.build(cfg.n_vertices, cfg.seed, cfg.backend)?;
    let clock = Instant::now();
    let outcome = flow::run(&initial, cfg)?;
    let wall = clock.elapsed().as_secs_f64();
    io::write_run(out, cfg, &outcome, wall)?;
    let meta = io::RunMeta::new(cfg, &outcome, wall);
    let summary = json!({
        "out": out,
        "converged": meta.converged,
        "accepted_steps": meta.accepted_steps,
        "total_retries": meta.total_retries,
        "t_final": meta.t_final,
        "final_energy": meta.final_energy,
        "final_grad_norm": meta.final_grad_norm,
        "energy_identity_defect": meta.energy_identity_defect,
        "wall_time_s": wall,
    });
    if strict && !outcome.converged {
        return Err(Failure::not_converged(
            format!(
                "grad_norm {:e} above tol_grad {:e} at t = {}",
                meta.final_grad_norm, cfg.tol_grad, meta.t_final
            ),
            summary,
        ));
    }
    Ok(summary)
}

fn derive(m: usize, as_json: bool) -> CmdResult {
    check_m(m)?;
    let ops = jet::Derivation::new(m).map_err(Error::from)?;
    let p = ops.integrand().map_err(Error::from)?;
    let e = ops.euler_lagrange().map_err(Error::from)?;
    if as_json {
        Ok(json!({"m": m, "P": p.to_json(), "E": e.to_json()}))
    } else {
        println!("P_{m} = {p}");
        println!("E_{m} = {e}");
        Ok(Value::Null)
    }
}

fn verify(m: usize, curve: Option<&Path>, n: usize, seed: u64, backend: Option<Backend>) -> CmdResult {
    check_m(m)?;
    let backend = env_backend(backend)?;
    let c = match curve {
        Some(p) => read_curve(p, backend)?,
        None => {
            let mut c = suite::random_curve(n, seed);
            c.set_backend(backend);
            c
        }
    };
    let symbolic = euler_lagrange(&c, m)?;
    let length = curve::measure(&c)?.length;
    let fd = discrete_gradient(&c, m, DEFAULT_RELATIVE_STEP * length)?;
    let err = relative_l2_error(&c, &symbolic, &fd)?;
    Ok(json!({"m": m, "n": c.n(), "backend": backend, "relative_l2_error": err}))
}

#[allow(clippy::too_many_arguments)]
fn critical(
    m: usize,
    n: Option<usize>,
    initial: Option<&str>,
    tol: f64,
    config: Option<&Path>,
    out: Option<&Path>,
    strict: bool,
) -> CmdResult {
    check_m(m)?;
    let mut cfg = load_or_default(config)?;
    cfg.m = m;
    if config.is_none() {
        cfg.n_vertices = if m == 1 { 64 } else { 32 };
        cfg.dt_init = None;
    }
    if let Some(n) = n {
        cfg.n_vertices = n;
        cfg.dt_init = None;
    }
    if let Some(s) = initial {
        let text = format!("initial = {s}");
        cfg.initial = io::parse_config(&text)?.initial;
    }
    cfg.validate()?;
    let start = cfg.initial.build(cfg.n_vertices, cfg.seed, cfg.backend)?;
    let cp = spectral::find_critical(&start, &cfg, tol)?;
    if let Some(p) = out {
        cp.curve.write(p)?;
    }
    let want = critical_radius(m);
    let report = json!({
        "m": m,
        "n": cfg.n_vertices,
        "radius": cp.radius,
        "expected_radius": want,
        "radius_error": (cp.radius - want).abs(),
        "flow_steps": cp.flow_steps,
        "flow_grad_norm": cp.flow_grad_norm,
        "polish": cp.polish,
        "reached_tol": cp.polish.grad_norm <= tol,
    });
    if strict && cp.polish.grad_norm > tol {
        return Err(Failure::not_converged(
            format!("polished grad_norm {:e} above {tol:e}", cp.polish.grad_norm),
            report,
        ));
    }
    Ok(report)
}

fn spectrum_cmd(m: usize, curve: Option<&Path>, n: usize, q: Option<usize>, backend: Option<Backend>) -> CmdResult {
    check_m(m)?;
    let backend = env_backend(backend)?;
    let c = match curve {
        Some(p) => read_curve(p, backend)?,
        None => {
            let mut c = suite::circle(n, critical_radius(m));
            c.set_backend(backend);
            c
        }
    };
    let a = spectral::assemble(&c, m)?;
    let q = q.unwrap_or(c.n() / 4);
    let s = spectral::spectrum(&a);
    Ok(json!({
        "eigenvalues": s.eigenvalues,
        "kernel_dim": s.kernel_dim,
        "leading_symbol_ratio": a.leading_symbol_ratio(q),
        "q": q,
        "m": m,
        "n": c.n(),
        "asymmetry": a.asymmetry(),
        "constant_mode_rayleigh_quotient": a.rayleigh_quotient(&a.cosine_mode(0)),
    }))
}

fn loja_cmd(dir: &Path, f_inf: Option<f64>, out: Option<&Path>) -> CmdResult {
    let trace = io::read_trace_file(dir.join(io::TRACE_FILE))?;
    let f_inf = f_inf.unwrap_or_else(|| loja::estimate_f_inf(&trace));
    let fit = loja::fit_exponent(&trace, f_inf)?;
    let h = loja::check_h_decay(&trace, f_inf, fit.alpha)?;
    let path = loja::path_length_check(&trace, f_inf, fit.alpha, h.worst_ratio)?;
    let boxed = loja::compact_set_tracker(&trace.samples);

    let snaps = if dir.join(io::SNAPSHOT_INDEX).exists() {
        io::read_snapshots(dir)?
    } else {
        Vec::new()
    };
    let cauchy = if snaps.len() >= 2 {
        let base = ClosedCurve::read(dir.join(io::FINAL_CURVE))
            .unwrap_or_else(|_| snaps.last().unwrap().curve.clone());
        let curves: Vec<ClosedCurve> = snaps.iter().map(|s| s.curve.clone()).collect();
        let times: Vec<f64> = snaps.iter().map(|s| s.t).collect();
        Some(loja::cauchy_tracker(&curves, &times, &base)?)
    } else {
        None
    };
    let report = json!({
        "alpha": fit.alpha,
        "c": fit.c,
        "window": fit.window,
        "r2": fit.r2,
        "violations": fit.violations,
        "slope": fit.slope,
        "n_samples": fit.n_samples,
        "decades": fit.decades,
        "f_inf": fit.f_inf,
        "h_decay_worst_ratio": h.worst_ratio,
        "h_decay_all_negative": h.all_negative,
        "path_length": path,
        "compact_set": boxed,
        "cauchy": cauchy,
    });
    let target = out.map_or_else(|| dir.join("loja_report.json"), Path::to_path_buf);
    std::fs::write(&target, serde_json::to_string_pretty(&report).map_err(Error::from)?)
        .map_err(Error::from)?;
    Ok(report)
}

fn sweep(configs: &[PathBuf], out: &Path, strict: bool) -> CmdResult {
    let results: Vec<(Value, u8)> = configs
        .par_iter()
        .map(|path| {
            let stem = path.file_stem().map_or("run".into(), |s| s.to_string_lossy().into_owned());
            let dir = out.join(&stem);
            let res = io::load_config(path)
                .map_err(Failure::from)
                .and_then(|cfg| simulate(&cfg, &dir, strict));
            match res {
                Ok(v) => (json!({"config": path, "ok": true, "summary": v}), 0),
                Err(f) => (json!({"config": path, "ok": false, "failure": f.to_json()}), f.code),
            }
        })
        .collect();
    let worst = results.iter().map(|r| r.1).max().unwrap_or(0);
    let runs: Vec<Value> = results.into_iter().map(|r| r.0).collect();
    if worst != 0 {
        return Err(Failure {
            code: worst,
            kind: "sweep",
            message: "one or more runs failed".into(),
            detail: Value::Array(runs),
        });
    }
    Ok(Value::Array(runs))
}

fn dispatch(cmd: Cmd) -> CmdResult {
    match cmd {
        Cmd::Simulate { config, out, strict } => {
            let cfg = load_or_default(config.as_deref())?;
            simulate(&cfg, &out, strict)
        }
        Cmd::Derive { m, json } => derive(m, json),
        Cmd::Verify { m, curve, n, seed, backend } => verify(m, curve.as_deref(), n, seed, backend),
        Cmd::Critical { m, n, initial, tol, config, out, strict } => critical(
            m,
            n,
            initial.as_deref(),
            tol,
            config.as_deref(),
            out.as_deref(),
            strict,
        ),
        Cmd::Spectrum { m, curve, n, q, backend } => spectrum_cmd(m, curve.as_deref(), n, q, backend),
        Cmd::Loja { dir, f_inf, out } => loja_cmd(&dir, f_inf, out.as_deref()),
        Cmd::Sweep { configs, out, strict } => sweep(&configs, &out, strict),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let f = Failure {
                code: 2,
                kind: "usage",
                message: e.to_string(),
                detail: Value::Null,
            };
            eprintln!("{}", f.to_json());
            return ExitCode::from(2);
        }
    };
    match dispatch(cli.cmd) {
        Ok(Value::Null) => ExitCode::SUCCESS,
        Ok(v) => {
            // a closed pipe downstream is not our failure
            let _ = writeln!(std::io::stdout(), "{}", serde_json::to_string_pretty(&v).expect("json"));
            ExitCode::SUCCESS
        }
        Err(f) => {
            eprintln!("{}", f.to_json());
            ExitCode::from(f.code)
        }
    }
}
