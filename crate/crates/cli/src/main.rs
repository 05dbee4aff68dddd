use clap::{Args, Parser, Subcommand};
use elastosurf::config::{load_config, parse_config, RunConfig};
use elastosurf::diagnostics::{hodge_decomposition_report, kappa_convergence_study, HodgeTerms};
use elastosurf::evolution::{run, DiagRow};
use elastosurf::galerkin::{fit_growth, galerkin_evolve, picard_iterate, BasicState, PicardOptions, PicardRow};
use elastosurf::{Error, Model64, State64};
use serde_json::{json, Value};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

/// Simulator and verification lab for free-boundary incompressible
/// neo-Hookean elastodynamics with surface tension.
#[derive(Parser, Debug)]
#[command(name = "elastosurf", version)]
struct Cli {
    /// Output directory for CSV files and snapshots.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Seed for randomised checks.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct ConfigArg {
    /// JSON configuration; without it a 16×16×17 default is used.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Integrate the κ-system and write diag.csv plus snapshots.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run a verification suite.
    Verify {
        #[command(subcommand)]
        suite: Suite,
    },
    /// Galerkin evolution of the system linearised around the initial state.
    Galerkin {
        #[command(flatten)]
        cfg: ConfigArg,
        #[arg(long)]
        m: Option<usize>,
        #[arg(long = "T")]
        t_final: Option<f64>,
    },
    /// Picard iteration with difference energies and contraction ratios.
    Picard {
        #[command(flatten)]
        cfg: ConfigArg,
        #[arg(long = "n-max")]
        n_max: Option<usize>,
        #[arg(long = "T")]
        t_final: Option<f64>,
    },
    /// Compare trajectories for decreasing κ.
    KappaStudy {
        #[command(flatten)]
        cfg: ConfigArg,
    },
    /// Norms, constraints and div–curl quantities of a state.
    Norms {
        #[command(flatten)]
        cfg: ConfigArg,
        /// Snapshot directory written by `run`; defaults to the configured initial state.
        #[arg(long)]
        snapshot: Option<PathBuf>,
    },
}

#[derive(Subcommand, Debug)]
enum Suite {
    /// Alinhac good-unknown identities on manufactured fields.
    Agu {
        #[arg(long, default_value_t = 24)]
        cases: usize,
        #[arg(long, default_value_t = 2)]
        points: usize,
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
    },
}

/// Failure categories with their exit codes.
enum Failure {
    Breakdown(String),
    Verification(String),
    Config(Error),
    Other(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config { .. } | Error::Json(_) => Failure::Config(e),
            e if e.is_breakdown() => Failure::Breakdown(e.to_string()),
            e => Failure::Other(e),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Other(e.into())
    }
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Breakdown(_) => 2,
            Failure::Verification(_) => 3,
            Failure::Config(_) => 4,
            Failure::Other(_) => 1,
        }
    }

    fn record(&self) -> Value {
        let (kind, message, path) = match self {
            Failure::Breakdown(m) => ("breakdown", m.clone(), None),
            Failure::Verification(m) => ("verification", m.clone(), None),
            Failure::Config(Error::Config { path, message }) => ("config", message.clone(), Some(path.clone())),
            Failure::Config(e) => ("config", e.to_string(), None),
            Failure::Other(e) => ("error", e.to_string(), None),
        };
        json!({"error": kind, "message": message, "path": path, "exit_code": self.code()})
    }
}

type Outcome = Result<Value, Failure>;

const DEFAULT_CONFIG: &str = r#"{"grid":{"nx":16,"ny":16,"nz":17}}"#;

fn config_or_default(cfg: &ConfigArg) -> Result<RunConfig, Failure> {
    Ok(match &cfg.config {
        Some(p) => load_config(p)?,
        None => parse_config(DEFAULT_CONFIG)?,
    })
}

fn setup(cfg: &RunConfig) -> Result<(Model64, State64), Failure> {
    let model: Model64 = cfg.model()?;
    // initial data that cannot be built is a configuration problem
    let state = cfg.initial_state(&model).map_err(|e| match e {
        Error::Io(_) => Failure::Other(e),
        e => Failure::Config(Error::Config { path: "initial".into(), message: e.to_string() }),
    })?;
    Ok((model, state))
}

fn write_lines(path: &Path, header: &str, lines: impl IntoIterator<Item = String>) -> std::io::Result<()> {
    let mut f = std::io::BufWriter::new(fs::File::create(path)?);
    writeln!(f, "{header}")?;
    for l in lines {
        writeln!(f, "{l}")?;
    }
    f.flush()
}

fn cmd_run(out: &Path, config: &Path) -> Outcome {
    let cfg = load_config(config)?;
    let (model, initial) = setup(&cfg)?;
    fs::create_dir_all(out)?;
    fs::write(out.join("config.json"), serde_json::to_string_pretty(&cfg).map_err(Error::from)?)?;
    let every = cfg.time.snapshot_every;
    let snaps = out.join("snapshots");
    let traj = run(&model, &initial, &cfg.run_options(), |step, s| {
        if every > 0 && step % every == 0 {
            elastosurf::io::write_state(&snaps.join(format!("step_{step:06}")), &model, s)?;
        }
        Ok(())
    })?;
    write_lines(&out.join("diag.csv"), DiagRow::HEADER, traj.rows.iter().map(DiagRow::csv))?;
    elastosurf::io::write_state(&out.join("final"), &model, &traj.final_state)?;
    let summary = json!({
        "command": "run",
        "steps": traj.steps,
        "t": traj.final_state.t,
        "max_relative_drift": traj.max_relative_drift(),
        "dissipated": traj.dissipated,
        "seed": cfg.seed,
    });
    if let Some(b) = traj.breakdown {
        return Err(Failure::Breakdown(format!("t = {:.6e}, step {}: {}", b.t, b.step, b.cause)));
    }
    Ok(summary)
}

fn cmd_verify_agu(out: &Path, seed: u64, cases: usize, points: usize, tol: f64) -> Outcome {
    let report = elastosurf::agu::verify_suite(seed, cases, points, 4, 2, tol);
    fs::create_dir_all(out)?;
    write_lines(
        &out.join("agu.csv"),
        "case,worst_alpha,c_single,d_single,c_sum,d_sum,scale",
        report.rows.iter().map(|r| {
            format!(
                "{},{}-{}-{},{:.3e},{:.3e},{:.3e},{:.3e},{:.3e}",
                r.case, r.worst_alpha[0], r.worst_alpha[1], r.worst_alpha[2], r.c_single, r.d_single, r.c_sum, r.d_sum, r.scale
            )
        }),
    )?;
    let summary = json!({
        "command": "verify agu",
        "seed": seed,
        "cases": cases,
        "multi_indices": report.alphas,
        "max_single": report.max_single,
        "max_sum": report.max_sum,
        "selected": report.selected.map(|r| format!("{r:?}")),
    });
    if report.max_single > tol {
        return Err(Failure::Verification(format!(
            "identity residual {:.3e} exceeds {tol:.1e}: {summary}",
            report.max_single
        )));
    }
    Ok(summary)
}

fn cmd_galerkin(out: &Path, cfg: &RunConfig, m: usize, t_final: f64) -> Outcome {
    let (model, initial) = setup(cfg)?;
    let basic = BasicState::snapshot(&model.grid, &initial)?;
    let dt = match cfg.galerkin.dt {
        Some(dt) => dt,
        None => elastosurf::evolution::cfl_dt(&model, &initial, cfg.time.safety)?,
    };
    let r = galerkin_evolve(&model, &basic, &initial, m, dt, t_final)?;
    fs::create_dir_all(out)?;
    write_lines(
        &out.join("galerkin.csv"),
        "t,E_m",
        r.times.iter().zip(&r.energy).map(|(t, e)| format!("{t:.17e},{e:.17e}")),
    )?;
    let fit = fit_growth(&r.times, &r.energy);
    Ok(json!({
        "command": "galerkin",
        "m": m,
        "dt": r.dt,
        "steps": r.times.len() - 1,
        "energy_start": r.energy.first(),
        "energy_end": r.energy.last(),
        "growth_prefactor": fit.map(|f| f.0),
        "growth_rate": fit.map(|f| f.1),
    }))
}

fn cmd_picard(out: &Path, cfg: &RunConfig, n_max: usize, t_final: f64) -> Outcome {
    let (model, initial) = setup(cfg)?;
    let opts = PicardOptions { steps: cfg.picard.steps, safety: cfg.time.safety, ..PicardOptions::new(n_max, t_final) };
    let rep = picard_iterate(&model, &initial, &opts)?;
    fs::create_dir_all(out)?;
    let mut lines: Vec<String> = rep.rows.iter().map(PicardRow::csv).collect();
    if let Some(cause) = &rep.breakdown {
        let n = rep.rows.last().map_or(1, |r| r.n + 1);
        lines.push(format!("{n},,,no contraction ({})", cause.replace(',', ";")));
    }
    write_lines(&out.join("picard.csv"), PicardRow::HEADER, lines)?;
    Ok(json!({
        "command": "picard",
        "n_max": n_max,
        "T": t_final,
        "steps": rep.steps,
        "contracting": rep.contracting,
        "max_rho_from_3": rep.max_rho(3),
        "boundary_defect": rep.boundary_defect,
        "breakdown": rep.breakdown,
    }))
}

fn cmd_kappa_study(out: &Path, cfg: &RunConfig) -> Outcome {
    let (model, initial) = setup(cfg)?;
    let study = kappa_convergence_study(&model, &initial, &cfg.kappa_study.kappas, cfg.time.t_final, cfg.time.safety)?;
    fs::create_dir_all(out)?;
    write_lines(
        &out.join("kappa_study.csv"),
        "kappa_a,kappa_b,distance",
        study.pairs.iter().map(|p| format!("{:.17e},{:.17e},{:.17e}", p.kappa_a, p.kappa_b, p.distance)),
    )?;
    let members: Vec<Value> = study
        .members
        .iter()
        .map(|m| {
            json!({"kappa": m.kappa, "steps": m.steps, "max_drift": m.max_drift, "max_r_FN": m.max_r_fn,
                   "max_r_divF": m.max_r_divf, "min_d3phi": m.min_d3phi, "failure": m.failure})
        })
        .collect();
    Ok(json!({"command": "kappa-study", "dt": study.dt, "steps": study.steps, "monotone": study.monotone, "members": members}))
}

fn hodge_json(h: &HodgeTerms) -> Value {
    json!({"div": h.div, "curl": h.curl, "tangential": h.tangential, "l2": h.l2, "full": h.full})
}

fn cmd_norms(cfg: &RunConfig, snapshot: Option<&Path>) -> Outcome {
    use elastosurf::calculus::{sobolev_norm_interior, sobolev_norm_surface};
    let model: Model64 = cfg.model()?;
    let state = match snapshot {
        Some(dir) => elastosurf::io::read_state(dir, &model.grid)?,
        None => cfg.initial_state(&model)?,
    };
    let grid = &model.grid;
    let (n, _) = elastosurf::geometry::surface_normals(grid, &state.psi)?;
    let psi_t = elastosurf::state::kinematic_velocity(grid, &state.v, &n);
    let geom = model.geometry(&state.psi, &psi_t)?;
    let vec_norms = |x: &[elastosurf::Field64]| -> Result<Vec<f64>, Error> {
        (0..=4)
            .map(|s| {
                let mut acc = 0.0;
                for f in x {
                    let v = sobolev_norm_interior(grid, f, s)?;
                    acc += v * v;
                }
                Ok(acc.sqrt())
            })
            .collect()
    };
    let psi_norms: Vec<f64> =
        (0..=6).map(|s| sobolev_norm_surface(grid, &state.psi, s as f64)).collect::<Result<_, _>>()?;
    let c = elastosurf::state::constraint_report(grid, &state, &geom);
    let h = hodge_decomposition_report(grid, &state, &geom)?;
    let e = elastosurf::diagnostics::energy_e0(&model, &state, &geom, 0.0);
    Ok(json!({
        "command": "norms",
        "t": state.t,
        "v_H": vec_norms(&state.v)?,
        "F_H": [vec_norms(&state.f[0])?, vec_norms(&state.f[1])?, vec_norms(&state.f[2])?],
        "psi_H": psi_norms,
        "constraints": {"r_divv": c.r_divv, "r_divF": c.r_divf, "r_FN": c.r_fn, "r_bottom": c.r_bottom},
        "min_d3phi": geom.min_d3phi(),
        "E0": e.e0,
        "hodge": {"v": hodge_json(&h.v), "F": [hodge_json(&h.f[0]), hodge_json(&h.f[1]), hodge_json(&h.f[2])]},
    }))
}

fn dispatch(cli: Cli) -> Outcome {
    let out = cli.out.as_path();
    match cli.command {
        Command::Run { config } => cmd_run(out, &config),
        Command::Verify { suite: Suite::Agu { cases, points, tol } } => {
            cmd_verify_agu(out, cli.seed.unwrap_or(0), cases, points, tol)
        }
        Command::Galerkin { cfg, m, t_final } => {
            let c = config_or_default(&cfg)?;
            let m = m.unwrap_or(c.galerkin.m);
            if !(1..=64).contains(&m) {
                return Err(Failure::Config(Error::Config { path: "--m".into(), message: "must lie in 1..=64".into() }));
            }
            cmd_galerkin(out, &c, m, t_final.unwrap_or(c.galerkin.t_final))
        }
        Command::Picard { cfg, n_max, t_final } => {
            let c = config_or_default(&cfg)?;
            cmd_picard(out, &c, n_max.unwrap_or(c.picard.n_max), t_final.unwrap_or(c.picard.t_final))
        }
        Command::KappaStudy { cfg } => cmd_kappa_study(out, &config_or_default(&cfg)?),
        Command::Norms { cfg, snapshot } => cmd_norms(&config_or_default(&cfg)?, snapshot.as_deref()),
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
            eprintln!("{}", json!({"error": "usage", "message": e.to_string(), "path": null, "exit_code": 4}));
            return ExitCode::from(4);
        }
    };
    match dispatch(cli) {
        Ok(summary) => {
            let _ = writeln!(std::io::stdout(), "{summary}");
            ExitCode::SUCCESS
        }
        Err(f) => {
            eprintln!("{}", f.record());
            ExitCode::from(f.code())
        }
    }
}
