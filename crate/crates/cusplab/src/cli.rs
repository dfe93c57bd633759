//! Command-line entry point: configuration, persistence and report emission.
//!
//! Every subcommand is a pure function of (config, input files); repeated
//! runs produce byte-identical outputs. Numeric CSV output uses 17
//! significant digits so values round-trip exactly.

use crate::asymptotics::{threshold, Prediction};
use crate::cusp_fit::{scattering_phase, FitMeshParams, ScatteringPhase};
use crate::geometry::{BodyKind, BodySpec, CuspGeometry, EndCondition};
use crate::reduced_model::{reduced_eigenvalues_closed_form, reduced_eigenvalues_fd, ReducedBc};
use crate::sweep::{
    branches_csv, classify_branches, detect_crossings, gliding_report, render_svg, solve_at_epsilon,
    sweep_epsilon, track_branches, Branch, CrossingSet, SolveParams, SweepParams, SweepResult,
};
use crate::{Error, Result};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::{Path, PathBuf};

/// Complete run configuration. Round-trips losslessly through JSON; unknown
/// keys are rejected.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub a: f64,
    pub d: f64,
    pub n: u32,
    pub body_kind: BodyKind,
    /// Body cap radius; `None` means the canonical `a d²`.
    pub body_radius: Option<f64>,
    pub join_smoothness: u32,
    pub mirror_symmetric: bool,
    pub h: f64,
    pub grading: f64,
    pub eps: Option<f64>,
    pub eps_min: f64,
    pub eps_max: f64,
    pub per_decade: usize,
    pub count: usize,
    pub end: EndCondition,
    pub odd_sector: bool,
    pub lambda_flat: Option<f64>,
    pub theta: Option<f64>,
    pub delta: Option<f64>,
    pub window_lo: Option<f64>,
    pub window_hi: Option<f64>,
    pub grid_points: usize,
    pub modes: usize,
    pub t_len: f64,
    pub out: Option<PathBuf>,
    pub jobs: Option<usize>,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            a: 1.0,
            d: 1.0,
            n: 2,
            body_kind: BodyKind::HalfDisk,
            body_radius: None,
            join_smoothness: 3,
            mirror_symmetric: true,
            h: 0.05,
            grading: 1.0,
            eps: None,
            eps_min: 1e-3,
            eps_max: 1e-1,
            per_decade: 30,
            count: 12,
            end: EndCondition::Dirichlet,
            odd_sector: false,
            lambda_flat: None,
            theta: None,
            delta: None,
            window_lo: None,
            window_hi: None,
            grid_points: 10_000,
            modes: 16,
            t_len: 4.0,
            out: None,
            jobs: None,
            seed: 0,
        }
    }
}

impl RunConfig {
    pub fn geometry(&self) -> CuspGeometry {
        CuspGeometry {
            n: self.n,
            a: self.a,
            d: self.d,
            body: BodySpec {
                kind: self.body_kind,
                radius: self.body_radius.unwrap_or(self.a * self.d * self.d),
                join_smoothness: self.join_smoothness,
            },
            end_condition: self.end,
            mirror_symmetric: self.mirror_symmetric,
        }
    }

    pub fn solve_params(&self) -> SolveParams {
        SolveParams {
            h: self.h,
            grading: self.grading,
            count: self.count,
            end_condition: self.end,
            odd_sector: self.odd_sector,
            half_domain: false,
        }
    }

    pub fn sweep_params(&self) -> SweepParams {
        SweepParams {
            eps_min: self.eps_min,
            eps_max: self.eps_max,
            points_per_decade: self.per_decade,
            solve: self.solve_params(),
        }
    }
}

#[derive(Debug, Args, Default, Clone)]
struct CommonFlags {
    /// Cusp half-width coefficient.
    #[arg(long)]
    a: Option<f64>,
    /// Cusp length.
    #[arg(long)]
    d: Option<f64>,
    /// Spatial dimension for closed forms (mesh/FEM need 2).
    #[arg(long)]
    n: Option<u32>,
    /// Single blunting parameter.
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    eps_min: Option<f64>,
    #[arg(long)]
    eps_max: Option<f64>,
    /// Sweep density in points per decade.
    #[arg(long)]
    per_decade: Option<usize>,
    /// Target mesh edge length.
    #[arg(long)]
    h: Option<f64>,
    /// Cusp grading exponent.
    #[arg(long)]
    grading: Option<f64>,
    /// Number of eigenvalues.
    #[arg(long)]
    count: Option<usize>,
    /// End condition at the artificial end: dirichlet, neumann or steklov.
    #[arg(long)]
    end: Option<String>,
    /// Impose u = 0 on the symmetry plane (half-domain problem).
    #[arg(long)]
    odd_sector: bool,
    /// The fixed spectral point λ♭ for crossings/predictions.
    #[arg(long)]
    lambda_flat: Option<f64>,
    /// Scattering phase Θ (radians) for blinking predictions.
    #[arg(long)]
    theta: Option<f64>,
    /// Truncation parameter for scattering solves.
    #[arg(long)]
    delta: Option<f64>,
    /// Fit window lower edge.
    #[arg(long)]
    window_lo: Option<f64>,
    /// Fit window upper edge.
    #[arg(long)]
    window_hi: Option<f64>,
    /// Grid points of the reduced-model discretization.
    #[arg(long)]
    grid_points: Option<usize>,
    /// Number of boundary-layer modes.
    #[arg(long)]
    modes: Option<usize>,
    /// Truncated strip length.
    #[arg(long)]
    t_len: Option<f64>,
    /// Output directory (env CUSPLAB_OUT overrides).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker parallelism (default: logical CPU count).
    #[arg(long)]
    jobs: Option<usize>,
    /// Random seed for property-style checks.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Parser)]
#[command(
    name = "cusplab",
    about = "Steklov spectra in blunted-cusp domains: threshold, blinking, gliding and stable eigenvalue families",
    version
)]
struct Cli {
    /// JSON configuration file; flags take precedence over its entries.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Print the closed-form prediction document as JSON.
    Predict(CommonFlags),
    /// Solve the blunted problem at a single ε and print the spectrum.
    Solve(CommonFlags),
    /// Sweep ε over a log grid, persist spectra and emit reports.
    Sweep(CommonFlags),
    /// Tables of the 1D reduced model (closed form, optional FD check).
    Reduced(CommonFlags),
    /// Boundary-layer mode table and evaluation grid.
    Layer(CommonFlags),
    /// Estimate the scattering phase Θ(λ) by mode matching.
    Scatter(CommonFlags),
    /// Regenerate reports from a persisted sweep directory.
    Report(CommonFlags),
}

fn apply_flags(cfg: &mut RunConfig, f: &CommonFlags) -> Result<()> {
    macro_rules! over {
        ($($field:ident),*) => { $( if let Some(v) = &f.$field { cfg.$field = Some(v.clone()); } )* };
    }
    if let Some(v) = f.a {
        cfg.a = v;
    }
    if let Some(v) = f.d {
        cfg.d = v;
    }
    if let Some(v) = f.n {
        cfg.n = v;
    }
    if let Some(v) = f.per_decade {
        cfg.per_decade = v;
    }
    if let Some(v) = f.h {
        cfg.h = v;
    }
    if let Some(v) = f.grading {
        cfg.grading = v;
    }
    if let Some(v) = f.count {
        cfg.count = v;
    }
    if let Some(v) = f.eps_min {
        cfg.eps_min = v;
    }
    if let Some(v) = f.eps_max {
        cfg.eps_max = v;
    }
    if let Some(v) = f.grid_points {
        cfg.grid_points = v;
    }
    if let Some(v) = f.modes {
        cfg.modes = v;
    }
    if let Some(v) = f.t_len {
        cfg.t_len = v;
    }
    if let Some(v) = f.seed {
        cfg.seed = v;
    }
    if let Some(end) = &f.end {
        cfg.end = match end.as_str() {
            "dirichlet" => EndCondition::Dirichlet,
            "neumann" => EndCondition::Neumann,
            "steklov" => EndCondition::Steklov,
            other => {
                return Err(Error::invalid(format!(
                    "unknown end condition '{other}' (want dirichlet|neumann|steklov)"
                )))
            }
        };
    }
    if f.odd_sector {
        cfg.odd_sector = true;
    }
    over!(eps, lambda_flat, theta, delta, window_lo, window_hi, jobs);
    if let Some(o) = &f.out {
        cfg.out = Some(o.clone());
    }
    if let Ok(env_out) = std::env::var("CUSPLAB_OUT") {
        if !env_out.is_empty() {
            cfg.out = Some(PathBuf::from(env_out));
        }
    }
    Ok(())
}

fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    match path {
        None => Ok(RunConfig::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p)?;
            serde_json::from_str(&text)
                .map_err(|e| Error::invalid(format!("config {}: {e}", p.display())))
        }
    }
}

fn write_out(dir: &Path, name: &str, bytes: &[u8]) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(name);
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, &path)?;
    Ok(())
}

/// Summary document written next to the sweep reports.
#[derive(Debug, Serialize, Deserialize)]
struct SweepReport {
    geom_hash: String,
    lambda_dagger: f64,
    points: usize,
    failures: usize,
    branches: usize,
    stable_branches: usize,
    gliding_branches: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    crossings: Option<CrossingSet>,
    #[serde(skip_serializing_if = "Option::is_none")]
    theta_from_first_crossing: Option<f64>,
}

fn emit_reports(
    sweep: &SweepResult,
    lambda_flat: Option<f64>,
    dir: &Path,
) -> Result<SweepReport> {
    let geom = &sweep.geometry;
    let mut branches: Vec<Branch> = track_branches(sweep)?;
    classify_branches(&mut branches, geom);
    write_out(dir, "branches.csv", branches_csv(&branches).as_bytes())?;
    let rows = gliding_report(&branches, geom);
    let mut gliding = String::from("branch_id,epsilon,lambda,observed,predicted,ratio\n");
    for r in &rows {
        gliding.push_str(&format!(
            "{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}\n",
            r.branch_id, r.epsilon, r.lambda, r.observed, r.predicted, r.ratio
        ));
    }
    write_out(dir, "gliding.csv", gliding.as_bytes())?;
    let crossings = match lambda_flat {
        Some(lf) => Some(detect_crossings(sweep, lf)?),
        None => None,
    };
    let theta_from_first_crossing = match &crossings {
        Some(cs) => cs.crossings.first().and_then(|&e| {
            crate::cusp_fit::estimate_theta_from_crossing(e, cs.lambda_flat, geom).ok()
        }),
        None => None,
    };
    if let Some(cs) = &crossings {
        write_out(
            dir,
            "crossings.json",
            serde_json::to_string_pretty(cs)?.as_bytes(),
        )?;
    }
    let predicted = match (&crossings, theta_from_first_crossing, lambda_flat) {
        (Some(_), Some(th), Some(lf)) => {
            crate::asymptotics::blinking_epsilons(lf, th, 0..6, geom).unwrap_or_default()
        }
        _ => Vec::new(),
    };
    let lambda_max = sweep
        .solved()
        .flat_map(|(_, s)| s.eigenvalues.iter().copied())
        .fold(0.0f64, f64::max)
        .max(1e-9);
    let svg = render_svg(&branches, lambda_flat, &predicted, lambda_max.min(6.0));
    write_out(dir, "plot.svg", svg.as_bytes())?;
    let report = SweepReport {
        geom_hash: sweep.geom_hash.clone(),
        lambda_dagger: threshold(geom),
        points: sweep.epsilons.len(),
        failures: sweep.failures.len(),
        branches: branches.len(),
        stable_branches: branches
            .iter()
            .filter(|b| b.label == crate::sweep::BranchLabel::Stable)
            .count(),
        gliding_branches: branches
            .iter()
            .filter(|b| b.label == crate::sweep::BranchLabel::Gliding)
            .count(),
        crossings,
        theta_from_first_crossing,
    };
    write_out(
        dir,
        "report.json",
        serde_json::to_string_pretty(&report)?.as_bytes(),
    )?;
    Ok(report)
}

fn cmd_predict(cfg: &RunConfig) -> Result<String> {
    let geom = cfg.geometry();
    geom.validate()?;
    let p = Prediction::build(&geom, cfg.lambda_flat, cfg.theta, cfg.eps)?;
    Ok(format!("{}\n", serde_json::to_string_pretty(&p)?))
}

fn cmd_solve(cfg: &RunConfig) -> Result<String> {
    let geom = cfg.geometry();
    let eps = cfg
        .eps
        .ok_or_else(|| Error::invalid("solve requires --eps"))?;
    let (mesh, mut spec) = solve_at_epsilon(&geom, eps, &cfg.solve_params())?;
    if let Some(dir) = &cfg.out {
        write_out(dir, "mesh.txt", mesh.to_text().as_bytes())?;
        spec.mesh_file = Some("mesh.txt".to_string());
        write_out(
            dir,
            "spectrum.json",
            serde_json::to_string_pretty(&spec)?.as_bytes(),
        )?;
    }
    Ok(format!("{}\n", serde_json::to_string_pretty(&spec)?))
}

fn cmd_sweep(cfg: &RunConfig) -> Result<String> {
    let geom = cfg.geometry();
    let dir = cfg
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from("cusplab_out"));
    let sweep = sweep_epsilon(&geom, &cfg.sweep_params(), Some(&dir))?;
    let report = emit_reports(&sweep, cfg.lambda_flat, &dir)?;
    Ok(format!("{}\n", serde_json::to_string_pretty(&report)?))
}

fn cmd_report(cfg: &RunConfig) -> Result<String> {
    let dir = cfg
        .out
        .clone()
        .ok_or_else(|| Error::invalid("report requires --out DIR with a persisted sweep"))?;
    let text = std::fs::read_to_string(dir.join("sweep.json"))?;
    let sweep: SweepResult = serde_json::from_str(&text)?;
    let report = emit_reports(&sweep, cfg.lambda_flat, &dir)?;
    Ok(format!("{}\n", serde_json::to_string_pretty(&report)?))
}

fn cmd_reduced(cfg: &RunConfig) -> Result<String> {
    let geom = cfg.geometry();
    let eps = cfg
        .eps
        .ok_or_else(|| Error::invalid("reduced requires --eps"))?;
    let spec = reduced_eigenvalues_closed_form(eps, cfg.d, &geom, cfg.count)?;
    // cross-check against the FD discretization when grid points are given
    if cfg.grid_points > 0 {
        let fd = reduced_eigenvalues_fd(
            eps,
            cfg.d,
            &geom,
            cfg.grid_points,
            cfg.count,
            ReducedBc::Dirichlet,
            ReducedBc::Dirichlet,
        )?;
        for (c, f) in spec.capital_lambda.iter().zip(&fd.capital_lambda) {
            if ((c - f) / c).abs() > 1e-4 {
                return Err(Error::Numerical(format!(
                    "closed form {c} and FD {f} disagree"
                )));
            }
        }
    }
    let mut out = String::from("epsilon,k,Lambda,lambda\n");
    for (k, (cap, lam)) in spec
        .capital_lambda
        .iter()
        .zip(&spec.lambda)
        .enumerate()
    {
        out.push_str(&format!(
            "{:.16e},{},{:.16e},{:.16e}\n",
            eps,
            k + 1,
            cap,
            lam
        ));
    }
    if let Some(dir) = &cfg.out {
        write_out(dir, "reduced.csv", out.as_bytes())?;
    }
    Ok(out)
}

fn cmd_layer(cfg: &RunConfig) -> Result<String> {
    let geom = cfg.geometry();
    let lambda = cfg.lambda_flat.unwrap_or(0.8);
    let w0 = crate::corrector::solve_w0(lambda, &geom, crate::corrector::WaveBranch::Plus)?;
    let re = move |x: f64| w0.eval(x).re;
    let w0b = w0.clone();
    let im = move |x: f64| w0b.eval(x).im;
    let layer_re = crate::corrector::solve_boundary_layer(&re, geom.a, cfg.modes, cfg.t_len)?;
    let layer_im = crate::corrector::solve_boundary_layer(&im, geom.a, cfg.modes, cfg.t_len)?;
    let mut modes = String::from("k,frequency,amplitude_re,amplitude_im\n");
    for (k, ((f, ar), (_, ai))) in layer_re
        .modes
        .iter()
        .zip(&layer_im.modes)
        .enumerate()
    {
        modes.push_str(&format!(
            "{},{:.16e},{:.16e},{:.16e}\n",
            k + 1,
            f,
            ar,
            ai
        ));
    }
    let mut grid = String::from("xi_prime,xi_n,value_re,value_im\n");
    let (nx, ny) = (24, 48);
    for j in 0..=ny {
        let xi_n = cfg.t_len * j as f64 / ny as f64;
        for i in 0..=nx {
            let xp = -geom.a + 2.0 * geom.a * i as f64 / nx as f64;
            grid.push_str(&format!(
                "{:.16e},{:.16e},{:.16e},{:.16e}\n",
                xp,
                xi_n,
                layer_re.eval(xp, xi_n),
                layer_im.eval(xp, xi_n)
            ));
        }
    }
    if let Some(dir) = &cfg.out {
        write_out(dir, "layer_modes.csv", modes.as_bytes())?;
        write_out(dir, "layer_grid.csv", grid.as_bytes())?;
    }
    Ok(modes)
}

fn cmd_scatter(cfg: &RunConfig) -> Result<String> {
    let geom = cfg.geometry();
    let lambda = cfg
        .lambda_flat
        .ok_or_else(|| Error::invalid("scatter requires --lambda-flat"))?;
    let delta = cfg.delta.unwrap_or(2e-3 * cfg.d);
    let window = (
        cfg.window_lo.unwrap_or(8.0 * delta),
        cfg.window_hi.unwrap_or(0.8 * cfg.d),
    );
    let params = FitMeshParams {
        h: cfg.h,
        grading: cfg.grading,
    };
    let sp: ScatteringPhase = scattering_phase(lambda, delta, window, &geom, params)?;
    let mut out = String::from("lambda,theta,s_abs,disagreement,delta_used,retried\n");
    out.push_str(&format!(
        "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{}\n",
        sp.lambda, sp.theta, sp.s_abs, sp.disagreement, sp.delta_used, sp.retried
    ));
    if let Some(dir) = &cfg.out {
        write_out(dir, "theta.csv", out.as_bytes())?;
        write_out(
            dir,
            "theta.json",
            serde_json::to_string_pretty(&sp)?.as_bytes(),
        )?;
    }
    Ok(out)
}

fn exit_code_of(e: &Error) -> i32 {
    match e {
        Error::InvalidParameter(_)
        | Error::Parse { .. }
        | Error::DimensionMismatch { .. }
        | Error::SpectralDomain { .. } => 1,
        Error::Io(_) | Error::Json(_) => 3,
        _ => 2,
    }
}

/// Execute a parsed command; returns the stdout payload.
pub fn execute(argv: &[String]) -> Result<String> {
    let cli = Cli::try_parse_from(argv).map_err(|e| Error::invalid(e.to_string()))?;
    let (flags, run): (&CommonFlags, fn(&RunConfig) -> Result<String>) = match &cli.command {
        Command::Predict(f) => (f, cmd_predict),
        Command::Solve(f) => (f, cmd_solve),
        Command::Sweep(f) => (f, cmd_sweep),
        Command::Reduced(f) => (f, cmd_reduced),
        Command::Layer(f) => (f, cmd_layer),
        Command::Scatter(f) => (f, cmd_scatter),
        Command::Report(f) => (f, cmd_report),
    };
    let mut cfg = load_config(cli.config.as_deref())?;
    apply_flags(&mut cfg, flags)?;
    if let Some(jobs) = cfg.jobs {
        // best effort: the global pool can only be set once per process
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global();
    }
    run(&cfg)
}

/// CLI entry point: returns the process exit code
/// (0 success, 1 usage, 2 numerical failure, 3 I/O).
pub fn run(argv: Vec<String>) -> i32 {
    match execute(&argv) {
        Ok(payload) => {
            print!("{payload}");
            let _ = std::io::stdout().flush();
            0
        }
        Err(e) => {
            let code = exit_code_of(&e);
            if code == 2 {
                let diag = serde_json::json!({
                    "error": e.to_string(),
                    "kind": "numerical",
                });
                eprintln!("{diag}");
            } else {
                eprintln!("error: {e}");
            }
            code
        }
    }
}
