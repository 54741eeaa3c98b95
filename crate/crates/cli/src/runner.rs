//! Experiment pipeline: solve, analyse, persist.

use std::path::{Path, PathBuf};

use pvi_core::analysis::{
    convergence_report, dominance_check, penalization_sweep, skorohod_flatness,
    supersolution_family_residual, viscosity_residual, ResidualOptions, SweepMember, SweepMethod,
};
use pvi_core::bsde::{
    chain_accumulation, increasing_part_stats, solve_penalized_chain, solve_penalized_lsmc,
    solve_projected_chain, IncreasingPartStats, LsmcOptions, RegressionBasis,
};
use pvi_core::pde::{
    closed_form_linear, fd_accumulation, refine_study, solve_penalized_fd, solve_projected_obstacle_fd,
    FdScheme, LinearParams,
};
use pvi_core::problem::builtin_problem;
use pvi_core::sde::{build_chain, simulate_paths, TimeGrid};
use pvi_core::{Chain, Error, Problem, Surface};
use rayon::prelude::*;
use serde::Serialize;

use crate::artifacts::{ArtifactWriter, Manifest};
use crate::config::{
    Analysis, ExperimentConfig, Method, DEFAULT_M_VALUES, DEFAULT_N_PATHS, DEFAULT_RESIDUAL_TOL,
    DEFAULT_SKOROHOD_EPS,
};
use crate::error::CliError;

/// Load, validate and run a config file; outputs land in its `output_dir`.
pub fn run_config_file(path: &Path) -> Result<(PathBuf, Manifest), CliError> {
    let config = ExperimentConfig::load(path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    let out = config.output_dir(base);
    let manifest = run_experiment(&config, &out)?;
    Ok((out, manifest))
}

pub fn alpha_tag(alpha: f64) -> String {
    format!("{alpha}")
}

pub fn run_experiment(config: &ExperimentConfig, out: &Path) -> Result<Manifest, CliError> {
    config.validate()?;
    let spec: Problem = builtin_problem(&config.problem.name, &config.problem.params)
        .map_err(|e| CliError::solver("problem", e))?;
    let mut w = ArtifactWriter::create(out)?;
    match config.method {
        Method::Lsmc => run_lsmc(config, &spec, &mut w)?,
        Method::Projected => run_projected(config, &spec, &mut w)?,
        Method::Fd | Method::Chain => run_deterministic(config, &spec, &mut w)?,
    }
    w.finish(config)
}

fn time_grid(config: &ExperimentConfig, spec: &Problem) -> Result<TimeGrid<f64>, CliError> {
    TimeGrid::new(0.0, spec.horizon, config.grid.n_steps).map_err(|e| CliError::solver("grid", e))
}

fn fd_scheme(config: &ExperimentConfig) -> FdScheme {
    let g = &config.grid;
    let s = config.scheme();
    let mut scheme = FdScheme::implicit(
        g.x_min.expect("validated"),
        g.x_max.expect("validated"),
        g.n_space.expect("validated"),
    );
    if let Some(theta) = s.theta {
        scheme.theta = theta;
    }
    if let Some(p) = s.penalty_treatment {
        scheme.penalty = p;
    }
    if let Some(b) = s.boundary {
        scheme.boundary = b;
    }
    if let Some(p) = s.projection {
        scheme.projection = p;
    }
    scheme
}

enum Discretization {
    Fd { scheme: FdScheme, grid: TimeGrid<f64> },
    Chain(Chain),
}

impl Discretization {
    fn new(config: &ExperimentConfig, spec: &Problem) -> Result<Self, CliError> {
        let grid = time_grid(config, spec)?;
        Ok(match config.method {
            Method::Chain => {
                let g = &config.grid;
                let chain = build_chain(
                    spec,
                    &grid,
                    g.x_min.expect("validated"),
                    g.x_max.expect("validated"),
                    g.n_space.expect("validated"),
                )
                .map_err(|e| CliError::solver("chain", e))?;
                Discretization::Chain(chain)
            }
            _ => Discretization::Fd {
                scheme: fd_scheme(config),
                grid,
            },
        })
    }

    fn sweep_method(&self) -> SweepMethod<'_, f64> {
        match self {
            Discretization::Fd { scheme, grid } => SweepMethod::Fd {
                scheme: *scheme,
                grid: *grid,
            },
            Discretization::Chain(chain) => SweepMethod::Chain { chain },
        }
    }

    fn solve(&self, spec: &Problem, alpha: f64) -> pvi_core::Result<Surface> {
        match self {
            Discretization::Fd { scheme, grid } => solve_penalized_fd(spec, scheme, grid, alpha),
            Discretization::Chain(chain) => solve_penalized_chain(spec, chain, alpha),
        }
    }

    fn projected(&self, spec: &Problem) -> pvi_core::Result<Surface> {
        match self {
            Discretization::Fd { scheme, grid } => solve_projected_obstacle_fd(spec, scheme, grid),
            Discretization::Chain(chain) => solve_projected_chain(spec, chain),
        }
    }

    fn accumulation(&self, spec: &Problem, u: &Surface, eps: Option<f64>) -> pvi_core::Result<Surface> {
        match self {
            Discretization::Fd { scheme, grid } => fd_accumulation(spec, scheme, grid, u, eps),
            Discretization::Chain(chain) => chain_accumulation(spec, chain, u, eps),
        }
    }
}

#[derive(Serialize)]
struct DominanceRow {
    alpha: f64,
    is_dominated: bool,
    max_excess: f64,
    nodes_above: usize,
}

#[derive(Serialize)]
struct DominanceReport {
    kind: &'static str,
    problem: String,
    method: &'static str,
    candidate: &'static str,
    rows: Vec<DominanceRow>,
}

#[derive(Serialize)]
struct SkorohodRow {
    alpha: f64,
    off_constraint_mass: f64,
    total_mass: f64,
    ratio: f64,
}

#[derive(Serialize)]
struct SkorohodReport {
    kind: &'static str,
    problem: String,
    method: &'static str,
    eps: f64,
    rows: Vec<SkorohodRow>,
}

#[derive(Serialize)]
struct LsmcResult {
    kind: &'static str,
    problem: String,
    alpha: f64,
    n_paths: usize,
    n_steps: usize,
    seed: u64,
    y0: f64,
    y0_stderr: f64,
    increasing_part: IncreasingPartStats,
    a_nondecreasing: bool,
}

fn residual_options() -> ResidualOptions {
    ResidualOptions::default()
}

fn run_deterministic(config: &ExperimentConfig, spec: &Problem, w: &mut ArtifactWriter) -> Result<(), CliError> {
    let disc = Discretization::new(config, spec)?;
    let alphas = config.alphas();
    let x0 = spec.x0[0];

    let (report, members) = if alphas.len() >= 4 {
        let (r, m) = penalization_sweep(spec, &disc.sweep_method(), &alphas)
            .map_err(|e| CliError::solver("sweep", e))?;
        (Some(r), m)
    } else {
        let members = alphas
            .par_iter()
            .map(|&alpha| {
                let u = disc.solve(spec, alpha)?;
                let acc = disc.accumulation(spec, &u, None)?;
                Ok(SweepMember {
                    alpha,
                    u0: u.initial_value(x0),
                    u0_stderr: None,
                    a_total: acc.initial_value(x0),
                    surface: Some(u),
                    lsmc_stats: None,
                })
            })
            .collect::<pvi_core::Result<Vec<_>>>()
            .map_err(|e| CliError::solver("solve", e))?;
        (None, members)
    };

    let mut paths = Vec::with_capacity(members.len());
    for m in &members {
        let u = m.surface.as_ref().expect("deterministic members carry surfaces");
        paths.push(w.write_surface(&format!("surface_alpha_{}", alpha_tag(m.alpha)), u)?);
    }
    if let Some(mut report) = report {
        for (meta, path) in report.surfaces_meta.iter_mut().zip(&paths) {
            meta.path = Some(path.clone());
        }
        w.write_json("convergence.json", &report)?;
    }

    let opts = config.options();
    if config.wants(Analysis::Residual) {
        for m in &members {
            let u = m.surface.as_ref().expect("surface");
            let r = viscosity_residual(u, spec, &residual_options())
                .map_err(|e| CliError::solver("residual", e.at_alpha(m.alpha)))?;
            w.write_json_compact(&format!("residual_alpha_{}.json", alpha_tag(m.alpha)), &r)?;
        }
    }
    let top = members.last().expect("at least one alpha");
    if config.wants(Analysis::SupersolutionFamily) {
        let fam = supersolution_family_residual(
            top.surface.as_ref().expect("surface"),
            spec,
            opts.m_values.as_deref().unwrap_or(&DEFAULT_M_VALUES),
            opts.residual_tol.unwrap_or(DEFAULT_RESIDUAL_TOL),
            &residual_options(),
        )
        .map_err(|e| CliError::solver("supersolution_family", e))?;
        w.write_json("supersolution_family.json", &fam)?;
    }
    if config.wants(Analysis::Dominance) {
        let candidate = disc.projected(spec).map_err(|e| CliError::solver("dominance", e))?;
        let rows = members
            .iter()
            .map(|m| {
                let d = dominance_check(m.surface.as_ref().expect("surface"), &candidate)?;
                Ok(DominanceRow {
                    alpha: m.alpha,
                    is_dominated: d.is_dominated,
                    max_excess: d.max_excess,
                    nodes_above: d.nodes_above,
                })
            })
            .collect::<pvi_core::Result<Vec<_>>>()
            .map_err(|e| CliError::solver("dominance", e))?;
        w.write_json(
            "dominance.json",
            &DominanceReport {
                kind: "dominance_report",
                problem: spec.name.clone(),
                method: config.method.label(),
                candidate: "projected",
                rows,
            },
        )?;
    }
    if config.wants(Analysis::Skorohod) {
        let eps = opts.skorohod_eps.unwrap_or(DEFAULT_SKOROHOD_EPS);
        let rows = members
            .par_iter()
            .map(|m| {
                let u = m.surface.as_ref().expect("surface");
                let off = disc.accumulation(spec, u, Some(eps))?.initial_value(x0);
                let total = m.a_total;
                if !spec.form.is_obstacle() && total != 0.0 {
                    return Err(Error::Unsupported(format!(
                        "Skorohod flatness is only defined for obstacle constraints; `{}` has a general constraint",
                        spec.name
                    )));
                }
                Ok(SkorohodRow {
                    alpha: m.alpha,
                    off_constraint_mass: off,
                    total_mass: total,
                    ratio: if total > 0.0 { off / total } else { 0.0 },
                })
            })
            .collect::<pvi_core::Result<Vec<_>>>()
            .map_err(|e| CliError::solver("skorohod", e))?;
        w.write_json(
            "skorohod.json",
            &SkorohodReport {
                kind: "skorohod_report",
                problem: spec.name.clone(),
                method: config.method.label(),
                eps,
                rows,
            },
        )?;
    }
    if config.wants(Analysis::Refine) {
        let Discretization::Fd { scheme, .. } = &disc else {
            unreachable!("validated: refine needs fd");
        };
        let (ns, nt) = (scheme.n_space, config.grid.n_steps);
        let f = if scheme.theta == 0.0 { 4 } else { 2 };
        let levels = [(ns, nt), (2 * ns, f * nt), (4 * ns, f * f * nt)];
        let reference = if spec.name == "unconstrained_linear" {
            let p = LinearParams::from_catalog(&config.problem.params).map_err(|e| CliError::solver("refine", e))?;
            Some(closed_form_linear(&p).map_err(|e| CliError::solver("refine", e))?)
        } else {
            None
        };
        let table = refine_study(spec, scheme, top.alpha, &levels, reference)
            .map_err(|e| CliError::solver("refine", e))?;
        w.write_json("refine.json", &table)?;
    }
    Ok(())
}

fn run_projected(config: &ExperimentConfig, spec: &Problem, w: &mut ArtifactWriter) -> Result<(), CliError> {
    let grid = time_grid(config, spec)?;
    let scheme = fd_scheme(config);
    let u = solve_projected_obstacle_fd(spec, &scheme, &grid).map_err(|e| CliError::solver("projected", e))?;
    w.write_surface("surface_projected", &u)?;
    if config.wants(Analysis::Residual) {
        let r = viscosity_residual(&u, spec, &residual_options()).map_err(|e| CliError::solver("residual", e))?;
        w.write_json_compact("residual_projected.json", &r)?;
    }
    if config.wants(Analysis::SupersolutionFamily) {
        let opts = config.options();
        let fam = supersolution_family_residual(
            &u,
            spec,
            opts.m_values.as_deref().unwrap_or(&DEFAULT_M_VALUES),
            opts.residual_tol.unwrap_or(DEFAULT_RESIDUAL_TOL),
            &residual_options(),
        )
        .map_err(|e| CliError::solver("supersolution_family", e))?;
        w.write_json("supersolution_family.json", &fam)?;
    }
    Ok(())
}

fn run_lsmc(config: &ExperimentConfig, spec: &Problem, w: &mut ArtifactWriter) -> Result<(), CliError> {
    let grid = time_grid(config, spec)?;
    let mc = config.mc();
    let seed = mc.seed.expect("validated");
    let n_paths = mc.n_paths.unwrap_or(DEFAULT_N_PATHS);
    let mut options = LsmcOptions::default();
    if let Some(d) = mc.basis_degree {
        options.basis = RegressionBasis::polynomial(d);
    }
    if let Some(p) = mc.picard_iters {
        options.picard_iters = p;
    }
    if let Some(p) = config.scheme().penalty_treatment {
        options.penalty = p;
    }
    if let Some(a) = mc.increasing_part {
        options.increasing_part = a;
    }
    let ensemble = simulate_paths(spec, 0.0, &spec.x0, &grid, n_paths, seed)
        .map_err(|e| CliError::solver("simulate", e))?;
    let eps = config.options().skorohod_eps.unwrap_or(DEFAULT_SKOROHOD_EPS);

    let mut members: Vec<SweepMember<f64>> = Vec::new();
    let mut flat_rows = Vec::new();
    for alpha in config.alphas() {
        let sol = solve_penalized_lsmc(&ensemble, spec, alpha, &options)
            .map_err(|e| CliError::solver("lsmc", e.at_alpha(alpha)))?;
        let stats = increasing_part_stats(&sol);
        w.write_json(
            &format!("lsmc_alpha_{}.json", alpha_tag(alpha)),
            &LsmcResult {
                kind: "lsmc_result",
                problem: spec.name.clone(),
                alpha,
                n_paths,
                n_steps: grid.n_steps,
                seed,
                y0: sol.y0,
                y0_stderr: sol.y0_stderr,
                increasing_part: stats,
                a_nondecreasing: sol.a_is_nondecreasing(),
            },
        )?;
        if config.wants(Analysis::Skorohod) {
            let f = skorohod_flatness(&sol, spec, eps).map_err(|e| CliError::solver("skorohod", e.at_alpha(alpha)))?;
            flat_rows.push(SkorohodRow {
                alpha,
                off_constraint_mass: f.off_constraint_mass,
                total_mass: f.total_mass,
                ratio: f.ratio,
            });
        }
        members.push(SweepMember {
            alpha,
            u0: sol.y0,
            u0_stderr: Some(sol.y0_stderr),
            a_total: stats.mean_total,
            surface: None,
            lsmc_stats: Some(stats),
        });
    }
    if members.len() >= 4 {
        let report = convergence_report(&spec.name, "lsmc", &members).map_err(|e| CliError::solver("sweep", e))?;
        w.write_json("convergence.json", &report)?;
    }
    if config.wants(Analysis::Skorohod) {
        w.write_json(
            "skorohod.json",
            &SkorohodReport {
                kind: "skorohod_report",
                problem: spec.name.clone(),
                method: "lsmc",
                eps,
                rows: flat_rows,
            },
        )?;
    }
    Ok(())
}
