//! Discrete residuals of `min{-u_t - F_0, Phi} = 0` on a value surface.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problem::CoefficientSet;
use crate::scalar::Real;
use crate::surface::ValueSurface;

/// Time level at which the spatial part `F_0` is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResidualLevel {
    /// `F_0` at `t_{i+1}`, the level the backward step starts from.
    #[default]
    Explicit,
    /// `F_0` at `t_i`; this is the equation an implicit scheme solves exactly.
    Implicit,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResidualOptions {
    #[serde(default)]
    pub level: ResidualLevel,
    /// Time levels with `T - t < terminal_layer * (T - t0)` are excluded.
    #[serde(default = "default_terminal_layer")]
    pub terminal_layer: f64,
    /// Nodes where `u` jumps by more than `jump_factor * dx` between
    /// neighbours are flagged as potential discontinuities and excluded.
    #[serde(default = "default_jump_factor")]
    pub jump_factor: f64,
}

fn default_terminal_layer() -> f64 {
    0.1
}

fn default_jump_factor() -> f64 {
    10.0
}

impl Default for ResidualOptions {
    fn default() -> Self {
        Self {
            level: ResidualLevel::Explicit,
            terminal_layer: default_terminal_layer(),
            jump_factor: default_jump_factor(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    pub kind: String,
    pub problem: String,
    pub alpha: Option<f64>,
    pub options: ResidualOptions,
    /// Interior shape `(time levels, space nodes)`; arrays are row-major.
    pub n_times: usize,
    pub n_nodes: usize,
    pub sup_residual: f64,
    pub l1_residual: f64,
    pub nodes_pde_active: usize,
    pub nodes_phi_active: usize,
    pub nodes_excluded: usize,
    pub potential_discontinuities: usize,
    pub min_pde_residual: f64,
    pub min_constraint_value: f64,
    pub max_complementarity: f64,
    pub pde_residual: Vec<f64>,
    pub constraint_value: Vec<f64>,
    pub complementarity: Vec<f64>,
    pub excluded: Vec<bool>,
}

impl ResidualReport {
    /// Supersolution side (`pde >= -tol`, `Phi >= -tol`) and subsolution side
    /// (`min <= tol`) at every included node.
    pub fn satisfies(&self, tol: f64) -> bool {
        self.min_pde_residual >= -tol
            && self.min_constraint_value >= -tol
            && self.max_complementarity <= tol
    }
}

/// Per-node `(pde_residual, constraint_value, excluded, discontinuity)` on the interior grid.
pub(crate) struct NodeResiduals {
    pub n_times: usize,
    pub n_nodes: usize,
    pub pde: Vec<f64>,
    pub phi: Vec<f64>,
    pub excluded: Vec<bool>,
    pub discontinuities: usize,
}

pub(crate) fn node_residuals<T: Real>(
    surface: &ValueSurface<T>,
    spec: &CoefficientSet<T>,
    options: &ResidualOptions,
) -> Result<NodeResiduals> {
    spec.require_dim(1)?;
    let nt = surface.n_times();
    let nx = surface.n_nodes();
    if nt < 4 || nx < 5 {
        return Err(Error::Shape(format!(
            "residuals need at least 3 interior nodes per axis, surface is {nt} x {nx}"
        )));
    }
    let (n_times, n_nodes) = (nt - 1, nx - 2);
    let t0 = surface.times[0].as_f64();
    let t_end = surface.times[nt - 1].as_f64();
    let cutoff = t_end - options.terminal_layer * (t_end - t0);
    let half = T::lit(0.5);
    let mut pde = Vec::with_capacity(n_times * n_nodes);
    let mut phi = Vec::with_capacity(n_times * n_nodes);
    let mut excluded = Vec::with_capacity(n_times * n_nodes);
    let mut discontinuities = 0;
    for i in 0..n_times {
        let ti = surface.times[i];
        let dt = surface.times[i + 1] - ti;
        let level = match options.level {
            ResidualLevel::Explicit => i + 1,
            ResidualLevel::Implicit => i,
        };
        let tl = surface.times[level];
        let ul = surface.row(level);
        let ui = surface.row(i);
        let in_layer = !(ti.as_f64() <= cutoff);
        for j in 1..nx - 1 {
            let x = surface.xs[j];
            let dx = surface.xs[j + 1] - x;
            let dxm = x - surface.xs[j - 1];
            // three-point derivatives on a possibly non-uniform stencil
            let d1 = |u: &[T]| {
                (u[j + 1] - u[j]) * dxm / (dx * (dx + dxm)) + (u[j] - u[j - 1]) * dx / (dxm * (dx + dxm))
            };
            let d2 = |u: &[T]| {
                ((u[j + 1] - u[j]) / dx - (u[j] - u[j - 1]) / dxm) / (half * (dx + dxm))
            };
            let b = spec.drift_1d(tl, x);
            let s = spec.sigma_1d(tl, x);
            let q = d1(ul);
            let f0 = half * s * s * d2(ul) + b * q + spec.driver(tl, &[x], ul[j], &[s * q]);
            let r = -(surface.at(i + 1, j) - ui[j]) / dt - f0;
            let zi = spec.sigma_1d(ti, x) * d1(ui);
            let c = spec.constraint(ti, &[x], ui[j], &[zi]);
            if !r.is_finite() || !c.is_finite() {
                return Err(Error::Evaluation {
                    coefficient: "residual".into(),
                    input: format!("t = {ti}, x = {x}"),
                });
            }
            let jump = T::lit(options.jump_factor);
            let disc = (ui[j + 1] - ui[j]).abs() > jump * dx || (ui[j] - ui[j - 1]).abs() > jump * dxm;
            if disc {
                discontinuities += 1;
            }
            pde.push(r.as_f64());
            phi.push(c.as_f64());
            excluded.push(in_layer || disc);
        }
    }
    Ok(NodeResiduals {
        n_times,
        n_nodes,
        pde,
        phi,
        excluded,
        discontinuities,
    })
}

/// Discrete complementarity residual of a surface.
pub fn viscosity_residual<T: Real>(
    surface: &ValueSurface<T>,
    spec: &CoefficientSet<T>,
    options: &ResidualOptions,
) -> Result<ResidualReport> {
    let nr = node_residuals(surface, spec, options)?;
    let complementarity: Vec<f64> = nr.pde.iter().zip(&nr.phi).map(|(&a, &b)| a.min(b)).collect();
    let mut sup: f64 = 0.0;
    let mut l1 = 0.0;
    let mut pde_active = 0;
    let mut phi_active = 0;
    let mut min_pde = f64::INFINITY;
    let mut min_phi = f64::INFINITY;
    let mut max_min = f64::NEG_INFINITY;
    for k in 0..complementarity.len() {
        if nr.excluded[k] {
            continue;
        }
        let m = complementarity[k];
        sup = sup.max(m.abs());
        l1 += m.abs();
        if nr.pde[k] <= nr.phi[k] {
            pde_active += 1;
        } else {
            phi_active += 1;
        }
        min_pde = min_pde.min(nr.pde[k]);
        min_phi = min_phi.min(nr.phi[k]);
        max_min = max_min.max(m);
    }
    let nodes_excluded = nr.excluded.iter().filter(|&&e| e).count();
    Ok(ResidualReport {
        kind: "residual_report".into(),
        problem: surface.problem.clone(),
        alpha: surface.alpha,
        options: *options,
        n_times: nr.n_times,
        n_nodes: nr.n_nodes,
        sup_residual: sup,
        l1_residual: l1,
        nodes_pde_active: pde_active,
        nodes_phi_active: phi_active,
        nodes_excluded,
        potential_discontinuities: nr.discontinuities,
        min_pde_residual: min_pde,
        min_constraint_value: min_phi,
        max_complementarity: max_min,
        pde_residual: nr.pde,
        constraint_value: nr.phi,
        complementarity,
        excluded: nr.excluded,
    })
}

/// Which driver perturbation a family row tests.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyReading {
    /// `-u_t - F_0 - m Phi^- >= 0`.
    NegativePart,
    /// `-u_t - F_0 - m Phi >= 0`, the literal reading; reported for comparison.
    Literal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyRow {
    pub m: f64,
    pub reading: FamilyReading,
    pub min_residual: f64,
    pub nodes_failing: usize,
    pub passes: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyReport {
    pub kind: String,
    pub problem: String,
    pub alpha: Option<f64>,
    pub tol: f64,
    pub options: ResidualOptions,
    pub rows: Vec<FamilyRow>,
}

impl FamilyReport {
    /// True when every `Phi^-` row passes.
    pub fn passes(&self) -> bool {
        self.rows
            .iter()
            .filter(|r| r.reading == FamilyReading::NegativePart)
            .all(|r| r.passes)
    }

    pub fn row(&self, m: f64, reading: FamilyReading) -> Option<&FamilyRow> {
        self.rows.iter().find(|r| r.m == m && r.reading == reading)
    }
}

/// Test the surface as a supersolution of the `g + m Phi^-` equation for each
/// `m`, and report the literal `g + m Phi` reading alongside.
pub fn supersolution_family_residual<T: Real>(
    surface: &ValueSurface<T>,
    spec: &CoefficientSet<T>,
    m_list: &[f64],
    tol: f64,
    options: &ResidualOptions,
) -> Result<FamilyReport> {
    if m_list.iter().any(|&m| !(m >= 0.0)) {
        return Err(Error::InvalidInput("m values must be nonnegative".into()));
    }
    let nr = node_residuals(surface, spec, options)?;
    let mut rows = Vec::with_capacity(2 * m_list.len());
    for reading in [FamilyReading::NegativePart, FamilyReading::Literal] {
        for &m in m_list {
            let mut min_r = f64::INFINITY;
            let mut failing = 0;
            for k in 0..nr.pde.len() {
                if nr.excluded[k] {
                    continue;
                }
                let pen = match reading {
                    FamilyReading::NegativePart => (-nr.phi[k]).max(0.0),
                    FamilyReading::Literal => nr.phi[k],
                };
                let r = nr.pde[k] - m * pen;
                min_r = min_r.min(r);
                if r < -tol {
                    failing += 1;
                }
            }
            rows.push(FamilyRow {
                m,
                reading,
                min_residual: min_r,
                nodes_failing: failing,
                passes: failing == 0,
            });
        }
    }
    Ok(FamilyReport {
        kind: "supersolution_family".into(),
        problem: surface.problem.clone(),
        alpha: surface.alpha,
        tol,
        options: *options,
        rows,
    })
}
