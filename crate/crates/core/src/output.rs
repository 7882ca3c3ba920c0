//! Serialization of results to CSV and JSON.
//!
//! Every document is a single top-level object with a `config` member and
//! either `rows` (flat tables) or `grid` (the heatmap figure). JSON is written
//! pretty-printed with a trailing newline; CSV carries one header row and
//! prints floats with 17 significant digits. Output is deterministic, so
//! repeated runs with the same arguments are byte-identical.

use crate::error::{Error, Result};
use crate::experiments::{
    ConvergenceRow, DichotomyCell, GapRow, GapScanReport, GronwallReport, GronwallRow,
};
use crate::field::FeedbackField;
use crate::flow::FlowResult;
use crate::pmp::{fixed_point_candidates, solve_closed_form, CostBreakdown, PMPSolution};
use crate::problem::ProblemParams;
use serde::Serialize;
use std::io::Write;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    Json,
}

/// 17 significant digits; round-trips every f64 and never varies across runs.
fn fmt(x: f64) -> String {
    format!("{x:.16e}")
}

/// CSV cell for a possibly undefined value.
fn fmt_opt(x: Option<f64>) -> String {
    match x {
        Some(v) => fmt(v),
        None => "nan".to_string(),
    }
}

fn write_err(what: &str, e: impl std::fmt::Display) -> Error {
    Error::InvalidParameter(format!("failed to write {what}: {e}"))
}

/// A result document renderable to both formats.
pub trait TableDocument: Serialize {
    fn csv_header(&self) -> Vec<&'static str>;
    fn csv_records(&self) -> Vec<Vec<String>>;
}

pub fn write_document<W: Write, D: TableDocument>(
    mut w: W,
    format: OutputFormat,
    doc: &D,
) -> Result<()> {
    match format {
        OutputFormat::Csv => {
            let mut cw = csv::Writer::from_writer(&mut w);
            cw.write_record(doc.csv_header())
                .map_err(|e| write_err("csv header", e))?;
            for record in doc.csv_records() {
                cw.write_record(&record)
                    .map_err(|e| write_err("csv record", e))?;
            }
            cw.flush().map_err(|e| write_err("csv output", e))?;
        }
        OutputFormat::Json => {
            serde_json::to_writer_pretty(&mut w, doc).map_err(|e| write_err("json output", e))?;
            w.write_all(b"\n").map_err(|e| write_err("json output", e))?;
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// solve-discrete

#[derive(Debug, Clone, Serialize)]
pub struct DiscreteConfig {
    pub command: &'static str,
    pub lambda: f64,
    pub horizon: f64,
    pub num_agents: usize,
    pub regime: &'static str,
    pub running: f64,
    pub terminal: f64,
    pub total: f64,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct AgentRow {
    pub agent: usize,
    pub x0: f64,
    pub control: f64,
    pub costate: f64,
    pub x_final: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct DiscreteDocument {
    pub config: DiscreteConfig,
    pub rows: Vec<AgentRow>,
}

pub fn discrete_document(params: &ProblemParams, solution: &PMPSolution) -> DiscreteDocument {
    let grid = params.initial_grid();
    let rows = (0..params.num_agents())
        .map(|i| AgentRow {
            agent: i,
            x0: grid[i],
            control: solution.controls.values()[i],
            costate: solution.costates[i],
            x_final: solution.final_positions[i],
        })
        .collect();
    DiscreteDocument {
        config: DiscreteConfig {
            command: "solve-discrete",
            lambda: params.lambda(),
            horizon: params.horizon(),
            num_agents: params.num_agents(),
            regime: solution.regime.label(),
            running: solution.cost.running,
            terminal: solution.cost.terminal,
            total: solution.cost.total,
        },
        rows,
    }
}

impl TableDocument for DiscreteDocument {
    fn csv_header(&self) -> Vec<&'static str> {
        vec!["agent", "x0", "control", "costate", "x_final"]
    }
    fn csv_records(&self) -> Vec<Vec<String>> {
        self.rows
            .iter()
            .map(|r| {
                vec![
                    r.agent.to_string(),
                    fmt(r.x0),
                    fmt(r.control),
                    fmt(r.costate),
                    fmt(r.x_final),
                ]
            })
            .collect()
    }
}

// ---------------------------------------------------------------------------
// solve-meanfield

#[derive(Debug, Clone, Serialize)]
pub struct MeanfieldConfig {
    pub command: &'static str,
    pub lambda: f64,
    pub horizon: f64,
    pub field: &'static str,
    pub num_particles: usize,
    pub step_dt: f64,
    pub method: &'static str,
    pub running: f64,
    pub terminal: f64,
    pub total: f64,
    pub final_mean: f64,
    pub final_variance: f64,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct ParticleRow {
    pub particle: usize,
    pub y0: f64,
    pub y_final: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct MeanfieldDocument {
    pub config: MeanfieldConfig,
    pub rows: Vec<ParticleRow>,
}

pub fn meanfield_document(
    params: &ProblemParams,
    field: &FeedbackField,
    flow: &FlowResult,
    cost: &CostBreakdown,
) -> Result<MeanfieldDocument> {
    let final_measure = flow.final_measure()?;
    let finals = flow.final_positions();
    let initials = flow.positions_at(0);
    let rows = (0..flow.num_particles())
        .map(|i| ParticleRow {
            particle: i,
            y0: initials[i],
            y_final: finals[i],
        })
        .collect();
    Ok(MeanfieldDocument {
        config: MeanfieldConfig {
            command: "solve-meanfield",
            lambda: params.lambda(),
            horizon: params.horizon(),
            field: field.label(),
            num_particles: flow.num_particles(),
            step_dt: flow.step_dt(),
            method: flow.method(),
            running: cost.running,
            terminal: cost.terminal,
            total: cost.total,
            final_mean: final_measure.mean(),
            final_variance: final_measure.variance(),
        },
        rows,
    })
}

impl TableDocument for MeanfieldDocument {
    fn csv_header(&self) -> Vec<&'static str> {
        vec!["particle", "y0", "y_final"]
    }
    fn csv_records(&self) -> Vec<Vec<String>> {
        self.rows
            .iter()
            .map(|r| vec![r.particle.to_string(), fmt(r.y0), fmt(r.y_final)])
            .collect()
    }
}

// ---------------------------------------------------------------------------
// converge

#[derive(Debug, Clone, Serialize)]
pub struct ConvergeConfig {
    pub command: &'static str,
    pub lambda: f64,
    pub horizon: f64,
    pub field: &'static str,
    pub limit_particles: usize,
    pub step_dt: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergeDocument {
    pub config: ConvergeConfig,
    pub rows: Vec<ConvergenceRow>,
}

pub fn converge_document(
    params: &ProblemParams,
    field: &FeedbackField,
    limit_particles: usize,
    step_dt: f64,
    rows: Vec<ConvergenceRow>,
) -> ConvergeDocument {
    ConvergeDocument {
        config: ConvergeConfig {
            command: "converge",
            lambda: params.lambda(),
            horizon: params.horizon(),
            field: field.label(),
            limit_particles,
            step_dt,
        },
        rows,
    }
}

impl TableDocument for ConvergeDocument {
    fn csv_header(&self) -> Vec<&'static str> {
        vec!["num_agents", "w1_initial", "cost_n", "cost_limit", "abs_error"]
    }
    fn csv_records(&self) -> Vec<Vec<String>> {
        self.rows
            .iter()
            .map(|r| {
                vec![
                    r.num_agents.to_string(),
                    fmt(r.w1_initial),
                    fmt(r.cost_n),
                    fmt(r.cost_limit),
                    fmt(r.abs_error),
                ]
            })
            .collect()
    }
}

// ---------------------------------------------------------------------------
// gap-scan

#[derive(Debug, Clone, Serialize)]
pub struct GapConfig {
    pub command: &'static str,
    pub lambda: f64,
    pub horizon: f64,
    pub num_particles: usize,
    pub step_dt: f64,
    pub fitted_order: f64,
    pub extrapolated_limit: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GapDocument {
    pub config: GapConfig,
    pub rows: Vec<GapRow>,
}

pub fn gap_document(
    params: &ProblemParams,
    num_particles: usize,
    step_dt: f64,
    report: GapScanReport,
) -> GapDocument {
    GapDocument {
        config: GapConfig {
            command: "gap-scan",
            lambda: params.lambda(),
            horizon: params.horizon(),
            num_particles,
            step_dt,
            fitted_order: report.fitted_order,
            extrapolated_limit: report.extrapolated_limit,
        },
        rows: report.rows,
    }
}

impl TableDocument for GapDocument {
    fn csv_header(&self) -> Vec<&'static str> {
        vec!["slope_l", "cost_mollified", "limit_cost", "gap"]
    }
    fn csv_records(&self) -> Vec<Vec<String>> {
        self.rows
            .iter()
            .map(|r| {
                vec![
                    fmt(r.slope_l),
                    fmt(r.cost_mollified),
                    fmt(r.limit_cost),
                    fmt(r.gap),
                ]
            })
            .collect()
    }
}

// ---------------------------------------------------------------------------
// gronwall

#[derive(Debug, Clone, Serialize)]
pub struct GronwallConfig {
    pub command: &'static str,
    pub field: &'static str,
    pub lipschitz: f64,
    pub num_pairs: usize,
    pub rng_seed: u64,
    pub horizon: f64,
    pub step_dt: f64,
    pub max_ratio: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GronwallDocument {
    pub config: GronwallConfig,
    pub rows: Vec<GronwallRow>,
}

#[allow(clippy::too_many_arguments)]
pub fn gronwall_document(
    field: &FeedbackField,
    num_pairs: usize,
    rng_seed: u64,
    horizon: f64,
    step_dt: f64,
    report: GronwallReport,
) -> GronwallDocument {
    GronwallDocument {
        config: GronwallConfig {
            command: "gronwall",
            field: field.label(),
            lipschitz: field.space_lipschitz().unwrap_or(f64::INFINITY),
            num_pairs,
            rng_seed,
            horizon,
            step_dt,
            max_ratio: report.max_ratio,
        },
        rows: report.rows,
    }
}

impl TableDocument for GronwallDocument {
    fn csv_header(&self) -> Vec<&'static str> {
        vec!["pair_index", "time", "w1_evolved", "bound", "ratio"]
    }
    fn csv_records(&self) -> Vec<Vec<String>> {
        self.rows
            .iter()
            .map(|r| {
                vec![
                    r.pair_index.to_string(),
                    fmt(r.time),
                    fmt(r.w1_evolved),
                    fmt(r.bound),
                    fmt(r.ratio),
                ]
            })
            .collect()
    }
}

// ---------------------------------------------------------------------------
// dichotomy

#[derive(Debug, Clone, Serialize)]
pub struct DichotomyConfig {
    pub command: &'static str,
    pub horizon: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct DichotomyRow {
    pub lambda: f64,
    pub regime: &'static str,
    pub verdict: &'static str,
    pub witness: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct DichotomyDocument {
    pub config: DichotomyConfig,
    pub rows: Vec<DichotomyRow>,
}

pub fn dichotomy_document(horizon: f64, cells: &[DichotomyCell]) -> DichotomyDocument {
    DichotomyDocument {
        config: DichotomyConfig {
            command: "dichotomy",
            horizon,
        },
        rows: cells
            .iter()
            .map(|c| DichotomyRow {
                lambda: c.lambda,
                regime: c.regime,
                verdict: c.verdict.label(),
                witness: c.witness.describe(),
            })
            .collect(),
    }
}

impl TableDocument for DichotomyDocument {
    fn csv_header(&self) -> Vec<&'static str> {
        vec!["lambda", "regime", "verdict", "witness"]
    }
    fn csv_records(&self) -> Vec<Vec<String>> {
        self.rows
            .iter()
            .map(|r| {
                vec![
                    fmt(r.lambda),
                    r.regime.to_string(),
                    r.verdict.to_string(),
                    r.witness.clone(),
                ]
            })
            .collect()
    }
}

// ---------------------------------------------------------------------------
// figures

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FigureKind {
    /// Identity vs the control response map, with their intersections.
    FixedPointMap,
    /// |u*(t, y)| raster with agent trajectories overlaid.
    FeedbackHeatmap,
}

impl FigureKind {
    pub fn label(&self) -> &'static str {
        match self {
            FigureKind::FixedPointMap => "fig1",
            FigureKind::FeedbackHeatmap => "fig2",
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Figure1Config {
    pub command: &'static str,
    pub which: &'static str,
    pub lambda: f64,
    pub horizon: f64,
    pub x0: f64,
    pub resolution: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct CurveRow {
    pub series: &'static str,
    pub u: f64,
    pub value: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Figure1Document {
    pub config: Figure1Config,
    pub rows: Vec<CurveRow>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Figure2Config {
    pub command: &'static str,
    pub which: &'static str,
    pub lambda: f64,
    pub horizon: f64,
    pub num_agents: usize,
    pub resolution: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct TrajectoryLine {
    pub agent: usize,
    pub positions: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct HeatmapGrid {
    pub times: Vec<f64>,
    pub ys: Vec<f64>,
    /// magnitude[i][j] = |u*(times[i], ys[j])|; None inside the undefined band.
    pub magnitude: Vec<Vec<Option<f64>>>,
    pub trajectories: Vec<TrajectoryLine>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Figure2Document {
    pub config: Figure2Config,
    pub grid: HeatmapGrid,
}

#[derive(Debug, Clone, Serialize)]
#[serde(untagged)]
pub enum FigureDocument {
    FixedPointMap(Figure1Document),
    FeedbackHeatmap(Figure2Document),
}

/// Data behind the two figures. `x0` only affects the fixed-point map;
/// `resolution` is the number of subdivisions per axis.
pub fn emit_figure_data(
    which: FigureKind,
    params: &ProblemParams,
    x0: f64,
    resolution: usize,
) -> Result<FigureDocument> {
    if resolution < 2 {
        return Err(Error::InvalidParameter(format!(
            "resolution must be at least 2, got {resolution}"
        )));
    }
    match which {
        FigureKind::FixedPointMap => fixed_point_figure(params, x0, resolution),
        FigureKind::FeedbackHeatmap => heatmap_figure(params, resolution),
    }
}

fn fixed_point_figure(
    params: &ProblemParams,
    x0: f64,
    resolution: usize,
) -> Result<FigureDocument> {
    if !x0.is_finite() {
        return Err(Error::InvalidParameter(format!("non-finite x0 {x0}")));
    }
    let lambda = params.lambda();
    let horizon = params.horizon();
    let us: Vec<f64> = (0..=resolution)
        .map(|j| -1.0 + 2.0 * j as f64 / resolution as f64)
        .collect();
    let mut rows = Vec::with_capacity(2 * us.len() + 2);
    for &u in &us {
        rows.push(CurveRow {
            series: "identity",
            u,
            value: u,
        });
    }
    for &u in &us {
        rows.push(CurveRow {
            series: "response",
            u,
            value: crate::problem::project_control((x0 + horizon * u) / lambda),
        });
    }
    for c in fixed_point_candidates(params, x0)? {
        rows.push(CurveRow {
            series: "fixed_point",
            u: c,
            value: c,
        });
    }
    Ok(FigureDocument::FixedPointMap(Figure1Document {
        config: Figure1Config {
            command: "figure",
            which: "fig1",
            lambda,
            horizon,
            x0,
            resolution,
        },
        rows,
    }))
}

fn heatmap_figure(params: &ProblemParams, resolution: usize) -> Result<FigureDocument> {
    let horizon = params.horizon();
    let half_width = 1.0 + horizon;
    let times: Vec<f64> = (0..=resolution)
        .map(|i| horizon * i as f64 / resolution as f64)
        .collect();
    let ys: Vec<f64> = (0..=resolution)
        .map(|j| -half_width + 2.0 * half_width * j as f64 / resolution as f64)
        .collect();

    let field = crate::field::optimal_feedback(params);
    let mut magnitude = Vec::with_capacity(times.len());
    for &t in &times {
        let mut row = Vec::with_capacity(ys.len());
        for &y in &ys {
            match field.eval(t, y) {
                Ok(u) => row.push(Some(u.abs())),
                Err(Error::UndefinedBand { .. }) => row.push(None),
                Err(e) => return Err(e),
            }
        }
        magnitude.push(row);
    }

    let solution = solve_closed_form(params);
    let grid = params.initial_grid();
    let trajectories = (0..params.num_agents())
        .map(|i| TrajectoryLine {
            agent: i,
            positions: times
                .iter()
                .map(|&t| grid[i] + t * solution.controls.values()[i])
                .collect(),
        })
        .collect();

    Ok(FigureDocument::FeedbackHeatmap(Figure2Document {
        config: Figure2Config {
            command: "figure",
            which: "fig2",
            lambda: params.lambda(),
            horizon,
            num_agents: params.num_agents(),
            resolution,
        },
        grid: HeatmapGrid {
            times,
            ys,
            magnitude,
            trajectories,
        },
    }))
}

impl TableDocument for FigureDocument {
    fn csv_header(&self) -> Vec<&'static str> {
        match self {
            FigureDocument::FixedPointMap(_) => vec!["series", "u", "value"],
            FigureDocument::FeedbackHeatmap(_) => vec!["series", "t", "y", "value"],
        }
    }
    fn csv_records(&self) -> Vec<Vec<String>> {
        match self {
            FigureDocument::FixedPointMap(doc) => doc
                .rows
                .iter()
                .map(|r| vec![r.series.to_string(), fmt(r.u), fmt(r.value)])
                .collect(),
            FigureDocument::FeedbackHeatmap(doc) => {
                let g = &doc.grid;
                let mut records =
                    Vec::with_capacity(g.times.len() * g.ys.len() + g.trajectories.len());
                for (i, &t) in g.times.iter().enumerate() {
                    for (j, &y) in g.ys.iter().enumerate() {
                        records.push(vec![
                            "magnitude".to_string(),
                            fmt(t),
                            fmt(y),
                            fmt_opt(g.magnitude[i][j]),
                        ]);
                    }
                }
                for line in &g.trajectories {
                    for (k, &t) in g.times.iter().enumerate() {
                        let pos = line.positions[k];
                        records.push(vec![
                            format!("trajectory_{:03}", line.agent),
                            fmt(t),
                            fmt(pos),
                            fmt(pos),
                        ]);
                    }
                }
                records
            }
        }
    }
}
