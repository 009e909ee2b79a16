//! Experiment drivers: single solves, parameter sweeps and shipped tables.

use std::time::Instant;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::config::{Axis, RunConfig, SCHEMA_VERSION};
use crate::ddm::{build_rhs, schur_sweep, IncidentWave, Stack, StackState};
use crate::densela::CVector;
use crate::error::{Error, Result};
use crate::green::{GreenMode, ModeClass};
use crate::post::{energy_defect, evaluate_field, layer_densities, rayleigh_tables, RayleighRoute, RayleighTable};

pub const INCIDENT_CONVENTION: &str = "u_inc(x) = exp(i (alpha x1 - beta x2)), beta > 0";

/// A solved stack with its post-processing inputs.
pub struct Solved {
    pub stack: Stack,
    pub state: StackState,
    pub densities: Vec<Option<CVector>>,
    pub incident: IncidentWave,
    pub up: RayleighTable,
    pub down: RayleighTable,
    pub eps_en: f64,
    pub timings: Timings,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub build_s: f64,
    pub sweep_s: f64,
    pub post_s: f64,
    pub total_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolvedLayer {
    pub k: f64,
    pub gamma: f64,
    pub green: GreenMode,
    /// Window cutoff radius actually used.
    pub window_radius: f64,
    pub wood_orders: Vec<i64>,
    pub c_r: Vec<(i64, Complex64)>,
    pub propagating_orders: usize,
    pub condition: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolvedIncident {
    pub alpha: f64,
    pub beta: f64,
    pub amplitude: Complex64,
    pub convention: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Resolved {
    pub eta: f64,
    pub c1: f64,
    pub wood_tol: f64,
    pub rayleigh_route: RayleighRoute,
    pub line_offset: f64,
    pub incident: ResolvedIncident,
    pub layers: Vec<ResolvedLayer>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RayleighRow {
    pub r: i64,
    pub alpha: f64,
    pub beta: Complex64,
    pub class: ModeClass,
    pub coefficient: Option<Complex64>,
    /// Share of the incident energy flux carried by this order.
    pub energy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RayleighOut {
    pub up: Vec<RayleighRow>,
    pub down: Vec<RayleighRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub stage_conditions: Vec<f64>,
    pub alerts: Vec<usize>,
    pub cache_entries: usize,
    pub peak_entries: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldRow {
    pub point: [f64; 2],
    pub layer: Option<usize>,
    pub value: Option<Complex64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobinRow {
    pub interface: usize,
    pub upper: Vec<Complex64>,
    pub lower: Vec<Complex64>,
}

/// Deterministic result record; timings are kept apart.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub schema_version: u32,
    pub config: RunConfig,
    pub resolved: Resolved,
    pub rayleigh: RayleighOut,
    pub eps_en: f64,
    /// `|C_0 - C_0^ref| / |C_0^ref|` for the reflected field, given a reference.
    pub eps1: Option<f64>,
    pub eps1_abs: Option<f64>,
    pub diagnostics: Diagnostics,
    #[serde(default)]
    pub field: Vec<FieldRow>,
    #[serde(default)]
    pub robin: Option<Vec<RobinRow>>,
}

impl ResultRecord {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::config(format!("<reference>:{}:{}", e.line(), e.column()), e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("result serializes")
    }

    pub fn reflected(&self, r: i64) -> Option<Complex64> {
        self.rayleigh.up.iter().find(|e| e.r == r).and_then(|e| e.coefficient)
    }
}

/// Builds, sweeps and post-processes one configuration.
pub fn solve_config(cfg: &RunConfig) -> Result<Solved> {
    let t0 = Instant::now();
    let inputs = cfg.stack_inputs()?;
    let retain = !cfg.outputs.field_points.is_empty();
    let stack = Stack::build(
        cfg.period,
        inputs.alpha,
        &inputs.layers,
        &inputs.profiles,
        cfg.m,
        inputs.impedance,
        &inputs.choices,
        retain,
    )?;
    let t1 = Instant::now();
    let rhs = build_rhs(&stack, &inputs.incident)?;
    let state = schur_sweep(&stack, &rhs)?;
    let t2 = Instant::now();
    let densities = layer_densities(&stack, &state)?;
    let (up, down) = rayleigh_tables(&stack, &densities, cfg.outputs.rayleigh_route, cfg.outputs.line_offset * cfg.period)?;
    let eps_en = energy_defect(&up, &down, inputs.incident.beta);
    let t3 = Instant::now();
    let timings = Timings {
        build_s: (t1 - t0).as_secs_f64(),
        sweep_s: (t2 - t1).as_secs_f64(),
        post_s: (t3 - t2).as_secs_f64(),
        total_s: (t3 - t0).as_secs_f64(),
    };
    Ok(Solved {
        stack,
        state,
        densities,
        incident: inputs.incident,
        up,
        down,
        eps_en,
        timings,
    })
}

fn rows(table: &RayleighTable, norm: f64) -> Vec<RayleighRow> {
    table
        .entries
        .iter()
        .map(|e| RayleighRow {
            r: e.r,
            alpha: e.alpha,
            beta: e.beta,
            class: e.class,
            coefficient: e.coefficient,
            energy: if e.beta.im == 0.0 {
                table.gamma * e.beta.re * e.coefficient.map_or(0.0, |c| c.norm_sqr()) / norm
            } else {
                0.0
            },
        })
        .collect()
}

/// Runs one configuration and assembles its result record.
pub fn run_solve(cfg: &RunConfig, reference: Option<&ResultRecord>) -> Result<(ResultRecord, Timings)> {
    let t0 = Instant::now();
    let solved = solve_config(cfg)?;
    let s = &solved.stack;
    let resolved = Resolved {
        eta: s.impedance.eta(),
        c1: cfg.window.c1,
        wood_tol: cfg.wood.tol,
        rayleigh_route: cfg.outputs.rayleigh_route,
        line_offset: cfg.outputs.line_offset * cfg.period,
        incident: ResolvedIncident {
            alpha: solved.incident.alpha,
            beta: solved.incident.beta,
            amplitude: solved.incident.amplitude,
            convention: INCIDENT_CONVENTION.into(),
        },
        layers: s
            .blocks
            .iter()
            .zip(&s.layers)
            .map(|(b, l)| ResolvedLayer {
                k: l.k,
                gamma: l.gamma,
                green: b.green.mode,
                window_radius: b.green.a,
                wood_orders: b.green.modes().wood_set(),
                c_r: b.green.c_r.clone(),
                propagating_orders: b.green.modes().propagating().count(),
                condition: b.condition,
            })
            .collect(),
    };
    let norm = solved.up.gamma * solved.incident.beta;
    let c0 = solved.up.coefficient(0);
    let (eps1, eps1_abs) = match (reference.and_then(|r| r.reflected(0)), c0) {
        (Some(r), Some(c)) => {
            let abs = (c - r).norm();
            (Some(abs / r.norm().max(f64::MIN_POSITIVE)), Some(abs))
        }
        (Some(_), None) => return Err(Error::Domain("reflected order 0 was not resolved".into())),
        _ => (None, None),
    };
    let field = if cfg.outputs.field_points.is_empty() {
        Vec::new()
    } else {
        evaluate_field(s, &solved.densities, Some(&solved.incident), &cfg.outputs.field_points)?
            .into_iter()
            .map(|f| FieldRow {
                point: f.point,
                layer: f.layer,
                value: f.value,
            })
            .collect()
    };
    let robin = cfg.outputs.include_robin_data.then(|| {
        solved
            .state
            .f
            .iter()
            .enumerate()
            .map(|(i, (a, b))| RobinRow {
                interface: i,
                upper: a.clone(),
                lower: b.clone(),
            })
            .collect()
    });
    let record = ResultRecord {
        schema_version: SCHEMA_VERSION,
        config: cfg.clone(),
        resolved,
        rayleigh: RayleighOut {
            up: rows(&solved.up, norm),
            down: rows(&solved.down, norm),
        },
        eps_en: solved.eps_en,
        eps1,
        eps1_abs,
        diagnostics: Diagnostics {
            stage_conditions: solved.state.stage_conditions.clone(),
            alerts: solved.state.alerts(),
            cache_entries: solved.state.memory.cache_entries,
            peak_entries: solved.state.memory.peak_entries,
        },
        field,
        robin,
    };
    let mut timings = solved.timings;
    timings.total_s = t0.elapsed().as_secs_f64();
    Ok((record, timings))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: f64,
    pub eps_en: f64,
    pub eps1: Option<f64>,
    pub runtime_s: f64,
    pub max_stage_condition: f64,
}

/// Solves the configuration once per axis value. Values must be ascending.
pub fn run_sweep(cfg: &RunConfig, axis: Axis, values: &[f64], reference: Option<&ResultRecord>) -> Result<Vec<SweepRow>> {
    if values.is_empty() {
        return Err(Error::config("values", "at least one sweep value is required"));
    }
    if values.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::config("values", format!("sweep values must be strictly ascending, got {values:?}")));
    }
    values
        .iter()
        .map(|&v| {
            let c = cfg.with_axis(axis, v)?;
            let (rec, t) = run_solve(&c, reference)?;
            Ok(SweepRow {
                value: v,
                eps_en: rec.eps_en,
                eps1: rec.eps1,
                runtime_s: t.total_s,
                max_stage_condition: rec.diagnostics.stage_conditions.iter().cloned().fold(0.0, f64::max),
            })
        })
        .collect()
}

pub fn sweep_csv(axis: Axis, rows: &[SweepRow], target: &[f64]) -> String {
    let name = match axis {
        Axis::A => "A",
        Axis::M => "M",
        Axis::J => "j",
        Axis::H => "h",
    };
    let mut out = format!("{name},eps_en,eps1,runtime_s,max_stage_condition");
    if !target.is_empty() {
        out.push_str(",target_eps_en");
    }
    out.push('\n');
    for (i, r) in rows.iter().enumerate() {
        let eps1 = r.eps1.map(|e| format!("{e:.3e}")).unwrap_or_default();
        out.push_str(&format!("{},{:.3e},{},{:.3},{:.1}", r.value, r.eps_en, eps1, r.runtime_s, r.max_stage_condition));
        if let Some(p) = target.get(i) {
            out.push_str(&format!(",{p:.1e}"));
        }
        out.push('\n');
    }
    out
}

/// Configurations shipped with the crate, keyed by name.
pub const TABLES: &[(&str, &str)] = &[
    ("table1", include_str!("../configs/table1.json")),
    ("table2", include_str!("../configs/table2.json")),
    ("table3", include_str!("../configs/table3.json")),
    ("table4", include_str!("../configs/table4.json")),
    ("table5", include_str!("../configs/table5.json")),
    ("table6", include_str!("../configs/table6.json")),
    ("table7", include_str!("../configs/table7.json")),
    ("table8", include_str!("../configs/table8.json")),
    ("flat", include_str!("../configs/flat.json")),
];

pub fn table_config(name: &str) -> Result<RunConfig> {
    let (_, text) = TABLES.iter().find(|(n, _)| *n == name).ok_or_else(|| {
        let names: Vec<&str> = TABLES.iter().map(|t| t.0).collect();
        Error::config("name", format!("unknown table `{name}`; available: {}", names.join(", ")))
    })?;
    RunConfig::from_json(text)
}

pub struct TableRun {
    pub axis: Axis,
    pub rows: Vec<SweepRow>,
    pub target: Vec<f64>,
    pub reference: Option<ResultRecord>,
}

/// Runs a table's ladder, with its reference solve first when requested.
pub fn run_table(cfg: &RunConfig, with_reference: bool) -> Result<TableRun> {
    let ladder = cfg.ladder.as_ref().ok_or_else(|| Error::config("ladder", "configuration has no ladder"))?;
    let reference = match (&ladder.reference, with_reference) {
        (Some(r), true) => Some(run_solve(&cfg.with_reference(r)?, None)?.0),
        _ => None,
    };
    let rows = run_sweep(cfg, ladder.axis, &ladder.values, reference.as_ref())?;
    Ok(TableRun {
        axis: ladder.axis,
        rows,
        target: ladder.target_eps_en.clone(),
        reference,
    })
}
