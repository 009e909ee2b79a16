//! Run configuration: a versioned JSON document describing one stack.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::ddm::{IncidentWave, LayerSpec};
use crate::error::{Error, Result};
use crate::geometry::{Profile, ProfileKind};
use crate::post::RayleighRoute;
use crate::rtr::{GreenChoice, ImpedanceSpec, ModeOverride};
use crate::specfun::WindowSpec;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    #[serde(default = "default_dimension")]
    pub dimension: u32,
    #[serde(default)]
    pub name: Option<String>,
    pub period: f64,
    #[serde(default)]
    pub incidence: Incidence,
    pub layers: Vec<LayerConfig>,
    pub interfaces: Vec<InterfaceConfig>,
    /// Nodes per interface.
    pub m: usize,
    #[serde(default = "default_eta")]
    pub eta: f64,
    pub window: WindowConfig,
    #[serde(default)]
    pub wood: WoodConfig,
    #[serde(default)]
    pub outputs: OutputConfig,
    /// Parameter ladder run by `table`.
    #[serde(default)]
    pub ladder: Option<Ladder>,
}

fn default_dimension() -> u32 {
    2
}

fn default_eta() -> f64 {
    1.0
}

fn default_gamma() -> f64 {
    1.0
}

fn default_c1() -> f64 {
    WindowSpec::default().c1()
}

fn default_wood_tol() -> f64 {
    0.05
}

fn default_shifts() -> usize {
    5
}

fn default_line_offset() -> f64 {
    0.3
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Incidence {
    /// Angle from the downward vertical, radians.
    Angle(f64),
    Alpha(f64),
}

impl Default for Incidence {
    fn default() -> Self {
        Incidence::Angle(0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerConfig {
    pub k: f64,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default)]
    pub mode: ModeOverride,
    /// Shift `h`; automatic when absent.
    #[serde(default)]
    pub h: Option<f64>,
    /// Overrides `wood.shifts`.
    #[serde(default)]
    pub shifts: Option<usize>,
    /// Overrides `window.a`, in `window.unit`.
    #[serde(default)]
    pub a: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InterfaceConfig {
    pub profile: ProfileKind,
    #[serde(default)]
    pub offset: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowUnit {
    /// `a` is the cutoff radius itself.
    #[default]
    Length,
    /// `a` counts periods: the radius is `a * period`.
    Period,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowConfig {
    pub a: f64,
    #[serde(default = "default_c1")]
    pub c1: f64,
    #[serde(default)]
    pub unit: WindowUnit,
}

impl WindowConfig {
    pub fn radius(&self, a: f64, period: f64) -> f64 {
        match self.unit {
            WindowUnit::Length => a,
            WindowUnit::Period => a * period,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WoodConfig {
    #[serde(default = "default_wood_tol")]
    pub tol: f64,
    #[serde(default = "default_shifts")]
    pub shifts: usize,
}

impl Default for WoodConfig {
    fn default() -> Self {
        Self {
            tol: default_wood_tol(),
            shifts: default_shifts(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default)]
    pub rayleigh_route: RayleighRoute,
    /// Distance of the sampling lines from the profile extremes, in periods.
    #[serde(default = "default_line_offset")]
    pub line_offset: f64,
    /// Points at which the total field is reported.
    #[serde(default)]
    pub field_points: Vec<[f64; 2]>,
    #[serde(default)]
    pub include_robin_data: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            rayleigh_route: RayleighRoute::default(),
            line_offset: default_line_offset(),
            field_points: Vec::new(),
            include_robin_data: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    #[serde(rename = "A")]
    A,
    #[serde(rename = "M")]
    M,
    J,
    H,
}

impl std::str::FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "A" | "a" => Ok(Axis::A),
            "M" | "m" => Ok(Axis::M),
            "j" | "J" | "j_shifts" => Ok(Axis::J),
            "h" | "H" => Ok(Axis::H),
            _ => Err(Error::config("axis", format!("unknown sweep axis `{s}` (expected A, M, j or h)"))),
        }
    }
}

/// Overrides applied to produce the reference run of a ladder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceRun {
    #[serde(default)]
    pub a: Option<f64>,
    #[serde(default)]
    pub m: Option<usize>,
    #[serde(default)]
    pub shifts: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Ladder {
    pub axis: Axis,
    pub values: Vec<f64>,
    /// Published energy defects for the same rows.
    #[serde(default)]
    pub target_eps_en: Vec<f64>,
    #[serde(default)]
    pub reference: Option<ReferenceRun>,
}

/// Inputs of `Stack::build` derived from a configuration.
#[derive(Debug, Clone)]
pub struct StackInputs {
    pub layers: Vec<LayerSpec>,
    pub profiles: Vec<Profile>,
    pub choices: Vec<GreenChoice>,
    pub impedance: ImpedanceSpec,
    pub incident: IncidentWave,
    pub alpha: f64,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| {
            Error::config(format!("<document>:{}:{}", e.line(), e.column()), e.to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("configuration serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::config(
                "schema_version",
                format!("unsupported schema version {} (expected {SCHEMA_VERSION})", self.schema_version),
            ));
        }
        if self.dimension != 2 {
            return Err(Error::config("dimension", format!("only two-dimensional stacks are supported, got {}", self.dimension)));
        }
        positive("period", self.period)?;
        if self.layers.len() != self.interfaces.len() + 1 {
            return Err(Error::config(
                "layers",
                format!(
                    "{} layers need {} interfaces, but {} interfaces were given",
                    self.layers.len(),
                    self.layers.len().saturating_sub(1),
                    self.interfaces.len()
                ),
            ));
        }
        if self.interfaces.is_empty() {
            return Err(Error::config("interfaces", "at least one interface is required"));
        }
        if self.m < 8 || self.m % 2 != 0 {
            return Err(Error::config("m", format!("node count must be even and at least 8, got {}", self.m)));
        }
        positive("eta", self.eta)?;
        positive("window.a", self.window.a)?;
        if !(self.window.c1 > 0.0 && self.window.c1 < 1.0) {
            return Err(Error::config("window.c1", format!("must lie in (0, 1), got {}", self.window.c1)));
        }
        if !(self.wood.tol >= 0.0 && self.wood.tol.is_finite()) {
            return Err(Error::config("wood.tol", format!("must be nonnegative, got {}", self.wood.tol)));
        }
        if self.wood.shifts == 0 {
            return Err(Error::config("wood.shifts", "at least one shift is required"));
        }
        for (i, l) in self.layers.iter().enumerate() {
            positive(&format!("layers[{i}].k"), l.k)?;
            positive(&format!("layers[{i}].gamma"), l.gamma)?;
            if let Some(a) = l.a {
                positive(&format!("layers[{i}].a"), a)?;
            }
            if l.shifts == Some(0) {
                return Err(Error::config(format!("layers[{i}].shifts"), "at least one shift is required"));
            }
            if let Some(h) = l.h {
                if !(h != 0.0 && h.is_finite()) {
                    return Err(Error::config(format!("layers[{i}].h"), format!("shift must be finite and nonzero, got {h}")));
                }
            }
        }
        let profiles = self.profiles_checked()?;
        for j in 1..profiles.len() {
            let (above, below) = (&profiles[j - 1], &profiles[j]);
            let (gap, at) = (0..2048)
                .map(|i| {
                    let x = self.period * i as f64 / 2048.0;
                    (above.height(x) - below.height(x), x)
                })
                .fold((f64::INFINITY, 0.0), |m, v| if v.0 < m.0 { v } else { m });
            if !(gap > 0.0) {
                return Err(Error::config(
                    format!("interfaces[{j}]"),
                    format!(
                        "interfaces must be ordered top to bottom without touching: interface {j} is {:.6} above interface {} at x1 = {at:.6}",
                        -gap,
                        j - 1
                    ),
                ));
            }
        }
        let k0 = self.layers[0].k;
        let alpha = self.alpha();
        if !(alpha.abs() < k0) {
            return Err(Error::config("incidence", format!("|alpha| = {} must be below k0 = {k0}", alpha.abs())));
        }
        if !(self.outputs.line_offset >= 0.25 && self.outputs.line_offset.is_finite()) {
            return Err(Error::config("outputs.line_offset", format!("must be at least 0.25 periods, got {}", self.outputs.line_offset)));
        }
        if let Some(ladder) = &self.ladder {
            if ladder.values.is_empty() {
                return Err(Error::config("ladder.values", "ladder needs at least one value"));
            }
            if !ladder.target_eps_en.is_empty() && ladder.target_eps_en.len() != ladder.values.len() {
                return Err(Error::config(
                    "ladder.target_eps_en",
                    format!("{} target values for {} ladder rows", ladder.target_eps_en.len(), ladder.values.len()),
                ));
            }
        }
        Ok(())
    }

    fn profiles_checked(&self) -> Result<Vec<Profile>> {
        self.interfaces
            .iter()
            .enumerate()
            .map(|(i, f)| {
                Profile::new(self.period, f.profile.clone(), f.offset).map_err(|e| Error::config(format!("interfaces[{i}]"), e.to_string()))
            })
            .collect()
    }

    pub fn alpha(&self) -> f64 {
        match self.incidence {
            Incidence::Angle(theta) => self.layers[0].k * theta.sin(),
            Incidence::Alpha(a) => a,
        }
    }

    /// Green-function choice of layer `i`.
    pub fn choice(&self, i: usize) -> GreenChoice {
        let l = &self.layers[i];
        let a = self.window.radius(l.a.unwrap_or(self.window.a), self.period);
        GreenChoice {
            a,
            window: WindowSpec::new(self.window.c1).expect("validated"),
            wood_tol: self.wood.tol,
            shifts: l.shifts.unwrap_or(self.wood.shifts),
            h: l.h,
            force: l.mode,
            c_r: None,
        }
    }

    pub fn stack_inputs(&self) -> Result<StackInputs> {
        self.validate()?;
        let alpha = self.alpha();
        let incident = IncidentWave::new(self.layers[0].k, alpha, Complex64::new(1.0, 0.0))?;
        Ok(StackInputs {
            layers: self.layers.iter().map(|l| LayerSpec { k: l.k, gamma: l.gamma }).collect(),
            profiles: self.profiles_checked()?,
            choices: (0..self.layers.len()).map(|i| self.choice(i)).collect(),
            impedance: ImpedanceSpec::new(self.eta)?,
            incident,
            alpha,
        })
    }

    /// Copy with one sweep parameter replaced.
    pub fn with_axis(&self, axis: Axis, value: f64) -> Result<Self> {
        let mut c = self.clone();
        match axis {
            Axis::A => {
                c.window.a = value;
                for l in &mut c.layers {
                    l.a = None;
                }
            }
            Axis::M => {
                if value.fract() != 0.0 || value < 0.0 {
                    return Err(Error::config("values", format!("M must be a whole number, got {value}")));
                }
                c.m = value as usize;
            }
            Axis::J => {
                if value.fract() != 0.0 || value < 1.0 {
                    return Err(Error::config("values", format!("j must be a positive whole number, got {value}")));
                }
                c.wood.shifts = value as usize;
                for l in &mut c.layers {
                    l.shifts = None;
                }
            }
            Axis::H => {
                // semi-infinite layers take +-value; bounded layers keep their shifts
                let n = c.layers.len() - 1;
                c.layers[0].h = Some(value.abs());
                c.layers[n].h = Some(-value.abs());
            }
        }
        c.validate()?;
        Ok(c)
    }

    pub fn with_reference(&self, r: &ReferenceRun) -> Result<Self> {
        let mut c = self.clone();
        if let Some(a) = r.a {
            c = c.with_axis(Axis::A, a)?;
        }
        if let Some(m) = r.m {
            c = c.with_axis(Axis::M, m as f64)?;
        }
        if let Some(j) = r.shifts {
            c = c.with_axis(Axis::J, j as f64)?;
        }
        c.ladder = None;
        Ok(c)
    }
}

fn positive(path: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::config(path, format!("must be positive and finite, got {v}")))
    }
}
