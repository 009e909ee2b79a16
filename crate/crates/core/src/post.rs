//! Post-processing of solved Robin data: traces, layer densities, Rayleigh
//! coefficients, the energy defect and field values.

use num_complex::Complex64;
use serde::Serialize;
use std::f64::consts::PI;

use crate::bie::{single_layer_potential, single_layer_potential_near};
use crate::ddm::{IncidentWave, Stack, StackState};
use crate::densela::CVector;
use crate::error::{Error, Result};
use crate::geometry::DiscretizedCurve;
use crate::green::{spectral_coefficient, GreenParams, ModeClass};
use crate::rtr::Side;

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Traces `u` and `gamma d_n u` on a boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct Traces {
    pub u: CVector,
    pub flux: CVector,
}

/// `u = (Sf - f) / (2 i eta)`, `gamma d_n u = (Sf + f) / 2`.
pub fn traces_from_robin(f: &[Complex64], sf: &[Complex64], eta: f64) -> Result<Traces> {
    if f.len() != sf.len() {
        return Err(Error::Shape(format!("Robin data of lengths {} and {}", f.len(), sf.len())));
    }
    if !(eta > 0.0) {
        return Err(Error::Domain(format!("eta must be positive, got {eta}")));
    }
    let c = 1.0 / (2.0 * I * eta);
    Ok(Traces {
        u: f.iter().zip(sf).map(|(a, b)| (b - a) * c).collect(),
        flux: f.iter().zip(sf).map(|(a, b)| (b + a) * 0.5).collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RayleighEntry {
    pub r: i64,
    pub alpha: f64,
    pub beta: Complex64,
    pub class: ModeClass,
    /// `None` when the order could not be resolved.
    pub coefficient: Option<Complex64>,
}

/// Rayleigh coefficients of the reflected (`Top`) or transmitted (`Bottom`) field.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RayleighTable {
    pub side: Side,
    /// Material coefficient of the layer, used for flux weights.
    pub gamma: f64,
    pub entries: Vec<RayleighEntry>,
}

impl RayleighTable {
    pub fn get(&self, r: i64) -> Option<&RayleighEntry> {
        self.entries.iter().find(|e| e.r == r)
    }

    pub fn coefficient(&self, r: i64) -> Option<Complex64> {
        self.get(r).and_then(|e| e.coefficient)
    }

    /// `sum gamma beta_r |C_r|^2` over radiating orders.
    pub fn flux(&self) -> f64 {
        self.entries
            .iter()
            .filter(|e| e.beta.im == 0.0)
            .map(|e| self.gamma * e.beta.re * e.coefficient.map_or(0.0, |c| c.norm_sqr()))
            .sum()
    }

    /// Largest coefficient difference over orders of the given classes present in both tables.
    pub fn max_difference(&self, other: &RayleighTable, classes: &[ModeClass]) -> f64 {
        self.entries
            .iter()
            .filter(|e| classes.contains(&e.class))
            .filter_map(|e| Some((e.coefficient? - other.coefficient(e.r)?).norm()))
            .fold(0.0, f64::max)
    }
}

fn vertical_sign(side: Side) -> f64 {
    match side {
        Side::Top => 1.0,
        Side::Bottom => -1.0,
    }
}

fn check_side(side: Side, green: &GreenParams) -> Result<()> {
    let h = green.shift();
    if h * vertical_sign(side) < 0.0 {
        return Err(Error::Domain(format!("shift h = {h} radiates away from the {side:?} layer")));
    }
    Ok(())
}

/// Coefficients from the spectral form of the kernel:
/// `C_r = kappa_r int e^{-i alpha_r y1 -+ i beta_r y2} phi(y) ds(y)`.
pub fn rayleigh_from_density(
    side: Side,
    curve: &DiscretizedCurve,
    density: &[Complex64],
    green: &GreenParams,
    gamma: f64,
) -> Result<RayleighTable> {
    if density.len() != curve.len() {
        return Err(Error::Shape(format!("{} density values for {} nodes", density.len(), curve.len())));
    }
    check_side(side, green)?;
    let s = vertical_sign(side);
    let w = curve.weights();
    let step = 2.0 * PI / green.d;
    let entries = green
        .modes()
        .modes()
        .iter()
        .map(|m| {
            let kappa = spectral_coefficient(green, m.r);
            let coefficient = kappa.map(|kappa| {
                let moment: Complex64 = curve
                    .nodes
                    .iter()
                    .zip(density)
                    .zip(&w)
                    .map(|((y, phi), wq)| {
                        // the periodic density already carries e^{-i alpha y1}
                        phi * wq * (-I * (step * m.r as f64 * y[0] + s * m.beta * y[1])).exp()
                    })
                    .sum();
                kappa * moment
            });
            RayleighEntry {
                r: m.r,
                alpha: m.alpha,
                beta: m.beta,
                class: m.class,
                coefficient,
            }
        })
        .collect();
    Ok(RayleighTable { side, gamma, entries })
}

/// Minimum distance between the extraction line and the interface, in periods.
pub const LINE_OFFSET_MIN: f64 = 0.25;

/// Coefficients from the discrete Fourier transform of the field sampled on a
/// horizontal line `offset` beyond the interface.
pub fn rayleigh_from_line_fft(
    side: Side,
    curve: &DiscretizedCurve,
    density: &[Complex64],
    green: &GreenParams,
    gamma: f64,
    offset: f64,
) -> Result<RayleighTable> {
    if offset < LINE_OFFSET_MIN * green.d {
        return Err(Error::Domain(format!(
            "extraction line offset {offset} is closer than {} periods to the interface",
            LINE_OFFSET_MIN
        )));
    }
    if density.len() != curve.len() {
        return Err(Error::Shape(format!("{} density values for {} nodes", density.len(), curve.len())));
    }
    let (hi, lo) = curve.profile().extremes();
    let s = vertical_sign(side);
    let level = match side {
        Side::Top => hi + offset,
        Side::Bottom => lo - offset,
    };
    let m = curve.len();
    let d = green.d;
    let samples: Vec<Complex64> = (0..m)
        .map(|l| {
            let x1 = d * l as f64 / m as f64;
            single_layer_potential(green, curve, density, [x1, level])
                .map(|v| v.value * Complex64::from_polar(1.0, -green.alpha * x1))
        })
        .collect::<Result<_>>()?;
    let half = (m / 2) as i64;
    let entries = green
        .modes()
        .modes()
        .iter()
        .map(|mode| {
            let resolvable = mode.r > -half && mode.r < half;
            let decay = (I * s * mode.beta * level).exp();
            let coefficient = (resolvable && decay.norm() >= 1e-12).then(|| {
                let c: Complex64 = samples
                    .iter()
                    .enumerate()
                    .map(|(l, v)| v * Complex64::from_polar(1.0, -2.0 * PI * (mode.r * l as i64) as f64 / m as f64))
                    .sum();
                c / (m as f64) / decay
            });
            RayleighEntry {
                r: mode.r,
                alpha: mode.alpha,
                beta: mode.beta,
                class: mode.class,
                coefficient,
            }
        })
        .collect();
    Ok(RayleighTable { side, gamma, entries })
}

/// `| (flux_up + flux_down) / (gamma_0 beta_0) - 1 |` for unit-amplitude incidence.
pub fn energy_defect(up: &RayleighTable, down: &RayleighTable, beta0: f64) -> f64 {
    ((up.flux() + down.flux()) / (up.gamma * beta0) - 1.0).abs()
}

/// Single-layer densities of every layer; `None` for bounded layers whose
/// factorization was released.
pub fn layer_densities(stack: &Stack, state: &StackState) -> Result<Vec<Option<CVector>>> {
    let n = stack.interfaces() - 1;
    let mut out = Vec::with_capacity(n + 2);
    for (j, block) in stack.blocks.iter().enumerate() {
        let g: CVector = if j == 0 {
            state.f[0].0.clone()
        } else if j == n + 1 {
            state.f[n].1.clone()
        } else {
            state.f[j - 1].1.iter().chain(&state.f[j].0).copied().collect()
        };
        out.push(if block.has_factors() { Some(block.density(&g)?) } else { None });
    }
    Ok(out)
}

/// Field value at one point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FieldValue {
    pub point: [f64; 2],
    /// Layer index, `None` when the point is too close to an interface.
    pub layer: Option<usize>,
    pub value: Option<Complex64>,
}

fn distance_to_curve(curve: &DiscretizedCurve, z: [f64; 2]) -> f64 {
    let p = curve.profile();
    let d = p.period();
    let n = 1024;
    let x0 = z[0] - d * (z[0] / d).floor();
    (0..n)
        .map(|i| {
            let x1 = x0 + d * (i as f64 / n as f64 - 0.5);
            (x1 - x0).hypot(p.height(x1) - z[1])
        })
        .fold(f64::INFINITY, f64::min)
}

/// Layer containing `z`, or `None` when it lies within `2 d / M` of an interface.
pub fn locate(stack: &Stack, z: [f64; 2]) -> Option<usize> {
    let guard = 2.0 * stack.d / stack.nodes() as f64;
    if stack.curves.iter().any(|c| distance_to_curve(c, z) < guard) {
        return None;
    }
    let below = stack
        .curves
        .iter()
        .take_while(|c| z[1] < c.profile().height(z[0]))
        .count();
    Some(below)
}

/// Scattered field of `layer` at `z` from its densities. With `refine` the
/// nearest image of each interface is integrated on a refined grid, which
/// keeps the value accurate close to the interfaces.
pub fn layer_field(stack: &Stack, phi: &[Complex64], layer: usize, z: [f64; 2], refine: Option<usize>) -> Result<Complex64> {
    let n = stack.interfaces() - 1;
    let m = stack.nodes();
    let green = &stack.blocks[layer].green;
    let pot = |curve: &DiscretizedCurve, dens: &[Complex64]| -> Result<Complex64> {
        Ok(match refine {
            None => single_layer_potential(green, curve, dens, z)?.value,
            Some(f) => single_layer_potential_near(green, curve, dens, z, f)?.value,
        })
    };
    let expected = if layer == 0 || layer == n + 1 { m } else { 2 * m };
    if phi.len() != expected {
        return Err(Error::Shape(format!("{} density values for layer {layer}", phi.len())));
    }
    if layer == 0 {
        pot(&stack.curves[0], phi)
    } else if layer == n + 1 {
        pot(&stack.curves[n], phi)
    } else {
        Ok(pot(&stack.curves[layer - 1], &phi[..m])? + pot(&stack.curves[layer], &phi[m..])?)
    }
}

/// Scattered field from the layer densities, plus the incident wave in the
/// top layer when `incident` is given.
pub fn evaluate_field(
    stack: &Stack,
    densities: &[Option<CVector>],
    incident: Option<&IncidentWave>,
    points: &[[f64; 2]],
) -> Result<Vec<FieldValue>> {
    points
        .iter()
        .map(|&z| {
            let Some(layer) = locate(stack, z) else {
                return Ok(FieldValue { point: z, layer: None, value: None });
            };
            let Some(phi) = densities[layer].as_ref() else {
                return Ok(FieldValue { point: z, layer: Some(layer), value: None });
            };
            let mut u = layer_field(stack, phi, layer, z, None)?;
            if layer == 0 {
                if let Some(inc) = incident {
                    u += inc.value(z);
                }
            }
            Ok(FieldValue {
                point: z,
                layer: Some(layer),
                value: Some(u),
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RayleighRoute {
    LineFft,
    #[default]
    Density,
}

/// Rayleigh tables of the reflected and transmitted fields.
pub fn rayleigh_tables(
    stack: &Stack,
    densities: &[Option<CVector>],
    route: RayleighRoute,
    offset: f64,
) -> Result<(RayleighTable, RayleighTable)> {
    let n = stack.interfaces() - 1;
    let missing = || Error::Shape("semi-infinite densities are always retained".into());
    let top = densities[0].as_ref().ok_or_else(missing)?;
    let bot = densities[n + 1].as_ref().ok_or_else(missing)?;
    let (gt, gb) = (&stack.blocks[0].green, &stack.blocks[n + 1].green);
    let (ct, cb) = (&stack.curves[0], &stack.curves[n]);
    let (yt, yb) = (stack.layers[0].gamma, stack.layers[n + 1].gamma);
    Ok(match route {
        RayleighRoute::LineFft => (
            rayleigh_from_line_fft(Side::Top, ct, top, gt, yt, offset)?,
            rayleigh_from_line_fft(Side::Bottom, cb, bot, gb, yb, offset)?,
        ),
        RayleighRoute::Density => (
            rayleigh_from_density(Side::Top, ct, top, gt, yt)?,
            rayleigh_from_density(Side::Bottom, cb, bot, gb, yb)?,
        ),
    })
}
