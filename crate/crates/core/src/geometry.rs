//! Periodic interface profiles and their equispaced discretization.
//!
//! A profile is the graph `x2 = F(x1)` of a `d`-periodic trigonometric
//! polynomial. Curves are parameterized by `t in [0, 2pi)` with
//! `x1 = d t / (2 pi)`, so every interface shares the same quadrature nodes
//! `t_l = 2 pi l / M` regardless of the period.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};

/// One Fourier mode `a cos(m theta) + b sin(m theta)`, `theta = 2 pi x1 / d`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Harmonic {
    pub m: u32,
    #[serde(default)]
    pub cos: f64,
    #[serde(default)]
    pub sin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProfileKind {
    /// `(H/2) cos(theta)`
    Cosine { height: f64 },
    /// `pi H (0.4 cos(theta) - 0.2 cos(2 theta) + 0.4 cos(3 theta))`
    MultiHarmonic { height: f64 },
    Flat { level: f64 },
    Custom { harmonics: Vec<Harmonic> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Profile {
    period: f64,
    kind: ProfileKind,
    vertical_offset: f64,
    mean: f64,
    harmonics: Vec<Harmonic>,
}

impl Profile {
    pub fn new(period: f64, kind: ProfileKind, vertical_offset: f64) -> Result<Self> {
        if !(period > 0.0) || !period.is_finite() {
            return Err(Error::Domain(format!("period must be positive, got {period}")));
        }
        let (mean, harmonics) = match &kind {
            ProfileKind::Cosine { height } => (0.0, vec![Harmonic { m: 1, cos: height / 2.0, sin: 0.0 }]),
            ProfileKind::MultiHarmonic { height } => (
                0.0,
                vec![
                    Harmonic { m: 1, cos: 0.4 * PI * height, sin: 0.0 },
                    Harmonic { m: 2, cos: -0.2 * PI * height, sin: 0.0 },
                    Harmonic { m: 3, cos: 0.4 * PI * height, sin: 0.0 },
                ],
            ),
            ProfileKind::Flat { level } => (*level, Vec::new()),
            ProfileKind::Custom { harmonics } => {
                let mut mean = 0.0;
                let mut rest = Vec::new();
                for h in harmonics {
                    if h.m == 0 {
                        mean += h.cos;
                    } else {
                        rest.push(*h);
                    }
                }
                (mean, rest)
            }
        };
        if harmonics.iter().any(|h| !h.cos.is_finite() || !h.sin.is_finite()) || !mean.is_finite() {
            return Err(Error::Domain("profile coefficients must be finite".into()));
        }
        Ok(Self {
            period,
            kind,
            vertical_offset,
            mean: mean + vertical_offset,
            harmonics,
        })
    }

    pub fn flat(period: f64, level: f64) -> Self {
        Self::new(period, ProfileKind::Flat { level }, 0.0).expect("flat profile")
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn kind(&self) -> &ProfileKind {
        &self.kind
    }

    pub fn vertical_offset(&self) -> f64 {
        self.vertical_offset
    }

    /// The same profile translated by `(dx1, dx2)`.
    pub fn translated(&self, dx1: f64, dx2: f64) -> Self {
        let mut out = self.clone();
        let phase = 2.0 * PI * dx1 / self.period;
        out.harmonics = self
            .harmonics
            .iter()
            .map(|h| {
                // a cos(m(theta - p)) + b sin(m(theta - p))
                let (s, c) = (h.m as f64 * phase).sin_cos();
                Harmonic {
                    m: h.m,
                    cos: h.cos * c - h.sin * s,
                    sin: h.cos * s + h.sin * c,
                }
            })
            .collect();
        out.kind = ProfileKind::Custom {
            harmonics: std::iter::once(Harmonic { m: 0, cos: self.mean - self.vertical_offset, sin: 0.0 })
                .chain(out.harmonics.iter().copied())
                .collect(),
        };
        out.vertical_offset += dx2;
        out.mean += dx2;
        out
    }

    /// `(F, F', F'')` with derivatives taken in `x1`.
    pub fn eval(&self, x1: f64) -> (f64, f64, f64) {
        let w = 2.0 * PI / self.period;
        let theta = w * x1;
        let mut f = self.mean;
        let mut df = 0.0;
        let mut ddf = 0.0;
        for h in &self.harmonics {
            let mw = h.m as f64 * w;
            let (s, c) = (h.m as f64 * theta).sin_cos();
            f += h.cos * c + h.sin * s;
            df += mw * (-h.cos * s + h.sin * c);
            ddf -= mw * mw * (h.cos * c + h.sin * s);
        }
        (f, df, ddf)
    }

    pub fn height(&self, x1: f64) -> f64 {
        self.eval(x1).0
    }

    /// Maximum and minimum of `F` over one period.
    pub fn extremes(&self) -> (f64, f64) {
        if self.harmonics.is_empty() {
            return (self.mean, self.mean);
        }
        let n = 2048;
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        let mut best_hi = 0.0;
        let mut best_lo = 0.0;
        for i in 0..n {
            let x = self.period * i as f64 / n as f64;
            let f = self.height(x);
            if f > hi {
                hi = f;
                best_hi = x;
            }
            if f < lo {
                lo = f;
                best_lo = x;
            }
        }
        (self.refine_extremum(best_hi, 1.0), self.refine_extremum(best_lo, -1.0))
    }

    fn refine_extremum(&self, mut x: f64, sign: f64) -> f64 {
        // Newton on F' starting from the best grid point.
        for _ in 0..20 {
            let (_, df, ddf) = self.eval(x);
            if ddf * sign >= 0.0 || ddf == 0.0 {
                break;
            }
            let step = df / ddf;
            x -= step;
            if step.abs() < 1e-15 * self.period {
                break;
            }
        }
        self.height(x)
    }
}

/// Vertical extent `max F_top - min F_bottom` of the layer between two profiles.
pub fn layer_width(top: &Profile, bottom: &Profile) -> f64 {
    top.extremes().0 - bottom.extremes().1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Orientation {
    Up,
    Down,
}

impl Orientation {
    pub fn flipped(self) -> Self {
        match self {
            Orientation::Up => Orientation::Down,
            Orientation::Down => Orientation::Up,
        }
    }
}

/// A profile sampled at `M` equispaced parameter nodes.
#[derive(Debug, Clone)]
pub struct DiscretizedCurve {
    profile: Profile,
    /// Node positions `x(t_l)`.
    pub nodes: Vec<[f64; 2]>,
    /// `x'(t_l)`.
    pub tangent: Vec<[f64; 2]>,
    /// `x''(t_l)`.
    pub second: Vec<[f64; 2]>,
    /// `|x'(t_l)|`.
    pub jacobian: Vec<f64>,
    /// Signed curvature, positive where the graph is convex from above.
    pub curvature: Vec<f64>,
}

impl DiscretizedCurve {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn period(&self) -> f64 {
        self.profile.period
    }

    pub fn profile(&self) -> &Profile {
        &self.profile
    }

    /// Trapezoid weights `(2 pi / M) |x'(t_l)|` for `ds` integrals over one period.
    pub fn weights(&self) -> Vec<f64> {
        let h = 2.0 * PI / self.len() as f64;
        self.jacobian.iter().map(|j| h * j).collect()
    }

    pub fn param(&self, l: usize) -> f64 {
        2.0 * PI * l as f64 / self.len() as f64
    }
}

pub fn sample(profile: &Profile, m: usize) -> Result<DiscretizedCurve> {
    if m % 2 != 0 || m < 8 {
        return Err(Error::Domain(format!("node count must be even and at least 8, got {m}")));
    }
    let d = profile.period;
    let scale = d / (2.0 * PI);
    let mut nodes = Vec::with_capacity(m);
    let mut tangent = Vec::with_capacity(m);
    let mut second = Vec::with_capacity(m);
    let mut jacobian = Vec::with_capacity(m);
    let mut curvature = Vec::with_capacity(m);
    for l in 0..m {
        let x1 = d * l as f64 / m as f64;
        let (f, df, ddf) = profile.eval(x1);
        let xp = [scale, df * scale];
        let xpp = [0.0, ddf * scale * scale];
        let jac = (xp[0] * xp[0] + xp[1] * xp[1]).sqrt();
        nodes.push([x1, f]);
        tangent.push(xp);
        second.push(xpp);
        jacobian.push(jac);
        curvature.push((xp[0] * xpp[1] - xp[1] * xpp[0]) / (jac * jac * jac));
    }
    Ok(DiscretizedCurve {
        profile: profile.clone(),
        nodes,
        tangent,
        second,
        jacobian,
        curvature,
    })
}

/// Unit normals; `Down` points into `x2 < F(x1)`.
pub fn normal(curve: &DiscretizedCurve, orientation: Orientation) -> Vec<[f64; 2]> {
    curve
        .tangent
        .iter()
        .zip(&curve.jacobian)
        .map(|(t, j)| {
            let down = [t[1] / j, -t[0] / j];
            match orientation {
                Orientation::Down => down,
                Orientation::Up => [-down[0], -down[1]],
            }
        })
        .collect()
}
