//! Nyström discretization of quasi-periodic single-layer and adjoint
//! double-layer operators acting on periodic densities.
//!
//! Curves are parameterized by `t in [0, 2pi)`. The self-interaction of the
//! image closest to the target is split as `K1 log(4 sin^2((t-s)/2)) + K2`
//! (Martensen-Kussmaul), with `K1` cut off smoothly away from the diagonal so
//! that it stays periodic in `s`. Every other image, shifted image and
//! cross-interface term is integrated with the trapezoidal rule.

use num_complex::Complex64;
use std::f64::consts::PI;

use crate::densela::CMatrix;
use crate::error::{Error, Result};
use crate::geometry::{normal, sample, DiscretizedCurve, Orientation};
use crate::green::{GreenParams, KernelSample};
use crate::specfun::{bessel_unchecked, window_chi, WindowSpec};

const I: Complex64 = Complex64::new(0.0, 1.0);
const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelKind {
    SingleLayer,
    AdjointDoubleLayer,
}

#[derive(Debug, Clone, Copy)]
pub struct OperatorRequest<'a> {
    pub kernel: KernelKind,
    pub green: &'a GreenParams,
    pub source: &'a DiscretizedCurve,
    pub target: &'a DiscretizedCurve,
    pub target_normals: Option<&'a [[f64; 2]]>,
    pub self_interaction: bool,
}

/// Single-layer and adjoint double-layer matrices for one source/target pair.
#[derive(Debug, Clone)]
pub struct OperatorPair {
    pub single: CMatrix,
    pub adjoint_double: CMatrix,
}

/// First row of the circulant log-kernel weight matrix:
/// `R[p][q] = w[(p - q) mod M]`.
pub fn mk_log_weights(m: usize) -> Result<Vec<f64>> {
    if m < 2 || m % 2 != 0 {
        return Err(Error::Domain(format!("log quadrature needs an even node count, got {m}")));
    }
    let half = m / 2;
    let mf = m as f64;
    Ok((0..m)
        .map(|l| {
            let tau = 2.0 * PI * l as f64 / mf;
            let mut s = 0.0;
            for j in 1..half {
                s += (j as f64 * tau).cos() / j as f64;
            }
            s += (half as f64 * tau).cos() / mf;
            -4.0 * PI / mf * s
        })
        .collect())
}

/// Plateau of the nearest-image cutoff, as a fraction of `pi`. A wide
/// transition keeps the Fourier tail of `K1` short.
const CUTOFF_PLATEAU: f64 = 0.3;

/// Smooth periodic cutoff of the nearest-image log part; equals one for
/// `|tau| <= 0.3 pi` and vanishes with all derivatives at `|tau| = pi`.
#[inline]
fn diagonal_cutoff(tau: f64) -> f64 {
    let spec = WindowSpec::new(CUTOFF_PLATEAU).expect("valid plateau");
    window_chi(tau.abs() / PI, spec).0
}

fn wrap_angle(tau: f64) -> f64 {
    tau - 2.0 * PI * (tau / (2.0 * PI)).round()
}

fn dot(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

/// Minimum vertical distance between two curves over one period.
pub fn vertical_gap(a: &DiscretizedCurve, b: &DiscretizedCurve) -> f64 {
    let (pa, pb) = (a.profile(), b.profile());
    let d = pa.period();
    (0..2048)
        .map(|i| {
            let x = d * i as f64 / 2048.0;
            (pa.height(x) - pb.height(x)).abs()
        })
        .fold(f64::INFINITY, f64::min)
}

pub fn assemble(req: OperatorRequest<'_>) -> Result<CMatrix> {
    let pair = assemble_pair(req.green, req.source, req.target, req.target_normals, req.self_interaction)?;
    Ok(match req.kernel {
        KernelKind::SingleLayer => pair.single,
        KernelKind::AdjointDoubleLayer => pair.adjoint_double,
    })
}

/// Assembles both operators from one pass over the kernel.
///
/// Without target normals the adjoint double-layer block is left at zero.
pub fn assemble_pair(
    green: &GreenParams,
    source: &DiscretizedCurve,
    target: &DiscretizedCurve,
    target_normals: Option<&[[f64; 2]]>,
    self_interaction: bool,
) -> Result<OperatorPair> {
    assemble_pair_with(green, source, target, target_normals, self_interaction, DiagonalTerm::Correct)
}

/// Sign of the curvature term on the adjoint double-layer diagonal.
/// `Flipped` is a deliberate fault used to check that the jump test notices it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DiagonalTerm {
    #[default]
    Correct,
    Flipped,
}

fn assemble_pair_with(
    green: &GreenParams,
    source: &DiscretizedCurve,
    target: &DiscretizedCurve,
    target_normals: Option<&[[f64; 2]]>,
    self_interaction: bool,
    diagonal: DiagonalTerm,
) -> Result<OperatorPair> {
    let (mt, ms) = (target.len(), source.len());
    if (source.period() - green.d).abs() > 1e-12 * green.d || (target.period() - green.d).abs() > 1e-12 * green.d {
        return Err(Error::Shape("curve period differs from the Green function period".into()));
    }
    if let Some(n) = target_normals {
        if n.len() != mt {
            return Err(Error::Shape(format!("{} normals for {} targets", n.len(), mt)));
        }
    }
    if self_interaction {
        if mt != ms || source.nodes != target.nodes {
            return Err(Error::Shape("self interaction needs identical source and target curves".into()));
        }
    } else {
        let gap = vertical_gap(source, target);
        let limit = 2.0 * green.d / ms.max(mt) as f64;
        if gap < limit {
            return Err(Error::Resolution(format!(
                "interfaces {gap:.3e} apart, below the resolvable gap {limit:.3e}"
            )));
        }
    }
    let log_w = if self_interaction { mk_log_weights(ms)? } else { Vec::new() };
    let dt = 2.0 * PI / ms as f64;
    let k = green.k;
    let mut single = CMatrix::zeros(mt, ms);
    let mut adl = CMatrix::zeros(mt, ms);
    for q in 0..ms {
        let y = source.nodes[q];
        let jac = source.jacobian[q];
        for p in 0..mt {
            let x = target.nodes[p];
            let nx = target_normals.map(|n| n[p]);
            let dx = [x[0] - y[0], x[1] - y[1]];
            if self_interaction && p == q {
                let mut s = green.lattice([0.0, 0.0], true)?;
                let w = green.wood_correction([0.0, 0.0]);
                s.value += w.value;
                s.grad[0] += w.grad[0];
                s.grad[1] += w.grad[1];
                let speed = target.jacobian[p];
                let sl_lim = Complex64::new(
                    -EULER_GAMMA / (2.0 * PI) - (k * speed / 2.0).ln() / (2.0 * PI),
                    0.25,
                );
                // K1(t, t) = -|x'| / (4 pi) for the single layer, zero for the double layer
                single[(p, q)] = (dt * (s.value + sl_lim) - log_w[0] / (4.0 * PI)) * jac;
                if let Some(n) = nx {
                    let mut dl_lim = dot(target.second[p], n) / (4.0 * PI * speed * speed);
                    if diagonal == DiagonalTerm::Flipped {
                        dl_lim = -dl_lim;
                    }
                    adl[(p, q)] = dt * (s.grad[0] * n[0] + s.grad[1] * n[1] + dl_lim) * jac;
                }
                continue;
            }
            let phase = Complex64::from_polar(1.0, -green.alpha * dx[0]);
            let kern: KernelSample = green.evaluate(dx)?.scaled(phase * jac);
            let mut sl = dt * kern.value;
            let mut dl = nx.map(|n| dt * (kern.grad[0] * n[0] + kern.grad[1] * n[1]));
            if self_interaction {
                let tau = wrap_angle(target.param(p) - source.param(q));
                let eta = diagonal_cutoff(tau);
                if eta > 0.0 {
                    let n_star = -(dx[0] / green.d).round();
                    let d1 = dx[0] + n_star * green.d;
                    let rho = d1.hypot(dx[1]);
                    let (chi, _) = window_chi(rho / green.a, green.window);
                    let b = bessel_unchecked(k * rho);
                    let common = Complex64::from_polar(eta * chi * jac, -green.alpha * d1);
                    let log_val = (4.0 * (0.5 * tau).sin().powi(2)).ln();
                    let rw = log_w[(p + ms - q) % ms];
                    let k1_sl = common * (-b.j0 / (4.0 * PI));
                    sl += k1_sl * (rw - dt * log_val);
                    if let (Some(n), Some(v)) = (nx, dl.as_mut()) {
                        let proj = (d1 * n[0] + dx[1] * n[1]) / rho;
                        let k1_dl = common * (k * b.j1 * proj / (4.0 * PI));
                        *v += k1_dl * (rw - dt * log_val);
                    }
                }
            }
            single[(p, q)] = sl;
            if let Some(v) = dl {
                adl[(p, q)] = v;
            }
        }
    }
    Ok(OperatorPair {
        single,
        adjoint_double: adl,
    })
}

/// Trigonometric interpolation of periodic nodal values onto `m_new` nodes.
pub fn resample_periodic(values: &[Complex64], m_new: usize) -> Vec<Complex64> {
    let m = values.len();
    let half = m / 2;
    let coeffs: Vec<(i64, Complex64)> = (0..m)
        .map(|j| {
            let r = if j <= half { j as i64 } else { j as i64 - m as i64 };
            let c: Complex64 = values
                .iter()
                .enumerate()
                .map(|(q, v)| v * Complex64::from_polar(1.0, -2.0 * PI * (r * q as i64) as f64 / m as f64))
                .sum::<Complex64>()
                / m as f64;
            // split the Nyquist mode evenly between +-M/2
            if m % 2 == 0 && j == half {
                (r, c * 0.5)
            } else {
                (r, c)
            }
        })
        .collect();
    let mut extra = Vec::new();
    if m % 2 == 0 {
        extra.push((-(half as i64), coeffs[half].1));
    }
    (0..m_new)
        .map(|l| {
            let t = 2.0 * PI * l as f64 / m_new as f64;
            coeffs
                .iter()
                .chain(extra.iter())
                .map(|(r, c)| c * Complex64::from_polar(1.0, *r as f64 * t))
                .sum()
        })
        .collect()
}

/// Single-layer potential `u(z) = int G(z - y) phi(y) ds(y)` and its gradient,
/// for a periodic density `phi~ = phi e^{-i alpha y1}` given at the curve nodes.
/// Plain trapezoid; accurate for targets a few mesh widths from the curve.
pub fn single_layer_potential(green: &GreenParams, curve: &DiscretizedCurve, density: &[Complex64], z: [f64; 2]) -> Result<KernelSample> {
    let dt = 2.0 * PI / curve.len() as f64;
    let mut acc = KernelSample {
        value: ZERO,
        grad: [ZERO, ZERO],
    };
    for (q, y) in curve.nodes.iter().enumerate() {
        let w = density[q] * Complex64::from_polar(dt * curve.jacobian[q], green.alpha * y[0]);
        let s = green.evaluate([z[0] - y[0], z[1] - y[1]])?.scaled(w);
        acc.value += s.value;
        acc.grad[0] += s.grad[0];
        acc.grad[1] += s.grad[1];
    }
    Ok(acc)
}

/// Single-layer potential near the curve. The nearest image is integrated on a
/// grid refined by `refine`, with the density interpolated trigonometrically,
/// and the remainder on the curve nodes.
pub fn single_layer_potential_near(
    green: &GreenParams,
    curve: &DiscretizedCurve,
    density: &[Complex64],
    z: [f64; 2],
    refine: usize,
) -> Result<KernelSample> {
    let m = curve.len();
    let d = green.d;
    let nearest = |y: [f64; 2]| -> (f64, f64, [f64; 2]) {
        let dx = [z[0] - y[0], z[1] - y[1]];
        let n_star = -(dx[0] / d).round();
        let tau = wrap_angle(2.0 * PI * (dx[0] + n_star * d) / d);
        (n_star, tau, [dx[0] + n_star * d, dx[1]])
    };
    let image = |n_star: f64, x: [f64; 2]| -> Result<KernelSample> {
        let r = x[0].hypot(x[1]);
        if r == 0.0 {
            return Err(Error::SingularPoint { image: n_star as i64 });
        }
        let (chi, dchi) = window_chi(r / green.a, green.window);
        let b = bessel_unchecked(green.k * r);
        let g = 0.25 * I * b.h0();
        let radial = -0.25 * I * green.k * b.h1() * chi + g * (dchi / green.a);
        let c = Complex64::from_polar(1.0, -green.alpha * n_star * d);
        Ok(KernelSample {
            value: c * g * chi,
            grad: [c * radial * x[0] / r, c * radial * x[1] / r],
        })
    };
    let mut acc = single_layer_potential(green, curve, density, z)?;
    let dt = 2.0 * PI / m as f64;
    for (q, y) in curve.nodes.iter().enumerate() {
        let (n_star, tau, x) = nearest(*y);
        let eta = diagonal_cutoff(tau);
        if eta == 0.0 {
            continue;
        }
        let w = density[q] * Complex64::from_polar(dt * curve.jacobian[q] * eta, green.alpha * y[0]);
        let s = image(n_star, x)?.scaled(w);
        acc.value -= s.value;
        acc.grad[0] -= s.grad[0];
        acc.grad[1] -= s.grad[1];
    }
    let mf = m * refine;
    let fine = sample(curve.profile(), mf)?;
    let dens = resample_periodic(density, mf);
    let dtf = 2.0 * PI / mf as f64;
    for (q, y) in fine.nodes.iter().enumerate() {
        let (n_star, tau, x) = nearest(*y);
        let eta = diagonal_cutoff(tau);
        if eta == 0.0 {
            continue;
        }
        let w = dens[q] * Complex64::from_polar(dtf * fine.jacobian[q] * eta, green.alpha * y[0]);
        let s = image(n_star, x)?.scaled(w);
        acc.value += s.value;
        acc.grad[0] += s.grad[0];
        acc.grad[1] += s.grad[1];
    }
    Ok(acc)
}

/// Outcome of a jump-relation check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JumpDefect {
    /// `max |(limit along +n) - (limit along -n) + phi|`
    pub jump: f64,
    /// `max |limit along +n - (-phi/2 + K^T phi)|` and the mirror on the other side.
    pub one_sided: f64,
}

/// Checks `lim grad SL[phi](x +- eps n) . n = -+ phi/2 + K^T phi` at a subset of
/// nodes by Richardson extrapolation over `eps in {1, 1/2, 1/4} 1e-3 d`.
///
/// The normal is the Down orientation; `density` is the periodic density at
/// the curve nodes. Defects are relative to `max |phi|`.
pub fn jump_relation_check(
    curve: &DiscretizedCurve,
    green: &GreenParams,
    density: &[Complex64],
    targets: &[usize],
) -> Result<JumpDefect> {
    jump_relation_check_with(curve, green, density, targets, DiagonalTerm::Correct)
}

pub fn jump_relation_check_with(
    curve: &DiscretizedCurve,
    green: &GreenParams,
    density: &[Complex64],
    targets: &[usize],
    diagonal: DiagonalTerm,
) -> Result<JumpDefect> {
    let n = normal(curve, Orientation::Down);
    let pair = assemble_pair_with(green, curve, curve, Some(&n), true, diagonal)?;
    let kt = pair.adjoint_double.mul_vec(density);
    let scale = density.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let eps0 = 1e-3 * green.d;
    // fine spacing should stay well below the smallest offset
    let speed = curve.jacobian.iter().cloned().fold(0.0, f64::max);
    let mut refine = 1;
    while 2.0 * PI * speed / (curve.len() * refine) as f64 > 0.25 * eps0 / 4.0 {
        refine *= 2;
    }
    let (mut jump, mut one_sided) = (0.0f64, 0.0f64);
    for &p in targets {
        let x = curve.nodes[p];
        let np = n[p];
        let limit = |side: f64| -> Result<Complex64> {
            let mut f = [ZERO; 3];
            for (i, e) in [eps0, eps0 / 2.0, eps0 / 4.0].iter().enumerate() {
                let z = [x[0] + side * e * np[0], x[1] + side * e * np[1]];
                let s = single_layer_potential_near(green, curve, density, z, refine)?;
                // back to the periodic representation at the foot point
                f[i] = (s.grad[0] * np[0] + s.grad[1] * np[1]) * Complex64::from_polar(1.0, -green.alpha * x[0]);
            }
            Ok((8.0 * f[2] - 6.0 * f[1] + f[0]) / 3.0)
        };
        let plus = limit(1.0)?;
        let minus = limit(-1.0)?;
        jump = jump.max((plus - minus + density[p]).norm());
        one_sided = one_sided
            .max((plus - (kt[p] - 0.5 * density[p])).norm())
            .max((minus - (kt[p] + 0.5 * density[p])).norm());
    }
    Ok(JumpDefect {
        jump: jump / scale,
        one_sided: one_sided / scale,
    })
}
