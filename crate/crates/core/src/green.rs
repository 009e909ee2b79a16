//! Free-space, windowed quasi-periodic and shifted windowed quasi-periodic
//! Green functions of the Helmholtz operator, with their spectral series.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::specfun::{bessel_j0j1y0y1, bessel_unchecked, window_chi, WindowSpec};

const I: Complex64 = Complex64::new(0.0, 1.0);
const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Threshold on `|1 - exp(i beta_r h)|` below which a shift is rejected.
pub const FORBIDDEN_TOL: f64 = 1e-6;
/// Pole-proximity threshold, relative to the period.
pub const POLE_TOL: f64 = 1e-10;
/// Guard band of evanescent orders kept on each side of the propagating range.
pub const GUARD_ORDERS: i64 = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeClass {
    Propagating,
    Grazing,
    Evanescent,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Mode {
    pub r: i64,
    pub alpha: f64,
    pub beta: Complex64,
    pub class: ModeClass,
}

/// `beta = (k^2 - a^2)^{1/2}` on the physical branch.
#[inline]
pub fn vertical_wavenumber(k: f64, a: f64) -> Complex64 {
    let disc = k * k - a * a;
    if disc >= 0.0 {
        Complex64::new(disc.sqrt(), 0.0)
    } else {
        Complex64::new(0.0, (-disc).sqrt())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModeTable {
    pub k: f64,
    pub d: f64,
    pub alpha: f64,
    pub wood_tol: f64,
    modes: Vec<Mode>,
}

impl ModeTable {
    pub fn modes(&self) -> &[Mode] {
        &self.modes
    }

    pub fn get(&self, r: i64) -> Option<&Mode> {
        let first = self.modes.first()?.r;
        let idx = r - first;
        if idx < 0 {
            return None;
        }
        self.modes.get(idx as usize)
    }

    /// The grazing orders.
    pub fn wood_set(&self) -> Vec<i64> {
        self.modes
            .iter()
            .filter(|m| m.class == ModeClass::Grazing)
            .map(|m| m.r)
            .collect()
    }

    pub fn propagating(&self) -> impl Iterator<Item = &Mode> {
        self.modes.iter().filter(|m| m.class == ModeClass::Propagating)
    }

    /// Orders with real `beta_r`, grazing ones included.
    pub fn radiating(&self) -> impl Iterator<Item = &Mode> {
        self.modes.iter().filter(|m| m.beta.im == 0.0)
    }
}

pub fn mode_table(k: f64, d: f64, alpha: f64, wood_tol: f64) -> ModeTable {
    let step = 2.0 * PI / d;
    let lo = ((-k - alpha) / step).ceil() as i64 - GUARD_ORDERS;
    let hi = ((k - alpha) / step).floor() as i64 + GUARD_ORDERS;
    let modes = (lo..=hi)
        .map(|r| {
            let a = alpha + step * r as f64;
            let beta = vertical_wavenumber(k, a);
            let class = if beta.norm() <= wood_tol * step {
                ModeClass::Grazing
            } else if beta.im == 0.0 {
                ModeClass::Propagating
            } else {
                ModeClass::Evanescent
            };
            Mode { r, alpha: a, beta, class }
        })
        .collect();
    ModeTable {
        k,
        d,
        alpha,
        wood_tol,
        modes,
    }
}

/// `c_r = i/(2d)` on the Wood set.
pub fn default_cr(modes: &ModeTable) -> Vec<(i64, Complex64)> {
    let c = Complex64::new(0.0, 0.5 / modes.d);
    modes.wood_set().into_iter().map(|r| (r, c)).collect()
}

#[inline]
fn norm2(x: [f64; 2]) -> f64 {
    x[0].hypot(x[1])
}

pub fn free_green(k: f64, x: [f64; 2]) -> Result<Complex64> {
    let r = norm2(x);
    if r == 0.0 {
        return Err(Error::SingularPoint { image: 0 });
    }
    let b = bessel_j0j1y0y1(k * r)?;
    Ok(0.25 * I * b.h0())
}

pub fn grad_free_green(k: f64, x: [f64; 2]) -> Result<[Complex64; 2]> {
    let r = norm2(x);
    if r == 0.0 {
        return Err(Error::SingularPoint { image: 0 });
    }
    let b = bessel_j0j1y0y1(k * r)?;
    let f = -0.25 * I * k * b.h1() / r;
    Ok([f * x[0], f * x[1]])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum GreenMode {
    Plain,
    Shifted { h: f64, j: usize },
}

/// Value and gradient (in the target variable) of a kernel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelSample {
    pub value: Complex64,
    pub grad: [Complex64; 2],
}

impl KernelSample {
    const ZERO: KernelSample = KernelSample {
        value: ZERO,
        grad: [ZERO, ZERO],
    };

    fn add(&mut self, o: KernelSample) {
        self.value += o.value;
        self.grad[0] += o.grad[0];
        self.grad[1] += o.grad[1];
    }

    pub fn scaled(self, s: Complex64) -> KernelSample {
        KernelSample {
            value: self.value * s,
            grad: [self.grad[0] * s, self.grad[1] * s],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GreenParams {
    pub k: f64,
    pub d: f64,
    pub alpha: f64,
    /// Window size `A`.
    pub a: f64,
    pub window: WindowSpec,
    pub wood_tol: f64,
    pub mode: GreenMode,
    pub c_r: Vec<(i64, Complex64)>,
    #[serde(skip)]
    modes: ModeTable,
    #[serde(skip)]
    weights: Vec<f64>,
}

impl GreenParams {
    pub fn plain(k: f64, d: f64, alpha: f64, a: f64, window: WindowSpec, wood_tol: f64) -> Result<Self> {
        Self::new(k, d, alpha, a, window, wood_tol, GreenMode::Plain, None)
    }

    #[allow(clippy::too_many_arguments)]
    pub fn new(
        k: f64,
        d: f64,
        alpha: f64,
        a: f64,
        window: WindowSpec,
        wood_tol: f64,
        mode: GreenMode,
        c_r: Option<Vec<(i64, Complex64)>>,
    ) -> Result<Self> {
        if !(k > 0.0 && k.is_finite()) {
            return Err(Error::Domain(format!("wavenumber must be positive, got {k}")));
        }
        if !(d > 0.0 && d.is_finite()) {
            return Err(Error::Domain(format!("period must be positive, got {d}")));
        }
        if !alpha.is_finite() {
            return Err(Error::Domain("Bloch parameter must be finite".into()));
        }
        if !(a > d && a.is_finite()) {
            return Err(Error::Domain(format!("window size A = {a} must exceed the period {d}")));
        }
        if !(wood_tol >= 0.0) {
            return Err(Error::Domain(format!("wood_tol must be nonnegative, got {wood_tol}")));
        }
        let modes = mode_table(k, d, alpha, wood_tol);
        let wood = modes.wood_set();
        let (weights, c_r) = match mode {
            GreenMode::Plain => {
                if !wood.is_empty() {
                    return Err(Error::WoodFrequency { orders: wood });
                }
                (vec![1.0], Vec::new())
            }
            GreenMode::Shifted { h, j } => {
                if !(h != 0.0 && h.is_finite()) {
                    return Err(Error::Domain(format!("shift h must be nonzero, got {h}")));
                }
                if j == 0 {
                    return Err(Error::Domain("shift count j must be at least 1".into()));
                }
                check_shift(&modes, h)?;
                let c_r = match c_r {
                    None => default_cr(&modes),
                    Some(table) => {
                        let mut keys: Vec<i64> = table.iter().map(|e| e.0).collect();
                        keys.sort_unstable();
                        if keys != wood {
                            return Err(Error::Domain(format!(
                                "c_r given for orders {keys:?}, Wood set is {wood:?}"
                            )));
                        }
                        if table.iter().any(|e| e.1 == ZERO) {
                            return Err(Error::Domain("c_r coefficients must be nonzero".into()));
                        }
                        table
                    }
                };
                (binomial_signed(j), c_r)
            }
        };
        Ok(Self {
            k,
            d,
            alpha,
            a,
            window,
            wood_tol,
            mode,
            c_r,
            modes,
            weights,
        })
    }

    pub fn modes(&self) -> &ModeTable {
        &self.modes
    }

    pub fn is_shifted(&self) -> bool {
        matches!(self.mode, GreenMode::Shifted { .. })
    }

    pub fn shift(&self) -> f64 {
        match self.mode {
            GreenMode::Plain => 0.0,
            GreenMode::Shifted { h, .. } => h,
        }
    }

    pub fn shift_count(&self) -> usize {
        self.weights.len() - 1
    }

    /// Same parameters with a different window size.
    pub fn with_window_size(&self, a: f64) -> Result<Self> {
        let c_r = if self.is_shifted() { Some(self.c_r.clone()) } else { None };
        Self::new(self.k, self.d, self.alpha, a, self.window, self.wood_tol, self.mode, c_r)
    }

    /// Windowed image sum (without the grazing-mode correction) at `dx = x - y`.
    /// With `skip_origin` the unshifted `n = 0` image is left out.
    pub fn lattice(&self, dx: [f64; 2], skip_origin: bool) -> Result<KernelSample> {
        let (k, d, a) = (self.k, self.d, self.a);
        let h = self.shift();
        let n_lo = ((-a - dx[0]) / d).ceil() as i64;
        let n_hi = ((a - dx[0]) / d).floor() as i64;
        let mut acc = KernelSample::ZERO;
        for n in n_lo..=n_hi {
            let x1 = dx[0] + n as f64 * d;
            let phase = Complex64::from_polar(1.0, -self.alpha * n as f64 * d);
            for (l, &w) in self.weights.iter().enumerate() {
                if l == 0 && n == 0 && skip_origin {
                    continue;
                }
                let x2 = dx[1] + l as f64 * h;
                let r = x1.hypot(x2);
                if r >= a {
                    continue;
                }
                if l == 0 && r == 0.0 {
                    return Err(Error::SingularPoint { image: n });
                }
                if l > 0 && r < POLE_TOL * d {
                    return Err(Error::PoleProximity {
                        image: n,
                        shift: l,
                        distance: r,
                    });
                }
                let (chi, dchi) = window_chi(r / a, self.window);
                let b = bessel_unchecked(k * r);
                let g = 0.25 * I * b.h0();
                let radial = -0.25 * I * k * b.h1() * chi + g * (dchi / a);
                let c = phase * w;
                acc.value += c * g * chi;
                let f = c * radial / r;
                acc.grad[0] += f * x1;
                acc.grad[1] += f * x2;
            }
        }
        Ok(acc)
    }

    /// Grazing-mode correction `sum_W c_r exp(i alpha_r x1 + i sign(h) beta_r x2)`.
    pub fn wood_correction(&self, dx: [f64; 2]) -> KernelSample {
        let s = self.shift().signum();
        let mut acc = KernelSample::ZERO;
        for &(r, c) in &self.c_r {
            let m = self.modes.get(r).expect("Wood order inside mode table");
            let kb = s * m.beta;
            let e = c * (I * (m.alpha * dx[0] + kb * dx[1])).exp();
            acc.add(KernelSample {
                value: e,
                grad: [I * m.alpha * e, I * kb * e],
            });
        }
        acc
    }

    /// Full kernel at `dx = x - y`.
    pub fn evaluate(&self, dx: [f64; 2]) -> Result<KernelSample> {
        let mut s = self.lattice(dx, false)?;
        s.add(self.wood_correction(dx));
        Ok(s)
    }
}

/// `(-1)^l binom(j, l)` for `l = 0..=j`.
fn binomial_signed(j: usize) -> Vec<f64> {
    let mut w = Vec::with_capacity(j + 1);
    let mut c = 1.0;
    for l in 0..=j {
        w.push(if l % 2 == 0 { c } else { -c });
        c = c * (j - l) as f64 / (l + 1) as f64;
    }
    w
}

/// Rejects shifts for which `1 - exp(i beta_r h)` vanishes on a propagating order.
pub fn check_shift(modes: &ModeTable, h: f64) -> Result<()> {
    let bad: Vec<i64> = modes
        .propagating()
        .filter(|m| (Complex64::new(1.0, 0.0) - (I * m.beta * h).exp()).norm() <= FORBIDDEN_TOL)
        .map(|m| m.r)
        .collect();
    if bad.is_empty() {
        Ok(())
    } else {
        Err(Error::ForbiddenShift { h, orders: bad })
    }
}

pub fn windowed_qp_green(p: &GreenParams, x: [f64; 2]) -> Result<Complex64> {
    require_mode(p, false)?;
    Ok(p.evaluate(x)?.value)
}

pub fn grad_windowed_qp_green(p: &GreenParams, x: [f64; 2]) -> Result<[Complex64; 2]> {
    require_mode(p, false)?;
    Ok(p.evaluate(x)?.grad)
}

pub fn shifted_windowed_qp_green(p: &GreenParams, x: [f64; 2]) -> Result<Complex64> {
    require_mode(p, true)?;
    Ok(p.evaluate(x)?.value)
}

pub fn grad_shifted_windowed_qp_green(p: &GreenParams, x: [f64; 2]) -> Result<[Complex64; 2]> {
    require_mode(p, true)?;
    Ok(p.evaluate(x)?.grad)
}

fn require_mode(p: &GreenParams, shifted: bool) -> Result<()> {
    if p.is_shifted() == shifted {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "expected {} Green parameters",
            if shifted { "shifted" } else { "plain" }
        )))
    }
}

/// Sums `term(r)` over all orders, walking outward from the central order,
/// until both tails fall below `1e-16` of the running sum.
fn spectral_sum(k: f64, d: f64, alpha: f64, mut term: impl FnMut(f64, Complex64) -> Complex64) -> Complex64 {
    let step = 2.0 * PI / d;
    let center = (-alpha / step).round() as i64;
    let reach = (k / step).ceil() as i64 + 1;
    let mut sum = ZERO;
    let mut eval = |r: i64| {
        let a = alpha + step * r as f64;
        term(a, vertical_wavenumber(k, a))
    };
    sum += eval(center);
    for m in 1..200_000i64 {
        let t = eval(center + m) + eval(center - m);
        sum += t;
        if m > reach && t.norm() <= 1e-16 * sum.norm() {
            break;
        }
    }
    sum
}

/// Spectral series `(i/2d) sum_r exp(i alpha_r x1 + i beta_r |x2|) / beta_r`.
pub fn spectral_qp_green(k: f64, d: f64, alpha: f64, x: [f64; 2]) -> Result<Complex64> {
    if x[1] == 0.0 {
        return Err(Error::Domain("spectral series needs x2 != 0".into()));
    }
    let wood: Vec<i64> = mode_table(k, d, alpha, 0.0)
        .modes()
        .iter()
        .filter(|m| m.beta.norm() <= 1e-12 * k)
        .map(|m| m.r)
        .collect();
    if !wood.is_empty() {
        return Err(Error::WoodFrequency { orders: wood });
    }
    let y = x[1].abs();
    Ok(spectral_sum(k, d, alpha, |a, b| (I * (a * x[0] + b * y)).exp() / b) * (0.5 / d) * I)
}

/// Spectral form of the shifted Green function on the radiating side of the shift
/// (`x2 h > 0`): `(i/2d) sum_r exp(i alpha_r x1)(1 - e^{i beta_r |h|})^j e^{i beta_r |x2|} / beta_r`
/// plus the grazing corrections. Exactly grazing orders use the `beta -> 0` limit.
pub fn shifted_spectral_qp_green(p: &GreenParams, x: [f64; 2]) -> Result<Complex64> {
    let GreenMode::Shifted { h, j } = p.mode else {
        return Err(Error::Domain("shifted spectral form needs shifted parameters".into()));
    };
    if !(x[1] * h > 0.0) {
        return Err(Error::Domain("shifted spectral form needs x2 on the side of the shift".into()));
    }
    let (hh, y) = (h.abs(), x[1].abs());
    let jj = j as i32;
    let series = spectral_sum(p.k, p.d, p.alpha, |a, b| {
        let e = (I * a * x[0]).exp();
        if b.norm() < 1e-300 {
            // (1 - e^{i b h})^j / b -> (-i h)^j b^{j-1}
            if j == 1 {
                e * (-I * hh)
            } else {
                ZERO
            }
        } else {
            e * (1.0 - (I * b * hh).exp()).powi(jj) * (I * b * y).exp() / b
        }
    }) * (0.5 / p.d)
        * I;
    Ok(series + p.wood_correction(x).value)
}

/// Coefficient `kappa_r` of `e^{i alpha_r x1 + i beta_r |x2|}` in the spectral
/// form of the kernel on its radiating side. `None` for orders outside the
/// mode table.
pub fn spectral_coefficient(p: &GreenParams, r: i64) -> Option<Complex64> {
    let m = p.modes().get(r)?;
    let b = m.beta;
    let base = match p.mode {
        GreenMode::Plain => {
            if b.norm() == 0.0 {
                return None;
            }
            I * (0.5 / p.d) / b
        }
        GreenMode::Shifted { h, j } => {
            if b.norm() < 1e-300 {
                if j == 1 {
                    Complex64::new(h.abs() * 0.5 / p.d, 0.0)
                } else {
                    ZERO
                }
            } else {
                I * (0.5 / p.d) * (1.0 - (I * b * h.abs()).exp()).powi(j as i32) / b
            }
        }
    };
    let wood = p.c_r.iter().find(|e| e.0 == r).map_or(ZERO, |e| e.1);
    Some(base + wood)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const TWO_PI: f64 = 2.0 * PI;

    fn plain(k: f64, a: f64) -> GreenParams {
        GreenParams::plain(k, TWO_PI, 0.0, a, WindowSpec::default(), 0.05).unwrap()
    }

    fn shifted(k: f64, a: f64, h: f64, j: usize) -> GreenParams {
        GreenParams::new(k, TWO_PI, 0.0, a, WindowSpec::default(), 0.05, GreenMode::Shifted { h, j }, None).unwrap()
    }

    #[test]
    fn spectral_coefficients_resum_the_kernel() {
        let x = [0.7, 0.9];
        for p in [plain(2.5, 800.0), shifted(2.0, 200.0, 1.3, 3)] {
            let direct = if p.is_shifted() {
                shifted_spectral_qp_green(&p, x).unwrap()
            } else {
                spectral_qp_green(p.k, p.d, p.alpha, x).unwrap()
            };
            let mut sum = ZERO;
            for m in p.modes().modes() {
                let c = spectral_coefficient(&p, m.r).unwrap();
                sum += c * (I * (m.alpha * x[0] + m.beta * x[1])).exp();
            }
            // the table stops eight orders past the propagating band
            assert!((sum - direct).norm() < 1e-5, "{sum} vs {direct}");
        }
    }

    #[test]
    fn mode_table_examples() {
        let t = mode_table(8.0, TWO_PI, 0.0, 0.05);
        assert_eq!(t.get(8).unwrap().beta, ZERO);
        assert_eq!(t.wood_set(), vec![-8, 8]);
        let t = mode_table(1.5, TWO_PI, 0.0, 0.05);
        let prop: Vec<i64> = t.propagating().map(|m| m.r).collect();
        assert_eq!(prop, vec![-1, 0, 1]);
        assert!(t.wood_set().is_empty());
        assert!((t.get(1).unwrap().beta.re - 1.25f64.sqrt()).abs() < 1e-15);
        assert!(mode_table(4.1, TWO_PI, 0.0, 0.05).wood_set().is_empty());
        assert_eq!(t.modes().first().unwrap().r, -1 - GUARD_ORDERS);
        assert_eq!(t.modes().last().unwrap().r, 1 + GUARD_ORDERS);
    }

    #[test]
    fn default_cr_normalization() {
        let t = mode_table(8.0, TWO_PI, 0.0, 0.05);
        let c = default_cr(&t);
        assert_eq!(c.len(), 2);
        assert!((c[0].1 - Complex64::new(0.0, 1.0 / (4.0 * PI))).norm() < 1e-16);
        assert!(default_cr(&mode_table(4.1, TWO_PI, 0.0, 0.05)).is_empty());
        let custom = vec![(-8, Complex64::new(0.3, 0.1)), (8, Complex64::new(-1.0, 2.0))];
        let p = GreenParams::new(
            8.0,
            TWO_PI,
            0.0,
            30.0,
            WindowSpec::default(),
            0.05,
            GreenMode::Shifted { h: 1.3, j: 3 },
            Some(custom.clone()),
        )
        .unwrap();
        assert_eq!(p.c_r, custom);
    }

    #[test]
    fn plain_mode_refuses_wood() {
        let e = GreenParams::plain(8.0, TWO_PI, 0.0, 40.0, WindowSpec::default(), 0.05).unwrap_err();
        assert_eq!(e, Error::WoodFrequency { orders: vec![-8, 8] });
        assert!(spectral_qp_green(8.0, TWO_PI, 0.0, [0.1, 1.0]).is_err());
    }

    #[test]
    fn forbidden_shift_rejected() {
        // beta_0 = 4.1 at normal incidence; h = 2 pi / 4.1 makes e^{i beta_0 h} = 1
        let h = TWO_PI / 4.1;
        let e = GreenParams::new(4.1, TWO_PI, 0.0, 40.0, WindowSpec::default(), 0.05, GreenMode::Shifted { h, j: 2 }, None)
            .unwrap_err();
        match e {
            Error::ForbiddenShift { orders, .. } => assert!(orders.contains(&0)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn free_green_basics() {
        let k = 3.0;
        assert!(matches!(free_green(k, [0.0, 0.0]), Err(Error::SingularPoint { .. })));
        let a = free_green(k, [0.3, -0.7]).unwrap();
        let b = free_green(k, [-0.3, 0.7]).unwrap();
        assert_eq!(a, b);
        // G = (i/4)(J0 + i Y0): the logarithm sits in the real part
        let g1 = free_green(k, [1e-6, 0.0]).unwrap();
        let g2 = free_green(k, [1e-8, 0.0]).unwrap();
        let slope = (g2.re - g1.re) / (100f64).ln();
        assert!((slope - 1.0 / TWO_PI).abs() < 1e-6);
        assert!((g2.im - 0.25).abs() < 1e-12);
    }

    #[test]
    fn free_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let k = rng.gen_range(0.5..20.0);
            let x = [rng.gen_range(-3.0..3.0), rng.gen_range(0.2..3.0)];
            let g = grad_free_green(k, x).unwrap();
            let h = 1e-6;
            for c in 0..2 {
                let mut xp = x;
                let mut xm = x;
                xp[c] += h;
                xm[c] -= h;
                let fd = (free_green(k, xp).unwrap() - free_green(k, xm).unwrap()) / (2.0 * h);
                assert!((fd - g[c]).norm() <= 1e-6 * g[c].norm().max(1e-3));
            }
        }
    }

    #[test]
    fn windowed_converges_to_spectral() {
        // k = 4.1 sits 0.1 from the Wood value 4, so the beat length is ten periods
        let x = [0.1, 1.0];
        let exact = spectral_qp_green(4.1, TWO_PI, 0.0, x).unwrap();
        let mut errs = Vec::new();
        for a in [25.0, 50.0, 100.0, 200.0, 400.0, 800.0, 1600.0, 3200.0] {
            let err = (windowed_qp_green(&plain(4.1, a), x).unwrap() - exact).norm();
            if let Some(&last) = errs.last() {
                assert!(err <= 1.1 * last, "A = {a}: {err} after {last}");
            }
            errs.push(err);
        }
        assert!(errs[3] <= 5e-3, "A=200: {}", errs[3]);
        assert!(errs[7] <= 1e-7, "A=3200: {}", errs[7]);
    }

    #[test]
    fn windowed_superalgebraic_away_from_wood() {
        let x = [0.7, 1.5];
        let exact = spectral_qp_green(2.5, TWO_PI, 0.0, x).unwrap();
        let errs: Vec<f64> = [200.0, 400.0, 800.0, 1600.0]
            .iter()
            .map(|&a| (windowed_qp_green(&plain(2.5, a), x).unwrap() - exact).norm())
            .collect();
        // each doubling of A gains more than the previous one
        for w in errs.windows(3) {
            assert!(w[1] / w[0] > w[2] / w[1], "{errs:?}");
        }
        assert!(errs[3] <= 1e-11, "{errs:?}");
    }

    #[test]
    fn windowed_converges_oblique_and_deep() {
        let alpha = 2.5 * 0.3f64.sin();
        let p = GreenParams::plain(2.5, TWO_PI, alpha, 1600.0, WindowSpec::default(), 0.05).unwrap();
        for x in [[0.7, TWO_PI / 4.0], [-2.0, -2.5], [3.0, 0.4 * TWO_PI]] {
            let exact = spectral_qp_green(2.5, TWO_PI, alpha, x).unwrap();
            let err = (windowed_qp_green(&p, x).unwrap() - exact).norm();
            assert!(err <= 1e-8, "x = {x:?}: {err}");
        }
    }

    #[test]
    fn spectral_series_properties() {
        let (k, d) = (4.1, TWO_PI);
        let alpha = 1.3;
        let x = [0.4, 0.8];
        let g = spectral_qp_green(k, d, alpha, x).unwrap();
        let gs = spectral_qp_green(k, d, alpha, [x[0] + d, x[1]]).unwrap();
        assert!((gs - Complex64::from_polar(1.0, alpha * d) * g).norm() < 1e-12 * g.norm());
        let g0 = spectral_qp_green(k, d, 0.0, x).unwrap();
        let gm = spectral_qp_green(k, d, 0.0, [x[0], -x[1]]).unwrap();
        assert_eq!(g0, gm);
        assert!(g.re.is_finite() && g.im.is_finite());
    }

    #[test]
    fn windowed_is_quasi_periodic_exactly() {
        let p = GreenParams::plain(4.1, TWO_PI, 0.7, 40.0, WindowSpec::default(), 0.05).unwrap();
        let x = [0.3, 0.9];
        let g = windowed_qp_green(&p, x).unwrap();
        let gs = windowed_qp_green(&p, [x[0] + TWO_PI, x[1]]).unwrap();
        assert!((gs - Complex64::from_polar(1.0, 0.7 * TWO_PI) * g).norm() < 1e-12);
    }

    #[test]
    fn windowed_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let ps = [plain(4.1, 20.0), shifted(8.0, 20.0, 1.3, 3), shifted(8.0, 20.0, -1.3, 5)];
        for p in &ps {
            for _ in 0..10 {
                let s = p.shift().signum().max(0.0) * 2.0 - 1.0;
                let x = [rng.gen_range(-3.0..3.0), s * rng.gen_range(0.3..2.0)];
                let g = p.evaluate(x).unwrap().grad;
                let h = 1e-6 * TWO_PI;
                for c in 0..2 {
                    let mut xp = x;
                    let mut xm = x;
                    xp[c] += h;
                    xm[c] -= h;
                    let fd = (p.evaluate(xp).unwrap().value - p.evaluate(xm).unwrap().value) / (2.0 * h);
                    assert!((fd - g[c]).norm() <= 1e-5 * g[c].norm().max(1e-2), "{fd} vs {}", g[c]);
                }
            }
        }
    }

    #[test]
    fn shifted_matches_spectral_form_off_wood() {
        for j in [3, 5] {
            let p = shifted(8.5, 200.0, 1.3, j);
            for x in [[0.1, 1.0], [2.0, 0.5], [-1.0, 2.5]] {
                let exact = shifted_spectral_qp_green(&p, x).unwrap();
                let err = (shifted_windowed_qp_green(&p, x).unwrap() - exact).norm();
                assert!(err <= 1e-6, "j = {j}, x = {x:?}: {err}");
            }
        }
        let p = shifted(8.5, 200.0, -1.3, 3);
        let x = [0.4, -0.8];
        let err = (shifted_windowed_qp_green(&p, x).unwrap() - shifted_spectral_qp_green(&p, x).unwrap()).norm();
        assert!(err <= 1e-6, "{err}");
    }

    #[test]
    fn shifted_converges_algebraically_at_wood() {
        // non-oscillating tails of j-th differences decay like n^{-1/2 - ceil(j/2)}
        let x = [0.1, 1.0];
        for j in [3usize, 5] {
            let errs: Vec<f64> = [200.0, 400.0, 800.0]
                .iter()
                .map(|&a| {
                    let p = shifted(8.0, a, 1.3, j);
                    (shifted_windowed_qp_green(&p, x).unwrap() - shifted_spectral_qp_green(&p, x).unwrap()).norm()
                })
                .collect();
            let rate = j.div_ceil(2) as f64 - 0.5;
            for w in errs.windows(2) {
                let observed = (w[0] / w[1]).log2();
                assert!((observed - rate).abs() < 0.2, "j = {j}: {errs:?}");
            }
        }
    }

    #[test]
    fn single_shift_factors_per_order() {
        // non-Wood k: spectral form with j = 1 equals G(x) - G(x + h e2)
        let p = shifted(2.5, 800.0, 0.9, 1);
        let x = [0.3, 0.7];
        let g = |x: [f64; 2]| spectral_qp_green(2.5, TWO_PI, 0.0, x).unwrap();
        let direct = g(x) - g([x[0], x[1] + 0.9]);
        assert!((shifted_spectral_qp_green(&p, x).unwrap() - direct).norm() < 1e-12);
        assert!((shifted_windowed_qp_green(&p, x).unwrap() - direct).norm() < 1e-8);
    }

    #[test]
    fn shifted_near_wood_is_robust() {
        let x = [0.3, 0.8];
        let at = shifted(8.0 + 1e-8, 60.0, 1.3, 3);
        let off = shifted(8.0 + 1e-2, 60.0, 1.3, 3);
        let va = shifted_windowed_qp_green(&at, x).unwrap();
        let vo = shifted_windowed_qp_green(&off, x).unwrap();
        assert!(va.re.is_finite() && va.im.is_finite());
        assert!(va.norm() <= 10.0 * vo.norm());
    }

    #[test]
    fn pole_proximity_detected() {
        let p = shifted(8.0, 20.0, 1.3, 3);
        let e = p.evaluate([TWO_PI, -2.6]).unwrap_err();
        assert!(matches!(e, Error::PoleProximity { image: -1, shift: 2, .. }));
        assert!(matches!(p.evaluate([0.0, 0.0]), Err(Error::SingularPoint { image: 0 })));
        assert!(p.lattice([0.0, 0.0], true).is_ok());
    }

    #[test]
    fn mode_checks() {
        let p = plain(4.1, 20.0);
        assert!(shifted_windowed_qp_green(&p, [0.1, 0.2]).is_err());
        let s = shifted(8.0, 20.0, 1.3, 2);
        assert!(windowed_qp_green(&s, [0.1, 0.2]).is_err());
        assert!(GreenParams::plain(4.1, TWO_PI, 0.0, 6.0, WindowSpec::default(), 0.05).is_err());
    }

    proptest! {
        #[test]
        fn branch_is_physical(k in 0.1f64..40.0, d in 0.5f64..10.0, alpha in -5.0f64..5.0) {
            let t = mode_table(k, d, alpha, 0.05);
            for m in t.modes() {
                prop_assert!(m.beta.re >= 0.0 && m.beta.im >= 0.0);
                prop_assert!((m.beta * m.beta - (k * k - m.alpha * m.alpha)).norm() <= 1e-9 * (k * k + m.alpha * m.alpha));
                if m.class == ModeClass::Grazing {
                    prop_assert!(m.beta.norm() <= 0.05 * 2.0 * PI / d);
                }
            }
            prop_assert!(t.modes().iter().filter(|m| m.alpha.abs() <= k).count() >= t.propagating().count());
        }

        #[test]
        fn binomial_weights_sum_to_zero(j in 1usize..12) {
            let w = binomial_signed(j);
            prop_assert_eq!(w.len(), j + 1);
            prop_assert!(w.iter().sum::<f64>().abs() < 1e-9);
        }
    }
}
