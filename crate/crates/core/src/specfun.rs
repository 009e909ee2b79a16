//! Cylindrical Bessel and Hankel functions of orders 0 and 1 for real
//! positive arguments, and the smooth cutoff used by windowed lattice sums.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `(J0, J1, Y0, Y1)` at one argument.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BesselPair {
    pub j0: f64,
    pub j1: f64,
    pub y0: f64,
    pub y1: f64,
}

impl BesselPair {
    #[inline]
    pub fn h0(&self) -> Complex64 {
        Complex64::new(self.j0, self.y0)
    }

    #[inline]
    pub fn h1(&self) -> Complex64 {
        Complex64::new(self.j1, self.y1)
    }
}

/// Evaluates J0, J1, Y0, Y1 at `x > 0`.
pub fn bessel_j0j1y0y1(x: f64) -> Result<BesselPair> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::Domain(format!("Bessel argument must be positive, got {x}")));
    }
    Ok(bessel_unchecked(x))
}

#[inline]
pub(crate) fn bessel_unchecked(x: f64) -> BesselPair {
    BesselPair {
        j0: libm::j0(x),
        j1: libm::j1(x),
        y0: libm::y0(x),
        y1: libm::y1(x),
    }
}

/// Hankel function of the first kind, `H_n^(1)(x) = J_n(x) + i Y_n(x)`, n in {0, 1}.
pub fn hankel1(order: u32, x: f64) -> Result<Complex64> {
    let b = bessel_j0j1y0y1(x)?;
    match order {
        0 => Ok(b.h0()),
        1 => Ok(b.h1()),
        _ => Err(Error::Domain(format!("hankel1 supports orders 0 and 1, got {order}"))),
    }
}

/// Smooth cutoff `chi`, equal to one on `[0, c1]` and zero on `[1, inf)`.
///
/// On the transition `c1 < s < 1` we use `chi(s) = exp(2 e^{-1/u} / (u - 1))`
/// with `u = (s - c1) / (1 - c1)`. All derivatives vanish at both ends.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowSpec {
    c1: f64,
}

impl WindowSpec {
    pub fn new(c1: f64) -> Result<Self> {
        if !(c1 > 0.0 && c1 < 1.0) {
            return Err(Error::Domain(format!("window ratio c1 must lie in (0, 1), got {c1}")));
        }
        Ok(Self { c1 })
    }

    pub fn c1(&self) -> f64 {
        self.c1
    }
}

impl Default for WindowSpec {
    fn default() -> Self {
        Self { c1: 0.5 }
    }
}

/// Window value and exact derivative with respect to `s`.
#[inline]
pub fn window_chi(s: f64, spec: WindowSpec) -> (f64, f64) {
    let c1 = spec.c1;
    if s <= c1 {
        return (1.0, 0.0);
    }
    if s >= 1.0 {
        return (0.0, 0.0);
    }
    let width = 1.0 - c1;
    let u = (s - c1) / width;
    if u >= 1.0 {
        return (0.0, 0.0);
    }
    let e = (-1.0 / u).exp();
    let g = 2.0 * e / (u - 1.0);
    let value = g.exp();
    if value == 0.0 {
        return (0.0, 0.0);
    }
    // d/du [2 e^{-1/u} / (u - 1)]
    let dg = 2.0 * e * (1.0 / (u * u * (u - 1.0)) - 1.0 / ((u - 1.0) * (u - 1.0)));
    (value, value * dg / width)
}
