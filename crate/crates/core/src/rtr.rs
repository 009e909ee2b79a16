//! Discretized Robin-to-Robin maps of single layers and their merging.
//!
//! Incoming Robin data on a boundary is `g = gamma d_n u - i eta u` with the
//! exterior normal of the layer; the map returns `gamma d_n u + i eta u`. All
//! data is stored in the periodic representation (phase `e^{i alpha x1}`
//! removed).

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::bie::assemble_pair;
use crate::densela::{lu_factor, norm2_weighted, CMatrix, CVector, LUFactors};
use crate::error::{Error, Result};
use crate::geometry::{layer_width, normal, DiscretizedCurve, Orientation};
use crate::green::{mode_table, GreenMode, GreenParams, ModeClass, ModeTable};
use crate::specfun::WindowSpec;

const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Automatic shifts avoid `|1 - e^{i beta_r h}|` below this on propagating orders.
const SHIFT_MARGIN: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImpedanceSpec {
    eta: f64,
}

impl ImpedanceSpec {
    pub fn new(eta: f64) -> Result<Self> {
        if !(eta > 0.0 && eta.is_finite()) {
            return Err(Error::Domain(format!("Robin coupling eta must be positive, got {eta}")));
        }
        Ok(Self { eta })
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    /// `Z = i eta / gamma`.
    pub fn z(&self, gamma: f64) -> Result<Complex64> {
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::Domain(format!("material coefficient gamma must be positive, got {gamma}")));
        }
        Ok(Complex64::new(0.0, self.eta / gamma))
    }
}

impl Default for ImpedanceSpec {
    fn default() -> Self {
        Self { eta: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Top,
    Bottom,
}

impl Side {
    /// Exterior normal of the semi-infinite layer on its interface.
    pub fn exterior_normal(self) -> Orientation {
        match self {
            Side::Top => Orientation::Down,
            Side::Bottom => Orientation::Up,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeOverride {
    #[default]
    Auto,
    Plain,
    Shifted,
}

/// How a layer's Green function is chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GreenChoice {
    /// Window size `A`.
    pub a: f64,
    pub window: WindowSpec,
    pub wood_tol: f64,
    /// Number of shifts `j` when shifted Green functions are used.
    pub shifts: usize,
    /// Explicit shift `h`; chosen automatically when absent.
    pub h: Option<f64>,
    pub force: ModeOverride,
    pub c_r: Option<Vec<(i64, Complex64)>>,
}

impl GreenChoice {
    pub fn new(a: f64) -> Self {
        Self {
            a,
            window: WindowSpec::default(),
            wood_tol: 0.05,
            shifts: 5,
            h: None,
            force: ModeOverride::Auto,
            c_r: None,
        }
    }

    pub fn forced(mut self, force: ModeOverride) -> Self {
        self.force = force;
        self
    }

    pub fn with_shift(mut self, h: f64, shifts: usize) -> Self {
        self.h = Some(h);
        self.shifts = shifts;
        self
    }
}

/// Where the layer sits in the stack.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LayerRole {
    Top { range: f64 },
    Bottom { range: f64 },
    Middle { width: f64 },
}

fn shift_is_safe(modes: &ModeTable, h: f64) -> bool {
    modes
        .propagating()
        .all(|m| (ONE - (Complex64::i() * m.beta * h).exp()).norm() > SHIFT_MARGIN)
}

/// Deterministic default shift. The magnitude starts at `max(0.3, 0.2 d)`
/// (and beyond the profile range) for semi-infinite layers, at `1.1` times
/// the width for bounded ones, and grows in steps of `0.05 d` until it stays
/// clear of the forbidden set.
pub fn default_shift(modes: &ModeTable, role: LayerRole) -> f64 {
    let d = modes.d;
    let (mut mag, sign) = match role {
        LayerRole::Top { range } => ((0.3f64).max(0.2 * d).max(1.1 * range), 1.0),
        LayerRole::Bottom { range } => ((0.3f64).max(0.2 * d).max(1.1 * range), -1.0),
        LayerRole::Middle { width } => (1.1 * width, 1.0),
    };
    for _ in 0..400 {
        if shift_is_safe(modes, sign * mag) {
            break;
        }
        mag += 0.05 * d;
    }
    sign * mag
}

/// Resolves the Green function of one layer.
pub fn resolve_green(choice: &GreenChoice, k: f64, d: f64, alpha: f64, role: LayerRole) -> Result<GreenParams> {
    let modes = mode_table(k, d, alpha, choice.wood_tol);
    let shifted = match choice.force {
        ModeOverride::Auto => !modes.wood_set().is_empty(),
        ModeOverride::Plain => false,
        ModeOverride::Shifted => true,
    };
    if !shifted {
        return GreenParams::plain(k, d, alpha, choice.a, choice.window, choice.wood_tol);
    }
    let h = match choice.h {
        Some(h) => {
            let ok = match role {
                LayerRole::Top { .. } => h > 0.0,
                LayerRole::Bottom { .. } => h < 0.0,
                LayerRole::Middle { width } => h > width,
            };
            if !ok {
                return Err(Error::Domain(format!("shift h = {h} is not admissible for a {role:?} layer")));
            }
            h
        }
        None => default_shift(&modes, role),
    };
    let c_r = if modes.wood_set().is_empty() { None } else { choice.c_r.clone() };
    GreenParams::new(
        k,
        d,
        alpha,
        choice.a,
        choice.window,
        choice.wood_tol,
        GreenMode::Shifted { h, j: choice.shifts },
        c_r,
    )
}

#[derive(Debug, Clone)]
pub enum RtRKind {
    SemiInfinite { s: CMatrix },
    /// Rows index the output curve, columns the input curve.
    Middle {
        tt: CMatrix,
        tb: CMatrix,
        bt: CMatrix,
        bb: CMatrix,
    },
}

#[derive(Debug, Clone)]
pub struct RtRBlocks {
    pub kind: RtRKind,
    pub green: GreenParams,
    pub gamma: f64,
    pub z: Complex64,
    /// Condition estimate of the interior integral system.
    pub condition: f64,
    density_recovery: Option<LUFactors>,
}

impl RtRBlocks {
    /// Nodes per interface.
    pub fn nodes(&self) -> usize {
        match &self.kind {
            RtRKind::SemiInfinite { s } => s.rows(),
            RtRKind::Middle { tt, .. } => tt.rows(),
        }
    }

    pub fn is_middle(&self) -> bool {
        matches!(self.kind, RtRKind::Middle { .. })
    }

    /// The whole map as one matrix (`2M x 2M` for bounded layers).
    pub fn matrix(&self) -> CMatrix {
        match &self.kind {
            RtRKind::SemiInfinite { s } => s.clone(),
            RtRKind::Middle { tt, tb, bt, bb } => CMatrix::block2(tt, tb, bt, bb),
        }
    }

    pub fn apply(&self, g: &[Complex64]) -> Result<CVector> {
        let m = self.matrix();
        if g.len() != m.cols() {
            return Err(Error::Shape(format!("Robin data of length {} for a map of order {}", g.len(), m.cols())));
        }
        Ok(m.mul_vec(g))
    }

    pub fn has_factors(&self) -> bool {
        self.density_recovery.is_some()
    }

    /// Drops the retained factorization.
    pub fn release_factors(&mut self) {
        self.density_recovery = None;
    }

    /// Complex entries held by the retained factorization.
    pub fn factor_entries(&self) -> usize {
        self.density_recovery.as_ref().map_or(0, |f| f.entries())
    }

    /// Single-layer density `phi = A^{-1} g / gamma` generating the field
    /// with incoming Robin data `g`.
    pub fn density(&self, g: &[Complex64]) -> Result<CVector> {
        let lu = self
            .density_recovery
            .as_ref()
            .ok_or_else(|| Error::Shape("density requested after the factorization was released".into()))?;
        if g.len() != lu.dim() {
            return Err(Error::Shape(format!("Robin data of length {} for a system of order {}", g.len(), lu.dim())));
        }
        let scale = Complex64::new(1.0 / self.gamma, 0.0);
        Ok(lu.solve_vec(&g.iter().map(|v| v * scale).collect::<Vec<_>>()))
    }
}

fn finish(
    a: CMatrix,
    single: CMatrix,
    z: Complex64,
    gamma: f64,
    green: GreenParams,
    split: Option<usize>,
) -> Result<RtRBlocks> {
    let lu = lu_factor(&a)?;
    let s = single.matmul(&lu.inverse()).scale(2.0 * z).add_diagonal(ONE);
    let kind = match split {
        None => RtRKind::SemiInfinite { s },
        Some(m) => RtRKind::Middle {
            tt: s.block(0, 0, m, m),
            tb: s.block(0, m, m, m),
            bt: s.block(m, 0, m, m),
            bb: s.block(m, m, m, m),
        },
    };
    Ok(RtRBlocks {
        kind,
        condition: lu.condition(),
        green,
        gamma,
        z,
        density_recovery: Some(lu),
    })
}

/// RtR map `S = I + 2 Z S_q (I/2 + K_q^T - Z S_q)^{-1}` of a semi-infinite layer.
pub fn rtr_semi_infinite(
    side: Side,
    curve: &DiscretizedCurve,
    gamma: f64,
    impedance: ImpedanceSpec,
    green: GreenParams,
) -> Result<RtRBlocks> {
    let h = green.shift();
    match side {
        Side::Top if h < 0.0 => return Err(Error::Domain(format!("top layer needs a positive shift, got {h}"))),
        Side::Bottom if h > 0.0 => return Err(Error::Domain(format!("bottom layer needs a negative shift, got {h}"))),
        _ => {}
    }
    let z = impedance.z(gamma)?;
    let normals = normal(curve, side.exterior_normal());
    let pair = assemble_pair(&green, curve, curve, Some(&normals), true)?;
    let a = pair
        .adjoint_double
        .add_diagonal(Complex64::new(0.5, 0.0))
        .sub(&pair.single.scale(z));
    finish(a, pair.single, z, gamma, green, None)
}

/// RtR map of the bounded layer between `top` and `bottom`.
pub fn rtr_middle(
    top: &DiscretizedCurve,
    bottom: &DiscretizedCurve,
    gamma: f64,
    impedance: ImpedanceSpec,
    green: GreenParams,
) -> Result<RtRBlocks> {
    let m = top.len();
    if bottom.len() != m {
        return Err(Error::Shape(format!("interfaces with {m} and {} nodes", bottom.len())));
    }
    if green.is_shifted() {
        let width = layer_width(top.profile(), bottom.profile());
        if green.shift() <= width {
            return Err(Error::Domain(format!(
                "shift h = {} must exceed the layer width {width}",
                green.shift()
            )));
        }
    }
    let z = impedance.z(gamma)?;
    let n_top = normal(top, Orientation::Up);
    let n_bot = normal(bottom, Orientation::Down);
    let tt = assemble_pair(&green, top, top, Some(&n_top), true)?;
    let tb = assemble_pair(&green, bottom, top, Some(&n_top), false)?;
    let bt = assemble_pair(&green, top, bottom, Some(&n_bot), false)?;
    let bb = assemble_pair(&green, bottom, bottom, Some(&n_bot), true)?;
    let single = CMatrix::block2(&tt.single, &tb.single, &bt.single, &bb.single);
    let dl = CMatrix::block2(
        &tt.adjoint_double,
        &tb.adjoint_double,
        &bt.adjoint_double,
        &bb.adjoint_double,
    );
    let a = dl.add_diagonal(Complex64::new(0.5, 0.0)).sub(&single.scale(z));
    finish(a, single, z, gamma, green, Some(m))
}

/// One merge step: `(I - S_top S_tt)^{-1}` factored, `V = (I - S_top S_tt)^{-1} S_top S_tb`
/// and the merged map `S_bb + S_bt V`.
#[derive(Debug, Clone)]
pub struct MergeStep {
    pub merged: CMatrix,
    pub v: CMatrix,
    pub inner: LUFactors,
}

pub fn merge_step(s_top: &CMatrix, layer: &RtRBlocks) -> Result<MergeStep> {
    let RtRKind::Middle { tt, tb, bt, bb } = &layer.kind else {
        return Err(Error::Shape("merge needs a bounded layer".into()));
    };
    if s_top.rows() != tt.rows() || !s_top.is_square() {
        return Err(Error::Shape(format!(
            "merging a {}x{} map with blocks of order {}",
            s_top.rows(),
            s_top.cols(),
            tt.rows()
        )));
    }
    let inner = lu_factor(&CMatrix::identity(tt.rows()).sub(&s_top.matmul(tt)))?;
    let v = inner.solve(&s_top.matmul(tb));
    let merged = bb.add(&bt.matmul(&v));
    Ok(MergeStep { merged, v, inner })
}

/// Merged map `S_bt (I - S_top S_tt)^{-1} S_top S_tb + S_bb` and the condition
/// estimate of the inner matrix.
pub fn merge(s_top: &CMatrix, layer: &RtRBlocks) -> Result<(CMatrix, f64)> {
    let step = merge_step(s_top, layer)?;
    Ok((step.merged, step.inner.condition()))
}

/// `||S g||_w / ||g||_w` with arclength weights on the layer's boundary.
pub fn weighted_gain(s: &CMatrix, g: &[Complex64], weights: &[f64]) -> Result<f64> {
    let out = s.mul_vec(g);
    Ok(norm2_weighted(&out, weights)? / norm2_weighted(g, weights)?)
}

/// Convenience for tests and drivers: modes with real vertical wavenumber.
pub fn propagating_orders(green: &GreenParams) -> Vec<i64> {
    green
        .modes()
        .modes()
        .iter()
        .filter(|m| m.class == ModeClass::Propagating)
        .map(|m| m.r)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{sample, Profile, ProfileKind};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    const D: f64 = 2.0 * PI;

    fn random_vec(n: usize, rng: &mut ChaCha8Rng) -> CVector {
        (0..n)
            .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect()
    }

    fn cosine(h: f64, offset: f64) -> Profile {
        Profile::new(D, ProfileKind::Cosine { height: h }, offset).unwrap()
    }

    fn plain(k: f64, a: f64) -> GreenParams {
        GreenParams::plain(k, D, 0.0, a, WindowSpec::default(), 0.05).unwrap()
    }

    #[test]
    fn impedance_validation() {
        assert!(ImpedanceSpec::new(0.0).is_err());
        assert!(ImpedanceSpec::new(-1.0).is_err());
        let z = ImpedanceSpec::default().z(2.0).unwrap();
        assert_eq!(z, Complex64::new(0.0, 0.5));
        assert!(ImpedanceSpec::default().z(0.0).is_err());
    }

    /// Upgoing modes above a flat interface: `S_r = (gamma beta_r - eta) / (gamma beta_r + eta)`.
    #[test]
    fn flat_half_plane_matches_modal_reflection() {
        let (k, m) = (1.5, 32);
        let curve = sample(&Profile::flat(D, 0.0), m).unwrap();
        for side in [Side::Top, Side::Bottom] {
            let s = rtr_semi_infinite(side, &curve, 1.0, ImpedanceSpec::default(), plain(k, 800.0)).unwrap();
            for r in [-3i64, -1, 0, 1, 2, 5] {
                let beta = crate::green::vertical_wavenumber(k, r as f64);
                let factor = (beta - 1.0) / (beta + 1.0);
                let g: CVector = curve
                    .nodes
                    .iter()
                    .map(|x| Complex64::from_polar(1.0, r as f64 * x[0]))
                    .collect();
                let out = s.apply(&g).unwrap();
                let err = out.iter().zip(&g).map(|(o, gi)| (o - factor * gi).norm()).fold(0.0, f64::max);
                assert!(err < 1e-6, "{side:?} r = {r}: {err:.2e}");
            }
        }
    }

    #[test]
    fn semi_infinite_maps_are_contractive() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for m in [64, 128] {
            let tol = 0.5 * 64.0 / m as f64 * 1e-2;
            let curve = sample(&cosine(0.6, 0.0), m).unwrap();
            let w = curve.weights();
            for side in [Side::Top, Side::Bottom] {
                let s = rtr_semi_infinite(side, &curve, 1.0, ImpedanceSpec::default(), plain(4.1, 80.0)).unwrap();
                let mat = s.matrix();
                for _ in 0..20 {
                    let gain = weighted_gain(&mat, &random_vec(m, &mut rng), &w).unwrap();
                    assert!(gain <= 1.0 + tol, "M = {m}, {side:?}: {gain}");
                }
            }
        }
    }

    #[test]
    fn bounded_layer_map_is_unitary() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let k = 2.0;
        let choice = GreenChoice::new(80.0);
        for m in [64, 128] {
            let tol = 0.5 * 64.0 / m as f64 * 1e-2;
            let top = sample(&cosine(0.6, 0.0), m).unwrap();
            let bot = sample(&cosine(0.6, -1.3), m).unwrap();
            let width = layer_width(top.profile(), bot.profile());
            let green = resolve_green(&choice, k, D, 0.0, LayerRole::Middle { width }).unwrap();
            assert!(green.is_shifted());
            let s = rtr_middle(&top, &bot, 1.0, ImpedanceSpec::default(), green).unwrap();
            let mut w = top.weights();
            w.extend(bot.weights());
            let mat = s.matrix();
            for _ in 0..20 {
                let gain = weighted_gain(&mat, &random_vec(2 * m, &mut rng), &w).unwrap();
                assert!((gain - 1.0).abs() <= tol, "M = {m}: {gain}");
            }
        }
    }

    #[test]
    fn wood_frequency_needs_shifted_kernels() {
        let curve = sample(&cosine(0.6, 0.0), 64).unwrap();
        let err = resolve_green(&GreenChoice::new(40.0).forced(ModeOverride::Plain), 8.0, D, 0.0, LayerRole::Top { range: 0.6 });
        assert!(matches!(err, Err(Error::WoodFrequency { .. })));
        let choice = GreenChoice::new(80.0).with_shift(1.3, 3);
        let green = resolve_green(&choice, 8.0, D, 0.0, LayerRole::Top { range: 0.6 }).unwrap();
        let s = rtr_semi_infinite(Side::Top, &curve, 1.0, ImpedanceSpec::default(), green).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (w, mat) = (curve.weights(), s.matrix());
        for _ in 0..20 {
            assert!(weighted_gain(&mat, &random_vec(64, &mut rng), &w).unwrap() <= 1.0 + 5e-3);
        }
        let bad = GreenChoice::new(40.0).with_shift(-1.3, 3);
        assert!(resolve_green(&bad, 8.0, D, 0.0, LayerRole::Top { range: 0.6 }).is_err());
    }

    #[test]
    fn default_shifts_clear_the_forbidden_set() {
        for k in [2.0, 4.1, 8.0, 16.1] {
            let modes = mode_table(k, D, 0.0, 0.05);
            let top = default_shift(&modes, LayerRole::Top { range: 0.6 });
            let bot = default_shift(&modes, LayerRole::Bottom { range: 0.6 });
            let mid = default_shift(&modes, LayerRole::Middle { width: 2.5 });
            assert!(top >= 1.25 && bot <= -1.25 && mid >= 2.75);
            for h in [top, bot, mid] {
                assert!(shift_is_safe(&modes, h), "k = {k}, h = {h}");
            }
        }
    }

    #[test]
    fn bounded_layer_shift_must_exceed_width() {
        let top = sample(&cosine(0.6, 0.0), 32).unwrap();
        let bot = sample(&cosine(0.6, -1.3), 32).unwrap();
        let green = GreenParams::new(
            2.3,
            D,
            0.0,
            40.0,
            WindowSpec::default(),
            0.05,
            GreenMode::Shifted { h: 1.0, j: 3 },
            None,
        )
        .unwrap();
        assert!(rtr_middle(&top, &bot, 1.0, ImpedanceSpec::default(), green).is_err());
    }

    #[test]
    fn thin_layers_are_refused() {
        let top = sample(&cosine(0.3, 0.0), 32).unwrap();
        let bot = sample(&cosine(0.3, -0.3), 32).unwrap();
        let err = rtr_middle(&top, &bot, 1.0, ImpedanceSpec::default(), plain(2.3, 40.0));
        assert!(matches!(err, Err(Error::Resolution(_))));
    }

    #[test]
    fn density_reproduces_incoming_data() {
        let m = 32;
        let curve = sample(&cosine(0.4, 0.0), m).unwrap();
        let s = rtr_semi_infinite(Side::Top, &curve, 2.0, ImpedanceSpec::default(), plain(2.3, 80.0)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let g = random_vec(m, &mut rng);
        let phi = s.density(&g).unwrap();
        assert_eq!(phi.len(), m);
        let mut released = s.clone();
        released.release_factors();
        assert!(released.density(&g).is_err());
    }

    /// Off Wood both kernels converge to the same map; the shifted one much faster.
    #[test]
    fn shifted_and_plain_maps_agree_away_from_wood() {
        let (k, m) = (4.1, 32);
        let curve = sample(&cosine(0.6, 0.0), m).unwrap();
        let build = |g: GreenParams| rtr_semi_infinite(Side::Top, &curve, 1.0, ImpedanceSpec::default(), g).unwrap().matrix();
        let reference = build(plain(k, 1600.0));
        let shifted_choice = GreenChoice::new(160.0).with_shift(1.4, 3).forced(ModeOverride::Shifted);
        let shifted = build(resolve_green(&shifted_choice, k, D, 0.0, LayerRole::Top { range: 0.6 }).unwrap());
        let err_shifted = shifted.sub(&reference).norm2();
        assert!(err_shifted < 1e-3, "shifted: {err_shifted:.2e}");
        let err_80 = build(plain(k, 80.0)).sub(&reference).norm2();
        let err_320 = build(plain(k, 320.0)).sub(&reference).norm2();
        assert!(err_320 < 0.2 * err_80, "plain ladder: {err_80:.2e} -> {err_320:.2e}");
    }

    #[test]
    fn merge_with_identity_like_blocks() {
        let m = 8;
        let zero = CMatrix::zeros(m, m);
        let eye = CMatrix::identity(m);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let rand_mat = |rng: &mut ChaCha8Rng| CMatrix::from_fn(m, m, |_, _| Complex64::new(rng.gen_range(-0.3..0.3), rng.gen_range(-0.3..0.3)));
        let s_top = rand_mat(&mut rng);
        let bb = rand_mat(&mut rng);
        let green = plain(2.3, 40.0);
        let layer = RtRBlocks {
            kind: RtRKind::Middle { tt: zero.clone(), tb: eye.clone(), bt: eye.clone(), bb: bb.clone() },
            green,
            gamma: 1.0,
            z: Complex64::i(),
            condition: 1.0,
            density_recovery: None,
        };
        // S_bt (I - S_top 0)^{-1} S_top I + S_bb
        let (merged, cond) = merge(&s_top, &layer).unwrap();
        assert!(merged.sub(&s_top.add(&bb)).max_abs() < 1e-14);
        assert!((cond - 1.0).abs() < 1e-12);
        assert!(merge(&CMatrix::zeros(m + 1, m + 1), &layer).is_err());
    }
}
