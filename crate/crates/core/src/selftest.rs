//! Fast invariant suite behind the `selftest` command.

use std::f64::consts::PI;
use std::time::Instant;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::bie::{jump_relation_check_with, DiagonalTerm};
use crate::ddm::{build_rhs, dense_reference_solve, schur_sweep, IncidentWave, LayerSpec, Stack};
use crate::densela::{vec_norm, vec_sub};
use crate::error::Result;
use crate::geometry::{layer_width, sample, Profile, ProfileKind};
use crate::green::{GreenParams, ModeClass};
use crate::post::{energy_defect, evaluate_field, layer_densities, rayleigh_tables, RayleighRoute};
use crate::rtr::{resolve_green, rtr_middle, rtr_semi_infinite, weighted_gain, GreenChoice, ImpedanceSpec, LayerRole, Side};
use crate::specfun::{bessel_j0j1y0y1, window_chi, WindowSpec};

const D: f64 = 2.0 * PI;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

type Check = fn() -> Result<(bool, String)>;

pub const CHECKS: &[(&str, Check)] = &[
    ("wronskian", wronskian),
    ("window_derivative", window_derivative),
    ("jump_relation", jump_relation),
    ("jump_relation_detects_flipped_diagonal", flipped_diagonal),
    ("sweep_vs_dense", sweep_vs_dense),
    ("rtr_unitarity", unitarity),
    ("flat_oracle", flat_oracle),
    ("rayleigh_routes_agree", routes_agree),
    ("translation_phase_law", translation_phase),
    ("quasi_periodicity", quasi_periodicity),
];

pub fn run_selftest() -> Vec<CheckOutcome> {
    CHECKS
        .iter()
        .map(|(name, check)| {
            let t = Instant::now();
            let (passed, detail) = match check() {
                Ok(r) => r,
                Err(e) => (false, format!("error: {e}")),
            };
            CheckOutcome {
                name,
                passed,
                detail,
                seconds: t.elapsed().as_secs_f64(),
            }
        })
        .collect()
}

fn cosine(height: f64, offset: f64) -> Profile {
    Profile::new(D, ProfileKind::Cosine { height }, offset).expect("valid profile")
}

fn random_vec(n: usize, rng: &mut ChaCha8Rng) -> Vec<Complex64> {
    (0..n).map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect()
}

fn wronskian() -> Result<(bool, String)> {
    let mut worst = 0.0f64;
    for i in 0..=200 {
        let x = 10f64.powf(-4.0 + 7.0 * i as f64 / 200.0);
        let b = bessel_j0j1y0y1(x)?;
        let exact = -2.0 / (PI * x);
        worst = worst.max(((b.j0 * b.y1 - b.j1 * b.y0 - exact) / exact).abs());
    }
    Ok((worst <= 1e-11, format!("max relative defect {worst:.2e}")))
}

fn window_derivative() -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = 0.0f64;
    for c1 in [0.3, 0.5, 0.7] {
        let w = WindowSpec::new(c1)?;
        for _ in 0..100 {
            let s = rng.gen_range(c1 + 0.01 * (1.0 - c1)..1.0 - 0.01 * (1.0 - c1));
            let h = 1e-6;
            let fd = (window_chi(s + h, w).0 - window_chi(s - h, w).0) / (2.0 * h);
            let d = window_chi(s, w).1;
            worst = worst.max((fd - d).abs() / d.abs().max(1e-3));
        }
    }
    Ok((worst <= 1e-6, format!("max relative mismatch {worst:.2e}")))
}

fn jump_case(diagonal: DiagonalTerm) -> Result<f64> {
    let curve = sample(&cosine(0.6, 0.0), 64)?;
    let phi: Vec<Complex64> = (0..64)
        .map(|l| {
            let t = curve.param(l);
            Complex64::new(1.0 + 0.5 * t.cos(), 0.3 * (2.0 * t).sin())
        })
        .collect();
    let g = GreenParams::plain(2.3, D, 0.0, 40.0, WindowSpec::default(), 0.05)?;
    let d = jump_relation_check_with(&curve, &g, &phi, &[0, 16, 40], diagonal)?;
    Ok(d.jump.max(d.one_sided))
}

fn jump_relation() -> Result<(bool, String)> {
    let e = jump_case(DiagonalTerm::Correct)?;
    Ok((e <= 1e-4, format!("max defect {e:.2e}")))
}

fn flipped_diagonal() -> Result<(bool, String)> {
    let e = jump_case(DiagonalTerm::Flipped)?;
    Ok((e > 1e-3, format!("defect with flipped diagonal sign {e:.2e} (must exceed 1e-3)")))
}

fn sweep_vs_dense() -> Result<(bool, String)> {
    let layers = [LayerSpec { k: 2.3, gamma: 1.0 }, LayerSpec { k: 3.4, gamma: 1.5 }, LayerSpec { k: 2.7, gamma: 0.8 }];
    let profiles = [cosine(0.6, 0.0), cosine(0.4, -1.4)];
    let choices: Vec<_> = layers.iter().map(|_| GreenChoice::new(30.0)).collect();
    let stack = Stack::build(D, 0.3, &layers, &profiles, 32, ImpedanceSpec::default(), &choices, false)?;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let rhs = (random_vec(32, &mut rng), random_vec(32, &mut rng));
    let a = schur_sweep(&stack, &rhs)?.flatten();
    let (b, _) = dense_reference_solve(&stack, &rhs)?;
    let b = b.flatten();
    let rel = vec_norm(&vec_sub(&a, &b)) / vec_norm(&b);
    Ok((rel <= 1e-10, format!("relative difference {rel:.2e}")))
}

fn unitarity() -> Result<(bool, String)> {
    let m = 64;
    let top = sample(&cosine(0.6, 0.0), m)?;
    let bot = sample(&cosine(0.6, -1.3), m)?;
    let width = layer_width(top.profile(), bot.profile());
    let choice = GreenChoice::new(80.0);
    let green = resolve_green(&choice, 2.3, D, 0.0, LayerRole::Middle { width })?;
    let mid = rtr_middle(&top, &bot, 1.0, ImpedanceSpec::default(), green)?.matrix();
    let green = resolve_green(&choice, 2.3, D, 0.0, LayerRole::Top { range: 0.6 })?;
    let semi = rtr_semi_infinite(Side::Top, &top, 1.0, ImpedanceSpec::default(), green)?.matrix();
    let mut w = top.weights();
    w.extend(bot.weights());
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut dev, mut gain) = (0.0f64, 0.0f64);
    for _ in 0..20 {
        dev = dev.max((weighted_gain(&mid, &random_vec(2 * m, &mut rng), &w)? - 1.0).abs());
        gain = gain.max(weighted_gain(&semi, &random_vec(m, &mut rng), &top.weights())?);
    }
    Ok((dev <= 5e-3 && gain <= 1.0 + 5e-3, format!("bounded layer |gain - 1| {dev:.2e}, half-plane gain {gain:.6}")))
}

fn two_layer(k0: f64, k1: f64, profile: Profile, m: usize, a: f64, alpha: f64) -> Result<(Stack, Vec<Option<Vec<Complex64>>>, IncidentWave)> {
    let layers = [LayerSpec { k: k0, gamma: 1.0 }, LayerSpec { k: k1, gamma: 1.0 }];
    let choices = [GreenChoice::new(a), GreenChoice::new(a)];
    let stack = Stack::build(D, alpha, &layers, &[profile], m, ImpedanceSpec::default(), &choices, true)?;
    let inc = IncidentWave::new(k0, alpha, Complex64::new(1.0, 0.0))?;
    let state = schur_sweep(&stack, &build_rhs(&stack, &inc)?)?;
    let dens = layer_densities(&stack, &state)?;
    Ok((stack, dens, inc))
}

fn flat_oracle() -> Result<(bool, String)> {
    let (stack, dens, inc) = two_layer(1.5, 2.5, Profile::flat(D, 0.0), 64, 100.0 * D, 0.0)?;
    let (up, down) = rayleigh_tables(&stack, &dens, RayleighRoute::Density, 0.3 * D)?;
    let er = (up.coefficient(0).unwrap_or_default() - Complex64::new(-0.25, 0.0)).norm();
    let et = (down.coefficient(0).unwrap_or_default() - Complex64::new(0.75, 0.0)).norm();
    let en = energy_defect(&up, &down, inc.beta);
    Ok((er <= 1e-6 && et <= 1e-6 && en <= 1e-8, format!("|R + 0.25| {er:.2e}, |T - 0.75| {et:.2e}, eps_en {en:.2e}")))
}

fn routes_agree() -> Result<(bool, String)> {
    let (stack, dens, _) = two_layer(2.5, 3.7, cosine(0.6, 0.0), 64, 400.0, 0.0)?;
    let (u1, d1) = rayleigh_tables(&stack, &dens, RayleighRoute::Density, 0.3 * D)?;
    let (u2, d2) = rayleigh_tables(&stack, &dens, RayleighRoute::LineFft, 0.3 * D)?;
    let p = [ModeClass::Propagating];
    let diff = u1.max_difference(&u2, &p).max(d1.max_difference(&d2, &p));
    Ok((diff <= 1e-6, format!("max propagating difference {diff:.2e}")))
}

fn translation_phase() -> Result<(bool, String)> {
    let shift = D / 7.0;
    let p = cosine(0.6, 0.0);
    let (s0, d0, i0) = two_layer(2.5, 3.7, p.clone(), 64, 120.0, 0.0)?;
    let (s1, d1, _) = two_layer(2.5, 3.7, p.translated(shift, 0.0), 64, 120.0, 0.0)?;
    let (u0, w0) = rayleigh_tables(&s0, &d0, RayleighRoute::Density, 0.3 * D)?;
    let (u1, w1) = rayleigh_tables(&s1, &d1, RayleighRoute::Density, 0.3 * D)?;
    let de = (energy_defect(&u0, &w0, i0.beta) - energy_defect(&u1, &w1, i0.beta)).abs();
    let mut worst = de;
    for (a, b) in [(&u0, &u1), (&w0, &w1)] {
        for e in a.entries.iter().filter(|e| e.class == ModeClass::Propagating) {
            let (Some(c0), Some(c1)) = (e.coefficient, b.coefficient(e.r)) else { continue };
            let expected = c0 * Complex64::from_polar(1.0, -(e.alpha - s0.alpha) * shift);
            worst = worst.max((c1 - expected).norm());
        }
    }
    Ok((worst <= 1e-8, format!("max phase-law defect {worst:.2e}")))
}

fn quasi_periodicity() -> Result<(bool, String)> {
    let alpha = 0.7;
    let (stack, dens, inc) = two_layer(2.5, 3.7, cosine(0.6, 0.0), 64, 120.0, alpha)?;
    let pts = [[0.4, 0.9], [0.4 + D, 0.9], [1.1, -1.2], [1.1 + D, -1.2]];
    let v = evaluate_field(&stack, &dens, Some(&inc), &pts)?;
    let phase = Complex64::from_polar(1.0, alpha * D);
    let mut worst = 0.0f64;
    for pair in v.chunks(2) {
        let (Some(a), Some(b)) = (pair[0].value, pair[1].value) else {
            return Ok((false, "sample point not resolved".into()));
        };
        worst = worst.max((b - phase * a).norm() / a.norm());
    }
    Ok((worst <= 1e-8, format!("max relative defect {worst:.2e}")))
}
