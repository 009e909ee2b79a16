//! Block-tridiagonal Robin-data system of a layer stack, its Schur-complement
//! sweep and a dense reference solver.
//!
//! Interface `j` carries `f_j = [f_{j,j}; f_{j,j+1}]`: the incoming Robin data
//! of the layer above and of the layer below. Layer `j` outgoing data on
//! `Gamma_j` equals `-f_{j,j+1}`, layer `j+1` outgoing data on `Gamma_j` equals
//! `-f_{j,j}`, except for incident-wave terms on `Gamma_0`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::densela::{lu_factor, CMatrix, CVector, LUFactors};
use crate::error::{Error, Result};
use crate::geometry::{layer_width, normal, sample, DiscretizedCurve, Orientation, Profile};
use crate::rtr::{merge_step, resolve_green, rtr_middle, rtr_semi_infinite, GreenChoice, ImpedanceSpec, LayerRole, RtRBlocks, RtRKind, Side};

/// Largest dense system accepted by [`dense_reference_solve`].
pub const DENSE_LIMIT: usize = 6000;

/// Stage conditions above this are reported as alerts.
pub const CONDITION_ALERT: f64 = 1e8;

/// Downgoing plane wave `amplitude * e^{i(alpha x1 - beta x2)}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IncidentWave {
    pub amplitude: Complex64,
    pub k: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl IncidentWave {
    pub fn new(k: f64, alpha: f64, amplitude: Complex64) -> Result<Self> {
        let disc = k * k - alpha * alpha;
        if !(k > 0.0) || !(disc > 0.0) {
            return Err(Error::Domain(format!("incident wave needs |alpha| < k, got alpha = {alpha}, k = {k}")));
        }
        Ok(Self {
            amplitude,
            k,
            alpha,
            beta: disc.sqrt(),
        })
    }

    /// Incidence angle measured from the downward vertical.
    pub fn from_angle(k: f64, theta: f64) -> Result<Self> {
        Self::new(k, k * theta.sin(), Complex64::new(1.0, 0.0))
    }

    pub fn value(&self, x: [f64; 2]) -> Complex64 {
        self.amplitude * Complex64::from_polar(1.0, self.alpha * x[0] - self.beta * x[1])
    }

    pub fn grad(&self, x: [f64; 2]) -> [Complex64; 2] {
        let u = self.value(x);
        [Complex64::new(0.0, self.alpha) * u, Complex64::new(0.0, -self.beta) * u]
    }
}

/// Wavenumber and material coefficient of one layer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub k: f64,
    pub gamma: f64,
}

/// Discretized interfaces and the RtR maps of all layers, top to bottom.
#[derive(Debug, Clone)]
pub struct Stack {
    pub d: f64,
    pub alpha: f64,
    pub layers: Vec<LayerSpec>,
    pub curves: Vec<DiscretizedCurve>,
    pub impedance: ImpedanceSpec,
    pub blocks: Vec<RtRBlocks>,
}

impl Stack {
    /// Builds every layer's RtR map. `choices` holds one entry per layer.
    /// Factorizations of bounded layers are kept only with `retain_middle`.
    #[allow(clippy::too_many_arguments)]
    pub fn build(
        d: f64,
        alpha: f64,
        layers: &[LayerSpec],
        profiles: &[Profile],
        m: usize,
        impedance: ImpedanceSpec,
        choices: &[GreenChoice],
        retain_middle: bool,
    ) -> Result<Self> {
        if profiles.is_empty() || layers.len() != profiles.len() + 1 {
            return Err(Error::Shape(format!(
                "{} layers need {} interfaces, got {}",
                layers.len(),
                layers.len().saturating_sub(1),
                profiles.len()
            )));
        }
        if choices.len() != layers.len() {
            return Err(Error::Shape(format!("{} Green choices for {} layers", choices.len(), layers.len())));
        }
        let curves = profiles.iter().map(|p| sample(p, m)).collect::<Result<Vec<_>>>()?;
        let n = profiles.len();
        let mut blocks = Vec::with_capacity(n + 1);
        for (j, (layer, choice)) in layers.iter().zip(choices).enumerate() {
            let block = if j == 0 {
                let (hi, lo) = profiles[0].extremes();
                let green = resolve_green(choice, layer.k, d, alpha, LayerRole::Top { range: hi - lo })?;
                rtr_semi_infinite(Side::Top, &curves[0], layer.gamma, impedance, green)
            } else if j == n {
                let (hi, lo) = profiles[n - 1].extremes();
                let green = resolve_green(choice, layer.k, d, alpha, LayerRole::Bottom { range: hi - lo })?;
                rtr_semi_infinite(Side::Bottom, &curves[n - 1], layer.gamma, impedance, green)
            } else {
                let width = layer_width(&profiles[j - 1], &profiles[j]);
                let green = resolve_green(choice, layer.k, d, alpha, LayerRole::Middle { width })?;
                rtr_middle(&curves[j - 1], &curves[j], layer.gamma, impedance, green).map(|mut b| {
                    if !retain_middle {
                        b.release_factors();
                    }
                    b
                })
            };
            blocks.push(block.map_err(|e| e.at_stage(j))?);
        }
        Ok(Self {
            d,
            alpha,
            layers: layers.to_vec(),
            curves,
            impedance,
            blocks,
        })
    }

    /// Number of interfaces `N + 1`.
    pub fn interfaces(&self) -> usize {
        self.curves.len()
    }

    pub fn nodes(&self) -> usize {
        self.curves[0].len()
    }
}

/// Incident-wave data `[-(gamma_0 d_n u - i eta u); -(gamma_0 d_n u + i eta u)]`
/// on `Gamma_0`, with the exterior normal of the top layer and the phase
/// `e^{i alpha x1}` removed.
pub fn build_rhs(stack: &Stack, incident: &IncidentWave) -> Result<(CVector, CVector)> {
    if (incident.k - stack.layers[0].k).abs() > 1e-12 * incident.k || (incident.alpha - stack.alpha).abs() > 1e-12 * incident.k.max(1.0) {
        return Err(Error::Domain("incident wave does not match the top layer".into()));
    }
    let curve = &stack.curves[0];
    let normals = normal(curve, Orientation::Down);
    let gamma = stack.layers[0].gamma;
    let ieta = Complex64::new(0.0, stack.impedance.eta());
    let mut r1 = Vec::with_capacity(curve.len());
    let mut r2 = Vec::with_capacity(curve.len());
    for (x, n) in curve.nodes.iter().zip(&normals) {
        let phase = Complex64::from_polar(1.0, -stack.alpha * x[0]);
        let u = incident.value(*x);
        let g = incident.grad(*x);
        let dn = gamma * (g[0] * n[0] + g[1] * n[1]);
        r1.push(-(dn - ieta * u) * phase);
        r2.push(-(dn + ieta * u) * phase);
    }
    Ok((r1, r2))
}

/// `[[I, A], [B, I]]` with `I - B A` factored.
#[derive(Debug, Clone)]
pub struct Block2Factor {
    a: CMatrix,
    b: CMatrix,
    inner: LUFactors,
}

impl Block2Factor {
    pub fn new(a: &CMatrix, b: &CMatrix) -> Result<Self> {
        if !a.is_square() || a.rows() != b.rows() || !b.is_square() {
            return Err(Error::Shape("block inverse needs square blocks of one order".into()));
        }
        let inner = lu_factor(&CMatrix::identity(a.rows()).sub(&b.matmul(a)))?;
        Ok(Self {
            a: a.clone(),
            b: b.clone(),
            inner,
        })
    }

    pub fn condition(&self) -> f64 {
        self.inner.condition()
    }

    /// Solves `[[I, A], [B, I]] [y1; y2] = [r1; r2]`.
    pub fn solve(&self, r1: &[Complex64], r2: &[Complex64]) -> (CVector, CVector) {
        let br1 = self.b.mul_vec(r1);
        let rhs: CVector = r2.iter().zip(&br1).map(|(x, y)| x - y).collect();
        let y2 = self.inner.solve_vec(&rhs);
        let ay2 = self.a.mul_vec(&y2);
        let y1 = r1.iter().zip(&ay2).map(|(x, y)| x - y).collect();
        (y1, y2)
    }
}

/// Explicit inverse of `[[I, A], [B, I]]`.
#[derive(Debug, Clone)]
pub struct Block2Inverse {
    pub x11: CMatrix,
    pub x12: CMatrix,
    pub x21: CMatrix,
    pub x22: CMatrix,
    pub condition: f64,
}

/// `[[I + A W B, -A W], [-W B, W]]` with `W = (I - B A)^{-1}`.
pub fn block2_inverse(a: &CMatrix, b: &CMatrix) -> Result<Block2Inverse> {
    let f = Block2Factor::new(a, b)?;
    let w = f.inner.inverse();
    let wb = w.matmul(b);
    let minus = Complex64::new(-1.0, 0.0);
    Ok(Block2Inverse {
        x11: a.matmul(&wb).add_diagonal(Complex64::new(1.0, 0.0)),
        x12: a.matmul(&w).scale(minus),
        x21: wb.scale(minus),
        x22: w,
        condition: f.condition(),
    })
}

/// Complex entries retained by the sweep.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct MemoryCounters {
    /// Entries of the cached elimination blocks when the sweep finished.
    pub cache_entries: usize,
    /// Largest number of matrix entries held at once by the sweep.
    pub peak_entries: usize,
}

/// Solved Robin data and sweep diagnostics.
#[derive(Debug, Clone)]
pub struct StackState {
    /// `(f_{j,j}, f_{j,j+1})` for each interface.
    pub f: Vec<(CVector, CVector)>,
    /// Condition estimates of `I - S_top S_tt` per stage, the last entry for the final system.
    pub stage_conditions: Vec<f64>,
    pub memory: MemoryCounters,
}

impl StackState {
    pub fn flatten(&self) -> CVector {
        self.f.iter().flat_map(|(a, b)| a.iter().chain(b).copied()).collect()
    }

    pub fn alerts(&self) -> Vec<usize> {
        self.stage_conditions
            .iter()
            .enumerate()
            .filter(|(_, c)| !c.is_finite() || **c > CONDITION_ALERT)
            .map(|(i, _)| i)
            .collect()
    }
}

struct StageCache {
    x11_tb: CMatrix,
    x21_tb: CMatrix,
    y: (CVector, CVector),
}

fn semi_map(block: &RtRBlocks) -> Result<&CMatrix> {
    match &block.kind {
        RtRKind::SemiInfinite { s } => Ok(s),
        RtRKind::Middle { .. } => Err(Error::Shape("expected a semi-infinite layer".into())),
    }
}

/// Forward elimination of `f_0, ..., f_{N-1}` through merged top maps, the
/// final `2M` system on `Gamma_N` and backward substitution.
pub fn schur_sweep(stack: &Stack, rhs: &(CVector, CVector)) -> Result<StackState> {
    let n = stack.interfaces() - 1;
    let m = stack.nodes();
    if rhs.0.len() != m || rhs.1.len() != m {
        return Err(Error::Shape(format!("right-hand side of length {} for {m} nodes", rhs.0.len())));
    }
    let mm = m * m;
    let mut s_top = semi_map(&stack.blocks[0])?.clone();
    let (mut r1, mut r2) = rhs.clone();
    let mut cache: Vec<StageCache> = Vec::with_capacity(n);
    let mut conditions = Vec::with_capacity(n + 1);
    let mut peak = mm;
    for j in 0..n {
        let layer = &stack.blocks[j + 1];
        let RtRKind::Middle { tt, tb, bt, .. } = &layer.kind else {
            return Err(Error::Shape(format!("layer {} is not bounded", j + 1)).at_stage(j));
        };
        let step = merge_step(&s_top, layer).map_err(|e| e.at_stage(j))?;
        let cond = step.inner.condition();
        // y = D^{-1} [r1; r2] with D = [[I, S_tt], [S_top, I]]
        let sr1 = s_top.mul_vec(&r1);
        let y2 = step.inner.solve_vec(&r2.iter().zip(&sr1).map(|(a, b)| a - b).collect::<Vec<_>>());
        let t = tt.mul_vec(&y2);
        let y1: CVector = r1.iter().zip(&t).map(|(a, b)| a - b).collect();
        let x11_tb = tb.add(&tt.matmul(&step.v));
        let x21_tb = step.v.scale(Complex64::new(-1.0, 0.0));
        // held at once: cache, the old and new top maps, the inner factors and V
        peak = peak.max(2 * mm * cache.len() + 4 * mm + 2 * mm);
        r1 = vec![Complex64::new(0.0, 0.0); m];
        r2 = bt.mul_vec(&y2).iter().map(|v| -v).collect();
        s_top = step.merged;
        cache.push(StageCache {
            x11_tb,
            x21_tb,
            y: (y1, y2),
        });
        conditions.push(cond);
        if !cond.is_finite() {
            return Err(Error::Singular { pivot: 0, cond }.at_stage(j));
        }
    }
    let bottom = semi_map(&stack.blocks[n + 1]).map_err(|e| e.at_stage(n))?;
    let last = Block2Factor::new(bottom, &s_top).map_err(|e| e.at_stage(n))?;
    conditions.push(last.condition());
    peak = peak.max(2 * mm * cache.len() + 3 * mm);
    let mut f = vec![(Vec::new(), Vec::new()); n + 1];
    f[n] = last.solve(&r1, &r2);
    for j in (0..n).rev() {
        let c = &cache[j];
        let below = &f[j + 1].0;
        let a = c.x11_tb.mul_vec(below);
        let b = c.x21_tb.mul_vec(below);
        f[j] = (
            c.y.0.iter().zip(&a).map(|(y, v)| y - v).collect(),
            c.y.1.iter().zip(&b).map(|(y, v)| y - v).collect(),
        );
    }
    Ok(StackState {
        f,
        stage_conditions: conditions,
        memory: MemoryCounters {
            cache_entries: cache.iter().map(|c| c.x11_tb.entries() + c.x21_tb.entries()).sum(),
            peak_entries: peak,
        },
    })
}

/// Full DDM matrix, unknowns ordered `f_{0,0}, f_{0,1}, f_{1,1}, f_{1,2}, ...`.
pub fn ddm_matrix(stack: &Stack) -> Result<CMatrix> {
    let n = stack.interfaces() - 1;
    let m = stack.nodes();
    let size = 2 * m * (n + 1);
    if size > DENSE_LIMIT {
        return Err(Error::SizeGuard { size, limit: DENSE_LIMIT });
    }
    let eye = CMatrix::identity(m);
    let mut a = CMatrix::zeros(size, size);
    for j in 0..=n {
        let row_b = 2 * m * j;
        let row_a = row_b + m;
        let col_jj = 2 * m * j;
        let col_jn = col_jj + m;
        // outgoing data of layer j + 1 on Gamma_j
        a.set_block(row_b, col_jj, &eye);
        match &stack.blocks[j + 1].kind {
            RtRKind::SemiInfinite { s } => a.set_block(row_b, col_jn, s),
            RtRKind::Middle { tt, tb, .. } => {
                a.set_block(row_b, col_jn, tt);
                a.set_block(row_b, col_jn + m, tb);
            }
        }
        // outgoing data of layer j on Gamma_j
        a.set_block(row_a, col_jn, &eye);
        match &stack.blocks[j].kind {
            RtRKind::SemiInfinite { s } => a.set_block(row_a, col_jj, s),
            RtRKind::Middle { bt, bb, .. } => {
                a.set_block(row_a, col_jj - m, bt);
                a.set_block(row_a, col_jj, bb);
            }
        }
    }
    Ok(a)
}

/// Dense solution of the DDM system and its condition estimate.
pub fn dense_reference_solve(stack: &Stack, rhs: &(CVector, CVector)) -> Result<(StackState, f64)> {
    let a = ddm_matrix(stack)?;
    let m = stack.nodes();
    let mut b = vec![Complex64::new(0.0, 0.0); a.rows()];
    b[..m].copy_from_slice(&rhs.0);
    b[m..2 * m].copy_from_slice(&rhs.1);
    let lu = lu_factor(&a)?;
    let x = lu.solve_vec(&b);
    let f = x.chunks(2 * m).map(|c| (c[..m].to_vec(), c[m..].to_vec())).collect();
    let cond = lu.condition();
    Ok((
        StackState {
            f,
            stage_conditions: vec![cond],
            memory: MemoryCounters {
                cache_entries: 0,
                peak_entries: a.entries() + lu.entries(),
            },
        },
        cond,
    ))
}
