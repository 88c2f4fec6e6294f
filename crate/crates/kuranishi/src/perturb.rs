//! Adapted perturbations, built level by level over `|J| = 1, …, M`.
//!
//! `ν_J = ν̃_J + Σ fixes`, where the extension `ν̃_J` pushes the lower
//! perturbations forward along the cores and cuts them off with a ladder
//! of smooth cutoffs, and each fix is a bump times an affine map placed
//! at a degenerate zero inside `C̃_J`. Everything except the sampled core
//! clouds is stored in the term lists, and the clouds are recomputed
//! deterministically from the atlas and the reduction, so a serialized
//! perturbation replays exactly.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::atlas::{fmt_index, is_proper_subset, AtlasSpec, IndexSet};
use crate::config::Tolerances;
use crate::error::{Error, Result};
use crate::realization::{dist, invert_change};
use crate::refine::{lattice, AdditiveNorms, CoreCloud, Geometry, ReductionContext};
use crate::report::{Verdict, Witness};
use crate::zeros::{find_zeros, ZeroPoint};

/// Transversality margin the fixes aim for.
pub const FIX_SIGMA: f64 = 1e-3;

const FIX_RETRIES: usize = 16;
const FIX_ROUNDS: usize = 6;

// cutoffs

fn smooth_half(t: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else {
        (-1.0 / t).exp()
    }
}

/// C^∞ step: 0 for `t ≤ 0`, 1 for `t ≥ 1`.
pub fn smoothstep(t: f64) -> f64 {
    let a = smooth_half(t);
    let b = smooth_half(1.0 - t);
    if a + b == 0.0 {
        0.0
    } else {
        a / (a + b)
    }
}

/// 1 for `d ≤ a`, 0 for `d ≥ b`, smooth in between.
pub fn cutoff(d: f64, a: f64, b: f64) -> f64 {
    if d <= a {
        1.0
    } else if d >= b {
        0.0
    } else {
        smoothstep((b - d) / (b - a))
    }
}

/// Radial bump with value 1 and vanishing gradient at the centre.
fn bump_profile(r: f64) -> f64 {
    if r >= 1.0 {
        0.0
    } else {
        (1.0 - 1.0 / (1.0 - r * r)).exp()
    }
}

// terms

/// `ψ(|y − z|/ρ) · (c + A(y − z))`, with `A` stored row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FixTerm {
    pub center: Vec<f64>,
    pub radius: f64,
    pub constant: Vec<f64>,
    pub linear: Vec<f64>,
}

impl FixTerm {
    pub fn eval(&self, y: &[f64]) -> Vec<f64> {
        let m = self.constant.len();
        let n = self.center.len();
        let r = dist(y, &self.center) / self.radius;
        if r >= 1.0 {
            return vec![0.0; m];
        }
        let b = bump_profile(r);
        (0..m)
            .map(|i| {
                let lin: f64 = (0..n).map(|a| self.linear[i * n + a] * (y[a] - self.center[a])).sum();
                b * (self.constant[i] + lin)
            })
            .collect()
    }

    /// Euclidean bound of the term.
    pub fn sup(&self) -> f64 {
        norm(&self.constant) + norm(&self.linear) * self.radius
    }
}

/// Parameters of the extension `ν̃_J`; `radii[ℓ + 1] = r_ℓ` for
/// `ℓ = −1, …, k`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Extension {
    pub core_level: f64,
    pub spacing: f64,
    pub resolution: f64,
    pub radii: Vec<f64>,
    pub beta_plateau: f64,
    pub beta_outer: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChartTerms {
    pub index: IndexSet,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extension: Option<Extension>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub fixes: Vec<FixTerm>,
}

impl ChartTerms {
    pub fn zero(index: &[u32]) -> Self {
        ChartTerms { index: index.to_vec(), extension: None, fixes: Vec::new() }
    }

    pub fn is_zero(&self) -> bool {
        self.extension.is_none() && self.fixes.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub condition: String,
    #[serde(with = "crate::report::extended")]
    pub margin: f64,
    pub passed: bool,
}

/// Serialized under the `perturbation` field.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Perturbation {
    pub seed: u64,
    pub sigma: f64,
    pub delta: f64,
    /// Uniform factor applied to every `ν_I` (1 for constructed ones).
    #[serde(default = "unit")]
    pub scale: f64,
    pub charts: Vec<ChartTerms>,
    #[serde(default)]
    pub ledger: Vec<LedgerEntry>,
}

fn unit() -> f64 {
    1.0
}

impl Perturbation {
    pub fn zero(atlas: &AtlasSpec, ctx: &ReductionContext) -> Self {
        Perturbation {
            seed: 0,
            sigma: ctx.sigma,
            delta: ctx.delta,
            scale: 1.0,
            charts: atlas.index_sets().iter().map(|i| ChartTerms::zero(i)).collect(),
            ledger: Vec::new(),
        }
    }

    pub fn scaled(&self, c: f64) -> Self {
        Perturbation { scale: self.scale * c, ledger: Vec::new(), ..self.clone() }
    }

    pub fn chart(&self, idx: &[u32]) -> Option<&ChartTerms> {
        self.charts.iter().find(|t| t.index == idx)
    }

    pub fn chart_mut(&mut self, idx: &[u32]) -> Option<&mut ChartTerms> {
        self.charts.iter_mut().find(|t| t.index == idx)
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

fn axpy(acc: &mut [f64], a: f64, v: &[f64]) {
    for (x, y) in acc.iter_mut().zip(v) {
        *x += a * y;
    }
}

// evaluation

/// Sampled core `N_JI`, indexed by its first embedded coordinate.
#[derive(Clone, Debug)]
pub struct CoreEntry {
    pub source: IndexSet,
    pub cloud: CoreCloud,
    order: Vec<usize>,
    keys: Vec<f64>,
}

impl CoreEntry {
    fn new(source: IndexSet, cloud: CoreCloud) -> Self {
        let mut order: Vec<usize> = (0..cloud.embedded.len()).collect();
        let key = |p: usize| cloud.embedded[p].first().copied().unwrap_or(0.0);
        order.sort_by(|&a, &b| key(a).total_cmp(&key(b)));
        let keys = order.iter().map(|&p| key(p)).collect();
        CoreEntry { source, cloud, order, keys }
    }

    /// Nearest cloud point closer than `limit`, as `(distance, index)`.
    fn search(&self, e: &[f64], limit: f64) -> Option<(f64, usize)> {
        let (a, b) = if limit.is_finite() && !e.is_empty() {
            (self.keys.partition_point(|&k| k <= e[0] - limit), self.keys.partition_point(|&k| k < e[0] + limit))
        } else {
            (0, self.keys.len())
        };
        let mut best: Option<(f64, usize)> = None;
        for &p in &self.order[a..b] {
            let d = dist(&self.cloud.embedded[p], e);
            if d < limit && best.is_none_or(|(bd, _)| d < bd) {
                best = Some((d, p));
            }
        }
        best
    }

    /// Distance to the cloud if it is below `limit`, else `∞`.
    pub fn near(&self, e: &[f64], limit: f64) -> f64 {
        self.search(e, limit).map_or(f64::INFINITY, |(d, _)| d)
    }

    fn nearest(&self, e: &[f64], limit: f64) -> usize {
        self.search(e, limit).or_else(|| self.search(e, f64::INFINITY)).map_or(0, |(_, p)| p)
    }
}

/// Evaluates `ν_I` on chart coordinates; owns the recomputed core clouds.
pub struct Evaluator<'a> {
    pub atlas: &'a AtlasSpec,
    pub ctx: &'a ReductionContext,
    pub geom: Geometry<'a>,
    pub norms: AdditiveNorms,
    scale: f64,
    terms: BTreeMap<IndexSet, ChartTerms>,
    cores: BTreeMap<IndexSet, Vec<CoreEntry>>,
    hats: BTreeMap<(IndexSet, IndexSet), DMatrix<f64>>,
}

impl<'a> Evaluator<'a> {
    pub fn new(atlas: &'a AtlasSpec, ctx: &'a ReductionContext) -> Result<Self> {
        let mut hats = BTreeMap::new();
        for ch in atlas.changes.values() {
            hats.insert((ch.source.clone(), ch.target.clone()), ch.hat_phi.to_f64());
        }
        Ok(Evaluator {
            atlas,
            ctx,
            geom: Geometry::new(atlas, ctx),
            norms: AdditiveNorms::new(atlas, &ctx.norms)?,
            scale: 1.0,
            terms: BTreeMap::new(),
            cores: BTreeMap::new(),
            hats,
        })
    }

    /// Evaluator for a stored perturbation.
    pub fn load(atlas: &'a AtlasSpec, ctx: &'a ReductionContext, p: &Perturbation) -> Result<Self> {
        let mut ev = Evaluator::new(atlas, ctx)?;
        ev.scale = p.scale;
        for t in &p.charts {
            if !atlas.has(&t.index) {
                return Err(Error::Schema(format!("perturbation names unknown chart {}", fmt_index(&t.index))));
            }
            ev.install(t.clone())?;
        }
        Ok(ev)
    }

    pub fn install(&mut self, t: ChartTerms) -> Result<()> {
        if let Some(ext) = &t.extension {
            let c = self.core_entries(&t.index, ext.core_level, ext.spacing);
            self.cores.insert(t.index.clone(), c);
        }
        self.terms.insert(t.index.clone(), t);
        Ok(())
    }

    pub fn perturbation(&self, seed: u64) -> Perturbation {
        Perturbation {
            seed,
            sigma: self.ctx.sigma,
            delta: self.ctx.delta,
            scale: self.scale,
            charts: self
                .atlas
                .index_sets()
                .iter()
                .map(|i| self.terms.get(i).cloned().unwrap_or_else(|| ChartTerms::zero(i)))
                .collect(),
            ledger: Vec::new(),
        }
    }

    pub fn is_zero(&self, idx: &[u32]) -> bool {
        self.terms.get(idx).is_none_or(|t| t.is_zero())
    }

    pub fn hat(&self, i: &[u32], j: &[u32]) -> &DMatrix<f64> {
        &self.hats[&(i.to_vec(), j.to_vec())]
    }

    /// Clouds of `N^level_JI` for all `I ⊊ J`.
    pub fn core_entries(&self, j: &[u32], level: f64, spacing: f64) -> Vec<CoreEntry> {
        self.atlas
            .index_sets()
            .into_iter()
            .filter(|i| is_proper_subset(i, j))
            .filter_map(|i| {
                let c = self.geom.core_cloud(j, &i, level, spacing);
                (!c.is_empty()).then(|| CoreEntry::new(i, c))
            })
            .collect()
    }

    pub fn cores(&self, j: &[u32]) -> &[CoreEntry] {
        self.cores.get(j).map_or(&[], |v| v.as_slice())
    }

    /// `ν_J(y)`.
    pub fn nu(&self, j: &[u32], y: &[f64]) -> Vec<f64> {
        let mut v = self.raw(j, y, None);
        if self.scale != 1.0 {
            v.iter_mut().for_each(|a| *a *= self.scale);
        }
        v
    }

    /// `s_J(y) + ν_J(y)`.
    pub fn perturbed(&self, j: &[u32], y: &[f64]) -> Vec<f64> {
        let mut s = self.atlas.chart(j).section.eval(y);
        axpy(&mut s, 1.0, &self.nu(j, y));
        s
    }

    /// Unscaled `ν_J`, optionally with terms for `J` not yet installed.
    pub fn raw(&self, j: &[u32], y: &[f64], pending: Option<(&ChartTerms, &[CoreEntry])>) -> Vec<f64> {
        let m = self.atlas.chart(j).obstruction_dim;
        let (t, cores) = match pending {
            Some(p) => p,
            None => match self.terms.get(j) {
                Some(t) => (t, self.cores(j)),
                None => return vec![0.0; m],
            },
        };
        let mut out = match &t.extension {
            Some(ext) => self.extension_value(j, y, ext, cores),
            None => vec![0.0; m],
        };
        for f in &t.fixes {
            axpy(&mut out, 1.0, &f.eval(y));
        }
        out
    }

    /// `ν̃_J(y) = β(y) f_k(y)` with the ladder
    /// `f_ℓ = Σ_{|L|=ℓ} χ_L e_L + (1 − Σ χ_L) f_{ℓ−1}`.
    pub fn extension_value(&self, j: &[u32], y: &[f64], ext: &Extension, cores: &[CoreEntry]) -> Vec<f64> {
        let m = self.atlas.chart(j).obstruction_dim;
        let k = j.len() - 1;
        let e = self.geom.embed(j, y);
        let limit = ext.radii[0];
        let d: Vec<f64> = cores.iter().map(|c| c.near(&e, limit)).collect();
        let dmin = d.iter().copied().fold(f64::INFINITY, f64::min);
        let beta = cutoff(dmin, ext.beta_plateau, ext.beta_outer);
        if beta == 0.0 {
            return vec![0.0; m];
        }
        let eps = ext.resolution;
        let mut f = vec![0.0; m];
        for l in 1..=k {
            let (a, b) = (ext.radii[l + 1] + eps, ext.radii[l] - eps);
            let mut acc = vec![0.0; m];
            let mut s = 0.0;
            for (c, dc) in cores.iter().zip(&d) {
                if c.source.len() != l {
                    continue;
                }
                let chi = cutoff(*dc, a, b);
                if chi > 0.0 {
                    axpy(&mut acc, chi, &self.pushforward(j, c, y));
                    s += chi;
                }
            }
            for (x, v) in f.iter_mut().zip(&acc) {
                *x = v + (1.0 - s) * *x;
            }
        }
        f.iter_mut().for_each(|v| *v *= beta);
        f
    }

    /// `e_L(y) = φ̂_LJ ν_L(ρ_L(y))`, with `ρ_L` the nearest-point
    /// retraction onto `im φ_LJ` in the embedded metric.
    pub fn pushforward(&self, j: &[u32], c: &CoreEntry, y: &[f64]) -> Vec<f64> {
        let x = self.retract(j, c, y);
        let v = self.raw(&c.source, &x, None);
        let h = self.hat(&c.source, j);
        if v.is_empty() {
            return vec![0.0; h.nrows()];
        }
        (h * DVector::from_column_slice(&v)).iter().copied().collect()
    }

    pub fn retract(&self, j: &[u32], c: &CoreEntry, y: &[f64]) -> Vec<f64> {
        let e = self.geom.embed(j, y);
        let p = c.nearest(&e, self.ctx.eta(j.len() as f64 - 1.0));
        let mut x = c.cloud.source[p].clone();
        if x.is_empty() {
            return x;
        }
        let phi = &self.atlas.change(&c.source, j).phi;
        let emb = self.geom.embedding(j);
        for _ in 0..40 {
            let yx = phi.eval(&x);
            let r: Vec<f64> = emb.eval(&yx).iter().zip(&e).map(|(a, b)| a - b).collect();
            let jac = emb.jacobian(&yx) * phi.jacobian(&x);
            let svd = jac.svd(true, true);
            let Ok(step) = svd.solve(&(-DVector::from_column_slice(&r)), 1e-14) else { break };
            let sn = step.norm();
            for (a, s) in x.iter_mut().zip(step.iter()) {
                *a += s;
            }
            if sn < 1e-15 * (1.0 + norm(&x)) {
                break;
            }
        }
        x
    }

    /// `μ_J(y) = φ̂_IJ ν_I(φ_IJ⁻¹ y)` on the cores `N^level_JI`, cross-checked
    /// between overlapping prescriptions; `None` off the cores.
    pub fn pushforward_mu(&self, j: &[u32], level: f64, y: &[f64], tol_eq: f64) -> Result<Option<Vec<f64>>> {
        let mut val: Option<(IndexSet, Vec<f64>)> = None;
        for i in self.atlas.index_sets() {
            if !is_proper_subset(&i, j) || !self.geom.in_core(j, &i, level, y) {
                continue;
            }
            let x = invert_change(self.atlas, &i, j, y, 1e-12)
                .ok_or_else(|| Error::Inversion(format!("{:?} not in im φ_{}{}", y, fmt_index(&i), fmt_index(j))))?;
            let v = self.nu(&i, &x);
            let w: Vec<f64> = if v.is_empty() {
                vec![0.0; self.atlas.chart(j).obstruction_dim]
            } else {
                (self.hat(&i, j) * DVector::from_column_slice(&v)).iter().copied().collect()
            };
            if let Some((h, u)) = &val {
                let err = u.iter().zip(&w).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                if err > tol_eq {
                    return Err(Error::Incompatible(format!(
                        "μ_{} from {} and {} differ by {err:.3e} at {:?}",
                        fmt_index(j),
                        fmt_index(h),
                        fmt_index(&i),
                        y
                    )));
                }
            } else {
                val = Some((i, w));
            }
        }
        Ok(val.map(|v| v.1))
    }

    /// Finite-difference Jacobian of `s_J + ν_J`.
    pub fn jacobian(&self, j: &[u32], y: &[f64]) -> DMatrix<f64> {
        jacobian_fd(&|z: &[f64]| self.perturbed(j, z), y, self.atlas.chart(j).obstruction_dim)
    }

    pub fn norm_of(&self, j: &[u32], v: &[f64]) -> f64 {
        self.norms.norm(j, v)
    }

    /// Zeros of `s_J + ν_J` over the closure of `V^level_J`.
    pub fn zeros_on_level(&self, j: &[u32], level: f64, density: usize) -> Vec<ZeroPoint> {
        let boxes = self.geom.level_boxes(j, level);
        let f = |y: &[f64]| self.perturbed(j, y);
        let jac = |y: &[f64]| self.jacobian(j, y);
        let u = &self.atlas.chart(j).domain;
        let inside = |y: &[f64]| u.contains(y) && self.geom.in_level_closure(j, level, y);
        zeros_in(&f, &jac, &inside, &boxes, density, self.atlas.chart(j).dim())
    }
}

pub fn jacobian_fd(f: &dyn Fn(&[f64]) -> Vec<f64>, y: &[f64], m: usize) -> DMatrix<f64> {
    let n = y.len();
    let mut jac = DMatrix::zeros(m, n);
    for a in 0..n {
        let h = 1e-6 * (1.0 + y[a].abs());
        let mut p = y.to_vec();
        let mut q = y.to_vec();
        p[a] += h;
        q[a] -= h;
        let (fp, fq) = (f(&p), f(&q));
        for i in 0..m {
            jac[(i, a)] = (fp[i] - fq[i]) / (2.0 * h);
        }
    }
    jac
}

/// Mesh density per axis for zero location in dimension `n`.
pub fn zero_density(n: usize, base: usize) -> usize {
    match n {
        0 | 1 => base * 20,
        2 => base * 3,
        _ => base,
    }
}

fn zeros_in(
    f: &(dyn Fn(&[f64]) -> Vec<f64> + Sync),
    jac: &(dyn Fn(&[f64]) -> DMatrix<f64> + Sync),
    inside: &(dyn Fn(&[f64]) -> bool + Sync),
    boxes: &[(Vec<f64>, Vec<f64>)],
    density: usize,
    n: usize,
) -> Vec<ZeroPoint> {
    if n == 0 {
        if boxes.is_empty() || !inside(&[]) {
            return Vec::new();
        }
        let v = f(&[]);
        return if norm(&v) == 0.0 {
            vec![ZeroPoint { x: Vec::new(), residual: 0.0, sigma_min: f64::INFINITY }]
        } else {
            Vec::new()
        };
    }
    find_zeros(&f, &jac, &inside, boxes, density, 1e-7)
}

// construction

/// Build options; the defaults are used by the pipeline.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BuildOptions {
    /// Per-axis mesh base for zero location (see [`zero_density`]).
    pub zero_mesh: usize,
    pub fix_sigma: f64,
}

impl Default for BuildOptions {
    fn default() -> Self {
        BuildOptions { zero_mesh: 20, fix_sigma: FIX_SIGMA }
    }
}

fn chart_seed(seed: u64, j: &[u32]) -> u64 {
    j.iter().fold(seed ^ 0x9e37_79b9_7f4a_7c15, |h, &i| h.rotate_left(13) ^ (i as u64).wrapping_mul(0xff51_afd7_ed55_8ccd))
}

/// Extension data for `J` at `k = |J| − 1`: radii
/// `r_ℓ = η_k − (ℓ+1)/(k+1) (η_k − η_{k+1/2})` and a cloud spacing fine
/// enough that the cutoff plateaus stay ordered.
pub fn extend_strongly_admissible(ev: &Evaluator, j: &[u32]) -> Result<Option<(ChartTerms, Vec<CoreEntry>)>> {
    let k = j.len() - 1;
    if k == 0 {
        return Ok(None);
    }
    let ctx = ev.ctx;
    let kf = k as f64;
    let (eta_k, eta_h) = (ctx.eta(kf), ctx.eta(kf + 0.5));
    let radii: Vec<f64> = (-1..=k as i64).map(|l| eta_k - (l + 1) as f64 / (kf + 1.0) * (eta_k - eta_h)).collect();
    let gap = (eta_k - eta_h) / (kf + 1.0);
    let mut h = gap / 8.0;
    for _ in 0..6 {
        let cores = ev.core_entries(j, kf + 0.5, h);
        // only cores carrying a nonzero lower perturbation matter
        let live: Vec<CoreEntry> = cores.into_iter().filter(|c| !ev.is_zero(&c.source) || has_live_below(ev, &c.source)).collect();
        if live.is_empty() {
            return Ok(None);
        }
        let eps = resolution(ev, j, &live, h);
        if 2.0 * eps < gap / 2.0 {
            let ext = Extension {
                core_level: kf + 0.5,
                spacing: h,
                resolution: eps,
                radii: radii.clone(),
                beta_plateau: eps + 0.3 * (eta_h - 2.0 * eps),
                beta_outer: eta_h - eps,
            };
            // clouds are recomputed from the stored spacing on install, so
            // keep every core to make replay independent of liveness
            let all = ev.core_entries(j, kf + 0.5, h);
            let t = ChartTerms { index: j.to_vec(), extension: Some(ext), fixes: Vec::new() };
            return Ok(Some((t, all)));
        }
        h /= 2.0;
    }
    Err(Error::Boundary(format!("core clouds of {} too coarse for the cutoff ladder", fmt_index(j))))
}

fn has_live_below(ev: &Evaluator, i: &[u32]) -> bool {
    ev.atlas.index_sets().iter().any(|h| is_proper_subset(h, i) && !ev.is_zero(h))
}

/// Upper bound on how far a core point can be from the nearest cloud point.
fn resolution(ev: &Evaluator, j: &[u32], cores: &[CoreEntry], h: f64) -> f64 {
    let emb = ev.geom.embedding(j);
    let mut eps: f64 = 0.0;
    for c in cores {
        let n = ev.atlas.chart(&c.source).dim();
        if n == 0 {
            continue;
        }
        let phi = &ev.atlas.change(&c.source, j).phi;
        let lip = c
            .cloud
            .source
            .iter()
            .step_by(1.max(c.cloud.len() / 64))
            .map(|x| {
                let jac = emb.jacobian(&phi.eval(x)) * phi.jacobian(x);
                jac.singular_values().iter().copied().fold(0.0, f64::max)
            })
            .fold(0.0, f64::max);
        eps = eps.max(1.25 * lip * h * (n as f64).sqrt() / 2.0);
    }
    eps + 1e-12
}

/// Sup of `‖·‖_J` of a map over a lattice of `cl V^level_J`.
fn sampled_sup(ev: &Evaluator, j: &[u32], level: f64, f: &(dyn Fn(&[f64]) -> Vec<f64> + Sync), per_axis: f64) -> f64 {
    let n = ev.atlas.chart(j).dim();
    if n == 0 {
        return if ev.ctx.v[j].is_trivially_empty() { 0.0 } else { ev.norm_of(j, &f(&[])) };
    }
    let boxes = ev.geom.level_boxes(j, level);
    let ext = boxes.iter().flat_map(|(lo, hi)| lo.iter().zip(hi).map(|(a, b)| b - a)).fold(0.0, f64::max);
    let pts = ev.geom.level_lattice(j, level, ext / per_axis);
    pts.par_iter().map(|y| ev.norm_of(j, &f(y))).reduce(|| 0.0, f64::max)
}

fn per_axis(n: usize) -> f64 {
    match n {
        0 | 1 => 400.0,
        2 => 80.0,
        _ => 20.0,
    }
}

/// Seeded bump-times-affine terms at the degenerate zeros of
/// `s_J + ν̃_J` in `C̃_J`, keeping away from the core neighbourhood where
/// `ν_J` must equal `ν̃_J`.
pub fn transversality_fix(
    ev: &Evaluator,
    j: &[u32],
    terms: &mut ChartTerms,
    cores: &[CoreEntry],
    seed: u64,
    opts: &BuildOptions,
) -> Result<()> {
    let chart = ev.atlas.chart(j);
    let (n, m) = (chart.dim(), chart.obstruction_dim);
    let level = j.len() as f64;
    let ctx = ev.ctx;
    let eta_near = ctx.eta(level - 0.5);
    let resol = terms.extension.as_ref().map_or(0.0, |e| e.resolution);
    let sup_tilde = {
        let t0 = ChartTerms { fixes: Vec::new(), ..terms.clone() };
        sampled_sup(ev, j, level - 1.0, &|y: &[f64]| ev.raw(j, y, Some((&t0, cores))), per_axis(n))
    };
    let budget = ctx.sigma - sup_tilde;
    if budget <= 0.0 {
        return Err(Error::Nonpositive(format!("no room for fixes in {}: sup ν̃ = {sup_tilde:.3e} ≥ σ", fmt_index(j))));
    }
    let amp = 0.25 * budget / (ctx.norms.global * ev.norms.base_op_bound(j)).max(1e-300);
    let mut rng = ChaCha8Rng::seed_from_u64(chart_seed(seed, j));
    let core_dist = |y: &[f64]| {
        let e = ev.geom.embed(j, y);
        cores.iter().map(|c| c.near(&e, f64::INFINITY)).fold(f64::INFINITY, f64::min)
    };
    let density = zero_density(n, opts.zero_mesh);
    for _round in 0..FIX_ROUNDS {
        let f = |y: &[f64]| {
            let mut s = chart.section.eval(y);
            axpy(&mut s, 1.0, &ev.raw(j, y, Some((terms, cores))));
            s
        };
        let jac = |y: &[f64]| jacobian_fd(&f, y, m);
        let u = &chart.domain;
        let inside = |y: &[f64]| u.contains(y) && ev.geom.in_level_closure(j, level, y);
        let zeros = zeros_in(&f, &jac, &inside, &ev.geom.level_boxes(j, level), density, n);
        let mut bad = Vec::new();
        for z in &zeros {
            let near_core = core_dist(&z.x) < eta_near + resol;
            let in_c = ev.geom.in_c_tilde(j, &z.x);
            if !in_c && !near_core {
                return Err(Error::Confinement(format!(
                    "zero {:?} of s+ν̃ in chart {} lies outside C̃ and away from the cores",
                    z.x,
                    fmt_index(j)
                )));
            }
            if z.sigma_min >= opts.fix_sigma {
                continue;
            }
            if near_core {
                return Err(Error::Transversality(format!(
                    "degenerate zero {:?} (σ_min {:.2e}) next to a core of {}",
                    z.x,
                    z.sigma_min,
                    fmt_index(j)
                )));
            }
            bad.push(z.clone());
        }
        if bad.is_empty() {
            return Ok(());
        }
        for z in &bad {
            let others: Vec<&ZeroPoint> = zeros.iter().filter(|o| dist(&o.x, &z.x) > 1e-3).collect();
            let fix = place_fix(ev, j, terms, cores, z, &others, amp, &mut rng, opts, &core_dist, eta_near + resol)?;
            terms.fixes.push(fix);
        }
    }
    Err(Error::Transversality(format!("degenerate zeros of {} persist after {FIX_ROUNDS} rounds", fmt_index(j))))
}

#[allow(clippy::too_many_arguments)]
fn place_fix(
    ev: &Evaluator,
    j: &[u32],
    terms: &ChartTerms,
    cores: &[CoreEntry],
    z: &ZeroPoint,
    others: &[&ZeroPoint],
    amp: f64,
    rng: &mut ChaCha8Rng,
    opts: &BuildOptions,
    core_dist: &dyn Fn(&[f64]) -> f64,
    core_clear: f64,
) -> Result<FixTerm> {
    let chart = ev.atlas.chart(j);
    let (n, m) = (chart.dim(), chart.obstruction_dim);
    let emb_stretch = if ev.geom.is_isometric(j) { 1.0 } else { 4.0 };
    let ball_ok = |rho: f64| {
        if others.iter().any(|o| dist(&o.x, &z.x) <= rho) {
            return false;
        }
        if terms.fixes.iter().any(|f| dist(&f.center, &z.x) <= rho + f.radius) {
            return false;
        }
        if core_dist(&z.x) <= core_clear + emb_stretch * rho {
            return false;
        }
        let lo: Vec<f64> = z.x.iter().map(|a| a - rho).collect();
        let hi: Vec<f64> = z.x.iter().map(|a| a + rho).collect();
        lattice(&lo, &hi, rho / 6.0)
            .iter()
            .filter(|y| dist(y, &z.x) < rho)
            .all(|y| chart.domain.contains(y) && ev.geom.in_c_tilde(j, y))
    };
    let mut rho = 0.25;
    while !ball_ok(rho) {
        rho /= 2.0;
        if rho < 1e-5 {
            return Err(Error::Transversality(format!(
                "no room for a fix ball at {:?} in {}",
                z.x,
                fmt_index(j)
            )));
        }
    }
    let mut worst = 0.0f64;
    for attempt in 0..FIX_RETRIES {
        if attempt > 0 && attempt % 4 == 0 {
            rho /= 2.0;
        }
        let dir: Vec<f64> = (0..m).map(|_| rng.random_range(-1.0..1.0)).collect();
        let dn = norm(&dir).max(1e-12);
        let cmag = 0.5 * amp * rng.random_range(0.3..1.0);
        let constant: Vec<f64> = dir.iter().map(|v| v / dn * cmag).collect();
        let a: Vec<f64> = (0..m * n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let an = norm(&a).max(1e-12);
        let amag = 0.5 * amp * rng.random_range(0.3..1.0) / rho;
        let linear: Vec<f64> = a.iter().map(|v| v / an * amag).collect();
        let fix = FixTerm { center: z.x.clone(), radius: rho, constant, linear };
        let mut trial = terms.clone();
        trial.fixes.push(fix.clone());
        let f = |y: &[f64]| {
            let mut s = chart.section.eval(y);
            axpy(&mut s, 1.0, &ev.raw(j, y, Some((&trial, cores))));
            s
        };
        let jac = |y: &[f64]| jacobian_fd(&f, y, m);
        let lo: Vec<f64> = z.x.iter().map(|v| v - rho).collect();
        let hi: Vec<f64> = z.x.iter().map(|v| v + rho).collect();
        let inside = |y: &[f64]| dist(y, &z.x) < rho;
        let found = zeros_in(&f, &jac, &inside, &[(lo, hi)], zero_density(n, opts.zero_mesh), n);
        let w = found.iter().map(|q| q.sigma_min).fold(f64::INFINITY, f64::min);
        if w >= opts.fix_sigma {
            return Ok(fix);
        }
        worst = worst.max(w);
    }
    Err(Error::Transversality(format!(
        "fix at {:?} in {} failed after {FIX_RETRIES} draws (best σ_min {worst:.2e})",
        z.x,
        fmt_index(j)
    )))
}

/// Builds `ν` level by level; charts of one level are independent and
/// built in parallel. The returned perturbation carries the a)–e) ledger
/// from [`verify_adapted`] on fresh samples.
pub fn build_adapted(
    atlas: &AtlasSpec,
    ctx: &ReductionContext,
    seed: u64,
    tol: &Tolerances,
    opts: &BuildOptions,
) -> Result<Perturbation> {
    if ctx.sigma <= 0.0 {
        return Err(Error::Nonpositive("σ must be positive".into()));
    }
    let mut ev = Evaluator::new(atlas, ctx)?;
    for k in 1..=atlas.max_cardinality() {
        let level: Vec<IndexSet> = atlas.index_sets().into_iter().filter(|j| j.len() == k).collect();
        let built: Vec<Result<ChartTerms>> = level
            .par_iter()
            .map(|j| {
                if ctx.v[j].is_trivially_empty() {
                    return Ok(ChartTerms::zero(j));
                }
                let (mut terms, cores) = match extend_strongly_admissible(&ev, j)? {
                    Some(x) => x,
                    None => (ChartTerms::zero(j), Vec::new()),
                };
                transversality_fix(&ev, j, &mut terms, &cores, seed, opts)?;
                Ok(terms)
            })
            .collect();
        for t in built {
            ev.install(t?)?;
        }
    }
    let mut p = ev.perturbation(seed);
    let report = verify_adapted(atlas, ctx, &p, seed.wrapping_add(0x5eed), tol)?;
    p.ledger = report.ledger();
    Ok(p)
}

// verification

#[derive(Clone, Debug)]
pub struct AdaptedReport {
    pub verdicts: Vec<Verdict>,
    /// Smallest `σ_min` over the located zeros.
    pub min_sigma: f64,
    pub zeros: Vec<(IndexSet, ZeroPoint)>,
}

impl AdaptedReport {
    pub fn passed(&self) -> bool {
        self.verdicts.iter().all(|v| v.passed())
    }

    pub fn verdict(&self, prefix: &str) -> Option<&Verdict> {
        self.verdicts.iter().find(|v| v.check.starts_with(prefix))
    }

    pub fn ledger(&self) -> Vec<LedgerEntry> {
        self.verdicts
            .iter()
            .map(|v| LedgerEntry { condition: v.check.clone(), margin: v.margin, passed: v.passed() })
            .collect()
    }
}

fn jittered(lo: &[f64], hi: &[f64], per_axis: f64, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let ext = lo.iter().zip(hi).map(|(a, b)| b - a).fold(0.0, f64::max);
    let h = (ext / per_axis).max(1e-9);
    let off: Vec<f64> = lo.iter().map(|_| rng.random_range(0.0..1.0) * h).collect();
    let lo2: Vec<f64> = lo.iter().zip(&off).map(|(a, o)| a + o).collect();
    lattice(&lo2, hi, h).into_iter().filter(|x| x.iter().zip(hi).all(|(a, b)| a <= b)).collect()
}

/// Does `z ∈ U_I` represent a point of `π(C)`?
pub fn in_pi_c(ev: &Evaluator, i: &[u32], z: &[f64]) -> bool {
    if ev.geom.in_c_tilde(i, z) {
        return true;
    }
    ev.atlas.index_sets().iter().any(|h| {
        is_proper_subset(h, i)
            && invert_change(ev.atlas, h, i, z, 1e-9)
                .is_some_and(|x| ev.atlas.change(h, i).domain.contains(&x) && ev.geom.in_c_tilde(h, &x))
    })
}

/// Independent check of a)–e) at `k = |I|` (the largest of the nested
/// sets), on lattices with a seeded random offset.
pub fn verify_adapted(
    atlas: &AtlasSpec,
    ctx: &ReductionContext,
    p: &Perturbation,
    seed: u64,
    tol: &Tolerances,
) -> Result<AdaptedReport> {
    let ev = Evaluator::load(atlas, ctx, p)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut va = Verdict::pass("a) compatibility", 0.0, tol.tau_eq).with_note("max |ν_I∘φ − φ̂∘ν_H|");
    let mut vb = Verdict::pass("b) transversality", f64::INFINITY, tol.tau_transv).with_note("min σ_min at zeros");
    let mut vc = Verdict::pass("c) strong admissibility", 0.0, tol.tau_eq).with_note("max off-image component");
    let mut vd = Verdict::pass("d) zero confinement", 0.0, 0.0).with_note("zeros outside π⁻¹π(C)");
    let mut ve = Verdict::pass("e) smallness", ctx.sigma, ctx.sigma).with_note("σ − sup ‖ν_I‖");
    let mut zeros_all = Vec::new();
    for i in atlas.index_sets() {
        if ctx.v[&i].is_trivially_empty() {
            continue;
        }
        let k = i.len() as f64;
        let n = atlas.chart(&i).dim();
        // a)
        for h in atlas.index_sets().iter().filter(|h| is_proper_subset(h, &i)) {
            if ctx.v[h].is_trivially_empty() {
                continue;
            }
            let ch = atlas.change(h, &i);
            let hat = ev.hat(h, &i);
            let nh = atlas.chart(h).dim();
            let pts: Vec<Vec<f64>> = if nh == 0 {
                vec![Vec::new()]
            } else {
                ev.geom.level_boxes(h, k).iter().flat_map(|(lo, hi)| jittered(lo, hi, per_axis(nh), &mut rng)).collect()
            };
            let errs: Vec<(f64, Vec<f64>)> = pts
                .par_iter()
                .filter(|x| ch.domain.contains(x) && ev.geom.in_level(h, k, x))
                .filter_map(|x| {
                    let y = ch.phi.eval(x);
                    if !ev.geom.in_level(&i, k, &y) {
                        return None;
                    }
                    let lhs = ev.nu(&i, &y);
                    let v = ev.nu(h, x);
                    let rhs: Vec<f64> =
                        if v.is_empty() { vec![0.0; lhs.len()] } else { (hat * DVector::from_column_slice(&v)).iter().copied().collect() };
                    let e = lhs.iter().zip(&rhs).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                    Some((e, x.clone()))
                })
                .collect();
            for (e, x) in errs {
                va.margin = va.margin.max(e);
                if e > tol.tau_eq {
                    va.push_failure(Witness::new(vec![h.clone(), i.clone()], vec![x], e, "ν_I∘φ_HI ≠ φ̂_HI∘ν_H"));
                }
            }
        }
        // b), d)
        let zs = ev.zeros_on_level(&i, k, zero_density(n, 20) + 3);
        for z in &zs {
            vb.margin = vb.margin.min(z.sigma_min);
            if z.sigma_min <= tol.tau_transv {
                vb.push_failure(Witness::new(vec![i.clone()], vec![z.x.clone()], z.sigma_min, "degenerate zero"));
            }
            if !in_pi_c(&ev, &i, &z.x) {
                vd.margin += 1.0;
                vd.push_failure(Witness::new(vec![i.clone()], vec![z.x.clone()], 0.0, "zero outside π⁻¹(π(C))"));
            }
            zeros_all.push((i.clone(), z.clone()));
        }
        // c)
        let eta = ctx.eta(k);
        for h in atlas.index_sets().iter().filter(|h| is_proper_subset(h, &i)) {
            let sp = eta / 5.0 * rng.random_range(0.9..1.1);
            let core = ev.geom.core_cloud(&i, h, k, sp);
            if core.is_empty() {
                continue;
            }
            let off: Vec<u32> = i.iter().copied().filter(|b| !h.contains(b)).collect();
            let stretch = if ev.geom.is_isometric(&i) { 1.0 } else { 4.0 };
            let mut pts = Vec::new();
            for (y0, e0) in core.target.iter().zip(&core.embedded) {
                pts.push(y0.clone());
                for _ in 0..4 {
                    let mut u: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
                    let un = norm(&u).max(1e-12);
                    let r = eta * stretch * rng.random_range(0.0..0.999);
                    u.iter_mut().for_each(|a| *a *= r / un);
                    let y: Vec<f64> = y0.iter().zip(&u).map(|(a, b)| a + b).collect();
                    if atlas.chart(&i).domain.contains(&y) && dist(&ev.geom.embed(&i, &y), e0) < eta {
                        pts.push(y);
                    }
                }
            }
            let worst: Vec<(f64, Vec<f64>)> = pts
                .par_iter()
                .map(|y| {
                    let comp = |v: &[f64]| -> f64 {
                        ev.norms
                            .components(&i, v)
                            .iter()
                            .filter(|(b, _)| off.contains(b))
                            .map(|(_, c)| norm(c))
                            .fold(0.0, f64::max)
                    };
                    let v = ev.nu(&i, y);
                    let mut e = comp(&v) / (1.0 + norm(&v));
                    // derivative image at the sample (finite differences)
                    let jac = jacobian_fd(&|q: &[f64]| ev.nu(&i, q), y, v.len());
                    for a in 0..n {
                        let col: Vec<f64> = jac.column(a).iter().copied().collect();
                        e = e.max(comp(&col) * 1e-3);
                    }
                    (e, y.clone())
                })
                .collect();
            for (e, y) in worst {
                vc.margin = vc.margin.max(e);
                if e > tol.tau_eq {
                    vc.push_failure(Witness::new(
                        vec![h.clone(), i.clone()],
                        vec![y],
                        e,
                        format!("ν_{} leaves φ̂(E_{}) near the core", fmt_index(&i), fmt_index(h)),
                    ));
                }
            }
        }
        // e)
        let sup = sampled_sup(&ev, &i, k, &|y: &[f64]| ev.nu(&i, y), per_axis(n) + 7.0);
        ve.margin = ve.margin.min(ctx.sigma - sup);
        if sup >= ctx.sigma {
            ve.push_failure(Witness::new(vec![i.clone()], vec![], ctx.sigma - sup, format!("sup ‖ν‖ = {sup:.3e} ≥ σ")));
        }
    }
    let min_sigma = vb.margin;
    Ok(AdaptedReport { verdicts: vec![va, vb, vc, vd, ve], min_sigma, zeros: zeros_all })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::refine::ReductionContext;
    use std::collections::BTreeMap;

    fn ctx_single(a: &AtlasSpec, v: &str, c: &str, delta: f64, sigma: f64) -> ReductionContext {
        let parse = |s: &str| {
            let (lo, hi) = s.split_once(',').unwrap();
            fixtures::boxes(1, &[&[(lo, hi)]])
        };
        let mut vs = BTreeMap::new();
        vs.insert(vec![1], parse(v));
        let mut cs = BTreeMap::new();
        cs.insert(vec![1], parse(c));
        let mut ctx = ReductionContext::from_sets(a, vs, cs, delta);
        ctx.sigma = sigma;
        ctx
    }

    #[test]
    fn cutoff_shape() {
        assert_eq!(cutoff(0.1, 0.2, 0.5), 1.0);
        assert_eq!(cutoff(0.6, 0.2, 0.5), 0.0);
        assert!((cutoff(0.35, 0.2, 0.5) - 0.5).abs() < 1e-12);
        assert_eq!(smoothstep(0.0), 0.0);
        assert_eq!(smoothstep(1.0), 1.0);
    }

    #[test]
    fn transverse_single_chart_needs_nothing() {
        let a = fixtures::identity_line();
        let ctx = ctx_single(&a, "-1,1", "-1/2,1/2", 0.1, 0.4);
        let p = build_adapted(&a, &ctx, 7, &Tolerances::default(), &BuildOptions::default()).unwrap();
        assert!(p.charts.iter().all(|t| t.is_zero()));
        assert!(p.ledger.iter().all(|l| l.passed), "{:?}", p.ledger);
    }

    #[test]
    fn square_gets_zero_or_two_transverse_roots() {
        let a = fixtures::single(&["x1^2"], &[("-2", "2")]);
        let ctx = ctx_single(&a, "-1,1", "-1/2,1/2", 0.1, 0.2);
        for seed in 0..4 {
            let p = build_adapted(&a, &ctx, seed, &Tolerances::default(), &BuildOptions::default()).unwrap();
            let r = verify_adapted(&a, &ctx, &p, 99, &Tolerances::default()).unwrap();
            assert!(r.passed(), "{:?}", r.verdicts);
            let zs: Vec<&ZeroPoint> = r.zeros.iter().map(|z| &z.1).collect();
            assert!(zs.is_empty() || zs.len() == 2, "{zs:?}");
            let ev = Evaluator::load(&a, &ctx, &p).unwrap();
            for z in zs {
                assert!(z.sigma_min >= FIX_SIGMA);
                assert!(ev.nu(&[1], &z.x)[0].abs() < 0.2);
            }
        }
    }

    #[test]
    fn same_seed_same_terms() {
        let a = fixtures::single(&["x1^2"], &[("-2", "2")]);
        let ctx = ctx_single(&a, "-1,1", "-1/2,1/2", 0.1, 0.2);
        let o = BuildOptions::default();
        let t = Tolerances::default();
        assert_eq!(build_adapted(&a, &ctx, 3, &t, &o).unwrap(), build_adapted(&a, &ctx, 3, &t, &o).unwrap());
        assert_ne!(build_adapted(&a, &ctx, 3, &t, &o).unwrap().charts, build_adapted(&a, &ctx, 4, &t, &o).unwrap().charts);
    }

    #[test]
    fn oversized_perturbation_fails_smallness() {
        let a = fixtures::single(&["x1^2"], &[("-2", "2")]);
        let ctx = ctx_single(&a, "-1,1", "-1/2,1/2", 0.1, 0.2);
        let t = Tolerances::default();
        let p = build_adapted(&a, &ctx, 1, &t, &BuildOptions::default()).unwrap();
        let ev = Evaluator::load(&a, &ctx, &p).unwrap();
        let sup = sampled_sup(&ev, &[1], 1.0, &|y: &[f64]| ev.nu(&[1], y), 400.0);
        let big = p.scaled(10.0 * ctx.sigma / sup);
        let r = verify_adapted(&a, &ctx, &big, 5, &t).unwrap();
        assert!(r.verdict("e)").unwrap().failed());
    }

    #[test]
    fn pushforward_of_zero_is_zero() {
        let a = fixtures::ex_change();
        let mut vs = BTreeMap::new();
        vs.insert(vec![1], fixtures::boxes(1, &[&[("-3/2", "-1/2")]]));
        vs.insert(vec![1, 2], fixtures::boxes(2, &[&[("-1/2", "3/2"), ("-1/2", "1/2")]]));
        let ctx = ReductionContext::from_sets(&a, vs.clone(), vs, 0.1);
        let ev = Evaluator::new(&a, &ctx).unwrap();
        let mu = ev.pushforward_mu(&[1, 2], 1.0, &[-0.5, 0.0], 1e-9).unwrap();
        assert_eq!(mu, Some(vec![0.0, 0.0]));
        assert_eq!(ev.pushforward_mu(&[1, 2], 1.0, &[0.5, 0.0], 1e-9).unwrap(), None);
    }

    #[test]
    fn pushforward_of_bump_lands_in_first_factor() {
        // ν_1 = ε·bump at −1/2 with φ̂ = (1,0)ᵀ gives μ_12(x,0) = (ε·bump(x), 0)
        let a = fixtures::ex_change();
        let mut vs = BTreeMap::new();
        vs.insert(vec![1], fixtures::boxes(1, &[&[("-3/2", "-1/2")]]));
        vs.insert(vec![1, 2], fixtures::boxes(2, &[&[("-1/2", "3/2"), ("-1/2", "1/2")]]));
        let ctx = ReductionContext::from_sets(&a, vs.clone(), vs, 0.1);
        let mut ev = Evaluator::new(&a, &ctx).unwrap();
        let fix = FixTerm { center: vec![-0.5], radius: 0.2, constant: vec![0.01], linear: vec![0.0] };
        ev.install(ChartTerms { index: vec![1], extension: None, fixes: vec![fix.clone()] }).unwrap();
        let y = [-0.49, 0.0];
        let mu = ev.pushforward_mu(&[1, 2], 1.0, &y, 1e-12).unwrap().unwrap();
        assert!((mu[0] - fix.eval(&[-0.49])[0]).abs() < 1e-15);
        assert_eq!(mu[1], 0.0);
    }

    #[test]
    fn fix_terms_round_trip_through_json() {
        let a = fixtures::single(&["x1^2"], &[("-2", "2")]);
        let ctx = ctx_single(&a, "-1,1", "-1/2,1/2", 0.1, 0.2);
        let p = build_adapted(&a, &ctx, 11, &Tolerances::default(), &BuildOptions::default()).unwrap();
        let back: Perturbation = serde_json::from_str(&serde_json::to_string(&p).unwrap()).unwrap();
        assert_eq!(back, p);
        let (e1, e2) = (Evaluator::load(&a, &ctx, &p).unwrap(), Evaluator::load(&a, &ctx, &back).unwrap());
        for x in [-0.3, -0.01, 0.0, 0.2] {
            assert_eq!(e1.nu(&[1], &[x]), e2.nu(&[1], &[x]));
        }
    }
}

#[cfg(test)]
mod change_tests {
    use super::*;
    use crate::fixtures;
    use crate::realization::build_cloud;
    use crate::refine::{find_tame_shrinking, reduce, ReductionParams};

    #[test]
    fn ex_change_gets_a_fix_in_the_overlap() {
        let tol = Tolerances::default();
        let a = find_tame_shrinking(&fixtures::ex_change(), 4, false, 12, 1, &tol).unwrap();
        let cloud = build_cloud(&a, 12, 1, tol.tau_id).unwrap();
        let ctx = reduce(&a, &cloud, &ReductionParams::default()).unwrap();
        let p = build_adapted(&a, &ctx, 5, &tol, &BuildOptions::default()).unwrap();
        assert!(p.ledger.iter().all(|l| l.passed), "{:?}", p.ledger);
        assert!(p.chart(&[1]).unwrap().is_zero());
        let f = &p.chart(&[1, 2]).unwrap().fixes;
        assert_eq!(f.len(), 1);
        assert!(norm(&f[0].center) < 1e-3, "{:?}", f[0].center);
        let r = verify_adapted(&a, &ctx, &p, 77, &tol).unwrap();
        assert!(r.passed() && r.min_sigma > 1e-6, "{:?}", r.verdicts);
    }
}

#[cfg(test)]
mod generated_tests {
    use super::*;
    use crate::generator::{generate, problem_by_name, quartic_plan};
    use crate::realization::build_cloud;
    use crate::refine::{find_tame_shrinking, reduce, ReductionParams};

    #[test]
    fn quartic_three_charts_pass_the_ledger() {
        let tol = Tolerances::default();
        let g = generate(&problem_by_name("quartic").unwrap(), &quartic_plan(), &tol).unwrap();
        let a = find_tame_shrinking(&g, 4, false, 12, 1, &tol).unwrap();
        let cloud = build_cloud(&a, 12, 1, tol.tau_id).unwrap();
        let ctx = reduce(&a, &cloud, &ReductionParams::default()).unwrap();
        let p = build_adapted(&a, &ctx, 5, &tol, &BuildOptions::default()).unwrap();
        assert!(p.ledger.iter().all(|l| l.passed), "{:?}", p.ledger);
        // the degenerate zero at 0 sits in the middle chart
        assert_eq!(p.chart(&[2]).unwrap().fixes.len(), 1);
        let r = verify_adapted(&a, &ctx, &p, 8, &tol).unwrap();
        assert!(r.passed() && r.min_sigma > 1e-6);
    }
}

#[cfg(test)]
mod extension_tests {
    use super::*;
    use crate::fixtures;

    fn overlapping_ctx(a: &AtlasSpec) -> ReductionContext {
        let mut vs = BTreeMap::new();
        vs.insert(vec![1], fixtures::boxes(1, &[&[("-3/2", "0")]]));
        vs.insert(vec![1, 2], fixtures::boxes(2, &[&[("-1/2", "3/2"), ("-1/2", "1/2")]]));
        let mut ctx = ReductionContext::from_sets(a, vs.clone(), vs, 0.1);
        ctx.sigma = 0.5;
        ctx
    }

    fn with_lower_bump(a: &'static AtlasSpec, ctx: &'static ReductionContext, amp: f64) -> Perturbation {
        let mut ev = Evaluator::new(a, ctx).unwrap();
        let fix = FixTerm { center: vec![-0.3], radius: 0.2, constant: vec![amp], linear: vec![0.5 * amp] };
        ev.install(ChartTerms { index: vec![1], extension: None, fixes: vec![fix] }).unwrap();
        let (t, _) = extend_strongly_admissible(&ev, &[1, 2]).unwrap().expect("live core");
        ev.install(t).unwrap();
        ev.perturbation(0)
    }

    fn leak<T>(t: T) -> &'static T {
        Box::leak(Box::new(t))
    }

    #[test]
    fn extension_is_compatible_and_admissible() {
        let a = leak(fixtures::ex_change());
        let ctx = leak(overlapping_ctx(a));
        let p = with_lower_bump(a, ctx, 0.01);
        let ext = p.chart(&[1, 2]).unwrap().extension.clone().unwrap();
        assert_eq!(ext.radii.len(), 3);
        assert!(ext.radii.windows(2).all(|w| w[0] > w[1]));
        let r = verify_adapted(a, ctx, &p, 3, &Tolerances::default()).unwrap();
        assert!(r.verdict("a)").unwrap().passed(), "{}", r.verdict("a)").unwrap());
        assert!(r.verdict("c)").unwrap().passed(), "{}", r.verdict("c)").unwrap());
        // on the core the extension is the pushforward (ν_1, 0)
        let ev = Evaluator::load(a, ctx, &p).unwrap();
        for x in [-0.45, -0.3, -0.2] {
            let v = ev.nu(&[1, 2], &[x, 0.0]);
            assert!((v[0] - ev.nu(&[1], &[x])[0]).abs() < 1e-12 && v[1] == 0.0, "{x}: {v:?}");
        }
        // and dies off away from it
        assert_eq!(ev.nu(&[1, 2], &[-0.3, 0.3]), vec![0.0, 0.0]);
        assert_eq!(ev.nu(&[1, 2], &[1.0, 0.0]), vec![0.0, 0.0]);
    }

    #[test]
    fn fix_on_a_core_breaks_admissibility() {
        let a = leak(fixtures::ex_change());
        let ctx = leak(overlapping_ctx(a));
        let mut p = with_lower_bump(a, ctx, 0.01);
        p.chart_mut(&[1, 2]).unwrap().fixes.push(FixTerm {
            center: vec![-0.3, 0.0],
            radius: 0.1,
            constant: vec![0.0, 0.01],
            linear: vec![0.0; 4],
        });
        let r = verify_adapted(a, ctx, &p, 3, &Tolerances::default()).unwrap();
        assert!(r.verdict("c)").unwrap().failed());
        assert!(r.verdict("a)").unwrap().failed());
    }
}
