//! Tame shrinkings, reductions `C ⋐ V` and the constants feeding the
//! perturbation engine.
//!
//! Level sets `V^k_I` are metric neighbourhoods for the pulled-back metric
//! `d_I(x, y) = |ι_I(x) − ι_I(y)|`. Cores `N^k_JI` are handled through
//! sampled point clouds; every quantity derived from a cloud errs on the
//! conservative side (distances to a cloud over-estimate the distance to
//! the set it samples).

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::atlas::{fmt_index, is_proper_subset, is_subset, shrink, union, AtlasKind, AtlasSpec, IndexSet};
use crate::config::Tolerances;
use crate::domain::{Domain, Piece, PieceDoc};
use crate::error::{Error, Result};
use crate::poly::{rat_from_f64, rat_to_f64, Rat};
use crate::realization::{dist, invert_change, zero_set_x, RealizationCloud, ZeroClass};
use crate::report::{Verdict, Witness};
use crate::smooth::SmoothMap;
use crate::validators::{basic_blocks, check_tameness};

/// `η_0 / δ = 1 − 2^{−1/4}`.
pub fn eta0_factor() -> f64 {
    1.0 - 2f64.powf(-0.25)
}

/// Cap on `δ_V`.
pub const DELTA_CAP: f64 = 0.25;

// norms

/// Per-basic-chart norm weights `‖e_i‖_i = w_i |e_i|`, times a global
/// factor kept separate so that rescaling commutes exactly with minima.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormChoice {
    pub scales: BTreeMap<u32, f64>,
    #[serde(default = "one")]
    pub global: f64,
}

fn one() -> f64 {
    1.0
}

impl NormChoice {
    pub fn standard(atlas: &AtlasSpec) -> Self {
        NormChoice { scales: (1..=atlas.basic_count).map(|b| (b, 1.0)).collect(), global: 1.0 }
    }

    pub fn scaled(&self, c: f64) -> Self {
        NormChoice { scales: self.scales.clone(), global: self.global * c }
    }
}

/// Additive max-norms `‖Σ φ̂_iI e_i‖_I = max_i ‖e_i‖_i`.
#[derive(Clone, Debug)]
pub struct AdditiveNorms {
    choice: NormChoice,
    // per chart: (basic index, rows of the inverse block matrix)
    split: BTreeMap<IndexSet, Vec<(u32, DMatrix<f64>)>>,
}

impl AdditiveNorms {
    pub fn new(atlas: &AtlasSpec, choice: &NormChoice) -> Result<Self> {
        let mut split = BTreeMap::new();
        for idx in atlas.index_sets() {
            let m = atlas.chart(&idx).obstruction_dim;
            let b = basic_blocks(atlas, &idx);
            let inv = if m == 0 {
                RatMatrix0::empty()
            } else {
                RatMatrix0(
                    b.inverse()
                        .ok_or_else(|| {
                            Error::Unsupported(format!("additive norms need additivity at {}", fmt_index(&idx)))
                        })?
                        .to_f64(),
                )
            };
            let mut parts = Vec::new();
            let mut row = 0;
            for &i in &idx {
                let mi = atlas.chart(&[i]).obstruction_dim;
                let p = if m == 0 { DMatrix::zeros(0, 0) } else { inv.0.rows(row, mi).into_owned() };
                parts.push((i, p));
                row += mi;
            }
            split.insert(idx, parts);
        }
        Ok(AdditiveNorms { choice: choice.clone(), split })
    }

    pub fn choice(&self) -> &NormChoice {
        &self.choice
    }

    /// Components `e_i` with `e = Σ φ̂_iI e_i`.
    pub fn components(&self, idx: &[u32], e: &[f64]) -> Vec<(u32, Vec<f64>)> {
        self.split[idx]
            .iter()
            .map(|(i, p)| {
                let v = if e.is_empty() { Vec::new() } else { (p * nalgebra::DVector::from_column_slice(e)).iter().copied().collect() };
                (*i, v)
            })
            .collect()
    }

    /// Norm without the global factor.
    pub fn base_norm(&self, idx: &[u32], e: &[f64]) -> f64 {
        self.components(idx, e)
            .iter()
            .map(|(i, v)| self.choice.scales.get(i).copied().unwrap_or(1.0) * norm(v))
            .fold(0.0, f64::max)
    }

    pub fn norm(&self, idx: &[u32], e: &[f64]) -> f64 {
        self.choice.global * self.base_norm(idx, e)
    }

    /// Operator bound of `e ↦ base_norm(e)` against the Euclidean norm.
    pub fn base_op_bound(&self, idx: &[u32]) -> f64 {
        self.split[idx]
            .iter()
            .map(|(i, p)| self.choice.scales.get(i).copied().unwrap_or(1.0) * p.norm())
            .fold(0.0, f64::max)
    }
}

struct RatMatrix0(DMatrix<f64>);

impl RatMatrix0 {
    fn empty() -> Self {
        RatMatrix0(DMatrix::zeros(0, 0))
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

// context

/// Knobs of the reduction heuristic.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReductionParams {
    /// Half-width of the boxes of `V` around located zeros.
    pub radius: f64,
    /// `C` is `V` shrunk by `c_shrink · radius`.
    pub c_shrink: f64,
    /// Lattice points per axis for σ sampling.
    pub sigma_density: usize,
}

impl Default for ReductionParams {
    fn default() -> Self {
        ReductionParams { radius: 0.5, c_shrink: 0.4, sigma_density: 200 }
    }
}

impl ReductionParams {
    /// Second reduction used by the invariance checks.
    pub fn alternative() -> Self {
        ReductionParams { radius: 0.375, c_shrink: 0.3, ..Default::default() }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReductionContext {
    pub v: BTreeMap<IndexSet, Domain>,
    pub c: BTreeMap<IndexSet, Domain>,
    pub delta: f64,
    pub delta_v: f64,
    pub sigma: f64,
    pub norms: NormChoice,
    pub params: ReductionParams,
}

impl ReductionContext {
    /// Context with explicit `V`, `C` (missing charts are empty) and `δ`;
    /// `δ_V` and `σ` are left at zero.
    pub fn from_sets(
        atlas: &AtlasSpec,
        v: BTreeMap<IndexSet, Domain>,
        c: BTreeMap<IndexSet, Domain>,
        delta: f64,
    ) -> Self {
        let mut vv = BTreeMap::new();
        let mut cc = BTreeMap::new();
        for idx in atlas.index_sets() {
            let n = atlas.chart(&idx).dim();
            vv.insert(idx.clone(), v.get(&idx).cloned().unwrap_or_else(|| Domain::empty(n)));
            cc.insert(idx.clone(), c.get(&idx).cloned().unwrap_or_else(|| Domain::empty(n)));
        }
        ReductionContext {
            v: vv,
            c: cc,
            delta,
            delta_v: 0.0,
            sigma: 0.0,
            norms: NormChoice::standard(atlas),
            params: ReductionParams::default(),
        }
    }

    pub fn eta0(&self) -> f64 {
        eta0_factor() * self.delta
    }

    /// `η_k = 2^{−k} η_0` for quarter-integer `k`.
    pub fn eta(&self, k: f64) -> f64 {
        2f64.powf(-k) * self.eta0()
    }

    /// Radius `2^{−k} δ` of `V^k_I`.
    pub fn level_radius(&self, k: f64) -> f64 {
        2f64.powf(-k) * self.delta
    }

    pub fn with_norms(&self, norms: NormChoice) -> Self {
        ReductionContext { norms, ..self.clone() }
    }

    pub fn to_doc(&self) -> ReductionDoc {
        let doms = |m: &BTreeMap<IndexSet, Domain>| {
            m.iter()
                .filter(|(_, d)| !d.is_trivially_empty())
                .map(|(i, d)| SetDoc { index: i.clone(), domain: d.to_doc() })
                .collect()
        };
        ReductionDoc {
            v: doms(&self.v),
            c: doms(&self.c),
            delta: self.delta,
            delta_v: self.delta_v,
            sigma: self.sigma,
            norms: self.norms.clone(),
            params: self.params.clone(),
        }
    }

    pub fn from_doc(atlas: &AtlasSpec, doc: &ReductionDoc) -> Result<Self> {
        let read = |list: &[SetDoc]| -> Result<BTreeMap<IndexSet, Domain>> {
            let mut out = BTreeMap::new();
            for s in list {
                if !atlas.has(&s.index) {
                    return Err(Error::Schema(format!("reduction names unknown chart {}", fmt_index(&s.index))));
                }
                out.insert(s.index.clone(), Domain::from_doc(atlas.chart(&s.index).dim(), &s.domain)?);
            }
            Ok(out)
        };
        let mut ctx = ReductionContext::from_sets(atlas, read(&doc.v)?, read(&doc.c)?, doc.delta);
        ctx.delta_v = doc.delta_v;
        ctx.sigma = doc.sigma;
        ctx.norms = doc.norms.clone();
        ctx.params = doc.params.clone();
        Ok(ctx)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SetDoc {
    pub index: IndexSet,
    pub domain: Vec<PieceDoc>,
}

/// Serialized form, stored under the `reduction` field.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReductionDoc {
    pub v: Vec<SetDoc>,
    pub c: Vec<SetDoc>,
    pub delta: f64,
    pub delta_v: f64,
    pub sigma: f64,
    pub norms: NormChoice,
    #[serde(default)]
    pub params: ReductionParams,
}

// metric geometry

/// Sampled core `N^k_JI`: points `y ∈ U_J`, their preimages in `U_I` and
/// embedded images `ι_J(y)`.
#[derive(Clone, Debug, Default)]
pub struct CoreCloud {
    pub target: Vec<Vec<f64>>,
    pub source: Vec<Vec<f64>>,
    pub embedded: Vec<Vec<f64>>,
    /// Lattice spacing in the source chart.
    pub spacing: f64,
}

impl CoreCloud {
    pub fn is_empty(&self) -> bool {
        self.target.is_empty()
    }

    pub fn len(&self) -> usize {
        self.target.len()
    }

    /// Distance from an embedded point to the nearest cloud point.
    pub fn distance(&self, e: &[f64]) -> f64 {
        self.embedded.iter().map(|p| dist(p, e)).fold(f64::INFINITY, f64::min)
    }
}

/// Metric view of an atlas together with a reduction.
pub struct Geometry<'a> {
    pub atlas: &'a AtlasSpec,
    pub ctx: &'a ReductionContext,
    emb: BTreeMap<IndexSet, SmoothMap>,
    iso: BTreeMap<IndexSet, bool>,
}

/// Affine map with orthonormal columns (so chart distances are Euclidean).
fn isometric(e: &SmoothMap) -> bool {
    let Some(ps) = e.polys() else { return false };
    if ps.iter().any(|p| p.degree() > 1) {
        return false;
    }
    let n = e.domain_dim();
    let j = e.jacobian(&vec![0.0; n]);
    let g = j.transpose() * &j;
    (g - DMatrix::identity(n, n)).abs().max() < 1e-12
}

/// Regular lattice in `Π[lo, hi]` including the faces.
pub fn lattice(lo: &[f64], hi: &[f64], h: f64) -> Vec<Vec<f64>> {
    let n = lo.len();
    if n == 0 {
        return vec![Vec::new()];
    }
    let counts: Vec<usize> = (0..n).map(|k| (((hi[k] - lo[k]) / h).ceil() as usize).max(1) + 1).collect();
    let total: usize = counts.iter().product();
    let mut out = Vec::with_capacity(total);
    let mut idx = vec![0usize; n];
    for _ in 0..total {
        out.push(
            (0..n)
                .map(|k| lo[k] + (hi[k] - lo[k]) * idx[k] as f64 / (counts[k] - 1) as f64)
                .collect(),
        );
        for k in 0..n {
            idx[k] += 1;
            if idx[k] < counts[k] {
                break;
            }
            idx[k] = 0;
        }
    }
    out
}

impl<'a> Geometry<'a> {
    pub fn new(atlas: &'a AtlasSpec, ctx: &'a ReductionContext) -> Self {
        let mut emb = BTreeMap::new();
        let mut iso = BTreeMap::new();
        for idx in atlas.index_sets() {
            let e = atlas.embedding(&idx);
            iso.insert(idx.clone(), isometric(&e));
            emb.insert(idx, e);
        }
        Geometry { atlas, ctx, emb, iso }
    }

    pub fn embed(&self, idx: &[u32], x: &[f64]) -> Vec<f64> {
        self.emb[idx].eval(x)
    }

    pub fn embedding(&self, idx: &[u32]) -> &SmoothMap {
        &self.emb[idx]
    }

    /// Whether `d_I` is the Euclidean distance of chart coordinates.
    pub fn is_isometric(&self, idx: &[u32]) -> bool {
        self.iso[idx]
    }

    /// `d_I(x, A)` for a union of boxes `A`.
    pub fn dist_to_boxes(&self, idx: &[u32], x: &[f64], a: &Domain) -> f64 {
        if a.is_trivially_empty() {
            return f64::INFINITY;
        }
        if x.is_empty() {
            return 0.0;
        }
        if self.iso[idx] {
            return a.pieces().iter().map(|p| p.box_distance(x)).fold(f64::INFINITY, f64::min);
        }
        let e = &self.emb[idx];
        let ex = e.eval(x);
        a.pieces()
            .iter()
            .map(|p| {
                // projected gradient on |ι(y) − ι(x)|² over the box
                let lo = p.lo_f64();
                let hi = p.hi_f64();
                let clamp = |y: &mut Vec<f64>| {
                    for k in 0..y.len() {
                        y[k] = y[k].clamp(lo[k], hi[k]);
                    }
                };
                let mut y = x.to_vec();
                clamp(&mut y);
                let mut best = dist(&e.eval(&y), &ex);
                let mut step = 0.5;
                for _ in 0..200 {
                    let ey = e.eval(&y);
                    let j = e.jacobian(&y);
                    let r = nalgebra::DVector::from_iterator(ey.len(), ey.iter().zip(&ex).map(|(a, b)| a - b));
                    let g = j.transpose() * r;
                    let mut cand: Vec<f64> = y.iter().zip(g.iter()).map(|(a, b)| a - step * b).collect();
                    clamp(&mut cand);
                    let d = dist(&e.eval(&cand), &ex);
                    if d < best {
                        best = d;
                        y = cand;
                    } else {
                        step *= 0.5;
                        if step < 1e-12 {
                            break;
                        }
                    }
                }
                best
            })
            .fold(f64::INFINITY, f64::min)
    }

    pub fn dist_v(&self, idx: &[u32], x: &[f64]) -> f64 {
        self.dist_to_boxes(idx, x, &self.ctx.v[idx])
    }

    /// `x ∈ V^k_I`.
    pub fn in_level(&self, idx: &[u32], k: f64, x: &[f64]) -> bool {
        self.atlas.chart(idx).domain.contains(x) && self.dist_v(idx, x) < self.ctx.level_radius(k)
    }

    /// `x ∈ closure(V^k_I)`; the closure lies in `U_I` by the choice of `δ`.
    pub fn in_level_closure(&self, idx: &[u32], k: f64, x: &[f64]) -> bool {
        self.dist_v(idx, x) <= self.ctx.level_radius(k)
    }

    /// Box over-approximation of `V^k_I` (pieces of `V_I` widened by the
    /// level radius, clipped to the bounding box of `U_I`).
    pub fn level_boxes(&self, idx: &[u32], k: f64) -> Vec<(Vec<f64>, Vec<f64>)> {
        let r = self.ctx.level_radius(k);
        let widen = if self.iso[idx] { r } else { 4.0 * r };
        let Some((ulo, uhi)) = self.atlas.chart(idx).domain.bounding_box() else { return Vec::new() };
        self.ctx.v[idx]
            .pieces()
            .iter()
            .map(|p| {
                let lo = p.lo_f64().iter().zip(&ulo).map(|(a, b)| (a - widen).max(*b)).collect();
                let hi = p.hi_f64().iter().zip(&uhi).map(|(a, b)| (a + widen).min(*b)).collect();
                (lo, hi)
            })
            .collect()
    }

    /// Lattice of spacing `h` over the closure of `V^k_I`.
    pub fn level_lattice(&self, idx: &[u32], k: f64, h: f64) -> Vec<Vec<f64>> {
        let mut out = Vec::new();
        for (lo, hi) in self.level_boxes(idx, k) {
            for x in lattice(&lo, &hi, h) {
                if self.in_level_closure(idx, k, &x) && self.atlas.chart(idx).domain.contains(&x) {
                    out.push(x);
                }
            }
        }
        out
    }

    /// `y ∈ N^k_JI = V^k_J ∩ φ_IJ(V^k_I ∩ U_IJ)`.
    pub fn in_core(&self, j: &[u32], i: &[u32], k: f64, y: &[f64]) -> bool {
        if !is_proper_subset(i, j) || !self.atlas.has(j) || !self.in_level(j, k, y) {
            return false;
        }
        match invert_change(self.atlas, i, j, y, 1e-9) {
            Some(x) => self.atlas.change(i, j).domain.contains(&x) && self.in_level(i, k, &x),
            None => false,
        }
    }

    /// Sampled `N^k_JI` from a lattice of spacing `h` in `U_I`.
    pub fn core_cloud(&self, j: &[u32], i: &[u32], k: f64, h: f64) -> CoreCloud {
        let mut out = CoreCloud { spacing: h, ..Default::default() };
        if !is_proper_subset(i, j) || self.ctx.v[i].is_trivially_empty() || self.ctx.v[j].is_trivially_empty() {
            return out;
        }
        let ch = self.atlas.change(i, j);
        for (lo, hi) in self.level_boxes(i, k) {
            for x in lattice(&lo, &hi, h) {
                if !(ch.domain.contains(&x) && self.in_level(i, k, &x)) {
                    continue;
                }
                let y = ch.phi.eval(&x);
                if self.in_level(j, k, &y) {
                    out.embedded.push(self.embed(j, &y));
                    out.target.push(y);
                    out.source.push(x);
                }
            }
        }
        out
    }

    /// `x ∈ C̃_J = ∪_{K ⊇ J} φ_JK⁻¹(C_K)`.
    pub fn in_c_tilde(&self, j: &[u32], x: &[f64]) -> bool {
        if self.ctx.c[j].contains(x) {
            return true;
        }
        self.ctx.c.iter().any(|(k, ck)| {
            is_proper_subset(j, k) && !ck.is_trivially_empty() && {
                let ch = self.atlas.change(j, k);
                ch.domain.contains(x) && ck.contains(&ch.phi.eval(x))
            }
        })
    }

    /// Sampled check of `B^I_{η_k}(closure V^{k+1/2}_I) ⊆ V^k_I`; returns
    /// the smallest slack `r_k − (dist + η_k)` seen (positive = holds).
    pub fn check_fantastic(&self, idx: &[u32], k: f64) -> f64 {
        let eta = self.ctx.eta(k);
        let inner = self.ctx.level_radius(k + 0.5);
        let outer = self.ctx.level_radius(k);
        if self.ctx.v[idx].is_trivially_empty() {
            return outer - inner - eta;
        }
        // for a length metric the worst point sits on the rim of V^{k+1/2}
        let h = (eta / 4.0).max(1e-4);
        let mut worst = outer - inner - eta;
        for x in self.level_lattice(idx, k + 0.5, h) {
            let d = self.dist_v(idx, &x);
            worst = worst.min(outer - (d + eta));
        }
        worst
    }

    /// Sampled check of `im φ_IJ ∩ B^J_{2^{−k−1/2}η_0}(N^{k+3/4}_JI) ⊆ N^{k+1/2}_JI`.
    pub fn check_useful(&self, j: &[u32], i: &[u32], k: f64) -> Verdict {
        let name = format!("useful[{}<{}]@{}", fmt_index(i), fmt_index(j), k);
        let r = 2f64.powf(-k - 0.5) * self.ctx.eta0();
        let h = (r / 4.0).max(1e-4);
        let core = self.core_cloud(j, i, k + 0.75, h);
        let mut v = Verdict::pass(name, 0.0, h).with_note(format!("{} core samples", core.len()));
        if core.is_empty() {
            return v;
        }
        let ch = self.atlas.change(i, j);
        // points of im φ_IJ near the core: images of a lattice around the source samples
        for (lo, hi) in self.level_boxes(i, k + 0.5) {
            for x in lattice(&lo, &hi, h) {
                if !ch.domain.contains(&x) {
                    continue;
                }
                let y = ch.phi.eval(&x);
                if !self.atlas.chart(j).domain.contains(&y) {
                    continue;
                }
                // strictly inside the ball by a cloud-resolution margin
                if core.distance(&self.embed(j, &y)) + h < r && !self.in_core(j, i, k + 0.5, &y) {
                    v.push_failure(Witness::new(
                        vec![j.to_vec()],
                        vec![y],
                        r,
                        "image point near N^{k+3/4} outside N^{k+1/2}",
                    ));
                }
            }
        }
        v
    }
}

// tame shrinking

/// Margin search for a tame shrinking. Every chart is shrunk by the same
/// box margin, starting at `1/10` and halved per iteration; `preshrunk`
/// applies each candidate shrink twice.
pub fn find_tame_shrinking(
    atlas: &AtlasSpec,
    max_iters: usize,
    preshrunk: bool,
    density: usize,
    seed: u64,
    tol: &Tolerances,
) -> Result<AtlasSpec> {
    let mut m = Rat::new(1.into(), 10.into());
    let mut last = Vec::new();
    for _ in 0..max_iters.max(1) {
        let step = |a: &AtlasSpec| -> Result<AtlasSpec> {
            let doms: BTreeMap<IndexSet, Domain> = a
                .charts
                .iter()
                .filter(|(_, c)| c.dim() > 0)
                .map(|(i, c)| (i.clone(), c.domain.shrink_margin(&m)))
                .collect();
            shrink(a, &doms)
        };
        let cand = step(atlas).and_then(|a| if preshrunk { step(&a) } else { Ok(a) });
        match cand {
            Ok(a) => {
                let v = check_tameness(&a, density, seed, tol);
                if v.passed() {
                    return Ok(a.with_kind(AtlasKind::Tame));
                }
                last = v.witnesses.iter().map(|w| w.detail.clone()).collect();
            }
            Err(e) => last = vec![e.to_string()],
        }
        m /= Rat::from_integer(2.into());
    }
    Err(Error::Exhausted(format!("no tame shrinking in {max_iters} margins; last witnesses: {}", last.join("; "))))
}

// reduction

/// Type of a zero class: the largest chart containing it.
fn zero_type(atlas: &AtlasSpec, cl: &ZeroClass) -> (IndexSet, Vec<f64>) {
    let mut u: IndexSet = Vec::new();
    for (i, _) in &cl.members {
        u = union(&u, i);
    }
    if let Some((i, x)) = cl.members.iter().find(|(i, _)| *i == u) {
        return (i.clone(), x.clone());
    }
    let _ = atlas;
    cl.members.iter().max_by_key(|(i, _)| i.len()).cloned().expect("nonempty class")
}

/// Dyadic rounding (outward or inward) so that boxes have short rationals.
fn round_dyadic(v: f64, down: bool) -> Rat {
    let s = 1024.0;
    let t = v * s;
    let r = if (t - t.round()).abs() < 1e-6 {
        t.round()
    } else if down {
        t.floor()
    } else {
        t.ceil()
    } / s;
    rat_from_f64(r)
}

/// Closure of `[lo, hi]` inside `dom` (corners and a coarse lattice).
fn closed_box_inside(dom: &Domain, lo: &[f64], hi: &[f64]) -> bool {
    let n = lo.len();
    let h = (0..n).map(|k| hi[k] - lo[k]).fold(0.0, f64::max) / 8.0;
    lattice(lo, hi, h.max(1e-9)).iter().all(|x| dom.contains(x))
}

/// Merge boxes that agree on all axes but one and overlap or touch on it.
fn merge_boxes(mut b: Vec<(Vec<Rat>, Vec<Rat>)>) -> Vec<(Vec<Rat>, Vec<Rat>)> {
    loop {
        let mut merged = false;
        'outer: for a in 0..b.len() {
            for c in a + 1..b.len() {
                let n = b[a].0.len();
                let diff: Vec<usize> = (0..n).filter(|&k| b[a].0[k] != b[c].0[k] || b[a].1[k] != b[c].1[k]).collect();
                let ok = match diff.as_slice() {
                    [] => true,
                    [k] => b[a].0[*k] <= b[c].1[*k] && b[c].0[*k] <= b[a].1[*k],
                    _ => false,
                };
                if ok {
                    let (lo2, hi2) = b.remove(c);
                    for k in 0..n {
                        if lo2[k] < b[a].0[k] {
                            b[a].0[k] = lo2[k].clone();
                        }
                        if hi2[k] > b[a].1[k] {
                            b[a].1[k] = hi2[k].clone();
                        }
                    }
                    merged = true;
                    break 'outer;
                }
            }
        }
        if !merged {
            return b;
        }
    }
}

fn boxes_domain(n: usize, b: Vec<(Vec<Rat>, Vec<Rat>)>) -> Domain {
    if n == 0 {
        return if b.is_empty() { Domain::empty(0) } else { Domain::point() };
    }
    Domain::new(n, merge_boxes(b).into_iter().map(|(lo, hi)| Piece::new_box(lo, hi)).collect())
}

/// Boxes of half-width `r` around the zeros of each type, clipped into
/// the domains. Zero-dimensional charts get the point itself.
fn boxes_around(atlas: &AtlasSpec, typed: &[(IndexSet, Vec<f64>)], r: f64) -> Result<BTreeMap<IndexSet, Domain>> {
    let mut out: BTreeMap<IndexSet, Vec<(Vec<Rat>, Vec<Rat>)>> = BTreeMap::new();
    for (i, z) in typed {
        let c = atlas.chart(i);
        let entry = out.entry(i.clone()).or_default();
        if c.dim() == 0 {
            entry.push((Vec::new(), Vec::new()));
            continue;
        }
        let piece = c
            .domain
            .pieces()
            .iter()
            .find(|p| p.contains(z))
            .ok_or_else(|| Error::Coverage(format!("zero {:?} outside U_{}", z, fmt_index(i))))?;
        let (plo, phi) = (piece.lo_f64(), piece.hi_f64());
        // degenerate zeros are only located to ~sqrt(residual); centre on the grid
        let z: Vec<f64> = z
            .iter()
            .map(|v| {
                let t = (v * 1024.0).round() / 1024.0;
                if (t - v).abs() < 1e-4 { t } else { *v }
            })
            .collect();
        let mut rr = r;
        let mut found = None;
        for _ in 0..12 {
            let lo: Vec<f64> = z.iter().zip(&plo).map(|(a, b)| (a - rr).max(b + rr / 4.0)).collect();
            let hi: Vec<f64> = z.iter().zip(&phi).map(|(a, b)| (a + rr).min(b - rr / 4.0)).collect();
            let lo_r: Vec<Rat> = lo.iter().map(|v| round_dyadic(*v, false)).collect();
            let hi_r: Vec<Rat> = hi.iter().map(|v| round_dyadic(*v, true)).collect();
            let (lf, hf): (Vec<f64>, Vec<f64>) =
                (lo_r.iter().map(rat_to_f64).collect(), hi_r.iter().map(rat_to_f64).collect());
            let contains_z = (0..z.len()).all(|k| lf[k] < z[k] && z[k] < hf[k]);
            if contains_z && closed_box_inside(&c.domain, &lf, &hf) {
                found = Some((lo_r, hi_r));
                break;
            }
            rr /= 2.0;
        }
        let b = found.ok_or_else(|| Error::Coverage(format!("no box around zero {:?} fits in U_{}", z, fmt_index(i))))?;
        entry.push(b);
    }
    let mut doms = BTreeMap::new();
    for idx in atlas.index_sets() {
        let n = atlas.chart(&idx).dim();
        doms.insert(idx.clone(), boxes_domain(n, out.remove(&idx).unwrap_or_default()));
    }
    Ok(doms)
}

/// Sampled distance between `ι_I(A)` and `ι_J(B)` for box unions, minus
/// the sampling slack.
fn set_distance(g: &Geometry, i: &[u32], a: &Domain, j: &[u32], b: &Domain) -> f64 {
    let pts = |idx: &[u32], d: &Domain| -> (Vec<Vec<f64>>, f64) {
        let mut out = Vec::new();
        let mut h_max: f64 = 0.0;
        for p in d.pieces() {
            let (lo, hi) = (p.lo_f64(), p.hi_f64());
            let ext = lo.iter().zip(&hi).map(|(l, h)| h - l).fold(0.0, f64::max);
            let h = (ext / 40.0).max(1e-6);
            h_max = h_max.max(h * (lo.len().max(1) as f64).sqrt());
            out.extend(lattice(&lo, &hi, h).into_iter().map(|x| g.embed(idx, &x)));
        }
        (out, h_max)
    };
    let (pa, ha) = pts(i, a);
    let (pb, hb) = pts(j, b);
    let d = pa
        .par_iter()
        .map(|x| pb.iter().map(|y| dist(x, y)).fold(f64::INFINITY, f64::min))
        .reduce(|| f64::INFINITY, f64::min);
    d - ha - hb
}

fn incomparable_pairs(ctx: &ReductionContext) -> Vec<(IndexSet, IndexSet)> {
    let sets: Vec<&IndexSet> = ctx.v.iter().filter(|(_, d)| !d.is_trivially_empty()).map(|(i, _)| i).collect();
    let mut out = Vec::new();
    for (a, i) in sets.iter().enumerate() {
        for j in &sets[a + 1..] {
            if !is_subset(i, j) && !is_subset(j, i) {
                out.push(((*i).clone(), (*j).clone()));
            }
        }
    }
    out
}

/// Reduction `V` from boxes around the located zeros, verified on the
/// cloud; the box radius is halved until separation holds.
pub fn build_reduction(atlas: &AtlasSpec, cloud: &RealizationCloud, params: &ReductionParams) -> Result<ReductionContext> {
    let classes = zero_set_x(atlas, cloud, true)?;
    let typed: Vec<(IndexSet, Vec<f64>)> = classes.iter().map(|c| zero_type(atlas, c)).collect();
    let mut r = params.radius;
    let mut last = String::new();
    for _ in 0..6 {
        let v = boxes_around(atlas, &typed, r)?;
        let mut ctx = ReductionContext::from_sets(atlas, v.clone(), v, 0.0);
        ctx.params = params.clone();
        ctx.params.radius = r;
        let g = Geometry::new(atlas, &ctx);
        let bad = incomparable_pairs(&ctx)
            .into_iter()
            .find(|(i, j)| set_distance(&g, i, &ctx.v[i], j, &ctx.v[j]) <= 0.0);
        match bad {
            None => {
                check_coverage(atlas, &classes, &ctx.v, "V")?;
                return Ok(ctx);
            }
            Some((i, j)) => last = format!("π(V_{}) meets π(V_{})", fmt_index(&i), fmt_index(&j)),
        }
        r /= 2.0;
    }
    Err(Error::Separation(last))
}

fn check_coverage(atlas: &AtlasSpec, classes: &[ZeroClass], sets: &BTreeMap<IndexSet, Domain>, name: &str) -> Result<()> {
    for cl in classes {
        if !cl.members.iter().any(|(i, x)| sets[i].contains(x) || (x.is_empty() && !sets[i].is_trivially_empty())) {
            return Err(Error::Coverage(format!(
                "zero {:?} of chart {} not covered by {name}",
                cl.members[0].1,
                fmt_index(&cl.members[0].0)
            )));
        }
    }
    let _ = atlas;
    Ok(())
}

/// `B̄^I_{2δ}(V_I) ⋐ U_I` for every chart, and separation of incomparable
/// pairs by `4δ` in the embedded metric.
fn delta_admissible(g: &Geometry, sep: &[(IndexSet, IndexSet, f64)], d: f64) -> bool {
    if sep.iter().any(|(_, _, s)| *s < 4.0 * d) {
        return false;
    }
    g.ctx.v.iter().all(|(idx, v)| {
        if v.is_trivially_empty() || v.ambient_dim() == 0 {
            return true;
        }
        let u = &g.atlas.chart(idx).domain;
        let r = 2.0 * d;
        v.pieces().iter().all(|p| {
            let lo: Vec<f64> = p.lo_f64().iter().map(|a| a - r).collect();
            let hi: Vec<f64> = p.hi_f64().iter().map(|a| a + r).collect();
            // exact for a single unconstrained piece of U and a Euclidean chart metric
            if g.iso[idx]
                && u.pieces().iter().any(|q| {
                    q.constraints.is_empty()
                        && q.lo_f64().iter().zip(&lo).all(|(a, b)| a < b)
                        && q.hi_f64().iter().zip(&hi).all(|(a, b)| a > b)
                }) {
                    return true;
                }
            let ext = lo.iter().zip(&hi).map(|(a, b)| b - a).fold(0.0, f64::max);
            lattice(&lo, &hi, ext / 48.0)
                .iter()
                .filter(|x| g.dist_to_boxes(idx, x, &Domain::new(p.dim(), vec![p.clone()])) <= r)
                .all(|x| u.contains(x))
        })
    })
}

/// `δ_V`: the cap `1/4` if admissible, else bisection from below.
pub fn compute_delta_v(atlas: &AtlasSpec, ctx: &ReductionContext) -> Result<f64> {
    let g = Geometry::new(atlas, ctx);
    let sep: Vec<(IndexSet, IndexSet, f64)> = incomparable_pairs(ctx)
        .into_iter()
        .map(|(i, j)| {
            let s = set_distance(&g, &i, &ctx.v[&i], &j, &ctx.v[&j]);
            (i, j, s)
        })
        .collect();
    if delta_admissible(&g, &sep, DELTA_CAP) {
        return Ok(DELTA_CAP);
    }
    let (mut lo, mut hi) = (0.0, DELTA_CAP);
    for _ in 0..40 {
        let mid = 0.5 * (lo + hi);
        if delta_admissible(&g, &sep, mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if lo <= 0.0 {
        return Err(Error::Separation("δ_V vanishes: no admissible radius".into()));
    }
    Ok(lo)
}

/// Nested reduction `C ⋐ V` (each piece of `V` shrunk by
/// `c_shrink · radius`), optionally confined to `W` (a predicate on
/// embedded points), followed by `δ_V`, `δ = δ_V/2` and `σ`.
pub fn build_nested(
    atlas: &AtlasSpec,
    ctx: &ReductionContext,
    cloud: &RealizationCloud,
    target: Option<&dyn Fn(&[f64]) -> bool>,
) -> Result<ReductionContext> {
    let classes = zero_set_x(atlas, cloud, true)?;
    let mut shrink_by = ctx.params.c_shrink * ctx.params.radius;
    let mut out = ctx.clone();
    for attempt in 0..8 {
        let m = Rat::new(((shrink_by * 1e4).round() as i64).into(), 10000.into());
        out.c = ctx
            .v
            .iter()
            .map(|(i, d)| (i.clone(), if d.ambient_dim() == 0 { d.clone() } else { d.shrink_margin(&m) }))
            .collect();
        let ok_w = match target {
            None => true,
            Some(w) => {
                let g = Geometry::new(atlas, &out);
                out.c.iter().all(|(i, d)| {
                    crate::sampling::sample_domain_opt(d, 12, 0).iter().all(|x| w(&g.embed(i, x)))
                })
            }
        };
        if ok_w && check_coverage(atlas, &classes, &out.c, "C").is_ok() {
            break;
        }
        if attempt == 7 {
            check_coverage(atlas, &classes, &out.c, "C")?;
            return Err(Error::Coverage("C cannot be confined to the target set".into()));
        }
        shrink_by *= if ok_w { 0.5 } else { 1.5 };
    }
    out.delta_v = compute_delta_v(atlas, &out)?;
    out.delta = out.delta_v / 2.0;
    let s = compute_sigma(atlas, &out)?;
    out.sigma = s.bound;
    Ok(out)
}

/// The full reduction stage: `V`, then `C`, `δ`, `σ`.
pub fn reduce(atlas: &AtlasSpec, cloud: &RealizationCloud, params: &ReductionParams) -> Result<ReductionContext> {
    let v = build_reduction(atlas, cloud, params)?;
    build_nested(atlas, &v, cloud, None)
}

// sigma

/// Lower bound for σ with its ingredients: `bound = sampled_min − slack`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SigmaBound {
    pub sampled_min: f64,
    pub slack: f64,
    pub bound: f64,
    pub witness: Option<(IndexSet, Vec<f64>)>,
    pub samples: usize,
}

/// Certified lower bound of
/// `min_J inf{‖s_J(x)‖ : x ∈ cl V^{|J|}_J ∖ (C̃_J ∪ ∪_I B^J_{η_{|J|−1/2}}(N^{|J|−1/4}_JI))}`.
pub fn compute_sigma(atlas: &AtlasSpec, ctx: &ReductionContext) -> Result<SigmaBound> {
    sigma_at(atlas, ctx, 0.0)
}

/// Variant with every level shifted by one (`V^{|J|+1}_J`), used for the
/// relative construction.
pub fn compute_sigma_rel(atlas: &AtlasSpec, ctx: &ReductionContext) -> Result<SigmaBound> {
    sigma_at(atlas, ctx, 1.0)
}

fn sigma_at(atlas: &AtlasSpec, ctx: &ReductionContext, shift: f64) -> Result<SigmaBound> {
    let norms = AdditiveNorms::new(atlas, &ctx.norms)?;
    let g = Geometry::new(atlas, ctx);
    let mut best = SigmaBound { sampled_min: f64::INFINITY, slack: 0.0, bound: f64::INFINITY, witness: None, samples: 0 };
    let mut base_min = f64::INFINITY;
    let mut base_bound = f64::INFINITY;
    for j in atlas.index_sets() {
        if ctx.v[&j].is_trivially_empty() || atlas.chart(&j).obstruction_dim == 0 && atlas.chart(&j).dim() == 0 {
            // a point chart with E = 0 is a zero everywhere; it must lie in C̃
            if !ctx.v[&j].is_trivially_empty() && !g.in_c_tilde(&j, &[]) {
                return Err(Error::Nonpositive(format!("point chart {} outside C̃", fmt_index(&j))));
            }
            continue;
        }
        let k = j.len() as f64 + shift;
        let n = atlas.chart(&j).dim();
        let boxes = g.level_boxes(&j, k);
        let ext = boxes
            .iter()
            .flat_map(|(lo, hi)| lo.iter().zip(hi).map(|(a, b)| b - a))
            .fold(0.0, f64::max);
        let dens = (ctx.params.sigma_density as f64).min(2e5f64.powf(1.0 / n.max(1) as f64));
        let h = if n == 0 { 0.0 } else { ext / dens };
        let eta = ctx.eta(k - 0.5);
        let cores: Vec<CoreCloud> = atlas
            .index_sets()
            .iter()
            .filter(|i| is_proper_subset(i, &j))
            .map(|i| g.core_cloud(&j, i, k - 0.25, (eta / 4.0).max(h / 2.0).max(1e-5)))
            .collect();
        let pts: Vec<Vec<f64>> = if n == 0 { vec![Vec::new()] } else { g.level_lattice(&j, k, h) };
        let excluded = |x: &[f64]| {
            g.in_c_tilde(&j, x) || {
                let e = g.embed(&j, x);
                cores.iter().any(|c| c.distance(&e) < eta)
            }
        };
        // a lattice point stands for its cell, so it is kept if the cell
        // may reach outside the excluded region
        let kept = |x: &[f64]| {
            !excluded(x)
                || (0..n).any(|a| {
                    [-h, h].iter().any(|d| {
                        let mut y = x.to_vec();
                        y[a] += d;
                        !excluded(&y)
                    })
                })
        };
        let section = &atlas.chart(&j).section;
        let vals: Vec<(f64, usize, bool)> = pts
            .par_iter()
            .enumerate()
            .filter_map(|(p, x)| {
                let inside = !excluded(x);
                (inside || kept(x)).then(|| (norms.base_norm(&j, &section.eval(x)), p, inside))
            })
            .collect();
        best.samples += vals.len();
        let Some(m) = vals.iter().map(|v| v.0).min_by(|a, b| a.partial_cmp(b).unwrap()) else { continue };
        if let Some(s) = vals.iter().filter(|v| v.2).map(|v| v.0).min_by(|a, b| a.partial_cmp(b).unwrap()) {
            base_min = base_min.min(s);
        }
        // Lipschitz slack: a global bound filters candidates, local
        // coefficient bounds on each candidate cell certify them
        let (lo, hi) = boxes.iter().fold(
            (vec![f64::INFINITY; n], vec![f64::NEG_INFINITY; n]),
            |(mut lo, mut hi), (a, b)| {
                for k in 0..n {
                    lo[k] = lo[k].min(a[k]);
                    hi[k] = hi[k].max(b[k]);
                }
                (lo, hi)
            },
        );
        let op = norms.base_op_bound(&j);
        let lip_on = |lo: &[f64], hi: &[f64]| {
            op * section.comps().iter().map(|f| f.bounds_on_box(lo, hi).1.powi(2)).sum::<f64>().sqrt()
        };
        let reach = h * (n.max(1) as f64).sqrt();
        let global_slack = lip_on(&lo, &hi) * reach;
        let local = vals
            .par_iter()
            .filter(|(v, _, _)| *v - global_slack < m)
            .map(|&(v, p, _)| {
                let x = &pts[p];
                let lo: Vec<f64> = x.iter().map(|a| a - h).collect();
                let hi: Vec<f64> = x.iter().map(|a| a + h).collect();
                (v - lip_on(&lo, &hi) * reach, p)
            })
            .min_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        if let Some((bd, p)) = local {
            if bd < base_bound {
                base_bound = bd;
                best.witness = Some((j.clone(), pts[p].clone()));
            }
        }
    }
    let gl = ctx.norms.global;
    best.sampled_min = gl * base_min;
    best.bound = gl * base_bound;
    best.slack = best.sampled_min - best.bound;
    if best.bound <= 0.0 && best.bound.is_finite() {
        let (j, x) = best.witness.clone().unwrap_or_default();
        return Err(Error::Nonpositive(format!(
            "σ bound {:.3e} ≤ 0 near x = {:?} in chart {}",
            best.bound,
            x,
            fmt_index(&j)
        )));
    }
    Ok(best)
}

// level sets

/// Level-set data of one pair `I ⊊ J` at quarter-integer level `k`.
#[derive(Clone, Debug)]
pub struct LevelSets {
    pub v_boxes: Vec<(Vec<f64>, Vec<f64>)>,
    pub core: CoreCloud,
    pub eta: f64,
    pub useful: Verdict,
}

/// `V^k_J` (box over-approximation), the sampled core `N^k_JI`, the
/// radius `η_k` and the sampled check of the `im φ` inclusion. For
/// `I ⊄ J` the core is empty.
pub fn level_sets(atlas: &AtlasSpec, ctx: &ReductionContext, k: f64, j: &[u32], i: &[u32]) -> LevelSets {
    let g = Geometry::new(atlas, ctx);
    let eta = ctx.eta(k);
    let core = g.core_cloud(j, i, k, (eta / 4.0).max(1e-4));
    let useful = if is_proper_subset(i, j) {
        g.check_useful(j, i, k)
    } else {
        Verdict::pass("useful", 0.0, 0.0).with_note("I ⊄ J: empty core")
    };
    LevelSets { v_boxes: g.level_boxes(j, k), core, eta, useful }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::atlas::ibox;
    use crate::fixtures;
    use crate::poly::rat;
    use crate::realization::build_cloud;

    fn single_ctx(a: &AtlasSpec, v: (i64, i64), c: Option<(&str, &str)>, delta: f64) -> ReductionContext {
        let mut vs = BTreeMap::new();
        vs.insert(vec![1], ibox(&[v]));
        let mut cs = BTreeMap::new();
        if let Some(c) = c {
            cs.insert(vec![1], fixtures::boxes(1, &[&[c]]));
        }
        ReductionContext::from_sets(a, vs, cs, delta)
    }

    #[test]
    fn delta_v_caps_on_interval() {
        let a = fixtures::interval();
        let ctx = single_ctx(&a, (0, 1), None, 0.1);
        assert_eq!(compute_delta_v(&a, &ctx).unwrap(), 0.25);
    }

    #[test]
    fn delta_v_below_cap_is_margin_half() {
        // V = (0,1) in (−1/4, 2): margin 1/4 gives δ_V ≈ 1/8
        let a = fixtures::single(&["x1"], &[("-1/4", "2")]);
        let ctx = single_ctx(&a, (0, 1), None, 0.01);
        let d = compute_delta_v(&a, &ctx).unwrap();
        assert!(d <= 0.125 && d > 0.125 - 1e-9, "{d}");
    }

    #[test]
    fn eta_zero_value() {
        assert!((eta0_factor() - 0.1591035847).abs() < 1e-10);
        let a = fixtures::interval();
        let ctx = single_ctx(&a, (0, 1), None, 1.0);
        assert!((ctx.eta0() - (1.0 - 2f64.powf(-0.25))).abs() < 1e-15);
        assert!((ctx.eta(1.0) - ctx.eta0() / 2.0).abs() < 1e-15);
    }

    #[test]
    fn first_level_set_of_unit_interval() {
        let a = fixtures::interval();
        let ctx = single_ctx(&a, (0, 1), None, 0.1);
        let g = Geometry::new(&a, &ctx);
        assert!(g.in_level(&[1], 1.0, &[-0.049]));
        assert!(!g.in_level(&[1], 1.0, &[-0.051]));
        assert!(g.in_level(&[1], 1.0, &[1.049]));
        assert!(!g.in_level(&[1], 1.0, &[1.051]));
    }

    #[test]
    fn fantastic_inclusion_holds_with_margin() {
        let a = fixtures::interval();
        let ctx = single_ctx(&a, (0, 1), None, 0.1);
        let g = Geometry::new(&a, &ctx);
        let slack = g.check_fantastic(&[1], 0.0);
        // δ − 2^{−1/2}δ − η_0 = δ(2^{−1/4} − 2^{−1/2})
        assert!((slack - 0.1 * (2f64.powf(-0.25) - 2f64.powf(-0.5))).abs() < 1e-3, "{slack}");
        assert!(slack > 0.0);
    }

    #[test]
    fn sigma_on_identity_line() {
        let a = fixtures::identity_line();
        let ctx = single_ctx(&a, (-1, 1), Some(("-1/2", "1/2")), 0.1);
        let s = compute_sigma(&a, &ctx).unwrap();
        assert!(s.sampled_min >= 0.5 && s.sampled_min < 0.5 + s.slack, "{s:?}");
        assert!(s.bound <= 0.5 && s.bound >= 0.5 - 0.05 - s.slack);
        for c in [0.5, 2.0, 10.0] {
            let t = compute_sigma(&a, &ctx.with_norms(ctx.norms.scaled(c))).unwrap();
            assert_eq!(t.sampled_min, c * s.sampled_min);
        }
    }

    #[test]
    fn sigma_detects_uncovered_zero() {
        let a = fixtures::identity_line();
        let ctx = single_ctx(&a, (-1, 1), Some(("1/4", "1/2")), 0.1);
        assert!(matches!(compute_sigma(&a, &ctx), Err(Error::Nonpositive(_))));
    }

    #[test]
    fn ex_change_shrinking_and_reduction() {
        let tol = Tolerances::default();
        let a = find_tame_shrinking(&fixtures::ex_change(), 4, false, 12, 1, &tol).unwrap();
        assert_eq!(a.chart(&[1]).domain, fixtures::boxes(1, &[&[("-1.9", "1.9")]]));
        let cloud = build_cloud(&a, 12, 1, tol.tau_id).unwrap();
        let v = build_reduction(&a, &cloud, &ReductionParams::default()).unwrap();
        assert_eq!(v.v[&vec![1]], fixtures::boxes(1, &[&[("-1.5", "-0.5")]]));
        assert_eq!(v.v[&vec![1, 2]], fixtures::boxes(2, &[&[("-0.5", "1.5"), ("-0.5", "0.5")]]));
        assert!(v.v[&vec![2]].is_trivially_empty());
        let ctx = build_nested(&a, &v, &cloud, None).unwrap();
        assert_eq!(ctx.c[&vec![1]], fixtures::boxes(1, &[&[("-1.3", "-0.7")]]));
        assert!((ctx.delta_v - 0.2).abs() < 1e-6, "{}", ctx.delta_v);
        // with the additive max-norm the infimum sits at x1 = −3/10, x2 = g/2
        let g = |x: f64| x.powi(4) - x * x;
        let inf = g(-0.3).abs() / 2.0;
        let s = compute_sigma(&a, &ctx).unwrap();
        assert!(s.sampled_min >= inf - 1e-12 && s.sampled_min < inf + 0.01, "{s:?}");
        assert!(ctx.sigma > 0.0 && ctx.sigma <= inf, "{s:?}");
    }

    #[test]
    fn exhaustion_on_forced_gap() {
        let tol = Tolerances::default();
        let c1 = fixtures::chart(&[1], ibox(&[(-2, 2)]), 1, &["x1"]);
        let c2 = fixtures::chart(&[2], ibox(&[(0, 2)]), 1, &["x1"]);
        let c12 = fixtures::chart(&[1, 2], ibox(&[(-2, 2), (-1, 1)]), 2, &["x1", "x2"]);
        let ch1 = fixtures::change(&[1], &[1, 2], ibox(&[(0, 2)]), &["x1", "0"], fixtures::mat(2, 1, &[1, 0]));
        let ch2 = fixtures::change(&[2], &[1, 2], ibox(&[(0, 2)]), &["x1", "0"], fixtures::mat(2, 1, &[0, 1]));
        let Ok(a) = AtlasSpec::new(0, 2, vec![c1, c2, c12], vec![ch1, ch2]) else { return };
        let r = find_tame_shrinking(&a, 3, false, 10, 0, &tol);
        assert!(matches!(r, Err(Error::Exhausted(_))), "{r:?}");
    }

    #[test]
    fn norms_split_ex_change_obstruction() {
        let a = fixtures::ex_change();
        let n = AdditiveNorms::new(&a, &NormChoice::standard(&a)).unwrap();
        // e = a(1,0) + b(1,1): b = e2, a = e1 − e2
        assert_eq!(n.norm(&[1, 2], &[3.0, 1.0]), 2.0);
        assert_eq!(n.norm(&[1, 2], &[1.0, 3.0]), 3.0);
        let _ = rat(0);
    }

    #[test]
    fn reduction_doc_round_trip() {
        let a = fixtures::identity_line();
        let ctx = single_ctx(&a, (-1, 1), Some(("-1/2", "1/2")), 0.1);
        let doc = ctx.to_doc();
        let s = serde_json::to_string(&doc).unwrap();
        let back = ReductionContext::from_doc(&a, &serde_json::from_str(&s).unwrap()).unwrap();
        assert_eq!(back, ctx);
    }
}
