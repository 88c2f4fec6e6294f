//! Charts, coordinate changes and atlases, with their JSON document form and
//! the structural operations (restriction, composition, shrinking, product
//! concordance).

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::{DMatrix, DVector};
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

use crate::domain::{Domain, PieceDoc, RatDoc};
use crate::error::{Error, Result};
use crate::linalg::{cokernel_basis, kernel_basis, sigma_min, RatMatrix};
use crate::poly::{rat, Poly, Rat};
use crate::smooth::SmoothMap;

/// Sorted subset of `{1..N}`.
pub type IndexSet = Vec<u32>;

pub fn fmt_index(i: &[u32]) -> String {
    let parts: Vec<String> = i.iter().map(|v| v.to_string()).collect();
    format!("{{{}}}", parts.join(","))
}

pub fn is_proper_subset(a: &[u32], b: &[u32]) -> bool {
    a.len() < b.len() && a.iter().all(|x| b.contains(x))
}

pub fn is_subset(a: &[u32], b: &[u32]) -> bool {
    a.iter().all(|x| b.contains(x))
}

pub fn union(a: &[u32], b: &[u32]) -> IndexSet {
    let s: BTreeSet<u32> = a.iter().chain(b).copied().collect();
    s.into_iter().collect()
}

pub fn intersection(a: &[u32], b: &[u32]) -> IndexSet {
    a.iter().filter(|x| b.contains(x)).copied().collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct Chart {
    pub index: IndexSet,
    pub domain: Domain,
    pub obstruction_dim: usize,
    pub section: SmoothMap,
    /// Embedding ι_I into the common metric space; `None` means the padded
    /// identity `x ↦ (x, 0, …, 0)`.
    pub embedding: Option<SmoothMap>,
}

impl Chart {
    pub fn new(index: IndexSet, domain: Domain, obstruction_dim: usize, section: SmoothMap) -> Self {
        Chart { index, domain, obstruction_dim, section, embedding: None }
    }

    pub fn with_embedding(mut self, e: SmoothMap) -> Self {
        self.embedding = Some(e);
        self
    }

    pub fn dim(&self) -> usize {
        self.domain.ambient_dim()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CoordinateChange {
    pub source: IndexSet,
    pub target: IndexSet,
    pub domain: Domain,
    pub phi: SmoothMap,
    pub hat_phi: RatMatrix,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AtlasKind {
    Weak,
    Standard,
    Strong,
    Tame,
}

/// Ordered frames declaring the orientation of `det(ds_I)`; the zero sign
/// is `sign · sign det(F_E⁻¹ · D · F_T)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ChartOrientation {
    pub domain_frame: RatMatrix,
    pub obstruction_frame: RatMatrix,
    pub sign: i32,
}

impl ChartOrientation {
    pub fn standard(n: usize, m: usize) -> Self {
        ChartOrientation {
            domain_frame: RatMatrix::identity(n),
            obstruction_frame: RatMatrix::identity(m),
            sign: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct OrientationData {
    pub charts: BTreeMap<IndexSet, ChartOrientation>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AtlasSpec {
    pub dimension: i64,
    pub basic_count: u32,
    pub charts: BTreeMap<IndexSet, Chart>,
    pub changes: BTreeMap<(IndexSet, IndexSet), CoordinateChange>,
    pub orientation: Option<OrientationData>,
    pub declared_kind: AtlasKind,
    /// Product `[0,1] × K`; the first coordinate of every chart is the collar.
    pub concordance: bool,
    pub metric_dim: usize,
}

impl AtlasSpec {
    /// Assemble and verify the exact structural invariants.
    pub fn new(
        dimension: i64,
        basic_count: u32,
        charts: Vec<Chart>,
        changes: Vec<CoordinateChange>,
    ) -> Result<Self> {
        let charts: BTreeMap<IndexSet, Chart> = charts.into_iter().map(|c| (c.index.clone(), c)).collect();
        let changes = changes
            .into_iter()
            .map(|c| ((c.source.clone(), c.target.clone()), c))
            .collect();
        let metric_dim = charts
            .values()
            .map(|c| c.embedding.as_ref().map_or(c.dim(), |e| e.codomain_dim()))
            .max()
            .unwrap_or(0);
        let a = AtlasSpec {
            dimension,
            basic_count,
            charts,
            changes,
            orientation: None,
            declared_kind: AtlasKind::Weak,
            concordance: false,
            metric_dim,
        };
        a.verify_structure()?;
        Ok(a)
    }

    pub fn with_orientation(mut self, o: OrientationData) -> Self {
        self.orientation = Some(o);
        self
    }

    pub fn with_kind(mut self, k: AtlasKind) -> Self {
        self.declared_kind = k;
        self
    }

    fn verify_structure(&self) -> Result<()> {
        for i in 1..=self.basic_count {
            if !self.charts.contains_key(&vec![i]) {
                return Err(Error::Schema(format!("missing basic chart {{{i}}}")));
            }
        }
        for (idx, c) in &self.charts {
            let sorted = idx.windows(2).all(|w| w[0] < w[1]);
            if idx.is_empty() || !sorted || idx.iter().any(|&v| v == 0 || v > self.basic_count) {
                return Err(Error::Schema(format!("bad index set {}", fmt_index(idx))));
            }
            if c.section.domain_dim() != c.dim() || c.section.codomain_dim() != c.obstruction_dim {
                return Err(Error::Dimension(format!(
                    "section of {} has shape {}→{}, chart is {}→{}",
                    fmt_index(idx),
                    c.section.domain_dim(),
                    c.section.codomain_dim(),
                    c.dim(),
                    c.obstruction_dim
                )));
            }
            let d = c.dim() as i64 - c.obstruction_dim as i64;
            if d != self.dimension {
                return Err(Error::Dimension(format!(
                    "chart {} has dimension {d}, atlas declares {}",
                    fmt_index(idx),
                    self.dimension
                )));
            }
            if let Some(e) = &c.embedding {
                if e.domain_dim() != c.dim() || e.codomain_dim() != self.metric_dim {
                    return Err(Error::Dimension(format!("embedding of {}", fmt_index(idx))));
                }
            }
        }
        for i in self.charts.keys() {
            for j in self.charts.keys() {
                if is_proper_subset(i, j) && !self.changes.contains_key(&(i.clone(), j.clone())) {
                    return Err(Error::Schema(format!(
                        "missing coordinate change {} → {}",
                        fmt_index(i),
                        fmt_index(j)
                    )));
                }
            }
        }
        for ((i, j), ch) in &self.changes {
            if !is_proper_subset(i, j) {
                return Err(Error::Schema(format!("change {} → {} not a proper inclusion", fmt_index(i), fmt_index(j))));
            }
            let (Some(ci), Some(cj)) = (self.charts.get(i), self.charts.get(j)) else {
                return Err(Error::Schema(format!("change {} → {} off the poset", fmt_index(i), fmt_index(j))));
            };
            if ch.domain.ambient_dim() != ci.dim()
                || ch.phi.domain_dim() != ci.dim()
                || ch.phi.codomain_dim() != cj.dim()
            {
                return Err(Error::Dimension(format!("change {} → {} map shape", fmt_index(i), fmt_index(j))));
            }
            if ch.hat_phi.rows() != cj.obstruction_dim || ch.hat_phi.cols() != ci.obstruction_dim {
                return Err(Error::Dimension(format!(
                    "hat_phi {} → {} is {}×{}, expected {}×{}",
                    fmt_index(i),
                    fmt_index(j),
                    ch.hat_phi.rows(),
                    ch.hat_phi.cols(),
                    cj.obstruction_dim,
                    ci.obstruction_dim
                )));
            }
            if ch.hat_phi.rank() != ci.obstruction_dim {
                return Err(Error::Rank(format!(
                    "hat_phi {} → {} is not injective",
                    fmt_index(i),
                    fmt_index(j)
                )));
            }
        }
        if let Some(o) = &self.orientation {
            for (idx, co) in &o.charts {
                let c = self
                    .charts
                    .get(idx)
                    .ok_or_else(|| Error::Schema(format!("orientation for unknown chart {}", fmt_index(idx))))?;
                let (n, m) = (c.dim(), c.obstruction_dim);
                if co.domain_frame.rows() != n || co.domain_frame.cols() != n {
                    return Err(Error::Dimension(format!("domain frame of {}", fmt_index(idx))));
                }
                if co.obstruction_frame.rows() != m || co.obstruction_frame.cols() != m {
                    return Err(Error::Dimension(format!("obstruction frame of {}", fmt_index(idx))));
                }
                if co.domain_frame.det().is_zero() || co.obstruction_frame.det().is_zero() {
                    return Err(Error::Rank(format!("degenerate frame for {}", fmt_index(idx))));
                }
                if co.sign != 1 && co.sign != -1 {
                    return Err(Error::Schema("orientation sign must be ±1".into()));
                }
            }
        }
        Ok(())
    }

    pub fn chart(&self, i: &[u32]) -> &Chart {
        self.charts.get(i).unwrap_or_else(|| panic!("no chart {}", fmt_index(i)))
    }

    pub fn change(&self, i: &[u32], j: &[u32]) -> &CoordinateChange {
        self.changes
            .get(&(i.to_vec(), j.to_vec()))
            .unwrap_or_else(|| panic!("no change {} → {}", fmt_index(i), fmt_index(j)))
    }

    pub fn has(&self, i: &[u32]) -> bool {
        self.charts.contains_key(i)
    }

    pub fn index_sets(&self) -> Vec<IndexSet> {
        let mut v: Vec<IndexSet> = self.charts.keys().cloned().collect();
        v.sort_by(|a, b| a.len().cmp(&b.len()).then(a.cmp(b)));
        v
    }

    pub fn max_cardinality(&self) -> usize {
        self.charts.keys().map(|k| k.len()).max().unwrap_or(0)
    }

    /// Chains `I ⊊ J ⊊ K` of stored index sets.
    pub fn triples(&self) -> Vec<(IndexSet, IndexSet, IndexSet)> {
        let idx = self.index_sets();
        let mut out = Vec::new();
        for i in &idx {
            for j in &idx {
                if !is_proper_subset(i, j) {
                    continue;
                }
                for k in &idx {
                    if is_proper_subset(j, k) {
                        out.push((i.clone(), j.clone(), k.clone()));
                    }
                }
            }
        }
        out
    }

    /// Embedding ι_I (padded identity unless declared).
    pub fn embedding(&self, i: &[u32]) -> SmoothMap {
        let c = self.chart(i);
        match &c.embedding {
            Some(e) => e.clone(),
            None => {
                let n = c.dim();
                let mut comps: Vec<Poly> = (0..n).map(|k| Poly::var(n, k)).collect();
                comps.resize(self.metric_dim, Poly::zero(n));
                SmoothMap::from_polys(n, comps)
            }
        }
    }

    pub fn orientation_or_standard(&self) -> OrientationData {
        let mut o = self.orientation.clone().unwrap_or_default();
        for (idx, c) in &self.charts {
            o.charts
                .entry(idx.clone())
                .or_insert_with(|| ChartOrientation::standard(c.dim(), c.obstruction_dim));
        }
        o
    }

    /// Apply `x ↦ φ_IJ(x)`; identity when `I = J`.
    pub fn apply(&self, i: &[u32], j: &[u32], x: &[f64]) -> Vec<f64> {
        if i == j {
            return x.to_vec();
        }
        self.change(i, j).phi.eval(x)
    }

    /// `x ∈ U_IJ` (with `U_II = U_I` and `U_IJ = ∅` off the poset).
    pub fn in_transition(&self, i: &[u32], j: &[u32], x: &[f64]) -> bool {
        if i == j {
            return self.chart(i).domain.contains(x);
        }
        match self.changes.get(&(i.to_vec(), j.to_vec())) {
            Some(c) => c.domain.contains(x),
            None => false,
        }
    }

    /// Rename basic labels by `perm[i−1]`, applied to every field.
    pub fn relabel_basic(&self, perm: &[u32]) -> Result<AtlasSpec> {
        let map = |i: &IndexSet| -> IndexSet {
            let mut v: IndexSet = i.iter().map(|&k| perm[(k - 1) as usize]).collect();
            v.sort();
            v
        };
        let charts = self
            .charts
            .values()
            .map(|c| Chart { index: map(&c.index), ..c.clone() })
            .collect();
        let changes = self
            .changes
            .values()
            .map(|c| CoordinateChange { source: map(&c.source), target: map(&c.target), ..c.clone() })
            .collect();
        let mut a = AtlasSpec::new(self.dimension, self.basic_count, charts, changes)?;
        a.metric_dim = self.metric_dim;
        a.declared_kind = self.declared_kind;
        a.concordance = self.concordance;
        a.orientation = self.orientation.as_ref().map(|o| OrientationData {
            charts: o.charts.iter().map(|(k, v)| (map(k), v.clone())).collect(),
        });
        Ok(a)
    }
}

// ---------------------------------------------------------------------------
// structural operations

/// Restriction `K|_{U′}`; `U′ ⊆ U_I` is checked exactly on boxes and on
/// samples otherwise.
pub fn restrict_chart(chart: &Chart, u: &Domain) -> Result<Chart> {
    if u.ambient_dim() != chart.dim() {
        return Err(Error::Dimension("restriction domain arity".into()));
    }
    let ok = u.box_contained_in(&chart.domain)
        || crate::sampling::sample_domain_opt(u, 24, 0)
            .iter()
            .all(|x| chart.domain.contains(x));
    let nonempty = !crate::sampling::sample_domain_opt(u, 8, 0).is_empty();
    if !ok || (!nonempty && !u.is_trivially_empty() && !u.box_contained_in(&chart.domain)) {
        return Err(Error::Containment(format!("{u} ⊄ {}", chart.domain)));
    }
    Ok(Chart { domain: u.clone(), ..chart.clone() })
}

/// Composite change `Φ_JK ∘ Φ_IJ` on `U_IJK = φ_IJ⁻¹(U_JK)`.
pub fn compose_changes(a: &CoordinateChange, b: &CoordinateChange) -> Result<CoordinateChange> {
    if a.target != b.source || !is_proper_subset(&a.source, &a.target) || !is_proper_subset(&b.source, &b.target) {
        return Err(Error::Chain(format!(
            "{}→{} then {}→{}",
            fmt_index(&a.source),
            fmt_index(&a.target),
            fmt_index(&b.source),
            fmt_index(&b.target)
        )));
    }
    let phi = b
        .phi
        .compose(&a.phi)
        .ok_or_else(|| Error::Unsupported("composition of non-polynomial coordinate maps".into()))?;
    Ok(CoordinateChange {
        source: a.source.clone(),
        target: b.target.clone(),
        domain: a.domain.pullback_intersect(&a.phi, &b.domain),
        phi,
        hat_phi: b.hat_phi.mul(&a.hat_phi),
    })
}

/// Shrinking with transition domains `U′_IJ = U_IJ ∩ U′_I ∩ φ_IJ⁻¹(U′_J)`.
///
/// Every `U′_I ⋐ U_I` must be certified by margins, and the footprint
/// cover must survive (checked on located zeros when `d = 0`, on near-zero
/// samples otherwise).
pub fn shrink(atlas: &AtlasSpec, new_domains: &BTreeMap<IndexSet, Domain>) -> Result<AtlasSpec> {
    let mut out = atlas.clone();
    for (idx, c) in out.charts.iter_mut() {
        let Some(u) = new_domains.get(idx) else { continue };
        if u.ambient_dim() != c.dim() {
            return Err(Error::Dimension(format!("shrunken domain of {}", fmt_index(idx))));
        }
        if !(u.precompact_in(&c.domain) || (c.dim() == 0 && u == &c.domain)) && !u.is_trivially_empty() {
            return Err(Error::Precompact(format!("{} not precompact in U_{}", u, fmt_index(idx))));
        }
        c.domain = u.clone();
    }
    for ((i, j), ch) in out.changes.iter_mut() {
        let ui = &out.charts[i].domain;
        let uj = &out.charts[j].domain;
        let base = if ui.box_contained_in(&ch.domain) { ui.clone() } else { ch.domain.intersect(ui) };
        ch.domain = base.pullback_intersect(&ch.phi, uj);
    }
    check_cover(atlas, &out)?;
    Ok(out)
}

fn check_cover(old: &AtlasSpec, new: &AtlasSpec) -> Result<()> {
    if old.dimension != 0 {
        for (idx, c) in &old.charts {
            let near = |dom: &Domain| {
                crate::sampling::sample_domain_opt(dom, 40, 7)
                    .iter()
                    .any(|x| c.section.eval(x).iter().all(|v| v.abs() < 0.05))
            };
            if near(&c.domain) && !near(&new.charts[idx].domain) {
                return Err(Error::CoverLost(format!("footprint of {} vanished", fmt_index(idx))));
            }
        }
        return Ok(());
    }
    let old_classes = crate::realization::zero_classes(old, 0.0);
    let new_classes = crate::realization::zero_classes(new, 0.0);
    for idx in old.charts.keys() {
        let had = old_classes.iter().any(|cl| cl.members.iter().any(|(i, _)| i == idx));
        let has = new_classes.iter().any(|cl| cl.members.iter().any(|(i, _)| i == idx));
        if had && !has {
            return Err(Error::CoverLost(format!("F_{} became empty", fmt_index(idx))));
        }
    }
    for cl in &old_classes {
        let covered = cl.members.iter().any(|(i, x)| {
            new.charts.get(i).is_some_and(|c| c.domain.contains(x))
                && i.iter().all(|b| {
                    cl.members.iter().any(|(k, y)| k == &vec![*b] && new.charts[k].domain.contains(y))
                })
        });
        if !covered {
            let (i, x) = &cl.members[0];
            return Err(Error::CoverLost(format!("zero {:?} of chart {} no longer covered", x, fmt_index(i))));
        }
    }
    Ok(())
}

/// Collar half-width of product concordances.
pub fn collar_eps() -> Rat {
    Rat::new(1.into(), 10.into())
}

/// `[0,1] × K` with domains `(−ε, 1+ε) × U_I` and changes `id × φ_IJ`.
pub fn product_concordance(atlas: &AtlasSpec) -> AtlasSpec {
    let eps = collar_eps();
    let lo = -eps.clone();
    let hi = Rat::one() + eps;
    let lift = |m: &SmoothMap, keep_t: bool| m.product_with_interval(keep_t);
    let charts: Vec<Chart> = atlas
        .charts
        .values()
        .map(|c| Chart {
            index: c.index.clone(),
            domain: c.domain.product_interval(lo.clone(), hi.clone()),
            obstruction_dim: c.obstruction_dim,
            section: lift(&c.section, false),
            embedding: Some(lift(&atlas.embedding(&c.index), true)),
        })
        .collect();
    let changes: Vec<CoordinateChange> = atlas
        .changes
        .values()
        .map(|c| CoordinateChange {
            source: c.source.clone(),
            target: c.target.clone(),
            domain: c.domain.product_interval(lo.clone(), hi.clone()),
            phi: lift(&c.phi, true),
            hat_phi: c.hat_phi.clone(),
        })
        .collect();
    let mut out = AtlasSpec::new(atlas.dimension + 1, atlas.basic_count, charts, changes)
        .expect("product of a valid atlas is valid");
    out.concordance = true;
    out.declared_kind = atlas.declared_kind;
    out.orientation = atlas.orientation.as_ref().map(|o| OrientationData {
        charts: o
            .charts
            .iter()
            .map(|(k, co)| {
                let n = co.domain_frame.rows();
                let mut f = RatMatrix::zeros(n + 1, n + 1);
                f.set(0, 0, Rat::one());
                for r in 0..n {
                    for s in 0..n {
                        f.set(r + 1, s + 1, co.domain_frame.get(r, s).clone());
                    }
                }
                (k.clone(), ChartOrientation { domain_frame: f, ..co.clone() })
            })
            .collect(),
    });
    out
}

/// Restriction of a product concordance to the slice `{t} × K`.
pub fn slice_concordance(atlas: &AtlasSpec, t: &Rat) -> Result<AtlasSpec> {
    if !atlas.concordance {
        return Err(Error::Schema("not a concordance".into()));
    }
    let slice_map = |m: &SmoothMap, drop_t: bool| -> Result<SmoothMap> {
        let comps = if drop_t { m.comps()[1..].to_vec() } else { m.comps().to_vec() };
        SmoothMap::new(m.domain_dim(), comps)
            .fix_first(t)
            .ok_or_else(|| Error::Unsupported("bump term depends on the collar coordinate".into()))
    };
    let mut charts = Vec::new();
    for c in atlas.charts.values() {
        let emb = c.embedding.as_ref().map(|e| slice_map(e, true)).transpose()?;
        charts.push(Chart {
            index: c.index.clone(),
            domain: c.domain.slice_first(t),
            obstruction_dim: c.obstruction_dim,
            section: slice_map(&c.section, false)?,
            embedding: emb,
        });
    }
    let mut changes = Vec::new();
    for c in atlas.changes.values() {
        changes.push(CoordinateChange {
            source: c.source.clone(),
            target: c.target.clone(),
            domain: c.domain.slice_first(t),
            phi: slice_map(&c.phi, true)?,
            hat_phi: c.hat_phi.clone(),
        });
    }
    let mut out = AtlasSpec::new(atlas.dimension - 1, atlas.basic_count, charts, changes)?;
    out.declared_kind = atlas.declared_kind;
    out.orientation = atlas.orientation.as_ref().map(|o| OrientationData {
        charts: o
            .charts
            .iter()
            .map(|(k, co)| {
                let n = co.domain_frame.rows() - 1;
                let mut f = RatMatrix::zeros(n, n);
                for r in 0..n {
                    for s in 0..n {
                        f.set(r, s, co.domain_frame.get(r + 1, s + 1).clone());
                    }
                }
                (k.clone(), ChartOrientation { domain_frame: f, ..co.clone() })
            })
            .collect(),
    });
    Ok(out)
}

/// Jacobian with kernel, cokernel and smallest singular value at `x`.
#[derive(Clone, Debug)]
pub struct DifferentialData {
    pub jacobian: DMatrix<f64>,
    pub kernel: Vec<DVector<f64>>,
    pub cokernel: Vec<DVector<f64>>,
    pub sigma_min: f64,
}

pub fn differential_data(f: &SmoothMap, x: &[f64], tau_rank: f64) -> DifferentialData {
    let j = f.jacobian(x);
    DifferentialData {
        kernel: kernel_basis(&j, tau_rank),
        cokernel: cokernel_basis(&j, tau_rank),
        sigma_min: sigma_min(&j),
        jacobian: j,
    }
}

// ---------------------------------------------------------------------------
// document form

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ChartDoc {
    pub index: IndexSet,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ambient_dim: Option<usize>,
    pub domain: Vec<PieceDoc>,
    pub obstruction_dim: usize,
    pub section: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding: Option<Vec<String>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ChangeDoc {
    pub source: IndexSet,
    pub target: IndexSet,
    pub domain: Vec<PieceDoc>,
    pub phi: Vec<String>,
    pub hat_phi: Vec<Vec<RatDoc>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ChartOrientationDoc {
    pub index: IndexSet,
    pub domain_frame: Vec<Vec<RatDoc>>,
    pub obstruction_frame: Vec<Vec<RatDoc>>,
    #[serde(default = "one")]
    pub sign: i32,
}

fn one() -> i32 {
    1
}

fn default_kind() -> AtlasKind {
    AtlasKind::Weak
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AtlasDoc {
    pub dimension: i64,
    pub basic_count: u32,
    pub index_sets: Vec<IndexSet>,
    #[serde(default = "default_kind")]
    pub declared_kind: AtlasKind,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub concordance: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metric_dim: Option<usize>,
    pub charts: Vec<ChartDoc>,
    pub changes: Vec<ChangeDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub orientation: Option<Vec<ChartOrientationDoc>>,
}

fn matrix_from_doc(rows: &[Vec<RatDoc>], r: usize, c: usize, what: &str) -> Result<RatMatrix> {
    if rows.len() != r || rows.iter().any(|row| row.len() != c) {
        return Err(Error::Schema(format!("{what}: expected {r}×{c} matrix")));
    }
    let data = rows.iter().flatten().map(|v| v.to_rat()).collect::<Result<Vec<_>>>()?;
    Ok(RatMatrix::new(r, c, data))
}

fn matrix_to_doc(m: &RatMatrix) -> Vec<Vec<RatDoc>> {
    (0..m.rows()).map(|r| m.row(r).iter().map(RatDoc::from).collect()).collect()
}

/// Parse a JSON atlas document.
pub fn parse_atlas(text: &str) -> Result<AtlasSpec> {
    let doc: AtlasDoc = serde_json::from_str(text)?;
    atlas_from_doc(&doc)
}

pub fn atlas_from_doc(doc: &AtlasDoc) -> Result<AtlasSpec> {
    let declared: BTreeSet<IndexSet> = doc.index_sets.iter().cloned().collect();
    let mut charts = Vec::new();
    let mut dims = BTreeMap::new();
    for cd in &doc.charts {
        let n = match (cd.ambient_dim, cd.domain.first()) {
            (Some(n), _) => n,
            (None, Some(p)) => p.r#box.len(),
            (None, None) => {
                return Err(Error::Schema(format!(
                    "chart {} has empty domain and no ambient_dim",
                    fmt_index(&cd.index)
                )))
            }
        };
        if !declared.contains(&cd.index) {
            return Err(Error::Schema(format!("chart {} not in index_sets", fmt_index(&cd.index))));
        }
        let domain = Domain::from_doc(n, &cd.domain)?;
        let section = SmoothMap::parse(n, &cd.section)?;
        if section.codomain_dim() != cd.obstruction_dim {
            return Err(Error::Dimension(format!(
                "section of {} has {} components, obstruction_dim is {}",
                fmt_index(&cd.index),
                section.codomain_dim(),
                cd.obstruction_dim
            )));
        }
        let mut c = Chart::new(cd.index.clone(), domain, cd.obstruction_dim, section);
        if let Some(e) = &cd.embedding {
            c.embedding = Some(SmoothMap::parse(n, e)?);
        }
        dims.insert(cd.index.clone(), (n, cd.obstruction_dim));
        charts.push(c);
    }
    if dims.len() != declared.len() {
        return Err(Error::Schema("index_sets and charts disagree".into()));
    }
    let mut changes = Vec::new();
    for ch in &doc.changes {
        let (&(ni, mi), &(_, mj)) = match (dims.get(&ch.source), dims.get(&ch.target)) {
            (Some(a), Some(b)) => (a, b),
            _ => return Err(Error::Schema(format!("change {} → {} off the poset", fmt_index(&ch.source), fmt_index(&ch.target)))),
        };
        changes.push(CoordinateChange {
            source: ch.source.clone(),
            target: ch.target.clone(),
            domain: Domain::from_doc(ni, &ch.domain)?,
            phi: SmoothMap::parse(ni, &ch.phi)?,
            hat_phi: matrix_from_doc(&ch.hat_phi, mj, mi, "hat_phi")?,
        });
    }
    let mut a = AtlasSpec::new(doc.dimension, doc.basic_count, charts, changes)?;
    if let Some(p) = doc.metric_dim {
        if p < a.metric_dim {
            return Err(Error::Dimension("metric_dim smaller than chart embeddings".into()));
        }
        a.metric_dim = p;
    }
    a.declared_kind = doc.declared_kind;
    a.concordance = doc.concordance;
    if let Some(o) = &doc.orientation {
        let mut od = OrientationData::default();
        for co in o {
            let &(n, m) = dims
                .get(&co.index)
                .ok_or_else(|| Error::Schema("orientation for unknown chart".into()))?;
            od.charts.insert(
                co.index.clone(),
                ChartOrientation {
                    domain_frame: matrix_from_doc(&co.domain_frame, n, n, "domain_frame")?,
                    obstruction_frame: matrix_from_doc(&co.obstruction_frame, m, m, "obstruction_frame")?,
                    sign: co.sign,
                },
            );
        }
        a.orientation = Some(od);
        a.verify_structure()?;
    }
    Ok(a)
}

pub fn atlas_to_doc(a: &AtlasSpec) -> AtlasDoc {
    AtlasDoc {
        dimension: a.dimension,
        basic_count: a.basic_count,
        index_sets: a.index_sets(),
        declared_kind: a.declared_kind,
        concordance: a.concordance,
        metric_dim: Some(a.metric_dim),
        charts: a
            .index_sets()
            .iter()
            .map(|i| {
                let c = a.chart(i);
                ChartDoc {
                    index: i.clone(),
                    ambient_dim: Some(c.dim()),
                    domain: c.domain.to_doc(),
                    obstruction_dim: c.obstruction_dim,
                    section: c.section.to_strings(),
                    embedding: c.embedding.as_ref().map(|e| e.to_strings()),
                }
            })
            .collect(),
        changes: a
            .changes
            .values()
            .map(|c| ChangeDoc {
                source: c.source.clone(),
                target: c.target.clone(),
                domain: c.domain.to_doc(),
                phi: c.phi.to_strings(),
                hat_phi: matrix_to_doc(&c.hat_phi),
            })
            .collect(),
        orientation: a.orientation.as_ref().map(|o| {
            o.charts
                .iter()
                .map(|(k, co)| ChartOrientationDoc {
                    index: k.clone(),
                    domain_frame: matrix_to_doc(&co.domain_frame),
                    obstruction_frame: matrix_to_doc(&co.obstruction_frame),
                    sign: co.sign,
                })
                .collect()
        }),
    }
}

pub fn atlas_to_json(a: &AtlasSpec) -> String {
    serde_json::to_string_pretty(&atlas_to_doc(a)).expect("atlas documents always serialize")
}

/// Convenience: rational interval box `Π(lo_i, hi_i)` from pairs.
pub fn rbox(bounds: &[(Rat, Rat)]) -> Domain {
    Domain::from_box(bounds.iter().map(|b| b.0.clone()).collect(), bounds.iter().map(|b| b.1.clone()).collect())
}

/// Integer-endpoint box.
pub fn ibox(bounds: &[(i64, i64)]) -> Domain {
    rbox(&bounds.iter().map(|&(a, b)| (rat(a), rat(b))).collect::<Vec<_>>())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly::ratio;

    fn quartic_single() -> AtlasSpec {
        let c = Chart::new(vec![1], ibox(&[(-2, 2)]), 1, SmoothMap::parse(1, &["x1^4 - x1^2".into()]).unwrap());
        AtlasSpec::new(0, 1, vec![c], vec![]).unwrap()
    }

    #[test]
    fn single_chart_no_obstruction_has_dimension_one() {
        let c = Chart::new(vec![1], ibox(&[(-1, 1)]), 0, SmoothMap::zero(1, 0));
        let a = AtlasSpec::new(1, 1, vec![c], vec![]).unwrap();
        assert_eq!(a.dimension, 1);
        assert!(a.changes.is_empty());
    }

    #[test]
    fn zero_hat_phi_is_rank_failure() {
        let text = r#"{"dimension":0,"basic_count":2,"index_sets":[[1],[2],[1,2]],
          "charts":[
            {"index":[1],"domain":[{"box":[[-2,2]]}],"obstruction_dim":1,"section":["x1"]},
            {"index":[2],"domain":[{"box":[[-2,2]]}],"obstruction_dim":1,"section":["x1"]},
            {"index":[1,2],"domain":[{"box":[[-2,2],[-1,1]]}],"obstruction_dim":2,"section":["x1","x2"]}],
          "changes":[
            {"source":[1],"target":[1,2],"domain":[{"box":[[-1,1]]}],"phi":["x1","0"],"hat_phi":[["0"],["0"]]},
            {"source":[2],"target":[1,2],"domain":[{"box":[[-1,1]]}],"phi":["x1","0"],"hat_phi":[["1"],["0"]]}]}"#;
        assert!(matches!(parse_atlas(text), Err(Error::Rank(_))));
    }

    #[test]
    fn missing_field_is_schema_error() {
        let text = r#"{"dimension":0,"basic_count":1,"index_sets":[[1]],"charts":[{"index":[1],"domain":[{"box":[[-2,2]]}],"section":["x1"]}],"changes":[]}"#;
        assert!(matches!(parse_atlas(text), Err(Error::Schema(_))));
    }

    #[test]
    fn restriction_cases() {
        let a = quartic_single();
        let c = a.chart(&[1]);
        let r = restrict_chart(c, &ibox(&[(-1, 2)])).unwrap();
        assert_eq!(r.section, c.section);
        assert_eq!(restrict_chart(c, &c.domain).unwrap(), *c);
        assert!(matches!(restrict_chart(c, &ibox(&[(3, 4)])), Err(Error::Containment(_))));
    }

    #[test]
    fn shrink_keeps_or_loses_cover() {
        let a = quartic_single();
        let mut nd = BTreeMap::new();
        nd.insert(vec![1], rbox(&[(ratio(-3, 2), ratio(3, 2))]));
        assert!(shrink(&a, &nd).is_ok());
        nd.insert(vec![1], rbox(&[(ratio(1, 2), ratio(3, 2))]));
        assert!(matches!(shrink(&a, &nd), Err(Error::CoverLost(_))));
        nd.insert(vec![1], ibox(&[(-2, 2)]));
        assert!(matches!(shrink(&a, &nd), Err(Error::Precompact(_))));
    }

    #[test]
    fn differential_data_of_quartic() {
        let f = SmoothMap::parse(1, &["x1^4 - x1^2".into()]).unwrap();
        let d = differential_data(&f, &[1.0], 1e-8);
        assert_eq!(d.jacobian[(0, 0)], 2.0);
        assert!(d.kernel.is_empty() && d.cokernel.is_empty());
        assert_eq!(d.sigma_min, 2.0);
        let d0 = differential_data(&f, &[0.0], 1e-8);
        assert_eq!(d0.kernel.len(), 1);
        assert_eq!(d0.cokernel.len(), 1);
    }

    #[test]
    fn product_of_single_chart() {
        let c = Chart::new(vec![1], ibox(&[(-1, 1)]), 1, SmoothMap::parse(1, &["x1".into()]).unwrap());
        let a = AtlasSpec::new(0, 1, vec![c], vec![]).unwrap();
        let p = product_concordance(&a);
        assert_eq!(p.dimension, 1);
        assert_eq!(p.chart(&[1]).section.to_strings(), vec!["x2".to_string()]);
        assert!(p.changes.is_empty());
    }
}
