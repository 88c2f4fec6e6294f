//! Sampled model of the realization `|K|`: cloud points in chart domains,
//! identifications generated by coordinate changes, and their quotient
//! classes.

use std::collections::{BTreeMap, HashMap, VecDeque};

use nalgebra::{DMatrix, DVector};
use petgraph::unionfind::UnionFind;
use rayon::prelude::*;
use serde::Serialize;

use crate::atlas::{fmt_index, is_proper_subset, union, AtlasSpec, IndexSet};
use crate::error::{Error, Result};
use crate::sampling::sample_domain_opt;
use crate::smooth::SmoothMap;
use crate::zeros::{find_zeros, mesh, newton, ZeroPoint};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CloudPoint {
    pub chart: IndexSet,
    pub x: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RealizationCloud {
    pub points: Vec<CloudPoint>,
    /// Pairs `(a, b)` with `points[b] = φ_IJ(points[a])`.
    pub identifications: Vec<(usize, usize)>,
    pub class_of: Vec<usize>,
    pub classes: Vec<Vec<usize>>,
    /// `ι_I(x)` for every point.
    pub embedded: Vec<Vec<f64>>,
    pub density: usize,
    pub seed: u64,
    pub tol: f64,
}

/// Per-chart deduplicating store keyed on a grid of cell size `tol`.
struct ChartStore {
    tol: f64,
    cells: HashMap<Vec<i64>, Vec<usize>>,
}

impl ChartStore {
    fn new(tol: f64) -> Self {
        ChartStore { tol, cells: HashMap::new() }
    }

    fn key(&self, x: &[f64]) -> Vec<i64> {
        x.iter().map(|v| (v / self.tol).floor() as i64).collect()
    }

    fn find(&self, x: &[f64], pts: &[CloudPoint]) -> Option<usize> {
        let k = self.key(x);
        let n = k.len();
        let total = 3usize.pow(n as u32);
        for code in 0..total {
            let mut c = code;
            let mut kk = k.clone();
            for v in kk.iter_mut() {
                *v += (c % 3) as i64 - 1;
                c /= 3;
            }
            if let Some(list) = self.cells.get(&kk) {
                for &i in list {
                    let d2: f64 = pts[i].x.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum();
                    if d2.sqrt() < self.tol {
                        return Some(i);
                    }
                }
            }
        }
        None
    }

    fn insert(&mut self, x: &[f64], id: usize) {
        let k = self.key(x);
        self.cells.entry(k).or_default().push(id);
    }
}

/// Solve `φ(u) = y` for `u` in the transition domain of `i → j`.
///
/// Affine maps are inverted by least squares; otherwise Gauss–Newton is
/// seeded from a coarse mesh of the source domain.
pub fn invert_change(atlas: &AtlasSpec, i: &[u32], j: &[u32], y: &[f64], tol: f64) -> Option<Vec<f64>> {
    let ch = atlas.change(i, j);
    let n = ch.phi.domain_dim();
    if n == 0 {
        let v = ch.phi.eval(&[]);
        let d: f64 = v.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        return (d < tol && ch.domain.contains(&[])).then(Vec::new);
    }
    let u = invert_map(&ch.phi, y, &ch.domain.bounding_box()?, tol)?;
    ch.domain.contains(&u).then_some(u)
}

/// Generic inverse of an injective map near `y` (residual below `tol`).
pub fn invert_map(phi: &SmoothMap, y: &[f64], bbox: &(Vec<f64>, Vec<f64>), tol: f64) -> Option<Vec<f64>> {
    let n = phi.domain_dim();
    if let Some(polys) = phi.polys() {
        if polys.iter().all(|p| p.degree() <= 1) {
            let zero = vec![0.0; n];
            let b = phi.eval(&zero);
            let a = phi.jacobian(&zero);
            let rhs = DVector::from_iterator(y.len(), y.iter().zip(&b).map(|(p, q)| p - q));
            let u: Vec<f64> = a.clone().svd(true, true).solve(&rhs, 1e-14).ok()?.iter().copied().collect();
            let r = residual(phi, &u, y);
            return (r < tol).then_some(u);
        }
    }
    let f = |u: &[f64]| -> Vec<f64> { phi.eval(u).iter().zip(y).map(|(a, b)| a - b).collect() };
    let jac = |u: &[f64]| -> DMatrix<f64> { phi.jacobian(u) };
    let seeds = mesh(&bbox.0, &bbox.1, 6);
    let best = seeds
        .iter()
        .min_by(|a, b| residual(phi, a, y).partial_cmp(&residual(phi, b, y)).unwrap())?
        .clone();
    let (u, r) = newton(&f, &jac, &best, 60);
    (r < tol).then_some(u)
}

fn residual(phi: &SmoothMap, u: &[f64], y: &[f64]) -> f64 {
    phi.eval(u).iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
}

fn chart_seed(seed: u64, idx: &[u32]) -> u64 {
    idx.iter().fold(seed ^ 0x9e37_79b9_7f4a_7c15, |h, &v| h.rotate_left(7) ^ (v as u64).wrapping_mul(0x100_0000_01b3))
}

/// Cap on propagated points relative to the initial sample.
const GROWTH_CAP: usize = 20;

/// Sample every `U_I` and `U_IJ`, then close under `φ_IJ` and its local
/// inverses; identifications are exactly the applied coordinate changes.
pub fn build_cloud(atlas: &AtlasSpec, density: usize, seed: u64, tol: f64) -> Result<RealizationCloud> {
    build_cloud_with(atlas, density, seed, tol, &[])
}

/// As [`build_cloud`], with extra seed points (e.g. located zeros).
pub fn build_cloud_with(
    atlas: &AtlasSpec,
    density: usize,
    seed: u64,
    tol: f64,
    extra: &[CloudPoint],
) -> Result<RealizationCloud> {
    let idx = atlas.index_sets();
    let per_chart: Vec<Vec<CloudPoint>> = idx
        .par_iter()
        .map(|i| {
            let mut pts: Vec<CloudPoint> = sample_domain_opt(&atlas.chart(i).domain, density, chart_seed(seed, i))
                .into_iter()
                .map(|x| CloudPoint { chart: i.clone(), x })
                .collect();
            for j in &idx {
                if is_proper_subset(i, j) {
                    let d = &atlas.change(i, j).domain;
                    pts.extend(
                        sample_domain_opt(d, density, chart_seed(seed ^ 0xa5a5, &union(i, j)))
                            .into_iter()
                            .map(|x| CloudPoint { chart: i.clone(), x }),
                    );
                }
            }
            pts
        })
        .collect();
    for (i, pts) in idx.iter().zip(&per_chart) {
        if pts.is_empty() && atlas.chart(i).dim() > 0 {
            return Err(Error::EmptyDomain(format!("chart {} has no samples", fmt_index(i))));
        }
    }

    let mut points: Vec<CloudPoint> = Vec::new();
    let mut stores: BTreeMap<IndexSet, ChartStore> = idx.iter().map(|i| (i.clone(), ChartStore::new(tol))).collect();
    let mut queue = VecDeque::new();
    let mut add = |p: CloudPoint, points: &mut Vec<CloudPoint>, queue: &mut VecDeque<usize>| -> usize {
        let store = stores.get_mut(&p.chart).expect("known chart");
        if let Some(k) = store.find(&p.x, points) {
            return k;
        }
        let id = points.len();
        store.insert(&p.x, id);
        points.push(p);
        queue.push_back(id);
        id
    };
    for p in per_chart.into_iter().flatten().chain(extra.iter().cloned()) {
        add(p, &mut points, &mut queue);
    }
    let cap = points.len() * GROWTH_CAP + 1000;
    let mut ident = Vec::new();
    while let Some(a) = queue.pop_front() {
        if points.len() > cap {
            break;
        }
        let CloudPoint { chart: i, x } = points[a].clone();
        for j in &idx {
            if is_proper_subset(&i, j) && atlas.change(&i, j).domain.contains(&x) {
                let y = atlas.apply(&i, j, &x);
                if atlas.chart(j).domain.contains(&y) {
                    let b = add(CloudPoint { chart: j.clone(), x: y }, &mut points, &mut queue);
                    ident.push((a, b));
                }
            }
            if is_proper_subset(j, &i) {
                if let Some(u) = invert_change(atlas, j, &i, &x, tol * 0.1) {
                    let b = add(CloudPoint { chart: j.clone(), x: u }, &mut points, &mut queue);
                    ident.push((b, a));
                }
            }
        }
    }
    ident.sort();
    ident.dedup();
    let mut uf = UnionFind::<usize>::new(points.len());
    for &(a, b) in &ident {
        uf.union(a, b);
    }
    let mut class_of = vec![usize::MAX; points.len()];
    let mut classes: Vec<Vec<usize>> = Vec::new();
    let mut rep_to_class = HashMap::new();
    for p in 0..points.len() {
        let r = uf.find(p);
        let c = *rep_to_class.entry(r).or_insert_with(|| {
            classes.push(Vec::new());
            classes.len() - 1
        });
        class_of[p] = c;
        classes[c].push(p);
    }
    let embeddings: BTreeMap<IndexSet, SmoothMap> = idx.iter().map(|i| (i.clone(), atlas.embedding(i))).collect();
    let embedded = points.iter().map(|p| embeddings[&p.chart].eval(&p.x)).collect();
    Ok(RealizationCloud {
        points,
        identifications: ident,
        class_of,
        classes,
        embedded,
        density,
        seed,
        tol,
    })
}

impl RealizationCloud {
    /// Points whose embedded distance to `(i, x)` is below `radius`, plus
    /// the class of `(i, x)` when it lies in the cloud.
    pub fn metric_ball(&self, atlas: &AtlasSpec, i: &[u32], x: &[f64], radius: f64) -> Vec<usize> {
        let e = atlas.embedding(i).eval(x);
        let mut out: Vec<usize> = (0..self.points.len())
            .filter(|&p| dist(&self.embedded[p], &e) < radius)
            .collect();
        for (p, cp) in self.points.iter().enumerate() {
            if cp.chart == i && dist(&cp.x, x) < self.tol {
                out.extend(self.classes[self.class_of[p]].iter().copied());
            }
        }
        out.sort();
        out.dedup();
        out
    }

    /// Record stream `(class, chart, coordinates)`.
    pub fn export(&self) -> Vec<(usize, IndexSet, Vec<f64>)> {
        self.points
            .iter()
            .enumerate()
            .map(|(k, p)| (self.class_of[k], p.chart.clone(), p.x.clone()))
            .collect()
    }
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

// ---------------------------------------------------------------------------
// zero set

/// Glued class of zero points `(chart, point)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ZeroClass {
    pub members: Vec<(IndexSet, Vec<f64>)>,
    pub sigma_min: Vec<f64>,
}

/// Mesh density for zero location.
pub const ZERO_MESH: usize = 20;

/// Zeros of `s_I` in the domain `dom` (square charts only).
pub fn chart_zeros(
    section: &SmoothMap,
    dom: &crate::domain::Domain,
    density: usize,
    tol: f64,
) -> Vec<ZeroPoint> {
    if section.domain_dim() != section.codomain_dim() {
        return Vec::new();
    }
    if section.domain_dim() == 0 {
        return if dom.contains(&[]) {
            vec![ZeroPoint { x: Vec::new(), residual: 0.0, sigma_min: f64::INFINITY }]
        } else {
            Vec::new()
        };
    }
    let boxes: Vec<(Vec<f64>, Vec<f64>)> = dom.pieces().iter().map(|p| (p.lo_f64(), p.hi_f64())).collect();
    let f = |x: &[f64]| section.eval(x);
    let j = |x: &[f64]| section.jacobian(x);
    find_zeros(&f, &j, &|x: &[f64]| dom.contains(x), &boxes, density, tol)
}

/// Matching radius for two zero points: looser near degenerate zeros,
/// whose location is only accurate to about the square root of the
/// residual.
pub fn match_radius(tol: f64, s1: f64, s2: f64) -> f64 {
    if s1.min(s2) < 1e-3 {
        1e-4
    } else {
        tol
    }
}

/// Glue located zeros through common images in superset charts.
///
/// Errors with `Ambiguous` when one image matches two distinct points of
/// the same chart.
pub fn glue_points(atlas: &AtlasSpec, pts: &[(IndexSet, Vec<f64>, f64)], tol: f64) -> Result<Vec<ZeroClass>> {
    let idx = atlas.index_sets();
    // keys: (owner, chart K, φ_IK(x))
    let mut keys: Vec<(usize, IndexSet, Vec<f64>)> = Vec::new();
    for (o, (i, x, _)) in pts.iter().enumerate() {
        keys.push((o, i.clone(), x.clone()));
        for k in &idx {
            if is_proper_subset(i, k) && atlas.change(i, k).domain.contains(x) {
                keys.push((o, k.clone(), atlas.apply(i, k, x)));
            }
        }
    }
    let mut uf = UnionFind::<usize>::new(pts.len());
    for (o, k, y) in &keys {
        let mut partners: Vec<usize> = Vec::new();
        for (p, (j, z, s)) in pts.iter().enumerate() {
            if j == k && dist(y, z) < match_radius(tol, pts[*o].2, *s) {
                partners.push(p);
            }
        }
        if partners.len() > 1 {
            return Err(Error::Ambiguous(format!(
                "image of {:?} in chart {} matches {} zeros",
                pts[*o].1,
                fmt_index(k),
                partners.len()
            )));
        }
        for p in partners {
            uf.union(*o, p);
        }
        // equal images of two points in a common chart also identify them
    }
    for a in 0..keys.len() {
        for b in a + 1..keys.len() {
            let (oa, ka, ya) = &keys[a];
            let (ob, kb, yb) = &keys[b];
            if oa != ob && ka == kb && dist(ya, yb) < match_radius(tol, pts[*oa].2, pts[*ob].2) {
                uf.union(*oa, *ob);
            }
        }
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for p in 0..pts.len() {
        groups.entry(uf.find(p)).or_default().push(p);
    }
    let mut out: Vec<ZeroClass> = groups
        .into_values()
        .map(|g| ZeroClass {
            members: g.iter().map(|&p| (pts[p].0.clone(), pts[p].1.clone())).collect(),
            sigma_min: g.iter().map(|&p| pts[p].2).collect(),
        })
        .collect();
    out.sort_by(|a, b| a.members.partial_cmp(&b.members).unwrap());
    Ok(out)
}

/// Glued zero classes of the unperturbed sections over the full domains
/// (`d = 0`).
pub fn zero_classes(atlas: &AtlasSpec, _unused: f64) -> Vec<ZeroClass> {
    let tol = 1e-7;
    let mut pts = Vec::new();
    for i in atlas.index_sets() {
        let c = atlas.chart(&i);
        for z in chart_zeros(&c.section, &c.domain, ZERO_MESH, tol) {
            pts.push((i.clone(), z.x, z.sigma_min));
        }
    }
    glue_points(atlas, &pts, tol).unwrap_or_default()
}

/// Classes modelling `ι_K(X)`: zeros are located per chart, optionally
/// polished from near-zero cloud samples, merged into the cloud, and the
/// cloud classes meeting them are returned. A class present in charts `I`
/// and `J` with `I ∪ J` outside the poset is a cover-consistency failure.
pub fn zero_set_x(atlas: &AtlasSpec, cloud: &RealizationCloud, refine: bool) -> Result<Vec<ZeroClass>> {
    if atlas.dimension != 0 {
        return Err(Error::Unsupported("zero classes are computed for dimension 0".into()));
    }
    let tol = cloud.tol;
    let mut pts: Vec<(IndexSet, Vec<f64>, f64)> = Vec::new();
    for i in atlas.index_sets() {
        let c = atlas.chart(&i);
        for z in chart_zeros(&c.section, &c.domain, ZERO_MESH, tol) {
            pts.push((i.clone(), z.x, z.sigma_min));
        }
        if refine && c.dim() > 0 {
            let f = |x: &[f64]| c.section.eval(x);
            let j = |x: &[f64]| c.section.jacobian(x);
            for p in cloud.points.iter().filter(|p| p.chart == i) {
                if c.section.eval(&p.x).iter().map(|v| v.abs()).fold(0.0, f64::max) < 0.05 {
                    let (x, r) = newton(&f, &j, &p.x, 200);
                    if r < crate::zeros::ZERO_RESIDUAL && c.domain.contains(&x) {
                        let s = crate::linalg::sigma_min(&j(&x));
                        if !pts.iter().any(|(k, y, t)| k == &i && dist(y, &x) < match_radius(tol, *t, s)) {
                            pts.push((i.clone(), x, s));
                        }
                    }
                }
            }
        }
    }
    let classes = glue_points(atlas, &pts, tol)?;
    for cl in &classes {
        for (a, _) in &cl.members {
            for (b, _) in &cl.members {
                let u = union(a, b);
                if !atlas.has(&u) {
                    return Err(Error::CoverConsistency(format!(
                        "zero class {:?} lies in charts {} and {} but {} is not an index set",
                        cl.members[0].1,
                        fmt_index(a),
                        fmt_index(b),
                        fmt_index(&u)
                    )));
                }
            }
        }
    }
    Ok(classes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::atlas::{ibox, Chart};

    fn single(section: &str) -> AtlasSpec {
        let c = Chart::new(vec![1], ibox(&[(-2, 2)]), 1, SmoothMap::parse(1, &[section.into()]).unwrap());
        AtlasSpec::new(0, 1, vec![c], vec![]).unwrap()
    }

    #[test]
    fn single_chart_cloud_has_no_identifications() {
        let a = single("x1");
        let c = build_cloud(&a, 10, 0, 1e-7).unwrap();
        assert!(c.identifications.is_empty());
        assert_eq!(c.classes.len(), c.points.len());
    }

    #[test]
    fn quartic_has_three_zero_classes() {
        let a = single("x1^4 - x1^2");
        let c = build_cloud(&a, 10, 0, 1e-7).unwrap();
        let z = zero_set_x(&a, &c, true).unwrap();
        assert_eq!(z.len(), 3);
        let no = single("1");
        assert!(zero_set_x(&no, &build_cloud(&no, 5, 0, 1e-7).unwrap(), false).unwrap().is_empty());
    }

    #[test]
    fn metric_ball_on_interval() {
        let a = single("x1");
        let c = build_cloud(&a, 40, 0, 1e-7).unwrap();
        let b = c.metric_ball(&a, &[1], &[0.0], 0.5);
        assert!(!b.is_empty());
        assert!(b.iter().all(|&p| c.points[p].x[0].abs() < 0.5));
        assert!(c.metric_ball(&a, &[1], &[0.0], 0.0).is_empty());
    }

    #[test]
    fn deterministic_cloud() {
        let a = single("x1^3 - x1");
        assert_eq!(build_cloud(&a, 12, 5, 1e-7).unwrap(), build_cloud(&a, 12, 5, 1e-7).unwrap());
    }
}
