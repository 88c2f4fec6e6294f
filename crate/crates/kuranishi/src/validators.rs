//! Structural checks on atlases. Each check returns a [`Verdict`]; set
//! identities are probed in both directions on seeded samples.

use std::collections::BTreeMap;

use nalgebra::DMatrix;

use crate::atlas::{fmt_index, intersection, is_proper_subset, is_subset, union, AtlasSpec, IndexSet};
use crate::config::Tolerances;
use crate::linalg::{complement_basis, numerical_rank, sigma_min, singular_values, RatMatrix};
use crate::realization::{chart_zeros, dist, invert_change, RealizationCloud, ZERO_MESH};
use crate::report::{Verdict, Witness};
use crate::sampling::sample_domain_opt;
use crate::smooth::SmoothMap;
use crate::zeros::newton;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CocycleLevel {
    Weak,
    Standard,
    Strong,
}

impl CocycleLevel {
    fn name(self) -> &'static str {
        match self {
            CocycleLevel::Weak => "cocycle-weak",
            CocycleLevel::Standard => "cocycle-standard",
            CocycleLevel::Strong => "cocycle-strong",
        }
    }
}

/// Seed for the samples of one named set.
pub fn probe_seed(seed: u64, tag: &str, sets: &[&IndexSet]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325 ^ seed;
    let mut eat = |b: u8| {
        h ^= b as u64;
        h = h.wrapping_mul(0x100_0000_01b3);
    };
    for b in tag.bytes() {
        eat(b);
    }
    for s in sets {
        eat(0xff);
        for &v in s.iter() {
            eat(v as u8);
        }
    }
    h
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

fn mat_vec(a: &RatMatrix, v: &[f64]) -> Vec<f64> {
    let m = a.to_f64();
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)] * v[j]).sum()).collect()
}

/// Exact `s_J∘φ_IJ − φ̂_IJ∘s_I` when polynomial, else its sampled sup.
pub fn intertwining_residual(atlas: &AtlasSpec, i: &[u32], j: &[u32], density: usize, seed: u64) -> (f64, Option<Vec<f64>>) {
    let ch = atlas.change(i, j);
    let sj = &atlas.chart(j).section;
    let si = &atlas.chart(i).section;
    if let Some(lhs) = sj.compose(&ch.phi) {
        let rhs = si.left_mul(&ch.hat_phi);
        if lhs.sub(&rhs).comps().iter().all(|c| c.is_zero()) {
            return (0.0, None);
        }
    }
    let mut worst = 0.0;
    let mut at = None;
    for x in sample_domain_opt(&ch.domain, density, probe_seed(seed, "intertwine", &[&i.to_vec(), &j.to_vec()])) {
        let r = norm(&sub(&sj.eval(&ch.phi.eval(&x)), &mat_vec(&ch.hat_phi, &si.eval(&x))));
        if r > worst {
            worst = r;
            at = Some(x);
        }
    }
    (worst, at)
}

pub fn check_intertwining(atlas: &AtlasSpec, density: usize, seed: u64, tol: &Tolerances) -> Verdict {
    let mut v = Verdict::pass("intertwining", 0.0, tol.tau_eq);
    for (i, j) in atlas.changes.keys() {
        let (r, at) = intertwining_residual(atlas, i, j, density, seed);
        v.margin = v.margin.max(r);
        if r > tol.tau_eq {
            v.push_failure(Witness::new(
                vec![i.clone(), j.clone()],
                at.into_iter().collect(),
                r,
                "s_J∘φ ≠ φ̂∘s_I",
            ));
        }
    }
    v
}

// ---------------------------------------------------------------------------
// cocycle

/// Weak, standard or strong cocycle condition over all chains `I ⊊ J ⊊ K`.
/// The matrix identity `φ̂_JK φ̂_IJ = φ̂_IK` is always checked exactly.
pub fn check_cocycle(atlas: &AtlasSpec, level: CocycleLevel, density: usize, seed: u64, tol: &Tolerances) -> Verdict {
    let mut v = Verdict::pass(level.name(), 0.0, tol.tau_eq).with_note("margin = worst map residual");
    for (i, j, k) in atlas.triples() {
        let (ij, jk, ik) = (atlas.change(&i, &j), atlas.change(&j, &k), atlas.change(&i, &k));
        let charts = vec![i.clone(), j.clone(), k.clone()];
        if jk.hat_phi.mul(&ij.hat_phi) != ik.hat_phi {
            v.push_failure(Witness::new(charts.clone(), vec![], f64::INFINITY, "φ̂_JK·φ̂_IJ ≠ φ̂_IK"));
        }
        let exact = match jk.phi.compose(&ij.phi) {
            Some(c) => c.sub(&ik.phi).comps().iter().all(|f| f.is_zero()),
            None => false,
        };
        let seed_ij = probe_seed(seed, "cocycle", &[&i, &j, &k]);
        for x in sample_domain_opt(&ij.domain, density, seed_ij) {
            let y = ij.phi.eval(&x);
            let in_jk = jk.domain.contains(&y);
            let in_ik = ik.domain.contains(&x);
            if in_jk && in_ik && !exact {
                let r = norm(&sub(&jk.phi.eval(&y), &ik.phi.eval(&x)));
                v.margin = v.margin.max(r);
                if r > tol.tau_eq {
                    v.push_failure(Witness::new(charts.clone(), vec![x.clone()], r, "φ_JK∘φ_IJ ≠ φ_IK"));
                }
            }
            if level != CocycleLevel::Weak && in_jk && !in_ik {
                v.push_failure(Witness::new(charts.clone(), vec![x.clone()], 0.0, "φ_IJ⁻¹(U_JK) ⊄ U_IK"));
            }
        }
        if level == CocycleLevel::Strong {
            for x in sample_domain_opt(&ik.domain, density, seed_ij ^ 1) {
                let ok = ij.domain.contains(&x) && jk.domain.contains(&ij.phi.eval(&x));
                if !ok {
                    v.push_failure(Witness::new(charts.clone(), vec![x], 0.0, "U_IK ⊄ φ_IJ⁻¹(U_JK)"));
                }
            }
        }
    }
    v
}

// ---------------------------------------------------------------------------
// index condition

/// Conditioning of the map `T_vU_J / im dφ → E_J / im φ̂` induced by `ds_J`,
/// plus the two rank identities of the tangent-bundle form.
pub fn index_data(atlas: &AtlasSpec, i: &[u32], j: &[u32], u: &[f64], tau_rank: f64) -> (f64, bool, bool) {
    let ch = atlas.change(i, j);
    let v = ch.phi.eval(u);
    let dphi = ch.phi.jacobian(u);
    let dsj = atlas.chart(j).section.jacobian(&v);
    let dsi = atlas.chart(i).section.jacobian(u);
    let hat = ch.hat_phi.to_f64();
    let q = complement_basis(&dphi, tau_rank);
    let p = complement_basis(&hat, tau_rank);
    let cond = if q.is_empty() && p.is_empty() {
        f64::INFINITY
    } else if q.len() != p.len() {
        0.0
    } else {
        let qm = DMatrix::from_columns(&q);
        let pm = DMatrix::from_columns(&p);
        sigma_min(&(pm.transpose() * &dsj * qm))
    };
    let m_j = dsj.nrows();
    let rank = |a: &DMatrix<f64>| if a.nrows() == 0 || a.ncols() == 0 { 0 } else { numerical_rank(a, tau_rank) };
    let stacked = if hat.ncols() == 0 { dsj.clone() } else { concat_cols(&dsj, &hat) };
    let spans = rank(&stacked) == m_j;
    let inter = rank(&dsj) + hat.ncols() - rank(&stacked);
    let meets = inter == rank(&dsi);
    (cond, spans, meets)
}

fn concat_cols(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(a.nrows(), a.ncols() + b.ncols());
    m.view_mut((0, 0), a.shape()).copy_from(a);
    m.view_mut((0, a.ncols()), b.shape()).copy_from(b);
    m
}

/// Index condition at samples of every `U_IJ` and at the zeros of `s_I`
/// lying in `U_IJ` (where the kernel and cokernel are nontrivial).
pub fn check_index_condition(atlas: &AtlasSpec, density: usize, seed: u64, tol: &Tolerances) -> Verdict {
    let mut v = Verdict::pass("index-condition", f64::INFINITY, tol.tau_rank)
        .with_note("margin = min σ of the induced normal isomorphism");
    for ((i, j), ch) in &atlas.changes {
        let (ci, cj) = (atlas.chart(i), atlas.chart(j));
        if ci.dim() as i64 - ci.obstruction_dim as i64 != cj.dim() as i64 - cj.obstruction_dim as i64 {
            v.push_failure(Witness::new(vec![i.clone(), j.clone()], vec![], 0.0, "index mismatch"));
            continue;
        }
        let mut pts = sample_domain_opt(&ch.domain, density, probe_seed(seed, "index", &[i, j]));
        pts.extend(
            chart_zeros(&ci.section, &ci.domain, ZERO_MESH, tol.tau_id)
                .into_iter()
                .map(|z| z.x)
                .filter(|x| ch.domain.contains(x)),
        );
        for u in pts {
            let (cond, spans, meets) = index_data(atlas, i, j, &u, tol.tau_rank);
            v.margin = v.margin.min(cond);
            let detail = if !spans {
                "E_J ≠ im ds_J + im φ̂"
            } else if !meets {
                "im ds_J ∩ im φ̂ ≠ φ̂(im ds_I)"
            } else if cond <= tol.tau_rank {
                "normal map not an isomorphism"
            } else {
                continue;
            };
            v.push_failure(Witness::new(vec![i.clone(), j.clone()], vec![u], cond, detail));
        }
    }
    v
}

// ---------------------------------------------------------------------------
// additivity, filtration, sum conditions

/// Block matrix `[φ̂_iI]_{i∈I}` (identity for singletons).
pub fn basic_blocks(atlas: &AtlasSpec, idx: &[u32]) -> RatMatrix {
    let blocks: Vec<RatMatrix> = idx
        .iter()
        .map(|&b| {
            let bi = vec![b];
            if bi == idx {
                RatMatrix::identity(atlas.chart(idx).obstruction_dim)
            } else {
                atlas.change(&bi, idx).hat_phi.clone()
            }
        })
        .collect();
    let refs: Vec<&RatMatrix> = blocks.iter().collect();
    if refs.iter().all(|b| b.cols() == 0) {
        return RatMatrix::zeros(atlas.chart(idx).obstruction_dim, 0);
    }
    RatMatrix::hstack(&refs)
}

pub fn check_additivity(atlas: &AtlasSpec) -> Verdict {
    let mut v = Verdict::pass("additivity", 0.0, 0.0).with_note("exact rational block rank");
    for idx in atlas.index_sets() {
        if idx.len() < 2 {
            continue;
        }
        let b = basic_blocks(atlas, &idx);
        let m = atlas.chart(&idx).obstruction_dim;
        let ok = b.cols() == m && b.rank() == m;
        if !ok {
            let detail = format!("Σ dim E_i = {}, rank {}, dim E_I = {}", b.cols(), b.rank(), m);
            v.push_failure(Witness::new(vec![idx.clone()], vec![], b.rank() as f64 - m as f64, detail));
        }
    }
    v
}

/// Image of `E_I` in `E_J` (all of `E_J` when `I = J`).
fn image_in(atlas: &AtlasSpec, i: &[u32], j: &[u32]) -> RatMatrix {
    if i == j {
        RatMatrix::identity(atlas.chart(j).obstruction_dim)
    } else {
        atlas.change(i, j).hat_phi.clone()
    }
}

fn span_rank(blocks: &[&RatMatrix], rows: usize) -> usize {
    let nonempty: Vec<&RatMatrix> = blocks.iter().copied().filter(|b| b.cols() > 0).collect();
    if nonempty.is_empty() {
        return 0;
    }
    let _ = rows;
    RatMatrix::hstack(&nonempty).rank()
}

/// Filtration identities `E_I ∩ E_H = E_{I∩H}` inside every `E_J`, exact.
/// For `I ∩ H = ∅` the intersection must be `{0}`, so that
/// `s_J⁻¹(E_I) ∩ s_J⁻¹(E_H) = s_J⁻¹(0)`.
pub fn check_filtration(atlas: &AtlasSpec) -> Verdict {
    let mut v = Verdict::pass("filtration", 0.0, 0.0).with_note("exact subspace dimensions");
    let idx = atlas.index_sets();
    for j in &idx {
        let m = atlas.chart(j).obstruction_dim;
        let subs: Vec<&IndexSet> = idx.iter().filter(|i| is_subset(i, j)).collect();
        for (a, i) in subs.iter().enumerate() {
            for h in &subs[a + 1..] {
                let (si, sh) = (image_in(atlas, i, j), image_in(atlas, h, j));
                let inter = si.rank() + sh.rank() - span_rank(&[&si, &sh], m);
                let ih = intersection(i, h);
                let expect = if ih.is_empty() {
                    Some(0)
                } else if atlas.has(&ih) {
                    // E_{I∩H} must sit inside both and have the same dimension
                    let s = image_in(atlas, &ih, j);
                    let inside = span_rank(&[&si, &s], m) == si.rank() && span_rank(&[&sh, &s], m) == sh.rank();
                    inside.then_some(s.rank())
                } else {
                    None
                };
                if expect != Some(inter) {
                    let detail = format!("dim(E_{} ∩ E_{}) = {inter}", fmt_index(i), fmt_index(h));
                    v.push_failure(Witness::new(vec![(*i).clone(), (*h).clone(), j.clone()], vec![], inter as f64, detail));
                }
            }
        }
    }
    v
}

/// Sum conditions: every `φ̂_iI` injective and the basic images in direct
/// sum inside `E_I`, checked exactly and re-read at samples of `U_I`.
pub fn check_sum_conditions(atlas: &AtlasSpec, density: usize, seed: u64) -> Verdict {
    let mut v = Verdict::pass("sum-conditions", 0.0, 0.0).with_note("exact block ranks");
    for idx in atlas.index_sets() {
        if idx.len() < 2 {
            continue;
        }
        let b = basic_blocks(atlas, &idx);
        for &k in &idx {
            let h = &atlas.change(&[k], &idx).hat_phi;
            if h.rank() != h.cols() {
                v.push_failure(Witness::new(vec![vec![k], idx.clone()], vec![], 0.0, "φ̂ not injective"));
            }
        }
        if b.rank() != b.cols() {
            let pts = sample_domain_opt(&atlas.chart(&idx).domain, density.min(4), probe_seed(seed, "sum", &[&idx]));
            let detail = format!("basic images dependent: rank {} < {}", b.rank(), b.cols());
            v.push_failure(Witness::new(vec![idx.clone()], pts.into_iter().take(1).collect(), b.rank() as f64, detail));
        }
    }
    v
}

// ---------------------------------------------------------------------------
// tameness

/// Domain `U_IJ`, with `U_II = U_I` and `None` off the poset.
fn trans_contains(atlas: &AtlasSpec, i: &[u32], j: &[u32], x: &[f64]) -> bool {
    atlas.has(j) && (i == j || atlas.changes.contains_key(&(i.to_vec(), j.to_vec()))) && atlas.in_transition(i, j, x)
}

fn trans_samples(atlas: &AtlasSpec, i: &[u32], j: &[u32], density: usize, seed: u64) -> Vec<Vec<f64>> {
    if i == j {
        sample_domain_opt(&atlas.chart(i).domain, density, seed)
    } else if let Some(c) = atlas.changes.get(&(i.to_vec(), j.to_vec())) {
        sample_domain_opt(&c.domain, density, seed)
    } else {
        Vec::new()
    }
}

/// Project `y` onto `s_J⁻¹(im A)` by Gauss–Newton on the complement
/// components.
pub fn project_to_preimage(section: &SmoothMap, a: &RatMatrix, y: &[f64], tau_rank: f64) -> Option<Vec<f64>> {
    let m = section.codomain_dim();
    let p = if a.cols() == 0 {
        (0..m).map(|i| nalgebra::DVector::from_fn(m, |k, _| if k == i { 1.0 } else { 0.0 })).collect()
    } else {
        complement_basis(&a.to_f64(), tau_rank)
    };
    if p.is_empty() {
        return Some(y.to_vec());
    }
    let pm = DMatrix::from_columns(&p).transpose();
    let f = |x: &[f64]| -> Vec<f64> {
        let s = nalgebra::DVector::from_vec(section.eval(x));
        (&pm * s).iter().copied().collect()
    };
    let jac = |x: &[f64]| -> DMatrix<f64> { &pm * section.jacobian(x) };
    let (x, r) = newton(&f, &jac, y, 60);
    (r < 1e-11).then_some(x)
}

/// Tameness: additivity, the domain identities `U_IJ ∩ U_IK = U_{I(J∪K)}`
/// and `φ_IJ(U_IK) = U_JK ∩ s_J⁻¹(E_I)`, the filtration, and the
/// transversality of images of `dφ_HJ`, `dφ_IJ`.
pub fn check_tameness(atlas: &AtlasSpec, density: usize, seed: u64, tol: &Tolerances) -> Verdict {
    let add = check_additivity(atlas);
    if !add.passed() {
        let mut v = Verdict::pass("tameness", 0.0, tol.tau_id).with_note("requires additivity");
        for w in add.witnesses {
            v.push_failure(w);
        }
        return v;
    }
    let mut v = Verdict::pass("tameness", 0.0, tol.tau_id).with_note(format!("sampled at density {density}"));
    let idx = atlas.index_sets();
    // first identity
    for i in &idx {
        let sup: Vec<&IndexSet> = idx.iter().filter(|j| is_proper_subset(i, j)).collect();
        for (a, j) in sup.iter().enumerate() {
            for k in &sup[a + 1..] {
                let l = union(j, k);
                let s0 = probe_seed(seed, "tame1", &[i, j, k]);
                let mut pts = trans_samples(atlas, i, j, density, s0);
                pts.extend(trans_samples(atlas, i, k, density, s0 ^ 1));
                pts.extend(trans_samples(atlas, i, &l, density, s0 ^ 2));
                for x in pts {
                    let lhs = trans_contains(atlas, i, j, &x) && trans_contains(atlas, i, k, &x);
                    let rhs = trans_contains(atlas, i, &l, &x);
                    if lhs != rhs {
                        let detail = format!("U_IJ ∩ U_IK ≠ U_I{}", fmt_index(&l));
                        v.push_failure(Witness::new(vec![i.clone(), (*j).clone(), (*k).clone()], vec![x], 0.0, detail));
                    }
                }
            }
        }
    }
    // second identity
    for i in &idx {
        for j in idx.iter().filter(|j| is_proper_subset(i, j)) {
            let ij = atlas.change(i, j);
            for k in idx.iter().filter(|k| is_subset(j, k)) {
                let charts = vec![i.clone(), j.clone(), k.clone()];
                let s0 = probe_seed(seed, "tame2", &[i, j, k]);
                for x in trans_samples(atlas, i, k, density, s0) {
                    let ok = ij.domain.contains(&x) && trans_contains(atlas, j, k, &ij.phi.eval(&x));
                    if !ok {
                        v.push_failure(Witness::new(charts.clone(), vec![x], 0.0, "φ_IJ(U_IK) ⊄ U_JK"));
                    }
                }
                let sj = &atlas.chart(j).section;
                for y0 in trans_samples(atlas, j, k, density, s0 ^ 1) {
                    let Some(y) = project_to_preimage(sj, &ij.hat_phi, &y0, tol.tau_rank) else { continue };
                    if !trans_contains(atlas, j, k, &y) {
                        continue;
                    }
                    let pre = invert_change(atlas, i, j, &y, tol.tau_id);
                    let ok = pre.as_ref().is_some_and(|x| trans_contains(atlas, i, k, x));
                    if !ok {
                        v.push_failure(Witness::new(
                            charts.clone(),
                            vec![y],
                            0.0,
                            "U_JK ∩ s_J⁻¹(E_I) ⊄ φ_IJ(U_IK)",
                        ));
                    }
                }
            }
        }
    }
    let filt = check_filtration(atlas);
    for w in filt.witnesses {
        v.push_failure(w);
    }
    let pt = check_phi_transversality(atlas, density, seed, tol);
    for w in pt.witnesses {
        v.push_failure(w);
    }
    v
}

/// At samples of `φ_{(H∩I)J}(U_{(H∩I)J})`, the images of `dφ_HJ` and
/// `dφ_IJ` span a space of dimension `n_H + n_I − n_{H∩I}`.
pub fn check_phi_transversality(atlas: &AtlasSpec, density: usize, seed: u64, tol: &Tolerances) -> Verdict {
    let mut v = Verdict::pass("phi-transversality", f64::INFINITY, tol.tau_rank);
    let idx = atlas.index_sets();
    for j in &idx {
        let subs: Vec<&IndexSet> = idx.iter().filter(|i| is_proper_subset(i, j)).collect();
        for (a, h) in subs.iter().enumerate() {
            for i in &subs[a + 1..] {
                let c = intersection(h, i);
                if c.is_empty() || !atlas.has(&c) || is_subset(h, i) || is_subset(i, h) {
                    continue;
                }
                let expect = atlas.chart(h).dim() + atlas.chart(i).dim() - atlas.chart(&c).dim();
                for x in trans_samples(atlas, &c, j, density, probe_seed(seed, "phitrans", &[h, i, j])) {
                    let y = atlas.apply(&c, j, &x);
                    let (Some(xh), Some(xi)) = (
                        invert_change(atlas, h, j, &y, tol.tau_id),
                        invert_change(atlas, i, j, &y, tol.tau_id),
                    ) else {
                        continue;
                    };
                    let dh = atlas.change(h, j).phi.jacobian(&xh);
                    let di = atlas.change(i, j).phi.jacobian(&xi);
                    let m = concat_cols(&dh, &di);
                    let r = numerical_rank(&m, tol.tau_rank);
                    let s = singular_values(&m);
                    let gap = if expect == 0 { f64::INFINITY } else { s.get(expect - 1).copied().unwrap_or(0.0) };
                    v.margin = v.margin.min(gap);
                    if r != expect {
                        let detail = format!("rank {r} ≠ {expect}");
                        v.push_failure(Witness::new(vec![(*h).clone(), (*i).clone(), j.clone()], vec![y], gap, detail));
                    }
                }
            }
        }
    }
    v
}

// ---------------------------------------------------------------------------
// realization checks

/// Injectivity of `π_K` on every chart (two distinct samples of one `U_I`
/// in one class refute it), plus a Hausdorff probe: distinct classes must
/// be separated in the pulled-back metric.
pub fn check_injectivity_hausdorff(atlas: &AtlasSpec, cloud: &RealizationCloud, tol: &Tolerances) -> Verdict {
    let mut v = Verdict::pass("injectivity-hausdorff", f64::INFINITY, cloud.tol)
        .with_note(format!("no violation found at density {}", cloud.density));
    let mut per_chart: BTreeMap<IndexSet, Witness> = BTreeMap::new();
    for members in &cloud.classes {
        for (a, &p) in members.iter().enumerate() {
            for &q in &members[a + 1..] {
                let (pp, qq) = (&cloud.points[p], &cloud.points[q]);
                if pp.chart == qq.chart {
                    let d = dist(&pp.x, &qq.x);
                    if d > cloud.tol && !per_chart.contains_key(&pp.chart) {
                        per_chart.insert(
                            pp.chart.clone(),
                            Witness::new(
                                vec![pp.chart.clone()],
                                vec![pp.x.clone(), qq.x.clone()],
                                d,
                                format!("two points of U_{} in one class", fmt_index(&pp.chart)),
                            ),
                        );
                    }
                }
            }
        }
    }
    if !per_chart.is_empty() {
        v.note = "π_K not injective on a chart".into();
        for w in per_chart.into_values() {
            v.push_failure(w);
        }
        return v;
    }
    // Hausdorff: nearest pair of distinct classes in embedded coordinates
    let metric = check_metric_admissibility(atlas, 6, cloud.seed, tol);
    if !metric.passed() {
        v.mark_undetermined(Witness::new(vec![], vec![], 0.0, "no admissible metric to separate classes"));
        return v;
    }
    let mut order: Vec<usize> = (0..cloud.points.len()).collect();
    let key = |p: usize| cloud.embedded[p].first().copied().unwrap_or(0.0);
    order.sort_by(|&a, &b| key(a).partial_cmp(&key(b)).unwrap());
    for (a, &p) in order.iter().enumerate() {
        for &q in &order[a + 1..] {
            if key(q) - key(p) > cloud.tol {
                break;
            }
            if cloud.class_of[p] != cloud.class_of[q] {
                let d = dist(&cloud.embedded[p], &cloud.embedded[q]);
                if d < cloud.tol {
                    v.margin = v.margin.min(d);
                    v.mark_undetermined(Witness::new(
                        vec![cloud.points[p].chart.clone(), cloud.points[q].chart.clone()],
                        vec![cloud.points[p].x.clone(), cloud.points[q].x.clone()],
                        d,
                        "distinct classes at zero distance",
                    ));
                }
            }
        }
    }
    v
}

/// Admissibility of the embedding metric: `ι_J∘φ_IJ = ι_I` on samples, and
/// `dφ_IJ` isometric for the pulled-back Riemannian metrics. A failing
/// change reports its largest stretch factor.
pub fn check_metric_admissibility(atlas: &AtlasSpec, density: usize, seed: u64, tol: &Tolerances) -> Verdict {
    let mut v = Verdict::pass("metric-admissibility", 0.0, tol.tau_eq).with_note("margin = worst distance defect");
    let eq_tol = tol.tau_eq.max(1e-12) * 10.0;
    for ((i, j), ch) in &atlas.changes {
        let (ei, ej) = (atlas.embedding(i), atlas.embedding(j));
        let mut worst_stretch: f64 = 1.0;
        let mut worst_at = None;
        for x in sample_domain_opt(&ch.domain, density, probe_seed(seed, "metric", &[i, j])) {
            let y = ch.phi.eval(&x);
            let defect = norm(&sub(&ej.eval(&y), &ei.eval(&x)));
            v.margin = v.margin.max(defect);
            let gi = {
                let d = ei.jacobian(&x);
                d.transpose() * d
            };
            let dj = ej.jacobian(&y) * ch.phi.jacobian(&x);
            let gj = dj.transpose() * &dj;
            if gi.nrows() > 0 {
                if let Some(inv) = gi.clone().try_inverse() {
                    let ev = (inv * &gj).eigenvalues().map(|e| e.iter().copied().collect::<Vec<f64>>());
                    let ev = ev.unwrap_or_else(|| singular_values(&(gj.clone() - &gi)));
                    for e in ev {
                        let s = e.abs().sqrt();
                        let st = s.max(1.0 / s.max(1e-300));
                        if st > worst_stretch {
                            worst_stretch = st;
                            worst_at = Some(x.clone());
                        }
                    }
                } else {
                    v.push_failure(Witness::new(vec![i.clone()], vec![x.clone()], 0.0, "embedding not immersive"));
                }
            }
            if defect > eq_tol && worst_at.is_none() {
                worst_at = Some(x.clone());
                worst_stretch = worst_stretch.max(1.0 + defect);
            }
        }
        if worst_stretch - 1.0 > 1e-9 {
            v.push_failure(Witness::new(
                vec![i.clone(), j.clone()],
                worst_at.into_iter().collect(),
                worst_stretch,
                format!("stretch {worst_stretch:.6}"),
            ));
        }
    }
    v
}

/// All structural verdicts on one atlas.
pub fn validate_all(atlas: &AtlasSpec, cloud: Option<&RealizationCloud>, density: usize, seed: u64, tol: &Tolerances) -> Vec<Verdict> {
    let mut out = vec![
        check_intertwining(atlas, density, seed, tol),
        check_cocycle(atlas, CocycleLevel::Weak, density, seed, tol),
        check_index_condition(atlas, density, seed, tol),
        check_additivity(atlas),
        check_filtration(atlas),
        check_sum_conditions(atlas, density, seed),
        check_metric_admissibility(atlas, density, seed, tol),
    ];
    if let Some(c) = cloud {
        out.push(check_injectivity_hausdorff(atlas, c, tol));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::atlas::{ibox, Chart, CoordinateChange};
    use crate::realization::build_cloud;

    fn pmap(n: usize, s: &[&str]) -> SmoothMap {
        SmoothMap::parse(n, &s.iter().map(|x| x.to_string()).collect::<Vec<_>>()).unwrap()
    }

    fn two_chart(phi: &[&str]) -> AtlasSpec {
        let c1 = Chart::new(vec![1], ibox(&[(-2, 2)]), 0, SmoothMap::zero(1, 0));
        let c2 = Chart::new(vec![2], ibox(&[(-2, 2)]), 0, SmoothMap::zero(1, 0));
        let c12 = Chart::new(vec![1, 2], ibox(&[(-5, 5), (-1, 1)]), 1, pmap(2, &["x2"]));
        let ch = |s: u32, p: &[&str]| CoordinateChange {
            source: vec![s],
            target: vec![1, 2],
            domain: ibox(&[(-1, 1)]),
            phi: pmap(1, p),
            hat_phi: RatMatrix::zeros(1, 0),
        };
        AtlasSpec::new(1, 2, vec![c1, c2, c12], vec![ch(1, phi), ch(2, &["x1", "0"])]).unwrap()
    }

    #[test]
    fn stretch_witness() {
        let tol = Tolerances::default();
        let ok = two_chart(&["x1", "0"]);
        assert!(check_metric_admissibility(&ok, 10, 0, &tol).passed());
        let bad = two_chart(&["2*x1", "0"]);
        let v = check_metric_admissibility(&bad, 10, 0, &tol);
        assert!(v.failed());
        assert!((v.witnesses[0].margin - 2.0).abs() < 1e-9);
    }

    #[test]
    fn single_chart_trivial_checks() {
        let tol = Tolerances::default();
        let c = Chart::new(vec![1], ibox(&[(-1, 1)]), 0, SmoothMap::zero(1, 0));
        let a = AtlasSpec::new(1, 1, vec![c], vec![]).unwrap();
        assert!(check_additivity(&a).passed());
        assert!(check_tameness(&a, 10, 0, &tol).passed());
        assert!(check_sum_conditions(&a, 10, 0).passed());
        let cloud = build_cloud(&a, 10, 0, 1e-7).unwrap();
        assert!(check_injectivity_hausdorff(&a, &cloud, &tol).passed());
    }

    #[test]
    fn dependent_obstruction_lines_fail_sum_condition() {
        let c1 = Chart::new(vec![1], ibox(&[(-1, 1)]), 1, pmap(1, &["x1"]));
        let c2 = Chart::new(vec![2], ibox(&[(-1, 1)]), 1, pmap(1, &["x1"]));
        let c12 = Chart::new(vec![1, 2], ibox(&[(-1, 1), (-1, 1)]), 2, pmap(2, &["x1", "x2"]));
        let line = RatMatrix::from_i64(&[&[1], &[0]], 1);
        let ch = |s: u32, p: &[&str]| CoordinateChange {
            source: vec![s],
            target: vec![1, 2],
            domain: ibox(&[(-1, 1)]),
            phi: pmap(1, p),
            hat_phi: line.clone(),
        };
        let a = AtlasSpec::new(0, 2, vec![c1, c2, c12], vec![ch(1, &["x1", "0"]), ch(2, &["x1", "0"])]).unwrap();
        assert!(check_sum_conditions(&a, 5, 0).failed());
        assert!(check_additivity(&a).failed());
    }
}
