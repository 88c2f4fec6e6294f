//! Oriented zero sets of adapted perturbations and their signed count
//! (dimension 0), plus the invariance suite.
//!
//! With transverse zeros all kernels and cokernels vanish, so the sign of
//! a zero is the sign of `det d(s + ν)` written in the declared frames,
//! times the chart's orientation sign. Compatibility between charts
//! reduces to one sign per coordinate change, checked on samples.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::atlas::{fmt_index, product_concordance, slice_concordance, AtlasSpec, ChartOrientation, IndexSet, OrientationData};
use crate::config::Tolerances;
use crate::error::{Error, Result};
use crate::linalg::{complement_basis, det_sign};
use crate::perturb::{build_adapted, cutoff, in_pi_c, jacobian_fd, zero_density, BuildOptions, Evaluator, Perturbation};
use crate::poly::rat;
use crate::realization::{glue_points, RealizationCloud};
use crate::refine::{compute_sigma, reduce, ReductionContext, ReductionParams};
use crate::report::{Verdict, Witness};
use crate::sampling::sample_domain_opt;
use crate::zeros::{find_zeros, ZeroPoint};

/// `ν_I(y)` as a plain function of the chart and the point.
pub type NuFn<'a> = dyn Fn(&[u32], &[f64]) -> Vec<f64> + Sync + 'a;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrientedZero {
    pub chart: IndexSet,
    pub point: Vec<f64>,
    pub sign: i32,
    #[serde(with = "crate::report::extended")]
    pub sigma_min: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SignedClass {
    pub members: Vec<OrientedZero>,
    pub sign: i32,
    #[serde(with = "crate::report::extended")]
    pub margin: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrientedZeroSet {
    pub classes: Vec<SignedClass>,
    pub count: i64,
}

// orientation

fn frames(o: &ChartOrientation) -> (DMatrix<f64>, DMatrix<f64>) {
    let fe = o.obstruction_frame.inverse().expect("validated frame").to_f64();
    (o.domain_frame.to_f64(), fe)
}

/// Sign of a transverse zero with differential `jac`:
/// `o_I · sign det(F_E⁻¹ · jac · F_T)`.
pub fn orientation_sign(orient: &OrientationData, chart: &[u32], jac: &DMatrix<f64>) -> Result<i32> {
    let o = orient
        .charts
        .get(chart)
        .ok_or_else(|| Error::Orientation(format!("no frames for chart {}", fmt_index(chart))))?;
    if jac.nrows() != jac.ncols() {
        return Err(Error::Unsupported("signs are defined for dimension 0".into()));
    }
    let (ft, fe_inv) = frames(o);
    let s = det_sign(&(fe_inv * jac * ft));
    if s == 0 {
        return Err(Error::Transversality(format!("singular differential at a zero of {}", fmt_index(chart))));
    }
    Ok(o.sign * s)
}

/// `ε_IJ(x) = o_I o_J · sign det F_T^J⁻¹(dφ F_T^I | n) · sign det F_E^J⁻¹(φ̂ F_E^I | ds_J n)`
/// for any completion `n` of `im dφ`; it does not depend on `n`, and it is
/// `+1` exactly when identified zeros get equal signs.
pub fn transition_sign(atlas: &AtlasSpec, orient: &OrientationData, i: &[u32], j: &[u32], x: &[f64], tau: f64) -> Option<i32> {
    let ch = atlas.change(i, j);
    let (oi, oj) = (&orient.charts[i], &orient.charts[j]);
    let (nj, mj) = (atlas.chart(j).dim(), atlas.chart(j).obstruction_dim);
    let ni = atlas.chart(i).dim();
    let dphi = if ni == 0 { DMatrix::zeros(nj, 0) } else { ch.phi.jacobian(x) };
    let tangent = &dphi * oi.domain_frame.to_f64();
    let normal = complement_basis(&dphi, tau);
    if tangent.ncols() + normal.len() != nj {
        return None;
    }
    let mut t = DMatrix::zeros(nj, nj);
    t.view_mut((0, 0), (nj, tangent.ncols())).copy_from(&tangent);
    for (c, v) in normal.iter().enumerate() {
        t.set_column(tangent.ncols() + c, v);
    }
    let y = ch.phi.eval(x);
    let ds = atlas.chart(j).section.jacobian(&y);
    let mi = atlas.chart(i).obstruction_dim;
    let mut e = DMatrix::zeros(mj, mj);
    let hat = ch.hat_phi.to_f64() * oi.obstruction_frame.to_f64();
    e.view_mut((0, 0), (mj, mi)).copy_from(&hat);
    for (c, v) in normal.iter().enumerate() {
        let w: DVector<f64> = &ds * v;
        e.set_column(mi + c, &w);
    }
    let tj = oj.domain_frame.inverse()?.to_f64() * t;
    let ej = oj.obstruction_frame.inverse()?.to_f64() * e;
    let scale = |m: &DMatrix<f64>| m.iter().map(|v| v.abs()).fold(0.0, f64::max).max(1.0);
    let (dt, de) = (tj.determinant(), ej.determinant());
    if dt.abs() < tau * scale(&tj) || de.abs() < tau * scale(&ej) {
        return None;
    }
    Some(oi.sign * oj.sign * det_sign(&tj) * det_sign(&ej))
}

/// Transition consistency of the declared frames on every coordinate
/// change, sampled on its domain.
pub fn check_orientation(atlas: &AtlasSpec, density: usize, seed: u64, tol: &Tolerances) -> Verdict {
    let orient = atlas.orientation_or_standard();
    let mut v = Verdict::pass("orientation transitions", 1.0, 0.0).with_note("min ε_IJ over samples");
    for ((i, j), ch) in &atlas.changes {
        let pts = if atlas.chart(i).dim() == 0 {
            if ch.domain.contains(&[]) {
                vec![Vec::new()]
            } else {
                Vec::new()
            }
        } else {
            sample_domain_opt(&ch.domain, density, seed)
        };
        for x in pts {
            match transition_sign(atlas, &orient, i, j, &x, tol.tau_rank) {
                Some(1) => {}
                Some(_) => {
                    v.margin = -1.0;
                    v.push_failure(Witness::new(vec![i.clone(), j.clone()], vec![x], -1.0, "frames disagree across the change"));
                }
                None => v.mark_undetermined(Witness::new(vec![i.clone(), j.clone()], vec![x], 0.0, "normal data degenerate")),
            }
        }
    }
    v
}

/// Reverses the orientation of the listed charts (all when `None`) by
/// negating the first obstruction frame vector, or the first domain frame
/// vector, or the sign on a bare point chart.
pub fn reverse_orientation(atlas: &AtlasSpec, charts: Option<&[IndexSet]>) -> AtlasSpec {
    let mut o = atlas.orientation_or_standard();
    for (k, co) in o.charts.iter_mut() {
        if !charts.is_none_or(|c| c.contains(k)) {
            continue;
        }
        let f = if co.obstruction_frame.cols() > 0 {
            &mut co.obstruction_frame
        } else if co.domain_frame.cols() > 0 {
            &mut co.domain_frame
        } else {
            co.sign = -co.sign;
            continue;
        };
        for r in 0..f.rows() {
            let v = -f.get(r, 0).clone();
            f.set(r, 0, v);
        }
    }
    atlas.clone().with_orientation(o)
}

// zeros

fn require_ledger(p: &Perturbation) -> Result<()> {
    match p.ledger.iter().find(|l| !l.passed) {
        Some(l) => Err(Error::Ledger(format!("{} (margin {:.3e})", l.condition, l.margin))),
        None => Ok(()),
    }
}

/// Zeros of `s_I + ν_I` on `cl V^{|I|}_I` for every chart.
pub fn find_perturbed_zeros(
    atlas: &AtlasSpec,
    ctx: &ReductionContext,
    nu: &NuFn,
    tol: &Tolerances,
) -> Result<Vec<(IndexSet, ZeroPoint)>> {
    if atlas.dimension != 0 {
        return Err(Error::Unsupported("counts are defined for dimension 0".into()));
    }
    let ev = Evaluator::new(atlas, ctx)?;
    let charts: Vec<IndexSet> = atlas.index_sets().into_iter().filter(|i| !ctx.v[i].is_trivially_empty()).collect();
    let found: Vec<Vec<(IndexSet, ZeroPoint)>> = charts
        .par_iter()
        .map(|i| {
            let c = atlas.chart(i);
            let level = i.len() as f64;
            let f = |y: &[f64]| {
                let mut s = c.section.eval(y);
                for (a, b) in s.iter_mut().zip(nu(i, y)) {
                    *a += b;
                }
                s
            };
            if c.dim() == 0 {
                let in_v = ev.geom.in_level_closure(i, level, &[]);
                let zero = f(&[]).iter().all(|v| *v == 0.0);
                return if in_v && zero {
                    vec![(i.clone(), ZeroPoint { x: Vec::new(), residual: 0.0, sigma_min: f64::INFINITY })]
                } else {
                    Vec::new()
                };
            }
            let jac = |y: &[f64]| jacobian_fd(&f, y, c.obstruction_dim);
            let inside = |y: &[f64]| c.domain.contains(y) && ev.geom.in_level_closure(i, level, y);
            let boxes = ev.geom.level_boxes(i, level);
            find_zeros(&f, &jac, &inside, &boxes, zero_density(c.dim(), 20) + 1, tol.tau_id)
                .into_iter()
                .map(|z| (i.clone(), z))
                .collect()
        })
        .collect();
    let zeros: Vec<(IndexSet, ZeroPoint)> = found.into_iter().flatten().collect();
    if let Some((i, z)) = zeros.iter().find(|(_, z)| z.sigma_min < tol.tau_transv) {
        return Err(Error::Transversality(format!(
            "zero {:?} of chart {} has σ_min {:.2e}",
            z.x,
            fmt_index(i),
            z.sigma_min
        )));
    }
    Ok(zeros)
}

/// Glues located zeros into classes, checks confinement to `π(C)` and
/// sign coherence, and sums the class signs.
pub fn glue_zero_set(
    atlas: &AtlasSpec,
    ctx: &ReductionContext,
    nu: &NuFn,
    zeros: &[(IndexSet, ZeroPoint)],
    tol: &Tolerances,
) -> Result<OrientedZeroSet> {
    let orient = atlas.orientation_or_standard();
    let ev = Evaluator::new(atlas, ctx)?;
    let mut signed: BTreeMap<(IndexSet, Vec<u64>), OrientedZero> = BTreeMap::new();
    for (i, z) in zeros {
        let c = atlas.chart(i);
        let f = |y: &[f64]| {
            let mut s = c.section.eval(y);
            for (a, b) in s.iter_mut().zip(nu(i, y)) {
                *a += b;
            }
            s
        };
        let jac = if c.dim() == 0 { DMatrix::zeros(0, 0) } else { jacobian_fd(&f, &z.x, c.obstruction_dim) };
        let sign = orientation_sign(&orient, i, &jac)?;
        let key = (i.clone(), z.x.iter().map(|v| v.to_bits()).collect());
        signed.insert(key, OrientedZero { chart: i.clone(), point: z.x.clone(), sign, sigma_min: z.sigma_min });
    }
    let pts: Vec<(IndexSet, Vec<f64>, f64)> = zeros.iter().map(|(i, z)| (i.clone(), z.x.clone(), z.sigma_min)).collect();
    let classes = glue_points(atlas, &pts, tol.tau_id)?;
    let mut out = Vec::new();
    for cl in classes {
        let members: Vec<OrientedZero> = cl
            .members
            .iter()
            .map(|(i, x)| signed[&(i.clone(), x.iter().map(|v| v.to_bits()).collect::<Vec<_>>())].clone())
            .collect();
        let sign = members[0].sign;
        if let Some(bad) = members.iter().find(|m| m.sign != sign) {
            return Err(Error::Orientation(format!(
                "identified zeros {:?} in {} and {:?} in {} carry opposite signs",
                members[0].point,
                fmt_index(&members[0].chart),
                bad.point,
                fmt_index(&bad.chart)
            )));
        }
        if !members.iter().any(|m| in_pi_c(&ev, &m.chart, &m.point)) {
            return Err(Error::Confinement(format!(
                "zero class at {:?} in {} lies outside π(C)",
                members[0].point,
                fmt_index(&members[0].chart)
            )));
        }
        let margin = members.iter().map(|m| m.sigma_min).fold(f64::INFINITY, f64::min);
        out.push(SignedClass { members, sign, margin });
    }
    let count = out.iter().map(|c| c.sign as i64).sum();
    Ok(OrientedZeroSet { classes: out, count })
}

/// Count for an arbitrary compatible perturbation function.
pub fn count_with(atlas: &AtlasSpec, ctx: &ReductionContext, nu: &NuFn, tol: &Tolerances) -> Result<OrientedZeroSet> {
    let o = check_orientation(atlas, 8, 0, tol);
    if o.failed() {
        return Err(Error::Orientation(o.to_string()));
    }
    let zeros = find_perturbed_zeros(atlas, ctx, nu, tol)?;
    glue_zero_set(atlas, ctx, nu, &zeros, tol)
}

/// Signed count of the perturbed zero set of an adapted perturbation.
pub fn vfc_count(atlas: &AtlasSpec, ctx: &ReductionContext, p: &Perturbation, tol: &Tolerances) -> Result<OrientedZeroSet> {
    require_ledger(p)?;
    let ev = Evaluator::load(atlas, ctx, p)?;
    count_with(atlas, ctx, &|i, y| ev.nu(i, y), tol)
}

// concordance

/// `ν(t, x) = (1 − χ(t)) ν⁰(x) + χ(t) ν¹(x)`, constant on the collars
/// `t ≤ 1/3` and `t ≥ 2/3`.
pub fn concordance_weight(t: f64) -> f64 {
    1.0 - cutoff(t, 1.0 / 3.0, 2.0 / 3.0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConcordanceReport {
    pub boundary: (i64, i64),
    pub expected: (i64, i64),
    /// Interior slice counts; `None` where a slice is not transverse.
    pub slices: Vec<(f64, Option<i64>)>,
    pub passed: bool,
}

/// Installs the interpolated perturbation on `[0,1] × K`, restricts it to
/// the boundary slices and to interior ones, and compares the counts.
pub fn concordance_check(
    atlas: &AtlasSpec,
    ctx0: &ReductionContext,
    p0: &Perturbation,
    ctx1: &ReductionContext,
    p1: &Perturbation,
    tol: &Tolerances,
) -> Result<ConcordanceReport> {
    let prod = product_concordance(atlas);
    let e0 = Evaluator::load(atlas, ctx0, p0)?;
    let e1 = Evaluator::load(atlas, ctx1, p1)?;
    let c0 = vfc_count(atlas, ctx0, p0, tol)?.count;
    let c1 = vfc_count(atlas, ctx1, p1, tol)?.count;
    let nu_prod = |i: &[u32], ty: &[f64]| -> Vec<f64> {
        let w = concordance_weight(ty[0]);
        let (a, b) = (e0.nu(i, &ty[1..]), e1.nu(i, &ty[1..]));
        a.iter().zip(&b).map(|(u, v)| (1.0 - w) * u + w * v).collect()
    };
    // the slice counts use the reduction whose σ is the smaller one, so
    // both ends stay inside the confinement estimate
    let ctx = if ctx0.sigma <= ctx1.sigma { ctx0 } else { ctx1 };
    let mut slices = Vec::new();
    let mut boundary = (0, 0);
    for (q, t) in [(0, 0.0), (1, 0.25), (2, 0.5), (3, 0.75), (4, 1.0)] {
        let tr = match q {
            0 => rat(0),
            4 => rat(1),
            _ => crate::poly::ratio(q, 4),
        };
        let slice = slice_concordance(&prod, &tr)?;
        let nu = |i: &[u32], y: &[f64]| {
            let mut ty = vec![t];
            ty.extend_from_slice(y);
            nu_prod(i, &ty)
        };
        let sctx = if q == 0 {
            ctx0
        } else if q == 4 {
            ctx1
        } else {
            ctx
        };
        let r = count_with(&slice, sctx, &nu, tol);
        match (q, r) {
            (0, r) => boundary.0 = r?.count,
            (4, r) => boundary.1 = r?.count,
            (_, Ok(z)) => slices.push((t, Some(z.count))),
            (_, Err(Error::Transversality(_))) => slices.push((t, None)),
            (_, Err(e)) => return Err(e),
        }
    }
    let passed = boundary == (c0, c1) && c0 == c1 && slices.iter().all(|(_, c)| c.is_none_or(|c| c == c0));
    Ok(ConcordanceReport { boundary, expected: (c0, c1), slices, passed })
}

// invariance

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InvarianceRun {
    pub seed: u64,
    pub reduction: String,
    pub norm_scale: f64,
    pub count: Option<i64>,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub error: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InvarianceReport {
    pub runs: Vec<InvarianceRun>,
    pub concordance: Option<ConcordanceReport>,
    pub verdict: Verdict,
}

#[derive(Clone, Debug, PartialEq)]
pub struct InvarianceOptions {
    pub seeds: Vec<u64>,
    pub reductions: Vec<(String, ReductionParams)>,
    pub norm_scales: Vec<f64>,
}

impl Default for InvarianceOptions {
    fn default() -> Self {
        InvarianceOptions {
            seeds: vec![1, 2, 3],
            reductions: vec![("default".into(), ReductionParams::default()), ("alternative".into(), ReductionParams::alternative())],
            norm_scales: vec![1.0, 2.0],
        }
    }
}

/// Reduction with norms scaled by `c` and σ recomputed for them.
pub fn scaled_context(atlas: &AtlasSpec, ctx: &ReductionContext, c: f64) -> Result<ReductionContext> {
    let mut out = ctx.with_norms(ctx.norms.scaled(c));
    out.sigma = compute_sigma(atlas, &out)?.bound;
    Ok(out)
}

/// Counts across seeds, reductions and norm scalings, and the product
/// concordance between the first and the last run. Passes iff every run
/// succeeds with the same count and the concordance agrees.
pub fn invariance_check(
    atlas: &AtlasSpec,
    cloud: &RealizationCloud,
    opts: &InvarianceOptions,
    tol: &Tolerances,
) -> Result<InvarianceReport> {
    let mut runs = Vec::new();
    let mut built: Vec<(ReductionContext, Perturbation)> = Vec::new();
    for (name, params) in &opts.reductions {
        let base = reduce(atlas, cloud, params)?;
        for &c in &opts.norm_scales {
            let ctx = if c == 1.0 { base.clone() } else { scaled_context(atlas, &base, c)? };
            for &seed in &opts.seeds {
                let r = build_adapted(atlas, &ctx, seed, tol, &BuildOptions::default())
                    .and_then(|p| vfc_count(atlas, &ctx, &p, tol).map(|z| (p, z.count)));
                let (count, error) = match r {
                    Ok((p, n)) => {
                        built.push((ctx.clone(), p));
                        (Some(n), String::new())
                    }
                    Err(e) => (None, e.to_string()),
                };
                runs.push(InvarianceRun { seed, reduction: name.clone(), norm_scale: c, count, error });
            }
        }
    }
    let mut v = Verdict::pass("count invariance", 0.0, 0.0).with_note("distinct counts minus one");
    let counts: Vec<i64> = runs.iter().filter_map(|r| r.count).collect();
    let mut distinct = counts.clone();
    distinct.sort();
    distinct.dedup();
    v.margin = distinct.len().saturating_sub(1) as f64;
    for r in &runs {
        if r.count.is_none() || r.count != counts.first().copied() {
            v.push_failure(Witness::new(
                vec![],
                vec![vec![r.seed as f64, r.norm_scale]],
                r.count.unwrap_or(i64::MIN) as f64,
                format!("{} reduction: {}", r.reduction, if r.error.is_empty() { "count differs".to_string() } else { r.error.clone() }),
            ));
        }
    }
    let concordance = match (built.first(), built.last()) {
        (Some((c0, p0)), Some((c1, p1))) if built.len() > 1 => {
            let rep = concordance_check(atlas, c0, p0, c1, p1, tol)?;
            if !rep.passed {
                v.push_failure(Witness::new(vec![], vec![], 0.0, format!("concordance {:?} vs {:?}", rep.boundary, rep.expected)));
            }
            Some(rep)
        }
        _ => None,
    };
    Ok(InvarianceReport { runs, concordance, verdict: v })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::realization::build_cloud;
    use crate::refine::find_tame_shrinking;

    fn pipeline(a: &AtlasSpec, seed: u64) -> (AtlasSpec, ReductionContext, Perturbation) {
        let tol = Tolerances::default();
        let t = find_tame_shrinking(a, 4, false, 12, 1, &tol).unwrap();
        let cloud = build_cloud(&t, 12, 1, tol.tau_id).unwrap();
        let ctx = reduce(&t, &cloud, &ReductionParams::default()).unwrap();
        let p = build_adapted(&t, &ctx, seed, &tol, &BuildOptions::default()).unwrap();
        (t, ctx, p)
    }

    #[test]
    fn sign_of_identity_and_reversal() {
        let a = fixtures::identity_line();
        let o = a.orientation_or_standard();
        let j = DMatrix::from_element(1, 1, 1.0);
        assert_eq!(orientation_sign(&o, &[1], &j).unwrap(), 1);
        let r = reverse_orientation(&a, None).orientation.unwrap();
        assert_eq!(orientation_sign(&r, &[1], &j).unwrap(), -1);
    }

    #[test]
    fn shifted_square_signs() {
        // d(x² − 1) = 2x: −1 at x = −1, +1 at x = 1
        let tol = Tolerances::default();
        let (a, ctx, p) = pipeline(&fixtures::shifted_square(), 0);
        let z = vfc_count(&a, &ctx, &p, &tol).unwrap();
        let mut signs: Vec<(f64, i32)> = z.classes.iter().map(|c| (c.members[0].point[0], c.sign)).collect();
        signs.sort_by(|a, b| a.0.total_cmp(&b.0));
        assert_eq!(signs.len(), 2);
        assert!((signs[0].0 + 1.0).abs() < 1e-9 && signs[0].1 == -1);
        assert!((signs[1].0 - 1.0).abs() < 1e-9 && signs[1].1 == 1);
        assert_eq!(z.count, 0);
        assert!((z.classes[0].margin - 2.0).abs() < 1e-6);
    }

    #[test]
    fn ex_change_counts_zero_with_one_class_over_two_charts() {
        let tol = Tolerances::default();
        let (a, ctx, p) = pipeline(&fixtures::ex_change(), 2);
        let z = vfc_count(&a, &ctx, &p, &tol).unwrap();
        assert_eq!(z.count, 0);
        assert!(check_orientation(&a, 8, 0, &tol).passed());
        // the zero at x = −1 of chart 1 has sign −1
        let left = z.classes.iter().find(|c| c.members.iter().any(|m| m.chart == vec![1])).unwrap();
        assert_eq!(left.sign, -1);
        let rev = reverse_orientation(&a, None);
        assert_eq!(vfc_count(&rev, &ctx, &p, &tol).unwrap().count, 0);
    }

    #[test]
    fn single_chart_reversal_is_rejected() {
        let tol = Tolerances::default();
        let (a, ctx, p) = pipeline(&fixtures::ex_change(), 2);
        let bad = reverse_orientation(&a, Some(&[vec![1, 2]]));
        assert!(check_orientation(&bad, 8, 0, &tol).failed());
        assert!(matches!(vfc_count(&bad, &ctx, &p, &tol), Err(Error::Orientation(_))));
    }

    #[test]
    fn failed_ledger_blocks_the_count() {
        let tol = Tolerances::default();
        let (a, ctx, mut p) = pipeline(&fixtures::identity_line(), 0);
        p.ledger[4].passed = false;
        assert!(matches!(vfc_count(&a, &ctx, &p, &tol), Err(Error::Ledger(_))));
    }

    #[test]
    fn planar_counts_two_and_reverses() {
        let tol = Tolerances::default();
        let (a, ctx, p) = pipeline(&fixtures::planar(), 0);
        assert_eq!(vfc_count(&a, &ctx, &p, &tol).unwrap().count, 2);
        let rev = reverse_orientation(&a, None);
        assert_eq!(vfc_count(&rev, &ctx, &p, &tol).unwrap().count, -2);
    }

    #[test]
    fn concordance_between_two_seeds() {
        let tol = Tolerances::default();
        let (a, ctx, p0) = pipeline(&fixtures::cubic(), 1);
        let p1 = build_adapted(&a, &ctx, 9, &tol, &BuildOptions::default()).unwrap();
        let r = concordance_check(&a, &ctx, &p0, &ctx, &p1, &tol).unwrap();
        assert!(r.passed, "{r:?}");
        assert_eq!(r.boundary, (1, 1));
    }

    #[test]
    fn collar_weight() {
        assert_eq!(concordance_weight(0.0), 0.0);
        assert_eq!(concordance_weight(0.3), 0.0);
        assert_eq!(concordance_weight(0.7), 1.0);
        assert!((concordance_weight(0.5) - 0.5).abs() < 1e-12);
    }
}

#[cfg(test)]
mod oracle_tests {
    use super::*;
    use crate::generator::{brute_force_degree, generate, load_problem, PROBLEMS};
    use crate::realization::build_cloud;
    use crate::refine::find_tame_shrinking;

    fn count(a: &AtlasSpec, seed: u64) -> i64 {
        let tol = Tolerances::default();
        let t = find_tame_shrinking(a, 4, false, 12, 1, &tol).unwrap();
        let cloud = build_cloud(&t, 12, 1, tol.tau_id).unwrap();
        let ctx = reduce(&t, &cloud, &ReductionParams::default()).unwrap();
        let p = build_adapted(&t, &ctx, seed, &tol, &BuildOptions::default()).unwrap();
        vfc_count(&t, &ctx, &p, &tol).unwrap().count
    }

    #[test]
    fn generated_atlases_match_the_degree() {
        let tol = Tolerances::default();
        for name in PROBLEMS {
            let (problem, plan) = load_problem(name).unwrap();
            let expected = brute_force_degree(&problem).unwrap();
            let a = generate(&problem, &plan, &tol).unwrap();
            assert_eq!(count(&a, 3), expected, "{name}");
        }
    }

    #[test]
    fn single_chart_fixtures_match_known_counts() {
        assert_eq!(count(&crate::fixtures::identity_line(), 0), 1);
        assert_eq!(count(&crate::fixtures::quartic(), 0), 0);
        assert_eq!(count(&crate::fixtures::cubic(), 0), 1);
        assert_eq!(count(&crate::fixtures::nowhere_zero(), 0), 0);
    }
}

#[cfg(test)]
mod invariance_tests {
    use super::*;
    use crate::realization::build_cloud;
    use crate::refine::find_tame_shrinking;

    #[test]
    fn cubic_count_is_invariant() {
        let tol = Tolerances::default();
        let t = find_tame_shrinking(&crate::fixtures::cubic(), 4, false, 12, 1, &tol).unwrap();
        let cloud = build_cloud(&t, 12, 1, tol.tau_id).unwrap();
        let r = invariance_check(&t, &cloud, &InvarianceOptions::default(), &tol).unwrap();
        assert!(r.verdict.passed(), "{:?}", r.runs);
        assert_eq!(r.runs.len(), 12);
        assert!(r.runs.iter().all(|x| x.count == Some(1)));
        assert!(r.concordance.unwrap().passed);
    }
}
