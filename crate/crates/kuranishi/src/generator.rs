//! Atlases from global finite-dimensional problems `F: R^n → R^m`, and
//! the brute-force degree oracle the counts are compared against.
//!
//! A basic chart at a centre `f` with obstruction basis `B` lives on
//! `{x : F(x) ∈ span B}` near `f`. When `span B` is everything the chart
//! is a box of `R^n`; otherwise it is the graph of an implicit function,
//! stored as a polynomial fit with a certified residual. Sum charts use
//! the concatenated bases, and coordinate changes are the inclusions
//! with block injections as `φ̂`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::atlas::{fmt_index, is_proper_subset, AtlasSpec, Chart, ChartOrientation, CoordinateChange, IndexSet, OrientationData};
use crate::config::Tolerances;
use crate::domain::{Domain, PieceDoc, RatDoc};
use crate::error::{Error, Result};
use crate::linalg::{complement_basis, det_sign, numerical_rank, RatMatrix};
use crate::poly::{parse_rat, rat_from_f64, rat_to_f64, Poly, Rat};
use crate::smooth::SmoothMap;
use crate::zeros::newton;

/// Total degree of implicit-function fits.
pub const FIT_DEGREE: u32 = 8;

#[derive(Clone, Debug, PartialEq)]
pub struct GlobalProblem {
    pub section: SmoothMap,
    pub region: Domain,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ProblemDoc {
    pub ambient_dim: usize,
    pub section: Vec<String>,
    pub region: Vec<PieceDoc>,
}

impl GlobalProblem {
    pub fn new(section: SmoothMap, region: Domain) -> Result<Self> {
        if section.domain_dim() != region.ambient_dim() {
            return Err(Error::Dimension("section and region disagree on the ambient dimension".into()));
        }
        if region.pieces().len() != 1 || !region.pieces()[0].constraints.is_empty() {
            return Err(Error::Unsupported("the region must be a single box".into()));
        }
        Ok(GlobalProblem { section, region })
    }

    pub fn parse(ambient_dim: usize, section: &[&str], region: &[(&str, &str)]) -> Result<Self> {
        let comps: Vec<String> = section.iter().map(|s| s.to_string()).collect();
        let lo = region.iter().map(|b| parse_rat(b.0)).collect::<Result<Vec<_>>>()?;
        let hi = region.iter().map(|b| parse_rat(b.1)).collect::<Result<Vec<_>>>()?;
        GlobalProblem::new(SmoothMap::parse(ambient_dim, &comps)?, Domain::from_box(lo, hi))
    }

    pub fn ambient_dim(&self) -> usize {
        self.section.domain_dim()
    }

    pub fn target_dim(&self) -> usize {
        self.section.codomain_dim()
    }

    pub fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
        let p = &self.region.pieces()[0];
        (p.lo_f64(), p.hi_f64())
    }

    pub fn to_doc(&self) -> ProblemDoc {
        ProblemDoc { ambient_dim: self.ambient_dim(), section: self.section.to_strings(), region: self.region.to_doc() }
    }

    pub fn from_doc(doc: &ProblemDoc) -> Result<Self> {
        GlobalProblem::new(SmoothMap::parse(doc.ambient_dim, &doc.section)?, Domain::from_doc(doc.ambient_dim, &doc.region)?)
    }

    /// Smallest sampled `|F|` on the boundary of the region; positive iff
    /// the zero set stays away from it at this resolution.
    pub fn boundary_margin(&self, density: usize) -> f64 {
        let (lo, hi) = self.bounds();
        boundary_points(&lo, &hi, density)
            .iter()
            .map(|x| norm(&self.section.eval(x)))
            .fold(f64::INFINITY, f64::min)
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

fn boundary_points(lo: &[f64], hi: &[f64], density: usize) -> Vec<Vec<f64>> {
    let n = lo.len();
    let mut out = Vec::new();
    for face in 0..n {
        for side in [lo[face], hi[face]] {
            let others: Vec<usize> = (0..n).filter(|&a| a != face).collect();
            let count = (density + 1).pow(others.len() as u32);
            for c in 0..count {
                let mut x = vec![0.0; n];
                x[face] = side;
                let mut r = c;
                for &a in &others {
                    let t = (r % (density + 1)) as f64 / density as f64;
                    r /= density + 1;
                    x[a] = lo[a] + t * (hi[a] - lo[a]);
                }
                out.push(x);
            }
        }
    }
    out
}

// charts

/// A basic chart request: centre, box in ambient coordinates, and the
/// obstruction basis as the columns of an `m × k` matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct CenterSpec {
    pub center: Vec<f64>,
    pub lo: Vec<Rat>,
    pub hi: Vec<Rat>,
    pub obstruction: RatMatrix,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CenterDoc {
    pub center: Vec<f64>,
    pub r#box: Vec<(RatDoc, RatDoc)>,
    /// Obstruction basis, one row per target coordinate.
    pub obstruction: Vec<Vec<RatDoc>>,
}

/// A chart over a subset of `R^n` together with its parametrization.
#[derive(Clone, Debug)]
pub struct LocalChart {
    pub chart: Chart,
    /// `u ↦ x`, also the metric embedding.
    pub param: SmoothMap,
    pub basis: RatMatrix,
    /// Ambient coordinates used as chart coordinates.
    pub free: Vec<usize>,
    /// Sampled `|F(param(u))|` off `span B`.
    pub fit_residual: f64,
}

impl LocalChart {
    /// Chart coordinates of an ambient point on the chart.
    pub fn project(&self, n: usize) -> SmoothMap {
        SmoothMap::from_polys(n, self.free.iter().map(|&a| Poly::var(n, a)).collect())
    }

    pub fn is_identity(&self) -> bool {
        self.free.len() == self.param.domain_dim() && self.free.iter().enumerate().all(|(i, &a)| i == a) && self.param.codomain_dim() == self.free.len()
    }
}

/// Complete the columns of `b` to an invertible `[b | e_r …]` with
/// standard basis vectors; returns the chosen rows `r`.
fn complement_rows(b: &RatMatrix) -> Result<Vec<usize>> {
    let m = b.rows();
    if b.rank() != b.cols() {
        return Err(Error::Rank("obstruction basis is not linearly independent".into()));
    }
    let mut rows = Vec::new();
    let mut cur = b.clone();
    for r in 0..m {
        if cur.cols() == m {
            break;
        }
        let mut e = RatMatrix::zeros(m, 1);
        e.set(r, 0, Rat::from_integer(1.into()));
        let next = RatMatrix::hstack(&[&cur, &e]);
        if next.rank() == next.cols() {
            cur = next;
            rows.push(r);
        }
    }
    Ok(rows)
}

fn top_rows_of_inverse(b: &RatMatrix, rows: &[usize]) -> RatMatrix {
    let m = b.rows();
    let k = b.cols();
    let mut full = b.clone();
    for &r in rows {
        let mut e = RatMatrix::zeros(m, 1);
        e.set(r, 0, Rat::from_integer(1.into()));
        full = RatMatrix::hstack(&[&full, &e]);
    }
    let inv = full.inverse().expect("completed basis is invertible");
    let mut out = RatMatrix::zeros(k, m);
    for i in 0..k {
        for j in 0..m {
            out.set(i, j, inv.get(i, j).clone());
        }
    }
    out
}

fn subsets(n: usize, c: usize) -> Vec<Vec<usize>> {
    if c == 0 {
        return vec![Vec::new()];
    }
    if n < c {
        return Vec::new();
    }
    let mut out = subsets(n - 1, c);
    for mut s in subsets(n - 1, c - 1) {
        s.push(n - 1);
        out.push(s);
    }
    out
}

fn monomials(nvars: usize, deg: u32) -> Vec<Vec<u32>> {
    if nvars == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for d0 in 0..=deg {
        for mut rest in monomials(nvars - 1, deg - d0) {
            rest.insert(0, d0);
            out.push(rest);
        }
    }
    out
}

fn chebyshev(lo: f64, hi: f64, k: usize) -> Vec<f64> {
    (0..k)
        .map(|i| {
            let t = ((2 * i + 1) as f64 * PI / (2 * k) as f64).cos();
            0.5 * (lo + hi) + 0.5 * (hi - lo) * t
        })
        .collect()
}

fn grid(axes: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut out = vec![Vec::new()];
    for ax in axes {
        out = out
            .into_iter()
            .flat_map(|p| {
                ax.iter().map(move |&v| {
                    let mut q = p.clone();
                    q.push(v);
                    q
                })
            })
            .collect();
    }
    out
}

/// Builds the basic chart for `spec` (finite-dimensional reduction).
pub fn local_chart(problem: &GlobalProblem, index: &[u32], spec: &CenterSpec, tol: &Tolerances) -> Result<LocalChart> {
    let f = &problem.section;
    let (n, m) = (problem.ambient_dim(), problem.target_dim());
    let b = &spec.obstruction;
    let k = b.cols();
    if b.rows() != m || spec.center.len() != n || spec.lo.len() != n || spec.hi.len() != n {
        return Err(Error::Dimension(format!("centre spec for {} has the wrong shape", fmt_index(index))));
    }
    let df = f.jacobian(&spec.center);
    let mut stacked = DMatrix::zeros(m, n + k);
    stacked.view_mut((0, 0), (m, n)).copy_from(&df);
    stacked.view_mut((0, n), (m, k)).copy_from(&b.to_f64());
    if numerical_rank(&stacked, tol.tau_rank) < m {
        return Err(Error::Rank(format!(
            "im dF + E does not span the target at the centre of {}",
            fmt_index(index)
        )));
    }
    let comp = complement_rows(b)?;
    let coef = top_rows_of_inverse(b, &comp);
    let c = comp.len();
    let ambient = Domain::from_box(spec.lo.clone(), spec.hi.clone()).intersect(&problem.region);
    if c == 0 {
        let section = f.left_mul(&coef);
        let chart = Chart::new(index.to_vec(), ambient, k, section);
        return Ok(LocalChart { chart, param: SmoothMap::identity(n), basis: b.clone(), free: (0..n).collect(), fit_residual: 0.0 });
    }
    if c > n {
        return Err(Error::Dimension(format!("chart {} would have negative dimension", fmt_index(index))));
    }
    let g = |x: &[f64]| -> Vec<f64> {
        let v = f.eval(x);
        comp.iter().map(|&r| v[r]).collect()
    };
    let dg = |x: &[f64]| -> DMatrix<f64> {
        let j = f.jacobian(x);
        DMatrix::from_fn(c, n, |i, a| j[(comp[i], a)])
    };
    // implicit coordinates: the c-subset of columns whose minor stays
    // largest over the centre and a grid of the box
    let probe_axes: Vec<Vec<f64>> = (0..n)
        .map(|a| {
            let (l, h) = (rat_to_f64(&spec.lo[a]), rat_to_f64(&spec.hi[a]));
            (0..=8).map(|s| l + (h - l) * s as f64 / 8.0).collect()
        })
        .collect();
    let mut probes = vec![spec.center.clone()];
    probes.extend(grid(&probe_axes));
    let jacs: Vec<DMatrix<f64>> = probes.iter().map(|x| dg(x)).collect();
    let minor = |s: &[usize], j: &DMatrix<f64>| DMatrix::from_fn(c, c, |i, a| j[(i, s[a])]).determinant().abs();
    let (bound, _) = subsets(n, c)
        .into_iter()
        .map(|s| {
            let d = jacs.iter().map(|j| minor(&s, j)).fold(f64::INFINITY, f64::min);
            (s, d)
        })
        .fold((Vec::new(), -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
    let det = minor(&bound, &jacs[0]);
    if det < tol.tau_rank {
        return Err(Error::Rank(format!("constraint of {} is degenerate at the centre", fmt_index(index))));
    }
    let free: Vec<usize> = (0..n).filter(|a| !bound.contains(a)).collect();
    let nf = free.len();
    let solve = |u: &[f64], w0: &[f64]| -> Option<Vec<f64>> {
        let assemble = |w: &[f64]| {
            let mut x = vec![0.0; n];
            for (i, &a) in free.iter().enumerate() {
                x[a] = u[i];
            }
            for (i, &a) in bound.iter().enumerate() {
                x[a] = w[i];
            }
            x
        };
        let fw = |w: &[f64]| g(&assemble(w));
        let jw = |w: &[f64]| {
            let j = dg(&assemble(w));
            DMatrix::from_fn(c, c, |i, a| j[(i, bound[a])])
        };
        let (w, r) = newton(&fw, &jw, w0, 60);
        (r < 1e-13).then_some(w)
    };
    let w_center: Vec<f64> = bound.iter().map(|&a| spec.center[a]).collect();
    let u_center: Vec<f64> = free.iter().map(|&a| spec.center[a]).collect();
    if nf == 0 {
        let w = solve(&[], &w_center)
            .ok_or_else(|| Error::Residual(format!("no point of F⁻¹(E) near the centre of {}", fmt_index(index))))?;
        let x: Vec<f64> = bound.iter().zip(&w).map(|(_, v)| *v).collect();
        let mut pt = vec![0.0; n];
        for (i, &a) in bound.iter().enumerate() {
            pt[a] = x[i];
        }
        if !ambient.contains(&pt) {
            return Err(Error::Containment(format!("point chart {} leaves its box", fmt_index(index))));
        }
        let consts: Vec<Poly> = pt.iter().map(|v| Poly::constant(0, rat_from_f64(*v))).collect();
        let param = SmoothMap::from_polys(0, consts);
        let section = f.left_mul(&coef).compose(&param).ok_or_else(|| Error::Unsupported("bump sections on point charts".into()))?;
        let residual = norm(&g(&param.eval(&[])));
        let chart = Chart::new(index.to_vec(), Domain::point(), k, section).with_embedding(param.clone());
        return Ok(LocalChart { chart, param, basis: b.clone(), free, fit_residual: residual });
    }
    // graph w = h(u) over the u-box, fitted in scaled coordinates
    let ulo: Vec<f64> = free.iter().map(|&a| rat_to_f64(&spec.lo[a])).collect();
    let uhi: Vec<f64> = free.iter().map(|&a| rat_to_f64(&spec.hi[a])).collect();
    let nodes = FIT_DEGREE as usize + 6;
    let axes: Vec<Vec<f64>> = (0..nf).map(|_| chebyshev(-1.0, 1.0, nodes)).collect();
    let ts = grid(&axes);
    let to_u = |t: &[f64]| -> Vec<f64> { t.iter().enumerate().map(|(i, v)| 0.5 * (ulo[i] + uhi[i]) + 0.5 * (uhi[i] - ulo[i]) * v).collect() };
    let ws: Vec<Vec<f64>> = ts
        .par_iter()
        .map(|t| {
            // continuation from the centre along the segment
            let u = to_u(t);
            let mut w = w_center.clone();
            for s in 1..=8 {
                let us: Vec<f64> = u_center.iter().zip(&u).map(|(a, b)| a + (b - a) * s as f64 / 8.0).collect();
                w = solve(&us, &w)?;
            }
            Some(w)
        })
        .collect::<Option<Vec<_>>>()
        .ok_or_else(|| Error::Residual(format!("implicit function of {} lost on its box", fmt_index(index))))?;
    let mons = monomials(nf, FIT_DEGREE);
    let design = DMatrix::from_fn(ts.len(), mons.len(), |r, q| ts[r].iter().zip(&mons[q]).map(|(t, &e)| t.powi(e as i32)).product());
    let svd = design.svd(true, true);
    let mut hs: Vec<Poly> = Vec::new();
    for i in 0..c {
        let rhs = DVector::from_iterator(ts.len(), ws.iter().map(|w| w[i]));
        let coeffs = svd.solve(&rhs, 1e-13).map_err(|e| Error::Residual(e.to_string()))?;
        let q = Poly::from_terms(nf, mons.iter().zip(coeffs.iter()).filter(|(_, v)| v.abs() > 1e-15).map(|(e, v)| (e.clone(), rat_from_f64(*v))));
        // t = (u − mid)/half
        let subs: Vec<Poly> = (0..nf)
            .map(|a| {
                let half = rat_from_f64(0.5 * (uhi[a] - ulo[a]));
                let mid = rat_from_f64(0.5 * (uhi[a] + ulo[a]));
                let inv = Rat::from_integer(1.into()) / half;
                let mut lin = vec![Rat::from_integer(0.into()); nf];
                lin[a] = inv.clone();
                Poly::affine(-mid * inv, &lin)
            })
            .collect();
        hs.push(q.compose(&subs));
    }
    let comps: Vec<Poly> = (0..n)
        .map(|a| match free.iter().position(|&v| v == a) {
            Some(i) => Poly::var(nf, i),
            None => hs[bound.iter().position(|&v| v == a).unwrap()].clone(),
        })
        .collect();
    let param = SmoothMap::from_polys(nf, comps);
    let check_axes: Vec<Vec<f64>> = (0..nf).map(|i| (0..=2 * nodes).map(|s| ulo[i] + (uhi[i] - ulo[i]) * s as f64 / (2 * nodes) as f64).collect()).collect();
    let residual = grid(&check_axes).iter().map(|u| norm(&g(&param.eval(u)))).fold(0.0, f64::max);
    if residual > tol.tau_fit {
        return Err(Error::Residual(format!("fit residual {residual:.2e} of {} exceeds τ_fit", fmt_index(index))));
    }
    let section = f
        .left_mul(&coef)
        .compose(&param)
        .ok_or_else(|| Error::Unsupported("implicit charts need polynomial sections".into()))?;
    let ubox = Domain::from_box(free.iter().map(|&a| spec.lo[a].clone()).collect(), free.iter().map(|&a| spec.hi[a].clone()).collect());
    let domain = ubox.pullback_intersect(&param, &ambient);
    let chart = Chart::new(index.to_vec(), domain, k, section).with_embedding(param.clone());
    Ok(LocalChart { chart, param, basis: b.clone(), free, fit_residual: residual })
}

/// Basic charts `1, …, N`, built in parallel.
pub fn reduce_global(problem: &GlobalProblem, centers: &[CenterSpec], tol: &Tolerances) -> Result<Vec<LocalChart>> {
    centers.par_iter().enumerate().map(|(i, s)| local_chart(problem, &[i as u32 + 1], s, tol)).collect()
}

/// Block injection of the basis of `i` into that of `j ⊇ i`.
fn block_injection(basics: &[LocalChart], i: &[u32], j: &[u32]) -> RatMatrix {
    let k = |a: u32| basics[a as usize - 1].basis.cols();
    let kj: usize = j.iter().map(|&a| k(a)).sum();
    let ki: usize = i.iter().map(|&a| k(a)).sum();
    let mut out = RatMatrix::zeros(kj, ki);
    let (mut row, mut col) = (0, 0);
    for &a in j {
        if i.contains(&a) {
            for t in 0..k(a) {
                out.set(row + t, col + t, Rat::from_integer(1.into()));
            }
            col += k(a);
        }
        row += k(a);
    }
    out
}

/// Sum chart over `index` with obstruction basis the concatenation of the
/// basic bases, on the ambient box `lo, hi` around `center`.
pub fn sum_chart(
    problem: &GlobalProblem,
    basics: &[LocalChart],
    index: &[u32],
    center: &[f64],
    lo: &[Rat],
    hi: &[Rat],
    tol: &Tolerances,
) -> Result<LocalChart> {
    let blocks: Vec<&RatMatrix> = index.iter().map(|&a| &basics[a as usize - 1].basis).collect();
    let b = RatMatrix::hstack(&blocks);
    let want: usize = blocks.iter().map(|m| m.cols()).sum();
    if b.rank() != want {
        return Err(Error::SumCondition(format!(
            "obstruction spaces of {} are not in direct sum (rank {} < {want})",
            fmt_index(index),
            b.rank()
        )));
    }
    // the images of the summands must stay independent along the common
    // zeros: the summands' sections vanish there and E_I is fixed, so the
    // rank check above is the sampled condition as well
    local_chart(problem, index, &CenterSpec { center: center.to_vec(), lo: lo.to_vec(), hi: hi.to_vec(), obstruction: b }, tol)
}

/// Inclusion `K_I → K_J` as a coordinate change.
pub fn inclusion(problem: &GlobalProblem, basics: &[LocalChart], ci: &LocalChart, cj: &LocalChart) -> Result<CoordinateChange> {
    let n = problem.ambient_dim();
    let phi = cj.project(n).compose(&ci.param).ok_or_else(|| Error::Unsupported("non-polynomial parametrization".into()))?;
    let domain = ci.chart.domain.pullback_intersect(&phi, &cj.chart.domain);
    Ok(CoordinateChange {
        source: ci.chart.index.clone(),
        target: cj.chart.index.clone(),
        domain,
        phi,
        hat_phi: block_injection(basics, &ci.chart.index, &cj.chart.index),
    })
}

/// Orientation of a chart pulled back from the standard one on
/// `(R^n, R^n)`: with standard frames the sign is
/// `sign det(dψ | ν) · sign det(B | dF ν)` for a completion `ν` of `im dψ`,
/// so that chart signs of zeros agree with `sign det dF`.
pub fn induced_orientation(problem: &GlobalProblem, c: &LocalChart, center: &[f64], tol: &Tolerances) -> Result<ChartOrientation> {
    let n = problem.ambient_dim();
    let k = c.chart.dim();
    let u: Vec<f64> = c.free.iter().map(|&a| center[a]).collect();
    let dpsi = if k == 0 { DMatrix::zeros(n, 0) } else { c.param.jacobian(&u) };
    let x = c.param.eval(&u);
    let normal = complement_basis(&dpsi, tol.tau_rank);
    let df = problem.section.jacobian(&x);
    let b = c.basis.to_f64();
    let mut t = DMatrix::zeros(n, n);
    t.view_mut((0, 0), (n, k)).copy_from(&dpsi);
    let mut e = DMatrix::zeros(n, n);
    e.view_mut((0, 0), (n, b.ncols())).copy_from(&b);
    if k + normal.len() != n || b.ncols() + normal.len() != n {
        return Err(Error::Rank(format!("chart {} has no normal completion", fmt_index(&c.chart.index))));
    }
    for (a, v) in normal.iter().enumerate() {
        t.set_column(k + a, v);
        e.set_column(b.ncols() + a, &(&df * v));
    }
    let sign = det_sign(&t) * det_sign(&e);
    if sign == 0 {
        return Err(Error::Rank(format!("chart {} is not transverse to its obstruction space", fmt_index(&c.chart.index))));
    }
    Ok(ChartOrientation { sign, ..ChartOrientation::standard(k, c.chart.obstruction_dim) })
}

/// Generation plan: basic centres plus sum charts.
#[derive(Clone, Debug, PartialEq)]
pub struct Plan {
    pub basics: Vec<CenterSpec>,
    pub sums: Vec<SumSpec>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SumSpec {
    pub index: IndexSet,
    pub center: Vec<f64>,
    pub lo: Vec<Rat>,
    pub hi: Vec<Rat>,
}

/// Assembles the additive atlas of `plan`. Every chart carries its
/// parametrization as the metric embedding.
pub fn generate(problem: &GlobalProblem, plan: &Plan, tol: &Tolerances) -> Result<AtlasSpec> {
    let basics = reduce_global(problem, &plan.basics, tol)?;
    let sums: Vec<LocalChart> = plan
        .sums
        .par_iter()
        .map(|s| sum_chart(problem, &basics, &s.index, &s.center, &s.lo, &s.hi, tol))
        .collect::<Result<_>>()?;
    let all: Vec<&LocalChart> = basics.iter().chain(&sums).collect();
    let centers: Vec<&Vec<f64>> = plan.basics.iter().map(|b| &b.center).chain(plan.sums.iter().map(|s| &s.center)).collect();
    let n = problem.ambient_dim();
    let mut orientation = OrientationData::default();
    for (c, x) in all.iter().zip(&centers) {
        orientation.charts.insert(c.chart.index.clone(), induced_orientation(problem, c, x, tol)?);
    }
    let charts: Vec<Chart> = all
        .iter()
        .map(|c| {
            let mut ch = c.chart.clone();
            if ch.embedding.is_none() && ch.dim() != n {
                ch.embedding = Some(c.param.clone());
            }
            ch
        })
        .collect();
    let mut changes = Vec::new();
    for a in &all {
        for b in &all {
            if is_proper_subset(&a.chart.index, &b.chart.index) {
                changes.push(inclusion(problem, &basics, a, b)?);
            }
        }
    }
    let d = n as i64 - problem.target_dim() as i64;
    let mut atlas = AtlasSpec::new(d, basics.len() as u32, charts, changes)?.with_orientation(orientation);
    atlas.metric_dim = atlas.metric_dim.max(n);
    Ok(atlas)
}

/// One chart on the whole region with full obstruction space.
pub fn single_plan(problem: &GlobalProblem) -> Plan {
    let p = &problem.region.pieces()[0];
    let (lo, hi) = (p.lo_f64(), p.hi_f64());
    Plan {
        basics: vec![CenterSpec {
            center: lo.iter().zip(&hi).map(|(a, b)| 0.5 * (a + b)).collect(),
            lo: p.lo.clone(),
            hi: p.hi.clone(),
            obstruction: RatMatrix::identity(problem.target_dim()),
        }],
        sums: Vec::new(),
    }
}

// named problems

fn r(s: &str) -> Rat {
    parse_rat(s).expect("literal")
}

fn rs(v: &[&str]) -> Vec<Rat> {
    v.iter().map(|s| r(s)).collect()
}

pub fn problem_by_name(name: &str) -> Option<GlobalProblem> {
    let p = match name {
        "identity" => GlobalProblem::parse(1, &["x1"], &[("-2", "2")]),
        "quartic" => GlobalProblem::parse(1, &["x1^4 - x1^2"], &[("-2", "2")]),
        "cubic" => GlobalProblem::parse(1, &["x1^3 - x1"], &[("-2", "2")]),
        "planar" => GlobalProblem::parse(2, &["x1^2 - x2^2 - 1/4", "2*x1*x2"], &[("-2", "2"), ("-2", "2")]),
        "cubic-curve" => GlobalProblem::parse(2, &["x2 - x1^3 + x1", "x2"], &[("-2", "2"), ("-1", "1")]),
        _ => return None,
    };
    Some(p.expect("named problem"))
}

pub const PROBLEMS: &[&str] = &["identity", "quartic", "cubic", "planar", "cubic-curve"];

/// Plan used by `generate` for a named problem.
pub fn plan_by_name(name: &str) -> Option<Plan> {
    let problem = problem_by_name(name)?;
    Some(match name {
        "quartic" => quartic_plan(),
        "planar" => planar_plan(),
        "cubic-curve" => cubic_curve_plan(),
        _ => single_plan(&problem),
    })
}

/// Point charts at `−1` and `1` with trivial obstruction, a chart with
/// `E = R` over `(−3/2, 3/2)` carrying the degenerate zero, and the two
/// sum charts over the outer zeros.
pub fn quartic_plan() -> Plan {
    let full = RatMatrix::identity(1);
    let none = RatMatrix::zeros(1, 0);
    Plan {
        basics: vec![
            CenterSpec { center: vec![-1.0], lo: rs(&["-5/4"]), hi: rs(&["-3/4"]), obstruction: none.clone() },
            CenterSpec { center: vec![0.0], lo: rs(&["-3/2"]), hi: rs(&["3/2"]), obstruction: full },
            CenterSpec { center: vec![1.0], lo: rs(&["3/4"]), hi: rs(&["5/4"]), obstruction: none },
        ],
        sums: vec![
            SumSpec { index: vec![1, 2], center: vec![-1.0], lo: rs(&["-3/2"]), hi: rs(&["-1/2"]) },
            SumSpec { index: vec![2, 3], center: vec![1.0], lo: rs(&["1/2"]), hi: rs(&["3/2"]) },
        ],
    }
}

/// Two boxes with full obstruction around `(±1/2, 0)`.
pub fn planar_plan() -> Plan {
    let full = RatMatrix::identity(2);
    Plan {
        basics: vec![
            CenterSpec { center: vec![-0.5, 0.0], lo: rs(&["-3/4", "-1/4"]), hi: rs(&["-1/4", "1/4"]), obstruction: full.clone() },
            CenterSpec { center: vec![0.5, 0.0], lo: rs(&["1/4", "-1/4"]), hi: rs(&["3/4", "1/4"]), obstruction: full },
        ],
        sums: Vec::new(),
    }
}

/// `F = (y − x³ + x, y)`: the implicit chart `y = x³ − x` with obstruction
/// the second axis, a curved fit exercised end to end.
pub fn cubic_curve_plan() -> Plan {
    Plan {
        basics: vec![CenterSpec {
            center: vec![0.0, 0.0],
            lo: rs(&["-3/2", "-1"]),
            hi: rs(&["3/2", "1"]),
            obstruction: RatMatrix::from_i64(&[&[0], &[1]], 1),
        }],
        sums: Vec::new(),
    }
}

// oracle

/// Topological degree of `F` over the region, computed from boundary
/// data only: sign changes for `n = 1`, winding number for `n = 2`, and
/// the signed solid angle of the boundary triangulation for `n = 3`.
pub fn brute_force_degree(problem: &GlobalProblem) -> Result<i64> {
    let n = problem.ambient_dim();
    if problem.target_dim() != n {
        return Err(Error::Unsupported("degree needs a square system".into()));
    }
    let (lo, hi) = problem.bounds();
    let f = |x: &[f64]| problem.section.eval(x);
    match n {
        1 => {
            let (a, b) = (f(&lo)[0], f(&hi)[0]);
            if a == 0.0 || b == 0.0 {
                return Err(Error::Boundary("zero on the boundary of the region".into()));
            }
            Ok(((b.signum() - a.signum()) / 2.0) as i64)
        }
        2 => winding(&f, &lo, &hi),
        3 => solid_angle_degree(&f, &lo, &hi),
        _ => Err(Error::Unsupported(format!("degree oracle implemented for n ≤ 3, got {n}"))),
    }
}

const ORACLE_CAP: usize = 1 << 16;

fn winding(f: &dyn Fn(&[f64]) -> Vec<f64>, lo: &[f64], hi: &[f64]) -> Result<i64> {
    let corners = [[lo[0], lo[1]], [hi[0], lo[1]], [hi[0], hi[1]], [lo[0], hi[1]]];
    let mut per_edge = 64;
    while per_edge <= ORACLE_CAP {
        let mut total = 0.0;
        let mut ok = true;
        let mut prev: Option<f64> = None;
        'edges: for e in 0..4 {
            let (p, q) = (corners[e], corners[(e + 1) % 4]);
            for s in 0..=per_edge {
                let t = s as f64 / per_edge as f64;
                let x = [p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])];
                let v = f(&x);
                if v[0] == 0.0 && v[1] == 0.0 {
                    return Err(Error::Boundary("zero on the boundary of the region".into()));
                }
                let ang = v[1].atan2(v[0]);
                if let Some(a) = prev {
                    let mut d = ang - a;
                    while d > PI {
                        d -= 2.0 * PI;
                    }
                    while d < -PI {
                        d += 2.0 * PI;
                    }
                    if d.abs() > PI / 4.0 {
                        ok = false;
                        break 'edges;
                    }
                    total += d;
                }
                prev = Some(ang);
            }
        }
        if ok {
            let w = total / (2.0 * PI);
            let rounded = w.round();
            if (w - rounded).abs() < 1e-6 {
                return Ok(rounded as i64);
            }
        }
        per_edge *= 2;
    }
    Err(Error::Boundary("winding increments stay large up to the density cap".into()))
}

fn solid_angle(a: &[f64; 3], b: &[f64; 3], c: &[f64; 3]) -> f64 {
    let n = |v: &[f64; 3]| (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    let dot = |u: &[f64; 3], v: &[f64; 3]| u[0] * v[0] + u[1] * v[1] + u[2] * v[2];
    let cross = [b[1] * c[2] - b[2] * c[1], b[2] * c[0] - b[0] * c[2], b[0] * c[1] - b[1] * c[0]];
    let num = dot(a, &cross);
    let (la, lb, lc) = (n(a), n(b), n(c));
    let den = la * lb * lc + dot(a, b) * lc + dot(a, c) * lb + dot(b, c) * la;
    2.0 * num.atan2(den)
}

fn solid_angle_degree(f: &dyn Fn(&[f64]) -> Vec<f64>, lo: &[f64], hi: &[f64]) -> Result<i64> {
    let mut k = 16;
    while k <= 512 {
        let mut total = 0.0;
        let mut max_angle: f64 = 0.0;
        for face in 0..3 {
            for side in 0..2 {
                let (a, b) = ((face + 1) % 3, (face + 2) % 3);
                let pt = |i: usize, j: usize| -> [f64; 3] {
                    let mut x = [0.0; 3];
                    x[face] = if side == 0 { lo[face] } else { hi[face] };
                    x[a] = lo[a] + (hi[a] - lo[a]) * i as f64 / k as f64;
                    x[b] = lo[b] + (hi[b] - lo[b]) * j as f64 / k as f64;
                    let v = f(&x);
                    [v[0], v[1], v[2]]
                };
                // outward orientation: (e_a, e_b, ±e_face) is positive for side 1
                let sgn = if side == 1 { 1.0 } else { -1.0 };
                for i in 0..k {
                    for j in 0..k {
                        let (p00, p10, p11, p01) = (pt(i, j), pt(i + 1, j), pt(i + 1, j + 1), pt(i, j + 1));
                        for (x, y, z) in [(&p00, &p10, &p11), (&p00, &p11, &p01)] {
                            if [x, y, z].iter().any(|v| v.iter().all(|c| *c == 0.0)) {
                                return Err(Error::Boundary("zero on the boundary of the region".into()));
                            }
                            let w = solid_angle(x, y, z);
                            max_angle = max_angle.max(w.abs());
                            total += sgn * w;
                        }
                    }
                }
            }
        }
        let d = total / (4.0 * PI);
        if max_angle < 0.5 && (d - d.round()).abs() < 1e-6 {
            return Ok(d.round() as i64);
        }
        k *= 2;
    }
    Err(Error::Boundary("boundary triangulation too coarse up to the density cap".into()))
}

// documents

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SumDoc {
    pub index: IndexSet,
    pub center: Vec<f64>,
    pub r#box: Vec<(RatDoc, RatDoc)>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PlanDoc {
    pub basics: Vec<CenterDoc>,
    #[serde(default)]
    pub sums: Vec<SumDoc>,
}

/// `problem` plus an optional `plan` (defaults to a single chart).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GeneratorDoc {
    pub problem: ProblemDoc,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plan: Option<PlanDoc>,
}

fn split_box(b: &[(RatDoc, RatDoc)]) -> Result<(Vec<Rat>, Vec<Rat>)> {
    let lo = b.iter().map(|p| p.0.to_rat()).collect::<Result<Vec<_>>>()?;
    let hi = b.iter().map(|p| p.1.to_rat()).collect::<Result<Vec<_>>>()?;
    Ok((lo, hi))
}

fn join_box(lo: &[Rat], hi: &[Rat]) -> Vec<(RatDoc, RatDoc)> {
    lo.iter().zip(hi).map(|(a, b)| (RatDoc::from(a), RatDoc::from(b))).collect()
}

impl Plan {
    pub fn from_doc(doc: &PlanDoc, m: usize) -> Result<Self> {
        let basics = doc
            .basics
            .iter()
            .map(|c| {
                let (lo, hi) = split_box(&c.r#box)?;
                let k = c.obstruction.first().map_or(0, |r| r.len());
                if c.obstruction.len() != m || c.obstruction.iter().any(|r| r.len() != k) {
                    return Err(Error::Schema(format!("obstruction basis must have {m} rows")));
                }
                let data = c.obstruction.iter().flatten().map(|v| v.to_rat()).collect::<Result<Vec<_>>>()?;
                Ok(CenterSpec { center: c.center.clone(), lo, hi, obstruction: RatMatrix::new(m, k, data) })
            })
            .collect::<Result<_>>()?;
        let sums = doc
            .sums
            .iter()
            .map(|s| {
                let (lo, hi) = split_box(&s.r#box)?;
                Ok(SumSpec { index: s.index.clone(), center: s.center.clone(), lo, hi })
            })
            .collect::<Result<_>>()?;
        Ok(Plan { basics, sums })
    }

    pub fn to_doc(&self) -> PlanDoc {
        PlanDoc {
            basics: self
                .basics
                .iter()
                .map(|c| CenterDoc {
                    center: c.center.clone(),
                    r#box: join_box(&c.lo, &c.hi),
                    obstruction: (0..c.obstruction.rows()).map(|r| c.obstruction.row(r).iter().map(RatDoc::from).collect()).collect(),
                })
                .collect(),
            sums: self.sums.iter().map(|s| SumDoc { index: s.index.clone(), center: s.center.clone(), r#box: join_box(&s.lo, &s.hi) }).collect(),
        }
    }
}

/// Named problem, or a generator document path.
pub fn load_problem(name_or_path: &str) -> Result<(GlobalProblem, Plan)> {
    if let (Some(p), Some(plan)) = (problem_by_name(name_or_path), plan_by_name(name_or_path)) {
        return Ok((p, plan));
    }
    let doc: GeneratorDoc = serde_json::from_str(&std::fs::read_to_string(name_or_path)?)?;
    let p = GlobalProblem::from_doc(&doc.problem)?;
    let plan = match &doc.plan {
        Some(d) => Plan::from_doc(d, p.target_dim())?,
        None => single_plan(&p),
    };
    Ok((p, plan))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::validators::{check_additivity, check_cocycle, check_index_condition, check_intertwining, CocycleLevel};

    fn tol() -> Tolerances {
        Tolerances::default()
    }

    #[test]
    fn oracle_degrees() {
        // independent values: winding of z², equal boundary signs, identity
        assert_eq!(brute_force_degree(&problem_by_name("planar").unwrap()).unwrap(), 2);
        assert_eq!(brute_force_degree(&problem_by_name("quartic").unwrap()).unwrap(), 0);
        assert_eq!(brute_force_degree(&problem_by_name("identity").unwrap()).unwrap(), 1);
        assert_eq!(brute_force_degree(&problem_by_name("cubic").unwrap()).unwrap(), 1);
        let neg = GlobalProblem::parse(1, &["-x1"], &[("-1", "1")]).unwrap();
        assert_eq!(brute_force_degree(&neg).unwrap(), -1);
        let conj = GlobalProblem::parse(2, &["x1^2 - x2^2", "-2*x1*x2"], &[("-1", "1"), ("-1", "1")]).unwrap();
        assert_eq!(brute_force_degree(&conj).unwrap(), -2);
    }

    #[test]
    fn oracle_three_dimensional() {
        let id = GlobalProblem::parse(3, &["x1", "x2", "x3"], &[("-1", "1"), ("-1", "1"), ("-1", "1")]).unwrap();
        assert_eq!(brute_force_degree(&id).unwrap(), 1);
        let flip = GlobalProblem::parse(3, &["x2", "x1", "x3"], &[("-1", "1"), ("-1", "1"), ("-1", "1")]).unwrap();
        assert_eq!(brute_force_degree(&flip).unwrap(), -1);
        // two transverse zeros of opposite sign: (x² − 1/4, y, z)
        let pair = GlobalProblem::parse(3, &["x1^2 - 1/4", "x2", "x3"], &[("-1", "1"), ("-1", "1"), ("-1", "1")]).unwrap();
        assert_eq!(brute_force_degree(&pair).unwrap(), 0);
    }

    #[test]
    fn boundary_zero_is_reported() {
        let p = GlobalProblem::parse(1, &["x1 - 1"], &[("-1", "1")]).unwrap();
        assert!(matches!(brute_force_degree(&p), Err(Error::Boundary(_))));
        assert!(p.boundary_margin(4) == 0.0);
    }

    #[test]
    fn full_obstruction_reproduces_section() {
        let p = problem_by_name("planar").unwrap();
        let cs = reduce_global(&p, &planar_plan().basics, &tol()).unwrap();
        assert_eq!(cs.len(), 2);
        for c in &cs {
            assert_eq!(c.chart.obstruction_dim, 2);
            for x in [[-0.5, 0.1], [0.3, -0.2]] {
                assert_eq!(c.chart.section.eval(&x), p.section.eval(&x));
            }
            // local degree at the centre: det dF = 4(x² + y²) > 0
            let z: Vec<f64> = if c.chart.index == vec![1] { vec![-0.5, 0.0] } else { vec![0.5, 0.0] };
            assert!(c.chart.section.jacobian(&z).determinant() > 0.0);
        }
    }

    #[test]
    fn square_needs_full_obstruction() {
        let p = GlobalProblem::parse(1, &["x1^2"], &[("-1", "1")]).unwrap();
        let bad = CenterSpec { center: vec![0.0], lo: rs(&["-1/2"]), hi: rs(&["1/2"]), obstruction: RatMatrix::zeros(1, 0) };
        assert!(matches!(local_chart(&p, &[1], &bad, &tol()), Err(Error::Rank(_))));
        let good = CenterSpec { obstruction: RatMatrix::identity(1), ..bad };
        let c = local_chart(&p, &[1], &good, &tol()).unwrap();
        assert!((c.chart.section.eval(&[0.3])[0] - 0.09).abs() < 1e-15);
    }

    #[test]
    fn dependent_summands_violate_sum_condition() {
        let p = GlobalProblem::parse(1, &["x1^2"], &[("-1", "1")]).unwrap();
        let spec = CenterSpec { center: vec![0.0], lo: rs(&["-1/2"]), hi: rs(&["1/2"]), obstruction: RatMatrix::identity(1) };
        let basics = reduce_global(&p, &[spec.clone(), spec], &tol()).unwrap();
        let e = sum_chart(&p, &basics, &[1, 2], &[0.0], &rs(&["-1/4"]), &rs(&["1/4"]), &tol());
        assert!(matches!(e, Err(Error::SumCondition(_))));
    }

    #[test]
    fn quartic_plan_is_additive_and_consistent() {
        let p = problem_by_name("quartic").unwrap();
        let a = generate(&p, &quartic_plan(), &tol()).unwrap();
        assert_eq!(a.index_sets(), vec![vec![1], vec![2], vec![3], vec![1, 2], vec![2, 3]]);
        assert_eq!(a.chart(&[1]).dim(), 0);
        assert_eq!(a.chart(&[1, 2]).obstruction_dim, 1);
        assert!(check_additivity(&a).passed());
        assert!(check_intertwining(&a, 12, 0, &tol()).passed());
        assert!(check_cocycle(&a, CocycleLevel::Weak, 12, 0, &tol()).passed());
        assert!(check_index_condition(&a, 20, 0, &tol()).passed());
        assert_eq!(a.embedding(&[3]).eval(&[]), vec![1.0]);
    }

    #[test]
    fn implicit_chart_fits_the_curve() {
        let p = problem_by_name("cubic-curve").unwrap();
        let c = local_chart(&p, &[1], &cubic_curve_plan().basics[0], &tol()).unwrap();
        assert_eq!(c.free, vec![0]);
        assert!(c.fit_residual < 1e-10);
        // s(u) = second component of F on the graph y = u³ − u
        for u in [-1.2, -0.3, 0.0, 0.8] {
            let s = c.chart.section.eval(&[u])[0];
            assert!((s - (u * u * u - u)).abs() < 1e-9, "{u}: {s}");
        }
        let a = generate(&p, &cubic_curve_plan(), &tol()).unwrap();
        assert_eq!(a.metric_dim, 2);
    }

    #[test]
    fn plan_documents_round_trip() {
        let plan = quartic_plan();
        let back = Plan::from_doc(&serde_json::from_str(&serde_json::to_string(&plan.to_doc()).unwrap()).unwrap(), 1).unwrap();
        assert_eq!(back, plan);
        let p = problem_by_name("planar").unwrap();
        assert_eq!(GlobalProblem::from_doc(&p.to_doc()).unwrap(), p);
    }
}
