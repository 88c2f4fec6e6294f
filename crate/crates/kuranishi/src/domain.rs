//! Open domains: finite unions of open boxes cut out by strict inequalities.

use std::fmt;

use num_traits::Signed;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::poly::{fmt_rat, parse_rat, rat_to_f64, Poly, Rat};
use crate::smooth::{parse_smooth, SmoothFn, SmoothMap};

/// Strict inequality `f(g_k(…g_1(x))) > 0`; the chain is empty for a plain
/// inequality.
///
/// The chain keeps pullbacks through non-polynomial maps representable;
/// pullbacks through polynomial maps are composed eagerly.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Constraint {
    pub f: SmoothFn,
    pub through: Vec<SmoothMap>,
}

impl Constraint {
    pub fn new(f: SmoothFn) -> Self {
        Constraint { f, through: Vec::new() }
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        let mut y = x.to_vec();
        for g in &self.through {
            y = g.eval(&y);
        }
        self.f.eval(&y)
    }

    pub fn value_rat(&self, x: &[Rat]) -> Option<Rat> {
        let mut y = x.to_vec();
        for g in &self.through {
            y = g.eval_rat(&y)?;
        }
        self.f.eval_rat(&y)
    }

    /// Pull back along `g`, composing exactly when possible.
    pub fn pullback(&self, g: &SmoothMap) -> Constraint {
        match self.through.first() {
            None => {
                let outer = SmoothMap::new(self.f.nvars(), vec![self.f.clone()]);
                match outer.compose(g) {
                    Some(c) => Constraint::new(c.comps()[0].clone()),
                    None => Constraint { f: self.f.clone(), through: vec![g.clone()] },
                }
            }
            Some(h) => {
                let mut through = self.through.clone();
                match h.compose(g) {
                    Some(hg) => through[0] = hg,
                    None => through.insert(0, g.clone()),
                }
                Constraint { f: self.f.clone(), through }
            }
        }
    }

    fn shifted(&self, m: &Rat) -> Constraint {
        let n = self.f.nvars();
        Constraint {
            f: self.f.sub(&Poly::constant(n, m.clone()).into()),
            through: self.through.clone(),
        }
    }

    fn relabel(&self, n: usize, map: &[usize]) -> Constraint {
        if self.through.is_empty() {
            return Constraint::new(self.f.relabel(n, map));
        }
        let mut through = self.through.clone();
        through[0] = through[0].relabel(n, map);
        Constraint { f: self.f.clone(), through }
    }

    fn fix_first(&self, t: &Rat) -> Option<Constraint> {
        if self.through.is_empty() {
            return Some(Constraint::new(self.f.fix_first(t)?));
        }
        let mut through = self.through.clone();
        through[0] = through[0].fix_first(t)?;
        Some(Constraint { f: self.f.clone(), through })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Piece {
    pub lo: Vec<Rat>,
    pub hi: Vec<Rat>,
    pub constraints: Vec<Constraint>,
}

impl Piece {
    pub fn new_box(lo: Vec<Rat>, hi: Vec<Rat>) -> Self {
        assert_eq!(lo.len(), hi.len());
        Piece { lo, hi, constraints: Vec::new() }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    /// True when the box part is empty (some lo ≥ hi).
    pub fn box_empty(&self) -> bool {
        self.lo.iter().zip(&self.hi).any(|(a, b)| a >= b)
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        for i in 0..x.len() {
            if !(x[i] > rat_to_f64(&self.lo[i]) && x[i] < rat_to_f64(&self.hi[i])) {
                return false;
            }
        }
        self.constraints.iter().all(|c| c.value(x) > 0.0)
    }

    pub fn contains_rat(&self, x: &[Rat]) -> Option<bool> {
        for i in 0..x.len() {
            if !(x[i] > self.lo[i] && x[i] < self.hi[i]) {
                return Some(false);
            }
        }
        for c in &self.constraints {
            if !c.value_rat(x)?.is_positive() {
                return Some(false);
            }
        }
        Some(true)
    }

    pub fn lo_f64(&self) -> Vec<f64> {
        self.lo.iter().map(rat_to_f64).collect()
    }

    pub fn hi_f64(&self) -> Vec<f64> {
        self.hi.iter().map(rat_to_f64).collect()
    }

    /// Euclidean distance from `x` to the box part (0 inside).
    pub fn box_distance(&self, x: &[f64]) -> f64 {
        let mut d2 = 0.0;
        for i in 0..x.len() {
            let lo = rat_to_f64(&self.lo[i]);
            let hi = rat_to_f64(&self.hi[i]);
            let e = if x[i] < lo {
                lo - x[i]
            } else if x[i] > hi {
                x[i] - hi
            } else {
                0.0
            };
            d2 += e * e;
        }
        d2.sqrt()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Domain {
    ambient_dim: usize,
    pieces: Vec<Piece>,
}

impl Domain {
    pub fn new(ambient_dim: usize, pieces: Vec<Piece>) -> Self {
        for p in &pieces {
            assert_eq!(p.dim(), ambient_dim, "piece dimension");
        }
        let pieces = pieces.into_iter().filter(|p| !p.box_empty()).collect();
        Domain { ambient_dim, pieces }
    }

    pub fn empty(n: usize) -> Self {
        Domain { ambient_dim: n, pieces: Vec::new() }
    }

    /// The single point of `R^0`.
    pub fn point() -> Self {
        Domain::new(0, vec![Piece::new_box(vec![], vec![])])
    }

    pub fn from_box(lo: Vec<Rat>, hi: Vec<Rat>) -> Self {
        let n = lo.len();
        Domain::new(n, vec![Piece::new_box(lo, hi)])
    }

    pub fn ambient_dim(&self) -> usize {
        self.ambient_dim
    }

    pub fn pieces(&self) -> &[Piece] {
        &self.pieces
    }

    /// No pieces left (the empty set); nonempty pieces may still be empty
    /// because of their constraints, which only sampling can reveal.
    pub fn is_trivially_empty(&self) -> bool {
        self.pieces.is_empty()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.pieces.iter().any(|p| p.contains(x))
    }

    pub fn contains_rat(&self, x: &[Rat]) -> Option<bool> {
        let mut undecided = false;
        for p in &self.pieces {
            match p.contains_rat(x) {
                Some(true) => return Some(true),
                Some(false) => {}
                None => undecided = true,
            }
        }
        if undecided {
            None
        } else {
            Some(false)
        }
    }

    pub fn bounding_box(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        let first = self.pieces.first()?;
        let mut lo = first.lo_f64();
        let mut hi = first.hi_f64();
        for p in &self.pieces[1..] {
            for (i, (a, b)) in p.lo_f64().into_iter().zip(p.hi_f64()).enumerate() {
                lo[i] = lo[i].min(a);
                hi[i] = hi[i].max(b);
            }
        }
        Some((lo, hi))
    }

    pub fn intersect(&self, o: &Domain) -> Domain {
        assert_eq!(self.ambient_dim, o.ambient_dim);
        let mut out = Vec::new();
        for a in &self.pieces {
            for b in &o.pieces {
                let lo = a.lo.iter().zip(&b.lo).map(|(x, y)| x.max(y).clone()).collect();
                let hi = a.hi.iter().zip(&b.hi).map(|(x, y)| x.min(y).clone()).collect();
                let mut p = Piece::new_box(lo, hi);
                p.constraints = a.constraints.clone();
                for c in &b.constraints {
                    if !p.constraints.contains(c) {
                        p.constraints.push(c.clone());
                    }
                }
                out.push(p);
            }
        }
        Domain::new(self.ambient_dim, out)
    }

    pub fn union(&self, o: &Domain) -> Domain {
        assert_eq!(self.ambient_dim, o.ambient_dim);
        let mut p = self.pieces.clone();
        p.extend(o.pieces.iter().cloned());
        Domain::new(self.ambient_dim, p)
    }

    /// `{x ∈ self : g(x) ∈ target}`, expressed by attaching the pulled-back
    /// box and constraint inequalities to each piece.
    pub fn pullback_intersect(&self, g: &SmoothMap, target: &Domain) -> Domain {
        assert_eq!(g.domain_dim(), self.ambient_dim);
        assert_eq!(g.codomain_dim(), target.ambient_dim);
        let n = self.ambient_dim;
        let mut out = Vec::new();
        for a in &self.pieces {
            for b in &target.pieces {
                let mut p = a.clone();
                for k in 0..target.ambient_dim {
                    let gk = g.component(k).clone();
                    let lo = gk.sub(&Poly::constant(n, b.lo[k].clone()).into());
                    let hi = SmoothFn::from(Poly::constant(n, b.hi[k].clone())).sub(&gk);
                    for c in [lo, hi] {
                        let c = Constraint::new(c);
                        if !p.constraints.contains(&c) {
                            p.constraints.push(c);
                        }
                    }
                }
                for c in &b.constraints {
                    let c = c.pullback(g);
                    if !p.constraints.contains(&c) {
                        p.constraints.push(c);
                    }
                }
                out.push(p);
            }
        }
        Domain::new(n, out)
    }

    /// Move every box face inward by `m` and tighten every constraint
    /// `p > 0` to `p − m > 0`; the closure of the result lies in `self`.
    pub fn shrink_margin(&self, m: &Rat) -> Domain {
        let pieces = self
            .pieces
            .iter()
            .map(|p| Piece {
                lo: p.lo.iter().map(|v| v + m).collect(),
                hi: p.hi.iter().map(|v| v - m).collect(),
                constraints: p.constraints.iter().map(|c| c.shifted(m)).collect(),
            })
            .collect();
        Domain::new(self.ambient_dim, pieces)
    }

    /// `(t_lo, t_hi) × self`, new coordinate first.
    pub fn product_interval(&self, t_lo: Rat, t_hi: Rat) -> Domain {
        let n = self.ambient_dim + 1;
        let map: Vec<usize> = (1..n).collect();
        let pieces = self
            .pieces
            .iter()
            .map(|p| {
                let mut lo = vec![t_lo.clone()];
                lo.extend(p.lo.iter().cloned());
                let mut hi = vec![t_hi.clone()];
                hi.extend(p.hi.iter().cloned());
                Piece {
                    lo,
                    hi,
                    constraints: p.constraints.iter().map(|c| c.relabel(n, &map)).collect(),
                }
            })
            .collect();
        Domain::new(n, pieces)
    }

    /// Slice of a product domain at first coordinate `t`.
    pub fn slice_first(&self, t: &Rat) -> Domain {
        let n = self.ambient_dim - 1;
        let mut pieces = Vec::new();
        for p in &self.pieces {
            if !(t > &p.lo[0] && t < &p.hi[0]) {
                continue;
            }
            let mut cs = Vec::new();
            for c in &p.constraints {
                cs.push(c.fix_first(t).expect("product constraints ignore the collar coordinate"));
            }
            pieces.push(Piece { lo: p.lo[1..].to_vec(), hi: p.hi[1..].to_vec(), constraints: cs });
        }
        Domain::new(n, pieces)
    }

    /// Box-only containment test `self ⊆ o`, exact and sufficient: every
    /// piece box of `self` lies in some piece box of `o` carrying no
    /// constraints beyond those of the inner piece.
    pub fn box_contained_in(&self, o: &Domain) -> bool {
        self.pieces.iter().all(|a| {
            o.pieces.iter().any(|b| {
                a.lo.iter().zip(&b.lo).all(|(x, y)| x >= y)
                    && a.hi.iter().zip(&b.hi).all(|(x, y)| x <= y)
                    && b.constraints.iter().all(|c| a.constraints.contains(c))
            })
        })
    }

    /// Precompact inclusion `self ⋐ o` certified by margins: each piece of
    /// `self` sits inside a piece of `o` whose faces are at least `m` away
    /// and whose constraints are tightened by at least `m` in `self`.
    pub fn precompact_in(&self, o: &Domain) -> bool {
        self.pieces.iter().all(|a| {
            o.pieces.iter().any(|b| {
                let box_ok = a.lo.iter().zip(&b.lo).all(|(x, y)| x > y)
                    && a.hi.iter().zip(&b.hi).all(|(x, y)| x < y);
                box_ok
                    && b.constraints.iter().all(|c| {
                        a.constraints.iter().any(|ac| {
                            ac.through == c.through && {
                                let diff = c.f.sub(&ac.f);
                                diff.is_polynomial()
                                    && diff.poly().as_constant().is_some_and(|v| v.is_positive())
                            }
                        })
                    })
            })
        })
    }

    pub fn to_doc(&self) -> Vec<PieceDoc> {
        self.pieces
            .iter()
            .map(|p| PieceDoc {
                r#box: p
                    .lo
                    .iter()
                    .zip(&p.hi)
                    .map(|(a, b)| [RatDoc::from(a), RatDoc::from(b)])
                    .collect(),
                constraints: p
                    .constraints
                    .iter()
                    .map(|c| {
                        if c.through.is_empty() {
                            ConstraintDoc::Plain(c.f.to_string())
                        } else {
                            ConstraintDoc::Pullback {
                                f: c.f.to_string(),
                                through: c
                                    .through
                                    .iter()
                                    .map(|g| (g.domain_dim(), g.to_strings()))
                                    .collect(),
                            }
                        }
                    })
                    .collect(),
            })
            .collect()
    }

    pub fn from_doc(n: usize, doc: &[PieceDoc]) -> Result<Domain> {
        let mut pieces = Vec::new();
        for pd in doc {
            if pd.r#box.len() != n {
                return Err(Error::Schema(format!(
                    "box has {} intervals, expected {n}",
                    pd.r#box.len()
                )));
            }
            let mut lo = Vec::new();
            let mut hi = Vec::new();
            for [a, b] in &pd.r#box {
                lo.push(a.to_rat()?);
                hi.push(b.to_rat()?);
            }
            let mut constraints = Vec::new();
            for c in &pd.constraints {
                constraints.push(match c {
                    ConstraintDoc::Plain(s) => Constraint::new(parse_smooth(s, n)?),
                    ConstraintDoc::Pullback { f, through } => {
                        let mut chain = Vec::new();
                        let mut dim = n;
                        for (d, comps) in through {
                            if *d != dim {
                                return Err(Error::Schema("constraint chain arity".into()));
                            }
                            let g = SmoothMap::parse(dim, comps)?;
                            dim = g.codomain_dim();
                            chain.push(g);
                        }
                        Constraint { f: parse_smooth(f, dim)?, through: chain }
                    }
                });
            }
            pieces.push(Piece { lo, hi, constraints });
        }
        Ok(Domain::new(n, pieces))
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.pieces.is_empty() {
            return write!(f, "∅");
        }
        for (k, p) in self.pieces.iter().enumerate() {
            if k > 0 {
                write!(f, " ∪ ")?;
            }
            let iv: Vec<String> = p
                .lo
                .iter()
                .zip(&p.hi)
                .map(|(a, b)| format!("({}, {})", fmt_rat(a), fmt_rat(b)))
                .collect();
            write!(f, "{}", if iv.is_empty() { "pt".to_string() } else { iv.join("×") })?;
            if !p.constraints.is_empty() {
                write!(f, "[{} constraints]", p.constraints.len())?;
            }
        }
        Ok(())
    }
}

/// Rational number in a document: integer or string (`"1/3"`, `"0.25"`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RatDoc {
    Int(i64),
    Text(String),
}

impl RatDoc {
    pub fn to_rat(&self) -> Result<Rat> {
        match self {
            RatDoc::Int(v) => Ok(Rat::from_integer((*v).into())),
            RatDoc::Text(s) => parse_rat(s),
        }
    }
}

impl From<&Rat> for RatDoc {
    fn from(r: &Rat) -> Self {
        if r.is_integer() {
            if let Ok(v) = r.to_integer().try_into() {
                return RatDoc::Int(v);
            }
        }
        RatDoc::Text(fmt_rat(r))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ConstraintDoc {
    Plain(String),
    Pullback { f: String, through: Vec<(usize, Vec<String>)> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PieceDoc {
    pub r#box: Vec<[RatDoc; 2]>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub constraints: Vec<ConstraintDoc>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly::{rat, ratio};

    fn interval(a: Rat, b: Rat) -> Domain {
        Domain::from_box(vec![a], vec![b])
    }

    #[test]
    fn membership_is_exact_at_rationals() {
        let mut p = Piece::new_box(vec![rat(-1)], vec![rat(2)]);
        p.constraints.push(Constraint::new(parse_smooth("1 - x1^4 + x1^2", 1).unwrap()));
        let d = Domain::new(1, vec![p]);
        assert_eq!(d.contains_rat(&[rat(1)]), Some(true));
        assert_eq!(d.contains_rat(&[rat(2)]), Some(false));
        // 1 − t⁴ + t² vanishes at t² = (1+√5)/2, about t = 1.272
        assert_eq!(d.contains_rat(&[ratio(13, 10)]), Some(false));
        assert_eq!(d.contains_rat(&[ratio(6, 5)]), Some(true));
    }

    #[test]
    fn pullback_through_inclusion() {
        let u12 = Domain::from_box(vec![rat(-1), rat(-1)], vec![rat(2), rat(1)]);
        let phi = SmoothMap::parse(1, &["x1".into(), "0".into()]).unwrap();
        let u1 = interval(rat(-2), rat(2));
        let u = u1.pullback_intersect(&phi, &u12);
        assert_eq!(u.contains_rat(&[ratio(-1, 2)]), Some(true));
        assert_eq!(u.contains_rat(&[ratio(-3, 2)]), Some(false));
        assert_eq!(u.contains_rat(&[rat(2)]), Some(false));
    }

    #[test]
    fn shrink_is_precompact() {
        let u = interval(rat(-2), rat(2));
        let s = u.shrink_margin(&ratio(1, 10));
        assert!(s.precompact_in(&u));
        assert!(!u.precompact_in(&u));
        assert!(s.box_contained_in(&u));
    }

    #[test]
    fn product_then_slice_roundtrips() {
        let mut p = Piece::new_box(vec![rat(0), rat(0)], vec![rat(1), rat(1)]);
        p.constraints.push(Constraint::new(parse_smooth("x1 - x2", 2).unwrap()));
        let d = Domain::new(2, vec![p]);
        let prod = d.product_interval(ratio(-1, 10), ratio(11, 10));
        assert_eq!(prod.slice_first(&rat(0)), d);
        assert_eq!(prod.slice_first(&rat(1)), d);
        assert!(prod.slice_first(&rat(2)).is_trivially_empty());
    }

    #[test]
    fn doc_roundtrip() {
        let mut p = Piece::new_box(vec![ratio(1, 3), rat(-1)], vec![rat(1), rat(1)]);
        p.constraints.push(Constraint::new(parse_smooth("x1 - 1/2", 2).unwrap()));
        let d = Domain::new(2, vec![p]);
        let doc = d.to_doc();
        let text = serde_json::to_string(&doc).unwrap();
        let back: Vec<PieceDoc> = serde_json::from_str(&text).unwrap();
        assert_eq!(Domain::from_doc(2, &back).unwrap(), d);
    }

    #[test]
    fn point_domain() {
        let p = Domain::point();
        assert!(p.contains(&[]));
        assert_eq!(p.contains_rat(&[]), Some(true));
    }
}
