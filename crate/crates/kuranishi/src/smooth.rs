//! Smooth maps built from polynomials and compactly supported bumps.
//!
//! A scalar [`SmoothFn`] is `p(x) + Σ_k q_k(x) · b_k(x)` where `p, q_k` are
//! exact polynomials and each `b_k` is the profile
//! `exp(1 − 1/(1 − |x−c|²/r²))` on the open ball `|x−c| < r`, zero outside.
//! Values and gradients are exact formulas; only polynomial parts admit
//! exact rational evaluation.

use std::collections::BTreeMap;
use std::fmt;

use nalgebra::DMatrix;
use num_traits::{Signed, Zero};

use crate::error::{Error, Result};
use crate::poly::{fmt_rat, parse_rat, rat_to_f64, Poly, Rat};

/// Bump profile on the coordinates with a centre entry; coordinates whose
/// entry is `None` are ignored (cylindrical bumps, needed for products).
#[derive(Clone, Debug)]
pub struct Bump {
    center: Vec<Option<Rat>>,
    radius: Rat,
    fcenter: Vec<Option<f64>>,
    fr2: f64,
}

impl PartialEq for Bump {
    fn eq(&self, o: &Self) -> bool {
        self.center == o.center && self.radius == o.radius
    }
}
impl Eq for Bump {}

impl Bump {
    pub fn new(center: Vec<Option<Rat>>, radius: Rat) -> Result<Self> {
        if !radius.is_positive() {
            return Err(Error::Parse("bump radius must be positive".into()));
        }
        let fcenter = center.iter().map(|c| c.as_ref().map(rat_to_f64)).collect();
        let r = rat_to_f64(&radius);
        Ok(Bump { center, radius, fcenter, fr2: r * r })
    }

    /// Radial bump centred at `c` in all coordinates.
    pub fn radial(c: Vec<Rat>, radius: Rat) -> Result<Self> {
        Self::new(c.into_iter().map(Some).collect(), radius)
    }

    pub fn center(&self) -> &[Option<Rat>] {
        &self.center
    }

    pub fn radius(&self) -> &Rat {
        &self.radius
    }

    fn key(&self) -> (Rat, Vec<Option<Rat>>) {
        (self.radius.clone(), self.center.clone())
    }

    /// Profile value and `u = |x−c|²/r²`.
    fn value_u(&self, x: &[f64]) -> (f64, f64) {
        let mut d2 = 0.0;
        for (a, c) in x.iter().zip(&self.fcenter) {
            if let Some(c) = c {
                d2 += (a - c) * (a - c);
            }
        }
        let u = d2 / self.fr2;
        if u >= 1.0 {
            (0.0, u)
        } else {
            ((1.0 - 1.0 / (1.0 - u)).exp(), u)
        }
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        self.value_u(x).0
    }

    pub fn grad(&self, x: &[f64]) -> Vec<f64> {
        let (b, u) = self.value_u(x);
        if b == 0.0 {
            return vec![0.0; x.len()];
        }
        let f = -b / ((1.0 - u) * (1.0 - u)) * 2.0 / self.fr2;
        x.iter()
            .zip(&self.fcenter)
            .map(|(a, c)| c.map_or(0.0, |c| f * (a - c)))
            .collect()
    }

    fn relabel(&self, n: usize, map: &[usize]) -> Bump {
        let mut c = vec![None; n];
        for (i, ci) in self.center.iter().enumerate() {
            c[map[i]] = ci.clone();
        }
        Bump::new(c, self.radius.clone()).expect("radius already validated")
    }

    /// Drop coordinate 0, which must be ignored by the bump.
    fn drop_first(&self) -> Option<Bump> {
        if self.center.first()?.is_some() {
            return None;
        }
        Some(Bump::new(self.center[1..].to_vec(), self.radius.clone()).expect("radius already validated"))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BumpTerm {
    pub coeff: Poly,
    pub bump: Bump,
}

/// Scalar smooth function in canonical form.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SmoothFn {
    nvars: usize,
    poly: Poly,
    bumps: Vec<BumpTerm>,
}

impl From<Poly> for SmoothFn {
    fn from(p: Poly) -> Self {
        SmoothFn { nvars: p.nvars(), poly: p, bumps: Vec::new() }
    }
}

impl SmoothFn {
    pub fn new(poly: Poly, bumps: Vec<BumpTerm>) -> Self {
        let nvars = poly.nvars();
        let mut merged: BTreeMap<(Rat, Vec<Option<Rat>>), BumpTerm> = BTreeMap::new();
        for t in bumps {
            assert_eq!(t.coeff.nvars(), nvars);
            assert_eq!(t.bump.center.len(), nvars);
            merged
                .entry(t.bump.key())
                .and_modify(|e| e.coeff = e.coeff.add(&t.coeff))
                .or_insert(t);
        }
        let bumps = merged.into_values().filter(|t| !t.coeff.is_zero()).collect();
        SmoothFn { nvars, poly, bumps }
    }

    pub fn zero(n: usize) -> Self {
        Poly::zero(n).into()
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn poly(&self) -> &Poly {
        &self.poly
    }

    pub fn bumps(&self) -> &[BumpTerm] {
        &self.bumps
    }

    pub fn is_polynomial(&self) -> bool {
        self.bumps.is_empty()
    }

    pub fn is_zero(&self) -> bool {
        self.poly.is_zero() && self.bumps.is_empty()
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let mut v = self.poly.eval(x);
        for t in &self.bumps {
            let b = t.bump.value(x);
            if b != 0.0 {
                v += t.coeff.eval(x) * b;
            }
        }
        v
    }

    /// Exact value; `None` when bump terms are present.
    pub fn eval_rat(&self, x: &[Rat]) -> Option<Rat> {
        self.is_polynomial().then(|| self.poly.eval_rat(x))
    }

    pub fn grad(&self, x: &[f64]) -> Vec<f64> {
        let mut g: Vec<f64> = (0..self.nvars).map(|i| self.poly.deriv(i).eval(x)).collect();
        for t in &self.bumps {
            let b = t.bump.value(x);
            if b == 0.0 {
                continue;
            }
            let q = t.coeff.eval(x);
            let gb = t.bump.grad(x);
            for i in 0..self.nvars {
                g[i] += t.coeff.deriv(i).eval(x) * b + q * gb[i];
            }
        }
        g
    }

    pub fn add(&self, o: &SmoothFn) -> SmoothFn {
        let mut b = self.bumps.clone();
        b.extend(o.bumps.iter().cloned());
        SmoothFn::new(self.poly.add(&o.poly), b)
    }

    pub fn neg(&self) -> SmoothFn {
        let b = self
            .bumps
            .iter()
            .map(|t| BumpTerm { coeff: t.coeff.neg(), bump: t.bump.clone() })
            .collect();
        SmoothFn::new(self.poly.neg(), b)
    }

    pub fn sub(&self, o: &SmoothFn) -> SmoothFn {
        self.add(&o.neg())
    }

    pub fn scale(&self, s: &Rat) -> SmoothFn {
        let b = self
            .bumps
            .iter()
            .map(|t| BumpTerm { coeff: t.coeff.scale(s), bump: t.bump.clone() })
            .collect();
        SmoothFn::new(self.poly.scale(s), b)
    }

    /// Product; fails when both factors carry bumps (not representable).
    pub fn mul(&self, o: &SmoothFn) -> Result<SmoothFn> {
        if !self.bumps.is_empty() && !o.bumps.is_empty() {
            return Err(Error::Unsupported("product of two bump terms".into()));
        }
        let mut b = Vec::new();
        for t in &self.bumps {
            b.push(BumpTerm { coeff: t.coeff.mul(&o.poly), bump: t.bump.clone() });
        }
        for t in &o.bumps {
            b.push(BumpTerm { coeff: t.coeff.mul(&self.poly), bump: t.bump.clone() });
        }
        Ok(SmoothFn::new(self.poly.mul(&o.poly), b))
    }

    pub fn pow(&self, k: u32) -> Result<SmoothFn> {
        if self.bumps.is_empty() {
            return Ok(self.poly.pow(k).into());
        }
        match k {
            0 => Ok(Poly::one(self.nvars).into()),
            1 => Ok(self.clone()),
            _ => Err(Error::Unsupported("power of a bump term".into())),
        }
    }

    /// Substitute a polynomial map; only defined for polynomial functions.
    pub fn compose_poly(&self, subs: &[Poly]) -> Option<SmoothFn> {
        self.is_polynomial().then(|| self.poly.compose(subs).into())
    }

    /// Re-embed into `n` variables via `x_i ↦ y_{map[i]}`; bumps ignore the
    /// new slots.
    pub fn relabel(&self, n: usize, map: &[usize]) -> SmoothFn {
        let bumps = self
            .bumps
            .iter()
            .map(|t| BumpTerm { coeff: t.coeff.relabel(n, map), bump: t.bump.relabel(n, map) })
            .collect();
        SmoothFn::new(self.poly.relabel(n, map), bumps)
    }

    /// Substitute `x1 = t` and renumber the remaining variables; `None` if a
    /// bump depends on `x1`.
    pub fn fix_first(&self, t: &Rat) -> Option<SmoothFn> {
        let n = self.nvars.checked_sub(1)?;
        let mut subs = vec![Poly::constant(n, t.clone())];
        subs.extend((0..n).map(|i| Poly::var(n, i)));
        let mut bumps = Vec::new();
        for b in &self.bumps {
            bumps.push(BumpTerm { coeff: b.coeff.compose(&subs), bump: b.bump.drop_first()? });
        }
        Some(SmoothFn::new(self.poly.compose(&subs), bumps))
    }

    /// Upper bound of |f| and of |∇f| (Euclidean) on the box `Π[lo_i, hi_i]`.
    pub fn bounds_on_box(&self, lo: &[f64], hi: &[f64]) -> (f64, f64) {
        let radii: Vec<f64> = lo.iter().zip(hi).map(|(a, b)| a.abs().max(b.abs())).collect();
        let mut val = self.poly.abs_bound(&radii);
        let mut grad2 = 0.0;
        let dps: Vec<Poly> = (0..self.nvars).map(|i| self.poly.deriv(i)).collect();
        let mut gcomp: Vec<f64> = dps.iter().map(|d| d.abs_bound(&radii)).collect();
        for t in &self.bumps {
            let q = t.coeff.abs_bound(&radii);
            val += q;
            // max |∇b| of the profile is below 2/r
            let r = t.bump.fr2.sqrt();
            for (i, g) in gcomp.iter_mut().enumerate() {
                *g += t.coeff.deriv(i).abs_bound(&radii) + q * 2.0 / r;
            }
        }
        for g in &gcomp {
            grad2 += g * g;
        }
        (val, grad2.sqrt())
    }
}

impl fmt::Display for SmoothFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut wrote = false;
        if !self.poly.is_zero() || self.bumps.is_empty() {
            write!(f, "{}", self.poly)?;
            wrote = true;
        }
        for t in &self.bumps {
            if wrote {
                write!(f, " + ")?;
            }
            let c: Vec<String> =
                t.bump.center.iter().map(|c| c.as_ref().map_or("_".to_string(), fmt_rat)).collect();
            write!(f, "({})*bump({}; {})", t.coeff, fmt_rat(&t.bump.radius), c.join(", "))?;
            wrote = true;
        }
        Ok(())
    }
}

/// Vector-valued smooth map `R^n → R^m`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SmoothMap {
    domain_dim: usize,
    comps: Vec<SmoothFn>,
}

impl SmoothMap {
    pub fn new(domain_dim: usize, comps: Vec<SmoothFn>) -> Self {
        for c in &comps {
            assert_eq!(c.nvars(), domain_dim, "component arity mismatch");
        }
        SmoothMap { domain_dim, comps }
    }

    pub fn from_polys(domain_dim: usize, polys: Vec<Poly>) -> Self {
        Self::new(domain_dim, polys.into_iter().map(SmoothFn::from).collect())
    }

    pub fn identity(n: usize) -> Self {
        Self::from_polys(n, (0..n).map(|i| Poly::var(n, i)).collect())
    }

    pub fn zero(n: usize, m: usize) -> Self {
        Self::from_polys(n, vec![Poly::zero(n); m])
    }

    pub fn parse(domain_dim: usize, comps: &[String]) -> Result<Self> {
        let c = comps.iter().map(|s| parse_smooth(s, domain_dim)).collect::<Result<Vec<_>>>()?;
        Ok(Self::new(domain_dim, c))
    }

    pub fn to_strings(&self) -> Vec<String> {
        self.comps.iter().map(|c| c.to_string()).collect()
    }

    pub fn domain_dim(&self) -> usize {
        self.domain_dim
    }

    pub fn codomain_dim(&self) -> usize {
        self.comps.len()
    }

    pub fn comps(&self) -> &[SmoothFn] {
        &self.comps
    }

    pub fn is_polynomial(&self) -> bool {
        self.comps.iter().all(|c| c.is_polynomial())
    }

    pub fn polys(&self) -> Option<Vec<Poly>> {
        self.is_polynomial().then(|| self.comps.iter().map(|c| c.poly().clone()).collect())
    }

    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        self.comps.iter().map(|c| c.eval(x)).collect()
    }

    pub fn eval_rat(&self, x: &[Rat]) -> Option<Vec<Rat>> {
        self.comps.iter().map(|c| c.eval_rat(x)).collect()
    }

    pub fn jacobian(&self, x: &[f64]) -> DMatrix<f64> {
        let m = self.comps.len();
        let mut j = DMatrix::zeros(m, self.domain_dim);
        for (r, c) in self.comps.iter().enumerate() {
            for (k, g) in c.grad(x).into_iter().enumerate() {
                j[(r, k)] = g;
            }
        }
        j
    }

    /// `self ∘ inner`, exact when `self` is polynomial and `inner` is polynomial.
    pub fn compose(&self, inner: &SmoothMap) -> Option<SmoothMap> {
        assert_eq!(inner.codomain_dim(), self.domain_dim);
        let subs = inner.polys()?;
        let comps = self
            .comps
            .iter()
            .map(|c| c.compose_poly(&subs))
            .collect::<Option<Vec<_>>>()?;
        Some(SmoothMap::new(inner.domain_dim, comps))
    }

    /// Apply a rational matrix on the left: `x ↦ A·f(x)`.
    pub fn left_mul(&self, a: &crate::linalg::RatMatrix) -> SmoothMap {
        assert_eq!(a.cols(), self.codomain_dim());
        let comps = (0..a.rows())
            .map(|r| {
                let mut acc = SmoothFn::zero(self.domain_dim);
                for c in 0..a.cols() {
                    let e = a.get(r, c);
                    if !e.is_zero() {
                        acc = acc.add(&self.comps[c].scale(e));
                    }
                }
                acc
            })
            .collect();
        SmoothMap::new(self.domain_dim, comps)
    }

    pub fn sub(&self, o: &SmoothMap) -> SmoothMap {
        assert_eq!(self.codomain_dim(), o.codomain_dim());
        let comps = self.comps.iter().zip(&o.comps).map(|(a, b)| a.sub(b)).collect();
        SmoothMap::new(self.domain_dim, comps)
    }

    pub fn relabel(&self, n: usize, map: &[usize]) -> SmoothMap {
        SmoothMap::new(n, self.comps.iter().map(|c| c.relabel(n, map)).collect())
    }

    pub fn fix_first(&self, t: &Rat) -> Option<SmoothMap> {
        let comps = self.comps.iter().map(|c| c.fix_first(t)).collect::<Option<Vec<_>>>()?;
        Some(SmoothMap::new(self.domain_dim - 1, comps))
    }

    /// Prepend one untouched coordinate: `(t, x) ↦ (t, f(x))` if `keep_t`,
    /// else `(t, x) ↦ f(x)`.
    pub fn product_with_interval(&self, keep_t: bool) -> SmoothMap {
        let n = self.domain_dim + 1;
        let map: Vec<usize> = (1..n).collect();
        let mut comps: Vec<SmoothFn> = Vec::new();
        if keep_t {
            comps.push(Poly::var(n, 0).into());
        }
        comps.extend(self.comps.iter().map(|c| c.relabel(n, &map)));
        SmoothMap::new(n, comps)
    }

    pub fn component(&self, i: usize) -> &SmoothFn {
        &self.comps[i]
    }
}

// ---------------------------------------------------------------------------
// parser

struct Parser<'a> {
    s: &'a [u8],
    pos: usize,
    nvars: usize,
}

/// Parse one component string in variables `x1..xn`.
///
/// Grammar: rational literals (`3`, `1/2`, `0.25`), `+ - *`, integer `^`,
/// variables `x<k>`, parentheses, and the bump factor
/// `bump(r; c1, ..., cn)`, where a centre entry `_` marks a coordinate the
/// bump ignores.
pub fn parse_smooth(s: &str, nvars: usize) -> Result<SmoothFn> {
    let mut p = Parser { s: s.as_bytes(), pos: 0, nvars };
    let v = p.expr()?;
    p.ws();
    if p.pos != p.s.len() {
        return Err(Error::Parse(format!("trailing input at {} in {:?}", p.pos, s)));
    }
    Ok(v)
}

pub fn parse_poly(s: &str, nvars: usize) -> Result<Poly> {
    let f = parse_smooth(s, nvars)?;
    if !f.is_polynomial() {
        return Err(Error::Parse(format!("bump term not allowed here: {s}")));
    }
    Ok(f.poly().clone())
}

impl<'a> Parser<'a> {
    fn ws(&mut self) {
        while self.pos < self.s.len() && (self.s[self.pos] as char).is_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.ws();
        self.s.get(self.pos).copied()
    }

    fn err<T>(&self, msg: &str) -> Result<T> {
        Err(Error::Parse(format!(
            "{msg} at {} in {:?}",
            self.pos,
            String::from_utf8_lossy(self.s)
        )))
    }

    fn expr(&mut self) -> Result<SmoothFn> {
        let mut acc = self.term()?;
        loop {
            match self.peek() {
                Some(b'+') => {
                    self.pos += 1;
                    acc = acc.add(&self.term()?);
                }
                Some(b'-') => {
                    self.pos += 1;
                    acc = acc.sub(&self.term()?);
                }
                _ => return Ok(acc),
            }
        }
    }

    fn term(&mut self) -> Result<SmoothFn> {
        let mut acc = self.unary()?;
        while self.peek() == Some(b'*') {
            self.pos += 1;
            let rhs = self.unary()?;
            acc = acc.mul(&rhs)?;
        }
        Ok(acc)
    }

    fn unary(&mut self) -> Result<SmoothFn> {
        match self.peek() {
            Some(b'-') => {
                self.pos += 1;
                Ok(self.unary()?.neg())
            }
            Some(b'+') => {
                self.pos += 1;
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<SmoothFn> {
        let base = self.atom()?;
        if self.peek() == Some(b'^') {
            self.pos += 1;
            self.ws();
            let start = self.pos;
            while self.pos < self.s.len() && self.s[self.pos].is_ascii_digit() {
                self.pos += 1;
            }
            if start == self.pos {
                return self.err("expected integer exponent");
            }
            let k: u32 = std::str::from_utf8(&self.s[start..self.pos]).unwrap().parse().unwrap();
            return base.pow(k);
        }
        Ok(base)
    }

    fn number_text(&mut self) -> Result<String> {
        self.ws();
        let start = self.pos;
        let mut seen_e = false;
        while self.pos < self.s.len() {
            let c = self.s[self.pos];
            let ok = c.is_ascii_digit()
                || c == b'.'
                || ((c == b'e' || c == b'E') && !seen_e && self.pos > start)
                || ((c == b'-' || c == b'+')
                    && self.pos > start
                    && matches!(self.s[self.pos - 1], b'e' | b'E'));
            if !ok {
                break;
            }
            if c == b'e' || c == b'E' {
                seen_e = true;
            }
            self.pos += 1;
        }
        if start == self.pos {
            return self.err("expected number");
        }
        let mut text = String::from_utf8(self.s[start..self.pos].to_vec()).unwrap();
        // rational literal a/b binds tighter than everything else
        if self.pos < self.s.len() && self.s[self.pos] == b'/' {
            self.pos += 1;
            let ds = self.pos;
            while self.pos < self.s.len() && self.s[self.pos].is_ascii_digit() {
                self.pos += 1;
            }
            if ds == self.pos {
                return self.err("expected denominator");
            }
            text.push('/');
            text.push_str(std::str::from_utf8(&self.s[ds..self.pos]).unwrap());
        }
        Ok(text)
    }

    fn signed_number(&mut self) -> Result<Rat> {
        let neg = if self.peek() == Some(b'-') {
            self.pos += 1;
            true
        } else {
            false
        };
        let r = parse_rat(&self.number_text()?)?;
        Ok(if neg { -r } else { r })
    }

    fn centre_entry(&mut self) -> Result<Option<Rat>> {
        if self.peek() == Some(b'_') {
            self.pos += 1;
            return Ok(None);
        }
        self.signed_number().map(Some)
    }

    fn atom(&mut self) -> Result<SmoothFn> {
        match self.peek() {
            Some(b'(') => {
                self.pos += 1;
                let v = self.expr()?;
                if self.peek() != Some(b')') {
                    return self.err("expected ')'");
                }
                self.pos += 1;
                Ok(v)
            }
            Some(b'x') => {
                self.pos += 1;
                let start = self.pos;
                while self.pos < self.s.len() && self.s[self.pos].is_ascii_digit() {
                    self.pos += 1;
                }
                if start == self.pos {
                    return self.err("expected variable index");
                }
                let k: usize = std::str::from_utf8(&self.s[start..self.pos]).unwrap().parse().unwrap();
                if k == 0 || k > self.nvars {
                    return self.err(&format!("variable x{k} out of range 1..{}", self.nvars));
                }
                Ok(Poly::var(self.nvars, k - 1).into())
            }
            Some(b'b') => {
                if !self.s[self.pos..].starts_with(b"bump") {
                    return self.err("unknown identifier");
                }
                self.pos += 4;
                if self.peek() != Some(b'(') {
                    return self.err("expected '(' after bump");
                }
                self.pos += 1;
                let r = self.signed_number()?;
                if self.peek() != Some(b';') {
                    return self.err("expected ';' after bump radius");
                }
                self.pos += 1;
                let mut c = Vec::new();
                if self.peek() != Some(b')') {
                    c.push(self.centre_entry()?);
                    while self.peek() == Some(b',') {
                        self.pos += 1;
                        c.push(self.centre_entry()?);
                    }
                }
                if self.peek() != Some(b')') {
                    return self.err("expected ')' closing bump");
                }
                self.pos += 1;
                if c.len() != self.nvars {
                    return self.err("bump centre has wrong dimension");
                }
                let bump = Bump::new(c, r)?;
                Ok(SmoothFn::new(
                    Poly::zero(self.nvars),
                    vec![BumpTerm { coeff: Poly::one(self.nvars), bump }],
                ))
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => {
                let r = parse_rat(&self.number_text()?)?;
                Ok(Poly::constant(self.nvars, r).into())
            }
            _ => self.err("unexpected token"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly::{rat, ratio};

    #[test]
    fn parse_and_print_roundtrip() {
        let f = parse_smooth("(x1^2 - 1)*x1^2", 1).unwrap();
        assert_eq!(f.to_string(), "x1^4 - x1^2");
        let g = parse_smooth("1/2*x1*x2 - 3 + x2^2", 2).unwrap();
        let again = parse_smooth(&g.to_string(), 2).unwrap();
        assert_eq!(g, again);
    }

    #[test]
    fn bump_terms_parse_and_vanish_outside() {
        let f = parse_smooth("x1 + 2*x1*bump(1/2; 1)", 1).unwrap();
        assert_eq!(f.bumps().len(), 1);
        assert_eq!(f.eval(&[3.0]), 3.0);
        // at the centre the profile is 1
        assert!((f.eval(&[1.0]) - 3.0).abs() < 1e-15);
        let again = parse_smooth(&f.to_string(), 1).unwrap();
        assert_eq!(f, again);
    }

    #[test]
    fn bump_product_rejected() {
        assert!(parse_smooth("bump(1; 0)*bump(1; 0)", 1).is_err());
        assert!(parse_smooth("bump(1; 0)^2", 1).is_err());
        assert!(parse_smooth("bump(0; 0)", 1).is_err());
        assert!(parse_smooth("x3", 2).is_err());
    }

    #[test]
    fn gradient_matches_central_difference() {
        let f = parse_smooth("x1^3*x2 + (x1 - x2)*bump(2; 1/4, -1/2)", 2).unwrap();
        let x = [0.3, -0.1];
        let g = f.grad(&x);
        let h = 1e-6;
        for i in 0..2 {
            let mut a = x;
            let mut b = x;
            a[i] += h;
            b[i] -= h;
            let fd = (f.eval(&a) - f.eval(&b)) / (2.0 * h);
            assert!((fd - g[i]).abs() < 1e-7, "component {i}: {fd} vs {}", g[i]);
        }
    }

    #[test]
    fn canonical_merge_of_equal_bumps() {
        let a = parse_smooth("x1*bump(1; 0) + bump(1; 0) - x1*bump(1; 0)", 1).unwrap();
        let b = parse_smooth("bump(1; 0)", 1).unwrap();
        assert_eq!(a, b);
        let z = parse_smooth("bump(1; 0) - bump(1; 0)", 1).unwrap();
        assert!(z.is_zero());
    }

    #[test]
    fn jacobian_of_planar_map() {
        let m = SmoothMap::parse(2, &["x1^2 - x2^2 - 1/4".into(), "2*x1*x2".into()]).unwrap();
        let j = m.jacobian(&[0.5, 0.0]);
        assert_eq!(j[(0, 0)], 1.0);
        assert_eq!(j[(1, 1)], 1.0);
        assert_eq!(j[(0, 1)], 0.0);
        assert_eq!(m.eval_rat(&[ratio(1, 2), rat(0)]).unwrap(), vec![rat(0), rat(0)]);
    }

    #[test]
    fn cylindrical_bump_ignores_marked_coordinate() {
        let f = parse_smooth("x2*bump(1/2; _, 0)", 2).unwrap();
        assert_eq!(f.eval(&[5.0, 0.25]), f.eval(&[-3.0, 0.25]));
        let g = f.fix_first(&rat(7)).unwrap();
        assert_eq!(g.to_string(), parse_smooth("x1*bump(1/2; 0)", 1).unwrap().to_string());
        assert_eq!(parse_smooth(&f.to_string(), 2).unwrap(), f);
    }

    #[test]
    fn negative_literals_in_bump_centre() {
        let f = parse_smooth("bump(1.5; -2)", 1).unwrap();
        assert_eq!(f.bumps()[0].bump.center()[0], Some(rat(-2)));
        assert_eq!(f.eval(&[-2.0]), 1.0);
    }
}
