//! Multivariate polynomials with exact rational coefficients.
//!
//! A [`Poly`] is kept in canonical form: a sorted map from exponent vectors
//! to nonzero coefficients. Two polynomials are equal iff their maps agree.
//! A parallel `f64` copy of the coefficients serves fast numerical
//! evaluation.

use std::collections::BTreeMap;
use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};

pub type Rat = BigRational;

pub fn rat(n: i64) -> Rat {
    Rat::from_integer(BigInt::from(n))
}

pub fn ratio(n: i64, d: i64) -> Rat {
    Rat::new(BigInt::from(n), BigInt::from(d))
}

/// Exact conversion of a finite float.
pub fn rat_from_f64(x: f64) -> Rat {
    Rat::from_float(x).unwrap_or_else(Rat::zero)
}

pub fn rat_to_f64(r: &Rat) -> f64 {
    match r.to_f64() {
        Some(v) => v,
        None => {
            // numerator/denominator overflow f64; divide in pieces
            let n = r.numer().to_f64().unwrap_or(f64::NAN);
            let d = r.denom().to_f64().unwrap_or(f64::NAN);
            n / d
        }
    }
}

/// Parse `"3"`, `"-1/3"`, `"0.25"`, `"1e-3"`, `"2.5e2"` into an exact rational.
pub fn parse_rat(s: &str) -> Result<Rat> {
    let s = s.trim();
    if s.is_empty() {
        return Err(Error::Parse("empty number".into()));
    }
    if let Some((a, b)) = s.split_once('/') {
        let n = parse_rat(a)?;
        let d = parse_rat(b)?;
        if d.is_zero() {
            return Err(Error::Parse(format!("zero denominator in {s}")));
        }
        return Ok(n / d);
    }
    let (mantissa, exp) = match s.find(['e', 'E']) {
        Some(i) => {
            let e: i32 = s[i + 1..]
                .parse()
                .map_err(|_| Error::Parse(format!("bad exponent in {s}")))?;
            (&s[..i], e)
        }
        None => (s, 0),
    };
    let (neg, digits) = match mantissa.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, mantissa.strip_prefix('+').unwrap_or(mantissa)),
    };
    let (int_part, frac_part) = digits.split_once('.').unwrap_or((digits, ""));
    if int_part.is_empty() && frac_part.is_empty() {
        return Err(Error::Parse(format!("bad number {s}")));
    }
    if !int_part.chars().chain(frac_part.chars()).all(|c| c.is_ascii_digit()) {
        return Err(Error::Parse(format!("bad number {s}")));
    }
    let all = format!("{int_part}{frac_part}");
    let n: BigInt = if all.is_empty() { BigInt::zero() } else { all.parse().unwrap() };
    let scale = exp - frac_part.len() as i32;
    let ten = BigInt::from(10);
    let mut r = Rat::from_integer(n);
    if scale >= 0 {
        r *= Rat::from_integer(num_traits::pow(ten, scale as usize));
    } else {
        r /= Rat::from_integer(num_traits::pow(ten, (-scale) as usize));
    }
    Ok(if neg { -r } else { r })
}

pub fn fmt_rat(r: &Rat) -> String {
    if r.is_integer() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

#[derive(Clone, Debug)]
pub struct Poly {
    nvars: usize,
    terms: BTreeMap<Vec<u32>, Rat>,
    fterms: Vec<(Vec<u32>, f64)>,
}

impl PartialEq for Poly {
    fn eq(&self, other: &Self) -> bool {
        self.nvars == other.nvars && self.terms == other.terms
    }
}
impl Eq for Poly {}

impl Poly {
    fn from_map(nvars: usize, mut terms: BTreeMap<Vec<u32>, Rat>) -> Self {
        terms.retain(|_, c| !c.is_zero());
        let fterms = terms.iter().map(|(e, c)| (e.clone(), rat_to_f64(c))).collect();
        Poly { nvars, terms, fterms }
    }

    pub fn zero(nvars: usize) -> Self {
        Self::from_map(nvars, BTreeMap::new())
    }

    pub fn constant(nvars: usize, c: Rat) -> Self {
        let mut m = BTreeMap::new();
        m.insert(vec![0; nvars], c);
        Self::from_map(nvars, m)
    }

    pub fn one(nvars: usize) -> Self {
        Self::constant(nvars, Rat::one())
    }

    /// The coordinate function `x_{i+1}` (zero-based `i`).
    pub fn var(nvars: usize, i: usize) -> Self {
        assert!(i < nvars, "variable index out of range");
        let mut e = vec![0; nvars];
        e[i] = 1;
        let mut m = BTreeMap::new();
        m.insert(e, Rat::one());
        Self::from_map(nvars, m)
    }

    pub fn from_terms(nvars: usize, terms: impl IntoIterator<Item = (Vec<u32>, Rat)>) -> Self {
        let mut m: BTreeMap<Vec<u32>, Rat> = BTreeMap::new();
        for (e, c) in terms {
            assert_eq!(e.len(), nvars);
            *m.entry(e).or_insert_with(Rat::zero) += c;
        }
        Self::from_map(nvars, m)
    }

    /// Affine polynomial `c + Σ a_i x_i`.
    pub fn affine(c: Rat, a: &[Rat]) -> Self {
        let n = a.len();
        let mut p = Poly::constant(n, c);
        for (i, ai) in a.iter().enumerate() {
            p = p.add(&Poly::var(n, i).scale(ai));
        }
        p
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Vec<u32>, &Rat)> {
        self.terms.iter()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn degree(&self) -> u32 {
        self.terms.keys().map(|e| e.iter().sum()).max().unwrap_or(0)
    }

    pub fn as_constant(&self) -> Option<Rat> {
        match self.terms.len() {
            0 => Some(Rat::zero()),
            1 => {
                let (e, c) = self.terms.iter().next().unwrap();
                e.iter().all(|&k| k == 0).then(|| c.clone())
            }
            _ => None,
        }
    }

    /// Linear part `(c, a)` if the polynomial has degree at most one.
    pub fn as_affine(&self) -> Option<(Rat, Vec<Rat>)> {
        if self.degree() > 1 {
            return None;
        }
        let mut c = Rat::zero();
        let mut a = vec![Rat::zero(); self.nvars];
        for (e, v) in &self.terms {
            match e.iter().position(|&k| k == 1) {
                Some(i) => a[i] = v.clone(),
                None => c = v.clone(),
            }
        }
        Some((c, a))
    }

    pub fn add(&self, other: &Poly) -> Poly {
        assert_eq!(self.nvars, other.nvars, "variable count mismatch");
        let mut m = self.terms.clone();
        for (e, c) in &other.terms {
            *m.entry(e.clone()).or_insert_with(Rat::zero) += c;
        }
        Self::from_map(self.nvars, m)
    }

    pub fn neg(&self) -> Poly {
        let m = self.terms.iter().map(|(e, c)| (e.clone(), -c)).collect();
        Self::from_map(self.nvars, m)
    }

    pub fn sub(&self, other: &Poly) -> Poly {
        self.add(&other.neg())
    }

    pub fn scale(&self, s: &Rat) -> Poly {
        let m = self.terms.iter().map(|(e, c)| (e.clone(), c * s)).collect();
        Self::from_map(self.nvars, m)
    }

    pub fn mul(&self, other: &Poly) -> Poly {
        assert_eq!(self.nvars, other.nvars, "variable count mismatch");
        let mut m: BTreeMap<Vec<u32>, Rat> = BTreeMap::new();
        for (e1, c1) in &self.terms {
            for (e2, c2) in &other.terms {
                let e: Vec<u32> = e1.iter().zip(e2).map(|(a, b)| a + b).collect();
                *m.entry(e).or_insert_with(Rat::zero) += c1 * c2;
            }
        }
        Self::from_map(self.nvars, m)
    }

    pub fn pow(&self, k: u32) -> Poly {
        let mut acc = Poly::one(self.nvars);
        let mut base = self.clone();
        let mut k = k;
        while k > 0 {
            if k & 1 == 1 {
                acc = acc.mul(&base);
            }
            k >>= 1;
            if k > 0 {
                base = base.mul(&base);
            }
        }
        acc
    }

    pub fn deriv(&self, i: usize) -> Poly {
        let mut m = BTreeMap::new();
        for (e, c) in &self.terms {
            if e[i] > 0 {
                let mut e2 = e.clone();
                e2[i] -= 1;
                m.insert(e2, c * rat(e[i] as i64));
            }
        }
        Self::from_map(self.nvars, m)
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.nvars);
        let mut s = 0.0;
        for (e, c) in &self.fterms {
            let mut t = *c;
            for (xi, &k) in x.iter().zip(e) {
                if k > 0 {
                    t *= xi.powi(k as i32);
                }
            }
            s += t;
        }
        s
    }

    pub fn eval_rat(&self, x: &[Rat]) -> Rat {
        let mut s = Rat::zero();
        for (e, c) in &self.terms {
            let mut t = c.clone();
            for (xi, &k) in x.iter().zip(e) {
                if k > 0 {
                    t *= num_traits::pow(xi.clone(), k as usize);
                }
            }
            s += t;
        }
        s
    }

    /// Substitute `x_i ↦ subs[i]`; all substitutes share one variable count.
    pub fn compose(&self, subs: &[Poly]) -> Poly {
        assert_eq!(subs.len(), self.nvars, "substitution arity mismatch");
        let m = subs.first().map(|p| p.nvars).unwrap_or(0);
        let mut cache: BTreeMap<(usize, u32), Poly> = BTreeMap::new();
        let mut out = Poly::zero(m);
        for (e, c) in &self.terms {
            let mut t = Poly::constant(m, c.clone());
            for (i, &k) in e.iter().enumerate() {
                if k > 0 {
                    let p = cache.entry((i, k)).or_insert_with(|| subs[i].pow(k)).clone();
                    t = t.mul(&p);
                }
            }
            out = out.add(&t);
        }
        out
    }

    /// Re-embed into `n` variables, sending variable `i` to `map[i]`.
    pub fn relabel(&self, n: usize, map: &[usize]) -> Poly {
        let terms = self.terms.iter().map(|(e, c)| {
            let mut e2 = vec![0; n];
            for (i, &k) in e.iter().enumerate() {
                e2[map[i]] += k;
            }
            (e2, c.clone())
        });
        Poly::from_terms(n, terms)
    }

    /// Sum of absolute coefficient values; bounds |p| on the unit cube.
    pub fn coeff_l1(&self) -> f64 {
        self.fterms.iter().map(|(_, c)| c.abs()).sum()
    }

    /// Upper bound for |p| on the box `Π [-R_i, R_i]`.
    pub fn abs_bound(&self, radii: &[f64]) -> f64 {
        self.fterms
            .iter()
            .map(|(e, c)| {
                let mut t = c.abs();
                for (r, &k) in radii.iter().zip(e) {
                    t *= r.powi(k as i32);
                }
                t
            })
            .sum()
    }
}

fn fmt_monomial(e: &[u32]) -> String {
    let mut parts = Vec::new();
    for (i, &k) in e.iter().enumerate() {
        match k {
            0 => {}
            1 => parts.push(format!("x{}", i + 1)),
            _ => parts.push(format!("x{}^{}", i + 1, k)),
        }
    }
    parts.join("*")
}

impl fmt::Display for Poly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        // highest total degree first, reads naturally
        let mut items: Vec<_> = self.terms.iter().collect();
        items.sort_by(|a, b| {
            let da: u32 = a.0.iter().sum();
            let db: u32 = b.0.iter().sum();
            db.cmp(&da).then_with(|| b.0.cmp(a.0))
        });
        for (idx, (e, c)) in items.into_iter().enumerate() {
            let neg = c.is_negative();
            let a = c.abs();
            let mono = fmt_monomial(e);
            let body = if mono.is_empty() {
                fmt_rat(&a)
            } else if a.is_one() {
                mono
            } else {
                format!("{}*{}", fmt_rat(&a), mono)
            };
            match (idx, neg) {
                (0, false) => write!(f, "{body}")?,
                (0, true) => write!(f, "-{body}")?,
                (_, false) => write!(f, " + {body}")?,
                (_, true) => write!(f, " - {body}")?,
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn x(n: usize, i: usize) -> Poly {
        Poly::var(n, i)
    }

    #[test]
    fn parse_numbers() {
        assert_eq!(parse_rat("3").unwrap(), rat(3));
        assert_eq!(parse_rat("-1/3").unwrap(), ratio(-1, 3));
        assert_eq!(parse_rat("0.25").unwrap(), ratio(1, 4));
        assert_eq!(parse_rat("1e-3").unwrap(), ratio(1, 1000));
        assert_eq!(parse_rat("2.5e2").unwrap(), rat(250));
        assert!(parse_rat("1/0").is_err());
        assert!(parse_rat("abc").is_err());
    }

    #[test]
    fn quartic_derivative_matches_hand_value() {
        let p = x(1, 0).pow(4).sub(&x(1, 0).pow(2));
        let dp = p.deriv(0);
        // 4x^3 - 2x at 1 is 2
        assert_eq!(dp.eval_rat(&[rat(1)]), rat(2));
        assert_eq!(dp.eval(&[0.0]), 0.0);
        assert_eq!(p.to_string(), "x1^4 - x1^2");
    }

    #[test]
    fn compose_with_inclusion() {
        // s12(x,y) = ((x^2-1)x^2, y) composed with (x, 0)
        let a = x(2, 0);
        let s1 = a.pow(2).sub(&Poly::one(2)).mul(&a.pow(2));
        let phi = [x(1, 0), Poly::zero(1)];
        let c = s1.compose(&phi);
        let expect = x(1, 0).pow(2).sub(&Poly::one(1)).mul(&x(1, 0).pow(2));
        assert_eq!(c, expect);
        assert!(x(2, 1).compose(&phi).is_zero());
    }

    #[test]
    fn canonical_form_cancels() {
        let p = x(2, 0).add(&x(2, 1)).sub(&x(2, 0));
        assert_eq!(p, x(2, 1));
        assert_eq!(p.degree(), 1);
        assert_eq!(Poly::zero(3).to_string(), "0");
    }

    #[test]
    fn affine_roundtrip() {
        let p = Poly::affine(ratio(1, 2), &[rat(2), rat(0), rat(-1)]);
        let (c, a) = p.as_affine().unwrap();
        assert_eq!(c, ratio(1, 2));
        assert_eq!(a, vec![rat(2), rat(0), rat(-1)]);
        assert!(x(1, 0).pow(2).as_affine().is_none());
    }
}
