//! Deterministic jittered-grid sampling of domains.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::domain::Domain;
use crate::error::{Error, Result};

/// Jittered grid in the box `Π(lo_i, hi_i)` with `density` cells per axis.
///
/// Every returned point lies strictly inside the box. Coordinates are f64
/// values, hence exact dyadic rationals.
pub fn sample_box(lo: &[f64], hi: &[f64], density: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = lo.len();
    if n == 0 {
        return vec![Vec::new()];
    }
    let density = density.max(1);
    let total = density.pow(n as u32);
    let mut out = Vec::with_capacity(total);
    let mut idx = vec![0usize; n];
    for _ in 0..total {
        let mut p = Vec::with_capacity(n);
        for k in 0..n {
            let h = (hi[k] - lo[k]) / density as f64;
            let j: f64 = rng.random_range(-0.4..0.4);
            p.push(lo[k] + (idx[k] as f64 + 0.5 + j) * h);
        }
        out.push(p);
        for k in 0..n {
            idx[k] += 1;
            if idx[k] < density {
                break;
            }
            idx[k] = 0;
        }
    }
    out
}

/// Like [`sample_domain`] but an empty result is not an error.
pub fn sample_domain_opt(d: &Domain, density: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for p in d.pieces() {
        let pts = sample_box(&p.lo_f64(), &p.hi_f64(), density, &mut rng);
        out.extend(pts.into_iter().filter(|x| d.contains(x)));
    }
    out
}

/// Seeded quasi-uniform interior sample of `d`; identical arguments give
/// identical lists.
pub fn sample_domain(d: &Domain, density: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    let pts = sample_domain_opt(d, density, seed);
    if pts.is_empty() {
        return Err(Error::EmptyDomain(format!("no interior samples in {d}")));
    }
    Ok(pts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{Constraint, Piece};
    use crate::poly::rat;
    use crate::smooth::parse_smooth;

    #[test]
    fn unit_interval_density_four() {
        let d = Domain::from_box(vec![rat(0)], vec![rat(1)]);
        let a = sample_domain(&d, 4, 0).unwrap();
        assert_eq!(a.len(), 4);
        assert!(a.iter().all(|p| p[0] > 0.0 && p[0] < 1.0));
        assert_eq!(a, sample_domain(&d, 4, 0).unwrap());
        assert_ne!(a, sample_domain(&d, 4, 1).unwrap());
    }

    #[test]
    fn constraints_filter_samples() {
        let mut p = Piece::new_box(vec![rat(-1)], vec![rat(1)]);
        p.constraints.push(Constraint::new(parse_smooth("x1", 1).unwrap()));
        let d = Domain::new(1, vec![p]);
        let pts = sample_domain(&d, 50, 3).unwrap();
        assert!(pts.iter().all(|x| x[0] > 0.0));
        assert!(pts.len() > 10);
    }

    #[test]
    fn empty_domain_errors() {
        let d = Domain::empty(2);
        assert!(sample_domain(&d, 5, 0).is_err());
        assert!(sample_domain(&Domain::point(), 5, 0).unwrap() == vec![Vec::<f64>::new()]);
    }
}
