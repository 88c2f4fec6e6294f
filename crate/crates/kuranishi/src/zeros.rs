//! Mesh-seeded damped Newton for square systems.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::linalg::sigma_min;

#[derive(Clone, Debug, PartialEq)]
pub struct ZeroPoint {
    pub x: Vec<f64>,
    pub residual: f64,
    pub sigma_min: f64,
}

/// Accepted residual for a converged zero.
pub const ZERO_RESIDUAL: f64 = 1e-11;

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

/// Least-squares Newton step `J δ = −F` via SVD (handles singular `J`).
fn newton_step(j: &DMatrix<f64>, f: &[f64]) -> Option<Vec<f64>> {
    let rhs = -DVector::from_column_slice(f);
    let svd = j.clone().svd(true, true);
    let top = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let eps = (top * 1e-14).max(1e-300);
    svd.solve(&rhs, eps).ok().map(|d| d.iter().copied().collect())
}

/// Polish a single seed; returns the end point and its residual.
pub fn newton<F, J>(f: &F, jac: &J, seed: &[f64], max_iter: usize) -> (Vec<f64>, f64)
where
    F: Fn(&[f64]) -> Vec<f64>,
    J: Fn(&[f64]) -> DMatrix<f64>,
{
    let mut x = seed.to_vec();
    let mut fx = f(&x);
    let mut r = norm(&fx);
    for _ in 0..max_iter {
        if r < 1e-15 {
            break;
        }
        let Some(d) = newton_step(&jac(&x), &fx) else { break };
        let mut t = 1.0;
        let mut moved = false;
        for _ in 0..30 {
            let y: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + t * b).collect();
            let fy = f(&y);
            let ry = norm(&fy);
            if ry < r || (ry <= r && ry == 0.0) {
                x = y;
                fx = fy;
                r = ry;
                moved = true;
                break;
            }
            t *= 0.5;
        }
        if !moved {
            break;
        }
    }
    (x, r)
}

/// Regular grid of cell centres (no jitter, so seeding is reproducible
/// without an RNG).
pub fn mesh(lo: &[f64], hi: &[f64], density: usize) -> Vec<Vec<f64>> {
    let n = lo.len();
    if n == 0 {
        return vec![Vec::new()];
    }
    let total = density.pow(n as u32);
    let mut out = Vec::with_capacity(total);
    let mut idx = vec![0usize; n];
    for _ in 0..total {
        out.push(
            (0..n)
                .map(|k| lo[k] + (idx[k] as f64 + 0.5) * (hi[k] - lo[k]) / density as f64)
                .collect(),
        );
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

/// Zeros of `f` inside `inside`, seeded from a mesh of the given boxes.
///
/// Points closer than `tol_id` are merged; clusters around degenerate zeros
/// (σ_min below `1e-3`) are merged at the coarser radius `1e-4` because
/// Newton converges only linearly there.
pub fn find_zeros<F, J, P>(
    f: &F,
    jac: &J,
    inside: &P,
    boxes: &[(Vec<f64>, Vec<f64>)],
    density: usize,
    tol_id: f64,
) -> Vec<ZeroPoint>
where
    F: Fn(&[f64]) -> Vec<f64> + Sync,
    J: Fn(&[f64]) -> DMatrix<f64> + Sync,
    P: Fn(&[f64]) -> bool + Sync,
{
    let mut seeds = Vec::new();
    for (lo, hi) in boxes {
        seeds.extend(mesh(lo, hi, density));
    }
    let found: Vec<Option<ZeroPoint>> = seeds
        .par_iter()
        .map(|s| {
            let (x, r) = newton(f, jac, s, 200);
            if r > ZERO_RESIDUAL || !inside(&x) {
                return None;
            }
            Some(ZeroPoint { sigma_min: sigma_min(&jac(&x)), x, residual: r })
        })
        .collect();
    let mut out: Vec<ZeroPoint> = Vec::new();
    for z in found.into_iter().flatten() {
        let dup = out.iter_mut().find(|o| {
            let rad = if o.sigma_min.min(z.sigma_min) < 1e-3 { 1e-4 } else { tol_id.max(1e-9) };
            norm(&o.x.iter().zip(&z.x).map(|(a, b)| a - b).collect::<Vec<_>>()) < rad
        });
        match dup {
            Some(o) => {
                if z.residual < o.residual {
                    *o = z;
                }
            }
            None => out.push(z),
        }
    }
    out.sort_by(|a, b| a.x.partial_cmp(&b.x).unwrap());
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quartic_roots() {
        let f = |x: &[f64]| vec![x[0].powi(4) - x[0].powi(2)];
        let j = |x: &[f64]| DMatrix::from_element(1, 1, 4.0 * x[0].powi(3) - 2.0 * x[0]);
        let z = find_zeros(&f, &j, &|x: &[f64]| x[0].abs() < 2.0, &[(vec![-2.0], vec![2.0])], 20, 1e-7);
        assert_eq!(z.len(), 3);
        assert!((z[0].x[0] + 1.0).abs() < 1e-12);
        assert!(z[1].x[0].abs() < 1e-4);
        assert!(z[1].sigma_min < 1e-3);
        assert!((z[2].sigma_min - 2.0).abs() < 1e-9);
    }

    #[test]
    fn planar_square_roots() {
        let f = |x: &[f64]| vec![x[0] * x[0] - x[1] * x[1] - 0.25, 2.0 * x[0] * x[1]];
        let j = |x: &[f64]| DMatrix::from_row_slice(2, 2, &[2.0 * x[0], -2.0 * x[1], 2.0 * x[1], 2.0 * x[0]]);
        let z = find_zeros(
            &f,
            &j,
            &|x: &[f64]| x[0].abs() < 2.0 && x[1].abs() < 2.0,
            &[(vec![-2.0, -2.0], vec![2.0, 2.0])],
            20,
            1e-7,
        );
        assert_eq!(z.len(), 2);
        assert!((z[1].x[0] - 0.5).abs() < 1e-12);
    }
}
