//! Reduction, its separation constant and the σ bound under norm scaling.
use kuranishi::config::Tolerances;
use kuranishi::fixtures;
use kuranishi::realization::build_cloud;
use kuranishi::refine::{compute_sigma, eta0_factor, reduce, ReductionParams};

fn main() -> anyhow::Result<()> {
    let tol = Tolerances::default();
    println!("η_0(1) = {:.15}", eta0_factor());
    let a = fixtures::cubic();
    let cloud = build_cloud(&a, 12, 1, tol.tau_id)?;
    let ctx = reduce(&a, &cloud, &ReductionParams::default())?;
    println!("δ = {}, δ_V = {}, σ = {}", ctx.delta, ctx.delta_v, ctx.sigma);
    for c in [0.5, 2.0, 10.0] {
        let s = compute_sigma(&a, &ctx.with_norms(ctx.norms.scaled(c)))?;
        println!("scale {c}: sampled min {:.6}, bound {:.6}", s.sampled_min, s.bound);
    }
    Ok(())
}
