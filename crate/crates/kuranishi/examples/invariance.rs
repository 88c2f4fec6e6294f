//! Count invariance over seeds, reductions and norm scalings, with a
//! product concordance between two perturbations.
use kuranishi::config::Tolerances;
use kuranishi::fixtures;
use kuranishi::realization::build_cloud;
use kuranishi::refine::find_tame_shrinking;
use kuranishi::vfc::{invariance_check, InvarianceOptions};

fn main() -> anyhow::Result<()> {
    let tol = Tolerances::default();
    let t = find_tame_shrinking(&fixtures::ex_change(), 4, false, 12, 1, &tol)?;
    let cloud = build_cloud(&t, 12, 1, tol.tau_id)?;
    let r = invariance_check(&t, &cloud, &InvarianceOptions::default(), &tol)?;
    for run in &r.runs {
        println!("seed {} {:<11} scale {}: {:?}", run.seed, run.reduction, run.norm_scale, run.count);
    }
    println!("concordance: {:?}", r.concordance);
    println!("{}", r.verdict);
    Ok(())
}
