//! Adapted perturbation of the tamed coordinate-change fixture and its
//! a–e ledger.
use kuranishi::config::Tolerances;
use kuranishi::fixtures;
use kuranishi::perturb::{build_adapted, verify_adapted, BuildOptions};
use kuranishi::realization::build_cloud;
use kuranishi::refine::{find_tame_shrinking, reduce, ReductionParams};

fn main() -> anyhow::Result<()> {
    let tol = Tolerances::default();
    let t = find_tame_shrinking(&fixtures::ex_change(), 4, false, 12, 1, &tol)?;
    let cloud = build_cloud(&t, 12, 1, tol.tau_id)?;
    let ctx = reduce(&t, &cloud, &ReductionParams::default())?;
    let p = build_adapted(&t, &ctx, 7, &tol, &BuildOptions::default())?;
    for v in verify_adapted(&t, &ctx, &p, 8, &tol)?.verdicts {
        println!("{v}");
    }
    println!("{}", serde_json::to_string_pretty(&p)?);
    Ok(())
}
