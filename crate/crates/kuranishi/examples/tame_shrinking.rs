//! Tame shrinking of the coordinate-change fixture and the strong cocycle
//! check that follows from it.
use kuranishi::atlas::atlas_to_json;
use kuranishi::config::Tolerances;
use kuranishi::fixtures;
use kuranishi::refine::find_tame_shrinking;
use kuranishi::validators::{check_cocycle, check_tameness, CocycleLevel};

fn main() -> anyhow::Result<()> {
    let tol = Tolerances::default();
    let t = find_tame_shrinking(&fixtures::ex_change(), 4, false, 12, 1, &tol)?;
    println!("{}", check_tameness(&t, 12, 2, &tol));
    println!("{}", check_cocycle(&t, CocycleLevel::Strong, 12, 2, &tol));
    println!("{}", atlas_to_json(&t));
    Ok(())
}
