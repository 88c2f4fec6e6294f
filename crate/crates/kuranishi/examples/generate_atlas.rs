//! Additive atlas for the quartic problem: two point charts, one line
//! chart and two sum charts.
use kuranishi::atlas::atlas_to_json;
use kuranishi::config::Tolerances;
use kuranishi::generator::{generate, load_problem};

fn main() -> anyhow::Result<()> {
    let (problem, plan) = load_problem("quartic")?;
    let a = generate(&problem, &plan, &Tolerances::default())?;
    println!("{}", atlas_to_json(&a));
    Ok(())
}
