//! Structural verdicts for the bundled fixtures.
use kuranishi::config::Tolerances;
use kuranishi::fixtures;
use kuranishi::realization::build_cloud;
use kuranishi::validators::validate_all;

fn main() -> anyhow::Result<()> {
    let tol = Tolerances::default();
    for name in ["ex-change", "ex-nonlin", "ku30"] {
        let a = fixtures::load(name)?;
        let cloud = build_cloud(&a, 20, 0, tol.tau_id)?;
        println!("{name}");
        for v in validate_all(&a, Some(&cloud), 20, 0, &tol) {
            println!("  {v}");
        }
    }
    Ok(())
}
