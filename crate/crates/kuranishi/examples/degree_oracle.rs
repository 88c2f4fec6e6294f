//! Brute-force degrees of the named global problems.
use kuranishi::generator::{brute_force_degree, problem_by_name, PROBLEMS};

fn main() -> anyhow::Result<()> {
    for name in PROBLEMS {
        let p = problem_by_name(name).expect("named problem");
        println!("{name:<12} {}", brute_force_degree(&p)?);
    }
    Ok(())
}
