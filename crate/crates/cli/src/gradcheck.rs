use anyhow::{bail, Result};

use genctl::selftest;

pub fn run(graphs: usize, seed: u64) -> Result<()> {
    let results = selftest::run(graphs, seed)?;
    let mut failed = 0;
    for r in &results {
        let verdict = if r.passed() { "ok" } else { "FAIL" };
        println!("{:<32} max rel err {:.3e}  {verdict}", r.name, r.max_relative_error);
        failed += usize::from(!r.passed());
    }
    if failed > 0 {
        bail!("{failed} of {} gradient checks exceeded {:e}", results.len(), selftest::TOLERANCE);
    }
    println!("all {} gradient checks within {:e}", results.len(), selftest::TOLERANCE);
    Ok(())
}
