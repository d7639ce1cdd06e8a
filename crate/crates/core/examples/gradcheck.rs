//! Finite-difference check of every differentiable op, CBAM, WAM and the
//! masked loss.
//!
//!     cargo run --release --example gradcheck

use hisunet::gradsuite::{run_suite, GRADCHECK_TOL};

fn main() -> hisunet::Result<()> {
    let rep = run_suite(&[0, 1, 2, 3, 4], GRADCHECK_TOL)?;
    print!("{}", rep.to_tsv());
    println!(
        "{} checks over {} ops, worst relative error {:.2e}, {:.2} s: {}",
        rep.results.len(),
        rep.ops().len(),
        rep.worst(),
        rep.seconds,
        if rep.passed() { "PASS" } else { "FAIL" }
    );
    Ok(())
}
