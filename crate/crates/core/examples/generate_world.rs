//! Generates a small synthetic ice world, writes it as SIGD and prints
//! daily summaries of concentration and drift.
//!
//!     cargo run --release --example generate_world -- [out.sigd]

use hisunet::data::sigd;
use hisunet::synth::{gen_world, WorldConfig};

fn main() -> hisunet::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "world_small.sigd".into());
    let cfg = WorldConfig {
        height: 32,
        width: 32,
        n_days: 30,
        seed: 1,
        ..WorldConfig::default()
    };
    let stack = gen_world(&cfg)?;
    sigd::write_stack(&out, &stack)?;
    println!("{} days of {}x{} written to {out}", stack.n_days, stack.height, stack.width);
    println!("{:<12} {:>9} {:>13}", "date", "mean SIC", "mean |drift|");
    for day in (0..stack.n_days).step_by(5) {
        let sic = stack.get(day, "sic").expect("sic");
        let (u, v) = (stack.get(day, "siv_u").expect("u"), stack.get(day, "siv_v").expect("v"));
        let (mut a, mut s, mut n) = (0.0, 0.0, 0);
        for k in 0..sic.values.len() {
            if sic.valid[k] {
                a += f64::from(sic.values[k]);
                s += f64::from(u.values[k]).hypot(f64::from(v.values[k]));
                n += 1;
            }
        }
        println!("{:<12} {:>9.3} {:>9.2} km/d", stack.date(day), a / n as f64, s / n as f64);
    }
    Ok(())
}
