//! Monthly sea-ice area and wind-speed anomalies of one year against a
//! baseline of the previous years, on a three-year synthetic world.
//!
//!     cargo run --release --example anomaly

use hisunet::eval::{anomaly, monthly_sea_ice_area, monthly_wind_speed};
use hisunet::synth::{gen_world, WorldConfig};

fn main() -> hisunet::Result<()> {
    let world = WorldConfig {
        height: 24,
        width: 24,
        n_days: 3 * 365,
        ..WorldConfig::default()
    };
    let stack = gen_world(&world)?;
    let area = anomaly(&monthly_sea_ice_area(&stack, world.cell_km)?, &[2021, 2022], 2023)?;
    let wind = anomaly(&monthly_wind_speed(&stack)?, &[2021, 2022], 2023)?;
    println!("anomalies of {} against 2021-2022", area.target_year);
    println!("{:>5} {:>16} {:>14}", "month", "SIA (km^2)", "wind (m/s)");
    for (a, w) in area.months.iter().zip(&wind.months) {
        let f = |x: Option<f64>, p: usize| x.map_or("NA".to_string(), |v| format!("{v:+.p$}"));
        println!("{:>5} {:>16} {:>14}", a.month, f(a.scalar, 0), f(w.scalar, 3));
    }
    if !area.gaps.is_empty() {
        println!("months without a baseline or target: {:?}", area.gaps);
    }
    Ok(())
}
