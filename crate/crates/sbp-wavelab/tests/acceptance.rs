//! Runs every acceptance check at desk scale and prints one PASS or FAIL
//! line per check. The process fails if any check fails.

use sbp_wavelab::config::Settings;
use sbp_wavelab::criteria::{self, TITLES};

fn main() {
    let settings = Settings::default();
    let mut failed = 0;
    for id in 1..=TITLES.len() {
        match criteria::run(id, &settings) {
            Ok(o) => {
                println!("{}", o.line());
                failed += usize::from(!o.passed);
            }
            Err(e) => {
                println!("FAIL {id:>2} {}: error {e:#}", TITLES[id - 1]);
                failed += 1;
            }
        }
    }
    println!("{} of {} acceptance checks passed", TITLES.len() - failed, TITLES.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
