//! One line per acceptance criterion; exits nonzero if any criterion is red.

use std::process::ExitCode;
use std::time::Instant;

use fgenus::selftest;

fn main() -> ExitCode {
    let mut red = Vec::new();
    for id in 1..=9 {
        let start = Instant::now();
        let check = selftest::run(id);
        println!("{} [{:.1}s]", check.line(), start.elapsed().as_secs_f64());
        if !check.passed {
            red.push(id);
        }
    }
    if red.is_empty() {
        println!("acceptance: 9/9 criteria pass");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: failing criteria {red:?}");
        ExitCode::FAILURE
    }
}
