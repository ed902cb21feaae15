//! Prints the leakage demonstration table for the default synthetic cohort.

use cohortsplit_core::demo::{run_demo, DemoSettings};

fn main() {
    let report = run_demo(&DemoSettings::default(), true).expect("default demo runs");
    print!("{}", report.to_table());
}
