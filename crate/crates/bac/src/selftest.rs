//! Reduced versions of the acceptance suites, quick enough to run by hand.

use std::path::Path;

use bac_core::rl::Variant;

use crate::fixtures;
use crate::suites::{self, SuiteResult};

pub fn run(scratch: &Path) -> Vec<SuiteResult> {
    let mut out = vec![suites::gradients(6, 3, 1, 50, 1), suites::tp_target_law(801), suites::loss_degeneracy(100, 2), suites::env_laws(200, 3)];
    let positions = fixtures::generate(3, 1, 4);
    out.push(suites::mcts_oracle(&positions, 5, 500, 0.8));
    out.push(suites::checkpoint_integrity(scratch));
    out.push(suites::determinism(&scratch.join("determinism"), &suites::quick_run_config(Variant::A3cTp, 5, 42)));
    let mut acct = suites::quick_run_config(Variant::A3c, 40, 5);
    acct.opponent = crate::config::OpponentSpec::Random;
    out.push(suites::outcome_accounting(&scratch.join("accounting"), &acct, 40, 6));
    out
}
