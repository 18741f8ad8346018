//! Dimension conditions for independent selections from families of
//! subspaces, and the solvability tests built on them.
//!
//! A family admits one independent vector per unit of count iff every
//! subfamily spans at least as many dimensions as it demands. Every such
//! inequality is evaluated and recorded, so a verdict always comes with
//! the instance that decided it.

mod dispatch;
mod ledger;
mod transversal;

pub use dispatch::{
    check_problem, check_problem_in, count_splits, fmt_lambda, ComplexSplit, SolvabilityReport, SplitOutcome, Stage,
    MAX_CONFIGURATIONS,
};
pub use ledger::{
    check_bounded, check_bounded_with, check_counted, check_counted_with, ConditionLedger, CountedFamily, LedgerEntry,
    Member, WitnessVector, MAX_ENTRIES,
};
pub use transversal::{
    counted_witness, extract_transversal, Transversal, TransversalFamily, TransversalMember, TransversalSet,
    MAX_RETRIES,
};
