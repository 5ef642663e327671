//! Contract harness for `policykit`.
//!
//! An [`ExperimentSpec`] names a block, a seed and the block's knobs.
//! [`run_block`] executes it into a [`ResultBundle`] of case records and
//! summary tables, which [`emit_report`] renders as JSON, CSV or Markdown.
//!
//! ```no_run
//! use policykit_harness::{run_block, Block, ExperimentSpec};
//!
//! let bundle = run_block(&ExperimentSpec::new(Block::C2, 7)).unwrap();
//! assert!(bundle.passed);
//! ```

mod blocks;
pub mod bundle;
pub mod error;
pub mod report;
pub mod spec;

pub use blocks::run_block;
pub use bundle::{read_bundles, CaseRecord, CaseStatus, Environment, ResultBundle, SummaryTable};
pub use error::{HarnessError, Result};
pub use report::{emit_report, render, ReportFormat};
pub use spec::{
    Block, BlockKnobs, C1Knobs, C2Knobs, E1Knobs, ExperimentSpec, F1Knobs, F2Knobs, F3Knobs, P1Knobs, P2Knobs, S1Knobs,
    S2Knobs, DEFAULT_SEED,
};
