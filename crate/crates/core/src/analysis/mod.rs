//! Post-hoc verdicts over simulator traces.

pub mod atomicity;
pub mod history;
pub mod ledger;
pub mod linearizability;
pub mod liveness;
pub mod profile;
pub mod report;

pub use atomicity::{check_atomicity, Atomicity};
pub use history::{History, OperationRecord};
pub use ledger::{ledger, theory, CostLedger, Theory};
pub use linearizability::is_linearizable;
pub use liveness::{check_liveness, Liveness};
pub use profile::{concurrency_profile, end_points, supersession_profile};
pub use report::{analyze, Report};
