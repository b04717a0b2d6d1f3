//! Erasure-coded atomic register protocols (CAS, CASGC, CCOAS) and their
//! replication baselines (ABD, LDR), run over a deterministic simulated
//! network and checked for atomicity, liveness and cost.

pub mod analysis;
pub mod codec;
pub mod harness;
pub mod protocol;
pub mod quorum;
pub mod sim;
pub mod types;
pub mod units;
