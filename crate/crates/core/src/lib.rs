//! Aggregate active-power flexibility of unbalanced distribution feeders
//! under worst-case DER behaviour.

pub mod cli;
pub mod feeder;
pub mod flex;
pub mod oracle;
pub mod lp;
pub mod powerflow;
pub mod ybus;
