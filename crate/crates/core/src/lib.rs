pub mod codec;
pub mod crypto;
pub mod documents;
pub mod engine;
pub mod harness;
pub mod incentives;
pub mod ledger;
pub mod report;
pub mod trace;
