pub mod bench;
pub mod collector;
pub mod digest;
pub mod dnswire;
mod hexfmt;
pub mod identity;
pub mod ledger;
pub mod network;
pub mod txflow;
