pub mod analysis;
pub mod cli;
pub mod corpus;
pub mod error;
pub mod inference;
pub mod logic;
pub mod mitigation;
pub mod numeric;
pub mod train;

pub use error::{Error, Result};
