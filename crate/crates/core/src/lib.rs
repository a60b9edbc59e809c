pub mod apbinary;
pub mod arith;
pub mod cli;
pub mod error;
pub mod forms;
pub mod genus;
pub mod localrep;
pub mod pipeline;
pub mod reference;
pub mod regproof;
pub mod sieve;
pub mod watson;

pub use error::{Error, Result};
pub use forms::{BinaryForm, DiagonalForm, GramLattice};
