//! Entropy and large deviations for actions of countable amenable groups,
//! made computable on concrete groups and shift spaces.

pub mod error;
pub mod exact;
pub mod group;
pub mod shift;
pub mod entropy;
pub mod tiling;
pub mod ldp;
pub mod verify;

pub use error::{Error, ErrorKind, Result};
pub use group::{FiniteSubset, FolnerSequence, GroupElement, GroupModel};
