//! Search-space definitions, architecture representation, validity scoring,
//! canonical hashing, enumeration and cell-format conversion.

pub mod arch;
pub mod darts;
pub mod enumerate;
pub mod hash;
pub mod random;
pub mod validity;

pub use arch::{Architecture, OperatorVocabulary, SearchSpaceSpec, TopologyMode, INPUT, OUTPUT};
pub use darts::{convert_darts_to_nodes, nb201_space, DartsEdge};
pub use enumerate::enumerate_space;
pub use hash::{canonical_form, canonical_hash, ArchHash};
pub use random::random_architecture;
pub use validity::{validate_cell, ValidityReport};
