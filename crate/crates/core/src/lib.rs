//! Conley-Zehnder indices, generating functions of symplectic germs and
//! equivariant local Morse homology over prime fields.

pub mod coeff;
pub mod cubical;
pub mod cz;
pub mod equivariant;
pub mod degree;
pub mod error;
pub mod exact;
pub mod field;
pub mod genfunc;
pub mod germ;
pub mod group;
pub mod linalg;
pub mod morse;
pub mod symplectic;

pub use error::{Error, Result};
