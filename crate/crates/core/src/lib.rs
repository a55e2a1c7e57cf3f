pub mod contact;
pub mod criteria;
pub mod dsl;
pub mod error;
pub mod forms;
pub mod gallery;
pub mod moser;
pub mod norms;
pub mod primitive;
pub mod quadrature;
pub mod report;

pub use error::{Error, Result};
