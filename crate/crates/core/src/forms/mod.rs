pub mod basis;
pub mod fields;
pub mod kform;
pub mod ops;

pub use basis::{binomial, Basis, MultiIndex};
pub use fields::{SmoothMap, VectorField};
pub use kform::{KForm, SymbolicCoeffs, TimeForm};
pub use ops::{
    exterior_derivative, interior_product, pullback, smallest_singular_value, two_form_inverse, wedge,
    DerivativeScheme, DEFAULT_TOL_SINGULAR,
};
