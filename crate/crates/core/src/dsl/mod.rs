pub mod expr;
pub mod spec;

pub use expr::{parse_expr, Expr, Node};
pub use spec::{load_form_spec, load_form_spec_file, FormSpec, TermSpec};
