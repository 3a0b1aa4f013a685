//! The chapters of `book/` as modules, so `cargo test` runs every code
//! sample in the guide.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/polynomials.md")]
pub mod polynomials {}

#[doc = include_str!("../../../book/src/lattice_rules.md")]
pub mod lattice_rules {}

#[doc = include_str!("../../../book/src/cbc.md")]
pub mod cbc {}

#[doc = include_str!("../../../book/src/random_field.md")]
pub mod random_field {}

#[doc = include_str!("../../../book/src/finite_elements.md")]
pub mod finite_elements {}

#[doc = include_str!("../../../book/src/estimators.md")]
pub mod estimators {}

#[doc = include_str!("../../../book/src/schedules.md")]
pub mod schedules {}

#[doc = include_str!("../../../book/src/studies.md")]
pub mod studies {}
