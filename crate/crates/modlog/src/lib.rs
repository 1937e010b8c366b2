//! A module system over stratified logic programs for building and composing
//! domain-specific languages.
//!
//! Source files declare four module kinds: *domains* (ADTs, rules, and
//! `conforms` clauses), *models* (well-typed ground facts over a domain),
//! *transforms* (logic programs from input models to output models with
//! `requires`/`ensures` contracts), and *transform systems* (dependency-
//! ordered pipelines of transform applications). The engine elaborates
//! modules into symbol tables and stratified rules, evaluates them
//! bottom-up to a fixpoint of the implicit unary program relation, checks
//! conformance and contracts, and extracts output models.

pub mod cli;
pub mod diag;
pub mod engine;
pub mod frontend;
pub mod loader;
pub mod modsys;
pub mod symtab;
pub mod transform;
pub mod types;
