//! Existential Graphs (Alpha plus lines of identity) and the logic they denote.
//!
//! Graphs are authored in a small s-expression notation:
//!
//! ```text
//! (sheet (lig x) (spot Man x) (cut (spot Wounded x) (spot Disgraced x)))
//! ```
//!
//! [`eg_to_formula`] reads a graph outside-in: every area becomes the
//! existential closure of the ligatures declared in it over the conjunction of
//! its spots and its negated cuts. Formulas can also be parsed from text
//! ([`parse_formula`]), rendered ([`render_formula`]) and compared either by
//! truth table or by exhaustive search over small finite models.

mod formula;
mod graph;
mod parse;
mod semantics;

pub use formula::{alpha_equivalent, render_formula, Formula, Syntax};
pub use graph::{eg_to_formula, parse_eg, Area, EGraph, Entry, Spot};
pub use parse::{parse_formula, FormulaError};
pub use semantics::{
    distinguishing_valuation, equivalent_bounded, equivalent_propositional, evaluate, Interpretation, SemanticsError,
    Verdict, MAX_PROPOSITIONAL_ATOMS,
};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GraphError {
    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },
    #[error("ligature `{name}` is not declared in an enclosing area")]
    Scope { name: String },
    #[error("ligature `{name}` is declared but never attached to a spot")]
    Dangling { name: String },
    #[error("ligature `{name}` is declared more than once")]
    Redeclared { name: String },
}
