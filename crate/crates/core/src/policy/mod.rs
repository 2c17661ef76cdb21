//! The money-policy language.
//!
//! A policy is an ordered list of deontic rules:
//!
//! ```text
//! OBLIGATION ON RECEIVE IF category == "sale" DO PAY 2000bp TO "tax_authority";
//! PROHIBITION ON TRANSFER_REQUEST IF category == "weapons" AND licence == NONE;
//! OBLIGATION ON TICK IF now > last_contact + 360 DO ZEROISE, NOTIFY "government";
//! ```
//!
//! [`parse`] builds a [`PolicyProgram`], [`check`] validates it into a
//! [`CheckedPolicy`], and [`evaluate`] turns a checked policy, an event and an
//! [`EvalContext`] into a [`Decision`]. Everything here is pure.

mod ast;
mod check;
mod eval;
mod lexer;
mod parser;

pub use ast::{
    Action, CmpOp, Comparison, Condition, EventKind, Field, Fraction, Operand, PolicyProgram,
    Rule, RuleKind,
};
pub use check::{check, CheckError, CheckedPolicy};
pub use eval::{evaluate, Decision, EvalContext, ForbidCause, Obligation, Verdict};
pub use parser::{parse, ParseError};

use crate::crypto::Digest64;

/// Canonical text of a program: single spaces between tokens, one rule per
/// line, each rule terminated by `;`.
pub fn canonicalize(program: &PolicyProgram) -> String {
    ast::print_rules(program.rules())
}

/// Parses and checks in one step, collapsing errors to display strings.
pub fn compile(source: &str) -> Result<CheckedPolicy, Vec<String>> {
    let program = parse(source).map_err(|e| vec![e.to_string()])?;
    check(program).map_err(|errs| errs.iter().map(ToString::to_string).collect())
}

pub fn content_hash_of(source: &str) -> Result<Digest64, ParseError> {
    parse(source).map(|p| p.content_hash())
}
