//! The program language: entity and relation declarations, weighted rule
//! templates, hard constraints and arithmetic constraints.
//!
//! ```text
//! entity User features=8
//! entity Claim features=8
//! predicate VoteFor(User, User)?
//! predicate Agree(User, Claim)?
//! rule: Agree(X, C) & VoteFor(Y, X) => Agree(Y, C)
//! arith: Agree(X, +C) <= 1
//! ```

mod ast;
mod lexer;
mod parser;
mod pretty;
mod validate;

use std::fmt;

use thiserror::Error;

pub use ast::*;
pub use parser::{parse_program, parse_rule};
pub use pretty::pretty_print;
pub use validate::{
    validate, ArithmeticConstraint, CheckedProgram, Constraint, EntityKind, EntityType, RelationSchema,
    RuleTemplate, ValidationError,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub struct SyntaxError {
    pub line: u32,
    pub col: u32,
    pub found: String,
    pub expected: Vec<String>,
}

impl SyntaxError {
    pub(crate) fn new(span: Span, found: &str, expected: &[&str]) -> Self {
        SyntaxError {
            line: span.line,
            col: span.col,
            found: found.to_string(),
            expected: expected.iter().map(|s| s.to_string()).collect(),
        }
    }

    pub fn span(&self) -> Span {
        Span::new(self.line, self.col)
    }
}

impl fmt::Display for SyntaxError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "syntax error at {}:{}: unexpected {}, expected {}", self.line, self.col, self.found, self.expected.join(" or "))
    }
}

/// Parse and validate in one step.
pub fn compile(source: &str) -> Result<CheckedProgram, CompileError> {
    let ast = parse_program(source)?;
    Ok(validate(&ast)?)
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CompileError {
    #[error(transparent)]
    Syntax(#[from] SyntaxError),
    #[error(transparent)]
    Validation(#[from] ValidationError),
}

impl CompileError {
    pub fn span(&self) -> Span {
        match self {
            CompileError::Syntax(e) => e.span(),
            CompileError::Validation(e) => e.span(),
        }
    }
}

/// Rewrites `b1 & ... & bn => h` as the clause `~b1 | ... | ~bn | h`.
/// Closed literals are kept; they gate grounding rather than inference.
pub fn to_disjunctive_form(rule: &RuleDecl) -> Vec<Literal> {
    rule.body.iter().map(Literal::negate).chain(std::iter::once(rule.head.clone())).collect()
}
