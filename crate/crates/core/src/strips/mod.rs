//! STRIPS models: PDDL parsing, grounding and state-transition semantics.

mod ground;
mod pddl;
pub(crate) mod sexpr;
mod state;

use thiserror::Error;

pub use ground::{ground, AtomId, GroundAction, GroundInstance};
pub use pddl::{
    parse, parse_domain, parse_problem, ActionSchema, DomainModel, GoalLiteral, GroundAtomSpec,
    LiftedAtom, LiftedLiteral, Predicate, ProblemDescription, Term,
};
pub use sexpr::Pos;
pub use state::State;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ParseError {
    #[error("syntax error at {pos}: {message}")]
    Syntax { pos: Pos, message: String },
    #[error("unsupported PDDL feature '{feature}' at {pos}")]
    Unsupported { pos: Pos, feature: String },
}

impl ParseError {
    pub(crate) fn syntax(pos: Pos, message: impl Into<String>) -> Self {
        ParseError::Syntax {
            pos,
            message: message.into(),
        }
    }

    pub(crate) fn unsupported(pos: Pos, feature: &str) -> Self {
        ParseError::Unsupported {
            pos,
            feature: feature.to_string(),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GroundError {
    #[error("unknown object '{0}'")]
    UnknownObject(String),
    #[error("unknown predicate '{0}'")]
    UnknownPredicate(String),
    #[error("instance too large to ground")]
    TooLarge,
}

/// Parses and grounds a domain/problem pair in one step.
pub fn load(
    domain_text: &str,
    problem_text: &str,
) -> Result<(DomainModel, GroundInstance), crate::Error> {
    let (domain, problem) = parse(domain_text, problem_text)?;
    let instance = ground(&domain, &problem)?;
    Ok((domain, instance))
}
