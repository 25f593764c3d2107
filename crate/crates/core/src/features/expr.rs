//! Concept, role and feature expressions with their canonical text form.
//!
//! Canonical syntax:
//!
//! | expression        | text                     | complexity        |
//! |-------------------|--------------------------|-------------------|
//! | primitive concept | `clear`                  | 1                 |
//! | universe          | `TOP`                    | 1                 |
//! | nominal           | `{x}`                    | 1                 |
//! | negation          | `not(C)`                 | 1 + C             |
//! | conjunction       | `and(C,D)`               | 1 + C + D         |
//! | existential       | `exists(R,C)`            | 1 + R + C         |
//! | universal         | `forall(R,C)`            | 1 + R + C         |
//! | role equality     | `eq(R,S)`                | 1 + R + S         |
//! | primitive role    | `on`                     | 1                 |
//! | inverse           | `inv(on)`                | 2                 |
//! | closure           | `plus(on)`, `plus(inv(on))` | 2, 3           |

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("cannot parse expression '{text}': {message}")]
pub struct ExprError {
    pub text: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Role {
    Primitive(String),
    Inverse(String),
    Plus(String),
    PlusInverse(String),
}

impl Role {
    pub fn complexity(&self) -> u32 {
        match self {
            Role::Primitive(_) => 1,
            Role::Inverse(_) | Role::Plus(_) => 2,
            Role::PlusInverse(_) => 3,
        }
    }

    pub fn predicate(&self) -> &str {
        match self {
            Role::Primitive(p) | Role::Inverse(p) | Role::Plus(p) | Role::PlusInverse(p) => p,
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Role::Primitive(p) => write!(f, "{p}"),
            Role::Inverse(p) => write!(f, "inv({p})"),
            Role::Plus(p) => write!(f, "plus({p})"),
            Role::PlusInverse(p) => write!(f, "plus(inv({p}))"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Concept {
    Primitive(String),
    Universal,
    Nominal(String),
    Not(Arc<Concept>),
    And(Arc<Concept>, Arc<Concept>),
    Exists(Role, Arc<Concept>),
    Forall(Role, Arc<Concept>),
    RoleEq(Role, Role),
}

impl Concept {
    pub fn complexity(&self) -> u32 {
        match self {
            Concept::Primitive(_) | Concept::Universal | Concept::Nominal(_) => 1,
            Concept::Not(c) => 1 + c.complexity(),
            Concept::And(a, b) => 1 + a.complexity() + b.complexity(),
            Concept::Exists(r, c) | Concept::Forall(r, c) => 1 + r.complexity() + c.complexity(),
            Concept::RoleEq(r, s) => 1 + r.complexity() + s.complexity(),
        }
    }

    /// Primitive, universal or nominal: the only concepts negation applies to.
    pub fn is_atomic(&self) -> bool {
        matches!(
            self,
            Concept::Primitive(_) | Concept::Universal | Concept::Nominal(_)
        )
    }

    pub fn parse(text: &str) -> Result<Concept, ExprError> {
        let mut p = Parser::new(text);
        let c = p.concept()?;
        p.finish()?;
        Ok(c)
    }
}

impl fmt::Display for Concept {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Concept::Primitive(p) => write!(f, "{p}"),
            Concept::Universal => write!(f, "TOP"),
            Concept::Nominal(x) => write!(f, "{{{x}}}"),
            Concept::Not(c) => write!(f, "not({c})"),
            Concept::And(a, b) => write!(f, "and({a},{b})"),
            Concept::Exists(r, c) => write!(f, "exists({r},{c})"),
            Concept::Forall(r, c) => write!(f, "forall({r},{c})"),
            Concept::RoleEq(r, s) => write!(f, "eq({r},{s})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum FeatureKind {
    /// `b_p` for a nullary predicate.
    Nullary(String),
    /// `b_C`: whether `C` is non-empty.
    Boolean(Concept),
    /// `n_C`: cardinality of `C`.
    Numeric(Concept),
    /// `dist(C1, R:C, C2)`: shortest `R:C` chain from `C1` to `C2`.
    Distance {
        from: Concept,
        role: Role,
        restrict: Concept,
        to: Concept,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Feature {
    pub kind: FeatureKind,
    pub cost: u32,
}

impl Feature {
    pub fn new(kind: FeatureKind) -> Feature {
        let cost = match &kind {
            FeatureKind::Nullary(_) => 0,
            FeatureKind::Boolean(c) | FeatureKind::Numeric(c) => c.complexity(),
            FeatureKind::Distance {
                from,
                role,
                restrict,
                to,
            } => from.complexity() + role.complexity() + restrict.complexity() + to.complexity(),
        };
        Feature { kind, cost }
    }

    pub fn is_numeric(&self) -> bool {
        matches!(
            self.kind,
            FeatureKind::Numeric(_) | FeatureKind::Distance { .. }
        )
    }

    pub fn kind_name(&self) -> &'static str {
        match self.kind {
            FeatureKind::Nullary(_) => "nullary",
            FeatureKind::Boolean(_) => "boolean",
            FeatureKind::Numeric(_) => "numeric",
            FeatureKind::Distance { .. } => "distance",
        }
    }

    pub fn parse(text: &str) -> Result<Feature, ExprError> {
        let mut p = Parser::new(text);
        let f = p.feature()?;
        p.finish()?;
        Ok(f)
    }
}

impl fmt::Display for Feature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            FeatureKind::Nullary(p) => write!(f, "atom({p})"),
            FeatureKind::Boolean(c) => write!(f, "bool({c})"),
            FeatureKind::Numeric(c) => write!(f, "num({c})"),
            FeatureKind::Distance {
                from,
                role,
                restrict,
                to,
            } => write!(f, "dist({from},{role},{restrict},{to})"),
        }
    }
}

struct Parser<'a> {
    text: &'a str,
    pos: usize,
}

impl<'a> Parser<'a> {
    fn new(text: &'a str) -> Self {
        Parser { text, pos: 0 }
    }

    fn err(&self, message: impl Into<String>) -> ExprError {
        ExprError {
            text: self.text.to_string(),
            message: format!("{} (at offset {})", message.into(), self.pos),
        }
    }

    fn skip_ws(&mut self) {
        while self.text[self.pos..].starts_with(char::is_whitespace) {
            self.pos += self.text[self.pos..].chars().next().unwrap().len_utf8();
        }
    }

    fn finish(&mut self) -> Result<(), ExprError> {
        self.skip_ws();
        if self.pos == self.text.len() {
            Ok(())
        } else {
            Err(self.err("trailing input"))
        }
    }

    fn eat(&mut self, c: char) -> Result<(), ExprError> {
        self.skip_ws();
        if self.text[self.pos..].starts_with(c) {
            self.pos += c.len_utf8();
            Ok(())
        } else {
            Err(self.err(format!("expected '{c}'")))
        }
    }

    fn ident(&mut self) -> Result<String, ExprError> {
        self.skip_ws();
        let rest = &self.text[self.pos..];
        let len = rest
            .find(|c: char| {
                c == '(' || c == ')' || c == ',' || c == '{' || c == '}' || c.is_whitespace()
            })
            .unwrap_or(rest.len());
        if len == 0 {
            return Err(self.err("expected a name"));
        }
        self.pos += len;
        Ok(rest[..len].to_string())
    }

    fn peek_is(&mut self, c: char) -> bool {
        self.skip_ws();
        self.text[self.pos..].starts_with(c)
    }

    fn role(&mut self) -> Result<Role, ExprError> {
        let name = self.ident()?;
        match name.as_str() {
            "inv" => {
                self.eat('(')?;
                let p = self.ident()?;
                self.eat(')')?;
                Ok(Role::Inverse(p))
            }
            "plus" => {
                self.eat('(')?;
                let inner = self.role()?;
                self.eat(')')?;
                match inner {
                    Role::Primitive(p) => Ok(Role::Plus(p)),
                    Role::Inverse(p) => Ok(Role::PlusInverse(p)),
                    _ => Err(self.err("closure applies to primitive or inverse roles only")),
                }
            }
            _ => {
                if self.peek_is('(') {
                    return Err(self.err(format!("unknown role constructor '{name}'")));
                }
                Ok(Role::Primitive(name))
            }
        }
    }

    fn concept(&mut self) -> Result<Concept, ExprError> {
        if self.peek_is('{') {
            self.eat('{')?;
            let x = self.ident()?;
            self.eat('}')?;
            return Ok(Concept::Nominal(x));
        }
        let name = self.ident()?;
        let unary = |p: &mut Self| -> Result<Concept, ExprError> {
            p.eat('(')?;
            let c = p.concept()?;
            p.eat(')')?;
            Ok(c)
        };
        match name.as_str() {
            "TOP" => Ok(Concept::Universal),
            "not" => {
                let c = unary(self)?;
                if !c.is_atomic() {
                    return Err(self
                        .err("negation applies to primitive, universal or nominal concepts only"));
                }
                Ok(Concept::Not(Arc::new(c)))
            }
            "and" => {
                self.eat('(')?;
                let a = self.concept()?;
                self.eat(',')?;
                let b = self.concept()?;
                self.eat(')')?;
                Ok(Concept::And(Arc::new(a), Arc::new(b)))
            }
            "exists" | "forall" => {
                self.eat('(')?;
                let r = self.role()?;
                self.eat(',')?;
                let c = self.concept()?;
                self.eat(')')?;
                Ok(if name == "exists" {
                    Concept::Exists(r, Arc::new(c))
                } else {
                    Concept::Forall(r, Arc::new(c))
                })
            }
            "eq" => {
                self.eat('(')?;
                let r = self.role()?;
                self.eat(',')?;
                let s = self.role()?;
                self.eat(')')?;
                Ok(Concept::RoleEq(r, s))
            }
            _ => {
                if self.peek_is('(') {
                    return Err(self.err(format!("unknown concept constructor '{name}'")));
                }
                Ok(Concept::Primitive(name))
            }
        }
    }

    fn feature(&mut self) -> Result<Feature, ExprError> {
        let name = self.ident()?;
        self.eat('(')?;
        let kind = match name.as_str() {
            "atom" => FeatureKind::Nullary(self.ident()?),
            "bool" => FeatureKind::Boolean(self.concept()?),
            "num" => FeatureKind::Numeric(self.concept()?),
            "dist" => {
                let from = self.concept()?;
                self.eat(',')?;
                let role = self.role()?;
                self.eat(',')?;
                let restrict = self.concept()?;
                self.eat(',')?;
                let to = self.concept()?;
                FeatureKind::Distance {
                    from,
                    role,
                    restrict,
                    to,
                }
            }
            _ => return Err(self.err(format!("unknown feature kind '{name}'"))),
        };
        self.eat(')')?;
        Ok(Feature::new(kind))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn complexity_of_reference_features() {
        let n_x = Concept::parse("exists(plus(on),{x})").unwrap();
        assert_eq!(n_x.complexity(), 4);
        let x_held = Concept::parse("and(holding,{x})").unwrap();
        assert_eq!(x_held.complexity(), 3);
        let d = Feature::parse("dist(at,adjacent,not(blocked),reward)").unwrap();
        assert_eq!(d.cost, 5);
        assert_eq!(Feature::parse("atom(handempty)").unwrap().cost, 0);
    }

    #[test]
    fn negation_is_restricted_to_atomic_concepts() {
        assert!(Concept::parse("not(and(a,b))").is_err());
        assert!(Concept::parse("not({x})").is_ok());
    }

    #[test]
    fn unknown_constructor_is_rejected() {
        assert!(Concept::parse("or(a,b)").is_err());
        assert!(Feature::parse("count(a)").is_err());
    }
}
