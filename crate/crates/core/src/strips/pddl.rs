//! Lifted STRIPS models read from PDDL text.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::sexpr::{self, Pos, SExpr};
use super::ParseError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Predicate {
    pub name: String,
    pub arity: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Term {
    Var(String),
    Const(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LiftedAtom {
    pub predicate: String,
    pub args: Vec<Term>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LiftedLiteral {
    pub positive: bool,
    pub atom: LiftedAtom,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionSchema {
    pub name: String,
    pub parameters: Vec<String>,
    pub precondition: Vec<LiftedLiteral>,
    pub add: Vec<LiftedAtom>,
    pub delete: Vec<LiftedAtom>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DomainModel {
    pub name: String,
    pub predicates: Vec<Predicate>,
    pub actions: Vec<ActionSchema>,
    pub constants: Vec<String>,
    /// Types as (name, parent); each type is also a unary predicate.
    pub types: Vec<(String, Option<String>)>,
    /// Constant types, by constant name.
    pub constant_types: BTreeMap<String, String>,
    /// Predicates whose goal copies `p_G` are materialized at grounding time.
    #[serde(default)]
    pub goal_predicates: Vec<String>,
}

impl DomainModel {
    pub fn predicate(&self, name: &str) -> Option<&Predicate> {
        self.predicates.iter().find(|p| p.name == name)
    }

    /// Name of the goal copy of predicate `p`.
    pub fn goal_copy_name(p: &str) -> String {
        format!("{p}_G")
    }

    /// Supertypes of `ty` including itself, nearest first.
    pub(crate) fn type_closure(&self, ty: &str) -> Vec<String> {
        let mut out = vec![ty.to_string()];
        let mut cur = ty.to_string();
        while let Some((_, Some(parent))) = self.types.iter().find(|(n, _)| *n == cur) {
            if out.contains(parent) {
                break;
            }
            out.push(parent.clone());
            cur = parent.clone();
        }
        out.retain(|t| t != "object");
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundAtomSpec {
    pub predicate: String,
    pub args: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoalLiteral {
    pub positive: bool,
    pub atom: GroundAtomSpec,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProblemDescription {
    pub name: String,
    pub domain: String,
    pub objects: Vec<String>,
    pub object_types: BTreeMap<String, String>,
    pub init: Vec<GroundAtomSpec>,
    pub goal: Vec<GoalLiteral>,
}

const SUPPORTED_REQUIREMENTS: &[&str] = &[":strips", ":typing", ":negative-preconditions"];

/// Parses a domain/problem pair.
pub fn parse(
    domain_text: &str,
    problem_text: &str,
) -> Result<(DomainModel, ProblemDescription), ParseError> {
    let domain = parse_domain(domain_text)?;
    let problem = parse_problem(problem_text, &domain)?;
    Ok((domain, problem))
}

fn atom_of<'a>(e: &'a SExpr, what: &str) -> Result<&'a str, ParseError> {
    e.as_atom()
        .ok_or_else(|| ParseError::syntax(e.pos(), format!("expected {what}, found a list")))
}

fn list_of<'a>(e: &'a SExpr, what: &str) -> Result<&'a [SExpr], ParseError> {
    e.as_list()
        .ok_or_else(|| ParseError::syntax(e.pos(), format!("expected {what}, found an atom")))
}

/// Reads `name1 name2 - type name3 ...` into (name, type) pairs.
fn typed_names(items: &[SExpr]) -> Result<Vec<(String, Option<String>)>, ParseError> {
    let mut out = Vec::new();
    let mut pending: Vec<String> = Vec::new();
    let mut i = 0;
    while i < items.len() {
        let tok = atom_of(&items[i], "name")?;
        if tok == "-" {
            let ty = items
                .get(i + 1)
                .ok_or_else(|| ParseError::syntax(items[i].pos(), "missing type after '-'"))?;
            if let Some(l) = ty.as_list() {
                if l.first()
                    .and_then(|h| h.as_atom())
                    .map(str::to_ascii_lowercase)
                    .as_deref()
                    == Some("either")
                {
                    return Err(ParseError::unsupported(ty.pos(), "either-types"));
                }
            }
            let ty = atom_of(ty, "type name")?.to_ascii_lowercase();
            for n in pending.drain(..) {
                out.push((n, Some(ty.clone())));
            }
            i += 2;
        } else {
            pending.push(tok.to_ascii_lowercase());
            i += 1;
        }
    }
    out.extend(pending.into_iter().map(|n| (n, None)));
    Ok(out)
}

fn check_requirements(items: &[SExpr]) -> Result<BTreeSet<String>, ParseError> {
    let mut reqs = BTreeSet::new();
    for r in items {
        let name = atom_of(r, "requirement")?.to_ascii_lowercase();
        if !SUPPORTED_REQUIREMENTS.contains(&name.as_str()) {
            return Err(ParseError::unsupported(r.pos(), &name));
        }
        reqs.insert(name);
    }
    Ok(reqs)
}

pub fn parse_domain(text: &str) -> Result<DomainModel, ParseError> {
    let root = sexpr::parse(text)?;
    let items = list_of(&root, "(define ...)")?;
    if root.head().as_deref() != Some("define") {
        return Err(ParseError::syntax(
            root.pos(),
            "expected (define (domain ...) ...)",
        ));
    }
    let mut domain = DomainModel {
        name: String::new(),
        predicates: Vec::new(),
        actions: Vec::new(),
        constants: Vec::new(),
        types: Vec::new(),
        constant_types: BTreeMap::new(),
        goal_predicates: Vec::new(),
    };
    let mut reqs = BTreeSet::new();
    let mut pending_actions = Vec::new();
    for section in &items[1..] {
        let l = list_of(section, "domain section")?;
        match section.head().as_deref() {
            Some("domain") => {
                domain.name = atom_of(
                    l.get(1)
                        .ok_or_else(|| ParseError::syntax(section.pos(), "missing domain name"))?,
                    "domain name",
                )?
                .to_ascii_lowercase()
            }
            Some(":requirements") => reqs = check_requirements(&l[1..])?,
            Some(":types") => {
                if !reqs.contains(":typing") {
                    return Err(ParseError::syntax(section.pos(), ":types requires :typing"));
                }
                for (name, parent) in typed_names(&l[1..])? {
                    domain.types.push((name, parent));
                }
            }
            Some(":constants") => {
                for (name, ty) in typed_names(&l[1..])? {
                    if let Some(ty) = ty {
                        domain.constant_types.insert(name.clone(), ty);
                    }
                    domain.constants.push(name);
                }
            }
            Some(":predicates") => {
                for p in &l[1..] {
                    let pl = list_of(p, "predicate declaration")?;
                    let name = atom_of(
                        pl.first().ok_or_else(|| {
                            ParseError::syntax(p.pos(), "empty predicate declaration")
                        })?,
                        "predicate name",
                    )?
                    .to_ascii_lowercase();
                    let params = typed_names(&pl[1..])?;
                    if domain.predicate(&name).is_some() {
                        return Err(ParseError::syntax(
                            p.pos(),
                            format!("duplicate predicate '{name}'"),
                        ));
                    }
                    domain.predicates.push(Predicate {
                        name,
                        arity: params.len(),
                    });
                }
            }
            Some(":action") => pending_actions.push(section),
            Some(other @ (":functions" | ":durative-action" | ":derived" | ":constraints")) => {
                return Err(ParseError::unsupported(section.pos(), other))
            }
            Some(other) => {
                return Err(ParseError::syntax(
                    section.pos(),
                    format!("unknown domain section '{other}'"),
                ))
            }
            None => return Err(ParseError::syntax(section.pos(), "expected a keyword")),
        }
    }
    // Types become unary predicates.
    for (ty, _) in domain.types.clone() {
        if ty != "object" && domain.predicate(&ty).is_none() {
            domain.predicates.push(Predicate { name: ty, arity: 1 });
        }
    }
    for section in pending_actions {
        let action = parse_action(section, &domain, &reqs)?;
        domain.actions.push(action);
    }
    Ok(domain)
}

fn parse_term(e: &SExpr, params: &[String]) -> Result<Term, ParseError> {
    let s = atom_of(e, "term")?.to_ascii_lowercase();
    if let Some(v) = s.strip_prefix('?') {
        if !params.iter().any(|p| p == v) {
            return Err(ParseError::syntax(
                e.pos(),
                format!("unbound variable '?{v}'"),
            ));
        }
        Ok(Term::Var(v.to_string()))
    } else {
        Ok(Term::Const(s))
    }
}

fn parse_lifted_atom(
    e: &SExpr,
    domain: &DomainModel,
    params: &[String],
) -> Result<LiftedAtom, ParseError> {
    let l = list_of(e, "atom")?;
    let head = l
        .first()
        .ok_or_else(|| ParseError::syntax(e.pos(), "empty atom"))?;
    let name = atom_of(head, "predicate name")?.to_ascii_lowercase();
    if name == "=" {
        return Err(ParseError::unsupported(e.pos(), ":equality"));
    }
    let pred = domain
        .predicate(&name)
        .ok_or_else(|| ParseError::syntax(e.pos(), format!("undeclared predicate '{name}'")))?;
    if pred.arity != l.len() - 1 {
        return Err(ParseError::syntax(
            e.pos(),
            format!(
                "predicate '{name}' has arity {} but is used with {} arguments",
                pred.arity,
                l.len() - 1
            ),
        ));
    }
    let args = l[1..]
        .iter()
        .map(|a| parse_term(a, params))
        .collect::<Result<Vec<_>, _>>()?;
    for a in &args {
        if let Term::Const(c) = a {
            if !domain.constants.contains(c) {
                return Err(ParseError::syntax(
                    e.pos(),
                    format!("unknown constant '{c}'"),
                ));
            }
        }
    }
    Ok(LiftedAtom {
        predicate: name,
        args,
    })
}

/// Flattens a conjunction into its conjuncts, rejecting non-STRIPS connectives.
fn conjuncts(e: &SExpr) -> Result<Vec<&SExpr>, ParseError> {
    match e.head().as_deref() {
        Some("and") => {
            let mut out = Vec::new();
            for c in &e.as_list().unwrap()[1..] {
                out.extend(conjuncts(c)?);
            }
            Ok(out)
        }
        Some("or") => Err(ParseError::unsupported(
            e.pos(),
            ":disjunctive-preconditions",
        )),
        Some("imply") => Err(ParseError::unsupported(
            e.pos(),
            ":disjunctive-preconditions",
        )),
        Some("exists") => Err(ParseError::unsupported(
            e.pos(),
            ":existential-preconditions",
        )),
        Some("forall") => Err(ParseError::unsupported(e.pos(), ":universal-preconditions")),
        Some("when") => Err(ParseError::unsupported(e.pos(), ":conditional-effects")),
        Some("increase" | "decrease" | "assign" | "scale-up" | "scale-down") => {
            Err(ParseError::unsupported(e.pos(), ":numeric-fluents"))
        }
        _ => {
            if e.as_list().map(|l| l.is_empty()).unwrap_or(false) {
                Ok(Vec::new())
            } else {
                Ok(vec![e])
            }
        }
    }
}

fn parse_action(
    section: &SExpr,
    domain: &DomainModel,
    reqs: &BTreeSet<String>,
) -> Result<ActionSchema, ParseError> {
    let l = section.as_list().unwrap();
    let name = atom_of(
        l.get(1)
            .ok_or_else(|| ParseError::syntax(section.pos(), "missing action name"))?,
        "action name",
    )?
    .to_ascii_lowercase();
    let mut parameters = Vec::new();
    let mut param_types = Vec::new();
    let mut pre_expr = None;
    let mut eff_expr = None;
    let mut i = 2;
    while i < l.len() {
        let key = atom_of(&l[i], "action keyword")?.to_ascii_lowercase();
        let val = l
            .get(i + 1)
            .ok_or_else(|| ParseError::syntax(l[i].pos(), format!("missing value for {key}")))?;
        match key.as_str() {
            ":parameters" => {
                for (v, ty) in typed_names(list_of(val, "parameter list")?)? {
                    let v = v
                        .strip_prefix('?')
                        .ok_or_else(|| {
                            ParseError::syntax(
                                val.pos(),
                                format!("parameter '{v}' must start with '?'"),
                            )
                        })?
                        .to_string();
                    if let Some(ty) = ty {
                        param_types.push((v.clone(), ty));
                    }
                    parameters.push(v);
                }
            }
            ":precondition" => pre_expr = Some(val),
            ":effect" => eff_expr = Some(val),
            _ => {
                return Err(ParseError::syntax(
                    l[i].pos(),
                    format!("unknown action keyword '{key}'"),
                ))
            }
        }
        i += 2;
    }
    let mut precondition = Vec::new();
    for (v, ty) in &param_types {
        if ty != "object" {
            precondition.push(LiftedLiteral {
                positive: true,
                atom: LiftedAtom {
                    predicate: ty.clone(),
                    args: vec![Term::Var(v.clone())],
                },
            });
        }
    }
    if let Some(pre) = pre_expr {
        for c in conjuncts(pre)? {
            if c.head().as_deref() == Some("not") {
                if !reqs.contains(":negative-preconditions") {
                    return Err(ParseError::unsupported(c.pos(), ":negative-preconditions"));
                }
                let inner = c
                    .as_list()
                    .unwrap()
                    .get(1)
                    .ok_or_else(|| ParseError::syntax(c.pos(), "empty negation"))?;
                precondition.push(LiftedLiteral {
                    positive: false,
                    atom: parse_lifted_atom(inner, domain, &parameters)?,
                });
            } else {
                precondition.push(LiftedLiteral {
                    positive: true,
                    atom: parse_lifted_atom(c, domain, &parameters)?,
                });
            }
        }
    }
    let mut add = Vec::new();
    let mut delete = Vec::new();
    if let Some(eff) = eff_expr {
        for c in conjuncts(eff)? {
            if c.head().as_deref() == Some("not") {
                let inner = c
                    .as_list()
                    .unwrap()
                    .get(1)
                    .ok_or_else(|| ParseError::syntax(c.pos(), "empty negation"))?;
                delete.push(parse_lifted_atom(inner, domain, &parameters)?);
            } else {
                add.push(parse_lifted_atom(c, domain, &parameters)?);
            }
        }
    }
    Ok(ActionSchema {
        name,
        parameters,
        precondition,
        add,
        delete,
    })
}

fn ground_atom_spec(e: &SExpr, domain: &DomainModel) -> Result<GroundAtomSpec, ParseError> {
    let l = list_of(e, "ground atom")?;
    let head = l
        .first()
        .ok_or_else(|| ParseError::syntax(e.pos(), "empty atom"))?;
    let name = atom_of(head, "predicate name")?.to_ascii_lowercase();
    if name == "=" {
        return Err(ParseError::unsupported(e.pos(), ":equality"));
    }
    let pred = domain
        .predicate(&name)
        .ok_or_else(|| ParseError::syntax(e.pos(), format!("undeclared predicate '{name}'")))?;
    if pred.arity != l.len() - 1 {
        return Err(ParseError::syntax(
            e.pos(),
            format!(
                "predicate '{name}' has arity {} but is used with {} arguments",
                pred.arity,
                l.len() - 1
            ),
        ));
    }
    let args = l[1..]
        .iter()
        .map(|a| atom_of(a, "object name").map(str::to_ascii_lowercase))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(GroundAtomSpec {
        predicate: name,
        args,
    })
}

pub fn parse_problem(text: &str, domain: &DomainModel) -> Result<ProblemDescription, ParseError> {
    let root = sexpr::parse(text)?;
    let items = list_of(&root, "(define ...)")?;
    if root.head().as_deref() != Some("define") {
        return Err(ParseError::syntax(
            root.pos(),
            "expected (define (problem ...) ...)",
        ));
    }
    let mut problem = ProblemDescription {
        name: String::new(),
        domain: String::new(),
        objects: Vec::new(),
        object_types: BTreeMap::new(),
        init: Vec::new(),
        goal: Vec::new(),
    };
    let mut goal_seen = false;
    for section in &items[1..] {
        let l = list_of(section, "problem section")?;
        let missing = |p: Pos| ParseError::syntax(p, "missing name");
        match section.head().as_deref() {
            Some("problem") => {
                problem.name = atom_of(
                    l.get(1).ok_or_else(|| missing(section.pos()))?,
                    "problem name",
                )?
                .to_ascii_lowercase()
            }
            Some(":domain") => {
                problem.domain = atom_of(
                    l.get(1).ok_or_else(|| missing(section.pos()))?,
                    "domain name",
                )?
                .to_ascii_lowercase()
            }
            Some(":requirements") => {
                check_requirements(&l[1..])?;
            }
            Some(":objects") => {
                for (name, ty) in typed_names(&l[1..])? {
                    if let Some(ty) = ty {
                        problem.object_types.insert(name.clone(), ty);
                    }
                    problem.objects.push(name);
                }
            }
            Some(":init") => {
                for a in &l[1..] {
                    if a.head().as_deref() == Some("=") {
                        return Err(ParseError::unsupported(a.pos(), ":numeric-fluents"));
                    }
                    problem.init.push(ground_atom_spec(a, domain)?);
                }
            }
            Some(":goal") => {
                goal_seen = true;
                let g = l
                    .get(1)
                    .ok_or_else(|| ParseError::syntax(section.pos(), "empty goal"))?;
                for c in conjuncts(g)? {
                    if c.head().as_deref() == Some("not") {
                        let inner = c
                            .as_list()
                            .unwrap()
                            .get(1)
                            .ok_or_else(|| ParseError::syntax(c.pos(), "empty negation"))?;
                        problem.goal.push(GoalLiteral {
                            positive: false,
                            atom: ground_atom_spec(inner, domain)?,
                        });
                    } else {
                        problem.goal.push(GoalLiteral {
                            positive: true,
                            atom: ground_atom_spec(c, domain)?,
                        });
                    }
                }
            }
            Some(other @ (":metric" | ":constraints")) => {
                return Err(ParseError::unsupported(section.pos(), other))
            }
            Some(other) => {
                return Err(ParseError::syntax(
                    section.pos(),
                    format!("unknown problem section '{other}'"),
                ))
            }
            None => return Err(ParseError::syntax(section.pos(), "expected a keyword")),
        }
    }
    if !goal_seen {
        return Err(ParseError::syntax(root.pos(), "problem has no :goal"));
    }
    Ok(problem)
}
