//! PDDL reading and printing for the STRIPS+typing subset.
//!
//! The reader is a whitespace-insensitive s-expression parser that keeps
//! source spans so downstream feedback can quote locations. Requirements
//! other than `:strips` and `:typing` are rejected, as are negative or
//! quantified preconditions, equality, conditional effects, and numeric
//! fluents. Printing is canonical: printing the same value twice is
//! byte-identical, and `parse(print(x)) == x` on the abstract value.
//!
//! Plan files use the VAL convention: one `(action args...)` per line, with
//! `;` comments and blank lines ignored.

use crate::pddl::{
    resolve_action, ActionSchema, Atom, Domain, LiftedAtom, PddlError, Plan, PredicateDecl,
    Problem, State, TypeHierarchy, TypedName, ROOT_TYPE,
};
use std::collections::BTreeSet;
use std::fmt;
use thiserror::Error;

/// Byte range plus 1-based line/column of its start.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SourceSpan {
    pub start: usize,
    pub end: usize,
    pub line: u32,
    pub column: u32,
}

impl fmt::Display for SourceSpan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}, column {}", self.line, self.column)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParseError {
    #[error("{message} at {span}{}", expected.as_ref().map(|e| format!(" (expected {e})")).unwrap_or_default())]
    Syntax {
        message: String,
        span: SourceSpan,
        expected: Option<String>,
    },
    #[error("unsupported feature {feature} at {span}")]
    UnsupportedFeature { feature: String, span: SourceSpan },
    #[error("{source} at {span}")]
    Semantic {
        #[source]
        source: PddlError,
        span: SourceSpan,
    },
}

impl ParseError {
    pub fn span(&self) -> SourceSpan {
        match self {
            ParseError::Syntax { span, .. }
            | ParseError::UnsupportedFeature { span, .. }
            | ParseError::Semantic { span, .. } => *span,
        }
    }

    fn syntax(message: impl Into<String>, span: SourceSpan) -> Self {
        ParseError::Syntax {
            message: message.into(),
            span,
            expected: None,
        }
    }

    fn expected(message: impl Into<String>, span: SourceSpan, hint: &str) -> Self {
        ParseError::Syntax {
            message: message.into(),
            span,
            expected: Some(hint.to_string()),
        }
    }
}

// ── s-expression reader ─────────────────────────────────────────────────

#[derive(Debug, Clone, PartialEq)]
enum SExpr {
    Sym(String, SourceSpan),
    List(Vec<SExpr>, SourceSpan),
}

impl SExpr {
    fn span(&self) -> SourceSpan {
        match self {
            SExpr::Sym(_, s) | SExpr::List(_, s) => *s,
        }
    }

    fn sym(&self) -> Result<&str, ParseError> {
        match self {
            SExpr::Sym(s, _) => Ok(s),
            SExpr::List(_, span) => Err(ParseError::expected("found a list", *span, "a symbol")),
        }
    }

    fn list(&self) -> Result<&[SExpr], ParseError> {
        match self {
            SExpr::List(items, _) => Ok(items),
            SExpr::Sym(_, span) => Err(ParseError::expected("found a symbol", *span, "a list")),
        }
    }

    /// Lowercased head symbol of a list, or "" when empty/not a list.
    fn head(&self) -> String {
        match self {
            SExpr::List(items, _) => items
                .first()
                .and_then(|h| match h {
                    SExpr::Sym(s, _) => Some(s.to_ascii_lowercase()),
                    _ => None,
                })
                .unwrap_or_default(),
            _ => String::new(),
        }
    }
}

struct Reader<'a> {
    src: &'a [u8],
    pos: usize,
    line: u32,
    column: u32,
}

impl<'a> Reader<'a> {
    fn new(src: &'a str) -> Self {
        Reader {
            src: src.as_bytes(),
            pos: 0,
            line: 1,
            column: 1,
        }
    }

    fn here(&self) -> SourceSpan {
        SourceSpan {
            start: self.pos,
            end: self.pos,
            line: self.line,
            column: self.column,
        }
    }

    fn bump(&mut self) -> u8 {
        let b = self.src[self.pos];
        self.pos += 1;
        if b == b'\n' {
            self.line += 1;
            self.column = 1;
        } else {
            self.column += 1;
        }
        b
    }

    fn skip_trivia(&mut self) {
        while self.pos < self.src.len() {
            match self.src[self.pos] {
                b';' => {
                    while self.pos < self.src.len() && self.src[self.pos] != b'\n' {
                        self.bump();
                    }
                }
                c if c.is_ascii_whitespace() => {
                    self.bump();
                }
                _ => break,
            }
        }
    }

    fn read(&mut self) -> Result<SExpr, ParseError> {
        self.skip_trivia();
        let start = self.here();
        if self.pos >= self.src.len() {
            return Err(ParseError::expected("unexpected end of input", start, "an expression"));
        }
        match self.src[self.pos] {
            b'(' => {
                self.bump();
                let mut items = Vec::new();
                loop {
                    self.skip_trivia();
                    if self.pos >= self.src.len() {
                        return Err(ParseError::expected("unclosed parenthesis", start, "`)`"));
                    }
                    if self.src[self.pos] == b')' {
                        self.bump();
                        break;
                    }
                    items.push(self.read()?);
                }
                let mut span = start;
                span.end = self.pos;
                Ok(SExpr::List(items, span))
            }
            b')' => Err(ParseError::syntax("unmatched `)`", start)),
            _ => {
                let begin = self.pos;
                while self.pos < self.src.len() {
                    let c = self.src[self.pos];
                    if c.is_ascii_whitespace() || c == b'(' || c == b')' || c == b';' {
                        break;
                    }
                    self.bump();
                }
                let text = std::str::from_utf8(&self.src[begin..self.pos]).expect("validated utf-8");
                let mut span = start;
                span.end = self.pos;
                Ok(SExpr::Sym(text.to_string(), span))
            }
        }
    }

    fn read_single(mut self) -> Result<SExpr, ParseError> {
        let e = self.read()?;
        self.skip_trivia();
        if self.pos < self.src.len() {
            return Err(ParseError::syntax("trailing input after expression", self.here()));
        }
        Ok(e)
    }
}

// ── shared pieces ───────────────────────────────────────────────────────

/// Parses a PDDL typed list `a b - t c` into name/type pairs; names without
/// a `-` group default to `object`.
fn typed_list(items: &[SExpr]) -> Result<Vec<TypedName>, ParseError> {
    let mut out = Vec::new();
    let mut pending: Vec<&str> = Vec::new();
    let mut i = 0;
    while i < items.len() {
        let sym = items[i].sym()?;
        if sym == "-" {
            i += 1;
            let ty = items
                .get(i)
                .ok_or_else(|| ParseError::expected("dangling `-`", items[i - 1].span(), "a type name"))?
                .sym()?;
            if pending.is_empty() {
                return Err(ParseError::syntax("type without names before `-`", items[i].span()));
            }
            for name in pending.drain(..) {
                out.push(TypedName::new(name, ty));
            }
        } else {
            pending.push(sym);
        }
        i += 1;
    }
    for name in pending {
        out.push(TypedName::new(name, ROOT_TYPE));
    }
    Ok(out)
}

fn lifted_atom(e: &SExpr) -> Result<LiftedAtom, ParseError> {
    let items = e.list()?;
    let name = items
        .first()
        .ok_or_else(|| ParseError::expected("empty atom", e.span(), "a predicate name"))?
        .sym()?;
    let mut args = Vec::new();
    for a in &items[1..] {
        args.push(a.sym()?);
    }
    Ok(LiftedAtom::new(name, &args))
}

fn ground_atom(e: &SExpr) -> Result<Atom, ParseError> {
    let l = lifted_atom(e)?;
    Ok(Atom::new(&l.predicate, &l.args))
}

fn reject_connective(head: &str, span: SourceSpan, context: &str) -> Result<(), ParseError> {
    let feature = match head {
        "not" => Some(format!("negative {context} (not ...)")),
        "=" => Some(format!("equality {context} (= ...)")),
        "or" | "imply" => Some(format!("disjunctive {context} ({head} ...)")),
        "when" => Some("conditional effect (when ...)".to_string()),
        "forall" | "exists" => Some(format!("quantified {context} ({head} ...)")),
        "increase" | "decrease" | "assign" | "scale-up" | "scale-down" => {
            Some(format!("numeric effect ({head} ...)"))
        }
        "preference" => Some("preferences".to_string()),
        _ => None,
    };
    match feature {
        Some(feature) => Err(ParseError::UnsupportedFeature { feature, span }),
        None => Ok(()),
    }
}

/// A conjunction of positive atoms: `atom` or `(and atom*)`.
fn conjunction(e: &SExpr) -> Result<Vec<LiftedAtom>, ParseError> {
    let head = e.head();
    if head == "and" {
        let mut atoms = Vec::new();
        for item in &e.list()?[1..] {
            let h = item.head();
            reject_connective(&h, item.span(), "precondition")?;
            if h == "and" {
                return Err(ParseError::syntax("nested `and`", item.span()));
            }
            atoms.push(lifted_atom(item)?);
        }
        Ok(atoms)
    } else {
        reject_connective(&head, e.span(), "precondition")?;
        Ok(vec![lifted_atom(e)?])
    }
}

/// STRIPS effects: positive atoms are adds, `(not atom)` are deletes.
fn effects(e: &SExpr) -> Result<(Vec<LiftedAtom>, Vec<LiftedAtom>), ParseError> {
    let mut add = Vec::new();
    let mut del = Vec::new();
    let items: Vec<&SExpr> = if e.head() == "and" {
        e.list()?[1..].iter().collect()
    } else {
        vec![e]
    };
    for item in items {
        let head = item.head();
        if head == "not" {
            let inner = item.list()?;
            if inner.len() != 2 {
                return Err(ParseError::expected("malformed (not ...)", item.span(), "(not (atom))"));
            }
            let h = inner[1].head();
            reject_connective(&h, inner[1].span(), "effect")?;
            del.push(lifted_atom(&inner[1])?);
        } else {
            reject_connective(&head, item.span(), "effect")?;
            if head == "and" {
                return Err(ParseError::syntax("nested `and` in effect", item.span()));
            }
            add.push(lifted_atom(item)?);
        }
    }
    Ok((add, del))
}

fn check_define(items: &[SExpr], kind: &str, span: SourceSpan) -> Result<String, ParseError> {
    let first = items
        .first()
        .ok_or_else(|| ParseError::expected("empty form", span, "(define ...)"))?;
    if !first.sym()?.eq_ignore_ascii_case("define") {
        return Err(ParseError::expected("not a define form", first.span(), "`define`"));
    }
    let header = items
        .get(1)
        .ok_or_else(|| ParseError::expected("missing header", span, &format!("({kind} <name>)")))?
        .list()?;
    if header.len() != 2 || !header[0].sym()?.eq_ignore_ascii_case(kind) {
        return Err(ParseError::expected(
            "malformed header",
            items[1].span(),
            &format!("({kind} <name>)"),
        ));
    }
    Ok(header[1].sym()?.to_string())
}

fn requirements(items: &[SExpr]) -> Result<(), ParseError> {
    for r in &items[1..] {
        let sym = r.sym()?.to_ascii_lowercase();
        if sym != ":strips" && sym != ":typing" {
            return Err(ParseError::UnsupportedFeature {
                feature: format!("requirement {sym}"),
                span: r.span(),
            });
        }
    }
    Ok(())
}

// ── domain ──────────────────────────────────────────────────────────────

/// Parses a PDDL domain restricted to `:strips` + `:typing`.
pub fn parse_domain(text: &str) -> Result<Domain, ParseError> {
    let top = Reader::new(text).read_single()?;
    let items = top.list()?;
    let name = check_define(items, "domain", top.span())?;

    let mut types = TypeHierarchy::new();
    let mut predicates = Vec::new();
    let mut actions = Vec::new();

    for section in &items[2..] {
        let body = section.list()?;
        let head = section.head();
        match head.as_str() {
            ":requirements" => requirements(body)?,
            ":types" => {
                for t in typed_list(&body[1..])? {
                    types.declare(&t.name, &t.ty);
                }
            }
            ":predicates" => {
                for p in &body[1..] {
                    let decl = p.list()?;
                    let pname = decl
                        .first()
                        .ok_or_else(|| ParseError::expected("empty predicate", p.span(), "a name"))?
                        .sym()?;
                    let params = typed_list(&decl[1..])?;
                    let tys: Vec<&str> = params.iter().map(|t| t.ty.as_str()).collect();
                    predicates.push(PredicateDecl::new(pname, &tys));
                }
            }
            ":action" => actions.push(action_schema(body, section.span())?),
            other => {
                return Err(ParseError::UnsupportedFeature {
                    feature: format!("section {other}"),
                    span: section.span(),
                })
            }
        }
    }

    Domain::new(&name, types, predicates, actions).map_err(|source| ParseError::Semantic {
        source,
        span: top.span(),
    })
}

fn action_schema(body: &[SExpr], span: SourceSpan) -> Result<ActionSchema, ParseError> {
    let name = body
        .get(1)
        .ok_or_else(|| ParseError::expected("missing action name", span, "a name"))?
        .sym()?
        .to_ascii_lowercase();
    let mut params = Vec::new();
    let mut pre = Vec::new();
    let mut add = Vec::new();
    let mut del = Vec::new();
    let mut i = 2;
    while i < body.len() {
        let key = body[i].sym()?.to_ascii_lowercase();
        let value = body
            .get(i + 1)
            .ok_or_else(|| ParseError::expected(format!("missing value for {key}"), body[i].span(), "an expression"))?;
        match key.as_str() {
            ":parameters" => params = typed_list(value.list()?)?,
            ":precondition" => pre = conjunction(value)?,
            ":effect" => (add, del) = effects(value)?,
            other => {
                return Err(ParseError::UnsupportedFeature {
                    feature: format!("action field {other}"),
                    span: body[i].span(),
                })
            }
        }
        i += 2;
    }
    Ok(ActionSchema {
        name,
        params,
        pre: pre.into_iter().collect(),
        add: add.into_iter().collect(),
        del: del.into_iter().collect(),
    })
}

// ── problem ─────────────────────────────────────────────────────────────

/// Parses a PDDL problem and type-checks it against `domain`.
pub fn parse_problem(text: &str, domain: &Domain) -> Result<Problem, ParseError> {
    let top = Reader::new(text).read_single()?;
    let items = top.list()?;
    let name = check_define(items, "problem", top.span())?;

    let mut objects = Vec::new();
    let mut init = State::new();
    let mut goal = BTreeSet::new();

    for section in &items[2..] {
        let body = section.list()?;
        let head = section.head();
        match head.as_str() {
            ":domain" => {
                let declared = body
                    .get(1)
                    .ok_or_else(|| ParseError::expected("missing domain name", section.span(), "a name"))?
                    .sym()?
                    .to_ascii_lowercase();
                if declared != domain.name {
                    return Err(ParseError::syntax(
                        format!("problem is for domain `{declared}`, not `{}`", domain.name),
                        body[1].span(),
                    ));
                }
            }
            ":requirements" => requirements(body)?,
            ":objects" => objects = typed_list(&body[1..])?,
            ":init" => {
                for e in &body[1..] {
                    let h = e.head();
                    reject_connective(&h, e.span(), "init")?;
                    init.insert(ground_atom(e)?);
                }
            }
            ":goal" => {
                let expr = body
                    .get(1)
                    .ok_or_else(|| ParseError::expected("missing goal", section.span(), "a goal expression"))?;
                for l in conjunction(expr)? {
                    goal.insert(Atom::new(&l.predicate, &l.args));
                }
            }
            other => {
                return Err(ParseError::UnsupportedFeature {
                    feature: format!("section {other}"),
                    span: section.span(),
                })
            }
        }
    }

    Problem::new(domain, &name, objects, init, goal).map_err(|source| ParseError::Semantic {
        source,
        span: top.span(),
    })
}

// ── plans ───────────────────────────────────────────────────────────────

/// Parses a VAL-style plan file: one `(action args...)` per line; `;`
/// comments and blank lines are ignored.
pub fn parse_plan(text: &str, domain: &Domain, problem: &Problem) -> Result<Plan, ParseError> {
    let mut actions = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split(';').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let span = SourceSpan {
            start: 0,
            end: line.len(),
            line: lineno as u32 + 1,
            column: 1,
        };
        let atom: Atom = line
            .parse()
            .map_err(|source| ParseError::Semantic { source, span })?;
        let args: Vec<String> = atom.args().to_vec();
        let action = resolve_action(domain, problem, atom.predicate(), &args)
            .map_err(|source| ParseError::Semantic { source, span })?;
        actions.push(action);
    }
    Ok(Plan::new(actions))
}

// ── printing ────────────────────────────────────────────────────────────

fn print_lifted(a: &LiftedAtom) -> String {
    if a.args.is_empty() {
        format!("({})", a.predicate)
    } else {
        format!("({} {})", a.predicate, a.args.join(" "))
    }
}

/// Canonical domain text. Predicates and actions keep declaration order;
/// atom sets print sorted, so output is deterministic.
pub fn print_domain(d: &Domain) -> String {
    let mut out = String::new();
    out.push_str(&format!("(define (domain {})\n", d.name));
    out.push_str("  (:requirements :strips :typing)\n");
    if !d.types.is_empty() {
        let entries: Vec<String> = d.types.entries().map(|(t, p)| format!("{t} - {p}")).collect();
        out.push_str(&format!("  (:types {})\n", entries.join(" ")));
    }
    out.push_str("  (:predicates\n");
    for p in &d.predicates {
        let params: Vec<String> = p
            .param_types
            .iter()
            .enumerate()
            .map(|(i, t)| format!("?x{i} - {t}"))
            .collect();
        if params.is_empty() {
            out.push_str(&format!("    ({})\n", p.name));
        } else {
            out.push_str(&format!("    ({} {})\n", p.name, params.join(" ")));
        }
    }
    out.push_str("  )\n");
    for a in &d.actions {
        let params: Vec<String> = a.params.iter().map(|p| format!("{} - {}", p.name, p.ty)).collect();
        out.push_str(&format!("  (:action {}\n", a.name));
        out.push_str(&format!("    :parameters ({})\n", params.join(" ")));
        let pre: Vec<String> = a.pre.iter().map(print_lifted).collect();
        out.push_str(&format!("    :precondition (and {})\n", pre.join(" ")));
        let mut eff: Vec<String> = a.add.iter().map(print_lifted).collect();
        eff.extend(a.del.iter().map(|l| format!("(not {})", print_lifted(l))));
        out.push_str(&format!("    :effect (and {})\n", eff.join(" ")));
        out.push_str("  )\n");
    }
    out.push_str(")\n");
    out
}

/// Canonical problem text. Objects keep declaration order; init and goal
/// atoms print sorted.
pub fn print_problem(p: &Problem) -> String {
    let mut out = String::new();
    out.push_str(&format!("(define (problem {})\n", p.name));
    out.push_str(&format!("  (:domain {})\n", p.domain_name));
    if !p.objects.is_empty() {
        let objs: Vec<String> = p.objects.iter().map(|o| format!("{} - {}", o.name, o.ty)).collect();
        out.push_str(&format!("  (:objects {})\n", objs.join(" ")));
    }
    let init: Vec<String> = p.init.iter().map(|a| a.to_string()).collect();
    out.push_str(&format!("  (:init {})\n", init.join(" ")));
    let goal: Vec<String> = p.goal.iter().map(|a| a.to_string()).collect();
    out.push_str(&format!("  (:goal (and {}))\n", goal.join(" ")));
    out.push_str(")\n");
    out
}

/// One action per line, VAL syntax. The empty plan prints as empty text.
pub fn print_plan(plan: &Plan) -> String {
    let mut out = String::new();
    for a in plan.iter() {
        out.push_str(&a.to_string());
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const BW: &str = r#"
(define (domain blocksworld)
  (:requirements :strips :typing)
  (:types block)
  (:predicates (on ?x - block ?y - block) (ontable ?x - block)
               (clear ?x - block) (handempty) (holding ?x - block))
  (:action pick-up
    :parameters (?x - block)
    :precondition (and (clear ?x) (ontable ?x) (handempty))
    :effect (and (not (ontable ?x)) (not (clear ?x)) (not (handempty)) (holding ?x)))
  (:action put-down
    :parameters (?x - block)
    :precondition (holding ?x)
    :effect (and (not (holding ?x)) (clear ?x) (handempty) (ontable ?x)))
  (:action stack
    :parameters (?x - block ?y - block)
    :precondition (and (holding ?x) (clear ?y))
    :effect (and (not (holding ?x)) (not (clear ?y)) (clear ?x) (handempty) (on ?x ?y)))
  (:action unstack
    :parameters (?x - block ?y - block)
    :precondition (and (on ?x ?y) (clear ?x) (handempty))
    :effect (and (holding ?x) (clear ?y) (not (clear ?x)) (not (handempty)) (not (on ?x ?y)))))
"#;

    const BW_PROBLEM: &str = r#"
(define (problem bw-2)
  (:domain blocksworld)
  (:objects a b - block)
  (:init (ontable a) (ontable b) (clear a) (clear b) (handempty))
  (:goal (and (on a b))))
"#;

    #[test]
    fn minimal_domain() {
        let d = parse_domain("(define (domain d) (:predicates (p)))").unwrap();
        assert_eq!(d.name, "d");
        assert_eq!(d.predicates.len(), 1);
        assert!(d.actions.is_empty());
    }

    #[test]
    fn blocksworld_counts() {
        let d = parse_domain(BW).unwrap();
        assert_eq!(d.predicates.len(), 5);
        assert_eq!(d.actions.len(), 4);
        let stack = d.action("stack").unwrap();
        assert_eq!(stack.arity(), 2);
        assert_eq!(stack.pre.len(), 2);
        assert_eq!(stack.add.len(), 3);
        assert_eq!(stack.del.len(), 2);
    }

    #[test]
    fn rejects_foreign_requirements_and_features() {
        let t = "(define (domain d) (:requirements :strips :adl) (:predicates (p)))";
        assert!(matches!(parse_domain(t), Err(ParseError::UnsupportedFeature { .. })));

        let t = r#"(define (domain d) (:predicates (p) (q))
            (:action a :parameters () :precondition (p)
             :effect (when (p) (q))))"#;
        let err = parse_domain(t).unwrap_err();
        match err {
            ParseError::UnsupportedFeature { feature, .. } => assert!(feature.contains("when")),
            other => panic!("expected UnsupportedFeature, got {other:?}"),
        }

        let t = r#"(define (domain d) (:predicates (p))
            (:action a :parameters () :precondition (not (p)) :effect (p)))"#;
        assert!(matches!(parse_domain(t), Err(ParseError::UnsupportedFeature { .. })));

        let t = "(define (domain d) (:functions (cost)))";
        assert!(matches!(parse_domain(t), Err(ParseError::UnsupportedFeature { .. })));
    }

    #[test]
    fn every_foreign_requirement_flag_is_rejected() {
        for flag in [
            ":adl",
            ":negative-preconditions",
            ":disjunctive-preconditions",
            ":equality",
            ":existential-preconditions",
            ":universal-preconditions",
            ":conditional-effects",
            ":fluents",
            ":durative-actions",
            ":derived-predicates",
            ":action-costs",
        ] {
            let t = format!(
                "(define (domain d) (:requirements :strips :typing {flag}) (:predicates (p)))"
            );
            match parse_domain(&t) {
                Err(ParseError::UnsupportedFeature { feature, .. }) => {
                    assert!(feature.contains(flag), "{feature} should name {flag}")
                }
                other => panic!("{flag}: expected UnsupportedFeature, got {other:?}"),
            }
        }
    }

    #[test]
    fn problem_init_and_goal() {
        let d = parse_domain(BW).unwrap();
        let p = parse_problem(BW_PROBLEM, &d).unwrap();
        assert_eq!(p.init.len(), 5);
        assert_eq!(p.goal.len(), 1);
        assert_eq!(p.objects.len(), 2);
    }

    #[test]
    fn problem_undeclared_object() {
        let d = parse_domain(BW).unwrap();
        let t = r#"(define (problem x) (:domain blocksworld)
            (:objects a b - block) (:init (ontable a)) (:goal (on a c)))"#;
        match parse_problem(t, &d) {
            Err(ParseError::Semantic {
                source: PddlError::UndeclaredObject(o),
                ..
            }) => assert_eq!(o, "c"),
            other => panic!("expected UndeclaredObject, got {other:?}"),
        }
    }

    #[test]
    fn problem_empty_goal() {
        let d = parse_domain(BW).unwrap();
        let t = r#"(define (problem x) (:domain blocksworld)
            (:objects a - block) (:init (ontable a) (clear a) (handempty)) (:goal (and)))"#;
        let p = parse_problem(t, &d).unwrap();
        assert!(p.goal.is_empty());
    }

    #[test]
    fn plan_parsing() {
        let d = parse_domain(BW).unwrap();
        let p = parse_problem(BW_PROBLEM, &d).unwrap();
        let plan = parse_plan("(pick-up a)\n; comment\n\n(stack a b)\n", &d, &p).unwrap();
        assert_eq!(plan.len(), 2);
        assert_eq!(plan.actions[1].to_string(), "(stack a b)");

        assert_eq!(parse_plan("", &d, &p).unwrap().len(), 0);

        match parse_plan("(pick-up a b)", &d, &p) {
            Err(ParseError::Semantic {
                source: PddlError::ActionArity { expected, found, .. },
                ..
            }) => {
                assert_eq!((expected, found), (1, 2));
            }
            other => panic!("expected ActionArity, got {other:?}"),
        }

        match parse_plan("(fly a)", &d, &p) {
            Err(ParseError::Semantic {
                source: PddlError::UnknownAction(_),
                ..
            }) => {}
            other => panic!("expected UnknownAction, got {other:?}"),
        }
    }

    #[test]
    fn round_trip_domain_problem_plan() {
        let d = parse_domain(BW).unwrap();
        let printed = print_domain(&d);
        let d2 = parse_domain(&printed).unwrap();
        assert_eq!(d, d2);
        assert_eq!(printed, print_domain(&d2));

        let p = parse_problem(BW_PROBLEM, &d).unwrap();
        let printed = print_problem(&p);
        let p2 = parse_problem(&printed, &d).unwrap();
        assert_eq!(p, p2);

        let plan = parse_plan("(pick-up b)\n(stack b a)\n", &d, &p).unwrap();
        let printed = print_plan(&plan);
        assert_eq!(parse_plan(&printed, &d, &p).unwrap(), plan);
        assert_eq!(print_plan(&Plan::empty()), "");
    }

    #[test]
    fn spans_point_at_errors() {
        let err = parse_domain("(define (domain d) (:predicates (p))").unwrap_err();
        assert!(matches!(err, ParseError::Syntax { .. }));
        let err = parse_domain("(define (domain d)\n  (:bogus))").unwrap_err();
        assert_eq!(err.span().line, 2);
    }
}
