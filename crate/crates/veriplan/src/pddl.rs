//! STRIPS planning formalism: fluents, states, grounded actions, the
//! transition function, and goal satisfaction.
//!
//! A domain is a set of typed predicate declarations plus action schemas
//! `<pre, add, del>`; a problem fixes the objects, the initial state and the
//! goal atoms. States are finite sets of ground atoms under the closed-world
//! assumption. Applying an action computes `(s \ del) ∪ add`, so an atom
//! listed in both `add` and `del` survives.
//!
//! Everything in this module is an immutable value and every operation is a
//! pure function.

use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

/// The implicit root of every type hierarchy.
pub const ROOT_TYPE: &str = "object";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PddlError {
    #[error("unknown type `{0}`")]
    UnknownType(String),
    #[error("unknown predicate `{0}`")]
    UnknownPredicate(String),
    #[error("unknown action `{0}`")]
    UnknownAction(String),
    #[error("undeclared object `{0}`")]
    UndeclaredObject(String),
    #[error("action `{action}` expects {expected} arguments, got {found}")]
    ActionArity {
        action: String,
        expected: usize,
        found: usize,
    },
    #[error("predicate `{predicate}` expects {expected} arguments, got {found}")]
    PredicateArity {
        predicate: String,
        expected: usize,
        found: usize,
    },
    #[error("object `{object}` has type `{found}`, expected a `{expected}`")]
    TypeMismatch {
        object: String,
        found: String,
        expected: String,
    },
    #[error("duplicate {kind} name `{name}`")]
    DuplicateName { kind: &'static str, name: String },
    #[error("variable `{variable}` in action `{action}` is not a parameter")]
    UnboundVariable { action: String, variable: String },
    #[error("action `{0}` is not applicable in this state")]
    Inapplicable(String),
    #[error("type hierarchy contains a cycle through `{0}`")]
    TypeCycle(String),
    #[error("malformed atom text `{0}`")]
    MalformedAtom(String),
}

fn canon(s: &str) -> String {
    s.to_ascii_lowercase()
}

/// A ground atom: a predicate applied to object names.
///
/// Atoms are canonicalized to lowercase on construction. The textual form is
/// the PDDL one, `(on a b)`; zero-arity atoms print as `(handempty)`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub struct Atom {
    predicate: String,
    args: Vec<String>,
}

impl Atom {
    pub fn new<S: AsRef<str>>(predicate: &str, args: &[S]) -> Self {
        Atom {
            predicate: canon(predicate),
            args: args.iter().map(|a| canon(a.as_ref())).collect(),
        }
    }

    pub fn predicate(&self) -> &str {
        &self.predicate
    }

    pub fn args(&self) -> &[String] {
        &self.args
    }

    pub fn arity(&self) -> usize {
        self.args.len()
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}", self.predicate)?;
        for a in &self.args {
            write!(f, " {a}")?;
        }
        write!(f, ")")
    }
}

impl From<Atom> for String {
    fn from(a: Atom) -> String {
        a.to_string()
    }
}

impl TryFrom<String> for Atom {
    type Error = PddlError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl FromStr for Atom {
    type Err = PddlError;

    /// Parses the PDDL text form `(pred arg ...)`; a bare `pred arg ...`
    /// without parens is accepted too.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim();
        let inner = match (t.starts_with('('), t.ends_with(')')) {
            (true, true) => &t[1..t.len() - 1],
            (false, false) => t,
            _ => return Err(PddlError::MalformedAtom(s.to_string())),
        };
        if inner.contains('(') || inner.contains(')') {
            return Err(PddlError::MalformedAtom(s.to_string()));
        }
        let mut parts = inner.split_whitespace();
        let predicate = parts
            .next()
            .ok_or_else(|| PddlError::MalformedAtom(s.to_string()))?;
        let args: Vec<&str> = parts.collect();
        Ok(Atom::new(predicate, &args))
    }
}

/// A state: a finite set of ground atoms, true under closed-world reading.
///
/// Set semantics throughout; the canonical order (and therefore the canonical
/// serialization) is the sorted one.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(into = "Vec<String>", try_from = "Vec<String>")]
pub struct State {
    atoms: BTreeSet<Atom>,
}

impl State {
    pub fn new() -> Self {
        State::default()
    }

    pub fn from_atoms<I: IntoIterator<Item = Atom>>(atoms: I) -> Self {
        State {
            atoms: atoms.into_iter().collect(),
        }
    }

    pub fn contains(&self, atom: &Atom) -> bool {
        self.atoms.contains(atom)
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Atom> {
        self.atoms.iter()
    }

    pub fn atoms(&self) -> &BTreeSet<Atom> {
        &self.atoms
    }

    pub fn insert(&mut self, atom: Atom) {
        self.atoms.insert(atom);
    }

    pub fn remove(&mut self, atom: &Atom) {
        self.atoms.remove(atom);
    }
}

impl FromIterator<Atom> for State {
    fn from_iter<I: IntoIterator<Item = Atom>>(iter: I) -> Self {
        State::from_atoms(iter)
    }
}

impl<'a> IntoIterator for &'a State {
    type Item = &'a Atom;
    type IntoIter = std::collections::btree_set::Iter<'a, Atom>;
    fn into_iter(self) -> Self::IntoIter {
        self.atoms.iter()
    }
}

impl fmt::Display for State {
    /// `{(clear a), (handempty), (ontable a)}` — always sorted.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, a) in self.atoms.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{a}")?;
        }
        write!(f, "}}")
    }
}

impl From<State> for Vec<String> {
    fn from(s: State) -> Vec<String> {
        s.atoms.iter().map(|a| a.to_string()).collect()
    }
}

impl TryFrom<Vec<String>> for State {
    type Error = PddlError;
    fn try_from(v: Vec<String>) -> Result<Self, Self::Error> {
        v.iter()
            .map(|s| s.parse())
            .collect::<Result<Vec<Atom>, _>>()
            .map(State::from_atoms)
    }
}

/// A name together with its declared type, used for schema parameters and
/// problem objects.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TypedName {
    pub name: String,
    pub ty: String,
}

impl TypedName {
    pub fn new(name: &str, ty: &str) -> Self {
        TypedName {
            name: canon(name),
            ty: canon(ty),
        }
    }
}

/// A predicate declaration: name plus parameter types.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredicateDecl {
    pub name: String,
    pub param_types: Vec<String>,
}

impl PredicateDecl {
    pub fn new<S: AsRef<str>>(name: &str, param_types: &[S]) -> Self {
        PredicateDecl {
            name: canon(name),
            param_types: param_types.iter().map(|t| canon(t.as_ref())).collect(),
        }
    }

    pub fn arity(&self) -> usize {
        self.param_types.len()
    }
}

/// An atom whose arguments are schema variables (`?x`-style names).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LiftedAtom {
    pub predicate: String,
    pub args: Vec<String>,
}

impl LiftedAtom {
    pub fn new<S: AsRef<str>>(predicate: &str, args: &[S]) -> Self {
        LiftedAtom {
            predicate: canon(predicate),
            args: args.iter().map(|a| canon(a.as_ref())).collect(),
        }
    }

    /// Substitutes variables through `binding`; arguments without a binding
    /// entry are kept verbatim (they are constants).
    fn instantiate(&self, binding: &BTreeMap<String, String>) -> Atom {
        let args: Vec<String> = self
            .args
            .iter()
            .map(|v| binding.get(v).cloned().unwrap_or_else(|| v.clone()))
            .collect();
        Atom::new(&self.predicate, &args)
    }
}

/// An action schema `<pre, add, del>` over typed parameters.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionSchema {
    pub name: String,
    pub params: Vec<TypedName>,
    pub pre: BTreeSet<LiftedAtom>,
    pub add: BTreeSet<LiftedAtom>,
    pub del: BTreeSet<LiftedAtom>,
}

impl ActionSchema {
    pub fn arity(&self) -> usize {
        self.params.len()
    }
}

/// Single-inheritance type hierarchy with the implicit root `object`.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TypeHierarchy {
    parent: BTreeMap<String, String>,
}

impl TypeHierarchy {
    pub fn new() -> Self {
        TypeHierarchy::default()
    }

    pub fn declare(&mut self, ty: &str, parent: &str) {
        let ty = canon(ty);
        if ty != ROOT_TYPE {
            self.parent.insert(ty, canon(parent));
        }
    }

    pub fn is_declared(&self, ty: &str) -> bool {
        ty == ROOT_TYPE || self.parent.contains_key(ty)
    }

    /// True iff `ty` equals `ancestor` or derives from it. Every declared
    /// type derives from `object`.
    pub fn is_subtype(&self, ty: &str, ancestor: &str) -> bool {
        if ty == ancestor || ancestor == ROOT_TYPE {
            return true;
        }
        let mut cur = ty;
        while let Some(p) = self.parent.get(cur) {
            if p == ancestor {
                return true;
            }
            cur = p;
        }
        false
    }

    /// Declared types with their parents, sorted by name.
    pub fn entries(&self) -> impl Iterator<Item = (&String, &String)> {
        self.parent.iter()
    }

    pub fn is_empty(&self) -> bool {
        self.parent.is_empty()
    }

    fn check_acyclic(&self) -> Result<(), PddlError> {
        for start in self.parent.keys() {
            let mut cur = start;
            let mut hops = 0;
            while let Some(p) = self.parent.get(cur) {
                cur = p;
                hops += 1;
                if hops > self.parent.len() {
                    return Err(PddlError::TypeCycle(start.clone()));
                }
            }
        }
        Ok(())
    }
}

/// A planning domain: predicates plus action schemas.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Domain {
    pub name: String,
    pub types: TypeHierarchy,
    pub predicates: Vec<PredicateDecl>,
    pub actions: Vec<ActionSchema>,
}

impl Domain {
    /// Builds a domain, checking name uniqueness, type declarations, schema
    /// variable binding and predicate arities.
    pub fn new(
        name: &str,
        types: TypeHierarchy,
        predicates: Vec<PredicateDecl>,
        actions: Vec<ActionSchema>,
    ) -> Result<Self, PddlError> {
        types.check_acyclic()?;
        let d = Domain {
            name: canon(name),
            types,
            predicates,
            actions,
        };
        let mut seen = BTreeSet::new();
        for p in &d.predicates {
            if !seen.insert(p.name.clone()) {
                return Err(PddlError::DuplicateName {
                    kind: "predicate",
                    name: p.name.clone(),
                });
            }
            for t in &p.param_types {
                if !d.types.is_declared(t) {
                    return Err(PddlError::UnknownType(t.clone()));
                }
            }
        }
        let mut seen = BTreeSet::new();
        for a in &d.actions {
            if !seen.insert(a.name.clone()) {
                return Err(PddlError::DuplicateName {
                    kind: "action",
                    name: a.name.clone(),
                });
            }
            let params: BTreeSet<&str> = a.params.iter().map(|p| p.name.as_str()).collect();
            for p in &a.params {
                if !d.types.is_declared(&p.ty) {
                    return Err(PddlError::UnknownType(p.ty.clone()));
                }
            }
            for atom in a.pre.iter().chain(&a.add).chain(&a.del) {
                let decl = d
                    .predicate(&atom.predicate)
                    .ok_or_else(|| PddlError::UnknownPredicate(atom.predicate.clone()))?;
                if decl.arity() != atom.args.len() {
                    return Err(PddlError::PredicateArity {
                        predicate: atom.predicate.clone(),
                        expected: decl.arity(),
                        found: atom.args.len(),
                    });
                }
                for v in &atom.args {
                    if v.starts_with('?') && !params.contains(v.as_str()) {
                        return Err(PddlError::UnboundVariable {
                            action: a.name.clone(),
                            variable: v.clone(),
                        });
                    }
                }
            }
        }
        Ok(d)
    }

    pub fn predicate(&self, name: &str) -> Option<&PredicateDecl> {
        self.predicates.iter().find(|p| p.name == name)
    }

    pub fn action(&self, name: &str) -> Option<&ActionSchema> {
        self.actions.iter().find(|a| a.name == name)
    }
}

/// A fully instantiated action: schema name, bound arguments, and the ground
/// precondition/add/delete sets.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct GroundAction {
    pub name: String,
    pub args: Vec<String>,
    pub pre: BTreeSet<Atom>,
    pub add: BTreeSet<Atom>,
    pub del: BTreeSet<Atom>,
}

impl GroundAction {
    /// Instantiates `schema` with `args` (arity-checked; type checking is the
    /// caller's concern since it needs an object list).
    pub fn instantiate(schema: &ActionSchema, args: &[String]) -> Result<Self, PddlError> {
        if args.len() != schema.params.len() {
            return Err(PddlError::ActionArity {
                action: schema.name.clone(),
                expected: schema.params.len(),
                found: args.len(),
            });
        }
        let binding: BTreeMap<String, String> = schema
            .params
            .iter()
            .zip(args)
            .map(|(p, a)| (p.name.clone(), canon(a)))
            .collect();
        Ok(GroundAction {
            name: schema.name.clone(),
            args: args.iter().map(|a| canon(a)).collect(),
            pre: schema.pre.iter().map(|l| l.instantiate(&binding)).collect(),
            add: schema.add.iter().map(|l| l.instantiate(&binding)).collect(),
            del: schema.del.iter().map(|l| l.instantiate(&binding)).collect(),
        })
    }

    /// The variable→object binding, in schema parameter order.
    pub fn binding<'a>(&'a self, schema: &'a ActionSchema) -> BTreeMap<&'a str, &'a str> {
        schema
            .params
            .iter()
            .zip(&self.args)
            .map(|(p, a)| (p.name.as_str(), a.as_str()))
            .collect()
    }
}

impl fmt::Display for GroundAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}", self.name)?;
        for a in &self.args {
            write!(f, " {a}")?;
        }
        write!(f, ")")
    }
}

/// A planning problem: typed objects, initial state, and goal atoms.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Problem {
    pub name: String,
    pub domain_name: String,
    pub objects: Vec<TypedName>,
    pub init: State,
    pub goal: BTreeSet<Atom>,
}

impl Problem {
    /// Builds a problem, type-checking objects and the init/goal atoms
    /// against `domain`.
    pub fn new(
        domain: &Domain,
        name: &str,
        objects: Vec<TypedName>,
        init: State,
        goal: BTreeSet<Atom>,
    ) -> Result<Self, PddlError> {
        let p = Problem {
            name: canon(name),
            domain_name: domain.name.clone(),
            objects,
            init,
            goal,
        };
        let mut seen = BTreeSet::new();
        for o in &p.objects {
            if !seen.insert(o.name.clone()) {
                return Err(PddlError::DuplicateName {
                    kind: "object",
                    name: o.name.clone(),
                });
            }
            if !domain.types.is_declared(&o.ty) {
                return Err(PddlError::UnknownType(o.ty.clone()));
            }
        }
        for atom in p.init.iter().chain(&p.goal) {
            p.check_atom(domain, atom)?;
        }
        Ok(p)
    }

    pub fn object(&self, name: &str) -> Option<&TypedName> {
        self.objects.iter().find(|o| o.name == name)
    }

    /// Checks that `atom` uses a declared predicate at the right arity, with
    /// declared objects of compatible types.
    pub fn check_atom(&self, domain: &Domain, atom: &Atom) -> Result<(), PddlError> {
        let decl = domain
            .predicate(atom.predicate())
            .ok_or_else(|| PddlError::UnknownPredicate(atom.predicate().to_string()))?;
        if decl.arity() != atom.arity() {
            return Err(PddlError::PredicateArity {
                predicate: decl.name.clone(),
                expected: decl.arity(),
                found: atom.arity(),
            });
        }
        for (arg, want) in atom.args().iter().zip(&decl.param_types) {
            let obj = self
                .object(arg)
                .ok_or_else(|| PddlError::UndeclaredObject(arg.clone()))?;
            if !domain.types.is_subtype(&obj.ty, want) {
                return Err(PddlError::TypeMismatch {
                    object: arg.clone(),
                    found: obj.ty.clone(),
                    expected: want.clone(),
                });
            }
        }
        Ok(())
    }
}

/// An ordered action sequence; may be empty.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Plan {
    pub actions: Vec<GroundAction>,
}

impl Plan {
    pub fn new(actions: Vec<GroundAction>) -> Self {
        Plan { actions }
    }

    pub fn empty() -> Self {
        Plan::default()
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &GroundAction> {
        self.actions.iter()
    }
}

/// True iff every precondition of `a` holds in `s`.
pub fn applicable(s: &State, a: &GroundAction) -> bool {
    a.pre.iter().all(|atom| s.contains(atom))
}

/// The transition function `(s \ del(a)) ∪ add(a)`. The union runs after the
/// deletion, so atoms in both `add` and `del` survive.
///
/// Fails with [`PddlError::Inapplicable`] when a precondition is missing; use
/// [`apply_unchecked`] to evaluate the formula regardless.
pub fn apply(s: &State, a: &GroundAction) -> Result<State, PddlError> {
    if !applicable(s, a) {
        return Err(PddlError::Inapplicable(a.to_string()));
    }
    Ok(apply_unchecked(s, a))
}

/// Evaluates the transition formula without the applicability check. Useful
/// when replaying claimed traces whose actions may not be executable.
pub fn apply_unchecked(s: &State, a: &GroundAction) -> State {
    let mut atoms = s.atoms().clone();
    for d in &a.del {
        atoms.remove(d);
    }
    for add in &a.add {
        atoms.insert(add.clone());
    }
    State { atoms }
}

/// True iff every goal atom holds in `s`.
pub fn satisfies_goal(s: &State, goal: &BTreeSet<Atom>) -> bool {
    goal.iter().all(|g| s.contains(g))
}

/// Size of the symmetric difference `|s \ s'| + |s' \ s|`.
pub fn state_distance(s: &State, other: &State) -> usize {
    s.atoms().symmetric_difference(other.atoms()).count()
}

/// Enumerates every well-typed ground atom over `objects`: the fluent
/// universe of a problem. Deterministic order: predicates in declaration
/// order, argument tuples lexicographic.
pub fn ground_atoms(d: &Domain, objects: &[TypedName]) -> Result<Vec<Atom>, PddlError> {
    let mut out = Vec::new();
    for pred in &d.predicates {
        let mut candidates: Vec<Vec<&str>> = Vec::with_capacity(pred.param_types.len());
        for ty in &pred.param_types {
            if !d.types.is_declared(ty) {
                return Err(PddlError::UnknownType(ty.clone()));
            }
            let mut objs: Vec<&str> = objects
                .iter()
                .filter(|o| d.types.is_subtype(&o.ty, ty))
                .map(|o| o.name.as_str())
                .collect();
            objs.sort_unstable();
            candidates.push(objs);
        }
        if candidates.iter().any(|c| c.is_empty()) {
            continue;
        }
        let mut idx = vec![0usize; candidates.len()];
        loop {
            let args: Vec<&str> = idx.iter().zip(&candidates).map(|(&i, c)| c[i]).collect();
            out.push(Atom::new(&pred.name, &args));
            let mut pos = idx.len();
            loop {
                if pos == 0 {
                    break;
                }
                pos -= 1;
                idx[pos] += 1;
                if idx[pos] < candidates[pos].len() {
                    break;
                }
                idx[pos] = 0;
            }
            if idx.iter().all(|&i| i == 0) {
                break;
            }
        }
    }
    Ok(out)
}

/// Resolves an action occurrence `(name args...)` against a domain and a
/// problem: the schema must exist, the arity must match, and every argument
/// must be a declared object of a compatible type.
pub fn resolve_action(
    d: &Domain,
    p: &Problem,
    name: &str,
    args: &[String],
) -> Result<GroundAction, PddlError> {
    let lname = canon(name);
    let schema = d
        .action(&lname)
        .ok_or_else(|| PddlError::UnknownAction(lname.clone()))?;
    let action = GroundAction::instantiate(schema, args)?;
    for (arg, param) in action.args.iter().zip(&schema.params) {
        let obj = p
            .object(arg)
            .ok_or_else(|| PddlError::UndeclaredObject(arg.clone()))?;
        if !d.types.is_subtype(&obj.ty, &param.ty) {
            return Err(PddlError::TypeMismatch {
                object: arg.clone(),
                found: obj.ty.clone(),
                expected: param.ty.clone(),
            });
        }
    }
    Ok(action)
}

/// Instantiates every schema of `d` over `objects`, in deterministic order:
/// schemas in declaration order, bindings lexicographic per parameter
/// position. Semantically identical instantiations under distinct bindings
/// are all kept.
pub fn ground(d: &Domain, objects: &[TypedName]) -> Result<Vec<GroundAction>, PddlError> {
    for o in objects {
        if !d.types.is_declared(&o.ty) {
            return Err(PddlError::UnknownType(o.ty.clone()));
        }
    }
    let mut out = Vec::new();
    for schema in &d.actions {
        let mut candidates: Vec<Vec<&str>> = Vec::with_capacity(schema.params.len());
        for p in &schema.params {
            if !d.types.is_declared(&p.ty) {
                return Err(PddlError::UnknownType(p.ty.clone()));
            }
            let mut objs: Vec<&str> = objects
                .iter()
                .filter(|o| d.types.is_subtype(&o.ty, &p.ty))
                .map(|o| o.name.as_str())
                .collect();
            objs.sort_unstable();
            candidates.push(objs);
        }
        if candidates.iter().any(|c| c.is_empty()) {
            continue;
        }
        // Odometer over candidate lists; the last parameter cycles fastest.
        let mut idx = vec![0usize; candidates.len()];
        loop {
            let args: Vec<String> = idx
                .iter()
                .zip(&candidates)
                .map(|(&i, c)| c[i].to_string())
                .collect();
            out.push(GroundAction::instantiate(schema, &args)?);
            let mut pos = idx.len();
            loop {
                if pos == 0 {
                    break;
                }
                pos -= 1;
                idx[pos] += 1;
                if idx[pos] < candidates[pos].len() {
                    break;
                }
                idx[pos] = 0;
            }
            if idx.iter().all(|&i| i == 0) {
                break;
            }
        }
    }
    Ok(out)
}
