use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::formula::Formula;

/// Largest number of distinct atoms the truth-table check accepts.
pub const MAX_PROPOSITIONAL_ATOMS: usize = 20;
/// Largest number of relation bits enumerated per domain size (2^24 models).
const MAX_MODEL_BITS: usize = 24;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SemanticsError {
    #[error("formula is outside the propositional fragment: {0}")]
    WrongFragment(String),
    #[error("{atoms} distinct atoms exceed the truth-table limit of {limit}")]
    TooManyAtoms { atoms: usize, limit: usize },
    #[error("predicate `{predicate}` has arity {arity}; bounded checking supports arity ≤ 2")]
    ArityTooLarge { predicate: String, arity: usize },
    #[error("predicate `{0}` is used with different arities")]
    ArityMismatch(String),
    #[error("domain size {domain_size} needs {bits} relation bits, above the limit of {limit}")]
    ModelSpaceTooLarge { domain_size: usize, bits: usize, limit: usize },
    #[error("domain bound must be at least 1")]
    EmptyBound,
    #[error("variable `{0}` is unbound")]
    Unbound(String),
    #[error("predicate `{0}` is not interpreted")]
    Uninterpreted(String),
}

/// A finite structure: a domain `{0, …, n-1}` and the extension of every predicate.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Interpretation {
    pub domain_size: usize,
    /// Predicate name to the set of argument tuples for which it holds.
    /// Zero-ary predicates hold iff the set contains the empty tuple.
    pub relations: BTreeMap<String, BTreeSet<Vec<usize>>>,
}

impl Interpretation {
    pub fn holds(&self, predicate: &str, args: &[usize]) -> Option<bool> {
        self.relations.get(predicate).map(|r| r.contains(args))
    }

    fn element_name(i: usize) -> String {
        if i < 26 {
            char::from(b'a' + i as u8).to_string()
        } else {
            format!("e{i}")
        }
    }
}

impl fmt::Display for Interpretation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<String> = (0..self.domain_size).map(Self::element_name).collect();
        write!(f, "domain {{{}}}", names.join(", "))?;
        for (pred, tuples) in &self.relations {
            let items: Vec<String> = tuples
                .iter()
                .map(|t| match t.len() {
                    0 => "()".to_string(),
                    1 => names[t[0]].clone(),
                    _ => format!("({})", t.iter().map(|&e| names[e].as_str()).collect::<Vec<_>>().join(", ")),
                })
                .collect();
            write!(f, "; {pred} = {{{}}}", items.join(", "))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum Verdict {
    /// No distinguishing structure with at most `bound` elements.
    Equivalent { bound: usize },
    /// The first distinguishing structure in enumeration order.
    CounterModel { model: Interpretation, lhs: bool, rhs: bool },
}

impl Verdict {
    pub fn is_equivalent(&self) -> bool {
        matches!(self, Verdict::Equivalent { .. })
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Verdict::Equivalent { bound } => write!(f, "equivalent on all domains of size ≤ {bound}"),
            Verdict::CounterModel { model, lhs, rhs } => write!(
                f,
                "not equivalent: counter-model of size {} ({model}) makes the left side {lhs} and the right side {rhs}",
                model.domain_size
            ),
        }
    }
}

/// Evaluates a closed formula in a finite structure.
pub fn evaluate(formula: &Formula, model: &Interpretation) -> Result<bool, SemanticsError> {
    fn go(f: &Formula, m: &Interpretation, env: &mut Vec<(String, usize)>) -> Result<bool, SemanticsError> {
        let lookup = |v: &str, env: &[(String, usize)]| {
            env.iter()
                .rev()
                .find(|(name, _)| name == v)
                .map(|&(_, e)| e)
                .ok_or_else(|| SemanticsError::Unbound(v.to_string()))
        };
        match f {
            Formula::True => Ok(true),
            Formula::Atom { predicate, args } => {
                let tuple = args.iter().map(|a| lookup(a, env)).collect::<Result<Vec<_>, _>>()?;
                m.holds(predicate, &tuple).ok_or_else(|| SemanticsError::Uninterpreted(predicate.clone()))
            }
            Formula::Eq(a, b) => Ok(lookup(a, env)? == lookup(b, env)?),
            Formula::Not(g) => Ok(!go(g, m, env)?),
            Formula::And(a, b) => Ok(go(a, m, env)? && go(b, m, env)?),
            Formula::Exists(v, body) => {
                for e in 0..m.domain_size {
                    env.push((v.clone(), e));
                    let hit = go(body, m, env);
                    env.pop();
                    if hit? {
                        return Ok(true);
                    }
                }
                Ok(false)
            }
        }
    }
    go(formula, model, &mut Vec::new())
}

fn check_propositional(f: &Formula) -> Result<(), SemanticsError> {
    if f.has_quantifier() {
        return Err(SemanticsError::WrongFragment("contains a quantifier".into()));
    }
    if f.has_equality() {
        return Err(SemanticsError::WrongFragment("contains an equality".into()));
    }
    if let Some((p, n)) = f.predicates().into_iter().find(|(_, n)| *n > 0) {
        return Err(SemanticsError::WrongFragment(format!("predicate `{p}` has {n} argument(s)")));
    }
    Ok(())
}

fn eval_valuation(f: &Formula, atoms: &[String], bits: u32) -> bool {
    match f {
        Formula::True => true,
        Formula::Atom { predicate, .. } => {
            let i = atoms.iter().position(|a| a == predicate).expect("atom collected");
            bits >> i & 1 == 1
        }
        Formula::Not(g) => !eval_valuation(g, atoms, bits),
        Formula::And(a, b) => eval_valuation(a, atoms, bits) && eval_valuation(b, atoms, bits),
        Formula::Eq(..) | Formula::Exists(..) => unreachable!("fragment checked"),
    }
}

/// Returns a valuation on which the two formulas differ, if any.
///
/// Valuations are enumerated with the sorted atom list as a little-endian
/// binary counter, so the first one found is the least such counter.
pub fn distinguishing_valuation(
    lhs: &Formula,
    rhs: &Formula,
) -> Result<Option<BTreeMap<String, bool>>, SemanticsError> {
    check_propositional(lhs)?;
    check_propositional(rhs)?;
    let atoms: Vec<String> = lhs
        .predicates()
        .into_iter()
        .chain(rhs.predicates())
        .map(|(p, _)| p)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if atoms.len() > MAX_PROPOSITIONAL_ATOMS {
        return Err(SemanticsError::TooManyAtoms { atoms: atoms.len(), limit: MAX_PROPOSITIONAL_ATOMS });
    }
    for bits in 0u32..(1u32 << atoms.len()) {
        if eval_valuation(lhs, &atoms, bits) != eval_valuation(rhs, &atoms, bits) {
            let valuation = atoms.iter().enumerate().map(|(i, a)| (a.clone(), bits >> i & 1 == 1)).collect();
            return Ok(Some(valuation));
        }
    }
    Ok(None)
}

/// Truth-table equivalence for quantifier- and equality-free formulas.
pub fn equivalent_propositional(lhs: &Formula, rhs: &Formula) -> Result<bool, SemanticsError> {
    Ok(distinguishing_valuation(lhs, rhs)?.is_none())
}

/// Compact model used during enumeration: one bit per (predicate, tuple).
struct Signature {
    /// Sorted by name; (name, arity).
    predicates: Vec<(String, usize)>,
}

impl Signature {
    fn of(lhs: &Formula, rhs: &Formula) -> Result<Self, SemanticsError> {
        let mut arities: BTreeMap<String, usize> = BTreeMap::new();
        for (p, n) in lhs.predicates().into_iter().chain(rhs.predicates()) {
            if n > 2 {
                return Err(SemanticsError::ArityTooLarge { predicate: p, arity: n });
            }
            if let Some(prev) = arities.insert(p.clone(), n) {
                if prev != n {
                    return Err(SemanticsError::ArityMismatch(p));
                }
            }
        }
        Ok(Self { predicates: arities.into_iter().collect() })
    }

    fn bits(&self, domain: usize) -> usize {
        self.predicates.iter().map(|(_, n)| domain.pow(*n as u32)).sum()
    }
}

struct Layout<'a> {
    domain: usize,
    /// Bit offset of each predicate; indexed like `Signature::predicates`.
    offsets: Vec<usize>,
    sig: &'a Signature,
}

impl<'a> Layout<'a> {
    fn new(sig: &'a Signature, domain: usize) -> Self {
        let mut offsets = Vec::with_capacity(sig.predicates.len());
        let mut at = 0;
        for (_, n) in &sig.predicates {
            offsets.push(at);
            at += domain.pow(*n as u32);
        }
        Self { domain, offsets, sig }
    }

    fn bit(&self, pred: usize, tuple: &[usize]) -> usize {
        let index = tuple.iter().fold(0, |acc, &e| acc * self.domain + e);
        self.offsets[pred] + index
    }

    fn decode(&self, bits: u64) -> Interpretation {
        let mut relations = BTreeMap::new();
        for (pi, (name, arity)) in self.sig.predicates.iter().enumerate() {
            let mut set = BTreeSet::new();
            for index in 0..self.domain.pow(*arity as u32) {
                if bits >> (self.offsets[pi] + index) & 1 == 1 {
                    let mut tuple = vec![0; *arity];
                    let mut rest = index;
                    for slot in tuple.iter_mut().rev() {
                        *slot = rest % self.domain;
                        rest /= self.domain;
                    }
                    set.insert(tuple);
                }
            }
            relations.insert(name.clone(), set);
        }
        Interpretation { domain_size: self.domain, relations }
    }
}

/// Formula with predicate names and variables resolved to indices.
enum Compiled {
    True,
    Atom(usize, Vec<usize>),
    Eq(usize, usize),
    Not(Box<Compiled>),
    And(Box<Compiled>, Box<Compiled>),
    /// Binds the next variable slot.
    Exists(usize, Box<Compiled>),
}

fn compile(f: &Formula, sig: &Signature, scope: &mut Vec<String>) -> Result<Compiled, SemanticsError> {
    let var = |v: &String, scope: &[String]| {
        scope.iter().rposition(|s| s == v).ok_or_else(|| SemanticsError::Unbound(v.clone()))
    };
    Ok(match f {
        Formula::True => Compiled::True,
        Formula::Atom { predicate, args } => {
            let p = sig.predicates.iter().position(|(n, _)| n == predicate).expect("signature covers every predicate");
            Compiled::Atom(p, args.iter().map(|a| var(a, scope)).collect::<Result<_, _>>()?)
        }
        Formula::Eq(a, b) => Compiled::Eq(var(a, scope)?, var(b, scope)?),
        Formula::Not(g) => Compiled::Not(Box::new(compile(g, sig, scope)?)),
        Formula::And(a, b) => Compiled::And(Box::new(compile(a, sig, scope)?), Box::new(compile(b, sig, scope)?)),
        Formula::Exists(v, body) => {
            let slot = scope.len();
            scope.push(v.clone());
            let inner = compile(body, sig, scope)?;
            scope.pop();
            Compiled::Exists(slot, Box::new(inner))
        }
    })
}

fn eval_compiled(c: &Compiled, layout: &Layout<'_>, bits: u64, env: &mut Vec<usize>) -> bool {
    match c {
        Compiled::True => true,
        Compiled::Atom(p, vars) => {
            let tuple: Vec<usize> = vars.iter().map(|&v| env[v]).collect();
            bits >> layout.bit(*p, &tuple) & 1 == 1
        }
        Compiled::Eq(a, b) => env[*a] == env[*b],
        Compiled::Not(g) => !eval_compiled(g, layout, bits, env),
        Compiled::And(a, b) => eval_compiled(a, layout, bits, env) && eval_compiled(b, layout, bits, env),
        Compiled::Exists(slot, body) => {
            env.truncate(*slot);
            env.push(0);
            for e in 0..layout.domain {
                env[*slot] = e;
                if eval_compiled(body, layout, bits, env) {
                    env.truncate(*slot);
                    return true;
                }
            }
            env.truncate(*slot);
            false
        }
    }
}

/// Compares two closed formulas on every structure with 1 to `max_domain` elements.
///
/// Structures are enumerated by increasing domain size; within one size the
/// relation bits (predicates sorted by name, tuples in lexicographic order)
/// form a little-endian counter. The first structure on which the formulas
/// disagree is returned. Equality is identity on the domain.
pub fn equivalent_bounded(lhs: &Formula, rhs: &Formula, max_domain: usize) -> Result<Verdict, SemanticsError> {
    if max_domain == 0 {
        return Err(SemanticsError::EmptyBound);
    }
    let sig = Signature::of(lhs, rhs)?;
    let left = compile(lhs, &sig, &mut Vec::new())?;
    let right = compile(rhs, &sig, &mut Vec::new())?;
    for domain in 1..=max_domain {
        let bits = sig.bits(domain);
        if bits > MAX_MODEL_BITS {
            return Err(SemanticsError::ModelSpaceTooLarge { domain_size: domain, bits, limit: MAX_MODEL_BITS });
        }
        let layout = Layout::new(&sig, domain);
        let mut env = Vec::new();
        for assignment in 0u64..(1u64 << bits) {
            let l = eval_compiled(&left, &layout, assignment, &mut env);
            let r = eval_compiled(&right, &layout, assignment, &mut env);
            if l != r {
                return Ok(Verdict::CounterModel { model: layout.decode(assignment), lhs: l, rhs: r });
            }
        }
    }
    Ok(Verdict::Equivalent { bound: max_domain })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eg::parse_formula;

    fn f(text: &str) -> Formula {
        parse_formula(text).unwrap()
    }

    #[test]
    fn de_morgan_confusion_is_detected() {
        let lhs = f("~(A & B)");
        let rhs = f("~A & ~B");
        assert!(!equivalent_propositional(&lhs, &rhs).unwrap());
        let v = distinguishing_valuation(&lhs, &rhs).unwrap().unwrap();
        // the first differing row is A=⊤, B=⊥
        assert_eq!(v.get("A"), Some(&true));
        assert_eq!(v.get("B"), Some(&false));
    }

    #[test]
    fn double_negation() {
        assert!(equivalent_propositional(&f("~~A"), &f("A")).unwrap());
    }

    #[test]
    fn reflexive() {
        let g = f("~(A & ~(B & C)) & D");
        assert!(equivalent_propositional(&g, &g).unwrap());
    }

    #[test]
    fn propositional_rejects_quantifiers() {
        let err = equivalent_propositional(&f("exists x. P(x)"), &f("A")).unwrap_err();
        assert!(matches!(err, SemanticsError::WrongFragment(_)));
    }

    #[test]
    fn propositional_atom_limit() {
        let many = (0..21).map(|i| format!("A{i}")).collect::<Vec<_>>().join(" & ");
        let err = equivalent_propositional(&f(&many), &f("A0")).unwrap_err();
        assert_eq!(err, SemanticsError::TooManyAtoms { atoms: 21, limit: 20 });
        let twenty = (0..20).map(|i| format!("A{i}")).collect::<Vec<_>>().join(" & ");
        assert!(equivalent_propositional(&f(&twenty), &f(&twenty)).unwrap());
    }

    #[test]
    fn double_negated_existential() {
        let v = equivalent_bounded(&f("exists x. P(x)"), &f("~~exists x. P(x)"), 3).unwrap();
        assert_eq!(v, Verdict::Equivalent { bound: 3 });
    }

    #[test]
    fn renaming_is_invisible() {
        let v = equivalent_bounded(&f("exists x. P(x)"), &f("exists y. P(y)"), 3).unwrap();
        assert!(v.is_equivalent());
    }

    #[test]
    fn ligature_scope_counter_model() {
        let eq1 = f("exists x. (Man(x) & ~(Wounded(x) & Disgraced(x)))");
        let eq2 = f("~exists x. (Man(x) & Wounded(x) & Disgraced(x))");
        match equivalent_bounded(&eq1, &eq2, 2).unwrap() {
            Verdict::CounterModel { model, lhs, rhs } => {
                assert!(model.domain_size <= 2);
                assert_eq!(evaluate(&eq1, &model).unwrap(), lhs);
                assert_eq!(evaluate(&eq2, &model).unwrap(), rhs);
                assert_ne!(lhs, rhs);
            }
            other => panic!("expected a counter-model, got {other:?}"),
        }
    }

    #[test]
    fn two_element_witness_separates_eq1_from_eq2() {
        // a is a wounded, disgraced man; b is an unwounded man
        let eq1 = f("exists x. (Man(x) & ~(Wounded(x) & Disgraced(x)))");
        let eq2 = f("~exists x. (Man(x) & Wounded(x) & Disgraced(x))");
        let model = Interpretation {
            domain_size: 2,
            relations: BTreeMap::from([
                ("Man".to_string(), BTreeSet::from([vec![0], vec![1]])),
                ("Wounded".to_string(), BTreeSet::from([vec![0]])),
                ("Disgraced".to_string(), BTreeSet::from([vec![0]])),
            ]),
        };
        assert!(evaluate(&eq1, &model).unwrap());
        assert!(!evaluate(&eq2, &model).unwrap());
    }

    #[test]
    fn equality_is_identity() {
        // "there are two distinct things" fails only on singleton domains
        let two = f("exists x. exists y. ~x = y");
        match equivalent_bounded(&two, &f("true"), 3).unwrap() {
            Verdict::CounterModel { model, .. } => assert_eq!(model.domain_size, 1),
            other => panic!("{other:?}"),
        }
        let v = equivalent_bounded(&f("exists x. x = x"), &f("true"), 3).unwrap();
        assert!(v.is_equivalent());
    }

    #[test]
    fn binary_relations() {
        // symmetric closure differs from the relation itself
        let a = f("exists x. exists y. R(x, y)");
        let b = f("exists x. exists y. R(y, x)");
        assert!(equivalent_bounded(&a, &b, 3).unwrap().is_equivalent());
        let c = f("exists x. R(x, x)");
        let v = equivalent_bounded(&a, &c, 2).unwrap();
        match v {
            Verdict::CounterModel { model, lhs: true, rhs: false } => assert_eq!(model.domain_size, 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn arity_guard() {
        let err = equivalent_bounded(&f("exists x. T(x, x, x)"), &f("true"), 2).unwrap_err();
        assert_eq!(err, SemanticsError::ArityTooLarge { predicate: "T".into(), arity: 3 });
        let err = equivalent_bounded(&f("exists x. P(x)"), &f("P"), 2).unwrap_err();
        assert_eq!(err, SemanticsError::ArityMismatch("P".into()));
    }

    #[test]
    fn interpretation_display() {
        let model = Interpretation {
            domain_size: 2,
            relations: BTreeMap::from([
                ("Man".to_string(), BTreeSet::from([vec![0], vec![1]])),
                ("R".to_string(), BTreeSet::from([vec![0, 1]])),
            ]),
        };
        assert_eq!(model.to_string(), "domain {a, b}; Man = {a, b}; R = {(a, b)}");
    }
}
