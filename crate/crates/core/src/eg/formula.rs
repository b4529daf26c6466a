use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

/// Core formula syntax. Disjunction, implication and universal quantification
/// are desugared by the parser, so only these connectives ever appear.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Formula {
    /// The empty conjunction.
    True,
    /// `P(v1, …, vn)`; zero arguments make a propositional atom.
    Atom {
        predicate: String,
        args: Vec<String>,
    },
    Eq(String, String),
    Not(Box<Formula>),
    And(Box<Formula>, Box<Formula>),
    Exists(String, Box<Formula>),
}

impl Formula {
    pub fn atom(name: &str) -> Self {
        Formula::Atom { predicate: name.to_string(), args: Vec::new() }
    }

    pub fn pred<S: AsRef<str>>(name: &str, args: &[S]) -> Self {
        Formula::Atom { predicate: name.to_string(), args: args.iter().map(|a| a.as_ref().to_string()).collect() }
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(inner: Formula) -> Self {
        Formula::Not(Box::new(inner))
    }

    pub fn and(lhs: Formula, rhs: Formula) -> Self {
        Formula::And(Box::new(lhs), Box::new(rhs))
    }

    pub fn exists(var: &str, body: Formula) -> Self {
        Formula::Exists(var.to_string(), Box::new(body))
    }

    /// Left-nested conjunction; `⊤` when empty.
    pub fn conjunction(items: impl IntoIterator<Item = Formula>) -> Self {
        items.into_iter().reduce(Formula::and).unwrap_or(Formula::True)
    }

    pub fn or(lhs: Formula, rhs: Formula) -> Self {
        Formula::not(Formula::and(Formula::not(lhs), Formula::not(rhs)))
    }

    pub fn implies(lhs: Formula, rhs: Formula) -> Self {
        Formula::not(Formula::and(lhs, Formula::not(rhs)))
    }

    /// Predicate symbols with their arities, in first-occurrence order.
    pub fn predicates(&self) -> Vec<(String, usize)> {
        let mut out: Vec<(String, usize)> = Vec::new();
        self.visit(&mut |f| {
            if let Formula::Atom { predicate, args } = f {
                if !out.iter().any(|(p, n)| p == predicate && *n == args.len()) {
                    out.push((predicate.clone(), args.len()));
                }
            }
        });
        out
    }

    pub fn has_quantifier(&self) -> bool {
        let mut found = false;
        self.visit(&mut |f| found |= matches!(f, Formula::Exists(..)));
        found
    }

    pub fn has_equality(&self) -> bool {
        let mut found = false;
        self.visit(&mut |f| found |= matches!(f, Formula::Eq(..)));
        found
    }

    /// Variables occurring free, in first-occurrence order.
    pub fn free_variables(&self) -> Vec<String> {
        fn walk(f: &Formula, bound: &mut Vec<String>, out: &mut Vec<String>) {
            let mut note = |v: &String, bound: &Vec<String>| {
                if !bound.contains(v) && !out.contains(v) {
                    out.push(v.clone());
                }
            };
            match f {
                Formula::True => {}
                Formula::Atom { args, .. } => args.iter().for_each(|a| note(a, bound)),
                Formula::Eq(a, b) => {
                    note(a, bound);
                    note(b, bound);
                }
                Formula::Not(g) => walk(g, bound, out),
                Formula::And(a, b) => {
                    walk(a, bound, out);
                    walk(b, bound, out);
                }
                Formula::Exists(v, body) => {
                    bound.push(v.clone());
                    walk(body, bound, out);
                    bound.pop();
                }
            }
        }
        let mut out = Vec::new();
        walk(self, &mut Vec::new(), &mut out);
        out
    }

    pub fn depth(&self) -> usize {
        match self {
            Formula::True | Formula::Atom { .. } | Formula::Eq(..) => 1,
            Formula::Not(g) | Formula::Exists(_, g) => 1 + g.depth(),
            Formula::And(a, b) => 1 + a.depth().max(b.depth()),
        }
    }

    fn visit(&self, f: &mut impl FnMut(&Formula)) {
        f(self);
        match self {
            Formula::Not(g) | Formula::Exists(_, g) => g.visit(f),
            Formula::And(a, b) => {
                a.visit(f);
                b.visit(f);
            }
            _ => {}
        }
    }

    /// Renames predicate symbols through `map`; unmapped names are kept.
    pub fn rename_predicates(&self, map: &HashMap<String, String>) -> Formula {
        match self {
            Formula::Atom { predicate, args } => Formula::Atom {
                predicate: map.get(predicate).cloned().unwrap_or_else(|| predicate.clone()),
                args: args.clone(),
            },
            Formula::Not(g) => Formula::not(g.rename_predicates(map)),
            Formula::And(a, b) => Formula::and(a.rename_predicates(map), b.rename_predicates(map)),
            Formula::Exists(v, g) => Formula::exists(v, g.rename_predicates(map)),
            other => other.clone(),
        }
    }
}

/// Structural equality up to renaming of bound variables.
pub fn alpha_equivalent(lhs: &Formula, rhs: &Formula) -> bool {
    fn var_eq(a: &str, b: &str, env: &[(String, String)]) -> bool {
        for (x, y) in env.iter().rev() {
            if x == a || y == b {
                return x == a && y == b;
            }
        }
        a == b
    }
    fn go(a: &Formula, b: &Formula, env: &mut Vec<(String, String)>) -> bool {
        match (a, b) {
            (Formula::True, Formula::True) => true,
            (Formula::Atom { predicate: p, args: xs }, Formula::Atom { predicate: q, args: ys }) => {
                p == q && xs.len() == ys.len() && xs.iter().zip(ys).all(|(x, y)| var_eq(x, y, env))
            }
            (Formula::Eq(a1, a2), Formula::Eq(b1, b2)) => var_eq(a1, b1, env) && var_eq(a2, b2, env),
            (Formula::Not(x), Formula::Not(y)) => go(x, y, env),
            (Formula::And(x1, x2), Formula::And(y1, y2)) => go(x1, y1, env) && go(x2, y2, env),
            (Formula::Exists(v, x), Formula::Exists(w, y)) => {
                env.push((v.clone(), w.clone()));
                let out = go(x, y, env);
                env.pop();
                out
            }
            _ => false,
        }
    }
    go(lhs, rhs, &mut Vec::new())
}

/// Output notation for [`render_formula`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Syntax {
    /// `exists x. (Man(x) & ~Wounded(x))`
    Ascii,
    /// `∃x (Man(x) ∧ ¬Wounded(x))`
    #[default]
    Unicode,
    /// `\exists x (Man(x) \land \lnot Wounded(x))`
    LatexTokens,
}

struct Tokens {
    top: &'static str,
    not: &'static str,
    and: &'static str,
    exists: &'static str,
    /// Separator between the bound variable and the body.
    binder_sep: &'static str,
}

impl Syntax {
    fn tokens(self) -> Tokens {
        match self {
            Syntax::Ascii => Tokens { top: "true", not: "~", and: " & ", exists: "exists ", binder_sep: ". " },
            Syntax::Unicode => Tokens { top: "⊤", not: "¬", and: " ∧ ", exists: "∃", binder_sep: " " },
            Syntax::LatexTokens => {
                Tokens { top: "\\top", not: "\\lnot ", and: " \\land ", exists: "\\exists ", binder_sep: " " }
            }
        }
    }
}

/// Renders with minimal parentheses.
///
/// Precedence is `¬` over `∧` over the quantifier body: a quantifier scopes as
/// far right as possible, and `∧` groups to the left. A conjunction body is
/// always written in parentheses after its quantifier.
pub fn render_formula(formula: &Formula, syntax: Syntax) -> String {
    let mut out = String::new();
    write_formula(&mut out, formula, &syntax.tokens());
    out
}

/// Whether the bare rendering ends in a quantifier whose scope would swallow
/// anything written after it.
fn open_right(f: &Formula) -> bool {
    match f {
        Formula::Exists(..) => true,
        Formula::Not(g) => !matches!(**g, Formula::And(..)) && open_right(g),
        Formula::And(_, r) => !matches!(**r, Formula::And(..)) && open_right(r),
        _ => false,
    }
}

fn write_formula(out: &mut String, f: &Formula, t: &Tokens) {
    match f {
        Formula::True => out.push_str(t.top),
        Formula::Atom { predicate, args } => {
            out.push_str(predicate);
            if !args.is_empty() {
                out.push('(');
                out.push_str(&args.join(", "));
                out.push(')');
            }
        }
        Formula::Eq(a, b) => {
            out.push_str(a);
            out.push_str(" = ");
            out.push_str(b);
        }
        Formula::Not(g) => {
            out.push_str(t.not);
            write_operand(out, g, t, matches!(**g, Formula::And(..) | Formula::Eq(..)));
        }
        Formula::And(l, r) => {
            write_operand(out, l, t, open_right(l));
            out.push_str(t.and);
            write_operand(out, r, t, matches!(**r, Formula::And(..)));
        }
        Formula::Exists(v, body) => {
            out.push_str(t.exists);
            out.push_str(v);
            out.push_str(t.binder_sep);
            write_operand(out, body, t, matches!(**body, Formula::And(..)));
        }
    }
}

fn write_operand(out: &mut String, f: &Formula, t: &Tokens, parens: bool) {
    if parens {
        out.push('(');
        write_formula(out, f, t);
        out.push(')');
    } else {
        write_formula(out, f, t);
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&render_formula(self, Syntax::Unicode))
    }
}
