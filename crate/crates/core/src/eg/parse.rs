use thiserror::Error;

use super::formula::Formula;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FormulaError {
    #[error("unknown token `{found}` at byte {offset}")]
    Lex { offset: usize, found: String },
    #[error("syntax error at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("variable `{0}` is not bound by any quantifier")]
    Binding(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Ident(String),
    Open,
    Close,
    Comma,
    Dot,
    Equals,
    Not,
    And,
    Or,
    Implies,
    Exists,
    Forall,
    Top,
    Bottom,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("`{s}`"),
            Tok::Open => "`(`".into(),
            Tok::Close => "`)`".into(),
            Tok::Comma => "`,`".into(),
            Tok::Dot => "`.`".into(),
            Tok::Equals => "`=`".into(),
            Tok::Not => "negation".into(),
            Tok::And => "conjunction".into(),
            Tok::Or => "disjunction".into(),
            Tok::Implies => "implication".into(),
            Tok::Exists => "existential quantifier".into(),
            Tok::Forall => "universal quantifier".into(),
            Tok::Top => "`⊤`".into(),
            Tok::Bottom => "`⊥`".into(),
        }
    }
}

struct Spanned {
    offset: usize,
    tok: Tok,
}

const LATEX_COMMANDS: &[(&str, Option<Tok>)] = &[
    ("exists", Some(Tok::Exists)),
    ("forall", Some(Tok::Forall)),
    ("lnot", Some(Tok::Not)),
    ("neg", Some(Tok::Not)),
    ("land", Some(Tok::And)),
    ("wedge", Some(Tok::And)),
    ("lor", Some(Tok::Or)),
    ("vee", Some(Tok::Or)),
    ("rightarrow", Some(Tok::Implies)),
    ("Rightarrow", Some(Tok::Implies)),
    ("implies", Some(Tok::Implies)),
    ("to", Some(Tok::Implies)),
    ("top", Some(Tok::Top)),
    ("bot", Some(Tok::Bottom)),
    // sizing and spacing commands carry no meaning
    ("left", None),
    ("right", None),
    ("big", None),
    ("Big", None),
    ("bigl", None),
    ("bigr", None),
    ("Bigl", None),
    ("Bigr", None),
    ("quad", None),
];

fn lex(text: &str) -> Result<Vec<Spanned>, FormulaError> {
    let mut out = Vec::new();
    let bytes = text.as_bytes();
    let mut i = 0;
    while i < text.len() {
        let c = text[i..].chars().next().unwrap();
        let len = c.len_utf8();
        let simple = match c {
            '(' | '[' => Some(Tok::Open),
            ')' | ']' => Some(Tok::Close),
            ',' => Some(Tok::Comma),
            '.' | ':' => Some(Tok::Dot),
            '¬' | '~' | '!' => Some(Tok::Not),
            '∧' => Some(Tok::And),
            '∨' => Some(Tok::Or),
            '→' | '⇒' | '⊃' => Some(Tok::Implies),
            '∃' => Some(Tok::Exists),
            '∀' => Some(Tok::Forall),
            '⊤' => Some(Tok::Top),
            '⊥' => Some(Tok::Bottom),
            _ => None,
        };
        if let Some(tok) = simple {
            out.push(Spanned { offset: i, tok });
            i += len;
            continue;
        }
        if c.is_whitespace() {
            i += len;
            continue;
        }
        let rest = &text[i..];
        if rest.starts_with("->") || rest.starts_with("=>") {
            out.push(Spanned { offset: i, tok: Tok::Implies });
            i += 2;
            continue;
        }
        if c == '=' {
            out.push(Spanned { offset: i, tok: Tok::Equals });
            i += 1;
            continue;
        }
        if c == '&' || c == '|' {
            let tok = if c == '&' { Tok::And } else { Tok::Or };
            out.push(Spanned { offset: i, tok });
            i += if bytes.get(i + 1) == Some(&(c as u8)) { 2 } else { 1 };
            continue;
        }
        if c == '\\' {
            let name_len = rest[1..].find(|ch: char| !ch.is_ascii_alphabetic()).unwrap_or(rest.len() - 1);
            let name = &rest[1..1 + name_len];
            if name.is_empty() {
                // `\,` `\;` `\ ` and friends are spacing
                match rest[1..].chars().next() {
                    Some(',' | ';' | ' ' | '!') => {
                        i += 2;
                        continue;
                    }
                    _ => return Err(FormulaError::Lex { offset: i, found: "\\".into() }),
                }
            }
            if matches!(name, "text" | "mathrm" | "mathit" | "textrm" | "operatorname") {
                let after = i + 1 + name_len;
                if text[after..].starts_with('{') {
                    let close = text[after..]
                        .find('}')
                        .ok_or_else(|| FormulaError::Lex { offset: after, found: "{".into() })?;
                    let inner = text[after + 1..after + close].trim();
                    if inner.is_empty() || !inner.chars().all(is_ident_char) {
                        return Err(FormulaError::Lex { offset: after, found: inner.to_string() });
                    }
                    out.push(Spanned { offset: i, tok: Tok::Ident(inner.to_string()) });
                    i = after + close + 1;
                    continue;
                }
            }
            match LATEX_COMMANDS.iter().find(|(n, _)| *n == name) {
                Some((_, Some(tok))) => out.push(Spanned { offset: i, tok: tok.clone() }),
                Some((_, None)) => {}
                None => return Err(FormulaError::Lex { offset: i, found: format!("\\{name}") }),
            }
            i += 1 + name_len;
            continue;
        }
        if is_ident_start(c) {
            let end = rest.char_indices().find(|&(_, ch)| !is_ident_char(ch)).map_or(text.len(), |(j, _)| i + j);
            let word = &text[i..end];
            let tok = match word {
                "exists" => Tok::Exists,
                "forall" => Tok::Forall,
                "true" => Tok::Top,
                "false" => Tok::Bottom,
                _ => Tok::Ident(word.to_string()),
            };
            out.push(Spanned { offset: i, tok });
            i = end;
            continue;
        }
        return Err(FormulaError::Lex { offset: i, found: c.to_string() });
    }
    Ok(out)
}

fn is_ident_start(c: char) -> bool {
    c.is_alphabetic() || c == '_'
}

fn is_ident_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_' || c == '\''
}

/// Parses formula text and desugars it to the core connectives.
///
/// Accepted connectives: `~ ¬ ! \lnot \neg`, `& && ∧ \land \wedge`,
/// `| || ∨ \lor \vee`, `-> => → ⇒ \rightarrow \implies`, quantifiers
/// `exists ∃ \exists` (and `forall ∀ \forall`, read as `¬∃¬`), `=` between
/// variables, and `true ⊤ \top` / `false ⊥ \bot`. A quantified variable may be
/// followed by `.` or `:`. Binding strength, tightest first: `¬`, `∧`, `∨`,
/// `→` (right associative), quantifier body (extends as far right as
/// possible). The result must be closed.
pub fn parse_formula(text: &str) -> Result<Formula, FormulaError> {
    let tokens = lex(text)?;
    let mut parser = Parser { tokens: &tokens, pos: 0, end: text.len() };
    let formula = parser.implication()?;
    if let Some(t) = parser.peek() {
        return Err(FormulaError::Syntax {
            offset: t.offset,
            message: format!("unexpected {} after complete formula", t.tok.describe()),
        });
    }
    if let Some(var) = formula.free_variables().into_iter().next() {
        return Err(FormulaError::Binding(var));
    }
    Ok(formula)
}

struct Parser<'t> {
    tokens: &'t [Spanned],
    pos: usize,
    end: usize,
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Spanned> {
        self.tokens.get(self.pos)
    }

    fn peek_tok(&self) -> Option<&Tok> {
        self.peek().map(|t| &t.tok)
    }

    fn eat(&mut self, tok: &Tok) -> bool {
        if self.peek_tok() == Some(tok) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn error(&self, expected: &str) -> FormulaError {
        match self.peek() {
            Some(t) => FormulaError::Syntax {
                offset: t.offset,
                message: format!("expected {expected}, found {}", t.tok.describe()),
            },
            None => {
                FormulaError::Syntax { offset: self.end, message: format!("expected {expected}, found end of input") }
            }
        }
    }

    fn implication(&mut self) -> Result<Formula, FormulaError> {
        let lhs = self.disjunction()?;
        if self.eat(&Tok::Implies) {
            let rhs = self.implication()?;
            return Ok(Formula::implies(lhs, rhs));
        }
        Ok(lhs)
    }

    fn disjunction(&mut self) -> Result<Formula, FormulaError> {
        let mut lhs = self.conjunction()?;
        while self.eat(&Tok::Or) {
            let rhs = self.conjunction()?;
            lhs = Formula::or(lhs, rhs);
        }
        Ok(lhs)
    }

    fn conjunction(&mut self) -> Result<Formula, FormulaError> {
        let mut lhs = self.unary()?;
        while self.eat(&Tok::And) {
            let rhs = self.unary()?;
            lhs = Formula::and(lhs, rhs);
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Formula, FormulaError> {
        match self.peek_tok() {
            Some(Tok::Not) => {
                self.pos += 1;
                Ok(Formula::not(self.unary()?))
            }
            Some(Tok::Exists) | Some(Tok::Forall) => {
                let universal = self.peek_tok() == Some(&Tok::Forall);
                self.pos += 1;
                let var = match self.peek_tok() {
                    Some(Tok::Ident(v)) => v.clone(),
                    _ => return Err(self.error("a variable after the quantifier")),
                };
                self.pos += 1;
                self.eat(&Tok::Dot);
                let body = self.implication()?;
                Ok(if universal {
                    Formula::not(Formula::exists(&var, Formula::not(body)))
                } else {
                    Formula::exists(&var, body)
                })
            }
            _ => self.primary(),
        }
    }

    fn primary(&mut self) -> Result<Formula, FormulaError> {
        match self.peek_tok().cloned() {
            Some(Tok::Open) => {
                self.pos += 1;
                let inner = self.implication()?;
                if !self.eat(&Tok::Close) {
                    return Err(self.error("`)`"));
                }
                Ok(inner)
            }
            Some(Tok::Top) => {
                self.pos += 1;
                Ok(Formula::True)
            }
            Some(Tok::Bottom) => {
                self.pos += 1;
                Ok(Formula::not(Formula::True))
            }
            Some(Tok::Ident(name)) => {
                self.pos += 1;
                match self.peek_tok() {
                    Some(Tok::Open) => {
                        self.pos += 1;
                        let mut args = Vec::new();
                        loop {
                            match self.peek_tok() {
                                Some(Tok::Ident(a)) => {
                                    args.push(a.clone());
                                    self.pos += 1;
                                }
                                _ => return Err(self.error("a variable")),
                            }
                            if self.eat(&Tok::Comma) {
                                continue;
                            }
                            if self.eat(&Tok::Close) {
                                break;
                            }
                            return Err(self.error("`,` or `)`"));
                        }
                        Ok(Formula::Atom { predicate: name, args })
                    }
                    Some(Tok::Equals) => {
                        self.pos += 1;
                        match self.peek_tok() {
                            Some(Tok::Ident(rhs)) => {
                                let rhs = rhs.clone();
                                self.pos += 1;
                                Ok(Formula::Eq(name, rhs))
                            }
                            _ => Err(self.error("a variable after `=`")),
                        }
                    }
                    _ => Ok(Formula::atom(&name)),
                }
            }
            _ => Err(self.error("a formula")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn eq1() -> Formula {
        Formula::exists(
            "x",
            Formula::and(
                Formula::pred("Man", &["x"]),
                Formula::not(Formula::and(Formula::pred("Wounded", &["x"]), Formula::pred("Disgraced", &["x"]))),
            ),
        )
    }

    #[test]
    fn ascii_eq1() {
        assert_eq!(parse_formula("exists x. (Man(x) & ~(Wounded(x) & Disgraced(x)))").unwrap(), eq1());
    }

    #[test]
    fn unicode_and_latex_eq1() {
        assert_eq!(parse_formula("∃x (Man(x) ∧ ¬(Wounded(x) ∧ Disgraced(x)))").unwrap(), eq1());
        let latex = r"\exists x \left( \text{Man}(x) \land \lnot \left( \text{Wounded}(x) \land \text{Disgraced}(x) \right) \right)";
        assert_eq!(parse_formula(latex).unwrap(), eq1());
        assert_eq!(parse_formula(r"\exists x (Man(x) \wedge \neg (Wounded(x) \wedge Disgraced(x)))").unwrap(), eq1());
    }

    #[test]
    fn negated_conjunction_of_atoms() {
        assert_eq!(
            parse_formula("~(A & B)").unwrap(),
            Formula::not(Formula::and(Formula::atom("A"), Formula::atom("B")))
        );
    }

    #[test]
    fn disjunction_and_implication_desugar() {
        let a = Formula::atom("A");
        let b = Formula::atom("B");
        assert_eq!(parse_formula("A | B").unwrap(), Formula::or(a.clone(), b.clone()));
        assert_eq!(parse_formula("A ∨ B").unwrap(), Formula::or(a.clone(), b.clone()));
        assert_eq!(parse_formula(r"A \rightarrow B").unwrap(), Formula::implies(a.clone(), b.clone()));
        assert_eq!(parse_formula("A -> B").unwrap(), Formula::implies(a, b));
    }

    #[test]
    fn implication_is_right_associative() {
        let f = parse_formula("A -> B -> C").unwrap();
        let expected = Formula::implies(Formula::atom("A"), Formula::implies(Formula::atom("B"), Formula::atom("C")));
        assert_eq!(f, expected);
    }

    #[test]
    fn conjunction_binds_tighter_than_disjunction() {
        let f = parse_formula("A & B | C").unwrap();
        let expected = Formula::or(Formula::and(Formula::atom("A"), Formula::atom("B")), Formula::atom("C"));
        assert_eq!(f, expected);
    }

    #[test]
    fn quantifier_scope_extends_right() {
        let f = parse_formula("∃x P(x) ∧ Q(x)").unwrap();
        assert_eq!(f, Formula::exists("x", Formula::and(Formula::pred("P", &["x"]), Formula::pred("Q", &["x"]))));
    }

    #[test]
    fn universal_desugars() {
        let f = parse_formula("forall x. P(x)").unwrap();
        assert_eq!(f, Formula::not(Formula::exists("x", Formula::not(Formula::pred("P", &["x"])))));
    }

    #[test]
    fn equality_and_binary_predicates() {
        let f = parse_formula("exists x. exists y. (R(x, y) & ~x = y)").unwrap();
        assert_eq!(
            f,
            Formula::exists(
                "x",
                Formula::exists(
                    "y",
                    Formula::and(Formula::pred("R", &["x", "y"]), Formula::not(Formula::Eq("x".into(), "y".into())))
                )
            )
        );
    }

    #[test]
    fn free_variable_is_rejected() {
        assert_eq!(parse_formula("Man(x)"), Err(FormulaError::Binding("x".into())));
        assert_eq!(parse_formula("exists x. P(x) & Q(y)"), Err(FormulaError::Binding("y".into())));
    }

    #[test]
    fn unknown_token_reports_offset() {
        assert_eq!(parse_formula("A # B"), Err(FormulaError::Lex { offset: 2, found: "#".into() }));
        assert!(matches!(parse_formula(r"\foo A"), Err(FormulaError::Lex { offset: 0, .. })));
    }

    #[test]
    fn syntax_errors() {
        assert!(matches!(parse_formula("(A & B"), Err(FormulaError::Syntax { offset: 6, .. })));
        assert!(matches!(parse_formula("A B"), Err(FormulaError::Syntax { offset: 2, .. })));
        assert!(matches!(parse_formula(""), Err(FormulaError::Syntax { offset: 0, .. })));
    }

    #[test]
    fn constants() {
        assert_eq!(parse_formula("⊤").unwrap(), Formula::True);
        assert_eq!(parse_formula("false").unwrap(), Formula::not(Formula::True));
        assert_eq!(parse_formula(r"\bot").unwrap(), Formula::not(Formula::True));
    }
}
