use std::collections::{BTreeSet, HashMap};
use std::fmt;

use super::formula::Formula;
use super::GraphError;

/// A spot: a predicate occurrence whose hooks attach to ligatures by name.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Spot {
    pub predicate: String,
    pub hooks: Vec<String>,
}

impl Spot {
    pub fn arity(&self) -> usize {
        self.hooks.len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Entry {
    /// Declares a line of identity whose outermost area is the containing one.
    Ligature(String),
    Spot(Spot),
    Cut(Area),
}

/// A region of the sheet: either the sheet itself or the inside of a cut.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct Area {
    pub entries: Vec<Entry>,
}

impl Area {
    pub fn new(entries: Vec<Entry>) -> Self {
        Self { entries }
    }

    pub fn ligatures(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().filter_map(|e| match e {
            Entry::Ligature(name) => Some(name.as_str()),
            _ => None,
        })
    }

    pub fn spots(&self) -> impl Iterator<Item = &Spot> {
        self.entries.iter().filter_map(|e| match e {
            Entry::Spot(s) => Some(s),
            _ => None,
        })
    }

    pub fn cuts(&self) -> impl Iterator<Item = &Area> {
        self.entries.iter().filter_map(|e| match e {
            Entry::Cut(a) => Some(a),
            _ => None,
        })
    }
}

/// A validated graph. The root area is the sheet of assertion.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct EGraph {
    sheet: Area,
}

impl EGraph {
    /// Validates ligature scoping and builds the graph.
    pub fn new(sheet: Area) -> Result<Self, GraphError> {
        let mut declared = BTreeSet::new();
        let mut uses = HashMap::new();
        check_area(&sheet, &mut Vec::new(), &mut declared, &mut uses)?;
        // report in declaration order for stable messages
        if let Some(name) = first_unused(&sheet, &uses) {
            return Err(GraphError::Dangling { name });
        }
        Ok(Self { sheet })
    }

    pub fn sheet(&self) -> &Area {
        &self.sheet
    }

    pub fn into_sheet(self) -> Area {
        self.sheet
    }
}

fn check_area<'a>(
    area: &'a Area,
    scope: &mut Vec<&'a str>,
    declared: &mut BTreeSet<&'a str>,
    uses: &mut HashMap<&'a str, usize>,
) -> Result<(), GraphError> {
    let mark = scope.len();
    for name in area.ligatures() {
        if !declared.insert(name) {
            return Err(GraphError::Redeclared { name: name.to_string() });
        }
        scope.push(name);
    }
    for spot in area.spots() {
        for hook in &spot.hooks {
            if !scope.contains(&hook.as_str()) {
                return Err(GraphError::Scope { name: hook.clone() });
            }
            *uses.entry(hook.as_str()).or_default() += 1;
        }
    }
    for cut in area.cuts() {
        check_area(cut, scope, declared, uses)?;
    }
    scope.truncate(mark);
    Ok(())
}

fn first_unused(area: &Area, uses: &HashMap<&str, usize>) -> Option<String> {
    for entry in &area.entries {
        match entry {
            Entry::Ligature(name) if !uses.contains_key(name.as_str()) => return Some(name.clone()),
            Entry::Cut(inner) => {
                if let Some(name) = first_unused(inner, uses) {
                    return Some(name);
                }
            }
            _ => {}
        }
    }
    None
}

/// Reads a graph outside-in.
///
/// Each area becomes `∃v1 ∃v2 … (spots ∧ ¬cut1 ∧ ¬cut2 …)` where the `vi` are the
/// ligatures declared in that area. Spots come first, then cuts, each in
/// notation order; the empty conjunction is `⊤`.
pub fn eg_to_formula(graph: &EGraph) -> Formula {
    translate_area(graph.sheet())
}

fn translate_area(area: &Area) -> Formula {
    let spots = area.spots().map(|s| Formula::pred(&s.predicate, &s.hooks));
    let cuts = area.cuts().map(|c| Formula::not(translate_area(c)));
    let body = Formula::conjunction(spots.chain(cuts));
    let vars: Vec<&str> = area.ligatures().collect();
    vars.into_iter().rev().fold(body, |acc, v| Formula::exists(v, acc))
}

/// Parses the s-expression notation:
///
/// ```text
/// graph := "(sheet" entry* ")"
/// entry := "(lig" NAME ")" | "(spot" NAME NAME* ")" | "(cut" entry* ")"
/// ```
///
/// Whitespace is insignificant and `;` starts a comment running to end of line.
pub fn parse_eg(text: &str) -> Result<EGraph, GraphError> {
    let tokens = lex(text)?;
    let mut parser = SexpParser { tokens: &tokens, pos: 0, end: text.len() };
    parser.expect_open()?;
    let head = parser.name()?;
    if head.1 != "sheet" {
        return Err(GraphError::Parse { offset: head.0, message: format!("expected `sheet`, found `{}`", head.1) });
    }
    let sheet = parser.entries()?;
    parser.expect_close()?;
    if let Some(tok) = parser.peek() {
        return Err(GraphError::Parse { offset: tok.offset, message: "trailing input after the sheet".into() });
    }
    EGraph::new(sheet)
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok<'a> {
    Open,
    Close,
    Name(&'a str),
}

#[derive(Debug)]
struct Token<'a> {
    offset: usize,
    tok: Tok<'a>,
}

fn lex(text: &str) -> Result<Vec<Token<'_>>, GraphError> {
    let mut tokens = Vec::new();
    let mut chars = text.char_indices().peekable();
    while let Some(&(i, c)) = chars.peek() {
        match c {
            '(' => {
                tokens.push(Token { offset: i, tok: Tok::Open });
                chars.next();
            }
            ')' => {
                tokens.push(Token { offset: i, tok: Tok::Close });
                chars.next();
            }
            ';' => {
                while let Some(&(_, c)) = chars.peek() {
                    if c == '\n' {
                        break;
                    }
                    chars.next();
                }
            }
            c if c.is_whitespace() => {
                chars.next();
            }
            c if is_name_char(c) => {
                let start = i;
                let mut end = i;
                while let Some(&(j, c)) = chars.peek() {
                    if !is_name_char(c) {
                        break;
                    }
                    end = j + c.len_utf8();
                    chars.next();
                }
                tokens.push(Token { offset: start, tok: Tok::Name(&text[start..end]) });
            }
            other => return Err(GraphError::Parse { offset: i, message: format!("unexpected character `{other}`") }),
        }
    }
    Ok(tokens)
}

fn is_name_char(c: char) -> bool {
    c.is_alphanumeric() || matches!(c, '_' | '-' | '\'')
}

struct SexpParser<'t, 'a> {
    tokens: &'t [Token<'a>],
    pos: usize,
    end: usize,
}

impl<'a> SexpParser<'_, 'a> {
    fn peek(&self) -> Option<&Token<'a>> {
        self.tokens.get(self.pos)
    }

    fn offset(&self) -> usize {
        self.peek().map_or(self.end, |t| t.offset)
    }

    fn error(&self, message: impl Into<String>) -> GraphError {
        GraphError::Parse { offset: self.offset(), message: message.into() }
    }

    fn expect_open(&mut self) -> Result<(), GraphError> {
        match self.peek().map(|t| &t.tok) {
            Some(Tok::Open) => {
                self.pos += 1;
                Ok(())
            }
            Some(_) => Err(self.error("expected `(`")),
            None => Err(self.error("unexpected end of input, expected `(`")),
        }
    }

    fn expect_close(&mut self) -> Result<(), GraphError> {
        match self.peek().map(|t| &t.tok) {
            Some(Tok::Close) => {
                self.pos += 1;
                Ok(())
            }
            Some(_) => Err(self.error("expected `)`")),
            None => Err(self.error("unbalanced parentheses: missing `)`")),
        }
    }

    fn name(&mut self) -> Result<(usize, &'a str), GraphError> {
        match self.peek() {
            Some(Token { offset, tok: Tok::Name(n) }) => {
                let out = (*offset, *n);
                self.pos += 1;
                Ok(out)
            }
            Some(_) => Err(self.error("expected a name")),
            None => Err(self.error("unexpected end of input, expected a name")),
        }
    }

    fn entries(&mut self) -> Result<Area, GraphError> {
        let mut entries = Vec::new();
        while let Some(Tok::Open) = self.peek().map(|t| &t.tok) {
            entries.push(self.entry()?);
        }
        Ok(Area::new(entries))
    }

    fn entry(&mut self) -> Result<Entry, GraphError> {
        self.expect_open()?;
        let (offset, keyword) = self.name()?;
        let entry = match keyword {
            "lig" => {
                let (_, name) = self.name()?;
                Entry::Ligature(name.to_string())
            }
            "spot" => {
                let (_, predicate) = self.name()?;
                let mut hooks = Vec::new();
                while let Some(Tok::Name(n)) = self.peek().map(|t| &t.tok) {
                    hooks.push(n.to_string());
                    self.pos += 1;
                }
                Entry::Spot(Spot { predicate: predicate.to_string(), hooks })
            }
            "cut" => Entry::Cut(self.entries()?),
            other => {
                return Err(GraphError::Parse {
                    offset,
                    message: format!("unknown entry `{other}` (expected lig, spot or cut)"),
                })
            }
        };
        self.expect_close()?;
        Ok(entry)
    }
}

impl fmt::Display for EGraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(sheet")?;
        write_entries(f, &self.sheet)?;
        write!(f, ")")
    }
}

fn write_entries(f: &mut fmt::Formatter<'_>, area: &Area) -> fmt::Result {
    for entry in &area.entries {
        match entry {
            Entry::Ligature(name) => write!(f, " (lig {name})")?,
            Entry::Spot(spot) => {
                write!(f, " (spot {}", spot.predicate)?;
                for hook in &spot.hooks {
                    write!(f, " {hook}")?;
                }
                write!(f, ")")?;
            }
            Entry::Cut(inner) => {
                write!(f, " (cut")?;
                write_entries(f, inner)?;
                write!(f, ")")?;
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eg::{equivalent_bounded, equivalent_propositional, parse_formula};

    const EQ1_GRAPH: &str = "(sheet (lig x) (spot Man x) (cut (spot Wounded x) (spot Disgraced x)))";
    const EQ2_GRAPH: &str = "(sheet (cut (lig x) (spot Man x) (spot Wounded x) (spot Disgraced x)))";

    #[test]
    fn blank_sheet() {
        let g = parse_eg("(sheet)").unwrap();
        assert!(g.sheet().entries.is_empty());
        assert_eq!(eg_to_formula(&g), Formula::True);
    }

    #[test]
    fn empty_cut_is_false() {
        let g = parse_eg("(sheet (cut))").unwrap();
        assert_eq!(eg_to_formula(&g), Formula::not(Formula::True));
    }

    #[test]
    fn outermost_ligature_on_sheet() {
        let g = parse_eg(EQ1_GRAPH).unwrap();
        let sheet = g.sheet();
        assert_eq!(sheet.ligatures().collect::<Vec<_>>(), vec!["x"]);
        assert_eq!(sheet.cuts().count(), 1);
        assert_eq!(sheet.spots().count(), 1);
    }

    #[test]
    fn translates_ligature_outside_cut() {
        let g = parse_eg(EQ1_GRAPH).unwrap();
        let expected = parse_formula("exists x. (Man(x) & ~(Wounded(x) & Disgraced(x)))").unwrap();
        assert_eq!(eg_to_formula(&g), expected);
    }

    #[test]
    fn translates_ligature_inside_cut() {
        let g = parse_eg(EQ2_GRAPH).unwrap();
        let expected = parse_formula("~exists x. (Man(x) & Wounded(x) & Disgraced(x))").unwrap();
        assert_eq!(eg_to_formula(&g), expected);
    }

    #[test]
    fn undeclared_hook_is_scope_error() {
        assert_eq!(parse_eg("(sheet (spot P x))"), Err(GraphError::Scope { name: "x".into() }));
    }

    #[test]
    fn ligature_declared_in_cut_is_not_visible_outside() {
        assert_eq!(
            parse_eg("(sheet (cut (lig x) (spot Q x)) (spot P x))"),
            Err(GraphError::Scope { name: "x".into() })
        );
    }

    #[test]
    fn dangling_ligature() {
        assert_eq!(parse_eg("(sheet (lig x) (spot P))"), Err(GraphError::Dangling { name: "x".into() }));
    }

    #[test]
    fn redeclared_ligature() {
        assert!(matches!(
            parse_eg("(sheet (lig x) (spot P x) (cut (lig x) (spot Q x)))"),
            Err(GraphError::Redeclared { .. })
        ));
    }

    #[test]
    fn unbalanced_parens_report_position() {
        let err = parse_eg("(sheet (cut (spot A)").unwrap_err();
        assert_eq!(err, GraphError::Parse { offset: 20, message: "unbalanced parentheses: missing `)`".into() });
        let err = parse_eg("(sheet))").unwrap_err();
        assert!(matches!(err, GraphError::Parse { offset: 7, .. }));
    }

    #[test]
    fn comments_and_whitespace() {
        let text = "; Eq. 1 shape\n(sheet\n  (lig x) ; the man\n  (spot Man x)\n  (cut (spot Wounded x)\n       (spot Disgraced x)))\n";
        assert_eq!(parse_eg(text).unwrap(), parse_eg(EQ1_GRAPH).unwrap());
    }

    #[test]
    fn teridentity_shares_one_variable() {
        let g = parse_eg("(sheet (lig x) (spot A x) (spot B x) (cut (spot C x)))").unwrap();
        let f = eg_to_formula(&g);
        assert_eq!(f, parse_formula("exists x. (A(x) & B(x) & ~C(x))").unwrap());
    }

    #[test]
    fn display_round_trips() {
        let g = parse_eg(EQ1_GRAPH).unwrap();
        assert_eq!(g.to_string(), EQ1_GRAPH);
        assert_eq!(parse_eg(&g.to_string()).unwrap(), g);
    }

    #[test]
    fn spots_only_translate_to_conjunction() {
        let g = parse_eg("(sheet (spot A) (spot B) (spot C))").unwrap();
        let f = eg_to_formula(&g);
        assert!(equivalent_propositional(&f, &parse_formula("A & B & C").unwrap()).unwrap());
        let negated = parse_eg("(sheet (cut (spot A) (spot B) (spot C)))").unwrap();
        assert!(equivalent_propositional(&eg_to_formula(&negated), &parse_formula("~(A & B & C)").unwrap()).unwrap());
    }

    #[test]
    fn moving_ligature_into_cut_changes_meaning() {
        let a = eg_to_formula(&parse_eg(EQ1_GRAPH).unwrap());
        let b = eg_to_formula(&parse_eg(EQ2_GRAPH).unwrap());
        assert!(!equivalent_bounded(&a, &b, 3).unwrap().is_equivalent());
    }
}
