//! Deterministic N-Triples and Turtle output, plus readers for both.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{KgError, PrefixTable, Term, Triple, TripleSet, RDF};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RdfFormat {
    Turtle,
    Ntriples,
}

impl std::str::FromStr for RdfFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "turtle" | "ttl" => Ok(RdfFormat::Turtle),
            "ntriples" | "nt" => Ok(RdfFormat::Ntriples),
            other => Err(format!("unknown RDF format `{other}` (turtle|ntriples)")),
        }
    }
}

fn escape_iri(iri: &str, out: &mut String) {
    for c in iri.chars() {
        if c <= ' ' || matches!(c, '<' | '>' | '"' | '{' | '}' | '|' | '^' | '`' | '\\') {
            let _ = write!(out, "\\u{:04X}", c as u32);
        } else {
            out.push(c);
        }
    }
}

fn escape_literal(s: &str, out: &mut String) {
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '"' => out.push_str("\\\""),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            c if (c as u32) < 0x20 || c == '\u{7f}' => {
                let _ = write!(out, "\\u{:04X}", c as u32);
            }
            c => out.push(c),
        }
    }
}

fn iri_nt(iri: &str) -> String {
    let mut s = String::from("<");
    escape_iri(iri, &mut s);
    s.push('>');
    s
}

fn term_with(term: &Term, iri: &dyn Fn(&str) -> String) -> String {
    match term {
        Term::Iri(i) => iri(i),
        Term::Blank(b) => format!("_:{b}"),
        Term::Literal { value, lang, datatype } => {
            let mut s = String::from("\"");
            escape_literal(value, &mut s);
            s.push('"');
            if let Some(l) = lang {
                s.push('@');
                s.push_str(l);
            } else if let Some(dt) = datatype {
                s.push_str("^^");
                s.push_str(&iri(dt));
            }
            s
        }
    }
}

/// N-Triples form of a term, also the sort key.
fn canonical(term: &Term) -> String {
    term_with(term, &iri_nt)
}

fn is_local_name(s: &str) -> bool {
    let mut chars = s.chars();
    chars.next().is_some_and(|c| c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
}

fn compact(prefixes: &PrefixTable, iri: &str) -> String {
    prefixes
        .iter()
        .filter(|(_, ns)| iri.starts_with(ns) && is_local_name(&iri[ns.len()..]))
        .max_by_key(|(_, ns)| ns.len())
        .map(|(p, ns)| format!("{p}:{}", &iri[ns.len()..]))
        .unwrap_or_else(|| iri_nt(iri))
}

fn sorted_rows(ts: &TripleSet) -> Vec<(String, String, String, &Triple)> {
    let mut rows: Vec<_> =
        ts.triples.iter().map(|t| (canonical(&t.subject), iri_nt(&t.predicate), canonical(&t.object), t)).collect();
    rows.sort_by(|a, b| (&a.0, &a.1, &a.2).cmp(&(&b.0, &b.1, &b.2)));
    rows
}

fn ntriples(ts: &TripleSet) -> String {
    let mut out = String::new();
    for (s, p, o, _) in sorted_rows(ts) {
        let _ = writeln!(out, "{s} {p} {o} .");
    }
    out
}

fn turtle(ts: &TripleSet) -> String {
    let prefixes = &ts.prefixes;
    let mut out = String::new();
    for (p, ns) in prefixes.iter() {
        let _ = writeln!(out, "@prefix {p}: {} .", iri_nt(ns));
    }
    let rdf_type = format!("{RDF}type");
    let short = |i: &str| compact(prefixes, i);
    let mut groups: Vec<(String, Vec<(String, Vec<String>)>)> = Vec::new();
    for (s, p, _, t) in sorted_rows(ts) {
        let object = term_with(&t.object, &short);
        if groups.last().is_none_or(|(subject, _)| *subject != s) {
            groups.push((s, Vec::new()));
        }
        let preds = &mut groups.last_mut().expect("pushed above").1;
        if preds.last().is_none_or(|(pred, _)| *pred != p) {
            preds.push((p, Vec::new()));
        }
        preds.last_mut().expect("pushed above").1.push(object);
    }
    for (subject_key, preds) in groups {
        let t = ts.triples.iter().find(|t| canonical(&t.subject) == subject_key).expect("group from set");
        out.push('\n');
        out.push_str(&term_with(&t.subject, &short));
        let rendered: Vec<String> = preds
            .into_iter()
            .map(|(p, objects)| {
                let iri = &p[1..p.len() - 1];
                let verb = if iri == rdf_type { "a".to_string() } else { compact(prefixes, iri) };
                format!("{verb} {}", objects.join(" , "))
            })
            .collect();
        out.push(' ');
        out.push_str(&rendered.join(" ;\n    "));
        out.push_str(" .\n");
    }
    out
}

/// Sorted serialization: N-Triples has one line per triple; Turtle groups by subject.
pub fn serialize(ts: &TripleSet, format: RdfFormat) -> Result<String, KgError> {
    ts.prefixes.check()?;
    Ok(match format {
        RdfFormat::Ntriples => ntriples(ts),
        RdfFormat::Turtle => turtle(ts),
    })
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Iri(String),
    Pname(String, String),
    Blank(String),
    Literal(Term),
    A,
    Prefix,
    Dot,
    Semicolon,
    Comma,
}

struct Lexer<'a> {
    chars: std::iter::Peekable<std::str::Chars<'a>>,
    line: usize,
    /// A word ended in `.`, which is the statement terminator.
    pending_dot: bool,
    /// Prefixed datatype name read after `^^`, resolved by the parser.
    pname_marker: Option<String>,
}

impl<'a> Lexer<'a> {
    fn new(text: &'a str) -> Self {
        Self { chars: text.chars().peekable(), line: 1, pending_dot: false, pname_marker: None }
    }

    fn err(&self, message: impl Into<String>) -> KgError {
        KgError::Syntax { line: self.line, message: message.into() }
    }

    fn skip_space(&mut self) {
        while let Some(&c) = self.chars.peek() {
            if c == '\n' {
                self.line += 1;
                self.chars.next();
            } else if c.is_whitespace() {
                self.chars.next();
            } else if c == '#' {
                while self.chars.peek().is_some_and(|&c| c != '\n') {
                    self.chars.next();
                }
            } else {
                break;
            }
        }
    }

    fn unicode_escape(&mut self, digits: usize) -> Result<char, KgError> {
        let hex: String = (0..digits).filter_map(|_| self.chars.next()).collect();
        u32::from_str_radix(&hex, 16)
            .ok()
            .and_then(char::from_u32)
            .ok_or_else(|| self.err(format!("bad escape \\u{hex}")))
    }

    fn iri(&mut self) -> Result<String, KgError> {
        let mut s = String::new();
        loop {
            match self.chars.next() {
                Some('>') => return Ok(s),
                Some('\\') => match self.chars.next() {
                    Some('u') => s.push(self.unicode_escape(4)?),
                    Some('U') => s.push(self.unicode_escape(8)?),
                    _ => return Err(self.err("bad IRI escape")),
                },
                Some(c) if c != '\n' => s.push(c),
                _ => return Err(self.err("unterminated IRI")),
            }
        }
    }

    fn word(&mut self) -> String {
        let mut s = String::new();
        while let Some(&c) = self.chars.peek() {
            if c.is_alphanumeric() || matches!(c, '_' | '-' | ':' | '.') {
                s.push(c);
                self.chars.next();
            } else {
                break;
            }
        }
        // a trailing dot terminates the statement
        while s.ends_with('.') {
            s.pop();
            self.pending_dot = true;
        }
        s
    }

    fn literal(&mut self) -> Result<Term, KgError> {
        let mut value = String::new();
        loop {
            match self.chars.next() {
                Some('"') => break,
                Some('\\') => match self.chars.next() {
                    Some('n') => value.push('\n'),
                    Some('r') => value.push('\r'),
                    Some('t') => value.push('\t'),
                    Some('"') => value.push('"'),
                    Some('\'') => value.push('\''),
                    Some('\\') => value.push('\\'),
                    Some('u') => value.push(self.unicode_escape(4)?),
                    Some('U') => value.push(self.unicode_escape(8)?),
                    _ => return Err(self.err("bad string escape")),
                },
                Some('\n') | None => return Err(self.err("unterminated string")),
                Some(c) => value.push(c),
            }
        }
        match self.chars.peek() {
            Some('@') => {
                self.chars.next();
                let lang = self.word();
                Ok(Term::Literal { value, lang: Some(lang), datatype: None })
            }
            Some('^') => {
                self.chars.next();
                if self.chars.next() != Some('^') {
                    return Err(self.err("expected ^^"));
                }
                let datatype = match self.chars.next() {
                    Some('<') => self.iri()?,
                    Some(c) => {
                        let mut w = c.to_string();
                        w.push_str(&self.word());
                        self.pname_marker = Some(w);
                        String::new()
                    }
                    None => return Err(self.err("missing datatype")),
                };
                Ok(Term::Literal { value, lang: None, datatype: Some(datatype) })
            }
            _ => Ok(Term::literal(value)),
        }
    }
}

impl Lexer<'_> {
    fn next_token(&mut self) -> Result<Option<(Token, usize)>, KgError> {
        if self.pending_dot {
            self.pending_dot = false;
            return Ok(Some((Token::Dot, self.line)));
        }
        self.skip_space();
        let line = self.line;
        let Some(&c) = self.chars.peek() else { return Ok(None) };
        let token = match c {
            '<' => {
                self.chars.next();
                Token::Iri(self.iri()?)
            }
            '"' => {
                self.chars.next();
                let lit = self.literal()?;
                match (lit, self.pname_marker.take()) {
                    (Term::Literal { value, .. }, Some(pname)) => {
                        Token::Literal(Term::Literal { value, lang: None, datatype: Some(format!("\u{0}{pname}")) })
                    }
                    (lit, _) => Token::Literal(lit),
                }
            }
            '.' => {
                self.chars.next();
                Token::Dot
            }
            ';' => {
                self.chars.next();
                Token::Semicolon
            }
            ',' => {
                self.chars.next();
                Token::Comma
            }
            '@' => {
                self.chars.next();
                match self.word().as_str() {
                    "prefix" => Token::Prefix,
                    other => return Err(self.err(format!("unsupported directive @{other}"))),
                }
            }
            '_' => {
                let w = self.word();
                match w.strip_prefix("_:") {
                    Some(label) if !label.is_empty() => Token::Blank(label.to_string()),
                    _ => return Err(self.err(format!("bad blank node `{w}`"))),
                }
            }
            _ => {
                let w = self.word();
                if w == "a" {
                    Token::A
                } else if let Some((p, local)) = w.split_once(':') {
                    Token::Pname(p.to_string(), local.to_string())
                } else {
                    return Err(self.err(format!("unexpected `{}`", if w.is_empty() { c.to_string() } else { w })));
                }
            }
        };
        Ok(Some((token, line)))
    }
}

struct TurtleParser<'a> {
    lexer: Lexer<'a>,
    peeked: Option<(Token, usize)>,
    prefixes: BTreeMap<String, String>,
    allow_turtle: bool,
}

impl<'a> TurtleParser<'a> {
    fn new(text: &'a str, allow_turtle: bool) -> Self {
        Self { lexer: Lexer::new(text), peeked: None, prefixes: BTreeMap::new(), allow_turtle }
    }

    fn next(&mut self) -> Result<Option<(Token, usize)>, KgError> {
        match self.peeked.take() {
            Some(t) => Ok(Some(t)),
            None => self.lexer.next_token(),
        }
    }

    fn peek(&mut self) -> Result<Option<&Token>, KgError> {
        if self.peeked.is_none() {
            self.peeked = self.lexer.next_token()?;
        }
        Ok(self.peeked.as_ref().map(|(t, _)| t))
    }

    fn err(&self, line: usize, message: impl Into<String>) -> KgError {
        KgError::Syntax { line, message: message.into() }
    }

    fn expand(&self, prefix: &str, local: &str, line: usize) -> Result<String, KgError> {
        if !self.allow_turtle {
            return Err(self.err(line, "prefixed names are not N-Triples"));
        }
        self.prefixes
            .get(prefix)
            .map(|ns| format!("{ns}{local}"))
            .ok_or_else(|| self.err(line, format!("undeclared prefix `{prefix}`")))
    }

    fn term(&mut self, position: &str) -> Result<Term, KgError> {
        let (token, line) = self.next()?.ok_or_else(|| self.err(self.lexer.line, format!("missing {position}")))?;
        Ok(match token {
            Token::Iri(i) => Term::Iri(i),
            Token::Pname(p, l) => Term::Iri(self.expand(&p, &l, line)?),
            Token::Blank(b) => Term::Blank(b),
            Token::A if position == "predicate" && self.allow_turtle => Term::Iri(format!("{RDF}type")),
            Token::Literal(Term::Literal { value, lang, datatype }) if position == "object" => {
                let datatype = match datatype {
                    Some(dt) if dt.starts_with('\u{0}') => {
                        let (p, l) = dt[1..].split_once(':').ok_or_else(|| self.err(line, "bad datatype"))?;
                        Some(self.expand(p, l, line)?)
                    }
                    other => other,
                };
                Term::Literal { value, lang, datatype }
            }
            other => return Err(self.err(line, format!("unexpected {other:?} as {position}"))),
        })
    }

    fn expect(&mut self, want: Token) -> Result<(), KgError> {
        match self.next()? {
            Some((t, _)) if t == want => Ok(()),
            Some((t, line)) => Err(self.err(line, format!("expected {want:?}, found {t:?}"))),
            None => Err(self.err(self.lexer.line, format!("expected {want:?} at end of input"))),
        }
    }

    fn parse(mut self) -> Result<BTreeSet<Triple>, KgError> {
        let mut out = BTreeSet::new();
        while let Some(token) = self.peek()? {
            if *token == Token::Prefix {
                self.next()?;
                let (name, line) = self.next()?.ok_or_else(|| self.err(self.lexer.line, "incomplete @prefix"))?;
                let Token::Pname(p, local) = name else {
                    return Err(self.err(line, "expected prefix name"));
                };
                if !local.is_empty() || !self.allow_turtle {
                    return Err(self.err(line, "bad @prefix"));
                }
                let Some((Token::Iri(ns), _)) = self.next()? else {
                    return Err(self.err(line, "expected namespace IRI"));
                };
                self.prefixes.insert(p, ns);
                self.expect(Token::Dot)?;
                continue;
            }
            let subject = self.term("subject")?;
            loop {
                let predicate = match self.term("predicate")? {
                    Term::Iri(i) => i,
                    other => return Err(self.err(self.lexer.line, format!("predicate {other:?} is not an IRI"))),
                };
                loop {
                    let object = self.term("object")?;
                    out.insert(Triple::new(subject.clone(), predicate.clone(), object)?);
                    if self.allow_turtle && self.peek()? == Some(&Token::Comma) {
                        self.next()?;
                    } else {
                        break;
                    }
                }
                if self.allow_turtle && self.peek()? == Some(&Token::Semicolon) {
                    self.next()?;
                } else {
                    break;
                }
            }
            self.expect(Token::Dot)?;
        }
        Ok(out)
    }
}

/// Reads the Turtle subset produced by [`serialize`] (prefixes, `a`, `;`, `,`).
pub fn parse_turtle(text: &str) -> Result<BTreeSet<Triple>, KgError> {
    TurtleParser::new(text, true).parse()
}

pub fn parse_ntriples(text: &str) -> Result<BTreeSet<Triple>, KgError> {
    let mut out = BTreeSet::new();
    for (i, line) in text.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let parsed = TurtleParser::new(trimmed, false).parse().map_err(|e| match e {
            KgError::Syntax { message, .. } => KgError::Syntax { line: i + 1, message },
            other => other,
        })?;
        if parsed.len() != 1 {
            return Err(KgError::Syntax { line: i + 1, message: "expected exactly one triple".into() });
        }
        out.extend(parsed);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::super::fixtures::page;
    use super::super::*;
    use super::*;
    use crate::annotations::Vocabulary;

    fn two() -> TripleSet {
        let mut ts = TripleSet::default();
        ts.triples
            .insert(Triple::new(Term::iri("http://e.org/b"), "http://e.org/p", Term::literal("x \"q\"\n")).unwrap());
        ts.triples
            .insert(Triple::new(Term::iri("http://e.org/a"), "http://e.org/p", Term::Blank("n1".into())).unwrap());
        ts
    }

    #[test]
    fn ntriples_lines() {
        let nt = serialize(&two(), RdfFormat::Ntriples).unwrap();
        let lines: Vec<&str> = nt.lines().collect();
        assert_eq!(lines.len(), 2);
        assert!(lines.iter().all(|l| l.ends_with(" .")));
        assert_eq!(lines[0], "<http://e.org/a> <http://e.org/p> _:n1 .");
        assert_eq!(lines[1], r#"<http://e.org/b> <http://e.org/p> "x \"q\"\n" ."#);
        assert_eq!(parse_ntriples(&nt).unwrap(), two().triples);
    }

    #[test]
    fn page_round_trips_through_both_formats() {
        let ts = annotations_to_triples(&page(), &Vocabulary::default()).unwrap();
        let nt = serialize(&ts, RdfFormat::Ntriples).unwrap();
        let ttl = serialize(&ts, RdfFormat::Turtle).unwrap();
        assert_eq!(nt.lines().count(), ts.len());
        assert_eq!(parse_ntriples(&nt).unwrap(), ts.triples);
        assert_eq!(parse_turtle(&ttl).unwrap(), ts.triples);
        assert!(ttl.contains(" a oa:Annotation"), "{ttl}");
        assert!(ttl.contains("^^xsd:dateTime"));
        assert_eq!(serialize(&ts, RdfFormat::Turtle).unwrap(), ttl);
    }

    #[test]
    fn iri_escapes() {
        let mut ts = TripleSet::default();
        ts.triples
            .insert(Triple::new(Term::iri("http://e.org/a b"), "http://e.org/p", Term::iri("http://e.org/c")).unwrap());
        let nt = serialize(&ts, RdfFormat::Ntriples).unwrap();
        assert!(nt.starts_with("<http://e.org/a\\u0020b>"));
        assert_eq!(parse_ntriples(&nt).unwrap(), ts.triples);
    }

    #[test]
    fn reader_errors() {
        assert!(parse_ntriples("<a> <b> .").is_err());
        assert!(parse_ntriples("<a> <b> <c> . <d> <e> <f> .").is_err());
        assert!(parse_turtle("x:a x:b x:c .").is_err());
        assert!(parse_ntriples("\"lit\" <p> <o> .").is_err());
    }

    #[test]
    fn lang_literals() {
        let text = "<http://e.org/a> <http://e.org/p> \"chat\"@fr .\n";
        let ts = parse_ntriples(text).unwrap();
        let t = ts.iter().next().unwrap();
        assert_eq!(t.object, Term::Literal { value: "chat".into(), lang: Some("fr".into()), datatype: None });
    }
}
