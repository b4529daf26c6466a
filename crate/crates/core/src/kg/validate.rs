//! Shape checks over a triple set, mirroring the pattern documented in the module root.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{Term, TripleSet, OA, RDF};
use crate::annotations::{SemioticLevel, Vocabulary};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Violation {
    pub subject: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.subject, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

struct Graph<'a> {
    out: BTreeMap<&'a Term, Vec<(&'a str, &'a Term)>>,
    referenced: BTreeSet<&'a Term>,
}

impl<'a> Graph<'a> {
    fn objects(&self, s: &Term, p: &str) -> Vec<&'a Term> {
        self.out.get(s).map(|v| v.iter().filter(|(q, _)| *q == p).map(|(_, o)| *o).collect()).unwrap_or_default()
    }

    fn has_type(&self, s: &Term, class: &str) -> bool {
        self.objects(s, &format!("{RDF}type")).iter().any(|o| matches!(o, Term::Iri(i) if i == class))
    }
}

fn label(t: &Term) -> String {
    match t {
        Term::Iri(i) => i.clone(),
        Term::Blank(b) => format!("_:{b}"),
        Term::Literal { value, .. } => format!("\"{value}\""),
    }
}

struct Checker<'a> {
    g: Graph<'a>,
    v: &'a Vocabulary,
    found: Vec<Violation>,
}

impl<'a> Checker<'a> {
    fn flag(&mut self, s: &Term, message: impl Into<String>) {
        self.found.push(Violation { subject: label(s), message: message.into() });
    }

    /// Exactly one object for `p`, returned when present.
    fn one(&mut self, s: &Term, p: &str, what: &str) -> Option<&'a Term> {
        let objs = self.g.objects(s, p);
        match objs.len() {
            1 => Some(objs[0]),
            0 => {
                self.flag(s, format!("missing {what}"));
                None
            }
            n => {
                self.flag(s, format!("{n} values for {what}, expected one"));
                None
            }
        }
    }

    fn one_literal(&mut self, s: &Term, p: &str, what: &str) {
        if let Some(o) = self.one(s, p, what) {
            if !o.is_literal() {
                self.flag(s, format!("{what} is not a literal"));
            }
        }
    }

    fn require_type(&mut self, s: &Term, class: &str, what: &str) {
        if !self.g.has_type(s, class) {
            self.flag(s, format!("not typed {what}"));
        }
    }

    fn level_classes(&self) -> Vec<String> {
        SemioticLevel::ALL.iter().map(|l| format!("{}{}", self.v.pip, l.class_name())).collect()
    }

    fn target(&mut self, t: &Term) {
        if !matches!(t, Term::Blank(_)) {
            return;
        }
        self.one(t, &format!("{OA}hasSource"), "oa:hasSource");
        if let Some(sel) = self.one(t, &format!("{OA}hasSelector"), "oa:hasSelector") {
            self.require_type(sel, &format!("{OA}FragmentSelector"), "oa:FragmentSelector");
            let value = self.g.objects(sel, &format!("{RDF}value"));
            match value.as_slice() {
                [Term::Literal { value, .. }] if value.starts_with("xywh=") => {}
                [] => self.flag(sel, "missing rdf:value"),
                _ => self.flag(sel, "selector value is not a single xywh literal"),
            }
        }
    }

    fn interpretation_body(&mut self, body: &Term, level: Option<&String>) {
        self.require_type(body, &format!("{OA}TextualBody"), "oa:TextualBody");
        self.one_literal(body, &format!("{RDF}value"), "rdf:value");
        let v = self.v;
        let act_class = format!("{}InterpretationAct", v.hico);
        let acts: Vec<&Term> = self
            .g
            .objects(body, &format!("{}wasGeneratedBy", v.prov))
            .into_iter()
            .filter(|a| self.g.has_type(a, &act_class))
            .collect();
        if acts.len() != 1 {
            self.flag(body, format!("generated by {} interpretation acts, expected one", acts.len()));
            return;
        }
        let act = acts[0];
        self.require_type(act, &format!("{}Activity", v.prov), "prov:Activity");
        if let Some(kind) = self.one(act, &format!("{}hasInterpretationType", v.hico), "hico:hasInterpretationType") {
            if level.is_some_and(|l| *kind != Term::Iri(l.clone())) {
                self.flag(act, "interpretation type differs from the annotation level");
            }
        }
        if let Some(agent) = self.one(act, &format!("{}wasAssociatedWith", v.prov), "prov:wasAssociatedWith") {
            self.require_type(agent, &format!("{}SoftwareAgent", v.prov), "prov:SoftwareAgent");
            self.one_literal(agent, &format!("{}identifier", v.dcterms), "model identifier");
        }
        if let Some(prompt) = self.one(act, &format!("{}used", v.prov), "prov:used") {
            self.one_literal(prompt, &format!("{}identifier", v.dcterms), "prompt identifier");
        }
        self.one_literal(act, &format!("{}endedAtTime", v.prov), "prov:endedAtTime");
        self.one_literal(act, &format!("{}creator", v.dcterms), "dcterms:creator");
    }

    fn annotation(&mut self, a: &Term) {
        let motivation = self.one(a, &format!("{OA}motivatedBy"), "oa:motivatedBy").cloned();
        self.one(a, &format!("{}isAnchoredTo", self.v.mlao), "mlao:isAnchoredTo");
        let targets = self.g.objects(a, &format!("{OA}hasTarget"));
        if targets.is_empty() {
            self.flag(a, "missing oa:hasTarget");
        }
        for t in targets {
            self.target(t);
        }
        let levels: Vec<String> = self.level_classes().into_iter().filter(|c| self.g.has_type(a, c)).collect();
        let values = self.g.objects(a, &format!("{OA}bodyValue"));
        let bodies = self.g.objects(a, &format!("{OA}hasBody"));
        if values.len() + bodies.len() != 1 {
            self.flag(a, format!("{} bodies, expected one", values.len() + bodies.len()));
        }
        let describing = Term::Iri(format!("{OA}describing"));
        if let Some(body) = bodies.first() {
            if levels.len() != 1 {
                self.flag(a, format!("interpretation typed with {} level classes, expected one", levels.len()));
            }
            if motivation.as_ref().is_some_and(|m| *m != describing) {
                self.flag(a, "interpretation not motivated by oa:describing");
            }
            self.interpretation_body(body, levels.first());
        } else if !levels.is_empty() {
            self.flag(a, "level class on an annotation without a textual body");
        } else if motivation.as_ref().is_some_and(|m| *m != Term::Iri(format!("{OA}tagging"))) {
            self.flag(a, "tag annotation not motivated by oa:tagging");
        }
    }
}

/// Checks annotation shapes: typing, one motivation, one body, targets with
/// fragment selectors, one anchor, interpretation bodies produced by exactly
/// one complete interpretation act, and no unreferenced blank nodes.
pub fn validate_graph(ts: &TripleSet, vocab: &Vocabulary) -> ValidationReport {
    let mut g = Graph { out: BTreeMap::new(), referenced: BTreeSet::new() };
    for t in &ts.triples {
        g.out.entry(&t.subject).or_default().push((t.predicate.as_str(), &t.object));
        g.referenced.insert(&t.object);
    }
    let annotation_class = format!("{OA}Annotation");
    let annotation_only = [
        format!("{OA}motivatedBy"),
        format!("{OA}hasTarget"),
        format!("{OA}hasBody"),
        format!("{OA}bodyValue"),
        format!("{}isAnchoredTo", vocab.mlao),
    ];
    let subjects: Vec<&Term> = g.out.keys().copied().collect();
    let mut c = Checker { g, v: vocab, found: Vec::new() };
    for s in subjects {
        let is_annotation = c.g.has_type(s, &annotation_class);
        if is_annotation {
            c.annotation(s);
        } else if c.g.out[s].iter().any(|(p, _)| annotation_only.iter().any(|q| q == p)) {
            c.flag(s, "uses annotation properties but is not typed oa:Annotation");
        }
        if matches!(s, Term::Blank(_)) && !c.g.referenced.contains(s) {
            c.flag(s, "blank node is never referenced");
        }
    }
    c.found.sort();
    c.found.dedup();
    ValidationReport { violations: c.found }
}
