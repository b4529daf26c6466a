//! RDF view of annotation pages.
//!
//! Per region annotation (9 triples):
//!
//! ```text
//! <a> rdf:type oa:Annotation ; oa:motivatedBy oa:tagging ; oa:bodyValue "diagram" ;
//!     oa:hasTarget _:t ; mlao:isAnchoredTo <page> .
//! _:t oa:hasSource <canvas> ; oa:hasSelector _:s .
//! _:s rdf:type oa:FragmentSelector ; rdf:value "xywh=x,y,w,h" .
//! ```
//!
//! Per interpretation annotation (23 triples): the same target/anchor shape,
//! `oa:describing`, an extra `rdf:type pip:<Level>`, and
//!
//! ```text
//! <a> oa:hasBody _:b .
//! _:b rdf:type oa:TextualBody ; rdf:value "..." ; prov:wasGeneratedBy _:act .
//! _:act rdf:type hico:InterpretationAct , prov:Activity ;
//!     hico:hasInterpretationType pip:<Level> ; prov:wasAssociatedWith _:agent ;
//!     prov:used _:prompt ; prov:endedAtTime "..."^^xsd:dateTime ; dcterms:creator "..." .
//! _:agent rdf:type prov:SoftwareAgent ; dcterms:identifier "<model>" .
//! _:prompt dcterms:identifier "<prompt id>" .
//! ```
//!
//! Blank nodes are labelled `b_<hash of annotation id>_<role>`.

mod serialize;
mod validate;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::annotations::{AnnotationPage, Body, Vocabulary, WebAnnotation};

pub use serialize::{parse_ntriples, parse_turtle, serialize, RdfFormat};
pub use validate::{validate_graph, ValidationReport, Violation};

pub const OA: &str = "http://www.w3.org/ns/oa#";
pub const RDF: &str = "http://www.w3.org/1999/02/22-rdf-syntax-ns#";
pub const XSD: &str = "http://www.w3.org/2001/XMLSchema#";

#[derive(Debug, Error)]
pub enum KgError {
    #[error("cannot convert annotation: {0}")]
    Conversion(String),
    #[error("prefix configuration: {0}")]
    Prefix(String),
    #[error("invalid triple: {0}")]
    Triple(String),
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Term {
    Iri(String),
    Blank(String),
    Literal { value: String, lang: Option<String>, datatype: Option<String> },
}

impl Term {
    pub fn iri(s: impl Into<String>) -> Self {
        Term::Iri(s.into())
    }

    pub fn literal(s: impl Into<String>) -> Self {
        Term::Literal { value: s.into(), lang: None, datatype: None }
    }

    pub fn typed(s: impl Into<String>, datatype: impl Into<String>) -> Self {
        Term::Literal { value: s.into(), lang: None, datatype: Some(datatype.into()) }
    }

    pub fn is_literal(&self) -> bool {
        matches!(self, Term::Literal { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Triple {
    pub subject: Term,
    pub predicate: String,
    pub object: Term,
}

impl Triple {
    pub fn new(subject: Term, predicate: impl Into<String>, object: Term) -> Result<Self, KgError> {
        if subject.is_literal() {
            return Err(KgError::Triple("literal in subject position".into()));
        }
        let predicate = predicate.into();
        if predicate.is_empty() {
            return Err(KgError::Triple("empty predicate IRI".into()));
        }
        Ok(Self { subject, predicate, object })
    }
}

/// Prefix → namespace IRI, used for Turtle output.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrefixTable {
    entries: BTreeMap<String, String>,
}

impl PrefixTable {
    pub fn empty() -> Self {
        Self { entries: BTreeMap::new() }
    }

    pub fn for_vocabulary(vocab: &Vocabulary) -> Self {
        let mut entries = BTreeMap::new();
        for (p, ns) in [
            ("oa", OA),
            ("rdf", RDF),
            ("xsd", XSD),
            ("dcterms", vocab.dcterms.as_str()),
            ("prov", vocab.prov.as_str()),
            ("hico", vocab.hico.as_str()),
            ("mlao", vocab.mlao.as_str()),
            ("pip", vocab.pip.as_str()),
        ] {
            entries.insert(p.to_string(), ns.to_string());
        }
        Self { entries }
    }

    /// Binds `prefix`; rebinding it to a different namespace is a collision.
    pub fn insert(&mut self, prefix: &str, namespace: &str) -> Result<(), KgError> {
        match self.entries.get(prefix) {
            Some(existing) if existing != namespace => Err(KgError::Prefix(format!(
                "prefix `{prefix}` already bound to <{existing}>, cannot rebind to <{namespace}>"
            ))),
            _ => {
                self.entries.insert(prefix.to_string(), namespace.to_string());
                Ok(())
            }
        }
    }

    /// Fails when two prefixes share a namespace, which makes compaction ambiguous.
    pub fn check(&self) -> Result<(), KgError> {
        let mut seen: BTreeMap<&str, &str> = BTreeMap::new();
        for (p, ns) in &self.entries {
            if ns.is_empty() {
                return Err(KgError::Prefix(format!("prefix `{p}` has an empty namespace")));
            }
            if let Some(other) = seen.insert(ns, p) {
                return Err(KgError::Prefix(format!("prefixes `{other}` and `{p}` both map to <{ns}>")));
            }
        }
        Ok(())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(p, ns)| (p.as_str(), ns.as_str()))
    }

    pub fn get(&self, prefix: &str) -> Option<&str> {
        self.entries.get(prefix).map(String::as_str)
    }
}

impl Default for PrefixTable {
    fn default() -> Self {
        Self::for_vocabulary(&Vocabulary::default())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TripleSet {
    pub triples: BTreeSet<Triple>,
    pub prefixes: PrefixTable,
}

impl TripleSet {
    pub fn new(prefixes: PrefixTable) -> Self {
        Self { triples: BTreeSet::new(), prefixes }
    }

    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    fn add(&mut self, s: &Term, p: String, o: Term) {
        self.triples.insert(Triple { subject: s.clone(), predicate: p, object: o });
    }
}

struct Builder<'v> {
    vocab: &'v Vocabulary,
    set: TripleSet,
}

impl Builder<'_> {
    fn oa(&self, local: &str) -> String {
        format!("{OA}{local}")
    }

    fn rdf(&self, local: &str) -> String {
        format!("{RDF}{local}")
    }

    fn ns(&self, ns: &str, local: &str) -> String {
        format!("{ns}{local}")
    }

    fn annotation(&mut self, a: &WebAnnotation) -> Result<(), KgError> {
        if a.target.source.is_empty() {
            return Err(KgError::Conversion(format!("{} has no target", a.id)));
        }
        let v = self.vocab;
        let hash = hex::encode(&Sha256::digest(a.id.as_bytes())[..8]);
        let blank = |role: &str| Term::Blank(format!("b_{hash}_{role}"));
        let subject = Term::iri(&a.id);
        let (rdf_type, rdf_value) = (self.rdf("type"), self.rdf("value"));

        self.set.add(&subject, rdf_type.clone(), Term::iri(self.oa("Annotation")));
        self.set.add(&subject, self.oa("motivatedBy"), Term::iri(self.oa(a.motivation.as_str())));
        self.set.add(&subject, self.ns(&v.mlao, "isAnchoredTo"), Term::iri(&a.anchor_uri));
        match a.target.selector {
            None => self.set.add(&subject, self.oa("hasTarget"), Term::iri(&a.target.source)),
            Some(b) => {
                let (t, s) = (blank("target"), blank("selector"));
                self.set.add(&subject, self.oa("hasTarget"), t.clone());
                self.set.add(&t, self.oa("hasSource"), Term::iri(&a.target.source));
                self.set.add(&t, self.oa("hasSelector"), s.clone());
                self.set.add(&s, rdf_type.clone(), Term::iri(self.oa("FragmentSelector")));
                self.set.add(&s, rdf_value.clone(), Term::literal(format!("xywh={b}")));
            }
        }
        match &a.body {
            Body::Tag(class) => self.set.add(&subject, self.oa("bodyValue"), Term::literal(class.as_str())),
            Body::Interpretation { text, level } => {
                let p = a
                    .provenance
                    .as_ref()
                    .ok_or_else(|| KgError::Conversion(format!("{}: interpretation without provenance", a.id)))?;
                let level_iri = Term::iri(self.ns(&v.pip, level.class_name()));
                let (body, act, agent, prompt) = (blank("body"), blank("act"), blank("agent"), blank("prompt"));
                self.set.add(&subject, rdf_type.clone(), level_iri.clone());
                self.set.add(&subject, self.oa("hasBody"), body.clone());
                self.set.add(&body, rdf_type.clone(), Term::iri(self.oa("TextualBody")));
                self.set.add(&body, rdf_value, Term::literal(text));
                self.set.add(&body, self.ns(&v.prov, "wasGeneratedBy"), act.clone());
                self.set.add(&act, rdf_type.clone(), Term::iri(self.ns(&v.hico, "InterpretationAct")));
                self.set.add(&act, rdf_type.clone(), Term::iri(self.ns(&v.prov, "Activity")));
                self.set.add(&act, self.ns(&v.hico, "hasInterpretationType"), level_iri);
                self.set.add(&act, self.ns(&v.prov, "wasAssociatedWith"), agent.clone());
                self.set.add(&act, self.ns(&v.prov, "used"), prompt.clone());
                self.set.add(
                    &act,
                    self.ns(&v.prov, "endedAtTime"),
                    Term::typed(&p.timestamp, format!("{XSD}dateTime")),
                );
                self.set.add(&act, self.ns(&v.dcterms, "creator"), Term::literal(&p.generator));
                self.set.add(&agent, rdf_type, Term::iri(self.ns(&v.prov, "SoftwareAgent")));
                self.set.add(&agent, self.ns(&v.dcterms, "identifier"), Term::literal(&p.model));
                self.set.add(&prompt, self.ns(&v.dcterms, "identifier"), Term::literal(&p.prompt_id));
            }
        }
        Ok(())
    }
}

pub fn annotations_to_triples(page: &AnnotationPage, vocab: &Vocabulary) -> Result<TripleSet, KgError> {
    if page.items.is_empty() {
        return Err(KgError::Conversion("annotation page has no items".into()));
    }
    let prefixes = PrefixTable::for_vocabulary(vocab);
    prefixes.check()?;
    let mut b = Builder { vocab, set: TripleSet::new(prefixes) };
    for a in &page.items {
        b.annotation(a)?;
    }
    Ok(b.set)
}
