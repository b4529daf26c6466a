//! Toolkit for turning digitized manuscript pages into structured knowledge.
//!
//! The pipeline stages live in separate modules:
//!
//! * [`corpus`] reads IIIF Presentation manifests, drops blank pages, computes
//!   corpus statistics and downloads page images through the IIIF Image API.
//! * [`classifier`] computes HOG page features, trains a multinomial logistic
//!   regression and evaluates it with stratified k-fold cross-validation.
//! * [`detect`] scores layout detections (IoU matching, AP, mAP@0.5, best-F1).
//! * [`annotations`] wraps regions and interpretations in W3C Web Annotations.
//! * [`eg`] models Existential Graphs, reads them as logic formulas and decides
//!   equivalence.
//! * [`vlm`] builds the semiotic prompts, talks to chat-completions endpoints
//!   and scores answers.
//! * [`kg`] exports annotations as RDF (Turtle / N-Triples).

pub mod annotations;
pub mod classifier;
pub mod corpus;
pub mod detect;
pub mod eg;
pub mod kg;
pub mod retry;
pub mod vlm;
