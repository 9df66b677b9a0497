//! Office-action response engine.
//!
//! Pipeline stages, each in its own module:
//!
//! * [`corpus`]: ingestion, preprocessing, document-term matrices
//! * [`topicmodel`]: LDA by collapsed Gibbs sampling, perplexity/coherence, K selection
//! * [`delphi`]: the convergent consensus process over topic proposals
//! * [`valuation`]: value-signal scoring and template admission
//! * [`embedding`]: embedding providers, pooling, cosine top-k retrieval
//! * [`cf`]: implicit-feedback ALS and BPR over the user-template matrix
//! * [`cascade`]: the cascade hybrid recommender and ranking metrics
//! * [`parser`]: office-action field extraction, technical keywords, template autofill
//! * [`generation`]: prompt assembly under a token budget and generation backends
//! * [`events`]: the append-only interaction log and engagement analytics

pub mod cascade;
pub mod cf;
pub mod config;
pub mod corpus;
pub mod delphi;
pub mod embedding;
pub mod events;
pub mod generation;
pub mod http;
pub mod parser;
pub mod topicmodel;
pub mod synthetic;
pub mod valuation;
