//! Entity-aware structured article modeling at desk scale.
//!
//! Articles are split into typed fields, entity mentions are tagged and
//! annotated with category tokens, fields are serialized in a canonical order
//! and a small decoder-only transformer is trained over the result. The crate
//! also covers nucleus-sampling generation, body-restricted perplexity,
//! ablation harnesses, embedding-based visual NER and image/article retrieval.

pub mod corpus;
pub mod embed;
pub mod lm;
pub mod ner;
pub mod serializer;
pub mod tokenizer;
pub mod evalsuite;
pub mod generate;
pub mod pipeline;
pub mod retrieval;
pub mod cli;
