//! Turn text corpora into conversational question-answering dialogs.

pub mod ablation;
pub mod backend;
pub mod bow;
pub mod corpus;
pub mod dataset;
pub mod dialog;
pub mod error;
pub mod eval;
pub mod exec;
pub mod fixtures;
pub mod inpaint;
pub mod keywords;
pub mod manifest;
pub mod optim;
pub mod render;
pub mod rerank;
pub mod retrieval;
pub mod segment;
pub mod tasks;
pub mod text;
pub mod trainer;

pub use error::{Error, Result};
pub use exec::Execution;
