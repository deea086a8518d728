//! Misinformation detection over LLM-simulated reaction networks.
//!
//! The crate is organised as a pipeline:
//!
//! 1. [`persona`] samples synthetic social media users.
//! 2. [`netgen`] grows a user-news interaction tree around each article by
//!    prompting an LLM through the [`llm`] gateway.
//! 3. [`proxy`] asks the LLM for explanations (sentiment, framing, propaganda,
//!    retrieval, stance, response) and attaches them to the tree.
//! 4. [`encode`] turns texts into vectors and [`gnn`] trains one GIN expert per
//!    proxy task.
//! 5. [`ensemble`] merges the seven experts through an LLM.
//! 6. [`eval`] scores everything, and [`pipeline`] wires the stages to disk.

pub mod encode;
pub mod ensemble;
pub mod eval;
pub mod gnn;
pub mod llm;
pub mod netgen;
pub mod persona;
pub mod pipeline;
pub mod proxy;
pub mod seed;
pub mod taxonomy;

pub use netgen::{InteractionNetwork, NewsArticle};
pub use taxonomy::{TaskKind, Taxonomy};
