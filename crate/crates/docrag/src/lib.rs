//! Documentation retrieval for the coding and retrieval agents.
//!
//! Blender's HTML manual and API reference are reduced to text, split into
//! heading-aligned chunks and indexed with BM25. Queries come either from a
//! subtask's intent or from a failed execution's error message.

pub mod chunk;
mod error;
pub mod extract;
mod index;
mod ingest;
mod store;
mod tokenize;

use serde::{Deserialize, Serialize};

pub use chunk::{reconstruct, ChunkOptions, DocChunk};
pub use error::DocragError;
pub use index::{error_query_terms, error_query_text, quoted_spans, Bm25Params, Hit, Posting, RetrievalIndex, Retriever};
pub use ingest::{ingest, IngestOptions, IngestReport, UNVERSIONED, VERSION_FILE};
pub use store::{IndexMeta, FORMAT_VERSION};
pub use tokenize::tokenize;

/// Retrieved chunks plus the model-written condensation handed to the coder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalSummary {
    pub query: String,
    pub top_chunks: Vec<Hit>,
    pub summary_text: String,
}
