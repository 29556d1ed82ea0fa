//! Graph-summary corpus generation: GraphML serialization of subgraphs,
//! domain prompts, LLM clients and the pair dataset format.

pub mod dataset;
pub mod generate;
pub mod graphml;
pub mod llm;
pub mod prompts;

pub use dataset::{read_pairs, token_count, write_pairs, GraphSummaryPair, PairSink};
pub use generate::{generate_pairs, seed_prompt, FailureRecord, GenerateConfig, GenerateOutcome};
pub use graphml::{emit_graphml, node_texts, parse_graphml, truncate_chars, write_document, GraphMlDocument, GraphMlSchema};
pub use llm::{HttpLlmClient, LlmClient, LlmClientConfig, MockLlm};
pub use prompts::{render_summary_prompt, render_template, Domain, GRAPHML_PLACEHOLDER, SEED_PLACEHOLDER};
