pub mod answer;
pub mod corpus;
pub mod embed;
pub mod eval;
pub mod index;
pub mod llm;
pub mod pipeline;
pub mod prompt;
pub mod retry;
pub mod schema;
pub mod synth;
