pub mod ingestion;
pub mod jsonl;
pub mod text;
pub mod gateway;
pub mod pipeline;
pub mod evaluation;
