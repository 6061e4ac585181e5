pub mod embeddings;
pub mod kg;
pub mod llm_gateway;
pub mod mapper;
pub mod ontology;
pub mod query;
pub mod simeval;
pub mod spl_corpus;
