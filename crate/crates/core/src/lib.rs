//! Domain-partitioned federated search: corpus model, crawling, indexing,
//! metadata harvesting and the query federation between layers.

pub mod federation;
pub mod harvest;
pub mod index;
pub mod protocol;
pub mod service;
pub mod spider;
pub mod webgraph;
