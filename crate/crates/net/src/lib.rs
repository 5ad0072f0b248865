//! HTTP endpoints for search nodes and the matching clients.
//!
//! Bodies are protocol messages encoded as JSON. Every non-2xx reply carries
//! an `ErrorBody`.

mod client;
mod server;

pub use client::{HttpConnector, HttpNode};
pub use server::{layer2_router, layer3_router, spawn, top_router, ServerHandle};
