use std::sync::Arc;

use async_trait::async_trait;
use reqwest::{Client, RequestBuilder};

use dris_core::federation::{Connector, ServiceDescriptor};
use dris_core::protocol::{
    decode, encode, ErrorBody, HarvestResponse, HarvestRunResponse, Message, QueryRequest, QueryResponse,
    RegisterRequest, RegistryDump, PROTOCOL_VERSION,
};
use dris_core::service::{MetadataSource, NodeError, SearchService};
use dris_core::webgraph::Timestamp;

fn client() -> Client {
    // No idle connections are kept, so a killed server is seen as gone at once.
    Client::builder()
        .no_proxy()
        .pool_max_idle_per_host(0)
        .build()
        .expect("plain HTTP client")
}

/// A remote node reached over HTTP.
#[derive(Clone)]
pub struct HttpNode {
    base: String,
    id: String,
    client: Client,
}

impl HttpNode {
    /// `base` is the node's root URL, e.g. `http://127.0.0.1:7300`.
    pub fn new(base: impl Into<String>, id: impl Into<String>) -> Self {
        Self::with_client(base, id, client())
    }

    fn with_client(base: impl Into<String>, id: impl Into<String>, client: Client) -> Self {
        Self {
            base: base.into().trim_end_matches('/').to_string(),
            id: id.into(),
            client,
        }
    }

    pub fn base_url(&self) -> &str {
        &self.base
    }

    async fn call<M: Message>(&self, request: RequestBuilder) -> Result<M, NodeError> {
        let response = request
            .send()
            .await
            .map_err(|e| NodeError::Unavailable(format!("{}: {e}", self.base)))?;
        let status = response.status();
        let bytes = response
            .bytes()
            .await
            .map_err(|e| NodeError::Unavailable(format!("{}: {e}", self.base)))?;
        if status.is_success() {
            return decode(&bytes).map_err(|e| NodeError::Protocol(format!("{}: {e}", self.base)));
        }
        match decode::<ErrorBody>(&bytes) {
            Ok(body) => Err(NodeError::from_code(&body.code, body.message)),
            Err(_) => Err(NodeError::Protocol(format!("{} answered {status}", self.base))),
        }
    }

    fn post(&self, path: &str, body: Vec<u8>) -> RequestBuilder {
        self.client
            .post(format!("{}{path}", self.base))
            .header("content-type", "application/json")
            .body(body)
    }

    pub async fn run_harvest(&self) -> Result<HarvestRunResponse, NodeError> {
        self.call(self.post("/harvest/run", Vec::new())).await
    }

    pub async fn registry(&self) -> Result<RegistryDump, NodeError> {
        self.call(self.client.get(format!("{}/registry", self.base))).await
    }

    pub async fn register(&self, descriptor: ServiceDescriptor) -> Result<RegistryDump, NodeError> {
        let request = RegisterRequest {
            version: PROTOCOL_VERSION.into(),
            descriptor,
        };
        self.call(self.post("/register", encode(&request))).await
    }
}

#[async_trait]
impl SearchService for HttpNode {
    async fn search(&self, request: QueryRequest) -> Result<QueryResponse, NodeError> {
        self.call(self.post("/search", encode(&request))).await
    }
}

#[async_trait]
impl MetadataSource for HttpNode {
    fn id(&self) -> &str {
        &self.id
    }

    async fn metadata(&self, since: Option<Timestamp>, limit: usize) -> Result<HarvestResponse, NodeError> {
        let mut url = format!("{}/metadata?limit={limit}", self.base);
        if let Some(s) = since {
            url.push_str(&format!("&since={s}"));
        }
        self.call(self.client.get(url)).await
    }
}

/// Connects to descriptors whose endpoint is an `http://` URL.
#[derive(Clone)]
pub struct HttpConnector {
    client: Client,
}

impl HttpConnector {
    pub fn new() -> Self {
        Self { client: client() }
    }
}

impl Default for HttpConnector {
    fn default() -> Self {
        Self::new()
    }
}

impl Connector for HttpConnector {
    fn connect(&self, desc: &ServiceDescriptor) -> Result<Arc<dyn SearchService>, NodeError> {
        if !desc.endpoint.starts_with("http://") {
            return Err(NodeError::Unavailable(format!("{} is not an http endpoint", desc.endpoint)));
        }
        Ok(Arc::new(HttpNode::with_client(
            &desc.endpoint,
            &desc.class_name,
            self.client.clone(),
        )))
    }
}
