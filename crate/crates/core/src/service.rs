//! Node roles behind transport-neutral traits, plus an in-process link with
//! simulated latency and fault injection.

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Duration;

use async_trait::async_trait;
use parking_lot::{Mutex, RwLock};
use thiserror::Error;

use crate::federation::{fanout_search, Connector, FederationError, Registry, RegistryError, ServiceDescriptor};
use crate::harvest::{harvest, page_records, HarvestBatch, HarvestError, Layer2Store};
use crate::index::{query_terms, IndexError, Layer3Index};
use crate::protocol::{validate, HarvestResponse, QueryRequest, QueryResponse, RankedResult, PROTOCOL_VERSION};
use crate::webgraph::{DomainName, Timestamp};

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum NodeError {
    #[error("unavailable: {0}")]
    Unavailable(String),
    #[error("bad request: {0}")]
    BadRequest(String),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("internal error: {0}")]
    Internal(String),
}

impl NodeError {
    pub fn code(&self) -> &'static str {
        match self {
            NodeError::Unavailable(_) => "unavailable",
            NodeError::BadRequest(_) => "bad_request",
            NodeError::Protocol(_) => "protocol",
            NodeError::Internal(_) => "internal",
        }
    }

    pub fn message(&self) -> &str {
        match self {
            NodeError::Unavailable(m)
            | NodeError::BadRequest(m)
            | NodeError::Protocol(m)
            | NodeError::Internal(m) => m,
        }
    }

    pub fn from_code(code: &str, message: impl Into<String>) -> Self {
        let message = message.into();
        match code {
            "unavailable" => NodeError::Unavailable(message),
            "bad_request" => NodeError::BadRequest(message),
            "protocol" => NodeError::Protocol(message),
            _ => NodeError::Internal(message),
        }
    }
}

impl From<IndexError> for NodeError {
    fn from(e: IndexError) -> Self {
        match e {
            IndexError::EmptyQuery => NodeError::BadRequest(e.to_string()),
            other => NodeError::Internal(other.to_string()),
        }
    }
}

impl From<FederationError> for NodeError {
    fn from(e: FederationError) -> Self {
        match e {
            FederationError::Registry(RegistryError::NotFound(_) | RegistryError::OutOfScope { .. })
            | FederationError::NoSearchableNodes(_) => NodeError::BadRequest(e.to_string()),
            FederationError::NoResponses(_) => NodeError::Unavailable(e.to_string()),
            other => NodeError::Internal(other.to_string()),
        }
    }
}

#[async_trait]
pub trait SearchService: Send + Sync {
    async fn search(&self, request: QueryRequest) -> Result<QueryResponse, NodeError>;
}

#[async_trait]
pub trait MetadataSource: Send + Sync {
    /// Identifier the harvester keeps a cursor under.
    fn id(&self) -> &str;

    /// Records modified after `since`, at most about `limit` of them.
    async fn metadata(&self, since: Option<Timestamp>, limit: usize) -> Result<HarvestResponse, NodeError>;
}

fn checked(request: &QueryRequest) -> Result<Vec<String>, NodeError> {
    validate(request).map_err(|v| NodeError::BadRequest(v[0].to_string()))?;
    Ok(query_terms(&request.query)?)
}

fn reply(request: &QueryRequest, results: Vec<RankedResult>) -> QueryResponse {
    QueryResponse {
        version: PROTOCOL_VERSION.into(),
        request_id: request.request_id.clone(),
        results,
        child_status: Vec::new(),
        elapsed_ms: 0,
    }
}

/// A domain's crawler database. Reindexing swaps the whole index at once.
pub struct Layer3Node {
    id: String,
    index: RwLock<Arc<Layer3Index>>,
}

impl Layer3Node {
    pub fn new(index: Layer3Index) -> Self {
        Self {
            id: index.domain().class_name(),
            index: RwLock::new(Arc::new(index)),
        }
    }

    pub fn domain(&self) -> DomainName {
        self.index.read().domain().clone()
    }

    pub fn snapshot(&self) -> Arc<Layer3Index> {
        self.index.read().clone()
    }

    pub fn replace(&self, index: Layer3Index) {
        *self.index.write() = Arc::new(index);
    }
}

#[async_trait]
impl SearchService for Layer3Node {
    async fn search(&self, request: QueryRequest) -> Result<QueryResponse, NodeError> {
        let terms = checked(&request)?;
        let results = self.snapshot().search(&terms, request.max_results)?;
        Ok(reply(&request, results))
    }
}

#[async_trait]
impl MetadataSource for Layer3Node {
    fn id(&self) -> &str {
        &self.id
    }

    async fn metadata(&self, since: Option<Timestamp>, limit: usize) -> Result<HarvestResponse, NodeError> {
        Ok(page_records(self.snapshot().export_metadata(since), since, limit))
    }
}

/// A harvesting node. Queries read a store snapshot while a harvest runs.
pub struct Layer2Node {
    id: String,
    store: RwLock<Arc<Layer2Store>>,
    children: Vec<Arc<dyn MetadataSource>>,
    page_limit: usize,
    harvesting: tokio::sync::Mutex<()>,
}

impl Layer2Node {
    pub fn new(store: Layer2Store, children: Vec<Arc<dyn MetadataSource>>, page_limit: usize) -> Self {
        Self {
            id: store.domain().class_name(),
            store: RwLock::new(Arc::new(store)),
            children,
            page_limit,
            harvesting: tokio::sync::Mutex::new(()),
        }
    }

    pub fn domain(&self) -> DomainName {
        self.store.read().domain().clone()
    }

    pub fn snapshot(&self) -> Arc<Layer2Store> {
        self.store.read().clone()
    }

    pub fn children(&self) -> &[Arc<dyn MetadataSource>] {
        &self.children
    }

    /// One harvest cycle. Concurrent calls are serialized.
    pub async fn run_harvest(&self) -> Result<HarvestBatch, HarvestError> {
        let _guard = self.harvesting.lock().await;
        let cursors = self.snapshot().cursors().clone();
        let batch = harvest(&self.children, &cursors, self.page_limit).await?;
        let mut next = (*self.snapshot()).clone();
        next.apply(&batch);
        *self.store.write() = Arc::new(next);
        Ok(batch)
    }
}

#[async_trait]
impl SearchService for Layer2Node {
    async fn search(&self, request: QueryRequest) -> Result<QueryResponse, NodeError> {
        let terms = checked(&request)?;
        let results = self.snapshot().search(&terms, request.max_results)?;
        Ok(reply(&request, results))
    }
}

#[async_trait]
impl MetadataSource for Layer2Node {
    fn id(&self) -> &str {
        &self.id
    }

    async fn metadata(&self, since: Option<Timestamp>, limit: usize) -> Result<HarvestResponse, NodeError> {
        Ok(self.snapshot().export(since, limit))
    }
}

/// The root of a region tree: keeps the registry and fans queries out.
pub struct TopNode {
    domain: DomainName,
    registry: RwLock<Registry>,
    connector: Arc<dyn Connector>,
    timeout: Duration,
}

impl TopNode {
    pub fn new(domain: DomainName, registry: Registry, connector: Arc<dyn Connector>, timeout: Duration) -> Self {
        Self {
            domain,
            registry: RwLock::new(registry),
            connector,
            timeout,
        }
    }

    pub fn domain(&self) -> &DomainName {
        &self.domain
    }

    pub fn timeout(&self) -> Duration {
        self.timeout
    }

    pub fn registry(&self) -> Registry {
        self.registry.read().clone()
    }

    pub fn register(&self, desc: ServiceDescriptor) -> Result<(), RegistryError> {
        self.registry.write().register(desc)
    }
}

#[async_trait]
impl SearchService for TopNode {
    /// Searches the subtree named by the request scope, or the whole tree.
    async fn search(&self, request: QueryRequest) -> Result<QueryResponse, NodeError> {
        checked(&request)?;
        let scope = request.scope.clone().unwrap_or_else(|| self.domain.to_string());
        let registry = self.registry();
        let outcome = fanout_search(&registry, &scope, &request, self.timeout, self.connector.as_ref()).await?;
        Ok(QueryResponse {
            child_status: outcome.statuses,
            elapsed_ms: outcome.elapsed_ms,
            ..reply(&request, outcome.results)
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    /// Calls fail at once.
    Down,
    /// Calls never complete.
    Hang,
}

/// Wraps a service with a fixed delay and a switchable fault.
pub struct SimulatedLink<T: ?Sized> {
    inner: Arc<T>,
    delay: Duration,
    fault: Mutex<Option<Fault>>,
}

impl<T: ?Sized> SimulatedLink<T> {
    pub fn new(inner: Arc<T>, delay: Duration) -> Self {
        Self {
            inner,
            delay,
            fault: Mutex::new(None),
        }
    }

    pub fn inner(&self) -> &Arc<T> {
        &self.inner
    }

    pub fn set_fault(&self, fault: Option<Fault>) {
        *self.fault.lock() = fault;
    }

    async fn traverse(&self) -> Result<(), NodeError> {
        let fault = *self.fault.lock();
        match fault {
            Some(Fault::Down) => Err(NodeError::Unavailable("link is down".into())),
            Some(Fault::Hang) => std::future::pending().await,
            None => {
                if !self.delay.is_zero() {
                    tokio::time::sleep(self.delay).await;
                }
                Ok(())
            }
        }
    }
}

#[async_trait]
impl<T: SearchService + ?Sized> SearchService for SimulatedLink<T> {
    async fn search(&self, request: QueryRequest) -> Result<QueryResponse, NodeError> {
        self.traverse().await?;
        self.inner.search(request).await
    }
}

#[async_trait]
impl<T: MetadataSource + ?Sized> MetadataSource for SimulatedLink<T> {
    fn id(&self) -> &str {
        self.inner.id()
    }

    async fn metadata(&self, since: Option<Timestamp>, limit: usize) -> Result<HarvestResponse, NodeError> {
        self.traverse().await?;
        self.inner.metadata(since, limit).await
    }
}

/// Resolves descriptor endpoints to in-process services.
#[derive(Default)]
pub struct InProcessConnector {
    services: RwLock<BTreeMap<String, Arc<dyn SearchService>>>,
}

impl InProcessConnector {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&self, endpoint: impl Into<String>, service: Arc<dyn SearchService>) {
        self.services.write().insert(endpoint.into(), service);
    }

    pub fn remove(&self, endpoint: &str) -> Option<Arc<dyn SearchService>> {
        self.services.write().remove(endpoint)
    }
}

impl Connector for InProcessConnector {
    fn connect(&self, desc: &ServiceDescriptor) -> Result<Arc<dyn SearchService>, NodeError> {
        self.services
            .read()
            .get(&desc.endpoint)
            .cloned()
            .ok_or_else(|| NodeError::Unavailable(format!("nothing listens at {}", desc.endpoint)))
    }
}

/// Endpoint name used for in-process nodes.
pub fn in_process_endpoint(domain: &DomainName) -> String {
    format!("mem://{domain}")
}
