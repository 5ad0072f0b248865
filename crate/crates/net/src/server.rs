use std::collections::HashMap;
use std::io;
use std::net::SocketAddr;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use tokio::net::TcpListener;
use tokio::task::JoinHandle;

use dris_core::harvest::HarvestError;
use dris_core::protocol::{
    decode, encode, ErrorBody, Message, QueryRequest, RegisterRequest, HARVEST_PAGE_LIMIT, PROTOCOL_VERSION,
};
use dris_core::service::{Layer2Node, Layer3Node, MetadataSource, NodeError, SearchService, TopNode};

fn status_of(e: &NodeError) -> StatusCode {
    match e {
        NodeError::BadRequest(_) => StatusCode::BAD_REQUEST,
        NodeError::Unavailable(_) => StatusCode::SERVICE_UNAVAILABLE,
        NodeError::Protocol(_) => StatusCode::BAD_GATEWAY,
        NodeError::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
    }
}

fn json<M: Message>(status: StatusCode, message: &M) -> Response {
    (status, [(header::CONTENT_TYPE, "application/json")], encode(message)).into_response()
}

fn error(e: NodeError) -> Response {
    let body = ErrorBody {
        version: PROTOCOL_VERSION.into(),
        code: e.code().into(),
        message: e.message().into(),
    };
    json(status_of(&e), &body)
}

fn reply<M: Message>(outcome: Result<M, NodeError>) -> Response {
    match outcome {
        Ok(m) => json(StatusCode::OK, &m),
        Err(e) => error(e),
    }
}

fn body<M: Message>(bytes: &[u8]) -> Result<M, NodeError> {
    decode(bytes).map_err(|e| NodeError::BadRequest(e.to_string()))
}

async fn search<S: SearchService>(State(node): State<Arc<S>>, bytes: Bytes) -> Response {
    match body::<QueryRequest>(&bytes) {
        Ok(request) => reply(node.search(request).await),
        Err(e) => error(e),
    }
}

fn number<T: std::str::FromStr>(params: &HashMap<String, String>, key: &str) -> Result<Option<T>, NodeError> {
    params
        .get(key)
        .map(|v| {
            v.parse()
                .map_err(|_| NodeError::BadRequest(format!("`{key}` must be a non-negative integer, got `{v}`")))
        })
        .transpose()
}

async fn metadata<S: MetadataSource>(
    State(node): State<Arc<S>>,
    Query(params): Query<HashMap<String, String>>,
) -> Response {
    let parsed = number(&params, "since").and_then(|since| Ok((since, number(&params, "limit")?)));
    match parsed {
        Ok((since, limit)) => reply(node.metadata(since, limit.unwrap_or(HARVEST_PAGE_LIMIT)).await),
        Err(e) => error(e),
    }
}

async fn run_harvest(State(node): State<Arc<Layer2Node>>) -> Response {
    match node.run_harvest().await {
        Ok(batch) => json(StatusCode::OK, &batch.summary()),
        Err(e @ HarvestError::AllFailed(_)) => error(NodeError::Unavailable(e.to_string())),
    }
}

async fn registry(State(node): State<Arc<TopNode>>) -> Response {
    json(StatusCode::OK, &node.registry().dump())
}

async fn register(State(node): State<Arc<TopNode>>, bytes: Bytes) -> Response {
    let request = match body::<RegisterRequest>(&bytes) {
        Ok(r) => r,
        Err(e) => return error(e),
    };
    match node.register(request.descriptor) {
        Ok(()) => json(StatusCode::OK, &node.registry().dump()),
        Err(e) => error(NodeError::BadRequest(e.to_string())),
    }
}

/// `POST /search`, `GET /metadata`.
pub fn layer3_router(node: Arc<Layer3Node>) -> Router {
    Router::new()
        .route("/search", post(search::<Layer3Node>))
        .route("/metadata", get(metadata::<Layer3Node>))
        .with_state(node)
}

/// `POST /search`, `GET /metadata`, `POST /harvest/run`.
pub fn layer2_router(node: Arc<Layer2Node>) -> Router {
    Router::new()
        .route("/search", post(search::<Layer2Node>))
        .route("/metadata", get(metadata::<Layer2Node>))
        .route("/harvest/run", post(run_harvest))
        .with_state(node)
}

/// `POST /search`, `GET /registry`, `POST /register`.
pub fn top_router(node: Arc<TopNode>) -> Router {
    Router::new()
        .route("/search", post(search::<TopNode>))
        .route("/registry", get(registry))
        .route("/register", post(register))
        .with_state(node)
}

/// A server running on the current tokio runtime.
pub struct ServerHandle {
    addr: SocketAddr,
    task: JoinHandle<()>,
}

impl ServerHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }

    /// Stops accepting connections at once.
    pub fn kill(&self) {
        self.task.abort();
    }

    /// Serves until the task ends, which only happens on I/O failure or kill.
    pub async fn wait(mut self) {
        let _ = (&mut self.task).await;
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        self.task.abort();
    }
}

pub async fn spawn(router: Router, addr: SocketAddr) -> io::Result<ServerHandle> {
    let listener = TcpListener::bind(addr).await?;
    let addr = listener.local_addr()?;
    let task = tokio::spawn(async move {
        let _ = axum::serve(listener, router).await;
    });
    Ok(ServerHandle { addr, task })
}
