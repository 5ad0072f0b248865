//! The class-tree registry, score-sum merging and query fan-out of the top layer.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;
use std::time::Duration;

use futures::future::join_all;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tokio::time::Instant;

use crate::index::Score;
use crate::protocol::{
    validate_reply, ChildState, ChildStatus, QueryRequest, RankedResult, RegistryDump, RegistryEntry,
    PROTOCOL_VERSION,
};
use crate::service::{NodeError, SearchService};
use crate::webgraph::{strip_class_root, DomainName, Url};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    Layer3,
    Layer2,
    Top,
}

impl NodeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            NodeKind::Layer3 => "layer3",
            NodeKind::Layer2 => "layer2",
            NodeKind::Top => "top",
        }
    }
}

impl fmt::Display for NodeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for NodeKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "layer3" | "3" => Ok(NodeKind::Layer3),
            "layer2" | "2" => Ok(NodeKind::Layer2),
            "top" => Ok(NodeKind::Top),
            other => Err(format!("unknown node kind `{other}`")),
        }
    }
}

/// A search service registered in the class tree.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ServiceDescriptor {
    pub domain: DomainName,
    pub class_name: String,
    pub endpoint: String,
    pub kind: NodeKind,
}

impl ServiceDescriptor {
    pub fn new(domain: DomainName, endpoint: impl Into<String>, kind: NodeKind) -> Self {
        Self {
            class_name: domain.class_name(),
            domain,
            endpoint: endpoint.into(),
            kind,
        }
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum RegistryError {
    #[error("{0} is already registered")]
    Duplicate(String),
    #[error("class name {got} does not match domain (expected {expected})")]
    ClassMismatch { expected: String, got: String },
    #[error("no service named {0}")]
    NotFound(String),
    #[error("{name} is not under {scope}")]
    OutOfScope { name: String, scope: String },
    #[error("registry table line {line}: {message}")]
    Table { line: usize, message: String },
}

/// Every registered node, keyed by class name so that iteration visits
/// ancestors before descendants. A node's children are the registered
/// descendants with no registered node in between.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Registry {
    nodes: BTreeMap<String, ServiceDescriptor>,
}

impl Registry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> impl Iterator<Item = &ServiceDescriptor> {
        self.nodes.values()
    }

    pub fn register(&mut self, desc: ServiceDescriptor) -> Result<(), RegistryError> {
        let expected = desc.domain.class_name();
        if desc.class_name != expected {
            return Err(RegistryError::ClassMismatch {
                expected,
                got: desc.class_name,
            });
        }
        if self.nodes.contains_key(&desc.class_name) {
            return Err(RegistryError::Duplicate(desc.class_name));
        }
        self.nodes.insert(desc.class_name.clone(), desc);
        Ok(())
    }

    /// Consuming form of [`Registry::register`].
    pub fn register_child(mut self, desc: ServiceDescriptor) -> Result<Registry, RegistryError> {
        self.register(desc)?;
        Ok(self)
    }

    pub fn get(&self, domain: &DomainName) -> Option<&ServiceDescriptor> {
        self.nodes.get(&domain.class_name())
    }

    /// Accepts a plain domain (`hust.edu.cn`), the service spelling
    /// (`DRIS.hust.edu.cn`) or the class spelling (`DRIS.cn.edu.hust`).
    pub fn resolve(&self, name: &str) -> Result<&ServiceDescriptor, RegistryError> {
        let not_found = || RegistryError::NotFound(name.to_string());
        if let Some(rest) = strip_class_root(name) {
            let class = format!("DRIS.{rest}");
            if let Ok(d) = DomainName::from_class_name(&class) {
                if let Some(desc) = self.get(&d) {
                    return Ok(desc);
                }
            }
            return DomainName::parse(rest)
                .ok()
                .and_then(|d| self.get(&d))
                .ok_or_else(not_found);
        }
        DomainName::parse(name)
            .ok()
            .and_then(|d| self.get(&d))
            .ok_or_else(not_found)
    }

    /// Resolves `name` through an ancestor node: the target must lie in its subtree.
    pub fn resolve_from(&self, ancestor: &str, name: &str) -> Result<&ServiceDescriptor, RegistryError> {
        let root = self.resolve(ancestor)?;
        let target = self.resolve(name)?;
        if !target.domain.is_under(&root.domain) {
            return Err(RegistryError::OutOfScope {
                name: name.to_string(),
                scope: root.class_name.clone(),
            });
        }
        Ok(target)
    }

    /// Nearest registered proper ancestor.
    pub fn parent_of(&self, domain: &DomainName) -> Option<&ServiceDescriptor> {
        let mut cur = domain.parent();
        while let Some(d) = cur {
            if let Some(desc) = self.get(&d) {
                return Some(desc);
            }
            cur = d.parent();
        }
        None
    }

    /// Registered nodes strictly below `domain`, in class-name order.
    pub fn descendants(&self, domain: &DomainName) -> Vec<&ServiceDescriptor> {
        self.nodes
            .values()
            .filter(|d| d.domain != *domain && d.domain.is_under(domain))
            .collect()
    }

    pub fn children(&self, domain: &DomainName) -> Vec<&ServiceDescriptor> {
        self.descendants(domain)
            .into_iter()
            .filter(|d| self.parent_of(&d.domain).map(|p| &p.domain) == Some(domain))
            .collect()
    }

    pub fn dump(&self) -> RegistryDump {
        RegistryDump {
            version: PROTOCOL_VERSION.into(),
            nodes: self
                .nodes
                .values()
                .map(|d| RegistryEntry {
                    descriptor: d.clone(),
                    children: self.children(&d.domain).iter().map(|c| c.class_name.clone()).collect(),
                })
                .collect(),
        }
    }

    /// One `class_name<TAB>endpoint<TAB>kind` line per node, in class-name order.
    pub fn to_table(&self) -> String {
        self.nodes
            .values()
            .map(|d| format!("{}\t{}\t{}\n", d.class_name, d.endpoint, d.kind))
            .collect()
    }

    pub fn from_table(text: &str) -> Result<Registry, RegistryError> {
        let mut reg = Registry::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim_end();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |message: String| RegistryError::Table { line: n + 1, message };
            let cols: Vec<&str> = line.split('\t').collect();
            let [class, endpoint, kind] = cols[..] else {
                return Err(err("expected 3 tab-separated columns".into()));
            };
            let domain = DomainName::from_class_name(class).map_err(|e| err(e.to_string()))?;
            let kind = kind.parse().map_err(err)?;
            reg.register(ServiceDescriptor {
                domain,
                class_name: class.to_string(),
                endpoint: endpoint.to_string(),
                kind,
            })?;
        }
        Ok(reg)
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum MergeError {
    #[error("database {database} lists {url} more than once")]
    DuplicateUrl { database: String, url: Url },
    #[error("database {0} appears more than once")]
    DuplicateDatabase(String),
}

/// Sums each page's scores across databases. Title and abstract come from
/// the database that scored the page highest (ties: smallest id). Output is
/// ordered by score descending, then url ascending.
pub fn merge_results(lists: &[(String, Vec<RankedResult>)]) -> Result<Vec<RankedResult>, MergeError> {
    struct Acc<'a> {
        score: Score,
        sources: BTreeSet<String>,
        best: (Score, &'a str, &'a RankedResult),
    }

    let mut seen_db = BTreeSet::new();
    let mut merged: BTreeMap<&Url, Acc> = BTreeMap::new();
    for (db, results) in lists {
        if !seen_db.insert(db.as_str()) {
            return Err(MergeError::DuplicateDatabase(db.clone()));
        }
        let mut seen_url = BTreeSet::new();
        for r in results {
            if !seen_url.insert(&r.url) {
                return Err(MergeError::DuplicateUrl {
                    database: db.clone(),
                    url: r.url.clone(),
                });
            }
            let acc = merged.entry(&r.url).or_insert_with(|| Acc {
                score: 0,
                sources: BTreeSet::new(),
                best: (r.score, db, r),
            });
            acc.score += r.score;
            acc.sources.insert(db.clone());
            let (best_score, best_db, _) = acc.best;
            if r.score > best_score || (r.score == best_score && db.as_str() < best_db) {
                acc.best = (r.score, db, r);
            }
        }
    }
    let mut out: Vec<RankedResult> = merged
        .into_iter()
        .map(|(url, acc)| RankedResult {
            url: url.clone(),
            score: acc.score,
            sources: acc.sources,
            title: acc.best.2.title.clone(),
            summary: acc.best.2.summary.clone(),
        })
        .collect();
    out.sort_by(|a, b| b.score.cmp(&a.score).then_with(|| a.url.cmp(&b.url)));
    Ok(out)
}

/// Turns a registered descriptor into something that can be searched.
pub trait Connector: Send + Sync {
    fn connect(&self, desc: &ServiceDescriptor) -> Result<Arc<dyn SearchService>, NodeError>;
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum FederationError {
    #[error(transparent)]
    Registry(#[from] RegistryError),
    #[error("no searchable node under {0}")]
    NoSearchableNodes(String),
    #[error("no child answered ({})", describe(.0))]
    NoResponses(Vec<ChildStatus>),
    #[error(transparent)]
    Merge(#[from] MergeError),
}

fn describe(statuses: &[ChildStatus]) -> String {
    statuses
        .iter()
        .map(|s| format!("{}: {}", s.node, s.status))
        .collect::<Vec<_>>()
        .join(", ")
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FanoutOutcome {
    pub results: Vec<RankedResult>,
    /// One entry per dispatched child, in class-name order.
    pub statuses: Vec<ChildStatus>,
    pub elapsed_ms: u64,
}

/// The nodes a query under `scope` is sent to: layer-2 nodes in the scope's
/// subtree (the scope itself included), or its layer-3 nodes if it has no
/// layer-2 node.
pub fn fanout_targets<'a>(
    registry: &'a Registry,
    scope: &str,
) -> Result<Vec<&'a ServiceDescriptor>, FederationError> {
    let root = registry.resolve(scope)?;
    let subtree: Vec<&ServiceDescriptor> = std::iter::once(root)
        .chain(registry.descendants(&root.domain))
        .collect();
    for kind in [NodeKind::Layer2, NodeKind::Layer3] {
        let mut targets: Vec<_> = subtree.iter().copied().filter(|d| d.kind == kind).collect();
        if !targets.is_empty() {
            targets.sort_by(|a, b| a.class_name.cmp(&b.class_name));
            return Ok(targets);
        }
    }
    Err(FederationError::NoSearchableNodes(root.class_name.clone()))
}

/// Sends `request` to every target under `scope` concurrently and merges the
/// answers that arrive within `timeout`. Children that fail or time out are
/// reported in the outcome's statuses.
pub async fn fanout_search(
    registry: &Registry,
    scope: &str,
    request: &QueryRequest,
    timeout: Duration,
    connector: &dyn Connector,
) -> Result<FanoutOutcome, FederationError> {
    let targets = fanout_targets(registry, scope)?;
    let started = Instant::now();
    let calls = targets.iter().map(|desc| {
        let child_request = QueryRequest {
            request_id: format!("{}/{}", request.request_id, desc.class_name),
            scope: Some(desc.domain.to_string()),
            ..request.clone()
        };
        async move {
            let service = match connector.connect(desc) {
                Ok(s) => s,
                Err(e) => return (desc, Err((ChildState::Failed, e.to_string()))),
            };
            let outcome = match tokio::time::timeout(timeout, service.search(child_request.clone())).await {
                Err(_) => Err((ChildState::Timeout, format!("no answer within {} ms", timeout.as_millis()))),
                Ok(Err(e)) => Err((ChildState::Failed, e.to_string())),
                Ok(Ok(resp)) => match validate_reply(&child_request, &resp) {
                    Ok(()) => Ok(resp.results),
                    Err(v) => Err((ChildState::Failed, format!("invalid reply: {}", v[0]))),
                },
            };
            (desc, outcome)
        }
    });
    let answers = join_all(calls).await;
    let elapsed_ms = started.elapsed().as_millis() as u64;

    let mut statuses = Vec::with_capacity(answers.len());
    let mut lists = Vec::new();
    for (desc, outcome) in answers {
        match outcome {
            Ok(results) => {
                statuses.push(ChildStatus {
                    node: desc.class_name.clone(),
                    status: ChildState::Ok,
                    detail: None,
                });
                lists.push((desc.class_name.clone(), results));
            }
            Err((status, detail)) => statuses.push(ChildStatus {
                node: desc.class_name.clone(),
                status,
                detail: Some(detail),
            }),
        }
    }
    if lists.is_empty() {
        return Err(FederationError::NoResponses(statuses));
    }
    let mut results = merge_results(&lists)?;
    results.truncate(request.max_results);
    Ok(FanoutOutcome {
        results,
        statuses,
        elapsed_ms,
    })
}
