//! Wire messages spoken between nodes.
//!
//! Every message is a JSON object carrying a `"version"` string of the form
//! `MAJOR.MINOR`. Decoders accept any minor revision of a known major and
//! reject newer majors. Unknown fields are ignored. `docs/protocol.md` holds
//! the message catalog.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::federation::ServiceDescriptor;
use crate::index::{MetadataRecord, Score};
use crate::webgraph::{Timestamp, Url};

pub const PROTOCOL_VERSION: &str = "1.0";
pub const PROTOCOL_MAJOR: u32 = 1;
/// Default page size of a metadata export.
pub const HARVEST_PAGE_LIMIT: usize = 1000;

/// One ranked hit, as it travels up the hierarchy.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankedResult {
    pub url: Url,
    pub score: Score,
    /// Identifiers of the databases that contributed this hit.
    pub sources: BTreeSet<String>,
    pub title: String,
    #[serde(rename = "abstract")]
    pub summary: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryRequest {
    pub version: String,
    pub request_id: String,
    pub query: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scope: Option<String>,
    pub max_results: usize,
}

impl QueryRequest {
    pub fn new(request_id: impl Into<String>, query: Vec<String>, max_results: usize) -> Self {
        Self {
            version: PROTOCOL_VERSION.into(),
            request_id: request_id.into(),
            query,
            scope: None,
            max_results,
        }
    }

    pub fn with_scope(mut self, scope: impl Into<String>) -> Self {
        self.scope = Some(scope.into());
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChildState {
    Ok,
    Failed,
    Timeout,
}

impl fmt::Display for ChildState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ChildState::Ok => "ok",
            ChildState::Failed => "failed",
            ChildState::Timeout => "timeout",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChildStatus {
    pub node: String,
    pub status: ChildState,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryResponse {
    pub version: String,
    pub request_id: String,
    pub results: Vec<RankedResult>,
    #[serde(default)]
    pub child_status: Vec<ChildStatus>,
    pub elapsed_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HarvestResponse {
    pub version: String,
    pub records: Vec<MetadataRecord>,
    pub max_timestamp: Timestamp,
    /// The page limit was hit; re-request with `since = max_timestamp`.
    pub truncated: bool,
}

/// Reply to a triggered harvest cycle.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HarvestRunResponse {
    pub version: String,
    pub records: u64,
    pub bytes: u64,
    pub cursors: BTreeMap<String, Timestamp>,
    /// Children that failed during the cycle.
    #[serde(default)]
    pub failures: Vec<ChildStatus>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegisterRequest {
    pub version: String,
    pub descriptor: ServiceDescriptor,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegistryEntry {
    pub descriptor: ServiceDescriptor,
    /// Class names of the direct children.
    pub children: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegistryDump {
    pub version: String,
    pub nodes: Vec<RegistryEntry>,
}

/// Body of every non-2xx HTTP reply.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub version: String,
    pub code: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub field: String,
    pub message: String,
}

impl Violation {
    fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            field: field.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum DecodeError {
    #[error("field `{field}`: {message}")]
    Field { field: String, message: String },
    #[error("unsupported protocol version {0}")]
    Version(String),
    #[error("field `{}`: {}", .0[0].field, .0[0].message)]
    Invalid(Vec<Violation>),
}

impl DecodeError {
    /// The field the error is about.
    pub fn field(&self) -> &str {
        match self {
            DecodeError::Field { field, .. } => field,
            DecodeError::Version(_) => "version",
            DecodeError::Invalid(v) => &v[0].field,
        }
    }
}

fn check_version(version: &str, out: &mut Vec<Violation>) {
    match parse_version(version) {
        Some((major, _)) if major <= PROTOCOL_MAJOR => {}
        Some(_) => out.push(Violation::new("version", format!("major version of {version} is newer than {PROTOCOL_MAJOR}"))),
        None => out.push(Violation::new("version", "expected MAJOR.MINOR")),
    }
}

fn parse_version(version: &str) -> Option<(u32, u32)> {
    let (major, minor) = version.split_once('.')?;
    Some((major.parse().ok()?, minor.parse().ok()?))
}

/// Scores must not increase down the list and no url may repeat. Equal
/// scores keep the producer's order, which is url order except at layer 2.
fn check_sorted(results: &[RankedResult], out: &mut Vec<Violation>) {
    for (i, pair) in results.windows(2).enumerate() {
        let (a, b) = (&pair[0], &pair[1]);
        if a.score < b.score {
            out.push(Violation::new(
                format!("results[{}]", i + 1),
                format!(
                    "({}, {}) must not follow ({}, {}); scores are non-increasing",
                    b.url, b.score, a.url, a.score
                ),
            ));
        }
    }
    let mut seen = BTreeSet::new();
    for (i, r) in results.iter().enumerate() {
        if !seen.insert(&r.url) {
            out.push(Violation::new(format!("results[{i}].url"), format!("{} is listed twice", r.url)));
        }
        if r.sources.is_empty() {
            out.push(Violation::new(format!("results[{i}].sources"), "must not be empty"));
        }
    }
}

/// A message with a version field and checkable invariants.
pub trait Message: Serialize + DeserializeOwned {
    fn version(&self) -> &str;

    /// Every violated invariant, including the version rule.
    fn violations(&self) -> Vec<Violation>;
}

impl Message for QueryRequest {
    fn version(&self) -> &str {
        &self.version
    }

    fn violations(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        check_version(&self.version, &mut out);
        if self.query.is_empty() {
            out.push(Violation::new("query", "must contain at least one term"));
        }
        for (i, t) in self.query.iter().enumerate() {
            if t.trim().is_empty() {
                out.push(Violation::new(format!("query[{i}]"), "empty term"));
            }
        }
        if self.max_results == 0 {
            out.push(Violation::new("max_results", "must be at least 1"));
        }
        out
    }
}

impl Message for QueryResponse {
    fn version(&self) -> &str {
        &self.version
    }

    fn violations(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        check_version(&self.version, &mut out);
        check_sorted(&self.results, &mut out);
        out
    }
}

impl Message for HarvestResponse {
    fn version(&self) -> &str {
        &self.version
    }

    fn violations(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        check_version(&self.version, &mut out);
        for (i, r) in self.records.iter().enumerate() {
            if r.last_modified > self.max_timestamp {
                out.push(Violation::new(
                    format!("records[{i}].last_modified"),
                    format!("{} exceeds max_timestamp {}", r.last_modified, self.max_timestamp),
                ));
            }
        }
        out
    }
}

impl Message for HarvestRunResponse {
    fn version(&self) -> &str {
        &self.version
    }

    fn violations(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        check_version(&self.version, &mut out);
        for (i, f) in self.failures.iter().enumerate() {
            if f.status == ChildState::Ok {
                out.push(Violation::new(format!("failures[{i}].status"), "a failure cannot be ok"));
            }
        }
        out
    }
}

fn descriptor_violations(d: &ServiceDescriptor, prefix: &str, out: &mut Vec<Violation>) {
    if d.class_name != d.domain.class_name() {
        out.push(Violation::new(
            format!("{prefix}class_name"),
            format!("expected {} for {}", d.domain.class_name(), d.domain),
        ));
    }
    if d.endpoint.trim().is_empty() {
        out.push(Violation::new(format!("{prefix}endpoint"), "must not be empty"));
    }
}

impl Message for RegisterRequest {
    fn version(&self) -> &str {
        &self.version
    }

    fn violations(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        check_version(&self.version, &mut out);
        descriptor_violations(&self.descriptor, "descriptor.", &mut out);
        out
    }
}

impl Message for RegistryDump {
    fn version(&self) -> &str {
        &self.version
    }

    fn violations(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        check_version(&self.version, &mut out);
        for (i, n) in self.nodes.iter().enumerate() {
            descriptor_violations(&n.descriptor, &format!("nodes[{i}].descriptor."), &mut out);
        }
        out
    }
}

impl Message for ErrorBody {
    fn version(&self) -> &str {
        &self.version
    }

    fn violations(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        check_version(&self.version, &mut out);
        out
    }
}

/// Checks a reply against the request it answers.
pub fn validate_reply(request: &QueryRequest, response: &QueryResponse) -> Result<(), Vec<Violation>> {
    let mut out = response.violations();
    if response.request_id != request.request_id {
        out.push(Violation::new(
            "request_id",
            format!("expected {}, got {}", request.request_id, response.request_id),
        ));
    }
    if out.is_empty() {
        Ok(())
    } else {
        Err(out)
    }
}

pub fn validate<M: Message>(message: &M) -> Result<(), Vec<Violation>> {
    let v = message.violations();
    if v.is_empty() {
        Ok(())
    } else {
        Err(v)
    }
}

pub fn encode<M: Message>(message: &M) -> Vec<u8> {
    serde_json::to_vec(message).expect("protocol messages always serialize")
}

pub fn decode<M: Message>(bytes: &[u8]) -> Result<M, DecodeError> {
    let mut de = serde_json::Deserializer::from_slice(bytes);
    let message: M = serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner().to_string();
        let field = match inner.strip_prefix("missing field `").and_then(|r| r.split('`').next()) {
            Some(name) if path == "." => name.to_string(),
            Some(name) => format!("{path}.{name}"),
            None => path,
        };
        DecodeError::Field { field, message: inner }
    })?;
    if let Some((major, _)) = parse_version(message.version()) {
        if major > PROTOCOL_MAJOR {
            return Err(DecodeError::Version(message.version().to_string()));
        }
    }
    validate(&message).map_err(DecodeError::Invalid)?;
    Ok(message)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn result(url: &str, score: Score) -> RankedResult {
        RankedResult {
            url: Url::parse(url).unwrap(),
            score,
            sources: BTreeSet::from(["DRIS.cn.edu".to_string()]),
            title: String::new(),
            summary: String::new(),
        }
    }

    #[test]
    fn valid_request_round_trips() {
        let req = QueryRequest::new("r1", vec!["red".into(), "fox".into()], 10).with_scope("edu.cn");
        assert!(validate(&req).is_ok());
        assert_eq!(decode::<QueryRequest>(&encode(&req)).unwrap(), req);
    }

    #[test]
    fn empty_query_names_the_field() {
        let err = decode::<QueryRequest>(br#"{"version":"1.0","request_id":"x","query":[],"max_results":5}"#)
            .unwrap_err();
        assert_eq!(err.field(), "query");
    }

    #[test]
    fn missing_and_mistyped_fields_are_named() {
        let err = decode::<QueryRequest>(br#"{"version":"1.0","request_id":"x","max_results":5}"#).unwrap_err();
        assert_eq!(err.field(), "query");
        let err = decode::<QueryRequest>(br#"{"version":"1.0","request_id":"x","query":["a"],"max_results":"five"}"#)
            .unwrap_err();
        assert_eq!(err.field(), "max_results");
        let err = decode::<HarvestResponse>(
            br#"{"version":"1.0","records":[{"url":"http://a.cn/"}],"max_timestamp":1,"truncated":false}"#,
        )
        .unwrap_err();
        assert_eq!(err.field(), "records[0].origin_site");
    }

    #[test]
    fn unknown_fields_are_ignored() {
        let req: QueryRequest = decode(
            br#"{"version":"1.3","request_id":"x","query":["a"],"max_results":1,"lang":"zh"}"#,
        )
        .unwrap();
        assert_eq!(req.query, ["a"]);
    }

    #[test]
    fn newer_major_is_rejected() {
        let err = decode::<QueryRequest>(br#"{"version":"2.0","request_id":"x","query":["a"],"max_results":1}"#)
            .unwrap_err();
        assert_eq!(err, DecodeError::Version("2.0".into()));
    }

    #[test]
    fn all_violations_are_reported() {
        let mut req = QueryRequest::new("x", vec![], 0);
        assert_eq!(validate(&req).unwrap_err().len(), 2);
        req.query.push("a".into());
        req.max_results = 1;
        assert!(validate(&req).is_ok());
    }

    #[test]
    fn unsorted_results_name_the_pair() {
        let resp = QueryResponse {
            version: PROTOCOL_VERSION.into(),
            request_id: "x".into(),
            results: vec![result("a.cn/1", 5), result("a.cn/2", 3), result("a.cn/3", 4)],
            child_status: vec![],
            elapsed_ms: 0,
        };
        let v = validate(&resp).unwrap_err();
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].field, "results[2]");
        assert!(v[0].message.contains("http://a.cn/3"), "{}", v[0]);
        assert!(v[0].message.contains("http://a.cn/2"), "{}", v[0]);
    }

    #[test]
    fn equal_scores_may_keep_producer_order_but_urls_are_unique() {
        let mut resp = QueryResponse {
            version: PROTOCOL_VERSION.into(),
            request_id: "x".into(),
            results: vec![result("a.cn/2", 3), result("a.cn/1", 3)],
            child_status: vec![],
            elapsed_ms: 0,
        };
        assert!(validate(&resp).is_ok());
        resp.results.push(result("a.cn/2", 1));
        assert_eq!(validate(&resp).unwrap_err()[0].field, "results[2].url");
    }

    #[test]
    fn reply_must_echo_request_id() {
        let req = QueryRequest::new("abc", vec!["a".into()], 1);
        let resp = QueryResponse {
            version: PROTOCOL_VERSION.into(),
            request_id: "abd".into(),
            results: vec![],
            child_status: vec![],
            elapsed_ms: 0,
        };
        assert_eq!(validate_reply(&req, &resp).unwrap_err()[0].field, "request_id");
    }

    #[test]
    fn harvest_timestamps_bounded() {
        let body = br#"{"version":"1.0","records":[{"url":"http://a.cn/","origin_site":"a.cn","title":"","encoding":"utf-8","abstract":"","keywords":[],"last_modified":9}],"max_timestamp":5,"truncated":false}"#;
        let err = decode::<HarvestResponse>(body).unwrap_err();
        assert_eq!(err.field(), "records[0].last_modified");
    }
}
