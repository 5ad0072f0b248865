//! Domain names, hosts and normalized URLs.

use std::fmt;
use std::net::Ipv4Addr;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Root namespace of the service class tree.
pub const CLASS_ROOT: &str = "DRIS";

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum NameError {
    #[error("empty domain name")]
    Empty,
    #[error("empty label at position {index} in `{name}`")]
    EmptyLabel { name: String, index: usize },
    #[error("illegal character in label `{label}`")]
    IllegalLabel { label: String },
    #[error("`{0}` is not a class name under `DRIS`")]
    NotClassName(String),
    #[error("invalid host `{0}`")]
    InvalidHost(String),
    #[error("invalid url `{url}`: {reason}")]
    InvalidUrl { url: String, reason: String },
}

/// A hierarchical dotted name, stored most-specific label first.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct DomainName {
    labels: Vec<String>,
}

fn valid_label(label: &str) -> bool {
    label
        .bytes()
        .all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'-')
}

impl DomainName {
    pub fn parse(name: &str) -> Result<Self, NameError> {
        if name.is_empty() {
            return Err(NameError::Empty);
        }
        let lowered = name.to_ascii_lowercase();
        let mut labels = Vec::new();
        for (index, label) in lowered.split('.').enumerate() {
            if label.is_empty() {
                return Err(NameError::EmptyLabel {
                    name: name.to_string(),
                    index,
                });
            }
            if !valid_label(label) {
                return Err(NameError::IllegalLabel {
                    label: label.to_string(),
                });
            }
            labels.push(label.to_string());
        }
        Ok(Self { labels })
    }

    /// Builds a name from labels given most-specific first.
    pub fn from_labels<I, S>(labels: I) -> Result<Self, NameError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let joined = labels
            .into_iter()
            .map(|l| l.as_ref().to_string())
            .collect::<Vec<_>>()
            .join(".");
        Self::parse(&joined)
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    /// Number of labels; `hust.edu.cn` is level 3.
    pub fn level(&self) -> usize {
        self.labels.len()
    }

    /// True iff `parent`'s labels are a suffix of ours. Reflexive.
    pub fn is_under(&self, parent: &DomainName) -> bool {
        self.labels.ends_with(&parent.labels)
    }

    pub fn parent(&self) -> Option<DomainName> {
        if self.labels.len() <= 1 {
            return None;
        }
        Some(Self {
            labels: self.labels[1..].to_vec(),
        })
    }

    /// Prepends a more specific label.
    pub fn child(&self, label: &str) -> Result<DomainName, NameError> {
        Self::parse(&format!("{label}.{self}"))
    }

    /// `hust.edu.cn` becomes `DRIS.cn.edu.hust`.
    pub fn class_name(&self) -> String {
        let mut out = String::from(CLASS_ROOT);
        for label in self.labels.iter().rev() {
            out.push('.');
            out.push_str(label);
        }
        out
    }

    /// `hust.edu.cn` becomes `DRIS.hust.edu.cn`, the address spelling of a service.
    pub fn service_name(&self) -> String {
        format!("{CLASS_ROOT}.{self}")
    }

    /// Inverse of [`DomainName::class_name`].
    pub fn from_class_name(class: &str) -> Result<DomainName, NameError> {
        let rest = strip_class_root(class).ok_or_else(|| NameError::NotClassName(class.into()))?;
        let reversed: Vec<&str> = rest.split('.').rev().collect();
        Self::parse(&reversed.join("."))
    }
}

/// Strips a leading `DRIS.` (case-insensitive), if present.
pub(crate) fn strip_class_root(name: &str) -> Option<&str> {
    let prefix_len = CLASS_ROOT.len() + 1;
    if name.len() > prefix_len
        && name[..CLASS_ROOT.len()].eq_ignore_ascii_case(CLASS_ROOT)
        && name.as_bytes()[CLASS_ROOT.len()] == b'.'
    {
        Some(&name[prefix_len..])
    } else {
        None
    }
}

pub fn parse_domain(name: &str) -> Result<DomainName, NameError> {
    DomainName::parse(name)
}

pub fn reverse_class_name(domain: &DomainName) -> String {
    domain.class_name()
}

pub fn is_under(child: &DomainName, parent: &DomainName) -> bool {
    child.is_under(parent)
}

impl fmt::Display for DomainName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.labels.join("."))
    }
}

impl FromStr for DomainName {
    type Err = NameError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::parse(s)
    }
}

impl TryFrom<String> for DomainName {
    type Error = NameError;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        Self::parse(&value)
    }
}

impl From<DomainName> for String {
    fn from(value: DomainName) -> Self {
        value.to_string()
    }
}

/// A site identifier: either a domain name or a raw IPv4 address.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Host(String);

impl Host {
    pub fn parse(s: &str) -> Result<Self, NameError> {
        if s.parse::<Ipv4Addr>().is_ok() {
            return Ok(Self(s.to_string()));
        }
        DomainName::parse(s)
            .map(Self::from)
            .map_err(|_| NameError::InvalidHost(s.to_string()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn domain(&self) -> Option<DomainName> {
        if self.addr().is_some() {
            return None;
        }
        DomainName::parse(&self.0).ok()
    }

    pub fn addr(&self) -> Option<Ipv4Addr> {
        self.0.parse().ok()
    }
}

impl From<DomainName> for Host {
    fn from(value: DomainName) -> Self {
        Self(value.to_string())
    }
}

impl From<Ipv4Addr> for Host {
    fn from(value: Ipv4Addr) -> Self {
        Self(value.to_string())
    }
}

impl fmt::Display for Host {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl FromStr for Host {
    type Err = NameError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::parse(s)
    }
}

impl TryFrom<String> for Host {
    type Error = NameError;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        Self::parse(&value)
    }
}

impl From<Host> for String {
    fn from(value: Host) -> Self {
        value.0
    }
}

/// Normalized page address. Equality and ordering follow the text form,
/// which is the page identity everywhere in the system.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Url {
    text: String,
    host: Host,
    path: String,
}

fn normalize_path(path: &str) -> String {
    let mut p = if path.starts_with('/') {
        path.to_string()
    } else {
        format!("/{path}")
    };
    while p.len() > 1 && p.ends_with('/') {
        p.pop();
    }
    p
}

impl Url {
    pub fn new(host: Host, path: &str) -> Self {
        let path = normalize_path(path);
        Self {
            text: format!("http://{host}{path}"),
            host,
            path,
        }
    }

    pub fn root(host: Host) -> Self {
        Self::new(host, "/")
    }

    /// Parses and normalizes: lowercase host, fragment dropped, no trailing
    /// slash except the root. A missing scheme is taken as `http`.
    pub fn parse(s: &str) -> Result<Self, NameError> {
        let invalid = |reason: &str| NameError::InvalidUrl {
            url: s.to_string(),
            reason: reason.to_string(),
        };
        let with_scheme = if s.contains("://") {
            s.to_string()
        } else {
            format!("http://{s}")
        };
        let parsed = url::Url::parse(&with_scheme).map_err(|e| invalid(&e.to_string()))?;
        if !matches!(parsed.scheme(), "http" | "https") {
            return Err(invalid("unsupported scheme"));
        }
        if parsed.port().is_some() {
            return Err(invalid("explicit ports are not supported"));
        }
        let host = parsed.host_str().ok_or_else(|| invalid("missing host"))?;
        let host = Host::parse(host).map_err(|e| invalid(&e.to_string()))?;
        let mut path = parsed.path().to_string();
        if let Some(q) = parsed.query() {
            path.push('?');
            path.push_str(q);
        }
        Ok(Self::new(host, &path))
    }

    pub fn host(&self) -> &Host {
        &self.host
    }

    pub fn path(&self) -> &str {
        &self.path
    }

    pub fn as_str(&self) -> &str {
        &self.text
    }

    pub fn is_root(&self) -> bool {
        self.path == "/"
    }
}

impl fmt::Display for Url {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.text)
    }
}

impl FromStr for Url {
    type Err = NameError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::parse(s)
    }
}

impl TryFrom<String> for Url {
    type Error = NameError;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        Self::parse(&value)
    }
}

impl From<Url> for String {
    fn from(value: Url) -> Self {
        value.text
    }
}
