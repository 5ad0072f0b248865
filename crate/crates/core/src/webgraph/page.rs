use std::collections::{BTreeMap, BTreeSet};

use ipnet::Ipv4Net;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::name::{DomainName, Host, Url};
use super::store;

/// Seconds since the epoch.
pub type Timestamp = u64;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Page {
    pub url: Url,
    pub title: String,
    /// Lowercase tokens in document order.
    pub body: Vec<String>,
    /// Normalized outbound links in document order.
    pub links: Vec<Url>,
    pub encoding: String,
    pub last_modified: Timestamp,
}

impl Page {
    pub fn host(&self) -> &Host {
        self.url.host()
    }

    /// Size of the page in the on-disk page format; this is what a fetch costs.
    pub fn serialized_len(&self) -> u64 {
        store::page_to_string(self).len() as u64
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Site {
    pub host: Host,
    pub pages: BTreeMap<Url, Page>,
}

impl Site {
    pub fn root(&self) -> Url {
        Url::root(self.host.clone())
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum CorpusError {
    #[error("page {url} does not belong to site {site}")]
    ForeignPage { site: Host, url: Url },
    #[error("host {host} registered under {domain} is not inside it")]
    MisregisteredHost { domain: DomainName, host: Host },
    #[error("host {0} is both registered and unregistered")]
    DoublyListed(Host),
    #[error("duplicate page {0}")]
    DuplicatePage(Url),
    #[error("invalid corpus config: {0}")]
    Config(String),
}

/// An immutable snapshot of every site, the DNS view of them, and the
/// address-only hosts that just a scan can find.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Corpus {
    sites: BTreeMap<Host, Site>,
    dns: BTreeMap<DomainName, BTreeSet<Host>>,
    blocks: BTreeMap<DomainName, Ipv4Net>,
    unregistered: BTreeSet<Host>,
}

impl Corpus {
    /// Groups pages into sites and checks the DNS invariants.
    pub fn new(
        pages: impl IntoIterator<Item = Page>,
        dns: BTreeMap<DomainName, BTreeSet<Host>>,
        blocks: BTreeMap<DomainName, Ipv4Net>,
        unregistered: BTreeSet<Host>,
    ) -> Result<Self, CorpusError> {
        let mut sites: BTreeMap<Host, Site> = BTreeMap::new();
        for page in pages {
            let host = page.host().clone();
            let site = sites.entry(host.clone()).or_insert_with(|| Site {
                host,
                pages: BTreeMap::new(),
            });
            if site.pages.contains_key(&page.url) {
                return Err(CorpusError::DuplicatePage(page.url));
            }
            site.pages.insert(page.url.clone(), page);
        }
        for (domain, hosts) in &dns {
            for host in hosts {
                let inside = host.domain().is_some_and(|h| h.is_under(domain));
                if !inside {
                    return Err(CorpusError::MisregisteredHost {
                        domain: domain.clone(),
                        host: host.clone(),
                    });
                }
                if unregistered.contains(host) {
                    return Err(CorpusError::DoublyListed(host.clone()));
                }
            }
        }
        Ok(Self {
            sites,
            dns,
            blocks,
            unregistered,
        })
    }

    pub fn sites(&self) -> &BTreeMap<Host, Site> {
        &self.sites
    }

    pub fn site(&self, host: &Host) -> Option<&Site> {
        self.sites.get(host)
    }

    pub fn page(&self, url: &Url) -> Option<&Page> {
        self.sites.get(url.host())?.pages.get(url)
    }

    pub fn pages(&self) -> impl Iterator<Item = &Page> {
        self.sites.values().flat_map(|s| s.pages.values())
    }

    pub fn page_count(&self) -> usize {
        self.sites.values().map(|s| s.pages.len()).sum()
    }

    /// Raw DNS table as stored: organisational domain to registered hosts.
    pub fn dns_table(&self) -> &BTreeMap<DomainName, BTreeSet<Host>> {
        &self.dns
    }

    pub fn address_blocks(&self) -> &BTreeMap<DomainName, Ipv4Net> {
        &self.blocks
    }

    pub fn unregistered(&self) -> &BTreeSet<Host> {
        &self.unregistered
    }

    /// Every registered host whose name lies under `domain`.
    pub fn dns(&self, domain: &DomainName) -> BTreeSet<Host> {
        self.dns
            .values()
            .flatten()
            .filter(|h| h.domain().is_some_and(|n| n.is_under(domain)))
            .cloned()
            .collect()
    }

    /// Organisational domains (the DNS table keys) under `scope`.
    pub fn domains_under(&self, scope: &DomainName) -> Vec<DomainName> {
        self.dns
            .keys()
            .filter(|d| d.is_under(scope))
            .cloned()
            .collect()
    }

    /// Returns a copy with `page` inserted, replacing any page at the same URL.
    pub fn with_page(&self, page: Page) -> Corpus {
        let mut next = self.clone();
        let host = page.host().clone();
        next.sites
            .entry(host.clone())
            .or_insert_with(|| Site {
                host,
                pages: BTreeMap::new(),
            })
            .pages
            .insert(page.url.clone(), page);
        next
    }

    pub fn max_timestamp(&self) -> Timestamp {
        self.pages().map(|p| p.last_modified).max().unwrap_or(0)
    }
}
