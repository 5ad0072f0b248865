//! Site-scoped crawling.
//!
//! A crawl starts at a site's root and follows same-host links breadth-first.
//! An off-site link is fetched once per occurrence and recorded, but the
//! fetched page's own links are never followed.

use std::collections::{BTreeSet, HashSet, VecDeque};

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::webgraph::{Corpus, DomainName, Host, Page, Url};

/// Resolves a normalized URL to a page.
pub trait Fetcher: Sync {
    fn fetch(&self, url: &Url) -> Option<&Page>;
}

impl Fetcher for Corpus {
    fn fetch(&self, url: &Url) -> Option<&Page> {
        self.page(url)
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum CrawlError {
    #[error("root page of {0} is unreachable")]
    UnreachableRoot(Host),
}

/// A page fetched through an off-site link.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExternalFetch {
    pub url: Url,
    pub page: Page,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CrawlResult {
    pub origin_site: Host,
    /// In breadth-first visiting order.
    pub own_pages: Vec<Page>,
    /// One entry per off-site link occurrence, in discovery order.
    pub external_pages: Vec<ExternalFetch>,
    pub fetch_count: u64,
    pub bytes_fetched: u64,
    pub dead_links: u64,
}

/// One line of the crawl manifest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ManifestEntry<'a> {
    pub origin: &'a Host,
    pub url: &'a Url,
    pub external: bool,
    pub bytes: u64,
}

impl CrawlResult {
    pub fn manifest(&self) -> impl Iterator<Item = ManifestEntry<'_>> {
        let own = self.own_pages.iter().map(move |p| ManifestEntry {
            origin: &self.origin_site,
            url: &p.url,
            external: false,
            bytes: p.serialized_len(),
        });
        let ext = self.external_pages.iter().map(move |e| ManifestEntry {
            origin: &self.origin_site,
            url: &e.url,
            external: true,
            bytes: e.page.serialized_len(),
        });
        own.chain(ext)
    }
}

pub fn crawl_site(site: &Host, fetcher: &impl Fetcher) -> Result<CrawlResult, CrawlError> {
    let root = Url::root(site.clone());
    if fetcher.fetch(&root).is_none() {
        return Err(CrawlError::UnreachableRoot(site.clone()));
    }

    let mut result = CrawlResult {
        origin_site: site.clone(),
        own_pages: Vec::new(),
        external_pages: Vec::new(),
        fetch_count: 0,
        bytes_fetched: 0,
        dead_links: 0,
    };
    let mut visited: HashSet<Url> = HashSet::from([root.clone()]);
    let mut frontier = VecDeque::from([root]);

    while let Some(url) = frontier.pop_front() {
        let Some(page) = fetcher.fetch(&url) else {
            result.dead_links += 1;
            continue;
        };
        result.fetch_count += 1;
        result.bytes_fetched += page.serialized_len();
        for link in &page.links {
            if link.host() == site {
                if visited.insert(link.clone()) {
                    frontier.push_back(link.clone());
                }
            } else {
                match fetcher.fetch(link) {
                    Some(target) => {
                        result.fetch_count += 1;
                        result.bytes_fetched += target.serialized_len();
                        result.external_pages.push(ExternalFetch {
                            url: link.clone(),
                            page: target.clone(),
                        });
                    }
                    None => result.dead_links += 1,
                }
            }
        }
        result.own_pages.push(page.clone());
    }
    Ok(result)
}

/// Crawls the given hosts concurrently; results come back in host order.
pub fn crawl_hosts(
    hosts: &BTreeSet<Host>,
    fetcher: &impl Fetcher,
) -> Result<Vec<CrawlResult>, CrawlError> {
    let hosts: Vec<&Host> = hosts.iter().collect();
    hosts.into_par_iter().map(|h| crawl_site(h, fetcher)).collect()
}

/// Crawls every host the DNS lists under `domain`.
pub fn crawl_domain(domain: &DomainName, corpus: &Corpus) -> Result<Vec<CrawlResult>, CrawlError> {
    crawl_hosts(&corpus.dns(domain), corpus)
}

/// Registered hosts under `domain` plus unregistered hosts found by scanning
/// the address blocks of every domain under it.
pub fn scan_addresses(corpus: &Corpus, domain: &DomainName) -> BTreeSet<Host> {
    let mut hosts = corpus.dns(domain);
    let blocks: Vec<_> = corpus
        .address_blocks()
        .iter()
        .filter(|(d, _)| d.is_under(domain))
        .map(|(_, b)| *b)
        .collect();
    for host in corpus.unregistered() {
        let in_block = host.addr().is_some_and(|a| blocks.iter().any(|b| b.contains(&a)));
        let named_under = host.domain().is_some_and(|n| n.is_under(domain));
        if in_block || named_under {
            hosts.insert(host.clone());
        }
    }
    hosts
}

/// Crawls every host the address scan finds under `domain`.
pub fn crawl_domain_scanned(
    domain: &DomainName,
    corpus: &Corpus,
) -> Result<Vec<CrawlResult>, CrawlError> {
    crawl_hosts(&scan_addresses(corpus, domain), corpus)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::webgraph::{generate_corpus, CorpusConfig};
    use std::collections::BTreeMap;

    fn url(s: &str) -> Url {
        Url::parse(s).unwrap()
    }

    fn page(u: &str, links: &[&str]) -> Page {
        Page {
            url: url(u),
            title: String::new(),
            body: vec!["x".into()],
            links: links.iter().map(|l| url(l)).collect(),
            encoding: "utf-8".into(),
            last_modified: 1,
        }
    }

    fn corpus(pages: Vec<Page>) -> Corpus {
        Corpus::new(pages, BTreeMap::new(), BTreeMap::new(), BTreeSet::new()).unwrap()
    }

    fn host(s: &str) -> Host {
        Host::parse(s).unwrap()
    }

    #[test]
    fn closed_site() {
        let c = corpus(vec![
            page("a.cn/", &["a.cn/1", "a.cn/2"]),
            page("a.cn/1", &["a.cn/"]),
            page("a.cn/2", &["a.cn/1"]),
        ]);
        let r = crawl_site(&host("a.cn"), &c).unwrap();
        assert_eq!(r.own_pages.len(), 3);
        assert!(r.external_pages.is_empty());
        assert_eq!(r.fetch_count, 3);
        let order: Vec<&str> = r.own_pages.iter().map(|p| p.url.path()).collect();
        assert_eq!(order, ["/", "/1", "/2"]);
    }

    #[test]
    fn external_targets_recorded_per_occurrence() {
        let c = corpus(vec![
            page("a.cn/", &["a.cn/1", "b.cn/p"]),
            page("a.cn/1", &["b.cn/p"]),
            page("b.cn/", &[]),
            page("b.cn/p", &["b.cn/", "c.cn/"]),
            page("c.cn/", &[]),
        ]);
        let r = crawl_site(&host("a.cn"), &c).unwrap();
        assert_eq!(r.own_pages.len(), 2);
        let ext: Vec<&str> = r.external_pages.iter().map(|e| e.url.as_str()).collect();
        assert_eq!(ext, ["http://b.cn/p", "http://b.cn/p"]);
        assert_eq!(r.fetch_count, 4);
        let expected_bytes: u64 = ["a.cn/", "a.cn/1", "b.cn/p", "b.cn/p"]
            .iter()
            .map(|u| c.page(&url(u)).unwrap().serialized_len())
            .sum();
        assert_eq!(r.bytes_fetched, expected_bytes);
    }

    #[test]
    fn dangling_links_are_tallied() {
        let c = corpus(vec![page("a.cn/", &["a.cn/missing", "z.cn/gone", "a.cn/1"]), page("a.cn/1", &[])]);
        let r = crawl_site(&host("a.cn"), &c).unwrap();
        assert_eq!(r.dead_links, 2);
        assert_eq!(r.own_pages.len(), 2);
    }

    #[test]
    fn missing_root_is_an_error() {
        let c = corpus(vec![page("a.cn/1", &[])]);
        assert_eq!(
            crawl_site(&host("a.cn"), &c),
            Err(CrawlError::UnreachableRoot(host("a.cn")))
        );
    }

    #[test]
    fn domain_crawl_is_sorted_by_host() {
        let pages = vec![page("b.x.cn/", &[]), page("a.x.cn/", &[])];
        let dns = BTreeMap::from([(
            DomainName::parse("x.cn").unwrap(),
            BTreeSet::from([host("b.x.cn"), host("a.x.cn")]),
        )]);
        let c = Corpus::new(pages, dns, BTreeMap::new(), BTreeSet::new()).unwrap();
        let r = crawl_domain(&DomainName::parse("x.cn").unwrap(), &c).unwrap();
        let hosts: Vec<&str> = r.iter().map(|r| r.origin_site.as_str()).collect();
        assert_eq!(hosts, ["a.x.cn", "b.x.cn"]);
        assert!(crawl_domain(&DomainName::parse("y.cn").unwrap(), &c).unwrap().is_empty());
    }

    #[test]
    fn generated_domain_page_total() {
        let cfg = CorpusConfig {
            domains: 1,
            sites_per_domain: 2,
            pages_per_site: 3,
            cross_site_link_prob: 0.0,
            ..CorpusConfig::default()
        };
        let c = generate_corpus(&cfg, 5).unwrap();
        let d = DomainName::parse("hust.edu.cn").unwrap();
        let results = crawl_domain(&d, &c).unwrap();
        assert_eq!(results.len(), 2);
        assert_eq!(results.iter().map(|r| r.own_pages.len()).sum::<usize>(), 6);
    }

    #[test]
    fn scan_finds_unregistered_hosts() {
        let cfg = CorpusConfig {
            domains: 2,
            sites_per_domain: 2,
            unregistered_fraction: 0.25,
            ..CorpusConfig::default()
        };
        let c = generate_corpus(&cfg, 9).unwrap();
        assert_eq!(c.unregistered().len(), 1);
        let hidden = c.unregistered().iter().next().unwrap().clone();
        let mut covered = BTreeSet::new();
        for d in c.dns_table().keys() {
            let scanned = scan_addresses(&c, d);
            let registered = c.dns(d);
            assert!(scanned.is_superset(&registered));
            let extra: Vec<_> = scanned.difference(&registered).collect();
            assert!(extra.is_empty() || extra == [&hidden]);
            covered.extend(scanned);
        }
        let all: BTreeSet<Host> = c.sites().keys().cloned().collect();
        assert_eq!(covered, all);
    }

    #[test]
    fn scan_is_identity_without_unregistered_hosts() {
        let c = generate_corpus(&CorpusConfig::default(), 2).unwrap();
        for d in c.dns_table().keys() {
            assert_eq!(scan_addresses(&c, d), c.dns(d));
        }
    }

    #[test]
    fn crawling_is_idempotent_and_frontier_stays_on_site() {
        let cfg = CorpusConfig {
            pages_per_site: 15,
            cross_site_link_prob: 0.5,
            ..CorpusConfig::default()
        };
        let c = generate_corpus(&cfg, 21).unwrap();
        for host in c.sites().keys() {
            let a = crawl_site(host, &c).unwrap();
            assert_eq!(a, crawl_site(host, &c).unwrap());
            assert!(a.own_pages.iter().all(|p| p.host() == host));
            assert!(a.external_pages.iter().all(|e| e.url.host() != host));
            assert_eq!(a.fetch_count as usize, a.own_pages.len() + a.external_pages.len());
        }
    }
}
