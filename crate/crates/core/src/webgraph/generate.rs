//! Deterministic synthetic corpora.

use std::collections::{BTreeMap, BTreeSet};
use std::net::Ipv4Addr;

use ipnet::Ipv4Net;
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Zipf};
use serde::{Deserialize, Serialize};

use super::name::{DomainName, Host, Url};
use super::page::{Corpus, CorpusError, Page, Timestamp};

/// Generated timestamps start here.
pub const BASE_TIME: Timestamp = 1_000_000_000;
const MODIFIED_SPREAD: Timestamp = 30 * 86_400;

const REGION_LABELS: &[&str] = &["edu", "ac", "gov", "org", "net", "com", "mil", "int"];
const ORG_LABELS: &[&str] = &[
    "hust", "pku", "tsinghua", "fudan", "zju", "nju", "sjtu", "whu", "sysu", "xjtu", "ustc",
    "nankai", "tju", "sdu", "hit", "buaa",
];
const SITE_LABELS: &[&str] = &["www", "cs", "lib", "ee", "math", "news", "bbs", "phys"];
const SYLLABLES: &[&str] = &[
    "ba", "ce", "di", "fo", "gu", "ha", "ji", "ko", "lu", "ma", "ne", "pi", "qo", "ru", "sa", "te",
    "vi", "wo", "xu", "ze",
];
const ENCODINGS: &[&str] = &["utf-8", "utf-8", "utf-8", "gb2312", "iso-8859-1"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorpusConfig {
    /// Top-level label, e.g. `cn`.
    pub root: String,
    /// Second-level domains under the root.
    pub regions: usize,
    /// Organisational domains per region.
    pub domains: usize,
    pub sites_per_domain: usize,
    pub pages_per_site: usize,
    pub vocabulary_size: usize,
    pub cross_site_link_prob: f64,
    pub unregistered_fraction: f64,
    /// Extra link slots per page on top of the spanning-tree links.
    pub links_per_page: usize,
    pub title_tokens: (usize, usize),
    pub body_tokens: (usize, usize),
    pub zipf_exponent: f64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            root: "cn".into(),
            regions: 1,
            domains: 2,
            sites_per_domain: 2,
            pages_per_site: 3,
            vocabulary_size: 200,
            cross_site_link_prob: 0.2,
            unregistered_fraction: 0.0,
            links_per_page: 3,
            title_tokens: (2, 4),
            body_tokens: (20, 60),
            zipf_exponent: 1.1,
        }
    }
}

impl CorpusConfig {
    pub fn total_sites(&self) -> usize {
        self.regions * self.domains * self.sites_per_domain
    }

    pub fn total_pages(&self) -> usize {
        self.total_sites() * self.pages_per_site
    }

    fn validate(&self) -> Result<(), CorpusError> {
        let zero = [
            ("regions", self.regions),
            ("domains", self.domains),
            ("sites_per_domain", self.sites_per_domain),
            ("pages_per_site", self.pages_per_site),
            ("vocabulary_size", self.vocabulary_size),
            ("title_tokens.max", self.title_tokens.1),
        ];
        if let Some((name, _)) = zero.iter().find(|(_, v)| *v == 0) {
            return Err(CorpusError::Config(format!("{name} must be positive")));
        }
        if self.title_tokens.0 > self.title_tokens.1 || self.body_tokens.0 > self.body_tokens.1 {
            return Err(CorpusError::Config("token ranges must satisfy min <= max".into()));
        }
        for (name, p) in [
            ("cross_site_link_prob", self.cross_site_link_prob),
            ("unregistered_fraction", self.unregistered_fraction),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(CorpusError::Config(format!("{name} must lie in [0, 1]")));
            }
        }
        if self.zipf_exponent < 0.0 || !self.zipf_exponent.is_finite() {
            return Err(CorpusError::Config("zipf_exponent must be finite and >= 0".into()));
        }
        if self.regions * self.domains > 256 * 256 || self.sites_per_domain > 254 {
            return Err(CorpusError::Config("too many domains or sites for the address plan".into()));
        }
        DomainName::parse(&self.root).map_err(|e| CorpusError::Config(e.to_string()))?;
        Ok(())
    }
}

fn pick_label(table: &[&str], i: usize, fallback: char) -> String {
    table
        .get(i)
        .map(|s| s.to_string())
        .unwrap_or_else(|| format!("{fallback}{i}"))
}

/// Vocabulary word `i`, spelled as base-20 syllables; distinct for distinct `i`.
pub fn vocabulary_word(i: usize) -> String {
    let base = SYLLABLES.len();
    let mut n = i + base;
    let mut digits = Vec::new();
    while n > 0 {
        digits.push(SYLLABLES[n % base]);
        n /= base;
    }
    digits.reverse();
    digits.concat()
}

fn capitalize(word: &str) -> String {
    let mut chars = word.chars();
    match chars.next() {
        Some(c) => c.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}

struct PlannedSite {
    domain: DomainName,
    host: Host,
    registered: bool,
}

/// Builds a corpus that is a pure function of `(config, seed)`.
pub fn generate_corpus(config: &CorpusConfig, seed: u64) -> Result<Corpus, CorpusError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let root = DomainName::parse(&config.root).map_err(|e| CorpusError::Config(e.to_string()))?;

    let mut domains = Vec::new();
    for r in 0..config.regions {
        let region = root
            .child(&pick_label(REGION_LABELS, r, 'r'))
            .map_err(|e| CorpusError::Config(e.to_string()))?;
        for k in 0..config.domains {
            let org = region
                .child(&pick_label(ORG_LABELS, k, 'u'))
                .map_err(|e| CorpusError::Config(e.to_string()))?;
            domains.push(org);
        }
    }

    let mut blocks = BTreeMap::new();
    for (i, domain) in domains.iter().enumerate() {
        let net = Ipv4Addr::new(10, (i / 256) as u8, (i % 256) as u8, 0);
        blocks.insert(domain.clone(), Ipv4Net::new(net, 24).expect("prefix 24 is valid"));
    }

    let total_sites = config.total_sites();
    let hidden = (config.unregistered_fraction * total_sites as f64).round() as usize;
    let hidden: BTreeSet<usize> = index::sample(&mut rng, total_sites, hidden.min(total_sites))
        .into_iter()
        .collect();

    let mut planned = Vec::with_capacity(total_sites);
    for domain in &domains {
        for j in 0..config.sites_per_domain {
            let n = planned.len();
            let registered = !hidden.contains(&n);
            let host = if registered {
                Host::from(
                    domain
                        .child(&pick_label(SITE_LABELS, j, 's'))
                        .map_err(|e| CorpusError::Config(e.to_string()))?,
                )
            } else {
                let base = blocks[domain].network().octets();
                Host::from(Ipv4Addr::new(base[0], base[1], base[2], (j + 1) as u8))
            };
            planned.push(PlannedSite {
                domain: domain.clone(),
                host,
                registered,
            });
        }
    }

    let page_url = |site: usize, page: usize| -> Url {
        let host = planned[site].host.clone();
        if page == 0 {
            Url::root(host)
        } else {
            Url::new(host, &format!("/p{page}"))
        }
    };

    let words: Vec<String> = (0..config.vocabulary_size).map(vocabulary_word).collect();
    let zipf = Zipf::new(config.vocabulary_size as f64, config.zipf_exponent)
        .map_err(|e| CorpusError::Config(e.to_string()))?;
    let draw_word = |rng: &mut ChaCha8Rng| -> String {
        let rank = zipf.sample(rng) as usize;
        words[rank.clamp(1, words.len()) - 1].clone()
    };

    let mut pages = Vec::with_capacity(config.total_pages());
    for site in 0..planned.len() {
        let n = config.pages_per_site;
        // Spanning tree rooted at page 0 keeps every page reachable.
        let mut children: Vec<Vec<usize>> = vec![Vec::new(); n];
        for p in 1..n {
            let parent = rng.random_range(0..p);
            children[parent].push(p);
        }
        for (p, kids) in children.iter().enumerate() {
            let mut links: Vec<Url> = kids.iter().map(|&c| page_url(site, c)).collect();
            for _ in 0..config.links_per_page {
                let external = rng.random_bool(config.cross_site_link_prob) && planned.len() > 1;
                if external {
                    let mut other = rng.random_range(0..planned.len() - 1);
                    if other >= site {
                        other += 1;
                    }
                    links.push(page_url(other, rng.random_range(0..n)));
                } else {
                    links.push(page_url(site, rng.random_range(0..n)));
                }
            }
            let title_len = rng.random_range(config.title_tokens.0..=config.title_tokens.1);
            let title = (0..title_len)
                .map(|_| capitalize(&draw_word(&mut rng)))
                .collect::<Vec<_>>()
                .join(" ");
            let body_len = rng.random_range(config.body_tokens.0..=config.body_tokens.1);
            let body = (0..body_len).map(|_| draw_word(&mut rng)).collect();
            let encoding = ENCODINGS[rng.random_range(0..ENCODINGS.len())].to_string();
            let last_modified = BASE_TIME + rng.random_range(0..MODIFIED_SPREAD);
            pages.push(Page {
                url: page_url(site, p),
                title,
                body,
                links,
                encoding,
                last_modified,
            });
        }
    }

    let mut dns: BTreeMap<DomainName, BTreeSet<Host>> =
        domains.iter().map(|d| (d.clone(), BTreeSet::new())).collect();
    let mut unregistered = BTreeSet::new();
    for site in planned {
        if site.registered {
            dns.get_mut(&site.domain).expect("domain planned").insert(site.host);
        } else {
            unregistered.insert(site.host);
        }
    }
    Corpus::new(pages, dns, blocks, unregistered)
}
