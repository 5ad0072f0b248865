//! Layer-3 indexing: tokenization, position-weighted keyword scores,
//! metadata records, and the keyword-ranked inverted index of one domain.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::protocol::RankedResult;
use crate::spider::CrawlResult;
use crate::webgraph::{DomainName, Host, Page, Timestamp, Url};

pub type Score = u64;

/// Weight of an occurrence in the title.
pub const TITLE_WEIGHT: Score = 5;
/// Weight of an occurrence in the first half of the body.
pub const FRONT_WEIGHT: Score = 2;
/// Weight of an occurrence in the second half of the body.
pub const BACK_WEIGHT: Score = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct IndexConfig {
    pub abstract_token_limit: usize,
    pub keywords_per_page: usize,
    pub max_results: usize,
}

impl Default for IndexConfig {
    fn default() -> Self {
        Self {
            abstract_token_limit: 30,
            keywords_per_page: 50,
            max_results: 100,
        }
    }
}

#[derive(Debug, Error)]
pub enum IndexError {
    #[error("duplicate page {0}")]
    DuplicateUrl(Url),
    #[error("page {url} lies outside {domain}")]
    OutsideDomain { url: Url, domain: DomainName },
    #[error("query has no terms")]
    EmptyQuery,
    #[error("index file line {line}: {message}")]
    Format { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Lowercases and splits on runs of non-alphanumeric characters.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Normalizes query terms and drops repeats, keeping first occurrences.
pub fn query_terms<S: AsRef<str>>(query: &[S]) -> Result<Vec<String>, IndexError> {
    let mut seen = BTreeSet::new();
    let terms: Vec<String> = query
        .iter()
        .flat_map(|q| tokenize(q.as_ref()))
        .filter(|t| seen.insert(t.clone()))
        .collect();
    if terms.is_empty() {
        return Err(IndexError::EmptyQuery);
    }
    Ok(terms)
}

/// Number of body positions counted as the front half: `ceil(len / 2)`.
fn front_len(body_len: usize) -> usize {
    body_len.div_ceil(2)
}

/// `5 * title + 2 * front-half + 1 * back-half` occurrences of `term`.
pub fn keyword_score(page: &Page, term: &str) -> Score {
    let title = tokenize(&page.title).iter().filter(|t| *t == term).count() as Score;
    let front = front_len(page.body.len());
    let (mut in_front, mut in_back) = (0, 0);
    for (i, token) in page.body.iter().enumerate() {
        if token == term {
            if i < front {
                in_front += 1;
            } else {
                in_back += 1;
            }
        }
    }
    TITLE_WEIGHT * title + FRONT_WEIGHT * in_front + BACK_WEIGHT * in_back
}

/// Scores of every term present in the page, in one pass.
pub fn all_keyword_scores(page: &Page) -> HashMap<String, Score> {
    let mut scores: HashMap<String, Score> = HashMap::new();
    for t in tokenize(&page.title) {
        *scores.entry(t).or_default() += TITLE_WEIGHT;
    }
    let front = front_len(page.body.len());
    for (i, token) in page.body.iter().enumerate() {
        let w = if i < front { FRONT_WEIGHT } else { BACK_WEIGHT };
        *scores.entry(token.clone()).or_default() += w;
    }
    scores
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct KeywordScore {
    pub term: String,
    pub score: Score,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MetadataRecord {
    pub url: Url,
    pub origin_site: Host,
    pub title: String,
    pub encoding: String,
    #[serde(rename = "abstract")]
    pub summary: String,
    /// Sorted by score descending, then term ascending.
    pub keywords: Vec<KeywordScore>,
    pub last_modified: Timestamp,
    /// Set only on records re-exported by a layer-2 node.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub overlap_score: Option<u64>,
}

impl MetadataRecord {
    pub fn keyword(&self, term: &str) -> Option<Score> {
        self.keywords.iter().find(|k| k.term == term).map(|k| k.score)
    }
}

pub fn extract_metadata(page: &Page, config: &IndexConfig) -> MetadataRecord {
    let mut keywords: Vec<KeywordScore> = all_keyword_scores(page)
        .into_iter()
        .map(|(term, score)| KeywordScore { term, score })
        .collect();
    keywords.sort_by(|a, b| b.score.cmp(&a.score).then_with(|| a.term.cmp(&b.term)));
    keywords.truncate(config.keywords_per_page);
    let summary = page
        .body
        .iter()
        .take(config.abstract_token_limit)
        .map(String::as_str)
        .collect::<Vec<_>>()
        .join(" ");
    MetadataRecord {
        url: page.url.clone(),
        origin_site: page.host().clone(),
        title: page.title.clone(),
        encoding: page.encoding.clone(),
        summary,
        keywords,
        last_modified: page.last_modified,
        overlap_score: None,
    }
}

/// Inverted index over the own pages of one domain, plus the metadata of
/// pages fetched through off-site links, kept for export only.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layer3Index {
    domain: DomainName,
    config: IndexConfig,
    built_at: Timestamp,
    records: BTreeMap<Url, MetadataRecord>,
    /// Sorted by score descending, then url ascending.
    postings: BTreeMap<String, Vec<(Url, Score)>>,
    external: Vec<MetadataRecord>,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum IndexLine {
    Header {
        format: String,
        version: u32,
        domain: DomainName,
        built_at: Timestamp,
        config: IndexConfig,
    },
    Page(MetadataRecord),
    External(MetadataRecord),
}

const INDEX_FORMAT: &str = "dris-index";
const INDEX_VERSION: u32 = 1;

impl Layer3Index {
    fn assemble(
        domain: DomainName,
        config: IndexConfig,
        built_at: Timestamp,
        records: BTreeMap<Url, MetadataRecord>,
        mut external: Vec<MetadataRecord>,
    ) -> Self {
        let mut postings: BTreeMap<String, Vec<(Url, Score)>> = BTreeMap::new();
        for record in records.values() {
            for k in &record.keywords {
                postings
                    .entry(k.term.clone())
                    .or_default()
                    .push((record.url.clone(), k.score));
            }
        }
        for list in postings.values_mut() {
            list.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        }
        external.sort_by(|a, b| a.url.cmp(&b.url).then_with(|| a.origin_site.cmp(&b.origin_site)));
        Self {
            domain,
            config,
            built_at,
            records,
            postings,
            external,
        }
    }

    pub fn domain(&self) -> &DomainName {
        &self.domain
    }

    pub fn config(&self) -> &IndexConfig {
        &self.config
    }

    /// Latest modification time among indexed pages.
    pub fn built_at(&self) -> Timestamp {
        self.built_at
    }

    pub fn records(&self) -> &BTreeMap<Url, MetadataRecord> {
        &self.records
    }

    pub fn postings(&self, term: &str) -> &[(Url, Score)] {
        self.postings.get(term).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn terms(&self) -> impl Iterator<Item = &str> {
        self.postings.keys().map(String::as_str)
    }

    pub fn external(&self) -> &[MetadataRecord] {
        &self.external
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// AND query; a result's score is the sum of its keyword scores over the
    /// query terms. Ordered by score descending, then url ascending.
    pub fn search<S: AsRef<str>>(
        &self,
        query: &[S],
        max_results: usize,
    ) -> Result<Vec<RankedResult>, IndexError> {
        let terms = query_terms(query)?;
        let lists: Vec<&[(Url, Score)]> = terms.iter().map(|t| self.postings(t)).collect();
        let Some((shortest, _)) = lists.iter().enumerate().min_by_key(|(_, l)| l.len()) else {
            return Ok(Vec::new());
        };
        let lookups: Vec<HashMap<&Url, Score>> = lists
            .iter()
            .enumerate()
            .map(|(i, l)| {
                if i == shortest {
                    HashMap::new()
                } else {
                    l.iter().map(|(u, s)| (u, *s)).collect()
                }
            })
            .collect();

        let source = self.domain.class_name();
        let mut hits: Vec<(Score, &Url)> = lists[shortest]
            .iter()
            .filter_map(|(url, score)| {
                let mut total = *score;
                for (i, lookup) in lookups.iter().enumerate() {
                    if i != shortest {
                        total += lookup.get(url)?;
                    }
                }
                Some((total, url))
            })
            .collect();
        hits.sort_by(|a, b| b.0.cmp(&a.0).then_with(|| a.1.cmp(b.1)));
        hits.truncate(max_results);
        Ok(hits
            .into_iter()
            .map(|(score, url)| {
                let record = &self.records[url];
                RankedResult {
                    url: url.clone(),
                    score,
                    sources: BTreeSet::from([source.clone()]),
                    title: record.title.clone(),
                    summary: record.summary.clone(),
                }
            })
            .collect())
    }

    /// Own-page records and external-occurrence records modified after
    /// `since`, ordered by url then origin site.
    pub fn export_metadata(&self, since: Option<Timestamp>) -> Vec<MetadataRecord> {
        let fresh = |r: &&MetadataRecord| since.is_none_or(|t| r.last_modified > t);
        let mut out: Vec<MetadataRecord> = self
            .records
            .values()
            .filter(fresh)
            .chain(self.external.iter().filter(fresh))
            .cloned()
            .collect();
        out.sort_by(|a, b| a.url.cmp(&b.url).then_with(|| a.origin_site.cmp(&b.origin_site)));
        out
    }

    /// Writes the JSON-lines index file: one header line, then one line per
    /// own page and per external occurrence.
    pub fn write_to(&self, mut out: impl Write) -> Result<(), IndexError> {
        let header = IndexLine::Header {
            format: INDEX_FORMAT.into(),
            version: INDEX_VERSION,
            domain: self.domain.clone(),
            built_at: self.built_at,
            config: self.config,
        };
        let mut write = |line: &IndexLine| -> Result<(), IndexError> {
            serde_json::to_writer(&mut out, line).map_err(std::io::Error::from)?;
            out.write_all(b"\n")?;
            Ok(())
        };
        write(&header)?;
        for r in self.records.values() {
            write(&IndexLine::Page(r.clone()))?;
        }
        for r in &self.external {
            write(&IndexLine::External(r.clone()))?;
        }
        Ok(())
    }

    pub fn read_from(input: impl BufRead) -> Result<Self, IndexError> {
        let mut header = None;
        let mut records = BTreeMap::new();
        let mut external = Vec::new();
        for (n, line) in input.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let fmt_err = |message: String| IndexError::Format { line: n + 1, message };
            let parsed: IndexLine = serde_json::from_str(&line).map_err(|e| fmt_err(e.to_string()))?;
            match parsed {
                IndexLine::Header {
                    format,
                    version,
                    domain,
                    built_at,
                    config,
                } => {
                    if format != INDEX_FORMAT || version != INDEX_VERSION {
                        return Err(fmt_err(format!("unsupported index {format} v{version}")));
                    }
                    header = Some((domain, built_at, config));
                }
                IndexLine::Page(r) => {
                    if header.is_none() {
                        return Err(fmt_err("record before header".into()));
                    }
                    if records.contains_key(&r.url) {
                        return Err(IndexError::DuplicateUrl(r.url));
                    }
                    records.insert(r.url.clone(), r);
                }
                IndexLine::External(r) => external.push(r),
            }
        }
        let (domain, built_at, config) = header.ok_or(IndexError::Format {
            line: 0,
            message: "missing header".into(),
        })?;
        Ok(Self::assemble(domain, config, built_at, records, external))
    }
}

/// Indexes `own_pages`; pages must have distinct URLs. Named hosts must lie
/// under `domain`; address-only hosts are accepted as found by scanning.
pub fn build_index<'a>(
    own_pages: impl IntoIterator<Item = &'a Page>,
    domain: &DomainName,
    config: &IndexConfig,
) -> Result<Layer3Index, IndexError> {
    let mut records = BTreeMap::new();
    for page in own_pages {
        if page.host().domain().is_some_and(|d| !d.is_under(domain)) {
            return Err(IndexError::OutsideDomain {
                url: page.url.clone(),
                domain: domain.clone(),
            });
        }
        if records.contains_key(&page.url) {
            return Err(IndexError::DuplicateUrl(page.url.clone()));
        }
        records.insert(page.url.clone(), extract_metadata(page, config));
    }
    let built_at = records.values().map(|r| r.last_modified).max().unwrap_or(0);
    Ok(Layer3Index::assemble(domain.clone(), *config, built_at, records, Vec::new()))
}

/// Indexes the own pages of every crawl and keeps one metadata record per
/// external occurrence, attributed to the crawling site.
pub fn build_node_index(
    crawls: &[CrawlResult],
    domain: &DomainName,
    config: &IndexConfig,
) -> Result<Layer3Index, IndexError> {
    let base = build_index(crawls.iter().flat_map(|c| &c.own_pages), domain, config)?;
    let external = crawls
        .iter()
        .flat_map(|c| {
            c.external_pages.iter().map(move |e| MetadataRecord {
                origin_site: c.origin_site.clone(),
                ..extract_metadata(&e.page, config)
            })
        })
        .collect();
    Ok(Layer3Index::assemble(
        base.domain,
        base.config,
        base.built_at,
        base.records,
        external,
    ))
}
