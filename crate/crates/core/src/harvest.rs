//! Layer-2 harvesting: incremental metadata pulls from layer-3 children,
//! duplicate resolution, overlap scoring and overlap-ranked search.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Write};
use std::sync::Arc;

use futures::future::join_all;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::index::{query_terms, IndexError, MetadataRecord, Score};
use crate::protocol::{
    encode, validate, ChildState, ChildStatus, HarvestResponse, HarvestRunResponse, RankedResult, PROTOCOL_VERSION,
};
use crate::service::{MetadataSource, NodeError};
use crate::webgraph::{DomainName, Host, Timestamp, Url};

/// How copies of a page delivered by other sites are counted.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OverlapMode {
    /// Distinct other sites that delivered a copy.
    #[default]
    Distinct,
    /// Every copy from another site, including repeats from one site.
    Occurrences,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OverlapRecord {
    /// The retained copy: the page's own site if present, else the smallest origin.
    pub record: MetadataRecord,
    pub overlap_score: u64,
    pub seen_from: BTreeSet<Host>,
    /// Copies from other sites, before collapsing to distinct sites.
    pub occurrences: u64,
    /// Copies delivered by the page's own site.
    pub own_copies: u64,
}

fn retained_copy<'a>(url: &Url, copies: &[&'a MetadataRecord]) -> &'a MetadataRecord {
    let own = url.host();
    copies
        .iter()
        .copied()
        .min_by(|a, b| {
            (b.origin_site == *own)
                .cmp(&(a.origin_site == *own))
                .then_with(|| a.origin_site.cmp(&b.origin_site))
                .then_with(|| b.last_modified.cmp(&a.last_modified))
                .then_with(|| a.cmp(b))
        })
        .expect("groups are nonempty")
}

fn overlap_of(url: &Url, copies: &[&MetadataRecord], mode: OverlapMode) -> OverlapRecord {
    let own = url.host();
    let seen_from: BTreeSet<Host> = copies.iter().map(|r| r.origin_site.clone()).collect();
    let occurrences = copies.iter().filter(|r| r.origin_site != *own).count() as u64;
    let own_copies = copies.len() as u64 - occurrences;
    let overlap_score = match mode {
        OverlapMode::Distinct => seen_from.iter().filter(|s| *s != own).count() as u64,
        OverlapMode::Occurrences => occurrences,
    };
    OverlapRecord {
        record: retained_copy(url, copies).clone(),
        overlap_score,
        seen_from,
        occurrences,
        own_copies,
    }
}

/// Groups harvested copies by URL, ordered by URL.
pub fn dedupe_overlap<'a>(
    records: impl IntoIterator<Item = &'a MetadataRecord>,
    mode: OverlapMode,
) -> Vec<OverlapRecord> {
    let mut groups: BTreeMap<&Url, Vec<&MetadataRecord>> = BTreeMap::new();
    for r in records {
        groups.entry(&r.url).or_default().push(r);
    }
    groups
        .into_iter()
        .map(|(url, copies)| overlap_of(url, &copies, mode))
        .collect()
}

/// Restricts `records` to those modified after `since` and cuts the result
/// at a timestamp boundary so that no more than `limit` records are sent,
/// unless a single timestamp alone exceeds the limit.
pub fn page_records(
    mut records: Vec<MetadataRecord>,
    since: Option<Timestamp>,
    limit: usize,
) -> HarvestResponse {
    records.retain(|r| since.is_none_or(|t| r.last_modified > t));
    let floor = since.unwrap_or(0);
    let mut truncated = false;
    if records.len() > limit.max(1) {
        let mut stamps: Vec<Timestamp> = records.iter().map(|r| r.last_modified).collect();
        stamps.sort_unstable();
        let limit = limit.max(1);
        // Largest stamp whose cumulative count fits, or the first stamp.
        let cutoff = if stamps[limit] > stamps[limit - 1] {
            stamps[limit - 1]
        } else {
            let boundary = stamps[limit - 1];
            stamps
                .iter()
                .rev()
                .copied()
                .find(|&s| s < boundary)
                .unwrap_or(boundary)
        };
        records.retain(|r| r.last_modified <= cutoff);
        truncated = true;
    }
    let max_timestamp = records.iter().map(|r| r.last_modified).max().unwrap_or(floor).max(floor);
    HarvestResponse {
        version: PROTOCOL_VERSION.into(),
        records,
        max_timestamp,
        truncated,
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChildFailure {
    pub child: String,
    pub error: NodeError,
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum HarvestError {
    #[error("every child failed to deliver metadata ({} failures)", .0.len())]
    AllFailed(Vec<ChildFailure>),
}

/// Outcome of one harvest cycle.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct HarvestBatch {
    /// Records tagged with the id of the child that delivered them, in child order.
    pub records: Vec<(String, MetadataRecord)>,
    pub cursors: BTreeMap<String, Timestamp>,
    pub warnings: Vec<ChildFailure>,
    /// Encoded size of every metadata response received.
    pub bytes: u64,
}

impl HarvestBatch {
    pub fn summary(&self) -> HarvestRunResponse {
        HarvestRunResponse {
            version: PROTOCOL_VERSION.into(),
            records: self.records.len() as u64,
            bytes: self.bytes,
            cursors: self.cursors.clone(),
            failures: self
                .warnings
                .iter()
                .map(|w| ChildStatus {
                    node: w.child.clone(),
                    status: ChildState::Failed,
                    detail: Some(w.error.to_string()),
                })
                .collect(),
        }
    }
}

async fn harvest_child(
    child: &dyn MetadataSource,
    cursor: Option<Timestamp>,
    page_limit: usize,
) -> Result<(Vec<MetadataRecord>, Option<Timestamp>, u64), NodeError> {
    let mut since = cursor;
    let mut records = Vec::new();
    let mut bytes = 0;
    loop {
        let page = child.metadata(since, page_limit).await?;
        validate(&page).map_err(|v| NodeError::Protocol(v[0].to_string()))?;
        bytes += encode(&page).len() as u64;
        let advanced = since.is_none_or(|s| page.max_timestamp > s);
        if page.truncated && !advanced {
            return Err(NodeError::Protocol("truncated page did not advance the cursor".into()));
        }
        if !page.records.is_empty() || since.is_some() {
            since = Some(page.max_timestamp.max(since.unwrap_or(0)));
        }
        records.extend(page.records);
        if !page.truncated {
            break;
        }
    }
    Ok((records, since, bytes))
}

/// Pulls every child's metadata modified after its cursor. Children are
/// queried concurrently; a failed child is reported and keeps its cursor.
pub async fn harvest(
    children: &[Arc<dyn MetadataSource>],
    cursors: &BTreeMap<String, Timestamp>,
    page_limit: usize,
) -> Result<HarvestBatch, HarvestError> {
    let pulls = children.iter().map(|child| {
        let cursor = cursors.get(child.id()).copied();
        async move { (child.id().to_string(), cursor, harvest_child(child.as_ref(), cursor, page_limit).await) }
    });
    let mut batch = HarvestBatch {
        cursors: cursors.clone(),
        ..HarvestBatch::default()
    };
    for (id, old, outcome) in join_all(pulls).await {
        match outcome {
            Ok((records, cursor, bytes)) => {
                batch.bytes += bytes;
                if let Some(c) = cursor.max(old) {
                    batch.cursors.insert(id.clone(), c);
                }
                batch.records.extend(records.into_iter().map(|r| (id.clone(), r)));
            }
            Err(error) => batch.warnings.push(ChildFailure { child: id, error }),
        }
    }
    if !children.is_empty() && batch.warnings.len() == children.len() {
        return Err(HarvestError::AllFailed(batch.warnings));
    }
    Ok(batch)
}

#[derive(Debug, Error)]
pub enum StoreFileError {
    #[error("store file line {line}: {message}")]
    Format { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// The merged metadata of every child of one second-level domain.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layer2Store {
    domain: DomainName,
    mode: OverlapMode,
    cursors: BTreeMap<String, Timestamp>,
    /// url -> child -> copies delivered by that child, sorted.
    copies: BTreeMap<Url, BTreeMap<String, Vec<MetadataRecord>>>,
    entries: BTreeMap<Url, OverlapRecord>,
    terms: BTreeMap<String, BTreeSet<Url>>,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum StoreLine {
    Header {
        format: String,
        version: u32,
        domain: DomainName,
        overlap: OverlapMode,
        cursors: BTreeMap<String, Timestamp>,
    },
    Copy {
        child: String,
        record: MetadataRecord,
    },
}

const STORE_FORMAT: &str = "dris-store";
const STORE_VERSION: u32 = 1;

impl Layer2Store {
    pub fn new(domain: DomainName, mode: OverlapMode) -> Self {
        Self {
            domain,
            mode,
            cursors: BTreeMap::new(),
            copies: BTreeMap::new(),
            entries: BTreeMap::new(),
            terms: BTreeMap::new(),
        }
    }

    pub fn domain(&self) -> &DomainName {
        &self.domain
    }

    pub fn mode(&self) -> OverlapMode {
        self.mode
    }

    pub fn cursors(&self) -> &BTreeMap<String, Timestamp> {
        &self.cursors
    }

    pub fn entries(&self) -> &BTreeMap<Url, OverlapRecord> {
        &self.entries
    }

    pub fn entry(&self, url: &Url) -> Option<&OverlapRecord> {
        self.entries.get(url)
    }

    /// Number of stored copies, across all children.
    pub fn copy_count(&self) -> usize {
        self.copies.values().flat_map(|c| c.values()).map(Vec::len).sum()
    }

    fn recompute(&mut self, url: &Url) {
        if let Some(old) = self.entries.remove(url) {
            for k in &old.record.keywords {
                if let Some(set) = self.terms.get_mut(&k.term) {
                    set.remove(url);
                    if set.is_empty() {
                        self.terms.remove(&k.term);
                    }
                }
            }
        }
        let Some(by_child) = self.copies.get(url) else {
            return;
        };
        let copies: Vec<&MetadataRecord> = by_child.values().flatten().collect();
        if copies.is_empty() {
            return;
        }
        let entry = overlap_of(url, &copies, self.mode);
        for k in &entry.record.keywords {
            self.terms.entry(k.term.clone()).or_default().insert(url.clone());
        }
        self.entries.insert(url.clone(), entry);
    }

    /// Folds a harvest batch in. A child's delivery for a URL replaces every
    /// copy that child delivered earlier for the same URL.
    pub fn apply(&mut self, batch: &HarvestBatch) {
        let mut fresh: BTreeMap<(&Url, &str), Vec<MetadataRecord>> = BTreeMap::new();
        for (child, record) in &batch.records {
            fresh.entry((&record.url, child.as_str())).or_default().push(record.clone());
        }
        let mut touched = BTreeSet::new();
        for ((url, child), mut records) in fresh {
            records.sort();
            self.copies
                .entry(url.clone())
                .or_default()
                .insert(child.to_string(), records);
            touched.insert(url.clone());
        }
        for url in &touched {
            self.recompute(url);
        }
        for (child, cursor) in &batch.cursors {
            let slot = self.cursors.entry(child.clone()).or_insert(*cursor);
            *slot = (*slot).max(*cursor);
        }
    }

    /// Candidates hold every query term among their retained keywords.
    /// Ordered by overlap score, then keyword-score sum (both descending),
    /// then url; the reported score is the overlap score.
    pub fn search<S: AsRef<str>>(
        &self,
        query: &[S],
        max_results: usize,
    ) -> Result<Vec<RankedResult>, IndexError> {
        let terms = query_terms(query)?;
        let mut sets: Vec<&BTreeSet<Url>> = Vec::with_capacity(terms.len());
        for t in &terms {
            match self.terms.get(t) {
                Some(s) => sets.push(s),
                None => return Ok(Vec::new()),
            }
        }
        sets.sort_by_key(|s| s.len());
        let mut hits: Vec<(u64, Score, &OverlapRecord)> = sets[0]
            .iter()
            .filter(|u| sets[1..].iter().all(|s| s.contains(*u)))
            .map(|u| {
                let e = &self.entries[u];
                let sum = terms.iter().filter_map(|t| e.record.keyword(t)).sum();
                (e.overlap_score, sum, e)
            })
            .collect();
        hits.sort_by(|a, b| {
            b.0.cmp(&a.0)
                .then_with(|| b.1.cmp(&a.1))
                .then_with(|| a.2.record.url.cmp(&b.2.record.url))
        });
        hits.truncate(max_results);
        let source = self.domain.class_name();
        Ok(hits
            .into_iter()
            .map(|(overlap, _, e)| RankedResult {
                url: e.record.url.clone(),
                score: overlap,
                sources: BTreeSet::from([source.clone()]),
                title: e.record.title.clone(),
                summary: e.record.summary.clone(),
            })
            .collect())
    }

    /// Retained records with their overlap score attached, for a parent harvester.
    pub fn export(&self, since: Option<Timestamp>, limit: usize) -> HarvestResponse {
        let records = self
            .entries
            .values()
            .map(|e| MetadataRecord {
                overlap_score: Some(e.overlap_score),
                ..e.record.clone()
            })
            .collect();
        page_records(records, since, limit)
    }

    pub fn write_to(&self, mut out: impl Write) -> Result<(), StoreFileError> {
        let mut line = |l: &StoreLine| -> Result<(), StoreFileError> {
            serde_json::to_writer(&mut out, l).map_err(std::io::Error::from)?;
            out.write_all(b"\n")?;
            Ok(())
        };
        line(&StoreLine::Header {
            format: STORE_FORMAT.into(),
            version: STORE_VERSION,
            domain: self.domain.clone(),
            overlap: self.mode,
            cursors: self.cursors.clone(),
        })?;
        for by_child in self.copies.values() {
            for (child, records) in by_child {
                for record in records {
                    line(&StoreLine::Copy {
                        child: child.clone(),
                        record: record.clone(),
                    })?;
                }
            }
        }
        Ok(())
    }

    pub fn read_from(input: impl BufRead) -> Result<Self, StoreFileError> {
        let mut store: Option<Layer2Store> = None;
        let mut batch = HarvestBatch::default();
        for (n, line) in input.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let err = |message: String| StoreFileError::Format { line: n + 1, message };
            match serde_json::from_str(&line).map_err(|e| err(e.to_string()))? {
                StoreLine::Header {
                    format,
                    version,
                    domain,
                    overlap,
                    cursors,
                } => {
                    if format != STORE_FORMAT || version != STORE_VERSION {
                        return Err(err(format!("unsupported store {format} v{version}")));
                    }
                    batch.cursors = cursors;
                    store = Some(Layer2Store::new(domain, overlap));
                }
                StoreLine::Copy { child, record } => {
                    if store.is_none() {
                        return Err(err("copy before header".into()));
                    }
                    batch.records.push((child, record));
                }
            }
        }
        let mut store = store.ok_or(StoreFileError::Format {
            line: 0,
            message: "missing header".into(),
        })?;
        store.apply(&batch);
        Ok(store)
    }
}
