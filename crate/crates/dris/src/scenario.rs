//! Desk-scale deployments of all three layers and the measurements taken on them.

use std::collections::{BTreeMap, BTreeSet};
use std::net::SocketAddr;
use std::sync::Arc;
use std::time::Duration;

use futures::future::join_all;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use dris_core::federation::{NodeKind, Registry, RegistryError, ServiceDescriptor};
use dris_core::harvest::{HarvestBatch, HarvestError, Layer2Store, OverlapMode};
use dris_core::index::{build_node_index, tokenize, IndexConfig, IndexError, Layer3Index};
use dris_core::protocol::{QueryRequest, QueryResponse, HARVEST_PAGE_LIMIT};
use dris_core::service::{
    in_process_endpoint, Fault, InProcessConnector, Layer2Node, Layer3Node, MetadataSource, NodeError,
    SearchService, SimulatedLink, TopNode,
};
use dris_core::spider::{crawl_domain, crawl_domain_scanned, CrawlError, CrawlResult};
use dris_core::webgraph::{generate_corpus, Corpus, CorpusConfig, CorpusError, DomainName, Page, Url};
use dris_net::{layer2_router, layer3_router, spawn, top_router, HttpConnector, HttpNode, ServerHandle};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transport {
    #[default]
    InProcess,
    Loopback,
}

/// Expected shape of the node tree. Absent fields are taken from the corpus.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Topology {
    pub layer2_per_top: Option<usize>,
    pub domains_per_layer2: Option<usize>,
}

/// Simulated one-way link delays of the in-process transport, and the
/// top layer's fan-out deadline.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Latency {
    pub layer2_ms: u64,
    pub layer3_ms: u64,
    pub timeout_ms: u64,
}

impl Default for Latency {
    fn default() -> Self {
        Self {
            layer2_ms: 20,
            layer3_ms: 5,
            timeout_ms: 1000,
        }
    }
}

/// Explicit queries are run first, then `generated` queries of up to
/// `terms_per_query` words drawn from random pages.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Workload {
    pub queries: Vec<Vec<String>>,
    pub generated: usize,
    pub terms_per_query: usize,
    pub seed: Option<u64>,
    pub max_results: usize,
}

impl Default for Workload {
    fn default() -> Self {
        Self {
            queries: Vec::new(),
            generated: 8,
            terms_per_query: 2,
            seed: None,
            max_results: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub corpus: CorpusConfig,
    pub seed: u64,
    pub topology: Topology,
    pub harvest_period_hours: u64,
    pub workload: Workload,
    pub transport: Transport,
    pub latency: Latency,
    pub index: IndexConfig,
    pub overlap: OverlapMode,
    /// Also crawl unregistered hosts found in each domain's address block.
    pub scan_addresses: bool,
    pub harvest_page_limit: usize,
    /// Harvest cycles to wait for a modified page before giving up.
    pub max_update_cycles: u32,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            corpus: CorpusConfig::default(),
            seed: 1,
            topology: Topology::default(),
            harvest_period_hours: 24,
            workload: Workload::default(),
            transport: Transport::default(),
            latency: Latency::default(),
            index: IndexConfig::default(),
            overlap: OverlapMode::default(),
            scan_addresses: true,
            harvest_page_limit: HARVEST_PAGE_LIMIT,
            max_update_cycles: 3,
        }
    }
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("invalid scenario: {0}")]
    Config(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Crawl(#[from] CrawlError),
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error(transparent)]
    Harvest(#[from] HarvestError),
    #[error(transparent)]
    Registry(#[from] RegistryError),
    #[error(transparent)]
    Node(#[from] NodeError),
    #[error("cannot start server: {0}")]
    Io(#[from] std::io::Error),
}

/// Organisational domains grouped under their second-level region.
fn regions_of(corpus: &Corpus) -> BTreeMap<DomainName, Vec<DomainName>> {
    let mut regions: BTreeMap<DomainName, Vec<DomainName>> = BTreeMap::new();
    for d in corpus.dns_table().keys() {
        if let Some(r) = d.parent() {
            regions.entry(r).or_default().push(d.clone());
        }
    }
    regions
}

fn check_topology(topology: &Topology, regions: &BTreeMap<DomainName, Vec<DomainName>>) -> Result<(), ScenarioError> {
    if let Some(n) = topology.layer2_per_top {
        if n != regions.len() {
            return Err(ScenarioError::Config(format!(
                "topology asks for {n} layer-2 nodes but the corpus has {} regions",
                regions.len()
            )));
        }
    }
    if let Some(n) = topology.domains_per_layer2 {
        if let Some((r, ds)) = regions.iter().find(|(_, ds)| ds.len() != n) {
            return Err(ScenarioError::Config(format!(
                "topology asks for {n} domains per layer-2 node but {r} has {}",
                ds.len()
            )));
        }
    }
    Ok(())
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.latency.timeout_ms == 0 {
            return Err(ScenarioError::Config("latency.timeout_ms must be positive".into()));
        }
        if self.workload.max_results == 0 {
            return Err(ScenarioError::Config("workload.max_results must be positive".into()));
        }
        if self.workload.generated > 0 && self.workload.terms_per_query == 0 {
            return Err(ScenarioError::Config("workload.terms_per_query must be positive".into()));
        }
        if self.harvest_page_limit == 0 {
            return Err(ScenarioError::Config("harvest_page_limit must be positive".into()));
        }
        Ok(())
    }

    /// A runtime suited to the transport: in-process scenarios run on one
    /// thread with a paused clock so that simulated latencies are exact.
    pub fn runtime(&self) -> std::io::Result<tokio::runtime::Runtime> {
        match self.transport {
            Transport::InProcess => tokio::runtime::Builder::new_current_thread()
                .enable_all()
                .start_paused(true)
                .build(),
            Transport::Loopback => tokio::runtime::Builder::new_multi_thread()
                .worker_threads(2)
                .enable_all()
                .build(),
        }
    }
}

/// Crawls every domain of the corpus and builds one layer-3 index per domain.
pub fn crawl_and_index(
    corpus: &Corpus,
    config: &ScenarioConfig,
) -> Result<(Vec<Layer3Index>, u64), ScenarioError> {
    let mut indexes = Vec::new();
    let mut bytes = 0;
    for domain in corpus.dns_table().keys() {
        let crawls: Vec<CrawlResult> = if config.scan_addresses {
            crawl_domain_scanned(domain, corpus)?
        } else {
            crawl_domain(domain, corpus)?
        };
        bytes += crawls.iter().map(|c| c.bytes_fetched).sum::<u64>();
        indexes.push(build_node_index(&crawls, domain, &config.index)?);
    }
    Ok((indexes, bytes))
}

/// Traffic of one harvest cycle across all layer-2 nodes.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CycleReport {
    pub batches: Vec<HarvestBatch>,
    pub crawl_bytes: u64,
}

impl CycleReport {
    pub fn harvest_bytes(&self) -> u64 {
        self.batches.iter().map(|b| b.bytes).sum()
    }

    pub fn records(&self) -> usize {
        self.batches.iter().map(|b| b.records.len()).sum()
    }
}

/// A running deployment: layer-3 nodes per organisational domain, a layer-2
/// node per region and one top node, wired through the chosen transport.
pub struct Scenario {
    config: ScenarioConfig,
    corpus: Corpus,
    root: DomainName,
    layer3: Vec<Arc<Layer3Node>>,
    layer2: Vec<Arc<Layer2Node>>,
    top: Arc<TopNode>,
    entry: Arc<dyn SearchService>,
    layer2_clients: Vec<Arc<dyn SearchService>>,
    layer2_links: Vec<Arc<SimulatedLink<Layer2Node>>>,
    layer2_servers: Vec<ServerHandle>,
    _servers: Vec<ServerHandle>,
    crawl_bytes: u64,
}

impl Scenario {
    /// Generates the corpus from the config and deploys on it.
    pub async fn build(config: ScenarioConfig) -> Result<Scenario, ScenarioError> {
        let corpus = generate_corpus(&config.corpus, config.seed)?;
        Scenario::deploy(config, corpus).await
    }

    pub async fn deploy(config: ScenarioConfig, corpus: Corpus) -> Result<Scenario, ScenarioError> {
        config.validate()?;
        let regions = regions_of(&corpus);
        check_topology(&config.topology, &regions)?;
        let root = regions
            .keys()
            .next()
            .and_then(|r| r.parent())
            .ok_or_else(|| ScenarioError::Config("corpus has no domains".into()))?;
        if let Some(stray) = regions.keys().find(|r| r.parent().as_ref() != Some(&root)) {
            return Err(ScenarioError::Config(format!("{stray} is not under {root}")));
        }
        let (indexes, crawl_bytes) = crawl_and_index(&corpus, &config)?;
        let layer3: Vec<Arc<Layer3Node>> = indexes.into_iter().map(|i| Arc::new(Layer3Node::new(i))).collect();
        let timeout = Duration::from_millis(config.latency.timeout_ms);
        let mut registry = Registry::new();

        match config.transport {
            Transport::InProcess => {
                let connector = Arc::new(InProcessConnector::new());
                let delay3 = Duration::from_millis(config.latency.layer3_ms);
                let delay2 = Duration::from_millis(config.latency.layer2_ms);
                let mut children: BTreeMap<DomainName, Arc<SimulatedLink<Layer3Node>>> = BTreeMap::new();
                for node in &layer3 {
                    let domain = node.domain();
                    let link = Arc::new(SimulatedLink::new(node.clone(), delay3));
                    let endpoint = in_process_endpoint(&domain);
                    connector.insert(endpoint.clone(), link.clone());
                    registry.register(ServiceDescriptor::new(domain.clone(), endpoint, NodeKind::Layer3))?;
                    children.insert(domain, link);
                }
                let mut layer2 = Vec::new();
                let mut layer2_links = Vec::new();
                for (region, domains) in &regions {
                    let mine = domains
                        .iter()
                        .map(|d| children[d].clone() as Arc<dyn MetadataSource>)
                        .collect();
                    let node = Arc::new(Layer2Node::new(
                        Layer2Store::new(region.clone(), config.overlap),
                        mine,
                        config.harvest_page_limit,
                    ));
                    let link = Arc::new(SimulatedLink::new(node.clone(), delay2));
                    let endpoint = in_process_endpoint(region);
                    connector.insert(endpoint.clone(), link.clone());
                    registry.register(ServiceDescriptor::new(region.clone(), endpoint, NodeKind::Layer2))?;
                    layer2.push(node);
                    layer2_links.push(link);
                }
                let endpoint = in_process_endpoint(&root);
                registry.register(ServiceDescriptor::new(root.clone(), endpoint.clone(), NodeKind::Top))?;
                let top = Arc::new(TopNode::new(root.clone(), registry, connector.clone(), timeout));
                connector.insert(endpoint, top.clone());
                Ok(Scenario {
                    layer2_clients: layer2_links.iter().map(|l| l.clone() as Arc<dyn SearchService>).collect(),
                    entry: top.clone(),
                    config,
                    corpus,
                    root,
                    layer3,
                    layer2,
                    top,
                    layer2_links,
                    layer2_servers: Vec::new(),
                    _servers: Vec::new(),
                    crawl_bytes,
                })
            }
            Transport::Loopback => {
                let any: SocketAddr = ([127, 0, 0, 1], 0).into();
                let mut servers = Vec::new();
                let mut children: BTreeMap<DomainName, Arc<dyn MetadataSource>> = BTreeMap::new();
                for node in &layer3 {
                    let domain = node.domain();
                    let server = spawn(layer3_router(node.clone()), any).await?;
                    let desc = ServiceDescriptor::new(domain.clone(), server.base_url(), NodeKind::Layer3);
                    children.insert(domain, Arc::new(HttpNode::new(server.base_url(), desc.class_name.clone())));
                    registry.register(desc)?;
                    servers.push(server);
                }
                let mut layer2 = Vec::new();
                let mut layer2_clients: Vec<Arc<dyn SearchService>> = Vec::new();
                let mut layer2_servers = Vec::new();
                for (region, domains) in &regions {
                    let mine = domains.iter().map(|d| children[d].clone()).collect();
                    let node = Arc::new(Layer2Node::new(
                        Layer2Store::new(region.clone(), config.overlap),
                        mine,
                        config.harvest_page_limit,
                    ));
                    let server = spawn(layer2_router(node.clone()), any).await?;
                    registry.register(ServiceDescriptor::new(region.clone(), server.base_url(), NodeKind::Layer2))?;
                    layer2_clients.push(Arc::new(HttpNode::new(server.base_url(), region.class_name())));
                    layer2.push(node);
                    layer2_servers.push(server);
                }
                let top = Arc::new(TopNode::new(root.clone(), registry, Arc::new(HttpConnector::new()), timeout));
                let server = spawn(top_router(top.clone()), any).await?;
                top.register(ServiceDescriptor::new(root.clone(), server.base_url(), NodeKind::Top))?;
                let entry = Arc::new(HttpNode::new(server.base_url(), root.class_name()));
                servers.push(server);
                Ok(Scenario {
                    config,
                    corpus,
                    root,
                    layer3,
                    layer2,
                    top,
                    entry,
                    layer2_clients,
                    layer2_links: Vec::new(),
                    layer2_servers,
                    _servers: servers,
                    crawl_bytes,
                })
            }
        }
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.config
    }

    pub fn corpus(&self) -> &Corpus {
        &self.corpus
    }

    pub fn root(&self) -> &DomainName {
        &self.root
    }

    pub fn layer3(&self) -> &[Arc<Layer3Node>] {
        &self.layer3
    }

    pub fn layer2(&self) -> &[Arc<Layer2Node>] {
        &self.layer2
    }

    pub fn top(&self) -> &Arc<TopNode> {
        &self.top
    }

    pub fn registry(&self) -> Registry {
        self.top.registry()
    }

    /// Bytes fetched by the initial crawl.
    pub fn crawl_bytes(&self) -> u64 {
        self.crawl_bytes
    }

    /// Layer-2 node `i` as seen through the transport.
    pub fn layer2_client(&self, i: usize) -> Arc<dyn SearchService> {
        self.layer2_clients[i].clone()
    }

    /// Takes layer-2 node `i` off the network: its server is stopped, or its
    /// in-process link fails every call.
    pub fn kill_layer2(&self, i: usize) {
        match self.config.transport {
            Transport::InProcess => self.layer2_links[i].set_fault(Some(Fault::Down)),
            Transport::Loopback => self.layer2_servers[i].kill(),
        }
    }

    /// Makes layer-2 node `i` stop answering without failing. In-process only.
    pub fn hang_layer2(&self, i: usize) -> Result<(), ScenarioError> {
        match self.config.transport {
            Transport::InProcess => {
                self.layer2_links[i].set_fault(Some(Fault::Hang));
                Ok(())
            }
            Transport::Loopback => Err(ScenarioError::Config("hang faults need the in-process transport".into())),
        }
    }

    /// Replaces a page in the live corpus. Nodes see it after the next cycle.
    pub fn update_page(&mut self, page: Page) {
        self.corpus = self.corpus.with_page(page);
    }

    /// Re-crawls and re-indexes every domain, swapping each layer-3 index.
    pub fn recrawl(&self) -> Result<u64, ScenarioError> {
        let (indexes, bytes) = crawl_and_index(&self.corpus, &self.config)?;
        for (node, index) in self.layer3.iter().zip(indexes) {
            node.replace(index);
        }
        Ok(bytes)
    }

    /// Runs one harvest on every layer-2 node concurrently.
    pub async fn harvest(&self) -> Result<Vec<HarvestBatch>, ScenarioError> {
        let runs = join_all(self.layer2.iter().map(|n| n.run_harvest())).await;
        Ok(runs.into_iter().collect::<Result<_, _>>()?)
    }

    /// One update cycle: layer 3 refreshes its indexes, then layer 2 harvests.
    pub async fn cycle(&self) -> Result<CycleReport, ScenarioError> {
        let crawl_bytes = self.recrawl()?;
        Ok(CycleReport {
            batches: self.harvest().await?,
            crawl_bytes,
        })
    }

    /// A federated query through the top layer.
    pub async fn query(&self, request: QueryRequest) -> Result<QueryResponse, NodeError> {
        self.entry.search(request).await
    }

    /// Fraction of corpus pages present in some layer-3 index.
    pub fn coverage(&self) -> Coverage {
        let indexed: BTreeSet<Url> = self
            .layer3
            .iter()
            .flat_map(|n| n.snapshot().records().keys().cloned().collect::<Vec<_>>())
            .collect();
        let total = self.corpus.page_count();
        let covered = self.corpus.pages().filter(|p| indexed.contains(&p.url)).count();
        let stray = indexed.iter().filter(|u| self.corpus.page(u).is_none()).count();
        Coverage {
            total,
            covered,
            stray,
            fraction: if total == 0 { 1.0 } else { covered as f64 / total as f64 },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coverage {
    pub total: usize,
    pub covered: usize,
    /// Indexed urls that are not corpus pages.
    pub stray: usize,
    pub fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryMetrics {
    pub terms: Vec<String>,
    pub results: usize,
    pub latency_ms: u64,
    pub failed_children: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UpdateMetrics {
    pub page: Url,
    pub token: String,
    pub visible_before_cycle: bool,
    /// Cycles until the change was visible at the top layer; absent if it
    /// never became visible within `max_update_cycles`.
    pub latency_cycles: Option<u32>,
    pub latency_hours: Option<u64>,
    pub cycle_harvest_bytes: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub seed: u64,
    pub transport: Transport,
    pub layer3_nodes: usize,
    pub layer2_nodes: usize,
    pub pages: usize,
    pub coverage_fraction: f64,
    pub crawl_bytes: u64,
    pub harvested_records: usize,
    pub harvest_bytes: u64,
    /// Bytes a layer-2 node would download to fetch every harvested page itself.
    pub recrawl_bytes_equivalent: u64,
    pub metadata_bytes: u64,
    pub metadata_fraction: f64,
    pub update: UpdateMetrics,
    pub queries: Vec<QueryMetrics>,
}

/// Explicit queries followed by generated ones.
pub fn workload_queries(config: &ScenarioConfig, corpus: &Corpus) -> Vec<Vec<String>> {
    let w = &config.workload;
    let mut out = w.queries.clone();
    let pages: Vec<&Page> = corpus.pages().collect();
    if pages.is_empty() {
        return out;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(w.seed.unwrap_or(config.seed ^ 0x5eed));
    for _ in 0..w.generated {
        let page = pages.choose(&mut rng).expect("nonempty");
        let mut words = tokenize(&page.title);
        words.extend(page.body.iter().cloned());
        let n = rng.random_range(1..=w.terms_per_query);
        let mut terms: Vec<String> = Vec::with_capacity(n);
        for _ in 0..n {
            let word = words.choose(&mut rng).expect("pages have words").clone();
            if !terms.contains(&word) {
                terms.push(word);
            }
        }
        out.push(terms);
    }
    out
}

/// Picks the page to modify and the token that marks the change.
pub fn freshness_probe(config: &ScenarioConfig, corpus: &Corpus) -> Option<(Page, String)> {
    let pages: Vec<&Page> = corpus.pages().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0xf7e5);
    let page = (*pages.choose(&mut rng)?).clone();
    // Generated words are letters only, so a token with digits is new.
    let token = format!("fresh{}", config.seed);
    let modified = Page {
        title: format!("{token} {token} {token} {}", page.title),
        last_modified: corpus.max_timestamp() + 1,
        ..page
    };
    Some((modified, token))
}

fn visible(response: &QueryResponse, url: &Url) -> bool {
    response.results.iter().any(|r| &r.url == url)
}

/// Builds the deployment, runs the first harvest, the query workload and a
/// single-page freshness probe, and reports what it measured.
pub async fn measure(config: ScenarioConfig) -> Result<MetricsReport, ScenarioError> {
    let mut scenario = Scenario::build(config.clone()).await?;
    let batches = scenario.harvest().await?;

    let mut harvest_bytes = 0;
    let mut recrawl_bytes_equivalent = 0;
    let mut metadata_bytes = 0;
    let mut harvested_records = 0;
    for batch in &batches {
        harvest_bytes += batch.bytes;
        harvested_records += batch.records.len();
        for (_, record) in &batch.records {
            metadata_bytes += serde_json::to_vec(record).expect("records serialize").len() as u64;
            recrawl_bytes_equivalent += scenario.corpus().page(&record.url).map_or(0, |p| p.serialized_len());
        }
    }

    let mut queries = Vec::new();
    for (i, terms) in workload_queries(&config, scenario.corpus()).into_iter().enumerate() {
        let request = QueryRequest::new(format!("q{i}"), terms.clone(), config.workload.max_results);
        let response = scenario.query(request).await?;
        queries.push(QueryMetrics {
            terms,
            results: response.results.len(),
            latency_ms: response.elapsed_ms,
            failed_children: response
                .child_status
                .iter()
                .filter(|s| s.status != dris_core::protocol::ChildState::Ok)
                .count(),
        });
    }

    let coverage = scenario.coverage();
    let (page, token) = freshness_probe(&config, scenario.corpus())
        .ok_or_else(|| ScenarioError::Config("corpus has no pages".into()))?;
    let url = page.url.clone();
    scenario.update_page(page);
    let probe = |id: String| QueryRequest::new(id, vec![token.clone()], HARVEST_PAGE_LIMIT);
    let visible_before_cycle = match scenario.query(probe("probe0".into())).await {
        Ok(r) => visible(&r, &url),
        Err(NodeError::Unavailable(_)) => false,
        Err(e) => return Err(e.into()),
    };
    let mut latency_cycles = None;
    let mut cycle_harvest_bytes = Vec::new();
    for cycle in 1..=config.max_update_cycles {
        let report = scenario.cycle().await?;
        cycle_harvest_bytes.push(report.harvest_bytes());
        let response = scenario.query(probe(format!("probe{cycle}"))).await?;
        if visible(&response, &url) {
            latency_cycles = Some(cycle);
            break;
        }
    }

    Ok(MetricsReport {
        seed: config.seed,
        transport: config.transport,
        layer3_nodes: scenario.layer3().len(),
        layer2_nodes: scenario.layer2().len(),
        pages: coverage.total,
        coverage_fraction: coverage.fraction,
        crawl_bytes: scenario.crawl_bytes(),
        harvested_records,
        harvest_bytes,
        recrawl_bytes_equivalent,
        metadata_bytes,
        metadata_fraction: if recrawl_bytes_equivalent == 0 {
            0.0
        } else {
            metadata_bytes as f64 / recrawl_bytes_equivalent as f64
        },
        update: UpdateMetrics {
            page: url,
            token,
            visible_before_cycle,
            latency_cycles,
            latency_hours: latency_cycles.map(|c| u64::from(c) * config.harvest_period_hours),
            cycle_harvest_bytes,
        },
        queries,
    })
}

/// Runs [`measure`] on a runtime of its own.
pub fn run_scenario(config: ScenarioConfig) -> Result<MetricsReport, ScenarioError> {
    let runtime = config.runtime()?;
    runtime.block_on(measure(config))
}
