use std::error::Error;
use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use clap::{ArgGroup, Parser, Subcommand, ValueEnum};

use dris::scenario::{Scenario, ScenarioConfig};
use dris::run_scenario;
use dris_core::federation::{NodeKind, Registry};
use dris_core::harvest::{harvest, Layer2Store, OverlapMode};
use dris_core::index::{build_node_index, IndexConfig, Layer3Index};
use dris_core::protocol::{ChildState, QueryRequest, QueryResponse, HARVEST_PAGE_LIMIT};
use dris_core::service::{Layer2Node, Layer3Node, MetadataSource, SearchService, TopNode};
use dris_core::spider::{crawl_domain, crawl_domain_scanned, CrawlResult};
use dris_core::webgraph::{generate_corpus, read_corpus, write_corpus, Corpus, CorpusConfig, DomainName};
use dris_net::{layer2_router, layer3_router, spawn, top_router, HttpConnector, HttpNode};

type Fallible<T = ()> = Result<T, Box<dyn Error>>;

#[derive(Parser)]
#[command(name = "dris", version, about = "Three-layer domain-partitioned federated search")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Layer {
    #[value(name = "3")]
    Three,
    #[value(name = "2")]
    Two,
    #[value(name = "top")]
    Top,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus directory.
    Gen {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Corpus config as JSON; missing fields take defaults.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Crawl one domain and print the fetch manifest as JSON lines.
    Crawl {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        domain: String,
        /// Also crawl unregistered hosts in the domain's address block.
        #[arg(long)]
        scan: bool,
    },
    /// Crawl one domain and write its layer-3 index file.
    Index {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        domain: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        scan: bool,
    },
    /// Harvest layer-3 index files into a layer-2 store file.
    Harvest {
        /// Store file; created if missing, updated in place otherwise.
        #[arg(long)]
        store: PathBuf,
        /// Region the store covers; needed when the store is created.
        #[arg(long)]
        domain: Option<String>,
        #[arg(long = "index", required = true)]
        indexes: Vec<PathBuf>,
        #[arg(long, value_enum, default_value = "distinct")]
        overlap: Overlap,
    },
    /// Serve one node over HTTP until killed.
    Serve {
        #[arg(long, value_enum)]
        layer: Layer,
        #[arg(long, default_value = "127.0.0.1:7300")]
        listen: SocketAddr,
        /// Layer 3: index file to serve.
        #[arg(long)]
        index: Option<PathBuf>,
        /// Layer 2: store file to start from.
        #[arg(long)]
        store: Option<PathBuf>,
        /// Layer 2 and top: the node's own domain.
        #[arg(long)]
        domain: Option<String>,
        /// Layer 2: a child as `domain=http://host:port`; repeatable.
        #[arg(long = "child")]
        children: Vec<String>,
        /// Top: registry table file.
        #[arg(long)]
        registry: Option<PathBuf>,
        #[arg(long, default_value_t = 1000)]
        timeout_ms: u64,
    },
    /// Run a federated query and print a ranked table.
    #[command(group(ArgGroup::new("source").required(true).args(["top", "registry", "scenario"])))]
    Query {
        #[arg(long)]
        scope: Option<String>,
        /// A running top node.
        #[arg(long)]
        top: Option<String>,
        /// Fan out directly to the HTTP endpoints in a registry table.
        #[arg(long)]
        registry: Option<PathBuf>,
        /// Stand the scenario up in-process, harvest once, then query it.
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long, default_value_t = 20)]
        max: usize,
        #[arg(long, default_value_t = 1000)]
        timeout_ms: u64,
        #[arg(required = true)]
        terms: Vec<String>,
    },
    /// Run a scenario file and print its metrics report as JSON.
    Bench {
        #[arg(long)]
        scenario: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Overlap {
    Distinct,
    Occurrences,
}

impl From<Overlap> for OverlapMode {
    fn from(o: Overlap) -> Self {
        match o {
            Overlap::Distinct => OverlapMode::Distinct,
            Overlap::Occurrences => OverlapMode::Occurrences,
        }
    }
}

fn domain(s: &str) -> Fallible<DomainName> {
    DomainName::parse(s).map_err(|e| format!("`{s}`: {e}").into())
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Fallible<T> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()).into())
}

fn read_index(path: &Path) -> Fallible<Layer3Index> {
    let file = File::open(path).map_err(|e| format!("{}: {e}", path.display()))?;
    Layer3Index::read_from(BufReader::new(file)).map_err(|e| format!("{}: {e}", path.display()).into())
}

fn crawl(corpus: &Corpus, d: &DomainName, scan: bool) -> Fallible<Vec<CrawlResult>> {
    Ok(if scan {
        crawl_domain_scanned(d, corpus)?
    } else {
        crawl_domain(d, corpus)?
    })
}

fn runtime() -> io::Result<tokio::runtime::Runtime> {
    tokio::runtime::Builder::new_multi_thread().enable_all().build()
}

fn print_table(response: &QueryResponse) {
    let mut out = io::stdout().lock();
    let width = response.results.iter().map(|r| r.url.as_str().len()).max().unwrap_or(3).max(3);
    let _ = writeln!(out, "{:>4}  {:>5}  {:<width$}  title", "rank", "score", "url");
    for (i, r) in response.results.iter().enumerate() {
        let _ = writeln!(out, "{:>4}  {:>5}  {:<width$}  {}", i + 1, r.score, r.url.as_str(), r.title);
    }
    for s in response.child_status.iter().filter(|s| s.status != ChildState::Ok) {
        eprintln!("warning: {} {}: {}", s.node, s.status, s.detail.as_deref().unwrap_or(""));
    }
}

fn run(cli: Cli) -> Fallible {
    match cli.command {
        Command::Gen { out, seed, config } => {
            let cfg: CorpusConfig = match config {
                Some(p) => read_json(&p)?,
                None => CorpusConfig::default(),
            };
            let corpus = generate_corpus(&cfg, seed)?;
            write_corpus(&corpus, &out)?;
            eprintln!("wrote {} pages on {} sites to {}", corpus.page_count(), corpus.sites().len(), out.display());
        }
        Command::Crawl { corpus, domain: d, scan } => {
            let corpus = read_corpus(&corpus)?;
            let crawls = crawl(&corpus, &domain(&d)?, scan)?;
            let mut out = BufWriter::new(io::stdout().lock());
            for c in &crawls {
                for entry in c.manifest() {
                    serde_json::to_writer(&mut out, &entry)?;
                    out.write_all(b"\n")?;
                }
            }
            out.flush()?;
        }
        Command::Index { corpus, domain: d, out, scan } => {
            let corpus = read_corpus(&corpus)?;
            let d = domain(&d)?;
            let index = build_node_index(&crawl(&corpus, &d, scan)?, &d, &IndexConfig::default())?;
            let file = File::create(&out).map_err(|e| format!("{}: {e}", out.display()))?;
            let mut w = BufWriter::new(file);
            index.write_to(&mut w)?;
            w.flush()?;
            eprintln!("indexed {} pages of {d} into {}", index.len(), out.display());
        }
        Command::Harvest { store, domain: d, indexes, overlap } => {
            let mut current = if store.exists() {
                let file = File::open(&store)?;
                Layer2Store::read_from(BufReader::new(file)).map_err(|e| format!("{}: {e}", store.display()))?
            } else {
                let d = d.ok_or("--domain is required when the store does not exist yet")?;
                Layer2Store::new(domain(&d)?, overlap.into())
            };
            let children = indexes
                .iter()
                .map(|p| Ok(Arc::new(Layer3Node::new(read_index(p)?)) as Arc<dyn MetadataSource>))
                .collect::<Fallible<Vec<_>>>()?;
            let batch = runtime()?.block_on(harvest(&children, current.cursors(), HARVEST_PAGE_LIMIT))?;
            current.apply(&batch);
            let mut w = BufWriter::new(File::create(&store)?);
            current.write_to(&mut w)?;
            w.flush()?;
            emit(&serde_json::to_string_pretty(&batch.summary())?)?;
        }
        Command::Serve {
            layer,
            listen,
            index,
            store,
            domain: d,
            children,
            registry,
            timeout_ms,
        } => {
            let rt = runtime()?;
            rt.block_on(async move {
                let router = match layer {
                    Layer::Three => {
                        let path = index.ok_or("--index is required for layer 3")?;
                        layer3_router(Arc::new(Layer3Node::new(read_index(&path)?)))
                    }
                    Layer::Two => {
                        let start = match (store, d) {
                            (Some(p), _) => Layer2Store::read_from(BufReader::new(File::open(&p)?))?,
                            (None, Some(d)) => Layer2Store::new(domain(&d)?, OverlapMode::Distinct),
                            (None, None) => return Err("layer 2 needs --store or --domain".into()),
                        };
                        let kids = children
                            .iter()
                            .map(|c| {
                                let (name, url) = c.split_once('=').ok_or(format!("`{c}` is not domain=url"))?;
                                Ok(Arc::new(HttpNode::new(url, domain(name)?.class_name())) as Arc<dyn MetadataSource>)
                            })
                            .collect::<Fallible<Vec<_>>>()?;
                        layer2_router(Arc::new(Layer2Node::new(start, kids, HARVEST_PAGE_LIMIT)))
                    }
                    Layer::Top => {
                        let path = registry.ok_or("--registry is required for the top layer")?;
                        let reg = Registry::from_table(&fs::read_to_string(&path)?)?;
                        let own = match d {
                            Some(d) => domain(&d)?,
                            None => top_domain(&reg)?,
                        };
                        let node = TopNode::new(own, reg, Arc::new(HttpConnector::new()), Duration::from_millis(timeout_ms));
                        top_router(Arc::new(node))
                    }
                };
                let server = spawn(router, listen).await?;
                emit(&format!("listening on {}", server.base_url()))?;
                server.wait().await;
                Ok::<(), Box<dyn Error>>(())
            })?;
        }
        Command::Query {
            scope,
            top,
            registry,
            scenario,
            max,
            timeout_ms,
            terms,
        } => {
            let mut request = QueryRequest::new("cli", terms, max);
            if let Some(s) = scope {
                request = request.with_scope(s);
            }
            let response = if let Some(url) = top {
                runtime()?.block_on(HttpNode::new(url, "top").search(request))?
            } else if let Some(path) = registry {
                let reg = Registry::from_table(&fs::read_to_string(&path)?)?;
                let own = top_domain(&reg)?;
                let node = TopNode::new(own, reg, Arc::new(HttpConnector::new()), Duration::from_millis(timeout_ms));
                runtime()?.block_on(node.search(request))?
            } else {
                let path = scenario.expect("clap enforces one source");
                let cfg: ScenarioConfig = read_json(&path)?;
                cfg.runtime()?.block_on(async {
                    let s = Scenario::build(cfg.clone()).await?;
                    s.harvest().await?;
                    Ok::<_, Box<dyn Error>>(s.query(request).await?)
                })?
            };
            print_table(&response);
        }
        Command::Bench { scenario } => {
            let cfg: ScenarioConfig = read_json(&scenario)?;
            let report = run_scenario(cfg)?;
            emit(&serde_json::to_string_pretty(&report)?)?;
        }
    }
    Ok(())
}

/// The registry's top node, or failing that its shallowest node.
fn top_domain(reg: &Registry) -> Fallible<DomainName> {
    reg.nodes()
        .find(|n| n.kind == NodeKind::Top)
        .or_else(|| reg.nodes().next())
        .map(|n| n.domain.clone())
        .ok_or_else(|| "registry is empty".into())
}

fn emit(text: &str) -> io::Result<()> {
    let mut out = io::stdout().lock();
    writeln!(out, "{text}")?;
    out.flush()
}

fn broken_pipe(e: &(dyn Error + 'static)) -> bool {
    if let Some(io) = e.downcast_ref::<io::Error>() {
        return io.kind() == io::ErrorKind::BrokenPipe;
    }
    e.downcast_ref::<serde_json::Error>()
        .is_some_and(|j| j.io_error_kind() == Some(io::ErrorKind::BrokenPipe))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if broken_pipe(e.as_ref()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("dris: {e}");
            ExitCode::from(1)
        }
    }
}
