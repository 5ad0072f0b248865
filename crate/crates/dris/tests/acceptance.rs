//! Acceptance suite. Prints one line per criterion and exits non-zero if any
//! fails. Pass criterion numbers as arguments to run a subset.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use proptest::prelude::*;
use proptest::test_runner::{Config as ProptestConfig, TestCaseError, TestRunner};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use dris::scenario::{Scenario, ScenarioConfig, Transport};
use dris::run_scenario;
use dris_core::federation::{merge_results, NodeKind, Registry, ServiceDescriptor};
use dris_core::index::{build_node_index, IndexConfig, KeywordScore, MetadataRecord, Score};
use dris_core::protocol::{
    decode, encode, ChildState, ChildStatus, ErrorBody, HarvestResponse, HarvestRunResponse, Message, QueryRequest,
    QueryResponse, RankedResult, RegisterRequest, RegistryDump, RegistryEntry, PROTOCOL_VERSION,
};
use dris_core::spider::crawl_domain_scanned;
use dris_core::webgraph::{generate_corpus, Corpus, CorpusConfig, DomainName, Host, Page, Url};

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !($cond) {
            return Err(format!($($fmt)+));
        }
    };
}

fn fail<E: std::fmt::Display>(context: &str) -> impl FnOnce(E) -> String + '_ {
    move |e| format!("{context}: {e}")
}

type Criterion = (u32, &'static str, fn() -> Outcome);

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        (1, "crawl coverage", coverage),
        (2, "overlap score oracle", overlap_oracle),
        (3, "merge law", merge_law),
        (4, "layer-3 search oracle", layer3_search),
        (5, "class naming", naming),
        (6, "update latency", freshness),
        (7, "harvest traffic", traffic),
        (8, "protocol round trip", protocol),
        (9, "fault tolerance", fault_tolerance),
    ];
    let wanted: BTreeSet<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (n, name, check) in criteria {
        if !wanted.is_empty() && !wanted.contains(&n) {
            continue;
        }
        let started = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|panic| {
            let msg = panic
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into());
            Err(format!("panic: {msg}"))
        });
        let secs = started.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("[PASS] criterion {n} {name}: {detail} ({secs:.2}s)"),
            Err(detail) => {
                failed += 1;
                println!("[FAIL] criterion {n} {name}: {detail} ({secs:.2}s)");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}

fn block_on<F: std::future::Future>(cfg: &ScenarioConfig, fut: F) -> F::Output {
    cfg.runtime().expect("runtime").block_on(fut)
}

fn random_corpus(rng: &mut ChaCha8Rng, max_pages: usize) -> CorpusConfig {
    let regions = rng.random_range(1..=3);
    let domains = rng.random_range(1..=3);
    let sites_per_domain = rng.random_range(1..=4);
    let sites = regions * domains * sites_per_domain;
    let pages_per_site = rng.random_range(1..=(max_pages / sites).clamp(1, 40));
    CorpusConfig {
        regions,
        domains,
        sites_per_domain,
        pages_per_site,
        unregistered_fraction: rng.random_range(0.15..0.5),
        cross_site_link_prob: rng.random_range(0.1..0.6),
        links_per_page: rng.random_range(1..=5),
        ..CorpusConfig::default()
    }
}

fn coverage() -> Outcome {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xc0ffee);
    let (mut runs, mut pages, mut unregistered) = (0, 0, 0);
    for _ in 0..12 {
        let corpus = random_corpus(&mut rng, 500);
        let cfg = ScenarioConfig {
            corpus,
            seed: rng.random(),
            ..ScenarioConfig::default()
        };
        let (cov, hidden) = block_on(&cfg, async {
            let s = Scenario::build(cfg.clone()).await?;
            Ok::<_, dris::ScenarioError>((s.coverage(), s.corpus().unregistered().len()))
        })
        .map_err(fail("build"))?;
        ensure!(cov.total <= 500, "corpus of {} pages is over the size bound", cov.total);
        ensure!(
            cov.covered == cov.total && cov.stray == 0,
            "seed {}: covered {}/{} pages, {} stray",
            cfg.seed,
            cov.covered,
            cov.total,
            cov.stray
        );
        runs += 1;
        pages += cov.total;
        unregistered += hidden;
    }
    ensure!(unregistered > 0, "no corpus had an unregistered host");
    let elapsed = started.elapsed();
    ensure!(elapsed < Duration::from_secs(10), "took {elapsed:?}");
    Ok(format!(
        "{runs} corpora, {pages} pages, {unregistered} unregistered hosts, all covered in {:.2}s",
        elapsed.as_secs_f64()
    ))
}

fn second_level(d: &DomainName) -> DomainName {
    let labels = d.labels();
    DomainName::parse(&format!("{}.{}", labels[labels.len() - 2], labels[labels.len() - 1])).unwrap()
}

/// The region a site belongs to, by name or by the address block holding it.
fn region_of(corpus: &Corpus, host: &Host) -> DomainName {
    if let Some(addr) = host.addr() {
        let (owner, _) = corpus
            .address_blocks()
            .iter()
            .find(|(_, block)| block.contains(&addr))
            .expect("every address lies in some block");
        second_level(owner)
    } else {
        second_level(&host.domain().unwrap())
    }
}

/// For every page visible to `region`, the distinct sites of that region,
/// other than the page's own, holding a page that links to it.
fn brute_force_overlap(corpus: &Corpus, region: Option<&DomainName>) -> BTreeMap<Url, u64> {
    let mut linkers: BTreeMap<Url, BTreeSet<Host>> = BTreeMap::new();
    for page in corpus.pages() {
        if region.is_some_and(|r| &region_of(corpus, page.host()) != r) {
            continue;
        }
        linkers.entry(page.url.clone()).or_default();
        for target in &page.links {
            if target.host() != page.host() && corpus.page(target).is_some() {
                linkers.entry(target.clone()).or_default().insert(page.host().clone());
            }
        }
    }
    linkers
        .into_iter()
        .map(|(url, sites)| {
            let n = sites.iter().filter(|s| *s != url.host()).count() as u64;
            (url, n)
        })
        .collect()
}

fn overlap_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x0f1a);
    let (mut corpora, mut entries, mut multi) = (0, 0, 0);
    for i in 0..8 {
        let corpus = CorpusConfig {
            regions: 1 + i % 3,
            domains: rng.random_range(1..=3),
            sites_per_domain: rng.random_range(2..=4),
            pages_per_site: rng.random_range(2..=8),
            unregistered_fraction: 0.3,
            cross_site_link_prob: 0.5,
            links_per_page: 4,
            ..CorpusConfig::default()
        };
        let cfg = ScenarioConfig {
            corpus,
            seed: rng.random(),
            ..ScenarioConfig::default()
        };
        let (corpus, stores) = block_on(&cfg, async {
            let s = Scenario::build(cfg.clone()).await?;
            s.harvest().await?;
            let stores: Vec<_> = s.layer2().iter().map(|n| n.snapshot()).collect();
            Ok::<_, dris::ScenarioError>((s.corpus().clone(), stores))
        })
        .map_err(fail("build"))?;
        let mut summed: BTreeMap<Url, u64> = BTreeMap::new();
        for store in &stores {
            let expected = brute_force_overlap(&corpus, Some(store.domain()));
            let actual: BTreeMap<Url, u64> =
                store.entries().iter().map(|(u, e)| (u.clone(), e.overlap_score)).collect();
            if actual != expected {
                let diff = expected
                    .iter()
                    .find(|(u, n)| actual.get(*u) != Some(n))
                    .map(|(u, n)| format!("{u}: expected {n}, got {:?}", actual.get(u)))
                    .unwrap_or_else(|| "entry sets differ".into());
                return Err(format!("seed {} region {}: {diff}", cfg.seed, store.domain()));
            }
            for (u, n) in actual {
                *summed.entry(u).or_default() += n;
            }
            entries += store.entries().len();
        }
        let global = brute_force_overlap(&corpus, None);
        ensure!(
            summed == global,
            "seed {}: per-region scores do not add up to the global in-link counts",
            cfg.seed
        );
        corpora += 1;
        if stores.len() > 1 {
            multi += 1;
        }
    }
    Ok(format!("{corpora} corpora ({multi} multi-region), {entries} layer-2 entries match"))
}

fn url_of(n: u8) -> Url {
    Url::parse(&format!("http://www.site{}.edu.cn/p{}", n % 3, n)).unwrap()
}

fn database_lists() -> impl Strategy<Value = Vec<(String, Vec<RankedResult>)>> {
    let list = prop::collection::btree_map(0u8..16, (0u64..12, "[a-z]{0,4}"), 0..10);
    prop::collection::vec(list, 3..6).prop_map(|lists| {
        lists
            .into_iter()
            .enumerate()
            .map(|(i, hits)| {
                let db = format!("DRIS.cn.db{i}");
                let mut results: Vec<RankedResult> = hits
                    .into_iter()
                    .map(|(u, (score, title))| RankedResult {
                        url: url_of(u),
                        score,
                        sources: BTreeSet::from([db.clone()]),
                        summary: format!("{title} from {db}"),
                        title,
                    })
                    .collect();
                results.sort_by(|a, b| b.score.cmp(&a.score).then_with(|| a.url.cmp(&b.url)));
                (db, results)
            })
            .collect()
    })
}

fn scored(results: &[RankedResult]) -> Vec<(Url, Score)> {
    results.iter().map(|r| (r.url.clone(), r.score)).collect()
}

type Lists = [(String, Vec<RankedResult>)];

fn merge_oracle(lists: &Lists) -> Vec<RankedResult> {
    type Slot = (Score, BTreeSet<String>, Option<(Score, String, RankedResult)>);
    let mut by_url: BTreeMap<Url, Slot> = BTreeMap::new();
    for (db, results) in lists {
        for r in results {
            let slot = by_url.entry(r.url.clone()).or_insert((0, BTreeSet::new(), None));
            slot.0 += r.score;
            slot.1.insert(db.clone());
            let better = match &slot.2 {
                None => true,
                Some((s, d, _)) => r.score > *s || (r.score == *s && db < d),
            };
            if better {
                slot.2 = Some((r.score, db.clone(), r.clone()));
            }
        }
    }
    let mut out: Vec<RankedResult> = by_url
        .into_iter()
        .map(|(url, (score, sources, best))| {
            let best = best.unwrap().2;
            RankedResult {
                url,
                score,
                sources,
                title: best.title,
                summary: best.summary,
            }
        })
        .collect();
    let n = out.len();
    for i in 0..n {
        for j in 0..n - 1 - i {
            let swap = out[j].score < out[j + 1].score
                || (out[j].score == out[j + 1].score && out[j].url > out[j + 1].url);
            if swap {
                out.swap(j, j + 1);
            }
        }
    }
    out
}

fn merge_law() -> Outcome {
    let mut runner = TestRunner::new(ProptestConfig {
        cases: 1000,
        failure_persistence: None,
        ..ProptestConfig::default()
    });
    let strategy = database_lists().prop_flat_map(|lists| (Just(lists.clone()), Just(lists).prop_shuffle()));
    let merge = |lists: &Lists| {
        merge_results(lists).map_err(|e| TestCaseError::fail(format!("merge failed: {e}")))
    };
    runner
        .run(&strategy, |(lists, shuffled)| {
            let merged = merge(&lists)?;
            prop_assert_eq!(&merged, &merge_oracle(&lists));
            prop_assert_eq!(&merge(&shuffled)?, &merged);

            let (a, b, rest) = (&lists[0], &lists[1], &lists[2..]);
            let ab = merge(&[a.clone(), b.clone()])?;
            let mut left = vec![("DRIS.cn.ab".to_string(), ab)];
            left.extend_from_slice(rest);
            let mut bc_lists = vec![b.clone()];
            bc_lists.extend_from_slice(rest);
            let right = vec![a.clone(), ("DRIS.cn.bc".to_string(), merge(&bc_lists)?)];
            prop_assert_eq!(scored(&merge(&left)?), scored(&merged));
            prop_assert_eq!(scored(&merge(&right)?), scored(&merged));

            let single = merge(std::slice::from_ref(a))?;
            prop_assert_eq!(&single, &a.1);
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    Ok("1000 random list sets: oracle sums, shuffles, regroupings and single lists agree".into())
}

/// Keyword scores recomputed from the raw page.
fn page_scores(page: &Page) -> BTreeMap<String, Score> {
    let mut scores = BTreeMap::new();
    for word in page.title.split(|c: char| !c.is_alphanumeric()).filter(|w| !w.is_empty()) {
        *scores.entry(word.to_lowercase()).or_insert(0) += 5;
    }
    let half = page.body.len().div_ceil(2);
    for (i, token) in page.body.iter().enumerate() {
        *scores.entry(token.clone()).or_insert(0) += if i < half { 2 } else { 1 };
    }
    scores
}

/// The `cap` best-scoring keywords of a page, ties broken alphabetically.
fn kept_keywords(page: &Page, cap: usize) -> BTreeMap<String, Score> {
    let mut all: Vec<(String, Score)> = page_scores(page).into_iter().collect();
    all.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    all.into_iter().take(cap).collect()
}

fn owns(corpus: &Corpus, domain: &DomainName, host: &Host) -> bool {
    match host.addr() {
        Some(addr) => corpus.address_blocks().get(domain).is_some_and(|b| b.contains(&addr)),
        None => host.domain().is_some_and(|d| d.labels().ends_with(domain.labels())),
    }
}

fn layer3_search() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5ea7c4);
    let (mut queries, mut hits, mut nonempty) = (0, 0, 0);
    for (round, cap) in [50, 50, 8, 4, 12].into_iter().enumerate() {
        let corpus_cfg = CorpusConfig {
            domains: 3,
            sites_per_domain: 3,
            pages_per_site: rng.random_range(4..=20),
            unregistered_fraction: 0.25,
            body_tokens: (30, 90),
            vocabulary_size: 120,
            ..CorpusConfig::default()
        };
        let corpus = generate_corpus(&corpus_cfg, round as u64 + 11).map_err(fail("corpus"))?;
        ensure!(corpus.page_count() <= 200, "corpus has {} pages", corpus.page_count());
        let config = IndexConfig {
            keywords_per_page: cap,
            ..IndexConfig::default()
        };
        let vocabulary: Vec<String> = corpus.pages().flat_map(|p| p.body.iter().cloned()).collect();
        for domain in corpus.dns_table().keys() {
            let crawls = crawl_domain_scanned(domain, &corpus).map_err(fail("crawl"))?;
            let index = build_node_index(&crawls, domain, &config).map_err(fail("index"))?;
            let own: Vec<(&Page, BTreeMap<String, Score>)> = corpus
                .pages()
                .filter(|p| owns(&corpus, domain, p.host()))
                .map(|p| (p, kept_keywords(p, cap)))
                .collect();
            for _ in 0..10 {
                let n = rng.random_range(1..=3);
                let anchor = own.choose(&mut rng).map(|(p, _)| *p);
                let mut terms: Vec<String> = (0..n)
                    .map(|_| match (anchor, rng.random_bool(0.7)) {
                        (Some(p), true) => p.body.choose(&mut rng).unwrap().clone(),
                        _ => vocabulary.choose(&mut rng).unwrap().clone(),
                    })
                    .collect();
                if rng.random_bool(0.1) {
                    terms.push(terms[0].to_uppercase());
                }
                let max = rng.random_range(1..=40);
                let got = index.search(&terms, max).map_err(fail("search"))?;
                let expected = brute_force_search(&own, &terms, max);
                let got_pairs: Vec<(String, Score)> =
                    got.iter().map(|r| (r.url.as_str().to_string(), r.score)).collect();
                ensure!(
                    got_pairs == expected,
                    "{domain} cap {cap} query {terms:?}: expected {expected:?}, got {got_pairs:?}"
                );
                for r in &got {
                    ensure!(
                        r.sources == BTreeSet::from([domain.class_name()]),
                        "{} has sources {:?}",
                        r.url,
                        r.sources
                    );
                    ensure!(r.title == corpus.page(&r.url).unwrap().title, "{} has the wrong title", r.url);
                }
                queries += 1;
                hits += got.len();
                nonempty += usize::from(!got.is_empty());
            }
        }
    }
    ensure!(queries >= 100, "only {queries} queries ran");
    ensure!(nonempty * 2 >= queries, "only {nonempty} of {queries} queries matched anything");
    Ok(format!("{queries} queries ({nonempty} with hits, {hits} results) match a linear scan exactly"))
}

fn brute_force_search(own: &[(&Page, BTreeMap<String, Score>)], terms: &[String], max: usize) -> Vec<(String, Score)> {
    let mut distinct: Vec<String> = Vec::new();
    for t in terms {
        let t = t.to_lowercase();
        if !distinct.contains(&t) {
            distinct.push(t);
        }
    }
    let mut hits: Vec<(String, Score)> = own
        .iter()
        .filter_map(|(page, kept)| {
            let mut total = 0;
            for t in &distinct {
                total += kept.get(t)?;
            }
            Some((page.url.as_str().to_string(), total))
        })
        .collect();
    hits.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    hits.truncate(max);
    hits
}

fn random_domain(rng: &mut ChaCha8Rng) -> String {
    const ALPHABET: &[u8] = b"abcdefghijklmnopqrstuvwxyz0123456789";
    let labels = rng.random_range(1..=4);
    (0..labels)
        .map(|_| {
            let len = rng.random_range(1..=6);
            let mut label: String = (0..len).map(|_| *ALPHABET.choose(rng).unwrap() as char).collect();
            if len > 2 && rng.random_bool(0.1) {
                label.replace_range(1..2, "-");
            }
            label
        })
        .collect::<Vec<_>>()
        .join(".")
}

fn naming() -> Outcome {
    let hust = DomainName::parse("hust.edu.cn").map_err(fail("parse"))?;
    ensure!(hust.class_name() == "DRIS.cn.edu.hust", "hust.edu.cn maps to {}", hust.class_name());
    ensure!(hust.service_name() == "DRIS.hust.edu.cn", "service name is {}", hust.service_name());

    let mut rng = ChaCha8Rng::seed_from_u64(0xd1a5);
    let mut classes: HashMap<String, DomainName> = HashMap::new();
    let mut registry = Registry::new();
    while classes.len() < 10_000 {
        let d = DomainName::parse(&random_domain(&mut rng)).map_err(fail("random domain"))?;
        let class = d.class_name();
        let expected: String = std::iter::once("DRIS")
            .chain(d.labels().iter().rev().map(String::as_str))
            .collect::<Vec<_>>()
            .join(".");
        ensure!(class == expected, "{d} maps to {class}, expected {expected}");
        if let Some(other) = classes.get(&class) {
            ensure!(other == &d, "{other} and {d} share class name {class}");
            continue;
        }
        let back = DomainName::from_class_name(&class).map_err(fail("from_class_name"))?;
        ensure!(back == d, "{class} maps back to {back}, not {d}");
        registry
            .register(ServiceDescriptor::new(d.clone(), format!("mem://{d}"), NodeKind::Layer3))
            .map_err(fail("register"))?;
        classes.insert(class, d);
    }

    let mut ambiguous = 0;
    for (class, d) in &classes {
        let by_domain = registry.resolve(&d.to_string()).map_err(fail("resolve domain"))?;
        let by_class = registry.resolve(class).map_err(fail("resolve class"))?;
        ensure!(by_domain == by_class, "{d} and {class} resolve differently");
        ensure!(&by_class.domain == d, "{class} resolves to {}", by_class.domain);
        let service = d.service_name();
        if service != *class && classes.contains_key(&service) {
            ambiguous += 1;
            continue;
        }
        let by_service = registry.resolve(&service).map_err(fail("resolve service"))?;
        ensure!(by_service == by_class, "{service} and {class} resolve differently");
    }
    Ok(format!(
        "hust.edu.cn -> DRIS.cn.edu.hust; 10000 random domains injective and invertible; \
         domain, class and service spellings agree ({ambiguous} service spellings shadowed by another class name)"
    ))
}

fn small_deployment(seed: u64, regions: usize) -> ScenarioConfig {
    ScenarioConfig {
        corpus: CorpusConfig {
            regions,
            domains: 2,
            sites_per_domain: 2,
            pages_per_site: 4,
            unregistered_fraction: 0.2,
            ..CorpusConfig::default()
        },
        seed,
        ..ScenarioConfig::default()
    }
}

fn freshness() -> Outcome {
    let mut runs = Vec::new();
    for (seed, regions) in [(1, 1), (2, 2), (3, 3), (4, 2)] {
        runs.push(small_deployment(seed, regions));
    }
    runs.push(ScenarioConfig {
        transport: Transport::Loopback,
        ..small_deployment(5, 2)
    });
    let mut hours = BTreeSet::new();
    for cfg in &runs {
        let report = run_scenario(cfg.clone()).map_err(fail("scenario"))?;
        let u = &report.update;
        ensure!(
            !u.visible_before_cycle,
            "seed {}: {} was visible before any cycle",
            cfg.seed,
            u.page
        );
        ensure!(
            u.latency_cycles == Some(1),
            "seed {} ({:?}): {} became visible after {:?} cycles",
            cfg.seed,
            cfg.transport,
            u.page,
            u.latency_cycles
        );
        hours.insert(u.latency_hours.unwrap_or(0));
    }
    Ok(format!(
        "{} deployments: modified page invisible before and visible after exactly one cycle ({hours:?} hours)",
        runs.len()
    ))
}

fn traffic() -> Outcome {
    let mut worst_fraction: f64 = 0.0;
    let mut worst_ratio: f64 = 0.0;
    let mut runs = 0;
    for seed in [21, 22, 23] {
        let cfg = ScenarioConfig {
            corpus: CorpusConfig {
                regions: 2,
                domains: 2,
                sites_per_domain: 2,
                pages_per_site: 3,
                vocabulary_size: 2000,
                body_tokens: (2000, 2400),
                unregistered_fraction: 0.2,
                ..CorpusConfig::default()
            },
            seed,
            ..ScenarioConfig::default()
        };
        let report = run_scenario(cfg).map_err(fail("scenario"))?;
        ensure!(report.harvested_records > 0, "seed {seed}: nothing was harvested");
        ensure!(
            report.metadata_fraction <= 0.2,
            "seed {seed}: metadata is {:.3} of the page bytes, so the configuration is not metadata-light",
            report.metadata_fraction
        );
        let ratio = report.harvest_bytes as f64 / report.recrawl_bytes_equivalent as f64;
        ensure!(
            report.harvest_bytes * 2 < report.recrawl_bytes_equivalent,
            "seed {seed}: harvest moved {} bytes against {} for a re-crawl",
            report.harvest_bytes,
            report.recrawl_bytes_equivalent
        );
        worst_fraction = worst_fraction.max(report.metadata_fraction);
        worst_ratio = worst_ratio.max(ratio);
        runs += 1;
    }
    Ok(format!(
        "{runs} scenarios: metadata fraction <= {worst_fraction:.3}, harvest/re-crawl bytes <= {worst_ratio:.3}"
    ))
}

fn text() -> impl Strategy<Value = String> {
    prop_oneof!["[a-z ]{0,12}", "\\PC{0,12}", Just("quote \" back\\slash\nline".to_string())]
}

fn label() -> impl Strategy<Value = String> {
    "[a-z][a-z0-9]{0,5}"
}

fn domain() -> impl Strategy<Value = DomainName> {
    prop::collection::vec(label(), 1..4).prop_map(|l| DomainName::parse(&l.join(".")).unwrap())
}

fn host() -> impl Strategy<Value = Host> {
    prop_oneof![
        domain().prop_map(|d| Host::parse(&d.to_string()).unwrap()),
        (0u8..=255, 0u8..=255).prop_map(|(a, b)| Host::parse(&format!("10.{a}.{b}.7")).unwrap()),
    ]
}

fn url() -> impl Strategy<Value = Url> {
    (host(), "(/[a-z0-9]{1,5}){0,3}").prop_map(|(h, p)| Url::parse(&format!("http://{}{p}", h.as_str())).unwrap())
}

fn version() -> impl Strategy<Value = String> {
    prop_oneof![Just(PROTOCOL_VERSION.to_string()), (0u32..=1, 0u32..20).prop_map(|(a, b)| format!("{a}.{b}"))]
}

fn class_name() -> impl Strategy<Value = String> {
    domain().prop_map(|d| d.class_name())
}

fn child_status(allow_ok: bool) -> impl Strategy<Value = ChildStatus> {
    let states = if allow_ok {
        vec![ChildState::Ok, ChildState::Failed, ChildState::Timeout]
    } else {
        vec![ChildState::Failed, ChildState::Timeout]
    };
    (class_name(), prop::sample::select(states), prop::option::of(text())).prop_map(|(node, status, detail)| {
        ChildStatus { node, status, detail }
    })
}

fn query_request() -> impl Strategy<Value = QueryRequest> {
    (
        version(),
        text(),
        prop::collection::vec("[a-z0-9]{1,8}", 1..5),
        prop::option::of(domain()),
        1usize..500,
    )
        .prop_map(|(version, request_id, query, scope, max_results)| QueryRequest {
            version,
            request_id,
            query,
            scope: scope.map(|d| d.to_string()),
            max_results,
        })
}

fn query_response() -> impl Strategy<Value = QueryResponse> {
    let result = (
        url(),
        0u64..1000,
        prop::collection::btree_set(class_name(), 1..3),
        text(),
        text(),
    );
    (
        version(),
        text(),
        prop::collection::vec(result, 0..6),
        prop::collection::vec(child_status(true), 0..4),
        any::<u64>(),
    )
        .prop_map(|(version, request_id, raw, child_status, elapsed_ms)| {
            let mut seen = BTreeSet::new();
            let mut results: Vec<RankedResult> = raw
                .into_iter()
                .filter(|r| seen.insert(r.0.clone()))
                .map(|(url, score, sources, title, summary)| RankedResult {
                    url,
                    score,
                    sources,
                    title,
                    summary,
                })
                .collect();
            results.sort_by(|a, b| b.score.cmp(&a.score).then_with(|| a.url.cmp(&b.url)));
            QueryResponse {
                version,
                request_id,
                results,
                child_status,
                elapsed_ms,
            }
        })
}

fn metadata_record() -> impl Strategy<Value = MetadataRecord> {
    (
        url(),
        host(),
        text(),
        prop::sample::select(vec!["utf-8", "gb2312", "iso-8859-1"]),
        text(),
        prop::collection::vec(("[a-z]{1,6}", 1u64..50), 0..5),
        0u64..2_000_000_000,
        prop::option::of(0u64..20),
    )
        .prop_map(
            |(url, origin_site, title, encoding, summary, keywords, last_modified, overlap_score)| MetadataRecord {
                url,
                origin_site,
                title,
                encoding: encoding.to_string(),
                summary,
                keywords: keywords.into_iter().map(|(term, score)| KeywordScore { term, score }).collect(),
                last_modified,
                overlap_score,
            },
        )
}

fn harvest_response() -> impl Strategy<Value = HarvestResponse> {
    (version(), prop::collection::vec(metadata_record(), 0..4), 0u64..1000, any::<bool>()).prop_map(
        |(version, records, slack, truncated)| HarvestResponse {
            max_timestamp: records.iter().map(|r| r.last_modified).max().unwrap_or(0) + slack,
            version,
            records,
            truncated,
        },
    )
}

fn harvest_run_response() -> impl Strategy<Value = HarvestRunResponse> {
    (
        version(),
        any::<u64>(),
        any::<u64>(),
        prop::collection::btree_map(class_name(), any::<u64>(), 0..4),
        prop::collection::vec(child_status(false), 0..3),
    )
        .prop_map(|(version, records, bytes, cursors, failures)| HarvestRunResponse {
            version,
            records,
            bytes,
            cursors,
            failures,
        })
}

fn descriptor() -> impl Strategy<Value = ServiceDescriptor> {
    (
        domain(),
        "(http://127\\.0\\.0\\.1:[0-9]{2,5}|mem://[a-z]{1,8})",
        prop::sample::select(vec![NodeKind::Layer3, NodeKind::Layer2, NodeKind::Top]),
    )
        .prop_map(|(d, endpoint, kind)| ServiceDescriptor::new(d, endpoint, kind))
}

fn register_request() -> impl Strategy<Value = RegisterRequest> {
    (version(), descriptor()).prop_map(|(version, descriptor)| RegisterRequest { version, descriptor })
}

fn registry_dump() -> impl Strategy<Value = RegistryDump> {
    let entry = (descriptor(), prop::collection::vec(class_name(), 0..3))
        .prop_map(|(descriptor, children)| RegistryEntry { descriptor, children });
    (version(), prop::collection::vec(entry, 0..4)).prop_map(|(version, nodes)| RegistryDump { version, nodes })
}

fn error_body() -> impl Strategy<Value = ErrorBody> {
    (
        version(),
        prop::sample::select(vec!["bad_request", "unavailable", "protocol", "internal"]),
        text(),
    )
        .prop_map(|(version, code, message)| ErrorBody {
            version,
            code: code.to_string(),
            message,
        })
}

#[derive(Debug, Clone)]
enum AnyMessage {
    QueryRequest(QueryRequest),
    QueryResponse(QueryResponse),
    HarvestResponse(HarvestResponse),
    HarvestRunResponse(HarvestRunResponse),
    RegisterRequest(RegisterRequest),
    RegistryDump(RegistryDump),
    ErrorBody(ErrorBody),
}

fn any_message() -> impl Strategy<Value = AnyMessage> {
    prop_oneof![
        query_request().prop_map(AnyMessage::QueryRequest),
        query_response().prop_map(AnyMessage::QueryResponse),
        harvest_response().prop_map(AnyMessage::HarvestResponse),
        harvest_run_response().prop_map(AnyMessage::HarvestRunResponse),
        register_request().prop_map(AnyMessage::RegisterRequest),
        registry_dump().prop_map(AnyMessage::RegistryDump),
        error_body().prop_map(AnyMessage::ErrorBody),
    ]
}

fn round_trip<M: Message + PartialEq + std::fmt::Debug>(m: &M) -> Result<(), TestCaseError> {
    let bytes = encode(m);
    let back: M = decode(&bytes).map_err(|e| TestCaseError::fail(format!("{e}: {}", String::from_utf8_lossy(&bytes))))?;
    prop_assert_eq!(&back, m);
    prop_assert_eq!(encode(&back), bytes);
    Ok(())
}

/// Decodes a frozen fixture and checks that re-encoding reproduces it byte for byte.
fn golden<M: Message>(dir: &Path, name: &str) -> Result<M, String> {
    let path = dir.join(format!("{name}.json"));
    let bytes = fs::read(&path).map_err(|e| format!("{}: {e}", path.display()))?;
    let message: M = decode(&bytes).map_err(|e| format!("{name}: {e}"))?;
    ensure!(encode(&message) == bytes, "{name} does not re-encode to the same bytes");
    Ok(message)
}

fn protocol() -> Outcome {
    let mut runner = TestRunner::new(ProptestConfig {
        cases: 1000,
        failure_persistence: None,
        ..ProptestConfig::default()
    });
    let mut kinds = BTreeMap::new();
    let counts = std::cell::RefCell::new(&mut kinds);
    runner
        .run(&any_message(), |m| {
            let kind = match &m {
                AnyMessage::QueryRequest(m) => round_trip(m).map(|_| "query_request"),
                AnyMessage::QueryResponse(m) => round_trip(m).map(|_| "query_response"),
                AnyMessage::HarvestResponse(m) => round_trip(m).map(|_| "harvest_response"),
                AnyMessage::HarvestRunResponse(m) => round_trip(m).map(|_| "harvest_run_response"),
                AnyMessage::RegisterRequest(m) => round_trip(m).map(|_| "register_request"),
                AnyMessage::RegistryDump(m) => round_trip(m).map(|_| "registry_dump"),
                AnyMessage::ErrorBody(m) => round_trip(m).map(|_| "error_body"),
            }?;
            *counts.borrow_mut().entry(kind).or_insert(0) += 1;
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    let total: usize = kinds.values().sum();
    ensure!(total >= 1000, "only {total} messages were generated");
    ensure!(kinds.len() == 7, "only {} message types were generated", kinds.len());

    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures/protocol");
    let q: QueryRequest = golden(&dir, "query_request")?;
    ensure!(q.query == ["red", "fox"] && q.scope.as_deref() == Some("edu.cn"), "query_request fields differ");
    let r: QueryResponse = golden(&dir, "query_response")?;
    ensure!(
        r.results.len() == 1 && r.results[0].summary == "red fox jumps" && r.child_status[1].status == ChildState::Timeout,
        "query_response fields differ"
    );
    let h: HarvestResponse = golden(&dir, "harvest_response")?;
    ensure!(h.records.len() == 2 && h.records[1].overlap_score == Some(2), "harvest_response fields differ");
    let run: HarvestRunResponse = golden(&dir, "harvest_run_response")?;
    ensure!(run.records == 42 && run.failures.len() == 1, "harvest_run_response fields differ");
    let reg: RegisterRequest = golden(&dir, "register_request")?;
    ensure!(reg.descriptor.class_name == "DRIS.cn.edu.hust", "register_request fields differ");
    let dump: RegistryDump = golden(&dir, "registry_dump")?;
    ensure!(
        dump.nodes.len() == 2 && dump.nodes[0].children == ["DRIS.cn.edu.hust"],
        "registry_dump fields differ"
    );
    let err: ErrorBody = golden(&dir, "error_body")?;
    ensure!(err.code == "bad_request", "error_body fields differ");
    Ok(format!("{total} random messages of 7 types round-trip exactly; 7 frozen fixtures decode and re-encode bit-exactly"))
}

/// Top-layer answer expected when only `survivors` answer.
fn survivors_merged(answers: &[(String, QueryResponse)], max: usize) -> Vec<RankedResult> {
    let lists: Vec<(String, Vec<RankedResult>)> =
        answers.iter().map(|(db, r)| (db.clone(), r.results.clone())).collect();
    let mut merged = merge_results(&lists).expect("layer-2 answers merge");
    merged.truncate(max);
    merged
}

fn fault_case(transport: Transport, hang: bool) -> Result<String, String> {
    let cfg = ScenarioConfig {
        transport,
        latency: dris::scenario::Latency {
            timeout_ms: 300,
            ..dris::scenario::Latency::default()
        },
        ..small_deployment(9, 3)
    };
    let timeout = Duration::from_millis(cfg.latency.timeout_ms);
    block_on(&cfg, async {
        let s = Scenario::build(cfg.clone()).await.map_err(fail("build"))?;
        s.harvest().await.map_err(fail("harvest"))?;
        let regions: Vec<DomainName> = s.layer2().iter().map(|n| n.domain()).collect();
        ensure!(regions.len() == 3, "expected 3 layer-2 nodes, got {}", regions.len());
        let victim = 1;
        let page = s
            .corpus()
            .pages()
            .find(|p| region_of(s.corpus(), p.host()) != regions[victim])
            .expect("a surviving region has pages");
        let terms = vec![page.body[0].clone()];
        let max = 10_000;

        let mut survivors = Vec::new();
        for (i, region) in regions.iter().enumerate() {
            if i != victim {
                let request = QueryRequest::new(format!("direct{i}"), terms.clone(), max).with_scope(region.to_string());
                let answer = s.layer2_client(i).search(request).await.map_err(fail("direct layer-2 query"))?;
                survivors.push((region.class_name(), answer));
            }
        }
        let expected = survivors_merged(&survivors, max);
        ensure!(!expected.is_empty(), "survivors have no hits for {terms:?}");

        if hang {
            s.hang_layer2(victim).map_err(fail("hang"))?;
        } else {
            s.kill_layer2(victim);
        }
        let started = Instant::now();
        let response = s
            .query(QueryRequest::new("faulty", terms.clone(), max))
            .await
            .map_err(fail("top query"))?;
        let wall = started.elapsed();

        ensure!(response.results == expected, "top results are not the merge of the survivors' answers");
        let dead = regions[victim].class_name();
        let wanted = if hang { ChildState::Timeout } else { ChildState::Failed };
        for st in &response.child_status {
            let want = if st.node == dead { wanted } else { ChildState::Ok };
            ensure!(st.status == want, "{} reported {} instead of {}", st.node, st.status, want);
        }
        ensure!(response.child_status.len() == 3, "{} statuses reported", response.child_status.len());
        ensure!(
            response.elapsed_ms <= cfg.latency.timeout_ms,
            "answered after {} ms, beyond the {} ms timeout",
            response.elapsed_ms,
            cfg.latency.timeout_ms
        );
        if transport == Transport::Loopback {
            ensure!(wall < timeout, "loopback answer took {wall:?}");
        }
        Ok(format!(
            "{:?}/{}: {} results, {} {} in {} ms",
            transport,
            if hang { "hang" } else { "kill" },
            response.results.len(),
            dead,
            wanted,
            response.elapsed_ms
        ))
    })
}

fn fault_tolerance() -> Outcome {
    let cases = [
        fault_case(Transport::InProcess, false)?,
        fault_case(Transport::InProcess, true)?,
        fault_case(Transport::Loopback, false)?,
    ];
    Ok(cases.join("; "))
}
