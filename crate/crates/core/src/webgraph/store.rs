//! On-disk corpus layout.
//!
//! ```text
//! <dir>/dns.tsv                  domain <TAB> address-block <TAB> host,host,...
//! <dir>/unregistered.txt         one host per line
//! <dir>/pages/<host>/<n>.page    header lines, a blank line, then the body
//! ```
//!
//! A page file holds `url:`, `title:`, `encoding:`, `last_modified:` in that
//! order, then one `link:` line per outbound link, a blank line, and the body
//! tokens separated by single spaces on one line. See `docs/formats.md`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use ipnet::Ipv4Net;
use thiserror::Error;

use super::name::{DomainName, Host, Url};
use super::page::{Corpus, CorpusError, Page};

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Format {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn format_err(path: &Path, line: usize, message: impl Into<String>) -> StoreError {
    StoreError::Format {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

pub fn page_to_string(page: &Page) -> String {
    let mut out = String::new();
    // Header values are single-line; newlines in titles are folded to spaces.
    let title = page.title.replace(['\n', '\r'], " ");
    let _ = writeln!(out, "url: {}", page.url);
    let _ = writeln!(out, "title: {title}");
    let _ = writeln!(out, "encoding: {}", page.encoding);
    let _ = writeln!(out, "last_modified: {}", page.last_modified);
    for link in &page.links {
        let _ = writeln!(out, "link: {link}");
    }
    out.push('\n');
    out.push_str(&page.body.join(" "));
    out.push('\n');
    out
}

pub fn page_from_str(text: &str, path: &Path) -> Result<Page, StoreError> {
    let mut lines = text.split('\n').enumerate();
    let mut header = |key: &str| -> Result<String, StoreError> {
        let (n, line) = lines
            .next()
            .ok_or_else(|| format_err(path, 0, format!("missing `{key}`")))?;
        line.strip_prefix(key)
            .and_then(|rest| rest.strip_prefix(": ").or_else(|| rest.strip_prefix(':')))
            .map(str::to_string)
            .ok_or_else(|| format_err(path, n + 1, format!("expected `{key}:`")))
    };
    let url = header("url")?;
    let title = header("title")?;
    let encoding = header("encoding")?;
    let last_modified = header("last_modified")?;
    let url = Url::parse(&url).map_err(|e| format_err(path, 1, e.to_string()))?;
    let last_modified = last_modified
        .trim()
        .parse()
        .map_err(|_| format_err(path, 4, "last_modified is not an integer"))?;

    let mut links = Vec::new();
    let mut body = Vec::new();
    for (n, line) in lines.by_ref() {
        if line.is_empty() {
            break;
        }
        let target = line
            .strip_prefix("link: ")
            .ok_or_else(|| format_err(path, n + 1, "expected `link:` or blank line"))?;
        links.push(Url::parse(target).map_err(|e| format_err(path, n + 1, e.to_string()))?);
    }
    if let Some((_, line)) = lines.next() {
        body = line.split(' ').filter(|t| !t.is_empty()).map(str::to_string).collect();
    }
    Ok(Page {
        url,
        title,
        body,
        links,
        encoding,
        last_modified,
    })
}

/// Writes `corpus` under `dir`, which is created if needed.
pub fn write_corpus(corpus: &Corpus, dir: &Path) -> Result<(), StoreError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;

    let mut dns = String::new();
    for (domain, hosts) in corpus.dns_table() {
        let block = corpus
            .address_blocks()
            .get(domain)
            .map(ToString::to_string)
            .unwrap_or_else(|| "-".into());
        let hosts: Vec<&str> = hosts.iter().map(Host::as_str).collect();
        let _ = writeln!(dns, "{domain}\t{block}\t{}", hosts.join(","));
    }
    let dns_path = dir.join("dns.tsv");
    fs::write(&dns_path, dns).map_err(io_err(&dns_path))?;

    let mut unregistered = String::new();
    for host in corpus.unregistered() {
        let _ = writeln!(unregistered, "{host}");
    }
    let unreg_path = dir.join("unregistered.txt");
    fs::write(&unreg_path, unregistered).map_err(io_err(&unreg_path))?;

    let pages_dir = dir.join("pages");
    for (host, site) in corpus.sites() {
        let site_dir = pages_dir.join(host.as_str());
        fs::create_dir_all(&site_dir).map_err(io_err(&site_dir))?;
        for (n, page) in site.pages.values().enumerate() {
            let path = site_dir.join(format!("{n:05}.page"));
            fs::write(&path, page_to_string(page)).map_err(io_err(&path))?;
        }
    }
    Ok(())
}

pub fn read_corpus(dir: &Path) -> Result<Corpus, StoreError> {
    let dns_path = dir.join("dns.tsv");
    let text = fs::read_to_string(&dns_path).map_err(io_err(&dns_path))?;
    let mut dns = BTreeMap::new();
    let mut blocks = BTreeMap::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 3 {
            return Err(format_err(&dns_path, n + 1, "expected 3 tab-separated columns"));
        }
        let domain = DomainName::parse(cols[0]).map_err(|e| format_err(&dns_path, n + 1, e.to_string()))?;
        if cols[1] != "-" {
            let block: Ipv4Net = cols[1]
                .parse()
                .map_err(|_| format_err(&dns_path, n + 1, "bad address block"))?;
            blocks.insert(domain.clone(), block);
        }
        let hosts = cols[2]
            .split(',')
            .filter(|h| !h.is_empty())
            .map(|h| Host::parse(h).map_err(|e| format_err(&dns_path, n + 1, e.to_string())))
            .collect::<Result<BTreeSet<_>, _>>()?;
        dns.insert(domain, hosts);
    }

    let unreg_path = dir.join("unregistered.txt");
    let text = fs::read_to_string(&unreg_path).map_err(io_err(&unreg_path))?;
    let unregistered = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| Host::parse(l.trim()).map_err(|e| format_err(&unreg_path, n + 1, e.to_string())))
        .collect::<Result<BTreeSet<_>, _>>()?;

    let mut pages = Vec::new();
    let pages_dir = dir.join("pages");
    if pages_dir.exists() {
        for site_entry in fs::read_dir(&pages_dir).map_err(io_err(&pages_dir))? {
            let site_dir = site_entry.map_err(io_err(&pages_dir))?.path();
            if !site_dir.is_dir() {
                continue;
            }
            for entry in fs::read_dir(&site_dir).map_err(io_err(&site_dir))? {
                let path = entry.map_err(io_err(&site_dir))?.path();
                if path.extension().is_some_and(|e| e == "page") {
                    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
                    pages.push(page_from_str(&text, &path)?);
                }
            }
        }
    }
    Ok(Corpus::new(pages, dns, blocks, unregistered)?)
}
