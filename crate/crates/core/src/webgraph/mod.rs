//! Domains, sites, pages and synthetic corpora.

mod generate;
mod name;
mod page;
mod store;

pub use generate::{generate_corpus, vocabulary_word, CorpusConfig, BASE_TIME};
pub use name::{is_under, parse_domain, reverse_class_name, DomainName, Host, NameError, Url, CLASS_ROOT};
pub(crate) use name::strip_class_root;
pub use page::{Corpus, CorpusError, Page, Site, Timestamp};
pub use store::{page_from_str, page_to_string, read_corpus, write_corpus, StoreError};
