//! Quality checks for static websites: recursive link checking, link
//! extraction from JSON data files, structural HTML validation and
//! XML configuration subset checks, with CI-friendly output.

pub mod cli;
pub mod crawler;
mod error;
pub mod html;
pub mod json_links;
pub mod model;
pub mod probe;
pub mod report;
pub mod scaffold;
pub mod server;
pub mod url;
mod walk;
pub mod xml_subset;

pub use error::Error;
pub use model::{
    merge_reports, BrokenReason, CheckKind, CheckStatus, Code, Finding, LinkRecord, Location, Report, Severity,
    SkipReason, SourceKind,
};
pub use url::{classify_scope, normalize_url, NormalizedUrl, Scope, UrlError};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
