//! Command-line front end.
//!
//! Settings resolve in this order: command-line flag, then the JSON config
//! file, then `SITECHECK_TIMEOUT` (timeout only), then built-in defaults.

use std::ffi::OsString;
use std::io::Write;
use std::net::IpAddr;
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use crate::crawler::{crawl, CrawlOptions};
use crate::html::{check_html_dir, HtmlRuleSet};
use crate::json_links::{check_json_links, JsonLinkOptions};
use crate::model::{CheckKind, Code, Finding, Location, Report};
use crate::probe::{check_reachable, parse_seconds, ProbeMethod, ProbePolicy};
use crate::report::{exit_code, render, OutputFormat};
use crate::scaffold::{scaffold_workflow_with, DailyTime, WorkflowKind, CHECKOUT_VERSION};
use crate::server::{serve, serve_and_crawl};
use crate::xml_subset::{check_xml_tree, DEFAULT_USER_PATTERN};
use crate::{Error, NormalizedUrl};

pub const DEFAULT_CONFIG_FILE: &str = "sitecheck.json";

/// Exit status for usage and internal errors.
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "sitecheck",
    version,
    about = "Quality checks for static websites",
    arg_required_else_help = true,
    propagate_version = true
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Output format: text, json or github
    #[arg(long, global = true, display_order = 1000, value_name = "FORMAT")]
    pub format: Option<OutputFormat>,
    /// Treat warnings as errors
    #[arg(long, global = true, display_order = 1000)]
    pub strict: bool,
    /// Omit run timestamps from the report
    #[arg(long, global = true, display_order = 1000)]
    pub no_timestamps: bool,
    /// JSON config file [default: ./sitecheck.json when present]
    #[arg(long, global = true, display_order = 1000, value_name = "FILE")]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args, Default)]
pub struct ProbeArgs {
    /// Per-request timeout in seconds [default: 10, or SITECHECK_TIMEOUT]
    #[arg(long, value_name = "SECS", value_parser = parse_duration)]
    pub timeout: Option<Duration>,
    /// Retries after a connection failure, timeout, 429 or 503 [default: 2]
    #[arg(long, value_name = "N")]
    pub retries: Option<u32>,
    /// Pause between retries in seconds, 0 allowed [default: 1]
    #[arg(long, value_name = "SECS", value_parser = parse_backoff)]
    pub backoff: Option<Duration>,
    /// Maximum redirects to follow [default: 10]
    #[arg(long, value_name = "N")]
    pub redirect_limit: Option<usize>,
    /// User-Agent header
    #[arg(long, value_name = "TEXT")]
    pub user_agent: Option<String>,
}

#[derive(Debug, Args, Default)]
pub struct PoolArgs {
    /// Maximum requests in flight [default: 8]
    #[arg(long, value_name = "N")]
    pub concurrency: Option<usize>,
    /// Maximum requests in flight per host [default: 2]
    #[arg(long, value_name = "N")]
    pub per_host: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Exit 0 if a URL answers with a success status, 1 if not
    Reach {
        /// Absolute http(s) URL
        url: String,
        #[command(flatten)]
        probe: ProbeArgs,
    },
    /// Crawl a site and report broken links
    Crawl(CrawlArgs),
    /// Check the structure of every .html/.htm file under a directory
    Html {
        /// Directory (or single file) to check
        dir: PathBuf,
        /// Disable a rule by its code, e.g. HTML_UNKNOWN_ELEMENT (repeatable)
        #[arg(long, value_name = "CODE")]
        allow: Vec<Code>,
    },
    /// Check every URL found in the string values of JSON files
    JsonLinks {
        /// Directory searched recursively for .json files
        dir: PathBuf,
        /// Base URL for relative values under keys ending in url, link or href
        #[arg(long, value_name = "URL")]
        base: Option<String>,
        #[command(flatten)]
        pool: PoolArgs,
        #[command(flatten)]
        probe: ProbeArgs,
    },
    /// Check that user XML files only use element paths found in a main file
    XmlSubset {
        /// Main XML file defining the permitted element paths
        #[arg(long, value_name = "FILE")]
        main: PathBuf,
        /// Directory searched for user files (repeatable)
        #[arg(long, value_name = "DIR", required = true)]
        roots: Vec<PathBuf>,
        /// File name glob selecting user files
        #[arg(long, value_name = "GLOB", default_value = DEFAULT_USER_PATTERN)]
        pattern: String,
    },
    /// Serve a directory over HTTP until interrupted
    Serve {
        /// Directory to serve
        dir: PathBuf,
        /// Port; 0 picks a free one
        #[arg(long, default_value_t = 8000)]
        port: u16,
        /// Address to bind
        #[arg(long, value_name = "IP", default_value = "127.0.0.1")]
        bind: IpAddr,
    },
    /// Print a GitHub Actions workflow running one check
    CiInit {
        /// html, links, json-links or xml-subset
        kind: String,
        /// Also run daily at this UTC time (HH:MM)
        #[arg(long, value_name = "HH:MM")]
        schedule: Option<String>,
        /// Version tag of actions/checkout
        #[arg(long, value_name = "TAG", default_value = CHECKOUT_VERSION)]
        checkout_version: String,
        /// Write to this file instead of standard output
        #[arg(long, short, value_name = "FILE")]
        output: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct CrawlArgs {
    /// Seed URL (omit with --serve)
    #[arg(required_unless_present = "serve", conflicts_with = "serve")]
    pub url: Option<String>,
    /// Serve this directory locally and crawl it
    #[arg(long, value_name = "DIR")]
    pub serve: Option<PathBuf>,
    /// Site path to start from when serving
    #[arg(long, value_name = "PATH", default_value = "/index.html", requires = "serve")]
    pub seed: String,
    /// Also probe links leaving the seed's scheme, host and port
    #[arg(long)]
    pub external: bool,
    /// Stop claiming new internal pages after this many [default: 10000]
    #[arg(long, value_name = "N")]
    pub max_pages: Option<usize>,
    /// Maximum link depth from the seed
    #[arg(long, value_name = "N")]
    pub depth: Option<usize>,
    /// Skip URLs matching this regular expression (repeatable)
    #[arg(long, value_name = "REGEX")]
    pub exclude: Vec<String>,
    /// Milliseconds to wait before each request to a host
    #[arg(long, value_name = "MS")]
    pub delay_ms: Option<u64>,
    /// Skip paths disallowed by the site's robots.txt
    #[arg(long)]
    pub respect_robots: bool,
    #[command(flatten)]
    pub pool: PoolArgs,
    #[command(flatten)]
    pub probe: ProbeArgs,
}

fn parse_duration(raw: &str) -> Result<Duration, String> {
    parse_seconds(raw).ok_or_else(|| format!("`{raw}` is not a positive number of seconds"))
}

fn parse_backoff(raw: &str) -> Result<Duration, String> {
    match raw.trim().parse::<f64>() {
        Ok(0.0) => Ok(Duration::ZERO),
        _ => parse_duration(raw),
    }
}

/// Defaults read from the config file. Every field is optional.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToolConfig {
    pub format: Option<OutputFormat>,
    pub strict: Option<bool>,
    pub timeout: Option<f64>,
    pub retries: Option<u32>,
    pub backoff: Option<f64>,
    pub redirect_limit: Option<usize>,
    pub method_order: Option<Vec<ProbeMethod>>,
    pub user_agent: Option<String>,
    pub external: Option<bool>,
    pub max_pages: Option<usize>,
    pub depth: Option<usize>,
    pub exclude: Option<Vec<String>>,
    pub concurrency: Option<usize>,
    pub per_host: Option<usize>,
    pub delay_ms: Option<u64>,
    pub respect_robots: Option<bool>,
}

impl ToolConfig {
    /// Reads `explicit`, or `./sitecheck.json` if it exists, or nothing.
    pub fn load(explicit: Option<&Path>) -> Result<ToolConfig, Error> {
        let path = match explicit {
            Some(p) => p.to_path_buf(),
            None => {
                let p = PathBuf::from(DEFAULT_CONFIG_FILE);
                if !p.is_file() {
                    return Ok(ToolConfig::default());
                }
                p
            }
        };
        let text = std::fs::read_to_string(&path).map_err(|source| Error::Io {
            path: path.clone(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|e| Error::Usage(format!("invalid config file {}: {e}", path.display())))
    }

    fn seconds(value: Option<f64>, name: &str, allow_zero: bool) -> Result<Option<Duration>, Error> {
        value
            .map(|s| {
                if s.is_finite() && (s > 0.0 || (allow_zero && s == 0.0)) {
                    Ok(Duration::from_secs_f64(s))
                } else {
                    Err(Error::Usage(format!(
                        "config: `{name}` must be a positive number of seconds"
                    )))
                }
            })
            .transpose()
    }

    pub fn probe_policy(&self, flags: &ProbeArgs) -> Result<ProbePolicy, Error> {
        let mut p = ProbePolicy::from_env()?;
        if let Some(t) = flags.timeout.or(Self::seconds(self.timeout, "timeout", false)?) {
            p.timeout = t;
        }
        if let Some(b) = flags.backoff.or(Self::seconds(self.backoff, "backoff", true)?) {
            p.backoff = b;
        }
        if let Some(r) = flags.retries.or(self.retries) {
            p.retries = r;
        }
        if let Some(r) = flags.redirect_limit.or(self.redirect_limit) {
            p.redirect_limit = r;
        }
        if let Some(ua) = flags.user_agent.clone().or_else(|| self.user_agent.clone()) {
            p.user_agent = ua;
        }
        if let Some(order) = &self.method_order {
            p.method_order = order.clone();
        }
        p.validate()?;
        Ok(p)
    }

    fn pool(&self, flags: &PoolArgs) -> (usize, usize) {
        let total = flags.concurrency.or(self.concurrency).unwrap_or(8);
        // An unset per-host limit never exceeds the total.
        let per_host = flags.per_host.or(self.per_host).unwrap_or_else(|| 2.min(total.max(1)));
        (total, per_host)
    }

    pub fn crawl_options(&self, args: &CrawlArgs) -> Result<CrawlOptions, Error> {
        let defaults = CrawlOptions::default();
        let (concurrency, per_host_concurrency) = self.pool(&args.pool);
        let exclude = if args.exclude.is_empty() {
            self.exclude.clone().unwrap_or_default()
        } else {
            args.exclude.clone()
        };
        let options = CrawlOptions {
            check_external: args.external || self.external.unwrap_or(false),
            max_pages: args.max_pages.or(self.max_pages).unwrap_or(defaults.max_pages),
            max_depth: args.depth.or(self.depth),
            concurrency,
            per_host_concurrency,
            exclude_patterns: exclude,
            probe_policy: self.probe_policy(&args.probe)?,
            delay: Duration::from_millis(args.delay_ms.or(self.delay_ms).unwrap_or(0)),
            respect_robots: args.respect_robots || self.respect_robots.unwrap_or(false),
        };
        options.validate()?;
        Ok(options)
    }
}

fn runtime() -> Result<tokio::runtime::Runtime, Error> {
    tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|source| Error::Io {
            path: PathBuf::from("<runtime>"),
            source,
        })
}

/// What a subcommand produced before rendering.
enum Outcome {
    Report(Report),
    /// Text already written; carries the exit code.
    Done(i32),
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = out.write_all(text.as_bytes());
                    0
                }
                _ => {
                    let _ = err.write_all(text.as_bytes());
                    EXIT_USAGE
                }
            };
        }
    };
    match execute(cli, out, err) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            EXIT_USAGE
        }
    }
}

fn execute(cli: Cli, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32, Error> {
    let config = ToolConfig::load(cli.global.config.as_deref())?;
    let format = cli.global.format.or(config.format).unwrap_or_default();
    let strict = cli.global.strict || config.strict.unwrap_or(false);

    let outcome = match cli.command {
        Command::Reach { url, probe } => {
            let policy = config.probe_policy(&probe)?;
            let result = runtime()?.block_on(check_reachable(&url, &policy));
            if result.exit_code == EXIT_USAGE {
                let _ = writeln!(err, "{}", result.message);
                return Ok(EXIT_USAGE);
            }
            if format == OutputFormat::Text {
                let _ = writeln!(out, "{}", result.message);
            }
            let mut report = Report::started_now();
            report.count(CheckKind::Reach, 1);
            if result.exit_code != 0 {
                report.push(Finding::error(
                    CheckKind::Reach,
                    Code::ReachFailed,
                    Location::argument(url),
                    result.message,
                ));
            }
            report.finish();
            Outcome::Report(report)
        }
        Command::Crawl(args) => {
            let options = config.crawl_options(&args)?;
            let rt = runtime()?;
            let report = match (&args.serve, &args.url) {
                (Some(dir), _) => rt.block_on(serve_and_crawl(dir, &args.seed, &options))?,
                (None, Some(url)) => {
                    let seed = NormalizedUrl::parse(url)?;
                    rt.block_on(crawl(&seed, &options))?.report
                }
                (None, None) => return Err(Error::Usage("a seed URL or --serve DIR is required".into())),
            };
            Outcome::Report(report)
        }
        Command::Html { dir, allow } => {
            let rules = allow.into_iter().fold(HtmlRuleSet::new(), HtmlRuleSet::allow);
            Outcome::Report(check_html_dir(&dir, &rules)?)
        }
        Command::JsonLinks { dir, base, pool, probe } => {
            let (concurrency, per_host_concurrency) = config.pool(&pool);
            if concurrency == 0 || per_host_concurrency == 0 || per_host_concurrency > concurrency {
                return Err(Error::Usage(
                    "concurrency limits must be at least 1 and per-host cannot exceed total".into(),
                ));
            }
            let options = JsonLinkOptions {
                probe_policy: config.probe_policy(&probe)?,
                base_for_relatives: base.as_deref().map(NormalizedUrl::parse).transpose()?,
                concurrency,
                per_host_concurrency,
            };
            Outcome::Report(runtime()?.block_on(check_json_links(&dir, &options))?)
        }
        Command::XmlSubset { main, roots, pattern } => Outcome::Report(check_xml_tree(&main, &roots, &pattern)?),
        Command::Serve { dir, port, bind } => {
            let handle = serve(&dir, port, bind)?;
            let _ = writeln!(err, "serving {} at {}", dir.display(), handle.base_url());
            handle.wait();
            Outcome::Done(0)
        }
        Command::CiInit {
            kind,
            schedule,
            checkout_version,
            output,
        } => {
            let kind: WorkflowKind = kind.parse()?;
            let schedule = schedule.as_deref().map(str::parse::<DailyTime>).transpose()?;
            let text = scaffold_workflow_with(kind, schedule, &checkout_version);
            match output {
                Some(path) => std::fs::write(&path, text).map_err(|source| Error::Io { path, source })?,
                None => {
                    let _ = out.write_all(text.as_bytes());
                }
            }
            Outcome::Done(0)
        }
    };

    match outcome {
        Outcome::Done(code) => Ok(code),
        Outcome::Report(mut report) => {
            if strict {
                report.promote_warnings();
            }
            if cli.global.no_timestamps {
                report.strip_timestamps();
            }
            let _ = out.write_all(render(&report, format).as_bytes());
            Ok(exit_code(&report))
        }
    }
}
