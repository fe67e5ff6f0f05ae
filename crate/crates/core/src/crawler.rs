//! Breadth-first link crawler.
//!
//! The crawl proceeds one depth level at a time. All URLs of a level are
//! fetched or probed concurrently (bounded globally and per host); the
//! results are then folded back in frontier order, so the visited set,
//! depths and report are identical for any concurrency setting.
//!
//! Internal URLs are fetched with `GET` and, when the response is HTML,
//! parsed for further links. External URLs are probed only when
//! `check_external` is set and are never recursed into.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::future::Future;
use std::sync::Arc;
use std::time::Duration;

use regex::Regex;
use tokio::sync::Semaphore;
use tokio::task::JoinSet;

use crate::html::{extract_links, parse_document, UnresolvedLink};
use crate::model::{CheckKind, CheckStatus, Code, Finding, LinkRecord, Location, Report, SkipReason, SourceKind};
use crate::probe::{Fetched, ProbePolicy, Prober};
use crate::url::{classify_scope, NormalizedUrl, Scope};
use crate::Error;

#[derive(Debug, Clone)]
pub struct CrawlOptions {
    pub check_external: bool,
    pub max_pages: usize,
    pub max_depth: Option<usize>,
    pub concurrency: usize,
    pub per_host_concurrency: usize,
    /// Regular expressions searched in the serialized URL.
    pub exclude_patterns: Vec<String>,
    pub probe_policy: ProbePolicy,
    /// Pause before each request to the same host.
    pub delay: Duration,
    pub respect_robots: bool,
}

impl Default for CrawlOptions {
    fn default() -> Self {
        CrawlOptions {
            check_external: false,
            max_pages: 10_000,
            max_depth: None,
            concurrency: 8,
            per_host_concurrency: 2,
            exclude_patterns: Vec::new(),
            probe_policy: ProbePolicy::default(),
            delay: Duration::ZERO,
            respect_robots: false,
        }
    }
}

impl CrawlOptions {
    pub fn validate(&self) -> Result<(), Error> {
        if self.concurrency == 0 || self.per_host_concurrency == 0 {
            return Err(Error::Usage("concurrency limits must be at least 1".into()));
        }
        if self.per_host_concurrency > self.concurrency {
            return Err(Error::Usage(
                "per-host concurrency cannot exceed total concurrency".into(),
            ));
        }
        self.probe_policy.validate()?;
        Ok(())
    }

    fn compiled_excludes(&self) -> Result<Vec<Regex>, Error> {
        self.exclude_patterns
            .iter()
            .map(|p| Regex::new(p).map_err(|e| Error::Pattern(p.clone(), e.to_string())))
            .collect()
    }
}

/// Bounded pool of concurrent network tasks: at most `total` at once and at
/// most `per_host` against any one `scheme://host:port`.
#[derive(Debug, Clone)]
pub struct ProbePool {
    global: Arc<Semaphore>,
    per_host: usize,
    hosts: HashMap<String, Arc<Semaphore>>,
    delay: Duration,
}

impl ProbePool {
    pub fn new(total: usize, per_host: usize, delay: Duration) -> Self {
        ProbePool {
            global: Arc::new(Semaphore::new(total.max(1))),
            per_host: per_host.max(1),
            hosts: HashMap::new(),
            delay,
        }
    }

    /// Runs `job` for every URL and returns the outputs in input order.
    pub async fn run<T, F, Fut>(&mut self, urls: &[NormalizedUrl], job: F) -> Vec<T>
    where
        T: Send + 'static,
        F: Fn(NormalizedUrl) -> Fut,
        Fut: Future<Output = T> + Send + 'static,
    {
        let mut set = JoinSet::new();
        for (i, url) in urls.iter().enumerate() {
            let host = Arc::clone(
                self.hosts
                    .entry(url.origin())
                    .or_insert_with(|| Arc::new(Semaphore::new(self.per_host))),
            );
            let global = Arc::clone(&self.global);
            let delay = self.delay;
            let fut = job(url.clone());
            set.spawn(async move {
                let _host = host.acquire_owned().await.expect("semaphore closed");
                let _slot = global.acquire_owned().await.expect("semaphore closed");
                if !delay.is_zero() {
                    tokio::time::sleep(delay).await;
                }
                (i, fut.await)
            });
        }
        let mut out: Vec<Option<T>> = (0..urls.len()).map(|_| None).collect();
        while let Some(joined) = set.join_next().await {
            let (i, value) = joined.expect("probe task panicked");
            out[i] = Some(value);
        }
        out.into_iter().map(|v| v.expect("every task reports")).collect()
    }
}

/// Everything a crawl learned. `report` is the user-facing summary.
#[derive(Debug, Clone)]
pub struct CrawlOutcome {
    pub report: Report,
    /// Every URL that was claimed for checking, whatever happened to it.
    pub visited: BTreeSet<NormalizedUrl>,
    /// Internal HTML pages that were parsed for links.
    pub pages: BTreeSet<NormalizedUrl>,
    pub results: BTreeMap<NormalizedUrl, CheckStatus>,
    /// Every link record pointing at each URL.
    pub origins: BTreeMap<NormalizedUrl, Vec<LinkRecord>>,
    /// Number of HTTP probes/fetches issued (one per checked URL).
    pub requests: usize,
}

enum Action {
    Fetch,
    Probe,
    Skip(SkipReason),
}

enum TaskResult {
    Fetched(Fetched),
    Probed(CheckStatus),
}

/// Crawls from `seed`. Fails only on invalid options; an unreachable seed is
/// reported as `LINK_SEED_UNREACHABLE`.
pub async fn crawl(seed: &NormalizedUrl, options: &CrawlOptions) -> Result<CrawlOutcome, Error> {
    options.validate()?;
    let excludes = options.compiled_excludes()?;
    let prober = Prober::new(options.probe_policy.clone())?;
    let mut pool = ProbePool::new(options.concurrency, options.per_host_concurrency, options.delay);

    let mut report = Report::started_now();
    let robots = if options.respect_robots {
        Robots::fetch(&prober, seed).await
    } else {
        Robots::default()
    };

    let mut visited: BTreeSet<NormalizedUrl> = BTreeSet::new();
    let mut pages: BTreeSet<NormalizedUrl> = BTreeSet::new();
    let mut results: BTreeMap<NormalizedUrl, CheckStatus> = BTreeMap::new();
    let mut origins: BTreeMap<NormalizedUrl, Vec<LinkRecord>> = BTreeMap::new();
    let mut invalid: Vec<UnresolvedLink> = Vec::new();
    let mut requests = 0usize;
    let mut internal_claimed = 1usize;

    visited.insert(seed.clone());
    origins.entry(seed.clone()).or_default().push(LinkRecord {
        target: seed.clone(),
        origin: Location::argument(seed.to_string()),
        source_kind: SourceKind::CliSeed,
        scope: Scope::Internal,
    });

    let mut level = vec![seed.clone()];
    let mut depth = 0usize;
    while !level.is_empty() {
        let actions: Vec<Action> = level
            .iter()
            .map(|url| {
                let is_seed = url == seed;
                let excluded = excludes.iter().any(|re| re.is_match(&url.to_string())) || robots.disallows(seed, url);
                if !is_seed && excluded {
                    Action::Skip(SkipReason::ExcludedByPattern)
                } else if classify_scope(seed, url) == Scope::Internal {
                    Action::Fetch
                } else if options.check_external {
                    Action::Probe
                } else {
                    Action::Skip(SkipReason::ExternalNotChecked)
                }
            })
            .collect();

        let network: Vec<NormalizedUrl> = level
            .iter()
            .zip(&actions)
            .filter(|(_, a)| !matches!(a, Action::Skip(_)))
            .map(|(u, _)| u.clone())
            .collect();
        let fetch_set: BTreeSet<NormalizedUrl> = level
            .iter()
            .zip(&actions)
            .filter(|(_, a)| matches!(a, Action::Fetch))
            .map(|(u, _)| u.clone())
            .collect();
        requests += network.len();

        let fetch_set = Arc::new(fetch_set);
        let seed_arc = Arc::new(seed.clone());
        let check_external = options.check_external;
        let outputs = pool
            .run(&network, |url| {
                let prober = prober.clone();
                let fetch_set = Arc::clone(&fetch_set);
                let seed = Arc::clone(&seed_arc);
                async move {
                    if fetch_set.contains(&url) {
                        let allow = move |next: &NormalizedUrl| check_external || next.same_authority(&seed);
                        TaskResult::Fetched(prober.fetch_page(&url, &allow).await)
                    } else {
                        TaskResult::Probed(prober.probe(&url).await)
                    }
                }
            })
            .await;
        let mut outputs = network.into_iter().zip(outputs).collect::<HashMap<_, _>>();

        let mut next_level = Vec::new();
        let recurse = options.max_depth.is_none_or(|max| depth < max);
        for (url, action) in level.iter().zip(actions) {
            let output = match action {
                Action::Skip(reason) => {
                    results.insert(url.clone(), CheckStatus::Skipped(reason));
                    continue;
                }
                _ => outputs.remove(url).expect("network task result"),
            };
            let fetched = match output {
                TaskResult::Probed(status) => {
                    results.insert(url.clone(), status);
                    continue;
                }
                TaskResult::Fetched(fetched) => fetched,
            };
            results.insert(url.clone(), fetched.status.clone());
            let Some(body) = fetched.html else { continue };
            if !fetched.final_url.same_authority(seed) {
                continue;
            }
            pages.insert(fetched.final_url.clone());
            if fetched.final_url != *url {
                visited.insert(fetched.final_url.clone());
            }

            let doc = parse_document(&body, Location::url(url.to_string()));
            let extraction = extract_links(&doc, &fetched.final_url);
            invalid.extend(extraction.unresolved.into_iter().filter(|u| u.status.is_broken()));
            for mut link in extraction.links {
                link.scope = classify_scope(seed, &link.target);
                let target = link.target.clone();
                origins.entry(target.clone()).or_default().push(link);
                if !recurse || visited.contains(&target) {
                    continue;
                }
                if classify_scope(seed, &target) == Scope::Internal {
                    if internal_claimed >= options.max_pages {
                        log::warn!("page limit {} reached; not visiting {target}", options.max_pages);
                        continue;
                    }
                    internal_claimed += 1;
                }
                visited.insert(target.clone());
                next_level.push(target);
            }
        }
        level = next_level;
        depth += 1;
    }

    report.count(CheckKind::Link, requests as u64);

    let seed_status = results
        .get(seed)
        .cloned()
        .unwrap_or(CheckStatus::Skipped(SkipReason::ExcludedByPattern));
    if !seed_status.is_success() {
        report.push(Finding::error(
            CheckKind::Link,
            Code::LinkSeedUnreachable,
            Location::argument(seed.to_string()),
            format!("seed {seed} is unreachable: {seed_status}"),
        ));
    } else {
        report.extend(broken_link_findings(&results, &origins, seed));
        report.extend(invalid.into_iter().map(|u| {
            Finding::error(
                CheckKind::Link,
                Code::LinkBroken,
                u.origin,
                format!("invalid URL `{}` in {}", u.raw, u.source_kind),
            )
        }));
    }
    report.finish();

    Ok(CrawlOutcome {
        report,
        visited,
        pages,
        results,
        origins,
        requests,
    })
}

/// One `LINK_BROKEN` per broken URL, located at its first referrer and
/// listing the others as related locations.
fn broken_link_findings(
    results: &BTreeMap<NormalizedUrl, CheckStatus>,
    origins: &BTreeMap<NormalizedUrl, Vec<LinkRecord>>,
    seed: &NormalizedUrl,
) -> Vec<Finding> {
    let mut findings = Vec::new();
    for (url, status) in results {
        let CheckStatus::Broken(reason) = status else {
            continue;
        };
        if url == seed {
            continue;
        }
        let mut locations: Vec<Location> = origins
            .get(url)
            .into_iter()
            .flatten()
            .filter(|r| r.source_kind != SourceKind::CliSeed)
            .map(|r| r.origin.clone())
            .collect();
        locations.sort();
        locations.dedup();
        let Some(first) = locations.first().cloned() else {
            continue;
        };
        let mut message = format!("broken link to {url} ({reason})");
        if locations.len() > 1 {
            message.push_str(&format!("; referenced from {} places", locations.len()));
        }
        findings.push(
            Finding::error(CheckKind::Link, Code::LinkBroken, first, message).with_related(locations[1..].to_vec()),
        );
    }
    findings
}

/// `Disallow` prefixes from a robots.txt group matching `*` or `sitecheck`.
#[derive(Debug, Clone, Default)]
struct Robots {
    disallow: Vec<String>,
}

impl Robots {
    async fn fetch(prober: &Prober, seed: &NormalizedUrl) -> Robots {
        let Ok(url) = seed.join("/robots.txt") else {
            return Robots::default();
        };
        let fetched = prober.fetch_text(&url).await;
        fetched.map(|t| Robots::parse(&t)).unwrap_or_default()
    }

    fn parse(text: &str) -> Robots {
        let mut disallow = Vec::new();
        let mut group_applies = false;
        let mut in_agents = false;
        for line in text.lines() {
            let line = line.split('#').next().unwrap_or("").trim();
            let Some((key, value)) = line.split_once(':') else {
                continue;
            };
            let (key, value) = (key.trim().to_ascii_lowercase(), value.trim());
            match key.as_str() {
                "user-agent" => {
                    if !in_agents {
                        group_applies = false;
                    }
                    in_agents = true;
                    let agent = value.to_ascii_lowercase();
                    if agent == "*" || agent.starts_with("sitecheck") {
                        group_applies = true;
                    }
                }
                "disallow" => {
                    in_agents = false;
                    if group_applies && !value.is_empty() {
                        disallow.push(value.to_string());
                    }
                }
                _ => in_agents = false,
            }
        }
        Robots { disallow }
    }

    fn disallows(&self, seed: &NormalizedUrl, url: &NormalizedUrl) -> bool {
        url.same_authority(seed)
            && self
                .disallow
                .iter()
                .any(|prefix| url.path_and_query().starts_with(prefix.as_str()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn options_validation() {
        assert!(CrawlOptions::default().validate().is_ok());
        let bad = CrawlOptions {
            concurrency: 1,
            per_host_concurrency: 2,
            ..CrawlOptions::default()
        };
        assert!(bad.validate().is_err());
        let bad_pattern = CrawlOptions {
            exclude_patterns: vec!["(".into()],
            ..CrawlOptions::default()
        };
        assert!(bad_pattern.compiled_excludes().is_err());
    }

    #[test]
    fn robots_groups() {
        let robots =
            Robots::parse("User-agent: googlebot\nDisallow: /g\n\nUser-agent: *\nDisallow: /private # x\nDisallow:\n");
        assert_eq!(robots.disallow, ["/private"]);
        let seed = NormalizedUrl::parse("http://h/").unwrap();
        assert!(robots.disallows(&seed, &seed.join("/private/a").unwrap()));
        assert!(!robots.disallows(&seed, &seed.join("/g").unwrap()));
        assert!(!robots.disallows(&seed, &NormalizedUrl::parse("http://x/private").unwrap()));
    }

    #[test]
    fn broken_findings_list_every_origin() {
        let seed = NormalizedUrl::parse("http://h/").unwrap();
        let target = seed.join("/gone").unwrap();
        let mut results = BTreeMap::new();
        results.insert(
            target.clone(),
            CheckStatus::Broken(crate::BrokenReason::HttpStatus(404)),
        );
        let rec = |page: &str, line| LinkRecord {
            target: target.clone(),
            origin: Location::url(page).at(line, None),
            source_kind: SourceKind::HtmlAttr("href".into()),
            scope: Scope::Internal,
        };
        let mut origins = BTreeMap::new();
        origins.insert(target.clone(), vec![rec("http://h:80/b", 3), rec("http://h:80/a", 7)]);
        let findings = broken_link_findings(&results, &origins, &seed);
        assert_eq!(findings.len(), 1);
        assert_eq!(findings[0].location.source, "http://h:80/a");
        assert_eq!(findings[0].related.len(), 1);
        assert!(findings[0].message.contains("referenced from 2 places"));
    }
}
