//! Single-URL HTTP probing.
//!
//! Redirects are followed by hand so the chain can be recorded and bounded.
//! `HEAD` is tried first; a `405`, `501` or any `5xx` answer falls back to
//! `GET`. Connection failures, timeouts, `429` and `503` are retried with a
//! fixed backoff.

use std::time::Duration;

use reqwest::header::{CONTENT_TYPE, LOCATION};
use reqwest::{Client, Method, Response, StatusCode};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{BrokenReason, CheckStatus, SkipReason};
use crate::url::NormalizedUrl;

pub const TIMEOUT_ENV: &str = "SITECHECK_TIMEOUT";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum ProbeMethod {
    Head,
    Get,
}

impl ProbeMethod {
    fn as_reqwest(self) -> Method {
        match self {
            ProbeMethod::Head => Method::HEAD,
            ProbeMethod::Get => Method::GET,
        }
    }
}

impl std::str::FromStr for ProbeMethod {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "HEAD" => Ok(ProbeMethod::Head),
            "GET" => Ok(ProbeMethod::Get),
            other => Err(format!("unsupported probe method `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbePolicy {
    pub timeout: Duration,
    pub retries: u32,
    pub backoff: Duration,
    pub redirect_limit: usize,
    pub method_order: Vec<ProbeMethod>,
    pub user_agent: String,
}

impl Default for ProbePolicy {
    fn default() -> Self {
        ProbePolicy {
            timeout: Duration::from_secs(10),
            retries: 2,
            backoff: Duration::from_secs(1),
            redirect_limit: 10,
            method_order: vec![ProbeMethod::Head, ProbeMethod::Get],
            user_agent: format!("sitecheck/{} (+link-audit)", crate::VERSION),
        }
    }
}

#[derive(Debug, Error)]
pub enum ProbeError {
    #[error("invalid probe policy: {0}")]
    InvalidPolicy(&'static str),
    #[error("invalid value for {TIMEOUT_ENV}: `{0}`")]
    InvalidTimeoutEnv(String),
    #[error("cannot build HTTP client: {0}")]
    Client(#[from] reqwest::Error),
}

impl ProbePolicy {
    /// Built-in defaults with `SITECHECK_TIMEOUT` (seconds) applied.
    pub fn from_env() -> Result<Self, ProbeError> {
        let mut policy = ProbePolicy::default();
        if let Ok(raw) = std::env::var(TIMEOUT_ENV) {
            policy.timeout = parse_seconds(&raw).ok_or(ProbeError::InvalidTimeoutEnv(raw))?;
        }
        Ok(policy)
    }

    pub fn validate(&self) -> Result<(), ProbeError> {
        if self.timeout.is_zero() {
            return Err(ProbeError::InvalidPolicy("timeout must be positive"));
        }
        if self.redirect_limit < 1 {
            return Err(ProbeError::InvalidPolicy("redirect limit must be at least 1"));
        }
        if self.method_order.is_empty() {
            return Err(ProbeError::InvalidPolicy("method order must not be empty"));
        }
        Ok(())
    }

    /// Worst-case wall time of one probe: every attempt times out.
    pub fn latency_bound(&self) -> Duration {
        (self.timeout + self.backoff) * self.retries + self.timeout
    }
}

/// Parses a positive number of seconds, fractional allowed.
pub fn parse_seconds(raw: &str) -> Option<Duration> {
    let secs: f64 = raw.trim().parse().ok()?;
    (secs.is_finite() && secs > 0.0).then(|| Duration::from_secs_f64(secs))
}

/// A fetched internal page: its final status and, for HTML responses, the body.
#[derive(Debug, Clone)]
pub struct Fetched {
    pub status: CheckStatus,
    /// Where the redirect chain ended (or was stopped).
    pub final_url: NormalizedUrl,
    pub html: Option<Vec<u8>>,
}

enum Hop {
    Final(Response, u16),
    Failed(BrokenReason),
    Stopped,
}

struct Chain {
    hops: Vec<NormalizedUrl>,
    end: Hop,
}

/// Reusable probing client. Cheap to clone.
#[derive(Debug, Clone)]
pub struct Prober {
    client: Client,
    policy: ProbePolicy,
}

impl Prober {
    pub fn new(policy: ProbePolicy) -> Result<Self, ProbeError> {
        policy.validate()?;
        let client = Client::builder()
            .redirect(reqwest::redirect::Policy::none())
            .timeout(policy.timeout)
            .connect_timeout(policy.timeout)
            .user_agent(policy.user_agent.clone())
            .no_proxy()
            .build()?;
        Ok(Prober { client, policy })
    }

    pub fn policy(&self) -> &ProbePolicy {
        &self.policy
    }

    /// Classifies `url` without reading response bodies.
    pub async fn probe(&self, url: &NormalizedUrl) -> CheckStatus {
        let mut last = CheckStatus::Broken(BrokenReason::ConnectionFailed);
        let methods = &self.policy.method_order;
        for (i, method) in methods.iter().enumerate() {
            let chain = self.follow(url, *method, &|_| true).await;
            let has_next = i + 1 < methods.len();
            if let Hop::Final(_, code) = &chain.end {
                if *method == ProbeMethod::Head && has_next && head_needs_fallback(*code) {
                    last = classify(chain);
                    continue;
                }
            }
            return classify(chain);
        }
        last
    }

    /// GETs `url`, following redirects while `allow_hop` accepts the next
    /// target. HTML bodies are returned for parsing.
    pub async fn fetch_page(
        &self,
        url: &NormalizedUrl,
        allow_hop: &(dyn Fn(&NormalizedUrl) -> bool + Sync),
    ) -> Fetched {
        let chain = self.follow(url, ProbeMethod::Get, allow_hop).await;
        let final_url = chain.hops.last().unwrap_or(url).clone();
        match chain.end {
            Hop::Stopped => Fetched {
                status: CheckStatus::Skipped(SkipReason::ExternalNotChecked),
                final_url,
                html: None,
            },
            Hop::Final(response, code) if (200..300).contains(&code) => {
                let is_html = response
                    .headers()
                    .get(CONTENT_TYPE)
                    .and_then(|v| v.to_str().ok())
                    .is_some_and(is_html_content_type);
                let status = success_status(chain.hops, code);
                if !is_html {
                    return Fetched {
                        status,
                        final_url,
                        html: None,
                    };
                }
                match response.bytes().await {
                    Ok(body) => Fetched {
                        status,
                        final_url,
                        html: Some(body.to_vec()),
                    },
                    Err(e) => Fetched {
                        status: CheckStatus::Broken(error_reason(&e)),
                        final_url,
                        html: None,
                    },
                }
            }
            end => Fetched {
                status: classify(Chain { hops: chain.hops, end }),
                final_url,
                html: None,
            },
        }
    }

    /// GETs `url` and returns the body of a 2xx response.
    pub async fn fetch_text(&self, url: &NormalizedUrl) -> Option<String> {
        let chain = self.follow(url, ProbeMethod::Get, &|_| true).await;
        match chain.end {
            Hop::Final(response, code) if (200..300).contains(&code) => response.text().await.ok(),
            _ => None,
        }
    }

    async fn follow(
        &self,
        url: &NormalizedUrl,
        method: ProbeMethod,
        allow_hop: &(dyn Fn(&NormalizedUrl) -> bool + Sync),
    ) -> Chain {
        let mut hops = Vec::new();
        let mut current = url.clone();
        loop {
            let response = match self.send(&current, method).await {
                Ok(r) => r,
                Err(reason) => {
                    return Chain {
                        hops,
                        end: Hop::Failed(reason),
                    }
                }
            };
            let status = response.status();
            if !status.is_redirection() {
                return Chain {
                    hops,
                    end: Hop::Final(response, status.as_u16()),
                };
            }
            // A 3xx without a usable Location cannot be followed.
            let next = response
                .headers()
                .get(LOCATION)
                .and_then(|v| v.to_str().ok())
                .map(|loc| current.join(loc));
            let next = match next {
                Some(Ok(next)) => next,
                _ => {
                    return Chain {
                        hops,
                        end: Hop::Failed(BrokenReason::InvalidUrl),
                    }
                }
            };
            if hops.len() >= self.policy.redirect_limit {
                return Chain {
                    hops,
                    end: Hop::Failed(BrokenReason::TooManyRedirects),
                };
            }
            if !allow_hop(&next) {
                hops.push(next);
                return Chain {
                    hops,
                    end: Hop::Stopped,
                };
            }
            hops.push(next.clone());
            current = next;
        }
    }

    /// One request with retries. Returns the last response, or the failure
    /// reason once every attempt failed to produce one.
    async fn send(&self, url: &NormalizedUrl, method: ProbeMethod) -> Result<Response, BrokenReason> {
        let attempts = self.policy.retries + 1;
        let mut last_err = BrokenReason::ConnectionFailed;
        for attempt in 0..attempts {
            if attempt > 0 && !self.policy.backoff.is_zero() {
                tokio::time::sleep(self.policy.backoff).await;
            }
            let result = self.client.request(method.as_reqwest(), url.to_string()).send().await;
            match result {
                Ok(response) => {
                    let retryable = matches!(
                        response.status(),
                        StatusCode::TOO_MANY_REQUESTS | StatusCode::SERVICE_UNAVAILABLE
                    );
                    if retryable && attempt + 1 < attempts {
                        log::debug!("{url}: {} (attempt {})", response.status(), attempt + 1);
                        continue;
                    }
                    return Ok(response);
                }
                Err(e) => {
                    log::debug!("{url}: {e} (attempt {})", attempt + 1);
                    last_err = error_reason(&e);
                }
            }
        }
        Err(last_err)
    }
}

fn head_needs_fallback(code: u16) -> bool {
    code == 405 || code == 501 || (500..600).contains(&code)
}

fn error_reason(e: &reqwest::Error) -> BrokenReason {
    if e.is_timeout() {
        BrokenReason::Timeout
    } else {
        BrokenReason::ConnectionFailed
    }
}

fn success_status(hops: Vec<NormalizedUrl>, code: u16) -> CheckStatus {
    if hops.is_empty() {
        CheckStatus::Ok(code)
    } else {
        CheckStatus::Redirected {
            chain: hops,
            final_status: code,
        }
    }
}

fn classify(chain: Chain) -> CheckStatus {
    match chain.end {
        Hop::Final(_, code) if (200..300).contains(&code) => success_status(chain.hops, code),
        Hop::Final(_, code) if (400..600).contains(&code) => CheckStatus::Broken(BrokenReason::HttpStatus(code)),
        // 1xx or nonstandard codes: the server did not produce a resource.
        Hop::Final(_, _) => CheckStatus::Broken(BrokenReason::ConnectionFailed),
        Hop::Failed(reason) => CheckStatus::Broken(reason),
        Hop::Stopped => CheckStatus::Skipped(SkipReason::ExternalNotChecked),
    }
}

pub fn is_html_content_type(value: &str) -> bool {
    let mime = value.split(';').next().unwrap_or("").trim().to_ascii_lowercase();
    mime == "text/html" || mime == "application/xhtml+xml"
}

/// Probes `url` with a fresh client.
pub async fn probe(url: &NormalizedUrl, policy: &ProbePolicy) -> CheckStatus {
    match Prober::new(policy.clone()) {
        Ok(prober) => prober.probe(url).await,
        Err(e) => {
            log::error!("{e}");
            CheckStatus::Broken(BrokenReason::ConnectionFailed)
        }
    }
}

/// Result of the `reach` subcommand: exit code plus the line to print.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReachOutcome {
    pub exit_code: i32,
    pub message: String,
    pub status: Option<CheckStatus>,
}

/// 0 when the URL answers with a success status, 1 when it does not, 2 when
/// the argument is not a usable URL.
pub async fn check_reachable(raw: &str, policy: &ProbePolicy) -> ReachOutcome {
    let url = match NormalizedUrl::parse(raw) {
        Ok(url) => url,
        Err(e) => {
            return ReachOutcome {
                exit_code: 2,
                message: format!("error: {e}"),
                status: None,
            }
        }
    };
    let status = probe(&url, policy).await;
    let (exit_code, message) = if status.is_success() {
        (0, format!("{url} is reachable: {status}"))
    } else {
        (1, format!("{url} is not reachable: {status}"))
    };
    ReachOutcome {
        exit_code,
        message,
        status: Some(status),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn html_content_types() {
        assert!(is_html_content_type("text/html"));
        assert!(is_html_content_type("text/html; charset=utf-8"));
        assert!(is_html_content_type("Application/XHTML+XML"));
        assert!(!is_html_content_type("application/json"));
        assert!(!is_html_content_type("text/plain"));
    }

    #[test]
    fn fallback_codes() {
        for code in [405, 501, 500, 502, 503] {
            assert!(head_needs_fallback(code), "{code}");
        }
        for code in [200, 301, 403, 404, 429] {
            assert!(!head_needs_fallback(code), "{code}");
        }
    }

    #[test]
    fn policy_validation() {
        assert!(ProbePolicy::default().validate().is_ok());
        let zero = ProbePolicy {
            timeout: Duration::ZERO,
            ..ProbePolicy::default()
        };
        assert!(zero.validate().is_err());
        let no_redirects = ProbePolicy {
            redirect_limit: 0,
            ..ProbePolicy::default()
        };
        assert!(no_redirects.validate().is_err());
    }

    #[test]
    fn latency_bound_matches_formula() {
        let p = ProbePolicy {
            timeout: Duration::from_secs(1),
            retries: 1,
            backoff: Duration::ZERO,
            ..ProbePolicy::default()
        };
        assert_eq!(p.latency_bound(), Duration::from_secs(2));
        assert_eq!(ProbePolicy::default().latency_bound(), Duration::from_secs(32));
    }

    #[test]
    fn seconds_parsing() {
        assert_eq!(parse_seconds("2"), Some(Duration::from_secs(2)));
        assert_eq!(parse_seconds("0.5"), Some(Duration::from_millis(500)));
        assert_eq!(parse_seconds("0"), None);
        assert_eq!(parse_seconds("abc"), None);
    }

    #[test]
    fn default_user_agent() {
        assert_eq!(
            ProbePolicy::default().user_agent,
            format!("sitecheck/{} (+link-audit)", crate::VERSION)
        );
    }

    #[tokio::test]
    async fn malformed_reach_argument_exits_2() {
        let out = check_reachable("not-a-url", &ProbePolicy::default()).await;
        assert_eq!(out.exit_code, 2);
        assert!(out.status.is_none());
    }
}
