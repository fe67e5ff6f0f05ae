use proptest::prelude::*;

use sitecheck::{
    classify_scope, merge_reports, normalize_url, CheckKind, Code, Finding, Location, NormalizedUrl, Report, Scope,
    Severity,
};

fn segment() -> impl Strategy<Value = String> {
    prop_oneof![
        3 => "[a-z0-9_-]{1,6}",
        1 => Just(".".to_string()),
        1 => Just("..".to_string()),
        1 => Just("".to_string()),
    ]
}

fn path() -> impl Strategy<Value = String> {
    prop::collection::vec(segment(), 0..6).prop_map(|segs| segs.join("/"))
}

fn absolute_url() -> impl Strategy<Value = String> {
    (
        prop_oneof![Just("http"), Just("https"), Just("HTTP")],
        "[a-z]{1,8}(\\.[a-z]{2,3})?",
        prop::option::of(1u16..65535),
        path(),
        prop::option::of("[a-z0-9=&]{0,8}"),
        prop::option::of("[a-z]{0,5}"),
    )
        .prop_map(|(scheme, host, port, path, query, fragment)| {
            let mut s = format!("{scheme}://{host}");
            if let Some(p) = port {
                s.push_str(&format!(":{p}"));
            }
            s.push('/');
            s.push_str(&path);
            if let Some(q) = query {
                s.push('?');
                s.push_str(&q);
            }
            if let Some(f) = fragment {
                s.push('#');
                s.push_str(&f);
            }
            s
        })
}

fn relative_ref() -> impl Strategy<Value = String> {
    (
        prop_oneof![Just(""), Just("/"), Just("./"), Just("../"), Just("../../")],
        path(),
        prop::option::of("[a-z0-9=]{0,6}"),
    )
        .prop_map(|(prefix, path, query)| {
            let mut s = format!("{prefix}{path}");
            if let Some(q) = query {
                s.push('?');
                s.push_str(&q);
            }
            if s.is_empty() {
                s.push('.');
            }
            s
        })
        // "//x" is a network-path reference naming another host.
        .prop_filter("path-relative only", |s| !s.starts_with("//"))
}

/// Components of a URL as the independent `url` crate resolves it.
fn oracle_parts(u: &url::Url) -> (String, String, u16, String, Option<String>) {
    (
        u.scheme().to_string(),
        u.host_str().unwrap().to_string(),
        u.port_or_known_default().unwrap(),
        u.path().to_string(),
        u.query().map(str::to_string),
    )
}

fn parts(u: &NormalizedUrl) -> (String, String, u16, String, Option<String>) {
    (
        u.scheme().as_str().to_string(),
        u.host().to_string(),
        u.port(),
        u.path().to_string(),
        u.query().map(str::to_string),
    )
}

proptest! {
    #[test]
    fn normalization_is_idempotent(raw in absolute_url()) {
        let u = normalize_url(None, &raw).unwrap();
        let again = normalize_url(None, &u.to_string()).unwrap();
        prop_assert_eq!(&again, &u);
        prop_assert_eq!(again.to_string(), u.to_string());
    }

    #[test]
    fn absolute_parsing_matches_url_crate(raw in absolute_url()) {
        let ours = normalize_url(None, &raw).unwrap();
        let theirs = url::Url::parse(&raw).unwrap();
        prop_assert_eq!(parts(&ours), oracle_parts(&theirs));
    }

    #[test]
    fn resolution_matches_url_crate(base in absolute_url(), rel in relative_ref()) {
        let b = normalize_url(None, &base).unwrap();
        let ours = normalize_url(Some(&b), &rel).unwrap();
        let theirs = url::Url::parse(&b.to_string()).unwrap().join(&rel).unwrap();
        prop_assert_eq!(parts(&ours), oracle_parts(&theirs));
    }

    #[test]
    fn invariants_hold(base in absolute_url(), rel in relative_ref()) {
        let b = normalize_url(None, &base).unwrap();
        let u = normalize_url(Some(&b), &rel).unwrap();
        prop_assert!(u.path().starts_with('/'));
        prop_assert!(u.path().split('/').all(|s| s != "." && s != ".."));
        prop_assert!(!u.to_string().contains('#'));
        prop_assert_eq!(classify_scope(&u, &u), Scope::Internal);
        prop_assert_eq!(classify_scope(&b, &u), Scope::Internal);
    }

    #[test]
    fn equality_is_serialized_equality(a in absolute_url(), b in absolute_url()) {
        let (a, b) = (normalize_url(None, &a).unwrap(), normalize_url(None, &b).unwrap());
        prop_assert_eq!(a == b, a.to_string() == b.to_string());
    }
}

#[test]
fn documented_examples() {
    let base = normalize_url(None, "http://h/x/y.html").unwrap();
    assert_eq!(
        normalize_url(Some(&base), "../a.html").unwrap().to_string(),
        "http://h:80/a.html"
    );
    assert_eq!(
        normalize_url(None, "http://h/p#sec").unwrap().to_string(),
        "http://h:80/p"
    );
    assert_eq!(
        normalize_url(None, "https://jetscape.org").unwrap().to_string(),
        "https://jetscape.org:443/"
    );
    let seed = normalize_url(None, "https://h:443/").unwrap();
    let docs = normalize_url(None, "https://h:443/docs/").unwrap();
    let plain = normalize_url(None, "http://h:80/").unwrap();
    let other = normalize_url(None, "https://conference.example.org/2023").unwrap();
    assert_eq!(classify_scope(&seed, &docs), Scope::Internal);
    assert_eq!(classify_scope(&seed, &plain), Scope::External);
    assert_eq!(classify_scope(&seed, &other), Scope::External);
}

fn finding_strategy() -> impl Strategy<Value = Finding> {
    (
        prop::sample::select(vec!["a.html", "b.html", "c.json", "http://h:80/x"]),
        prop::option::of(1u32..20),
        prop::option::of(1u32..5),
        prop::sample::select(Code::ALL.to_vec()),
        any::<bool>(),
        "[a-z ]{0,8}",
    )
        .prop_map(|(src, line, col, code, err, msg)| {
            let mut loc = Location::file(src);
            if let Some(l) = line {
                loc = loc.at(l, col);
            }
            let severity = if err { Severity::Error } else { Severity::Warning };
            Finding::new(CheckKind::Link, severity, code, loc, msg)
        })
}

fn documented_key(f: &Finding) -> (String, Option<u32>, String) {
    (
        f.location.source.clone(),
        f.location.line,
        f.machine_code.as_str().to_string(),
    )
}

proptest! {
    #[test]
    fn reports_sort_by_documented_key(findings in prop::collection::vec(finding_strategy(), 0..30)) {
        let mut r = Report::new();
        r.extend(findings);
        let keys: Vec<_> = r.findings().iter().map(documented_key).collect();
        let mut sorted = keys.clone();
        sorted.sort();
        prop_assert_eq!(keys, sorted);
    }

    #[test]
    fn merge_equals_sorted_concatenation(
        a in prop::collection::vec(finding_strategy(), 0..15),
        b in prop::collection::vec(finding_strategy(), 0..15),
    ) {
        let mut ra = Report::new();
        ra.extend(a.clone());
        ra.count(CheckKind::Link, 3);
        let mut rb = Report::new();
        rb.extend(b.clone());
        rb.count(CheckKind::Link, 4);
        rb.count(CheckKind::Html, 1);
        let merged = merge_reports([ra, rb]);

        let mut expected: Vec<Finding> = a.into_iter().chain(b).collect();
        expected.sort_by_key(documented_key);
        let got: Vec<_> = merged.findings().iter().map(documented_key).collect();
        let want: Vec<_> = expected.iter().map(documented_key).collect();
        prop_assert_eq!(got, want);
        prop_assert_eq!(merged.findings().len(), expected.len());
        prop_assert_eq!(merged.checked_count(CheckKind::Link), 7);
        prop_assert_eq!(merged.checked_count(CheckKind::Html), 1);
    }
}

#[test]
fn merge_identities() {
    assert!(merge_reports([Report::new(), Report::new()]).findings().is_empty());
    let mut r = Report::new();
    r.push(Finding::error(
        CheckKind::Html,
        Code::HtmlNoDoctype,
        Location::file("a.html").at(1, None),
        "x",
    ));
    let mut merged = merge_reports([r.clone()]);
    merged.strip_timestamps();
    let mut original = r;
    original.strip_timestamps();
    assert_eq!(merged, original);
}
