//! GitHub Actions workflow generation for each check.

use std::fmt;
use std::str::FromStr;

use crate::Error;

/// Current major of `actions/checkout`. Older workflows often pin `v2`.
pub const CHECKOUT_VERSION: &str = "v4";

pub const INSTALL_COMMAND: &str = "cargo install sitecheck --locked";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WorkflowKind {
    Html,
    Links,
    JsonLinks,
    XmlSubset,
}

impl WorkflowKind {
    pub const ALL: [WorkflowKind; 4] = [
        WorkflowKind::Html,
        WorkflowKind::Links,
        WorkflowKind::JsonLinks,
        WorkflowKind::XmlSubset,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            WorkflowKind::Html => "html",
            WorkflowKind::Links => "links",
            WorkflowKind::JsonLinks => "json-links",
            WorkflowKind::XmlSubset => "xml-subset",
        }
    }

    fn step(self) -> (&'static str, &'static str) {
        match self {
            WorkflowKind::Html => ("Check HTML structure", "sitecheck html . --format github"),
            WorkflowKind::Links => (
                "Check links",
                "sitecheck crawl --serve . --seed /nav.html --external --format github",
            ),
            WorkflowKind::JsonLinks => ("Check JSON file links", "sitecheck json-links data --format github"),
            WorkflowKind::XmlSubset => (
                "Check user XML files",
                "sitecheck xml-subset --main config/main.xml --roots examples --format github",
            ),
        }
    }
}

impl fmt::Display for WorkflowKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for WorkflowKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        WorkflowKind::ALL.into_iter().find(|k| k.as_str() == s).ok_or_else(|| {
            Error::Usage(format!(
                "unknown workflow kind `{s}` (expected html, links, json-links or xml-subset)"
            ))
        })
    }
}

/// A daily UTC time, `HH:MM`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DailyTime {
    pub hour: u8,
    pub minute: u8,
}

impl DailyTime {
    pub fn cron(self) -> String {
        format!("{} {} * * *", self.minute, self.hour)
    }
}

impl FromStr for DailyTime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || Error::Usage(format!("invalid schedule `{s}` (expected HH:MM, 24-hour UTC)"));
        let (h, m) = s.split_once(':').ok_or_else(bad)?;
        let field = |t: &str, max: u8| {
            if t.len() == 2 && t.bytes().all(|b| b.is_ascii_digit()) {
                t.parse::<u8>().ok().filter(|v| *v <= max)
            } else {
                None
            }
        };
        Ok(DailyTime {
            hour: field(h, 23).ok_or_else(bad)?,
            minute: field(m, 59).ok_or_else(bad)?,
        })
    }
}

pub fn scaffold_workflow(kind: WorkflowKind, schedule: Option<DailyTime>) -> String {
    scaffold_workflow_with(kind, schedule, CHECKOUT_VERSION)
}

/// Workflow text with an explicit `actions/checkout` version tag.
pub fn scaffold_workflow_with(kind: WorkflowKind, schedule: Option<DailyTime>, checkout_version: &str) -> String {
    let (step_name, command) = kind.step();
    let mut out = format!(
        "name: sitecheck {kind}\n\
         \n\
         on:\n  \
           push:\n    branches: [main]\n  \
           pull_request:\n    branches: [main]\n"
    );
    if let Some(time) = schedule {
        out.push_str(&format!(
            "  schedule:\n    # daily at {:02}:{:02} UTC\n    - cron: \"{}\"\n",
            time.hour,
            time.minute,
            time.cron()
        ));
    }
    out.push_str(&format!(
        "\n\
         jobs:\n  \
           {kind}:\n    \
             runs-on: ubuntu-latest\n    \
             steps:\n      \
               - name: Checkout\n        \
                 uses: actions/checkout@{checkout_version}\n      \
               - name: Install sitecheck\n        \
                 run: {INSTALL_COMMAND}\n      \
               - name: {step_name}\n        \
                 run: {command}\n"
    ));
    out
}
