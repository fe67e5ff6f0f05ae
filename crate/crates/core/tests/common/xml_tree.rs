//! Random XML trees and a library-free path oracle for the subset checks.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use proptest::prelude::*;
use sitecheck::xml_subset::{collect_tag_paths, TagUniverse};
use sitecheck::Code;

/// A generated element tree: node 0 is the root, every other node names
/// an earlier node as its parent.
#[derive(Debug, Clone)]
pub struct Tree {
    pub names: Vec<String>,
    pub parents: Vec<usize>,
}

impl Tree {
    pub fn children(&self, node: usize) -> impl Iterator<Item = usize> + '_ {
        (1..self.names.len()).filter(move |&i| self.parents[i] == node)
    }

    pub fn to_xml(&self) -> String {
        fn write(t: &Tree, node: usize, depth: usize, out: &mut String) {
            let pad = "  ".repeat(depth);
            let kids: Vec<usize> = t.children(node).collect();
            if kids.is_empty() {
                out.push_str(&format!("{pad}<{} v=\"{node}\"/>\n", t.names[node]));
            } else {
                out.push_str(&format!("{pad}<{}>text\n", t.names[node]));
                for k in kids {
                    write(t, k, depth + 1, out);
                }
                out.push_str(&format!("{pad}</{}>\n", t.names[node]));
            }
        }
        let mut out = String::from("<?xml version=\"1.0\"?>\n");
        write(self, 0, 0, &mut out);
        out
    }

    /// Root-relative path of every node, computed from the data alone.
    pub fn paths(&self) -> BTreeSet<Vec<String>> {
        (0..self.names.len())
            .map(|mut n| {
                let mut p = vec![self.names[n].clone()];
                while n != 0 {
                    n = self.parents[n];
                    p.push(self.names[n].clone());
                }
                p.reverse();
                p
            })
            .collect()
    }

    /// Adds `other` as a subtree under `at`.
    pub fn graft(&self, at: usize, other: &Tree) -> Tree {
        let mut t = self.clone();
        let offset = t.names.len();
        for i in 0..other.names.len() {
            t.names.push(other.names[i].clone());
            t.parents.push(if i == 0 { at } else { other.parents[i] + offset });
        }
        t
    }
}

pub fn name() -> impl Strategy<Value = String> {
    prop::sample::select(vec!["a", "b", "c", "param", "Q0", "x:y", "outputFile"]).prop_map(String::from)
}

pub fn tree(max: usize) -> impl Strategy<Value = Tree> {
    prop::collection::vec((name(), any::<prop::sample::Index>()), 1..=max).prop_map(|nodes| {
        let mut names = Vec::new();
        let mut parents = Vec::new();
        for (i, (n, idx)) in nodes.into_iter().enumerate() {
            names.push(if i == 0 { "root".to_string() } else { n });
            parents.push(if i == 0 { 0 } else { idx.index(i) });
        }
        Tree { names, parents }
    })
}

pub fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}

pub fn universe_of(dir: &Path, name: &str, t: &Tree) -> TagUniverse {
    collect_tag_paths(&write(dir, name, &t.to_xml())).unwrap()
}

pub fn finding_paths(findings: &[sitecheck::Finding]) -> BTreeSet<String> {
    findings
        .iter()
        .map(|f| {
            assert_eq!(f.machine_code, Code::XmlUnknownTag);
            let rest = f.message.strip_prefix("unknown tag path ").unwrap();
            rest.split(": ").next().unwrap().to_string()
        })
        .collect()
}

pub fn joined(paths: impl IntoIterator<Item = Vec<String>>) -> BTreeSet<String> {
    paths.into_iter().map(|p| p.join("/")).collect()
}

/// Paths from a fixture with a regex tag scanner, independent of the
/// XML library. Fixtures hold no comments or CDATA.
pub fn oracle_paths(text: &str) -> BTreeSet<String> {
    let re = regex::Regex::new(r"<(/?)([A-Za-z_][\w:.-]*)[^>]*?(/?)>").unwrap();
    let mut stack: Vec<String> = Vec::new();
    let mut out = BTreeSet::new();
    for c in re.captures_iter(text) {
        if &c[1] == "/" {
            stack.pop();
            continue;
        }
        stack.push(c[2].to_string());
        out.insert(stack.join("/"));
        if &c[3] == "/" {
            stack.pop();
        }
    }
    out
}
