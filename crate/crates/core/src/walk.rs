//! Recursive, sorted file discovery shared by the JSON and XML scanners.

use std::path::{Path, PathBuf};

use crate::Error;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Walked {
    /// Matching files in path order.
    pub files: Vec<PathBuf>,
    /// Entries that could not be read, with the reason.
    pub unreadable: Vec<(PathBuf, String)>,
}

/// Every file under `root` accepted by `matches`, sorted by path.
pub fn find_files(root: &Path, matches: impl Fn(&Path) -> bool) -> Result<Walked, Error> {
    if !root.exists() {
        return Err(Error::MissingPath(root.to_path_buf()));
    }
    if !root.is_dir() {
        return Err(Error::NotADirectory(root.to_path_buf()));
    }
    let mut walked = Walked::default();
    for entry in walkdir::WalkDir::new(root).follow_links(false) {
        match entry {
            Ok(entry) if entry.file_type().is_file() && matches(entry.path()) => {
                walked.files.push(entry.into_path());
            }
            Ok(_) => {}
            Err(e) if e.depth() == 0 => {
                return Err(Error::Walk {
                    path: root.to_path_buf(),
                    source: e,
                });
            }
            Err(e) => {
                let path = e.path().map(Path::to_path_buf).unwrap_or_default();
                walked.unreadable.push((path, e.to_string()));
            }
        }
    }
    walked.files.sort();
    walked.unreadable.sort();
    Ok(walked)
}
