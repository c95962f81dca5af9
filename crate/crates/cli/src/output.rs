//! Deferred output: files are staged next to their targets and renamed into
//! place only after every one of them was written.

use std::io::Write;
use std::path::PathBuf;

use tempfile::NamedTempFile;

#[derive(Debug, Default)]
pub struct Outputs {
    items: Vec<(Option<PathBuf>, String)>,
}

impl Outputs {
    /// Queues `contents` for `path`, or for stdout when `path` is `None`.
    pub fn add(&mut self, path: Option<PathBuf>, contents: String) {
        self.items.push((path, contents));
    }

    pub fn commit(self) -> Result<(), String> {
        let mut staged = Vec::new();
        let mut stdout = String::new();
        for (path, contents) in self.items {
            let Some(path) = path else {
                stdout.push_str(&contents);
                continue;
            };
            let dir = match path.parent() {
                Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
                _ => PathBuf::from("."),
            };
            let mut tmp = NamedTempFile::new_in(&dir).map_err(|e| format!("cannot write {}: {e}", path.display()))?;
            tmp.write_all(contents.as_bytes()).and_then(|_| tmp.flush()).map_err(|e| format!("cannot write {}: {e}", path.display()))?;
            staged.push((tmp, path));
        }
        let mut done: Vec<PathBuf> = Vec::new();
        for (tmp, path) in staged {
            if let Err(e) = tmp.persist(&path) {
                for p in &done {
                    let _ = std::fs::remove_file(p);
                }
                return Err(format!("cannot write {}: {}", path.display(), e.error));
            }
            done.push(path);
        }
        print!("{stdout}");
        Ok(())
    }
}
