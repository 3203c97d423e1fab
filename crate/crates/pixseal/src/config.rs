//! Plain-text `key = value` configuration files for the command-line tool.
//!
//! One setting per line; `#` starts a comment, blank lines are skipped, and
//! a later assignment to the same key wins. Typed accessors report malformed
//! values with the file path and line number they came from. Saving writes
//! keys in sorted order and drops comments, which keeps programmatic updates
//! (like recording a calibrated threshold) simple.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

/// A parsed configuration file.
#[derive(Debug, Clone, Default)]
pub struct ConfigFile {
    path: PathBuf,
    /// Key to (value, source line) pairs; line 0 marks programmatic values.
    values: BTreeMap<String, (String, usize)>,
}

impl ConfigFile {
    /// An empty configuration associated with `path` but not yet on disk.
    pub fn empty<P: AsRef<Path>>(path: P) -> Self {
        ConfigFile {
            path: path.as_ref().to_path_buf(),
            values: BTreeMap::new(),
        }
    }

    /// Reads and parses `path`.
    pub fn load<P: AsRef<Path>>(path: P) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| Error::Read {
            path: path.to_path_buf(),
            source,
        })?;
        ConfigFile::parse(&text, path)
    }

    /// Parses configuration text, attributing errors to `path`.
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let stripped = match raw.find('#') {
                Some(pos) => &raw[..pos],
                None => raw,
            };
            let stripped = stripped.trim();
            if stripped.is_empty() {
                continue;
            }
            let Some((key, value)) = stripped.split_once('=') else {
                return Err(Error::ConfigFormat {
                    path: path.to_path_buf(),
                    line,
                    reason: format!("expected key = value, got {stripped:?}"),
                });
            };
            let key = key.trim();
            let value = value.trim();
            if key.is_empty() {
                return Err(Error::ConfigFormat {
                    path: path.to_path_buf(),
                    line,
                    reason: "empty key".to_string(),
                });
            }
            if key.contains(char::is_whitespace) {
                return Err(Error::ConfigFormat {
                    path: path.to_path_buf(),
                    line,
                    reason: format!("key {key:?} contains whitespace"),
                });
            }
            values.insert(key.to_string(), (value.to_string(), line));
        }
        Ok(ConfigFile {
            path: path.to_path_buf(),
            values,
        })
    }

    /// The file this configuration came from or will be saved to.
    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Raw string value of `key`.
    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(|(v, _)| v.as_str())
    }

    /// Floating-point value of `key`, if present.
    pub fn get_f64(&self, key: &str) -> Result<Option<f64>> {
        self.typed(key, "number", |v| v.parse::<f64>().ok())
    }

    /// Unsigned integer value of `key`, if present.
    pub fn get_usize(&self, key: &str) -> Result<Option<usize>> {
        self.typed(key, "unsigned integer", |v| v.parse::<usize>().ok())
    }

    /// Boolean value of `key` (`true`/`false`), if present.
    pub fn get_bool(&self, key: &str) -> Result<Option<bool>> {
        self.typed(key, "true or false", |v| v.parse::<bool>().ok())
    }

    fn typed<T>(&self, key: &str, expected: &str, parse: impl Fn(&str) -> Option<T>) -> Result<Option<T>> {
        match self.values.get(key) {
            None => Ok(None),
            Some((value, line)) => parse(value).map(Some).ok_or_else(|| Error::ConfigFormat {
                path: self.path.clone(),
                line: *line,
                reason: format!("{key} must be a {expected}, got {value:?}"),
            }),
        }
    }

    /// Sets or replaces a value.
    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.values.insert(key.to_string(), (value.to_string(), 0));
    }

    /// Writes the configuration back to its path, one sorted `key = value`
    /// per line. Comments from the original file are not preserved.
    pub fn save(&self) -> Result<()> {
        let mut text = String::new();
        for (key, (value, _)) in &self.values {
            text.push_str(key);
            text.push_str(" = ");
            text.push_str(value);
            text.push('\n');
        }
        std::fs::write(&self.path, text).map_err(|source| Error::Write {
            path: self.path.clone(),
            source,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<ConfigFile> {
        ConfigFile::parse(text, Path::new("test.conf"))
    }

    #[test]
    fn parses_comments_blanks_and_spacing_variants() {
        let cfg = parse(
            "# defaults\n\
             alpha = 2.0\n\
             \n\
             tau=0.92   # calibrated\n\
             key_file = /keys/a.key\n",
        )
        .unwrap();
        assert_eq!(cfg.get_f64("alpha").unwrap(), Some(2.0));
        assert_eq!(cfg.get_f64("tau").unwrap(), Some(0.92));
        assert_eq!(cfg.get("key_file"), Some("/keys/a.key"));
        assert_eq!(cfg.get("missing"), None);
        assert_eq!(cfg.get_f64("missing").unwrap(), None);
    }

    #[test]
    fn later_assignment_wins() {
        let cfg = parse("tau = 0.1\ntau = 0.2\n").unwrap();
        assert_eq!(cfg.get_f64("tau").unwrap(), Some(0.2));
    }

    #[test]
    fn rejects_malformed_lines_with_position() {
        let err = parse("alpha = 2\njust words\n").unwrap_err();
        match err {
            Error::ConfigFormat { line, ref reason, .. } => {
                assert_eq!(line, 2);
                assert!(reason.contains("just words"), "{reason}");
            }
            other => panic!("unexpected error {other:?}"),
        }
        assert!(matches!(parse("= 3\n"), Err(Error::ConfigFormat { line: 1, .. })));
        assert!(matches!(
            parse("two words = 3\n"),
            Err(Error::ConfigFormat { line: 1, .. })
        ));
    }

    #[test]
    fn typed_accessors_report_bad_values_with_their_line() {
        let cfg = parse("# header\nwindow = sixteen\n").unwrap();
        match cfg.get_usize("window").unwrap_err() {
            Error::ConfigFormat { line, reason, .. } => {
                assert_eq!(line, 2);
                assert!(reason.contains("sixteen"));
            }
            other => panic!("unexpected error {other:?}"),
        }
        let cfg = parse("flag = yes\n").unwrap();
        assert!(cfg.get_bool("flag").is_err());
        let cfg = parse("flag = true\n").unwrap();
        assert_eq!(cfg.get_bool("flag").unwrap(), Some(true));
    }

    #[test]
    fn save_and_reload_round_trips_values() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pixseal.conf");
        let mut cfg = ConfigFile::empty(&path);
        cfg.set("tau", 0.925_f64);
        cfg.set("key_file", "/keys/a.key");
        cfg.save().unwrap();
        let reloaded = ConfigFile::load(&path).unwrap();
        assert_eq!(reloaded.get_f64("tau").unwrap(), Some(0.925));
        assert_eq!(reloaded.get("key_file"), Some("/keys/a.key"));
        // Updating one key keeps the others.
        let mut reloaded = reloaded;
        reloaded.set("tau", 0.93_f64);
        reloaded.save().unwrap();
        let again = ConfigFile::load(&path).unwrap();
        assert_eq!(again.get_f64("tau").unwrap(), Some(0.93));
        assert_eq!(again.get("key_file"), Some("/keys/a.key"));
    }

    #[test]
    fn load_of_missing_file_is_a_read_error() {
        assert!(matches!(
            ConfigFile::load("/nonexistent/pixseal.conf"),
            Err(Error::Read { .. })
        ));
    }
}
