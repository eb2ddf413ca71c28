use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum TableError {
    #[error("{path}:{line}: {message}")]
    Line {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{path}: {message}")]
    Header { path: PathBuf, message: String },
    #[error("{path}: no records")]
    Empty { path: PathBuf },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// A comma-separated file: header fields plus numbered data rows.
pub(crate) struct Table {
    pub path: PathBuf,
    pub header: Vec<String>,
    pub rows: Vec<(usize, Vec<String>)>,
}

impl Table {
    pub fn read(path: &Path) -> Result<Self, TableError> {
        let text = fs::read_to_string(path).map_err(|source| TableError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(n, l)| (n + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let split = |l: &str| l.split(',').map(|f| f.trim().to_string()).collect::<Vec<_>>();
        let header = lines.next().map(|(_, l)| split(l)).ok_or_else(|| TableError::Empty {
            path: path.to_path_buf(),
        })?;
        let rows = lines.map(|(n, l)| (n, split(l))).collect();
        Ok(Self {
            path: path.to_path_buf(),
            header,
            rows,
        })
    }

    pub fn expect_header(&self, expected: &[&str]) -> Result<(), TableError> {
        if self.header != expected {
            return Err(TableError::Header {
                path: self.path.clone(),
                message: format!("expected header `{}`, found `{}`", expected.join(","), self.header.join(",")),
            });
        }
        Ok(())
    }

    pub fn line_error(&self, line: usize, message: impl Into<String>) -> TableError {
        TableError::Line {
            path: self.path.clone(),
            line,
            message: message.into(),
        }
    }

    pub fn parse<T: std::str::FromStr>(&self, line: usize, fields: &[String], idx: usize) -> Result<T, TableError> {
        let name = self.header.get(idx).map_or("?", String::as_str);
        let raw = fields
            .get(idx)
            .ok_or_else(|| self.line_error(line, format!("missing field `{name}`")))?;
        raw.parse()
            .map_err(|_| self.line_error(line, format!("field `{name}`: cannot parse `{raw}`")))
    }

    pub fn expect_width(&self, line: usize, fields: &[String]) -> Result<(), TableError> {
        if fields.len() != self.header.len() {
            return Err(self.line_error(
                line,
                format!("expected {} fields, found {}", self.header.len(), fields.len()),
            ));
        }
        Ok(())
    }
}
