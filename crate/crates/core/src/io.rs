//! Write-to-temp, rename-on-success file output.

use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use tempfile::NamedTempFile;

fn parent_dir(path: &Path) -> PathBuf {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    }
}

/// A file being written next to its final destination.
///
/// Nothing appears at `dest` until [`StagedFile::commit`] is called; dropping
/// a staged file removes the temporary.
pub struct StagedFile {
    dest: PathBuf,
    writer: BufWriter<NamedTempFile>,
}

impl StagedFile {
    pub fn new(dest: impl AsRef<Path>) -> io::Result<Self> {
        let dest = dest.as_ref().to_path_buf();
        let dir = parent_dir(&dest);
        fs::create_dir_all(&dir)?;
        let tmp = NamedTempFile::new_in(&dir)?;
        Ok(Self {
            dest,
            writer: BufWriter::new(tmp),
        })
    }

    pub fn commit(self) -> io::Result<()> {
        let tmp = self.writer.into_inner().map_err(|e| e.into_error())?;
        tmp.as_file().sync_all()?;
        tmp.persist(&self.dest).map_err(|e| e.error)?;
        Ok(())
    }
}

impl Write for StagedFile {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        self.writer.write(buf)
    }

    fn flush(&mut self) -> io::Result<()> {
        self.writer.flush()
    }
}

/// Writes `dest` atomically by running `fill` against a staged temporary.
pub fn write_atomic<F>(dest: impl AsRef<Path>, fill: F) -> io::Result<()>
where
    F: FnOnce(&mut dyn Write) -> io::Result<()>,
{
    let mut staged = StagedFile::new(dest)?;
    fill(&mut staged)?;
    staged.commit()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn failed_fill_leaves_no_file() {
        let dir = tempfile::tempdir().unwrap();
        let dest = dir.path().join("out.txt");
        let res = write_atomic(&dest, |w| {
            w.write_all(b"partial")?;
            Err(io::Error::new(io::ErrorKind::Other, "boom"))
        });
        assert!(res.is_err());
        assert!(!dest.exists());
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 0);
    }

    #[test]
    fn commit_publishes_contents() {
        let dir = tempfile::tempdir().unwrap();
        let dest = dir.path().join("nested/out.txt");
        write_atomic(&dest, |w| w.write_all(b"hello")).unwrap();
        assert_eq!(fs::read(&dest).unwrap(), b"hello");
    }
}
