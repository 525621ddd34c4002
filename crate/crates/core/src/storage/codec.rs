//! Little-endian primitives with a running CRC32 and byte-offset tracking.

use std::fs::File;
use std::io::{self, BufWriter, Read, Write};
use std::path::Path;

use crc32fast::Hasher;

use crate::error::{Error, FormatErrorKind, Result};

pub(crate) struct CrcWriter<W: Write> {
    inner: W,
    hasher: Hasher,
}

impl<W: Write> CrcWriter<W> {
    pub fn new(inner: W) -> Self {
        Self {
            inner,
            hasher: Hasher::new(),
        }
    }

    pub fn put(&mut self, bytes: &[u8]) -> io::Result<()> {
        self.hasher.update(bytes);
        self.inner.write_all(bytes)
    }

    pub fn put_u8(&mut self, v: u8) -> io::Result<()> {
        self.put(&[v])
    }

    pub fn put_u16(&mut self, v: u16) -> io::Result<()> {
        self.put(&v.to_le_bytes())
    }

    pub fn put_u32(&mut self, v: u32) -> io::Result<()> {
        self.put(&v.to_le_bytes())
    }

    pub fn put_u64(&mut self, v: u64) -> io::Result<()> {
        self.put(&v.to_le_bytes())
    }

    pub fn put_f64(&mut self, v: f64) -> io::Result<()> {
        self.put(&v.to_le_bytes())
    }

    pub fn put_f32s(&mut self, vs: &[f32]) -> io::Result<()> {
        let mut buf = Vec::with_capacity(vs.len() * 4);
        for v in vs {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        self.put(&buf)
    }

    /// Writes a `u16` length prefix followed by the UTF-8 bytes.
    pub fn put_str(&mut self, s: &str) -> Result<()> {
        let len = u16::try_from(s.len())
            .map_err(|_| Error::InvalidConfig(format!("name longer than 65535 bytes: {s:?}")))?;
        self.put_u16(len)?;
        self.put(s.as_bytes())?;
        Ok(())
    }

    /// Appends the CRC32 of everything written so far and flushes.
    pub fn finish(mut self) -> io::Result<W> {
        let crc = self.hasher.clone().finalize();
        self.inner.write_all(&crc.to_le_bytes())?;
        self.inner.flush()?;
        Ok(self.inner)
    }
}

pub(crate) struct CrcReader<R: Read> {
    inner: R,
    hasher: Hasher,
    offset: u64,
    file: &'static str,
}

impl<R: Read> CrcReader<R> {
    pub fn new(inner: R, file: &'static str) -> Self {
        Self {
            inner,
            hasher: Hasher::new(),
            offset: 0,
            file,
        }
    }

    pub fn offset(&self) -> u64 {
        self.offset
    }

    pub fn error(&self, offset: u64, kind: FormatErrorKind) -> Error {
        Error::Format {
            file: self.file,
            offset,
            kind,
        }
    }

    fn fill_raw(&mut self, buf: &mut [u8]) -> Result<()> {
        let needed = self.offset + buf.len() as u64;
        let mut got = 0;
        while got < buf.len() {
            match self.inner.read(&mut buf[got..]) {
                Ok(0) => {
                    self.offset += got as u64;
                    return Err(self.error(self.offset, FormatErrorKind::Truncated { needed }));
                }
                Ok(n) => got += n,
                Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
                Err(e) => return Err(e.into()),
            }
        }
        self.offset = needed;
        Ok(())
    }

    pub fn fill(&mut self, buf: &mut [u8]) -> Result<()> {
        self.fill_raw(buf)?;
        self.hasher.update(buf);
        Ok(())
    }

    pub fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        let mut buf = [0u8; N];
        self.fill(&mut buf)?;
        Ok(buf)
    }

    pub fn u8(&mut self) -> Result<u8> {
        Ok(self.array::<1>()?[0])
    }

    pub fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.array()?))
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.array()?))
    }

    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.array()?))
    }

    pub fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.array()?))
    }

    /// Reads `n` floats in bounded chunks so a corrupt length cannot force a
    /// huge allocation before truncation is noticed.
    pub fn f32s(&mut self, n: usize) -> Result<Vec<f32>> {
        const CHUNK: usize = 1 << 16;
        let mut out = Vec::with_capacity(n.min(CHUNK));
        let mut buf = vec![0u8; n.min(CHUNK) * 4];
        let mut left = n;
        while left > 0 {
            let take = left.min(CHUNK);
            self.fill(&mut buf[..take * 4])?;
            out.extend(
                buf[..take * 4]
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])),
            );
            left -= take;
        }
        Ok(out)
    }

    pub fn string(&mut self) -> Result<String> {
        let len = self.u16()? as usize;
        let start = self.offset;
        let mut buf = vec![0u8; len];
        self.fill(&mut buf)?;
        String::from_utf8(buf)
            .map_err(|_| self.error(start, FormatErrorKind::InvalidValue("name is not valid UTF-8".into())))
    }

    pub fn magic(&mut self, expected: [u8; 4]) -> Result<()> {
        let found = self.array::<4>()?;
        if found != expected {
            return Err(self.error(0, FormatErrorKind::BadMagic { expected, found }));
        }
        Ok(())
    }

    pub fn version(&mut self, supported: u16) -> Result<()> {
        let at = self.offset;
        let found = self.u16()?;
        if found != supported {
            return Err(self.error(at, FormatErrorKind::UnsupportedVersion { found, supported }));
        }
        Ok(())
    }

    /// Reads and checks the trailing CRC32, then requires end of stream.
    pub fn finish(&mut self) -> Result<()> {
        let at = self.offset;
        let computed = self.hasher.clone().finalize();
        let mut raw = [0u8; 4];
        self.fill_raw(&mut raw)?;
        let stored = u32::from_le_bytes(raw);
        if stored != computed {
            return Err(self.error(at, FormatErrorKind::ChecksumMismatch { stored, computed }));
        }
        let mut probe = [0u8; 1];
        loop {
            match self.inner.read(&mut probe) {
                Ok(0) => return Ok(()),
                Ok(_) => return Err(self.error(self.offset, FormatErrorKind::TrailingBytes)),
                Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
                Err(e) => return Err(e.into()),
            }
        }
    }
}

/// Writes `path` through a temporary file in the same directory and renames
/// it into place once `body` succeeds.
pub fn write_atomic<F>(path: &Path, body: F) -> Result<()>
where
    F: FnOnce(&mut BufWriter<&mut File>) -> Result<()>,
{
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => std::path::PathBuf::from("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    {
        let mut w = BufWriter::new(tmp.as_file_mut());
        body(&mut w)?;
        w.flush()?;
    }
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}
