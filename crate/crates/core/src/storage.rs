//! Append-only record log: `u32 BE length | data | u32 BE CRC32(data)`.
//!
//! Records are mirrored in memory; when a path is given they are also
//! appended to a file and flushed before `append` returns.

use std::fs::{File, OpenOptions};
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};

pub const RECORD_OVERHEAD: usize = 8;

/// Outcome of scanning raw log bytes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Scan {
    /// `(offset, data range)` of each intact record.
    pub records: Vec<(usize, std::ops::Range<usize>)>,
    /// Byte length of the intact prefix.
    pub valid_len: usize,
    pub tail: Tail,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Tail {
    Clean,
    /// The final record is cut short.
    Truncated {
        offset: usize,
    },
    /// A complete record whose CRC does not match.
    Corrupt {
        offset: usize,
    },
}

/// Splits `bytes` into records, stopping at the first damaged one.
pub fn scan(bytes: &[u8]) -> Scan {
    let mut records = Vec::new();
    let mut off = 0;
    let tail = loop {
        if off == bytes.len() {
            break Tail::Clean;
        }
        if bytes.len() - off < 4 {
            break Tail::Truncated { offset: off };
        }
        let len = u32::from_be_bytes(bytes[off..off + 4].try_into().unwrap()) as usize;
        let end = match off.checked_add(RECORD_OVERHEAD + len) {
            Some(e) if e <= bytes.len() => e,
            _ => break Tail::Truncated { offset: off },
        };
        let data = off + 4..off + 4 + len;
        let crc = u32::from_be_bytes(bytes[end - 4..end].try_into().unwrap());
        if crc32fast::hash(&bytes[data.clone()]) != crc {
            break Tail::Corrupt { offset: off };
        }
        records.push((off, data));
        off = end;
    };
    Scan {
        records,
        valid_len: off,
        tail,
    }
}

pub fn encode_record(data: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(data.len() + RECORD_OVERHEAD);
    out.extend_from_slice(&(data.len() as u32).to_be_bytes());
    out.extend_from_slice(data);
    out.extend_from_slice(&crc32fast::hash(data).to_be_bytes());
    out
}

#[derive(Debug)]
pub struct RecordLog {
    bytes: Vec<u8>,
    offsets: Vec<usize>,
    file: Option<(PathBuf, File)>,
}

impl Default for RecordLog {
    fn default() -> Self {
        Self::in_memory()
    }
}

impl RecordLog {
    pub fn in_memory() -> Self {
        RecordLog {
            bytes: Vec::new(),
            offsets: Vec::new(),
            file: None,
        }
    }

    /// Opens (or creates) a file-backed log. A damaged tail is cut off.
    pub fn open(path: impl AsRef<Path>) -> io::Result<(Self, Tail)> {
        let path = path.as_ref().to_path_buf();
        let mut bytes = Vec::new();
        if path.exists() {
            File::open(&path)?.read_to_end(&mut bytes)?;
        }
        let s = scan(&bytes);
        bytes.truncate(s.valid_len);
        let file = OpenOptions::new()
            .create(true)
            .truncate(false)
            .write(true)
            .open(&path)?;
        file.set_len(s.valid_len as u64)?;
        let mut file = file;
        use std::io::Seek;
        file.seek(io::SeekFrom::End(0))?;
        let log = RecordLog {
            offsets: s.records.iter().map(|(o, _)| *o).collect(),
            bytes,
            file: Some((path, file)),
        };
        Ok((log, s.tail))
    }

    /// Rebuilds an in-memory log from raw bytes, dropping a damaged tail.
    pub fn from_bytes(bytes: &[u8]) -> (Self, Tail) {
        let s = scan(bytes);
        let log = RecordLog {
            offsets: s.records.iter().map(|(o, _)| *o).collect(),
            bytes: bytes[..s.valid_len].to_vec(),
            file: None,
        };
        (log, s.tail)
    }

    /// Appends a record and returns its index.
    pub fn append(&mut self, data: &[u8]) -> io::Result<usize> {
        let rec = encode_record(data);
        if let Some((_, f)) = &mut self.file {
            f.write_all(&rec)?;
            f.flush()?;
        }
        self.offsets.push(self.bytes.len());
        self.bytes.extend_from_slice(&rec);
        Ok(self.offsets.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offsets.is_empty()
    }

    pub fn get(&self, index: usize) -> Option<&[u8]> {
        let off = *self.offsets.get(index)?;
        let len = u32::from_be_bytes(self.bytes[off..off + 4].try_into().unwrap()) as usize;
        Some(&self.bytes[off + 4..off + 4 + len])
    }

    pub fn offset_of(&self, index: usize) -> Option<usize> {
        self.offsets.get(index).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = &[u8]> + '_ {
        (0..self.len()).filter_map(|i| self.get(i))
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.bytes
    }

    pub fn path(&self) -> Option<&Path> {
        self.file.as_ref().map(|(p, _)| p.as_path())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn append_and_read_back() {
        let mut log = RecordLog::in_memory();
        log.append(b"alpha").unwrap();
        log.append(b"").unwrap();
        log.append(b"gamma").unwrap();
        assert_eq!(log.len(), 3);
        assert_eq!(log.get(1), Some(&b""[..]));
        assert_eq!(
            log.iter().collect::<Vec<_>>(),
            vec![&b"alpha"[..], b"", b"gamma"]
        );
        assert_eq!(log.offset_of(1), Some(13));
    }

    #[test]
    fn torn_tail_is_reported_and_dropped() {
        let mut log = RecordLog::in_memory();
        log.append(b"one").unwrap();
        log.append(b"two").unwrap();
        let bytes = log.as_bytes();
        let (back, tail) = RecordLog::from_bytes(&bytes[..bytes.len() - 2]);
        assert_eq!(back.len(), 1);
        assert_eq!(tail, Tail::Truncated { offset: 11 });
    }

    #[test]
    fn crc_mismatch_stops_the_scan() {
        let mut log = RecordLog::in_memory();
        log.append(b"one").unwrap();
        log.append(b"two").unwrap();
        let mut bytes = log.as_bytes().to_vec();
        bytes[16] ^= 0x40;
        let s = scan(&bytes);
        assert_eq!(s.records.len(), 1);
        assert_eq!(s.tail, Tail::Corrupt { offset: 11 });
    }

    #[test]
    fn file_log_survives_reopen_with_torn_tail() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("log.bin");
        {
            let (mut log, tail) = RecordLog::open(&path).unwrap();
            assert_eq!(tail, Tail::Clean);
            log.append(b"first").unwrap();
            log.append(b"second").unwrap();
        }
        let len = std::fs::metadata(&path).unwrap().len();
        OpenOptions::new()
            .write(true)
            .open(&path)
            .unwrap()
            .set_len(len - 3)
            .unwrap();
        let (mut log, tail) = RecordLog::open(&path).unwrap();
        assert!(matches!(tail, Tail::Truncated { .. }));
        assert_eq!(log.len(), 1);
        log.append(b"third").unwrap();
        drop(log);
        let (log, tail) = RecordLog::open(&path).unwrap();
        assert_eq!(tail, Tail::Clean);
        assert_eq!(
            log.iter().collect::<Vec<_>>(),
            vec![&b"first"[..], b"third"]
        );
    }
}
