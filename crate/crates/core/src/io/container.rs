//! Shared on-disk container used by series and model files.
//!
//! Layout, all integers little-endian:
//!
//! | bytes            | content                                         |
//! |------------------|-------------------------------------------------|
//! | `0..8`           | magic (`REVARWFS` or `REVARMDL`)                |
//! | `8..12`          | format version, `u32`                           |
//! | `12..16`         | header length `L` in bytes, `u32`               |
//! | `16..16+L`       | UTF-8 header, one `key: value` per line         |
//! | `16+L..`         | data section: raw blocks                        |
//!
//! Each block is announced in the header as `block.<name>: <offset> <len>`
//! with the offset measured from the start of the data section. Numeric
//! blocks hold `f64` values in little-endian byte order.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;
pub const SERIES_MAGIC: &[u8; 8] = b"REVARWFS";
pub const MODEL_MAGIC: &[u8; 8] = b"REVARMDL";
const PREAMBLE_LEN: u64 = 16;

/// What a file holds, as announced by its magic.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FileKind {
    Series,
    Model,
}

pub(crate) enum BlockData<'a> {
    F64(&'a [f64]),
    Bytes(&'a [u8]),
}

impl BlockData<'_> {
    fn byte_len(&self) -> u64 {
        match self {
            BlockData::F64(v) => 8 * v.len() as u64,
            BlockData::Bytes(b) => b.len() as u64,
        }
    }
}

pub(crate) fn escape(value: &str) -> String {
    let mut out = String::with_capacity(value.len());
    for c in value.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            c => out.push(c),
        }
    }
    out
}

pub(crate) fn unescape(value: &str) -> String {
    let mut out = String::with_capacity(value.len());
    let mut chars = value.chars();
    while let Some(c) = chars.next() {
        if c == '\\' {
            match chars.next() {
                Some('n') => out.push('\n'),
                Some('r') => out.push('\r'),
                Some(other) => out.push(other),
                None => out.push('\\'),
            }
        } else {
            out.push(c);
        }
    }
    out
}

/// Formats an `f64` so that parsing it back gives the identical bits.
pub(crate) fn fmt_f64(v: f64) -> String {
    format!("{v:e}")
}

pub(crate) fn write_container(
    path: &Path,
    magic: &[u8; 8],
    header: &[(String, String)],
    blocks: &[(&str, BlockData<'_>)],
) -> Result<()> {
    let mut text = String::new();
    for (k, v) in header {
        text.push_str(k);
        text.push_str(": ");
        text.push_str(&escape(v));
        text.push('\n');
    }
    let mut offset = 0u64;
    for (name, data) in blocks {
        let len = data.byte_len();
        text.push_str(&format!("block.{name}: {offset} {len}\n"));
        offset += len;
    }

    let io_err = |e| Error::io(path, e);
    let file = File::create(path).map_err(io_err)?;
    let mut w = BufWriter::new(file);
    w.write_all(magic).map_err(io_err)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes()).map_err(io_err)?;
    let header_len = u32::try_from(text.len()).map_err(|_| Error::invalid("io", "header too large"))?;
    w.write_all(&header_len.to_le_bytes()).map_err(io_err)?;
    w.write_all(text.as_bytes()).map_err(io_err)?;
    for (_, data) in blocks {
        match data {
            BlockData::F64(values) => {
                for v in *values {
                    w.write_all(&v.to_le_bytes()).map_err(io_err)?;
                }
            }
            BlockData::Bytes(bytes) => w.write_all(bytes).map_err(io_err)?,
        }
    }
    w.flush().map_err(io_err)?;
    Ok(())
}

/// Reads only the magic of a file.
pub fn peek_kind(path: &Path) -> Result<FileKind> {
    let mut file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut magic = [0u8; 8];
    file.read_exact(&mut magic)
        .map_err(|_| Error::format("magic", Some(0), "file shorter than the 8-byte magic"))?;
    kind_of(&magic)
}

fn kind_of(magic: &[u8]) -> Result<FileKind> {
    match magic {
        m if m == SERIES_MAGIC => Ok(FileKind::Series),
        m if m == MODEL_MAGIC => Ok(FileKind::Model),
        _ => Err(Error::format("magic", Some(0), "unknown magic")),
    }
}

/// A parsed container: header entries plus the raw data section.
pub(crate) struct RawContainer {
    pub entries: BTreeMap<String, String>,
    blocks: BTreeMap<String, (u64, u64)>,
    data: Vec<u8>,
    data_start: u64,
}

impl RawContainer {
    pub fn read(path: &Path, expected: FileKind) -> Result<Self> {
        let mut bytes = Vec::new();
        File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(path, e))?;
        Self::parse(bytes, expected)
    }

    pub fn parse(mut bytes: Vec<u8>, expected: FileKind) -> Result<Self> {
        if bytes.len() < PREAMBLE_LEN as usize {
            return Err(Error::format(
                "preamble",
                Some(0),
                "file shorter than the 16-byte preamble",
            ));
        }
        let kind = kind_of(&bytes[0..8])?;
        if kind != expected {
            return Err(Error::format(
                "magic",
                Some(0),
                format!("expected a {expected:?} file, found a {kind:?} file"),
            ));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        if version != FORMAT_VERSION {
            return Err(Error::format(
                "version",
                Some(8),
                format!("unsupported format version {version} (supported: {FORMAT_VERSION})"),
            ));
        }
        let header_len = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as u64;
        let data_start = PREAMBLE_LEN + header_len;
        if (bytes.len() as u64) < data_start {
            return Err(Error::format("header", Some(12), "header length exceeds file size"));
        }
        let text = std::str::from_utf8(&bytes[PREAMBLE_LEN as usize..data_start as usize]).map_err(|e| {
            Error::format(
                "header",
                Some(PREAMBLE_LEN + e.valid_up_to() as u64),
                "header is not valid UTF-8",
            )
        })?;

        let mut entries = BTreeMap::new();
        let mut blocks = BTreeMap::new();
        let mut line_offset = PREAMBLE_LEN;
        for line in text.split_inclusive('\n') {
            let here = line_offset;
            line_offset += line.len() as u64;
            let line = line.trim_end_matches(['\n', '\r']);
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once(": ")
                .ok_or_else(|| Error::format("header", Some(here), format!("malformed header line '{line}'")))?;
            if let Some(name) = key.strip_prefix("block.") {
                let mut parts = value.split_whitespace().map(str::parse::<u64>);
                match (parts.next(), parts.next(), parts.next()) {
                    (Some(Ok(off)), Some(Ok(len)), None) => {
                        blocks.insert(name.to_string(), (off, len));
                    }
                    _ => {
                        return Err(Error::format(
                            key,
                            Some(here),
                            format!("malformed block entry '{value}'"),
                        ));
                    }
                }
            } else if entries.insert(key.to_string(), unescape(value)).is_some() {
                return Err(Error::format(key, Some(here), "duplicate header key"));
            }
        }

        let data = bytes.split_off(data_start as usize);
        let raw = RawContainer {
            entries,
            blocks,
            data,
            data_start,
        };
        for (name, &(off, len)) in &raw.blocks {
            if off.checked_add(len).is_none_or(|end| end > raw.data.len() as u64) {
                return Err(Error::format(
                    format!("block.{name}"),
                    Some(raw.data_start + off),
                    format!(
                        "payload size mismatch: block extends past end of file ({} data bytes)",
                        raw.data.len()
                    ),
                ));
            }
        }
        Ok(raw)
    }

    pub fn str(&self, key: &str) -> Result<&str> {
        self.entries
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| Error::format(key, None, "missing header field"))
    }

    pub fn usize(&self, key: &str) -> Result<usize> {
        let raw = self.str(key)?;
        raw.parse()
            .map_err(|_| Error::format(key, None, format!("expected a non-negative integer, found '{raw}'")))
    }

    pub fn f64(&self, key: &str) -> Result<f64> {
        let raw = self.str(key)?;
        raw.parse()
            .map_err(|_| Error::format(key, None, format!("expected a number, found '{raw}'")))
    }

    /// Metadata entries stored under `prefix`, with the prefix stripped.
    pub fn prefixed(&self, prefix: &str) -> BTreeMap<String, String> {
        self.entries
            .iter()
            .filter_map(|(k, v)| k.strip_prefix(prefix).map(|s| (s.to_string(), v.clone())))
            .collect()
    }

    pub fn has_block(&self, name: &str) -> bool {
        self.blocks.contains_key(name)
    }

    fn block(&self, name: &str, expected_bytes: u64) -> Result<&[u8]> {
        let field = format!("block.{name}");
        let &(off, len) = self
            .blocks
            .get(name)
            .ok_or_else(|| Error::format(&field, None, "missing data block"))?;
        if len != expected_bytes {
            return Err(Error::format(
                field,
                Some(self.data_start + off),
                format!("payload size mismatch: header dimensions imply {expected_bytes} bytes, block holds {len}"),
            ));
        }
        Ok(&self.data[off as usize..(off + len) as usize])
    }

    pub fn block_f64(&self, name: &str, count: usize) -> Result<Vec<f64>> {
        let bytes = self.block(name, 8 * count as u64)?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    pub fn block_bytes(&self, name: &str, count: usize) -> Result<&[u8]> {
        self.block(name, count as u64)
    }

    /// Absolute file offset of a block, for error messages.
    pub fn block_offset(&self, name: &str) -> Option<u64> {
        self.blocks.get(name).map(|&(off, _)| self.data_start + off)
    }
}
