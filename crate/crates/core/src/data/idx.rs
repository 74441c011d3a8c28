//! IDX container format (big-endian header, unsigned-byte payload), optionally gzipped.

use crate::error::{Error, Result};
use flate2::read::GzDecoder;
use std::io::Read;
use std::path::Path;

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

/// An unsigned-byte IDX array.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IdxArray {
    pub dims: Vec<usize>,
    pub data: Vec<u8>,
}

impl IdxArray {
    pub fn magic(&self) -> u32 {
        0x0800 | self.dims.len() as u32
    }

    pub fn parse(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 4 {
            return Err(Error::Format("IDX file shorter than its magic".into()));
        }
        if bytes[0] != 0 || bytes[1] != 0 || bytes[2] != 0x08 {
            return Err(Error::Format(format!("bad IDX magic {:02x?}", &bytes[..4])));
        }
        let rank = bytes[3] as usize;
        let header = 4 + 4 * rank;
        if rank == 0 || bytes.len() < header {
            return Err(Error::Format("truncated IDX header".into()));
        }
        let dims: Vec<usize> = (0..rank)
            .map(|i| u32::from_be_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap()) as usize)
            .collect();
        let n: usize = dims.iter().product();
        if bytes.len() != header + n {
            return Err(Error::Format(format!(
                "IDX payload has {} bytes, header declares {n}",
                bytes.len() - header
            )));
        }
        Ok(IdxArray { dims, data: bytes[header..].to_vec() })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = self.magic().to_be_bytes().to_vec();
        for d in &self.dims {
            out.extend_from_slice(&(*d as u32).to_be_bytes());
        }
        out.extend_from_slice(&self.data);
        out
    }

    /// Reads a file, transparently gunzipping when it starts with the gzip magic.
    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let raw = std::fs::read(path.as_ref())?;
        if raw.starts_with(&[0x1f, 0x8b]) {
            let mut out = Vec::new();
            GzDecoder::new(&raw[..])
                .read_to_end(&mut out)
                .map_err(|e| Error::Format(format!("gzip: {e}")))?;
            Self::parse(&out)
        } else {
            Self::parse(&raw)
        }
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }
}
