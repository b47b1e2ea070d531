//! Parameter checkpoint files.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic        8 bytes  "LFGPCKPT"
//! version      u32      1
//! header_len   u32      byte length of the header
//! header       UTF-8    `key=value` lines (includes `spec` and `count`)
//! count        u64      number of parameters
//! values       count x f32
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"LFGPCKPT";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    /// Ordered header entries. `count` is written automatically.
    pub header: Vec<(String, String)>,
    pub values: Vec<f64>,
}

impl Checkpoint {
    pub fn new(header: Vec<(String, String)>, values: Vec<f64>) -> Self {
        Self { header, values }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.header
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn require(&self, key: &str) -> Result<&str> {
        self.get(key)
            .ok_or_else(|| Error::Format(format!("checkpoint header lacks `{key}`")))
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        let mut text = String::new();
        for (k, v) in &self.header {
            if k.contains(['=', '\n']) || v.contains('\n') {
                return Err(Error::Format(format!(
                    "header entry `{k}` is not a single line"
                )));
            }
            if k == "count" {
                continue;
            }
            text.push_str(&format!("{k}={v}\n"));
        }
        text.push_str(&format!("count={}\n", self.values.len()));
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(text.len() as u32).to_le_bytes())?;
        w.write_all(text.as_bytes())?;
        w.write_all(&(self.values.len() as u64).to_le_bytes())?;
        for v in &self.values {
            w.write_all(&(*v as f32).to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format("not a parameter checkpoint".into()));
        }
        let version = read_u32(r)?;
        if version != VERSION {
            return Err(Error::Format(format!(
                "unsupported checkpoint version {version}"
            )));
        }
        let len = read_u32(r)? as usize;
        let mut buf = vec![0u8; len];
        r.read_exact(&mut buf)?;
        let text = String::from_utf8(buf)
            .map_err(|_| Error::Format("checkpoint header is not UTF-8".into()))?;
        let mut header = Vec::new();
        for line in text.lines() {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Format(format!("bad header line `{line}`")))?;
            if k != "count" {
                header.push((k.to_string(), v.to_string()));
            }
        }
        let mut n = [0u8; 8];
        r.read_exact(&mut n)?;
        let count = u64::from_le_bytes(n) as usize;
        let mut raw = vec![0u8; count * 4];
        r.read_exact(&mut raw)
            .map_err(|_| Error::Format(format!("checkpoint truncated, expected {count} values")))?;
        let values = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect();
        Ok(Self { header, values })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = File::open(path).map_err(|e| {
            Error::Config(format!("cannot open checkpoint {}: {e}", path.display()))
        })?;
        Self::read_from(&mut BufReader::new(f))
    }
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_in_memory() {
        let ck = Checkpoint::new(
            vec![("spec".into(), "in=2;hidden=;out=1".into())],
            vec![0.5, -1.25, 3.0],
        );
        let mut buf = Vec::new();
        ck.write_to(&mut buf).unwrap();
        assert_eq!(
            buf.len(),
            8 + 4 + 4 + "spec=in=2;hidden=;out=1\ncount=3\n".len() + 8 + 12
        );
        let back = Checkpoint::read_from(&mut buf.as_slice()).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.get("spec"), Some("in=2;hidden=;out=1"));
    }

    #[test]
    fn rejects_wrong_magic_and_truncation() {
        let mut bad = b"NOTACKPT".to_vec();
        bad.extend_from_slice(&[0; 16]);
        assert!(matches!(
            Checkpoint::read_from(&mut bad.as_slice()),
            Err(Error::Format(_))
        ));

        let mut buf = Vec::new();
        Checkpoint::new(vec![], vec![1.0, 2.0])
            .write_to(&mut buf)
            .unwrap();
        buf.truncate(buf.len() - 2);
        assert!(matches!(
            Checkpoint::read_from(&mut buf.as_slice()),
            Err(Error::Format(_))
        ));
    }
}
