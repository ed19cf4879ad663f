//! Parameter file format:
//!
//! ```text
//! bytes 0..8    magic "DFVMPAR1"
//! bytes 8..16   header length H, u64 little-endian
//! next H bytes  UTF-8 JSON header {"config": {...}, "layers": [...], "count": N}
//! rest          N values, f64 little-endian, in layout order
//! ```

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{LayerShape, NetworkConfig, NetworkError, ParamSet};

const MAGIC: &[u8; 8] = b"DFVMPAR1";

#[derive(Serialize, Deserialize)]
struct Header {
    config: NetworkConfig,
    layers: Vec<LayerShape>,
    count: usize,
}

impl ParamSet {
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<(), NetworkError> {
        let header = Header {
            config: *self.config(),
            layers: self.layers().to_vec(),
            count: self.len(),
        };
        let json = serde_json::to_vec(&header).map_err(|e| NetworkError::Format(e.to_string()))?;
        w.write_all(MAGIC)?;
        w.write_all(&(json.len() as u64).to_le_bytes())?;
        w.write_all(&json)?;
        let mut bytes = Vec::with_capacity(self.len() * 8);
        for v in self.values() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&bytes)?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self, NetworkError> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(NetworkError::Format("bad magic".into()));
        }
        let mut len = [0u8; 8];
        r.read_exact(&mut len)?;
        let len = u64::from_le_bytes(len) as usize;
        let mut json = vec![0u8; len];
        r.read_exact(&mut json)?;
        let header: Header =
            serde_json::from_slice(&json).map_err(|e| NetworkError::Format(e.to_string()))?;
        let mut bytes = vec![0u8; header.count * 8];
        r.read_exact(&mut bytes)?;
        let values = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        let params = ParamSet::from_values(header.config, values)?;
        if params.layers() != header.layers.as_slice() {
            return Err(NetworkError::Format(
                "layer layout does not match config".into(),
            ));
        }
        Ok(params)
    }

    pub fn save(&self, path: &Path) -> Result<(), NetworkError> {
        let file = std::fs::File::create(path)?;
        self.write_to(std::io::BufWriter::new(file))
    }

    pub fn load(path: &Path) -> Result<Self, NetworkError> {
        let file = std::fs::File::open(path)?;
        Self::read_from(std::io::BufReader::new(file))
    }
}
