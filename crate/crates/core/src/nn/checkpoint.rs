//! Checkpoint file format.
//!
//! Layout: an 8-byte magic, a little-endian header (format version and a
//! parameter manifest of name/shape/offset), then the payload of raw
//! little-endian f64 values. Loading validates the manifest exactly:
//! unique names, contiguous ascending offsets, and a payload whose length
//! matches the manifest sum.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::nn::tensor::Tensor;

const MAGIC: &[u8; 8] = b"IACEXEC\0";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn save_checkpoint(path: &Path, tensors: &[(String, Tensor)]) -> Result<()> {
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    file.write_all(MAGIC)?;
    file.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    file.write_all(&(tensors.len() as u32).to_le_bytes())?;
    let mut offset = 0u64;
    for (name, t) in tensors {
        let bytes = name.as_bytes();
        file.write_all(&(bytes.len() as u32).to_le_bytes())?;
        file.write_all(bytes)?;
        file.write_all(&(t.rows() as u32).to_le_bytes())?;
        file.write_all(&(t.cols() as u32).to_le_bytes())?;
        file.write_all(&offset.to_le_bytes())?;
        offset += t.len() as u64;
    }
    for (_, t) in tensors {
        for &x in t.as_slice() {
            file.write_all(&x.to_le_bytes())?;
        }
    }
    Ok(())
}

fn read_exact<const N: usize>(r: &mut impl Read) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf)
        .map_err(|e| Error::Checkpoint(format!("truncated file: {e}")))?;
    Ok(buf)
}

pub fn load_checkpoint(path: &Path) -> Result<Vec<(String, Tensor)>> {
    let mut file = std::io::BufReader::new(std::fs::File::open(path)?);
    let magic = read_exact::<8>(&mut file)?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = u32::from_le_bytes(read_exact::<4>(&mut file)?);
    if version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported format version {version}"
        )));
    }
    let count = u32::from_le_bytes(read_exact::<4>(&mut file)?) as usize;
    let mut manifest = Vec::with_capacity(count);
    let mut names = std::collections::HashSet::new();
    let mut expected_offset = 0u64;
    for _ in 0..count {
        let name_len = u32::from_le_bytes(read_exact::<4>(&mut file)?) as usize;
        if name_len > 4096 {
            return Err(Error::Checkpoint("implausible name length".into()));
        }
        let mut name_buf = vec![0u8; name_len];
        file.read_exact(&mut name_buf)
            .map_err(|e| Error::Checkpoint(format!("truncated name: {e}")))?;
        let name = String::from_utf8(name_buf)
            .map_err(|_| Error::Checkpoint("non-utf8 parameter name".into()))?;
        if !names.insert(name.clone()) {
            return Err(Error::Checkpoint(format!("duplicate parameter {name}")));
        }
        let rows = u32::from_le_bytes(read_exact::<4>(&mut file)?) as usize;
        let cols = u32::from_le_bytes(read_exact::<4>(&mut file)?) as usize;
        let offset = u64::from_le_bytes(read_exact::<8>(&mut file)?);
        if offset != expected_offset {
            return Err(Error::Checkpoint(format!(
                "parameter {name}: offset {offset}, expected {expected_offset}"
            )));
        }
        expected_offset += (rows * cols) as u64;
        manifest.push((name, rows, cols));
    }
    let mut out = Vec::with_capacity(count);
    for (name, rows, cols) in manifest {
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows * cols {
            data.push(f64::from_le_bytes(read_exact::<8>(&mut file)?));
        }
        out.push((name, Tensor::new(rows, cols, data)?));
    }
    let mut extra = [0u8; 1];
    if file.read(&mut extra)? != 0 {
        return Err(Error::Checkpoint("trailing bytes after payload".into()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.ckpt");
        let tensors = vec![
            ("a".to_string(), Tensor::new(2, 3, vec![1.0, -2.0, 3.5, 0.0, 1e-300, 7.0]).unwrap()),
            ("b".to_string(), Tensor::scalar(42.0)),
        ];
        save_checkpoint(&path, &tensors).unwrap();
        let loaded = load_checkpoint(&path).unwrap();
        assert_eq!(tensors, loaded);
    }

    #[test]
    fn corrupted_magic_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.ckpt");
        std::fs::write(&path, b"NOTMAGIC rest").unwrap();
        assert!(matches!(
            load_checkpoint(&path),
            Err(Error::Checkpoint(_))
        ));
    }

    #[test]
    fn truncated_payload_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.ckpt");
        save_checkpoint(&path, &[("a".to_string(), Tensor::row(vec![1.0, 2.0]))]).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 4]).unwrap();
        assert!(load_checkpoint(&path).is_err());
    }
}
