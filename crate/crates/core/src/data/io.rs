//! Flat binary dataset files for cross-run and cross-language fixtures.
//!
//! Layout: header `{magic "FUSD", version u32, num_samples u32, C u32,
//! H u32, W u32, num_classes u32}`, then per sample `{label u32,
//! poisoned u8, pixels C*H*W little-endian f64}`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::data::{DatasetShard, Sample};
use crate::error::{Error, Result};

const DATASET_MAGIC: &[u8; 4] = b"FUSD";
const DATASET_VERSION: u32 = 1;

pub fn write_dataset(path: &Path, shard: &DatasetShard) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    let (c, h, wid) = shard.shape;
    w.write_all(DATASET_MAGIC)?;
    w.write_all(&DATASET_VERSION.to_le_bytes())?;
    w.write_all(&(shard.len() as u32).to_le_bytes())?;
    w.write_all(&(c as u32).to_le_bytes())?;
    w.write_all(&(h as u32).to_le_bytes())?;
    w.write_all(&(wid as u32).to_le_bytes())?;
    w.write_all(&(shard.num_classes as u32).to_le_bytes())?;
    for s in &shard.samples {
        w.write_all(&(s.label as u32).to_le_bytes())?;
        w.write_all(&[u8::from(s.poisoned)])?;
        for p in &s.pixels {
            w.write_all(&p.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_dataset(path: &Path) -> Result<DatasetShard> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != DATASET_MAGIC {
        return Err(Error::Format(format!(
            "{}: bad dataset magic {:?}",
            path.display(),
            magic
        )));
    }
    let read_u32 = |r: &mut BufReader<File>| -> Result<u32> {
        let mut buf = [0u8; 4];
        r.read_exact(&mut buf)?;
        Ok(u32::from_le_bytes(buf))
    };
    let version = read_u32(&mut r)?;
    if version != DATASET_VERSION {
        return Err(Error::Format(format!(
            "{}: unsupported dataset version {version}",
            path.display()
        )));
    }
    let num_samples = read_u32(&mut r)? as usize;
    let c = read_u32(&mut r)? as usize;
    let h = read_u32(&mut r)? as usize;
    let w = read_u32(&mut r)? as usize;
    let num_classes = read_u32(&mut r)? as usize;
    if num_classes < 2 || c == 0 || h == 0 || w == 0 {
        return Err(Error::Format(format!(
            "{}: invalid dataset header",
            path.display()
        )));
    }
    let dim = c * h * w;
    let mut samples = Vec::with_capacity(num_samples);
    for _ in 0..num_samples {
        let mut u32buf = [0u8; 4];
        r.read_exact(&mut u32buf)?;
        let label = u32::from_le_bytes(u32buf) as usize;
        if label >= num_classes {
            return Err(Error::Format(format!(
                "{}: label {label} out of range",
                path.display()
            )));
        }
        let mut flag = [0u8; 1];
        r.read_exact(&mut flag)?;
        let mut pixels = Vec::with_capacity(dim);
        let mut f64buf = [0u8; 8];
        for _ in 0..dim {
            r.read_exact(&mut f64buf)?;
            pixels.push(f64::from_le_bytes(f64buf));
        }
        samples.push(Sample {
            pixels,
            label,
            poisoned: flag[0] != 0,
        });
    }
    Ok(DatasetShard {
        samples,
        shape: (c, h, w),
        num_classes,
        owner: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::generate_synthetic;

    #[test]
    fn dataset_roundtrip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.fusd");
        let shard = generate_synthetic(3, 4, 21);
        write_dataset(&path, &shard).unwrap();
        let back = read_dataset(&path).unwrap();
        assert_eq!(back.shape, shard.shape);
        assert_eq!(back.num_classes, shard.num_classes);
        assert_eq!(back.len(), shard.len());
        for (a, b) in shard.samples.iter().zip(back.samples.iter()) {
            assert_eq!(a.label, b.label);
            assert_eq!(a.poisoned, b.poisoned);
            assert!(a
                .pixels
                .iter()
                .zip(b.pixels.iter())
                .all(|(x, y)| x.to_bits() == y.to_bits()));
        }
        // Pinned header bytes.
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(&bytes[0..4], b"FUSD");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 12);
    }

    #[test]
    fn dataset_rejects_truncation() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.fusd");
        let shard = generate_synthetic(3, 2, 1);
        write_dataset(&path, &shard).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
        assert!(read_dataset(&path).is_err());
    }
}
