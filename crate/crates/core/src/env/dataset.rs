//! Trajectory dataset files.
//!
//! Layout (all little-endian): magic `ASITRAJ1`, u32 trajectory count, then
//! per trajectory u32 label, u32 frame count, u16 height, u16 width,
//! u8 channels, followed by the f32 frame values in [0,1], frame-major then
//! row-major.

use std::path::Path;

use super::{EnvId, Trajectory};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const DATASET_MAGIC: &[u8; 8] = b"ASITRAJ1";

pub fn write_dataset(trajectories: &[Trajectory], path: &Path) -> Result<()> {
    std::fs::write(path, encode_dataset(trajectories)?)?;
    Ok(())
}

/// Serialize to the dataset wire format without touching the filesystem.
pub fn encode_dataset(trajectories: &[Trajectory]) -> Result<Vec<u8>> {
    if trajectories.is_empty() {
        return Err(Error::Contract("refusing to write an empty dataset".into()));
    }
    let shape = trajectories[0].frames[0].shape().to_vec();
    let mut out = Vec::new();
    out.extend_from_slice(DATASET_MAGIC);
    out.extend_from_slice(&(trajectories.len() as u32).to_le_bytes());
    for (i, traj) in trajectories.iter().enumerate() {
        if traj.frames.is_empty() {
            return Err(Error::Contract(format!("trajectory {i} has no frames")));
        }
        for f in &traj.frames {
            if f.shape() != shape {
                return Err(Error::dim(
                    "write_dataset",
                    format!("trajectory {i} frame shape {:?} vs {:?}", f.shape(), shape),
                ));
            }
        }
        let (c, h, w) = (shape[0], shape[1], shape[2]);
        out.extend_from_slice(&traj.label.to_le_bytes());
        out.extend_from_slice(&(traj.frames.len() as u32).to_le_bytes());
        out.extend_from_slice(&(h as u16).to_le_bytes());
        out.extend_from_slice(&(w as u16).to_le_bytes());
        out.push(c as u8);
        for f in &traj.frames {
            for &v in f.data() {
                out.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
    }
    Ok(out)
}

pub fn read_dataset(path: &Path, env: EnvId) -> Result<Vec<Trajectory>> {
    let bytes = std::fs::read(path)?;
    let mut pos = 0usize;
    let take = |pos: &mut usize, n: usize, what: &str| -> Result<&[u8]> {
        if *pos + n > bytes.len() {
            return Err(Error::format(*pos as u64, format!("truncated while reading {what}")));
        }
        let s = &bytes[*pos..*pos + n];
        *pos += n;
        Ok(s)
    };

    let magic = take(&mut pos, 8, "magic")?;
    if magic != DATASET_MAGIC {
        return Err(Error::format(
            0,
            format!(
                "bad magic {:?}, expected \"{}\"",
                String::from_utf8_lossy(magic),
                String::from_utf8_lossy(DATASET_MAGIC)
            ),
        ));
    }
    let count = u32::from_le_bytes(take(&mut pos, 4, "trajectory count")?.try_into().unwrap());
    let mut trajectories = Vec::with_capacity(count as usize);
    for i in 0..count {
        let label = u32::from_le_bytes(take(&mut pos, 4, "label")?.try_into().unwrap());
        let t = u32::from_le_bytes(take(&mut pos, 4, "frame count")?.try_into().unwrap()) as usize;
        let h = u16::from_le_bytes(take(&mut pos, 2, "height")?.try_into().unwrap()) as usize;
        let w = u16::from_le_bytes(take(&mut pos, 2, "width")?.try_into().unwrap()) as usize;
        let c = take(&mut pos, 1, "channels")?[0] as usize;
        if t == 0 || h == 0 || w == 0 || c == 0 {
            return Err(Error::format(
                pos as u64,
                format!("trajectory {i} declares empty dims {t}x{c}x{h}x{w}"),
            ));
        }
        let mut frames = Vec::with_capacity(t);
        for _ in 0..t {
            let frame_pos = pos as u64;
            let raw = take(&mut pos, c * h * w * 4, "frame values")?;
            let data: Vec<f64> = raw
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64)
                .collect();
            if data.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(Error::format(frame_pos, "frame value outside [0,1]"));
            }
            frames.push(Tensor::from_vec(vec![c, h, w], data).map_err(|e| {
                Error::format(frame_pos, format!("bad frame tensor: {e}"))
            })?);
        }
        trajectories.push(Trajectory { frames, label, env, seed: 0 });
    }
    if pos != bytes.len() {
        return Err(Error::format(pos as u64, "trailing bytes after last trajectory"));
    }
    Ok(trajectories)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{gen_dataset, EnvConfig};

    #[test]
    fn round_trip_is_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.bin");
        let config = EnvConfig::default_for(EnvId::ChainWorld);
        let original = gen_dataset(&config, 3, 99).unwrap();
        write_dataset(&original, &path).unwrap();
        let loaded = read_dataset(&path, EnvId::ChainWorld).unwrap();
        assert_eq!(loaded.len(), original.len());
        for (a, b) in original.iter().zip(&loaded) {
            assert_eq!(a.label, b.label);
            assert_eq!(a.frames.len(), b.frames.len());
            for (fa, fb) in a.frames.iter().zip(&b.frames) {
                assert_eq!(fa.data(), fb.data(), "frame data must survive bitwise");
            }
        }
    }

    #[test]
    fn empty_file_is_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.bin");
        std::fs::write(&path, b"").unwrap();
        let err = read_dataset(&path, EnvId::ChainWorld).unwrap_err();
        assert!(matches!(err, Error::Format { offset: 0, .. }), "{err}");
    }

    #[test]
    fn corrupt_magic_names_expected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.bin");
        std::fs::write(&path, b"WRONGMAGblahblah").unwrap();
        let err = read_dataset(&path, EnvId::ChainWorld).unwrap_err();
        assert!(err.to_string().contains("ASITRAJ1"), "{err}");
    }

    #[test]
    fn truncation_reports_offset() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trunc.bin");
        let config = EnvConfig::default_for(EnvId::ChainWorld);
        let data = gen_dataset(&config, 2, 7).unwrap();
        write_dataset(&data, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 10]).unwrap();
        let err = read_dataset(&path, EnvId::ChainWorld).unwrap_err();
        assert!(matches!(err, Error::Format { .. }), "{err}");
    }
}
