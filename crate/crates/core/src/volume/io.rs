//! OVOL volume files and tab-separated dataset manifests.
//!
//! OVOL layout: three little-endian `u32` (nx, ny, nz), then `nx*ny*nz`
//! little-endian `f32` values, x fastest. Masks use the same layout with
//! values restricted to 0.0 and 1.0.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use super::{voxel_count, Block, Mask3D, Region, Volume3D};
use crate::error::{Error, Result};

pub fn encode_ovol(dims: [usize; 3], values: impl Iterator<Item = f32>) -> Vec<u8> {
    let mut buf = Vec::with_capacity(12 + 4 * voxel_count(dims));
    for d in dims {
        buf.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for v in values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    buf
}

pub fn decode_ovol(bytes: &[u8]) -> Result<([usize; 3], Vec<f32>)> {
    if bytes.len() < 12 {
        return Err(Error::Format(format!("OVOL header truncated ({} bytes)", bytes.len())));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[4 * i..4 * i + 4].try_into().unwrap()) as usize;
    let dims = [word(0), word(1), word(2)];
    let n = voxel_count(dims);
    let body = &bytes[12..];
    if body.len() != 4 * n {
        return Err(Error::Format(format!(
            "OVOL body has {} bytes, dims {:?} need {}",
            body.len(),
            dims,
            4 * n
        )));
    }
    let values = body.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
    Ok((dims, values))
}

pub fn write_volume(path: &Path, volume: &Volume3D) -> Result<()> {
    let bytes = encode_ovol(volume.dims(), volume.values().iter().map(|&v| v as f32));
    fs::write(path, bytes)?;
    Ok(())
}

pub fn read_volume(path: &Path) -> Result<Volume3D> {
    let bytes = fs::read(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let (dims, values) = decode_ovol(&bytes)?;
    Volume3D::new(dims, values.into_iter().map(f64::from).collect())
}

pub fn write_mask(path: &Path, mask: &Mask3D) -> Result<()> {
    let bytes = encode_ovol(mask.dims(), mask.values().iter().map(|&v| f32::from(v)));
    fs::write(path, bytes)?;
    Ok(())
}

pub fn read_mask(path: &Path) -> Result<Mask3D> {
    let bytes = fs::read(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let (dims, values) = decode_ovol(&bytes)?;
    let mut bits = Vec::with_capacity(values.len());
    for v in values {
        match v {
            x if x == 0.0 => bits.push(0),
            x if x == 1.0 => bits.push(1),
            other => return Err(Error::Format(format!("{}: mask value {other} not in {{0,1}}", path.display()))),
        }
    }
    Mask3D::new(dims, bits)
}

/// One manifest line. Relative paths resolve against the manifest directory.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub id: String,
    pub left_volume: PathBuf,
    pub left_mask: PathBuf,
    pub right_volume: PathBuf,
    pub right_mask: PathBuf,
    pub label: Option<usize>,
}

impl ManifestEntry {
    pub fn to_line(&self) -> String {
        let label = self.label.map_or_else(|| "?".to_string(), |l| l.to_string());
        format!(
            "{}\t{}\t{}\t{}\t{}\t{}",
            self.id,
            self.left_volume.display(),
            self.left_mask.display(),
            self.right_volume.display(),
            self.right_mask.display(),
            label
        )
    }
}

pub fn parse_manifest(text: &str, base: &Path) -> Result<Vec<ManifestEntry>> {
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 6 {
            return Err(Error::Format(format!(
                "manifest line {}: expected 6 tab-separated fields, got {}",
                lineno + 1,
                fields.len()
            )));
        }
        let label = match fields[5].trim() {
            "?" => None,
            s => Some(s.parse::<usize>().ok().filter(|&l| l >= 1).ok_or_else(|| {
                Error::Format(format!("manifest line {}: bad label {s:?}", lineno + 1))
            })?),
        };
        let resolve = |p: &str| {
            let p = PathBuf::from(p);
            if p.is_absolute() {
                p
            } else {
                base.join(p)
            }
        };
        out.push(ManifestEntry {
            id: fields[0].to_string(),
            left_volume: resolve(fields[1]),
            left_mask: resolve(fields[2]),
            right_volume: resolve(fields[3]),
            right_mask: resolve(fields[4]),
            label,
        });
    }
    Ok(out)
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    let text = fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    parse_manifest(&text, base)
}

pub fn load_region(entry: &ManifestEntry) -> Result<Region> {
    let left = Block::new(read_volume(&entry.left_volume)?, read_mask(&entry.left_mask)?)?;
    let right = Block::new(read_volume(&entry.right_volume)?, read_mask(&entry.right_mask)?)?;
    Region::new(entry.id.clone(), left, right, entry.label)
}

pub fn load_regions(manifest: &Path) -> Result<Vec<Region>> {
    read_manifest(manifest)?.iter().map(load_region).collect()
}

/// Write every region as four OVOL files under `dir` plus `dir/manifest.tsv`
/// with relative paths. Returns the manifest path.
pub fn write_regions(dir: &Path, regions: &[Region]) -> Result<PathBuf> {
    let vol_dir = dir.join("volumes");
    fs::create_dir_all(&vol_dir)?;
    let manifest_path = dir.join("manifest.tsv");
    let mut manifest = fs::File::create(&manifest_path)?;
    for r in regions {
        let stem = sanitize(&r.id);
        let rel = |suffix: &str| PathBuf::from("volumes").join(format!("{stem}_{suffix}.ovol"));
        let entry = ManifestEntry {
            id: r.id.clone(),
            left_volume: rel("lv"),
            left_mask: rel("lm"),
            right_volume: rel("rv"),
            right_mask: rel("rm"),
            label: r.label,
        };
        write_volume(&dir.join(&entry.left_volume), &r.left.volume)?;
        write_mask(&dir.join(&entry.left_mask), &r.left.mask)?;
        write_volume(&dir.join(&entry.right_volume), &r.right.volume)?;
        write_mask(&dir.join(&entry.right_mask), &r.right.mask)?;
        writeln!(manifest, "{}", entry.to_line())?;
    }
    Ok(manifest_path)
}

fn sanitize(id: &str) -> String {
    id.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ovol_layout_is_little_endian_x_fastest() {
        let bytes = encode_ovol([2, 1, 1], [1.5f32, -2.0].into_iter());
        assert_eq!(&bytes[0..4], &[2, 0, 0, 0]);
        assert_eq!(&bytes[4..8], &[1, 0, 0, 0]);
        assert_eq!(&bytes[12..16], &1.5f32.to_le_bytes());
        assert_eq!(&bytes[16..20], &(-2.0f32).to_le_bytes());
        let (dims, vals) = decode_ovol(&bytes).unwrap();
        assert_eq!(dims, [2, 1, 1]);
        assert_eq!(vals, vec![1.5, -2.0]);
    }

    #[test]
    fn ovol_rejects_truncation() {
        let mut bytes = encode_ovol([2, 2, 2], std::iter::repeat(0.0).take(8));
        bytes.pop();
        assert!(decode_ovol(&bytes).is_err());
        assert!(decode_ovol(&[0u8; 5]).is_err());
    }

    #[test]
    fn manifest_parsing() {
        let text = "# header\ns1\ta.ovol\tb.ovol\tc.ovol\td.ovol\t3\ns2\t/x/a\tb\tc\td\t?\n";
        let m = parse_manifest(text, Path::new("/data")).unwrap();
        assert_eq!(m.len(), 2);
        assert_eq!(m[0].label, Some(3));
        assert_eq!(m[0].left_volume, PathBuf::from("/data/a.ovol"));
        assert_eq!(m[1].label, None);
        assert_eq!(m[1].left_volume, PathBuf::from("/x/a"));
        assert!(parse_manifest("s\ta\tb\tc\td\n", Path::new(".")).is_err());
        assert!(parse_manifest("s\ta\tb\tc\td\t0\n", Path::new(".")).is_err());
    }
}
