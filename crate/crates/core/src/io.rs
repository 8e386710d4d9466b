//! On-disk formats: binary PGM masks, raw float rasters with JSON sidecars,
//! curve CSVs and the dataset directory layout
//! (`patches/NNNN/{image.f32, image.json, gt.pgm, noisy.pgm, meta.json}`
//! plus `train.txt` / `val.txt` / `test.txt`).

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Raster;
use crate::synthdata::{DatasetPatch, PatchMeta};

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write(path, &bytes)
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    serde_json::from_slice(&read(path)?).map_err(|e| Error::Format {
        what: "JSON",
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

/// Encode a binary mask as 8-bit P5 PGM (0 background, 255 foreground).
pub fn encode_pgm(mask: &Raster) -> Result<Vec<u8>> {
    mask.ensure_binary("mask")?;
    let mut out = format!("P5\n{} {}\n255\n", mask.width(), mask.height()).into_bytes();
    out.extend(
        mask.values()
            .iter()
            .map(|&v| if v == 1.0 { 255u8 } else { 0 }),
    );
    Ok(out)
}

/// Decode a P5 PGM; any nonzero byte is foreground.
pub fn decode_pgm(bytes: &[u8], path: &Path) -> Result<Raster> {
    let bad = |reason: &str| Error::Format {
        what: "PGM",
        path: path.to_path_buf(),
        reason: reason.into(),
    };
    let mut fields = Vec::new();
    let mut i = 0;
    while fields.len() < 4 {
        while i < bytes.len() && bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        if i < bytes.len() && bytes[i] == b'#' {
            while i < bytes.len() && bytes[i] != b'\n' {
                i += 1;
            }
            continue;
        }
        let start = i;
        while i < bytes.len() && !bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        if start == i {
            return Err(bad("truncated header"));
        }
        fields.push(std::str::from_utf8(&bytes[start..i]).map_err(|_| bad("non-ASCII header"))?);
    }
    if fields[0] != "P5" {
        return Err(bad("not a binary (P5) PGM"));
    }
    let num = |s: &str| s.parse::<usize>().map_err(|_| bad("bad header number"));
    let (w, h, maxval) = (num(fields[1])?, num(fields[2])?, num(fields[3])?);
    if maxval == 0 || maxval > 255 {
        return Err(bad("only 8-bit PGM is supported"));
    }
    let data = &bytes[i + 1..];
    if data.len() != w * h {
        return Err(bad("pixel data length does not match the header"));
    }
    Raster::new(
        w,
        h,
        1,
        data.iter().map(|&b| (b != 0) as u8 as f32).collect(),
    )
}

pub fn write_pgm(path: &Path, mask: &Raster) -> Result<()> {
    write(path, &encode_pgm(mask)?)
}

pub fn read_pgm(path: &Path) -> Result<Raster> {
    decode_pgm(&read(path)?, path)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RasterShape {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
}

fn sidecar(path: &Path) -> PathBuf {
    path.with_extension("json")
}

/// Write `<name>.f32` (little-endian, row-major, channel-interleaved) and
/// its `<name>.json` shape sidecar.
pub fn write_f32_raster(path: &Path, raster: &Raster) -> Result<()> {
    let bytes: Vec<u8> = raster
        .values()
        .iter()
        .flat_map(|v| v.to_le_bytes())
        .collect();
    write(path, &bytes)?;
    write_json(
        &sidecar(path),
        &RasterShape {
            width: raster.width(),
            height: raster.height(),
            channels: raster.channels(),
        },
    )
}

pub fn read_f32_raster(path: &Path) -> Result<Raster> {
    let shape: RasterShape = read_json(&sidecar(path))?;
    let bytes = read(path)?;
    if bytes.len() != 4 * shape.width * shape.height * shape.channels {
        return Err(Error::Format {
            what: "float raster",
            path: path.to_path_buf(),
            reason: format!("{} bytes do not match shape {shape:?}", bytes.len()),
        });
    }
    let values = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Raster::new(shape.width, shape.height, shape.channels, values)
}

/// Write a curve as `epoch,acc` CSV with 1-indexed epochs.
pub fn write_curve_csv(path: &Path, values: &[f64]) -> Result<()> {
    let mut s = String::from("epoch,acc\n");
    for (i, v) in values.iter().enumerate() {
        s.push_str(&format!("{},{}\n", i + 1, v));
    }
    write(path, s.as_bytes())
}

/// Read the accuracy column of a curve CSV.
///
/// The header must contain `epoch` and `acc`; other columns are ignored.
/// Rows are taken while `epoch` keeps increasing by one from 1, so a
/// training log that rewinds after a trigger yields only its warm-up prefix.
pub fn read_curve_csv(path: &Path) -> Result<Vec<f64>> {
    let text = String::from_utf8(read(path)?).map_err(|e| Error::Format {
        what: "curve CSV",
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    let bad = |reason: String| Error::Format {
        what: "curve CSV",
        path: path.to_path_buf(),
        reason,
    };
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header: Vec<&str> = lines
        .next()
        .ok_or_else(|| bad("empty file".into()))?
        .split(',')
        .map(str::trim)
        .collect();
    let col = |name: &str| {
        header
            .iter()
            .position(|h| *h == name)
            .ok_or_else(|| bad(format!("missing column {name:?}")))
    };
    let (ei, ai) = (col("epoch")?, col("acc")?);
    let mut out = Vec::new();
    for (row, line) in lines.enumerate() {
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        let get = |i: usize| {
            cells
                .get(i)
                .ok_or_else(|| bad(format!("row {} is short", row + 2)))
        };
        let epoch: usize = get(ei)?
            .parse()
            .map_err(|_| bad(format!("bad epoch on row {}", row + 2)))?;
        if epoch != out.len() + 1 {
            break;
        }
        let acc: f64 = get(ai)?
            .parse()
            .map_err(|_| bad(format!("bad acc on row {}", row + 2)))?;
        out.push(acc);
    }
    Ok(out)
}

/// Which subset a list of patch ids belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn file_name(self) -> &'static str {
        match self {
            Split::Train => "train.txt",
            Split::Val => "val.txt",
            Split::Test => "test.txt",
        }
    }
}

pub fn patch_dir(root: &Path, id: usize) -> PathBuf {
    root.join("patches").join(format!("{id:04}"))
}

pub fn write_patch(root: &Path, id: usize, patch: &DatasetPatch) -> Result<()> {
    let dir = patch_dir(root, id);
    write_f32_raster(&dir.join("image.f32"), &patch.image)?;
    write_pgm(&dir.join("gt.pgm"), &patch.gt_mask)?;
    write_pgm(&dir.join("noisy.pgm"), &patch.noisy_mask)?;
    write_json(&dir.join("meta.json"), &patch.meta)
}

pub fn read_patch(root: &Path, id: usize) -> Result<DatasetPatch> {
    let dir = patch_dir(root, id);
    Ok(DatasetPatch {
        image: read_f32_raster(&dir.join("image.f32"))?,
        gt_mask: read_pgm(&dir.join("gt.pgm"))?,
        noisy_mask: read_pgm(&dir.join("noisy.pgm"))?,
        meta: read_json::<PatchMeta>(&dir.join("meta.json"))?,
    })
}

pub fn write_split(root: &Path, split: Split, ids: &[usize]) -> Result<()> {
    let body: String = ids.iter().map(|id| format!("{id:04}\n")).collect();
    write(&root.join(split.file_name()), body.as_bytes())
}

/// Ids listed in a split manifest; a missing manifest is an empty split.
pub fn read_split(root: &Path, split: Split) -> Result<Vec<usize>> {
    let path = root.join(split.file_name());
    if !path.exists() {
        return Ok(Vec::new());
    }
    let text = String::from_utf8_lossy(&read(&path)?).into_owned();
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(|l| {
            l.parse().map_err(|_| Error::Format {
                what: "split manifest",
                path: path.clone(),
                reason: format!("bad id {l:?}"),
            })
        })
        .collect()
}

/// All ids over every split, in split order.
pub fn read_all_ids(root: &Path) -> Result<Vec<usize>> {
    let mut ids = Vec::new();
    for split in Split::ALL {
        ids.extend(read_split(root, split)?);
    }
    Ok(ids)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pgm_round_trip_and_header() {
        let m = Raster::from_fn(5, 3, |x, y| ((x + y) % 2) as f32);
        let bytes = encode_pgm(&m).unwrap();
        assert!(bytes.starts_with(b"P5\n5 3\n255\n"));
        assert_eq!(bytes.len(), 11 + 15);
        assert_eq!(decode_pgm(&bytes, Path::new("m.pgm")).unwrap(), m);
    }

    #[test]
    fn pgm_with_comment() {
        let bytes = b"P5\n# made by hand\n2 1\n255\n\x00\xff";
        let m = decode_pgm(bytes, Path::new("c.pgm")).unwrap();
        assert_eq!(m.values(), &[0.0, 1.0]);
    }

    #[test]
    fn pgm_rejects_soft_and_malformed() {
        assert!(encode_pgm(&Raster::filled(2, 2, 1, 0.5)).is_err());
        assert!(decode_pgm(b"P2\n1 1\n255\n0", Path::new("x")).is_err());
        assert!(decode_pgm(b"P5\n2 2\n255\n\x00", Path::new("x")).is_err());
    }

    #[test]
    fn float_raster_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let r = Raster::new(3, 2, 2, (0..12).map(|i| i as f32 * 0.25 - 1.0).collect()).unwrap();
        let path = dir.path().join("x.f32");
        write_f32_raster(&path, &r).unwrap();
        let shape: RasterShape = read_json(&dir.path().join("x.json")).unwrap();
        assert_eq!(
            shape,
            RasterShape {
                width: 3,
                height: 2,
                channels: 2
            }
        );
        assert_eq!(read_f32_raster(&path).unwrap(), r);
    }

    #[test]
    fn curve_reader_stops_at_rewind() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("curve.csv");
        fs::write(&path, "step,epoch,phase,acc\n1,1,warmup,0.1\n2,2,warmup,0.2\n3,3,warmup,0.3\n4,2,corrected,0.9\n").unwrap();
        assert_eq!(read_curve_csv(&path).unwrap(), vec![0.1, 0.2, 0.3]);
        write_curve_csv(&path, &[0.5, 0.25]).unwrap();
        assert_eq!(
            fs::read_to_string(&path).unwrap(),
            "epoch,acc\n1,0.5\n2,0.25\n"
        );
        assert_eq!(read_curve_csv(&path).unwrap(), vec![0.5, 0.25]);
    }
}
