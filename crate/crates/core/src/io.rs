//! File formats: dataset manifests, asset exports, images and tables.
//!
//! - Manifest: JSON lines, one `{seed, family, params, class_id}` record per
//!   asset. Assets are regenerated from the record, so the manifest is the
//!   dataset. Its identity is the SHA-256 of the file bytes.
//! - PLY: ASCII point cloud of occupied voxel centers in `[0, 1]^3` with
//!   8-bit colors.
//! - Raw grid:
//!   ```text
//!   SLATGRID 1\n
//!   dim <D>\n
//!   channels <C>\n
//!   end\n
//!   D^3 * C little-endian f64 values in (x, y, z, c) order
//!   ```
//! - Images: binary PGM (`P5`, depth) and PPM (`P6`, normal/appearance),
//!   values scaled by 255 and rounded.
//! - Tables: CSV with a header row; floats in shortest round-trip form.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::io::{BufRead, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::FeatureGrid;
use crate::metrics::RenderImage;
use crate::rng::{derive_seed, Rng};
use crate::shapes::{generate_asset_dim, FamilyKind, ShapeFamily, VoxelAsset};

const GRID_MAGIC: &str = "SLATGRID 1";
const MAX_ATTEMPTS: u64 = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub seed: u64,
    #[serde(flatten)]
    pub shape: ShapeFamily,
    pub class_id: usize,
}

impl ManifestRecord {
    /// Rasterize the record on a `dim^3` grid.
    pub fn asset(&self, dim: usize) -> Result<VoxelAsset> {
        if self.class_id != self.shape.kind().class_id() {
            return Err(Error::Format(format!(
                "class_id {} does not match family {}",
                self.class_id,
                self.shape.kind().name()
            )));
        }
        generate_asset_dim(&mut Rng::new(self.seed), &self.shape, dim)
    }
}

/// `count` records cycling through `families`. Record `i` draws from
/// `derive_seed(seed, i)`; a draw that rasterizes too few voxels is redrawn
/// from the next attempt seed.
pub fn build_manifest(count: usize, seed: u64, families: &[FamilyKind], dim: usize) -> Result<Vec<ManifestRecord>> {
    if families.is_empty() && count > 0 {
        return Err(Error::Parameter("no shape families given".into()));
    }
    let mut out = Vec::with_capacity(count);
    for i in 0..count {
        let kind = families[i % families.len()];
        let base = derive_seed(seed, i as u64);
        let mut found = None;
        for attempt in 0..MAX_ATTEMPTS {
            let s = derive_seed(base, attempt);
            let shape = ShapeFamily::sample(kind, &mut Rng::new(s).fork(1), dim);
            let rec = ManifestRecord {
                seed: s,
                shape,
                class_id: kind.class_id(),
            };
            if rec.asset(dim).is_ok() {
                found = Some(rec);
                break;
            }
        }
        out.push(found.ok_or_else(|| Error::Parameter(format!("could not draw a valid {} shape", kind.name())))?);
    }
    Ok(out)
}

pub fn manifest_to_string(records: &[ManifestRecord]) -> Result<String> {
    let mut s = String::new();
    for r in records {
        s.push_str(&serde_json::to_string(r)?);
        s.push('\n');
    }
    Ok(s)
}

pub fn parse_manifest(text: &str) -> Result<Vec<ManifestRecord>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| Error::Format(format!("manifest line {}: {e}", i + 1))))
        .collect()
}

pub fn write_manifest(path: impl AsRef<Path>, records: &[ManifestRecord]) -> Result<()> {
    std::fs::write(path, manifest_to_string(records)?)?;
    Ok(())
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<ManifestRecord>> {
    parse_manifest(&std::fs::read_to_string(path)?)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn manifest_hash(records: &[ManifestRecord]) -> Result<String> {
    Ok(sha256_hex(manifest_to_string(records)?.as_bytes()))
}

fn to_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn write_ply(mut w: impl Write, asset: &VoxelAsset) -> Result<()> {
    let n = asset.dim() as f64;
    let pos = asset.occupied_positions();
    write!(
        w,
        "ply\nformat ascii 1.0\nelement vertex {}\nproperty float x\nproperty float y\nproperty float z\n\
         property uchar red\nproperty uchar green\nproperty uchar blue\nend_header\n",
        pos.len()
    )?;
    for p in pos {
        let c = asset.color(p).unwrap_or([0.0; 3]);
        let f = |i: usize| (p[i] as f64 + 0.5) / n;
        writeln!(w, "{} {} {} {} {} {}", f(0) as f32, f(1) as f32, f(2) as f32, to_u8(c[0]), to_u8(c[1]), to_u8(c[2]))?;
    }
    Ok(())
}

/// Read a PLY written by [`write_ply`] back onto a `dim^3` grid. Colors are
/// recovered at 8-bit precision.
pub fn read_ply(r: impl BufRead, dim: usize, class_id: usize) -> Result<VoxelAsset> {
    let mut lines = r.lines();
    let mut count = None;
    loop {
        let line = lines.next().ok_or_else(|| Error::Format("PLY header not terminated".into()))??;
        let line = line.trim();
        if let Some(n) = line.strip_prefix("element vertex ") {
            count = Some(n.trim().parse::<usize>().map_err(|_| Error::Format(format!("bad vertex count `{n}`")))?);
        } else if line.starts_with("format") && line != "format ascii 1.0" {
            return Err(Error::Format(format!("unsupported PLY format `{line}`")));
        } else if line == "end_header" {
            break;
        }
    }
    let count = count.ok_or_else(|| Error::Format("PLY has no vertex element".into()))?;
    let (mut positions, mut colors) = (Vec::with_capacity(count), Vec::with_capacity(count));
    for _ in 0..count {
        let line = lines.next().ok_or_else(|| Error::Format("PLY body truncated".into()))??;
        let f: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse::<f64>().map_err(|_| Error::Format(format!("bad PLY value `{t}`"))))
            .collect::<Result<_>>()?;
        if f.len() != 6 {
            return Err(Error::Format(format!("PLY vertex has {} fields, expected 6", f.len())));
        }
        let cell = |x: f64| -> Result<usize> {
            let c = (x * dim as f64).floor();
            if c >= 0.0 && c < dim as f64 {
                Ok(c as usize)
            } else {
                Err(Error::Dimension(format!("PLY point {x} outside the unit cube")))
            }
        };
        positions.push([cell(f[0])?, cell(f[1])?, cell(f[2])?]);
        colors.push([f[3] / 255.0, f[4] / 255.0, f[5] / 255.0]);
    }
    VoxelAsset::from_voxels(dim, &positions, &colors, class_id)
}

pub fn write_raw_grid(mut w: impl Write, grid: &FeatureGrid) -> Result<()> {
    write!(w, "{GRID_MAGIC}\ndim {}\nchannels {}\nend\n", grid.dim(), grid.channels())?;
    for v in grid.data() {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_raw_grid(mut r: impl BufRead) -> Result<FeatureGrid> {
    let mut line = String::new();
    let mut next = |r: &mut dyn BufRead| -> Result<String> {
        line.clear();
        r.read_line(&mut line)?;
        Ok(line.trim_end_matches('\n').to_string())
    };
    if next(&mut r)? != GRID_MAGIC {
        return Err(Error::Format("not a raw grid (bad magic)".into()));
    }
    let field = |s: String, key: &str| -> Result<usize> {
        s.strip_prefix(key)
            .and_then(|v| v.trim().parse().ok())
            .ok_or_else(|| Error::Format(format!("expected `{key} <n>`, got `{s}`")))
    };
    let dim = field(next(&mut r)?, "dim")?;
    let channels = field(next(&mut r)?, "channels")?;
    if next(&mut r)? != "end" {
        return Err(Error::Format("missing header terminator".into()));
    }
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    let want = dim * dim * dim * channels * 8;
    if bytes.len() != want {
        return Err(Error::Format(format!("grid body is {} bytes, expected {want}", bytes.len())));
    }
    let data = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    FeatureGrid::from_vec(dim, channels, data)
}

/// PGM for one-channel images, PPM for three-channel ones.
pub fn write_image(mut w: impl Write, img: &RenderImage) -> Result<()> {
    let magic = match img.channels {
        1 => "P5",
        3 => "P6",
        c => return Err(Error::Dimension(format!("cannot write {c}-channel image"))),
    };
    write!(w, "{magic}\n{} {}\n255\n", img.width, img.height)?;
    let bytes: Vec<u8> = img.data.iter().map(|&v| to_u8(v)).collect();
    w.write_all(&bytes)?;
    Ok(())
}

pub fn image_extension(img: &RenderImage) -> &'static str {
    if img.channels == 1 {
        "pgm"
    } else {
        "ppm"
    }
}

/// Shortest round-trip formatting used for every float in CSV output.
pub fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

pub fn write_csv<W: Write>(w: W, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let csv_err = |e: csv::Error| Error::Format(e.to_string());
    out.write_record(header).map_err(csv_err)?;
    for row in rows {
        if row.len() != header.len() {
            return Err(Error::Dimension(format!("row has {} fields, header {}", row.len(), header.len())));
        }
        out.write_record(row).map_err(csv_err)?;
    }
    out.flush()?;
    Ok(())
}

/// Header and rows of a CSV file.
pub fn read_csv(text: &str) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let csv_err = |e: csv::Error| Error::Format(e.to_string());
    let header = r.headers().map_err(csv_err)?.iter().map(String::from).collect();
    let rows = r
        .records()
        .map(|rec| rec.map(|r| r.iter().map(String::from).collect()).map_err(csv_err))
        .collect::<Result<_>>()?;
    Ok((header, rows))
}

/// Append serializable records as JSON lines.
pub fn write_jsonl<T: Serialize>(mut w: impl Write, records: &[T]) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{render_ortho, Axis, RenderKind};

    #[test]
    fn manifest_round_trip_and_determinism() {
        let recs = build_manifest(10, 7, &FamilyKind::ALL, 16).unwrap();
        assert_eq!(recs.len(), 10);
        let text = manifest_to_string(&recs).unwrap();
        assert_eq!(parse_manifest(&text).unwrap(), recs);
        assert_eq!(text, manifest_to_string(&build_manifest(10, 7, &FamilyKind::ALL, 16).unwrap()).unwrap());
        let first: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
        let keys: Vec<_> = first.as_object().unwrap().keys().cloned().collect();
        assert_eq!(keys, ["class_id", "family", "params", "seed"]);
        for (i, r) in recs.iter().enumerate() {
            assert_eq!(r.class_id, i % 5);
            assert_eq!(r.asset(16).unwrap(), r.asset(16).unwrap());
        }
        assert_eq!(manifest_hash(&recs).unwrap().len(), 64);
        assert!(build_manifest(0, 7, &[], 16).unwrap().is_empty());
    }

    #[test]
    fn manifest_rejects_bad_records() {
        assert!(parse_manifest("{\"seed\":1,\"family\":\"blob\",\"params\":{},\"class_id\":0}\n").is_err());
        let mut r = build_manifest(1, 1, &[FamilyKind::Sphere], 16).unwrap().remove(0);
        r.class_id = 3;
        assert!(r.asset(16).is_err());
    }

    #[test]
    fn sha256_known_vector() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn ply_header_conforms() {
        let rec = build_manifest(1, 3, &[FamilyKind::Box], 16).unwrap().remove(0);
        let asset = rec.asset(16).unwrap();
        let mut buf = Vec::new();
        write_ply(&mut buf, &asset).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let (header, body) = text.split_once("end_header\n").unwrap();
        let lines: Vec<_> = header.lines().collect();
        assert_eq!(lines[0], "ply");
        assert_eq!(lines[1], "format ascii 1.0");
        assert_eq!(lines[2], format!("element vertex {}", asset.occupied_count()));
        assert_eq!(lines.len(), 9);
        let rows: Vec<_> = body.lines().collect();
        assert_eq!(rows.len(), asset.occupied_count());
        for row in rows {
            let f: Vec<_> = row.split(' ').collect();
            assert_eq!(f.len(), 6);
            for x in &f[..3] {
                let v: f32 = x.parse().unwrap();
                assert!(v > 0.0 && v < 1.0);
            }
            for c in &f[3..] {
                c.parse::<u8>().unwrap();
            }
        }
    }

    #[test]
    fn ply_round_trip() {
        let rec = &build_manifest(3, 5, &FamilyKind::ALL, 16).unwrap()[2];
        let asset = rec.asset(16).unwrap();
        let mut buf = Vec::new();
        write_ply(&mut buf, &asset).unwrap();
        let back = read_ply(buf.as_slice(), 16, rec.class_id).unwrap();
        assert_eq!(back.occupancy(), asset.occupancy());
        for p in asset.occupied_positions() {
            let (a, b) = (asset.color(p).unwrap(), back.color(p).unwrap());
            assert!(a.iter().zip(&b).all(|(x, y)| (x - y).abs() <= 0.5 / 255.0 + 1e-12));
        }
        assert!(read_ply(&b"ply\nformat binary_little_endian 1.0\nend_header\n"[..], 16, 0).is_err());
    }

    #[test]
    fn raw_grid_round_trip() {
        let g = crate::grid::gaussian_grid(&mut Rng::new(4), 4, 3);
        let mut buf = Vec::new();
        write_raw_grid(&mut buf, &g).unwrap();
        assert!(buf.starts_with(b"SLATGRID 1\ndim 4\nchannels 3\nend\n"));
        assert_eq!(read_raw_grid(&buf[..]).unwrap(), g);
        buf.pop();
        assert!(read_raw_grid(&buf[..]).is_err());
    }

    #[test]
    fn images_have_netpbm_headers() {
        let rec = build_manifest(1, 5, &[FamilyKind::Sphere], 16).unwrap().remove(0);
        let asset = rec.asset(16).unwrap();
        for kind in RenderKind::ALL {
            let img = render_ortho(&asset, Axis::Z, kind);
            let mut buf = Vec::new();
            write_image(&mut buf, &img).unwrap();
            let head = if img.channels == 1 { "P5\n16 16\n255\n" } else { "P6\n16 16\n255\n" };
            assert!(buf.starts_with(head.as_bytes()));
            assert_eq!(buf.len(), head.len() + 256 * img.channels);
        }
    }

    #[test]
    fn csv_round_trip() {
        let rows = vec![
            vec!["a".to_string(), fmt_f64(0.1 + 0.2)],
            vec!["b".to_string(), fmt_f64(f64::NAN)],
        ];
        let mut buf = Vec::new();
        write_csv(&mut buf, &["id", "value"], &rows).unwrap();
        let (h, r) = read_csv(std::str::from_utf8(&buf).unwrap()).unwrap();
        assert_eq!(h, ["id", "value"]);
        assert_eq!(r, rows);
        assert_eq!(r[0][1].parse::<f64>().unwrap(), 0.1 + 0.2);
        assert!(write_csv(Vec::new(), &["x"], &[vec![]]).is_err());
    }
}
