//! On-disk formats: annotation text files, DFF1 direction fields, and
//! PGM masks and label maps.
//!
//! Annotation files carry one instance per line as comma-separated integers
//! "x1,y1,x2,y2,...,xn,yn"; '#' starts a comment line, and the writer emits a
//! leading "# size: W,H" comment so the canvas dimensions survive the trip.
//! DFF1 is little-endian binary: the magic "DFF1", u32 width, u32 height,
//! then width*height f32 vx row-major followed by the vy plane. Masks are
//! 8-bit binary PGM (P5, 0 = background, 255 = text); label maps are 16-bit
//! PGM with big-endian samples, as the format requires for maxval > 255.

use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::field::DirectionField;
use crate::geometry::{GeometryError, Polygon, PolygonScene};
use crate::grid::{BinaryMask, Grid, InstanceMap};

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Annotation {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{path}: {message}")]
    Malformed { path: PathBuf, message: String },
    #[error("{path}: label {label} does not fit in a 16-bit PGM")]
    LabelOverflow { path: PathBuf, label: u32 },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

fn io_err(path: &Path, source: std::io::Error) -> FormatError {
    FormatError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn malformed(path: &Path, message: impl Into<String>) -> FormatError {
    FormatError::Malformed {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

/// Parsed annotation file: the declared canvas size, if any, plus one vertex
/// list per non-comment line.
#[derive(Debug, Clone)]
pub struct AnnotationFile {
    pub path: PathBuf,
    pub size: Option<(u32, u32)>,
    pub polygons: Vec<Vec<(f64, f64)>>,
}

impl AnnotationFile {
    /// Builds a validated scene. The declared size wins over `fallback`;
    /// with neither, the file cannot be interpreted.
    pub fn into_scene(self, fallback: Option<(u32, u32)>) -> Result<PolygonScene, FormatError> {
        let (w, h) = self.size.or(fallback).ok_or_else(|| {
            malformed(
                &self.path,
                "no \"# size: W,H\" header and no dimensions supplied",
            )
        })?;
        let mut instances = Vec::with_capacity(self.polygons.len());
        for (i, points) in self.polygons.into_iter().enumerate() {
            let poly = Polygon::new(points)
                .map_err(|e| malformed(&self.path, format!("instance {i}: {e}")))?;
            instances.push(poly);
        }
        PolygonScene::new(w, h, instances).map_err(FormatError::Geometry)
    }
}

/// Reads an annotation file without validating the polygons.
pub fn read_annotation(path: &Path) -> Result<AnnotationFile, FormatError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut size = None;
    let mut polygons = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            if let Some(dims) = comment.trim().strip_prefix("size:") {
                let parts: Vec<&str> = dims.split(',').map(str::trim).collect();
                let parsed = (parts.len() == 2)
                    .then(|| Some((parts[0].parse().ok()?, parts[1].parse().ok()?)))
                    .flatten();
                size = Some(parsed.ok_or_else(|| FormatError::Annotation {
                    path: path.to_path_buf(),
                    line: idx + 1,
                    message: format!("bad size header {dims:?}, expected \"W,H\""),
                })?);
            }
            continue;
        }
        let mut values = Vec::new();
        for token in line.split(',') {
            let v: i64 = token.trim().parse().map_err(|_| FormatError::Annotation {
                path: path.to_path_buf(),
                line: idx + 1,
                message: format!("{token:?} is not an integer coordinate"),
            })?;
            values.push(v as f64);
        }
        if values.len() % 2 != 0 {
            return Err(FormatError::Annotation {
                path: path.to_path_buf(),
                line: idx + 1,
                message: format!("odd coordinate count {}", values.len()),
            });
        }
        polygons.push(values.chunks(2).map(|c| (c[0], c[1])).collect());
    }
    Ok(AnnotationFile {
        path: path.to_path_buf(),
        size,
        polygons,
    })
}

/// Writes a scene in the annotation format with a "# size: W,H" header.
/// Coordinates are rounded to the nearest integer.
pub fn write_annotation(path: &Path, scene: &PolygonScene) -> Result<(), FormatError> {
    let mut out = format!("# size: {},{}\n", scene.width(), scene.height());
    for poly in scene.instances() {
        let coords: Vec<String> = poly
            .points()
            .iter()
            .flat_map(|&(x, y)| {
                [
                    format!("{}", x.round() as i64),
                    format!("{}", y.round() as i64),
                ]
            })
            .collect();
        out.push_str(&coords.join(","));
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| io_err(path, e))
}

/// Header and samples of a P5 file; samples are widened to u16.
struct Pgm {
    width: u32,
    height: u32,
    maxval: u32,
    samples: Vec<u16>,
}

fn read_pgm(path: &Path) -> Result<Pgm, FormatError> {
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err(malformed(path, "not a binary PGM (missing P5 magic)"));
    }
    // Header: three ASCII integers separated by whitespace, '#' comments
    // running to end of line, then exactly one whitespace byte before the
    // raster.
    let mut pos = 2;
    let mut fields = [0u32; 3];
    for field in fields.iter_mut() {
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while pos < bytes.len() && bytes[pos] != b'\n' {
                        pos += 1;
                    }
                }
                Some(_) => break,
                None => return Err(malformed(path, "truncated PGM header")),
            }
        }
        let start = pos;
        while pos < bytes.len() && bytes[pos].is_ascii_digit() {
            pos += 1;
        }
        if start == pos {
            return Err(malformed(path, "expected an integer in the PGM header"));
        }
        let text = std::str::from_utf8(&bytes[start..pos]).expect("digits are ASCII");
        *field = text
            .parse()
            .map_err(|_| malformed(path, format!("header value {text:?} out of range")))?;
    }
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => return Err(malformed(path, "missing whitespace before the raster")),
    }
    let [width, height, maxval] = fields;
    if width == 0 || height == 0 {
        return Err(malformed(path, "zero PGM dimensions"));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(malformed(path, format!("unsupported maxval {maxval}")));
    }
    let count = width as usize * height as usize;
    let wide = maxval > 255;
    let expected = pos + count * if wide { 2 } else { 1 };
    if bytes.len() != expected {
        return Err(malformed(
            path,
            format!("expected {expected} bytes, found {}", bytes.len()),
        ));
    }
    let samples = if wide {
        bytes[pos..]
            .chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]))
            .collect()
    } else {
        bytes[pos..].iter().map(|&b| b as u16).collect()
    };
    Ok(Pgm {
        width,
        height,
        maxval,
        samples,
    })
}

/// Writes a mask as 8-bit binary PGM: 0 background, 255 text.
pub fn write_mask_pgm(path: &Path, mask: &BinaryMask) -> Result<(), FormatError> {
    let mut bytes = format!("P5\n{} {}\n255\n", mask.width(), mask.height()).into_bytes();
    bytes.extend(mask.data().iter().map(|&b| if b { 255u8 } else { 0 }));
    fs::write(path, bytes).map_err(|e| io_err(path, e))
}

/// Reads a mask from any P5 file; every nonzero sample counts as text.
pub fn read_mask_pgm(path: &Path) -> Result<BinaryMask, FormatError> {
    let pgm = read_pgm(path)?;
    let data = pgm.samples.iter().map(|&s| s != 0).collect();
    Ok(BinaryMask::from_grid(Grid::from_vec(
        pgm.width, pgm.height, data,
    )))
}

/// Writes a label map as 16-bit binary PGM (maxval 65535, big-endian).
pub fn write_labels_pgm(path: &Path, labels: &InstanceMap) -> Result<(), FormatError> {
    if let Some(&bad) = labels.data().iter().find(|&&v| v > 65535) {
        return Err(FormatError::LabelOverflow {
            path: path.to_path_buf(),
            label: bad,
        });
    }
    let mut bytes = format!("P5\n{} {}\n65535\n", labels.width(), labels.height()).into_bytes();
    for &v in labels.data() {
        bytes.extend((v as u16).to_be_bytes());
    }
    fs::write(path, bytes).map_err(|e| io_err(path, e))
}

/// Reads a label map from an 8- or 16-bit P5 file.
pub fn read_labels_pgm(path: &Path) -> Result<InstanceMap, FormatError> {
    let pgm = read_pgm(path)?;
    let data = pgm.samples.iter().map(|&s| s as u32).collect();
    let _ = pgm.maxval;
    Ok(InstanceMap::from_grid(Grid::from_vec(
        pgm.width, pgm.height, data,
    )))
}

const DFF_MAGIC: &[u8; 4] = b"DFF1";

/// Writes a direction field in the DFF1 binary layout.
pub fn write_field_dff(path: &Path, field: &DirectionField) -> Result<(), FormatError> {
    let count = field.vx().len();
    let mut bytes = Vec::with_capacity(12 + 8 * count);
    bytes.extend_from_slice(DFF_MAGIC);
    bytes.extend(field.width().to_le_bytes());
    bytes.extend(field.height().to_le_bytes());
    for &v in field.vx() {
        bytes.extend(v.to_le_bytes());
    }
    for &v in field.vy() {
        bytes.extend(v.to_le_bytes());
    }
    fs::write(path, bytes).map_err(|e| io_err(path, e))
}

/// Reads a DFF1 field, checking the magic, the exact byte count, and that
/// every component is finite.
pub fn read_field_dff(path: &Path) -> Result<DirectionField, FormatError> {
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    if bytes.len() < 12 {
        return Err(malformed(path, "shorter than the DFF1 header"));
    }
    if &bytes[..4] != DFF_MAGIC {
        return Err(malformed(path, "bad magic, expected \"DFF1\""));
    }
    let width = u32::from_le_bytes(bytes[4..8].try_into().expect("slice is 4 bytes"));
    let height = u32::from_le_bytes(bytes[8..12].try_into().expect("slice is 4 bytes"));
    if width == 0 || height == 0 {
        return Err(malformed(path, "zero field dimensions"));
    }
    let count = width as u64 * height as u64;
    let expected = 12 + 8 * count;
    if bytes.len() as u64 != expected {
        return Err(malformed(
            path,
            format!("expected {expected} bytes, found {}", bytes.len()),
        ));
    }
    let count = count as usize;
    let read_plane = |offset: usize| -> Result<Vec<f32>, FormatError> {
        let mut plane = Vec::with_capacity(count);
        for i in 0..count {
            let at = offset + 4 * i;
            let v = f32::from_le_bytes(bytes[at..at + 4].try_into().expect("slice is 4 bytes"));
            if !v.is_finite() {
                return Err(malformed(
                    path,
                    format!("non-finite component at sample {i}"),
                ));
            }
            plane.push(v);
        }
        Ok(plane)
    };
    let vx = read_plane(12)?;
    let vy = read_plane(12 + 4 * count)?;
    Ok(DirectionField::from_planes(width, height, vx, vy))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::generate_field;

    fn tmp(name: &str) -> PathBuf {
        let dir = std::env::temp_dir().join("textfield-format-tests");
        fs::create_dir_all(&dir).unwrap();
        dir.join(name)
    }

    #[test]
    fn annotation_round_trip_keeps_scene() {
        let scene = PolygonScene::new(
            20,
            10,
            vec![
                Polygon::new(vec![(1.0, 1.0), (8.0, 1.0), (8.0, 4.0), (1.0, 4.0)]).unwrap(),
                Polygon::new(vec![(10.0, 2.0), (18.0, 3.0), (14.0, 8.0)]).unwrap(),
            ],
        )
        .unwrap();
        let path = tmp("roundtrip.txt");
        write_annotation(&path, &scene).unwrap();
        let back = read_annotation(&path).unwrap();
        assert_eq!(back.size, Some((20, 10)));
        let rebuilt = back.into_scene(None).unwrap();
        assert_eq!(rebuilt, scene);
    }

    #[test]
    fn annotation_rejects_garbage() {
        let path = tmp("bad.txt");
        fs::write(&path, "1,2,3\n").unwrap();
        assert!(matches!(
            read_annotation(&path),
            Err(FormatError::Annotation { line: 1, .. })
        ));
        fs::write(&path, "1,2,x,4,5,6\n").unwrap();
        assert!(matches!(
            read_annotation(&path),
            Err(FormatError::Annotation { line: 1, .. })
        ));
        fs::write(&path, "# size: 5\n").unwrap();
        assert!(matches!(
            read_annotation(&path),
            Err(FormatError::Annotation { line: 1, .. })
        ));
    }

    #[test]
    fn annotation_without_size_needs_fallback() {
        let path = tmp("nosize.txt");
        fs::write(&path, "# a comment\n0,0,4,0,4,4,0,4\n").unwrap();
        let file = read_annotation(&path).unwrap();
        assert_eq!(file.size, None);
        assert!(file.clone().into_scene(None).is_err());
        let scene = file.into_scene(Some((6, 6))).unwrap();
        assert_eq!(scene.width(), 6);
        assert_eq!(scene.instances().len(), 1);
    }

    #[test]
    fn mask_pgm_round_trip() {
        let mut mask = BinaryMask::new(5, 3);
        mask.set(0, 0, true);
        mask.set(4, 2, true);
        mask.set(2, 1, true);
        let path = tmp("mask.pgm");
        write_mask_pgm(&path, &mask).unwrap();
        let back = read_mask_pgm(&path).unwrap();
        assert_eq!(back, mask);
        let bytes = fs::read(&path).unwrap();
        assert_eq!(&bytes[..3], b"P5\n");
        assert_eq!(bytes.len(), "P5\n5 3\n255\n".len() + 15);
    }

    #[test]
    fn labels_pgm_round_trip_is_big_endian() {
        let mut labels = InstanceMap::new(3, 2);
        labels.set(0, 0, 1);
        labels.set(2, 1, 300);
        let path = tmp("labels.pgm");
        write_labels_pgm(&path, &labels).unwrap();
        let back = read_labels_pgm(&path).unwrap();
        assert_eq!(back, labels);
        let bytes = fs::read(&path).unwrap();
        let header = "P5\n3 2\n65535\n".len();
        assert_eq!(&bytes[header..header + 2], &[0, 1]);
        assert_eq!(&bytes[header + 10..], &[1, 44]); // 300 = 0x012C
    }

    #[test]
    fn labels_pgm_rejects_wide_labels() {
        let mut labels = InstanceMap::new(2, 1);
        labels.set(0, 0, 70000);
        assert!(matches!(
            write_labels_pgm(&tmp("wide.pgm"), &labels),
            Err(FormatError::LabelOverflow { label: 70000, .. })
        ));
    }

    #[test]
    fn pgm_header_comments_are_skipped() {
        let path = tmp("comments.pgm");
        fs::write(
            &path,
            b"P5 # written by hand\n# another\n2 1\n255\n\x00\xff",
        )
        .unwrap();
        let mask = read_mask_pgm(&path).unwrap();
        assert!(!mask.get(0, 0));
        assert!(mask.get(1, 0));
    }

    #[test]
    fn dff_round_trip_is_bit_exact() {
        let mut mask = BinaryMask::new(9, 7);
        for y in 2..=4 {
            for x in 1..=7 {
                mask.set(x, y, true);
            }
        }
        let field = generate_field(&mask);
        let path = tmp("field.dff");
        write_field_dff(&path, &field).unwrap();
        let back = read_field_dff(&path).unwrap();
        assert_eq!(back, field);
    }

    #[test]
    fn dff_rejects_truncation_and_bad_magic() {
        let path = tmp("trunc.dff");
        let field = DirectionField::new(4, 4);
        write_field_dff(&path, &field).unwrap();
        let mut bytes = fs::read(&path).unwrap();
        bytes.pop();
        fs::write(&path, &bytes).unwrap();
        let err = read_field_dff(&path).unwrap_err();
        assert!(err.to_string().contains("expected 140 bytes, found 139"));

        fs::write(&path, b"DFX1aaaaaaaaaaaa").unwrap();
        assert!(read_field_dff(&path)
            .unwrap_err()
            .to_string()
            .contains("bad magic"));
    }
}
