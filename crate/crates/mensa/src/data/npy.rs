//! Dataset I/O: a minimal `.npy` codec plus the on-disk dataset layout
//! `<root>/<domain>/<class>/<split>/*.npy`.
//!
//! The codec handles exactly what point-cloud datasets in that layout use:
//! version 1.0 files holding little-endian f32, C-order, 2-D arrays.

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::{Array2, ArrayView2};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::rng;

use super::{normalize_unit_sphere, resample_points, DomainDataset, PointCloud, Split};

// ── npy codec ───────────────────────────────────────────────────────────────

const MAGIC: &[u8; 6] = b"\x93NUMPY";

/// Serialize a 2-D f32 array as a version-1.0 `.npy` file.
pub fn write_npy(path: &Path, data: &ArrayView2<f32>) -> Result<()> {
    let (rows, cols) = data.dim();
    let dict = format!("{{'descr': '<f4', 'fortran_order': False, 'shape': ({rows}, {cols}), }}");
    let unpadded = MAGIC.len() + 4 + dict.len() + 1;
    let pad = (64 - unpadded % 64) % 64;
    let header = format!("{dict}{}\n", " ".repeat(pad));
    let mut buf = Vec::with_capacity(MAGIC.len() + 4 + header.len() + rows * cols * 4);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&[1u8, 0u8]);
    buf.extend_from_slice(&(header.len() as u16).to_le_bytes());
    buf.extend_from_slice(header.as_bytes());
    for v in data.iter() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

/// Read a version-1.0 `.npy` file holding a little-endian f32 2-D array.
pub fn read_npy(path: &Path) -> Result<Array2<f32>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let (rows, cols, data_start) =
        parse_header(&bytes).map_err(|reason| Error::data(path, reason))?;
    let expected = rows * cols * 4;
    let data = &bytes[data_start..];
    if data.len() != expected {
        return Err(Error::data(
            path,
            format!("expected {expected} data bytes for shape ({rows}, {cols}), found {}", data.len()),
        ));
    }
    let mut out = Array2::<f32>::zeros((rows, cols));
    for (i, v) in out.iter_mut().enumerate() {
        let o = i * 4;
        *v = f32::from_le_bytes([data[o], data[o + 1], data[o + 2], data[o + 3]]);
    }
    Ok(out)
}

/// Parse header bytes; returns (rows, cols, data offset).
fn parse_header(bytes: &[u8]) -> std::result::Result<(usize, usize, usize), String> {
    if bytes.len() < 10 || &bytes[..6] != MAGIC {
        return Err("not a .npy file (bad magic)".into());
    }
    if bytes[6] != 1 || bytes[7] != 0 {
        return Err(format!("unsupported .npy version {}.{}", bytes[6], bytes[7]));
    }
    let hlen = u16::from_le_bytes([bytes[8], bytes[9]]) as usize;
    let data_start = 10 + hlen;
    if bytes.len() < data_start {
        return Err("truncated header".into());
    }
    let header = std::str::from_utf8(&bytes[10..data_start])
        .map_err(|_| "header is not valid UTF-8".to_string())?;

    let descr = dict_value(header, "descr").ok_or("header missing 'descr'")?;
    let descr = descr.trim_matches(|c| c == '\'' || c == '"');
    if descr != "<f4" {
        return Err(format!("unsupported dtype {descr}, expected <f4"));
    }
    let fortran = dict_value(header, "fortran_order").ok_or("header missing 'fortran_order'")?;
    if fortran != "False" {
        return Err("only C-order arrays are supported".into());
    }
    let shape = dict_value(header, "shape").ok_or("header missing 'shape'")?;
    let dims: Vec<usize> = shape
        .trim_start_matches('(')
        .trim_end_matches(')')
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<usize>().map_err(|_| format!("bad shape entry `{s}`")))
        .collect::<std::result::Result<_, _>>()?;
    if dims.len() != 2 {
        return Err(format!("expected a 2-D array, got {}-D shape {shape}", dims.len()));
    }
    Ok((dims[0], dims[1], data_start))
}

/// Extract the raw value string of one key in the python-dict header.
fn dict_value<'a>(header: &'a str, key: &str) -> Option<&'a str> {
    let needle = format!("'{key}':");
    let start = header.find(&needle)? + needle.len();
    let rest = header[start..].trim_start();
    let end = if rest.starts_with('(') {
        rest.find(')')? + 1
    } else {
        rest.find(',').unwrap_or(rest.len())
    };
    Some(rest[..end].trim())
}

/// Cheap structural check: parse the header and verify the payload size
/// against the file length without reading the data.
pub fn peek_npy(path: &Path) -> Result<(usize, usize)> {
    let file_len = fs::metadata(path).map_err(|e| Error::io(path, e))?.len() as usize;
    let mut head = vec![0u8; 2048.min(file_len)];
    {
        use std::io::Read;
        let mut f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        f.read_exact(&mut head).map_err(|e| Error::io(path, e))?;
    }
    let (rows, cols, data_start) = parse_header(&head).map_err(|r| Error::data(path, r))?;
    if file_len != data_start + rows * cols * 4 {
        return Err(Error::data(
            path,
            format!("file length {file_len} does not match shape ({rows}, {cols})"),
        ));
    }
    Ok((rows, cols))
}

// ── dataset layout ──────────────────────────────────────────────────────────

/// Sorted subdirectory names of `dir`.
fn sorted_subdirs(dir: &Path) -> Result<Vec<String>> {
    let mut names = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        if entry.path().is_dir() {
            names.push(entry.file_name().to_string_lossy().into_owned());
        }
    }
    names.sort();
    Ok(names)
}

/// Sorted `.npy` file paths directly inside `dir`.
fn sorted_npy_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let path = entry.path();
        if path.is_file() && path.extension().is_some_and(|e| e == "npy") {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

/// Load one split of one domain from `<root>/<domain>/<class>/<split>/*.npy`.
///
/// Every cloud is normalized to the unit sphere and resampled to `n_points`
/// with a generator derived from (`seed`, domain, class index, file index),
/// so reloading is deterministic regardless of directory traversal order.
pub fn load_domain_dir(
    root: &Path,
    domain: &str,
    domain_id: usize,
    split: Split,
    n_points: usize,
    seed: u64,
) -> Result<DomainDataset> {
    let domain_dir = root.join(domain);
    let class_names = sorted_subdirs(&domain_dir)?;
    if class_names.is_empty() {
        return Err(Error::data(&domain_dir, "no class subdirectories found"));
    }
    let tag = format!("load:{domain}:{}", split.dir_name());
    let mut samples = Vec::new();
    for (class_id, class) in class_names.iter().enumerate() {
        let split_dir = domain_dir.join(class).join(split.dir_name());
        let files = sorted_npy_files(&split_dir)?;
        if files.is_empty() {
            return Err(Error::data(&split_dir, "no .npy files found"));
        }
        for (file_idx, file) in files.iter().enumerate() {
            let mut pts = read_npy(file)?;
            if pts.ncols() != 3 {
                return Err(Error::data(
                    file,
                    format!("expected M×3 points, got {}×{}", pts.nrows(), pts.ncols()),
                ));
            }
            if pts.nrows() == 0 {
                return Err(Error::data(file, "empty point cloud"));
            }
            normalize_unit_sphere(&mut pts)?;
            let mut r: ChaCha8Rng =
                rng::stream(seed, &tag, ((class_id as u64) << 32) | file_idx as u64);
            let pts = resample_points(&pts.view(), n_points, &mut r)?;
            samples.push(PointCloud { points: pts, class_id, domain_id });
        }
    }
    Ok(DomainDataset {
        name: domain.to_string(),
        domain_id,
        split,
        class_names,
        samples,
    })
}

/// Write a dataset into the standard layout under `root`.
pub fn export_domain(ds: &DomainDataset, root: &Path) -> Result<()> {
    let mut per_class = vec![0usize; ds.class_names.len()];
    for s in &ds.samples {
        let dir = root
            .join(&ds.name)
            .join(&ds.class_names[s.class_id])
            .join(ds.split.dir_name());
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let file = dir.join(format!("{:04}.npy", per_class[s.class_id]));
        per_class[s.class_id] += 1;
        write_npy(&file, &s.points.view())?;
    }
    Ok(())
}

/// Write a plain-text `key = value` manifest describing generated data.
pub fn write_manifest(path: &Path, entries: &[(String, String)]) -> Result<()> {
    let mut text = String::new();
    for (k, v) in entries {
        text.push_str(&format!("{k} = {v}\n"));
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

// ── layout validation ───────────────────────────────────────────────────────

/// Per-domain summary produced by [`validate_layout`].
#[derive(Debug, Clone)]
pub struct DomainSummary {
    pub name: String,
    pub classes: Vec<String>,
    /// (train, test) file counts per class, aligned with `classes`.
    pub counts: Vec<(usize, usize)>,
}

/// Check that `root` holds a well-formed dataset layout and summarize it.
///
/// Verifies: at least one domain, consistent class sets across domains, both
/// splits present per class, and a structurally valid `.npy` header on every
/// file.
pub fn validate_layout(root: &Path) -> Result<Vec<DomainSummary>> {
    let domains = sorted_subdirs(root)?;
    if domains.is_empty() {
        return Err(Error::data(root, "no domain subdirectories found"));
    }
    let mut summaries = Vec::new();
    let mut reference_classes: Option<Vec<String>> = None;
    for domain in &domains {
        let domain_dir = root.join(domain);
        let classes = sorted_subdirs(&domain_dir)?;
        if classes.is_empty() {
            return Err(Error::data(&domain_dir, "no class subdirectories found"));
        }
        match &reference_classes {
            None => reference_classes = Some(classes.clone()),
            Some(reference) => {
                if *reference != classes {
                    return Err(Error::data(
                        &domain_dir,
                        format!("class set {classes:?} differs from {reference:?}"),
                    ));
                }
            }
        }
        let mut counts = Vec::new();
        for class in &classes {
            let mut split_counts = (0usize, 0usize);
            for split in [Split::Train, Split::Test] {
                let split_dir = domain_dir.join(class).join(split.dir_name());
                let files = sorted_npy_files(&split_dir)?;
                if files.is_empty() {
                    return Err(Error::data(&split_dir, "no .npy files found"));
                }
                for file in &files {
                    let (_, cols) = peek_npy(file)?;
                    if cols != 3 {
                        return Err(Error::data(file, format!("expected M×3 points, got M×{cols}")));
                    }
                }
                match split {
                    Split::Train => split_counts.0 = files.len(),
                    Split::Test => split_counts.1 = files.len(),
                }
            }
            counts.push(split_counts);
        }
        summaries.push(DomainSummary { name: domain.clone(), classes, counts });
    }
    Ok(summaries)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use tempfile::tempdir;

    #[test]
    fn npy_roundtrip_is_exact() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("cloud.npy");
        let data = array![[1.0f32, -2.5, 3.25], [0.0, 1e-7, -1e7], [f32::MIN, f32::MAX, 0.5]];
        write_npy(&path, &data.view()).unwrap();
        let back = read_npy(&path).unwrap();
        assert_eq!(back, data);
        assert_eq!(peek_npy(&path).unwrap(), (3, 3));
    }

    #[test]
    fn npy_header_is_64_byte_aligned() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("a.npy");
        write_npy(&path, &Array2::<f32>::zeros((4, 3)).view()).unwrap();
        let bytes = fs::read(&path).unwrap();
        let hlen = u16::from_le_bytes([bytes[8], bytes[9]]) as usize;
        assert_eq!((10 + hlen) % 64, 0);
        assert_eq!(bytes[10 + hlen - 1], b'\n');
    }

    #[test]
    fn reader_rejects_bad_magic() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("bad.npy");
        fs::write(&path, b"not numpy at all").unwrap();
        let err = read_npy(&path).unwrap_err();
        assert!(err.to_string().contains("bad magic"), "{err}");
        assert!(err.to_string().contains("bad.npy"));
    }

    #[test]
    fn reader_rejects_wrong_dtype_and_order() {
        let dir = tempdir().unwrap();
        for (name, dict) in [
            ("i4.npy", "{'descr': '<i4', 'fortran_order': False, 'shape': (2, 3), }"),
            ("f8.npy", "{'descr': '<f8', 'fortran_order': False, 'shape': (2, 3), }"),
            ("fortran.npy", "{'descr': '<f4', 'fortran_order': True, 'shape': (2, 3), }"),
            ("threed.npy", "{'descr': '<f4', 'fortran_order': False, 'shape': (2, 3, 4), }"),
        ] {
            let path = dir.path().join(name);
            let mut buf = Vec::new();
            buf.extend_from_slice(MAGIC);
            buf.extend_from_slice(&[1u8, 0u8]);
            let header = format!("{dict}\n");
            buf.extend_from_slice(&(header.len() as u16).to_le_bytes());
            buf.extend_from_slice(header.as_bytes());
            buf.extend_from_slice(&vec![0u8; 96]);
            fs::write(&path, buf).unwrap();
            assert!(read_npy(&path).is_err(), "{name} should be rejected");
        }
    }

    #[test]
    fn reader_rejects_truncated_payload() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("trunc.npy");
        write_npy(&path, &Array2::<f32>::ones((8, 3)).view()).unwrap();
        let mut bytes = fs::read(&path).unwrap();
        bytes.truncate(bytes.len() - 5);
        fs::write(&path, bytes).unwrap();
        let err = read_npy(&path).unwrap_err();
        assert!(err.to_string().contains("data bytes"), "{err}");
    }

    fn write_layout(root: &Path, domain: &str, class: &str, split: &str, files: usize, rows: usize) {
        let dir = root.join(domain).join(class).join(split);
        fs::create_dir_all(&dir).unwrap();
        for i in 0..files {
            let data = Array2::<f32>::from_shape_fn((rows, 3), |(r, c)| (i + r * 3 + c) as f32);
            write_npy(&dir.join(format!("{i:03}.npy")), &data.view()).unwrap();
        }
    }

    #[test]
    fn load_domain_dir_reads_sorted_classes() {
        let dir = tempdir().unwrap();
        let root = dir.path();
        // Intentionally created out of alphabetical order.
        write_layout(root, "dom", "zebra", "train", 2, 32);
        write_layout(root, "dom", "apple", "train", 3, 32);
        write_layout(root, "dom", "zebra", "test", 1, 32);
        write_layout(root, "dom", "apple", "test", 1, 32);
        let ds = load_domain_dir(root, "dom", 0, Split::Train, 16, 7).unwrap();
        assert_eq!(ds.class_names, vec!["apple", "zebra"]);
        assert_eq!(ds.len(), 5);
        assert_eq!(ds.class_counts(), vec![3, 2]);
        for s in &ds.samples {
            assert_eq!(s.points.shape(), &[16, 3]);
            let max_r = s
                .points
                .rows()
                .into_iter()
                .map(|p| p.iter().map(|v| v * v).sum::<f32>().sqrt())
                .fold(0.0f32, f32::max);
            assert!(max_r <= 1.0 + 1e-5);
        }
        // Reloading is bit-identical.
        let again = load_domain_dir(root, "dom", 0, Split::Train, 16, 7).unwrap();
        for (a, b) in ds.samples.iter().zip(&again.samples) {
            assert_eq!(a.points, b.points);
        }
    }

    #[test]
    fn load_domain_dir_resamples_up_to_n() {
        let dir = tempdir().unwrap();
        write_layout(dir.path(), "dom", "thing", "train", 1, 3);
        let ds = load_domain_dir(dir.path(), "dom", 0, Split::Train, 1024, 0).unwrap();
        assert_eq!(ds.samples[0].points.shape(), &[1024, 3]);
    }

    #[test]
    fn load_domain_dir_rejects_wrong_width() {
        let dir = tempdir().unwrap();
        let class_dir = dir.path().join("dom/thing/train");
        fs::create_dir_all(&class_dir).unwrap();
        let bad = Array2::<f32>::zeros((5, 2));
        write_npy(&class_dir.join("bad.npy"), &bad.view()).unwrap();
        let err = load_domain_dir(dir.path(), "dom", 0, Split::Train, 16, 0).unwrap_err();
        assert!(err.to_string().contains("bad.npy"), "{err}");
        assert!(err.to_string().contains("M×3"), "{err}");
    }

    #[test]
    fn load_domain_dir_reports_missing_directory() {
        let dir = tempdir().unwrap();
        let err = load_domain_dir(dir.path(), "nope", 0, Split::Train, 16, 0).unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
        assert!(err.to_string().contains("nope"));
    }

    #[test]
    fn export_then_load_roundtrips() {
        use crate::data::synthetic::{generate_domain, DomainShiftSpec, ShapeKind, SynthSpec};
        // Class names already in sorted order so loader ids line up.
        let spec = SynthSpec {
            classes: vec![ShapeKind::Box, ShapeKind::Cone],
            per_class: 2,
            test_per_class: 1,
            cloud_points: 32,
            surface_points: 64,
            seed: 5,
        };
        let ds = generate_domain(&spec, &DomainShiftSpec::identity("clean"), 0, Split::Train)
            .unwrap();
        let dir = tempdir().unwrap();
        export_domain(&ds, dir.path()).unwrap();
        // Loading re-normalizes and resamples n→n (a row permutation), so the
        // multiset of re-normalized original points must survive.
        let back = load_domain_dir(dir.path(), "clean", 0, Split::Train, 32, 9).unwrap();
        assert_eq!(back.len(), ds.len());
        assert_eq!(back.class_names, ds.class_names);
        // Exported order groups by class; loader sorts classes, both match.
        for (a, b) in ds.samples.iter().zip(&back.samples) {
            let mut renorm = a.points.clone();
            normalize_unit_sphere(&mut renorm).unwrap();
            let mut pa: Vec<[u32; 3]> = renorm
                .rows()
                .into_iter()
                .map(|p| [p[0].to_bits(), p[1].to_bits(), p[2].to_bits()])
                .collect();
            let mut pb: Vec<[u32; 3]> = b
                .points
                .rows()
                .into_iter()
                .map(|p| [p[0].to_bits(), p[1].to_bits(), p[2].to_bits()])
                .collect();
            pa.sort_unstable();
            pb.sort_unstable();
            assert_eq!(pa, pb);
            assert_eq!(a.class_id, b.class_id);
        }
    }

    #[test]
    fn validate_layout_accepts_good_and_rejects_inconsistent() {
        let dir = tempdir().unwrap();
        let root = dir.path();
        for domain in ["d0", "d1"] {
            for class in ["box", "cone"] {
                write_layout(root, domain, class, "train", 2, 16);
                write_layout(root, domain, class, "test", 1, 16);
            }
        }
        let summary = validate_layout(root).unwrap();
        assert_eq!(summary.len(), 2);
        assert_eq!(summary[0].classes, vec!["box", "cone"]);
        assert_eq!(summary[0].counts, vec![(2, 1), (2, 1)]);
        // Extra class in one domain breaks consistency.
        write_layout(root, "d1", "torus", "train", 1, 16);
        write_layout(root, "d1", "torus", "test", 1, 16);
        assert!(validate_layout(root).is_err());
    }
}
