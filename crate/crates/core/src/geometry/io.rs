//! ASCII PLY and XYZ text readers/writers.
//!
//! Only the `vertex` element is interpreted; other elements declared in a
//! PLY header are skipped by count. Numbers are written with nine
//! significant digits.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::cloud::{Point, PointCloud, Vector};
use crate::mask::AnomalyMask;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CloudFormat {
    PlyAscii,
    XyzText,
}

impl CloudFormat {
    /// Guesses the format from the file extension (`.ply`, `.xyz`, `.txt`).
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "ply" => Some(CloudFormat::PlyAscii),
            "xyz" | "txt" | "pts" => Some(CloudFormat::XyzText),
            _ => None,
        }
    }
}

/// A parsed file: the cloud plus any per-vertex annotation columns.
#[derive(Debug, Clone)]
pub struct LoadedCloud {
    pub cloud: PointCloud,
    pub mask: Option<AnomalyMask>,
    pub scores: Option<Vec<f64>>,
}

pub fn load_cloud(path: &Path, format: CloudFormat) -> Result<PointCloud> {
    Ok(load_annotated(path, format)?.cloud)
}

pub fn load_annotated(path: &Path, format: CloudFormat) -> Result<LoadedCloud> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let id = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("cloud")
        .trim_end_matches(".mask")
        .to_string();
    let name = path.display().to_string();
    let mut loaded = match format {
        CloudFormat::PlyAscii => parse_ply(&text, &name)?,
        CloudFormat::XyzText => parse_xyz(&text, &name)?,
    };
    loaded.cloud.id = id;
    Ok(loaded)
}

fn parse_err(source: &str, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: source.to_string(),
        line,
        message: message.into(),
    }
}

struct ElementDecl {
    name: String,
    count: usize,
    properties: Vec<String>,
    has_list: bool,
}

/// Parses an ASCII PLY document. `source` names the input in error messages.
pub fn parse_ply(text: &str, source: &str) -> Result<LoadedCloud> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    match lines.next() {
        Some((_, l)) if l.trim() == "ply" => {}
        Some((n, _)) => return Err(parse_err(source, n, "missing \"ply\" magic")),
        None => return Err(parse_err(source, 1, "empty file")),
    }

    let mut elements: Vec<ElementDecl> = Vec::new();
    let mut saw_format = false;
    let mut header_done = false;
    for (n, raw) in lines.by_ref() {
        let line = raw.trim();
        let mut tok = line.split_whitespace();
        match tok.next() {
            None | Some("comment") | Some("obj_info") => {}
            Some("format") => {
                match tok.next() {
                    Some("ascii") => {}
                    Some(f) if f.starts_with("binary") => {
                        return Err(parse_err(source, n, format!("binary PLY ({f}) is not supported; convert to ascii")))
                    }
                    other => return Err(parse_err(source, n, format!("unknown PLY format {other:?}"))),
                }
                saw_format = true;
            }
            Some("element") => {
                let name = tok.next().ok_or_else(|| parse_err(source, n, "element without name"))?;
                let count = tok
                    .next()
                    .and_then(|c| c.parse::<usize>().ok())
                    .ok_or_else(|| parse_err(source, n, "element count is not a nonnegative integer"))?;
                elements.push(ElementDecl {
                    name: name.to_string(),
                    count,
                    properties: Vec::new(),
                    has_list: false,
                });
            }
            Some("property") => {
                let el = elements
                    .last_mut()
                    .ok_or_else(|| parse_err(source, n, "property before any element"))?;
                let rest: Vec<&str> = tok.collect();
                match rest.as_slice() {
                    ["list", _, _, name] => {
                        el.has_list = true;
                        el.properties.push(name.to_string());
                    }
                    [_ty, name] => el.properties.push(name.to_string()),
                    _ => return Err(parse_err(source, n, "malformed property declaration")),
                }
            }
            Some("end_header") => {
                header_done = true;
                break;
            }
            Some(other) => return Err(parse_err(source, n, format!("unexpected header keyword \"{other}\""))),
        }
    }
    if !header_done {
        return Err(parse_err(source, text.lines().count().max(1), "header not terminated by end_header"));
    }
    if !saw_format {
        return Err(parse_err(source, 2, "missing format line"));
    }
    let vertex_pos = elements
        .iter()
        .position(|e| e.name == "vertex")
        .ok_or_else(|| parse_err(source, 1, "no vertex element declared"))?;

    let vertex = &elements[vertex_pos];
    if vertex.has_list {
        return Err(parse_err(source, 1, "list properties on vertices are not supported"));
    }
    let col = |name: &str| vertex.properties.iter().position(|p| p == name);
    let (x, y, z) = match (col("x"), col("y"), col("z")) {
        (Some(x), Some(y), Some(z)) => (x, y, z),
        _ => return Err(parse_err(source, 1, "vertex element lacks x, y, z properties")),
    };
    let normal_cols = match (col("nx"), col("ny"), col("nz")) {
        (Some(a), Some(b), Some(c)) => Some((a, b, c)),
        _ => None,
    };
    let anomaly_col = col("anomaly");
    let score_col = col("score");

    let mut data = lines.filter(|(_, l)| !l.trim().is_empty());
    let mut last_line = text.lines().count();

    // Skip elements declared before the vertices.
    for el in &elements[..vertex_pos] {
        for _ in 0..el.count {
            if data.next().is_none() {
                return Err(parse_err(source, last_line, format!("truncated \"{}\" element", el.name)));
            }
        }
    }

    let nprops = vertex.properties.len();
    let mut points = Vec::with_capacity(vertex.count);
    let mut normals = normal_cols.map(|_| Vec::with_capacity(vertex.count));
    let mut mask = anomaly_col.map(|_| Vec::with_capacity(vertex.count));
    let mut scores = score_col.map(|_| Vec::with_capacity(vertex.count));
    for k in 0..vertex.count {
        let (n, line) = data.next().ok_or_else(|| {
            parse_err(
                source,
                last_line + 1,
                format!("expected {} vertex records, found {k}", vertex.count),
            )
        })?;
        last_line = n;
        let values: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse::<f64>().map_err(|_| parse_err(source, n, format!("non-numeric value \"{t}\""))))
            .collect::<Result<_>>()?;
        if values.len() != nprops {
            return Err(parse_err(
                source,
                n,
                format!("expected {nprops} values in vertex record, found {}", values.len()),
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(parse_err(source, n, "non-finite coordinate"));
        }
        points.push(Point::new(values[x], values[y], values[z]));
        if let (Some(ns), Some((a, b, c))) = (normals.as_mut(), normal_cols) {
            ns.push(unit_normal(Vector::new(values[a], values[b], values[c]), source, n)?);
        }
        if let (Some(m), Some(c)) = (mask.as_mut(), anomaly_col) {
            m.push(values[c] != 0.0);
        }
        if let (Some(s), Some(c)) = (scores.as_mut(), score_col) {
            s.push(values[c]);
        }
    }
    if points.is_empty() {
        return Err(parse_err(source, last_line.max(1), "file contains no vertices"));
    }
    let mut cloud = PointCloud::new("cloud", points)?;
    if let Some(ns) = normals {
        cloud.set_normals(ns)?;
    }
    Ok(LoadedCloud {
        cloud,
        mask: mask.map(|labels| AnomalyMask { labels, defect: None }),
        scores,
    })
}

fn unit_normal(v: Vector, source: &str, line: usize) -> Result<Vector> {
    let norm = v.norm();
    if norm < 1e-12 {
        return Err(parse_err(source, line, "zero-length normal"));
    }
    // Nine-digit text loses a few ulps; renormalize anything not already unit.
    if (norm - 1.0).abs() > 1e-12 {
        Ok(v / norm)
    } else {
        Ok(v)
    }
}

/// Parses whitespace-delimited `x y z [nx ny nz]` records; `#` starts a comment line.
pub fn parse_xyz(text: &str, source: &str) -> Result<LoadedCloud> {
    let mut points = Vec::new();
    let mut normals: Vec<Vector> = Vec::new();
    let mut columns: Option<usize> = None;
    for (i, raw) in text.lines().enumerate() {
        let n = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let values: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse::<f64>().map_err(|_| parse_err(source, n, format!("non-numeric value \"{t}\""))))
            .collect::<Result<_>>()?;
        if values.len() != 3 && values.len() != 6 {
            return Err(parse_err(source, n, format!("expected 3 or 6 columns, found {}", values.len())));
        }
        match columns {
            None => columns = Some(values.len()),
            Some(c) if c != values.len() => {
                return Err(parse_err(source, n, format!("column count changed from {c} to {}", values.len())))
            }
            _ => {}
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(parse_err(source, n, "non-finite value"));
        }
        points.push(Point::new(values[0], values[1], values[2]));
        if values.len() == 6 {
            normals.push(unit_normal(Vector::new(values[3], values[4], values[5]), source, n)?);
        }
    }
    if points.is_empty() {
        return Err(parse_err(source, text.lines().count().max(1), "file contains no points"));
    }
    let mut cloud = PointCloud::new("cloud", points)?;
    if columns == Some(6) {
        cloud.set_normals(normals)?;
    }
    Ok(LoadedCloud {
        cloud,
        mask: None,
        scores: None,
    })
}

/// Formats like C's `%.9g`.
pub fn format_sig9(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    let sci = format!("{:.8e}", x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..9).contains(&exp) {
        let decimals = (8 - exp).max(0) as usize;
        let fixed = format!("{:.*}", decimals, x);
        trim_zeros(&fixed)
    } else {
        let m = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{m}e{sign}{:02}", exp.abs())
    }
}

fn trim_zeros(s: &str) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s.to_string()
    }
}

/// Extra per-vertex columns emitted by [`write_ply`].
#[derive(Debug, Default, Clone, Copy)]
pub struct PlyExtras<'a> {
    pub mask: Option<&'a AnomalyMask>,
    pub scores: Option<&'a [f64]>,
}

/// Renders an ASCII PLY document.
pub fn write_ply(cloud: &PointCloud, extras: PlyExtras<'_>) -> Result<String> {
    let n = cloud.len();
    if let Some(m) = extras.mask {
        if m.len() != n {
            return Err(Error::contract(format!("mask length {} does not match point count {n}", m.len())));
        }
    }
    if let Some(s) = extras.scores {
        if s.len() != n {
            return Err(Error::contract(format!("score length {} does not match point count {n}", s.len())));
        }
    }
    let mut out = String::with_capacity(64 + n * 64);
    out.push_str("ply\nformat ascii 1.0\n");
    let _ = writeln!(out, "comment id {}", cloud.id.replace(['\n', '\r'], " "));
    let _ = writeln!(out, "element vertex {n}");
    out.push_str("property double x\nproperty double y\nproperty double z\n");
    if cloud.has_normals() {
        out.push_str("property double nx\nproperty double ny\nproperty double nz\n");
    }
    if extras.scores.is_some() {
        out.push_str("property float score\n");
    }
    if extras.mask.is_some() {
        out.push_str("property int anomaly\n");
    }
    out.push_str("end_header\n");
    let normals = cloud.normals();
    for (i, p) in cloud.points().iter().enumerate() {
        let _ = write!(out, "{} {} {}", format_sig9(p.x), format_sig9(p.y), format_sig9(p.z));
        if let Some(ns) = normals {
            let v = ns[i];
            let _ = write!(out, " {} {} {}", format_sig9(v.x), format_sig9(v.y), format_sig9(v.z));
        }
        if let Some(s) = extras.scores {
            let _ = write!(out, " {}", format_sig9(s[i]));
        }
        if let Some(m) = extras.mask {
            out.push_str(if m.labels[i] { " 1" } else { " 0" });
        }
        out.push('\n');
    }
    Ok(out)
}

pub fn save_cloud(cloud: &PointCloud, mask: Option<&AnomalyMask>, path: &Path) -> Result<()> {
    let text = write_ply(cloud, PlyExtras { mask, scores: None })?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn save_annotated(cloud: &PointCloud, extras: PlyExtras<'_>, path: &Path) -> Result<()> {
    let text = write_ply(cloud, extras)?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_vertex_ply() {
        let text = "ply\nformat ascii 1.0\nelement vertex 3\nproperty float x\nproperty float y\nproperty float z\nend_header\n0 0 0\n1 0 0\n0 1 0\n";
        let loaded = parse_ply(text, "t").unwrap();
        assert_eq!(loaded.cloud.len(), 3);
        assert!(!loaded.cloud.has_normals());
        assert!(loaded.mask.is_none());
    }

    #[test]
    fn xyz_two_points() {
        let loaded = parse_xyz("0 0 0\n1 0 0\n", "t").unwrap();
        assert_eq!(loaded.cloud.points()[0], Point::origin());
        assert_eq!(loaded.cloud.points()[1], Point::new(1.0, 0.0, 0.0));
    }

    #[test]
    fn short_vertex_section_names_line() {
        let text = "ply\nformat ascii 1.0\nelement vertex 5\nproperty float x\nproperty float y\nproperty float z\nend_header\n0 0 0\n1 0 0\n0 1 0\n0 0 1\n";
        match parse_ply(text, "t") {
            Err(Error::Parse { line, message, .. }) => {
                assert_eq!(line, 12);
                assert!(message.contains("expected 5"), "{message}");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn non_numeric_and_empty() {
        let text = "ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\nproperty float y\nproperty float z\nend_header\n0 a 0\n";
        assert!(matches!(parse_ply(text, "t"), Err(Error::Parse { line: 8, .. })));
        assert!(matches!(parse_ply("", "t"), Err(Error::Parse { .. })));
        assert!(matches!(parse_xyz("", "t"), Err(Error::Parse { .. })));
        assert!(matches!(parse_xyz("0 0 0\n1 x 0\n", "t"), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn binary_ply_rejected() {
        let text = "ply\nformat binary_little_endian 1.0\nelement vertex 1\nend_header\n";
        let err = parse_ply(text, "t").unwrap_err();
        assert!(err.to_string().contains("binary"));
    }

    #[test]
    fn skips_leading_elements() {
        let text = "ply\nformat ascii 1.0\nelement camera 1\nproperty float f\nelement vertex 1\nproperty float x\nproperty float y\nproperty float z\nend_header\n3.5\n1 2 3\n";
        let loaded = parse_ply(text, "t").unwrap();
        assert_eq!(loaded.cloud.points()[0], Point::new(1.0, 2.0, 3.0));
    }

    #[test]
    fn sig9_formatting() {
        assert_eq!(format_sig9(0.0), "0");
        assert_eq!(format_sig9(1.0), "1");
        assert_eq!(format_sig9(-0.5), "-0.5");
        assert_eq!(format_sig9(1.0 / 3.0), "0.333333333");
        assert_eq!(format_sig9(123456789.4), "123456789");
        assert_eq!(format_sig9(1.5e-7), "1.5e-07");
        assert_eq!(format_sig9(2.5e12), "2.5e+12");
    }

    #[test]
    fn mask_column_and_length_check() {
        let cloud = PointCloud::new("m", vec![Point::origin(), Point::new(1.0, 1.0, 1.0)]).unwrap();
        let mask = AnomalyMask::empty(2);
        let text = write_ply(&cloud, PlyExtras { mask: Some(&mask), scores: None }).unwrap();
        for row in text.lines().skip_while(|l| *l != "end_header").skip(1) {
            assert!(row.ends_with(" 0"));
        }
        let bad = AnomalyMask::empty(3);
        assert!(matches!(
            write_ply(&cloud, PlyExtras { mask: Some(&bad), scores: None }),
            Err(Error::Contract(_))
        ));
    }
}
