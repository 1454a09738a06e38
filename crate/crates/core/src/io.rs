//! File formats: band-sequential cubes with a key=value header, plain-text
//! label maps and shapelet sets, and the metrics CSV.
//!
//! All numeric text is parsed and printed with Rust's locale-independent
//! formatting (period decimal separator).

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::metrics::MetricsReport;
use crate::model::{HyperCube, LabelMap, Shapelet, ShapeletSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleType {
    F32,
    F64,
}

impl SampleType {
    pub fn size(self) -> usize {
        match self {
            SampleType::F32 => 4,
            SampleType::F64 => 8,
        }
    }

    fn name(self) -> &'static str {
        match self {
            SampleType::F32 => "f32",
            SampleType::F64 => "f64",
        }
    }
}

/// Parsed cube header. Only band-sequential little-endian data is accepted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CubeHeader {
    pub height: usize,
    pub width: usize,
    pub bands: usize,
    pub dtype: SampleType,
}

impl CubeHeader {
    pub fn data_len(&self) -> u64 {
        (self.height * self.width * self.bands * self.dtype.size()) as u64
    }

    pub fn to_text(&self) -> String {
        format!(
            "height={}\nwidth={}\nbands={}\ndtype={}\ninterleave=bsq\nbyte_order=little\n",
            self.height,
            self.width,
            self.bands,
            self.dtype.name()
        )
    }
}

impl FromStr for CubeHeader {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        let mut keys = HashMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: i + 1,
                reason: format!("expected key=value, got `{line}`"),
            })?;
            keys.insert(k.trim().to_ascii_lowercase(), v.trim().to_string());
        }
        let get = |key: &str| {
            keys.get(key)
                .map(String::as_str)
                .ok_or_else(|| Error::MissingKey(key.to_string()))
        };
        let count = |key: &'static str| -> Result<usize> {
            let raw = get(key)?;
            match raw.parse::<usize>() {
                Ok(n) if n >= 1 => Ok(n),
                _ => Err(Error::invalid("cube header", format!("{key} must be a positive integer, got `{raw}`"))),
            }
        };
        let height = count("height")?;
        let width = count("width")?;
        let bands = count("bands")?;
        let dtype = match get("dtype")? {
            "f32" => SampleType::F32,
            "f64" => SampleType::F64,
            other => {
                return Err(Error::Unsupported {
                    key: "dtype",
                    value: other.to_string(),
                })
            }
        };
        let interleave = get("interleave")?;
        if interleave != "bsq" {
            return Err(Error::Unsupported {
                key: "interleave",
                value: interleave.to_string(),
            });
        }
        let order = get("byte_order")?;
        if order != "little" {
            return Err(Error::Unsupported {
                key: "byte_order",
                value: order.to_string(),
            });
        }
        Ok(Self {
            height,
            width,
            bands,
            dtype,
        })
    }
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_cube(header_path: impl AsRef<Path>, data_path: impl AsRef<Path>) -> Result<HyperCube> {
    let header: CubeHeader = read_text(header_path.as_ref())?.parse()?;
    let data_path = data_path.as_ref();
    let bytes = fs::read(data_path).map_err(|e| Error::io(data_path, e))?;
    decode_cube(&header, &bytes)
}

pub fn decode_cube(header: &CubeHeader, bytes: &[u8]) -> Result<HyperCube> {
    if bytes.len() as u64 != header.data_len() {
        return Err(Error::SizeMismatch {
            expected: header.data_len(),
            actual: bytes.len() as u64,
        });
    }
    let bsq: Vec<f64> = match header.dtype {
        SampleType::F32 => bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect(),
        SampleType::F64 => bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect(),
    };
    HyperCube::from_band_sequential(header.height, header.width, header.bands, &bsq)
}

/// Writes `cube` as a header plus band-sequential little-endian data.
/// With `SampleType::F32` values are rounded to single precision.
pub fn write_cube(
    cube: &HyperCube,
    dtype: SampleType,
    header_path: impl AsRef<Path>,
    data_path: impl AsRef<Path>,
) -> Result<()> {
    let header = CubeHeader {
        height: cube.height(),
        width: cube.width(),
        bands: cube.bands(),
        dtype,
    };
    let bsq = cube.to_band_sequential();
    let mut bytes = Vec::with_capacity(header.data_len() as usize);
    for v in bsq {
        match dtype {
            SampleType::F32 => bytes.extend_from_slice(&(v as f32).to_le_bytes()),
            SampleType::F64 => bytes.extend_from_slice(&v.to_le_bytes()),
        }
    }
    write_text(header_path.as_ref(), &header.to_text())?;
    let data_path = data_path.as_ref();
    fs::write(data_path, bytes).map_err(|e| Error::io(data_path, e))
}

/// Non-empty lines with their 1-based line numbers.
fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty())
}

fn parse_dims(line: Option<(usize, &str)>, what: &str) -> Result<(usize, Vec<usize>)> {
    let (n, line) = line.ok_or_else(|| Error::Parse {
        line: 1,
        reason: format!("missing {what} line"),
    })?;
    let dims = line
        .split_whitespace()
        .map(|t| {
            t.parse::<usize>().map_err(|_| Error::Parse {
                line: n,
                reason: format!("bad {what} value `{t}`"),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((n, dims))
}

fn parse_label(token: &str, line: usize) -> Result<u32> {
    if token.starts_with('-') && token[1..].parse::<u64>().is_ok() {
        return Err(Error::NegativeLabel(token.to_string()));
    }
    token.parse::<u32>().map_err(|_| Error::Parse {
        line,
        reason: format!("bad label `{token}`"),
    })
}

pub fn parse_label_map(text: &str) -> Result<LabelMap> {
    let mut lines = content_lines(text);
    let (n, dims) = parse_dims(lines.next(), "dimension")?;
    let [height, width] = dims[..] else {
        return Err(Error::Parse {
            line: n,
            reason: "expected `height width`".into(),
        });
    };
    let mut labels = Vec::with_capacity(height * width);
    for row in 0..height {
        let (n, line) = lines.next().ok_or_else(|| Error::Parse {
            line: n + row + 1,
            reason: format!("expected {height} rows, found {row}"),
        })?;
        let before = labels.len();
        for token in line.split_whitespace() {
            labels.push(parse_label(token, n)?);
        }
        let found = labels.len() - before;
        if found != width {
            return Err(Error::RaggedRow {
                row: row + 1,
                expected: width,
                found,
            });
        }
    }
    if let Some((n, _)) = lines.next() {
        return Err(Error::Parse {
            line: n,
            reason: format!("trailing content after {height} rows"),
        });
    }
    LabelMap::new(height, width, labels)
}

pub fn format_label_map(map: &LabelMap) -> String {
    let mut out = format!("{} {}\n", map.height(), map.width());
    for row in map.labels().chunks(map.width().max(1)) {
        let line: Vec<String> = row.iter().map(u32::to_string).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    out
}

pub fn read_label_map(path: impl AsRef<Path>) -> Result<LabelMap> {
    parse_label_map(&read_text(path.as_ref())?)
}

pub fn write_label_map(map: &LabelMap, path: impl AsRef<Path>) -> Result<()> {
    write_text(path.as_ref(), &format_label_map(map))
}

/// Text form of a shapelet set: `N side`, then per shapelet its region count
/// `R` followed by `side` rows of region ids.
pub fn format_shapelets(set: &ShapeletSet) -> String {
    let side = set.side();
    let mut out = format!("{} {}\n", set.len(), side);
    for s in set.shapelets() {
        let _ = writeln!(out, "{}", s.region_count());
        for row in s.region_map().chunks(side) {
            let line: Vec<String> = row.iter().map(u32::to_string).collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
    }
    out
}

pub fn parse_shapelets(text: &str) -> Result<ShapeletSet> {
    let mut lines = content_lines(text);
    let (n, dims) = parse_dims(lines.next(), "shapelet set header")?;
    let [count, side] = dims[..] else {
        return Err(Error::Parse {
            line: n,
            reason: "expected `N side`".into(),
        });
    };
    let mut shapelets = Vec::with_capacity(count);
    for _ in 0..count {
        let (n, dims) = parse_dims(lines.next(), "region count")?;
        let [regions] = dims[..] else {
            return Err(Error::Parse {
                line: n,
                reason: "expected a single region count".into(),
            });
        };
        let mut map = Vec::with_capacity(side * side);
        for row in 0..side {
            let (n, line) = lines.next().ok_or_else(|| Error::Parse {
                line: n + row + 1,
                reason: "truncated shapelet grid".into(),
            })?;
            let before = map.len();
            for token in line.split_whitespace() {
                map.push(parse_label(token, n)?);
            }
            if map.len() - before != side {
                return Err(Error::RaggedRow {
                    row: row + 1,
                    expected: side,
                    found: map.len() - before,
                });
            }
        }
        let shapelet = Shapelet::new(side, map)?;
        if shapelet.region_count() as usize != regions {
            return Err(Error::Parse {
                line: n,
                reason: format!(
                    "declared {regions} regions, grid has {}",
                    shapelet.region_count()
                ),
            });
        }
        shapelets.push(shapelet);
    }
    if let Some((n, _)) = lines.next() {
        return Err(Error::Parse {
            line: n,
            reason: "trailing content after shapelets".into(),
        });
    }
    ShapeletSet::new(shapelets)
}

pub fn read_shapelets(path: impl AsRef<Path>) -> Result<ShapeletSet> {
    parse_shapelets(&read_text(path.as_ref())?)
}

pub fn write_shapelets(set: &ShapeletSet, path: impl AsRef<Path>) -> Result<()> {
    write_text(path.as_ref(), &format_shapelets(set))
}

/// Metrics CSV: the K×K confusion rows, then `class_acc,k,value` per class,
/// then `overall`, `average` and `kappa` rows. Classes without reference
/// pixels print `nan` as their accuracy.
pub fn format_metrics(report: &MetricsReport) -> String {
    let mut out = String::new();
    for row in &report.confusion {
        let cells: Vec<String> = row.iter().map(u64::to_string).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    for (k, acc) in report.class_accuracy.iter().enumerate() {
        match acc {
            Some(v) => {
                let _ = writeln!(out, "class_acc,{},{:.6}", k + 1, v);
            }
            None => {
                let _ = writeln!(out, "class_acc,{},nan", k + 1);
            }
        }
    }
    let _ = writeln!(out, "overall,{:.6}", report.overall);
    let _ = writeln!(out, "average,{:.6}", report.average);
    let _ = writeln!(out, "kappa,{:.6}", report.kappa);
    out
}

pub fn write_metrics(report: &MetricsReport, path: impl AsRef<Path>) -> Result<()> {
    write_text(path.as_ref(), &format_metrics(report))
}
