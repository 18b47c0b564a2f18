//! In-memory labelled feature vectors plus the binary and CSV file formats.
//!
//! Binary layout (all little-endian):
//!
//! ```text
//! "RCL1" | u32 m | u32 n | u64 count | count x (m x f32 features, u32 label)
//! ```
//!
//! CSV layout: header `f0,...,f{m-1},label`, one sample per row.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"RCL1";
const HEADER_LEN: u64 = 4 + 4 + 4 + 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Binary,
    Csv,
}

impl Format {
    pub fn from_path(path: &Path) -> Format {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("csv") => Format::Csv,
            _ => Format::Binary,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    feature_dim: usize,
    class_count: usize,
    features: Vec<f32>,
    labels: Vec<usize>,
    /// Human-readable class names (original label tokens), if known.
    pub class_names: Option<Vec<String>>,
}

impl Dataset {
    pub fn new(
        feature_dim: usize,
        class_count: usize,
        features: Vec<f32>,
        labels: Vec<usize>,
    ) -> Result<Self> {
        if feature_dim == 0 || class_count == 0 {
            return Err(Error::config("feature_dim and class_count must be positive"));
        }
        if features.len() != labels.len() * feature_dim {
            return Err(Error::config(format!(
                "{} feature values for {} samples of dimension {feature_dim}",
                features.len(),
                labels.len()
            )));
        }
        if let Some((i, &l)) = labels.iter().enumerate().find(|(_, &l)| l >= class_count) {
            return Err(Error::Ingest {
                row: Some(i),
                offset: None,
                message: format!("label {l} outside 0..{class_count}"),
            });
        }
        Ok(Self {
            feature_dim,
            class_count,
            features,
            labels,
            class_names: None,
        })
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn features(&self) -> &[f32] {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn sample(&self, i: usize) -> (&[f32], usize) {
        let m = self.feature_dim;
        (&self.features[i * m..(i + 1) * m], self.labels[i])
    }

    pub fn row(&self, i: usize) -> &[f32] {
        self.sample(i).0
    }

    pub fn class_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.class_count];
        for &l in &self.labels {
            sizes[l] += 1;
        }
        sizes
    }

    /// Sample indices grouped by class.
    pub fn indices_by_class(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.class_count];
        for (i, &l) in self.labels.iter().enumerate() {
            out[l].push(i);
        }
        out
    }

    /// New dataset containing the given samples in order.
    pub fn subset(&self, idx: &[usize]) -> Dataset {
        let m = self.feature_dim;
        let mut features = Vec::with_capacity(idx.len() * m);
        let mut labels = Vec::with_capacity(idx.len());
        for &i in idx {
            features.extend_from_slice(self.row(i));
            labels.push(self.labels[i]);
        }
        Dataset {
            feature_dim: m,
            class_count: self.class_count,
            features,
            labels,
            class_names: self.class_names.clone(),
        }
    }

    /// SHA-256 over the canonical binary encoding.
    pub fn digest(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.to_bytes());
        hex(&hasher.finalize())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN as usize + self.len() * (self.feature_dim + 1) * 4);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(self.feature_dim as u32).to_le_bytes());
        out.extend_from_slice(&(self.class_count as u32).to_le_bytes());
        out.extend_from_slice(&(self.len() as u64).to_le_bytes());
        for i in 0..self.len() {
            let (x, y) = self.sample(i);
            for v in x {
                out.extend_from_slice(&v.to_le_bytes());
            }
            out.extend_from_slice(&(y as u32).to_le_bytes());
        }
        out
    }

    /// Parses the binary format. Labels are remapped to a dense range when
    /// some declared classes have no samples; `class_names` records the
    /// original ids in that case.
    pub fn from_bytes(bytes: &[u8]) -> Result<Dataset> {
        let truncated = |offset: usize, what: &str, row: Option<usize>| Error::Ingest {
            row,
            offset: Some(offset as u64),
            message: format!("file truncated while reading {what}"),
        };
        if bytes.len() < 4 {
            return Err(truncated(bytes.len(), "magic", None));
        }
        if &bytes[..4] != MAGIC {
            return Err(Error::Ingest {
                row: None,
                offset: Some(0),
                message: "bad magic bytes (expected RCL1)".into(),
            });
        }
        if bytes.len() < HEADER_LEN as usize {
            return Err(truncated(bytes.len(), "header", None));
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        let m = u32_at(4) as usize;
        let n = u32_at(8) as usize;
        let count = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
        if m == 0 || n == 0 {
            return Err(Error::Ingest {
                row: None,
                offset: Some(4),
                message: format!("malformed header: m={m}, n={n}"),
            });
        }
        let record = (m + 1) * 4;
        let mut features = Vec::with_capacity(count.min(1 << 24) * m);
        let mut labels = Vec::with_capacity(count.min(1 << 24));
        let mut offset = HEADER_LEN as usize;
        for row in 0..count {
            if bytes.len() < offset + record {
                return Err(truncated(bytes.len(), "record", Some(row)));
            }
            for j in 0..m {
                let o = offset + 4 * j;
                let v = f32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
                features.push(v);
            }
            let label = u32_at(offset + 4 * m) as usize;
            if label >= n {
                return Err(Error::Ingest {
                    row: Some(row),
                    offset: Some((offset + 4 * m) as u64),
                    message: format!("unknown label {label} (header declares {n} classes)"),
                });
            }
            labels.push(label);
            offset += record;
        }
        if offset != bytes.len() {
            return Err(Error::Ingest {
                row: None,
                offset: Some(offset as u64),
                message: format!("{} trailing bytes after {count} records", bytes.len() - offset),
            });
        }
        densify(m, n, features, labels, None)
    }

    pub fn save(&self, path: &Path, format: Format) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        match format {
            Format::Binary => w.write_all(&self.to_bytes()).map_err(|e| Error::io(path, e))?,
            Format::Csv => self.write_csv(&mut w).map_err(|e| match e {
                Error::Serde(msg) => Error::io(path, std::io::Error::other(msg)),
                other => other,
            })?,
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut writer = csv::Writer::from_writer(w);
        let mut header: Vec<String> = (0..self.feature_dim).map(|j| format!("f{j}")).collect();
        header.push("label".into());
        writer.write_record(&header).map_err(csv_err)?;
        for i in 0..self.len() {
            let (x, y) = self.sample(i);
            let mut rec: Vec<String> = x.iter().map(|v| v.to_string()).collect();
            rec.push(match &self.class_names {
                Some(names) => names[y].clone(),
                None => y.to_string(),
            });
            writer.write_record(&rec).map_err(csv_err)?;
        }
        writer.flush().map_err(|e| Error::Serde(e.to_string()))
    }

    pub fn load(path: &Path, format: Format) -> Result<Dataset> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut r = BufReader::new(file);
        match format {
            Format::Binary => {
                let mut bytes = Vec::new();
                r.read_to_end(&mut bytes).map_err(|e| Error::io(path, e))?;
                Dataset::from_bytes(&bytes)
            }
            Format::Csv => Dataset::read_csv(r, None),
        }
    }

    /// Reads CSV. Label tokens become dense class ids; integer tokens keep
    /// their numeric order. With `catalog`, tokens outside it are rejected.
    pub fn read_csv<R: Read>(r: R, catalog: Option<&[String]>) -> Result<Dataset> {
        let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(r);
        let header = reader.headers().map_err(|e| ingest(None, e.to_string()))?.clone();
        let cols = header.len();
        if cols < 2 || header.get(cols - 1) != Some("label") {
            return Err(ingest(None, "header must be f0,...,f{m-1},label".into()));
        }
        for (j, name) in header.iter().take(cols - 1).enumerate() {
            if name != format!("f{j}") {
                return Err(ingest(None, format!("header column {j} is `{name}`, expected `f{j}`")));
            }
        }
        let m = cols - 1;
        let mut features = Vec::new();
        let mut tokens = Vec::new();
        for (row, rec) in reader.records().enumerate() {
            let rec = rec.map_err(|e| ingest(Some(row), e.to_string()))?;
            if rec.len() != cols {
                return Err(ingest(
                    Some(row),
                    format!("expected {m} features and a label, found {} fields", rec.len()),
                ));
            }
            for (j, field) in rec.iter().take(m).enumerate() {
                let v: f32 = field.trim().parse().map_err(|_| {
                    ingest(Some(row), format!("column f{j}: `{field}` is not a number"))
                })?;
                if !v.is_finite() {
                    return Err(ingest(Some(row), format!("column f{j}: non-finite value")));
                }
                features.push(v);
            }
            let token = rec[m].trim().to_string();
            if token.is_empty() {
                return Err(ingest(Some(row), "empty label".into()));
            }
            if let Some(cat) = catalog {
                if !cat.contains(&token) {
                    return Err(ingest(Some(row), format!("unknown label `{token}`")));
                }
            }
            tokens.push(token);
        }
        if tokens.is_empty() {
            return Err(ingest(None, "no samples".into()));
        }

        let mut distinct: Vec<&String> = match catalog {
            Some(cat) => cat.iter().filter(|c| tokens.contains(c)).collect(),
            None => {
                let mut d: Vec<&String> = tokens.iter().collect();
                d.sort();
                d.dedup();
                d
            }
        };
        if catalog.is_none() && distinct.iter().all(|t| t.parse::<u64>().is_ok()) {
            distinct.sort_by_key(|t| t.parse::<u64>().unwrap());
        }
        let ids: BTreeMap<&String, usize> =
            distinct.iter().enumerate().map(|(i, t)| (*t, i)).collect();
        let labels = tokens.iter().map(|t| ids[t]).collect();
        let names: Vec<String> = distinct.iter().map(|t| t.to_string()).collect();
        let mut ds = Dataset::new(m, names.len(), features, labels)?;
        let identity = names.iter().enumerate().all(|(i, t)| *t == i.to_string());
        if !identity {
            ds.class_names = Some(names);
        }
        Ok(ds)
    }
}

fn densify(
    m: usize,
    n: usize,
    features: Vec<f32>,
    labels: Vec<usize>,
    names: Option<Vec<String>>,
) -> Result<Dataset> {
    let mut present = vec![false; n];
    for &l in &labels {
        present[l] = true;
    }
    if present.iter().all(|&p| p) || labels.is_empty() {
        let mut ds = Dataset::new(m, n, features, labels)?;
        ds.class_names = names;
        return Ok(ds);
    }
    let kept: Vec<usize> = (0..n).filter(|&c| present[c]).collect();
    let mut remap = vec![usize::MAX; n];
    for (new, &old) in kept.iter().enumerate() {
        remap[old] = new;
    }
    let labels = labels.into_iter().map(|l| remap[l]).collect();
    let mut ds = Dataset::new(m, kept.len(), features, labels)?;
    ds.class_names = Some(
        kept.iter()
            .map(|&c| names.as_ref().map(|v| v[c].clone()).unwrap_or_else(|| c.to_string()))
            .collect(),
    );
    Ok(ds)
}

fn ingest(row: Option<usize>, message: String) -> Error {
    Error::Ingest {
        row,
        offset: None,
        message,
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Serde(e.to_string())
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> Dataset {
        Dataset::new(
            4,
            2,
            vec![0.0, 1.0, 2.0, 3.0, -1.5, 0.25, 1e-7, 9.0, 4.0, 4.0, 4.0, 4.0],
            vec![0, 1, 1],
        )
        .unwrap()
    }

    #[test]
    fn binary_round_trip() {
        let ds = small();
        let bytes = ds.to_bytes();
        assert_eq!(&bytes[..4], b"RCL1");
        assert_eq!(bytes.len(), 20 + 3 * 5 * 4);
        assert_eq!(Dataset::from_bytes(&bytes).unwrap(), ds);
    }

    #[test]
    fn binary_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.bin");
        let ds = small();
        ds.save(&p, Format::Binary).unwrap();
        assert_eq!(Dataset::load(&p, Format::Binary).unwrap(), ds);
    }

    #[test]
    fn truncated_binary_reports_offset() {
        let bytes = small().to_bytes();
        let err = Dataset::from_bytes(&bytes[..bytes.len() - 3]).unwrap_err();
        match err {
            Error::Ingest { row, offset, .. } => {
                assert_eq!(row, Some(2));
                assert_eq!(offset, Some((bytes.len() - 3) as u64));
            }
            e => panic!("unexpected {e}"),
        }
        assert!(Dataset::from_bytes(&bytes[..10]).is_err());
    }

    #[test]
    fn large_feature_dim_is_accepted() {
        let m = 2439;
        let ds = Dataset::new(m, 2, vec![0.5; 2 * m], vec![0, 1]).unwrap();
        let back = Dataset::from_bytes(&ds.to_bytes()).unwrap();
        assert_eq!(back.feature_dim(), 2439);
    }

    #[test]
    fn bad_label_in_binary_is_rejected() {
        let mut bytes = small().to_bytes();
        let last = bytes.len() - 4;
        bytes[last..].copy_from_slice(&7u32.to_le_bytes());
        assert!(matches!(Dataset::from_bytes(&bytes), Err(Error::Ingest { row: Some(2), .. })));
    }

    #[test]
    fn missing_classes_are_densified() {
        let ds = Dataset::new(1, 5, vec![0.0, 1.0], vec![1, 4]).unwrap();
        let back = Dataset::from_bytes(&ds.to_bytes()).unwrap();
        assert_eq!(back.class_count(), 2);
        assert_eq!(back.labels(), &[0, 1]);
        assert_eq!(back.class_names.as_deref(), Some(&["1".to_string(), "4".to_string()][..]));
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.csv");
        let ds = small();
        ds.save(&p, Format::Csv).unwrap();
        let back = Dataset::load(&p, Format::Csv).unwrap();
        assert_eq!(back, ds);
    }

    #[test]
    fn csv_short_row_names_row() {
        let text = "f0,f1,f2,label\n1,2,3,a\n1,2,b\n";
        let err = Dataset::read_csv(text.as_bytes(), None).unwrap_err();
        assert!(matches!(err, Error::Ingest { row: Some(1), .. }), "{err}");
        assert!(err.to_string().contains("row 1"));
    }

    #[test]
    fn csv_string_labels_and_catalog() {
        let text = "f0,label\n1,zeus\n2,emotet\n3,zeus\n";
        let ds = Dataset::read_csv(text.as_bytes(), None).unwrap();
        assert_eq!(ds.class_count(), 2);
        assert_eq!(ds.labels(), &[1, 0, 1]);
        let cat = vec!["zeus".to_string()];
        let err = Dataset::read_csv(text.as_bytes(), Some(&cat)).unwrap_err();
        assert!(err.to_string().contains("unknown label `emotet`"));
    }

    #[test]
    fn csv_bad_header() {
        assert!(Dataset::read_csv("a,b\n1,2\n".as_bytes(), None).is_err());
    }
}
