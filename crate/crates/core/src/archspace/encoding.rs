use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ArchError;

/// Origin of an encoding table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncodingKind {
    Zcp,
    Arch2vec,
    Cate,
    Caz,
    Custom,
}

impl EncodingKind {
    /// Width the kind is conventionally produced at, if fixed.
    pub fn standard_dim(self) -> Option<usize> {
        match self {
            EncodingKind::Zcp => Some(13),
            EncodingKind::Arch2vec | EncodingKind::Cate => Some(32),
            EncodingKind::Caz => Some(77),
            EncodingKind::Custom => None,
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "zcp" => Some(Self::Zcp),
            "arch2vec" => Some(Self::Arch2vec),
            "cate" => Some(Self::Cate),
            "caz" => Some(Self::Caz),
            "custom" => Some(Self::Custom),
            _ => None,
        }
    }
}

/// Fixed-width real vectors keyed by arch_id.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodingTable {
    kind: EncodingKind,
    dim: usize,
    rows: BTreeMap<String, Vec<f64>>,
}

impl EncodingTable {
    pub fn new(kind: EncodingKind, dim: usize) -> Self {
        Self {
            kind,
            dim,
            rows: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, arch_id: impl Into<String>, v: Vec<f64>) -> Result<(), ArchError> {
        if v.len() != self.dim {
            return Err(ArchError::DimMismatch {
                expected: self.dim,
                found: v.len(),
            });
        }
        if let Some(x) = v.iter().find(|x| !x.is_finite()) {
            return Err(ArchError::NonFiniteValue(format!("{x}")));
        }
        self.rows.insert(arch_id.into(), v);
        Ok(())
    }

    pub fn kind(&self) -> EncodingKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, arch_id: &str) -> Option<&[f64]> {
        self.rows.get(arch_id).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f64])> {
        self.rows.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }

    /// Writes the `arch_id,e0,e1,...` CSV form, rows sorted by arch_id.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), ArchError> {
        let mut wtr = csv::Writer::from_writer(w);
        let mut header = vec!["arch_id".to_string()];
        header.extend((0..self.dim).map(|i| format!("e{i}")));
        wtr.write_record(&header).map_err(ArchError::csv)?;
        for (id, v) in &self.rows {
            let mut rec = vec![id.clone()];
            rec.extend(v.iter().map(|x| format!("{x:?}")));
            wtr.write_record(&rec).map_err(ArchError::csv)?;
        }
        wtr.flush().map_err(|e| ArchError::Io {
            path: "<writer>".into(),
            message: e.to_string(),
        })
    }
}

/// Loads an encoding CSV; the column count must match `expected_dim`.
pub fn load_encoding_table(
    path: &Path,
    kind: EncodingKind,
    expected_dim: usize,
) -> Result<EncodingTable, ArchError> {
    let file = std::fs::File::open(path).map_err(|e| ArchError::io(path, e))?;
    read_encoding_csv(file, kind, expected_dim).map_err(|e| match e {
        ArchError::Parse { line, message, .. } => ArchError::Parse {
            path: path.display().to_string(),
            line,
            message,
        },
        other => other,
    })
}

pub fn read_encoding_csv<R: std::io::Read>(
    r: R,
    kind: EncodingKind,
    expected_dim: usize,
) -> Result<EncodingTable, ArchError> {
    let parse_err = |line: usize, message: String| ArchError::Parse {
        path: "<reader>".into(),
        line,
        message,
    };
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(r);
    let header = rdr.headers().map_err(|e| parse_err(1, e.to_string()))?.clone();
    if header.get(0) != Some("arch_id") {
        return Err(parse_err(1, "first column must be arch_id".into()));
    }
    let dim = header.len() - 1;
    if dim != expected_dim {
        return Err(ArchError::DimMismatch {
            expected: expected_dim,
            found: dim,
        });
    }
    let mut table = EncodingTable::new(kind, dim);
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| parse_err(line, e.to_string()))?;
        if rec.len() != dim + 1 {
            return Err(ArchError::DimMismatch {
                expected: dim,
                found: rec.len().saturating_sub(1),
            });
        }
        let id = rec[0].to_string();
        let mut v = Vec::with_capacity(dim);
        for field in rec.iter().skip(1) {
            let x: f64 = field
                .trim()
                .parse()
                .map_err(|_| parse_err(line, format!("not a number: {field:?}")))?;
            if !x.is_finite() {
                return Err(ArchError::NonFiniteValue(format!("line {line}: {field}")));
            }
            v.push(x);
        }
        if table.rows.insert(id.clone(), v).is_some() {
            return Err(parse_err(line, format!("duplicate arch_id {id}")));
        }
    }
    Ok(table)
}

/// Per-arch concatenation `[cate | arch2vec | zcp]`.
pub fn concat_caz(
    zcp: &EncodingTable,
    arch2vec: &EncodingTable,
    cate: &EncodingTable,
) -> Result<EncodingTable, ArchError> {
    let keys = |t: &EncodingTable| t.rows.keys().cloned().collect::<Vec<_>>();
    let k = keys(zcp);
    if k != keys(arch2vec) || k != keys(cate) {
        let missing = k
            .iter()
            .chain(arch2vec.rows.keys())
            .chain(cate.rows.keys())
            .find(|id| {
                !(zcp.rows.contains_key(*id)
                    && arch2vec.rows.contains_key(*id)
                    && cate.rows.contains_key(*id))
            })
            .cloned()
            .unwrap_or_default();
        return Err(ArchError::KeyMismatch(missing));
    }
    let dim = zcp.dim + arch2vec.dim + cate.dim;
    let mut out = EncodingTable::new(EncodingKind::Caz, dim);
    for id in k {
        let mut v = Vec::with_capacity(dim);
        v.extend_from_slice(&cate.rows[&id]);
        v.extend_from_slice(&arch2vec.rows[&id]);
        v.extend_from_slice(&zcp.rows[&id]);
        out.rows.insert(id, v);
    }
    Ok(out)
}
