use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::DeviceError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyRecord {
    pub arch_id: String,
    pub device_id: String,
    pub latency_ms: f64,
}

/// Latency measurements indexed by device, then arch.
///
/// `(arch_id, device_id)` pairs are unique and every latency is positive and
/// finite. Iteration is always in sorted (device_id, arch_id) order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LatencyTable {
    by_device: BTreeMap<String, BTreeMap<String, f64>>,
}

impl LatencyTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(
        &mut self,
        arch_id: impl Into<String>,
        device_id: impl Into<String>,
        latency_ms: f64,
    ) -> Result<(), DeviceError> {
        let (arch_id, device_id) = (arch_id.into(), device_id.into());
        if !(latency_ms.is_finite() && latency_ms > 0.0) {
            return Err(DeviceError::BadLatency {
                arch_id,
                device_id,
                value: latency_ms,
            });
        }
        let dev = self.by_device.entry(device_id.clone()).or_default();
        if dev.insert(arch_id.clone(), latency_ms).is_some() {
            return Err(DeviceError::DuplicateRecord { arch_id, device_id });
        }
        Ok(())
    }

    pub fn get(&self, arch_id: &str, device_id: &str) -> Option<f64> {
        self.by_device.get(device_id)?.get(arch_id).copied()
    }

    pub fn devices(&self) -> Vec<String> {
        self.by_device.keys().cloned().collect()
    }

    pub fn has_device(&self, device_id: &str) -> bool {
        self.by_device.contains_key(device_id)
    }

    /// Sorted arch ids measured on `device_id`.
    pub fn archs_of(&self, device_id: &str) -> Vec<String> {
        self.by_device
            .get(device_id)
            .map(|m| m.keys().cloned().collect())
            .unwrap_or_default()
    }

    /// (arch_id, latency) pairs for a device, sorted by arch_id.
    pub fn device_rows(&self, device_id: &str) -> Vec<(&str, f64)> {
        self.by_device
            .get(device_id)
            .map(|m| m.iter().map(|(a, &l)| (a.as_str(), l)).collect())
            .unwrap_or_default()
    }

    /// Arch ids measured on every listed device, sorted.
    pub fn shared_archs(&self, devices: &[&str]) -> Vec<String> {
        let Some((first, rest)) = devices.split_first() else {
            return Vec::new();
        };
        let Some(base) = self.by_device.get(*first) else {
            return Vec::new();
        };
        base.keys()
            .filter(|a| rest.iter().all(|d| self.get(a, d).is_some()))
            .cloned()
            .collect()
    }

    pub fn len(&self) -> usize {
        self.by_device.values().map(BTreeMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn records(&self) -> impl Iterator<Item = LatencyRecord> + '_ {
        self.by_device.iter().flat_map(|(d, m)| {
            m.iter().map(move |(a, &l)| LatencyRecord {
                arch_id: a.clone(),
                device_id: d.clone(),
                latency_ms: l,
            })
        })
    }

    /// Sub-table restricted to the given devices.
    pub fn restrict_devices(&self, devices: &[String]) -> LatencyTable {
        LatencyTable {
            by_device: self
                .by_device
                .iter()
                .filter(|(d, _)| devices.contains(d))
                .map(|(d, m)| (d.clone(), m.clone()))
                .collect(),
        }
    }

    /// Sub-table restricted to the given archs on one device.
    pub fn select(&self, device_id: &str, arch_ids: &[String]) -> LatencyTable {
        let mut out = LatencyTable::new();
        if let Some(m) = self.by_device.get(device_id) {
            let picked = arch_ids
                .iter()
                .filter_map(|a| m.get(a).map(|&l| (a.clone(), l)))
                .collect();
            out.by_device.insert(device_id.to_string(), picked);
        }
        out
    }

    /// Merges another table in; overlapping records must agree exactly.
    pub fn merge(&mut self, other: &LatencyTable) -> Result<(), DeviceError> {
        for r in other.records() {
            match self.get(&r.arch_id, &r.device_id) {
                Some(v) if v == r.latency_ms => {}
                Some(_) => {
                    return Err(DeviceError::DuplicateRecord {
                        arch_id: r.arch_id,
                        device_id: r.device_id,
                    })
                }
                None => self.insert(r.arch_id, r.device_id, r.latency_ms)?,
            }
        }
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self, DeviceError> {
        let mut rdr = csv::Reader::from_reader(r);
        let header = rdr.headers().map_err(|e| DeviceError::Parse(e.to_string()))?.clone();
        let cols: Vec<&str> = header.iter().collect();
        if cols != ["arch_id", "device_id", "latency_ms"] {
            return Err(DeviceError::Parse(format!(
                "expected header arch_id,device_id,latency_ms, got {}",
                cols.join(",")
            )));
        }
        let mut t = LatencyTable::new();
        for (i, rec) in rdr.deserialize::<LatencyRecord>().enumerate() {
            let rec = rec.map_err(|e| DeviceError::Parse(format!("row {}: {e}", i + 2)))?;
            t.insert(rec.arch_id, rec.device_id, rec.latency_ms)?;
        }
        Ok(t)
    }

    pub fn load(path: &Path) -> Result<Self, DeviceError> {
        let f = std::fs::File::open(path)
            .map_err(|e| DeviceError::Io(format!("{}: {e}", path.display())))?;
        Self::read_csv(f).map_err(|e| match e {
            DeviceError::Parse(m) => DeviceError::Parse(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), DeviceError> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["arch_id", "device_id", "latency_ms"])
            .map_err(|e| DeviceError::Io(e.to_string()))?;
        for r in self.records() {
            wtr.write_record([r.arch_id, r.device_id, format!("{:?}", r.latency_ms)])
                .map_err(|e| DeviceError::Io(e.to_string()))?;
        }
        wtr.flush().map_err(|e| DeviceError::Io(e.to_string()))
    }
}
