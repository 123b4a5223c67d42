use std::collections::HashMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layout::{canonical, ChannelLayout};
use crate::tensor::{FeatureKind, FeatureTensor};

/// Per-channel means for one (class, band), in layout order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopoMap {
    pub label: i64,
    pub band: String,
    pub channels: Vec<String>,
    pub coords: Vec<(f64, f64)>,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopoGrid {
    pub maps: Vec<TopoMap>,
}

impl TopoGrid {
    pub fn get(&self, label: i64, band: &str) -> Option<&TopoMap> {
        self.maps.iter().find(|m| m.label == label && m.band == band)
    }

    /// One `topo_class<label>_<band>.csv` per map with columns
    /// `channel,x,y,value`.
    pub fn write_csv(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        self.maps
            .iter()
            .map(|m| {
                let path = dir.join(format!("topo_class{}_{}.csv", m.label, m.band));
                let mut s = String::from("channel,x,y,value\n");
                for ((c, (x, y)), v) in m.channels.iter().zip(&m.coords).zip(&m.values) {
                    s.push_str(&format!("{c},{x},{y},{v}\n"));
                }
                std::fs::write(&path, s).map_err(|e| Error::io(&path, e))?;
                Ok(path)
            })
            .collect()
    }
}

/// Mean DE per (class, band, channel) over every window of every trial of
/// that class. Each tensor must cover every layout channel in every band.
pub fn export_topo_grid(tensors: &[FeatureTensor], layout: &ChannelLayout) -> Result<TopoGrid> {
    let first = tensors
        .first()
        .ok_or_else(|| Error::InsufficientData("no DE tensors".into()))?;
    let bands = first.bands();
    let mut sums: HashMap<(i64, String), (Vec<f64>, usize)> = HashMap::new();
    for t in tensors {
        if t.kind() != Some(FeatureKind::De) {
            return Err(Error::KindMismatch {
                expected: "DE".into(),
                found: t.kind().map_or("mixed".into(), |k| k.to_string()),
            });
        }
        let index: HashMap<(String, &str), usize> = t
            .columns
            .iter()
            .enumerate()
            .map(|(i, c)| ((canonical(&c.source), c.band.as_str()), i))
            .collect();
        for band in &bands {
            let cols = layout
                .names()
                .iter()
                .map(|ch| {
                    index.get(&(canonical(ch), band.as_str())).copied().ok_or_else(|| {
                        Error::MissingChannel(format!(
                            "trial {} has no DE column for {ch} in band {band}",
                            t.meta.trial_id
                        ))
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let entry = sums
                .entry((t.meta.label, band.clone()))
                .or_insert_with(|| (vec![0.0; cols.len()], 0));
            for (acc, &c) in entry.0.iter_mut().zip(&cols) {
                *acc += t.values.column(c).sum();
            }
            entry.1 += t.windows();
        }
    }
    let mut labels: Vec<i64> = sums.keys().map(|(l, _)| *l).collect();
    labels.sort();
    labels.dedup();
    let mut maps = Vec::new();
    for label in labels {
        for band in &bands {
            let (sum, n) = &sums[&(label, band.clone())];
            maps.push(TopoMap {
                label,
                band: band.clone(),
                channels: layout.names().to_vec(),
                coords: layout
                    .names()
                    .iter()
                    .map(|c| layout.coord(c).expect("layout channel"))
                    .collect(),
                values: sum.iter().map(|s| s / *n as f64).collect(),
            });
        }
    }
    Ok(TopoGrid { maps })
}
