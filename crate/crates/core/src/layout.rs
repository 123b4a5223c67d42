//! Scalp layout of the 62-channel cap and the electrode pair tables used by
//! the asymmetry (DASM/RASM) and caudality (DCAU) features.
//!
//! The lateral table printed in the original electrode list repeats `F7-F8`;
//! the bundled table replaces the second occurrence with `F1-F2`, the one
//! symmetric frontal pair on this cap that is otherwise missing. Load a
//! custom table with [`PairTables::from_json`] to override it.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Channel rows of the cap, front to back. Each row is laid out left to right.
const CAP_ROWS: &[(f64, &[&str])] = &[
    (0.85, &["FP1", "FPZ", "FP2"]),
    (0.66, &["AF3", "AF4"]),
    (0.44, &["F7", "F5", "F3", "F1", "FZ", "F2", "F4", "F6", "F8"]),
    (0.22, &["FT7", "FC5", "FC3", "FC1", "FCZ", "FC2", "FC4", "FC6", "FT8"]),
    (0.0, &["T7", "C5", "C3", "C1", "CZ", "C2", "C4", "C6", "T8"]),
    (-0.22, &["TP7", "CP5", "CP3", "CP1", "CPZ", "CP2", "CP4", "CP6", "TP8"]),
    (-0.44, &["P7", "P5", "P3", "P1", "PZ", "P2", "P4", "P6", "P8"]),
    (-0.66, &["PO7", "PO5", "PO3", "POZ", "PO4", "PO6", "PO8"]),
    (-0.85, &["CB1", "O1", "OZ", "O2", "CB2"]),
];

/// Lateral offsets (in row half-width units) for rows that are not evenly spaced.
fn row_offsets(names: &[&str]) -> Vec<f64> {
    match names.len() {
        3 => vec![-0.45, 0.0, 0.45],
        2 => vec![-0.35, 0.35],
        7 => vec![-1.0, -0.7, -0.4, 0.0, 0.4, 0.7, 1.0],
        5 => vec![-0.75, -0.4, 0.0, 0.4, 0.75],
        n => (0..n)
            .map(|i| -1.0 + 2.0 * i as f64 / (n - 1) as f64)
            .collect(),
    }
}

pub const BUNDLED_PAIR_TABLES: &str = include_str!("../data/pair_tables.json");

/// Canonical channel spelling: upper case, trimmed (`Fp1` and `FP1` are the same electrode).
pub fn canonical(name: &str) -> String {
    name.trim().to_ascii_uppercase()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PairRole {
    Lateral,
    Caudal,
}

/// Ordered electrode pairs. For the lateral role the first member is the
/// left electrode; for the caudal role it is the frontal one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairTable {
    pub role: PairRole,
    pub pairs: Vec<(String, String)>,
}

impl PairTable {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Same pairs with members exchanged.
    pub fn swapped(&self) -> PairTable {
        PairTable {
            role: self.role,
            pairs: self
                .pairs
                .iter()
                .map(|(a, b)| (b.clone(), a.clone()))
                .collect(),
        }
    }

    pub fn pair_name(a: &str, b: &str) -> String {
        format!("{a}-{b}")
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct PairTablesFile {
    version: u32,
    #[serde(default)]
    cap: String,
    lateral: Vec<(String, String)>,
    caudal: Vec<(String, String)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairTables {
    pub version: u32,
    pub lateral: PairTable,
    pub caudal: PairTable,
}

impl PairTables {
    pub fn from_json(text: &str) -> Result<Self> {
        let file: PairTablesFile = serde_json::from_str(text)
            .map_err(|e| Error::InvalidLayout(format!("pair table: {e}")))?;
        if file.version != 1 {
            return Err(Error::InvalidLayout(format!(
                "unsupported pair table version {}",
                file.version
            )));
        }
        let canon = |v: Vec<(String, String)>| {
            v.into_iter()
                .map(|(a, b)| (canonical(&a), canonical(&b)))
                .collect()
        };
        Ok(PairTables {
            version: file.version,
            lateral: PairTable {
                role: PairRole::Lateral,
                pairs: canon(file.lateral),
            },
            caudal: PairTable {
                role: PairRole::Caudal,
                pairs: canon(file.caudal),
            },
        })
    }

    pub fn bundled() -> Self {
        Self::from_json(BUNDLED_PAIR_TABLES).expect("bundled pair table is valid")
    }
}

/// Channel names with unit-disc scalp coordinates (x to the right, y towards the nose).
#[derive(Debug, Clone)]
pub struct ChannelLayout {
    names: Vec<String>,
    coords: HashMap<String, (f64, f64)>,
    pub tables: PairTables,
}

impl ChannelLayout {
    /// The 62-channel cap with the bundled pair tables.
    pub fn cap62() -> Self {
        let mut names = Vec::with_capacity(62);
        let mut coords = HashMap::with_capacity(62);
        for &(y, row) in CAP_ROWS {
            let half_width = 0.95 * (1.0 - y * y).sqrt();
            for (name, off) in row.iter().zip(row_offsets(row)) {
                names.push(name.to_string());
                coords.insert(name.to_string(), (off * half_width, y));
            }
        }
        ChannelLayout {
            names,
            coords,
            tables: PairTables::bundled(),
        }
    }

    pub fn with_tables(mut self, tables: PairTables) -> Result<Self> {
        self.tables = tables;
        self.validate()?;
        Ok(self)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn coord(&self, name: &str) -> Option<(f64, f64)> {
        self.coords.get(&canonical(name)).copied()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.coords.contains_key(&canonical(name))
    }

    pub fn lateral(&self) -> &PairTable {
        &self.tables.lateral
    }

    pub fn caudal(&self) -> &PairTable {
        &self.tables.caudal
    }

    /// Checks name uniqueness and that every pair member is on the cap and
    /// no pair is listed twice.
    pub fn validate(&self) -> Result<()> {
        let unique: HashSet<_> = self.names.iter().collect();
        if unique.len() != self.names.len() {
            return Err(Error::InvalidLayout("duplicate channel names".into()));
        }
        for table in [&self.tables.lateral, &self.tables.caudal] {
            let mut seen = HashSet::new();
            for (a, b) in &table.pairs {
                for m in [a, b] {
                    if !self.contains(m) {
                        return Err(Error::InvalidLayout(format!(
                            "pair member {m} is not on the cap"
                        )));
                    }
                }
                if a == b {
                    return Err(Error::InvalidLayout(format!("degenerate pair {a}-{b}")));
                }
                if !seen.insert((a.clone(), b.clone())) {
                    return Err(Error::InvalidLayout(format!("pair {a}-{b} listed twice")));
                }
            }
        }
        Ok(())
    }
}
