use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::feature_store::DatasetManifest;
use crate::pair::ClassPair;

/// One scripted answer: the pair by class names and the explanation text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptRecord {
    pub pair: [String; 2],
    pub text: String,
}

/// Replayable expert answers, matched by unordered pair.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ExplanationScript {
    records: Vec<(ClassPair, String)>,
}

impl ExplanationScript {
    pub fn parse(text: &str, manifest: &DatasetManifest) -> Result<Self> {
        let mut records = Vec::new();
        for (n, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let rec: ScriptRecord = serde_json::from_str(line)
                .map_err(|e| Error::InvalidConfig(format!("script line {}: {e}", n + 1)))?;
            let resolve = |name: &str| {
                manifest
                    .class_by_name(name)
                    .ok_or_else(|| Error::InvalidConfig(format!("script line {}: unknown class {name:?}", n + 1)))
            };
            let (a, b) = (resolve(&rec.pair[0])?, resolve(&rec.pair[1])?);
            records.push((ClassPair::new(a, b), rec.text));
        }
        Ok(Self { records })
    }

    pub fn load(path: &Path, manifest: &DatasetManifest) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?, manifest)
    }

    /// First answer recorded for the pair, in either order.
    pub fn answer_for(&self, p: usize, q: usize) -> Option<&str> {
        let key = ClassPair::new(p, q);
        self.records.iter().find(|(pair, _)| *pair == key).map(|(_, t)| t.as_str())
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}
