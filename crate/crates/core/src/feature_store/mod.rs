//! Dataset ingestion: the JSON manifest, raw `.f32` activation tensors and the
//! synthetic generator used for desk-scale experiments.
//!
//! On-disk layout:
//!
//! ```text
//! <root>/manifest.json
//! <root>/tensors/<sample_id>.f32        raw little-endian f32, row-major (H, W, d)
//! <root>/oracle_explanations.jsonl     synthetic datasets only
//! ```

mod synth;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use synth::{default_catalog, generate_synthetic, PlantedPair, SegmentSpec, SynthParams};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const ORACLE_FILE: &str = "oracle_explanations.jsonl";
pub const TENSOR_DIR: &str = "tensors";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Grid {
    pub h: usize,
    pub w: usize,
    pub d: usize,
}

impl Grid {
    pub fn new(h: usize, w: usize, d: usize) -> Self {
        Self { h, w, d }
    }

    pub fn cells(&self) -> usize {
        self.h * self.w
    }

    pub fn len(&self) -> usize {
        self.h * self.w * self.d
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FineClass {
    pub id: usize,
    pub name: String,
    pub coarse_group: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentEntry {
    pub segment_id: u32,
    pub canonical_name: String,
    #[serde(default)]
    pub synonyms: Vec<String>,
}

/// Axis-aligned box in normalized image coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl BoundingBox {
    pub const FULL: BoundingBox = BoundingBox { x0: 0.0, y0: 0.0, x1: 1.0, y1: 1.0 };

    pub fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Result<Self> {
        let b = Self { x0, y0, x1, y1 };
        if b.is_valid() {
            Ok(b)
        } else {
            Err(Error::MalformedManifest(format!("invalid bounding box {b:?}")))
        }
    }

    pub fn is_valid(&self) -> bool {
        (0.0..1.0).contains(&self.x0)
            && (0.0..1.0).contains(&self.y0)
            && self.x0 < self.x1
            && self.y0 < self.y1
            && self.x1 <= 1.0
            && self.y1 <= 1.0
    }

    /// Box covering grid cells `rows × cols` (half-open ranges) exactly.
    pub fn from_cells(grid: Grid, rows: std::ops::Range<usize>, cols: std::ops::Range<usize>) -> Self {
        Self {
            x0: cols.start as f64 / grid.w as f64,
            y0: rows.start as f64 / grid.h as f64,
            x1: cols.end as f64 / grid.w as f64,
            y1: rows.end as f64 / grid.h as f64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
    Pool,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
            Split::Pool => "pool",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub sample_id: u32,
    pub fine_label: usize,
    pub split: Split,
    pub tensor_ref: String,
    /// Part locations; may be partial when localization failed.
    #[serde(default)]
    pub segment_boxes: BTreeMap<u32, BoundingBox>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub name: String,
    pub grid: Grid,
    pub fine_classes: Vec<FineClass>,
    pub segment_catalog: Vec<SegmentEntry>,
    pub samples: Vec<SampleRecord>,
}

impl DatasetManifest {
    pub fn num_classes(&self) -> usize {
        self.fine_classes.len()
    }

    pub fn class_name(&self, class: usize) -> Option<&str> {
        self.fine_classes.get(class).map(|c| c.name.as_str())
    }

    pub fn class_by_name(&self, name: &str) -> Option<usize> {
        self.fine_classes.iter().find(|c| c.name == name).map(|c| c.id)
    }

    pub fn segment(&self, id: u32) -> Option<&SegmentEntry> {
        self.segment_catalog.iter().find(|s| s.segment_id == id)
    }

    pub fn samples_in(&self, split: Split) -> impl Iterator<Item = (usize, &SampleRecord)> {
        self.samples.iter().enumerate().filter(move |(_, s)| s.split == split)
    }

    /// Structural checks that need no file access.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::MalformedManifest(msg));
        if self.grid.is_empty() {
            return bad(format!("empty grid {:?}", self.grid));
        }
        let c = self.fine_classes.len();
        if c == 0 {
            return bad("no fine classes".into());
        }
        for (i, class) in self.fine_classes.iter().enumerate() {
            if class.id != i {
                return bad(format!("fine class ids must be 0..{c} in order, found {} at {i}", class.id));
            }
        }
        let groups: HashSet<usize> = self.fine_classes.iter().map(|f| f.coarse_group).collect();
        if let Some(g) = (0..groups.len()).find(|g| !groups.contains(g)) {
            return bad(format!("coarse group ids must be dense; group {g} has no class"));
        }

        let mut ids = HashSet::new();
        let mut surfaces = HashSet::new();
        for seg in &self.segment_catalog {
            if !ids.insert(seg.segment_id) {
                return bad(format!("duplicate segment id {}", seg.segment_id));
            }
            for name in std::iter::once(&seg.canonical_name).chain(&seg.synonyms) {
                if name.is_empty() || *name != name.to_lowercase() {
                    return bad(format!("segment name {name:?} must be non-empty lowercase"));
                }
                if !surfaces.insert(name.as_str()) {
                    return bad(format!("segment name {name:?} is not unique in the catalog"));
                }
            }
        }

        let mut sample_ids = HashSet::new();
        let mut train = vec![0usize; c];
        let mut test = vec![0usize; c];
        for s in &self.samples {
            if !sample_ids.insert(s.sample_id) {
                return bad(format!("duplicate sample id {}", s.sample_id));
            }
            if s.fine_label >= c {
                return bad(format!("sample {} has label {} outside 0..{c}", s.sample_id, s.fine_label));
            }
            for (seg, b) in &s.segment_boxes {
                if !ids.contains(seg) {
                    return bad(format!("sample {} has a box for unknown segment {seg}", s.sample_id));
                }
                if !b.is_valid() {
                    return bad(format!("sample {} has invalid box {b:?}", s.sample_id));
                }
            }
            match s.split {
                Split::Train => train[s.fine_label] += 1,
                Split::Test => test[s.fine_label] += 1,
                Split::Pool => {}
            }
        }
        if let Some(k) = (0..c).find(|&k| train[k] == 0 || test[k] == 0) {
            return bad(format!("class {k} needs at least one train and one test sample"));
        }
        Ok(())
    }
}

/// `H×W×d` feature grid, row-major with channels innermost.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationMap {
    grid: Grid,
    values: Vec<f64>,
}

impl ActivationMap {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::DimMismatch { expected: grid.len(), got: values.len() });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericalFailure("activation map holds a non-finite value".into()));
        }
        Ok(Self { grid, values })
    }

    pub fn filled(grid: Grid, value: f64) -> Self {
        Self { grid, values: vec![value; grid.len()] }
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn cell(&self, row: usize, col: usize) -> &[f64] {
        let start = (row * self.grid.w + col) * self.grid.d;
        &self.values[start..start + self.grid.d]
    }

    pub fn get(&self, row: usize, col: usize, channel: usize) -> f64 {
        self.values[(row * self.grid.w + col) * self.grid.d + channel]
    }

    /// The `H·W` cell vectors as rows of a matrix.
    pub fn cells(&self) -> ArrayView2<'_, f64> {
        ArrayView2::from_shape((self.grid.cells(), self.grid.d), &self.values)
            .expect("grid shape matches value length")
    }
}

/// Reads and validates a manifest. `path` may name the manifest file or the
/// dataset root directory.
pub fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    let (root, file) = resolve_manifest_path(path);
    let text = fs::read_to_string(&file).map_err(|e| {
        Error::MalformedManifest(format!("cannot read {}: {e}", file.display()))
    })?;
    let manifest: DatasetManifest =
        serde_json::from_str(&text).map_err(|e| Error::MalformedManifest(e.to_string()))?;
    manifest.validate()?;

    let expected = manifest.grid.len();
    for s in &manifest.samples {
        let tensor = root.join(&s.tensor_ref);
        let meta = fs::metadata(&tensor).map_err(|_| Error::MissingTensor(tensor.clone()))?;
        if !meta.is_file() {
            return Err(Error::MissingTensor(tensor));
        }
        let len = meta.len() as usize;
        if len % 4 != 0 || len / 4 != expected {
            return Err(Error::DimMismatch { expected, got: len / 4 });
        }
    }
    Ok(manifest)
}

fn resolve_manifest_path(path: &Path) -> (PathBuf, PathBuf) {
    if path.is_dir() {
        (path.to_path_buf(), path.join(MANIFEST_FILE))
    } else {
        let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        (root, path.to_path_buf())
    }
}

pub fn load_activation(root: &Path, record: &SampleRecord, grid: Grid) -> Result<ActivationMap> {
    let path = root.join(&record.tensor_ref);
    let bytes = fs::read(&path).map_err(|_| Error::MissingTensor(path.clone()))?;
    if bytes.len() != grid.len() * 4 {
        return Err(Error::DimMismatch { expected: grid.len(), got: bytes.len() / 4 });
    }
    let mut values = Vec::with_capacity(grid.len());
    for (index, chunk) in bytes.chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]);
        if !v.is_finite() {
            return Err(Error::NonFiniteValue { path, index });
        }
        values.push(f64::from(v));
    }
    Ok(ActivationMap { grid, values })
}

pub fn write_tensor(path: &Path, values: &[f32]) -> Result<()> {
    let bytes: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
    fs::write(path, bytes)?;
    Ok(())
}

/// A validated manifest with every activation map resident in memory.
#[derive(Debug, Clone)]
pub struct Dataset {
    root: PathBuf,
    manifest: DatasetManifest,
    maps: Vec<ActivationMap>,
    by_id: HashMap<u32, usize>,
}

impl Dataset {
    pub fn open(path: &Path) -> Result<Self> {
        let manifest = load_manifest(path)?;
        let (root, _) = resolve_manifest_path(path);
        let maps = manifest
            .samples
            .iter()
            .map(|s| load_activation(&root, s, manifest.grid))
            .collect::<Result<Vec<_>>>()?;
        let by_id = manifest.samples.iter().enumerate().map(|(i, s)| (s.sample_id, i)).collect();
        Ok(Self { root, manifest, maps, by_id })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn manifest(&self) -> &DatasetManifest {
        &self.manifest
    }

    pub fn grid(&self) -> Grid {
        self.manifest.grid
    }

    pub fn num_classes(&self) -> usize {
        self.manifest.num_classes()
    }

    pub fn sample(&self, index: usize) -> (&SampleRecord, &ActivationMap) {
        (&self.manifest.samples[index], &self.maps[index])
    }

    pub fn index_of(&self, sample_id: u32) -> Option<usize> {
        self.by_id.get(&sample_id).copied()
    }

    pub fn by_sample_id(&self, sample_id: u32) -> Option<(&SampleRecord, &ActivationMap)> {
        self.index_of(sample_id).map(|i| self.sample(i))
    }

    /// Sample indices in `split`, in manifest order.
    pub fn split_indices(&self, split: Split) -> Vec<usize> {
        self.manifest.samples_in(split).map(|(i, _)| i).collect()
    }
}
