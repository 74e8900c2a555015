//! Synthetic datasets with planted discriminating segments.
//!
//! Every class is built from a prototype grid. The two classes of a planted
//! pair share one prototype and differ only inside the box of one segment,
//! where they carry opposite offsets `+δ·u` / `−δ·u` along a random unit
//! direction `u`. Prototypes are the sum of
//!
//! * a per-cell background shared by all classes,
//! * a per-segment marker vector inside each catalog box (what a part "looks
//!   like"; this is what attention queries can lock onto),
//! * a per-prototype signature constant over cells (separates unrelated
//!   classes in pooled space).
//!
//! I.i.d. Gaussian noise of scale σ is added to every value of every sample.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io::Write;
use std::ops::Range;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{
    write_tensor, BoundingBox, DatasetManifest, FineClass, Grid, SampleRecord, SegmentEntry, Split,
    MANIFEST_FILE, ORACLE_FILE, TENSOR_DIR,
};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentSpec {
    pub name: String,
    pub synonyms: Vec<String>,
    /// Grid-aligned box as half-open cell ranges.
    pub rows: Range<usize>,
    pub cols: Range<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlantedPair {
    pub classes: (usize, usize),
    pub segment: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthParams {
    pub classes: usize,
    pub coarse_groups: usize,
    pub grid: Grid,
    pub n_train: usize,
    pub n_test: usize,
    pub n_pool: usize,
    pub segments: Vec<SegmentSpec>,
    pub pairs: Vec<PlantedPair>,
    pub delta: f64,
    pub sigma: f64,
    pub background_scale: f64,
    pub marker_scale: f64,
    pub signature_scale: f64,
}

fn seg(name: &str, synonyms: &[&str], rows: Range<usize>, cols: Range<usize>) -> SegmentSpec {
    SegmentSpec {
        name: name.to_string(),
        synonyms: synonyms.iter().map(|s| s.to_string()).collect(),
        rows,
        cols,
    }
}

/// Bird-part catalog laid out on an 8×8 grid. The first entries are the ones
/// planted by [`SynthParams::with_planted_pairs`].
pub fn default_catalog() -> Vec<SegmentSpec> {
    vec![
        seg("bill", &["beak", "bills", "mandible", "lower mandible", "upper mandible"], 2..4, 0..2),
        seg("eye", &["eyes", "eyering", "iris"], 0..2, 2..4),
        seg("wing", &["wings", "wingbar", "wingbars", "primaries"], 4..6, 5..7),
        seg("crown", &["cap", "head top"], 0..2, 4..6),
        seg("tail", &["tails", "rectrices", "tail feathers"], 6..8, 6..8),
        seg("nape", &["hindneck"], 2..3, 6..8),
        seg("throat", &["chin", "gular"], 4..5, 1..3),
        seg("breast", &["chest"], 4..6, 3..5),
        seg("belly", &["abdomen", "underparts"], 6..7, 3..5),
        seg("back", &["mantle"], 3..4, 5..8),
        seg("leg", &["legs", "feet", "foot", "tarsus"], 7..8, 3..4),
        seg("forehead", &["forecrown"], 0..1, 0..2),
    ]
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            classes: 10,
            coarse_groups: 5,
            grid: Grid::new(8, 8, 16),
            n_train: 15,
            n_test: 30,
            n_pool: 15,
            segments: default_catalog(),
            pairs: Vec::new(),
            delta: 2.0,
            sigma: 1.0,
            background_scale: 1.0,
            marker_scale: 4.0,
            signature_scale: 2.0,
        }
        .with_planted_pairs(5)
    }
}

impl SynthParams {
    /// Plants `n` pairs `(0,1), (2,3), ...`, cycling through the catalog for
    /// their segments.
    pub fn with_planted_pairs(mut self, n: usize) -> Self {
        let names: Vec<String> = self.segments.iter().map(|s| s.name.clone()).collect();
        self.pairs = (0..n)
            .map(|i| PlantedPair {
                classes: (2 * i, 2 * i + 1),
                segment: names.get(i % names.len().max(1)).cloned().unwrap_or_default(),
            })
            .collect();
        self
    }

    pub fn class_name(&self, class: usize) -> String {
        format!("species {class:02}")
    }

    pub fn coarse_group_of(&self, class: usize) -> usize {
        class * self.coarse_groups / self.classes
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParams(m));
        if self.classes < 2 {
            return bad(format!("need at least 2 classes, got {}", self.classes));
        }
        if self.coarse_groups == 0 || self.coarse_groups > self.classes {
            return bad(format!("coarse group count {} must be in 1..={}", self.coarse_groups, self.classes));
        }
        if self.grid.is_empty() {
            return bad("grid dimensions must be positive".into());
        }
        if self.n_train < 2 || self.n_test < 1 {
            return bad("need at least 2 train and 1 test samples per class".into());
        }
        if !(self.sigma >= 0.0 && self.delta > 0.0) {
            return bad("need sigma >= 0 and delta > 0".into());
        }
        let mut names = HashSet::new();
        for s in &self.segments {
            for n in std::iter::once(&s.name).chain(&s.synonyms) {
                if n.is_empty() || *n != n.to_lowercase() || !names.insert(n.as_str()) {
                    return bad(format!("segment name {n:?} must be unique and lowercase"));
                }
            }
            if s.rows.is_empty() || s.cols.is_empty() || s.rows.end > self.grid.h || s.cols.end > self.grid.w {
                return bad(format!("segment {:?} box does not fit the grid", s.name));
            }
        }
        let mut used = HashSet::new();
        for p in &self.pairs {
            let (a, b) = p.classes;
            if a == b || a >= self.classes || b >= self.classes {
                return bad(format!("invalid planted pair {:?}", p.classes));
            }
            if !used.insert(a) || !used.insert(b) {
                return bad(format!("class in pair {:?} already belongs to another planted pair", p.classes));
            }
            if !self.segments.iter().any(|s| s.name == p.segment) {
                return bad(format!(
                    "pair {:?} shares a prototype but names no distinguishing segment ({:?} is not in the catalog)",
                    p.classes, p.segment
                ));
            }
        }
        Ok(())
    }
}

fn unit_vector(rng: &mut ChaCha8Rng, d: usize, scale: f64) -> Vec<f64> {
    let v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
    v.into_iter().map(|x| x * scale / norm).collect()
}

#[derive(Serialize)]
struct OracleRecord<'a> {
    pair: [&'a str; 2],
    text: String,
}

/// Writes `manifest.json`, `tensors/*.f32` and `oracle_explanations.jsonl`
/// under `out_dir`. Output is a pure function of `(params, seed)`.
pub fn generate_synthetic(params: &SynthParams, seed: u64, out_dir: &Path) -> Result<DatasetManifest> {
    params.validate()?;
    let grid = params.grid;
    let (cells, d) = (grid.cells(), grid.d);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let background: Vec<Vec<f64>> =
        (0..cells).map(|_| unit_vector(&mut rng, d, params.background_scale)).collect();
    let markers: Vec<Vec<f64>> =
        params.segments.iter().map(|_| unit_vector(&mut rng, d, params.marker_scale)).collect();

    // Prototype units: one per planted pair, then one per remaining class.
    let mut unit_of = vec![usize::MAX; params.classes];
    for (i, p) in params.pairs.iter().enumerate() {
        unit_of[p.classes.0] = i;
        unit_of[p.classes.1] = i;
    }
    let mut n_units = params.pairs.len();
    for u in unit_of.iter_mut().filter(|u| **u == usize::MAX) {
        *u = n_units;
        n_units += 1;
    }
    let signatures: Vec<Vec<f64>> =
        (0..n_units).map(|_| unit_vector(&mut rng, d, params.signature_scale)).collect();
    let directions: Vec<Vec<f64>> =
        params.pairs.iter().map(|_| unit_vector(&mut rng, d, params.delta)).collect();

    let cell_index = |r: usize, c: usize| r * grid.w + c;
    let mut prototypes = Vec::with_capacity(params.classes);
    for class in 0..params.classes {
        let mut proto = vec![0.0; grid.len()];
        for cell in 0..cells {
            for ch in 0..d {
                proto[cell * d + ch] = background[cell][ch] + signatures[unit_of[class]][ch];
            }
        }
        for (s, spec) in params.segments.iter().enumerate() {
            for r in spec.rows.clone() {
                for c in spec.cols.clone() {
                    let cell = cell_index(r, c);
                    for ch in 0..d {
                        proto[cell * d + ch] += markers[s][ch];
                    }
                }
            }
        }
        prototypes.push(proto);
    }
    for (p, pair) in params.pairs.iter().enumerate() {
        let spec = params.segments.iter().find(|s| s.name == pair.segment).expect("validated");
        for (class, sign) in [(pair.classes.0, 1.0), (pair.classes.1, -1.0)] {
            for r in spec.rows.clone() {
                for c in spec.cols.clone() {
                    let cell = cell_index(r, c);
                    for ch in 0..d {
                        prototypes[class][cell * d + ch] += sign * directions[p][ch];
                    }
                }
            }
        }
    }

    let segment_boxes: BTreeMap<u32, BoundingBox> = params
        .segments
        .iter()
        .enumerate()
        .map(|(i, s)| (i as u32, BoundingBox::from_cells(grid, s.rows.clone(), s.cols.clone())))
        .collect();

    fs::create_dir_all(out_dir.join(TENSOR_DIR))?;
    let mut samples = Vec::new();
    let mut next_id = 0u32;
    for (split, n) in [(Split::Train, params.n_train), (Split::Test, params.n_test), (Split::Pool, params.n_pool)] {
        for (class, proto) in prototypes.iter().enumerate() {
            for _ in 0..n {
                let values: Vec<f32> = proto
                    .iter()
                    .map(|&v| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        (v + params.sigma * z) as f32
                    })
                    .collect();
                let tensor_ref = format!("{TENSOR_DIR}/{next_id}.f32");
                write_tensor(&out_dir.join(&tensor_ref), &values)?;
                samples.push(SampleRecord {
                    sample_id: next_id,
                    fine_label: class,
                    split,
                    tensor_ref,
                    segment_boxes: segment_boxes.clone(),
                });
                next_id += 1;
            }
        }
    }

    let manifest = DatasetManifest {
        name: format!("synthetic-c{}-p{}-s{seed}", params.classes, params.pairs.len()),
        grid,
        fine_classes: (0..params.classes)
            .map(|c| FineClass { id: c, name: params.class_name(c), coarse_group: params.coarse_group_of(c) })
            .collect(),
        segment_catalog: params
            .segments
            .iter()
            .enumerate()
            .map(|(i, s)| SegmentEntry {
                segment_id: i as u32,
                canonical_name: s.name.clone(),
                synonyms: s.synonyms.clone(),
            })
            .collect(),
        samples,
    };
    manifest.validate()?;
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    fs::write(out_dir.join(MANIFEST_FILE), text)?;

    let mut oracle = fs::File::create(out_dir.join(ORACLE_FILE))?;
    for pair in &params.pairs {
        let (a, b) = (params.class_name(pair.classes.0), params.class_name(pair.classes.1));
        let record = OracleRecord {
            pair: [&a, &b],
            text: format!(
                "{a} and {b} look almost the same, but the {s} is different: compare the {s} of {a} with that of {b}.",
                s = pair.segment
            ),
        };
        writeln!(oracle, "{}", serde_json::to_string(&record)?)?;
    }
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_documented_setup() {
        let p = SynthParams::default();
        assert_eq!((p.classes, p.coarse_groups), (10, 5));
        assert_eq!(p.grid, Grid::new(8, 8, 16));
        assert_eq!((p.n_train, p.n_test), (15, 30));
        assert_eq!((p.delta, p.sigma), (2.0, 1.0));
        assert_eq!(p.pairs.len(), 5);
        assert_eq!(p.pairs[0], PlantedPair { classes: (0, 1), segment: "bill".into() });
        // pairs stay inside one coarse group
        for pair in &p.pairs {
            assert_eq!(p.coarse_group_of(pair.classes.0), p.coarse_group_of(pair.classes.1));
        }
    }

    #[test]
    fn rejects_bad_params() {
        let dir = tempfile::tempdir().unwrap();
        let one = SynthParams { classes: 1, ..SynthParams::default() };
        assert!(matches!(generate_synthetic(&one, 0, dir.path()), Err(Error::InvalidParams(_))));

        let mut unnamed = SynthParams::default();
        unnamed.pairs[0].segment = "antenna".into();
        assert!(matches!(generate_synthetic(&unnamed, 0, dir.path()), Err(Error::InvalidParams(_))));

        let mut shared = SynthParams::default();
        shared.pairs[1].classes = (1, 2);
        assert!(matches!(generate_synthetic(&shared, 0, dir.path()), Err(Error::InvalidParams(_))));
    }

    #[test]
    fn oracle_has_one_line_per_pair() {
        let dir = tempfile::tempdir().unwrap();
        let params = SynthParams { n_test: 2, n_pool: 0, ..SynthParams::default() };
        generate_synthetic(&params, 3, dir.path()).unwrap();
        let text = fs::read_to_string(dir.path().join(ORACLE_FILE)).unwrap();
        assert_eq!(text.lines().count(), 5);
        assert!(text.lines().next().unwrap().contains("bill"));
    }
}
