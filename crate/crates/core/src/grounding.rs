//! Grounds class-level explanation knowledge onto individual training
//! samples: each mentioned segment is cropped from the feature grid and
//! resized back to the full `H×W` resolution.

use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::feature_store::{ActivationMap, BoundingBox, Dataset, Split};
use crate::parser::ParsedExplanation;

#[derive(Debug, Clone, PartialEq)]
pub struct PatchSample {
    pub source_sample_id: u32,
    pub segment_id: u32,
    pub map: ActivationMap,
    pub fine_label: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundingReport {
    pub pair: (usize, usize),
    pub segments: Vec<u32>,
    pub patches_created: usize,
    /// `(sample_id, segment_id)` combinations without a box annotation.
    pub samples_skipped: Vec<(u32, u32)>,
}

/// Inclusive cell range covered by `[lo, hi]` on an axis of `n` cells, at
/// least one cell wide.
fn cell_span(lo: f64, hi: f64, n: usize) -> (usize, usize) {
    const TOL: f64 = 1e-9;
    let last = n - 1;
    let start = ((lo * n as f64 + TOL).floor().max(0.0) as usize).min(last);
    let end = ((hi * n as f64 - TOL).ceil() as isize - 1).clamp(start as isize, last as isize) as usize;
    (start, end)
}

/// Source coordinate for output index `t` of `m` when resampling `n` cells
/// (align-corners: endpoints map to endpoints).
fn source_coord(t: usize, n: usize, m: usize) -> (usize, usize, f64) {
    if n == 1 || m == 1 {
        return (0, 0, 0.0);
    }
    let pos = (t * (n - 1)) as f64 / (m - 1) as f64;
    let i0 = (pos.floor() as usize).min(n - 1);
    let i1 = (i0 + 1).min(n - 1);
    (i0, i1, pos - i0 as f64)
}

pub fn crop_resize(map: &ActivationMap, bbox: &BoundingBox) -> ActivationMap {
    let grid = map.grid();
    let (r0, r1) = cell_span(bbox.y0, bbox.y1, grid.h);
    let (c0, c1) = cell_span(bbox.x0, bbox.x1, grid.w);
    let (rows, cols) = (r1 - r0 + 1, c1 - c0 + 1);

    let mut out = Vec::with_capacity(grid.len());
    for t in 0..grid.h {
        let (y0, y1, fy) = source_coord(t, rows, grid.h);
        for u in 0..grid.w {
            let (x0, x1, fx) = source_coord(u, cols, grid.w);
            let (a, b) = (map.cell(r0 + y0, c0 + x0), map.cell(r0 + y0, c0 + x1));
            let (c, d) = (map.cell(r0 + y1, c0 + x0), map.cell(r0 + y1, c0 + x1));
            for ch in 0..grid.d {
                let top = (1.0 - fx) * a[ch] + fx * b[ch];
                let bottom = (1.0 - fx) * c[ch] + fx * d[ch];
                out.push((1.0 - fy) * top + fy * bottom);
            }
        }
    }
    ActivationMap::new(grid, out).expect("interpolation of finite values is finite")
}

/// One patch per (train sample of either class, mentioned segment with a box),
/// ordered by sample id then segment position.
pub fn ground_explanation(
    parsed: &ParsedExplanation,
    dataset: &Dataset,
    split: Split,
) -> Result<(Vec<PatchSample>, GroundingReport)> {
    let manifest = dataset.manifest();
    if let Some(&bad) = parsed.segments.iter().find(|&&s| manifest.segment(s).is_none()) {
        return Err(Error::UnknownSegment(bad));
    }
    let (p, q) = parsed.pair;
    let mut sources: Vec<usize> = dataset
        .split_indices(split)
        .into_iter()
        .filter(|&i| {
            let label = dataset.sample(i).0.fine_label;
            label == p || label == q
        })
        .collect();
    sources.sort_by_key(|&i| dataset.sample(i).0.sample_id);

    let mut patches = Vec::new();
    let mut skipped = Vec::new();
    for i in sources {
        let (record, map) = dataset.sample(i);
        for &seg in &parsed.segments {
            match record.segment_boxes.get(&seg) {
                Some(b) => patches.push(PatchSample {
                    source_sample_id: record.sample_id,
                    segment_id: seg,
                    map: crop_resize(map, b),
                    fine_label: record.fine_label,
                }),
                None => skipped.push((record.sample_id, seg)),
            }
        }
    }
    let report = GroundingReport {
        pair: parsed.pair,
        segments: parsed.segments.clone(),
        patches_created: patches.len(),
        samples_skipped: skipped,
    };
    Ok((patches, report))
}

/// Replaces each parsed segment with a distinct uniform draw from the
/// catalog, never picking one of the parsed segments.
pub fn randomize_segments<R: Rng>(segments: &[u32], catalog: &[u32], rng: &mut R) -> Vec<u32> {
    let mut out: Vec<u32> = Vec::with_capacity(segments.len());
    for _ in segments {
        let candidates: Vec<u32> = catalog
            .iter()
            .copied()
            .filter(|c| !segments.contains(c) && !out.contains(c))
            .collect();
        match candidates.choose(rng) {
            Some(&c) => out.push(c),
            None => break,
        }
    }
    out
}
