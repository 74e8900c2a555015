use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use alice_core::feature_store::{generate_synthetic, Dataset, PlantedPair, Split, SynthParams};
use alice_core::Error;
use serde_json::Value;

fn tree(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(dir).unwrap().display().to_string(), fs::read(&p).unwrap());
            }
        }
    }
    out
}

#[test]
fn same_seed_gives_identical_trees() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    generate_synthetic(&SynthParams::default(), 7, a.path()).unwrap();
    generate_synthetic(&SynthParams::default(), 7, b.path()).unwrap();
    let (ta, tb) = (tree(a.path()), tree(b.path()));
    assert_eq!(ta.len(), 10 * (15 + 30 + 15) + 2);
    assert_eq!(ta, tb);
    let c = tempfile::tempdir().unwrap();
    generate_synthetic(&SynthParams::default(), 8, c.path()).unwrap();
    assert_ne!(tree(c.path()), ta);
}

#[test]
fn invalid_parameters_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let one = SynthParams { classes: 1, coarse_groups: 1, pairs: vec![], ..SynthParams::default() };
    assert!(matches!(generate_synthetic(&one, 0, dir.path()), Err(Error::InvalidParams(_))));
    let mut unknown = SynthParams::default();
    unknown.pairs[0].segment = "antenna".into();
    assert!(matches!(generate_synthetic(&unknown, 0, dir.path()), Err(Error::InvalidParams(_))));
    let mut shared = SynthParams::default();
    shared.pairs.push(PlantedPair { classes: (0, 9), segment: "bill".into() });
    assert!(matches!(generate_synthetic(&shared, 0, dir.path()), Err(Error::InvalidParams(_))));
}

/// Per-class mean tensors of the train split, read straight from disk.
fn class_means(dir: &Path) -> (Value, Vec<Vec<f64>>, usize) {
    let manifest: Value = serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap();
    let g = &manifest["grid"];
    let len = (g["h"].as_u64().unwrap() * g["w"].as_u64().unwrap() * g["d"].as_u64().unwrap()) as usize;
    let classes = manifest["fine_classes"].as_array().unwrap().len();
    let mut sums = vec![vec![0.0; len]; classes];
    let mut counts = vec![0usize; classes];
    for s in manifest["samples"].as_array().unwrap() {
        if s["split"] != "train" {
            continue;
        }
        let c = s["fine_label"].as_u64().unwrap() as usize;
        let bytes = fs::read(dir.join(s["tensor_ref"].as_str().unwrap())).unwrap();
        assert_eq!(bytes.len(), len * 4);
        for (acc, raw) in sums[c].iter_mut().zip(bytes.chunks_exact(4)) {
            *acc += f32::from_le_bytes(raw.try_into().unwrap()) as f64;
        }
        counts[c] += 1;
    }
    let n = counts[0];
    let means = sums.into_iter().zip(counts).map(|(s, n)| s.into_iter().map(|v| v / n as f64).collect()).collect();
    (manifest, means, n)
}

#[test]
fn confusable_pair_differs_only_in_its_segment() {
    let dir = tempfile::tempdir().unwrap();
    let params = SynthParams::default();
    generate_synthetic(&params, 3, dir.path()).unwrap();
    let (manifest, means, n) = class_means(dir.path());
    let (h, w, d) = (8usize, 8usize, 16usize);

    for pair in &params.pairs {
        let spec = params.segments.iter().find(|s| s.name == pair.segment).unwrap();
        let inside = |r: usize, c: usize| spec.rows.contains(&r) && spec.cols.contains(&c);
        let (a, b) = (&means[pair.classes.0], &means[pair.classes.1]);

        let mut outside_total = 0.0;
        let mut outside_count = 0;
        for r in 0..h {
            for c in 0..w {
                if inside(r, c) {
                    continue;
                }
                for ch in 0..d {
                    let i = (r * w + c) * d + ch;
                    outside_total += (a[i] - b[i]).abs();
                    outside_count += 1;
                }
            }
        }
        let outside_mean = outside_total / outside_count as f64;
        assert!(outside_mean < 3.0 * params.sigma / (n as f64).sqrt(), "{pair:?}: {outside_mean}");

        // distance of class means over a region of the planted box's shape
        let region_distance = |r0: usize, c0: usize| {
            let mut s = 0.0;
            for r in r0..r0 + spec.rows.len() {
                for c in c0..c0 + spec.cols.len() {
                    for ch in 0..d {
                        let i = (r * w + c) * d + ch;
                        s += (a[i] - b[i]).powi(2);
                    }
                }
            }
            s.sqrt()
        };
        let planted = region_distance(spec.rows.start, spec.cols.start);
        for r0 in 0..=h - spec.rows.len() {
            for c0 in 0..=w - spec.cols.len() {
                let disjoint = r0 + spec.rows.len() <= spec.rows.start
                    || r0 >= spec.rows.end
                    || c0 + spec.cols.len() <= spec.cols.start
                    || c0 >= spec.cols.end;
                if disjoint {
                    assert!(planted > region_distance(r0, c0) + params.delta / 2.0, "{pair:?} at ({r0}, {c0})");
                }
            }
        }
    }
    assert_eq!(manifest["fine_classes"].as_array().unwrap().len(), 10);
}

#[test]
fn loaded_dataset_counts_add_up() {
    let dir = tempfile::tempdir().unwrap();
    generate_synthetic(&SynthParams::default(), 1, dir.path()).unwrap();
    let ds = Dataset::open(dir.path()).unwrap();
    let train = ds.split_indices(Split::Train);
    let mut per_class = vec![0usize; ds.num_classes()];
    for &i in &train {
        per_class[ds.sample(i).0.fine_label] += 1;
    }
    assert_eq!(per_class.iter().sum::<usize>(), train.len());
    assert!(per_class.iter().all(|&n| n == 15));
    let test = ds.split_indices(Split::Test);
    assert_eq!(test.len(), 300);
    let oracle = fs::read_to_string(dir.path().join("oracle_explanations.jsonl")).unwrap();
    assert_eq!(oracle.lines().count(), 5);
}
