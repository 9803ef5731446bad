use std::time::Instant;

use curvegcn::data::{gen_synthetic, is_simple, load_sample, read_annotation, DatasetManifest, MANIFEST_FILE};
use curvegcn::geometry::{signed_area, Point2};
use curvegcn::raster::{iou, render};
use curvegcn::Error;

fn tree(root: &std::path::Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    for dir in ["", "images", "annotations"] {
        let mut entries: Vec<_> = std::fs::read_dir(root.join(dir)).unwrap().map(|e| e.unwrap().path()).collect();
        entries.sort();
        for p in entries.into_iter().filter(|p| p.is_file()) {
            out.push((p.strip_prefix(root).unwrap().display().to_string(), std::fs::read(&p).unwrap()));
        }
    }
    out
}

#[test]
fn generation_is_reproducible_byte_for_byte() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    gen_synthetic(a.path(), 12, 5, 64, "train").unwrap();
    gen_synthetic(b.path(), 12, 5, 64, "train").unwrap();
    let (ta, tb) = (tree(a.path()), tree(b.path()));
    assert_eq!(ta.len(), 25);
    assert_eq!(ta, tb);
    let c = tempfile::tempdir().unwrap();
    gen_synthetic(c.path(), 12, 6, 64, "train").unwrap();
    assert_ne!(tree(c.path()), ta);
}

#[test]
fn generated_polygons_are_simple_and_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = gen_synthetic(dir.path(), 40, 11, 64, "train").unwrap();
    let reloaded = DatasetManifest::load(dir.path()).unwrap();
    assert_eq!(reloaded, manifest);
    for (i, entry) in manifest.samples.iter().enumerate() {
        let ann = read_annotation(&dir.path().join(&entry.annotation)).unwrap();
        assert!(is_simple(&ann.vertices), "{}", ann.id);
        let sample = load_sample(&manifest, i).unwrap();
        // generator already writes counter-clockwise rings, so load keeps them as stored
        assert_eq!(sample.polygon, ann.vertices);
        assert!(signed_area(&sample.polygon) > 0.0);
        assert_eq!(sample.image.shape(), &[3, 64, 64]);
        // the differentiable renderer shares the scanline pixel rule
        let unit: Vec<Point2> = sample.polygon.iter().map(|p| *p * (1.0 / 64.0)).collect();
        let rendered = render(&unit, 64, 64).unwrap();
        assert_eq!(iou(&rendered, &sample.mask).unwrap(), 1.0);
    }
}

#[test]
fn five_hundred_samples_generate_quickly() {
    let dir = tempfile::tempdir().unwrap();
    let start = Instant::now();
    gen_synthetic(dir.path(), 500, 1, 64, "train").unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    println!("generated 500 samples in {elapsed:.2} s");
    assert!(elapsed < 60.0);
}

#[test]
fn corrupt_annotation_names_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = gen_synthetic(dir.path(), 2, 1, 32, "t").unwrap();
    let path = dir.path().join(&manifest.samples[1].annotation);
    std::fs::write(&path, b"{ not json").unwrap();
    match load_sample(&manifest, 1) {
        Err(Error::Parse { path: p, .. }) => assert_eq!(p, path),
        other => panic!("expected parse error, got {other:?}"),
    }
    std::fs::write(&path, br#"{"id":"t","vertices":[[0,0],[1,1]],"height":32,"width":32}"#).unwrap();
    assert!(matches!(load_sample(&manifest, 1), Err(Error::Parse { .. })));
    std::fs::remove_file(dir.path().join(&manifest.samples[0].image)).unwrap();
    assert!(matches!(load_sample(&manifest, 0), Err(Error::Io { .. })));
    assert!(matches!(DatasetManifest::load(&dir.path().join("missing")), Err(Error::Io { .. })));
    assert!(dir.path().join(MANIFEST_FILE).exists());
}
