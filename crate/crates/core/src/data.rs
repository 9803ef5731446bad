//! Synthetic blob dataset: generation, on-disk layout and loading.
//!
//! Layout under a dataset root:
//! `manifest.json`, `images/<id>.png` (8-bit RGB) and
//! `annotations/<id>.json` holding `{"id", "vertices": [[x, y], ...],
//! "height", "width"}` with vertices in pixels.

use std::f64::consts::TAU;
use std::fs;
use std::path::{Path, PathBuf};

use image::{Rgb, RgbImage};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{canonicalize_orientation, crs_sample, Point2};
use crate::numerics::Tensor;
use crate::raster::{scanline_fill, Mask};

pub const MANIFEST_FILE: &str = "manifest.json";
const NOISE_SIGMA: f64 = 0.05;

/// One annotation file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub id: String,
    pub vertices: Vec<Point2>,
    pub height: usize,
    pub width: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    /// Relative to the dataset root.
    pub image: String,
    pub annotation: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    /// Directory holding the manifest; not serialized, set on load.
    #[serde(skip)]
    pub root: PathBuf,
    pub split: String,
    pub seed: u64,
    pub size: usize,
    pub samples: Vec<ManifestEntry>,
}

/// A decoded sample. The polygon is in pixels and oriented counter-clockwise.
#[derive(Clone, Debug)]
pub struct Sample {
    pub id: String,
    /// `3×H×W`, values in `[0, 1]`.
    pub image: Tensor,
    pub polygon: Vec<Point2>,
    pub mask: Mask,
}

impl DatasetManifest {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn load(root: &Path) -> Result<Self> {
        let path = root.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let mut manifest: DatasetManifest =
            serde_json::from_str(&text).map_err(|e| Error::Parse { path: path.clone(), message: e.to_string() })?;
        manifest.root = root.to_path_buf();
        Ok(manifest)
    }

    pub fn save(&self) -> Result<()> {
        let path = self.root.join(MANIFEST_FILE);
        let mut text = serde_json::to_string_pretty(self).expect("manifest serializes");
        text.push('\n');
        fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }
}

/// Which subset a sample belongs to during training.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Val,
}

/// Deterministic train/validation assignment from the sample id and seed alone.
pub fn split_of(id: &str, seed: u64, val_fraction: f64) -> Split {
    let mut h = crc32fast::Hasher::new();
    h.update(id.as_bytes());
    h.update(&seed.to_le_bytes());
    let u = h.finalize() as f64 / (u32::MAX as f64 + 1.0);
    if u < val_fraction {
        Split::Val
    } else {
        Split::Train
    }
}

/// Strict segment intersection test (shared endpoints of adjacent edges excluded by the caller).
fn segments_cross(a: Point2, b: Point2, c: Point2, d: Point2) -> bool {
    let o = |p: Point2, q: Point2, r: Point2| (q - p).cross(r - p);
    let (d1, d2, d3, d4) = (o(a, b, c), o(a, b, d), o(c, d, a), o(c, d, b));
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0)) {
        return true;
    }
    let on = |p: Point2, q: Point2, r: Point2, v: f64| {
        v == 0.0 && r.x >= p.x.min(q.x) && r.x <= p.x.max(q.x) && r.y >= p.y.min(q.y) && r.y <= p.y.max(q.y)
    };
    on(a, b, c, d1) || on(a, b, d, d2) || on(c, d, a, d3) || on(c, d, b, d4)
}

/// `true` when no two non-adjacent edges of the closed ring touch.
pub fn is_simple(poly: &[Point2]) -> bool {
    let n = poly.len();
    if n < 3 {
        return false;
    }
    for i in 0..n {
        for j in i + 1..n {
            if j == i + 1 || (i == 0 && j == n - 1) {
                continue;
            }
            if segments_cross(poly[i], poly[(i + 1) % n], poly[j], poly[(j + 1) % n]) {
                return false;
            }
        }
    }
    true
}

/// Random smooth blob in pixel coordinates: a star polygon with 8 to 16
/// lobes, smoothed by the closed Catmull-Rom spline.
fn random_blob(rng: &mut impl Rng, size: usize) -> Vec<Point2> {
    let s = size as f64;
    loop {
        let lobes = rng.random_range(8..=16);
        let radius = rng.random_range(0.30..0.42) * s;
        let center = Point2::new(s * (0.5 + rng.random_range(-0.03..0.03)), s * (0.5 + rng.random_range(-0.03..0.03)));
        let phase = rng.random_range(0.0..TAU);
        let step = TAU / lobes as f64;
        let control: Vec<Point2> = (0..lobes)
            .map(|j| {
                let a = phase + step * (j as f64 + rng.random_range(-0.3..0.3));
                let r = radius * rng.random_range(0.65..1.0);
                Point2::new(center.x + r * a.cos(), center.y + r * a.sin())
            })
            .collect();
        let Ok(smooth) = crs_sample(&control, 4 * lobes) else { continue };
        let poly = canonicalize_orientation(&smooth.points).points;
        let inside = poly.iter().all(|p| p.x > 1.0 && p.y > 1.0 && p.x < s - 1.0 && p.y < s - 1.0);
        if inside && is_simple(&poly) {
            return poly;
        }
    }
}

fn random_color(rng: &mut impl Rng) -> [f64; 3] {
    [rng.random(), rng.random(), rng.random()]
}

fn render_image(rng: &mut impl Rng, mask: &Mask) -> RgbImage {
    let (h, w) = (mask.height(), mask.width());
    let bg_a = random_color(rng);
    let bg_b = random_color(rng);
    let mut fg = random_color(rng);
    // keep the object distinguishable from the mean background
    let bg_mean: Vec<f64> = (0..3).map(|c| 0.5 * (bg_a[c] + bg_b[c])).collect();
    while (0..3).map(|c| (fg[c] - bg_mean[c]).abs()).sum::<f64>() < 0.6 {
        fg = random_color(rng);
    }
    let freq = rng.random_range(0.1..0.5);
    let angle = rng.random_range(0.0..TAU);
    let (dx, dy) = (angle.cos() * freq, angle.sin() * freq);
    let noise = Normal::new(0.0, NOISE_SIGMA).expect("valid sigma");
    RgbImage::from_fn(w as u32, h as u32, |x, y| {
        let (xf, yf) = (x as f64, y as f64);
        let t = 0.5 + 0.5 * (xf * dx + yf * dy).sin();
        let inside = mask.get(y as usize, x as usize) > 0.5;
        let mut px = [0u8; 3];
        for c in 0..3 {
            let base = if inside { fg[c] } else { bg_a[c] * t + bg_b[c] * (1.0 - t) };
            let v: f64 = base + noise.sample(rng);
            px[c] = (v.clamp(0.0, 1.0) * 255.0).round() as u8;
        }
        Rgb(px)
    })
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Writes `n` synthetic samples of `size×size` pixels under `root`.
pub fn gen_synthetic(root: &Path, n: usize, seed: u64, size: usize, split: &str) -> Result<DatasetManifest> {
    if n == 0 {
        return Err(Error::Invalid("sample count must be at least 1".into()));
    }
    if size < 8 {
        return Err(Error::Invalid(format!("image size {size} is too small")));
    }
    let mut samples = Vec::with_capacity(n);
    for idx in 0..n {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(idx as u64);
        let id = format!("{split}-{idx:05}");
        let polygon = random_blob(&mut rng, size);
        let mask = scanline_fill(&polygon, size, size);
        let img = render_image(&mut rng, &mask);
        let image_rel = format!("images/{id}.png");
        let ann_rel = format!("annotations/{id}.json");
        let image_path = root.join(&image_rel);
        let mut png = Vec::new();
        img.write_to(&mut std::io::Cursor::new(&mut png), image::ImageFormat::Png)
            .map_err(|e| Error::Image { path: image_path.clone(), message: e.to_string() })?;
        write_file(&image_path, &png)?;
        let ann = Annotation { id: id.clone(), vertices: polygon, height: size, width: size };
        let json = serde_json::to_vec(&ann).expect("annotation serializes");
        write_file(&root.join(&ann_rel), &json)?;
        samples.push(ManifestEntry { id, image: image_rel, annotation: ann_rel });
    }
    let manifest = DatasetManifest { root: root.to_path_buf(), split: split.to_owned(), seed, size, samples };
    manifest.save()?;
    Ok(manifest)
}

pub fn read_annotation(path: &Path) -> Result<Annotation> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let ann: Annotation =
        serde_json::from_slice(&bytes).map_err(|e| Error::Parse { path: path.to_path_buf(), message: e.to_string() })?;
    if ann.vertices.len() < 3 {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            message: format!("polygon has {} vertices, need at least 3", ann.vertices.len()),
        });
    }
    if ann.vertices.iter().any(|p| !p.is_finite()) {
        return Err(Error::Parse { path: path.to_path_buf(), message: "non-finite vertex".into() });
    }
    Ok(ann)
}

pub fn read_image(path: &Path) -> Result<RgbImage> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_png(&bytes).map_err(|message| Error::Image { path: path.to_path_buf(), message })
}

/// Decodes PNG bytes into RGB.
pub fn decode_png(bytes: &[u8]) -> std::result::Result<RgbImage, String> {
    image::load_from_memory_with_format(bytes, image::ImageFormat::Png)
        .map(|img| img.to_rgb8())
        .map_err(|e| e.to_string())
}

/// `3×H×W` tensor with values in `[0, 1]`.
pub fn image_to_tensor(img: &RgbImage) -> Tensor {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let raw = img.as_raw();
    Tensor::from_fn(&[3, h, w], |k| {
        let (c, pix) = (k / (h * w), k % (h * w));
        raw[pix * 3 + c] as f64 / 255.0
    })
}

pub fn load_sample(manifest: &DatasetManifest, idx: usize) -> Result<Sample> {
    let entry = manifest
        .samples
        .get(idx)
        .ok_or(Error::IndexOutOfRange { index: idx, len: manifest.samples.len() })?;
    let ann_path = manifest.root.join(&entry.annotation);
    let ann = read_annotation(&ann_path)?;
    let img_path = manifest.root.join(&entry.image);
    let img = read_image(&img_path)?;
    if img.width() as usize != ann.width || img.height() as usize != ann.height {
        return Err(Error::Parse {
            path: ann_path,
            message: format!("annotation is {}x{} but image is {}x{}", ann.width, ann.height, img.width(), img.height()),
        });
    }
    let polygon = canonicalize_orientation(&ann.vertices).points;
    let mask = scanline_fill(&polygon, ann.height, ann.width);
    Ok(Sample { id: ann.id, image: image_to_tensor(&img), polygon, mask })
}

pub fn load_all(manifest: &DatasetManifest) -> Result<Vec<Sample>> {
    (0..manifest.len()).map(|i| load_sample(manifest, i)).collect()
}
