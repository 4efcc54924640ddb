//! Procedural crack patches: value-noise textures with dark random-walk cracks.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::formats;
use crate::mask::BinaryMask;
use crate::nn::LabeledImage;
use crate::rng::rng_for;
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TextureParams {
    pub octaves: usize,
    /// Lattice spacing of the coarsest octave, in pixels.
    pub cell: usize,
    /// Amplitude ratio between successive octaves.
    pub persistence: f64,
    pub low: f32,
    pub high: f32,
}

impl Default for TextureParams {
    fn default() -> Self {
        Self {
            octaves: 4,
            cell: 32,
            persistence: 0.55,
            low: 0.35,
            high: 0.9,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CrackParams {
    pub min_cracks: usize,
    pub max_cracks: usize,
    pub min_width: usize,
    pub max_width: usize,
    /// Spread of the per-step turn impulse, in radians.
    pub waviness: f64,
    /// Fraction of the turn rate carried to the next step.
    pub momentum: f64,
    /// Length of each half-walk from the seed point, as a fraction of the patch side.
    pub min_half_length: f64,
    pub max_half_length: f64,
    /// Rendering stops once the crack pixels reach this fraction of the patch.
    pub max_area_fraction: f64,
}

impl Default for CrackParams {
    fn default() -> Self {
        Self {
            min_cracks: 1,
            max_cracks: 3,
            min_width: 1,
            max_width: 4,
            waviness: 0.12,
            momentum: 0.8,
            min_half_length: 0.25,
            max_half_length: 0.6,
            max_area_fraction: 0.05,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub patch_size: usize,
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    pub positive_fraction: f64,
    /// Source textures per split, in train/val/test order; ids never repeat across splits.
    pub sources: [usize; 3],
    pub texture: TextureParams,
    pub crack: CrackParams,
    pub darkness: f32,
    pub darkness_jitter: f32,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            patch_size: 64,
            n_train: 600,
            n_val: 160,
            n_test: 160,
            positive_fraction: 0.4,
            sources: [6, 2, 2],
            texture: TextureParams::default(),
            crack: CrackParams::default(),
            darkness: 0.3,
            darkness_jitter: 0.1,
            seed: 0,
        }
    }
}

/// Each source texture is this many patch sides wide.
const SOURCE_SCALE: usize = 4;

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let c = &self.crack;
        let t = &self.texture;
        if self.patch_size < 8 {
            return Err(invalid("patch_size must be at least 8"));
        }
        if self.n_train == 0 || self.n_val == 0 || self.n_test == 0 {
            return Err(invalid("every split needs at least one sample"));
        }
        if !(self.positive_fraction > 0.0 && self.positive_fraction < 1.0) {
            return Err(invalid("positive_fraction must lie in (0, 1)"));
        }
        if self.sources.contains(&0) {
            return Err(invalid("every split needs at least one source"));
        }
        if c.min_cracks == 0 || c.min_cracks > c.max_cracks {
            return Err(invalid("crack count range is empty"));
        }
        if c.min_width == 0 || c.min_width > c.max_width || c.max_width > self.patch_size / 2 {
            return Err(invalid("crack width range must lie within the patch"));
        }
        if !(c.max_area_fraction > 0.0 && c.max_area_fraction < 1.0) {
            return Err(invalid("max_area_fraction must lie in (0, 1)"));
        }
        if !(c.min_half_length > 0.0 && c.min_half_length <= c.max_half_length) {
            return Err(invalid("crack length range is empty"));
        }
        if t.octaves == 0 || t.cell == 0 || !(t.low >= 0.0 && t.low < t.high && t.high <= 1.0) {
            return Err(invalid("texture needs octaves, a cell size and 0 ≤ low < high ≤ 1"));
        }
        let lo = self.darkness - self.darkness_jitter;
        let hi = self.darkness + self.darkness_jitter;
        if !(lo > 0.0 && hi < 1.0 && self.darkness_jitter >= 0.0) {
            return Err(invalid("darkness ± jitter must stay within (0, 1)"));
        }
        Ok(())
    }

    pub fn split_size(&self, split: Split) -> usize {
        match split {
            Split::Train => self.n_train,
            Split::Val => self.n_val,
            Split::Test => self.n_test,
        }
    }

    /// Source ids owned by `split`.
    pub fn source_ids(&self, split: Split) -> std::ops::Range<u32> {
        let [a, b, c] = self.sources.map(|s| s as u32);
        match split {
            Split::Train => 0..a,
            Split::Val => a..a + b,
            Split::Test => a + b..a + b + c,
        }
    }
}

/// Multi-octave value noise: bilinear interpolation of random lattices,
/// min-max normalized to `[low, high]`.
pub fn gen_texture(height: usize, width: usize, params: &TextureParams, seed: u64) -> Tensor {
    let mut acc = vec![0.0f64; height * width];
    let mut amplitude = 1.0;
    for octave in 0..params.octaves {
        let mut rng = rng_for(seed, &[octave as u64]);
        let cell = (params.cell >> octave).max(1);
        let lw = width / cell + 2;
        let lh = height / cell + 2;
        let lattice: Vec<f64> = (0..lw * lh).map(|_| rng.gen::<f64>()).collect();
        for y in 0..height {
            let fy = y as f64 / cell as f64;
            let (y0, ty) = (fy.floor() as usize, fy.fract());
            for x in 0..width {
                let fx = x as f64 / cell as f64;
                let (x0, tx) = (fx.floor() as usize, fx.fract());
                let at = |yy: usize, xx: usize| lattice[yy * lw + xx];
                let top = at(y0, x0) * (1.0 - tx) + at(y0, x0 + 1) * tx;
                let bottom = at(y0 + 1, x0) * (1.0 - tx) + at(y0 + 1, x0 + 1) * tx;
                acc[y * width + x] += amplitude * (top * (1.0 - ty) + bottom * ty);
            }
        }
        amplitude *= params.persistence;
    }
    let lo = acc.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = acc.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (l, h) = (params.low as f64, params.high as f64);
    let data = acc
        .iter()
        .map(|&v| {
            let t = if hi > lo { (v - lo) / (hi - lo) } else { 0.5 };
            ((l + t * (h - l)) as f32).clamp(params.low, params.high)
        })
        .collect();
    Tensor::new(vec![1, height, width], data).expect("positive dimensions")
}

/// A square value-noise background.
pub fn gen_background(size: usize, params: &TextureParams, seed: u64) -> Tensor {
    gen_texture(size, size, params, seed)
}

/// Paints the discrete disk of the given width around `(py, px)`; returns
/// false without painting if that would exceed `budget` foreground pixels.
fn stamp(mask: &mut BinaryMask, py: f64, px: f64, width: usize, budget: usize, count: &mut usize) -> bool {
    let size = mask.height() as isize;
    let r = width as f64 / 2.0;
    let (cy, cx) = (py.round() as isize, px.round() as isize);
    let reach = r.ceil() as isize + 1;
    let mut new = Vec::new();
    for y in cy - reach..=cy + reach {
        for x in cx - reach..=cx + reach {
            if y < 0 || x < 0 || y >= size || x >= size {
                continue;
            }
            let inside = (y == cy && x == cx) || (y as f64 - py).powi(2) + (x as f64 - px).powi(2) <= r * r;
            if inside && !mask.get(y as usize, x as usize) {
                new.push((y as usize, x as usize));
            }
        }
    }
    if *count + new.len() > budget {
        return false;
    }
    *count += new.len();
    for (y, x) in new {
        mask.set(y, x, true);
    }
    true
}

const STEP: f64 = 0.5;
const WIDTH_SEGMENT: usize = 16;

#[allow(clippy::too_many_arguments)]
fn walk<R: Rng>(
    mask: &mut BinaryMask,
    rng: &mut R,
    p: &CrackParams,
    start: (f64, f64),
    heading: f64,
    width: &mut usize,
    budget: usize,
    count: &mut usize,
) -> bool {
    let size = mask.height() as f64;
    let steps = (rng.gen_range(p.min_half_length..=p.max_half_length) * size / STEP) as usize;
    let (mut y, mut x) = start;
    let (mut theta, mut omega) = (heading, 0.0);
    for i in 0..steps {
        if i > 0 && i % WIDTH_SEGMENT == 0 {
            *width = rng.gen_range(p.min_width..=p.max_width);
        }
        omega = p.momentum * omega + rng.gen_range(-p.waviness..=p.waviness);
        theta += omega;
        y += STEP * theta.sin();
        x += STEP * theta.cos();
        if y.round() < 0.0 || x.round() < 0.0 || y.round() >= size || x.round() >= size {
            return true;
        }
        if !stamp(mask, y, x, *width, budget, count) {
            return false;
        }
    }
    true
}

fn render_crack<R: Rng>(mask: &mut BinaryMask, rng: &mut R, p: &CrackParams, budget: usize, count: &mut usize) -> bool {
    let size = mask.height() as f64;
    let start = (rng.gen_range(0.25..0.75) * size, rng.gen_range(0.25..0.75) * size);
    let heading = rng.gen_range(0.0..std::f64::consts::TAU);
    let mut width = rng.gen_range(p.min_width..=p.max_width);
    if !stamp(mask, start.0, start.1, width, budget, count) {
        return false;
    }
    let first_width = width;
    walk(mask, rng, p, start, heading, &mut width, budget, count) && {
        width = first_width;
        walk(
            mask,
            rng,
            p,
            start,
            heading + std::f64::consts::PI,
            &mut width,
            budget,
            count,
        )
    }
}

/// Crack mask of one to three random-walk cracks with momentum. Each crack is
/// 8-connected; the total area never exceeds `max_area_fraction`.
pub fn gen_crack_path(size: usize, params: &CrackParams, seed: u64) -> BinaryMask {
    let mut rng = rng_for(seed, &[]);
    let mut mask = BinaryMask::new(size, size);
    let budget = ((params.max_area_fraction * (size * size) as f64).floor() as usize).max(1);
    let n = rng.gen_range(params.min_cracks..=params.max_cracks);
    let mut count = 0;
    for _ in 0..n {
        if !render_crack(&mut mask, &mut rng, params, budget, &mut count) {
            break;
        }
    }
    mask
}

/// Darkens the masked pixels of `background` by `darkness ± jitter`, per pixel.
pub fn overlay_crack(background: &Tensor, mask: &BinaryMask, darkness: f32, jitter: f32, seed: u64) -> Result<Tensor> {
    let (_, h, w) = background.chw()?;
    if (h, w) != mask.shape() {
        return Err(Error::Shape {
            expected: vec![h, w],
            actual: vec![mask.height(), mask.width()],
        });
    }
    let mut rng = rng_for(seed, &[]);
    let mut out = background.clone();
    for (i, v) in out.data_mut().iter_mut().enumerate() {
        if mask.data()[i % (h * w)] {
            let f = if jitter > 0.0 {
                darkness + rng.gen_range(-jitter..=jitter)
            } else {
                darkness
            };
            *v *= f;
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub id: String,
    pub image: Tensor,
    pub mask: BinaryMask,
    pub label: usize,
    pub source_id: u32,
    pub split: Split,
}

impl LabeledImage for Sample {
    fn image(&self) -> &Tensor {
        &self.image
    }
    fn label(&self) -> usize {
        self.label
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub train: Vec<Sample>,
    pub val: Vec<Sample>,
    pub test: Vec<Sample>,
}

impl Dataset {
    pub fn split(&self, split: Split) -> &[Sample] {
        match split {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }

    pub fn len(&self) -> usize {
        self.train.len() + self.val.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn iter(&self) -> impl Iterator<Item = &Sample> {
        self.train.iter().chain(&self.val).chain(&self.test)
    }

    /// Damage-free training images, the pool that baselines sample from.
    pub fn damage_free_pool(&self) -> Vec<Tensor> {
        self.train
            .iter()
            .filter(|s| s.label == 0)
            .map(|s| s.image.clone())
            .collect()
    }
}

/// Whether sample `i` of `n` is positive; spreads positives evenly through the split.
fn is_positive(i: usize, fraction: f64) -> bool {
    ((i + 1) as f64 * fraction).floor() > (i as f64 * fraction).floor()
}

fn crop(texture: &Tensor, top: usize, left: usize, size: usize) -> Tensor {
    let w = texture.shape()[2];
    Tensor::from_fn(&[1, size, size], |i| {
        texture.data()[(top + i / size) * w + left + i % size]
    })
}

/// Generates all three splits. Bitwise reproducible from the config.
pub fn gen_dataset(cfg: &SynthConfig) -> Result<Dataset> {
    cfg.validate()?;
    let size = cfg.patch_size;
    let side = size * SOURCE_SCALE;
    let mut out = Vec::new();
    for (si, split) in Split::ALL.into_iter().enumerate() {
        let ids = cfg.source_ids(split);
        let textures: Vec<Tensor> = ids
            .clone()
            .map(|id| {
                gen_texture(
                    side,
                    side,
                    &cfg.texture,
                    crate::rng::derive_seed(cfg.seed, &[0, id as u64]),
                )
            })
            .collect();
        let n = cfg.split_size(split);
        let mut samples = Vec::with_capacity(n);
        for i in 0..n {
            let mut rng = rng_for(cfg.seed, &[1, si as u64, i as u64]);
            let k = i % textures.len();
            let top = rng.gen_range(0..=side - size);
            let left = rng.gen_range(0..=side - size);
            let background = crop(&textures[k], top, left, size);
            let positive = is_positive(i, cfg.positive_fraction);
            let (image, mask) = if positive {
                let mask = gen_crack_path(size, &cfg.crack, rng.gen());
                let image = overlay_crack(&background, &mask, cfg.darkness, cfg.darkness_jitter, rng.gen())?;
                (image, mask)
            } else {
                (background, BinaryMask::new(size, size))
            };
            samples.push(Sample {
                id: format!("{}_{i:05}", split.name()),
                image,
                mask,
                label: positive as usize,
                source_id: ids.start + k as u32,
                split,
            });
        }
        out.push(samples);
    }
    let test = out.pop().expect("three splits");
    let val = out.pop().expect("three splits");
    let train = out.pop().expect("three splits");
    Ok(Dataset { train, val, test })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestRow {
    pub path: String,
    pub label: usize,
    pub mask_path: String,
    pub source_id: u32,
    pub split: Split,
}

/// Parses manifest CSV text. Paths are kept as written.
pub fn parse_manifest(bytes: &[u8]) -> Result<Vec<ManifestRow>> {
    let mut reader = csv::Reader::from_reader(bytes);
    let rows = reader
        .deserialize()
        .collect::<std::result::Result<Vec<ManifestRow>, _>>()?;
    for r in &rows {
        if r.path.is_empty() {
            return Err(Error::Format("manifest row without an image path".into()));
        }
    }
    Ok(rows)
}

/// Writes images, masks and `manifest.csv` under `dir`; returns the manifest path.
pub fn write_dataset(dir: &Path, data: &Dataset) -> Result<PathBuf> {
    fs::create_dir_all(dir.join("images"))?;
    fs::create_dir_all(dir.join("masks"))?;
    let mut rows = Vec::with_capacity(data.len());
    for s in data.iter() {
        let path = format!("images/{}.pgm", s.id);
        let mask_path = format!("masks/{}.pgm", s.id);
        formats::write_image(&dir.join(&path), &s.image)?;
        formats::write_mask(&dir.join(&mask_path), &s.mask)?;
        rows.push(ManifestRow {
            path,
            label: s.label,
            mask_path,
            source_id: s.source_id,
            split: s.split,
        });
    }
    let manifest = dir.join("manifest.csv");
    formats::write_csv(&manifest, &rows)?;
    Ok(manifest)
}

/// Loads every sample listed in a manifest; relative paths resolve against its directory.
pub fn read_dataset(manifest: &Path) -> Result<Dataset> {
    let rows = parse_manifest(&fs::read(manifest)?)?;
    let base = manifest.parent().unwrap_or(Path::new("."));
    let mut data = Dataset {
        train: Vec::new(),
        val: Vec::new(),
        test: Vec::new(),
    };
    for row in rows {
        let image = formats::read_image(&base.join(&row.path))?;
        let (_, h, w) = image.chw()?;
        let mask = if row.mask_path.is_empty() {
            BinaryMask::new(h, w)
        } else {
            formats::read_mask(&base.join(&row.mask_path))?
        };
        if mask.shape() != (h, w) {
            return Err(Error::Integrity(format!(
                "mask of {} does not match its image",
                row.path
            )));
        }
        let id = Path::new(&row.path)
            .file_stem()
            .map_or_else(|| row.path.clone(), |s| s.to_string_lossy().into_owned());
        let sample = Sample {
            id,
            image,
            mask,
            label: row.label,
            source_id: row.source_id,
            split: row.split,
        };
        match row.split {
            Split::Train => data.train.push(sample),
            Split::Val => data.val.push(sample),
            Split::Test => data.test.push(sample),
        }
    }
    Ok(data)
}

/// Source ids of each split are pairwise disjoint.
pub fn splits_are_disjoint(data: &Dataset) -> bool {
    let ids = |s: &[Sample]| s.iter().map(|x| x.source_id).collect::<HashSet<_>>();
    let (a, b, c) = (ids(&data.train), ids(&data.val), ids(&data.test));
    a.is_disjoint(&b) && a.is_disjoint(&c) && b.is_disjoint(&c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::severity::connected_components;

    fn small() -> SynthConfig {
        SynthConfig {
            n_train: 20,
            n_val: 10,
            n_test: 10,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn background_range_and_reproducibility() {
        let p = TextureParams::default();
        let a = gen_background(64, &p, 1);
        assert_eq!(a, gen_background(64, &p, 1));
        assert!(a.data().iter().all(|&v| (0.35..=0.9).contains(&v)));
        let b = gen_background(64, &p, 2);
        let differ = a.data().iter().zip(b.data()).filter(|(x, y)| x != y).count();
        assert!(differ > a.len() / 2);
    }

    #[test]
    fn single_cracks_are_connected_and_bounded() {
        let p = CrackParams {
            min_cracks: 1,
            max_cracks: 1,
            ..CrackParams::default()
        };
        for seed in 0..50 {
            let m = gen_crack_path(64, &p, seed);
            assert!(m.any());
            assert_eq!(connected_components(&m).count(), 1, "seed {seed}");
            assert!(m.count() as f64 <= 0.05 * 4096.0);
            assert_eq!(m, gen_crack_path(64, &p, seed));
        }
    }

    #[test]
    fn dataset_labels_and_splits() {
        let cfg = small();
        let d = gen_dataset(&cfg).unwrap();
        assert_eq!(d.len(), 40);
        for s in d.iter() {
            assert_eq!(s.label == 1, s.mask.any());
        }
        assert_eq!(d.train.iter().filter(|s| s.label == 1).count(), 8);
        assert!(splits_are_disjoint(&d));
        assert_eq!(d, gen_dataset(&cfg).unwrap());
    }

    #[test]
    fn cracks_are_darker_than_background() {
        let cfg = small();
        let bg = gen_background(64, &cfg.texture, 5);
        let mask = gen_crack_path(64, &cfg.crack, 6);
        let img = overlay_crack(&bg, &mask, 0.3, 0.1, 7).unwrap();
        for (i, &m) in mask.data().iter().enumerate() {
            if m {
                assert!(img.data()[i] < bg.data()[i]);
            } else {
                assert_eq!(img.data()[i], bg.data()[i]);
            }
        }
    }

    #[test]
    fn manifest_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let d = gen_dataset(&small()).unwrap();
        let manifest = write_dataset(dir.path(), &d).unwrap();
        let back = read_dataset(&manifest).unwrap();
        assert_eq!(back.len(), d.len());
        for (a, b) in back.iter().zip(d.iter()) {
            assert_eq!(a.mask, b.mask);
            assert_eq!(
                (a.label, a.source_id, a.split, &a.id),
                (b.label, b.source_id, b.split, &b.id)
            );
            for (x, y) in a.image.data().iter().zip(b.image.data()) {
                assert!((x - y).abs() <= 0.5 / 255.0 + 1e-6);
            }
        }
        assert!(parse_manifest(b"path,label\nx,1\n").is_err());
    }
}
