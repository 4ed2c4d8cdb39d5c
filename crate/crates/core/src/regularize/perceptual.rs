//! Feature-space distance between a kernel-free rendered patch and the same
//! rect of a pre-deblurred image.
//!
//! The default extractor is a fixed filter bank: low-passed color, a
//! difference of Gaussians and four oriented edge filters on luminance, at
//! full and half resolution, followed by a seeded random 3×3 convolution to
//! 16 channels with ReLU. Borders use replicate padding.

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::Real;
use crate::error::{Error, Result};
use crate::geometry::Vec3;

pub const RANDOM_CHANNELS: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FeatureGroup {
    Color,
    Dog,
    Edges,
    Random,
}

/// Channel-major `channels × height × width` map.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap<S> {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<S>,
}

impl<S: Copy> FeatureMap<S> {
    pub fn channel(&self, c: usize) -> &[S] {
        let n = self.height * self.width;
        &self.data[c * n..(c + 1) * n]
    }
}

/// Features tagged by group and scale (0 = full, 1 = half resolution;
/// the random layer uses scale 0).
#[derive(Debug, Clone)]
pub struct Features<S> {
    pub maps: Vec<(FeatureGroup, usize, FeatureMap<S>)>,
}

impl<S: Copy> Features<S> {
    pub fn get(&self, group: FeatureGroup, scale: usize) -> Option<&FeatureMap<S>> {
        self.maps
            .iter()
            .find(|(g, s, _)| *g == group && *s == scale)
            .map(|(_, _, m)| m)
    }
}

fn gaussian_5x5(sigma: f64) -> [f64; 25] {
    let mut k = [0.0; 25];
    for r in 0..5 {
        for c in 0..5 {
            let (y, x) = (r as f64 - 2.0, c as f64 - 2.0);
            k[r * 5 + c] = (-(x * x + y * y) / (2.0 * sigma * sigma)).exp();
        }
    }
    let s: f64 = k.iter().sum();
    k.map(|v| v / s)
}

fn dog_kernel() -> [f64; 25] {
    let (a, b) = (gaussian_5x5(0.8), gaussian_5x5(1.6));
    std::array::from_fn(|i| a[i] - b[i])
}

const LOWPASS: [f64; 9] = [
    1.0 / 16.0,
    2.0 / 16.0,
    1.0 / 16.0,
    2.0 / 16.0,
    4.0 / 16.0,
    2.0 / 16.0,
    1.0 / 16.0,
    2.0 / 16.0,
    1.0 / 16.0,
];

/// Sobel x, Sobel y and the two diagonal Sobel variants. All zero-sum.
const EDGES: [[f64; 9]; 4] = [
    [-1.0, 0.0, 1.0, -2.0, 0.0, 2.0, -1.0, 0.0, 1.0],
    [-1.0, -2.0, -1.0, 0.0, 0.0, 0.0, 1.0, 2.0, 1.0],
    [0.0, 1.0, 2.0, -1.0, 0.0, 1.0, -2.0, -1.0, 0.0],
    [2.0, 1.0, 0.0, 1.0, 0.0, -1.0, 0.0, -1.0, -2.0],
];

/// Single-channel convolution with an odd square kernel, replicate
/// padding and the given stride.
fn conv<S: Real>(img: &[S], width: usize, height: usize, kernel: &[f64], stride: usize) -> (Vec<S>, usize, usize) {
    let k = (kernel.len() as f64).sqrt() as usize;
    let half = (k / 2) as isize;
    let (ow, oh) = (width.div_ceil(stride), height.div_ceil(stride));
    let mut out = Vec::with_capacity(ow * oh);
    let mut taps = Vec::with_capacity(k * k);
    for oy in 0..oh {
        for ox in 0..ow {
            taps.clear();
            let (cy, cx) = ((oy * stride) as isize, (ox * stride) as isize);
            for dy in -half..=half {
                for dx in -half..=half {
                    let y = (cy + dy).clamp(0, height as isize - 1) as usize;
                    let x = (cx + dx).clamp(0, width as isize - 1) as usize;
                    taps.push(img[y * width + x]);
                }
            }
            out.push(S::lincomb(kernel, &taps));
        }
    }
    (out, ow, oh)
}

fn avg_pool2<S: Real>(img: &[S], width: usize, height: usize) -> (Vec<S>, usize, usize) {
    let (ow, oh) = ((width / 2).max(1), (height / 2).max(1));
    let mut out = Vec::with_capacity(ow * oh);
    for y in 0..oh {
        for x in 0..ow {
            let taps: Vec<S> = [(0, 0), (0, 1), (1, 0), (1, 1)]
                .iter()
                .map(|&(dy, dx)| {
                    let yy = (2 * y + dy).min(height - 1);
                    let xx = (2 * x + dx).min(width - 1);
                    img[yy * width + xx]
                })
                .collect();
            out.push(S::lincomb(&[0.25; 4], &taps));
        }
    }
    (out, ow, oh)
}

/// Deterministic filter bank with a seeded random projection layer.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterBank {
    dog: [f64; 25],
    /// `RANDOM_CHANNELS × in_channels × 9` weights.
    random: Vec<f64>,
    in_channels: usize,
}

const BANK_CHANNELS: usize = 3 + 1 + EDGES.len();

impl FilterBank {
    pub fn new(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let fan_in = BANK_CHANNELS * 9;
        let bound = (6.0 / fan_in as f64).sqrt();
        let random = (0..RANDOM_CHANNELS * fan_in)
            .map(|_| rng.random_range(-bound..=bound))
            .collect();
        FilterBank {
            dog: dog_kernel(),
            random,
            in_channels: BANK_CHANNELS,
        }
    }

    /// Stride of the random layer: 2 while the output stays at least 4×4.
    pub fn random_stride(width: usize, height: usize) -> usize {
        if width.min(height) >= 8 {
            2
        } else {
            1
        }
    }

    fn bank<S: Real>(&self, planes: &[Vec<S>; 3], width: usize, height: usize) -> [FeatureMap<S>; 3] {
        let mut color = Vec::with_capacity(3 * width * height);
        for p in planes {
            color.extend(conv(p, width, height, &LOWPASS, 1).0);
        }
        let third = [1.0 / 3.0; 3];
        let luma: Vec<S> = (0..width * height)
            .map(|i| S::lincomb(&third, &[planes[0][i], planes[1][i], planes[2][i]]))
            .collect();
        let dog = conv(&luma, width, height, &self.dog, 1).0;
        let mut edges = Vec::with_capacity(EDGES.len() * width * height);
        for e in &EDGES {
            edges.extend(conv(&luma, width, height, e, 1).0);
        }
        let map = |channels, data| FeatureMap {
            channels,
            height,
            width,
            data,
        };
        [map(3, color), map(1, dog), map(EDGES.len(), edges)]
    }

    pub fn extract<S: Real>(&self, rgb: &[Vec3<S>], width: usize, height: usize) -> Features<S> {
        assert_eq!(rgb.len(), width * height);
        let planes: [Vec<S>; 3] = std::array::from_fn(|k| rgb.iter().map(|c| c[k]).collect());
        let [color0, dog0, edges0] = self.bank(&planes, width, height);

        let pooled: Vec<(Vec<S>, usize, usize)> = planes.iter().map(|p| avg_pool2(p, width, height)).collect();
        let (w1, h1) = (pooled[0].1, pooled[0].2);
        let planes1: [Vec<S>; 3] = std::array::from_fn(|k| pooled[k].0.clone());
        let [color1, dog1, edges1] = self.bank(&planes1, w1, h1);

        let stride = Self::random_stride(width, height);
        let inputs: Vec<&[S]> = (0..3)
            .map(|c| color0.channel(c))
            .chain(std::iter::once(dog0.channel(0)))
            .chain((0..EDGES.len()).map(|c| edges0.channel(c)))
            .collect();
        let (ow, oh) = (width.div_ceil(stride), height.div_ceil(stride));
        let mut random = Vec::with_capacity(RANDOM_CHANNELS * ow * oh);
        for o in 0..RANDOM_CHANNELS {
            let mut acc: Option<Vec<S>> = None;
            for (i, plane) in inputs.iter().enumerate() {
                let base = (o * self.in_channels + i) * 9;
                let (resp, _, _) = conv(plane, width, height, &self.random[base..base + 9], stride);
                acc = Some(match acc {
                    None => resp,
                    Some(a) => a.into_iter().zip(resp).map(|(x, y)| x + y).collect(),
                });
            }
            random.extend(acc.unwrap_or_default().into_iter().map(|v| v.relu()));
        }
        let random = FeatureMap {
            channels: RANDOM_CHANNELS,
            height: oh,
            width: ow,
            data: random,
        };
        Features {
            maps: vec![
                (FeatureGroup::Color, 0, color0),
                (FeatureGroup::Dog, 0, dog0),
                (FeatureGroup::Edges, 0, edges0),
                (FeatureGroup::Color, 1, color1),
                (FeatureGroup::Dog, 1, dog1),
                (FeatureGroup::Edges, 1, edges1),
                (FeatureGroup::Random, 0, random),
            ],
        }
    }
}

/// Summed squared difference between two maps of equal shape.
pub fn map_distance<S: Real>(a: &FeatureMap<S>, b: &FeatureMap<f64>) -> Result<S> {
    if (a.channels, a.height, a.width) != (b.channels, b.height, b.width) {
        return Err(Error::Invariant(format!(
            "feature shape mismatch: {}×{}×{} vs {}×{}×{}",
            a.channels, a.height, a.width, b.channels, b.height, b.width
        )));
    }
    let diffs: Vec<S> = a.data.iter().zip(&b.data).map(|(&x, &y)| (x - y).square()).collect();
    Ok(S::sum(&diffs))
}

/// Per-group squared feature distance, in extraction order.
pub fn group_distances<S: Real>(a: &Features<S>, b: &Features<f64>) -> Result<Vec<(FeatureGroup, usize, S)>> {
    a.maps
        .iter()
        .zip(&b.maps)
        .map(|((g, s, ma), (_, _, mb))| Ok((*g, *s, map_distance(ma, mb)?)))
        .collect()
}

/// Where target features come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ExtractorKind {
    #[default]
    FilterBank,
    /// Precomputed target maps for the random layer, one file per
    /// `(view, patch cell)`.
    ExternalFeatures { dir: PathBuf },
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
struct Sidecar {
    channels: usize,
    height: usize,
    width: usize,
}

fn external_stem(dir: &Path, view: usize, cell_row: usize, cell_col: usize) -> PathBuf {
    dir.join(format!("view{view}_r{cell_row}_c{cell_col}"))
}

/// Read one external map: raw little-endian `f32` plus a JSON sidecar.
pub fn load_external(dir: &Path, view: usize, cell_row: usize, cell_col: usize) -> Result<FeatureMap<f64>> {
    let stem = external_stem(dir, view, cell_row, cell_col);
    let side_path = stem.with_extension("json");
    let bin_path = stem.with_extension("f32");
    let side: Sidecar = serde_json::from_str(&fs::read_to_string(&side_path).map_err(|e| Error::io(&side_path, e))?)
        .map_err(|e| Error::io(&side_path, e))?;
    let bytes = fs::read(&bin_path).map_err(|e| Error::io(&bin_path, e))?;
    let n = side.channels * side.height * side.width;
    if bytes.len() != 4 * n {
        return Err(Error::Manifest(format!(
            "{} holds {} bytes, sidecar expects {}",
            bin_path.display(),
            bytes.len(),
            4 * n
        )));
    }
    let data = bytes
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
        .collect();
    Ok(FeatureMap {
        channels: side.channels,
        height: side.height,
        width: side.width,
        data,
    })
}

pub fn save_external(dir: &Path, view: usize, cell_row: usize, cell_col: usize, map: &FeatureMap<f64>) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let stem = external_stem(dir, view, cell_row, cell_col);
    let side = Sidecar {
        channels: map.channels,
        height: map.height,
        width: map.width,
    };
    let side_path = stem.with_extension("json");
    fs::write(&side_path, serde_json::to_string(&side).map_err(|e| Error::io(&side_path, e))?)
        .map_err(|e| Error::io(&side_path, e))?;
    let bytes: Vec<u8> = map.data.iter().flat_map(|&v| (v as f32).to_le_bytes()).collect();
    let bin_path = stem.with_extension("f32");
    fs::write(&bin_path, bytes).map_err(|e| Error::io(&bin_path, e))
}

/// Feature extractor shared by the rendered and the target patch.
#[derive(Debug, Clone)]
pub struct FeatureExtractor {
    pub bank: FilterBank,
    pub kind: ExtractorKind,
}

impl FeatureExtractor {
    pub fn new(kind: ExtractorKind, seed: u64) -> Self {
        FeatureExtractor {
            bank: FilterBank::new(seed),
            kind,
        }
    }

    /// `‖ℰ(rendered) − ℰ(target)‖²`. With external features the target
    /// random-layer map is read from disk for the cell at `cell`.
    pub fn loss<S: Real>(
        &self,
        rendered: &[Vec3<S>],
        target: &[Vec3<f64>],
        width: usize,
        height: usize,
        view: usize,
        cell: (usize, usize),
    ) -> Result<S> {
        let a = self.bank.extract(rendered, width, height);
        match &self.kind {
            ExtractorKind::FilterBank => {
                let b = self.bank.extract(target, width, height);
                let parts: Vec<S> = group_distances(&a, &b)?.into_iter().map(|(_, _, d)| d).collect();
                Ok(S::sum(&parts))
            }
            ExtractorKind::ExternalFeatures { dir } => {
                let b = load_external(dir, view, cell.0, cell.1)?;
                let mine = a.get(FeatureGroup::Random, 0).expect("random layer present");
                map_distance(mine, &b)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn patch(k: usize, seed: u64) -> Vec<Vec3<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..k * k).map(|_| std::array::from_fn(|_| rng.random::<f64>())).collect()
    }

    #[test]
    fn identical_patches_have_zero_loss() {
        let ex = FeatureExtractor::new(ExtractorKind::FilterBank, 3);
        let p = patch(8, 1);
        assert_eq!(ex.loss(&p, &p, 8, 8, 0, (0, 0)).unwrap(), 0.0);
    }

    #[test]
    fn random_layer_keeps_four_by_four() {
        let bank = FilterBank::new(0);
        for k in [4, 8, 16, 64] {
            let f = bank.extract(&patch(k, 2), k, k);
            let m = f.get(FeatureGroup::Random, 0).unwrap();
            assert!(m.width >= 4 && m.height >= 4);
            assert_eq!(m.channels, RANDOM_CHANNELS);
        }
    }

    #[test]
    fn kernels_are_zero_mean() {
        for e in &EDGES {
            assert_eq!(e.iter().sum::<f64>(), 0.0);
        }
        assert!(dog_kernel().iter().sum::<f64>().abs() < 1e-15);
        assert!((LOWPASS.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn external_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let map = FeatureMap {
            channels: 2,
            height: 1,
            width: 2,
            data: vec![0.5, -1.25, 3.0, 0.0],
        };
        save_external(dir.path(), 4, 1, 2, &map).unwrap();
        assert_eq!(load_external(dir.path(), 4, 1, 2).unwrap(), map);
        assert!(load_external(dir.path(), 4, 0, 0).is_err());
    }
}
