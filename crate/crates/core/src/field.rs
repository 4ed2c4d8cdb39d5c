//! Positional encoding and the radiance-field MLP `(x, d) -> (c, σ)`.
//!
//! Parameters live in one flat slice owned by the caller; the structs here
//! only describe the layout. That keeps a single code path for evaluation
//! (`&[f64]`) and training (`&[Var]` registered as tape leaves).

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::Real;
use crate::geometry::Vec3;

/// `γ(x) = [x, sin(2⁰πx), cos(2⁰πx), …, sin(2^{m-1}πx), cos(2^{m-1}πx)]`,
/// each sin/cos block covering all input components.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PositionalEncoding {
    pub max_freq: usize,
    pub include_input: bool,
}

impl PositionalEncoding {
    pub fn new(max_freq: usize) -> Self {
        PositionalEncoding {
            max_freq,
            include_input: true,
        }
    }

    pub fn output_dim(&self, input_dim: usize) -> usize {
        let base = if self.include_input { input_dim } else { 0 };
        base + 2 * input_dim * self.max_freq
    }

    pub fn encode<S: Real>(&self, x: &[S]) -> Vec<S> {
        let mut out = Vec::with_capacity(self.output_dim(x.len()));
        if self.include_input {
            out.extend_from_slice(x);
        }
        let mut freq = std::f64::consts::PI;
        for _ in 0..self.max_freq {
            let args: Vec<S> = x.iter().map(|&v| v * freq).collect();
            out.extend(args.iter().map(|a| a.sin()));
            out.extend(args.iter().map(|a| a.cos()));
            freq *= 2.0;
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Relu,
}

/// Fully connected layer stored as row-major `W (out × in)` followed by `b`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dense {
    pub offset: usize,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Dense {
    pub fn len(&self) -> usize {
        self.in_dim * self.out_dim + self.out_dim
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn end(&self) -> usize {
        self.offset + self.len()
    }

    pub fn weights(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.in_dim * self.out_dim
    }

    pub fn bias(&self) -> std::ops::Range<usize> {
        self.offset + self.in_dim * self.out_dim..self.end()
    }

    pub fn forward<S: Real>(&self, params: &[S], x: &[S], act: Activation) -> Vec<S> {
        debug_assert_eq!(x.len(), self.in_dim);
        let x = S::gather(x);
        let w = &params[self.weights()];
        let b = &params[self.bias()];
        let pre: Vec<S> = (0..self.out_dim)
            .map(|j| S::affine(Some(b[j]), &w[j * self.in_dim..(j + 1) * self.in_dim], &x))
            .collect();
        match act {
            Activation::Identity => pre,
            Activation::Relu => pre.into_iter().map(|v| v.relu()).collect(),
        }
    }

    /// He-uniform weights scaled by `gain`, zero bias.
    pub fn init<R: Rng + ?Sized>(&self, params: &mut [f64], gain: f64, rng: &mut R) {
        let bound = gain * (6.0 / self.in_dim.max(1) as f64).sqrt();
        for w in &mut params[self.weights()] {
            *w = rng.random_range(-bound..=bound);
        }
        for b in &mut params[self.bias()] {
            *b = 0.0;
        }
    }
}

/// Plain MLP: ReLU between layers, identity on the last.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mlp {
    pub layers: Vec<Dense>,
}

impl Mlp {
    /// Layers with sizes `dims[0] -> dims[1] -> … -> dims[k]`, packed from `offset`.
    pub fn new(offset: usize, dims: &[usize]) -> Self {
        let mut off = offset;
        let layers = dims
            .windows(2)
            .map(|d| {
                let l = Dense {
                    offset: off,
                    in_dim: d[0],
                    out_dim: d[1],
                };
                off = l.end();
                l
            })
            .collect();
        Mlp { layers }
    }

    pub fn offset(&self) -> usize {
        self.layers.first().map_or(0, |l| l.offset)
    }

    pub fn end(&self) -> usize {
        self.layers.last().map_or(0, |l| l.end())
    }

    pub fn len(&self) -> usize {
        self.end() - self.offset()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn last(&self) -> &Dense {
        self.layers.last().expect("empty MLP")
    }

    pub fn forward<S: Real>(&self, params: &[S], x: &[S]) -> Vec<S> {
        let n = self.layers.len();
        let mut h = x.to_vec();
        for (i, l) in self.layers.iter().enumerate() {
            let act = if i + 1 == n {
                Activation::Identity
            } else {
                Activation::Relu
            };
            h = l.forward(params, &h, act);
        }
        h
    }

    /// He init on hidden layers; the last layer is zeroed when `zero_last`.
    pub fn init<R: Rng + ?Sized>(&self, params: &mut [f64], zero_last: bool, rng: &mut R) {
        let n = self.layers.len();
        for (i, l) in self.layers.iter().enumerate() {
            if i + 1 == n && zero_last {
                params[l.offset..l.end()].iter_mut().for_each(|p| *p = 0.0);
            } else {
                l.init(params, 1.0, rng);
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldConfig {
    pub pos_freqs: usize,
    pub dir_freqs: usize,
    pub depth: usize,
    pub width: usize,
    pub color_width: usize,
}

impl Default for FieldConfig {
    fn default() -> Self {
        FieldConfig {
            pos_freqs: 10,
            dir_freqs: 4,
            depth: 4,
            width: 64,
            color_width: 32,
        }
    }
}

/// One radiance field (coarse or fine).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RadianceField {
    pub config: FieldConfig,
    pub pos_enc: PositionalEncoding,
    pub dir_enc: PositionalEncoding,
    pub trunk: Vec<Dense>,
    pub density: Dense,
    pub feature: Dense,
    pub color_hidden: Dense,
    pub color_out: Dense,
}

#[derive(Debug, Clone, Copy)]
pub struct FieldSample<S> {
    pub rgb: Vec3<S>,
    pub sigma: S,
}

impl RadianceField {
    pub fn new(config: FieldConfig, offset: usize) -> Self {
        assert!(config.depth >= 1, "field needs at least one trunk layer");
        let pos_enc = PositionalEncoding::new(config.pos_freqs);
        let dir_enc = PositionalEncoding::new(config.dir_freqs);
        let mut off = offset;
        let mut next = |in_dim, out_dim| {
            let l = Dense {
                offset: off,
                in_dim,
                out_dim,
            };
            off = l.end();
            l
        };
        let w = config.width;
        let trunk: Vec<Dense> = (0..config.depth)
            .map(|i| next(if i == 0 { pos_enc.output_dim(3) } else { w }, w))
            .collect();
        let density = next(w, 1);
        let feature = next(w, w);
        let color_hidden = next(w + dir_enc.output_dim(3), config.color_width);
        let color_out = next(config.color_width, 3);
        RadianceField {
            config,
            pos_enc,
            dir_enc,
            trunk,
            density,
            feature,
            color_hidden,
            color_out,
        }
    }

    pub fn offset(&self) -> usize {
        self.trunk[0].offset
    }

    pub fn end(&self) -> usize {
        self.color_out.end()
    }

    pub fn param_count(&self) -> usize {
        self.end() - self.offset()
    }

    pub fn init<R: Rng + ?Sized>(&self, params: &mut [f64], rng: &mut R) {
        for l in &self.trunk {
            l.init(params, 1.0, rng);
        }
        self.density.init(params, 1.0, rng);
        self.feature.init(params, 1.0, rng);
        self.color_hidden.init(params, 1.0, rng);
        self.color_out.init(params, 1.0, rng);
    }

    pub fn encode_direction<S: Real>(&self, d: Vec3<S>) -> Vec<S> {
        self.dir_enc.encode(&d)
    }

    /// Evaluate at position `x` with an already encoded view direction.
    pub fn forward_encoded<S: Real>(&self, params: &[S], x: Vec3<S>, dir_code: &[S]) -> FieldSample<S> {
        let mut h = self.pos_enc.encode(&x);
        for l in &self.trunk {
            h = l.forward(params, &h, Activation::Relu);
        }
        let sigma = self.density.forward(params, &h, Activation::Identity)[0].softplus();
        let mut feat = self.feature.forward(params, &h, Activation::Identity);
        feat.extend_from_slice(dir_code);
        let hidden = self.color_hidden.forward(params, &feat, Activation::Relu);
        let raw = self.color_out.forward(params, &hidden, Activation::Identity);
        FieldSample {
            rgb: [raw[0].sigmoid(), raw[1].sigmoid(), raw[2].sigmoid()],
            sigma,
        }
    }

    pub fn forward<S: Real>(&self, params: &[S], x: Vec3<S>, d: Vec3<S>) -> FieldSample<S> {
        let code = self.encode_direction(d);
        self.forward_encoded(params, x, &code)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Tape;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn encoding_at_origin() {
        let e = PositionalEncoding::new(10);
        let out = e.encode(&[0.0, 0.0, 0.0]);
        assert_eq!(out.len(), 63);
        assert!(out[..3].iter().all(|&v| v == 0.0));
        for f in 0..10 {
            let base = 3 + 6 * f;
            assert!(out[base..base + 3].iter().all(|&v| v == 0.0));
            assert!(out[base + 3..base + 6].iter().all(|&v| v == 1.0));
        }
    }

    #[test]
    fn encoding_without_frequencies_is_identity() {
        let x = [0.25, -1.5, 3.0];
        assert_eq!(PositionalEncoding::new(0).encode(&x), x.to_vec());
    }

    #[test]
    fn encoding_hand_values() {
        let out = PositionalEncoding::new(2).encode(&[0.5]);
        let want = [0.5, 1.0, 0.0, 0.0, -1.0];
        for (a, b) in out.iter().zip(want) {
            assert!((a - b).abs() < 1e-12, "{out:?}");
        }
    }

    fn small() -> (RadianceField, Vec<f64>) {
        let f = RadianceField::new(
            FieldConfig {
                pos_freqs: 3,
                dir_freqs: 2,
                depth: 2,
                width: 8,
                color_width: 6,
            },
            0,
        );
        let mut p = vec![0.0; f.param_count()];
        f.init(&mut p, &mut ChaCha8Rng::seed_from_u64(5));
        (f, p)
    }

    #[test]
    fn zero_density_head_gives_softplus_zero() {
        let (f, mut p) = small();
        p[f.density.offset..f.density.end()].iter_mut().for_each(|v| *v = 0.0);
        for x in [[0.1, 0.2, 0.3], [-1.0, 0.5, 2.0]] {
            let s = f.forward(&p, x, [0.0, 0.0, -1.0]);
            assert!((s.sigma - 2f64.ln()).abs() < 1e-15);
        }
    }

    #[test]
    fn density_ignores_direction() {
        let (f, p) = small();
        let x = [0.3, -0.1, 0.7];
        let a = f.forward(&p, x, [0.0, 0.0, -1.0]);
        let b = f.forward(&p, x, [0.6, 0.0, -0.8]);
        assert_eq!(a.sigma, b.sigma);
        assert_ne!(a.rgb, b.rgb);
    }

    #[test]
    fn taped_forward_matches_plain_forward() {
        let (f, p) = small();
        let tape = Tape::new();
        let vars = tape.leaves(&p);
        let x = [0.3, -0.1, 0.7];
        let d = [0.0, 0.6, -0.8];
        let plain = f.forward(&p, x, d);
        let taped = f.forward(&vars, x.map(|v| tape.constant(v)), d.map(|v| tape.constant(v)));
        assert_eq!(taped.sigma.value(), plain.sigma);
        for k in 0..3 {
            assert_eq!(taped.rgb[k].value(), plain.rgb[k]);
        }
    }

    #[test]
    fn output_ranges() {
        let (f, p) = small();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..10_000 {
            let x: [f64; 3] = std::array::from_fn(|_| rng.random_range(-2.0..2.0));
            let s = f.forward(&p, x, [0.0, 0.0, -1.0]);
            assert!(s.sigma >= 0.0);
            assert!(s.rgb.iter().all(|c| (0.0..=1.0).contains(c)));
        }
    }
}
