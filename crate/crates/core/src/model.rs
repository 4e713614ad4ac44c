//! The super-resolution network.
//!
//! ```text
//! LR (N,1,h,w) ─ stem 3×3 ─ [dense block × B] ─ bottleneck 1×1 ─ deconv × d ─ recon 3×3 ─ (+) ─ SR
//!      └──────────────────────── bicubic ×r ─────────────────────────────────────────────┘
//! ```
//!
//! The network branch sees the input shifted by [`INPUT_MEAN`] so its
//! features start zero-centred; the bicubic branch sees it unshifted.
//!
//! Each dense block stacks denselayers `LGC 1×1 → LeakyReLU → grouped 3×3 →
//! LeakyReLU` whose `k` output channels are concatenated onto their input.
//! There is no normalization and no pooling: every feature map before the
//! deconvolution stack has the input's spatial size.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autograd::{Graph, Parameter, Var};
use crate::data::bicubic_resize_tensor;
use crate::error::{Error, Result};
use crate::lgc::{CondensingConv, ConvertedLgc};
use crate::ops::ConvSpec;
use crate::scalar::Scalar;
use crate::tensor::{Shape, Tensor};

#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub scale: usize,
    pub num_blocks: usize,
    pub layers_per_block: usize,
    pub growth: usize,
    pub groups: usize,
    pub condense_factor: usize,
    pub stem_channels: usize,
    pub bottleneck_channels: usize,
    pub deconv_channels: usize,
    /// Width of each 1×1 learned group conv, as a multiple of `growth`.
    pub lgc_expansion: usize,
    pub leaky_slope: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            scale: 2,
            num_blocks: 4,
            layers_per_block: 7,
            growth: 20,
            groups: 4,
            condense_factor: 4,
            stem_channels: 16,
            bottleneck_channels: 128,
            deconv_channels: 128,
            lgc_expansion: 4,
            leaky_slope: 0.1,
        }
    }
}

/// Geometry of one upsampling layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DeconvGeometry {
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
}

impl ModelConfig {
    /// Keys accepted by [`ModelConfig::set`], in serialization order.
    pub const KEYS: [&'static str; 11] = [
        "scale",
        "num_blocks",
        "layers_per_block",
        "growth",
        "groups",
        "condense_factor",
        "stem_channels",
        "bottleneck_channels",
        "deconv_channels",
        "lgc_expansion",
        "leaky_slope",
    ];

    /// Single dense block of two layers with a narrow reconstruction
    /// network, for fixture-scale runs.
    pub fn toy() -> Self {
        ModelConfig {
            num_blocks: 1,
            layers_per_block: 2,
            bottleneck_channels: 32,
            deconv_channels: 32,
            ..ModelConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !matches!(self.scale, 2..=4) {
            return Err(Error::config(format!("scale must be 2, 3 or 4, got {}", self.scale)));
        }
        let positive = [
            ("num_blocks", self.num_blocks),
            ("layers_per_block", self.layers_per_block),
            ("growth", self.growth),
            ("groups", self.groups),
            ("condense_factor", self.condense_factor),
            ("stem_channels", self.stem_channels),
            ("bottleneck_channels", self.bottleneck_channels),
            ("deconv_channels", self.deconv_channels),
            ("lgc_expansion", self.lgc_expansion),
        ];
        if let Some((k, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::config(format!("{k} must be positive")));
        }
        if self.growth % self.groups != 0 {
            return Err(Error::config(format!("growth {} not divisible by groups {}", self.growth, self.groups)));
        }
        if !(self.leaky_slope.is_finite() && self.leaky_slope >= 0.0) {
            return Err(Error::config(format!("leaky_slope must be finite and non-negative, got {}", self.leaky_slope)));
        }
        Ok(())
    }

    pub fn total_layers(&self) -> usize {
        self.num_blocks * self.layers_per_block
    }

    /// Channels entering layer `layer` of block `block`.
    pub fn channels_into(&self, block: usize, layer: usize) -> usize {
        self.stem_channels + (self.layers_per_block * block + layer) * self.growth
    }

    /// Channels leaving the last dense block.
    pub fn feature_channels(&self) -> usize {
        self.stem_channels + self.total_layers() * self.growth
    }

    pub fn lgc_width(&self) -> usize {
        self.lgc_expansion * self.growth
    }

    /// One stride-2 layer per factor of two; a single stride-3 layer for ×3.
    pub fn deconv_plan(&self) -> Vec<DeconvGeometry> {
        match self.scale {
            3 => vec![DeconvGeometry { kernel: 5, stride: 3, padding: 1 }],
            r => {
                let n = r.trailing_zeros() as usize;
                vec![DeconvGeometry { kernel: 4, stride: 2, padding: 1 }; n]
            }
        }
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let int = || value.trim().parse::<usize>().map_err(|e| Error::config(format!("{key}: {e}")));
        match key {
            "scale" => self.scale = int()?,
            "num_blocks" => self.num_blocks = int()?,
            "layers_per_block" => self.layers_per_block = int()?,
            "growth" => self.growth = int()?,
            "groups" => self.groups = int()?,
            "condense_factor" => self.condense_factor = int()?,
            "stem_channels" => self.stem_channels = int()?,
            "bottleneck_channels" => self.bottleneck_channels = int()?,
            "deconv_channels" => self.deconv_channels = int()?,
            "lgc_expansion" => self.lgc_expansion = int()?,
            "leaky_slope" => {
                self.leaky_slope = value.trim().parse().map_err(|e| Error::config(format!("{key}: {e}")))?
            }
            _ => return Err(Error::config(format!("unknown model key `{key}`"))),
        }
        Ok(())
    }

    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let v = [
            self.scale,
            self.num_blocks,
            self.layers_per_block,
            self.growth,
            self.groups,
            self.condense_factor,
            self.stem_channels,
            self.bottleneck_channels,
            self.deconv_channels,
            self.lgc_expansion,
        ];
        let mut out: Vec<(&'static str, String)> = Self::KEYS[..10].iter().zip(v).map(|(k, v)| (*k, v.to_string())).collect();
        out.push(("leaky_slope", format!("{:?}", self.leaky_slope)));
        out
    }

    /// `key = value` lines.
    pub fn to_text(&self) -> String {
        self.entries().into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = ModelConfig::default();
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
            let (k, v) = line.split_once('=').ok_or_else(|| Error::config(format!("expected key = value, got `{line}`")))?;
            cfg.set(k.trim(), v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// A convolution (or transposed convolution) with bias.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvLayer<T> {
    pub weight: Parameter<T>,
    pub bias: Parameter<T>,
    pub spec: ConvSpec,
    pub transposed: bool,
}

impl<T: Scalar> ConvLayer<T> {
    fn new(name: &str, weight: Tensor<T>, spec: ConvSpec, transposed: bool) -> Self {
        let out = if transposed { weight.shape().c * spec.groups } else { weight.shape().n };
        ConvLayer {
            weight: Parameter::new(format!("{name}.weight"), weight),
            bias: Parameter::new(format!("{name}.bias"), Tensor::zeros(Shape::new(1, out, 1, 1))),
            spec,
            transposed,
        }
    }

    pub fn out_channels(&self) -> usize {
        self.bias.value.numel()
    }

    pub fn forward(&self, g: &mut Graph<T>, x: Var) -> Result<Var> {
        let w = g.param(&self.weight);
        let b = g.param(&self.bias);
        if self.transposed {
            g.conv_transpose2d(x, w, Some(b), self.spec)
        } else {
            g.conv2d(x, w, Some(b), self.spec)
        }
    }

    fn params(&self) -> [&Parameter<T>; 2] {
        [&self.weight, &self.bias]
    }

    fn params_mut(&mut self) -> [&mut Parameter<T>; 2] {
        [&mut self.weight, &mut self.bias]
    }
}

/// The 1×1 stage of a denselayer: trainable masked form or its converted
/// inference form.
#[derive(Clone, Debug, PartialEq)]
pub enum Pointwise<T> {
    Learned(CondensingConv<T>),
    Converted(ConvertedLgc<T>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct DenseLayer<T> {
    pub lgc: Pointwise<T>,
    pub gconv: ConvLayer<T>,
}

impl<T: Scalar> DenseLayer<T> {
    pub fn forward(&self, g: &mut Graph<T>, x: Var, slope: T) -> Result<Var> {
        let h = match &self.lgc {
            Pointwise::Learned(l) => l.forward(g, x)?,
            Pointwise::Converted(c) => c.forward(g, x)?,
        };
        let h = g.leaky_relu(h, slope);
        let h = self.gconv.forward(g, h)?;
        Ok(g.leaky_relu(h, slope))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Model<T> {
    config: ModelConfig,
    pub stem: ConvLayer<T>,
    pub blocks: Vec<Vec<DenseLayer<T>>>,
    pub bottleneck: ConvLayer<T>,
    pub deconvs: Vec<ConvLayer<T>>,
    pub recon: ConvLayer<T>,
}

/// Subtracted from the `[0, 1]`-scaled input before the stem.
pub const INPUT_MEAN: f64 = 0.5;

/// Kaiming-normal standard deviation for a LeakyReLU of slope `a`.
fn kaiming_std(fan_in: usize, slope: f64) -> f64 {
    (2.0 / (1.0 + slope * slope) / fan_in as f64).sqrt()
}

impl<T: Scalar> Model<T> {
    /// Builds the network with weights drawn from a generator seeded by `seed`.
    pub fn build(config: &ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = config.leaky_slope;
        let k = config.growth;
        let stem_w = Tensor::randn(Shape::new(config.stem_channels, 1, 3, 3), kaiming_std(9, a), &mut rng);
        let stem = ConvLayer::new("stem", stem_w, ConvSpec::new(1, 1, 1), false);
        let gin = config.lgc_width() / config.groups;
        let mut built = Vec::with_capacity(config.num_blocks);
        let mut width = config.stem_channels;
        for b in 0..config.num_blocks {
            let mut layers = Vec::with_capacity(config.layers_per_block);
            for l in 0..config.layers_per_block {
                if width != config.channels_into(b, l) {
                    return Err(Error::contract(format!("channel bookkeeping at block {b} layer {l}: {width}")));
                }
                let name = format!("block{b}.layer{l}");
                let lw = Tensor::randn(Shape::new(config.lgc_width(), width, 1, 1), kaiming_std(width, a), &mut rng);
                let lgc = CondensingConv::new(format!("{name}.lgc.weight"), lw, config.groups, config.condense_factor)?;
                let gw = Tensor::randn(Shape::new(k, gin, 3, 3), kaiming_std(gin * 9, a), &mut rng);
                let gconv = ConvLayer::new(&format!("{name}.gconv"), gw, ConvSpec::new(1, 1, config.groups), false);
                layers.push(DenseLayer { lgc: Pointwise::Learned(lgc), gconv });
                width += k;
            }
            built.push(layers);
        }
        if width != config.feature_channels() {
            return Err(Error::contract(format!("channel bookkeeping: {width} != {}", config.feature_channels())));
        }
        let mut conv = |name: &str, o: usize, i: usize, ks: usize, spec: ConvSpec, std: f64| {
            let w = Tensor::randn(Shape::new(o, i, ks, ks), std, &mut rng);
            ConvLayer::new(name, w, spec, false)
        };
        let fc = config.feature_channels();
        let bottleneck = conv("bottleneck", config.bottleneck_channels, fc, 1, ConvSpec::default(), kaiming_std(fc, a));
        let mut deconvs = Vec::new();
        let mut cin = config.bottleneck_channels;
        for (j, geo) in config.deconv_plan().into_iter().enumerate() {
            let fan = cin * geo.kernel * geo.kernel / (geo.stride * geo.stride);
            let w = Tensor::randn(Shape::new(cin, config.deconv_channels, geo.kernel, geo.kernel), kaiming_std(fan.max(1), a), &mut rng);
            deconvs.push(ConvLayer::new(&format!("deconv{j}"), w, ConvSpec::new(geo.stride, geo.padding, 1), true));
            cin = config.deconv_channels;
        }
        let recon_w = Tensor::randn(Shape::new(1, cin, 3, 3), (1.0 / (cin * 9) as f64).sqrt(), &mut rng);
        let recon = ConvLayer::new("recon", recon_w, ConvSpec::new(1, 1, 1), false);
        Ok(Model { config: config.clone(), stem, blocks: built, bottleneck, deconvs, recon })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn scale(&self) -> usize {
        self.config.scale
    }

    fn slope(&self) -> T {
        T::lit(self.config.leaky_slope)
    }

    /// All parameters in a fixed order.
    pub fn parameters(&self) -> Vec<&Parameter<T>> {
        let mut out: Vec<&Parameter<T>> = self.stem.params().to_vec();
        for layer in self.blocks.iter().flatten() {
            match &layer.lgc {
                Pointwise::Learned(l) => out.push(&l.weight),
                Pointwise::Converted(c) => out.push(&c.weight),
            }
            out.extend(layer.gconv.params());
        }
        out.extend(self.bottleneck.params());
        for d in &self.deconvs {
            out.extend(d.params());
        }
        out.extend(self.recon.params());
        out
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Parameter<T>> {
        let mut out: Vec<&mut Parameter<T>> = Vec::new();
        out.extend(self.stem.params_mut());
        for layer in self.blocks.iter_mut().flatten() {
            match &mut layer.lgc {
                Pointwise::Learned(l) => out.push(&mut l.weight),
                Pointwise::Converted(c) => out.push(&mut c.weight),
            }
            out.extend(layer.gconv.params_mut());
        }
        out.extend(self.bottleneck.params_mut());
        for d in &mut self.deconvs {
            out.extend(d.params_mut());
        }
        out.extend(self.recon.params_mut());
        out
    }

    pub fn lgc_layers(&self) -> Vec<&CondensingConv<T>> {
        self.blocks
            .iter()
            .flatten()
            .filter_map(|l| match &l.lgc {
                Pointwise::Learned(c) => Some(c),
                Pointwise::Converted(_) => None,
            })
            .collect()
    }

    pub fn lgc_layers_mut(&mut self) -> Vec<&mut CondensingConv<T>> {
        self.blocks
            .iter_mut()
            .flatten()
            .filter_map(|l| match &mut l.lgc {
                Pointwise::Learned(c) => Some(c),
                Pointwise::Converted(_) => None,
            })
            .collect()
    }

    pub fn is_frozen(&self) -> bool {
        self.blocks.iter().flatten().all(|l| matches!(l.lgc, Pointwise::Converted(_)))
    }

    /// Stored parameter values.
    pub fn count_params(&self) -> usize {
        self.parameters().iter().map(|p| p.value.numel()).sum()
    }

    /// Parameter values not held at zero by a mask.
    pub fn count_active_params(&self) -> usize {
        self.parameters()
            .iter()
            .map(|p| match &p.mask {
                Some(m) => m.data().iter().filter(|v| **v != T::zero()).count(),
                None => p.value.numel(),
            })
            .sum()
    }

    /// Runs one condensing stage on every learned group conv.
    pub fn condense(&mut self) -> Result<()> {
        for l in self.lgc_layers_mut() {
            l.condense()?;
        }
        Ok(())
    }

    /// Replaces every learned group conv by its converted form.
    pub fn freeze_for_inference(&self) -> Result<Self> {
        let mut out = self.clone();
        for layer in out.blocks.iter_mut().flatten() {
            if let Pointwise::Learned(l) = &layer.lgc {
                layer.lgc = Pointwise::Converted(l.convert()?);
            }
        }
        Ok(out)
    }

    /// Sum of group-lasso penalties of all learned group convs, on the tape.
    pub fn group_lasso(&self, g: &mut Graph<T>) -> Result<Option<Var>> {
        let mut total: Option<Var> = None;
        for l in self.lgc_layers() {
            let p = l.penalty(g)?;
            total = Some(match total {
                None => p,
                Some(t) => g.add(t, p)?,
            });
        }
        Ok(total)
    }

    /// Network branch only: `(N,1,h,w)` → `(N,1,rh,rw)`, without the
    /// bicubic residual.
    pub fn forward_network(&self, g: &mut Graph<T>, lr: Var) -> Result<Var> {
        let s = g.shape(lr);
        if s.c != 1 {
            return Err(Error::Dimension { op: "model forward", axis: "channel", expected: 1, found: s.c });
        }
        let slope = self.slope();
        g.set_scope("stem");
        let shift = g.constant(Tensor::full(s, T::lit(-INPUT_MEAN)));
        let centred = g.add(lr, shift)?;
        let mut feat = self.stem.forward(g, centred)?;
        g.release(shift);
        g.release(centred);
        for (b, block) in self.blocks.iter().enumerate() {
            for (l, layer) in block.iter().enumerate() {
                g.set_scope(format!("block{b}.layer{l}"));
                let h = layer.forward(g, feat, slope)?;
                let next = g.concat_channels(feat, h)?;
                g.release(feat);
                g.release(h);
                feat = next;
            }
        }
        g.set_scope("bottleneck");
        let bn = self.bottleneck.forward(g, feat)?;
        g.release(feat);
        let mut x = g.leaky_relu(bn, slope);
        for (j, d) in self.deconvs.iter().enumerate() {
            g.set_scope(format!("deconv{j}"));
            let y = d.forward(g, x)?;
            x = g.leaky_relu(y, slope);
        }
        g.set_scope("recon");
        let out = self.recon.forward(g, x)?;
        g.set_scope("");
        Ok(out)
    }

    /// `network(lr) + base`, where `base` is the upsampled input.
    pub fn forward_with_base(&self, g: &mut Graph<T>, lr: Var, base: Var) -> Result<Var> {
        let net = self.forward_network(g, lr)?;
        g.add(net, base)
    }

    /// `network(lr) + bicubic(lr, r)`.
    pub fn forward(&self, g: &mut Graph<T>, lr: Var) -> Result<Var> {
        let s = g.shape(lr);
        let r = self.scale();
        let base = g.constant(bicubic_resize_tensor(g.value(lr), s.h * r, s.w * r));
        self.forward_with_base(g, lr, base)
    }

    /// Forward pass without gradient bookkeeping.
    pub fn infer(&self, lr: &Tensor<T>) -> Result<Tensor<T>> {
        let mut g = Graph::inference();
        let x = g.constant(lr.clone());
        let y = self.forward(&mut g, x)?;
        Ok(g.value(y).clone())
    }

    /// Sets every parameter to zero.
    pub fn zero_parameters(&mut self) {
        for p in self.parameters_mut() {
            p.value.data_mut().fill(T::zero());
        }
    }
}
