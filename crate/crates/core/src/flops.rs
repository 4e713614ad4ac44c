//! Multiply-accumulate accounting.
//!
//! Convolution MACs per image are `out_h·out_w·k_h·k_w·(C_in/G)·C_out`.
//! Transposed convolutions are counted at their input resolution:
//! `in_h·in_w·k_h·k_w·C_in·(C_out/G)`. Learned group convolutions count only
//! retained connections. One MAC is reported as one FLOP; `2×` totals are
//! printed alongside for readers using the other convention.

use std::fmt::Write as _;

use crate::autograd::Graph;
use crate::error::Result;
use crate::lgc::CondensingConv;
use crate::model::{Model, ModelConfig, Pointwise};
use crate::scalar::Scalar;
use crate::tensor::{Shape, Tensor};

/// Reported totals of comparison networks at ×2 producing a 64×64 output,
/// in units of 1e6. Shipped for context only.
pub const REFERENCE_MFLOPS: [(&str, f64); 5] = [
    ("SRCNN", 332.32),
    ("VDSR", 2727.61),
    ("LapSRN", 1988.38),
    ("DRRN", 30235.17),
    ("SRCondenseNet", 668.88),
];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LayerKind {
    Conv,
    GroupConv,
    LearnedGroupConv,
    Deconv,
    /// Listed but excluded from MAC totals.
    Elementwise,
}

impl LayerKind {
    pub fn label(self) -> &'static str {
        match self {
            LayerKind::Conv => "conv",
            LayerKind::GroupConv => "gconv",
            LayerKind::LearnedGroupConv => "lgc",
            LayerKind::Deconv => "deconv",
            LayerKind::Elementwise => "eltwise",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerFlops {
    pub name: String,
    /// Forward scope the layer runs under; matches instrumented records.
    pub scope: String,
    pub kind: LayerKind,
    pub output: Shape,
    /// MACs in the counted state.
    pub macs: u64,
    /// MACs with every learned group conv dense.
    pub dense_macs: u64,
    /// MACs with every learned group conv fully condensed.
    pub condensed_macs: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FlopsReport {
    pub input: (usize, usize),
    pub layers: Vec<LayerFlops>,
    pub total_macs: u64,
    pub dense_macs: u64,
    pub condensed_macs: u64,
    pub convention: &'static str,
}

/// Pruning state assumed for every learned group conv.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LgcState {
    /// After this many condensing stages.
    Stage(usize),
    FullyCondensed,
}

fn conv_macs(out_h: usize, out_w: usize, k: usize, cin: usize, cout: usize, groups: usize) -> u64 {
    (out_h * out_w * k * k * (cin / groups) * cout) as u64
}

struct Builder {
    layers: Vec<LayerFlops>,
}

impl Builder {
    fn push(&mut self, name: String, scope: &str, kind: LayerKind, output: Shape, macs: u64, dense: u64, condensed: u64) {
        self.layers.push(LayerFlops { name, scope: scope.to_string(), kind, output, macs, dense_macs: dense, condensed_macs: condensed });
    }

    fn conv(&mut self, name: &str, scope: &str, kind: LayerKind, output: Shape, macs: u64) {
        self.push(name.to_string(), scope, kind, output, macs, macs, macs);
    }

    fn eltwise(&mut self, name: String, scope: &str, output: Shape) {
        self.push(name, scope, LayerKind::Elementwise, output, 0, 0, 0);
    }
}

/// Analytic report for `config` at LR input size `h×w`, with every learned
/// group conv at the pruning state given by `state_of(block, layer)`.
fn analytic(config: &ModelConfig, h: usize, w: usize, state_of: impl Fn(usize, usize) -> LgcState) -> FlopsReport {
    let cf = config.condense_factor;
    let final_stage = cf - 1;
    let mut b = Builder { layers: Vec::new() };
    let s = |c: usize, hh: usize, ww: usize| Shape::new(1, c, hh, ww);
    b.eltwise("centre".into(), "stem", s(1, h, w));
    b.conv("stem", "stem", LayerKind::Conv, s(config.stem_channels, h, w), conv_macs(h, w, 3, 1, config.stem_channels, 1));
    for blk in 0..config.num_blocks {
        for l in 0..config.layers_per_block {
            let scope = format!("block{blk}.layer{l}");
            let cin = config.channels_into(blk, l);
            let width = config.lgc_width();
            let retained = |stage: usize| CondensingConv::<f64>::retained_after(cin, cf, stage);
            let stage = match state_of(blk, l) {
                LgcState::Stage(st) => st.min(final_stage),
                LgcState::FullyCondensed => final_stage,
            };
            let per_pixel = |r: usize| (h * w * width * r) as u64;
            b.push(
                format!("{scope}.lgc"),
                &scope,
                LayerKind::LearnedGroupConv,
                s(width, h, w),
                per_pixel(retained(stage)),
                per_pixel(cin),
                per_pixel(retained(final_stage)),
            );
            b.eltwise(format!("{scope}.act1"), &scope, s(width, h, w));
            b.conv(
                &format!("{scope}.gconv"),
                &scope,
                LayerKind::GroupConv,
                s(config.growth, h, w),
                conv_macs(h, w, 3, width, config.growth, config.groups),
            );
            b.eltwise(format!("{scope}.act2"), &scope, s(config.growth, h, w));
            b.eltwise(format!("{scope}.concat"), &scope, s(cin + config.growth, h, w));
        }
    }
    let fc = config.feature_channels();
    b.conv("bottleneck", "bottleneck", LayerKind::Conv, s(config.bottleneck_channels, h, w), conv_macs(h, w, 1, fc, config.bottleneck_channels, 1));
    b.eltwise("bottleneck.act".into(), "bottleneck", s(config.bottleneck_channels, h, w));
    let (mut ch, mut cw, mut cin) = (h, w, config.bottleneck_channels);
    for (j, geo) in config.deconv_plan().into_iter().enumerate() {
        let scope = format!("deconv{j}");
        let macs = conv_macs(ch, cw, geo.kernel, cin, config.deconv_channels, 1);
        ch = geo.stride * (ch - 1) + geo.kernel - 2 * geo.padding;
        cw = geo.stride * (cw - 1) + geo.kernel - 2 * geo.padding;
        b.conv(&scope, &scope, LayerKind::Deconv, s(config.deconv_channels, ch, cw), macs);
        b.eltwise(format!("{scope}.act"), &scope, s(config.deconv_channels, ch, cw));
        cin = config.deconv_channels;
    }
    b.conv("recon", "recon", LayerKind::Conv, s(1, ch, cw), conv_macs(ch, cw, 3, cin, 1, 1));
    b.eltwise("residual_add".into(), "", s(1, ch, cw));
    let layers = b.layers;
    FlopsReport {
        input: (h, w),
        total_macs: layers.iter().map(|l| l.macs).sum(),
        dense_macs: layers.iter().map(|l| l.dense_macs).sum(),
        condensed_macs: layers.iter().map(|l| l.condensed_macs).sum(),
        layers,
        convention: "1 MAC = 1 FLOP",
    }
}

/// Analytic report with every learned group conv in `state`.
pub fn count_flops(config: &ModelConfig, h: usize, w: usize, state: LgcState) -> FlopsReport {
    analytic(config, h, w, |_, _| state)
}

/// Analytic report for a model, reading each layer's pruning stage.
pub fn count_model_flops<T: Scalar>(model: &Model<T>, h: usize, w: usize) -> FlopsReport {
    let stages: Vec<Vec<LgcState>> = model
        .blocks
        .iter()
        .map(|blk| {
            blk.iter()
                .map(|l| match &l.lgc {
                    Pointwise::Learned(c) => LgcState::Stage(c.stage()),
                    Pointwise::Converted(_) => LgcState::FullyCondensed,
                })
                .collect()
        })
        .collect();
    analytic(model.config(), h, w, |b, l| stages[b][l])
}

/// MACs of one forward pass at LR size `h×w`, summed from the convolution
/// hooks of an instrumented graph. Returns the total and per-scope sums in
/// execution order.
pub fn instrumented_macs<T: Scalar>(model: &Model<T>, h: usize, w: usize) -> Result<(u64, Vec<(String, u64)>)> {
    let mut g = Graph::inference().count_macs();
    let x = g.constant(Tensor::zeros(Shape::new(1, 1, h, w)));
    model.forward(&mut g, x)?;
    let mut scopes: Vec<(String, u64)> = Vec::new();
    for rec in g.mac_log().unwrap_or_default() {
        match scopes.last_mut() {
            Some((s, m)) if *s == rec.scope => *m += rec.macs,
            _ => scopes.push((rec.scope.clone(), rec.macs)),
        }
    }
    Ok((scopes.iter().map(|(_, m)| m).sum(), scopes))
}

impl FlopsReport {
    /// Per-scope MAC sums in layer order, skipping scopes with no MACs.
    pub fn scope_totals(&self) -> Vec<(String, u64)> {
        let mut out: Vec<(String, u64)> = Vec::new();
        for l in self.layers.iter().filter(|l| l.kind != LayerKind::Elementwise) {
            match out.last_mut() {
                Some((s, m)) if *s == l.scope => *m += l.macs,
                _ => out.push((l.scope.clone(), l.macs)),
            }
        }
        out
    }

    /// MACs of learned group convs only: `(counted, dense, condensed)`.
    pub fn lgc_macs(&self) -> (u64, u64, u64) {
        self.layers
            .iter()
            .filter(|l| l.kind == LayerKind::LearnedGroupConv)
            .fold((0, 0, 0), |a, l| (a.0 + l.macs, a.1 + l.dense_macs, a.2 + l.condensed_macs))
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "FLOPs report for {}x{} input ({})", self.input.0, self.input.1, self.convention);
        let _ = writeln!(s, "{:<28} {:<8} {:>18} {:>16} {:>16}", "layer", "kind", "output", "MACs", "dense MACs");
        for l in &self.layers {
            let shape = format!("{}x{}x{}", l.output.c, l.output.h, l.output.w);
            let _ = writeln!(s, "{:<28} {:<8} {:>18} {:>16} {:>16}", l.name, l.kind.label(), shape, l.macs, l.dense_macs);
        }
        let _ = writeln!(s, "total MACs          {:>16} ({:.2}e6, 2xMAC {:.2}e6)", self.total_macs, self.total_macs as f64 / 1e6, 2.0 * self.total_macs as f64 / 1e6);
        let _ = writeln!(s, "dense-equivalent    {:>16} ({:.2}e6)", self.dense_macs, self.dense_macs as f64 / 1e6);
        let _ = writeln!(s, "post-condensation   {:>16} ({:.2}e6)", self.condensed_macs, self.condensed_macs as f64 / 1e6);
        let _ = writeln!(s, "reference (x1e6, x2 scale, 64x64 output):");
        for (name, v) in REFERENCE_MFLOPS {
            let _ = writeln!(s, "  {name:<14} {v:>10.2}");
        }
        s
    }

    /// Line-delimited `key=value` form.
    pub fn to_kv(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "input_h={}\ninput_w={}", self.input.0, self.input.1);
        for l in &self.layers {
            let _ = writeln!(s, "layer.{}.kind={}", l.name, l.kind.label());
            let _ = writeln!(s, "layer.{}.output={}x{}x{}", l.name, l.output.c, l.output.h, l.output.w);
            let _ = writeln!(s, "layer.{}.macs={}", l.name, l.macs);
        }
        let _ = writeln!(s, "total_macs={}", self.total_macs);
        let _ = writeln!(s, "total_flops_2x={}", 2 * self.total_macs);
        let _ = writeln!(s, "dense_macs={}", self.dense_macs);
        let _ = writeln!(s, "condensed_macs={}", self.condensed_macs);
        for (name, v) in REFERENCE_MFLOPS {
            let _ = writeln!(s, "reference.{name}.mflops={v}");
        }
        s
    }
}
