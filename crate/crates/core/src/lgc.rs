//! Learned group convolution.
//!
//! A [`CondensingConv`] is a 1×1 convolution trained densely while a binary
//! mask over its `(out, in)` kernel is tightened in stages. Output filters
//! are split into `groups` contiguous blocks; at every condensing stage each
//! block drops the `⌊in / C⌋` input columns with the smallest L1 norm over
//! the block. After `C − 1` stages the layer is [`convert`]ed into an index
//! select followed by an ordinary grouped 1×1 convolution.
//!
//! [`convert`]: CondensingConv::convert

use std::cmp::Ordering;

use crate::autograd::{column_norms, Graph, Parameter, Var};
use crate::error::{Error, Result};
use crate::ops::{self, ConvSpec};
use crate::scalar::Scalar;
use crate::tensor::{Shape, Tensor};

#[derive(Clone, Debug, PartialEq)]
pub struct CondensingConv<T> {
    /// `(out, in, 1, 1)` kernel; its `mask` is always present.
    pub weight: Parameter<T>,
    groups: usize,
    condense_factor: usize,
    stage: usize,
}

impl<T: Scalar> CondensingConv<T> {
    pub fn new(name: impl Into<String>, weight: Tensor<T>, groups: usize, condense_factor: usize) -> Result<Self> {
        let s = weight.shape();
        if s.h != 1 || s.w != 1 {
            return Err(Error::config(format!("learned group conv needs a 1x1 kernel, got {s:?}")));
        }
        if groups == 0 || s.n % groups != 0 {
            return Err(Error::config(format!("{} output channels not divisible into {groups} groups", s.n)));
        }
        if condense_factor == 0 {
            return Err(Error::config("condensing factor must be at least 1"));
        }
        let mut weight = Parameter::new(name, weight);
        weight.mask = Some(Tensor::full(s, T::one()));
        Ok(CondensingConv { weight, groups, condense_factor, stage: 0 })
    }

    /// Restores a layer from stored parts (checkpoint loading).
    pub fn from_parts(weight: Parameter<T>, groups: usize, condense_factor: usize, stage: usize) -> Result<Self> {
        let mask = weight.mask.clone().ok_or_else(|| Error::contract("condensing conv needs a mask"))?;
        let mut layer = CondensingConv::new(weight.name.clone(), weight.value.clone(), groups, condense_factor)?;
        if mask.shape() != layer.weight.value.shape() {
            return Err(Error::contract("mask shape differs from kernel shape"));
        }
        if stage >= condense_factor.max(1) {
            return Err(Error::contract(format!("stage {stage} out of range for factor {condense_factor}")));
        }
        layer.weight.mask = Some(mask);
        layer.stage = stage;
        Ok(layer)
    }

    pub fn name(&self) -> &str {
        &self.weight.name
    }

    pub fn in_channels(&self) -> usize {
        self.weight.value.shape().c
    }

    pub fn out_channels(&self) -> usize {
        self.weight.value.shape().n
    }

    pub fn groups(&self) -> usize {
        self.groups
    }

    pub fn condense_factor(&self) -> usize {
        self.condense_factor
    }

    pub fn stage(&self) -> usize {
        self.stage
    }

    pub fn final_stage(&self) -> usize {
        self.condense_factor - 1
    }

    pub fn is_fully_condensed(&self) -> bool {
        self.stage == self.final_stage()
    }

    /// Columns dropped per group at every stage.
    pub fn drop_per_stage(&self) -> usize {
        self.in_channels() / self.condense_factor
    }

    pub fn mask(&self) -> &Tensor<T> {
        self.weight.mask.as_ref().expect("condensing conv always carries a mask")
    }

    fn filters_per_group(&self) -> usize {
        self.out_channels() / self.groups
    }

    pub fn is_kept(&self, filter: usize, column: usize) -> bool {
        self.mask().data()[filter * self.in_channels() + column] != T::zero()
    }

    /// Input columns group `g` still reads, ascending.
    pub fn kept_columns(&self, g: usize) -> Vec<usize> {
        let f = g * self.filters_per_group();
        (0..self.in_channels()).filter(|&i| self.is_kept(f, i)).collect()
    }

    /// Retained input columns per group; equal across groups.
    pub fn retained_per_group(&self) -> usize {
        self.kept_columns(0).len()
    }

    /// Expected retained count after `stage` stages: `I − s·⌊I/C⌋`.
    pub fn retained_after(in_channels: usize, condense_factor: usize, stage: usize) -> usize {
        in_channels - stage * (in_channels / condense_factor)
    }

    pub fn retained_fraction(&self) -> f64 {
        self.retained_per_group() as f64 / self.in_channels() as f64
    }

    /// Nonzero mask entries.
    pub fn active_connections(&self) -> usize {
        self.mask().data().iter().filter(|m| **m != T::zero()).count()
    }

    fn check_input(&self, c: usize) -> Result<()> {
        if c != self.in_channels() {
            return Err(Error::Dimension {
                op: "learned group conv",
                axis: "channel",
                expected: self.in_channels(),
                found: c,
            });
        }
        Ok(())
    }

    /// Masked 1×1 convolution on the tape.
    pub fn forward(&self, g: &mut Graph<T>, input: Var) -> Result<Var> {
        self.check_input(g.shape(input).c)?;
        let w = g.param(&self.weight);
        g.conv2d(input, w, None, ConvSpec::default())
    }

    /// Masked 1×1 convolution without recording gradients.
    pub fn forward_tensor(&self, input: &Tensor<T>) -> Result<Tensor<T>> {
        self.check_input(input.shape().c)?;
        let w = self.weight.value.zip_map(self.mask(), |w, m| w * m)?;
        ops::conv2d_raw(input, &w, None, ConvSpec::default())
    }

    /// Group-lasso penalty `Σ_g Σ_i ‖W[g, i]‖₂` over unmasked columns, on the tape.
    pub fn penalty(&self, g: &mut Graph<T>) -> Result<Var> {
        let w = g.param(&self.weight);
        g.group_lasso(w, self.groups, Some(self.mask().clone()))
    }

    /// Numeric value of the group-lasso penalty.
    pub fn group_lasso_penalty(&self) -> T {
        column_norms(&self.weight.value, self.groups, Some(self.mask()))
            .expect("validated at construction")
            .into_iter()
            .sum()
    }

    /// L1 norm of every still-kept column of group `g`, as `(column, score)`.
    pub fn column_scores(&self, g: usize) -> Vec<(usize, T)> {
        let per = self.filters_per_group();
        let i = self.in_channels();
        let w = self.weight.value.data();
        self.kept_columns(g)
            .into_iter()
            .map(|col| {
                let s = (g * per..(g + 1) * per).map(|f| w[f * i + col].abs()).sum();
                (col, s)
            })
            .collect()
    }

    /// Runs one condensing stage: per group, masks the `⌊I/C⌋` kept columns
    /// with the smallest L1 norm (lower index first on ties) and zeroes their
    /// weights. Returns the dropped columns per group.
    pub fn condense(&mut self) -> Result<Vec<Vec<usize>>> {
        if self.stage >= self.final_stage() {
            return Err(Error::contract(format!(
                "{}: already condensed {} times (factor {})",
                self.name(),
                self.stage,
                self.condense_factor
            )));
        }
        let drop = self.drop_per_stage();
        let per = self.filters_per_group();
        let i = self.in_channels();
        let mut dropped = Vec::with_capacity(self.groups);
        for g in 0..self.groups {
            let mut scores = self.column_scores(g);
            scores.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(Ordering::Equal));
            let victims: Vec<usize> = scores.iter().take(drop).map(|&(c, _)| c).collect();
            let mask = self.weight.mask.as_mut().expect("mask present");
            for &col in &victims {
                for f in g * per..(g + 1) * per {
                    mask.data_mut()[f * i + col] = T::zero();
                    self.weight.value.data_mut()[f * i + col] = T::zero();
                }
            }
            dropped.push(victims);
        }
        self.stage += 1;
        Ok(dropped)
    }

    /// Index-select + grouped-conv form of a fully condensed layer.
    pub fn convert(&self) -> Result<ConvertedLgc<T>> {
        if !self.is_fully_condensed() {
            return Err(Error::contract(format!(
                "{}: conversion needs stage {}, layer is at stage {}",
                self.name(),
                self.final_stage(),
                self.stage
            )));
        }
        let per = self.filters_per_group();
        let i = self.in_channels();
        let kept: Vec<Vec<usize>> = (0..self.groups).map(|g| self.kept_columns(g)).collect();
        let r = kept[0].len();
        if kept.iter().any(|k| k.len() != r) {
            return Err(Error::contract(format!("{}: groups retain unequal column counts", self.name())));
        }
        let o = self.out_channels();
        let w = self.weight.value.data();
        let weight = Tensor::from_fn(Shape::new(o, r, 1, 1), |f, j, _, _| w[f * i + kept[f / per][j]]);
        Ok(ConvertedLgc {
            indices: kept.into_iter().flatten().collect(),
            weight: Parameter::new(self.name().to_string(), weight),
            groups: self.groups,
            in_channels: i,
        })
    }
}

/// Inference form of a learned group convolution: `index_select` gathers
/// each group's retained inputs, then a grouped 1×1 conv applies the kept
/// weights.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvertedLgc<T> {
    /// Selected input channels, group by group.
    pub indices: Vec<usize>,
    /// `(out, retained_per_group, 1, 1)` kernel.
    pub weight: Parameter<T>,
    pub groups: usize,
    pub in_channels: usize,
}

impl<T: Scalar> ConvertedLgc<T> {
    pub fn spec(&self) -> ConvSpec {
        ConvSpec::new(1, 0, self.groups)
    }

    pub fn retained_per_group(&self) -> usize {
        self.indices.len() / self.groups
    }

    pub fn forward(&self, g: &mut Graph<T>, input: Var) -> Result<Var> {
        let c = g.shape(input).c;
        if c != self.in_channels {
            return Err(Error::Dimension { op: "converted group conv", axis: "channel", expected: self.in_channels, found: c });
        }
        let sel = g.index_select_channels(input, &self.indices)?;
        let w = g.param(&self.weight);
        g.conv2d(sel, w, None, self.spec())
    }

    pub fn forward_tensor(&self, input: &Tensor<T>) -> Result<Tensor<T>> {
        let sel = ops::index_select_channels(input, &self.indices)?;
        ops::conv2d_raw(&sel, &self.weight.value, None, self.spec())
    }
}
