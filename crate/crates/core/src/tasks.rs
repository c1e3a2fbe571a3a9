//! Synthetic tasks.
//!
//! * Sine boundary: `x1 ~ U[-2π, 2π]`, `x2 = sin(x1 / 2) + ε` with `ε ~ N(0, 1)`, label `1` iff
//!   the point lies above the boundary (`ε > 0`).
//! * Reverse copy: `k` random tokens, a separator, then the same tokens reversed. Only the
//!   positions after the separator are scored.
//!
//! Both are turned into a [`Corpus`], the flat per-position layout every model-facing routine
//! consumes.

use alloc::collections::BTreeSet;
use alloc::vec::Vec;
use core::f64::consts::PI;
use core::ops::Range;

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::rng::{self, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    fn stream(self) -> Stream {
        match self {
            Split::Train => Stream::TrainData,
            Split::Validation => Stream::ValidationData,
            Split::Test => Stream::TestData,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifDataset {
    pub inputs: Vec<[f64; 2]>,
    pub labels: Vec<usize>,
    pub split: Split,
}

/// One sine-task point for a given abscissa and boundary offset.
pub fn sine_sample(x1: f64, noise: f64) -> ([f64; 2], usize) {
    let x2 = libm::sin(0.5 * x1) + noise;
    ([x1, x2], usize::from(noise > 0.0))
}

pub fn gen_sine_split(seed: u64, split: Split, n: usize) -> Result<ClassifDataset> {
    if n == 0 {
        return Err(Error::InvalidConfig("sine split size must be positive".into()));
    }
    let mut rng = rng::stream(seed, split.stream());
    let (inputs, labels) = (0..n)
        .map(|_| {
            let x1 = rng.random_range(-2.0 * PI..=2.0 * PI);
            let noise: f64 = StandardNormal.sample(&mut rng);
            sine_sample(x1, noise)
        })
        .unzip();
    Ok(ClassifDataset { inputs, labels, split })
}

/// Train and test splits drawn from disjoint streams of the same seed.
pub fn gen_sine(seed: u64, n_train: usize, n_test: usize) -> Result<(ClassifDataset, ClassifDataset)> {
    Ok((
        gen_sine_split(seed, Split::Train, n_train)?,
        gen_sine_split(seed, Split::Test, n_test)?,
    ))
}

impl ClassifDataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn to_corpus(&self) -> Corpus {
        let mut builder = CorpusBuilder::new(2, 2);
        for (x, &y) in self.inputs.iter().zip(&self.labels) {
            builder.push_sample(&[(x.as_slice(), y)]);
        }
        builder.finish()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct ReverseCopyParams {
    /// Vocabulary size including the separator, which is token `vocab_size - 1`.
    pub vocab_size: usize,
    /// Prefix lengths are drawn uniformly from `1..=max_prefix`.
    pub max_prefix: usize,
}

impl Default for ReverseCopyParams {
    fn default() -> Self {
        Self {
            vocab_size: 16,
            max_prefix: 6,
        }
    }
}

impl ReverseCopyParams {
    pub fn validate(&self) -> Result<()> {
        if self.vocab_size < 4 {
            return Err(Error::InvalidConfig(alloc::format!(
                "reverse-copy vocabulary must have at least 4 tokens, got {}",
                self.vocab_size
            )));
        }
        if !(1..=8).contains(&self.max_prefix) {
            return Err(Error::InvalidConfig(alloc::format!(
                "reverse-copy prefix length must be in 1..=8, got {}",
                self.max_prefix
            )));
        }
        Ok(())
    }

    pub fn separator(&self) -> usize {
        self.vocab_size - 1
    }

    /// Longest sequence the generator can emit.
    pub fn max_len(&self) -> usize {
        2 * self.max_prefix + 1
    }

    /// Enough context to see the whole sequence before its last token.
    pub fn context_window(&self) -> usize {
        2 * self.max_prefix
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeqDataset {
    pub sequences: Vec<Vec<usize>>,
    pub vocab_size: usize,
    pub context_window: usize,
    pub split: Split,
}

pub fn reverse_copy_sequence(prefix: &[usize], vocab_size: usize) -> Result<Vec<usize>> {
    let sep = vocab_size - 1;
    if let Some(&bad) = prefix.iter().find(|&&t| t >= sep) {
        return Err(Error::OutOfRange {
            what: "prefix token",
            value: bad as f64,
        });
    }
    let mut seq = Vec::with_capacity(2 * prefix.len() + 1);
    seq.extend_from_slice(prefix);
    seq.push(sep);
    seq.extend(prefix.iter().rev());
    Ok(seq)
}

pub fn gen_reverse_copy_split(seed: u64, split: Split, params: ReverseCopyParams, n: usize) -> Result<SeqDataset> {
    params.validate()?;
    if n == 0 {
        return Err(Error::InvalidConfig("sequence split size must be positive".into()));
    }
    let mut rng = rng::stream(seed, split.stream());
    let sep = params.separator();
    let sequences = (0..n)
        .map(|_| {
            let k = rng.random_range(1..=params.max_prefix);
            let prefix: Vec<usize> = (0..k).map(|_| rng.random_range(0..sep)).collect();
            reverse_copy_sequence(&prefix, params.vocab_size).expect("tokens below separator")
        })
        .collect();
    Ok(SeqDataset {
        sequences,
        vocab_size: params.vocab_size,
        context_window: params.context_window(),
        split,
    })
}

/// Train and test splits; test sequences that also occur in train are dropped.
pub fn gen_reverse_copy(
    seed: u64,
    params: ReverseCopyParams,
    n_train: usize,
    n_test: usize,
) -> Result<(SeqDataset, SeqDataset)> {
    let train = gen_reverse_copy_split(seed, Split::Train, params, n_train)?;
    let mut test = gen_reverse_copy_split(seed, Split::Test, params, n_test)?;
    test.remove_overlap(&train);
    Ok((train, test))
}

impl SeqDataset {
    pub fn len(&self) -> usize {
        self.sequences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequences.is_empty()
    }

    pub fn separator(&self) -> usize {
        self.vocab_size - 1
    }

    /// Drops every sequence that appears verbatim in `other`.
    pub fn remove_overlap(&mut self, other: &SeqDataset) {
        let seen: BTreeSet<&[usize]> = other.sequences.iter().map(Vec::as_slice).collect();
        let kept: Vec<Vec<usize>> = self
            .sequences
            .iter()
            .filter(|s| !seen.contains(s.as_slice()))
            .cloned()
            .collect();
        self.sequences = kept;
    }

    /// Positions scored by losses and metrics: everything after the separator.
    pub fn scored_positions(&self, seq: &[usize]) -> Range<usize> {
        let sep = self.separator();
        let start = seq.iter().position(|&t| t == sep).map_or(seq.len(), |p| p + 1);
        start..seq.len()
    }

    /// One-hot encoding of the `context_window` tokens preceding `pos`, right-aligned;
    /// missing slots (before the sequence start) stay all-zero.
    pub fn encode_context(&self, seq: &[usize], pos: usize, out: &mut [f64]) {
        let k = self.context_window;
        let v = self.vocab_size;
        out.iter_mut().for_each(|x| *x = 0.0);
        let start = pos.saturating_sub(k);
        let offset = k - (pos - start);
        for (slot, &tok) in seq[start..pos].iter().enumerate() {
            out[(offset + slot) * v + tok] = 1.0;
        }
    }

    pub fn input_dim(&self) -> usize {
        self.context_window * self.vocab_size
    }

    pub fn to_corpus(&self) -> Corpus {
        let dim = self.input_dim();
        let mut builder = CorpusBuilder::new(dim, self.vocab_size);
        let mut buf = alloc::vec![0.0; dim];
        for seq in &self.sequences {
            let mut positions = Vec::new();
            for pos in self.scored_positions(seq) {
                self.encode_context(seq, pos, &mut buf);
                positions.push((buf.clone(), seq[pos]));
            }
            let refs: Vec<(&[f64], usize)> = positions.iter().map(|(x, y)| (x.as_slice(), *y)).collect();
            builder.push_sample(&refs);
        }
        builder.finish()
    }
}

/// Flat, model-ready dataset: each sample owns one or more scored positions, each
/// position an input vector and a target class.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    input_dim: usize,
    n_classes: usize,
    inputs: Vec<f64>,
    targets: Vec<usize>,
    offsets: Vec<usize>,
    fingerprint: u64,
}

pub struct CorpusBuilder {
    corpus: Corpus,
}

impl CorpusBuilder {
    pub fn new(input_dim: usize, n_classes: usize) -> Self {
        Self {
            corpus: Corpus {
                input_dim,
                n_classes,
                inputs: Vec::new(),
                targets: Vec::new(),
                offsets: alloc::vec![0],
                fingerprint: 0,
            },
        }
    }

    /// Panics if an input has the wrong length or a target is out of range.
    pub fn push_sample(&mut self, positions: &[(&[f64], usize)]) {
        let c = &mut self.corpus;
        for (x, y) in positions {
            assert_eq!(x.len(), c.input_dim, "corpus input width");
            assert!(*y < c.n_classes, "corpus target out of range");
            c.inputs.extend_from_slice(x);
            c.targets.push(*y);
        }
        c.offsets.push(c.targets.len());
    }

    pub fn finish(mut self) -> Corpus {
        self.corpus.fingerprint = self.corpus.compute_fingerprint();
        self.corpus
    }
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(hash: u64, bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(hash, |h, &b| (h ^ u64::from(b)).wrapping_mul(FNV_PRIME))
}

impl Corpus {
    fn compute_fingerprint(&self) -> u64 {
        let mut h = FNV_OFFSET;
        h = fnv1a(h, &(self.input_dim as u64).to_le_bytes());
        h = fnv1a(h, &(self.n_classes as u64).to_le_bytes());
        for &o in &self.offsets {
            h = fnv1a(h, &(o as u64).to_le_bytes());
        }
        for x in &self.inputs {
            h = fnv1a(h, &x.to_bits().to_le_bytes());
        }
        for &t in &self.targets {
            h = fnv1a(h, &(t as u64).to_le_bytes());
        }
        h
    }

    pub fn fingerprint(&self) -> u64 {
        self.fingerprint
    }

    pub fn len(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn n_positions(&self) -> usize {
        self.targets.len()
    }

    pub fn positions(&self, sample: usize) -> Range<usize> {
        self.offsets[sample]..self.offsets[sample + 1]
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn input(&self, position: usize) -> &[f64] {
        &self.inputs[position * self.input_dim..(position + 1) * self.input_dim]
    }

    pub fn target(&self, position: usize) -> usize {
        self.targets[position]
    }

    /// A new corpus holding the given samples in the given order.
    pub fn subset(&self, samples: &[usize]) -> Corpus {
        let mut builder = CorpusBuilder::new(self.input_dim, self.n_classes);
        for &i in samples {
            let positions: Vec<(&[f64], usize)> = self.positions(i).map(|p| (self.input(p), self.target(p))).collect();
            builder.push_sample(&positions);
        }
        builder.finish()
    }

    /// The first `n` samples (or all of them).
    pub fn head(&self, n: usize) -> Corpus {
        let idx: Vec<usize> = (0..n.min(self.len())).collect();
        self.subset(&idx)
    }
}
