//! Enumerable data distributions over short sequences, with their exact
//! posterior denoiser. Used to check samplers against ground truth.

use super::tokens::{LogitGrid, TokenSeq, MASK};
use super::{Denoiser, DiffusionError};
use crate::scalar::Scalar;
use std::collections::BTreeMap;

const LOG_FLOOR: f64 = -690.0;

#[derive(Debug, Clone, PartialEq)]
pub struct EnumerableDist {
    num_classes: usize,
    len: usize,
    support: Vec<(Vec<u8>, f64)>,
}

impl EnumerableDist {
    /// Normalizes the weights; duplicate sequences are merged.
    pub fn new(num_classes: usize, weighted: Vec<(Vec<u8>, f64)>) -> Result<Self, DiffusionError> {
        let len = weighted.first().map_or(0, |(s, _)| s.len());
        let mut merged: BTreeMap<Vec<u8>, f64> = BTreeMap::new();
        for (seq, w) in weighted {
            if seq.len() != len || seq.iter().any(|&c| c as usize >= num_classes) || w < 0.0 {
                return Err(DiffusionError::Shape(format!("bad support entry {seq:?}")));
            }
            *merged.entry(seq).or_default() += w;
        }
        let total: f64 = merged.values().sum();
        if total <= 0.0 {
            return Err(DiffusionError::Shape("empty support".into()));
        }
        Ok(Self {
            num_classes,
            len,
            support: merged
                .into_iter()
                .filter(|(_, w)| *w > 0.0)
                .map(|(s, w)| (s, w / total))
                .collect(),
        })
    }

    pub fn uniform_over(seqs: Vec<Vec<u8>>, num_classes: usize) -> Self {
        Self::new(num_classes, seqs.into_iter().map(|s| (s, 1.0)).collect())
            .expect("valid uniform support")
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn support(&self) -> &[(Vec<u8>, f64)] {
        &self.support
    }

    pub fn prob(&self, seq: &[u8]) -> f64 {
        self.support
            .iter()
            .find(|(s, _)| s.as_slice() == seq)
            .map_or(0.0, |(_, p)| *p)
    }

    /// Every complete sequence over the class alphabet, in lexicographic order.
    pub fn all_sequences(&self) -> Vec<Vec<u8>> {
        all_sequences(self.num_classes, self.len, false)
    }

    /// Per-position posterior `p(x0_i = v | x)` under the absorbing channel:
    /// the data distribution restricted to sequences agreeing with every
    /// unmasked token of `x`. Rows are zero when nothing agrees.
    pub fn posterior_marginals(&self, x: &[u8]) -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; self.num_classes]; self.len];
        let mut total = 0.0;
        for (seq, p) in &self.support {
            if seq.iter().zip(x).all(|(&s, &t)| t == MASK || s == t) {
                total += p;
                for (row, &s) in out.iter_mut().zip(seq) {
                    row[s as usize] += p;
                }
            }
        }
        if total > 0.0 {
            for row in &mut out {
                row.iter_mut().for_each(|v| *v /= total);
            }
        }
        out
    }

    pub fn posterior_denoiser(&self) -> PosteriorDenoiser<'_> {
        PosteriorDenoiser { dist: self }
    }
}

/// All length-`len` sequences over `classes` symbols, plus `MASK` when requested.
pub fn all_sequences(classes: usize, len: usize, with_mask: bool) -> Vec<Vec<u8>> {
    let mut alphabet: Vec<u8> = (0..classes as u8).collect();
    if with_mask {
        alphabet.push(MASK);
    }
    let mut out = vec![Vec::new()];
    for _ in 0..len {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                alphabet.iter().map(move |&a| {
                    let mut s = prefix.clone();
                    s.push(a);
                    s
                })
            })
            .collect();
    }
    out
}

/// Exact `p(x0 | x_t)` for an [`EnumerableDist`]. Under absorbing corruption
/// this posterior does not depend on `t`.
pub struct PosteriorDenoiser<'a> {
    dist: &'a EnumerableDist,
}

impl<T: Scalar> Denoiser<T> for PosteriorDenoiser<'_> {
    fn seq_len(&self) -> usize {
        self.dist.len
    }

    fn num_classes(&self) -> usize {
        self.dist.num_classes
    }

    fn denoise(&self, x: &TokenSeq, _t: usize) -> Result<LogitGrid<T>, DiffusionError> {
        if x.len() != self.dist.len {
            return Err(DiffusionError::OrderMismatch {
                expected: self.dist.len,
                found: x.len(),
            });
        }
        let values = self
            .dist
            .posterior_marginals(x.tokens())
            .into_iter()
            .flatten()
            .map(|p| T::lit(if p > 0.0 { p.ln().max(LOG_FLOOR) } else { LOG_FLOOR }))
            .collect();
        LogitGrid::new(self.dist.len, self.dist.num_classes, values)
    }
}
