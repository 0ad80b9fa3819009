//! Flat parameter vectors with a named-segment layout.
//!
//! Every model flattens its parameters into one contiguous `f64` buffer.
//! Segments are ordered by name so that the same model always produces the
//! same offsets, which in turn fixes shard boundaries across runs.

use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Segment {
    pub name: String,
    pub offset: usize,
    pub len: usize,
}

impl Segment {
    pub fn range(&self) -> Range<usize> {
        self.offset..self.offset + self.len
    }
}

/// Immutable description of how a flat vector splits into named segments.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ParamLayout {
    segments: Vec<Segment>,
    total_len: usize,
}

impl ParamLayout {
    /// Builds a layout from `(name, len)` pairs. Order of the input is
    /// irrelevant: segments are sorted lexicographically by name.
    pub fn new<S: Into<String>>(parts: impl IntoIterator<Item = (S, usize)>) -> Result<Self> {
        let mut named: Vec<(String, usize)> = parts.into_iter().map(|(n, l)| (n.into(), l)).collect();
        named.sort_by(|a, b| a.0.cmp(&b.0));
        if let Some(w) = named.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(Error::invalid(alloc::format!("duplicate segment `{}`", w[0].0)));
        }
        let mut offset = 0;
        let segments = named
            .into_iter()
            .map(|(name, len)| {
                let seg = Segment { name, offset, len };
                offset += len;
                seg
            })
            .collect();
        Ok(Self { segments, total_len: offset })
    }

    pub fn empty() -> Self {
        Self { segments: Vec::new(), total_len: 0 }
    }

    pub fn total_len(&self) -> usize {
        self.total_len
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn segment(&self, name: &str) -> Option<&Segment> {
        self.segments
            .binary_search_by(|s| s.name.as_str().cmp(name))
            .ok()
            .map(|i| &self.segments[i])
    }

    /// Name of the segment containing flat index `idx`.
    pub fn segment_of(&self, idx: usize) -> Option<&str> {
        self.segments
            .iter()
            .find(|s| s.range().contains(&idx))
            .map(|s| s.name.as_str())
    }
}

/// Model parameters or gradients: a dense vector tied to a layout.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    layout: Arc<ParamLayout>,
    values: Vec<f64>,
}

impl ParamVector {
    pub fn zeros_like(layout: &Arc<ParamLayout>) -> Self {
        Self { layout: Arc::clone(layout), values: vec![0.0; layout.total_len()] }
    }

    pub fn from_values(layout: &Arc<ParamLayout>, values: Vec<f64>) -> Result<Self> {
        if values.len() != layout.total_len() {
            return Err(Error::LayoutMismatch { expected: layout.total_len(), found: values.len() });
        }
        Ok(Self { layout: Arc::clone(layout), values })
    }

    pub fn layout(&self) -> &Arc<ParamLayout> {
        &self.layout
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn segment(&self, name: &str) -> Option<&[f64]> {
        self.layout.segment(name).map(|s| &self.values[s.range()])
    }

    pub fn segment_mut(&mut self, name: &str) -> Option<&mut [f64]> {
        let range = self.layout.segment(name)?.range();
        Some(&mut self.values[range])
    }

    pub fn same_layout(&self, other: &ParamVector) -> bool {
        Arc::ptr_eq(&self.layout, &other.layout) || *self.layout == *other.layout
    }

    pub(crate) fn check_layout(&self, other: &ParamVector) -> Result<()> {
        if self.same_layout(other) {
            Ok(())
        } else {
            Err(Error::LayoutMismatch { expected: self.len(), found: other.len() })
        }
    }

    /// `y + alpha * x`, leaving both inputs untouched.
    pub fn axpy(alpha: f64, x: &ParamVector, y: &ParamVector) -> Result<ParamVector> {
        let mut out = y.clone();
        out.axpy_in_place(alpha, x)?;
        Ok(out)
    }

    /// `self += alpha * x`.
    pub fn axpy_in_place(&mut self, alpha: f64, x: &ParamVector) -> Result<()> {
        self.check_layout(x)?;
        for (y, &x) in self.values.iter_mut().zip(&x.values) {
            *y += alpha * x;
        }
        Ok(())
    }

    pub fn scale(&mut self, factor: f64) {
        self.values.iter_mut().for_each(|v| *v *= factor);
    }

    pub fn fill(&mut self, value: f64) {
        self.values.iter_mut().for_each(|v| *v = value);
    }

    pub fn range_read(&self, start: usize, end: usize) -> Result<Vec<f64>> {
        self.check_range(start, end)?;
        Ok(self.values[start..end].to_vec())
    }

    /// Overwrites exactly `[start, end)` with `src`.
    pub fn range_write(&mut self, start: usize, end: usize, src: &[f64]) -> Result<()> {
        self.check_range(start, end)?;
        if src.len() != end - start {
            return Err(Error::LayoutMismatch { expected: end - start, found: src.len() });
        }
        self.values[start..end].copy_from_slice(src);
        Ok(())
    }

    fn check_range(&self, start: usize, end: usize) -> Result<()> {
        if start <= end && end <= self.values.len() {
            Ok(())
        } else {
            Err(Error::OutOfBounds { start, end, len: self.values.len() })
        }
    }

    /// Fails with the name of the first segment holding a NaN or infinity.
    pub fn check_finite(&self) -> Result<()> {
        match self.values.iter().position(|v| !v.is_finite()) {
            None => Ok(()),
            Some(i) => Err(Error::NonFinite {
                segment: self.layout.segment_of(i).unwrap_or("?").into(),
            }),
        }
    }
}

/// Largest elementwise relative difference, with denominator
/// `max(|a|, |b|, floor)`.
pub fn max_rel_diff(a: &[f64], b: &[f64], floor: f64) -> f64 {
    assert_eq!(a.len(), b.len(), "max_rel_diff on different lengths");
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let denom = x.abs().max(y.abs()).max(floor);
            (x - y).abs() / denom
        })
        .fold(0.0, f64::max)
}
