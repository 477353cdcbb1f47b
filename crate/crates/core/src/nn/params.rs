use std::collections::HashSet;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

/// One named block of a [`ParamVector`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub name: String,
    pub shape: Vec<usize>,
}

impl Segment {
    pub fn new(name: impl Into<String>, shape: Vec<usize>) -> Self {
        Self {
            name: name.into(),
            shape,
        }
    }

    pub fn size(&self) -> usize {
        self.shape.iter().product()
    }
}

/// Flat parameter storage with a named segment layout.
///
/// Gradients share the layout of the parameters they belong to, so the
/// optimizer and the checkpoint code only ever see flat slices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamVector {
    layout: Vec<Segment>,
    values: Vec<f64>,
}

impl ParamVector {
    pub fn zeros(layout: Vec<Segment>) -> Result<Self> {
        let len = validate_layout(&layout)?;
        Ok(Self {
            layout,
            values: vec![0.0; len],
        })
    }

    pub fn from_values(layout: Vec<Segment>, values: Vec<f64>) -> Result<Self> {
        let len = validate_layout(&layout)?;
        check_len("ParamVector::from_values", len, values.len())?;
        Ok(Self { layout, values })
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            layout: self.layout.clone(),
            values: vec![0.0; self.values.len()],
        }
    }

    pub fn layout(&self) -> &[Segment] {
        &self.layout
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Index range of a segment inside the flat vector.
    pub fn range_of(&self, name: &str) -> Option<Range<usize>> {
        let mut offset = 0;
        for seg in &self.layout {
            let size = seg.size();
            if seg.name == name {
                return Some(offset..offset + size);
            }
            offset += size;
        }
        None
    }

    /// Ranges of every segment, in layout order.
    pub fn segment_ranges(&self) -> Vec<(String, Range<usize>)> {
        let mut offset = 0;
        self.layout
            .iter()
            .map(|seg| {
                let r = offset..offset + seg.size();
                offset = r.end;
                (seg.name.clone(), r)
            })
            .collect()
    }

    pub fn segment(&self, name: &str) -> Option<&[f64]> {
        self.range_of(name).map(|r| &self.values[r])
    }

    pub fn segment_mut(&mut self, name: &str) -> Option<&mut [f64]> {
        self.range_of(name).map(move |r| &mut self.values[r])
    }

    pub fn same_layout(&self, other: &ParamVector) -> bool {
        self.layout == other.layout
    }

    /// Concatenates several vectors, prefixing each segment name.
    pub fn concat(parts: &[(&str, &ParamVector)]) -> Result<Self> {
        let mut layout = Vec::new();
        let mut values = Vec::new();
        for (prefix, part) in parts {
            for seg in &part.layout {
                layout.push(Segment::new(format!("{prefix}.{}", seg.name), seg.shape.clone()));
            }
            values.extend_from_slice(&part.values);
        }
        Self::from_values(layout, values)
    }

    /// Extracts every segment whose name starts with `prefix.`, stripping the prefix.
    pub fn extract(&self, prefix: &str) -> Result<Self> {
        let head = format!("{prefix}.");
        let mut layout = Vec::new();
        let mut values = Vec::new();
        for (seg, (_, range)) in self.layout.iter().zip(self.segment_ranges()) {
            if let Some(rest) = seg.name.strip_prefix(&head) {
                layout.push(Segment::new(rest, seg.shape.clone()));
                values.extend_from_slice(&self.values[range]);
            }
        }
        if layout.is_empty() {
            return Err(Error::Checkpoint(format!("no segments with prefix `{prefix}`")));
        }
        Self::from_values(layout, values)
    }

    pub fn l2_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn scale(&mut self, factor: f64) {
        self.values.iter_mut().for_each(|v| *v *= factor);
    }

    /// Elementwise `self += other`; layouts must agree.
    pub fn add_assign(&mut self, other: &ParamVector) -> Result<()> {
        check_len("ParamVector::add_assign", self.len(), other.len())?;
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += b;
        }
        Ok(())
    }

    pub fn first_non_finite(&self) -> Option<(String, usize, f64)> {
        for (name, range) in self.segment_ranges() {
            for (i, v) in self.values[range].iter().enumerate() {
                if !v.is_finite() {
                    return Some((name, i, *v));
                }
            }
        }
        None
    }
}

fn validate_layout(layout: &[Segment]) -> Result<usize> {
    let mut seen = HashSet::new();
    for seg in layout {
        if !seen.insert(seg.name.as_str()) {
            return Err(Error::InvalidArgument(format!(
                "duplicate parameter segment `{}`",
                seg.name
            )));
        }
    }
    Ok(layout.iter().map(Segment::size).sum())
}
