//! Flat parameter storage with named, shaped slices.

use std::ops::Range;

/// One named view into a [`ParameterVector`].
#[derive(Clone, Debug)]
pub struct Slice {
    pub name: String,
    pub range: Range<usize>,
    pub shape: Vec<usize>,
}

/// A flat array of scalars with named, disjoint, covering slices.
///
/// Used as the optimizer state for fitting and training, and as the input
/// layout for gradient checks.
#[derive(Clone, Debug)]
pub struct ParameterVector {
    data: Vec<f64>,
    slices: Vec<Slice>,
}

impl ParameterVector {
    pub fn new() -> Self {
        Self { data: Vec::new(), slices: Vec::new() }
    }

    /// Appends a named slice; returns its index.
    pub fn push(&mut self, name: &str, shape: Vec<usize>, values: Vec<f64>) -> usize {
        let expect: usize = shape.iter().product();
        assert_eq!(expect, values.len(), "slice {name}: shape/data mismatch");
        let start = self.data.len();
        self.data.extend_from_slice(&values);
        self.slices.push(Slice {
            name: name.to_string(),
            range: start..self.data.len(),
            shape,
        });
        self.slices.len() - 1
    }

    pub fn slices(&self) -> &[Slice] {
        &self.slices
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn slice_data(&self, s: &Slice) -> &[f64] {
        &self.data[s.range.clone()]
    }

    pub fn slice_index(&self, name: &str) -> Option<usize> {
        self.slices.iter().position(|s| s.name == name)
    }

    /// Named slice contents; panics if absent.
    pub fn get(&self, name: &str) -> &[f64] {
        let i = self.slice_index(name).unwrap_or_else(|| panic!("no slice named {name}"));
        &self.data[self.slices[i].range.clone()]
    }

    pub fn get_mut(&mut self, name: &str) -> &mut [f64] {
        let i = self.slice_index(name).unwrap_or_else(|| panic!("no slice named {name}"));
        let r = self.slices[i].range.clone();
        &mut self.data[r]
    }

    pub fn slice_data_mut_by_range(&mut self, r: Range<usize>) -> &mut [f64] {
        &mut self.data[r]
    }

    /// Same layout, all values zero.
    pub fn clone_zeroed(&self) -> Self {
        Self { data: vec![0.0; self.data.len()], slices: self.slices.clone() }
    }

    /// Human-readable name for a flat coordinate, e.g. `v3d[5]`.
    pub fn coord_name(&self, i: usize) -> String {
        for s in &self.slices {
            if s.range.contains(&i) {
                return format!("{}[{}]", s.name, i - s.range.start);
            }
        }
        format!("<{i}>")
    }
}

impl Default for ParameterVector {
    fn default() -> Self {
        Self::new()
    }
}
