//! Dense f64 tensor with a small shape vector.

/// Row-major dense tensor of `f64` values.
///
/// Shapes follow the conventions used throughout the crate: maps are
/// `[channels, height, width]`, point sets are `[n, dim]`, scalars are `[]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Self {
        let expect: usize = shape.iter().product();
        assert_eq!(expect, data.len(), "shape {shape:?} does not match data length {}", data.len());
        Self { shape, data }
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n: usize = shape.iter().product();
        Self { shape, data: vec![0.0; n] }
    }

    pub fn full(shape: Vec<usize>, value: f64) -> Self {
        let n: usize = shape.iter().product();
        Self { shape, data: vec![value; n] }
    }

    pub fn scalar(v: f64) -> Self {
        Self { shape: vec![], data: vec![v] }
    }

    pub fn from_vec(data: Vec<f64>) -> Self {
        Self { shape: vec![data.len()], data }
    }

    /// Flattens `[n, 3]`-style point rows into a tensor.
    pub fn from_rows3(rows: &[[f64; 3]]) -> Self {
        let mut data = Vec::with_capacity(rows.len() * 3);
        for r in rows {
            data.extend_from_slice(r);
        }
        Self { shape: vec![rows.len(), 3], data }
    }

    pub fn from_rows2(rows: &[[f64; 2]]) -> Self {
        let mut data = Vec::with_capacity(rows.len() * 2);
        for r in rows {
            data.extend_from_slice(r);
        }
        Self { shape: vec![rows.len(), 2], data }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Value of a zero-dimensional (scalar) tensor.
    pub fn item(&self) -> f64 {
        debug_assert_eq!(self.data.len(), 1, "item() on non-scalar tensor");
        self.data[0]
    }

    pub fn row3(&self, i: usize) -> [f64; 3] {
        let o = i * 3;
        [self.data[o], self.data[o + 1], self.data[o + 2]]
    }

    pub fn row2(&self, i: usize) -> [f64; 2] {
        let o = i * 2;
        [self.data[o], self.data[o + 1]]
    }

    pub fn add_row3(&mut self, i: usize, v: [f64; 3]) {
        let o = i * 3;
        self.data[o] += v[0];
        self.data[o + 1] += v[1];
        self.data[o + 2] += v[2];
    }

    pub fn add_row2(&mut self, i: usize, v: [f64; 2]) {
        let o = i * 2;
        self.data[o] += v[0];
        self.data[o + 1] += v[1];
    }

    /// Index into a `[c, h, w]` map tensor.
    #[inline]
    pub fn idx3(&self, c: usize, y: usize, x: usize) -> usize {
        let h = self.shape[1];
        let w = self.shape[2];
        (c * h + y) * w + x
    }

    pub fn has_non_finite(&self) -> bool {
        self.data.iter().any(|v| !v.is_finite())
    }
}
