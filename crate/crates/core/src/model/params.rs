//! Flat, ordered store of named parameter tensors.
//!
//! The same type doubles as the gradient container: a gradient set is a
//! `ParamSet` with identical names and shapes.

use ndarray::{ArrayView1, ArrayView2, ArrayViewMut1, ArrayViewMut2};

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    name: String,
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
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
}

/// Handle to a tensor inside a [`ParamSet`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct TensorId(pub(crate) usize);

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamSet {
    tensors: Vec<Tensor>,
}

/// Gradients with the same layout as the parameters they belong to.
pub type GradientSet = ParamSet;

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub(crate) fn push(&mut self, name: impl Into<String>, shape: Vec<usize>) -> TensorId {
        let len = shape.iter().product();
        self.tensors.push(Tensor {
            name: name.into(),
            shape,
            data: vec![0.0; len],
        });
        TensorId(self.tensors.len() - 1)
    }

    pub fn zeros_like(&self) -> Self {
        ParamSet {
            tensors: self
                .tensors
                .iter()
                .map(|t| Tensor {
                    name: t.name.clone(),
                    shape: t.shape.clone(),
                    data: vec![0.0; t.data.len()],
                })
                .collect(),
        }
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn tensor(&self, id: TensorId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn tensor_mut(&mut self, id: TensorId) -> &mut Tensor {
        &mut self.tensors[id.0]
    }

    pub fn find(&self, name: &str) -> Option<&Tensor> {
        self.tensors.iter().find(|t| t.name == name)
    }

    pub fn matrix(&self, id: TensorId) -> ArrayView2<'_, f64> {
        let t = &self.tensors[id.0];
        ArrayView2::from_shape((t.shape[0], t.shape[1]), &t.data).expect("rank-2 tensor")
    }

    pub fn matrix_mut(&mut self, id: TensorId) -> ArrayViewMut2<'_, f64> {
        let t = &mut self.tensors[id.0];
        ArrayViewMut2::from_shape((t.shape[0], t.shape[1]), &mut t.data).expect("rank-2 tensor")
    }

    pub fn vector(&self, id: TensorId) -> ArrayView1<'_, f64> {
        ArrayView1::from(&self.tensors[id.0].data[..])
    }

    pub fn vector_mut(&mut self, id: TensorId) -> ArrayViewMut1<'_, f64> {
        ArrayViewMut1::from(&mut self.tensors[id.0].data[..])
    }

    /// Total number of scalars across all tensors.
    pub fn num_scalars(&self) -> usize {
        self.tensors.iter().map(|t| t.data.len()).sum()
    }

    /// `(tensor position, offset)` of a flat scalar index.
    pub fn locate(&self, mut flat: usize) -> Option<(usize, usize)> {
        for (i, t) in self.tensors.iter().enumerate() {
            if flat < t.data.len() {
                return Some((i, flat));
            }
            flat -= t.data.len();
        }
        None
    }

    pub fn same_layout(&self, other: &ParamSet) -> bool {
        self.tensors.len() == other.tensors.len()
            && self
                .tensors
                .iter()
                .zip(&other.tensors)
                .all(|(a, b)| a.name == b.name && a.shape == b.shape)
    }

    pub fn add_assign(&mut self, other: &ParamSet) {
        debug_assert!(self.same_layout(other));
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            for (x, y) in a.data.iter_mut().zip(&b.data) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for t in &mut self.tensors {
            for x in &mut t.data {
                *x *= factor;
            }
        }
    }

    /// Name and offset of the first non-finite scalar, if any.
    pub fn first_non_finite(&self) -> Option<(String, usize)> {
        self.tensors.iter().find_map(|t| {
            t.data
                .iter()
                .position(|x| !x.is_finite())
                .map(|i| (t.name.clone(), i))
        })
    }
}
