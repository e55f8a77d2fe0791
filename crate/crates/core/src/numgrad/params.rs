use rand::Rng;

use super::{NumError, Tensor2D};

/// Handle to one named tensor inside a [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Flat, ordered store of named parameter tensors.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Tensor2D>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor2D) -> ParamId {
        self.names.push(name.into());
        self.values.push(value);
        ParamId(self.values.len() - 1)
    }

    /// Adds a tensor initialised uniformly in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`.
    pub fn add_uniform<R: Rng + ?Sized>(
        &mut self,
        name: impl Into<String>,
        rows: usize,
        cols: usize,
        fan_in: usize,
        rng: &mut R,
    ) -> ParamId {
        let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
        let data = (0..rows * cols)
            .map(|_| rng.gen_range(-bound..=bound))
            .collect();
        self.add(name, Tensor2D::from_vec(rows, cols, data).expect("sized buffer"))
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Tensor2D {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor2D {
        &mut self.values[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn id_of(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &str, &Tensor2D)> {
        self.names
            .iter()
            .zip(&self.values)
            .enumerate()
            .map(|(i, (n, v))| (ParamId(i), n.as_str(), v))
    }

    pub fn scalar_count(&self) -> usize {
        self.values.iter().map(Tensor2D::len).sum()
    }

    /// Replaces a parameter's value, keeping its shape.
    pub fn set(&mut self, id: ParamId, value: Tensor2D) -> Result<(), NumError> {
        if value.shape() != self.values[id.0].shape() {
            return Err(NumError::Shape(format!(
                "parameter {} has shape {:?}, got {:?}",
                self.names[id.0],
                self.values[id.0].shape(),
                value.shape()
            )));
        }
        self.values[id.0] = value;
        Ok(())
    }
}

/// Gradient slots aligned with a [`ParamStore`].
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    grads: Vec<Tensor2D>,
}

impl Gradients {
    pub fn zeros_like(store: &ParamStore) -> Self {
        Self {
            grads: store
                .values
                .iter()
                .map(|t| Tensor2D::zeros(t.rows(), t.cols()))
                .collect(),
        }
    }

    pub fn get(&self, id: ParamId) -> &Tensor2D {
        &self.grads[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor2D {
        &mut self.grads[id.0]
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.grads.iter().all(Tensor2D::is_finite)
    }

    pub fn global_norm(&self, ids: &[ParamId]) -> f64 {
        ids.iter()
            .map(|id| self.grads[id.0].sq_norm())
            .sum::<f64>()
            .sqrt()
    }

    /// Rescales the listed gradients so their joint L2 norm is at most `max_norm`.
    /// Returns the norm before clipping.
    pub fn clip_global_norm(&mut self, ids: &[ParamId], max_norm: f64) -> f64 {
        let norm = self.global_norm(ids);
        if norm > max_norm && norm > 0.0 {
            let k = max_norm / norm;
            for id in ids {
                self.grads[id.0].scale_assign(k);
            }
        }
        norm
    }
}

impl Gradients {
    /// Adds `other` slot by slot.
    pub fn accumulate(&mut self, other: &Gradients) {
        for (a, b) in self.grads.iter_mut().zip(&other.grads) {
            a.add_assign(b);
        }
    }
}
