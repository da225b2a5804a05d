use rand::Rng;

use super::DiffError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// A named dense parameter with a same-shaped gradient slot.
///
/// Weight matrices of an affine map `R^in -> R^out` have shape `[in, out]`
/// and are stored input-major: entry `j * out + i` is the weight from input
/// `j` to output `i`.
#[derive(Clone, Debug, PartialEq)]
pub struct Param {
    pub name: String,
    pub shape: Vec<usize>,
    pub value: Vec<f64>,
    pub grad: Vec<f64>,
    pub touched: bool,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    params: Vec<Param>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, shape: Vec<usize>, value: Vec<f64>) -> Result<ParamId, DiffError> {
        let name = name.into();
        let size: usize = shape.iter().product();
        if size != value.len() {
            return Err(DiffError::Shape { op: "param", expected: size, got: value.len() });
        }
        if self.params.iter().any(|p| p.name == name) {
            return Err(DiffError::DuplicateParam(name));
        }
        self.params.push(Param { name, shape, grad: vec![0.0; value.len()], value, touched: false });
        Ok(ParamId(self.params.len() - 1))
    }

    /// Weight of shape `[fan_in, fan_out]`, uniform in `±sqrt(6 / (fan_in + fan_out))`.
    pub fn add_weight<R: Rng + ?Sized>(
        &mut self,
        name: impl Into<String>,
        fan_in: usize,
        fan_out: usize,
        rng: &mut R,
    ) -> Result<ParamId, DiffError> {
        let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let value = (0..fan_in * fan_out).map(|_| rng.random_range(-bound..=bound)).collect();
        self.add(name, vec![fan_in, fan_out], value)
    }

    pub fn add_zeros(&mut self, name: impl Into<String>, len: usize) -> Result<ParamId, DiffError> {
        self.add(name, vec![len], vec![0.0; len])
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn get(&self, id: ParamId) -> &Param {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Param {
        &mut self.params[id.0]
    }

    pub fn value(&self, id: ParamId) -> &[f64] {
        &self.params[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut [f64] {
        &mut self.params[id.0].value
    }

    pub fn grad(&self, id: ParamId) -> &[f64] {
        &self.params[id.0].grad
    }

    /// Mutable gradient access; marks the parameter as touched.
    pub fn grad_mut(&mut self, id: ParamId) -> &mut [f64] {
        let p = &mut self.params[id.0];
        p.touched = true;
        &mut p.grad
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param> {
        self.params.iter()
    }

    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            p.grad.iter_mut().for_each(|g| *g = 0.0);
            p.touched = false;
        }
    }

    /// Multiplies every gradient by `factor`.
    pub fn scale_grads(&mut self, factor: f64) {
        for p in &mut self.params {
            p.grad.iter_mut().for_each(|g| *g *= factor);
        }
    }

    /// Flat copy of every parameter value, in registration order.
    pub fn flatten(&self) -> Vec<f64> {
        self.params.iter().flat_map(|p| p.value.iter().copied()).collect()
    }

    /// Flat copy of every gradient, in registration order.
    pub fn flatten_grads(&self) -> Vec<f64> {
        self.params.iter().flat_map(|p| p.grad.iter().copied()).collect()
    }

    /// Overwrites every value from a flat vector produced by [`ParamStore::flatten`].
    pub fn assign_flat(&mut self, flat: &[f64]) -> Result<(), DiffError> {
        if flat.len() != self.num_scalars() {
            return Err(DiffError::Shape { op: "assign_flat", expected: self.num_scalars(), got: flat.len() });
        }
        let mut offset = 0;
        for p in &mut self.params {
            let n = p.value.len();
            p.value.copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeding;

    #[test]
    fn glorot_bounds_and_shapes() {
        let mut s = ParamStore::new();
        let w = s.add_weight("w", 4, 8, &mut seeding::stream(0, "i", &[])).unwrap();
        let b = s.add_zeros("b", 8).unwrap();
        let bound = (6.0f64 / 12.0).sqrt();
        assert!(s.value(w).iter().all(|v| v.abs() <= bound));
        assert_eq!(s.get(w).shape, vec![4, 8]);
        assert_eq!(s.grad(b).len(), 8);
        assert_eq!(s.num_scalars(), 40);
        assert!(matches!(s.add_zeros("b", 1), Err(DiffError::DuplicateParam(_))));
        assert!(s.add("c", vec![2, 2], vec![0.0; 3]).is_err());
    }

    #[test]
    fn flatten_roundtrip() {
        let mut s = ParamStore::new();
        s.add("a", vec![2], vec![1.0, 2.0]).unwrap();
        s.add("b", vec![1], vec![3.0]).unwrap();
        let flat = s.flatten();
        s.assign_flat(&[4.0, 5.0, 6.0]).unwrap();
        assert_eq!(s.flatten(), vec![4.0, 5.0, 6.0]);
        s.assign_flat(&flat).unwrap();
        assert_eq!(s.flatten(), flat);
    }
}
