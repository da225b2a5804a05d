use nalgebra::{DMatrix, SymmetricEigen};

use super::MatchError;
use crate::diffcore::{Checkpoint, ParamStore};

/// Mean-centred projection onto the leading principal axes.
#[derive(Clone, Debug, PartialEq)]
pub struct BalancingProjector {
    mean: Vec<f64>,
    /// `D` rows of length `p`, orthonormal, by descending variance.
    components: Vec<Vec<f64>>,
    variances: Vec<f64>,
}

/// Fits the top-`d` principal components of the rows of `xs`.
///
/// Components come from the eigendecomposition of the sample covariance and
/// are signed so that their largest-magnitude entry is positive.
pub fn fit_projector(xs: &[&[f64]], d: usize) -> Result<BalancingProjector, MatchError> {
    let n = xs.len();
    if n < 2 {
        return Err(MatchError::Config(format!("at least 2 rows, got {n}")));
    }
    let p = xs[0].len();
    if d == 0 || d > p {
        return Err(MatchError::Config(format!("1 <= D <= p = {p}, got D = {d}")));
    }
    if let Some(row) = xs.iter().find(|r| r.len() != p) {
        return Err(MatchError::Dimension { expected: p, got: row.len() });
    }
    let mut mean = vec![0.0; p];
    for row in xs {
        for (m, v) in mean.iter_mut().zip(row.iter()) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let centred = DMatrix::from_fn(n, p, |i, j| xs[i][j] - mean[j]);
    let cov = centred.transpose() * &centred / (n as f64 - 1.0);
    let trace = cov.trace();
    if !(trace > 1e-12) {
        return Err(MatchError::Degenerate);
    }
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let mut components = Vec::with_capacity(d);
    let mut variances = Vec::with_capacity(d);
    for &c in order.iter().take(d) {
        let mut v: Vec<f64> = eig.eigenvectors.column(c).iter().copied().collect();
        let lead = v.iter().copied().fold(0.0f64, |acc, x| if x.abs() > acc.abs() { x } else { acc });
        if lead < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        components.push(v);
        variances.push(eig.eigenvalues[c].max(0.0));
    }
    Ok(BalancingProjector { mean, components, variances })
}

impl BalancingProjector {
    /// Builds a projector from explicit parts; rows must be orthonormal.
    pub fn from_parts(mean: Vec<f64>, components: Vec<Vec<f64>>) -> Result<Self, MatchError> {
        let p = mean.len();
        if components.is_empty() || components.len() > p {
            return Err(MatchError::Config(format!("1 <= D <= p = {p}, got D = {}", components.len())));
        }
        for (i, a) in components.iter().enumerate() {
            if a.len() != p {
                return Err(MatchError::Dimension { expected: p, got: a.len() });
            }
            for (j, b) in components.iter().enumerate() {
                let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
                let want = if i == j { 1.0 } else { 0.0 };
                if (dot - want).abs() > 1e-8 {
                    return Err(MatchError::Config(format!("orthonormal rows (row {i}.row {j} = {dot})")));
                }
            }
        }
        let variances = vec![f64::NAN; components.len()];
        Ok(Self { mean, components, variances })
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn input_dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn components(&self) -> &[Vec<f64>] {
        &self.components
    }

    /// Explained variance per component (NaN for projectors built from parts).
    pub fn variances(&self) -> &[f64] {
        &self.variances
    }

    pub fn project(&self, x: &[f64]) -> Result<Vec<f64>, MatchError> {
        if x.len() != self.mean.len() {
            return Err(MatchError::Dimension { expected: self.mean.len(), got: x.len() });
        }
        Ok(self
            .components
            .iter()
            .map(|c| c.iter().zip(x).zip(&self.mean).map(|((w, v), m)| w * (v - m)).sum())
            .collect())
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut store = ParamStore::new();
        let (d, p) = (self.dim(), self.input_dim());
        store.add("projector.mean", vec![p], self.mean.clone()).expect("fresh store");
        store.add("projector.components", vec![d, p], self.components.concat()).expect("fresh store");
        Checkpoint::from_store(&store)
    }

    pub fn from_checkpoint(checkpoint: &Checkpoint) -> Result<Self, MatchError> {
        let store = checkpoint.to_store().map_err(|e| MatchError::Checkpoint(e.to_string()))?;
        let get = |name: &str| store.id(name).map(|id| store.get(id)).ok_or_else(|| MatchError::Checkpoint(format!("missing {name}")));
        let mean = get("projector.mean")?.value.clone();
        let comps = get("projector.components")?;
        let [_, p] = comps.shape[..] else {
            return Err(MatchError::Checkpoint("components must be two-dimensional".into()));
        };
        if p != mean.len() {
            return Err(MatchError::Dimension { expected: mean.len(), got: p });
        }
        Self::from_parts(mean, comps.value.chunks(p).map(<[f64]>::to_vec).collect())
    }
}
