use rand::Rng;
use serde::{Deserialize, Serialize};

use super::SimError;

/// Typed layout of a covariate vector.
///
/// Coordinates listed in `discrete` are 0/1 indicators drawn as independent
/// Bernoulli variables with the matching entry of `rates`; coordinates listed
/// in `continuous` are uniform over the matching entry of `ranges`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CovariateSchema {
    pub p: usize,
    pub discrete: Vec<usize>,
    pub continuous: Vec<usize>,
    pub rates: Vec<f64>,
    pub ranges: Vec<(f64, f64)>,
}

#[derive(Clone, Copy, Debug)]
enum Feature {
    Indicator(f64),
    Uniform(f64, f64),
}

impl CovariateSchema {
    pub fn new(
        p: usize,
        discrete: Vec<usize>,
        continuous: Vec<usize>,
        rates: Vec<f64>,
        ranges: Vec<(f64, f64)>,
    ) -> Result<Self, SimError> {
        let schema = Self { p, discrete, continuous, rates, ranges };
        schema.validate()?;
        Ok(schema)
    }

    /// Discrete indicators first, then continuous features.
    pub fn with_blocks(rates: Vec<f64>, ranges: Vec<(f64, f64)>) -> Result<Self, SimError> {
        let nd = rates.len();
        let nc = ranges.len();
        Self::new(nd + nc, (0..nd).collect(), (nd..nd + nc).collect(), rates, ranges)
    }

    /// Default 32-feature layout loosely shaped after HIV cohort baselines:
    /// 24 indicators (sex, ethnicity, risk group, AIDS status, treatment
    /// history, resistance mutations) followed by 8 continuous features
    /// (age, CD4 count, log viral load, ...) min-max scaled to [0, 1].
    pub fn hiv_default() -> Self {
        let rates = vec![
            0.72, 0.18, 0.12, 0.08, // sex, ethnicity
            0.38, 0.17, 0.31, 0.06, // risk groups
            0.24, 0.61, 0.44, 0.29, // AIDS status, prior lines
            0.33, 0.21, 0.15, 0.27, // NRTI mutations
            0.19, 0.11, 0.23, 0.09, // NNRTI mutations
            0.14, 0.07, 0.12, 0.05, // PI mutations
        ];
        let ranges = vec![(0.0, 1.0); 8];
        Self::with_blocks(rates, ranges).expect("default schema is valid")
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let err = |m: String| Err(SimError::Schema(m));
        if self.p == 0 {
            return err("p must be positive".into());
        }
        if self.discrete.len() + self.continuous.len() != self.p {
            return err(format!(
                "{} discrete + {} continuous indices do not cover p={}",
                self.discrete.len(),
                self.continuous.len(),
                self.p
            ));
        }
        if self.rates.len() != self.discrete.len() {
            return err("one Bernoulli rate per discrete index required".into());
        }
        if self.ranges.len() != self.continuous.len() {
            return err("one range per continuous index required".into());
        }
        let mut seen = vec![false; self.p];
        for &i in self.discrete.iter().chain(&self.continuous) {
            if i >= self.p {
                return err(format!("index {i} outside 0..{}", self.p));
            }
            if seen[i] {
                return err(format!("index {i} listed twice"));
            }
            seen[i] = true;
        }
        if let Some(r) = self.rates.iter().find(|r| !(0.0..=1.0).contains(*r)) {
            return err(format!("rate {r} outside [0, 1]"));
        }
        if let Some((lo, hi)) = self.ranges.iter().find(|(lo, hi)| !(lo < hi) || !lo.is_finite() || !hi.is_finite()) {
            return err(format!("range ({lo}, {hi}) must satisfy min < max"));
        }
        Ok(())
    }

    fn features(&self) -> Vec<Feature> {
        let mut out = vec![Feature::Indicator(0.0); self.p];
        for (&i, &r) in self.discrete.iter().zip(&self.rates) {
            out[i] = Feature::Indicator(r);
        }
        for (&i, &(lo, hi)) in self.continuous.iter().zip(&self.ranges) {
            out[i] = Feature::Uniform(lo, hi);
        }
        out
    }

    /// Widest continuous range, zero when there are no continuous features.
    pub fn max_range_width(&self) -> f64 {
        self.ranges.iter().map(|(lo, hi)| hi - lo).fold(0.0, f64::max)
    }
}

/// A unit's pre-treatment covariates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CovariateVector(pub Vec<f64>);

impl CovariateVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn conforms(&self, schema: &CovariateSchema) -> Result<(), SimError> {
        if self.0.len() != schema.p {
            return Err(SimError::Dimension { expected: schema.p, got: self.0.len() });
        }
        for &i in &schema.discrete {
            let v = self.0[i];
            if v != 0.0 && v != 1.0 {
                return Err(SimError::Schema(format!("discrete coordinate {i} = {v} not in {{0, 1}}")));
            }
        }
        for (&i, &(lo, hi)) in schema.continuous.iter().zip(&schema.ranges) {
            let v = self.0[i];
            if !(lo..=hi).contains(&v) {
                return Err(SimError::Schema(format!("continuous coordinate {i} = {v} outside [{lo}, {hi}]")));
            }
        }
        Ok(())
    }
}

/// Draws `n` independent covariate vectors from `schema`.
pub fn gen_covariates<R: Rng + ?Sized>(
    schema: &CovariateSchema,
    n: usize,
    rng: &mut R,
) -> Result<Vec<CovariateVector>, SimError> {
    schema.validate()?;
    if n == 0 {
        return Err(SimError::Config("n must be at least 1".into()));
    }
    let features = schema.features();
    let out = (0..n)
        .map(|_| {
            let values = features
                .iter()
                .map(|f| match *f {
                    Feature::Indicator(rate) => {
                        if rng.random::<f64>() < rate {
                            1.0
                        } else {
                            0.0
                        }
                    }
                    Feature::Uniform(lo, hi) => rng.random_range(lo..hi),
                })
                .collect();
            CovariateVector(values)
        })
        .collect();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeding;
    use crate::simcore::{VIRAL_LOAD_MAX, VIRAL_LOAD_MIN};

    #[test]
    fn degenerate_rate_gives_constant_indicator() {
        let schema = CovariateSchema::with_blocks(vec![1.0], vec![]).unwrap();
        let xs = gen_covariates(&schema, 3, &mut seeding::stream(1, "t", &[])).unwrap();
        assert!(xs.iter().all(|x| x.0 == vec![1.0]));
    }

    #[test]
    fn continuous_stays_in_viral_load_bounds() {
        let schema = CovariateSchema::with_blocks(vec![], vec![(VIRAL_LOAD_MIN, VIRAL_LOAD_MAX)]).unwrap();
        let xs = gen_covariates(&schema, 1000, &mut seeding::stream(2, "t", &[])).unwrap();
        let min = xs.iter().map(|x| x.0[0]).fold(f64::INFINITY, f64::min);
        let max = xs.iter().map(|x| x.0[0]).fold(f64::NEG_INFINITY, f64::max);
        assert!(min >= VIRAL_LOAD_MIN && max <= VIRAL_LOAD_MAX);
    }

    #[test]
    fn same_seed_same_covariates() {
        let schema = CovariateSchema::hiv_default();
        let a = gen_covariates(&schema, 50, &mut seeding::stream(3, "t", &[])).unwrap();
        let b = gen_covariates(&schema, 50, &mut seeding::stream(3, "t", &[])).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().all(|x| x.conforms(&schema).is_ok()));
    }

    #[test]
    fn invalid_schemas_rejected() {
        assert!(CovariateSchema::new(2, vec![0], vec![0], vec![0.5], vec![(0.0, 1.0)]).is_err());
        assert!(CovariateSchema::new(2, vec![0], vec![1], vec![1.5], vec![(0.0, 1.0)]).is_err());
        assert!(CovariateSchema::new(2, vec![0], vec![1], vec![0.5], vec![(1.0, 1.0)]).is_err());
        assert!(CovariateSchema::new(3, vec![0], vec![1], vec![0.5], vec![(0.0, 1.0)]).is_err());
        let bad = CovariateSchema { p: 1, discrete: vec![0], continuous: vec![], rates: vec![-0.1], ranges: vec![] };
        assert!(gen_covariates(&bad, 1, &mut seeding::stream(0, "t", &[])).is_err());
    }

    #[test]
    fn default_schema_shape() {
        let s = CovariateSchema::hiv_default();
        assert_eq!((s.p, s.discrete.len(), s.continuous.len()), (32, 24, 8));
    }
}
