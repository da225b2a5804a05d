use super::{CovariateSchema, CovariateVector, SimError};

/// Weighted sum of the Jaccard distance over the indicator block and the mean
/// absolute difference over the continuous block, each weighted by its share
/// of the `p` coordinates.
///
/// Two all-zero indicator blocks are at Jaccard distance 0.
pub fn mixed_distance(
    a: &CovariateVector,
    b: &CovariateVector,
    schema: &CovariateSchema,
) -> Result<f64, SimError> {
    for v in [a, b] {
        if v.len() != schema.p {
            return Err(SimError::Dimension { expected: schema.p, got: v.len() });
        }
    }
    Ok(mixed_distance_unchecked(a.as_slice(), b.as_slice(), schema))
}

pub(crate) fn mixed_distance_unchecked(a: &[f64], b: &[f64], schema: &CovariateSchema) -> f64 {
    let p = schema.p as f64;
    let mut total = 0.0;
    if !schema.discrete.is_empty() {
        let (mut inter, mut union) = (0usize, 0usize);
        for &i in &schema.discrete {
            let (x, y) = (a[i] != 0.0, b[i] != 0.0);
            inter += usize::from(x && y);
            union += usize::from(x || y);
        }
        let jaccard = if union == 0 { 0.0 } else { 1.0 - inter as f64 / union as f64 };
        total += schema.discrete.len() as f64 / p * jaccard;
    }
    if !schema.continuous.is_empty() {
        let sum: f64 = schema.continuous.iter().map(|&i| (a[i] - b[i]).abs()).sum();
        let mean = sum / schema.continuous.len() as f64;
        total += schema.continuous.len() as f64 / p * mean;
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeding;
    use crate::simcore::gen_covariates;
    use proptest::prelude::*;

    fn toy_schema() -> CovariateSchema {
        CovariateSchema::with_blocks(vec![0.5, 0.5], vec![(0.0, 3.0), (0.0, 3.0)]).unwrap()
    }

    /// Straight-line re-statement of the formula used as an oracle.
    fn reference(a: &[f64], b: &[f64], nd: usize) -> f64 {
        let p = a.len() as f64;
        let nc = a.len() - nd;
        let ones = |v: &[f64]| -> Vec<usize> { (0..nd).filter(|&i| v[i] == 1.0).collect() };
        let (sa, sb) = (ones(a), ones(b));
        let inter = sa.iter().filter(|i| sb.contains(i)).count() as f64;
        let union = (sa.len() + sb.len()) as f64 - inter;
        let jac = if union == 0.0 { 0.0 } else { 1.0 - inter / union };
        let mut abs = 0.0;
        for i in nd..a.len() {
            abs += (a[i] - b[i]).abs();
        }
        let cont = if nc == 0 { 0.0 } else { abs / nc as f64 };
        nd as f64 / p * jac + nc as f64 / p * cont
    }

    #[test]
    fn hand_evaluated_example() {
        let s = toy_schema();
        let a = CovariateVector(vec![1.0, 0.0, 0.5, 1.0]);
        let b = CovariateVector(vec![1.0, 1.0, 0.5, 2.0]);
        let d = mixed_distance(&a, &b, &s).unwrap();
        assert!((d - 0.5).abs() < 1e-15);
        assert!((d - reference(&a.0, &b.0, 2)).abs() < 1e-15);
    }

    #[test]
    fn disjoint_indicator_sets() {
        let s = toy_schema();
        let a = CovariateVector(vec![1.0, 0.0, 0.7, 0.2]);
        let b = CovariateVector(vec![0.0, 1.0, 0.7, 0.2]);
        assert_eq!(mixed_distance(&a, &b, &s).unwrap(), 2.0 / 4.0 * 1.0);
    }

    #[test]
    fn empty_indicator_sets_have_zero_jaccard() {
        let s = toy_schema();
        let a = CovariateVector(vec![0.0, 0.0, 1.0, 1.0]);
        assert_eq!(mixed_distance(&a, &a, &s).unwrap(), 0.0);
    }

    #[test]
    fn dimension_mismatch() {
        let s = toy_schema();
        let a = CovariateVector(vec![0.0; 3]);
        assert!(matches!(mixed_distance(&a, &a, &s), Err(SimError::Dimension { .. })));
    }

    proptest! {
        #[test]
        fn distance_axioms(seed in any::<u64>()) {
            let s = CovariateSchema::hiv_default();
            let xs = gen_covariates(&s, 2, &mut seeding::stream(seed, "p", &[])).unwrap();
            let (a, b) = (&xs[0], &xs[1]);
            let dab = mixed_distance(a, b, &s).unwrap();
            prop_assert_eq!(mixed_distance(a, a, &s).unwrap(), 0.0);
            prop_assert_eq!(dab, mixed_distance(b, a, &s).unwrap());
            let upper = s.discrete.len() as f64 / s.p as f64
                + s.continuous.len() as f64 / s.p as f64 * s.max_range_width();
            prop_assert!((0.0..=upper).contains(&dab));
            prop_assert!((dab - reference(&a.0, &b.0, 24)).abs() < 1e-12);
        }
    }
}
