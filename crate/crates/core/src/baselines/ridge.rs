use serde::{Deserialize, Serialize};

use super::BaselineError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RidgeModel {
    pub coef: Vec<f64>,
    pub intercept: f64,
}

impl RidgeModel {
    pub fn predict(&self, x: &[f64]) -> f64 {
        self.intercept + self.coef.iter().zip(x).map(|(b, v)| b * v).sum::<f64>()
    }
}

/// In-place Cholesky factorisation of a symmetric positive definite matrix
/// (row-major, `n x n`); the lower triangle receives `L`.
fn cholesky(a: &mut [f64], n: usize) -> Result<(), BaselineError> {
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d -= a[j * n + k] * a[j * n + k];
        }
        if !(d > 0.0) {
            return Err(BaselineError::Config(format!("Gram matrix is not positive definite (pivot {j})")));
        }
        let d = d.sqrt();
        a[j * n + j] = d;
        for i in j + 1..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = s / d;
        }
    }
    Ok(())
}

fn cholesky_solve(l: &[f64], n: usize, b: &mut [f64]) {
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * n + k] * b[k];
        }
        b[i] = s / l[i * n + i];
    }
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in i + 1..n {
            s -= l[k * n + i] * b[k];
        }
        b[i] = s / l[i * n + i];
    }
}

/// Solves `(Xc'Xc + C I) beta = Xc'yc` on mean-centred data; the intercept
/// is `mean(y) - beta . mean(X)`.
pub fn ridge_fit(xs: &[&[f64]], y: &[f64], c: f64) -> Result<RidgeModel, BaselineError> {
    let m = xs.len();
    if m == 0 {
        return Err(BaselineError::Empty);
    }
    if y.len() != m {
        return Err(BaselineError::Dimension { expected: m, got: y.len() });
    }
    if !(c > 0.0) || !c.is_finite() {
        return Err(BaselineError::Config(format!("regularisation C must be positive, got {c}")));
    }
    let p = xs[0].len();
    if let Some(row) = xs.iter().find(|r| r.len() != p) {
        return Err(BaselineError::Dimension { expected: p, got: row.len() });
    }
    let mut x_mean = vec![0.0; p];
    for row in xs {
        x_mean.iter_mut().zip(row.iter()).for_each(|(a, v)| *a += v);
    }
    x_mean.iter_mut().for_each(|a| *a /= m as f64);
    let y_mean = y.iter().sum::<f64>() / m as f64;

    let mut gram = vec![0.0; p * p];
    let mut rhs = vec![0.0; p];
    let mut centred = vec![0.0; p];
    for (row, &yi) in xs.iter().zip(y) {
        centred.iter_mut().zip(row.iter()).zip(&x_mean).for_each(|((c, v), mu)| *c = v - mu);
        let yc = yi - y_mean;
        for a in 0..p {
            rhs[a] += centred[a] * yc;
            for b in 0..=a {
                gram[a * p + b] += centred[a] * centred[b];
            }
        }
    }
    for a in 0..p {
        gram[a * p + a] += c;
        for b in 0..a {
            gram[b * p + a] = gram[a * p + b];
        }
    }
    cholesky(&mut gram, p)?;
    cholesky_solve(&gram, p, &mut rhs);
    let intercept = y_mean - rhs.iter().zip(&x_mean).map(|(b, mu)| b * mu).sum::<f64>();
    Ok(RidgeModel { coef: rhs, intercept })
}
