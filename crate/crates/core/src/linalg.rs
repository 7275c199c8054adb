//! Small dense-vector helpers used across estimators.

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn norm_sq(a: &[f64]) -> f64 {
    dot(a, a)
}

/// `y += alpha * x`
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn scale(alpha: f64, x: &mut [f64]) {
    x.iter_mut().for_each(|v| *v *= alpha);
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn all_finite(a: &[f64]) -> bool {
    a.iter().all(|v| v.is_finite())
}

/// Pairwise (tree-ordered) sum of equal-length vectors. The reduction order
/// depends only on the number of inputs, so results are reproducible no
/// matter how the inputs were produced.
pub fn pairwise_sum(vectors: &[Vec<f64>]) -> Option<Vec<f64>> {
    match vectors.len() {
        0 => None,
        1 => Some(vectors[0].clone()),
        n => {
            let (left, right) = vectors.split_at(n / 2);
            let mut l = pairwise_sum(left)?;
            let r = pairwise_sum(right)?;
            l.iter_mut().zip(&r).for_each(|(a, b)| *a += b);
            Some(l)
        }
    }
}

/// Pairwise mean; see [`pairwise_sum`].
pub fn pairwise_mean(vectors: &[Vec<f64>]) -> Option<Vec<f64>> {
    let mut s = pairwise_sum(vectors)?;
    scale(1.0 / vectors.len() as f64, &mut s);
    Some(s)
}

pub fn pairwise_sum_scalars(values: &[f64]) -> f64 {
    match values.len() {
        0 => 0.0,
        1 => values[0],
        n => {
            let (l, r) = values.split_at(n / 2);
            pairwise_sum_scalars(l) + pairwise_sum_scalars(r)
        }
    }
}

/// Log of the sum of exponentials, stable for large magnitudes.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}
