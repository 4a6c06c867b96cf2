use super::layer::{sigmoid, softmax_rows};
use super::Real;

/// Clamp applied to probabilities inside logarithms.
pub const LOG_EPS: f64 = 1e-7;

fn clamp<T: Real>(p: T) -> T {
    let eps = T::lit(LOG_EPS);
    p.max(eps).min(T::one() - eps)
}

/// Mean binary cross-entropy and its gradient with respect to `p`.
pub fn binary_crossentropy<T: Real>(p: &[T], target: &[T]) -> (T, Vec<T>) {
    assert_eq!(p.len(), target.len());
    if p.is_empty() {
        return (T::zero(), Vec::new());
    }
    let n = T::lit(p.len() as f64);
    let mut loss = T::zero();
    let grad = p
        .iter()
        .zip(target)
        .map(|(&p, &t)| {
            let q = clamp(p);
            loss -= t * q.ln() + (T::one() - t) * (T::one() - q).ln();
            (q - t) / (q * (T::one() - q)) / n
        })
        .collect();
    (loss / n, grad)
}

/// Binary cross-entropy of `sigmoid(z)`; the gradient is taken with
/// respect to the logits, `(sigmoid(z) - target) / N`.
pub fn bce_with_logits<T: Real>(z: &[T], target: &[T]) -> (T, Vec<T>) {
    assert_eq!(z.len(), target.len());
    if z.is_empty() {
        return (T::zero(), Vec::new());
    }
    let n = T::lit(z.len() as f64);
    let mut loss = T::zero();
    let grad = z
        .iter()
        .zip(target)
        .map(|(&z, &t)| {
            let p = sigmoid(z);
            let q = clamp(p);
            loss -= t * q.ln() + (T::one() - t) * (T::one() - q).ln();
            (p - t) / n
        })
        .collect();
    (loss / n, grad)
}

/// `-(1/N) Σ p* log p` over `N = p.len() / classes` rows.
pub fn categorical_crossentropy<T: Real>(p: &[T], target: &[T], classes: usize) -> T {
    assert_eq!(p.len(), target.len());
    let rows = p.len() / classes;
    if rows == 0 {
        return T::zero();
    }
    let mut loss = T::zero();
    for (&p, &t) in p.iter().zip(target) {
        if t != T::zero() {
            loss -= t * clamp(p).ln();
        }
    }
    loss / T::lit(rows as f64)
}

/// Softmax followed by categorical cross-entropy against integer labels.
/// Returns the loss, the probabilities, and the logit gradient
/// `(softmax - onehot) / N`.
pub fn softmax_cross_entropy<T: Real>(
    logits: &[T],
    classes: usize,
    labels: &[usize],
) -> (T, Vec<T>, Vec<T>) {
    assert_eq!(logits.len(), labels.len() * classes);
    let p = softmax_rows(logits, classes);
    if labels.is_empty() {
        return (T::zero(), p, Vec::new());
    }
    let n = T::lit(labels.len() as f64);
    let mut loss = T::zero();
    let mut grad = p.clone();
    for (r, &label) in labels.iter().enumerate() {
        loss -= clamp(p[r * classes + label]).ln();
        grad[r * classes + label] -= T::one();
    }
    grad.iter_mut().for_each(|g| *g /= n);
    (loss / n, p, grad)
}

/// Summed smooth L1: `0.5 d²` for `|d| < 1`, else `|d| - 0.5`.
pub fn smooth_l1<T: Real>(t: &[T], t_star: &[T]) -> (T, Vec<T>) {
    assert_eq!(t.len(), t_star.len());
    let half = T::lit(0.5);
    let mut loss = T::zero();
    let grad = t
        .iter()
        .zip(t_star)
        .map(|(&a, &b)| {
            let d = a - b;
            if d.abs() < T::one() {
                loss += half * d * d;
                d
            } else {
                loss += d.abs() - half;
                d.signum()
            }
        })
        .collect();
    (loss, grad)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bce_examples() {
        assert!(binary_crossentropy(&[1.0f64], &[1.0]).0 < 1e-6);
        let (l, _) = binary_crossentropy(&[0.5f64, 0.5], &[1.0, 0.0]);
        assert!((l - std::f64::consts::LN_2).abs() < 1e-12);
        let (l, _) = bce_with_logits(&[0.0f64], &[1.0]);
        assert!((l - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn bce_gradient_formula() {
        let p = [0.3f64, 0.8];
        let t = [1.0, 0.0];
        let (_, g) = binary_crossentropy(&p, &t);
        for i in 0..2 {
            let h = 1e-6;
            let mut a = p;
            let mut b = p;
            a[i] += h;
            b[i] -= h;
            let num = (binary_crossentropy(&a, &t).0 - binary_crossentropy(&b, &t).0) / (2.0 * h);
            assert!((num - g[i]).abs() < 1e-6 * g[i].abs().max(1.0));
            assert!((g[i] - (p[i] - t[i]) / (p[i] * (1.0 - p[i])) / 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn cce_examples() {
        assert!(categorical_crossentropy(&[1.0f64, 0.0, 0.0], &[1.0, 0.0, 0.0], 3) < 1e-6);
        let u = [0.25f64; 4];
        let l = categorical_crossentropy(&u, &[0.0, 0.0, 1.0, 0.0], 4);
        assert!((l - 4f64.ln()).abs() < 1e-12);
        let (l, p, g) = softmax_cross_entropy(&[0.0f64; 4], 4, &[2]);
        assert!((l - 4f64.ln()).abs() < 1e-12);
        assert_eq!(p, vec![0.25; 4]);
        assert_eq!(g, vec![0.25, 0.25, -0.75, 0.25]);
    }

    #[test]
    fn smooth_l1_branches() {
        assert_eq!(smooth_l1(&[0.0f64], &[0.0]).0, 0.0);
        assert_eq!(smooth_l1(&[0.5f64], &[0.0]).0, 0.125);
        assert_eq!(smooth_l1(&[2.0f64], &[0.0]).0, 1.5);
        let below = smooth_l1(&[1.0 - 1e-12f64], &[0.0]).0;
        let at = smooth_l1(&[1.0f64], &[0.0]).0;
        assert!((below - 0.5).abs() < 1e-11 && at == 0.5);
        assert_eq!(smooth_l1(&[-3.0f64], &[0.0]).1, vec![-1.0]);
    }

    #[test]
    fn losses_are_non_negative() {
        for p in [1e-9f64, 0.1, 0.5, 0.9, 1.0] {
            for t in [0.0, 1.0] {
                assert!(binary_crossentropy(&[p], &[t]).0 >= 0.0);
            }
        }
    }
}
