use crate::tensorcore::Tensor;

/// Compare an analytic gradient against central finite differences.
///
/// `f` evaluates a scalar function and its analytic gradient at a point.
/// Returns the maximum relative error over all coordinates, with the
/// denominator max(|analytic|, |numeric|, 1e-8). Callers should keep x away
/// from non-smooth points (relu kinks).
pub fn finite_difference_check<F>(f: F, x: &Tensor, eps: f64) -> f64
where
    F: Fn(&Tensor) -> (f64, Tensor),
{
    let (_, analytic) = f(x);
    assert_eq!(
        analytic.shape(),
        x.shape(),
        "analytic gradient shape must match input"
    );
    let mut max_err: f64 = 0.0;
    let mut probe = x.clone();
    for i in 0..x.len() {
        let orig = x.data()[i];
        probe.data_mut()[i] = orig + eps;
        let (fp, _) = f(&probe);
        probe.data_mut()[i] = orig - eps;
        let (fm, _) = f(&probe);
        probe.data_mut()[i] = orig;
        let numeric = (fp - fm) / (2.0 * eps);
        let a = analytic.data()[i];
        let denom = a.abs().max(numeric.abs()).max(1e-8);
        max_err = max_err.max((a - numeric).abs() / denom);
    }
    max_err
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_is_exact_to_eps_squared() {
        // f(x) = ||x||^2, grad = 2x
        let f = |x: &Tensor| {
            let v: f64 = x.data().iter().map(|v| v * v).sum();
            (v, x.map(|v| 2.0 * v))
        };
        let x = Tensor::vector(vec![0.3, -1.2, 2.5]);
        let err = finite_difference_check(f, &x, 1e-4);
        assert!(err < 1e-6, "err {err}");
    }

    #[test]
    fn constant_function_has_zero_error() {
        let f = |x: &Tensor| (4.25, Tensor::zeros(x.shape()));
        let x = Tensor::vector(vec![1.0, 2.0]);
        assert_eq!(finite_difference_check(f, &x, 1e-4), 0.0);
    }

    #[test]
    fn wrong_gradient_is_flagged() {
        let f = |x: &Tensor| {
            let v: f64 = x.data().iter().map(|v| v * v).sum();
            (v, x.map(|v| 3.0 * v)) // deliberately wrong
        };
        let x = Tensor::vector(vec![1.0, -2.0]);
        assert!(finite_difference_check(f, &x, 1e-4) > 0.1);
    }
}
