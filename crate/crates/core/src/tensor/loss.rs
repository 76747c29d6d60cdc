use super::{Real, Tensor};
use crate::error::{Error, Result};

/// Half squared error summed per sample and averaged over the batch, taken
/// against the residual target `clean - degraded`.
///
/// Returns the loss (accumulated in `f64`) and its gradient with respect to
/// `prediction`, `(prediction - target) / N`.
pub fn half_mse_loss<T: Real>(
    prediction: &Tensor<T>,
    residual_target: &Tensor<T>,
) -> Result<(f64, Tensor<T>)> {
    if prediction.shape() != residual_target.shape() {
        return Err(Error::shape(
            "half_mse_loss",
            &prediction.shape(),
            &residual_target.shape(),
        ));
    }
    let n = prediction.batch() as f64;
    let inv_n = T::from_f64(1.0 / n);
    let mut sum = 0.0f64;
    let mut grad = Vec::with_capacity(prediction.len());
    for (&p, &t) in prediction.data().iter().zip(residual_target.data()) {
        let d = p - t;
        let df = d.as_f64();
        sum += df * df;
        grad.push(d * inv_n);
    }
    Ok((0.5 * sum / n, Tensor::from_vec(prediction.shape(), grad)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_when_equal() {
        let p = Tensor::<f64>::from_fn([2, 4, 3, 3], |n, c, y, x| (n + c * y + x) as f64);
        let (loss, grad) = half_mse_loss(&p, &p).unwrap();
        assert_eq!(loss, 0.0);
        assert!(grad.data().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn single_element() {
        let p = Tensor::from_vec([1, 1, 1, 1], vec![3.0f64]).unwrap();
        let t = Tensor::from_vec([1, 1, 1, 1], vec![1.0f64]).unwrap();
        let (loss, grad) = half_mse_loss(&p, &t).unwrap();
        assert_eq!(loss, 2.0);
        assert_eq!(grad.data(), &[2.0]);
    }

    #[test]
    fn shape_mismatch() {
        let p = Tensor::<f64>::zeros([1, 1, 2, 2]);
        let t = Tensor::<f64>::zeros([2, 1, 2, 2]);
        assert!(half_mse_loss(&p, &t).is_err());
    }
}
