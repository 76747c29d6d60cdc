use super::{Real, Tensor};
use crate::error::{Error, Result};

pub fn relu_forward<T: Real>(input: &Tensor<T>) -> Tensor<T> {
    input.map(|v| if v > T::zero() { v } else { T::zero() })
}

pub fn relu_inplace<T: Real>(t: &mut Tensor<T>) {
    t.data_mut().iter_mut().for_each(|v| {
        if *v <= T::zero() {
            *v = T::zero()
        }
    });
}

/// Passes `grad_out` where the forward input was strictly positive. The
/// subgradient at exactly zero is zero.
pub fn relu_backward<T: Real>(input: &Tensor<T>, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
    if input.shape() != grad_out.shape() {
        return Err(Error::shape(
            "relu_backward",
            &input.shape(),
            &grad_out.shape(),
        ));
    }
    let data = input
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&x, &g)| if x > T::zero() { g } else { T::zero() })
        .collect();
    Tensor::from_vec(input.shape(), data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clamps_negatives() {
        let x = Tensor::from_vec([1, 1, 1, 3], vec![-1.0, 0.0, 2.0]).unwrap();
        assert_eq!(relu_forward(&x).data(), &[0.0, 0.0, 2.0]);
        let g = Tensor::from_vec([1, 1, 1, 3], vec![5.0, 6.0, 7.0]).unwrap();
        assert_eq!(relu_backward(&x, &g).unwrap().data(), &[0.0, 0.0, 7.0]);
        let mut y = x.clone();
        relu_inplace(&mut y);
        assert_eq!(y, relu_forward(&x));
    }

    #[test]
    fn positive_is_identity() {
        let x = Tensor::<f64>::from_fn([2, 2, 3, 3], |n, c, y, x| 0.5 + (n + c + y + x) as f64);
        assert_eq!(relu_forward(&x), x);
        let g = x.map(|v| v * -3.0);
        assert_eq!(relu_backward(&x, &g).unwrap(), g);
    }
}
