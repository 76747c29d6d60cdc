use super::{check_finite, Real, Tensor};
use crate::error::{Error, Result};

pub const BN_EPSILON: f64 = 1e-5;
/// Weight of the fresh batch statistic in the running averages.
pub const BN_MOMENTUM: f64 = 0.1;

/// Per-channel batch normalization with learnable affine terms.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm<T> {
    pub gamma: Vec<T>,
    pub beta: Vec<T>,
    pub running_mean: Vec<T>,
    pub running_var: Vec<T>,
    pub eps: T,
    pub momentum: T,
}

/// What a forward pass leaves behind for [`BnCache::backward`].
#[derive(Debug, Clone)]
pub enum BnCache<T> {
    Train {
        xhat: Tensor<T>,
        inv_std: Vec<T>,
        gamma: Vec<T>,
    },
    Eval,
}

#[derive(Debug, Clone)]
pub struct BnGrads<T> {
    pub grad_input: Tensor<T>,
    pub grad_gamma: Vec<T>,
    pub grad_beta: Vec<T>,
}

impl<T: Real> BatchNorm<T> {
    pub fn new(channels: usize) -> Self {
        BatchNorm {
            gamma: vec![T::one(); channels],
            beta: vec![T::zero(); channels],
            running_mean: vec![T::zero(); channels],
            running_var: vec![T::one(); channels],
            eps: T::from_f64(BN_EPSILON),
            momentum: T::from_f64(BN_MOMENTUM),
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    fn check(&self, op: &'static str, input: &Tensor<T>) -> Result<()> {
        if input.channels() != self.channels() {
            let [n, _, h, w] = input.shape();
            return Err(Error::shape(
                op,
                &[n, self.channels(), h, w],
                &input.shape(),
            ));
        }
        Ok(())
    }

    /// Train-mode forward: normalizes with batch statistics and folds them
    /// into the running averages.
    pub fn forward_train(&mut self, input: &Tensor<T>) -> Result<(Tensor<T>, BnCache<T>)> {
        self.check("batchnorm_forward", input)?;
        let [n, c, h, w] = input.shape();
        let hw = h * w;
        let count = n * hw;
        if count < 2 {
            return Err(Error::invalid(
                "batchnorm_forward: train mode needs at least two values per channel",
            ));
        }
        let inv_count = T::from_f64(1.0 / count as f64);
        let mut out = Tensor::zeros(input.shape());
        let mut xhat = Tensor::zeros(input.shape());
        let mut inv_std = vec![T::zero(); c];
        for (ch, inv) in inv_std.iter_mut().enumerate() {
            let mut sum = T::zero();
            for b in 0..n {
                sum += input.plane(b, ch).iter().copied().sum::<T>();
            }
            let mean = sum * inv_count;
            let mut sq = T::zero();
            for b in 0..n {
                sq += input
                    .plane(b, ch)
                    .iter()
                    .map(|&v| (v - mean) * (v - mean))
                    .sum::<T>();
            }
            let var = sq * inv_count;
            let istd = T::one() / (var + self.eps).sqrt();
            *inv = istd;
            let (g, be) = (self.gamma[ch], self.beta[ch]);
            for b in 0..n {
                let src = input.plane(b, ch);
                let xh = xhat.plane_mut(b, ch);
                for (d, &s) in xh.iter_mut().zip(src) {
                    *d = (s - mean) * istd;
                }
                let dst = out.plane_mut(b, ch);
                for (d, &x) in dst.iter_mut().zip(xhat.plane(b, ch)) {
                    *d = g * x + be;
                }
            }
            let unbiased = sq / T::from_f64((count - 1) as f64);
            let m = self.momentum;
            self.running_mean[ch] = (T::one() - m) * self.running_mean[ch] + m * mean;
            self.running_var[ch] = (T::one() - m) * self.running_var[ch] + m * unbiased;
        }
        check_finite("batchnorm_forward", &out)?;
        Ok((
            out,
            BnCache::Train {
                xhat,
                inv_std,
                gamma: self.gamma.clone(),
            },
        ))
    }

    /// Eval-mode forward: a fixed per-channel affine map from the running
    /// statistics.
    pub fn forward_eval(&self, input: &Tensor<T>) -> Result<Tensor<T>> {
        self.check("batchnorm_forward", input)?;
        let mut out = input.clone();
        self.apply_eval_inplace(&mut out)?;
        Ok(out)
    }

    pub fn apply_eval_inplace(&self, t: &mut Tensor<T>) -> Result<()> {
        self.check("batchnorm_forward", t)?;
        let n = t.batch();
        for ch in 0..self.channels() {
            let scale = self.gamma[ch] / (self.running_var[ch] + self.eps).sqrt();
            let shift = self.beta[ch] - scale * self.running_mean[ch];
            for b in 0..n {
                t.plane_mut(b, ch)
                    .iter_mut()
                    .for_each(|v| *v = scale * *v + shift);
            }
        }
        check_finite("batchnorm_forward", t)
    }
}

impl<T: Real> BnCache<T> {
    pub fn backward(&self, grad_out: &Tensor<T>) -> Result<BnGrads<T>> {
        let BnCache::Train {
            xhat,
            inv_std,
            gamma,
        } = self
        else {
            return Err(Error::EvalCache);
        };
        if grad_out.shape() != xhat.shape() {
            return Err(Error::shape(
                "batchnorm_backward",
                &xhat.shape(),
                &grad_out.shape(),
            ));
        }
        let [n, c, h, w] = xhat.shape();
        let count = T::from_f64((n * h * w) as f64);
        let mut grad_input = Tensor::zeros(xhat.shape());
        let mut grad_gamma = vec![T::zero(); c];
        let mut grad_beta = vec![T::zero(); c];
        for ch in 0..c {
            let mut sum_g = T::zero();
            let mut sum_gx = T::zero();
            for b in 0..n {
                for (&g, &x) in grad_out.plane(b, ch).iter().zip(xhat.plane(b, ch)) {
                    sum_g += g;
                    sum_gx += g * x;
                }
            }
            grad_beta[ch] = sum_g;
            grad_gamma[ch] = sum_gx;
            // dx = gamma * istd / N * (N * g - sum(g) - xhat * sum(g * xhat))
            let k = gamma[ch] * inv_std[ch] / count;
            for b in 0..n {
                let gi = grad_input.plane_mut(b, ch);
                for ((d, &g), &x) in gi
                    .iter_mut()
                    .zip(grad_out.plane(b, ch))
                    .zip(xhat.plane(b, ch))
                {
                    *d = k * (count * g - sum_g - x * sum_gx);
                }
            }
        }
        Ok(BnGrads {
            grad_input,
            grad_gamma,
            grad_beta,
        })
    }
}
