use super::{check_finite, Real, Tensor};
use crate::error::{Error, Result};

/// Spatial kernel size of every convolution.
pub const KERNEL: usize = 3;
const TAPS: usize = KERNEL * KERNEL;

/// 3x3 "same" convolution with zero padding of one pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d<T> {
    /// `(out_channels, in_channels, 3, 3)`
    weights: Tensor<T>,
    bias: Option<Vec<T>>,
}

#[derive(Debug, Clone)]
pub struct ConvGrads<T> {
    pub grad_input: Tensor<T>,
    pub grad_weights: Tensor<T>,
    pub grad_bias: Option<Vec<T>>,
}

impl<T: Real> Conv2d<T> {
    pub fn zeros(in_channels: usize, out_channels: usize, with_bias: bool) -> Self {
        Conv2d {
            weights: Tensor::zeros([out_channels, in_channels, KERNEL, KERNEL]),
            bias: with_bias.then(|| vec![T::zero(); out_channels]),
        }
    }

    pub fn from_parts(weights: Tensor<T>, bias: Option<Vec<T>>) -> Result<Self> {
        let [k, _, kh, kw] = weights.shape();
        if kh != KERNEL || kw != KERNEL {
            return Err(Error::invalid(format!(
                "convolution kernels must be 3x3, got {kh}x{kw}"
            )));
        }
        if let Some(b) = &bias {
            if b.len() != k {
                return Err(Error::shape("Conv2d bias", &[k], &[b.len()]));
            }
        }
        Ok(Conv2d { weights, bias })
    }

    pub fn in_channels(&self) -> usize {
        self.weights.shape()[1]
    }

    pub fn out_channels(&self) -> usize {
        self.weights.shape()[0]
    }

    pub fn weights(&self) -> &Tensor<T> {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut Tensor<T> {
        &mut self.weights
    }

    pub fn bias(&self) -> Option<&[T]> {
        self.bias.as_deref()
    }

    pub fn bias_mut(&mut self) -> Option<&mut [T]> {
        self.bias.as_deref_mut()
    }

    /// Weights and bias borrowed together.
    pub fn params_mut(&mut self) -> (&mut [T], Option<&mut [T]>) {
        (self.weights.data_mut(), self.bias.as_deref_mut())
    }

    fn check_input(&self, op: &'static str, input: &Tensor<T>) -> Result<()> {
        if input.channels() != self.in_channels() {
            let [n, _, h, w] = input.shape();
            return Err(Error::shape(
                op,
                &[n, self.in_channels(), h, w],
                &input.shape(),
            ));
        }
        Ok(())
    }

    pub fn forward(&self, input: &Tensor<T>) -> Result<Tensor<T>> {
        self.check_input("conv2d_forward", input)?;
        let [n, c, h, w] = input.shape();
        let k = self.out_channels();
        let hw = h * w;
        let rows = c * TAPS;
        let mut out = Tensor::zeros([n, k, h, w]);
        let mut cols = vec![T::zero(); rows * hw];
        for b in 0..n {
            im2col(input.sample(b), c, h, w, &mut cols);
            let dst = out.sample_mut(b);
            T::gemm(
                k,
                rows,
                hw,
                T::one(),
                self.weights.data(),
                rows as isize,
                1,
                &cols,
                hw as isize,
                1,
                T::zero(),
                dst,
                hw as isize,
                1,
            );
            if let Some(bias) = &self.bias {
                for (plane, &bv) in dst.chunks_exact_mut(hw).zip(bias) {
                    plane.iter_mut().for_each(|v| *v += bv);
                }
            }
        }
        check_finite("conv2d_forward", &out)?;
        Ok(out)
    }

    pub fn backward(&self, input: &Tensor<T>, grad_out: &Tensor<T>) -> Result<ConvGrads<T>> {
        self.check_input("conv2d_backward", input)?;
        let [n, c, h, w] = input.shape();
        let k = self.out_channels();
        if grad_out.shape() != [n, k, h, w] {
            return Err(Error::shape(
                "conv2d_backward grad_out",
                &[n, k, h, w],
                &grad_out.shape(),
            ));
        }
        let hw = h * w;
        let rows = c * TAPS;
        let mut grad_input = Tensor::zeros(input.shape());
        let mut grad_weights = Tensor::zeros(self.weights.shape());
        let mut grad_bias = self.bias.as_ref().map(|_| vec![T::zero(); k]);
        let mut cols = vec![T::zero(); rows * hw];
        let mut grad_cols = vec![T::zero(); rows * hw];
        for b in 0..n {
            let g = grad_out.sample(b);
            im2col(input.sample(b), c, h, w, &mut cols);
            // dW (k x rows) += g (k x hw) * cols^T (hw x rows)
            T::gemm(
                k,
                hw,
                rows,
                T::one(),
                g,
                hw as isize,
                1,
                &cols,
                1,
                hw as isize,
                T::one(),
                grad_weights.data_mut(),
                rows as isize,
                1,
            );
            // dcols (rows x hw) = W^T (rows x k) * g (k x hw)
            T::gemm(
                rows,
                k,
                hw,
                T::one(),
                self.weights.data(),
                1,
                rows as isize,
                g,
                hw as isize,
                1,
                T::zero(),
                &mut grad_cols,
                hw as isize,
                1,
            );
            col2im(&grad_cols, c, h, w, grad_input.sample_mut(b));
            if let Some(gb) = grad_bias.as_mut() {
                for (acc, plane) in gb.iter_mut().zip(g.chunks_exact(hw)) {
                    *acc += plane.iter().copied().sum::<T>();
                }
            }
        }
        Ok(ConvGrads {
            grad_input,
            grad_weights,
            grad_bias,
        })
    }
}

/// Unfold a `c x h x w` sample into `(c * 9) x (h * w)` columns, zero padded.
fn im2col<T: Real>(src: &[T], c: usize, h: usize, w: usize, cols: &mut [T]) {
    let hw = h * w;
    for ch in 0..c {
        let plane = &src[ch * hw..(ch + 1) * hw];
        for ky in 0..KERNEL {
            for kx in 0..KERNEL {
                let row = &mut cols[((ch * TAPS) + ky * KERNEL + kx) * hw..][..hw];
                for y in 0..h {
                    let dst = &mut row[y * w..(y + 1) * w];
                    let sy = y as isize + ky as isize - 1;
                    if sy < 0 || sy >= h as isize {
                        dst.fill(T::zero());
                        continue;
                    }
                    let srow = &plane[sy as usize * w..(sy as usize + 1) * w];
                    match kx {
                        0 => {
                            dst[0] = T::zero();
                            dst[1..].copy_from_slice(&srow[..w - 1]);
                        }
                        1 => dst.copy_from_slice(srow),
                        _ => {
                            dst[..w - 1].copy_from_slice(&srow[1..]);
                            dst[w - 1] = T::zero();
                        }
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatter-add columns back onto the sample.
fn col2im<T: Real>(cols: &[T], c: usize, h: usize, w: usize, dst: &mut [T]) {
    let hw = h * w;
    for ch in 0..c {
        let plane = &mut dst[ch * hw..(ch + 1) * hw];
        for ky in 0..KERNEL {
            for kx in 0..KERNEL {
                let row = &cols[((ch * TAPS) + ky * KERNEL + kx) * hw..][..hw];
                for y in 0..h {
                    let sy = y as isize + ky as isize - 1;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let src = &row[y * w..(y + 1) * w];
                    let prow = &mut plane[sy as usize * w..(sy as usize + 1) * w];
                    match kx {
                        0 => prow[..w - 1]
                            .iter_mut()
                            .zip(&src[1..])
                            .for_each(|(p, &s)| *p += s),
                        1 => prow.iter_mut().zip(src).for_each(|(p, &s)| *p += s),
                        _ => prow[1..]
                            .iter_mut()
                            .zip(&src[..w - 1])
                            .for_each(|(p, &s)| *p += s),
                    }
                }
            }
        }
    }
}
