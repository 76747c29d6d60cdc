use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::tensor::{
    half_mse_loss, relu_backward, relu_inplace, BatchNorm, BnCache, Conv2d, GradientSet, Learnable,
    ParamSlot, Real, Sgd, Tensor,
};
use crate::transforms::Packing;

/// Shape of one branch network.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NetworkConfig {
    pub depth: usize,
    pub hidden_channels: usize,
    pub io_channels: usize,
}

impl NetworkConfig {
    pub const PAPER: NetworkConfig = NetworkConfig {
        depth: 20,
        hidden_channels: 64,
        io_channels: 4,
    };

    pub const DESK: NetworkConfig = NetworkConfig {
        depth: 5,
        hidden_channels: 16,
        io_channels: 4,
    };

    pub fn validate(&self) -> Result<()> {
        if self.depth < 2 {
            return Err(Error::invalid(format!(
                "network depth must be at least 2, got {}",
                self.depth
            )));
        }
        if self.hidden_channels == 0 || self.io_channels == 0 {
            return Err(Error::invalid("channel counts must be positive"));
        }
        Ok(())
    }

    /// `(in, out)` channels of each convolution.
    pub fn conv_shapes(&self) -> Vec<(usize, usize)> {
        (0..self.depth)
            .map(|i| {
                let cin = if i == 0 {
                    self.io_channels
                } else {
                    self.hidden_channels
                };
                let cout = if i + 1 == self.depth {
                    self.io_channels
                } else {
                    self.hidden_channels
                };
                (cin, cout)
            })
            .collect()
    }

    /// Learnable scalars: conv weights, the final bias, and gamma/beta of
    /// every normalization layer.
    pub fn parameter_count(&self) -> usize {
        let weights: usize = self.conv_shapes().iter().map(|(i, o)| i * o * 9).sum();
        weights + self.io_channels + (self.depth - 1) * 2 * self.hidden_channels
    }
}

/// Which packed domain a branch works in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Branch {
    Pixel,
    Wavelet,
}

impl Branch {
    pub fn packing(self) -> Packing {
        match self {
            Branch::Pixel => Packing::Polyphase,
            Branch::Wavelet => Packing::Wavelet,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Branch::Pixel => "pixel",
            Branch::Wavelet => "wavelet",
        }
    }

    pub fn code(self) -> u32 {
        match self {
            Branch::Pixel => 0,
            Branch::Wavelet => 1,
        }
    }

    pub fn from_code(code: u32) -> Option<Branch> {
        match code {
            0 => Some(Branch::Pixel),
            1 => Some(Branch::Wavelet),
            _ => None,
        }
    }
}

impl std::str::FromStr for Branch {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pixel" => Ok(Branch::Pixel),
            "wavelet" => Ok(Branch::Wavelet),
            _ => Err(Error::invalid(format!(
                "unknown branch {s:?}, expected pixel or wavelet"
            ))),
        }
    }
}

/// Quality factor a model was trained for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QfTag {
    Dedicated(u8),
    Blind,
}

impl QfTag {
    pub fn code(self) -> u32 {
        match self {
            QfTag::Dedicated(q) => u32::from(q),
            QfTag::Blind => 0,
        }
    }

    pub fn from_code(code: u32) -> Option<QfTag> {
        match code {
            0 => Some(QfTag::Blind),
            1..=100 => Some(QfTag::Dedicated(code as u8)),
            _ => None,
        }
    }
}

impl std::fmt::Display for QfTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            QfTag::Dedicated(q) => write!(f, "qf{q}"),
            QfTag::Blind => f.write_str("blind"),
        }
    }
}

/// One CONV(+BN+ReLU) stage. The final block has no normalization and
/// carries the only bias.
#[derive(Debug, Clone, PartialEq)]
pub struct Block<T> {
    pub conv: Conv2d<T>,
    pub bn: Option<BatchNorm<T>>,
}

/// The parameter stack of one branch network.
#[derive(Debug, Clone, PartialEq)]
pub struct Model<T> {
    pub config: NetworkConfig,
    pub branch: Branch,
    pub qf: QfTag,
    /// Training iterations applied so far.
    pub iteration: u64,
    pub blocks: Vec<Block<T>>,
}

/// Activations kept by a train-mode forward pass.
pub struct Tape<T> {
    /// Input to each convolution.
    conv_inputs: Vec<Tensor<T>>,
    bn_caches: Vec<BnCache<T>>,
    /// Post-ReLU activations, used for the ReLU mask.
    relu_outputs: Vec<Tensor<T>>,
}

/// Output of [`Model::forward_residual`].
#[derive(Debug, Clone)]
pub struct ResidualOutput<T> {
    pub residual: Tensor<T>,
    pub estimate: Tensor<T>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

impl<T: Real> Model<T> {
    /// All-zero parameters with unit gamma and unit running variance.
    pub fn zeros(config: NetworkConfig, branch: Branch, qf: QfTag) -> Result<Self> {
        config.validate()?;
        let shapes = config.conv_shapes();
        let blocks = shapes
            .iter()
            .enumerate()
            .map(|(i, &(cin, cout))| {
                let last = i + 1 == shapes.len();
                Block {
                    conv: Conv2d::zeros(cin, cout, last),
                    bn: (!last).then(|| BatchNorm::new(cout)),
                }
            })
            .collect();
        Ok(Model {
            config,
            branch,
            qf,
            iteration: 0,
            blocks,
        })
    }

    /// He-initialized weights, std `sqrt(2 / (9 * in_channels))`, from a
    /// seeded generator.
    pub fn init(config: NetworkConfig, branch: Branch, qf: QfTag, seed: u64) -> Result<Self> {
        let mut model = Model::zeros(config, branch, qf)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for block in &mut model.blocks {
            let fan_in = block.conv.in_channels() * 9;
            let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("positive std");
            for w in block.conv.weights_mut().data_mut() {
                *w = T::from_f64(normal.sample(&mut rng));
            }
        }
        Ok(model)
    }

    pub fn cast<U: Real>(&self) -> Model<U> {
        let conv = |c: &Conv2d<T>| {
            Conv2d::from_parts(
                c.weights().cast(),
                c.bias()
                    .map(|b| b.iter().map(|&v| U::from_f64(v.as_f64())).collect()),
            )
            .expect("same shapes")
        };
        let v = |x: &[T]| {
            x.iter()
                .map(|&v| U::from_f64(v.as_f64()))
                .collect::<Vec<U>>()
        };
        Model {
            config: self.config,
            branch: self.branch,
            qf: self.qf,
            iteration: self.iteration,
            blocks: self
                .blocks
                .iter()
                .map(|b| Block {
                    conv: conv(&b.conv),
                    bn: b.bn.as_ref().map(|bn| BatchNorm {
                        gamma: v(&bn.gamma),
                        beta: v(&bn.beta),
                        running_mean: v(&bn.running_mean),
                        running_var: v(&bn.running_var),
                        eps: U::from_f64(bn.eps.as_f64()),
                        momentum: U::from_f64(bn.momentum.as_f64()),
                    }),
                })
                .collect(),
        }
    }

    fn check_input(&self, input: &Tensor<T>) -> Result<()> {
        if input.channels() != self.config.io_channels {
            let [n, _, h, w] = input.shape();
            return Err(Error::shape(
                "forward_residual",
                &[n, self.config.io_channels, h, w],
                &input.shape(),
            ));
        }
        Ok(())
    }

    /// Eval-mode network output (the predicted residual).
    pub fn infer(&self, input: &Tensor<T>) -> Result<Tensor<T>> {
        self.check_input(input)?;
        let mut x = input.clone();
        for block in &self.blocks {
            x = block.conv.forward(&x)?;
            if let Some(bn) = &block.bn {
                bn.apply_eval_inplace(&mut x)?;
                relu_inplace(&mut x);
            }
        }
        Ok(x)
    }

    /// Residual and estimate (`input + residual`). Train mode uses batch
    /// statistics and updates the running averages.
    pub fn forward_residual(&mut self, input: &Tensor<T>, mode: Mode) -> Result<ResidualOutput<T>> {
        let residual = match mode {
            Mode::Eval => self.infer(input)?,
            Mode::Train => self.forward_train(input)?.0,
        };
        let estimate = input.add(&residual)?;
        Ok(ResidualOutput { residual, estimate })
    }

    pub fn forward_train(&mut self, input: &Tensor<T>) -> Result<(Tensor<T>, Tape<T>)> {
        self.check_input(input)?;
        let mut tape = Tape {
            conv_inputs: Vec::with_capacity(self.blocks.len()),
            bn_caches: Vec::new(),
            relu_outputs: Vec::new(),
        };
        let mut x = input.clone();
        for block in &mut self.blocks {
            let y = block.conv.forward(&x)?;
            tape.conv_inputs.push(x);
            x = match &mut block.bn {
                Some(bn) => {
                    let (mut z, cache) = bn.forward_train(&y)?;
                    relu_inplace(&mut z);
                    tape.bn_caches.push(cache);
                    tape.relu_outputs.push(z.clone());
                    z
                }
                None => y,
            };
        }
        Ok((x, tape))
    }

    /// Gradients of every learnable, in [`Learnable::slots_mut`] order, given
    /// the gradient of the loss with respect to the residual output.
    pub fn backward(&self, tape: &Tape<T>, grad_residual: &Tensor<T>) -> Result<GradientSet<T>> {
        let depth = self.blocks.len();
        let mut per_block: Vec<Vec<Vec<T>>> = vec![Vec::new(); depth];
        let mut g = grad_residual.clone();
        for i in (0..depth).rev() {
            let block = &self.blocks[i];
            let mut slots = Vec::new();
            if block.bn.is_some() {
                // ReLU output > 0 iff its input was > 0
                let relu_out = &tape.relu_outputs[i];
                let g_pre = relu_backward(relu_out, &g)?;
                let bn_grads = tape.bn_caches[i].backward(&g_pre)?;
                g = bn_grads.grad_input;
                let conv_grads = block.conv.backward(&tape.conv_inputs[i], &g)?;
                slots.push(conv_grads.grad_weights.into_vec());
                slots.push(bn_grads.grad_gamma);
                slots.push(bn_grads.grad_beta);
                g = conv_grads.grad_input;
            } else {
                let conv_grads = block.conv.backward(&tape.conv_inputs[i], &g)?;
                slots.push(conv_grads.grad_weights.into_vec());
                if let Some(b) = conv_grads.grad_bias {
                    slots.push(b);
                }
                g = conv_grads.grad_input;
            }
            per_block[i] = slots;
        }
        let mut grads = GradientSet::new();
        for (i, slots) in per_block.into_iter().enumerate() {
            for s in slots {
                grads.push(i, s);
            }
        }
        Ok(grads)
    }

    /// Loss and gradients for one batch, without touching the weights.
    pub fn loss_and_grads(
        &mut self,
        degraded: &Tensor<T>,
        clean: &Tensor<T>,
    ) -> Result<(f64, GradientSet<T>)> {
        let target = clean.sub(degraded)?;
        let (residual, tape) = self.forward_train(degraded)?;
        let (loss, grad) = half_mse_loss(&residual, &target)?;
        let grads = self.backward(&tape, &grad)?;
        Ok((loss, grads))
    }

    /// One SGD step on a batch of `(degraded, clean)` tensors from this
    /// model's domain. Returns the loss before the update.
    pub fn train_step(&mut self, batch: &TrainBatch<T>, opt: &mut Sgd<T>) -> Result<f64> {
        if batch.branch != self.branch {
            return Err(Error::Branch {
                model: self.branch.name(),
                data: batch.branch.name(),
            });
        }
        let (loss, grads) = self.loss_and_grads(&batch.degraded, &batch.clean)?;
        opt.step(self, &grads)?;
        self.iteration += 1;
        Ok(loss)
    }
}

/// A training batch in one packed domain.
#[derive(Debug, Clone)]
pub struct TrainBatch<T> {
    pub branch: Branch,
    pub degraded: Tensor<T>,
    pub clean: Tensor<T>,
}

impl<T: Real> Learnable<T> for Model<T> {
    fn slots_mut(&mut self) -> Vec<ParamSlot<'_, T>> {
        let mut slots = Vec::new();
        for (i, block) in self.blocks.iter_mut().enumerate() {
            let Block { conv, bn } = block;
            let (w, b) = conv.params_mut();
            slots.push(ParamSlot {
                layer: i,
                values: w,
                decay: true,
            });
            match bn {
                Some(bn) => {
                    slots.push(ParamSlot {
                        layer: i,
                        values: &mut bn.gamma,
                        decay: false,
                    });
                    slots.push(ParamSlot {
                        layer: i,
                        values: &mut bn.beta,
                        decay: false,
                    });
                }
                None => {
                    if let Some(b) = b {
                        slots.push(ParamSlot {
                            layer: i,
                            values: b,
                            decay: false,
                        });
                    }
                }
            }
        }
        slots
    }
}
