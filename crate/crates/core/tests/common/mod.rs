//! Finite-difference oracles shared by the gradient tests and the
//! acceptance suite. Each `*_trial` builds a random instance from `seed` and
//! returns the worst relative error between the analytic gradient and a
//! central difference over every input and parameter.

#![allow(dead_code)]

use std::cell::RefCell;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use softdecode_core::net::{Block, Branch, Model, NetworkConfig, QfTag};
use softdecode_core::tensor::{
    half_mse_loss, relu_backward, relu_forward, BatchNorm, Conv2d, Learnable, Tensor,
};

pub const STEP: f64 = 1e-6;
pub const TOL: f64 = 1e-5;
pub const TRIALS: u64 = 20;

/// Components smaller than this fraction of the largest analytic component
/// are compared against that floor instead of their own magnitude.
pub const FLOOR: f64 = 1e-3;

pub fn rel_err(a: f64, n: f64, scale: f64) -> f64 {
    (a - n).abs()
        / a.abs()
            .max(n.abs())
            .max(FLOOR * scale)
            .max(f64::MIN_POSITIVE)
}

pub fn random(shape: [usize; 4], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    Tensor::from_fn(shape, |_, _, _, _| rng.random_range(-1.0..1.0))
}

/// Central difference of a loss that is a function of a network output.
/// The loss change is formed from the output difference, so the subtraction
/// never cancels two large loss values.
enum Loss<'a> {
    /// `<probe, out>`
    Probe(&'a Tensor<f64>),
    /// `half_mse(out, target)`
    HalfMse(&'a Tensor<f64>),
}

impl Loss<'_> {
    fn delta(&self, up: &Tensor<f64>, down: &Tensor<f64>) -> f64 {
        let it = up.data().iter().zip(down.data());
        match self {
            Loss::Probe(p) => it.zip(p.data()).map(|((u, d), p)| p * (u - d)).sum(),
            Loss::HalfMse(r) => {
                let n = up.batch() as f64;
                it.zip(r.data())
                    .map(|((u, d), r)| (u - d) * (u + d - 2.0 * r))
                    .sum::<f64>()
                    / (2.0 * n)
            }
        }
    }
}

fn check(
    analytic: &[f64],
    loss: Loss<'_>,
    mut perturb: impl FnMut(usize, f64),
    mut forward: impl FnMut() -> Tensor<f64>,
) -> f64 {
    let scale = analytic.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut worst: f64 = 0.0;
    for (i, &a) in analytic.iter().enumerate() {
        perturb(i, STEP);
        let up = forward();
        perturb(i, -2.0 * STEP);
        let down = forward();
        perturb(i, STEP);
        worst = worst.max(rel_err(a, loss.delta(&up, &down) / (2.0 * STEP), scale));
    }
    worst
}

pub fn conv_trial(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (n, c, k) = (2, rng.random_range(1..4), rng.random_range(1..4));
    let (h, w) = (rng.random_range(2..6), rng.random_range(2..6));
    let x = random([n, c, h, w], &mut rng);
    let weights = random([k, c, 3, 3], &mut rng);
    let bias: Vec<f64> = (0..k).map(|_| rng.random_range(-1.0..1.0)).collect();
    let conv = Conv2d::from_parts(weights, Some(bias)).unwrap();
    let probe = random([n, k, h, w], &mut rng);
    let g = conv.backward(&x, &probe).unwrap();

    let state = RefCell::new((x, conv));
    let fwd = || {
        let (x, conv) = &*state.borrow();
        conv.forward(x).unwrap()
    };
    let e_x = check(
        g.grad_input.data(),
        Loss::Probe(&probe),
        |i, d| state.borrow_mut().0.data_mut()[i] += d,
        fwd,
    );
    let e_w = check(
        g.grad_weights.data(),
        Loss::Probe(&probe),
        |i, d| state.borrow_mut().1.weights_mut().data_mut()[i] += d,
        fwd,
    );
    let e_b = check(
        g.grad_bias.as_deref().unwrap(),
        Loss::Probe(&probe),
        |i, d| state.borrow_mut().1.bias_mut().unwrap()[i] += d,
        fwd,
    );
    e_x.max(e_w).max(e_b)
}

pub fn batchnorm_trial(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (n, c) = (rng.random_range(1..4), rng.random_range(1..4));
    let x = random([n, c, 3, 3], &mut rng);
    let mut bn = BatchNorm::<f64>::new(c);
    for v in bn.gamma.iter_mut().chain(bn.beta.iter_mut()) {
        *v = rng.random_range(-1.5..1.5);
    }
    let probe = random([n, c, 3, 3], &mut rng);
    let (_, cache) = bn.clone().forward_train(&x).unwrap();
    let g = cache.backward(&probe).unwrap();

    let state = RefCell::new((x, bn));
    let fwd = || {
        let (x, bn) = &*state.borrow();
        bn.clone().forward_train(x).unwrap().0
    };
    let e_x = check(
        g.grad_input.data(),
        Loss::Probe(&probe),
        |i, d| state.borrow_mut().0.data_mut()[i] += d,
        fwd,
    );
    let e_g = check(
        &g.grad_gamma,
        Loss::Probe(&probe),
        |i, d| state.borrow_mut().1.gamma[i] += d,
        fwd,
    );
    let e_b = check(
        &g.grad_beta,
        Loss::Probe(&probe),
        |i, d| state.borrow_mut().1.beta[i] += d,
        fwd,
    );
    e_x.max(e_g).max(e_b)
}

pub fn relu_trial(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // inputs kept away from the kink so the difference quotient is clean
    let x = Tensor::from_fn([2, 2, 3, 3], |_, _, _, _| {
        let v: f64 = rng.random_range(0.01..1.0);
        if rng.random_bool(0.5) {
            v
        } else {
            -v
        }
    });
    let probe = random([2, 2, 3, 3], &mut rng);
    let analytic = relu_backward(&relu_forward(&x), &probe).unwrap();
    let xs = RefCell::new(x);
    check(
        analytic.data(),
        Loss::Probe(&probe),
        |i, d| xs.borrow_mut().data_mut()[i] += d,
        || relu_forward(&xs.borrow()),
    )
}

pub fn loss_trial(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pred = random([3, 2, 4, 4], &mut rng);
    let target = random([3, 2, 4, 4], &mut rng);
    let (_, grad) = half_mse_loss(&pred, &target).unwrap();
    let ps = RefCell::new(pred);
    check(
        grad.data(),
        Loss::HalfMse(&target),
        |i, d| ps.borrow_mut().data_mut()[i] += d,
        || ps.borrow().clone(),
    )
}

/// D=2 branch with randomized affine terms and bias, so every parameter
/// has a non-trivial gradient.
pub fn toy_branch(seed: u64, branch: Branch) -> Model<f64> {
    let cfg = NetworkConfig {
        depth: 2,
        hidden_channels: 3,
        io_channels: 4,
    };
    let mut m = Model::init(cfg, branch, QfTag::Dedicated(10), seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xface);
    for Block { conv, bn } in &mut m.blocks {
        if let Some(b) = conv.bias_mut() {
            b.iter_mut().for_each(|v| *v = rng.random_range(-0.5..0.5));
        }
        if let Some(bn) = bn {
            bn.gamma
                .iter_mut()
                .for_each(|v| *v = rng.random_range(0.5..1.5));
            bn.beta
                .iter_mut()
                .for_each(|v| *v = rng.random_range(-0.5..0.5));
        }
    }
    m
}

/// Composed D=2 branch: every learnable against the training loss.
pub fn branch_trial(seed: u64) -> f64 {
    let branch = if seed.is_multiple_of(2) {
        Branch::Pixel
    } else {
        Branch::Wavelet
    };
    let model = toy_branch(seed, branch);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xbeef);
    let y = random([2, 4, 5, 5], &mut rng);
    let x = random([2, 4, 5, 5], &mut rng);
    let analytic = model.clone().loss_and_grads(&y, &x).unwrap().1.flatten();
    let target = x.sub(&y).unwrap();

    let cell = RefCell::new(model);
    check(
        &analytic,
        Loss::HalfMse(&target),
        |mut i, d| {
            let mut m = cell.borrow_mut();
            for slot in m.slots_mut() {
                if i < slot.values.len() {
                    slot.values[i] += d;
                    return;
                }
                i -= slot.values.len();
            }
            panic!("parameter index out of range");
        },
        || cell.borrow().clone().forward_train(&y).unwrap().0,
    )
}

pub type Trial = fn(u64) -> f64;

pub const ALL: [(&str, Trial); 5] = [
    ("conv", conv_trial),
    ("batchnorm", batchnorm_trial),
    ("relu", relu_trial),
    ("half-mse", loss_trial),
    ("D=2 branch", branch_trial),
];
