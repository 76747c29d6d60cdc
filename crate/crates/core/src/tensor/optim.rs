use super::Real;
use crate::error::{Error, Result};

/// One learnable array exposed to the optimizer.
pub struct ParamSlot<'a, T> {
    /// Index of the owning layer, for diagnostics.
    pub layer: usize,
    pub values: &'a mut [T],
    /// Whether weight decay applies (convolution weights only).
    pub decay: bool,
}

/// Anything that can hand its learnable arrays to the optimizer in a fixed
/// order.
pub trait Learnable<T> {
    fn slots_mut(&mut self) -> Vec<ParamSlot<'_, T>>;
}

/// Gradients laid out in the same slot order as the parameters they belong to.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet<T> {
    pub slots: Vec<(usize, Vec<T>)>,
}

impl<T: Real> GradientSet<T> {
    pub fn new() -> Self {
        GradientSet { slots: Vec::new() }
    }

    pub fn push(&mut self, layer: usize, grad: Vec<T>) {
        self.slots.push((layer, grad));
    }

    /// Concatenation of every slot, handy for norm checks.
    pub fn flatten(&self) -> Vec<T> {
        self.slots
            .iter()
            .flat_map(|(_, g)| g.iter().copied())
            .collect()
    }
}

impl<T: Real> Default for GradientSet<T> {
    fn default() -> Self {
        Self::new()
    }
}

/// SGD with momentum and L2 weight decay:
/// `v <- momentum * v - lr * (g + decay * w)`, `w <- w + v`.
#[derive(Debug, Clone)]
pub struct Sgd<T> {
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    velocity: Vec<Vec<T>>,
}

impl<T: Real> Sgd<T> {
    pub fn new(learning_rate: f64, momentum: f64, weight_decay: f64) -> Self {
        Sgd {
            learning_rate,
            momentum,
            weight_decay,
            velocity: Vec::new(),
        }
    }

    pub fn velocity(&self) -> &[Vec<T>] {
        &self.velocity
    }

    pub fn step<P: Learnable<T> + ?Sized>(
        &mut self,
        params: &mut P,
        grads: &GradientSet<T>,
    ) -> Result<()> {
        let mut slots = params.slots_mut();
        if slots.len() != grads.slots.len() {
            return Err(Error::shape(
                "sgd_step slots",
                &[slots.len()],
                &[grads.slots.len()],
            ));
        }
        for (slot, (_, g)) in slots.iter().zip(&grads.slots) {
            if slot.values.len() != g.len() {
                return Err(Error::shape(
                    "sgd_step gradient",
                    &[slot.layer, slot.values.len()],
                    &[slot.layer, g.len()],
                ));
            }
            if g.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteGradient { layer: slot.layer });
            }
        }
        if self.velocity.is_empty() {
            self.velocity = slots
                .iter()
                .map(|s| vec![T::zero(); s.values.len()])
                .collect();
        } else if self.velocity.len() != slots.len()
            || self
                .velocity
                .iter()
                .zip(&slots)
                .any(|(v, s)| v.len() != s.values.len())
        {
            return Err(Error::invalid(
                "sgd_step: optimizer state does not match the parameters",
            ));
        }
        let lr = T::from_f64(self.learning_rate);
        let mom = T::from_f64(self.momentum);
        let wd = T::from_f64(self.weight_decay);
        for ((slot, (_, g)), vel) in slots.iter_mut().zip(&grads.slots).zip(&mut self.velocity) {
            let decay = if slot.decay { wd } else { T::zero() };
            for ((w, &gi), v) in slot.values.iter_mut().zip(g).zip(vel.iter_mut()) {
                *v = mom * *v - lr * (gi + decay * *w);
                *w += *v;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Scalars {
        w: Vec<f64>,
        b: Vec<f64>,
    }

    impl Learnable<f64> for Scalars {
        fn slots_mut(&mut self) -> Vec<ParamSlot<'_, f64>> {
            vec![
                ParamSlot {
                    layer: 0,
                    values: &mut self.w,
                    decay: true,
                },
                ParamSlot {
                    layer: 1,
                    values: &mut self.b,
                    decay: false,
                },
            ]
        }
    }

    fn grads(w: f64, b: f64) -> GradientSet<f64> {
        GradientSet {
            slots: vec![(0, vec![w]), (1, vec![b])],
        }
    }

    #[test]
    fn zero_grad_leaves_params() {
        let mut p = Scalars {
            w: vec![1.5],
            b: vec![-2.0],
        };
        let mut opt = Sgd::new(0.1, 0.9, 0.0);
        opt.step(&mut p, &grads(0.0, 0.0)).unwrap();
        assert_eq!((p.w[0], p.b[0]), (1.5, -2.0));
    }

    #[test]
    fn plain_gradient_descent() {
        let mut p = Scalars {
            w: vec![5.0],
            b: vec![5.0],
        };
        let mut opt = Sgd::new(0.1, 0.0, 0.0);
        opt.step(&mut p, &grads(1.0, 1.0)).unwrap();
        assert!((p.w[0] - 4.9).abs() < 1e-15);
        assert!((p.b[0] - 4.9).abs() < 1e-15);
    }

    #[test]
    fn momentum_recursion_two_steps() {
        let (lr, mu, wd) = (0.05, 0.9, 1e-4);
        let mut p = Scalars {
            w: vec![2.0],
            b: vec![-1.0],
        };
        let mut opt = Sgd::new(lr, mu, wd);
        opt.step(&mut p, &grads(0.3, 0.7)).unwrap();
        opt.step(&mut p, &grads(-0.2, 0.1)).unwrap();
        // hand-unrolled: decay on w only
        let v1w = -lr * (0.3 + wd * 2.0);
        let w1 = 2.0 + v1w;
        let v2w = mu * v1w - lr * (-0.2 + wd * w1);
        let v1b = -lr * 0.7;
        let v2b = mu * v1b - lr * 0.1;
        assert!((p.w[0] - (w1 + v2w)).abs() < 1e-15);
        assert!((p.b[0] - (-1.0 + v1b + v2b)).abs() < 1e-15);
    }

    #[test]
    fn rejects_non_finite_with_layer() {
        let mut p = Scalars {
            w: vec![1.0],
            b: vec![1.0],
        };
        let mut opt = Sgd::new(0.1, 0.9, 0.0);
        let err = opt.step(&mut p, &grads(1.0, f64::NAN)).unwrap_err();
        assert!(matches!(err, Error::NonFiniteGradient { layer: 1 }));
        assert_eq!((p.w[0], p.b[0]), (1.0, 1.0));
    }

    #[test]
    fn rejects_incongruent_grads() {
        let mut p = Scalars {
            w: vec![1.0],
            b: vec![1.0],
        };
        let mut opt = Sgd::new(0.1, 0.9, 0.0);
        let bad = GradientSet {
            slots: vec![(0, vec![1.0, 2.0]), (1, vec![0.0])],
        };
        assert!(opt.step(&mut p, &bad).is_err());
    }

    #[test]
    fn descends_convex_quadratic() {
        // f(w) = 0.5 * a * w^2, curvature a; stable for lr < 2 / a
        let a = 4.0;
        let mut p = Scalars {
            w: vec![3.0],
            b: vec![-2.0],
        };
        let mut opt = Sgd::new(0.4, 0.0, 0.0);
        let mut prev = f64::INFINITY;
        for _ in 0..50 {
            let f = 0.5 * a * (p.w[0] * p.w[0] + p.b[0] * p.b[0]);
            assert!(f < prev || f == 0.0);
            prev = f;
            let g = grads(a * p.w[0], a * p.b[0]);
            opt.step(&mut p, &g).unwrap();
        }
    }
}
