use super::{Parameters, Real};

/// RMSprop without momentum:
/// `m ← ρ m + (1 − ρ) g²`, `θ ← θ − lr · g / (√m + ε)`.
#[derive(Debug, Clone)]
pub struct RmsProp<F, P> {
    pub lr: F,
    pub alpha: F,
    pub eps: F,
    pub moments: P,
}

impl<F: Real, P: Parameters<F>> RmsProp<F, P> {
    pub fn new(params: &P, lr: F, alpha: F, eps: F) -> Self {
        RmsProp {
            lr,
            alpha,
            eps,
            moments: params.zeros_like(),
        }
    }

    pub fn step(&mut self, params: &mut P, grads: &P) {
        let (lr, alpha, eps) = (self.lr, self.alpha, self.eps);
        let one = F::one();
        let grads = grads.tensors();
        for (((_, mut p), (_, mut m)), (_, g)) in params
            .tensors_mut()
            .into_iter()
            .zip(self.moments.tensors_mut())
            .zip(grads)
        {
            ndarray::Zip::from(&mut p).and(&mut m).and(&g).for_each(|p, m, &g| {
                *m = alpha * *m + (one - alpha) * g * g;
                *p -= lr * g / (m.sqrt() + eps);
            });
        }
    }
}

/// Rescales `grads` so that its global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_grad_norm<F: Real, P: Parameters<F>>(grads: &mut P, max_norm: F) -> F {
    let norm = grads.squared_norm().sqrt();
    if norm > max_norm {
        grads.scale(max_norm / norm);
    }
    norm
}
