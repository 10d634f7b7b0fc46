use ndarray::{Array2, ArrayView2, ArrayViewD, ArrayViewMutD, Zip};
use rand::Rng;

use super::{relu, Dense, Parameters, Real};

/// Joint critic shared by all agents: two ReLU layers and linear heads, one
/// per action of the acting agent. The second hidden layer's activation is
/// the feature vector handed to the intrinsic-reward estimator.
#[derive(Debug, Clone, PartialEq)]
pub struct CentralNet<F> {
    pub l1: Dense<F>,
    pub l2: Dense<F>,
    pub out: Dense<F>,
}

#[derive(Debug, Clone)]
pub struct CentralTape<F> {
    x: Array2<F>,
    a1: Array2<F>,
    a2: Array2<F>,
}

impl<F: Real> CentralNet<F> {
    pub fn new<R: Rng + ?Sized>(in_dim: usize, hidden: usize, n_actions: usize, rng: &mut R) -> Self {
        CentralNet {
            l1: Dense::new(in_dim, hidden, rng),
            l2: Dense::new(hidden, hidden, rng),
            out: Dense::new(hidden, n_actions, rng),
        }
    }

    pub fn zeros(in_dim: usize, hidden: usize, n_actions: usize) -> Self {
        CentralNet {
            l1: Dense::zeros(in_dim, hidden),
            l2: Dense::zeros(hidden, hidden),
            out: Dense::zeros(hidden, n_actions),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.l1.in_dim()
    }

    pub fn hidden(&self) -> usize {
        self.l2.out_dim()
    }

    pub fn n_actions(&self) -> usize {
        self.out.out_dim()
    }

    /// Returns `(q [R, A], phi [R, H])`.
    pub fn forward(&self, x: ArrayView2<'_, F>) -> (Array2<F>, Array2<F>) {
        let (q, tape) = self.forward_tape(x);
        (q, tape.a2)
    }

    pub fn q_values(&self, x: ArrayView2<'_, F>) -> Array2<F> {
        let mut a1 = self.l1.forward(x);
        a1.mapv_inplace(relu);
        let mut a2 = self.l2.forward(a1.view());
        a2.mapv_inplace(relu);
        self.out.forward(a2.view())
    }

    pub fn forward_tape(&self, x: ArrayView2<'_, F>) -> (Array2<F>, CentralTape<F>) {
        let mut a1 = self.l1.forward(x);
        a1.mapv_inplace(relu);
        let mut a2 = self.l2.forward(a1.view());
        a2.mapv_inplace(relu);
        let q = self.out.forward(a2.view());
        (
            q,
            CentralTape {
                x: x.to_owned(),
                a1,
                a2,
            },
        )
    }

    pub fn backward(&self, tape: &CentralTape<F>, dq: ArrayView2<'_, F>) -> CentralNet<F> {
        let mut grad = self.zeros_like();
        let mut d2 = self.out.backward_into(tape.a2.view(), dq, &mut grad.out);
        mask_relu(&mut d2, &tape.a2);
        let mut d1 = self.l2.backward_into(tape.a1.view(), d2.view(), &mut grad.l2);
        mask_relu(&mut d1, &tape.a1);
        self.l1.accumulate(tape.x.view(), d1.view(), &mut grad.l1);
        grad
    }

    pub fn cast<G: Real>(&self) -> CentralNet<G> {
        CentralNet {
            l1: self.l1.cast(),
            l2: self.l2.cast(),
            out: self.out.cast(),
        }
    }
}

fn mask_relu<F: Real>(d: &mut Array2<F>, activation: &Array2<F>) {
    Zip::from(d).and(activation).for_each(|d, &a| {
        if a <= F::zero() {
            *d = F::zero();
        }
    });
}

impl<F: Real> Parameters<F> for CentralNet<F> {
    fn tensors(&self) -> Vec<(&'static str, ArrayViewD<'_, F>)> {
        vec![
            ("l1.weight", self.l1.weight.view().into_dyn()),
            ("l1.bias", self.l1.bias.view().into_dyn()),
            ("l2.weight", self.l2.weight.view().into_dyn()),
            ("l2.bias", self.l2.bias.view().into_dyn()),
            ("out.weight", self.out.weight.view().into_dyn()),
            ("out.bias", self.out.bias.view().into_dyn()),
        ]
    }

    fn tensors_mut(&mut self) -> Vec<(&'static str, ArrayViewMutD<'_, F>)> {
        vec![
            ("l1.weight", self.l1.weight.view_mut().into_dyn()),
            ("l1.bias", self.l1.bias.view_mut().into_dyn()),
            ("l2.weight", self.l2.weight.view_mut().into_dyn()),
            ("l2.bias", self.l2.bias.view_mut().into_dyn()),
            ("out.weight", self.out.weight.view_mut().into_dyn()),
            ("out.bias", self.out.bias.view_mut().into_dyn()),
        ]
    }
}
