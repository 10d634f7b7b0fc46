use ndarray::{s, Array1, Array2, Array3, ArrayView1, ArrayView2, ArrayView3, ArrayViewD, ArrayViewMutD, Zip};
use rand::Rng;

use super::gru::GruCache;
use super::{relu, Dense, GruCell, Parameters, Real};

/// Recurrent value network shared by all decentralized agents:
/// `input → ReLU → GRU → linear heads`.
///
/// The hidden state after the GRU doubles as the feature vector of the
/// intrinsic-reward estimator.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentNet<F> {
    pub input: Dense<F>,
    pub gru: GruCell<F>,
    pub output: Dense<F>,
}

/// Everything the backward pass needs from an unrolled forward pass.
/// Rows are time-major: row `t * S + s` holds sequence `s` at step `t`.
#[derive(Debug, Clone)]
pub struct AgentTape<F> {
    steps: usize,
    seqs: usize,
    x: Array2<F>,
    a: Array2<F>,
    h: Array2<F>,
    caches: Vec<GruCache<F>>,
}

impl<F> AgentTape<F> {
    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn seqs(&self) -> usize {
        self.seqs
    }
}

impl<F: Real> AgentTape<F> {
    /// Hidden states after each step, `[T, S, H]`.
    pub fn hidden(&self) -> ArrayView3<'_, F> {
        let hd = self.h.ncols();
        self.h
            .view()
            .into_shape_with_order((self.steps, self.seqs, hd))
            .expect("contiguous")
    }
}

impl<F: Real> AgentNet<F> {
    pub fn new<R: Rng + ?Sized>(in_dim: usize, hidden: usize, n_actions: usize, rng: &mut R) -> Self {
        AgentNet {
            input: Dense::new(in_dim, hidden, rng),
            gru: GruCell::new(hidden, hidden, rng),
            output: Dense::new(hidden, n_actions, rng),
        }
    }

    pub fn zeros(in_dim: usize, hidden: usize, n_actions: usize) -> Self {
        AgentNet {
            input: Dense::zeros(in_dim, hidden),
            gru: GruCell::zeros(hidden, hidden),
            output: Dense::zeros(hidden, n_actions),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.input.in_dim()
    }

    pub fn hidden(&self) -> usize {
        self.gru.hidden()
    }

    pub fn n_actions(&self) -> usize {
        self.output.out_dim()
    }

    /// One batched step: returns `(q [S, A], h' [S, H])`.
    pub fn step(&self, h: ArrayView2<'_, F>, x: ArrayView2<'_, F>) -> (Array2<F>, Array2<F>) {
        let mut a = self.input.forward(x);
        a.mapv_inplace(relu);
        let h_new = self.gru.step(h, a.view());
        let q = self.output.forward(h_new.view());
        (q, h_new)
    }

    /// Single-agent step returning `(q, h', phi)`; `phi` equals `h'`.
    pub fn forward(&self, h: ArrayView1<'_, F>, x: ArrayView1<'_, F>) -> (Array1<F>, Array1<F>, Array1<F>) {
        let (q, h_new) = self.step(h.insert_axis(ndarray::Axis(0)), x.insert_axis(ndarray::Axis(0)));
        let h_new = h_new.row(0).to_owned();
        (q.row(0).to_owned(), h_new.clone(), h_new)
    }

    /// Unrolls `S` sequences over `T` steps from zero hidden states.
    /// `inputs` is `[T, S, in]`; returns Q-values `[T, S, A]` and the tape.
    pub fn unroll(&self, inputs: ArrayView3<'_, F>) -> (Array3<F>, AgentTape<F>) {
        let (steps, seqs, in_dim) = inputs.dim();
        let hd = self.hidden();
        let x = inputs
            .to_owned()
            .into_shape_with_order((steps * seqs, in_dim))
            .expect("contiguous");
        let mut a = self.input.forward(x.view());
        a.mapv_inplace(relu);
        let xw = self.gru.project_input(a.view());

        let mut h_all = Array2::zeros((steps * seqs, hd));
        let mut caches = Vec::with_capacity(steps);
        let mut h = Array2::zeros((seqs, hd));
        for t in 0..steps {
            let rows = t * seqs..(t + 1) * seqs;
            let (h_new, cache) = self.gru.step_projected(h.view(), xw.slice(s![rows.clone(), ..]));
            h_all.slice_mut(s![rows, ..]).assign(&h_new);
            caches.push(cache);
            h = h_new;
        }
        let q = self
            .output
            .forward(h_all.view())
            .into_shape_with_order((steps, seqs, self.n_actions()))
            .expect("contiguous");
        (
            q,
            AgentTape {
                steps,
                seqs,
                x,
                a,
                h: h_all,
                caches,
            },
        )
    }

    /// Reverse-mode gradients of a scalar loss given `dL/dq` (`[T, S, A]`),
    /// backpropagated through every unrolled step.
    pub fn backward(&self, tape: &AgentTape<F>, dq: ArrayView3<'_, F>) -> AgentNet<F> {
        let (steps, seqs) = (tape.steps, tape.seqs);
        assert_eq!(dq.dim(), (steps, seqs, self.n_actions()), "dq shape");
        let hd = self.hidden();
        let mut grad = self.zeros_like();

        let dq = dq.to_owned().into_shape_with_order((steps * seqs, self.n_actions())).expect("contiguous");
        let dh_out = self.output.backward_into(tape.h.view(), dq.view(), &mut grad.output);

        let mut dgates = Array2::<F>::zeros((steps * seqs, 3 * hd));
        let mut dh_next = Array2::<F>::zeros((seqs, hd));
        let one = F::one();
        for t in (0..steps).rev() {
            let rows = t * seqs..(t + 1) * seqs;
            let cache = &tape.caches[t];
            let mut dh = dh_out.slice(s![rows.clone(), ..]).to_owned();
            dh += &dh_next;

            let mut daz = Array2::zeros((seqs, hd));
            let mut dac = Array2::zeros((seqs, hd));
            let mut dh_prev = Array2::zeros((seqs, hd));
            Zip::from(&mut daz)
                .and(&mut dh_prev)
                .and(&dh)
                .and(&cache.z)
                .and(&cache.c)
                .and(&cache.h_prev)
                .for_each(|daz, dhp, &dh, &z, &c, &hp| {
                    *daz = dh * (hp - c) * z * (one - z);
                    *dhp = dh * z;
                });
            Zip::from(&mut dac)
                .and(&dh)
                .and(&cache.z)
                .and(&cache.c)
                .for_each(|dac, &dh, &z, &c| *dac = dh * (one - z) * (one - c * c));

            let rh = &cache.r * &cache.h_prev;
            ndarray::linalg::general_mat_mul(one, &rh.t(), &dac, one, &mut grad.gru.u_c);
            let drh = dac.dot(&self.gru.u_c.t());
            let mut dar = Array2::zeros((seqs, hd));
            Zip::from(&mut dar)
                .and(&mut dh_prev)
                .and(&drh)
                .and(&cache.r)
                .and(&cache.h_prev)
                .for_each(|dar, dhp, &drh, &r, &hp| {
                    *dar = drh * hp * r * (one - r);
                    *dhp += drh * r;
                });

            let mut block = dgates.slice_mut(s![rows, ..]);
            block.slice_mut(s![.., 0..hd]).assign(&daz);
            block.slice_mut(s![.., hd..2 * hd]).assign(&dar);
            block.slice_mut(s![.., 2 * hd..3 * hd]).assign(&dac);
            let dzr = block.slice(s![.., 0..2 * hd]);
            ndarray::linalg::general_mat_mul(one, &cache.h_prev.t(), &dzr, one, &mut grad.gru.u_zr);
            ndarray::linalg::general_mat_mul(one, &dzr, &self.gru.u_zr.t(), one, &mut dh_prev);
            dh_next = dh_prev;
        }

        ndarray::linalg::general_mat_mul(one, &tape.a.t(), &dgates, one, &mut grad.gru.w_x);
        grad.gru.bias += &dgates.sum_axis(ndarray::Axis(0));
        let mut da = dgates.dot(&self.gru.w_x.t());
        Zip::from(&mut da).and(&tape.a).for_each(|d, &a| {
            if a <= F::zero() {
                *d = F::zero();
            }
        });
        self.input.accumulate(tape.x.view(), da.view(), &mut grad.input);
        grad
    }

    pub fn cast<G: Real>(&self) -> AgentNet<G> {
        AgentNet {
            input: self.input.cast(),
            gru: self.gru.cast(),
            output: self.output.cast(),
        }
    }
}

impl<F: Real> Parameters<F> for AgentNet<F> {
    fn tensors(&self) -> Vec<(&'static str, ArrayViewD<'_, F>)> {
        vec![
            ("input.weight", self.input.weight.view().into_dyn()),
            ("input.bias", self.input.bias.view().into_dyn()),
            ("gru.w_x", self.gru.w_x.view().into_dyn()),
            ("gru.u_zr", self.gru.u_zr.view().into_dyn()),
            ("gru.u_c", self.gru.u_c.view().into_dyn()),
            ("gru.bias", self.gru.bias.view().into_dyn()),
            ("output.weight", self.output.weight.view().into_dyn()),
            ("output.bias", self.output.bias.view().into_dyn()),
        ]
    }

    fn tensors_mut(&mut self) -> Vec<(&'static str, ArrayViewMutD<'_, F>)> {
        vec![
            ("input.weight", self.input.weight.view_mut().into_dyn()),
            ("input.bias", self.input.bias.view_mut().into_dyn()),
            ("gru.w_x", self.gru.w_x.view_mut().into_dyn()),
            ("gru.u_zr", self.gru.u_zr.view_mut().into_dyn()),
            ("gru.u_c", self.gru.u_c.view_mut().into_dyn()),
            ("gru.bias", self.gru.bias.view_mut().into_dyn()),
            ("output.weight", self.output.weight.view_mut().into_dyn()),
            ("output.bias", self.output.bias.view_mut().into_dyn()),
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{grad_check, gru_step};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_net(in_dim: usize, hidden: usize, rng: &mut ChaCha8Rng) -> AgentNet<f64> {
        let mut net = AgentNet::<f64>::new(in_dim, hidden, 5, rng);
        for (_, mut t) in net.tensors_mut() {
            t.mapv_inplace(|_| rng.gen_range(-0.6..0.6));
        }
        net
    }

    #[test]
    fn zero_network_outputs_zero_and_halves_state() {
        let net = AgentNet::<f64>::zeros(7, 4, 5);
        let h = Array1::from(vec![1.0, 2.0, -1.0, 0.5]);
        let x = Array1::from(vec![1.0; 7]);
        let (q, h2, phi) = net.forward(h.view(), x.view());
        assert!(q.iter().all(|&v| v == 0.0));
        assert_eq!(h2, &h * 0.5);
        assert_eq!(phi, h2);
    }

    #[test]
    fn identity_readout_exposes_hidden_units() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut net = random_net(6, 8, &mut rng);
        net.output.weight.fill(0.0);
        net.output.bias.fill(0.0);
        for i in 0..5 {
            net.output.weight[[i, i]] = 1.0;
        }
        let h = Array1::from_shape_fn(8, |i| 0.1 * i as f64);
        let x = Array1::from_shape_fn(6, |i| (i as f64).sin());
        let (q, h2, _) = net.forward(h.view(), x.view());
        for i in 0..5 {
            assert_eq!(q[i], h2[i]);
        }
    }

    #[test]
    fn unroll_matches_manual_layer_by_layer() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = random_net(6, 5, &mut rng);
        let inputs = Array3::from_shape_fn((4, 3, 6), |_| rng.gen_range(-1.0..1.0));
        let (q, tape) = net.unroll(inputs.view());
        assert_eq!(tape.steps(), 4);
        for s in 0..3 {
            let mut h = Array1::<f64>::zeros(5);
            for t in 0..4 {
                let x = inputs.slice(s![t, s, ..]);
                let mut a = Array1::<f64>::zeros(5);
                for j in 0..5 {
                    let mut v = net.input.bias[j];
                    for i in 0..6 {
                        v += x[i] * net.input.weight[[i, j]];
                    }
                    a[j] = v.max(0.0);
                }
                h = gru_step(&net.gru, h.view(), a.view()).unwrap();
                for k in 0..5 {
                    let mut v = net.output.bias[k];
                    for j in 0..5 {
                        v += h[j] * net.output.weight[[j, k]];
                    }
                    assert!((v - q[[t, s, k]]).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn unroll_and_step_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let net = random_net(6, 5, &mut rng);
        let inputs = Array3::from_shape_fn((3, 2, 6), |_| rng.gen_range(-1.0..1.0));
        let (q, _) = net.unroll(inputs.view());
        let mut h = Array2::zeros((2, 5));
        for t in 0..3 {
            let (qs, hn) = net.step(h.view(), inputs.slice(s![t, .., ..]));
            assert_eq!(qs, q.slice(s![t, .., ..]));
            h = hn;
        }
    }

    #[test]
    fn sum_of_q_gives_ones_on_output_bias() {
        let net = AgentNet::<f64>::zeros(4, 3, 5);
        let inputs = Array3::from_elem((1, 1, 4), 1.0);
        let (_, tape) = net.unroll(inputs.view());
        let dq = Array3::from_elem((1, 1, 5), 1.0);
        let g = net.backward(&tape, dq.view());
        assert!(g.output.bias.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn bptt_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let net = random_net(7, 4, &mut rng);
        let inputs = Array3::from_shape_fn((5, 3, 7), |_| rng.gen_range(-1.0..1.0));
        let weights = Array3::from_shape_fn((5, 3, 5), |_| rng.gen_range(-1.0..1.0));
        let loss = |p: &AgentNet<f64>| {
            let (q, _) = p.unroll(inputs.view());
            Zip::from(&q).and(&weights).fold(0.0, |acc, &q, &w| acc + 0.5 * w * q * q + w * q)
        };
        let (q, tape) = net.unroll(inputs.view());
        let dq = Zip::from(&q).and(&weights).map_collect(|&q, &w| w * q + w);
        let g = net.backward(&tape, dq.view());
        let err = grad_check(&net, &g, loss, 1e-5);
        assert!(err < 1e-4, "max relative error {err}");
    }
}
