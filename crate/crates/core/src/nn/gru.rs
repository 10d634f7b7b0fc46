use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Zip};
use rand::Rng;

use super::{cast_array, sigmoid, uniform_matrix, Real};
use crate::error::{Error, Result};

/// Gated recurrent unit with gates stored side by side.
///
/// Column blocks of `w_x` and `bias` are `[update | reset | candidate]`,
/// `u_zr` holds the recurrent weights of the update and reset gates and
/// `u_c` those of the candidate:
///
/// ```text
/// z  = σ(x Wz + h Uz + bz)
/// r  = σ(x Wr + h Ur + br)
/// ĥ  = tanh(x Wc + (r∘h) Uc + bc)
/// h' = z∘h + (1 − z)∘ĥ
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct GruCell<F> {
    /// `[input, 3·hidden]`
    pub w_x: Array2<F>,
    /// `[hidden, 2·hidden]`
    pub u_zr: Array2<F>,
    /// `[hidden, hidden]`
    pub u_c: Array2<F>,
    /// `[3·hidden]`
    pub bias: Array1<F>,
}

/// Activations of one batched GRU step kept for the backward pass.
#[derive(Debug, Clone)]
pub(crate) struct GruCache<F> {
    pub h_prev: Array2<F>,
    pub z: Array2<F>,
    pub r: Array2<F>,
    pub c: Array2<F>,
}

impl<F: Real> GruCell<F> {
    pub fn new<R: Rng + ?Sized>(input: usize, hidden: usize, rng: &mut R) -> Self {
        GruCell {
            w_x: uniform_matrix(input, 3 * hidden, input, rng),
            u_zr: uniform_matrix(hidden, 2 * hidden, hidden, rng),
            u_c: uniform_matrix(hidden, hidden, hidden, rng),
            bias: Array1::zeros(3 * hidden),
        }
    }

    pub fn zeros(input: usize, hidden: usize) -> Self {
        GruCell {
            w_x: Array2::zeros((input, 3 * hidden)),
            u_zr: Array2::zeros((hidden, 2 * hidden)),
            u_c: Array2::zeros((hidden, hidden)),
            bias: Array1::zeros(3 * hidden),
        }
    }

    pub fn hidden(&self) -> usize {
        self.u_c.nrows()
    }

    pub fn input(&self) -> usize {
        self.w_x.nrows()
    }

    /// Input projection `x W_x + b` for many rows at once.
    pub(crate) fn project_input(&self, x: ArrayView2<'_, F>) -> Array2<F> {
        let mut p = x.dot(&self.w_x);
        p += &self.bias;
        p
    }

    /// One step given the precomputed input projection `xw` (`[S, 3H]`).
    pub(crate) fn step_projected(&self, h: ArrayView2<'_, F>, xw: ArrayView2<'_, F>) -> (Array2<F>, GruCache<F>) {
        let hd = self.hidden();
        let hu = h.dot(&self.u_zr);
        let mut z = xw.slice(s![.., 0..hd]).to_owned();
        z += &hu.slice(s![.., 0..hd]);
        z.mapv_inplace(sigmoid);
        let mut r = xw.slice(s![.., hd..2 * hd]).to_owned();
        r += &hu.slice(s![.., hd..2 * hd]);
        r.mapv_inplace(sigmoid);
        let rh = &r * &h;
        let mut c = rh.dot(&self.u_c);
        c += &xw.slice(s![.., 2 * hd..3 * hd]);
        c.mapv_inplace(|v| v.tanh());
        let mut h_new = Array2::zeros(h.raw_dim());
        Zip::from(&mut h_new)
            .and(&z)
            .and(&h)
            .and(&c)
            .for_each(|o, &z, &h, &c| *o = z * h + (F::one() - z) * c);
        (
            h_new,
            GruCache {
                h_prev: h.to_owned(),
                z,
                r,
                c,
            },
        )
    }

    pub fn step(&self, h: ArrayView2<'_, F>, x: ArrayView2<'_, F>) -> Array2<F> {
        let xw = self.project_input(x);
        self.step_projected(h, xw.view()).0
    }

    pub fn cast<G: Real>(&self) -> GruCell<G> {
        GruCell {
            w_x: cast_array(&self.w_x),
            u_zr: cast_array(&self.u_zr),
            u_c: cast_array(&self.u_c),
            bias: cast_array(&self.bias),
        }
    }
}

/// Single-vector GRU update.
pub fn gru_step<F: Real>(cell: &GruCell<F>, h: ArrayView1<'_, F>, x: ArrayView1<'_, F>) -> Result<Array1<F>> {
    if h.len() != cell.hidden() || x.len() != cell.input() {
        return Err(Error::Usage(format!(
            "gru_step expects hidden {} and input {}, got {} and {}",
            cell.hidden(),
            cell.input(),
            h.len(),
            x.len()
        )));
    }
    let h2 = h.insert_axis(ndarray::Axis(0));
    let x2 = x.insert_axis(ndarray::Axis(0));
    Ok(cell.step(h2, x2).row(0).to_owned())
}
