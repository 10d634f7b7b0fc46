//! Linear-variance novelty bonus with exponential forgetting.
//!
//! The estimator tracks the inverse of the decayed feature correlation
//!
//! ```text
//! C_t = (1 − α) C_{t−1} + Σ_a φ_a φ_aᵀ,    C_0 = reg · I
//! ```
//!
//! with one rescale and one Sherman–Morrison step per feature, so each update
//! costs O(dim²). The bonus is shared by all agents and uses the most
//! uncertain agent:
//!
//! ```text
//! r⁺ = σ · max(0, max_a sqrt(φ_aᵀ C⁻¹ φ_a) − b)
//! ```

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::config::{BiasMode, IntrinsicConfig};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct Estimator {
    dim: usize,
    inv_c: Array2<f64>,
    sigma: f64,
    alpha: f64,
    bias: f64,
    bias_mode: BiasMode,
    reg: f64,
    clamps: u64,
}

impl Estimator {
    /// Starts from `C_0 = reg · I`.
    pub fn new(dim: usize, sigma: f64, alpha: f64, bias: f64, reg: f64) -> Result<Self> {
        if !(reg > 0.0) {
            return Err(Error::Config(format!("intrinsic reg = {reg} must be positive")));
        }
        if !(sigma >= 0.0) || !(0.0..1.0).contains(&alpha) || !(bias >= 0.0) {
            return Err(Error::Config(format!(
                "intrinsic parameters out of range: sigma {sigma}, alpha {alpha}, bias {bias}"
            )));
        }
        Ok(Estimator {
            dim,
            inv_c: Array2::eye(dim) / reg,
            sigma,
            alpha,
            bias,
            bias_mode: BiasMode::Constant,
            reg,
            clamps: 0,
        })
    }

    pub fn from_config(dim: usize, cfg: &IntrinsicConfig) -> Result<Self> {
        let mut e = Self::new(dim, cfg.sigma, cfg.alpha, cfg.bias, cfg.reg)?;
        e.bias_mode = cfg.bias_mode;
        Ok(e)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn inverse(&self) -> &Array2<f64> {
        &self.inv_c
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn bias(&self) -> f64 {
        self.bias
    }

    pub fn reg(&self) -> f64 {
        self.reg
    }

    /// Number of negative quadratic forms clamped to zero so far.
    pub fn clamp_count(&self) -> u64 {
        self.clamps
    }

    fn check(&self, features: &ArrayView2<'_, f64>) -> Result<()> {
        if features.ncols() != self.dim {
            return Err(Error::Usage(format!(
                "feature length {} does not match estimator dimension {}",
                features.ncols(),
                self.dim
            )));
        }
        Ok(())
    }

    /// Decays `C` by `1 − α` and adds one outer product per row of `features`.
    pub fn update(&mut self, features: ArrayView2<'_, f64>) -> Result<()> {
        self.check(&features)?;
        if self.alpha > 0.0 {
            self.inv_c /= 1.0 - self.alpha;
        }
        for phi in features.rows() {
            let b_phi = self.inv_c.dot(&phi);
            let denom = 1.0 + phi.dot(&b_phi);
            let col = b_phi.view().insert_axis(ndarray::Axis(1));
            let row = b_phi.view().insert_axis(ndarray::Axis(0));
            ndarray::linalg::general_mat_mul(-1.0 / denom, &col, &row, 1.0, &mut self.inv_c);
        }
        let sym = (&self.inv_c + &self.inv_c.t()) * 0.5;
        self.inv_c = sym;
        Ok(())
    }

    fn quadratic(&self, phi: ArrayView1<'_, f64>) -> f64 {
        phi.dot(&self.inv_c.dot(&phi))
    }

    /// `sqrt(φᵀ C⁻¹ φ)`, with negative round-off clamped to zero.
    pub fn uncertainty(&mut self, phi: ArrayView1<'_, f64>) -> f64 {
        let q = self.quadratic(phi);
        if q < 0.0 {
            self.clamps += 1;
            0.0
        } else {
            q.sqrt()
        }
    }

    /// Shared bonus for one time step, one feature row per agent.
    pub fn bonus(&mut self, features: ArrayView2<'_, f64>) -> Result<f64> {
        self.check(&features)?;
        let mut best = f64::NEG_INFINITY;
        for phi in features.rows() {
            best = best.max(self.uncertainty(phi));
        }
        if !best.is_finite() {
            return Ok(0.0);
        }
        let r = self.sigma * (best - self.bias).max(0.0);
        if self.bias_mode == BiasMode::RunningAverage {
            self.bias = (1.0 - self.alpha) * self.bias + self.alpha * best;
        }
        Ok(r)
    }
}

/// Per-action linear-regression variance
/// `σ² φᵀ (Σ_{i: u_i = u} φ_i φ_iᵀ + reg·I)⁻¹ φ`, computed by direct
/// factorisation. Used as a reference for the incremental estimator.
pub fn per_action_variance(
    data: &[(Array1<f64>, usize)],
    sigma_noise: f64,
    query: ArrayView1<'_, f64>,
    action: usize,
    reg: f64,
) -> f64 {
    let dim = query.len();
    let mut design = Array2::<f64>::eye(dim) * reg;
    for (phi, u) in data {
        if *u == action {
            for i in 0..dim {
                for j in 0..dim {
                    design[[i, j]] += phi[i] * phi[j];
                }
            }
        }
    }
    let x = cholesky_solve(&design, query);
    sigma_noise * sigma_noise * query.dot(&x)
}

fn cholesky_solve(a: &Array2<f64>, b: ArrayView1<'_, f64>) -> Array1<f64> {
    let n = a.nrows();
    let mut l = Array2::<f64>::zeros((n, n));
    for j in 0..n {
        let mut d = a[[j, j]];
        for k in 0..j {
            d -= l[[j, k]] * l[[j, k]];
        }
        let d = d.sqrt();
        l[[j, j]] = d;
        for i in j + 1..n {
            let mut s = a[[i, j]];
            for k in 0..j {
                s -= l[[i, k]] * l[[j, k]];
            }
            l[[i, j]] = s / d;
        }
    }
    let mut y = Array1::<f64>::zeros(n);
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[[i, k]] * y[k];
        }
        y[i] = s / l[[i, i]];
    }
    let mut x = Array1::<f64>::zeros(n);
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in i + 1..n {
            s -= l[[k, i]] * x[k];
        }
        x[i] = s / l[[i, i]];
    }
    x
}
