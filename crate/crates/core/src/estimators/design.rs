use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::lds::TrajectoryPanel;

/// Per-node regressors `X_l = [x_{s}, …, x_{e-1}]` and responses
/// `X̃_l = [x_{s+1}, …, x_e]` for a window `[s, e)` of transitions.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignSystem {
    pub d: usize,
    pub horizon: usize,
    pub x: Vec<DMatrix<f64>>,
    pub x_next: Vec<DMatrix<f64>>,
}

pub fn build_design(panel: &TrajectoryPanel, t_start: usize, t_end: usize) -> Result<DesignSystem> {
    if t_end <= t_start {
        return Err(Error::InvalidArgument(format!("empty design window [{t_start}, {t_end})")));
    }
    if t_end > panel.horizon() {
        return Err(Error::InvalidArgument(format!(
            "design window end {t_end} exceeds panel horizon {}",
            panel.horizon()
        )));
    }
    let horizon = t_end - t_start;
    let x = panel.states.iter().map(|s| s.columns(t_start, horizon).into_owned()).collect();
    let x_next = panel.states.iter().map(|s| s.columns(t_start + 1, horizon).into_owned()).collect();
    Ok(DesignSystem { d: panel.d, horizon, x, x_next })
}

impl DesignSystem {
    pub fn new(x: Vec<DMatrix<f64>>, x_next: Vec<DMatrix<f64>>) -> Result<Self> {
        if x.is_empty() || x.len() != x_next.len() {
            return Err(Error::InvalidArgument("design needs matching, nonempty regressor and response lists".into()));
        }
        let (d, t) = x[0].shape();
        if d == 0 || t == 0 || x.iter().chain(&x_next).any(|m| m.shape() != (d, t)) {
            return Err(Error::InvalidArgument("all design blocks must be d x T with T >= 1".into()));
        }
        Ok(DesignSystem { d, horizon: t, x, x_next })
    }

    pub fn num_nodes(&self) -> usize {
        self.x.len()
    }

    /// `X_l X_l^T`.
    pub fn gram(&self, l: usize) -> DMatrix<f64> {
        &self.x[l] * self.x[l].transpose()
    }

    /// `X̃_l X_l^T`.
    pub fn cross(&self, l: usize) -> DMatrix<f64> {
        &self.x_next[l] * self.x[l].transpose()
    }

    /// `(1/2m) Σ_l ‖X̃_l − A_l X_l‖_F²` for a stacked coefficient vector.
    pub fn loss(&self, a: &[f64]) -> f64 {
        let d = self.d;
        let m = self.num_nodes();
        let mut s = 0.0;
        for l in 0..m {
            let al = DMatrix::from_column_slice(d, d, &a[l * d * d..(l + 1) * d * d]);
            s += (&self.x_next[l] - al * &self.x[l]).norm_squared();
        }
        s / (2.0 * m as f64)
    }

    /// `(1/(m T)) Σ_l ‖A_l X_l − X̃_l‖_F²`, the one-step prediction error.
    pub fn prediction_mse(&self, a: &[f64]) -> f64 {
        2.0 * self.loss(a) / self.horizon as f64
    }

    /// Dense `Q = blkdiag(X_l^T ⊗ I_d)`; only meant for small checks.
    pub fn dense_q(&self) -> DMatrix<f64> {
        let (d, t, m) = (self.d, self.horizon, self.num_nodes());
        let mut q = DMatrix::zeros(m * d * t, m * d * d);
        for l in 0..m {
            let xt = self.x[l].transpose();
            let k = xt.kronecker(&DMatrix::<f64>::identity(d, d));
            q.view_mut((l * d * t, l * d * d), (d * t, d * d)).copy_from(&k);
        }
        q
    }

    /// Stacked response `(vec X̃_1, …, vec X̃_m)`.
    pub fn response(&self) -> Vec<f64> {
        self.x_next.iter().flat_map(|x| x.as_slice().iter().copied()).collect()
    }

    /// Multiplies every regressor and response by `c`.
    pub fn scaled(&self, c: f64) -> DesignSystem {
        DesignSystem {
            d: self.d,
            horizon: self.horizon,
            x: self.x.iter().map(|x| x * c).collect(),
            x_next: self.x_next.iter().map(|x| x * c).collect(),
        }
    }
}
