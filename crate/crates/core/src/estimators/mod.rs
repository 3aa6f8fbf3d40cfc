//! Estimators for the per-node system matrices: the graph-TV penalized least
//! squares fit, four baselines, a warm-started regularization path and
//! validation-based selection.

mod baselines;
mod design;
mod path;
mod tv;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

pub use baselines::{
    fit_group_lasso, fit_laplacian, fit_ols_individual, fit_ols_pooled, fit_persistence, group_lasso_lambda_max,
    laplacian_lambda_max, GroupLassoOptions,
};
pub use design::{build_design, DesignSystem};
pub use path::{geometric_grid, method_path, regularization_path, PathOptions, PathResult, MAX_GRID};
pub use tv::{fit_graph_tv, fit_graph_tv_with, lambda_max, lambda_max_with, WarmStart};

pub use crate::theory::theoretical_lambda;

use crate::graph::Graph;
use crate::lds::{row_major, tv_norm};

pub mod flags {
    /// Iteration cap reached; the best iterate is returned.
    pub const MAX_ITER: &str = "max_iter";
    /// A tiny ridge was added to make a factorization succeed.
    pub const RIDGE: &str = "ridge";
    /// A Gram matrix was singular; a pseudoinverse was used.
    pub const RANK_DEFICIENT: &str = "rank_deficient";
    /// Converged on residuals without a polished optimality certificate.
    pub const RESIDUAL_STOP: &str = "residual_stop";
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    GraphTv,
    OlsIndividual,
    OlsPooled,
    Laplacian,
    GroupLasso,
    Persistence,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::GraphTv => "graph_tv",
            Method::OlsIndividual => "ols_ind",
            Method::OlsPooled => "ols_pooled",
            Method::Laplacian => "laplacian",
            Method::GroupLasso => "group_lasso",
            Method::Persistence => "persistence",
        }
    }

    pub fn parse(s: &str) -> Option<Method> {
        Some(match s {
            "graph_tv" | "tv" => Method::GraphTv,
            "ols_ind" | "ols_individual" => Method::OlsIndividual,
            "ols_pooled" | "pooled" => Method::OlsPooled,
            "laplacian" => Method::Laplacian,
            "group_lasso" => Method::GroupLasso,
            "persistence" => Method::Persistence,
            _ => return None,
        })
    }

    /// Whether the method has a tuning parameter chosen on validation data.
    pub fn is_penalized(&self) -> bool {
        matches!(self, Method::GraphTv | Method::Laplacian | Method::GroupLasso)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Initial augmented-Lagrangian weight, relative to the mean diagonal of
    /// the scaled Gram matrix.
    pub rho: f64,
    pub max_iter: usize,
    pub tol_primal: f64,
    pub tol_dual: f64,
    pub kkt_tol: f64,
    pub max_rho_updates: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions { rho: 1.0, max_iter: 5000, tol_primal: 1e-8, tol_dual: 1e-8, kkt_tol: 1e-6, max_rho_updates: 10 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub method: Method,
    pub d: usize,
    pub lambda: f64,
    /// Stacked coefficients, node-major, column-major `vec(Â_l)` per node.
    pub a_hat: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub kkt_gap: f64,
    pub converged: bool,
    pub flags: Vec<String>,
    /// Dual variable on `D ⊗ I_{d²}` rows (graph-TV only), edge-major.
    pub dual: Option<Vec<f64>>,
}

impl FitResult {
    pub(crate) fn closed_form(method: Method, d: usize, lambda: f64, a_hat: Vec<f64>, objective: f64) -> Self {
        FitResult {
            method,
            d,
            lambda,
            a_hat,
            objective,
            iterations: 0,
            primal_residual: 0.0,
            dual_residual: 0.0,
            kkt_gap: 0.0,
            converged: true,
            flags: Vec::new(),
            dual: None,
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.a_hat.len() / (self.d * self.d)
    }

    pub fn matrix(&self, l: usize) -> DMatrix<f64> {
        let b = self.d * self.d;
        DMatrix::from_column_slice(self.d, self.d, &self.a_hat[l * b..(l + 1) * b])
    }

    pub fn matrices(&self) -> Vec<DMatrix<f64>> {
        (0..self.num_nodes()).map(|l| self.matrix(l)).collect()
    }

    pub fn has_flag(&self, f: &str) -> bool {
        self.flags.iter().any(|x| x == f)
    }

    pub(crate) fn flag(&mut self, f: &str) {
        if !self.has_flag(f) {
            self.flags.push(f.to_string());
        }
    }

    pub fn tv_norm(&self, g: &Graph) -> f64 {
        tv_norm(&self.a_hat, self.d, g)
    }

    pub fn to_file(&self) -> FitFile {
        FitFile {
            method: self.method,
            lambda: self.lambda,
            d: self.d,
            a_hat: self.matrices().iter().map(row_major).collect(),
            objective: self.objective,
            iterations: self.iterations,
            kkt_gap: self.kkt_gap,
            converged: self.converged,
            flags: self.flags.clone(),
        }
    }
}

/// JSON form of a fit; `a_hat` holds one row-major `d x d` matrix per node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitFile {
    pub method: Method,
    pub lambda: f64,
    pub d: usize,
    pub a_hat: Vec<Vec<f64>>,
    pub objective: f64,
    pub iterations: usize,
    pub kkt_gap: f64,
    pub converged: bool,
    pub flags: Vec<String>,
}

/// `(1/2m)‖x̃ − Qa‖² + λ‖(D ⊗ I)a‖₁`.
pub fn tv_objective(ds: &DesignSystem, g: &Graph, lambda: f64, a: &[f64]) -> f64 {
    ds.loss(a) + lambda * tv_norm(a, ds.d, g)
}

/// Row-decoupled quadratic data: the loss equals
/// `Σ_i ½ w_iᵀ H w_i − c_iᵀ w_i + const` where `w_i[l·d + j] = A_l[i, j]`,
/// `H = blkdiag(X_l X_lᵀ)/m` and `c_i[l·d + j] = (X̃_l X_lᵀ)[i, j]/m`.
#[derive(Debug, Clone)]
pub(crate) struct Quadratic {
    pub d: usize,
    pub m: usize,
    /// Per-node `X_l X_lᵀ / m`.
    pub blocks: Vec<DMatrix<f64>>,
    /// `md x d`; column `i` is `c_i`.
    pub linear: DMatrix<f64>,
}

impl Quadratic {
    pub fn new(ds: &DesignSystem) -> Self {
        let (d, m) = (ds.d, ds.num_nodes());
        let inv_m = 1.0 / m as f64;
        let blocks: Vec<DMatrix<f64>> = (0..m).map(|l| ds.gram(l) * inv_m).collect();
        let mut linear = DMatrix::zeros(m * d, d);
        for l in 0..m {
            let c = ds.cross(l) * inv_m;
            for i in 0..d {
                for j in 0..d {
                    linear[(l * d + j, i)] = c[(i, j)];
                }
            }
        }
        Quadratic { d, m, blocks, linear }
    }

    /// `H W`.
    pub fn apply(&self, w: &DMatrix<f64>) -> DMatrix<f64> {
        let d = self.d;
        let mut out = DMatrix::zeros(w.nrows(), w.ncols());
        for (l, b) in self.blocks.iter().enumerate() {
            let r = b * w.rows(l * d, d);
            out.rows_mut(l * d, d).copy_from(&r);
        }
        out
    }

    /// `H W − C`.
    pub fn gradient(&self, w: &DMatrix<f64>) -> DMatrix<f64> {
        self.apply(w) - &self.linear
    }

    pub fn mean_diagonal(&self) -> f64 {
        let s: f64 = self.blocks.iter().map(|b| b.trace()).sum();
        s / (self.m * self.d) as f64
    }

    /// Dense `H` plus `scale · (L ⊗ I_d)` built from `(tail, head)` pairs.
    pub fn system(&self, rows: &[(usize, usize)], scale: f64) -> DMatrix<f64> {
        let d = self.d;
        let n = self.m * d;
        let mut k = DMatrix::zeros(n, n);
        for (l, b) in self.blocks.iter().enumerate() {
            k.view_mut((l * d, l * d), (d, d)).copy_from(b);
        }
        for &(u, v) in rows {
            for j in 0..d {
                let (a, b) = (u * d + j, v * d + j);
                k[(a, a)] += scale;
                k[(b, b)] += scale;
                k[(a, b)] -= scale;
                k[(b, a)] -= scale;
            }
        }
        k
    }
}

/// Row-layout `W` (`md x d`) to stacked column-major `vec(A_l)`.
pub(crate) fn unpack(w: &DMatrix<f64>, d: usize) -> Vec<f64> {
    let m = w.nrows() / d;
    let mut a = vec![0.0; m * d * d];
    for l in 0..m {
        for i in 0..d {
            for j in 0..d {
                a[l * d * d + i + d * j] = w[(l * d + j, i)];
            }
        }
    }
    a
}

pub(crate) fn pack(a: &[f64], d: usize) -> DMatrix<f64> {
    let m = a.len() / (d * d);
    let mut w = DMatrix::zeros(m * d, d);
    for l in 0..m {
        for i in 0..d {
            for j in 0..d {
                w[(l * d + j, i)] = a[l * d * d + i + d * j];
            }
        }
    }
    w
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pack_round_trip() {
        let a: Vec<f64> = (0..12).map(|x| x as f64).collect();
        assert_eq!(unpack(&pack(&a, 2), 2), a);
        let w = pack(&a, 2);
        // Node 1, A[1, 0] sits at vec index 1 + 2*0 = 1 → a[4 + 1].
        assert_eq!(w[(2, 1)], a[5]);
    }
}
