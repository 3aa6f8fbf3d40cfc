//! Ground-truth system ensembles, trajectory simulation and the
//! system-dependent quantities: controllability Grammians, the lifted
//! block-Toeplitz norm and the Grammian dispersion with its upper bounds.
//!
//! Per-node coefficient vectors are column-major `vec(A)`, so entry
//! `a[i + d·j] = A[i, j]`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::cheeger_exact_small;
use crate::error::{Error, Result};
use crate::graph::{spectrum, Graph};
use crate::linalg::spectral_norm;

/// Off-diagonal entry of the 2x2 template.
pub const TEMPLATE_OFFDIAG: f64 = 0.1;
/// Lower-right entry of the 2x2 template.
pub const TEMPLATE_CORNER: f64 = 0.6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Template {
    /// `[[β_l, 0.1], [0, 0.6]]` with β_l taken from the node's field value.
    Beta2x2,
    Custom,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SystemEnsemble {
    pub d: usize,
    pub matrices: Vec<DMatrix<f64>>,
    pub beta_field: Option<Vec<f64>>,
    pub template: Template,
}

impl SystemEnsemble {
    pub fn new(d: usize, matrices: Vec<DMatrix<f64>>) -> Result<Self> {
        if d == 0 || matrices.is_empty() {
            return Err(Error::InvalidArgument("ensemble needs d >= 1 and at least one node".into()));
        }
        if let Some(l) = matrices.iter().position(|a| a.shape() != (d, d)) {
            return Err(Error::InvalidArgument(format!("matrix for node {l} is not {d}x{d}")));
        }
        Ok(SystemEnsemble { d, matrices, beta_field: None, template: Template::Custom })
    }

    pub fn num_nodes(&self) -> usize {
        self.matrices.len()
    }

    /// `max_l ‖A_l‖₂`.
    pub fn max_spectral_norm(&self) -> f64 {
        self.matrices.iter().map(spectral_norm).fold(0.0, f64::max)
    }

    /// Stacked coefficient vector, node-major, column-major within a node.
    pub fn stacked(&self) -> Vec<f64> {
        self.matrices.iter().flat_map(|a| a.as_slice().iter().copied()).collect()
    }

    pub fn from_stacked(d: usize, a: &[f64]) -> Result<Self> {
        let b = d * d;
        if d == 0 || a.is_empty() || a.len() % b != 0 {
            return Err(Error::InvalidArgument(format!("stacked length {} is not a multiple of d² = {b}", a.len())));
        }
        SystemEnsemble::new(d, a.chunks(b).map(|c| DMatrix::from_column_slice(d, d, c)).collect())
    }

    /// `‖(D ⊗ I) a‖₁`.
    pub fn tv_norm(&self, g: &Graph) -> f64 {
        tv_norm(&self.stacked(), self.d, g)
    }

    /// Coefficient indices (edge-major) where `(D ⊗ I) a` is nonzero.
    pub fn tv_support(&self, g: &Graph, tol: f64) -> Vec<usize> {
        let a = self.stacked();
        let b = self.d * self.d;
        let mut out = Vec::new();
        for (j, &(u, v)) in g.edges().iter().enumerate() {
            for c in 0..b {
                if (a[v * b + c] - a[u * b + c]).abs() > tol {
                    out.push(j * b + c);
                }
            }
        }
        out
    }

    pub fn to_file(&self) -> EnsembleFile {
        EnsembleFile {
            d: self.d,
            template: self.template,
            beta_field: self.beta_field.clone(),
            matrices: self.matrices.iter().map(|a| row_major(a)).collect(),
        }
    }

    pub fn from_file(f: &EnsembleFile) -> Result<Self> {
        let d = f.d;
        let mut mats = Vec::with_capacity(f.matrices.len());
        for (l, m) in f.matrices.iter().enumerate() {
            if m.len() != d * d {
                return Err(Error::Data(format!("matrix {} has {} entries, expected {}", l + 1, m.len(), d * d)));
            }
            mats.push(DMatrix::from_row_slice(d, d, m));
        }
        let mut e = SystemEnsemble::new(d, mats)?;
        if let Some(b) = &f.beta_field {
            if b.len() != e.num_nodes() {
                return Err(Error::Data("beta_field length does not match the node count".into()));
            }
        }
        e.beta_field = f.beta_field.clone();
        e.template = f.template;
        Ok(e)
    }
}

/// JSON form of an ensemble; matrices are flattened row-major per node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleFile {
    pub d: usize,
    pub template: Template,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta_field: Option<Vec<f64>>,
    pub matrices: Vec<Vec<f64>>,
}

pub(crate) fn row_major(a: &DMatrix<f64>) -> Vec<f64> {
    a.transpose().as_slice().to_vec()
}

/// `‖(D ⊗ I_{d²}) a‖₁` for a stacked coefficient vector.
pub fn tv_norm(a: &[f64], d: usize, g: &Graph) -> f64 {
    let b = d * d;
    g.edges()
        .iter()
        .map(|&(u, v)| (0..b).map(|c| (a[v * b + c] - a[u * b + c]).abs()).sum::<f64>())
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Field {
    /// Three graph-coherent groups with values `scale`, `0`, `-scale`.
    Piecewise { scale: f64 },
    /// `scale · cos(ω t₁) cos(ω t₂)` on the row-major grid index of each node.
    Smooth { scale: f64, omega: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldSpec {
    pub field: Field,
    /// When set, the field is rescaled so that `max |β_u - β_v|` over edges
    /// equals this value.
    pub jump: Option<f64>,
}

/// Node order along the Fiedler vector, ties broken by node index. The sign
/// is fixed so that the first clearly nonzero coordinate is negative.
pub fn spectral_order(g: &Graph) -> Result<Vec<usize>> {
    let m = g.num_nodes();
    if m < 3 {
        return Ok((0..m).collect());
    }
    let sp = spectrum(g)?;
    let mut v = sp.fiedler_vector().expect("m >= 2");
    if let Some(first) = v.iter().find(|x| x.abs() > 1e-9) {
        if *first > 0.0 {
            v.neg_mut();
        }
    }
    let key = |i: usize| (v[i] * 1e9).round() as i64;
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by_key(|&i| (key(i), i));
    Ok(order)
}

/// Scalar field over the nodes before any rescaling.
pub fn raw_field(g: &Graph, field: &Field) -> Result<Vec<f64>> {
    let m = g.num_nodes();
    match *field {
        Field::Piecewise { scale } => {
            if !(scale >= 0.0) {
                return Err(Error::InvalidArgument(format!("field scale {scale} must be nonnegative")));
            }
            let values = [scale, 0.0, -scale];
            let mut beta = vec![0.0; m];
            for (pos, &node) in spectral_order(g)?.iter().enumerate() {
                beta[node] = values[pos * 3 / m];
            }
            Ok(beta)
        }
        Field::Smooth { scale, omega } => {
            if !(scale >= 0.0) || !omega.is_finite() {
                return Err(Error::InvalidArgument("smooth field needs scale >= 0 and finite omega".into()));
            }
            let side = ((m as f64).sqrt().floor() as usize).max(1);
            Ok((0..m)
                .map(|l| {
                    let t1 = (l % side) as f64;
                    let t2 = (l / side) as f64;
                    scale * (omega * t1).cos() * (omega * t2).cos()
                })
                .collect())
        }
    }
}

pub fn max_jump(beta: &[f64], g: &Graph) -> f64 {
    g.edges().iter().map(|&(u, v)| (beta[v] - beta[u]).abs()).fold(0.0, f64::max)
}

pub fn beta_field(g: &Graph, spec: &FieldSpec) -> Result<Vec<f64>> {
    let mut beta = raw_field(g, &spec.field)?;
    if let Some(target) = spec.jump {
        if !(target >= 0.0) {
            return Err(Error::InvalidArgument(format!("jump target {target} must be nonnegative")));
        }
        let current = max_jump(&beta, g);
        if current <= 1e-15 {
            if target > 0.0 {
                return Err(Error::InvalidArgument(
                    "field is constant over the graph and cannot be rescaled to a positive jump".into(),
                ));
            }
        } else {
            let s = target / current;
            beta.iter_mut().for_each(|b| *b *= s);
        }
    }
    Ok(beta)
}

/// `[[β, 0.1], [0, 0.6]]`.
pub fn template_matrix(beta: f64) -> DMatrix<f64> {
    DMatrix::from_row_slice(2, 2, &[beta, TEMPLATE_OFFDIAG, 0.0, TEMPLATE_CORNER])
}

pub fn gen_ground_truth(g: &Graph, spec: &FieldSpec) -> Result<SystemEnsemble> {
    let beta = beta_field(g, spec)?;
    Ok(SystemEnsemble {
        d: 2,
        matrices: beta.iter().map(|&b| template_matrix(b)).collect(),
        beta_field: Some(beta),
        template: Template::Beta2x2,
    })
}

/// Independent Gaussian matrices, each rescaled to a spectral norm drawn
/// uniformly from `[rho_max / 4, rho_max]`.
pub fn random_stable_ensemble(m: usize, d: usize, rho_max: f64, seed: u64) -> Result<SystemEnsemble> {
    if !(0.0..1.0).contains(&rho_max) {
        return Err(Error::Unstable { rho: rho_max });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let radius = Uniform::new_inclusive(0.25 * rho_max, rho_max).expect("valid range");
    let mats = (0..m)
        .map(|_| {
            let a = DMatrix::from_fn(d, d, |_, _| StandardNormal.sample(&mut rng));
            let n = spectral_norm(&a);
            let r: f64 = radius.sample(&mut rng);
            if n > 0.0 {
                a * (r / n)
            } else {
                a
            }
        })
        .collect();
    SystemEnsemble::new(d, mats)
}

/// States `x_{l,0..T}` per node, each stored as a `d x (T+1)` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryPanel {
    pub d: usize,
    pub states: Vec<DMatrix<f64>>,
    pub noise_seed: Option<u64>,
}

impl TrajectoryPanel {
    pub fn new(d: usize, states: Vec<DMatrix<f64>>) -> Result<Self> {
        if states.is_empty() {
            return Err(Error::InvalidArgument("panel has no nodes".into()));
        }
        let n = states[0].ncols();
        if states.iter().any(|s| s.nrows() != d || s.ncols() != n) || n == 0 {
            return Err(Error::InvalidArgument("panel states must all be d x (T+1)".into()));
        }
        Ok(TrajectoryPanel { d, states, noise_seed: None })
    }

    pub fn num_nodes(&self) -> usize {
        self.states.len()
    }

    /// Number of transitions `T_total`; states are indexed `0..=T_total`.
    pub fn horizon(&self) -> usize {
        self.states[0].ncols() - 1
    }
}

#[derive(Debug, Clone, Default)]
pub struct SimOptions {
    /// Replace the Gaussian innovations by zeros.
    pub zero_noise: bool,
    /// Initial states; defaults to zero.
    pub x0: Option<Vec<DVector<f64>>>,
}

pub fn simulate_panel(e: &SystemEnsemble, t_total: usize, seed: u64) -> Result<TrajectoryPanel> {
    simulate_panel_with(e, t_total, seed, &SimOptions::default())
}

/// Runs `x_{t+1} = A_l x_t + η_{t+1}`. Node `l` draws its innovations from
/// stream `l` of a ChaCha8 generator keyed by `seed`.
pub fn simulate_panel_with(e: &SystemEnsemble, t_total: usize, seed: u64, opts: &SimOptions) -> Result<TrajectoryPanel> {
    if t_total == 0 {
        return Err(Error::InvalidArgument("simulation horizon must be at least 1".into()));
    }
    let d = e.d;
    if let Some(x0) = &opts.x0 {
        if x0.len() != e.num_nodes() || x0.iter().any(|x| x.len() != d) {
            return Err(Error::InvalidArgument("initial states do not match the ensemble".into()));
        }
    }
    let states = e
        .matrices
        .par_iter()
        .enumerate()
        .map(|(l, a)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(l as u64);
            let mut x = DMatrix::zeros(d, t_total + 1);
            if let Some(x0) = &opts.x0 {
                x.set_column(0, &x0[l]);
            }
            for t in 0..t_total {
                let mut next = a * x.column(t);
                if !opts.zero_noise {
                    for i in 0..d {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        next[i] += z;
                    }
                }
                x.set_column(t + 1, &next);
            }
            x
        })
        .collect();
    Ok(TrajectoryPanel { d, states, noise_seed: if opts.zero_noise { None } else { Some(seed) } })
}

/// `Σ_{k=0}^{t} A^k (A^k)^T`.
pub fn grammian(a: &DMatrix<f64>, t: usize) -> DMatrix<f64> {
    let d = a.nrows();
    let mut p = DMatrix::identity(d, d);
    let mut g = DMatrix::identity(d, d);
    for _ in 0..t {
        p = a * &p;
        g += &p * p.transpose();
    }
    g
}

/// Dense `dT x dT` block lower-triangular matrix with block `(i, j)` equal
/// to `A^{i-j}` for `i >= j`.
pub fn lifted_matrix(a: &DMatrix<f64>, horizon: usize) -> DMatrix<f64> {
    let d = a.nrows();
    let n = d * horizon;
    let mut out = DMatrix::zeros(n, n);
    let mut p = DMatrix::identity(d, d);
    for k in 0..horizon {
        for j in 0..horizon - k {
            let i = j + k;
            out.view_mut((i * d, j * d), (d, d)).copy_from(&p);
        }
        p = a * &p;
    }
    out
}

/// Spectral norm of [`lifted_matrix`] without forming it, accurate to about
/// 1e-15 relative. Cost is `O(T d³)` per bisection step.
pub fn lifted_norm(a: &DMatrix<f64>, horizon: usize) -> f64 {
    let d = a.nrows();
    if horizon == 0 || d == 0 {
        return 0.0;
    }
    // Ã = (I − S ⊗ A)⁻¹ with S the block down-shift, so ‖Ã‖² is the inverse
    // of the smallest eigenvalue of the block-tridiagonal M = BᵀB,
    // B = I − S ⊗ A. That eigenvalue is bracketed by bisection on inertia
    // counts from a block LDLᵀ sweep.
    let ata = a.transpose() * a;
    let upper = (1.0 + spectral_norm(a)).powi(2);
    let (mut lo, mut hi) = (0.0f64, upper * (1.0 + 1e-12));
    for _ in 0..4000 {
        if hi - lo <= 1e-15 * hi {
            break;
        }
        let mid = if lo > 0.0 { (lo * hi).sqrt() } else { 0.5 * hi };
        if count_below(a, &ata, horizon, mid) > 0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    1.0 / (0.5 * (lo + hi)).sqrt()
}

/// Number of eigenvalues of `BᵀB` below `sigma` (Sylvester inertia of the
/// block pivots). Diagonal blocks are `I + AᵀA` except the last, which is
/// `I`; off-diagonal blocks are `−Aᵀ` above and `−A` below.
fn count_below(a: &DMatrix<f64>, ata: &DMatrix<f64>, horizon: usize, sigma: f64) -> usize {
    let d = a.nrows();
    let eye = DMatrix::<f64>::identity(d, d);
    let mut neg = 0;
    let mut prev_inv: Option<DMatrix<f64>> = None;
    for i in 0..horizon {
        let mut pivot = &eye - &eye * sigma;
        if i + 1 < horizon {
            pivot += ata;
        }
        if let Some(pi) = &prev_inv {
            // M_{i,i-1} D⁻¹ M_{i-1,i} = A D⁻¹ Aᵀ.
            pivot -= a * pi * a.transpose();
        }
        let pivot = (&pivot + pivot.transpose()) * 0.5;
        let eig = SymmetricEigen::new(pivot);
        let scale = eig.eigenvalues.amax().max(1.0);
        let mut vals = eig.eigenvalues.clone();
        for v in vals.iter_mut() {
            if v.abs() <= 1e-300 * scale {
                *v = -1e-300 * scale;
            }
        }
        neg += vals.iter().filter(|v| **v < 0.0).count();
        let inv_vals = vals.map(|v| 1.0 / v);
        prev_inv = Some(&eig.eigenvectors * DMatrix::from_diagonal(&inv_vals) * eig.eigenvectors.transpose());
    }
    neg
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrammianBundle {
    pub horizon: usize,
    /// `G_l = Σ_{t=1}^{T} Γ_{t-1}(A_l)`.
    pub per_node: Vec<DMatrix<f64>>,
    pub mean: DMatrix<f64>,
    pub delta_g: f64,
    /// `max_l` of the lifted-matrix spectral norm.
    pub beta: f64,
}

impl GrammianBundle {
    /// `max_{l,i} (G_l)_{ii}`.
    pub fn max_diagonal(&self) -> f64 {
        self.per_node.iter().flat_map(|g| g.diagonal().iter().copied().collect::<Vec<_>>()).fold(0.0, f64::max)
    }

    /// `Σ_l tr(G_l) = Σ_l Σ_{t=0}^{T-1} tr Γ_t(A_l)`.
    pub fn total_trace(&self) -> f64 {
        self.per_node.iter().map(|g| g.trace()).sum()
    }
}

/// Grammian aggregate per node: `Σ_{t=0}^{T-1} Γ_t(A)`.
pub fn grammian_sum(a: &DMatrix<f64>, horizon: usize) -> DMatrix<f64> {
    let d = a.nrows();
    let mut p = DMatrix::identity(d, d);
    let mut gamma = DMatrix::identity(d, d);
    let mut sum = DMatrix::zeros(d, d);
    for t in 0..horizon {
        if t > 0 {
            p = a * &p;
            gamma += &p * p.transpose();
        }
        sum += &gamma;
    }
    sum
}

/// Entrywise dispersion `max_{a,b} (Σ_l [(G_l)_{ba} - Ḡ_{ba}]²)^{1/2}`.
pub fn dispersion(per_node: &[DMatrix<f64>]) -> (DMatrix<f64>, f64) {
    let m = per_node.len() as f64;
    let mut mean = per_node[0].clone() * 0.0;
    for g in per_node {
        mean += g;
    }
    mean /= m;
    let mut acc = mean.clone() * 0.0;
    for g in per_node {
        acc += (g - &mean).map(|x| x * x);
    }
    let delta = acc.iter().fold(0.0f64, |a, &x| a.max(x)).sqrt();
    (mean, delta)
}

pub fn grammian_bundle(e: &SystemEnsemble, horizon: usize) -> Result<GrammianBundle> {
    if horizon == 0 {
        return Err(Error::InvalidArgument("horizon must be at least 1".into()));
    }
    let per_node: Vec<DMatrix<f64>> = e.matrices.par_iter().map(|a| grammian_sum(a, horizon)).collect();
    let beta = e.matrices.par_iter().map(|a| lifted_norm(a, horizon)).reduce(|| 0.0, f64::max);
    let (mean, delta_g) = dispersion(&per_node);
    Ok(GrammianBundle { horizon, per_node, mean, delta_g, beta })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LtValue {
    pub exact: f64,
    pub closed_bound: f64,
}

/// `2 Σ_{s=1}^{T-1} (T-s) s ρ^{2s-1}` and its closed-form bound
/// `2ρT / (1-ρ²)²`.
pub fn l_t(rho: f64, horizon: usize) -> Result<LtValue> {
    if !(0.0..1.0).contains(&rho) {
        return Err(Error::Unstable { rho });
    }
    if horizon == 0 {
        return Err(Error::InvalidArgument("horizon must be at least 1".into()));
    }
    let t = horizon as f64;
    let exact = 2.0
        * (1..horizon)
            .map(|s| {
                let s_f = s as f64;
                (t - s_f) * s_f * rho.powi(2 * s as i32 - 1)
            })
            .sum::<f64>();
    Ok(LtValue { exact, closed_bound: 2.0 * rho * t / (1.0 - rho * rho).powi(2) })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeltaGBounds {
    pub rho_max: f64,
    pub l_t: f64,
    /// Poincaré route through the Fiedler value and edgewise Frobenius
    /// differences.
    pub frobenius: f64,
    /// Cheeger route through edgewise entrywise ℓ1 differences; only for
    /// graphs small enough for the exact Cheeger constant.
    pub tv_cheeger: Option<f64>,
    pub cheeger: Option<f64>,
}

pub fn deltag_bounds(e: &SystemEnsemble, g: &Graph, horizon: usize) -> Result<DeltaGBounds> {
    if e.num_nodes() != g.num_nodes() {
        return Err(Error::InvalidArgument("ensemble and graph disagree on the node count".into()));
    }
    let rho_max = e.max_spectral_norm();
    if rho_max >= 1.0 {
        return Err(Error::Unstable { rho: rho_max });
    }
    let lt = l_t(rho_max, horizon)?.exact;
    let sp = spectrum(g)?;
    if !sp.connected {
        return Err(Error::Disconnected { components: sp.components });
    }
    let mut frob_sq = 0.0;
    let mut l11 = 0.0;
    for &(u, v) in g.edges() {
        let diff = &e.matrices[u] - &e.matrices[v];
        frob_sq += diff.norm_squared();
        l11 += diff.abs().sum();
    }
    let frobenius = lt / sp.fiedler.sqrt() * frob_sq.sqrt();
    let cheeger = if g.num_nodes() <= crate::analysis::CHEEGER_MAX_NODES {
        Some(cheeger_exact_small(g)?)
    } else {
        None
    };
    Ok(DeltaGBounds { rho_max, l_t: lt, frobenius, tv_cheeger: cheeger.map(|h| lt / h * l11), cheeger })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_graph, GraphKind};

    #[test]
    fn grammian_examples() {
        let a = DMatrix::from_row_slice(2, 2, &[0.3, -0.7, 0.2, 0.9]);
        assert_eq!(grammian(&a, 0), DMatrix::identity(2, 2));
        assert_eq!(grammian(&DMatrix::zeros(3, 3), 5), DMatrix::identity(3, 3));
        let g = grammian(&DMatrix::from_element(1, 1, 0.5), 2);
        assert!((g[(0, 0)] - 1.3125).abs() < 1e-15);
    }

    #[test]
    fn l_t_examples() {
        assert_eq!(l_t(0.5, 1).unwrap().exact, 0.0);
        assert!((l_t(0.3, 2).unwrap().exact - 0.6).abs() < 1e-15);
        assert!((l_t(0.5, 5).unwrap().exact - 5.9375).abs() < 1e-12);
        assert!(l_t(1.0, 5).is_err());
    }

    #[test]
    fn zero_ensemble_bundle() {
        let e = SystemEnsemble::new(2, vec![DMatrix::zeros(2, 2); 3]).unwrap();
        let b = grammian_bundle(&e, 7).unwrap();
        for g in &b.per_node {
            assert!((g - DMatrix::identity(2, 2) * 7.0).abs().max() < 1e-15);
        }
        assert!((b.beta - 1.0).abs() < 1e-12);
        assert_eq!(b.delta_g, 0.0);
    }

    #[test]
    fn lifted_norm_matches_dense_svd() {
        let e = random_stable_ensemble(4, 3, 0.9, 11).unwrap();
        for a in &e.matrices {
            for horizon in [1, 2, 5, 30, 130] {
                let dense = spectral_norm(&lifted_matrix(a, horizon));
                let fast = lifted_norm(a, horizon);
                assert!((dense - fast).abs() <= 1e-10 * dense, "{dense} vs {fast}");
            }
        }
        let unstable = DMatrix::from_row_slice(2, 2, &[1.1, 0.3, -0.2, 0.9]);
        let dense = spectral_norm(&lifted_matrix(&unstable, 40));
        assert!((dense - lifted_norm(&unstable, 40)).abs() <= 1e-10 * dense);
    }

    #[test]
    fn piecewise_field_on_path() {
        let g = build_graph(&GraphKind::Path, 9).unwrap();
        let spec = FieldSpec { field: Field::Piecewise { scale: 1.0 }, jump: Some(0.4) };
        let beta = beta_field(&g, &spec).unwrap();
        assert!((max_jump(&beta, &g) - 0.4).abs() < 1e-12);
        // Contiguous thirds along the path.
        let distinct: std::collections::BTreeSet<i64> = beta.iter().map(|b| (b * 1e6).round() as i64).collect();
        assert_eq!(distinct.len(), 3);
        let changes = (1..9).filter(|&i| (beta[i] - beta[i - 1]).abs() > 1e-12).count();
        assert_eq!(changes, 2);
    }

    #[test]
    fn degenerate_fields() {
        let g = build_graph(&GraphKind::Grid2d { nx: 4, ny: 4 }, 16).unwrap();
        let e = gen_ground_truth(&g, &FieldSpec { field: Field::Piecewise { scale: 0.0 }, jump: None }).unwrap();
        assert!(e.matrices.iter().all(|a| a == &e.matrices[0]));
        assert_eq!(e.tv_norm(&g), 0.0);
        let flat = FieldSpec { field: Field::Smooth { scale: 0.3, omega: 0.0 }, jump: None };
        let beta = beta_field(&g, &flat).unwrap();
        assert!(beta.iter().all(|&b| b == 0.3));
        let bad = FieldSpec { field: Field::Smooth { scale: 0.3, omega: 0.0 }, jump: Some(0.2) };
        assert!(beta_field(&g, &bad).is_err());
    }

    #[test]
    fn zero_noise_recursion() {
        let e = SystemEnsemble::new(2, vec![DMatrix::identity(2, 2) * 0.5]).unwrap();
        let opts = SimOptions { zero_noise: true, x0: Some(vec![DVector::from_column_slice(&[1.0, 0.0])]) };
        let p = simulate_panel_with(&e, 6, 0, &opts).unwrap();
        for t in 0..=6 {
            assert!((p.states[0][(0, t)] - 0.5f64.powi(t as i32)).abs() < 1e-15);
            assert_eq!(p.states[0][(1, t)], 0.0);
        }
    }

    #[test]
    fn simulation_is_seeded() {
        let g = build_graph(&GraphKind::Path, 5).unwrap();
        let e = gen_ground_truth(&g, &FieldSpec { field: Field::Piecewise { scale: 0.3 }, jump: None }).unwrap();
        let a = simulate_panel(&e, 20, 3).unwrap();
        let b = simulate_panel(&e, 20, 3).unwrap();
        let c = simulate_panel(&e, 20, 4).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.states, c.states);
        assert!(a.states.iter().all(|s| s.column(0).iter().all(|&x| x == 0.0)));
        assert_ne!(a.states[0], a.states[1]);
    }

    #[test]
    fn ensemble_file_round_trip() {
        let g = build_graph(&GraphKind::Path, 4).unwrap();
        let e = gen_ground_truth(&g, &FieldSpec { field: Field::Piecewise { scale: 0.5 }, jump: None }).unwrap();
        let f = e.to_file();
        assert_eq!(f.matrices[0][1], TEMPLATE_OFFDIAG);
        let back = SystemEnsemble::from_file(&serde_json::from_str(&serde_json::to_string(&f).unwrap()).unwrap()).unwrap();
        assert_eq!(back, e);
    }

    #[test]
    fn deltag_bounds_on_path() {
        let g = build_graph(&GraphKind::Path, 8).unwrap();
        let e = random_stable_ensemble(8, 2, 0.7, 5).unwrap();
        let b = grammian_bundle(&e, 10).unwrap();
        let bounds = deltag_bounds(&e, &g, 10).unwrap();
        assert!(b.delta_g <= bounds.frobenius);
        assert!(b.delta_g <= bounds.tv_cheeger.unwrap());
        let same = SystemEnsemble::new(2, vec![e.matrices[0].clone(); 8]).unwrap();
        let z = deltag_bounds(&same, &g, 10).unwrap();
        assert_eq!((z.frobenius, z.tv_cheeger), (0.0, Some(0.0)));
    }
}
