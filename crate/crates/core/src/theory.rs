//! Numerical evaluation of the error-bound ingredients: the noise terms
//! `F₁`, `F₂`, the restricted-eigenvalue terms `F₃`, `G₃`, the three main
//! conditions, the stable-case sample-size conditions and the error bound.
//!
//! Every universal constant is a field of [`TheoryConstants`] (default 1)
//! and is copied into each report.

use serde::{Deserialize, Serialize};

use crate::analysis::{compat_report, scaling_factors, CompatReport, ScalingFactors};
use crate::error::{Error, Result};
use crate::graph::{spectrum, Graph};
use crate::lds::{deltag_bounds, grammian_bundle, DeltaGBounds, GrammianBundle, SystemEnsemble};

/// Tolerance used to decide the support of `(D ⊗ I) a*`.
pub const SUPPORT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoryConstants {
    /// Multiplier in `ζ₁`, `ζ₂` and the λ formula.
    pub c1: f64,
    /// Multiplier in `F₂`.
    pub c2: f64,
    /// Multiplier in `F₃` and `G₃`.
    pub c_re: f64,
    /// Right-hand-side factor `c` of the three main conditions.
    pub c_margin: f64,
    /// Factor `C` of the stable-case sample-size conditions.
    pub c_sample: f64,
}

impl Default for TheoryConstants {
    fn default() -> Self {
        TheoryConstants { c1: 1.0, c2: 1.0, c_re: 1.0, c_margin: 1.0, c_sample: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// `S = ∅`.
    Smooth,
    /// `S = supp((D ⊗ I) a*)`.
    FewChanges,
}

/// The three numbers through which the choice of `S` enters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SetSummary {
    pub size: usize,
    pub kappa: f64,
    /// `‖((D ⊗ I) a*)_{S^c}‖₁`.
    pub tail: f64,
}

impl SetSummary {
    /// `1 + sqrt|S|/κ_S + tail`.
    pub fn phi(&self) -> f64 {
        1.0 + (self.size as f64).sqrt() / self.kappa + self.tail
    }

    /// `4 sqrt|S|/κ_S + 4 tail + 1`.
    pub fn psi(&self) -> f64 {
        4.0 * (self.size as f64).sqrt() / self.kappa + 4.0 * self.tail + 1.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FTerms {
    pub zeta1: f64,
    pub zeta2: f64,
    pub f1: f64,
    pub f2: f64,
    pub f3: f64,
    pub g3: f64,
    pub phi_s: f64,
    pub psi_s: f64,
}

/// Problem sizes shared by the formulas.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Dims {
    pub m: usize,
    pub d: usize,
    pub horizon: usize,
    pub num_edges: usize,
}

pub fn evaluate_f_terms(
    bundle: &GrammianBundle,
    scaling: &ScalingFactors,
    dims: Dims,
    delta: f64,
    set: &SetSummary,
    k: &TheoryConstants,
) -> Result<FTerms> {
    check_delta(delta)?;
    let m = dims.m as f64;
    let d2 = (dims.d * dims.d) as f64;
    let t = dims.horizon as f64;
    let e = dims.num_edges as f64;
    let log_inv_delta = (1.0 / delta).ln();

    let zeta1 = k.c1 * bundle.total_trace() * log_inv_delta;
    let ratio = zeta1 / m + 1.0;
    let f1 = 2f64.sqrt() * ratio.sqrt() * (log_inv_delta + 0.5 * d2 * ratio.ln()).sqrt();
    let zeta2 = k.c1 * scaling.mu.powi(2) * bundle.max_diagonal() * (d2 * e / delta).ln().powi(2);
    let f2 = k.c2 * zeta2.sqrt();

    let psi = set.psi();
    let lg = (d2 * e).ln();
    let mp = scaling.mu_prime;
    let b2 = bundle.beta * bundle.beta;
    let f3 = k.c_re * b2 * (mp * mp * psi * psi * lg + mp * t.sqrt() * psi * lg.sqrt() + t.sqrt());
    let g3 = k.c_re * b2 * (mp * psi * lg.sqrt() + t.sqrt());
    Ok(FTerms { zeta1, zeta2, f1, f2, f3, g3, phi_s: set.phi(), psi_s: psi })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionRow {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub pass: bool,
}

impl ConditionRow {
    fn new(name: &str, lhs: f64, rhs: f64) -> Self {
        ConditionRow { name: name.to_string(), lhs, rhs, pass: lhs <= rhs }
    }

    /// `rhs − lhs`; nonnegative when the condition holds.
    pub fn margin(&self) -> f64 {
        self.rhs - self.lhs
    }
}

/// Stable-case reductions: `Δ = (1−ρ)²`, `L₁ = log(dT/(δΔ))`,
/// `L₂ = log(d|E|/δ)` and the multiplier `Δ^{-1/2} max(d^{3/2} L₁, μ L₂)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StableQuantities {
    pub rho_max: f64,
    pub big_delta: f64,
    pub l1: f64,
    pub l2: f64,
    pub multiplier: f64,
}

pub fn stable_quantities(rho_max: f64, mu: f64, dims: Dims, delta: f64) -> Result<StableQuantities> {
    if !(0.0..1.0).contains(&rho_max) {
        return Err(Error::Unstable { rho: rho_max });
    }
    check_delta(delta)?;
    let d = dims.d as f64;
    let big_delta = (1.0 - rho_max).powi(2);
    let l1 = (d * dims.horizon as f64 / (delta * big_delta)).ln();
    let l2 = (d * dims.num_edges as f64 / delta).ln();
    let multiplier = (d.powf(1.5) * l1).max(mu * l2) / big_delta.sqrt();
    Ok(StableQuantities { rho_max, big_delta, l1, l2, multiplier })
}

/// `λ = (c₁/m) sqrt(T/Δ) max(d^{3/2} L₁, μ L₂)`.
pub fn theoretical_lambda(rho_max: f64, mu: f64, dims: Dims, delta: f64, c1: f64) -> Result<f64> {
    let s = stable_quantities(rho_max, mu, dims, delta)?;
    Ok(c1 / dims.m as f64 * (dims.horizon as f64).sqrt() * s.multiplier)
}

/// Everything the condition table needs besides the F-terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConditionInputs<'a> {
    pub dims: Dims,
    pub delta: f64,
    pub v: f64,
    pub beta: f64,
    pub delta_g: f64,
    pub scaling: &'a ScalingFactors,
    pub set: &'a SetSummary,
    pub f: &'a FTerms,
    pub stable: Option<&'a StableQuantities>,
    pub lambda: Option<f64>,
}

/// Main conditions 1–3, the λ requirement and (when stable quantities are
/// supplied) C1, C2, C3a, C3b.
pub fn check_theorem_conditions(x: &ConditionInputs, k: &TheoryConstants) -> Vec<ConditionRow> {
    let m = x.dims.m as f64;
    let d = x.dims.d as f64;
    let t = x.dims.horizon as f64;
    let e = x.dims.num_edges as f64;
    let phi = x.set.phi();
    let b2 = x.beta * x.beta;
    let ct = k.c_margin * t;
    let mut rows = vec![
        ConditionRow::new("cond1", x.f.f3 * x.v.sqrt(), ct),
        ConditionRow::new("cond2", b2 / m * ((m * t).sqrt() + d) * (d + x.v), ct),
        ConditionRow::new(
            "cond3",
            x.scaling.mu / m.sqrt() * phi * (d * x.delta_g + b2 * t.sqrt() * (e * d / x.delta).ln()),
            ct,
        ),
    ];
    if let Some(lam) = x.lambda {
        rows.push(ConditionRow::new("lambda", 2.0 / m * x.f.f1.max(x.f.f2), lam));
    }
    if let Some(s) = x.stable {
        let c = k.c_sample;
        let dd = s.big_delta * s.big_delta;
        let mp = x.scaling.mu_prime;
        let mu = x.scaling.mu;
        rows.push(ConditionRow::new("C1", c * x.v / dd * (1.0 + mp * phi * s.l2.sqrt()).powi(2), t));
        rows.push(ConditionRow::new("C2", c * (d + x.v).powi(2) / (m * dd), t));
        rows.push(ConditionRow::new("C3a", c * mu * mu * phi * phi * s.l2 * s.l2 / (m * dd), t));
        rows.push(ConditionRow::new("C3b", c * mu / m.sqrt() * phi * d * x.delta_g, t));
    }
    rows
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorBound {
    pub rhs: f64,
    /// `rhs / sqrt(m)`, the per-node scale.
    pub per_node: f64,
}

/// `(2mλ/T)(1 + 3 sqrt|S|/κ_S) + sqrt(8 λ m / T · tail)`.
pub fn theorem_error_bound(lambda: f64, m: usize, horizon: usize, set: &SetSummary) -> Result<ErrorBound> {
    if !(lambda > 0.0) || horizon == 0 {
        return Err(Error::InvalidArgument("error bound needs lambda > 0 and T > 0".into()));
    }
    let mf = m as f64;
    let t = horizon as f64;
    let rhs = 2.0 * mf * lambda / t * (1.0 + 3.0 * (set.size as f64).sqrt() / set.kappa)
        + (8.0 * lambda * mf / t * set.tail).sqrt();
    Ok(ErrorBound { rhs, per_node: rhs / mf.sqrt() })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoryOptions {
    pub horizon: usize,
    pub delta: f64,
    pub v: f64,
    pub regime: Regime,
    pub constants: TheoryConstants,
    /// Defaults to the largest spectral norm in the ensemble.
    pub rho_max: Option<f64>,
    /// Defaults to the stable-case λ formula.
    pub lambda: Option<f64>,
}

impl TheoryOptions {
    pub fn new(horizon: usize) -> Self {
        TheoryOptions {
            horizon,
            delta: 0.1,
            v: 1.0,
            regime: Regime::Smooth,
            constants: TheoryConstants::default(),
            rho_max: None,
            lambda: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrammianSummary {
    pub beta: f64,
    pub delta_g: f64,
    pub max_diagonal: f64,
    pub total_trace: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoryReport {
    pub dims: Dims,
    pub delta: f64,
    pub v: f64,
    pub regime: Regime,
    pub constants: TheoryConstants,
    pub fiedler: f64,
    pub scaling: ScalingFactors,
    pub compat: CompatReport,
    pub tv_norm: f64,
    pub set: SetSummary,
    pub grammians: GrammianSummary,
    pub deltag_bounds: DeltaGBounds,
    pub f_terms: FTerms,
    pub stable: StableQuantities,
    pub lambda: f64,
    pub lambda_is_theoretical: bool,
    pub conditions: Vec<ConditionRow>,
    pub theorem_rhs: ErrorBound,
}

pub fn theory_report(g: &Graph, e: &SystemEnsemble, opts: &TheoryOptions) -> Result<TheoryReport> {
    if g.num_nodes() != e.num_nodes() {
        return Err(Error::InvalidArgument("ensemble and graph disagree on the node count".into()));
    }
    if !(opts.v >= 1.0) {
        return Err(Error::InvalidArgument(format!("v must be at least 1, got {}", opts.v)));
    }
    let sp = spectrum(g)?;
    let scaling = scaling_factors(&sp)?;
    let d = e.d;
    let dims = Dims { m: g.num_nodes(), d, horizon: opts.horizon, num_edges: g.num_edges() };
    let rho_max = opts.rho_max.unwrap_or_else(|| e.max_spectral_norm());
    let observed = e.max_spectral_norm();
    if observed > rho_max + 1e-12 {
        return Err(Error::InvalidArgument(format!(
            "rho_max = {rho_max} is below the largest spectral norm {observed}"
        )));
    }
    let bundle = grammian_bundle(e, opts.horizon)?;
    let dgb = deltag_bounds(e, g, opts.horizon)?;
    let tv = e.tv_norm(g);
    let support = match opts.regime {
        Regime::Smooth => Vec::new(),
        Regime::FewChanges => e.tv_support(g, SUPPORT_TOL),
    };
    let compat = compat_report(g, &support, d)?;
    let tail = match opts.regime {
        Regime::Smooth => tv,
        Regime::FewChanges => 0.0,
    };
    let set = SetSummary { size: compat.set.len(), kappa: compat.best(), tail };
    let f_terms = evaluate_f_terms(&bundle, &scaling, dims, opts.delta, &set, &opts.constants)?;
    let stable = stable_quantities(rho_max, scaling.mu, dims, opts.delta)?;
    let lambda_theory = opts.constants.c1 / dims.m as f64 * (opts.horizon as f64).sqrt() * stable.multiplier;
    let lambda = opts.lambda.unwrap_or(lambda_theory);
    let conditions = check_theorem_conditions(
        &ConditionInputs {
            dims,
            delta: opts.delta,
            v: opts.v,
            beta: bundle.beta,
            delta_g: bundle.delta_g,
            scaling: &scaling,
            set: &set,
            f: &f_terms,
            stable: Some(&stable),
            lambda: Some(lambda),
        },
        &opts.constants,
    );
    let theorem_rhs = theorem_error_bound(lambda, dims.m, opts.horizon, &set)?;
    Ok(TheoryReport {
        dims,
        delta: opts.delta,
        v: opts.v,
        regime: opts.regime,
        constants: opts.constants,
        fiedler: sp.fiedler,
        scaling,
        compat,
        tv_norm: tv,
        set,
        grammians: GrammianSummary {
            beta: bundle.beta,
            delta_g: bundle.delta_g,
            max_diagonal: bundle.max_diagonal(),
            total_trace: bundle.total_trace(),
        },
        deltag_bounds: dgb,
        f_terms,
        stable,
        lambda,
        lambda_is_theoretical: opts.lambda.is_none(),
        conditions,
        theorem_rhs,
    })
}

fn check_delta(delta: f64) -> Result<()> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidArgument(format!("delta must lie in (0, 1), got {delta}")));
    }
    Ok(())
}
