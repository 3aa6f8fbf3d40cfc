//! Graph-geometry scalars: inverse scaling factors, compatibility factors,
//! edge lifting of coefficient index sets and exact Cheeger constants.
//!
//! Coefficient indices follow the layout of `D ⊗ I_{d²}`: index `j·d² + c`
//! is coefficient `c` on edge `j`. All indices are 0-based.

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Graph, GraphSpectrum, IncidenceMatrix};

/// Largest index set accepted by [`compat_exact_small`].
pub const COMPAT_EXACT_MAX_SET: usize = 14;
/// Largest `m·d²` accepted by [`compat_exact_small`].
pub const COMPAT_EXACT_MAX_DIM: usize = 200;
/// Largest node count accepted by [`cheeger_exact_small`].
pub const CHEEGER_MAX_NODES: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingFactors {
    /// Max column norm of `D^+` (over edges).
    pub mu: f64,
    /// Max row norm of `D^+` (over nodes).
    pub mu_prime: f64,
    pub fiedler_bound_mu: f64,
    pub fiedler_bound_mu_prime: f64,
}

pub fn scaling_factors(spec: &GraphSpectrum) -> Result<ScalingFactors> {
    if !spec.connected || spec.fiedler <= 0.0 {
        return Err(Error::Disconnected { components: spec.components });
    }
    let p = &spec.pseudoinverse_d;
    let mu = (0..p.ncols()).map(|j| p.column(j).norm()).fold(0.0, f64::max);
    let mu_prime = (0..p.nrows()).map(|l| p.row(l).norm()).fold(0.0, f64::max);
    let lam = spec.fiedler;
    Ok(ScalingFactors {
        mu,
        mu_prime,
        fiedler_bound_mu: (2f64.sqrt() / lam).min(1.0 / lam.sqrt()),
        fiedler_bound_mu_prime: 1.0 / lam.sqrt(),
    })
}

/// Edges touched by a coefficient index set: `j` is returned when some index
/// falls in the block `[j·d², (j+1)·d²)`.
pub fn edges_appearing(set: &[usize], d: usize, num_edges: usize) -> Result<Vec<usize>> {
    if d == 0 {
        return Err(Error::InvalidArgument("state dimension must be positive".into()));
    }
    let block = d * d;
    let mut out = BTreeSet::new();
    for &i in set {
        if i >= num_edges * block {
            return Err(Error::InvalidArgument(format!(
                "index {i} out of range for {num_edges} edges and d = {d}"
            )));
        }
        out.insert(i / block);
    }
    Ok(out.into_iter().collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompatReport {
    pub set: Vec<usize>,
    pub edge_set: Vec<usize>,
    pub lower_bound: f64,
    pub exact_value: Option<f64>,
}

impl CompatReport {
    /// Exact value when available, otherwise the lower bound.
    pub fn best(&self) -> f64 {
        self.exact_value.unwrap_or(self.lower_bound)
    }
}

/// Lower bound `1 / (2 min(sqrt(max degree), sqrt(|T_E|)))`; the empty set
/// has compatibility factor 1.
pub fn compat_lower_bound(g: &Graph, set: &[usize], d: usize) -> Result<CompatReport> {
    let set = dedup(set);
    let edge_set = edges_appearing(&set, d, g.num_edges())?;
    let lower_bound = if set.is_empty() {
        1.0
    } else {
        let deg = g.max_degree() as f64;
        1.0 / (2.0 * deg.sqrt().min((edge_set.len() as f64).sqrt()))
    };
    let exact_value = if set.is_empty() { Some(1.0) } else { None };
    Ok(CompatReport { set, edge_set, lower_bound, exact_value })
}

/// Lower bound plus the exact value whenever the instance is small enough.
pub fn compat_report(g: &Graph, set: &[usize], d: usize) -> Result<CompatReport> {
    let mut r = compat_lower_bound(g, set, d)?;
    if !r.set.is_empty()
        && r.set.len() <= COMPAT_EXACT_MAX_SET
        && g.num_nodes() * d * d <= COMPAT_EXACT_MAX_DIM
    {
        r.exact_value = Some(compat_exact_small(g, &r.set, d)?);
    }
    Ok(r)
}

pub fn compat_exact_small(g: &Graph, set: &[usize], d: usize) -> Result<f64> {
    compat_exact_with(&g.incidence(), set, d)
}

/// Exact compatibility factor by enumerating sign patterns:
/// `sqrt(|T|) / max_σ ‖(D̃_T)^T σ‖₂`.
pub fn compat_exact_with(inc: &IncidenceMatrix, set: &[usize], d: usize) -> Result<f64> {
    let set = dedup(set);
    if set.is_empty() {
        return Ok(1.0);
    }
    let block = d * d;
    let m = inc.num_nodes();
    if set.len() > COMPAT_EXACT_MAX_SET {
        return Err(Error::TooLarge(format!("|T| = {} exceeds {}", set.len(), COMPAT_EXACT_MAX_SET)));
    }
    if m * block > COMPAT_EXACT_MAX_DIM {
        return Err(Error::TooLarge(format!("m·d² = {} exceeds {}", m * block, COMPAT_EXACT_MAX_DIM)));
    }
    edges_appearing(&set, d, inc.num_edges())?;
    // Each selected row touches two coordinates of the lifted node space.
    let rows: Vec<(usize, usize)> = set
        .iter()
        .map(|&i| {
            let (j, c) = (i / block, i % block);
            let (u, v) = inc.rows()[j];
            (u * block + c, v * block + c)
        })
        .collect();
    let n = rows.len();
    let dim = m * block;
    // σ and -σ give the same norm, so the first sign is fixed to +1.
    let patterns = 1usize << (n - 1);
    let best = (0..patterns)
        .into_par_iter()
        .map_init(
            || vec![0.0; dim],
            |buf, mask| {
                buf.iter_mut().for_each(|x| *x = 0.0);
                for (k, &(neg, pos)) in rows.iter().enumerate() {
                    let s = if k == 0 || mask & (1 << (k - 1)) == 0 { 1.0 } else { -1.0 };
                    buf[neg] -= s;
                    buf[pos] += s;
                }
                buf.iter().map(|x| x * x).sum::<f64>()
            },
        )
        .reduce(|| 0.0, f64::max);
    Ok((n as f64).sqrt() / best.sqrt())
}

/// Exact unweighted Cheeger constant `min |∂S|/|S|` over `0 < |S| ≤ m/2`.
pub fn cheeger_exact_small(g: &Graph) -> Result<f64> {
    let m = g.num_nodes();
    if m > CHEEGER_MAX_NODES {
        return Err(Error::TooLarge(format!("m = {m} exceeds {CHEEGER_MAX_NODES}")));
    }
    if m < 2 {
        return Err(Error::InvalidArgument("Cheeger constant needs at least two nodes".into()));
    }
    let mut nbr = vec![0u32; m];
    for &(u, v) in g.edges() {
        nbr[u] |= 1 << v;
        nbr[v] |= 1 << u;
    }
    let half = m / 2;
    let full: u32 = (1u32 << m) - 1;
    let best = (1..=full)
        .into_par_iter()
        .filter(|s| (s.count_ones() as usize) <= half)
        .map(|s| {
            let mut boundary = 0u32;
            let mut bits = s;
            while bits != 0 {
                let u = bits.trailing_zeros() as usize;
                boundary += (nbr[u] & !s).count_ones();
                bits &= bits - 1;
            }
            boundary as f64 / s.count_ones() as f64
        })
        .reduce(|| f64::INFINITY, f64::min);
    Ok(best)
}

fn dedup(set: &[usize]) -> Vec<usize> {
    let s: BTreeSet<usize> = set.iter().copied().collect();
    s.into_iter().collect()
}
