//! Benchmark fixtures.

use tvlds::estimators::{build_design, DesignSystem};
use tvlds::graph::{build_graph, Graph, GraphKind};
use tvlds::lds::{random_stable_ensemble, simulate_panel};
use tvlds::{Result, SystemEnsemble};

pub struct Instance {
    pub graph: Graph,
    pub ensemble: SystemEnsemble,
    pub train: DesignSystem,
    pub val: DesignSystem,
}

/// Random stable systems on `kind` with `t` training and `t` validation
/// transitions.
pub fn instance(kind: GraphKind, m: usize, d: usize, t: usize, seed: u64) -> Result<Instance> {
    let graph = build_graph(&kind, m)?;
    let ensemble = random_stable_ensemble(m, d, 0.8, seed)?;
    let panel = simulate_panel(&ensemble, 2 * t, seed ^ 0x5eed)?;
    Ok(Instance { train: build_design(&panel, 0, t)?, val: build_design(&panel, t, 2 * t)?, graph, ensemble })
}
