//! Graph construction and incidence/Laplacian algebra.
//!
//! Nodes are 0-based inside the library. Serialized graph files use 1-based
//! node labels, see [`GraphFile`].

use std::collections::BTreeSet;
use std::path::Path;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Mean Earth radius used for great-circle distances.
pub const EARTH_RADIUS_KM: f64 = 6371.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum GraphKind {
    Path,
    Grid2d { nx: usize, ny: usize },
    Star,
    Complete,
    ErdosRenyi { p: f64, seed: u64 },
    Knn { k: usize },
    Custom,
}

impl GraphKind {
    pub fn name(&self) -> &'static str {
        match self {
            GraphKind::Path => "path",
            GraphKind::Grid2d { .. } => "grid2d",
            GraphKind::Star => "star",
            GraphKind::Complete => "complete",
            GraphKind::ErdosRenyi { .. } => "erdos_renyi",
            GraphKind::Knn { .. } => "knn",
            GraphKind::Custom => "custom",
        }
    }
}

/// Undirected simple graph with canonically oriented edges (`u < v`).
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    m: usize,
    edges: Vec<(usize, usize)>,
    kind: GraphKind,
}

impl Graph {
    /// Builds a graph from an edge list. Pairs are reoriented to `u < v`;
    /// self-loops, duplicates and out-of-range nodes are rejected.
    pub fn new(m: usize, edges: impl IntoIterator<Item = (usize, usize)>, kind: GraphKind) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidGraph("graph must have at least one node".into()));
        }
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        for (a, b) in edges {
            if a == b {
                return Err(Error::InvalidGraph(format!("self-loop at node {a}")));
            }
            if a >= m || b >= m {
                return Err(Error::InvalidGraph(format!("edge ({a}, {b}) out of range for m = {m}")));
            }
            let e = (a.min(b), a.max(b));
            if !seen.insert(e) {
                return Err(Error::InvalidGraph(format!("duplicate edge ({}, {})", e.0, e.1)));
            }
            out.push(e);
        }
        Ok(Graph { m, edges: out, kind })
    }

    pub fn num_nodes(&self) -> usize {
        self.m
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn kind(&self) -> &GraphKind {
        &self.kind
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.m];
        for &(u, v) in &self.edges {
            deg[u] += 1;
            deg[v] += 1;
        }
        deg
    }

    pub fn max_degree(&self) -> usize {
        self.degrees().into_iter().max().unwrap_or(0)
    }

    /// Connected-component label per node, labels in order of first appearance.
    pub fn components(&self) -> Vec<usize> {
        let mut uf = UnionFind::new(self.m);
        for &(u, v) in &self.edges {
            uf.union(u, v);
        }
        uf.labels()
    }

    pub fn num_components(&self) -> usize {
        self.components().into_iter().max().map_or(0, |c| c + 1)
    }

    pub fn is_connected(&self) -> bool {
        self.num_components() == 1
    }

    pub fn incidence(&self) -> IncidenceMatrix {
        IncidenceMatrix { m: self.m, rows: self.edges.clone() }
    }

    /// Combinatorial Laplacian `deg - adj` as a dense matrix.
    pub fn laplacian(&self) -> DMatrix<f64> {
        self.incidence().laplacian()
    }

    pub fn to_file(&self) -> GraphFile {
        let mut f = GraphFile {
            m: self.m,
            kind: self.kind.name().to_string(),
            edges: self.edges.iter().map(|&(u, v)| [u + 1, v + 1]).collect(),
            seed: None,
            nx: None,
            ny: None,
            p: None,
            k: None,
        };
        match self.kind {
            GraphKind::Grid2d { nx, ny } => {
                f.nx = Some(nx);
                f.ny = Some(ny);
            }
            GraphKind::ErdosRenyi { p, seed } => {
                f.p = Some(p);
                f.seed = Some(seed);
            }
            GraphKind::Knn { k } => f.k = Some(k),
            _ => {}
        }
        f
    }

    pub fn from_file(f: &GraphFile) -> Result<Self> {
        let kind = match f.kind.as_str() {
            "path" => GraphKind::Path,
            "star" => GraphKind::Star,
            "complete" => GraphKind::Complete,
            "custom" => GraphKind::Custom,
            "grid2d" => GraphKind::Grid2d {
                nx: f.nx.ok_or_else(|| Error::InvalidGraph("grid2d requires nx".into()))?,
                ny: f.ny.ok_or_else(|| Error::InvalidGraph("grid2d requires ny".into()))?,
            },
            "erdos_renyi" => GraphKind::ErdosRenyi {
                p: f.p.ok_or_else(|| Error::InvalidGraph("erdos_renyi requires p".into()))?,
                seed: f.seed.unwrap_or(0),
            },
            "knn" => GraphKind::Knn { k: f.k.ok_or_else(|| Error::InvalidGraph("knn requires k".into()))? },
            other => return Err(Error::InvalidGraph(format!("unknown graph kind '{other}'"))),
        };
        let mut edges = Vec::with_capacity(f.edges.len());
        for &[u, v] in &f.edges {
            if u == 0 || v == 0 {
                return Err(Error::InvalidGraph("node labels in graph files are 1-based".into()));
            }
            edges.push((u - 1, v - 1));
        }
        Graph::new(f.m, edges, kind)
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let f: GraphFile = serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.line() as u64,
            msg: e.to_string(),
        })?;
        Graph::from_file(&f)
    }
}

/// JSON form `{m, kind, edges: [[u,v],...], seed?}` with 1-based node labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphFile {
    pub m: usize,
    pub kind: String,
    pub edges: Vec<[usize; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nx: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ny: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
}

/// Builds one of the generated graph families on `m` nodes.
pub fn build_graph(kind: &GraphKind, m: usize) -> Result<Graph> {
    if m == 0 {
        return Err(Error::InvalidGraph("graph must have at least one node".into()));
    }
    let edges: Vec<(usize, usize)> = match *kind {
        GraphKind::Path => (1..m).map(|v| (v - 1, v)).collect(),
        GraphKind::Star => (1..m).map(|v| (0, v)).collect(),
        GraphKind::Complete => (0..m).flat_map(|u| (u + 1..m).map(move |v| (u, v))).collect(),
        GraphKind::Grid2d { nx, ny } => {
            if nx == 0 || ny == 0 || nx * ny != m {
                return Err(Error::InvalidGraph(format!("grid {nx}x{ny} does not have {m} nodes")));
            }
            let mut e = Vec::new();
            for y in 0..ny {
                for x in 0..nx {
                    let id = y * nx + x;
                    if x + 1 < nx {
                        e.push((id, id + 1));
                    }
                    if y + 1 < ny {
                        e.push((id, id + nx));
                    }
                }
            }
            e.sort_unstable();
            e
        }
        GraphKind::ErdosRenyi { p, seed } => {
            if !(p > 0.0 && p <= 1.0) {
                return Err(Error::InvalidArgument(format!("edge probability {p} outside (0, 1]")));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut e = Vec::new();
            for u in 0..m {
                for v in u + 1..m {
                    if rng.random::<f64>() < p {
                        e.push((u, v));
                    }
                }
            }
            e
        }
        GraphKind::Knn { .. } => {
            return Err(Error::InvalidArgument("knn graphs are built from coordinates, see knn_graph".into()))
        }
        GraphKind::Custom => return Err(Error::InvalidArgument("custom graphs are built with Graph::new".into())),
    };
    Graph::new(m, edges, kind.clone())
}

/// Great-circle distance in km between two (lat, lon) points given in degrees.
pub fn haversine_km(a: (f64, f64), b: (f64, f64)) -> f64 {
    let (lat1, lon1) = (a.0.to_radians(), a.1.to_radians());
    let (lat2, lon2) = (b.0.to_radians(), b.1.to_radians());
    let dlat = lat2 - lat1;
    let dlon = lon2 - lon1;
    let h = (dlat / 2.0).sin().powi(2) + lat1.cos() * lat2.cos() * (dlon / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_KM * h.sqrt().min(1.0).asin()
}

/// Symmetrized k-nearest-neighbour graph under great-circle distance.
/// Ties between equidistant neighbours go to the smaller node index.
pub fn knn_graph(coords: &[(f64, f64)], k: usize) -> Result<Graph> {
    let m = coords.len();
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    if k >= m {
        return Err(Error::InvalidArgument(format!("k = {k} must be smaller than the number of points {m}")));
    }
    if coords.iter().any(|c| !c.0.is_finite() || !c.1.is_finite()) {
        return Err(Error::InvalidArgument("coordinates must be finite".into()));
    }
    let mut set = BTreeSet::new();
    for i in 0..m {
        let mut others: Vec<(f64, usize)> =
            (0..m).filter(|&j| j != i).map(|j| (haversine_km(coords[i], coords[j]), j)).collect();
        others.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        for &(_, j) in others.iter().take(k) {
            set.insert((i.min(j), i.max(j)));
        }
    }
    Graph::new(m, set, GraphKind::Knn { k })
}

/// Signed edge-node incidence matrix, stored sparsely: row `j` holds `-1` at
/// `rows[j].0` and `+1` at `rows[j].1`.
#[derive(Debug, Clone, PartialEq)]
pub struct IncidenceMatrix {
    m: usize,
    rows: Vec<(usize, usize)>,
}

impl IncidenceMatrix {
    pub fn num_nodes(&self) -> usize {
        self.m
    }

    pub fn num_edges(&self) -> usize {
        self.rows.len()
    }

    /// `(tail, head)` of each row: `-1` at tail, `+1` at head.
    pub fn rows(&self) -> &[(usize, usize)] {
        &self.rows
    }

    /// Same graph with the orientation of the selected rows reversed.
    pub fn with_flipped(&self, flip: &[bool]) -> IncidenceMatrix {
        let rows = self
            .rows
            .iter()
            .zip(flip.iter().chain(std::iter::repeat(&false)))
            .map(|(&(u, v), &f)| if f { (v, u) } else { (u, v) })
            .collect();
        IncidenceMatrix { m: self.m, rows }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut d = DMatrix::zeros(self.rows.len(), self.m);
        for (j, &(u, v)) in self.rows.iter().enumerate() {
            d[(j, u)] = -1.0;
            d[(j, v)] = 1.0;
        }
        d
    }

    pub fn laplacian(&self) -> DMatrix<f64> {
        let mut l = DMatrix::zeros(self.m, self.m);
        for &(u, v) in &self.rows {
            l[(u, u)] += 1.0;
            l[(v, v)] += 1.0;
            l[(u, v)] -= 1.0;
            l[(v, u)] -= 1.0;
        }
        l
    }

    /// `D x` for a node signal with `width` channels stored node-major
    /// (`x[l * width + c]`); output is edge-major.
    pub fn apply_blocks(&self, x: &[f64], width: usize, out: &mut [f64]) {
        for (j, &(u, v)) in self.rows.iter().enumerate() {
            for c in 0..width {
                out[j * width + c] = x[v * width + c] - x[u * width + c];
            }
        }
    }

    /// `D^T w` for an edge signal with `width` channels (edge-major layout).
    pub fn apply_blocks_transpose(&self, w: &[f64], width: usize, out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for (j, &(u, v)) in self.rows.iter().enumerate() {
            for c in 0..width {
                let val = w[j * width + c];
                out[v * width + c] += val;
                out[u * width + c] -= val;
            }
        }
    }
}

/// Eigen-structure of `L = D^T D` together with `D^+`.
#[derive(Debug, Clone)]
pub struct GraphSpectrum {
    /// Eigenvalues in nonincreasing order.
    pub laplacian_eigenvalues: Vec<f64>,
    /// Eigenvectors as columns, in the same order as the eigenvalues.
    pub eigenvectors: DMatrix<f64>,
    /// Smallest positive eigenvalue; 0 when the graph is disconnected.
    pub fiedler: f64,
    pub connected: bool,
    pub components: usize,
    pub laplacian_pinv: DMatrix<f64>,
    /// `D^+ = L^+ D^T`, an `m x |E|` matrix.
    pub pseudoinverse_d: DMatrix<f64>,
    /// `max |L V - V diag(w)|` of the decomposition.
    pub residual: f64,
}

impl GraphSpectrum {
    /// Eigenvector of the Fiedler value (second-smallest eigenvalue).
    pub fn fiedler_vector(&self) -> Option<DVector<f64>> {
        let m = self.laplacian_eigenvalues.len();
        if m < 2 {
            return None;
        }
        Some(self.eigenvectors.column(m - 2).into_owned())
    }
}

pub fn spectrum(g: &Graph) -> Result<GraphSpectrum> {
    spectrum_of(&g.incidence(), g.num_components())
}

/// Spectrum from an explicit incidence matrix (any orientation).
pub fn spectrum_of(d: &IncidenceMatrix, components: usize) -> Result<GraphSpectrum> {
    let m = d.num_nodes();
    let lap = d.laplacian();
    let eig = SymmetricEigen::try_new(lap.clone(), 1e-14, 100 * m.max(10))
        .ok_or(Error::EigenNonConvergence { residual: f64::NAN })?;
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = DMatrix::zeros(m, m);
    for (c, &i) in order.iter().enumerate() {
        vectors.set_column(c, &eig.eigenvectors.column(i));
    }
    let residual = (&lap * &vectors - &vectors * DMatrix::from_diagonal(&DVector::from_vec(values.clone())))
        .abs()
        .max();
    let scale = values.first().copied().unwrap_or(0.0).max(1.0);
    if residual > 1e-8 * scale * m as f64 {
        return Err(Error::EigenNonConvergence { residual });
    }
    // The `components` smallest eigenvalues are the null space of L.
    let positive = m.saturating_sub(components.max(1));
    let mut pinv = DMatrix::zeros(m, m);
    for c in 0..positive {
        let v = vectors.column(c);
        pinv += (&v * v.transpose()) / values[c];
    }
    let connected = components == 1;
    let fiedler = if connected && m >= 2 { values[m - 2] } else { 0.0 };
    let pseudoinverse_d = &pinv * d.to_dense().transpose();
    Ok(GraphSpectrum {
        laplacian_eigenvalues: values,
        eigenvectors: vectors,
        fiedler,
        connected,
        components,
        laplacian_pinv: pinv,
        pseudoinverse_d,
        residual,
    })
}

pub(crate) struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    pub(crate) fn new(n: usize) -> Self {
        UnionFind { parent: (0..n).collect() }
    }

    pub(crate) fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    pub(crate) fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[ra.max(rb)] = ra.min(rb);
        }
    }

    /// Dense labels `0..k` in order of first appearance.
    pub(crate) fn labels(&mut self) -> Vec<usize> {
        let n = self.parent.len();
        let mut map = vec![usize::MAX; n];
        let mut next = 0;
        let mut out = Vec::with_capacity(n);
        for i in 0..n {
            let r = self.find(i);
            if map[r] == usize::MAX {
                map[r] = next;
                next += 1;
            }
            out.push(map[r]);
        }
        out
    }
}
