//! Communication graphs, symmetric doubly stochastic mixing matrices, and the
//! spectral quantities the bounds consume.
//!
//! A [`MixingMatrix`] is always symmetric and doubly stochastic. Its spectrum
//! is sorted descending, so `eigenvalues[0] == 1` and
//! `lambda2 = eigenvalues[1]`, `lambda_n = eigenvalues[n-1]`. For the blended
//! matrix `ωI + (1-ω)Π` every eigenvalue moves by the same affine map, which is
//! how [`SpectralInfo::lambda_min_effective`] computes η without a second
//! decomposition.

use std::collections::BTreeSet;
use std::path::Path;

use thiserror::Error;

use crate::linalg::{symmetric_eigenvalues, LinalgError, Matrix};

/// Tolerance on row/column sums and symmetry of a mixing matrix.
pub const STOCHASTIC_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum TopologyError {
    #[error("agent count must be at least 1")]
    Empty,
    #[error("bipartite split {p}+{q} is invalid for n={n} (both sides need at least one agent)")]
    BadBipartite { p: usize, q: usize, n: usize },
    #[error("edge ({0},{1}) is a self-loop")]
    SelfLoop(usize, usize),
    #[error("edge ({j},{l}) references an agent outside 0..{n}")]
    OutOfRange { j: usize, l: usize, n: usize },
    #[error("duplicate edge ({0},{1})")]
    DuplicateEdge(usize, usize),
    #[error("graph is disconnected ({reached} of {n} agents reachable from agent 0)")]
    Disconnected { reached: usize, n: usize },
    #[error("laziness must lie in [0, 1), got {0}")]
    Laziness(f64),
    #[error("omega must lie in [0, 1], got {0}")]
    Omega(f64),
    #[error("edge list: {0}")]
    Parse(String),
    #[error("edge list: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TopologyKind {
    Full,
    Ring,
    Bipartite { left: usize, right: usize },
}

/// Undirected connected graph on agents `0..n`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Topology {
    n: usize,
    edges: BTreeSet<(usize, usize)>,
}

impl Topology {
    pub fn build(kind: TopologyKind, n: usize) -> Result<Self, TopologyError> {
        if n == 0 {
            return Err(TopologyError::Empty);
        }
        let mut edges = Vec::new();
        match kind {
            TopologyKind::Full => {
                for j in 0..n {
                    for l in (j + 1)..n {
                        edges.push((j, l));
                    }
                }
            }
            TopologyKind::Ring => match n {
                1 => {}
                2 => edges.push((0, 1)),
                _ => {
                    for j in 0..n {
                        edges.push((j, (j + 1) % n));
                    }
                }
            },
            TopologyKind::Bipartite { left, right } => {
                if left == 0 || right == 0 || left + right != n {
                    return Err(TopologyError::BadBipartite { p: left, q: right, n });
                }
                for j in 0..left {
                    for l in left..n {
                        edges.push((j, l));
                    }
                }
            }
        }
        Self::from_edges(n, edges)
    }

    /// Builds a topology from an explicit undirected edge list. Rejects
    /// self-loops, duplicates (in either orientation) and disconnected graphs.
    pub fn from_edges(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self, TopologyError> {
        if n == 0 {
            return Err(TopologyError::Empty);
        }
        let mut set = BTreeSet::new();
        for (j, l) in edges {
            if j >= n || l >= n {
                return Err(TopologyError::OutOfRange { j, l, n });
            }
            if j == l {
                return Err(TopologyError::SelfLoop(j, l));
            }
            if !set.insert((j.min(l), j.max(l))) {
                return Err(TopologyError::DuplicateEdge(j, l));
            }
        }
        let topo = Self { n, edges: set };
        let reached = topo.reachable_from_zero();
        if reached != n {
            return Err(TopologyError::Disconnected { reached, n });
        }
        Ok(topo)
    }

    /// Parses the plain-text edge-list format: first line `n`, then one
    /// whitespace-separated `j l` pair per line. Blank lines and `#` comments
    /// are ignored.
    pub fn parse_edge_list(text: &str) -> Result<Self, TopologyError> {
        let mut lines = text
            .lines()
            .map(|l| l.split('#').next().unwrap_or("").trim())
            .enumerate()
            .filter(|(_, l)| !l.is_empty());
        let (_, first) = lines
            .next()
            .ok_or_else(|| TopologyError::Parse("missing agent count".into()))?;
        let n: usize = first
            .parse()
            .map_err(|_| TopologyError::Parse(format!("bad agent count {first:?}")))?;
        let mut edges = Vec::new();
        for (lineno, line) in lines {
            let mut parts = line.split_whitespace();
            let parse = |tok: Option<&str>| -> Result<usize, TopologyError> {
                tok.and_then(|t| t.parse().ok())
                    .ok_or_else(|| TopologyError::Parse(format!("line {}: expected `j l`, got {line:?}", lineno + 1)))
            };
            let j = parse(parts.next())?;
            let l = parse(parts.next())?;
            if parts.next().is_some() {
                return Err(TopologyError::Parse(format!(
                    "line {}: trailing tokens in {line:?}",
                    lineno + 1
                )));
            }
            edges.push((j, l));
        }
        Self::from_edges(n, edges)
    }

    pub fn load_edge_list(path: &Path) -> Result<Self, TopologyError> {
        Self::parse_edge_list(&std::fs::read_to_string(path)?)
    }

    pub fn to_edge_list(&self) -> String {
        let mut s = format!("{}\n", self.n);
        for (j, l) in &self.edges {
            s.push_str(&format!("{j} {l}\n"));
        }
        s
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Edges as `(min, max)` pairs in lexicographic order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn has_edge(&self, j: usize, l: usize) -> bool {
        self.edges.contains(&(j.min(l), j.max(l)))
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.n];
        for &(j, l) in &self.edges {
            deg[j] += 1;
            deg[l] += 1;
        }
        deg
    }

    fn reachable_from_zero(&self) -> usize {
        let mut adj = vec![Vec::new(); self.n];
        for &(j, l) in &self.edges {
            adj[j].push(l);
            adj[l].push(j);
        }
        let mut seen = vec![false; self.n];
        let mut stack = vec![0];
        seen[0] = true;
        let mut count = 1;
        while let Some(u) = stack.pop() {
            for &v in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    count += 1;
                    stack.push(v);
                }
            }
        }
        count
    }
}

/// Symmetric doubly stochastic matrix Π.
#[derive(Debug, Clone, PartialEq)]
pub struct MixingMatrix {
    entries: Matrix,
    laziness: f64,
}

impl MixingMatrix {
    /// Metropolis-Hastings weights `1/(1+max(deg_j, deg_l))` on edges, the
    /// remainder on the diagonal, then blended toward the identity by
    /// `laziness`.
    pub fn metropolis(topology: &Topology, laziness: f64) -> Result<Self, TopologyError> {
        if !(0.0..1.0).contains(&laziness) {
            return Err(TopologyError::Laziness(laziness));
        }
        let n = topology.n();
        let deg = topology.degrees();
        let mut base = Matrix::zeros(n, n);
        for (j, l) in topology.edges() {
            let w = 1.0 / (1.0 + deg[j].max(deg[l]) as f64);
            base[(j, l)] = w;
            base[(l, j)] = w;
        }
        for j in 0..n {
            let off: f64 = (0..n).filter(|&l| l != j).map(|l| base[(j, l)]).sum();
            base[(j, j)] = 1.0 - off;
        }
        let entries = if laziness == 0.0 {
            base
        } else {
            base.blend(1.0 - laziness, &Matrix::identity(n), laziness)
        };
        Ok(Self { entries, laziness })
    }

    /// Wraps an explicit matrix after validating it is symmetric, nonnegative
    /// and doubly stochastic.
    pub fn from_matrix(entries: Matrix) -> Result<Self, TopologyError> {
        let m = Self { entries, laziness: 0.0 };
        m.validate()?;
        Ok(m)
    }

    /// The uniform averaging matrix `J = (1/n) 1 1ᵀ`.
    pub fn uniform(n: usize) -> Self {
        Self {
            entries: Matrix::from_fn(n, n, |_, _| 1.0 / n as f64),
            laziness: 0.0,
        }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            entries: Matrix::identity(n),
            laziness: 0.0,
        }
    }

    fn validate(&self) -> Result<(), TopologyError> {
        let n = self.n();
        if self.entries.rows() != self.entries.cols() || n == 0 {
            return Err(TopologyError::Parse(
                "mixing matrix must be square and non-empty".into(),
            ));
        }
        let asym = self.entries.asymmetry();
        if asym > STOCHASTIC_TOL {
            return Err(LinalgError::NotSymmetric(asym).into());
        }
        for j in 0..n {
            let row: f64 = self.entries.row(j).iter().sum();
            if (row - 1.0).abs() > STOCHASTIC_TOL || self.entries.row(j).iter().any(|&v| v < 0.0) {
                return Err(TopologyError::Parse(format!(
                    "row {j} is not a probability vector (sum {row})"
                )));
            }
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.entries.rows()
    }

    pub fn laziness(&self) -> f64 {
        self.laziness
    }

    pub fn matrix(&self) -> &Matrix {
        &self.entries
    }

    pub fn get(&self, j: usize, l: usize) -> f64 {
        self.entries[(j, l)]
    }

    /// `Π̃ = ωI + (1-ω)Π`.
    pub fn effective(&self, omega: f64) -> Result<MixingMatrix, TopologyError> {
        if !(0.0..=1.0).contains(&omega) {
            return Err(TopologyError::Omega(omega));
        }
        let n = self.n();
        Ok(Self {
            entries: Matrix::identity(n).blend(omega, &self.entries, 1.0 - omega),
            laziness: self.laziness,
        })
    }

    pub fn spectrum(&self) -> Result<SpectralInfo, TopologyError> {
        let eigenvalues = symmetric_eigenvalues(&self.entries)?;
        Ok(SpectralInfo { eigenvalues })
    }

    /// Largest row-sum and column-sum deviation from one.
    pub fn stochastic_defect(&self) -> f64 {
        let n = self.n();
        let mut worst = 0.0f64;
        for j in 0..n {
            let row: f64 = (0..n).map(|l| self.entries[(j, l)]).sum();
            let col: f64 = (0..n).map(|l| self.entries[(l, j)]).sum();
            worst = worst.max((row - 1.0).abs()).max((col - 1.0).abs());
        }
        worst
    }
}

/// Sorted spectrum of a mixing matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralInfo {
    /// Descending.
    pub eigenvalues: Vec<f64>,
}

impl SpectralInfo {
    /// Second-largest eigenvalue λ₂. A single agent has no disagreement
    /// subspace; λ₂ is then reported as 1 so that `1 - λ₂ = 0` zeroes the
    /// consensus penalty terms.
    pub fn lambda2(&self) -> f64 {
        self.eigenvalues.get(1).copied().unwrap_or(self.eigenvalues[0])
    }

    /// Smallest eigenvalue λ_N.
    pub fn lambda_n(&self) -> f64 {
        *self.eigenvalues.last().expect("spectrum of an empty matrix")
    }

    /// Smallest eigenvalue of `ωI + (1-ω)Π`, i.e. the η of the consensus
    /// bound when positive.
    pub fn lambda_min_effective(&self, omega: f64) -> f64 {
        omega + (1.0 - omega) * self.lambda_n()
    }

    /// Λ = ω + (1-ω)λ₂.
    pub fn lambda_cap(&self, omega: f64) -> f64 {
        lambda_cap(omega, self.lambda2())
    }

    pub fn spectral_gap(&self) -> f64 {
        1.0 - self.lambda2()
    }
}

/// Λ = ω + (1-ω)λ₂, the effective second eigenvalue of `ωI + (1-ω)Π`.
pub fn lambda_cap(omega: f64, lambda2: f64) -> f64 {
    omega + (1.0 - omega) * lambda2
}

#[cfg(test)]
mod tests {
    use super::*;

    fn edges(t: &Topology) -> Vec<(usize, usize)> {
        t.edges().collect()
    }

    #[test]
    fn named_families() {
        let full = Topology::build(TopologyKind::Full, 3).unwrap();
        assert_eq!(edges(&full), vec![(0, 1), (0, 2), (1, 2)]);
        let ring = Topology::build(TopologyKind::Ring, 4).unwrap();
        assert_eq!(edges(&ring), vec![(0, 1), (0, 3), (1, 2), (2, 3)]);
        let bip = Topology::build(TopologyKind::Bipartite { left: 2, right: 2 }, 4).unwrap();
        assert_eq!(edges(&bip), vec![(0, 2), (0, 3), (1, 2), (1, 3)]);
        assert_eq!(Topology::build(TopologyKind::Ring, 1).unwrap().edge_count(), 0);
        assert_eq!(Topology::build(TopologyKind::Ring, 2).unwrap().edge_count(), 1);
    }

    #[test]
    fn invalid_inputs_rejected() {
        assert!(matches!(
            Topology::build(TopologyKind::Bipartite { left: 3, right: 2 }, 4),
            Err(TopologyError::BadBipartite { .. })
        ));
        assert!(matches!(
            Topology::build(TopologyKind::Bipartite { left: 0, right: 4 }, 4),
            Err(TopologyError::BadBipartite { .. })
        ));
        assert!(matches!(
            Topology::build(TopologyKind::Full, 0),
            Err(TopologyError::Empty)
        ));
        assert!(matches!(
            Topology::from_edges(4, [(0, 1), (2, 3)]),
            Err(TopologyError::Disconnected { reached: 2, n: 4 })
        ));
        assert!(matches!(
            Topology::from_edges(2, [(1, 1)]),
            Err(TopologyError::SelfLoop(1, 1))
        ));
        assert!(matches!(
            Topology::from_edges(2, [(0, 1), (1, 0)]),
            Err(TopologyError::DuplicateEdge(1, 0))
        ));
        assert!(matches!(
            Topology::from_edges(2, [(0, 2)]),
            Err(TopologyError::OutOfRange { .. })
        ));
    }

    #[test]
    fn edge_list_parsing() {
        let t = Topology::parse_edge_list("4\n0 1\n1 2\n# comment\n\n2 3\n").unwrap();
        assert_eq!(edges(&t), vec![(0, 1), (1, 2), (2, 3)]);
        assert_eq!(Topology::parse_edge_list(&t.to_edge_list()).unwrap(), t);
        assert!(Topology::parse_edge_list("3\n0 1\n").is_err());
        assert!(Topology::parse_edge_list("3\n0 x\n").is_err());
        assert!(Topology::parse_edge_list("").is_err());
    }

    #[test]
    fn metropolis_full_three_is_uniform() {
        let t = Topology::build(TopologyKind::Full, 3).unwrap();
        let m = MixingMatrix::metropolis(&t, 0.0).unwrap();
        for j in 0..3 {
            for l in 0..3 {
                assert!((m.get(j, l) - 1.0 / 3.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn metropolis_ring_four_is_circulant() {
        let t = Topology::build(TopologyKind::Ring, 4).unwrap();
        let m = MixingMatrix::metropolis(&t, 0.0).unwrap();
        let third = 1.0 / 3.0;
        let expected = [third, third, 0.0, third];
        for j in 0..4 {
            for l in 0..4 {
                assert!((m.get(j, l) - expected[(l + 4 - j) % 4]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn laziness_limits() {
        let t = Topology::build(TopologyKind::Ring, 5).unwrap();
        let m = MixingMatrix::metropolis(&t, 1.0 - 1e-9).unwrap();
        for j in 0..5 {
            for l in 0..5 {
                let id = if j == l { 1.0 } else { 0.0 };
                assert!((m.get(j, l) - id).abs() < 1e-8);
            }
        }
        assert!(matches!(
            MixingMatrix::metropolis(&t, 1.0),
            Err(TopologyError::Laziness(_))
        ));
        assert!(matches!(
            MixingMatrix::metropolis(&t, -0.1),
            Err(TopologyError::Laziness(_))
        ));
    }

    #[test]
    fn spectrum_golden_values() {
        let s = MixingMatrix::uniform(3).spectrum().unwrap();
        assert!((s.eigenvalues[0] - 1.0).abs() < 1e-12);
        assert!(s.lambda2().abs() < 1e-12 && s.lambda_n().abs() < 1e-12);

        let ring = MixingMatrix::metropolis(&Topology::build(TopologyKind::Ring, 4).unwrap(), 0.0)
            .unwrap()
            .spectrum()
            .unwrap();
        let expected = [1.0, 1.0 / 3.0, 1.0 / 3.0, -1.0 / 3.0];
        for (e, x) in ring.eigenvalues.iter().zip(expected) {
            assert!((e - x).abs() < 1e-10, "{:?}", ring.eigenvalues);
        }

        let id = MixingMatrix::identity(5).spectrum().unwrap();
        assert!(id.eigenvalues.iter().all(|&e| (e - 1.0).abs() < 1e-15));
    }

    #[test]
    fn effective_matrix_cases() {
        let pi = MixingMatrix::uniform(3);
        assert_eq!(pi.effective(0.0).unwrap().matrix(), pi.matrix());
        assert_eq!(pi.effective(1.0).unwrap().matrix(), &Matrix::identity(3));
        let half = pi.effective(0.5).unwrap();
        assert!((half.get(0, 0) - 2.0 / 3.0).abs() < 1e-15);
        assert!((half.get(0, 1) - 1.0 / 6.0).abs() < 1e-15);
        assert!(matches!(pi.effective(1.5), Err(TopologyError::Omega(_))));
    }

    #[test]
    fn lambda_cap_examples() {
        assert!((lambda_cap(0.0, 0.3) - 0.3).abs() < 1e-15);
        assert_eq!(lambda_cap(1.0, -0.7), 1.0);
        assert!((lambda_cap(0.5, 1.0 / 3.0) - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn single_agent_spectrum() {
        let s = MixingMatrix::uniform(1).spectrum().unwrap();
        assert_eq!(s.lambda2(), 1.0);
        assert_eq!(s.lambda_n(), 1.0);
    }

    #[test]
    fn from_matrix_validates() {
        let bad = Matrix::from_rows(&[vec![0.6, 0.5], vec![0.4, 0.5]]);
        assert!(MixingMatrix::from_matrix(bad).is_err());
        let good = Matrix::from_rows(&[vec![0.25, 0.75], vec![0.75, 0.25]]);
        assert!(MixingMatrix::from_matrix(good).is_ok());
    }
}
