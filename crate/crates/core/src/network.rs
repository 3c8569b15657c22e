//! Time-varying communication graphs and doubly stochastic consensus.

use std::collections::VecDeque;
use std::io::Write;

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::rng::{self, tag};

/// Row/column-sum tolerance for double stochasticity.
pub const STOCHASTIC_TOL: f64 = 1e-12;

/// Mixing weights `W_t` of one round.
#[derive(Debug, Clone, PartialEq)]
pub struct MixingMatrix {
    weights: DMatrix<f64>,
    round: usize,
}

impl MixingMatrix {
    pub fn new(weights: DMatrix<f64>, round: usize) -> Result<Self> {
        if !weights.is_square() || weights.nrows() == 0 {
            return Err(Error::InvalidParameter(
                "mixing matrix must be square and nonempty".into(),
            ));
        }
        Ok(Self { weights, round })
    }

    pub fn identity(n: usize, round: usize) -> Self {
        Self {
            weights: DMatrix::identity(n, n),
            round,
        }
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    pub fn round(&self) -> usize {
        self.round
    }

    pub fn n(&self) -> usize {
        self.weights.nrows()
    }

    /// Directed edges `(j, i)` with `W[i][j] > 0`, `i != j`: `j` sends to `i`.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let n = self.n();
        let mut out = Vec::new();
        for i in 0..n {
            for j in 0..n {
                if i != j && self.weights[(i, j)] > 0.0 {
                    out.push((j, i));
                }
            }
        }
        out
    }

    pub fn min_positive_weight(&self) -> f64 {
        self.weights
            .iter()
            .copied()
            .filter(|&w| w > 0.0)
            .fold(f64::INFINITY, f64::min)
    }

    /// Largest deviation of any row or column sum from one.
    pub fn stochastic_deviation(&self) -> f64 {
        let rows = self.weights.row_iter().map(|r| (r.sum() - 1.0).abs());
        let cols = self.weights.column_iter().map(|c| (c.sum() - 1.0).abs());
        rows.chain(cols).fold(0.0, f64::max)
    }
}

/// Seeded random graph process: each unordered pair is linked with
/// probability `rho` every round, and the path edges `(i, i+1)` are always
/// present.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraphSchedule {
    pub n: usize,
    pub rho: f64,
    pub iota: usize,
    pub seed: u64,
}

impl GraphSchedule {
    pub fn new(n: usize, rho: f64, iota: usize, seed: u64) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParameter(
                "graph needs at least one vertex".into(),
            ));
        }
        if !(0.0..=1.0).contains(&rho) {
            return Err(Error::InvalidParameter(format!(
                "edge probability must lie in [0, 1], got {rho}"
            )));
        }
        if iota == 0 {
            return Err(Error::InvalidParameter(
                "connectivity window must be positive".into(),
            ));
        }
        Ok(Self { n, rho, iota, seed })
    }

    /// Smallest nonzero weight the generator can emit.
    pub fn w_min(&self) -> f64 {
        1.0 / self.n as f64
    }

    /// Undirected edge list `(i, j)`, `i < j`, of a round.
    pub fn edge_list(&self, round: usize) -> Vec<(usize, usize)> {
        let mut rng = rng::stream(self.seed, &[tag::GRAPH, round as u64]);
        let mut edges = Vec::new();
        for i in 0..self.n {
            for j in (i + 1)..self.n {
                // Draw for every pair so the stream layout does not depend on rho.
                let coin: f64 = rng.gen();
                if j == i + 1 || coin < self.rho {
                    edges.push((i, j));
                }
            }
        }
        edges
    }

    /// Off-diagonal weight `1/n` on every edge, diagonal fills the row to one.
    pub fn generate(&self, round: usize) -> MixingMatrix {
        let n = self.n;
        let w = 1.0 / n as f64;
        let mut weights = DMatrix::zeros(n, n);
        for (i, j) in self.edge_list(round) {
            weights[(i, j)] = w;
            weights[(j, i)] = w;
        }
        for i in 0..n {
            let off: f64 = (0..n).filter(|&j| j != i).map(|j| weights[(i, j)]).sum();
            weights[(i, i)] = 1.0 - off;
        }
        MixingMatrix { weights, round }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let g: Self = serde_json::from_str(s)?;
        Self::new(g.n, g.rho, g.iota, g.seed)
    }

    /// Writes `round,i,j` rows for rounds `1..=rounds`.
    pub fn write_edges_csv<W: Write>(&self, rounds: usize, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["round", "i", "j"])?;
        for t in 1..=rounds {
            for (i, j) in self.edge_list(t) {
                w.serialize((t, i, j))?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Outcome of checking a matrix sequence against the graph assumptions.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Assumption1Report {
    pub matrices: usize,
    pub min_nonzero_weight: f64,
    pub weight_bound_ok: bool,
    pub max_stochastic_deviation: f64,
    pub doubly_stochastic_ok: bool,
    pub diagonal_positive_ok: bool,
    /// Start indices (0-based into the sequence) of windows whose union graph
    /// is not strongly connected.
    pub disconnected_windows: Vec<usize>,
    pub connectivity_ok: bool,
}

impl Assumption1Report {
    pub fn passed(&self) -> bool {
        self.weight_bound_ok
            && self.doubly_stochastic_ok
            && self.diagonal_positive_ok
            && self.connectivity_ok
    }
}

fn reaches_all(adj: &[Vec<usize>], start: usize) -> bool {
    let mut seen = vec![false; adj.len()];
    let mut queue = VecDeque::from([start]);
    seen[start] = true;
    let mut count = 1;
    while let Some(v) = queue.pop_front() {
        for &w in &adj[v] {
            if !seen[w] {
                seen[w] = true;
                count += 1;
                queue.push_back(w);
            }
        }
    }
    count == adj.len()
}

/// Strong connectivity of a digraph given as directed edges `(from, to)`.
pub fn strongly_connected(n: usize, edges: &[(usize, usize)]) -> bool {
    if n <= 1 {
        return true;
    }
    let mut fwd = vec![Vec::new(); n];
    let mut bwd = vec![Vec::new(); n];
    for &(a, b) in edges {
        fwd[a].push(b);
        bwd[b].push(a);
    }
    reaches_all(&fwd, 0) && reaches_all(&bwd, 0)
}

pub fn validate_assumption1(
    matrices: &[MixingMatrix],
    iota: usize,
    w_min: f64,
) -> Result<Assumption1Report> {
    let first = matrices
        .first()
        .ok_or_else(|| Error::InvalidParameter("need at least one mixing matrix".into()))?;
    if iota == 0 {
        return Err(Error::InvalidParameter(
            "connectivity window must be positive".into(),
        ));
    }
    let n = first.n();
    for m in matrices {
        check_dim(n, m.n())?;
    }

    let min_nonzero_weight = matrices
        .iter()
        .map(MixingMatrix::min_positive_weight)
        .fold(f64::INFINITY, f64::min);
    let max_stochastic_deviation = matrices
        .iter()
        .map(MixingMatrix::stochastic_deviation)
        .fold(0.0, f64::max);
    let diagonal_positive_ok = matrices
        .iter()
        .all(|m| (0..n).all(|i| m.weights[(i, i)] > 0.0));

    let window = iota.min(matrices.len());
    let disconnected_windows: Vec<usize> = (0..=matrices.len() - window)
        .filter(|&k| {
            let edges: Vec<_> = matrices[k..k + window]
                .iter()
                .flat_map(MixingMatrix::edges)
                .collect();
            !strongly_connected(n, &edges)
        })
        .collect();

    Ok(Assumption1Report {
        matrices: matrices.len(),
        min_nonzero_weight,
        weight_bound_ok: min_nonzero_weight >= w_min - STOCHASTIC_TOL,
        max_stochastic_deviation,
        doubly_stochastic_ok: max_stochastic_deviation <= STOCHASTIC_TOL,
        diagonal_positive_ok,
        connectivity_ok: disconnected_windows.is_empty(),
        disconnected_windows,
    })
}

/// One weighted-averaging step: row `i` of the result is
/// `sum_j W[i][j] * duals[j]`.
pub fn consensus_step(w: &MixingMatrix, duals: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_dim(w.n(), duals.nrows())?;
    Ok(&w.weights * duals)
}

/// Geometric contraction rate `(1 - w / (2 n^2))^(1/iota)` of the consensus
/// error for graphs satisfying the connectivity assumptions.
pub fn contraction_rate(w_min: f64, n: usize, iota: usize) -> f64 {
    (1.0 - w_min / (2.0 * (n * n) as f64)).powf(1.0 / iota as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn two_vertices_without_random_edges() {
        let w = GraphSchedule::new(2, 0.0, 1, 3).unwrap().generate(1);
        assert_eq!(w.weights(), &DMatrix::from_element(2, 2, 0.5));
    }

    #[test]
    fn complete_graph_when_rho_is_one() {
        let w = GraphSchedule::new(3, 1.0, 1, 3).unwrap().generate(5);
        let third = 1.0 / 3.0;
        for i in 0..3 {
            for j in 0..3 {
                assert!((w.weights()[(i, j)] - third).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn generator_output_is_doubly_stochastic() {
        let g = GraphSchedule::new(50, 0.2, 1, 17).unwrap();
        for t in 1..=20 {
            let w = g.generate(t);
            assert!(w.stochastic_deviation() <= 1e-12);
            for i in 0..50 {
                assert!(w.weights()[(i, i)] >= 1.0 - 49.0 / 50.0 - 1e-15);
            }
            assert_eq!(w.weights(), &w.weights().transpose());
        }
    }

    #[test]
    fn generator_is_deterministic_per_seed_and_round() {
        let g = GraphSchedule::new(12, 0.3, 1, 99).unwrap();
        assert_eq!(g.generate(4), g.generate(4));
        assert_ne!(g.edge_list(4), g.edge_list(5));
        let h = GraphSchedule { seed: 100, ..g };
        assert_ne!(g.edge_list(4), h.edge_list(4));
    }

    #[test]
    fn identity_sequence_fails_connectivity() {
        let seq: Vec<_> = (1..=3).map(|t| MixingMatrix::identity(4, t)).collect();
        let r = validate_assumption1(&seq, 1, 0.25).unwrap();
        assert!(!r.connectivity_ok);
        assert_eq!(r.disconnected_windows, vec![0, 1, 2]);
        assert!(r.doubly_stochastic_ok);
        assert!(!r.passed());
    }

    #[test]
    fn generator_sequence_passes_with_one_over_n() {
        let g = GraphSchedule::new(10, 0.2, 1, 5).unwrap();
        let seq: Vec<_> = (1..=100).map(|t| g.generate(t)).collect();
        for iota in [1, 3] {
            let r = validate_assumption1(&seq, iota, g.w_min()).unwrap();
            assert!(r.passed(), "{r:?}");
        }
    }

    #[test]
    fn column_sum_failure_is_reported() {
        let w = DMatrix::from_row_slice(3, 3, &[0.5, 0.5, 0.0, 0.5, 0.0, 0.5, 0.5, 0.0, 0.5]);
        let r = validate_assumption1(&[MixingMatrix::new(w, 1).unwrap()], 1, 0.5).unwrap();
        assert!(!r.doubly_stochastic_ok);
        assert!((r.max_stochastic_deviation - 0.5).abs() < 1e-15);
        assert!(!r.diagonal_positive_ok);
    }

    #[test]
    fn weight_bound_failure_is_reported() {
        let w = DMatrix::from_row_slice(2, 2, &[0.9, 0.1, 0.1, 0.9]);
        let r = validate_assumption1(&[MixingMatrix::new(w, 1).unwrap()], 1, 0.2).unwrap();
        assert!(!r.weight_bound_ok);
        assert!(r.connectivity_ok);
    }

    #[test]
    fn window_union_can_restore_connectivity() {
        // 0 -> 1 in odd rounds, 1 -> 0 in even rounds.
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.5, 0.5]);
        let b = DMatrix::from_row_slice(2, 2, &[0.5, 0.5, 0.0, 1.0]);
        let seq = vec![
            MixingMatrix::new(a.clone(), 1).unwrap(),
            MixingMatrix::new(b.clone(), 2).unwrap(),
            MixingMatrix::new(a, 3).unwrap(),
        ];
        assert!(!validate_assumption1(&seq, 1, 0.5).unwrap().connectivity_ok);
        assert!(validate_assumption1(&seq, 2, 0.5).unwrap().connectivity_ok);
    }

    #[test]
    fn consensus_examples() {
        let avg = MixingMatrix::new(DMatrix::from_element(2, 2, 0.5), 1).unwrap();
        let duals = DMatrix::from_row_slice(2, 2, &[0.0, 2.0, 4.0, 0.0]);
        assert_eq!(
            consensus_step(&avg, &duals).unwrap(),
            DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 2.0, 1.0])
        );

        let id = MixingMatrix::identity(2, 1);
        assert_eq!(consensus_step(&id, &duals).unwrap(), duals);

        let g = GraphSchedule::new(6, 0.4, 1, 1).unwrap().generate(1);
        let same = DMatrix::from_fn(6, 2, |_, j| 1.5 + j as f64);
        let out = consensus_step(&g, &same).unwrap();
        assert!((out - same).abs().max() < 1e-14);

        assert!(consensus_step(&avg, &DMatrix::zeros(3, 1)).is_err());
    }

    #[test]
    fn consensus_preserves_mean_and_sign() {
        let g = GraphSchedule::new(10, 0.2, 1, 8).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for t in 1..=50 {
            let q = DMatrix::from_fn(10, 3, |_, _| rng.gen_range(0.0..10.0));
            let out = consensus_step(&g.generate(t), &q).unwrap();
            for c in 0..3 {
                assert!((out.column(c).mean() - q.column(c).mean()).abs() <= 1e-12);
            }
            assert!(out.iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn diffusion_disagreement_decays_faster_than_theoretical_rate() {
        let n = 10;
        let g = GraphSchedule::new(n, 0.2, 1, 21).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut q = DMatrix::from_fn(n, 1, |_, _| rng.gen_range(0.0..100.0));
        let mut log_dis = Vec::new();
        for t in 1..=200 {
            q = consensus_step(&g.generate(t), &q).unwrap();
            let mean = q.mean();
            let dis = q.iter().map(|v| (v - mean).abs()).fold(0.0, f64::max);
            if dis > 1e-10 {
                log_dis.push((t as f64, dis.ln()));
            }
        }
        assert!(log_dis.len() > 10);
        let k = log_dis.len() as f64;
        let (sx, sy) = log_dis
            .iter()
            .fold((0.0, 0.0), |a, p| (a.0 + p.0, a.1 + p.1));
        let (mx, my) = (sx / k, sy / k);
        let slope = log_dis.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>()
            / log_dis.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
        let lambda = contraction_rate(g.w_min(), n, 1);
        assert!(
            slope.exp() <= lambda,
            "empirical {} vs bound {lambda}",
            slope.exp()
        );
    }

    #[test]
    fn schedule_json_and_edge_csv() {
        let g = GraphSchedule::new(4, 0.5, 2, 77).unwrap();
        let back = GraphSchedule::from_json(&g.to_json().unwrap()).unwrap();
        assert_eq!(g, back);
        assert!(GraphSchedule::from_json(r#"{"n":0,"rho":0.1,"iota":1,"seed":1}"#).is_err());

        let mut buf = Vec::new();
        g.write_edges_csv(2, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("round,i,j"));
        let rows = lines.count();
        assert_eq!(rows, g.edge_list(1).len() + g.edge_list(2).len());
    }

    #[test]
    fn strong_connectivity_helper() {
        assert!(strongly_connected(1, &[]));
        assert!(!strongly_connected(2, &[(0, 1)]));
        assert!(strongly_connected(3, &[(0, 1), (1, 2), (2, 0)]));
    }
}
