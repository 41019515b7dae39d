//! Regularized intrinsic metric: shortest paths on the periodic 8-neighbor
//! lattice with edge weights `length * (w(u) + w(v)) / 2`, where
//! `w = exp((gamma/2) X_n - (gamma^2/4) n)`.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::chaos::check_gamma;
use crate::error::{invalid, Result};
use crate::fieldgen::{FieldSynthesizer, LayeredField};
use crate::grid::{GridSpec, TorusPoint};
use crate::harness::seed::SeedTree;
use crate::stats::median;

/// The four edge directions stored per node; the other four are their
/// reverses, stored at the neighbor.
pub const FORWARD: [(isize, isize); 4] = [(1, 0), (0, 1), (1, 1), (-1, 1)];

/// Periodic `size x size` lattice with symmetric positive edge weights.
#[derive(Debug, Clone)]
pub struct WeightedLattice {
    size: usize,
    /// `edges[4 * node + d]` is the weight from `node` along `FORWARD[d]`.
    edges: Vec<f64>,
}

impl WeightedLattice {
    /// Lattice with weights `weight(node, d)` along `FORWARD[d]`.
    pub fn from_fn(size: usize, mut weight: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        if size < 3 {
            return Err(invalid("lattice needs at least 3 nodes per axis for 8 distinct neighbors"));
        }
        let mut edges = Vec::with_capacity(4 * size * size);
        for node in 0..size * size {
            for d in 0..4 {
                let w = weight(node, d);
                if !(w > 0.0) || !w.is_finite() {
                    return Err(invalid(format!("edge weight must be positive and finite, got {w}")));
                }
                edges.push(w);
            }
        }
        Ok(Self { size, edges })
    }

    /// Midpoint-rule lattice from per-node conformal factors on an `N x N` grid.
    pub fn from_node_weights(grid: GridSpec, node: &[f64]) -> Result<Self> {
        if node.len() != grid.cells() {
            return Err(invalid("node weights do not match the grid"));
        }
        let n = grid.size();
        let h = grid.spacing();
        let diag = h * std::f64::consts::SQRT_2;
        Self::from_fn(n, |u, d| {
            let v = neighbor(n, u, FORWARD[d]);
            let len = if d < 2 { h } else { diag };
            len * 0.5 * (node[u] + node[v])
        })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn nodes(&self) -> usize {
        self.size * self.size
    }

    /// Weight of the edge between `u` and its neighbor at offset `d`, in any
    /// of the eight directions.
    pub fn edge_weight(&self, u: usize, offset: (isize, isize)) -> Option<f64> {
        let (slot, from) = self.slot(u, offset)?;
        Some(self.edges[4 * from + slot])
    }

    /// Overwrites one undirected edge.
    pub fn set_edge_weight(&mut self, u: usize, offset: (isize, isize), w: f64) -> Result<()> {
        if !(w > 0.0) || !w.is_finite() {
            return Err(invalid("edge weight must be positive and finite"));
        }
        let (slot, from) = self
            .slot(u, offset)
            .ok_or_else(|| invalid(format!("{offset:?} is not a lattice direction")))?;
        self.edges[4 * from + slot] = w;
        Ok(())
    }

    fn slot(&self, u: usize, offset: (isize, isize)) -> Option<(usize, usize)> {
        if let Some(d) = FORWARD.iter().position(|&o| o == offset) {
            return Some((d, u));
        }
        let back = (-offset.0, -offset.1);
        let d = FORWARD.iter().position(|&o| o == back)?;
        Some((d, neighbor(self.size, u, offset)))
    }

    /// The eight `(neighbor, weight)` pairs of `u`.
    #[inline]
    pub fn neighbors(&self, u: usize) -> [(usize, f64); 8] {
        let mut out = [(0, 0.0); 8];
        for (d, &o) in FORWARD.iter().enumerate() {
            let v = neighbor(self.size, u, o);
            out[d] = (v, self.edges[4 * u + d]);
            let back = neighbor(self.size, u, (-o.0, -o.1));
            out[4 + d] = (back, self.edges[4 * back + d]);
        }
        out
    }

    /// Shortest-path distances from `source` to each of `targets`; the search
    /// stops once every target is settled.
    pub fn distances(&self, source: usize, targets: &[usize]) -> Vec<f64> {
        let n = self.nodes();
        let mut dist = vec![f64::INFINITY; n];
        let mut done = vec![false; n];
        let mut wanted = vec![false; n];
        let mut remaining = 0;
        for &t in targets {
            if !wanted[t] {
                wanted[t] = true;
                remaining += 1;
            }
        }
        let mut heap = BinaryHeap::new();
        dist[source] = 0.0;
        heap.push(Entry { dist: 0.0, node: source });
        while let Some(Entry { dist: d, node: u }) = heap.pop() {
            if done[u] {
                continue;
            }
            done[u] = true;
            if wanted[u] {
                remaining -= 1;
                if remaining == 0 {
                    break;
                }
            }
            for (v, w) in self.neighbors(u) {
                let nd = d + w;
                if nd < dist[v] {
                    dist[v] = nd;
                    heap.push(Entry { dist: nd, node: v });
                }
            }
        }
        targets.iter().map(|&t| dist[t]).collect()
    }

    /// Node of the cell containing `p`.
    pub fn node_of(&self, p: TorusPoint) -> usize {
        let s = self.size as f64;
        let i = ((p.x * s) as usize).min(self.size - 1);
        let j = ((p.y * s) as usize).min(self.size - 1);
        j * self.size + i
    }
}

#[inline]
fn neighbor(size: usize, u: usize, (di, dj): (isize, isize)) -> usize {
    let n = size as isize;
    let i = (u % size) as isize;
    let j = (u / size) as isize;
    ((j + dj).rem_euclid(n) * n + (i + di).rem_euclid(n)) as usize
}

#[derive(Debug, PartialEq)]
struct Entry {
    dist: f64,
    node: usize,
}

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap on distance, ties broken by node for determinism
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Lattice for `d_n` built from the cell-center field at level `n`.
pub fn build_weighted_lattice(field: &LayeredField, gamma: f64, n: usize) -> Result<WeightedLattice> {
    check_gamma(gamma)?;
    field.check_level(n)?;
    let shift = 0.25 * gamma * gamma * field.variance(n);
    let node: Vec<f64> = field
        .values(n)?
        .iter()
        .map(|x| if gamma == 0.0 { 1.0 } else { (0.5 * gamma * x - shift).exp() })
        .collect();
    WeightedLattice::from_node_weights(field.grid(), &node)
}

/// Shortest-path distance between the cells containing `x` and `y`.
///
/// The search always runs from the lower-numbered node, so the result is
/// symmetric bit for bit rather than up to the summation order of a path.
pub fn intrinsic_distance(lattice: &WeightedLattice, x: TorusPoint, y: TorusPoint) -> f64 {
    let (a, b) = (lattice.node_of(x), lattice.node_of(y));
    lattice.distances(a.min(b), &[a.max(b)])[0]
}

/// Inputs of the degeneracy experiment.
#[derive(Debug, Clone)]
pub struct DegeneracyConfig {
    pub gamma: f64,
    pub grid: GridSpec,
    /// Increasing levels; the grid must resolve the largest one.
    pub levels: Vec<usize>,
    pub pairs: Vec<(TorusPoint, TorusPoint)>,
    pub replicas: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct MetricReport {
    pub gamma: f64,
    pub levels: Vec<usize>,
    pub pairs: Vec<(TorusPoint, TorusPoint)>,
    /// `distances[level][pair][replica]`.
    pub distances: Vec<Vec<Vec<f64>>>,
    /// Median over replicas of `d_n`, indexed `[level][pair]`.
    pub median_dn: Vec<Vec<f64>>,
    /// Median over replicas of `d_n e^{gamma^2 n / 8}`.
    pub median_rescaled: Vec<Vec<f64>>,
    pub replicas: usize,
}

impl MetricReport {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["level", "pair_id", "median_dn", "median_rescaled", "replicas"])?;
        for (l, level) in self.levels.iter().enumerate() {
            for p in 0..self.pairs.len() {
                w.write_record(&[
                    level.to_string(),
                    p.to_string(),
                    self.median_dn[l][p].to_string(),
                    self.median_rescaled[l][p].to_string(),
                    self.replicas.to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// `d_n` for every pair, level and replica field, with medians across replicas.
pub fn degeneracy_experiment(config: &DegeneracyConfig) -> Result<MetricReport> {
    check_gamma(config.gamma)?;
    if config.levels.is_empty() || config.levels.windows(2).any(|w| w[1] <= w[0]) || config.levels[0] == 0 {
        return Err(invalid("levels must be positive and strictly increasing"));
    }
    if config.pairs.is_empty() || config.replicas == 0 {
        return Err(invalid("need at least one pair and one replica"));
    }
    let n_max = *config.levels.last().unwrap();
    let synth = FieldSynthesizer::new(config.grid, n_max)?;
    let tree = SeedTree::new(config.seed);
    // group pairs by source so each source needs one search per level
    let mut sources: Vec<TorusPoint> = Vec::new();
    let mut source_of = Vec::with_capacity(config.pairs.len());
    for (x, _) in &config.pairs {
        let k = match sources.iter().position(|s| s == x) {
            Some(k) => k,
            None => {
                sources.push(*x);
                sources.len() - 1
            }
        };
        source_of.push(k);
    }
    let per_replica: Vec<Result<Vec<Vec<f64>>>> = (0..config.replicas)
        .into_par_iter()
        .map(|r| {
            let field = synth.sample(tree.child(r as u64).seed());
            config
                .levels
                .iter()
                .map(|&n| {
                    let lattice = build_weighted_lattice(&field, config.gamma, n)?;
                    let mut out = vec![0.0; config.pairs.len()];
                    for (s, src) in sources.iter().enumerate() {
                        let idx: Vec<usize> = (0..config.pairs.len()).filter(|&p| source_of[p] == s).collect();
                        let targets: Vec<usize> = idx.iter().map(|&p| lattice.node_of(config.pairs[p].1)).collect();
                        let d = lattice.distances(lattice.node_of(*src), &targets);
                        for (p, v) in idx.into_iter().zip(d) {
                            out[p] = v;
                        }
                    }
                    Ok(out)
                })
                .collect()
        })
        .collect();
    let per_replica: Vec<Vec<Vec<f64>>> = per_replica.into_iter().collect::<Result<_>>()?;
    let g2 = config.gamma * config.gamma;
    let mut distances = Vec::with_capacity(config.levels.len());
    let mut median_dn = Vec::with_capacity(config.levels.len());
    let mut median_rescaled = Vec::with_capacity(config.levels.len());
    for (l, &n) in config.levels.iter().enumerate() {
        let scale = (g2 * n as f64 / 8.0).exp();
        let by_pair: Vec<Vec<f64>> = (0..config.pairs.len())
            .map(|p| per_replica.iter().map(|rep| rep[l][p]).collect())
            .collect();
        median_dn.push(by_pair.iter().map(|v| median(v)).collect::<Vec<_>>());
        median_rescaled.push(
            by_pair
                .iter()
                .map(|v| median(&v.iter().map(|d| d * scale).collect::<Vec<_>>()))
                .collect(),
        );
        distances.push(by_pair);
    }
    Ok(MetricReport {
        gamma: config.gamma,
        levels: config.levels.clone(),
        pairs: config.pairs.clone(),
        distances,
        median_dn,
        median_rescaled,
        replicas: config.replicas,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fieldgen::synthesize_layers;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn floyd_warshall(l: &WeightedLattice) -> Vec<Vec<f64>> {
        let n = l.nodes();
        let mut d = vec![vec![f64::INFINITY; n]; n];
        for u in 0..n {
            d[u][u] = 0.0;
            for (v, w) in l.neighbors(u) {
                d[u][v] = d[u][v].min(w);
            }
        }
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    let via = d[i][k] + d[k][j];
                    if via < d[i][j] {
                        d[i][j] = via;
                    }
                }
            }
        }
        d
    }

    fn random_lattice(size: usize, weights: &[f64]) -> WeightedLattice {
        WeightedLattice::from_fn(size, |u, d| weights[(4 * u + d) % weights.len()]).unwrap()
    }

    #[test]
    fn gamma_zero_weights_are_lengths() {
        let f = synthesize_layers(GridSpec::new(16).unwrap(), 1, 3).unwrap();
        let l = build_weighted_lattice(&f, 0.0, 1).unwrap();
        let h = 1.0 / 16.0;
        for u in [0, 17, 255] {
            let nb = l.neighbors(u);
            let mut distinct: Vec<usize> = nb.iter().map(|p| p.0).collect();
            distinct.sort();
            distinct.dedup();
            assert_eq!(distinct.len(), 8);
            for (k, (_, w)) in nb.iter().enumerate() {
                let expect = if k % 4 < 2 { h } else { h * std::f64::consts::SQRT_2 };
                assert_eq!(*w, expect);
            }
        }
    }

    #[test]
    fn single_edge_formula() {
        let grid = GridSpec::new(8).unwrap();
        let cov = vec![[1.0, 0.5, 0.25]; 2];
        let layers = vec![vec![0.3; 64], vec![0.4; 64]];
        let f = LayeredField::from_layers(grid, 0, layers, cov);
        let g = 1.3;
        let l = build_weighted_lattice(&f, g, 2).unwrap();
        let expect = 0.125 * (0.5 * g * 0.7 - 0.25 * g * g * 2.0).exp();
        assert_relative_eq!(l.edge_weight(9, (1, 0)).unwrap(), expect, max_relative = 1e-14);
        assert_relative_eq!(l.edge_weight(10, (-1, 0)).unwrap(), expect, max_relative = 1e-14);
        assert!(build_weighted_lattice(&f, g, 3).is_err());
    }

    #[test]
    fn gamma_zero_within_octile_bound() {
        let f = synthesize_layers(GridSpec::new(16).unwrap(), 1, 3).unwrap();
        let l = build_weighted_lattice(&f, 0.0, 1).unwrap();
        let g = f.grid();
        let bound = (4.0 - 2.0 * std::f64::consts::SQRT_2).sqrt();
        assert!(bound < 1.083);
        let src = g.cell_center(3, 4);
        for k in 0..g.cells() {
            let y = g.center_of_index(k);
            let d = intrinsic_distance(&l, src, y);
            let e = src.distance(&y);
            if k == g.index(3, 4) {
                assert_eq!(d, 0.0);
            } else {
                assert!(d >= e * (1.0 - 1e-12) && d <= e * bound * (1.0 + 1e-12), "{d} vs {e}");
            }
        }
    }

    #[test]
    fn dijkstra_matches_floyd_warshall_on_small_lattices() {
        let mut rng = SeedTree::new(17).rng();
        for size in [3, 4, 5, 6, 8] {
            let weights: Vec<f64> = (0..4 * size * size).map(|_| rand::Rng::random_range(&mut rng, 0.1..2.0)).collect();
            let l = random_lattice(size, &weights);
            let fw = floyd_warshall(&l);
            let all: Vec<usize> = (0..l.nodes()).collect();
            for s in 0..l.nodes() {
                let d = l.distances(s, &all);
                for t in 0..l.nodes() {
                    assert_relative_eq!(d[t], fw[s][t], max_relative = 1e-12);
                }
            }
        }
    }

    #[test]
    fn level_independent_at_gamma_zero() {
        let cfg = DegeneracyConfig {
            gamma: 0.0,
            grid: GridSpec::new(64).unwrap(),
            levels: vec![1, 2],
            pairs: vec![(TorusPoint::new(0.1, 0.1), TorusPoint::new(0.6, 0.3))],
            replicas: 2,
            seed: 1,
        };
        let r = degeneracy_experiment(&cfg).unwrap();
        assert_eq!(r.median_dn[0], r.median_dn[1]);
        let mut out = Vec::new();
        r.write_csv(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert!(text.starts_with("level,pair_id,median_dn,median_rescaled,replicas\n"));
        assert_eq!(text.lines().count(), 3);
    }

    #[test]
    fn experiment_rejects_unresolved_levels() {
        let cfg = DegeneracyConfig {
            gamma: 1.0,
            grid: GridSpec::new(64).unwrap(),
            levels: vec![2, 5],
            pairs: vec![(TorusPoint::new(0.1, 0.1), TorusPoint::new(0.6, 0.3))],
            replicas: 1,
            seed: 1,
        };
        assert!(degeneracy_experiment(&cfg).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn symmetric_and_triangular(weights in prop::collection::vec(0.05f64..3.0, 100), a in 0usize..25, b in 0usize..25, c in 0usize..25) {
            let l = random_lattice(5, &weights);
            let p = |k: usize| TorusPoint::new((k % 5) as f64 / 5.0 + 0.1, (k / 5) as f64 / 5.0 + 0.1);
            let d = |u: usize, v: usize| intrinsic_distance(&l, p(u), p(v));
            prop_assert_eq!(d(a, b), d(b, a));
            prop_assert!(d(a, c) <= d(a, b) + d(b, c) + 1e-12);
            prop_assert_eq!(d(a, a), 0.0);
            let from_a = l.distances(a, &[b]);
            let from_b = l.distances(b, &[a]);
            prop_assert!((from_a[0] - from_b[0]).abs() <= 1e-12 * from_a[0]);
        }

        #[test]
        fn raising_an_edge_never_shortens(weights in prop::collection::vec(0.05f64..3.0, 100), u in 0usize..25, d in 0usize..4, factor in 1.0f64..5.0) {
            let mut l = random_lattice(5, &weights);
            let all: Vec<usize> = (0..25).collect();
            let before: Vec<Vec<f64>> = (0..25).map(|s| l.distances(s, &all)).collect();
            let w = l.edge_weight(u, FORWARD[d]).unwrap();
            l.set_edge_weight(u, FORWARD[d], w * factor).unwrap();
            for s in 0..25 {
                let after = l.distances(s, &all);
                for t in 0..25 {
                    prop_assert!(after[t] >= before[s][t]);
                }
            }
        }
    }
}
