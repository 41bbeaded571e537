//! Intrinsic graph distances on a sample and the quasiconvexity constant.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::DiscreteSurface;

/// Pairs closer than this multiple of `h` are not audited.
pub const MIN_SEPARATION: f64 = 10.0;
const PAIR_SEED: u64 = 0x0C0C;

/// Neighborhood graph with edges between samples closer than `h`, weighted by length.
#[derive(Clone, Debug)]
pub struct IntrinsicGraph {
    pub h: f64,
    offsets: Vec<usize>,
    targets: Vec<u32>,
    lengths: Vec<f64>,
    /// Component label per vertex, labels `0..components` in order of first vertex.
    pub component: Vec<usize>,
    pub components: usize,
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

impl IntrinsicGraph {
    /// Requires `h ≥ 2 ·` median nearest-neighbor spacing.
    pub fn build(s: &DiscreteSurface, h: f64) -> Result<Self> {
        let spacing = s.median_spacing();
        if !(h >= 2.0 * spacing && h.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "connection radius {h} is below twice the median spacing {spacing}"
            )));
        }
        let rows: Vec<Vec<(u32, f64)>> = (0..s.len())
            .into_par_iter()
            .map(|i| {
                let x = s.point(i);
                let mut row = Vec::new();
                s.index().for_each_in_ball(&x, h, |j| {
                    if j != i {
                        row.push((j as u32, x.dist(&s.point(j))));
                    }
                });
                row.sort_unstable_by_key(|e| e.0);
                row
            })
            .collect();
        let mut offsets = Vec::with_capacity(s.len() + 1);
        let mut targets = Vec::new();
        let mut lengths = Vec::new();
        offsets.push(0);
        let mut parent: Vec<usize> = (0..s.len()).collect();
        for (i, row) in rows.into_iter().enumerate() {
            for (j, d) in row {
                targets.push(j);
                lengths.push(d);
                let (a, b) = (find(&mut parent, i), find(&mut parent, j as usize));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
            offsets.push(targets.len());
        }
        let mut label = vec![usize::MAX; s.len()];
        let mut component = vec![0; s.len()];
        let mut components = 0;
        for i in 0..s.len() {
            let root = find(&mut parent, i);
            if label[root] == usize::MAX {
                label[root] = components;
                components += 1;
            }
            component[i] = label[root];
        }
        Ok(IntrinsicGraph {
            h,
            offsets,
            targets,
            lengths,
            component,
            components,
        })
    }

    pub fn len(&self) -> usize {
        self.component.len()
    }

    pub fn is_empty(&self) -> bool {
        self.component.is_empty()
    }

    pub fn edge_count(&self) -> usize {
        self.targets.len()
    }

    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.offsets[i]..self.offsets[i + 1];
        self.targets[range.clone()].iter().zip(&self.lengths[range]).map(|(&j, &d)| (j as usize, d))
    }

    /// Shortest-path lengths from `source` (infinite when unreachable).
    pub fn distances_from(&self, source: usize) -> Vec<f64> {
        let mut dist = vec![f64::INFINITY; self.len()];
        let mut heap = BinaryHeap::new();
        dist[source] = 0.0;
        heap.push(Reverse((Ordered(0.0), source)));
        while let Some(Reverse((Ordered(d), u))) = heap.pop() {
            if d > dist[u] {
                continue;
            }
            for (v, w) in self.neighbors(u) {
                let nd = d + w;
                if nd < dist[v] {
                    dist[v] = nd;
                    heap.push(Reverse((Ordered(nd), v)));
                }
            }
        }
        dist
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct Ordered(f64);

impl Eq for Ordered {}

impl PartialOrd for Ordered {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Ordered {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PairRecord {
    pub source: usize,
    pub target: usize,
    pub euclidean: f64,
    pub intrinsic: f64,
    pub ratio: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct QuasiconvexAudit {
    pub h: f64,
    pub kappa: f64,
    pub worst: Option<PairRecord>,
    pub pairs: usize,
    pub components: usize,
    pub records: Vec<PairRecord>,
}

/// Number of sources; targets per source make up the requested pair count.
pub const SOURCES: usize = 16;

/// `κ = max dist_graph(x, y)/|x − y|` over sampled pairs at separation at least
/// `10h`. Each source contributes random targets plus its farthest sample.
pub fn quasiconvexity_audit(s: &DiscreteSurface, h: f64, pair_count: usize, seed: u64) -> Result<QuasiconvexAudit> {
    let graph = IntrinsicGraph::build(s, h)?;
    if graph.components > 1 {
        return Err(Error::Disconnected {
            components: graph.components,
        });
    }
    let n = s.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ PAIR_SEED);
    let sources: Vec<usize> = (0..SOURCES.min(n)).map(|_| rng.gen_range(0..n)).collect();
    let per_source = pair_count.div_ceil(sources.len().max(1)).max(1);
    let plans: Vec<(usize, u64)> = sources.iter().map(|&src| (src, rng.gen())).collect();
    let min_sep = MIN_SEPARATION * h;
    let records: Vec<PairRecord> = plans
        .par_iter()
        .map(|&(src, sub_seed)| {
            let x = s.point(src);
            let dist = graph.distances_from(src);
            let far: Vec<usize> = (0..n).filter(|&j| s.point(j).dist(&x) >= min_sep).collect();
            let mut out = Vec::new();
            if far.is_empty() {
                return out;
            }
            let farthest = *far
                .iter()
                .max_by(|&&a, &&b| s.point(a).dist(&x).total_cmp(&s.point(b).dist(&x)).then(b.cmp(&a)))
                .unwrap();
            let mut local = ChaCha8Rng::seed_from_u64(sub_seed);
            let mut targets = vec![farthest];
            targets.extend((1..per_source).map(|_| far[local.gen_range(0..far.len())]));
            for t in targets {
                let e = s.point(t).dist(&x);
                out.push(PairRecord {
                    source: src,
                    target: t,
                    euclidean: e,
                    intrinsic: dist[t],
                    ratio: dist[t] / e,
                });
            }
            out
        })
        .flatten()
        .collect();
    let mut worst: Option<PairRecord> = None;
    for r in &records {
        if worst.as_ref().is_none_or(|w| r.ratio > w.ratio) {
            worst = Some(r.clone());
        }
    }
    Ok(QuasiconvexAudit {
        h,
        kappa: worst.as_ref().map_or(1.0, |w| w.ratio),
        worst,
        pairs: records.len(),
        components: graph.components,
        records,
    })
}
