//! Exact minimum-cost transport between two discrete distributions, solved
//! as a min-cost flow by successive shortest paths with node potentials.
//! Instance sizes here are tiny (bags of at most 64 unique tokens), so the
//! dense formulation is plenty.

use alloc::vec;
use alloc::vec::Vec;

/// Flow below this is treated as a saturated (removed) capacity.
const FLOW_EPS: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub enum TransportError {
    EmptyMarginal,
    UnbalancedMass { supply: f64, demand: f64 },
    NonFiniteInput,
}

impl core::fmt::Display for TransportError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            TransportError::EmptyMarginal => write!(f, "transport marginal has no mass"),
            TransportError::UnbalancedMass { supply, demand } => {
                write!(f, "marginals disagree: supply {supply}, demand {demand}")
            }
            TransportError::NonFiniteInput => write!(f, "non-finite mass or cost"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for TransportError {}

/// Minimum total cost of moving `supply` onto `demand` under the given
/// per-unit `cost` (row i = supply node, column j = demand node). Both
/// marginals must sum to the same total (within 1e-9 relative slack; they
/// are renormalized internally).
pub fn min_cost_transport(
    supply: &[f64],
    demand: &[f64],
    cost: &dyn Fn(usize, usize) -> f64,
) -> Result<f64, TransportError> {
    let n = supply.len();
    let m = demand.len();
    if n == 0 || m == 0 {
        return Err(TransportError::EmptyMarginal);
    }
    let s_total: f64 = supply.iter().sum();
    let d_total: f64 = demand.iter().sum();
    if !s_total.is_finite() || !d_total.is_finite() {
        return Err(TransportError::NonFiniteInput);
    }
    if s_total <= 0.0 || d_total <= 0.0 {
        return Err(TransportError::EmptyMarginal);
    }
    let rel_gap = (s_total - d_total).abs() / s_total.max(d_total);
    if rel_gap > 1e-9 {
        return Err(TransportError::UnbalancedMass {
            supply: s_total,
            demand: d_total,
        });
    }
    let mut cost_matrix = vec![0.0; n * m];
    for i in 0..n {
        for j in 0..m {
            let c = cost(i, j);
            if !c.is_finite() {
                return Err(TransportError::NonFiniteInput);
            }
            cost_matrix[i * m + j] = c;
        }
    }

    // residual supply/demand, normalized to total mass 1 on both sides
    let mut residual_supply: Vec<f64> = supply.iter().map(|&s| s / s_total).collect();
    let mut residual_demand: Vec<f64> = demand.iter().map(|&d| d / d_total).collect();
    // flow on each (i, j) arc, for residual reversal
    let mut flow = vec![0.0f64; n * m];
    // node potentials keep reduced costs nonnegative for Dijkstra
    let mut pot_supply = vec![0.0f64; n];
    let mut pot_demand = vec![0.0f64; m];
    let mut total_cost = 0.0;

    loop {
        let sources: Vec<usize> = (0..n).filter(|&i| residual_supply[i] > FLOW_EPS).collect();
        if sources.is_empty() {
            break;
        }
        // Bellman-Ford over the bipartite residual graph: forward arcs
        // (i -> j) with capacity left, backward arcs (j -> i) where flow > 0
        let inf = f64::INFINITY;
        let mut dist_s = vec![inf; n];
        let mut dist_d = vec![inf; m];
        let mut pred_d = vec![usize::MAX; m]; // supplying i for each reached j
        let mut pred_s = vec![usize::MAX; n]; // demanding j for each reached i via backward arc
        for &i in &sources {
            dist_s[i] = 0.0;
        }
        // relax up to n + m rounds
        for _ in 0..(n + m) {
            let mut changed = false;
            for i in 0..n {
                if dist_s[i] == inf {
                    continue;
                }
                for j in 0..m {
                    let rc = cost_matrix[i * m + j] - pot_supply[i] - pot_demand[j];
                    if dist_s[i] + rc < dist_d[j] - 1e-15 {
                        dist_d[j] = dist_s[i] + rc;
                        pred_d[j] = i;
                        changed = true;
                    }
                }
            }
            for j in 0..m {
                if dist_d[j] == inf {
                    continue;
                }
                for i in 0..n {
                    if flow[i * m + j] > FLOW_EPS {
                        let rc = -(cost_matrix[i * m + j] - pot_supply[i] - pot_demand[j]);
                        if dist_d[j] + rc < dist_s[i] - 1e-15 {
                            dist_s[i] = dist_d[j] + rc;
                            pred_s[i] = j;
                            changed = true;
                        }
                    }
                }
            }
            if !changed {
                break;
            }
        }
        // cheapest reachable open sink
        let mut best: Option<usize> = None;
        for j in 0..m {
            if residual_demand[j] > FLOW_EPS && dist_d[j] < inf {
                if best.map_or(true, |b| dist_d[j] < dist_d[b]) {
                    best = Some(j);
                }
            }
        }
        let Some(sink) = best else {
            break;
        };

        // trace path back to a source, finding the bottleneck
        let mut path: Vec<(usize, usize, bool)> = Vec::new(); // (i, j, forward)
        let mut j = sink;
        let mut bottleneck = residual_demand[sink];
        loop {
            let i = pred_d[j];
            path.push((i, j, true));
            if pred_s[i] == usize::MAX {
                bottleneck = bottleneck.min(residual_supply[i]);
                break;
            }
            let back_j = pred_s[i];
            bottleneck = bottleneck.min(flow[i * m + back_j]);
            path.push((i, back_j, false));
            j = back_j;
        }
        if bottleneck <= FLOW_EPS {
            break;
        }
        for &(i, j, forward) in &path {
            if forward {
                flow[i * m + j] += bottleneck;
                total_cost += bottleneck * cost_matrix[i * m + j];
            } else {
                flow[i * m + j] -= bottleneck;
                total_cost -= bottleneck * cost_matrix[i * m + j];
            }
        }
        let (src, _, _) = *path.last().unwrap();
        residual_supply[src] -= bottleneck;
        residual_demand[sink] -= bottleneck;

        // potential update keeps subsequent reduced costs consistent
        for i in 0..n {
            if dist_s[i] < inf {
                pot_supply[i] += dist_s[i];
            }
        }
        for j in 0..m {
            if dist_d[j] < inf {
                pot_demand[j] -= dist_d[j];
            }
        }
    }
    Ok(total_cost)
}
