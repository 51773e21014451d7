//! Exact d1 between finitely supported laws on R^d with arbitrary masses.
//!
//! Solved as a min-cost flow on the complete bipartite graph (successive
//! shortest paths, dense Dijkstra with potentials). Points of unequal length
//! are padded with zeros, matching the embedding of R^d into l1 sequences.

use super::{l1_distance, MASS_TOL};
use crate::error::{Error, Result};

const FLOW_EPS: f64 = 1e-15;

#[derive(Debug, Clone, PartialEq)]
pub struct WeightedPoint {
    pub point: Vec<f64>,
    pub weight: f64,
}

impl WeightedPoint {
    pub fn new(point: Vec<f64>, weight: f64) -> Self {
        Self { point, weight }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransportPlan {
    /// (index into source, index into target, mass moved).
    pub flows: Vec<(usize, usize, f64)>,
    pub cost: f64,
}

fn padded_l1(a: &[f64], b: &[f64]) -> f64 {
    let k = a.len().min(b.len());
    l1_distance(&a[..k], &b[..k])
        + a[k..].iter().map(|x| x.abs()).sum::<f64>()
        + b[k..].iter().map(|x| x.abs()).sum::<f64>()
}

fn check(points: &[WeightedPoint], side: &str) -> Result<()> {
    if points.is_empty() {
        return Err(Error::Empty(format!("{side} support")));
    }
    if points
        .iter()
        .any(|p| !(p.weight >= 0.0) || p.point.iter().any(|x| !x.is_finite()))
    {
        return Err(Error::InvalidMeasure(format!(
            "{side}: weights must be nonnegative and coordinates finite"
        )));
    }
    let total: f64 = points.iter().map(|p| p.weight).sum();
    if (total - 1.0).abs() > 1e3 * MASS_TOL {
        return Err(Error::InvalidMeasure(format!(
            "{side}: weights sum to {total}, not 1"
        )));
    }
    Ok(())
}

/// Optimal transport plan between two finitely supported laws, l1 ground cost.
pub fn transport_plan(a: &[WeightedPoint], b: &[WeightedPoint]) -> Result<TransportPlan> {
    check(a, "source")?;
    check(b, "target")?;
    let (m, n) = (a.len(), b.len());
    let cost: Vec<Vec<f64>> = a
        .iter()
        .map(|p| b.iter().map(|q| padded_l1(&p.point, &q.point)).collect())
        .collect();

    // nodes: 0 = S, 1..=m sources, m+1..=m+n targets, m+n+1 = T
    let s = 0usize;
    let t = m + n + 1;
    let v_count = m + n + 2;
    let mut supply: Vec<f64> = a.iter().map(|p| p.weight).collect();
    let mut demand: Vec<f64> = b.iter().map(|p| p.weight).collect();
    let mut flow = vec![vec![0.0f64; n]; m];
    let mut sent_from = vec![0.0f64; m];
    let mut got_at = vec![0.0f64; n];
    let mut pot = vec![0.0f64; v_count];

    let remaining = |supply: &[f64]| supply.iter().sum::<f64>();
    while remaining(&supply) > FLOW_EPS && remaining(&demand) > FLOW_EPS {
        let mut dist = vec![f64::INFINITY; v_count];
        let mut prev = vec![usize::MAX; v_count];
        let mut done = vec![false; v_count];
        dist[s] = 0.0;
        loop {
            let mut u = usize::MAX;
            let mut best = f64::INFINITY;
            for v in 0..v_count {
                if !done[v] && dist[v] < best {
                    best = dist[v];
                    u = v;
                }
            }
            if u == usize::MAX {
                break;
            }
            done[u] = true;
            let relax = |v: usize, c: f64, dist: &mut Vec<f64>, prev: &mut Vec<usize>| {
                // reduced costs are nonnegative up to rounding
                let nd = dist[u] + (c + pot[u] - pot[v]).max(0.0);
                if nd < dist[v] {
                    dist[v] = nd;
                    prev[v] = u;
                }
            };
            if u == s {
                for i in 0..m {
                    if supply[i] > FLOW_EPS {
                        relax(1 + i, 0.0, &mut dist, &mut prev);
                    }
                }
            } else if u <= m {
                let i = u - 1;
                if sent_from[i] > FLOW_EPS {
                    relax(s, 0.0, &mut dist, &mut prev);
                }
                for j in 0..n {
                    relax(m + 1 + j, cost[i][j], &mut dist, &mut prev);
                }
            } else if u <= m + n {
                let j = u - m - 1;
                for i in 0..m {
                    if flow[i][j] > FLOW_EPS {
                        relax(1 + i, -cost[i][j], &mut dist, &mut prev);
                    }
                }
                if demand[j] > FLOW_EPS {
                    relax(t, 0.0, &mut dist, &mut prev);
                }
            } else {
                for j in 0..n {
                    if got_at[j] > FLOW_EPS {
                        relax(m + 1 + j, 0.0, &mut dist, &mut prev);
                    }
                }
            }
        }
        if !dist[t].is_finite() {
            break;
        }
        for v in 0..v_count {
            if dist[v].is_finite() {
                pot[v] += dist[v];
            }
        }

        // bottleneck along the path
        let mut path = vec![t];
        while *path.last().unwrap() != s {
            path.push(prev[*path.last().unwrap()]);
        }
        path.reverse();
        let mut amount = f64::INFINITY;
        for w in path.windows(2) {
            let (u, v) = (w[0], w[1]);
            let cap = if u == s {
                supply[v - 1]
            } else if v == t {
                demand[u - m - 1]
            } else if u <= m && v > m {
                f64::INFINITY
            } else if u > m && v <= m && v >= 1 {
                flow[v - 1][u - m - 1]
            } else if v == s {
                sent_from[u - 1]
            } else {
                got_at[v - m - 1]
            };
            amount = amount.min(cap);
        }
        for w in path.windows(2) {
            let (u, v) = (w[0], w[1]);
            if u == s {
                supply[v - 1] -= amount;
                sent_from[v - 1] += amount;
            } else if v == t {
                demand[u - m - 1] -= amount;
                got_at[u - m - 1] += amount;
            } else if u <= m && v > m {
                flow[u - 1][v - m - 1] += amount;
            } else if u > m && v <= m && v >= 1 {
                flow[v - 1][u - m - 1] -= amount;
            } else if v == s {
                sent_from[u - 1] -= amount;
                supply[u - 1] += amount;
            } else {
                got_at[v - m - 1] -= amount;
                demand[v - m - 1] += amount;
            }
        }
    }

    let mut flows = Vec::new();
    let mut total = 0.0;
    for i in 0..m {
        for j in 0..n {
            if flow[i][j] > FLOW_EPS {
                flows.push((i, j, flow[i][j]));
                total += flow[i][j] * cost[i][j];
            }
        }
    }
    Ok(TransportPlan { flows, cost: total })
}

/// d1 (l1 ground cost) between two finitely supported laws on R^d.
pub fn d1_finite_vectors(a: &[WeightedPoint], b: &[WeightedPoint]) -> Result<f64> {
    transport_plan(a, b).map(|p| p.cost)
}
