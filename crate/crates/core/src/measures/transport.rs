//! Balanced transport between two discrete mass vectors by successive
//! shortest paths with node potentials, on a dense cost matrix.

use crate::error::{Error, Result};

const MASS_EPS: f64 = 1e-15;

pub(crate) struct Plan {
    pub cost: f64,
    /// `(source, sink, flow)` for every positive entry.
    pub flows: Vec<(usize, usize, f64)>,
}

/// `cost[i][j]` from source `i` to sink `j`; total supply and demand must
/// agree (the smaller side is scaled up to absorb rounding).
pub(crate) fn solve(supply: &[f64], demand: &[f64], cost: &[Vec<f64>]) -> Result<Plan> {
    let (n1, n2) = (supply.len(), demand.len());
    let s_tot: f64 = supply.iter().sum();
    let d_tot: f64 = demand.iter().sum();
    if (s_tot - d_tot).abs() > 1e-9 * s_tot.max(d_tot).max(1e-300) {
        return Err(Error::domain(format!("unbalanced transport: {s_tot} vs {d_tot}")));
    }
    let mut sup = supply.to_vec();
    let mut dem: Vec<f64> = demand.iter().map(|d| d * s_tot / d_tot).collect();
    let mut flow = vec![vec![0.0; n2]; n1];
    // potentials: sources then sinks
    let mut pot = vec![0.0; n1 + n2];
    for j in 0..n2 {
        pot[n1 + j] = (0..n1).map(|i| cost[i][j]).fold(f64::INFINITY, f64::min);
    }

    let total_nodes = n1 + n2;
    let mut dist = vec![f64::INFINITY; total_nodes];
    let mut prev = vec![usize::MAX; total_nodes];
    let mut done = vec![false; total_nodes];
    let max_rounds = 10 * (n1 + n2) * (n1 + n2).max(1) + 10;
    for _ in 0..max_rounds {
        if sup.iter().all(|&s| s <= MASS_EPS * s_tot) {
            break;
        }
        dist.iter_mut().for_each(|d| *d = f64::INFINITY);
        prev.iter_mut().for_each(|p| *p = usize::MAX);
        done.iter_mut().for_each(|d| *d = false);
        for i in 0..n1 {
            if sup[i] > MASS_EPS * s_tot {
                dist[i] = 0.0;
            }
        }
        let mut target = None;
        loop {
            let mut u = usize::MAX;
            let mut best = f64::INFINITY;
            for v in 0..total_nodes {
                if !done[v] && dist[v] < best {
                    best = dist[v];
                    u = v;
                }
            }
            if u == usize::MAX {
                break;
            }
            done[u] = true;
            if u >= n1 && dem[u - n1] > MASS_EPS * s_tot {
                target = Some(u);
                break;
            }
            if u < n1 {
                for j in 0..n2 {
                    let v = n1 + j;
                    if done[v] {
                        continue;
                    }
                    let rc = (cost[u][j] + pot[u] - pot[v]).max(0.0);
                    if dist[u] + rc < dist[v] {
                        dist[v] = dist[u] + rc;
                        prev[v] = u;
                    }
                }
            } else {
                let j = u - n1;
                for i in 0..n1 {
                    if done[i] || flow[i][j] <= 0.0 {
                        continue;
                    }
                    let rc = (-cost[i][j] + pot[u] - pot[i]).max(0.0);
                    if dist[u] + rc < dist[i] {
                        dist[i] = dist[u] + rc;
                        prev[i] = u;
                    }
                }
            }
        }
        let Some(t) = target else {
            return Err(Error::Numeric("transport: no augmenting path".into()));
        };
        let dt = dist[t];
        for v in 0..total_nodes {
            pot[v] += dist[v].min(dt);
        }
        // bottleneck along the path
        let mut amount = dem[t - n1];
        let mut v = t;
        let mut start = t;
        while prev[v] != usize::MAX {
            let u = prev[v];
            if u >= n1 {
                amount = amount.min(flow[v][u - n1]);
            }
            start = u;
            v = u;
        }
        amount = amount.min(sup[start]);
        let mut v = t;
        while prev[v] != usize::MAX {
            let u = prev[v];
            if u < n1 {
                flow[u][v - n1] += amount;
            } else {
                flow[v][u - n1] -= amount;
                if flow[v][u - n1] < MASS_EPS * s_tot {
                    flow[v][u - n1] = 0.0;
                }
            }
            v = u;
        }
        sup[start] -= amount;
        dem[t - n1] -= amount;
    }
    let mut flows = Vec::new();
    let mut total = 0.0;
    for i in 0..n1 {
        for j in 0..n2 {
            if flow[i][j] > 0.0 {
                flows.push((i, j, flow[i][j]));
                total += flow[i][j] * cost[i][j];
            }
        }
    }
    Ok(Plan { cost: total, flows })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_assignment() {
        // optimal: 0→1, 1→0 with cost 1 + 1
        let cost = vec![vec![5.0, 1.0], vec![1.0, 5.0]];
        let p = solve(&[1.0, 1.0], &[1.0, 1.0], &cost).unwrap();
        assert!((p.cost - 2.0).abs() < 1e-12);
    }

    #[test]
    fn split_masses() {
        let cost = vec![vec![1.0, 2.0, 3.0], vec![3.0, 1.0, 1.0]];
        let p = solve(&[0.6, 0.4], &[0.3, 0.3, 0.4], &cost).unwrap();
        // source 0 feeds sink 0 (0.3) and sink 1 (0.3); source 1 feeds sink 2
        assert!((p.cost - (0.3 + 0.6 + 0.4)).abs() < 1e-12, "{}", p.cost);
    }
}
