//! Welfare metrics over final balances.

use thiserror::Error;

/// Largest instance the exhaustive equality check will take on.
pub const MAX_CHECK_TOTAL: u64 = 10_000;
pub const MAX_CHECK_HOSTS: usize = 6;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricsError {
    #[error("equality check limited to total <= {MAX_CHECK_TOTAL} and hosts <= {MAX_CHECK_HOSTS} (got {0}, {1})")]
    ScaleExceeded(u64, usize),
    #[error("need at least one host")]
    NoHosts,
}

/// `sum(ln(1 + h))`.
pub fn log_utility(balances: &[u64]) -> f64 {
    balances.iter().fold(0.0, |acc, &h| acc + (h as f64).ln_1p())
}

/// Most even integer split of `total` across `hosts`.
pub fn equal_split(total: u64, hosts: usize) -> Vec<u64> {
    if hosts == 0 {
        return Vec::new();
    }
    let n = hosts as u64;
    let (q, r) = (total / n, total % n);
    (0..n).map(|i| if i < r { q + 1 } else { q }).collect()
}

pub fn format4(x: f64) -> String {
    // Adding zero turns -0.0 into 0.0.
    format!("{:.4}", x + 0.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EqualityCheck {
    pub total: u64,
    pub hosts: usize,
    /// Best utility found by exhaustive search over integer allocations.
    pub best: f64,
    pub best_allocation: Vec<u64>,
    pub equal_split: f64,
}

impl EqualityCheck {
    pub fn holds(&self) -> bool {
        (self.best - self.equal_split).abs() <= 1e-9 * self.best.abs().max(1.0)
    }
}

/// Maximises `sum(ln(1 + h_i))` subject to `sum(h_i) = total` by dynamic
/// programming over every integer allocation, and compares the optimum with
/// the even split.
pub fn equality_check(total: u64, hosts: usize) -> Result<EqualityCheck, MetricsError> {
    if hosts == 0 {
        return Err(MetricsError::NoHosts);
    }
    if total > MAX_CHECK_TOTAL || hosts > MAX_CHECK_HOSTS {
        return Err(MetricsError::ScaleExceeded(total, hosts));
    }
    let t = total as usize;
    let gain: Vec<f64> = (0..=t).map(|h| (h as f64).ln_1p()).collect();
    // best[k][s]: optimum for the first k+1 hosts holding s in total.
    let mut best = vec![gain.clone()];
    let mut choice: Vec<Vec<usize>> = vec![(0..=t).collect()];
    for k in 1..hosts {
        let prev = &best[k - 1];
        let mut row = vec![f64::NEG_INFINITY; t + 1];
        let mut pick = vec![0usize; t + 1];
        for s in 0..=t {
            for h in 0..=s {
                let v = prev[s - h] + gain[h];
                if v > row[s] {
                    row[s] = v;
                    pick[s] = h;
                }
            }
        }
        best.push(row);
        choice.push(pick);
    }
    let mut allocation = vec![0u64; hosts];
    let mut left = t;
    for k in (0..hosts).rev() {
        let h = choice[k][left];
        allocation[k] = h as u64;
        left -= h;
    }
    Ok(EqualityCheck {
        total,
        hosts,
        best: best[hosts - 1][t],
        best_allocation: allocation,
        equal_split: log_utility(&equal_split(total, hosts)),
    })
}
