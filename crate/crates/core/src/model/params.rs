use serde::{Deserialize, Serialize};

use crate::error::{structure, Result};

/// Emission, chain and duration parameters of an `M`-state model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Emission means, strictly increasing in state order.
    pub mu: Vec<f64>,
    pub sigma2: Vec<f64>,
    /// Initial-state distribution per session.
    pub rho: Vec<Vec<f64>>,
    /// Transition matrix with a structural zero diagonal.
    pub p: Vec<Vec<f64>>,
    /// Duration coefficients, one row per state.
    pub b: Vec<Vec<f64>>,
}

const SIMPLEX_TOL: f64 = 1e-9;

impl ModelParams {
    pub fn n_states(&self) -> usize {
        self.mu.len()
    }

    pub fn n_coefficients(&self) -> usize {
        self.b.first().map_or(0, Vec::len)
    }

    /// Uniform initial distributions and uniform off-diagonal transitions.
    pub fn uniform_chain(m: usize, n_sessions: usize) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let rho = vec![vec![1.0 / m as f64; m]; n_sessions];
        let p = (0..m)
            .map(|j| {
                (0..m)
                    .map(|k| if j == k || m == 1 { 0.0 } else { 1.0 / (m - 1) as f64 })
                    .collect()
            })
            .collect();
        (rho, p)
    }

    /// Checks shapes, positivity, simplex constraints and the mean ordering.
    pub fn validate(&self, n_sessions: usize, n_coefficients: usize) -> Result<()> {
        self.validate_shapes(n_sessions, n_coefficients)?;
        if self.mu.windows(2).any(|w| w[0] >= w[1]) {
            return Err(structure("emission means must be strictly increasing"));
        }
        Ok(())
    }

    /// Like [`validate`](Self::validate) without the ordering constraint.
    pub fn validate_shapes(&self, n_sessions: usize, n_coefficients: usize) -> Result<()> {
        let m = self.n_states();
        if m == 0 {
            return Err(structure("model needs at least one state"));
        }
        if self.sigma2.len() != m || self.p.len() != m || self.b.len() != m {
            return Err(structure("mu, sigma2, P and B must all have one entry per state"));
        }
        if self.sigma2.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(structure("emission variances must be positive"));
        }
        if self.mu.iter().any(|v| !v.is_finite()) {
            return Err(structure("emission means must be finite"));
        }
        if self.rho.len() != n_sessions {
            return Err(structure(format!("expected {n_sessions} initial distributions, got {}", self.rho.len())));
        }
        for r in &self.rho {
            check_simplex(r, m, "initial distribution")?;
        }
        for (j, row) in self.p.iter().enumerate() {
            if row.len() != m {
                return Err(structure(format!("transition row {j} has the wrong length")));
            }
            if row[j] != 0.0 {
                return Err(structure(format!("transition diagonal entry ({j},{j}) must be 0")));
            }
            if m > 1 {
                check_simplex(row, m, "transition row")?;
            }
        }
        if self.b.iter().any(|row| row.len() != n_coefficients || row.iter().any(|v| !v.is_finite())) {
            return Err(structure(format!("each coefficient row must hold {n_coefficients} finite values")));
        }
        Ok(())
    }

    /// Permutes state labels: old state `order[i]` becomes state `i`.
    pub fn permute(&mut self, order: &[usize]) {
        let pick = |v: &Vec<f64>| order.iter().map(|&o| v[o]).collect::<Vec<_>>();
        self.mu = pick(&self.mu);
        self.sigma2 = pick(&self.sigma2);
        self.b = order.iter().map(|&o| self.b[o].clone()).collect();
        self.rho = self.rho.iter().map(pick).collect();
        self.p = order.iter().map(|&o| order.iter().map(|&k| self.p[o][k]).collect()).collect();
    }

    /// Permutation sorting states by increasing mean, or `None` if already sorted.
    pub fn ordering_permutation(&self) -> Option<Vec<usize>> {
        if self.mu.windows(2).all(|w| w[0] < w[1]) {
            return None;
        }
        let mut order: Vec<usize> = (0..self.n_states()).collect();
        order.sort_by(|&a, &b| self.mu[a].total_cmp(&self.mu[b]));
        Some(order)
    }
}

fn check_simplex(v: &[f64], m: usize, what: &str) -> Result<()> {
    if v.len() != m {
        return Err(structure(format!("{what} has length {} instead of {m}", v.len())));
    }
    if v.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
        return Err(structure(format!("{what} has a negative or non-finite entry")));
    }
    let sum: f64 = v.iter().sum();
    if (sum - 1.0).abs() > SIMPLEX_TOL {
        return Err(structure(format!("{what} sums to {sum}, not 1")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn three_state() -> ModelParams {
        let (rho, p) = ModelParams::uniform_chain(3, 2);
        ModelParams {
            mu: vec![1.0, 2.0, 3.0],
            sigma2: vec![1.0, 1.0, 1.0],
            rho,
            p,
            b: vec![vec![0.0; 2]; 3],
        }
    }

    #[test]
    fn uniform_chain_is_valid() {
        three_state().validate(2, 2).unwrap();
    }

    #[test]
    fn rejects_self_transition_and_unordered_means() {
        let mut p = three_state();
        p.p[0] = vec![0.5, 0.5, 0.0];
        assert!(p.validate(2, 2).is_err());
        let mut q = three_state();
        q.mu = vec![2.0, 1.0, 3.0];
        assert!(q.validate(2, 2).is_err());
        q.validate_shapes(2, 2).unwrap();
    }

    #[test]
    fn permutation_moves_rows_and_columns_together() {
        let mut p = three_state();
        p.mu = vec![3.0, 1.0, 2.0];
        p.p = vec![vec![0.0, 0.2, 0.8], vec![0.6, 0.0, 0.4], vec![0.1, 0.9, 0.0]];
        let order = p.ordering_permutation().unwrap();
        assert_eq!(order, vec![1, 2, 0]);
        p.permute(&order);
        assert_eq!(p.mu, vec![1.0, 2.0, 3.0]);
        // new state 0 is old 1: its row (0.6, 0, 0.4) reordered to old columns (1, 2, 0)
        assert_eq!(p.p[0], vec![0.0, 0.4, 0.6]);
        assert!(p.p.iter().enumerate().all(|(j, r)| r[j] == 0.0));
    }
}
