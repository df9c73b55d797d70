//! Equality-constrained QP with simple bounds, solved by a primal-dual
//! active-set iteration on the bounds:
//!
//! ```text
//! min 1/2 d'Hd + g'd   s.t.   A d = b,   lo <= d <= hi
//! ```
//!
//! Each iteration fixes the active variables at their bounds and solves the
//! KKT system of the remaining free variables.

use nalgebra::{DMatrix, DVector};

const MAX_ACTIVE_SET_ITERATIONS: usize = 40;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activity {
    Free,
    Lower,
    Upper,
}

#[derive(Debug, Clone)]
pub struct QpSolution {
    pub step: DVector<f64>,
    /// Equality multipliers, sign convention `grad f = A' lambda + mu`.
    pub multipliers: DVector<f64>,
    pub active: Vec<Activity>,
    pub iterations: usize,
    pub converged: bool,
}

pub struct BoundedQp<'a> {
    pub h: &'a DMatrix<f64>,
    pub g: &'a DVector<f64>,
    pub a: &'a DMatrix<f64>,
    pub b: &'a DVector<f64>,
    pub lo: &'a DVector<f64>,
    pub hi: &'a DVector<f64>,
}

impl BoundedQp<'_> {
    /// Returns `None` when a KKT system is singular even after regularization.
    pub fn solve(&self, warm: &[Activity]) -> Option<QpSolution> {
        let n = self.g.len();
        let mut active: Vec<Activity> = (0..n)
            .map(|i| match warm.get(i).copied().unwrap_or(Activity::Free) {
                Activity::Lower if self.lo[i].is_finite() => Activity::Lower,
                Activity::Upper if self.hi[i].is_finite() => Activity::Upper,
                _ => Activity::Free,
            })
            .collect();
        let scale: Vec<f64> = (0..n).map(|i| self.h[(i, i)].max(1.0)).collect();

        let mut last = None;
        for it in 0..MAX_ACTIVE_SET_ITERATIONS {
            let (step, multipliers) = self.solve_with(&active)?;
            let mu = self.h * &step + self.g - self.a.transpose() * &multipliers;
            let next: Vec<Activity> = (0..n)
                .map(|i| {
                    let m = if active[i] == Activity::Free { 0.0 } else { mu[i] };
                    if self.lo[i].is_finite() && m + scale[i] * (self.lo[i] - step[i]) > 0.0 {
                        Activity::Lower
                    } else if self.hi[i].is_finite() && m - scale[i] * (step[i] - self.hi[i]) < 0.0 {
                        Activity::Upper
                    } else {
                        Activity::Free
                    }
                })
                .collect();
            if next == active {
                return Some(QpSolution { step, multipliers, active, iterations: it + 1, converged: true });
            }
            last = Some((step, multipliers));
            active = next;
        }
        // No settled active set: keep the last iterate, projected onto the box.
        let (mut step, multipliers) = last?;
        for i in 0..n {
            step[i] = step[i].clamp(self.lo[i], self.hi[i]);
        }
        Some(QpSolution { step, multipliers, active, iterations: MAX_ACTIVE_SET_ITERATIONS, converged: false })
    }

    fn solve_with(&self, active: &[Activity]) -> Option<(DVector<f64>, DVector<f64>)> {
        let n = self.g.len();
        let m = self.b.len();
        let mut step = DVector::zeros(n);
        let mut free = Vec::with_capacity(n);
        for (i, act) in active.iter().enumerate() {
            match act {
                Activity::Free => free.push(i),
                Activity::Lower => step[i] = self.lo[i],
                Activity::Upper => step[i] = self.hi[i],
            }
        }
        let nf = free.len();
        let fixed_h = self.h * &step;
        let fixed_a = self.a * &step;

        let mut kkt = DMatrix::zeros(nf + m, nf + m);
        let mut rhs = DVector::zeros(nf + m);
        for (r, &i) in free.iter().enumerate() {
            for (c, &j) in free.iter().enumerate() {
                kkt[(r, c)] = self.h[(i, j)];
            }
            for k in 0..m {
                let v = self.a[(k, i)];
                kkt[(r, nf + k)] = v;
                kkt[(nf + k, r)] = v;
            }
            rhs[r] = -self.g[i] - fixed_h[i];
        }
        for k in 0..m {
            rhs[nf + k] = self.b[k] - fixed_a[k];
        }

        if nf + m == 0 {
            return Some((step, DVector::zeros(0)));
        }
        let mut sol = kkt.clone().lu().solve(&rhs);
        if sol.as_ref().is_none_or(|s| !s.iter().all(|v| v.is_finite())) {
            for k in 0..m {
                kkt[(nf + k, nf + k)] = -1e-10;
            }
            sol = kkt.lu().solve(&rhs);
        }
        let sol = sol.filter(|s| s.iter().all(|v| v.is_finite()))?;
        for (r, &i) in free.iter().enumerate() {
            step[i] = sol[r];
        }
        // K [d; y] = [-g; b] gives H d + A' y = -g, hence lambda = -y.
        let multipliers = DVector::from_iterator(m, (0..m).map(|k| -sol[nf + k]));
        Some((step, multipliers))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equality_only() {
        // min (d1-2)^2 + (d2-3)^2 s.t. d1 + d2 = 1
        let h = DMatrix::from_diagonal_element(2, 2, 2.0);
        let g = DVector::from_vec(vec![-4.0, -6.0]);
        let a = DMatrix::from_row_slice(1, 2, &[1.0, 1.0]);
        let b = DVector::from_vec(vec![1.0]);
        let lo = DVector::from_element(2, f64::NEG_INFINITY);
        let hi = DVector::from_element(2, f64::INFINITY);
        let qp = BoundedQp { h: &h, g: &g, a: &a, b: &b, lo: &lo, hi: &hi };
        let sol = qp.solve(&[]).unwrap();
        assert!((sol.step[0]).abs() < 1e-12 && (sol.step[1] - 1.0).abs() < 1e-12);
        // grad f at optimum = (-4, -4) = A' lambda
        assert!((sol.multipliers[0] + 4.0).abs() < 1e-12);
    }

    #[test]
    fn active_bounds_with_coupling() {
        // min |d - (3, -3, 0.5)|^2 s.t. d0 + d1 + d2 = 0.5, d in [-1, 1]^3
        let h = DMatrix::from_diagonal_element(3, 3, 2.0);
        let g = DVector::from_vec(vec![-6.0, 6.0, -1.0]);
        let a = DMatrix::from_row_slice(1, 3, &[1.0, 1.0, 1.0]);
        let b = DVector::from_vec(vec![0.5]);
        let lo = DVector::from_element(3, -1.0);
        let hi = DVector::from_element(3, 1.0);
        let qp = BoundedQp { h: &h, g: &g, a: &a, b: &b, lo: &lo, hi: &hi };
        let sol = qp.solve(&[]).unwrap();
        assert!(sol.converged);
        assert_eq!(sol.active, vec![Activity::Upper, Activity::Lower, Activity::Free]);
        assert!((sol.step[2] - 0.5).abs() < 1e-12);
    }
}
