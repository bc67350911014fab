//! Dense two-phase simplex for small linear programs.
//!
//! Solves `maximize cᵀx subject to A x ≤ b, x ≥ 0` with Bland's rule, which
//! cannot cycle. The region certifier feeds it at most a few dozen rows over
//! four or five columns.

const PIVOT_EPS: f64 = 1e-11;
const FEAS_EPS: f64 = 1e-9;
const MAX_PIVOTS: usize = 50_000;

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    Optimal { x: Vec<f64>, value: f64 },
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LpFailure(pub String);

struct Tableau {
    rows: Vec<Vec<f64>>,
    obj: Vec<f64>,
    basis: Vec<usize>,
    ncols: usize,
}

impl Tableau {
    fn rhs(&self) -> usize {
        self.ncols
    }

    fn pivot(&mut self, r: usize, col: usize) {
        let p = self.rows[r][col];
        self.rows[r].iter_mut().for_each(|v| *v /= p);
        let pivot_row = self.rows[r].clone();
        for (i, row) in self.rows.iter_mut().enumerate() {
            if i != r {
                let f = row[col];
                if f != 0.0 {
                    row.iter_mut().zip(&pivot_row).for_each(|(v, p)| *v -= f * p);
                }
            }
        }
        let f = self.obj[col];
        if f != 0.0 {
            self.obj.iter_mut().zip(&pivot_row).for_each(|(v, p)| *v -= f * p);
        }
        self.basis[r] = col;
    }

    fn set_objective(&mut self, costs: &[f64]) {
        self.obj = costs.to_vec();
        self.obj.push(0.0);
        for i in 0..self.rows.len() {
            let f = self.obj[self.basis[i]];
            if f != 0.0 {
                let row = &self.rows[i];
                self.obj.iter_mut().zip(row).for_each(|(v, p)| *v -= f * p);
            }
        }
    }

    /// Runs simplex iterations over columns `< allowed`. Returns false if
    /// the objective is unbounded.
    fn optimize(&mut self, allowed: usize) -> Result<bool, LpFailure> {
        for _ in 0..MAX_PIVOTS {
            let Some(col) = (0..allowed).find(|&j| self.obj[j] > PIVOT_EPS) else {
                return Ok(true);
            };
            let rhs = self.rhs();
            let mut leave: Option<(usize, f64)> = None;
            for (i, row) in self.rows.iter().enumerate() {
                if row[col] > PIVOT_EPS {
                    let ratio = row[rhs] / row[col];
                    leave = match leave {
                        None => Some((i, ratio)),
                        Some((k, best)) => {
                            if ratio < best - 1e-15 || (ratio <= best + 1e-15 && self.basis[i] < self.basis[k]) {
                                Some((i, ratio))
                            } else {
                                Some((k, best))
                            }
                        }
                    };
                }
            }
            match leave {
                None => return Ok(false),
                Some((r, _)) => self.pivot(r, col),
            }
        }
        Err(LpFailure(format!("simplex exceeded {MAX_PIVOTS} pivots")))
    }

    fn value(&self) -> f64 {
        -self.obj[self.rhs()]
    }
}

/// `maximize cᵀx` s.t. `a x ≤ b`, `x ≥ 0`.
pub fn maximize(c: &[f64], a: &[Vec<f64>], b: &[f64]) -> Result<LpOutcome, LpFailure> {
    let n = c.len();
    let m = b.len();
    if a.len() != m || a.iter().any(|r| r.len() != n) {
        return Err(LpFailure("constraint matrix shape mismatch".into()));
    }
    if a.iter().flatten().chain(b).chain(c).any(|v| !v.is_finite()) {
        return Err(LpFailure("non-finite LP coefficient".into()));
    }
    let negative: Vec<usize> = (0..m).filter(|&i| b[i] < 0.0).collect();
    let n_art = negative.len();
    // columns: x (n) | slack (m) | artificial (n_art) | rhs
    let ncols = n + m + n_art;
    let mut rows = Vec::with_capacity(m);
    let mut basis = Vec::with_capacity(m);
    let mut art = 0;
    for i in 0..m {
        let mut row = vec![0.0; ncols + 1];
        let sign = if b[i] < 0.0 { -1.0 } else { 1.0 };
        for (j, v) in a[i].iter().enumerate() {
            row[j] = sign * v;
        }
        row[n + i] = sign;
        row[ncols] = sign * b[i];
        if sign < 0.0 {
            row[n + m + art] = 1.0;
            basis.push(n + m + art);
            art += 1;
        } else {
            basis.push(n + i);
        }
        rows.push(row);
    }
    let mut t = Tableau {
        rows,
        obj: Vec::new(),
        basis,
        ncols,
    };

    if n_art > 0 {
        let mut phase1 = vec![0.0; ncols];
        phase1[n + m..].iter_mut().for_each(|v| *v = -1.0);
        t.set_objective(&phase1);
        t.optimize(ncols)?;
        if t.value() < -FEAS_EPS {
            return Ok(LpOutcome::Infeasible);
        }
        // Drive remaining artificials out of the basis, or drop their rows.
        let mut i = 0;
        while i < t.rows.len() {
            if t.basis[i] >= n + m {
                match (0..n + m).find(|&j| t.rows[i][j].abs() > PIVOT_EPS) {
                    Some(j) => {
                        t.pivot(i, j);
                        i += 1;
                    }
                    None => {
                        t.rows.remove(i);
                        t.basis.remove(i);
                    }
                }
            } else {
                i += 1;
            }
        }
        for row in &mut t.rows {
            row[n + m..ncols].iter_mut().for_each(|v| *v = 0.0);
        }
    }

    let mut costs = vec![0.0; ncols];
    costs[..n].copy_from_slice(c);
    t.set_objective(&costs);
    if !t.optimize(n + m)? {
        return Ok(LpOutcome::Unbounded);
    }
    let mut x = vec![0.0; n];
    for (i, &bv) in t.basis.iter().enumerate() {
        if bv < n {
            x[bv] = t.rows[i][ncols];
        }
    }
    let value = x.iter().zip(c).map(|(a, b)| a * b).sum();
    Ok(LpOutcome::Optimal { x, value })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn optimal(out: LpOutcome) -> (Vec<f64>, f64) {
        match out {
            LpOutcome::Optimal { x, value } => (x, value),
            other => panic!("expected optimum, got {other:?}"),
        }
    }

    #[test]
    fn textbook_problem() {
        // max 3x + 5y s.t. x ≤ 4, 2y ≤ 12, 3x + 2y ≤ 18 → (2, 6), 36
        let (x, v) = optimal(
            maximize(
                &[3.0, 5.0],
                &[vec![1.0, 0.0], vec![0.0, 2.0], vec![3.0, 2.0]],
                &[4.0, 12.0, 18.0],
            )
            .unwrap(),
        );
        assert!((v - 36.0).abs() < 1e-9);
        assert!((x[0] - 2.0).abs() < 1e-9 && (x[1] - 6.0).abs() < 1e-9);
    }

    #[test]
    fn needs_phase_one() {
        // max -x s.t. x ≥ 2 (as -x ≤ -2), x ≤ 5
        let (x, v) = optimal(maximize(&[-1.0], &[vec![-1.0], vec![1.0]], &[-2.0, 5.0]).unwrap());
        assert!((x[0] - 2.0).abs() < 1e-9 && (v + 2.0).abs() < 1e-9);
    }

    #[test]
    fn infeasible_and_unbounded() {
        assert_eq!(
            maximize(&[1.0], &[vec![1.0], vec![-1.0]], &[1.0, -2.0]).unwrap(),
            LpOutcome::Infeasible
        );
        assert_eq!(
            maximize(&[1.0, 0.0], &[vec![-1.0, 1.0]], &[1.0]).unwrap(),
            LpOutcome::Unbounded
        );
    }

    #[test]
    fn degenerate_redundant_rows() {
        // x + y = 1 written as two inequalities, plus a duplicate.
        let (_, v) = optimal(
            maximize(
                &[1.0, 2.0],
                &[vec![1.0, 1.0], vec![-1.0, -1.0], vec![-1.0, -1.0]],
                &[1.0, -1.0, -1.0],
            )
            .unwrap(),
        );
        assert!((v - 2.0).abs() < 1e-9);
    }

    #[test]
    fn rejects_nan() {
        assert!(maximize(&[f64::NAN], &[vec![1.0]], &[1.0]).is_err());
    }
}
