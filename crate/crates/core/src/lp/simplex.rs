//! Dense two-phase tableau simplex for `min c.x  s.t.  A x = b, x >= 0, b >= 0`.
//!
//! Pricing is Dantzig's rule, falling back to Bland's rule after a run of
//! degenerate pivots so cycling cannot occur.

pub(crate) struct StandardLp {
    pub rows: usize,
    pub cols: usize,
    /// Row-major `rows x cols`.
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
}

#[derive(Debug)]
pub(crate) struct SimplexResult {
    pub x: Vec<f64>,
    pub objective: f64,
    /// One multiplier per row: `c_j - y.A_j >= 0` for every column at optimum.
    pub duals: Vec<f64>,
    pub pivots: usize,
}

#[derive(Debug)]
pub(crate) enum SimplexError {
    Infeasible { residual: f64 },
    Unbounded { column: usize },
    IterationLimit { pivots: usize },
}

const PIVOT_EPS: f64 = 1e-11;
const DEGENERATE_STREAK: usize = 50;

struct Tableau {
    m: usize,
    /// Original columns followed by one artificial per row.
    width: usize,
    n: usize,
    /// `(m + 2) x (width + 1)`; row `m` holds phase-2 reduced costs, row
    /// `m + 1` phase-1 reduced costs; the last column is the right-hand side.
    t: Vec<f64>,
    basis: Vec<usize>,
    pivots: usize,
}

impl Tableau {
    fn stride(&self) -> usize {
        self.width + 1
    }

    fn at(&self, r: usize, c: usize) -> f64 {
        self.t[r * self.stride() + c]
    }

    fn rhs(&self, r: usize) -> f64 {
        self.at(r, self.width)
    }

    fn pivot(&mut self, r: usize, s: usize) {
        let stride = self.stride();
        let p = self.at(r, s);
        let (before, rest) = self.t.split_at_mut(r * stride);
        let (row, after) = rest.split_at_mut(stride);
        for v in row.iter_mut() {
            *v /= p;
        }
        row[s] = 1.0;
        for other in before.chunks_exact_mut(stride).chain(after.chunks_exact_mut(stride)) {
            let f = other[s];
            if f != 0.0 {
                for (o, v) in other.iter_mut().zip(row.iter()) {
                    *o -= f * v;
                }
                other[s] = 0.0;
            }
        }
        self.basis[r] = s;
        self.pivots += 1;
    }

    /// Runs the simplex on cost row `cost` over columns `< allowed`.
    fn optimize(&mut self, cost: usize, allowed: usize, tol: f64, limit: usize) -> Result<(), SimplexError> {
        let mut degenerate = 0;
        loop {
            if self.pivots >= limit {
                return Err(SimplexError::IterationLimit { pivots: self.pivots });
            }
            let bland = degenerate >= DEGENERATE_STREAK;
            let mut entering = None;
            let mut most_negative = -tol;
            for j in 0..allowed {
                let r = self.at(cost, j);
                if r < most_negative {
                    entering = Some(j);
                    if bland {
                        break;
                    }
                    most_negative = r;
                }
            }
            let Some(s) = entering else { return Ok(()) };

            let mut leaving: Option<(usize, f64)> = None;
            for i in 0..self.m {
                let a = self.at(i, s);
                if a > PIVOT_EPS {
                    let ratio = self.rhs(i).max(0.0) / a;
                    let better = match leaving {
                        None => true,
                        Some((l, best)) => {
                            ratio < best - 1e-14 || (ratio <= best + 1e-14 && self.basis[i] < self.basis[l])
                        }
                    };
                    if better {
                        leaving = Some((i, ratio));
                    }
                }
            }
            let Some((r, ratio)) = leaving else { return Err(SimplexError::Unbounded { column: s }) };
            if ratio <= 1e-14 {
                degenerate += 1;
            } else {
                degenerate = 0;
            }
            self.pivot(r, s);
        }
    }
}

pub(crate) fn solve(lp: &StandardLp, tol: f64) -> Result<SimplexResult, SimplexError> {
    let (m, n) = (lp.rows, lp.cols);
    let width = n + m;
    let stride = width + 1;
    let mut t = vec![0.0; (m + 2) * stride];
    for i in 0..m {
        let row = &mut t[i * stride..(i + 1) * stride];
        row[..n].copy_from_slice(&lp.a[i * n..(i + 1) * n]);
        row[n + i] = 1.0;
        row[width] = lp.b[i];
    }
    t[m * stride..m * stride + n].copy_from_slice(&lp.c);
    for i in 0..m {
        for j in 0..n {
            t[(m + 1) * stride + j] -= lp.a[i * n + j];
        }
        t[(m + 1) * stride + width] -= lp.b[i];
    }
    let mut tab = Tableau { m, width, n, t, basis: (n..n + m).collect(), pivots: 0 };
    let limit = 50 * (m + width) + 1000;

    tab.optimize(m + 1, n, tol, limit)?;
    let residual = -tab.rhs(m + 1);
    let scale = lp.b.iter().map(|v| v.abs()).sum::<f64>().max(1.0);
    if residual > tol * scale {
        return Err(SimplexError::Infeasible { residual });
    }
    // drive zero-level artificials out where the row is not redundant
    for i in 0..m {
        if tab.basis[i] >= n {
            if let Some(j) = (0..n).find(|&j| tab.at(i, j).abs() > 1e-9) {
                tab.pivot(i, j);
            }
        }
    }
    tab.optimize(m, n, tol, limit)?;

    let mut x = vec![0.0; n];
    for (i, &var) in tab.basis.iter().enumerate() {
        if var < n {
            x[var] = tab.rhs(i);
        }
    }
    let objective = lp.c.iter().zip(&x).map(|(c, x)| c * x).sum();
    let duals = (0..m).map(|i| -tab.at(m, tab.n + i)).collect();
    Ok(SimplexResult { x, objective, duals, pivots: tab.pivots })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_textbook_problem() {
        // min -x - y  s.t. x + 2y + s1 = 4, 3x + y + s2 = 6
        let lp = StandardLp {
            rows: 2,
            cols: 4,
            a: vec![1.0, 2.0, 1.0, 0.0, 3.0, 1.0, 0.0, 1.0],
            b: vec![4.0, 6.0],
            c: vec![-1.0, -1.0, 0.0, 0.0],
        };
        let r = solve(&lp, 1e-10).unwrap();
        assert!((r.x[0] - 1.6).abs() < 1e-9 && (r.x[1] - 1.2).abs() < 1e-9);
        assert!((r.objective + 2.8).abs() < 1e-9);
        let dual_obj: f64 = r.duals.iter().zip(&lp.b).map(|(y, b)| y * b).sum();
        assert!((dual_obj - r.objective).abs() < 1e-9);
    }

    #[test]
    fn infeasible_and_unbounded() {
        // x = 1 and x = 2
        let lp = StandardLp { rows: 2, cols: 1, a: vec![1.0, 1.0], b: vec![1.0, 2.0], c: vec![0.0] };
        assert!(matches!(solve(&lp, 1e-10), Err(SimplexError::Infeasible { .. })));
        // min -x  s.t. x - y = 0
        let lp = StandardLp { rows: 1, cols: 2, a: vec![1.0, -1.0], b: vec![0.0], c: vec![-1.0, 0.0] };
        assert!(matches!(solve(&lp, 1e-10), Err(SimplexError::Unbounded { .. })));
    }

    #[test]
    fn redundant_rows_are_tolerated() {
        // x + y = 2 twice, min x
        let lp = StandardLp { rows: 2, cols: 2, a: vec![1.0, 1.0, 1.0, 1.0], b: vec![2.0, 2.0], c: vec![1.0, 0.0] };
        let r = solve(&lp, 1e-10).unwrap();
        assert!(r.objective.abs() < 1e-12);
        assert!((r.x[1] - 2.0).abs() < 1e-12);
    }
}
