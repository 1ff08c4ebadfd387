//! Dense two-phase simplex with Bland's anti-cycling rule.
//!
//! Problems here have at most a few dozen variables, so a full tableau is the
//! simplest deterministic choice. All variables are nonnegative; finite upper
//! bounds are turned into extra `<=` rows. Every row is scaled to unit
//! max-coefficient before pivoting, since decoy constraints mix Poisson
//! weights spanning twenty orders of magnitude.

use crate::error::{Error, Result};

const PIVOT_EPS: f64 = 1e-12;
const COST_EPS: f64 = 1e-13;

/// Sense of a linear constraint.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Ge,
    Eq,
}

/// One constraint row `coef · x (relation) rhs`.
#[derive(Debug, Clone)]
pub struct Constraint {
    pub coef: Vec<f64>,
    pub relation: Relation,
    pub rhs: f64,
}

/// `minimize objective · x` subject to the rows, `0 <= x <= upper`.
#[derive(Debug, Clone)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub constraints: Vec<Constraint>,
    pub upper: Vec<Option<f64>>,
}

/// Optimal point and objective value.
#[derive(Debug, Clone)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub value: f64,
}

impl LinearProgram {
    pub fn new(n: usize) -> Self {
        LinearProgram { objective: vec![0.0; n], constraints: Vec::new(), upper: vec![None; n] }
    }

    pub fn n_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn push(&mut self, coef: Vec<f64>, relation: Relation, rhs: f64) {
        debug_assert_eq!(coef.len(), self.n_vars());
        self.constraints.push(Constraint { coef, relation, rhs });
    }

    /// Solve to optimality, or report infeasibility / unboundedness.
    pub fn solve(&self) -> Result<LpSolution> {
        let n = self.n_vars();
        let mut rows: Vec<Constraint> = self.constraints.clone();
        for (j, u) in self.upper.iter().enumerate() {
            if let Some(u) = u {
                let mut coef = vec![0.0; n];
                coef[j] = 1.0;
                rows.push(Constraint { coef, relation: Relation::Le, rhs: *u });
            }
        }
        for row in rows.iter_mut() {
            let scale = row.coef.iter().fold(0.0f64, |m, c| m.max(c.abs()));
            if scale > 0.0 {
                row.coef.iter_mut().for_each(|c| *c /= scale);
                row.rhs /= scale;
            }
            if row.rhs < 0.0 {
                row.coef.iter_mut().for_each(|c| *c = -*c);
                row.rhs = -row.rhs;
                row.relation = match row.relation {
                    Relation::Le => Relation::Ge,
                    Relation::Ge => Relation::Le,
                    Relation::Eq => Relation::Eq,
                };
            }
        }

        let m = rows.len();
        let n_slack = rows.iter().filter(|r| r.relation != Relation::Eq).count();
        let n_art = rows.iter().filter(|r| r.relation != Relation::Le).count();
        let width = n + n_slack + n_art;
        let mut t = Tableau::new(m, width);
        let mut slack = n;
        let mut art = n + n_slack;
        let art_start = art;
        for (i, row) in rows.iter().enumerate() {
            t.a[i][..n].copy_from_slice(&row.coef);
            t.a[i][width] = row.rhs;
            match row.relation {
                Relation::Le => {
                    t.a[i][slack] = 1.0;
                    t.basis[i] = slack;
                    slack += 1;
                }
                Relation::Ge => {
                    t.a[i][slack] = -1.0;
                    slack += 1;
                    t.a[i][art] = 1.0;
                    t.basis[i] = art;
                    art += 1;
                }
                Relation::Eq => {
                    t.a[i][art] = 1.0;
                    t.basis[i] = art;
                    art += 1;
                }
            }
        }

        // Phase 1: minimise the sum of artificials.
        let rhs_scale = rows.iter().fold(1.0f64, |s, r| s.max(r.rhs));
        if n_art > 0 {
            t.obj.iter_mut().for_each(|c| *c = 0.0);
            for j in art_start..width {
                t.obj[j] = 1.0;
            }
            for i in 0..m {
                if t.basis[i] >= art_start {
                    for j in 0..=width {
                        t.obj[j] -= t.a[i][j];
                    }
                }
            }
            t.run(|_| true)?;
            let infeas = -t.obj[width];
            if infeas > 1e-10 * rhs_scale {
                return Err(Error::Infeasible(format!("phase-1 residual {infeas:e}")));
            }
            // Drive remaining artificials out of the basis where possible.
            for i in 0..m {
                if t.basis[i] >= art_start {
                    if let Some(j) = (0..art_start).find(|&j| t.a[i][j].abs() > PIVOT_EPS) {
                        t.pivot(i, j);
                    }
                }
            }
        }

        // Phase 2.
        t.obj.iter_mut().for_each(|c| *c = 0.0);
        t.obj[..n].copy_from_slice(&self.objective);
        for i in 0..m {
            let cb = t.obj[t.basis[i]];
            if cb != 0.0 {
                for j in 0..=width {
                    t.obj[j] -= cb * t.a[i][j];
                }
            }
        }
        t.run(|j| j < art_start)?;

        let mut x = vec![0.0; n];
        for i in 0..m {
            if t.basis[i] < n {
                x[t.basis[i]] = t.a[i][width].max(0.0);
            }
        }
        let value = self.objective.iter().zip(&x).map(|(c, v)| c * v).sum();
        Ok(LpSolution { x, value })
    }
}

struct Tableau {
    a: Vec<Vec<f64>>,
    obj: Vec<f64>,
    basis: Vec<usize>,
    width: usize,
}

impl Tableau {
    fn new(m: usize, width: usize) -> Self {
        Tableau { a: vec![vec![0.0; width + 1]; m], obj: vec![0.0; width + 1], basis: vec![0; m], width }
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let p = self.a[r][c];
        self.a[r].iter_mut().for_each(|v| *v /= p);
        let pivot_row = self.a[r].clone();
        for (i, row) in self.a.iter_mut().enumerate() {
            if i != r {
                let f = row[c];
                if f != 0.0 {
                    for (v, pr) in row.iter_mut().zip(&pivot_row) {
                        *v -= f * pr;
                    }
                    row[c] = 0.0;
                }
            }
        }
        let f = self.obj[c];
        if f != 0.0 {
            for (v, pr) in self.obj.iter_mut().zip(&pivot_row) {
                *v -= f * pr;
            }
            self.obj[c] = 0.0;
        }
        self.basis[r] = c;
    }

    fn run(&mut self, allowed: impl Fn(usize) -> bool) -> Result<()> {
        let width = self.width;
        let cap = 50 * (self.a.len() + width) + 1000;
        for _ in 0..cap {
            let Some(c) = (0..width).find(|&j| allowed(j) && self.obj[j] < -COST_EPS) else {
                return Ok(());
            };
            let mut best: Option<(usize, f64)> = None;
            for (i, row) in self.a.iter().enumerate() {
                if row[c] > PIVOT_EPS {
                    let ratio = row[width] / row[c];
                    best = match best {
                        None => Some((i, ratio)),
                        Some((bi, br)) => {
                            if ratio < br - 1e-15 * br.abs().max(1e-300)
                                || (ratio <= br && self.basis[i] < self.basis[bi])
                            {
                                Some((i, ratio))
                            } else {
                                Some((bi, br))
                            }
                        }
                    };
                }
            }
            match best {
                Some((r, _)) => self.pivot(r, c),
                None => return Err(Error::Degenerate("linear program is unbounded".into())),
            }
        }
        Err(Error::Degenerate("simplex iteration cap reached".into()))
    }
}
