//! Dense two-phase simplex over exact rationals with Bland's rule.
//!
//! Solves `min c'x  s.t.  Ax = b, x >= 0` for the small systems produced by
//! the static planning problem. Pivots are exact, so reduced costs that are
//! zero at the optimum are detected without a tolerance.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

pub type Rational = BigRational;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LpStatus {
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone)]
pub struct LpOptimum {
    pub x: Vec<Rational>,
    pub objective: Rational,
    /// Basic variable of each remaining constraint row.
    pub basis: Vec<usize>,
    /// Reduced costs of every structural column (zero on basic columns).
    pub reduced_costs: Vec<Rational>,
}

impl LpOptimum {
    /// Nonbasic columns whose reduced cost vanishes at the optimum.
    pub fn zero_reduced_cost_columns(&self) -> Vec<usize> {
        (0..self.x.len())
            .filter(|j| !self.basis.contains(j) && self.reduced_costs[*j].is_zero())
            .collect()
    }

    pub fn x_f64(&self) -> Vec<f64> {
        self.x.iter().map(to_f64).collect()
    }
}

pub fn rational(x: f64) -> Rational {
    BigRational::from_float(x).expect("finite LP coefficient")
}

pub fn to_f64(x: &Rational) -> f64 {
    x.to_f64().unwrap_or_else(|| {
        // numerator or denominator too large for a direct conversion
        let scale: BigInt = BigInt::from(1u64) << 200usize;
        let scaled = (x * BigRational::from_integer(scale.clone())).round().to_integer();
        scaled.to_f64().unwrap_or(f64::NAN) / scale.to_f64().unwrap_or(f64::NAN)
    })
}

struct Tableau {
    /// rows x (cols + 1); last column is the right-hand side.
    a: Vec<Vec<Rational>>,
    basis: Vec<usize>,
    cols: usize,
}

impl Tableau {
    fn rhs(&self, i: usize) -> &Rational {
        &self.a[i][self.cols]
    }

    fn pivot(&mut self, row: usize, col: usize) {
        let p = self.a[row][col].clone();
        for v in self.a[row].iter_mut() {
            *v = &*v / &p;
        }
        let pivot_row = self.a[row].clone();
        for (i, r) in self.a.iter_mut().enumerate() {
            if i == row || r[col].is_zero() {
                continue;
            }
            let factor = r[col].clone();
            for (v, pv) in r.iter_mut().zip(&pivot_row) {
                if !pv.is_zero() {
                    *v = &*v - &factor * pv;
                }
            }
        }
        self.basis[row] = col;
    }

    /// Reduced costs `c_j - c_B' B^{-1} A_j` for the first `cols` columns.
    fn reduced_costs(&self, cost: &[Rational]) -> Vec<Rational> {
        (0..self.cols)
            .map(|j| {
                let mut d = cost[j].clone();
                for (i, &bj) in self.basis.iter().enumerate() {
                    if !self.a[i][j].is_zero() && !cost[bj].is_zero() {
                        d -= &cost[bj] * &self.a[i][j];
                    }
                }
                d
            })
            .collect()
    }

    /// Runs Bland-rule simplex on columns `< allowed` until optimal.
    fn optimize(&mut self, cost: &[Rational], allowed: usize) -> Result<(), LpStatus> {
        loop {
            let d = self.reduced_costs(cost);
            let entering = (0..allowed).find(|&j| !self.basis.contains(&j) && d[j].is_negative());
            let Some(col) = entering else {
                return Ok(());
            };
            let mut best: Option<(usize, Rational)> = None;
            for i in 0..self.a.len() {
                let coef = &self.a[i][col];
                if coef.is_positive() {
                    let ratio = self.rhs(i) / coef;
                    let better = match &best {
                        None => true,
                        Some((bi, br)) => ratio < *br || (ratio == *br && self.basis[i] < self.basis[*bi]),
                    };
                    if better {
                        best = Some((i, ratio));
                    }
                }
            }
            match best {
                Some((row, _)) => self.pivot(row, col),
                None => return Err(LpStatus::Unbounded),
            }
        }
    }
}

/// Solves `min cost'x` subject to `a x = b`, `x >= 0`.
pub fn solve(a: &[Vec<Rational>], b: &[Rational], cost: &[Rational]) -> Result<LpOptimum, LpStatus> {
    let rows = a.len();
    let n = cost.len();
    let cols = n + rows;
    let mut t = Vec::with_capacity(rows);
    for (i, row) in a.iter().enumerate() {
        let flip = b[i].is_negative();
        let sign = |v: &Rational| if flip { -v.clone() } else { v.clone() };
        let mut r: Vec<Rational> = row.iter().map(sign).collect();
        r.extend((0..rows).map(|k| if k == i { Rational::one() } else { Rational::zero() }));
        r.push(sign(&b[i]));
        t.push(r);
    }
    let mut tab = Tableau { a: t, basis: (n..n + rows).collect(), cols };

    // phase 1: minimise the sum of artificials
    let mut phase1 = vec![Rational::zero(); cols];
    for c in phase1.iter_mut().skip(n) {
        *c = Rational::one();
    }
    tab.optimize(&phase1, cols)?;
    let infeasibility: Rational = (0..rows)
        .filter(|&i| tab.basis[i] >= n)
        .map(|i| tab.rhs(i).clone())
        .fold(Rational::zero(), |acc, v| acc + v);
    if infeasibility.is_positive() {
        return Err(LpStatus::Infeasible);
    }

    // drive zero-level artificials out of the basis; drop redundant rows
    let mut i = 0;
    while i < tab.a.len() {
        if tab.basis[i] >= n {
            match (0..n).find(|&j| !tab.a[i][j].is_zero()) {
                Some(col) => {
                    tab.pivot(i, col);
                    i += 1;
                }
                None => {
                    tab.a.remove(i);
                    tab.basis.remove(i);
                }
            }
        } else {
            i += 1;
        }
    }

    let mut phase2 = cost.to_vec();
    phase2.extend((0..rows).map(|_| Rational::zero()));
    tab.optimize(&phase2, n)?;

    let mut x = vec![Rational::zero(); n];
    for (i, &bj) in tab.basis.iter().enumerate() {
        x[bj] = tab.rhs(i).clone();
    }
    let objective = x
        .iter()
        .zip(cost)
        .fold(Rational::zero(), |acc, (xi, ci)| acc + xi * ci);
    let mut reduced_costs = tab.reduced_costs(&phase2);
    reduced_costs.truncate(n);
    Ok(LpOptimum { x, objective, basis: tab.basis, reduced_costs })
}
