//! Mixed Nash equilibria of two-player matrix games by support enumeration.

use itertools::Itertools;
use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Feasibility tolerance inside support enumeration.
pub const FEASIBILITY_TOL: f64 = 1e-9;

/// Row player payoffs `A` and column player payoffs `B`, both `m × n`.
#[derive(Debug, Clone, PartialEq)]
pub struct BimatrixGame {
    m: usize,
    n: usize,
    a: Vec<f64>,
    b: Vec<f64>,
}

impl BimatrixGame {
    /// Row-major `m × n` payoffs.
    pub fn new(m: usize, n: usize, a: Vec<f64>, b: Vec<f64>) -> Result<Self> {
        if m == 0 || n == 0 || a.len() != m * n || b.len() != m * n {
            return Err(Error::InvalidParameter(format!("payoff matrices must both be {m}x{n} and nonempty")));
        }
        if a.iter().chain(&b).any(|v| !v.is_finite()) {
            return Err(Error::NumericalFailure("non-finite payoff".into()));
        }
        Ok(Self { m, n, a, b })
    }

    pub fn from_rows(a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<Self> {
        let m = a.len();
        let n = a.first().map_or(0, Vec::len);
        if b.len() != m || a.iter().chain(b).any(|r| r.len() != n) {
            return Err(Error::InvalidParameter("ragged payoff matrices".into()));
        }
        Self::new(m, n, a.concat(), b.concat())
    }

    /// The zero-sum game `(A, -A)`.
    pub fn zero_sum(m: usize, n: usize, a: Vec<f64>) -> Result<Self> {
        let b = a.iter().map(|v| -v).collect();
        Self::new(m, n, a, b)
    }

    pub fn rows(&self) -> usize {
        self.m
    }

    pub fn cols(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn a(&self, i: usize, j: usize) -> f64 {
        self.a[i * self.n + j]
    }

    #[inline]
    pub fn b(&self, i: usize, j: usize) -> f64 {
        self.b[i * self.n + j]
    }

    /// `(A y)_i` for every row.
    pub fn row_payoffs(&self, y: &[f64]) -> Vec<f64> {
        (0..self.m).map(|i| (0..self.n).map(|j| self.a(i, j) * y[j]).sum()).collect()
    }

    /// `(xᵀ B)_j` for every column.
    pub fn col_payoffs(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n).map(|j| (0..self.m).map(|i| x[i] * self.b(i, j)).sum()).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MixedProfile {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl MixedProfile {
    pub fn pure(m: usize, n: usize, i: usize, j: usize) -> Self {
        let mut x = vec![0.0; m];
        let mut y = vec![0.0; n];
        x[i] = 1.0;
        y[j] = 1.0;
        Self { x, y }
    }

    pub fn support_x(&self) -> Vec<usize> {
        (0..self.x.len()).filter(|&i| self.x[i] > 0.0).collect()
    }

    pub fn support_y(&self) -> Vec<usize> {
        (0..self.y.len()).filter(|&j| self.y[j] > 0.0).collect()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `(xᵀ A y, xᵀ B y)`.
pub fn nash_value(g: &BimatrixGame, p: &MixedProfile) -> (f64, f64) {
    (dot(&p.x, &g.row_payoffs(&p.y)), dot(&g.col_payoffs(&p.x), &p.y))
}

/// Largest gain either player obtains by a unilateral deviation.
pub fn exploitability(g: &BimatrixGame, p: &MixedProfile) -> f64 {
    let ay = g.row_payoffs(&p.y);
    let xb = g.col_payoffs(&p.x);
    let (vr, vc) = (dot(&p.x, &ay), dot(&xb, &p.y));
    let best_r = ay.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let best_c = xb.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (best_r - vr).max(best_c - vc).max(0.0)
}

/// Mixture over `support` (length `size`) making the opponent indifferent
/// across `opp_support`: `Σ_k M[r][k] w_k = v` for `r ∈ opp_support`,
/// `Σ w = 1`. `payoff(r, k)` is the opponent's payoff for its row `r`
/// against this player's action `k`.
fn indifference(
    support: &[usize],
    opp_support: &[usize],
    size: usize,
    payoff: impl Fn(usize, usize) -> f64,
) -> Option<Vec<f64>> {
    let (rows, cols) = (opp_support.len() + 1, support.len() + 1);
    let mut m = DMatrix::<f64>::zeros(rows, cols);
    let mut rhs = DVector::<f64>::zeros(rows);
    for (ri, &r) in opp_support.iter().enumerate() {
        for (ci, &k) in support.iter().enumerate() {
            m[(ri, ci)] = payoff(r, k);
        }
        m[(ri, cols - 1)] = -1.0;
    }
    for ci in 0..support.len() {
        m[(rows - 1, ci)] = 1.0;
    }
    rhs[rows - 1] = 1.0;

    let sol = if rows == cols {
        let lu = m.clone().lu();
        let sol = lu.solve(&rhs)?;
        // Reject near-singular systems whose solution is numerically meaningless.
        if !sol.iter().all(|v| v.is_finite()) || ((&m * &sol) - &rhs).amax() > FEASIBILITY_TOL {
            return None;
        }
        sol
    } else {
        let svd = m.clone().svd(true, true);
        let sol = svd.solve(&rhs, FEASIBILITY_TOL).ok()?;
        if ((&m * &sol) - &rhs).amax() > FEASIBILITY_TOL {
            return None;
        }
        sol
    };
    let mut w = vec![0.0; size];
    for (ci, &k) in support.iter().enumerate() {
        let v = sol[ci];
        if v < -FEASIBILITY_TOL {
            return None;
        }
        w[k] = v.max(0.0);
    }
    let total: f64 = w.iter().sum();
    if total <= 0.0 {
        return None;
    }
    w.iter_mut().for_each(|v| *v /= total);
    Some(w)
}

fn try_supports(g: &BimatrixGame, si: &[usize], sj: &[usize], tol: f64) -> Option<MixedProfile> {
    // y makes the row player indifferent on si; x makes the column player
    // indifferent on sj.
    let y = indifference(sj, si, g.n, |i, j| g.a(i, j))?;
    let x = indifference(si, sj, g.m, |j, i| g.b(i, j))?;
    let p = MixedProfile { x, y };
    (exploitability(g, &p) <= tol).then_some(p)
}

/// Every `(rows, cols)` support pair in search order: equal sizes by
/// increasing size, then unequal sizes, each lexicographic.
fn support_pairs(m: usize, n: usize) -> impl Iterator<Item = (Vec<usize>, Vec<usize>)> {
    let equal = (1..=m.min(n)).map(|k| (k, k));
    let unequal = (1..=m).cartesian_product(1..=n).filter(|(a, b)| a != b).sorted_by_key(|&(a, b)| (a + b, a));
    equal.chain(unequal).flat_map(move |(ki, kj)| {
        (0..m).combinations(ki).cartesian_product((0..n).combinations(kj).collect::<Vec<_>>())
    })
}

/// First equilibrium in support-enumeration order whose exploitability is at
/// most `tol`.
pub fn solve_bimatrix(g: &BimatrixGame, tol: f64) -> Result<MixedProfile> {
    for (si, sj) in support_pairs(g.m, g.n) {
        if let Some(p) = try_supports(g, &si, &sj, tol) {
            return Ok(p);
        }
    }
    Err(Error::SolverFailure(format!("no equilibrium within tolerance {tol} for a {}x{} game", g.m, g.n)))
}
