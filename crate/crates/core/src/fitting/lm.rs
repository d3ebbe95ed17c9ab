//! Bounded Levenberg-Marquardt on block-structured residuals.
//!
//! Residuals are split into blocks; each parameter declares which blocks it
//! touches so forward-difference Jacobian columns only re-evaluate those.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Relative forward-difference step.
pub const FD_STEP: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitOptions {
    pub max_iter: usize,
    /// Consecutive rejected steps before giving up.
    pub max_backtracks: usize,
    /// Relative cost reduction regarded as negligible.
    pub ftol: f64,
    /// Largest cosine between the residual and any Jacobian column at convergence.
    pub gtol: f64,
    /// Relative parameter change regarded as negligible.
    pub xtol: f64,
    pub initial_damping: f64,
    /// Gradient cosine below which a stalled run still counts as converged.
    pub accept_gradient: f64,
    /// Profile the coupling on a coarse grid before the local search.
    pub coarse_search: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            max_iter: 200,
            max_backtracks: 40,
            ftol: 1e-12,
            gtol: 1e-8,
            xtol: 1e-12,
            initial_damping: 1e-3,
            accept_gradient: 1e-3,
            coarse_search: true,
        }
    }
}

/// Residuals split into independently evaluable blocks.
pub trait Residuals: Sync {
    fn n_blocks(&self) -> usize;
    fn block(&self, b: usize, x: &[f64]) -> Option<Vec<f64>>;
    /// Whether parameter `j` influences block `b`.
    fn touches(&self, j: usize, b: usize) -> bool;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Converged,
    MaxIterations,
    Stalled,
    NonFinite,
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub x: Vec<f64>,
    pub residuals: Vec<Vec<f64>>,
    pub cost: f64,
    pub n_iter: usize,
    pub outcome: Outcome,
    /// Largest |cos| between the residual vector and a Jacobian column.
    pub gradient: f64,
    /// `(J^T J)^-1` at the solution; `None` when singular.
    pub inv_hessian: Option<DMatrix<f64>>,
    /// Accepted costs, one per iteration, starting with the initial cost.
    pub history: Vec<f64>,
}

fn evaluate<R: Residuals + ?Sized>(r: &R, x: &[f64]) -> Option<Vec<Vec<f64>>> {
    let blocks: Option<Vec<Vec<f64>>> = (0..r.n_blocks()).into_par_iter().map(|b| r.block(b, x)).collect();
    let blocks = blocks?;
    blocks.iter().flatten().all(|v| v.is_finite()).then_some(blocks)
}

fn cost_of(blocks: &[Vec<f64>]) -> f64 {
    0.5 * blocks.iter().flatten().map(|v| v * v).sum::<f64>()
}

fn flatten(blocks: &[Vec<f64>]) -> DVector<f64> {
    DVector::from_iterator(blocks.iter().map(Vec::len).sum(), blocks.iter().flatten().copied())
}

fn clamp(x: &mut [f64], lower: &[f64], upper: &[f64]) {
    for ((v, lo), hi) in x.iter_mut().zip(lower).zip(upper) {
        *v = v.clamp(*lo, *hi);
    }
}

fn jacobian<R: Residuals + ?Sized>(
    r: &R,
    x: &[f64],
    base: &[Vec<f64>],
    lower: &[f64],
    upper: &[f64],
) -> Option<DMatrix<f64>> {
    let offsets: Vec<usize> = base
        .iter()
        .scan(0, |acc, b| {
            let o = *acc;
            *acc += b.len();
            Some(o)
        })
        .collect();
    let m: usize = base.iter().map(Vec::len).sum();
    let columns: Option<Vec<Vec<f64>>> = (0..x.len())
        .into_par_iter()
        .map(|j| {
            let mut h = FD_STEP * x[j].abs().max(FD_STEP * (upper[j] - lower[j]).abs().min(1.0));
            if h == 0.0 {
                h = FD_STEP;
            }
            // Step inward at an upper bound.
            if x[j] + h > upper[j] {
                h = -h;
            }
            let mut xp = x.to_vec();
            xp[j] += h;
            let h = xp[j] - x[j];
            let mut col = vec![0.0; m];
            for b in 0..base.len() {
                if !r.touches(j, b) {
                    continue;
                }
                let rb = r.block(b, &xp)?;
                for (k, (a, c)) in rb.iter().zip(&base[b]).enumerate() {
                    col[offsets[b] + k] = (a - c) / h;
                }
            }
            col.iter().all(|v| v.is_finite()).then_some(col)
        })
        .collect();
    let columns = columns?;
    Some(DMatrix::from_fn(m, x.len(), |i, j| columns[j][i]))
}

/// Parameters pinned at a bound with the descent direction pointing outward.
fn active_set(j: &DMatrix<f64>, r: &DVector<f64>, x: &[f64], lower: &[f64], upper: &[f64]) -> Vec<bool> {
    (0..x.len())
        .map(|k| {
            let g = j.column(k).dot(r);
            (x[k] <= lower[k] && g > 0.0) || (x[k] >= upper[k] && g < 0.0)
        })
        .collect()
}

/// Largest |cos| between the residual and a Jacobian column, over the free
/// (non-pinned) parameters.
fn gradient_cosine(j: &DMatrix<f64>, r: &DVector<f64>, pinned: &[bool]) -> f64 {
    let rn = r.norm();
    if rn == 0.0 {
        return 0.0;
    }
    j.column_iter()
        .zip(pinned)
        .filter(|(_, p)| !**p)
        .map(|(c, _)| {
            let cn = c.norm();
            if cn == 0.0 {
                0.0
            } else {
                (c.dot(r) / (cn * rn)).abs()
            }
        })
        .fold(0.0, f64::max)
}

/// Inverse of `J^T J` through column equilibration.
fn inverse_normal(j: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let norms: Vec<f64> = j.column_iter().map(|c| c.norm()).collect();
    if norms.iter().any(|n| *n == 0.0) {
        return None;
    }
    let js = DMatrix::from_fn(j.nrows(), j.ncols(), |r, c| j[(r, c)] / norms[c]);
    let inv = (js.transpose() * &js).try_inverse()?;
    Some(DMatrix::from_fn(inv.nrows(), inv.ncols(), |a, b| inv[(a, b)] / (norms[a] * norms[b])))
}

/// Cost that is zero up to rounding: tiny against the start, or an RMS
/// residual below 1e-10.
pub fn negligible(cost: f64, initial: f64, m: usize) -> bool {
    cost <= 1e-28 * initial || 2.0 * cost <= 1e-20 * m as f64
}

pub fn minimize<R: Residuals + ?Sized>(
    r: &R,
    x0: &[f64],
    lower: &[f64],
    upper: &[f64],
    opts: &FitOptions,
) -> Solution {
    let n = x0.len();
    let mut x = x0.to_vec();
    clamp(&mut x, lower, upper);
    let Some(mut blocks) = evaluate(r, &x) else {
        return Solution {
            x,
            residuals: Vec::new(),
            cost: f64::INFINITY,
            n_iter: 0,
            outcome: Outcome::NonFinite,
            gradient: f64::NAN,
            inv_hessian: None,
            history: Vec::new(),
        };
    };
    let mut cost = cost_of(&blocks);
    let mut history = vec![cost];
    let mut mu = opts.initial_damping;
    let mut outcome = Outcome::MaxIterations;
    let mut n_iter = 0;
    let mut jac = jacobian(r, &x, &blocks, lower, upper);
    let mut grad_cos = f64::NAN;

    while n_iter < opts.max_iter {
        let Some(j) = jac.as_ref() else {
            outcome = Outcome::NonFinite;
            break;
        };
        let rv = flatten(&blocks);
        let pinned = active_set(j, &rv, &x, lower, upper);
        grad_cos = gradient_cosine(j, &rv, &pinned);
        if grad_cos <= opts.gtol || negligible(cost, history[0], rv.len()) {
            outcome = Outcome::Converged;
            break;
        }
        n_iter += 1;
        // Scaled normal equations: columns of J normalized to unit length.
        let norms: Vec<f64> = j.column_iter().map(|c| c.norm().max(f64::MIN_POSITIVE)).collect();
        let js = DMatrix::from_fn(j.nrows(), n, |a, b| j[(a, b)] / norms[b]);
        let mut a = js.transpose() * &js;
        let mut g = js.transpose() * &rv;
        for k in (0..n).filter(|k| pinned[*k]) {
            a.row_mut(k).fill(0.0);
            a.column_mut(k).fill(0.0);
            a[(k, k)] = 1.0;
            g[k] = 0.0;
        }

        let mut accepted = false;
        for _ in 0..opts.max_backtracks {
            let mut damped = a.clone();
            for k in 0..n {
                damped[(k, k)] += mu * (1.0 + a[(k, k)]);
            }
            let step = match damped.clone().cholesky() {
                Some(ch) => ch.solve(&(-&g)),
                None => match damped.lu().solve(&(-&g)) {
                    Some(s) => s,
                    None => {
                        mu *= 4.0;
                        continue;
                    }
                },
            };
            let mut xn: Vec<f64> = (0..n).map(|k| x[k] + step[k] / norms[k]).collect();
            clamp(&mut xn, lower, upper);
            let dx: f64 = (0..n).map(|k| ((xn[k] - x[k]) * norms[k]).powi(2)).sum::<f64>().sqrt();
            let xs: f64 = (0..n).map(|k| (x[k] * norms[k]).powi(2)).sum::<f64>().sqrt();
            match evaluate(r, &xn) {
                Some(bn) if cost_of(&bn) < cost => {
                    let cn = cost_of(&bn);
                    let reduction = (cost - cn) / cost;
                    x = xn;
                    blocks = bn;
                    cost = cn;
                    history.push(cost);
                    mu = (mu / 3.0).max(1e-12);
                    accepted = true;
                    if reduction < opts.ftol || dx <= opts.xtol * (xs + opts.xtol) {
                        jac = jacobian(r, &x, &blocks, lower, upper);
                        if let Some(jn) = jac.as_ref() {
                            let rv = flatten(&blocks);
                            grad_cos = gradient_cosine(jn, &rv, &active_set(jn, &rv, &x, lower, upper));
                        }
                        outcome = Outcome::Converged;
                    }
                    break;
                }
                _ => {
                    if dx <= opts.xtol * (xs + opts.xtol) {
                        // The step has shrunk to nothing: no further descent is available.
                        break;
                    }
                    mu *= 2.0;
                }
            }
        }
        if outcome == Outcome::Converged {
            break;
        }
        if !accepted {
            outcome = Outcome::Stalled;
            break;
        }
        jac = jacobian(r, &x, &blocks, lower, upper);
    }
    if outcome == Outcome::MaxIterations {
        if let Some(j) = jac.as_ref() {
            let rv = flatten(&blocks);
            grad_cos = gradient_cosine(j, &rv, &active_set(j, &rv, &x, lower, upper));
        }
    }
    let inv_hessian = jac.as_ref().and_then(inverse_normal);
    Solution {
        x,
        residuals: blocks,
        cost,
        n_iter,
        outcome,
        gradient: grad_cos,
        inv_hessian,
        history,
    }
}
