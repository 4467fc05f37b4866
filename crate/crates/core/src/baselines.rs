//! Optimization baselines: tracking-error minimization over the simplex and
//! its cardinality-constrained variant.

use itertools::Itertools;
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tracking::Weights;

pub const ENUMERATION_BUDGET: u128 = 1_000_000;

/// Mean squared benchmark-minus-portfolio difference written as
/// w'Gw - 2b'w + c.
#[derive(Debug, Clone)]
struct Quadratic {
    g: Vec<Vec<f64>>,
    b: Vec<f64>,
}

impl Quadratic {
    fn new(bench: &[f64], series: &[&[f64]]) -> Self {
        let l = bench.len() as f64;
        let n = series.len();
        let mut g = vec![vec![0.0; n]; n];
        for i in 0..n {
            for k in i..n {
                let v = series[i].iter().zip(series[k]).map(|(x, y)| x * y).sum::<f64>() / l;
                g[i][k] = v;
                g[k][i] = v;
            }
        }
        let b = series.iter().map(|s| s.iter().zip(bench).map(|(x, y)| x * y).sum::<f64>() / l).collect();
        Self { g, b }
    }

    fn sub(&self, idx: &[usize]) -> Self {
        Self {
            g: idx.iter().map(|&i| idx.iter().map(|&k| self.g[i][k]).collect()).collect(),
            b: idx.iter().map(|&i| self.b[i]).collect(),
        }
    }

    fn n(&self) -> usize {
        self.b.len()
    }

    /// Objective without the constant term.
    fn value(&self, w: &[f64]) -> f64 {
        let mut v = 0.0;
        for (i, wi) in w.iter().enumerate() {
            if *wi == 0.0 {
                continue;
            }
            let gw: f64 = self.g[i].iter().zip(w).map(|(a, x)| a * x).sum();
            v += wi * (gw - 2.0 * self.b[i]);
        }
        v
    }

    fn gradient(&self, w: &[f64]) -> Vec<f64> {
        self.g
            .iter()
            .zip(&self.b)
            .map(|(row, bi)| 2.0 * (row.iter().zip(w).map(|(a, x)| a * x).sum::<f64>() - bi))
            .collect()
    }
}

/// Euclidean projection onto the probability simplex.
pub fn project_simplex(v: &[f64]) -> Vec<f64> {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut css = 0.0;
    let mut theta = 0.0;
    for (j, x) in u.iter().enumerate() {
        css += x;
        let t = (css - 1.0) / (j + 1) as f64;
        if x - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|x| (x - theta).max(0.0)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpOptions {
    pub max_iter: usize,
    pub tol: f64,
    /// Starting point; uniform weights when absent.
    pub init: Option<Vec<f64>>,
    /// Run the active-set refinement after the gradient phase.
    pub polish: bool,
}

impl Default for QpOptions {
    fn default() -> Self {
        Self {
            max_iter: 100_000,
            tol: 1e-12,
            init: None,
            polish: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QpSolution {
    pub weights: Vec<f64>,
    /// Mean squared tracking difference at `weights`.
    pub objective: f64,
    pub kkt_residual: f64,
    pub iterations: usize,
}

impl QpSolution {
    pub fn te(&self) -> f64 {
        self.objective.max(0.0).sqrt()
    }
}

fn projected_gradient(q: &Quadratic, opts: &QpOptions) -> (Vec<f64>, usize) {
    let n = q.n();
    let mut w = match &opts.init {
        Some(w0) if w0.len() == n => project_simplex(w0),
        _ => vec![1.0 / n as f64; n],
    };
    let lip = q.g.iter().map(|r| r.iter().map(|x| x.abs()).sum::<f64>()).fold(0.0, f64::max);
    let t0 = if lip > 0.0 { 1.0 / (2.0 * lip) } else { 1.0 };
    let mut f = q.value(&w);
    let mut iterations = 0;
    while iterations < opts.max_iter {
        iterations += 1;
        let grad = q.gradient(&w);
        let mut t = t0;
        let (next, fnext) = loop {
            let trial: Vec<f64> = w.iter().zip(&grad).map(|(x, g)| x - t * g).collect();
            let p = project_simplex(&trial);
            let fp = q.value(&p);
            let lin: f64 = grad.iter().zip(p.iter().zip(&w)).map(|(g, (a, b))| g * (a - b)).sum();
            let sq: f64 = p.iter().zip(&w).map(|(a, b)| (a - b) * (a - b)).sum();
            if fp <= f + lin + sq / (2.0 * t) || t < 1e-300 {
                break (p, fp);
            }
            t *= 0.5;
        };
        let change = (f - fnext).abs();
        w = next;
        f = fnext;
        if change < opts.tol {
            break;
        }
    }
    (w, iterations)
}

/// Minimizer of the equality-constrained problem on `support`, or None
/// when the system is numerically singular beyond repair.
fn equality_qp(q: &Quadratic, support: &[usize]) -> Option<Vec<f64>> {
    let m = support.len();
    let mut a = DMatrix::<f64>::zeros(m + 1, m + 1);
    let mut rhs = DVector::<f64>::zeros(m + 1);
    for (r, &i) in support.iter().enumerate() {
        for (c, &k) in support.iter().enumerate() {
            a[(r, c)] = q.g[i][k];
        }
        a[(r, m)] = 1.0;
        a[(m, r)] = 1.0;
        rhs[r] = q.b[i];
    }
    rhs[m] = 1.0;
    let scale = a.amax().max(1e-300);
    let x = a.svd(true, true).solve(&rhs, 1e-13 * scale).ok()?;
    let out: Vec<f64> = x.iter().take(m).copied().collect();
    out.iter().all(|v| v.is_finite()).then_some(out)
}

/// Primal active-set refinement from a feasible point.
fn active_set(q: &Quadratic, start: &[f64]) -> Vec<f64> {
    let n = q.n();
    let mut w = start.to_vec();
    let mut support: Vec<usize> = (0..n).filter(|&i| w[i] > 1e-12).collect();
    if support.is_empty() {
        return w;
    }
    for (i, wi) in w.iter_mut().enumerate() {
        if !support.contains(&i) {
            *wi = 0.0;
        }
    }
    let gscale = q.g.iter().flatten().fold(0.0f64, |m, x| m.max(x.abs())) + q.b.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    for _ in 0..(20 * n + 20) {
        let Some(x) = equality_qp(q, &support) else { break };
        if x.iter().all(|v| *v >= 0.0) {
            for (k, &i) in support.iter().enumerate() {
                w[i] = x[k];
            }
            let grad = q.gradient(&w);
            let mu = support.iter().map(|&i| grad[i]).sum::<f64>() / support.len() as f64;
            let entering = (0..n)
                .filter(|i| !support.contains(i))
                .filter(|&i| grad[i] < mu - 1e-12 * gscale.max(1e-300))
                .min_by(|&a, &b| grad[a].total_cmp(&grad[b]));
            match entering {
                Some(j) => {
                    support.push(j);
                    support.sort_unstable();
                }
                None => break,
            }
        } else {
            let mut alpha = 1.0f64;
            for (k, &i) in support.iter().enumerate() {
                if x[k] < 0.0 {
                    alpha = alpha.min(w[i] / (w[i] - x[k]));
                }
            }
            for (k, &i) in support.iter().enumerate() {
                w[i] += alpha * (x[k] - w[i]);
            }
            support.retain(|&i| {
                if w[i] <= 1e-15 {
                    w[i] = 0.0;
                    false
                } else {
                    true
                }
            });
            if support.is_empty() {
                return start.to_vec();
            }
        }
    }
    let clipped: Vec<f64> = w.iter().map(|v| v.max(0.0)).collect();
    let s: f64 = clipped.iter().sum();
    clipped.iter().map(|v| v / s).collect()
}

fn kkt_residual(q: &Quadratic, w: &[f64]) -> f64 {
    let g = q.gradient(w);
    let trial: Vec<f64> = w.iter().zip(&g).map(|(x, d)| x - d).collect();
    project_simplex(&trial)
        .iter()
        .zip(w)
        .map(|(p, x)| (p - x).abs())
        .fold(0.0, f64::max)
}

fn direct_objective(bench: &[f64], series: &[&[f64]], w: &[f64]) -> f64 {
    let l = bench.len();
    let mut ss = 0.0;
    for j in 0..l {
        let rp: f64 = series.iter().zip(w).filter(|(_, x)| **x != 0.0).map(|(s, x)| x * s[j]).sum();
        let d = bench[j] - rp;
        ss += d * d;
    }
    ss / l as f64
}

fn check_panel(bench: &[f64], series: &[&[f64]]) -> Result<()> {
    if bench.len() < 2 {
        return Err(Error::Input(format!("need at least 2 observations, got {}", bench.len())));
    }
    if series.is_empty() {
        return Err(Error::Input("no candidate series".into()));
    }
    for s in series {
        if s.len() != bench.len() {
            return Err(Error::Dimension { expected: bench.len(), actual: s.len() });
        }
    }
    if bench.iter().chain(series.iter().flat_map(|s| s.iter())).any(|x| !x.is_finite()) {
        return Err(Error::Input("non-finite return".into()));
    }
    Ok(())
}

fn solve_quadratic(q: &Quadratic, bench: &[f64], series: &[&[f64]], opts: &QpOptions) -> QpSolution {
    let (mut w, iterations) = projected_gradient(q, opts);
    if opts.polish {
        let refined = active_set(q, &w);
        if q.value(&refined) <= q.value(&w) {
            w = refined;
        }
    }
    QpSolution {
        objective: direct_objective(bench, series, &w),
        kkt_residual: kkt_residual(q, &w),
        weights: w,
        iterations,
    }
}

/// Benchmark returns against a small set of sector (or asset) return series.
#[derive(Debug, Clone, PartialEq)]
pub struct SimplexQP {
    pub bench: Vec<f64>,
    pub sectors: Vec<Vec<f64>>,
}

pub fn solve_simplex_qp(p: &SimplexQP) -> Result<QpSolution> {
    solve_simplex_qp_with(p, &QpOptions::default())
}

pub fn solve_simplex_qp_with(p: &SimplexQP, opts: &QpOptions) -> Result<QpSolution> {
    let series: Vec<&[f64]> = p.sectors.iter().map(|s| s.as_slice()).collect();
    check_panel(&p.bench, &series)?;
    let q = Quadratic::new(&p.bench, &series);
    Ok(solve_quadratic(&q, &p.bench, &series, opts))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CardinalityProblem {
    pub bench: Vec<f64>,
    pub assets: Vec<Vec<f64>>,
    pub k: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CardinalityMethod {
    Exact,
    #[default]
    Greedy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CardinalitySolution {
    /// Chosen asset indices; ascending for the exact method, in order of
    /// entry for the greedy method.
    pub support: Vec<usize>,
    pub weights: Weights,
    pub objective: f64,
    /// Objective after each greedy addition.
    pub path: Vec<f64>,
}

/// n choose k, saturating.
pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut c: u128 = 1;
    for i in 0..k {
        c = c.saturating_mul((n - i) as u128) / (i + 1) as u128;
    }
    c
}

struct Solved {
    support: Vec<usize>,
    sol: QpSolution,
}

fn solve_support(q: &Quadratic, bench: &[f64], series: &[&[f64]], support: &[usize]) -> Solved {
    let sub = q.sub(support);
    let sub_series: Vec<&[f64]> = support.iter().map(|&i| series[i]).collect();
    let sol = solve_quadratic(&sub, bench, &sub_series, &QpOptions::default());
    Solved { support: support.to_vec(), sol }
}

fn better(a: Solved, b: Solved) -> Solved {
    match a.sol.objective.total_cmp(&b.sol.objective).then_with(|| a.support.cmp(&b.support)) {
        std::cmp::Ordering::Greater => b,
        _ => a,
    }
}

pub fn solve_cardinality(p: &CardinalityProblem, method: CardinalityMethod) -> Result<CardinalitySolution> {
    let n = p.assets.len();
    if p.k == 0 || p.k > n {
        return Err(Error::Input(format!("cardinality {} outside 1..={n}", p.k)));
    }
    let series: Vec<&[f64]> = p.assets.iter().map(|s| s.as_slice()).collect();
    check_panel(&p.bench, &series)?;
    let q = Quadratic::new(&p.bench, &series);

    let (best, path) = match method {
        CardinalityMethod::Exact => {
            let count = binomial(n, p.k);
            if count > ENUMERATION_BUDGET {
                return Err(Error::SolverBudget(format!(
                    "exact search over {count} supports exceeds {ENUMERATION_BUDGET}; use the greedy method"
                )));
            }
            let supports: Vec<Vec<usize>> = (0..n).combinations(p.k).collect();
            let best = supports
                .par_iter()
                .map(|s| solve_support(&q, &p.bench, &series, s))
                .reduce_with(better)
                .expect("at least one support");
            (best, Vec::new())
        }
        CardinalityMethod::Greedy => {
            let mut support: Vec<usize> = Vec::with_capacity(p.k);
            let mut path = Vec::with_capacity(p.k);
            for _ in 0..p.k {
                let step = (0..n)
                    .into_par_iter()
                    .filter(|i| !support.contains(i))
                    .map(|i| {
                        let mut s = support.clone();
                        s.push(i);
                        let mut solved = solve_support(&q, &p.bench, &series, &s);
                        solved.support = vec![i];
                        solved
                    })
                    .reduce_with(better)
                    .expect("candidates remain");
                support.push(step.support[0]);
                path.push(step.sol.objective);
            }
            // Same support, same arithmetic as the exact search.
            support.sort_unstable();
            let last = solve_support(&q, &p.bench, &series, &support);
            if let Some(end) = path.last_mut() {
                *end = last.sol.objective;
            }
            (last, path)
        }
    };
    let weights = Weights::from_support(n, &best.support, &best.sol.weights)?;
    Ok(CardinalitySolution {
        support: best.support,
        weights,
        objective: best.sol.objective,
        path,
    })
}
