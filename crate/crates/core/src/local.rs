//! Local refinement of candidate points of a POP `min z_n s.t. g_j(z) >= 0`.
//!
//! Extracted moments are only as accurate as the SDP solve, and when the
//! relaxation is not exact the degree-one moments are merely a starting
//! point. A trust-region SLP step on the exact-penalty merit
//! `z_n + rho * max(0, -min_j g_j(z))` moves such a point to a nearby local
//! minimizer, and a Gauss-Newton pass on the active constraints then
//! restores full precision. Neither step proves anything: certification
//! still compares the result against the moment lower bound.

use nalgebra::{DMatrix, DVector};

use crate::error::Result;
use crate::poly::Polynomial;
use crate::pop::PopInstance;
use crate::sdp::{InteriorPointSolver, LmiBlock, LmiProblem, SdpBackend, SdpStatus, SolverOptions};

#[derive(Clone, Debug, PartialEq)]
pub struct LocalOptions {
    /// Penalty weight on constraint violation.
    pub rho: f64,
    pub initial_radius: f64,
    pub max_iters: usize,
}

impl Default for LocalOptions {
    fn default() -> Self {
        LocalOptions {
            rho: 100.0,
            initial_radius: 1.0,
            max_iters: 100,
        }
    }
}

struct Linearization<'a> {
    pop: &'a PopInstance,
    grads: Vec<Vec<Polynomial>>,
}

impl<'a> Linearization<'a> {
    fn new(pop: &'a PopInstance) -> Self {
        let n = pop.n_vars();
        let grads = pop
            .constraints()
            .iter()
            .map(|g| (0..n).map(|i| g.derivative(i)).collect())
            .collect();
        Linearization { pop, grads }
    }

    fn values(&self, z: &[f64]) -> Result<Vec<f64>> {
        self.pop.evaluate_constraints(z)
    }

    fn jacobian(&self, z: &[f64]) -> Result<DMatrix<f64>> {
        let n = self.pop.n_vars();
        let mut jac = DMatrix::zeros(self.grads.len(), n);
        for (j, row) in self.grads.iter().enumerate() {
            for i in 0..n {
                jac[(j, i)] = row[i].eval(z)?;
            }
        }
        Ok(jac)
    }
}

fn violation(values: &[f64]) -> f64 {
    values.iter().fold(0.0f64, |acc, &g| acc.max(-g))
}

/// `z_n + rho * max(0, -min_j g_j(z))`.
pub fn merit(pop: &PopInstance, z: &[f64], rho: f64) -> Result<f64> {
    let values = pop.evaluate_constraints(z)?;
    Ok(z[pop.n_vars() - 1] + rho * violation(&values))
}

/// Solves the trust-region LP
/// `min d_n + rho s  s.t.  g + J d + s >= 0, |d_i| <= radius, s >= 0`.
fn slp_step(values: &[f64], jac: &DMatrix<f64>, rho: f64, radius: f64) -> Option<(Vec<f64>, f64)> {
    let n = jac.ncols();
    let one = |label: String, constant: f64, terms: Vec<(usize, f64)>| LmiBlock {
        label,
        size: 1,
        constant: vec![(0, 0, constant)],
        cells: vec![(0, 0)],
        cell_terms: vec![terms],
    };
    let mut blocks = Vec::with_capacity(values.len() + 2 * n + 1);
    for (j, &g) in values.iter().enumerate() {
        let mut terms: Vec<(usize, f64)> = (0..n).map(|i| (i, jac[(j, i)])).filter(|&(_, v)| v != 0.0).collect();
        terms.push((n, 1.0));
        blocks.push(one(format!("g{}", j + 1), g, terms));
    }
    for i in 0..n {
        blocks.push(one(format!("ub{}", i + 1), radius, vec![(i, -1.0)]));
        blocks.push(one(format!("lb{}", i + 1), radius, vec![(i, 1.0)]));
    }
    blocks.push(one("s".to_string(), 0.0, vec![(n, 1.0)]));
    let mut objective = vec![0.0; n + 1];
    objective[n - 1] = 1.0;
    objective[n] = rho;
    let lp = LmiProblem {
        n_vars: n + 1,
        objective,
        blocks,
    };
    let opts = SolverOptions {
        gap_tol: 1e-10,
        feas_tol: 1e-10,
        ..SolverOptions::default()
    };
    let sol = InteriorPointSolver.solve_lmi(&lp, &opts).ok()?;
    if !matches!(sol.status, SdpStatus::Optimal | SdpStatus::MaxIterations) {
        return None;
    }
    let s = sol.y[n].max(0.0);
    Some((sol.y[..n].to_vec(), s))
}

/// Trust-region SLP on the exact-penalty merit, starting from `z`.
pub fn slp_refine(pop: &PopInstance, z: &[f64], opts: &LocalOptions) -> Result<Vec<f64>> {
    let n = pop.n_vars();
    let lin = Linearization::new(pop);
    let mut x = z.to_vec();
    let mut radius = opts.initial_radius;
    let mut values = lin.values(&x)?;
    let mut phi = x[n - 1] + opts.rho * violation(&values);
    for _ in 0..opts.max_iters {
        let jac = lin.jacobian(&x)?;
        let Some((d, s)) = slp_step(&values, &jac, opts.rho, radius) else {
            break;
        };
        let model = x[n - 1] + d[n - 1] + opts.rho * s;
        let predicted = phi - model;
        if predicted <= 1e-13 * (1.0 + phi.abs()) {
            break;
        }
        let trial: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + b).collect();
        let trial_values = lin.values(&trial)?;
        let trial_phi = trial[n - 1] + opts.rho * violation(&trial_values);
        let ratio = (phi - trial_phi) / predicted;
        let step = d.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if ratio > 0.1 {
            x = trial;
            values = trial_values;
            phi = trial_phi;
            if ratio > 0.75 && step >= 0.9 * radius {
                radius *= 2.0;
            }
        } else {
            radius = 0.25 * step;
        }
        let size = x.iter().fold(1.0f64, |a, v| a.max(v.abs()));
        if radius < 1e-13 * size {
            break;
        }
    }
    Ok(x)
}

/// Gauss-Newton on the constraints with `g_j(z) <= active_tol`, driving
/// them to zero.
pub fn newton_polish(pop: &PopInstance, z: &[f64], active_tol: f64) -> Result<Option<Vec<f64>>> {
    let n = pop.n_vars();
    let lin = Linearization::new(pop);
    let values = lin.values(z)?;
    let active: Vec<usize> = (0..values.len()).filter(|&j| values[j] <= active_tol).collect();
    if active.is_empty() {
        return Ok(None);
    }
    let mut x = z.to_vec();
    for _ in 0..30 {
        let jac = lin.jacobian(&x)?;
        let values = lin.values(&x)?;
        let sub = DMatrix::from_fn(active.len(), n, |r, i| jac[(active[r], i)]);
        let rhs = DVector::from_iterator(active.len(), active.iter().map(|&j| -values[j]));
        let Ok(step) = sub.svd(true, true).solve(&rhs, 1e-12) else {
            return Ok(None);
        };
        x.iter_mut().zip(step.iter()).for_each(|(a, b)| *a += b);
        if !x.iter().all(|v| v.is_finite()) {
            return Ok(None);
        }
        let size = x.iter().fold(1.0f64, |a, v| a.max(v.abs()));
        if step.norm() <= 1e-14 * size {
            break;
        }
    }
    Ok(Some(x))
}

/// SLP followed by an active-set Newton pass. Returns the best point found
/// by merit, which may be `z` itself.
pub fn refine_point(pop: &PopInstance, z: &[f64], opts: &LocalOptions) -> Result<Vec<f64>> {
    let n = pop.n_vars();
    if z.len() != n || z.iter().any(|v| !v.is_finite()) {
        return Ok(z.to_vec());
    }
    let mut best = z.to_vec();
    let mut best_phi = merit(pop, z, opts.rho)?;
    let consider = |p: Vec<f64>, best: &mut Vec<f64>, best_phi: &mut f64| -> Result<()> {
        let phi = merit(pop, &p, opts.rho)?;
        if phi.is_finite() && phi <= *best_phi {
            *best = p;
            *best_phi = phi;
        }
        Ok(())
    };
    let slp = slp_refine(pop, z, opts)?;
    consider(slp, &mut best, &mut best_phi)?;
    let scale = 1.0 + best[n - 1].abs();
    for tol in [1e-9 * scale, 1e-7 * scale, 1e-5 * scale] {
        if let Some(p) = newton_polish(pop, &best, tol)? {
            consider(p, &mut best, &mut best_phi)?;
        }
    }
    Ok(best)
}
