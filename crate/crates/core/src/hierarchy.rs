//! The moment-SOS hierarchy loop: solve order `k`, test flat truncation,
//! extract and certify a minimizer, otherwise raise `k`.

use std::time::Instant;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::local::{merit, refine_point, LocalOptions};
use crate::moment::{assemble_relaxation, MomentRelaxation, TmsIndex};
use crate::poly::{basis, Monomial};
use crate::pop::PopInstance;
use crate::sdp::{
    solve_sdp_with, InteriorPointSolver, LmiBlock, LmiProblem, Residuals, SdpBackend, SdpSolution, SdpStatus,
    SolverOptions,
};

/// `M_d[w]` read from a moment vector indexed by `index` (needs `2d <= index.degree()`).
pub fn moment_matrix(index: &TmsIndex, w: &[f64], d: usize) -> DMatrix<f64> {
    let rows = basis(index.n_vars(), d);
    let s = rows.len();
    let mut m = DMatrix::zeros(s, s);
    for a in 0..s {
        for b in a..s {
            let pos = index
                .position(&rows[a].times(&rows[b]))
                .expect("moment index too small for requested degree");
            m[(a, b)] = w[pos];
            m[(b, a)] = w[pos];
        }
    }
    m
}

/// Count of singular values above `tol * sigma_max`.
pub fn numerical_rank(singular_values: &[f64], tol: f64) -> usize {
    let smax = singular_values.iter().cloned().fold(0.0, f64::max);
    if smax == 0.0 {
        return 0;
    }
    singular_values.iter().filter(|&&s| s > tol * smax).count()
}

fn sorted_singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    let mut sv: Vec<f64> = m.clone().singular_values().iter().cloned().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    sv
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlatCheck {
    pub d: usize,
    pub rank: usize,
    pub rank_lower: usize,
    pub singular_values: Vec<f64>,
    pub singular_values_lower: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlatTruncationReport {
    pub holds: bool,
    /// First `d` in `[k0, k]` with `rank M_d = rank M_{d-k0}`.
    pub witness_degree: Option<usize>,
    /// The common rank at the witness degree.
    pub rank: Option<usize>,
    pub checks: Vec<FlatCheck>,
    pub tol: f64,
}

/// Tests `rank M_d[w] = rank M_{d-k0}[w]` for `d = k0, ..., k` where `2k` is the
/// degree of `index`. Lower-order moment matrices are leading principal
/// submatrices of `M_k[w]` under the graded order.
pub fn flat_truncation(index: &TmsIndex, w: &[f64], k0: usize, tol: f64) -> FlatTruncationReport {
    let k = index.degree() / 2;
    let full = moment_matrix(index, w, k);
    let size = |d: usize| crate::poly::binomial(index.n_vars() + d, d);
    let mut checks = Vec::new();
    let mut witness = None;
    for d in k0..=k {
        let hi = full.view((0, 0), (size(d), size(d))).into_owned();
        let lo = full.view((0, 0), (size(d - k0), size(d - k0))).into_owned();
        let sv_hi = sorted_singular_values(&hi);
        let sv_lo = sorted_singular_values(&lo);
        let rank = numerical_rank(&sv_hi, tol);
        let rank_lower = numerical_rank(&sv_lo, tol);
        checks.push(FlatCheck {
            d,
            rank,
            rank_lower,
            singular_values: sv_hi,
            singular_values_lower: sv_lo,
        });
        if rank == rank_lower && witness.is_none() {
            witness = Some((d, rank));
            break;
        }
    }
    FlatTruncationReport {
        holds: witness.is_some(),
        witness_degree: witness.map(|w| w.0),
        rank: witness.map(|w| w.1),
        checks,
        tol,
    }
}

/// `(w_{e_1}, ..., w_{e_n})`.
pub fn degree_one_moments(w: &[f64], n: usize) -> Vec<f64> {
    w[1..=n].to_vec()
}

/// Reads the minimizer off a flat rank-one moment sequence.
pub fn extract_minimizer(w: &[f64], n: usize, report: &FlatTruncationReport) -> Result<Vec<f64>> {
    match report.rank {
        Some(1) if report.holds => Ok(degree_one_moments(w, n)),
        Some(rank) => Err(Error::ExtractionUnsupported { rank }),
        None => {
            let rank = report.checks.last().map_or(0, |c| c.rank);
            Err(Error::ExtractionUnsupported { rank })
        }
    }
}

/// Candidate atoms of `w` by column-echelon extraction from `M_d[w]` at
/// numerical rank `r` (eigenvalues above `tol * lambda_max`). Exact when `w`
/// is flat with rank `r`; otherwise a heuristic whose points still need
/// certification. Returns nothing when the echelon basis needs monomials of
/// degree `d`.
pub fn extract_atoms(index: &TmsIndex, w: &[f64], d: usize, tol: f64) -> Vec<Vec<f64>> {
    let n = index.n_vars();
    let m = moment_matrix(index, w, d);
    let s = m.nrows();
    let eig = m.symmetric_eigen();
    let mut order: Vec<usize> = (0..s).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let lmax = eig.eigenvalues[order[0]];
    if lmax.is_nan() || lmax <= 0.0 || lmax.is_infinite() {
        return Vec::new();
    }
    let r = order.iter().filter(|&&i| eig.eigenvalues[i] > tol * lmax).count();
    let mut v = DMatrix::from_fn(s, r, |i, j| {
        eig.eigenvectors[(i, order[j])] * eig.eigenvalues[order[j]].sqrt()
    });

    let vmax = v.amax();
    let mut pivots = Vec::with_capacity(r);
    for row in 0..s {
        let col = pivots.len();
        if col == r {
            break;
        }
        let (best, val) = (col..r)
            .map(|j| (j, v[(row, j)].abs()))
            .fold((col, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
        if val <= 1e-8 * vmax {
            continue;
        }
        v.swap_columns(col, best);
        let p = v[(row, col)];
        v.column_mut(col).scale_mut(1.0 / p);
        for j in 0..r {
            let f = v[(row, j)];
            if j != col && f != 0.0 {
                let pivot_col = v.column(col).into_owned();
                v.column_mut(j).axpy(-f, &pivot_col, 1.0);
            }
        }
        pivots.push(row);
    }
    let mons = basis(n, d);
    if pivots.len() < r || pivots.iter().any(|&p| mons.monomials()[p].degree() as usize >= d) {
        return Vec::new();
    }

    let mult: Vec<DMatrix<f64>> = (0..n)
        .map(|i| {
            let xi = Monomial::var(n, i);
            DMatrix::from_fn(r, r, |a, c| {
                let pos = index
                    .position(&mons.monomials()[pivots[a]].times(&xi))
                    .expect("pivot times variable lies in M_d");
                v[(pos, c)]
            })
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let weights: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..1.5)).collect();
    let total: f64 = weights.iter().sum();
    let mut combo = DMatrix::zeros(r, r);
    for (nm, &l) in mult.iter().zip(&weights) {
        combo += nm * (l / total);
    }
    let (q, _) = combo.schur().unpack();
    (0..r)
        .map(|j| {
            let qj = q.column(j);
            mult.iter().map(|nm| qj.dot(&(nm * qj))).collect::<Vec<f64>>()
        })
        .filter(|z: &Vec<f64>| z.iter().all(|v| v.is_finite()))
        .collect()
}

/// A feasible point whose objective matches the lower bound `theta_mom` is a
/// global minimizer: true iff `min_j g_j(z) >= -tol` and `z_n <= theta_mom + tol`.
pub fn certify(pop: &PopInstance, z: &[f64], theta_mom: f64, cert_tol: f64) -> Result<bool> {
    if z.iter().any(|v| !v.is_finite()) {
        return Ok(false);
    }
    let feasible = pop.min_constraint(z)? >= -cert_tol;
    Ok(feasible && z[pop.n_vars() - 1] <= theta_mom + cert_tol)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HierarchyOptions {
    /// Highest order to try; `None` means `k0 + 2`.
    pub k_max: Option<usize>,
    pub rank_tol: f64,
    pub cert_tol: f64,
    /// Re-solve over the near-optimal face with a trace objective when the
    /// first solution is not flat with rank one.
    pub low_rank_refinement: bool,
    /// Slack `delta` in `w_{e_n} <= theta_mom + delta * (1 + |theta_mom|)`.
    pub refinement_slack: f64,
    /// Locally refine extracted points before certification.
    pub polish: bool,
    /// Also certify points that match the bound when flat truncation fails.
    /// When false only flat rank-one solutions certify.
    pub bound_gap_certification: bool,
    pub solver: SolverOptions,
}

impl Default for HierarchyOptions {
    fn default() -> Self {
        HierarchyOptions {
            k_max: None,
            rank_tol: 1e-6,
            cert_tol: 1e-6,
            low_rank_refinement: true,
            refinement_slack: 1e-8,
            polish: true,
            bound_gap_certification: true,
            solver: SolverOptions::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CertificationRoute {
    /// Flat truncation with rank one, then a feasibility check.
    FlatTruncation,
    /// Degree-one moments are feasible and match the lower bound.
    BoundGap,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Outcome {
    CertifiedGlobal {
        order: usize,
        z: Vec<f64>,
        theta: f64,
        route: CertificationRoute,
    },
    CandidateUncertified {
        order: usize,
        z: Vec<f64>,
        theta: f64,
        /// `z_n - theta_mom` at the last order.
        gap: f64,
        /// `max(0, -min_j g_j(z))`.
        infeasibility: f64,
    },
    Exhausted {
        reason: String,
    },
}

impl Outcome {
    pub fn is_certified(&self) -> bool {
        matches!(self, Outcome::CertifiedGlobal { .. })
    }

    /// The point (`z = (c, theta)`) reported by the outcome, if any.
    pub fn point(&self) -> Option<&[f64]> {
        match self {
            Outcome::CertifiedGlobal { z, .. } | Outcome::CandidateUncertified { z, .. } => Some(z),
            Outcome::Exhausted { .. } => None,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct OrderTimings {
    pub assembly_secs: f64,
    pub solve_secs: f64,
    pub refinement_secs: f64,
    pub extraction_secs: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrderRecord {
    pub k: usize,
    pub theta_mom: f64,
    pub theta_sos: f64,
    pub status: SdpStatus,
    pub iterations: usize,
    pub residuals: Residuals,
    /// Flat-truncation verdict on the moment vector used for extraction.
    pub flat: FlatTruncationReport,
    /// True when that moment vector came from the trace refinement.
    pub refined: bool,
    /// Degree-one moments of the solution.
    pub candidate: Vec<f64>,
    /// Atoms extracted from a solution that is not flat with rank one.
    pub atoms: Vec<Vec<f64>>,
    /// Best locally refined start (candidate or atom) by merit, when enabled.
    pub local_candidate: Option<Vec<f64>>,
    pub certified: bool,
    /// True when the certified point is the locally refined candidate.
    pub polished: bool,
    pub timings: OrderTimings,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HierarchyResult {
    pub k0: usize,
    pub orders: Vec<OrderRecord>,
    pub outcome: Outcome,
}

/// The order-`k` moment LMI with objective `tr M_k[w]` and the extra bound
/// `w_{e_n} <= bound`. Its minimizers are minimizers of the original relaxation
/// (up to the slack in `bound`) with small trace, which favours low rank.
pub fn trace_refinement_lmi(relax: &MomentRelaxation, bound: f64) -> LmiProblem {
    let mut lmi = relax.to_lmi();
    let mut objective = vec![0.0; lmi.n_vars];
    let mut constant = 0.0;
    for m in basis(relax.n, relax.k).iter() {
        let pos = relax
            .index
            .position(&m.times(m))
            .expect("square of a basis monomial is indexed");
        if pos == 0 {
            constant += 1.0;
        } else {
            objective[pos - 1] += 1.0;
        }
    }
    debug_assert_eq!(constant, 1.0);
    lmi.objective = objective;
    lmi.blocks.push(LmiBlock {
        label: "bound".to_string(),
        size: 1,
        constant: vec![(0, 0, bound)],
        cells: vec![(0, 0)],
        cell_terms: vec![vec![(relax.objective_index - 1, -1.0)]],
    });
    lmi
}

fn refine(
    backend: &dyn SdpBackend,
    relax: &MomentRelaxation,
    theta_mom: f64,
    opts: &HierarchyOptions,
) -> Result<Option<SdpSolution>> {
    let bound = theta_mom + opts.refinement_slack * (1.0 + theta_mom.abs());
    let sol = backend.solve_lmi(&trace_refinement_lmi(relax, bound), &opts.solver)?;
    // the refined point only seeds extraction, so a stalled solve's best iterate is still useful
    if sol.status == SdpStatus::Infeasible || sol.iterations == 0 || sol.y.iter().any(|v| !v.is_finite()) {
        return Ok(None);
    }
    Ok(Some(SdpSolution {
        w: relax.moments_from_lmi(&sol.y),
        primal_obj: sol.primal_obj,
        dual_obj: sol.dual_obj,
        status: sol.status,
        iterations: sol.iterations,
        residuals: sol.residuals,
        message: sol.message,
    }))
}

/// The finite point with the smallest merit.
fn best_by_merit<'a>(pop: &PopInstance, points: impl Iterator<Item = &'a Vec<f64>>) -> Result<Option<&'a Vec<f64>>> {
    let mut best: Option<(f64, &Vec<f64>)> = None;
    for z in points {
        if z.iter().all(|v| v.is_finite()) {
            let phi = merit(pop, z, LocalOptions::default().rho)?;
            if best.is_none_or(|(b, _)| phi < b) {
                best = Some((phi, z));
            }
        }
    }
    Ok(best.map(|(_, z)| z))
}

fn flat_rank_one(report: &FlatTruncationReport) -> bool {
    report.holds && report.rank == Some(1)
}

pub fn solve_hierarchy(pop: &PopInstance, opts: &HierarchyOptions) -> Result<HierarchyResult> {
    solve_hierarchy_with(&InteriorPointSolver, pop, opts)
}

pub fn solve_hierarchy_with(
    backend: &dyn SdpBackend,
    pop: &PopInstance,
    opts: &HierarchyOptions,
) -> Result<HierarchyResult> {
    let k0 = pop.k0();
    let k_max = opts.k_max.unwrap_or(k0 + 2);
    if k_max < k0 {
        return Err(Error::OrderTooLow { k: k_max, k0 });
    }
    let n = pop.n_vars();
    let mut orders = Vec::new();

    for k in k0..=k_max {
        let t0 = Instant::now();
        let relax = assemble_relaxation(pop, k)?;
        let assembly_secs = t0.elapsed().as_secs_f64();

        let t1 = Instant::now();
        let sol = solve_sdp_with(backend, &relax, &opts.solver)?;
        let solve_secs = t1.elapsed().as_secs_f64();
        if sol.status == SdpStatus::NumericalFailure {
            return Err(Error::Solver {
                order: k,
                status: sol.status,
                message: sol.message,
            });
        }

        // only a converged solve gives a bound tight enough to certify against
        let usable = sol.status == SdpStatus::Optimal;
        // a solve that stalled just short of tolerance still seeds good candidates
        let near = usable
            || (sol.status == SdpStatus::MaxIterations
                && sol.residuals.relative_gap <= 100.0 * opts.solver.gap_tol
                && sol.residuals.primal.max(sol.residuals.dual) <= 100.0 * opts.solver.feas_tol);
        let mut flat = flat_truncation(&relax.index, &sol.w, k0, opts.rank_tol);
        let mut w = sol.w;
        let mut refined = false;
        let t2 = Instant::now();
        if near && opts.low_rank_refinement && !flat_rank_one(&flat) {
            if let Some(better) = refine(backend, &relax, sol.primal_obj, opts)? {
                let report = flat_truncation(&relax.index, &better.w, k0, opts.rank_tol);
                if flat_rank_one(&report) || !flat.holds {
                    flat = report;
                    w = better.w;
                    refined = true;
                }
            }
        }
        let refinement_secs = t2.elapsed().as_secs_f64();

        let t3 = Instant::now();
        let candidate = degree_one_moments(&w, n);
        let atoms = if near && !flat_rank_one(&flat) {
            extract_atoms(&relax.index, &w, k, opts.rank_tol)
        } else {
            Vec::new()
        };
        let mut polished_points = Vec::new();
        if opts.polish {
            for z in std::iter::once(&candidate).chain(&atoms) {
                if z.iter().all(|v| v.is_finite()) {
                    polished_points.push(refine_point(pop, z, &LocalOptions::default())?);
                }
            }
        }
        let local_candidate = best_by_merit(pop, polished_points.iter())?.cloned();
        let mut certified = None;
        let mut polished = false;
        if usable && (opts.bound_gap_certification || flat_rank_one(&flat)) {
            let route = if flat.holds {
                CertificationRoute::FlatTruncation
            } else {
                CertificationRoute::BoundGap
            };
            let tries = polished_points
                .iter()
                .map(|z| (z, true))
                .chain(std::iter::once(&candidate).chain(&atoms).map(|z| (z, false)));
            for (z, was_polished) in tries {
                if certify(pop, z, sol.primal_obj, opts.cert_tol)? {
                    certified = Some((z.clone(), route));
                    polished = was_polished;
                    break;
                }
            }
        }
        let extraction_secs = t3.elapsed().as_secs_f64();

        orders.push(OrderRecord {
            k,
            theta_mom: sol.primal_obj,
            theta_sos: sol.dual_obj,
            status: sol.status,
            iterations: sol.iterations,
            residuals: sol.residuals,
            flat,
            refined,
            candidate,
            atoms,
            local_candidate,
            certified: certified.is_some(),
            polished,
            timings: OrderTimings {
                assembly_secs,
                solve_secs,
                refinement_secs,
                extraction_secs,
            },
        });

        if let Some((z, route)) = certified {
            let theta = z[n - 1];
            return Ok(HierarchyResult {
                k0,
                orders,
                outcome: Outcome::CertifiedGlobal {
                    order: k,
                    z,
                    theta,
                    route,
                },
            });
        }
    }

    let last = orders.last().expect("at least one order is attempted");
    let starts = std::iter::once(&last.candidate)
        .chain(&last.atoms)
        .chain(last.local_candidate.iter());
    let best = best_by_merit(pop, starts)?;
    let outcome = match best {
        Some(z) if last.status != SdpStatus::Infeasible => {
            let z = z.clone();
            let infeasibility = (-pop.min_constraint(&z)?).max(0.0);
            Outcome::CandidateUncertified {
                order: last.k,
                theta: z[n - 1],
                gap: z[n - 1] - last.theta_mom,
                infeasibility,
                z,
            }
        }
        _ => Outcome::Exhausted {
            reason: format!("order {} ended with solver status {:?}", last.k, last.status),
        },
    };
    Ok(HierarchyResult { k0, orders, outcome })
}
