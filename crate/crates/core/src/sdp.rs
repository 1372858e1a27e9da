//! Dense primal-dual interior-point solver for block-diagonal LMIs.
//!
//! The problem handled is
//!
//! ```text
//! (moment side)  min  c'y   s.t.  Z = F_0 + sum_i y_i F_i >= 0
//! (Gram side)    max  -<F_0, X>   s.t.  <F_i, X> = c_i,  X >= 0
//! ```
//!
//! For a moment relaxation `y` is the moment vector without `w_0`, `Z` holds
//! the moment and localizing matrices and `X` holds the Gram matrices of the
//! SOS certificate, so the two objectives are `theta_mom` and `theta_sos`.
//!
//! The iteration is infeasible-start path following with the HKM search
//! direction and a Mehrotra predictor-corrector step. Each block is scaled
//! by its largest data entry before solving.

use faer::linalg::solvers::Solve;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::moment::MomentRelaxation;

/// One symmetric block of an LMI: `F_0` (upper triangle) plus, for each
/// upper-triangle cell, the variables that enter it.
#[derive(Clone, Debug, PartialEq)]
pub struct LmiBlock {
    pub label: String,
    pub size: usize,
    pub constant: Vec<(usize, usize, f64)>,
    pub cells: Vec<(usize, usize)>,
    pub cell_terms: Vec<Vec<(usize, f64)>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LmiProblem {
    pub n_vars: usize,
    pub objective: Vec<f64>,
    pub blocks: Vec<LmiBlock>,
}

impl LmiProblem {
    pub fn validate(&self) -> Result<()> {
        if self.objective.len() != self.n_vars {
            return Err(Error::DimensionMismatch {
                context: "LMI objective",
                expected: self.n_vars,
                found: self.objective.len(),
            });
        }
        for b in &self.blocks {
            if b.cells.len() != b.cell_terms.len() {
                return Err(Error::InvalidArgument(format!(
                    "block {} has ragged cell data",
                    b.label
                )));
            }
            let in_range = |&(r, c): &(usize, usize)| r <= c && c < b.size;
            if !b.cells.iter().all(in_range) || !b.constant.iter().all(|&(r, c, _)| in_range(&(r, c))) {
                return Err(Error::InvalidArgument(format!(
                    "block {} has entries outside its upper triangle",
                    b.label
                )));
            }
            if b.cell_terms.iter().flatten().any(|&(i, _)| i >= self.n_vars) {
                return Err(Error::InvalidArgument(format!(
                    "block {} references a variable out of range",
                    b.label
                )));
            }
        }
        Ok(())
    }

    /// `F_0 + sum_i y_i F_i`, block by block.
    pub fn evaluate(&self, y: &[f64]) -> Vec<DMatrix<f64>> {
        self.blocks
            .iter()
            .map(|b| {
                let mut m = DMatrix::zeros(b.size, b.size);
                for &(r, c, v) in &b.constant {
                    m[(r, c)] += v;
                    if r != c {
                        m[(c, r)] += v;
                    }
                }
                for (&(r, c), terms) in b.cells.iter().zip(&b.cell_terms) {
                    let v: f64 = terms.iter().map(|&(i, a)| a * y[i]).sum();
                    m[(r, c)] += v;
                    if r != c {
                        m[(c, r)] += v;
                    }
                }
                m
            })
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SdpStatus {
    Optimal,
    MaxIterations,
    NumericalFailure,
    Infeasible,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub gap_tol: f64,
    pub feas_tol: f64,
    pub max_iters: usize,
    pub step_fraction: f64,
    /// Multiplier on the default starting point `X = xi I, Z = eta I`.
    pub initial_point_scale: Option<f64>,
    /// Print one line per iteration to stderr.
    #[serde(default)]
    pub trace: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            gap_tol: 1e-8,
            feas_tol: 1e-8,
            max_iters: 200,
            step_fraction: 0.98,
            initial_point_scale: None,
            trace: false,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.gap_tol > 0.0 && self.feas_tol > 0.0) {
            return Err(Error::InvalidArgument("solver tolerances must be positive".into()));
        }
        if !(self.step_fraction > 0.0 && self.step_fraction < 1.0) {
            return Err(Error::InvalidArgument("step fraction must lie in (0, 1)".into()));
        }
        if let Some(s) = self.initial_point_scale {
            if s.is_nan() || s <= 0.0 {
                return Err(Error::InvalidArgument("initial point scale must be positive".into()));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Residuals {
    /// `||F_0 + sum y_i F_i - Z|| / (1 + ||F_0||)`, moment side.
    pub primal: f64,
    /// `||c - <F_i, X>|| / (1 + ||c||)`, Gram side.
    pub dual: f64,
    pub relative_gap: f64,
}

impl Residuals {
    fn merit(&self) -> f64 {
        self.primal.max(self.dual).max(self.relative_gap)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LmiSolution {
    pub y: Vec<f64>,
    /// `c'y`.
    pub primal_obj: f64,
    /// `-<F_0, X>`.
    pub dual_obj: f64,
    pub status: SdpStatus,
    pub iterations: usize,
    pub residuals: Residuals,
    pub message: String,
}

/// Anything that can solve an [`LmiProblem`].
pub trait SdpBackend {
    fn name(&self) -> &str;
    fn solve_lmi(&self, problem: &LmiProblem, opts: &SolverOptions) -> Result<LmiSolution>;
}

/// The built-in dense interior-point method.
#[derive(Clone, Copy, Debug, Default)]
pub struct InteriorPointSolver;

impl SdpBackend for InteriorPointSolver {
    fn name(&self) -> &str {
        "dense-ipm"
    }

    fn solve_lmi(&self, problem: &LmiProblem, opts: &SolverOptions) -> Result<LmiSolution> {
        problem.validate()?;
        opts.validate()?;
        Ok(Ipm::new(problem, opts).run())
    }
}

struct Block {
    size: usize,
    c0: DMatrix<f64>,
    cells: Vec<(usize, usize)>,
    cell_terms: Vec<Vec<(usize, f64)>>,
    /// For each variable present in the block, its cells and coefficients.
    var_cells: Vec<(usize, Vec<(usize, f64)>)>,
}

impl Block {
    fn scaled(b: &LmiBlock) -> Block {
        let max_abs = b
            .constant
            .iter()
            .map(|e| e.2.abs())
            .chain(b.cell_terms.iter().flatten().map(|t| t.1.abs()))
            .fold(0.0, f64::max);
        let s = if max_abs > 0.0 { 1.0 / max_abs } else { 1.0 };
        let mut c0 = DMatrix::zeros(b.size, b.size);
        for &(r, c, v) in &b.constant {
            c0[(r, c)] += s * v;
            if r != c {
                c0[(c, r)] += s * v;
            }
        }
        let cell_terms: Vec<Vec<(usize, f64)>> = b
            .cell_terms
            .iter()
            .map(|t| t.iter().map(|&(i, v)| (i, s * v)).collect())
            .collect();
        let mut by_var: std::collections::BTreeMap<usize, Vec<(usize, f64)>> = Default::default();
        for (p, terms) in cell_terms.iter().enumerate() {
            for &(i, v) in terms {
                by_var.entry(i).or_default().push((p, v));
            }
        }
        Block {
            size: b.size,
            c0,
            cells: b.cells.clone(),
            cell_terms,
            var_cells: by_var.into_iter().collect(),
        }
    }

    /// `sum_i y_i F_i` for this block.
    fn apply(&self, y: &[f64]) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.size, self.size);
        for (&(r, c), terms) in self.cells.iter().zip(&self.cell_terms) {
            let v: f64 = terms.iter().map(|&(i, a)| a * y[i]).sum();
            m[(r, c)] += v;
            if r != c {
                m[(c, r)] += v;
            }
        }
        m
    }

    /// Accumulates `<F_i, M>` into `out` (M need not be symmetric).
    fn adjoint_into(&self, m: &DMatrix<f64>, out: &mut [f64]) {
        for (&(r, c), terms) in self.cells.iter().zip(&self.cell_terms) {
            let v = if r == c { m[(r, r)] } else { m[(r, c)] + m[(c, r)] };
            for &(i, a) in terms {
                out[i] += a * v;
            }
        }
    }

    /// Adds this block's contribution `tr(F_i X F_j Zinv)` to the Schur matrix.
    fn schur_into(&self, x: &DMatrix<f64>, zinv: &DMatrix<f64>, h: &mut [f64], m: usize) {
        let s = self.size;
        let xs = x.as_slice();
        let zs = zinv.as_slice();
        // symmetric, so column-major indexing doubles as row-major
        let xv = |i: usize, j: usize| xs[i * s + j];
        let zv = |i: usize, j: usize| zs[i * s + j];
        let mut t = vec![0.0; self.cells.len()];
        for (i, pcells) in &self.var_cells {
            t.iter_mut().for_each(|v| *v = 0.0);
            for &(p, coef) in pcells {
                let (a, b) = self.cells[p];
                for (q, &(c, d)) in self.cells.iter().enumerate() {
                    let v = match (a == b, c == d) {
                        (true, true) => xv(a, c) * zv(c, a),
                        (true, false) => xv(a, c) * zv(d, a) + xv(a, d) * zv(c, a),
                        (false, true) => xv(b, c) * zv(c, a) + xv(a, c) * zv(c, b),
                        (false, false) => {
                            xv(b, c) * zv(d, a) + xv(b, d) * zv(c, a) + xv(a, c) * zv(d, b) + xv(a, d) * zv(c, b)
                        }
                    };
                    t[q] += coef * v;
                }
            }
            let row = &mut h[i * m..(i + 1) * m];
            for (tq, terms) in t.iter().zip(&self.cell_terms) {
                if *tq != 0.0 {
                    for &(j, cq) in terms {
                        row[j] += tq * cq;
                    }
                }
            }
        }
    }
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let t = m.transpose();
    *m += t;
    *m *= 0.5;
}

fn frob_dot(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

/// Largest `alpha` with `m + alpha * dm >= 0` (`m` positive definite).
fn max_step(m: &DMatrix<f64>, dm: &DMatrix<f64>) -> f64 {
    let Some(chol) = m.clone().cholesky() else {
        return 0.0;
    };
    let l = chol.l();
    let Some(linv) = l.clone().try_inverse() else {
        return 0.0;
    };
    let mut s = &linv * dm * linv.transpose();
    symmetrize(&mut s);
    let lmin = s.symmetric_eigenvalues().iter().cloned().fold(f64::INFINITY, f64::min);
    if lmin >= 0.0 {
        f64::INFINITY
    } else {
        -1.0 / lmin
    }
}

struct Direction {
    dx: Vec<DMatrix<f64>>,
    dy: Vec<f64>,
    dz: Vec<DMatrix<f64>>,
}

struct Ipm<'a> {
    opts: &'a SolverOptions,
    blocks: Vec<Block>,
    c: Vec<f64>,
    m: usize,
}

struct Iterate {
    x: Vec<DMatrix<f64>>,
    y: Vec<f64>,
    z: Vec<DMatrix<f64>>,
}

impl<'a> Ipm<'a> {
    fn new(problem: &LmiProblem, opts: &'a SolverOptions) -> Self {
        Ipm {
            opts,
            blocks: problem.blocks.iter().map(Block::scaled).collect(),
            c: problem.objective.clone(),
            m: problem.n_vars,
        }
    }

    fn gram_operator(&self, ms: &[DMatrix<f64>]) -> Vec<f64> {
        let mut out = vec![0.0; self.m];
        for (b, mat) in self.blocks.iter().zip(ms) {
            b.adjoint_into(mat, &mut out);
        }
        out
    }

    fn starting_point(&self) -> Iterate {
        let scale = self.opts.initial_point_scale.unwrap_or(1.0);
        let mut x = Vec::new();
        let mut z = Vec::new();
        for b in &self.blocks {
            let s = b.size as f64;
            let mut fnorm2 = vec![0.0; self.m];
            for terms in &b.cell_terms {
                for &(i, v) in terms {
                    fnorm2[i] += v * v;
                }
            }
            let max_ratio = fnorm2
                .iter()
                .zip(&self.c)
                .filter(|(f, _)| **f > 0.0)
                .map(|(f, ci)| (1.0 + ci.abs()) / (1.0 + f.sqrt()))
                .fold(0.0, f64::max);
            let max_fnorm = fnorm2.iter().fold(0.0f64, |a, f| a.max(f.sqrt()));
            let xi = 10f64.max(s.sqrt()).max(s.sqrt() * max_ratio);
            let eta = 10f64.max(s.sqrt()).max(max_fnorm).max(b.c0.norm());
            x.push(DMatrix::identity(b.size, b.size) * (xi * scale));
            z.push(DMatrix::identity(b.size, b.size) * (eta * scale));
        }
        Iterate {
            x,
            y: vec![0.0; self.m],
            z,
        }
    }

    fn schur(&self, x: &[DMatrix<f64>], zinv: &[DMatrix<f64>]) -> Vec<f64> {
        let mut h = vec![0.0; self.m * self.m];
        for ((b, xb), zb) in self.blocks.iter().zip(x).zip(zinv) {
            b.schur_into(xb, zb, &mut h, self.m);
        }
        // exact symmetry for the factorization
        for i in 0..self.m {
            for j in (i + 1)..self.m {
                let v = 0.5 * (h[i * self.m + j] + h[j * self.m + i]);
                h[i * self.m + j] = v;
                h[j * self.m + i] = v;
            }
        }
        h
    }

    fn factor(&self, h: &[f64]) -> Option<faer::linalg::solvers::Llt<f64>> {
        let m = self.m;
        let max_diag = (0..m).map(|i| h[i * m + i].abs()).fold(0.0, f64::max).max(1e-300);
        for shift in [0.0, 1e-14, 1e-12, 1e-10, 1e-8] {
            let mat =
                faer::Mat::<f64>::from_fn(m, m, |i, j| h[i * m + j] + if i == j { shift * max_diag } else { 0.0 });
            if let Ok(llt) = mat.llt(faer::Side::Lower) {
                return Some(llt);
            }
        }
        None
    }

    #[allow(clippy::too_many_arguments)]
    fn direction(
        &self,
        llt: &faer::linalg::solvers::Llt<f64>,
        it: &Iterate,
        zinv: &[DMatrix<f64>],
        rc: &[DMatrix<f64>],
        x_rd_zinv: &[DMatrix<f64>],
        rd: &[DMatrix<f64>],
        rp: &[f64],
    ) -> Direction {
        let diff: Vec<DMatrix<f64>> = rc.iter().zip(x_rd_zinv).map(|(a, b)| a - b).collect();
        let mut rhs = self.gram_operator(&diff);
        for (r, p) in rhs.iter_mut().zip(rp) {
            *r -= p;
        }
        let col = faer::Mat::<f64>::from_fn(self.m, 1, |i, _| rhs[i]);
        let sol = llt.solve(&col);
        let dy: Vec<f64> = (0..self.m).map(|i| sol[(i, 0)]).collect();
        let mut dz = Vec::with_capacity(self.blocks.len());
        let mut dx = Vec::with_capacity(self.blocks.len());
        for (k, b) in self.blocks.iter().enumerate() {
            let dzb = &rd[k] + b.apply(&dy);
            let mut dxb = &rc[k] - &it.x[k] * &dzb * &zinv[k];
            symmetrize(&mut dxb);
            dz.push(dzb);
            dx.push(dxb);
        }
        Direction { dx, dy, dz }
    }

    fn run(&self) -> LmiSolution {
        let opts = self.opts;
        let ntot: usize = self.blocks.iter().map(|b| b.size).sum();
        let ntot = ntot.max(1) as f64;
        let c_norm = self.c.iter().map(|v| v * v).sum::<f64>().sqrt();
        let c0_norm = self.blocks.iter().map(|b| b.c0.norm_squared()).sum::<f64>().sqrt();

        let mut it = self.starting_point();
        let mut best: Option<(f64, LmiSolution)> = None;
        let mut stalls = 0usize;

        let snapshot =
            |it: &Iterate, res: Residuals, pobj: f64, dobj: f64, iter: usize, status, msg: &str| LmiSolution {
                y: it.y.clone(),
                primal_obj: pobj,
                dual_obj: dobj,
                status,
                iterations: iter,
                residuals: res,
                message: msg.to_string(),
            };

        for iter in 0..=opts.max_iters {
            let mut zinv = Vec::with_capacity(self.blocks.len());
            for zb in &it.z {
                match zb.clone().cholesky() {
                    Some(ch) => zinv.push(ch.inverse()),
                    None => return self.finish(best, "slack matrix lost definiteness", SdpStatus::NumericalFailure),
                }
            }
            let gx = self.gram_operator(&it.x);
            let rp: Vec<f64> = self.c.iter().zip(&gx).map(|(c, g)| c - g).collect();
            let rd: Vec<DMatrix<f64>> = self
                .blocks
                .iter()
                .zip(&it.z)
                .map(|(b, zb)| &b.c0 + b.apply(&it.y) - zb)
                .collect();
            let pobj: f64 = self.c.iter().zip(&it.y).map(|(c, y)| c * y).sum();
            let dobj: f64 = -self
                .blocks
                .iter()
                .zip(&it.x)
                .map(|(b, xb)| frob_dot(&b.c0, xb))
                .sum::<f64>();
            let xz: f64 = it.x.iter().zip(&it.z).map(|(a, b)| frob_dot(a, b)).sum();
            let mu = xz / ntot;
            let res = Residuals {
                primal: rd.iter().map(|r| r.norm_squared()).sum::<f64>().sqrt() / (1.0 + c0_norm),
                dual: rp.iter().map(|v| v * v).sum::<f64>().sqrt() / (1.0 + c_norm),
                relative_gap: (pobj - dobj).abs() / (1.0 + pobj.abs() + dobj.abs()),
            };
            if !res.merit().is_finite() {
                return self.finish(best, "non-finite iterate", SdpStatus::NumericalFailure);
            }
            if best.as_ref().is_none_or(|(m, _)| res.merit() < *m) {
                best = Some((
                    res.merit(),
                    snapshot(&it, res, pobj, dobj, iter, SdpStatus::MaxIterations, "best iterate"),
                ));
                stalls = 0;
            } else {
                stalls += 1;
            }
            if opts.trace {
                eprintln!(
                    "iter {iter:3}  pobj {pobj:+.9e}  dobj {dobj:+.9e}  gap {:.2e}  pinf {:.2e}  dinf {:.2e}  mu {mu:.2e}",
                    res.relative_gap, res.primal, res.dual
                );
            }
            if res.relative_gap <= opts.gap_tol && res.primal <= opts.feas_tol && res.dual <= opts.feas_tol {
                return snapshot(&it, res, pobj, dobj, iter, SdpStatus::Optimal, "converged");
            }
            if self.infeasibility_certificate(&it.x, res.dual, dobj) {
                return snapshot(
                    &it,
                    res,
                    pobj,
                    dobj,
                    iter,
                    SdpStatus::Infeasible,
                    "Gram-side ray certifies an empty LMI",
                );
            }
            if iter == opts.max_iters {
                break;
            }
            if stalls >= 15 {
                return self.finish(best, "no progress over 15 iterations", SdpStatus::MaxIterations);
            }

            let h = self.schur(&it.x, &zinv);
            let Some(llt) = self.factor(&h) else {
                return self.finish(
                    best,
                    "Schur complement is not positive definite",
                    SdpStatus::NumericalFailure,
                );
            };
            let x_rd_zinv: Vec<DMatrix<f64>> =
                it.x.iter()
                    .zip(&rd)
                    .zip(&zinv)
                    .map(|((xb, rdb), zib)| xb * rdb * zib)
                    .collect();

            // predictor
            let rc: Vec<DMatrix<f64>> = it.x.iter().map(|xb| -xb).collect();
            let pred = self.direction(&llt, &it, &zinv, &rc, &x_rd_zinv, &rd, &rp);
            let ap = self.step(&it.x, &pred.dx, 1.0);
            let ad = self.step(&it.z, &pred.dz, 1.0);
            let mu_aff: f64 =
                it.x.iter()
                    .zip(&pred.dx)
                    .zip(it.z.iter().zip(&pred.dz))
                    .map(|((xb, dxb), (zb, dzb))| frob_dot(&(xb + dxb * ap), &(zb + dzb * ad)))
                    .sum::<f64>()
                    / ntot;
            // more centering after short predictor steps
            let expon = (3.0 * ap.min(ad).powi(2)).max(1.0);
            let sigma = if mu > 0.0 {
                (mu_aff / mu).clamp(0.0, 1.0).powf(expon)
            } else {
                0.0
            };
            let pred_step = ap.min(ad);

            // corrector
            let rc: Vec<DMatrix<f64>> = (0..self.blocks.len())
                .map(|k| &zinv[k] * (sigma * mu) - &it.x[k] - &pred.dx[k] * &pred.dz[k] * &zinv[k])
                .collect();
            let dir = self.direction(&llt, &it, &zinv, &rc, &x_rd_zinv, &rd, &rp);
            let gamma = opts.step_fraction.min(0.9 + 0.09 * pred_step);
            let ap = self.step(&it.x, &dir.dx, gamma);
            let ad = self.step(&it.z, &dir.dz, gamma);
            if opts.trace {
                eprintln!("          sigma {sigma:.2e}  alpha_p {ap:.3}  alpha_d {ad:.3}");
            }
            if ap < 1e-12 && ad < 1e-12 {
                return self.finish(best, "step length collapsed", SdpStatus::MaxIterations);
            }
            for k in 0..self.blocks.len() {
                it.x[k] += &dir.dx[k] * ap;
                it.z[k] += &dir.dz[k] * ad;
                symmetrize(&mut it.x[k]);
                symmetrize(&mut it.z[k]);
            }
            for (y, d) in it.y.iter_mut().zip(&dir.dy) {
                *y += ad * d;
            }
        }
        self.finish(best, "iteration limit reached", SdpStatus::MaxIterations)
    }

    fn step(&self, m: &[DMatrix<f64>], dm: &[DMatrix<f64>], gamma: f64) -> f64 {
        let amax = m
            .iter()
            .zip(dm)
            .map(|(a, b)| max_step(a, b))
            .fold(f64::INFINITY, f64::min);
        (gamma * amax).min(1.0)
    }

    /// `X >= 0` with `<F_i, X> ~ 0` and `<F_0, X> < 0` proves `Z >= 0` impossible.
    fn infeasibility_certificate(&self, x: &[DMatrix<f64>], dual_res: f64, dobj: f64) -> bool {
        let trace: f64 = x.iter().map(|m| m.trace()).sum();
        if trace < 1e8 {
            return false;
        }
        let c_norm = self.c.iter().map(|v| v * v).sum::<f64>().sqrt();
        // dual_res is relative to 1 + ||c||; undo that for the ray test
        let gram_res = dual_res * (1.0 + c_norm) / trace;
        dobj / trace > 1e-6 && gram_res < 1e-8
    }

    fn finish(&self, best: Option<(f64, LmiSolution)>, msg: &str, status: SdpStatus) -> LmiSolution {
        match best {
            Some((_, mut sol)) => {
                sol.status = status;
                sol.message = msg.to_string();
                sol
            }
            None => LmiSolution {
                y: vec![0.0; self.m],
                primal_obj: f64::NAN,
                dual_obj: f64::NAN,
                status,
                iterations: 0,
                residuals: Residuals::default(),
                message: msg.to_string(),
            },
        }
    }
}

/// Solution of a moment relaxation with `w_0 = 1` restored.
#[derive(Clone, Debug, PartialEq)]
pub struct SdpSolution {
    pub w: Vec<f64>,
    /// `theta_mom,k`.
    pub primal_obj: f64,
    /// `theta_sos,k`.
    pub dual_obj: f64,
    pub status: SdpStatus,
    pub iterations: usize,
    pub residuals: Residuals,
    pub message: String,
}

pub fn solve_sdp(relax: &MomentRelaxation, opts: &SolverOptions) -> Result<SdpSolution> {
    solve_sdp_with(&InteriorPointSolver, relax, opts)
}

pub fn solve_sdp_with(backend: &dyn SdpBackend, relax: &MomentRelaxation, opts: &SolverOptions) -> Result<SdpSolution> {
    let sol = backend.solve_lmi(&relax.to_lmi(), opts)?;
    Ok(SdpSolution {
        w: relax.moments_from_lmi(&sol.y),
        primal_obj: sol.primal_obj,
        dual_obj: sol.dual_obj,
        status: sol.status,
        iterations: sol.iterations,
        residuals: sol.residuals,
        message: sol.message,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityReport {
    /// Smallest eigenvalue of each assembled block, in block order.
    pub min_eigenvalues: Vec<f64>,
    pub objective: f64,
}

impl FeasibilityReport {
    pub fn min_eigenvalue(&self) -> f64 {
        self.min_eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min)
    }
}

/// Re-evaluates every block at `w` and reports its smallest eigenvalue.
pub fn verify_moments(relax: &MomentRelaxation, w: &[f64]) -> FeasibilityReport {
    let min_eigenvalues = relax
        .evaluate_blocks(w)
        .into_iter()
        .map(|m| m.symmetric_eigenvalues().iter().cloned().fold(f64::INFINITY, f64::min))
        .collect();
    FeasibilityReport {
        min_eigenvalues,
        objective: w[relax.objective_index],
    }
}

pub fn verify_solution(relax: &MomentRelaxation, sol: &SdpSolution) -> FeasibilityReport {
    verify_moments(relax, &sol.w)
}
