//! Order-`k` moment relaxation of a [`PopInstance`] as a linear matrix
//! inequality in the truncated moment sequence `w`.
//!
//! The relaxation reads
//!
//! ```text
//! min  w_{e_n}
//! s.t. M_k[w] >= 0,  L_{g_j}^{(k)}[w] >= 0,  w_0 = 1,
//! ```
//!
//! where `M_k[w]_{a,b} = w_{a+b}` and `L_p^{(k)}[w]_{a,b} = sum_c p_c w_{a+b+c}`
//! with rows indexed by the monomials of degree `<= k - ceil(deg p / 2)`.

use std::collections::HashMap;
use std::fmt::Write as _;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::poly::{basis, Monomial, MonomialBasis, Polynomial};
use crate::pop::PopInstance;
use crate::sdp::{LmiBlock, LmiProblem};

/// Position lookup for the monomials of degree `<= 2k` (the entries of `w`).
#[derive(Clone, Debug)]
pub struct TmsIndex {
    basis: MonomialBasis,
    lookup: HashMap<Monomial, usize>,
}

impl TmsIndex {
    pub fn new(n: usize, degree: usize) -> Self {
        let basis = basis(n, degree);
        let lookup = basis.iter().cloned().enumerate().map(|(i, m)| (m, i)).collect();
        TmsIndex { basis, lookup }
    }

    pub fn n_vars(&self) -> usize {
        self.basis.n_vars()
    }

    pub fn degree(&self) -> usize {
        self.basis.degree()
    }

    pub fn len(&self) -> usize {
        self.basis.len()
    }

    pub fn is_empty(&self) -> bool {
        self.basis.is_empty()
    }

    pub fn basis(&self) -> &MonomialBasis {
        &self.basis
    }

    pub fn position(&self, m: &Monomial) -> Option<usize> {
        self.lookup.get(m).copied()
    }

    /// Position of `e_i` (zero-based `i`), which is `i + 1` in graded order.
    pub fn linear_position(&self, i: usize) -> usize {
        i + 1
    }
}

/// Moments of the point mass at `u`: `w_a = u^a`.
pub fn dirac_moments(index: &TmsIndex, u: &[f64]) -> Vec<f64> {
    index.basis().iter().map(|m| m.eval(u)).collect()
}

/// One matrix cell: a linear functional `sum coeff * w_index`.
#[derive(Clone, Debug, PartialEq)]
pub struct Cell {
    pub row: usize,
    pub col: usize,
    pub terms: Vec<(usize, f64)>,
}

/// Symmetric matrix whose entries are linear in `w`; only the upper
/// triangle (`row <= col`) is stored, row by row.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearMatrixBlock {
    pub label: String,
    size: usize,
    cells: Vec<Cell>,
}

impl LinearMatrixBlock {
    pub fn size(&self) -> usize {
        self.size
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    /// The functional at `(row, col)`, either triangle.
    pub fn entry(&self, row: usize, col: usize) -> &[(usize, f64)] {
        let (r, c) = if row <= col { (row, col) } else { (col, row) };
        // row r starts after sum_{i<r} (size - i) cells
        let offset = r * (2 * self.size - r + 1) / 2;
        &self.cells[offset + (c - r)].terms
    }

    pub fn evaluate(&self, w: &[f64]) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.size, self.size);
        for cell in &self.cells {
            let v: f64 = cell.terms.iter().map(|&(i, c)| c * w[i]).sum();
            m[(cell.row, cell.col)] = v;
            m[(cell.col, cell.row)] = v;
        }
        m
    }
}

fn localizing_cells(p: &Polynomial, rows: &MonomialBasis, index: &TmsIndex) -> Result<Vec<Cell>> {
    let s = rows.len();
    let mut cells = Vec::with_capacity(s * (s + 1) / 2);
    for a in 0..s {
        for b in a..s {
            let ab = rows[a].times(&rows[b]);
            let mut terms = Vec::with_capacity(p.len());
            for (g, coef) in p.terms() {
                let m = ab.times(g);
                let pos = index.position(&m).ok_or_else(|| {
                    Error::InvalidArgument(format!(
                        "moment index of degree {} cannot hold a degree-{} entry",
                        index.degree(),
                        m.degree()
                    ))
                })?;
                terms.push((pos, coef));
            }
            terms.sort_by_key(|t| t.0);
            cells.push(Cell { row: a, col: b, terms });
        }
    }
    Ok(cells)
}

/// `M_k[w]`: rows and columns indexed by the monomials of degree `<= k`.
pub fn moment_block(k: usize, index: &TmsIndex) -> Result<LinearMatrixBlock> {
    let one = Polynomial::constant(index.n_vars(), 1.0);
    let mut block = localizing_block(&one, k, index)?;
    block.label = format!("M_{k}");
    Ok(block)
}

/// `L_p^{(k)}[w]` with `k1 = k - ceil(deg p / 2)`.
pub fn localizing_block(p: &Polynomial, k: usize, index: &TmsIndex) -> Result<LinearMatrixBlock> {
    if p.n_vars() != index.n_vars() {
        return Err(Error::DimensionMismatch {
            context: "localizing polynomial",
            expected: index.n_vars(),
            found: p.n_vars(),
        });
    }
    let half = (p.degree() as usize).div_ceil(2);
    if k < half {
        return Err(Error::OrderTooLow { k, k0: half });
    }
    if index.degree() < 2 * k {
        return Err(Error::InvalidArgument(format!(
            "moment index has degree {}, order {k} needs {}",
            index.degree(),
            2 * k
        )));
    }
    let rows = basis(index.n_vars(), k - half);
    let cells = localizing_cells(p, &rows, index)?;
    Ok(LinearMatrixBlock {
        label: format!("L_{k}"),
        size: rows.len(),
        cells,
    })
}

#[derive(Clone, Debug)]
pub struct MomentRelaxation {
    pub n: usize,
    pub k: usize,
    pub k0: usize,
    pub index: TmsIndex,
    /// Position of `w_{e_n}` in `w`.
    pub objective_index: usize,
    /// The moment block first, then one localizing block per constraint.
    pub blocks: Vec<LinearMatrixBlock>,
}

pub fn assemble_relaxation(pop: &PopInstance, k: usize) -> Result<MomentRelaxation> {
    let k0 = pop.k0();
    if k < k0 {
        return Err(Error::OrderTooLow { k, k0 });
    }
    let n = pop.n_vars();
    let index = TmsIndex::new(n, 2 * k);
    let mut blocks = Vec::with_capacity(pop.constraints().len() + 1);
    blocks.push(moment_block(k, &index)?);
    for (g, label) in pop.constraints().iter().zip(pop.labels()) {
        let mut block = localizing_block(g, k, &index)?;
        block.label = format!("L[{}]", label.short());
        blocks.push(block);
    }
    Ok(MomentRelaxation {
        n,
        k,
        k0,
        objective_index: index.linear_position(n - 1),
        index,
        blocks,
    })
}

impl MomentRelaxation {
    pub fn block_sizes(&self) -> Vec<usize> {
        self.blocks.iter().map(LinearMatrixBlock::size).collect()
    }

    pub fn evaluate_blocks(&self, w: &[f64]) -> Vec<DMatrix<f64>> {
        self.blocks.iter().map(|b| b.evaluate(w)).collect()
    }

    /// LMI over `y = (w_1, ..., w_{L-1})` after substituting `w_0 = 1`.
    pub fn to_lmi(&self) -> LmiProblem {
        let n_vars = self.index.len() - 1;
        let mut objective = vec![0.0; n_vars];
        objective[self.objective_index - 1] = 1.0;
        let blocks = self
            .blocks
            .iter()
            .map(|b| {
                let mut constant = Vec::new();
                let mut cells = Vec::with_capacity(b.cells.len());
                let mut cell_terms = Vec::with_capacity(b.cells.len());
                for cell in &b.cells {
                    let mut terms = Vec::with_capacity(cell.terms.len());
                    for &(i, c) in &cell.terms {
                        if i == 0 {
                            constant.push((cell.row, cell.col, c));
                        } else {
                            terms.push((i - 1, c));
                        }
                    }
                    cells.push((cell.row, cell.col));
                    cell_terms.push(terms);
                }
                LmiBlock {
                    label: b.label.clone(),
                    size: b.size,
                    constant,
                    cells,
                    cell_terms,
                }
            })
            .collect();
        LmiProblem {
            n_vars,
            objective,
            blocks,
        }
    }

    /// Full moment vector from LMI variables.
    pub fn moments_from_lmi(&self, y: &[f64]) -> Vec<f64> {
        let mut w = Vec::with_capacity(y.len() + 1);
        w.push(1.0);
        w.extend_from_slice(y);
        w
    }
}

fn sdpa_number(v: f64) -> String {
    format!("{v:.16e}")
}

/// SDPA sparse (`.dat-s`) text for the relaxation, in SDPA's
/// `min c'x  s.t.  sum_i F_i x_i - F_0 >= 0` convention with `x = (w_1, ...)`.
pub fn export_sdpa(relax: &MomentRelaxation) -> String {
    let labels: Vec<&str> = relax.blocks.iter().map(|b| b.label.as_str()).collect();
    let comment = format!(
        "moment relaxation n={} k={} k0={} blocks: {}",
        relax.n,
        relax.k,
        relax.k0,
        labels.join(" ")
    );
    export_sdpa_lmi(&relax.to_lmi(), Some(&comment))
}

/// SDPA sparse text for an LMI `min c'y  s.t.  F_0' + sum_i y_i F_i >= 0`,
/// written with `F_0 = -F_0'`. Zero entries are omitted.
pub fn export_sdpa_lmi(lmi: &LmiProblem, comment: Option<&str>) -> String {
    let mut out = String::new();
    if let Some(c) = comment {
        let _ = writeln!(out, "\"{}", c.replace('\n', " "));
    }
    let _ = writeln!(out, "{}", lmi.n_vars);
    let _ = writeln!(out, "{}", lmi.blocks.len());
    let sizes: Vec<String> = lmi.blocks.iter().map(|b| b.size.to_string()).collect();
    let _ = writeln!(out, "{}", sizes.join(" "));
    let c: Vec<String> = lmi.objective.iter().map(|&v| sdpa_number(v)).collect();
    let _ = writeln!(out, "{}", c.join(" "));

    let mut entries: Vec<(usize, usize, usize, usize, f64)> = Vec::new();
    for (b, block) in lmi.blocks.iter().enumerate() {
        for &(r, c, v) in &block.constant {
            // F_0 = -(constant part)
            entries.push((0, b + 1, r + 1, c + 1, -v));
        }
        for (&(r, c), terms) in block.cells.iter().zip(&block.cell_terms) {
            for &(i, v) in terms {
                entries.push((i + 1, b + 1, r + 1, c + 1, v));
            }
        }
    }
    entries.sort_by_key(|e| (e.0, e.1, e.2, e.3));
    for (mat, blk, r, c, v) in entries {
        if v != 0.0 {
            let _ = writeln!(out, "{mat} {blk} {r} {c} {}", sdpa_number(v));
        }
    }
    out
}
