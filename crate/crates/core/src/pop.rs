//! Epigraph polynomial optimization problem for network training.
//!
//! With `z = (c, theta)`, training minimizes `z_n` subject to
//! `z_n + r_j(c) >= 0` and `z_n - r_j(c) >= 0` for every output `j`, where
//! `r(c) = (1/N) sum_i f(x_i; c) - (1/N) sum_i y_i` is the averaged residual.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::{numeric_forward, symbolic_forward, NetworkSpec, TrainingSet};
use crate::poly::Polynomial;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sign {
    Plus,
    Minus,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum ConstraintLabel {
    /// `z_n + r_j` (`Plus`) or `z_n - r_j` (`Minus`), zero-based output `j`.
    Residual { output: usize, sign: Sign },
    /// `R^2 - z_var^2`, only present when a box is requested.
    Box { var: usize },
    /// Caller-supplied constraint.
    Custom { index: usize },
}

impl ConstraintLabel {
    pub fn short(&self) -> String {
        match self {
            ConstraintLabel::Residual { output, sign } => {
                let s = if *sign == Sign::Plus { '+' } else { '-' };
                format!("theta{s}r{}", output + 1)
            }
            ConstraintLabel::Box { var } => format!("box{}", var + 1),
            ConstraintLabel::Custom { index } => format!("g{}", index + 1),
        }
    }
}

/// `f_hat(c) - y_hat` embedded in the `n`-variable space; `theta` never occurs.
#[derive(Clone, Debug, PartialEq)]
pub struct ResidualSystem {
    pub components: Vec<Polynomial>,
}

impl ResidualSystem {
    pub fn n_vars(&self) -> usize {
        self.components.first().map_or(0, Polynomial::n_vars)
    }

    pub fn eval(&self, z: &[f64]) -> Result<Vec<f64>> {
        self.components.iter().map(|p| p.eval(z)).collect()
    }
}

pub fn averaged_residual(net: &NetworkSpec, data: &TrainingSet) -> Result<ResidualSystem> {
    data.check_shapes(net)?;
    let nc = net.n_coefficients();
    let n = nc + 1;
    let inv_n = 1.0 / data.len() as f64;
    let mut components = vec![Polynomial::zero(nc); net.output_dim()];
    let mut y_mean = vec![0.0; net.output_dim()];
    for s in &data.samples {
        let f = symbolic_forward(net, &s.x)?;
        for (acc, fj) in components.iter_mut().zip(&f) {
            acc.add_scaled(fj, inv_n)?;
        }
        for (acc, y) in y_mean.iter_mut().zip(&s.y) {
            *acc += y * inv_n;
        }
    }
    let components = components
        .into_iter()
        .zip(&y_mean)
        .map(|(p, &y)| {
            let mut p = p.embed(n);
            p.add_scaled(&Polynomial::constant(n, y), -1.0)?;
            Ok(p)
        })
        .collect::<Result<_>>()?;
    Ok(ResidualSystem { components })
}

/// `min z_n  s.t.  g_j(z) >= 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct PopInstance {
    n: usize,
    objective: Polynomial,
    constraints: Vec<Polynomial>,
    labels: Vec<ConstraintLabel>,
    var_names: Vec<String>,
}

impl PopInstance {
    /// A POP with objective `z_n` and the given constraints `g_j >= 0`.
    pub fn new(n: usize, constraints: Vec<Polynomial>) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument("POP needs at least one variable".into()));
        }
        for g in &constraints {
            if g.n_vars() != n {
                return Err(Error::DimensionMismatch {
                    context: "POP constraint",
                    expected: n,
                    found: g.n_vars(),
                });
            }
        }
        let labels = (0..constraints.len())
            .map(|index| ConstraintLabel::Custom { index })
            .collect();
        let mut var_names: Vec<String> = (1..n).map(|i| format!("z{i}")).collect();
        var_names.push("theta".into());
        Ok(PopInstance {
            n,
            objective: Polynomial::variable(n, n - 1),
            constraints,
            labels,
            var_names,
        })
    }

    /// Wraps each residual component into the `(+, -)` pair around `theta`.
    pub fn from_residuals(residuals: &ResidualSystem, coefficient_names: &[String]) -> Result<Self> {
        let n = residuals.n_vars();
        if n == 0 {
            return Err(Error::InvalidArgument("empty residual system".into()));
        }
        let theta = Polynomial::variable(n, n - 1);
        let mut constraints = Vec::with_capacity(2 * residuals.components.len());
        let mut labels = Vec::with_capacity(2 * residuals.components.len());
        for (j, r) in residuals.components.iter().enumerate() {
            constraints.push(theta.checked_add(r)?);
            labels.push(ConstraintLabel::Residual {
                output: j,
                sign: Sign::Plus,
            });
            constraints.push(theta.checked_sub(r)?);
            labels.push(ConstraintLabel::Residual {
                output: j,
                sign: Sign::Minus,
            });
        }
        let mut var_names = coefficient_names.to_vec();
        var_names.resize(n - 1, String::new());
        for (i, name) in var_names.iter_mut().enumerate() {
            if name.is_empty() {
                *name = format!("z{}", i + 1);
            }
        }
        var_names.push("theta".into());
        Ok(PopInstance {
            n,
            objective: theta,
            constraints,
            labels,
            var_names,
        })
    }

    /// Adds `radius^2 - z_i^2 >= 0` for every variable. Not part of the plain
    /// epigraph model; it bounds the feasible set when the solver needs it.
    pub fn with_box(mut self, radius: f64) -> Result<Self> {
        if radius.is_nan() || radius <= 0.0 {
            return Err(Error::InvalidArgument(format!("box radius {radius} must be positive")));
        }
        for var in 0..self.n {
            let zi = Polynomial::variable(self.n, var);
            let g = Polynomial::constant(self.n, radius * radius).checked_sub(&(&zi * &zi))?;
            self.constraints.push(g);
            self.labels.push(ConstraintLabel::Box { var });
        }
        Ok(self)
    }

    pub fn n_vars(&self) -> usize {
        self.n
    }

    pub fn objective(&self) -> &Polynomial {
        &self.objective
    }

    pub fn constraints(&self) -> &[Polynomial] {
        &self.constraints
    }

    pub fn labels(&self) -> &[ConstraintLabel] {
        &self.labels
    }

    pub fn var_names(&self) -> &[String] {
        &self.var_names
    }

    /// `deg(g_j)` with a floor of one, so constants do not lower `k0`.
    pub fn constraint_degrees(&self) -> Vec<u32> {
        self.constraints.iter().map(|g| g.degree().max(1)).collect()
    }

    /// Smallest admissible relaxation order `ceil(deg(g) / 2)` (at least one).
    pub fn k0(&self) -> usize {
        let deg = self
            .constraint_degrees()
            .into_iter()
            .chain(std::iter::once(self.objective.degree()))
            .max()
            .unwrap_or(1);
        (deg as usize).div_ceil(2).max(1)
    }

    pub fn evaluate_constraints(&self, z: &[f64]) -> Result<Vec<f64>> {
        self.constraints.iter().map(|g| g.eval(z)).collect()
    }

    /// `min_j g_j(z)`, or `+inf` without constraints.
    pub fn min_constraint(&self, z: &[f64]) -> Result<f64> {
        Ok(self.evaluate_constraints(z)?.into_iter().fold(f64::INFINITY, f64::min))
    }

    /// Human-readable listing of objective, constraints and `k0`.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "variables: {}", self.var_names.join(", "));
        let _ = writeln!(out, "minimize {}", self.objective.render(&self.var_names));
        for (j, (g, label)) in self.constraints.iter().zip(&self.labels).enumerate() {
            let _ = writeln!(
                out,
                "g{} [{}]: {} >= 0",
                j + 1,
                label.short(),
                g.render(&self.var_names)
            );
        }
        let _ = writeln!(out, "k0 = {}", self.k0());
        out
    }
}

pub fn build_pop(net: &NetworkSpec, data: &TrainingSet) -> Result<PopInstance> {
    let residuals = averaged_residual(net, data)?;
    PopInstance::from_residuals(&residuals, &net.coefficient_names())
}

/// `|| (1/N) sum_i (f(x_i; c) - y_i) ||_inf`, evaluated numerically.
pub fn loss_eval(net: &NetworkSpec, data: &TrainingSet, c: &[f64]) -> Result<f64> {
    data.check_shapes(net)?;
    let inv_n = 1.0 / data.len() as f64;
    let mut mean = vec![0.0; net.output_dim()];
    for s in &data.samples {
        let f = numeric_forward(net, c, &s.x)?;
        for ((acc, fj), yj) in mean.iter_mut().zip(&f).zip(&s.y) {
            *acc += (fj - yj) * inv_n;
        }
    }
    Ok(mean.iter().fold(0.0, |acc, r| acc.max(r.abs())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixture;
    use crate::net::{generate_synthetic, random_network};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn fixture_residual_matches_display() {
        let res = averaged_residual(&fixture::network(), &fixture::training_set()).unwrap();
        // z = (c11, c12, c20, c21, theta)
        let expected: [&[(&[u32], f64)]; 4] = [
            &[
                (&[0, 0, 1, 0, 0], 3.0),
                (&[0, 0, 0, 1, 0], 9.0),
                (&[0, 1, 0, 1, 0], 29.0),
                (&[0, 0, 0, 0, 0], -52.0),
            ],
            &[
                (&[1, 0, 0, 1, 0], 5.0),
                (&[0, 0, 1, 0, 0], -1.0),
                (&[0, 1, 0, 1, 0], 5.0),
                (&[0, 0, 0, 0, 0], -4.0),
            ],
            &[
                (&[0, 0, 1, 0, 0], 3.0),
                (&[0, 0, 0, 1, 0], 10.0),
                (&[1, 0, 0, 1, 0], -1.0),
                (&[0, 1, 0, 1, 0], 41.0),
                (&[0, 0, 0, 0, 0], -76.0),
            ],
            &[
                (&[1, 0, 0, 1, 0], 2.5),
                (&[0, 0, 0, 1, 0], -9.0),
                (&[0, 0, 1, 0, 0], -2.0),
                (&[0, 1, 0, 1, 0], -36.5),
                (&[0, 0, 0, 0, 0], 68.5),
            ],
        ];
        for (got, want) in res.components.iter().zip(expected) {
            let want = Polynomial::from_terms(5, want.iter().map(|(e, c)| (e.to_vec(), *c))).unwrap();
            assert_eq!(got, &want);
        }
    }

    #[test]
    fn fixture_pop_layout() {
        let pop = build_pop(&fixture::network(), &fixture::training_set()).unwrap();
        assert_eq!(pop.n_vars(), 5);
        assert_eq!(pop.constraints().len(), 8);
        assert_eq!(pop.k0(), 1);
        assert_eq!(pop.var_names(), ["c11", "c12", "c20", "c21", "theta"]);
        assert_eq!(pop.objective(), &Polynomial::variable(5, 4));
        assert_eq!(
            pop.labels()[3],
            ConstraintLabel::Residual {
                output: 1,
                sign: Sign::Minus
            }
        );
        let dump = pop.dump();
        assert!(
            dump.contains("g1 [theta+r1]: 29*c12*c21 + theta + 9*c21 + 3*c20 - 52 >= 0"),
            "{dump}"
        );
        assert!(dump.ends_with("k0 = 1\n"));
    }

    #[test]
    fn fixture_loss_is_zero_at_minimizer() {
        let loss = loss_eval(&fixture::network(), &fixture::training_set(), &fixture::C_STAR).unwrap();
        assert_eq!(loss, 0.0);
    }

    #[test]
    fn epigraph_boundary_and_interior() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let net = random_network(&[3, 3, 3, 3], &[2, 1], &mut rng).unwrap();
        let data = generate_synthetic(&net, 4, 0.05, 5).unwrap();
        let pop = build_pop(&net, &data).unwrap();
        let c0 = [0.3, -0.7, 1.1, 0.4];
        let theta = loss_eval(&net, &data, &c0).unwrap();
        let mut z = c0.to_vec();
        z.push(theta);
        assert!(pop.min_constraint(&z).unwrap().abs() < 1e-12);
        *z.last_mut().unwrap() = theta + 1.0;
        assert!(pop.evaluate_constraints(&z).unwrap().iter().all(|&g| g >= 1.0 - 1e-12));
    }

    #[test]
    fn exact_fit_point_has_zero_residual() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let net = random_network(&[2, 3, 2], &[3], &mut rng).unwrap();
        let data = generate_synthetic(&net, 1, 0.0, 1).unwrap();
        let c = data.provenance.as_ref().unwrap().c_true.clone();
        let res = averaged_residual(&net, &data).unwrap();
        let mut z = c.clone();
        z.push(0.0);
        for r in res.eval(&z).unwrap() {
            assert!(r.abs() < 1e-10);
        }
        assert!(loss_eval(&net, &data, &c).unwrap() < 1e-10);
    }

    #[test]
    fn box_constraints_and_errors() {
        let g = Polynomial::variable(2, 1);
        let pop = PopInstance::new(2, vec![g]).unwrap().with_box(3.0).unwrap();
        assert_eq!(pop.constraints().len(), 3);
        assert_eq!(pop.k0(), 1);
        assert_eq!(pop.evaluate_constraints(&[1.0, 2.0]).unwrap(), vec![2.0, 8.0, 5.0]);
        assert!(PopInstance::new(2, vec![Polynomial::zero(3)]).is_err());
        assert!(PopInstance::new(1, vec![]).unwrap().with_box(-1.0).is_err());
    }

    #[test]
    fn shape_mismatch_names_output_width() {
        let mut data = fixture::training_set();
        data.samples[0].y.push(1.0);
        data.samples[1].y.push(1.0);
        let err = build_pop(&fixture::network(), &data).unwrap_err().to_string();
        assert!(err.contains("m_3"), "{err}");
    }
}
