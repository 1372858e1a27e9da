//! Feedforward networks with learnable polynomial activations.
//!
//! Hidden layer `l` applies `p_l(t) = c_{l,d_l} t^{d_l} + ... + c_{l,1} t + c_{l,0}`
//! elementwise. The constant terms of layers `1..D-1` are normalized to one;
//! the free coefficients are laid out as
//! `(c_{1,1..d_1}, ..., c_{D-1,1..d_{D-1}}, c_{D,0}, c_{D,1..d_D})`.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::poly::{compose_polynomial, Polynomial};

/// Where the coefficient of `t^j` in a hidden layer's activation comes from.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum CoefficientSlot {
    /// Normalized constant term.
    Fixed(f64),
    /// Index into the free coefficient vector.
    Free(usize),
}

#[derive(Clone, Debug, PartialEq)]
pub struct NetworkSpec {
    dims: Vec<usize>,
    act_degrees: Vec<usize>,
    weights: Vec<DMatrix<f64>>,
}

impl NetworkSpec {
    /// `dims = (m_0, ..., m_{D+1})`, `act_degrees = (d_1, ..., d_D)` and
    /// `weights[l-1] = W_l` of shape `m_l x m_{l-1}`.
    pub fn new(dims: Vec<usize>, act_degrees: Vec<usize>, weights: Vec<DMatrix<f64>>) -> Result<Self> {
        let depth = act_degrees.len();
        if depth == 0 {
            return Err(Error::InvalidNetwork("at least one hidden layer is required".into()));
        }
        if dims.len() != depth + 2 {
            return Err(Error::InvalidNetwork(format!(
                "{} hidden layers need {} layer widths, got {}",
                depth,
                depth + 2,
                dims.len()
            )));
        }
        if let Some(l) = dims.iter().position(|&m| m == 0) {
            return Err(Error::InvalidNetwork(format!("layer width m_{l} is zero")));
        }
        if let Some(l) = act_degrees.iter().position(|&d| d == 0) {
            return Err(Error::InvalidNetwork(format!(
                "activation degree d_{} must be at least 1",
                l + 1
            )));
        }
        if weights.len() != depth + 1 {
            return Err(Error::InvalidNetwork(format!(
                "expected {} weight matrices, got {}",
                depth + 1,
                weights.len()
            )));
        }
        for (l, w) in weights.iter().enumerate() {
            if w.nrows() != dims[l + 1] || w.ncols() != dims[l] {
                return Err(Error::Shape(format!(
                    "W_{} must be {}x{} (m_{} x m_{}), got {}x{}",
                    l + 1,
                    dims[l + 1],
                    dims[l],
                    l + 1,
                    l,
                    w.nrows(),
                    w.ncols()
                )));
            }
        }
        Ok(NetworkSpec {
            dims,
            act_degrees,
            weights,
        })
    }

    /// Number of hidden layers `D`.
    pub fn depth(&self) -> usize {
        self.act_degrees.len()
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn act_degrees(&self) -> &[usize] {
        &self.act_degrees
    }

    pub fn weights(&self) -> &[DMatrix<f64>] {
        &self.weights
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.dims.last().unwrap()
    }

    /// Length of the free coefficient vector, `d_1 + ... + d_D + 1`.
    pub fn n_coefficients(&self) -> usize {
        self.act_degrees.iter().sum::<usize>() + 1
    }

    /// Per hidden layer, the source of each activation coefficient in
    /// ascending powers (`slots[l][j]` is the coefficient of `t^j`).
    pub fn coefficient_slots(&self) -> Vec<Vec<CoefficientSlot>> {
        let depth = self.depth();
        let mut next = 0;
        let mut slots = Vec::with_capacity(depth);
        for (l, &d) in self.act_degrees.iter().enumerate() {
            let mut layer = Vec::with_capacity(d + 1);
            if l + 1 < depth {
                layer.push(CoefficientSlot::Fixed(1.0));
            } else {
                layer.push(CoefficientSlot::Free(next));
                next += 1;
            }
            for _ in 1..=d {
                layer.push(CoefficientSlot::Free(next));
                next += 1;
            }
            slots.push(layer);
        }
        slots
    }

    /// Display names `c{l}{j}` for the free coefficients in vector order.
    pub fn coefficient_names(&self) -> Vec<String> {
        let mut names = vec![String::new(); self.n_coefficients()];
        for (l, layer) in self.coefficient_slots().iter().enumerate() {
            for (j, slot) in layer.iter().enumerate() {
                if let CoefficientSlot::Free(i) = slot {
                    names[*i] = if l + 1 < 10 && j < 10 {
                        format!("c{}{}", l + 1, j)
                    } else {
                        format!("c{}_{}", l + 1, j)
                    };
                }
            }
        }
        names
    }

    /// Expands a free coefficient vector into full per-layer coefficient
    /// lists (ascending powers), inserting the normalized constants.
    pub fn layer_coefficients(&self, c: &[f64]) -> Result<Vec<Vec<f64>>> {
        if c.len() != self.n_coefficients() {
            return Err(Error::DimensionMismatch {
                context: "coefficient vector",
                expected: self.n_coefficients(),
                found: c.len(),
            });
        }
        Ok(self
            .coefficient_slots()
            .iter()
            .map(|layer| {
                layer
                    .iter()
                    .map(|s| match *s {
                        CoefficientSlot::Fixed(v) => v,
                        CoefficientSlot::Free(i) => c[i],
                    })
                    .collect()
            })
            .collect())
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                context: "network input (m_0)",
                expected: self.input_dim(),
                found: x.len(),
            });
        }
        Ok(())
    }
}

fn horner(coeffs_ascending: &[f64], t: f64) -> f64 {
    coeffs_ascending.iter().rev().fold(0.0, |acc, &c| acc * t + c)
}

/// Evaluates the network with explicit per-layer activation coefficients
/// (ascending powers, constants included).
pub fn forward_with_layer_coefficients(net: &NetworkSpec, layers: &[Vec<f64>], x: &[f64]) -> Result<Vec<f64>> {
    net.check_input(x)?;
    if layers.len() != net.depth() {
        return Err(Error::DimensionMismatch {
            context: "per-layer coefficients",
            expected: net.depth(),
            found: layers.len(),
        });
    }
    let mut h = nalgebra::DVector::from_column_slice(x);
    for (w, coeffs) in net.weights.iter().zip(layers) {
        let v = w * &h;
        h = v.map(|t| horner(coeffs, t));
    }
    let out = net.weights.last().unwrap() * h;
    Ok(out.as_slice().to_vec())
}

/// `f(x; c)` for a free coefficient vector `c`.
pub fn numeric_forward(net: &NetworkSpec, c: &[f64], x: &[f64]) -> Result<Vec<f64>> {
    let layers = net.layer_coefficients(c)?;
    forward_with_layer_coefficients(net, &layers, x)
}

/// `f(x; .)` as polynomials in the free coefficients (one per output).
pub fn symbolic_forward(net: &NetworkSpec, x: &[f64]) -> Result<Vec<Polynomial>> {
    net.check_input(x)?;
    let nc = net.n_coefficients();
    let layer_coeffs: Vec<Vec<Polynomial>> = net
        .coefficient_slots()
        .iter()
        .map(|layer| {
            // Horner wants highest power first
            layer
                .iter()
                .rev()
                .map(|s| match *s {
                    CoefficientSlot::Fixed(v) => Polynomial::constant(nc, v),
                    CoefficientSlot::Free(i) => Polynomial::variable(nc, i),
                })
                .collect()
        })
        .collect();

    let mut h: Vec<Polynomial> = x.iter().map(|&v| Polynomial::constant(nc, v)).collect();
    for (w, coeffs) in net.weights.iter().zip(&layer_coeffs) {
        let v = linear_map(w, &h)?;
        h = v
            .iter()
            .map(|vi| compose_polynomial(coeffs, vi))
            .collect::<Result<_>>()?;
    }
    linear_map(net.weights.last().unwrap(), &h)
}

fn linear_map(w: &DMatrix<f64>, h: &[Polynomial]) -> Result<Vec<Polynomial>> {
    let n = h.first().map(Polynomial::n_vars).unwrap_or(0);
    (0..w.nrows())
        .map(|r| {
            let mut acc = Polynomial::zero(n);
            for (col, hp) in h.iter().enumerate() {
                acc.add_scaled(hp, w[(r, col)])?;
            }
            Ok(acc)
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseMode {
    /// A fresh noise vector for every sample.
    #[default]
    PerSample,
    /// One noise vector added to every sample.
    Shared,
}

/// How a synthetic training set was produced.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub c_true: Vec<f64>,
    pub seed: u64,
    pub noise_scale: f64,
    pub noise_mode: NoiseMode,
    pub noise: Vec<Vec<f64>>,
}

impl Provenance {
    /// `||(1/N) sum_i eps_i||_2`, the noise that survives averaging.
    pub fn mean_noise_norm(&self) -> f64 {
        let n = self.noise.len().max(1) as f64;
        let m = self.noise.first().map_or(0, Vec::len);
        let mut mean = vec![0.0; m];
        for e in &self.noise {
            for (acc, v) in mean.iter_mut().zip(e) {
                *acc += v / n;
            }
        }
        norm2(&mean)
    }

    /// `(1/N) sum_i ||eps_i||_2`.
    pub fn mean_sample_noise_norm(&self) -> f64 {
        let n = self.noise.len().max(1) as f64;
        self.noise.iter().map(|e| norm2(e)).sum::<f64>() / n
    }

    pub fn sample_noise_norms(&self) -> Vec<f64> {
        self.noise.iter().map(|e| norm2(e)).collect()
    }
}

pub(crate) fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainingSet {
    pub samples: Vec<Sample>,
    pub provenance: Option<Provenance>,
}

impl TrainingSet {
    pub fn new(samples: Vec<Sample>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidArgument("training set needs at least one sample".into()));
        }
        let (mx, my) = (samples[0].x.len(), samples[0].y.len());
        for (i, s) in samples.iter().enumerate() {
            if s.x.len() != mx || s.y.len() != my {
                return Err(Error::Shape(format!(
                    "sample {} has shape ({}, {}), expected ({mx}, {my})",
                    i + 1,
                    s.x.len(),
                    s.y.len()
                )));
            }
        }
        Ok(TrainingSet {
            samples,
            provenance: None,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Checks every sample against the network's input and output widths.
    pub fn check_shapes(&self, net: &NetworkSpec) -> Result<()> {
        for (i, s) in self.samples.iter().enumerate() {
            if s.x.len() != net.input_dim() {
                return Err(Error::Shape(format!(
                    "sample {} input has length {}, network input width m_0 = {}",
                    i + 1,
                    s.x.len(),
                    net.input_dim()
                )));
            }
            if s.y.len() != net.output_dim() {
                return Err(Error::Shape(format!(
                    "sample {} output has length {}, network output width m_{} = {}",
                    i + 1,
                    s.y.len(),
                    net.depth() + 1,
                    net.output_dim()
                )));
            }
        }
        Ok(())
    }
}

/// Scaling applied to i.i.d. uniform `[-1, 1]` weights.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum WeightScale {
    /// Divide layer `l` by `sqrt(m_{l-1})`.
    #[default]
    FanIn,
    /// Leave the uniform draws unscaled.
    Unit,
}

/// Weights i.i.d. uniform on `[-1, 1]`, scaled by `1/sqrt(m_{l-1})`.
pub fn random_network<R: Rng>(dims: &[usize], act_degrees: &[usize], rng: &mut R) -> Result<NetworkSpec> {
    random_network_scaled(dims, act_degrees, WeightScale::FanIn, rng)
}

pub fn random_network_scaled<R: Rng>(
    dims: &[usize],
    act_degrees: &[usize],
    scale: WeightScale,
    rng: &mut R,
) -> Result<NetworkSpec> {
    let unit = Uniform::new_inclusive(-1.0, 1.0).expect("valid range");
    let mut weights = Vec::new();
    if dims.len() == act_degrees.len() + 2 {
        for l in 1..dims.len() {
            let factor = match scale {
                WeightScale::FanIn => 1.0 / (dims[l - 1] as f64).sqrt(),
                WeightScale::Unit => 1.0,
            };
            weights.push(DMatrix::from_fn(dims[l], dims[l - 1], |_, _| factor * unit.sample(rng)));
        }
    }
    NetworkSpec::new(dims.to_vec(), act_degrees.to_vec(), weights)
}

/// Free coefficients i.i.d. uniform on `[-2, 2]`.
pub fn random_coefficients<R: Rng>(net: &NetworkSpec, rng: &mut R) -> Vec<f64> {
    let dist = Uniform::new_inclusive(-2.0, 2.0).expect("valid range");
    (0..net.n_coefficients()).map(|_| dist.sample(rng)).collect()
}

/// Draws inputs uniformly from `[-1, 1]^{m_0}` and labels them with
/// `f(x; c_true) + eps`, where `eps ~ noise_scale * N(0, I)`.
pub fn generate_with_coefficients<R: Rng>(
    net: &NetworkSpec,
    c_true: &[f64],
    samples: usize,
    noise_scale: f64,
    noise_mode: NoiseMode,
    seed: u64,
    rng: &mut R,
) -> Result<TrainingSet> {
    if samples == 0 {
        return Err(Error::InvalidArgument("sample count must be positive".into()));
    }
    if noise_scale.is_nan() || noise_scale < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "noise scale {noise_scale} must be nonnegative"
        )));
    }
    let layers = net.layer_coefficients(c_true)?;
    let unit = Uniform::new_inclusive(-1.0, 1.0).expect("valid range");
    let m_out = net.output_dim();
    let draw_noise = |rng: &mut R| -> Vec<f64> {
        (0..m_out)
            .map(|_| {
                let z: f64 = StandardNormal.sample(rng);
                noise_scale * z
            })
            .collect()
    };
    let shared = match noise_mode {
        NoiseMode::Shared => Some(draw_noise(rng)),
        NoiseMode::PerSample => None,
    };
    let mut out = Vec::with_capacity(samples);
    let mut noise = Vec::with_capacity(samples);
    for _ in 0..samples {
        let x: Vec<f64> = (0..net.input_dim()).map(|_| unit.sample(rng)).collect();
        let eps = match &shared {
            Some(e) => e.clone(),
            None => draw_noise(rng),
        };
        let mut y = forward_with_layer_coefficients(net, &layers, &x)?;
        for (yi, e) in y.iter_mut().zip(&eps) {
            *yi += e;
        }
        out.push(Sample { x, y });
        noise.push(eps);
    }
    let mut set = TrainingSet::new(out)?;
    set.provenance = Some(Provenance {
        c_true: c_true.to_vec(),
        seed,
        noise_scale,
        noise_mode,
        noise,
    });
    Ok(set)
}

/// Seeded synthetic data: draws `c_true` (uniform on `[-2, 2]`), then the
/// samples with per-sample noise.
pub fn generate_synthetic(net: &NetworkSpec, samples: usize, noise_scale: f64, seed: u64) -> Result<TrainingSet> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c_true = random_coefficients(net, &mut rng);
    generate_with_coefficients(net, &c_true, samples, noise_scale, NoiseMode::PerSample, seed, &mut rng)
}

/// For a two-hidden-layer net with linear activations, evaluates the output
/// at `(c10, c11, c20, c21)` and at `(tau c10, tau c11, c20, c21 / tau)`.
/// Both agree for every `tau != 0`, which is why `c10` can be fixed to one.
pub fn scale_equivalence_witness(
    net: &NetworkSpec,
    c_full: [f64; 4],
    tau: f64,
    x: &[f64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    if net.depth() != 2 || net.act_degrees() != [1, 1] {
        return Err(Error::InvalidArgument(
            "scale witness needs two hidden layers with linear activations".into(),
        ));
    }
    if tau == 0.0 {
        return Err(Error::InvalidArgument("tau must be nonzero".into()));
    }
    let [c10, c11, c20, c21] = c_full;
    let a = forward_with_layer_coefficients(net, &[vec![c10, c11], vec![c20, c21]], x)?;
    let b = forward_with_layer_coefficients(net, &[vec![tau * c10, tau * c11], vec![c20, c21 / tau]], x)?;
    Ok((a, b))
}
