//! Synthetic training experiments: instance generation, recovery metrics,
//! held-out residual analysis and parameter sweeps.

use std::fmt::Write as _;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hierarchy::{solve_hierarchy, HierarchyOptions, Outcome};
use crate::net::{
    generate_with_coefficients, numeric_forward, random_coefficients, random_network_scaled, NetworkSpec, NoiseMode,
    TrainingSet, WeightScale,
};
use crate::pop::build_pop;
use crate::sdp::SdpStatus;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    /// `(m_0, ..., m_{D+1})`.
    pub dims: Vec<usize>,
    /// `(d_1, ..., d_D)`.
    pub act_degrees: Vec<usize>,
    /// Training samples `N`.
    pub samples: usize,
    /// Noiseless held-out samples; zero skips residual analysis.
    pub test_samples: usize,
    pub noise_scale: f64,
    pub noise_mode: NoiseMode,
    pub weight_scale: WeightScale,
    pub seed: u64,
    /// Adds `R^2 - z_i^2 >= 0` for every variable.
    pub box_radius: Option<f64>,
    pub hierarchy: HierarchyOptions,
}

impl ExperimentConfig {
    pub fn new(dims: Vec<usize>, act_degrees: Vec<usize>) -> Self {
        ExperimentConfig {
            dims,
            act_degrees,
            samples: 20,
            test_samples: 0,
            noise_scale: 1e-2,
            noise_mode: NoiseMode::PerSample,
            weight_scale: WeightScale::FanIn,
            seed: 0,
            box_radius: None,
            hierarchy: HierarchyOptions::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.samples == 0 {
            return Err(Error::InvalidArgument("sample count must be positive".into()));
        }
        if self.noise_scale.is_nan() || self.noise_scale < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "noise scale {} must be nonnegative",
                self.noise_scale
            )));
        }
        if let Some(r) = self.box_radius {
            if r.is_nan() || r <= 0.0 {
                return Err(Error::InvalidArgument(format!("box radius {r} must be positive")));
            }
        }
        Ok(())
    }
}

/// A generated instance: network, training set (with provenance) and an
/// optional noiseless test set.
#[derive(Clone, Debug)]
pub struct Instance {
    pub net: NetworkSpec,
    pub c_true: Vec<f64>,
    pub train: TrainingSet,
    pub test: Option<TrainingSet>,
}

/// Draws the network, `c_true`, training and test data from one seeded stream.
pub fn generate_instance(cfg: &ExperimentConfig) -> Result<Instance> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let net = random_network_scaled(&cfg.dims, &cfg.act_degrees, cfg.weight_scale, &mut rng)?;
    let c_true = random_coefficients(&net, &mut rng);
    let train = generate_with_coefficients(
        &net,
        &c_true,
        cfg.samples,
        cfg.noise_scale,
        cfg.noise_mode,
        cfg.seed,
        &mut rng,
    )?;
    let test = if cfg.test_samples > 0 {
        Some(generate_with_coefficients(
            &net,
            &c_true,
            cfg.test_samples,
            0.0,
            NoiseMode::PerSample,
            cfg.seed,
            &mut rng,
        )?)
    } else {
        None
    };
    Ok(Instance {
        net,
        c_true,
        train,
        test,
    })
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseTimings {
    pub generation_secs: f64,
    pub symbolic_secs: f64,
    pub assembly_secs: f64,
    pub solve_secs: f64,
    pub refinement_secs: f64,
    pub extraction_secs: f64,
    pub total_secs: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrderSummary {
    pub k: usize,
    pub theta_mom: f64,
    pub theta_sos: f64,
    pub status: SdpStatus,
    pub flat: bool,
    pub rank: Option<usize>,
    pub certified: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseNorms {
    /// `||(1/N) sum_i eps_i||_2`, the RelErr denominator.
    pub mean_noise_norm: f64,
    /// `(1/N) sum_i ||eps_i||_2`.
    pub mean_sample_noise_norm: f64,
}

/// Least-squares line `value ~ a + slope * index`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrendFit {
    pub intercept: f64,
    pub slope: f64,
    pub slope_stderr: f64,
}

impl TrendFit {
    /// `|slope| / stderr`, infinite for a nonzero slope with zero error.
    pub fn t_ratio(&self) -> f64 {
        if self.slope_stderr > 0.0 {
            self.slope.abs() / self.slope_stderr
        } else if self.slope == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    /// `eps_i = y'_i - y_i` per test sample.
    pub residuals: Vec<Vec<f64>>,
    pub norms: Vec<f64>,
    /// `(1/N) sum_i ||eps_i||_2^2`.
    pub mse: f64,
    pub rmse: f64,
    /// Fit of every component `eps_ij` against the sample index `i`.
    pub trend: TrendFit,
}

impl ResidualReport {
    /// Columns `i, j, eps_ij` with 1-based indices.
    pub fn components_csv(&self) -> String {
        let mut out = String::from("i,j,residual\n");
        for (i, r) in self.residuals.iter().enumerate() {
            for (j, v) in r.iter().enumerate() {
                let _ = writeln!(out, "{},{},{:e}", i + 1, j + 1, v);
            }
        }
        out
    }

    /// Columns `i, ||eps_i||_2`.
    pub fn norms_csv(&self) -> String {
        let mut out = String::from("i,norm\n");
        for (i, v) in self.norms.iter().enumerate() {
            let _ = writeln!(out, "{},{:e}", i + 1, v);
        }
        out
    }
}

/// Ordinary least squares of `ys` on `xs`. Needs at least three points for a
/// standard error; with fewer the error is reported as zero.
pub fn linear_trend(xs: &[f64], ys: &[f64]) -> TrendFit {
    let n = xs.len().min(ys.len());
    if n == 0 {
        return TrendFit {
            intercept: 0.0,
            slope: 0.0,
            slope_stderr: 0.0,
        };
    }
    let nf = n as f64;
    let mx = xs[..n].iter().sum::<f64>() / nf;
    let my = ys[..n].iter().sum::<f64>() / nf;
    let sxx: f64 = xs[..n].iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs[..n].iter().zip(&ys[..n]).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = my - slope * mx;
    let slope_stderr = if n > 2 && sxx > 0.0 {
        let ssr: f64 = xs[..n]
            .iter()
            .zip(&ys[..n])
            .map(|(x, y)| (y - intercept - slope * x).powi(2))
            .sum();
        (ssr / (nf - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    TrendFit {
        intercept,
        slope,
        slope_stderr,
    }
}

/// Predicts every test sample with `c_pred` and compares against its label.
pub fn residual_analysis(net: &NetworkSpec, c_pred: &[f64], test: &TrainingSet) -> Result<ResidualReport> {
    test.check_shapes(net)?;
    let mut residuals = Vec::with_capacity(test.len());
    for s in &test.samples {
        let pred = numeric_forward(net, c_pred, &s.x)?;
        residuals.push(pred.iter().zip(&s.y).map(|(p, y)| p - y).collect::<Vec<f64>>());
    }
    Ok(residual_report(residuals))
}

/// Builds the report from precomputed residual vectors.
pub fn residual_report(residuals: Vec<Vec<f64>>) -> ResidualReport {
    let norms: Vec<f64> = residuals
        .iter()
        .map(|r| r.iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect();
    let n = residuals.len().max(1) as f64;
    let mse = norms.iter().map(|v| v * v).sum::<f64>() / n;
    let (xs, ys): (Vec<f64>, Vec<f64>) = residuals
        .iter()
        .enumerate()
        .flat_map(|(i, r)| r.iter().map(move |&v| ((i + 1) as f64, v)))
        .unzip();
    ResidualReport {
        trend: linear_trend(&xs, &ys),
        residuals,
        norms,
        mse,
        rmse: mse.sqrt(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub c_true: Vec<f64>,
    /// Coefficients of the reported point, `theta` excluded.
    pub c_pred: Option<Vec<f64>>,
    pub theta: Option<f64>,
    pub abs_err: Option<f64>,
    pub rel_err: Option<f64>,
    pub noise: NoiseNorms,
    pub k0: Option<usize>,
    pub orders: Vec<OrderSummary>,
    pub outcome: Option<Outcome>,
    pub certified: bool,
    pub test: Option<ResidualReport>,
    /// Failure message when the pipeline did not produce a result.
    pub error: Option<String>,
    pub timings: PhaseTimings,
}

fn l2_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Generates an instance, trains it with the hierarchy and scores the result.
/// Generation errors are returned; pipeline failures are recorded in the report.
pub fn run_training_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let start = Instant::now();
    let inst = generate_instance(cfg)?;
    let mut timings = PhaseTimings {
        generation_secs: start.elapsed().as_secs_f64(),
        ..PhaseTimings::default()
    };
    let prov = inst
        .train
        .provenance
        .as_ref()
        .expect("synthetic data carries provenance");
    let noise = NoiseNorms {
        mean_noise_norm: prov.mean_noise_norm(),
        mean_sample_noise_norm: prov.mean_sample_noise_norm(),
    };
    let mut report = ExperimentReport {
        config: cfg.clone(),
        c_true: inst.c_true.clone(),
        c_pred: None,
        theta: None,
        abs_err: None,
        rel_err: None,
        noise,
        k0: None,
        orders: Vec::new(),
        outcome: None,
        certified: false,
        test: None,
        error: None,
        timings: PhaseTimings::default(),
    };

    let t = Instant::now();
    let pop = build_pop(&inst.net, &inst.train).and_then(|p| match cfg.box_radius {
        Some(r) => p.with_box(r),
        None => Ok(p),
    });
    timings.symbolic_secs = t.elapsed().as_secs_f64();
    let result = pop.and_then(|p| solve_hierarchy(&p, &cfg.hierarchy));
    match result {
        Ok(res) => {
            for o in &res.orders {
                timings.assembly_secs += o.timings.assembly_secs;
                timings.solve_secs += o.timings.solve_secs;
                timings.refinement_secs += o.timings.refinement_secs;
                timings.extraction_secs += o.timings.extraction_secs;
            }
            report.k0 = Some(res.k0);
            report.orders = res
                .orders
                .iter()
                .map(|o| OrderSummary {
                    k: o.k,
                    theta_mom: o.theta_mom,
                    theta_sos: o.theta_sos,
                    status: o.status,
                    flat: o.flat.holds,
                    rank: o.flat.rank,
                    certified: o.certified,
                })
                .collect();
            report.certified = res.outcome.is_certified();
            if let Some(z) = res.outcome.point() {
                let n = inst.c_true.len();
                let c_pred = z[..n].to_vec();
                let abs = l2_distance(&inst.c_true, &c_pred);
                report.abs_err = Some(abs);
                report.rel_err = Some(abs / report.noise.mean_noise_norm);
                report.theta = Some(z[n]);
                if let Some(test) = &inst.test {
                    match residual_analysis(&inst.net, &c_pred, test) {
                        Ok(r) => report.test = Some(r),
                        Err(e) => report.error = Some(e.to_string()),
                    }
                }
                report.c_pred = Some(c_pred);
            }
            report.outcome = Some(res.outcome);
        }
        Err(e) => report.error = Some(e.to_string()),
    }
    timings.total_secs = start.elapsed().as_secs_f64();
    report.timings = timings;
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub samples: usize,
    pub dims: Vec<usize>,
    pub seed: u64,
    pub abs_err: Option<f64>,
    pub rel_err: Option<f64>,
    pub time_secs: f64,
    /// The RelErr denominator.
    pub noise_norm: Option<f64>,
    pub certified: bool,
    pub error: Option<String>,
}

impl SweepRow {
    fn from_report(cfg: &ExperimentConfig, report: &Result<ExperimentReport>) -> Self {
        let mut row = SweepRow {
            samples: cfg.samples,
            dims: cfg.dims.clone(),
            seed: cfg.seed,
            abs_err: None,
            rel_err: None,
            time_secs: 0.0,
            noise_norm: None,
            certified: false,
            error: None,
        };
        match report {
            Ok(r) => {
                row.abs_err = r.abs_err;
                row.rel_err = r.rel_err;
                row.time_secs = r.timings.total_secs;
                row.noise_norm = Some(r.noise.mean_noise_norm);
                row.certified = r.certified;
                row.error = r.error.clone();
            }
            Err(e) => row.error = Some(e.to_string()),
        }
        row
    }

    /// `(N, m_0, ..., m_{D+1})`.
    pub fn dims_label(&self) -> String {
        let parts: Vec<String> = std::iter::once(self.samples)
            .chain(self.dims.iter().copied())
            .map(|v| v.to_string())
            .collect();
        format!("({})", parts.join(", "))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.4e}"))
}

impl SweepTable {
    pub const COLUMNS: [&'static str; 5] = ["dims", "AbsErr", "RelErr", "Time", "||eps||_2"];

    pub fn to_csv(&self) -> String {
        let mut out = String::from("dims,abs_err,rel_err,time_secs,noise_norm,seed,certified,error\n");
        for r in &self.rows {
            let opt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:e}"));
            let error = r.error.as_deref().unwrap_or("").replace('"', "'");
            let _ = writeln!(
                out,
                "\"{}\",{},{},{:.3},{},{},{},\"{}\"",
                r.dims_label(),
                opt(r.abs_err),
                opt(r.rel_err),
                r.time_secs,
                opt(r.noise_norm),
                r.seed,
                r.certified,
                error
            );
        }
        out
    }

    pub fn to_text(&self) -> String {
        let mut cells: Vec<[String; 5]> = vec![Self::COLUMNS.map(String::from)];
        for r in &self.rows {
            cells.push([
                r.dims_label(),
                fmt_opt(r.abs_err),
                fmt_opt(r.rel_err),
                format!("{:.3}s", r.time_secs),
                fmt_opt(r.noise_norm),
            ]);
        }
        let widths: Vec<usize> = (0..5)
            .map(|c| cells.iter().map(|row| row[c].len()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        for (i, row) in cells.iter().enumerate() {
            let line: Vec<String> = row.iter().zip(&widths).map(|(s, w)| format!("{s:<w$}")).collect();
            let _ = writeln!(out, "{}", line.join("  ").trim_end());
            if i == 0 {
                let _ = writeln!(
                    out,
                    "{}",
                    "-".repeat(widths.iter().sum::<usize>() + 2 * (widths.len() - 1))
                );
            }
        }
        for r in &self.rows {
            if let Some(e) = &r.error {
                let _ = writeln!(out, "{} seed {}: {e}", r.dims_label(), r.seed);
            }
        }
        out
    }
}

/// Runs every config on up to `workers` threads. Reports come back in input
/// order; a failing row records its error and the sweep continues.
pub fn sweep_reports(cfgs: &[ExperimentConfig], workers: usize) -> Vec<Result<ExperimentReport>> {
    let slots: Vec<Mutex<Option<Result<ExperimentReport>>>> = cfgs.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let workers = workers.clamp(1, cfgs.len().max(1));
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= cfgs.len() {
                    break;
                }
                let report = run_training_experiment(&cfgs[i]);
                *slots[i].lock().expect("slot lock") = Some(report);
            });
        }
    });
    slots
        .into_iter()
        .map(|m| m.into_inner().expect("slot lock").expect("every slot is filled"))
        .collect()
}

pub fn sweep(cfgs: &[ExperimentConfig], workers: usize) -> Result<SweepTable> {
    if cfgs.is_empty() {
        return Err(Error::InvalidArgument("sweep needs at least one config".into()));
    }
    let reports = sweep_reports(cfgs, workers);
    Ok(SweepTable {
        rows: cfgs
            .iter()
            .zip(&reports)
            .map(|(c, r)| SweepRow::from_report(c, r))
            .collect(),
    })
}

/// Activation families used by the built-in experiment presets.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    /// Two hidden layers, quadratic activations.
    Quadratic,
    /// Two hidden layers, quadratic then cubic.
    QuadraticCubic,
    /// Three hidden layers, linear activations.
    Linear3,
    /// Three hidden layers, quadratic then linear then linear.
    QuadraticLinear2,
    /// Two hidden layers, cubic then quadratic.
    CubicQuadratic,
}

impl Family {
    pub const ALL: [Family; 5] = [
        Family::Quadratic,
        Family::QuadraticCubic,
        Family::Linear3,
        Family::QuadraticLinear2,
        Family::CubicQuadratic,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Family::Quadratic => "quadratic",
            Family::QuadraticCubic => "quadratic-cubic",
            Family::Linear3 => "linear3",
            Family::QuadraticLinear2 => "quadratic-linear2",
            Family::CubicQuadratic => "cubic-quadratic",
        }
    }

    pub fn parse(name: &str) -> Option<Family> {
        Family::ALL.into_iter().find(|f| f.name() == name)
    }

    pub fn act_degrees(self) -> Vec<usize> {
        match self {
            Family::Quadratic => vec![2, 2],
            Family::QuadraticCubic => vec![2, 3],
            Family::Linear3 => vec![1, 1, 1],
            Family::QuadraticLinear2 => vec![2, 1, 1],
            Family::CubicQuadratic => vec![3, 2],
        }
    }

    /// Noiseless preset: fan-in scaled weights, widths 5 to 8, `N = 20`.
    /// The last hidden layer is wide enough to identify every coefficient.
    pub fn noiseless_config(self, seed: u64) -> ExperimentConfig {
        let dims = match self.act_degrees().len() {
            2 => vec![5, 5, 8, 8],
            _ => vec![5, 5, 5, 8, 8],
        };
        let mut cfg = ExperimentConfig::new(dims, self.act_degrees());
        cfg.noise_scale = 0.0;
        cfg.seed = seed;
        cfg.hierarchy.k_max = Some(2);
        cfg
    }

    /// Noisy preset at noise `1e-2`: unit-scale weights, hidden widths 10 and
    /// 30 outputs, `N = 20`, 100 noiseless test samples. The relaxation stops
    /// at its minimum order.
    pub fn noisy_config(self, seed: u64) -> ExperimentConfig {
        let dims = match self.act_degrees().len() {
            2 => vec![10, 10, 10, 30],
            _ => vec![10, 10, 10, 10, 30],
        };
        let mut cfg = ExperimentConfig::new(dims, self.act_degrees());
        cfg.noise_scale = 1e-2;
        cfg.weight_scale = WeightScale::Unit;
        cfg.seed = seed;
        cfg.test_samples = 100;
        cfg.hierarchy.k_max = Some(2);
        cfg
    }
}
