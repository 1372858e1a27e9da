use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use momentnet::experiments::{
    generate_instance, residual_analysis, run_training_experiment, sweep_reports, ExperimentConfig, ExperimentReport,
    Family, ResidualReport, SweepRow, SweepTable,
};
use momentnet::hierarchy::{solve_hierarchy, HierarchyOptions, HierarchyResult, Outcome};
use momentnet::io::{self, CoefficientsFile, ProvenanceSidecar};
use momentnet::moment::{assemble_relaxation, export_sdpa};
use momentnet::net::{NetworkSpec, NoiseMode, TrainingSet, WeightScale};
use momentnet::pop::{build_pop, PopInstance};
use momentnet::{fixture, Error};

const EXIT_CERTIFIED: u8 = 0;
const EXIT_MISMATCH: u8 = 1;
const EXIT_UNCERTIFIED: u8 = 2;
const EXIT_SOLVER: u8 = 3;
const EXIT_USAGE: u8 = 64;
const EXIT_INPUT: u8 = 65;

#[derive(Parser)]
#[command(
    name = "momentnet",
    version,
    about = "Globally train polynomial-activation networks with moment-SOS relaxations"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Print progress to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the built-in two-hidden-layer example with flat-truncation certification.
    Example {
        #[command(flatten)]
        solve: SolveFlags,
        #[command(flatten)]
        output: OutputFlags,
    },
    /// Train activation coefficients for a network and data set read from files.
    Solve {
        #[arg(long)]
        network: PathBuf,
        /// JSON or CSV (chosen by extension).
        #[arg(long)]
        data: PathBuf,
        #[command(flatten)]
        solve: SolveFlags,
        #[command(flatten)]
        output: OutputFlags,
    },
    /// Generate a synthetic instance, write it out and (unless --no-solve) train it.
    Synth {
        #[command(flatten)]
        instance: InstanceFlags,
        /// Only write the instance files.
        #[arg(long)]
        no_solve: bool,
        #[command(flatten)]
        solve: SolveFlags,
        #[command(flatten)]
        output: OutputFlags,
    },
    /// Run one synthetic experiment per seed and tabulate the errors.
    Sweep {
        #[command(flatten)]
        instance: InstanceFlags,
        /// Seeds as a range `a..b` or a comma list.
        #[arg(long, default_value = "0..5")]
        seeds: String,
        /// Worker threads.
        #[arg(long, default_value_t = 1)]
        workers: usize,
        #[command(flatten)]
        solve: SolveFlags,
        #[command(flatten)]
        output: OutputFlags,
    },
    /// Write the order-k moment relaxation in SDPA sparse format.
    ExportSdpa {
        /// Use the built-in example instead of --network/--data.
        #[arg(long, conflicts_with_all = ["network", "data"])]
        example: bool,
        #[arg(long, required_unless_present = "example")]
        network: Option<PathBuf>,
        #[arg(long, required_unless_present = "example")]
        data: Option<PathBuf>,
        /// Relaxation order.
        #[arg(long)]
        k: usize,
        #[arg(long = "box", value_name = "R")]
        box_radius: Option<f64>,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate learned coefficients on a (noiseless) test set.
    Residuals {
        #[arg(long)]
        network: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Coefficients file written by `solve` or `synth`.
        #[arg(long)]
        coefficients: PathBuf,
        #[command(flatten)]
        output: OutputFlags,
    },
}

#[derive(Args, Clone)]
struct SolveFlags {
    /// Highest relaxation order (default k0 + 2).
    #[arg(long)]
    k_max: Option<usize>,
    #[arg(long, default_value_t = 1e-6)]
    rank_tol: f64,
    #[arg(long, default_value_t = 1e-6)]
    cert_tol: f64,
    /// Add R^2 - z_i^2 >= 0 for every variable.
    #[arg(long = "box", value_name = "R")]
    box_radius: Option<f64>,
    /// Certify only through flat truncation with rank one.
    #[arg(long)]
    flat_only: bool,
    /// Skip local refinement of extracted points.
    #[arg(long)]
    no_polish: bool,
    /// Print interior-point iterations to stderr.
    #[arg(long)]
    trace: bool,
}

impl SolveFlags {
    fn options(&self) -> HierarchyOptions {
        let mut opts = HierarchyOptions {
            k_max: self.k_max,
            rank_tol: self.rank_tol,
            cert_tol: self.cert_tol,
            polish: !self.no_polish,
            bound_gap_certification: !self.flat_only,
            ..HierarchyOptions::default()
        };
        opts.solver.trace = self.trace;
        opts
    }

    fn validate(&self) -> Result<(), Failure> {
        if !(self.rank_tol > 0.0 && self.rank_tol < 1.0) {
            return Err(Failure::usage(format!(
                "--rank-tol {} must lie in (0, 1)",
                self.rank_tol
            )));
        }
        if self.cert_tol.is_nan() || self.cert_tol < 0.0 {
            return Err(Failure::usage(format!(
                "--cert-tol {} must be nonnegative",
                self.cert_tol
            )));
        }
        if let Some(r) = self.box_radius {
            if r.is_nan() || r <= 0.0 {
                return Err(Failure::usage(format!("--box {r} must be positive")));
            }
        }
        Ok(())
    }
}

#[derive(Args, Clone)]
struct InstanceFlags {
    /// Preset family: quadratic, quadratic-cubic, linear3, quadratic-linear2, cubic-quadratic.
    #[arg(long)]
    family: Option<String>,
    /// Use the family's noiseless preset instead of the noisy one.
    #[arg(long, requires = "family")]
    noiseless: bool,
    /// Layer widths m_0,...,m_{D+1} (overrides the preset).
    #[arg(long, value_delimiter = ',')]
    dims: Option<Vec<usize>>,
    /// Activation degrees d_1,...,d_D (overrides the preset).
    #[arg(long, value_delimiter = ',')]
    degrees: Option<Vec<usize>>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    test_samples: Option<usize>,
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long)]
    noise_mode: Option<NoiseModeArg>,
    #[arg(long)]
    weights: Option<WeightArg>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Clone, Copy, ValueEnum)]
enum NoiseModeArg {
    PerSample,
    Shared,
}

#[derive(Clone, Copy, ValueEnum)]
enum WeightArg {
    FanIn,
    Unit,
}

impl InstanceFlags {
    fn config(&self, seed: u64, solve: &SolveFlags) -> Result<ExperimentConfig, Failure> {
        let mut cfg = match &self.family {
            Some(name) => {
                let family = Family::parse(name).ok_or_else(|| {
                    let names: Vec<&str> = Family::ALL.iter().map(|f| f.name()).collect();
                    Failure::usage(format!("unknown family `{name}`; expected one of {}", names.join(", ")))
                })?;
                if self.noiseless {
                    family.noiseless_config(seed)
                } else {
                    family.noisy_config(seed)
                }
            }
            None => {
                let (Some(dims), Some(degrees)) = (&self.dims, &self.degrees) else {
                    return Err(Failure::usage(
                        "either --family or both --dims and --degrees are required",
                    ));
                };
                let mut cfg = ExperimentConfig::new(dims.clone(), degrees.clone());
                cfg.hierarchy.k_max = None;
                cfg
            }
        };
        if let Some(d) = &self.dims {
            cfg.dims = d.clone();
        }
        if let Some(d) = &self.degrees {
            cfg.act_degrees = d.clone();
        }
        if let Some(n) = self.samples {
            cfg.samples = n;
        }
        if let Some(n) = self.test_samples {
            cfg.test_samples = n;
        }
        if let Some(s) = self.noise {
            cfg.noise_scale = s;
        }
        if let Some(m) = self.noise_mode {
            cfg.noise_mode = match m {
                NoiseModeArg::PerSample => NoiseMode::PerSample,
                NoiseModeArg::Shared => NoiseMode::Shared,
            };
        }
        if let Some(w) = self.weights {
            cfg.weight_scale = match w {
                WeightArg::FanIn => WeightScale::FanIn,
                WeightArg::Unit => WeightScale::Unit,
            };
        }
        cfg.seed = seed;
        cfg.box_radius = solve.box_radius;
        let preset_k_max = cfg.hierarchy.k_max;
        cfg.hierarchy = solve.options();
        cfg.hierarchy.k_max = solve.k_max.or(preset_k_max);
        cfg.validate().map_err(Failure::from)?;
        Ok(cfg)
    }
}

#[derive(Args, Clone)]
struct OutputFlags {
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
    /// Directory for report files.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
    Text,
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Failure {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Parse { .. }
            | Error::Shape(_)
            | Error::InvalidNetwork(_)
            | Error::DimensionMismatch { .. }
            | Error::EmptyCoefficients
            | Error::Io(_) => EXIT_INPUT,
            Error::InvalidArgument(_) | Error::OrderTooLow { .. } => EXIT_USAGE,
            Error::Solver { .. } | Error::ExtractionUnsupported { .. } => EXIT_SOLVER,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

type CmdResult = Result<u8, Failure>;

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<(), Failure> {
    std::fs::create_dir_all(dir).map_err(|e| Failure {
        code: EXIT_INPUT,
        message: format!("cannot create {}: {e}", dir.display()),
    })?;
    let path = dir.join(name);
    std::fs::write(&path, contents).map_err(|e| Failure {
        code: EXIT_INPUT,
        message: format!("cannot write {}: {e}", path.display()),
    })
}

fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("reports serialize") + "\n"
}

#[derive(Serialize)]
struct NetworkSummary<'a> {
    dims: &'a [usize],
    act_degrees: &'a [usize],
}

#[derive(Serialize)]
struct SolveReport<'a> {
    network: NetworkSummary<'a>,
    samples: usize,
    coefficient_names: Vec<String>,
    coefficients: Option<Vec<f64>>,
    theta: Option<f64>,
    certified: bool,
    result: &'a HierarchyResult,
    total_secs: f64,
}

fn fmt_point(z: &[f64]) -> String {
    let parts: Vec<String> = z.iter().map(|v| format!("{v:.4}")).collect();
    format!("({})", parts.join(", "))
}

fn orders_csv(result: &HierarchyResult) -> String {
    let mut out = String::from("k,theta_mom,theta_sos,status,iterations,flat,rank,refined,certified,solve_secs\n");
    for o in &result.orders {
        let _ = writeln!(
            out,
            "{},{:e},{:e},{:?},{},{},{},{},{},{:.3}",
            o.k,
            o.theta_mom,
            o.theta_sos,
            o.status,
            o.iterations,
            o.flat.holds,
            o.flat.rank.map_or(String::new(), |r| r.to_string()),
            o.refined,
            o.certified,
            o.timings.solve_secs
        );
    }
    out
}

fn result_text(result: &HierarchyResult, names: &[String]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "k0 = {}", result.k0);
    for o in &result.orders {
        let last = o.flat.checks.last();
        let ranks = last.map_or(String::new(), |c| {
            format!(
                " (rank M_{} = {}, rank M_{} = {})",
                c.d,
                c.rank,
                c.d - result.k0,
                c.rank_lower
            )
        });
        let verdict = if o.flat.holds { "holds" } else { "FAILS" };
        let _ = writeln!(
            out,
            "k={}: theta_mom = {:.6e}, theta_sos = {:.6e}, {:?} after {} iterations; flat truncation {verdict}{ranks}",
            o.k, o.theta_mom, o.theta_sos, o.status, o.iterations
        );
    }
    match &result.outcome {
        Outcome::CertifiedGlobal {
            order, z, theta, route, ..
        } => {
            let _ = writeln!(out, "certified global minimizer at k={order} via {route:?}");
            let _ = writeln!(out, "c* = {}, theta* = {theta:.3e}", fmt_point(&z[..z.len() - 1]));
        }
        Outcome::CandidateUncertified {
            order,
            z,
            theta,
            gap,
            infeasibility,
        } => {
            let _ = writeln!(
                out,
                "uncertified candidate at k={order}: gap {gap:.3e}, infeasibility {infeasibility:.3e}"
            );
            let _ = writeln!(out, "c = {}, theta = {theta:.3e}", fmt_point(&z[..z.len() - 1]));
        }
        Outcome::Exhausted { reason } => {
            let _ = writeln!(out, "no candidate: {reason}");
        }
    }
    let _ = writeln!(out, "coefficients: {}", names.join(", "));
    out
}

fn outcome_code(outcome: &Outcome) -> u8 {
    match outcome {
        Outcome::CertifiedGlobal { .. } => EXIT_CERTIFIED,
        Outcome::CandidateUncertified { .. } => EXIT_UNCERTIFIED,
        Outcome::Exhausted { .. } => EXIT_SOLVER,
    }
}

fn coefficients_file(net: &NetworkSpec, result: &HierarchyResult) -> Option<CoefficientsFile> {
    result.outcome.point().map(|z| CoefficientsFile {
        names: net.coefficient_names(),
        values: z[..z.len() - 1].to_vec(),
        theta: z.last().copied(),
        certified: result.outcome.is_certified(),
    })
}

fn build(net: &NetworkSpec, data: &TrainingSet, box_radius: Option<f64>) -> Result<PopInstance, Failure> {
    let pop = build_pop(net, data)?;
    Ok(match box_radius {
        Some(r) => pop.with_box(r)?,
        None => pop,
    })
}

/// Solves, prints in the requested format and writes report files.
fn solve_and_report(
    net: &NetworkSpec,
    data: &TrainingSet,
    solve: &SolveFlags,
    opts: &HierarchyOptions,
    output: &OutputFlags,
    verbose: bool,
) -> Result<HierarchyResult, Failure> {
    let start = Instant::now();
    let pop = build(net, data, solve.box_radius)?;
    if verbose {
        eprintln!(
            "POP: {} variables, {} constraints, k0 = {}",
            pop.n_vars(),
            pop.constraints().len(),
            pop.k0()
        );
    }
    let result = solve_hierarchy(&pop, opts)?;
    let coefficients = coefficients_file(net, &result);
    let report = SolveReport {
        network: NetworkSummary {
            dims: net.dims(),
            act_degrees: net.act_degrees(),
        },
        samples: data.len(),
        coefficient_names: net.coefficient_names(),
        coefficients: coefficients.as_ref().map(|c| c.values.clone()),
        theta: coefficients.as_ref().and_then(|c| c.theta),
        certified: result.outcome.is_certified(),
        result: &result,
        total_secs: start.elapsed().as_secs_f64(),
    };
    match output.format {
        Format::Json => print!("{}", to_json(&report)),
        Format::Csv => print!("{}", orders_csv(&result)),
        Format::Text => print!("{}", result_text(&result, &net.coefficient_names())),
    }
    if let Some(dir) = &output.out {
        write_file(dir, "report.json", &to_json(&report))?;
        if let Some(c) = &coefficients {
            write_file(dir, "coefficients.json", &to_json(c))?;
        }
    }
    Ok(result)
}

fn cmd_example(solve: &SolveFlags, output: &OutputFlags, verbose: bool) -> CmdResult {
    solve.validate()?;
    let mut opts = solve.options();
    opts.bound_gap_certification = false;
    let result = solve_and_report(
        &fixture::network(),
        &fixture::training_set(),
        solve,
        &opts,
        output,
        verbose,
    )?;
    let code = outcome_code(&result.outcome);
    if code != EXIT_CERTIFIED {
        return Ok(code);
    }
    let z = result.outcome.point().expect("certified outcome has a point");
    let matches = z.iter().zip(fixture::C_STAR).all(|(a, b)| (a - b).abs() <= 1e-5);
    if !matches {
        eprintln!("certified point {} differs from {:?}", fmt_point(z), fixture::C_STAR);
        return Ok(EXIT_MISMATCH);
    }
    Ok(EXIT_CERTIFIED)
}

fn cmd_solve(network: &Path, data: &Path, solve: &SolveFlags, output: &OutputFlags, verbose: bool) -> CmdResult {
    solve.validate()?;
    let net = io::read_network(network)?;
    let data = io::read_data(data)?;
    data.check_shapes(&net)?;
    let result = solve_and_report(&net, &data, solve, &solve.options(), output, verbose)?;
    Ok(outcome_code(&result.outcome))
}

fn report_text(report: &ExperimentReport) -> String {
    let mut out = String::new();
    let row = SweepTable {
        rows: vec![sweep_row(report)],
    };
    out.push_str(&row.to_text());
    for o in &report.orders {
        let _ = writeln!(
            out,
            "k={}: theta_mom = {:.6e}, {:?}, flat {}",
            o.k,
            o.theta_mom,
            o.status,
            if o.flat { "holds" } else { "fails" }
        );
    }
    let _ = writeln!(out, "certified: {}", report.certified);
    if let Some(t) = &report.test {
        let _ = writeln!(
            out,
            "test: MSE = {:.4e}, RMSE = {:.4e}, trend slope {:.3e} +/- {:.3e}",
            t.mse, t.rmse, t.trend.slope, t.trend.slope_stderr
        );
    }
    if let Some(e) = &report.error {
        let _ = writeln!(out, "error: {e}");
    }
    out
}

fn sweep_row(report: &ExperimentReport) -> SweepRow {
    SweepRow {
        samples: report.config.samples,
        dims: report.config.dims.clone(),
        seed: report.config.seed,
        abs_err: report.abs_err,
        rel_err: report.rel_err,
        time_secs: report.timings.total_secs,
        noise_norm: Some(report.noise.mean_noise_norm),
        certified: report.certified,
        error: report.error.clone(),
    }
}

fn report_code(report: &ExperimentReport) -> u8 {
    match &report.outcome {
        Some(o) => outcome_code(o),
        None => EXIT_SOLVER,
    }
}

fn write_residual_files(dir: &Path, rep: &ResidualReport) -> Result<(), Failure> {
    write_file(dir, "residuals.csv", &rep.components_csv())?;
    write_file(dir, "residual_norms.csv", &rep.norms_csv())
}

fn cmd_synth(
    instance: &InstanceFlags,
    no_solve: bool,
    solve: &SolveFlags,
    output: &OutputFlags,
    verbose: bool,
) -> CmdResult {
    solve.validate()?;
    let cfg = instance.config(instance.seed, solve)?;
    let inst = generate_instance(&cfg)?;
    if let Some(dir) = &output.out {
        write_file(dir, "network.json", &(io::network_to_json(&inst.net) + "\n"))?;
        write_file(dir, "data.json", &(io::data_to_json(&inst.train) + "\n"))?;
        let prov = inst
            .train
            .provenance
            .as_ref()
            .expect("synthetic data carries provenance");
        write_file(dir, "provenance.json", &to_json(&ProvenanceSidecar::from(prov)))?;
        if let Some(test) = &inst.test {
            write_file(dir, "test.json", &(io::data_to_json(test) + "\n"))?;
        }
        write_file(dir, "config.json", &to_json(&cfg))?;
    }
    if no_solve {
        if verbose {
            eprintln!("wrote instance with {} coefficients", inst.c_true.len());
        }
        return Ok(EXIT_CERTIFIED);
    }
    let report = run_training_experiment(&cfg)?;
    match output.format {
        Format::Json => print!("{}", to_json(&report)),
        Format::Csv => print!(
            "{}",
            SweepTable {
                rows: vec![sweep_row(&report)]
            }
            .to_csv()
        ),
        Format::Text => print!("{}", report_text(&report)),
    }
    if let Some(dir) = &output.out {
        write_file(dir, "report.json", &to_json(&report))?;
        if let Some(values) = &report.c_pred {
            let coefficients = CoefficientsFile {
                names: inst.net.coefficient_names(),
                values: values.clone(),
                theta: report.theta,
                certified: report.certified,
            };
            write_file(dir, "coefficients.json", &to_json(&coefficients))?;
        }
        if let Some(t) = &report.test {
            write_residual_files(dir, t)?;
        }
    }
    Ok(report_code(&report))
}

fn parse_seeds(spec: &str) -> Result<Vec<u64>, Failure> {
    let bad = || Failure::usage(format!("--seeds `{spec}` must be a range a..b or a comma list"));
    let seeds: Vec<u64> = if let Some((a, b)) = spec.split_once("..") {
        let a: u64 = a.trim().parse().map_err(|_| bad())?;
        let b: u64 = b.trim().parse().map_err(|_| bad())?;
        (a..b).collect()
    } else {
        spec.split(',')
            .map(|s| s.trim().parse().map_err(|_| bad()))
            .collect::<Result<_, _>>()?
    };
    if seeds.is_empty() {
        return Err(bad());
    }
    Ok(seeds)
}

#[derive(Serialize)]
struct SweepOutput {
    table: SweepTable,
    reports: Vec<Option<ExperimentReport>>,
}

fn cmd_sweep(
    instance: &InstanceFlags,
    seeds: &str,
    workers: usize,
    solve: &SolveFlags,
    output: &OutputFlags,
    verbose: bool,
) -> CmdResult {
    solve.validate()?;
    let cfgs = parse_seeds(seeds)?
        .into_iter()
        .map(|s| instance.config(s, solve))
        .collect::<Result<Vec<_>, _>>()?;
    if verbose {
        eprintln!("running {} experiments on {} workers", cfgs.len(), workers.max(1));
    }
    let reports = sweep_reports(&cfgs, workers);
    let table = SweepTable {
        rows: cfgs
            .iter()
            .zip(&reports)
            .map(|(cfg, r)| match r {
                Ok(rep) => sweep_row(rep),
                Err(e) => SweepRow {
                    samples: cfg.samples,
                    dims: cfg.dims.clone(),
                    seed: cfg.seed,
                    abs_err: None,
                    rel_err: None,
                    time_secs: 0.0,
                    noise_norm: None,
                    certified: false,
                    error: Some(e.to_string()),
                },
            })
            .collect(),
    };
    let all_certified = table.rows.iter().all(|r| r.certified);
    let out = SweepOutput {
        reports: reports.into_iter().map(Result::ok).collect(),
        table,
    };
    match output.format {
        Format::Json => print!("{}", to_json(&out)),
        Format::Csv => print!("{}", out.table.to_csv()),
        Format::Text => print!("{}", out.table.to_text()),
    }
    if let Some(dir) = &output.out {
        write_file(dir, "sweep.csv", &out.table.to_csv())?;
        write_file(dir, "sweep.txt", &out.table.to_text())?;
        write_file(dir, "sweep.json", &to_json(&out))?;
    }
    Ok(if all_certified {
        EXIT_CERTIFIED
    } else {
        EXIT_UNCERTIFIED
    })
}

fn cmd_export_sdpa(
    example: bool,
    network: Option<&Path>,
    data: Option<&Path>,
    k: usize,
    box_radius: Option<f64>,
    out: Option<&Path>,
) -> CmdResult {
    let (net, data) = if example {
        (fixture::network(), fixture::training_set())
    } else {
        let net = io::read_network(network.expect("clap requires --network"))?;
        let data = io::read_data(data.expect("clap requires --data"))?;
        data.check_shapes(&net)?;
        (net, data)
    };
    let pop = build(&net, &data, box_radius)?;
    let relax = assemble_relaxation(&pop, k)?;
    let text = export_sdpa(&relax);
    match out {
        Some(path) => std::fs::write(path, text).map_err(|e| Failure {
            code: EXIT_INPUT,
            message: format!("cannot write {}: {e}", path.display()),
        })?,
        None => print!("{text}"),
    }
    Ok(EXIT_CERTIFIED)
}

fn cmd_residuals(network: &Path, data: &Path, coefficients: &Path, output: &OutputFlags) -> CmdResult {
    let net = io::read_network(network)?;
    let test = io::read_data(data)?;
    let coeffs = CoefficientsFile::read(coefficients)?;
    coeffs.check_against(&net)?;
    let rep = residual_analysis(&net, &coeffs.values, &test)?;
    match output.format {
        Format::Json => print!("{}", to_json(&rep)),
        Format::Csv => print!("{}", rep.components_csv()),
        Format::Text => {
            println!("samples: {}", rep.norms.len());
            println!("MSE = {:.6e}, RMSE = {:.6e}", rep.mse, rep.rmse);
            println!(
                "trend: slope {:.3e} +/- {:.3e} (ratio {:.2})",
                rep.trend.slope,
                rep.trend.slope_stderr,
                rep.trend.t_ratio()
            );
        }
    }
    if let Some(dir) = &output.out {
        write_residual_files(dir, &rep)?;
        write_file(dir, "residuals.json", &to_json(&rep))?;
    }
    Ok(EXIT_CERTIFIED)
}

fn run(cli: Cli) -> CmdResult {
    let verbose = cli.verbose;
    match &cli.command {
        Command::Example { solve, output } => cmd_example(solve, output, verbose),
        Command::Solve {
            network,
            data,
            solve,
            output,
        } => cmd_solve(network, data, solve, output, verbose),
        Command::Synth {
            instance,
            no_solve,
            solve,
            output,
        } => cmd_synth(instance, *no_solve, solve, output, verbose),
        Command::Sweep {
            instance,
            seeds,
            workers,
            solve,
            output,
        } => cmd_sweep(instance, seeds, *workers, solve, output, verbose),
        Command::ExportSdpa {
            example,
            network,
            data,
            k,
            box_radius,
            out,
        } => cmd_export_sdpa(
            *example,
            network.as_deref(),
            data.as_deref(),
            *k,
            *box_radius,
            out.as_deref(),
        ),
        Command::Residuals {
            network,
            data,
            coefficients,
            output,
        } => cmd_residuals(network, data, coefficients, output),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
