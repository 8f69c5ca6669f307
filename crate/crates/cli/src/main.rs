use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use coulomb_links::asymptotics::{rate_fit_on_grid, reports_to_csv, sup_error, RateReport};
use coulomb_links::fields::{ModeExpansion, Point};
use coulomb_links::greenbound::{hardy_check, lowest_radial_eigenvalue, positivity_radius, spectral_scan, Profile};
use coulomb_links::linkforge::{
    build_link_eigenfunction, scan_link_eigenfunction, Attempt, BuildOutcome, LinkSpec, PipelineConfig,
};
use coulomb_links::nodaltrace::{curves_to_json, curves_to_polyline_text, trace_all, SearchBox, TraceConfig};
use coulomb_links::topology::certify;
use serde::{Deserialize, Serialize};

#[derive(Parser, Debug)]
#[command(name = "coulomb-links", version, about = "Knotted nodal lines of Coulomb eigenfunctions")]
struct Cli {
    /// TOML configuration file; built-in defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Seed for random projection directions.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Convergence rates of f_nl toward g_l.
    Asympt,
    /// Fit, promote, trace and certify a link eigenfunction.
    Build,
    /// Lowest Dirichlet eigenvalue scan and critical radius.
    Spectrum,
    /// Trace the nodal curves of a stored expansion.
    Trace,
    /// Re-trace a stored expansion and certify it against the configured link.
    Verify,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RunConfig {
    seed: Option<u64>,
    asympt: AsymptConfig,
    link: Option<LinkSpec>,
    build: BuildConfig,
    pipeline: PipelineConfig,
    spectrum: SpectrumConfig,
    trace: TraceSection,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct AsymptConfig {
    l_values: Vec<usize>,
    n_values: Vec<usize>,
    interval: (f64, f64),
    c1_interval: (f64, f64),
    c1_n_values: Vec<usize>,
    grid: usize,
}

impl Default for AsymptConfig {
    fn default() -> Self {
        Self {
            l_values: vec![0, 1, 2, 3],
            n_values: vec![20, 30, 40, 60, 80, 120, 160, 200],
            interval: (0.0, 5.0),
            c1_interval: (0.5, 5.0),
            c1_n_values: vec![25, 50, 100, 200],
            grid: 1000,
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct BuildConfig {
    /// Fixed degree; scans the pipeline schedule when absent.
    max_degree: Option<usize>,
    /// Fixed principal number; scans `pipeline.n_values` when absent.
    n: Option<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct SpectrumConfig {
    r_min: f64,
    r_max: f64,
    count: usize,
}

impl Default for SpectrumConfig {
    fn default() -> Self {
        Self { r_min: 0.5, r_max: 3.0, count: 26 }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct TraceSection {
    /// Expansion file in the fields JSON format.
    expansion: Option<PathBuf>,
    /// Tracing parameters; derived from the link when absent.
    config: Option<TraceConfig>,
}

enum Failure {
    Uncertified,
    Numerical(String),
    Config(String),
}

impl From<coulomb_links::Error> for Failure {
    fn from(e: coulomb_links::Error) -> Self {
        match e {
            coulomb_links::Error::InvalidArgument(m) => Failure::Config(m),
            other => Failure::Numerical(other.to_string()),
        }
    }
}

type Outcome = Result<(), Failure>;

fn load_config(path: Option<&Path>) -> Result<RunConfig, Failure> {
    let Some(path) = path else {
        return Ok(RunConfig::default());
    };
    let text = fs::read_to_string(path).map_err(|e| Failure::Config(format!("cannot read {}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))
}

fn write(dir: &Path, name: &str, contents: &str) -> Outcome {
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| Failure::Config(format!("cannot write {}: {e}", path.display())))?;
    eprintln!("wrote {}", path.display());
    Ok(())
}

fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("serialisable") + "\n"
}

#[derive(Serialize)]
struct SlopeSummary {
    l: usize,
    fitted_slope: f64,
    slope_in_range: bool,
    c1_interval: (f64, f64),
    c1_n_values: Vec<usize>,
    c1_errors: Vec<f64>,
    c1_halving: bool,
}

fn cmd_asympt(cfg: &RunConfig, out: &Path) -> Outcome {
    let a = &cfg.asympt;
    let mut reports: Vec<RateReport> = Vec::new();
    let mut summary = Vec::new();
    for &l in &a.l_values {
        let rep = rate_fit_on_grid(l, &a.n_values, a.interval, a.grid)?;
        let c1_errors: Vec<f64> =
            a.c1_n_values.iter().map(|&n| sup_error(l, n, a.c1_interval, a.grid).map(|e| e.1)).collect::<Result<_, _>>()?;
        let c1_halving = c1_errors.windows(2).all(|w| w[1] <= w[0] / 1.4);
        summary.push(SlopeSummary {
            l,
            fitted_slope: rep.fitted_slope,
            slope_in_range: (-2.3..=-1.7).contains(&rep.fitted_slope),
            c1_interval: a.c1_interval,
            c1_n_values: a.c1_n_values.clone(),
            c1_errors,
            c1_halving,
        });
        reports.push(rep);
    }
    write(out, "asympt.csv", &reports_to_csv(&reports))?;
    write(out, "asympt.json", &to_json(&summary))?;
    for s in &summary {
        println!("l={} slope={:.4} {}", s.l, s.fitted_slope, if s.slope_in_range { "PASS" } else { "FAIL" });
    }
    Ok(())
}

#[derive(Serialize)]
struct BuildRecord<'a> {
    link: &'a LinkSpec,
    projection_seed: u64,
    max_degree: usize,
    n: usize,
    smallest_singular_value: f64,
    link_residual: f64,
    report: &'a coulomb_links::topology::TopologyReport,
    attempts: &'a [Attempt],
}

fn link_of(cfg: &RunConfig) -> Result<LinkSpec, Failure> {
    match &cfg.link {
        Some(spec) => {
            spec.validate()?;
            Ok(spec.clone())
        }
        None => Ok(LinkSpec::torus(2, 2)?),
    }
}

fn write_build(out: &Path, spec: &LinkSpec, pipeline: &PipelineConfig, result: &BuildOutcome) -> Outcome {
    write(out, "expansion.json", &(result.eigenfunction.to_json() + "\n"))?;
    write(out, "zero_energy_expansion.json", &(result.fit.expansion.to_json() + "\n"))?;
    write(out, "curves.json", &(curves_to_json(&result.curves) + "\n"))?;
    write(out, "curves.txt", &curves_to_polyline_text(&result.curves))?;
    let record = BuildRecord {
        link: spec,
        projection_seed: pipeline.projection_seed,
        max_degree: result.fit.n_used,
        n: result.n,
        smallest_singular_value: result.fit.smallest_singular_value,
        link_residual: result.fit.link_residual,
        report: &result.report,
        attempts: &result.attempts,
    };
    write(out, "report.json", &to_json(&record))?;
    write(out, "report.txt", &result.report.to_table())
}

fn cmd_build(cfg: &RunConfig, out: &Path) -> Outcome {
    let spec = link_of(cfg)?;
    let mut pipeline = cfg.pipeline.clone();
    if let Some(n) = cfg.build.max_degree {
        pipeline.degrees = vec![n];
    }
    let result = match (cfg.build.max_degree, cfg.build.n) {
        (Some(degree), Some(n)) => build_link_eigenfunction(&spec, degree, n, &pipeline)?,
        (_, n) => {
            if let Some(n) = n {
                pipeline.n_values = vec![n];
            }
            scan_link_eigenfunction(&spec, &pipeline)?
        }
    };
    write_build(out, &spec, &pipeline, &result)?;
    print!("N = {}, n = {}\n{}", result.fit.n_used, result.n, result.report.to_table());
    if result.certified() {
        Ok(())
    } else {
        Err(Failure::Uncertified)
    }
}

#[derive(Serialize)]
struct SpectrumSummary {
    #[serde(flatten)]
    scan: coulomb_links::greenbound::ScanSummary,
    lambda_at_0_44: f64,
    positive_at_0_44: &'static str,
    max_hardy_ratio: f64,
    hardy_ratio_at_most_4: bool,
}

fn cmd_spectrum(cfg: &RunConfig, out: &Path) -> Outcome {
    let s = &cfg.spectrum;
    let scan = spectral_scan(s.r_min, s.r_max, s.count)?;
    let lambda = lowest_radial_eigenvalue(0.44)?;
    let hardy = hardy_check(positivity_radius(), &Profile::standard())?;
    let summary = SpectrumSummary {
        scan: scan.summary()?,
        lambda_at_0_44: lambda,
        positive_at_0_44: if lambda > 0.0 { "PASS" } else { "FAIL" },
        max_hardy_ratio: hardy,
        hardy_ratio_at_most_4: hardy <= 4.0,
    };
    write(out, "spectrum.csv", &scan.to_csv())?;
    write(out, "spectrum.json", &to_json(&summary))?;
    println!("critical radius {:.6}", scan.critical_radius);
    println!("lambda(0.44) = {lambda:.6} {}", summary.positive_at_0_44);
    Ok(())
}

fn load_expansion(cfg: &RunConfig) -> Result<ModeExpansion, Failure> {
    let path = cfg.trace.expansion.as_ref().ok_or_else(|| Failure::Config("trace.expansion is required".into()))?;
    let text = fs::read_to_string(path).map_err(|e| Failure::Config(format!("cannot read {}: {e}", path.display())))?;
    Ok(ModeExpansion::from_json(&text)?)
}

fn trace_config_of(cfg: &RunConfig, spec: &LinkSpec) -> Result<TraceConfig, Failure> {
    if let Some(tc) = cfg.trace.config {
        tc.validate()?;
        return Ok(tc);
    }
    let target = spec.components(cfg.pipeline.target_samples * spec.component_count())?;
    Ok(cfg.pipeline.trace_config(spec, &target))
}

#[derive(Serialize)]
struct TraceRecord {
    curve_count: usize,
    closed_count: usize,
    rejected: Vec<String>,
    config: TraceConfig,
}

fn cmd_trace(cfg: &RunConfig, out: &Path) -> Outcome {
    let expansion = load_expansion(cfg)?;
    let trace_cfg = match (cfg.trace.config, &cfg.link) {
        (Some(tc), _) => {
            tc.validate()?;
            tc
        }
        (None, Some(spec)) => trace_config_of(cfg, spec)?,
        (None, None) => {
            let r = 0.43;
            TraceConfig::for_ball(SearchBox::new(Point::new(-r, -r, -r), Point::new(r, r, r)), r)
        }
    };
    let outcome = trace_all(&expansion, &trace_cfg)?;
    write(out, "curves.json", &(curves_to_json(&outcome.curves) + "\n"))?;
    write(out, "curves.txt", &curves_to_polyline_text(&outcome.curves))?;
    let record = TraceRecord {
        curve_count: outcome.curves.len(),
        closed_count: outcome.curves.iter().filter(|c| c.closed).count(),
        rejected: outcome.rejected.iter().map(|r| r.reason.to_string()).collect(),
        config: trace_cfg,
    };
    write(out, "trace.json", &to_json(&record))?;
    println!("{} curves ({} closed), {} rejected seeds", record.curve_count, record.closed_count, record.rejected.len());
    Ok(())
}

#[derive(Serialize)]
struct VerifyRecord<'a> {
    link: &'a LinkSpec,
    projection_seed: u64,
    max_pde_residual: f64,
    report: coulomb_links::topology::TopologyReport,
}

fn cmd_verify(cfg: &RunConfig, out: &Path) -> Outcome {
    let expansion = load_expansion(cfg)?;
    let spec = link_of(cfg)?;
    let trace_cfg = trace_config_of(cfg, &spec)?;
    let target = spec.components(cfg.pipeline.target_samples * spec.component_count())?;
    let outcome = trace_all(&expansion, &trace_cfg)?;
    let report = certify(&expansion, &outcome.curves, &target, &cfg.pipeline.certify_options(&spec, trace_cfg.step));
    // residual relative to the largest |ψ| on a test sphere of radius R/2
    let radius = 0.5 * spec.ball_radius;
    let probe: Vec<Point> = (0..64)
        .map(|k| {
            let z = 1.0 - (2 * k + 1) as f64 / 64.0;
            let phi = k as f64 * std::f64::consts::PI * (3.0 - 5f64.sqrt());
            let s = (1.0 - z * z).sqrt();
            Point::new(s * phi.cos(), s * phi.sin(), z) * radius
        })
        .collect();
    let scale = expansion.eval_many(&probe).iter().map(|z| z.norm()).fold(0.0, f64::max);
    let mut worst = 0.0f64;
    for p in &probe {
        worst = worst.max(expansion.pde_residual(p)? / scale);
    }
    let certified = report.certified;
    print!("{}", report.to_table());
    println!("max relative PDE residual {worst:.3e}");
    write(out, "verify.json", &to_json(&VerifyRecord { link: &spec, projection_seed: cfg.pipeline.projection_seed, max_pde_residual: worst, report }))?;
    if certified {
        Ok(())
    } else {
        Err(Failure::Uncertified)
    }
}

fn run(cli: &Cli) -> Outcome {
    let mut cfg = load_config(cli.config.as_deref())?;
    if let Some(seed) = cli.seed.or(cfg.seed) {
        cfg.pipeline.projection_seed = seed;
    }
    if let Some(threads) = cli.threads {
        if threads == 0 {
            return Err(Failure::Config("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| Failure::Config(format!("thread pool: {e}")))?;
    }
    fs::create_dir_all(&cli.out).map_err(|e| Failure::Config(format!("cannot create {}: {e}", cli.out.display())))?;
    match cli.command {
        Command::Asympt => cmd_asympt(&cfg, &cli.out),
        Command::Build => cmd_build(&cfg, &cli.out),
        Command::Spectrum => cmd_spectrum(&cfg, &cli.out),
        Command::Trace => cmd_trace(&cfg, &cli.out),
        Command::Verify => cmd_verify(&cfg, &cli.out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Uncertified) => {
            eprintln!("topology not certified");
            ExitCode::from(2)
        }
        Err(Failure::Numerical(m)) => {
            eprintln!("numerical failure: {m}");
            ExitCode::from(3)
        }
        Err(Failure::Config(m)) => {
            eprintln!("configuration error: {m}");
            ExitCode::from(4)
        }
    }
}
