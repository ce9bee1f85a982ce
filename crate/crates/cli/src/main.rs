mod settings;

use std::fmt::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use pretest_coverage::mc::{timed, Scenario};
use pretest_coverage::study::{default_method, SweepCell};
use pretest_coverage::{
    conditional_coverage_known, crn_grid, draw_noise, efficiency, estimate_cp_bruteforce, estimate_cp_cv,
    generate_panel, min_coverage_over_tau, stability_curves, sweep_psi, sweep_rho, xstats, Config, CorrStructure,
    Error, GridSpec, Method, Panel, Settings,
};
use settings::{parse_grid, parse_list, parse_structure, Defaults, FileConfig, RawScenario, Resolved};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Io(_) => 2,
            CliError::Core(e) => match e {
                Error::InvalidConfig(_)
                | Error::Inadmissible(_)
                | Error::UnsupportedStructure
                | Error::ProbabilityDomain(_) => 2,
                Error::Degenerate(_) | Error::NonConvergence { .. } | Error::Run { .. } => 3,
            },
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "pretest-coverage", version, about = "Coverage of confidence intervals after a Hausman pretest")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Exact conditional coverage (known variances) for one covariate draw.
    Exact(ExactArgs),
    /// Coverage as a function of lambda.
    Curve(CurveArgs),
    /// Minimum coverage over lambda and the implied test size.
    Min(MinArgs),
    /// Minimum coverage as a function of rho or psi.
    Sweep(SweepArgs),
    /// Control-variate efficiency relative to brute force.
    Efficiency(EffArgs),
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// key = value config file, or a CSV previously written by this tool.
    #[arg(long)]
    config: Option<PathBuf>,
    /// cs | ar1
    #[arg(long)]
    structure: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    rho: Option<String>,
    /// Ratio sigma_mu / sigma_eps; fractions such as 1/3 are accepted.
    #[arg(long)]
    psi: Option<String>,
    #[arg(long, allow_hyphen_values = true, conflicts_with = "lambda")]
    tau: Option<String>,
    /// sqrt(N) * tau
    #[arg(long, allow_hyphen_values = true)]
    lambda: Option<String>,
    #[arg(long)]
    n: Option<String>,
    #[arg(long)]
    t: Option<String>,
    #[arg(long)]
    alpha: Option<String>,
    #[arg(long)]
    alpha_tilde: Option<String>,
    /// known | unbiased | mle | wooldridge0 | wooldridge2
    #[arg(long)]
    estimator: Option<String>,
    /// Number of simulation runs.
    #[arg(long)]
    m: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    threads: Option<usize>,
    /// start:stop:count or a comma-separated list.
    #[arg(long, allow_hyphen_values = true)]
    grid: Option<String>,
    /// auto | brute | cv
    #[arg(long)]
    method: Option<String>,
    /// Output path; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ExactArgs {
    #[command(flatten)]
    common: Common,
    /// Covariate matrix as CSV, one row per individual.
    #[arg(long)]
    x_file: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct CurveArgs {
    #[command(flatten)]
    common: Common,
    /// Several N, one curve each with its own seed.
    #[arg(long)]
    n_list: Option<String>,
}

#[derive(Args, Debug, Clone)]
struct MinGrid {
    #[arg(long)]
    lambda_max: Option<String>,
    #[arg(long)]
    coarse: Option<usize>,
    #[arg(long)]
    refine: Option<usize>,
}

#[derive(Args, Debug)]
struct MinArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    grid: MinGrid,
    /// Also write every grid point to this CSV.
    #[arg(long)]
    detail: Option<PathBuf>,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum SweepParam {
    Rho,
    Psi,
}

#[derive(Args, Debug)]
struct SweepArgs {
    param: SweepParam,
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    grid: MinGrid,
    /// Sweep values: start:stop:count or a list.
    #[arg(long, allow_hyphen_values = true)]
    values: Option<String>,
    /// Comma-separated subset of cs,ar1.
    #[arg(long)]
    structures: Option<String>,
}

#[derive(Args, Debug)]
struct EffArgs {
    #[command(flatten)]
    common: Common,
}

fn fmt_f(v: f64) -> String {
    format!("{v:.16e}")
}

/// CSV text with a replayable manifest block.
struct Output {
    text: String,
}

impl Output {
    fn new(command: &str, r: &Resolved, extra: &[(&str, String)]) -> Self {
        let c = &r.config;
        let mut text = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(text, "#! {k} = {v}");
        };
        kv("command", command.into());
        kv("version", env!("CARGO_PKG_VERSION").into());
        kv("structure", c.structure().name().into());
        kv("rho", fmt_f(c.rho()));
        kv("psi", fmt_f(c.psi()));
        kv(r.nonexog_key, fmt_f(r.nonexog_value));
        kv("n", c.n().to_string());
        kv("t", c.t().to_string());
        kv("alpha", fmt_f(c.alpha()));
        kv("alpha_tilde", fmt_f(c.alpha_tilde()));
        kv("estimator", c.estimator().name().into());
        kv("m", r.runs.to_string());
        kv("seed", r.seed.to_string());
        if let Some(g) = &r.grid_text {
            kv("grid", g.clone());
        }
        if let Some(m) = r.method {
            kv("method", m.name().into());
        }
        for (k, v) in extra {
            kv(k, v.clone());
        }
        Self { text }
    }

    fn row(&mut self, cells: &[String]) {
        self.text.push_str(&cells.join(","));
        self.text.push('\n');
    }

    fn header(&mut self, names: &[&str]) {
        self.text.push_str(&names.join(","));
        self.text.push('\n');
    }

    fn emit(&self, out: &Option<PathBuf>) -> Result<(), CliError> {
        match out {
            Some(p) => std::fs::write(p, &self.text)?,
            None => print!("{}", self.text),
        }
        Ok(())
    }
}

fn report_time(stage: &str, start: Instant) {
    eprintln!("# wall time {stage}: {:.3} s", start.elapsed().as_secs_f64());
}

fn load(common: &Common, command: &str, defaults: Defaults) -> Result<(Resolved, FileConfig), CliError> {
    let file = match &common.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    if let Some(c) = file.get("command") {
        if c != command {
            return Err(CliError::Config(format!("config was written by `{c}`, not `{command}`")));
        }
    }
    let raw = RawScenario {
        structure: common.structure.clone(),
        rho: common.rho.clone(),
        psi: common.psi.clone(),
        tau: common.tau.clone(),
        lambda: common.lambda.clone(),
        n: common.n.clone(),
        t: common.t.clone(),
        alpha: common.alpha.clone(),
        alpha_tilde: common.alpha_tilde.clone(),
        estimator: common.estimator.clone(),
        m: common.m.clone(),
        seed: common.seed.clone(),
        grid: common.grid.clone(),
        method: common.method.clone(),
    };
    Ok((settings::resolve(&raw, &file, &defaults)?, file))
}

fn sim_settings(r: &Resolved, common: &Common) -> Settings {
    Settings { runs: r.runs, seed: r.seed, threads: common.threads }
}

fn method_for(r: &Resolved, config: &Config) -> Result<Method, CliError> {
    match (r.method, config.structure()) {
        (Some(Method::ControlVariate), CorrStructure::Ar1) => {
            Err(CliError::Config("control-variate method needs compound symmetry; use --method brute for ar1".into()))
        }
        (Some(m), _) => Ok(m),
        (None, _) => Ok(default_method(config)),
    }
}

fn default_grid(r: &mut Resolved, text: &str) -> Result<Vec<f64>, CliError> {
    if r.grid.is_none() {
        r.grid_text = Some(text.into());
        r.grid = Some(parse_grid(text)?);
    }
    Ok(r.grid.clone().unwrap_or_default())
}

fn check_lambdas(grid: &[f64], n: usize) -> Result<(), CliError> {
    let root = (n as f64).sqrt();
    if let Some(l) = grid.iter().find(|l| l.is_nan() || l.abs() >= root) {
        return Err(CliError::Config(format!("lambda = {l} outside (-sqrt(N), sqrt(N)) for N = {n}")));
    }
    Ok(())
}

fn read_x(path: &PathBuf) -> Result<Panel, CliError> {
    let text = std::fs::read_to_string(path)?;
    let rows = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| parse_list(l, settings::parse_real))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Panel::from_rows(&rows)?)
}

fn cmd_exact(a: ExactArgs) -> Result<(), CliError> {
    let (mut r, _) = load(&a.common, "exact", Defaults { runs: 1 })?;
    let grid = default_grid(&mut r, "0:8:33")?;
    let c = r.config.clone();
    if c.structure() != CorrStructure::CompoundSymmetry {
        return Err(CliError::Config("exact coverage needs compound symmetry".into()));
    }
    let x = match &a.x_file {
        Some(p) => read_x(p)?,
        None => generate_panel(&c, &draw_noise(c.n(), c.t(), r.seed, 0))?.x,
    };
    if (x.n(), x.t()) != (c.n(), c.t()) {
        return Err(CliError::Config(format!(
            "x is {}x{}, configuration has N = {}, T = {}",
            x.n(),
            x.t(),
            c.n(),
            c.t()
        )));
    }
    check_lambdas(&grid, c.n())?;
    let start = Instant::now();
    let xs = xstats(&x, c.var_xbar())?;
    let root = (c.n() as f64).sqrt();
    let extra = match &a.x_file {
        Some(p) => vec![("x_file", p.display().to_string())],
        None => vec![],
    };
    let mut out = Output::new("exact", &r, &extra);
    out.header(&["lambda", "tau", "conditional_cp"]);
    for &l in &grid {
        let tau = l / root;
        let cp = conditional_coverage_known(&xs, c.psi(), tau, c.t(), c.alpha(), c.alpha_tilde())?;
        out.row(&[fmt_f(l), fmt_f(tau), fmt_f(cp)]);
    }
    report_time("exact", start);
    out.emit(&a.common.out)
}

fn cmd_curve(a: CurveArgs) -> Result<(), CliError> {
    let overlay = a.n_list.is_some();
    let runs = if overlay { pretest_coverage::mc::DEFAULT_RUNS_OVERLAY } else { pretest_coverage::mc::DEFAULT_RUNS };
    let (mut r, file) = load(&a.common, "curve", Defaults { runs })?;
    let grid = default_grid(&mut r, "0:8:33")?;
    let settings = sim_settings(&r, &a.common);
    let start = Instant::now();
    let n_list_text = a.n_list.clone().or_else(|| file.get("n_list").map(str::to_string));
    if let Some(text) = n_list_text {
        let ns =
            parse_list(&text, |s| s.parse::<usize>().map_err(|_| CliError::Config(format!("bad N in list: {s:?}"))))?;
        if r.method == Some(Method::ControlVariate) && r.config.structure() == CorrStructure::Ar1 {
            return Err(CliError::Config("control-variate method needs compound symmetry".into()));
        }
        let pts = stability_curves(&r.config, &ns, &grid, &settings)?;
        let mut out = Output::new("curve", &r, &[("n_list", text.clone())]);
        out.header(&["n", "lambda", "cp", "se", "method"]);
        for p in pts {
            out.row(&[
                p.n.to_string(),
                fmt_f(p.lambda),
                fmt_f(p.estimate.value),
                fmt_f(p.estimate.std_error),
                p.estimate.method.name().into(),
            ]);
        }
        report_time("curve", start);
        return out.emit(&a.common.out);
    }
    let method = method_for(&r, &r.config)?;
    check_lambdas(&grid, r.config.n())?;
    let est = crn_grid(&r.config, &grid, &settings, method)?;
    let mut out = Output::new("curve", &r, &[]);
    out.header(&["lambda", "cp", "se", "method"]);
    for (l, e) in est {
        out.row(&[fmt_f(l), fmt_f(e.value), fmt_f(e.std_error), e.method.name().into()]);
    }
    report_time("curve", start);
    out.emit(&a.common.out)
}

fn grid_spec(g: &MinGrid, file: &FileConfig, extra: &mut Vec<(&'static str, String)>) -> Result<GridSpec, CliError> {
    let mut spec = GridSpec::default();
    if let Some(s) = g.lambda_max.clone().or_else(|| file.get("lambda_max").map(str::to_string)) {
        spec.lambda_max = Some(settings::parse_real(&s)?);
        extra.push(("lambda_max", s));
    }
    let count = |flag: Option<usize>, key: &str| -> Result<Option<usize>, CliError> {
        match flag {
            Some(v) => Ok(Some(v)),
            None => file
                .get(key)
                .map(|s| s.parse().map_err(|_| CliError::Config(format!("{key}: bad count {s:?}"))))
                .transpose(),
        }
    };
    if let Some(v) = count(g.coarse, "coarse")? {
        spec.coarse_points = v;
        extra.push(("coarse", v.to_string()));
    }
    if let Some(v) = count(g.refine, "refine")? {
        spec.refine_points = v;
        extra.push(("refine", v.to_string()));
    }
    Ok(spec)
}

fn cmd_min(a: MinArgs) -> Result<(), CliError> {
    let (r, file) = load(&a.common, "min", Defaults { runs: pretest_coverage::mc::DEFAULT_RUNS })?;
    let mut extra = Vec::new();
    let spec = grid_spec(&a.grid, &file, &mut extra)?;
    let method = method_for(&r, &r.config)?;
    let start = Instant::now();
    let res = min_coverage_over_tau(&r.config, &sim_settings(&r, &a.common), &spec, method)?;
    report_time("min", start);
    let mut out = Output::new("min", &r, &extra);
    out.header(&["min_cp", "argmin_lambda", "test_size", "se", "method", "grid_points"]);
    let at = res.grid.iter().position(|&l| l == res.argmin_lambda).unwrap_or(0);
    out.row(&[
        fmt_f(res.min_cp),
        fmt_f(res.argmin_lambda),
        fmt_f(res.test_size),
        fmt_f(res.estimates[at].std_error),
        method.name().into(),
        res.grid.len().to_string(),
    ]);
    if let Some(p) = &a.detail {
        let mut d = Output::new("min", &r, &extra);
        d.header(&["lambda", "cp", "se", "method"]);
        for (l, e) in res.grid.iter().zip(&res.estimates) {
            d.row(&[fmt_f(*l), fmt_f(e.value), fmt_f(e.std_error), e.method.name().into()]);
        }
        d.emit(&Some(p.clone()))?;
    }
    out.emit(&a.common.out)
}

fn cmd_sweep(a: SweepArgs) -> Result<(), CliError> {
    let mut common = a.common.clone();
    // psi sweeps default to rho = 0.4.
    if a.param == SweepParam::Psi && common.rho.is_none() {
        let file_has_rho = match &common.config {
            Some(p) => FileConfig::load(p)?.get("rho").is_some(),
            None => false,
        };
        if !file_has_rho {
            common.rho = Some("0.4".into());
        }
    }
    let (r, file) = load(&common, "sweep", Defaults { runs: pretest_coverage::mc::DEFAULT_RUNS })?;
    if let Some(p) = file.get("param") {
        let want = if a.param == SweepParam::Rho { "rho" } else { "psi" };
        if p != want {
            return Err(CliError::Config(format!("config was written for a {p} sweep")));
        }
    }
    let mut extra = vec![("param", if a.param == SweepParam::Rho { "rho".to_string() } else { "psi".to_string() })];
    let spec = grid_spec(&a.grid, &file, &mut extra)?;
    let default_values = if a.param == SweepParam::Rho { "0:0.9:10" } else { "0:1:11" };
    let values_text =
        a.values.clone().or_else(|| file.get("values").map(str::to_string)).unwrap_or(default_values.into());
    let values = parse_grid(&values_text)?;
    extra.push(("values", values_text));
    let structures_text =
        a.structures.clone().or_else(|| file.get("structures").map(str::to_string)).unwrap_or("cs,ar1".into());
    let structures = parse_list(&structures_text, parse_structure)?;
    extra.push(("structures", structures_text));
    if r.method.is_some() {
        return Err(CliError::Config("sweeps choose the method per structure; drop --method".into()));
    }
    let start = Instant::now();
    let settings = sim_settings(&r, &a.common);
    let cells = match a.param {
        SweepParam::Rho => sweep_rho(&r.config, &values, &structures, &settings, &spec)?,
        SweepParam::Psi => sweep_psi(&r.config, &values, &structures, &settings, &spec)?,
    };
    report_time("sweep", start);
    let mut out = Output::new("sweep", &r, &extra);
    out.header(&["structure", "sweep_value", "min_cp", "se", "argmin_lambda", "test_size", "status"]);
    for SweepCell { structure, value, result } in cells {
        match result {
            Ok(res) => {
                let at = res.grid.iter().position(|&l| l == res.argmin_lambda).unwrap_or(0);
                out.row(&[
                    structure.name().into(),
                    fmt_f(value),
                    fmt_f(res.min_cp),
                    fmt_f(res.estimates[at].std_error),
                    fmt_f(res.argmin_lambda),
                    fmt_f(res.test_size),
                    "ok".into(),
                ]);
            }
            Err(_) => out.row(&[
                structure.name().into(),
                fmt_f(value),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                "inadmissible".into(),
            ]),
        }
    }
    out.emit(&a.common.out)
}

fn cmd_efficiency(a: EffArgs) -> Result<(), CliError> {
    let mut common = a.common.clone();
    if common.rho.is_none() && common.config.is_none() {
        common.rho = Some("0".into());
    }
    let (r, _) = load(&common, "efficiency", Defaults { runs: 10_000 })?;
    if r.config.structure() == CorrStructure::Ar1 {
        return Err(CliError::Config(
            "efficiency compares against the control variate, which needs compound symmetry".into(),
        ));
    }
    Scenario::new(&r.config)?;
    let settings = sim_settings(&r, &a.common);
    let brute = timed(|| estimate_cp_bruteforce(&r.config, &settings))?;
    let cv = timed(|| estimate_cp_cv(&r.config, &settings))?;
    let eff = efficiency(&brute, &cv)?;
    let mut out = Output::new("efficiency", &r, &[]);
    out.header(&["cp_brute", "cp_cv", "var_brute", "var_cv", "time_brute", "time_cv", "variance_ratio", "efficiency"]);
    out.row(&[
        fmt_f(brute.estimate.value),
        fmt_f(cv.estimate.value),
        fmt_f(brute.estimate.variance()),
        fmt_f(cv.estimate.variance()),
        fmt_f(brute.wall_time.as_secs_f64()),
        fmt_f(cv.wall_time.as_secs_f64()),
        fmt_f(eff.variance_ratio),
        fmt_f(eff.ratio),
    ]);
    out.emit(&a.common.out)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match cli.command {
        Command::Exact(a) => cmd_exact(a),
        Command::Curve(a) => cmd_curve(a),
        Command::Min(a) => cmd_min(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Efficiency(a) => cmd_efficiency(a),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
