use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use opfree::algebra::{BElement, Mat, C, PSD_TOL};
use opfree::distribution::{fixture, Distribution, FixtureParams, DEFAULT_ORDER};
use opfree::divisibility::{
    convolution_root, convolve, default_degree, is_infinitely_divisible, semigroup_apply, CPMap,
};
use opfree::inversion::{certify_voiculescu, r_series};
use opfree::ncseries::NCSeries;
use opfree::repro;
use opfree::transforms::{certify_cauchy, density_csv, density_grid, stieltjes_density, Counterexample, DEFAULT_DENSITY_Y};
use opfree::Error;

const EXIT_CODES: &str = "Exit codes: 0 pass, 1 certified fail, 2 parse or input error, 3 numeric domain error, 4 precondition violated (not CP, not infinitely divisible, insufficient order).";

#[derive(Parser)]
#[command(name = "opfree", version, about = "Operator-valued free probability over M_d(C)", after_help = EXIT_CODES)]
struct Cli {
    /// Worker threads for grid sweeps (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Clone)]
struct Source {
    /// Built-in fixture: semicircular, point_mass, bernoulli, independent_diagonal.
    #[arg(long)]
    fixture: Option<String>,
    /// Distribution JSON file.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Matrix size for fixtures.
    #[arg(long, default_value_t = 1)]
    d: usize,
    /// Variance of the semicircular fixture.
    #[arg(long, default_value_t = 1.0)]
    var: f64,
    /// Atom of the point-mass fixture: one number (times 1) or d² comma-separated real entries.
    #[arg(long)]
    b0: Option<String>,
    /// Truncation order L.
    #[arg(long, default_value_t = DEFAULT_ORDER)]
    order: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum Certifier {
    Cauchy,
    Voiculescu,
}

#[derive(Clone, Copy, ValueEnum)]
enum SeriesKind {
    /// h(w) = G(w⁻¹)
    H,
    /// R-transform series
    R,
}

#[derive(Subcommand)]
enum Cmd {
    /// Density −(1/π) Im tr G(x + iy) as CSV.
    Density {
        #[command(flatten)]
        src: Source,
        #[arg(long, default_value_t = -3.0, allow_negative_numbers = true)]
        xmin: f64,
        #[arg(long, default_value_t = 3.0, allow_negative_numbers = true)]
        xmax: f64,
        #[arg(long, default_value_t = DEFAULT_DENSITY_Y)]
        y: f64,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Certify an h-series (cauchy) or an R-series (voiculescu) read from --input.
    Certify {
        kind: Certifier,
        /// NCSeries JSON file.
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 2)]
        degree: usize,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
        /// Where to write the recovered distribution on PASS.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Free additive convolution of two distributions.
    Convolve {
        /// Distribution JSON file; give the flag twice.
        #[arg(long, required = true)]
        input: Vec<PathBuf>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// k-th convolution root; --check prints ‖ν^{⊞k} − μ‖ on stderr.
    Root {
        #[command(flatten)]
        src: Source,
        #[arg(long)]
        k: usize,
        #[arg(long)]
        check: bool,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// μ^{⊞ρ} for a completely positive map ρ given as JSON, or ρ = t·id.
    Semigroup {
        #[command(flatten)]
        src: Source,
        /// CPMap JSON file.
        #[arg(long, conflicts_with = "scale")]
        map: Option<PathBuf>,
        #[arg(long)]
        scale: Option<f64>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Infinite-divisibility Gram test.
    Idcheck {
        #[command(flatten)]
        src: Source,
        #[arg(long)]
        degree: Option<usize>,
        #[arg(long, default_value_t = PSD_TOL)]
        tol: f64,
    },
    /// Emit a fixture as distribution JSON, or one of its series with --series.
    /// The name `counterexample` is available with --series h only.
    Fixture {
        name: String,
        #[arg(long)]
        series: Option<SeriesKind>,
        #[arg(long, default_value_t = 1)]
        d: usize,
        #[arg(long, default_value_t = 1.0)]
        var: f64,
        #[arg(long)]
        b0: Option<String>,
        #[arg(long, default_value_t = DEFAULT_ORDER)]
        order: usize,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Run acceptance criteria 1..=10 (all of them without --criterion).
    Accept {
        #[arg(long)]
        criterion: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

enum Failure {
    Core(Error),
    Input(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Input(_) => 2,
            Failure::Core(e) => match e {
                Error::Parse(_) | Error::UnknownFixture(_) | Error::DimensionMismatch(_) => 2,
                Error::NotCP(_)
                | Error::NotInfinitelyDivisible(_)
                | Error::InsufficientOrder { .. }
                | Error::NotNormalized
                | Error::SelfAdjointnessViolated(_)
                | Error::NonSelfAdjointAlpha(_) => 4,
                _ => 3,
            },
        }
    }

    fn message(&self) -> String {
        match self {
            Failure::Core(e) => e.to_string(),
            Failure::Input(s) => s.clone(),
        }
    }
}

type Outcome = std::result::Result<bool, Failure>;

fn read(path: &Path) -> std::result::Result<Vec<u8>, Failure> {
    std::fs::read(path).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
}

fn emit(text: &str, output: Option<&Path>) -> std::result::Result<(), Failure> {
    match output {
        Some(p) => std::fs::write(p, text).map_err(|e| Failure::Input(format!("{}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn emit_json(v: &Value, output: Option<&Path>) -> std::result::Result<(), Failure> {
    let mut s = serde_json::to_string_pretty(v).expect("values serialize");
    s.push('\n');
    emit(&s, output)
}

fn distribution_json(mu: &Distribution) -> Value {
    serde_json::to_value(mu.to_json()).expect("distribution serializes")
}

fn parse_b0(s: &str, d: usize) -> std::result::Result<BElement, Failure> {
    let vals: Vec<f64> = s
        .split(',')
        .map(|t| t.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Failure::Input(format!("--b0: {e}")))?;
    match vals.len() {
        1 => Ok(Mat::identity(d, d).map(|z| z * vals[0])),
        n if n == d * d => Ok(Mat::from_row_slice(d, d, &vals.iter().map(|&x| C::new(x, 0.0)).collect::<Vec<_>>())),
        n => Err(Failure::Input(format!("--b0 needs 1 or {} entries, got {n}", d * d))),
    }
}

fn params(d: usize, var: f64, b0: Option<&str>, order: usize) -> std::result::Result<FixtureParams, Failure> {
    let b0 = b0.map(|s| parse_b0(s, d)).transpose()?;
    Ok(FixtureParams { order, d, var, b0 })
}

fn load(src: &Source) -> std::result::Result<Distribution, Failure> {
    match (&src.fixture, &src.input) {
        (Some(name), None) => Ok(fixture(name, &params(src.d, src.var, src.b0.as_deref(), src.order)?)?),
        (None, Some(path)) => Ok(Distribution::parse(&read(path)?)?),
        _ => Err(Failure::Input("give exactly one of --fixture and --input".into())),
    }
}

fn max_moment_diff(a: &Distribution, b: &Distribution) -> f64 {
    a.moments.iter().zip(&b.moments).map(|(x, y)| x.sub(y).max_abs()).fold(0.0, f64::max)
}

fn run(cmd: Cmd) -> Outcome {
    match cmd {
        Cmd::Density { src, xmin, xmax, y, output } => {
            if !(xmin < xmax) {
                return Err(Failure::Input("need xmin < xmax".into()));
            }
            let mu = load(&src)?;
            let pts = stieltjes_density(&mu, &density_grid(xmin, xmax, y), y)?;
            emit(&density_csv(&pts), output.as_deref())?;
            Ok(true)
        }
        Cmd::Certify { kind, input, degree, tol, output } => {
            let series = NCSeries::parse(&read(&input)?)?;
            let (report, dist, pass) = match kind {
                Certifier::Cauchy => {
                    let c = certify_cauchy(&series, degree, tol)?;
                    let mut r = serde_json::to_value(&c.report).expect("report serializes");
                    r["identity_defect"] = json!(c.identity_defect);
                    (r, c.distribution, c.report.pass)
                }
                Certifier::Voiculescu => {
                    let c = certify_voiculescu(&series, degree, tol)?;
                    (serde_json::to_value(&c.report).expect("report serializes"), c.distribution, c.report.pass)
                }
            };
            emit_json(&report, None)?;
            if let (Some(mu), Some(p)) = (dist, output.as_deref()) {
                emit_json(&distribution_json(&mu), Some(p))?;
            }
            Ok(pass)
        }
        Cmd::Convolve { input, output } => {
            if input.len() != 2 {
                return Err(Failure::Input("convolve takes exactly two --input files".into()));
            }
            let mu = Distribution::parse(&read(&input[0])?)?;
            let nu = Distribution::parse(&read(&input[1])?)?;
            emit_json(&distribution_json(&convolve(&mu, &nu)?), output.as_deref())?;
            Ok(true)
        }
        Cmd::Root { src, k, check, output } => {
            let mu = load(&src)?;
            let nu = convolution_root(&mu, k)?;
            if check {
                let mut acc = nu.clone();
                for _ in 1..k {
                    acc = convolve(&acc, &nu)?;
                }
                eprintln!("diff_norm {:e}", max_moment_diff(&acc, &mu));
            }
            emit_json(&distribution_json(&nu), output.as_deref())?;
            Ok(true)
        }
        Cmd::Semigroup { src, map, scale, output } => {
            let mu = load(&src)?;
            let rho = match (map, scale) {
                (Some(p), None) => CPMap::parse(&read(&p)?)?,
                (None, Some(t)) => CPMap::scaled(mu.d, t),
                _ => return Err(Failure::Input("give exactly one of --map and --scale".into())),
            };
            emit_json(&distribution_json(&semigroup_apply(&mu, &rho)?), output.as_deref())?;
            Ok(true)
        }
        Cmd::Idcheck { src, degree, tol } => {
            let mu = load(&src)?;
            let rep = is_infinitely_divisible(&mu, degree.unwrap_or_else(|| default_degree(&mu)), tol)?;
            emit_json(&serde_json::to_value(&rep).expect("report serializes"), None)?;
            Ok(rep.pass)
        }
        Cmd::Fixture { name, series, d, var, b0, order, output } => {
            let value = if name == "counterexample" {
                match series {
                    Some(SeriesKind::H) => serde_json::to_value(Counterexample::new(order).k_series().to_json()),
                    _ => return Err(Failure::Input("counterexample is only available with --series h".into())),
                }
            } else {
                let mu = fixture(&name, &params(d, var, b0.as_deref(), order)?)?;
                match series {
                    None => serde_json::to_value(mu.to_json()),
                    Some(SeriesKind::H) => serde_json::to_value(mu.h_series().to_json()),
                    Some(SeriesKind::R) => serde_json::to_value(r_series(&mu).to_json()),
                }
            };
            emit_json(&value.expect("fixture serializes"), output.as_deref())?;
            Ok(true)
        }
        Cmd::Accept { criterion, seed } => {
            let outcomes = match criterion {
                Some(id) if (1..=repro::CRITERIA).contains(&id) => vec![repro::run(id, seed)?],
                Some(id) => return Err(Failure::Input(format!("no criterion {id}; expected 1..={}", repro::CRITERIA))),
                None => repro::run_all(seed),
            };
            for o in &outcomes {
                println!("{}", o.line());
            }
            Ok(outcomes.iter().all(|o| o.pass))
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    if let Some(n) = cli.workers {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match run(cli.cmd) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
