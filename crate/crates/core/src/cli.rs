//! Command-line front end: config ingestion, dispatch and artifact writing.
//!
//! JSON reports carry a `meta` block with every default that shaped them.
//! CSV files keep their fixed header; when written to a path they get a
//! `<path>.meta.json` sidecar instead.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::demand::{demand_pair, region_map, surplus};
use crate::dist::{check_lemma1, check_lemma2, check_thm1, Distribution, DEFAULT_CHECK_GRID};
use crate::equilibrium::{self, monopoly_price, SweepParam};
use crate::error::Error;
use crate::firm::{calculus_report, BR_GRID};
use crate::market::{Firm, MarketParams, PriceProfile, Variant};
use crate::quad::GL_NODES;
use crate::report::{to_json_string, SIG_DIGITS};
use crate::sim::{compare, simulate, Z_LIMIT};
use crate::variants::{hotelling_prices, oligopoly_solve, solve_unknown};

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_NO_CONVERGENCE: i32 = 3;

pub const DEFAULT_SEED: u64 = 20_240_601;
pub const DEFAULT_SIM_N: usize = 1_000_000;
pub const DEFAULT_REGION_GRID: usize = 512;
pub const DEFAULT_SVG_PX: usize = 512;

#[derive(Debug, Parser)]
#[command(name = "search-duopoly", version, about = "Consumer-search duopoly: demands, equilibria and checks")]
pub struct Cli {
    /// Run single-threaded.
    #[arg(long, global = true)]
    pub deterministic: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Equilibria of one market.
    Solve {
        #[command(flatten)]
        market: MarketArgs,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Highest-price equilibrium along a parameter grid (CSV).
    Sweep {
        #[command(flatten)]
        market: MarketArgs,
        /// s, cX, cY or muX.
        #[arg(long)]
        param: String,
        #[arg(long)]
        from: f64,
        #[arg(long)]
        to: f64,
        /// Number of grid points, endpoints included.
        #[arg(long, default_value_t = 30)]
        steps: usize,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Outcome of every cell of a valuation grid (CSV, optional SVG).
    Regions {
        #[command(flatten)]
        market: MarketArgs,
        #[command(flatten)]
        prices: PriceArgs,
        #[arg(long)]
        grid: Option<usize>,
        #[arg(long, value_enum, default_value_t = HomeArg::X)]
        home: HomeArg,
        #[arg(long)]
        svg: Option<PathBuf>,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Profit and its derivatives at given prices.
    Calc {
        #[command(flatten)]
        market: MarketArgs,
        #[command(flatten)]
        prices: PriceArgs,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Sufficient conditions on the laws, and at given prices if supplied.
    Check {
        #[command(flatten)]
        market: MarketArgs,
        #[arg(long, requires = "py")]
        px: Option<f64>,
        #[arg(long, requires = "px")]
        py: Option<f64>,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Monte Carlo consumers against the quadrature demands.
    Simulate {
        #[command(flatten)]
        market: MarketArgs,
        #[command(flatten)]
        prices: PriceArgs,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Closed-form prices with perfectly negatively correlated valuations.
    Hotelling {
        #[arg(long = "mu-x", default_value_t = 0.5)]
        mu_x: f64,
        #[arg(long = "cx", default_value_t = 0.0)]
        c_x: f64,
        #[arg(long = "cy", default_value_t = 0.0)]
        c_y: f64,
        #[arg(long, default_value_t = 0.1)]
        s: f64,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Symmetric equilibrium with n firms; law and cost taken from firm X.
    Oligopoly {
        #[command(flatten)]
        market: MarketArgs,
        #[arg(long = "firms", default_value_t = 3)]
        firms: usize,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Monopoly price of each firm's law and cost.
    Monopoly {
        #[command(flatten)]
        market: MarketArgs,
        #[command(flatten)]
        out: OutArgs,
    },
}

#[derive(Debug, Clone, Args)]
pub struct MarketArgs {
    /// Market or run config JSON; without it a symmetric uniform market with
    /// zero costs is used.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides the search cost.
    #[arg(long)]
    pub s: Option<f64>,
    #[arg(long, value_enum)]
    pub variant: Option<VariantArg>,
}

#[derive(Debug, Clone, Args)]
pub struct PriceArgs {
    #[arg(long)]
    pub px: f64,
    #[arg(long)]
    pub py: f64,
    /// Expected price of X; defaults to `px`.
    #[arg(long = "ce-x")]
    pub ce_x: Option<f64>,
    #[arg(long = "ce-y")]
    pub ce_y: Option<f64>,
}

impl PriceArgs {
    fn profile(&self) -> PriceProfile {
        PriceProfile::new(self.px, self.py, self.ce_x.unwrap_or(self.px), self.ce_y.unwrap_or(self.py))
    }
}

#[derive(Debug, Clone, Args)]
pub struct OutArgs {
    /// Output path; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum VariantArg {
    Known,
    Unknown,
    Full,
}

impl From<VariantArg> for Variant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::Known => Variant::Known,
            VariantArg::Unknown => Variant::Unknown,
            VariantArg::Full => Variant::FullInformation,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum HomeArg {
    #[value(name = "X", alias = "x")]
    X,
    #[value(name = "Y", alias = "y")]
    Y,
}

/// A config file: the market plus optional command settings. A file whose
/// top level has `firms` is read as a bare market.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub market: MarketParams,
    #[serde(default)]
    pub grid_n: Option<usize>,
    #[serde(default)]
    pub n: Option<usize>,
    #[serde(default)]
    pub seed: Option<u64>,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Model(#[from] Error),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Model(Error::NoConvergence { .. }) | CliError::Model(Error::Quadrature(_)) => {
                EXIT_NO_CONVERGENCE
            }
            CliError::Model(_) => EXIT_VALIDATION,
            CliError::Io { .. } => EXIT_IO,
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn config_error(path: &Path, message: String) -> CliError {
    CliError::Model(Error::Config {
        path: path.display().to_string(),
        message,
    })
}

/// Parses config text; errors name the offending field path.
pub fn parse_config(text: &str, path: &Path) -> CliResult<RunConfig> {
    let value: Value = serde_json::from_str(text).map_err(|e| config_error(path, format!("malformed JSON: {e}")))?;
    let bare = value.as_object().is_some_and(|o| o.contains_key("firms"));
    let located = |e: serde_path_to_error::Error<serde_json::Error>, prefix: &str| {
        let at = e.path().to_string();
        let at = match (prefix, at.as_str()) {
            ("", ".") => "<root>".to_string(),
            (p, ".") => p.to_string(),
            ("", a) => a.to_string(),
            (p, a) => format!("{p}.{a}"),
        };
        config_error(path, format!("at {at}: {}", e.inner()))
    };
    if bare {
        let market: MarketParams = serde_path_to_error::deserialize(value).map_err(|e| located(e, ""))?;
        Ok(RunConfig {
            market,
            grid_n: None,
            n: None,
            seed: None,
        })
    } else {
        serde_path_to_error::deserialize(value).map_err(|e| located(e, ""))
    }
}

pub fn load_config(path: &Path) -> CliResult<RunConfig> {
    let text = fs::read_to_string(path).map_err(|e| config_error(path, e.to_string()))?;
    parse_config(&text, path)
}

fn default_market() -> MarketParams {
    MarketParams::symmetric(Distribution::uniform(), 0.0, 0.1, Variant::Known).expect("valid default market")
}

fn resolve(args: &MarketArgs) -> CliResult<RunConfig> {
    let mut cfg = match &args.config {
        Some(p) => load_config(p)?,
        None => RunConfig {
            market: default_market(),
            grid_n: None,
            n: None,
            seed: None,
        },
    };
    let m = &cfg.market;
    let s = args.s.unwrap_or(m.s);
    let variant = args.variant.map(Variant::from).unwrap_or(m.variant);
    cfg.market = MarketParams::new(m.firms.clone(), s, variant)?;
    Ok(cfg)
}

fn meta(command: &str, deterministic: bool, extra: Value) -> Value {
    let mut m = json!({
        "command": command,
        "version": env!("CARGO_PKG_VERSION"),
        "deterministic": deterministic,
        "quadrature_nodes_per_interval": GL_NODES,
        "significant_digits": SIG_DIGITS,
        "price_tol": equilibrium::PRICE_TOL,
        "max_iterations": equilibrium::MAX_ITERATIONS,
        "distinct_tol": equilibrium::DISTINCT_TOL,
        "best_response_grid": BR_GRID,
    });
    if let (Some(o), Value::Object(e)) = (m.as_object_mut(), extra) {
        o.extend(e);
    }
    m
}

fn write_text(out: &Option<PathBuf>, text: &str) -> CliResult<()> {
    match out {
        Some(p) => fs::write(p, text).map_err(|e| CliError::Io {
            path: p.display().to_string(),
            message: e.to_string(),
        }),
        None => {
            let mut so = std::io::stdout().lock();
            so.write_all(text.as_bytes()).map_err(|e| CliError::Io {
                path: "<stdout>".into(),
                message: e.to_string(),
            })
        }
    }
}

fn json_text<T: Serialize>(v: &T) -> CliResult<String> {
    to_json_string(v).map_err(|e| CliError::Io {
        path: "<json>".into(),
        message: e.to_string(),
    })
}

fn emit_json(out: &OutArgs, meta: Value, body: Value) -> CliResult<()> {
    let mut doc = json!({ "meta": meta });
    if let (Some(d), Value::Object(b)) = (doc.as_object_mut(), body) {
        d.extend(b);
    }
    write_text(&out.out, &json_text(&doc)?)
}

/// CSV to `out` plus the metadata sidecar; to stdout the CSV alone.
fn emit_csv(out: &OutArgs, meta: Value, csv: &str) -> CliResult<()> {
    write_text(&out.out, csv)?;
    if let Some(p) = &out.out {
        let mut side = p.clone().into_os_string();
        side.push(".meta.json");
        write_text(&Some(PathBuf::from(side)), &json_text(&meta)?)?;
    }
    Ok(())
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("report types serialize")
}

fn linspace(from: f64, to: f64, steps: usize) -> CliResult<Vec<f64>> {
    if steps < 2 || !(from.is_finite() && to.is_finite()) || to < from {
        return Err(Error::InvalidArgument(format!(
            "grid needs finite from ≤ to and at least 2 steps, got [{from}, {to}] with {steps}"
        ))
        .into());
    }
    Ok((0..steps)
        .map(|k| from + (to - from) * k as f64 / (steps - 1) as f64)
        .collect())
}

pub fn execute(cli: &Cli) -> CliResult<()> {
    let det = cli.deterministic;
    match &cli.command {
        Command::Solve { market, out } => {
            let cfg = resolve(market)?;
            let m = &cfg.market;
            let extra = json!({ "market": to_value(m) });
            let body = if m.variant == Variant::Unknown {
                to_value(&solve_unknown(m)?)
            } else {
                json!({ "equilibria": to_value(&equilibrium::solve(m)?) })
            };
            emit_json(out, meta("solve", det, extra), body)
        }
        Command::Sweep {
            market,
            param,
            from,
            to,
            steps,
            out,
        } => {
            let cfg = resolve(market)?;
            let p: SweepParam = param.parse()?;
            let grid = linspace(*from, *to, *steps)?;
            let rows = equilibrium::sweep(&cfg.market, p, &grid, det)?;
            let extra = json!({
                "market": to_value(&cfg.market),
                "param": param,
                "from": from,
                "to": to,
                "steps": steps,
                "selection": "highest-price equilibrium",
                "header": equilibrium::SWEEP_HEADER,
            });
            emit_csv(out, meta("sweep", det, extra), &equilibrium::sweep_csv(&rows))
        }
        Command::Regions {
            market,
            prices,
            grid,
            home,
            svg,
            out,
        } => {
            let cfg = resolve(market)?;
            let grid_n = grid.or(cfg.grid_n).unwrap_or(DEFAULT_REGION_GRID);
            let pr = prices.profile();
            pr.validate(&cfg.market)?;
            let home = match home {
                HomeArg::X => Firm::X,
                HomeArg::Y => Firm::Y,
            };
            let map = region_map(&cfg.market, &pr, home, grid_n)?;
            let extra = json!({
                "market": to_value(&cfg.market),
                "prices": to_value(&pr),
                "home": home,
                "grid_n": grid_n,
                "header": "vx,vy,outcome",
                "fractions": ConsumerFractions::from(map.fractions()),
            });
            if let Some(path) = svg {
                write_text(&Some(path.clone()), &map.to_svg(DEFAULT_SVG_PX))?;
            }
            emit_csv(out, meta("regions", det, extra), &map.to_csv())
        }
        Command::Calc { market, prices, out } => {
            let cfg = resolve(market)?;
            let pr = prices.profile();
            pr.validate(&cfg.market)?;
            let reports = [
                calculus_report(&cfg.market, &pr, Firm::X)?,
                calculus_report(&cfg.market, &pr, Firm::Y)?,
            ];
            let extra = json!({ "market": to_value(&cfg.market), "prices": to_value(&pr) });
            emit_json(out, meta("calc", det, extra), json!({ "firms": to_value(&reports) }))
        }
        Command::Check { market, px, py, out } => {
            let cfg = resolve(market)?;
            let m = &cfg.market;
            let mut body = json!({
                "price_conditions": Firm::BOTH
                    .iter()
                    .map(|&i| to_value(&check_lemma1(m.dist(i), m.cost(i))))
                    .collect::<Vec<_>>(),
                "density_conditions": to_value(&check_lemma2(m)),
            });
            if let (Some(px), Some(py)) = (px, py) {
                let pr = PriceProfile::pure(*px, *py);
                pr.validate(m)?;
                body["equilibrium_conditions"] = to_value(&check_thm1(m, &pr));
            }
            let extra = json!({ "market": to_value(m), "check_grid": DEFAULT_CHECK_GRID });
            emit_json(out, meta("check", det, extra), body)
        }
        Command::Simulate {
            market,
            prices,
            n,
            seed,
            out,
        } => {
            let cfg = resolve(market)?;
            let n = n.or(cfg.n).unwrap_or(DEFAULT_SIM_N);
            let seed = seed.or(cfg.seed).unwrap_or(DEFAULT_SEED);
            let pr = prices.profile();
            let report = simulate(&cfg.market, &pr, n, seed)?;
            let exact = demand_pair(&cfg.market, &pr)?;
            let cs = surplus(&cfg.market, &pr)?.consumer_surplus;
            let table = compare(&report, &exact, Some(cs));
            let extra = json!({
                "market": to_value(&cfg.market),
                "prices": to_value(&pr),
                "n": n,
                "seed": seed,
                "z_limit": Z_LIMIT,
                "generator": "ChaCha8, one stream per consumer",
            });
            emit_json(
                out,
                meta("simulate", det, extra),
                json!({ "simulation": to_value(&report), "exact": to_value(&exact), "comparison": to_value(&table) }),
            )
        }
        Command::Hotelling { mu_x, c_x, c_y, s, out } => {
            let h = hotelling_prices(*mu_x, 1.0 - mu_x, *c_x, *c_y, *s)?;
            let extra = json!({ "mu": [mu_x, 1.0 - mu_x], "costs": [c_x, c_y], "s": s });
            emit_json(out, meta("hotelling", det, extra), json!({ "hotelling": to_value(&h) }))
        }
        Command::Oligopoly { market, firms, out } => {
            let cfg = resolve(market)?;
            let m = &cfg.market;
            let r = oligopoly_solve(*firms, m.dist(Firm::X), m.cost(Firm::X), m.s)?;
            let extra = json!({
                "dist": to_value(m.dist(Firm::X)),
                "cost": m.cost(Firm::X),
                "s": m.s,
                "selection": "highest symmetric root",
            });
            emit_json(out, meta("oligopoly", det, extra), json!({ "oligopoly": to_value(&r) }))
        }
        Command::Monopoly { market, out } => {
            let cfg = resolve(market)?;
            let m = &cfg.market;
            let prices = [
                monopoly_price(m.dist(Firm::X), m.cost(Firm::X))?,
                monopoly_price(m.dist(Firm::Y), m.cost(Firm::Y))?,
            ];
            let extra = json!({ "market": to_value(m) });
            emit_json(out, meta("monopoly", det, extra), json!({ "monopoly_prices": prices }))
        }
    }
}

#[derive(Serialize)]
struct ConsumerFractions {
    buy_home_no_search: f64,
    exit_no_search: f64,
    search_buy_home: f64,
    search_switch: f64,
    search_exit: f64,
}

impl From<[f64; 5]> for ConsumerFractions {
    fn from(f: [f64; 5]) -> Self {
        Self {
            buy_home_no_search: f[0],
            exit_no_search: f[1],
            search_buy_home: f[2],
            search_switch: f[3],
            search_exit: f[4],
        }
    }
}

/// Parses `argv`, runs the command and returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_VALIDATION } else { EXIT_OK };
        }
    };
    let result = if cli.deterministic {
        match rayon::ThreadPoolBuilder::new().num_threads(1).build() {
            Ok(pool) => pool.install(|| execute(&cli)),
            Err(e) => Err(CliError::Io {
                path: "<thread pool>".into(),
                message: e.to_string(),
            }),
        }
    } else {
        execute(&cli)
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> CliResult<RunConfig> {
        parse_config(text, Path::new("m.json"))
    }

    const MARKET: &str = r#"{"firms":[{"cost":0,"mu":0.5,"dist":{"type":"uniform"}},
        {"cost":0,"mu":0.5,"dist":{"type":"step","breaks":[0.5],"densities":[1.5,0.5]}}],"s":0.1}"#;

    #[test]
    fn bare_and_wrapped_configs() {
        let a = parse(MARKET).unwrap();
        assert_eq!(a.market.variant, Variant::Known);
        let b = parse(&format!(r#"{{"market":{MARKET},"seed":3}}"#)).unwrap();
        assert_eq!(a.market, b.market);
        assert_eq!(b.seed, Some(3));
    }

    #[test]
    fn unknown_key_names_its_path() {
        let bad = MARKET.replace(r#""cost":0,"mu":0.5,"dist":{"type":"uniform"}"#, r#""cost":0,"mu":0.5,"colour":1,"dist":{"type":"uniform"}"#);
        let e = parse(&bad).unwrap_err();
        assert_eq!(e.exit_code(), EXIT_VALIDATION);
        let msg = e.to_string();
        assert!(msg.contains("firms[0]") && msg.contains("colour"), "{msg}");

        let e = parse(&format!(r#"{{"market":{MARKET},"sed":1}}"#)).unwrap_err();
        assert!(e.to_string().contains("sed"), "{e}");
    }

    #[test]
    fn invalid_values_are_validation_errors() {
        let e = parse(&MARKET.replace(r#""s":0.1"#, r#""s":-1"#)).unwrap_err();
        assert_eq!(e.exit_code(), EXIT_VALIDATION);
        let e = parse(&MARKET.replace("[1.5,0.5]", "[1.5,0.4]")).unwrap_err();
        assert!(e.to_string().contains("firms"), "{e}");
        assert_eq!(parse("{").unwrap_err().exit_code(), EXIT_VALIDATION);
    }

    #[test]
    fn solver_failures_exit_3() {
        let e = CliError::Model(Error::NoConvergence {
            iterations: 1,
            tail: vec![],
        });
        assert_eq!(e.exit_code(), EXIT_NO_CONVERGENCE);
    }

    #[test]
    fn grid_endpoints_included() {
        let g = linspace(0.02, 0.6, 30).unwrap();
        assert_eq!(g.len(), 30);
        assert_eq!((g[0], g[29]), (0.02, 0.6));
        assert!(linspace(0.0, 1.0, 1).is_err());
    }
}
