//! Batch front-end. Every command writes deterministic CSV (or JSON) to
//! `--out` or stdout; diagnostics go to stderr.
//!
//! Exit codes: 0 ok, 2 bad input, 3 numeric failure, 4 more than half of a
//! sweep's indices failed.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::chain::{validate_chain, ChainFile, Distribution, MarkovChain, StochasticMatrix};
use crate::cutoff::{self, CutoffReport, DnDecomposition, FamilyMember, FamilySpec, RDiagnostic, VerdictThresholds};
use crate::distances::DistanceKind;
use crate::error::{Error, Result};
use crate::kernel::{self, SearchOptions, Start, TimeMode, UniformizationParams};
use crate::models::{self, parse_params, LacoinParams, Model, TwoStateParams};
use crate::product::{self, MixingTimeCache, ProductSpec, ProductStarts, DENSE_PRODUCT_LIMIT};
use crate::report::{fmt_f64, fmt_opt, ABSENT, UNITS_LINE};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;
pub const EXIT_PARTIAL: i32 = 4;

#[derive(Parser, Debug)]
#[command(name = "mixcut", version, about = "Mixing times, product bounds and cutoff diagnostics for finite Markov chains")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Check a chain file (or model) and print the validation report as JSON.
    Validate(Common),
    /// Distance to stationarity on a time grid.
    DistanceCurve(Common),
    /// Mixing times for one or more epsilons.
    MixTime(Common),
    /// Exact and bracketing product distances on a time grid.
    ProductEval(Common),
    /// Mixing-time profile and cutoff diagnostics over an index range.
    CutoffScan(Common),
    /// Maximum distances of the shortcut chain against its envelope bounds.
    LacoinBounds(Common),
    /// Write a registry model as a chain file.
    ModelEmit(Common),
}

#[derive(Args, Debug, Clone, Default)]
pub struct Common {
    /// JSON file with the same keys as the long flags; flags win.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// tv | hellinger | l2
    #[arg(long)]
    pub kind: Option<String>,
    /// One value or a comma-separated list.
    #[arg(long)]
    pub epsilon: Option<String>,
    /// Second threshold of a cutoff scan (default 1 − ε).
    #[arg(long)]
    pub delta: Option<f64>,
    /// `a:b:steps`, `steps` equal intervals (so `steps + 1` points).
    #[arg(long = "t-grid")]
    pub t_grid: Option<String>,
    /// `a:b` (every index) or `a:b:x2` (doubling).
    #[arg(long = "n-range")]
    pub n_range: Option<String>,
    /// Comma-separated indices.
    #[arg(long = "n-list")]
    pub n_list: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// JSON report of a cutoff scan (default: `--out` with a `.json` extension).
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[arg(long = "tail-tol")]
    pub tail_tol: Option<f64>,
    /// Registry model (or family, for cutoff-scan).
    #[arg(long)]
    pub model: Option<String>,
    /// Model parameters as `key=value`, repeatable or comma-separated.
    #[arg(long = "param", short = 'p')]
    pub params: Vec<String>,
    #[arg(long)]
    pub chain: Option<PathBuf>,
    #[arg(long)]
    pub product: Option<PathBuf>,
    /// `max`, `stationary`, a state index, or `dist:w0,w1,…`; products take `max` or `zero`.
    #[arg(long)]
    pub start: Option<String>,
    /// Discrete time (steps) instead of continuous time.
    #[arg(long)]
    pub discrete: bool,
    /// Constant `c` of the tail-sum grid (cutoff-scan with `--sequence-gamma`).
    #[arg(long = "r-c")]
    pub r_c: Option<f64>,
    /// Offsets `m` of the tail-sum grid, comma-separated.
    #[arg(long = "m-list")]
    pub m_list: Option<String>,
    /// Adds tail sums and `D_n` for cycles weighted `i² e^{−i^γ}`.
    #[arg(long = "sequence-gamma")]
    pub sequence_gamma: Option<f64>,
}

/// File form of [`Common`].
#[derive(Deserialize, Debug, Default)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
struct FileConfig {
    kind: Option<String>,
    epsilon: Option<NumOrText>,
    delta: Option<f64>,
    t_grid: Option<String>,
    n_range: Option<String>,
    n_list: Option<NumOrText>,
    out: Option<PathBuf>,
    report: Option<PathBuf>,
    tail_tol: Option<f64>,
    model: Option<String>,
    params: BTreeMap<String, serde_json::Value>,
    chain: Option<PathBuf>,
    product: Option<PathBuf>,
    start: Option<String>,
    discrete: Option<bool>,
    r_c: Option<f64>,
    m_list: Option<NumOrText>,
    sequence_gamma: Option<f64>,
}

#[derive(Deserialize, Debug)]
#[serde(untagged)]
enum NumOrText {
    Num(f64),
    List(Vec<f64>),
    Text(String),
}

impl NumOrText {
    fn into_text(self) -> String {
        match self {
            NumOrText::Num(x) => x.to_string(),
            NumOrText::List(v) => v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(","),
            NumOrText::Text(s) => s,
        }
    }
}

impl Common {
    /// Fills unset flags from `--config`.
    fn resolved(mut self) -> Result<Self> {
        let Some(path) = self.config.clone() else { return Ok(self) };
        let f: FileConfig = serde_json::from_str(&std::fs::read_to_string(&path)?)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let rel = |p: PathBuf| if p.is_relative() { base.join(p) } else { p };
        self.kind = self.kind.or(f.kind);
        self.epsilon = self.epsilon.or(f.epsilon.map(NumOrText::into_text));
        self.delta = self.delta.or(f.delta);
        self.t_grid = self.t_grid.or(f.t_grid);
        self.n_range = self.n_range.or(f.n_range);
        self.n_list = self.n_list.or(f.n_list.map(NumOrText::into_text));
        self.out = self.out.or(f.out);
        self.report = self.report.or(f.report);
        self.tail_tol = self.tail_tol.or(f.tail_tol);
        self.model = self.model.or(f.model);
        self.chain = self.chain.or(f.chain.map(rel));
        self.product = self.product.or(f.product.map(rel));
        self.start = self.start.or(f.start);
        self.discrete = self.discrete || f.discrete.unwrap_or(false);
        self.r_c = self.r_c.or(f.r_c);
        self.m_list = self.m_list.or(f.m_list.map(NumOrText::into_text));
        self.sequence_gamma = self.sequence_gamma.or(f.sequence_gamma);
        // Flag parameters are appended last so they override file ones.
        let mut params: Vec<String> = f
            .params
            .into_iter()
            .map(|(k, v)| match v {
                serde_json::Value::String(s) => format!("{k}={s}"),
                other => format!("{k}={other}"),
            })
            .collect();
        params.append(&mut self.params);
        self.params = params;
        Ok(self)
    }

    fn kind(&self) -> Result<DistanceKind> {
        self.kind.as_deref().unwrap_or("tv").parse()
    }

    fn epsilons(&self, default: f64) -> Result<Vec<f64>> {
        match &self.epsilon {
            None => Ok(vec![default]),
            Some(s) => parse_list(s),
        }
    }

    fn search(&self) -> Result<SearchOptions> {
        let mut opts = SearchOptions::default();
        if let Some(tol) = self.tail_tol {
            opts.params = UniformizationParams::new(tol, opts.params.max_terms)?;
        }
        Ok(opts)
    }

    fn t_grid(&self) -> Result<Vec<f64>> {
        parse_t_grid(self.t_grid.as_deref().ok_or_else(|| Error::InvalidParameter("--t-grid is required".into()))?)
    }

    fn indices(&self) -> Result<Vec<usize>> {
        match (&self.n_list, &self.n_range) {
            (Some(l), _) => {
                let v = l
                    .split(',')
                    .map(|x| x.trim().parse::<usize>().map_err(|_| Error::InvalidParameter(format!("bad index `{x}`"))))
                    .collect::<Result<Vec<_>>>()?;
                if v.is_empty() {
                    return Err(Error::InvalidParameter("empty index list".into()));
                }
                Ok(v)
            }
            (None, Some(r)) => parse_n_range(r),
            (None, None) => Err(Error::InvalidParameter("--n-range or --n-list is required".into())),
        }
    }

    fn params(&self) -> Result<BTreeMap<String, String>> {
        parse_params(&self.params)
    }

    /// The chain named by `--chain` or `--model`.
    fn chain(&self) -> Result<MarkovChain> {
        match (&self.chain, &self.model) {
            (Some(p), _) => MarkovChain::load(p),
            (None, Some(m)) => Model::parse(m, &self.params()?)?.chain(),
            (None, None) => Err(Error::InvalidParameter("--chain or --model is required".into())),
        }
    }

    fn start(&self, chain: &MarkovChain) -> Result<Start> {
        parse_start(self.start.as_deref().unwrap_or("max"), chain)
    }

    fn output(&self) -> Result<Box<dyn Write>> {
        open_output(self.out.as_deref())
    }
}

fn open_output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn parse_list(s: &str) -> Result<Vec<f64>> {
    let v = s
        .split(',')
        .map(|x| x.trim().parse::<f64>().map_err(|_| Error::InvalidParameter(format!("bad number `{x}`"))))
        .collect::<Result<Vec<_>>>()?;
    if v.is_empty() {
        return Err(Error::InvalidParameter("empty list".into()));
    }
    Ok(v)
}

/// `a:b:steps` → `steps + 1` evenly spaced points from `a` to `b`.
pub fn parse_t_grid(s: &str) -> Result<Vec<f64>> {
    let bad = || Error::InvalidParameter(format!("t-grid must be a:b:steps, got `{s}`"));
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() != 3 {
        return Err(bad());
    }
    let a: f64 = parts[0].trim().parse().map_err(|_| bad())?;
    let b: f64 = parts[1].trim().parse().map_err(|_| bad())?;
    let steps: usize = parts[2].trim().parse().map_err(|_| bad())?;
    if !(a.is_finite() && b.is_finite()) || a < 0.0 || b < a || steps == 0 {
        return Err(Error::InvalidParameter(format!("t-grid `{s}` is empty")));
    }
    Ok((0..=steps).map(|k| if k == steps { b } else { a + (b - a) * k as f64 / steps as f64 }).collect())
}

/// `a:b` (every index) or `a:b:x2` (doubling from `a`).
pub fn parse_n_range(s: &str) -> Result<Vec<usize>> {
    let bad = || Error::InvalidParameter(format!("n-range must be a:b or a:b:x2, got `{s}`"));
    let parts: Vec<&str> = s.split(':').collect();
    if !(2..=3).contains(&parts.len()) {
        return Err(bad());
    }
    let a: usize = parts[0].trim().parse().map_err(|_| bad())?;
    let b: usize = parts[1].trim().parse().map_err(|_| bad())?;
    if a == 0 || b < a {
        return Err(Error::InvalidParameter(format!("n-range `{s}` is empty")));
    }
    match parts.get(2).map(|x| x.trim()) {
        None => Ok((a..=b).collect()),
        Some("x2") => Ok(std::iter::successors(Some(a), |&n| n.checked_mul(2)).take_while(|&n| n <= b).collect()),
        Some(_) => Err(bad()),
    }
}

fn parse_start(s: &str, chain: &MarkovChain) -> Result<Start> {
    let n = chain.size();
    match s {
        "max" => Ok(Start::Max),
        "stationary" => Ok(Start::Dist(chain.stationary().clone())),
        _ => {
            if let Some(w) = s.strip_prefix("dist:") {
                let d = Distribution::new(parse_list(w)?)?;
                if d.len() != n {
                    return Err(Error::DimensionMismatch { expected: n, found: d.len() });
                }
                return Ok(Start::Dist(d));
            }
            let i: usize = s.parse().map_err(|_| Error::InvalidParameter(format!("unknown start `{s}`")))?;
            if i >= n {
                return Err(Error::InvalidParameter(format!("start state {i} outside 0..{n}")));
            }
            Ok(Start::point(n, i))
        }
    }
}

fn exit_code(e: &Error) -> i32 {
    if e.is_numeric() {
        EXIT_NUMERIC
    } else {
        EXIT_INPUT
    }
}

/// Parses `std::env::args` and runs; returns the process exit code.
pub fn run() -> i32 {
    run_with(std::env::args_os())
}

pub fn run_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn execute(cmd: Command) -> Result<i32> {
    match cmd {
        Command::Validate(c) => cmd_validate(c.resolved()?),
        Command::DistanceCurve(c) => cmd_distance_curve(c.resolved()?),
        Command::MixTime(c) => cmd_mix_time(c.resolved()?),
        Command::ProductEval(c) => cmd_product_eval(c.resolved()?),
        Command::CutoffScan(c) => cmd_cutoff_scan(c.resolved()?),
        Command::LacoinBounds(c) => cmd_lacoin_bounds(c.resolved()?),
        Command::ModelEmit(c) => cmd_model_emit(c.resolved()?),
    }
}

#[derive(Serialize)]
struct ValidateOutput {
    source: String,
    report: crate::chain::ValidationReport,
    reversible: Option<bool>,
    size: usize,
}

fn cmd_validate(c: Common) -> Result<i32> {
    let (source, kernel, pi) = match (&c.chain, &c.model) {
        (Some(p), _) => {
            let f: ChainFile = serde_json::from_str(&std::fs::read_to_string(p)?)?;
            let pi = f.stationary.map(Distribution::from_unnormalized).transpose()?;
            (p.display().to_string(), StochasticMatrix::from_rows(f.matrix)?, pi)
        }
        (None, Some(m)) => {
            let chain = Model::parse(m, &c.params()?)?.chain()?;
            (m.clone(), chain.kernel().clone(), Some(chain.stationary().clone()))
        }
        (None, None) => return Err(Error::InvalidParameter("--chain or --model is required".into())),
    };
    let report = validate_chain(&kernel, pi.as_ref());
    let reversible = if report.ok {
        Some(MarkovChain::new(source.clone(), kernel.clone())?.reversible())
    } else {
        None
    };
    let ok = report.ok;
    let mut w = c.output()?;
    serde_json::to_writer_pretty(&mut w, &ValidateOutput { source, size: kernel.size(), report, reversible })?;
    writeln!(w)?;
    w.flush()?;
    if !ok {
        eprintln!("error: chain failed validation");
    }
    Ok(if ok { EXIT_OK } else { EXIT_INPUT })
}

fn cmd_distance_curve(c: Common) -> Result<i32> {
    let chain = c.chain()?;
    let kind = c.kind()?;
    let start = c.start(&chain)?;
    let times = c.t_grid()?;
    let curve = if c.discrete {
        let values = times
            .iter()
            .map(|&t| kernel::discrete_distance_at_start(&chain, kind, &start, t.round() as u64))
            .collect::<Result<Vec<_>>>()?;
        kernel::DistanceCurve { times: times.iter().map(|t| t.round()).collect(), values, kind, start: start.label() }
    } else {
        kernel::distance_curve(&chain, kind, &start, &times, &c.search()?.params)?
    };
    let mut w = c.output()?;
    curve.write_csv(&mut w)?;
    w.flush()?;
    Ok(EXIT_OK)
}

fn cmd_mix_time(c: Common) -> Result<i32> {
    let chain = c.chain()?;
    let kind = c.kind()?;
    let start = c.start(&chain)?;
    let opts = c.search()?;
    let mode = if c.discrete { TimeMode::Discrete } else { TimeMode::Continuous };
    let mut rows = Vec::new();
    for eps in c.epsilons(0.25)? {
        rows.push(kernel::mixing_time(&chain, kind, eps, &start, mode, &opts)?);
    }
    let mut w = c.output()?;
    writeln!(w, "{UNITS_LINE}")?;
    writeln!(w, "kind,epsilon,start,mode,T,resolution")?;
    for m in rows {
        let mode = if m.mode == TimeMode::Discrete { "discrete" } else { "continuous" };
        writeln!(w, "{},{},{},{},{},{}", kind, fmt_f64(m.epsilon), start.label(), mode, fmt_f64(m.value), fmt_f64(m.resolution))?;
    }
    w.flush()?;
    Ok(EXIT_OK)
}

fn product_spec(c: &Common) -> Result<ProductSpec> {
    match &c.product {
        Some(p) => ProductSpec::load(p),
        None => Err(Error::InvalidParameter("--product is required".into())),
    }
}

fn product_starts(c: &Common, spec: &ProductSpec) -> Result<ProductStarts> {
    match c.start.as_deref().unwrap_or("max") {
        "max" => Ok(ProductStarts::Max),
        "zero" => Ok(ProductStarts::PerCoordinate(spec.coords().iter().map(|k| Distribution::point_mass(k.size(), 0)).collect())),
        other => Err(Error::InvalidParameter(format!("product start must be `max` or `zero`, got `{other}`"))),
    }
}

/// `Ok(None)` where a bound's time threshold is not met.
fn optional_bound(r: Result<f64>) -> Result<Option<f64>> {
    match r {
        Ok(x) => Ok(Some(x)),
        Err(Error::TimeTooSmall { .. }) => Ok(None),
        Err(e) => Err(e),
    }
}

fn cmd_product_eval(c: Common) -> Result<i32> {
    let spec = product_spec(&c)?;
    let starts = product_starts(&c, &spec)?;
    let times = c.t_grid()?;
    let opts = c.search()?;
    let eps = c.epsilons(0.1)?;
    let eps: Vec<f64> = if eps.len() == 1 { vec![eps[0]; spec.len()] } else { eps };
    if eps.len() != spec.len() {
        return Err(Error::DimensionMismatch { expected: spec.len(), found: eps.len() });
    }
    let dense = match spec.state_count() {
        Some(n) if n <= DENSE_PRODUCT_LIMIT => Some(product::dense_product_chain(&spec)?),
        _ => None,
    };
    let dense_start = starts.product_measure().map_or(Start::Max, Start::Dist);
    let cache = MixingTimeCache::new(opts);
    // Tail bounds are statements about the worst start.
    let tails_apply = starts == ProductStarts::Max;
    let mut w = c.output()?;
    writeln!(w, "{UNITS_LINE}")?;
    writeln!(
        w,
        "t,hellinger_exact,tv_lower,tv_upper,tv_dense,hellinger_dense,prod_tv_lower,prod_tv_upper,prod_hellinger_sq_lower,prod_hellinger_sq_upper,tail_tv,tail_hellinger"
    )?;
    for &t in &times {
        let h = product::product_hellinger_exact(&spec, t, &starts, &opts.params)?;
        let tv = product::product_tv_bracket(&spec, t, &starts, &opts.params)?;
        let ptv = product::prodmixing_bounds(&spec, t, DistanceKind::Tv, &starts, &opts.params)?;
        let ph = product::prodmixing_bounds(&spec, t, DistanceKind::Hellinger, &starts, &opts.params)?;
        let (tv_dense, h_dense) = match &dense {
            Some(d) => (
                Some(kernel::distance_at_start(d, DistanceKind::Tv, &dense_start, t, &opts.params)?),
                Some(kernel::distance_at_start(d, DistanceKind::Hellinger, &dense_start, t, &opts.params)?),
            ),
            None => (None, None),
        };
        let (tail_tv, tail_h) = if tails_apply {
            (
                optional_bound(product::tail_bound_tv(&spec, t, &eps, None, &cache))?,
                if eps.iter().all(|e| *e < 0.25) {
                    optional_bound(product::tail_bound_hellinger(&spec, t, &eps, None, &cache))?
                } else {
                    None
                },
            )
        } else {
            (None, None)
        };
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            fmt_f64(t),
            fmt_f64(h),
            fmt_f64(tv.lower),
            fmt_f64(tv.upper),
            fmt_opt(tv_dense),
            fmt_opt(h_dense),
            fmt_f64(ptv.bracket.lower),
            fmt_f64(ptv.bracket.upper),
            fmt_f64(ph.bracket.lower),
            fmt_f64(ph.bracket.upper),
            fmt_opt(tail_tv),
            fmt_opt(tail_h),
        )?;
    }
    w.flush()?;
    Ok(EXIT_OK)
}

/// Families addressable by `cutoff-scan --model`.
pub fn resolve_family(name: &str, params: &BTreeMap<String, String>) -> Result<FamilySpec> {
    let get = |k: &str| -> Result<f64> {
        params
            .get(k)
            .ok_or_else(|| Error::InvalidParameter(format!("missing parameter `{k}`")))?
            .parse()
            .map_err(|_| Error::InvalidParameter(format!("cannot parse `{k}`")))
    };
    match name {
        "ehrenfest" => Ok(cutoff::ehrenfest_family()),
        "lazy-path" => Ok(cutoff::lazy_path_family()),
        "cycle" => Ok(cutoff::cycle_family()),
        "two-state" => Ok(cutoff::two_state_product_family(TwoStateParams::new(get("alpha")?, get("beta")?)?)),
        "interleaved" => cutoff::interleaved_product_family(get("r")?),
        "lacoin" => {
            let (a, b) = (get("a")?, get("b")?);
            let beta = if params.contains_key("beta") { get("beta")? } else { 0.0 };
            LacoinParams::new(1, a, b, beta)?;
            Ok(FamilySpec::new(format!("lacoin(a={a}, b={b}, beta={beta})"), move |n| {
                models::lacoin_chain(&LacoinParams::new(n, a, b, beta)?).map(FamilyMember::chain)
            }))
        }
        other => Err(Error::UnknownModel(other.into())),
    }
}

#[derive(Serialize)]
struct ScanReport {
    cutoff: CutoffReport,
    partial: bool,
    tail_sums: Option<RDiagnostic>,
    d_n: Option<DnDecomposition>,
}

fn cmd_cutoff_scan(c: Common) -> Result<i32> {
    let model = c.model.clone().ok_or_else(|| Error::InvalidParameter("--model is required".into()))?;
    let family = resolve_family(&model, &c.params()?)?;
    let kind = c.kind()?;
    let indices = c.indices()?;
    let opts = c.search()?;
    let eps = c.epsilons(0.25)?[0];
    let delta = c.delta.unwrap_or(1.0 - eps);
    let report = cutoff::cutoff_ratio_diagnostic(&family, kind, eps, delta, &indices, &opts, VerdictThresholds::default())?;
    for f in &report.failures {
        eprintln!("index {} failed: {}", f.index, f.message);
    }

    let (tail_sums, d_n) = match c.sequence_gamma {
        None => (None, None),
        Some(gamma) => {
            let seq = cutoff::psrw_family(gamma, eps);
            let ok: Vec<usize> = report.indices.clone();
            let m_list = match &c.m_list {
                Some(s) => parse_list(s)?.into_iter().map(|x| x as usize).collect(),
                None => vec![0, 1, 2],
            };
            let r = cutoff::r_estimator(&seq, kind, c.r_c.unwrap_or(1.0), &ok, &m_list, &opts)?;
            let d = cutoff::dn_decomposition(&seq, kind, &ok, None, &opts)?;
            (Some(r), Some(d))
        }
    };

    let mut w = c.output()?;
    writeln!(w, "{UNITS_LINE}")?;
    let mut header = vec!["n".to_string(), "T".into(), "T_delta".into(), "ratio".into(), "window".into()];
    if let Some(r) = &tail_sums {
        header.extend(r.m_list.iter().map(|m| format!("S(m={m})")));
        // the sums underflow quickly; logs keep the trend readable
        header.extend(r.m_list.iter().map(|m| format!("log_S(m={m})")));
    }
    if d_n.is_some() {
        header.push("D_n".into());
    }
    writeln!(w, "{}", header.join(","))?;
    let mut all: Vec<usize> = indices.clone();
    all.sort_unstable();
    all.dedup();
    for n in all {
        let mut row = vec![n.to_string()];
        match report.indices.iter().position(|&i| i == n) {
            Some(k) => {
                row.extend([report.times_eps[k], report.times_delta[k], report.ratios[k], report.windows[k]].map(fmt_f64));
                if let Some(r) = &tail_sums {
                    row.extend(r.grid[k].iter().map(|x| fmt_f64(*x)));
                    row.extend(r.log_grid[k].iter().map(|x| fmt_f64(*x)));
                }
                if let Some(d) = &d_n {
                    row.push(fmt_f64(d.d[k]));
                }
            }
            None => row.extend(std::iter::repeat(ABSENT.to_string()).take(header.len() - 1)),
        }
        writeln!(w, "{}", row.join(","))?;
    }
    w.flush()?;

    let n_total = report.indices.len() + report.failures.len();
    let failed = report.failures.len();
    let scan = ScanReport { partial: failed > 0, cutoff: report, tail_sums, d_n };
    let report_path = c.report.clone().or_else(|| c.out.as_ref().map(|p| p.with_extension("json")));
    match report_path {
        Some(p) => {
            let mut rw = open_output(Some(&p))?;
            serde_json::to_writer_pretty(&mut rw, &scan)?;
            writeln!(rw)?;
            rw.flush()?;
        }
        None => eprintln!("verdict: {}", scan.cutoff.verdict),
    }
    Ok(if 2 * failed > n_total { EXIT_PARTIAL } else { EXIT_OK })
}

fn cmd_lacoin_bounds(c: Common) -> Result<i32> {
    let p = c.params()?;
    let get = |k: &str| -> Result<String> { p.get(k).cloned().ok_or_else(|| Error::InvalidParameter(format!("missing parameter `{k}`"))) };
    let num = |k: &str| -> Result<f64> { get(k)?.parse().map_err(|_| Error::InvalidParameter(format!("cannot parse `{k}`"))) };
    let n: usize = get("n")?.parse().map_err(|_| Error::InvalidParameter("cannot parse `n`".into()))?;
    let beta = if p.contains_key("beta") { num("beta")? } else { 0.0 };
    let params = LacoinParams::new(n, num("a")?, num("b")?, beta)?;
    let chain = models::lacoin_chain(&params)?;
    eprintln!("pi(2n) = {}", fmt_f64(chain.stationary().as_slice()[2 * n]));
    let times = c.t_grid()?;
    let opts = c.search()?;
    let mut w = c.output()?;
    writeln!(w, "{UNITS_LINE}")?;
    writeln!(w, "t,max_hellinger_sq,max_tv,hellinger_sq_upper_1,hellinger_sq_upper_2,hellinger_sq_lower,tv_lower")?;
    for &t in &times {
        let h = kernel::max_distance_at(&chain, DistanceKind::Hellinger, t, &opts.params)?;
        let tv = kernel::max_distance_at(&chain, DistanceKind::Tv, t, &opts.params)?;
        let e = models::lacoin_bound_envelope(&params, t);
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            fmt_f64(t),
            fmt_f64(h * h),
            fmt_f64(tv),
            fmt_opt(e.hellinger_sq_upper_1),
            fmt_opt(e.hellinger_sq_upper_2),
            fmt_opt(e.hellinger_sq_lower),
            fmt_opt(e.tv_lower),
        )?;
    }
    w.flush()?;
    Ok(EXIT_OK)
}

fn cmd_model_emit(c: Common) -> Result<i32> {
    let chain = match &c.model {
        Some(m) => Model::parse(m, &c.params()?)?.chain()?,
        None => return Err(Error::InvalidParameter("--model is required".into())),
    };
    let mut w = c.output()?;
    serde_json::to_writer_pretty(&mut w, &chain.to_file())?;
    writeln!(w)?;
    w.flush()?;
    Ok(EXIT_OK)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grids() {
        let g = parse_t_grid("0:5:50").unwrap();
        assert_eq!(g.len(), 51);
        assert_eq!(g[50], 5.0);
        assert!((g[1] - 0.1).abs() < 1e-15);
        assert!(parse_t_grid("5:0:10").is_err());
        assert!(parse_t_grid("0:5:0").is_err());
        assert_eq!(parse_n_range("8:64:x2").unwrap(), vec![8, 16, 32, 64]);
        assert_eq!(parse_n_range("3:5").unwrap(), vec![3, 4, 5]);
        assert!(parse_n_range("5:3").is_err());
    }

    #[test]
    fn clap_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
