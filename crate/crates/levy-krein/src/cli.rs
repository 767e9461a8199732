//! Batch front end: one verb per pipeline, a JSON config per run, seeded
//! determinism, and CSV/JSON/SVG artifacts.
//!
//! Every command reads a single JSON document, applies any command-line
//! overrides (seed, output directory, worker count, format list), runs
//! one library pipeline, and writes its artifacts under the output
//! directory. Reruns with the same config and overrides produce
//! byte-identical CSV and JSON. Each JSON artifact embeds the SHA-256 of
//! the config file bytes and the library version.
//!
//! Exit codes: 0 success, 2 config or validation error, 3 numerical
//! diagnostic failure (non-convergence, pole, ill-posed fit); the binary
//! maps usage errors (unknown command, bad flags) to 64.

use std::fs;
use std::path::PathBuf;

use num_complex::Complex64;
use rand::Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::extrema_chain::{chain_from_first_swing, estimate_h, log_nodes};
use crate::krein_string::{
    entropy_formula, integrate_ad, spectral_transform, EntropyReport, SpectralDensity,
    StringMeasure,
};
use crate::models::{Family, Killing, LevyModel, PositivityParams};
use crate::path_sim::{killed_extrema, mc_map, ExtremaSummary, StepExtrema};
use crate::phi_system::{a_from_phi, solve_phi_with_tol, startup_grid};
use crate::stable_forms::{exit_probability, exit_up_mc};
use crate::string_bridge::{
    build_string, unbounded_transform, verify_spectral_identity, verify_wiener_hopf,
    IdentityCase,
};
use crate::table::MonotoneTable;

/// Library version embedded in every JSON artifact.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// The nine command verbs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Simulate,
    Chain,
    Phi,
    StableExit,
    KreinString,
    Spectral,
    WienerHopf,
    Entropy,
    Rule4,
}

impl Command {
    pub const ALL: [Command; 9] = [
        Command::Simulate,
        Command::Chain,
        Command::Phi,
        Command::StableExit,
        Command::KreinString,
        Command::Spectral,
        Command::WienerHopf,
        Command::Entropy,
        Command::Rule4,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Chain => "chain",
            Command::Phi => "phi",
            Command::StableExit => "stable-exit",
            Command::KreinString => "string",
            Command::Spectral => "spectral",
            Command::WienerHopf => "wiener-hopf",
            Command::Entropy => "entropy",
            Command::Rule4 => "rule4",
        }
    }

    pub fn parse(s: &str) -> Option<Command> {
        Command::ALL.iter().copied().find(|c| c.name() == s)
    }
}

/// Output artifact kinds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    Csv,
    Json,
    Svg,
}

impl Format {
    pub fn parse(s: &str) -> Option<Format> {
        match s {
            "csv" => Some(Format::Csv),
            "json" => Some(Format::Json),
            "svg" => Some(Format::Svg),
            _ => None,
        }
    }
}

/// Command-line overrides; every field beats its config counterpart.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub workers: Option<usize>,
    pub formats: Option<Vec<Format>>,
}

/// One resolved run request.
#[derive(Debug, Clone)]
pub struct Invocation {
    pub command: Command,
    pub config_path: PathBuf,
    pub overrides: Overrides,
}

/// Runs one command, printing written files to stdout and errors to
/// stderr, and maps the outcome to the documented exit code.
pub fn run(inv: &Invocation) -> i32 {
    match execute(inv) {
        Ok(files) => {
            for f in &files {
                println!("wrote {}", f.display());
            }
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Runs one command and returns the files written.
pub fn execute(inv: &Invocation) -> Result<Vec<PathBuf>> {
    let raw = fs::read(&inv.config_path)
        .map_err(|e| io_context(&format!("reading {}", inv.config_path.display()), e))?;
    let mut hasher = Sha256::new();
    hasher.update(&raw);
    let hash = hex_string(&hasher.finalize());
    match inv.command {
        Command::Simulate => cmd_simulate(&raw, &inv.overrides, &hash),
        Command::Chain => cmd_chain(&raw, &inv.overrides, &hash),
        Command::Phi => cmd_phi(&raw, &inv.overrides, &hash),
        Command::StableExit => cmd_stable_exit(&raw, &inv.overrides, &hash),
        Command::KreinString => cmd_string(&raw, &inv.overrides, &hash),
        Command::Spectral => cmd_spectral(&raw, &inv.overrides, &hash),
        Command::WienerHopf => cmd_wiener_hopf(&raw, &inv.overrides, &hash),
        Command::Entropy => cmd_entropy(&raw, &inv.overrides, &hash),
        Command::Rule4 => cmd_rule4(&raw, &inv.overrides, &hash),
    }
}

fn hex_string(bytes: &[u8]) -> String {
    let mut s = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        s.push_str(&format!("{b:02x}"));
    }
    s
}

fn io_context(ctx: &str, e: std::io::Error) -> Error {
    Error::Io(std::io::Error::new(e.kind(), format!("{ctx}: {e}")))
}

fn parse_config<T: DeserializeOwned>(raw: &[u8]) -> Result<T> {
    Ok(serde_json::from_slice(raw)?)
}

/// Common config tail shared by every command.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct CommonFields {
    seed: Option<u64>,
    #[serde(default)]
    out: Option<PathBuf>,
    #[serde(default)]
    formats: Option<Vec<Format>>,
    #[serde(default)]
    workers: Option<usize>,
}

struct Resolved {
    seed: u64,
    out: PathBuf,
    formats: Vec<Format>,
    workers: usize,
}

fn resolve(common: &CommonFields, ov: &Overrides) -> Result<Resolved> {
    let seed = ov.seed.or(common.seed).ok_or_else(|| {
        Error::Validation("config is missing the required seed (no wall-clock default)".into())
    })?;
    let out = ov.out.clone().or_else(|| common.out.clone()).unwrap_or_else(|| PathBuf::from("."));
    let formats = ov
        .formats
        .clone()
        .or_else(|| common.formats.clone())
        .unwrap_or_else(|| vec![Format::Csv, Format::Json]);
    if formats.is_empty() {
        return Err(Error::Validation("format list must not be empty".into()));
    }
    let workers = ov.workers.or(common.workers).unwrap_or(0);
    Ok(Resolved { seed, out, formats, workers })
}

/// JSON envelope wrapped around every command result.
#[derive(Serialize)]
struct Envelope<T: Serialize> {
    command: &'static str,
    version: &'static str,
    config_sha256: String,
    seed: u64,
    result: T,
}

struct Emitter {
    out: PathBuf,
    formats: Vec<Format>,
    written: Vec<PathBuf>,
}

impl Emitter {
    fn new(res: &Resolved) -> Result<Emitter> {
        fs::create_dir_all(&res.out)
            .map_err(|e| io_context(&format!("creating {}", res.out.display()), e))?;
        Ok(Emitter { out: res.out.clone(), formats: res.formats.clone(), written: Vec::new() })
    }

    fn write(&mut self, name: &str, content: &str) -> Result<()> {
        let path = self.out.join(name);
        fs::write(&path, content)
            .map_err(|e| io_context(&format!("writing {}", path.display()), e))?;
        self.written.push(path);
        Ok(())
    }

    fn csv(&mut self, name: &str, content: &str) -> Result<()> {
        if self.formats.contains(&Format::Csv) {
            self.write(name, content)?;
        }
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, envelope: &Envelope<T>) -> Result<()> {
        if self.formats.contains(&Format::Json) {
            let mut body = serde_json::to_string_pretty(envelope)?;
            body.push('\n');
            self.write(name, &body)?;
        }
        Ok(())
    }

    fn svg(&mut self, name: &str, content: &str) -> Result<()> {
        if self.formats.contains(&Format::Svg) {
            self.write(name, content)?;
        }
        Ok(())
    }
}

/// Minimal static polyline plot; the data layer is the polyline points.
struct Series<'a> {
    label: &'a str,
    points: Vec<(f64, f64)>,
}

fn svg_plot(title: &str, series: &[Series], log_x: bool, log_y: bool) -> String {
    const W: f64 = 800.0;
    const H: f64 = 500.0;
    const M: f64 = 60.0;
    let tx = |v: f64| if log_x { v.log10() } else { v };
    let ty = |v: f64| if log_y { v.log10() } else { v };
    let ok = |v: f64, log: bool| v.is_finite() && (!log || v > 0.0);
    let mut pts: Vec<Vec<(f64, f64)>> = Vec::new();
    for s in series {
        pts.push(
            s.points
                .iter()
                .filter(|(x, y)| ok(*x, log_x) && ok(*y, log_y))
                .map(|&(x, y)| (tx(x), ty(y)))
                .collect(),
        );
    }
    let mut x_lo = f64::INFINITY;
    let mut x_hi = f64::NEG_INFINITY;
    let mut y_lo = f64::INFINITY;
    let mut y_hi = f64::NEG_INFINITY;
    for p in pts.iter().flatten() {
        x_lo = x_lo.min(p.0);
        x_hi = x_hi.max(p.0);
        y_lo = y_lo.min(p.1);
        y_hi = y_hi.max(p.1);
    }
    if !x_lo.is_finite() || x_hi <= x_lo {
        x_lo = 0.0;
        x_hi = 1.0;
    }
    if !y_lo.is_finite() || y_hi <= y_lo {
        y_lo -= 0.5;
        y_hi = y_lo + 1.0;
    }
    let pad_y = 0.05 * (y_hi - y_lo);
    y_lo -= pad_y;
    y_hi += pad_y;
    let px = |x: f64| M + (x - x_lo) / (x_hi - x_lo) * (W - 2.0 * M);
    let py = |y: f64| H - M - (y - y_lo) / (y_hi - y_lo) * (H - 2.0 * M);
    let palette = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#8c564b"];
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" \
         viewBox=\"0 0 {W} {H}\">\n<rect width=\"{W}\" height=\"{H}\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" \
         font-size=\"16\">{title}</text>\n",
        W / 2.0
    );
    svg.push_str(&format!(
        "<line x1=\"{M}\" y1=\"{0}\" x2=\"{1}\" y2=\"{0}\" stroke=\"black\"/>\n\
         <line x1=\"{M}\" y1=\"{M}\" x2=\"{M}\" y2=\"{0}\" stroke=\"black\"/>\n",
        H - M,
        W - M
    ));
    for k in 0..=4 {
        let fx = x_lo + (x_hi - x_lo) * k as f64 / 4.0;
        let fy = y_lo + (y_hi - y_lo) * k as f64 / 4.0;
        let lx = if log_x { format!("{:.3}", 10f64.powf(fx)) } else { format!("{fx:.3}") };
        let ly = if log_y { format!("{:.3}", 10f64.powf(fy)) } else { format!("{fy:.3}") };
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\" font-family=\"sans-serif\" \
             font-size=\"11\">{lx}</text>\n",
            px(fx),
            H - M + 18.0
        ));
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\" font-family=\"sans-serif\" \
             font-size=\"11\">{ly}</text>\n",
            M - 6.0,
            py(fy) + 4.0
        ));
    }
    for (i, (s, p)) in series.iter().zip(&pts).enumerate() {
        let color = palette[i % palette.len()];
        if !p.is_empty() {
            let mut d = String::from("<polyline fill=\"none\" stroke=\"");
            d.push_str(color);
            d.push_str("\" stroke-width=\"1.5\" points=\"");
            for (x, y) in p {
                d.push_str(&format!("{:.2},{:.2} ", px(*x), py(*y)));
            }
            d.push_str("\"/>\n");
            svg.push_str(&d);
        }
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"12\" \
             fill=\"{color}\">{}</text>\n",
            W - M - 160.0,
            M + 16.0 * (i as f64 + 1.0),
            s.label
        ));
    }
    svg.push_str("</svg>\n");
    svg
}

fn require_positive(n: usize, what: &str) -> Result<()> {
    if n == 0 {
        return Err(Error::Validation(format!("{what} must be positive")));
    }
    Ok(())
}

fn require_positive_f(v: f64, what: &str) -> Result<()> {
    if !(v > 0.0 && v.is_finite()) {
        return Err(Error::Validation(format!("{what} must be positive and finite, got {v}")));
    }
    Ok(())
}

fn default_dt() -> f64 {
    1e-3
}

fn default_n_paths() -> usize {
    10_000
}

fn default_per_decade() -> usize {
    30
}

fn one() -> f64 {
    1.0
}

/// Where a renewal function comes from.
#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
enum HSource {
    /// Closed-form power law `coefficient * x^exponent` on a log grid.
    Power {
        #[serde(default = "one")]
        coefficient: f64,
        exponent: f64,
        x_min: f64,
        x_max: f64,
        #[serde(default = "default_per_decade")]
        per_decade: usize,
    },
    /// Estimated from killed paths on a log grid.
    Estimate {
        model: LevyModel,
        #[serde(default = "default_n_paths")]
        n_paths: usize,
        #[serde(default = "default_dt")]
        dt: f64,
        x_min: f64,
        x_max: f64,
        #[serde(default = "default_per_decade")]
        per_decade: usize,
    },
    /// Explicit strictly increasing nodes.
    Table { xs: Vec<f64>, ys: Vec<f64> },
}

/// Builds the renewal table; estimation also returns per-node standard
/// errors.
fn build_h(src: &HSource, seed: u64) -> Result<(MonotoneTable, Option<Vec<f64>>)> {
    match src {
        HSource::Power { coefficient, exponent, x_min, x_max, per_decade } => {
            require_positive_f(*x_min, "x_min")?;
            require_positive_f(*x_max, "x_max")?;
            if x_max <= x_min {
                return Err(Error::Validation("x_max must exceed x_min".into()));
            }
            let n = (((x_max / x_min).log10() * *per_decade as f64).ceil() as usize + 1).max(2);
            let h = MonotoneTable::power_law(*coefficient, *exponent, *x_min, *x_max, n)?;
            Ok((h, None))
        }
        HSource::Estimate { model, n_paths, dt, x_min, x_max, per_decade } => {
            require_positive(*n_paths, "n_paths")?;
            require_positive_f(*dt, "dt")?;
            let grid = log_nodes(*x_min, *x_max, *per_decade);
            let (h, ses) = estimate_h(model, &grid, *n_paths, *dt, seed)?;
            Ok((h, Some(ses)))
        }
        HSource::Table { xs, ys } => {
            let h = MonotoneTable::from_samples(xs.clone(), ys.clone())?;
            Ok((h, None))
        }
    }
}

// ---------------------------------------------------------------- simulate

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SimulateConfig {
    model: LevyModel,
    #[serde(default = "default_n_paths")]
    n_paths: usize,
    #[serde(default = "default_dt")]
    dt: f64,
    /// Per-step extrema treatment; defaults to exact bridge extrema for
    /// the Brownian model and endpoint extrema otherwise.
    #[serde(default)]
    step_extrema: Option<StepExtrema>,
    seed: Option<u64>,
    #[serde(default)]
    out: Option<PathBuf>,
    #[serde(default)]
    formats: Option<Vec<Format>>,
    #[serde(default)]
    workers: Option<usize>,
}

#[derive(Serialize)]
struct SimulateResult {
    n_paths: usize,
    dt: f64,
    step_extrema: &'static str,
    mean_min: f64,
    mean_max: f64,
    mean_final: f64,
    mean_amplitude: f64,
    se_amplitude: f64,
    mean_lifetime: f64,
}

fn cmd_simulate(raw: &[u8], ov: &Overrides, hash: &str) -> Result<Vec<PathBuf>> {
    let cfg: SimulateConfig = parse_config(raw)?;
    let res = resolve(
        &CommonFields {
            seed: cfg.seed,
            out: cfg.out.clone(),
            formats: cfg.formats.clone(),
            workers: cfg.workers,
        },
        ov,
    )?;
    require_positive(cfg.n_paths, "n_paths")?;
    require_positive_f(cfg.dt, "dt")?;
    let mode = cfg.step_extrema.unwrap_or(if matches!(cfg.model.family, Family::Brownian) {
        StepExtrema::BrownianBridge
    } else {
        StepExtrema::Endpoints
    });
    let summaries: Vec<ExtremaSummary> =
        mc_map(cfg.n_paths, res.seed, res.workers, |_, rng| {
            killed_extrema(&cfg.model, cfg.dt, mode, rng)
        })
        .into_iter()
        .collect::<Result<_>>()?;

    let mut csv = String::from("min,argmin_time,max,max_post_min,final_value,lifetime\n");
    for s in &summaries {
        csv.push_str(&format!(
            "{},{},{},{},{},{}\n",
            s.min, s.argmin_time, s.max, s.max_post_min, s.final_value, s.lifetime
        ));
    }
    let nf = summaries.len() as f64;
    let mean = |f: &dyn Fn(&ExtremaSummary) -> f64| summaries.iter().map(|s| f(s)).sum::<f64>() / nf;
    let mean_amp = mean(&|s| s.max - s.min);
    let var_amp = summaries.iter().map(|s| (s.max - s.min - mean_amp).powi(2)).sum::<f64>()
        / (nf * (nf - 1.0).max(1.0));
    let result = SimulateResult {
        n_paths: cfg.n_paths,
        dt: cfg.dt,
        step_extrema: match mode {
            StepExtrema::BrownianBridge => "brownian-bridge",
            StepExtrema::Endpoints => "endpoints",
        },
        mean_min: mean(&|s| s.min),
        mean_max: mean(&|s| s.max),
        mean_final: mean(&|s| s.final_value),
        mean_amplitude: mean_amp,
        se_amplitude: var_amp.sqrt(),
        mean_lifetime: mean(&|s| s.lifetime),
    };

    let mut em = Emitter::new(&res)?;
    em.csv("simulate.csv", &csv)?;
    em.json(
        "simulate.json",
        &Envelope {
            command: "simulate",
            version: VERSION,
            config_sha256: hash.into(),
            seed: res.seed,
            result,
        },
    )?;
    let mut amps: Vec<f64> = summaries.iter().map(|s| s.max - s.min).collect();
    amps.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let ecdf: Vec<(f64, f64)> =
        amps.iter().enumerate().map(|(i, &a)| (a, (i + 1) as f64 / nf)).collect();
    em.svg(
        "simulate.svg",
        &svg_plot("amplitude distribution", &[Series { label: "ecdf", points: ecdf }], false, false),
    )?;
    Ok(em.written)
}

// ------------------------------------------------------------------- chain

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ChainConfig {
    h: HSource,
    /// Ladder chains to run from the table (0 = only estimate the table).
    #[serde(default)]
    n_chains: usize,
    /// Conditioning cap for the first swing.
    #[serde(default = "one")]
    x_cap: f64,
    seed: Option<u64>,
    #[serde(default)]
    out: Option<PathBuf>,
    #[serde(default)]
    formats: Option<Vec<Format>>,
    #[serde(default)]
    workers: Option<usize>,
}

#[derive(Serialize)]
struct ChainResult {
    nodes: usize,
    head_exponent: f64,
    x_cap: f64,
    n_chains: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    mean_final_over_max: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    mean_swings: Option<f64>,
}

fn cmd_chain(raw: &[u8], ov: &Overrides, hash: &str) -> Result<Vec<PathBuf>> {
    let cfg: ChainConfig = parse_config(raw)?;
    let res = resolve(
        &CommonFields {
            seed: cfg.seed,
            out: cfg.out.clone(),
            formats: cfg.formats.clone(),
            workers: cfg.workers,
        },
        ov,
    )?;
    require_positive_f(cfg.x_cap, "x_cap")?;
    let (h, ses) = build_h(&cfg.h, res.seed)?;
    let (xs, ys) = h.nodes();

    let mut h_csv = String::from("x,h,se\n");
    for (i, (&x, &y)) in xs.iter().zip(ys).enumerate() {
        let se = ses.as_ref().map(|s| s[i]).unwrap_or(0.0);
        h_csv.push_str(&format!("{x},{y},{se}\n"));
    }

    let mut chains_csv = String::new();
    let (mut mean_ratio, mut mean_swings) = (None, None);
    if cfg.n_chains > 0 {
        let draws: Vec<(f64, f64, usize)> =
            mc_map(cfg.n_chains, res.seed.wrapping_add(1), res.workers, |_, rng| {
                let u: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
                let z1 = h.sample_ratio(cfg.x_cap, u)?;
                let heights = chain_from_first_swing(&h, &h, z1, rng)?;
                Ok((z1, heights.iter().sum::<f64>(), heights.len()))
            })
            .into_iter()
            .collect::<Result<_>>()?;
        chains_csv.push_str("max,final,swings\n");
        let mut rsum = 0.0;
        let mut ssum = 0.0;
        for (m, f, k) in &draws {
            chains_csv.push_str(&format!("{m},{f},{k}\n"));
            rsum += f / m;
            ssum += *k as f64;
        }
        mean_ratio = Some(rsum / draws.len() as f64);
        mean_swings = Some(ssum / draws.len() as f64);
    }

    let result = ChainResult {
        nodes: xs.len(),
        head_exponent: h.head_exponent(),
        x_cap: cfg.x_cap,
        n_chains: cfg.n_chains,
        mean_final_over_max: mean_ratio,
        mean_swings,
    };
    let mut em = Emitter::new(&res)?;
    em.csv("chain_h.csv", &h_csv)?;
    if cfg.n_chains > 0 {
        em.csv("chain_draws.csv", &chains_csv)?;
    }
    em.json(
        "chain.json",
        &Envelope {
            command: "chain",
            version: VERSION,
            config_sha256: hash.into(),
            seed: res.seed,
            result,
        },
    )?;
    let pts: Vec<(f64, f64)> = xs.iter().zip(ys).map(|(&x, &y)| (x, y)).collect();
    em.svg(
        "chain.svg",
        &svg_plot("renewal function", &[Series { label: "H", points: pts }], true, false),
    )?;
    Ok(em.written)
}

// --------------------------------------------------------------------- phi

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PhiConfig {
    h: HSource,
    lambda: f64,
    #[serde(default)]
    lambda_im: f64,
    x_max: f64,
    #[serde(default = "default_phi_per_decade")]
    per_decade: usize,
    #[serde(default = "default_phi_tol")]
    rel_tol: f64,
    seed: Option<u64>,
    #[serde(default)]
    out: Option<PathBuf>,
    #[serde(default)]
    formats: Option<Vec<Format>>,
    #[serde(default)]
    workers: Option<usize>,
}

fn default_phi_per_decade() -> usize {
    40
}

fn default_phi_tol() -> f64 {
    1e-6
}

#[derive(Serialize)]
struct PhiResult {
    lambda: f64,
    lambda_im: f64,
    x_max: f64,
    nodes: usize,
    phi_at_end_re: f64,
    phi_at_end_im: f64,
    renormalized_at_end_re: f64,
}

fn cmd_phi(raw: &[u8], ov: &Overrides, hash: &str) -> Result<Vec<PathBuf>> {
    let cfg: PhiConfig = parse_config(raw)?;
    let res = resolve(
        &CommonFields {
            seed: cfg.seed,
            out: cfg.out.clone(),
            formats: cfg.formats.clone(),
            workers: cfg.workers,
        },
        ov,
    )?;
    let (h, _) = build_h(&cfg.h, res.seed)?;
    let lam = Complex64::new(cfg.lambda, cfg.lambda_im);
    let xs = startup_grid(&h, &h, lam, cfg.x_max, cfg.per_decade, cfg.rel_tol)?;
    let pair = solve_phi_with_tol(&h, &h, lam, &xs, cfg.rel_tol)?;

    let mut csv = String::from("x,phi_re,phi_im,phi_neg_re,phi_neg_im,renormalized_re\n");
    let mut phi_pts = Vec::with_capacity(xs.len());
    let mut a_pts = Vec::with_capacity(xs.len());
    for &x in &xs {
        let p = pair.0.eval(x)?;
        let q = pair.1.eval(x)?;
        let a = a_from_phi(&pair, &h, x, lam)?;
        csv.push_str(&format!("{x},{},{},{},{},{}\n", p.re, p.im, q.re, q.im, a.re));
        phi_pts.push((x, p.re));
        a_pts.push((x, a.re));
    }
    let end = *xs.last().unwrap();
    let p_end = pair.0.eval(end)?;
    let a_end = a_from_phi(&pair, &h, end, lam)?;
    let result = PhiResult {
        lambda: cfg.lambda,
        lambda_im: cfg.lambda_im,
        x_max: cfg.x_max,
        nodes: xs.len(),
        phi_at_end_re: p_end.re,
        phi_at_end_im: p_end.im,
        renormalized_at_end_re: a_end.re,
    };
    let mut em = Emitter::new(&res)?;
    em.csv("phi.csv", &csv)?;
    em.json(
        "phi.json",
        &Envelope {
            command: "phi",
            version: VERSION,
            config_sha256: hash.into(),
            seed: res.seed,
            result,
        },
    )?;
    em.svg(
        "phi.svg",
        &svg_plot(
            "restricted transform",
            &[
                Series { label: "phi", points: phi_pts },
                Series { label: "renormalized", points: a_pts },
            ],
            false,
            false,
        ),
    )?;
    Ok(em.written)
}

// ------------------------------------------------------------- stable-exit

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct McSpec {
    n_paths: usize,
    #[serde(default = "default_dt")]
    dt: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct StableExitConfig {
    gamma: f64,
    delta: f64,
    a: f64,
    b: f64,
    /// Optional Monte Carlo cross-check (symmetric exponents only).
    #[serde(default)]
    mc: Option<McSpec>,
    seed: Option<u64>,
    #[serde(default)]
    out: Option<PathBuf>,
    #[serde(default)]
    formats: Option<Vec<Format>>,
    #[serde(default)]
    workers: Option<usize>,
}

#[derive(Serialize)]
struct ExitInputs {
    gamma: f64,
    delta: f64,
    a: f64,
    b: f64,
}

#[derive(Serialize)]
struct StableExitResult {
    formula: &'static str,
    inputs: ExitInputs,
    value: f64,
    mc_estimate: Option<f64>,
    se: Option<f64>,
}

fn cmd_stable_exit(raw: &[u8], ov: &Overrides, hash: &str) -> Result<Vec<PathBuf>> {
    let cfg: StableExitConfig = parse_config(raw)?;
    let res = resolve(
        &CommonFields {
            seed: cfg.seed,
            out: cfg.out.clone(),
            formats: cfg.formats.clone(),
            workers: cfg.workers,
        },
        ov,
    )?;
    let params = PositivityParams::new(cfg.gamma, cfg.delta)?;
    let value = exit_probability(&params, cfg.a, cfg.b)?;
    let (mc_estimate, se) = match &cfg.mc {
        None => (None, None),
        Some(mc) => {
            require_positive(mc.n_paths, "mc.n_paths")?;
            if (cfg.gamma - cfg.delta).abs() > 1e-12 {
                return Err(Error::UnsupportedModel(
                    "the Monte Carlo cross-check samples the symmetric process; it needs \
                     equal exponents"
                        .into(),
                ));
            }
            let model = LevyModel::symmetric_stable(params.alpha())?;
            let (p, s) = exit_up_mc(&model, cfg.a, cfg.b, mc.dt, mc.n_paths, res.seed, res.workers)?;
            (Some(p), Some(s))
        }
    };
    let result = StableExitResult {
        formula: "two-sided exit upward: regularized incomplete beta of (gamma, delta) at b/(a+b)",
        inputs: ExitInputs { gamma: cfg.gamma, delta: cfg.delta, a: cfg.a, b: cfg.b },
        value,
        mc_estimate,
        se,
    };
    let mut csv = String::from("gamma,delta,a,b,value,mc_estimate,se\n");
    csv.push_str(&format!(
        "{},{},{},{},{},{},{}\n",
        cfg.gamma,
        cfg.delta,
        cfg.a,
        cfg.b,
        value,
        mc_estimate.map(|v| v.to_string()).unwrap_or_default(),
        se.map(|v| v.to_string()).unwrap_or_default(),
    ));
    let mut em = Emitter::new(&res)?;
    em.csv("stable_exit.csv", &csv)?;
    em.json(
        "stable_exit.json",
        &Envelope {
            command: "stable-exit",
            version: VERSION,
            config_sha256: hash.into(),
            seed: res.seed,
            result,
        },
    )?;
    let curve: Vec<(f64, f64)> = (1..=99)
        .map(|k| {
            let u = k as f64 / 100.0;
            // Exit probability as the split b/(a+b) varies at fixed sum.
            let b = u * (cfg.a + cfg.b);
            let a = (cfg.a + cfg.b) - b;
            (u, exit_probability(&params, a, b).unwrap_or(f64::NAN))
        })
        .collect();
    em.svg(
        "stable_exit.svg",
        &svg_plot(
            "upward exit probability vs barrier split",
            &[Series { label: "exit up", points: curve }],
            false,
            false,
        ),
    )?;
    Ok(em.written)
}

// ------------------------------------------------------------------ string

/// Where a string measure comes from.
#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
enum StringSpec {
    /// Unit density on [0, x_max].
    Lebesgue { x_max: f64 },
    /// Density `coefficient * x^power` on [0, x_max].
    PowerDensity {
        #[serde(default = "one")]
        coefficient: f64,
        power: f64,
        x_max: f64,
        #[serde(default = "default_density_nodes")]
        nodes: usize,
    },
    /// Explicit density table with optional point masses.
    Table {
        xs: Vec<f64>,
        density: Vec<f64>,
        #[serde(default)]
        atoms: Vec<(f64, f64)>,
    },
    /// The string of a renewal function via the change of scale.
    Renewal { h: HSource },
}

fn default_density_nodes() -> usize {
    200
}

/// Builds the measure plus the inverse scale map of the change of
/// variables (identity unless the string came from a renewal function).
fn build_measure(spec: &StringSpec, seed: u64) -> Result<(StringMeasure, MonotoneTable)> {
    let identity = |x_max: f64| {
        MonotoneTable::from_samples(vec![x_max * 1e-9, x_max], vec![x_max * 1e-9, x_max])
    };
    match spec {
        StringSpec::Lebesgue { x_max } => {
            let m = StringMeasure::lebesgue(*x_max)?;
            Ok((m, identity(*x_max)?))
        }
        StringSpec::PowerDensity { coefficient, power, x_max, nodes } => {
            let m = StringMeasure::power_density(*coefficient, *power, *x_max, *nodes)?;
            Ok((m, identity(*x_max)?))
        }
        StringSpec::Table { xs, density, atoms } => {
            let m = StringMeasure::new(xs.clone(), density.clone(), atoms.clone())?;
            let top = m.x_max();
            Ok((m, identity(top)?))
        }
        StringSpec::Renewal { h } => {
            let (table, _) = build_h(h, seed)?;
            let st = build_string(&table)?;
            Ok((st.measure().clone(), st.s_inverse().clone()))
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct StringConfig {
    string: StringSpec,
    lambdas: Vec<f64>,
    /// Integration horizon for the tabulated solutions; defaults to the
    /// measure's last node.
    #[serde(default)]
    x_max: Option<f64>,
    seed: Option<u64>,
    #[serde(default)]
    out: Option<PathBuf>,
    #[serde(default)]
    formats: Option<Vec<Format>>,
    #[serde(default)]
    workers: Option<usize>,
}

#[derive(Serialize)]
struct StringLambdaRow {
    lambda: f64,
    d0: f64,
    wronskian_residual: f64,
}

#[derive(Serialize)]
struct StringResult {
    mass: f64,
    x_max: f64,
    per_lambda: Vec<StringLambdaRow>,
}

fn cmd_string(raw: &[u8], ov: &Overrides, hash: &str) -> Result<Vec<PathBuf>> {
    let cfg: StringConfig = parse_config(raw)?;
    let res = resolve(
        &CommonFields {
            seed: cfg.seed,
            out: cfg.out.clone(),
            formats: cfg.formats.clone(),
            workers: cfg.workers,
        },
        ov,
    )?;
    if cfg.lambdas.is_empty() {
        return Err(Error::Validation("lambdas must not be empty".into()));
    }
    let (measure, _) = build_measure(&cfg.string, res.seed)?;
    let x_max = cfg.x_max.unwrap_or_else(|| measure.x_max());
    let d0s = spectral_transform(&measure, &cfg.lambdas)?;

    let mut csv = String::from("lambda,x,A,A_prime,D,D_prime\n");
    let mut rows = Vec::with_capacity(cfg.lambdas.len());
    let mut first_curve_a = Vec::new();
    let mut first_curve_d = Vec::new();
    for (j, &lam) in cfg.lambdas.iter().enumerate() {
        let sol = integrate_ad(&measure, lam, x_max)?;
        let stride = (sol.xs.len() / 1500).max(1);
        let mut wron = 0.0f64;
        for i in (0..sol.xs.len()).step_by(stride) {
            csv.push_str(&format!(
                "{lam},{},{},{},{},{}\n",
                sol.xs[i], sol.a[i], sol.a_prime[i], sol.d[i], sol.d_prime[i]
            ));
            wron = wron.max((sol.a[i] * sol.d_prime[i] - sol.a_prime[i] * sol.d[i] + 1.0).abs());
            if j == 0 {
                first_curve_a.push((sol.xs[i], sol.a[i]));
                first_curve_d.push((sol.xs[i], sol.d[i]));
            }
        }
        rows.push(StringLambdaRow { lambda: lam, d0: d0s[j], wronskian_residual: wron });
    }
    let result = StringResult { mass: measure.mass(x_max), x_max, per_lambda: rows };
    let mut em = Emitter::new(&res)?;
    em.csv("string.csv", &csv)?;
    em.json(
        "string.json",
        &Envelope {
            command: "string",
            version: VERSION,
            config_sha256: hash.into(),
            seed: res.seed,
            result,
        },
    )?;
    em.svg(
        "string.svg",
        &svg_plot(
            "string solutions (first argument)",
            &[
                Series { label: "A", points: first_curve_a },
                Series { label: "D", points: first_curve_d },
            ],
            false,
            false,
        ),
    )?;
    Ok(em.written)
}

// ---------------------------------------------------------------- spectral

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SpectralConfig {
    model: LevyModel,
    case: IdentityCase,
    lambdas: Vec<f64>,
    #[serde(default = "default_mc_budget")]
    mc_budget: usize,
    seed: Option<u64>,
    #[serde(default)]
    out: Option<PathBuf>,
    #[serde(default)]
    formats: Option<Vec<Format>>,
    #[serde(default)]
    workers: Option<usize>,
}

fn default_mc_budget() -> usize {
    50_000
}

fn cmd_spectral(raw: &[u8], ov: &Overrides, hash: &str) -> Result<Vec<PathBuf>> {
    let cfg: SpectralConfig = parse_config(raw)?;
    let res = resolve(
        &CommonFields {
            seed: cfg.seed,
            out: cfg.out.clone(),
            formats: cfg.formats.clone(),
            workers: cfg.workers,
        },
        ov,
    )?;
    require_positive(cfg.mc_budget, "mc_budget")?;
    let report =
        verify_spectral_identity(&cfg.model, cfg.case, &cfg.lambdas, cfg.mc_budget, res.seed)?;
    let mut em = Emitter::new(&res)?;
    em.csv("spectral.csv", &report.to_csv())?;
    let lhs: Vec<(f64, f64)> = report.per_lambda.iter().map(|r| (r.lambda, r.lhs)).collect();
    let fitted: Vec<(f64, f64)> = report
        .per_lambda
        .iter()
        .map(|r| (r.lambda, report.fitted_constant * r.rhs))
        .collect();
    em.json(
        "spectral.json",
        &Envelope {
            command: "spectral",
            version: VERSION,
            config_sha256: hash.into(),
            seed: res.seed,
            result: report,
        },
    )?;
    em.svg(
        "spectral.svg",
        &svg_plot(
            "string transform vs fitted reference",
            &[
                Series { label: "string side", points: lhs },
                Series { label: "fitted reference", points: fitted },
            ],
            true,
            true,
        ),
    )?;
    Ok(em.written)
}

// -------------------------------------------------------------- wiener-hopf

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct WienerHopfConfig {
    model: LevyModel,
    lambdas: Vec<f64>,
    #[serde(default = "default_wh_paths")]
    n_paths: usize,
    #[serde(default = "default_dt")]
    dt: f64,
    seed: Option<u64>,
    #[serde(default)]
    out: Option<PathBuf>,
    #[serde(default)]
    formats: Option<Vec<Format>>,
    #[serde(default)]
    workers: Option<usize>,
}

fn default_wh_paths() -> usize {
    20_000
}

fn cmd_wiener_hopf(raw: &[u8], ov: &Overrides, hash: &str) -> Result<Vec<PathBuf>> {
    let cfg: WienerHopfConfig = parse_config(raw)?;
    let res = resolve(
        &CommonFields {
            seed: cfg.seed,
            out: cfg.out.clone(),
            formats: cfg.formats.clone(),
            workers: cfg.workers,
        },
        ov,
    )?;
    let report = verify_wiener_hopf(&cfg.model, &cfg.lambdas, cfg.n_paths, cfg.dt, res.seed)?;
    let mut em = Emitter::new(&res)?;
    em.csv("wiener_hopf.csv", &report.to_csv())?;
    let mc: Vec<(f64, f64)> = report.per_lambda.iter().map(|r| (r.lambda, r.lhs)).collect();
    let half: Vec<(f64, f64)> = report
        .per_lambda
        .iter()
        .zip(&report.diagnostics.half_form_rhs)
        .map(|(r, &h)| (r.lambda, h))
        .collect();
    em.json(
        "wiener_hopf.json",
        &Envelope {
            command: "wiener-hopf",
            version: VERSION,
            config_sha256: hash.into(),
            seed: res.seed,
            result: report,
        },
    )?;
    em.svg(
        "wiener_hopf.svg",
        &svg_plot(
            "Laplace transform of final minus minimum",
            &[
                Series { label: "monte carlo", points: mc },
                Series { label: "halved exponent", points: half },
            ],
            false,
            false,
        ),
    )?;
    Ok(em.written)
}

// ----------------------------------------------------------------- entropy

/// Spectral density supplied to the entropy identity.
#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
enum DeltaSpec {
    /// Constant density.
    Flat {
        #[serde(default = "one")]
        value: f64,
    },
    /// `multiplier * (psi + kill rate)` for the given model.
    ShiftedExponent {
        model: LevyModel,
        #[serde(default = "one")]
        multiplier: f64,
    },
}

fn build_delta(spec: &DeltaSpec, lambdas: &[f64]) -> Result<SpectralDensity> {
    let lam_min = lambdas.iter().cloned().fold(f64::INFINITY, f64::min);
    let lam_max = lambdas.iter().cloned().fold(0.0f64, f64::max);
    let us = log_nodes(lam_min * 1e-3, lam_max * 1e3, 30);
    match spec {
        DeltaSpec::Flat { value } => {
            require_positive_f(*value, "delta value")?;
            let dens = vec![*value; us.len()];
            SpectralDensity::new(us, dens, 0.0)
        }
        DeltaSpec::ShiftedExponent { model, multiplier } => {
            require_positive_f(*multiplier, "delta multiplier")?;
            let shift = match model.killing {
                Killing::Exponential { rate } => rate,
                Killing::LebesgueProxy => 0.0,
            };
            let mut dens = Vec::with_capacity(us.len());
            for &u in &us {
                dens.push(multiplier * (model.psi(u)? + shift));
            }
            let order = match &model.family {
                Family::SymmetricStable { alpha } => *alpha,
                Family::Brownian => 2.0,
                Family::Custom { psi } => psi.tail_exponent(),
            };
            SpectralDensity::new(us, dens, order)
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct EntropyConfig {
    string: StringSpec,
    delta: DeltaSpec,
    lambdas: Vec<f64>,
    seed: Option<u64>,
    #[serde(default)]
    out: Option<PathBuf>,
    #[serde(default)]
    formats: Option<Vec<Format>>,
    #[serde(default)]
    workers: Option<usize>,
}

#[derive(Serialize)]
struct EntropyRow {
    lambda: f64,
    lhs: f64,
    rhs: f64,
    gap: f64,
    plateau_x: f64,
}

#[derive(Serialize)]
struct EntropyResult {
    per_lambda: Vec<EntropyRow>,
}

fn cmd_entropy(raw: &[u8], ov: &Overrides, hash: &str) -> Result<Vec<PathBuf>> {
    let cfg: EntropyConfig = parse_config(raw)?;
    let res = resolve(
        &CommonFields {
            seed: cfg.seed,
            out: cfg.out.clone(),
            formats: cfg.formats.clone(),
            workers: cfg.workers,
        },
        ov,
    )?;
    if cfg.lambdas.is_empty() {
        return Err(Error::Validation("lambdas must not be empty".into()));
    }
    let (measure, s_inverse) = build_measure(&cfg.string, res.seed)?;
    let delta = build_delta(&cfg.delta, &cfg.lambdas)?;
    let mut rows = Vec::with_capacity(cfg.lambdas.len());
    let mut last: Option<EntropyReport> = None;
    for &lam in &cfg.lambdas {
        let report = entropy_formula(&measure, &s_inverse, &delta, lam)?;
        rows.push(EntropyRow {
            lambda: lam,
            lhs: report.lhs,
            rhs: report.rhs,
            gap: report.lhs - report.rhs,
            plateau_x: report.diagnostic.plateau_x,
        });
        last = Some(report);
    }
    let mut csv = String::from("lambda,lhs,rhs,gap,plateau_x\n");
    for r in &rows {
        csv.push_str(&format!("{},{},{},{},{}\n", r.lambda, r.lhs, r.rhs, r.gap, r.plateau_x));
    }
    let mut em = Emitter::new(&res)?;
    em.csv("entropy.csv", &csv)?;
    em.json(
        "entropy.json",
        &Envelope {
            command: "entropy",
            version: VERSION,
            config_sha256: hash.into(),
            seed: res.seed,
            result: EntropyResult { per_lambda: rows },
        },
    )?;
    if let Some(report) = last {
        let d = &report.diagnostic;
        let travel: Vec<(f64, f64)> =
            d.xs.iter().zip(&d.compensated).map(|(&x, &v)| (x, v)).collect();
        let scale: Vec<(f64, f64)> =
            d.xs.iter().zip(&d.scale_compensated).map(|(&x, &v)| (x, v)).collect();
        em.svg(
            "entropy.svg",
            &svg_plot(
                "compensated boundary series (last argument)",
                &[
                    Series { label: "travel-time form", points: travel },
                    Series { label: "scale form", points: scale },
                ],
                true,
                false,
            ),
        )?;
    }
    Ok(em.written)
}

// ------------------------------------------------------------------- rule4

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Rule4Config {
    h: HSource,
    lambda: f64,
    seed: Option<u64>,
    #[serde(default)]
    out: Option<PathBuf>,
    #[serde(default)]
    formats: Option<Vec<Format>>,
    #[serde(default)]
    workers: Option<usize>,
}

fn cmd_rule4(raw: &[u8], ov: &Overrides, hash: &str) -> Result<Vec<PathBuf>> {
    let cfg: Rule4Config = parse_config(raw)?;
    let res = resolve(
        &CommonFields {
            seed: cfg.seed,
            out: cfg.out.clone(),
            formats: cfg.formats.clone(),
            workers: cfg.workers,
        },
        ov,
    )?;
    let (h, _) = build_h(&cfg.h, res.seed)?;
    let (transform, report) = unbounded_transform(&h, cfg.lambda)?;
    let mut em = Emitter::new(&res)?;
    em.csv("rule4.csv", &transform.to_csv())?;
    em.json(
        "rule4.json",
        &Envelope {
            command: "rule4",
            version: VERSION,
            config_sha256: hash.into(),
            seed: res.seed,
            result: report,
        },
    )?;
    let x_max = *transform.xs.last().unwrap();
    let (txs, tys) = transform.t_map.nodes();
    let t_pts: Vec<(f64, f64)> = txs.iter().zip(tys).map(|(&x, &t)| (x, t)).collect();
    let d_pts: Vec<(f64, f64)> = transform
        .xs
        .iter()
        .zip(&transform.d_tilde)
        .filter(|(&x, _)| x >= 0.01 * x_max)
        .map(|(&x, &d)| (x, d))
        .collect();
    em.svg(
        "rule4.svg",
        &svg_plot(
            "transform pair and argument map",
            &[
                Series { label: "t map", points: t_pts },
                Series { label: "decaying solution", points: d_pts },
            ],
            false,
            false,
        ),
    )?;
    Ok(em.written)
}
