//! Batch front end for `erasure-core`: every command produces one
//! [`ResultRecord`], written as JSON or CSV.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use thiserror::Error;

use erasure_core::entropy::{binary_entropy, EntropyUnit};
use erasure_core::gibbs::{
    enumerate_torus, free_energy_content, lts_check, torus_erasure_entropy, torus_gibbs_erasure,
    volume_normalized_erasure,
};
use erasure_core::hex::{
    self, hex_class_probs, hex_pipeline, DerivativeConfig, HexClassSystem, QuadratureConfig,
};
use erasure_core::lattice::{single_site_conditional, Lattice, LatticeKind};
use erasure_core::markov::{
    dme_bound_report, entropy_rate, erasure_rate, future_block_entropy, interval_erasure_rate,
    markov_identity_residual, MarkovSpec,
};
use erasure_core::montecarlo::{run_observables, McConfig, McEstimate};
use erasure_core::square::{
    self, class_probs_from_correlations, correlations_from_strip, correlations_from_torus,
    erasure_entropy_square, CorrelationTriple,
};

pub const SCHEMA_VERSION: u32 = 1;
pub const THREADS_ENV: &str = "ERASURE_THREADS";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Model(#[from] erasure_core::Error),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        use erasure_core::Error as E;
        match self {
            CliError::Parse(_) => 2,
            CliError::Io { .. } => 1,
            CliError::Model(e) => match e.root() {
                E::Budget(_) => 4,
                E::NearCritical { .. } => 5,
                E::InconsistentCorrelations(_) => 6,
                E::MixingFailure(_) => 7,
                E::NonConvergence(_) => 1,
                _ => 3,
            },
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provider {
    Torus,
    Strip,
    Mc,
    User,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KindArg {
    Square,
    Honeycomb,
}

impl From<KindArg> for LatticeKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Square => LatticeKind::Square,
            KindArg::Honeycomb => LatticeKind::Honeycomb,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Parser, Serialize, Deserialize)]
#[command(name = "erasure", version, about = "Erasure entropy of Markov chains and Ising Gibbs measures")]
pub struct RunConfig {
    /// Report entropies in nats instead of bits.
    #[arg(long, global = true, conflicts_with = "bits")]
    pub nats: bool,
    /// Report entropies in bits (default).
    #[arg(long, global = true)]
    pub bits: bool,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    /// Write the record here instead of stdout.
    #[arg(long, short, global = true)]
    pub output: Option<PathBuf>,
    /// Worker threads; numerical output does not depend on it.
    #[arg(long, global = true, env = THREADS_ENV)]
    pub threads: Option<usize>,
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Include wall-clock time in the record.
    #[arg(long, global = true)]
    pub timing: bool,
    #[command(subcommand)]
    pub command: Command,
}

impl RunConfig {
    pub fn unit(&self) -> EntropyUnit {
        if self.nats {
            EntropyUnit::Nats
        } else {
            EntropyUnit::Bits
        }
    }
}

#[derive(Debug, Clone, PartialEq, Subcommand, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "command")]
pub enum Command {
    /// Entropy rate, erasure rate and the block identity of a Markov chain.
    Markov(MarkovArgs),
    /// Erasure-channel conditional entropies over a grid of erasure rates.
    Dme(DmeArgs),
    /// Square-lattice erasure entropy from neighbour correlators.
    Square(SquareArgs),
    /// Honeycomb-lattice erasure entropy from the exact pressure.
    Hex(HexArgs),
    /// Exact enumeration diagnostics on a small torus.
    Torus(TorusArgs),
    /// Heat-bath Monte Carlo estimates with batch-means errors.
    Mc(McArgs),
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct MarkovArgs {
    /// Chain file: alphabet size m, order k, then m^k rows of m probabilities.
    pub chain: PathBuf,
    /// Longest interval in the two-sided interval series (first-order chains).
    #[arg(long, default_value_t = 50)]
    pub max_length: usize,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct DmeArgs {
    /// Chain file, as for `markov`.
    #[arg(long, conflicts_with = "iid", required_unless_present = "iid")]
    pub chain: Option<PathBuf>,
    /// i.i.d. source with these symbol probabilities, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub iid: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', default_value = "0.02,0.05,0.1,0.2,0.3,0.5,0.7,0.9")]
    pub p_grid: Vec<f64>,
    /// Block length.
    #[arg(long, default_value_t = 10)]
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct McOptions {
    #[arg(long, default_value_t = 20_000)]
    pub sweeps: usize,
    #[arg(long, default_value_t = 1_000)]
    pub burn_in: usize,
    #[arg(long, default_value_t = 50)]
    pub batches: usize,
    #[arg(long, default_value_t = 2)]
    pub chains: usize,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct SquareArgs {
    #[arg(long, short = 'J', allow_negative_numbers = true)]
    pub coupling: f64,
    #[arg(long, value_enum, default_value_t = Provider::Strip)]
    pub provider: Provider,
    /// Torus side for the torus provider (3..=5).
    #[arg(long, default_value_t = 4)]
    pub size: usize,
    /// Cylinder circumference for the strip provider (2..=14).
    #[arg(long, default_value_t = 12)]
    pub width: usize,
    /// Lattice side for the Monte Carlo provider.
    #[arg(long, default_value_t = 32)]
    pub mc_size: usize,
    /// g4,gEW,gEN for the user provider.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub triple: Option<Vec<f64>>,
    #[command(flatten)]
    #[serde(flatten)]
    pub mc: McOptions,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct HexArgs {
    #[arg(long, short = 'J', allow_negative_numbers = true)]
    pub coupling: f64,
    #[arg(long, default_value_t = 16)]
    pub points: usize,
    #[arg(long, default_value_t = 1e-13)]
    pub tolerance: f64,
    #[arg(long, default_value_t = 8)]
    pub max_levels: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub step: f64,
    #[arg(long, default_value_t = 2)]
    pub levels: usize,
    /// Also report the class probabilities of the uncorrected linear system.
    #[arg(long)]
    pub compare_printed: bool,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct TorusArgs {
    #[arg(long, value_enum, default_value_t = KindArg::Square)]
    pub kind: KindArg,
    #[arg(long, default_value_t = 3)]
    pub width: usize,
    #[arg(long, default_value_t = 3)]
    pub height: usize,
    #[arg(long, short = 'J', allow_negative_numbers = true)]
    pub coupling: f64,
    /// Single-site tilt for the stability check.
    #[arg(long, default_value_t = 0.1, allow_negative_numbers = true)]
    pub tilt: f64,
    #[arg(long, default_value_t = 100)]
    pub trials: usize,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct McArgs {
    #[arg(long, value_enum, default_value_t = KindArg::Square)]
    pub kind: KindArg,
    #[arg(long, default_value_t = 16)]
    pub width: usize,
    #[arg(long, default_value_t = 16)]
    pub height: usize,
    #[arg(long, short = 'J', allow_negative_numbers = true)]
    pub coupling: f64,
    #[command(flatten)]
    #[serde(flatten)]
    pub mc: McOptions,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    Exact,
    Quadrature,
    TransferMatrix,
    MonteCarlo,
    UserInput,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub schema_version: u32,
    pub command: String,
    pub library_version: String,
    pub provenance: Provenance,
    pub unit: EntropyUnit,
    pub inputs: Map<String, Value>,
    pub outputs: Map<String, Value>,
    /// Standard errors keyed like `outputs`; present for every stochastic
    /// output.
    pub std_errors: Map<String, Value>,
    pub tables: Map<String, Value>,
    pub notes: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub wall_time_s: Option<f64>,
}

impl ResultRecord {
    fn new(command: &str, provenance: Provenance, unit: EntropyUnit, inputs: Value) -> Self {
        let inputs = match inputs {
            Value::Object(m) => m,
            _ => Map::new(),
        };
        ResultRecord {
            schema_version: SCHEMA_VERSION,
            command: command.to_string(),
            library_version: env!("CARGO_PKG_VERSION").to_string(),
            provenance,
            unit,
            inputs,
            outputs: Map::new(),
            std_errors: Map::new(),
            tables: Map::new(),
            notes: Vec::new(),
            wall_time_s: None,
        }
    }

    fn put(&mut self, key: &str, v: impl Into<Value>) {
        self.outputs.insert(key.to_string(), v.into());
    }

    fn put_estimate(&mut self, key: &str, e: &McEstimate) {
        self.put(key, e.mean);
        self.std_errors.insert(key.to_string(), e.std_error.into());
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("record serializes");
        s.push('\n');
        s
    }

    /// `field,value,std_error` rows; table cells are named
    /// `table[row].column`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("field,value,std_error\n");
        let mut row = |field: &str, v: &Value, se: Option<&Value>| {
            let _ = writeln!(out, "{field},{},{}", csv_cell(v), se.map(csv_cell).unwrap_or_default());
        };
        row("schema_version", &self.schema_version.into(), None);
        row("command", &Value::from(self.command.as_str()), None);
        row("library_version", &Value::from(self.library_version.as_str()), None);
        row("provenance", &serde_json::to_value(self.provenance).unwrap(), None);
        row("unit", &Value::from(self.unit.name()), None);
        for (k, v) in &self.inputs {
            row(&format!("input.{k}"), v, None);
        }
        for (k, v) in &self.outputs {
            row(k, v, self.std_errors.get(k));
        }
        for (name, table) in &self.tables {
            if let Value::Array(rows) = table {
                for (i, r) in rows.iter().enumerate() {
                    if let Value::Object(cols) = r {
                        for (c, v) in cols {
                            row(&format!("{name}[{i}].{c}"), v, None);
                        }
                    }
                }
            }
        }
        if let Some(t) = self.wall_time_s {
            row("wall_time_s", &t.into(), None);
        }
        out
    }

    pub fn render(&self, format: Format) -> String {
        match format {
            Format::Json => self.to_json(),
            Format::Csv => self.to_csv(),
        }
    }
}

fn csv_cell(v: &Value) -> String {
    let text = match v {
        Value::String(s) => s.clone(),
        Value::Null => String::new(),
        other => other.to_string(),
    };
    if text.contains([',', '"', '\n']) {
        format!("\"{}\"", text.replace('"', "\"\""))
    } else {
        text
    }
}

/// Parses the plain-text chain format. Tokens are separated by whitespace;
/// `#` starts a comment. The first two tokens are `m` and `k`, followed by
/// `m^k` rows of `m` probabilities, one row per line.
pub fn parse_chain(text: &str) -> CliResult<MarkovSpec> {
    let mut lines = text
        .lines()
        .map(|l| l.split('#').next().unwrap_or("").split_whitespace().collect::<Vec<_>>())
        .filter(|t| !t.is_empty());
    let mut header: Vec<&str> = Vec::new();
    while header.len() < 2 {
        let toks = lines.next().ok_or_else(|| CliError::Parse("missing alphabet size and order".into()))?;
        header.extend(toks);
    }
    if header.len() > 2 {
        return Err(CliError::Parse("the header holds m and k only".into()));
    }
    let int = |t: &str, what: &str| t.parse::<usize>().map_err(|e| CliError::Parse(format!("{what} {t:?}: {e}")));
    let m = int(header[0], "alphabet size")?;
    let k = int(header[1], "order")?;
    let rows: Vec<Vec<f64>> = lines
        .enumerate()
        .map(|(i, toks)| {
            toks.iter()
                .map(|t| t.parse::<f64>().map_err(|e| CliError::Parse(format!("row {i}: {t:?}: {e}"))))
                .collect()
        })
        .collect::<CliResult<_>>()?;
    let expected = m.checked_pow(k as u32).ok_or_else(|| CliError::Parse("m^k overflows".into()))?;
    if rows.len() != expected {
        return Err(CliError::Parse(format!("expected {expected} rows, found {}", rows.len())));
    }
    if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != m) {
        return Err(CliError::Parse(format!("row {i} has {} entries, expected {m}", r.len())));
    }
    Ok(MarkovSpec::new(m, k, rows)?)
}

fn read_chain(path: &Path) -> CliResult<MarkovSpec> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_chain(&text)
}

fn inputs_of<T: Serialize>(args: &T) -> Value {
    let mut v = serde_json::to_value(args).expect("arguments serialize");
    if let Value::Object(m) = &mut v {
        m.retain(|_, x| !x.is_null());
    }
    v
}

pub fn cmd_markov(args: &MarkovArgs, unit: EntropyUnit) -> CliResult<ResultRecord> {
    let chain = read_chain(&args.chain)?;
    let mut r = ResultRecord::new("markov", Provenance::Exact, unit, inputs_of(args));
    r.inputs.insert("alphabet".into(), chain.alphabet().into());
    r.inputs.insert("order".into(), chain.order().into());
    let h = entropy_rate(&chain, unit)?.value;
    let hm = erasure_rate(&chain, unit)?.value;
    r.put("entropy_rate", h);
    r.put("erasure_rate", hm);
    r.put("future_block_entropy", future_block_entropy(&chain, unit)?.value);
    r.put("identity_residual_nats", markov_identity_residual(&chain)?);
    if chain.order() == 1 {
        let mut rows = Vec::new();
        for len in 1..=args.max_length {
            let v = interval_erasure_rate(&chain, len, unit)?.value;
            rows.push(json!({
                "length": len,
                "value": v,
                "defect": h - v,
                "erasure_gap_over_length": (h - hm) / len as f64,
            }));
        }
        r.tables.insert("interval".into(), Value::Array(rows));
    } else {
        r.notes.push("interval series is computed for first-order chains only".into());
    }
    Ok(r)
}

pub fn cmd_dme(args: &DmeArgs, unit: EntropyUnit) -> CliResult<ResultRecord> {
    let chain = match (&args.chain, &args.iid) {
        (Some(path), _) => read_chain(path)?,
        (None, Some(d)) => MarkovSpec::iid(d)?,
        (None, None) => return Err(CliError::Parse("one of --chain or --iid is required".into())),
    };
    let report = dme_bound_report(&chain, &args.p_grid, args.n, unit)?;
    let mut r = ResultRecord::new("dme", Provenance::Exact, unit, inputs_of(args));
    r.put("erasure_rate", report.erasure_rate);
    r.put("ratio_shrinks_with_p", report.ratio_shrinks_with_p);
    let rows: Vec<Value> = report
        .rows
        .iter()
        .map(|row| {
            json!({
                "p": row.p,
                "value": row.finite_n_value,
                "lower_bound": row.lower_bound,
                "ratio": row.ratio,
                "bound_holds": row.bound_holds,
            })
        })
        .collect();
    for row in report.rows.iter().filter(|row| !row.bound_holds) {
        r.notes.push(format!(
            "p = {}: finite-n value {} below the lower bound {} (finite-n effect, informational)",
            row.p, row.finite_n_value, row.lower_bound
        ));
    }
    r.tables.insert("grid".into(), Value::Array(rows));
    Ok(r)
}

fn put_triple(r: &mut ResultRecord, t: &CorrelationTriple) {
    r.put("g4", t.g4);
    r.put("g_ew", t.g_ew);
    r.put("g_en", t.g_en);
}

fn mc_config(lattice: Lattice, coupling: f64, opts: &McOptions, seed: u64) -> McConfig {
    McConfig {
        sweeps: opts.sweeps,
        burn_in: opts.burn_in,
        batches: opts.batches,
        seed,
        chains: opts.chains,
        ..McConfig::new(lattice, coupling)
    }
}

pub fn cmd_square(args: &SquareArgs, unit: EntropyUnit, seed: u64) -> CliResult<ResultRecord> {
    let j = args.coupling;
    let provenance = match args.provider {
        Provider::Torus => Provenance::Exact,
        Provider::Strip => Provenance::TransferMatrix,
        Provider::Mc => Provenance::MonteCarlo,
        Provider::User => Provenance::UserInput,
    };
    let mut r = ResultRecord::new("square", provenance, unit, inputs_of(args));
    if args.provider == Provider::Mc {
        r.inputs.insert("seed".into(), seed.into());
        let lat = Lattice::square(args.mc_size, args.mc_size)?;
        let est = square::mc_estimates(&mc_config(lat, j, &args.mc, seed), unit)?;
        for (name, e) in ["g4", "g_ew", "g_en"].iter().zip(&est.correlations) {
            r.put_estimate(name, e);
        }
        for (name, e) in ["p1", "p2", "p3", "p4"].iter().zip(&est.class_probs) {
            r.put_estimate(name, e);
        }
        r.put_estimate("erasure_entropy", &est.erasure_formula);
        r.put_estimate("erasure_entropy_plugin", &est.erasure_plugin);
        return Ok(r);
    }
    let triple = match args.provider {
        Provider::Torus => correlations_from_torus(args.size, j)?,
        Provider::Strip => {
            let s = correlations_from_strip(args.width, j)?;
            r.put("transfer_eigenvalue", s.eigenvalue);
            r.put("power_iterations", s.iterations);
            r.put("power_residual", s.residual);
            s.triple
        }
        Provider::User => match args.triple.as_deref() {
            Some([g4, gew, gen]) => CorrelationTriple::new(*g4, *gew, *gen),
            _ => return Err(CliError::Parse("--triple g4,gEW,gEN is required with --provider user".into())),
        },
        Provider::Mc => unreachable!("handled above"),
    };
    put_triple(&mut r, &triple);
    let probs = class_probs_from_correlations(&triple)?;
    for (name, p) in ["p1", "p2", "p3", "p4"].iter().zip(probs.p) {
        r.put(name, p);
    }
    r.put("erasure_entropy", erasure_entropy_square(j, &probs, unit)?.value);
    Ok(r)
}

pub fn cmd_hex(args: &HexArgs, unit: EntropyUnit) -> CliResult<ResultRecord> {
    let q = QuadratureConfig {
        points: args.points,
        tolerance: args.tolerance,
        max_levels: args.max_levels,
    };
    let d = DerivativeConfig {
        step: args.step,
        levels: args.levels,
    };
    let res = hex_pipeline(args.coupling, &q, &d, unit)?;
    let mut r = ResultRecord::new("hex", Provenance::Quadrature, unit, inputs_of(args));
    r.put("pressure", res.pressure);
    r.put("pressure_points", res.pressure_points);
    r.put("pressure_change", res.pressure_change);
    r.put("pressure_derivative", res.pressure_derivative);
    r.put("derivative_error", res.derivative_error);
    r.put("correlation", res.correlation);
    r.put("correlation_error", res.correlation_error);
    r.put("p1", res.class_probs.p1);
    r.put("p2", res.class_probs.p2);
    r.put("erasure_entropy", res.erasure_entropy.value);
    r.put("critical_coupling", hex::critical_coupling());
    if args.compare_printed {
        match hex_class_probs(args.coupling.abs(), res.correlation, HexClassSystem::AsPrinted) {
            Ok(p) => {
                r.put("p1_as_printed", p.p1);
                r.put("p2_as_printed", p.p2);
            }
            Err(e) => r.notes.push(format!("uncorrected class system: {e}")),
        }
    }
    let samples: Vec<Value> = res
        .samples
        .iter()
        .map(|s| json!({"beta": s.beta, "pressure": s.pressure}))
        .collect();
    r.tables.insert("pressure_samples".into(), Value::Array(samples));
    Ok(r)
}

/// Regions used by the torus diagnostics: growing rectangles anchored at
/// the origin, excluding the whole lattice.
fn nested_blocks(lat: &Lattice) -> Vec<Vec<usize>> {
    (1..=3)
        .map(|s| lat.block(0, 0, s.min(lat.width()), s.min(lat.height())))
        .filter(|b| b.len() < lat.sites())
        .fold(Vec::new(), |mut acc: Vec<Vec<usize>>, b| {
            if acc.last() != Some(&b) {
                acc.push(b);
            }
            acc
        })
}

pub fn cmd_torus(args: &TorusArgs, unit: EntropyUnit, seed: u64) -> CliResult<ResultRecord> {
    let lat = Lattice::new(args.kind.into(), args.width, args.height)?;
    let j = args.coupling;
    let m = enumerate_torus(&lat, j)?;
    let mut r = ResultRecord::new("torus", Provenance::Exact, unit, inputs_of(args));
    r.inputs.insert("seed".into(), seed.into());
    r.put("log_partition", m.log_partition());

    // equality of the direct and specification routes over small regions
    let mut residual: f64 = 0.0;
    for region in [vec![0], vec![0, 1], vec![0, 1, 2]] {
        let a = torus_erasure_entropy(&m, &region, unit)?.entropy.value;
        let b = torus_gibbs_erasure(&m, j, &region, unit)?.entropy.value;
        residual = residual.max((a - b).abs());
    }
    r.put("equality_residual", residual);
    r.put("erasure_entropy", torus_erasure_entropy(&m, &[0], unit)?.entropy.value);

    let nb = lat.neighbors(0).to_vec();
    let mut bond = 0.0;
    for &n in &nb {
        bond += m.correlation(&[0, n])?;
    }
    r.put("nn_correlation", bond / nb.len() as f64);
    match lat.kind() {
        LatticeKind::Square => {
            put_triple(&mut r, &square::torus_correlations(&m, 0)?);
            let p = square::torus_class_frequencies(&m, 0)?;
            for (name, v) in ["p1", "p2", "p3", "p4"].iter().zip(p.p) {
                r.put(name, v);
            }
        }
        LatticeKind::Honeycomb => {
            let p = hex::torus_class_frequencies(&m, 0)?;
            r.put("p1", p.p1);
            r.put("p2", p.p2);
        }
    }

    let blocks = nested_blocks(&lat);
    let series = volume_normalized_erasure(&m, &blocks, unit)?;
    let rows: Vec<Value> = blocks
        .iter()
        .zip(&series)
        .map(|(b, v)| json!({"sites": b.len(), "per_site": v}))
        .collect();
    r.tables.insert("volume_series".into(), Value::Array(rows));

    r.put("free_energy_content", free_energy_content(m.distribution(), j, &[0])?);
    let lts = lts_check(&lat, j, 0, args.tilt, args.trials, seed)?;
    r.put("lts_min_delta", lts.min_delta);
    r.put("lts_max_delta", lts.max_delta);
    Ok(r)
}

pub fn cmd_mc(args: &McArgs, unit: EntropyUnit, seed: u64) -> CliResult<ResultRecord> {
    let lat = Lattice::new(args.kind.into(), args.width, args.height)?;
    let kind = lat.kind();
    let cfg = mc_config(lat, args.coupling, &args.mc, seed);
    let mut r = ResultRecord::new("mc", Provenance::MonteCarlo, unit, inputs_of(args));
    r.inputs.insert("seed".into(), seed.into());
    if kind == LatticeKind::Square {
        let est = square::mc_estimates(&cfg, unit)?;
        for (name, e) in ["g4", "g_ew", "g_en"].iter().zip(&est.correlations) {
            r.put_estimate(name, e);
        }
        r.put_estimate("nn_correlation", &est.nn_correlation);
        for (name, e) in ["p1", "p2", "p3", "p4"].iter().zip(&est.class_probs) {
            r.put_estimate(name, e);
        }
        r.put_estimate("erasure_entropy", &est.erasure_plugin);
    } else {
        let degree = 3i32;
        let table = (-degree..=degree)
            .map(|s| binary_entropy(single_site_conditional(cfg.coupling, s), unit).map(|v| v.value))
            .collect::<erasure_core::Result<Vec<f64>>>()?;
        let est = run_observables(&cfg, 4, |lat, spins, out| {
            let (mut bonds, mut counts, mut h) = (0i64, [0usize; 2], 0.0);
            for site in 0..lat.sites() {
                let nb = lat.neighbors(site);
                let s = spins[site] as i64;
                bonds += nb.iter().map(|&n| s * spins[n] as i64).sum::<i64>();
                counts[lat.boundary_class(spins, site)] += 1;
                h += table[(lat.neighbor_sum(spins, site) + degree) as usize];
            }
            let n = lat.sites() as f64;
            out[0] = bonds as f64 / (3.0 * n);
            out[1] = counts[0] as f64 / (2.0 * n);
            out[2] = counts[1] as f64 / (6.0 * n);
            out[3] = h / n;
        })?;
        r.put_estimate("nn_correlation", &est[0]);
        r.put_estimate("p1", &est[1]);
        r.put_estimate("p2", &est[2]);
        r.put_estimate("erasure_entropy", &est[3]);
    }
    Ok(r)
}

pub fn execute(cfg: &RunConfig) -> CliResult<ResultRecord> {
    let unit = cfg.unit();
    let start = Instant::now();
    let run = || match &cfg.command {
        Command::Markov(a) => cmd_markov(a, unit),
        Command::Dme(a) => cmd_dme(a, unit),
        Command::Square(a) => cmd_square(a, unit, cfg.seed),
        Command::Hex(a) => cmd_hex(a, unit),
        Command::Torus(a) => cmd_torus(a, unit, cfg.seed),
        Command::Mc(a) => cmd_mc(a, unit, cfg.seed),
    };
    let mut record = match cfg.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Parse(format!("thread pool: {e}")))?
            .install(run)?,
        None => run()?,
    };
    if cfg.timing {
        record.wall_time_s = Some(start.elapsed().as_secs_f64());
    }
    Ok(record)
}

/// Runs the command and writes the record; returns the process exit code.
pub fn run(cfg: &RunConfig) -> i32 {
    let result = execute(cfg).and_then(|record| {
        let text = record.render(cfg.format);
        match &cfg.output {
            Some(path) => std::fs::write(path, text).map_err(|source| CliError::Io {
                path: path.clone(),
                source,
            }),
            None => {
                print!("{text}");
                Ok(())
            }
        }
    });
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_round_trips_through_json() {
        let cfg = RunConfig::try_parse_from([
            "erasure", "--nats", "--seed", "7", "square", "-J", "0.3", "--provider", "user", "--triple", "0.1,0.2,0.3",
        ])
        .unwrap();
        let text = serde_json::to_string(&cfg).unwrap();
        let back: RunConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn chain_format() {
        let c = parse_chain("# binary symmetric\n2 1\n0.9 0.1\n0.1 0.9  # second row\n").unwrap();
        assert_eq!((c.alphabet(), c.order()), (2, 1));
        let c = parse_chain("2\n1\n0.9 0.1\n0.1 0.9\n").unwrap();
        assert_eq!(c.row(1), &[0.1, 0.9]);
        assert!(matches!(parse_chain("2 1\n0.9 0.1\n"), Err(CliError::Parse(_))));
        assert!(matches!(parse_chain("2 1\n0.9 x\n0.1 0.9\n"), Err(CliError::Parse(_))));
        let e = parse_chain("2 1\n0.9 0.1\n0.2 0.9\n").unwrap_err();
        assert_eq!(e.exit_code(), 3);
        assert!(e.to_string().contains("row 1"), "{e}");
    }

    #[test]
    fn exit_codes() {
        use erasure_core::Error as E;
        let code = |e: E| CliError::Model(e).exit_code();
        assert_eq!(code(E::Budget("x".into())), 4);
        assert_eq!(code(E::NearCritical { min_argument: 0.0 }), 5);
        assert_eq!(code(E::InconsistentCorrelations("x".into())), 6);
        assert_eq!(code(E::MixingFailure("x".into())), 7);
        assert_eq!(code(E::Periodic { period: 2 }), 3);
        let staged = E::Stage {
            stage: "pressure",
            source: Box::new(E::NearCritical { min_argument: 0.0 }),
        };
        assert_eq!(code(staged), 5);
    }

    #[test]
    fn nested_blocks_exclude_whole_lattice() {
        let lat = Lattice::square(3, 3).unwrap();
        let b = nested_blocks(&lat);
        assert_eq!(b.iter().map(Vec::len).collect::<Vec<_>>(), vec![1, 4]);
    }
}
