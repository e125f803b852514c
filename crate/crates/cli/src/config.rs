//! Run configuration parsing.
//!
//! The format is line oriented: `[section]` headers over `key = value`
//! lines, with `#` starting a comment. Three sections exist. `[run]` holds
//! the experiment shape (schedulers, dims, horizon, utility, seeds, output).
//! `[params]` holds optional overrides; omitted parameters fall back to the
//! horizon schedules. Each `[segment]` section contributes one stretch of
//! the success schedule; matrices are written as `;`-separated rows.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use fairmac_core::adaptive_mac::AdaptiveParams;
use fairmac_core::environment::{Segment, SuccessSchedule};
use fairmac_core::ucb_mac::{DeltaSchedule, UcbParams};
use fairmac_core::utility::{UtilityKind, UtilitySpec};
use fairmac_core::Matrix;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Line { line: usize, message: String },
    #[error("{0}")]
    Global(String),
    #[error("{path}: {source}")]
    Include {
        path: String,
        #[source]
        source: Box<ConfigError>,
    },
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
}

fn at(line: usize, message: impl Into<String>) -> ConfigError {
    ConfigError::Line { line, message: message.into() }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SchedulerKind {
    Adaptive,
    SingleChannel,
    Ucb,
}

impl SchedulerKind {
    pub const ALL: [SchedulerKind; 3] =
        [SchedulerKind::Adaptive, SchedulerKind::SingleChannel, SchedulerKind::Ucb];

    pub fn name(self) -> &'static str {
        match self {
            SchedulerKind::Adaptive => "adaptive",
            SchedulerKind::SingleChannel => "single_channel",
            SchedulerKind::Ucb => "ucb",
        }
    }
}

impl fmt::Display for SchedulerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SchedulerKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "adaptive" => Ok(SchedulerKind::Adaptive),
            "single_channel" => Ok(SchedulerKind::SingleChannel),
            "ucb" => Ok(SchedulerKind::Ucb),
            other => Err(format!(
                "unknown scheduler {other:?}; expected adaptive, single_channel, or ucb"
            )),
        }
    }
}

/// A fully validated experiment description.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub schedulers: Vec<SchedulerKind>,
    pub n: usize,
    pub m: usize,
    pub horizon: u64,
    pub utility: UtilitySpec,
    pub adaptive: AdaptiveParams,
    pub ucb: UcbParams,
    pub schedule: SuccessSchedule,
    pub seeds: Vec<u64>,
    pub output: PathBuf,
    pub stride: u64,
    pub debug_x: bool,
}

impl RunConfig {
    pub fn s(&self) -> usize {
        self.n.max(self.m)
    }
}

/// One `key = value` occurrence with the line it came from.
type Raw = Option<(usize, String)>;

#[derive(Default)]
struct Parts {
    scheduler: Raw,
    n: Raw,
    m: Raw,
    horizon: Raw,
    utility: Raw,
    seeds: Raw,
    output: Raw,
    segments_file: Raw,
    v: Raw,
    eta: Raw,
    eps: Raw,
    fairness_floor: Raw,
    delta: Raw,
    stride: Raw,
    debug_x: Raw,
    segments: Vec<RawSegment>,
}

struct RawSegment {
    line: usize,
    start: Raw,
    q: Raw,
}

#[derive(Clone, Copy, PartialEq)]
enum Section {
    None,
    Run,
    Params,
    Segment,
}

fn set(slot: &mut Raw, line: usize, key: &str, value: &str) -> Result<(), ConfigError> {
    if let Some((previous, _)) = slot {
        return Err(at(line, format!("duplicate key {key:?} (first set on line {previous})")));
    }
    *slot = Some((line, value.to_string()));
    Ok(())
}

fn split_sections(text: &str) -> Result<Parts, ConfigError> {
    let mut parts = Parts::default();
    let mut section = Section::None;
    for (idx, raw_line) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw_line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if let Some(header) = content.strip_prefix('[') {
            let Some(name) = header.strip_suffix(']') else {
                return Err(at(line, format!("malformed section header {content:?}")));
            };
            section = match name.trim() {
                "run" => Section::Run,
                "params" => Section::Params,
                "segment" => {
                    parts.segments.push(RawSegment { line, start: None, q: None });
                    Section::Segment
                }
                other => return Err(at(line, format!("unknown section [{other}]"))),
            };
            continue;
        }
        let Some((key, value)) = content.split_once('=') else {
            return Err(at(line, format!("expected `key = value`, got {content:?}")));
        };
        let key = key.trim();
        let value = value.trim();
        match section {
            Section::None => {
                return Err(at(line, format!("key {key:?} appears before any [section]")));
            }
            Section::Run => match key {
                "scheduler" => set(&mut parts.scheduler, line, key, value)?,
                "n" => set(&mut parts.n, line, key, value)?,
                "m" => set(&mut parts.m, line, key, value)?,
                "horizon" => set(&mut parts.horizon, line, key, value)?,
                "utility" => set(&mut parts.utility, line, key, value)?,
                "seeds" => set(&mut parts.seeds, line, key, value)?,
                "output" => set(&mut parts.output, line, key, value)?,
                "segments_file" => set(&mut parts.segments_file, line, key, value)?,
                other => return Err(at(line, format!("unknown [run] key {other:?}"))),
            },
            Section::Params => match key {
                "v" => set(&mut parts.v, line, key, value)?,
                "eta" => set(&mut parts.eta, line, key, value)?,
                "eps" => set(&mut parts.eps, line, key, value)?,
                "fairness_floor" => set(&mut parts.fairness_floor, line, key, value)?,
                "delta" => set(&mut parts.delta, line, key, value)?,
                "stride" => set(&mut parts.stride, line, key, value)?,
                "debug_x" => set(&mut parts.debug_x, line, key, value)?,
                other => return Err(at(line, format!("unknown [params] key {other:?}"))),
            },
            Section::Segment => {
                let segment = parts.segments.last_mut().expect("segment section was opened");
                match key {
                    "start" => set(&mut segment.start, line, key, value)?,
                    "q" => set(&mut segment.q, line, key, value)?,
                    other => return Err(at(line, format!("unknown [segment] key {other:?}"))),
                }
            }
        }
    }
    Ok(parts)
}

fn parse_num<T: FromStr>(raw: &(usize, String), what: &str) -> Result<T, ConfigError> {
    raw.1.parse::<T>().map_err(|_| at(raw.0, format!("cannot parse {what} from {:?}", raw.1)))
}

fn parse_bool(raw: &(usize, String)) -> Result<bool, ConfigError> {
    match raw.1.as_str() {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        other => Err(at(raw.0, format!("cannot parse a boolean from {other:?}"))),
    }
}

fn parse_list<T: FromStr>(raw: &(usize, String), what: &str) -> Result<Vec<T>, ConfigError>
where
    T::Err: fmt::Display,
{
    let items: Result<Vec<T>, _> = raw
        .1
        .split(',')
        .map(str::trim)
        .filter(|piece| !piece.is_empty())
        .map(str::parse::<T>)
        .collect();
    match items {
        Ok(list) if !list.is_empty() => Ok(list),
        Ok(_) => Err(at(raw.0, format!("empty {what} list"))),
        Err(e) => Err(at(raw.0, format!("bad {what} list: {e}"))),
    }
}

/// Parses `name` or `name(arg, arg, ...)`.
fn parse_call(text: &str) -> Option<(&str, Vec<&str>)> {
    match text.split_once('(') {
        None => Some((text.trim(), Vec::new())),
        Some((name, rest)) => {
            let args = rest.strip_suffix(')')?;
            let args = if args.trim().is_empty() {
                Vec::new()
            } else {
                args.split(',').map(str::trim).collect()
            };
            Some((name.trim(), args))
        }
    }
}

fn parse_utility(raw: &(usize, String), n: usize) -> Result<UtilitySpec, ConfigError> {
    let (line, text) = (raw.0, raw.1.as_str());
    let Some((name, args)) = parse_call(text) else {
        return Err(at(line, format!("malformed utility {text:?}")));
    };
    let arg = |k: usize| -> Result<f64, ConfigError> {
        args[k].parse().map_err(|_| at(line, format!("bad utility argument {:?}", args[k])))
    };
    let kind = match (name, args.len()) {
        ("min", 0) => UtilityKind::Min,
        ("log_prop", 1) => UtilityKind::LogProp { beta: arg(0)? },
        ("weighted_combo", 3) => {
            UtilityKind::WeightedCombo { w1: arg(0)?, w2: arg(1)?, beta: arg(2)? }
        }
        ("weighted_linear", k) if k == n => {
            let weights = (0..n).map(arg).collect::<Result<Vec<_>, _>>()?;
            UtilityKind::WeightedLinear { weights }
        }
        ("weighted_linear", k) => {
            return Err(at(line, format!("weighted_linear needs {n} weights, got {k}")));
        }
        _ => {
            return Err(at(
                line,
                format!(
                    "unknown utility {text:?}; expected min, log_prop(beta), \
                     weighted_combo(w1, w2, beta), or weighted_linear(w, ...)"
                ),
            ));
        }
    };
    UtilitySpec::new(kind, n).map_err(|e| at(line, e.to_string()))
}

fn parse_delta(raw: &(usize, String)) -> Result<DeltaSchedule, ConfigError> {
    let (line, text) = (raw.0, raw.1.as_str());
    match parse_call(text) {
        Some(("reciprocal", args)) if args.is_empty() => Ok(DeltaSchedule::Reciprocal),
        Some(("constant", args)) if args.len() == 1 => {
            let c: f64 = args[0]
                .parse()
                .map_err(|_| at(line, format!("bad delta constant {:?}", args[0])))?;
            Ok(DeltaSchedule::Constant(c))
        }
        _ => Err(at(line, format!("unknown delta rule {text:?}; expected reciprocal or constant(c)"))),
    }
}

fn parse_matrix(raw: &(usize, String), n: usize, m: usize) -> Result<Matrix, ConfigError> {
    let (line, text) = (raw.0, raw.1.as_str());
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for row_text in text.split(';') {
        let row: Result<Vec<f64>, _> = row_text
            .split([' ', '\t', ','])
            .filter(|piece| !piece.is_empty())
            .map(str::parse::<f64>)
            .collect();
        let row = row.map_err(|e| at(line, format!("malformed matrix row {row_text:?}: {e}")))?;
        rows.push(row);
    }
    if rows.len() != n || rows.iter().any(|row| row.len() != m) {
        return Err(at(
            line,
            format!(
                "matrix has shape {}x{}, expected {n}x{m}",
                rows.len(),
                rows.first().map_or(0, Vec::len)
            ),
        ));
    }
    Ok(Matrix::from_rows(&rows))
}

fn require<'a>(slot: &'a Raw, what: &str) -> Result<&'a (usize, String), ConfigError> {
    slot.as_ref().ok_or_else(|| ConfigError::Global(format!("missing required key {what:?}")))
}

fn assemble(parts: Parts) -> Result<RunConfig, ConfigError> {
    let schedulers: Vec<SchedulerKind> =
        parse_list(require(&parts.scheduler, "scheduler")?, "scheduler")?;
    let n: usize = parse_num(require(&parts.n, "n")?, "n")?;
    let m: usize = parse_num(require(&parts.m, "m")?, "m")?;
    if n == 0 || m == 0 {
        let raw = if n == 0 { parts.n } else { parts.m };
        return Err(at(raw.expect("key present").0, "dimensions must be at least 1"));
    }
    let horizon: u64 = parse_num(require(&parts.horizon, "horizon")?, "horizon")?;
    if horizon == 0 {
        return Err(at(parts.horizon.expect("key present").0, "horizon must be at least 1"));
    }
    let s = n.max(m);

    if schedulers.contains(&SchedulerKind::SingleChannel) && m != 1 {
        return Err(at(
            parts.scheduler.expect("key present").0,
            format!("single_channel requires m = 1, got m = {m}"),
        ));
    }

    let utility = parse_utility(require(&parts.utility, "utility")?, n)?;

    let mut adaptive = AdaptiveParams::for_horizon(horizon, s);
    if let Some(raw) = &parts.v {
        adaptive.v = parse_num(raw, "v")?;
    }
    if let Some(raw) = &parts.eta {
        adaptive.eta = parse_num(raw, "eta")?;
    }
    if let Some(raw) = &parts.eps {
        adaptive.eps = parse_num(raw, "eps")?;
    }
    if let Some(raw) = &parts.fairness_floor {
        let theta: f64 = parse_num(raw, "fairness_floor")?;
        if !(theta > 0.0 && theta <= 1.0 / s as f64) {
            return Err(at(raw.0, format!("fairness_floor {theta} outside (0, 1/{s}]")));
        }
        adaptive.eps = theta;
    }
    // Report infeasible mirror parameters on the line that set them.
    let param_line = |slot: &Raw, fallback: &Raw| -> usize {
        slot.as_ref().or(fallback.as_ref()).map_or(0, |(line, _)| *line)
    };
    if !(adaptive.v.is_finite() && adaptive.v > 0.0) {
        return Err(at(param_line(&parts.v, &parts.v), format!("v = {} must be positive", adaptive.v)));
    }
    if !(adaptive.eta.is_finite() && adaptive.eta > 0.0) {
        return Err(at(param_line(&parts.eta, &parts.eta), format!("eta = {} must be positive", adaptive.eta)));
    }
    if !(adaptive.eps > 0.0 && adaptive.eps * (s as f64) < 1.0) {
        return Err(at(
            param_line(&parts.fairness_floor, &parts.eps),
            format!("eps = {} must satisfy 0 < eps < 1/s = {}", adaptive.eps, 1.0 / s as f64),
        ));
    }

    let mut ucb = UcbParams::for_horizon(horizon);
    if let Some(raw) = &parts.v {
        ucb.v = parse_num(raw, "v")?;
    }
    if let Some(raw) = &parts.delta {
        ucb.delta = parse_delta(raw)?;
    }
    if let DeltaSchedule::Constant(c) = ucb.delta {
        if !(c > 0.0 && c <= 1.0) {
            return Err(at(
                parts.delta.as_ref().expect("delta was set").0,
                format!("delta constant {c} outside (0, 1]"),
            ));
        }
    }

    if parts.segments.is_empty() {
        return Err(ConfigError::Global("config defines no [segment] sections".into()));
    }
    let mut segments = Vec::with_capacity(parts.segments.len());
    let mut segment_lines = Vec::with_capacity(parts.segments.len());
    for raw_segment in &parts.segments {
        let start_raw = raw_segment.start.as_ref().ok_or_else(|| {
            at(raw_segment.line, "segment is missing its `start` key")
        })?;
        let start: u64 = parse_num(start_raw, "segment start")?;
        let q_raw = raw_segment
            .q
            .as_ref()
            .ok_or_else(|| at(raw_segment.line, "segment is missing its `q` key"))?;
        let q = parse_matrix(q_raw, n, m)?;
        segments.push(Segment { start, q });
        segment_lines.push(raw_segment.line);
    }
    let schedule = SuccessSchedule::new(segments, horizon)
        .map_err(|e| at(segment_lines[0], e.to_string()))?;

    let seeds = match &parts.seeds {
        Some(raw) => parse_list(raw, "seeds")?,
        None => vec![1],
    };
    let output = match &parts.output {
        Some((_, value)) => PathBuf::from(value),
        None => PathBuf::from("runs"),
    };
    let stride = match &parts.stride {
        Some(raw) => {
            let stride: u64 = parse_num(raw, "stride")?;
            if stride == 0 {
                return Err(at(raw.0, "stride must be at least 1"));
            }
            stride
        }
        None => 100,
    };
    let debug_x = match &parts.debug_x {
        Some(raw) => parse_bool(raw)?,
        None => false,
    };

    Ok(RunConfig {
        schedulers,
        n,
        m,
        horizon,
        utility,
        adaptive,
        ucb,
        schedule,
        seeds,
        output,
        stride,
        debug_x,
    })
}

/// Parses a complete, self-contained config text (inline segments only).
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let parts = split_sections(text)?;
    if let Some((line, _)) = &parts.segments_file {
        return Err(at(*line, "segments_file needs a base directory; load the config from a path"));
    }
    assemble(parts)
}

/// Loads a config from disk, resolving a `segments_file` reference (a file
/// holding only `[segment]` sections) relative to the config's directory.
pub fn load_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    let mut parts = split_sections(&text)?;
    if let Some((line, file)) = parts.segments_file.take() {
        if !parts.segments.is_empty() {
            return Err(at(line, "segments_file and inline [segment] sections are mutually exclusive"));
        }
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        let segment_path = base.join(&file);
        let segment_text =
            std::fs::read_to_string(&segment_path).map_err(|e| ConfigError::Io {
                path: segment_path.display().to_string(),
                message: e.to_string(),
            })?;
        let included = split_sections(&segment_text).map_err(|e| ConfigError::Include {
            path: file.clone(),
            source: Box::new(e),
        })?;
        let only_segments = included.scheduler.is_none()
            && included.n.is_none()
            && included.m.is_none()
            && included.horizon.is_none()
            && included.utility.is_none()
            && included.seeds.is_none()
            && included.output.is_none()
            && included.segments_file.is_none()
            && included.v.is_none()
            && included.eta.is_none()
            && included.eps.is_none()
            && included.fairness_floor.is_none()
            && included.delta.is_none()
            && included.stride.is_none()
            && included.debug_x.is_none();
        if !only_segments {
            return Err(ConfigError::Include {
                path: file,
                source: Box::new(ConfigError::Global(
                    "a segments file may only contain [segment] sections".into(),
                )),
            });
        }
        parts.segments = included.segments;
    }
    assemble(parts)
}
