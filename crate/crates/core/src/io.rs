//! Run configuration, CSV trajectories, binary checkpoints and atomic file output.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cucker_smale::{KernelSpec, ThetaState};
use crate::dynamics::{EnsembleState, ModelKind, ModelParams};
use crate::error::{QsyncError, Result};
use crate::experiments;
use crate::grid::{GaussianPacket, GridSpec, PotentialSpec, WaveField, C64};
use crate::observables::ObservableFrame;
use crate::reduced::{ReducedParams, ReducedState};

fn cfg_err(key: &str, reason: impl Into<String>) -> QsyncError {
    QsyncError::Config {
        key: key.into(),
        reason: reason.into(),
    }
}

// ---------------------------------------------------------------------------
// Configuration.

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(default = "default_dim")]
    pub dim: usize,
    #[serde(default = "default_points")]
    pub points_per_dim: usize,
    #[serde(default = "default_half_width")]
    pub half_width: f64,
}

fn default_dim() -> usize {
    1
}
fn default_points() -> usize {
    256
}
fn default_half_width() -> f64 {
    20.0
}
fn default_one() -> f64 {
    1.0
}
fn default_dt() -> f64 {
    1e-3
}
fn default_reduced_dt() -> f64 {
    1e-4
}
fn default_t_final() -> f64 {
    10.0
}
fn default_potential() -> PotentialSpec {
    PotentialSpec::Harmonic { omega: 1.0 }
}
fn default_sample_every() -> usize {
    10
}
fn default_directory() -> String {
    "out".into()
}
fn default_formats() -> Vec<OutputFormat> {
    vec![OutputFormat::Csv, OutputFormat::Checkpoint]
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            dim: default_dim(),
            points_per_dim: default_points(),
            half_width: default_half_width(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModelKindConfig {
    #[serde(rename = "standard_sl")]
    StandardSL,
    #[serde(rename = "model1")]
    Model1,
    #[serde(rename = "model2")]
    Model2,
}

impl From<ModelKindConfig> for ModelKind {
    fn from(k: ModelKindConfig) -> Self {
        match k {
            ModelKindConfig::StandardSL => ModelKind::StandardSL,
            ModelKindConfig::Model1 => ModelKind::Model1,
            ModelKindConfig::Model2 => ModelKind::Model2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub kind: ModelKindConfig,
    /// Number of oscillators.
    pub n: usize,
    #[serde(default = "default_one")]
    pub k: f64,
    #[serde(default = "default_one")]
    pub mu: f64,
    /// Natural frequencies; all zero when empty.
    #[serde(default)]
    pub omegas: Vec<f64>,
    #[serde(default)]
    pub kernel: KernelSpec,
    #[serde(default = "default_potential")]
    pub potential: PotentialSpec,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_t_final")]
    pub t_final: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PacketConfig {
    pub center: Vec<f64>,
    #[serde(default)]
    pub momentum: Vec<f64>,
    #[serde(default = "default_one")]
    pub width: f64,
    #[serde(default = "default_one")]
    pub amplitude: f64,
    #[serde(default)]
    pub phase: f64,
}

/// Either a catalog scenario (with seed) or an explicit packet list.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oscillators: Option<Vec<PacketConfig>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub thetas: Option<Vec<f64>>,
    /// Rescale `thetas` to unit mean instead of rejecting them.
    #[serde(default)]
    pub rescale: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    Csv,
    Checkpoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_directory")]
    pub directory: String,
    #[serde(default = "default_sample_every")]
    pub sample_every: usize,
    #[serde(default = "default_formats")]
    pub formats: Vec<OutputFormat>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            directory: default_directory(),
            sample_every: default_sample_every(),
            formats: default_formats(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub grid: GridConfig,
    pub model: ModelConfig,
    pub initial: InitialConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

/// Turns a serde message into a config error naming the offending key.
fn map_serde(e: serde_json::Error) -> QsyncError {
    let msg = e.to_string();
    let key = ["unknown field `", "missing field `", "unknown variant `"]
        .iter()
        .find_map(|pat| {
            let start = msg.find(pat)? + pat.len();
            let len = msg[start..].find('`')?;
            Some(msg[start..start + len].to_string())
        })
        .unwrap_or_else(|| format!("line {} column {}", e.line(), e.column()));
    cfg_err(&key, msg)
}

/// Parses and validates a JSON run configuration.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let cfg: RunConfig = serde_json::from_str(text).map_err(map_serde)?;
    cfg.validate()?;
    Ok(cfg)
}

/// Pretty JSON with every default spelled out.
pub fn emit_config(cfg: &RunConfig) -> String {
    serde_json::to_string_pretty(cfg).expect("config serializes")
}

impl RunConfig {
    pub fn grid_spec(&self) -> Result<GridSpec> {
        GridSpec::new(self.grid.dim, self.grid.points_per_dim, self.grid.half_width)
            .map_err(|e| cfg_err("grid", e.to_string()))
    }

    pub fn model_params(&self) -> ModelParams {
        let m = &self.model;
        ModelParams {
            kind: m.kind.into(),
            k: m.k,
            mu: m.mu,
            omegas: if m.omegas.is_empty() {
                vec![0.0; m.n]
            } else {
                m.omegas.clone()
            },
            kernel: m.kernel.clone(),
            potential: m.potential.clone(),
            dt: m.dt,
            t_final: m.t_final,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let grid = self.grid_spec()?;
        let m = &self.model;
        if m.n == 0 {
            return Err(cfg_err("model.n", "must be at least 1"));
        }
        if !m.omegas.is_empty() && m.omegas.len() != m.n {
            return Err(cfg_err("model.omegas", format!("expected {} entries, got {}", m.n, m.omegas.len())));
        }
        self.model_params()
            .validate(m.n, &grid)
            .map_err(|e| cfg_err("model", e.to_string()))?;
        if self.output.sample_every == 0 {
            return Err(cfg_err("output.sample_every", "must be positive"));
        }
        let init = &self.initial;
        match (&init.scenario, &init.oscillators) {
            (Some(_), Some(_)) => {
                return Err(cfg_err("initial", "give either `scenario` or `oscillators`, not both"))
            }
            (None, None) => return Err(cfg_err("initial", "one of `scenario` or `oscillators` is required")),
            (Some(name), None) => {
                if init.thetas.is_some() {
                    return Err(cfg_err("initial.thetas", "only allowed with `oscillators`"));
                }
                let sc = experiments::build(name, init.seed.unwrap_or(0), grid).map_err(|e| match e {
                    QsyncError::UnknownScenario(_) => cfg_err("initial.scenario", e.to_string()),
                    other => cfg_err("initial.scenario", other.to_string()),
                })?;
                if sc.initial.n() != m.n {
                    return Err(cfg_err(
                        "model.n",
                        format!("scenario `{name}` has {} oscillators, config says {}", sc.initial.n(), m.n),
                    ));
                }
            }
            (None, Some(list)) => {
                if init.seed.is_some() {
                    return Err(cfg_err("initial.seed", "only allowed with `scenario`"));
                }
                if list.len() != m.n {
                    return Err(cfg_err("initial.oscillators", format!("expected {} entries, got {}", m.n, list.len())));
                }
                if let Some(th) = &init.thetas {
                    if th.len() != m.n {
                        return Err(cfg_err("initial.thetas", format!("expected {} entries, got {}", m.n, th.len())));
                    }
                    let t = ThetaState::new(th.clone()).map_err(|e| cfg_err("initial.thetas", e.to_string()))?;
                    if !init.rescale && (t.mean() - 1.0).abs() > 1e-12 {
                        return Err(cfg_err(
                            "initial.thetas",
                            format!("mean is {} (set `rescale` to normalize)", t.mean()),
                        ));
                    }
                }
                for (j, p) in list.iter().enumerate() {
                    self.packet(p, grid)
                        .map_err(|e| cfg_err(&format!("initial.oscillators[{j}]"), e.to_string()))?;
                }
            }
        }
        Ok(())
    }

    fn packet(&self, p: &PacketConfig, grid: GridSpec) -> Result<WaveField> {
        let momentum = if p.momentum.is_empty() {
            vec![0.0; grid.dim()]
        } else {
            p.momentum.clone()
        };
        GaussianPacket {
            center: p.center.clone(),
            momentum,
            width: p.width,
            amplitude: p.amplitude,
            phase: p.phase,
        }
        .sample(grid)
    }

    /// Initial state and parameters described by this config.
    pub fn build(&self) -> Result<(EnsembleState, ModelParams)> {
        self.validate()?;
        let grid = self.grid_spec()?;
        let params = self.model_params();
        let init = &self.initial;
        let state = match (&init.scenario, &init.oscillators) {
            (Some(name), _) => experiments::build(name, init.seed.unwrap_or(0), grid)?.initial,
            (None, Some(list)) => {
                let fields = list
                    .iter()
                    .map(|p| self.packet(p, grid))
                    .collect::<Result<Vec<_>>>()?;
                let theta = match &init.thetas {
                    Some(t) if init.rescale => ThetaState::new(t.clone())?.normalized(),
                    Some(t) => ThetaState::new(t.clone())?,
                    None => ThetaState::uniform(list.len()),
                };
                EnsembleState::new(fields, theta, 0.0)?
            }
            (None, None) => unreachable!("validated above"),
        };
        Ok((state, params))
    }
}

/// Input of the `reduced` subcommand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReducedConfig {
    pub params: ReducedParams,
    pub initial: ReducedInitial,
    #[serde(default = "default_reduced_dt")]
    pub dt: f64,
    #[serde(default = "default_t_final")]
    pub t_final: f64,
    #[serde(default = "default_sample_every")]
    pub sample_every: usize,
    #[serde(default = "default_directory")]
    pub directory: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReducedInitial {
    /// `[re, im]` of the correlation.
    pub z: C64,
    pub lambda1: f64,
    pub lambda2: f64,
    #[serde(default = "default_one")]
    pub theta1: f64,
    #[serde(default = "default_one")]
    pub theta2: f64,
}

impl ReducedInitial {
    pub fn state(&self) -> ReducedState {
        ReducedState {
            z: self.z,
            lambda1: self.lambda1,
            lambda2: self.lambda2,
            theta1: self.theta1,
            theta2: self.theta2,
            time: 0.0,
        }
    }
}

pub fn parse_reduced_config(text: &str) -> Result<ReducedConfig> {
    let cfg: ReducedConfig = serde_json::from_str(text).map_err(map_serde)?;
    if !(cfg.dt > 0.0 && cfg.t_final >= cfg.dt) {
        return Err(cfg_err("dt", "need 0 < dt <= t_final"));
    }
    if cfg.sample_every == 0 {
        return Err(cfg_err("sample_every", "must be positive"));
    }
    let i = &cfg.initial;
    if !(i.lambda1 > 0.0 && i.lambda2 > 0.0 && i.theta1 > 0.0 && i.theta2 > 0.0) {
        return Err(cfg_err("initial", "masses and thetas must be positive"));
    }
    if !(i.z.norm() <= 1.0 + 1e-12) {
        return Err(cfg_err("initial.z", "correlation must satisfy |z| <= 1"));
    }
    let p = &cfg.params;
    if !(p.k > 0.0 && p.mu >= 0.0 && p.c >= 0.0 && p.omega.is_finite()) {
        return Err(cfg_err("params", "need k > 0, mu >= 0, c >= 0 and finite omega"));
    }
    Ok(cfg)
}

// ---------------------------------------------------------------------------
// Trajectory CSV.

fn axis_suffix(a: usize) -> &'static str {
    ["x", "y"][a]
}

/// Header columns for `n` oscillators in `dim` dimensions.
pub fn trajectory_columns(n: usize, dim: usize) -> Vec<String> {
    let mut cols = vec!["time".to_string()];
    cols.extend((1..=n).map(|j| format!("lambda_{j}")));
    cols.extend((1..=n).map(|j| format!("theta_{j}")));
    for j in 1..=n {
        if dim == 1 {
            cols.push(format!("x_{j}"));
        } else {
            cols.extend((0..dim).map(|a| format!("x_{j}_{}", axis_suffix(a))));
        }
    }
    cols.extend(["zeta_norm", "min_corr", "theta_spread", "diameter"].map(String::from));
    for part in ["re", "im"] {
        for j in 1..=n {
            for k in (j + 1)..=n {
                cols.push(format!("corr_{part}_{j}_{k}"));
            }
        }
    }
    cols
}

fn num(out: &mut String, v: f64) {
    let _ = write!(out, ",{v:.16e}");
}

/// Serializes frames; an empty slice gives a header for `n` oscillators in `dim` dimensions.
pub fn write_trajectory(frames: &[ObservableFrame], n: usize, dim: usize) -> String {
    let mut out = trajectory_columns(n, dim).join(",");
    out.push('\n');
    for f in frames {
        let _ = write!(out, "{:.16e}", f.time);
        f.masses.iter().for_each(|v| num(&mut out, *v));
        f.thetas.iter().for_each(|v| num(&mut out, *v));
        f.centers.iter().flatten().for_each(|v| num(&mut out, *v));
        for v in [f.zeta_norm, f.min_corr, f.theta_spread, f.diameter] {
            num(&mut out, v);
        }
        for m in [&f.corr_re, &f.corr_im] {
            for j in 0..n {
                for k in (j + 1)..n {
                    num(&mut out, m[j][k]);
                }
            }
        }
        out.push('\n');
    }
    out
}

fn header_shape(cols: &[&str]) -> Result<(usize, usize)> {
    let bad = |reason: &str| QsyncError::Parse {
        line: 1,
        reason: reason.into(),
    };
    let n = cols.iter().filter(|c| c.starts_with("lambda_")).count();
    if n == 0 {
        return Err(bad("no lambda columns in header"));
    }
    let dim = if cols.contains(&"x_1") {
        1
    } else {
        cols.iter().filter(|c| c.starts_with("x_1_")).count()
    };
    if !(1..=2).contains(&dim) {
        return Err(bad("cannot infer spatial dimension from header"));
    }
    let expected = trajectory_columns(n, dim);
    if cols.len() != expected.len() || cols.iter().zip(&expected).any(|(a, b)| a != b) {
        return Err(bad("header does not match the trajectory schema"));
    }
    Ok((n, dim))
}

/// Parses a trajectory CSV; the schema is inferred from the header.
pub fn read_trajectory(text: &str) -> Result<Vec<ObservableFrame>> {
    let mut lines = text.lines();
    let header = lines.next().ok_or(QsyncError::Parse {
        line: 1,
        reason: "missing header".into(),
    })?;
    let cols: Vec<&str> = header.split(',').collect();
    let (n, dim) = header_shape(&cols)?;
    let width = cols.len();
    let mut frames: Vec<ObservableFrame> = Vec::new();
    for (i, line) in lines.enumerate() {
        let lineno = i + 2;
        if line.is_empty() {
            continue;
        }
        let vals = line
            .split(',')
            .map(|s| {
                s.trim().parse::<f64>().map_err(|e| QsyncError::Parse {
                    line: lineno,
                    reason: format!("bad number `{s}`: {e}"),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        if vals.len() != width {
            return Err(QsyncError::Parse {
                line: lineno,
                reason: format!("expected {width} fields, got {}", vals.len()),
            });
        }
        let mut it = vals.into_iter();
        let mut take = |m: usize| -> Vec<f64> { it.by_ref().take(m).collect() };
        let time = take(1)[0];
        if let Some(prev) = frames.last() {
            if !(time > prev.time) {
                return Err(QsyncError::Parse {
                    line: lineno,
                    reason: format!("time {time} does not increase"),
                });
            }
        }
        let masses = take(n);
        let thetas = take(n);
        let centers: Vec<Vec<f64>> = take(n * dim).chunks(dim).map(|c| c.to_vec()).collect();
        let s = take(4);
        let pairs = n * (n - 1) / 2;
        let re = take(pairs);
        let im = take(pairs);
        let mut corr_re = vec![vec![0.0; n]; n];
        let mut corr_im = vec![vec![0.0; n]; n];
        let mut p = 0;
        for j in 0..n {
            corr_re[j][j] = 1.0;
            for k in (j + 1)..n {
                corr_re[j][k] = re[p];
                corr_re[k][j] = re[p];
                corr_im[j][k] = im[p];
                corr_im[k][j] = -im[p];
                p += 1;
            }
        }
        frames.push(ObservableFrame {
            time,
            masses,
            thetas,
            centers,
            corr_re,
            corr_im,
            zeta_norm: s[0],
            min_corr: s[1],
            theta_spread: s[2],
            diameter: s[3],
        });
    }
    Ok(frames)
}

/// Two-oscillator reduced state presented as a frame with one correlation.
pub fn reduced_frame(s: &ReducedState) -> ObservableFrame {
    let (l1, l2, z) = (s.lambda1, s.lambda2, s.z);
    let zeta_sq = 0.25 * (l1 * l1 + l2 * l2 + 2.0 * l1 * l2 * z.re);
    ObservableFrame {
        time: s.time,
        masses: vec![l1, l2],
        thetas: vec![s.theta1, s.theta2],
        centers: vec![vec![0.0], vec![0.0]],
        corr_re: vec![vec![1.0, z.re], vec![z.re, 1.0]],
        corr_im: vec![vec![0.0, z.im], vec![-z.im, 0.0]],
        zeta_norm: zeta_sq.max(0.0).sqrt(),
        min_corr: z.re,
        theta_spread: 0.5 * (s.theta1 - s.theta2).abs(),
        diameter: 0.0,
    }
}

// ---------------------------------------------------------------------------
// Checkpoints.

const MAGIC: &[u8; 5] = b"QSYN1";

/// Little-endian binary snapshot of a state.
pub fn checkpoint(state: &EnsembleState) -> Vec<u8> {
    let g = state.grid();
    let mut out = Vec::with_capacity(40 + state.n() * (8 + 16 * g.len()));
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(g.dim() as u32).to_le_bytes());
    out.extend_from_slice(&(g.points_per_dim() as u32).to_le_bytes());
    out.extend_from_slice(&g.half_width().to_le_bytes());
    out.extend_from_slice(&(state.n() as u32).to_le_bytes());
    out.extend_from_slice(&state.time.to_le_bytes());
    for t in state.theta.values() {
        out.extend_from_slice(&t.to_le_bytes());
    }
    for f in &state.fields {
        for v in f.values() {
            out.extend_from_slice(&v.re.to_le_bytes());
            out.extend_from_slice(&v.im.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self.pos.checked_add(n).filter(|e| *e <= self.bytes.len()).ok_or_else(|| {
            QsyncError::Checkpoint(format!("truncated at byte {} (needed {n} more)", self.pos))
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

/// Inverse of [`checkpoint`]; rejects bad magic, truncation and trailing bytes.
pub fn restore(bytes: &[u8]) -> Result<EnsembleState> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(MAGIC.len()).ok() != Some(&MAGIC[..]) {
        return Err(QsyncError::Checkpoint("bad magic or version".into()));
    }
    let dim = r.u32()? as usize;
    let points = r.u32()? as usize;
    let half_width = r.f64()?;
    let grid = GridSpec::new(dim, points, half_width).map_err(|e| QsyncError::Checkpoint(e.to_string()))?;
    let n = r.u32()? as usize;
    if n == 0 {
        return Err(QsyncError::Checkpoint("zero oscillators".into()));
    }
    let time = r.f64()?;
    let needed = n
        .checked_mul(8 + 16 * grid.len())
        .ok_or_else(|| QsyncError::Checkpoint("size overflow".into()))?;
    if bytes.len() - r.pos != needed {
        let what = if bytes.len() - r.pos < needed { "truncated" } else { "trailing bytes" };
        return Err(QsyncError::Checkpoint(format!(
            "{what}: payload has {} bytes, expected {needed}",
            bytes.len() - r.pos
        )));
    }
    let theta = (0..n).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
    let theta = ThetaState::new(theta).map_err(|e| QsyncError::Checkpoint(e.to_string()))?;
    let mut fields = Vec::with_capacity(n);
    for _ in 0..n {
        let mut v = Vec::with_capacity(grid.len());
        for _ in 0..grid.len() {
            v.push(C64::new(r.f64()?, r.f64()?));
        }
        fields.push(WaveField::new(grid, v).map_err(|e| QsyncError::Checkpoint(e.to_string()))?);
    }
    EnsembleState::new(fields, theta, time)
}

// ---------------------------------------------------------------------------
// Files.

/// Writes `bytes` to a sibling temp file and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path
        .file_name()
        .ok_or_else(|| QsyncError::Io(format!("not a file path: {}", path.display())))?;
    let tmp: PathBuf = dir.join(format!(".{}.tmp-{}", name.to_string_lossy(), std::process::id()));
    let result = (|| -> std::io::Result<()> {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result.map_err(QsyncError::from)
}

/// Worker count from `QSYNC_THREADS`; one when unset or invalid.
pub fn threads_from_env() -> usize {
    std::env::var("QSYNC_THREADS")
        .ok()
        .and_then(|s| s.trim().parse::<usize>().ok())
        .filter(|n| *n >= 1)
        .unwrap_or(1)
}

/// Writes `trajectory.csv` and `report.json` for a scenario outcome into `dir`.
pub fn write_scenario_outputs(dir: &Path, outcome: &mut experiments::ScenarioOutcome) -> Result<()> {
    fs::create_dir_all(dir)?;
    let (n, dim) = outcome
        .frames
        .first()
        .map(|f| (f.n(), f.centers.first().map_or(1, |c| c.len())))
        .unwrap_or((0, 1));
    let traj = dir.join("trajectory.csv");
    write_atomic(&traj, write_trajectory(&outcome.frames, n, dim).as_bytes())?;
    outcome.report.trajectory_files = vec![traj.display().to_string()];
    let report = serde_json::to_string_pretty(&outcome.report).map_err(|e| QsyncError::Io(e.to_string()))?;
    write_atomic(&dir.join("report.json"), report.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{"model": {"kind": "model1", "n": 2}, "initial": {"scenario": "two_identical"}}"#;

    #[test]
    fn minimal_config_defaults() {
        let c = parse_config(MINIMAL).unwrap();
        assert_eq!(c.grid, GridConfig::default());
        assert_eq!((c.model.k, c.model.mu, c.model.dt), (1.0, 1.0, 1e-3));
        assert_eq!(c.model.kernel, KernelSpec::HeavyTail { gamma: 1.0 });
        assert_eq!(c.grid_spec().unwrap(), GridSpec::default_1d());
    }

    #[test]
    fn unknown_key_is_named() {
        let text = r#"{"model": {"kind": "model1", "n": 2, "dampening": 0.1}, "initial": {"scenario": "two_identical"}}"#;
        match parse_config(text) {
            Err(QsyncError::Config { key, .. }) => assert_eq!(key, "dampening"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn initial_source_rules() {
        let both = r#"{"model": {"kind": "model1", "n": 1}, "initial": {"scenario": "x", "oscillators": [{"center": [0.0]}]}}"#;
        assert!(matches!(parse_config(both), Err(QsyncError::Config { key, .. }) if key == "initial"));
        let wrong_n = r#"{"model": {"kind": "model1", "n": 3}, "initial": {"scenario": "two_identical"}}"#;
        assert!(matches!(parse_config(wrong_n), Err(QsyncError::Config { key, .. }) if key == "model.n"));
        let mean = r#"{"model": {"kind": "model1", "n": 2}, "initial": {"oscillators": [{"center": [0.0]}, {"center": [1.0]}], "thetas": [1.0, 2.0]}}"#;
        assert!(matches!(parse_config(mean), Err(QsyncError::Config { key, .. }) if key == "initial.thetas"));
        let ok = mean.replace("2.0]}}", "2.0], \"rescale\": true}}");
        let c = parse_config(&ok).unwrap();
        let (s, _) = c.build().unwrap();
        assert!((s.theta.mean() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn config_round_trip() {
        let c = parse_config(MINIMAL).unwrap();
        let again = parse_config(&emit_config(&c)).unwrap();
        assert_eq!(c, again);
    }

    #[test]
    fn column_count() {
        assert_eq!(trajectory_columns(3, 1).len(), 20);
        assert_eq!(trajectory_columns(2, 2)[5..9], ["x_1_x", "x_1_y", "x_2_x", "x_2_y"]);
    }

    #[test]
    fn empty_trajectory_is_header_only() {
        let s = write_trajectory(&[], 2, 1);
        assert_eq!(s.lines().count(), 1);
        assert!(read_trajectory(&s).unwrap().is_empty());
    }

    #[test]
    fn malformed_rows_name_the_line() {
        let mut s = write_trajectory(&[], 1, 1);
        s.push_str("0.0,1.0,1.0,0.0,1.0,1.0,0.0,0.0\n0.5,1.0,1.0,0.0,1.0,oops,0.0,0.0\n");
        match read_trajectory(&s) {
            Err(QsyncError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn checkpoint_rejects_damage() {
        let (s, _) = experiments::build_initial("two_identical", 1, GridSpec::default_1d()).unwrap();
        let bytes = checkpoint(&s);
        assert_eq!(restore(&bytes).unwrap(), s);
        assert!(restore(&bytes[..bytes.len() - 1]).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(restore(&extra).is_err());
        let mut bad = bytes;
        bad[4] = b'2';
        assert!(matches!(restore(&bad), Err(QsyncError::Checkpoint(_))));
    }
}
