//! Run configuration documents and their resolution into library types.

use std::path::{Path, PathBuf};

use qfilter_core::fidelity::{FidelityOptions, HigherOrderGrid, Method};
use qfilter_core::filter::Precision;
use qfilter_core::montecarlo::EnsembleConfig;
use qfilter_core::noise::{Axis, AxisSpectrum, NoiseSpectrum, SpectrumShape, DEFAULT_CONFIDENCE};
use qfilter_core::schema::SequenceSpec;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CommandKind {
    Filter,
    Fidelity,
    Simulate,
    Compare,
}

/// A configuration document as written on disk.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Command run by `figure`.
    pub command: Option<CommandKind>,
    pub sequence: Option<toml::Table>,
    #[serde(default)]
    pub noise: Vec<toml::Table>,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub fidelity: FidelityConfig,
    #[serde(default)]
    pub ensemble: EnsembleConfig,
    #[serde(default)]
    pub sweep: SweepConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    /// Dimensionless frequency range `ω·t_unit`.
    pub lo: f64,
    pub hi: f64,
    pub per_decade: usize,
    pub fit_window: [f64; 2],
    pub fit_axis: Axis,
    pub precision: Precision,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            lo: 1e-4,
            hi: 1e2,
            per_decade: 200,
            fit_window: [1e-3, 1e-2],
            fit_axis: Axis::Z,
            precision: Precision::Double,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FidelityConfig {
    pub method: Method,
    pub higher_order: bool,
    pub nodes: usize,
    pub check_nodes: Option<usize>,
    pub confidence: f64,
}

impl Default for FidelityConfig {
    fn default() -> Self {
        let grid = HigherOrderGrid::default();
        FidelityConfig {
            method: Method::Frequency,
            higher_order: false,
            nodes: grid.nodes,
            check_nodes: grid.check_nodes,
            confidence: DEFAULT_CONFIDENCE,
        }
    }
}

impl FidelityConfig {
    pub fn options(&self) -> FidelityOptions {
        FidelityOptions {
            method: self.method,
            higher_order: self.higher_order.then_some(HigherOrderGrid {
                nodes: self.nodes,
                check_nodes: self.check_nodes,
            }),
            confidence: self.confidence,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogSweep {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

/// Values of the sequence's duration parameter for `compare`.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub values: Vec<f64>,
    pub log: Option<LogSweep>,
}

impl SweepConfig {
    pub fn points(&self) -> Result<Vec<f64>, CliError> {
        let mut out = self.values.clone();
        if let Some(l) = self.log {
            if !(l.lo > 0.0 && l.hi >= l.lo) {
                return Err(CliError::Config("sweep.log: need 0 < lo ≤ hi".into()));
            }
            match l.points {
                0 => {}
                1 => out.push(l.lo),
                n => out.extend((0..n).map(|k| l.lo * (l.hi / l.lo).powf(k as f64 / (n - 1) as f64))),
            }
        }
        if let Some(bad) = out.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
            return Err(CliError::Config(format!("sweep: duration {bad} must be positive")));
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: Option<PathBuf>,
    pub stem: Option<String>,
}

/// How a noise entry's amplitude relates to the library's `H = β·σ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseConvention {
    #[default]
    Library,
    /// Amplitudes given for `H = β σ/2`; the spectrum is divided by 4.
    Half,
}

/// Provenance of one configured axis, kept for output metadata.
#[derive(Debug, Clone, Serialize)]
pub struct NoiseRecord {
    pub axis: Axis,
    pub convention: NoiseConvention,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub file: Option<PathBuf>,
    /// Parameters after the convention mapping.
    pub spectrum: SpectrumShape,
}

/// A configuration with every source loaded and validated.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub command: Option<CommandKind>,
    pub sequence: Option<SequenceSpec>,
    pub noise: NoiseSpectrum,
    pub noise_records: Vec<NoiseRecord>,
    pub grid: GridConfig,
    pub fidelity: FidelityConfig,
    pub ensemble: EnsembleConfig,
    pub sweep: SweepConfig,
    pub output: OutputConfig,
}

impl Resolved {
    pub fn sequence(&self) -> Result<&SequenceSpec, CliError> {
        self.sequence
            .as_ref()
            .ok_or_else(|| CliError::Config("configuration has no [sequence] section".into()))
    }
}

pub fn parse(text: &str, origin: &str) -> Result<RunConfig, CliError> {
    toml::from_str(text).map_err(|e| CliError::Config(format!("{origin}: {e}")))
}

pub fn resolve(raw: RunConfig, base: &Path) -> Result<Resolved, CliError> {
    let sequence = raw.sequence.map(|t| sequence_from_table(t, base)).transpose()?;
    let mut noise = NoiseSpectrum::none();
    let mut records = Vec::new();
    for (k, entry) in raw.noise.into_iter().enumerate() {
        let (axis, spectrum, record) = noise_entry(entry, base).map_err(|e| e.context(&format!("noise[{k}]")))?;
        if noise.axis(axis.index()).is_some() {
            return Err(CliError::Config(format!("noise[{k}]: axis {axis:?} configured twice")));
        }
        noise = noise.with(axis, spectrum);
        records.push(record);
    }
    Ok(Resolved {
        command: raw.command,
        sequence,
        noise,
        noise_records: records,
        grid: raw.grid,
        fidelity: raw.fidelity,
        ensemble: raw.ensemble,
        sweep: raw.sweep,
        output: raw.output,
    })
}

fn sequence_from_table(mut table: toml::Table, base: &Path) -> Result<SequenceSpec, CliError> {
    let Some(file) = table.remove("file") else {
        return toml::Value::Table(table)
            .try_into()
            .map_err(|e| CliError::Config(format!("sequence: {e}")));
    };
    if !table.is_empty() {
        return Err(CliError::Config(
            "sequence: give either `file` or an inline description, not both".into(),
        ));
    }
    let path = base.join(
        file.as_str()
            .ok_or_else(|| CliError::Config("sequence.file: expected a path".into()))?,
    );
    let text = read(&path)?;
    let origin = path.display().to_string();
    let value: serde_json::Value = if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{origin}: {e}")))?
    } else {
        let t: toml::Table = toml::from_str(&text).map_err(|e| CliError::Config(format!("{origin}: {e}")))?;
        serde_json::to_value(t).map_err(|e| CliError::Config(format!("{origin}: {e}")))?
    };
    // output metadata nests the description under `sequence`
    let inner = match value {
        serde_json::Value::Object(mut m) if m.contains_key("sequence") => m.remove("sequence").unwrap(),
        v => v,
    };
    serde_json::from_value(inner).map_err(|e| CliError::Config(format!("{origin}: {e}")))
}

fn noise_entry(mut table: toml::Table, base: &Path) -> Result<(Axis, AxisSpectrum, NoiseRecord), CliError> {
    let axis: Axis = table
        .remove("axis")
        .ok_or_else(|| CliError::Config("missing field `axis`".into()))?
        .try_into()
        .map_err(|e| CliError::Config(format!("axis: {e}")))?;
    let convention: NoiseConvention = match table.remove("convention") {
        Some(v) => v.try_into().map_err(|e| CliError::Config(format!("convention: {e}")))?,
        None => NoiseConvention::Library,
    };
    let file = match table.remove("file") {
        Some(v) => Some(
            base.join(
                v.as_str()
                    .ok_or_else(|| CliError::Config("file: expected a path".into()))?,
            ),
        ),
        None => None,
    };
    let shape: SpectrumShape = match &file {
        Some(path) => {
            if table.keys().any(|k| k != "type") || table.get("type").is_some_and(|t| t.as_str() != Some("tabulated")) {
                return Err(CliError::Config(
                    "a spectrum file cannot be combined with inline parameters".into(),
                ));
            }
            let spec = AxisSpectrum::parse_table(&read(path)?)
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            spec.shape().clone()
        }
        None => toml::Value::Table(table)
            .try_into()
            .map_err(|e| CliError::Config(e.to_string()))?,
    };
    let shape = match convention {
        NoiseConvention::Library => shape,
        NoiseConvention::Half => quarter(shape),
    };
    let spectrum = AxisSpectrum::new(shape.clone()).map_err(CliError::from_core)?;
    Ok((
        axis,
        spectrum,
        NoiseRecord {
            axis,
            convention,
            file,
            spectrum: shape,
        },
    ))
}

/// Divides the spectral density by four.
fn quarter(shape: SpectrumShape) -> SpectrumShape {
    match shape {
        SpectrumShape::Gaussian { amplitude, bandwidth } => SpectrumShape::Gaussian {
            amplitude: amplitude / 2.0,
            bandwidth,
        },
        SpectrumShape::PowerLaw {
            amplitude,
            exponent,
            low,
            cutoff,
        } => SpectrumShape::PowerLaw {
            amplitude: amplitude / 4.0,
            exponent,
            low,
            cutoff,
        },
        SpectrumShape::Tabulated { omega, psd } => SpectrumShape::Tabulated {
            omega,
            psd: psd.into_iter().map(|s| s / 4.0).collect(),
        },
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}
