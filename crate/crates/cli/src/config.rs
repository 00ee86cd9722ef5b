//! TOML experiment configurations.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use nessedp_core::membrane::{Coefficient, MembraneProfile, PiecewiseCoefficient, Structure};
use nessedp_core::quadratic::{reference_config, QuadSlowFastConfig};
use nessedp_core::reactions::{FourSpeciesConfig, Reaction, ReactionNetwork};
use nessedp_core::{Matrix, Vector};

use crate::error::{CliError, Result};
use crate::plot::PlotSpec;

pub const DEFAULT_T_FINAL: f64 = 1.0;
pub const DEFAULT_TOL: f64 = 1e-8;
pub const DEFAULT_SEED: u64 = 42;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Simulate,
    Reduce,
    VerifyEdi,
    Converge,
    Membrane,
    Reaction,
    Sweep,
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Self::Simulate => "simulate",
            Self::Reduce => "reduce",
            Self::VerifyEdi => "verify-edi",
            Self::Converge => "converge",
            Self::Membrane => "membrane",
            Self::Reaction => "reaction",
            Self::Sweep => "sweep",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig<S> {
    name: Option<String>,
    kind: Option<ExperimentKind>,
    /// Kept untyped here: the tagged system enum is resolved in a second stage.
    system: S,
    eps: Option<Vec<f64>>,
    t_final: Option<f64>,
    #[serde(default)]
    grid: GridSizes,
    tol: Option<f64>,
    seed: Option<u64>,
    samples: Option<usize>,
    u0: Option<Vec<f64>>,
    times: Option<Vec<f64>>,
    levels: Option<Vec<f64>>,
    #[serde(default)]
    output: RawOutput,
    #[serde(default)]
    tables: BTreeMap<String, RawTable>,
    sweep: Option<SweepSpec>,
    #[serde(default)]
    plot: Vec<PlotSpec>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    dir: Option<PathBuf>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTable {
    points: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSizes {
    /// Cells per subinterval of the three-piece membrane grid.
    pub n: Option<usize>,
    /// Nodes per region for nodal membrane systems.
    pub n_fast: Option<usize>,
    /// Uniform time steps on `[0, T]`.
    pub steps: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    /// Dotted key into the configuration, e.g. `system.kappa2`.
    pub parameter: String,
    pub values: Vec<f64>,
    pub kind: ExperimentKind,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
enum RawSystem {
    Quadratic {
        a_s: Option<Vec<Vec<f64>>>,
        a_f: Option<Vec<Vec<f64>>>,
        mu_s: Option<Vec<f64>>,
        mu_f: Option<Vec<f64>>,
        k: Option<Vec<Vec<f64>>>,
    },
    Reactions {
        kappa1: f64,
        kappa2: f64,
        /// `(a*, b*, c*, w*)`.
        equilibria: [f64; 4],
    },
    Network {
        species: Vec<String>,
        equilibrium: Vec<f64>,
        reactions: Vec<RawReaction>,
    },
    Membrane {
        structure: StructureName,
        a: RawField,
        b: RawField,
        k: RawField,
    },
}

/// `alpha <-> beta` as stoichiometry rows over the declared species.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawReaction {
    alpha: Vec<u32>,
    beta: Vec<u32>,
    rate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StructureName {
    Quadratic,
    Otto,
    Sorption,
}

impl From<StructureName> for Structure {
    fn from(s: StructureName) -> Self {
        match s {
            StructureName::Quadratic => Structure::Quadratic,
            StructureName::Otto => Structure::Otto,
            StructureName::Sorption => Structure::Sorption,
        }
    }
}

/// One coefficient: a number, a `table:<name>` reference, or inline points.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum RawCoefficient {
    Number(f64),
    Reference(String),
    Inline { points: Vec<[f64; 2]> },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum RawField {
    Regions {
        left: RawCoefficient,
        membrane: RawCoefficient,
        right: RawCoefficient,
    },
    Uniform(RawCoefficient),
}

/// A validated system definition.
#[derive(Debug, Clone)]
pub enum SystemSpec {
    Quadratic(QuadSlowFastConfig),
    Reactions(FourSpeciesConfig),
    Network {
        species: Vec<String>,
        network: ReactionNetwork,
    },
    Membrane {
        structure: StructureName,
        profile: MembraneProfile,
        /// Constant membrane values `(a, b, k)` when all three are constant there.
        constants: Option<(f64, f64, f64)>,
    },
}

impl SystemSpec {
    pub fn label(&self) -> &'static str {
        match self {
            Self::Quadratic(_) => "quadratic",
            Self::Reactions(_) => "reactions",
            Self::Network { .. } => "network",
            Self::Membrane { .. } => "membrane",
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub name: String,
    pub kind: Option<ExperimentKind>,
    pub system: SystemSpec,
    pub eps: Vec<f64>,
    pub t_final: f64,
    pub grid: GridSizes,
    pub tol: f64,
    pub seed: u64,
    pub samples: usize,
    pub u0: Option<Vector>,
    /// Snapshot times; `[t_final]` when absent.
    pub times: Vec<f64>,
    /// Per-axis sample levels for grid comparisons.
    pub levels: Option<Vec<f64>>,
    pub out_dir: PathBuf,
    pub sweep: Option<SweepSpec>,
    pub plots: Vec<PlotSpec>,
    /// Parsed document, kept for sweeps and hashing.
    pub document: toml::Table,
}

impl ExperimentConfig {
    /// SHA-256 of the canonical TOML form of the effective document.
    /// The output location is not part of the experiment and is left out.
    pub fn hash(&self) -> String {
        let mut doc = self.document.clone();
        doc.remove("output");
        let text = toml::to_string(&doc).unwrap_or_default();
        Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Command-line overrides applied on top of the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub eps: Option<Vec<f64>>,
    pub seed: Option<u64>,
    pub tol: Option<f64>,
    pub out: Option<PathBuf>,
}

impl Overrides {
    fn apply(&self, doc: &mut toml::Table) {
        if let Some(eps) = &self.eps {
            doc.insert("eps".into(), toml::Value::Array(eps.iter().map(|&e| toml::Value::Float(e)).collect()));
        }
        if let Some(seed) = self.seed {
            doc.insert("seed".into(), toml::Value::Integer(seed as i64));
        }
        if let Some(tol) = self.tol {
            doc.insert("tol".into(), toml::Value::Float(tol));
        }
        if let Some(out) = &self.out {
            let mut t = toml::Table::new();
            t.insert("dir".into(), toml::Value::String(out.display().to_string()));
            doc.insert("output".into(), toml::Value::Table(t));
        }
    }
}

pub fn parse_config(path: &Path) -> Result<ExperimentConfig> {
    parse_config_with(path, &Overrides::default())
}

pub fn parse_config_with(path: &Path, overrides: &Overrides) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let default_name = path.file_stem().map(|s| s.to_string_lossy().into_owned());
    parse_config_str(&text, default_name.as_deref(), overrides)
}

fn line_column(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, column)
}

fn parse_error(text: &str, e: &toml::de::Error) -> CliError {
    let (line, column) = e.span().map_or((1, 1), |s| line_column(text, s.start));
    CliError::Parse {
        line,
        column,
        message: e.message().to_string(),
    }
}

pub fn parse_config_str(text: &str, default_name: Option<&str>, overrides: &Overrides) -> Result<ExperimentConfig> {
    let mut doc: toml::Table = toml::from_str(text).map_err(|e| parse_error(text, &e))?;
    // Typed parse on the original text first so schema errors carry positions.
    let typed = toml::from_str::<RawConfig<toml::Spanned<toml::Table>>>(text).map_err(|e| parse_error(text, &e))?;
    let span = typed.system.span();
    if let Err(e) = RawSystem::deserialize(toml::Value::Table(typed.system.into_inner())) {
        let (line, column) = system_error_position(text, span, e.message());
        return Err(CliError::Parse {
            line,
            column,
            message: format!("in `system`: {}", e.message()),
        });
    }
    overrides.apply(&mut doc);
    from_document(doc, default_name)
}

/// Start of the offending key inside the system table when the message names one,
/// else the start of the table.
fn system_error_position(text: &str, span: std::ops::Range<usize>, message: &str) -> (usize, usize) {
    let body = &text[span.clone()];
    let key = message.split('`').nth(1).filter(|_| message.contains("field"));
    let offset = key.and_then(|k| {
        let mut at = 0;
        for line in body.split_inclusive('\n') {
            let trimmed = line.trim_start();
            if trimmed.strip_prefix(k).is_some_and(|rest| rest.trim_start().starts_with('=')) {
                return Some(at + line.len() - trimmed.len());
            }
            at += line.len();
        }
        None
    });
    line_column(text, span.start + offset.unwrap_or(0))
}

/// Validate a parsed document (also used for each sweep entry).
pub fn from_document(doc: toml::Table, default_name: Option<&str>) -> Result<ExperimentConfig> {
    let raw: RawConfig<toml::Table> = RawConfig::deserialize(toml::Value::Table(doc.clone()))
        .map_err(|e| CliError::validation("config", e.message().to_string()))?;
    let system = RawSystem::deserialize(toml::Value::Table(raw.system.clone()))
        .map_err(|e| CliError::validation("system", e.message().to_string()))?;
    let eps = raw.eps.unwrap_or_default();
    if eps.iter().any(|&e| !(e > 0.0 && e <= 1.0)) {
        return Err(CliError::validation("eps", "values in (0, 1]"));
    }
    if eps.windows(2).any(|w| w[1] >= w[0]) {
        return Err(CliError::validation("eps", "strictly decreasing"));
    }
    let t_final = raw.t_final.unwrap_or(DEFAULT_T_FINAL);
    if !(t_final > 0.0 && t_final.is_finite()) {
        return Err(CliError::validation("t_final", "positive and finite"));
    }
    let tol = raw.tol.unwrap_or(DEFAULT_TOL);
    if !(tol > 0.0) {
        return Err(CliError::validation("tol", "positive"));
    }
    for (field, v) in [("grid.n", raw.grid.n), ("grid.n_fast", raw.grid.n_fast), ("grid.steps", raw.grid.steps)] {
        if v == Some(0) {
            return Err(CliError::validation(field, "positive"));
        }
    }
    if let Some(s) = &raw.sweep {
        if s.values.is_empty() {
            return Err(CliError::validation("sweep.values", "non-empty"));
        }
        if s.kind == ExperimentKind::Sweep {
            return Err(CliError::validation("sweep.kind", "not itself a sweep"));
        }
    }
    let times = raw.times.unwrap_or_else(|| vec![t_final]);
    if times.is_empty() || times.iter().any(|&t| !(0.0..=t_final).contains(&t)) || times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(CliError::validation("times", "non-empty, increasing, within [0, t_final]"));
    }
    if let Some(l) = &raw.levels {
        if l.is_empty() || l.iter().any(|&x| !(x > 0.0 && x.is_finite())) {
            return Err(CliError::validation("levels", "non-empty and positive"));
        }
    }
    let system = resolve_system(system, &raw.tables)?;
    Ok(ExperimentConfig {
        name: raw.name.or_else(|| default_name.map(str::to_string)).unwrap_or_else(|| "experiment".into()),
        kind: raw.kind,
        system,
        eps,
        t_final,
        grid: raw.grid,
        tol,
        seed: raw.seed.unwrap_or(DEFAULT_SEED),
        samples: raw.samples.unwrap_or(20),
        u0: raw.u0.map(Vector::from_vec),
        times,
        levels: raw.levels,
        out_dir: raw.output.dir.unwrap_or_else(|| PathBuf::from("out")),
        sweep: raw.sweep,
        plots: raw.plot,
        document: doc,
    })
}

fn matrix(field: &str, rows: &[Vec<f64>]) -> Result<Matrix> {
    let n = rows.len();
    let m = rows.first().map_or(0, Vec::len);
    if n == 0 || rows.iter().any(|r| r.len() != m) {
        return Err(CliError::validation(field, "non-empty rectangular matrix"));
    }
    Ok(Matrix::from_fn(n, m, |i, j| rows[i][j]))
}

fn resolve_system(raw: RawSystem, tables: &BTreeMap<String, RawTable>) -> Result<SystemSpec> {
    match raw {
        RawSystem::Quadratic { a_s, a_f, mu_s, mu_f, k } => {
            let base = reference_config();
            let a_s = a_s.map_or(Ok(base.a_s.clone()), |m| matrix("system.a_s", &m))?;
            let a_f = a_f.map_or(Ok(base.a_f.clone()), |m| matrix("system.a_f", &m))?;
            let mu_s = mu_s.map_or(base.mu_s.clone(), Vector::from_vec);
            let mu_f = mu_f.map_or(base.mu_f.clone(), Vector::from_vec);
            let k = k.map_or(Ok(base.mobility()), |m| matrix("system.k", &m))?;
            let cfg = QuadSlowFastConfig::symmetric(a_s, a_f, mu_s, mu_f, k)
                .map_err(|e| CliError::validation("system", e.to_string()))?;
            Ok(SystemSpec::Quadratic(cfg))
        }
        RawSystem::Reactions { kappa1, kappa2, equilibria: [a, b, c, w] } => {
            let cfg = FourSpeciesConfig::new(kappa1, kappa2, a, b, c, w)
                .map_err(|e| CliError::validation("system", e.to_string()))?;
            Ok(SystemSpec::Reactions(cfg))
        }
        RawSystem::Network {
            species,
            equilibrium,
            reactions,
        } => {
            if species.len() != equilibrium.len() {
                return Err(CliError::validation("system.equilibrium", "one value per species"));
            }
            if reactions.is_empty() {
                return Err(CliError::validation("system.reactions", "at least one reaction"));
            }
            let reactions = reactions
                .into_iter()
                .map(|r| Reaction {
                    alpha: r.alpha,
                    beta: r.beta,
                    mu: r.rate,
                })
                .collect();
            let network = ReactionNetwork::new(reactions, Vector::from_vec(equilibrium))
                .map_err(|e| CliError::validation("system.reactions", e.to_string()))?;
            Ok(SystemSpec::Network { species, network })
        }
        RawSystem::Membrane { structure, a, b, k } => {
            let constants = match (constant_membrane(&a), constant_membrane(&b), constant_membrane(&k)) {
                (Some(a), Some(b), Some(k)) => Some((a, b, k)),
                _ => None,
            };
            let a = field("system.a", a, tables)?;
            let b = field("system.b", b, tables)?;
            let k = field("system.k", k, tables)?;
            let profile = MembraneProfile::scalar(a, b, k).map_err(|e| CliError::validation("system", e.to_string()))?;
            Ok(SystemSpec::Membrane {
                structure,
                profile,
                constants,
            })
        }
    }
}

fn constant_membrane(f: &RawField) -> Option<f64> {
    match f {
        RawField::Uniform(RawCoefficient::Number(x)) => Some(*x),
        RawField::Regions {
            membrane: RawCoefficient::Number(x),
            ..
        } => Some(*x),
        _ => None,
    }
}

fn coefficient(name: &str, raw: RawCoefficient, tables: &BTreeMap<String, RawTable>) -> Result<Coefficient> {
    let points = match raw {
        RawCoefficient::Number(x) => return Ok(Coefficient::Constant(x)),
        RawCoefficient::Reference(r) => {
            let key = r
                .strip_prefix("table:")
                .ok_or_else(|| CliError::validation(name, format!("expected a number or `table:<name>`, got `{r}`")))?;
            tables
                .get(key)
                .ok_or_else(|| CliError::validation(name, format!("unknown table `{key}`")))?
                .points
                .clone()
        }
        RawCoefficient::Inline { points } => points,
    };
    if points.is_empty() || points.windows(2).any(|w| w[1][0] <= w[0][0]) {
        return Err(CliError::validation(name, "table abscissae non-empty and strictly increasing"));
    }
    Ok(Coefficient::Table(points.into_iter().map(|[x, y]| (x, y)).collect()))
}

fn field(name: &str, raw: RawField, tables: &BTreeMap<String, RawTable>) -> Result<PiecewiseCoefficient> {
    match raw {
        RawField::Uniform(c) => Ok(PiecewiseCoefficient::uniform(coefficient(name, c, tables)?)),
        RawField::Regions { left, membrane, right } => Ok(PiecewiseCoefficient {
            left: coefficient(&format!("{name}.left"), left, tables)?,
            membrane: coefficient(&format!("{name}.membrane"), membrane, tables)?,
            right: coefficient(&format!("{name}.right"), right, tables)?,
        }),
    }
}

/// Set a dotted key in a document, creating intermediate tables.
pub fn set_dotted(doc: &mut toml::Table, key: &str, value: toml::Value) -> Result<()> {
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().filter(|s| !s.is_empty()).ok_or_else(|| CliError::validation("sweep.parameter", "empty key"))?;
    let mut table = doc;
    for p in parts {
        let entry = table.entry(p.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| CliError::validation("sweep.parameter", format!("`{p}` is not a table")))?;
    }
    table.insert(last.to_string(), value);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_column_counts_from_one() {
        assert_eq!(line_column("ab\ncd", 0), (1, 1));
        assert_eq!(line_column("ab\ncd", 4), (2, 2));
    }

    #[test]
    fn dotted_keys_create_tables() {
        let mut doc = toml::Table::new();
        set_dotted(&mut doc, "system.kappa2", toml::Value::Float(3.0)).unwrap();
        assert_eq!(doc["system"]["kappa2"].as_float(), Some(3.0));
        assert!(set_dotted(&mut doc, "system.kappa2.x", toml::Value::Float(1.0)).is_err());
    }
}
