//! Declarative model documents.
//!
//! A model file is TOML: a format version, an options block, component
//! declarations (type tag, instance name, parameter map), connection lists
//! (arrays of `instance.port` paths), and an optional sweep block. The
//! component type tags and their port names come from the built-in catalog;
//! [`load_model`] validates everything that can be checked without building
//! the system, so schema errors carry file/path context instead of
//! surfacing later as solver failures.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDocument {
    pub version: u32,
    #[serde(default, skip_serializing_if = "Options::is_default")]
    pub options: Options,
    #[serde(default, rename = "components")]
    pub components: Vec<ComponentDecl>,
    #[serde(default, rename = "connections")]
    pub connections: Vec<ConnectionDecl>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepDecl>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Options {
    /// Residual tolerance ‖F‖∞ for the solver.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iterations: Option<usize>,
    /// Use the literal `q²` loss form instead of the sign-aware `q·|q|`.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub literal_q2: bool,
    /// Property backend for thermodynamic components: `toy-water` (default)
    /// or `ideal-gas`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub backend: Option<String>,
    /// Specific gas constant for the `ideal-gas` backend, J/(kg·K).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gas_constant: Option<f64>,
    /// Isobaric heat capacity for the `ideal-gas` backend, J/(kg·K).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cp: Option<f64>,
    /// Liquid density for hydraulic components, kg/m³.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
}

impl Options {
    fn is_default(&self) -> bool {
        *self == Options::default()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComponentDecl {
    #[serde(rename = "type")]
    pub kind: String,
    pub name: String,
    #[serde(default, skip_serializing_if = "toml::Table::is_empty")]
    pub params: toml::Table,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConnectionDecl {
    pub nodes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepDecl {
    /// Explicit time grid; alternative to `start`/`stop`/`step`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub times: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stop: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step: Option<f64>,
    /// Ramp overrides: convert the named boundary-state variable to a ramp.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub ramps: Vec<RampDecl>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RampDecl {
    /// Variable path `instance.node.var` of a `state` component's pinned property.
    pub path: String,
    pub u0: f64,
    pub rate: f64,
}

#[derive(Debug)]
pub enum DocumentError {
    Io(String, std::io::Error),
    Parse(String, toml::de::Error),
    Version(u32),
    EmptyModel,
    UnknownComponentType {
        name: String,
        kind: String,
    },
    DuplicateComponent(String),
    DanglingPath {
        connection: usize,
        path: String,
    },
    BadPath {
        connection: usize,
        path: String,
    },
    TooFewNodes {
        connection: usize,
    },
    UnknownParam {
        component: String,
        key: String,
    },
    BadParamValue {
        component: String,
        key: String,
        expected: &'static str,
    },
    SweepGrid(String),
    BadRampPath(String),
}

impl fmt::Display for DocumentError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DocumentError::Io(path, e) => write!(f, "cannot read `{path}`: {e}"),
            DocumentError::Parse(path, e) => write!(f, "cannot parse `{path}`: {e}"),
            DocumentError::Version(v) => write!(f, "unsupported format version {v} (expected 1)"),
            DocumentError::EmptyModel => write!(f, "model declares no components"),
            DocumentError::UnknownComponentType { name, kind } => {
                write!(f, "component `{name}` has unknown type `{kind}`")
            }
            DocumentError::DuplicateComponent(name) => {
                write!(f, "component name `{name}` is declared twice")
            }
            DocumentError::DanglingPath { connection, path } => write!(
                f,
                "connection #{connection} references `{path}`, which no declared component provides"
            ),
            DocumentError::BadPath { connection, path } => write!(
                f,
                "connection #{connection} path `{path}` is not of the form `instance.port`"
            ),
            DocumentError::TooFewNodes { connection } => {
                write!(f, "connection #{connection} needs at least two nodes")
            }
            DocumentError::UnknownParam { component, key } => {
                write!(f, "component `{component}` has no parameter `{key}`")
            }
            DocumentError::BadParamValue {
                component,
                key,
                expected,
            } => {
                write!(f, "parameter `{key}` of `{component}` must be {expected}")
            }
            DocumentError::SweepGrid(msg) => write!(f, "sweep grid: {msg}"),
            DocumentError::BadRampPath(path) => write!(
                f,
                "sweep ramp path `{path}` does not name the pinned property of a `state` component"
            ),
        }
    }
}

impl std::error::Error for DocumentError {}

/// Catalog entry: allowed parameter keys (with kind) and port names.
pub struct CatalogEntry {
    pub kind: &'static str,
    pub ports: &'static [&'static str],
    pub numeric_params: &'static [&'static str],
    pub string_params: &'static [&'static str],
}

pub const CATALOG: &[CatalogEntry] = &[
    CatalogEntry {
        kind: "pipe",
        ports: &["in", "out"],
        numeric_params: &["L", "D", "f", "K_inside", "zin", "zout"],
        string_params: &[],
    },
    CatalogEntry {
        kind: "pump",
        ports: &["in", "out"],
        numeric_params: &["D", "omega", "c_0", "c_1"],
        string_params: &[],
    },
    CatalogEntry {
        kind: "sink",
        ports: &["port"],
        numeric_params: &["p"],
        string_params: &[],
    },
    CatalogEntry {
        kind: "process",
        ports: &["in", "out"],
        numeric_params: &[],
        string_params: &["kind", "inter_state"],
    },
    CatalogEntry {
        kind: "state",
        ports: &["node"],
        numeric_params: &["value", "u0", "rate"],
        string_params: &["property"],
    },
    CatalogEntry {
        kind: "source",
        ports: &["node"],
        numeric_params: &["P", "T", "D", "H", "S"],
        string_params: &[],
    },
    CatalogEntry {
        kind: "resistor",
        ports: &["p", "n"],
        numeric_params: &["r"],
        string_params: &[],
    },
    CatalogEntry {
        kind: "vsource",
        ports: &["p", "n"],
        numeric_params: &["v"],
        string_params: &[],
    },
    CatalogEntry {
        kind: "ground",
        ports: &["pin"],
        numeric_params: &[],
        string_params: &[],
    },
];

pub fn catalog_entry(kind: &str) -> Option<&'static CatalogEntry> {
    CATALOG.iter().find(|e| e.kind == kind)
}

/// Numeric parameter lookup accepting both TOML floats and integers.
pub fn numeric_param(decl: &ComponentDecl, key: &str) -> Result<Option<f64>, DocumentError> {
    match decl.params.get(key) {
        None => Ok(None),
        Some(toml::Value::Float(v)) => Ok(Some(*v)),
        Some(toml::Value::Integer(v)) => Ok(Some(*v as f64)),
        Some(_) => Err(DocumentError::BadParamValue {
            component: decl.name.clone(),
            key: key.to_string(),
            expected: "a number",
        }),
    }
}

pub fn string_param(decl: &ComponentDecl, key: &str) -> Result<Option<String>, DocumentError> {
    match decl.params.get(key) {
        None => Ok(None),
        Some(toml::Value::String(v)) => Ok(Some(v.clone())),
        Some(_) => Err(DocumentError::BadParamValue {
            component: decl.name.clone(),
            key: key.to_string(),
            expected: "a string",
        }),
    }
}

/// Parse and validate a model document from a TOML string.
pub fn parse_model(text: &str, origin: &str) -> Result<ModelDocument, DocumentError> {
    let doc: ModelDocument =
        toml::from_str(text).map_err(|e| DocumentError::Parse(origin.to_string(), e))?;
    validate(&doc)?;
    Ok(doc)
}

/// Load and validate a model document from disk.
pub fn load_model(path: &Path) -> Result<ModelDocument, DocumentError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| DocumentError::Io(path.display().to_string(), e))?;
    parse_model(&text, &path.display().to_string())
}

/// Serialize a document back to TOML. `parse_model(render(doc))` yields an
/// equivalent document.
pub fn render(doc: &ModelDocument) -> String {
    toml::to_string_pretty(doc).expect("document serialization cannot fail")
}

fn validate(doc: &ModelDocument) -> Result<(), DocumentError> {
    if doc.version != 1 {
        return Err(DocumentError::Version(doc.version));
    }
    if doc.components.is_empty() {
        return Err(DocumentError::EmptyModel);
    }

    let mut ports_by_name: HashMap<&str, &'static [&'static str]> = HashMap::new();
    let mut seen = HashSet::new();
    for decl in &doc.components {
        let entry =
            catalog_entry(&decl.kind).ok_or_else(|| DocumentError::UnknownComponentType {
                name: decl.name.clone(),
                kind: decl.kind.clone(),
            })?;
        if !seen.insert(decl.name.clone()) {
            return Err(DocumentError::DuplicateComponent(decl.name.clone()));
        }
        for key in decl.params.keys() {
            if !entry.numeric_params.contains(&key.as_str())
                && !entry.string_params.contains(&key.as_str())
            {
                return Err(DocumentError::UnknownParam {
                    component: decl.name.clone(),
                    key: key.clone(),
                });
            }
            if entry.numeric_params.contains(&key.as_str()) {
                numeric_param(decl, key)?;
            } else {
                string_param(decl, key)?;
            }
        }
        ports_by_name.insert(&decl.name, entry.ports);
    }

    for (i, conn) in doc.connections.iter().enumerate() {
        if conn.nodes.len() < 2 {
            return Err(DocumentError::TooFewNodes { connection: i });
        }
        for path in &conn.nodes {
            let Some((instance, port)) = path.rsplit_once('.') else {
                return Err(DocumentError::BadPath {
                    connection: i,
                    path: path.clone(),
                });
            };
            match ports_by_name.get(instance) {
                Some(ports) if ports.contains(&port) => {}
                _ => {
                    return Err(DocumentError::DanglingPath {
                        connection: i,
                        path: path.clone(),
                    })
                }
            }
        }
    }

    if let Some(sweep) = &doc.sweep {
        let has_grid = sweep.times.as_ref().is_some_and(|t| !t.is_empty());
        let has_range = sweep.start.is_some() && sweep.stop.is_some() && sweep.step.is_some();
        if !has_grid && !has_range {
            return Err(DocumentError::SweepGrid(
                "provide either `times` or all of `start`/`stop`/`step`".to_string(),
            ));
        }
        for ramp in &sweep.ramps {
            let parts: Vec<&str> = ramp.path.split('.').collect();
            if parts.len() != 3 {
                return Err(DocumentError::BadRampPath(ramp.path.clone()));
            }
            let decl = doc
                .components
                .iter()
                .find(|c| c.name == parts[0] && c.kind == "state")
                .ok_or_else(|| DocumentError::BadRampPath(ramp.path.clone()))?;
            if parts[1] != "node" {
                return Err(DocumentError::BadRampPath(ramp.path.clone()));
            }
            let property = string_param(decl, "property")?.unwrap_or_default();
            let var = match property.as_str() {
                "P" => "p",
                "T" => "T",
                "D" => "rho",
                "H" => "h",
                "S" => "s",
                _ => "",
            };
            if parts[2] != var {
                return Err(DocumentError::BadRampPath(ramp.path.clone()));
            }
        }
    }
    Ok(())
}
