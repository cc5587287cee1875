//! Versioned JSON documents holding a network, scenarios and assessments.
//!
//! Table rows are keyed by the comma-joined parent states in declared parent
//! order (the empty string for a root) and map child state names to weights.
//! Noisy-OR nodes carry `kind: "noisy-or"`, a `base` value and one
//! `inhibitor` per parent. Canonical output sorts object keys and renders
//! every float with 17 significant digits.

use std::collections::BTreeMap;
use std::fmt;
use std::io;

use serde::{Deserialize, Serialize};
use serde_json::ser::{Formatter, PrettyFormatter};

use crate::error::Error;
use crate::fitting::Assessment;
use crate::model::{
    validate_network, Network, NodeDef, NoisyOrParams, ParamIndex, Parameterization, TableParams, Variable,
};
use crate::sensitivity::Scenario;

pub const FORMAT_VERSION: u64 = 1;

const DYSPNEA: &str = include_str!("../data/dyspnea.json");

#[derive(Clone, Debug, PartialEq)]
pub struct Document {
    pub network: Network,
    pub scenarios: Vec<Scenario>,
    pub assessments: Vec<Assessment>,
}

/// One problem found while reading a document.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Issue {
    /// Location inside the document, e.g. `network.variables[B].table[t_A]`.
    pub path: String,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub line: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub column: Option<usize>,
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.line, self.column) {
            (Some(l), Some(c)) => write!(f, "line {l}, column {c}: {}", self.message),
            _ if self.path.is_empty() => f.write_str(&self.message),
            _ => write!(f, "{}: {}", self.path, self.message),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FormatError {
    pub issues: Vec<Issue>,
}

impl fmt::Display for FormatError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.issues.iter().map(Issue::to_string).collect();
        f.write_str(&parts.join("; "))
    }
}

impl std::error::Error for FormatError {}

impl From<FormatError> for Error {
    fn from(e: FormatError) -> Self {
        Error::Format(e.to_string())
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDocument {
    format_version: u64,
    network: RawNetwork,
    #[serde(default)]
    scenarios: Vec<Scenario>,
    #[serde(default)]
    assessments: Vec<Assessment>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNetwork {
    variables: Vec<RawVariable>,
}

#[derive(Serialize, Deserialize)]
struct RawVariable {
    name: String,
    states: Vec<String>,
    #[serde(default)]
    parents: Vec<String>,
    #[serde(flatten)]
    model: RawModel,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind")]
enum RawModel {
    #[serde(rename = "table")]
    Table {
        table: BTreeMap<String, BTreeMap<String, f64>>,
    },
    #[serde(rename = "noisy-or")]
    NoisyOr {
        base: f64,
        inhibitor: BTreeMap<String, f64>,
    },
}

fn issue(path: String, message: impl Into<String>) -> Issue {
    Issue {
        path,
        message: message.into(),
        line: None,
        column: None,
    }
}

/// Turns keyed rows into positional node definitions. Variables whose
/// parent references cannot be resolved are passed through with empty rows
/// so `validate_network` reports them.
fn to_defs(raw: &RawNetwork, issues: &mut Vec<Issue>) -> Vec<NodeDef> {
    let by_name: BTreeMap<&str, &RawVariable> = raw.variables.iter().map(|v| (v.name.as_str(), v)).collect();
    raw.variables
        .iter()
        .map(|v| {
            let path = format!("network.variables[{}]", v.name);
            let variable = Variable {
                name: v.name.clone(),
                states: v.states.clone(),
            };
            let params = match &v.model {
                RawModel::Table { table } => {
                    let parent_states: Option<Vec<&Vec<String>>> = v
                        .parents
                        .iter()
                        .map(|p| by_name.get(p.as_str()).map(|pv| &pv.states))
                        .collect();
                    let rows = match parent_states {
                        None => Vec::new(),
                        Some(ps) => {
                            let keys = config_keys(&ps);
                            for k in table.keys() {
                                if !keys.contains(k) {
                                    issues.push(issue(
                                        format!("{path}.table[{k}]"),
                                        "row key does not name a parent configuration",
                                    ));
                                }
                            }
                            keys.iter()
                                .map(|k| match table.get(k) {
                                    None => {
                                        issues.push(issue(format!("{path}.table[{k}]"), "missing row"));
                                        vec![0.0; v.states.len()]
                                    }
                                    Some(row) => {
                                        for s in row.keys() {
                                            if !v.states.contains(s) {
                                                issues.push(issue(
                                                    format!("{path}.table[{k}]"),
                                                    format!("unknown state `{s}`"),
                                                ));
                                            }
                                        }
                                        v.states
                                            .iter()
                                            .map(|s| match row.get(s) {
                                                Some(&w) => w,
                                                None => {
                                                    issues.push(issue(
                                                        format!("{path}.table[{k}]"),
                                                        format!("missing weight for state `{s}`"),
                                                    ));
                                                    0.0
                                                }
                                            })
                                            .collect()
                                    }
                                })
                                .collect()
                        }
                    };
                    Parameterization::Table(TableParams { rows })
                }
                RawModel::NoisyOr { base, inhibitor } => {
                    for k in inhibitor.keys() {
                        if !v.parents.contains(k) {
                            issues.push(issue(
                                format!("{path}.inhibitor[{k}]"),
                                "inhibitor for a variable that is not a parent",
                            ));
                        }
                    }
                    let inhibitors = v
                        .parents
                        .iter()
                        .map(|p| match inhibitor.get(p) {
                            Some(&q) => q,
                            None => {
                                issues.push(issue(format!("{path}.inhibitor[{p}]"), "missing inhibitor"));
                                1.0
                            }
                        })
                        .collect();
                    Parameterization::NoisyOr(NoisyOrParams {
                        base: *base,
                        inhibitors,
                    })
                }
            };
            NodeDef {
                variable,
                parents: v.parents.clone(),
                params,
            }
        })
        .collect()
}

/// Row keys for every parent configuration, in configuration-index order.
fn config_keys(parent_states: &[&Vec<String>]) -> Vec<String> {
    let mut keys = vec![String::new()];
    for (j, states) in parent_states.iter().enumerate() {
        keys = keys
            .iter()
            .flat_map(|prefix| {
                states.iter().map(move |s| {
                    if j == 0 {
                        s.clone()
                    } else {
                        format!("{prefix},{s}")
                    }
                })
            })
            .collect();
    }
    keys
}

fn from_network(net: &Network) -> RawNetwork {
    let variables = net
        .to_defs()
        .into_iter()
        .enumerate()
        .map(|(i, def)| {
            let model = match &def.params {
                Parameterization::Table(t) => {
                    let parent_states: Vec<&Vec<String>> =
                        net.parents(i).iter().map(|&p| &net.variable(p).states).collect();
                    let table = config_keys(&parent_states)
                        .into_iter()
                        .zip(&t.rows)
                        .map(|(k, row)| (k, def.variable.states.iter().cloned().zip(row.iter().copied()).collect()))
                        .collect();
                    RawModel::Table { table }
                }
                Parameterization::NoisyOr(no) => RawModel::NoisyOr {
                    base: no.base,
                    inhibitor: def.parents.iter().cloned().zip(no.inhibitors.iter().copied()).collect(),
                },
            };
            RawVariable {
                name: def.variable.name,
                states: def.variable.states,
                parents: def.parents,
                model,
            }
        })
        .collect();
    RawNetwork { variables }
}

impl Serialize for Network {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        from_network(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for Network {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let raw = RawNetwork::deserialize(d)?;
        let mut issues = Vec::new();
        let defs = to_defs(&raw, &mut issues);
        if !issues.is_empty() {
            return Err(serde::de::Error::custom(FormatError { issues }));
        }
        Network::new(defs).map_err(serde::de::Error::custom)
    }
}

/// Parses and fully validates a document. Never panics on malformed input.
pub fn parse_document(text: &str) -> Result<Document, FormatError> {
    let raw: RawDocument = serde_json::from_str(text).map_err(|e| FormatError {
        issues: vec![Issue {
            path: String::new(),
            message: e.to_string(),
            line: Some(e.line()),
            column: Some(e.column()),
        }],
    })?;
    let mut issues = Vec::new();
    if raw.format_version != FORMAT_VERSION {
        issues.push(issue(
            "format_version".into(),
            format!("unsupported version {} (expected {FORMAT_VERSION})", raw.format_version),
        ));
    }
    let defs = to_defs(&raw.network, &mut issues);
    for v in validate_network(&defs) {
        issues.push(issue("network".into(), v.to_string()));
    }
    if !issues.is_empty() {
        return Err(FormatError { issues });
    }
    let network = Network::new(defs).expect("validated");
    for (i, sc) in raw.scenarios.iter().enumerate() {
        if let Err(e) = sc.resolve(&network) {
            issues.push(issue(format!("scenarios[{i}]"), e.to_string()));
        }
    }
    for (i, a) in raw.assessments.iter().enumerate() {
        if let Err(e) = a.validate(&network) {
            issues.push(issue(format!("assessments[{i}]"), e.to_string()));
        }
    }
    if !issues.is_empty() {
        return Err(FormatError { issues });
    }
    Ok(Document {
        network,
        scenarios: raw.scenarios,
        assessments: raw.assessments,
    })
}

/// Reads a parameter name in its JSON form.
pub fn parse_param(text: &str) -> Result<ParamIndex, Error> {
    serde_json::from_str(text).map_err(|e| Error::Format(format!("parameter: {e}")))
}

/// Canonical, deterministic rendering of a document.
pub fn serialize_document(doc: &Document) -> String {
    let raw = RawDocument {
        format_version: FORMAT_VERSION,
        network: from_network(&doc.network),
        scenarios: doc.scenarios.clone(),
        assessments: doc.assessments.clone(),
    };
    to_canonical_json(&raw)
}

/// Wraps a bare network in a document.
pub fn network_document(net: &Network) -> Document {
    Document {
        network: net.clone(),
        scenarios: Vec::new(),
        assessments: Vec::new(),
    }
}

/// The bundled dyspnea example.
pub fn dyspnea_document() -> Document {
    parse_document(DYSPNEA).expect("bundled fixture is valid")
}

pub fn dyspnea() -> Network {
    dyspnea_document().network
}

/// Renders any serializable value as pretty JSON with sorted object keys and
/// floats at 17 significant digits.
pub fn to_canonical_json<T: Serialize>(value: &T) -> String {
    // going through Value sorts every object's keys
    let value = serde_json::to_value(value).expect("serializable");
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, CanonicalFormatter::default());
    value.serialize(&mut ser).expect("in-memory write");
    out.push(b'\n');
    String::from_utf8(out).expect("utf-8")
}

/// 17 significant digits, trailing zeros trimmed, plain decimal notation for
/// exponents in `[-7, 16]`.
pub fn render_f64(x: f64) -> String {
    if x == 0.0 {
        return "0.0".into();
    }
    let sci = format!("{x:.16e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    let negative = mantissa.starts_with('-');
    let digits: String = mantissa.chars().filter(char::is_ascii_digit).collect();
    let sign = if negative { "-" } else { "" };
    if !(-7..=16).contains(&exp) {
        let (head, tail) = digits.split_at(1);
        let tail = tail.trim_end_matches('0');
        let tail = if tail.is_empty() { "0" } else { tail };
        return format!("{sign}{head}.{tail}e{exp}");
    }
    let (int_part, frac_part) = if exp >= 0 {
        let split = exp as usize + 1;
        (digits[..split].to_string(), digits[split..].to_string())
    } else {
        ("0".to_string(), format!("{}{}", "0".repeat((-exp - 1) as usize), digits))
    };
    let frac = frac_part.trim_end_matches('0');
    let frac = if frac.is_empty() { "0" } else { frac };
    format!("{sign}{int_part}.{frac}")
}

#[derive(Default)]
struct CanonicalFormatter {
    inner: PrettyFormatter<'static>,
}

impl Formatter for CanonicalFormatter {
    fn write_f64<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        writer.write_all(render_f64(value).as_bytes())
    }

    fn write_f32<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, value as f64)
    }

    fn begin_array<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.inner.begin_array(writer)
    }

    fn end_array<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.inner.end_array(writer)
    }

    fn begin_array_value<W: ?Sized + io::Write>(&mut self, writer: &mut W, first: bool) -> io::Result<()> {
        self.inner.begin_array_value(writer, first)
    }

    fn end_array_value<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.inner.end_array_value(writer)
    }

    fn begin_object<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.inner.begin_object(writer)
    }

    fn end_object<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.inner.end_object(writer)
    }

    fn begin_object_key<W: ?Sized + io::Write>(&mut self, writer: &mut W, first: bool) -> io::Result<()> {
        self.inner.begin_object_key(writer, first)
    }

    fn begin_object_value<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.inner.begin_object_value(writer)
    }

    fn end_object_value<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.inner.end_object_value(writer)
    }
}
