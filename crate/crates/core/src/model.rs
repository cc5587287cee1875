//! Discrete variables, network structure and local parameterizations.
//!
//! A [`Network`] is an immutable, validated DAG. Every node carries either an
//! unrestricted weight table, where `P(x | cfg) = w[x, cfg] / sum_x' w[x', cfg]`,
//! or a binary noisy-OR family with a base ("leak") inhibitor and one inhibitor
//! per parent. Parent configurations are mixed-radix indices over the declared
//! parent order, first parent most significant.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Variable {
    pub name: String,
    pub states: Vec<String>,
}

impl Variable {
    pub fn new(name: impl Into<String>, states: &[&str]) -> Self {
        Variable {
            name: name.into(),
            states: states.iter().map(|s| s.to_string()).collect(),
        }
    }

    pub fn card(&self) -> usize {
        self.states.len()
    }

    pub fn state_index(&self, state: &str) -> Option<usize> {
        self.states.iter().position(|s| s == state)
    }
}

/// Unrestricted local distribution. `rows[cfg][state]` is the nonnegative
/// weight of `state` under parent configuration `cfg`.
#[derive(Clone, Debug, PartialEq)]
pub struct TableParams {
    pub rows: Vec<Vec<f64>>,
}

/// Noisy-OR family over a binary child and binary parents. State 0 is `true`
/// and state 1 is `false` for the child and every parent.
#[derive(Clone, Debug, PartialEq)]
pub struct NoisyOrParams {
    pub base: f64,
    /// Aligned with the declared parent order.
    pub inhibitors: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Parameterization {
    Table(TableParams),
    NoisyOr(NoisyOrParams),
}

/// One node as supplied by a caller, before validation.
#[derive(Clone, Debug, PartialEq)]
pub struct NodeDef {
    pub variable: Variable,
    pub parents: Vec<String>,
    pub params: Parameterization,
}

/// Names the `k` in `θ_s[k]`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ParamKey {
    /// Table weight for `state` under the parent states `given` (declared parent order).
    Table { state: String, given: Vec<String> },
    Inhibitor { parent: String },
    Base,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ParamIndex {
    pub node: String,
    #[serde(flatten)]
    pub key: ParamKey,
}

impl ParamIndex {
    pub fn table(node: &str, state: &str, given: &[&str]) -> Self {
        ParamIndex {
            node: node.to_string(),
            key: ParamKey::Table {
                state: state.to_string(),
                given: given.iter().map(|s| s.to_string()).collect(),
            },
        }
    }

    pub fn inhibitor(node: &str, parent: &str) -> Self {
        ParamIndex {
            node: node.to_string(),
            key: ParamKey::Inhibitor {
                parent: parent.to_string(),
            },
        }
    }

    pub fn base(node: &str) -> Self {
        ParamIndex {
            node: node.to_string(),
            key: ParamKey::Base,
        }
    }
}

impl fmt::Display for ParamIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.key {
            ParamKey::Table { state, given } if given.is_empty() => {
                write!(f, "{}[{}]", self.node, state)
            }
            ParamKey::Table { state, given } => {
                write!(f, "{}[{}|{}]", self.node, state, given.join(","))
            }
            ParamKey::Inhibitor { parent } => write!(f, "{}[inhibitor {}]", self.node, parent),
            ParamKey::Base => write!(f, "{}[base]", self.node),
        }
    }
}

/// A structural or numeric problem found by [`validate_network`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "violation", rename_all = "kebab-case")]
pub enum Violation {
    DuplicateVariable { node: String },
    TooFewStates { node: String },
    DuplicateState { node: String, state: String },
    BadName { node: String, name: String },
    UnknownParent { node: String, parent: String },
    DuplicateParent { node: String, parent: String },
    Cycle { nodes: Vec<String> },
    ArityMismatch { node: String, expected: usize, found: usize },
    NonFinite { node: String, row: usize },
    NegativeParameter { node: String, row: usize, state: String, value: f64 },
    ZeroRow { node: String, row: usize },
    NoisyOrNonBinary { node: String, variable: String },
    NoisyOrOutOfRange { node: String, which: String, value: f64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::DuplicateVariable { node } => write!(f, "variable `{node}` declared twice"),
            Violation::TooFewStates { node } => write!(f, "variable `{node}` needs at least two states"),
            Violation::DuplicateState { node, state } => {
                write!(f, "variable `{node}` repeats state `{state}`")
            }
            Violation::BadName { node, name } => {
                write!(f, "variable `{node}`: name `{name}` is empty or contains ',' or '='")
            }
            Violation::UnknownParent { node, parent } => {
                write!(f, "node `{node}` references unknown parent `{parent}`")
            }
            Violation::DuplicateParent { node, parent } => {
                write!(f, "node `{node}` lists parent `{parent}` twice")
            }
            Violation::Cycle { nodes } => write!(f, "cycle through {}", nodes.join(" -> ")),
            Violation::ArityMismatch { node, expected, found } => {
                write!(f, "node `{node}`: expected {expected} parameter entries, found {found}")
            }
            Violation::NonFinite { node, row } => write!(f, "node `{node}` row {row}: non-finite value"),
            Violation::NegativeParameter { node, row, state, value } => {
                write!(f, "node `{node}` row {row}: negative weight {value} for state `{state}`")
            }
            Violation::ZeroRow { node, row } => write!(f, "node `{node}` row {row}: all weights are zero"),
            Violation::NoisyOrNonBinary { node, variable } => {
                write!(f, "noisy-OR node `{node}`: variable `{variable}` is not binary")
            }
            Violation::NoisyOrOutOfRange { node, which, value } => {
                write!(f, "noisy-OR node `{node}`: {which} = {value} is outside [0, 1]")
            }
        }
    }
}

fn bad_name(s: &str) -> bool {
    s.is_empty() || s.contains(',') || s.contains('=')
}

/// Checks every structural and numeric invariant and returns all violations.
/// An empty result means the definitions form a valid network.
pub fn validate_network(nodes: &[NodeDef]) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut index: HashMap<&str, usize> = HashMap::new();
    for (i, n) in nodes.iter().enumerate() {
        let name = n.variable.name.as_str();
        if bad_name(name) {
            out.push(Violation::BadName { node: name.into(), name: name.into() });
        }
        if index.insert(name, i).is_some() {
            out.push(Violation::DuplicateVariable { node: name.into() });
        }
        if n.variable.states.len() < 2 {
            out.push(Violation::TooFewStates { node: name.into() });
        }
        let mut seen = HashSet::new();
        for s in &n.variable.states {
            if bad_name(s) {
                out.push(Violation::BadName { node: name.into(), name: s.clone() });
            }
            if !seen.insert(s.as_str()) {
                out.push(Violation::DuplicateState { node: name.into(), state: s.clone() });
            }
        }
    }

    let mut resolved = true;
    for n in nodes {
        let mut seen = HashSet::new();
        for p in &n.parents {
            if !index.contains_key(p.as_str()) {
                resolved = false;
                out.push(Violation::UnknownParent {
                    node: n.variable.name.clone(),
                    parent: p.clone(),
                });
            }
            if !seen.insert(p.as_str()) {
                out.push(Violation::DuplicateParent {
                    node: n.variable.name.clone(),
                    parent: p.clone(),
                });
            }
        }
    }
    if !resolved {
        return out;
    }

    let parents: Vec<Vec<usize>> = nodes
        .iter()
        .map(|n| n.parents.iter().map(|p| index[p.as_str()]).collect())
        .collect();
    if let Err(stuck) = topological_sort(&parents) {
        out.push(Violation::Cycle {
            nodes: stuck.iter().map(|&i| nodes[i].variable.name.clone()).collect(),
        });
    }

    for (i, n) in nodes.iter().enumerate() {
        let node = &n.variable.name;
        let card = n.variable.card();
        match &n.params {
            Parameterization::Table(t) => {
                let expected: usize = parents[i].iter().map(|&p| nodes[p].variable.card()).product();
                if t.rows.len() != expected {
                    out.push(Violation::ArityMismatch {
                        node: node.clone(),
                        expected: expected * card,
                        found: t.rows.iter().map(Vec::len).sum(),
                    });
                    continue;
                }
                for (r, row) in t.rows.iter().enumerate() {
                    if row.len() != card {
                        out.push(Violation::ArityMismatch {
                            node: node.clone(),
                            expected: expected * card,
                            found: t.rows.iter().map(Vec::len).sum(),
                        });
                        break;
                    }
                    if row.iter().any(|v| !v.is_finite()) {
                        out.push(Violation::NonFinite { node: node.clone(), row: r });
                        continue;
                    }
                    for (s, &v) in row.iter().enumerate() {
                        if v < 0.0 {
                            out.push(Violation::NegativeParameter {
                                node: node.clone(),
                                row: r,
                                state: n.variable.states[s].clone(),
                                value: v,
                            });
                        }
                    }
                    if row.iter().all(|&v| v <= 0.0) {
                        out.push(Violation::ZeroRow { node: node.clone(), row: r });
                    }
                }
            }
            Parameterization::NoisyOr(no) => {
                if card != 2 {
                    out.push(Violation::NoisyOrNonBinary {
                        node: node.clone(),
                        variable: node.clone(),
                    });
                }
                for &p in &parents[i] {
                    if nodes[p].variable.card() != 2 {
                        out.push(Violation::NoisyOrNonBinary {
                            node: node.clone(),
                            variable: nodes[p].variable.name.clone(),
                        });
                    }
                }
                if no.inhibitors.len() != parents[i].len() {
                    out.push(Violation::ArityMismatch {
                        node: node.clone(),
                        expected: parents[i].len() + 1,
                        found: no.inhibitors.len() + 1,
                    });
                }
                let named = std::iter::once(("base".to_string(), no.base)).chain(
                    no.inhibitors
                        .iter()
                        .zip(&n.parents)
                        .map(|(&v, p)| (format!("inhibitor {p}"), v)),
                );
                for (which, v) in named {
                    if !(0.0..=1.0).contains(&v) {
                        out.push(Violation::NoisyOrOutOfRange {
                            node: node.clone(),
                            which,
                            value: v,
                        });
                    }
                }
            }
        }
    }
    out
}

/// Kahn's algorithm. On failure returns the nodes left on or behind a cycle.
fn topological_sort(parents: &[Vec<usize>]) -> std::result::Result<Vec<usize>, Vec<usize>> {
    let n = parents.len();
    let mut indegree: Vec<usize> = parents.iter().map(Vec::len).collect();
    let mut children = vec![Vec::new(); n];
    for (c, ps) in parents.iter().enumerate() {
        for &p in ps {
            children[p].push(c);
        }
    }
    let mut ready: Vec<usize> = (0..n).rev().filter(|&i| indegree[i] == 0).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(i) = ready.pop() {
        order.push(i);
        for &c in children[i].iter().rev() {
            indegree[c] -= 1;
            if indegree[c] == 0 {
                ready.push(c);
            }
        }
    }
    if order.len() == n {
        Ok(order)
    } else {
        Err((0..n).filter(|&i| indegree[i] > 0).collect())
    }
}

/// A validated Bayesian network.
#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    variables: Vec<Variable>,
    parents: Vec<Vec<usize>>,
    children: Vec<Vec<usize>>,
    params: Vec<Parameterization>,
    topo: Vec<usize>,
    index: HashMap<String, usize>,
}

impl Network {
    pub fn new(nodes: Vec<NodeDef>) -> Result<Self> {
        let violations = validate_network(&nodes);
        if !violations.is_empty() {
            return Err(Error::InvalidNetwork(violations));
        }
        let index: HashMap<String, usize> = nodes
            .iter()
            .enumerate()
            .map(|(i, n)| (n.variable.name.clone(), i))
            .collect();
        let parents: Vec<Vec<usize>> = nodes
            .iter()
            .map(|n| n.parents.iter().map(|p| index[p]).collect())
            .collect();
        let mut children = vec![Vec::new(); nodes.len()];
        for (c, ps) in parents.iter().enumerate() {
            for &p in ps {
                children[p].push(c);
            }
        }
        let topo = topological_sort(&parents).expect("validated acyclic");
        let (variables, params) = nodes.into_iter().map(|n| (n.variable, n.params)).unzip();
        Ok(Network {
            variables,
            parents,
            children,
            params,
            topo,
            index,
        })
    }

    pub fn to_defs(&self) -> Vec<NodeDef> {
        (0..self.len())
            .map(|i| NodeDef {
                variable: self.variables[i].clone(),
                parents: self.parents[i]
                    .iter()
                    .map(|&p| self.variables[p].name.clone())
                    .collect(),
                params: self.params[i].clone(),
            })
            .collect()
    }

    pub fn len(&self) -> usize {
        self.variables.len()
    }

    pub fn is_empty(&self) -> bool {
        self.variables.is_empty()
    }

    pub fn variables(&self) -> &[Variable] {
        &self.variables
    }

    pub fn variable(&self, i: usize) -> &Variable {
        &self.variables[i]
    }

    pub fn card(&self, i: usize) -> usize {
        self.variables[i].card()
    }

    pub fn var_index(&self, name: &str) -> Result<usize> {
        self.index
            .get(name)
            .copied()
            .ok_or_else(|| Error::UnknownVariable(name.to_string()))
    }

    pub fn state_index(&self, var: usize, state: &str) -> Result<usize> {
        self.variables[var]
            .state_index(state)
            .ok_or_else(|| Error::UnknownState {
                variable: self.variables[var].name.clone(),
                state: state.to_string(),
            })
    }

    pub fn parents(&self, i: usize) -> &[usize] {
        &self.parents[i]
    }

    pub fn children(&self, i: usize) -> &[usize] {
        &self.children[i]
    }

    pub fn topological_order(&self) -> &[usize] {
        &self.topo
    }

    pub fn parameterization(&self, i: usize) -> &Parameterization {
        &self.params[i]
    }

    /// Number of parent configurations of node `i`.
    pub fn config_count(&self, i: usize) -> usize {
        self.parents[i].iter().map(|&p| self.card(p)).product()
    }

    /// Parent configuration index of node `i` read off a full assignment.
    pub fn config_of(&self, i: usize, assignment: &[usize]) -> usize {
        self.parents[i]
            .iter()
            .fold(0, |acc, &p| acc * self.card(p) + assignment[p])
    }

    pub fn encode_config(&self, i: usize, parent_states: &[usize]) -> usize {
        self.parents[i]
            .iter()
            .zip(parent_states)
            .fold(0, |acc, (&p, &s)| acc * self.card(p) + s)
    }

    pub fn decode_config(&self, i: usize, mut cfg: usize) -> Vec<usize> {
        let mut out = vec![0; self.parents[i].len()];
        for (slot, &p) in self.parents[i].iter().enumerate().rev() {
            let c = self.card(p);
            out[slot] = cfg % c;
            cfg /= c;
        }
        out
    }

    fn resolve_config(&self, i: usize, parent_states: &[&str]) -> Result<usize> {
        if parent_states.len() != self.parents[i].len() {
            return Err(Error::BadConfiguration {
                node: self.variables[i].name.clone(),
                expected: self.parents[i].len(),
                found: parent_states.len(),
            });
        }
        let states = self.parents[i]
            .iter()
            .zip(parent_states)
            .map(|(&p, s)| self.state_index(p, s))
            .collect::<Result<Vec<_>>>()?;
        Ok(self.encode_config(i, &states))
    }

    /// `P(x_i = state | cfg)` by index.
    pub fn local_prob_at(&self, i: usize, state: usize, cfg: usize) -> f64 {
        match &self.params[i] {
            Parameterization::Table(t) => {
                let row = &t.rows[cfg];
                row[state] / row.iter().sum::<f64>()
            }
            Parameterization::NoisyOr(no) => {
                let parent_states = self.decode_config(i, cfg);
                let off: f64 = no.base
                    * parent_states
                        .iter()
                        .zip(&no.inhibitors)
                        .filter(|(&s, _)| s == 0)
                        .map(|(_, &q)| q)
                        .product::<f64>();
                if state == 0 {
                    1.0 - off
                } else {
                    off
                }
            }
        }
    }

    /// `P(x_i | x_c(i))` with states given by name, parents in declared order.
    pub fn local_prob(&self, node: &str, state: &str, parent_states: &[&str]) -> Result<f64> {
        let i = self.var_index(node)?;
        let s = self.state_index(i, state)?;
        let cfg = self.resolve_config(i, parent_states)?;
        Ok(self.local_prob_at(i, s, cfg))
    }

    /// Product of local probabilities over a complete index assignment.
    pub fn joint_prob_at(&self, assignment: &[usize]) -> f64 {
        (0..self.len())
            .map(|i| self.local_prob_at(i, assignment[i], self.config_of(i, assignment)))
            .product()
    }

    pub fn joint_prob(&self, assignment: &BTreeMap<String, String>) -> Result<f64> {
        for name in assignment.keys() {
            self.var_index(name)?;
        }
        let idx = self
            .variables
            .iter()
            .enumerate()
            .map(|(i, v)| {
                let s = assignment
                    .get(&v.name)
                    .ok_or_else(|| Error::IncompleteAssignment(v.name.clone()))?;
                self.state_index(i, s)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(self.joint_prob_at(&idx))
    }

    /// Number of parameter slots of node `i`. Table slot `k = cfg * card + state`;
    /// noisy-OR slot 0 is the base and slot `j + 1` the inhibitor of parent `j`.
    pub fn param_count(&self, i: usize) -> usize {
        match &self.params[i] {
            Parameterization::Table(t) => t.rows.len() * self.card(i),
            Parameterization::NoisyOr(no) => no.inhibitors.len() + 1,
        }
    }

    pub fn param_value(&self, i: usize, k: usize) -> f64 {
        match &self.params[i] {
            Parameterization::Table(t) => t.rows[k / self.card(i)][k % self.card(i)],
            Parameterization::NoisyOr(no) => {
                if k == 0 {
                    no.base
                } else {
                    no.inhibitors[k - 1]
                }
            }
        }
    }

    /// Deterministic entries sit on the boundary of the parameter space and
    /// are excluded from differentiation.
    pub fn is_frozen(&self, i: usize, k: usize) -> bool {
        match &self.params[i] {
            Parameterization::Table(t) => {
                let row = &t.rows[k / self.card(i)];
                let v = row[k % self.card(i)];
                v == 0.0 || row.iter().enumerate().all(|(s, &w)| s == k % self.card(i) || w == 0.0)
            }
            Parameterization::NoisyOr(_) => {
                let v = self.param_value(i, k);
                v == 0.0 || v == 1.0
            }
        }
    }

    pub fn param_index(&self, i: usize, k: usize) -> ParamIndex {
        let node = self.variables[i].name.clone();
        let key = match &self.params[i] {
            Parameterization::Table(_) => {
                let card = self.card(i);
                let given = self
                    .decode_config(i, k / card)
                    .iter()
                    .zip(&self.parents[i])
                    .map(|(&s, &p)| self.variables[p].states[s].clone())
                    .collect();
                ParamKey::Table {
                    state: self.variables[i].states[k % card].clone(),
                    given,
                }
            }
            Parameterization::NoisyOr(_) if k == 0 => ParamKey::Base,
            Parameterization::NoisyOr(_) => ParamKey::Inhibitor {
                parent: self.variables[self.parents[i][k - 1]].name.clone(),
            },
        };
        ParamIndex { node, key }
    }

    /// Maps a named parameter to its `(node, slot)` pair.
    pub fn resolve(&self, p: &ParamIndex) -> Result<(usize, usize)> {
        let i = self.var_index(&p.node)?;
        let unknown = || Error::UnknownParameter(p.to_string());
        let k = match (&self.params[i], &p.key) {
            (Parameterization::Table(_), ParamKey::Table { state, given }) => {
                let s = self.state_index(i, state)?;
                let given: Vec<&str> = given.iter().map(String::as_str).collect();
                self.resolve_config(i, &given)? * self.card(i) + s
            }
            (Parameterization::NoisyOr(_), ParamKey::Base) => 0,
            (Parameterization::NoisyOr(_), ParamKey::Inhibitor { parent }) => {
                let pi = self.var_index(parent)?;
                1 + self.parents[i].iter().position(|&q| q == pi).ok_or_else(unknown)?
            }
            _ => return Err(unknown()),
        };
        Ok((i, k))
    }

    /// All `(node, slot)` pairs in node order.
    pub fn slots(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.len()).flat_map(move |i| (0..self.param_count(i)).map(move |k| (i, k)))
    }

    /// Returns a copy with one raw parameter replaced. The result is validated.
    pub fn with_param(&self, i: usize, k: usize, value: f64) -> Result<Network> {
        let mut next = self.clone();
        next.set_param_unchecked(i, k, value);
        let violations = validate_network(&next.to_defs());
        if violations.is_empty() {
            Ok(next)
        } else {
            Err(Error::InvalidNetwork(violations))
        }
    }

    pub(crate) fn set_param_unchecked(&mut self, i: usize, k: usize, value: f64) {
        let card = self.card(i);
        match &mut self.params[i] {
            Parameterization::Table(t) => t.rows[k / card][k % card] = value,
            Parameterization::NoisyOr(no) => {
                if k == 0 {
                    no.base = value
                } else {
                    no.inhibitors[k - 1] = value
                }
            }
        }
    }

    pub(crate) fn params_mut(&mut self, i: usize) -> &mut Parameterization {
        &mut self.params[i]
    }

    /// `∂ log P(x_i = state | cfg) / ∂θ_i[k]` by index. Undefined for frozen slots.
    pub fn u_at(&self, i: usize, k: usize, state: usize, cfg: usize) -> f64 {
        match &self.params[i] {
            Parameterization::Table(t) => {
                let card = self.card(i);
                if k / card != cfg {
                    return 0.0;
                }
                let row = &t.rows[cfg];
                let total: f64 = row.iter().sum();
                if k % card == state {
                    let p = row[state] / total;
                    (1.0 / total) * ((1.0 - p) / p)
                } else {
                    -1.0 / total
                }
            }
            Parameterization::NoisyOr(no) => {
                let parent_states = self.decode_config(i, cfg);
                let active = |j: usize| parent_states[j] == 0;
                // product over active inhibitors, optionally skipping one
                let off_without = |skip: Option<usize>| -> f64 {
                    (0..no.inhibitors.len())
                        .filter(|&j| active(j) && Some(j) != skip)
                        .map(|j| no.inhibitors[j])
                        .product()
                };
                if k > 0 && !active(k - 1) {
                    return 0.0;
                }
                if state == 1 {
                    1.0 / self.param_value(i, k)
                } else {
                    let p_true = 1.0 - no.base * off_without(None);
                    let d = if k == 0 {
                        off_without(None)
                    } else {
                        no.base * off_without(Some(k - 1))
                    };
                    -d / p_true
                }
            }
        }
    }

    /// Named form of [`Network::u_at`].
    pub fn u_value(&self, p: &ParamIndex, state: &str, parent_states: &[&str]) -> Result<f64> {
        let (i, k) = self.resolve(p)?;
        if self.is_frozen(i, k) {
            return Err(Error::FrozenParameter(p.to_string()));
        }
        let s = self.state_index(i, state)?;
        let cfg = self.resolve_config(i, parent_states)?;
        Ok(self.u_at(i, k, s, cfg))
    }

    /// Size of the full joint state space.
    pub fn state_space(&self) -> u128 {
        self.variables.iter().map(|v| v.card() as u128).product()
    }
}

/// Rescales every table row to sum to one. Noisy-OR families are untouched.
pub fn scale_to_unit(net: &Network) -> Network {
    let mut out = net.clone();
    for i in 0..out.len() {
        if let Parameterization::Table(t) = out.params_mut(i) {
            for row in &mut t.rows {
                normalize_row(row);
            }
        }
    }
    out
}

pub(crate) fn normalize_row(row: &mut [f64]) {
    let total: f64 = row.iter().sum();
    if total > 0.0 && total != 1.0 {
        for v in row.iter_mut() {
            *v /= total;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(name: &str, parents: &[&str], rows: Vec<Vec<f64>>) -> NodeDef {
        NodeDef {
            variable: Variable::new(name, &["t", "f"]),
            parents: parents.iter().map(|s| s.to_string()).collect(),
            params: Parameterization::Table(TableParams { rows }),
        }
    }

    fn noisy(name: &str, parents: &[&str], base: f64, inhibitors: Vec<f64>) -> NodeDef {
        NodeDef {
            variable: Variable::new(name, &["t", "f"]),
            parents: parents.iter().map(|s| s.to_string()).collect(),
            params: Parameterization::NoisyOr(NoisyOrParams { base, inhibitors }),
        }
    }

    #[test]
    fn deterministic_root_is_valid() {
        assert!(validate_network(&[table("X", &[], vec![vec![1.0, 0.0]])]).is_empty());
    }

    #[test]
    fn mutual_parents_form_a_cycle() {
        let v = validate_network(&[
            table("X", &["Y"], vec![vec![0.5, 0.5], vec![0.5, 0.5]]),
            table("Y", &["X"], vec![vec![0.5, 0.5], vec![0.5, 0.5]]),
        ]);
        assert!(matches!(&v[..], [Violation::Cycle { nodes }] if nodes.len() == 2));
    }

    #[test]
    fn collects_every_violation() {
        let v = validate_network(&[
            table("X", &[], vec![vec![-1.0, 0.0]]),
            table("Y", &["X"], vec![vec![0.5, 0.5]]),
            NodeDef {
                variable: Variable::new("Z", &["a", "b", "c"]),
                parents: vec![],
                params: Parameterization::NoisyOr(NoisyOrParams { base: 1.5, inhibitors: vec![] }),
            },
        ]);
        assert!(v.iter().any(|x| matches!(x, Violation::NegativeParameter { .. })));
        assert!(v.iter().any(|x| matches!(x, Violation::ZeroRow { .. })));
        assert!(v.iter().any(|x| matches!(x, Violation::ArityMismatch { .. })));
        assert!(v.iter().any(|x| matches!(x, Violation::NoisyOrNonBinary { .. })));
        assert!(v.iter().any(|x| matches!(x, Violation::NoisyOrOutOfRange { .. })));
    }

    #[test]
    fn unknown_parent_is_reported() {
        let v = validate_network(&[table("X", &["Q"], vec![vec![0.5, 0.5], vec![0.5, 0.5]])]);
        assert_eq!(
            v,
            vec![Violation::UnknownParent { node: "X".into(), parent: "Q".into() }]
        );
    }

    #[test]
    fn noisy_or_local_probabilities() {
        let net = Network::new(vec![
            table("A", &[], vec![vec![0.5, 0.5]]),
            noisy("X", &["A"], 1.0, vec![0.3]),
            noisy("Y", &["A"], 0.9, vec![0.5]),
        ])
        .unwrap();
        assert_eq!(net.local_prob("X", "t", &["f"]).unwrap(), 0.0);
        assert!((net.local_prob("Y", "t", &["t"]).unwrap() - 0.55).abs() < 1e-15);
    }

    #[test]
    fn root_joint_and_table_ratio() {
        let net = Network::new(vec![table("R", &[], vec![vec![0.3, 0.7]])]).unwrap();
        let a: BTreeMap<String, String> = [("R".to_string(), "t".to_string())].into();
        assert_eq!(net.joint_prob(&a).unwrap(), 0.3);
        assert!(matches!(
            net.joint_prob(&BTreeMap::new()),
            Err(Error::IncompleteAssignment(_))
        ));
    }

    #[test]
    fn table_u_values_with_unit_row() {
        let net = Network::new(vec![
            table("A", &[], vec![vec![0.01, 0.99]]),
            table("B", &["A"], vec![vec![0.05, 0.95], vec![0.01, 0.99]]),
        ])
        .unwrap();
        let p = ParamIndex::table("B", "t", &["t"]);
        assert!((net.u_value(&p, "t", &["t"]).unwrap() - 19.0).abs() < 1e-12);
        assert!((net.u_value(&p, "f", &["t"]).unwrap() + 1.0).abs() < 1e-12);
        assert_eq!(net.u_value(&p, "t", &["f"]).unwrap(), 0.0);
        assert_eq!(net.u_value(&p, "f", &["f"]).unwrap(), 0.0);
    }

    #[test]
    fn noisy_or_u_values() {
        let net = Network::new(vec![
            table("A", &[], vec![vec![0.5, 0.5]]),
            table("B", &[], vec![vec![0.5, 0.5]]),
            noisy("X", &["A", "B"], 0.9, vec![0.4, 0.7]),
        ])
        .unwrap();
        let inh_a = ParamIndex::inhibitor("X", "A");
        assert_eq!(net.u_value(&inh_a, "t", &["f", "t"]).unwrap(), 0.0);
        assert_eq!(net.u_value(&inh_a, "f", &["f", "t"]).unwrap(), 0.0);
        assert!((net.u_value(&inh_a, "f", &["t", "t"]).unwrap() - 1.0 / 0.4).abs() < 1e-12);
        // d/dθ_A log(1 - 0.9 θ_A 0.7) = -0.63 / (1 - 0.252)
        let expected = -0.63 / (1.0 - 0.9 * 0.4 * 0.7);
        assert!((net.u_value(&inh_a, "t", &["t", "t"]).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn frozen_entries_are_rejected() {
        let net = Network::new(vec![
            table("A", &[], vec![vec![0.5, 0.5]]),
            table("C", &["A"], vec![vec![1.0, 0.0], vec![0.2, 0.8]]),
        ])
        .unwrap();
        let (i, k) = net.resolve(&ParamIndex::table("C", "t", &["t"])).unwrap();
        assert!(net.is_frozen(i, k));
        assert!(net.is_frozen(i, k + 1));
        assert!(!net.is_frozen(i, k + 2));
        assert!(matches!(
            net.u_value(&ParamIndex::table("C", "f", &["t"]), "t", &["t"]),
            Err(Error::FrozenParameter(_))
        ));
    }

    #[test]
    fn scaling_rows() {
        let net = Network::new(vec![
            table("A", &[], vec![vec![2.0, 2.0]]),
            table("B", &["A"], vec![vec![0.05, 0.95], vec![3.0, 1.0]]),
        ])
        .unwrap();
        let scaled = scale_to_unit(&net);
        let rows = |n: &Network, i| match n.parameterization(i) {
            Parameterization::Table(t) => t.rows.clone(),
            _ => unreachable!(),
        };
        assert_eq!(rows(&scaled, 0), vec![vec![0.5, 0.5]]);
        assert_eq!(rows(&scaled, 1)[0], vec![0.05, 0.95]);
        assert_eq!(scale_to_unit(&scaled), scaled);
    }

    #[test]
    fn param_index_round_trip() {
        let net = Network::new(vec![
            table("A", &[], vec![vec![0.5, 0.5]]),
            noisy("X", &["A"], 0.9, vec![0.4]),
            table("B", &["A", "X"], vec![vec![0.5, 0.5]; 4]),
        ])
        .unwrap();
        for (i, k) in net.slots().collect::<Vec<_>>() {
            assert_eq!(net.resolve(&net.param_index(i, k)).unwrap(), (i, k));
        }
        assert_eq!(
            net.param_index(2, 5).to_string(),
            "B[f|f,t]",
        );
    }
}
