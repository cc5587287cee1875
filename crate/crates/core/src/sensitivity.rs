//! Analytic sensitivities of a target posterior with respect to network
//! parameters.
//!
//! For a parameter `θ_s[k]` and target state `x_t`,
//!
//! ```text
//! ∂P(x_t | x_e) / ∂θ_s[k] = P(x_t | x_e) · (E[U | x_t, x_e] − E[U | x_e])
//! ```
//!
//! where `U = ∂ log P(x_s | x_c(s)) / ∂θ_s[k]`. One propagation with the
//! evidence alone yields `P(X_t | x_e)`; one more per target state yields
//! the family posteriors from which `E[U | x_t, x_e]` is read for every
//! parameter at once. `E[U | x_e]` is their `P(x_t | x_e)`-weighted mean.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::dsep;
use crate::error::{Error, Result};
use crate::inference::{compile, Evidence, FamilyPosterior, InferenceContext};
use crate::model::{Network, ParamIndex, Parameterization};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scenario {
    pub evidence: Evidence,
    pub target: String,
}

impl Scenario {
    pub fn new(evidence: Evidence, target: &str) -> Self {
        Scenario {
            evidence,
            target: target.to_string(),
        }
    }

    pub(crate) fn resolve(&self, net: &Network) -> Result<(Vec<Option<usize>>, usize)> {
        let t = net.var_index(&self.target)?;
        if self.evidence.contains(&self.target) {
            return Err(Error::TargetInEvidence(self.target.clone()));
        }
        Ok((self.evidence.resolve(net)?, t))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensitivityEntry {
    pub param: ParamIndex,
    pub target_state: String,
    pub value: f64,
}

/// Largest absolute sensitivity of one node, with the entry attaining it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeMax {
    pub value: f64,
    pub param: ParamIndex,
    pub target_state: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensitivityReport {
    pub scenario: Scenario,
    /// `P(X_t | x_e)` in target state order.
    pub target_states: Vec<String>,
    pub target_distribution: Vec<f64>,
    pub entries: Vec<SensitivityEntry>,
    pub structural_zero: Vec<ParamIndex>,
    pub frozen: Vec<ParamIndex>,
    pub node_max: BTreeMap<String, NodeMax>,
    /// Propagation passes used to build the report.
    pub passes: usize,
}

impl SensitivityReport {
    pub fn get(&self, param: &ParamIndex, target_state: &str) -> Option<f64> {
        self.entries
            .iter()
            .find(|e| &e.param == param && e.target_state == target_state)
            .map(|e| e.value)
    }
}

/// `P(X_t | x_e)` for one scenario.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetDistribution {
    pub scenario: Scenario,
    pub target_states: Vec<String>,
    pub distribution: Vec<f64>,
}

pub fn query_scenario(ctx: &InferenceContext, sc: &Scenario) -> Result<TargetDistribution> {
    let (_, t) = sc.resolve(ctx.network())?;
    Ok(TargetDistribution {
        scenario: sc.clone(),
        target_states: ctx.network().variable(t).states.clone(),
        distribution: ctx.query_marginal(&sc.evidence, &sc.target)?,
    })
}

/// Per-node maxima without the individual entries.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensitivitySummary {
    pub scenario: Scenario,
    pub target_states: Vec<String>,
    pub target_distribution: Vec<f64>,
    pub node_max: BTreeMap<String, NodeMax>,
}

impl From<&SensitivityReport> for SensitivitySummary {
    fn from(r: &SensitivityReport) -> Self {
        SensitivitySummary {
            scenario: r.scenario.clone(),
            target_states: r.target_states.clone(),
            target_distribution: r.target_distribution.clone(),
            node_max: r.node_max.clone(),
        }
    }
}

/// Conditional U expectations for one scenario.
pub(crate) struct Expectations {
    pub target: usize,
    pub p_target: Vec<f64>,
    /// Evaluated `(node, slot)` pairs, in network slot order.
    pub slots: Vec<(usize, usize)>,
    /// `cond[j][t] = E[U_j | x_t, x_e]`; zero where `P(x_t | x_e) = 0`.
    pub cond: Vec<Vec<f64>>,
    /// `E[U_j | x_e]` read directly from the evidence-only pass.
    pub uncond: Vec<f64>,
    pub screened: Vec<(usize, usize)>,
    pub frozen: Vec<(usize, usize)>,
}

impl Expectations {
    /// `E[U_j | x_e]` combined from the per-state expectations.
    pub fn combined(&self, j: usize) -> f64 {
        self.cond[j]
            .iter()
            .zip(&self.p_target)
            .map(|(c, p)| c * p)
            .sum()
    }

    /// `∂P(x_t | x_e)/∂θ_j` for every target state.
    pub fn derivatives(&self, j: usize) -> Vec<f64> {
        let mean = self.combined(j);
        self.cond[j]
            .iter()
            .zip(&self.p_target)
            .map(|(c, &p)| if p > 0.0 { p * (c - mean) } else { 0.0 })
            .collect()
    }
}

/// `E[U_s[k]]` under a family posterior.
pub(crate) fn expected_u(net: &Network, s: usize, k: usize, fp: &FamilyPosterior) -> f64 {
    let card = net.card(s);
    let cfgs = match net.parameterization(s) {
        Parameterization::Table(_) => (k / card)..(k / card + 1),
        Parameterization::NoisyOr(_) => 0..net.config_count(s),
    };
    let mut acc = 0.0;
    for cfg in cfgs {
        for x in 0..card {
            let w = fp.get(x, cfg);
            if w > 0.0 {
                acc += w * net.u_at(s, k, x, cfg);
            }
        }
    }
    acc
}

/// Nodes whose parameter node `Θ_s` is d-separated from the target by the
/// evidence in the graph augmented with one parameter parent per node.
pub(crate) fn screened_nodes(net: &Network, evidence: &[Option<usize>], target: usize) -> Vec<bool> {
    let n = net.len();
    let mut parents: Vec<Vec<usize>> = (0..n).map(|i| net.parents(i).to_vec()).collect();
    let mut children: Vec<Vec<usize>> = (0..n).map(|i| net.children(i).to_vec()).collect();
    for i in 0..n {
        parents[i].push(n + i);
    }
    parents.extend((0..n).map(|_| Vec::new()));
    children.extend((0..n).map(|i| vec![i]));
    let mut observed: Vec<bool> = evidence.iter().map(Option::is_some).collect();
    observed.extend(std::iter::repeat_n(false, n));
    let reach = dsep::reachable(&parents, &children, target, &observed);
    (0..n).map(|i| !reach[n + i]).collect()
}

/// Parameters whose sensitivity is zero for graph-theoretic reasons.
pub fn screen_structural_zeros(net: &Network, sc: &Scenario) -> Result<BTreeSet<ParamIndex>> {
    let (ev, t) = sc.resolve(net)?;
    let screened = screened_nodes(net, &ev, t);
    Ok(net
        .slots()
        .filter(|&(i, _)| screened[i])
        .map(|(i, k)| net.param_index(i, k))
        .collect())
}

pub(crate) fn expectations(
    ctx: &InferenceContext,
    sc: &Scenario,
    nodes: Option<&[usize]>,
    screen: bool,
) -> Result<Expectations> {
    let net = ctx.network();
    let (ev, t) = sc.resolve(net)?;
    let screened_node = if screen {
        screened_nodes(net, &ev, t)
    } else {
        vec![false; net.len()]
    };

    let base = ctx.propagate(&ev)?;
    let p_target = ctx.marginal_from(&base, t);
    let base_families = ctx.families_from(&base);

    let mut slots = Vec::new();
    let mut screened = Vec::new();
    let mut frozen = Vec::new();
    for (i, k) in net.slots() {
        if nodes.is_some_and(|ns| !ns.contains(&i)) {
            continue;
        }
        if net.is_frozen(i, k) {
            frozen.push((i, k));
        } else if screened_node[i] {
            screened.push((i, k));
        } else {
            slots.push((i, k));
        }
    }

    let uncond = slots
        .iter()
        .map(|&(i, k)| expected_u(net, i, k, &base_families[i]))
        .collect();

    let mut cond = vec![vec![0.0; p_target.len()]; slots.len()];
    for (state, &p) in p_target.iter().enumerate() {
        if p <= 0.0 {
            continue;
        }
        let mut conditioned = ev.clone();
        conditioned[t] = Some(state);
        let families = ctx.families_from(&ctx.propagate(&conditioned)?);
        for (j, &(i, k)) in slots.iter().enumerate() {
            cond[j][state] = expected_u(net, i, k, &families[i]);
        }
    }

    Ok(Expectations {
        target: t,
        p_target,
        slots,
        cond,
        uncond,
        screened,
        frozen,
    })
}

fn node_filter(net: &Network, nodes: Option<&[String]>) -> Result<Option<Vec<usize>>> {
    nodes
        .map(|ns| ns.iter().map(|n| net.var_index(n)).collect::<Result<Vec<_>>>())
        .transpose()
}

/// Full sensitivity report against a compiled context.
pub fn sensitivities_with(
    ctx: &InferenceContext,
    sc: &Scenario,
    nodes: Option<&[String]>,
) -> Result<SensitivityReport> {
    sensitivities_screened(ctx, sc, nodes, true)
}

/// As [`sensitivities_with`]; with `screen` false every non-frozen
/// parameter is evaluated, including those d-separated from the target.
pub fn sensitivities_screened(
    ctx: &InferenceContext,
    sc: &Scenario,
    nodes: Option<&[String]>,
    screen: bool,
) -> Result<SensitivityReport> {
    let net = ctx.network();
    let filter = node_filter(net, nodes)?;
    let before = ctx.passes();
    let ex = expectations(ctx, sc, filter.as_deref(), screen)?;
    let passes = ctx.passes() - before;
    let states = &net.variable(ex.target).states;

    let mut rows: Vec<((usize, usize), Vec<f64>)> = ex
        .slots
        .iter()
        .enumerate()
        .map(|(j, &slot)| (slot, ex.derivatives(j)))
        .chain(ex.screened.iter().map(|&slot| (slot, vec![0.0; states.len()])))
        .collect();
    rows.sort_by_key(|(slot, _)| *slot);
    let entries = rows
        .into_iter()
        .flat_map(|((i, k), ds)| {
            let param = net.param_index(i, k);
            states.iter().zip(ds).map(move |(state, value)| SensitivityEntry {
                param: param.clone(),
                target_state: state.clone(),
                value,
            })
        })
        .collect();

    let mut report = SensitivityReport {
        scenario: sc.clone(),
        target_states: states.clone(),
        target_distribution: ex.p_target.clone(),
        entries,
        structural_zero: ex.screened.iter().map(|&(i, k)| net.param_index(i, k)).collect(),
        frozen: ex.frozen.iter().map(|&(i, k)| net.param_index(i, k)).collect(),
        node_max: BTreeMap::new(),
        passes,
    };
    report.node_max = node_max_summary(&report);
    Ok(report)
}

/// Compiles `net` and builds the full report for `sc`, optionally limited to
/// the named nodes.
pub fn sensitivities(net: &Network, sc: &Scenario, nodes: Option<&[String]>) -> Result<SensitivityReport> {
    sensitivities_with(&compile(net), sc, nodes)
}

/// Per-node maximum absolute sensitivity. Ties go to the earliest entry in
/// report order.
pub fn node_max_summary(report: &SensitivityReport) -> BTreeMap<String, NodeMax> {
    let mut out: BTreeMap<String, NodeMax> = BTreeMap::new();
    for e in &report.entries {
        let candidate = NodeMax {
            value: e.value.abs(),
            param: e.param.clone(),
            target_state: e.target_state.clone(),
        };
        match out.get_mut(&e.param.node) {
            None => {
                out.insert(e.param.node.clone(), candidate);
            }
            Some(best) => {
                if candidate.value > best.value {
                    *best = candidate;
                }
            }
        }
    }
    out
}

/// Central difference `[P(x_t | x_e, θ + h) − P(x_t | x_e, θ − h)] / 2h` on
/// the raw parameter, with both perturbed networks solved exactly.
pub fn finite_diff_sensitivity(
    net: &Network,
    sc: &Scenario,
    p: &ParamIndex,
    target_state: &str,
    h: f64,
) -> Result<f64> {
    if !(h > 0.0) {
        return Err(Error::InvalidConfig(format!("finite-difference step must be positive, got {h}")));
    }
    let (i, k) = net.resolve(p)?;
    if net.is_frozen(i, k) {
        return Err(Error::FrozenParameter(p.to_string()));
    }
    let (_, t) = sc.resolve(net)?;
    let s = net.state_index(t, target_state)?;
    let v = net.param_value(i, k);
    let upper_bound = match net.parameterization(i) {
        Parameterization::Table(_) => f64::INFINITY,
        Parameterization::NoisyOr(_) => 1.0,
    };
    let eval = |value: f64| -> Result<f64> {
        if !(0.0..=upper_bound).contains(&value) {
            return Err(Error::OutOfDomain {
                param: p.to_string(),
                value,
            });
        }
        let shifted = net.with_param(i, k, value).map_err(|_| Error::OutOfDomain {
            param: p.to_string(),
            value,
        })?;
        Ok(compile(&shifted).query_marginal(&sc.evidence, &sc.target)?[s])
    };
    Ok((eval(v + h)? - eval(v - h)?) / (2.0 * h))
}
