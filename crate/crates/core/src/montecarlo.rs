//! Sampling estimates of the sensitivity expectations.
//!
//! Every realization `x` with weight `w` adds `w · U_s[k](x_s, x_c(s))` to
//! `A_s[k](x_t)` and `w` to `B(x_t)`. Then `Ê[U | x_t, x_e] = A(x_t)/B(x_t)`
//! and `Ê[U | x_e] = Σ A / Σ B`. The weight sums do not depend on the
//! parameter, so a single `B` vector serves every `(s, k)`.
//!
//! Streams: samples are drawn in chunks of [`CHUNK`] consecutive indices.
//! Chunk `c` uses `ChaCha8Rng::seed_from_u64(seed)` switched to stream `c`.
//! Chunk accumulators are merged in chunk order, so the result does not
//! depend on the number of worker threads.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::Evidence;
use crate::model::{Network, ParamIndex};
use crate::sensitivity::{NodeMax, Scenario};

pub const CHUNK: u64 = 1024;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamplingMethod {
    LogicRejection,
    LikelihoodWeighting,
}

impl SamplingMethod {
    pub fn name(self) -> &'static str {
        match self {
            SamplingMethod::LogicRejection => "logic-rejection",
            SamplingMethod::LikelihoodWeighting => "likelihood-weighting",
        }
    }
}

impl std::str::FromStr for SamplingMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "reject" | "rejection" | "logic-rejection" => Ok(SamplingMethod::LogicRejection),
            "lw" | "likelihood-weighting" => Ok(SamplingMethod::LikelihoodWeighting),
            other => Err(Error::InvalidConfig(format!("unknown sampling method `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub method: SamplingMethod,
    pub sample_count: u64,
    pub seed: u64,
}

/// Ancestral sampling in topological order into `assignment`; returns the
/// weight. Rejection samples every node and returns 0 on an evidence
/// mismatch; likelihood weighting clamps evidence nodes and multiplies in
/// their local probabilities.
pub(crate) fn draw_into<R: Rng + ?Sized>(
    net: &Network,
    evidence: &[Option<usize>],
    method: SamplingMethod,
    rng: &mut R,
    assignment: &mut [usize],
) -> f64 {
    let mut w = 1.0;
    for &i in net.topological_order() {
        let cfg = net.config_of(i, assignment);
        match (method, evidence[i]) {
            (SamplingMethod::LikelihoodWeighting, Some(s)) => {
                assignment[i] = s;
                w *= net.local_prob_at(i, s, cfg);
            }
            _ => {
                let u: f64 = rng.random();
                let card = net.card(i);
                let mut acc = 0.0;
                let mut pick = card - 1;
                for s in 0..card {
                    acc += net.local_prob_at(i, s, cfg);
                    if u < acc {
                        pick = s;
                        break;
                    }
                }
                assignment[i] = pick;
                if evidence[i].is_some_and(|e| e != pick) {
                    w = 0.0;
                }
            }
        }
    }
    w
}

/// One full realization with its weight, states by index in variable order.
pub fn draw_sample<R: Rng + ?Sized>(
    net: &Network,
    e: &Evidence,
    method: SamplingMethod,
    rng: &mut R,
) -> Result<(Vec<usize>, f64)> {
    let ev = e.resolve(net)?;
    let mut x = vec![0; net.len()];
    let w = draw_into(net, &ev, method, rng, &mut x);
    Ok((x, w))
}

/// Running sums for one scenario. Slot `j` is the dense index
/// `offset(node) + k`; `t` is a target state.
#[derive(Clone, Debug, PartialEq)]
pub struct Accumulators {
    states: usize,
    /// `A[j·states + t] = Σ w·U_j`
    a: Vec<f64>,
    /// `Σ w²·U_j` and `Σ w²·U_j²` per `(j, t)`, for standard errors.
    a_w: Vec<f64>,
    a_ww: Vec<f64>,
    /// `B[t] = Σ w` and `Σ w²` per target state.
    b: Vec<f64>,
    b_w: Vec<f64>,
    /// Range of U per slot over the samples where it was evaluated, and
    /// how many those were. A slot whose U never varies has derivative 0.
    u_min: Vec<f64>,
    u_max: Vec<f64>,
    live: Vec<u64>,
    /// Samples with positive weight.
    accepted: u64,
}

impl Accumulators {
    fn new(slots: usize, states: usize) -> Self {
        Accumulators {
            states,
            a: vec![0.0; slots * states],
            a_w: vec![0.0; slots * states],
            a_ww: vec![0.0; slots * states],
            b: vec![0.0; states],
            b_w: vec![0.0; states],
            u_min: vec![f64::INFINITY; slots],
            u_max: vec![f64::NEG_INFINITY; slots],
            live: vec![0; slots],
            accepted: 0,
        }
    }

    pub fn merge(&mut self, other: &Accumulators) {
        let add = |x: &mut [f64], y: &[f64]| x.iter_mut().zip(y).for_each(|(a, b)| *a += b);
        add(&mut self.a, &other.a);
        add(&mut self.a_w, &other.a_w);
        add(&mut self.a_ww, &other.a_ww);
        add(&mut self.b, &other.b);
        add(&mut self.b_w, &other.b_w);
        self.u_min.iter_mut().zip(&other.u_min).for_each(|(a, b)| *a = a.min(*b));
        self.u_max.iter_mut().zip(&other.u_max).for_each(|(a, b)| *a = a.max(*b));
        self.live.iter_mut().zip(&other.live).for_each(|(a, b)| *a += b);
        self.accepted += other.accepted;
    }

    pub fn a(&self, j: usize, t: usize) -> f64 {
        self.a[j * self.states + t]
    }

    pub fn b(&self, t: usize) -> f64 {
        self.b[t]
    }

    pub fn accepted(&self) -> u64 {
        self.accepted
    }

    pub fn weight_sum(&self) -> f64 {
        self.b.iter().sum()
    }

    /// `Ê[U_j | x_t, x_e]`, undefined when `B(x_t) = 0`.
    pub fn cond(&self, j: usize, t: usize) -> Option<f64> {
        (self.b[t] > 0.0).then(|| self.a(j, t) / self.b[t])
    }

    /// `Ê[U_j | x_e] = Σ_t A / Σ_t B`.
    pub fn uncond(&self, j: usize) -> f64 {
        let row = &self.a[j * self.states..(j + 1) * self.states];
        row.iter().sum::<f64>() / self.weight_sum()
    }

    /// Estimated `∂P(x_t | x_e)/∂θ_j` and its delta-method standard error.
    fn derivative(&self, j: usize, t: usize) -> Option<(f64, f64)> {
        if self.b[t] <= 0.0 {
            return None;
        }
        // skipped samples have U = 0, so U is constant when it was never
        // evaluated or was evaluated on every sample with a single value
        let constant = self.live[j] == 0 || (self.live[j] == self.accepted && self.u_min[j] == self.u_max[j]);
        if constant {
            return Some((0.0, 0.0));
        }
        let w = self.weight_sum();
        let idx = j * self.states + t;
        let row = j * self.states..(j + 1) * self.states;
        let a = self.a[idx] / w;
        let b = self.b[t] / w;
        let c = self.a[row.clone()].iter().sum::<f64>() / w;
        let value = a - b * c;

        // influence of sample i: ψ = I_t(u − c) − b·u + (2bc − a)
        let k = 2.0 * b * c - a;
        let (alpha, beta) = (1.0 - b, k - c);
        let (t2, t1, t0) = (self.a_ww[idx], self.a_w[idx], self.b_w[t]);
        let s2: f64 = self.a_ww[row.clone()].iter().sum();
        let s1: f64 = self.a_w[row].iter().sum();
        let s0: f64 = self.b_w.iter().sum();
        let inside = alpha * alpha * t2 + 2.0 * alpha * beta * t1 + beta * beta * t0;
        let outside = b * b * (s2 - t2) - 2.0 * b * k * (s1 - t1) + k * k * (s0 - t0);
        let se = ((inside + outside).max(0.0)).sqrt() / w;
        Some((value, se))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimatedEntry {
    pub param: ParamIndex,
    pub target_state: String,
    /// `None` when no weight fell on the target state.
    pub value: Option<f64>,
    pub std_error: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimatedReport {
    pub scenario: Scenario,
    pub config: SamplerConfig,
    pub accepted: u64,
    pub weight_sum: f64,
    pub target_states: Vec<String>,
    /// `B(x_t) / Σ B`
    pub target_distribution: Vec<f64>,
    pub entries: Vec<EstimatedEntry>,
    pub frozen: Vec<ParamIndex>,
    pub node_max: BTreeMap<String, NodeMax>,
}

impl EstimatedReport {
    pub fn get(&self, param: &ParamIndex, target_state: &str) -> Option<&EstimatedEntry> {
        self.entries
            .iter()
            .find(|e| &e.param == param && e.target_state == target_state)
    }
}

struct Plan<'a> {
    net: &'a Network,
    evidence: Vec<Option<usize>>,
    target: usize,
    offsets: Vec<usize>,
    slots: usize,
    frozen: Vec<bool>,
}

impl Plan<'_> {
    fn chunk(&self, cfg: &SamplerConfig, c: u64) -> Accumulators {
        let states = self.net.card(self.target);
        let mut acc = Accumulators::new(self.slots, states);
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(c);
        let start = c * CHUNK;
        let end = (start + CHUNK).min(cfg.sample_count);
        let mut x = vec![0; self.net.len()];
        for _ in start..end {
            let w = draw_into(self.net, &self.evidence, cfg.method, &mut rng, &mut x);
            if w <= 0.0 {
                continue;
            }
            acc.accepted += 1;
            let t = x[self.target];
            acc.b[t] += w;
            acc.b_w[t] += w * w;
            for i in 0..self.net.len() {
                let cfg_i = self.net.config_of(i, &x);
                for k in self.live_slots(i, cfg_i) {
                    let j = self.offsets[i] + k;
                    if self.frozen[j] {
                        continue;
                    }
                    let u = self.net.u_at(i, k, x[i], cfg_i);
                    acc.live[j] += 1;
                    acc.u_min[j] = acc.u_min[j].min(u);
                    acc.u_max[j] = acc.u_max[j].max(u);
                    let idx = j * states + t;
                    acc.a[idx] += w * u;
                    acc.a_w[idx] += w * w * u;
                    acc.a_ww[idx] += w * w * u * u;
                }
            }
        }
        acc
    }

    /// Slots whose U can be nonzero under parent configuration `cfg`.
    fn live_slots(&self, i: usize, cfg: usize) -> std::ops::Range<usize> {
        match self.net.parameterization(i) {
            crate::model::Parameterization::Table(_) => {
                let card = self.net.card(i);
                cfg * card..(cfg + 1) * card
            }
            crate::model::Parameterization::NoisyOr(_) => 0..self.net.param_count(i),
        }
    }
}

/// Runs the sampler and returns the raw accumulators.
pub fn accumulate(net: &Network, sc: &Scenario, cfg: &SamplerConfig) -> Result<Accumulators> {
    Ok(run(net, sc, cfg)?.1)
}

fn run<'a>(net: &'a Network, sc: &Scenario, cfg: &SamplerConfig) -> Result<(Plan<'a>, Accumulators)> {
    if cfg.sample_count == 0 {
        return Err(Error::InvalidConfig("sample_count must be at least 1".into()));
    }
    let (evidence, target) = sc.resolve(net)?;
    let mut offsets = Vec::with_capacity(net.len());
    let mut slots = 0;
    for i in 0..net.len() {
        offsets.push(slots);
        slots += net.param_count(i);
    }
    let frozen = net.slots().map(|(i, k)| net.is_frozen(i, k)).collect();
    let plan = Plan {
        net,
        evidence,
        target,
        offsets,
        slots,
        frozen,
    };
    let chunks = cfg.sample_count.div_ceil(CHUNK);
    let parts: Vec<Accumulators> = (0..chunks).into_par_iter().map(|c| plan.chunk(cfg, c)).collect();
    let mut total = Accumulators::new(slots, net.card(target));
    for p in &parts {
        total.merge(p);
    }
    if total.accepted == 0 {
        return Err(Error::NoAcceptedSamples {
            method: cfg.method.name().into(),
            count: cfg.sample_count,
        });
    }
    Ok((plan, total))
}

/// Sampling estimate of every non-frozen sensitivity with standard errors.
pub fn estimate_sensitivities(net: &Network, sc: &Scenario, cfg: &SamplerConfig) -> Result<EstimatedReport> {
    let (plan, acc) = run(net, sc, cfg)?;
    let states = net.variable(plan.target).states.clone();
    let w = acc.weight_sum();
    let mut entries = Vec::new();
    let mut frozen = Vec::new();
    for (i, k) in net.slots() {
        let j = plan.offsets[i] + k;
        let param = net.param_index(i, k);
        if plan.frozen[j] {
            frozen.push(param);
            continue;
        }
        for (t, state) in states.iter().enumerate() {
            let est = acc.derivative(j, t);
            entries.push(EstimatedEntry {
                param: param.clone(),
                target_state: state.clone(),
                value: est.map(|e| e.0),
                std_error: est.map(|e| e.1),
            });
        }
    }
    let mut node_max: BTreeMap<String, NodeMax> = BTreeMap::new();
    for e in &entries {
        let Some(v) = e.value else { continue };
        let better = node_max.get(&e.param.node).is_none_or(|m| v.abs() > m.value);
        if better {
            node_max.insert(
                e.param.node.clone(),
                NodeMax {
                    value: v.abs(),
                    param: e.param.clone(),
                    target_state: e.target_state.clone(),
                },
            );
        }
    }
    Ok(EstimatedReport {
        scenario: sc.clone(),
        config: *cfg,
        accepted: acc.accepted,
        weight_sum: w,
        target_distribution: acc.b.iter().map(|b| b / w).collect(),
        target_states: states,
        entries,
        frozen,
        node_max,
    })
}
