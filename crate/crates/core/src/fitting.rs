//! Fitting network parameters to directly assessed target distributions.
//!
//! Each assessment contributes `d(P, P*) = Σ_t h(P(x_t | x_e), P*(x_t)) P*(x_t)`
//! for a proper scoring rule. The log rule uses `h = log P* − log P`, so
//! `d` is the divergence of the model from the assessment; the quadratic
//! rule uses `h = P*(1 − P*) + (P − P*)²`. Gradients follow from the
//! per-state sensitivities by the chain rule. Fitting is stochastic
//! gradient descent over assessments with clamping and row rescaling.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::{compile, InferenceContext};
use crate::model::{normalize_row, scale_to_unit, Network, ParamIndex, Parameterization};
use crate::sensitivity::{expectations, Expectations, Scenario};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AssessmentKind {
    #[default]
    Holistic,
    /// A judged local distribution: evidence is the full parent configuration
    /// and the target is the node itself.
    Local,
}

fn unit_weight() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Assessment {
    pub scenario: Scenario,
    /// `P*(x_t | x_e)` by target state name.
    pub assessed: BTreeMap<String, f64>,
    #[serde(default = "unit_weight")]
    pub weight: f64,
    #[serde(default)]
    pub kind: AssessmentKind,
}

impl Assessment {
    pub fn holistic(scenario: Scenario, assessed: &[(&str, f64)], weight: f64) -> Self {
        Assessment {
            scenario,
            assessed: assessed.iter().map(|(s, p)| (s.to_string(), *p)).collect(),
            weight,
            kind: AssessmentKind::Holistic,
        }
    }

    pub fn validate(&self, net: &Network) -> Result<()> {
        self.target_vector(net).map(|_| ())
    }

    /// Assessed distribution in target state order.
    pub fn target_vector(&self, net: &Network) -> Result<Vec<f64>> {
        let (ev, t) = self.scenario.resolve(net)?;
        let bad = |reason: String| Error::InvalidAssessment { index: 0, reason };
        if !(self.weight > 0.0 && self.weight.is_finite()) {
            return Err(bad(format!("weight must be positive, got {}", self.weight)));
        }
        for s in self.assessed.keys() {
            net.state_index(t, s)?;
        }
        let v: Vec<f64> = net
            .variable(t)
            .states
            .iter()
            .map(|s| self.assessed.get(s).copied().unwrap_or(0.0))
            .collect();
        if v.iter().any(|p| !(*p >= 0.0 && p.is_finite())) {
            return Err(bad("assessed probabilities must be nonnegative".into()));
        }
        let total: f64 = v.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(bad(format!("assessed probabilities sum to {total}, not 1")));
        }
        if self.kind == AssessmentKind::Local {
            let parents = net.parents(t);
            let observed: Vec<usize> = (0..net.len()).filter(|&i| ev[i].is_some()).collect();
            let mut expected = parents.to_vec();
            expected.sort_unstable();
            if observed != expected {
                return Err(bad("a local assessment must condition on exactly the target's parents".into()));
            }
        }
        Ok(v)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScoringRule {
    #[serde(rename = "log")]
    Logarithmic,
    #[serde(rename = "quad")]
    Quadratic,
}

impl ScoringRule {
    /// Per-state term `h(P, P*)`.
    pub fn h(self, p: f64, p_star: f64) -> f64 {
        match self {
            ScoringRule::Logarithmic => p_star.ln() - p.ln(),
            ScoringRule::Quadratic => p_star * (1.0 - p_star) + (p - p_star).powi(2),
        }
    }

    pub fn dh_dp(self, p: f64, p_star: f64) -> f64 {
        match self {
            ScoringRule::Logarithmic => -1.0 / p,
            ScoringRule::Quadratic => 2.0 * (p - p_star),
        }
    }
}

impl std::str::FromStr for ScoringRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "log" | "logarithmic" => Ok(ScoringRule::Logarithmic),
            "quad" | "quadratic" => Ok(ScoringRule::Quadratic),
            other => Err(Error::InvalidConfig(format!("unknown scoring rule `{other}`"))),
        }
    }
}

/// `d(P, P*) = Σ_t h(P_t, P*_t) P*_t`; states with `P*_t = 0` contribute nothing.
pub fn score_distance(p: &[f64], p_star: &[f64], rule: ScoringRule) -> Result<f64> {
    if p.len() != p_star.len() {
        return Err(Error::InvalidConfig(format!(
            "distributions over {} and {} states",
            p.len(),
            p_star.len()
        )));
    }
    let mut d = 0.0;
    for (t, (&pt, &qt)) in p.iter().zip(p_star).enumerate() {
        if qt == 0.0 {
            continue;
        }
        if rule == ScoringRule::Logarithmic && pt <= 0.0 {
            return Err(Error::SupportViolation(format!("state {t}")));
        }
        d += rule.h(pt, qt) * qt;
    }
    Ok(d)
}

pub type Gradient = BTreeMap<ParamIndex, f64>;

/// Dense `(node, slot)` indexing over every parameter of a network.
#[derive(Clone, Debug)]
struct Layout {
    offsets: Vec<usize>,
    total: usize,
}

impl Layout {
    fn new(net: &Network) -> Self {
        let mut offsets = Vec::with_capacity(net.len());
        let mut total = 0;
        for i in 0..net.len() {
            offsets.push(total);
            total += net.param_count(i);
        }
        Layout { offsets, total }
    }

    fn at(&self, i: usize, k: usize) -> usize {
        self.offsets[i] + k
    }
}

/// Distance and dense gradient for one assessment.
struct Terms {
    distance: f64,
    grad: Vec<f64>,
}

fn assessment_terms(
    ctx: &InferenceContext,
    layout: &Layout,
    a: &Assessment,
    rule: ScoringRule,
    screen: bool,
) -> Result<Terms> {
    let net = ctx.network();
    let p_star = a.target_vector(net)?;
    let ex = expectations(ctx, &a.scenario, None, screen)?;
    let distance = score_distance(&ex.p_target, &p_star, rule).map_err(|e| match e {
        Error::SupportViolation(_) => {
            let t = ex.target;
            let state = p_star
                .iter()
                .zip(&ex.p_target)
                .position(|(&q, &p)| q > 0.0 && p <= 0.0)
                .map(|s| net.variable(t).states[s].clone())
                .unwrap_or_default();
            Error::SupportViolation(state)
        }
        other => other,
    })?;
    let mut grad = vec![0.0; layout.total];
    for (j, &(i, k)) in ex.slots.iter().enumerate() {
        grad[layout.at(i, k)] = chain_rule(&ex, j, &p_star, rule);
    }
    Ok(Terms { distance, grad })
}

/// `Σ_t h'(P_t) · ∂P_t/∂θ_j · P*_t`.
fn chain_rule(ex: &Expectations, j: usize, p_star: &[f64], rule: ScoringRule) -> f64 {
    ex.derivatives(j)
        .iter()
        .zip(&ex.p_target)
        .zip(p_star)
        .filter(|(_, &q)| q > 0.0)
        .map(|((&dp, &p), &q)| rule.dh_dp(p, q) * dp * q)
        .sum()
}

fn to_named(net: &Network, layout: &Layout, dense: &[f64]) -> Gradient {
    net.slots()
        .filter(|&(i, k)| !net.is_frozen(i, k))
        .map(|(i, k)| (net.param_index(i, k), dense[layout.at(i, k)]))
        .collect()
}

/// Gradient of `d(P(X_t | x_e, θ), P*)` over every non-frozen parameter.
pub fn distance_gradient(net: &Network, a: &Assessment, rule: ScoringRule) -> Result<Gradient> {
    let layout = Layout::new(net);
    let terms = assessment_terms(&compile(net), &layout, a, rule, true)?;
    Ok(to_named(net, &layout, &terms.grad))
}

/// Log-rule gradient as a difference of U expectations: `E[U | x_e]` from the
/// evidence-only pass minus the expectation under the distribution whose
/// target marginal is replaced by the assessment.
pub fn log_gradient_by_expectations(net: &Network, a: &Assessment) -> Result<Gradient> {
    let ctx = compile(net);
    let layout = Layout::new(net);
    let p_star = a.target_vector(net)?;
    let ex = expectations(&ctx, &a.scenario, None, true)?;
    score_distance(&ex.p_target, &p_star, ScoringRule::Logarithmic)?;
    let mut dense = vec![0.0; layout.total];
    for (j, &(i, k)) in ex.slots.iter().enumerate() {
        let reweighted: f64 = ex.cond[j].iter().zip(&p_star).map(|(c, q)| c * q).sum();
        dense[layout.at(i, k)] = ex.uncond[j] - reweighted;
    }
    Ok(to_named(net, &layout, &dense))
}

/// Weighted sum of distances and of their gradients.
pub fn aggregate_objective(net: &Network, assessments: &[Assessment], rule: ScoringRule) -> Result<(f64, Gradient)> {
    let ctx = compile(net);
    let layout = Layout::new(net);
    let (value, dense) = aggregate_dense(&ctx, &layout, assessments, rule, true)?;
    Ok((value, to_named(net, &layout, &dense)))
}

fn aggregate_dense(
    ctx: &InferenceContext,
    layout: &Layout,
    assessments: &[Assessment],
    rule: ScoringRule,
    screen: bool,
) -> Result<(f64, Vec<f64>)> {
    let mut value = 0.0;
    let mut grad = vec![0.0; layout.total];
    for (idx, a) in assessments.iter().enumerate() {
        let t = assessment_terms(ctx, layout, a, rule, screen).map_err(|e| tag(idx, e))?;
        value += a.weight * t.distance;
        for (g, d) in grad.iter_mut().zip(&t.grad) {
            *g += a.weight * d;
        }
    }
    Ok((value, grad))
}

fn tag(index: usize, e: Error) -> Error {
    match e {
        Error::InvalidAssessment { reason, .. } => Error::InvalidAssessment { index, reason },
        other => other,
    }
}

/// Per-assessment (unweighted) distances under the current network.
pub fn assessment_distances(net: &Network, assessments: &[Assessment], rule: ScoringRule) -> Result<Vec<f64>> {
    let ctx = compile(net);
    assessments
        .iter()
        .enumerate()
        .map(|(idx, a)| {
            let p_star = a.target_vector(net).map_err(|e| tag(idx, e))?;
            let p = ctx.query_marginal(&a.scenario.evidence, &a.scenario.target).map_err(|e| tag(idx, e))?;
            score_distance(&p, &p_star, rule).map_err(|e| tag(idx, e))
        })
        .collect()
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioOrder {
    #[default]
    FixedCycle,
    Shuffled,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StepSchedule {
    Constant,
    /// Reject an epoch that raises the objective and halve the step.
    #[default]
    Halving,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub step_size: f64,
    pub max_epochs: usize,
    /// Stop once an accepted epoch changes the objective by less than this
    /// fraction.
    pub convergence_tol: f64,
    /// Total number of runs; run 0 starts from the given network.
    pub restarts: usize,
    pub scenario_order: ScenarioOrder,
    pub step_schedule: StepSchedule,
    pub parameter_floor: f64,
    pub seed: u64,
    /// Skip d-separated parameters when computing gradients.
    pub screening: bool,
    /// Flag assessments whose final distance exceeds this multiple of the median.
    pub outlier_factor: f64,
    /// Absolute distance threshold; overrides `outlier_factor` when set.
    pub outlier_threshold: Option<f64>,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            step_size: 0.01,
            max_epochs: 500,
            convergence_tol: 1e-10,
            restarts: 1,
            scenario_order: ScenarioOrder::FixedCycle,
            step_schedule: StepSchedule::Halving,
            parameter_floor: 1e-6,
            seed: 0,
            screening: true,
            outlier_factor: 3.0,
            outlier_threshold: None,
        }
    }
}

impl FitConfig {
    fn check(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return bad("step_size must be positive");
        }
        if self.max_epochs == 0 || self.restarts == 0 {
            return bad("max_epochs and restarts must be at least 1");
        }
        if !(self.convergence_tol > 0.0 && self.convergence_tol < 1.0) {
            return bad("convergence_tol must lie in (0, 1)");
        }
        if !(self.parameter_floor > 0.0 && self.parameter_floor < 0.5) {
            return bad("parameter_floor must lie in (0, 0.5)");
        }
        if !(self.outlier_factor > 0.0) {
            return bad("outlier_factor must be positive");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub network: Network,
    /// Aggregate objective before the first epoch and after each epoch of the best run.
    pub objective_trace: Vec<f64>,
    pub distances: Vec<f64>,
    pub outliers: Vec<usize>,
    pub best_restart: usize,
    pub restart_objectives: Vec<f64>,
    pub converged: bool,
}

/// Indices whose distance exceeds the absolute threshold, or
/// `factor × median` when no threshold is given.
pub fn flag_outliers(distances: &[f64], factor: f64, threshold: Option<f64>) -> Vec<usize> {
    let cut = match threshold {
        Some(t) => t,
        None => {
            if distances.is_empty() {
                return Vec::new();
            }
            let mut sorted = distances.to_vec();
            sorted.sort_by(f64::total_cmp);
            let n = sorted.len();
            let median = if n % 2 == 1 {
                sorted[n / 2]
            } else {
                0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
            };
            // an all-but-exact fit has median ~0; ignore rounding-level distances
            (factor * median).max(1e-12)
        }
    };
    distances
        .iter()
        .enumerate()
        .filter(|(_, &d)| d > cut)
        .map(|(i, _)| i)
        .collect()
}

/// Applies `θ ← θ − step · g` to non-frozen entries, clamps to the floor and
/// rescales table rows to unit sums.
fn descend(net: &mut Network, layout: &Layout, grad: &[f64], step: f64, floor: f64) {
    for i in 0..net.len() {
        let frozen: Vec<bool> = (0..net.param_count(i)).map(|k| net.is_frozen(i, k)).collect();
        let card = net.card(i);
        let off = layout.offsets[i];
        match net.params_mut(i) {
            Parameterization::Table(t) => {
                for (cfg, row) in t.rows.iter_mut().enumerate() {
                    let mut touched = false;
                    for (s, w) in row.iter_mut().enumerate() {
                        let k = cfg * card + s;
                        let g = grad[off + k];
                        if frozen[k] || g == 0.0 {
                            continue;
                        }
                        *w = (*w - step * g).max(floor);
                        touched = true;
                    }
                    if touched {
                        normalize_row(row);
                    }
                }
            }
            Parameterization::NoisyOr(no) => {
                for k in 0..frozen.len() {
                    let g = grad[off + k];
                    if frozen[k] || g == 0.0 {
                        continue;
                    }
                    let v = if k == 0 { &mut no.base } else { &mut no.inhibitors[k - 1] };
                    *v = (*v - step * g).clamp(floor, 1.0 - floor);
                }
            }
        }
    }
}

/// One full-batch or single-assessment update along a named gradient.
pub fn apply_gradient(net: &Network, grad: &Gradient, step: f64, floor: f64) -> Result<Network> {
    let layout = Layout::new(net);
    let mut dense = vec![0.0; layout.total];
    for (p, g) in grad {
        let (i, k) = net.resolve(p)?;
        dense[layout.at(i, k)] = *g;
    }
    let mut out = net.clone();
    descend(&mut out, &layout, &dense, step, floor);
    Ok(out)
}

/// Result of a single what-if update.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepOutcome {
    pub network: Network,
    pub target_states: Vec<String>,
    pub distribution: Vec<f64>,
    pub distance: f64,
}

/// Moves every relevant parameter once against one assessment's gradient,
/// scaled by `step × weight`.
pub fn gradient_step(net: &Network, a: &Assessment, rule: ScoringRule, step: f64, floor: f64) -> Result<StepOutcome> {
    let layout = Layout::new(net);
    let terms = assessment_terms(&compile(net), &layout, a, rule, true)?;
    let mut next = net.clone();
    descend(&mut next, &layout, &terms.grad, step * a.weight, floor);
    let distribution = compile(&next).query_marginal(&a.scenario.evidence, &a.scenario.target)?;
    let distance = score_distance(&distribution, &a.target_vector(&next)?, rule)?;
    let t = next.var_index(&a.scenario.target)?;
    Ok(StepOutcome {
        target_states: next.variable(t).states.clone(),
        network: next,
        distribution,
        distance,
    })
}

fn objective(net: &Network, assessments: &[Assessment], rule: ScoringRule) -> Result<f64> {
    assessment_distances(net, assessments, rule)
        .map(|ds| ds.iter().zip(assessments).map(|(d, a)| d * a.weight).sum())
}

struct Run {
    network: Network,
    trace: Vec<f64>,
    converged: bool,
}

fn run_once(
    start: Network,
    assessments: &[Assessment],
    rule: ScoringRule,
    cfg: &FitConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Run> {
    let layout = Layout::new(&start);
    let mut current = start;
    let mut obj = objective(&current, assessments, rule)?;
    if !obj.is_finite() {
        return Err(Error::Divergence { epoch: 0, assessment: 0 });
    }
    let mut trace = vec![obj];
    let mut step = cfg.step_size;
    let mut order: Vec<usize> = (0..assessments.len()).collect();
    let mut converged = obj == 0.0;

    for epoch in 1..=cfg.max_epochs {
        if converged {
            break;
        }
        if cfg.scenario_order == ScenarioOrder::Shuffled {
            order.shuffle(rng);
        }
        let mut candidate = current.clone();
        for &idx in &order {
            let a = &assessments[idx];
            let terms = assessment_terms(&compile(&candidate), &layout, a, rule, cfg.screening)
                .map_err(|e| tag(idx, e))?;
            if !terms.distance.is_finite() || terms.grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Divergence { epoch, assessment: idx });
            }
            descend(&mut candidate, &layout, &terms.grad, step * a.weight, cfg.parameter_floor);
        }
        let next = objective(&candidate, assessments, rule)?;
        if !next.is_finite() {
            return Err(Error::Divergence {
                epoch,
                assessment: *order.last().unwrap_or(&0),
            });
        }
        if next <= obj || cfg.step_schedule == StepSchedule::Constant {
            let change = (obj - next).abs() / obj.abs().max(f64::MIN_POSITIVE);
            current = candidate;
            obj = next;
            trace.push(obj);
            if change < cfg.convergence_tol || obj == 0.0 {
                converged = true;
            }
        } else {
            trace.push(obj);
            step *= 0.5;
            if step < cfg.step_size * 1e-12 {
                converged = true;
            }
        }
    }
    Ok(Run {
        network: current,
        trace,
        converged,
    })
}

/// Random multiplicative restart point: every non-frozen entry scaled by
/// `exp(u)`, `u ~ U(-0.5, 0.5)`, then clamped and rescaled.
fn jitter(net: &Network, rng: &mut ChaCha8Rng, floor: f64) -> Network {
    let mut out = net.clone();
    let slots: Vec<(usize, usize)> = net.slots().filter(|&(i, k)| !net.is_frozen(i, k)).collect();
    for (i, k) in slots {
        let factor = (rng.random::<f64>() - 0.5).exp();
        let v = net.param_value(i, k) * factor;
        let v = match net.parameterization(i) {
            Parameterization::Table(_) => v.max(floor),
            Parameterization::NoisyOr(_) => v.clamp(floor, 1.0 - floor),
        };
        out.set_param_unchecked(i, k, v);
    }
    scale_to_unit(&out)
}

/// Stochastic gradient descent over the assessments, best of `restarts` runs.
pub fn fit(net: &Network, assessments: &[Assessment], rule: ScoringRule, cfg: &FitConfig) -> Result<FitResult> {
    cfg.check()?;
    if assessments.is_empty() {
        return Err(Error::InvalidConfig("no assessments to fit".into()));
    }
    let start = scale_to_unit(net);
    let ctx = compile(&start);
    let mut touched = false;
    for (idx, a) in assessments.iter().enumerate() {
        a.validate(&start).map_err(|e| tag(idx, e))?;
        let ex = expectations(&ctx, &a.scenario, None, true).map_err(|e| tag(idx, e))?;
        touched |= !ex.slots.is_empty();
    }
    if !touched {
        return Err(Error::InvalidConfig(
            "no adjustable parameter influences any assessed scenario".into(),
        ));
    }

    let mut best: Option<(usize, Run)> = None;
    let mut restart_objectives = Vec::with_capacity(cfg.restarts);
    for r in 0..cfg.restarts {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(r as u64);
        let init = if r == 0 {
            start.clone()
        } else {
            jitter(&start, &mut rng, cfg.parameter_floor)
        };
        let run = run_once(init, assessments, rule, cfg, &mut rng)?;
        let last = *run.trace.last().expect("non-empty trace");
        restart_objectives.push(last);
        let better = match &best {
            None => true,
            Some((_, b)) => last < *b.trace.last().expect("non-empty trace"),
        };
        if better {
            best = Some((r, run));
        }
    }
    let (best_restart, run) = best.expect("at least one restart");
    let distances = assessment_distances(&run.network, assessments, rule)?;
    let outliers = flag_outliers(&distances, cfg.outlier_factor, cfg.outlier_threshold);
    Ok(FitResult {
        network: run.network,
        objective_trace: run.trace,
        distances,
        outliers,
        best_restart,
        restart_objectives,
        converged: run.converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formats::dyspnea;
    use crate::inference::Evidence;

    fn scenario() -> Scenario {
        Scenario::new(Evidence::new().with("A", "t_A").with("H", "t_H"), "B")
    }

    #[test]
    fn distances_on_a_coin() {
        let p = [0.5, 0.5];
        let q = [0.8, 0.2];
        let log = score_distance(&p, &q, ScoringRule::Logarithmic).unwrap();
        assert!((log - 0.19274475702175753).abs() < 1e-12);
        assert_eq!(score_distance(&q, &q, ScoringRule::Logarithmic).unwrap(), 0.0);
        let quad = score_distance(&p, &q, ScoringRule::Quadratic).unwrap();
        assert!((quad - 0.25).abs() < 1e-12);
        let floor = score_distance(&q, &q, ScoringRule::Quadratic).unwrap();
        assert!((floor - 0.16).abs() < 1e-12);
        assert!((quad - floor - 0.09).abs() < 1e-12);
    }

    #[test]
    fn log_rule_needs_support() {
        assert!(matches!(
            score_distance(&[1.0, 0.0], &[0.5, 0.5], ScoringRule::Logarithmic),
            Err(Error::SupportViolation(_))
        ));
    }

    #[test]
    fn gradient_raises_underestimated_parameter() {
        let net = dyspnea();
        let a = Assessment::holistic(scenario(), &[("t_B", 0.15), ("f_B", 0.85)], 1.0);
        let g = distance_gradient(&net, &a, ScoringRule::Logarithmic).unwrap();
        let key = ParamIndex::table("B", "t_B", &["t_A"]);
        assert!(g[&key] < 0.0);
        let alt = log_gradient_by_expectations(&net, &a).unwrap();
        for (k, v) in &g {
            assert!((v - alt[k]).abs() < 1e-10, "{k}");
        }
    }

    #[test]
    fn self_consistent_assessment_has_zero_gradient() {
        let net = dyspnea();
        let p = compile(&net).query_marginal(&scenario().evidence, "B").unwrap();
        let a = Assessment::holistic(scenario(), &[("t_B", p[0]), ("f_B", p[1])], 1.0);
        for rule in [ScoringRule::Logarithmic, ScoringRule::Quadratic] {
            let g = distance_gradient(&net, &a, rule).unwrap();
            assert!(g.values().all(|v| v.abs() < 1e-10));
        }
    }

    #[test]
    fn aggregate_is_linear_in_weights() {
        let net = dyspnea();
        let a = Assessment::holistic(scenario(), &[("t_B", 0.15), ("f_B", 0.85)], 1.0);
        let (v1, g1) = aggregate_objective(&net, std::slice::from_ref(&a), ScoringRule::Quadratic).unwrap();
        let single = distance_gradient(&net, &a, ScoringRule::Quadratic).unwrap();
        assert_eq!(g1, single);
        let doubled = Assessment { weight: 2.0, ..a };
        let (v2, g2) = aggregate_objective(&net, &[doubled], ScoringRule::Quadratic).unwrap();
        assert_eq!(v2, 2.0 * v1);
        for (k, v) in &g1 {
            assert_eq!(g2[k], 2.0 * v);
        }
        let (v0, g0) = aggregate_objective(&net, &[], ScoringRule::Quadratic).unwrap();
        assert_eq!(v0, 0.0);
        assert!(g0.values().all(|v| *v == 0.0));
    }

    #[test]
    fn local_assessment_requires_parent_evidence() {
        let net = dyspnea();
        let ok = Assessment {
            scenario: Scenario::new(Evidence::new().with("A", "t_A"), "B"),
            assessed: [("t_B".to_string(), 0.1), ("f_B".to_string(), 0.9)].into(),
            weight: 1.0,
            kind: AssessmentKind::Local,
        };
        assert!(ok.validate(&net).is_ok());
        let bad = Assessment {
            scenario: Scenario::new(Evidence::new().with("H", "t_H"), "B"),
            ..ok.clone()
        };
        assert!(bad.validate(&net).is_err());
        let unnormalized = Assessment {
            assessed: [("t_B".to_string(), 0.5)].into(),
            ..ok
        };
        assert!(unnormalized.validate(&net).is_err());
    }

    #[test]
    fn outlier_rule() {
        assert_eq!(flag_outliers(&[1.0, 1.1, 0.9, 10.0], 3.0, None), vec![3]);
        assert_eq!(flag_outliers(&[1.0, 1.1, 0.9, 10.0], 3.0, Some(1.05)), vec![1, 3]);
        assert!(flag_outliers(&[], 3.0, None).is_empty());
    }

    #[test]
    fn fit_is_a_no_op_on_consistent_assessments() {
        let net = dyspnea();
        let p = compile(&net).query_marginal(&scenario().evidence, "B").unwrap();
        let a = Assessment::holistic(scenario(), &[("t_B", p[0]), ("f_B", p[1])], 1.0);
        let r = fit(&net, &[a], ScoringRule::Logarithmic, &FitConfig::default()).unwrap();
        for (i, k) in net.slots() {
            assert!((r.network.param_value(i, k) - net.param_value(i, k)).abs() < 1e-9);
        }
        assert!(r.distances[0] < 1e-12);
    }

    #[test]
    fn gradient_step_moves_toward_assessment() {
        let net = dyspnea();
        let a = Assessment::holistic(scenario(), &[("t_B", 0.15), ("f_B", 0.85)], 1.0);
        let before = score_distance(
            &compile(&net).query_marginal(&scenario().evidence, "B").unwrap(),
            &[0.15, 0.85],
            ScoringRule::Logarithmic,
        )
        .unwrap();
        let out = gradient_step(&net, &a, ScoringRule::Logarithmic, 0.005, 1e-6).unwrap();
        assert!(out.distance < before);
        assert!(out.distribution[0] > 0.0877509649829219);
    }
}
