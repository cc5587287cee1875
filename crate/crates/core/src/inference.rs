//! Exact inference over a junction tree.
//!
//! The moral graph is triangulated with a min-fill elimination order, the
//! maximal elimination cliques are joined by a maximum-weight spanning tree
//! over separator sizes, and each node's local distribution is multiplied
//! into the smallest clique containing its family. Queries run one Hugin
//! collect/distribute pass over a fresh copy of the clique potentials.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::factor::Factor;
use crate::model::Network;

/// Observed values `X_e = x_e`, by variable and state name.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Evidence(pub BTreeMap<String, String>);

impl Evidence {
    pub fn new() -> Self {
        Evidence::default()
    }

    pub fn with(mut self, var: &str, state: &str) -> Self {
        self.0.insert(var.to_string(), state.to_string());
        self
    }

    /// Parses `VAR=state,VAR=state`. An empty string is empty evidence.
    pub fn parse(text: &str) -> Result<Self> {
        let mut out = BTreeMap::new();
        for item in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            let (var, state) = item
                .split_once('=')
                .ok_or_else(|| Error::Format(format!("evidence item `{item}` is not VAR=state")))?;
            let (var, state) = (var.trim(), state.trim());
            if out.insert(var.to_string(), state.to_string()).is_some() {
                return Err(Error::Format(format!("evidence names `{var}` twice")));
            }
        }
        Ok(Evidence(out))
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, var: &str) -> bool {
        self.0.contains_key(var)
    }

    /// Per-variable observed state index.
    pub fn resolve(&self, net: &Network) -> Result<Vec<Option<usize>>> {
        let mut out = vec![None; net.len()];
        for (var, state) in &self.0 {
            let i = net.var_index(var)?;
            out[i] = Some(net.state_index(i, state)?);
        }
        Ok(out)
    }
}

/// `P(X_s, X_c(s) | evidence)` laid out like the node's table,
/// `probs[cfg * card + state]`.
#[derive(Clone, Debug, PartialEq)]
pub struct FamilyPosterior {
    pub node: String,
    pub card: usize,
    pub probs: Vec<f64>,
}

impl FamilyPosterior {
    pub fn get(&self, state: usize, cfg: usize) -> f64 {
        self.probs[cfg * self.card + state]
    }
}

/// A compiled junction tree. Immutable after construction; queries only
/// touch per-call scratch potentials.
#[derive(Debug)]
pub struct InferenceContext {
    net: Network,
    cliques: Vec<Vec<usize>>,
    /// Tree parent of each clique; `None` for the root.
    tree_parent: Vec<Option<usize>>,
    separators: Vec<Vec<usize>>,
    /// Cliques in breadth-first order from the root.
    order: Vec<usize>,
    initial: Vec<Factor>,
    /// Clique holding each node's family.
    home: Vec<usize>,
    passes: AtomicUsize,
}

impl Clone for InferenceContext {
    fn clone(&self) -> Self {
        InferenceContext {
            net: self.net.clone(),
            cliques: self.cliques.clone(),
            tree_parent: self.tree_parent.clone(),
            separators: self.separators.clone(),
            order: self.order.clone(),
            initial: self.initial.clone(),
            home: self.home.clone(),
            passes: AtomicUsize::new(self.passes()),
        }
    }
}

pub(crate) struct Calibrated {
    beliefs: Vec<Factor>,
}

/// Builds the junction tree for `net`.
pub fn compile(net: &Network) -> InferenceContext {
    InferenceContext::new(net)
}

impl InferenceContext {
    pub fn new(net: &Network) -> Self {
        let n = net.len();
        let mut adj: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
        for i in 0..n {
            let family: Vec<usize> = std::iter::once(i).chain(net.parents(i).iter().copied()).collect();
            for &a in &family {
                for &b in &family {
                    if a != b {
                        adj[a].insert(b);
                    }
                }
            }
        }

        let cliques = eliminate_min_fill(adj);
        let (tree_parent, order) = spanning_tree(&cliques);
        let separators = (0..cliques.len())
            .map(|c| match tree_parent[c] {
                Some(p) => intersect(&cliques[c], &cliques[p]),
                None => Vec::new(),
            })
            .collect();

        let mut initial: Vec<Factor> = cliques
            .iter()
            .map(|c| Factor::ones(c.clone(), c.iter().map(|&v| net.card(v)).collect()))
            .collect();
        let mut home = vec![0; n];
        for i in 0..n {
            let mut family: Vec<usize> = std::iter::once(i).chain(net.parents(i).iter().copied()).collect();
            family.sort_unstable();
            let c = (0..cliques.len())
                .filter(|&c| is_subset(&family, &cliques[c]))
                .min_by_key(|&c| (cliques[c].len(), c))
                .expect("every family is covered by a clique");
            home[i] = c;
            initial[c].mul_assign_sub(&local_factor(net, i, &family));
        }

        InferenceContext {
            net: net.clone(),
            cliques,
            tree_parent,
            separators,
            order,
            initial,
            home,
            passes: AtomicUsize::new(0),
        }
    }

    pub fn network(&self) -> &Network {
        &self.net
    }

    pub fn cliques(&self) -> &[Vec<usize>] {
        &self.cliques
    }

    /// Tree edges as `(child, parent)` clique index pairs.
    pub fn tree_edges(&self) -> Vec<(usize, usize)> {
        self.tree_parent
            .iter()
            .enumerate()
            .filter_map(|(c, p)| p.map(|p| (c, p)))
            .collect()
    }

    /// Number of propagation passes issued so far.
    pub fn passes(&self) -> usize {
        self.passes.load(Ordering::Relaxed)
    }

    pub(crate) fn propagate(&self, evidence: &[Option<usize>]) -> Result<Calibrated> {
        self.passes.fetch_add(1, Ordering::Relaxed);
        let mut pot = self.initial.clone();
        for (v, s) in evidence.iter().enumerate() {
            if let Some(s) = *s {
                for f in pot.iter_mut() {
                    f.observe(v, s);
                }
            }
        }
        let mut upward: Vec<Option<Factor>> = vec![None; pot.len()];
        for &c in self.order.iter().rev() {
            if let Some(p) = self.tree_parent[c] {
                let msg = pot[c].marginalize(&self.separators[c]);
                pot[p].mul_assign_sub(&msg);
                upward[c] = Some(msg);
            }
        }
        for &c in &self.order {
            if let Some(p) = self.tree_parent[c] {
                let mut msg = pot[p].marginalize(&self.separators[c]);
                msg.div_assign_sub(upward[c].as_ref().expect("collected"));
                pot[c].mul_assign_sub(&msg);
            }
        }
        let z = pot[self.order[0]].sum();
        if !(z > 0.0 && z.is_finite()) {
            return Err(Error::ZeroProbabilityEvidence);
        }
        for f in &mut pot {
            let s = f.sum();
            if s > 0.0 {
                f.scale(1.0 / s);
            }
        }
        Ok(Calibrated { beliefs: pot })
    }

    pub(crate) fn marginal_from(&self, cal: &Calibrated, target: usize) -> Vec<f64> {
        cal.beliefs[self.home[target]].marginalize(&[target]).values
    }

    pub(crate) fn families_from(&self, cal: &Calibrated) -> Vec<FamilyPosterior> {
        (0..self.net.len())
            .map(|i| {
                let mut family: Vec<usize> =
                    std::iter::once(i).chain(self.net.parents(i).iter().copied()).collect();
                family.sort_unstable();
                let m = cal.beliefs[self.home[i]].marginalize(&family);
                let card = self.net.card(i);
                let mut probs = vec![0.0; self.net.config_count(i) * card];
                let pos_self = family.binary_search(&i).expect("member");
                let parent_pos: Vec<usize> = self
                    .net
                    .parents(i)
                    .iter()
                    .map(|p| family.binary_search(p).expect("member"))
                    .collect();
                for (flat, &v) in m.values.iter().enumerate() {
                    let a = m.assignment(flat);
                    let parent_states: Vec<usize> = parent_pos.iter().map(|&j| a[j]).collect();
                    let cfg = self.net.encode_config(i, &parent_states);
                    probs[cfg * card + a[pos_self]] = v;
                }
                FamilyPosterior {
                    node: self.net.variable(i).name.clone(),
                    card,
                    probs,
                }
            })
            .collect()
    }

    /// Exact `P(X_t | x_e)`.
    pub fn query_marginal(&self, e: &Evidence, target: &str) -> Result<Vec<f64>> {
        let t = self.net.var_index(target)?;
        if e.contains(target) {
            return Err(Error::TargetInEvidence(target.to_string()));
        }
        let ev = e.resolve(&self.net)?;
        let cal = self.propagate(&ev)?;
        Ok(self.marginal_from(&cal, t))
    }

    /// `P(X_s, X_c(s) | x_e)` for every node, in node order.
    pub fn family_posteriors(&self, e: &Evidence) -> Result<Vec<FamilyPosterior>> {
        let ev = e.resolve(&self.net)?;
        let cal = self.propagate(&ev)?;
        Ok(self.families_from(&cal))
    }
}

fn local_factor(net: &Network, i: usize, family: &[usize]) -> Factor {
    let mut f = Factor::ones(family.to_vec(), family.iter().map(|&v| net.card(v)).collect());
    let pos_self = family.binary_search(&i).expect("member");
    let parent_pos: Vec<usize> = net
        .parents(i)
        .iter()
        .map(|p| family.binary_search(p).expect("member"))
        .collect();
    for flat in 0..f.len() {
        let a = f.assignment(flat);
        let parent_states: Vec<usize> = parent_pos.iter().map(|&j| a[j]).collect();
        f.values[flat] = net.local_prob_at(i, a[pos_self], net.encode_config(i, &parent_states));
    }
    f
}

/// Greedy min-fill elimination; returns the maximal elimination cliques,
/// each sorted ascending.
fn eliminate_min_fill(mut adj: Vec<BTreeSet<usize>>) -> Vec<Vec<usize>> {
    let n = adj.len();
    let mut alive: BTreeSet<usize> = (0..n).collect();
    let mut cliques: Vec<Vec<usize>> = Vec::new();
    while let Some(&v) = alive.iter().min_by_key(|&&v| {
        let nb: Vec<usize> = adj[v].iter().copied().collect();
        let mut fill = 0;
        for (a, &x) in nb.iter().enumerate() {
            for &y in &nb[a + 1..] {
                if !adj[x].contains(&y) {
                    fill += 1;
                }
            }
        }
        (fill, nb.len(), v)
    }) {
        let nb: Vec<usize> = adj[v].iter().copied().collect();
        for &x in &nb {
            for &y in &nb {
                if x != y {
                    adj[x].insert(y);
                }
            }
            adj[x].remove(&v);
        }
        let mut clique = nb;
        clique.push(v);
        clique.sort_unstable();
        if !cliques.iter().any(|c| is_subset(&clique, c)) {
            cliques.retain(|c| !is_subset(c, &clique));
            cliques.push(clique);
        }
        alive.remove(&v);
    }
    cliques
}

/// Maximum-weight spanning tree over separator sizes (Kruskal), rooted at
/// clique 0. Disconnected parts are joined through empty separators.
fn spanning_tree(cliques: &[Vec<usize>]) -> (Vec<Option<usize>>, Vec<usize>) {
    let m = cliques.len();
    let mut edges: Vec<(usize, usize, usize)> = Vec::new();
    for a in 0..m {
        for b in a + 1..m {
            edges.push((intersect(&cliques[a], &cliques[b]).len(), a, b));
        }
    }
    edges.sort_by(|x, y| y.0.cmp(&x.0).then((x.1, x.2).cmp(&(y.1, y.2))));
    let mut uf: Vec<usize> = (0..m).collect();
    fn find(uf: &mut [usize], x: usize) -> usize {
        let mut r = x;
        while uf[r] != r {
            r = uf[r];
        }
        let mut y = x;
        while uf[y] != r {
            let next = uf[y];
            uf[y] = r;
            y = next;
        }
        r
    }
    let mut nbrs = vec![Vec::new(); m];
    for (_, a, b) in edges {
        let (ra, rb) = (find(&mut uf, a), find(&mut uf, b));
        if ra != rb {
            uf[ra] = rb;
            nbrs[a].push(b);
            nbrs[b].push(a);
        }
    }
    let mut parent = vec![None; m];
    let mut order = Vec::with_capacity(m);
    let mut seen = vec![false; m];
    if m > 0 {
        seen[0] = true;
        order.push(0);
        let mut head = 0;
        while head < order.len() {
            let c = order[head];
            head += 1;
            for &d in &nbrs[c] {
                if !seen[d] {
                    seen[d] = true;
                    parent[d] = Some(c);
                    order.push(d);
                }
            }
        }
    }
    (parent, order)
}

fn intersect(a: &[usize], b: &[usize]) -> Vec<usize> {
    a.iter().filter(|x| b.binary_search(x).is_ok()).copied().collect()
}

fn is_subset(a: &[usize], b: &[usize]) -> bool {
    a.iter().all(|x| b.binary_search(x).is_ok())
}

/// Largest joint state space the enumeration oracle accepts.
pub const ENUMERATION_LIMIT: u128 = 1 << 24;

/// Reference marginal by summing the factored joint over every assignment
/// consistent with the evidence.
pub fn enumerate_oracle(net: &Network, e: &Evidence, target: &str) -> Result<Vec<f64>> {
    let size = net.state_space();
    if size > ENUMERATION_LIMIT {
        return Err(Error::StateSpaceTooLarge {
            size,
            limit: ENUMERATION_LIMIT,
        });
    }
    let t = net.var_index(target)?;
    let ev = e.resolve(net)?;
    let mut out = vec![0.0; net.card(t)];
    for_each_assignment(net, &ev, |a| out[a[t]] += net.joint_prob_at(a));
    let z: f64 = out.iter().sum();
    if z <= 0.0 {
        return Err(Error::ZeroProbabilityEvidence);
    }
    for v in &mut out {
        *v /= z;
    }
    Ok(out)
}

/// Calls `f` on every full assignment agreeing with `fixed`.
pub(crate) fn for_each_assignment(net: &Network, fixed: &[Option<usize>], mut f: impl FnMut(&[usize])) {
    let n = net.len();
    let mut a: Vec<usize> = fixed.iter().map(|s| s.unwrap_or(0)).collect();
    let free: Vec<usize> = (0..n).filter(|&i| fixed[i].is_none()).collect();
    loop {
        f(&a);
        let mut carry = true;
        for &i in free.iter().rev() {
            a[i] += 1;
            if a[i] < net.card(i) {
                carry = false;
                break;
            }
            a[i] = 0;
        }
        if carry {
            break;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{NodeDef, Parameterization, TableParams, Variable};

    fn chain() -> Network {
        let t = |name: &str, parents: &[&str], rows: Vec<Vec<f64>>| NodeDef {
            variable: Variable::new(name, &["t", "f"]),
            parents: parents.iter().map(|s| s.to_string()).collect(),
            params: Parameterization::Table(TableParams { rows }),
        };
        Network::new(vec![
            t("A", &[], vec![vec![0.3, 0.7]]),
            t("B", &["A"], vec![vec![0.9, 0.1], vec![0.2, 0.8]]),
            t("C", &["B"], vec![vec![0.6, 0.4], vec![0.05, 0.95]]),
        ])
        .unwrap()
    }

    #[test]
    fn chain_compiles_to_two_cliques() {
        let ctx = compile(&chain());
        let mut cliques = ctx.cliques().to_vec();
        cliques.sort();
        assert_eq!(cliques, vec![vec![0, 1], vec![1, 2]]);
        assert_eq!(ctx.tree_edges().len(), 1);
    }

    #[test]
    fn single_node_is_one_clique() {
        let net = Network::new(vec![NodeDef {
            variable: Variable::new("X", &["a", "b", "c"]),
            parents: vec![],
            params: Parameterization::Table(TableParams { rows: vec![vec![1.0, 2.0, 1.0]] }),
        }])
        .unwrap();
        let ctx = compile(&net);
        assert_eq!(ctx.cliques(), &[vec![0]]);
        let m = ctx.query_marginal(&Evidence::new(), "X").unwrap();
        assert_eq!(m, vec![0.25, 0.5, 0.25]);
        assert_eq!(enumerate_oracle(&net, &Evidence::new(), "X").unwrap(), m);
    }

    #[test]
    fn matches_enumeration_on_chain() {
        let net = chain();
        let ctx = compile(&net);
        for ev in [Evidence::new(), Evidence::new().with("C", "t"), Evidence::new().with("A", "f")] {
            for target in ["A", "B", "C"] {
                if ev.contains(target) {
                    continue;
                }
                let jt = ctx.query_marginal(&ev, target).unwrap();
                let or = enumerate_oracle(&net, &ev, target).unwrap();
                for (x, y) in jt.iter().zip(&or) {
                    assert!((x - y).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn target_in_evidence_and_zero_evidence() {
        let ctx = compile(&chain());
        assert_eq!(
            ctx.query_marginal(&Evidence::new().with("A", "t"), "A"),
            Err(Error::TargetInEvidence("A".into()))
        );
        let zero = Network::new(vec![NodeDef {
            variable: Variable::new("X", &["a", "b"]),
            parents: vec![],
            params: Parameterization::Table(TableParams { rows: vec![vec![1.0, 0.0]] }),
        }])
        .unwrap();
        let ctx = compile(&zero);
        assert!(matches!(
            ctx.family_posteriors(&Evidence::new().with("X", "b")),
            Err(Error::ZeroProbabilityEvidence)
        ));
    }

    #[test]
    fn evidence_parsing() {
        let e = Evidence::parse("A=t_A, H=t_H").unwrap();
        assert_eq!(e, Evidence::new().with("A", "t_A").with("H", "t_H"));
        assert!(Evidence::parse("").unwrap().is_empty());
        assert!(Evidence::parse("A").is_err());
        assert!(Evidence::parse("A=x,A=y").is_err());
    }

    #[test]
    fn family_tables_sum_to_one() {
        let ctx = compile(&chain());
        for f in ctx.family_posteriors(&Evidence::new().with("C", "f")).unwrap() {
            assert!((f.probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}
