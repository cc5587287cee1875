#![allow(dead_code)]

use bnsens::model::{NoisyOrParams, TableParams};
use bnsens::{Evidence, Network, NodeDef, Parameterization, Scenario, Variable};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random DAG over at most `max_nodes` variables with 2 or 3 states, at most
/// three parents each and strictly interior parameters. Binary nodes with
/// binary parents are noisy-OR about a quarter of the time.
pub fn random_network(seed: u64, max_nodes: usize) -> Network {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(2..=max_nodes);
    let mut defs: Vec<NodeDef> = Vec::with_capacity(n);
    for i in 0..n {
        let card = rng.random_range(2..=3);
        let states: Vec<String> = (0..card).map(|s| format!("s{s}")).collect();
        let state_refs: Vec<&str> = states.iter().map(String::as_str).collect();
        let variable = Variable::new(format!("V{i}"), &state_refs);
        let mut parents: Vec<usize> = (0..i).filter(|_| rng.random_bool(0.35)).collect();
        while parents.len() > 3 {
            parents.remove(rng.random_range(0..parents.len()));
        }
        let all_binary = card == 2 && parents.iter().all(|&p| defs[p].variable.card() == 2);
        let params = if all_binary && !parents.is_empty() && rng.random_bool(0.25) {
            Parameterization::NoisyOr(NoisyOrParams {
                base: rng.random_range(0.05..0.95),
                inhibitors: parents.iter().map(|_| rng.random_range(0.05..0.95)).collect(),
            })
        } else {
            let configs: usize = parents.iter().map(|&p| defs[p].variable.card()).product();
            let rows = (0..configs)
                .map(|_| {
                    let w: Vec<f64> = (0..card).map(|_| rng.random_range(0.1..1.0)).collect();
                    let total: f64 = w.iter().sum();
                    w.iter().map(|x| x / total).collect()
                })
                .collect();
            Parameterization::Table(TableParams { rows })
        };
        defs.push(NodeDef {
            variable,
            parents: parents.iter().map(|&p| format!("V{p}")).collect(),
            params,
        });
    }
    Network::new(defs).expect("generated network is valid")
}

/// Random target and evidence over the other variables.
pub fn random_scenario(net: &Network, seed: u64) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let target = rng.random_range(0..net.len());
    let mut ev = Evidence::new();
    for i in 0..net.len() {
        if i != target && rng.random_bool(0.3) {
            let v = net.variable(i);
            let s = rng.random_range(0..v.card());
            ev = ev.with(&v.name, &v.states[s]);
        }
    }
    Scenario::new(ev, &net.variable(target).name)
}

/// The bundled example scenario: A = t_A, H = t_H, target B.
pub fn dyspnea_scenario() -> Scenario {
    Scenario::new(Evidence::new().with("A", "t_A").with("H", "t_H"), "B")
}
