//! d-separation by reachability over active trails.

/// Returns every node d-connected to `source` given `observed`. Nodes in
/// `observed` are never reported. `parents`/`children` describe a DAG.
pub(crate) fn reachable(
    parents: &[Vec<usize>],
    children: &[Vec<usize>],
    source: usize,
    observed: &[bool],
) -> Vec<bool> {
    let n = parents.len();
    // ancestors of the observed set, observed nodes included
    let mut anc = vec![false; n];
    let mut stack: Vec<usize> = (0..n).filter(|&i| observed[i]).collect();
    while let Some(v) = stack.pop() {
        if anc[v] {
            continue;
        }
        anc[v] = true;
        stack.extend(parents[v].iter().copied());
    }

    const UP: usize = 0; // arrived from a child
    const DOWN: usize = 1; // arrived from a parent
    let mut visited = vec![[false; 2]; n];
    let mut reach = vec![false; n];
    let mut queue = vec![(source, UP)];
    while let Some((v, dir)) = queue.pop() {
        if visited[v][dir] {
            continue;
        }
        visited[v][dir] = true;
        if !observed[v] {
            reach[v] = true;
        }
        if dir == UP && !observed[v] {
            queue.extend(parents[v].iter().map(|&p| (p, UP)));
            queue.extend(children[v].iter().map(|&c| (c, DOWN)));
        } else if dir == DOWN {
            if !observed[v] {
                queue.extend(children[v].iter().map(|&c| (c, DOWN)));
            }
            if anc[v] {
                queue.extend(parents[v].iter().map(|&p| (p, UP)));
            }
        }
    }
    reach
}

#[cfg(test)]
mod tests {
    use super::*;

    fn graph(n: usize, edges: &[(usize, usize)]) -> (Vec<Vec<usize>>, Vec<Vec<usize>>) {
        let mut p = vec![Vec::new(); n];
        let mut c = vec![Vec::new(); n];
        for &(a, b) in edges {
            p[b].push(a);
            c[a].push(b);
        }
        (p, c)
    }

    #[test]
    fn chain_blocked_by_middle() {
        let (p, c) = graph(3, &[(0, 1), (1, 2)]);
        let r = reachable(&p, &c, 0, &[false, true, false]);
        assert_eq!(r, vec![true, false, false]);
        let r = reachable(&p, &c, 0, &[false, false, false]);
        assert_eq!(r, vec![true, true, true]);
    }

    #[test]
    fn collider_opened_by_descendant() {
        // 0 -> 2 <- 1, 2 -> 3
        let (p, c) = graph(4, &[(0, 2), (1, 2), (2, 3)]);
        assert!(!reachable(&p, &c, 0, &[false; 4])[1]);
        assert!(reachable(&p, &c, 0, &[false, false, false, true])[1]);
        assert!(reachable(&p, &c, 0, &[false, false, true, false])[1]);
    }
}
