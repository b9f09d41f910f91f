use std::collections::HashMap;

use super::{CausalDiagram, GraphError, NodeId};

/// Dense adjacency view of a diagram. Each bidirected edge `u <-> v` becomes a
/// hidden vertex `h` with `u <- h -> v`; hidden vertices sit after the real
/// ones and never appear in results.
pub(crate) struct Indexed {
    names: Vec<NodeId>,
    index: HashMap<NodeId, usize>,
    parents: Vec<Vec<usize>>,
    children: Vec<Vec<usize>>,
}

impl Indexed {
    pub(crate) fn build(d: &CausalDiagram) -> Result<Self, GraphError> {
        let names: Vec<NodeId> = d.roles.keys().cloned().collect();
        let index: HashMap<NodeId, usize> = names
            .iter()
            .cloned()
            .enumerate()
            .map(|(i, n)| (n, i))
            .collect();
        let n = names.len() + d.bidirected.len();
        let mut parents = vec![Vec::new(); n];
        let mut children = vec![Vec::new(); n];
        let find = |v: &NodeId| {
            index
                .get(v)
                .copied()
                .ok_or_else(|| GraphError::UnknownNode(v.clone()))
        };
        for (a, b) in &d.directed {
            let (a, b) = (find(a)?, find(b)?);
            children[a].push(b);
            parents[b].push(a);
        }
        for (k, (a, b)) in d.bidirected.iter().enumerate() {
            let h = names.len() + k;
            for v in [find(a)?, find(b)?] {
                children[h].push(v);
                parents[v].push(h);
            }
        }
        Ok(Indexed {
            names,
            index,
            parents,
            children,
        })
    }

    pub(crate) fn index_of(&self, v: &NodeId) -> Option<usize> {
        self.index.get(v).copied()
    }

    /// Bayes-ball reachability: every vertex with an active trail from `x`
    /// given `z`.
    fn reachable(&self, x: &[usize], z: &[usize]) -> Vec<bool> {
        let n = self.parents.len();
        let mut in_z = vec![false; n];
        for &v in z {
            in_z[v] = true;
        }
        // Ancestors of z (inclusive) are where colliders open.
        let mut anc_z = in_z.clone();
        let mut stack: Vec<usize> = z.to_vec();
        while let Some(v) = stack.pop() {
            for &p in &self.parents[v] {
                if !anc_z[p] {
                    anc_z[p] = true;
                    stack.push(p);
                }
            }
        }

        // Visited flags per (vertex, direction); direction 0 = arrived from a
        // child (moving up), 1 = arrived from a parent (moving down).
        let mut visited = vec![[false; 2]; n];
        let mut reach = vec![false; n];
        let mut stack: Vec<(usize, usize)> = x.iter().map(|&v| (v, 0)).collect();
        while let Some((v, dir)) = stack.pop() {
            if visited[v][dir] {
                continue;
            }
            visited[v][dir] = true;
            if !in_z[v] {
                reach[v] = true;
            }
            if dir == 0 {
                if !in_z[v] {
                    stack.extend(self.parents[v].iter().map(|&p| (p, 0)));
                    stack.extend(self.children[v].iter().map(|&c| (c, 1)));
                }
            } else {
                if !in_z[v] {
                    stack.extend(self.children[v].iter().map(|&c| (c, 1)));
                }
                if anc_z[v] {
                    stack.extend(self.parents[v].iter().map(|&p| (p, 0)));
                }
            }
        }
        reach
    }

    pub(crate) fn separated(&self, x: &[usize], y: &[usize], z: &[usize]) -> bool {
        let reach = self.reachable(x, z);
        !y.iter().any(|&v| reach[v])
    }

    #[allow(dead_code)]
    pub(crate) fn name(&self, i: usize) -> &NodeId {
        &self.names[i]
    }
}
