//! Dinic max-flow, used to find minimum vertex cuts between start and end.

use std::collections::VecDeque;

pub const INF: u64 = u64::MAX / 4;

#[derive(Debug, Clone)]
struct Edge {
    to: usize,
    cap: u64,
}

#[derive(Debug, Clone)]
pub struct FlowNetwork {
    edges: Vec<Edge>,
    adj: Vec<Vec<usize>>,
}

impl FlowNetwork {
    pub fn new(nodes: usize) -> Self {
        FlowNetwork {
            edges: Vec::new(),
            adj: vec![Vec::new(); nodes],
        }
    }

    pub fn add_edge(&mut self, from: usize, to: usize, cap: u64) {
        self.adj[from].push(self.edges.len());
        self.edges.push(Edge { to, cap });
        self.adj[to].push(self.edges.len());
        self.edges.push(Edge { to: from, cap: 0 });
    }

    fn levels(&self, source: usize) -> Vec<usize> {
        let mut level = vec![usize::MAX; self.adj.len()];
        level[source] = 0;
        let mut queue = VecDeque::from([source]);
        while let Some(v) = queue.pop_front() {
            for &e in &self.adj[v] {
                let Edge { to, cap } = self.edges[e];
                if cap > 0 && level[to] == usize::MAX {
                    level[to] = level[v] + 1;
                    queue.push_back(to);
                }
            }
        }
        level
    }

    fn augment(
        &mut self,
        v: usize,
        sink: usize,
        pushed: u64,
        level: &[usize],
        iter: &mut [usize],
    ) -> u64 {
        if v == sink {
            return pushed;
        }
        while iter[v] < self.adj[v].len() {
            let e = self.adj[v][iter[v]];
            let Edge { to, cap } = self.edges[e];
            if cap > 0 && level[to] == level[v] + 1 {
                let got = self.augment(to, sink, pushed.min(cap), level, iter);
                if got > 0 {
                    self.edges[e].cap -= got;
                    self.edges[e ^ 1].cap += got;
                    return got;
                }
            }
            iter[v] += 1;
        }
        0
    }

    /// Saturates the network; returns the flow value (capped near `INF`).
    pub fn max_flow(&mut self, source: usize, sink: usize) -> u64 {
        let mut flow = 0u64;
        loop {
            let level = self.levels(source);
            if level[sink] == usize::MAX {
                return flow;
            }
            let mut iter = vec![0; self.adj.len()];
            loop {
                let f = self.augment(source, sink, INF, &level, &mut iter);
                if f == 0 {
                    break;
                }
                flow = flow.saturating_add(f);
                if flow >= INF {
                    return flow;
                }
            }
        }
    }

    /// Nodes reachable from `source` in the residual network. After
    /// `max_flow` this is the source side of a minimum cut.
    pub fn source_side(&self, source: usize) -> Vec<bool> {
        self.levels(source)
            .into_iter()
            .map(|l| l != usize::MAX)
            .collect()
    }
}
