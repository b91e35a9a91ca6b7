//! Tree search: UCT selection, network-guided expansion, exact terminal
//! evaluation, backpropagation, and visit-count policy extraction.
//!
//! Each edge stores a prior `P` (masked network output at expansion time),
//! a visit count `N` and a value sum `W`; `Q = W/N` is the mean of all
//! values backpropagated through the edge. Selection maximizes
//! `Q + c_puct * P * sqrt(N(s)) / (1 + N)`, ties broken by lowest token id.
//!
//! ```
//! use symreg_core::mcts::{search_policy, PolicyMode};
//!
//! let pi = search_policy(&[8, 2], 1.0, PolicyMode::Power).unwrap();
//! assert!((pi[0] - 0.8).abs() < 1e-12 && (pi[1] - 0.2).abs() < 1e-12);
//!
//! // tau below 1 sharpens toward the most-visited token
//! let sharp = search_policy(&[8, 2], 0.25, PolicyMode::Power).unwrap();
//! assert!(sharp[0] > 0.99);
//! ```

use thiserror::Error;

use crate::constraints::{legal_mask, ConstraintConfig};
use crate::expr::{build_tree, Token, Traversal, Vocabulary};
use crate::guidance::PolicyValueModel;
use crate::objective::{optimize_constants, ConstOptOptions, FitMetrics};
use crate::rng::{derive_seed, fnv1a, substream};

#[derive(Clone, Copy, Debug, Default)]
pub struct NodeStats {
    pub prior: f64,
    pub visits: u64,
    pub value_sum: f64,
}

impl NodeStats {
    /// Mean backpropagated value; 0 while unvisited.
    pub fn q(&self) -> f64 {
        if self.visits == 0 {
            0.0
        } else {
            self.value_sum / self.visits as f64
        }
    }
}

/// `Q + c_puct * P * sqrt(parent_N) / (1 + N)`.
pub fn uct(parent_n: u64, child: &NodeStats, c_puct: f64) -> f64 {
    child.q() + c_puct * child.prior * (parent_n as f64).sqrt() / (1.0 + child.visits as f64)
}

#[derive(Clone, Debug)]
struct Edge {
    token: Token,
    stats: NodeStats,
    child: Option<usize>,
}

#[derive(Clone, Debug)]
struct Node {
    edges: Vec<Edge>,
    expanded: bool,
    visits: u64,
    terminal_reward: Option<f64>,
}

impl Node {
    fn new() -> Self {
        Self { edges: Vec::new(), expanded: false, visits: 0, terminal_reward: None }
    }
}

/// Per-simulation record emitted when tracing is on: the edges traversed
/// (as token ids) and the value that was backpropagated.
#[derive(Clone, Debug)]
pub struct SimTrace {
    pub path: Vec<usize>,
    pub value: f64,
}

/// Best complete expression encountered anywhere in the simulations.
#[derive(Clone, Debug)]
pub struct TerminalRecord {
    pub ids: Vec<usize>,
    pub constants: Vec<f64>,
    pub metrics: FitMetrics,
}

/// Everything a simulation needs besides the tree: the data, the objective
/// settings, the constraint set, and the seed all constant-fitting
/// randomness derives from.
pub struct SearchContext<'a> {
    pub vocab: &'a Vocabulary,
    pub x: &'a [Vec<f64>],
    pub y: &'a [f64],
    pub lambda: f64,
    pub const_opt: ConstOptOptions,
    pub constraints: ConstraintConfig,
    pub seed: u64,
}

#[derive(Debug, Error)]
pub enum MctsError {
    #[error("search policy requires at least one positive count")]
    AllZeroCounts,
    #[error("temperature must be positive, got {0}")]
    BadTemperature(f64),
}

pub struct SearchTree {
    nodes: Vec<Node>,
    root: usize,
    root_traversal: Traversal,
    c_puct: f64,
    pub best_terminal: Option<TerminalRecord>,
    pub traces: Option<Vec<SimTrace>>,
}

impl SearchTree {
    pub fn new(max_length: usize, c_puct: f64, trace: bool) -> Self {
        Self {
            nodes: vec![Node::new()],
            root: 0,
            root_traversal: Traversal::new(max_length),
            c_puct,
            best_terminal: None,
            traces: if trace { Some(Vec::new()) } else { None },
        }
    }

    pub fn root_traversal(&self) -> &Traversal {
        &self.root_traversal
    }

    fn select_edge(&self, node: usize) -> Option<usize> {
        let n = &self.nodes[node];
        let parent_n = n.visits;
        let mut best: Option<(usize, f64)> = None;
        for (i, e) in n.edges.iter().enumerate() {
            let score = uct(parent_n, &e.stats, self.c_puct);
            match best {
                Some((_, b)) if score <= b => {}
                _ => best = Some((i, score)),
            }
        }
        best.map(|(i, _)| i)
    }

    fn terminal_value(&mut self, node: usize, traversal: &Traversal, ctx: &SearchContext) -> f64 {
        if let Some(r) = self.nodes[node].terminal_reward {
            return r;
        }
        let tree = build_tree(traversal).expect("terminal traversal is complete");
        let seed = derive_seed(ctx.seed, "constopt", fnv1a(&ids_bytes(traversal)));
        let mut rng = substream(seed, "restarts", 0);
        let (constants, metrics) =
            optimize_constants(&tree, ctx.x, ctx.y, ctx.lambda, &ctx.const_opt, &mut rng);
        let r = metrics.reward;
        self.nodes[node].terminal_reward = Some(r);
        let better = self
            .best_terminal
            .as_ref()
            .map(|b| metrics.reward > b.metrics.reward)
            .unwrap_or(true);
        if better {
            self.best_terminal =
                Some(TerminalRecord { ids: traversal.ids(), constants, metrics });
        }
        r
    }

    /// One simulation from the current root: descend by UCT to an
    /// unexpanded or complete node, evaluate it (network value for an
    /// incomplete leaf, exact reward for a complete expression), and
    /// backpropagate along the traversed path.
    pub fn simulate_once(&mut self, net: &PolicyValueModel, ctx: &SearchContext) -> f64 {
        let mut node = self.root;
        let mut traversal = self.root_traversal.clone();
        let mut path: Vec<(usize, usize)> = Vec::new(); // (node, edge index)

        let value = loop {
            if traversal.is_complete() {
                break self.terminal_value(node, &traversal, ctx);
            }
            if !self.nodes[node].expanded {
                let mask = legal_mask(&traversal, ctx.vocab, &ctx.constraints);
                let out = net.forward(&traversal.ids(), &mask).expect("state fits the model");
                let edges = ctx
                    .vocab
                    .tokens()
                    .iter()
                    .filter(|t| mask[t.id])
                    .map(|&token| Edge {
                        token,
                        stats: NodeStats { prior: out.p[token.id], visits: 0, value_sum: 0.0 },
                        child: None,
                    })
                    .collect();
                let n = &mut self.nodes[node];
                n.edges = edges;
                n.expanded = true;
                break out.v;
            }
            let ei = self.select_edge(node).expect("expanded incomplete node has edges");
            let token = self.nodes[node].edges[ei].token;
            traversal.push(token).expect("selected token is legal");
            let child = match self.nodes[node].edges[ei].child {
                Some(c) => c,
                None => {
                    self.nodes.push(Node::new());
                    let c = self.nodes.len() - 1;
                    self.nodes[node].edges[ei].child = Some(c);
                    c
                }
            };
            path.push((node, ei));
            node = child;
        };

        // every node on the realized path counts this simulation once
        self.nodes[node].visits += 1;
        for &(n, ei) in &path {
            self.nodes[n].visits += 1;
            let s = &mut self.nodes[n].edges[ei].stats;
            s.visits += 1;
            s.value_sum += value;
        }
        if let Some(traces) = &mut self.traces {
            traces.push(SimTrace {
                path: path.iter().map(|&(n, ei)| self.nodes[n].edges[ei].token.id).collect(),
                value,
            });
        }
        value
    }

    /// Runs `n_evaluate` simulations and returns the root visit counts as a
    /// dense vector over the vocabulary.
    pub fn run_simulations(
        &mut self,
        net: &PolicyValueModel,
        ctx: &SearchContext,
        n_evaluate: usize,
    ) -> Vec<u64> {
        assert!(n_evaluate >= 1);
        for _ in 0..n_evaluate {
            self.simulate_once(net, ctx);
        }
        let mut counts = vec![0u64; ctx.vocab.len()];
        for e in &self.nodes[self.root].edges {
            counts[e.token.id] = e.stats.visits;
        }
        counts
    }

    /// Root edge statistics, for inspection and accounting oracles.
    pub fn root_edges(&self) -> Vec<(Token, NodeStats)> {
        self.nodes[self.root].edges.iter().map(|e| (e.token, e.stats)).collect()
    }

    /// Every edge in the tree keyed by its token-id path from the original
    /// (empty) root, for trace-based accounting oracles.
    pub fn all_edges(&self) -> Vec<(Vec<usize>, NodeStats)> {
        let mut out = Vec::new();
        let mut stack: Vec<(usize, Vec<usize>)> = vec![(0, Vec::new())];
        while let Some((node, prefix)) = stack.pop() {
            for e in &self.nodes[node].edges {
                let mut path = prefix.clone();
                path.push(e.token.id);
                out.push((path.clone(), e.stats));
                if let Some(c) = e.child {
                    stack.push((c, path));
                }
            }
        }
        out
    }

    pub fn root_visits(&self) -> u64 {
        self.nodes[self.root].visits
    }

    /// Returns the root to the empty traversal, keeping all accumulated
    /// statistics, so the next episode reuses the tree.
    pub fn reset_root(&mut self, max_length: usize) {
        self.root = 0;
        self.root_traversal = Traversal::new(max_length);
    }

    /// Moves the root one step down the chosen edge, reusing the subtree.
    pub fn advance(&mut self, token: Token) {
        let ei = self.nodes[self.root]
            .edges
            .iter()
            .position(|e| e.token.id == token.id)
            .expect("advance along an existing edge");
        let child = match self.nodes[self.root].edges[ei].child {
            Some(c) => c,
            None => {
                self.nodes.push(Node::new());
                let c = self.nodes.len() - 1;
                self.nodes[self.root].edges[ei].child = Some(c);
                c
            }
        };
        self.root = child;
        self.root_traversal.push(token).expect("advance with a legal token");
    }

    /// Backpropagates the episode's terminal reward along its realized path
    /// (given as token ids from the original empty root).
    pub fn backpropagate_terminal(&mut self, path_ids: &[usize], z: f64) {
        let mut node = 0usize;
        for &id in path_ids {
            self.nodes[node].visits += 1;
            let Some(ei) = self.nodes[node].edges.iter().position(|e| e.token.id == id) else {
                return;
            };
            let s = &mut self.nodes[node].edges[ei].stats;
            s.visits += 1;
            s.value_sum += z;
            match self.nodes[node].edges[ei].child {
                Some(c) => node = c,
                None => return,
            }
        }
        self.nodes[node].visits += 1;
    }
}

fn ids_bytes(t: &Traversal) -> Vec<u8> {
    t.ids().iter().flat_map(|id| (*id as u64).to_le_bytes()).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyMode {
    /// `pi_i ∝ N_i^(1/tau)` — the stated proportionality.
    Power,
    /// The displayed formula `log(N_i^(1/tau)) / sum log(N_j^(1/tau))`,
    /// with counts <= 1 guarded as `log((N_i + 1)^(1/tau))`.
    PaperLog,
}

/// Visit counts to a search policy simplex. Zero exactly where counts are
/// zero; sums to 1.
pub fn search_policy(counts: &[u64], tau: f64, mode: PolicyMode) -> Result<Vec<f64>, MctsError> {
    if tau <= 0.0 {
        return Err(MctsError::BadTemperature(tau));
    }
    if counts.iter().all(|&c| c == 0) {
        return Err(MctsError::AllZeroCounts);
    }
    let inv_tau = 1.0 / tau;
    let weights: Vec<f64> = match mode {
        PolicyMode::Power => {
            let max_ln = counts
                .iter()
                .filter(|&&c| c > 0)
                .map(|&c| (c as f64).ln())
                .fold(f64::NEG_INFINITY, f64::max);
            counts
                .iter()
                .map(|&c| {
                    if c == 0 {
                        0.0
                    } else {
                        (inv_tau * ((c as f64).ln() - max_ln)).exp()
                    }
                })
                .collect()
        }
        PolicyMode::PaperLog => counts
            .iter()
            .map(|&c| {
                if c == 0 {
                    0.0
                } else if c <= 1 {
                    inv_tau * ((c + 1) as f64).ln()
                } else {
                    inv_tau * (c as f64).ln()
                }
            })
            .collect(),
    };
    let sum: f64 = weights.iter().sum();
    Ok(weights.into_iter().map(|w| w / sum).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uct_examples() {
        let child = NodeStats { prior: 0.5, visits: 1, value_sum: 0.2 };
        assert!((uct(4, &child, 1.0) - 0.7).abs() < 1e-12);

        let fresh = NodeStats { prior: 0.3, visits: 0, value_sum: 0.0 };
        assert!((uct(9, &fresh, 2.0) - 2.0 * 0.3 * 3.0).abs() < 1e-12);
        assert_eq!(uct(0, &fresh, 1.0), 0.0);
    }

    #[test]
    fn search_policy_power() {
        let pi = search_policy(&[8, 2], 1.0, PolicyMode::Power).unwrap();
        assert!((pi[0] - 0.8).abs() < 1e-12 && (pi[1] - 0.2).abs() < 1e-12);

        // tau -> 0 sharpens toward the argmax
        let pi = search_policy(&[8, 2], 0.05, PolicyMode::Power).unwrap();
        assert!(pi[0] > 0.999999);

        // zero counts stay exactly zero
        let pi = search_policy(&[0, 3, 1], 1.0, PolicyMode::Power).unwrap();
        assert_eq!(pi[0], 0.0);
        assert!((pi.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn search_policy_paper_log_guard() {
        let pi = search_policy(&[1, 1], 1.0, PolicyMode::PaperLog).unwrap();
        assert!(pi.iter().all(|v| v.is_finite()));
        assert_eq!(pi, vec![0.5, 0.5]);
    }

    #[test]
    fn search_policy_rejects_all_zero() {
        assert!(matches!(
            search_policy(&[0, 0], 1.0, PolicyMode::Power),
            Err(MctsError::AllZeroCounts)
        ));
    }
}
