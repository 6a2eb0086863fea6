//! TreeSearch: rooted gateway/chain trees with hidden integer node values,
//! explored under a connectivity constraint.
//!
//! Value schedules along a root-to-leaf path:
//!
//! * trap gateway: `2`; chain node `j` (1-based, `j = 1..=d_trap`) adds `+1`
//!   for `j <= 6`, then `+1` only when `(j - 6) % 4 == 0`;
//! * good gateway: `1`; chain node `j` (`j = 1..d_good`) has value `1 + 4j`.
//!
//! With these lengths a tree has
//! `1 + r_trap + r_good + r_trap*b*d_trap + r_good*b*(d_good - 1)` nodes and
//! maximum value `1 + 4*(d_good - 1)`.

use std::collections::{BTreeMap, VecDeque};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::query::{InvalidQuery, NodeId};
use crate::rng::rng_from_seed;

pub const TRAP_GATEWAY_VALUE: i64 = 2;
pub const TRAP_MOMENTUM_STEPS: u32 = 6;
pub const TRAP_SPARSE_PERIOD: u32 = 4;
pub const GOOD_GATEWAY_VALUE: i64 = 1;
pub const GOOD_STEP: i64 = 4;
/// Largest value difference across any edge.
pub const MAX_EDGE_DELTA: i64 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum TreeError {
    #[error("at least one gateway is required")]
    NoGateways,
    #[error("fanout must be positive")]
    ZeroFanout,
    #[error("chain depth parameter `{0}` must be at least 2")]
    DepthTooSmall(&'static str),
    #[error("tree would have too many nodes")]
    TooLarge,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeGenParams {
    pub r_trap: u32,
    pub r_good: u32,
    pub fanout: u32,
    pub d_trap: u32,
    pub d_good: u32,
    pub seed: u64,
}

impl TreeGenParams {
    pub fn validate(&self) -> Result<(), TreeError> {
        if self.r_trap + self.r_good == 0 {
            return Err(TreeError::NoGateways);
        }
        if self.fanout == 0 {
            return Err(TreeError::ZeroFanout);
        }
        if self.d_trap < 2 {
            return Err(TreeError::DepthTooSmall("d_trap"));
        }
        if self.d_good < 2 {
            return Err(TreeError::DepthTooSmall("d_good"));
        }
        if self.expected_node_count() > u64::from(u32::MAX) {
            return Err(TreeError::TooLarge);
        }
        Ok(())
    }

    pub fn expected_node_count(&self) -> u64 {
        let (rt, rg, b) = (u64::from(self.r_trap), u64::from(self.r_good), u64::from(self.fanout));
        1 + rt + rg + rt * b * u64::from(self.d_trap) + rg * b * u64::from(self.d_good - 1)
    }

    pub fn expected_max_value(&self) -> i64 {
        if self.r_good >= 1 {
            GOOD_GATEWAY_VALUE + GOOD_STEP * i64::from(self.d_good - 1)
        } else {
            trap_chain_value(self.d_trap)
        }
    }
}

/// Value of the `j`-th node on a trap chain (`j = 0` is the gateway).
pub fn trap_chain_value(j: u32) -> i64 {
    let momentum = j.min(TRAP_MOMENTUM_STEPS);
    let sparse = j.saturating_sub(TRAP_MOMENTUM_STEPS) / TRAP_SPARSE_PERIOD;
    TRAP_GATEWAY_VALUE + i64::from(momentum) + i64::from(sparse)
}

/// Value of the `j`-th node on a good chain (`j = 0` is the gateway).
pub fn good_chain_value(j: u32) -> i64 {
    GOOD_GATEWAY_VALUE + GOOD_STEP * i64::from(j)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeInstance {
    /// Neighbor lists indexed by public ID, in shuffled order.
    adjacency: Vec<Vec<NodeId>>,
    /// Hidden values indexed by public ID.
    values: Vec<i64>,
    root: NodeId,
    max_value: i64,
    /// `permutation[structural index] = public ID`.
    permutation: Vec<NodeId>,
    params: Option<TreeGenParams>,
}

/// Public structure handed to agents: no values.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeStructure {
    pub node_count: u32,
    pub root: NodeId,
    pub adjacency: Vec<Vec<NodeId>>,
}

impl TreeStructure {
    /// Parent of every node (root maps to itself) from a BFS over the adjacency.
    pub fn parents(&self) -> Vec<NodeId> {
        let n = self.adjacency.len();
        let mut parent = vec![NodeId::MAX; n];
        parent[self.root as usize] = self.root;
        let mut queue = VecDeque::from([self.root]);
        while let Some(u) = queue.pop_front() {
            for &v in &self.adjacency[u as usize] {
                if parent[v as usize] == NodeId::MAX {
                    parent[v as usize] = u;
                    queue.push_back(v);
                }
            }
        }
        parent
    }

    /// Distance from the root for every node.
    pub fn depths(&self) -> Vec<u32> {
        let n = self.adjacency.len();
        let mut depth = vec![u32::MAX; n];
        depth[self.root as usize] = 0;
        let mut queue = VecDeque::from([self.root]);
        while let Some(u) = queue.pop_front() {
            for &v in &self.adjacency[u as usize] {
                if depth[v as usize] == u32::MAX {
                    depth[v as usize] = depth[u as usize] + 1;
                    queue.push_back(v);
                }
            }
        }
        depth
    }
}

impl TreeInstance {
    pub fn node_count(&self) -> u32 {
        self.values.len() as u32
    }

    pub fn root(&self) -> NodeId {
        self.root
    }

    pub fn max_value(&self) -> i64 {
        self.max_value
    }

    pub fn value(&self, node: NodeId) -> Option<i64> {
        self.values.get(node as usize).copied()
    }

    pub fn values(&self) -> &[i64] {
        &self.values
    }

    pub fn neighbors(&self, node: NodeId) -> &[NodeId] {
        &self.adjacency[node as usize]
    }

    pub fn adjacency(&self) -> &[Vec<NodeId>] {
        &self.adjacency
    }

    pub fn permutation(&self) -> &[NodeId] {
        &self.permutation
    }

    pub fn params(&self) -> Option<&TreeGenParams> {
        self.params.as_ref()
    }

    pub fn structure(&self) -> TreeStructure {
        TreeStructure {
            node_count: self.node_count(),
            root: self.root,
            adjacency: self.adjacency.clone(),
        }
    }

    /// Edges as `(u, v)` pairs with `u < v`.
    pub fn edges(&self) -> impl Iterator<Item = (NodeId, NodeId)> + '_ {
        self.adjacency.iter().enumerate().flat_map(|(u, ns)| {
            ns.iter()
                .filter(move |&&v| (u as NodeId) < v)
                .map(move |&v| (u as NodeId, v))
        })
    }

    /// Checks the structural invariants used when loading instance files.
    pub fn check(&self) -> Result<(), String> {
        let n = self.values.len();
        if self.adjacency.len() != n || self.permutation.len() != n {
            return Err("length mismatch between adjacency, values and permutation".into());
        }
        if self.root as usize >= n {
            return Err("root out of range".into());
        }
        if self.values[self.root as usize] != 0 {
            return Err("root value must be 0".into());
        }
        let edges = self.edges().count();
        if edges + 1 != n {
            return Err(format!("{n} nodes but {edges} edges"));
        }
        for (u, ns) in self.adjacency.iter().enumerate() {
            for &v in ns {
                if v as usize >= n || !self.adjacency[v as usize].contains(&(u as NodeId)) {
                    return Err(format!("adjacency is not symmetric at ({u}, {v})"));
                }
            }
        }
        if self.structure().depths().contains(&u32::MAX) {
            return Err("graph is not connected".into());
        }
        if self.values.iter().copied().max() != Some(self.max_value) {
            return Err("max_value does not match values".into());
        }
        Ok(())
    }
}

/// Builds the tree, permutes node IDs uniformly at random and shuffles every
/// neighbor list. Random stream order: ID permutation, then neighbor
/// shuffles in public-ID order.
pub fn generate_tree(params: &TreeGenParams) -> Result<TreeInstance, TreeError> {
    params.validate()?;
    let n = params.expected_node_count() as usize;
    let mut parent: Vec<usize> = Vec::with_capacity(n);
    let mut values: Vec<i64> = Vec::with_capacity(n);
    parent.push(usize::MAX);
    values.push(0);

    let add = |p: usize, v: i64, parent: &mut Vec<usize>, values: &mut Vec<i64>| {
        parent.push(p);
        values.push(v);
        values.len() - 1
    };
    for _ in 0..params.r_trap {
        let gw = add(0, trap_chain_value(0), &mut parent, &mut values);
        for _ in 0..params.fanout {
            let mut prev = gw;
            for j in 1..=params.d_trap {
                prev = add(prev, trap_chain_value(j), &mut parent, &mut values);
            }
        }
    }
    for _ in 0..params.r_good {
        let gw = add(0, good_chain_value(0), &mut parent, &mut values);
        for _ in 0..params.fanout {
            let mut prev = gw;
            for j in 1..params.d_good {
                prev = add(prev, good_chain_value(j), &mut parent, &mut values);
            }
        }
    }
    debug_assert_eq!(values.len(), n);

    let mut rng = rng_from_seed(params.seed);
    let mut permutation: Vec<NodeId> = (0..n as NodeId).collect();
    permutation.shuffle(&mut rng);

    let mut adjacency: Vec<Vec<NodeId>> = vec![Vec::new(); n];
    let mut public_values = vec![0i64; n];
    for s in 0..n {
        let id = permutation[s] as usize;
        public_values[id] = values[s];
        if s > 0 {
            let p = permutation[parent[s]];
            adjacency[id].push(p);
            adjacency[p as usize].push(id as NodeId);
        }
    }
    for ns in adjacency.iter_mut() {
        ns.shuffle(&mut rng);
    }
    let max_value = public_values.iter().copied().max().unwrap_or(0);
    Ok(TreeInstance {
        adjacency,
        values: public_values,
        root: permutation[0],
        max_value,
        permutation,
        params: Some(*params),
    })
}

/// Explored set and the ordered availability bookkeeping of an episode.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExplorationFrontier {
    queried: Vec<bool>,
    /// Unqueried nodes adjacent to the explored set, with the step at which
    /// they became available (0 = revealed with the root).
    available: BTreeMap<NodeId, u32>,
    last_exposed: Vec<NodeId>,
    step: u32,
}

impl ExplorationFrontier {
    /// Root queried for free; its neighbors available at step 0.
    pub fn new(instance: &TreeInstance) -> Self {
        let mut queried = vec![false; instance.node_count() as usize];
        queried[instance.root() as usize] = true;
        let exposed: Vec<NodeId> = instance.neighbors(instance.root()).to_vec();
        let available = exposed.iter().map(|&v| (v, 0)).collect();
        ExplorationFrontier {
            queried,
            available,
            last_exposed: exposed,
            step: 0,
        }
    }

    pub fn is_queried(&self, node: NodeId) -> bool {
        self.queried.get(node as usize).copied().unwrap_or(false)
    }

    pub fn queried_count(&self) -> usize {
        self.queried.iter().filter(|&&q| q).count()
    }

    pub fn queried_nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.queried
            .iter()
            .enumerate()
            .filter(|(_, &q)| q)
            .map(|(i, _)| i as NodeId)
    }

    pub fn is_available(&self, node: NodeId) -> bool {
        self.available.contains_key(&node)
    }

    /// Available nodes in ascending ID order.
    pub fn available_nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.available.keys().copied()
    }

    pub fn available_len(&self) -> usize {
        self.available.len()
    }

    pub fn last_exposed(&self) -> &[NodeId] {
        &self.last_exposed
    }

    pub fn step(&self) -> u32 {
        self.step
    }

    /// Reveals `node`, returning its value and the next frontier.
    pub fn query_node(
        &self,
        instance: &TreeInstance,
        node: NodeId,
    ) -> Result<(i64, ExplorationFrontier), InvalidQuery> {
        let value = instance.value(node).ok_or(InvalidQuery::UnknownNode(node))?;
        if self.is_queried(node) {
            return Err(InvalidQuery::DuplicateNode(node));
        }
        if !self.is_available(node) {
            return Err(InvalidQuery::NotAdjacent(node));
        }
        let mut next = self.clone();
        next.step += 1;
        next.queried[node as usize] = true;
        next.available.remove(&node);
        next.last_exposed.clear();
        for &v in instance.neighbors(node) {
            if !next.queried[v as usize] && !next.available.contains_key(&v) {
                next.available.insert(v, next.step);
                next.last_exposed.push(v);
            }
        }
        Ok((value, next))
    }

    /// Ordered list shown after a query: the newly exposed nodes shuffled,
    /// or, when nothing new appeared, every available node by availability
    /// recency (most recent first) with ties shuffled.
    ///
    /// Returns the list and whether it holds only newly exposed nodes.
    pub fn availability_feedback<R: Rng + ?Sized>(&self, rng: &mut R) -> (Vec<NodeId>, bool) {
        if !self.last_exposed.is_empty() {
            let mut fresh = self.last_exposed.clone();
            fresh.sort_unstable();
            fresh.shuffle(rng);
            return (fresh, true);
        }
        let mut by_stamp: BTreeMap<std::cmp::Reverse<u32>, Vec<NodeId>> = BTreeMap::new();
        for (&v, &stamp) in &self.available {
            by_stamp.entry(std::cmp::Reverse(stamp)).or_default().push(v);
        }
        let mut out = Vec::with_capacity(self.available.len());
        for (_, mut group) in by_stamp {
            group.shuffle(rng);
            out.extend(group);
        }
        (out, false)
    }

    /// Availability step stamp of an available node.
    pub fn stamp(&self, node: NodeId) -> Option<u32> {
        self.available.get(&node).copied()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;

    fn params(r_trap: u32, r_good: u32, fanout: u32, d_trap: u32, d_good: u32) -> TreeGenParams {
        TreeGenParams {
            r_trap,
            r_good,
            fanout,
            d_trap,
            d_good,
            seed: 17,
        }
    }

    #[test]
    fn reported_instances() {
        for (p, nodes, max) in [
            (params(3, 3, 5, 40, 12), 772, 45),
            (params(2, 2, 3, 40, 14), 323, 53),
            (params(4, 4, 4, 40, 16), 889, 61),
        ] {
            let t = generate_tree(&p).unwrap();
            assert_eq!(t.node_count(), nodes);
            assert_eq!(t.max_value(), max);
            t.check().unwrap();
        }
    }

    #[test]
    fn trap_schedule() {
        assert_eq!(trap_chain_value(0), 2);
        assert_eq!(trap_chain_value(6), 8);
        assert_eq!(trap_chain_value(9), 8);
        assert_eq!(trap_chain_value(10), 9);
        assert_eq!(trap_chain_value(14), 10);
        assert_eq!(trap_chain_value(40), 16);
    }

    #[test]
    fn good_schedule() {
        assert_eq!(good_chain_value(0), 1);
        assert_eq!(good_chain_value(1), 5);
        assert_eq!(good_chain_value(11), 45);
    }

    fn child_of_root_with_value(t: &TreeInstance, v: i64) -> NodeId {
        *t.neighbors(t.root()).iter().find(|&&c| t.value(c) == Some(v)).unwrap()
    }

    #[test]
    fn querying_a_gateway_exposes_its_chains() {
        let t = generate_tree(&params(3, 3, 5, 40, 12)).unwrap();
        let f = ExplorationFrontier::new(&t);
        assert_eq!(f.available_len(), 6);
        let gw = child_of_root_with_value(&t, 2);
        let (value, f) = f.query_node(&t, gw).unwrap();
        assert_eq!(value, 2);
        let mut rng = rng_from_seed(0);
        let (list, fresh) = f.availability_feedback(&mut rng);
        assert!(fresh);
        assert_eq!(list.len(), 5);
        assert!(list.iter().all(|&v| t.value(v) == Some(3)));
        assert_eq!(f.available_len(), 10);
    }

    #[test]
    fn walking_down_a_trap_chain() {
        let t = generate_tree(&params(1, 0, 1, 40, 12)).unwrap();
        let mut f = ExplorationFrontier::new(&t);
        let mut node = t.neighbors(t.root())[0];
        let mut seen = Vec::new();
        for _ in 0..7 {
            let (v, next) = f.query_node(&t, node).unwrap();
            seen.push(v);
            f = next;
            if let Some(&c) = t.neighbors(node).iter().find(|&&c| !f.is_queried(c)) {
                node = c;
            }
        }
        // gateway, then six momentum steps
        assert_eq!(seen, vec![2, 3, 4, 5, 6, 7, 8]);
    }

    #[test]
    fn invalid_queries() {
        let t = generate_tree(&params(1, 1, 2, 3, 3)).unwrap();
        let f = ExplorationFrontier::new(&t);
        assert_eq!(f.query_node(&t, t.root()), Err(InvalidQuery::DuplicateNode(t.root())));
        assert_eq!(f.query_node(&t, 10_000), Err(InvalidQuery::UnknownNode(10_000)));
        let far = (0..t.node_count())
            .find(|&v| v != t.root() && !f.is_available(v))
            .unwrap();
        assert_eq!(f.query_node(&t, far), Err(InvalidQuery::NotAdjacent(far)));
    }

    #[test]
    fn leaf_query_lists_everything_by_recency() {
        // single chain of two nodes under one good gateway
        let t = generate_tree(&params(0, 1, 1, 2, 2)).unwrap();
        let f = ExplorationFrontier::new(&t);
        let gw = t.neighbors(t.root())[0];
        let (_, f) = f.query_node(&t, gw).unwrap();
        let leaf = *t.neighbors(gw).iter().find(|&&v| v != t.root()).unwrap();
        let (v, f) = f.query_node(&t, leaf).unwrap();
        assert_eq!(v, 5);
        let (list, fresh) = f.availability_feedback(&mut rng_from_seed(1));
        assert!(!fresh);
        assert!(list.is_empty());
    }

    #[test]
    fn recency_order_without_new_nodes() {
        let t = generate_tree(&params(0, 2, 2, 2, 2)).unwrap();
        let f = ExplorationFrontier::new(&t);
        let gws: Vec<NodeId> = t.neighbors(t.root()).to_vec();
        let (_, f) = f.query_node(&t, gws[0]).unwrap();
        // query a leaf under the first gateway; nothing new appears
        let leaf = *t.neighbors(gws[0]).iter().find(|&&v| v != t.root()).unwrap();
        let (_, f) = f.query_node(&t, leaf).unwrap();
        let (list, fresh) = f.availability_feedback(&mut rng_from_seed(3));
        assert!(!fresh);
        // remaining leaf (stamp 1) first, then the other gateway (stamp 0)
        assert_eq!(list.len(), 2);
        assert_eq!(f.stamp(list[0]), Some(1));
        assert_eq!(list[1], gws[1]);
    }

    #[test]
    fn single_chain_is_deterministic() {
        let t = generate_tree(&params(1, 0, 1, 5, 2)).unwrap();
        let mut f = ExplorationFrontier::new(&t);
        let mut rng = rng_from_seed(0);
        let mut next = t.neighbors(t.root())[0];
        for _ in 0..5 {
            let (_, nf) = f.query_node(&t, next).unwrap();
            f = nf;
            let (list, _) = f.availability_feedback(&mut rng);
            assert_eq!(list.len(), 1);
            next = list[0];
        }
    }

    #[test]
    fn same_seed_same_tree() {
        let p = params(2, 2, 3, 10, 6);
        assert_eq!(generate_tree(&p).unwrap(), generate_tree(&p).unwrap());
        let mut q = p;
        q.seed += 1;
        assert_ne!(generate_tree(&p).unwrap(), generate_tree(&q).unwrap());
    }

    #[test]
    fn validation() {
        assert_eq!(generate_tree(&params(0, 0, 1, 3, 3)), Err(TreeError::NoGateways));
        assert_eq!(generate_tree(&params(1, 1, 0, 3, 3)), Err(TreeError::ZeroFanout));
        assert_eq!(
            generate_tree(&params(1, 1, 1, 1, 3)),
            Err(TreeError::DepthTooSmall("d_trap"))
        );
    }
}
