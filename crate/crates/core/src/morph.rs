//! The evolving classifier hierarchy.
//!
//! Queried pairs are merged into super-classes of the global classifier with
//! union-find semantics, so overlapping pairs collapse into one m-ary group
//! served by a single local classifier. The global label space is rebuilt
//! after every merge: plain nodes in ascending class order, then super nodes
//! in ascending order of their smallest member.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::feature_store::DatasetManifest;
use crate::pair::ClassPair;

/// Disjoint-set forest with path halving and union by rank.
#[derive(Debug, Clone)]
pub struct DisjointSet {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl DisjointSet {
    pub fn new(n: usize) -> Self {
        Self { parent: (0..n).collect(), rank: vec![0; n] }
    }

    pub fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    pub fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        match self.rank[ra].cmp(&self.rank[rb]) {
            std::cmp::Ordering::Less => self.parent[ra] = rb,
            std::cmp::Ordering::Greater => self.parent[rb] = ra,
            std::cmp::Ordering::Equal => {
                self.parent[rb] = ra;
                self.rank[ra] += 1;
            }
        }
        true
    }

    /// Components with at least `min_size` members, each sorted, ordered by
    /// smallest member.
    pub fn components(&mut self, min_size: usize) -> Vec<Vec<usize>> {
        let n = self.parent.len();
        let mut by_root: Vec<Vec<usize>> = vec![Vec::new(); n];
        for x in 0..n {
            let r = self.find(x);
            by_root[r].push(x);
        }
        let mut out: Vec<Vec<usize>> = by_root.into_iter().filter(|c| c.len() >= min_size.max(1)).collect();
        out.sort_by_key(|c| c[0]);
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassGroup {
    /// Smallest member; also keys the group's local head.
    pub group_id: usize,
    pub members: Vec<usize>,
}

impl ClassGroup {
    pub fn local_index(&self, fine: usize) -> Option<usize> {
        self.members.binary_search(&fine).ok()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "id", rename_all = "lowercase")]
pub enum GlobalNode {
    Plain(usize),
    Super(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Route {
    Final(usize),
    Delegate(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawArch")]
pub struct ArchState {
    num_classes: usize,
    round: u32,
    groups: Vec<ClassGroup>,
    nodes: Vec<GlobalNode>,
    fine_to_node: Vec<usize>,
}

#[derive(Deserialize)]
struct RawArch {
    num_classes: usize,
    round: u32,
    groups: Vec<ClassGroup>,
}

impl TryFrom<RawArch> for ArchState {
    type Error = Error;

    fn try_from(raw: RawArch) -> Result<Self> {
        let mut state = ArchState::initial(raw.num_classes)?;
        for g in &raw.groups {
            for w in g.members.windows(2) {
                state = state.merge_pair(w[0], w[1])?;
            }
        }
        if state.groups != raw.groups {
            return Err(Error::MalformedSnapshot("architecture groups are not canonical".into()));
        }
        state.round = raw.round;
        Ok(state)
    }
}

impl ArchState {
    /// Flat `num_classes`-way classifier, no groups.
    pub fn initial(num_classes: usize) -> Result<Self> {
        if num_classes < 2 {
            return Err(Error::InvalidClassCount(num_classes));
        }
        Ok(Self::rebuild(num_classes, 0, Vec::new()))
    }

    fn rebuild(num_classes: usize, round: u32, groups: Vec<Vec<usize>>) -> Self {
        let mut grouped = vec![None; num_classes];
        for members in &groups {
            for &m in members {
                grouped[m] = Some(members[0]);
            }
        }
        let mut nodes: Vec<GlobalNode> =
            (0..num_classes).filter(|&c| grouped[c].is_none()).map(GlobalNode::Plain).collect();
        nodes.extend(groups.iter().map(|g| GlobalNode::Super(g[0])));

        let mut fine_to_node = vec![0; num_classes];
        for (idx, node) in nodes.iter().enumerate() {
            match *node {
                GlobalNode::Plain(c) => fine_to_node[c] = idx,
                GlobalNode::Super(gid) => {
                    for c in (0..num_classes).filter(|&c| grouped[c] == Some(gid)) {
                        fine_to_node[c] = idx;
                    }
                }
            }
        }
        let groups = groups.into_iter().map(|members| ClassGroup { group_id: members[0], members }).collect();
        Self { num_classes, round, groups, nodes, fine_to_node }
    }

    /// Returns the state with `p` and `q` in the same group. Already co-grouped
    /// pairs leave the state unchanged.
    pub fn merge_pair(&self, p: usize, q: usize) -> Result<Self> {
        for c in [p, q] {
            if c >= self.num_classes {
                return Err(Error::UnknownClass(c));
            }
        }
        if p == q {
            return Err(Error::InvalidLabel { label: p, arity: self.num_classes });
        }
        let mut dsu = DisjointSet::new(self.num_classes);
        for g in &self.groups {
            for &m in &g.members[1..] {
                dsu.union(g.members[0], m);
            }
        }
        if !dsu.union(p, q) {
            return Ok(self.clone());
        }
        Ok(Self::rebuild(self.num_classes, self.round, dsu.components(2)))
    }

    pub fn with_round(mut self, round: u32) -> Self {
        self.round = round;
        self
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn round(&self) -> u32 {
        self.round
    }

    pub fn arity(&self) -> usize {
        self.nodes.len()
    }

    pub fn groups(&self) -> &[ClassGroup] {
        &self.groups
    }

    pub fn nodes(&self) -> &[GlobalNode] {
        &self.nodes
    }

    pub fn group(&self, group_id: usize) -> Option<&ClassGroup> {
        self.groups.iter().find(|g| g.group_id == group_id)
    }

    pub fn group_of(&self, fine: usize) -> Option<&ClassGroup> {
        self.groups.iter().find(|g| g.members.contains(&fine))
    }

    /// Global label of a fine class.
    pub fn node_of(&self, fine: usize) -> Result<usize> {
        self.fine_to_node.get(fine).copied().ok_or(Error::UnknownClass(fine))
    }

    pub fn route(&self, node: usize) -> Result<Route> {
        match self.nodes.get(node) {
            Some(GlobalNode::Plain(c)) => Ok(Route::Final(*c)),
            Some(GlobalNode::Super(g)) => Ok(Route::Delegate(*g)),
            None => Err(Error::StaleNode { node, arity: self.arity() }),
        }
    }

    pub fn co_grouped(&self, p: usize, q: usize) -> bool {
        self.group_of(p).is_some_and(|g| g.members.contains(&q))
    }

    /// Every pair internal to some group.
    pub fn co_grouped_pairs(&self) -> BTreeSet<ClassPair> {
        let mut out = BTreeSet::new();
        for g in &self.groups {
            for (i, &a) in g.members.iter().enumerate() {
                for &b in &g.members[i + 1..] {
                    out.insert(ClassPair::new(a, b));
                }
            }
        }
        out
    }

    /// Hex SHA-256 of the canonical group structure.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.num_classes as u64).to_le_bytes());
        for g in &self.groups {
            h.update([0xff]);
            for &m in &g.members {
                h.update((m as u64).to_le_bytes());
            }
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

pub fn coarse_label_of(manifest: &DatasetManifest, fine: usize) -> Result<usize> {
    manifest.fine_classes.get(fine).map(|c| c.coarse_group).ok_or(Error::UnknownClass(fine))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn initial_states() {
        let s = ArchState::initial(25).unwrap();
        assert_eq!((s.arity(), s.groups().len()), (25, 0));
        assert_eq!(ArchState::initial(2).unwrap().arity(), 2);
        assert!(matches!(ArchState::initial(1), Err(Error::InvalidClassCount(1))));
    }

    #[test]
    fn disjoint_merges_shrink_by_one_each() {
        let mut s = ArchState::initial(25).unwrap();
        for (p, q) in [(0, 1), (5, 9), (20, 3)] {
            s = s.merge_pair(p, q).unwrap();
        }
        assert_eq!(s.arity(), 25 - 2 * 3 + 3);
    }

    #[test]
    fn overlapping_pairs_form_one_group() {
        let (p, q, t, u) = (2, 7, 4, 11);
        let s = ArchState::initial(12).unwrap();
        let s = s.merge_pair(p, q).unwrap().merge_pair(p, t).unwrap().merge_pair(t, u).unwrap();
        assert_eq!(s.groups().len(), 1);
        assert_eq!(s.groups()[0].members, vec![2, 4, 7, 11]);
        assert_eq!(s.arity(), 12 - 3);
        let again = s.merge_pair(q, p).unwrap();
        assert_eq!(again, s);
    }

    #[test]
    fn node_order_and_routing() {
        let s = ArchState::initial(5).unwrap().merge_pair(3, 1).unwrap();
        assert_eq!(
            s.nodes(),
            &[GlobalNode::Plain(0), GlobalNode::Plain(2), GlobalNode::Plain(4), GlobalNode::Super(1)]
        );
        assert_eq!(s.route(1).unwrap(), Route::Final(2));
        assert_eq!(s.route(3).unwrap(), Route::Delegate(1));
        assert!(matches!(s.route(4), Err(Error::StaleNode { node: 4, arity: 4 })));
        assert_eq!(s.node_of(3).unwrap(), 3);
        assert_eq!(s.node_of(1).unwrap(), 3);
    }

    #[test]
    fn merge_preconditions() {
        let s = ArchState::initial(3).unwrap();
        assert!(s.merge_pair(1, 1).is_err());
        assert!(matches!(s.merge_pair(0, 3), Err(Error::UnknownClass(3))));
    }

    #[test]
    fn serde_roundtrip_rebuilds() {
        let s = ArchState::initial(6).unwrap().merge_pair(0, 4).unwrap().merge_pair(4, 5).unwrap().with_round(2);
        let json = serde_json::to_string(&s).unwrap();
        let back: ArchState = serde_json::from_str(&json).unwrap();
        assert_eq!(back, s);
        assert_eq!(back.fingerprint(), s.fingerprint());
    }
}
