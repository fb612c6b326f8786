//! Access-control hierarchy owned by the central authority.
//!
//! Classes form a DAG: every class names a set of parents and may have
//! several roots above it. Keys flow downwards, so a class can derive the key
//! of every class it can reach by following child edges. This module knows
//! nothing about the polynomial itself; it only produces the parameter
//! vectors that get fed into it, plus the bookkeeping for membership churn.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Label of a class (`C1`, `C2`, ...).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ClassId(pub u32);

impl fmt::Display for ClassId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "C{}", self.0)
    }
}

/// Accepts `C7`, `c7` or a bare `7`.
impl std::str::FromStr for ClassId {
    type Err = std::num::ParseIntError;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let digits = s.strip_prefix(['C', 'c']).unwrap_or(s);
        digits.parse().map(ClassId)
    }
}

pub type UserId = u64;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum HierarchyError {
    #[error("unknown class {0}")]
    UnknownClass(ClassId),
    #[error("unknown user {0}")]
    UnknownUser(UserId),
    #[error("{ancestor} is not an ancestor of {descendant}")]
    NotAncestor { ancestor: ClassId, descendant: ClassId },
    #[error("m = {m} is too small, the hierarchy needs at least {required}")]
    MTooSmall { m: usize, required: usize },
    #[error("hierarchy has no classes")]
    Empty,
    #[error("class {0} is defined twice")]
    DuplicateClass(ClassId),
    #[error("user {0} already belongs to a class")]
    DuplicateUser(UserId),
    #[error("user id must be positive")]
    ZeroUser,
    #[error("parent links through {0} form a cycle")]
    Cycle(ClassId),
    #[error("public parameter {0} is used more than once")]
    DuplicateParam(u64),
    #[error("public parameter {0} collides with a dummy parameter")]
    ParamCollision(u64),
    #[error("dummy parameter {0} is listed more than once")]
    DuplicateDummy(u64),
    #[error("need {need} dummy parameters, only {have} configured")]
    NotEnoughDummies { have: usize, need: usize },
}

pub type Result<T, E = HierarchyError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassNode {
    pub id: ClassId,
    pub public_param: u64,
    pub parents: BTreeSet<ClassId>,
    pub users: BTreeSet<UserId>,
}

impl ClassNode {
    pub fn new(id: u32, public_param: u64, parents: impl IntoIterator<Item = u32>) -> Self {
        Self {
            id: ClassId(id),
            public_param,
            parents: parents.into_iter().map(ClassId).collect(),
            users: BTreeSet::new(),
        }
    }

    pub fn with_users(mut self, users: impl IntoIterator<Item = UserId>) -> Self {
        self.users.extend(users);
        self
    }
}

/// Strict ancestors of a class, ascending by id.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AncestorSet {
    pub members: BTreeSet<ClassId>,
}

impl AncestorSet {
    pub fn size(&self) -> usize {
        self.members.len()
    }

    pub fn contains(&self, c: ClassId) -> bool {
        self.members.contains(&c)
    }

    pub fn iter(&self) -> impl Iterator<Item = ClassId> + '_ {
        self.members.iter().copied()
    }
}

/// Public filler values padding every argument vector up to `m`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DummyParams(pub Vec<u64>);

impl DummyParams {
    pub fn values(&self) -> &[u64] {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum MembershipEvent {
    JoinUser { class: ClassId, user: UserId },
    LeaveUser { user: UserId },
    JoinClass { class: ClassId, public_param: u64, parents: BTreeSet<ClassId> },
    LeaveClass { class: ClassId },
}

impl MembershipEvent {
    fn is_join(&self) -> bool {
        matches!(self, Self::JoinUser { .. } | Self::JoinClass { .. })
    }

    fn is_class_level(&self) -> bool {
        matches!(self, Self::JoinClass { .. } | Self::LeaveClass { .. })
    }
}

/// What a batch of membership events did to the hierarchy.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BatchOutcome {
    pub joins: usize,
    pub leaves: usize,
    pub class_changes: usize,
}

impl BatchOutcome {
    /// Any departure, or any change to the class structure, forces a new epoch.
    pub fn bumps_epoch(&self) -> bool {
        self.leaves > 0 || self.class_changes > 0
    }

    pub fn is_empty(&self) -> bool {
        self.joins == 0 && self.leaves == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RekeyEntry {
    pub epoch: u64,
    pub joins: usize,
    pub leaves: usize,
    pub unicast_msgs: usize,
    pub broadcast_msgs: usize,
}

/// Count of rekey messages the authority would have sent, one entry per batch.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RekeyLog {
    pub events: Vec<RekeyEntry>,
}

impl RekeyLog {
    /// Joining members each get a key and a partial polynomial (two unicasts);
    /// every non-empty batch ends with one broadcast naming who changed.
    pub fn record(&mut self, epoch: u64, outcome: BatchOutcome) -> RekeyEntry {
        let entry = RekeyEntry {
            epoch,
            joins: outcome.joins,
            leaves: outcome.leaves,
            unicast_msgs: 2 * outcome.joins,
            broadcast_msgs: usize::from(!outcome.is_empty()),
        };
        self.events.push(entry);
        entry
    }

    pub fn total_unicast(&self) -> usize {
        self.events.iter().map(|e| e.unicast_msgs).sum()
    }

    pub fn total_broadcast(&self) -> usize {
        self.events.iter().map(|e| e.broadcast_msgs).sum()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,joins,leaves,unicast_msgs,broadcast_msgs\n");
        for e in &self.events {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                e.epoch, e.joins, e.leaves, e.unicast_msgs, e.broadcast_msgs
            ));
        }
        out
    }
}

#[derive(Debug, Default)]
struct Derived {
    ancestors: BTreeMap<ClassId, AncestorSet>,
    topo: Vec<ClassId>,
}

#[derive(Debug, Default)]
pub struct Hierarchy {
    classes: BTreeMap<ClassId, ClassNode>,
    dummies: DummyParams,
    configured_m: Option<usize>,
    allow_param_overlap: bool,
    derived: OnceLock<Derived>,
}

impl Clone for Hierarchy {
    fn clone(&self) -> Self {
        Self {
            classes: self.classes.clone(),
            dummies: self.dummies.clone(),
            configured_m: self.configured_m,
            allow_param_overlap: self.allow_param_overlap,
            derived: OnceLock::new(),
        }
    }
}

impl PartialEq for Hierarchy {
    fn eq(&self, other: &Self) -> bool {
        self.classes == other.classes
            && self.dummies == other.dummies
            && self.configured_m == other.configured_m
            && self.allow_param_overlap == other.allow_param_overlap
    }
}

impl Eq for Hierarchy {}

impl Hierarchy {
    /// Builds and validates a hierarchy. With `allow_param_overlap` set, class
    /// parameters may coincide with dummy values (needed to load some
    /// published parameter sets verbatim); all other checks still apply.
    pub fn new(
        classes: impl IntoIterator<Item = ClassNode>,
        dummies: DummyParams,
        configured_m: Option<usize>,
        allow_param_overlap: bool,
    ) -> Result<Self> {
        let mut map = BTreeMap::new();
        for node in classes {
            let id = node.id;
            if map.insert(id, node).is_some() {
                return Err(HierarchyError::DuplicateClass(id));
            }
        }
        let h = Self {
            classes: map,
            dummies,
            configured_m,
            allow_param_overlap,
            derived: OnceLock::new(),
        };
        h.validate()?;
        Ok(h)
    }

    fn validate(&self) -> Result<()> {
        if self.classes.is_empty() {
            return Err(HierarchyError::Empty);
        }
        let mut params = BTreeSet::new();
        let mut users = BTreeSet::new();
        for node in self.classes.values() {
            for p in &node.parents {
                if !self.classes.contains_key(p) {
                    return Err(HierarchyError::UnknownClass(*p));
                }
            }
            if !params.insert(node.public_param) {
                return Err(HierarchyError::DuplicateParam(node.public_param));
            }
            for &u in &node.users {
                if u == 0 {
                    return Err(HierarchyError::ZeroUser);
                }
                if !users.insert(u) {
                    return Err(HierarchyError::DuplicateUser(u));
                }
            }
        }
        let mut seen = BTreeSet::new();
        for &d in self.dummies.values() {
            if !seen.insert(d) {
                return Err(HierarchyError::DuplicateDummy(d));
            }
            if !self.allow_param_overlap && params.contains(&d) {
                return Err(HierarchyError::ParamCollision(d));
            }
        }
        topo_order(&self.classes)?;
        let m = self.choose_m()?;
        if self.dummies.values().len() < m - 1 {
            return Err(HierarchyError::NotEnoughDummies { have: self.dummies.values().len(), need: m - 1 });
        }
        Ok(())
    }

    fn derived(&self) -> &Derived {
        self.derived.get_or_init(|| {
            // validate() already rejected cycles
            let topo = topo_order(&self.classes).expect("hierarchy is acyclic");
            let mut ancestors: BTreeMap<ClassId, AncestorSet> = BTreeMap::new();
            for &c in &topo {
                let mut members = BTreeSet::new();
                for p in &self.classes[&c].parents {
                    members.insert(*p);
                    members.extend(ancestors[p].members.iter().copied());
                }
                ancestors.insert(c, AncestorSet { members });
            }
            Derived { ancestors, topo }
        })
    }

    fn invalidate(&mut self) {
        self.derived = OnceLock::new();
    }

    pub fn classes(&self) -> impl Iterator<Item = &ClassNode> {
        self.classes.values()
    }

    pub fn class_ids(&self) -> impl Iterator<Item = ClassId> + '_ {
        self.classes.keys().copied()
    }

    pub fn class(&self, c: ClassId) -> Result<&ClassNode> {
        self.classes.get(&c).ok_or(HierarchyError::UnknownClass(c))
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn dummies(&self) -> &DummyParams {
        &self.dummies
    }

    pub fn configured_m(&self) -> Option<usize> {
        self.configured_m
    }

    pub fn allows_param_overlap(&self) -> bool {
        self.allow_param_overlap
    }

    pub fn class_of_user(&self, user: UserId) -> Result<ClassId> {
        self.classes
            .values()
            .find(|n| n.users.contains(&user))
            .map(|n| n.id)
            .ok_or(HierarchyError::UnknownUser(user))
    }

    pub fn ancestor_set(&self, c: ClassId) -> Result<&AncestorSet> {
        self.derived().ancestors.get(&c).ok_or(HierarchyError::UnknownClass(c))
    }

    pub fn is_ancestor(&self, ancestor: ClassId, descendant: ClassId) -> Result<bool> {
        self.class(ancestor)?;
        Ok(self.ancestor_set(descendant)?.contains(ancestor))
    }

    /// Classes strictly below `c`, in topological order (parents before children).
    pub fn descendants(&self, c: ClassId) -> Result<Vec<ClassId>> {
        self.class(c)?;
        let d = self.derived();
        Ok(d.topo.iter().copied().filter(|x| d.ancestors[x].contains(c)).collect())
    }

    /// `S_desc \ (S_anc ∪ {anc})`, ascending.
    pub fn relative_set(&self, ancestor: ClassId, descendant: ClassId) -> Result<Vec<ClassId>> {
        let desc = self.ancestor_set(descendant)?;
        let anc = self.ancestor_set(ancestor)?;
        if !desc.contains(ancestor) {
            return Err(HierarchyError::NotAncestor { ancestor, descendant });
        }
        Ok(desc.iter().filter(|c| *c != ancestor && !anc.contains(*c)).collect())
    }

    /// Smallest admissible `m`: one more than the largest ancestor set.
    pub fn required_m(&self) -> Result<usize> {
        if self.classes.is_empty() {
            return Err(HierarchyError::Empty);
        }
        let max = self.derived().ancestors.values().map(AncestorSet::size).max().unwrap_or(0);
        Ok(max + 1)
    }

    pub fn choose_m(&self) -> Result<usize> {
        let required = self.required_m()?;
        match self.configured_m {
            Some(m) if m < required => Err(HierarchyError::MTooSmall { m, required }),
            Some(m) => Ok(m),
            None => Ok(required),
        }
    }

    fn pad(&self, mut params: Vec<u64>, m: usize) -> Result<Vec<u64>> {
        let missing = m.checked_sub(params.len()).ok_or(HierarchyError::MTooSmall {
            m,
            required: params.len(),
        })?;
        let dummies = self.dummies.values();
        if dummies.len() < missing {
            return Err(HierarchyError::NotEnoughDummies { have: dummies.len(), need: missing });
        }
        params.extend_from_slice(&dummies[..missing]);
        Ok(params)
    }

    /// Argument vector a class uses to compute its own key:
    /// `[s_c, ancestors' params ascending by id, dummies...]`.
    pub fn class_params(&self, c: ClassId, m: usize) -> Result<Vec<u64>> {
        let node = self.class(c)?;
        let mut params = vec![node.public_param];
        params.extend(self.ancestor_set(c)?.iter().map(|a| self.classes[&a].public_param));
        self.pad(params, m)
    }

    /// Argument vector an ancestor uses to reach a descendant's key:
    /// `[s_anc, s_desc, params of S_anc, params of the relative set, dummies...]`.
    /// Same multiset as [`Hierarchy::class_params`] for the descendant.
    pub fn derivation_params(&self, ancestor: ClassId, descendant: ClassId, m: usize) -> Result<Vec<u64>> {
        let relative = self.relative_set(ancestor, descendant)?;
        let s = |c: ClassId| self.classes[&c].public_param;
        let mut params = vec![s(ancestor), s(descendant)];
        params.extend(self.ancestor_set(ancestor)?.iter().map(s));
        params.extend(relative.into_iter().map(s));
        self.pad(params, m)
    }

    /// Applies a batch atomically: either every event succeeds or the
    /// hierarchy is left untouched.
    pub fn apply_batch(&mut self, events: &[MembershipEvent]) -> Result<BatchOutcome> {
        let mut next = self.clone();
        let mut outcome = BatchOutcome::default();
        for ev in events {
            next.apply_one(ev)?;
            if ev.is_join() {
                outcome.joins += 1;
            } else {
                outcome.leaves += 1;
            }
            if ev.is_class_level() {
                outcome.class_changes += 1;
            }
        }
        next.validate()?;
        *self = next;
        Ok(outcome)
    }

    fn apply_one(&mut self, ev: &MembershipEvent) -> Result<()> {
        match ev {
            MembershipEvent::JoinUser { class, user } => {
                if *user == 0 {
                    return Err(HierarchyError::ZeroUser);
                }
                if self.class_of_user(*user).is_ok() {
                    return Err(HierarchyError::DuplicateUser(*user));
                }
                self.classes
                    .get_mut(class)
                    .ok_or(HierarchyError::UnknownClass(*class))?
                    .users
                    .insert(*user);
            }
            MembershipEvent::LeaveUser { user } => {
                let c = self.class_of_user(*user)?;
                self.classes.get_mut(&c).expect("class exists").users.remove(user);
            }
            MembershipEvent::JoinClass { class, public_param, parents } => {
                if self.classes.contains_key(class) {
                    return Err(HierarchyError::DuplicateClass(*class));
                }
                for p in parents {
                    self.class(*p)?;
                }
                self.classes.insert(
                    *class,
                    ClassNode {
                        id: *class,
                        public_param: *public_param,
                        parents: parents.clone(),
                        users: BTreeSet::new(),
                    },
                );
                self.invalidate();
            }
            MembershipEvent::LeaveClass { class } => {
                let removed = self.classes.remove(class).ok_or(HierarchyError::UnknownClass(*class))?;
                // children of the removed class inherit its parents
                for node in self.classes.values_mut() {
                    if node.parents.remove(class) {
                        node.parents.extend(removed.parents.iter().copied());
                    }
                }
                self.invalidate();
            }
        }
        Ok(())
    }
}

fn topo_order(classes: &BTreeMap<ClassId, ClassNode>) -> Result<Vec<ClassId>> {
    let mut pending: BTreeMap<ClassId, usize> = classes.iter().map(|(id, n)| (*id, n.parents.len())).collect();
    let mut children: BTreeMap<ClassId, Vec<ClassId>> = BTreeMap::new();
    for node in classes.values() {
        for p in &node.parents {
            children.entry(*p).or_default().push(node.id);
        }
    }
    let mut ready: BTreeSet<ClassId> = pending.iter().filter(|(_, n)| **n == 0).map(|(c, _)| *c).collect();
    let mut order = Vec::with_capacity(classes.len());
    while let Some(c) = ready.pop_first() {
        order.push(c);
        for child in children.get(&c).into_iter().flatten() {
            let n = pending.get_mut(child).expect("child is a known class");
            *n -= 1;
            if *n == 0 {
                ready.insert(*child);
            }
        }
    }
    if order.len() != classes.len() {
        let stuck = pending.iter().find(|(c, _)| !order.contains(c)).map(|(c, _)| *c);
        return Err(HierarchyError::Cycle(stuck.expect("some class left unordered")));
    }
    Ok(order)
}

/// Reference hierarchies and parameter values used throughout the docs and tests.
pub mod fixtures {
    use super::*;

    /// Public parameters `s1..s9`.
    pub const CLASS_PARAMS: [u64; 9] = [5, 10, 13, 9, 6, 22, 18, 30, 39];
    /// Dummy parameters `r1..r9`.
    pub const DUMMIES: [u64; 9] = [11, 12, 13, 14, 15, 16, 17, 18, 19];

    /// Nine-class DAG with two roots (C1, C2).
    ///
    /// Edges: C3 <- {C1, C2}, C4 <- C2, C5 <- C2, C6 <- C3, C7 <- {C3, C4},
    /// C8 <- {C3, C5}, C9 <- C5. Its published parameter set reuses 13 as both
    /// `s3` and `r3`, so it is built with parameter overlap allowed.
    pub fn nine_class() -> Hierarchy {
        let parents: [&[u32]; 9] = [&[], &[], &[1, 2], &[2], &[2], &[3], &[3, 4], &[3, 5], &[5]];
        let classes = (1..=9u32).map(|i| {
            let idx = (i - 1) as usize;
            ClassNode::new(i, CLASS_PARAMS[idx], parents[idx].iter().copied())
                .with_users((1..=3).map(|u| u64::from(i) * 100 + u))
        });
        Hierarchy::new(classes, DummyParams(DUMMIES.to_vec()), Some(7), true).expect("valid fixture")
    }

    /// Two-class chain C2 -> C4 with users 21..24 and 41..44.
    pub fn two_class() -> Hierarchy {
        let classes = [
            ClassNode::new(2, 10, []).with_users(21..=24),
            ClassNode::new(4, 9, [2]).with_users(41..=44),
        ];
        Hierarchy::new(classes, DummyParams(DUMMIES.to_vec()), Some(7), false).expect("valid fixture")
    }
}
