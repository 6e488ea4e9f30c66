//! Family identity resolution: customers connected through shared phone
//! numbers form a "family" via transitive closure.
//!
//! Recontact is a family-level notion — follow-up calls often come from a
//! different phone or a relative's account — so downstream labeling needs
//! every call resolved to a family. Implemented as a disjoint-set forest
//! with union by size and path compression; family ids are canonicalized
//! as the minimum member id so the partition is stable under input
//! permutation.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;
use alloc::{format, vec};

use crate::ingest::CallRecord;

/// Disjoint-set forest over dense indices.
#[derive(Debug, Clone)]
pub struct DisjointSet {
    parent: Vec<u32>,
    size: Vec<u32>,
}

impl DisjointSet {
    pub fn new() -> Self {
        DisjointSet {
            parent: vec![],
            size: vec![],
        }
    }

    pub fn len(&self) -> usize {
        self.parent.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parent.is_empty()
    }

    /// Add a singleton and return its index.
    pub fn push(&mut self) -> u32 {
        let id = self.parent.len() as u32;
        self.parent.push(id);
        self.size.push(1);
        id
    }

    /// Find with path halving.
    pub fn find(&mut self, mut x: u32) -> u32 {
        while self.parent[x as usize] != x {
            let grand = self.parent[self.parent[x as usize] as usize];
            self.parent[x as usize] = grand;
            x = grand;
        }
        x
    }

    /// Union by size. Returns the new root.
    pub fn union(&mut self, a: u32, b: u32) -> u32 {
        let mut ra = self.find(a);
        let mut rb = self.find(b);
        if ra == rb {
            return ra;
        }
        if self.size[ra as usize] < self.size[rb as usize] {
            core::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb as usize] = ra;
        self.size[ra as usize] += self.size[rb as usize];
        ra
    }
}

impl Default for DisjointSet {
    fn default() -> Self {
        Self::new()
    }
}

/// Identifier node, namespaced so customer-id and phone value spaces can
/// never collide.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
enum Node {
    Customer(String),
    Phone(String),
}

impl Node {
    fn canonical(&self) -> String {
        match self {
            Node::Customer(id) => format!("C:{id}"),
            Node::Phone(id) => format!("P:{id}"),
        }
    }
}

/// Per-family statistics used for agency detection and reporting.
#[derive(Debug, Clone, Default)]
pub struct FamilyStats {
    pub distinct_customers: u32,
    pub distinct_phones: u32,
    pub calls: u32,
}

/// How much the family linkage improves call identification relative to
/// customer ids alone.
#[derive(Debug, Clone, Default)]
pub struct IdCoverage {
    pub total_calls: usize,
    pub calls_with_customer_id: usize,
    pub calls_resolvable: usize,
}

impl IdCoverage {
    /// Fractional gain in identified calls from the phone linkage.
    pub fn gain(&self) -> f64 {
        if self.total_calls == 0 {
            return 0.0;
        }
        (self.calls_resolvable as f64 - self.calls_with_customer_id as f64)
            / self.total_calls as f64
    }
}

/// Finalized, immutable partition of calls into families.
#[derive(Debug, Clone)]
pub struct FamilyPartition {
    family_of_call: BTreeMap<String, String>,
    families: BTreeMap<String, FamilyStats>,
    pub coverage: IdCoverage,
}

impl FamilyPartition {
    pub fn family_of(&self, call_id: &str) -> Option<&str> {
        self.family_of_call.get(call_id).map(String::as_str)
    }

    pub fn families(&self) -> &BTreeMap<String, FamilyStats> {
        &self.families
    }

    pub fn assignments(&self) -> &BTreeMap<String, String> {
        &self.family_of_call
    }

    pub fn len(&self) -> usize {
        self.families.len()
    }

    pub fn is_empty(&self) -> bool {
        self.families.is_empty()
    }

    /// Build a partition from explicit call → family assignments.
    /// Useful in tests and when families come from an external source.
    pub fn from_assignments(assignments: BTreeMap<String, String>) -> Self {
        let mut families: BTreeMap<String, FamilyStats> = BTreeMap::new();
        for fam in assignments.values() {
            families.entry(fam.clone()).or_default().calls += 1;
        }
        let total = assignments.len();
        FamilyPartition {
            family_of_call: assignments,
            families,
            coverage: IdCoverage {
                total_calls: total,
                calls_with_customer_id: total,
                calls_resolvable: total,
            },
        }
    }
}

/// Group calls into families via the transitive closure of shared
/// identifiers. Calls with neither a customer id nor a phone cannot be
/// resolved and are simply absent from the partition.
pub fn build_partition(calls: &[CallRecord]) -> FamilyPartition {
    let mut index: BTreeMap<Node, u32> = BTreeMap::new();
    let mut dsu = DisjointSet::new();
    let intern = |node: Node, index: &mut BTreeMap<Node, u32>, dsu: &mut DisjointSet| -> u32 {
        if let Some(&i) = index.get(&node) {
            return i;
        }
        let i = dsu.push();
        index.insert(node, i);
        i
    };

    let mut coverage = IdCoverage {
        total_calls: calls.len(),
        ..IdCoverage::default()
    };
    for call in calls {
        if call.customer_id.is_some() {
            coverage.calls_with_customer_id += 1;
        }
        let cust = call
            .customer_id
            .as_ref()
            .map(|id| intern(Node::Customer(id.clone()), &mut index, &mut dsu));
        let phone = call
            .phone
            .as_ref()
            .map(|p| intern(Node::Phone(p.clone()), &mut index, &mut dsu));
        if let (Some(c), Some(p)) = (cust, phone) {
            dsu.union(c, p);
        }
        if cust.is_some() || phone.is_some() {
            coverage.calls_resolvable += 1;
        }
    }

    // Canonical family id per root: minimum namespaced member id.
    let mut canon: BTreeMap<u32, String> = BTreeMap::new();
    for (node, &i) in &index {
        let root = dsu.find(i);
        let name = node.canonical();
        match canon.get(&root) {
            Some(existing) if *existing <= name => {}
            _ => {
                canon.insert(root, name);
            }
        }
    }

    let mut families: BTreeMap<String, FamilyStats> = BTreeMap::new();
    for (node, &i) in &index {
        let root = dsu.find(i);
        let fam = families.entry(canon[&root].clone()).or_default();
        match node {
            Node::Customer(_) => fam.distinct_customers += 1,
            Node::Phone(_) => fam.distinct_phones += 1,
        }
    }

    let mut family_of_call = BTreeMap::new();
    for call in calls {
        let node = if let Some(id) = &call.customer_id {
            Node::Customer(id.clone())
        } else if let Some(p) = &call.phone {
            Node::Phone(p.clone())
        } else {
            continue;
        };
        let root = dsu.find(index[&node]);
        let fam_id = canon[&root].clone();
        families.get_mut(&fam_id).unwrap().calls += 1;
        family_of_call.insert(call.call_id.clone(), fam_id);
    }

    FamilyPartition {
        family_of_call,
        families,
        coverage,
    }
}

/// Families whose distinct customer count exceeds the threshold are almost
/// certainly shared accounts (travel agencies) rather than households.
pub fn flag_agencies(partition: &FamilyPartition, threshold: u32) -> BTreeSet<String> {
    partition
        .families
        .iter()
        .filter(|(_, stats)| stats.distinct_customers > threshold)
        .map(|(id, _)| id.clone())
        .collect()
}
