//! Near-duplicate label removal within product groups.

use std::collections::{BTreeMap, BTreeSet};

use md5::{Digest, Md5};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ratcliff::{ratcliff_ratio, ratio_upper_bound};
use super::{adverse_section_text, SplDocument};

pub const DEFAULT_THRESHOLD: f64 = 0.95;

/// Key under which documents without any product RxCUI are reported.
const UNLINKED: &str = "unlinked";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DedupReport {
    /// Product key (sorted RxCUIs joined by `+`) → set ids, in input order.
    pub groups: BTreeMap<String, Vec<String>>,
    /// One per cluster, in input order.
    pub representatives: Vec<String>,
    /// Each cluster's members, representative first.
    pub clusters: Vec<Vec<String>>,
    pub exact_merges: usize,
    pub fuzzy_merges: usize,
}

/// MD5 of the adverse-reactions text with trailing whitespace removed.
pub fn adverse_digest(text: &str) -> [u8; 16] {
    Md5::digest(text.trim_end().as_bytes()).into()
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    /// Joins the two sets keeping the smaller index as root; false if
    /// already joined.
    fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
        self.parent[hi] = lo;
        true
    }
}

fn product_key(doc: &SplDocument) -> String {
    if doc.product_rxcuis.is_empty() {
        return UNLINKED.to_string();
    }
    let ids: BTreeSet<&str> = doc.product_rxcuis.iter().map(String::as_str).collect();
    ids.into_iter().collect::<Vec<_>>().join("+")
}

/// Clusters documents whose adverse-reactions text is identical (by MD5) or
/// at least `threshold` similar, comparing only documents that share a
/// product RxCUI. The first document of each cluster is kept.
///
/// Documents with empty adverse-reactions text never merge.
pub fn deduplicate(docs: &[SplDocument], threshold: f64) -> DedupReport {
    let texts: Vec<String> = docs.iter().map(adverse_section_text).collect();
    let digests: Vec<[u8; 16]> = texts.iter().map(|t| adverse_digest(t)).collect();

    let mut by_product: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, doc) in docs.iter().enumerate() {
        for rx in &doc.product_rxcuis {
            let members = by_product.entry(rx.as_str()).or_default();
            if members.last() != Some(&i) {
                members.push(i);
            }
        }
    }

    let mut uf = UnionFind::new(docs.len());
    let mut exact_merges = 0;
    let mut fuzzy_merges = 0;

    for members in by_product.values() {
        let mut first_with: BTreeMap<[u8; 16], usize> = BTreeMap::new();
        for &i in members.iter().filter(|&&i| !texts[i].trim().is_empty()) {
            match first_with.get(&digests[i]) {
                Some(&j) => {
                    if uf.union(i, j) {
                        exact_merges += 1;
                    }
                }
                None => {
                    first_with.insert(digests[i], i);
                }
            }
        }
    }

    // Fuzzy candidate edges per product group, computed in parallel, then
    // applied in group order so the merge counts are deterministic.
    let groups: Vec<&Vec<usize>> = by_product.values().collect();
    let snapshot: Vec<usize> = (0..docs.len()).map(|i| uf.find(i)).collect();
    let edges: Vec<Vec<(usize, usize)>> = groups
        .par_iter()
        .map(|members| {
            let live: Vec<usize> = members
                .iter()
                .copied()
                .filter(|&i| !texts[i].trim().is_empty())
                .collect();
            let mut local = LocalSets::new(&live, &snapshot);
            let mut found = Vec::new();
            for (x, &i) in live.iter().enumerate() {
                for &j in &live[x + 1..] {
                    if local.same(i, j) {
                        continue;
                    }
                    if ratio_upper_bound(&texts[i], &texts[j]) < threshold {
                        continue;
                    }
                    if ratcliff_ratio(&texts[i], &texts[j]) >= threshold {
                        local.join(i, j);
                        found.push((i, j));
                    }
                }
            }
            found
        })
        .collect();
    for (i, j) in edges.into_iter().flatten() {
        if uf.union(i, j) {
            fuzzy_merges += 1;
        }
    }

    let mut clusters: BTreeMap<usize, Vec<String>> = BTreeMap::new();
    let mut groups_out: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for (i, doc) in docs.iter().enumerate() {
        let root = uf.find(i);
        clusters.entry(root).or_default().push(doc.set_id.clone());
        groups_out.entry(product_key(doc)).or_default().push(doc.set_id.clone());
    }
    let clusters: Vec<Vec<String>> = clusters.into_values().collect();
    DedupReport {
        groups: groups_out,
        representatives: clusters.iter().map(|c| c[0].clone()).collect(),
        clusters,
        exact_merges,
        fuzzy_merges,
    }
}

/// Group-local connectivity seeded from the exact-match pass.
struct LocalSets {
    index: BTreeMap<usize, usize>,
    uf: UnionFind,
}

impl LocalSets {
    fn new(members: &[usize], snapshot: &[usize]) -> Self {
        let index: BTreeMap<usize, usize> = members.iter().enumerate().map(|(k, &i)| (i, k)).collect();
        let mut uf = UnionFind::new(members.len());
        let mut by_root: BTreeMap<usize, usize> = BTreeMap::new();
        for (k, &i) in members.iter().enumerate() {
            match by_root.get(&snapshot[i]) {
                Some(&first) => {
                    uf.union(first, k);
                }
                None => {
                    by_root.insert(snapshot[i], k);
                }
            }
        }
        LocalSets { index, uf }
    }

    fn same(&mut self, i: usize, j: usize) -> bool {
        let (a, b) = (self.index[&i], self.index[&j]);
        self.uf.find(a) == self.uf.find(b)
    }

    fn join(&mut self, i: usize, j: usize) {
        let (a, b) = (self.index[&i], self.index[&j]);
        self.uf.union(a, b);
    }
}
