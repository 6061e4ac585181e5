//! Deliberately naive reference implementations. Each follows the textbook
//! definition directly, shares no code with the library, and trades speed
//! for obviousness.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;

/// A DAG over terms `0..n`; term 0 is the single root and every other term
/// has one to three parents with smaller indices.
#[derive(Debug, Clone)]
pub struct Dag {
    pub parents: Vec<Vec<usize>>,
}

impl Dag {
    pub fn random(rng: &mut impl Rng, n: usize) -> Self {
        let mut parents = vec![Vec::new()];
        for i in 1..n {
            let k = rng.gen_range(1..=3.min(i));
            let mut ps: Vec<usize> = Vec::new();
            while ps.len() < k {
                let p = rng.gen_range(0..i);
                if !ps.contains(&p) {
                    ps.push(p);
                }
            }
            parents.push(ps);
        }
        Dag { parents }
    }

    pub fn len(&self) -> usize {
        self.parents.len()
    }

    pub fn id(i: usize) -> String {
        format!("T:{i:04}")
    }

    pub fn to_obo(&self) -> String {
        let mut out = String::from("format-version: 1.2\n\n");
        for (i, ps) in self.parents.iter().enumerate() {
            out.push_str(&format!("[Term]\nid: {}\nname: term {i}\n", Dag::id(i)));
            for p in ps {
                out.push_str(&format!("is_a: {} ! term {p}\n", Dag::id(*p)));
            }
            out.push('\n');
        }
        out
    }

    /// Reflexive ancestors by fixed-point iteration over the edge list.
    pub fn ancestors(&self, t: usize) -> BTreeSet<usize> {
        let mut set = BTreeSet::from([t]);
        loop {
            let before = set.len();
            for (child, ps) in self.parents.iter().enumerate() {
                if set.contains(&child) {
                    set.extend(ps.iter().copied());
                }
            }
            if set.len() == before {
                return set;
            }
        }
    }

    pub fn descendants(&self, t: usize) -> BTreeSet<usize> {
        (0..self.len()).filter(|&d| self.ancestors(d).contains(&t)).collect()
    }
}

/// Drug → annotated terms.
pub type Annotations = BTreeMap<String, BTreeSet<usize>>;

pub fn random_annotations(rng: &mut impl Rng, dag: &Dag, drugs: usize) -> Annotations {
    (0..drugs)
        .map(|d| {
            let k = rng.gen_range(1..=4);
            let terms = (0..k).map(|_| rng.gen_range(0..dag.len())).collect();
            (format!("drug{d}"), terms)
        })
        .collect()
}

/// `-ln(p)` where `p` is the share of drugs with at least one annotation
/// at or below the term. `None` when no drug reaches it.
pub fn ic(dag: &Dag, ann: &Annotations, t: usize) -> Option<f64> {
    let n = ann.len() as f64;
    let hits = ann
        .values()
        .filter(|terms| terms.iter().any(|&a| dag.ancestors(a).contains(&t)))
        .count();
    (hits > 0).then(|| -(hits as f64 / n).ln())
}

/// Max IC over every term that is an ancestor of both, 0 if none has IC.
pub fn resnik(dag: &Dag, ann: &Annotations, a: usize, b: usize) -> f64 {
    let mut best = 0.0f64;
    for t in 0..dag.len() {
        if dag.ancestors(a).contains(&t) && dag.ancestors(b).contains(&t) {
            if let Some(v) = ic(dag, ann, t) {
                best = best.max(v);
            }
        }
    }
    best
}

/// Mean of row maxima and column maxima, averaged.
pub fn bma(dag: &Dag, ann: &Annotations, d1: &BTreeSet<usize>, d2: &BTreeSet<usize>) -> f64 {
    let mut rows = 0.0;
    for &a in d1 {
        let mut m = 0.0f64;
        for &b in d2 {
            m = m.max(resnik(dag, ann, a, b));
        }
        rows += m;
    }
    let mut cols = 0.0;
    for &b in d2 {
        let mut m = 0.0f64;
        for &a in d1 {
            m = m.max(resnik(dag, ann, a, b));
        }
        cols += m;
    }
    (rows / d1.len() as f64 + cols / d2.len() as f64) / 2.0
}

/// The same definitions with ancestor sets and IC values computed once, so
/// that exhaustive sweeps over many DAGs stay fast.
pub struct Reference {
    pub ancestors: Vec<BTreeSet<usize>>,
    pub ic: Vec<Option<f64>>,
}

impl Reference {
    pub fn new(dag: &Dag, ann: &Annotations) -> Self {
        Reference {
            ancestors: (0..dag.len()).map(|t| dag.ancestors(t)).collect(),
            ic: (0..dag.len()).map(|t| ic(dag, ann, t)).collect(),
        }
    }

    pub fn resnik(&self, a: usize, b: usize) -> f64 {
        let mut best = 0.0f64;
        for t in self.ancestors[a].intersection(&self.ancestors[b]) {
            if let Some(v) = self.ic[*t] {
                best = best.max(v);
            }
        }
        best
    }

    pub fn bma(&self, d1: &BTreeSet<usize>, d2: &BTreeSet<usize>) -> f64 {
        let row = |xs: &BTreeSet<usize>, ys: &BTreeSet<usize>| {
            xs.iter()
                .map(|&x| ys.iter().map(|&y| self.resnik(x, y)).fold(0.0f64, f64::max))
                .sum::<f64>()
                / xs.len() as f64
        };
        (row(d1, d2) + row(d2, d1)) / 2.0
    }
}

/// Share of (positive, negative) pairs ranked correctly, ties counting
/// one half. `None` without both classes.
pub fn auc(scores: &[f64], labels: &[bool]) -> Option<f64> {
    let mut wins = 0.0;
    let mut pairs = 0usize;
    for i in 0..scores.len() {
        for j in 0..scores.len() {
            if labels[i] && !labels[j] {
                pairs += 1;
                if scores[i] > scores[j] {
                    wins += 1.0;
                } else if scores[i] == scores[j] {
                    wins += 0.5;
                }
            }
        }
    }
    (pairs > 0).then(|| wins / pairs as f64)
}

/// Longest common block by exhaustive search, earliest in `a` then in `b`.
fn longest_block(a: &[char], b: &[char]) -> (usize, usize, usize) {
    let mut best = (0, 0, 0);
    for i in 0..a.len() {
        for j in 0..b.len() {
            let mut k = 0;
            while i + k < a.len() && j + k < b.len() && a[i + k] == b[j + k] {
                k += 1;
            }
            if k > best.2 {
                best = (i, j, k);
            }
        }
    }
    best
}

fn matches(a: &[char], b: &[char]) -> usize {
    let (i, j, k) = longest_block(a, b);
    if k == 0 {
        return 0;
    }
    k + matches(&a[..i], &b[..j]) + matches(&a[i + k..], &b[j + k..])
}

/// Ratcliff/Obershelp similarity, `2M / T`.
pub fn ratcliff(a: &str, b: &str) -> f64 {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    if a.is_empty() && b.is_empty() {
        return 1.0;
    }
    2.0 * matches(&a, &b) as f64 / (a.len() + b.len()) as f64
}

pub fn cosine(u: &[f64], v: &[f64]) -> f64 {
    let dot: f64 = u.iter().zip(v).map(|(x, y)| x * y).sum();
    let nu: f64 = u.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nv: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if nu == 0.0 || nv == 0.0 {
        0.0
    } else {
        dot / (nu * nv)
    }
}
