//! Ratcliff/Obershelp gestalt pattern matching.
//!
//! Longest-match ties resolve to the earliest position in `a`, then in `b`,
//! which is what Python's `difflib.SequenceMatcher` does (without its
//! automatic junk heuristic).

use std::collections::HashMap;

struct Matcher<'a> {
    a: &'a [char],
    b: &'a [char],
    b2j: HashMap<char, Vec<usize>>,
    j2len: Vec<usize>,
    newj2len: Vec<usize>,
}

impl<'a> Matcher<'a> {
    fn new(a: &'a [char], b: &'a [char]) -> Self {
        let mut b2j: HashMap<char, Vec<usize>> = HashMap::new();
        for (j, c) in b.iter().enumerate() {
            b2j.entry(*c).or_default().push(j);
        }
        Matcher {
            a,
            b,
            b2j,
            j2len: vec![0; b.len() + 1],
            newj2len: vec![0; b.len() + 1],
        }
    }

    /// Longest common block within `a[alo..ahi]` x `b[blo..bhi]`.
    fn longest(&mut self, alo: usize, ahi: usize, blo: usize, bhi: usize) -> (usize, usize, usize) {
        let (mut besti, mut bestj, mut best) = (alo, blo, 0);
        // j2len[j + 1] holds the run length ending at b[j] for the previous i.
        let mut touched: Vec<usize> = Vec::new();
        let mut new_touched: Vec<usize> = Vec::new();
        for i in alo..ahi {
            if let Some(js) = self.b2j.get(&self.a[i]) {
                for &j in js {
                    if j < blo {
                        continue;
                    }
                    if j >= bhi {
                        break;
                    }
                    let k = self.j2len[j] + 1;
                    self.newj2len[j + 1] = k;
                    new_touched.push(j + 1);
                    if k > best {
                        besti = i + 1 - k;
                        bestj = j + 1 - k;
                        best = k;
                    }
                }
            }
            for &t in &touched {
                self.j2len[t] = 0;
            }
            for &t in &new_touched {
                self.j2len[t] = self.newj2len[t];
                self.newj2len[t] = 0;
            }
            std::mem::swap(&mut touched, &mut new_touched);
            new_touched.clear();
        }
        for &t in &touched {
            self.j2len[t] = 0;
        }
        (besti, bestj, best)
    }

    fn matched(&mut self) -> usize {
        let mut total = 0;
        let mut queue = vec![(0, self.a.len(), 0, self.b.len())];
        while let Some((alo, ahi, blo, bhi)) = queue.pop() {
            let (i, j, k) = self.longest(alo, ahi, blo, bhi);
            if k == 0 {
                continue;
            }
            total += k;
            if alo < i && blo < j {
                queue.push((alo, i, blo, j));
            }
            if i + k < ahi && j + k < bhi {
                queue.push((i + k, ahi, j + k, bhi));
            }
        }
        total
    }
}

/// Total characters matched by recursive longest-common-block decomposition.
pub fn matched_characters(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    Matcher::new(&a, &b).matched()
}

/// `2·M / (|a| + |b|)`, with 1.0 for two empty strings.
pub fn ratcliff_ratio(a: &str, b: &str) -> f64 {
    let la = a.chars().count();
    let lb = b.chars().count();
    if la + lb == 0 {
        return 1.0;
    }
    2.0 * matched_characters(a, b) as f64 / (la + lb) as f64
}

/// Cheap upper bounds on the ratio, used to skip hopeless comparisons.
pub(crate) fn ratio_upper_bound(a: &str, b: &str) -> f64 {
    let la = a.chars().count();
    let lb = b.chars().count();
    if la + lb == 0 {
        return 1.0;
    }
    let length_bound = 2.0 * la.min(lb) as f64 / (la + lb) as f64;
    let mut counts: HashMap<char, isize> = HashMap::new();
    for c in b.chars() {
        *counts.entry(c).or_default() += 1;
    }
    let mut common = 0usize;
    for c in a.chars() {
        let n = counts.entry(c).or_default();
        if *n > 0 {
            common += 1;
        }
        *n -= 1;
    }
    length_bound.min(2.0 * common as f64 / (la + lb) as f64)
}
