//! Independent reference implementations and input generators shared by the
//! integration tests and the acceptance suite.

#![allow(dead_code)]

use std::collections::BTreeSet;

use siat_core::framewire::{Compression, Frame, MiniBatch, PixelFormat};
use siat_core::knowledge::{Binding, Pattern, Query, Slot, Term, Triple};
use siat_core::mining::XorShift64Star;

pub fn rng(seed: u64) -> XorShift64Star {
    XorShift64Star::new(seed)
}

/// Uniform integer in lo..=hi.
pub fn between(r: &mut XorShift64Star, lo: usize, hi: usize) -> usize {
    lo + r.below(hi - lo + 1)
}

pub fn normal(r: &mut XorShift64Star) -> f64 {
    // Box-Muller.
    let u1 = r.next_f64().max(f64::MIN_POSITIVE);
    let u2 = r.next_f64();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

pub fn random_minibatch(r: &mut XorShift64Star) -> MiniBatch {
    let format = if r.below(2) == 0 { PixelFormat::Gray8 } else { PixelFormat::Rgb24 };
    let compression = if r.below(2) == 0 { Compression::None } else { Compression::Deflate };
    let (w, h) = (between(r, 1, 64) as u16, between(r, 1, 64) as u16);
    let n = between(r, 0, 32);
    // Mix flat and noisy frames so both compress differently.
    let frames = (0..n)
        .map(|_| {
            let len = w as usize * h as usize * format.bytes_per_pixel();
            let pixels = if r.below(3) == 0 {
                vec![r.below(256) as u8; len]
            } else {
                (0..len).map(|_| r.below(256) as u8).collect()
            };
            Frame::new(w, h, format, pixels).unwrap()
        })
        .collect();
    let id_len = between(r, 1, 12);
    MiniBatch {
        source_id: (0..id_len).map(|_| (b'a' + r.below(26) as u8) as char).collect(),
        batch_seq: r.next_u64() >> 1,
        start_ts_micros: r.next_u64() >> 8,
        frame_interval_micros: between(r, 1, 100_000) as u32,
        frames,
        compression,
    }
}

/// Sample covariance with the n−1 denominator.
pub fn covariance(rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = rows.len();
    let d = rows[0].len();
    let mean: Vec<f64> = (0..d).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n as f64).collect();
    let mut c = vec![vec![0.0; d]; d];
    for i in 0..d {
        for j in 0..d {
            c[i][j] = rows.iter().map(|r| (r[i] - mean[i]) * (r[j] - mean[j])).sum::<f64>() / (n - 1) as f64;
        }
    }
    c
}

/// Cyclic Jacobi eigensolver for a symmetric matrix. Returns eigenvalues in
/// descending order and the matching unit eigenvectors.
pub fn jacobi_eigen(mut a: Vec<Vec<f64>>) -> (Vec<f64>, Vec<Vec<f64>>) {
    let d = a.len();
    let mut v = vec![vec![0.0; d]; d];
    for (i, row) in v.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    for _sweep in 0..100 {
        let off: f64 = (0..d)
            .flat_map(|i| (0..d).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..d {
            for q in p + 1..d {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..d {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..d {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for row in v.iter_mut() {
                    let (vkp, vkq) = (row[p], row[q]);
                    row[p] = c * vkp - s * vkq;
                    row[q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&x, &y| a[y][y].total_cmp(&a[x][x]));
    let values = order.iter().map(|&i| a[i][i]).collect();
    let vectors = order.iter().map(|&i| (0..d).map(|k| v[k][i]).collect()).collect();
    (values, vectors)
}

/// Σ v vᵀ over the given vectors.
pub fn projector(vectors: &[&Vec<f64>]) -> Vec<Vec<f64>> {
    let d = vectors.first().map_or(0, |v| v.len());
    let mut p = vec![vec![0.0; d]; d];
    for v in vectors {
        for i in 0..d {
            for j in 0..d {
                p[i][j] += v[i] * v[j];
            }
        }
    }
    p
}

/// Within-cluster sum of squares of a labelling, computed two-pass.
pub fn partition_inertia(points: &[Vec<f64>], labels: &[usize], k: usize) -> f64 {
    let d = points[0].len();
    let mut total = 0.0;
    for c in 0..k {
        let members: Vec<&Vec<f64>> = points.iter().zip(labels).filter(|(_, &l)| l == c).map(|(p, _)| p).collect();
        if members.is_empty() {
            continue;
        }
        let mean: Vec<f64> = (0..d).map(|j| members.iter().map(|p| p[j]).sum::<f64>() / members.len() as f64).collect();
        total += members
            .iter()
            .map(|p| p.iter().zip(&mean).map(|(a, m)| (a - m) * (a - m)).sum::<f64>())
            .sum::<f64>();
    }
    total
}

/// Minimum within-cluster sum of squares over every partition of `points`
/// into exactly `k` non-empty clusters. The search uses running sums; every
/// labelling within rounding distance of the best is re-evaluated exactly.
pub fn exhaustive_kmeans(points: &[Vec<f64>], k: usize) -> f64 {
    struct Search<'a> {
        points: &'a [Vec<f64>],
        k: usize,
        sum: Vec<Vec<f64>>,
        sq: Vec<f64>,
        n: Vec<usize>,
        labels: Vec<usize>,
        cutoff: Option<f64>,
        best: f64,
    }
    impl Search<'_> {
        fn approx(&self) -> f64 {
            (0..self.k)
                .filter(|&c| self.n[c] > 0)
                .map(|c| self.sq[c] - self.sum[c].iter().map(|s| s * s).sum::<f64>() / self.n[c] as f64)
                .sum()
        }

        fn go(&mut self, i: usize, used: usize) {
            if used + (self.points.len() - i) < self.k {
                return;
            }
            if i == self.points.len() {
                let a = self.approx();
                match self.cutoff {
                    None => self.best = self.best.min(a),
                    Some(cut) if a <= cut => {
                        let exact = partition_inertia(self.points, &self.labels, self.k);
                        self.best = self.best.min(exact);
                    }
                    Some(_) => {}
                }
                return;
            }
            let p = &self.points[i];
            let sq: f64 = p.iter().map(|x| x * x).sum();
            // Restricted growth: point i joins an open cluster or opens the next.
            for c in 0..(used + 1).min(self.k) {
                self.n[c] += 1;
                self.sq[c] += sq;
                for (s, x) in self.sum[c].iter_mut().zip(p) {
                    *s += x;
                }
                self.labels[i] = c;
                self.go(i + 1, used.max(c + 1));
                self.n[c] -= 1;
                self.sq[c] -= sq;
                for (s, x) in self.sum[c].iter_mut().zip(p) {
                    *s -= x;
                }
            }
        }
    }
    let d = points[0].len();
    let mut s = Search {
        points,
        k,
        sum: vec![vec![0.0; d]; k],
        sq: vec![0.0; k],
        n: vec![0; k],
        labels: vec![0; points.len()],
        cutoff: None,
        best: f64::INFINITY,
    };
    s.go(0, 0);
    let scale: f64 = points.iter().flatten().map(|x| x * x).sum();
    s.cutoff = Some(s.best + 1e-9 * (1.0 + scale));
    s.best = f64::INFINITY;
    s.go(0, 0);
    s.best
}

/// `k` blobs of `n` points in `d` dimensions: centres 100 apart per axis,
/// unit spread.
pub fn blobs(r: &mut XorShift64Star, n: usize, k: usize, d: usize) -> Vec<Vec<f64>> {
    let centres: Vec<Vec<f64>> = (0..k)
        .map(|c| (0..d).map(|j| if j == c % d { 100.0 * (c + 1) as f64 } else { 0.0 } + 50.0 * r.next_f64()).collect())
        .collect();
    (0..n)
        .map(|i| centres[i % k].iter().map(|m| m + normal(r)).collect())
        .collect()
}

/// Small vocabulary so random stores and queries overlap.
pub fn random_term(r: &mut XorShift64Star, position: usize) -> Term {
    match (position, r.below(4)) {
        (0, _) => Term::iri(format!("ex:s{}", r.below(12))).unwrap(),
        (1, _) => Term::iri(format!("ex:p{}", r.below(4))).unwrap(),
        (_, 0) => Term::literal(format!("v{}", r.below(6))),
        (_, 1) => Term::integer(r.below(6) as i64),
        _ => Term::iri(format!("ex:s{}", r.below(12))).unwrap(),
    }
}

pub fn random_triples(r: &mut XorShift64Star, max: usize) -> Vec<Triple> {
    let n = r.below(max + 1);
    (0..n)
        .map(|_| Triple::new(random_term(r, 0), random_term(r, 1), random_term(r, 2)).unwrap())
        .collect()
}

pub fn random_query(r: &mut XorShift64Star, max_patterns: usize) -> Query {
    const VARS: [&str; 3] = ["a", "b", "c"];
    let n = between(r, 1, max_patterns);
    let patterns: Vec<Pattern> = (0..n)
        .map(|_| {
            let mut slot = |pos: usize| {
                if r.below(2) == 0 {
                    Slot::Var(VARS[r.below(3)].to_string())
                } else {
                    Slot::Term(random_term(r, pos))
                }
            };
            Pattern {
                s: slot(0),
                p: slot(1),
                o: slot(2),
            }
        })
        .collect();
    let mut used: Vec<String> = Vec::new();
    for p in &patterns {
        for s in [&p.s, &p.p, &p.o] {
            if let Slot::Var(v) = s {
                if !used.contains(v) {
                    used.push(v.clone());
                }
            }
        }
    }
    if used.is_empty() {
        // Give the query at least one variable to select.
        let mut patterns = patterns;
        patterns[0].s = Slot::Var("a".into());
        return Query {
            vars: vec!["a".into()],
            patterns,
        };
    }
    let mut vars: Vec<String> = used.iter().filter(|_| r.below(2) == 0).cloned().collect();
    if vars.is_empty() {
        vars.push(used[0].clone());
    }
    Query { vars, patterns }
}

/// Scans every triple for every pattern, in the written order, keeps the
/// distinct full assignments, projects and sorts by rendered values.
pub fn brute_force_query(triples: &[Triple], q: &Query) -> Vec<Binding> {
    let mut sols: Vec<Vec<(String, Term)>> = vec![Vec::new()];
    for pat in &q.patterns {
        let mut next = BTreeSet::new();
        for sol in &sols {
            'triples: for t in triples {
                let mut fresh: Vec<(&String, &Term)> = Vec::new();
                for (slot, term) in [(&pat.s, &t.s), (&pat.p, &t.p), (&pat.o, &t.o)] {
                    match slot {
                        Slot::Term(c) if c != term => continue 'triples,
                        Slot::Term(_) => {}
                        Slot::Var(v) => {
                            let bound = sol
                                .iter()
                                .find(|(n, _)| n == v)
                                .map(|(_, b)| b)
                                .or_else(|| fresh.iter().find(|(n, _)| *n == v).map(|(_, b)| *b));
                            match bound {
                                Some(b) if b != term => continue 'triples,
                                Some(_) => {}
                                None => fresh.push((v, term)),
                            }
                        }
                    }
                }
                let mut ext = sol.clone();
                ext.extend(fresh.into_iter().map(|(v, t)| (v.clone(), t.clone())));
                ext.sort();
                next.insert(ext);
            }
        }
        sols = next.into_iter().collect();
    }
    let distinct: BTreeSet<Vec<(String, Term)>> = sols
        .into_iter()
        .map(|mut s| {
            s.sort();
            s
        })
        .collect();
    let mut rows: Vec<(Vec<String>, Binding)> = distinct
        .into_iter()
        .map(|s| {
            let b: Binding = q
                .vars
                .iter()
                .map(|v| (v.clone(), s.iter().find(|(n, _)| n == v).unwrap().1.clone()))
                .collect();
            (b.iter().map(|(_, t)| t.to_string()).collect(), b)
        })
        .collect();
    rows.sort_by(|a, b| a.0.cmp(&b.0));
    rows.into_iter().map(|(_, b)| b).collect()
}
