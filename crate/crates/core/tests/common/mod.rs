//! Independent reference computations shared by integration tests.
#![allow(dead_code)]

use profiling_core::store::{Exemplar, ExemplarTable, Facet, FacetSchema, Split};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Table with facets `f0..`, labels `f{i}_{j}`, every row in TRAIN.
pub fn train_table(sizes: &[usize], rows: &[Vec<Option<u32>>]) -> ExemplarTable {
    let facets = sizes
        .iter()
        .enumerate()
        .map(|(i, &v)| Facet::new(format!("f{i}"), (0..v).map(|j| format!("f{i}_{j}")).collect(), vec![0; v]).unwrap())
        .collect();
    let rows = rows
        .iter()
        .enumerate()
        .map(|(r, cells)| Exemplar {
            entity_id: format!("r{r}"),
            cells: cells.clone(),
            split: Split::Train,
            embedding: None,
        })
        .collect();
    ExemplarTable::new(FacetSchema::new(facets).unwrap(), rows).unwrap()
}

/// Random small corpus: 2 or 3 facets, vocabularies of 1 to 3 values, up to
/// 8 rows, about a quarter of the cells missing.
pub fn random_corpus(rng: &mut ChaCha8Rng) -> (Vec<usize>, Vec<Vec<Option<u32>>>) {
    let n = rng.gen_range(2..=3);
    let sizes: Vec<usize> = (0..n).map(|_| rng.gen_range(1..=3)).collect();
    let n_rows = rng.gen_range(1..=8);
    let rows = (0..n_rows)
        .map(|_| {
            sizes
                .iter()
                .map(|&v| (rng.gen::<f64>() >= 0.25).then(|| rng.gen_range(0..v as u32)))
                .collect()
        })
        .collect();
    (sizes, rows)
}

/// Naive Bayes posterior by direct counting over the raw rows, in linear space.
/// Each conditional is estimated on the rows where both facets are known.
pub fn nb_bruteforce(
    sizes: &[usize],
    rows: &[Vec<Option<u32>>],
    alpha: f64,
    known: &[(usize, u32)],
    target: usize,
) -> Vec<f64> {
    let v_t = sizes[target];
    let mut joint = vec![0.0; v_t];
    let with_target = rows.iter().filter(|r| r[target].is_some()).count() as f64;
    for (c, slot) in joint.iter_mut().enumerate() {
        let c = c as u32;
        let n_c = rows.iter().filter(|r| r[target] == Some(c)).count() as f64;
        let mut p = (n_c + alpha) / (with_target + alpha * v_t as f64);
        for &(i, y) in known {
            if i == target {
                continue;
            }
            let both = rows.iter().filter(|r| r[target] == Some(c) && r[i].is_some()).count() as f64;
            let hit = rows.iter().filter(|r| r[target] == Some(c) && r[i] == Some(y)).count() as f64;
            let denom = both + alpha * sizes[i] as f64;
            p *= if denom == 0.0 { 1.0 / sizes[i] as f64 } else { (hit + alpha) / denom };
        }
        *slot = p;
    }
    let z: f64 = joint.iter().sum();
    joint.iter().map(|p| p / z).collect()
}

/// Every query over `sizes`: each facet unknown or set to one of its values.
pub fn all_queries(sizes: &[usize]) -> Vec<Vec<(usize, u32)>> {
    let mut out = vec![Vec::new()];
    for (f, &v) in sizes.iter().enumerate() {
        let mut next = Vec::new();
        for q in &out {
            next.push(q.clone());
            for y in 0..v as u32 {
                let mut q2 = q.clone();
                q2.push((f, y));
                next.push(q2);
            }
        }
        out = next;
    }
    out
}

/// Uniform sample from the probability simplex (Dirichlet(1, ..., 1)).
pub fn simplex(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let e: Vec<f64> = (0..n).map(|_| -(1.0 - rng.gen::<f64>()).ln()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|x| x / s).collect()
}

/// Shannon entropy in bits from raw counts, written out term by term.
pub fn entropy_bits(counts: &[u64]) -> f64 {
    let total: u64 = counts.iter().sum();
    let mut h = 0.0;
    for &c in counts {
        if c > 0 {
            let p = c as f64 / total as f64;
            h -= p * p.log2();
        }
    }
    h
}

/// Spearman's ρ by the `1 - 6Σd²/(n(n²-1))` formula; inputs must be tie-free.
pub fn spearman_no_ties(x: &[f64], y: &[f64]) -> f64 {
    let rank = |v: &[f64]| {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].partial_cmp(&v[b]).unwrap());
        let mut r = vec![0.0; v.len()];
        for (pos, &i) in idx.iter().enumerate() {
            r[i] = pos as f64 + 1.0;
        }
        r
    };
    let (rx, ry) = (rank(x), rank(y));
    let n = x.len() as f64;
    let d2: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - b) * (a - b)).sum();
    1.0 - 6.0 * d2 / (n * (n * n - 1.0))
}
