//! Data-space quantification: facet entropies, value-space size, training density.

use std::fmt::Write as _;

use num_bigint::BigUint;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::store::{ExemplarTable, FacetSchema, Split};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FacetEntropy {
    /// `H_i` in bits.
    pub bits: f64,
    /// `H_i / log2(n_ex(i))`, zero when `n_ex(i) <= 1`.
    pub normalized: f64,
}

/// Entropy of a facet's value distribution from per-category counts.
pub fn facet_entropy(counts: &[u64]) -> Result<FacetEntropy> {
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return Err(Error::InvalidArgument("entropy of all-zero counts".into()));
    }
    let n = total as f64;
    let bits = counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.log2()
        })
        .sum::<f64>()
        .max(0.0);
    let normalized = if total <= 1 { 0.0 } else { bits / n.log2() };
    Ok(FacetEntropy { bits, normalized })
}

/// Exact value-space size `Π v_i` and average training density.
#[derive(Clone, Debug, PartialEq)]
pub struct DataspaceSize {
    pub d_size: BigUint,
    pub log10_d_size: f64,
    /// `log10(d_size / n_ex)`; `None` when there are no training rows.
    pub log10_d_avg_d: Option<f64>,
    pub training_rows: u64,
    /// Facets with an empty vocabulary, left out of the product.
    pub excluded: Vec<String>,
}

impl DataspaceSize {
    /// `d_size / n_ex` as a float when it is representable.
    pub fn d_avg_d(&self) -> Option<f64> {
        self.log10_d_avg_d.map(|l| 10f64.powf(l))
    }
}

/// log10 of an arbitrarily large integer, from its leading decimal digits.
pub fn log10_biguint(n: &BigUint) -> f64 {
    let digits = n.to_str_radix(10);
    if digits == "0" {
        return f64::NEG_INFINITY;
    }
    let lead = &digits[..digits.len().min(17)];
    let mantissa: f64 = lead.parse().unwrap();
    mantissa.log10() + (digits.len() - lead.len()) as f64
}

pub fn dataspace_size(schema: &FacetSchema, training_rows: u64) -> DataspaceSize {
    let mut d_size = BigUint::from(1u32);
    let mut excluded = Vec::new();
    for f in schema.facets() {
        if f.size() == 0 {
            tracing::warn!(facet = f.name(), "empty vocabulary excluded from value-space size");
            excluded.push(f.name().to_string());
            continue;
        }
        d_size *= BigUint::from(f.size());
    }
    let log10_d_size = log10_biguint(&d_size);
    let log10_d_avg_d = (training_rows > 0).then(|| log10_d_size - (training_rows as f64).log10());
    DataspaceSize {
        d_size,
        log10_d_size,
        log10_d_avg_d,
        training_rows,
        excluded,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FacetReport {
    pub facet: String,
    pub n_ex: u64,
    pub v: usize,
    pub entropy_bits: Option<f64>,
    pub normalized_entropy: Option<f64>,
    pub empty: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DataspaceReport {
    pub facets: Vec<FacetReport>,
    /// Decimal string; may be far beyond any machine integer.
    pub d_size: String,
    pub log10_d_size: f64,
    pub log10_d_avg_d: Option<f64>,
    pub training_rows: u64,
    pub excluded_facets: Vec<String>,
}

impl DataspaceReport {
    pub fn from_table(table: &ExemplarTable) -> Self {
        let schema = table.schema();
        let stats = table.stats();
        let facets = schema
            .facets()
            .iter()
            .zip(&stats)
            .map(|(f, s)| {
                let h = facet_entropy(f.value_counts()).ok();
                FacetReport {
                    facet: f.name().to_string(),
                    n_ex: s.n_ex,
                    v: s.v,
                    entropy_bits: h.map(|h| h.bits),
                    normalized_entropy: h.map(|h| h.normalized),
                    empty: s.empty,
                }
            })
            .collect();
        let training_rows = table.split_rows(Split::Train).count() as u64;
        let size = dataspace_size(schema, training_rows);
        DataspaceReport {
            facets,
            d_size: size.d_size.to_string(),
            log10_d_size: size.log10_d_size,
            log10_d_avg_d: size.log10_d_avg_d,
            training_rows,
            excluded_facets: size.excluded,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Aligned text table: attribute, n_ex, v_i, H_i, H_i'.
    pub fn to_text(&self) -> String {
        let width = self
            .facets
            .iter()
            .map(|f| f.facet.len())
            .max()
            .unwrap_or(0)
            .max("attribute".len());
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:>width$}  {:>12}  {:>6}  {:>6}  {:>6}",
            "attribute", "n_ex", "v_i", "H_i", "H_i'"
        );
        let _ = writeln!(out, "{}", "-".repeat(width + 40));
        for f in &self.facets {
            let fmt = |x: Option<f64>| x.map_or("-".to_string(), |x| format!("{x:.2}"));
            let flag = if f.empty { "  (no training values)" } else { "" };
            let _ = writeln!(
                out,
                "{:>width$}  {:>12}  {:>6}  {:>6}  {:>6}{flag}",
                f.facet,
                group_thousands(f.n_ex),
                group_thousands(f.v as u64),
                fmt(f.entropy_bits),
                fmt(f.normalized_entropy),
            );
        }
        let _ = writeln!(out);
        let _ = writeln!(out, "training rows     {}", group_thousands(self.training_rows));
        let _ = writeln!(out, "log10 d_size      {:.2}", self.log10_d_size);
        match self.log10_d_avg_d {
            Some(v) => {
                let _ = writeln!(out, "log10 d_avg-d     {v:.2}");
            }
            None => {
                let _ = writeln!(out, "log10 d_avg-d     n/a");
            }
        }
        if !self.excluded_facets.is_empty() {
            let _ = writeln!(out, "excluded (v_i=0)  {}", self.excluded_facets.join(", "));
        }
        out
    }
}

fn group_thousands(n: u64) -> String {
    let s = n.to_string();
    let mut out = String::with_capacity(s.len() + s.len() / 3);
    for (i, ch) in s.chars().enumerate() {
        if i > 0 && (s.len() - i).is_multiple_of(3) {
            out.push(',');
        }
        out.push(ch);
    }
    out
}
