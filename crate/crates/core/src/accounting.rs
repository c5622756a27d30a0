//! Closed-form parameter counts for the classifiers and a comparison
//! report against the dense baseline.

use std::fmt::Write;

use crate::error::{Error, Result};
use crate::kernels::Variant;

/// `(arc, label)` trainable scalars of the classifiers for one variant.
pub fn count_classifier(variant: Variant, n: usize, m: usize, labels: usize) -> (usize, usize) {
    match variant {
        Variant::Dense => (n * n + n, labels * (m * m + 2 * m + 1)),
        Variant::Symmetric => (n + 2 * n, labels * (m + 2 * m)),
        Variant::Circulant => (2 * n + 2 * n, labels * (2 * m + 2 * m)),
    }
}

/// Components of the reference model outside the two classifiers.
pub const SHARED_COMPONENTS: [(&str, usize); 5] = [
    ("Char LSTM", 241_200),
    ("BiLSTM", 1_927_200),
    ("Arc MLP", 320_800),
    ("Label MLP", 80_200),
    ("Others", 50_400),
];

pub fn default_shared_total() -> usize {
    SHARED_COMPONENTS.iter().map(|(_, c)| c).sum()
}

#[derive(Clone, Debug, PartialEq)]
pub struct ComponentShare {
    pub name: String,
    pub count: usize,
    pub percent: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct VariantRow {
    pub variant: Variant,
    pub arc: usize,
    pub label: usize,
    pub total: usize,
    /// Relative to the dense total, in percent.
    pub delta: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParamReport {
    pub n: usize,
    pub m: usize,
    pub labels: usize,
    pub shared: usize,
    /// Breakdown of the dense model.
    pub components: Vec<ComponentShare>,
    pub rows: Vec<VariantRow>,
}

/// Builds the comparison for classifier dims `n`, `m` and `labels` labels.
/// `shared` replaces the total of the non-classifier components; the
/// breakdown lists the reference components only when it matches them.
pub fn reduction_report(shared: Option<usize>, n: usize, m: usize, labels: usize) -> Result<ParamReport> {
    if n == 0 || m == 0 || labels == 0 {
        return Err(Error::Config("n, m and the label count must be at least 1".into()));
    }
    let reference = default_shared_total();
    let shared = shared.unwrap_or(reference);
    let (dense_arc, dense_label) = count_classifier(Variant::Dense, n, m, labels);
    let baseline = shared + dense_arc + dense_label;

    let mut parts: Vec<(String, usize)> = if shared == reference {
        SHARED_COMPONENTS.iter().map(|(k, c)| (k.to_string(), *c)).collect()
    } else {
        vec![("Shared".to_string(), shared)]
    };
    // Keep the reference ordering: classifiers go before "Others".
    let others = (shared == reference).then(|| parts.pop()).flatten();
    parts.push(("Arc Classifier".into(), dense_arc));
    parts.push(("Label Classifier".into(), dense_label));
    parts.extend(others);
    let components = parts
        .into_iter()
        .map(|(name, count)| ComponentShare {
            name,
            count,
            percent: 100.0 * count as f64 / baseline as f64,
        })
        .collect();

    let rows = Variant::ALL
        .iter()
        .map(|&variant| {
            let (arc, label) = count_classifier(variant, n, m, labels);
            let total = shared + arc + label;
            VariantRow {
                variant,
                arc,
                label,
                total,
                delta: (total as f64 - baseline as f64) / baseline as f64 * 100.0,
            }
        })
        .collect();

    Ok(ParamReport {
        n,
        m,
        labels,
        shared,
        components,
        rows,
    })
}

/// Two-decimal percentage with a stable zero (never `-0.00`).
pub fn format_delta(delta: f64) -> String {
    let s = format!("{delta:.2}");
    if s == "-0.00" {
        "0.00".to_string()
    } else {
        s
    }
}

impl ParamReport {
    pub fn baseline_total(&self) -> usize {
        self.rows
            .iter()
            .find(|r| r.variant == Variant::Dense)
            .map_or(0, |r| r.total)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "n = {}, m = {}, L = {}", self.n, self.m, self.labels);
        let _ = writeln!(out);
        let _ = writeln!(out, "{:<18} {:>10} {:>8}", "component", "params", "share");
        for c in &self.components {
            let _ = writeln!(out, "{:<18} {:>10} {:>7.2}%", c.name, c.count, c.percent);
        }
        let _ = writeln!(out, "{:<18} {:>10} {:>7.2}%", "Total", self.baseline_total(), 100.0);
        let _ = writeln!(out);
        let _ = writeln!(
            out,
            "{:<10} {:>10} {:>10} {:>10} {:>9}",
            "variant", "arc", "label", "total", "delta"
        );
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:<10} {:>10} {:>10} {:>10} {:>8}%",
                r.variant.as_str(),
                r.arc,
                r.label,
                r.total,
                format_delta(r.delta)
            );
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("variant,n,m,labels,arc,label,shared,total,delta_percent\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                r.variant.as_str(),
                self.n,
                self.m,
                self.labels,
                r.arc,
                r.label,
                self.shared,
                r.total,
                format_delta(r.delta)
            );
        }
        out
    }
}
