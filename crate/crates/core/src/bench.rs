//! Percentage gaps, shifted geometric means, performance profiles and
//! tabular reports over collected bound records.
//!
//! Gaps are exact rationals; floating point is used only for averages and
//! profile coordinates.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::rational::Rational;

pub const GAP_DIGITS: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundKind {
    Upper,
    Lower,
}

impl BoundKind {
    fn as_str(self) -> &'static str {
        match self {
            BoundKind::Upper => "upper",
            BoundKind::Lower => "lower",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundRecord {
    pub instance: String,
    pub method: String,
    pub kind: BoundKind,
    pub value: Rational,
    /// Seconds.
    pub runtime: f64,
    pub status: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProfileCurve {
    pub method: String,
    /// `(g, fraction of instances with gap <= g)` at every distinct gap.
    pub points: Vec<(f64, f64)>,
}

impl ProfileCurve {
    /// Fraction of instances with gap at most `g`.
    pub fn at(&self, g: f64) -> f64 {
        self.points
            .iter()
            .take_while(|(x, _)| *x <= g)
            .last()
            .map_or(0.0, |(_, f)| *f)
    }
}

/// `(ub - best_lb) / best_lb * 100`.
pub fn gap_upper(ub: &Rational, best_lb: &Rational) -> Result<Rational> {
    if !best_lb.is_positive() {
        return Err(Error::InvalidArgument(format!("gap reference must be positive, got {best_lb}")));
    }
    Ok((ub - best_lb) / best_lb * Rational::from_int(100))
}

/// `(best_ub - lb) / lb * 100`.
pub fn gap_lower(best_ub: &Rational, lb: &Rational) -> Result<Rational> {
    if !lb.is_positive() {
        return Err(Error::InvalidArgument(format!("lower bound must be positive, got {lb}")));
    }
    Ok((best_ub - lb) / lb * Rational::from_int(100))
}

pub fn format_gap(g: &Rational) -> String {
    g.to_decimal_string(GAP_DIGITS)
}

/// `(Π (x_i + s))^(1/n) - s`.
pub fn shifted_geomean(values: &[f64], shift: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::InvalidArgument("shifted geometric mean of an empty list".into()));
    }
    if let Some(x) = values.iter().find(|x| !(**x + shift > 0.0)) {
        return Err(Error::InvalidArgument(format!("value {x} + shift {shift} is not positive")));
    }
    let n = values.len() as f64;
    let product: f64 = values.iter().map(|x| x + shift).product();
    let mean = if product.is_finite() && product > 0.0 {
        product.powf(1.0 / n)
    } else {
        (values.iter().map(|x| (x + shift).ln()).sum::<f64>() / n).exp()
    };
    Ok(mean - shift)
}

/// Best known bounds per instance: `(max lower, min upper)`.
pub fn reference_bounds(records: &[BoundRecord]) -> BTreeMap<String, (Option<Rational>, Option<Rational>)> {
    let mut out: BTreeMap<String, (Option<Rational>, Option<Rational>)> = BTreeMap::new();
    for r in records {
        let e = out.entry(r.instance.clone()).or_default();
        match r.kind {
            BoundKind::Lower => {
                if e.0.as_ref().is_none_or(|b| r.value > *b) {
                    e.0 = Some(r.value.clone());
                }
            }
            BoundKind::Upper => {
                if e.1.as_ref().is_none_or(|b| r.value < *b) {
                    e.1 = Some(r.value.clone());
                }
            }
        }
    }
    out
}

/// Gap of every record against the opposite best bound of its instance.
pub fn record_gaps(records: &[BoundRecord]) -> Result<Vec<Rational>> {
    let refs = reference_bounds(records);
    records
        .iter()
        .map(|r| {
            let (best_lb, best_ub) = &refs[&r.instance];
            match r.kind {
                BoundKind::Upper => {
                    let lb = best_lb.as_ref().ok_or_else(|| missing_ref(r))?;
                    gap_upper(&r.value, lb)
                }
                BoundKind::Lower => {
                    let ub = best_ub.as_ref().ok_or_else(|| missing_ref(r))?;
                    gap_lower(ub, &r.value)
                }
            }
        })
        .collect()
}

fn missing_ref(r: &BoundRecord) -> Error {
    Error::InvalidArgument(format!(
        "instance {:?} has no {} bound to compare {} against",
        r.instance,
        match r.kind {
            BoundKind::Upper => "lower",
            BoundKind::Lower => "upper",
        },
        r.method
    ))
}

/// Step curves from per-method gap lists.
pub fn profile_from_gaps(gaps: &BTreeMap<String, Vec<Rational>>) -> Result<Vec<ProfileCurve>> {
    if gaps.is_empty() {
        return Err(Error::InvalidArgument("no gaps to profile".into()));
    }
    let mut curves = Vec::with_capacity(gaps.len());
    for (method, g) in gaps {
        if g.is_empty() {
            return Err(Error::InvalidArgument(format!("method {method:?} has no gaps")));
        }
        let mut sorted = g.clone();
        sorted.sort();
        let n = sorted.len() as f64;
        let mut points: Vec<(f64, f64)> = Vec::new();
        for (k, x) in sorted.iter().enumerate() {
            if sorted.get(k + 1) == Some(x) {
                continue;
            }
            points.push((x.to_f64(), (k + 1) as f64 / n));
        }
        curves.push(ProfileCurve {
            method: method.clone(),
            points,
        });
    }
    Ok(curves)
}

/// Performance profiles of the given records, grouped by method.
pub fn performance_profile(records: &[BoundRecord]) -> Result<Vec<ProfileCurve>> {
    if records.is_empty() {
        return Err(Error::InvalidArgument("no records to profile".into()));
    }
    let gaps = record_gaps(records)?;
    let mut by_method: BTreeMap<String, Vec<Rational>> = BTreeMap::new();
    for (r, g) in records.iter().zip(gaps) {
        by_method.entry(r.method.clone()).or_default().push(g);
    }
    profile_from_gaps(&by_method)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Markdown,
}

struct Row {
    instance: String,
    method: String,
    kind: String,
    value: String,
    gap: String,
    runtime: String,
}

fn rows(records: &[BoundRecord]) -> Vec<Row> {
    let refs = reference_bounds(records);
    let mut order: Vec<usize> = (0..records.len()).collect();
    order.sort_by(|&a, &b| {
        let (x, y) = (&records[a], &records[b]);
        (&x.instance, &x.method).cmp(&(&y.instance, &y.method))
    });
    let gap_of = |r: &BoundRecord| -> Option<Rational> {
        let (lb, ub) = &refs[&r.instance];
        match r.kind {
            BoundKind::Upper => gap_upper(&r.value, lb.as_ref()?).ok(),
            BoundKind::Lower => gap_lower(ub.as_ref()?, &r.value).ok(),
        }
    };
    let mut out: Vec<Row> = order
        .iter()
        .map(|&k| {
            let r = &records[k];
            Row {
                instance: r.instance.clone(),
                method: r.method.clone(),
                kind: r.kind.as_str().into(),
                value: r.value.to_exact_decimal().unwrap_or_else(|| r.value.to_string()),
                gap: gap_of(r).map(|g| format_gap(&g)).unwrap_or_default(),
                runtime: format!("{:.3}", r.runtime),
            }
        })
        .collect();

    let methods: BTreeSet<&str> = records.iter().map(|r| r.method.as_str()).collect();
    for m in methods {
        let group: Vec<&BoundRecord> = records.iter().filter(|r| r.method == m).collect();
        let gaps: Vec<f64> = group.iter().filter_map(|r| gap_of(r)).map(|g| g.to_f64()).collect();
        let times: Vec<f64> = group.iter().map(|r| r.runtime).collect();
        let stat = |v: &[f64], which: &str| -> Option<f64> {
            if v.is_empty() {
                return None;
            }
            Some(match which {
                "min" => v.iter().copied().fold(f64::INFINITY, f64::min),
                "max" => v.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                _ => shifted_geomean(v, 1.0).ok()?,
            })
        };
        for which in ["min", "avg", "max"] {
            out.push(Row {
                instance: which.into(),
                method: m.into(),
                kind: group[0].kind.as_str().into(),
                value: String::new(),
                gap: stat(&gaps, which).map(|x| format!("{x:.2}")).unwrap_or_default(),
                runtime: stat(&times, which).map(|x| format!("{x:.3}")).unwrap_or_default(),
            });
        }
    }
    out
}

const HEADER: [&str; 6] = ["instance", "method", "kind", "value", "gap", "runtime"];

/// Renders the records followed by min / avg / max summary rows per method.
/// Averages are shifted geometric means with shift 1.
pub fn report(records: &[BoundRecord], format: ReportFormat) -> Result<String> {
    let rows = rows(records);
    match format {
        ReportFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            let io = |e: csv::Error| Error::InvalidArgument(format!("csv: {e}"));
            w.write_record(HEADER).map_err(io)?;
            for r in &rows {
                w.write_record([&r.instance, &r.method, &r.kind, &r.value, &r.gap, &r.runtime])
                    .map_err(io)?;
            }
            let bytes = w.into_inner().map_err(|e| Error::InvalidArgument(format!("csv: {e}")))?;
            Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
        }
        ReportFormat::Markdown => {
            let mut s = String::new();
            let _ = writeln!(s, "| {} |", HEADER.join(" | "));
            let _ = writeln!(s, "|{}", "---|".repeat(HEADER.len()));
            for r in &rows {
                let _ = writeln!(
                    s,
                    "| {} | {} | {} | {} | {} | {} |",
                    r.instance, r.method, r.kind, r.value, r.gap, r.runtime
                );
            }
            Ok(s)
        }
    }
}

pub fn write_report(records: &[BoundRecord], format: ReportFormat, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, report(records, format)?).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Profile curves as CSV `method,g,fraction`.
pub fn profile_csv(curves: &[ProfileCurve]) -> String {
    let mut s = String::from("method,g,fraction\n");
    for c in curves {
        for (g, f) in &c.points {
            let _ = writeln!(s, "{},{g},{f}", c.method);
        }
    }
    s
}
