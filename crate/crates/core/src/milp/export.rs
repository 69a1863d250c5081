//! CPLEX-LP and MPS writers.
//!
//! Numbers whose decimal expansion terminates are written exactly. Others
//! are rounded to 15 decimal places and the exact ratio is recorded in a
//! comment line right after the entry (`\` in LP files, `*` in MPS files).
//! Names are sanitized to the characters both formats accept.

use std::fmt::Write as _;
use std::path::Path;

use super::{MilpModel, ObjSense, Sense, VarKind};
use crate::error::{Error, Result};
use crate::rational::Rational;

const DIGITS: usize = 15;
const TERMS_PER_LINE: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    Lp,
    Mps,
}

/// Decimal rendering and, for non-terminating values, the exact ratio.
fn number(v: &Rational) -> (String, Option<String>) {
    match v.to_exact_decimal() {
        Some(s) => (s, None),
        None => {
            let s = v.to_decimal_string(DIGITS);
            let s = s.trim_end_matches('0').trim_end_matches('.').to_string();
            (s, Some(v.to_string()))
        }
    }
}

fn sanitize(name: &str) -> String {
    let mut out: String = name
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || "_.[]{}()!#$%&,;?@'~|".contains(c) {
                c
            } else {
                '_'
            }
        })
        .collect();
    let first = out.chars().next();
    if first.is_none_or(|c| c.is_ascii_digit() || c == '.' || c == 'e' || c == 'E') {
        out.insert(0, '_');
    }
    out
}

struct Names {
    vars: Vec<String>,
    rows: Vec<String>,
}

fn names(m: &MilpModel) -> Names {
    let mut used = std::collections::HashSet::new();
    let mut uniq = |raw: &str| {
        let base = sanitize(raw);
        let mut name = base.clone();
        let mut k = 1;
        while !used.insert(name.clone()) {
            name = format!("{base}_{k}");
            k += 1;
        }
        name
    };
    uniq("obj");
    let vars = m.vars().iter().map(|v| uniq(&v.name)).collect();
    let rows = m
        .constraints()
        .iter()
        .enumerate()
        .map(|(i, c)| {
            if c.name.is_empty() {
                uniq(&format!("c{}", i + 1))
            } else {
                uniq(&c.name)
            }
        })
        .collect();
    Names { vars, rows }
}

fn lp_terms(out: &mut String, label: &str, terms: &[(usize, Rational)], names: &Names, tail: &str) {
    let mut exact = Vec::new();
    let _ = write!(out, " {label}:");
    if terms.is_empty() {
        let _ = write!(out, " 0 {}", names.vars[0]);
    }
    for (k, (j, c)) in terms.iter().enumerate() {
        if k > 0 && k % TERMS_PER_LINE == 0 {
            out.push_str("\n   ");
        }
        let (mag, ratio) = number(&c.abs());
        let sign = if c.is_negative() { "-" } else { "+" };
        let lead = if k == 0 && sign == "+" { String::new() } else { format!(" {sign}") };
        if mag == "1" {
            let _ = write!(out, "{lead} {}", names.vars[*j]);
        } else {
            let _ = write!(out, "{lead} {mag} {}", names.vars[*j]);
        }
        if let Some(r) = ratio {
            exact.push(format!("{} = {}{}", names.vars[*j], if c.is_negative() { "-" } else { "" }, r));
        }
    }
    out.push_str(tail);
    out.push('\n');
    if !exact.is_empty() {
        let _ = writeln!(out, "\\ exact {label}: {}", exact.join(", "));
    }
}

/// Renders a model in CPLEX LP format.
pub fn write_lp(m: &MilpModel) -> String {
    let nm = names(m);
    let mut out = String::new();
    let _ = writeln!(out, "\\ {}", m.name);
    out.push_str(match m.obj_sense() {
        ObjSense::Maximize => "Maximize\n",
        ObjSense::Minimize => "Minimize\n",
    });
    if m.vars().is_empty() {
        out.push_str(" obj:\nSubject To\nEnd\n");
        return out;
    }
    lp_terms(&mut out, "obj", m.objective(), &nm, "");
    out.push_str("Subject To\n");
    for (i, c) in m.constraints().iter().enumerate() {
        let (rhs, ratio) = number(&c.rhs);
        let tail = format!(" {} {}", c.sense, rhs);
        lp_terms(&mut out, &nm.rows[i], &c.coeffs, &nm, &tail);
        if let Some(r) = ratio {
            let _ = writeln!(out, "\\ exact {} rhs = {}", nm.rows[i], r);
        }
    }
    out.push_str("Bounds\n");
    for (j, v) in m.vars().iter().enumerate() {
        if v.kind == VarKind::Binary {
            continue;
        }
        let name = &nm.vars[j];
        let mut exact = Vec::new();
        let mut num = |x: &Rational| {
            let (s, r) = number(x);
            if let Some(r) = r {
                exact.push(r);
            }
            s
        };
        let line = match (&v.lower, &v.upper) {
            (None, None) => format!(" {name} free"),
            (None, Some(u)) => format!(" -inf <= {name} <= {}", num(u)),
            (Some(l), Some(u)) if l == u => format!(" {name} = {}", num(l)),
            (Some(l), Some(u)) => format!(" {} <= {name} <= {}", num(l), num(u)),
            (Some(l), None) if l.is_zero() => continue,
            (Some(l), None) => format!(" {name} >= {}", num(l)),
        };
        out.push_str(&line);
        out.push('\n');
        if !exact.is_empty() {
            let _ = writeln!(out, "\\ exact bounds {name}: {}", exact.join(", "));
        }
    }
    let bins = m.binaries();
    if !bins.is_empty() {
        out.push_str("Binaries\n");
        for chunk in bins.chunks(TERMS_PER_LINE * 2) {
            let line: Vec<&str> = chunk.iter().map(|&j| nm.vars[j].as_str()).collect();
            let _ = writeln!(out, " {}", line.join(" "));
        }
    }
    out.push_str("End\n");
    out
}

fn mps_entry(out: &mut String, col: &str, row: &str, v: &Rational) {
    let (s, r) = number(v);
    let _ = writeln!(out, "    {col:<12} {row:<12} {s}");
    if let Some(r) = r {
        let _ = writeln!(out, "* exact {col} {row} = {r}");
    }
}

/// Renders a model in (free-spacing) MPS format.
pub fn write_mps(m: &MilpModel) -> String {
    let nm = names(m);
    let mut out = String::new();
    let _ = writeln!(out, "NAME          {}", sanitize(&m.name));
    out.push_str("OBJSENSE\n");
    out.push_str(match m.obj_sense() {
        ObjSense::Maximize => "    MAX\n",
        ObjSense::Minimize => "    MIN\n",
    });
    out.push_str("ROWS\n N  obj\n");
    for (i, c) in m.constraints().iter().enumerate() {
        let t = match c.sense {
            Sense::Le => "L",
            Sense::Eq => "E",
            Sense::Ge => "G",
        };
        let _ = writeln!(out, " {t}  {}", nm.rows[i]);
    }

    let mut by_col: Vec<Vec<(usize, &Rational)>> = vec![Vec::new(); m.vars().len()];
    for (i, c) in m.constraints().iter().enumerate() {
        for (j, a) in &c.coeffs {
            by_col[*j].push((i, a));
        }
    }
    let mut obj = vec![None; m.vars().len()];
    for (j, c) in m.objective() {
        obj[*j] = Some(c);
    }

    out.push_str("COLUMNS\n");
    let mut in_int = false;
    let mut marker = 0;
    for (j, v) in m.vars().iter().enumerate() {
        let is_bin = v.kind == VarKind::Binary;
        if is_bin != in_int {
            let tag = if is_bin { "'INTORG'" } else { "'INTEND'" };
            let _ = writeln!(out, "    MARKER{marker:<6} 'MARKER'     {tag}");
            marker += usize::from(!is_bin);
            in_int = is_bin;
        }
        let col = &nm.vars[j];
        if obj[j].is_none() && by_col[j].is_empty() {
            // keep the column declared
            mps_entry(&mut out, col, "obj", &Rational::zero());
        }
        if let Some(c) = obj[j] {
            mps_entry(&mut out, col, "obj", c);
        }
        for (i, a) in &by_col[j] {
            mps_entry(&mut out, col, &nm.rows[*i], a);
        }
    }
    if in_int {
        let _ = writeln!(out, "    MARKER{marker:<6} 'MARKER'     'INTEND'");
    }

    out.push_str("RHS\n");
    for (i, c) in m.constraints().iter().enumerate() {
        if !c.rhs.is_zero() {
            mps_entry(&mut out, "RHS", &nm.rows[i], &c.rhs);
        }
    }

    out.push_str("BOUNDS\n");
    let bound = |out: &mut String, kind: &str, col: &str, v: Option<&Rational>| match v {
        None => {
            let _ = writeln!(out, " {kind} BND       {col}");
        }
        Some(v) => {
            let (s, r) = number(v);
            let _ = writeln!(out, " {kind} BND       {col:<12} {s}");
            if let Some(r) = r {
                let _ = writeln!(out, "* exact {kind} {col} = {r}");
            }
        }
    };
    for (j, v) in m.vars().iter().enumerate() {
        let col = &nm.vars[j];
        if v.kind == VarKind::Binary {
            bound(&mut out, "UP", col, Some(&Rational::one()));
            continue;
        }
        match (&v.lower, &v.upper) {
            (None, None) => bound(&mut out, "FR", col, None),
            (None, Some(u)) => {
                bound(&mut out, "MI", col, None);
                bound(&mut out, "UP", col, Some(u));
            }
            (Some(l), Some(u)) if l == u => bound(&mut out, "FX", col, Some(l)),
            (Some(l), u) => {
                if !l.is_zero() {
                    bound(&mut out, "LO", col, Some(l));
                }
                if let Some(u) = u {
                    bound(&mut out, "UP", col, Some(u));
                }
            }
        }
    }
    out.push_str("ENDATA\n");
    out
}

pub fn export_model(m: &MilpModel, format: ExportFormat, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = match format {
        ExportFormat::Lp => write_lp(m),
        ExportFormat::Mps => write_mps(m),
    };
    std::fs::write(path, text).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::{q, qi};

    #[test]
    fn number_rendering() {
        assert_eq!(number(&qi(3)), ("3".into(), None));
        assert_eq!(number(&q(-5, 8)), ("-0.625".into(), None));
        assert_eq!(number(&q(1, 3)), ("0.333333333333333".into(), Some("1/3".into())));
        assert_eq!(number(&q(2, 3)), ("0.666666666666667".into(), Some("2/3".into())));
    }

    #[test]
    fn names_are_sanitized() {
        assert_eq!(sanitize("x_a_1"), "x_a_1");
        assert_eq!(sanitize("x a:1"), "x_a_1");
        assert_eq!(sanitize("1x"), "_1x");
        assert_eq!(sanitize("e1"), "_e1");
    }

    #[test]
    fn lp_free_and_bounded() {
        let mut m = MilpModel::new("free", ObjSense::Minimize);
        let x = m.add_var("x", VarKind::Continuous, None, None, "").unwrap();
        let y = m.add_var("y", VarKind::Continuous, None, Some(qi(4)), "").unwrap();
        m.set_objective([(x, qi(1)), (y, q(1, 3))]);
        let s = write_lp(&m);
        assert!(s.contains(" x free\n"), "{s}");
        assert!(s.contains(" -inf <= y <= 4\n"), "{s}");
        assert!(s.contains("\\ exact obj: y = 1/3\n"), "{s}");
        let mps = write_mps(&m);
        assert!(mps.contains(" FR BND       x\n"), "{mps}");
        assert!(mps.contains(" MI BND       y\n"), "{mps}");
    }
}
