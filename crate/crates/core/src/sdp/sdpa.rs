//! SDPA sparse format (`.dat-s`).
//!
//! The file describes `X = Σ F_i y_i − F_0 ⪰ 0`. A positive-form block
//! `C + Σ yᵢAᵢ − sI ⪰ 0` is written with `F_i = A_i` and `F_0 = sI − C`.
//! Layout: variable count, block count, block sizes, the objective vector
//! (all zeros for a feasibility problem), then `matno blkno i j value` lines
//! for the upper triangle, sorted, with 17 significant digits.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::lmi::{ConstraintTag, SparseMat};

use super::{SdpBlock, SdpProblem};

fn fmt_value(v: f64) -> String {
    format!("{v:.16e}")
}

/// Serializes a problem. Blocks keep their declaration order.
pub fn export_sdpa(p: &SdpProblem) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{}", p.n_vars);
    let _ = writeln!(out, "{}", p.blocks.len());
    let sizes: Vec<String> = p.blocks.iter().map(|b| b.dim.to_string()).collect();
    let _ = writeln!(out, "{}", sizes.join(" "));
    let c: Vec<&str> = vec!["0"; p.n_vars];
    let _ = writeln!(out, "{}", c.join(" "));

    // (matno, blkno, i, j, value) with 1-based indices, upper triangle
    let mut lines: Vec<(usize, usize, usize, usize, f64)> = Vec::new();
    for (bi, b) in p.blocks.iter().enumerate() {
        let f0 = SparseMat::identity(b.dim).scale(b.shift).sub(&b.constant);
        for &(i, j, v) in f0.entries() {
            if i <= j {
                lines.push((0, bi + 1, i + 1, j + 1, v));
            }
        }
        for (k, m) in &b.coeffs {
            for &(i, j, v) in m.entries() {
                if i <= j {
                    lines.push((k + 1, bi + 1, i + 1, j + 1, v));
                }
            }
        }
    }
    lines.sort_by_key(|l| (l.0, l.1, l.2, l.3));
    for (m, b, i, j, v) in lines {
        let _ = writeln!(out, "{m} {b} {i} {j} {}", fmt_value(v));
    }
    out
}

fn is_comment(line: &str) -> bool {
    let t = line.trim_start();
    t.is_empty() || t.starts_with('"') || t.starts_with('*')
}

fn numbers(line: &str) -> Vec<&str> {
    line.split(|c: char| c.is_whitespace() || c == ',' || c == '{' || c == '}' || c == '(' || c == ')')
        .filter(|s| !s.is_empty())
        .collect()
}

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse(format!("line {line}: {}", msg.into()))
}

/// Parses an SDPA sparse file. Imported blocks are positive form with zero
/// shift and constant `−F_0`, so that exporting them again reproduces the
/// input byte for byte when it was produced by [`export_sdpa`].
pub fn import_sdpa(text: &str) -> Result<SdpProblem> {
    let mut header: Vec<(usize, String)> = Vec::new();
    let mut body_start = None;
    for (idx, line) in text.lines().enumerate() {
        if is_comment(line) {
            continue;
        }
        if header.len() < 4 {
            header.push((idx + 1, line.to_string()));
            if header.len() == 4 {
                body_start = Some(idx + 1);
                break;
            }
        }
    }
    if header.len() < 3 {
        return Err(parse_err(header.last().map_or(1, |h| h.0), "incomplete header"));
    }
    let int = |(ln, s): &(usize, String)| -> Result<usize> {
        let tok = numbers(s);
        tok.first()
            .ok_or_else(|| parse_err(*ln, "expected an integer"))?
            .parse::<usize>()
            .map_err(|e| parse_err(*ln, e.to_string()))
    };
    let n_vars = int(&header[0])?;
    let n_blocks = int(&header[1])?;
    let sizes: Vec<i64> = numbers(&header[2].1)
        .iter()
        .map(|t| t.parse::<i64>().map_err(|e| parse_err(header[2].0, e.to_string())))
        .collect::<Result<_>>()?;
    if sizes.len() != n_blocks {
        return Err(parse_err(header[2].0, format!("expected {n_blocks} block sizes, found {}", sizes.len())));
    }
    if let Some(s) = sizes.iter().find(|&&s| s <= 0) {
        return Err(parse_err(header[2].0, format!("diagonal or empty block size {s} is not supported")));
    }
    if header.len() == 4 {
        let c = numbers(&header[3].1);
        if c.len() != n_vars {
            return Err(parse_err(header[3].0, format!("objective has {} entries, expected {n_vars}", c.len())));
        }
        for t in c {
            t.parse::<f64>().map_err(|e| parse_err(header[3].0, e.to_string()))?;
        }
    }
    let dims: Vec<usize> = sizes.iter().map(|&s| s as usize).collect();
    let mut triplets: Vec<Vec<Vec<(usize, usize, f64)>>> = vec![vec![Vec::new(); n_vars + 1]; n_blocks];
    let start = body_start.unwrap_or(usize::MAX);
    for (idx, line) in text.lines().enumerate().skip(start) {
        if is_comment(line) {
            continue;
        }
        let ln = idx + 1;
        let tok = numbers(line);
        if tok.len() != 5 {
            return Err(parse_err(ln, format!("expected 5 fields, found {}", tok.len())));
        }
        let ix = |t: &str| t.parse::<usize>().map_err(|e| parse_err(ln, e.to_string()));
        let (m, b, i, j) = (ix(tok[0])?, ix(tok[1])?, ix(tok[2])?, ix(tok[3])?);
        let v: f64 = tok[4].parse().map_err(|e: std::num::ParseFloatError| parse_err(ln, e.to_string()))?;
        if m > n_vars || b == 0 || b > n_blocks {
            return Err(parse_err(ln, "matrix or block index out of range"));
        }
        let d = dims[b - 1];
        if i == 0 || j == 0 || i > d || j > d {
            return Err(parse_err(ln, "entry index out of range"));
        }
        let (i, j) = (i.min(j) - 1, i.max(j) - 1);
        triplets[b - 1][m].push((i, j, v));
        if i != j {
            triplets[b - 1][m].push((j, i, v));
        }
    }
    let blocks = triplets
        .into_iter()
        .enumerate()
        .map(|(bi, per_mat)| {
            let d = dims[bi];
            let mut it = per_mat.into_iter();
            let f0 = SparseMat::from_triplets(d, d, it.next().unwrap_or_default());
            let coeffs = it
                .enumerate()
                .map(|(k, t)| (k, SparseMat::from_triplets(d, d, t)))
                .filter(|(_, m)| !m.is_zero())
                .collect();
            SdpBlock {
                dim: d,
                constant: f0.scale(-1.0),
                coeffs,
                shift: 0.0,
                negated: false,
                strict: false,
                tag: ConstraintTag::Other(format!("block {}", bi + 1)),
            }
        })
        .collect();
    Ok(SdpProblem {
        n_vars,
        blocks,
        directory: Vec::new(),
    })
}

/// Extracts the variable vector from a solver output: either a line holding
/// `xVec` followed by the numbers (SDPA, CSDP style output) or a plain
/// whitespace separated list of exactly `n_vars` numbers.
pub fn parse_sdpa_solution(text: &str, n_vars: usize) -> Result<Vec<f64>> {
    let lines: Vec<&str> = text.lines().collect();
    let parse_list = |s: &str, ln: usize| -> Result<Vec<f64>> {
        numbers(s)
            .iter()
            .map(|t| t.parse::<f64>().map_err(|e| parse_err(ln, e.to_string())))
            .collect()
    };
    for (idx, line) in lines.iter().enumerate() {
        if let Some(pos) = line.find("xVec") {
            let rest = line[pos + 4..].trim_start_matches([' ', '=']);
            let mut vals = parse_list(rest, idx + 1)?;
            let mut k = idx + 1;
            while vals.len() < n_vars && k < lines.len() {
                vals.extend(parse_list(lines[k], k + 1)?);
                k += 1;
            }
            if vals.len() != n_vars {
                return Err(parse_err(idx + 1, format!("xVec has {} entries, expected {n_vars}", vals.len())));
            }
            return Ok(vals);
        }
    }
    let mut vals = Vec::new();
    for (idx, line) in lines.iter().enumerate() {
        if !is_comment(line) {
            vals.extend(parse_list(line, idx + 1)?);
        }
    }
    if vals.len() != n_vars {
        return Err(Error::Parse(format!("solution has {} entries, expected {n_vars}", vals.len())));
    }
    Ok(vals)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal() -> SdpProblem {
        SdpProblem {
            n_vars: 1,
            blocks: vec![SdpBlock {
                dim: 1,
                constant: SparseMat::from_triplets(1, 1, [(0, 0, -1.0)]),
                coeffs: vec![(0, SparseMat::identity(1))],
                shift: 0.0,
                negated: false,
                strict: false,
                tag: ConstraintTag::Other("x>=1".into()),
            }],
            directory: Vec::new(),
        }
    }

    #[test]
    fn minimal_instance() {
        let text = export_sdpa(&minimal());
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(&lines[..3], &["1", "1", "1"]);
        assert_eq!(lines.len(), 6);
        assert_eq!(lines[4], "0 1 1 1 1.0000000000000000e0");
        assert_eq!(lines[5], "1 1 1 1 1.0000000000000000e0");
        let back = import_sdpa(&text).unwrap();
        assert_eq!(export_sdpa(&back), text);
    }

    #[test]
    fn malformed_reports_line() {
        let err = import_sdpa("1\n1\n1\n0\n0 1 1 1 abc\n").unwrap_err().to_string();
        assert!(err.contains("line 5"), "{err}");
        assert!(import_sdpa("1\n1\n2 3\n").is_err());
    }

    #[test]
    fn solution_parsing() {
        let y = parse_sdpa_solution("objValPrimal = 0\nxVec = \n{1.5,-2e-1}\n", 2).unwrap();
        assert_eq!(y, vec![1.5, -0.2]);
        assert_eq!(parse_sdpa_solution("3 4\n", 2).unwrap(), vec![3.0, 4.0]);
    }
}
