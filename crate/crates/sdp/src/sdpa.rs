//! SDPA sparse format (`.dat-s`).
//!
//! The file describes `max <F0, Y>  s.t. <F_k, Y> = c_k, Y ⪰ 0`, so a
//! minimization problem with objective `C` is written with `F0 = −C`.
//! Layout:
//!
//! ```text
//! <number of constraints>
//! <number of blocks>
//! <block sizes, diagonal blocks negative>
//! <right-hand sides>
//! <matno> <blkno> <i> <j> <value>      (1-based, i <= j, one per line)
//! ```
//!
//! Entries are sorted by matrix, block, row, column. Numbers use the
//! shortest decimal string that parses back to the same `f64`.

use std::fmt::Write as _;

use crate::problem::{Block, BlockKind, LinearFunctional, SdpProblem};
use crate::SdpError;

/// Shortest round-trip decimal: positional for moderate magnitudes, exponent otherwise.
pub fn format_value(v: f64) -> String {
    let a = v.abs();
    if a == 0.0 || (1e-5..1e16).contains(&a) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

pub fn export_sdpa(problem: &SdpProblem) -> Result<String, SdpError> {
    if problem.free_vars > 0 {
        return Err(SdpError::Export(format!(
            "free variables ({}) must be split into nonnegative parts before export",
            problem.free_vars
        )));
    }
    problem.validate()?;
    let p = problem.normalized();
    let mut out = String::new();
    let _ = writeln!(out, "{}", p.equalities.len());
    let _ = writeln!(out, "{}", p.blocks.len());
    let sizes: Vec<String> = p
        .blocks
        .iter()
        .map(|b| match b.kind {
            BlockKind::Psd => b.dim.to_string(),
            BlockKind::Diagonal => format!("-{}", b.dim),
        })
        .collect();
    let _ = writeln!(out, "{}", sizes.join(" "));
    let rhs: Vec<String> = p.equalities.iter().map(|e| format_value(e.rhs)).collect();
    let _ = writeln!(out, "{}", rhs.join(" "));
    let mut write_matrix = |matno: usize, f: &LinearFunctional, sign: f64| {
        for e in &f.entries {
            let _ = writeln!(
                out,
                "{} {} {} {} {}",
                matno,
                e.block + 1,
                e.row + 1,
                e.col + 1,
                format_value(sign * e.value)
            );
        }
    };
    write_matrix(0, &p.objective, -1.0);
    for (k, eq) in p.equalities.iter().enumerate() {
        write_matrix(k + 1, &eq.functional, 1.0);
    }
    Ok(out)
}

pub fn import_sdpa(text: &str) -> Result<SdpProblem, SdpError> {
    let split = |line: &'_ str| -> Vec<String> {
        line.split(|c: char| c.is_whitespace() || matches!(c, ',' | '(' | ')' | '{' | '}'))
            .filter(|t| !t.is_empty())
            .map(str::to_string)
            .collect()
    };
    let mut lines = text.lines().filter(|l| {
        let t = l.trim_start();
        !(t.is_empty() || t.starts_with('"') || t.starts_with('*'))
    });
    // The two count lines may carry trailing comments; only their first token counts.
    let mut tokens: Vec<String> = Vec::new();
    for _ in 0..2 {
        if let Some(first) = lines.next().and_then(|l| split(l).into_iter().next()) {
            tokens.push(first);
        }
    }
    for l in lines {
        tokens.extend(split(l));
    }
    let mut pos = 0;
    let mut next = |what: &str| -> Result<&str, SdpError> {
        let t = tokens
            .get(pos)
            .map(String::as_str)
            .ok_or_else(|| SdpError::Parse(format!("unexpected end of input reading {what}")))?;
        pos += 1;
        Ok(t)
    };
    let int = |t: &str, what: &str| -> Result<i64, SdpError> {
        t.parse::<i64>().map_err(|_| SdpError::Parse(format!("expected integer for {what}, got {t:?}")))
    };
    let float = |t: &str, what: &str| -> Result<f64, SdpError> {
        t.parse::<f64>().map_err(|_| SdpError::Parse(format!("expected number for {what}, got {t:?}")))
    };

    let m = int(next("constraint count")?, "constraint count")?;
    let nb = int(next("block count")?, "block count")?;
    if m < 0 || nb < 0 {
        return Err(SdpError::Parse("negative header count".into()));
    }
    let mut p = SdpProblem::new();
    for k in 0..nb {
        let d = int(next("block size")?, "block size")?;
        if d == 0 {
            return Err(SdpError::Parse(format!("block {} has size 0", k + 1)));
        }
        p.add_block(if d > 0 { Block::psd(d as usize) } else { Block::diagonal((-d) as usize) });
    }
    let mut functionals = vec![LinearFunctional::new(); m as usize + 1];
    let mut rhs = Vec::with_capacity(m as usize);
    for _ in 0..m {
        rhs.push(float(next("right-hand side")?, "right-hand side")?);
    }
    let entry_tokens = tokens.len().saturating_sub(2 + nb as usize + m as usize);
    for _ in 0..entry_tokens.div_ceil(5) {
        let matno = int(next("matrix number")?, "matrix number")?;
        let blk = int(next("block number")?, "block number")?;
        let i = int(next("row")?, "row")?;
        let j = int(next("column")?, "column")?;
        let v = float(next("value")?, "value")?;
        if matno < 0 || matno > m {
            return Err(SdpError::Parse(format!("matrix number {matno} out of range")));
        }
        if blk < 1 || blk > nb || i < 1 || j < 1 {
            return Err(SdpError::Parse(format!("entry index out of range: {matno} {blk} {i} {j}")));
        }
        let sign = if matno == 0 { -1.0 } else { 1.0 };
        functionals[matno as usize].add_entry(blk as usize - 1, i as usize - 1, j as usize - 1, sign * v);
    }
    let mut functionals = functionals.into_iter();
    p.objective = functionals.next().unwrap();
    for (f, r) in functionals.zip(rhs) {
        p.add_equality(f, r);
    }
    p.validate().map_err(|e| SdpError::Parse(e.to_string()))?;
    Ok(p)
}
