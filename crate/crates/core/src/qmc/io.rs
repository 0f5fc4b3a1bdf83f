//! Generating-vector files.
//!
//! ```text
//! b m s alpha
//! <modulus P as integer, base-b digits are coefficients>
//! <g_1>
//! ...
//! <g_{alpha s}>
//! ```

use std::path::Path;

use sha2::{Digest, Sha256};

use super::{LatticeRule, PointSet, PolyGF};
use crate::error::{Error, Result};

pub fn format_generating_vector(rule: &LatticeRule) -> String {
    let mut out = format!("{} {} {} {}\n", rule.base(), rule.m(), rule.s(), rule.alpha());
    let enc = |p: &PolyGF| p.to_int().expect("degree below m fits in u64");
    out.push_str(&format!("{}\n", enc(rule.modulus())));
    for g in rule.generators() {
        out.push_str(&format!("{}\n", enc(g)));
    }
    out
}

pub fn save_generating_vector(rule: &LatticeRule, path: &Path) -> Result<()> {
    std::fs::write(path, format_generating_vector(rule)).map_err(|e| Error::io(path, e))
}

pub fn load_generating_vector(path: &Path) -> Result<LatticeRule> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut rule = parse_generating_vector(&text, path)?;
    rule.source_hash = Some(sha256_hex(text.as_bytes()));
    Ok(rule)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

pub fn parse_generating_vector(text: &str, path: &Path) -> Result<LatticeRule> {
    let err = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    // (physical line number, content) with `#` comment lines dropped
    let lines: Vec<(usize, &str)> = text
        .lines()
        .map(str::trim)
        .enumerate()
        .filter(|(_, l)| !l.starts_with('#'))
        .map(|(k, l)| (k + 1, l))
        .collect();
    let (header_line, header) = *lines
        .first()
        .ok_or_else(|| err(1, "missing header `b m s alpha`".into()))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 4 {
        return Err(err(
            header_line,
            format!("header needs 4 fields `b m s alpha`, found {}", fields.len()),
        ));
    }
    let num = |k: usize, name: &str| -> Result<u64> {
        fields[k]
            .parse::<u64>()
            .map_err(|e| err(header_line, format!("{name}: {e}")))
    };
    let (b, m, s, alpha) = (num(0, "b")?, num(1, "m")?, num(2, "s")?, num(3, "alpha")?);
    let b = u32::try_from(b).map_err(|_| err(header_line, format!("base {b} too large")))?;
    let (m, s, alpha) = (m as usize, s as usize, alpha as usize);
    let expected = 2 + alpha * s;
    let last_line = lines.last().map_or(1, |(k, _)| *k);
    let poly_at = |idx: usize| -> Result<PolyGF> {
        let (k, line) = *lines
            .get(idx)
            .filter(|(_, l)| !l.is_empty())
            .ok_or_else(|| err(last_line + 1, format!("file ends early: expected {expected} lines")))?;
        let code = line
            .parse::<u64>()
            .map_err(|e| err(k, format!("polynomial encoding `{line}`: {e}")))?;
        PolyGF::from_int(code, b).map_err(|e| err(k, e.to_string()))
    };
    let modulus = poly_at(1)?;
    let gen = (0..alpha * s).map(|k| poly_at(2 + k)).collect::<Result<Vec<_>>>()?;
    if let Some((k, _)) = lines.iter().skip(expected).find(|(_, l)| !l.is_empty()) {
        return Err(err(*k, format!("unexpected trailing content; expected {expected} lines")));
    }
    let modulus_line = lines.get(1).map_or(2, |(k, _)| *k);
    LatticeRule::new(b, m, alpha, s, modulus, gen).map_err(|e| err(modulus_line, e.to_string()))
}

pub fn save_points_csv(points: &PointSet, path: &Path) -> Result<()> {
    std::fs::write(path, points.to_csv()).map_err(|e| Error::io(path, e))
}
