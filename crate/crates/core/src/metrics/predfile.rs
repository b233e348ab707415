//! Prediction text files: one line per video, `video_id` followed by
//! space-separated `class:score` pairs with six-decimal scores.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::gap::VideoPrediction;
use crate::binio::atomic_write;
use crate::error::{Error, Result};

pub fn format_predictions(preds: &[VideoPrediction]) -> Result<String> {
    let mut out = String::new();
    for p in preds {
        if p.id.is_empty() || p.id.chars().any(char::is_whitespace) {
            return Err(Error::Validation(format!("video id `{}` is empty or has whitespace", p.id)));
        }
        out.push_str(&p.id);
        for &(c, s) in &p.ranked {
            if !s.is_finite() {
                return Err(Error::Validation(format!("video {}: non-finite score", p.id)));
            }
            write!(out, " {c}:{s:.6}").expect("write to String");
        }
        out.push('\n');
    }
    Ok(out)
}

pub fn parse_predictions(text: &str) -> Result<Vec<VideoPrediction>> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let bad = |msg: String| Error::Format(format!("prediction line {}: {msg}", n + 1));
        let mut fields = line.split(' ');
        let id = fields.next().filter(|s| !s.is_empty()).ok_or_else(|| bad("missing video id".into()))?;
        if !seen.insert(id.to_string()) {
            return Err(bad(format!("duplicate video id {id}")));
        }
        let mut classes = HashSet::new();
        let mut ranked = Vec::new();
        for field in fields {
            let (c, s) = field
                .split_once(':')
                .ok_or_else(|| bad(format!("`{field}` is not class:score")))?;
            let c: u32 = c.parse().map_err(|_| bad(format!("bad class `{c}`")))?;
            let s: f64 = s.parse().map_err(|_| bad(format!("bad score `{s}`")))?;
            if !s.is_finite() {
                return Err(bad(format!("non-finite score `{field}`")));
            }
            if !classes.insert(c) {
                return Err(bad(format!("class {c} listed twice")));
            }
            ranked.push((c, s));
        }
        out.push(VideoPrediction {
            id: id.to_string(),
            ranked,
        });
    }
    Ok(out)
}

pub fn write_predictions(path: &Path, preds: &[VideoPrediction]) -> Result<u64> {
    let text = format_predictions(preds)?;
    atomic_write(path, |w| {
        w.bytes(text.as_bytes())?;
        Ok(())
    })
}

pub fn read_predictions(path: &Path) -> Result<Vec<VideoPrediction>> {
    let text = fs::read_to_string(path)?;
    parse_predictions(&text)
}
