//! Plain-text schema files.
//!
//! One column per line: `name kind [level ...]`, whitespace separated.
//! Kinds are `continuous`, `categorical`, `exposure`, `response` and
//! `claim_count`; only categorical columns list levels. `#` starts a comment.
//!
//! ```text
//! # motor portfolio
//! ageph     continuous
//! fuel      categorical gasoline diesel
//! exposure  exposure
//! nclaims   response
//! ```

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use pricing_core::data::{ColumnKind, ColumnSchema, ColumnSpec};

pub fn parse_schema(text: &str) -> Result<ColumnSchema> {
    let mut columns = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let name = parts.next().unwrap_or_default();
        let Some(kind_str) = parts.next() else {
            bail!("schema line {}: `{name}` has no kind", lineno + 1);
        };
        let Some(kind) = ColumnKind::parse(kind_str) else {
            bail!(
                "schema line {}: unknown kind `{kind_str}` (expected continuous, categorical, exposure, response or claim_count)",
                lineno + 1
            );
        };
        let levels: Vec<String> = parts.map(str::to_string).collect();
        columns.push(ColumnSpec {
            name: name.to_string(),
            kind,
            levels,
        });
    }
    ColumnSchema::new(columns).map_err(Into::into)
}

pub fn load_schema(path: &Path) -> Result<ColumnSchema> {
    let text = fs::read_to_string(path).with_context(|| format!("reading schema {}", path.display()))?;
    parse_schema(&text).with_context(|| format!("in schema {}", path.display()))
}

pub fn format_schema(schema: &ColumnSchema) -> String {
    let mut out = String::new();
    for c in schema.columns() {
        out.push_str(&c.name);
        out.push(' ');
        out.push_str(c.kind.as_str());
        for l in &c.levels {
            out.push(' ');
            out.push_str(l);
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let text = "# c\nx continuous\nc categorical a b  # two levels\n\ne exposure\ny response\n";
        let s = parse_schema(text).unwrap();
        assert_eq!(s.columns().len(), 4);
        assert_eq!(s.columns()[1].levels, vec!["a", "b"]);
        assert_eq!(parse_schema(&format_schema(&s)).unwrap(), s);
    }

    #[test]
    fn rejects_unknown_kind() {
        let e = parse_schema("x numeric\n").unwrap_err();
        assert!(e.to_string().contains("unknown kind"), "{e}");
    }
}
