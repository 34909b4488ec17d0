//! Plain-text `key = value` files: one entry per line, `#` starts a comment.

use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub line: usize,
    pub key: String,
    pub value: String,
}

pub fn parse_entries(text: &str) -> Result<Vec<Entry>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
            line: i + 1,
            message: format!("expected `key = value`, got `{line}`"),
        })?;
        let key = key.trim();
        if key.is_empty() {
            return Err(Error::Parse {
                line: i + 1,
                message: "missing key".into(),
            });
        }
        out.push(Entry {
            line: i + 1,
            key: key.to_string(),
            value: value.trim().to_string(),
        });
    }
    Ok(out)
}

pub fn parse_value<T>(key: &str, value: &str) -> Result<T>
where
    T: FromStr,
    T::Err: std::fmt::Display,
{
    value.parse::<T>().map_err(|e| Error::InvalidValue {
        key: key.to_string(),
        message: format!("`{value}`: {e}"),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn entries_and_comments() {
        let text = "# header\n\nk_e = 500   # moist\n  f_r=5\n";
        let e = parse_entries(text).unwrap();
        assert_eq!(e.len(), 2);
        assert_eq!(
            (e[0].line, e[0].key.as_str(), e[0].value.as_str()),
            (3, "k_e", "500")
        );
        assert_eq!((e[1].key.as_str(), e[1].value.as_str()), ("f_r", "5"));
    }

    #[test]
    fn malformed_lines() {
        assert!(matches!(
            parse_entries("a = 1\nnonsense\n"),
            Err(Error::Parse { line: 2, .. })
        ));
        assert!(matches!(
            parse_entries(" = 3"),
            Err(Error::Parse { line: 1, .. })
        ));
        let err = parse_value::<f64>("dt", "fast").unwrap_err();
        assert!(err.to_string().contains("`dt`"));
    }
}
