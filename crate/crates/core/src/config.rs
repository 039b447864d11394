//! Flat `key = value` configuration text with dotted section keys.
//!
//! ```text
//! # comment
//! seed = 7
//! autoencoder.alpha = 0.3
//! autoencoder.thresholds = 0.3,0.25
//! ```

use std::collections::BTreeMap;
use std::fmt::Display;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Ordered key/value pairs; later assignments win.
pub type KvMap = BTreeMap<String, String>;

pub fn parse_kv_text(text: &str) -> Result<KvMap> {
    let mut out = KvMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`, got `{raw}`", i + 1)))?;
        let k = k.trim();
        if k.is_empty() || k.contains(char::is_whitespace) {
            return Err(Error::Config(format!("line {}: bad key `{k}`", i + 1)));
        }
        out.insert(k.to_string(), v.trim().to_string());
    }
    Ok(out)
}

/// Parses a single `key=value` override as given on the command line.
pub fn parse_override(s: &str) -> Result<(String, String)> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{s}` is not `key=value`")))?;
    Ok((k.trim().to_string(), v.trim().to_string()))
}

pub fn render_kv(map: &KvMap) -> String {
    map.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
}

pub fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: Display,
{
    value
        .parse()
        .map_err(|e| Error::Config(format!("`{key}` = `{value}`: {e}")))
}

pub fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(Error::Config(format!("`{key}` = `{value}`: expected true or false"))),
    }
}

pub fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>>
where
    T::Err: Display,
{
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse_value(key, s))
        .collect()
}

pub fn render_list<T: Display>(values: &[T]) -> String {
    values.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

/// Entries of `map` under `prefix.`, with the prefix removed.
pub fn section(map: &KvMap, prefix: &str) -> KvMap {
    let p = format!("{prefix}.");
    map.iter()
        .filter_map(|(k, v)| k.strip_prefix(&p).map(|rest| (rest.to_string(), v.clone())))
        .collect()
}

pub fn unknown_key(section: &str, key: &str) -> Error {
    Error::Config(format!("unknown key `{section}.{key}`"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parses_comments_and_sections() {
        let m = parse_kv_text("# top\nseed = 7\n\nautoencoder.alpha=0.3 # trailing\n").unwrap();
        assert_eq!(m["seed"], "7");
        assert_eq!(section(&m, "autoencoder")["alpha"], "0.3");
        assert!(parse_kv_text("no equals sign").is_err());
    }

    #[test]
    fn typed_values() {
        assert_eq!(parse_value::<f64>("a", "0.5").unwrap(), 0.5);
        assert!(matches!(parse_value::<usize>("a", "-1"), Err(Error::Config(_))));
        assert_eq!(parse_list::<f32>("t", "0.95, 0.9,0.8").unwrap(), vec![0.95, 0.9, 0.8]);
        assert!(parse_bool("b", "maybe").is_err());
    }

    proptest! {
        #[test]
        fn render_then_parse_round_trips(entries in proptest::collection::btree_map("[a-z]{1,6}(\\.[a-z]{1,6})?", "[a-z0-9.,-]{0,8}", 0..8)) {
            let map: KvMap = entries;
            prop_assert_eq!(parse_kv_text(&render_kv(&map)).unwrap(), map);
        }

        #[test]
        fn floats_round_trip_through_display(v in proptest::num::f64::NORMAL) {
            prop_assert_eq!(parse_value::<f64>("x", &v.to_string()).unwrap(), v);
        }
    }
}
