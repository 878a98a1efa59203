//! Named models with `key=value` parameters, as addressed from the command line.

use std::collections::BTreeMap;

use crate::chain::MarkovChain;
use crate::error::{Error, Result};

use super::{cycle_chain, ehrenfest_chain, lacoin_chain, lazy_path_chain, two_state_chain, InterleavedFamily, LacoinParams, TwoStateParams};

#[derive(Clone, Debug, PartialEq)]
pub enum Model {
    TwoState(TwoStateParams),
    Cycle(usize),
    Ehrenfest(usize),
    LazyPath(usize),
    /// Member `index` of the interleaved sequence.
    Interleaved { r: f64, index: usize },
    Lacoin(LacoinParams),
}

/// Splits `k=v` items (each item may itself be comma-separated).
pub fn parse_params<S: AsRef<str>>(items: &[S]) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for item in items {
        for kv in item.as_ref().split(',').filter(|s| !s.trim().is_empty()) {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::InvalidParameter(format!("expected key=value, got `{kv}`")))?;
            out.insert(k.trim().to_string(), v.trim().to_string());
        }
    }
    Ok(out)
}

fn get<T: std::str::FromStr>(p: &BTreeMap<String, String>, key: &str) -> Result<T> {
    let raw = p.get(key).ok_or_else(|| Error::InvalidParameter(format!("missing parameter `{key}`")))?;
    raw.parse().map_err(|_| Error::InvalidParameter(format!("cannot parse `{key}={raw}`")))
}

fn get_or<T: std::str::FromStr>(p: &BTreeMap<String, String>, key: &str, default: T) -> Result<T> {
    if p.contains_key(key) {
        get(p, key)
    } else {
        Ok(default)
    }
}

impl Model {
    pub const NAMES: [&'static str; 6] = ["two-state", "cycle", "ehrenfest", "lazy-path", "interleaved", "lacoin"];

    pub fn parse(name: &str, params: &BTreeMap<String, String>) -> Result<Self> {
        Ok(match name {
            "two-state" => Model::TwoState(TwoStateParams::new(get(params, "alpha")?, get(params, "beta")?)?),
            "cycle" => Model::Cycle(get(params, "n")?),
            "ehrenfest" => Model::Ehrenfest(get(params, "n")?),
            "lazy-path" => Model::LazyPath(get(params, "n")?),
            "interleaved" => {
                let r = get(params, "r")?;
                InterleavedFamily::new(r)?;
                Model::Interleaved { r, index: get(params, "index")? }
            }
            "lacoin" => Model::Lacoin(LacoinParams::new(
                get(params, "n")?,
                get(params, "a")?,
                get(params, "b")?,
                get_or(params, "beta", 0.0)?,
            )?),
            other => return Err(Error::UnknownModel(other.into())),
        })
    }

    pub fn chain(&self) -> Result<MarkovChain> {
        match self {
            Model::TwoState(p) => Ok(two_state_chain(*p).chain),
            Model::Cycle(n) => cycle_chain(*n),
            Model::Ehrenfest(n) => ehrenfest_chain(*n),
            Model::LazyPath(n) => lazy_path_chain(*n),
            Model::Interleaved { r, index } => InterleavedFamily::new(*r)?.member(*index),
            Model::Lacoin(p) => lacoin_chain(p),
        }
    }
}
