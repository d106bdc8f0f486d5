//! `key = value` experiment files merged with command-line overrides.

use std::collections::BTreeMap;
use std::str::FromStr;
use std::sync::Arc;

use critlab::manifold::default_torus_nodes;
use critlab::{Field, ManifoldModel, Point};
use serde::Serialize;

use crate::expr::parse_field_expr;

/// Every key a config may carry; anything else is rejected.
pub const KEYS: &[&str] = &[
    "manifold", "dim", "nodes", "size", "h", "f", "q", "tol", "band", "pole", "x0", "path", "eta", "t_min", "t_max",
    "tol_t", "alpha", "scan", "delta", "schedule", "members", "radii", "deltas", "eps", "k", "t_list", "classify",
    "json", "csv",
];

pub const DEFAULT_RADIAL_NODES: usize = 2048;

#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

pub type ConfigResult<T> = Result<T, ConfigError>;

fn cfg_err<T>(msg: impl Into<String>) -> ConfigResult<T> {
    Err(ConfigError(msg.into()))
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct ExperimentConfig {
    pub experiment: String,
    /// Merged key/value pairs, file first, flags on top.
    pub values: BTreeMap<String, String>,
    /// Text of the config file, if one was given.
    pub file: Option<String>,
}

pub fn parse_lines(text: &str) -> ConfigResult<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return cfg_err(format!("line {}: expected `key = value`", i + 1));
        };
        out.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(out)
}

impl ExperimentConfig {
    pub fn new(experiment: &str, file: Option<String>, overrides: &[(String, String)]) -> ConfigResult<Self> {
        let mut values = match &file {
            Some(text) => parse_lines(text)?,
            None => BTreeMap::new(),
        };
        for (k, v) in overrides {
            values.insert(k.clone(), v.clone());
        }
        if let Some(k) = values.keys().find(|k| !KEYS.contains(&k.as_str())) {
            return cfg_err(format!("unknown key '{k}'"));
        }
        Ok(ExperimentConfig { experiment: experiment.to_string(), values, file })
    }

    pub fn str(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(|s| s.as_str())
    }

    pub fn get<T: FromStr>(&self, key: &str, default: T) -> ConfigResult<T> {
        match self.str(key) {
            None => Ok(default),
            Some(s) => s.parse().map_err(|_| ConfigError(format!("cannot parse {key} = '{s}'"))),
        }
    }

    pub fn list(&self, key: &str, default: &[f64]) -> ConfigResult<Vec<f64>> {
        match self.str(key) {
            None => Ok(default.to_vec()),
            Some(s) => parse_list(s).ok_or_else(|| ConfigError(format!("cannot parse list {key} = '{s}'"))),
        }
    }

    pub fn positive(&self, key: &str, default: f64) -> ConfigResult<f64> {
        let v = self.get(key, default)?;
        if !(v > 0.0) || !v.is_finite() {
            return cfg_err(format!("{key} must be positive"));
        }
        Ok(v)
    }

    pub fn dim(&self) -> ConfigResult<usize> {
        let n: usize = self.get("dim", 3)?;
        if !(2..=8).contains(&n) {
            return cfg_err("dim must lie in 2..=8");
        }
        Ok(n)
    }

    pub fn manifold(&self) -> ConfigResult<Arc<ManifoldModel>> {
        let n = self.dim()?;
        let built = match self.str("manifold").unwrap_or("sphere") {
            "sphere" => ManifoldModel::sphere(n, self.get("nodes", DEFAULT_RADIAL_NODES)?),
            "ball" => ManifoldModel::ball(n, self.positive("size", 1.0)?, self.get("nodes", DEFAULT_RADIAL_NODES)?),
            "torus" => ManifoldModel::torus(
                n,
                self.positive("size", 2.0 * std::f64::consts::PI)?,
                self.get("nodes", default_torus_nodes(n))?,
            ),
            other => return cfg_err(format!("unknown manifold '{other}' (sphere, torus or ball)")),
        };
        built.map_err(|e| ConfigError(e.to_string()))
    }

    pub fn field(&self, key: &str, m: &Arc<ManifoldModel>, default: Option<&str>) -> ConfigResult<Field> {
        let src = match (self.str(key), default) {
            (Some(s), _) => s,
            (None, Some(d)) => d,
            (None, None) => return cfg_err(format!("missing required key '{key}'")),
        };
        parse_field_expr(src, m).map_err(|e| ConfigError(format!("{key}: {e}")))
    }

    /// A single number is a radial distance; a comma list is a torus point.
    pub fn point(&self, key: &str, m: &ManifoldModel) -> ConfigResult<Point> {
        let raw = self.str(key).unwrap_or("0");
        let xs = parse_list(raw).ok_or_else(|| ConfigError(format!("cannot parse point {key} = '{raw}'")))?;
        if m.is_radial() {
            if xs.len() != 1 {
                return cfg_err(format!("{key} must be a single distance on radial models"));
            }
            Ok(Point::Radial(xs[0]))
        } else if xs.len() == 1 {
            Ok(Point::Cartesian(vec![xs[0]; m.dim()]))
        } else if xs.len() == m.dim() {
            Ok(Point::Cartesian(xs))
        } else {
            cfg_err(format!("{key} needs 1 or {} coordinates", m.dim()))
        }
    }
}

pub fn parse_list(s: &str) -> Option<Vec<f64>> {
    let v: Option<Vec<f64>> = s.split(',').map(|t| t.trim().parse::<f64>().ok()).collect();
    v.filter(|v| !v.is_empty())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_then_flags() {
        let text = "# sweep\ndim = 4\nh = const(2.0)  # conformal\n\nf=1\n";
        let cfg = ExperimentConfig::new("classify", Some(text.into()), &[("h".into(), "const(3)".into())]).unwrap();
        assert_eq!(cfg.str("dim"), Some("4"));
        assert_eq!(cfg.str("h"), Some("const(3)"));
        assert_eq!(cfg.str("f"), Some("1"));
        assert!(ExperimentConfig::new("solve", Some("bogus = 1".into()), &[]).is_err());
        assert!(ExperimentConfig::new("solve", Some("no equals".into()), &[]).is_err());
    }

    #[test]
    fn points_and_lists() {
        let cfg = ExperimentConfig::new("probe", None, &[("x0".into(), "0.5".into()), ("k".into(), "1, 2,4".into())])
            .unwrap();
        let s = ManifoldModel::sphere(3, 64).unwrap();
        assert_eq!(cfg.point("x0", &s).unwrap(), Point::Radial(0.5));
        assert_eq!(cfg.list("k", &[]).unwrap(), vec![1.0, 2.0, 4.0]);
        let t = ManifoldModel::torus(2, 1.0, 8).unwrap();
        assert_eq!(cfg.point("x0", &t).unwrap(), Point::Cartesian(vec![0.5, 0.5]));
        assert!(parse_list("1,,2").is_none());
    }
}
