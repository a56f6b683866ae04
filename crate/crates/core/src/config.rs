//! Declarative TOML description of a structure, action and slice.
//!
//! ```toml
//! name = "flat"
//! [chart]
//! coords = ["x1", "y1", "t"]
//! box = [[-1.5, 1.5], [-1.5, 1.5], [0.5, 2.0]]
//! exclusions = ["x1^2 + y1^2 - 0.01"]   # each must stay positive
//! [structure]
//! theta0 = ["-y1", "x1", "-1"]
//! gamma = ["0", "0", "0"]               # optional, default zero
//! endo = [["0", "-1", "0"], ["1", "0", "0"], ["x1", "y1", "0"]]
//! ```
//!
//! `[action]` holds `generators` (component lists), `[[action.discrete]]`
//! maps with `name`, `forward`, `inverse`, and an optional `[action.s_param]`
//! with its own `chart` and `map`. `[slice]` holds a `chart`, the
//! `embedding` and its own `[[slice.discrete]]` maps.

use std::fmt;
use std::path::Path;

use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::catalog::Example;
use crate::crweyl::CRWeylStructure;
use crate::expr::Expression;
use crate::geometry::{parse_field, Chart, EndomorphismField, Field, KForm, VectorField};
use crate::reduction::{DiscreteMap, GroupActionSpec, SParam, SliceChart};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(default)]
    pub name: Option<String>,
    pub chart: ChartSpec,
    pub structure: StructureSpec,
    #[serde(default)]
    pub action: Option<ActionSpec>,
    #[serde(default)]
    pub slice: Option<SliceSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChartSpec {
    #[serde(default)]
    pub dim: Option<usize>,
    pub coords: Vec<String>,
    #[serde(rename = "box")]
    pub bounds: Vec<[f64; 2]>,
    #[serde(default)]
    pub exclusions: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StructureSpec {
    pub theta0: Vec<String>,
    #[serde(default)]
    pub gamma: Option<Vec<String>>,
    pub endo: Vec<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapSpec {
    pub name: String,
    pub forward: Vec<String>,
    pub inverse: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActionSpec {
    #[serde(default)]
    pub generators: Vec<Vec<String>>,
    #[serde(default)]
    pub discrete: Vec<MapSpec>,
    #[serde(default)]
    pub s_param: Option<SParamSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SParamSpec {
    pub chart: ChartSpec,
    pub map: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SliceSpec {
    pub chart: ChartSpec,
    pub embedding: Vec<String>,
    #[serde(default)]
    pub discrete: Vec<MapSpec>,
}

/// A config problem, with where it was found.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub location: String,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.location, self.message)
    }
}

impl std::error::Error for ConfigError {}

type CResult<T> = std::result::Result<T, ConfigError>;

fn err<T>(location: impl Into<String>, message: impl fmt::Display) -> CResult<T> {
    Err(ConfigError { location: location.into(), message: message.to_string() })
}

fn at<T, E: fmt::Display>(location: &str, r: std::result::Result<T, E>) -> CResult<T> {
    r.or_else(|e| err(location, e))
}

/// Points used to validate a loaded structure.
const VALIDATION_SAMPLES: usize = 32;

pub fn load_config(path: &Path) -> CResult<Example> {
    let text = at(&path.display().to_string(), std::fs::read_to_string(path))?;
    let mut ex = parse_config(&text)?;
    ex.params = serde_json::json!({ "config": path.display().to_string() });
    Ok(ex)
}

pub fn parse_config(text: &str) -> CResult<Example> {
    let cfg: ConfigFile = toml::from_str(text).or_else(|e| {
        let loc = match e.span() {
            Some(s) => {
                let line = text[..s.start].matches('\n').count() + 1;
                format!("line {line}")
            }
            None => "config".into(),
        };
        err(loc, e.message())
    })?;
    build(&cfg)
}

fn chart(loc: &str, spec: &ChartSpec) -> CResult<Chart> {
    let n = spec.coords.len();
    if n == 0 {
        return err(format!("{loc}.coords"), "no coordinates declared");
    }
    if let Some(d) = spec.dim {
        if d != n {
            return err(format!("{loc}.dim"), format!("dim = {d} but {n} coordinates are declared"));
        }
    }
    for (i, c) in spec.coords.iter().enumerate() {
        if spec.coords[..i].contains(c) {
            return err(format!("{loc}.coords[{i}]"), format!("duplicate coordinate {c}"));
        }
    }
    if spec.bounds.len() != n {
        return err(format!("{loc}.box"), format!("expected {n} intervals, got {}", spec.bounds.len()));
    }
    for (i, [a, b]) in spec.bounds.iter().enumerate() {
        if !(a < b) || !a.is_finite() || !b.is_finite() {
            return err(format!("{loc}.box[{i}]"), format!("empty or unbounded interval [{a}, {b}]"));
        }
    }
    let mut c = Chart::new(&spec.coords, spec.bounds.iter().map(|b| b[0]).collect(), spec.bounds.iter().map(|b| b[1]).collect());
    for (i, e) in spec.exclusions.iter().enumerate() {
        c = c.with_positive(at(&format!("{loc}.exclusions[{i}]"), Expression::parse(e, &spec.coords))?);
    }
    Ok(c)
}

fn field(loc: &str, coords: &[String], src: &[String], len: usize) -> CResult<Field> {
    if src.len() != len {
        return err(loc, format!("expected {len} components, got {}", src.len()));
    }
    for (i, s) in src.iter().enumerate() {
        at(&format!("{loc}[{i}]"), Expression::parse(s, coords))?;
    }
    let refs: Vec<&str> = src.iter().map(String::as_str).collect();
    at(loc, parse_field(coords, &refs))
}

fn map(loc: &str, coords: &[String], m: &MapSpec) -> CResult<DiscreteMap> {
    Ok(DiscreteMap {
        name: m.name.clone(),
        forward: field(&format!("{loc}.forward"), coords, &m.forward, coords.len())?,
        inverse: field(&format!("{loc}.inverse"), coords, &m.inverse, coords.len())?,
    })
}

fn structure(c: Chart, s: &StructureSpec) -> CResult<CRWeylStructure> {
    let coords = c.coords().to_vec();
    let d = coords.len();
    let theta = field("structure.theta0", &coords, &s.theta0, d)?;
    let zero = vec!["0".to_string(); d];
    let gamma = field("structure.gamma", &coords, s.gamma.as_ref().unwrap_or(&zero), d)?;
    if s.endo.len() != d {
        return err("structure.endo", format!("expected {d} rows, got {}", s.endo.len()));
    }
    for (i, row) in s.endo.iter().enumerate() {
        if row.len() != d {
            return err(format!("structure.endo[{i}]"), format!("expected {d} entries, got {}", row.len()));
        }
        for (j, e) in row.iter().enumerate() {
            at(&format!("structure.endo[{i}][{j}]"), Expression::parse(e, &coords))?;
        }
    }
    let rows: Vec<Vec<&str>> = s.endo.iter().map(|r| r.iter().map(String::as_str).collect()).collect();
    let endo = at("structure.endo", EndomorphismField::parse(&coords, &rows))?;
    at("structure", CRWeylStructure::new(c, KForm::one_form(theta), KForm::one_form(gamma), endo))
}

fn build(cfg: &ConfigFile) -> CResult<Example> {
    let st = structure(chart("chart", &cfg.chart)?, &cfg.structure)?;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
    let pts = at("chart", st.chart.sample(&mut rng, VALIDATION_SAMPLES))?;
    let report = st.validate(&pts, 1.0);
    if !report.pass() {
        return err("structure", format!("validation failed: {}", report.failing().join(", ")));
    }
    let coords = cfg.chart.coords.clone();
    let d = coords.len();
    let action = match &cfg.action {
        None => None,
        Some(a) => {
            let mut generators = Vec::new();
            for (i, g) in a.generators.iter().enumerate() {
                generators.push(VectorField::new(field(&format!("action.generators[{i}]"), &coords, g, d)?));
            }
            let mut discrete = Vec::new();
            for (i, m) in a.discrete.iter().enumerate() {
                discrete.push(map(&format!("action.discrete[{i}]"), &coords, m)?);
            }
            let s_param = match &a.s_param {
                None => None,
                Some(sp) => {
                    let c = chart("action.s_param.chart", &sp.chart)?;
                    let m = field("action.s_param.map", &sp.chart.coords, &sp.map, d)?;
                    Some(SParam { chart: c, map: m })
                }
            };
            let spec = GroupActionSpec { structure: st.clone(), generators, discrete, s_param };
            let r = spec.validate(&pts, 1.0);
            if !r.pass() {
                return err("action", format!("validation failed: {}", r.failing().join(", ")));
            }
            Some(spec)
        }
    };
    let slice = match &cfg.slice {
        None => None,
        Some(s) => {
            let c = chart("slice.chart", &s.chart)?;
            let sc = &s.chart.coords;
            let embedding = field("slice.embedding", sc, &s.embedding, d)?;
            let mut discrete = Vec::new();
            for (i, m) in s.discrete.iter().enumerate() {
                discrete.push(map(&format!("slice.discrete[{i}]"), sc, m)?);
            }
            let slice = SliceChart { chart: c, embedding, discrete };
            match &action {
                None => return err("slice", "a slice needs an [action] section"),
                Some(a) => {
                    let spts = at("slice.chart", slice.chart.sample(&mut rng, VALIDATION_SAMPLES))?;
                    let r = a.validate_slice(&slice, &spts);
                    if !r.pass() {
                        return err("slice", format!("validation failed: {}", r.failing().join(", ")));
                    }
                }
            }
            Some(slice)
        }
    };
    Ok(Example {
        name: cfg.name.clone().unwrap_or_else(|| "config".into()),
        params: serde_json::Value::Null,
        structure: st,
        action,
        slice,
        j_sign: 1.0,
        gamma_shift: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const FLAT: &str = r#"
[chart]
coords = ["x1", "y1", "t"]
box = [[-1.5, 1.5], [-1.5, 1.5], [0.5, 2.0]]
exclusions = ["x1^2 + y1^2 - 0.01"]
[structure]
theta0 = ["-y1", "x1", "-1"]
endo = [["0", "-1", "0"], ["1", "0", "0"], ["x1", "y1", "0"]]
"#;

    #[test]
    fn flat_config_loads() {
        let ex = parse_config(FLAT).unwrap();
        assert_eq!(ex.structure.dim(), 3);
        assert!(ex.action.is_none());
    }

    #[test]
    fn unknown_symbol_is_named() {
        let bad = FLAT.replace("\"-y1\", \"x1\"", "\"-y1\", \"z9\"");
        let e = parse_config(&bad).err().unwrap();
        assert_eq!(e.location, "structure.theta0[1]");
        assert!(e.message.contains("z9"), "{e}");
    }

    #[test]
    fn degenerate_levi_form_fails_pseudoconvexity() {
        let bad = FLAT.replace("\"-y1\", \"x1\", \"-1\"", "\"0\", \"0\", \"-1\"");
        let e = parse_config(&bad).err().unwrap();
        assert_eq!(e.location, "structure");
        assert!(e.message.contains("pseudoconvexity"), "{e}");
    }

    #[test]
    fn syntax_errors_report_a_line() {
        let e = parse_config("[chart]\ncoords = [\"x\"\n").err().unwrap();
        assert!(e.location.starts_with("line "), "{e}");
        let e = parse_config(&FLAT.replace("exclusions", "exclusion")).err().unwrap();
        assert!(e.location.starts_with("line "), "{e}");
    }

    #[test]
    fn shape_errors_are_located() {
        let e = parse_config(&FLAT.replace("[0.5, 2.0]]", "]")).err().unwrap();
        assert_eq!(e.location, "chart.box");
        let e = parse_config(&FLAT.replace("[\"x1\", \"y1\", \"0\"]", "[\"x1\", \"y1\"]")).err().unwrap();
        assert_eq!(e.location, "structure.endo[2]");
    }
}
