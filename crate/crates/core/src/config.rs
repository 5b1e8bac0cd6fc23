//! Flat `key = value` run configuration.
//!
//! ```text
//! # comment
//! [model]
//! n = 2
//! l = 1
//! sigma = 1.0
//! amplitude = 0.0316        # or "re, im"
//! [potential]
//! 1,0 = 1.0                 # v_q = re or "re, im"
//! -1,0 = 1.0
//! [run]
//! t = 0.54, 0.16
//! j = 9, 3
//! ```
//!
//! `model.cosine = a` adds `a` at every `±e_s`, i.e. `V = 2a Σ cos x_s`.
//!
//! A `[section]` header prefixes the following keys with `section.`; dotted
//! keys may also be written out in full. Keys outside the known set are
//! rejected.

use std::collections::BTreeMap;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::context::{Backend, ModelContext, ResonanceGate};
use crate::error::{Error, Result};
use crate::lattice::{LatticeIndex, PeriodicFunction, QuasiMomentum};

const MODEL_KEYS: &[&str] = &[
    "model.n",
    "model.l",
    "model.sigma",
    "model.amplitude",
    "model.delta",
    "model.beta",
    "model.cosine",
];
const NUMERICS_KEYS: &[&str] = &[
    "numerics.series_order",
    "numerics.quadrature_nodes",
    "numerics.lin_window",
    "numerics.support_cap",
    "numerics.tol_fp",
    "numerics.tol_root_rel",
    "numerics.tol_tail",
    "numerics.k0",
    "numerics.max_iterations",
    "numerics.backend",
    "numerics.gate",
    "numerics.seed",
];
const RUN_KEYS: &[&str] = &[
    "run.k",
    "run.ks",
    "run.t",
    "run.j",
    "run.direction",
    "run.lambda",
    "run.samples",
    "run.solution",
];

/// Targets of a run; which ones are needed depends on the subcommand.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunTargets {
    pub k: Option<f64>,
    pub ks: Vec<f64>,
    pub t: Option<QuasiMomentum>,
    pub j: Option<LatticeIndex>,
    pub direction: Option<Vec<f64>>,
    pub lambda: Option<f64>,
    pub samples: usize,
    /// Path of a solution JSON consumed by `verify`.
    pub solution: Option<String>,
}

#[derive(Clone, Debug)]
pub struct RunConfig {
    pub ctx: ModelContext,
    pub targets: RunTargets,
    /// Normalized `key = value` lines in sorted key order.
    pub echo: BTreeMap<String, String>,
}

fn err(line: usize, message: impl Into<String>) -> Error {
    Error::Config {
        line,
        message: message.into(),
    }
}

fn parse_f64(v: &str, line: usize, key: &str) -> Result<f64> {
    v.trim()
        .parse::<f64>()
        .map_err(|_| err(line, format!("{key}: expected a number, got '{v}'")))
}

fn parse_list(v: &str, line: usize, key: &str) -> Result<Vec<f64>> {
    v.split(',').map(|s| parse_f64(s, line, key)).collect()
}

fn parse_complex(v: &str, line: usize, key: &str) -> Result<Complex64> {
    match parse_list(v, line, key)?.as_slice() {
        [re] => Ok(Complex64::new(*re, 0.0)),
        [re, im] => Ok(Complex64::new(*re, *im)),
        _ => Err(err(line, format!("{key}: expected 're' or 're, im'"))),
    }
}

fn parse_index(v: &str, line: usize, key: &str) -> Result<LatticeIndex> {
    let c: Vec<i64> = v
        .split(',')
        .map(|s| {
            s.trim()
                .parse::<i64>()
                .map_err(|_| err(line, format!("{key}: expected integers, got '{v}'")))
        })
        .collect::<Result<_>>()?;
    if c.is_empty() || c.len() > crate::lattice::MAX_DIM {
        return Err(err(line, format!("{key}: index has {} components", c.len())));
    }
    Ok(LatticeIndex::new(&c))
}

fn parse_int<T: std::str::FromStr>(v: &str, line: usize, key: &str) -> Result<T> {
    v.trim()
        .parse::<T>()
        .map_err(|_| err(line, format!("{key}: expected a non-negative integer, got '{v}'")))
}

/// Parses and validates a configuration.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let mut values: BTreeMap<String, (usize, String)> = BTreeMap::new();
    let mut potential: Vec<(usize, String, String)> = Vec::new();
    let mut section = String::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        if let Some(rest) = body.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| err(line, format!("malformed section header '{body}'")))?
                .trim();
            if !["model", "potential", "numerics", "run"].contains(&name) {
                return Err(err(line, format!("unknown section '{name}'")));
            }
            section = name.to_string();
            continue;
        }
        let (k, v) = body
            .split_once('=')
            .ok_or_else(|| err(line, format!("expected 'key = value', got '{body}'")))?;
        let (k, v) = (k.trim(), v.trim());
        let key = if section.is_empty() || k.contains('.') {
            k.to_string()
        } else {
            format!("{section}.{k}")
        };
        if let Some(q) = key.strip_prefix("potential.") {
            potential.push((line, q.to_string(), v.to_string()));
            continue;
        }
        if !MODEL_KEYS.contains(&key.as_str())
            && !NUMERICS_KEYS.contains(&key.as_str())
            && !RUN_KEYS.contains(&key.as_str())
        {
            return Err(err(line, format!("unknown key '{key}'")));
        }
        if values.insert(key.clone(), (line, v.to_string())).is_some() {
            return Err(err(line, format!("duplicate key '{key}'")));
        }
    }

    let get = |key: &str| values.get(key).map(|(l, v)| (*l, v.as_str()));
    let need = |key: &str| get(key).ok_or_else(|| err(0, format!("missing required key '{key}'")));

    let (ln, v) = need("model.n")?;
    let n: usize = parse_int(v, ln, "model.n")?;
    let (ll, v) = need("model.l")?;
    let l: u32 = parse_int(v, ll, "model.l")?;
    if !(2..=crate::lattice::MAX_DIM).contains(&n) {
        return Err(err(ln, format!("model.n: dimension {n} not in 2..=4")));
    }

    let mut pot = PeriodicFunction::zero(n);
    if let Some((line, v)) = get("model.cosine") {
        pot = PeriodicFunction::cosine(n, parse_f64(v, line, "model.cosine")?);
    }
    for (line, q, v) in &potential {
        let idx = parse_index(q, *line, &format!("potential.{q}"))?;
        if idx.dim() != n {
            return Err(err(*line, format!("potential index {q} does not have {n} components")));
        }
        pot.add_at(idx, parse_complex(v, *line, &format!("potential.{q}"))?);
    }
    pot.prune();

    // Structural checks of ModelContext::new are reported against line 0
    // unless a specific key can be named.
    let mut ctx = ModelContext::new(n, l, pot.clone()).map_err(|e| locate(e, &values, &potential))?;
    if let Some((line, v)) = get("model.sigma") {
        ctx.sigma = parse_f64(v, line, "model.sigma")?;
    }
    if let Some((line, v)) = get("model.amplitude") {
        ctx.amplitude = parse_complex(v, line, "model.amplitude")?;
    }
    if let Some((line, v)) = get("model.delta") {
        ctx.delta = parse_f64(v, line, "model.delta")?;
    }
    if let Some((line, v)) = get("model.beta") {
        ctx.beta = parse_f64(v, line, "model.beta")?;
    }
    if let Some((line, v)) = get("numerics.series_order") {
        ctx.series_order = parse_int(v, line, "numerics.series_order")?;
    }
    if let Some((line, v)) = get("numerics.quadrature_nodes") {
        ctx.quadrature_nodes = parse_int(v, line, "numerics.quadrature_nodes")?;
    }
    if let Some((line, v)) = get("numerics.lin_window") {
        ctx.lin_window = Some(parse_int(v, line, "numerics.lin_window")?);
    }
    if let Some((line, v)) = get("numerics.support_cap") {
        ctx.support_cap = Some(parse_f64(v, line, "numerics.support_cap")?);
    }
    if let Some((line, v)) = get("numerics.tol_fp") {
        ctx.tol_fp = Some(parse_f64(v, line, "numerics.tol_fp")?);
    }
    if let Some((line, v)) = get("numerics.tol_root_rel") {
        ctx.tol_root_rel = parse_f64(v, line, "numerics.tol_root_rel")?;
    }
    if let Some((line, v)) = get("numerics.tol_tail") {
        ctx.tol_tail = parse_f64(v, line, "numerics.tol_tail")?;
    }
    if let Some((line, v)) = get("numerics.k0") {
        ctx.k0 = parse_f64(v, line, "numerics.k0")?;
    }
    if let Some((line, v)) = get("numerics.max_iterations") {
        ctx.max_iterations = parse_int(v, line, "numerics.max_iterations")?;
    }
    if let Some((line, v)) = get("numerics.seed") {
        ctx.seed = parse_int(v, line, "numerics.seed")?;
    }
    if let Some((line, v)) = get("numerics.backend") {
        ctx.backend = match v {
            "series" => Backend::Series,
            "diag" => Backend::Diag,
            _ => return Err(err(line, format!("numerics.backend: expected series|diag, got '{v}'"))),
        };
    }
    if let Some((line, v)) = get("numerics.gate") {
        ctx.gate = match v {
            "strict" => ResonanceGate::Strict,
            "isolated" => ResonanceGate::Isolated,
            _ => return Err(err(line, format!("numerics.gate: expected strict|isolated, got '{v}'"))),
        };
    }
    ctx.validate().map_err(|e| locate(e, &values, &potential))?;

    let mut targets = RunTargets {
        samples: 1,
        ..Default::default()
    };
    if let Some((line, v)) = get("run.k") {
        targets.k = Some(parse_f64(v, line, "run.k")?);
    }
    if let Some((line, v)) = get("run.ks") {
        targets.ks = parse_list(v, line, "run.ks")?;
    }
    if let Some((line, v)) = get("run.t") {
        let t = parse_list(v, line, "run.t")?;
        if t.len() != n {
            return Err(err(line, format!("run.t: expected {n} components")));
        }
        targets.t = Some(QuasiMomentum::new(t).map_err(|e| err(line, e.to_string()))?);
    }
    if let Some((line, v)) = get("run.j") {
        let j = parse_index(v, line, "run.j")?;
        if j.dim() != n {
            return Err(err(line, format!("run.j: expected {n} components")));
        }
        targets.j = Some(j);
    }
    if targets.t.is_some() != targets.j.is_some() {
        return Err(err(0, "run.t and run.j must be given together"));
    }
    if let Some((line, v)) = get("run.direction") {
        let d = parse_list(v, line, "run.direction")?;
        let r = crate::lattice::norm(&d);
        if d.len() != n || !(r > 0.0) {
            return Err(err(line, format!("run.direction: expected a nonzero {n}-vector")));
        }
        targets.direction = Some(d.iter().map(|x| x / r).collect());
    }
    if let Some((line, v)) = get("run.lambda") {
        targets.lambda = Some(parse_f64(v, line, "run.lambda")?);
    }
    if let Some((line, v)) = get("run.samples") {
        targets.samples = parse_int(v, line, "run.samples")?;
    }
    if let Some((_, v)) = get("run.solution") {
        targets.solution = Some(v.to_string());
    }

    let mut echo: BTreeMap<String, String> =
        values.iter().map(|(k, (_, v))| (k.clone(), v.clone())).collect();
    for (_, q, v) in &potential {
        echo.insert(format!("potential.{q}"), v.clone());
    }
    Ok(RunConfig { ctx, targets, echo })
}

/// Attaches a line number to a parameter error when the offending key is in
/// the file.
fn locate(e: Error, values: &BTreeMap<String, (usize, String)>, potential: &[(usize, String, String)]) -> Error {
    match e {
        Error::InvalidParameter { name, reason } => {
            let line = values
                .iter()
                .find(|(k, _)| k.rsplit('.').next() == Some(name))
                .map(|(_, (l, _))| *l)
                .or_else(|| {
                    (name == "potential")
                        .then(|| potential.first().map(|p| p.0))
                        .flatten()
                })
                .unwrap_or(0);
            err(line, format!("{name}: {reason}"))
        }
        other => other,
    }
}

impl RunConfig {
    /// The configuration as canonical text, one sorted `key = value` per line.
    pub fn canonical_text(&self) -> String {
        self.echo
            .iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "
        [model]
        n = 2
        l = 1
        sigma = 1.0
        amplitude = 0.03
        [potential]
        1,0 = 1.0
        -1,0 = 1.0
        [run]
        k = 8
    ";

    #[test]
    fn minimal_config_gets_defaults() {
        let c = parse_config(MINIMAL).unwrap();
        assert_eq!(c.ctx.delta, 0.05);
        assert_eq!(c.ctx.beta, 0.4);
        assert_eq!(c.ctx.quadrature_nodes, 64);
        assert_eq!(c.ctx.series_order, 6);
        assert_eq!(c.ctx.max_iterations, 50);
        assert_eq!(c.ctx.k0, 2.0);
        assert_eq!(c.ctx.seed, 42);
        assert_eq!(c.ctx.tol_fp(), 2e-12);
        assert_eq!(c.targets.k, Some(8.0));
        assert_eq!(c.ctx.potential.len(), 2);
    }

    #[test]
    fn unknown_key_is_rejected_with_line() {
        let e = parse_config("model.n = 2\nmodel.l = 1\nmodel.colour = 3\n").unwrap_err();
        match e {
            Error::Config { line, message } => {
                assert_eq!(line, 3);
                assert!(message.contains("model.colour"));
            }
            e => panic!("{e}"),
        }
    }

    #[test]
    fn delta_inequality_is_named() {
        let e = parse_config("model.n = 2\nmodel.l = 1\nmodel.delta = 0.4\n").unwrap_err();
        let msg = e.to_string();
        assert!(msg.contains("0 < 2·delta < (n-1)(1-beta)"), "{msg}");
        assert_eq!(e.exit_code(), 2);
    }

    #[test]
    fn nonzero_mean_is_rejected() {
        let e = parse_config("model.n = 2\nmodel.l = 1\n[potential]\n0,0 = 1\n").unwrap_err();
        assert!(e.to_string().contains("mean"), "{e}");
    }

    #[test]
    fn malformed_lines() {
        assert!(parse_config("model.n 2").is_err());
        assert!(parse_config("[model\nn=2").is_err());
        assert!(parse_config("model.n = two\nmodel.l = 1").is_err());
        assert!(parse_config("model.n = 2\nmodel.l = 1\nrun.t = 0.5, 0.5\n").is_err());
    }
}
