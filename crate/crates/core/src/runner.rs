//! Subcommand orchestration and deterministic output files.
//!
//! Every run writes its stage outputs plus `manifest.json` into the output
//! directory. CSV floats use `{:.16e}` (17 significant digits); JSON floats
//! use the shortest representation that round-trips. Apart from the
//! manifest's `wall_clock_seconds`, all bytes are a function of the config.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bloch::linear_eigenpair;
use crate::config::RunConfig;
use crate::context::ModelContext;
use crate::error::{Error, Result};
use crate::fixed_point::{asymptotic_check, contraction_report, iterate, FixedPointTrace, Solution};
use crate::galerkin::{compare, newton_solve};
use crate::iso::{angular_sweep, kappa_solve, sample_surface};
use crate::lattice::{decompose, LatticeIndex, QuasiMomentum};
use crate::nonres::{check_quasimomentum, sample_nonresonant};

/// Draws tried when a run gives `k` but no explicit point.
const POINT_DRAWS: usize = 400;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Subcommand {
    LinearEig,
    NonresScan,
    FixedPoint,
    Isoenergetic,
    Verify,
}

impl Subcommand {
    pub const ALL: [Subcommand; 5] = [
        Subcommand::LinearEig,
        Subcommand::NonresScan,
        Subcommand::FixedPoint,
        Subcommand::Isoenergetic,
        Subcommand::Verify,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Subcommand::LinearEig => "linear-eig",
            Subcommand::NonresScan => "nonres-scan",
            Subcommand::FixedPoint => "fixed-point",
            Subcommand::Isoenergetic => "isoenergetic",
            Subcommand::Verify => "verify",
        }
    }
}

impl FromStr for Subcommand {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Subcommand::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::param("subcommand", format!("unknown subcommand '{s}'")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutputFile {
    pub name: String,
    pub bytes: usize,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageStatus {
    pub stage: String,
    pub ok: bool,
    pub message: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub subcommand: Subcommand,
    pub seed: u64,
    /// Canonical `key = value` echo of the configuration.
    pub config: Vec<String>,
    pub stages: Vec<StageStatus>,
    pub outputs: Vec<OutputFile>,
    pub exit_code: i32,
    pub wall_clock_seconds: f64,
}

impl RunManifest {
    /// Recomputes every listed digest from the files in `dir`.
    pub fn digests_match(&self, dir: &Path) -> Result<bool> {
        for f in &self.outputs {
            let bytes = std::fs::read(dir.join(&f.name))?;
            if bytes.len() != f.bytes || sha256_hex(&bytes) != f.sha256 {
                return Ok(false);
            }
        }
        Ok(true)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// `{:.16e}`: 17 significant digits, enough to round-trip any `f64`.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Collects written files and their digests.
struct Emitter {
    dir: PathBuf,
    outputs: Vec<OutputFile>,
}

impl Emitter {
    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        std::fs::write(self.dir.join(name), bytes)?;
        self.outputs.push(OutputFile {
            name: name.to_string(),
            bytes: bytes.len(),
            sha256: sha256_hex(bytes),
        });
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut s = serde_json::to_string_pretty(value)?;
        s.push('\n');
        self.write(name, s.as_bytes())
    }
}

/// Minimal CSV builder; rows are pre-formatted fields.
struct Csv {
    text: String,
}

impl Csv {
    fn new(header: &[String]) -> Self {
        Csv {
            text: header.join(",") + "\n",
        }
    }

    fn row(&mut self, fields: &[String]) {
        self.text += &fields.join(",");
        self.text.push('\n');
    }
}

fn cols(prefix: &str, n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("{prefix}{i}")).collect()
}

fn floats(v: &[f64]) -> Vec<String> {
    v.iter().map(|x| fmt_f64(*x)).collect()
}

fn ints(j: &LatticeIndex) -> Vec<String> {
    j.coords().iter().map(|c| c.to_string()).collect()
}

/// Executes one subcommand and writes its outputs plus `manifest.json`.
///
/// Stage failures are recorded in the manifest and reflected in
/// `exit_code`; only an unusable output directory is returned as an error.
pub fn run(cmd: Subcommand, cfg: &RunConfig, out: &Path) -> Result<RunManifest> {
    let start = Instant::now();
    std::fs::create_dir_all(out)?;
    let mut em = Emitter {
        dir: out.to_path_buf(),
        outputs: Vec::new(),
    };
    let mut stages = Vec::new();
    let result = match cmd {
        Subcommand::LinearEig => linear_eig(cfg, &mut em, &mut stages),
        Subcommand::NonresScan => nonres_scan(cfg, &mut em, &mut stages),
        Subcommand::FixedPoint => fixed_point(cfg, &mut em, &mut stages).map(|_| ()),
        Subcommand::Isoenergetic => isoenergetic(cfg, &mut em, &mut stages),
        Subcommand::Verify => verify(cfg, &mut em, &mut stages),
    };
    let exit_code = match &result {
        Ok(()) => 0,
        Err(e) => {
            stages.push(StageStatus {
                stage: cmd.name().into(),
                ok: false,
                message: Some(e.to_string()),
            });
            e.exit_code()
        }
    };
    let manifest = RunManifest {
        tool: "polywave".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        subcommand: cmd,
        seed: cfg.ctx.seed,
        config: cfg.canonical_text().lines().map(String::from).collect(),
        stages,
        outputs: em.outputs.clone(),
        exit_code,
        wall_clock_seconds: start.elapsed().as_secs_f64(),
    };
    let mut s = serde_json::to_string_pretty(&manifest)?;
    s.push('\n');
    std::fs::write(out.join("manifest.json"), s)?;
    Ok(manifest)
}

fn ok(stages: &mut Vec<StageStatus>, stage: &str) {
    stages.push(StageStatus {
        stage: stage.into(),
        ok: true,
        message: None,
    });
}

/// The `(t, j)` a point-wise run acts on: explicit, from `k·direction`, or
/// the lowest-index admitted draw on the sphere of radius `k`.
pub fn resolve_point(cfg: &RunConfig) -> Result<(QuasiMomentum, LatticeIndex)> {
    let tg = &cfg.targets;
    if let (Some(t), Some(j)) = (&tg.t, &tg.j) {
        return Ok((t.clone(), *j));
    }
    let k = tg
        .k
        .ok_or_else(|| Error::param("k", "run needs run.t and run.j, or run.k"))?;
    if let Some(nu) = &tg.direction {
        let kvec: Vec<f64> = nu.iter().map(|x| k * x).collect();
        let (j, t) = decompose(&kvec);
        return Ok((t, j));
    }
    let (draws, _) = sample_nonresonant(k, &cfg.ctx, POINT_DRAWS)?;
    draws
        .into_iter()
        .find(|d| d.report.admits(cfg.ctx.gate))
        .map(|d| (d.report.t, d.report.j))
        .ok_or_else(|| {
            Error::Resonance(format!("no admitted quasimomentum among {POINT_DRAWS} draws at k = {k}"))
        })
}

fn linear_eig(cfg: &RunConfig, em: &mut Emitter, stages: &mut Vec<StageStatus>) -> Result<()> {
    let ctx = &cfg.ctx;
    let (t, j) = resolve_point(cfg)?;
    let report = check_quasimomentum(&t, &j, ctx)?;
    em.json("nonresonance.json", &report)?;
    ok(stages, "nonresonance");
    let pair = linear_eigenpair(&ctx.potential, &t, &j, ctx)?;
    em.json("eigenpair.json", &pair)?;

    let mut csv = Csv::new(&["r".into(), "g".into(), "g_norm".into()]);
    for (r, (g, norm)) in pair.g_terms.iter().zip(&pair.g_norms).enumerate() {
        csv.row(&[(r + 1).to_string(), fmt_f64(*g), fmt_f64(*norm)]);
    }
    em.write("series.csv", csv.text.as_bytes())?;

    let mut header = cols("a", ctx.n);
    header.extend(["re".into(), "im".into()]);
    let mut csv = Csv::new(&header);
    for (a, c) in &pair.proj_column {
        let mut row = ints(a);
        row.extend(floats(&[c.re, c.im]));
        csv.row(&row);
    }
    em.write("projection.csv", csv.text.as_bytes())?;
    ok(stages, "linear-eig");
    Ok(())
}

#[derive(Serialize)]
struct ScanSummary {
    k: f64,
    samples: usize,
    admitted: usize,
    fraction: f64,
    /// Binomial standard error `sqrt(f(1 − f)/N)`.
    std_error: f64,
}

fn nonres_scan(cfg: &RunConfig, em: &mut Emitter, stages: &mut Vec<StageStatus>) -> Result<()> {
    let ctx = &cfg.ctx;
    let ks: Vec<f64> = if cfg.targets.ks.is_empty() {
        vec![cfg
            .targets
            .k
            .ok_or_else(|| Error::param("k", "nonres-scan needs run.ks or run.k"))?]
    } else {
        cfg.targets.ks.clone()
    };
    let n = ctx.n;
    let mut header = vec!["k".to_string(), "draw_index".to_string()];
    header.extend(cols("nu", n));
    header.extend(cols("j", n));
    header.extend(cols("t", n));
    header.extend(
        [
            "pass_in",
            "margin_in",
            "pass_in_a",
            "margin_in_a",
            "pass_main",
            "margin_main",
            "isolation",
            "admitted",
        ]
        .map(String::from),
    );
    let mut csv = Csv::new(&header);
    let mut summary = Vec::new();
    for &k in &ks {
        let (draws, fraction) = sample_nonresonant(k, ctx, cfg.targets.samples)?;
        for d in &draws {
            let r = &d.report;
            let mut row = vec![fmt_f64(k), d.index.to_string()];
            row.extend(floats(&d.nu));
            row.extend(ints(&r.j));
            row.extend(floats(r.t.as_slice()));
            row.extend([
                r.pass_in.to_string(),
                fmt_f64(r.margin_in),
                r.pass_in_a.to_string(),
                fmt_f64(r.margin_in_a),
                r.pass_main.to_string(),
                fmt_f64(r.margin_main),
                fmt_f64(r.isolation),
                r.admits(ctx.gate).to_string(),
            ]);
            csv.row(&row);
        }
        let samples = draws.len();
        summary.push(ScanSummary {
            k,
            samples,
            admitted: draws.iter().filter(|d| d.report.admits(ctx.gate)).count(),
            fraction,
            std_error: (fraction * (1.0 - fraction) / samples.max(1) as f64).sqrt(),
        });
    }
    em.write("nonres.csv", csv.text.as_bytes())?;
    em.json("summary.json", &summary)?;
    ok(stages, "nonres-scan");
    Ok(())
}

fn trace_csv(trace: &FixedPointTrace) -> String {
    let header = [
        "m",
        "dw",
        "lambda",
        "lambda_shift",
        "de",
        "dpsi",
        "tail",
        "drift",
        "nonlinear_norm",
        "series_tail",
    ]
    .map(String::from);
    let mut csv = Csv::new(&header);
    for r in &trace.records {
        let mut row = vec![r.m.to_string()];
        row.extend(floats(&[
            r.dw,
            r.lambda,
            r.lambda_shift,
            r.de,
            r.dpsi,
            r.tail,
            r.drift,
            r.nonlinear_norm,
            r.series_tail,
        ]));
        csv.row(&row);
    }
    csv.text
}

fn fixed_point(cfg: &RunConfig, em: &mut Emitter, stages: &mut Vec<StageStatus>) -> Result<Solution> {
    let ctx = &cfg.ctx;
    let (t, j) = resolve_point(cfg)?;
    let (sol, trace) = match iterate(&t, &j, ctx) {
        Ok(x) => x,
        Err(Error::NotConverged { trace }) => {
            em.write("trace.csv", trace_csv(&trace).as_bytes())?;
            return Err(Error::NotConverged { trace });
        }
        Err(e) => return Err(e),
    };
    em.write("trace.csv", trace_csv(&trace).as_bytes())?;
    em.json("solution.json", &sol)?;
    #[derive(Serialize)]
    struct Checks {
        converged: bool,
        iterations: usize,
        certified: bool,
        residual: f64,
        contraction: crate::fixed_point::ContractionReport,
        asymptotics: crate::fixed_point::AsymptoticCheck,
    }
    em.json(
        "checks.json",
        &Checks {
            converged: trace.converged,
            iterations: trace.records.len(),
            certified: sol.certified,
            residual: sol.residual,
            contraction: contraction_report(&trace, ctx),
            asymptotics: asymptotic_check(&sol, ctx),
        },
    )?;
    ok(stages, "fixed-point");
    Ok(sol)
}

fn isoenergetic(cfg: &RunConfig, em: &mut Emitter, stages: &mut Vec<StageStatus>) -> Result<()> {
    let ctx = &cfg.ctx;
    let lambda = cfg
        .targets
        .lambda
        .ok_or_else(|| Error::param("lambda", "isoenergetic needs run.lambda"))?;
    let n = ctx.n;
    let (samples, stats) = match &cfg.targets.direction {
        Some(nu) => {
            let s = kappa_solve(lambda, ctx.amplitude, nu, ctx)?;
            let k = crate::iso::ktilde(lambda, ctx.sigma, ctx.amplitude, ctx.l)?;
            let stats = crate::iso::SurfaceStats {
                lambda,
                ktilde: k,
                samples: 1,
                admitted: s.in_b as usize,
                admitted_fraction: s.in_b as usize as f64,
                solved: s.h.is_some() as usize,
                failed: 0,
                max_abs_h: s.h.map_or(0.0, f64::abs),
                mean_abs_h: s.h.map_or(0.0, f64::abs),
                max_root_residual: s.root_residual.unwrap_or(0.0),
            };
            (vec![s], stats)
        }
        None => sample_surface(lambda, ctx.amplitude, cfg.targets.samples, ctx)?,
    };
    let mut header = cols("nu", n);
    header.extend(["kappa", "h", "root_residual", "in_B"].map(String::from));
    header.extend(cols("j", n));
    header.extend(cols("t", n));
    header.push("status".into());
    let mut csv = Csv::new(&header);
    let opt = |x: Option<f64>| x.map(fmt_f64).unwrap_or_default();
    for s in &samples {
        let mut row = floats(&s.nu);
        row.extend([opt(s.kappa), opt(s.h), opt(s.root_residual), s.in_b.to_string()]);
        row.extend(ints(&s.j));
        row.extend(floats(s.t.as_slice()));
        row.push(format!("\"{}\"", s.status.replace('"', "'")));
        csv.row(&row);
    }
    em.write("surface.csv", csv.text.as_bytes())?;
    em.json("stats.json", &stats)?;
    if n == 2 {
        let mut csv = Csv::new(&["angle", "kappa", "h"].map(String::from));
        for (angle, s) in angular_sweep(&samples) {
            csv.row(&floats(&[angle, s.kappa.unwrap(), s.h.unwrap()]));
        }
        em.write("sweep.csv", csv.text.as_bytes())?;
    }
    ok(stages, "isoenergetic");
    Ok(())
}

fn check_compatible(sol: &Solution, ctx: &ModelContext) -> Result<()> {
    if sol.n != ctx.n || sol.l != ctx.l {
        return Err(Error::Contract(format!(
            "solution has (n, l) = ({}, {}), config has ({}, {})",
            sol.n, sol.l, ctx.n, ctx.l
        )));
    }
    Ok(())
}

/// Reads a solution JSON written by `fixed-point`.
pub fn read_solution(path: &Path) -> Result<Solution> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str::<Solution>(&text)?.normalize()
}

fn verify(cfg: &RunConfig, em: &mut Emitter, stages: &mut Vec<StageStatus>) -> Result<()> {
    let ctx = &cfg.ctx;
    let sol = match &cfg.targets.solution {
        Some(path) => read_solution(Path::new(path))?,
        None => fixed_point(cfg, em, stages)?,
    };
    check_compatible(&sol, ctx)?;
    let outcome = newton_solve(&sol, ctx)?;
    let cmp = compare(&sol, &outcome.solution)?;
    #[derive(Serialize)]
    struct Verify {
        newton_iterations: usize,
        psi_change: f64,
        lambda_change: f64,
        residual_history: Vec<f64>,
        comparison: crate::galerkin::CompareReport,
    }
    em.json(
        "verify.json",
        &Verify {
            newton_iterations: outcome.iterations,
            psi_change: outcome.psi_change,
            lambda_change: outcome.lambda_change,
            residual_history: outcome.residual_history.clone(),
            comparison: cmp,
        },
    )?;
    em.json("refined_solution.json", &outcome.solution)?;
    ok(stages, "verify");
    Ok(())
}

/// Applies `POLYWAVE_THREADS` to the global worker pool.
pub fn configure_threads() -> Result<()> {
    let Ok(v) = std::env::var("POLYWAVE_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .map_err(|_| Error::param("POLYWAVE_THREADS", format!("expected a positive integer, got '{v}'")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n.max(1))
        .build_global()
        .map_err(|e| Error::param("POLYWAVE_THREADS", e.to_string()))
}

/// One-line summary of a manifest for terminal output.
pub fn summary_line(m: &RunManifest) -> String {
    let mut s = format!("{} exit={} outputs=", m.subcommand.name(), m.exit_code);
    for (i, f) in m.outputs.iter().enumerate() {
        let _ = write!(s, "{}{}", if i > 0 { "," } else { "" }, f.name);
    }
    if let Some(msg) = m.stages.iter().rev().find_map(|st| st.message.as_ref()) {
        let _ = write!(s, " error=\"{msg}\"");
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn subcommand_names_round_trip() {
        for c in Subcommand::ALL {
            assert_eq!(c.name().parse::<Subcommand>().unwrap(), c);
        }
        assert!("solve".parse::<Subcommand>().is_err());
    }

    #[test]
    fn float_format_round_trips() {
        for x in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23] {
            assert_eq!(fmt_f64(x).parse::<f64>().unwrap(), x);
        }
        assert_eq!(fmt_f64(1.0), "1.0000000000000000e0");
    }

    #[test]
    fn empty_csv_is_header_only() {
        let csv = Csv::new(&["a".into(), "b".into()]);
        assert_eq!(csv.text, "a,b\n");
        let t = trace_csv(&FixedPointTrace::default());
        assert_eq!(t.lines().count(), 1);
    }
}
