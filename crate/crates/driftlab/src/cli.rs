//! Configuration-driven experiment harness.
//!
//! Config files are plain `key = value` under one `[section]` whose name is
//! the subcommand. Unknown keys are rejected; missing required keys are
//! listed exhaustively in one message. Identical configs produce
//! byte-identical JSON reports (no clocks, no unordered maps).

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::{self, Functional, Layout, ScalarField, SkewField, VectorField};
use crate::io;
use crate::mesh::{Domain, DomainKind, Mesh};
use crate::norms::{self, NormReport, Verdict};
use crate::potentials;
use crate::solver;
use crate::sparse::SolveOptions;
use crate::truncation;
use crate::zhikov;

#[derive(Clone, Debug)]
pub struct RunOptions {
    pub subcommand: String,
    pub config_path: PathBuf,
    pub out_dir: PathBuf,
    pub threads: Option<usize>,
    pub seed: u64,
    /// `key=value` pairs overriding the config section (used by the
    /// zhikov flags).
    pub overrides: Vec<(String, String)>,
}

/// Parse, validate and execute one experiment; returns the verdict lines
/// printed for the user.
pub fn run(opts: &RunOptions) -> Result<Vec<String>> {
    if let Some(threads) = opts.threads {
        // best effort: the global pool can only be sized once per process
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
    }
    let mut config = Config::load(&opts.config_path, &opts.subcommand)?;
    for (k, v) in &opts.overrides {
        config.set(k, v);
    }
    std::fs::create_dir_all(&opts.out_dir)?;
    match opts.subcommand.as_str() {
        "solve" => run_solve(&mut config, opts),
        "norms" => run_norms(&mut config, opts),
        "potential" => run_potential(&mut config, opts),
        "truncate" => run_truncate(&mut config, opts),
        "caccioppoli" => run_caccioppoli(&mut config, opts),
        "zhikov" => run_zhikov(&mut config, opts),
        other => Err(Error::Config(format!(
            "unknown subcommand `{other}` (expected solve, norms, potential, truncate, caccioppoli or zhikov)"
        ))),
    }
}

// ---------------------------------------------------------------------------
// config machinery
// ---------------------------------------------------------------------------

pub struct Config {
    section: String,
    values: BTreeMap<String, String>,
    consumed: std::cell::RefCell<std::collections::BTreeSet<String>>,
}

impl Config {
    pub fn load(path: &Path, section: &str) -> Result<Config> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text, section)
    }

    pub fn parse(text: &str, section: &str) -> Result<Config> {
        let mut values = BTreeMap::new();
        let mut current = String::new();
        for (ln, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if line.starts_with('[') && line.ends_with(']') {
                current = line[1..line.len() - 1].trim().to_string();
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(Error::Config(format!(
                    "line {}: expected `key = value`, got `{raw}`",
                    ln + 1
                )));
            };
            if current == section {
                values.insert(k.trim().to_string(), v.trim().to_string());
            } else if current.is_empty() {
                return Err(Error::Config(format!(
                    "line {}: key `{}` outside any [section]",
                    ln + 1,
                    k.trim()
                )));
            }
        }
        Ok(Config {
            section: section.to_string(),
            values,
            consumed: Default::default(),
        })
    }

    pub fn set(&mut self, key: &str, value: &str) {
        self.values.insert(key.to_string(), value.to_string());
    }

    fn get(&self, key: &str) -> Option<&str> {
        self.consumed.borrow_mut().insert(key.to_string());
        self.values.get(key).map(|s| s.as_str())
    }

    fn require_all(&self, keys: &[&str]) -> Result<()> {
        let missing: Vec<&str> = keys
            .iter()
            .filter(|k| !self.values.contains_key(**k))
            .cloned()
            .collect();
        if missing.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "[{}] missing required keys: {}",
                self.section,
                missing.join(", ")
            )))
        }
    }

    fn str_or(&self, key: &str, default: &str) -> String {
        self.get(key).unwrap_or(default).to_string()
    }

    fn f64_or(&self, key: &str, default: f64) -> Result<f64> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|e| Error::Config(format!("[{}] {key} = `{v}`: {e}", self.section))),
        }
    }

    fn u32_required(&self, key: &str) -> Result<u32> {
        let v = self
            .get(key)
            .ok_or_else(|| Error::Config(format!("[{}] missing required key {key}", self.section)))?;
        v.parse()
            .map_err(|e| Error::Config(format!("[{}] {key} = `{v}`: {e}", self.section)))
    }

    fn f64_required(&self, key: &str) -> Result<f64> {
        let v = self
            .get(key)
            .ok_or_else(|| Error::Config(format!("[{}] missing required key {key}", self.section)))?;
        v.parse()
            .map_err(|e| Error::Config(format!("[{}] {key} = `{v}`: {e}", self.section)))
    }

    fn schedule_or(&self, key: &str, default: &[f64]) -> Result<Vec<f64>> {
        match self.get(key) {
            None => Ok(default.to_vec()),
            Some(v) => v
                .split(',')
                .map(|s| {
                    s.trim()
                        .parse::<f64>()
                        .map_err(|e| Error::Config(format!("[{}] {key}: `{s}`: {e}", self.section)))
                })
                .collect(),
        }
    }

    /// Reject keys that no reader consumed.
    fn finish(&self) -> Result<BTreeMap<String, String>> {
        let consumed = self.consumed.borrow();
        let unknown: Vec<&str> = self
            .values
            .keys()
            .filter(|k| !consumed.contains(*k))
            .map(|s| s.as_str())
            .collect();
        if !unknown.is_empty() {
            return Err(Error::Config(format!(
                "[{}] unknown keys: {}",
                self.section,
                unknown.join(", ")
            )));
        }
        Ok(self.values.clone())
    }
}

fn domain_from(config: &Config) -> Result<Domain> {
    let kind = DomainKind::parse(&config.str_or("domain", ""))?;
    Ok(Domain::new(kind))
}

fn center_of(domain: Domain) -> [f64; 3] {
    match domain.kind {
        DomainKind::UnitSquare => [0.5, 0.5, 0.0],
        DomainKind::UnitCube => [0.5, 0.5, 0.5],
        _ => [0.0, 0.0, 0.0],
    }
}

fn radius_from(domain: Domain, p: [f64; 3]) -> f64 {
    let c = center_of(domain);
    ((p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2) + (p[2] - c[2]).powi(2)).sqrt()
}

/// Named scalar fields shared by the norms/truncate subcommands.
pub fn named_scalar(name: &str, mesh: &Arc<Mesh>, seed: u64) -> Result<ScalarField> {
    let domain = mesh.domain;
    if let Some(v) = name.strip_prefix("const:") {
        let v: f64 = v
            .parse()
            .map_err(|e| Error::Config(format!("const field value `{v}`: {e}")))?;
        return Ok(ScalarField::from_cell_fn(mesh, |_| v));
    }
    if let Some(path) = name.strip_prefix("file:") {
        return io::read_scalar_json(Path::new(path));
    }
    if let Some(scale) = name.strip_prefix("random:") {
        let scale: f64 = scale
            .parse()
            .map_err(|e| Error::Config(format!("random field scale `{scale}`: {e}")))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values = (0..mesh.vertex_count())
            .map(|v| {
                if mesh.is_boundary_vertex(v) {
                    0.0
                } else {
                    rng.gen_range(-scale..scale)
                }
            })
            .collect();
        return ScalarField::new(mesh.clone(), Layout::Vertex, values);
    }
    match name {
        "x" => Ok(ScalarField::from_vertex_fn(mesh, |p| p[0])),
        "neg_log_r" => Ok(ScalarField::from_cell_fn(mesh, |p| {
            -radius_from(domain, p).max(1e-300).ln()
        })),
        "log_center" => Ok(ScalarField::from_cell_fn(mesh, |p| {
            radius_from(domain, p).max(1e-300).ln()
        })),
        "log_quadrant" => {
            if mesh.dim() != 2 {
                return Err(Error::Config("log_quadrant is a planar field".into()));
            }
            let c = center_of(domain);
            Ok(ScalarField::from_cell_fn(mesh, move |p| {
                let dx = p[0] - c[0];
                let dy = p[1] - c[1];
                if dx * dy > 0.0 {
                    (dx * dx + dy * dy).sqrt().max(1e-300).ln()
                } else {
                    0.0
                }
            }))
        }
        "inv_r" => Ok(ScalarField::from_cell_fn(mesh, |p| {
            1.0 / radius_from(domain, p).max(1e-300)
        })),
        "inv_r_sq" => Ok(ScalarField::from_cell_fn(mesh, |p| {
            1.0 / radius_from(domain, p).max(1e-300).powi(2)
        })),
        "sqrt_inv_r" => Ok(ScalarField::from_cell_fn(mesh, |p| {
            1.0 / radius_from(domain, p).max(1e-300).sqrt()
        })),
        "bubble" => Ok(match domain.kind {
            DomainKind::UnitDisk | DomainKind::UnitBall => ScalarField::from_vertex_fn(mesh, |p| {
                1.0 - p.iter().map(|x| x * x).sum::<f64>()
            }),
            _ => ScalarField::from_vertex_fn(mesh, |p| {
                p[..mesh.dim()].iter().map(|&x| x * (1.0 - x)).product()
            }),
        }),
        other => Err(Error::Config(format!("unknown scalar field `{other}`"))),
    }
}

/// Named skew drifts for the solve/caccioppoli subcommands.
pub fn named_skew(name: &str, mesh: &Arc<Mesh>, seed: u64) -> Result<SkewField> {
    let k = SkewField::entry_count(mesh.dim());
    if let Some(v) = name.strip_prefix("const:") {
        let v: f64 = v
            .parse()
            .map_err(|e| Error::Config(format!("const drift value `{v}`: {e}")))?;
        return Ok(SkewField::from_fn(mesh, |_| vec![v; k]));
    }
    if let Some(path) = name.strip_prefix("file:") {
        return io::read_skew_json(Path::new(path));
    }
    if let Some(scale) = name.strip_prefix("random:") {
        let scale: f64 = scale
            .parse()
            .map_err(|e| Error::Config(format!("random drift scale `{scale}`: {e}")))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let entries = (0..mesh.cell_count() * k)
            .map(|_| rng.gen_range(-scale..scale))
            .collect();
        return SkewField::new(mesh.clone(), entries);
    }
    match name {
        "none" => Ok(SkewField::zeros(mesh)),
        "sin5" => Ok(SkewField::from_fn(mesh, |p| {
            vec![(5.0 * p[0]).sin() * (5.0 * p[1]).sin(); k]
        })),
        "log_entries" => {
            let domain = mesh.domain;
            Ok(SkewField::from_fn(mesh, move |p| {
                vec![-radius_from(domain, p).max(1e-300).ln(); k]
            }))
        }
        other => Err(Error::Config(format!("unknown skew drift `{other}`"))),
    }
}

/// Named solenoidal vector fields for the potential subcommand.
pub fn named_vector(name: &str, mesh: &Arc<Mesh>) -> Result<VectorField> {
    match name {
        "rotation" => Ok(VectorField::from_fn(mesh, |p| [-p[1], p[0], 0.0])),
        "sinpp_perp" => {
            let pi = std::f64::consts::PI;
            Ok(VectorField::from_fn(mesh, move |p| {
                [
                    -pi * (pi * p[0]).sin() * (pi * p[1]).cos(),
                    pi * (pi * p[0]).cos() * (pi * p[1]).sin(),
                    0.0,
                ]
            }))
        }
        "e3" => Ok(VectorField::from_fn(mesh, |_| [0.0, 0.0, 1.0])),
        "bump_curl" => Ok(VectorField::from_fn(mesh, |p| {
            let r2 = p[0] * p[0] + p[1] * p[1] + p[2] * p[2];
            let s = r2 / 0.25;
            if s >= 1.0 {
                return [0.0, 0.0, 0.0];
            }
            let dphi = -3.0 * (1.0 - s) * (1.0 - s) / 0.25;
            [2.0 * p[1] * dphi, -2.0 * p[0] * dphi, 0.0]
        })),
        other => {
            if let Some(path) = other.strip_prefix("file:") {
                io::read_vector_json(Path::new(path))
            } else {
                Err(Error::Config(format!("unknown vector field `{other}`")))
            }
        }
    }
}

#[derive(Serialize)]
struct ReportEnvelope<T: Serialize> {
    schema_version: &'static str,
    subcommand: String,
    config: BTreeMap<String, String>,
    #[serde(flatten)]
    body: T,
}

fn write_report<T: Serialize>(
    opts: &RunOptions,
    config: BTreeMap<String, String>,
    name: &str,
    body: T,
) -> Result<PathBuf> {
    let path = opts.out_dir.join(name);
    let envelope = ReportEnvelope {
        schema_version: crate::REPORT_SCHEMA_VERSION,
        subcommand: opts.subcommand.clone(),
        config,
        body,
    };
    let text = serde_json::to_string_pretty(&envelope)?;
    std::fs::write(&path, text + "\n")?;
    Ok(path)
}

// ---------------------------------------------------------------------------
// subcommands
// ---------------------------------------------------------------------------

const DEFAULT_SCHEDULE: [f64; 11] = [
    1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0, 128.0, 256.0, 512.0, 1024.0,
];

#[derive(Serialize)]
struct SolveBody<'a> {
    #[serde(flatten)]
    report: &'a solver::SolveReport,
    l2_error_vs_reference: Option<f64>,
}

fn run_solve(config: &mut Config, opts: &RunOptions) -> Result<Vec<String>> {
    config.require_all(&["domain", "resolution"])?;
    let domain = domain_from(config)?;
    let resolution = config.u32_required("resolution")?;
    let drift = config.str_or("drift", "none");
    let schedule = config.schedule_or("schedule", &DEFAULT_SCHEDULE)?;
    let f_density = config.f64_or("f_density", 0.0)?;
    let reference = config.str_or("reference", "none");
    let rel_tol = config.f64_or("rel_tol", 1e-10)?;
    let resolved = config.finish()?;

    let mesh = Mesh::build(domain, resolution)?;
    let a = named_skew(&drift, &mesh, opts.seed)?;
    let f = Functional::from_density(ScalarField::from_cell_fn(&mesh, |_| f_density));
    let solve_opts = SolveOptions {
        rel_tol,
        ..Default::default()
    };
    let report = solver::approximation_solution(&mesh, &a, &f, &schedule, solve_opts)?;
    let l2_error = match reference.as_str() {
        "disk_bubble" => {
            let exact = ScalarField::from_vertex_fn(&mesh, |p| 1.0 - p[0] * p[0] - p[1] * p[1]);
            let diff = ScalarField::new(
                mesh.clone(),
                Layout::Vertex,
                report
                    .u
                    .values
                    .iter()
                    .zip(&exact.values)
                    .map(|(a, b)| a - b)
                    .collect(),
            )?;
            Some(field::l2_norm(&diff))
        }
        "none" => None,
        other => {
            return Err(Error::Config(format!(
                "unknown reference `{other}` (none, disk_bubble)"
            )))
        }
    };
    io::write_scalar_csv(&report.u, &opts.out_dir.join("solution.csv"))?;
    io::write_scalar_json(&report.u, &opts.out_dir.join("solution.json"))?;
    let body = SolveBody {
        report: &report,
        l2_error_vs_reference: l2_error,
    };
    write_report(opts, resolved, "report.json", body)?;
    let mut lines = vec![format!(
        "solve: converged = {}, energy defect = {:.3e}, |u|_H1 = {:.6}",
        report.converged, report.energy_defect, report.h1_seminorm
    )];
    if let Some(err) = l2_error {
        lines.push(format!("solve: L2 error vs reference = {err:.6e}"));
    }
    Ok(lines)
}

fn criterion_value(report: &NormReport, name: &str) -> f64 {
    let lp = |p: f64| {
        report
            .lp_samples
            .iter()
            .find(|&&(q, _)| (q - p).abs() < 1e-12)
            .map(|&(_, v)| v)
            .unwrap_or(f64::NAN)
    };
    match name {
        "L2" => lp(2.0),
        "Ln" | "AC" | "Linf" => lp(16.0),
        "Mn" => report.morrey_n,
        "GrandLn" | "T2" => report.grand_lebesgue_n,
        "ZC" | "ZC1" => report.growth_limit_l,
        _ => f64::NAN,
    }
}

fn run_norms(config: &mut Config, opts: &RunOptions) -> Result<Vec<String>> {
    config.require_all(&["domain", "resolution", "field"])?;
    let domain = domain_from(config)?;
    let resolution = config.u32_required("resolution")?;
    let field_name = config.str_or("field", "");
    let resolved = config.finish()?;

    let coarse = Mesh::build(domain, (resolution / 2).max(2))?;
    let fine = Mesh::build(domain, resolution)?;
    let meshes = vec![coarse, fine];
    let seed = opts.seed;
    let name = field_name.clone();
    let report = norms::classify_magnitude(&meshes, &move |m| {
        named_scalar(&name, m, seed)
            .expect("field name validated before ladder construction")
            .map(f64::abs)
    })?;
    // validate the field name eagerly for a clean error
    named_scalar(&field_name, &meshes[0], seed)?;

    write_report(opts, resolved, "norm_report.json", &report)?;
    let mut lines = vec![format!("{:<10} {:>14} {:>14}", "criterion", "value", "verdict")];
    for (name, verdict) in &report.criteria {
        let value = criterion_value(&report, name);
        let verdict = match verdict {
            Verdict::Holds => "holds",
            Verdict::Fails => "fails",
            Verdict::Inconclusive => "inconclusive",
        };
        lines.push(format!("{name:<10} {value:>14.6e} {verdict:>14}"));
    }
    lines.push(format!(
        "L = {:.6}, gamma* = {:.4}, bmo = {:.6}, morrey = {:.6}, grand = {:.6}, weak = {:.6}",
        report.growth_limit_l,
        report.gamma_star,
        report.bmo,
        report.morrey_n,
        report.grand_lebesgue_n,
        report.weak_n
    ));
    Ok(lines)
}

#[derive(Serialize)]
struct PotentialBody {
    construction: String,
    weak_div_residual: f64,
    solenoidality_residual: f64,
    mesh_h: f64,
}

fn run_potential(config: &mut Config, opts: &RunOptions) -> Result<Vec<String>> {
    config.require_all(&["domain", "resolution", "field", "construction"])?;
    let domain = domain_from(config)?;
    let resolution = config.u32_required("resolution")?;
    let field_name = config.str_or("field", "");
    let construction = config.str_or("construction", "");
    let test_count = config.f64_or("test_count", 40.0)? as usize;
    let resolved = config.finish()?;

    let mesh = Mesh::build(domain, resolution)?;
    let a = named_vector(&field_name, &mesh)?;
    let skew = match construction.as_str() {
        "stream2d" => {
            let sf = potentials::stream_function_2d(&a)?;
            io::write_scalar_json(&sf.alpha, &opts.out_dir.join("stream_function.json"))?;
            sf.skew
        }
        "poincare_ball" => potentials::poincare_potential_ball(&a)?,
        "newtonian" => potentials::newtonian_potential(&a)?,
        other => {
            return Err(Error::Config(format!(
                "unknown construction `{other}` (stream2d, poincare_ball, newtonian)"
            )))
        }
    };
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let residual = potentials::weak_div_residual(&skew, &a, test_count, &mut rng)?;
    let sol = potentials::solenoidality_residual(&a)? / a.l2_norm().max(1e-300);
    io::write_skew_json(&skew, &opts.out_dir.join("potential.json"))?;
    let body = PotentialBody {
        construction,
        weak_div_residual: residual,
        solenoidality_residual: sol,
        mesh_h: mesh.h(),
    };
    write_report(opts, resolved, "residual_report.json", &body)?;
    Ok(vec![format!(
        "potential: weak divergence residual {residual:.6e} (h = {:.4e})",
        mesh.h()
    )])
}

#[derive(Serialize)]
struct TruncateBody {
    lambda: f64,
    c: f64,
    good_set_size: usize,
    vertex_count: usize,
    good_set_gap: f64,
    lipschitz_quotient: f64,
    h1_distance_to_input: f64,
}

fn run_truncate(config: &mut Config, opts: &RunOptions) -> Result<Vec<String>> {
    config.require_all(&["domain", "resolution", "field", "lambda"])?;
    let domain = domain_from(config)?;
    let resolution = config.u32_required("resolution")?;
    let field_name = config.str_or("field", "");
    let lambda = config.f64_required("lambda")?;
    let c = config.f64_or("c", 1.0)?;
    let resolved = config.finish()?;

    let mesh = Mesh::build(domain, resolution)?;
    let u = named_scalar(&field_name, &mesh, opts.seed)?;
    let t = truncation::lipschitz_truncation(&u, lambda, c)?;
    io::write_scalar_csv(&t.field, &opts.out_dir.join("truncated.csv"))?;
    io::write_scalar_json(&t.field, &opts.out_dir.join("truncated.json"))?;
    let quotient = truncation::pairwise_lipschitz_quotient(&t.field);
    let body = TruncateBody {
        lambda,
        c,
        good_set_size: t.good_set.len(),
        vertex_count: mesh.vertex_count(),
        good_set_gap: t.good_set_gap,
        lipschitz_quotient: quotient,
        h1_distance_to_input: field::h1_distance(&t.field, &u)?,
    };
    write_report(opts, resolved, "truncation_report.json", &body)?;
    Ok(vec![format!(
        "truncate: |F| = {}/{} vertices, quotient {:.4} <= C lambda = {:.4}",
        t.good_set.len(),
        mesh.vertex_count(),
        quotient,
        c * lambda
    )])
}

fn run_caccioppoli(config: &mut Config, opts: &RunOptions) -> Result<Vec<String>> {
    config.require_all(&["domain", "resolution", "field", "drift"])?;
    let domain = domain_from(config)?;
    let resolution = config.u32_required("resolution")?;
    let field_name = config.str_or("field", "");
    let drift_name = config.str_or("drift", "");
    let lambdas = config.schedule_or("lambdas", &[0.25, 0.5, 1.0, 2.0, 4.0, 8.0])?;
    let c = config.f64_or("c", 1.0)?;
    let f_density = config.f64_or("f_density", 4.0)?;
    let resolved = config.finish()?;

    let mesh = Mesh::build(domain, resolution)?;
    let a = named_skew(&drift_name, &mesh, opts.seed)?;
    let u = if field_name == "solve" {
        let f = Functional::from_density(ScalarField::from_cell_fn(&mesh, |_| f_density));
        solver::solve_truncated(&mesh, &a, a.max_entry().max(1.0), &f, SolveOptions::default())?
    } else {
        named_scalar(&field_name, &mesh, opts.seed)?
    };
    let table = truncation::caccioppoli_replay(&u, &a, &lambdas, c)?;
    // CSV table
    let mut csv = String::from("lambda,lhs,rhs_bound,residual,satisfied\n");
    for row in &table.rows {
        csv.push_str(&format!(
            "{},{:.17e},{:.17e},{:.17e},{}\n",
            row.lambda, row.lhs, row.rhs_bound, row.residual, row.satisfied
        ));
    }
    std::fs::write(opts.out_dir.join("caccioppoli.csv"), csv)?;
    write_report(opts, resolved, "caccioppoli.json", &table)?;
    let all_ok = table.rows.iter().all(|r| r.satisfied);
    Ok(vec![format!(
        "caccioppoli: {} rows, inequality satisfied on all rows: {all_ok}",
        table.rows.len()
    )])
}

fn run_zhikov(config: &mut Config, opts: &RunOptions) -> Result<Vec<String>> {
    config.require_all(&["resolution", "rho"])?;
    let resolution = config.u32_required("resolution")?;
    let rho = config.f64_required("rho")?;
    let schedule = config.schedule_or("schedule", &[1.0, 2.0, 4.0, 8.0, 16.0])?;
    let tolerance = config.f64_or("tolerance", 5e-2)?;
    let rel_tol = config.f64_or("rel_tol", 1e-10)?;
    let resolved = config.finish()?;

    let pair = zhikov::build_pair()?;
    let mesh = Mesh::build(Domain::new(DomainKind::UnitBall), resolution)?;
    let report = zhikov::nonuniqueness_report(
        &pair,
        &mesh,
        rho,
        &schedule,
        SolveOptions {
            rel_tol,
            ..Default::default()
        },
        tolerance,
    )?;
    let candidate = zhikov::candidate_solution(&pair, &mesh)?;
    io::write_scalar_csv(&candidate, &opts.out_dir.join("candidate.csv"))?;
    io::write_scalar_csv(&report.approximation.u, &opts.out_dir.join("approximation.csv"))?;
    let verdict = report.verdict.clone();
    write_report(opts, resolved, "zhikov_report.json", &report)?;
    Ok(vec![verdict])
}
