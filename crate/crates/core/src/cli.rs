//! Flat `key = value` run configuration and the four command drivers.
//!
//! Every command validates the whole configuration before computing, writes its artifacts to
//! `output_dir` next to a copy of the configuration, and returns a process exit code.

use std::collections::BTreeMap;
use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::evolution::{initial_data, lifespan_study, EvolutionError, LifespanStudy, SimConfig};
use crate::nonlinearity::{CubicDensity, NonlinearityError};
use crate::normal_form::{decompose, homological_g, run_ledger, Ledger, NFParams, NfError, NfSystem};
use crate::paradiff::{
    composition_residual, eta, flow, flow_offdiag, is_selfadjoint, quantize_bw_with, symplectic_residual,
    unitarity_residual, LinearFamily, Symbol, Table,
};
use crate::small_divisors::{
    birkhoff_matrix_solve, birkhoff_residual, certify_lower_bound, d_star, excluded_measure_scan, omega_g,
    DivisorError, LowerBoundReport, ScanConfig,
};
use crate::torus_grid::{GridError, GridSpec, PairField, Pt, MAX_DIM};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("config key `{key}`: {msg}")]
    Value { key: String, msg: String },
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Nf(#[from] NfError),
    #[error(transparent)]
    Divisor(#[from] DivisorError),
    #[error(transparent)]
    Evolution(#[from] EvolutionError),
    #[error(transparent)]
    Nonlinearity(#[from] NonlinearityError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

/// Every accepted key with its default.
pub const KEYS: &[(&str, &str)] = &[
    ("seed", "0"),
    ("output_dir", "out"),
    ("grid.d", "1"),
    ("grid.K", "16"),
    ("grid.metric", ""),
    ("grid.m", "0.5"),
    ("grid.eps_q", "0.25"),
    ("density.file", ""),
    ("nf.delta", ""),
    ("nf.tau", ""),
    ("nf.eps_nf", ""),
    ("nf.s", "1"),
    ("nf.eps", "0.05"),
    ("nf.n_steps", "2"),
    ("scan.gamma", "1e-3"),
    ("scan.tau_star", ""),
    ("scan.ell_cutoff", "20"),
    ("scan.mass_lo", "0"),
    ("scan.mass_hi", "1"),
    ("scan.mass_count", "10000"),
    ("scan.metric_perturbation", ""),
    ("scan.radius", ""),
    ("sim.dt", "0.01"),
    ("sim.rho", "4"),
    ("sim.s_high", "8"),
    ("sim.blowup_factor", "2"),
    ("sim.record_stride", "10"),
    ("sim.window", "0.1"),
    ("sim.eps_list", "0.1, 0.05, 0.025"),
    ("sim.seeds", "1, 2"),
    ("sim.ratio_envelope", "3"),
    ("sim.high_envelope", "4"),
    ("verify.fault", "none"),
];

/// Test hook for `verify-calculus`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Fault {
    None,
    /// Quantize with a cutoff that is not 1 near the diagonal.
    Eta,
}

#[derive(Clone, Debug)]
pub struct RunConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    pub grid: GridSpec,
    pub density: CubicDensity,
    pub nf: NFParams,
    pub nf_s: f64,
    pub nf_eps: f64,
    pub nf_steps: usize,
    pub scan: ScanConfig,
    /// Seeded `G = I + p·S` for the scan instead of the grid metric.
    pub scan_perturbation: Option<f64>,
    pub scan_radius: usize,
    pub sim: SimConfig,
    pub window: f64,
    pub eps_list: Vec<f64>,
    pub seeds: Vec<u64>,
    pub ratio_envelope: f64,
    pub high_envelope: f64,
    pub fault: Fault,
    /// The merged key-value table, as archived next to the outputs.
    pub table: BTreeMap<String, String>,
}

fn value_err(key: &str, msg: impl ToString) -> CliError {
    CliError::Value { key: key.to_string(), msg: msg.to_string() }
}

struct Table_<'a>(&'a BTreeMap<String, String>);

impl Table_<'_> {
    fn raw(&self, key: &str) -> &str {
        self.0.get(key).map(String::as_str).unwrap_or("")
    }

    fn get<T: std::str::FromStr>(&self, key: &str) -> Result<T, CliError>
    where
        T::Err: std::fmt::Display,
    {
        self.raw(key).trim().parse().map_err(|e: T::Err| value_err(key, e))
    }

    fn opt<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>, CliError>
    where
        T::Err: std::fmt::Display,
    {
        if self.raw(key).trim().is_empty() {
            Ok(None)
        } else {
            self.get(key).map(Some)
        }
    }

    fn list<T: std::str::FromStr>(&self, key: &str) -> Result<Vec<T>, CliError>
    where
        T::Err: std::fmt::Display,
    {
        self.raw(key)
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| s.parse().map_err(|e: T::Err| value_err(key, e)))
            .collect()
    }
}

/// Parses `key = value` lines; `#` starts a comment.
pub fn parse_pairs(text: &str) -> Result<BTreeMap<String, String>, CliError> {
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or(CliError::Syntax { line: i + 1, msg: "expected key = value".into() })?;
        let k = k.trim();
        if !KEYS.iter().any(|(known, _)| *known == k) {
            return Err(CliError::UnknownKey(k.to_string()));
        }
        if out.insert(k.to_string(), v.trim().to_string()).is_some() {
            return Err(CliError::Syntax { line: i + 1, msg: format!("duplicate key `{k}`") });
        }
    }
    Ok(out)
}

impl RunConfig {
    pub fn from_text(text: &str) -> Result<Self, CliError> {
        Self::from_pairs(parse_pairs(text)?)
    }

    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        Self::from_text(&fs::read_to_string(path)?)
    }

    /// Defaults overlaid by `pairs`, then fully validated.
    pub fn from_pairs(pairs: BTreeMap<String, String>) -> Result<Self, CliError> {
        let mut table: BTreeMap<String, String> = KEYS.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
        for (k, v) in pairs {
            if !table.contains_key(&k) {
                return Err(CliError::UnknownKey(k));
            }
            table.insert(k, v);
        }
        let t = Table_(&table);
        let d: usize = t.get("grid.d")?;
        if !(1..=MAX_DIM).contains(&d) {
            return Err(value_err("grid.d", format!("must be 1..={MAX_DIM}")));
        }
        let metric: Vec<f64> = t.list("grid.metric")?;
        let metric = if metric.is_empty() {
            (0..d * d).map(|i| if i % (d + 1) == 0 { 1.0 } else { 0.0 }).collect()
        } else {
            metric
        };
        let grid = GridSpec::new(d, t.get("grid.K")?, &metric, t.get("grid.m")?, t.get("grid.eps_q")?)?;
        let density = match t.raw("density.file").trim() {
            "" => CubicDensity::canonical(d),
            path => CubicDensity::read_text(d, std::io::BufReader::new(fs::File::open(path)?))?,
        };
        let nf_default = NFParams::default_for(d);
        let nf = NFParams::new(
            d,
            t.opt("nf.delta")?.unwrap_or(nf_default.delta),
            t.opt("nf.tau")?.unwrap_or(nf_default.tau),
            t.opt("nf.eps_nf")?.unwrap_or(nf_default.eps_nf),
        )?;
        let nf_eps: f64 = t.get("nf.eps")?;
        if !(nf_eps > 0.0) {
            return Err(value_err("nf.eps", "must be positive"));
        }
        let mut scan = ScanConfig::default_for(d);
        scan.gamma = t.get("scan.gamma")?;
        scan.tau_star = t.opt("scan.tau_star")?.unwrap_or(d_star(d) as f64 + 1.0);
        scan.ell_cutoff = t.get("scan.ell_cutoff")?;
        scan.mass_lo = t.get("scan.mass_lo")?;
        scan.mass_hi = t.get("scan.mass_hi")?;
        scan.mass_count = t.get("scan.mass_count")?;
        scan.validate(d)?;
        let scan_perturbation: Option<f64> = t.opt("scan.metric_perturbation")?;
        if let Some(p) = scan_perturbation {
            if !(0.0..0.5).contains(&p) {
                return Err(value_err("scan.metric_perturbation", "must lie in [0, 0.5)"));
            }
        }
        let scan_radius = t.opt("scan.radius")?.unwrap_or(if d == 1 { 32 } else { 12 });
        let sim = SimConfig {
            dt: t.get("sim.dt")?,
            t_max: 0.0,
            rho: t.get("sim.rho")?,
            s_high: t.list("sim.s_high")?,
            blowup_factor: t.get("sim.blowup_factor")?,
            record_stride: t.get("sim.record_stride")?,
        };
        sim.validate()?;
        let eps_list: Vec<f64> = t.list("sim.eps_list")?;
        if eps_list.is_empty() || eps_list.windows(2).any(|w| !(w[1] < w[0])) || eps_list.iter().any(|&e| !(e > 0.0)) {
            return Err(value_err("sim.eps_list", "must be nonempty, positive and strictly decreasing"));
        }
        let seeds: Vec<u64> = t.list("sim.seeds")?;
        if seeds.is_empty() {
            return Err(value_err("sim.seeds", "must be nonempty"));
        }
        let window: f64 = t.get("sim.window")?;
        if !(window > 0.0) {
            return Err(value_err("sim.window", "must be positive"));
        }
        let fault = match t.raw("verify.fault").trim() {
            "none" => Fault::None,
            "eta" => Fault::Eta,
            other => return Err(value_err("verify.fault", format!("unknown fault `{other}`"))),
        };
        Ok(RunConfig {
            seed: t.get("seed")?,
            output_dir: PathBuf::from(t.raw("output_dir")),
            grid,
            density,
            nf,
            nf_s: t.get("nf.s")?,
            nf_eps,
            nf_steps: t.get("nf.n_steps")?,
            scan,
            scan_perturbation,
            scan_radius,
            sim,
            window,
            eps_list,
            seeds,
            ratio_envelope: t.get("sim.ratio_envelope")?,
            high_envelope: t.get("sim.high_envelope")?,
            fault,
            table,
        })
    }

    /// Replaces one key and revalidates.
    pub fn with(&self, key: &str, value: impl ToString) -> Result<Self, CliError> {
        let mut pairs = self.table.clone();
        if !pairs.contains_key(key) {
            return Err(CliError::UnknownKey(key.to_string()));
        }
        pairs.insert(key.to_string(), value.to_string());
        Self::from_pairs(pairs)
    }

    /// The merged table in `key = value` form.
    pub fn to_text(&self) -> String {
        self.table.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    fn prepare_output(&self, command: &str) -> Result<(), CliError> {
        fs::create_dir_all(&self.output_dir)?;
        fs::write(self.output_dir.join(format!("{command}.config")), self.to_text())?;
        Ok(())
    }

    fn write_json<T: Serialize>(&self, name: &str, v: &T) -> Result<(), CliError> {
        let f = BufWriter::new(fs::File::create(self.output_dir.join(name))?);
        serde_json::to_writer_pretty(f, v)?;
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub pass: bool,
}

impl Check {
    fn at_most(name: &str, value: f64, threshold: f64) -> Self {
        Check { name: name.into(), value, threshold, pass: value.is_finite() && value <= threshold }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct VerifyReport {
    pub d: usize,
    pub k: usize,
    pub fault: Fault,
    pub checks: Vec<Check>,
    pub failed: Vec<String>,
}

/// Real symbol of the given order with x-band 2: `⟨ζ⟩^order (c₀ + Σ_{0<|k|≤2} c_k e^{ikx}) (1 + 0.1ζ₁)`.
pub fn test_symbol(grid: &GridSpec, seed: u64, order: f64) -> Symbol {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut coef = vec![Complex64::new(0.0, 0.0); grid.len()];
    for (i, p) in grid.points().enumerate() {
        if p.iter().all(|v| v.abs() <= 2) {
            coef[i] = Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)) * 0.3;
        }
    }
    let sym = coef.clone();
    let g = *grid;
    Symbol::from_fn(grid, order, move |k, z| {
        let Some(i) = g.index(k) else { return Complex64::new(0.0, 0.0) };
        let j = g.neg_index(i);
        // Hermitian part in k makes the symbol real in x.
        let c = (sym[i] + sym[j].conj()) * 0.5;
        let zz = z.iter().map(|v| v * v).sum::<f64>();
        c * (1.0 + zz).powf(order / 2.0) * (1.0 + 0.1 * z[0] / (1.0 + zz).sqrt())
    })
}

/// Fixed pair for the composition check: `Λ` and the band-limited order-1 symbol
/// `(1 + 0.3 cos x₁)⟨ζ⟩ + 0.2 sin(x₁) ζ₁`.
///
/// With one factor x-independent the two cutoffs agree, so the residual is the truncation of the
/// expansion alone and vanishes from `ρ = 3` on because `Λ` is quadratic.
pub fn composition_pair(grid: &GridSpec) -> (Symbol, Symbol) {
    let b = Symbol::from_fn(grid, 1.0, |k, z| {
        let jz = (1.0 + z.iter().map(|v| v * v).sum::<f64>()).sqrt();
        if k[1..].iter().any(|&v| v != 0) {
            return Complex64::new(0.0, 0.0);
        }
        match k[0] {
            0 => Complex64::new(jz, 0.0),
            1 => Complex64::new(0.15 * jz, -0.1 * z[0]),
            -1 => Complex64::new(0.15 * jz, 0.1 * z[0]),
            _ => Complex64::new(0.0, 0.0),
        }
    });
    (Symbol::lambda(grid), b)
}

/// `[r(1), r(2), r(3)]` for `Op(a)Op(b) − Op(a #_ρ b)` in both orders of [`composition_pair`].
pub fn composition_ladder(grid: &GridSpec, s: f64) -> [[f64; 3]; 2] {
    let (a, b) = composition_pair(grid);
    let run = |x: &Symbol, y: &Symbol| [1, 2, 3].map(|rho| composition_residual(x, y, rho, s));
    [run(&a, &b), run(&b, &a)]
}

/// Residual checks of the quantization, calculus, flows and homological solvers at one grid size.
pub fn calculus_suite(grid: &GridSpec, fault: Fault, seed: u64) -> Vec<Check> {
    let g = *grid;
    let d = g.d();
    let cut = move |y: f64| match fault {
        Fault::None => eta(y),
        Fault::Eta => 0.99 * eta(y),
    };
    let mut checks = Vec::new();

    let lam = quantize_bw_with(&Symbol::lambda(&g), cut);
    let diag = (0..g.len()).map(|i| (lam.matrix()[(i, i)].re - g.lambda(&g.point(i))).abs()).fold(0.0, f64::max);
    let off = lam.matrix().iter().map(|v| v.norm()).sum::<f64>() - lam.matrix().diagonal().iter().map(|v| v.norm()).sum::<f64>();
    let scale = g.lambda(&g.point(0));
    checks.push(Check::at_most("lambda_quantization", (diag + off) / scale, 1e-13));

    let sa = (0..5)
        .map(|s| {
            let a = test_symbol(&g, seed + s, 1.0);
            is_selfadjoint(&quantize_bw_with(&a, cut)) / quantize_bw_with(&a, cut).max_abs()
        })
        .fold(0.0, f64::max);
    checks.push(Check::at_most("selfadjointness", sa, 1e-12));

    let mult_a = Symbol::multiplier(&g, 2.0, |z| Complex64::new(g.lambda_at(z), 0.0));
    let mult_b = Symbol::multiplier(&g, 1.0, |z| Complex64::new((1.0 + z[0] * z[0]).sqrt(), 0.0));
    let mres = composition_residual(&mult_a, &mult_b, 2, 1.0);
    checks.push(Check::at_most("composition_multipliers", mres, 1e-13));

    let growth = composition_ladder(&g, 1.0)
        .iter()
        .flat_map(|r| r.windows(2).map(|w| if w[1] <= w[0] { 0.0 } else { w[1] - w[0] }).collect::<Vec<_>>())
        .fold(0.0, f64::max);
    checks.push(Check::at_most("composition_monotone_rho", growth, 1e-13));

    let real = test_symbol(&g, seed + 11, 0.0).scale(Complex64::new(0.5, 0.0));
    let un = flow(&real, 4).map(|phi| unitarity_residual(&phi)).unwrap_or(f64::INFINITY);
    checks.push(Check::at_most("unitarity", un, 1e-10));

    let psi = test_symbol(&g, seed + 12, 0.0).scale(Complex64::new(0.2, 0.0));
    let psi = psi.add(&psi.reflect_xi()).scale(Complex64::new(0.5, 0.0));
    checks.push(Check::at_most("symplecticity_offdiag", symplectic_residual(&flow_offdiag(&psi, 4)), 1e-10));

    let mut rng = ChaCha8Rng::seed_from_u64(seed + 13);
    let mut fam = LinearFamily::zeros(&g);
    for t in Table::ALL {
        *fam.table_mut(t) = nalgebra::DMatrix::from_fn(g.len(), g.len(), |_, _| {
            Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        });
    }
    let fam = fam.map(|_, _, _, v| v);
    let bres = birkhoff_matrix_solve(&fam).map(|f| birkhoff_residual(&fam, &f)).unwrap_or(f64::INFINITY);
    checks.push(Check::at_most("birkhoff_identity", bres, 1e-12));

    let p = NFParams::default_for(d);
    let sym = test_symbol(&g, seed + 14, 1.0);
    let dec = decompose(&sym, &p);
    checks.push(Check::at_most("decomposition", dec.sum().sub(&sym).max_abs(), 1e-14));
    let row = Symbol::from_fn(&g, 0.0, |k: &Pt, _| {
        if k[0] == 1 && k[1..].iter().all(|&v| v == 0) {
            Complex64::new(0.7, -0.2)
        } else {
            Complex64::new(0.0, 0.0)
        }
    });
    checks.push(Check::at_most("homological_constant_rows", homological_g(&row, &p).1, 1e-12));
    checks.push(Check::at_most("homological_smooth_rows", homological_g(&sym, &p).1, 1e-6));
    checks
}

pub fn cmd_verify_calculus(cfg: &RunConfig) -> Result<(i32, VerifyReport), CliError> {
    cfg.prepare_output("verify_calculus")?;
    let checks = calculus_suite(&cfg.grid, cfg.fault, cfg.seed);
    let failed: Vec<String> = checks.iter().filter(|c| !c.pass).map(|c| c.name.clone()).collect();
    let report = VerifyReport { d: cfg.grid.d(), k: cfg.grid.k(), fault: cfg.fault, checks, failed };
    cfg.write_json("verify_calculus.json", &report)?;
    Ok((if report.failed.is_empty() { 0 } else { 1 }, report))
}

#[derive(Clone, Debug, Serialize)]
pub struct ScanSummary {
    pub omega: Vec<f64>,
    pub gamma: f64,
    pub tau_star: f64,
    pub ell_cutoff: usize,
    pub mass_count: usize,
    pub excluded_fraction: f64,
    pub lower_bound: LowerBoundReport,
}

/// The scan's `ω`: the grid metric, or a seeded `I + p·S` when a perturbation is configured.
pub fn scan_omega(cfg: &RunConfig) -> Result<Vec<f64>, CliError> {
    let d = cfg.grid.d();
    match cfg.scan_perturbation {
        None => Ok(omega_g(&cfg.grid)),
        Some(p) => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            let mut g = vec![0.0; d * d];
            for i in 0..d {
                for j in i..d {
                    let v: f64 = rng.random_range(-1.0..1.0) * p;
                    g[i * d + j] = v + if i == j { 1.0 } else { 0.0 };
                    g[j * d + i] = g[i * d + j];
                }
            }
            Ok(omega_g(&GridSpec::new(d, cfg.grid.k(), &g, cfg.grid.m(), cfg.grid.eps_q())?))
        }
    }
}

pub fn cmd_scan_mass(cfg: &RunConfig) -> Result<(i32, ScanSummary), CliError> {
    cfg.prepare_output("scan_mass")?;
    let omega = scan_omega(cfg)?;
    let scan = excluded_measure_scan(&cfg.scan, &omega);
    let mut wr = csv::Writer::from_path(cfg.output_dir.join("scan_mass.csv"))?;
    wr.write_record(["m", "pass", "worst_ell", "worst_value"])?;
    for r in &scan.rows {
        let ell: Vec<String> = r.worst_ell.iter().map(|v| v.to_string()).collect();
        wr.write_record([format!("{:.10}", r.m), r.pass.to_string(), ell.join(" "), format!("{:e}", r.worst_value)])?;
    }
    wr.flush()?;
    let lower_bound = certify_lower_bound(&cfg.grid, cfg.scan.gamma, cfg.scan.tau_star, cfg.scan_radius);
    let summary = ScanSummary {
        omega,
        gamma: cfg.scan.gamma,
        tau_star: cfg.scan.tau_star,
        ell_cutoff: cfg.scan.ell_cutoff,
        mass_count: cfg.scan.mass_count,
        excluded_fraction: scan.excluded_fraction,
        lower_bound,
    };
    cfg.write_json("scan_summary.json", &summary)?;
    Ok((0, summary))
}

#[derive(Clone, Debug, Serialize)]
pub struct NormalFormOutput {
    pub eps: f64,
    pub s: f64,
    pub n_steps: usize,
    pub ledger: Option<Ledger>,
    pub error: Option<String>,
}

/// Base point for the normal-form driver: seeded initial data of size `nf.eps` in `H^{nf.s}`.
pub fn nf_base_point(cfg: &RunConfig) -> PairField {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    PairField::from_u(initial_data(&cfg.grid, cfg.nf_s, cfg.nf_eps, &mut rng))
}

pub fn cmd_normal_form(cfg: &RunConfig) -> Result<(i32, NormalFormOutput), CliError> {
    cfg.prepare_output("normal_form")?;
    let sys = NfSystem::new(&cfg.density, &nf_base_point(cfg), cfg.nf, cfg.nf_s)?;
    let (code, ledger, error) = match run_ledger(&sys, cfg.nf_steps) {
        Ok((_, ledger)) => (0, Some(ledger), None),
        Err(e @ NfError::Divisor(_)) => (2, None, Some(e.to_string())),
        Err(e) => return Err(e.into()),
    };
    let out = NormalFormOutput { eps: cfg.nf_eps, s: cfg.nf_s, n_steps: cfg.nf_steps, ledger, error };
    cfg.write_json("normal_form.json", &out)?;
    Ok((code, out))
}

#[derive(Clone, Debug, Serialize)]
pub struct LifespanSummary {
    pub study: LifespanStudy,
    pub max_low_ratio: f64,
    pub max_high_growth: f64,
    pub min_ratio: Option<f64>,
    pub all_censored: bool,
    pub pass_low: bool,
    pub pass_high: bool,
    pub pass_ratio: bool,
    pub pass: bool,
}

pub fn cmd_lifespan(cfg: &RunConfig) -> Result<(i32, LifespanSummary), CliError> {
    cfg.prepare_output("lifespan")?;
    let study = lifespan_study(&cfg.density, &cfg.grid, &cfg.sim, &cfg.eps_list, &cfg.seeds, cfg.window)?;
    study.write_csv(BufWriter::new(fs::File::create(cfg.output_dir.join("lifespan.csv"))?))?;
    let max_low_ratio = study.rows.iter().map(|r| r.low_ratio).fold(0.0, f64::max);
    let max_high_growth = study.rows.iter().flat_map(|r| r.high_growth.iter().cloned()).fold(0.0, f64::max);
    let min_ratio = study.ratios.iter().map(|r| r.ratio).reduce(f64::min);
    let pass_low = max_low_ratio <= cfg.sim.blowup_factor;
    let pass_high = max_high_growth <= cfg.high_envelope;
    let pass_ratio = min_ratio.is_none_or(|r| r >= cfg.ratio_envelope);
    let summary = LifespanSummary {
        all_censored: study.all_censored(),
        study,
        max_low_ratio,
        max_high_growth,
        min_ratio,
        pass_low,
        pass_high,
        pass_ratio,
        pass: pass_low && pass_high && pass_ratio,
    };
    cfg.write_json("lifespan_summary.json", &summary)?;
    Ok((if summary.pass { 0 } else { 1 }, summary))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tmp(name: &str) -> PathBuf {
        let p = std::env::temp_dir().join(format!("torus-nf-cli-{name}-{}", std::process::id()));
        let _ = fs::remove_dir_all(&p);
        p
    }

    #[test]
    fn defaults_validate() {
        let cfg = RunConfig::from_text("").unwrap();
        assert_eq!((cfg.grid.d(), cfg.grid.k()), (1, 16));
        assert_eq!(cfg.nf, NFParams::default_for(1));
        assert_eq!(cfg.scan.tau_star, 2.0);
        assert_eq!(cfg.eps_list, vec![0.1, 0.05, 0.025]);
    }

    #[test]
    fn parser_rejects_bad_input() {
        assert!(matches!(RunConfig::from_text("grid.k = 4"), Err(CliError::UnknownKey(_))));
        assert!(matches!(RunConfig::from_text("grid.K 4"), Err(CliError::Syntax { line: 1, .. })));
        assert!(matches!(RunConfig::from_text("grid.K = 4\ngrid.K = 5"), Err(CliError::Syntax { line: 2, .. })));
        assert!(RunConfig::from_text("grid.m = -1").is_err());
        assert!(RunConfig::from_text("nf.delta = 0.5").is_err());
        assert!(RunConfig::from_text("sim.eps_list = 0.05, 0.1").is_err());
        assert!(RunConfig::from_text("verify.fault = bogus").is_err());
        let cfg = RunConfig::from_text("# comment\ngrid.d = 2 # trailing\ngrid.metric = 1, 0.1, 0.1, 1.2").unwrap();
        assert_eq!(cfg.grid.metric(0, 1), 0.1);
        assert_eq!(RunConfig::from_text(&cfg.to_text()).unwrap().table, cfg.table);
    }

    #[test]
    fn verify_small_grid_and_fault() {
        let dir = tmp("verify");
        let cfg = RunConfig::from_text(&format!("grid.K = 2\noutput_dir = {}", dir.display())).unwrap();
        let (code, rep) = cmd_verify_calculus(&cfg).unwrap();
        assert_eq!(code, 0, "{:?}", rep.checks);
        let (code, rep) = cmd_verify_calculus(&cfg.with("verify.fault", "eta").unwrap()).unwrap();
        assert_eq!(code, 1);
        assert!(rep.failed.contains(&"lambda_quantization".to_string()));
        assert!(dir.join("verify_calculus.json").exists());
        let _ = fs::remove_dir_all(dir);
    }

    #[test]
    fn normal_form_zero_steps_and_resonance() {
        let dir = tmp("nf");
        let cfg = RunConfig::from_text(&format!("grid.K = 6\nnf.n_steps = 0\noutput_dir = {}", dir.display())).unwrap();
        let (code, out) = cmd_normal_form(&cfg).unwrap();
        assert_eq!(code, 0);
        let ledger = out.ledger.unwrap();
        assert!(ledger.steps.is_empty());
        assert!(ledger.initial.offdiag > 0.0);
        let resonant = cfg.with("grid.m", 2).unwrap().with("nf.n_steps", 1).unwrap();
        let (code, out) = cmd_normal_form(&resonant).unwrap();
        assert_eq!(code, 2);
        assert!(out.error.unwrap().contains("zero divisor"));
        let _ = fs::remove_dir_all(dir);
    }

    #[test]
    fn scan_outputs_are_reproducible() {
        let dir = tmp("scan");
        let cfg = RunConfig::from_text(&format!(
            "grid.d = 2\ngrid.K = 2\nscan.mass_count = 50\nscan.ell_cutoff = 3\nscan.radius = 3\nscan.metric_perturbation = 0.2\noutput_dir = {}",
            dir.display()
        ))
        .unwrap();
        cmd_scan_mass(&cfg).unwrap();
        let first = fs::read(dir.join("scan_mass.csv")).unwrap();
        cmd_scan_mass(&cfg).unwrap();
        assert_eq!(first, fs::read(dir.join("scan_mass.csv")).unwrap());
        assert_eq!(String::from_utf8(first).unwrap().lines().count(), 51);
        let _ = fs::remove_dir_all(dir);
    }
}
