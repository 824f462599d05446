//! Strang-split time integration and lifespan tracking.

use std::io::Write;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::nonlinearity::{CubicDensity, Nonlinearity, NonlinearityError};
use crate::torus_grid::{japanese, to_f, Field, GridSpec};

#[derive(Debug, Error)]
pub enum EvolutionError {
    #[error("invalid simulation config: {0}")]
    Config(String),
    #[error("non-finite state at t = {t}")]
    Blowup { t: f64 },
    #[error(transparent)]
    Nonlinearity(#[from] NonlinearityError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SimConfig {
    pub dt: f64,
    pub t_max: f64,
    pub rho: f64,
    pub s_high: Vec<f64>,
    pub blowup_factor: f64,
    pub record_stride: usize,
}

impl SimConfig {
    pub fn new(dt: f64, t_max: f64, rho: f64, s_high: Vec<f64>) -> Result<Self, EvolutionError> {
        let cfg = SimConfig { dt, t_max, rho, s_high, blowup_factor: 2.0, record_stride: 1 };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), EvolutionError> {
        let bad = |m: String| Err(EvolutionError::Config(m));
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad(format!("dt must be positive, got {}", self.dt));
        }
        if !(self.t_max >= 0.0 && self.t_max.is_finite()) {
            return bad(format!("t_max must be finite and nonnegative, got {}", self.t_max));
        }
        if !(self.rho >= 1.0) {
            return bad(format!("rho must be ≥ 1, got {}", self.rho));
        }
        if let Some(s) = self.s_high.iter().find(|&&s| !(s >= self.rho)) {
            return bad(format!("high index {s} below rho = {}", self.rho));
        }
        if !(self.blowup_factor > 1.0) {
            return bad(format!("blowup_factor must exceed 1, got {}", self.blowup_factor));
        }
        if self.record_stride == 0 {
            return bad("record_stride must be positive".into());
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Exit {
    Completed,
    NormExceeded { t_star: f64 },
    Blowup { t: f64 },
}

#[derive(Clone, Debug, Serialize)]
pub struct Trajectory {
    pub eps: f64,
    pub s_high: Vec<f64>,
    pub times: Vec<f64>,
    pub low_norms: Vec<f64>,
    /// `high_norms[i][j]` is `‖u(times[j])‖_{H^{s_high[i]}}`.
    pub high_norms: Vec<Vec<f64>>,
    pub hamiltonian: Vec<f64>,
    pub exit: Exit,
}

impl Trajectory {
    pub fn max_low(&self) -> f64 {
        self.low_norms.iter().cloned().fold(0.0, f64::max)
    }

    /// `max_t ‖u(t)‖_{H^s} / ‖u₀‖_{H^s}` per high index.
    pub fn high_growth(&self) -> Vec<f64> {
        self.high_norms.iter().map(|h| h.iter().cloned().fold(0.0, f64::max) / h[0]).collect()
    }

    /// `max |H(t) − H(0)| / |H(0)|`.
    pub fn hamiltonian_drift(&self) -> f64 {
        let h0 = self.hamiltonian[0];
        self.hamiltonian.iter().map(|h| (h - h0).abs()).fold(0.0, f64::max) / h0.abs()
    }

    /// Columns `t, low_norm, high_norm_<s>…, H`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), EvolutionError> {
        let mut wr = csv::Writer::from_writer(w);
        let mut header = vec!["t".to_string(), "low_norm".to_string()];
        header.extend(self.s_high.iter().map(|s| format!("high_norm_{s}")));
        header.push("H".into());
        wr.write_record(&header)?;
        for j in 0..self.times.len() {
            let mut rec = vec![format!("{:e}", self.times[j]), format!("{:e}", self.low_norms[j])];
            rec.extend(self.high_norms.iter().map(|h| format!("{:e}", h[j])));
            rec.push(format!("{:e}", self.hamiltonian[j]));
            wr.write_record(&rec)?;
        }
        wr.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

/// One Strang step `e^{−iΛdt/2} ∘ RK4(−iQ, dt) ∘ e^{−iΛdt/2}`, with cached phases.
pub struct Integrator {
    nl: Nonlinearity,
    dt: f64,
    half_phase: Vec<Complex64>,
}

impl Integrator {
    pub fn new(f: &CubicDensity, grid: &GridSpec, dt: f64) -> Result<Self, EvolutionError> {
        let nl = Nonlinearity::new(f, grid)?;
        let half_phase = grid.points().map(|p| Complex64::from_polar(1.0, -0.5 * dt * grid.lambda(&p))).collect();
        Ok(Integrator { nl, dt, half_phase })
    }

    pub fn nonlinearity(&self) -> &Nonlinearity {
        &self.nl
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    fn phase(&self, u: &Field) -> Field {
        let mut out = u.clone();
        for (c, p) in out.coeffs_mut().iter_mut().zip(&self.half_phase) {
            *c *= p;
        }
        out
    }

    fn rhs(&self, u: &Field) -> Field {
        self.nl.q(u).scale(Complex64::new(0.0, -1.0))
    }

    /// Advances by `dt`; `t` only labels a blowup error.
    pub fn step(&self, u: &Field, t: f64) -> Result<Field, EvolutionError> {
        let dt = self.dt;
        let v = self.phase(u);
        let k1 = self.rhs(&v);
        let k2 = self.rhs(&v.axpy(Complex64::new(0.5 * dt, 0.0), &k1));
        let k3 = self.rhs(&v.axpy(Complex64::new(0.5 * dt, 0.0), &k2));
        let k4 = self.rhs(&v.axpy(Complex64::new(dt, 0.0), &k3));
        let mut w = v.clone();
        for (i, c) in w.coeffs_mut().iter_mut().enumerate() {
            *c += (k1.coeffs()[i] + 2.0 * k2.coeffs()[i] + 2.0 * k3.coeffs()[i] + k4.coeffs()[i]) * (dt / 6.0);
        }
        let out = self.phase(&w);
        if out.coeffs().iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(EvolutionError::Blowup { t: t + dt });
        }
        Ok(out)
    }
}

/// One Strang step without caching.
pub fn step(u: &Field, f: &CubicDensity, dt: f64) -> Result<Field, EvolutionError> {
    Integrator::new(f, u.grid(), dt)?.step(u, 0.0)
}

/// Integrates until `t_max` or the first crossing of `‖u‖_{H^ρ} > blowup_factor·ε`, `ε = ‖u₀‖_{H^ρ}`.
pub fn run(u0: &Field, f: &CubicDensity, cfg: &SimConfig) -> Result<Trajectory, EvolutionError> {
    cfg.validate()?;
    let integ = Integrator::new(f, u0.grid(), cfg.dt)?;
    let nl = integ.nonlinearity();
    let eps = u0.sobolev_norm(cfg.rho);
    let limit = cfg.blowup_factor * eps;
    let n_steps = (cfg.t_max / cfg.dt).round() as usize;
    let mut tr = Trajectory {
        eps,
        s_high: cfg.s_high.clone(),
        times: Vec::new(),
        low_norms: Vec::new(),
        high_norms: vec![Vec::new(); cfg.s_high.len()],
        hamiltonian: Vec::new(),
        exit: Exit::Completed,
    };
    let record = |tr: &mut Trajectory, t: f64, u: &Field, low: f64| -> Result<(), EvolutionError> {
        tr.times.push(t);
        tr.low_norms.push(low);
        for (h, &s) in tr.high_norms.iter_mut().zip(&cfg.s_high) {
            h.push(u.sobolev_norm(s));
        }
        tr.hamiltonian.push(nl.hamiltonian(u)?);
        Ok(())
    };
    let mut u = u0.clone();
    let mut low = eps;
    record(&mut tr, 0.0, &u, low)?;
    for n in 0..n_steps {
        let t = n as f64 * cfg.dt;
        let next = match integ.step(&u, t) {
            Ok(v) => v,
            Err(EvolutionError::Blowup { t }) => {
                tr.exit = Exit::Blowup { t };
                return Ok(tr);
            }
            Err(e) => return Err(e),
        };
        let t_next = (n + 1) as f64 * cfg.dt;
        let low_next = next.sobolev_norm(cfg.rho);
        if low_next > limit {
            let t_star = t + cfg.dt * (limit - low) / (low_next - low);
            record(&mut tr, t_next, &next, low_next)?;
            tr.exit = Exit::NormExceeded { t_star };
            return Ok(tr);
        }
        u = next;
        low = low_next;
        if (n + 1) % cfg.record_stride == 0 || n + 1 == n_steps {
            record(&mut tr, t_next, &u, low)?;
        }
    }
    Ok(tr)
}

/// Modes `|ξ| ≤ K/4` with seeded phases, shaped `⟨ξ⟩^{−ρ−1}`, scaled to `‖u₀‖_{H^ρ} = ε`.
pub fn initial_data<R: Rng>(grid: &GridSpec, rho: f64, eps: f64, rng: &mut R) -> Field {
    let band = grid.k() as f64 / 4.0;
    let coeffs = grid
        .points()
        .map(|p| {
            let theta: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            let z = to_f(&p);
            let r = z.iter().map(|v| v * v).sum::<f64>().sqrt();
            if r <= band {
                Complex64::from_polar(japanese(&z).powf(-rho - 1.0), theta)
            } else {
                Complex64::new(0.0, 0.0)
            }
        })
        .collect();
    let u = Field::from_coeffs(grid, coeffs).expect("box length");
    let nrm = u.sobolev_norm(rho);
    u.scale(Complex64::new(eps / nrm, 0.0))
}

#[derive(Clone, Debug, Serialize)]
pub struct StudyRow {
    pub eps: f64,
    pub seed: u64,
    pub t_max: f64,
    /// Exit time, or `t_max` when censored.
    pub t_star: f64,
    pub censored: bool,
    /// `max_t ‖u‖_{H^ρ} / ε`.
    pub low_ratio: f64,
    /// `max_t ‖u‖_{H^s} / ‖u₀‖_{H^s}` per high index.
    pub high_growth: Vec<f64>,
    pub hamiltonian_drift: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct LifespanRatio {
    pub eps: f64,
    pub seed: u64,
    /// `T*(ε) / T*(2ε)`; only formed when both runs are uncensored.
    pub ratio: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct LifespanStudy {
    pub window: f64,
    pub rows: Vec<StudyRow>,
    pub ratios: Vec<LifespanRatio>,
}

impl LifespanStudy {
    /// Columns `eps, seed, T_star, censored`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), EvolutionError> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["eps", "seed", "T_star", "censored"])?;
        for r in &self.rows {
            wr.write_record([format!("{:e}", r.eps), r.seed.to_string(), format!("{:e}", r.t_star), r.censored.to_string()])?;
        }
        wr.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    pub fn all_censored(&self) -> bool {
        self.rows.iter().all(|r| r.censored)
    }
}

/// Runs every `(ε, seed)` with `t_max = window·ε^{−2}` (overriding `cfg.t_max`), in parallel,
/// and forms `T*(ε)/T*(2ε)` from uncensored pairs.
pub fn lifespan_study(
    f: &CubicDensity,
    grid: &GridSpec,
    cfg: &SimConfig,
    eps_list: &[f64],
    seeds: &[u64],
    window: f64,
) -> Result<LifespanStudy, EvolutionError> {
    cfg.validate()?;
    if eps_list.windows(2).any(|w| !(w[1] < w[0])) || eps_list.iter().any(|&e| !(e > 0.0)) {
        return Err(EvolutionError::Config("eps_list must be positive and strictly decreasing".into()));
    }
    if !(window > 0.0) {
        return Err(EvolutionError::Config("window must be positive".into()));
    }
    let tasks: Vec<(f64, u64)> = eps_list.iter().flat_map(|&e| seeds.iter().map(move |&s| (e, s))).collect();
    let rows: Vec<StudyRow> = tasks
        .par_iter()
        .map(|&(eps, seed)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let u0 = initial_data(grid, cfg.rho, eps, &mut rng);
            let t_max = window / (eps * eps);
            let run_cfg = SimConfig { t_max, ..cfg.clone() };
            let tr = run(&u0, f, &run_cfg)?;
            let (t_star, censored) = match tr.exit {
                Exit::Completed => (t_max, true),
                Exit::NormExceeded { t_star } => (t_star, false),
                Exit::Blowup { t } => (t, false),
            };
            Ok(StudyRow {
                eps,
                seed,
                t_max,
                t_star,
                censored,
                low_ratio: tr.max_low() / eps,
                high_growth: tr.high_growth(),
                hamiltonian_drift: tr.hamiltonian_drift(),
            })
        })
        .collect::<Result<_, EvolutionError>>()?;
    let mut ratios = Vec::new();
    for r in &rows {
        if r.censored {
            continue;
        }
        let partner = rows.iter().find(|q| q.seed == r.seed && ((q.eps - 2.0 * r.eps).abs() <= 1e-12 * r.eps));
        if let Some(q) = partner.filter(|q| !q.censored) {
            ratios.push(LifespanRatio { eps: r.eps, seed: r.seed, ratio: r.t_star / q.t_star });
        }
    }
    Ok(LifespanStudy { window, rows, ratios })
}
