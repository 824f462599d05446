//! One PASS/FAIL line per acceptance criterion. Runs as a plain binary so the lines come out in
//! order; exits nonzero if any criterion fails.

use std::process::ExitCode;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use torus_nf::cli::{cmd_normal_form, cmd_scan_mass, composition_ladder, test_symbol, RunConfig};
use torus_nf::evolution::{initial_data, lifespan_study, run, step, SimConfig};
use torus_nf::nonlinearity::CubicDensity;
use torus_nf::normal_form::{decompose, homological_g, NFParams, NfSystem};
use torus_nf::paradiff::{
    composition_residual, conj_op, flow, flow_offdiag, flow_smoothing, is_hamiltonian, quantize_bw,
    symplectic_residual, unitarity_residual, LinOp, LinearFamily, PairLinOp, Symbol, Table,
};
use torus_nf::small_divisors::{birkhoff_matrix_solve, birkhoff_residual};
use torus_nf::torus_grid::{random_field, Field, GridSpec, PairField, Pt};
use torus_nf::Complex64;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

struct Outcome {
    pass: bool,
    detail: String,
}

type Criterion = (&'static str, fn() -> Outcome);

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn grids() -> Vec<GridSpec> {
    vec![GridSpec::flat(1, 8, 0.5).unwrap(), GridSpec::flat(1, 16, 0.5).unwrap(), GridSpec::flat(2, 8, 0.5).unwrap(), GridSpec::flat(2, 16, 0.5).unwrap()]
}

fn quantization() -> Outcome {
    let mut worst: f64 = 0.0;
    for g in grids() {
        let op = quantize_bw(&Symbol::lambda(&g));
        let m = op.matrix();
        for i in 0..g.len() {
            for j in 0..g.len() {
                let want = if i == j { g.lambda(&g.point(i)) } else { 0.0 };
                worst = worst.max((m[(i, j)] - c(want, 0.0)).norm());
            }
        }
    }
    outcome(worst <= 1e-13, format!("max entrywise |Op(Λ) − diag Λ| = {worst:.2e} (≤ 1e-13)"))
}

fn selfadjointness() -> Outcome {
    let g1 = GridSpec::flat(1, 16, 0.5).unwrap();
    let g2 = GridSpec::flat(2, 6, 0.5).unwrap();
    let worst = (0..20u64)
        .map(|s| {
            let g = if s % 2 == 0 { &g1 } else { &g2 };
            let op = quantize_bw(&test_symbol(g, 100 + s, 1.0));
            op.sub(&op.adjoint()).max_abs()
        })
        .fold(0.0, f64::max);
    outcome(worst <= 1e-12, format!("20 real symbols: max ‖Op(a) − Op(a)*‖ = {worst:.2e} (≤ 1e-12)"))
}

fn composition() -> Outcome {
    let mut pass = true;
    let mut lines = Vec::new();
    for (d, k) in [(1, 8), (1, 16), (2, 8)] {
        let g = GridSpec::flat(d, k, 0.5).unwrap();
        for (name, r) in ["(Λ,b)", "(b,Λ)"].iter().zip(composition_ladder(&g, 1.0)) {
            pass &= r.iter().all(|v| v.is_finite()) && r[1] <= r[0] && r[2] <= r[1];
            lines.push(format!("d={d} K={k} {name} {:.2e} {:.2e} {:.2e}", r[0], r[1], r[2]));
        }
        let a = Symbol::multiplier(&g, 2.0, |z| c(g.lambda_at(z), 0.0));
        let b = Symbol::multiplier(&g, 1.0, |z| c((1.0 + z[0] * z[0]).sqrt(), z[d - 1]));
        let m = [1, 2, 3].map(|rho| composition_residual(&a, &b, rho, 1.0)).into_iter().fold(0.0, f64::max);
        pass &= m <= 1e-13;
        lines.push(format!("d={d} K={k} multipliers {m:.1e}"));
    }
    outcome(pass, format!("residual ρ=1,2,3 non-increasing, multipliers ≤ 1e-13: {}", lines.join("; ")))
}

fn hamiltonian_generator(g: &GridSpec, seed: u64, scale: f64) -> PairLinOp {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = g.len();
    let mut draw = || DMatrix::from_fn(n, n, |_, _| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
    let b = draw();
    let s = draw();
    let h11 = (&b + b.adjoint()) * c(scale, 0.0);
    let h12 = (&s + conj_op(&s.adjoint())) * c(scale, 0.0);
    PairLinOp::new(LinOp::from_matrix(g, h11), LinOp::from_matrix(g, h12)).left_phase(c(0.0, 1.0))
}

fn flows() -> Outcome {
    let mut un: f64 = 0.0;
    let mut sy: f64 = 0.0;
    let mut ham: f64 = 0.0;
    for g in [GridSpec::flat(1, 16, 0.5).unwrap(), GridSpec::flat(2, 4, 0.5).unwrap()] {
        for s in 0..3 {
            for order in [0.0, 1.0] {
                let a = test_symbol(&g, 200 + s, order).scale(c(if order == 0.0 { 0.5 } else { 0.05 }, 0.0));
                un = un.max(unitarity_residual(&flow(&a, 8).unwrap()));
            }
            let psi = test_symbol(&g, 300 + s, 0.0).scale(c(0.2, 0.0));
            let psi = psi.add(&psi.reflect_xi()).scale(c(0.5, 0.0));
            sy = sy.max(symplectic_residual(&flow_offdiag(&psi, 4)));
            let gen = hamiltonian_generator(&g, 400 + s, 0.002);
            ham = ham.max(is_hamiltonian(&gen));
            sy = sy.max(symplectic_residual(&flow_smoothing(&gen, 2)));
        }
    }
    outcome(
        un <= 1e-10 && sy <= 1e-10 && ham <= 1e-13,
        format!("unitarity {un:.2e}, symplecticity of Φ_ψ and Φ_F {sy:.2e} (≤ 1e-10), generator defect {ham:.1e}"),
    )
}

fn homology() -> Outcome {
    let mut dec: f64 = 0.0;
    let mut constant: f64 = 0.0;
    let mut smooth: f64 = 0.0;
    for g in [GridSpec::flat(1, 16, 0.5).unwrap(), GridSpec::flat(2, 6, 0.5).unwrap()] {
        let p = NFParams::default_for(g.d());
        for s in 0..5 {
            let a = test_symbol(&g, 500 + s, 1.0);
            dec = dec.max(decompose(&a, &p).sum().sub(&a).max_abs());
            smooth = smooth.max(homological_g(&a, &p).1);
            let mut rng = ChaCha8Rng::seed_from_u64(600 + s);
            let vals: Vec<Complex64> = (0..g.len()).map(|_| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
            let rows = Symbol::from_fn(&g, 0.0, |k: &Pt, _| {
                let norm1: i64 = k.iter().map(|v| v.abs()).sum();
                if (1..=2).contains(&norm1) {
                    vals[g.index(k).unwrap()]
                } else {
                    c(0.0, 0.0)
                }
            });
            constant = constant.max(homological_g(&rows, &p).1);
        }
    }
    outcome(
        dec <= 1e-14 && constant <= 1e-12 && smooth <= 1e-6,
        format!("decomposition {dec:.1e} (≤ 1e-14), homological ξ-constant rows {constant:.1e} (≤ 1e-12), smooth rows {smooth:.1e} (≤ 1e-6)"),
    )
}

/// `−F(T₀U) + [T₀, F(U)] + R(U)` on dense operators, relative to `R(U)`.
fn dense_birkhoff(r: &LinearFamily, f: &LinearFamily, u: &PairField) -> f64 {
    let g = *r.grid();
    let t0 = PairLinOp::new(LinOp::diagonal(&g, |i| c(0.0, g.lambda(&g.point(i)))), LinOp::zeros(&g));
    let lhs = f.eval(&t0.apply(u)).scale(-1.0).add(&t0.commutator(&f.eval(u))).add(&r.eval(u));
    lhs.norm(0.0, 0.0) / r.eval(u).norm(0.0, 0.0)
}

fn birkhoff() -> Outcome {
    let g = GridSpec::flat(1, 8, 0.5).unwrap();
    let n = g.len();
    let mut fams = Vec::new();
    for s in 0..5u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(700 + s);
        let mut fam = LinearFamily::zeros(&g);
        for t in Table::ALL {
            *fam.table_mut(t) = DMatrix::from_fn(n, n, |_, _| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
        }
        fams.push(fam.map(|_, _, _, v| v));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(710);
    let u = PairField::from_u(initial_data(&g, 1.0, 0.05, &mut rng));
    let sys = NfSystem::new(&CubicDensity::canonical(1), &u, NFParams::default_for(1), 1.0).unwrap();
    fams.push(sys.rem.clone());
    let mut table: f64 = 0.0;
    let mut dense: f64 = 0.0;
    for (i, r) in fams.iter().enumerate() {
        let f = match birkhoff_matrix_solve(r) {
            Ok(f) => f,
            Err(e) => return outcome(false, format!("solver rejected family {i}: {e}")),
        };
        table = table.max(birkhoff_residual(r, &f));
        let w = PairField::from_u(random_field(&g, &mut rng, 8, 1.0));
        dense = dense.max(dense_birkhoff(r, &f, &w));
    }
    outcome(
        table <= 1e-12 && dense <= 1e-12,
        format!("6 remainders (5 random, 1 from the cubic system): table residual {table:.1e}, dense residual {dense:.1e} (≤ 1e-12)"),
    )
}

fn small_divisors() -> Outcome {
    let g = GridSpec::flat(1, 8, 0.5).unwrap();
    let lam = |x: i64| (x * x) as f64 + 0.5;
    let mut min_mm = f64::INFINITY;
    let mut min_pp = (f64::INFINITY, 0, 0);
    for xi in -32i64..=32 {
        for k in -32i64..=32 {
            min_mm = min_mm.min((lam(xi + k) - lam(xi) - lam(k)).abs());
            let pp = lam(xi + k) + lam(xi) + lam(k);
            if pp < min_pp.0 {
                min_pp = (pp, xi, k);
            }
        }
    }
    let lib = torus_nf::small_divisors::certify_lower_bound(&g, 0.1, 1.0, 32);
    let fam = |s: f64, sp: f64| lib.per_family.iter().find(|f| f.sigma == s && f.sigma_p == sp).map(|f| f.min_abs).unwrap_or(f64::NAN);
    let pass = min_mm == 0.5 && min_pp == (1.5, 0, 0) && fam(-1.0, -1.0) == 0.5 && fam(1.0, 1.0) == 1.5;
    outcome(
        pass,
        format!(
            "brute force: min |Λ(ξ+k)−Λ(ξ)−Λ(k)| = {min_mm}, φ⁺⁺ min = {} at ({}, {}); library: {} and {}",
            min_pp.0,
            min_pp.1,
            min_pp.2,
            fam(-1.0, -1.0),
            fam(1.0, 1.0)
        ),
    )
}

fn temp_dir(name: &str) -> std::path::PathBuf {
    std::env::temp_dir().join(format!("torus-nf-acceptance-{name}-{}", std::process::id()))
}

fn measure_scan() -> Outcome {
    let dir = temp_dir("scan");
    let text = format!(
        "grid.d = 2\ngrid.K = 4\nseed = 7\nscan.metric_perturbation = 0.3\nscan.gamma = 1e-2\nscan.radius = 4\noutput_dir = {}",
        dir.display()
    );
    let cfg = RunConfig::from_text(&text).unwrap();
    let (_, summary) = cmd_scan_mass(&cfg).unwrap();
    let scan = torus_nf::small_divisors::excluded_measure_scan(&cfg.scan, &summary.omega);
    let _ = std::fs::remove_dir_all(&dir);
    let f2 = scan.fraction_at(1e-2);
    let f3 = scan.fraction_at(1e-3);
    outcome(
        f2 <= 0.1 && f3 <= 1e-2 && summary.mass_count == 10_000 && summary.ell_cutoff == 20,
        format!("ω = {:?}: excluded fraction {f2:.3e} at γ=1e-2, {f3:.3e} at γ=1e-3 (≤ 10γ)", summary.omega),
    )
}

fn evolve(u: &Field, f: &CubicDensity, dt: f64, t: f64) -> Field {
    (0..(t / dt).round() as usize).fold(u.clone(), |v, _| step(&v, f, dt).unwrap())
}

fn integrator() -> Outcome {
    let g = GridSpec::flat(1, 32, 0.5).unwrap();
    let f = CubicDensity::canonical(1);
    let u0 = initial_data(&g, 4.0, 0.05, &mut ChaCha8Rng::seed_from_u64(11));
    let (a, b, cc) = (evolve(&u0, &f, 4e-3, 1.0), evolve(&u0, &f, 2e-3, 1.0), evolve(&u0, &f, 1e-3, 1.0));
    let conv = a.sub(&b).l2() / b.sub(&cc).l2();
    let drift = |dt: f64| run(&u0, &f, &SimConfig::new(dt, 1.0, 4.0, vec![8.0]).unwrap()).unwrap().hamiltonian_drift();
    let ratio = drift(0.02) / drift(0.01);
    let fine = drift(1e-3);
    let band = |r: f64| (r - 4.0).abs() <= 0.8;
    outcome(
        band(conv) && band(ratio) && fine <= 1e-6,
        format!("self-convergence ratio {conv:.3}, H drift ratio {ratio:.3} (4 ± 20%), H drift at dt=1e-3 {fine:.2e} (≤ 1e-6)"),
    )
}

fn lifespan() -> Outcome {
    let g = GridSpec::flat(1, 32, 0.5).unwrap();
    let cfg = SimConfig::new(0.01, 1.0, 4.0, vec![8.0]).unwrap();
    let study = lifespan_study(&CubicDensity::canonical(1), &g, &cfg, &[0.1, 0.05, 0.025], &[1, 2, 3], 0.1).unwrap();
    let low = study.rows.iter().map(|r| r.low_ratio).fold(0.0, f64::max);
    let high = study.rows.iter().flat_map(|r| r.high_growth.iter().copied()).fold(0.0, f64::max);
    let all_complete = study.rows.iter().all(|r| r.censored);
    let ratios_ok = study.ratios.iter().all(|q| q.ratio >= 3.0);
    outcome(
        low <= 2.0 && high <= 4.0 && ratios_ok && all_complete,
        format!(
            "{} runs: max ‖u‖_H⁴/ε = {low:.4} (≤ 2), max H⁸ growth {high:.4} (≤ 4), {} uncensored ratios{}",
            study.rows.len(),
            study.ratios.len(),
            if study.all_censored() { ", all censored" } else { "" }
        ),
    )
}

fn ledger() -> Outcome {
    let dir = temp_dir("nf");
    let cfg = RunConfig::from_text(&format!("output_dir = {}", dir.display())).unwrap();
    let (code, out) = cmd_normal_form(&cfg).unwrap();
    let _ = std::fs::remove_dir_all(&dir);
    let Some(ledger) = out.ledger else {
        return outcome(false, format!("exit {code}: {}", out.error.unwrap_or_default()));
    };
    let series = ledger.series();
    let weak = |f: &dyn Fn(usize) -> f64| (1..series.len()).all(|i| f(i) <= f(i - 1) * (1.0 + 1e-9));
    let off = weak(&|i| series[i].offdiag);
    let nnf = weak(&|i| series[i].non_normal_form);
    let before = ledger.steps.last().map(|r| r.before.remainder).unwrap_or(f64::NAN);
    let after = series.last().unwrap().remainder;
    let drop = before / after;
    outcome(
        code == 0 && off && nnf && drop >= 10.0,
        format!(
            "{} steps: offdiag {:.2e} → {:.2e} monotone={off}, non-normal-form {:.2e} → {:.2e} monotone={nnf}, remainder drop {drop:.2e} (≥ 10)",
            ledger.steps.len(),
            series[0].offdiag,
            series.last().unwrap().offdiag,
            series[0].non_normal_form,
            series.last().unwrap().non_normal_form
        ),
    )
}

fn main() -> ExitCode {
    let criteria: [Criterion; 11] = [
        ("quantization exactness", quantization),
        ("self-adjointness", selfadjointness),
        ("composition remainder", composition),
        ("flow structure", flows),
        ("decomposition and homology", homology),
        ("Birkhoff identity", birkhoff),
        ("small divisors", small_divisors),
        ("measure scan", measure_scan),
        ("integrator", integrator),
        ("lifespan", lifespan),
        ("normal-form ledger", ledger),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let o = check();
        failed += usize::from(!o.pass);
        println!("criterion {:2} {}: {name}: {} [{:.1}s]", i + 1, if o.pass { "PASS" } else { "FAIL" }, o.detail, t.elapsed().as_secs_f64());
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
