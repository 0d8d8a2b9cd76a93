//! Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.
//!
//! Run alone with `cargo test --release -p sit-barrier --test acceptance`.

use std::time::{Duration, Instant};

use sit_barrier::experiment::{agreement_band, figure_presets, run_experiment, simulation_critical, verdict_preset, wave_preset, InitialSpec, ReleaseSpec, SweepMethod, SweepSpec, SIMULATION_HORIZON_ALLOWANCE, SWEEP_HORIZON};
use sit_barrier::kinetics::{mosquito_free_jacobian, positive_equilibria, reaction, JacobianVariant};
use sit_barrier::pdesim::{run, Field, Grid, ReleaseProfile};
use sit_barrier::waves::{critical_length, critical_release, default_release_bracket, invasion_direction, m_infinity, measure_wave_speed, steady_ms_profile, wave_speed_sign, BarrierOptions, SpeedSign, TOL_LENGTH, TOL_RELEASE};
use sit_barrier::{ModelParameters, ModelVariant, DEFAULT_K};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

type Criterion = (&'static str, Duration, fn() -> Outcome);

fn main() {
    let criteria: Vec<Criterion> = vec![
        ("1 equilibrium structure", Duration::from_secs(1), equilibrium_structure),
        ("2 release threshold", Duration::from_secs(1), release_threshold),
        ("3 mosquito-free stability", Duration::from_secs(1), stability),
        ("4 diffusion solver order", Duration::from_secs(30), solver_order),
        ("5 figure verdict patterns", Duration::from_secs(6 * 120), figure_patterns),
        ("6 no blocking as beta -> inf", Duration::from_secs(240), beta_infinite_never_blocks),
        ("7 reduced wave outruns full wave", Duration::from_secs(120), speed_ordering),
        ("8 speed sign", Duration::from_secs(240), speed_sign),
        ("9 critical release structure", Duration::from_secs(20 * 60), critical_structure),
        ("10 steady sterile profile", Duration::from_secs(60), steady_profile),
    ];
    let mut failed = 0;
    for (name, budget, check) in criteria {
        let t = Instant::now();
        let o = check();
        let took = t.elapsed();
        let in_time = took <= budget;
        let pass = o.pass && in_time;
        if !pass {
            failed += 1;
        }
        println!(
            "{} criterion {name}: {} [{:.1} s, budget {} s{}]",
            if pass { "PASS" } else { "FAIL" },
            o.detail,
            took.as_secs_f64(),
            budget.as_secs(),
            if in_time { "" } else { ", over budget" }
        );
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
    println!("all acceptance criteria passed");
}

fn k1000() -> ModelParameters<f64> {
    ModelParameters::reference(1000.0)
}

fn equilibrium_structure() -> Outcome {
    let p = k1000();
    let roots = positive_equilibria(0.0, &p).roots;
    let cap = p.k * p.r * p.nu_e / p.mu_f;
    let tol = 1e-8 * p.mu_f * p.k;
    let fs: Vec<f64> = roots.iter().map(|r| r.f).collect();
    let residual = fs.iter().map(|f| reaction(*f, 0.0, &p).abs()).fold(0.0, f64::max);
    let pass = fs.len() == 2 && 0.0 < fs[0] && fs[0] < fs[1] && fs[1] < cap && residual < tol;
    outcome(pass, format!("roots {fs:?} below {cap}, max |g| {residual:.2e} (tol {tol:.1e})"))
}

fn release_threshold() -> Outcome {
    let p = k1000();
    let u_tilde = p.derive().u_tilde.expect("viable");
    let cap = p.k * p.r * p.nu_e / p.mu_f;
    let n = 10_000;
    let grid: Vec<f64> = (1..=n).map(|i| cap * i as f64 / n as f64).collect();
    let ms = 1.01 * u_tilde / p.mu_s;
    let worst = grid.iter().map(|f| reaction(*f, ms, &p)).fold(f64::NEG_INFINITY, f64::max);
    let signs: Vec<bool> = grid.iter().map(|f| reaction(*f, 0.0, &p) > 0.0).collect();
    let changes = signs.windows(2).filter(|w| w[0] != w[1]).count();
    outcome(worst < 0.0 && changes == 2, format!("max g at 1.01 U_tilde = {worst:.3e} (< 0), sign changes at U = 0: {changes} (= 2)"))
}

fn stability() -> Outcome {
    let p = k1000();
    let want = [-(p.nu_e + p.mu_e), -p.mu_m, -p.mu_f, -p.mu_s];
    let tol = 1e-12;
    let mut worst: f64 = 0.0;
    for u in [0.0, 5_000.0, 30_000.0] {
        let mut got: Vec<f64> = mosquito_free_jacobian(JacobianVariant::Full, u, &p).iter().map(|z| {
            worst = worst.max(z.im.abs());
            z.re
        }).collect();
        got.sort_by(f64::total_cmp);
        let mut w = want.to_vec();
        w.sort_by(f64::total_cmp);
        for (a, b) in got.iter().zip(&w) {
            worst = worst.max((a - b).abs() / b.abs());
        }
    }
    let binf = mosquito_free_jacobian(JacobianVariant::FullBetaInf, 0.0, &p.with_beta_infinite(true));
    let unstable = binf.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
    outcome(worst <= tol && unstable > 0.0, format!("full eigenvalue error {worst:.1e} (tol {tol:.0e}); beta -> inf max Re = {unstable:.4} (> 0)"))
}

fn solver_order() -> Outcome {
    // Ms alone: linear diffusion with decay from a heat-kernel datum
    let p = k1000().with_diffusivity(0.05);
    let (t0, t_end) = (10.0, 5.0);
    let exact = |x: f64, t: f64| {
        let s = 4.0 * p.d_u * (t + t0);
        (-x * x / s).exp() / (std::f64::consts::PI * s).sqrt() * (-p.mu_s * t).exp()
    };
    let errs: Vec<f64> = [0.2, 0.1, 0.05, 0.025]
        .iter()
        .map(|&dx| {
            let g = Grid::with_spacing(-8.0, 8.0, dx).unwrap();
            let mut f = Field::zeros(g, ModelVariant::Reduced);
            for i in 0..g.n {
                f.values[1][i] = exact(g.x(i), 0.0);
            }
            let rec = run(f, &ReleaseProfile::none(), t_end, 0.5 * dx * dx, &p, usize::MAX).unwrap();
            let last = rec.final_field();
            (0..g.n).map(|i| (last.values[1][i] - exact(g.x(i), last.time)).abs()).fold(0.0, f64::max)
        })
        .collect();
    let orders: Vec<f64> = errs.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
    let pass = orders.iter().all(|o| (1.8..=2.2).contains(o));
    outcome(pass, format!("observed orders {:?} (each in [1.8, 2.2])", orders.iter().map(|o| (o * 1000.0).round() / 1000.0).collect::<Vec<_>>()))
}

fn verdicts(id: &str) -> Result<Vec<(f64, bool, f64)>, String> {
    figure_presets(id)
        .map_err(|e| e.to_string())?
        .iter()
        .map(|c| {
            let t = Instant::now();
            let o = run_experiment(c).map_err(|e| e.to_string())?;
            let u = match c.release {
                ReleaseSpec::Band { u_bar, .. } => u_bar,
                _ => f64::NAN,
            };
            Ok((u, o.verdict.expect("verdict preset").blocked, t.elapsed().as_secs_f64()))
        })
        .collect()
}

fn figure_patterns() -> Outcome {
    let run_cap = 120.0;
    let (Ok(red), Ok(full), Ok(fert)) = (verdicts("2"), verdicts("1"), verdicts("4")) else {
        return outcome(false, "a preset run failed");
    };
    let find = |v: &[(f64, bool, f64)], u: f64| v.iter().find(|r| r.0 == u).map(|r| r.1);
    let reduced_ok = find(&red, 10_000.0) == Some(false) && find(&red, 20_000.0) == Some(true);
    let full_ok = full.last().map(|r| r.1) == Some(true);
    // fertilized: blocking only once the release is intense enough, and it stays blocked
    let fert_flags: Vec<bool> = fert.iter().map(|r| r.1).collect();
    let fert_ok = !fert_flags[0] && *fert_flags.last().unwrap() && fert_flags.windows(2).all(|w| !w[0] || w[1]);
    let slowest = red.iter().chain(&full).chain(&fert).map(|r| r.2).fold(0.0, f64::max);
    let fmt = |v: &[(f64, bool, f64)]| v.iter().map(|r| format!("{}:{}", r.0, if r.1 { "blocked" } else { "breaks" })).collect::<Vec<_>>().join(" ");
    outcome(
        reduced_ok && full_ok && fert_ok && slowest <= run_cap,
        format!("reduced [{}], full [{}], fertilized [{}], slowest run {slowest:.1} s (cap {run_cap} s)", fmt(&red), fmt(&full), fmt(&fert)),
    )
}

fn beta_infinite_never_blocks() -> Outcome {
    let mut blocked = Vec::new();
    let mut runs = 0;
    for variant in [ModelVariant::Full, ModelVariant::Reduced, ModelVariant::Fertilized] {
        for u in [10_000.0, 20_000.0, 30_000.0, 40_000.0] {
            let c = verdict_preset("binf", variant, true, 10.0, u);
            match run_experiment(&c) {
                Ok(o) if !o.verdict.as_ref().unwrap().blocked => {}
                Ok(_) => blocked.push(format!("{}@{u}", variant.name())),
                Err(e) => blocked.push(format!("{}@{u}: {e}", variant.name())),
            }
            runs += 1;
        }
    }
    outcome(blocked.is_empty(), format!("{runs} runs with L = 10, U in 1e4..4e4; blocked or failed: {blocked:?}"))
}

/// Speeds closer to zero than one cell per measurement window are not resolved.
fn speed_resolution(dx: f64, t_end: f64) -> f64 {
    dx / (t_end / 2.0)
}

fn free_speed(variant: ModelVariant) -> Result<f64, String> {
    let c = wave_preset("speed", variant);
    let o = run_experiment(&c).map_err(|e| e.to_string())?;
    measure_wave_speed(&o.record, c.invaded_density().unwrap() / 2.0).map_err(|e| e.to_string())
}

fn speed_ordering() -> Outcome {
    let c = wave_preset("speed", ModelVariant::Reduced);
    let res = speed_resolution(c.grid.dx, c.t_end);
    match (free_speed(ModelVariant::Reduced), free_speed(ModelVariant::Full)) {
        (Ok(r), Ok(f)) => outcome(r - f > res, format!("reduced {r:.5} km/day, full {f:.5} km/day, margin {:.5} (> resolution {res:.5})", r - f)),
        (a, b) => outcome(false, format!("measurement failed: {a:?} {b:?}")),
    }
}

fn speed_sign() -> Outcome {
    let p = ModelParameters::reference(DEFAULT_K);
    let Ok(m_inf) = m_infinity(&p) else { return outcome(false, "M_infinity unavailable") };
    let mut ok = true;
    let mut parts = Vec::new();
    for frac in [0.0, 0.5, 1.5] {
        let ms = frac * m_inf;
        let mut c = wave_preset("sign", ModelVariant::Reduced);
        c.release = ReleaseSpec::Everywhere { u_bar: p.mu_s * ms };
        c.initial = InitialSpec::Front { x0: 0.0, f_plus: None, ms };
        c.t_end = 200.0;
        let res = speed_resolution(c.grid.dx, c.t_end);
        let measured = run_experiment(&c).map_err(|e| e.to_string()).and_then(|o| measure_wave_speed(&o.record, c.invaded_density().unwrap() / 2.0).map_err(|e| e.to_string()));
        // beyond M_infinity there is no bistable pair and the classifier reports retreat
        let predicted = wave_speed_sign(ms, &p).unwrap_or_else(|_| invasion_direction(ms, &p));
        match measured {
            Ok(v) => {
                let sign = if v > res {
                    SpeedSign::Positive
                } else if v < -res {
                    SpeedSign::Negative
                } else {
                    SpeedSign::Zero
                };
                ok &= sign == predicted;
                parts.push(format!("Ms = {frac} M_inf: measured {v:.4} ({sign:?}), predicted {predicted:?}"));
            }
            Err(e) => {
                ok = false;
                parts.push(format!("Ms = {frac} M_inf: {e}"));
            }
        }
    }
    outcome(ok, parts.join("; "))
}

fn critical_structure() -> Outcome {
    let p = ModelParameters::reference(DEFAULT_K);
    let opts = BarrierOptions::default();
    let (Ok(m_inf), Ok(bracket)) = (m_infinity(&p), default_release_bracket(&p)) else {
        return outcome(false, "M_infinity unavailable");
    };
    let floor = p.mu_s * m_inf;
    let lengths = [4.0, 6.0, 8.0, 10.0, 15.0];
    let mut curve = Vec::new();
    for l in lengths {
        match critical_release(l, &p, bracket, TOL_RELEASE, &opts) {
            Ok(Some(c)) => curve.push((l, c)),
            other => return outcome(false, format!("geometric U*({l}) failed: {other:?}")),
        }
    }
    let stars: Vec<f64> = curve.iter().map(|(_, c)| c.estimate()).collect();
    let decreasing = stars.windows(2).all(|w| w[1] < w[0]);
    let bounded = stars.iter().all(|u| *u >= floor);

    let l_star = match critical_length(&p, bracket.1, TOL_LENGTH, &opts) {
        Ok(l) => l,
        Err(e) => return outcome(false, format!("critical length failed: {e}")),
    };
    let below = [0.9 * l_star, l_star - 10.0 * TOL_LENGTH];
    let fails_below = below.iter().all(|l| matches!(critical_release(*l, &p, bracket, TOL_RELEASE, &opts), Ok(None)));

    // simulation cross-check at three of the five lengths
    let spec = SweepSpec {
        parameters: p,
        lengths: vec![4.0, 8.0, 15.0],
        method: SweepMethod::Simulation,
        releases: None,
        bisection: None,
        variant: ModelVariant::Reduced,
        dx: 0.05,
        dt: 0.1,
        horizon: SWEEP_HORIZON,
        agreement_allowance: SIMULATION_HORIZON_ALLOWANCE,
    };
    let sim_bracket = (0.5 * floor, 4.0 * floor);
    let mut agree = true;
    let mut cross = Vec::new();
    for &l in &spec.lengths {
        let geo = curve.iter().find(|(cl, _)| *cl == l).unwrap().1;
        match simulation_critical(&spec, l, sim_bracket, sit_barrier::experiment::SIMULATION_REL_TOL) {
            Ok(Some(sim)) => {
                let band = agreement_band(&geo, &sim, spec.agreement_allowance);
                let gap = (geo.estimate() - sim.estimate()).abs();
                agree &= gap <= band;
                cross.push(format!("L={l}: sim {:.1} vs geo {:.1}, gap {gap:.1} <= band {band:.1}?", sim.estimate(), geo.estimate()));
            }
            other => {
                agree = false;
                cross.push(format!("L={l}: simulation failed {other:?}"));
            }
        }
    }
    let curve_txt = curve.iter().map(|(l, c)| format!("{l}:{:.2}", c.estimate())).collect::<Vec<_>>().join(" ");
    outcome(
        decreasing && bounded && fails_below && agree,
        format!(
            "U* [{curve_txt}] decreasing={decreasing}, >= mu_s M_inf = {floor:.2}: {bounded}; L* = {l_star:.4}, no barrier below: {fails_below}; {}",
            cross.join("; ")
        ),
    )
}

/// Finite-difference solve of `D m'' - mu_s m + U 1_[0,L] = 0` on a wide
/// interval with zero ends, refined once and Richardson-extrapolated.
fn ms_oracle(u: f64, l: f64, d: f64, mu: f64, xs: &[f64]) -> Vec<f64> {
    let solve = |h: f64| -> (f64, Vec<f64>) {
        let (a, b) = (-30.0, l + 30.0);
        let n = ((b - a) / h).round() as usize - 1;
        let x = |i: usize| a + h * (i + 1) as f64;
        let off = -d / (h * h);
        let diag = 2.0 * d / (h * h) + mu;
        let rhs: Vec<f64> = (0..n)
            .map(|i| {
                let xi = x(i);
                if xi > 1e-12 && xi < l - 1e-12 {
                    u
                } else if xi.abs() <= 1e-12 || (xi - l).abs() <= 1e-12 {
                    u / 2.0
                } else {
                    0.0
                }
            })
            .collect();
        // Thomas
        let mut c = vec![0.0; n];
        let mut dd = vec![0.0; n];
        c[0] = off / diag;
        dd[0] = rhs[0] / diag;
        for i in 1..n {
            let m = diag - off * c[i - 1];
            c[i] = off / m;
            dd[i] = (rhs[i] - off * dd[i - 1]) / m;
        }
        let mut sol = vec![0.0; n];
        sol[n - 1] = dd[n - 1];
        for i in (0..n - 1).rev() {
            sol[i] = dd[i] - c[i] * sol[i + 1];
        }
        (a, sol)
    };
    let h = 1e-3;
    let (a, coarse) = solve(h);
    let (_, fine) = solve(h / 2.0);
    xs.iter()
        .map(|&x| {
            let ic = ((x - a) / h).round() as usize - 1;
            let if_ = ((x - a) / (h / 2.0)).round() as usize - 1;
            (4.0 * fine[if_] - coarse[ic]) / 3.0
        })
        .collect()
}

fn steady_profile() -> Outcome {
    let p = ModelParameters::reference(DEFAULT_K);
    let (u, l) = (20_000.0, 5.0);
    let prof = steady_ms_profile(u, l, &p);
    let xs: Vec<f64> = (0..=90).map(|i| -2.0 + 0.1 * i as f64).collect();
    let oracle = ms_oracle(u, l, p.d_u, p.mu_s, &xs);
    let closed_err = xs.iter().zip(&oracle).map(|(x, o)| ((prof.eval(*x) - o) / o).abs()).fold(0.0, f64::max);

    let g = Grid::with_spacing(-20.0, l + 20.0, 0.02).unwrap();
    let release = ReleaseProfile::band(u, 0.0, l).unwrap();
    let t_end = 10.0 / p.mu_s;
    let pde = run(Field::zeros(g, ModelVariant::Reduced), &release, t_end, 0.05, &p, usize::MAX).map(|r| r.final_field().clone());
    let pde_err = match pde {
        Ok(f) => (0..g.n)
            .filter(|i| (-2.0..=l + 2.0).contains(&g.x(*i)))
            .map(|i| ((f.sterile()[i] - prof.eval(g.x(i))) / prof.eval(g.x(i))).abs())
            .fold(0.0, f64::max),
        Err(_) => f64::INFINITY,
    };
    outcome(
        closed_err < 1e-6 && pde_err < 0.01,
        format!("closed form vs boundary-value oracle: max rel {closed_err:.2e} (< 1e-6); PDE at t = 10/mu_s: max rel {pde_err:.2e} (< 1e-2) on [-2, L + 2]"),
    )
}
