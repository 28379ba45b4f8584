//! Command handlers. Each returns a JSON document and optional CSV tables.

use manifold_core::functionals::{
    eval_a_continuum, eval_a_discrete_panchenko, eval_a_discrete_talagrand, eval_b_continuum,
    eval_b_discrete, eval_p, gamma2_closed_form, w_of_b, y_b_closed_form, LevelChain, Route,
};
use manifold_core::kdual::{solve_k, DEFAULT_TOL};
use manifold_core::montecarlo::{
    euclidean_covariance, free_energy_quadrature, h_shift_identity_check, spherical_covariance,
    EuclideanField,
};
use manifold_core::optimize::{minimize_b, minimize_full, sup_over_q};
use manifold_core::profiles::{panchenko_to_continuum, talagrand_to_continuum};
use manifold_core::rng::stream;
use manifold_core::rpc::{a_m_trend, auto_method, cascade_spec, y_b_recursion};
use manifold_core::{verify, MixingFunction};
use serde_json::{json, Value};

use crate::config::{
    AmConfig, CovarianceConfig, DemoConfig, EuclideanConfig, FunctionalConfig, HShiftConfig,
    KdConfig, MinimizeConfig, ProfileConfig, ProfileInput, YbConfig,
};

/// A CSV table: file stem, header and rows.
pub struct Table {
    pub name: &'static str,
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

/// Result of a command.
pub struct Output {
    pub json: Value,
    pub tables: Vec<Table>,
    /// Nonzero exit code for a completed run that reports failure.
    pub exit: i32,
}

impl Output {
    fn json(json: Value) -> Self {
        Self {
            json,
            tables: vec![],
            exit: 0,
        }
    }

    fn with_table(mut self, t: Table) -> Self {
        self.tables.push(t);
        self
    }
}

fn num(v: f64) -> String {
    format!("{v:.17e}")
}

/// Route choice for evaluations with two independent implementations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum RouteArg {
    /// Closed form (`ℬ`, `𝒜`) or the defining integral (`𝒫`).
    Direct,
    /// Continuum quadrature (`ℬ`, `𝒜`) or the spherical mapping (`𝒫`).
    Mapped,
    /// Both, with their difference.
    Both,
}

pub fn kd_solve(cfg: KdConfig, tol: Option<f64>) -> anyhow::Result<Output> {
    let d = cfg.matrix()?;
    let p = solve_k(&d, &cfg.u, tol.unwrap_or(DEFAULT_TOL))?;
    Ok(Output::json(json!({
        "u": cfg.u,
        "k": p.k.as_slice(),
        "lambda": p.lambda(),
        "residual": p.residual,
        "iterations": p.iterations,
    })))
}

pub fn profile_convert(cfg: ProfileConfig) -> anyhow::Result<Output> {
    let (issues, c) = match &cfg.profile {
        ProfileInput::Talagrand(p) => (p.validate(), talagrand_to_continuum(p)?),
        ProfileInput::Panchenko(p) => (p.validate(), panchenko_to_continuum(p)?),
    };
    let c = match &cfg.q {
        Some(q) => c.scaled_to(q),
        None => c,
    };
    Ok(Output::json(json!({
        "continuum": c,
        "averaging_residual": c.averaging_residual(),
        "issues": issues,
    })))
}

fn both(
    direct: &manifold_core::EvaluationReport,
    mapped: &manifold_core::EvaluationReport,
) -> Value {
    json!({ "direct": direct, "mapped": mapped, "agreement": (direct.value - mapped.value).abs() })
}

pub fn functional_eval(cfg: FunctionalConfig, route: RouteArg) -> anyhow::Result<Output> {
    let json = match cfg {
        FunctionalConfig::B {
            model,
            profile,
            nodes,
        } => {
            let spec = model.build()?;
            let direct = || eval_b_discrete(&spec, &profile);
            let mapped = || {
                talagrand_to_continuum(&profile).and_then(|c| eval_b_continuum(&spec, &c, nodes))
            };
            match route {
                RouteArg::Direct => json!({ "direct": direct()? }),
                RouteArg::Mapped => json!({ "mapped": mapped()? }),
                RouteArg::Both => both(&direct()?, &mapped()?),
            }
        }
        FunctionalConfig::A {
            model,
            profile,
            b,
            nodes,
        } => {
            let spec = model.build()?;
            let chain = match &profile {
                ProfileInput::Talagrand(p) => LevelChain::from_talagrand(p),
                ProfileInput::Panchenko(p) => LevelChain::from_panchenko(p),
            };
            let b = match b {
                Some(b) => b,
                None => minimize_b(&spec, &chain, None)?.b,
            };
            let direct = || match &profile {
                ProfileInput::Talagrand(p) => eval_a_discrete_talagrand(&spec, p, &b),
                ProfileInput::Panchenko(p) => eval_a_discrete_panchenko(&spec, p, &b),
            };
            let mapped = || {
                let c = match &profile {
                    ProfileInput::Talagrand(p) => talagrand_to_continuum(p)?,
                    ProfileInput::Panchenko(p) => panchenko_to_continuum(p)?,
                };
                eval_a_continuum(&spec, &c, &b, nodes)
            };
            let mut out = match route {
                RouteArg::Direct => json!({ "direct": direct()? }),
                RouteArg::Mapped => json!({ "mapped": mapped()? }),
                RouteArg::Both => both(&direct()?, &mapped()?),
            };
            out["b"] = json!(b);
            out
        }
        FunctionalConfig::P {
            model,
            q,
            profile,
            nodes,
        } => {
            let run = |r| eval_p(&model, &q, &profile, r, nodes);
            match route {
                RouteArg::Direct => json!({ "direct": run(Route::Direct)? }),
                RouteArg::Mapped => json!({ "mapped": run(Route::Mapped)? }),
                RouteArg::Both => both(&run(Route::Direct)?, &run(Route::Mapped)?),
            }
        }
        FunctionalConfig::Cascade {
            model,
            profile,
            b,
            v,
        } => {
            let spec = model.build()?;
            let v = v.unwrap_or_else(|| spec.h.clone());
            json!({
                "y_b": y_b_closed_form(&spec, &profile, &b, &v)?,
                "w": w_of_b(&spec, &profile, &b)?,
                "gamma2": gamma2_closed_form(&spec, &profile)?,
            })
        }
    };
    Ok(Output::json(json))
}

pub fn minimize(cfg: MinimizeConfig, seed: u64) -> anyhow::Result<Output> {
    let spec = cfg.model.build()?;
    let sol = minimize_full(&spec, cfg.levels, cfg.form, cfg.multistart, seed)?;
    let rows = sol
        .start_values
        .iter()
        .enumerate()
        .map(|(i, v)| vec![i.to_string(), num(*v)])
        .collect();
    Ok(Output::json(json!(sol)).with_table(Table {
        name: "starts",
        header: vec!["start", "value"],
        rows,
    }))
}

pub fn euclidean_free_energy(cfg: EuclideanConfig, seed: u64) -> anyhow::Result<Output> {
    let sup = sup_over_q(
        &cfg.model,
        cfg.box_m,
        cfg.levels,
        cfg.grid,
        cfg.multistart,
        seed,
    )?;
    let rows = sup
        .table
        .iter()
        .map(|(q, v)| vec![num(*q), num(*v)])
        .collect();
    let json = json!({
        "q_star": sup.q,
        "value": sup.value,
        "certificate": sup.inner.certificate,
        "inner": sup.inner,
    });
    Ok(Output::json(json).with_table(Table {
        name: "q_surface",
        header: vec!["q", "value"],
        rows,
    }))
}

pub fn rpc_verify_yb(cfg: YbConfig, seed: u64) -> anyhow::Result<Output> {
    let spec = cfg.model.build()?;
    let b = match cfg.b {
        Some(b) => b,
        None => minimize_b(&spec, &LevelChain::from_panchenko(&cfg.profile), None)?.b,
    };
    let v = cfg.v.unwrap_or_else(|| spec.h.clone());
    let method = auto_method(
        &cascade_spec(&cfg.profile, 1, |x, q| spec.xi[x].d1(q)),
        cfg.max_nodes,
        seed,
    );
    let rec = y_b_recursion(&spec, &cfg.profile, &b, &v, method)?;
    let cf = y_b_closed_form(&spec, &cfg.profile, &b, &v)?;
    Ok(Output::json(json!({
        "b": b,
        "v": v,
        "closed_form": cf,
        "recursion": rec,
        "method": method,
        "relative_error": ((rec.value - cf) / cf).abs(),
    })))
}

pub fn rpc_a_m(cfg: AmConfig, seed: u64) -> anyhow::Result<Output> {
    let spec = cfg.model.build()?;
    let t = a_m_trend(&spec, &cfg.profile, cfg.max_nodes, seed)?;
    let rows = vec![
        vec!["1".into(), num(t.a1), num(t.a1_error)],
        vec!["2".into(), num(t.a2), num(t.a2_error)],
        vec!["inf".into(), num(t.a_limit), num(0.0)],
    ];
    Ok(Output::json(json!(t)).with_table(Table {
        name: "a_m",
        header: vec!["M", "a_m", "error"],
        rows,
    }))
}

pub fn mc_covariance(cfg: CovarianceConfig, seed: u64) -> anyhow::Result<Output> {
    let reports = match cfg {
        CovarianceConfig::Spherical {
            xi,
            n,
            overlap,
            samples,
        } => spherical_covariance(&MixingFunction::new(xi)?, n, overlap, samples, seed)?,
        CovarianceConfig::Euclidean {
            b,
            n,
            dist2,
            features,
            samples,
        } => euclidean_covariance(&b, n, dist2, features, samples, seed)?,
    };
    let rows = reports
        .iter()
        .map(|r| {
            vec![
                r.label.clone(),
                num(r.mean),
                num(r.standard_error),
                num(r.target),
                num(r.z),
            ]
        })
        .collect();
    Ok(Output::json(json!(reports)).with_table(Table {
        name: "covariance",
        header: vec!["label", "mean", "standard_error", "target", "z"],
        rows,
    }))
}

pub fn mc_h_shift(cfg: HShiftConfig, seed: u64) -> anyhow::Result<Output> {
    let fields = (0..cfg.lattice.n_sites() as u64)
        .map(|x| {
            EuclideanField::draw(
                &cfg.b,
                cfg.n,
                cfg.features,
                &mut stream(seed, "cli-h-shift", x),
            )
        })
        .collect::<Result<Vec<_>, _>>()?;
    let rep = h_shift_identity_check(&cfg.lattice, &fields, cfg.h, cfg.points, seed)?;
    let mut out = Output::json(json!(rep));
    if rep.max_error > rep.bound {
        out.exit = 3;
    }
    Ok(out)
}

pub fn mc_free_energy_demo(cfg: DemoConfig, seed: u64) -> anyhow::Result<Output> {
    let demo = free_energy_quadrature(&cfg.model, cfg.n, cfg.draws, cfg.nodes, cfg.features, seed)?;
    let rows = demo
        .per_draw
        .iter()
        .enumerate()
        .map(|(i, v)| vec![i.to_string(), num(*v)])
        .collect();
    Ok(Output::json(json!(demo)).with_table(Table {
        name: "draws",
        header: vec!["draw", "value"],
        rows,
    }))
}

pub fn verify_suites(suites: &[String], tol: Option<f64>) -> anyhow::Result<Output> {
    let mut ids = vec![];
    for s in suites {
        let found = verify::resolve_suite(s).ok_or_else(|| {
            crate::config::ConfigError(format!("unknown suite or criterion `{s}`"))
        })?;
        ids.extend(found);
    }
    let results = verify::run_with(&ids, tol);
    for r in &results {
        eprintln!("{r}");
    }
    let failed: Vec<&str> = results
        .iter()
        .filter(|r| !r.passed)
        .map(|r| r.id.as_str())
        .collect();
    let rows = results
        .iter()
        .map(|r| {
            vec![
                r.id.clone(),
                if r.passed { "PASS" } else { "FAIL" }.to_string(),
                num(r.metric),
                num(r.threshold),
                format!("{:.3}", r.seconds),
            ]
        })
        .collect();
    let exit = if failed.is_empty() { 0 } else { 3 };
    if exit != 0 {
        eprintln!("failed criteria: {}", failed.join(", "));
    }
    Ok(Output {
        json: json!({ "passed": failed.is_empty(), "failed": failed, "results": results }),
        tables: vec![Table {
            name: "verify",
            header: vec!["id", "status", "metric", "threshold", "seconds"],
            rows,
        }],
        exit,
    })
}
