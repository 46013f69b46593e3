//! Command-line driver: build the circle-coordinate potential data for a
//! built-in potential family, run the correction hierarchy for a sweep of
//! weight parameters, optionally validate against the extended-precision
//! orthogonality oracle, and emit JSON/CSV artifacts.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use planarop_core::expansion::{build_expansion, calcex_bounds, eta_function, ExpansionArtifacts};
use planarop_core::oracle::{compare, oracle_polynomial, ComparisonReport};
use planarop_core::potential::{build_droplet, Family};
use planarop_core::{CircleSeries, PotentialModel};
use serde_json::{json, Value};

#[derive(Parser)]
#[command(name = "planarop", about = "asymptotic expansions of planar orthogonal polynomials")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Build the model, run the m-sweep, write artifacts.
    Run(RunArgs),
    /// Run the built-in invariant suites and print a pass/fail table.
    Selftest,
}

#[derive(Parser, Debug, Default)]
struct RunArgs {
    /// Config file in key=value format (same keys as the flags); flags win.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Potential family: radial_gaussian | elliptic.
    #[arg(long)]
    potential: Option<String>,
    /// Elliptic deformation parameter.
    #[arg(long)]
    t: Option<f64>,
    /// Truncation degree (>= 16).
    #[arg(long = "N")]
    n: Option<usize>,
    /// Base annulus scale.
    #[arg(long)]
    sigma0: Option<f64>,
    /// Weight parameter; repeat for a sweep.
    #[arg(long = "m")]
    m: Vec<u32>,
    /// Expansion orders: "auto" or a fixed positive integer.
    #[arg(long)]
    orders: Option<String>,
    /// Run the extended-precision oracle comparison.
    #[arg(long)]
    oracle: bool,
    /// Oracle precision in bits.
    #[arg(long)]
    precision: Option<u32>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone)]
struct RunConfig {
    family: Family,
    family_name: String,
    t: f64,
    n: usize,
    sigma0: f64,
    m_list: Vec<u32>,
    orders: Option<usize>,
    oracle: bool,
    precision: u32,
    out: PathBuf,
}

fn parse_config_file(path: &Path) -> Result<std::collections::BTreeMap<String, String>> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("cannot read config file {}", path.display()))?;
    let mut map = std::collections::BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            bail!("config line {} is not key=value: {line:?}", i + 1);
        };
        map.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(map)
}

impl RunConfig {
    fn from_args(args: &RunArgs) -> Result<Self> {
        let file = match &args.config {
            Some(p) => parse_config_file(p)?,
            None => Default::default(),
        };
        let get = |key: &str| file.get(key).cloned();

        let family_name = args
            .potential
            .clone()
            .or_else(|| get("potential"))
            .unwrap_or_else(|| "radial_gaussian".to_string());
        let t = match args.t {
            Some(t) => t,
            None => match get("t") {
                Some(s) => s.parse().context("bad t in config file")?,
                None => 0.2,
            },
        };
        let family = match family_name.as_str() {
            "radial_gaussian" => Family::RadialGaussian,
            "elliptic" => {
                if t.abs() > 0.3 {
                    bail!("elliptic t = {t} is outside the validity bound |t| <= 0.3");
                }
                Family::Elliptic { t }
            }
            other => bail!("unknown potential family {other:?} (radial_gaussian | elliptic)"),
        };
        let n = match args.n {
            Some(n) => n,
            None => match get("N") {
                Some(s) => s.parse().context("bad N in config file")?,
                None => 64,
            },
        };
        let sigma0 = match args.sigma0 {
            Some(s) => s,
            None => match get("sigma0") {
                Some(s) => s.parse().context("bad sigma0 in config file")?,
                None => 0.2,
            },
        };
        let m_list: Vec<u32> = if !args.m.is_empty() {
            args.m.clone()
        } else {
            match get("m") {
                Some(s) => s
                    .split(',')
                    .map(|x| x.trim().parse().context("bad m in config file"))
                    .collect::<Result<_>>()?,
                None => vec![],
            }
        };
        let orders_raw = args.orders.clone().or_else(|| get("orders"));
        let orders = match orders_raw.as_deref() {
            None | Some("auto") => None,
            Some(s) => {
                let k: usize = s.parse().context("orders must be \"auto\" or an integer")?;
                if k == 0 {
                    bail!("orders must be positive");
                }
                Some(k)
            }
        };
        let oracle = args.oracle || get("oracle").as_deref() == Some("on");
        let precision = match args.precision {
            Some(p) => p,
            None => match get("precision") {
                Some(s) => s.parse().context("bad precision in config file")?,
                None => 256,
            },
        };
        let out = args
            .out
            .clone()
            .or_else(|| get("out").map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("out"));

        // invariants
        if n < 16 {
            bail!("N = {n} is below the minimum 16");
        }
        if !(sigma0 > 0.0 && sigma0 <= 0.5) {
            bail!("sigma0 = {sigma0} must lie in (0, 0.5]");
        }
        if m_list.is_empty() {
            bail!("m list is empty: pass --m at least once (or m=... in the config)");
        }
        if !m_list.windows(2).all(|w| w[0] < w[1]) {
            bail!("m list must be strictly increasing, got {m_list:?}");
        }
        Ok(RunConfig {
            family,
            family_name,
            t,
            n,
            sigma0,
            m_list,
            orders,
            oracle,
            precision,
            out,
        })
    }
}

// ---------------------------------------------------------------------------
// serialization

fn fmt_f64(x: f64) -> Value {
    // serde_json renders f64 with the shortest round-trip form: deterministic
    json!(x)
}

fn circle_json(cs: &CircleSeries) -> Value {
    let mut modes = Vec::new();
    for d in -cs.max_mode()..=cs.max_mode() {
        let c = cs.get(d);
        if c.norm() > 0.0 {
            modes.push(json!([d, c.re, c.im]));
        }
    }
    json!({ "sigma": cs.annulus().sigma, "modes": modes })
}

fn artifacts_json(art: &ExpansionArtifacts) -> Value {
    json!({
        "m": art.m,
        "kappa": art.kappa,
        "M1": fmt_f64(art.m1_estimate),
        "a1": fmt_f64(art.a1),
        "E_m_norm": fmt_f64(art.e_m_norm),
        "below_threshold": art.below_threshold,
        "residuals": {
            "identity": fmt_f64(art.residuals.identity),
            "identity_tol": fmt_f64(art.residuals.identity_tol),
            "defining_relation": fmt_f64(art.residuals.defining_relation),
            "step_one": fmt_f64(art.residuals.step_one),
        },
        "A": circle_json(&art.a_approx),
        "F": circle_json(&art.f_approx),
        "F_orders": art.f_orders.iter().map(circle_json).collect::<Vec<_>>(),
    })
}

fn write_report_csv(
    path: &Path,
    rows: &[(u32, usize, f64, f64, Option<&ComparisonReport>, u32)],
    a1: f64,
) -> Result<()> {
    let mut s = String::from(
        "m,n,kappa,a1,E_m_norm,sup_defect_Dm,norm_ratio,l2_defect,oracle_precision_bits\n",
    );
    for &(m, kappa, e_m_norm, norm_ratio, report, bits) in rows {
        match report {
            Some(r) => s.push_str(&format!(
                "{m},{},{kappa},{a1:.15e},{e_m_norm:.15e},{:.15e},{norm_ratio:.15e},{:.15e},{bits}\n",
                r.n, r.sup_defect_dm, r.l2_defect
            )),
            None => s.push_str(&format!(
                "{m},,{kappa},{a1:.15e},{e_m_norm:.15e},,{norm_ratio:.15e},,\n"
            )),
        }
    }
    fs::write(path, s)?;
    Ok(())
}

fn write_samples_csv(path: &Path, report: &ComparisonReport) -> Result<()> {
    let mut s = String::from("re(z),im(z),|P|,|P_approx|,rel_err\n");
    for row in &report.samples {
        s.push_str(&format!(
            "{:.15e},{:.15e},{:.15e},{:.15e},{:.15e}\n",
            row.z.re, row.z.im, row.p_abs, row.p_approx_abs, row.rel_err
        ));
    }
    fs::write(path, s)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// run

struct PerM {
    m: u32,
    artifacts: ExpansionArtifacts,
    norm_ratio: f64,
    report: Option<ComparisonReport>,
    precision_bits: u32,
}

fn run(config: RunConfig) -> Result<Vec<String>> {
    let geometry = build_droplet(&config.family).map_err(|e| anyhow::anyhow!("{e}"))?;
    let model = PotentialModel::build(geometry, config.n, config.sigma0)
        .map_err(|e| anyhow::anyhow!("model build failed: {e}"))?;
    fs::create_dir_all(&config.out)?;

    let model_json = json!({
        "potential": config.family_name,
        "t": if config.family_name == "elliptic" { json!(config.t) } else { Value::Null },
        "N": config.n,
        "sigma0": config.sigma0,
        "a1": fmt_f64(model.a1),
        "depth_cap_loss": fmt_f64(model.depth_cap_loss),
        "H_R": circle_json(&model.h_r),
        "laplacian_R_circle": circle_json(&model.laplacian_r_circle),
    });
    fs::write(
        config.out.join("model.json"),
        serde_json::to_string_pretty(&model_json)?,
    )?;

    // per-m runs in parallel; results are collected and written in sweep
    // order so the report stays deterministic
    let results: Vec<Result<PerM>> = std::thread::scope(|scope| {
        let handles: Vec<_> = config
            .m_list
            .iter()
            .map(|&m| {
                let model = &model;
                let config = &config;
                scope.spawn(move || -> Result<PerM> {
                    let artifacts = build_expansion(model, m, config.orders)
                        .map_err(|e| anyhow::anyhow!("expansion at m = {m} failed: {e}"))?;
                    let norm_ratio =
                        planarop_core::oracle::norm_ratio(model, &artifacts.f_approx, m);
                    let (report, precision_bits) = if config.oracle {
                        let (quad, _, oracle) = oracle_polynomial(
                            &model.geometry,
                            m,
                            m as usize,
                            config.precision,
                        )
                        .map_err(|e| anyhow::anyhow!("oracle at m = {m} failed: {e}"))?;
                        let bits = oracle.precision_bits;
                        let rep = compare(model, &artifacts.f_approx, &oracle, &quad, 0.5)
                            .map_err(|e| anyhow::anyhow!("comparison at m = {m} failed: {e}"))?;
                        (Some(rep), bits)
                    } else {
                        (None, 0)
                    };
                    Ok(PerM { m, artifacts, norm_ratio, report, precision_bits })
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });

    let mut failures = Vec::new();
    if let Err(e) = model.check_invariants() {
        failures.push(format!("potential invariants: {e}"));
    }

    let mut rows = Vec::new();
    let mut per_m = Vec::new();
    for r in results {
        per_m.push(r?);
    }
    for pm in &per_m {
        fs::write(
            config.out.join(format!("artifacts_m{}.json", pm.m)),
            serde_json::to_string_pretty(&artifacts_json(&pm.artifacts))?,
        )?;
        if let Some(rep) = &pm.report {
            write_samples_csv(&config.out.join(format!("samples_m{}.csv", pm.m)), rep)?;
        }
        let res = &pm.artifacts.residuals;
        if res.identity > res.identity_tol {
            failures.push(format!(
                "residual identity at m = {}: {:.3e} > tol {:.3e}",
                pm.m, res.identity, res.identity_tol
            ));
        }
        if res.defining_relation > 1e-10 {
            failures.push(format!(
                "Neumann defining relation at m = {}: {:.3e}",
                pm.m, res.defining_relation
            ));
        }
        rows.push((
            pm.m,
            pm.artifacts.kappa,
            pm.artifacts.e_m_norm,
            pm.norm_ratio,
            pm.report.as_ref(),
            pm.precision_bits,
        ));
    }
    write_report_csv(&config.out.join("report.csv"), &rows, model.a1)?;

    for pm in &per_m {
        println!(
            "m = {:5}: kappa = {}, E_m = {:.3e}, residual = {:.3e} (tol {:.3e}), norm ratio = {:.4}",
            pm.m,
            pm.artifacts.kappa,
            pm.artifacts.e_m_norm,
            pm.artifacts.residuals.identity,
            pm.artifacts.residuals.identity_tol,
            pm.norm_ratio,
        );
        if let Some(rep) = &pm.report {
            println!(
                "          oracle: sup defect = {:.3e}, l2 defect = {:.3e} ({} bits)",
                rep.sup_defect_dm, rep.l2_defect, pm.precision_bits
            );
        }
    }
    Ok(failures)
}

// ---------------------------------------------------------------------------
// selftest

fn selftest() -> Vec<(String, Result<()>)> {
    let mut results: Vec<(String, Result<()>)> = Vec::new();
    let mut check = |name: &str, r: Result<()>| results.push((name.to_string(), r));

    for (name, family) in [
        ("radial_gaussian", Family::RadialGaussian),
        ("elliptic t=0.2", Family::Elliptic { t: 0.2 }),
    ] {
        let outcome = (|| -> Result<()> {
            let g = build_droplet(&family).map_err(|e| anyhow::anyhow!("{e}"))?;
            let model =
                PotentialModel::build(g, 32, 0.2).map_err(|e| anyhow::anyhow!("{e}"))?;
            model
                .check_invariants()
                .map_err(|e| anyhow::anyhow!("{e}"))?;
            let art =
                build_expansion(&model, 64, None).map_err(|e| anyhow::anyhow!("{e}"))?;
            if art.residuals.identity > art.residuals.identity_tol {
                bail!(
                    "residual identity {:.3e} above tolerance {:.3e}",
                    art.residuals.identity,
                    art.residuals.identity_tol
                );
            }
            if art.residuals.defining_relation > 1e-10 {
                bail!("defining relation defect {:.3e}", art.residuals.defining_relation);
            }
            if (art.f_approx.get(0) - planarop_core::C64::new(1.0, 0.0)).norm() != 0.0 {
                bail!("F(infinity) != 1");
            }
            Ok(())
        })();
        check(&format!("model + expansion invariants [{name}]"), outcome);
    }

    // exterior-function bound family: eta(t) <= -2t on [0, t0] and
    // eta <= eta(t0) + 1/t0 on [t0, t0 + 1]
    let outcome = (|| -> Result<()> {
        for beta in [-4.0, -2.0, 0.0, 2.0] {
            let (t0, _, hi) = calcex_bounds(beta);
            for i in 0..1000 {
                let t = t0 * (i as f64 + 0.5) / 1000.0;
                if eta_function(t, beta) > -2.0 * t + 1e-12 {
                    bail!("eta bound fails on [0, t0] at beta = {beta}, t = {t}");
                }
                let t = t0 + (i as f64 + 0.5) / 1000.0;
                if eta_function(t, beta) > hi + 1e-12 {
                    bail!("eta bound fails on [t0, t0+1] at beta = {beta}, t = {t}");
                }
            }
        }
        Ok(())
    })();
    check("exponent-envelope inequalities", outcome);

    results
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.cmd {
        Cmd::Run(args) => {
            let config = match RunConfig::from_args(&args) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("error: {e:#}");
                    return ExitCode::from(2);
                }
            };
            match run(config) {
                Ok(failures) if failures.is_empty() => ExitCode::SUCCESS,
                Ok(failures) => {
                    for f in &failures {
                        eprintln!("FAILED: {f}");
                    }
                    ExitCode::FAILURE
                }
                Err(e) => {
                    eprintln!("error: {e:#}");
                    ExitCode::FAILURE
                }
            }
        }
        Cmd::Selftest => {
            let results = selftest();
            let mut ok = true;
            for (name, r) in &results {
                match r {
                    Ok(()) => println!("PASS  {name}"),
                    Err(e) => {
                        ok = false;
                        println!("FAIL  {name}: {e}");
                    }
                }
            }
            if ok {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
