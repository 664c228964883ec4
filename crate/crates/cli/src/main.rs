//! tension-lab: experiment driver for the tension service.
//!
//! Every subcommand builds a request (flags overlaid on an optional --config
//! JSON file), sends it to a service (an in-process one on a loopback port
//! unless --server is given), and writes CSV/JSON outputs. Identical configs
//! and seeds produce byte-identical output files.
//!
//! Exit codes: 0 success, 2 parameter validation, 3 computation infeasible.

mod output;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Map, Value};

use tension_api as api;
use tension_client::{ClientError, TensionClient};

#[derive(Parser)]
#[command(name = "tension-lab", version, about = "Random-surface tension laboratory")]
struct Cli {
    /// URL of a running service; a private in-process one is used otherwise.
    #[arg(long, global = true)]
    server: Option<String>,

    /// Output file; without it machine-readable JSON goes to stdout.
    #[arg(long, global = true)]
    out: Option<std::path::PathBuf>,

    /// JSON config file; explicit flags override its entries.
    #[arg(long, global = true)]
    config: Option<std::path::PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct CommonMath {
    /// Slope components, comma separated (e.g. "0.5,-0.25").
    #[arg(long)]
    s: Option<String>,

    /// Field spec: inline JSON, "zero", or @path-to-json.
    #[arg(long)]
    field: Option<String>,

    /// Box side length for S_n.
    #[arg(long)]
    n: Option<i64>,

    /// Lattice dimension.
    #[arg(long)]
    m: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the HTTP service until interrupted.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8591")]
        addr: String,
    },
    /// Exact extension count and log partition function on a box.
    Enumerate {
        #[command(flatten)]
        math: CommonMath,
        /// Explicit box corners "lo1,lo2;hi1,hi2" (overrides --m/--n).
        #[arg(long, name = "box")]
        bbox: Option<String>,
        /// Also write the exact distribution as CSV (config_id, H, prob).
        #[arg(long)]
        distribution: Option<std::path::PathBuf>,
        /// Configuration cap for the distribution.
        #[arg(long)]
        cap: Option<usize>,
    },
    /// Local surface tension (fixed, free, or annealed).
    Tension {
        #[command(flatten)]
        math: CommonMath,
        #[arg(long, default_value = "fixed")]
        kind: String,
        #[arg(long)]
        delta: Option<f64>,
        #[arg(long)]
        samples: Option<usize>,
    },
    /// ent_fixed along an n list for one realization, optionally with
    /// cross-realization spread.
    Sweep {
        #[command(flatten)]
        math: CommonMath,
        #[arg(long, value_delimiter = ',')]
        n_list: Option<Vec<i64>>,
        #[arg(long)]
        cross_samples: Option<usize>,
    },
    /// Fixed/free sandwich verification at one (s, n, delta).
    Sandwich {
        #[command(flatten)]
        math: CommonMath,
        #[arg(long)]
        delta: Option<f64>,
    },
    /// Superadditivity defect checks or the maximal-inequality probe.
    Superadd {
        #[command(flatten)]
        math: CommonMath,
        /// "defect" (random partitions) or "maximal".
        #[arg(long, default_value = "defect")]
        check: String,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        strict: bool,
        #[arg(long)]
        max_extent: Option<i64>,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        n_max: Option<i64>,
    },
    /// Greedy Wiener covering of a site family.
    Cover {
        #[arg(long)]
        m: Option<usize>,
        /// Run the built-in 1D demo instance.
        #[arg(long)]
        demo: bool,
        /// JSON file {sites: [[..]], sizes: [..]}.
        #[arg(long)]
        instance: Option<std::path::PathBuf>,
    },
    /// Time-constant estimates (1/|S_n|) E[F_{S_n}] along an n list.
    Gamma {
        #[command(flatten)]
        math: CommonMath,
        #[arg(long, value_delimiter = ',')]
        n_list: Option<Vec<i64>>,
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Heat-bath samples of the Gibbs measure.
    Sample {
        #[command(flatten)]
        math: CommonMath,
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        burn_in: Option<u64>,
        #[arg(long)]
        thin: Option<u64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        random_scan: bool,
        /// "csv" (sweep, coords..., height) or "bin" (fixed-width layout).
        #[arg(long, default_value = "csv")]
        format: String,
    },
    /// Fraction of samples inside the profile ball around the affine
    /// profile of slope s.
    Concentrate {
        #[command(flatten)]
        math: CommonMath,
        #[arg(long)]
        delta: Option<f64>,
        #[arg(long)]
        eps: Option<f64>,
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        burn_in: Option<u64>,
        #[arg(long)]
        thin: Option<u64>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Annealed surface tension on a slope grid, convexified.
    Tabulate {
        #[command(flatten)]
        math: CommonMath,
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        grid_points: Option<usize>,
        #[arg(long)]
        margin: Option<f64>,
    },
    /// Minimize the macroscopic entropy over admissible profiles.
    Solve {
        /// "unit-square", "unit-interval", or @path to a region JSON.
        #[arg(long)]
        region: Option<String>,
        /// Grid spacing for the built-in regions.
        #[arg(long)]
        eps: Option<f64>,
        /// "affine:s1,s2[:offset]" or @path to a boundary JSON.
        #[arg(long)]
        boundary: Option<String>,
        /// "quadratic[:m,points]" or @path to a table JSON.
        #[arg(long)]
        table: Option<String>,
        #[arg(long)]
        max_iters: Option<usize>,
        #[arg(long)]
        step_c: Option<f64>,
        /// Where the JSON report goes (defaults next to --out).
        #[arg(long)]
        report: Option<std::path::PathBuf>,
    },
    /// Check a command config against the preconditions without running it.
    Validate {
        #[arg(long)]
        command: String,
        #[command(flatten)]
        math: CommonMath,
        #[arg(long)]
        delta: Option<f64>,
        #[arg(long)]
        eps: Option<f64>,
        #[arg(long)]
        samples: Option<usize>,
    },
}

fn parse_slope(s: &str) -> anyhow::Result<Vec<f64>> {
    s.split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| anyhow::anyhow!("bad slope component: {e}")))
        .collect()
}

fn parse_field(text: &str) -> anyhow::Result<Value> {
    if text == "zero" {
        return Ok(json!({"kind": "iid_uniform", "c": 0.0, "seed": 0}));
    }
    let raw = if let Some(path) = text.strip_prefix('@') {
        std::fs::read_to_string(path)?
    } else {
        text.to_string()
    };
    Ok(serde_json::from_str(&raw)?)
}

/// Base config from --config, to be overlaid with explicit flags.
fn base_config(path: &Option<std::path::PathBuf>) -> anyhow::Result<Map<String, Value>> {
    match path {
        None => Ok(Map::new()),
        Some(p) => {
            let text = std::fs::read_to_string(p)?;
            match serde_json::from_str(&text)? {
                Value::Object(map) => Ok(map),
                _ => anyhow::bail!("--config must contain a JSON object"),
            }
        }
    }
}

fn overlay<T: serde::Serialize>(cfg: &mut Map<String, Value>, key: &str, v: &Option<T>) {
    if let Some(x) = v {
        cfg.insert(key.into(), serde_json::to_value(x).expect("serializable flag"));
    }
}

fn overlay_math(cfg: &mut Map<String, Value>, math: &CommonMath) -> anyhow::Result<()> {
    if let Some(s) = &math.s {
        cfg.insert("s".into(), serde_json::to_value(parse_slope(s)?)?);
    }
    if let Some(f) = &math.field {
        cfg.insert("field".into(), parse_field(f)?);
    }
    overlay(cfg, "n", &math.n);
    overlay(cfg, "m", &math.m);
    Ok(())
}

fn finish<T: serde::de::DeserializeOwned>(cfg: Map<String, Value>) -> anyhow::Result<(T, Value)> {
    let value = Value::Object(cfg);
    let req = serde_json::from_value(value.clone())
        .map_err(|e| anyhow::anyhow!("incomplete or invalid config: {e}"))?;
    Ok((req, value))
}

struct Ctx {
    client: TensionClient,
    out: Option<std::path::PathBuf>,
    /// Keeps the in-process service alive for the duration of the run.
    _local: Option<tokio::task::JoinHandle<()>>,
}

async fn connect(server: &Option<String>) -> anyhow::Result<(TensionClient, Option<tokio::task::JoinHandle<()>>)> {
    match server {
        Some(url) => Ok((TensionClient::new(url.clone()), None)),
        None => {
            let (addr, handle) = tension_service::spawn_ephemeral().await?;
            Ok((TensionClient::new(format!("http://{addr}")), Some(handle)))
        }
    }
}

fn exit_code(e: &ClientError) -> i32 {
    match e.kind() {
        Some(api::ApiErrorKind::Validation) => 2,
        Some(api::ApiErrorKind::Infeasible) => 3,
        _ => 1,
    }
}

#[tokio::main]
async fn main() {
    let cli = Cli::parse();
    std::process::exit(match run(cli).await {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            match e.downcast_ref::<ClientError>() {
                Some(ce) => exit_code(ce),
                // Config/flag problems are validation failures.
                None => 2,
            }
        }
    });
}

async fn run(cli: Cli) -> anyhow::Result<()> {
    if let Command::Serve { addr } = &cli.command {
        let addr: std::net::SocketAddr = addr.parse()?;
        println!("serving on http://{addr}");
        tension_service::serve(addr).await?;
        return Ok(());
    }
    let (client, local) = connect(&cli.server).await?;
    let ctx = Ctx { client, out: cli.out.clone(), _local: local };
    let mut cfg = base_config(&cli.config)?;

    match cli.command {
        Command::Serve { .. } => unreachable!(),
        Command::Enumerate { math, bbox, distribution, cap } => {
            overlay_math(&mut cfg, &math)?;
            if let Some(spec) = bbox {
                let (lo, hi) = spec
                    .split_once(';')
                    .ok_or_else(|| anyhow::anyhow!("--box expects \"lo1,lo2;hi1,hi2\""))?;
                let lo: Vec<i64> = lo.split(',').map(|v| v.trim().parse()).collect::<Result<_, _>>()?;
                let hi: Vec<i64> = hi.split(',').map(|v| v.trim().parse()).collect::<Result<_, _>>()?;
                cfg.remove("m");
                cfg.remove("n");
                cfg.insert("lo".into(), serde_json::to_value(lo)?);
                cfg.insert("hi".into(), serde_json::to_value(hi)?);
            }
            if distribution.is_some() {
                cfg.insert("distribution".into(), Value::Bool(true));
            }
            overlay(&mut cfg, "cap", &cap);
            let (req, resolved) = finish::<api::EnumerateRequest>(cfg)?;
            let resp = ctx.client.enumerate(&req).await?;
            if let Some(path) = &distribution {
                output::write_distribution_csv(path, resp.distribution.as_deref().unwrap_or(&[]))?;
            }
            let summary =
                serde_json::json!({ "count": resp.count, "log_z": resp.log_z });
            output::write_json(&ctx.out, &resolved, &summary)?;
            println!("enumerate: count={} logZ={:.6}", resp.count, resp.log_z);
        }
        Command::Tension { math, kind, delta, samples } => {
            overlay_math(&mut cfg, &math)?;
            cfg.entry("kind").or_insert(Value::String(kind));
            overlay(&mut cfg, "delta", &delta);
            overlay(&mut cfg, "samples", &samples);
            let (req, resolved) = finish::<api::TensionRequest>(cfg)?;
            let resp = ctx.client.tension(&req).await?;
            output::write_tension_csv(&ctx.out, &resolved, &resp.samples)?;
            let t = &resp.samples[0];
            println!("tension: s={:?} n={} value={:.6}", t.s, t.n, t.value);
        }
        Command::Sweep { math, n_list, cross_samples } => {
            overlay_math(&mut cfg, &math)?;
            overlay(&mut cfg, "n_list", &n_list);
            overlay(&mut cfg, "cross_samples", &cross_samples);
            let (req, resolved) = finish::<api::SweepRequest>(cfg)?;
            let resp = ctx.client.sweep(&req).await?;
            output::write_sweep_csv(&ctx.out, &resolved, &resp)?;
            println!(
                "sweep: {} points{}",
                resp.fixed.len(),
                resp.homogenization
                    .as_ref()
                    .map(|h| format!(", cross-spread at {} sizes", h.len()))
                    .unwrap_or_default()
            );
        }
        Command::Sandwich { math, delta } => {
            overlay_math(&mut cfg, &math)?;
            overlay(&mut cfg, "delta", &delta);
            let (req, resolved) = finish::<api::SandwichRequest>(cfg)?;
            let resp = ctx.client.sandwich(&req).await?;
            output::write_json(&ctx.out, &resolved, &serde_json::to_value(&resp)?)?;
            println!(
                "sandwich: n={} n'={} slack1={:.6} slack2={:.6} pass={}",
                resp.n, resp.n_prime, resp.slack_first, resp.slack_second, resp.pass
            );
        }
        Command::Superadd { math, check, trials, seed, strict, max_extent, alpha, n_max } => {
            overlay_math(&mut cfg, &math)?;
            cfg.entry("check").or_insert(Value::String(check));
            overlay(&mut cfg, "trials", &trials);
            overlay(&mut cfg, "seed", &seed);
            if strict {
                cfg.insert("strict".into(), Value::Bool(true));
            }
            overlay(&mut cfg, "max_extent", &max_extent);
            overlay(&mut cfg, "alpha", &alpha);
            overlay(&mut cfg, "n_max", &n_max);
            cfg.entry("seed").or_insert(json!(0));
            let (req, resolved) = finish::<api::SuperaddRequest>(cfg)?;
            let resp = ctx.client.superadd(&req).await?;
            output::write_superadd_jsonl(&ctx.out, &resolved, &resp)?;
            match (&resp.defects, &resp.maximal) {
                (Some(ds), _) => {
                    let ok = ds.iter().filter(|d| d.pass).count();
                    println!("superadd: {}/{} defect checks nonnegative", ok, ds.len());
                }
                (_, Some(p)) => println!(
                    "superadd: maximal probe empirical={:.4} bound={:.4} pass={}",
                    p.empirical_prob, p.bound, p.pass
                ),
                _ => {}
            }
        }
        Command::Cover { m, demo, instance } => {
            overlay(&mut cfg, "m", &m);
            if let Some(path) = instance {
                let text = std::fs::read_to_string(path)?;
                let inst: Value = serde_json::from_str(&text)?;
                if let Some(sites) = inst.get("sites") {
                    cfg.insert("sites".into(), sites.clone());
                }
                if let Some(sizes) = inst.get("sizes") {
                    cfg.insert("sizes".into(), sizes.clone());
                }
            } else if !demo && !cfg.contains_key("sites") {
                anyhow::bail!("pass --demo or --instance FILE");
            }
            cfg.entry("m").or_insert(json!(1));
            let (req, resolved) = finish::<api::CoverRequest>(cfg)?;
            let resp = ctx.client.cover(&req).await?;
            output::write_json(&ctx.out, &resolved, &serde_json::to_value(&resp)?)?;
            println!(
                "cover: selected {:?} volume-bound {} >= |W| {} disjoint={}",
                resp.selected_sites, resp.result.bound_lhs, resp.result.w_size, resp.result.disjoint
            );
        }
        Command::Gamma { math, n_list, samples } => {
            overlay_math(&mut cfg, &math)?;
            overlay(&mut cfg, "n_list", &n_list);
            overlay(&mut cfg, "samples", &samples);
            let (req, resolved) = finish::<api::GammaRequest>(cfg)?;
            let resp = ctx.client.gamma(&req).await?;
            output::write_gamma_csv(&ctx.out, &resolved, &req.s, &resp.points)?;
            println!("gamma: {} sizes, largest-n mean {:.6}", resp.points.len(),
                resp.points.last().map(|p| p.mean).unwrap_or(f64::NAN));
        }
        Command::Sample { math, samples, burn_in, thin, seed, random_scan, format } => {
            overlay_math(&mut cfg, &math)?;
            overlay(&mut cfg, "samples", &samples);
            overlay(&mut cfg, "burn_in", &burn_in);
            overlay(&mut cfg, "thin", &thin);
            overlay(&mut cfg, "seed", &seed);
            if random_scan {
                cfg.insert("random_scan".into(), Value::Bool(true));
            }
            cfg.entry("thin").or_insert(json!(10));
            cfg.entry("seed").or_insert(json!(0));
            cfg.entry("random_scan").or_insert(json!(false));
            let (req, _resolved) = finish::<api::SampleRequest>(cfg)?;
            let resp = ctx.client.sample(&req).await?;
            match format.as_str() {
                "csv" => output::write_samples_csv(&ctx.out, &req, &resp)?,
                "bin" => output::write_samples_bin(&ctx.out, &resp)?,
                other => anyhow::bail!("unknown sample format {other:?} (csv|bin)"),
            }
            println!("sample: {} configurations from box {:?}..{:?}", resp.samples.len(), resp.lo, resp.hi);
        }
        Command::Concentrate { math, delta, eps, samples, burn_in, thin, seed } => {
            overlay_math(&mut cfg, &math)?;
            overlay(&mut cfg, "delta", &delta);
            overlay(&mut cfg, "eps", &eps);
            overlay(&mut cfg, "samples", &samples);
            overlay(&mut cfg, "burn_in", &burn_in);
            overlay(&mut cfg, "thin", &thin);
            overlay(&mut cfg, "seed", &seed);
            cfg.entry("thin").or_insert(json!(10));
            cfg.entry("seed").or_insert(json!(0));
            cfg.entry("random_scan").or_insert(json!(false));
            let (req, resolved) = finish::<api::ConcentrateRequest>(cfg)?;
            let resp = ctx.client.concentrate(&req).await?;
            output::write_json(&ctx.out, &resolved, &serde_json::to_value(&resp)?)?;
            println!("concentrate: fraction={:.4} ({}/{})", resp.fraction, resp.in_ball, resp.samples);
        }
        Command::Tabulate { math, samples, grid_points, margin } => {
            overlay_math(&mut cfg, &math)?;
            overlay(&mut cfg, "samples", &samples);
            overlay(&mut cfg, "grid_points", &grid_points);
            overlay(&mut cfg, "margin", &margin);
            let (req, resolved) = finish::<api::TabulateRequest>(cfg)?;
            let resp = ctx.client.tabulate(&req).await?;
            output::write_json(&ctx.out, &resolved, &serde_json::to_value(&resp)?)?;
            println!(
                "tabulate: {} grid points at n={} ({} samples each)",
                resp.grid.len(), resp.meta.n, resp.meta.samples
            );
        }
        Command::Solve { region, eps, boundary, table, max_iters, step_c, report } => {
            if let Some(r) = region {
                let eps = eps.unwrap_or(1.0 / 32.0);
                let value = match r.as_str() {
                    "unit-square" => serde_json::to_value(
                        tension_core::solver::Region::unit_square(eps),
                    )?,
                    "unit-interval" => serde_json::to_value(
                        tension_core::solver::Region::unit_interval(eps),
                    )?,
                    other => {
                        let path = other.strip_prefix('@').unwrap_or(other);
                        serde_json::from_str(&std::fs::read_to_string(path)?)?
                    }
                };
                cfg.insert("region".into(), value);
            }
            if let Some(b) = boundary {
                cfg.insert("boundary".into(), parse_boundary(&b)?);
            }
            if let Some(t) = table {
                cfg.insert("table".into(), parse_table(&t)?);
            }
            if max_iters.is_some() || step_c.is_some() {
                let mut params = cfg
                    .get("params")
                    .cloned()
                    .unwrap_or_else(|| serde_json::to_value(
                        tension_core::solver::MinimizeParams::default(),
                    ).unwrap());
                if let Some(mi) = max_iters {
                    params["max_iters"] = json!(mi);
                }
                if let Some(c) = step_c {
                    params["step_c"] = json!(c);
                }
                cfg.insert("params".into(), params);
            }
            let (req, resolved) = finish::<api::SolveRequest>(cfg)?;
            let resp = ctx.client.solve(&req).await?;
            output::write_profile_csv(&ctx.out, &resp)?;
            let report_path = report.or_else(|| {
                ctx.out.as_ref().map(|p| p.with_extension("report.json"))
            });
            output::write_json(&report_path, &resolved, &serde_json::to_value(&resp.report)?)?;
            println!(
                "solve: {} nodes, entropy {:.6} after {} iterations",
                resp.values.len(), resp.report.final_entropy, resp.report.iterations
            );
        }
        Command::Validate { command, math, delta, eps, samples } => {
            overlay_math(&mut cfg, &math)?;
            overlay(&mut cfg, "delta", &delta);
            overlay(&mut cfg, "eps", &eps);
            overlay(&mut cfg, "samples", &samples);
            let req = api::ValidateRequest { command: command.clone(), config: Value::Object(cfg) };
            let resp = ctx.client.validate(&req).await?;
            output::write_json(&ctx.out, &serde_json::to_value(&req)?, &serde_json::to_value(&resp)?)?;
            if resp.violations.is_empty() {
                println!("validate: ok");
            } else {
                for v in &resp.violations {
                    println!("validate: {}: {}", v.param, v.constraint);
                }
                anyhow::bail!("{} violation(s)", resp.violations.len());
            }
        }
    }
    Ok(())
}

fn parse_boundary(text: &str) -> anyhow::Result<Value> {
    if let Some(rest) = text.strip_prefix("affine:") {
        let (slopes, offset) = match rest.rsplit_once(':') {
            Some((s, o)) => (s, o.parse::<f64>()?),
            None => (rest, 0.0),
        };
        return Ok(json!({ "kind": "affine", "slope": parse_slope(slopes)?, "offset": offset }));
    }
    let path = text.strip_prefix('@').unwrap_or(text);
    Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
}

fn parse_table(text: &str) -> anyhow::Result<Value> {
    if text == "quadratic" {
        return Ok(json!({ "kind": "quadratic", "m": 2, "grid_points": 33 }));
    }
    if let Some(rest) = text.strip_prefix("quadratic:") {
        let (m, points) = rest
            .split_once(',')
            .ok_or_else(|| anyhow::anyhow!("quadratic:M,POINTS expected"))?;
        return Ok(json!({
            "kind": "quadratic",
            "m": m.trim().parse::<usize>()?,
            "grid_points": points.trim().parse::<usize>()?,
        }));
    }
    let path = text.strip_prefix('@').unwrap_or(text);
    let table: Value = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    Ok(json!({ "kind": "inline", "table": table }))
}
