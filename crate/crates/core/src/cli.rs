//! The `longtail` command line. Each subcommand wraps one library call and
//! writes its result as JSON, a text table and, where there is plot data,
//! CSV, together with a run manifest.

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::bayes::{posterior_hazard_band, posterior_sample};
use crate::diagnostics::{nonparametric_for, qq_bootstrap_band, qq_positions_truncated, QqStrategy};
use crate::error::{Error, Result};
use crate::ingest::{ingest_csv, load_frames, load_records};
use crate::likelihood::{
    bootstrap_lrt, fit_exceedances, fit_mle, group_comparison, lrt_nested, nc_fit_and_shape_test, profile_endpoint,
    threshold_scan, FitOptions, ProfileGrid,
};
use crate::manifest::RunManifest;
use crate::models::{Family, ModelSpec};
use crate::nonparam::{kaplan_meier, turnbull_em, EmOptions};
use crate::record::{exceedances, LifetimeRecord};
use crate::simlab::{bundled_config, ExperimentConfig};

#[derive(Debug, Parser)]
#[command(name = "longtail", version, about = "Inference for extreme lifetimes under truncation and censoring")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Worker threads for parallel sections; results do not depend on it.
    #[arg(long, global = true, env = "LONGTAIL_THREADS")]
    pub threads: Option<usize>,
    /// Directory for JSON, CSV and manifest output.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Print JSON instead of the text table.
    #[arg(long, global = true)]
    pub json: bool,
}

#[derive(Debug, Args, Clone, Serialize)]
pub struct DataArgs {
    /// Records as a JSON array, or a CSV file together with `--frames`.
    #[arg(long)]
    pub data: PathBuf,
    /// Sampling-frame metadata (JSON) for CSV input.
    #[arg(long)]
    pub frames: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
pub enum NpChoice {
    Km,
    Turnbull,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
pub enum StrategyChoice {
    A,
    B,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Convert a CSV dataset into validated JSON records.
    Ingest {
        #[command(flatten)]
        data: DataArgs,
    },
    /// Maximum likelihood fit above a threshold, or a threshold scan.
    Fit {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        family: Family,
        #[arg(long, default_value_t = 0.0)]
        threshold: f64,
        /// Thresholds `a:b` or `a:b:step` (step 1 by default).
        #[arg(long)]
        threshold_scan: Option<String>,
    },
    /// Profile likelihood of the generalized Pareto endpoint.
    Profile {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        threshold: f64,
        /// Confidence levels, comma separated.
        #[arg(long, default_value = "0.95")]
        levels: String,
        /// Only compute the confidence limits.
        #[arg(long)]
        limits_only: bool,
    },
    /// Likelihood ratio tests: nested models, groups, or equal shapes.
    Test {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, default_value_t = 0.0)]
        threshold: f64,
        /// Null family for a nested-model test.
        #[arg(long)]
        null: Option<Family>,
        /// Alternative family for a nested-model test.
        #[arg(long)]
        alt: Option<Family>,
        /// Bootstrap replicates; zero uses the asymptotic calibration.
        #[arg(long, default_value_t = 0)]
        bootstrap: usize,
        #[arg(long)]
        seed: Option<u64>,
        /// Covariate defining groups for a homogeneity test.
        #[arg(long)]
        group: Option<String>,
        /// Family for the group test.
        #[arg(long, default_value = "gen_pareto")]
        family: Family,
        /// Piece thresholds (comma separated) for the equal-shape test.
        #[arg(long)]
        shape_thresholds: Option<String>,
    },
    /// Nonparametric survivor estimate.
    Np {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, value_enum, default_value_t = NpChoice::Turnbull)]
        method: NpChoice,
        #[arg(long, default_value_t = 0.0)]
        threshold: f64,
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
    },
    /// Posterior draws under the maximal data information prior.
    Bayes {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        family: Family,
        #[arg(long, default_value_t = 0.0)]
        threshold: f64,
        #[arg(long, default_value_t = 10000)]
        draws: usize,
        #[arg(long)]
        seed: Option<u64>,
        /// Hazard grid `a:b:step` in absolute ages.
        #[arg(long)]
        hazard_grid: Option<String>,
        #[arg(long, default_value_t = 0.95)]
        level: f64,
    },
    /// Q-Q plotting positions, optionally with a bootstrap band.
    Qq {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        family: Family,
        #[arg(long, default_value_t = 0.0)]
        threshold: f64,
        #[arg(long, value_enum, default_value_t = StrategyChoice::B)]
        strategy: StrategyChoice,
        #[arg(long, default_value_t = 0)]
        bootstrap: usize,
        #[arg(long, default_value_t = 0.9)]
        level: f64,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run a named or file-based simulation experiment.
    Simulate {
        /// Bundled configuration name or path to a JSON configuration.
        #[arg(long)]
        config: String,
        #[arg(long)]
        replicates: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
}

/// Everything a command produces.
struct Output {
    name: &'static str,
    json: serde_json::Value,
    text: String,
    csv: Option<String>,
    manifest: RunManifest,
    /// Error to report after writing output (non-convergence).
    after: Option<Error>,
}

fn to_value<T: Serialize>(v: &T) -> Result<serde_json::Value> {
    Ok(serde_json::to_value(v)?)
}

fn resolve_seed(seed: Option<u64>) -> u64 {
    seed.unwrap_or_else(|| {
        let s: u64 = rand::random::<u64>() >> 11;
        eprintln!("seed: {s}");
        s
    })
}

fn load(data: &DataArgs, manifest: &mut RunManifest) -> Result<Vec<LifetimeRecord>> {
    manifest.add_input(&data.data).map_err(|e| Error::input(format!("cannot read {}: {e}", data.data.display())))?;
    let is_csv = data.data.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    if !is_csv {
        return load_records(&data.data);
    }
    let frames_path = data.frames.as_ref().ok_or_else(|| {
        Error::input(format!(
            "{} is CSV; pass the sampling-frame metadata with --frames <file.json>",
            data.data.display()
        ))
    })?;
    manifest.add_input(frames_path)?;
    let frames = load_frames(frames_path)?;
    let report = ingest_csv(&data.data, &frames)?;
    for d in &report.diagnostics {
        eprintln!("line {} ({}): {}", d.line, d.id, d.message);
    }
    if report.records.is_empty() {
        return Err(Error::input("no usable records"));
    }
    Ok(report.records)
}

/// Parses `a:b` or `a:b:step`.
pub fn parse_range(s: &str, default_step: f64) -> Result<Vec<f64>> {
    let parts: Vec<f64> = s
        .split(':')
        .map(|p| p.trim().parse::<f64>().map_err(|_| Error::input(format!("bad range '{s}'"))))
        .collect::<Result<_>>()?;
    let (a, b, step) = match parts[..] {
        [a, b] => (a, b, default_step),
        [a, b, st] => (a, b, st),
        _ => return Err(Error::input(format!("range '{s}' must be a:b or a:b:step"))),
    };
    if !(step > 0.0) || !(b >= a) {
        return Err(Error::input(format!("range '{s}' must be increasing with a positive step")));
    }
    let n = ((b - a) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|k| a + k as f64 * step).collect())
}

fn parse_list(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|_| Error::input(format!("bad number '{p}' in '{s}'"))))
        .collect()
}

fn write_outputs(out: &Output, dir: Option<&Path>, json_stdout: bool) -> Result<()> {
    if let Some(dir) = dir {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join(format!("{}.json", out.name)), serde_json::to_string_pretty(&out.json)?)?;
        if let Some(csv) = &out.csv {
            std::fs::write(dir.join(format!("{}.csv", out.name)), csv)?;
        }
        std::fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&out.manifest)?)?;
    } else {
        eprintln!("manifest: {}", serde_json::to_string(&out.manifest)?);
    }
    if json_stdout {
        println!("{}", serde_json::to_string_pretty(&out.json)?);
    } else {
        print!("{}", out.text);
    }
    Ok(())
}

fn fit_text(spec: &ModelSpec, records: &[LifetimeRecord]) -> Result<(serde_json::Value, String, Option<Error>)> {
    let fit = fit_mle(spec, records)?;
    let after = (!fit.converged).then(|| Error::numeric("the fit did not converge"));
    Ok((to_value(&fit)?, fit.to_table(), after))
}

fn run_command(cli: &Cli) -> Result<Output> {
    let start = Instant::now();
    let mut out = match &cli.command {
        Command::Ingest { data } => {
            let mut m = RunManifest::new("ingest", to_value(data)?, None);
            m.add_input(&data.data)?;
            let frames_path = data
                .frames
                .as_ref()
                .ok_or_else(|| Error::input("ingest needs the sampling-frame metadata: --frames <file.json>"))?;
            m.add_input(frames_path)?;
            let report = ingest_csv(&data.data, &load_frames(frames_path)?)?;
            let mut csv = String::from("line,id,message\n");
            for d in &report.diagnostics {
                csv.push_str(&format!("{},{},\"{}\"\n", d.line, d.id, d.message.replace('"', "'")));
            }
            let text = format!(
                "rows {}  records {}  rejected {}\n{}",
                report.rows,
                report.records.len(),
                report.diagnostics.len(),
                report.diagnostics.iter().map(|d| format!("  line {} ({}): {}\n", d.line, d.id, d.message)).collect::<String>()
            );
            Output { name: "ingest", json: to_value(&report.records)?, text, csv: Some(csv), manifest: m, after: None }
        }
        Command::Fit { data, family, threshold, threshold_scan: scan } => {
            let config = serde_json::json!({"data": data, "family": family, "threshold": threshold, "threshold_scan": scan});
            let mut m = RunManifest::new("fit", config, None);
            let records = load(data, &mut m)?;
            match scan {
                Some(range) => {
                    let us = parse_range(range, 1.0)?;
                    let rows = threshold_scan(*family, &records, &us)?;
                    let mut text = format!("{:>9} {:>6} {:>12}  estimates (SE)\n", "threshold", "n_u", "loglik");
                    let mut csv = String::from("threshold,n_u,loglik,parameter,estimate,std_error\n");
                    for r in &rows {
                        match &r.fit {
                            Some(f) => {
                                let cells: Vec<String> = f
                                    .names()
                                    .iter()
                                    .zip(f.mle.values())
                                    .zip(&f.std_errors)
                                    .map(|((n, v), se)| match se {
                                        Some(se) => format!("{n}={v:.4} ({se:.4})"),
                                        None => format!("{n}={v:.4} (-)"),
                                    })
                                    .collect();
                                text.push_str(&format!("{:>9} {:>6} {:>12.4}  {}\n", r.threshold, r.n_u, f.loglik, cells.join("  ")));
                                for ((n, v), se) in f.names().iter().zip(f.mle.values()).zip(&f.std_errors) {
                                    let se = se.map(|x| x.to_string()).unwrap_or_default();
                                    csv.push_str(&format!("{},{},{},{n},{v},{se}\n", r.threshold, r.n_u, f.loglik));
                                }
                            }
                            None => text.push_str(&format!(
                                "{:>9} {:>6} {:>12}  {}\n",
                                r.threshold,
                                r.n_u,
                                "-",
                                r.error.as_deref().unwrap_or("")
                            )),
                        }
                    }
                    Output { name: "scan", json: to_value(&rows)?, text, csv: Some(csv), manifest: m, after: None }
                }
                None => {
                    let (json, text, after) = fit_text(&ModelSpec::new(*family, *threshold), &records)?;
                    Output { name: "fit", json, text, csv: None, manifest: m, after }
                }
            }
        }
        Command::Profile { data, threshold, levels, limits_only } => {
            let config = serde_json::json!({"data": data, "threshold": threshold, "levels": levels, "limits_only": limits_only});
            let mut m = RunManifest::new("profile", config, None);
            let records = load(data, &mut m)?;
            let levels = parse_list(levels)?;
            let grid = if *limits_only { ProfileGrid::LimitsOnly } else { ProfileGrid::Auto };
            let trace = profile_endpoint(&records, *threshold, &grid, &levels)?;
            let mut text = format!(
                "endpoint profile above {}  n_u {}  xi {:.4}  sigma {:.4}\nmle {}\n",
                trace.threshold,
                trace.n_used,
                trace.xi_hat,
                trace.sigma_hat,
                trace.mle.map_or("inf".to_string(), |v| format!("{v:.3}"))
            );
            for l in &trace.limits {
                let lo = l.lower.map_or("-".to_string(), |v| format!("{v:.3}"));
                let hi = if l.upper_unbounded { "inf".to_string() } else { l.upper.map_or("-".to_string(), |v| format!("{v:.3}")) };
                text.push_str(&format!("{:>5.1}%  ({lo}, {hi})\n", 100.0 * l.level));
            }
            let mut csv = String::from("endpoint,profile_loglik\n");
            for (g, v) in trace.grid.iter().zip(&trace.values) {
                csv.push_str(&format!("{g},{}\n", v.map(|x| x.to_string()).unwrap_or_default()));
            }
            Output { name: "profile", json: to_value(&trace)?, text, csv: Some(csv), manifest: m, after: None }
        }
        Command::Test { data, threshold, null, alt, bootstrap, seed, group, family, shape_thresholds } => {
            let seed = (*bootstrap > 0).then(|| resolve_seed(*seed));
            let config = serde_json::json!({
                "data": data, "threshold": threshold, "null": null, "alt": alt, "bootstrap": bootstrap,
                "group": group, "family": family, "shape_thresholds": shape_thresholds,
            });
            let mut m = RunManifest::new("test", config, seed);
            let records = load(data, &mut m)?;
            if let Some(th) = shape_thresholds {
                let st = nc_fit_and_shape_test(&records, &parse_list(th)?)?;
                let mut text = format!("piecewise fit loglik {:.4}\n{:>4} {:>10} {:>4} {:>10}\n", st.full.loglik, "from", "w", "df", "p");
                for (k, _, t) in &st.nested {
                    text.push_str(&format!("{k:>4} {:>10.4} {:>4} {:>10.4}\n", t.statistic, t.df, t.p_value()));
                }
                Output { name: "test", json: to_value(&st)?, text, csv: None, manifest: m, after: None }
            } else {
                let result = if let Some(g) = group {
                    group_comparison(&records, g, *family, *threshold)?
                } else {
                    let (n0, n1) = match (null, alt) {
                        (Some(a), Some(b)) => (*a, *b),
                        _ => return Err(Error::input("give --null and --alt, --group, or --shape-thresholds")),
                    };
                    let (s0, s1) = (ModelSpec::new(n0, *threshold), ModelSpec::new(n1, *threshold));
                    match seed {
                        Some(s) => bootstrap_lrt(&s0, &s1, &records, *bootstrap, s)?,
                        None => lrt_nested(&s0, &s1, &records)?,
                    }
                };
                let mut text = format!(
                    "w {:.4}  df {}  p_asymptotic {:.4} ({:?})",
                    result.statistic, result.df, result.p_asymptotic, result.asymptotic
                );
                if let Some(p) = result.p_bootstrap {
                    text.push_str(&format!("  p_bootstrap {p:.4} (B = {}, failed {})", result.replicates, result.failed_replicates));
                }
                text.push('\n');
                if let Some(n) = &result.note {
                    text.push_str(&format!("note: {n}\n"));
                }
                Output { name: "test", json: to_value(&result)?, text, csv: None, manifest: m, after: None }
            }
        }
        Command::Np { data, method, threshold, tol } => {
            let config = serde_json::json!({"data": data, "method": method, "threshold": threshold, "tol": tol});
            let mut m = RunManifest::new("np", config, None);
            let records = load(data, &mut m)?;
            let ex = exceedances(&records, *threshold)?.records;
            let est = match method {
                NpChoice::Km => kaplan_meier(&ex)?,
                NpChoice::Turnbull => turnbull_em(&ex, None, &EmOptions { tol: *tol, ..Default::default() })?,
            };
            let mut text = format!(
                "{:?}  atoms {}  loglik {:.4}  iterations {}  converged {}\n{:>12} {:>10} {:>10}\n",
                est.method,
                est.support.len(),
                est.loglik,
                est.iterations,
                est.converged,
                "t",
                "mass",
                "survivor"
            );
            for ((t, p), s) in est.support.iter().zip(&est.mass).zip(&est.survivor) {
                text.push_str(&format!("{t:>12.5} {p:>10.5} {s:>10.5}\n"));
            }
            for n in &est.notes {
                text.push_str(&format!("note: {n}\n"));
            }
            let after = (!est.converged).then(|| Error::numeric("the EM iterations did not converge"));
            Output { name: "np", json: to_value(&est)?, text, csv: Some(est.to_csv()), manifest: m, after }
        }
        Command::Bayes { data, family, threshold, draws, seed, hazard_grid, level } => {
            let seed = resolve_seed(*seed);
            let config = serde_json::json!({
                "data": data, "family": family, "threshold": threshold, "draws": draws,
                "hazard_grid": hazard_grid, "level": level,
            });
            let mut m = RunManifest::new("bayes", config, Some(seed));
            let records = load(data, &mut m)?;
            let spec = ModelSpec::new(*family, *threshold);
            let sample = posterior_sample(&spec, &records, *draws, seed)?;
            let mut text = format!(
                "posterior {}  draws {}  acceptance {:.3}\n{:<8} {:>10} {:>10} {:>10} {:>10} {:>10}\n",
                family,
                sample.draws.len(),
                sample.acceptance_rate,
                "param",
                "mean",
                "sd",
                "q25",
                "median",
                "q75"
            );
            for s in sample.summary() {
                text.push_str(&format!(
                    "{:<8} {:>10.4} {:>10.4} {:>10.4} {:>10.4} {:>10.4}\n",
                    s.name, s.mean, s.sd, s.q25, s.median, s.q75
                ));
            }
            let mut json = serde_json::json!({"sample": sample, "summary": sample.summary()});
            let csv = match hazard_grid {
                Some(g) => {
                    let grid: Vec<f64> = parse_range(g, 0.1)?.into_iter().map(|a| a - threshold).collect();
                    let band = posterior_hazard_band(&sample.params()?, &grid, *level)?;
                    json["hazard_band"] = to_value(&band)?;
                    Some(band.to_csv())
                }
                None => Some(sample.to_csv()),
            };
            Output { name: "bayes", json, text, csv, manifest: m, after: None }
        }
        Command::Qq { data, family, threshold, strategy, bootstrap, level, seed } => {
            let seed = (*bootstrap > 0).then(|| resolve_seed(*seed));
            let config = serde_json::json!({
                "data": data, "family": family, "threshold": threshold, "strategy": strategy,
                "bootstrap": bootstrap, "level": level,
            });
            let mut m = RunManifest::new("qq", config, seed);
            let records = load(data, &mut m)?;
            let strategy = match strategy {
                StrategyChoice::A => QqStrategy::A,
                StrategyChoice::B => QqStrategy::B,
            };
            let spec = ModelSpec::new(*family, *threshold);
            let ex = exceedances(&records, *threshold)?.records;
            let fit = fit_exceedances(&spec, &ex, &FitOptions::default())?;
            let qq = qq_positions_truncated(&ex, &fit.mle, &nonparametric_for(&ex)?, strategy)?;
            let band = match seed {
                Some(s) => Some(qq_bootstrap_band(&fit, &ex, *bootstrap, *level, s, strategy)?),
                None => None,
            };
            let mut text = format!("{} points, {} skipped\n", qq.points.len(), qq.skipped.len());
            if let Some(b) = &band {
                text.push_str(&format!("{:.0}% band coverage {:.3}\n", 100.0 * b.level, b.coverage(&qq.points)));
            }
            let csv = qq.to_csv(band.as_ref());
            let json = serde_json::json!({"qq": qq, "band": band});
            Output { name: "qq", json, text, csv: Some(csv), manifest: m, after: None }
        }
        Command::Simulate { config, replicates, seed } => {
            let mut exp = match bundled_config(config) {
                Ok(c) => c,
                Err(_) if Path::new(config).exists() => ExperimentConfig::from_json(&std::fs::read_to_string(config)?)?,
                Err(_) => return Err(Error::input(format!("'{config}' is neither a bundled configuration nor a file"))),
            };
            if let Some(s) = seed {
                exp.set_seed(*s);
            }
            if let Some(n) = replicates {
                exp.set_replicates(*n);
            }
            let mut m = RunManifest::new("simulate", to_value(&exp)?, Some(exp.seed()));
            if Path::new(config).exists() {
                m.add_input(config)?;
            }
            let (json, csv) = exp.run()?;
            let text = simulate_text(&json);
            Output { name: "simulate", json, text, csv: Some(csv), manifest: m, after: None }
        }
    };
    out.manifest.wall_time_seconds = start.elapsed().as_secs_f64();
    Ok(out)
}

fn simulate_text(json: &serde_json::Value) -> String {
    let mut s = String::new();
    if let Some(ests) = json.get("estimators").and_then(|v| v.as_array()) {
        s.push_str(&format!("truth {}  dropped {}\n", json["truth"], json["dropped"]));
        s.push_str(&format!("{:<18} {:>10} {:>10} {:>10} {:>10}\n", "estimator", "mean", "bias", "se", "variance"));
        for e in ests {
            let f = |k: &str| e[k].as_f64().unwrap_or(f64::NAN);
            s.push_str(&format!(
                "{:<18} {:>10.4} {:>10.4} {:>10.4} {:>10.5}\n",
                e["name"].as_str().unwrap_or(""),
                f("mean"),
                f("bias"),
                f("se_mean"),
                f("variance")
            ));
        }
    } else if json.get("exact").is_some() {
        s.push_str(&format!("true endpoint {:.3}  KS distance {:.4}\n", json["true_endpoint"].as_f64().unwrap_or(f64::NAN), json["ks_distance"].as_f64().unwrap_or(f64::NAN)));
        for k in ["exact", "binned"] {
            let e = &json[k];
            s.push_str(&format!(
                "{k:<7} median {:.3}  fraction above cap {:.4}\n",
                e["median"].as_f64().unwrap_or(f64::INFINITY),
                e["fraction_above_cap"].as_f64().unwrap_or(f64::NAN)
            ));
        }
    }
    s
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    if let Some(n) = cli.threads {
        // Fails only if a pool already exists, which is harmless.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
    let result = run_command(&cli).and_then(|out| {
        write_outputs(&out, cli.out.as_deref(), cli.json)?;
        match out.after {
            Some(e) => Err(e),
            None => Ok(()),
        }
    });
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
