//! Batch command-line front-end.
//!
//! Subcommands: `diffusion`, `bands`, `barrier`, `bounds`, `converge`,
//! `simulate`, `selftest`.  Exit codes: 0 success, 2 usage or parameter
//! error, 3 numerical failure, 4 selftest mismatch.  Floating output is
//! printed with 9 significant digits; CSV headers are fixed per subcommand.

use std::fs;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

use crate::analysis;
use crate::diffusion::solve_diffusion;
use crate::error::Error;
use crate::ide;
use crate::model::CLParameters;
use crate::sim::{self, SimConfig};
use crate::strategy::{self, BandStrategy};

/// The canonical Gamma(2,1) example parameters, bundled as the regression
/// fixture and used when --params is omitted.
pub const EXAMPLE_PARAMS_JSON: &str = include_str!("../assets/gamma21.json");

#[derive(Parser)]
#[command(name = "divlab", version, about = "Optimal dividends: scaled risk model vs diffusion approximation", disable_help_subcommand = true)]
struct Cli {
    /// Parameter JSON file (defaults to the bundled Gamma(2,1) example).
    #[arg(long, global = true)]
    params: Option<PathBuf>,
    /// Directory for CSV/JSON artifacts.
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Print gamma1, gamma2, b_D, C and sample V_D as CSV.
    Diffusion {
        /// Sample count on [0, x_max].
        #[arg(long, default_value_t = 101)]
        samples: usize,
        /// Upper end of the sampled range (default 2 b_D).
        #[arg(long)]
        x_max: Option<f64>,
    },
    /// Construct band strategies for each scale and emit JSON + CSV samples.
    Bands {
        /// Comma-separated scale list, e.g. 1,4,9,25.
        #[arg(long, value_delimiter = ',', required = true)]
        n: Vec<f64>,
        #[arg(long)]
        x_max: Option<f64>,
        #[arg(long, default_value_t = 257)]
        samples: usize,
    },
    /// Barrier payoff V_{b,n}: JSON to stdout, CSV samples to the out dir.
    Barrier {
        #[arg(long)]
        n: f64,
        /// Barrier level, or "bD" for the diffusion barrier.
        #[arg(long)]
        b: String,
        #[arg(long, default_value_t = 257)]
        samples: usize,
    },
    /// Print the bound certificate (A, q, p, C', C'') as JSON.
    Bounds {
        /// Tilt scale N inside A (default: 1 when admissible).
        #[arg(long)]
        n_tilt: Option<f64>,
    },
    /// Convergence tables: one converge_<n>.csv per scale plus a summary.
    Converge {
        #[arg(long, value_delimiter = ',', required = true)]
        n: Vec<f64>,
    },
    /// Monte Carlo payoff of a strategy.
    Simulate {
        #[arg(long)]
        n: f64,
        /// Strategy: "bD", "optimal", or a JSON file path.
        #[arg(long)]
        strategy: String,
        #[arg(long, default_value_t = 100_000)]
        paths: u64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        x0: f64,
        /// Horizon in time units (default 50/delta).
        #[arg(long)]
        horizon: Option<f64>,
    },
    /// Regression suite against the worked example; exits 4 on mismatch.
    Selftest,
}

/// Format with 9 significant digits (%.9g-style).
pub fn fmt_g9(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let mag = x.abs().log10().floor() as i32;
    if (-4..9).contains(&mag) {
        let decimals = (8 - mag).max(0) as usize;
        let s = format!("{x:.decimals$}");
        let trimmed = if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        };
        trimmed
    } else {
        format!("{x:.8e}")
    }
}

fn load_params(path: &Option<PathBuf>) -> Result<CLParameters, Error> {
    match path {
        Some(p) => {
            let text = fs::read_to_string(p)
                .map_err(|e| Error::InvalidParameter(format!("{}: {e}", p.display())))?;
            CLParameters::from_json(&text)
        }
        None => CLParameters::from_json(EXAMPLE_PARAMS_JSON),
    }
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<PathBuf, Error> {
    fs::create_dir_all(dir)
        .map_err(|e| Error::InvalidParameter(format!("{}: {e}", dir.display())))?;
    let path = dir.join(name);
    fs::write(&path, contents)
        .map_err(|e| Error::InvalidParameter(format!("{}: {e}", path.display())))?;
    Ok(path)
}

fn exit_code_for(err: &Error) -> i32 {
    match err {
        Error::InvalidParameter(_) => 2,
        _ => 3,
    }
}

/// Entry point used by the binary; returns the process exit code.
pub fn dispatch(args: Vec<String>) -> i32 {
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 2,
            };
            let _ = e.print();
            return code;
        }
    };
    if let Ok(threads) = std::env::var("DIVLAB_THREADS") {
        if let Ok(k) = threads.trim().parse::<usize>() {
            // Ignore the error if a global pool already exists.
            let _ = rayon::ThreadPoolBuilder::new().num_threads(k.max(1)).build_global();
        }
    }
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code_for(&e)
        }
    }
}

fn run(cli: Cli) -> Result<i32, Error> {
    let params = load_params(&cli.params)?;
    match cli.cmd {
        Cmd::Diffusion { samples, x_max } => {
            let sol = solve_diffusion(&params)?;
            println!("gamma1 = {}", fmt_g9(sol.gamma1));
            println!("gamma2 = {}", fmt_g9(sol.gamma2));
            println!("b_D = {}", fmt_g9(sol.b_d));
            println!("C = {}", fmt_g9(sol.c_norm));
            let hi = x_max.unwrap_or(2.0 * sol.b_d);
            let mut csv = String::from("x,V_D,dV_D,d2V_D\n");
            for i in 0..samples.max(2) {
                let x = hi * i as f64 / (samples.max(2) - 1) as f64;
                let (d1, d2) = sol.vd_derivatives(x);
                csv.push_str(&format!(
                    "{},{},{},{}\n",
                    fmt_g9(x),
                    fmt_g9(sol.vd(x)),
                    fmt_g9(d1),
                    fmt_g9(d2)
                ));
            }
            print!("{csv}");
            Ok(0)
        }
        Cmd::Bands { n, x_max, samples } => {
            let sol = solve_diffusion(&params)?;
            for &scale in &n {
                let scaled = params.scale(scale)?;
                let xm = x_max.unwrap_or(4.0 * sol.b_d);
                let (v, strat) = strategy::construct_band_value(&scaled, xm)?;
                let thresholds: Vec<f64> = strat
                    .pay_intervals()
                    .iter()
                    .flat_map(|&(lo, hi)| {
                        let mut v = vec![lo];
                        if hi.is_finite() {
                            v.push(hi);
                        }
                        v
                    })
                    .filter(|&t| t > 0.0)
                    .collect();
                let json = serde_json::json!({
                    "n": scale,
                    "thresholds": thresholds,
                    "strategy": serde_json::from_str::<serde_json::Value>(&strat.to_json())
                        .expect("strategy json"),
                    "value_function": serde_json::from_str::<serde_json::Value>(&v.to_json())
                        .expect("piecewise json"),
                });
                let name = format!("bands_{scale}.json");
                write_file(&cli.out_dir, &name, &serde_json::to_string_pretty(&json).unwrap())?;
                let mut csv = String::from("x,V_n\n");
                for i in 0..samples.max(2) {
                    let x = xm * i as f64 / (samples.max(2) - 1) as f64;
                    csv.push_str(&format!("{},{}\n", fmt_g9(x), fmt_g9(v.value(x))));
                }
                write_file(&cli.out_dir, &format!("bands_{scale}.csv"), &csv)?;
                println!(
                    "n = {}: V_n(0) = {}, thresholds = [{}]",
                    fmt_g9(scale),
                    fmt_g9(v.value(0.0)),
                    thresholds.iter().map(|&t| fmt_g9(t)).collect::<Vec<_>>().join(", ")
                );
            }
            Ok(0)
        }
        Cmd::Barrier { n, b, samples } => {
            let sol = solve_diffusion(&params)?;
            let level = if b.trim() == "bD" {
                sol.b_d
            } else {
                b.trim().parse::<f64>().map_err(|_| {
                    Error::InvalidParameter(format!("--b expects a number or \"bD\", got {b:?}"))
                })?
            };
            let scaled = params.scale(n)?;
            let v = strategy::barrier_payoff(&scaled, level)?;
            println!("{}", v.to_json());
            let hi = 2.0 * level.max(sol.b_d);
            let mut csv = String::from("x,V_b_n\n");
            for i in 0..samples.max(2) {
                let x = hi * i as f64 / (samples.max(2) - 1) as f64;
                csv.push_str(&format!("{},{}\n", fmt_g9(x), fmt_g9(v.value(x))));
            }
            write_file(&cli.out_dir, &format!("barrier_{n}.csv"), &csv)?;
            Ok(0)
        }
        Cmd::Bounds { n_tilt } => {
            let cert = analysis::bound_certificate(&params, n_tilt, None)?;
            println!("{}", serde_json::to_string_pretty(&cert).unwrap());
            Ok(0)
        }
        Cmd::Converge { n } => {
            let report = analysis::convergence_report(&params, &n, None)?;
            for (scale, pts) in &report.curves {
                let mut csv = String::from("x,V_n,V_D,V_D_plus,V_D_minus,diff\n");
                for p in pts {
                    csv.push_str(&format!(
                        "{},{},{},{},{},{}\n",
                        fmt_g9(p.x),
                        fmt_g9(p.v_n),
                        fmt_g9(p.v_d),
                        fmt_g9(p.v_d_plus),
                        fmt_g9(p.v_d_minus),
                        fmt_g9(p.diff)
                    ));
                }
                write_file(&cli.out_dir, &format!("converge_{scale}.csv"), &csv)?;
            }
            println!(
                "C' = {}, C'' = {}",
                fmt_g9(report.certificate.c_prime),
                fmt_g9(report.certificate.c_double_prime)
            );
            println!("n,sup|V_n-V_D|,C'/sqrt(n),sup|V_bD_n-V_D|,sup|V_n-V_bD_n|,C''/sqrt(n),within,pointwise");
            for r in &report.rows {
                println!(
                    "{},{},{},{},{},{},{},{}",
                    fmt_g9(r.n),
                    fmt_g9(r.sup_vn_vd),
                    fmt_g9(r.bound_vn_vd),
                    fmt_g9(r.sup_vbdn_vd),
                    fmt_g9(r.sup_vn_vbdn),
                    fmt_g9(r.bound_vn_vbdn),
                    r.within_bounds,
                    r.pointwise_ok
                );
            }
            Ok(0)
        }
        Cmd::Simulate { n, strategy: strat_arg, paths, seed, x0, horizon } => {
            let scaled = params.scale(n)?;
            let sol = solve_diffusion(&params)?;
            let strat = match strat_arg.trim() {
                "bD" => BandStrategy::barrier(sol.b_d),
                "optimal" => strategy::construct_band_value(&scaled, 4.0 * sol.b_d)?.1,
                path => {
                    let text = fs::read_to_string(path)
                        .map_err(|e| Error::InvalidParameter(format!("{path}: {e}")))?;
                    BandStrategy::from_json(&text)?
                }
            };
            let cfg = SimConfig {
                paths,
                horizon: horizon.unwrap_or(50.0 / params.delta),
                seed,
                x0,
            };
            let r = sim::simulate_payoff(&scaled, &strat, &cfg)?;
            println!(
                "{}",
                serde_json::json!({
                    "mean": r.mean,
                    "std_error": r.std_error,
                    "truncation_bound": r.truncation_bound,
                })
            );
            Ok(0)
        }
        Cmd::Selftest => selftest(&params),
    }
}

// ---------------------------------------------------------------------------
// Selftest
// ---------------------------------------------------------------------------

struct Checker {
    failures: usize,
}

impl Checker {
    fn check(&mut self, name: &str, got: f64, want: f64, tol: f64) {
        let ok = (got - want).abs() <= tol;
        if !ok {
            self.failures += 1;
        }
        println!(
            "{} {name}: got {} want {} (tol {})",
            if ok { "PASS" } else { "FAIL" },
            fmt_g9(got),
            fmt_g9(want),
            fmt_g9(tol)
        );
    }

    fn check_true(&mut self, name: &str, ok: bool, detail: &str) {
        if !ok {
            self.failures += 1;
        }
        println!("{} {name}: {detail}", if ok { "PASS" } else { "FAIL" });
    }
}

/// Regression checks against the worked Gamma(2,1) example.  Runs on the
/// loaded parameters only when they match the bundled fixture; otherwise
/// switches to the fixture.
fn selftest(params: &CLParameters) -> Result<i32, Error> {
    let fixture = CLParameters::from_json(EXAMPLE_PARAMS_JSON)?;
    let params = if *params == fixture {
        *params
    } else {
        println!("note: selftest always runs on the bundled Gamma(2,1) fixture");
        fixture
    };
    let mut c = Checker { failures: 0 };
    let sol = solve_diffusion(&params)?;
    c.check("gamma1", sol.gamma1, 0.03894, 5e-5);
    c.check("gamma2", sol.gamma2, 0.08561, 5e-5);
    c.check("b_D", sol.b_d, 12.650, 5e-3);
    c.check("V_D(b_D)", sol.vd(sol.b_d), 14.0, 1e-9);

    let a = analysis::constant_a(&sol, &params.claim, 1.0)?;
    c.check("A", a, 0.04651, 5e-5);
    c.check("q = lambda A / delta", params.lambda * a / params.delta, 4.651, 5e-3);
    c.check("p threshold", analysis::p_threshold(&sol, &params.claim), 2.687, 5e-3);
    let cert = analysis::bound_certificate(&params, Some(1.0), None)?;
    c.check("C'", cert.c_prime, 4.651, 5e-3);

    let scaled1 = params.scale(1.0)?;
    let roots = ide::characteristic_roots(&scaled1)?;
    let printed = [0.039567, -0.079355, -1.48825];
    for (r, want) in roots.iter().zip(printed) {
        c.check(&format!("n=1 characteristic root {want}"), r.re, want, 1e-4);
        c.check_true("n=1 root is real", r.im == 0.0, "imaginary part zero");
    }

    let (v1, strat1) = strategy::construct_band_value(&scaled1, 4.0 * sol.b_d)?;
    c.check("V_1(0)", v1.value(0.0), 2.119, 1e-3);
    c.check("b_0 (n=1)", strat1.pay_intervals()[0].1, 1.80303, 1e-3);
    c.check("b_1 (n=1)", strat1.top_threshold(), 10.2162, 1e-2);

    // Exponential-claim barrier limits.
    let exp_params = CLParameters::from_json(
        r#"{"lambda": 10.0, "theta": 0.07, "delta": 0.1,
            "claim": {"family": "exponential", "rate": 1.0}}"#,
    )?;
    let exp_sol = solve_diffusion(&exp_params)?;
    let b_big = strategy::exp_optimal_barrier(&exp_params.scale(1e6)?)?;
    c.check("r1 -> gamma1", b_big.r1, exp_sol.gamma1, 1e-4);
    c.check("r2 -> gamma2", b_big.r2, exp_sol.gamma2, 1e-4);
    c.check("b_n -> b_D", b_big.b_n, exp_sol.b_d, 1e-2);

    // Subsolution certificate at n = 25 with the example q.
    let grid = analysis::default_grid(&sol, &[]);
    let rep = analysis::certify_subsolution(&params.scale(25.0)?, &sol, 4.651, &grid)?;
    c.check_true(
        "subsolution certificate (n=25, q=4.651)",
        rep.pass,
        &format!("worst F_n = {}", fmt_g9(rep.worst_f)),
    );

    if c.failures == 0 {
        println!("selftest: all checks passed");
        Ok(0)
    } else {
        println!("selftest: {} check(s) failed", c.failures);
        Ok(4)
    }
}
