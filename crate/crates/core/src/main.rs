use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use log::warn;
use serde_json::{json, Value};

use fgenus::descendent::{compute_calibration, descendent_potential, genus0_descendents};
use fgenus::frame::{CanonicalFrame, FrameOptions};
use fgenus::frobenius::FrobeniusModel;
use fgenus::genus::{closedness_residual, genus1_differential, graph_sum, r_order_for_genus, wick_oracle, GenusOptions};
use fgenus::hodge::verify_lemma;
use fgenus::io::{self, IoError};
use fgenus::rmatrix::{compute_r, compute_t, compute_v, RMode};
use fgenus::scalar::{self, Cx, Field};
use fgenus::selftest;
use fgenus::wk::table;

#[derive(Parser)]
#[command(name = "fgenus", version, about = "Higher-genus and descendent potentials of semisimple Frobenius manifolds")]
struct Cli {
    /// Working precision in bits (default from FGENUS_PRECISION, else 256).
    #[arg(long, global = true)]
    precision: Option<u32>,
    /// Relative tolerance for consistency checks.
    #[arg(long, global = true)]
    tol: Option<f64>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Text,
}

#[derive(clap::Args, Clone)]
struct At {
    /// Model file, or `pt`, `a3`, `two-primary:<d>`.
    #[arg(long)]
    model: String,
    /// Comma-separated flat coordinates.
    #[arg(long, allow_hyphen_values = true)]
    point: Option<String>,
    /// Additive constants for canonical coordinates (non-conformal models).
    #[arg(long, allow_hyphen_values = true)]
    anchor: Option<String>,
    /// Twist constants `a_1^0,..,a_1^{N-1};a_2^0,..` replacing the Euler gauge.
    #[arg(long, allow_hyphen_values = true)]
    gauge: Option<String>,
    /// Canonical indices whose square-root branch is flipped.
    #[arg(long, value_delimiter = ',')]
    flip: Vec<usize>,
    /// Relabeling of canonical indices.
    #[arg(long, value_delimiter = ',')]
    perm: Option<Vec<usize>>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Check the Frobenius axioms of a model.
    Validate {
        #[command(flatten)]
        at: At,
    },
    /// Canonical coordinates, Hessians and the transition matrix.
    Frame {
        #[command(flatten)]
        at: At,
        #[arg(long, default_value_t = 0)]
        order: u32,
    },
    /// R-matrix coefficients through order K.
    Rmatrix {
        #[command(flatten)]
        at: At,
        #[arg(long, default_value_t = 4)]
        k: u32,
    },
    /// Edge coefficients V and tail values T.
    Edges {
        #[command(flatten)]
        at: At,
        #[arg(long, default_value_t = 4)]
        k: u32,
    },
    /// Genus-g potential as a graph sum, with the independent oracle.
    Genus {
        #[command(flatten)]
        at: At,
        #[arg(long)]
        g: u32,
        #[arg(long)]
        k: Option<u32>,
        #[arg(long)]
        no_oracle: bool,
    },
    /// Genus-1 differential and its closedness residual.
    Genus1Diff {
        #[command(flatten)]
        at: At,
        #[arg(long, default_value_t = 1e-6)]
        step: f64,
    },
    /// Descendent potential at a curve point.
    Descendent {
        #[command(flatten)]
        at: At,
        #[arg(long)]
        g: u32,
        /// Curve point document `{"Kmax": K, "t": [[...], ...]}`.
        #[arg(long)]
        tau: PathBuf,
        /// Rational base point of the calibration (default: origin).
        #[arg(long, allow_hyphen_values = true)]
        base: Option<String>,
    },
    /// A single intersection number of psi classes.
    Wk {
        #[arg(long)]
        g: u32,
        #[arg(long, value_delimiter = ',')]
        indices: Vec<u32>,
    },
    /// Both sides of the Hodge flow identity, coefficient by coefficient.
    HodgeLemma {
        #[arg(long, default_value_t = 2)]
        hbar: u32,
        #[arg(long, default_value_t = 4)]
        q_degree: u32,
        #[arg(long, default_value_t = 2)]
        s: usize,
    },
    /// The acceptance checks.
    Selftest {
        #[arg(long)]
        criterion: Option<u32>,
    },
}

enum Failure {
    Input(String),
    Numeric(String),
}

impl From<IoError> for Failure {
    fn from(e: IoError) -> Self {
        Failure::Input(e.to_string())
    }
}

fn numeric<E: std::fmt::Display>(e: E) -> Failure {
    Failure::Numeric(e.to_string())
}

fn input<E: std::fmt::Display>(e: E) -> Failure {
    Failure::Input(e.to_string())
}

struct Loaded {
    model: FrobeniusModel,
    point: Vec<Cx>,
    opts: GenusOptions,
}

fn load(at: &At) -> Result<Loaded, Failure> {
    let model = io::load_model(&at.model)?;
    let n = model.dim();
    let point = match &at.point {
        Some(p) => io::parse_point(p, n)?,
        None => vec![Cx::zero(); n],
    };
    let anchor = at.anchor.as_deref().map(|s| io::parse_point(s, n)).transpose()?;
    let mode = match &at.gauge {
        Some(s) => Some(RMode::Constants(s.split(';').map(|row| io::parse_point(row, n)).collect::<Result<_, _>>()?)),
        None if !model.is_conformal() => Some(RMode::Constants(Vec::new())),
        None => None,
    };
    let frame = FrameOptions { anchor, flips: at.flip.clone(), permutation: at.perm.clone() };
    Ok(Loaded { model, point, opts: GenusOptions { mode, frame } })
}

fn mode(l: &Loaded) -> RMode {
    l.opts.mode.clone().unwrap_or(RMode::Conformal)
}

fn breach(name: &str, value: f64) -> Result<(), Failure> {
    if value > scalar::tolerance() {
        return Err(Failure::Numeric(format!("{name} residual {value:e} above tolerance {:e}", scalar::tolerance())));
    }
    Ok(())
}

fn execute(cmd: &Cmd) -> Result<Value, Failure> {
    match cmd {
        Cmd::Validate { at } => {
            let l = load(at)?;
            let wdvv = l.model.wdvv_residual(&l.point).map_err(input)?;
            let unit = l.model.unit_residual(&l.point).map_err(input)?;
            let euler = if l.model.is_conformal() { Some(l.model.euler_residual(&l.point).map_err(input)?) } else { None };
            let report = json!({"model": l.model.name, "dimension": l.model.dim(), "wdvv": wdvv, "unit": unit, "euler": euler});
            let worst = wdvv.max(unit).max(euler.unwrap_or(0.0));
            if worst > scalar::tolerance() {
                return Err(Failure::Input(format!("axiom residual {worst:e}: {report}")));
            }
            Ok(report)
        }
        Cmd::Frame { at, order } => {
            let l = load(at)?;
            let f = CanonicalFrame::new(&l.model, &l.point, *order, &l.opts.frame).map_err(numeric)?;
            Ok(json!({
                "point": io::cx_vec(&f.point),
                "u": io::cx_vec(&f.u),
                "delta": io::cx_vec(&f.delta),
                "sqrt_delta": io::cx_vec(&f.sqrt_delta),
                "psi": io::cx_matrix(&f.psi),
                "du": io::cx_matrix(&f.du),
            }))
        }
        Cmd::Rmatrix { at, k } => {
            let l = load(at)?;
            let f = CanonicalFrame::new(&l.model, &l.point, *k, &l.opts.frame).map_err(numeric)?;
            let rc = compute_r(&f, *k, &mode(&l)).map_err(numeric)?;
            breach("unitarity", rc.unitarity)?;
            breach("consistency", rc.consistency)?;
            let n = l.model.dim();
            let mut entries = Vec::new();
            for (order, m) in rc.r.r.iter().enumerate() {
                for i in 0..n {
                    for j in 0..n {
                        entries.push((vec![i, j, order], io::cx(&m[(i, j)])));
                    }
                }
            }
            Ok(json!({"K": k, "R": io::keyed(entries), "unitarity": rc.unitarity, "consistency": rc.consistency}))
        }
        Cmd::Edges { at, k } => {
            let l = load(at)?;
            let f = CanonicalFrame::new(&l.model, &l.point, *k, &l.opts.frame).map_err(numeric)?;
            let rc = compute_r(&f, *k, &mode(&l)).map_err(numeric)?;
            let cutoff = k.saturating_sub(1);
            let v = compute_v(&rc.r, cutoff).map_err(numeric)?;
            let t = compute_t(&rc.r, &f.sqrt_delta).map_err(numeric)?;
            let n = l.model.dim();
            let mut ventries = Vec::new();
            for i in 0..n {
                for j in 0..n {
                    for a in 0..v[i][j].len() {
                        for b in 0..v[i][j][a].len() {
                            if a + b <= cutoff as usize {
                                ventries.push((vec![i, j, a, b], io::cx(&v[i][j][a][b])));
                            }
                        }
                    }
                }
            }
            let tentries = (0..n).flat_map(|i| t[i].iter().enumerate().map(move |(a, x)| (vec![i, a], io::cx(x))));
            Ok(json!({"K": k, "V": io::keyed(ventries), "T": io::keyed(tentries.collect::<Vec<_>>()), "delta": io::cx_vec(&f.delta)}))
        }
        Cmd::Genus { at, g, k, no_oracle } => {
            let l = load(at)?;
            if *g < 2 {
                return Err(Failure::Input(format!("genus {g}: use genus1-diff for genus 1")));
            }
            let need = r_order_for_genus(*g);
            let k = match k {
                Some(k) if *k < need => {
                    warn!("truncation K = {k} raised to {need} for genus {g}");
                    need
                }
                Some(k) => *k,
                None => need,
            };
            let f = CanonicalFrame::new(&l.model, &l.point, k, &l.opts.frame).map_err(numeric)?;
            let rc = compute_r(&f, k, &mode(&l)).map_err(numeric)?;
            breach("unitarity", rc.unitarity)?;
            let data = fgenus::rmatrix::EdgeTailData::from_r(&rc.r, &f.delta, &f.sqrt_delta, need - 1).map_err(numeric)?;
            let (value, parts) = graph_sum(&data, *g).map_err(numeric)?;
            let breakdown: Vec<Value> = parts
                .iter()
                .map(|(gr, v)| json!({"genera": gr.genera, "labels": gr.labels, "adjacency": gr.adj, "automorphisms": gr.aut, "value": io::cx(v)}))
                .collect();
            let mut report = json!({"g": g, "K": k, "F_g": io::cx(&value), "graphs": breakdown});
            if !no_oracle {
                let oracle = wick_oracle(&data, *g).map_err(numeric)?;
                let scale = parts.iter().map(|(_, v)| v.magnitude()).fold(value.magnitude(), f64::max).max(f64::MIN_POSITIVE);
                let residual = (oracle.clone() - &value).magnitude() / scale;
                report["oracle"] = io::cx(&oracle);
                report["residual"] = json!(residual);
                breach("oracle", residual)?;
            }
            Ok(report)
        }
        Cmd::Genus1Diff { at, step } => {
            let l = load(at)?;
            let f = CanonicalFrame::new(&l.model, &l.point, 1, &l.opts.frame).map_err(numeric)?;
            let rc = compute_r(&f, 1, &mode(&l)).map_err(numeric)?;
            let data = fgenus::rmatrix::EdgeTailData::from_r(&rc.r, &f.delta, &f.sqrt_delta, 0).map_err(numeric)?;
            let w = genus1_differential(&f, &data);
            let closed = closedness_residual(&l.model, &l.point, &Cx::from_f64(*step), &l.opts).map_err(numeric)?;
            Ok(json!({"dF1": io::cx_vec(&w), "closedness": closed, "step": step}))
        }
        Cmd::Descendent { at, g, tau, base } => {
            let l = load(at)?;
            let n = l.model.dim();
            let tau = io::load_tau(tau, n)?;
            let base = match base {
                Some(b) => io::parse_rationals(b, n)?,
                None => vec![rug::Rational::new(); n],
            };
            let order = (2 * tau.kmax() + 1).max(tau.kmax());
            let calib = compute_calibration(&l.model, &base, order).map_err(numeric)?;
            match g {
                0 => {
                    let g0 = genus0_descendents(&calib, &tau).map_err(numeric)?;
                    let grad: Vec<Value> = g0.grad.iter().map(|v| io::cx_vec(v)).collect();
                    Ok(json!({"g": 0, "t_star": io::cx_vec(&g0.t_star), "F": io::cx(&g0.value), "gradient": grad}))
                }
                1 => Err(Failure::Input("genus 1 descendents are available through the differential identity only".into())),
                _ => {
                    let (value, frame) = descendent_potential(&l.model, &calib, &tau, *g, &l.opts).map_err(numeric)?;
                    let tails: Vec<Value> = frame.data.t.iter().map(|v| io::cx_vec(v)).collect();
                    Ok(json!({
                        "g": g,
                        "t_star": io::cx_vec(&frame.t_star),
                        "F": io::cx(&value),
                        "D": io::cx_vec(&frame.data.delta),
                        "T": tails,
                        "criticality": frame.criticality,
                    }))
                }
            }
        }
        Cmd::Wk { g, indices } => {
            let v = table().get(*g, indices).map_err(input)?;
            Ok(json!({"g": g, "indices": indices, "value": io::rational(&v)}))
        }
        Cmd::HodgeLemma { hbar, q_degree, s } => {
            let rep = verify_lemma(table(), *hbar, *q_degree, *s).map_err(numeric)?;
            let report = json!({
                "compared": rep.compared,
                "mismatches": rep.mismatches.iter().map(|(m, a, b)| json!({"monomial": m, "lhs": a.to_string(), "rhs": b.to_string()})).collect::<Vec<_>>(),
                "hbar0_s1_Q0": rep.genus_one_s1_q0.to_string(),
                "flows_commute": rep.flows_commute,
            });
            if !rep.mismatches.is_empty() || !rep.flows_commute {
                return Err(Failure::Numeric(report.to_string()));
            }
            Ok(report)
        }
        Cmd::Selftest { criterion } => {
            let checks = match criterion {
                Some(id) => vec![selftest::run(*id)],
                None => selftest::all(),
            };
            for c in &checks {
                eprintln!("{}", c.line());
            }
            let report = json!({
                "criteria": checks.iter().map(|c| json!({"id": c.id, "name": c.name, "passed": c.passed, "detail": c.detail})).collect::<Vec<_>>()
            });
            if checks.iter().any(|c| !c.passed) {
                return Err(Failure::Numeric(report.to_string()));
            }
            Ok(report)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let env_bits = std::env::var(io::PRECISION_ENV).ok().and_then(|s| s.parse().ok());
    scalar::set_precision(cli.precision.or(env_bits).unwrap_or(256));
    if let Some(t) = cli.tol {
        if !(t > 0.0) {
            eprintln!("error: tolerance must be positive");
            return ExitCode::from(1);
        }
        scalar::set_tolerance(t);
    }
    match execute(&cli.cmd) {
        Ok(report) => {
            let report = io::with_precision(report);
            let text = match cli.format {
                Format::Json => serde_json::to_string_pretty(&report).expect("serializable") + "\n",
                Format::Text => io::to_text(&report),
            };
            let _ = std::io::stdout().write_all(text.as_bytes());
            ExitCode::SUCCESS
        }
        Err(Failure::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Numeric(msg)) => {
            eprintln!("numerical failure: {msg}");
            ExitCode::from(2)
        }
    }
}
