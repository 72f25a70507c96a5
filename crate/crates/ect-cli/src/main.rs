//! Command-line front end: generate curves, sample noise, smooth, compute
//! transform fields and distances, evaluate bounds, and run experiments.
//! All outputs are plot-ready CSV or JSON, and every artifact embeds the
//! tool version, the resolved configuration, and SHA-256 hashes of its
//! inputs. Exit codes: 0 ok, 2 missing or unreadable input, 3 validation
//! failure, 4 incompatible inputs, 5 runtime failure.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use ect_core::bounds::{stability_bound, StabilityInput};
use ect_core::complex::{make_directions, validate, ShapeDoc};
use ect_core::ect::{ect_distance, sect_distance, sect_field, EctError, EctField};
use ect_core::gp::SineSquaredExpKernel;
use ect_core::pipeline::{
    cycle_shape, discretize_cv, render_rows_csv, run_consistency_experiment, sample_noisy, smooth,
    CoeffRecord, ExperimentConfig, FourierCurve, NoisySample, PipelineError,
};

const EXIT_INPUT: i32 = 2;
const EXIT_VALIDATION: i32 = 3;
const EXIT_INCOMPATIBLE: i32 = 4;
const EXIT_RUNTIME: i32 = 5;

struct CliError {
    code: i32,
    message: String,
}

impl CliError {
    fn new(code: i32, message: impl Into<String>) -> Self {
        CliError {
            code,
            message: message.into(),
        }
    }
}

type CliResult<T> = Result<T, CliError>;

#[derive(Parser)]
#[command(
    name = "ect",
    version,
    about = "Euler characteristic transforms of embedded graphs, stability bounds, and GP smoothing of noisy curves"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a Fourier curve (preset or coefficient file) with its derived
    /// curvature bound, arc length, and simplicity flag.
    GenCurve {
        /// Named preset: circle, ellipse, or blob.
        #[arg(long, conflicts_with = "coeffs")]
        preset: Option<String>,
        /// JSON file with {"coeffs": [{"j", "re", "im"}, ...]}.
        #[arg(long)]
        coeffs: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a curve at evenly spaced parameters with Gaussian noise.
    Sample {
        #[arg(long)]
        curve: PathBuf,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        sigma: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Smooth noisy samples with a periodic-kernel GP and write the
    /// constant-velocity discretization as a single-cycle shape.
    Smooth {
        #[arg(long)]
        samples: PathBuf,
        /// Number of points in the output polyline.
        #[arg(long, default_value_t = 256)]
        m_points: usize,
        /// Reparameterization grid intervals.
        #[arg(long, default_value_t = 1024)]
        grid: usize,
        /// GP noise variance; defaults to max(sigma^2, 1e-10) from the
        /// samples file.
        #[arg(long)]
        sigma2: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compute the transform field of a shape over generated directions.
    Ect {
        #[arg(long)]
        shape: PathBuf,
        #[arg(long, default_value_t = 64)]
        directions: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Bounding radius a (the shape must fit in the ball of radius a).
        #[arg(long)]
        a: f64,
        /// CSV output: one row per (direction index, breakpoint, value).
        #[arg(long)]
        out: PathBuf,
        /// Optional JSON mirror of the field (input format for dist/sect).
        #[arg(long)]
        out_json: Option<PathBuf>,
    },
    /// Integrate a field into smoothed-transform curves as CSV.
    Sect {
        #[arg(long)]
        field: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print transform and smoothed-transform distances of two fields.
    Dist {
        #[arg(long)]
        field1: PathBuf,
        #[arg(long)]
        field2: PathBuf,
    },
    /// Evaluate the stability bound for given cell lengths and curvature.
    Bounds {
        #[arg(long)]
        curvature: f64,
        /// Comma-separated per-cell arc lengths.
        #[arg(long, value_delimiter = ',')]
        lengths: Vec<f64>,
        #[arg(long, default_value_t = 0)]
        vertices: usize,
        #[arg(long)]
        eps: f64,
    },
    /// Run the consistency experiment and write rows.csv plus summary.json.
    Experiment {
        /// Experiment config JSON; omitted means the built-in default.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        outdir: PathBuf,
    },
    /// Check a shape document against every structural invariant.
    Validate {
        #[arg(long)]
        shape: PathBuf,
    },
}

fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

fn meta_value(config: Value, inputs: &[(&str, &[u8])]) -> Value {
    let hashes: BTreeMap<String, String> = inputs
        .iter()
        .map(|(name, bytes)| (name.to_string(), sha256_hex(bytes)))
        .collect();
    json!({
        "tool_version": env!("CARGO_PKG_VERSION"),
        "config": config,
        "input_sha256": hashes,
    })
}

fn csv_meta_header(meta: &Value) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "# tool_version: {}\n",
        meta["tool_version"].as_str().unwrap_or("?")
    ));
    out.push_str(&format!("# config: {}\n", meta["config"]));
    out.push_str(&format!("# input_sha256: {}\n", meta["input_sha256"]));
    out
}

fn read_input(path: &Path) -> CliResult<Vec<u8>> {
    std::fs::read(path)
        .map_err(|e| CliError::new(EXIT_INPUT, format!("cannot read {}: {e}", path.display())))
}

fn parse_json<T: for<'de> Deserialize<'de>>(path: &Path, bytes: &[u8]) -> CliResult<T> {
    serde_json::from_slice(bytes)
        .map_err(|e| CliError::new(EXIT_INPUT, format!("cannot parse {}: {e}", path.display())))
}

fn write_output(path: &Path, contents: &str) -> CliResult<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| {
                CliError::new(
                    EXIT_RUNTIME,
                    format!("cannot create {}: {e}", parent.display()),
                )
            })?;
        }
    }
    std::fs::write(path, contents).map_err(|e| {
        CliError::new(
            EXIT_RUNTIME,
            format!("cannot write {}: {e}", path.display()),
        )
    })
}

fn write_json_with_meta<T: Serialize>(path: &Path, payload: &T, meta: Value) -> CliResult<()> {
    let mut value = serde_json::to_value(payload)
        .map_err(|e| CliError::new(EXIT_RUNTIME, format!("serialize failed: {e}")))?;
    value
        .as_object_mut()
        .expect("artifacts are JSON objects")
        .insert("meta".to_string(), meta);
    let text = serde_json::to_string_pretty(&value)
        .map_err(|e| CliError::new(EXIT_RUNTIME, format!("serialize failed: {e}")))?;
    write_output(path, &format!("{text}\n"))
}

fn ect_code(e: &EctError) -> i32 {
    match e {
        EctError::IncompatibleFields(_) | EctError::DirectionDimension { .. } => EXIT_INCOMPATIBLE,
        _ => EXIT_VALIDATION,
    }
}

fn pipeline_code(e: &PipelineError) -> i32 {
    match e {
        PipelineError::Ect(inner) => ect_code(inner),
        PipelineError::UnknownPreset(_)
        | PipelineError::TooFewSamples { .. }
        | PipelineError::BadSigma(_)
        | PipelineError::TooFewPoints { .. }
        | PipelineError::DistinctParams
        | PipelineError::BadConfig(_)
        | PipelineError::Complex(_) => EXIT_VALIDATION,
        _ => EXIT_RUNTIME,
    }
}

/// Curve artifact: coefficients plus derived facts.
#[derive(Serialize, Deserialize)]
struct CurveFile {
    coeffs: Vec<CoeffRecord>,
}

#[derive(Serialize, Deserialize)]
struct SamplesFile {
    sigma: f64,
    seed: u64,
    samples: Vec<NoisySample>,
}

fn cmd_gen_curve(preset: Option<String>, coeffs: Option<PathBuf>, out: PathBuf) -> CliResult<()> {
    let (curve, config, inputs): (FourierCurve, Value, Vec<(&str, Vec<u8>)>) =
        match (&preset, &coeffs) {
            (Some(name), None) => {
                let curve = FourierCurve::preset(name)
                    .map_err(|e| CliError::new(EXIT_VALIDATION, e.to_string()))?;
                (curve, json!({"preset": name}), Vec::new())
            }
            (None, Some(path)) => {
                let bytes = read_input(path)?;
                let file: CurveFile = parse_json(path, &bytes)?;
                if file.coeffs.is_empty() {
                    return Err(CliError::new(
                        EXIT_VALIDATION,
                        "coefficient file has no coefficients",
                    ));
                }
                (
                    FourierCurve {
                        coeffs: file.coeffs,
                    },
                    json!({"coeffs": path.display().to_string()}),
                    vec![("coeffs", bytes)],
                )
            }
            _ => {
                return Err(CliError::new(
                    EXIT_INPUT,
                    "gen-curve needs exactly one of --preset or --coeffs",
                ))
            }
        };
    let curvature_bound = curve
        .curvature_bound()
        .map_err(|e| CliError::new(pipeline_code(&e), e.to_string()))?;
    let arc_length = curve
        .arc_length()
        .map_err(|e| CliError::new(pipeline_code(&e), e.to_string()))?;
    let simple = curve.is_simple(2048);
    if !simple {
        eprintln!("warning: curve self-intersects on the scan grid");
    }
    let input_refs: Vec<(&str, &[u8])> = inputs.iter().map(|(n, b)| (*n, b.as_slice())).collect();
    let mut meta = meta_value(config, &input_refs);
    meta.as_object_mut().unwrap().extend([
        ("curvature_bound".to_string(), json!(curvature_bound)),
        ("arc_length".to_string(), json!(arc_length)),
        ("simple".to_string(), json!(simple)),
    ]);
    write_json_with_meta(
        &out,
        &CurveFile {
            coeffs: curve.coeffs,
        },
        meta,
    )
}

fn cmd_sample(curve_path: PathBuf, n: usize, sigma: f64, seed: u64, out: PathBuf) -> CliResult<()> {
    let bytes = read_input(&curve_path)?;
    let file: CurveFile = parse_json(&curve_path, &bytes)?;
    let curve = FourierCurve {
        coeffs: file.coeffs,
    };
    let samples = sample_noisy(&curve, n, sigma, seed)
        .map_err(|e| CliError::new(pipeline_code(&e), e.to_string()))?;
    let meta = meta_value(
        json!({"curve": curve_path.display().to_string(), "n": n, "sigma": sigma, "seed": seed}),
        &[("curve", &bytes)],
    );
    write_json_with_meta(
        &out,
        &SamplesFile {
            sigma,
            seed,
            samples,
        },
        meta,
    )
}

fn cmd_smooth(
    samples_path: PathBuf,
    m_points: usize,
    grid: usize,
    sigma2: Option<f64>,
    out: PathBuf,
) -> CliResult<()> {
    let bytes = read_input(&samples_path)?;
    let file: SamplesFile = parse_json(&samples_path, &bytes)?;
    let noise = sigma2.unwrap_or((file.sigma * file.sigma).max(1e-10));
    let run = || -> Result<ShapeDoc, PipelineError> {
        let sc =
            smooth(&file.samples, SineSquaredExpKernel::default(), noise)?.reparameterize(grid)?;
        let points = discretize_cv(&sc, sc.reparam().expect("just attached"), m_points);
        let (complex, emb) = cycle_shape(&points);
        Ok(ShapeDoc::from_parts(&complex, &emb))
    };
    let doc = run().map_err(|e| CliError::new(pipeline_code(&e), e.to_string()))?;
    let meta = meta_value(
        json!({
            "samples": samples_path.display().to_string(),
            "m_points": m_points,
            "grid": grid,
            "sigma2": noise,
        }),
        &[("samples", &bytes)],
    );
    write_json_with_meta(&out, &doc, meta)
}

fn field_to_csv(field: &EctField, meta: &Value) -> String {
    let mut out = csv_meta_header(meta);
    out.push_str("direction,breakpoint,value\n");
    for (i, curve) in field.curves.iter().enumerate() {
        out.push_str(&format!(
            "{i},{},{}\n",
            -field.radius,
            curve.initial_value()
        ));
        for (t, v) in curve
            .breakpoints()
            .iter()
            .zip(curve.values().iter().skip(1))
        {
            out.push_str(&format!("{i},{t},{v}\n"));
        }
    }
    out
}

fn cmd_ect(
    shape_path: PathBuf,
    directions: usize,
    seed: u64,
    a: f64,
    out: PathBuf,
    out_json: Option<PathBuf>,
) -> CliResult<()> {
    let bytes = read_input(&shape_path)?;
    let doc: ShapeDoc = parse_json(&shape_path, &bytes)?;
    let (complex, emb) = doc.into_parts();
    let report = validate(&complex, &emb);
    if !report.is_valid() {
        return Err(CliError::new(
            EXIT_VALIDATION,
            format!("shape is invalid:\n{report}"),
        ));
    }
    let dirs = make_directions(emb.dim, directions, seed)
        .map_err(|e| CliError::new(EXIT_VALIDATION, e.to_string()))?;
    let field = ect_core::ect::ect_field(&complex, &emb, &dirs, a)
        .map_err(|e| CliError::new(ect_code(&e), e.to_string()))?;
    let meta = meta_value(
        json!({
            "shape": shape_path.display().to_string(),
            "directions": directions,
            "seed": seed,
            "a": a,
            "note": "max over a finite direction set lower-bounds the sphere supremum",
        }),
        &[("shape", &bytes)],
    );
    write_output(&out, &field_to_csv(&field, &meta))?;
    if let Some(json_path) = out_json {
        write_json_with_meta(&json_path, &field, meta)?;
    }
    Ok(())
}

fn cmd_sect(field_path: PathBuf, out: PathBuf) -> CliResult<()> {
    let bytes = read_input(&field_path)?;
    let field: EctField = parse_json(&field_path, &bytes)?;
    let curves = sect_field(&field);
    let meta = meta_value(
        json!({"field": field_path.display().to_string()}),
        &[("field", &bytes)],
    );
    let mut csv = csv_meta_header(&meta);
    csv.push_str("direction,knot,value\n");
    for (i, curve) in curves.iter().enumerate() {
        for (t, v) in curve.knots.iter().zip(&curve.values) {
            csv.push_str(&format!("{i},{t},{v}\n"));
        }
    }
    write_output(&out, &csv)
}

fn cmd_dist(path1: PathBuf, path2: PathBuf) -> CliResult<()> {
    let bytes1 = read_input(&path1)?;
    let bytes2 = read_input(&path2)?;
    let f1: EctField = parse_json(&path1, &bytes1)?;
    let f2: EctField = parse_json(&path2, &bytes2)?;
    let ect = ect_distance(&f1, &f2).map_err(|e| CliError::new(ect_code(&e), e.to_string()))?;
    let sect = sect_distance(&sect_field(&f1), &sect_field(&f2))
        .map_err(|e| CliError::new(ect_code(&e), e.to_string()))?;
    println!("ect_dist {ect}");
    println!("sect_dist {sect}");
    Ok(())
}

fn cmd_bounds(curvature: f64, lengths: Vec<f64>, vertices: usize, eps: f64) -> CliResult<()> {
    let report = stability_bound(&StabilityInput {
        cell_lengths: lengths.clone(),
        curvature_bound: curvature,
        vertex_count: vertices,
        epsilon: eps,
    })
    .map_err(|e| CliError::new(EXIT_VALIDATION, e.to_string()))?;
    let mut value = serde_json::to_value(&report).expect("report serializes");
    let meta = meta_value(
        json!({"curvature": curvature, "lengths": lengths, "vertices": vertices, "eps": eps}),
        &[],
    );
    value
        .as_object_mut()
        .unwrap()
        .insert("meta".to_string(), meta);
    println!(
        "{}",
        serde_json::to_string_pretty(&value).expect("report serializes")
    );
    Ok(())
}

fn cmd_experiment(config_path: Option<PathBuf>, outdir: PathBuf) -> CliResult<()> {
    let (cfg, config_bytes): (ExperimentConfig, Vec<u8>) = match &config_path {
        Some(path) => {
            let bytes = read_input(path)?;
            (parse_json(path, &bytes)?, bytes)
        }
        None => (ExperimentConfig::default(), Vec::new()),
    };
    let result = run_consistency_experiment(&cfg)
        .map_err(|e| CliError::new(pipeline_code(&e), e.to_string()))?;
    std::fs::create_dir_all(&outdir).map_err(|e| {
        CliError::new(
            EXIT_RUNTIME,
            format!("cannot create {}: {e}", outdir.display()),
        )
    })?;
    let inputs: Vec<(&str, &[u8])> = if config_bytes.is_empty() {
        Vec::new()
    } else {
        vec![("config", config_bytes.as_slice())]
    };
    let meta = meta_value(
        serde_json::to_value(&cfg).expect("config serializes"),
        &inputs,
    );
    let csv = format!("{}{}", csv_meta_header(&meta), render_rows_csv(&result));
    write_output(&outdir.join("rows.csv"), &csv)?;
    let summary = json!({
        "config": result.config,
        "truth": result.truth,
        "summary": result.summary,
        "failed_runs": result.failed_runs,
        "meta": meta,
    });
    write_output(
        &outdir.join("summary.json"),
        &format!(
            "{}\n",
            serde_json::to_string_pretty(&summary).expect("summary serializes")
        ),
    )?;
    if result.failed_runs > 0 {
        return Err(CliError::new(
            EXIT_RUNTIME,
            format!(
                "{} runs failed; partial results written",
                result.failed_runs
            ),
        ));
    }
    Ok(())
}

fn cmd_validate(shape_path: PathBuf) -> CliResult<()> {
    let bytes = read_input(&shape_path)?;
    let doc: ShapeDoc = parse_json(&shape_path, &bytes)?;
    let (complex, emb) = doc.into_parts();
    let report = validate(&complex, &emb);
    println!(
        "{}",
        serde_json::to_string_pretty(&report).expect("report serializes")
    );
    if report.is_valid() {
        Ok(())
    } else {
        Err(CliError::new(
            EXIT_VALIDATION,
            format!("{} violation(s)", report.violations.len()),
        ))
    }
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::GenCurve {
            preset,
            coeffs,
            out,
        } => cmd_gen_curve(preset, coeffs, out),
        Command::Sample {
            curve,
            n,
            sigma,
            seed,
            out,
        } => cmd_sample(curve, n, sigma, seed, out),
        Command::Smooth {
            samples,
            m_points,
            grid,
            sigma2,
            out,
        } => cmd_smooth(samples, m_points, grid, sigma2, out),
        Command::Ect {
            shape,
            directions,
            seed,
            a,
            out,
            out_json,
        } => cmd_ect(shape, directions, seed, a, out, out_json),
        Command::Sect { field, out } => cmd_sect(field, out),
        Command::Dist { field1, field2 } => cmd_dist(field1, field2),
        Command::Bounds {
            curvature,
            lengths,
            vertices,
            eps,
        } => cmd_bounds(curvature, lengths, vertices, eps),
        Command::Experiment { config, outdir } => cmd_experiment(config, outdir),
        Command::Validate { shape } => cmd_validate(shape),
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {}", e.message);
        std::process::exit(e.code);
    }
}
