use std::net::{Ipv4Addr, SocketAddr};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use batchedit::raster::ImageRaster;
use batchedit::solver::SolverConfig;
use batchedit::{DirectionFitConfig, GeneratorSpec, Session};
use batchedit_service::ops::{self, CreateRequest, ExampleRequest, ImageState, LatentsRequest, SolveRequest};
use batchedit_service::{server, ApiError, ApiResult, SessionStore};
use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Parser)]
#[command(
    name = "batchedit",
    version,
    about = "Fit an edit on one example and transfer it to a batch"
)]
struct Cli {
    /// Session file to operate on.
    #[arg(long, global = true, env = "BATCHEDIT_SESSION", default_value = "session.json")]
    session: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Create a new session file.
    Init {
        #[arg(long)]
        id: Option<String>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 32)]
        d: usize,
        #[arg(long, default_value_t = 64)]
        h: usize,
        #[arg(long, default_value_t = 5)]
        k: usize,
        /// Overwrite an existing file.
        #[arg(long)]
        force: bool,
    },
    /// Append N seeded test latents.
    Sample {
        #[arg(short = 'n', long = "count")]
        count: usize,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Produce the example edit with the attribute solver.
    EditExample {
        /// Attribute to target (repeatable, paired with --target).
        #[arg(long = "attr", required = true)]
        attrs: Vec<String>,
        #[arg(long = "target", required = true, allow_negative_numbers = true)]
        targets: Vec<f64>,
        /// Attribute to hold fixed (repeatable; `all` anchors every untargeted one).
        #[arg(long = "anchor")]
        anchors: Vec<String>,
        /// Chain onto the current example instead of replacing it.
        #[arg(long)]
        compose: bool,
        /// Start from this test latent instead of a seeded draw.
        #[arg(long)]
        start_index: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        solver_lr: Option<f64>,
        #[arg(long)]
        proximity: Option<f64>,
    },
    /// Use a raw `{start, end}` JSON pair as the example.
    ImportExample { file: PathBuf },
    /// Fit the edit direction.
    Fit {
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long)]
        iters: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        /// Target hyperplane distance in unit-normal units.
        #[arg(long, allow_negative_numbers = true)]
        distance: Option<f64>,
        /// Write the per-iteration loss trace as CSV.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Compute editing strengths for every test latent.
    Transfer,
    /// Move the slider and recompute strengths without refitting.
    Rescale {
        #[arg(short = 's', long = "strength", allow_negative_numbers = true)]
        s: f64,
    },
    /// Chain a second `{start, end}` pair onto the example.
    Compose { file: PathBuf },
    /// Attribute spread and linearity report.
    Eval {
        #[arg(long)]
        attr: String,
        /// Write per-latent pre/post values as CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a raster for every test latent.
    Render {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Png)]
        format: Format,
        #[arg(long, value_enum, default_value_t = StateArg::Post)]
        state: StateArg,
    },
    /// Serve sessions over HTTP.
    Serve {
        #[arg(long, env = "BATCHEDIT_PORT", default_value_t = 8080)]
        port: u16,
        /// Directory for session files (defaults to the session file's directory).
        #[arg(long)]
        dir: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Pgm,
    Png,
}

#[derive(Clone, Copy, ValueEnum)]
enum StateArg {
    Pre,
    Post,
    Both,
}

fn io_err(path: &Path, e: std::io::Error) -> ApiError {
    let msg = format!("{}: {e}", path.display());
    if e.kind() == std::io::ErrorKind::NotFound {
        ApiError::not_found(msg)
    } else {
        ApiError::internal(msg)
    }
}

fn load(path: &Path) -> ApiResult<Session> {
    if !path.exists() {
        return Err(ApiError::not_found(format!(
            "session file {} does not exist; run init",
            path.display()
        )));
    }
    Ok(Session::load(path)?)
}

fn read_json(path: &Path) -> ApiResult<serde_json::Value> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    serde_json::from_str(&text).map_err(|e| ApiError::bad_request(format!("{}: {e}", path.display())))
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> ApiResult<()> {
    std::fs::write(path, bytes).map_err(|e| io_err(path, e))
}

fn print_json(value: &impl Serialize) -> ApiResult<()> {
    let text = serde_json::to_string(value).map_err(|e| ApiError::internal(e.to_string()))?;
    println!("{text}");
    Ok(())
}

/// Load, apply one operation, save.
fn mutate<T>(path: &Path, f: impl FnOnce(&mut Session) -> ApiResult<T>) -> ApiResult<T> {
    let mut session = load(path)?;
    let out = f(&mut session)?;
    session.save(path)?;
    Ok(out)
}

fn alpha_summary(r: &ops::AlphasResponse) -> serde_json::Value {
    let min = r.alphas.iter().copied().fold(f64::INFINITY, f64::min);
    let max = r.alphas.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    serde_json::json!({ "slider_s": r.slider_s, "count": r.alphas.len(), "min_alpha": min, "max_alpha": max })
}

fn encode(img: &ImageRaster, format: Format) -> ApiResult<Vec<u8>> {
    Ok(match format {
        Format::Pgm => img.to_pgm(),
        Format::Png => img.to_png()?,
    })
}

fn run(cli: Cli) -> ApiResult<()> {
    let path = cli.session.as_path();
    match cli.command {
        Command::Init {
            id,
            seed,
            d,
            h,
            k,
            force,
        } => {
            if path.exists() && !force {
                return Err(ApiError::conflict(format!(
                    "{} already exists (use --force)",
                    path.display()
                )));
            }
            let session = ops::create_session(CreateRequest {
                id,
                generator: Some(GeneratorSpec { seed, d, h, k }),
            })?;
            session.save(path)?;
            print_json(&serde_json::json!({ "id": session.id(), "path": path }))
        }
        Command::Sample { count, seed } => {
            let total = mutate(path, |s| ops::add_latents(s, LatentsRequest::Sampled { count, seed }))?;
            print_json(&serde_json::json!({ "test_latents": total }))
        }
        Command::EditExample {
            attrs,
            targets,
            anchors,
            compose,
            start_index,
            seed,
            steps,
            solver_lr,
            proximity,
        } => {
            if attrs.len() != targets.len() {
                return Err(ApiError::bad_request(format!(
                    "{} --attr values but {} --target values",
                    attrs.len(),
                    targets.len()
                )));
            }
            let defaults = SolverConfig::default();
            let req = SolveRequest {
                targets: attrs.into_iter().zip(targets).collect(),
                anchors,
                compose,
                start: None,
                start_index,
                seed,
                solver: Some(SolverConfig {
                    steps: steps.unwrap_or(defaults.steps),
                    learning_rate: solver_lr.unwrap_or(defaults.learning_rate),
                    proximity: proximity.unwrap_or(defaults.proximity),
                }),
            };
            let summary = mutate(path, |s| ops::apply_example(s, ExampleRequest::Solve(req)))?;
            print_json(&summary)
        }
        Command::ImportExample { file } => {
            let req = ExampleRequest::from_value(read_json(&file)?)?;
            mutate(path, |s| ops::apply_example(s, req))?;
            print_json(&serde_json::json!({ "example": file }))
        }
        Command::Compose { file } => {
            let mut value = read_json(&file)?;
            if let Some(obj) = value.as_object_mut() {
                obj.insert("compose".into(), true.into());
            }
            let req = ExampleRequest::from_value(value)?;
            mutate(path, |s| ops::apply_example(s, req))?;
            print_json(&serde_json::json!({ "composed": file }))
        }
        Command::Fit {
            lambda,
            iters,
            lr,
            distance,
            report,
        } => {
            let defaults = DirectionFitConfig::default();
            let cfg = DirectionFitConfig {
                lambda: lambda.unwrap_or(defaults.lambda),
                iterations: iters.unwrap_or(defaults.iterations),
                learning_rate: lr.unwrap_or(defaults.learning_rate),
                target_distance: distance,
                ..defaults
            };
            let (summary, full) = mutate(path, |s| ops::fit(s, &cfg))?;
            if let Some(csv) = report {
                write(&csv, full.to_csv())?;
            }
            print_json(&summary)
        }
        Command::Transfer => print_json(&alpha_summary(&mutate(path, ops::transfer)?)),
        Command::Rescale { s } => print_json(&alpha_summary(&mutate(path, |x| ops::rescale(x, s))?)),
        Command::Eval { attr, out } => {
            let session = load(path)?;
            let report = ops::evaluate(&session, &attr)?;
            if let Some(csv) = out {
                write(&csv, report.spread.to_csv())?;
            }
            print_json(&serde_json::json!({
                "attribute": report.attribute,
                "target_value": report.spread.target_value,
                "pre_std": report.spread.pre_std,
                "post_std": report.spread.post_std,
                "std_ratio": report.std_ratio,
                "pre_mae": report.spread.pre_mae,
                "post_mae": report.spread.post_mae,
                "r_squared": report.linearity.r_squared,
                "slope": report.linearity.slope,
            }))
        }
        Command::Render { out, format, state } => {
            let session = load(path)?;
            std::fs::create_dir_all(&out).map_err(|e| io_err(&out, e))?;
            let ext = match format {
                Format::Pgm => "pgm",
                Format::Png => "png",
            };
            let states: &[ImageState] = match state {
                StateArg::Pre => &[ImageState::Pre],
                StateArg::Post => &[ImageState::Post],
                StateArg::Both => &[ImageState::Pre, ImageState::Post],
            };
            let mut written = 0usize;
            if let Some(pair) = session.example() {
                for (name, w) in [("example_start", &pair.start), ("example_end", &pair.end)] {
                    write(
                        &out.join(format!("{name}.{ext}")),
                        encode(&ops::render_latent(&session, w)?, format)?,
                    )?;
                    written += 1;
                }
            }
            for &st in states {
                let tag = match st {
                    ImageState::Pre => "pre",
                    ImageState::Post => "post",
                };
                for i in 0..session.test_latents().len() {
                    let img = ops::render_test(&session, i, st)?;
                    write(&out.join(format!("{tag}_{i:04}.{ext}")), encode(&img, format)?)?;
                    written += 1;
                }
            }
            print_json(&serde_json::json!({ "written": written, "dir": out }))
        }
        Command::Serve { port, dir } => {
            let dir = dir.unwrap_or_else(|| match path.parent() {
                Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
                _ => PathBuf::from("."),
            });
            let store = SessionStore::open(dir)?;
            if path.exists() {
                let id = store.register_file(path)?;
                eprintln!("serving session {id} from {}", path.display());
            }
            let runtime = tokio::runtime::Runtime::new().map_err(|e| ApiError::internal(e.to_string()))?;
            let addr = SocketAddr::from((Ipv4Addr::LOCALHOST, port));
            runtime
                .block_on(server::serve(Arc::new(store), addr))
                .map_err(|e| ApiError::internal(format!("server on {addr}: {e}")))
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let err = ApiError::bad_request(e.kind().to_string()).with_detail(e.render().to_string().into());
            eprintln!("{}", err.to_json());
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("{}", err.to_json());
            ExitCode::FAILURE
        }
    }
}
