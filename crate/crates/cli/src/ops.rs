//! Session operations shared by the command line and the HTTP service.
//! Every mutation of a session goes through one of these functions.

use std::collections::BTreeMap;
use std::str::FromStr;

use batchedit::direction::LossTerms;
use batchedit::evaluation::{linearity, spread, CorrelationReport, SpreadReport};
use batchedit::raster::{attribute_index, attributes_to_glyph, render, ImageRaster};
use batchedit::solver::{solve_edit, AttributeGoal, EditTarget, SolverConfig};
use batchedit::{
    features, sample_latents, DirectionFitConfig, EditPair, FitReport, GeneratorSpec, LatentCode, Session,
};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{ApiError, ApiResult};

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateRequest {
    #[serde(default)]
    pub id: Option<String>,
    #[serde(default)]
    pub generator: Option<GeneratorSpec>,
}

pub fn create_session(req: CreateRequest) -> ApiResult<Session> {
    let spec = req.generator.unwrap_or_default();
    Ok(match req.id {
        Some(id) => {
            check_id(&id)?;
            Session::create_with_id(spec, id)?
        }
        None => Session::create(spec)?,
    })
}

/// Ids double as file names, so keep them to a conservative alphabet.
pub fn check_id(id: &str) -> ApiResult<()> {
    let ok = !id.is_empty()
        && id.len() <= 128
        && !id.starts_with('.')
        && id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'));
    if ok {
        Ok(())
    } else {
        Err(ApiError::bad_request(format!("invalid session id {id:?}")))
    }
}

pub fn resolve_attribute(session: &Session, name: &str) -> ApiResult<usize> {
    let k = session.params().attribute_count();
    match attribute_index(name) {
        Some(i) if i < k => Ok(i),
        _ => Err(ApiError::bad_request(format!("unknown attribute {name:?}"))
            .with_detail(serde_json::json!({ "attribute_count": k }))),
    }
}

/// Decode a JSON request body into `T`, reporting failures as bad requests.
pub fn decode<T: DeserializeOwned>(value: Value) -> ApiResult<T> {
    serde_json::from_value(value).map_err(|e| ApiError::bad_request(format!("invalid request body: {e}")))
}

fn has_key(value: &Value, key: &str) -> bool {
    value.as_object().is_some_and(|o| o.contains_key(key))
}

/// A raw example pair, or a solver request producing one.
#[derive(Clone, Debug)]
pub enum ExampleRequest {
    Pair(PairRequest),
    Solve(SolveRequest),
}

impl ExampleRequest {
    /// Bodies with a `targets` field are solver requests; anything else
    /// must be a `{start, end}` pair.
    pub fn from_value(value: Value) -> ApiResult<Self> {
        if has_key(&value, "targets") {
            decode(value).map(ExampleRequest::Solve)
        } else {
            decode(value).map(ExampleRequest::Pair)
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairRequest {
    pub start: LatentCode,
    pub end: LatentCode,
    /// Chain onto the current example instead of replacing it.
    #[serde(default)]
    pub compose: bool,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveRequest {
    /// Attribute name (or index) to target value.
    pub targets: BTreeMap<String, f64>,
    /// Attributes held at their starting value; `"all"` anchors every
    /// attribute without a target. Anything else is left free.
    #[serde(default)]
    pub anchors: Vec<String>,
    #[serde(default)]
    pub compose: bool,
    /// Explicit starting latent.
    #[serde(default)]
    pub start: Option<LatentCode>,
    /// Start from this test latent.
    #[serde(default)]
    pub start_index: Option<usize>,
    /// Seed for a freshly drawn start; defaults to the generator seed.
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub solver: Option<SolverConfig>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SolveSummary {
    pub target_error: f64,
    pub initial_loss: f64,
    pub final_loss: f64,
    pub steps: usize,
}

fn install_pair(session: &mut Session, pair: EditPair, compose: bool) -> ApiResult<()> {
    if compose {
        session.compose_edits(pair)?;
    } else {
        session.set_example_edit(pair)?;
    }
    Ok(())
}

fn solve_start(session: &Session, req: &SolveRequest) -> ApiResult<LatentCode> {
    if req.compose {
        if req.start.is_some() || req.start_index.is_some() {
            return Err(ApiError::bad_request(
                "a composed edit starts at the current example end",
            ));
        }
        return Ok(session.example().ok_or(batchedit::Error::MissingExample)?.end.clone());
    }
    match (&req.start, req.start_index) {
        (Some(_), Some(_)) => Err(ApiError::bad_request("give either start or start_index, not both")),
        (Some(w), None) => Ok(w.clone()),
        (None, Some(i)) => session.test_latents().get(i).cloned().ok_or_else(|| {
            batchedit::Error::IndexOutOfRange {
                index: i,
                count: session.test_latents().len(),
            }
            .into()
        }),
        (None, None) => {
            let seed = req.seed.unwrap_or(session.spec().seed);
            Ok(sample_latents(seed, 1, session.dim()).remove(0))
        }
    }
}

fn edit_target(session: &Session, req: &SolveRequest) -> ApiResult<EditTarget> {
    let k = session.params().attribute_count();
    let mut goals = vec![AttributeGoal::Free; k];
    for name in &req.anchors {
        if name == "all" {
            goals.iter_mut().for_each(|g| *g = AttributeGoal::Anchor);
        } else {
            goals[resolve_attribute(session, name)?] = AttributeGoal::Anchor;
        }
    }
    for (name, value) in &req.targets {
        goals[resolve_attribute(session, name)?] = AttributeGoal::Target(*value);
    }
    Ok(EditTarget::new(goals)?)
}

/// Install an example edit. Returns solver statistics when one ran.
pub fn apply_example(session: &mut Session, req: ExampleRequest) -> ApiResult<Option<SolveSummary>> {
    match req {
        ExampleRequest::Pair(p) => {
            let pair = EditPair::new(p.start, p.end)?;
            install_pair(session, pair, p.compose)?;
            Ok(None)
        }
        ExampleRequest::Solve(req) => {
            let start = solve_start(session, &req)?;
            let target = edit_target(session, &req)?;
            let cfg = req.solver.unwrap_or_default();
            let out = solve_edit(session.params(), &start, &target, &cfg)?;
            let summary = SolveSummary {
                target_error: out.target_error,
                initial_loss: out.trace.first().copied().unwrap_or(0.0),
                final_loss: out.trace.last().copied().unwrap_or(0.0),
                steps: out.trace.len().saturating_sub(1),
            };
            install_pair(session, out.pair, req.compose)?;
            Ok(Some(summary))
        }
    }
}

#[derive(Clone, Debug)]
pub enum LatentsRequest {
    Explicit(Vec<LatentCode>),
    Sampled { count: usize, seed: Option<u64> },
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ExplicitLatents {
    latents: Vec<LatentCode>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SampledLatents {
    count: usize,
    #[serde(default)]
    seed: Option<u64>,
}

impl LatentsRequest {
    /// `{latents: [[...], ...]}` or `{count, seed?}`.
    pub fn from_value(value: Value) -> ApiResult<Self> {
        if has_key(&value, "latents") {
            let body: ExplicitLatents = decode(value)?;
            Ok(LatentsRequest::Explicit(body.latents))
        } else {
            let body: SampledLatents = decode(value)?;
            Ok(LatentsRequest::Sampled {
                count: body.count,
                seed: body.seed,
            })
        }
    }
}

/// Append test latents. A sampled batch without a seed uses one derived
/// from the generator seed and the current batch size, so repeated calls
/// draw fresh latents deterministically.
pub fn add_latents(session: &mut Session, req: LatentsRequest) -> ApiResult<usize> {
    match req {
        LatentsRequest::Explicit(latents) => session.add_test_latents(latents)?,
        LatentsRequest::Sampled { count, seed } => {
            let seed = seed.unwrap_or_else(|| {
                session
                    .spec()
                    .seed
                    .wrapping_add(1)
                    .wrapping_add(session.test_latents().len() as u64)
            });
            session.sample_test_latents(seed, count)?;
        }
    }
    Ok(session.test_latents().len())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FitSummary {
    pub iterations: usize,
    pub initial_losses: Option<LossTerms>,
    pub final_losses: LossTerms,
    pub magnitude: f64,
    pub wall_time_s: f64,
}

impl FitSummary {
    fn new(report: &FitReport) -> Self {
        Self {
            iterations: report.trace.len(),
            initial_losses: report.trace.first().copied(),
            final_losses: report.final_losses,
            magnitude: batchedit::linalg::norm(&report.final_delta),
            wall_time_s: report.wall_time.as_secs_f64(),
        }
    }
}

pub fn fit(session: &mut Session, cfg: &DirectionFitConfig) -> ApiResult<(FitSummary, FitReport)> {
    let report = session.fit(cfg)?.clone();
    Ok((FitSummary::new(&report), report))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlphasResponse {
    pub slider_s: f64,
    pub alphas: Vec<f64>,
}

fn alphas_of(session: &Session) -> ApiResult<AlphasResponse> {
    let alphas = session.alphas().ok_or(batchedit::Error::MissingAlphas)?;
    Ok(AlphasResponse {
        slider_s: session.slider(),
        alphas: alphas.as_slice().to_vec(),
    })
}

pub fn transfer(session: &mut Session) -> ApiResult<AlphasResponse> {
    session.transfer()?;
    alphas_of(session)
}

#[derive(Clone, Copy, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RescaleRequest {
    pub s: f64,
}

pub fn rescale(session: &mut Session, s: f64) -> ApiResult<AlphasResponse> {
    session.rescale(s)?;
    alphas_of(session)
}

pub fn alphas(session: &Session) -> ApiResult<AlphasResponse> {
    alphas_of(session)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ImageState {
    Pre,
    #[default]
    Post,
}

impl FromStr for ImageState {
    type Err = ApiError;

    fn from_str(s: &str) -> ApiResult<Self> {
        match s {
            "pre" => Ok(ImageState::Pre),
            "post" => Ok(ImageState::Post),
            other => Err(ApiError::bad_request(format!(
                "state must be pre or post, got {other:?}"
            ))),
        }
    }
}

pub fn render_latent(session: &Session, w: &LatentCode) -> ApiResult<ImageRaster> {
    let glyph = attributes_to_glyph(&features(session.params(), w)?)?;
    Ok(render(&glyph))
}

/// Raster of test latent `index`, before or after transfer.
pub fn render_test(session: &Session, index: usize, state: ImageState) -> ApiResult<ImageRaster> {
    let count = session.test_latents().len();
    if index >= count {
        return Err(batchedit::Error::IndexOutOfRange { index, count }.into());
    }
    let w = match state {
        ImageState::Pre => session.test_latents()[index].clone(),
        ImageState::Post => session.edited_latent(index)?,
    };
    render_latent(session, &w)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvalReport {
    pub attribute: String,
    pub attribute_index: usize,
    pub std_ratio: f64,
    pub spread: SpreadReport,
    /// Attribute regressed on `w·n` over the unedited test latents.
    pub linearity: CorrelationReport,
}

pub fn evaluate(session: &Session, attribute: &str) -> ApiResult<EvalReport> {
    let index = resolve_attribute(session, attribute)?;
    let report = spread(session.params(), session, index, None)?;
    let dir = session.direction().ok_or(batchedit::Error::MissingDirection)?;
    let lin = linearity(session.params(), dir, session.test_latents(), index)?;
    Ok(EvalReport {
        attribute: batchedit::raster::ATTRIBUTE_NAMES
            .get(index)
            .map_or_else(|| index.to_string(), |n| n.to_string()),
        attribute_index: index,
        std_ratio: report.std_ratio(),
        spread: report,
        linearity: lin,
    })
}
