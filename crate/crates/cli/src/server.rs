//! HTTP/JSON front end over a [`SessionStore`].

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::header;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use batchedit::session::SessionFile;
use batchedit::DirectionFitConfig;
use serde::de::DeserializeOwned;
use serde_json::Value;

use crate::error::{ApiError, ApiResult};
use crate::ops::{self, AlphasResponse, EvalReport, ExampleRequest, ImageState, LatentsRequest, RescaleRequest};
use crate::store::SessionStore;

type Shared = Arc<SessionStore>;

pub fn router(store: Shared) -> Router {
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/example", post(set_example))
        .route("/sessions/{id}/latents", post(add_latents))
        .route("/sessions/{id}/fit", post(fit))
        .route("/sessions/{id}/transfer", post(transfer))
        .route("/sessions/{id}/rescale", post(rescale))
        .route("/sessions/{id}/alphas", get(alphas))
        .route("/sessions/{id}/render/{index}", get(render))
        .route("/sessions/{id}/eval", get(eval))
        .fallback(|| async { ApiError::not_found("no such endpoint") })
        .with_state(store)
}

pub async fn serve(store: Shared, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    eprintln!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(store))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}

fn body_value(body: &Bytes) -> ApiResult<Value> {
    if body.iter().all(u8::is_ascii_whitespace) {
        return Ok(Value::Object(Default::default()));
    }
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(format!("invalid JSON body: {e}")))
}

fn parse<T: DeserializeOwned>(body: &Bytes) -> ApiResult<T> {
    ops::decode(body_value(body)?)
}

/// Run blocking session work off the async executor.
async fn blocking<T: Send + 'static>(f: impl FnOnce() -> ApiResult<T> + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::internal(format!("worker failed: {e}")))?
}

async fn create_session(State(store): State<Shared>, body: Bytes) -> ApiResult<Json<SessionFile>> {
    let req: ops::CreateRequest = parse(&body)?;
    blocking(move || store.insert(ops::create_session(req)?))
        .await
        .map(Json)
}

async fn get_session(State(store): State<Shared>, Path(id): Path<String>) -> ApiResult<Json<SessionFile>> {
    store.read(&id, |s| Ok(s.to_file())).map(Json)
}

async fn set_example(State(store): State<Shared>, Path(id): Path<String>, body: Bytes) -> ApiResult<Json<SessionFile>> {
    let req = ExampleRequest::from_value(body_value(&body)?)?;
    blocking(move || {
        store.update(&id, |s| {
            ops::apply_example(s, req)?;
            Ok(s.to_file())
        })
    })
    .await
    .map(Json)
}

async fn add_latents(State(store): State<Shared>, Path(id): Path<String>, body: Bytes) -> ApiResult<Json<SessionFile>> {
    let req = LatentsRequest::from_value(body_value(&body)?)?;
    blocking(move || {
        store.update(&id, |s| {
            ops::add_latents(s, req)?;
            Ok(s.to_file())
        })
    })
    .await
    .map(Json)
}

async fn fit(State(store): State<Shared>, Path(id): Path<String>, body: Bytes) -> ApiResult<Json<SessionFile>> {
    let cfg: DirectionFitConfig = parse(&body)?;
    blocking(move || {
        store.update(&id, |s| {
            ops::fit(s, &cfg)?;
            Ok(s.to_file())
        })
    })
    .await
    .map(Json)
}

async fn transfer(State(store): State<Shared>, Path(id): Path<String>) -> ApiResult<Json<AlphasResponse>> {
    blocking(move || store.update(&id, ops::transfer)).await.map(Json)
}

async fn rescale(State(store): State<Shared>, Path(id): Path<String>, body: Bytes) -> ApiResult<Json<AlphasResponse>> {
    let req: RescaleRequest = parse(&body)?;
    blocking(move || store.update(&id, |s| ops::rescale(s, req.s)))
        .await
        .map(Json)
}

async fn alphas(State(store): State<Shared>, Path(id): Path<String>) -> ApiResult<Json<AlphasResponse>> {
    store.read(&id, ops::alphas).map(Json)
}

async fn render(
    State(store): State<Shared>,
    Path((id, index)): Path<(String, String)>,
    Query(query): Query<HashMap<String, String>>,
) -> ApiResult<Response> {
    let index: usize = index
        .parse()
        .map_err(|_| ApiError::bad_request(format!("invalid index {index:?}")))?;
    let state = match query.get("state") {
        Some(s) => s.parse()?,
        None => ImageState::default(),
    };
    let png = blocking(move || store.read(&id, |s| Ok(ops::render_test(s, index, state)?.to_png()?))).await?;
    Ok(([(header::CONTENT_TYPE, "image/png")], png).into_response())
}

async fn eval(
    State(store): State<Shared>,
    Path(id): Path<String>,
    Query(query): Query<HashMap<String, String>>,
) -> ApiResult<Json<EvalReport>> {
    let attr = query
        .get("attr")
        .cloned()
        .ok_or_else(|| ApiError::bad_request("missing attr query parameter"))?;
    store.read(&id, |s| ops::evaluate(s, &attr)).map(Json)
}
