//! HTTP routes over [`SessionManager`].

use std::collections::HashMap;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Result, ServiceError};
use crate::manager::SessionManager;
use crate::session::{Report, SessionSpec, SessionSummary, Snapshot};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Created {
    pub session_id: String,
    #[serde(flatten)]
    pub summary: SessionSummary,
}

pub fn router(manager: Arc<SessionManager>) -> Router {
    Router::new()
        .route("/sessions", post(create))
        .route("/sessions/restore", post(restore))
        .route("/sessions/{id}", get(summary))
        .route("/sessions/{id}/suggest", post(suggest))
        .route("/sessions/{id}/report", post(report))
        .route("/sessions/{id}/ranking", get(ranking))
        .route("/sessions/{id}/snapshot", post(snapshot))
        .route("/sessions/{id}/reset", post(reset))
        .fallback(|| async { ServiceError::NotFound("no such route".into()) })
        .with_state(manager)
}

/// Parse a JSON body, naming the offending field on failure.
fn parse<T: DeserializeOwned>(body: &[u8]) -> Result<T> {
    let de = &mut serde_json::Deserializer::from_slice(body);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        if path == "." {
            ServiceError::Validation(inner.to_string())
        } else {
            ServiceError::Validation(format!("{path}: {inner}"))
        }
    })
}

type Shared = State<Arc<SessionManager>>;

async fn create(State(m): Shared, body: Bytes) -> Result<Response> {
    let spec: SessionSpec = parse(&body)?;
    let (session_id, summary) = m.create(&spec)?;
    Ok((
        StatusCode::CREATED,
        Json(Created {
            session_id,
            summary,
        }),
    )
        .into_response())
}

async fn restore(State(m): Shared, body: Bytes) -> Result<Response> {
    let snapshot = Snapshot::parse(&body)?;
    let (session_id, summary) = m.restore(&snapshot)?;
    Ok((
        StatusCode::CREATED,
        Json(Created {
            session_id,
            summary,
        }),
    )
        .into_response())
}

async fn summary(State(m): Shared, Path(id): Path<String>) -> Result<Response> {
    Ok(Json(m.summary(&id)?).into_response())
}

async fn suggest(State(m): Shared, Path(id): Path<String>) -> Result<Response> {
    Ok(Json(m.suggest(&id)?).into_response())
}

async fn report(State(m): Shared, Path(id): Path<String>, body: Bytes) -> Result<Response> {
    let report: Report = parse(&body)?;
    Ok(Json(m.report(&id, &report)?).into_response())
}

async fn ranking(
    State(m): Shared,
    Path(id): Path<String>,
    Query(q): Query<HashMap<String, String>>,
) -> Result<Response> {
    let x = match q.get("x") {
        None => 5,
        Some(raw) => raw.parse::<usize>().map_err(|_| {
            ServiceError::Validation(format!("x: `{raw}` is not a positive integer"))
        })?,
    };
    Ok(Json(m.ranking(&id, x)?).into_response())
}

async fn snapshot(State(m): Shared, Path(id): Path<String>) -> Result<Response> {
    Ok(Json(m.snapshot(&id)?).into_response())
}

async fn reset(State(m): Shared, Path(id): Path<String>) -> Result<Response> {
    Ok(Json(m.reset(&id)?).into_response())
}
