use std::collections::BTreeMap;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Query, State};
use axum::http::{header, HeaderValue, Method as HttpMethod, StatusCode, Uri};
use axum::response::{IntoResponse, Response};
use axum::Router;
use tokio::net::TcpListener;

use super::{Api, ApiRequest, Body, Method};

async fn dispatch(
    State(api): State<Arc<Api>>,
    method: HttpMethod,
    uri: Uri,
    Query(query): Query<BTreeMap<String, String>>,
    body: Bytes,
) -> Response {
    let method = match method {
        HttpMethod::GET => Method::Get,
        HttpMethod::POST => Method::Post,
        HttpMethod::DELETE => Method::Delete,
        _ => return StatusCode::METHOD_NOT_ALLOWED.into_response(),
    };
    let req = ApiRequest {
        method,
        path: uri.path().to_string(),
        query,
        body: body.to_vec(),
    };
    // sessions lock with std mutexes; keep them off the async workers
    let resp = match tokio::task::spawn_blocking(move || api.handle(&req)).await {
        Ok(r) => r,
        Err(_) => return StatusCode::INTERNAL_SERVER_ERROR.into_response(),
    };
    let status = StatusCode::from_u16(resp.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
    match resp.body {
        Body::Json(j) => (
            status,
            [(header::CONTENT_TYPE, HeaderValue::from_static("application/json"))],
            j.to_string(),
        )
            .into_response(),
        Body::Bytes { content_type, data } => (
            status,
            [(header::CONTENT_TYPE, HeaderValue::from_static(content_type))],
            data,
        )
            .into_response(),
    }
}

/// Every path goes through [`Api::handle`].
pub fn router(api: Arc<Api>) -> Router {
    Router::new().fallback(dispatch).with_state(api)
}

pub async fn serve(api: Arc<Api>, listener: TcpListener) -> std::io::Result<()> {
    axum::serve(listener, router(api)).await
}
