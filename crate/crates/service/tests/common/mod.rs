#![allow(dead_code)]

use std::path::Path;
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use rekodx_service::{router, AppState, ModuleRegistry, SessionStore};
use serde_json::Value;
use tower::ServiceExt;

pub fn registry() -> Arc<ModuleRegistry> {
    Arc::new(ModuleRegistry::load_dir(&rekodx_testkit::bundled_dir()).unwrap())
}

pub fn app_in_memory() -> Router {
    router(AppState {
        registry: registry(),
        store: Arc::new(SessionStore::in_memory()),
    })
}

pub fn app_with_log(dir: &Path) -> Router {
    let registry = registry();
    let (store, _) = SessionStore::open(dir, &registry).unwrap();
    router(AppState {
        registry,
        store: Arc::new(store),
    })
}

pub struct Reply {
    pub status: StatusCode,
    pub bytes: Vec<u8>,
}

impl Reply {
    pub fn json(&self) -> Value {
        serde_json::from_slice(&self.bytes).unwrap_or_else(|e| panic!("not JSON ({e}): {:?}", String::from_utf8_lossy(&self.bytes)))
    }

    pub fn code(&self) -> String {
        self.json()["error"]["code"].as_str().unwrap().to_string()
    }
}

pub async fn call(app: &Router, method: Method, uri: &str, body: Option<Value>) -> Reply {
    let mut req = Request::builder().method(method).uri(uri);
    let body = match body {
        Some(v) => {
            req = req.header("content-type", "application/json");
            Body::from(v.to_string())
        }
        None => Body::empty(),
    };
    let resp = app.clone().oneshot(req.body(body).unwrap()).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
    Reply { status, bytes }
}

pub async fn get(app: &Router, uri: &str) -> Reply {
    call(app, Method::GET, uri, None).await
}

pub async fn post(app: &Router, uri: &str, body: Value) -> Reply {
    call(app, Method::POST, uri, Some(body)).await
}

pub async fn create(app: &Router, body: Value) -> String {
    let r = post(app, "/sessions", body).await;
    assert_eq!(r.status, StatusCode::CREATED, "{:?}", String::from_utf8_lossy(&r.bytes));
    r.json()["session_id"].as_str().unwrap().to_string()
}
