//! In-process chat server speaking the `/api/chat` protocol, for tests and
//! local dry runs.

use std::net::SocketAddr;
use std::sync::{Arc, Mutex};

use axum::extract::State;
use axum::http::StatusCode;
use axum::routing::post;
use axum::{Json, Router};
use serde_json::{json, Value};

type Responder = dyn Fn(&str) -> Result<String, StatusCode> + Send + Sync;

#[derive(Clone)]
struct StubState {
    responder: Arc<Responder>,
    requests: Arc<Mutex<Vec<Value>>>,
}

/// A running stub; requests are recorded verbatim.
pub struct ChatStub {
    pub addr: SocketAddr,
    requests: Arc<Mutex<Vec<Value>>>,
    task: tokio::task::JoinHandle<()>,
}

impl ChatStub {
    /// Serves on an ephemeral localhost port. The responder maps the user
    /// message content to a reply or an error status.
    pub async fn spawn<F>(responder: F) -> std::io::Result<ChatStub>
    where
        F: Fn(&str) -> Result<String, StatusCode> + Send + Sync + 'static,
    {
        let requests = Arc::new(Mutex::new(Vec::new()));
        let state = StubState {
            responder: Arc::new(responder),
            requests: requests.clone(),
        };
        let app = Router::new().route("/api/chat", post(chat)).with_state(state);
        let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await?;
        let addr = listener.local_addr()?;
        let task = tokio::spawn(async move {
            let _ = axum::serve(listener, app).await;
        });
        Ok(ChatStub { addr, requests, task })
    }

    pub fn endpoint(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn requests(&self) -> Vec<Value> {
        self.requests.lock().unwrap().clone()
    }
}

impl Drop for ChatStub {
    fn drop(&mut self) {
        self.task.abort();
    }
}

async fn chat(State(state): State<StubState>, Json(body): Json<Value>) -> (StatusCode, Json<Value>) {
    state.requests.lock().unwrap().push(body.clone());
    let content = body["messages"][0]["content"].as_str().unwrap_or_default();
    match (state.responder)(content) {
        Ok(reply) => (
            StatusCode::OK,
            Json(json!({"model": body["model"], "message": {"role": "assistant", "content": reply}, "done": true})),
        ),
        Err(status) => (status, Json(json!({"error": "stub failure"}))),
    }
}
