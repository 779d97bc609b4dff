//! Live HTTP service for the operator panel.
//!
//! One task owns the [`Session`]. HTTP handlers talk to it over a request
//! channel and receive owned copies, and stream subscribers get serialized
//! [`StreamMessage`]s from a broadcast channel. Nothing mutable is shared.

use std::convert::Infallible;
use std::sync::Arc;
use std::time::Duration;

use axum::extract::State;
use axum::http::{header, StatusCode};
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use colorsort_core::service::{CommandAck, CommandError, StreamMessage};
use colorsort_core::trace::TraceFile;
use colorsort_core::{Session, Snapshot};
use futures::{Stream, StreamExt};
use serde::Deserialize;
use tokio::sync::{broadcast, mpsc, oneshot};
use tokio::time::{Instant, MissedTickBehavior};

#[derive(Debug, Clone, Copy)]
pub struct ServeConfig {
    /// Simulated seconds per wall-clock second. 0 leaves time to
    /// `POST /api/step`.
    pub speed: f64,
    /// Stream messages per wall-clock second.
    pub rate_hz: f64,
}

impl Default for ServeConfig {
    fn default() -> Self {
        ServeConfig {
            speed: 1.0,
            rate_hz: 10.0,
        }
    }
}

enum Request {
    Snapshot(oneshot::Sender<Snapshot>),
    Command(String, oneshot::Sender<Result<CommandAck, CommandError>>),
    Step(u64, oneshot::Sender<Result<Snapshot, CommandError>>),
    Trace(oneshot::Sender<String>),
}

/// Cheap to clone; every clone talks to the same session task.
#[derive(Clone)]
pub struct Handle {
    requests: mpsc::Sender<Request>,
    stream: broadcast::Sender<Arc<str>>,
}

fn error(code: &str, message: impl Into<String>) -> CommandError {
    CommandError {
        code: code.to_string(),
        message: message.into(),
    }
}

fn gone() -> CommandError {
    error("unavailable", "session task has stopped")
}

impl Handle {
    async fn ask<T>(
        &self,
        make: impl FnOnce(oneshot::Sender<T>) -> Request,
    ) -> Result<T, CommandError> {
        let (tx, rx) = oneshot::channel();
        self.requests.send(make(tx)).await.map_err(|_| gone())?;
        rx.await.map_err(|_| gone())
    }

    pub async fn snapshot(&self) -> Result<Snapshot, CommandError> {
        self.ask(Request::Snapshot).await
    }

    pub async fn command(&self, body: String) -> Result<CommandAck, CommandError> {
        self.ask(|tx| Request::Command(body, tx)).await?
    }

    pub async fn step(&self, dt_us: u64) -> Result<Snapshot, CommandError> {
        self.ask(|tx| Request::Step(dt_us, tx)).await?
    }

    pub async fn trace(&self) -> Result<String, CommandError> {
        self.ask(Request::Trace).await
    }

    pub fn subscribe(&self) -> broadcast::Receiver<Arc<str>> {
        self.stream.subscribe()
    }
}

/// Starts the session task on the current runtime.
pub fn spawn(session: Session, config: ServeConfig) -> Handle {
    let (requests, rx) = mpsc::channel(64);
    let (stream, _) = broadcast::channel(64);
    tokio::spawn(drive(session, config, rx, stream.clone()));
    Handle { requests, stream }
}

async fn drive(
    mut session: Session,
    config: ServeConfig,
    mut requests: mpsc::Receiver<Request>,
    stream: broadcast::Sender<Arc<str>>,
) {
    let period = Duration::from_secs_f64(1.0 / config.rate_hz.max(0.1));
    let mut ticker = tokio::time::interval(period);
    ticker.set_missed_tick_behavior(MissedTickBehavior::Skip);
    let mut last = Instant::now();
    let mut carry_us = 0.0;
    let mut cursor = session.engine().events().len() as u64;

    loop {
        tokio::select! {
            _ = ticker.tick() => {
                let now = Instant::now();
                if config.speed > 0.0 && session.halted().is_none() {
                    let want = (now - last).as_secs_f64() * 1e6 * config.speed + carry_us;
                    let dt = want.floor();
                    carry_us = want - dt;
                    // a halt is reported through the snapshot
                    let _ = session.advance(dt as u64);
                }
                last = now;
                let msg = StreamMessage {
                    snapshot: session.snapshot(),
                    events: session.events_since(cursor).to_vec(),
                };
                cursor = msg.snapshot.event_count;
                if stream.receiver_count() > 0 {
                    let text = serde_json::to_string(&msg).expect("stream message serializes");
                    let _ = stream.send(text.into());
                }
            }
            req = requests.recv() => match req {
                None => break,
                Some(Request::Snapshot(tx)) => {
                    let _ = tx.send(session.snapshot());
                }
                Some(Request::Command(body, tx)) => {
                    let reply = if let Some(h) = session.halted() {
                        Err(error("halted", h.to_string()))
                    } else {
                        session.submit_json(&body).map(|accepted| CommandAck {
                            accepted,
                            queued_at_us: session.now_us(),
                        })
                    };
                    let _ = tx.send(reply);
                }
                Some(Request::Step(dt, tx)) => {
                    let reply = session
                        .advance(dt)
                        .map(|_| session.snapshot())
                        .map_err(|e| error("halted", e.to_string()));
                    let _ = tx.send(reply);
                }
                Some(Request::Trace(tx)) => {
                    let e = session.engine();
                    let t = TraceFile::new(session.scenario(), e.events().to_vec(), e.metrics());
                    let _ = tx.send(t.to_jsonl());
                }
            }
        }
    }
}

struct ApiError(StatusCode, CommandError);

impl From<CommandError> for ApiError {
    fn from(e: CommandError) -> Self {
        let status = match e.code.as_str() {
            "halted" => StatusCode::CONFLICT,
            "unavailable" => StatusCode::SERVICE_UNAVAILABLE,
            _ => StatusCode::BAD_REQUEST,
        };
        ApiError(status, e)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(self.1)).into_response()
    }
}

pub fn router(handle: Handle) -> Router {
    Router::new()
        .route("/api/snapshot", get(get_snapshot))
        .route("/api/command", post(post_command))
        .route("/api/step", post(post_step))
        .route("/api/trace", get(get_trace))
        .route("/api/stream", get(get_stream))
        .with_state(handle)
}

async fn get_snapshot(State(h): State<Handle>) -> Result<Json<Snapshot>, ApiError> {
    Ok(Json(h.snapshot().await?))
}

async fn post_command(State(h): State<Handle>, body: String) -> Result<Json<CommandAck>, ApiError> {
    Ok(Json(h.command(body).await?))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct StepRequest {
    dt_us: u64,
}

async fn post_step(State(h): State<Handle>, body: String) -> Result<Json<Snapshot>, ApiError> {
    let req: StepRequest =
        serde_json::from_str(&body).map_err(|e| error("malformed", e.to_string()))?;
    Ok(Json(h.step(req.dt_us).await?))
}

async fn get_trace(State(h): State<Handle>) -> Result<Response, ApiError> {
    let body = h.trace().await?;
    Ok(([(header::CONTENT_TYPE, "application/x-ndjson")], body).into_response())
}

/// Opens with the current snapshot, then relays every published message.
/// A subscriber that falls behind skips ahead; `event_count` and the
/// event `seq` numbers let it notice the gap.
async fn get_stream(
    State(h): State<Handle>,
) -> Result<Sse<impl Stream<Item = Result<Event, Infallible>>>, ApiError> {
    let rx = h.subscribe();
    let first = StreamMessage {
        snapshot: h.snapshot().await?,
        events: Vec::new(),
    };
    let first = serde_json::to_string(&first).expect("stream message serializes");
    let head = futures::stream::once(async move { first.into() });
    let tail = futures::stream::unfold(rx, |mut rx| async move {
        loop {
            match rx.recv().await {
                Ok(m) => return Some((m, rx)),
                Err(broadcast::error::RecvError::Lagged(_)) => continue,
                Err(broadcast::error::RecvError::Closed) => return None,
            }
        }
    });
    let events = head
        .chain(tail)
        .map(|m: Arc<str>| Ok(Event::default().event("snapshot").data(&*m)));
    Ok(Sse::new(events).keep_alive(KeepAlive::default()))
}

/// Serves until the listener fails.
pub async fn serve(
    listener: tokio::net::TcpListener,
    session: Session,
    config: ServeConfig,
) -> std::io::Result<()> {
    let handle = spawn(session, config);
    axum::serve(listener, router(handle)).await
}
