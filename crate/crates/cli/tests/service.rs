use std::time::Duration;

use colorsort_cli::serve::{self, ServeConfig};
use colorsort_core::plc::Verdict;
use colorsort_core::service::StreamMessage;
use colorsort_core::sim::EventKind;
use colorsort_core::trace::TraceFile;
use colorsort_core::{Scenario, Session, Snapshot};
use reqwest::StatusCode;
use serde_json::{json, Value};

struct Server {
    base: String,
    http: reqwest::Client,
}

impl Server {
    /// Manual stepping only, so every test is deterministic.
    async fn start(scenario: Scenario) -> Server {
        let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
        let addr = listener.local_addr().unwrap();
        let config = ServeConfig {
            speed: 0.0,
            rate_hz: 20.0,
        };
        tokio::spawn(serve::serve(
            listener,
            Session::new(scenario).unwrap(),
            config,
        ));
        Server {
            base: format!("http://{addr}"),
            http: reqwest::Client::new(),
        }
    }

    async fn snapshot(&self) -> Snapshot {
        self.http
            .get(format!("{}/api/snapshot", self.base))
            .send()
            .await
            .unwrap()
            .json()
            .await
            .unwrap()
    }

    async fn command(&self, body: Value) -> (StatusCode, Value) {
        let r = self
            .http
            .post(format!("{}/api/command", self.base))
            .body(body.to_string())
            .send()
            .await
            .unwrap();
        (r.status(), r.json().await.unwrap())
    }

    async fn step(&self, dt_s: f64) -> Snapshot {
        let r = self
            .http
            .post(format!("{}/api/step", self.base))
            .body(json!({ "dt_us": (dt_s * 1e6) as u64 }).to_string())
            .send()
            .await
            .unwrap();
        assert_eq!(r.status(), StatusCode::OK);
        r.json().await.unwrap()
    }

    async fn trace(&self) -> TraceFile {
        let text = self
            .http
            .get(format!("{}/api/trace", self.base))
            .send()
            .await
            .unwrap()
            .text()
            .await
            .unwrap();
        TraceFile::parse(&text).unwrap()
    }
}

fn idle_cell() -> Scenario {
    let mut s = Scenario::new(600.0);
    s.auto_start = false;
    s
}

#[tokio::test]
async fn snapshot_at_zero_is_empty_and_zeroed() {
    let srv = Server::start(idle_cell()).await;
    let snap = srv.snapshot().await;
    assert_eq!(snap.t_us, 0);
    assert!(snap.parts.is_empty());
    assert_eq!(snap.assemblies.robot_to_plc.words, [0; 4]);
    assert_eq!(snap.assemblies.plc_to_robot.words, [0; 4]);
    assert!(!snap.conveyor.running);
}

#[tokio::test]
async fn bad_commands_get_structured_errors() {
    let srv = Server::start(idle_cell()).await;
    let cases = [
        (json!({"type": "self_destruct"}), "unknown_command"),
        (json!({"type": "select_colors", "r": true}), "malformed"),
        (json!({"kind": "start"}), "malformed"),
        (
            json!({"type": "spawn_part", "color": "green", "y_offset": 500.0}),
            "invalid",
        ),
        (json!({"type": "spawn_part", "color": "unknown"}), "invalid"),
    ];
    for (body, code) in cases {
        let (status, reply) = srv.command(body.clone()).await;
        assert_eq!(status, StatusCode::BAD_REQUEST, "{body}");
        assert_eq!(reply["code"], code, "{body}");
        assert!(reply["message"].as_str().unwrap().len() > 3);
    }
    let r = srv
        .http
        .post(format!("{}/api/step", srv.base))
        .body("{\"dt\": 5}")
        .send()
        .await
        .unwrap();
    assert_eq!(r.status(), StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn red_only_selection_removes_a_green_part() {
    let srv = Server::start(idle_cell()).await;
    for c in [
        json!({"type": "start"}),
        json!({"type": "select_colors", "r": true, "g": false, "b": false}),
        json!({"type": "spawn_part", "color": "green"}),
    ] {
        let (status, ack) = srv.command(c).await;
        assert_eq!(status, StatusCode::OK, "{ack}");
        assert_eq!(ack["queued_at_us"], 0);
    }
    let snap = srv.step(40.0).await;
    assert_eq!(snap.bin, [1]);
    assert!(snap.panel.enabled);
    assert!(snap.panel.selected.red && !snap.panel.selected.green);
    let verdicts: Vec<Verdict> = srv
        .trace()
        .await
        .events
        .iter()
        .filter_map(|e| match e.kind {
            EventKind::VerdictIssued { verdict, .. } => Some(verdict),
            _ => None,
        })
        .collect();
    assert_eq!(verdicts, [Verdict::Remove]);
}

#[tokio::test]
async fn stop_holds_the_belt_and_start_resumes() {
    let srv = Server::start(idle_cell()).await;
    srv.command(json!({"type": "start"})).await;
    srv.command(json!({"type": "spawn_part", "color": "red"}))
        .await;
    srv.step(3.0).await;
    srv.command(json!({"type": "stop"})).await;
    let held = srv.step(0.1).await;
    assert!(!held.conveyor.running);
    assert!(!held.panel.enabled);
    let later = srv.step(5.0).await;
    assert_eq!(later.parts, held.parts);
    srv.command(json!({"type": "start"})).await;
    let resumed = srv.step(1.0).await;
    assert!(resumed.conveyor.running);
    assert!(resumed.parts[0].position_mm.0 > held.parts[0].position_mm.0 + 80.0);
}

#[tokio::test]
async fn word_141_is_decoded_in_the_snapshot() {
    let srv = Server::start(idle_cell()).await;
    srv.command(json!({"type": "start"})).await;
    let snap = srv.step(0.05).await;
    let a = &snap.assemblies.plc_to_robot;
    assert_eq!(a.words[0], 141);
    assert_eq!(a.bits, ["IMSTP", "SFSPD", "Stop", "Enable"]);
}

async fn next_message(resp: &mut reqwest::Response, buf: &mut String) -> StreamMessage {
    loop {
        if let Some(end) = buf.find("\n\n") {
            let frame: String = buf.drain(..end + 2).collect();
            let data = frame
                .lines()
                .find_map(|l| l.strip_prefix("data: "))
                .unwrap_or_else(|| panic!("no data in {frame:?}"));
            return serde_json::from_str(data).unwrap();
        }
        let chunk = tokio::time::timeout(Duration::from_secs(5), resp.chunk())
            .await
            .expect("stream stalled")
            .unwrap()
            .expect("stream closed");
        buf.push_str(std::str::from_utf8(&chunk).unwrap());
    }
}

#[tokio::test]
async fn stream_opens_with_a_snapshot_then_relays_new_events() {
    let srv = Server::start(idle_cell()).await;
    let mut resp = srv
        .http
        .get(format!("{}/api/stream", srv.base))
        .send()
        .await
        .unwrap();
    assert_eq!(
        resp.headers()["content-type"].to_str().unwrap(),
        "text/event-stream"
    );
    let mut buf = String::new();
    let first = next_message(&mut resp, &mut buf).await;
    assert_eq!(first.snapshot.t_us, 0);
    assert!(first.events.is_empty());

    srv.command(json!({"type": "start"})).await;
    let stepped = srv.step(1.0).await;
    let mut seen = Vec::new();
    loop {
        let m = next_message(&mut resp, &mut buf).await;
        seen.extend(m.events);
        if m.snapshot.t_us == stepped.t_us && seen.len() as u64 == stepped.event_count {
            break;
        }
    }
    let seqs: Vec<u64> = seen.iter().map(|e| e.seq).collect();
    assert_eq!(seqs, (0..stepped.event_count).collect::<Vec<_>>());
    assert!(seen
        .iter()
        .any(|e| matches!(&e.kind, EventKind::Operator { .. })));
}

#[tokio::test]
async fn halted_session_refuses_commands() {
    // a drop outside the bin latches a fault, which waits for the operator;
    // after the reset nothing can finish the held part, so the watchdog
    // halts the session
    let mut s = Scenario::new(600.0);
    s.selected = colorsort_core::ColorFlags::new(true, false, false);
    s.parts.push(colorsort_core::sim::PartSpec {
        at_s: 0.0,
        color: colorsort_core::ColorClass::Green,
        y_mm: 0.0,
        rz_deg: 0.0,
        reflectance: None,
    });
    s.params.reject_bin.x_mm = 900.0;
    let srv = Server::start(s).await;
    assert!(srv.step(40.0).await.robot.fault.is_some());
    let (status, _) = srv.command(json!({"type": "fault_reset"})).await;
    assert_eq!(status, StatusCode::OK);
    let r = srv
        .http
        .post(format!("{}/api/step", srv.base))
        .body(json!({"dt_us": 200_000_000u64}).to_string())
        .send()
        .await
        .unwrap();
    assert_eq!(r.status(), StatusCode::CONFLICT);
    let (status, reply) = srv.command(json!({"type": "start"})).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(reply["code"], "halted");
    assert!(srv.snapshot().await.halted.unwrap().contains("deadlock"));
}
