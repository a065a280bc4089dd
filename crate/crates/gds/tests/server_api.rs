use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::extract::State;
use axum::http::StatusCode;
use axum::routing::post;
use axum::{Json, Router};
use gds::imaging;
use gds::proto::DetectionReport;
use gds::server::http::{router, RunningServer};
use gds::server::{FileStore, Service, ServiceOptions, SystemClock, WebhookNotifier};
use gds_core::{BoundingBox, FrameSize, Image, OracleClassifier, PixelFormat};
use reqwest::blocking::Client;
use serde_json::Value;

#[derive(Clone)]
struct Hook {
    status: StatusCode,
    calls: Arc<Mutex<Vec<Value>>>,
}

async fn receive(State(h): State<Hook>, Json(body): Json<Value>) -> StatusCode {
    h.calls.lock().unwrap().push(body);
    h.status
}

fn webhook(status: StatusCode) -> (RunningServer, Arc<Mutex<Vec<Value>>>) {
    let calls = Arc::new(Mutex::new(Vec::new()));
    let app = Router::new().route("/hook", post(receive)).with_state(Hook {
        status,
        calls: calls.clone(),
    });
    (RunningServer::start(app, "127.0.0.1:0").unwrap(), calls)
}

struct Api {
    _dir: tempfile::TempDir,
    svc: Arc<Service>,
    server: RunningServer,
    client: Client,
}

impl Api {
    fn start(scores: Vec<f64>, hook_url: Option<String>, token: Option<&str>) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let notifier =
            WebhookNotifier::new(hook_url.into_iter().collect(), "http://console.test", Duration::from_millis(5)).unwrap();
        let svc = Arc::new(Service::new(
            Arc::new(FileStore::open(dir.path().join("store")).unwrap()),
            Box::new(OracleClassifier::new(scores)),
            Arc::new(notifier),
            Arc::new(SystemClock),
            ServiceOptions::default(),
        ));
        let server = RunningServer::start(router(svc.clone(), token.map(String::from), None), "127.0.0.1:0").unwrap();
        Self {
            _dir: dir,
            svc,
            server,
            client: Client::new(),
        }
    }

    fn url(&self, path: &str) -> String {
        format!("{}{path}", self.server.url())
    }

    fn post_report(&self, r: &DetectionReport) -> (u16, Value) {
        let resp = self.client.post(self.url("/api/v1/reports")).body(r.encode()).send().unwrap();
        (resp.status().as_u16(), resp.json().unwrap())
    }

    fn get(&self, path: &str) -> (u16, Value) {
        let resp = self.client.get(self.url(path)).send().unwrap();
        (resp.status().as_u16(), resp.json().unwrap())
    }
}

fn report(track: u64, ts: i64) -> DetectionReport {
    let chip = Image::filled(FrameSize::new(112, 112).unwrap(), PixelFormat::Rgb8, 200);
    let snap = Image::filled(FrameSize::new(160, 120).unwrap(), PixelFormat::Rgb8, 50);
    DetectionReport {
        device_id: "cam01".into(),
        timestamp_ms: ts,
        track_id: track,
        bbox: BoundingBox::new(20, 20, 84, 84).unwrap(),
        detector_score: 0.8,
        chip_jpeg: imaging::encode_jpeg(&chip).unwrap(),
        snapshot_jpeg: imaging::encode_jpeg(&snap).unwrap(),
        extra_snapshots: vec![],
    }
}

#[test]
fn confirmed_alert_calls_healthy_webhook_once() {
    let (hook, calls) = webhook(StatusCode::OK);
    let api = Api::start(vec![0.97], Some(format!("{}/hook", hook.url())), None);
    let (status, ack) = api.post_report(&report(1, 1000));
    assert_eq!(status, 200);
    assert_eq!(ack["disposition"], "accepted");
    api.svc.wait_idle();
    let calls = calls.lock().unwrap().clone();
    assert_eq!(calls.len(), 1);
    let id = ack["report_id"].as_str().unwrap();
    assert_eq!(calls[0]["report_id"], id);

    let (_, alert) = api.get(&format!("/api/v1/alerts/{id}"));
    assert_eq!(alert["disposition"], "confirmed");
    let n = &alert["notification"];
    assert_eq!(n["undelivered"], false);
    assert_eq!(n["deliveries"][0]["attempts"], 1);
    assert_eq!(n["deliveries"][0]["delivered"], true);
}

#[test]
fn failing_webhook_is_retried_then_marked_undelivered() {
    let (hook, calls) = webhook(StatusCode::INTERNAL_SERVER_ERROR);
    let api = Api::start(vec![0.97], Some(format!("{}/hook", hook.url())), None);
    let (_, ack) = api.post_report(&report(1, 1000));
    api.svc.wait_idle();
    assert_eq!(calls.lock().unwrap().len(), 3);
    let (_, alert) = api.get(&format!("/api/v1/alerts/{}", ack["report_id"].as_str().unwrap()));
    assert_eq!(alert["notification"]["undelivered"], true);
    assert_eq!(alert["notification"]["deliveries"][0]["last_status"], 500);
    assert_eq!(api.get("/api/v1/stats").1["undelivered"], 1);
}

#[test]
fn suppressed_alert_does_not_notify() {
    let (hook, calls) = webhook(StatusCode::OK);
    let api = Api::start(vec![0.3], Some(format!("{}/hook", hook.url())), None);
    let (_, ack) = api.post_report(&report(1, 1000));
    api.svc.wait_idle();
    assert!(calls.lock().unwrap().is_empty());
    let (_, alert) = api.get(&format!("/api/v1/alerts/{}", ack["report_id"].as_str().unwrap()));
    assert_eq!(alert["disposition"], "suppressed");
}

#[test]
fn duplicate_post_stores_one_alert() {
    let api = Api::start(vec![0.9], None, None);
    let r = report(5, 42);
    let (s1, a1) = api.post_report(&r);
    let (s2, a2) = api.post_report(&r);
    assert_eq!((s1, s2), (200, 200));
    assert_eq!(a2["disposition"], "duplicate");
    assert_eq!(a1["report_id"], a2["report_id"]);
    assert_eq!(api.get("/api/v1/alerts").1["total"], 1);
}

#[test]
fn malformed_report_is_rejected_with_400() {
    let api = Api::start(vec![0.9], None, None);
    let resp = api.client.post(api.url("/api/v1/reports")).body("{\"protocol_version\": 2}").send().unwrap();
    assert_eq!(resp.status().as_u16(), 400);
    let ack: Value = resp.json().unwrap();
    assert_eq!(ack["disposition"], "rejected");
    assert!(ack["reason"].as_str().unwrap().contains("version"));
}

#[test]
fn bearer_token_is_enforced() {
    let api = Api::start(vec![0.9], None, Some("s3cret"));
    assert_eq!(api.client.get(api.url("/api/v1/alerts")).send().unwrap().status().as_u16(), 401);
    let wrong = api.client.get(api.url("/api/v1/alerts")).bearer_auth("nope").send().unwrap();
    assert_eq!(wrong.status().as_u16(), 401);
    let ok = api.client.get(api.url("/api/v1/alerts")).bearer_auth("s3cret").send().unwrap();
    assert_eq!(ok.status().as_u16(), 200);
}

#[test]
fn review_flow_images_devices_and_filters() {
    let api = Api::start(vec![0.9, 0.2], None, None);
    let (_, a) = api.post_report(&report(1, 10));
    api.post_report(&report(2, 20));
    let id = a["report_id"].as_str().unwrap().to_string();

    let (status, page) = api.get("/api/v1/alerts?disposition=confirmed");
    assert_eq!(status, 200);
    assert_eq!(page["total"], 1);
    assert_eq!(api.get("/api/v1/alerts?since=15").1["total"], 1);
    assert_eq!(api.get("/api/v1/alerts?colour=red").0, 400);
    assert_eq!(api.get("/api/v1/alerts?page=0").0, 400);
    assert_eq!(api.get("/api/v1/alerts/doesnotexist").0, 404);

    let review = |verdict: &str, who: &str| {
        api.client
            .post(api.url(&format!("/api/v1/alerts/{id}/review")))
            .json(&serde_json::json!({ "verdict": verdict, "reviewer": who }))
            .send()
            .unwrap()
    };
    let first = review("false_positive", "ann");
    assert_eq!(first.status().as_u16(), 200);
    let second = review("acknowledged", "bob");
    assert_eq!(second.status().as_u16(), 409);
    let body: Value = second.json().unwrap();
    assert_eq!(body["review"], "false_positive");
    assert_eq!(body["reviewer"], "ann");
    assert_eq!(review("maybe", "x").status().as_u16(), 400);

    let snap = api.client.get(api.url(&format!("/api/v1/alerts/{id}/snapshot"))).send().unwrap();
    assert_eq!(snap.headers()["content-type"], "image/jpeg");
    let img = imaging::decode(&snap.bytes().unwrap()).unwrap();
    assert_eq!((img.width(), img.height()), (160, 120));
    let chip = api.client.get(api.url(&format!("/api/v1/alerts/{id}/chip"))).send().unwrap();
    assert_eq!(chip.status().as_u16(), 200);

    let hb = api
        .client
        .post(api.url("/api/v1/devices/cam02/heartbeat"))
        .json(&serde_json::json!({ "display_name": "Gate" }))
        .send()
        .unwrap();
    assert_eq!(hb.status().as_u16(), 200);
    let devices = api.get("/api/v1/devices").1;
    let list = devices["devices"].as_array().unwrap();
    assert_eq!(list.len(), 2);
    assert!(list.iter().all(|d| d["online"] == true));
    assert_eq!(list[1]["display_name"], "Gate");
    assert_eq!(api.get("/api/v1/stats").1["false_positives"], 1);
}
