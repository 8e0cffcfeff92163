use std::sync::Arc;
use std::time::{Duration, Instant};

use reqwest::{Method, StatusCode};
use tagpoll_core::client::{GatewayClient, Update};
use tagpoll_core::gateway::{serve, GatewayConfig, RunningGateway};
use tagpoll_core::hub::{Handle, TagHub, TagWrite};
use tagpoll_core::security::{Actor, PolicyConfig, Role, SecurityPolicy};
use tagpoll_core::wire::parse_snapshot;
use tagpoll_core::ScaledClock;

struct Fixture {
    hub: Arc<TagHub>,
    security: Arc<SecurityPolicy>,
    gw: RunningGateway,
}

fn h(raw: u32) -> Handle {
    Handle::new(raw).unwrap()
}

async fn fixture_with(config: GatewayConfig) -> Fixture {
    let clock = Arc::new(ScaledClock::realtime());
    let hub = Arc::new(TagHub::with_clock(clock.clone()));
    let names: Vec<String> = (1..=10).map(|i| format!("s{i}")).collect();
    hub.register_tags(&names).unwrap();
    let policy = PolicyConfig {
        hash_iterations: 1,
        ..PolicyConfig::default()
    };
    let security = Arc::new(SecurityPolicy::in_memory(policy, clock));
    for (name, role, code) in [
        ("admin", Role::Admin, "0000"),
        ("op", Role::Operator, "1111"),
        ("viewer", Role::User, "2222"),
        ("op2", Role::Operator, "3333"),
    ] {
        security
            .admin_add_user(Actor::Local, name, "pw", role, code)
            .unwrap();
    }
    let config = GatewayConfig {
        bind: "127.0.0.1:0".parse().unwrap(),
        trust_forwarded_for: true,
        ..config
    };
    let gw = serve(config, hub.clone(), security.clone()).await.unwrap();
    Fixture { hub, security, gw }
}

async fn fixture(max_wait: Duration) -> Fixture {
    fixture_with(GatewayConfig {
        max_wait,
        ..GatewayConfig::default()
    })
    .await
}

impl Fixture {
    fn anon(&self, ip: &str) -> GatewayClient {
        GatewayClient::new(self.gw.base_url(), Duration::from_secs(20))
            .unwrap()
            .with_forwarded_for(ip)
    }

    async fn client(&self, user: &str, code: &str, ip: &str) -> GatewayClient {
        let mut c = self.anon(ip);
        c.login(user, "pw", code).await.unwrap();
        c
    }
}

#[tokio::test]
async fn update_without_since_answers_immediately() {
    let f = fixture(Duration::from_secs(5)).await;
    f.hub
        .write_batch(&[TagWrite::value(h(1), 12.5)])
        .unwrap();
    let c = f.client("viewer", "2222", "10.0.0.2").await;
    let started = Instant::now();
    let Update::Data { sequence, body } = c.update(None).await.unwrap() else {
        panic!("expected data");
    };
    assert!(started.elapsed() < Duration::from_millis(500));
    assert_eq!(sequence, 1);
    let items = parse_snapshot(&body).unwrap();
    assert_eq!(items.len(), 10);
    assert_eq!(items[0].value, 12.5);
    assert_eq!(items[0].quality, 192);
}

#[tokio::test]
async fn long_poll_returns_on_change() {
    let f = fixture(Duration::from_secs(10)).await;
    let c = f.client("viewer", "2222", "10.0.0.2").await;
    let hub = f.hub.clone();
    tokio::spawn(async move {
        tokio::time::sleep(Duration::from_millis(300)).await;
        hub.write_batch(&[TagWrite::value(h(3), 7.0)]).unwrap();
    });
    let started = Instant::now();
    let update = c.update(Some(0)).await.unwrap();
    let elapsed = started.elapsed();
    assert!(matches!(update, Update::Data { sequence: 1, .. }), "{update:?}");
    assert!(elapsed >= Duration::from_millis(250) && elapsed < Duration::from_secs(3), "{elapsed:?}");
}

#[tokio::test]
async fn idle_long_poll_heartbeats_after_max_wait() {
    let f = fixture(Duration::from_secs(1)).await;
    let c = f.client("viewer", "2222", "10.0.0.2").await;
    let started = Instant::now();
    let update = c.update(Some(0)).await.unwrap();
    let elapsed = started.elapsed();
    assert_eq!(update, Update::Heartbeat { sequence: 0 });
    assert!(elapsed >= Duration::from_millis(950) && elapsed < Duration::from_secs(3), "{elapsed:?}");
}

#[tokio::test]
async fn malformed_since_is_rejected() {
    let f = fixture(Duration::from_secs(1)).await;
    let c = f.client("viewer", "2222", "10.0.0.2").await;
    let resp = c
        .request(Method::GET, "/api/update?since=abc")
        .send()
        .await
        .unwrap();
    assert_eq!(resp.status(), StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn setpoint_validation_and_write() {
    let f = fixture(Duration::from_secs(2)).await;
    let op = f.client("op", "1111", "10.0.0.3").await;

    let (status, body) = op.write_setpoints("10;20.5; 30").await.unwrap();
    assert_eq!((status, body.as_str()), (StatusCode::OK, "Done"));
    let snap = f.hub.snapshot();
    let values: Vec<f64> = snap.items[3..6].iter().map(|t| t.value).collect();
    assert_eq!(values, vec![10.0, 20.5, 30.0]);
    assert_eq!(snap.sequence, 1);

    let (status, _) = op.write_setpoints("10;abc;30").await.unwrap();
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, _) = op.write_setpoints("10;;30").await.unwrap();
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, _) = op.write_setpoints("10;20").await.unwrap();
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, body) = op.write_setpoints("10;100;30").await.unwrap();
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert!(body.contains("Invalid value!Check setpoints values"), "{body}");
    let (status, _) = op.write_setpoints("0;50;50").await.unwrap();
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(f.hub.current_sequence(), 1, "rejected writes must not touch the hub");

    let viewer = f.client("viewer", "2222", "10.0.0.4").await;
    let (status, _) = viewer.write_setpoints("1;2;3").await.unwrap();
    assert_eq!(status, StatusCode::FORBIDDEN);
    let (status, _) = f.anon("10.0.0.5").write_setpoints("1;2;3").await.unwrap();
    assert_eq!(status, StatusCode::UNAUTHORIZED);
}

#[tokio::test]
async fn setpoint_write_is_not_blocked_by_held_poll_and_wakes_it() {
    let f = fixture(Duration::from_secs(10)).await;
    let op = f.client("op", "1111", "10.0.0.3").await;
    let poller = op.clone();
    let held = tokio::spawn(async move { poller.update(Some(0)).await });
    tokio::time::sleep(Duration::from_millis(200)).await;

    let started = Instant::now();
    let (status, _) = op.write_setpoints("11;22;33").await.unwrap();
    assert_eq!(status, StatusCode::OK);
    assert!(started.elapsed() < Duration::from_secs(1));

    let update = tokio::time::timeout(Duration::from_secs(3), held)
        .await
        .unwrap()
        .unwrap()
        .unwrap();
    let Update::Data { sequence, body } = update else {
        panic!("expected data");
    };
    assert_eq!(sequence, 1);
    let items = parse_snapshot(&body).unwrap();
    assert_eq!(items[3].value, 11.0);
    assert_eq!(items[5].value, 33.0);
}

const PROTECTED: &[(&str, &str)] = &[
    ("GET", "/api/update"),
    ("GET", "/api/update?since=0"),
    ("POST", "/api/setpoints"),
    ("POST", "/api/auth/logout"),
    ("GET", "/api/admin/users"),
    ("POST", "/api/admin/users"),
    ("GET", "/api/admin/users/op"),
    ("POST", "/api/admin/users/op/logout"),
    ("GET", "/api/admin/untrusted"),
    ("DELETE", "/api/admin/untrusted/10.9.9.9"),
];

#[tokio::test]
async fn protected_routes_need_a_full_session() {
    let f = fixture(Duration::from_secs(1)).await;
    let anon = f.anon("10.0.0.7");
    let forged = f.anon("10.0.0.7").with_token("0123456789abcdef0123456789abcdef");
    let mut half = f.anon("10.0.0.8");
    let (status, _) = half.login_phase1("admin", "pw").await.unwrap();
    assert_eq!(status, StatusCode::OK);

    for (method, path) in PROTECTED {
        let method: Method = method.parse().unwrap();
        for (label, client) in [("anonymous", &anon), ("forged", &forged), ("phase1", &half)] {
            // a pending login may be cancelled
            if label == "phase1" && *path == "/api/auth/logout" {
                continue;
            }
            let resp = client.request(method.clone(), path).send().await.unwrap();
            assert_eq!(resp.status(), StatusCode::UNAUTHORIZED, "{label} {method} {path}");
        }
    }
}

#[tokio::test]
async fn admin_routes_are_forbidden_to_other_roles() {
    let f = fixture(Duration::from_secs(1)).await;
    let op = f.client("op", "1111", "10.0.0.3").await;
    for (method, path) in PROTECTED.iter().filter(|(_, p)| p.starts_with("/api/admin")) {
        let resp = op
            .request(method.parse().unwrap(), path)
            .send()
            .await
            .unwrap();
        assert_eq!(resp.status(), StatusCode::FORBIDDEN, "{method} {path}");
    }
}

#[tokio::test]
async fn admin_user_management() {
    let f = fixture(Duration::from_secs(1)).await;
    let admin = f.client("admin", "0000", "10.0.0.1").await;

    let users: serde_json::Value = admin
        .request(Method::GET, "/api/admin/users")
        .send()
        .await
        .unwrap()
        .json_value()
        .await;
    let names: Vec<&str> = users
        .as_array()
        .unwrap()
        .iter()
        .map(|u| u["username"].as_str().unwrap())
        .collect();
    assert!(names.contains(&"op") && names.contains(&"admin"));

    let add = |name: &'static str, code: &'static str| {
        admin
            .request(Method::POST, "/api/admin/users")
            .form(&[("username", name), ("password", "pw"), ("role", "user"), ("secret", code)])
            .send()
    };
    assert_eq!(add("newbie", "7777").await.unwrap().status(), StatusCode::CREATED);
    let dup = add("newbie", "8888").await.unwrap();
    assert_eq!(dup.status(), StatusCode::CONFLICT);
    assert_eq!(dup.text().await.unwrap(), "This username is already used,try another one");
    assert_eq!(add("other", "7777").await.unwrap().status(), StatusCode::CONFLICT);

    let newbie = f.client("newbie", "7777", "10.0.0.20").await;
    let status: serde_json::Value = admin
        .request(Method::GET, "/api/admin/users/newbie")
        .send()
        .await
        .unwrap()
        .json_value()
        .await;
    assert_eq!(status["logged"], true);
    assert_eq!(status["ip"], "10.0.0.20");
    assert_eq!(status["role"], "user");
    let missing = admin
        .request(Method::GET, "/api/admin/users/ghost")
        .send()
        .await
        .unwrap();
    assert_eq!(missing.status(), StatusCode::NOT_FOUND);

    let resp = admin
        .request(Method::POST, "/api/admin/users/newbie/logout")
        .send()
        .await
        .unwrap();
    assert_eq!(resp.status(), StatusCode::OK);
    let resp = newbie.request(Method::GET, "/api/update").send().await.unwrap();
    assert_eq!(resp.status(), StatusCode::UNAUTHORIZED);
}

#[tokio::test]
async fn untrusted_list_and_removal() {
    let f = fixture(Duration::from_secs(1)).await;
    let mut intruder = f.anon("10.6.6.6");
    for _ in 0..3 {
        let (status, _) = intruder.login_phase1("op", "wrong").await.unwrap();
        assert_eq!(status, StatusCode::UNAUTHORIZED);
    }
    let (status, body) = intruder.login_phase1("op", "pw").await.unwrap();
    assert_eq!(status, StatusCode::FORBIDDEN, "{body}");

    let admin = f.client("admin", "0000", "10.0.0.1").await;
    let list: serde_json::Value = admin
        .request(Method::GET, "/api/admin/untrusted")
        .send()
        .await
        .unwrap()
        .json_value()
        .await;
    assert_eq!(list[0]["ip"], "10.6.6.6");
    let resp = admin
        .request(Method::DELETE, "/api/admin/untrusted/10.6.6.6")
        .send()
        .await
        .unwrap();
    assert_eq!(resp.status(), StatusCode::OK);
    let resp = admin
        .request(Method::DELETE, "/api/admin/untrusted/10.6.6.6")
        .send()
        .await
        .unwrap();
    assert_eq!(resp.status(), StatusCode::NOT_FOUND);
    intruder.login("op", "pw", "1111").await.unwrap();
}

#[tokio::test]
async fn duplicate_login_over_http_blocks_both_machines() {
    let f = fixture(Duration::from_secs(1)).await;
    let first = f.client("op2", "3333", "10.1.0.1").await;
    let mut second = f.anon("10.1.0.2");
    let (status, body) = second.login_phase1("op2", "pw").await.unwrap();
    assert_eq!(status, StatusCode::CONFLICT, "{body}");
    assert!(f.security.is_untrusted("10.1.0.1"));
    assert!(f.security.is_untrusted("10.1.0.2"));
    let resp = first.request(Method::GET, "/api/update").send().await.unwrap();
    assert_eq!(resp.status(), StatusCode::UNAUTHORIZED);
}

#[tokio::test]
async fn wrong_secret_clears_cookie_and_untrusts() {
    let f = fixture(Duration::from_secs(1)).await;
    let mut c = f.anon("10.2.0.1");
    c.login_phase1("op", "pw").await.unwrap();
    let resp = c
        .request(Method::POST, "/api/auth/secret")
        .form(&[("code", "9999")])
        .send()
        .await
        .unwrap();
    assert_eq!(resp.status(), StatusCode::UNAUTHORIZED);
    let cookie = resp.headers().get("set-cookie").unwrap().to_str().unwrap();
    assert!(cookie.contains("Max-Age=0"));
    assert!(f.security.is_untrusted("10.2.0.1"));
}

#[tokio::test]
async fn logout_ends_session() {
    let f = fixture(Duration::from_secs(1)).await;
    let mut c = f.client("viewer", "2222", "10.0.0.2").await;
    let kept = c.clone();
    assert_eq!(c.logout().await.unwrap(), StatusCode::OK);
    let resp = kept.request(Method::GET, "/api/update").send().await.unwrap();
    assert_eq!(resp.status(), StatusCode::UNAUTHORIZED);
}

#[tokio::test]
async fn every_response_is_uncacheable() {
    let f = fixture(Duration::from_secs(1)).await;
    let c = f.client("viewer", "2222", "10.0.0.2").await;
    for path in ["/api/update", "/api/update?since=0", "/nope", "/api/nope"] {
        let resp = c.request(Method::GET, path).send().await.unwrap();
        let cc = resp.headers().get("cache-control").unwrap().to_str().unwrap();
        assert!(cc.contains("no-store"), "{path}: {cc}");
        if path.contains("nope") {
            assert_eq!(resp.status(), StatusCode::NOT_FOUND);
        }
    }
}

#[tokio::test]
async fn static_assets_are_served_from_the_directory() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("index.html"), "<html>hmi</html>").unwrap();
    let f = fixture_with(GatewayConfig {
        assets_dir: Some(dir.path().to_path_buf()),
        ..GatewayConfig::default()
    })
    .await;
    let c = f.anon("10.0.0.9");
    let resp = c.request(Method::GET, "/").send().await.unwrap();
    assert_eq!(resp.status(), StatusCode::OK);
    assert!(resp.headers()["content-type"].to_str().unwrap().starts_with("text/html"));
    assert_eq!(resp.text().await.unwrap(), "<html>hmi</html>");
    let resp = c.request(Method::GET, "/missing.js").send().await.unwrap();
    assert_eq!(resp.status(), StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn shutdown_drains_held_polls_with_heartbeats() {
    let f = fixture(Duration::from_secs(30)).await;
    let c = f.client("viewer", "2222", "10.0.0.2").await;
    let mut held = Vec::new();
    for _ in 0..10 {
        let c = c.clone();
        held.push(tokio::spawn(async move { c.update(Some(0)).await }));
    }
    tokio::time::sleep(Duration::from_millis(300)).await;
    let started = Instant::now();
    let Fixture { gw, .. } = f;
    let stop = tokio::spawn(gw.shutdown());
    for task in held {
        let update = task.await.unwrap().unwrap();
        assert_eq!(update, Update::Heartbeat { sequence: 0 });
    }
    stop.await.unwrap().unwrap();
    assert!(started.elapsed() < Duration::from_secs(5));
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn many_concurrent_waiters_all_wake() {
    let f = fixture(Duration::from_secs(20)).await;
    let c = f.client("viewer", "2222", "10.0.0.2").await;
    let mut held = Vec::new();
    for _ in 0..256 {
        let c = c.clone();
        held.push(tokio::spawn(async move { c.update(Some(0)).await }));
    }
    tokio::time::sleep(Duration::from_millis(500)).await;
    f.hub.write_batch(&[TagWrite::value(h(9), 1.0)]).unwrap();
    for task in held {
        let update = tokio::time::timeout(Duration::from_secs(10), task)
            .await
            .unwrap()
            .unwrap()
            .unwrap();
        assert_eq!(update.sequence(), 1);
        assert!(matches!(update, Update::Data { .. }));
    }
}

trait JsonValue {
    async fn json_value(self) -> serde_json::Value;
}

impl JsonValue for reqwest::Response {
    async fn json_value(self) -> serde_json::Value {
        serde_json::from_str(&self.text().await.unwrap()).unwrap()
    }
}
