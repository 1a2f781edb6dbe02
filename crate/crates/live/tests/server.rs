use std::net::SocketAddr;
use std::time::Duration;

use futures::{SinkExt, StreamExt};
use hrsim_live::protocol::{Body, WireMessage};
use hrsim_live::{router, AppState};
use serde_json::{json, Value};
use tokio::net::TcpStream;
use tokio_tungstenite::tungstenite::Message;
use tokio_tungstenite::{connect_async, MaybeTlsStream, WebSocketStream};

type Socket = WebSocketStream<MaybeTlsStream<TcpStream>>;

async fn serve() -> SocketAddr {
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move { axum::serve(listener, router(AppState::default())).await.unwrap() });
    addr
}

async fn next(ws: &mut Socket) -> WireMessage {
    loop {
        let msg = tokio::time::timeout(Duration::from_secs(20), ws.next()).await.expect("message in time").unwrap().unwrap();
        if let Message::Text(t) = msg {
            return serde_json::from_str(&t).unwrap();
        }
    }
}

/// Reads until `pick` matches, checking sequence numbers along the way.
async fn until<T>(ws: &mut Socket, last_seq: &mut u64, mut pick: impl FnMut(&Body) -> Option<T>) -> T {
    let read = async {
        loop {
            let m = next(ws).await;
            assert!(m.seq > *last_seq, "seq {} after {}", m.seq, last_seq);
            *last_seq = m.seq;
            if let Some(t) = pick(&m.body) {
                return t;
            }
        }
    };
    // metrics ticks keep the socket busy, so bound the whole wait
    tokio::time::timeout(Duration::from_secs(30), read).await.expect("awaited message in time")
}

async fn send(ws: &mut Socket, id: &str, action: Value) {
    let mut payload = action;
    payload["id"] = json!(id);
    let text = json!({ "type": "command", "payload": payload }).to_string();
    ws.send(Message::Text(text.into())).await.unwrap();
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn http_endpoints() {
    let base = format!("http://{}", serve().await);
    let http = reqwest::Client::new();

    let scenarios: Vec<Value> = http.get(format!("{base}/scenarios")).send().await.unwrap().json().await.unwrap();
    assert_eq!(scenarios.len(), 5);
    assert!(scenarios.iter().any(|s| s["name"] == "clique-8-sdn75"));

    let create = |body: Value| http.post(format!("{base}/sessions")).json(&body).send();
    let r = create(json!({ "scenario": "clique-8-sdn75", "id": "a", "speed": 5 })).await.unwrap();
    assert_eq!(r.status(), 201);
    let status: Value = r.json().await.unwrap();
    assert_eq!((status["id"].as_str(), status["speed"].as_f64(), status["quiescent"].as_bool()), (Some("a"), Some(5.0), Some(true)));

    assert_eq!(create(json!({ "scenario": "clique-8", "id": "a" })).await.unwrap().status(), 409);
    assert_eq!(create(json!({ "scenario": "no-such" })).await.unwrap().status(), 404);
    assert_eq!(create(json!({ "scenario": { "family": "clique", "n": "eight" } })).await.unwrap().status(), 400);
    assert_eq!(create(json!({ "scenario": "clique-8", "speed": 0 })).await.unwrap().status(), 400);
    let r = create(json!({ "scenario": { "family": "barabasi-albert", "n": 16, "penetration": 50 }, "seed": 3 })).await.unwrap();
    assert_eq!(r.status(), 201);
    let custom: Value = r.json().await.unwrap();
    assert_eq!(custom["id"], "s1");

    let list: Vec<Value> = http.get(format!("{base}/sessions")).send().await.unwrap().json().await.unwrap();
    assert_eq!(list.iter().map(|s| s["id"].as_str().unwrap()).collect::<Vec<_>>(), ["a", "s1"]);
    assert_eq!(http.get(format!("{base}/sessions/a")).send().await.unwrap().status(), 200);
    assert_eq!(http.get(format!("{base}/sessions/zz")).send().await.unwrap().status(), 404);
    assert_eq!(http.delete(format!("{base}/sessions/s1")).send().await.unwrap().status(), 204);
    assert_eq!(http.get(format!("{base}/sessions/s1")).send().await.unwrap().status(), 404);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn websocket_session_end_to_end() {
    let addr = serve().await;
    let http = reqwest::Client::new();
    let r = http
        .post(format!("http://{addr}/sessions"))
        .json(&json!({ "scenario": "clique-8-sdn75", "id": "live", "speed": 20, "seed": 2 }))
        .send()
        .await
        .unwrap();
    assert_eq!(r.status(), 201);
    assert!(connect_async(format!("ws://{addr}/sessions/nope/ws")).await.is_err(), "unknown sessions refuse the upgrade");

    let (mut ws, _) = connect_async(format!("ws://{addr}/sessions/live/ws")).await.unwrap();
    let mut seq = 0;
    let hello = until(&mut ws, &mut seq, |b| match b {
        Body::Hello(h) => Some(h.clone()),
        _ => None,
    })
    .await;
    assert_eq!((hello.session.as_str(), hello.speed, hello.seed), ("live", 20.0, 2));
    let topo = until(&mut ws, &mut seq, |b| match b {
        Body::Topology(t) => Some(t.clone()),
        _ => None,
    })
    .await;

    send(&mut ws, "sub", json!({ "action": "subscribe", "streams": ["forwarding_tree"] })).await;
    let tree = until(&mut ws, &mut seq, |b| match b {
        Body::ForwardingTree(t) => Some(t.clone()),
        Body::Error(e) => panic!("{e:?}"),
        _ => None,
    })
    .await;
    assert_eq!(tree.snapshot.prefix, topo.prefix);
    assert_eq!((tree.loops, tree.blackholes), (0, 0));

    send(&mut ws, "down", json!({ "action": "toggle_link", "a": topo.client, "b": topo.primary, "up": false })).await;
    let ack = until(&mut ws, &mut seq, |b| match b {
        Body::CommandAck(a) if a.id == "down" => Some(a.clone()),
        Body::Error(e) => panic!("{e:?}"),
        _ => None,
    })
    .await;
    assert!(!ack.noop);
    let after = until(&mut ws, &mut seq, |b| match b {
        Body::Topology(t) => Some(t.clone()),
        _ => None,
    })
    .await;
    assert!(after.links.iter().any(|l| !l.up));

    send(&mut ws, "bad", json!({ "action": "toggle_link", "a": topo.client, "b": 4_000_000, "up": false })).await;
    let code = until(&mut ws, &mut seq, |b| match b {
        Body::Error(e) if e.id.as_deref() == Some("bad") => Some(e.code.clone()),
        _ => None,
    })
    .await;
    assert_eq!(code, "unknown_link");

    send(&mut ws, "ff", json!({ "action": "fast_forward" })).await;
    let mut last = None;
    let m = until(&mut ws, &mut seq, |b| match b {
        Body::ForwardingTree(t) => {
            last = Some(t.clone());
            None
        }
        Body::MetricsTick(m) if m.quiescent && m.convergence_time.is_some() => Some(m.clone()),
        Body::Error(e) => panic!("{e:?}"),
        _ => None,
    })
    .await;
    assert_eq!(m.trigger, Some(ack.sim_time));
    assert!(!m.convergence_time.unwrap().is_zero());
    assert_eq!(m.hop_counts.len(), 8, "every ISP reaches the client over the backup");
    let last = last.expect("fast-forward flushes the tree");
    assert!(last.snapshot.at >= ack.sim_time);
    assert_eq!((last.loops, last.blackholes), (0, 0));

    let status: Value = http.get(format!("http://{addr}/sessions/live")).send().await.unwrap().json().await.unwrap();
    assert_eq!(status["clients"], 1);
    assert_eq!(status["commands"].as_array().unwrap().len(), 1);
    ws.close(None).await.unwrap();
}
