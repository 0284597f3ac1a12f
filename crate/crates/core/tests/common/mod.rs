#![allow(dead_code)]

use std::collections::HashMap;
use std::net::SocketAddr;

use futures::{SinkExt, StreamExt};
use tokio::io::{AsyncReadExt, AsyncWriteExt};
use tokio::net::TcpStream;
use tokio_tungstenite::tungstenite::Message;

use tamer_lab::gridworld::{Action, Coord, GridWorld};
use tamer_lab::oracles::{solve, OracleConfig};
use tamer_lab::session::SessionConfig;
use tamer_lab::tamer::RewardModel;
use tamer_lab::wire::{ClientMessage, PhaseName, ServerMessage};

// ---------------------------------------------------------------------------
// Solver oracle

/// Optimal discounted value of every non-terminal cell by exhaustive search.
///
/// The world is deterministic, so an optimal stationary policy either reaches
/// a terminal cell without revisiting a state or loops forever. Looping pays
/// the step reward on every move. Enumerating all simple paths therefore
/// covers every candidate.
pub fn brute_force_values(world: &GridWorld, gamma: f64) -> HashMap<Coord, f64> {
    let step = world.rewards().step_penalty;
    let loop_forever = step / (1.0 - gamma);
    world
        .non_terminal_cells()
        .map(|s| {
            let mut best = loop_forever;
            let mut visited = vec![s];
            dfs(world, gamma, s, 0.0, 1.0, &mut visited, &mut best);
            (s, best)
        })
        .collect()
}

fn dfs(world: &GridWorld, gamma: f64, s: Coord, acc: f64, disc: f64, visited: &mut Vec<Coord>, best: &mut f64) {
    for a in Action::ALL {
        let t = world.step(s, a).unwrap();
        let value = acc + disc * t.reward;
        if t.terminal {
            *best = best.max(value);
        } else if !visited.contains(&t.to) {
            visited.push(t.to);
            dfs(world, gamma, t.to, value, disc * gamma, visited, best);
            visited.pop();
        }
    }
}

pub fn brute_force_q(world: &GridWorld, v: &HashMap<Coord, f64>, gamma: f64, s: Coord, a: Action) -> f64 {
    let t = world.step(s, a).unwrap();
    t.reward + if t.terminal { 0.0 } else { gamma * v[&t.to] }
}

pub fn brute_force_argmax(world: &GridWorld, v: &HashMap<Coord, f64>, gamma: f64, s: Coord) -> Vec<Action> {
    let qs = Action::ALL.map(|a| brute_force_q(world, v, gamma, s, a));
    let best = qs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Action::ALL.into_iter().filter(|a| best - qs[a.index()] <= 1e-6).collect()
}

// ---------------------------------------------------------------------------
// Student-t oracle

#[allow(clippy::too_many_arguments)]
fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
        return left + right + (left + right - whole) / 15.0;
    }
    simpson(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1) + simpson(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
}

pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    let (fa, fm, fb) = (f(a), f(0.5 * (a + b)), f(b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson(&f, a, b, fa, fm, fb, whole, tol, 50)
}

/// Two-sided p-value of Student's t by quadrature. With x = sqrt(df) tan(theta)
/// the density becomes proportional to cos(theta)^(df - 1) on (-pi/2, pi/2),
/// so no normalizing constant is needed.
pub fn t_two_sided_by_quadrature(t: f64, df: f64) -> f64 {
    let half_pi = std::f64::consts::FRAC_PI_2;
    let f = move |th: f64| th.cos().max(0.0).powf(df - 1.0);
    let theta0 = (t.abs() / df.sqrt()).atan();
    let tail = integrate(f, theta0, half_pi, 1e-13);
    let total = 2.0 * integrate(f, 0.0, half_pi, 1e-13);
    2.0 * tail / total
}

// ---------------------------------------------------------------------------
// Minimal HTTP and WebSocket client

pub async fn http(addr: SocketAddr, method: &str, path: &str, body: Option<&str>) -> (u16, String) {
    let mut stream = TcpStream::connect(addr).await.unwrap();
    let body = body.unwrap_or("");
    let req = format!(
        "{method} {path} HTTP/1.1\r\nHost: {addr}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
        body.len()
    );
    stream.write_all(req.as_bytes()).await.unwrap();
    let mut raw = Vec::new();
    stream.read_to_end(&mut raw).await.unwrap();
    let text = String::from_utf8(raw).unwrap();
    let status = text[9..12].parse().unwrap();
    let (head, rest) = text.split_once("\r\n\r\n").unwrap();
    let body = if head.to_ascii_lowercase().contains("transfer-encoding: chunked") {
        dechunk(rest)
    } else {
        rest.to_string()
    };
    (status, body)
}

fn dechunk(mut s: &str) -> String {
    let mut out = String::new();
    loop {
        let (size, rest) = s.split_once("\r\n").unwrap();
        let n = usize::from_str_radix(size.trim(), 16).unwrap();
        if n == 0 {
            return out;
        }
        out.push_str(&rest[..n]);
        s = &rest[n + 2..];
    }
}

pub async fn create(addr: SocketAddr, cfg: &SessionConfig) -> String {
    let (status, body) = http(addr, "POST", "/sessions", Some(&serde_json::to_string(cfg).unwrap())).await;
    assert_eq!(status, 201, "{body}");
    let v: serde_json::Value = serde_json::from_str(&body).unwrap();
    v["id"].as_str().unwrap().to_string()
}

pub type Socket = tokio_tungstenite::WebSocketStream<tokio_tungstenite::MaybeTlsStream<TcpStream>>;

pub async fn connect(addr: SocketAddr, id: &str) -> Socket {
    let url = format!("ws://{addr}/sessions/{id}/ws");
    let (ws, _) = tokio_tungstenite::connect_async_with_config(url, None, true).await.unwrap();
    ws
}

pub async fn send(ws: &mut Socket, msg: &ClientMessage) {
    ws.send(Message::text(serde_json::to_string(msg).unwrap())).await.unwrap();
}

pub async fn send_raw(ws: &mut Socket, text: &str) {
    ws.send(Message::text(text.to_string())).await.unwrap();
}

pub async fn recv(ws: &mut Socket) -> ServerMessage {
    loop {
        let frame = tokio::time::timeout(std::time::Duration::from_secs(10), ws.next())
            .await
            .expect("server went quiet")
            .expect("socket closed")
            .unwrap();
        if let Message::Text(t) = frame {
            return serde_json::from_str(&t).unwrap();
        }
    }
}

/// Everything a scripted session produced.
pub struct Replay {
    pub model: RewardModel,
    pub transcript: Vec<ServerMessage>,
}

/// Drives a session to completion, answering every open window with the
/// oracle's sign for the move just shown.
pub async fn replay_oracle(addr: SocketAddr, cfg: &SessionConfig, oracle: &OracleConfig) -> Replay {
    let world = cfg.world.clone().unwrap_or_default();
    let q = std::sync::Arc::new(solve(&world).unwrap());
    let mut provider = oracle.provider(&world, q, cfg.seed);

    let id = create(addr, cfg).await;
    let mut ws = connect(addr, &id).await;
    let mut transcript = vec![recv(&mut ws).await];
    send(&mut ws, &ClientMessage::Start).await;
    loop {
        let msg = recv(&mut ws).await;
        transcript.push(msg.clone());
        match msg {
            ServerMessage::State(s) if s.phase == PhaseName::AwaitingFeedback => {
                let t = s.last_move.expect("awaiting state carries the move");
                let sign = provider.feedback(&t);
                if let Some(sign) = sign {
                    let fb = ClientMessage::Feedback { sign: sign.token().into(), step: Some(s.step) };
                    send(&mut ws, &fb).await;
                }
            }
            ServerMessage::State(s) if s.phase == PhaseName::Finished => break,
            ServerMessage::Error { code, message, .. } => panic!("server error {code:?}: {message}"),
            _ => {}
        }
    }
    let (status, body) = http(addr, "GET", &format!("/sessions/{id}/model"), None).await;
    assert_eq!(status, 200);
    Replay { model: serde_json::from_str(&body).unwrap(), transcript }
}
