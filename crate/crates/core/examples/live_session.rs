//! Starts the live server on a free port and plays one short session over
//! WebSocket, answering every move with a disapproval unless it heads
//! toward the treasure.

use futures::{SinkExt, StreamExt};
use tokio::io::{AsyncReadExt, AsyncWriteExt};
use tokio_tungstenite::tungstenite::Message;

use tamer_lab::gridworld::{Action, TerminalCause};
use tamer_lab::server::spawn_ephemeral;
use tamer_lab::wire::{ClientMessage, PhaseName, ServerMessage};

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    let addr = spawn_ephemeral().await?;

    let body = r#"{"episodes": 3, "feedback_window_ms": 0, "step_delay_ms": 0, "variant": "stochastic", "guard": {}}"#;
    let mut tcp = tokio::net::TcpStream::connect(addr).await?;
    let req = format!(
        "POST /sessions HTTP/1.1\r\nHost: {addr}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
        body.len()
    );
    tcp.write_all(req.as_bytes()).await?;
    let mut resp = String::new();
    tcp.read_to_string(&mut resp).await?;
    let created: serde_json::Value = serde_json::from_str(resp.split("\r\n\r\n").nth(1).unwrap_or("{}"))?;
    let id = created["id"].as_str().ok_or("no session id")?;
    println!("session {id} on http://{addr}");

    let (mut ws, _) = tokio_tungstenite::connect_async(format!("ws://{addr}/sessions/{id}/ws")).await?;
    ws.send(Message::text(serde_json::to_string(&ClientMessage::Start)?)).await?;

    while let Some(frame) = ws.next().await {
        let Message::Text(text) = frame? else { continue };
        match serde_json::from_str::<ServerMessage>(&text)? {
            ServerMessage::State(s) if s.phase == PhaseName::AwaitingFeedback => {
                let t = s.last_move.expect("a move is on screen");
                let good = matches!(t.action, Action::South | Action::East) && t.terminal_cause != TerminalCause::Hazard;
                let sign = if good { "p" } else { "n" };
                println!("ep {} step {:>2}: {} {:?} -> {}  [{sign}]", s.episode, s.step, t.from, t.action, t.to);
                let reply = ClientMessage::Feedback { sign: sign.into(), step: Some(s.step) };
                ws.send(Message::text(serde_json::to_string(&reply)?)).await?;
            }
            ServerMessage::State(s) if s.phase == PhaseName::Finished => {
                println!("finished, returns {:?}", s.episode_returns);
                break;
            }
            ServerMessage::FeedbackAck { guard_flipped: true, original_sign, applied_sign, .. } => {
                println!("  guard flipped {original_sign:?} to {applied_sign:?}");
            }
            ServerMessage::EpisodeEnd { episode, total_return, cause, .. } => {
                println!("episode {episode} ended: {cause:?}, return {total_return}");
            }
            ServerMessage::Error { code, message, .. } => println!("error {code:?}: {message}"),
            _ => {}
        }
    }
    Ok(())
}
