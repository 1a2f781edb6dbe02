//! Owns a [`LiveSession`] on a dedicated thread and paces it. Requests come
//! in over a channel; every outgoing message is broadcast to all socket
//! tasks, which keep only what is addressed to their client.

use std::sync::mpsc::{self, RecvTimeoutError};
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use tokio::sync::{broadcast, oneshot};

use crate::session::{ClientId, Clock, LiveSession, Outgoing, SessionStatus};

/// How often the pacing loop wakes when no requests arrive.
pub const TICK: Duration = Duration::from_millis(10);
const BROADCAST_CAPACITY: usize = 4096;

enum Request {
    Attach(oneshot::Sender<(ClientId, Vec<Outgoing>)>),
    Detach(ClientId),
    Inbound(ClientId, String),
    Status(oneshot::Sender<SessionStatus>),
    Shutdown,
}

#[derive(Debug, thiserror::Error)]
#[error("session has stopped")]
pub struct Stopped;

/// Cheap to clone; the thread stops once `shutdown` is called or every
/// handle is dropped.
#[derive(Clone)]
pub struct SessionHandle {
    id: String,
    tx: mpsc::Sender<Request>,
    out: broadcast::Sender<Arc<Outgoing>>,
}

impl SessionHandle {
    pub fn spawn(mut session: LiveSession, clock: Arc<dyn Clock>) -> SessionHandle {
        let (tx, rx) = mpsc::channel();
        let (out, _) = broadcast::channel(BROADCAST_CAPACITY);
        let id = session.id().to_owned();
        let sink = out.clone();
        let publish = move |msgs: Vec<Outgoing>| {
            for m in msgs {
                // no receivers is fine
                let _ = sink.send(Arc::new(m));
            }
        };
        thread::Builder::new()
            .name(format!("session-{id}"))
            .spawn(move || loop {
                match rx.recv_timeout(TICK) {
                    Ok(Request::Attach(reply)) => {
                        let (client, msgs) = session.attach(clock.now());
                        if reply.send((client, msgs)).is_err() {
                            session.detach(client);
                        }
                    }
                    Ok(Request::Detach(client)) => session.detach(client),
                    Ok(Request::Inbound(client, text)) => publish(session.inbound(client, &text, clock.now())),
                    Ok(Request::Status(reply)) => {
                        let _ = reply.send(session.status());
                    }
                    Ok(Request::Shutdown) | Err(RecvTimeoutError::Disconnected) => break,
                    Err(RecvTimeoutError::Timeout) => {}
                }
                publish(session.advance(clock.now()));
            })
            .expect("spawn session thread");
        SessionHandle { id, tx, out }
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    /// Subscribe before attaching so nothing addressed to the new client is
    /// missed; the attach messages themselves are returned directly.
    pub fn subscribe(&self) -> broadcast::Receiver<Arc<Outgoing>> {
        self.out.subscribe()
    }

    pub async fn attach(&self) -> Result<(ClientId, Vec<Outgoing>), Stopped> {
        let (reply, rx) = oneshot::channel();
        self.tx.send(Request::Attach(reply)).map_err(|_| Stopped)?;
        rx.await.map_err(|_| Stopped)
    }

    pub fn detach(&self, client: ClientId) {
        let _ = self.tx.send(Request::Detach(client));
    }

    pub fn inbound(&self, client: ClientId, text: String) -> Result<(), Stopped> {
        self.tx.send(Request::Inbound(client, text)).map_err(|_| Stopped)
    }

    pub async fn status(&self) -> Result<SessionStatus, Stopped> {
        let (reply, rx) = oneshot::channel();
        self.tx.send(Request::Status(reply)).map_err(|_| Stopped)?;
        rx.await.map_err(|_| Stopped)
    }

    pub fn shutdown(&self) {
        let _ = self.tx.send(Request::Shutdown);
    }

    pub fn is_running(&self) -> bool {
        self.tx.send(Request::Status(oneshot::channel().0)).is_ok()
    }
}
