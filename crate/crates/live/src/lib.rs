//! Live, wall-clock paced simulation sessions served over HTTP and
//! WebSocket.

pub mod protocol;
pub mod runner;
pub mod scenarios;
pub mod server;
pub mod session;

pub use protocol::{Action, Body, Command, StreamKind, WireMessage, PROTOCOL_VERSION};
pub use runner::SessionHandle;
pub use server::{router, AppState};
pub use session::{Clock, LiveSession, ManualClock, SessionConfig, SystemClock};
