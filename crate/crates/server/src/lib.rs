//! Live steering: runs a trained controller in real time and lets browser
//! clients retarget its cost while watching the imagined future.

pub mod protocol;
mod server;
pub mod session;

pub use protocol::{ControlMessage, ServerMessage};
pub use server::{start, RunningServer, ServeConfig, ServerError};
pub use session::{RunMode, Session, SessionConfig};
