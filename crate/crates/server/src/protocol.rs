//! Wire messages. Every message is one JSON text frame tagged by `type`.

use serde::{Deserialize, Serialize};

use genctl::cartpole::CartState;
use genctl::controller::RewardSpec;
use genctl::model::FutureWindow;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateMsg {
    pub x: f64,
    pub v: f64,
    pub theta: f64,
    pub omega: f64,
}

impl From<CartState> for StateMsg {
    fn from(s: CartState) -> Self {
        Self {
            x: s.x,
            v: s.v,
            theta: s.theta,
            omega: s.omega,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanStep {
    pub a: f64,
    pub x: f64,
    pub v: f64,
    pub theta: f64,
    pub omega: f64,
}

pub fn plan_steps(plan: &FutureWindow) -> Vec<PlanStep> {
    plan.steps
        .iter()
        .map(|s| PlanStep {
            a: s.action,
            x: s.state[0],
            v: s.state[1],
            theta: s.state[2],
            omega: s.state[3],
        })
        .collect()
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EpisodeStats {
    /// 1-based index of the running episode.
    pub episode: u64,
    /// Steps survived so far in the running episode.
    pub steps: usize,
    pub last_hold: Option<usize>,
    pub best_hold: usize,
    /// Episodes that ended in a failure.
    pub falls: u64,
    /// Mean `|x - target_x|` over the running episode.
    pub mean_tracking_error: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightsMsg {
    pub gx: f64,
    pub gv: f64,
    pub gtheta: f64,
    pub gomega: f64,
}

impl From<&RewardSpec> for WeightsMsg {
    fn from(s: &RewardSpec) -> Self {
        Self {
            gx: s.gamma_x,
            gv: s.gamma_v,
            gtheta: s.gamma_theta,
            gomega: s.gamma_omega,
        }
    }
}

/// Messages sent by the server.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMessage {
    /// Sent once per connection before any frame.
    Hello {
        n_future: usize,
        tau: f64,
        position_limit: f64,
        angle_limit: f64,
        weights: WeightsMsg,
        speed: f64,
        paused: bool,
    },
    Frame {
        /// Strictly increasing across the session.
        seq: u64,
        /// Step index within the running episode.
        t: usize,
        state: StateMsg,
        target_x: f64,
        q_value: f64,
        plan: Vec<PlanStep>,
        stats: EpisodeStats,
    },
    Error {
        message: String,
    },
}

/// Messages accepted from clients.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ControlMessage {
    SetTarget { x0: f64 },
    SetWeights { gx: f64, gv: f64, gtheta: f64, gomega: f64 },
    /// Sinusoidal autopilot target `amplitude * sin(2 pi t / period)`.
    SetSinusoid { amplitude: f64, period: f64 },
    Pause,
    Resume,
    Reset,
    SetSpeed { mult: f64 },
}

impl ControlMessage {
    /// Parses and validates one client text frame.
    pub fn parse(text: &str) -> Result<Self, String> {
        let msg: ControlMessage = serde_json::from_str(text).map_err(|e| format!("malformed control message: {e}"))?;
        msg.validate()?;
        Ok(msg)
    }

    pub fn validate(&self) -> Result<(), String> {
        let finite = |name: &str, v: f64| {
            if v.is_finite() {
                Ok(())
            } else {
                Err(format!("{name} must be finite, got {v}"))
            }
        };
        match *self {
            ControlMessage::SetTarget { x0 } => finite("x0", x0),
            ControlMessage::SetWeights { gx, gv, gtheta, gomega } => {
                for (name, g) in [("gx", gx), ("gv", gv), ("gtheta", gtheta), ("gomega", gomega)] {
                    if !(g.is_finite() && g >= 0.0) {
                        return Err(format!("{name} must be finite and >= 0, got {g}"));
                    }
                }
                Ok(())
            }
            ControlMessage::SetSinusoid { amplitude, period } => {
                finite("amplitude", amplitude)?;
                if period.is_finite() && period > 0.0 {
                    Ok(())
                } else {
                    Err(format!("period must be > 0, got {period}"))
                }
            }
            ControlMessage::SetSpeed { mult } => {
                if mult.is_finite() && mult > 0.0 {
                    Ok(())
                } else {
                    Err(format!("mult must be > 0, got {mult}"))
                }
            }
            ControlMessage::Pause | ControlMessage::Resume | ControlMessage::Reset => Ok(()),
        }
    }
}

impl ServerMessage {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("server messages always serialize")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn control_messages_parse() {
        assert_eq!(
            ControlMessage::parse(r#"{"type":"set_target","x0":1.0}"#).unwrap(),
            ControlMessage::SetTarget { x0: 1.0 }
        );
        assert_eq!(ControlMessage::parse(r#"{"type":"pause"}"#).unwrap(), ControlMessage::Pause);
        assert_eq!(
            ControlMessage::parse(r#"{"type":"set_speed","mult":2}"#).unwrap(),
            ControlMessage::SetSpeed { mult: 2.0 }
        );
    }

    #[test]
    fn bad_control_messages_are_rejected() {
        for text in [
            "not json",
            r#"{"type":"launch"}"#,
            r#"{"x0":1.0}"#,
            r#"{"type":"set_target"}"#,
            r#"{"type":"set_target","x0":"far"}"#,
            r#"{"type":"set_weights","gx":1,"gv":1,"gtheta":-1,"gomega":1}"#,
            r#"{"type":"set_speed","mult":0}"#,
            r#"{"type":"set_sinusoid","amplitude":0.5,"period":0}"#,
            r#"{"type":"set_target","x0":1.0,"extra":2}"#,
        ] {
            assert!(ControlMessage::parse(text).is_err(), "{text}");
        }
    }

    #[test]
    fn frame_field_names() {
        let frame = ServerMessage::Frame {
            seq: 3,
            t: 2,
            state: StateMsg {
                x: 0.1,
                v: 0.2,
                theta: 0.3,
                omega: 0.4,
            },
            target_x: 1.0,
            q_value: 0.5,
            plan: vec![PlanStep {
                a: 1.0,
                x: 0.0,
                v: 0.0,
                theta: 0.0,
                omega: 0.0,
            }],
            stats: EpisodeStats::default(),
        };
        let v: serde_json::Value = serde_json::from_str(&frame.to_json()).unwrap();
        assert_eq!(v["type"], "frame");
        for key in ["seq", "t", "state", "target_x", "q_value", "plan", "stats"] {
            assert!(v.get(key).is_some(), "{key}");
        }
        for key in ["x", "v", "theta", "omega"] {
            assert!(v["state"].get(key).is_some(), "{key}");
        }
        for key in ["a", "x", "v", "theta", "omega"] {
            assert!(v["plan"][0].get(key).is_some(), "{key}");
        }
    }
}
