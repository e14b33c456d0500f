//! JSON Lines wire protocol spoken with external evaluator processes.
//!
//! One JSON object per line over the child's stdin/stdout:
//!
//! ```text
//! -> {"type":"init","protocol":1,"space":{...}}
//! <- {"type":"ready","layers":L}
//! -> {"type":"evaluate","id":7,"configs":[[2,3,4],[4,4,4]]}
//! <- {"type":"result","id":7,"scores":[0.31,0.02]}
//! <- {"type":"error","id":7,"message":"..."}
//! -> {"type":"shutdown"}
//! ```
//!
//! Results may come back in any id order.

use serde::{Deserialize, Serialize};

use crate::space::SpaceFile;

pub const PROTOCOL_VERSION: u32 = 1;

/// Engine to evaluator.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Request {
    Init { protocol: u32, space: SpaceFile },
    Evaluate { id: u64, configs: Vec<Vec<u8>> },
    Shutdown,
}

/// Evaluator to engine.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Response {
    Ready {
        layers: usize,
    },
    Result {
        id: u64,
        scores: Vec<f64>,
    },
    Error {
        #[serde(default)]
        id: Option<u64>,
        message: String,
    },
}
