//! Wire frames between the fusion center and the agents.
//!
//! Each frame is one JSON object terminated by `\n`, with a `"type"` field
//! naming the variant. Reals in vectors are written as the shortest decimal
//! that round-trips (integral values without a fraction, so `1.0` is `1`).

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize, Serializer};

use super::TransportError;
use crate::weak_learner::{Node, RegressionTree};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Message {
    /// Fit the residual on the agent's own columns. With `commit` the tree is
    /// appended to the agent's model at once; otherwise it is held as the
    /// agent's pending candidate until a [`Message::Commit`].
    FitRequest {
        run_id: u64,
        #[serde(serialize_with = "wire_vec")]
        residual: Vec<f64>,
        commit: bool,
    },
    FitResponse {
        run_id: u64,
        #[serde(serialize_with = "wire_vec")]
        delta_predictions: Vec<f64>,
        model_summary: RegressionTree,
        leaves: usize,
    },
    /// Append the pending candidate to the model.
    Commit { run_id: u64 },
    CommitAck {
        run_id: u64,
        #[serde(serialize_with = "wire_vec")]
        delta_predictions: Vec<f64>,
    },
    /// Rows of the agent's own feature columns, one inner vector per row.
    PredictRequest {
        run_id: u64,
        #[serde(serialize_with = "wire_rows")]
        rows: Vec<Vec<f64>>,
    },
    PredictResponse {
        run_id: u64,
        #[serde(serialize_with = "wire_vec")]
        values: Vec<f64>,
    },
    Error { run_id: u64, message: String },
    Shutdown,
}

const KNOWN_TYPES: [&str; 8] = [
    "fit_request",
    "fit_response",
    "commit",
    "commit_ack",
    "predict_request",
    "predict_response",
    "error",
    "shutdown",
];

impl Message {
    pub fn run_id(&self) -> Option<u64> {
        match self {
            Message::FitRequest { run_id, .. }
            | Message::FitResponse { run_id, .. }
            | Message::Commit { run_id }
            | Message::CommitAck { run_id, .. }
            | Message::PredictRequest { run_id, .. }
            | Message::PredictResponse { run_id, .. }
            | Message::Error { run_id, .. } => Some(*run_id),
            Message::Shutdown => None,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Message::FitRequest { .. } => "fit_request",
            Message::FitResponse { .. } => "fit_response",
            Message::Commit { .. } => "commit",
            Message::CommitAck { .. } => "commit_ack",
            Message::PredictRequest { .. } => "predict_request",
            Message::PredictResponse { .. } => "predict_response",
            Message::Error { .. } => "error",
            Message::Shutdown => "shutdown",
        }
    }

    /// Number of real-valued payload scalars (vector entries) the frame carries.
    pub fn scalar_count(&self) -> usize {
        match self {
            Message::FitRequest { residual, .. } => residual.len(),
            Message::FitResponse { delta_predictions, .. } | Message::CommitAck { delta_predictions, .. } => {
                delta_predictions.len()
            }
            Message::PredictRequest { rows, .. } => rows.iter().map(Vec::len).sum(),
            Message::PredictResponse { values, .. } => values.len(),
            Message::Commit { .. } | Message::Error { .. } | Message::Shutdown => 0,
        }
    }

    /// The per-row vector whose length must equal the training set size.
    fn training_vector(&self) -> Option<&[f64]> {
        match self {
            Message::FitRequest { residual, .. } => Some(residual),
            Message::FitResponse { delta_predictions, .. } | Message::CommitAck { delta_predictions, .. } => {
                Some(delta_predictions)
            }
            _ => None,
        }
    }

    fn all_finite(&self) -> bool {
        fn node_finite(n: &Node) -> bool {
            match n {
                Node::Leaf { value } => value.is_finite(),
                Node::Split { threshold, left, right, .. } => {
                    threshold.is_finite() && node_finite(left) && node_finite(right)
                }
            }
        }
        let vecs_ok = match self {
            Message::PredictRequest { rows, .. } => rows.iter().flatten().all(|v| v.is_finite()),
            Message::PredictResponse { values, .. } => values.iter().all(|v| v.is_finite()),
            other => other.training_vector().is_none_or(|v| v.iter().all(|x| x.is_finite())),
        };
        let tree_ok = match self {
            Message::FitResponse { model_summary, .. } => node_finite(&model_summary.root),
            _ => true,
        };
        vecs_ok && tree_ok
    }
}

fn wire_f64<S: Serializer>(v: f64, s: S) -> Result<S::Ok, S::Error> {
    // integral values below 2^53 print without a fractional part; -0.0 keeps its sign
    if v.fract() == 0.0 && v.abs() < 9_007_199_254_740_992.0 && !(v == 0.0 && v.is_sign_negative()) {
        s.serialize_i64(v as i64)
    } else {
        s.serialize_f64(v)
    }
}

struct Wire(f64);

impl Serialize for Wire {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        wire_f64(self.0, s)
    }
}

fn wire_vec<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
    s.collect_seq(v.iter().map(|&x| Wire(x)))
}

fn wire_rows<S: Serializer>(rows: &[Vec<f64>], s: S) -> Result<S::Ok, S::Error> {
    struct Row<'a>(&'a [f64]);
    impl Serialize for Row<'_> {
        fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
            wire_vec(self.0, s)
        }
    }
    s.collect_seq(rows.iter().map(|r| Row(r)))
}

/// One newline-terminated frame.
pub fn encode_message(m: &Message) -> Result<Vec<u8>, TransportError> {
    if !m.all_finite() {
        return Err(TransportError::NonFinite(m.kind()));
    }
    let mut out = serde_json::to_vec(m).map_err(|e| TransportError::Malformed(e.to_string()))?;
    out.push(b'\n');
    Ok(out)
}

/// Inverse of [`encode_message`]. When `expected_len` is given, residual and
/// delta vectors must have exactly that many entries.
pub fn decode_message(bytes: &[u8], expected_len: Option<usize>) -> Result<Message, TransportError> {
    let body = bytes
        .strip_suffix(b"\n")
        .ok_or_else(|| TransportError::Framing("frame is not newline-terminated".into()))?;
    if body.contains(&b'\n') {
        return Err(TransportError::Framing("more than one record in frame".into()));
    }
    let value: serde_json::Value =
        serde_json::from_slice(body).map_err(|e| TransportError::Malformed(e.to_string()))?;
    let kind = value
        .get("type")
        .and_then(|t| t.as_str())
        .ok_or_else(|| TransportError::Malformed("missing \"type\" field".into()))?;
    if !KNOWN_TYPES.contains(&kind) {
        return Err(TransportError::UnknownType(kind.to_owned()));
    }
    let msg: Message = from_value(value)?;
    if let (Some(n), Some(v)) = (expected_len, msg.training_vector()) {
        if v.len() != n {
            return Err(TransportError::Protocol(format!(
                "{} carries {} values, run has {n} rows",
                msg.kind(),
                v.len()
            )));
        }
    }
    Ok(msg)
}

fn from_value<T: DeserializeOwned>(v: serde_json::Value) -> Result<T, TransportError> {
    serde_json::from_value(v).map_err(|e| TransportError::Malformed(e.to_string()))
}
