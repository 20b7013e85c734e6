//! Scenario scripts: one step per line, `#` starts a comment.
//!
//! ```text
//! crash peer0@Org2
//! store 5                      # five generated records as the acting identity
//! recover peer0@Org2
//! sync peer0@Org2              # explicit anti-entropy round
//! failover                     # promote the first live standby orderer
//! query {"domain": "example.com"}
//! ```

use std::fmt;

use pdns_core::network::NodeId;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Step {
    Crash(NodeId),
    Recover(NodeId),
    Failover,
    Store(usize),
    Sync(NodeId),
    Query(String),
}

impl Step {
    pub fn needs_identity(&self) -> bool {
        matches!(self, Step::Store(_) | Step::Query(_))
    }
}

impl fmt::Display for Step {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Step::Crash(n) => write!(f, "crash {n}"),
            Step::Recover(n) => write!(f, "recover {n}"),
            Step::Failover => f.write_str("failover"),
            Step::Store(k) => write!(f, "store {k}"),
            Step::Sync(n) => write!(f, "sync {n}"),
            Step::Query(s) => write!(f, "query {s}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("ScriptError at line {line}: {message}")]
pub struct ScriptError {
    pub line: usize,
    pub message: String,
}

/// Parses a whole script up front, so a typo on line 40 is reported before
/// line 1 runs. `nodes` and `peers` are the names steps may refer to.
pub fn parse_script(text: &str, nodes: &[NodeId], peers: &[NodeId]) -> Result<Vec<(usize, Step)>, ScriptError> {
    let mut steps = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let err = |message: String| ScriptError { line, message };
        let body = raw.split_once('#').map_or(raw, |(code, _)| code).trim();
        // selectors may legitimately contain '#', so keep query bodies whole
        let body = if raw.trim_start().starts_with("query ") { raw.trim() } else { body };
        if body.is_empty() {
            continue;
        }
        let (verb, rest) = body.split_once(char::is_whitespace).unwrap_or((body, ""));
        let rest = rest.trim();
        let node = |pool: &[NodeId], what: &str| -> Result<NodeId, ScriptError> {
            if rest.is_empty() || rest.contains(char::is_whitespace) {
                return Err(err(format!("{verb} takes exactly one {what} name")));
            }
            let id = NodeId(rest.to_string());
            if pool.contains(&id) {
                Ok(id)
            } else {
                Err(err(format!("unknown {what} {rest:?}")))
            }
        };
        let step = match verb {
            "crash" => Step::Crash(node(nodes, "node")?),
            "recover" => Step::Recover(node(nodes, "node")?),
            "sync" => Step::Sync(node(peers, "peer")?),
            "failover" if rest.is_empty() => Step::Failover,
            "failover" => return Err(err("failover takes no arguments".into())),
            "store" => Step::Store(
                rest.parse()
                    .ok()
                    .filter(|&k| k > 0)
                    .ok_or_else(|| err(format!("store needs a positive count, got {rest:?}")))?,
            ),
            "query" if !rest.is_empty() => Step::Query(rest.to_string()),
            "query" => return Err(err("query needs a JSON selector".into())),
            other => return Err(err(format!("unknown step {other:?}"))),
        };
        steps.push((line, step));
    }
    Ok(steps)
}
