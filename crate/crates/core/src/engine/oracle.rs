use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::ClusterProposal;
use crate::dataset::Dataset;
use crate::{Error, Result, NO_OBJECT};

/// Reserved answer token that leaves the proposal unlabeled.
pub const SKIP: &str = "skip";

/// A label for the proposed cluster, written on the wire as a single token.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum OracleAnswer {
    Class(String),
    NoObject,
    Skip,
}

impl OracleAnswer {
    /// Parse a token; surrounding whitespace is ignored.
    pub fn parse(token: &str) -> Result<Self> {
        let t = token.trim();
        if t.is_empty() {
            return Err(Error::invalid("label must be a non-empty token"));
        }
        if t.chars().any(char::is_control) {
            return Err(Error::invalid("label must not contain control characters"));
        }
        Ok(match t {
            NO_OBJECT => OracleAnswer::NoObject,
            SKIP => OracleAnswer::Skip,
            _ => OracleAnswer::Class(t.to_string()),
        })
    }

    pub fn as_str(&self) -> &str {
        match self {
            OracleAnswer::Class(c) => c,
            OracleAnswer::NoObject => NO_OBJECT,
            OracleAnswer::Skip => SKIP,
        }
    }

    /// The label given to members, `None` for a skip.
    pub fn label(&self) -> Option<&str> {
        match self {
            OracleAnswer::Skip => None,
            other => Some(other.as_str()),
        }
    }
}

impl fmt::Display for OracleAnswer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl TryFrom<String> for OracleAnswer {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        OracleAnswer::parse(&s)
    }
}

impl From<OracleAnswer> for String {
    fn from(a: OracleAnswer) -> Self {
        a.as_str().to_string()
    }
}

/// Source of labels for proposals. Returning `Ok(None)` pauses the session
/// until an answer is submitted from outside.
pub trait Oracle {
    fn answer(&mut self, proposal: &ClusterProposal, dataset: &Dataset) -> Result<Option<OracleAnswer>>;
}

/// Simulated oracle answering with the modal ground-truth class.
#[derive(Debug, Clone, Copy, Default)]
pub struct MajorityVoteOracle;

impl Oracle for MajorityVoteOracle {
    fn answer(&mut self, proposal: &ClusterProposal, dataset: &Dataset) -> Result<Option<OracleAnswer>> {
        let mut labels = Vec::with_capacity(proposal.cluster_members.len());
        for id in &proposal.cluster_members {
            let c = dataset
                .get(id)
                .ok_or_else(|| Error::invalid(format!("unknown candidate {id}")))?;
            let cls = c
                .gt_class
                .as_deref()
                .ok_or_else(|| Error::invalid(format!("candidate {id} is not annotated")))?;
            labels.push(cls);
        }
        majority_vote(&labels).map(Some)
    }
}

/// Modal label; ties prefer any object class over `no_object`, then the
/// lexicographically smallest name.
pub fn majority_vote<S: AsRef<str>>(labels: &[S]) -> Result<OracleAnswer> {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for l in labels {
        *counts.entry(l.as_ref()).or_default() += 1;
    }
    let mut best: Option<(&str, usize)> = None;
    for (&label, &n) in &counts {
        best = match best {
            None => Some((label, n)),
            Some((b, bn)) => {
                let wins = n > bn || (n == bn && b == NO_OBJECT && label != NO_OBJECT);
                if wins {
                    Some((label, n))
                } else {
                    Some((b, bn))
                }
            }
        };
    }
    let (label, _) = best.ok_or_else(|| Error::invalid("cannot vote over an empty cluster"))?;
    OracleAnswer::parse(label)
}
