//! Priority computation: start-deadline math for LLF/EDF/SJF and the
//! token-based proportional-share policy.
//!
//! Smaller keys run earlier. Every function here is pure except
//! [`TokenBucket`], which is owned by a single source converter.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::model::{JobId, Millis};

/// Scheduling keys carried in a priority context.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Priority {
    /// Order of a message within its target operator.
    pub local: i64,
    /// Order of operators, taken from each operator's head message.
    pub global: i64,
}

impl Priority {
    /// Global key of untokened traffic: after every tokened key.
    pub const LOWEST: i64 = i64::MAX;

    pub fn new(local: i64, global: i64) -> Self {
        Priority { local, global }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyKind {
    /// Least laxity first (start deadline net of own and downstream cost).
    Llf,
    Edf,
    Sjf,
    /// Token-based proportional fair sharing.
    Token,
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PolicyKind::Llf => "llf",
            PolicyKind::Edf => "edf",
            PolicyKind::Sjf => "sjf",
            PolicyKind::Token => "token",
        })
    }
}

impl FromStr for PolicyKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "llf" => Ok(PolicyKind::Llf),
            "edf" => Ok(PolicyKind::Edf),
            "sjf" => Ok(PolicyKind::Sjf),
            "token" => Ok(PolicyKind::Token),
            other => Err(format!("unknown policy `{other}`")),
        }
    }
}

/// Latest start time that still meets the job's latency constraint:
/// `t_f + l - c_op - c_path`. May lie in the past; the raw value stays the
/// key.
pub fn llf_deadline(t_f: Millis, l: Millis, c_op: Millis, c_path: Millis) -> Millis {
    t_f + l - c_op - c_path
}

/// Deadline before the target operator runs, ignoring its own cost.
pub fn edf_deadline(t_f: Millis, l: Millis, c_path: Millis) -> Millis {
    t_f + l - c_path
}

pub fn sjf_priority(c_op: Millis) -> i64 {
    c_op
}

/// Per-source token allowance. `rate` tokens are issued per `interval`,
/// each tagged with a timestamp spread evenly across the interval.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TokenBucket {
    pub job_id: JobId,
    pub rate: u32,
    pub interval: Millis,
    current_interval: i64,
    issued: u32,
}

impl TokenBucket {
    pub fn new(job_id: JobId, rate: u32, interval: Millis) -> Self {
        assert!(interval > 0, "token interval must be positive");
        TokenBucket {
            job_id,
            rate,
            interval,
            current_interval: i64::MIN,
            issued: 0,
        }
    }

    pub fn interval_id(&self, now: Millis) -> i64 {
        now.div_euclid(self.interval)
    }

    /// Spread timestamps of every token in interval `id`.
    pub fn token_times(&self, id: i64) -> impl Iterator<Item = Millis> + '_ {
        let start = id * self.interval;
        (0..self.rate as i64).map(move |k| start + k * self.interval / self.rate as i64)
    }

    /// Consumes the next token of `now`'s interval and returns its tag, or
    /// `None` once the interval's allowance is spent.
    pub fn issue(&mut self, now: Millis) -> Option<Millis> {
        let id = self.interval_id(now);
        if id != self.current_interval {
            self.current_interval = id;
            self.issued = 0;
        }
        if self.issued >= self.rate {
            return None;
        }
        let k = self.issued as i64;
        self.issued += 1;
        Some(id * self.interval + k * self.interval / self.rate as i64)
    }

    pub fn remaining(&self, now: Millis) -> u32 {
        if self.interval_id(now) != self.current_interval {
            self.rate
        } else {
            self.rate - self.issued
        }
    }
}

/// Tokened messages order by tag, with the interval id as the local key.
/// Untokened messages fall behind all tokened ones, both across operators
/// and inside their own operator's queue.
pub fn token_priority(token: Option<Millis>, interval_id: i64) -> Priority {
    match token {
        Some(tag) => Priority::new(interval_id, tag),
        None => Priority::new(Priority::LOWEST, Priority::LOWEST),
    }
}
