//! Exponential backoff shared by the HTTP clients.

use std::time::Duration;

use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetryPolicy {
    /// Total number of attempts, including the first one.
    pub max_attempts: u32,
    pub base_delay_ms: u64,
    pub factor: f64,
    /// Full jitter: sleep a uniform amount in `[0, delay]`.
    pub jitter: bool,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self { max_attempts: 3, base_delay_ms: 1000, factor: 2.0, jitter: true }
    }
}

impl RetryPolicy {
    /// Policy with no sleeping between attempts, mostly for tests.
    pub fn immediate(max_attempts: u32) -> Self {
        Self { max_attempts, base_delay_ms: 0, factor: 1.0, jitter: false }
    }

    /// Upper bound of the delay before attempt `attempt + 1` (attempts count from 1).
    pub fn ceiling(&self, attempt: u32) -> Duration {
        let exp = attempt.saturating_sub(1) as i32;
        let ms = self.base_delay_ms as f64 * self.factor.powi(exp);
        Duration::from_millis(ms.min(u64::MAX as f64 / 2.0) as u64)
    }

    pub fn delay(&self, attempt: u32) -> Duration {
        let ceiling = self.ceiling(attempt);
        if self.jitter && !ceiling.is_zero() {
            let ms = rand::rng().random_range(0..=ceiling.as_millis() as u64);
            Duration::from_millis(ms)
        } else {
            ceiling
        }
    }
}

/// Outcome of one attempt, as judged by the caller.
pub enum Attempt<T, E> {
    Done(T),
    /// Worth retrying (timeouts, 429, 5xx).
    Transient(E),
    /// Not worth retrying (4xx, malformed payloads).
    Fatal(E),
}

/// Result of [`run`]: the final outcome plus every transient failure seen on the way.
pub struct Retried<T, E> {
    pub result: Result<T, E>,
    pub retries: u32,
    pub failures: Vec<E>,
}

/// Runs `op` until it succeeds, fails fatally or the attempt budget is spent.
pub fn run<T, E: Clone>(policy: &RetryPolicy, mut op: impl FnMut(u32) -> Attempt<T, E>) -> Retried<T, E> {
    let max = policy.max_attempts.max(1);
    let mut failures = Vec::new();
    let mut attempt = 1;
    loop {
        match op(attempt) {
            Attempt::Done(value) => return Retried { result: Ok(value), retries: attempt - 1, failures },
            Attempt::Fatal(err) => return Retried { result: Err(err), retries: attempt - 1, failures },
            Attempt::Transient(err) => {
                failures.push(err.clone());
                if attempt >= max {
                    return Retried { result: Err(err), retries: attempt - 1, failures };
                }
                std::thread::sleep(policy.delay(attempt));
                attempt += 1;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ceiling_grows_geometrically() {
        let p = RetryPolicy::default();
        assert_eq!(p.ceiling(1), Duration::from_secs(1));
        assert_eq!(p.ceiling(2), Duration::from_secs(2));
        assert_eq!(p.ceiling(3), Duration::from_secs(4));
    }

    #[test]
    fn jittered_delay_stays_under_ceiling() {
        let p = RetryPolicy { base_delay_ms: 10, ..RetryPolicy::default() };
        for attempt in 1..4 {
            for _ in 0..50 {
                assert!(p.delay(attempt) <= p.ceiling(attempt));
            }
        }
    }

    #[test]
    fn counts_retries_until_success() {
        let out = run(&RetryPolicy::immediate(3), |n| if n < 3 { Attempt::Transient(n) } else { Attempt::Done("ok") });
        assert_eq!(out.result, Ok("ok"));
        assert_eq!(out.retries, 2);
        assert_eq!(out.failures, vec![1, 2]);
    }

    #[test]
    fn gives_up_after_budget() {
        let out: Retried<(), u32> = run(&RetryPolicy::immediate(3), Attempt::Transient);
        assert_eq!(out.result, Err(3));
        assert_eq!(out.failures.len(), 3);
    }

    #[test]
    fn fatal_stops_immediately() {
        let mut calls = 0;
        let out: Retried<(), &str> = run(&RetryPolicy::immediate(5), |_| {
            calls += 1;
            Attempt::Fatal("nope")
        });
        assert_eq!(out.result, Err("nope"));
        assert_eq!(calls, 1);
    }
}
