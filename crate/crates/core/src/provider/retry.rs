use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    /// Retries after the first attempt.
    pub max_retries: u32,
    pub base_delay_ms: u64,
    pub max_delay_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_retries: 4,
            base_delay_ms: 500,
            max_delay_ms: 16_000,
        }
    }
}

impl RetryPolicy {
    pub fn none() -> Self {
        Self {
            max_retries: 0,
            ..Self::default()
        }
    }

    /// Delay before retry number `attempt` (0-based): base * 2^attempt, capped.
    pub fn delay(&self, attempt: u32) -> Duration {
        let factor = 1u64.checked_shl(attempt).unwrap_or(u64::MAX);
        Duration::from_millis(self.base_delay_ms.saturating_mul(factor).min(self.max_delay_ms))
    }
}

fn is_transient(e: &Error) -> bool {
    matches!(e, Error::Transport(_))
}

/// Runs `op` until it succeeds, fails non-transiently, or the retry bound is
/// spent. Only [`Error::Transport`] is retried.
pub fn retry_with_backoff<T>(
    policy: &RetryPolicy,
    mut sleep: impl FnMut(Duration),
    mut op: impl FnMut() -> Result<T>,
) -> Result<T> {
    let mut attempt = 0;
    loop {
        match op() {
            Ok(v) => return Ok(v),
            Err(e) if is_transient(&e) && attempt < policy.max_retries => {
                sleep(policy.delay(attempt));
                attempt += 1;
            }
            Err(e) => return Err(e),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn backoff_doubles_and_caps() {
        let p = RetryPolicy {
            max_retries: 10,
            base_delay_ms: 100,
            max_delay_ms: 1000,
        };
        let ms: Vec<u128> = (0..6).map(|a| p.delay(a).as_millis()).collect();
        assert_eq!(ms, [100, 200, 400, 800, 1000, 1000]);
        assert_eq!(p.delay(200).as_millis(), 1000);
    }

    #[test]
    fn transient_errors_retry_up_to_bound() {
        let policy = RetryPolicy {
            max_retries: 3,
            ..RetryPolicy::default()
        };
        let mut calls = 0;
        let mut slept = Vec::new();
        let r: Result<()> = retry_with_backoff(&policy, |d| slept.push(d), || {
            calls += 1;
            Err(Error::Transport("timeout".into()))
        });
        assert!(matches!(r, Err(Error::Transport(_))));
        assert_eq!(calls, 4);
        assert_eq!(slept.len(), 3);
    }

    #[test]
    fn recovers_after_transient_failure() {
        let mut calls = 0;
        let r = retry_with_backoff(&RetryPolicy::default(), |_| {}, || {
            calls += 1;
            if calls < 3 {
                Err(Error::Transport("503".into()))
            } else {
                Ok(calls)
            }
        });
        assert_eq!(r.unwrap(), 3);
    }

    #[test]
    fn never_resubmits_after_non_transient_error() {
        for err in [
            Error::Auth("401".into()),
            Error::Capability("logprobs".into()),
            Error::Protocol("400".into()),
        ] {
            let mut calls = 0;
            let mut pending = Some(err);
            let r: Result<()> = retry_with_backoff(&RetryPolicy::default(), |_| {}, || {
                calls += 1;
                Err(pending.take().unwrap_or(Error::Transport("unreachable".into())))
            });
            assert!(r.is_err());
            assert_eq!(calls, 1);
        }
    }
}
