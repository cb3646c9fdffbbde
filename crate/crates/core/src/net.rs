//! Shared plumbing for the live lookup clients: a swappable HTTP transport,
//! a request-rate limiter, bounded retries and a bounded worker pool.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransportError {
    pub retryable: bool,
    pub message: String,
}

/// Minimal blocking GET used by every live client, so tests can substitute a
/// recording mock.
pub trait HttpGet: Send + Sync {
    fn get(&self, url: &str, query: &[(&str, &str)]) -> Result<String, TransportError>;
}

pub struct UreqTransport {
    agent: ureq::Agent,
}

impl UreqTransport {
    pub fn new(timeout: Duration) -> Self {
        let config = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .user_agent(concat!("concept-goodness/", env!("CARGO_PKG_VERSION")))
            .build();
        UreqTransport {
            agent: config.into(),
        }
    }
}

impl Default for UreqTransport {
    fn default() -> Self {
        Self::new(Duration::from_secs(30))
    }
}

impl HttpGet for UreqTransport {
    fn get(&self, url: &str, query: &[(&str, &str)]) -> Result<String, TransportError> {
        let response = self
            .agent
            .get(url)
            .query_pairs(query.iter().copied())
            .call();
        match response {
            Ok(mut r) => r.body_mut().read_to_string().map_err(|e| TransportError {
                retryable: true,
                message: e.to_string(),
            }),
            Err(ureq::Error::StatusCode(code)) => Err(TransportError {
                retryable: code == 429 || code >= 500,
                message: format!("http status {code}"),
            }),
            Err(e) => Err(TransportError {
                retryable: true,
                message: e.to_string(),
            }),
        }
    }
}

pub trait Clock: Send + Sync {
    /// Time elapsed since an arbitrary fixed origin.
    fn now(&self) -> Duration;
    fn sleep(&self, d: Duration);
}

pub struct SystemClock {
    origin: Instant,
}

impl Default for SystemClock {
    fn default() -> Self {
        SystemClock {
            origin: Instant::now(),
        }
    }
}

impl Clock for SystemClock {
    fn now(&self) -> Duration {
        self.origin.elapsed()
    }

    fn sleep(&self, d: Duration) {
        std::thread::sleep(d)
    }
}

/// Spaces request start times at least `1 / rate` apart across all callers.
pub struct RateLimiter {
    interval: Duration,
    next_slot: Mutex<Option<Duration>>,
}

impl RateLimiter {
    pub fn per_second(rate: f64) -> Self {
        assert!(rate > 0.0 && rate.is_finite(), "rate must be positive");
        RateLimiter {
            interval: Duration::from_secs_f64(1.0 / rate),
            next_slot: Mutex::new(None),
        }
    }

    pub fn interval(&self) -> Duration {
        self.interval
    }

    /// Blocks until the caller may issue one request.
    pub fn acquire(&self, clock: &dyn Clock) {
        // The lock is held while sleeping so waiting callers queue in order.
        let mut next = self.next_slot.lock().unwrap_or_else(|e| e.into_inner());
        let mut now = clock.now();
        if let Some(slot) = *next {
            if now < slot {
                clock.sleep(slot - now);
                now = slot.max(clock.now());
            }
        }
        *next = Some(now + self.interval);
    }
}

#[derive(Debug, Clone, Copy)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub backoff: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 3,
            backoff: Duration::from_millis(500),
        }
    }
}

/// Runs `op` up to `policy.max_attempts` times while it fails retryably,
/// doubling the backoff between attempts.
pub fn with_retries<T>(
    policy: RetryPolicy,
    clock: &dyn Clock,
    mut op: impl FnMut() -> Result<T, TransportError>,
) -> Result<T> {
    let attempts = policy.max_attempts.max(1);
    let mut delay = policy.backoff;
    let mut last = String::new();
    for attempt in 1..=attempts {
        match op() {
            Ok(v) => return Ok(v),
            Err(e) if e.retryable && attempt < attempts => {
                log::debug!("attempt {attempt} failed: {}", e.message);
                last = e.message;
                clock.sleep(delay);
                delay *= 2;
            }
            Err(e) => {
                return Err(Error::Network {
                    attempts: attempt,
                    message: e.message,
                })
            }
        }
    }
    Err(Error::Network {
        attempts,
        message: last,
    })
}

/// Maps `f` over `items` on at most `limit` worker threads, returning results
/// in input order.
pub fn bounded_map<T, R, F>(items: &[T], limit: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync,
{
    let workers = limit.max(1).min(items.len());
    if workers <= 1 {
        return items.iter().map(f).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<R>>> = Mutex::new((0..items.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(item) = items.get(i) else { break };
                let r = f(item);
                slots.lock().unwrap_or_else(|e| e.into_inner())[i] = Some(r);
            });
        }
    });
    slots
        .into_inner()
        .unwrap_or_else(|e| e.into_inner())
        .into_iter()
        .map(|r| r.expect("every slot is filled"))
        .collect()
}
