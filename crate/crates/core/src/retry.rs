//! Retry with exponential backoff, token-bucket rate limiting and an
//! in-flight request bound. Shared by the remote embedding and chat clients.

use std::sync::{Condvar, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay_ms: u64,
    pub max_delay_ms: u64,
    pub multiplier: f64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 5,
            base_delay_ms: 500,
            max_delay_ms: 30_000,
            multiplier: 2.0,
        }
    }
}

impl RetryPolicy {
    /// Delay before attempt `attempt + 1`, where `attempt` is 1-based.
    pub fn delay_after(&self, attempt: u32) -> Duration {
        let exp = self.multiplier.powi(attempt.saturating_sub(1) as i32);
        let ms = (self.base_delay_ms as f64 * exp).min(self.max_delay_ms as f64);
        Duration::from_millis(ms as u64)
    }
}

/// Outcome of one attempt, as classified by the caller.
pub enum Attempt<T, E> {
    Done(T),
    Retryable(E),
    Fatal(E),
}

/// Runs `op` until it succeeds, fails fatally, or exhausts the policy.
/// Returns the value together with the number of attempts made; on failure
/// returns the last error and the attempt count.
pub fn with_retry<T, E, F>(policy: &RetryPolicy, mut op: F) -> Result<(T, u32), (E, u32)>
where
    F: FnMut(u32) -> Attempt<T, E>,
{
    let max = policy.max_attempts.max(1);
    let mut attempt = 1;
    loop {
        match op(attempt) {
            Attempt::Done(v) => return Ok((v, attempt)),
            Attempt::Fatal(e) => return Err((e, attempt)),
            Attempt::Retryable(e) => {
                if attempt >= max {
                    return Err((e, attempt));
                }
                let delay = policy.delay_after(attempt);
                log::warn!("attempt {attempt} failed, retrying in {delay:?}");
                thread::sleep(delay);
                attempt += 1;
            }
        }
    }
}

/// Token bucket over requests per minute. A capacity of zero disables it.
#[derive(Debug)]
pub struct RateLimiter {
    per_minute: u32,
    state: Mutex<Bucket>,
}

#[derive(Debug)]
struct Bucket {
    tokens: f64,
    last: Instant,
}

impl RateLimiter {
    pub fn new(per_minute: u32) -> Self {
        RateLimiter {
            per_minute,
            state: Mutex::new(Bucket {
                tokens: per_minute as f64,
                last: Instant::now(),
            }),
        }
    }

    pub fn unlimited() -> Self {
        Self::new(0)
    }

    /// Blocks until a token is available.
    pub fn acquire(&self) {
        if self.per_minute == 0 {
            return;
        }
        let rate = self.per_minute as f64 / 60.0;
        loop {
            let wait = {
                let mut b = self.state.lock().unwrap();
                let now = Instant::now();
                let elapsed = now.duration_since(b.last).as_secs_f64();
                b.tokens = (b.tokens + elapsed * rate).min(self.per_minute as f64);
                b.last = now;
                if b.tokens >= 1.0 {
                    b.tokens -= 1.0;
                    return;
                }
                (1.0 - b.tokens) / rate
            };
            thread::sleep(Duration::from_secs_f64(wait));
        }
    }
}

/// Counting semaphore bounding concurrent requests.
#[derive(Debug)]
pub struct InflightLimiter {
    max: usize,
    current: Mutex<usize>,
    cv: Condvar,
}

impl InflightLimiter {
    pub fn new(max: usize) -> Self {
        InflightLimiter {
            max: max.max(1),
            current: Mutex::new(0),
            cv: Condvar::new(),
        }
    }

    pub fn acquire(&self) -> InflightPermit<'_> {
        let mut n = self.current.lock().unwrap();
        while *n >= self.max {
            n = self.cv.wait(n).unwrap();
        }
        *n += 1;
        InflightPermit { limiter: self }
    }
}

pub struct InflightPermit<'a> {
    limiter: &'a InflightLimiter,
}

impl Drop for InflightPermit<'_> {
    fn drop(&mut self) {
        let mut n = self.limiter.current.lock().unwrap();
        *n -= 1;
        self.limiter.cv.notify_one();
    }
}

/// Runs `f` over `items` on at most `workers` threads and returns the results
/// in input order.
pub fn ordered_parallel_map<T, R, F>(items: &[T], workers: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(usize, &T) -> R + Sync,
{
    let workers = workers.max(1).min(items.len().max(1));
    if workers == 1 {
        return items.iter().enumerate().map(|(i, t)| f(i, t)).collect();
    }
    let next = std::sync::atomic::AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<R>>> = items.iter().map(|_| Mutex::new(None)).collect();
    thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                if i >= items.len() {
                    break;
                }
                let r = f(i, &items[i]);
                *slots[i].lock().unwrap() = Some(r);
            });
        }
    });
    slots
        .into_iter()
        .map(|s| s.into_inner().unwrap().expect("every slot filled"))
        .collect()
}
