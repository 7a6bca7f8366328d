//! Medium access decisions: plain p-persistence and the CDF-threshold rule
//! that lets a user transmit only in slots where its current leakage is low
//! relative to its own history.

use std::fmt::Write as _;

use rand::Rng;

/// Points of the recursive-window CDF grid.
pub const GRID_POINTS: usize = 1024;
pub const GRID_MIN: f64 = 1e-8;
pub const GRID_MAX: f64 = 1e3;

const FORMAT_TAG: &str = "lif-cdf v1";

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MacError {
    #[error("leakage CDF has no samples yet")]
    NotWarmedUp,
    #[error("malformed CDF file at line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

#[derive(Debug, Clone, PartialEq)]
enum Store {
    /// Every observed sample. `sorted` tracks whether `samples` is ordered.
    Samples { samples: Vec<f64>, sorted: bool },
    /// CDF ordinates on a fixed grid, updated with an exponential window.
    Window { grid: Vec<f64>, cdf: Vec<f64>, window: f64 },
}

/// Empirical CDF of one user's leakage metric.
#[derive(Debug, Clone, PartialEq)]
pub struct LifCdfEstimator {
    store: Store,
    count: u64,
}

fn log_grid() -> Vec<f64> {
    let (lo, hi) = (GRID_MIN.ln(), GRID_MAX.ln());
    (0..GRID_POINTS)
        .map(|i| (lo + (hi - lo) * i as f64 / (GRID_POINTS - 1) as f64).exp())
        .collect()
}

impl LifCdfEstimator {
    pub fn sample_buffer() -> Self {
        Self {
            store: Store::Samples { samples: Vec::new(), sorted: true },
            count: 0,
        }
    }

    pub fn with_capacity(n: usize) -> Self {
        Self {
            store: Store::Samples { samples: Vec::with_capacity(n), sorted: true },
            count: 0,
        }
    }

    /// Recursive form with observation window `window` on the default
    /// log-spaced grid. The CDF starts at zero everywhere.
    pub fn recursive(window: f64) -> Self {
        assert!(window > 0.0, "observation window must be positive");
        Self {
            store: Store::Window {
                grid: log_grid(),
                cdf: vec![0.0; GRID_POINTS],
                window,
            },
            count: 0,
        }
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn is_recursive(&self) -> bool {
        matches!(self.store, Store::Window { .. })
    }

    /// Folds in one observed leakage value.
    pub fn update(&mut self, eta0: f64) {
        debug_assert!(eta0 >= 0.0);
        match &mut self.store {
            Store::Samples { samples, sorted } => {
                if *sorted && samples.last().is_some_and(|&last| eta0 < last) {
                    *sorted = false;
                }
                samples.push(eta0);
            }
            Store::Window { grid, cdf, window } => {
                let w = *window;
                for (g, f) in grid.iter().zip(cdf.iter_mut()) {
                    *f = if *g < eta0 { w * *f / (w + 1.0) } else { (w * *f + 1.0) / (w + 1.0) };
                }
            }
        }
        self.count += 1;
    }

    /// Sorts the sample buffer so evaluation is a binary search.
    pub fn finalize(&mut self) {
        if let Store::Samples { samples, sorted } = &mut self.store {
            if !*sorted {
                samples.sort_by(f64::total_cmp);
                *sorted = true;
            }
        }
    }

    pub fn eval(&self, eta: f64) -> Result<f64, MacError> {
        if self.count == 0 {
            return Err(MacError::NotWarmedUp);
        }
        Ok(match &self.store {
            Store::Samples { samples, sorted } => {
                let below = if *sorted {
                    samples.partition_point(|&x| x <= eta)
                } else {
                    samples.iter().filter(|&&x| x <= eta).count()
                };
                below as f64 / samples.len() as f64
            }
            Store::Window { grid, cdf, .. } => {
                if eta < grid[0] {
                    0.0
                } else if eta >= grid[GRID_POINTS - 1] {
                    cdf[GRID_POINTS - 1]
                } else {
                    let hi = grid.partition_point(|&g| g <= eta);
                    let lo = hi - 1;
                    let t = (eta - grid[lo]) / (grid[hi] - grid[lo]);
                    cdf[lo] + t * (cdf[hi] - cdf[lo])
                }
            }
        })
    }

    /// Randomized probability transform: `F(eta-) + u (F(eta) - F(eta-))`.
    /// Uniform on [0, 1] even when the leakage distribution has atoms (a
    /// nulled beam's leakage is rounding noise, which repeats exactly).
    pub fn score(&self, eta: f64, u: f64) -> Result<f64, MacError> {
        let hi = self.eval(eta)?;
        let lo = match &self.store {
            Store::Samples { samples, sorted: true } => {
                samples.partition_point(|&x| x < eta) as f64 / samples.len() as f64
            }
            Store::Samples { samples, sorted: false } => {
                samples.iter().filter(|&&x| x < eta).count() as f64 / samples.len() as f64
            }
            Store::Window { .. } => hi,
        };
        Ok(lo + u * (hi - lo))
    }

    /// Smallest stored sample `x` with `F(x) >= q` (sample-buffer mode only).
    pub fn quantile(&self, q: f64) -> Option<f64> {
        match &self.store {
            Store::Samples { samples, sorted: true } if !samples.is_empty() => {
                let n = samples.len();
                let idx = ((q * n as f64).ceil() as usize).clamp(1, n) - 1;
                Some(samples[idx])
            }
            _ => None,
        }
    }

    /// Versioned text form: a tag line, mode line, count, then either one
    /// sample per line or `grid cdf` pairs. Floats use shortest round-trip
    /// formatting, so parsing restores the estimator exactly.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "{FORMAT_TAG}").unwrap();
        match &self.store {
            Store::Samples { samples, sorted } => {
                let mut s = samples.clone();
                if !sorted {
                    s.sort_by(f64::total_cmp);
                }
                writeln!(out, "mode sample-buffer").unwrap();
                writeln!(out, "count {}", self.count).unwrap();
                for x in s {
                    writeln!(out, "{x:e}").unwrap();
                }
            }
            Store::Window { grid, cdf, window } => {
                writeln!(out, "mode recursive-window").unwrap();
                writeln!(out, "window {window:e}").unwrap();
                writeln!(out, "count {}", self.count).unwrap();
                for (g, f) in grid.iter().zip(cdf) {
                    writeln!(out, "{g:e} {f:e}").unwrap();
                }
            }
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, MacError> {
        let err = |line: usize, msg: &str| MacError::Parse { line, msg: msg.to_string() };
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
        let mut next = |what: &str| lines.next().ok_or_else(|| err(0, &format!("missing {what}")));
        let (ln, tag) = next("format tag")?;
        if tag != FORMAT_TAG {
            return Err(err(ln, "unknown format tag"));
        }
        let parse_f = |ln: usize, s: &str| s.parse::<f64>().map_err(|_| err(ln, "bad number"));
        let (ln, mode) = next("mode")?;
        match mode {
            "mode sample-buffer" => {
                let (ln, c) = next("count")?;
                let count = c
                    .strip_prefix("count ")
                    .and_then(|v| v.parse::<u64>().ok())
                    .ok_or_else(|| err(ln, "bad count"))?;
                let mut samples = Vec::with_capacity(count as usize);
                for (ln, l) in lines {
                    if l.is_empty() {
                        continue;
                    }
                    samples.push(parse_f(ln, l)?);
                }
                if samples.len() as u64 != count {
                    return Err(err(ln, "sample count does not match"));
                }
                let mut est = Self { store: Store::Samples { samples, sorted: false }, count };
                est.finalize();
                Ok(est)
            }
            "mode recursive-window" => {
                let (wl, w) = next("window")?;
                let window = parse_f(wl, w.strip_prefix("window ").ok_or_else(|| err(wl, "bad window"))?)?;
                let (cl, c) = next("count")?;
                let count = c
                    .strip_prefix("count ")
                    .and_then(|v| v.parse::<u64>().ok())
                    .ok_or_else(|| err(cl, "bad count"))?;
                let mut grid = Vec::new();
                let mut cdf = Vec::new();
                for (ln, l) in lines {
                    if l.is_empty() {
                        continue;
                    }
                    let mut parts = l.split_whitespace();
                    let g = parse_f(ln, parts.next().unwrap_or(""))?;
                    let f = parse_f(ln, parts.next().ok_or_else(|| err(ln, "missing ordinate"))?)?;
                    grid.push(g);
                    cdf.push(f);
                }
                if grid.len() != GRID_POINTS {
                    return Err(err(cl, "grid length"));
                }
                Ok(Self { store: Store::Window { grid, cdf, window }, count })
            }
            _ => Err(err(ln, "unknown mode")),
        }
    }
}

/// Standalone form of [`LifCdfEstimator::update`].
pub fn cdf_update(est: &mut LifCdfEstimator, eta0: f64) {
    est.update(eta0);
}

pub fn cdf_eval(est: &LifCdfEstimator, eta: f64) -> Result<f64, MacError> {
    est.eval(eta)
}

/// Transmit when the current leakage sits below the `p`-quantile of the
/// user's own leakage history.
pub fn transmit_decision_opportunistic(est: &LifCdfEstimator, eta: f64, p: f64) -> Result<bool, MacError> {
    Ok(est.eval(eta)? < p)
}

pub fn transmit_decision_bernoulli<R: Rng + ?Sized>(p: f64, rng: &mut R) -> bool {
    rng.gen::<f64>() < p
}

/// Leakage CDFs for every user, or one CDF shared by all of them.
#[derive(Debug, Clone)]
pub struct CdfBank {
    n: usize,
    estimators: Vec<LifCdfEstimator>,
}

impl CdfBank {
    pub fn shared(est: LifCdfEstimator) -> Self {
        Self { n: 0, estimators: vec![est] }
    }

    /// `estimators` is indexed by `ran * n + user`.
    pub fn per_user(n: usize, estimators: Vec<LifCdfEstimator>) -> Self {
        Self { n, estimators }
    }

    pub fn is_shared(&self) -> bool {
        self.estimators.len() == 1
    }

    pub fn get(&self, ran: usize, user: usize) -> &LifCdfEstimator {
        if self.is_shared() {
            &self.estimators[0]
        } else {
            &self.estimators[ran * self.n + user]
        }
    }
}
