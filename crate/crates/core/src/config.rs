//! Scenario parameters shared by every layer.

use serde::{Deserialize, Serialize};

/// Largest network count the substream encoding supports.
pub const MAX_RANS: usize = 63;
/// Largest per-network user count the substream encoding supports.
pub const MAX_USERS: usize = 4095;
/// Largest antenna count on either side of a link.
pub const MAX_ANTENNAS: usize = 64;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("{name} = {value} is out of range ({range})")]
    OutOfRange {
        name: &'static str,
        value: String,
        range: String,
    },
    #[error(
        "interference nulling needs S < min{{L/(K-1), M}}; got S = {s}, L = {l}, K = {k}, M = {m}"
    )]
    NullingInfeasible { s: usize, l: usize, k: usize, m: usize },
    #[error("{0}")]
    Invalid(String),
}

/// Parameters of `K` overlapped random access networks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    /// Number of overlapped networks (one AP each).
    pub k: usize,
    /// Users per network.
    pub n: usize,
    /// Antennas per AP.
    pub m: usize,
    /// Antennas per user.
    pub l: usize,
    /// Signal-space dimension reserved at each AP.
    pub s: usize,
    /// Per-slot transmit probability.
    pub p: f64,
    /// Average per-antenna received SNR in dB (unit transmit power).
    pub snr_db: f64,
    /// Decode threshold in dB.
    pub sinr_threshold_db: f64,
    /// All APs use the same interference space.
    pub shared_interference_space: bool,
    pub seed: u64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            k: 3,
            n: 10,
            m: 3,
            l: 3,
            s: 3,
            p: 0.1,
            snr_db: 0.0,
            sinr_threshold_db: 0.0,
            shared_interference_space: false,
            seed: 0,
        }
    }
}

fn range_err(name: &'static str, value: impl ToString, range: &str) -> ConfigError {
    ConfigError::OutOfRange {
        name,
        value: value.to_string(),
        range: range.to_string(),
    }
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(1..=MAX_RANS).contains(&self.k) {
            return Err(range_err("K", self.k, &format!("1..={MAX_RANS}")));
        }
        if !(1..=MAX_USERS).contains(&self.n) {
            return Err(range_err("N", self.n, &format!("1..={MAX_USERS}")));
        }
        if !(1..=MAX_ANTENNAS).contains(&self.m) {
            return Err(range_err("M", self.m, &format!("1..={MAX_ANTENNAS}")));
        }
        if !(1..=MAX_ANTENNAS).contains(&self.l) {
            return Err(range_err("L", self.l, &format!("1..={MAX_ANTENNAS}")));
        }
        if !(1..=self.m).contains(&self.s) {
            return Err(range_err("S", self.s, "1..=M"));
        }
        if !(0.0..=1.0).contains(&self.p) {
            return Err(range_err("p", self.p, "[0, 1]"));
        }
        if !self.snr_db.is_finite() {
            return Err(range_err("snr-db", self.snr_db, "finite"));
        }
        if !self.sinr_threshold_db.is_finite() {
            return Err(range_err("sinr-threshold-db", self.sinr_threshold_db, "finite"));
        }
        Ok(())
    }

    /// Receiver noise variance for unit transmit power.
    pub fn noise_power(&self) -> f64 {
        10f64.powf(-self.snr_db / 10.0)
    }

    pub fn threshold_linear(&self) -> f64 {
        10f64.powf(self.sinr_threshold_db / 10.0)
    }

    pub fn total_users(&self) -> usize {
        self.k * self.n
    }

    /// Interference space dimension `M - S`.
    pub fn interference_dim(&self) -> usize {
        self.m - self.s
    }

    /// `S < min{L/(K-1), M}`, evaluated without division.
    pub fn nulling_feasible(&self) -> bool {
        self.s < self.m && (self.k == 1 || self.s * (self.k - 1) < self.l)
    }

    pub fn require_nulling_feasible(&self) -> Result<(), ConfigError> {
        if self.nulling_feasible() {
            Ok(())
        } else {
            Err(ConfigError::NullingInfeasible {
                s: self.s,
                l: self.l,
                k: self.k,
                m: self.m,
            })
        }
    }

    /// Rows of the stacked leakage matrix, `(K-1) S`.
    pub fn leakage_rows(&self) -> usize {
        (self.k - 1) * self.s
    }
}

/// Flat index of user `j` of network `i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct UserId {
    pub ran: usize,
    pub user: usize,
}

impl UserId {
    pub fn new(ran: usize, user: usize) -> Self {
        Self { ran, user }
    }

    pub fn flat(&self, n: usize) -> usize {
        self.ran * n + self.user
    }
}
