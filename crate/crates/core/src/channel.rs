//! Per-slot wireless environment: i.i.d. Rayleigh channels between every
//! user and every AP, plus the fixed per-AP interference spaces.

use rand::Rng;

use crate::config::{NetworkConfig, UserId};
use crate::matkernels::{null_space, random_orthonormal, ComplexMatrix, LinalgError};
use crate::rng::{Purpose, StreamSource};

/// `Q_k` (interference space, `M x (M-S)`) and its orthogonal complement
/// `U_k` (signal space, `M x S`) for every AP. Drawn once per run.
#[derive(Debug, Clone)]
pub struct InterferenceSpaces {
    pub q: Vec<ComplexMatrix>,
    pub u: Vec<ComplexMatrix>,
}

impl InterferenceSpaces {
    pub fn signal_space(&self, ap: usize) -> &ComplexMatrix {
        &self.u[ap]
    }

    pub fn interference_space(&self, ap: usize) -> &ComplexMatrix {
        &self.q[ap]
    }

    /// True when `U_k` is the identity, i.e. the signal space is the whole
    /// receive space in canonical coordinates.
    pub fn is_trivial(&self, ap: usize) -> bool {
        let u = &self.u[ap];
        u.rows() == u.cols() && *u == ComplexMatrix::identity(u.rows())
    }
}

pub fn make_interference_spaces(
    cfg: &NetworkConfig,
    streams: &StreamSource,
) -> Result<InterferenceSpaces, LinalgError> {
    let draw = |ap: usize| -> Result<(ComplexMatrix, ComplexMatrix), LinalgError> {
        let mut rng = streams.stream(Purpose::Spaces, 0, 0, 0, ap);
        let q = random_orthonormal(cfg.m, cfg.interference_dim(), &mut rng)?;
        let u = null_space(&q, cfg.s)?;
        Ok((q, u))
    };
    let mut q = Vec::with_capacity(cfg.k);
    let mut u = Vec::with_capacity(cfg.k);
    if cfg.shared_interference_space {
        let (q0, u0) = draw(0)?;
        for _ in 0..cfg.k {
            q.push(q0.clone());
            u.push(u0.clone());
        }
    } else {
        for ap in 0..cfg.k {
            let (qk, uk) = draw(ap)?;
            q.push(qk);
            u.push(uk);
        }
    }
    Ok(InterferenceSpaces { q, u })
}

/// Draws `H_ap^{[ran, user]}` (`M x L`, CN(0,1) entries) from its own substream.
pub fn draw_channel(
    cfg: &NetworkConfig,
    streams: &StreamSource,
    purpose: Purpose,
    slot: u64,
    ap: usize,
    user: UserId,
) -> ComplexMatrix {
    let mut rng = streams.stream(purpose, slot, user.ran, user.user, ap);
    ComplexMatrix::random_gaussian(cfg.m, cfg.l, &mut rng)
}

/// Bernoulli(p) access draw for one user in one slot.
pub fn draw_access(p: f64, streams: &StreamSource, slot: u64, user: UserId) -> bool {
    access_score(streams, slot, user) < p
}

/// The uniform variate behind [`draw_access`]; the user transmits iff it is
/// below `p`, so one draw serves every `p` at once.
pub fn access_score(streams: &StreamSource, slot: u64, user: UserId) -> f64 {
    let mut rng = streams.stream(Purpose::Access, slot, user.ran, user.user, 0);
    rng.gen::<f64>()
}

/// One slot's channels and activity indicators.
#[derive(Debug, Clone)]
pub struct SlotRealization {
    k: usize,
    n: usize,
    /// Indexed by `(ap * K + ran) * N + user`.
    channels: Vec<ComplexMatrix>,
    /// Indexed by `ran * N + user`.
    pub activity: Vec<bool>,
}

impl SlotRealization {
    pub fn channel(&self, ap: usize, user: UserId) -> &ComplexMatrix {
        &self.channels[(ap * self.k + user.ran) * self.n + user.user]
    }

    pub fn is_active(&self, user: UserId) -> bool {
        self.activity[user.flat(self.n)]
    }

    pub fn active_per_ran(&self) -> Vec<usize> {
        self.activity
            .chunks(self.n)
            .map(|c| c.iter().filter(|&&a| a).count())
            .collect()
    }
}

/// Materializes every channel of a slot. `activity_override` (length `K*N`)
/// replaces the Bernoulli(p) draws.
pub fn draw_slot(
    cfg: &NetworkConfig,
    streams: &StreamSource,
    slot: u64,
    activity_override: Option<&[bool]>,
) -> SlotRealization {
    let mut channels = Vec::with_capacity(cfg.k * cfg.k * cfg.n);
    for ap in 0..cfg.k {
        for ran in 0..cfg.k {
            for user in 0..cfg.n {
                channels.push(draw_channel(cfg, streams, Purpose::Channel, slot, ap, UserId::new(ran, user)));
            }
        }
    }
    let activity = match activity_override {
        Some(a) => {
            assert_eq!(a.len(), cfg.total_users(), "activity override length");
            a.to_vec()
        }
        None => (0..cfg.k)
            .flat_map(|ran| (0..cfg.n).map(move |user| UserId::new(ran, user)))
            .map(|u| draw_access(cfg.p, streams, slot, u))
            .collect(),
    };
    SlotRealization {
        k: cfg.k,
        n: cfg.n,
        channels,
        activity,
    }
}

/// Lazily drawn channels of one slot. Each matrix comes from the same
/// substream [`draw_slot`] would use, so the two views agree exactly.
pub struct SlotChannels<'a> {
    cfg: &'a NetworkConfig,
    streams: &'a StreamSource,
    purpose: Purpose,
    slot: u64,
    cache: Vec<Option<ComplexMatrix>>,
}

impl<'a> SlotChannels<'a> {
    pub fn new(cfg: &'a NetworkConfig, streams: &'a StreamSource, purpose: Purpose, slot: u64) -> Self {
        Self {
            cfg,
            streams,
            purpose,
            slot,
            cache: vec![None; cfg.k * cfg.k * cfg.n],
        }
    }

    pub fn get(&mut self, ap: usize, user: UserId) -> &ComplexMatrix {
        let idx = (ap * self.cfg.k + user.ran) * self.cfg.n + user.user;
        let (cfg, streams, purpose, slot) = (self.cfg, self.streams, self.purpose, self.slot);
        self.cache[idx].get_or_insert_with(|| draw_channel(cfg, streams, purpose, slot, ap, user))
    }

    /// Throws away a user's channels so the next access redraws them from a
    /// different slot address. Used by rejection sampling.
    pub fn redraw_user(&mut self, user: UserId, slot: u64) {
        for ap in 0..self.cfg.k {
            let idx = (ap * self.cfg.k + user.ran) * self.cfg.n + user.user;
            self.cache[idx] = Some(draw_channel(self.cfg, self.streams, self.purpose, slot, ap, user));
        }
    }
}
