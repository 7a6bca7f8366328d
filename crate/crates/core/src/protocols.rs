//! Per-slot orchestration of every access protocol: who transmits, with
//! which beam, and what each AP manages to decode.

use std::fmt;
use std::str::FromStr;

use rand::seq::index::sample;
use rand::Rng;

use crate::channel::{access_score, InterferenceSpaces, SlotChannels};
use crate::config::{ConfigError, NetworkConfig, UserId};
use crate::mac::{CdfBank, LifCdfEstimator, MacError};
use crate::matkernels::{standard_complex_normal, vec_norm_sqr, CVector, LinalgError};
use crate::phy::{
    build_leakage_matrix, svd_beamformer, total_lif, zf_decode_linear, ChannelView, Stream,
};
use crate::rng::{derive_seed, Purpose, StreamSource};

/// Attempts allowed per active user when conditioning on opportunistic
/// transmit decisions.
pub const REJECTION_BUDGET: u64 = 1_000_000;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ProtocolError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Mac(#[from] MacError),
    #[error("{0} needs warmed-up leakage CDFs")]
    MissingCdf(ProtocolKind),
    #[error("cannot condition on m = {m}, j = {j}: {reason}")]
    Infeasible { m: usize, j: usize, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
pub enum ProtocolKind {
    /// Multi-packet reception: random beams, joint ZF of everyone.
    Mpr,
    /// Interference nulling into the other APs' signal spaces.
    In,
    /// SVD beamforming plus CDF-threshold access.
    Oia,
    /// CDF-threshold access with random beams.
    OiaNoTxbf,
    /// SVD beamforming with plain p-persistent access.
    OiaNoOra,
}

impl ProtocolKind {
    pub const ALL: [ProtocolKind; 5] = [Self::Mpr, Self::In, Self::Oia, Self::OiaNoTxbf, Self::OiaNoOra];

    pub fn name(&self) -> &'static str {
        match self {
            Self::Mpr => "mpr",
            Self::In => "in",
            Self::Oia => "oia",
            Self::OiaNoTxbf => "oia-no-txbf",
            Self::OiaNoOra => "oia-no-ora",
        }
    }

    /// Access decided by the leakage CDF rather than a coin flip.
    pub fn is_opportunistic(&self) -> bool {
        matches!(self, Self::Oia | Self::OiaNoTxbf)
    }

    /// Beam chosen by leakage minimization rather than at random.
    pub fn uses_svd_beam(&self) -> bool {
        matches!(self, Self::In | Self::Oia | Self::OiaNoOra)
    }

    pub fn validate(&self, cfg: &NetworkConfig) -> Result<(), ConfigError> {
        cfg.validate()?;
        if *self == Self::In {
            cfg.require_nulling_feasible()?;
        }
        Ok(())
    }
}

impl fmt::Display for ProtocolKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ProtocolKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown protocol '{s}' (expected mpr, in, oia, oia-no-txbf, oia-no-ora)"))
    }
}

/// What happened in one slot.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotOutcome {
    /// Packets decoded by each AP from its own users.
    pub delivered: Vec<usize>,
    /// Indexed by `ran * N + user`.
    pub transmitted: Vec<bool>,
    pub success: Vec<bool>,
    /// `s_i`.
    pub active_per_ran: Vec<usize>,
    /// `s`.
    pub total_active: usize,
}

impl SlotOutcome {
    pub fn total_delivered(&self) -> usize {
        self.delivered.iter().sum()
    }
}

/// Everything fixed for the duration of a run.
#[derive(Debug, Clone, Copy)]
pub struct ProtocolContext<'a> {
    pub kind: ProtocolKind,
    pub cfg: &'a NetworkConfig,
    pub spaces: &'a InterferenceSpaces,
    pub cdfs: Option<&'a CdfBank>,
}

impl<'a> ProtocolContext<'a> {
    pub fn new(
        kind: ProtocolKind,
        cfg: &'a NetworkConfig,
        spaces: &'a InterferenceSpaces,
        cdfs: Option<&'a CdfBank>,
    ) -> Result<Self, ProtocolError> {
        kind.validate(cfg)?;
        if kind.is_opportunistic() && cdfs.is_none() {
            return Err(ProtocolError::MissingCdf(kind));
        }
        Ok(Self { kind, cfg, spaces, cdfs })
    }

    fn cdf(&self, user: UserId) -> &LifCdfEstimator {
        self.cdfs.expect("checked in ProtocolContext::new").get(user.ran, user.user)
    }
}

/// Isotropic unit vector.
pub fn random_unit_vector<R: Rng + ?Sized>(len: usize, rng: &mut R) -> CVector {
    loop {
        let v: CVector = (0..len).map(|_| standard_complex_normal(rng)).collect();
        let n = vec_norm_sqr(&v).sqrt();
        if n > 1e-300 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

/// The beam a user of this protocol would transmit with, and the total
/// leakage that beam causes at the other APs. `beam_slot` addresses the
/// substream of the random reference beam.
pub fn user_beam<C: ChannelView + ?Sized>(
    kind: ProtocolKind,
    user: UserId,
    channels: &mut C,
    spaces: &InterferenceSpaces,
    streams: &StreamSource,
    beam_purpose: Purpose,
    beam_slot: u64,
    l: usize,
) -> Result<(CVector, f64), LinalgError> {
    if kind.uses_svd_beam() {
        let g = build_leakage_matrix(user, channels, spaces);
        let b = svd_beamformer(&g)?;
        Ok((b.vector, b.lif))
    } else {
        let mut rng = streams.stream(beam_purpose, beam_slot, user.ran, user.user, 0);
        let w = random_unit_vector(l, &mut rng);
        let lif = if kind.is_opportunistic() {
            total_lif(user, &w, channels, spaces)
        } else {
            0.0
        };
        Ok((w, lif))
    }
}

/// An active user and its beam.
#[derive(Clone)]
struct Active {
    user: UserId,
    beam: CVector,
}

/// How an AP decodes its own users.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Receiver {
    /// What the protocol does: joint ZF on the full array while the total
    /// stream count fits, the signal-space receiver otherwise.
    #[default]
    Adaptive,
    /// Always project onto the signal space and ZF-decode the own users,
    /// treating every other stream as interference.
    SignalSpace,
}

/// Decodes AP `ap`'s own users. Returns `(user, success)` for each of them.
fn decode_at_ap<C: ChannelView + ?Sized>(
    ctx: &ProtocolContext<'_>,
    ap: usize,
    active: &[Active],
    channels: &mut C,
    receiver: Receiver,
) -> Vec<(UserId, bool)> {
    let cfg = ctx.cfg;
    let own: Vec<usize> = (0..active.len()).filter(|&i| active[i].user.ran == ap).collect();
    if own.is_empty() {
        return Vec::new();
    }
    let all_fail = || own.iter().map(|&i| (active[i].user, false)).collect();
    let s = active.len();
    let noise = cfg.noise_power();
    let threshold = cfg.threshold_linear();

    if receiver == Receiver::Adaptive && s <= cfg.m {
        // Joint ZF over every active user on the full array.
        let desired: Vec<Stream> = active
            .iter()
            .map(|a| Stream {
                owner: a.user,
                channel: channels.channel(ap, a.user).mul_vec(&a.beam),
            })
            .collect();
        let report = zf_decode_linear(&desired, &[], noise, 1.0, threshold);
        return own.iter().map(|&i| (active[i].user, report.success[i])).collect();
    }
    if (receiver == Receiver::Adaptive && ctx.kind == ProtocolKind::Mpr) || own.len() > cfg.s {
        return all_fail();
    }
    // Too many streams for the full array: decode own users inside the
    // signal space and treat what leaks into it as interference.
    let u = ctx.spaces.signal_space(ap);
    let mut desired = Vec::with_capacity(own.len());
    let mut interferers = Vec::with_capacity(s - own.len());
    for a in active {
        let projected = u.adjoint_mul_vec(&channels.channel(ap, a.user).mul_vec(&a.beam));
        if a.user.ran == ap {
            desired.push(Stream { owner: a.user, channel: projected });
        } else {
            interferers.push(projected);
        }
    }
    let report = zf_decode_linear(&desired, &interferers, noise, 1.0, threshold);
    report.owners.into_iter().zip(report.success).collect()
}

/// Runs one slot of the protocol. Channels, access coins and reference
/// beams all come from `streams` at address `slot`.
pub fn run_slot(ctx: &ProtocolContext<'_>, streams: &StreamSource, slot: u64) -> Result<SlotOutcome, ProtocolError> {
    let mut out = run_slot_multi(ctx, streams, slot, &[ctx.cfg.p])?;
    Ok(out.pop().expect("one access probability"))
}

/// Runs one slot at several access probabilities with common randomness.
///
/// Channels, beams and leakage do not depend on `p`; each user carries a
/// score (its access coin, or the CDF value of its leakage) and transmits at
/// `p` iff the score is below `p`. Entry `i` of the result equals
/// [`run_slot`] with `cfg.p = ps[i]`.
pub fn run_slot_multi(
    ctx: &ProtocolContext<'_>,
    streams: &StreamSource,
    slot: u64,
    ps: &[f64],
) -> Result<Vec<SlotOutcome>, ProtocolError> {
    let cfg = ctx.cfg;
    for &p in ps {
        if !(0.0..=1.0).contains(&p) {
            return Err(ConfigError::OutOfRange { name: "p", value: p.to_string(), range: "[0, 1]".into() }.into());
        }
    }
    let p_max = ps.iter().copied().fold(0.0, f64::max);
    let mut channels = SlotChannels::new(cfg, streams, Purpose::Channel, slot);
    // Users that transmit at the largest p, with their scores.
    let mut candidates: Vec<(f64, Active)> = Vec::new();
    for ran in 0..cfg.k {
        for j in 0..cfg.n {
            let user = UserId::new(ran, j);
            if ctx.kind.is_opportunistic() {
                let (w, lif) = user_beam(
                    ctx.kind, user, &mut channels, ctx.spaces, streams, Purpose::ReferenceBeam, slot, cfg.l,
                )?;
                let score = ctx.cdf(user).score(lif, access_score(streams, slot, user))?;
                if score < p_max {
                    candidates.push((score, Active { user, beam: w }));
                }
            } else {
                let score = access_score(streams, slot, user);
                if score < p_max {
                    let (w, _) = user_beam(
                        ctx.kind, user, &mut channels, ctx.spaces, streams, Purpose::ReferenceBeam, slot, cfg.l,
                    )?;
                    candidates.push((score, Active { user, beam: w }));
                }
            }
        }
    }

    let mut outcomes = Vec::with_capacity(ps.len());
    let mut active: Vec<Active> = Vec::new();
    for &p in ps {
        active.clear();
        active.extend(candidates.iter().filter(|(score, _)| *score < p).map(|(_, a)| a.clone()));
        let mut transmitted = vec![false; cfg.total_users()];
        let mut active_per_ran = vec![0; cfg.k];
        for a in &active {
            transmitted[a.user.flat(cfg.n)] = true;
            active_per_ran[a.user.ran] += 1;
        }
        let mut delivered = vec![0; cfg.k];
        let mut success = vec![false; cfg.total_users()];
        for ap in 0..cfg.k {
            if active_per_ran[ap] == 0 {
                continue;
            }
            for (user, ok) in decode_at_ap(ctx, ap, &active, &mut channels, Receiver::Adaptive) {
                if ok {
                    success[user.flat(cfg.n)] = true;
                    delivered[ap] += 1;
                }
            }
        }
        outcomes.push(SlotOutcome {
            delivered,
            transmitted,
            success,
            active_per_ran,
            total_active: active.len(),
        });
    }
    Ok(outcomes)
}

/// One trial with exactly `m` active users in network 0 and `j` active
/// users spread over the other networks. Returns the decode results of
/// network 0's streams.
///
/// The other-network active set is a uniformly random `j`-subset of their
/// users, which is the exact conditional law given the count. For
/// opportunistic protocols each active user's channels are redrawn until
/// its own transmit rule fires, so the channels are distributed as they
/// are conditioned on transmission; inactive users never reach the
/// receiver and are not drawn.
pub fn run_conditioned_slot(
    ctx: &ProtocolContext<'_>,
    streams: &StreamSource,
    m: usize,
    j: usize,
) -> Result<Vec<bool>, ProtocolError> {
    run_conditioned_slot_with(ctx, streams, m, j, Receiver::Adaptive)
}

/// [`run_conditioned_slot`] with an explicit receiver at AP 0.
pub fn run_conditioned_slot_with(
    ctx: &ProtocolContext<'_>,
    streams: &StreamSource,
    m: usize,
    j: usize,
    receiver: Receiver,
) -> Result<Vec<bool>, ProtocolError> {
    let cfg = ctx.cfg;
    let others = cfg.n * (cfg.k - 1);
    if m == 0 || m > cfg.n || j > others {
        return Err(ProtocolError::Infeasible {
            m,
            j,
            reason: format!("needs 1 <= m <= {} and j <= {others}", cfg.n),
        });
    }
    if ctx.kind.is_opportunistic() && cfg.p <= 0.0 {
        return Err(ProtocolError::Infeasible { m, j, reason: "p = 0 never transmits".into() });
    }
    let mut pick = streams.stream(Purpose::Conditioning, 0, 0, 0, 0);
    let mut users: Vec<UserId> = sample(&mut pick, cfg.n, m).into_iter().map(|u| UserId::new(0, u)).collect();
    users.sort();
    let mut other: Vec<UserId> = sample(&mut pick, others.max(1), j)
        .into_iter()
        .map(|f| UserId::new(1 + f / cfg.n, f % cfg.n))
        .collect();
    other.sort();
    users.extend(other);

    let mut channels = SlotChannels::new(cfg, streams, Purpose::Channel, 0);
    let mut active = Vec::with_capacity(users.len());
    for user in users {
        let mut attempt = 0u64;
        let beam = loop {
            if attempt > 0 {
                channels.redraw_user(user, attempt);
            }
            let (w, lif) = user_beam(
                ctx.kind, user, &mut channels, ctx.spaces, streams, Purpose::ReferenceBeam, attempt, cfg.l,
            )?;
            if !ctx.kind.is_opportunistic()
                || ctx.cdf(user).score(lif, access_score(streams, attempt, user))? < cfg.p
            {
                break w;
            }
            attempt += 1;
            if attempt >= REJECTION_BUDGET {
                return Err(ProtocolError::Infeasible {
                    m,
                    j,
                    reason: format!("no transmit decision within {REJECTION_BUDGET} attempts"),
                });
            }
        };
        active.push(Active { user, beam });
    }
    Ok(decode_at_ap(ctx, 0, &active, &mut channels, receiver).into_iter().map(|(_, ok)| ok).collect())
}

/// Collects leakage samples under the protocol's own beamformer and builds
/// the CDFs the opportunistic rule needs. Warm-up channels live in their own
/// substreams, disjoint from measurement slots. Access decisions during
/// warm-up do not influence leakage and are not simulated. `samples` is
/// per user; a shared estimator pools all users' samples.
pub fn warm_up(
    kind: ProtocolKind,
    cfg: &NetworkConfig,
    spaces: &InterferenceSpaces,
    streams: &StreamSource,
    samples: usize,
    shared: bool,
) -> Result<CdfBank, ProtocolError> {
    let users = cfg.total_users();
    let lif_at = |channels: &mut SlotChannels<'_>, user: UserId, slot: u64| -> Result<f64, ProtocolError> {
        // Reference-beam protocols learn the CDF of the leakage their
        // random beams produce.
        let probe = if kind.uses_svd_beam() { kind } else { ProtocolKind::OiaNoTxbf };
        let (_, lif) = user_beam(probe, user, channels, spaces, streams, Purpose::WarmupBeam, slot, cfg.l)?;
        Ok(lif)
    };
    if shared {
        // Every user contributes `samples` draws to the pooled estimator.
        let mut est = LifCdfEstimator::with_capacity(samples.saturating_mul(users));
        for slot in 0..samples as u64 {
            let mut channels = SlotChannels::new(cfg, streams, Purpose::WarmupChannel, slot);
            for f in 0..users {
                est.update(lif_at(&mut channels, UserId::new(f / cfg.n, f % cfg.n), slot)?);
            }
        }
        est.finalize();
        Ok(CdfBank::shared(est))
    } else {
        let mut ests: Vec<LifCdfEstimator> = (0..users).map(|_| LifCdfEstimator::with_capacity(samples)).collect();
        for slot in 0..samples as u64 {
            let mut channels = SlotChannels::new(cfg, streams, Purpose::WarmupChannel, slot);
            for (f, est) in ests.iter_mut().enumerate() {
                est.update(lif_at(&mut channels, UserId::new(f / cfg.n, f % cfg.n), slot)?);
            }
        }
        for e in ests.iter_mut() {
            e.finalize();
        }
        Ok(CdfBank::per_user(cfg.n, ests))
    }
}

/// Seed of the `sample`-th conditioned trial of cell `(m, j)`.
pub fn conditioned_seed(seed: u64, m: usize, j: usize, sample: u64) -> u64 {
    derive_seed(seed, &[0xC0DE, m as u64, j as u64, sample])
}
