//! Transmit beamforming that minimizes leakage into other APs' signal
//! spaces, and the receive chain (signal-space projection, zero-forcing,
//! SINR test).

use crate::channel::{InterferenceSpaces, SlotChannels, SlotRealization};
use crate::config::UserId;
use crate::matkernels::{
    pseudo_inverse, right_singular_basis, vec_norm_sqr, CVector, ComplexMatrix, LinalgError, C64,
};

/// Read access to one slot's channel matrices.
pub trait ChannelView {
    fn channel(&mut self, ap: usize, user: UserId) -> &ComplexMatrix;
}

impl ChannelView for SlotRealization {
    fn channel(&mut self, ap: usize, user: UserId) -> &ComplexMatrix {
        SlotRealization::channel(self, ap, user)
    }
}

impl ChannelView for SlotChannels<'_> {
    fn channel(&mut self, ap: usize, user: UserId) -> &ComplexMatrix {
        self.get(ap, user)
    }
}

/// A unit-norm transmit beamformer and the total leakage it produces.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamformerChoice {
    pub vector: CVector,
    pub lif: f64,
}

/// Stacks `U_k^H H_k^{[i,j]}` over every AP `k != i` in ascending order.
/// Shape `(K-1) S x L`; `0 x L` for a single network.
pub fn build_leakage_matrix<C: ChannelView + ?Sized>(
    user: UserId,
    channels: &mut C,
    spaces: &InterferenceSpaces,
) -> ComplexMatrix {
    let k_total = spaces.u.len();
    let mut blocks = Vec::with_capacity(k_total.saturating_sub(1));
    let mut l = None;
    for ap in (0..k_total).filter(|&ap| ap != user.ran) {
        let h = channels.channel(ap, user);
        l = Some(h.cols());
        blocks.push(spaces.u[ap].adjoint_matmul(h));
    }
    match l {
        Some(l) => ComplexMatrix::vstack(&blocks, l),
        None => {
            let l = channels.channel(user.ran, user).cols();
            ComplexMatrix::zeros(0, l)
        }
    }
}

/// Beamformer that minimizes `||g w||^2` over unit `w`: the right-singular
/// vector of the smallest singular value. The achieved leakage is that
/// singular value squared (zero whenever `g` has more columns than rows).
pub fn svd_beamformer(g: &ComplexMatrix) -> Result<BeamformerChoice, LinalgError> {
    let l = g.cols();
    assert!(l >= 1, "beamformer needs at least one transmit antenna");
    if g.rows() == 0 {
        let mut vector = vec![C64::new(0.0, 0.0); l];
        vector[0] = C64::new(1.0, 0.0);
        return Ok(BeamformerChoice { vector, lif: 0.0 });
    }
    let (sigma, v) = right_singular_basis(g)?;
    let vector = v.column(l - 1);
    let lif = if g.rows() >= l {
        sigma[l - 1] * sigma[l - 1]
    } else {
        vec_norm_sqr(&g.mul_vec(&vector))
    };
    Ok(BeamformerChoice { vector, lif })
}

/// Leakage of one user's beam into AP `ap`'s signal space,
/// `||U_ap^H H_ap w||^2`.
pub fn compute_lif_to_ap<C: ChannelView + ?Sized>(
    user: UserId,
    ap: usize,
    w: &[C64],
    channels: &mut C,
    spaces: &InterferenceSpaces,
) -> f64 {
    debug_assert_ne!(ap, user.ran);
    let hw = channels.channel(ap, user).mul_vec(w);
    vec_norm_sqr(&spaces.u[ap].adjoint_mul_vec(&hw))
}

/// Sum of [`compute_lif_to_ap`] over every other AP.
pub fn total_lif<C: ChannelView + ?Sized>(
    user: UserId,
    w: &[C64],
    channels: &mut C,
    spaces: &InterferenceSpaces,
) -> f64 {
    (0..spaces.u.len())
        .filter(|&ap| ap != user.ran)
        .map(|ap| compute_lif_to_ap(user, ap, w, channels, spaces))
        .sum()
}

/// `U_ap^H x` for every input.
pub fn project_receive(ap: usize, spaces: &InterferenceSpaces, inputs: &[CVector]) -> Vec<CVector> {
    let u = &spaces.u[ap];
    inputs.iter().map(|x| u.adjoint_mul_vec(x)).collect()
}

/// A stream the receiver wants to decode.
#[derive(Debug, Clone)]
pub struct Stream {
    pub owner: UserId,
    /// Effective channel as seen at the receiver (after any projection).
    pub channel: CVector,
}

/// Per-stream SINR and decode decision.
#[derive(Debug, Clone, PartialEq)]
pub struct DecodeReport {
    pub sinr: Vec<f64>,
    pub success: Vec<bool>,
    pub owners: Vec<UserId>,
    /// The desired channels could not be separated; every stream failed.
    pub rank_deficient: bool,
}

impl DecodeReport {
    pub fn successes(&self) -> usize {
        self.success.iter().filter(|&&s| s).count()
    }
}

/// Zero-forcing receiver. The rows `f_j^H` of the pseudo-inverse of the
/// desired channels separate the desired streams; every interferer leaks
/// through them at full power:
///
/// `SINR_j = P / (N0 ||f_j||^2 + P sum_l |f_j^H g_l|^2)`.
pub fn zf_decode(
    desired: &[Stream],
    interferers: &[CVector],
    noise_power: f64,
    stream_power: f64,
    threshold_db: f64,
) -> DecodeReport {
    let threshold = 10f64.powf(threshold_db / 10.0);
    zf_decode_linear(desired, interferers, noise_power, stream_power, threshold)
}

pub(crate) fn zf_decode_linear(
    desired: &[Stream],
    interferers: &[CVector],
    noise_power: f64,
    stream_power: f64,
    threshold: f64,
) -> DecodeReport {
    let owners: Vec<UserId> = desired.iter().map(|s| s.owner).collect();
    let fail = |owners: Vec<UserId>| DecodeReport {
        sinr: vec![0.0; owners.len()],
        success: vec![false; owners.len()],
        owners,
        rank_deficient: true,
    };
    if desired.is_empty() {
        return DecodeReport {
            sinr: Vec::new(),
            success: Vec::new(),
            owners,
            rank_deficient: false,
        };
    }
    let r = desired[0].channel.len();
    if desired.len() > r {
        return fail(owners);
    }
    let columns: Vec<CVector> = desired.iter().map(|s| s.channel.clone()).collect();
    let d = ComplexMatrix::from_columns(r, &columns);
    let f = match pseudo_inverse(&d) {
        Ok(f) => f,
        Err(_) => return fail(owners),
    };
    let mut sinr = Vec::with_capacity(desired.len());
    for j in 0..desired.len() {
        let row = f.row(j);
        let f_norm2: f64 = row.iter().map(|z| z.norm_sqr()).sum();
        let leak: f64 = interferers
            .iter()
            .map(|g| row.iter().zip(g).map(|(a, b)| a * b).sum::<C64>().norm_sqr())
            .sum();
        sinr.push(stream_power / (noise_power * f_norm2 + stream_power * leak));
    }
    let success = sinr.iter().map(|&s| s >= threshold).collect();
    DecodeReport {
        sinr,
        success,
        owners,
        rank_deficient: false,
    }
}
