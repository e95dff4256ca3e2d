//! The two-transmitter, two-receiver X-network pipeline: channels, LiJ
//! precoding, transmission, interference cancellation and the real effective
//! system seen by each receiver's decoder.

use std::ops::Range;

use rand::Rng;

use crate::error::{Error, Result};
use crate::numerics::{
    cis, cmatrix, complex_normal_matrix, fro_norm, invert, realify, tilde_vec, vec_cols, CMatrix,
    CVector, RMatrix, RVector, C64, ONE, ZERO,
};
use crate::stbc::{CcSpec, StbcCode};

const MAX_CHANNEL_DRAWS: usize = 100;

/// `h_ij` is the channel from transmitter `i` to receiver `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    pub h11: CMatrix,
    pub h12: CMatrix,
    pub h21: CMatrix,
    pub h22: CMatrix,
}

impl ChannelRealization {
    pub fn m(&self) -> usize {
        self.h11.nrows()
    }
}

/// Draws four i.i.d. `CN(0, 1)` channel matrices, redrawing singular ones.
pub fn draw_channel<R: Rng + ?Sized>(rng: &mut R, m: usize) -> Result<ChannelRealization> {
    for _ in 0..MAX_CHANNEL_DRAWS {
        let ch = ChannelRealization {
            h11: complex_normal_matrix(rng, m, m),
            h12: complex_normal_matrix(rng, m, m),
            h21: complex_normal_matrix(rng, m, m),
            h22: complex_normal_matrix(rng, m, m),
        };
        if [&ch.h11, &ch.h12, &ch.h21, &ch.h22].iter().all(|h| invert(h).is_ok()) {
            return Ok(ch);
        }
    }
    Err(Error::RngPathology { attempts: MAX_CHANNEL_DRAWS })
}

/// `v_ij` precodes the message from transmitter `i` to receiver `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct PrecoderSet {
    pub v11: CMatrix,
    pub v12: CMatrix,
    pub v21: CMatrix,
    pub v22: CMatrix,
}

fn normalized_inverse(h: &CMatrix) -> Result<CMatrix> {
    let inv = invert(h)?;
    let norm = fro_norm(&inv);
    Ok(inv / C64::new(norm, 0.0))
}

/// Each precoder inverts the channel its message interferes on, so that all
/// interference arrives as a positive multiple of the identity.
pub fn lij_precoders(ch: &ChannelRealization) -> Result<PrecoderSet> {
    Ok(PrecoderSet {
        v11: normalized_inverse(&ch.h12)?,
        v21: normalized_inverse(&ch.h22)?,
        v12: normalized_inverse(&ch.h11)?,
        v22: normalized_inverse(&ch.h21)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Snr {
    pub rho: f64,
    pub db: f64,
}

impl Snr {
    pub fn from_db(db: f64) -> Self {
        Snr { rho: 10f64.powf(db / 10.0), db }
    }

    pub fn from_linear(rho: f64) -> Result<Self> {
        if !(rho > 0.0 && rho.is_finite()) {
            return Err(Error::Config {
                field: "snr".into(),
                message: format!("linear SNR must be positive, got {rho}"),
            });
        }
        Ok(Snr { rho, db: 10.0 * rho.log10() })
    }

    /// Transmit amplitude `√(3ρ/4)`.
    pub fn amplitude(&self) -> f64 {
        (0.75 * self.rho).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Receiver {
    One,
    Two,
}

/// The code's CC spec, provided its columns are already in cancellation order.
pub fn cc_spec_in_order(code: &StbcCode) -> Result<&CcSpec> {
    let cc = code.cc()?;
    if !cc.is_identity_order() {
        return Err(Error::NotCcOrdered(code.name.clone()));
    }
    if code.t_block != 2 * cc.t_half {
        return Err(Error::DimensionMismatch(format!(
            "block length {} is not twice the cancellation length {}",
            code.t_block, cc.t_half
        )));
    }
    Ok(cc)
}

/// The four transmitted symbol vectors; `x_ij` goes from transmitter `i` to receiver `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct Messages {
    pub x11: Vec<C64>,
    pub x12: Vec<C64>,
    pub x21: Vec<C64>,
    pub x22: Vec<C64>,
}

/// Builds the two `M×3T` transmit matrices. Messages for receiver 1 occupy
/// slots `1..2T`, messages for receiver 2 slots `T+1..3T`.
pub fn assemble_transmit(
    code: &StbcCode,
    msg: &Messages,
    pre: &PrecoderSet,
    snr: Snr,
) -> Result<(CMatrix, CMatrix)> {
    let t = cc_spec_in_order(code)?.t_half;
    let m = code.m;
    let place = |x: &[C64], v: &CMatrix, offset: usize, out: &mut CMatrix| -> Result<()> {
        let cw = v * code.encode(x)?;
        let mut dst = out.columns_mut(offset, 2 * t);
        dst += cw;
        Ok(())
    };
    let mut x1 = CMatrix::zeros(m, 3 * t);
    let mut x2 = CMatrix::zeros(m, 3 * t);
    place(&msg.x11, &pre.v11, 0, &mut x1)?;
    place(&msg.x12, &pre.v12, t, &mut x1)?;
    place(&msg.x21, &pre.v21, 0, &mut x2)?;
    place(&msg.x22, &pre.v22, t, &mut x2)?;
    let a = C64::new(snr.amplitude(), 0.0);
    Ok((x1 * a, x2 * a))
}

/// `y_j = h_1j·x1 + h_2j·x2 + N_j` with i.i.d. `CN(0, 1)` noise when enabled.
pub fn receive<R: Rng + ?Sized>(
    ch: &ChannelRealization,
    x1: &CMatrix,
    x2: &CMatrix,
    rng: &mut R,
    noise_on: bool,
) -> (CMatrix, CMatrix) {
    let mut y1 = &ch.h11 * x1 + &ch.h21 * x2;
    let mut y2 = &ch.h12 * x1 + &ch.h22 * x2;
    if noise_on {
        y1 += complex_normal_matrix(rng, y1.nrows(), y1.ncols());
        y2 += complex_normal_matrix(rng, y2.nrows(), y2.ncols());
    }
    (y1, y2)
}

/// Removes the aligned interference, returning the `M×2T` matrix that only
/// depends on the receiver's own two messages.
pub fn cancel_interference(y: &CMatrix, cc: &CcSpec, receiver: Receiver) -> Result<CMatrix> {
    let t = cc.t_half;
    if y.ncols() != 3 * t {
        return Err(Error::DimensionMismatch(format!(
            "received block has {} columns, expected {}",
            y.ncols(),
            3 * t
        )));
    }
    let col = |j: usize| CVector::from(y.column(j));
    let mut out = CMatrix::zeros(y.nrows(), 2 * t);
    for i in 0..t {
        let (first, second) = match receiver {
            Receiver::One => (col(i), col(t + i) + cc.f[i].apply(&col(2 * t + i))),
            Receiver::Two => (col(t + i) + cc.g[i].apply(&col(i)), col(2 * t + i)),
        };
        out.set_column(i, &first);
        out.set_column(t + i, &second);
    }
    Ok(out)
}

/// Per-column noise standard deviation of the processed block.
pub fn noise_sigmas(t: usize, receiver: Receiver) -> Vec<f64> {
    let (early, late) = match receiver {
        Receiver::One => (1.0, 2f64.sqrt()),
        Receiver::Two => (2f64.sqrt(), 1.0),
    };
    (0..2 * t).map(|c| if c < t { early } else { late }).collect()
}

/// The desired effective channels `(H·V)` of a receiver's two messages.
pub fn desired_channels(ch: &ChannelRealization, pre: &PrecoderSet, receiver: Receiver) -> (CMatrix, CMatrix) {
    match receiver {
        Receiver::One => (&ch.h11 * &pre.v11, &ch.h21 * &pre.v21),
        Receiver::Two => (&ch.h12 * &pre.v12, &ch.h22 * &pre.v22),
    }
}

/// `tilde(vec(Y′)) = h_eff·[x̃_a; x̃_b] + noise` in real coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct RealEffectiveSystem {
    pub h_eff: RMatrix,
    pub y_eff: RVector,
    pub noise_sigma_per_row: RVector,
    /// Coordinates of the first and second message's real symbol vector.
    pub symbol_slices: (Range<usize>, Range<usize>),
}

impl RealEffectiveSystem {
    /// Rows divided by their noise sigma, giving white unit-variance noise.
    pub fn whitened(&self) -> (RMatrix, RVector) {
        let mut h = self.h_eff.clone();
        let mut y = self.y_eff.clone();
        for (r, &s) in self.noise_sigma_per_row.iter().enumerate() {
            h.row_mut(r).unscale_mut(s);
            y[r] /= s;
        }
        (h, y)
    }
}

/// `√(3ρ/4)·[(I_{2T} ⊗ realify(h̄a))·G | (I_{2T} ⊗ realify(h̄b))·G]`.
pub fn build_effective_real_channel(code: &StbcCode, hbar_a: &CMatrix, hbar_b: &CMatrix, snr: Snr) -> Result<RMatrix> {
    let m = code.m;
    for h in [hbar_a, hbar_b] {
        if h.shape() != (m, m) {
            return Err(Error::DimensionMismatch(format!(
                "effective channel must be {m}x{m}, got {:?}",
                h.shape()
            )));
        }
    }
    let rows = 2 * m * code.t_block;
    let k2 = 2 * code.k;
    let mut out = RMatrix::zeros(rows, 2 * k2);
    for (half, h) in [hbar_a, hbar_b].into_iter().enumerate() {
        let r = realify(h) * snr.amplitude();
        for c in 0..code.t_block {
            let g_rows = code.g_real.rows(2 * m * c, 2 * m);
            out.view_mut((2 * m * c, half * k2), (2 * m, k2)).copy_from(&(&r * g_rows));
        }
    }
    Ok(out)
}

pub fn build_effective_real_system(
    code: &StbcCode,
    hbar_a: &CMatrix,
    hbar_b: &CMatrix,
    y_prime: &CMatrix,
    snr: Snr,
    receiver: Receiver,
) -> Result<RealEffectiveSystem> {
    let t = cc_spec_in_order(code)?.t_half;
    if y_prime.shape() != (code.m, 2 * t) {
        return Err(Error::DimensionMismatch(format!(
            "processed block must be {}x{}, got {:?}",
            code.m,
            2 * t,
            y_prime.shape()
        )));
    }
    let h_eff = build_effective_real_channel(code, hbar_a, hbar_b, snr)?;
    let y_eff = tilde_vec(vec_cols(y_prime).as_slice());
    let sig = noise_sigmas(t, receiver);
    let noise_sigma_per_row = RVector::from_fn(y_eff.len(), |r, _| sig[r / (2 * code.m)]);
    let k2 = 2 * code.k;
    Ok(RealEffectiveSystem {
        h_eff,
        y_eff,
        noise_sigma_per_row,
        symbol_slices: (0..k2, k2..2 * k2),
    })
}

/// Both receivers' effective systems for one transmitted block.
pub fn receiver_systems(
    code: &StbcCode,
    ch: &ChannelRealization,
    pre: &PrecoderSet,
    y: (&CMatrix, &CMatrix),
    snr: Snr,
) -> Result<[RealEffectiveSystem; 2]> {
    let cc = cc_spec_in_order(code)?;
    let build = |yr: &CMatrix, receiver| -> Result<RealEffectiveSystem> {
        let (ha, hb) = desired_channels(ch, pre, receiver);
        let yp = cancel_interference(yr, cc, receiver)?;
        build_effective_real_system(code, &ha, &hb, &yp, snr, receiver)
    };
    Ok([build(y.0, Receiver::One)?, build(y.1, Receiver::Two)?])
}

fn appendix_c_matrices(theta: f64) -> (CMatrix, CMatrix, CMatrix) {
    let h2 = cmatrix(
        3,
        3,
        &[ZERO, ZERO, -cis(-2.0 * theta), ZERO, ONE * 2.0, ZERO, ONE, ZERO, ZERO],
    );
    let p1 = cmatrix(3, 3, &[ZERO, -ONE, ZERO, ONE, ZERO, ZERO, ZERO, ZERO, -cis(2.0 * theta)]);
    let p2 = cmatrix(
        3,
        3,
        &[ZERO, ZERO, -cis(theta), cis(2.0 * theta), ZERO, ZERO, ZERO, -cis(theta), ZERO],
    );
    (h2, p1, p2)
}

/// `det((H₂P′₂)* − P′₁*·H₂)` for the fixed witness channel of the M = 3 rank argument.
pub fn appendix_c_identity(theta: f64) -> C64 {
    let (h2, p1, p2) = appendix_c_matrices(theta);
    let conj = |m: &CMatrix| m.map(|z| z.conj());
    let m = conj(&(&h2 * &p2)) - conj(&p1) * &h2;
    m.determinant()
}

/// Closed form `e^{−3iθ}(2 + e^{−iθ})(2 + e^{iθ})`.
pub fn appendix_c_closed_form(theta: f64) -> C64 {
    cis(-3.0 * theta) * (ONE * 2.0 + cis(-theta)) * (ONE * 2.0 + cis(theta))
}
