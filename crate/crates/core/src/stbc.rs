//! Space-time block codes as real-linear dispersion codes.
//!
//! A code is stored through its real generator `G ∈ R^{2MT×2k}` with
//! `ṽec(X) = G·x̃`. Constructors write the codeword layout literally and the
//! generator is obtained by evaluating that layout on the `2k` real basis
//! vectors `e_j` and `i·e_j`.

use std::f64::consts::PI;

use crate::constellation::Constellation;
use crate::error::{Error, Result};
use crate::numerics::{
    cis, cmatrix, ensure_unitary, numeric_rank, tilde_vec, untilde_vec, unvec, vec_cols, CMatrix,
    CVector, RMatrix, C64, I, ONE, RANK_TOL, ZERO,
};

/// Default cap on the number of items any exhaustive enumeration may visit.
pub const ENUMERATION_CAP: u128 = 1 << 24;

/// A Gaussian-stabilizer map `y ↦ P·y` or `y ↦ P·y*` with unitary `P`.
#[derive(Debug, Clone, PartialEq)]
pub struct GsFunction {
    pub p: CMatrix,
    pub conjugate_input: bool,
}

impl GsFunction {
    pub fn new(p: CMatrix, conjugate_input: bool) -> Result<Self> {
        ensure_unitary(&p, 1e-9)?;
        Ok(GsFunction { p, conjugate_input })
    }

    /// Skips the unitarity check. Only for building deliberately broken specs.
    pub fn new_unchecked(p: CMatrix, conjugate_input: bool) -> Self {
        GsFunction { p, conjugate_input }
    }

    pub fn apply(&self, y: &CVector) -> CVector {
        if self.conjugate_input {
            &self.p * y.conjugate()
        } else {
            &self.p * y
        }
    }
}

/// Column-cancellation data: a column permutation (0-based) and the `T`
/// function pairs with `X(π(i)) + f_i(X(π(i+T))) = g_i(X(π(i))) + X(π(i+T)) = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct CcSpec {
    pub t_half: usize,
    pub permutation: Vec<usize>,
    pub f: Vec<GsFunction>,
    pub g: Vec<GsFunction>,
}

impl CcSpec {
    pub fn new(permutation: Vec<usize>, f: Vec<GsFunction>, g: Vec<GsFunction>) -> Result<Self> {
        let t_half = f.len();
        if g.len() != t_half || permutation.len() != 2 * t_half {
            return Err(Error::DimensionMismatch(format!(
                "cc spec needs 2T = {} permutation entries and T functions each, got {} / {} / {}",
                2 * t_half,
                permutation.len(),
                f.len(),
                g.len()
            )));
        }
        let mut seen = vec![false; permutation.len()];
        for &p in &permutation {
            if p >= seen.len() || seen[p] {
                return Err(Error::DimensionMismatch(format!(
                    "cc permutation {permutation:?} is not a bijection"
                )));
            }
            seen[p] = true;
        }
        Ok(CcSpec { t_half, permutation, f, g })
    }

    pub fn is_identity_order(&self) -> bool {
        self.permutation.iter().enumerate().all(|(i, &p)| i == p)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StbcCode {
    pub name: String,
    /// Transmit antennas.
    pub m: usize,
    /// Block length in channel uses.
    pub t_block: usize,
    /// Complex information symbols per codeword.
    pub k: usize,
    pub g_real: RMatrix,
    pub cc: Option<CcSpec>,
    pub theta: Option<f64>,
}

impl StbcCode {
    /// Builds a code from a real-linear codeword layout.
    pub fn from_linear_map<F>(name: &str, m: usize, t_block: usize, k: usize, layout: F) -> Self
    where
        F: Fn(&[C64]) -> CMatrix,
    {
        let mut g_real = RMatrix::zeros(2 * m * t_block, 2 * k);
        let mut x = vec![ZERO; k];
        for j in 0..k {
            for (part, unit) in [ONE, I].into_iter().enumerate() {
                x[j] = unit;
                let cw = layout(&x);
                debug_assert_eq!(cw.shape(), (m, t_block));
                g_real.set_column(2 * j + part, &tilde_vec(vec_cols(&cw).as_slice()));
                x[j] = ZERO;
            }
        }
        StbcCode {
            name: name.to_string(),
            m,
            t_block,
            k,
            g_real,
            cc: None,
            theta: None,
        }
    }

    fn with_cc(mut self, cc: CcSpec) -> Self {
        self.cc = Some(cc);
        self
    }

    fn with_theta(mut self, theta: f64) -> Self {
        self.theta = Some(theta);
        self
    }

    pub fn encode(&self, x: &[C64]) -> Result<CMatrix> {
        if x.len() != self.k {
            return Err(Error::DimensionMismatch(format!(
                "code `{}` takes {} symbols, got {}",
                self.name,
                self.k,
                x.len()
            )));
        }
        let v = &self.g_real * tilde_vec(x);
        Ok(unvec(untilde_vec(v.as_slice()).as_slice(), self.m, self.t_block))
    }

    /// Complex symbols per channel use.
    pub fn rate(&self) -> f64 {
        self.k as f64 / self.t_block as f64
    }

    pub fn generator_rank(&self) -> usize {
        numeric_rank(&self.g_real, RANK_TOL)
    }

    pub fn cc(&self) -> Result<&CcSpec> {
        self.cc.as_ref().ok_or_else(|| Error::MissingCcSpec(self.name.clone()))
    }

    /// The same code with its columns permuted so that the CC permutation is
    /// the identity: the first `T` columns cancel against the last `T`.
    pub fn cc_ordered(&self) -> Result<StbcCode> {
        let cc = self.cc()?;
        if cc.is_identity_order() {
            return Ok(self.clone());
        }
        let block = 2 * self.m;
        let mut g_real = RMatrix::zeros(self.g_real.nrows(), self.g_real.ncols());
        for (new_col, &old_col) in cc.permutation.iter().enumerate() {
            g_real
                .rows_mut(new_col * block, block)
                .copy_from(&self.g_real.rows(old_col * block, block));
        }
        let mut out = self.clone();
        out.g_real = g_real;
        out.cc = Some(CcSpec {
            t_half: cc.t_half,
            permutation: (0..2 * cc.t_half).collect(),
            f: cc.f.clone(),
            g: cc.g.clone(),
        });
        Ok(out)
    }
}

fn conj_p(p: CMatrix) -> GsFunction {
    GsFunction::new(p, true).expect("constructor matrices are unitary")
}

/// `[[x1, −x2*], [x2, x1*]]`.
pub fn make_alamouti() -> StbcCode {
    let code = StbcCode::from_linear_map("alamouti", 2, 2, 2, |x| {
        cmatrix(2, 2, &[x[0], -x[1].conj(), x[1], x[0].conj()])
    });
    let p1 = cmatrix(2, 2, &[ZERO, -ONE, ONE, ZERO]);
    let p2 = cmatrix(2, 2, &[ZERO, ONE, -ONE, ZERO]);
    let cc = CcSpec::new(vec![0, 1], vec![conj_p(p1)], vec![conj_p(p2)]).expect("valid spec");
    code.with_cc(cc)
}

/// The (4, 4) Srinath–Rajan code; `theta` rotates the off-diagonal blocks.
pub fn make_srinath_rajan(theta: f64) -> StbcCode {
    let e = cis(theta);
    let code = StbcCode::from_linear_map("srinath-rajan", 4, 4, 8, move |x| {
        let re = |j: usize| C64::new(x[j - 1].re, 0.0);
        let im = |j: usize| C64::new(0.0, x[j - 1].im);
        cmatrix(
            4,
            4,
            &[
                re(1) + im(3),
                -re(2) + im(4),
                e * (re(5) + im(7)),
                e * (-re(6) + im(8)),
                re(2) + im(4),
                re(1) - im(3),
                e * (re(6) + im(8)),
                e * (re(5) - im(7)),
                e * (re(7) + im(5)),
                e * (-re(8) + im(6)),
                re(3) + im(1),
                -re(4) + im(2),
                e * (re(8) + im(6)),
                e * (re(7) - im(5)),
                re(4) + im(2),
                re(3) - im(1),
            ],
        )
    });
    let e2 = cis(2.0 * theta);
    let p = |a: C64, b: C64| {
        cmatrix(
            4,
            4,
            &[
                ZERO, -a, ZERO, ZERO, a, ZERO, ZERO, ZERO, ZERO, ZERO, ZERO, -b, ZERO, ZERO, b, ZERO,
            ],
        )
    };
    let p1 = p(ONE, e2);
    let p2 = p(e2, ONE);
    let p3 = p(-ONE, -e2);
    let p4 = p(-e2, -ONE);
    let cc = CcSpec::new(
        vec![0, 2, 1, 3],
        vec![conj_p(p1), conj_p(p2)],
        vec![conj_p(p3), conj_p(p4)],
    )
    .expect("valid spec");
    code.with_cc(cc).with_theta(theta)
}

/// Coordinate-interleaved symbols of the rate-3/2 minimum-delay code for
/// three antennas, `s_1 … s_6`.
fn lowdelay_symbols(x: &[C64]) -> [C64; 6] {
    let s = |a: usize, b: usize| C64::new(x[a - 1].re, x[b - 1].im);
    [s(1, 3), s(2, 4), s(6, 5), s(5, 6), s(4, 2), s(3, 1)]
}

/// Rate-3/2, block-length-4 code for M = 3 with the CC-property.
pub fn make_lowdelay_m3(theta: f64) -> StbcCode {
    let e = cis(theta);
    let code = StbcCode::from_linear_map("lowdelay3", 3, 4, 6, move |x| {
        let [s1, s2, s3, s4, s5, s6] = lowdelay_symbols(x);
        cmatrix(
            3,
            4,
            &[
                s1,
                e * s4,
                -s2.conj(),
                -e * s6.conj(),
                s2,
                e * s5,
                s1.conj(),
                e * s4.conj(),
                e * s3,
                s6,
                -e * s3.conj(),
                -s5.conj(),
            ],
        )
    });
    let e2 = cis(2.0 * theta);
    let p1 = cmatrix(3, 3, &[ZERO, -ONE, ZERO, ONE, ZERO, ZERO, ZERO, ZERO, e2]);
    let p2 = cmatrix(3, 3, &[ZERO, -e2, ZERO, ZERO, ZERO, e, e, ZERO, ZERO]);
    let p3 = cmatrix(3, 3, &[ZERO, ONE, ZERO, -ONE, ZERO, ZERO, ZERO, ZERO, e2]);
    let p4 = cmatrix(3, 3, &[ZERO, ZERO, e, -e2, ZERO, ZERO, ZERO, e, ZERO]);
    let cc = CcSpec::new(
        vec![0, 1, 2, 3],
        vec![conj_p(p1), conj_p(p2)],
        vec![conj_p(p3), conj_p(p4)],
    )
    .expect("valid spec");
    code.with_cc(cc).with_theta(theta)
}

/// Mixing matrix of the 3-antenna perfect code (4-digit published values).
pub fn perfect3_mixing() -> CMatrix {
    let c = C64::new;
    cmatrix(
        3,
        3,
        &[
            c(0.6603, 0.3273),
            c(0.0207, 0.3273),
            c(-0.4920, 0.3273),
            c(-0.2938, -0.1456),
            c(-0.0374, -0.5898),
            c(-0.6136, 0.4081),
            c(0.5295, 0.2625),
            c(-0.0467, -0.7355),
            c(0.2730, -0.1816),
        ],
    )
}

/// Full-rate 3×3 perfect code, `[[s1, ωs8, ωs6], [s4, s2, ωs9], [s7, s5, s3]]`.
pub fn make_perfect3() -> StbcCode {
    let mix = perfect3_mixing();
    let omega = cis(2.0 * PI / 3.0);
    StbcCode::from_linear_map("perfect3", 3, 3, 9, move |x| {
        let mut s = [ZERO; 9];
        for j in 0..3 {
            let group = &mix * CVector::from_column_slice(&x[3 * j..3 * j + 3]);
            s[3 * j..3 * j + 3].copy_from_slice(group.as_slice());
        }
        cmatrix(
            3,
            3,
            &[s[0], omega * s[7], omega * s[5], s[3], s[1], omega * s[8], s[6], s[4], s[2]],
        )
    })
}

/// Full-rate `m×m` threaded code: thread `l` carries `rotation·x_l` on the
/// `l`-th circulant diagonal `(r, (r + l) mod m)`, wrapped entries scaled by `gamma`.
pub fn make_threaded_full_rate(m: usize, gamma: C64, rotation: &CMatrix) -> Result<StbcCode> {
    if rotation.shape() != (m, m) {
        return Err(Error::DimensionMismatch(format!(
            "threaded code needs a {m}x{m} rotation, got {:?}",
            rotation.shape()
        )));
    }
    ensure_unitary(rotation, 1e-9)?;
    let rotation = rotation.clone();
    Ok(StbcCode::from_linear_map(&format!("threaded{m}"), m, m, m * m, move |x| {
        let mut cw = CMatrix::zeros(m, m);
        for l in 0..m {
            let thread = &rotation * CVector::from_column_slice(&x[l * m..(l + 1) * m]);
            for r in 0..m {
                let wraps = r + l >= m;
                let scale = if wraps { gamma } else { ONE };
                cw[(r, (r + l) % m)] = scale * thread[r];
            }
        }
        cw
    }))
}

/// 2×2 unitary of the Golden code, built on the golden ratio.
pub fn golden_rotation() -> CMatrix {
    let phi = (1.0 + 5f64.sqrt()) / 2.0;
    let phi_bar = (1.0 - 5f64.sqrt()) / 2.0;
    let alpha = C64::new(1.0, 1.0 - phi);
    let alpha_bar = C64::new(1.0, 1.0 - phi_bar);
    cmatrix(2, 2, &[alpha, alpha * phi, alpha_bar, alpha_bar * phi_bar]) / C64::new(5f64.sqrt(), 0.0)
}

/// Threaded stand-in parameters for `m` antennas: `(γ, rotation)`.
///
/// `m = 2` uses the Golden-code pair `(i, golden_rotation())`; `m = 3` uses
/// `(ω, perfect3_mixing())` re-orthonormalised; larger `m` fall back to the
/// unitary DFT with `γ = e^{iπ/(2m)}`, whose full-rankness is unverified.
pub fn threaded_parameters(m: usize) -> (C64, CMatrix) {
    match m {
        1 => (ONE, CMatrix::identity(1, 1)),
        2 => (I, golden_rotation()),
        3 => {
            let (q, _) = perfect3_mixing().qr().unpack();
            (cis(2.0 * PI / 3.0), q)
        }
        _ => {
            let scale = C64::new((m as f64).sqrt().recip(), 0.0);
            let dft = CMatrix::from_fn(m, m, |r, c| cis(-2.0 * PI * (r * c) as f64 / m as f64) * scale);
            (cis(PI / (2.0 * m as f64)), dft)
        }
    }
}

/// `[R  P·R]` over a full-rate `m×m` base code, with `f_i(y) = −Pᴴy` and
/// `g_i(y) = −P·y`.
pub fn make_replicated(base: &StbcCode, p: &CMatrix) -> Result<StbcCode> {
    let m = base.m;
    if p.shape() != (m, m) {
        return Err(Error::DimensionMismatch(format!("P must be {m}x{m}, got {:?}", p.shape())));
    }
    let (ok, multiplicity) = crate::verify::eig_multiplicity_check(p, crate::verify::CLUSTER_TOL)?;
    if !ok {
        return Err(Error::EigMultiplicityViolation { multiplicity, limit: m / 2 });
    }
    make_replicated_unchecked(base, p)
}

/// [`make_replicated`] without the eigenvalue-multiplicity condition, for
/// studying the degenerate case. `P` must still be unitary.
pub fn make_replicated_unchecked(base: &StbcCode, p: &CMatrix) -> Result<StbcCode> {
    let m = base.m;
    if base.t_block != m || base.k != m * m || p.shape() != (m, m) {
        return Err(Error::DimensionMismatch(format!(
            "replication needs a full-rate {m}x{m} base with {} symbols and a {m}x{m} P, got T={} k={}",
            m * m,
            base.t_block,
            base.k
        )));
    }
    ensure_unitary(p, 1e-9)?;
    let base_code = base.clone();
    let pm = p.clone();
    let mut code = StbcCode::from_linear_map(
        &format!("{}-replicated", base.name),
        m,
        2 * m,
        m * m,
        move |x| {
            let r = base_code.encode(x).expect("length checked by generator loop");
            let pr = &pm * &r;
            let mut cw = CMatrix::zeros(m, 2 * m);
            cw.columns_mut(0, m).copy_from(&r);
            cw.columns_mut(m, m).copy_from(&pr);
            cw
        },
    );
    let minus_p = -p.clone();
    let minus_ph = -p.adjoint();
    let f = (0..m).map(|_| GsFunction::new(minus_ph.clone(), false)).collect::<Result<_>>()?;
    let g = (0..m).map(|_| GsFunction::new(minus_p.clone(), false)).collect::<Result<_>>()?;
    code.cc = Some(CcSpec::new((0..2 * m).collect(), f, g)?);
    code.theta = base.theta;
    Ok(code)
}

/// The unitary used with the perfect code in the M = 3 experiment; its
/// eigenvalues are `i`, `−i` and `1`.
pub fn replication_p3() -> CMatrix {
    cmatrix(3, 3, &[ZERO, -ONE, ZERO, ONE, ZERO, ZERO, ZERO, ZERO, ONE])
}

/// Cyclic shift; its eigenvalues are the distinct `m`-th roots of unity.
pub fn cyclic_shift(m: usize) -> CMatrix {
    CMatrix::from_fn(m, m, |r, c| if (c + 1) % m == r { ONE } else { ZERO })
}

/// Resolves a code by config name: `alamouti`, `srinath-rajan`, `lowdelay3`,
/// `perfect3-replicated`, `threaded{M}` (replicated over the threaded code
/// with a cyclic-shift `P`).
pub fn code_by_name(name: &str, theta: f64) -> Result<StbcCode> {
    match name {
        "alamouti" => Ok(make_alamouti()),
        "srinath-rajan" => Ok(make_srinath_rajan(theta)),
        "lowdelay3" => Ok(make_lowdelay_m3(theta)),
        "perfect3" => Ok(make_perfect3()),
        "perfect3-replicated" => make_replicated(&make_perfect3(), &replication_p3()),
        other => {
            let m: usize = other
                .strip_prefix("threaded")
                .and_then(|s| s.parse().ok())
                .filter(|&m| m >= 2)
                .ok_or_else(|| Error::UnknownName(other.to_string()))?;
            let (gamma, rotation) = threaded_parameters(m);
            let base = make_threaded_full_rate(m, gamma, &rotation)?;
            make_replicated(&base, &cyclic_shift(m))
        }
    }
}

/// Deterministic lexicographic enumeration of all `|Q|^k` codewords; the last
/// symbol index varies fastest.
pub struct CodebookIter<'a> {
    code: &'a StbcCode,
    constellation: &'a Constellation,
    indices: Vec<usize>,
    done: bool,
}

pub fn codebook_size(q: usize, k: usize) -> u128 {
    (q as u128).saturating_pow(k as u32)
}

pub fn codebook_iter<'a>(
    code: &'a StbcCode,
    constellation: &'a Constellation,
    cap: u128,
) -> Result<CodebookIter<'a>> {
    let size = codebook_size(constellation.len(), code.k);
    if size > cap {
        return Err(Error::CodebookTooLarge { size, cap });
    }
    Ok(CodebookIter {
        code,
        constellation,
        indices: vec![0; code.k],
        done: false,
    })
}

impl Iterator for CodebookIter<'_> {
    type Item = (Vec<usize>, CMatrix);

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        let current = self.indices.clone();
        let x: Vec<C64> = current.iter().map(|&i| self.constellation.map(i)).collect();
        let cw = self.code.encode(&x).expect("index vector has length k");

        let q = self.constellation.len();
        let mut pos = self.indices.len();
        loop {
            if pos == 0 {
                self.done = true;
                break;
            }
            pos -= 1;
            self.indices[pos] += 1;
            if self.indices[pos] < q {
                break;
            }
            self.indices[pos] = 0;
        }
        Some((current, cw))
    }
}
