//! Joint ML detection of a receiver's two desired codewords.
//!
//! Both decoders work on the whitened real system and share one selection
//! rule: among all candidates whose exact metric is within a small tolerance of
//! the minimum, the lexicographically smallest index vector wins.

use crate::constellation::Constellation;
use crate::error::{Error, Result};
use crate::numerics::{RMatrix, RVector, PIVOT_TOL};
use crate::stbc::ENUMERATION_CAP;
use crate::xnetwork::RealEffectiveSystem;

const TIE_TOL: f64 = 1e-10;
const ROWS_PER_CHUNK: usize = 256;

#[derive(Debug, Clone, PartialEq)]
pub struct DecodeResult {
    /// Symbol indices of the first desired message.
    pub first: Vec<usize>,
    /// Symbol indices of the second desired message.
    pub second: Vec<usize>,
    /// Squared whitened residual `‖y_w − H_w·x̃‖²`.
    pub metric: f64,
    pub nodes_visited: u64,
}

struct Problem {
    h: RMatrix,
    y: RVector,
    points: Vec<(f64, f64)>,
    levels: usize,
    tol: f64,
}

impl Problem {
    fn new(sys: &RealEffectiveSystem, c: &Constellation) -> Result<Self> {
        let (h, y) = sys.whitened();
        if h.ncols() % 4 != 0 || h.nrows() < h.ncols() || h.nrows() != y.len() {
            return Err(Error::DimensionMismatch(format!(
                "decoder needs a tall system with 4k columns, got {}x{}",
                h.nrows(),
                h.ncols()
            )));
        }
        let levels = h.ncols() / 2;
        let tol = TIE_TOL * (1.0 + y.norm_squared());
        Ok(Problem {
            h,
            y,
            points: c.points().iter().map(|p| (p.re, p.im)).collect(),
            levels,
            tol,
        })
    }

    fn exact_metric(&self, idx: &[usize]) -> f64 {
        let mut r = self.y.clone();
        for (l, &i) in idx.iter().enumerate() {
            let (re, im) = self.points[i];
            r.axpy(-re, &self.h.column(2 * l), 1.0);
            r.axpy(-im, &self.h.column(2 * l + 1), 1.0);
        }
        r.norm_squared()
    }

    fn finish(&self, mut near: Vec<(f64, Vec<usize>)>, nodes_visited: u64) -> DecodeResult {
        let min = near.iter().map(|c| c.0).fold(f64::INFINITY, f64::min);
        near.retain(|c| c.0 <= min + self.tol);
        let (metric, idx) = near.into_iter().min_by(|a, b| a.1.cmp(&b.1)).expect("at least one candidate");
        let half = self.levels / 2;
        DecodeResult {
            first: idx[..half].to_vec(),
            second: idx[half..].to_vec(),
            metric,
            nodes_visited,
        }
    }
}

/// Keeps every leaf within tolerance of the running minimum.
struct NearSet {
    items: Vec<(f64, Vec<usize>)>,
    best: f64,
    tol: f64,
}

impl NearSet {
    fn offer(&mut self, metric: f64, idx: &[usize]) {
        if metric > self.best + self.tol {
            return;
        }
        if metric < self.best {
            self.best = metric;
            let limit = metric + self.tol;
            self.items.retain(|c| c.0 <= limit);
        }
        self.items.push((metric, idx.to_vec()));
    }
}

fn half_codebook(q: usize, k: usize, points: &[(f64, f64)]) -> RMatrix {
    let size = q.pow(k as u32);
    let mut out = RMatrix::zeros(2 * k, size);
    for n in 0..size {
        let mut rest = n;
        for j in (0..k).rev() {
            let (re, im) = points[rest % q];
            out[(2 * j, n)] = re;
            out[(2 * j + 1, n)] = im;
            rest /= q;
        }
    }
    out
}

fn digits(mut n: usize, q: usize, k: usize) -> Vec<usize> {
    let mut out = vec![0; k];
    for slot in out.iter_mut().rev() {
        *slot = n % q;
        n /= q;
    }
    out
}

pub fn ml_exhaustive(sys: &RealEffectiveSystem, c: &Constellation) -> Result<DecodeResult> {
    ml_exhaustive_with_cap(sys, c, ENUMERATION_CAP)
}

/// Brute-force ML over all `|c|^(2k)` codeword pairs.
///
/// Metrics are evaluated per block of first-message candidates as
/// `‖r_a‖² − 2·r_aᵀv_b + ‖v_b‖²` with `r_a = y − H_a·x_a` and `v_b = H_b·x_b`;
/// candidates near the minimum are then re-scored exactly.
pub fn ml_exhaustive_with_cap(sys: &RealEffectiveSystem, c: &Constellation, cap: u128) -> Result<DecodeResult> {
    let prob = Problem::new(sys, c)?;
    let q = c.len();
    let k = prob.levels / 2;
    let size = (q as u128).saturating_pow(2 * k as u32);
    if size > cap {
        return Err(Error::CodebookTooLarge { size, cap });
    }
    let half = q.pow(k as u32);
    let book = half_codebook(q, k, &prob.points);
    let ha = prob.h.columns(0, 2 * k);
    let hb = prob.h.columns(2 * k, 2 * k);
    let mut ra = ha * &book;
    for mut col in ra.column_iter_mut() {
        col.neg_mut();
        col += &prob.y;
    }
    let vb = hb * &book;
    let ra_norm: Vec<f64> = ra.column_iter().map(|c| c.norm_squared()).collect();
    let vb_norm: Vec<f64> = vb.column_iter().map(|c| c.norm_squared()).collect();

    // approximate metrics may be off by rounding, so collect with extra slack
    let slack = 4.0 * prob.tol;
    let mut near = NearSet { items: Vec::new(), best: f64::INFINITY, tol: slack };
    let vb_t = vb.transpose();
    let mut start = 0;
    while start < half {
        let rows = ROWS_PER_CHUNK.min(half - start);
        let cross = &vb_t * ra.columns(start, rows);
        for a in 0..rows {
            let base = ra_norm[start + a];
            for b in 0..half {
                let m = base - 2.0 * cross[(b, a)] + vb_norm[b];
                if m <= near.best + slack {
                    near.offer(m, &[start + a, b]);
                }
            }
        }
        start += rows;
    }
    let exact = near
        .items
        .into_iter()
        .map(|(_, ab)| {
            let mut idx = digits(ab[0], q, k);
            idx.extend(digits(ab[1], q, k));
            (prob.exact_metric(&idx), idx)
        })
        .collect();
    Ok(prob.finish(exact, size as u64))
}

struct Search<'a> {
    prob: &'a Problem,
    r: RMatrix,
    z: RVector,
    offset: f64,
    x: Vec<usize>,
    near: NearSet,
    nodes: u64,
}

impl Search<'_> {
    fn bound(&self) -> f64 {
        self.near.best - self.offset + 2.0 * self.prob.tol
    }

    fn descend(&mut self, level: usize, partial: f64) {
        let (r0, r1) = (2 * level, 2 * level + 1);
        let mut b0 = self.z[r0];
        let mut b1 = self.z[r1];
        for j in level + 1..self.prob.levels {
            let (re, im) = self.prob.points[self.x[j]];
            b0 -= self.r[(r0, 2 * j)] * re + self.r[(r0, 2 * j + 1)] * im;
            b1 -= self.r[(r1, 2 * j)] * re + self.r[(r1, 2 * j + 1)] * im;
        }
        let (a00, a01, a11) = (self.r[(r0, r0)], self.r[(r0, r1)], self.r[(r1, r1)]);
        let mut order: Vec<(f64, usize)> = self
            .prob
            .points
            .iter()
            .enumerate()
            .map(|(i, &(re, im))| {
                let e0 = b0 - a00 * re - a01 * im;
                let e1 = b1 - a11 * im;
                (e0 * e0 + e1 * e1, i)
            })
            .collect();
        order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        for (cost, i) in order {
            let next = partial + cost;
            if next > self.bound() {
                break;
            }
            self.nodes += 1;
            self.x[level] = i;
            if level == 0 {
                let m = self.prob.exact_metric(&self.x);
                self.near.offer(m, &self.x);
            } else {
                self.descend(level - 1, next);
            }
        }
    }
}

/// Depth-first Schnorr–Euchner sphere decoder with one complex symbol per
/// tree level, started from the quantized zero-forcing point.
pub fn sphere_decode(sys: &RealEffectiveSystem, c: &Constellation) -> Result<DecodeResult> {
    let prob = Problem::new(sys, c)?;
    let p = prob.h.ncols();
    let qr = prob.h.clone().qr();
    let r = qr.r();
    let z = qr.q().transpose() * &prob.y;
    let scale = prob.h.norm();
    let weakest = (0..p).map(|i| r[(i, i)].abs()).fold(f64::INFINITY, f64::min);
    if weakest <= PIVOT_TOL * scale {
        return Err(Error::RankDeficient { pivot: weakest });
    }

    let zf = r.solve_upper_triangular(&z).ok_or(Error::RankDeficient { pivot: weakest })?;
    let babai: Vec<usize> = (0..prob.levels)
        .map(|l| c.demap(crate::numerics::C64::new(zf[2 * l], zf[2 * l + 1])))
        .collect();
    let start = prob.exact_metric(&babai);
    let mut near = NearSet { items: Vec::new(), best: f64::INFINITY, tol: prob.tol };
    near.offer(start, &babai);

    let offset = prob.y.norm_squared() - z.norm_squared();
    let mut search = Search {
        prob: &prob,
        r,
        z,
        offset,
        x: vec![0; prob.levels],
        near,
        nodes: 0,
    };
    search.descend(prob.levels - 1, 0.0);
    let nodes = search.nodes;
    let near = search.near.items;
    Ok(prob.finish(near, nodes))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ErrorCount {
    pub bit_errors: u64,
    pub symbol_errors: u64,
    pub codeword_error: bool,
}

/// Bit and symbol errors between transmitted and decoded label vectors.
pub fn count_errors(truth: &[usize], decoded: &[usize], c: &Constellation) -> ErrorCount {
    debug_assert_eq!(truth.len(), decoded.len());
    debug_assert!(truth.iter().chain(decoded).all(|&i| i < c.len()));
    let mut out = ErrorCount::default();
    for (&t, &d) in truth.iter().zip(decoded) {
        if t != d {
            out.symbol_errors += 1;
            out.bit_errors += (t ^ d).count_ones() as u64;
        }
    }
    out.codeword_error = out.symbol_errors > 0;
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{tilde_vec, C64};
    use crate::stbc::{make_alamouti, make_lowdelay_m3, StbcCode};
    use crate::xnetwork::{
        assemble_transmit, draw_channel, lij_precoders, receive, receiver_systems, Messages, Snr,
    };
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    struct Instance {
        systems: [RealEffectiveSystem; 2],
        truth: [Vec<usize>; 2],
    }

    fn instance(code: &StbcCode, c: &Constellation, db: f64, noise: bool, rng: &mut ChaCha8Rng) -> Instance {
        let ch = draw_channel(rng, code.m).unwrap();
        let pre = lij_precoders(&ch).unwrap();
        let mut draw = || (0..code.k).map(|_| rng.random_range(0..c.len())).collect::<Vec<_>>();
        let idx = [draw(), draw(), draw(), draw()];
        let sym = |v: &Vec<usize>| v.iter().map(|&i| c.map(i)).collect::<Vec<C64>>();
        let msg = Messages { x11: sym(&idx[0]), x12: sym(&idx[1]), x21: sym(&idx[2]), x22: sym(&idx[3]) };
        let snr = Snr::from_db(db);
        let (x1, x2) = assemble_transmit(code, &msg, &pre, snr).unwrap();
        let (y1, y2) = receive(&ch, &x1, &x2, rng, noise);
        let systems = receiver_systems(code, &ch, &pre, (&y1, &y2), snr).unwrap();
        let [a, b, cc, d] = idx;
        let mut t1 = a;
        t1.extend(cc);
        let mut t2 = b;
        t2.extend(d);
        Instance { systems, truth: [t1, t2] }
    }

    fn joined(r: &DecodeResult) -> Vec<usize> {
        let mut v = r.first.clone();
        v.extend(&r.second);
        v
    }

    // Straightforward nested loops over both messages, written without the
    // decomposition used by `ml_exhaustive`.
    fn brute_force(sys: &RealEffectiveSystem, c: &Constellation) -> (Vec<usize>, f64) {
        let (h, y) = sys.whitened();
        let k = h.ncols() / 4;
        let q = c.len();
        let size = q.pow(k as u32);
        let mut best = (Vec::new(), f64::INFINITY);
        for a in 0..size {
            for b in 0..size {
                let mut idx = digits(a, q, k);
                idx.extend(digits(b, q, k));
                let sym: Vec<C64> = idx.iter().map(|&i| c.map(i)).collect();
                let m = (&y - &h * tilde_vec(&sym)).norm_squared();
                if m < best.1 {
                    best = (idx, m);
                }
            }
        }
        best
    }

    #[test]
    fn exhaustive_matches_double_loop() {
        let code = make_alamouti();
        let c = Constellation::psk(2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for n in 0..1000 {
            let inst = instance(&code, &c, 20.0, true, &mut rng);
            let sys = &inst.systems[n % 2];
            let ml = ml_exhaustive(sys, &c).unwrap();
            let (idx, metric) = brute_force(sys, &c);
            assert_eq!(joined(&ml), idx);
            assert!((ml.metric - metric).abs() <= 1e-12 * (1.0 + metric));
        }
    }

    #[test]
    fn noiseless_systems_decode_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        for (code, c) in [
            (make_alamouti(), Constellation::psk(4).unwrap()),
            (make_lowdelay_m3(PI / 4.0), Constellation::by_name("qpsk-rot").unwrap()),
        ] {
            for _ in 0..5 {
                let inst = instance(&code, &c, 10.0, false, &mut rng);
                for (sys, truth) in inst.systems.iter().zip(&inst.truth) {
                    let sd = sphere_decode(sys, &c).unwrap();
                    assert_eq!(&joined(&sd), truth);
                    assert!(sd.metric <= 1e-15 * (1.0 + sys.y_eff.norm_squared()));
                    assert!(sd.nodes_visited >= (sys.h_eff.ncols() / 2) as u64);
                    if code.m == 2 {
                        assert_eq!(&joined(&ml_exhaustive(sys, &c).unwrap()), truth);
                    }
                }
            }
        }
    }

    #[test]
    fn sphere_matches_exhaustive_alamouti() {
        let code = make_alamouti();
        let c = Constellation::psk(2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        for n in 0..500 {
            let db = 20.0 * (n % 21) as f64 / 20.0;
            let inst = instance(&code, &c, db, true, &mut rng);
            for sys in &inst.systems {
                let sd = sphere_decode(sys, &c).unwrap();
                let ml = ml_exhaustive(sys, &c).unwrap();
                assert_eq!(joined(&sd), joined(&ml));
                assert!((sd.metric - ml.metric).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn sphere_matches_exhaustive_qam16_alamouti() {
        let code = make_alamouti();
        let c = Constellation::qam(16).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(34);
        for _ in 0..20 {
            let inst = instance(&code, &c, 5.0, true, &mut rng);
            let sd = sphere_decode(&inst.systems[0], &c).unwrap();
            let ml = ml_exhaustive(&inst.systems[0], &c).unwrap();
            assert_eq!(joined(&sd), joined(&ml));
        }
    }

    #[test]
    fn exact_ties_resolve_lexicographically() {
        // the in-phase columns of both messages coincide, so (+1, −1) and (−1, +1) tie
        let c = Constellation::psk(2).unwrap();
        #[rustfmt::skip]
        let h = RMatrix::from_row_slice(4, 4, &[
            1.0, 0.0, 1.0, 0.0,
            0.0, 1.0, 0.0, 0.0,
            0.0, 0.0, 0.0, 1.0,
            0.0, 0.0, 0.0, 0.0,
        ]);
        let sys = RealEffectiveSystem {
            h_eff: h,
            y_eff: RVector::zeros(4),
            noise_sigma_per_row: RVector::from_element(4, 1.0),
            symbol_slices: (0..2, 2..4),
        };
        let ml = ml_exhaustive(&sys, &c).unwrap();
        assert_eq!(joined(&ml), vec![0, 1]);
    }

    #[test]
    fn scale_invariance() {
        let code = make_alamouti();
        let c = Constellation::psk(4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(35);
        for _ in 0..50 {
            let inst = instance(&code, &c, 3.0, true, &mut rng);
            let mut scaled = inst.systems[0].clone();
            scaled.h_eff *= 7.5;
            scaled.y_eff *= 7.5;
            let a = sphere_decode(&inst.systems[0], &c).unwrap();
            let b = sphere_decode(&scaled, &c).unwrap();
            assert_eq!(joined(&a), joined(&b));
        }
    }

    #[test]
    fn nodes_shrink_with_snr() {
        let code = make_lowdelay_m3(PI / 4.0);
        let c = Constellation::by_name("qpsk-rot").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(36);
        let mut avg = Vec::new();
        for db in [0.0, 10.0, 20.0] {
            let mut total = 0;
            for _ in 0..60 {
                let inst = instance(&code, &c, db, true, &mut rng);
                total += sphere_decode(&inst.systems[0], &c).unwrap().nodes_visited;
            }
            avg.push(total);
        }
        assert!(avg[0] >= avg[1] && avg[1] >= avg[2], "{avg:?}");
    }

    #[test]
    fn rank_deficient_and_caps() {
        let c = Constellation::psk(2).unwrap();
        let sys = RealEffectiveSystem {
            h_eff: RMatrix::zeros(4, 4),
            y_eff: RVector::zeros(4),
            noise_sigma_per_row: RVector::from_element(4, 1.0),
            symbol_slices: (0..2, 2..4),
        };
        assert!(matches!(sphere_decode(&sys, &c), Err(Error::RankDeficient { .. })));
        let mut sys = sys;
        sys.h_eff = RMatrix::identity(4, 4);
        assert!(matches!(
            ml_exhaustive_with_cap(&sys, &c, 3),
            Err(Error::CodebookTooLarge { size: 4, cap: 3 })
        ));
    }

    #[test]
    fn error_counting() {
        let q = Constellation::psk(4).unwrap();
        assert_eq!(count_errors(&[0, 1, 2], &[0, 1, 2], &q), ErrorCount::default());
        let one = count_errors(&[0, 1], &[0, 3], &q);
        assert_eq!(one, ErrorCount { bit_errors: 1, symbol_errors: 1, codeword_error: true });
        let all = count_errors(&[0, 1, 2, 3], &[3, 2, 1, 0], &q);
        assert_eq!(all.bit_errors, 8);
        assert_eq!(all.symbol_errors, 4);
    }
}
