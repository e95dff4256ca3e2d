//! Mechanical checks of the algebraic properties the scheme relies on.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::constellation::Constellation;
use crate::error::{Error, Result};
use std::f64::consts::TAU;

use crate::numerics::{
    cis, complex_normal, complex_normal_matrix, eig_unitary, ensure_unitary, fro_norm, haar_unitary,
    numeric_rank, singular_values, CMatrix, CVector, C64, I, ONE, RANK_TOL, ZERO,
};
use crate::sim::BerPoint;
use crate::stbc::{StbcCode, ENUMERATION_CAP};
use crate::xnetwork::{build_effective_real_channel, desired_channels, draw_channel, lij_precoders, Receiver, Snr};

/// Eigenvalues closer than this are treated as one repeated eigenvalue.
pub const CLUSTER_TOL: f64 = 1e-6;

const CC_TOL: f64 = 1e-10;
const CC_RANDOM_VECTORS: usize = 100;
const WITNESS_SEED: u64 = 0x9e37_79b9_7f4a_7c15;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CcReport {
    pub pass: bool,
    pub max_residual: f64,
}

/// Checks both cancellation identities on the `2k` real basis vectors (which
/// settles them for every symbol vector, by real-linearity) and on random vectors.
pub fn check_cc(code: &StbcCode) -> Result<CcReport> {
    let cc = code.cc()?;
    let t = cc.t_half;
    let residual = |x: &[C64]| -> Result<f64> {
        let cw = code.encode(x)?;
        let col = |j: usize| CVector::from(cw.column(cc.permutation[j]));
        let mut worst: f64 = 0.0;
        for i in 0..t {
            let a = col(i) + cc.f[i].apply(&col(i + t));
            let b = cc.g[i].apply(&col(i)) + col(i + t);
            worst = worst.max(a.norm()).max(b.norm());
        }
        Ok(worst)
    };

    let mut max_residual: f64 = 0.0;
    let mut x = vec![ZERO; code.k];
    for j in 0..code.k {
        for unit in [ONE, I] {
            x[j] = unit;
            max_residual = max_residual.max(residual(&x)?);
        }
        x[j] = ZERO;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(code.k as u64);
    for _ in 0..CC_RANDOM_VECTORS {
        let x: Vec<C64> = (0..code.k).map(|_| complex_normal(&mut rng)).collect();
        max_residual = max_residual.max(residual(&x)?);
    }
    Ok(CcReport {
        pass: max_residual <= CC_TOL,
        max_residual,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FullRankReport {
    pub pass: bool,
    pub min_rank_found: usize,
    /// First difference-symbol tuple (enumeration order) whose codeword
    /// difference is rank deficient.
    pub witness: Option<Vec<(f64, f64)>>,
    pub tuples_checked: u64,
}

/// Exhaustive full-rank check over the difference-symbol space.
///
/// Since `X(x) − X(x′) = X(x − x′)`, it is enough to enumerate every tuple of
/// per-symbol differences drawn from the constellation's difference alphabet.
pub fn check_full_rank_code(code: &StbcCode, c: &Constellation) -> Result<FullRankReport> {
    let alphabet = c.difference_alphabet();
    let d = alphabet.len();
    let size = (d as u128).saturating_pow(code.k as u32);
    if size > ENUMERATION_CAP {
        return Err(Error::CodebookTooLarge { size, cap: ENUMERATION_CAP });
    }
    let total = size as u64;

    // contributions[j][a]: codeword with only symbol j set to alphabet[a]
    let mut contributions = Vec::with_capacity(code.k);
    let mut x = vec![ZERO; code.k];
    for j in 0..code.k {
        let mut per_symbol = Vec::with_capacity(d);
        for &delta in &alphabet {
            x[j] = delta;
            per_symbol.push(code.encode(&x)?);
        }
        x[j] = ZERO;
        contributions.push(per_symbol);
    }

    let digits = |mut n: u64| {
        let mut out = vec![0usize; code.k];
        for slot in out.iter_mut().rev() {
            *slot = (n % d as u64) as usize;
            n /= d as u64;
        }
        out
    };
    let rank_of = |n: u64| -> (usize, u64) {
        let idx = digits(n);
        let mut diff = CMatrix::zeros(code.m, code.t_block);
        for (j, &a) in idx.iter().enumerate() {
            if alphabet[a] != ZERO {
                diff += &contributions[j][a];
            }
        }
        (numeric_rank(&diff, RANK_TOL), n)
    };
    let zero_digit = alphabet.iter().position(|z| *z == ZERO).expect("0 is a difference");
    let zero_tuple = (0..code.k).fold(0u64, |acc, _| acc * d as u64 + zero_digit as u64);

    let worst = |a: (usize, u64), b: (usize, u64)| if b < a { b } else { a };
    let identity = (usize::MAX, u64::MAX);

    #[cfg(feature = "parallel")]
    let (min_rank, first) = {
        use rayon::prelude::*;
        (0..total)
            .into_par_iter()
            .filter(|&n| n != zero_tuple)
            .map(rank_of)
            .reduce(|| identity, worst)
    };
    #[cfg(not(feature = "parallel"))]
    let (min_rank, first) =
        (0..total).filter(|&n| n != zero_tuple).map(rank_of).fold(identity, worst);

    let pass = min_rank >= code.m;
    let witness = (!pass).then(|| digits(first).iter().map(|&a| (alphabet[a].re, alphabet[a].im)).collect());
    Ok(FullRankReport {
        pass,
        min_rank_found: min_rank,
        witness,
        tuples_checked: total - 1,
    })
}

/// Groups eigenvalue indices into clusters of pairwise-chained distance at most
/// `tol`, largest cluster first (ties by smallest member index).
pub fn eigenvalue_clusters(values: &[C64], tol: f64) -> Vec<Vec<usize>> {
    let n = values.len();
    let mut label: Vec<usize> = (0..n).collect();
    fn root(label: &mut [usize], mut i: usize) -> usize {
        while label[i] != i {
            label[i] = label[label[i]];
            i = label[i];
        }
        i
    }
    for i in 0..n {
        for j in i + 1..n {
            if (values[i] - values[j]).norm() <= tol {
                let (a, b) = (root(&mut label, i), root(&mut label, j));
                label[a.max(b)] = a.min(b);
            }
        }
    }
    let roots: Vec<usize> = (0..n).map(|i| root(&mut label, i)).collect();
    let mut clusters: Vec<Vec<usize>> = Vec::new();
    for i in 0..n {
        match clusters.iter_mut().find(|c| roots[c[0]] == roots[i]) {
            Some(c) => c.push(i),
            None => clusters.push(vec![i]),
        }
    }
    clusters.sort_by(|a, b| b.len().cmp(&a.len()).then(a[0].cmp(&b[0])));
    clusters
}

/// Whether the largest eigenvalue multiplicity of `p` is at most `⌊M/2⌋`,
/// together with that multiplicity.
pub fn eig_multiplicity_check(p: &CMatrix, tol: f64) -> Result<(bool, usize)> {
    let (values, _) = eig_unitary(p)?;
    let largest = eigenvalue_clusters(&values, tol).first().map_or(0, Vec::len);
    Ok((largest <= p.nrows() / 2, largest))
}

pub fn eig_multiplicity_ok(p: &CMatrix) -> Result<bool> {
    eig_multiplicity_check(p, CLUSTER_TOL).map(|(ok, _)| ok)
}

/// Numeric rank of `AP − PA`, with singular values measured against
/// `‖A‖_F·‖P‖_F` so that a commutator made only of rounding noise has rank 0.
pub fn commutator_rank(a: &CMatrix, p: &CMatrix) -> usize {
    let scale = fro_norm(a) * fro_norm(p);
    singular_values(&(a * p - p * a)).iter().filter(|&&s| s > RANK_TOL * scale).count()
}

/// Largest numeric rank of `AP − PA` over `trials` Gaussian draws of `A`.
pub fn commutator_max_rank<R: Rng + ?Sized>(p: &CMatrix, trials: usize, rng: &mut R) -> Result<usize> {
    ensure_unitary(p, 1e-9)?;
    let m = p.nrows();
    let mut best = 0;
    for _ in 0..trials {
        let a = complex_normal_matrix(rng, m, m);
        best = best.max(commutator_rank(&a, p));
        if best == m {
            break;
        }
    }
    Ok(best)
}

/// Builds an `A` with full-rank `AP − PA` by the constructive block argument.
///
/// In the eigenbasis `P = U·D·Uᴴ` (eigenvalues ordered by cluster, largest
/// first) the commutator `C = BD − DB` has entries `b_ij(λ_j − λ_i)`. The
/// lower-left `⌈M/2⌉×⌈M/2⌉` and upper-right `⌊M/2⌋×⌊M/2⌋` blocks of `C` are
/// filled with random values wherever `λ_i ≠ λ_j` and everything else is zero,
/// so `det C = ±det C₁·det C₂`.
pub fn construct_commutator_witness(p: &CMatrix) -> Result<CMatrix> {
    let m = p.nrows();
    let (values, u) = eig_unitary(p)?;
    let clusters = eigenvalue_clusters(&values, CLUSTER_TOL);
    let largest = clusters.first().map_or(0, Vec::len);
    if largest > m / 2 {
        return Err(Error::Infeasible { multiplicity: largest, limit: m / 2 });
    }
    let order: Vec<usize> = clusters.iter().flatten().copied().collect();
    let cluster_of: Vec<usize> = {
        let mut out = vec![0; m];
        for (ci, c) in clusters.iter().enumerate() {
            for &i in c {
                out[i] = ci;
            }
        }
        out
    };
    let mut u_sorted = CMatrix::zeros(m, m);
    for (dst, &src) in order.iter().enumerate() {
        u_sorted.set_column(dst, &u.column(src));
    }
    let lambda: Vec<C64> = order.iter().map(|&i| values[i]).collect();
    let same = |i: usize, j: usize| cluster_of[order[i]] == cluster_of[order[j]];

    let floor = m / 2;
    let ceil = m - floor;
    let mut rng = ChaCha8Rng::seed_from_u64(WITNESS_SEED);
    for _ in 0..8 {
        let mut b = CMatrix::zeros(m, m);
        let mut fill = |i: usize, j: usize, rng: &mut ChaCha8Rng| {
            if !same(i, j) {
                let c = complex_normal(rng);
                b[(i, j)] = c / (lambda[j] - lambda[i]);
            }
        };
        for i in floor..m {
            for j in 0..ceil {
                fill(i, j, &mut rng);
            }
        }
        for i in 0..floor {
            for j in ceil..m {
                fill(i, j, &mut rng);
            }
        }
        let a = &u_sorted * b * u_sorted.adjoint();
        if commutator_rank(&a, p) == m {
            return Ok(a);
        }
    }
    Err(Error::Infeasible { multiplicity: largest, limit: floor })
}

/// `U·diag(λ)·Uᴴ` with Haar `U`, where one random unit-modulus eigenvalue
/// is repeated `multiplicity` times and the rest are drawn independently.
pub fn random_unitary_with_multiplicity<R: Rng + ?Sized>(rng: &mut R, m: usize, multiplicity: usize) -> CMatrix {
    let u = haar_unitary(rng, m);
    let repeated = cis(rng.random_range(0.0..TAU));
    let lambda: Vec<C64> = (0..m)
        .map(|i| if i < multiplicity { repeated } else { cis(rng.random_range(0.0..TAU)) })
        .collect();
    &u * CMatrix::from_diagonal(&CVector::from_vec(lambda)) * u.adjoint()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Lemma2Report {
    pub instances: usize,
    pub feasible: usize,
    /// Instances where "some `A` gives full rank" and the multiplicity test disagree.
    pub disagreements: usize,
    /// Feasible instances where the constructive witness failed.
    pub witness_failures: usize,
}

impl Lemma2Report {
    pub fn pass(&self) -> bool {
        self.disagreements == 0 && self.witness_failures == 0
    }
}

/// For each `M` in `sizes`, draws `per_size` unitaries: even-numbered ones
/// with an eigenvalue repeated `⌊M/2⌋ + 1` times, odd-numbered ones
/// alternating Haar and repeated exactly `⌊M/2⌋` times. Compares the sampled
/// commutator rank with the multiplicity test and runs the witness construction.
pub fn lemma2_sweep<R: Rng + ?Sized>(sizes: &[usize], per_size: usize, trials: usize, rng: &mut R) -> Result<Lemma2Report> {
    let mut report = Lemma2Report { instances: 0, feasible: 0, disagreements: 0, witness_failures: 0 };
    for &m in sizes {
        for n in 0..per_size {
            let p = match n % 4 {
                0 | 2 => random_unitary_with_multiplicity(rng, m, m / 2 + 1),
                1 => haar_unitary(rng, m),
                _ => random_unitary_with_multiplicity(rng, m, (m / 2).max(1)),
            };
            let ok = eig_multiplicity_ok(&p)?;
            let full = commutator_max_rank(&p, trials, rng)? == m;
            report.instances += 1;
            report.disagreements += (ok != full) as usize;
            if ok {
                report.feasible += 1;
                let built = construct_commutator_witness(&p)
                    .map(|a| commutator_rank(&a, &p) == m)
                    .unwrap_or(false);
                report.witness_failures += (!built) as usize;
            }
        }
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankStats {
    pub draws: usize,
    pub full_rank_fraction: f64,
    pub min_rank: usize,
    pub full_rank: usize,
}

/// Fraction of channel draws for which both receivers' effective channels
/// have full column rank.
pub fn heq_rank_stats<R: Rng + ?Sized>(code: &StbcCode, draws: usize, rng: &mut R) -> Result<RankStats> {
    let snr = Snr::from_linear(1.0)?;
    let full = 4 * code.k;
    let mut min_rank = usize::MAX;
    let mut hits = 0;
    for _ in 0..draws {
        let ch = draw_channel(rng, code.m)?;
        let pre = lij_precoders(&ch)?;
        let mut both = true;
        for rx in [Receiver::One, Receiver::Two] {
            let (ha, hb) = desired_channels(&ch, &pre, rx);
            let rank = numeric_rank(&build_effective_real_channel(code, &ha, &hb, snr)?, RANK_TOL);
            min_rank = min_rank.min(rank);
            both &= rank == full;
        }
        hits += both as usize;
    }
    Ok(RankStats {
        draws,
        full_rank_fraction: if draws == 0 { 0.0 } else { hits as f64 / draws as f64 },
        min_rank: if draws == 0 { 0 } else { min_rank },
        full_rank: full,
    })
}

/// Least-squares slope of `−log10(BER)` against `SNR_dB/10` over the
/// `window` highest-SNR points: the empirical diversity order.
pub fn estimate_diversity_slope(points: &[BerPoint], window: usize) -> Result<f64> {
    let mut sorted: Vec<&BerPoint> = points.iter().collect();
    sorted.sort_by(|a, b| a.snr_db.total_cmp(&b.snr_db));
    let top = &sorted[sorted.len().saturating_sub(window)..];
    if top.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "need at least 2 points in the window, have {}",
            top.len()
        )));
    }
    if let Some(p) = top.iter().find(|p| p.bit_errors == 0) {
        return Err(Error::InsufficientData(format!("no bit errors recorded at {} dB", p.snr_db)));
    }
    let xs: Vec<f64> = top.iter().map(|p| p.snr_db / 10.0).collect();
    let ys: Vec<f64> = top.iter().map(|p| -p.ber().log10()).collect();
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InsufficientData("window points share one SNR".into()));
    }
    Ok(sxy / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::cmatrix;
    use crate::stbc::{make_alamouti, make_lowdelay_m3, make_srinath_rajan, replication_p3, GsFunction};
    use std::f64::consts::PI;

    fn diag(values: &[C64]) -> CMatrix {
        CMatrix::from_diagonal(&CVector::from_column_slice(values))
    }

    #[test]
    fn cc_examples() {
        assert!(check_cc(&make_alamouti()).unwrap().pass);
        for theta in [0.0, PI / 4.0, 1.0] {
            assert!(check_cc(&make_srinath_rajan(theta)).unwrap().pass);
        }
        assert!(check_cc(&make_lowdelay_m3(PI / 4.0)).unwrap().pass);

        let mut broken = make_alamouti();
        broken.cc.as_mut().unwrap().f[0] = GsFunction::new(CMatrix::identity(2, 2), false).unwrap();
        let report = check_cc(&broken).unwrap();
        assert!(!report.pass);
        assert!(report.max_residual > 0.1);

        let bare = crate::stbc::make_perfect3();
        assert!(matches!(check_cc(&bare), Err(Error::MissingCcSpec(_))));
    }

    #[test]
    fn alamouti_is_full_rank() {
        let q = Constellation::psk(4).unwrap();
        let report = check_full_rank_code(&make_alamouti(), &q).unwrap();
        assert!(report.pass);
        assert_eq!(report.min_rank_found, 2);
        assert_eq!(report.tuples_checked, 9 * 9 - 1);
    }

    #[test]
    fn rank_deficient_code_yields_witness() {
        // both antennas send the same symbol: every difference has rank 1
        let code = StbcCode::from_linear_map("repeat", 2, 1, 1, |x| cmatrix(2, 1, &[x[0], x[0]]));
        let report = check_full_rank_code(&code, &Constellation::psk(2).unwrap()).unwrap();
        assert!(!report.pass);
        assert_eq!(report.min_rank_found, 1);
        assert!(report.witness.is_some());
    }

    #[test]
    fn multiplicity_examples() {
        assert!(eig_multiplicity_ok(&replication_p3()).unwrap());
        assert!(!eig_multiplicity_ok(&CMatrix::identity(3, 3)).unwrap());
        assert!(!eig_multiplicity_ok(&diag(&[ONE, ONE, -ONE])).unwrap());
        let bad = cmatrix(2, 2, &[ONE, ONE, ZERO, ONE]);
        assert!(matches!(eig_multiplicity_ok(&bad), Err(Error::NotUnitary { .. })));
    }

    #[test]
    fn clusters_are_ordered() {
        let v = [ONE, -ONE, I, -ONE, C64::new(-1.0, 1e-9)];
        assert_eq!(eigenvalue_clusters(&v, CLUSTER_TOL), vec![vec![1, 3, 4], vec![0], vec![2]]);
    }

    #[test]
    fn commutator_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        assert_eq!(commutator_max_rank(&diag(&[ONE, -ONE]), 8, &mut rng).unwrap(), 2);
        assert_eq!(commutator_max_rank(&CMatrix::identity(4, 4), 8, &mut rng).unwrap(), 0);
        assert!(commutator_max_rank(&diag(&[ONE, ONE, -ONE]), 8, &mut rng).unwrap() <= 2);
        // hand example: A = [[0,1],[1,0]] against diag(1,−1)
        let a = cmatrix(2, 2, &[ZERO, ONE, ONE, ZERO]);
        let p = diag(&[ONE, -ONE]);
        assert_eq!(&a * &p - &p * &a, cmatrix(2, 2, &[ZERO, -ONE * 2.0, ONE * 2.0, ZERO]));
    }

    #[test]
    fn witness_construction() {
        let p = replication_p3();
        let a = construct_commutator_witness(&p).unwrap();
        assert_eq!(numeric_rank(&(&a * &p - &p * &a), RANK_TOL), 3);
        assert!(matches!(
            construct_commutator_witness(&CMatrix::identity(3, 3)),
            Err(Error::Infeasible { multiplicity: 3, limit: 1 })
        ));
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for m in 2..=6 {
            for _ in 0..20 {
                let p = haar_unitary(&mut rng, m);
                let a = construct_commutator_witness(&p).unwrap();
                assert_eq!(numeric_rank(&(&a * &p - &p * &a), RANK_TOL), m);
            }
        }
        // the boundary multiplicity ⌊M/2⌋ is feasible
        let u = haar_unitary(&mut rng, 6);
        let lam = [ONE, ONE, ONE, -ONE, -ONE, I];
        let p = &u * diag(&lam) * u.adjoint();
        let a = construct_commutator_witness(&p).unwrap();
        assert_eq!(numeric_rank(&(&a * &p - &p * &a), RANK_TOL), 6);
    }

    #[test]
    fn rank_stats_small_runs() {
        let mut rng = ChaCha8Rng::seed_from_u64(40);
        let lowdelay = make_lowdelay_m3(PI / 4.0);
        let stats = heq_rank_stats(&lowdelay, 20, &mut rng).unwrap();
        assert_eq!(stats.full_rank_fraction, 1.0);
        assert_eq!(stats.min_rank, 24);

        let base = crate::stbc::make_perfect3();
        let collapsed = crate::stbc::make_replicated_unchecked(&base, &CMatrix::identity(3, 3)).unwrap();
        let stats = heq_rank_stats(&collapsed, 10, &mut rng).unwrap();
        assert_eq!(stats.full_rank_fraction, 0.0);
        assert!(stats.min_rank < 36);
    }

    fn synthetic(c: f64, d: f64) -> Vec<BerPoint> {
        (0..6)
            .map(|i| {
                let snr_db = 10.0 + 2.0 * i as f64;
                let ber = c * 10f64.powf(-d * snr_db / 10.0);
                let bits_sent = 1u64 << 60;
                BerPoint {
                    snr_db,
                    trials: 1,
                    bits_sent,
                    bit_errors: (ber * bits_sent as f64).round() as u64,
                    codeword_errors: 1,
                }
            })
            .collect()
    }

    #[test]
    fn slope_of_power_laws() {
        assert!((estimate_diversity_slope(&synthetic(0.5, 3.0), 4).unwrap() - 3.0).abs() < 0.01);
        assert!((estimate_diversity_slope(&synthetic(2.0, 4.0), 6).unwrap() - 4.0).abs() < 0.01);
        let mut pts = synthetic(1.0, 2.0);
        pts[5].bit_errors = 0;
        assert!(matches!(estimate_diversity_slope(&pts, 3), Err(Error::InsufficientData(_))));
        assert!(matches!(estimate_diversity_slope(&pts[..1], 3), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn lemma2_small_sweep() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let r = lemma2_sweep(&[2, 3, 4], 8, 8, &mut rng).unwrap();
        assert_eq!(r.instances, 24);
        assert_eq!(r.feasible, 12);
        assert!(r.pass(), "{r:?}");
        let p = random_unitary_with_multiplicity(&mut rng, 5, 3);
        assert_eq!(eig_multiplicity_check(&p, CLUSTER_TOL).unwrap(), (false, 3));
    }
}
