//! wasm-bindgen wrappers around `xnet-core` for the static page in `www/`.
//!
//! Every export returns a flat `Float64Array` so the page needs no JSON glue.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use wasm_bindgen::prelude::*;

use xnet_core::numerics::{singular_values, CMatrix};
use xnet_core::sim::{run_sweep, SimConfig};
use xnet_core::stbc::{make_perfect3, make_replicated_unchecked, replication_p3};
use xnet_core::xnetwork::{build_effective_real_channel, desired_channels, draw_channel, lij_precoders, Receiver, Snr};
use xnet_core::{Constellation, Result};

/// `[phi_0, cpd_0, phi_1, cpd_1, ...]` for QPSK rotated over `[0, π/2]`.
pub fn cpd_curve(samples: usize) -> Result<Vec<f64>> {
    let base = Constellation::psk(4)?;
    let n = samples.max(2);
    let mut out = Vec::with_capacity(2 * n);
    for i in 0..n {
        let phi = std::f64::consts::FRAC_PI_2 * i as f64 / (n - 1) as f64;
        out.push(phi);
        out.push(base.rotate(phi).cpd());
    }
    Ok(out)
}

/// Runs a single-threaded sweep and returns `[snr_db, ber, cwer]` triples.
pub fn ber_sweep(scheme: &str, constellation: &str, snr_db: &[f64], trials: u64, seed: u64) -> Result<Vec<f64>> {
    let m = xnet_core::stbc::code_by_name(scheme, std::f64::consts::FRAC_PI_4)?.m;
    let cfg = SimConfig {
        scheme: scheme.to_string(),
        m,
        constellation: constellation.to_string(),
        theta: std::f64::consts::FRAC_PI_4,
        snr_db_list: snr_db.to_vec(),
        min_codeword_errors: u64::MAX,
        max_trials_per_point: trials,
        seed,
        workers: 1,
        batch_size: 64,
        noise: true,
    };
    let result = run_sweep(&cfg)?;
    Ok(result.points.iter().flat_map(|p| [p.snr_db, p.ber(), p.cwer()]).collect())
}

/// Singular values, largest first, of receiver 1's effective real channel for
/// the replicated 3-antenna perfect code. With `identity_p` the replication
/// matrix is `I` and half of the spectrum collapses to zero.
pub fn heff_spectrum(identity_p: bool, snr_db: f64, seed: u64) -> Result<Vec<f64>> {
    let p = if identity_p { CMatrix::identity(3, 3) } else { replication_p3() };
    let code = make_replicated_unchecked(&make_perfect3(), &p)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ch = draw_channel(&mut rng, 3)?;
    let pre = lij_precoders(&ch)?;
    let (ha, hb) = desired_channels(&ch, &pre, Receiver::One);
    let h = build_effective_real_channel(&code, &ha, &hb, Snr::from_db(snr_db))?;
    let mut sv = singular_values(&h);
    sv.sort_by(|a, b| b.total_cmp(a));
    Ok(sv)
}

fn js(r: Result<Vec<f64>>) -> std::result::Result<Vec<f64>, JsError> {
    r.map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen(js_name = cpdCurve)]
pub fn cpd_curve_js(samples: usize) -> std::result::Result<Vec<f64>, JsError> {
    js(cpd_curve(samples))
}

#[wasm_bindgen(js_name = berSweep)]
pub fn ber_sweep_js(
    scheme: &str,
    constellation: &str,
    snr_db: Vec<f64>,
    trials: u32,
    seed: u32,
) -> std::result::Result<Vec<f64>, JsError> {
    js(ber_sweep(scheme, constellation, &snr_db, trials as u64, seed as u64))
}

#[wasm_bindgen(js_name = heffSpectrum)]
pub fn heff_spectrum_js(identity_p: bool, snr_db: f64, seed: u32) -> std::result::Result<Vec<f64>, JsError> {
    js(heff_spectrum(identity_p, snr_db, seed as u64))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cpd_curve_vanishes_at_the_axes() {
        let c = cpd_curve(91).unwrap();
        assert_eq!(c.len(), 182);
        assert!(c[1] < 1e-12);
        assert!(c[181] < 1e-12);
        let peak = c.chunks(2).map(|p| p[1]).fold(0.0, f64::max);
        assert!(peak > 0.5);
    }

    #[test]
    fn small_sweep_shape() {
        let out = ber_sweep("alamouti", "qpsk", &[0.0, 10.0], 200, 1).unwrap();
        assert_eq!(out.len(), 6);
        assert!(out[1] > out[4]);
        assert!(ber_sweep("nope", "qpsk", &[0.0], 10, 1).is_err());
    }

    #[test]
    fn identity_replication_loses_rank() {
        let tol = 1e-9;
        let good = heff_spectrum(false, 10.0, 3).unwrap();
        let bad = heff_spectrum(true, 10.0, 3).unwrap();
        assert_eq!(good.len(), 36);
        assert!(good.iter().all(|s| *s > tol * good[0]));
        assert_eq!(bad.iter().filter(|s| **s > tol * bad[0]).count(), 18);
    }
}
