use std::f64::consts::PI;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use xnet_core::decoder::sphere_decode;
use xnet_core::sim::{from_csv_str, to_csv_string, BerPoint, SweepMeta, SweepResult, VERSION};
use xnet_core::stbc::{code_by_name, make_alamouti, make_lowdelay_m3};
use xnet_core::xnetwork::{assemble_transmit, draw_channel, lij_precoders, receive, receiver_systems, Messages, Snr};
use xnet_core::{Constellation, StbcCode};

fn noiseless_roundtrip(code: &StbcCode, c: &Constellation, seed: u64, db: f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ch = draw_channel(&mut rng, code.m).unwrap();
    let pre = lij_precoders(&ch).unwrap();
    let mut draw = || (0..code.k).map(|_| rng.random_range(0..c.len())).collect::<Vec<_>>();
    let idx = [draw(), draw(), draw(), draw()];
    let sym = |v: &Vec<usize>| v.iter().map(|&i| c.map(i)).collect::<Vec<_>>();
    let msg = Messages { x11: sym(&idx[0]), x12: sym(&idx[1]), x21: sym(&idx[2]), x22: sym(&idx[3]) };
    let snr = Snr::from_db(db);
    let (x1, x2) = assemble_transmit(code, &msg, &pre, snr).unwrap();
    let (y1, y2) = receive(&ch, &x1, &x2, &mut rng, false);
    let [s1, s2] = receiver_systems(code, &ch, &pre, (&y1, &y2), snr).unwrap();
    let d1 = sphere_decode(&s1, c).unwrap();
    let d2 = sphere_decode(&s2, c).unwrap();
    assert_eq!(d1.first, idx[0]);
    assert_eq!(d1.second, idx[2]);
    assert_eq!(d2.first, idx[1]);
    assert_eq!(d2.second, idx[3]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn noiseless_blocks_are_recovered(seed in any::<u64>(), db in -5.0f64..30.0, which in 0usize..4) {
        let (code, c) = match which {
            0 => (make_alamouti(), Constellation::by_name("qam16").unwrap()),
            1 => (make_lowdelay_m3(PI / 4.0), Constellation::by_name("qpsk-rot").unwrap()),
            2 => (code_by_name("perfect3-replicated", 0.0).unwrap(), Constellation::by_name("hex4").unwrap()),
            _ => (code_by_name("srinath-rajan", PI / 4.0).unwrap().cc_ordered().unwrap(), Constellation::psk(4).unwrap()),
        };
        noiseless_roundtrip(&code, &c, seed, db);
    }

    #[test]
    fn csv_roundtrip(
        rows in prop::collection::vec((-10i32..40, 1u64..1_000_000, 0u64..1000, 0u64..1000), 1..8),
        seed in any::<u64>(),
        theta in -3.2f64..3.2,
    ) {
        let points: Vec<BerPoint> = rows
            .iter()
            .enumerate()
            .map(|(i, &(db, trials, be, ce))| BerPoint {
                snr_db: db as f64 + i as f64 * 0.5,
                trials,
                bits_sent: trials * 16,
                bit_errors: be.min(trials * 16),
                codeword_errors: ce.min(trials * 4),
            })
            .collect();
        let result = SweepResult {
            meta: SweepMeta {
                scheme: "lowdelay3".into(),
                m: 3,
                constellation: "qpsk-rot".into(),
                theta,
                phi: 2f64.atan() / 2.0,
                seed,
                min_codeword_errors: 200,
                max_trials_per_point: 1_000_000,
                noise: true,
                version: VERSION.into(),
            },
            points,
        };
        let text = to_csv_string(&result).unwrap();
        let back = from_csv_str(&text).unwrap();
        prop_assert_eq!(&back, &result);
        prop_assert_eq!(to_csv_string(&back).unwrap(), text);
    }
}
