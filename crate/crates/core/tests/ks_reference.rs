use dynenvwalk_core::stats::ks_statistic;

/// `(n, shift, scale, D, p)` from `scipy.stats.kstest(xs, "norm", method="asymp")`
/// on the data produced by `dataset`.
const REFERENCE: &[(usize, f64, f64, f64, f64)] = &[
    (50, 0.0, 1.0, 0.14548946131826324, 0.2404317258680504),
    (80, 0.3, 1.0, 0.11480955177157154, 0.2422853579480229),
    (120, 0.0, 1.3, 0.150128693181201, 0.008949811637914269),
    (200, -0.2, 0.9, 0.08619654504931162, 0.10239423887793976),
    (300, 0.1, 1.0, 0.03625798458181417, 0.8251734689227508),
    (500, 0.0, 1.0, 0.04431934967510426, 0.27976061372695726),
    (750, 0.05, 1.05, 0.04249589703085066, 0.13318710378882984),
    (1000, 0.0, 0.95, 0.0243904772677192, 0.5914690021381824),
    (1500, 0.08, 1.0, 0.03984587460968492, 0.017078505194364775),
    (2000, 0.0, 1.0, 0.023894912295514992, 0.20356326011784295),
];

/// 64-bit LCG, top 53 bits as a uniform; reproducible in any language.
fn dataset(seed: u64, n: usize, shift: f64, scale: f64) -> Vec<f64> {
    let mut s = seed;
    (0..n)
        .map(|_| {
            let mut acc = 0.0;
            for _ in 0..12 {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                acc += (s >> 11) as f64 / (1u64 << 53) as f64;
            }
            (acc - 6.0) * scale + shift
        })
        .collect()
}

#[test]
fn ks_matches_reference_implementation() {
    for (k, &(n, shift, scale, d, p)) in REFERENCE.iter().enumerate() {
        let r = ks_statistic(&dataset(1000 + k as u64, n, shift, scale)).unwrap();
        assert!((r.statistic - d).abs() < 1e-9, "dataset {k}: D {} vs {d}", r.statistic);
        assert!((r.p_value - p).abs() < 1e-6, "dataset {k}: p {} vs {p}", r.p_value);
    }
}
