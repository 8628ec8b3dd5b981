//! Reference models used by the test suites and the `--fixture` CLI option.

use crate::model::{LocalLaw, ModelSpec, StochasticMatrix};

fn law(p: &[f64]) -> LocalLaw {
    LocalLaw::new(p.to_vec()).expect("fixture law")
}

fn kernel(rows: &[&[f64]]) -> StochasticMatrix {
    StochasticMatrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>())
        .expect("fixture kernel")
}

/// d = 1, kappa = 0.9, eps = 0.7; two asymmetric states.
pub fn f1() -> ModelSpec {
    ModelSpec::new(
        1,
        vec![law(&[0.45, 0.2, 0.35]), law(&[0.35, 0.4, 0.25])],
        kernel(&[&[0.6, 0.4], &[0.4, 0.6]]),
        Some(vec![0.5, 0.5]),
        0.9,
        0.7,
        law(&[0.5, 0.25, 0.25]),
    )
    .expect("F1")
}

/// F1 with mirror-image states, so the model is reflection invariant.
pub fn f2() -> ModelSpec {
    ModelSpec::new(
        1,
        vec![law(&[0.4, 0.35, 0.25]), law(&[0.4, 0.25, 0.35])],
        kernel(&[&[0.6, 0.4], &[0.4, 0.6]]),
        Some(vec![0.5, 0.5]),
        0.9,
        0.7,
        law(&[0.5, 0.25, 0.25]),
    )
    .expect("F2")
}

/// F1 with `kappa = 1`: i.i.d.-in-time environment.
pub fn f1_kappa_one() -> ModelSpec {
    f1().with_kappa(1.0).expect("F1 kappa=1")
}

/// Two-dimensional analogue of F1.
pub fn f1_2d() -> ModelSpec {
    ModelSpec::new(
        2,
        vec![
            law(&[0.40, 0.20, 0.10, 0.15, 0.15]),
            law(&[0.40, 0.10, 0.20, 0.10, 0.20]),
        ],
        kernel(&[&[0.6, 0.4], &[0.4, 0.6]]),
        Some(vec![0.5, 0.5]),
        0.9,
        0.7,
        law(&[0.5, 0.125, 0.125, 0.125, 0.125]),
    )
    .expect("F1-2d")
}

/// `q` with stay mass 1/2 and the rest spread evenly over the `2d` unit moves.
pub fn lazy_symmetric_q(d: usize) -> LocalLaw {
    let mut p = vec![0.5 / d as f64 / 2.0; 2 * d + 1];
    p[0] = 0.5;
    LocalLaw::new(p).expect("lazy symmetric q")
}

/// States `eps * q + (1 - eps) * delta_{+e_1}` and its mirror image, with a
/// frozen residual kernel: between refreshes a site keeps its state.
pub fn symmetric_perturbed(d: usize, kappa: f64, epsilon: f64) -> ModelSpec {
    let q = lazy_symmetric_q(d);
    let state = |mv: usize| {
        let mut p: Vec<f64> = q.probs().iter().map(|x| epsilon * x).collect();
        p[mv] += 1.0 - epsilon;
        law(&p)
    };
    ModelSpec::new(
        d,
        vec![state(1), state(2)],
        StochasticMatrix::identity(2),
        Some(vec![0.5, 0.5]),
        kappa,
        epsilon,
        q,
    )
    .expect("symmetric perturbed fixture")
}

/// d = 8, kappa = 0.999, eps = 0.99: inside the quenched regime.
pub fn f3() -> ModelSpec {
    symmetric_perturbed(8, 0.999, 0.99)
}

/// d = 3, kappa = 1, eps = 0.1 with strongly drifting mirror states:
/// the i.i.d.-in-time control for quenched variance decay.
pub fn iid_time_3d() -> ModelSpec {
    let twelfth = 1.0 / 12.0;
    ModelSpec::new(
        3,
        vec![
            law(&[0.1, 0.8, 0.01, 0.0225, 0.0225, 0.0225, 0.0225]),
            law(&[0.1, 0.01, 0.8, 0.0225, 0.0225, 0.0225, 0.0225]),
        ],
        kernel(&[&[0.5, 0.5], &[0.5, 0.5]]),
        Some(vec![0.5, 0.5]),
        1.0,
        0.1,
        law(&[0.5, twelfth, twelfth, twelfth, twelfth, twelfth, twelfth]),
    )
    .expect("iid-time 3d")
}

/// Three-state slowly mixing chain in d = 1, for fast-forward checks where
/// the residual kernel power is far from its limit.
pub fn slow_three_state() -> ModelSpec {
    ModelSpec::new(
        1,
        vec![
            law(&[0.45, 0.2, 0.35]),
            law(&[0.35, 0.4, 0.25]),
            law(&[0.40, 0.3, 0.30]),
        ],
        kernel(&[&[0.9, 0.1, 0.0], &[0.0, 0.8, 0.2], &[0.3, 0.0, 0.7]]),
        None,
        0.6,
        0.7,
        law(&[0.5, 0.25, 0.25]),
    )
    .expect("slow three-state")
}

pub fn by_name(name: &str) -> Option<ModelSpec> {
    Some(match name {
        "f1" => f1(),
        "f2" => f2(),
        "f3" => f3(),
        "f1-kappa1" => f1_kappa_one(),
        "f1-2d" => f1_2d(),
        "iid-time-3d" => iid_time_3d(),
        "slow-three-state" => slow_three_state(),
        _ => return None,
    })
}

pub const NAMES: &[&str] = &[
    "f1",
    "f2",
    "f3",
    "f1-kappa1",
    "f1-2d",
    "iid-time-3d",
    "slow-three-state",
];

pub fn all() -> Vec<ModelSpec> {
    NAMES.iter().map(|n| by_name(n).unwrap()).collect()
}
