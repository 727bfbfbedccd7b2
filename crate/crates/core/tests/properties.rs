use std::f64::consts::TAU;

use proptest::prelude::*;

use hyperflow::curve::{gn_interpolation_check, measure};
use hyperflow::energy::{circle_energy, energy_direct, energy_via_jet};
use hyperflow::flow::{step, FlowConfig, FlowState, FlowTrace, InitialCurve, StepControl, TraceSample};
use hyperflow::gradient::euler_lagrange;
use hyperflow::io::{format_config, parse_config, read_trace, write_trace};
use hyperflow::loja::height_over;
use hyperflow::{suite, Backend, ClosedCurve};

fn rigid(c: &ClosedCurve, angle: f64, shift: [f64; 2]) -> ClosedCurve {
    let (s, co) = angle.sin_cos();
    c.map(|p| [co * p[0] - s * p[1] + shift[0], s * p[0] + co * p[1] + shift[1]])
        .unwrap()
}

fn backend() -> impl Strategy<Value = Backend> {
    prop_oneof![Just(Backend::Spectral), Just(Backend::Fd4)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn energy_is_invariant_under_rigid_motions_and_relabeling(
        seed in 0u64..1000,
        m in 1usize..=3,
        angle in 0.0..TAU,
        tx in -5.0..5.0f64,
        ty in -5.0..5.0f64,
        shift in 0usize..64,
        backend in backend(),
    ) {
        let mut c = suite::random_curve(64, seed);
        c.set_backend(backend);
        let f = energy_direct(&c, m).unwrap();
        let moved = rigid(&c, angle, [tx, ty]).shifted(shift);
        let g = energy_direct(&moved, m).unwrap();
        prop_assert!((f - g).abs() <= 1e-10 * f, "{f} vs {g}");
    }

    #[test]
    fn energy_scales_under_dilation(seed in 0u64..1000, m in 1usize..=3, lambda in 0.3..4.0f64) {
        // F(λc) = λ L + λ^{1-2m} (F - L)
        let c = suite::random_curve(64, seed);
        let l = measure(&c).unwrap().length;
        let f = energy_direct(&c, m).unwrap();
        let big = c.map(|p| [lambda * p[0], lambda * p[1]]).unwrap();
        let want = lambda * l + lambda.powi(1 - 2 * m as i32) * (f - l);
        let got = energy_direct(&big, m).unwrap();
        prop_assert!((got - want).abs() <= 1e-10 * want, "{got} vs {want}");
    }

    #[test]
    fn direct_and_jet_energies_agree(seed in 0u64..1000, m in 1usize..=3) {
        let c = suite::random_curve(256, seed);
        let a = energy_direct(&c, m).unwrap();
        let b = energy_via_jet(&c, m).unwrap();
        prop_assert!((a - b).abs() <= 1e-6 * a, "{a} vs {b}");
    }

    #[test]
    fn circle_oracles(r in 0.4..3.0f64, m in 1usize..=3) {
        let c = suite::circle(64, r);
        let f = energy_direct(&c, m).unwrap();
        let want = circle_energy(m, r);
        prop_assert!((f - want).abs() <= 1e-10 * want);
        // E_m(k) = k - (2m-1) k^{2m+1} with k = 1/r
        let k = 1.0 / r;
        let e_want = k - (2.0 * m as f64 - 1.0) * k.powi(2 * m as i32 + 1);
        // rounding in the top derivative, ε (N/2)^{2m+2} / r^{2m+1}
        let floor = f64::EPSILON * 32f64.powi(2 * m as i32 + 2) * k.powi(2 * m as i32 + 1);
        for e in euler_lagrange(&c, m).unwrap() {
            prop_assert!((e - e_want).abs() <= 1e-8 * (1.0 + e_want.abs()) + floor, "{e} vs {e_want}");
        }
    }

    #[test]
    fn euler_lagrange_is_equivariant(seed in 0u64..1000, m in 1usize..=2, angle in 0.0..TAU, shift in 0usize..64) {
        let c = suite::random_curve(64, seed);
        let e = euler_lagrange(&c, m).unwrap();
        let moved = rigid(&c, angle, [1.5, -0.5]).shifted(shift);
        let f = euler_lagrange(&moved, m).unwrap();
        let scale = e.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        for i in 0..64 {
            let j = (i + shift) % 64;
            prop_assert!((e[j] - f[i]).abs() <= 1e-9 * scale, "{} vs {}", e[j], f[i]);
        }
    }

    #[test]
    fn interpolation_ratio_never_exceeds_one(
        coeffs in prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64), 2..16),
        (l, mtop) in prop_oneof![Just((1usize, 1usize)), Just((1, 2)), Just((2, 2)), Just((1, 3)), Just((3, 3))],
    ) {
        let n = 64;
        let u: Vec<f64> = (0..n)
            .map(|i| {
                let t = TAU * i as f64 / n as f64;
                coeffs.iter().enumerate().map(|(q, (a, b))| {
                    let q = (q + 1) as f64;
                    a * (q * t).cos() + b * (q * t).sin()
                }).sum()
            })
            .collect();
        let r = gn_interpolation_check(&u, l, mtop).unwrap();
        prop_assert!(r <= 1.0 + 1e-8, "{r}");
    }

    #[test]
    fn concentric_heights_are_constant(r0 in 0.5..2.0f64, dr in -0.2..0.2f64) {
        let base = suite::circle(64, r0);
        let h = height_over(&base, &suite::circle(64, r0 + dr)).unwrap();
        for v in &h.values {
            prop_assert!((v - dr).abs() <= 1e-10);
        }
    }

    #[test]
    fn flow_step_never_raises_energy(seed in 0u64..1000, m in 1usize..=2, dt in 1e-7..1e-3f64) {
        let cfg = FlowConfig { m, n_vertices: 32, ..Default::default() };
        let c = suite::random_curve(32, seed);
        let s = FlowState::new(c, m, dt).unwrap();
        let next = step(&s, &StepControl::from(&cfg)).unwrap().state;
        prop_assert!(next.energy <= s.energy + cfg.energy_slack);
        prop_assert!(next.t > s.t);
        prop_assert!(next.dissipation > s.dissipation);
    }

    #[test]
    fn config_text_round_trips(
        m in 1usize..=4,
        half_n in 8usize..200,
        dt_max in 1e-6..1e-1f64,
        tol in 1e-12..1e-2f64,
        t_max in 0.1..1e4f64,
        seed in any::<u64>(),
        snap in prop::option::of(1usize..1000),
        backend in backend(),
        amp in 0.0..0.3f64,
    ) {
        let cfg = FlowConfig {
            m,
            n_vertices: 2 * half_n,
            dt_max,
            dt_init: Some(dt_max / 3.0),
            tol_grad: tol,
            t_max,
            seed,
            snapshot_every: snap,
            backend,
            initial: InitialCurve::PerturbedCircle { amplitude: amp },
            ..Default::default()
        };
        prop_assert_eq!(parse_config(&format_config(&cfg)).unwrap(), cfg);
    }

    #[test]
    fn trace_csv_round_trips(rows in prop::collection::vec(
        (any::<f64>().prop_filter("finite", |x| x.is_finite()), 1e-12..1e3f64, any::<u32>()),
        1..20,
    )) {
        let mut t = 0.0;
        let samples: Vec<TraceSample> = rows
            .iter()
            .map(|&(x, dt, step)| {
                t += dt;
                TraceSample {
                    step: step as usize,
                    t,
                    energy: x,
                    grad_norm: dt.sqrt(),
                    dt,
                    length: x.abs(),
                    bbox: [-x, x / 3.0, dt, 1.0 / dt],
                    bbox_diam: x * x,
                    max_k: vec![x, -x, dt * x],
                    dissipation: x / 7.0,
                }
            })
            .collect();
        let trace = FlowTrace { samples };
        let mut buf = Vec::new();
        write_trace(&trace, &mut buf).unwrap();
        prop_assert_eq!(read_trace(buf.as_slice()).unwrap(), trace);
    }

    #[test]
    fn curve_json_round_trips(seed in 0u64..1000, n in 8usize..64) {
        let c = suite::random_curve(2 * n, seed);
        let back = ClosedCurve::from_json(&c.to_json()).unwrap();
        prop_assert_eq!(back.vertices(), c.vertices());
    }
}
