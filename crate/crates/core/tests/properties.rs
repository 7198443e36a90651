use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use proptest::prelude::*;
use relaybf_core::snr::vector_snr;
use relaybf_core::{
    assemble_relay_matrices, dinkelbach_solve, effective_gains, generate_channels, jing_power_allocation, perfect_snr,
    principal_eigvec, relay_power, snr_at_vertex, snr_of_w, vertex_set, worst_case_snr, ChannelRealization,
    ExperimentSpec, Method, NetworkConfig, SnrContext,
};

#[derive(Debug)]
struct Instance {
    config: NetworkConfig,
    ch: ChannelRealization,
    g: DVector<Complex64>,
    ctx: SnrContext,
}

fn beam(parts: &[(f64, f64)], p_s: f64) -> DVector<Complex64> {
    let g = DVector::from_iterator(parts.len(), parts.iter().map(|&(re, im)| Complex64::new(re, im)));
    let norm = g.norm();
    if norm < 1e-9 {
        let mut e = DVector::zeros(parts.len());
        e[0] = Complex64::new(p_s.sqrt(), 0.0);
        return e;
    }
    g.scale(p_s.sqrt() / norm)
}

prop_compose! {
    fn instance(max_relays: usize)(
        n_t in 1usize..=3,
        antennas in prop::collection::vec(1usize..=3, 1..=max_relays),
        relay_db in 0.0f64..40.0,
        rho in prop_oneof![Just(0.0), 0.05f64..0.6],
        seed in any::<u64>(),
        raw in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 3),
    ) -> Instance {
        let config = NetworkConfig::from_db(n_t, antennas, 10.0, relay_db, rho).unwrap();
        let ch = generate_channels(&config, seed);
        let g = beam(&raw[..n_t], config.p_s);
        let ctx = SnrContext::new(effective_gains(&ch, &g).unwrap().u_norms, &config);
        Instance { config, ch, g, ctx }
    }
}

fn scaled(caps: &[f64], fractions: &[f64]) -> Vec<f64> {
    caps.iter().zip(fractions.iter().cycle()).map(|(c, f)| c * f).collect()
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 48, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn worst_case_is_exhaustive_vertex_min(inst in instance(4), fr in prop::collection::vec(0.0f64..=1.0, 4)) {
        let c = scaled(&inst.ctx.caps(), &fr);
        let vertices = vertex_set(&inst.ch).unwrap();
        let (worst, idx) = worst_case_snr(&c, &vertices, &inst.ctx);
        let brute = vertices.vertices.iter().map(|v| snr_at_vertex(&c, v, &inst.ctx)).fold(f64::INFINITY, f64::min);
        prop_assert_eq!(worst, brute);
        prop_assert_eq!(worst, snr_at_vertex(&c, &vertices.vertices[idx], &inst.ctx));
        let nominal = snr_at_vertex(&c, &inst.ch.f_norms(), &inst.ctx);
        prop_assert!(worst <= nominal * (1.0 + 1e-12));
    }

    #[test]
    fn relay_power_respects_caps(inst in instance(4), fr in prop::collection::vec(0.0f64..=1.0, 4)) {
        let c = scaled(&inst.ctx.caps(), &fr);
        let (mats, _) = assemble_relay_matrices(&c, &inst.ch, &inst.g).unwrap();
        for (i, b) in mats.iter().enumerate() {
            let u = &inst.ch.h[i] * &inst.g;
            let p = relay_power(b, &u, inst.config.sigma2_r);
            prop_assert!(p <= inst.config.p_relay[i] * (1.0 + 1e-9) + 1e-12, "relay {i}: {p} > {}", inst.config.p_relay[i]);
        }
    }

    #[test]
    fn scalar_and_vector_snr_agree(inst in instance(3), fr in prop::collection::vec(0.0f64..=1.0, 3)) {
        let c = scaled(&inst.ctx.caps(), &fr);
        let (mats, inactive) = assemble_relay_matrices(&c, &inst.ch, &inst.g).unwrap();
        prop_assume!(!inactive.iter().any(|&x| x));
        let vector = vector_snr(&inst.ch, &inst.g, &mats, &inst.ch.f_tilde, inst.config.sigma2_r, inst.config.sigma2_d).unwrap();
        let scalar = snr_at_vertex(&c, &inst.ch.f_norms(), &inst.ctx);
        prop_assert!((vector - scalar).abs() <= 1e-9 * scalar.max(1e-12), "{vector} vs {scalar}");
    }

    #[test]
    fn closed_form_beats_feasible_allocations(inst in instance(4), fr in prop::collection::vec(0.0f64..=1.0, 4)) {
        let f = inst.ch.f_norms();
        let (s_r, s_d) = (inst.config.sigma2_r, inst.config.sigma2_d);
        let best = jing_power_allocation(&inst.ctx.u_norms, &f, &inst.config.p_relay, s_r, s_d);
        let opt = perfect_snr(&best.c, &inst.ctx.u_norms, &f, s_r, s_d);
        let c = scaled(&inst.ctx.caps(), &fr);
        prop_assert!(perfect_snr(&c, &inst.ctx.u_norms, &f, s_r, s_d) <= opt * (1.0 + 1e-9));
        let caps = inst.ctx.caps();
        prop_assert!(best.c.iter().zip(&caps).all(|(c, cap)| *c <= cap * (1.0 + 1e-9)));
    }

    #[test]
    fn dinkelbach_is_feasible_and_near_optimal(inst in instance(3), fr in prop::collection::vec(0.0f64..=1.0, 3)) {
        let vertices = vertex_set(&inst.ch).unwrap();
        let out = dinkelbach_solve(&vertices, &inst.ctx, 1e-6).unwrap();
        let caps = inst.ctx.caps();
        prop_assert!(out.c.iter().zip(&caps).all(|(c, cap)| *c >= 0.0 && *c <= cap * (1.0 + 1e-7)));
        let probe = scaled(&caps, &fr);
        let probe_snr = worst_case_snr(&probe, &vertices, &inst.ctx).0;
        prop_assert!(out.gamma >= probe_snr * (1.0 - 1e-6) - 1e-9, "{} < {probe_snr}", out.gamma);
        prop_assert!(out.gamma >= worst_case_snr(&caps, &vertices, &inst.ctx).0 * (1.0 - 1e-6) - 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn snr_of_w_is_monotone(
        inst in instance(3),
        lo in prop::collection::vec(0.0f64..5.0, 3),
        step in prop::collection::vec(0.0f64..2.0, 3),
    ) {
        let r = inst.ch.n_relays();
        let vertices = vertex_set(&inst.ch).unwrap();
        let a: Vec<f64> = lo[..r].to_vec();
        let b: Vec<f64> = a.iter().zip(&step).map(|(x, d)| x + d).collect();
        let sa = snr_of_w(&a, &vertices, &inst.ctx, 1e-9).unwrap();
        let sb = snr_of_w(&b, &vertices, &inst.ctx, 1e-9).unwrap();
        prop_assert!(sa <= sb * (1.0 + 1e-7) + 1e-12, "{sa} > {sb}");
    }

    #[test]
    fn principal_eigvec_solves_eigenproblem(
        n in 1usize..=5,
        entries in prop::collection::vec((-2.0f64..2.0, -2.0f64..2.0), 25),
    ) {
        let a = DMatrix::from_fn(n, n, |i, j| {
            let (re, im) = entries[i * 5 + j];
            Complex64::new(re, im)
        });
        let m = &a * a.adjoint();
        let (v, lambda) = principal_eigvec(&m).unwrap();
        prop_assert!((v.norm() - 1.0).abs() <= 1e-10);
        let residual = (&m * &v - v.scale(lambda)).norm();
        prop_assert!(residual <= 1e-9 * m.norm().max(1.0), "residual {residual}");
        let trace: f64 = (0..n).map(|i| m[(i, i)].re).sum();
        prop_assert!(lambda >= trace / n as f64 - 1e-9);
    }

    #[test]
    fn spec_round_trips_through_toml_and_json(
        trials in 1usize..500,
        seed in any::<u64>(),
        rho in prop::collection::vec(0.0f64..1.0, 1..4),
        methods in prop::sample::subsequence(Method::ALL.to_vec(), 1..=8),
    ) {
        let mut spec = ExperimentSpec::preset("fig6").unwrap();
        spec.n_trials = trials;
        spec.base_seed = seed;
        spec.rho = rho;
        spec.methods = methods;
        let toml_text = toml::to_string(&spec).unwrap();
        prop_assert_eq!(&ExperimentSpec::from_toml_str(&toml_text).unwrap(), &spec);
        let json_text = serde_json::to_string(&spec).unwrap();
        prop_assert_eq!(&ExperimentSpec::from_json_str(&json_text).unwrap(), &spec);
    }
}
