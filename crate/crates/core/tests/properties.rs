use std::time::Instant;

use approx::assert_relative_eq;
use contact_pinn::benchmarks::{relative_l2_vector, Case, CaseConfig, Mode, Preset};
use contact_pinn::contact::{fischer_burmeister, kkt_loss, traction_decompose, KktMethod};
use contact_pinn::elasticity::{pde_terms, traction, MaterialParams};
use contact_pinn::geometry::{
    sample_half_cylinder, sample_quarter_annulus, sample_unit_square, Counts, HalfCylinderOptions, PointSet,
};
use contact_pinn::network::{forward, input_jacobian};
use contact_pinn::optimize::{adam_minimize, lbfgs_minimize, AdamConfig, FnObjective, LbfgsConfig};
use ndarray::Array2;
use proptest::prelude::*;

fn desk(case: Case, seed: u64) -> CaseConfig {
    let mut cfg = CaseConfig::defaults(case, Mode::Forward, Preset::Desk);
    cfg.seed = seed;
    cfg
}

fn fields(cfg: &CaseConfig, x: f64, y: f64) -> Vec<f64> {
    forward(&cfg.initial_params().unwrap(), &cfg.transform(), &[x, y]).unwrap()
}

fn unit(v: [f64; 2]) -> f64 {
    v[0].hypot(v[1])
}

fn check_boundary(ps: &PointSet) {
    for b in &ps.boundary {
        assert!((unit(b.normal) - 1.0).abs() < 1e-12);
        assert!((b.tangent[0] + b.normal[1]).abs() < 1e-15);
        assert!((b.tangent[1] - b.normal[0]).abs() < 1e-15);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn lame_hard_constraints_hold_for_any_seed(seed in 0u64..1000, t in 0.0f64..=1.0) {
        let cfg = desk(Case::Lame, seed);
        let (ri, ro) = (cfg.geometry.inner_radius, cfg.geometry.outer_radius);
        let r = ri + t * (ro - ri);
        let on_y = fields(&cfg, 0.0, r);
        let on_x = fields(&cfg, r, 0.0);
        prop_assert_eq!(on_y[0], 0.0);
        prop_assert_eq!(on_y[4], 0.0);
        prop_assert_eq!(on_x[1], 0.0);
        prop_assert_eq!(on_x[4], 0.0);
    }

    #[test]
    fn block_hard_constraints_hold_for_any_seed(seed in 0u64..1000, t in 0.0f64..=1.0) {
        let cfg = desk(Case::Block, seed);
        let l = cfg.geometry.length;
        let s = t * l;
        let left = fields(&cfg, 0.0, s);
        let right = fields(&cfg, l, s);
        let top = fields(&cfg, s, l);
        prop_assert_eq!(left[0], 0.0);
        prop_assert_eq!(left[4], 0.0);
        prop_assert_eq!(right[2], 0.0);
        prop_assert_eq!(right[4], 0.0);
        prop_assert_eq!(top[3], -cfg.pressure);
        prop_assert_eq!(top[4], 0.0);
    }

    #[test]
    fn hertz_hard_constraints_hold_for_any_seed(seed in 0u64..1000, t in 0.0f64..=1.0) {
        let cfg = desk(Case::Hertz, seed);
        let r = cfg.geometry.radius;
        let top = fields(&cfg, t * r, 0.0);
        let axis = fields(&cfg, 0.0, -t * r);
        prop_assert_eq!(top[3], -cfg.pressure);
        prop_assert_eq!(top[4], 0.0);
        prop_assert_eq!(axis[0], 0.0);
        prop_assert_eq!(axis[4], 0.0);
    }

    #[test]
    fn surrogate_load_input_enters_the_top_traction(seed in 0u64..100, p in 0.2f64..1.0, x in 0.0f64..1.0) {
        let mut cfg = CaseConfig::defaults(Case::Hertz, Mode::Surrogate, Preset::Desk);
        cfg.seed = seed;
        let f = forward(&cfg.initial_params().unwrap(), &cfg.transform(), &[x, 0.0, p]).unwrap();
        prop_assert_eq!(f[3], -p);
    }

    #[test]
    fn input_jacobian_matches_central_differences(seed in 0u64..500, x in 0.05f64..0.95, y in 0.05f64..0.95) {
        let cfg = desk(Case::Block, seed);
        let params = cfg.initial_params().unwrap();
        let tr = cfg.transform();
        let jac = input_jacobian(&params, &tr, &[x, y]).unwrap();
        let h = 1e-5;
        for (j, (dx, dy)) in [(h, 0.0), (0.0, h)].into_iter().enumerate() {
            let fp = forward(&params, &tr, &[x + dx, y + dy]).unwrap();
            let fm = forward(&params, &tr, &[x - dx, y - dy]).unwrap();
            for c in 0..5 {
                let fd = (fp[c] - fm[c]) / (2.0 * h);
                prop_assert!((jac[[c, j]] - fd).abs() <= 1e-7 * (1.0 + fd.abs()), "c {} j {}: {} vs {}", c, j, jac[[c, j]], fd);
            }
        }
    }

    #[test]
    fn loss_is_non_negative_and_total_is_sum_of_parts(seed in 0u64..200, case in 0usize..3) {
        let case = [Case::Lame, Case::Block, Case::Hertz][case];
        let mut cfg = desk(case, seed);
        cfg.points.interior = 60;
        cfg.points.boundary = 40;
        cfg.points.refine = None;
        cfg.hidden = vec![6, 6];
        let points = cfg.sample_points().unwrap();
        let problem = cfg.build_problem(&points, None).unwrap();
        let theta = cfg.initial_params().unwrap().theta().to_vec();
        let l = problem.loss(&theta).unwrap();
        for v in l.pde_terms.iter().chain([&l.dbc, &l.nbc, &l.exp, &l.fs, &l.kkt]) {
            prop_assert!(*v >= 0.0);
        }
        let parts = l.pde_terms.iter().sum::<f64>() + l.dbc + l.nbc + l.exp + l.fs + l.kkt;
        prop_assert!((l.total - parts).abs() <= 1e-14 * l.total.max(1.0));
    }

    #[test]
    fn pde_term_scales_linearly_with_its_weight(seed in 0u64..1000, k in 0usize..5, c in 0.01f64..100.0) {
        let n = 7;
        let gen = |off: u64| {
            Array2::from_shape_fn((n, 5), |(i, j)| ((seed + off) as f64 + 1.3 * i as f64 + 2.9 * j as f64).sin())
        };
        let (v, dx, dy) = (gen(0), gen(11), gen(23));
        let mat = MaterialParams::new(3.0, 0.27).unwrap();
        let eval = |w: [f64; 5]| {
            let (mut a, mut b, mut d) = (Array2::zeros((n, 5)), Array2::zeros((n, 5)), Array2::zeros((n, 5)));
            pde_terms(v.view(), dx.view(), dy.view(), &mat, &w, a.view_mut(), b.view_mut(), d.view_mut()).unwrap()
        };
        let base = eval([1.0; 5]);
        let mut w = [1.0; 5];
        w[k] = c;
        let scaled = eval(w);
        for j in 0..5 {
            let expect = if j == k { c * base[j] } else { base[j] };
            prop_assert!((scaled[j] - expect).abs() <= 1e-12 * expect.abs().max(1e-300));
        }
    }

    #[test]
    fn traction_is_stress_times_normal(sxx in -5.0f64..5.0, syy in -5.0f64..5.0, sxy in -5.0f64..5.0, a in 0.0f64..std::f64::consts::TAU) {
        let n = [a.cos(), a.sin()];
        let t = traction([sxx, syy, sxy], n);
        assert_relative_eq!(t[0], sxx * n[0] + sxy * n[1], epsilon = 1e-14);
        assert_relative_eq!(t[1], sxy * n[0] + syy * n[1], epsilon = 1e-14);
        let tau = [-n[1], n[0]];
        let (pn, pt) = traction_decompose([sxx, syy, sxy], n, tau);
        assert_relative_eq!(pn * n[0] + pt * tau[0], t[0], epsilon = 1e-13);
        assert_relative_eq!(pn * n[1] + pt * tau[1], t[1], epsilon = 1e-13);
    }

    #[test]
    fn kkt_losses_are_non_negative(gs in prop::collection::vec(-1.0f64..1.0, 1..20), ps in prop::collection::vec(-1.0f64..1.0, 20)) {
        let ps = &ps[..gs.len()];
        for m in [KktMethod::sign(), KktMethod::sigmoid(), KktMethod::fischer_burmeister()] {
            prop_assert!(kkt_loss(&m, &gs, ps) >= 0.0);
        }
    }

    #[test]
    fn kkt_losses_vanish_on_complementary_states(vals in prop::collection::vec((0.0f64..1.0, any::<bool>()), 1..20)) {
        let gaps: Vec<f64> = vals.iter().map(|&(v, open)| if open { v } else { 0.0 }).collect();
        let pres: Vec<f64> = vals.iter().map(|&(v, open)| if open { 0.0 } else { -v }).collect();
        prop_assert_eq!(kkt_loss(&KktMethod::sign(), &gaps, &pres), 0.0);
        prop_assert_eq!(kkt_loss(&KktMethod::fischer_burmeister(), &gaps, &pres), 0.0);
        for (&g, &p) in gaps.iter().zip(&pres) {
            prop_assert_eq!(fischer_burmeister(g, -p), 0.0);
        }
    }

    #[test]
    fn samplers_give_unit_normals_and_rotated_tangents(seed in 0u64..10_000) {
        let counts = Counts::new(150, 60);
        check_boundary(&sample_quarter_annulus(1.0, 2.0, counts, seed).unwrap());
        check_boundary(&sample_unit_square(1.0, counts, seed).unwrap());
        check_boundary(&sample_half_cylinder(1.0, 25.0, counts, seed, &HalfCylinderOptions::default()).unwrap());
    }

    #[test]
    fn samplers_are_deterministic_and_stay_inside(seed in 0u64..10_000) {
        let counts = Counts::new(150, 60);
        let a = sample_quarter_annulus(1.0, 2.0, counts, seed).unwrap();
        prop_assert_eq!(&a, &sample_quarter_annulus(1.0, 2.0, counts, seed).unwrap());
        for p in &a.interior {
            let r = p[0].hypot(p[1]);
            prop_assert!(p[0] >= 0.0 && p[1] >= 0.0 && (1.0..=2.0).contains(&r));
        }
        let h = sample_half_cylinder(1.0, 25.0, counts, seed, &HalfCylinderOptions::default()).unwrap();
        prop_assert_eq!(&h, &sample_half_cylinder(1.0, 25.0, counts, seed, &HalfCylinderOptions::default()).unwrap());
        for p in &h.interior {
            prop_assert!(p[0] >= 0.0 && p[1] <= 0.0 && p[0].hypot(p[1]) <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn relative_l2_is_scale_invariant(vals in prop::collection::vec(-10.0f64..10.0, 10), noise in prop::collection::vec(-1.0f64..1.0, 10), c in 0.1f64..10.0) {
        prop_assume!(vals.iter().any(|v| v.abs() > 0.1));
        let r = Array2::from_shape_vec((5, 2), vals).unwrap();
        let p = &r + &Array2::from_shape_vec((5, 2), noise).unwrap();
        let e = relative_l2_vector(p.view(), r.view(), &[0, 1]).unwrap();
        let es = relative_l2_vector((&p * c).view(), (&r * c).view(), &[0, 1]).unwrap();
        prop_assert!(e >= 0.0);
        prop_assert!((e - es).abs() <= 1e-12 * e.max(1e-12));
        prop_assert_eq!(relative_l2_vector(r.view(), r.view(), &[0, 1]).unwrap(), 0.0);
        let shifted = &r + 1.0;
        prop_assert!(relative_l2_vector(shifted.view(), r.view(), &[0, 1]).unwrap() > 0.0);
    }

    #[test]
    fn adam_ignores_constant_loss_offsets(c in -1e3f64..1e3, x0 in prop::collection::vec(-3.0f64..3.0, 4)) {
        let cfg = AdamConfig { lr: 0.05, epochs: 50, ..Default::default() };
        let run = |offset: f64| {
            let mut theta = x0.clone();
            let mut obj = FnObjective(|t: &[f64], g: &mut [f64]| {
                let mut s = offset;
                for i in 0..t.len() {
                    s += (i as f64 + 1.0) * t[i] * t[i];
                    g[i] = 2.0 * (i as f64 + 1.0) * t[i];
                }
                s
            });
            adam_minimize(&cfg, &mut obj, &mut theta, 0, Instant::now(), &mut |_, _| Ok(())).unwrap();
            theta
        };
        prop_assert_eq!(run(0.0), run(c));
    }

    #[test]
    fn lbfgs_loss_never_increases(a in 1.0f64..50.0, x0 in prop::collection::vec(-2.0f64..2.0, 3)) {
        let cfg = LbfgsConfig { max_iters: 200, history: 5, ..Default::default() };
        let mut theta = x0;
        let mut obj = FnObjective(|t: &[f64], g: &mut [f64]| {
            let mut s = 0.0;
            for i in 0..t.len() - 1 {
                let (u, v) = (1.0 - t[i], t[i + 1] - t[i] * t[i]);
                s += u * u + a * v * v;
                g[i] += -2.0 * u - 4.0 * a * v * t[i];
                g[i + 1] += 2.0 * a * v;
            }
            s
        });
        let out = lbfgs_minimize(&cfg, &mut obj, &mut theta, 0, Instant::now(), &mut |_, _| Ok(())).unwrap();
        for w in out.records.windows(2) {
            prop_assert!(w[1].loss.total <= w[0].loss.total, "{} then {}", w[0].loss.total, w[1].loss.total);
        }
        prop_assert!(out.loss.total <= out.records[0].loss.total);
    }
}
