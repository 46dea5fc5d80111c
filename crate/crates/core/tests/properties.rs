use holotwist_core::catalog::{pole_circle_loop, sphere_band};
use holotwist_core::catgroup::{compose, morphism_eq, tensor, Morphism};
use holotwist_core::cech::{gauge_transform, random_gauge, GaugeData};
use holotwist_core::expm::expm;
use holotwist_core::families::{sphere_monopole, sphere_pu2};
use holotwist_core::forms::{integrate_2form, product};
use holotwist_core::geometry::{certify_interval, certify_rect, IntervalSubdivision, Vec3};
use holotwist_core::holonomy::{assign_loop, hol0, holonomy_functor, HolonomyOptions};
use holotwist_core::lie::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const KINDS: [ExtensionKind; 3] = [ExtensionKind::SplitTorus, ExtensionKind::ScalarU2, ExtensionKind::Gerbe];

fn h_elem(t: f64) -> GroupElement {
    GroupElement::new(Tag::H, scalar(c(t.cos(), t.sin())))
}

/// Point and partials of the spherical-coordinate patch.
fn sphere_patch(th: f64, ph: f64) -> (Vec3, Vec3, Vec3) {
    let (st, ct, sp, cp) = (th.sin(), th.cos(), ph.sin(), ph.cos());
    (Vec3::new(st * cp, st * sp, ct), Vec3::new(ct * cp, ct * sp, -st), Vec3::new(-st * sp, st * cp, 0.0))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn exp_of_anti_hermitian_is_unitary(seed in any::<u64>(), n in 1usize..4, scale in 0.0f64..5.0) {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let m = CMat::from_fn(n, n, |_, _| c(r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0)));
        let a = &m - m.adjoint();
        let a = if a.norm() > 0.0 { &a * c(scale / a.norm(), 0.0) } else { a };
        let u = expm(&a);
        prop_assert!((u.adjoint() * &u - eye(n)).norm() <= 1e-10);
    }

    #[test]
    fn fiber_normalize_reproduces_the_second_argument(seed in any::<u64>(), k in 0usize..3, t in -3.0f64..3.0) {
        let ext = CentralExtension::new(KINDS[k]);
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let e = ext.random_element(Tag::E, &mut r);
        let e2 = e.mul(&ext.iota(&h_elem(t)).unwrap()).unwrap();
        let (h, _) = ext.fiber_normalize(&e, &e2, 1e-9).unwrap();
        prop_assert!(e.mul(&ext.iota(&h).unwrap()).unwrap().distance(&e2).unwrap() <= 1e-9);
    }

    #[test]
    fn compose_ignores_the_choice_of_representative(seed in any::<u64>(), k in 0usize..3, t1 in -3.0f64..3.0, t2 in -3.0f64..3.0) {
        let ext = CentralExtension::new(KINDS[k]);
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let (a, b, cc) = (ext.random_element(Tag::E, &mut r), ext.random_element(Tag::E, &mut r), ext.random_element(Tag::E, &mut r));
        let m1 = Morphism::new(a, b.clone()).unwrap();
        let m2 = Morphism::new(b, cc).unwrap();
        let shift = |m: &Morphism, t: f64| {
            let h = ext.iota(&h_elem(t)).unwrap();
            Morphism::new(m.source.mul(&h).unwrap(), m.target.mul(&h).unwrap()).unwrap()
        };
        let plain = compose(&ext, &m1, &m2, 1e-7).unwrap();
        let moved = compose(&ext, &shift(&m1, t1), &shift(&m2, t2), 1e-7).unwrap();
        prop_assert!(morphism_eq(&ext, &plain, &moved, 1e-9).equal);
    }

    /// Objects multiply in `G`, and every `g` is reached from the unit object.
    #[test]
    fn tensor_on_objects_and_transitivity(seed in any::<u64>(), k in 0usize..3) {
        let ext = CentralExtension::new(KINDS[k]);
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let m = |r: &mut ChaCha8Rng| Morphism::new(ext.random_element(Tag::E, r), ext.random_element(Tag::E, r)).unwrap();
        let (m1, m2) = (m(&mut r), m(&mut r));
        let t = tensor(&m1, &m2).unwrap();
        let prod = m1.source_object(&ext).mul(&m2.source_object(&ext)).unwrap();
        prop_assert!(t.source_object(&ext).distance(&prod).unwrap() <= 1e-12);
        let g = ext.pi(&ext.random_element(Tag::E, &mut r)).unwrap();
        if let Ok(lift) = ext.local_section(&g) {
            let arrow = Morphism::new(GroupElement::identity(Tag::E, ext.e.dim()), lift).unwrap();
            prop_assert!(arrow.target_object(&ext).distance(&g).unwrap() <= 1e-10);
        }
    }

    #[test]
    fn two_form_integral_flips_with_the_patch(th0 in 0.2f64..2.5, ph0 in -3.0f64..3.0, w in 0.05f64..0.5) {
        let b = sphere_pu2().unwrap();
        let f = b.f_form(0).unwrap();
        let fwd = integrate_2form(f, sphere_patch, (th0, th0 + w), (ph0, ph0 + w), 6).unwrap();
        let swapped = integrate_2form(f, |ph, th| { let (p, dt, dp) = sphere_patch(th, ph); (p, dp, dt) }, (ph0, ph0 + w), (th0, th0 + w), 6).unwrap();
        prop_assert!((fwd + swapped).norm() <= 1e-10);
    }

    /// A patch factoring through a curve has rank one and carries no area.
    #[test]
    fn thin_patches_integrate_to_zero(th0 in 0.2f64..2.5, a in -1.0f64..1.0, bb in -1.0f64..1.0) {
        let b = sphere_pu2().unwrap();
        let f = b.f_form(0).unwrap();
        let patch = |s: f64, t: f64| {
            let u = s * t;
            let (p, dth, dph) = sphere_patch(th0 + a * u, bb * u);
            let g = dth * a + dph * bb;
            (p, g * t, g * s)
        };
        prop_assert!(integrate_2form(f, patch, (0.0, 1.0), (0.0, 1.0), 6).unwrap().norm() <= 1e-10);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    /// Dense resampling at 4× the certification density stays inside the
    /// charts, and splitting a cell keeps the subdivision valid.
    #[test]
    fn certified_subdivisions_survive_resampling_and_splitting(beta in 0.1f64..3.0, gamma in -3.0f64..3.0, pick in 0usize..64) {
        let b = sphere_monopole(1).unwrap();
        let o = HolonomyOptions::default();
        let l = pole_circle_loop(&b.model, beta, gamma).unwrap();
        let sub = assign_loop(&b, &l, &o).unwrap();
        prop_assert!(certify_interval(&b.cover, l.curve(), &sub, 4 * o.assign.density) > 0.0);
        let k = pick % sub.charts.len();
        let mut breaks = sub.breaks.clone();
        breaks.insert(k + 1, 0.5 * (sub.breaks[k] + sub.breaks[k + 1]));
        let mut charts = sub.charts.clone();
        charts.insert(k, sub.charts[k]);
        let split = IntervalSubdivision { breaks, charts };
        prop_assert!(certify_interval(&b.cover, l.curve(), &split, 4 * o.assign.density) > 0.0);

        let cy = sphere_band(&b.model, 0.0, beta, 0.0, gamma).unwrap();
        let v = holonomy_functor(&b, &cy, &o).unwrap();
        prop_assert!(certify_rect(&b.cover, &cy, &v.rect, 4 * o.assign.density) > 0.0);
    }

    /// `π` of the representative pair is `H₀` of the boundary loops.
    #[test]
    fn representatives_project_to_base_holonomy(b0 in 0.0f64..2.8, b1 in 0.0f64..2.8, g0 in -2.0f64..2.0, g1 in -2.0f64..2.0) {
        let b = sphere_pu2().unwrap();
        let o = HolonomyOptions::default();
        let cy = sphere_band(&b.model, b0, b1, g0, g1).unwrap();
        let v = holonomy_functor(&b, &cy, &o).unwrap();
        for (l, rep) in [(cy.start_loop(), &v.morphism.source), (cy.end_loop(), &v.morphism.target)] {
            let sub = assign_loop(&b, &l, &o).unwrap();
            let g = hol0(&b, &l, &sub, &o).unwrap().value.m;
            prop_assert!((b.ext.project(&rep.m) - g).norm() <= 1e-8);
        }
    }
}

fn compose_gauges(g1: &GaugeData, g2: &GaugeData) -> GaugeData {
    GaugeData {
        e: g1.e.iter().zip(&g2.e).map(|(a, b)| product(vec![a.clone(), b.clone()])).collect(),
        h: g1.h.iter().map(|(k, a)| (*k, product(vec![a.clone(), g2.h[k].clone()]))).collect(),
        b: g1.b.iter().zip(&g2.b).map(|(a, b)| a.add(b)).collect(),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    /// Gauging twice equals gauging once by the composite, and the cocycle
    /// moves by the coboundary of `h_ij`.
    #[test]
    fn gauge_transforms_compose(s1 in 0u64..1000, s2 in 0u64..1000, seed in any::<u64>()) {
        let b = sphere_pu2().unwrap();
        let (g1, g2) = (random_gauge(&b, s1, 0.3).unwrap(), random_gauge(&b, s2 + 1000, 0.3).unwrap());
        let twice = gauge_transform(&gauge_transform(&b, &g1).unwrap(), &g2).unwrap();
        let once = gauge_transform(&b, &compose_gauges(&g1, &g2)).unwrap();
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        for &(i, j, k) in &b.cover.triples {
            let y = b.cover.sample_region(&b.model, &[i, j, k], &mut r).unwrap();
            let v = b.model.random_tangent(&y, &mut r);
            let w = b.model.random_tangent(&y, &mut r);
            prop_assert!((twice.e_at(i, j, &y).unwrap() - once.e_at(i, j, &y).unwrap()).norm() <= 1e-9);
            prop_assert!((twice.h_at(i, j, k, &y).unwrap() - once.h_at(i, j, k, &y).unwrap()).norm() <= 1e-9);
            prop_assert!((twice.a_ij_at(i, j, &y, &v).unwrap() - once.a_ij_at(i, j, &y, &v).unwrap()).norm() <= 1e-7);
            let a = |x: &holotwist_core::cech::TwistedBundle| x.a_form(i).unwrap().eval(&y, &[v]).unwrap();
            prop_assert!((a(&twice) - a(&once)).norm() <= 1e-9);
            let f = |x: &holotwist_core::cech::TwistedBundle| x.f_form(i).unwrap().eval(&y, &[v, w]).unwrap();
            prop_assert!((f(&twice) - f(&once)).norm() <= 1e-7);

            let h = |p: usize, q: usize| {
                let m = if p < q { g1.h[&(p, q)].eval(&y).unwrap() } else { g1.h[&(q, p)].eval(&y).unwrap().adjoint() };
                m[(0, 0)]
            };
            let g1b = gauge_transform(&b, &g1).unwrap();
            let expect = b.h_at(i, j, k, &y).unwrap() * h(i, j) * h(j, k) * h(k, i);
            prop_assert!((g1b.h_at(i, j, k, &y).unwrap() - expect).norm() <= 1e-9);
        }
    }
}
